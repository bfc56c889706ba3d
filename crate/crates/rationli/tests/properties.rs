//! Property tests over the text, schedule, and corpus-generation primitives.

use proptest::prelude::*;

use rationli::bench::{cue_label, make_toy_corpus, ToyCorpusSpec};
use rationli::textkit::{bleu_corpus, Vocabulary};
use rationli::trainer::{eval_steps, SplitRatio};

proptest! {
    #[test]
    fn encode_decode_round_trips_in_vocab_text(
        words in proptest::collection::vec("[a-z]{1,8}", 1..20)
    ) {
        let text = words.join(" ");
        let vocab = Vocabulary::build([text.as_str()], 1);
        let decoded = vocab.decode(&vocab.encode(&text)).unwrap();
        prop_assert_eq!(decoded, text);
    }

    #[test]
    fn unknown_words_surface_as_unk(
        known in proptest::collection::vec("[a-z]{1,8}", 1..8)
    ) {
        let text = known.join(" ");
        let vocab = Vocabulary::build([text.as_str()], 1);
        // Digits never appear in the build text, so this token is unseen.
        let probe = format!("{text} q7q7");
        let decoded = vocab.decode(&vocab.encode(&probe)).unwrap();
        prop_assert!(decoded.contains("<unk>"));
    }

    #[test]
    fn bleu_stays_in_the_unit_interval(
        pairs in proptest::collection::vec(
            (
                proptest::collection::vec(0u32..6, 0..12),
                proptest::collection::vec(0u32..6, 1..12),
            ),
            1..8,
        )
    ) {
        let (cands, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let report = bleu_corpus(&cands, &refs);
        prop_assert!((0.0..=1.0).contains(&report.bleu));
        prop_assert!((0.0..=1.0).contains(&report.brevity_penalty));
        for p in report.precisions {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn bleu_of_a_corpus_with_itself_is_one(
        // Four tokens minimum so the 4-gram precision has a denominator.
        sents in proptest::collection::vec(
            proptest::collection::vec(0u32..6, 4..12),
            1..6,
        )
    ) {
        prop_assert_eq!(bleu_corpus(&sents, &sents).bleu, 1.0);
    }

    #[test]
    fn dyadic_split_ratios_validate_and_round_trip(k in 0u32..=64) {
        let label = f64::from(k) / 64.0;
        let ratio = SplitRatio::new(label, 1.0 - label).unwrap();
        prop_assert_eq!(ratio.label() + ratio.rationale(), 1.0);
        let json = serde_json::to_string(&ratio).unwrap();
        let back: SplitRatio = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, ratio);
    }

    #[test]
    fn bad_split_ratios_are_rejected(label in 0.0f64..1.0, eps in 0.01f64..0.5) {
        prop_assert!(SplitRatio::new(label, 1.0 - label + eps).is_err());
        prop_assert!(SplitRatio::new(-label - eps, 1.0 + label + eps).is_err());
    }

    #[test]
    fn eval_schedule_is_monotone_and_ends_at_the_last_step(
        spe in 1usize..60,
        epochs in 1usize..6,
        epe in 1usize..6,
    ) {
        let steps = eval_steps(spe, epochs, epe);
        prop_assert_eq!(steps.len(), epochs * epe);
        prop_assert!(steps.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*steps.last().unwrap(), (spe * epochs) as u64);
        prop_assert!(steps.iter().all(|&s| s >= 1));
    }

    #[test]
    fn toy_corpus_is_balanced_and_deterministic(
        train in 3usize..30,
        eval in 1usize..10,
        seed in 0u64..1000,
    ) {
        let spec = ToyCorpusSpec {
            train_size: train,
            eval_size: eval,
            test_size: eval,
            seed,
            ..ToyCorpusSpec::default()
        };
        let corpus = make_toy_corpus(&spec).unwrap();
        prop_assert_eq!(&corpus, &make_toy_corpus(&spec).unwrap());
        for (_, examples) in corpus.splits() {
            let mut counts = [0usize; 3];
            for ex in examples {
                counts[ex.base.label.code() as usize] += 1;
            }
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            prop_assert!(spread <= 1, "label counts {counts:?} differ by more than 1");
        }
    }

    #[test]
    fn full_cue_strength_makes_labels_recoverable_by_rule(
        size in 3usize..20,
        seed in 0u64..1000,
    ) {
        let spec = ToyCorpusSpec {
            train_size: size,
            eval_size: size,
            test_size: size,
            seed,
            cue_strength: 1.0,
            ..ToyCorpusSpec::default()
        };
        let corpus = make_toy_corpus(&spec).unwrap();
        for (_, examples) in corpus.splits() {
            for ex in examples {
                prop_assert_eq!(
                    cue_label(&spec, &ex.base.premise, &ex.base.hypothesis),
                    Some(ex.base.label)
                );
            }
        }
    }
}
