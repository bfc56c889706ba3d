//! Parameter containers, initialization, and the canonical traversal order.
//!
//! Every tensor is visited in one fixed order (embedding, positional,
//! encoder layers, encoder norm, decoder layers, decoder norm; within a
//! layer: norms and projections in forward order). Flattening, the
//! optimizer, finite-difference probing, and checkpoints all build on that
//! single traversal, so they can never disagree about which number is which.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError, Scalar};

/// Standard deviation for all weight matrices and the embedding tables.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    /// Per-dimension gain of an RMS norm; there is no bias term.
    pub gain: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `[out, in]`; applied as `y = x · Wᵀ + b`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention<F> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<F> {
    pub w1: Linear<F>,
    pub w2: Linear<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub norm1: LayerNorm<F>,
    pub attn: Attention<F>,
    pub norm2: LayerNorm<F>,
    pub ffn: FeedForward<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<F> {
    pub norm1: LayerNorm<F>,
    pub self_attn: Attention<F>,
    pub norm2: LayerNorm<F>,
    pub cross_attn: Attention<F>,
    pub norm3: LayerNorm<F>,
    pub ffn: FeedForward<F>,
}

/// All learnable state. The embedding table is shared three ways: source
/// embedding, target embedding, and output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F> {
    pub config: ModelConfig,
    /// `[vocab, d_model]`.
    pub embedding: Array2<F>,
    /// `[max_len, d_model]`, learned, shared by encoder and decoder inputs.
    pub positional: Array2<F>,
    pub encoder: Vec<EncoderLayer<F>>,
    pub encoder_norm: LayerNorm<F>,
    pub decoder: Vec<DecoderLayer<F>>,
    pub decoder_norm: LayerNorm<F>,
}

/// Initialize parameters for `config`, deterministically from `seed`.
/// Weights and embeddings are N(0, 0.02²), biases zero, norm gains one.
pub fn init_params<F: Scalar>(
    config: &ModelConfig,
    seed: u64,
) -> Result<Parameters<F>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;

    fn matrix<F: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        Array2::from_shape_simple_fn((rows, cols), || F::from_f64(normal.sample(&mut *rng)))
    }
    fn linear<F: Scalar>(out: usize, input: usize, rng: &mut ChaCha8Rng) -> Linear<F> {
        Linear {
            weight: matrix(out, input, rng),
            bias: Array1::zeros(out),
        }
    }
    fn attention<F: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> Attention<F> {
        Attention {
            wq: linear(d, d, rng),
            wk: linear(d, d, rng),
            wv: linear(d, d, rng),
            wo: linear(d, d, rng),
        }
    }
    let norm = || LayerNorm {
        gain: Array1::ones(d),
    };

    let embedding = matrix(config.vocab_size, d, &mut rng);
    let positional = matrix(config.max_len, d, &mut rng);
    let encoder = (0..config.n_layers)
        .map(|_| EncoderLayer {
            norm1: norm(),
            attn: attention(d, &mut rng),
            norm2: norm(),
            ffn: FeedForward {
                w1: linear(config.d_ff, d, &mut rng),
                w2: linear(d, config.d_ff, &mut rng),
            },
        })
        .collect();
    let decoder = (0..config.n_layers)
        .map(|_| DecoderLayer {
            norm1: norm(),
            self_attn: attention(d, &mut rng),
            norm2: norm(),
            cross_attn: attention(d, &mut rng),
            norm3: norm(),
            ffn: FeedForward {
                w1: linear(config.d_ff, d, &mut rng),
                w2: linear(d, config.d_ff, &mut rng),
            },
        })
        .collect();
    Ok(Parameters {
        config: config.clone(),
        embedding,
        positional,
        encoder,
        encoder_norm: norm(),
        decoder,
        decoder_norm: norm(),
    })
}

impl<F: Scalar> Parameters<F> {
    /// All-zero parameters with the same shapes; the gradient container.
    pub fn zeros(config: &ModelConfig) -> Parameters<F> {
        let d = config.d_model;
        let linear = |out: usize, input: usize| Linear {
            weight: Array2::zeros((out, input)),
            bias: Array1::zeros(out),
        };
        let attention = || Attention {
            wq: linear(d, d),
            wk: linear(d, d),
            wv: linear(d, d),
            wo: linear(d, d),
        };
        let norm = || LayerNorm {
            gain: Array1::zeros(d),
        };
        Parameters {
            config: config.clone(),
            embedding: Array2::zeros((config.vocab_size, d)),
            positional: Array2::zeros((config.max_len, d)),
            encoder: (0..config.n_layers)
                .map(|_| EncoderLayer {
                    norm1: norm(),
                    attn: attention(),
                    norm2: norm(),
                    ffn: FeedForward {
                        w1: linear(config.d_ff, d),
                        w2: linear(d, config.d_ff),
                    },
                })
                .collect(),
            encoder_norm: norm(),
            decoder: (0..config.n_layers)
                .map(|_| DecoderLayer {
                    norm1: norm(),
                    self_attn: attention(),
                    norm2: norm(),
                    cross_attn: attention(),
                    norm3: norm(),
                    ffn: FeedForward {
                        w1: linear(config.d_ff, d),
                        w2: linear(d, config.d_ff),
                    },
                })
                .collect(),
            decoder_norm: norm(),
        }
    }

    /// Visit every tensor as a named flat slice, in canonical order.
    pub fn visit_slices(&self, f: &mut impl FnMut(&str, &[F])) {
        let visit_linear = |name: String, lin: &Linear<F>, f: &mut dyn FnMut(&str, &[F])| {
            f(
                &format!("{name}.weight"),
                lin.weight.as_slice().expect("standard layout"),
            );
            f(
                &format!("{name}.bias"),
                lin.bias.as_slice().expect("standard layout"),
            );
        };
        let visit_attn = |name: String, attn: &Attention<F>, f: &mut dyn FnMut(&str, &[F])| {
            visit_linear(format!("{name}.wq"), &attn.wq, f);
            visit_linear(format!("{name}.wk"), &attn.wk, f);
            visit_linear(format!("{name}.wv"), &attn.wv, f);
            visit_linear(format!("{name}.wo"), &attn.wo, f);
        };
        f("embedding", self.embedding.as_slice().expect("standard layout"));
        f("positional", self.positional.as_slice().expect("standard layout"));
        for (i, layer) in self.encoder.iter().enumerate() {
            f(
                &format!("encoder.{i}.norm1.gain"),
                layer.norm1.gain.as_slice().expect("standard layout"),
            );
            visit_attn(format!("encoder.{i}.attn"), &layer.attn, f);
            f(
                &format!("encoder.{i}.norm2.gain"),
                layer.norm2.gain.as_slice().expect("standard layout"),
            );
            visit_linear(format!("encoder.{i}.ffn.w1"), &layer.ffn.w1, f);
            visit_linear(format!("encoder.{i}.ffn.w2"), &layer.ffn.w2, f);
        }
        f(
            "encoder_norm.gain",
            self.encoder_norm.gain.as_slice().expect("standard layout"),
        );
        for (i, layer) in self.decoder.iter().enumerate() {
            f(
                &format!("decoder.{i}.norm1.gain"),
                layer.norm1.gain.as_slice().expect("standard layout"),
            );
            visit_attn(format!("decoder.{i}.self_attn"), &layer.self_attn, f);
            f(
                &format!("decoder.{i}.norm2.gain"),
                layer.norm2.gain.as_slice().expect("standard layout"),
            );
            visit_attn(format!("decoder.{i}.cross_attn"), &layer.cross_attn, f);
            f(
                &format!("decoder.{i}.norm3.gain"),
                layer.norm3.gain.as_slice().expect("standard layout"),
            );
            visit_linear(format!("decoder.{i}.ffn.w1"), &layer.ffn.w1, f);
            visit_linear(format!("decoder.{i}.ffn.w2"), &layer.ffn.w2, f);
        }
        f(
            "decoder_norm.gain",
            self.decoder_norm.gain.as_slice().expect("standard layout"),
        );
    }

    /// Mutable variant of [`visit_slices`](Self::visit_slices), same order.
    pub fn visit_slices_mut(&mut self, f: &mut impl FnMut(&str, &mut [F])) {
        let visit_linear = |name: String, lin: &mut Linear<F>, f: &mut dyn FnMut(&str, &mut [F])| {
            f(
                &format!("{name}.weight"),
                lin.weight.as_slice_mut().expect("standard layout"),
            );
            f(
                &format!("{name}.bias"),
                lin.bias.as_slice_mut().expect("standard layout"),
            );
        };
        let visit_attn =
            |name: String, attn: &mut Attention<F>, f: &mut dyn FnMut(&str, &mut [F])| {
                visit_linear(format!("{name}.wq"), &mut attn.wq, f);
                visit_linear(format!("{name}.wk"), &mut attn.wk, f);
                visit_linear(format!("{name}.wv"), &mut attn.wv, f);
                visit_linear(format!("{name}.wo"), &mut attn.wo, f);
            };
        f(
            "embedding",
            self.embedding.as_slice_mut().expect("standard layout"),
        );
        f(
            "positional",
            self.positional.as_slice_mut().expect("standard layout"),
        );
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            f(
                &format!("encoder.{i}.norm1.gain"),
                layer.norm1.gain.as_slice_mut().expect("standard layout"),
            );
            visit_attn(format!("encoder.{i}.attn"), &mut layer.attn, f);
            f(
                &format!("encoder.{i}.norm2.gain"),
                layer.norm2.gain.as_slice_mut().expect("standard layout"),
            );
            visit_linear(format!("encoder.{i}.ffn.w1"), &mut layer.ffn.w1, f);
            visit_linear(format!("encoder.{i}.ffn.w2"), &mut layer.ffn.w2, f);
        }
        f(
            "encoder_norm.gain",
            self.encoder_norm
                .gain
                .as_slice_mut()
                .expect("standard layout"),
        );
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            f(
                &format!("decoder.{i}.norm1.gain"),
                layer.norm1.gain.as_slice_mut().expect("standard layout"),
            );
            visit_attn(format!("decoder.{i}.self_attn"), &mut layer.self_attn, f);
            f(
                &format!("decoder.{i}.norm2.gain"),
                layer.norm2.gain.as_slice_mut().expect("standard layout"),
            );
            visit_attn(format!("decoder.{i}.cross_attn"), &mut layer.cross_attn, f);
            f(
                &format!("decoder.{i}.norm3.gain"),
                layer.norm3.gain.as_slice_mut().expect("standard layout"),
            );
            visit_linear(format!("decoder.{i}.ffn.w1"), &mut layer.ffn.w1, f);
            visit_linear(format!("decoder.{i}.ffn.w2"), &mut layer.ffn.w2, f);
        }
        f(
            "decoder_norm.gain",
            self.decoder_norm
                .gain
                .as_slice_mut()
                .expect("standard layout"),
        );
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        self.visit_slices(&mut |_, s| count += s.len());
        count
    }

    pub fn to_flat(&self) -> Vec<F> {
        let mut flat = Vec::new();
        self.visit_slices(&mut |_, s| flat.extend_from_slice(s));
        flat
    }

    /// Overwrite every tensor from `flat`, canonical order. Panics on length
    /// mismatch; callers size it via [`param_count`](Self::param_count).
    pub fn copy_from_flat(&mut self, flat: &[F]) {
        let mut offset = 0;
        self.visit_slices_mut(&mut |_, s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat vector length mismatch");
    }

    /// Read one scalar by its flat index.
    pub fn get_flat(&self, index: usize) -> F {
        let mut offset = 0;
        let mut value = None;
        self.visit_slices(&mut |_, s| {
            if value.is_none() && index < offset + s.len() {
                value = Some(s[index - offset]);
            }
            offset += s.len();
        });
        value.expect("index within parameter count")
    }

    /// Add `delta` to one scalar by its flat index; finite-difference probes.
    pub fn nudge_flat(&mut self, index: usize, delta: F) {
        let mut offset = 0;
        let mut hit = false;
        self.visit_slices_mut(&mut |_, s| {
            if !hit && index < offset + s.len() {
                s[index - offset] += delta;
                hit = true;
            }
            offset += s.len();
        });
        assert!(hit, "index within parameter count");
    }

    /// Closed-form parameter count for a config; the traversal must agree.
    pub fn expected_count(config: &ModelConfig) -> usize {
        let d = config.d_model;
        let attn = 4 * (d * d + d);
        let ffn = d * config.d_ff + config.d_ff + config.d_ff * d + d;
        let enc_layer = 2 * d + attn + ffn;
        let dec_layer = 3 * d + 2 * attn + ffn;
        config.vocab_size * d
            + config.max_len * d
            + config.n_layers * (enc_layer + dec_layer)
            + 2 * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 13,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 12,
            max_len: 10,
            dropout: 0.0,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a: Parameters<f64> = init_params(&tiny(), 7).unwrap();
        let b: Parameters<f64> = init_params(&tiny(), 7).unwrap();
        let c: Parameters<f64> = init_params(&tiny(), 8).unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn init_rejects_indivisible_heads() {
        let cfg = ModelConfig {
            n_heads: 3,
            ..tiny()
        };
        assert!(matches!(
            init_params::<f64>(&cfg, 0),
            Err(ModelError::HeadSplit {
                d_model: 8,
                n_heads: 3
            })
        ));
    }

    #[test]
    fn traversal_count_matches_closed_form() {
        let cfg = tiny();
        let params: Parameters<f64> = init_params(&cfg, 0).unwrap();
        assert_eq!(params.param_count(), Parameters::<f64>::expected_count(&cfg));
        assert_eq!(params.to_flat().len(), params.param_count());

        let default_cfg = ModelConfig::with_vocab(150);
        let default_params: Parameters<f32> = init_params(&default_cfg, 0).unwrap();
        assert_eq!(
            default_params.param_count(),
            Parameters::<f32>::expected_count(&default_cfg)
        );
    }

    #[test]
    fn flat_round_trip_and_probes() {
        let cfg = tiny();
        let params: Parameters<f64> = init_params(&cfg, 3).unwrap();
        let flat = params.to_flat();
        let mut rebuilt = Parameters::<f64>::zeros(&cfg);
        rebuilt.copy_from_flat(&flat);
        assert_eq!(rebuilt, params);

        let mut probed = params.clone();
        let idx = flat.len() / 2;
        probed.nudge_flat(idx, 0.5);
        assert_eq!(probed.get_flat(idx), params.get_flat(idx) + 0.5);
        assert_eq!(probed.get_flat(idx + 1), params.get_flat(idx + 1));
    }

    #[test]
    fn biases_zero_and_gains_one_at_init() {
        let params: Parameters<f64> = init_params(&tiny(), 5).unwrap();
        assert!(params.encoder[0].attn.wq.bias.iter().all(|&b| b == 0.0));
        assert!(params.decoder[1].ffn.w1.bias.iter().all(|&b| b == 0.0));
        assert!(params.encoder_norm.gain.iter().all(|&g| g == 1.0));
        assert!(params.decoder[0].norm2.gain.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn visit_names_are_unique_and_stable() {
        let params: Parameters<f64> = init_params(&tiny(), 0).unwrap();
        let mut names = Vec::new();
        params.visit_slices(&mut |name, _| names.push(name.to_string()));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names[0], "embedding");
        assert!(names.contains(&"decoder.1.cross_attn.wo.weight".to_string()));
    }
}
