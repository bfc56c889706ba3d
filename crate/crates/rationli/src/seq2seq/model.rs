//! Forward and backward passes of the encoder-decoder.
//!
//! Shape conventions: batch `B`, source length `S`, target length `T`, width
//! `d`. Activations collapse batch and time into the row axis (`[B*T, d]`);
//! attention reshapes per head on the fly. The decoder input is the target
//! sequence shifted right behind `<bos>`, so logits at position `j` score
//! target position `j` and loss spans can index targets directly.
//!
//! Masking invariants: source padding is excluded as keys in encoder
//! self-attention and in cross-attention, so padded source columns cannot
//! influence any real position. Decoder self-attention is causal; target
//! padding must be trailing, which batching guarantees, so causality alone
//! keeps padded target positions out of every real position's receptive
//! field.

use ndarray::{s, Array1, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use crate::textkit::vocab::{BOS, PAD};

use super::ops::{
    dropout_mask, gather_rows, linear_bwd, linear_fwd, relu, relu_bwd, rmsnorm_bwd, rmsnorm_fwd,
    scatter_add_rows, softmax_rows, softmax_rows_bwd,
};
use super::params::{Attention, Parameters};
use super::{ModelError, Scalar};

/// Whether a pass applies dropout; training draws masks from the given RNG.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

pub(crate) enum AttnMask<'a> {
    /// Query `i` may attend keys `j <= i`.
    Causal,
    /// Key `j` of batch row `b` is attendable iff `mask[[b, j]]`.
    Keys(&'a Array2<bool>),
}

pub(crate) struct AttnCache<F> {
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// One `[Tq, Tk]` probability matrix per `(batch, head)`, batch-major.
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
}

pub(crate) struct EncLayerCache<F> {
    x_in: Array2<F>,
    inv1: Array1<F>,
    n1: Array2<F>,
    attn: AttnCache<F>,
    drop1: Option<Array2<F>>,
    x_mid: Array2<F>,
    inv2: Array1<F>,
    n2: Array2<F>,
    h: Array2<F>,
    drop2: Option<Array2<F>>,
}

pub(crate) struct DecLayerCache<F> {
    y_in: Array2<F>,
    inv1: Array1<F>,
    n1: Array2<F>,
    self_attn: AttnCache<F>,
    drop1: Option<Array2<F>>,
    y1: Array2<F>,
    inv2: Array1<F>,
    n2: Array2<F>,
    cross_attn: AttnCache<F>,
    drop2: Option<Array2<F>>,
    y2: Array2<F>,
    inv3: Array1<F>,
    n3: Array2<F>,
    h: Array2<F>,
    drop3: Option<Array2<F>>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardTrace<F> {
    b: usize,
    s: usize,
    t: usize,
    src_ids: Vec<u32>,
    tgt_in_ids: Vec<u32>,
    enc_in_drop: Option<Array2<F>>,
    enc_layers: Vec<EncLayerCache<F>>,
    enc_pre_norm: Array2<F>,
    enc_inv: Array1<F>,
    pub(crate) enc_out: Array2<F>,
    dec_in_drop: Option<Array2<F>>,
    dec_layers: Vec<DecLayerCache<F>>,
    dec_pre_norm: Array2<F>,
    dec_inv: Array1<F>,
    pub(crate) hidden: Array2<F>,
}

impl<F: Scalar> ForwardTrace<F> {
    /// Row sums of every attention probability row in the pass, for checking
    /// that masked softmaxes still normalize.
    pub fn attention_row_sums(&self) -> Vec<f64> {
        let mut sums = Vec::new();
        let mut collect = |caches: &[&AttnCache<F>]| {
            for cache in caches {
                for probs in &cache.probs {
                    for row in probs.rows() {
                        sums.push(row.sum().to_f64());
                    }
                }
            }
        };
        collect(&self.enc_layers.iter().map(|l| &l.attn).collect::<Vec<_>>());
        collect(
            &self
                .dec_layers
                .iter()
                .flat_map(|l| [&l.self_attn, &l.cross_attn])
                .collect::<Vec<_>>(),
        );
        sums
    }
}

fn maybe_mask<F: Scalar>(
    mode: &mut Mode<'_>,
    rows: usize,
    cols: usize,
    p: f64,
) -> Option<Array2<F>> {
    match mode {
        Mode::Train(rng) if p > 0.0 => Some(dropout_mask(rows, cols, p, rng)),
        _ => None,
    }
}

fn dropped<F: Scalar>(x: Array2<F>, mask: &Option<Array2<F>>) -> Array2<F> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

fn masked_grad<F: Scalar>(d: &Array2<F>, mask: &Option<Array2<F>>) -> Array2<F> {
    match mask {
        Some(m) => d * m,
        None => d.clone(),
    }
}

fn check_ids(ids: &Array2<u32>, vocab: usize) -> Result<(), ModelError> {
    for &id in ids {
        if id as usize >= vocab {
            return Err(ModelError::TokenOutOfRange { id, vocab });
        }
    }
    Ok(())
}

fn check_len(len: usize, max_len: usize) -> Result<(), ModelError> {
    if len > max_len {
        return Err(ModelError::TooLong { len, max_len });
    }
    Ok(())
}

/// Token embedding plus shared positional rows, per batch block.
fn embed_inputs<F: Scalar>(params: &Parameters<F>, ids: &[u32], b: usize, t: usize) -> Array2<F> {
    let mut x = gather_rows(&params.embedding, ids);
    let pos = params.positional.slice(s![0..t, ..]);
    for bi in 0..b {
        let mut block = x.slice_mut(s![bi * t..(bi + 1) * t, ..]);
        block += &pos;
    }
    x
}

fn add_positional_grad<F: Scalar>(gpos: &mut Array2<F>, d: &Array2<F>, b: usize, t: usize) {
    for bi in 0..b {
        let mut rows = gpos.slice_mut(s![0..t, ..]);
        rows += &d.slice(s![bi * t..(bi + 1) * t, ..]);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_fwd<F: Scalar>(
    attn: &Attention<F>,
    q_in: &Array2<F>,
    kv_in: &Array2<F>,
    b: usize,
    tq: usize,
    tk: usize,
    n_heads: usize,
    mask: &AttnMask<'_>,
) -> (Array2<F>, AttnCache<F>) {
    let d = q_in.ncols();
    let hd = d / n_heads;
    let scale = F::from_f64((hd as f64).sqrt().recip());
    let q = linear_fwd(q_in, &attn.wq);
    let k = linear_fwd(kv_in, &attn.wk);
    let v = linear_fwd(kv_in, &attn.wv);
    let mut ctx = Array2::zeros((b * tq, d));
    let mut probs = Vec::with_capacity(b * n_heads);
    for bi in 0..b {
        for h in 0..n_heads {
            let cols = h * hd..(h + 1) * hd;
            let qs = q.slice(s![bi * tq..(bi + 1) * tq, cols.clone()]);
            let ks = k.slice(s![bi * tk..(bi + 1) * tk, cols.clone()]);
            let vs = v.slice(s![bi * tk..(bi + 1) * tk, cols.clone()]);
            let mut scores = qs.dot(&ks.t());
            scores.mapv_inplace(|x| x * scale);
            match mask {
                AttnMask::Causal => {
                    for i in 0..tq {
                        for j in (i + 1)..tk {
                            scores[[i, j]] = F::neg_infinity();
                        }
                    }
                }
                AttnMask::Keys(keys) => {
                    for j in 0..tk {
                        if !keys[[bi, j]] {
                            scores.column_mut(j).fill(F::neg_infinity());
                        }
                    }
                }
            }
            softmax_rows(&mut scores);
            let c = scores.dot(&vs);
            ctx.slice_mut(s![bi * tq..(bi + 1) * tq, cols]).assign(&c);
            probs.push(scores);
        }
    }
    let out = linear_fwd(&ctx, &attn.wo);
    (out, AttnCache { q, k, v, probs, ctx })
}

/// Returns gradients w.r.t. the query input and the key/value input.
/// Parameter gradients accumulate into `g`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_bwd<F: Scalar>(
    attn: &Attention<F>,
    cache: &AttnCache<F>,
    q_in: &Array2<F>,
    kv_in: &Array2<F>,
    b: usize,
    tq: usize,
    tk: usize,
    n_heads: usize,
    d_out: &Array2<F>,
    g: &mut Attention<F>,
) -> (Array2<F>, Array2<F>) {
    let d = q_in.ncols();
    let hd = d / n_heads;
    let scale = F::from_f64((hd as f64).sqrt().recip());
    let d_ctx = linear_bwd(&cache.ctx, &attn.wo, d_out, &mut g.wo.weight, &mut g.wo.bias);
    let mut dq = Array2::zeros((b * tq, d));
    let mut dk = Array2::zeros((b * tk, d));
    let mut dv = Array2::zeros((b * tk, d));
    for bi in 0..b {
        for h in 0..n_heads {
            let cols = h * hd..(h + 1) * hd;
            let qrows = bi * tq..(bi + 1) * tq;
            let krows = bi * tk..(bi + 1) * tk;
            let a = &cache.probs[bi * n_heads + h];
            let dc = d_ctx.slice(s![qrows.clone(), cols.clone()]);
            let qs = cache.q.slice(s![qrows.clone(), cols.clone()]);
            let ks = cache.k.slice(s![krows.clone(), cols.clone()]);
            let vs = cache.v.slice(s![krows.clone(), cols.clone()]);

            let da = dc.dot(&vs.t());
            let mut dvs = dv.slice_mut(s![krows.clone(), cols.clone()]);
            dvs += &a.t().dot(&dc);
            let mut dz = softmax_rows_bwd(a, &da);
            dz.mapv_inplace(|x| x * scale);
            let mut dqs = dq.slice_mut(s![qrows, cols.clone()]);
            dqs += &dz.dot(&ks);
            let mut dks = dk.slice_mut(s![krows, cols]);
            dks += &dz.t().dot(&qs);
        }
    }
    let dq_in = linear_bwd(q_in, &attn.wq, &dq, &mut g.wq.weight, &mut g.wq.bias);
    let dk_in = linear_bwd(kv_in, &attn.wk, &dk, &mut g.wk.weight, &mut g.wk.bias);
    let mut dkv_in = linear_bwd(kv_in, &attn.wv, &dv, &mut g.wv.weight, &mut g.wv.bias);
    dkv_in += &dk_in;
    (dq_in, dkv_in)
}

/// Teacher-forced forward pass over a padded batch. `tgt` is the expected
/// output (ending in `<eos>`, padded with `<pad>`); the decoder consumes it
/// shifted right behind `<bos>`. Returns logits `[B, T, V]` and the trace.
pub fn forward<F: Scalar>(
    params: &Parameters<F>,
    src: &Array2<u32>,
    tgt: &Array2<u32>,
    mut mode: Mode<'_>,
) -> Result<(Array3<F>, ForwardTrace<F>), ModelError> {
    let cfg = &params.config;
    let (b, s_len) = src.dim();
    let (b2, t_len) = tgt.dim();
    if b != b2 || b == 0 || s_len == 0 || t_len == 0 {
        return Err(ModelError::Config(format!(
            "src {b}x{s_len} and tgt {b2}x{t_len} must be non-empty with equal batch"
        )));
    }
    check_len(s_len, cfg.max_len)?;
    check_len(t_len, cfg.max_len)?;
    check_ids(src, cfg.vocab_size)?;
    check_ids(tgt, cfg.vocab_size)?;

    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let p = cfg.dropout;
    let src_mask = src.mapv(|id| id != PAD);
    let src_ids: Vec<u32> = src.iter().copied().collect();
    let mut tgt_in_ids = Vec::with_capacity(b * t_len);
    for bi in 0..b {
        tgt_in_ids.push(BOS);
        for j in 0..t_len - 1 {
            tgt_in_ids.push(tgt[[bi, j]]);
        }
    }

    // Encoder.
    let mut x = embed_inputs(params, &src_ids, b, s_len);
    let enc_in_drop = maybe_mask(&mut mode, b * s_len, d, p);
    x = dropped(x, &enc_in_drop);
    let mut enc_layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.encoder {
        let x_in = x;
        let (n1, inv1) = rmsnorm_fwd(&x_in, &layer.norm1.gain);
        let (attn_out, attn) = attention_fwd(
            &layer.attn,
            &n1,
            &n1,
            b,
            s_len,
            s_len,
            heads,
            &AttnMask::Keys(&src_mask),
        );
        let drop1 = maybe_mask(&mut mode, b * s_len, d, p);
        let a = dropped(attn_out, &drop1);
        let x_mid = &x_in + &a;
        let (n2, inv2) = rmsnorm_fwd(&x_mid, &layer.norm2.gain);
        let h = relu(&linear_fwd(&n2, &layer.ffn.w1));
        let f = linear_fwd(&h, &layer.ffn.w2);
        let drop2 = maybe_mask(&mut mode, b * s_len, d, p);
        let f = dropped(f, &drop2);
        x = &x_mid + &f;
        enc_layers.push(EncLayerCache {
            x_in,
            inv1,
            n1,
            attn,
            drop1,
            x_mid,
            inv2,
            n2,
            h,
            drop2,
        });
    }
    let (enc_out, enc_inv) = rmsnorm_fwd(&x, &params.encoder_norm.gain);
    let enc_pre_norm = x;

    // Decoder.
    let mut y = embed_inputs(params, &tgt_in_ids, b, t_len);
    let dec_in_drop = maybe_mask(&mut mode, b * t_len, d, p);
    y = dropped(y, &dec_in_drop);
    let mut dec_layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.decoder {
        let y_in = y;
        let (n1, inv1) = rmsnorm_fwd(&y_in, &layer.norm1.gain);
        let (sa_out, self_attn) = attention_fwd(
            &layer.self_attn,
            &n1,
            &n1,
            b,
            t_len,
            t_len,
            heads,
            &AttnMask::Causal,
        );
        let drop1 = maybe_mask(&mut mode, b * t_len, d, p);
        let sa = dropped(sa_out, &drop1);
        let y1 = &y_in + &sa;
        let (n2, inv2) = rmsnorm_fwd(&y1, &layer.norm2.gain);
        let (ca_out, cross_attn) = attention_fwd(
            &layer.cross_attn,
            &n2,
            &enc_out,
            b,
            t_len,
            s_len,
            heads,
            &AttnMask::Keys(&src_mask),
        );
        let drop2 = maybe_mask(&mut mode, b * t_len, d, p);
        let ca = dropped(ca_out, &drop2);
        let y2 = &y1 + &ca;
        let (n3, inv3) = rmsnorm_fwd(&y2, &layer.norm3.gain);
        let h = relu(&linear_fwd(&n3, &layer.ffn.w1));
        let f = linear_fwd(&h, &layer.ffn.w2);
        let drop3 = maybe_mask(&mut mode, b * t_len, d, p);
        let f = dropped(f, &drop3);
        y = &y2 + &f;
        dec_layers.push(DecLayerCache {
            y_in,
            inv1,
            n1,
            self_attn,
            drop1,
            y1,
            inv2,
            n2,
            cross_attn,
            drop2,
            y2,
            inv3,
            n3,
            h,
            drop3,
        });
    }
    let (hidden, dec_inv) = rmsnorm_fwd(&y, &params.decoder_norm.gain);
    let dec_pre_norm = y;

    let logits2 = project_logits(params, &hidden);
    let logits = logits2
        .into_shape_with_order((b, t_len, cfg.vocab_size))
        .expect("row count matches");
    Ok((
        logits,
        ForwardTrace {
            b,
            s: s_len,
            t: t_len,
            src_ids,
            tgt_in_ids,
            enc_in_drop,
            enc_layers,
            enc_pre_norm,
            enc_inv,
            enc_out,
            dec_in_drop,
            dec_layers,
            dec_pre_norm,
            dec_inv,
            hidden,
        },
    ))
}

/// Output logits through the tied embedding: `hidden · Eᵀ`.
pub fn project_logits<F: Scalar>(params: &Parameters<F>, hidden: &Array2<F>) -> Array2<F> {
    hidden.dot(&params.embedding.t())
}

/// Backward pass from `dL/dlogits`; returns parameter gradients.
pub fn backward<F: Scalar>(
    params: &Parameters<F>,
    trace: &ForwardTrace<F>,
    dlogits: &Array3<F>,
) -> Parameters<F> {
    let cfg = &params.config;
    let (b, s_len, t_len) = (trace.b, trace.s, trace.t);
    let heads = cfg.n_heads;
    let mut g = Parameters::zeros(cfg);

    let dl2 = dlogits
        .view()
        .into_shape_with_order((b * t_len, cfg.vocab_size))
        .expect("standard layout");
    // Tied projection: logits = hidden · Eᵀ.
    let dh = dl2.dot(&params.embedding);
    g.embedding += &dl2.t().dot(&trace.hidden);

    let mut d_cur = rmsnorm_bwd(
        &trace.dec_pre_norm,
        &params.decoder_norm.gain,
        &trace.dec_inv,
        &dh,
        &mut g.decoder_norm.gain,
    );
    let mut d_enc_out: Array2<F> = Array2::zeros((b * s_len, cfg.d_model));
    for li in (0..cfg.n_layers).rev() {
        let layer = &params.decoder[li];
        let c = &trace.dec_layers[li];
        let gl = &mut g.decoder[li];

        let df = masked_grad(&d_cur, &c.drop3);
        let dh_post = linear_bwd(&c.h, &layer.ffn.w2, &df, &mut gl.ffn.w2.weight, &mut gl.ffn.w2.bias);
        let dpre = relu_bwd(&c.h, &dh_post);
        let dn3 = linear_bwd(&c.n3, &layer.ffn.w1, &dpre, &mut gl.ffn.w1.weight, &mut gl.ffn.w1.bias);
        let mut d2 = rmsnorm_bwd(&c.y2, &layer.norm3.gain, &c.inv3, &dn3, &mut gl.norm3.gain);
        d2 += &d_cur;

        let dca = masked_grad(&d2, &c.drop2);
        let (dn2, denc) = attention_bwd(
            &layer.cross_attn,
            &c.cross_attn,
            &c.n2,
            &trace.enc_out,
            b,
            t_len,
            s_len,
            heads,
            &dca,
            &mut gl.cross_attn,
        );
        d_enc_out += &denc;
        let mut d1 = rmsnorm_bwd(&c.y1, &layer.norm2.gain, &c.inv2, &dn2, &mut gl.norm2.gain);
        d1 += &d2;

        let dsa = masked_grad(&d1, &c.drop1);
        let (dn1_q, dn1_kv) = attention_bwd(
            &layer.self_attn,
            &c.self_attn,
            &c.n1,
            &c.n1,
            b,
            t_len,
            t_len,
            heads,
            &dsa,
            &mut gl.self_attn,
        );
        let dn1 = dn1_q + dn1_kv;
        let mut d0 = rmsnorm_bwd(&c.y_in, &layer.norm1.gain, &c.inv1, &dn1, &mut gl.norm1.gain);
        d0 += &d1;
        d_cur = d0;
    }
    let dy_emb = masked_grad(&d_cur, &trace.dec_in_drop);
    scatter_add_rows(&mut g.embedding, &trace.tgt_in_ids, &dy_emb);
    add_positional_grad(&mut g.positional, &dy_emb, b, t_len);

    let mut d_cur = rmsnorm_bwd(
        &trace.enc_pre_norm,
        &params.encoder_norm.gain,
        &trace.enc_inv,
        &d_enc_out,
        &mut g.encoder_norm.gain,
    );
    for li in (0..cfg.n_layers).rev() {
        let layer = &params.encoder[li];
        let c = &trace.enc_layers[li];
        let gl = &mut g.encoder[li];

        let df = masked_grad(&d_cur, &c.drop2);
        let dh_post = linear_bwd(&c.h, &layer.ffn.w2, &df, &mut gl.ffn.w2.weight, &mut gl.ffn.w2.bias);
        let dpre = relu_bwd(&c.h, &dh_post);
        let dn2 = linear_bwd(&c.n2, &layer.ffn.w1, &dpre, &mut gl.ffn.w1.weight, &mut gl.ffn.w1.bias);
        let mut d1 = rmsnorm_bwd(&c.x_mid, &layer.norm2.gain, &c.inv2, &dn2, &mut gl.norm2.gain);
        d1 += &d_cur;

        let dat = masked_grad(&d1, &c.drop1);
        let (dn1_q, dn1_kv) = attention_bwd(
            &layer.attn,
            &c.attn,
            &c.n1,
            &c.n1,
            b,
            s_len,
            s_len,
            heads,
            &dat,
            &mut gl.attn,
        );
        let dn1 = dn1_q + dn1_kv;
        let mut d0 = rmsnorm_bwd(&c.x_in, &layer.norm1.gain, &c.inv1, &dn1, &mut gl.norm1.gain);
        d0 += &d1;
        d_cur = d0;
    }
    let dx_emb = masked_grad(&d_cur, &trace.enc_in_drop);
    scatter_add_rows(&mut g.embedding, &trace.src_ids, &dx_emb);
    add_positional_grad(&mut g.positional, &dx_emb, b, s_len);

    g
}

// Lean evaluation path used by decoding: no trace retention, and
// cross-attention key/value projections are computed once per source batch
// instead of once per generation step.

pub(crate) fn encode_eval<F: Scalar>(
    params: &Parameters<F>,
    src: &Array2<u32>,
) -> Result<(Array2<F>, Array2<bool>), ModelError> {
    let cfg = &params.config;
    let (b, s_len) = src.dim();
    if b == 0 || s_len == 0 {
        return Err(ModelError::Config("empty source batch".to_string()));
    }
    check_len(s_len, cfg.max_len)?;
    check_ids(src, cfg.vocab_size)?;
    let src_mask = src.mapv(|id| id != PAD);
    let src_ids: Vec<u32> = src.iter().copied().collect();
    let mut x = embed_inputs(params, &src_ids, b, s_len);
    for layer in &params.encoder {
        let (n1, _) = rmsnorm_fwd(&x, &layer.norm1.gain);
        let (attn_out, _) = attention_fwd(
            &layer.attn,
            &n1,
            &n1,
            b,
            s_len,
            s_len,
            cfg.n_heads,
            &AttnMask::Keys(&src_mask),
        );
        let x_mid = &x + &attn_out;
        let (n2, _) = rmsnorm_fwd(&x_mid, &layer.norm2.gain);
        let h = relu(&linear_fwd(&n2, &layer.ffn.w1));
        let f = linear_fwd(&h, &layer.ffn.w2);
        x = &x_mid + &f;
    }
    let (enc_out, _) = rmsnorm_fwd(&x, &params.encoder_norm.gain);
    Ok((enc_out, src_mask))
}

/// Per-decoder-layer cross-attention keys and values for a fixed encoding.
pub(crate) fn cross_kv<F: Scalar>(
    params: &Parameters<F>,
    enc_out: &Array2<F>,
) -> Vec<(Array2<F>, Array2<F>)> {
    params
        .decoder
        .iter()
        .map(|layer| {
            (
                linear_fwd(enc_out, &layer.cross_attn.wk),
                linear_fwd(enc_out, &layer.cross_attn.wv),
            )
        })
        .collect()
}

/// Attention with the key/value projections already applied.
#[allow(clippy::too_many_arguments)]
fn attn_eval_with_kv<F: Scalar>(
    attn: &Attention<F>,
    q_in: &Array2<F>,
    k: &Array2<F>,
    v: &Array2<F>,
    b: usize,
    tq: usize,
    tk: usize,
    n_heads: usize,
    mask: &AttnMask<'_>,
) -> Array2<F> {
    let d = q_in.ncols();
    let hd = d / n_heads;
    let scale = F::from_f64((hd as f64).sqrt().recip());
    let q = linear_fwd(q_in, &attn.wq);
    let mut ctx = Array2::zeros((b * tq, d));
    for bi in 0..b {
        for h in 0..n_heads {
            let cols = h * hd..(h + 1) * hd;
            let qs = q.slice(s![bi * tq..(bi + 1) * tq, cols.clone()]);
            let ks = k.slice(s![bi * tk..(bi + 1) * tk, cols.clone()]);
            let vs = v.slice(s![bi * tk..(bi + 1) * tk, cols.clone()]);
            let mut scores = qs.dot(&ks.t());
            scores.mapv_inplace(|x| x * scale);
            match mask {
                AttnMask::Causal => {
                    for i in 0..tq {
                        for j in (i + 1)..tk {
                            scores[[i, j]] = F::neg_infinity();
                        }
                    }
                }
                AttnMask::Keys(keys) => {
                    for j in 0..tk {
                        if !keys[[bi, j]] {
                            scores.column_mut(j).fill(F::neg_infinity());
                        }
                    }
                }
            }
            softmax_rows(&mut scores);
            let c = scores.dot(&vs);
            ctx.slice_mut(s![bi * tq..(bi + 1) * tq, cols]).assign(&c);
        }
    }
    linear_fwd(&ctx, &attn.wo)
}

/// Decoder hidden states for a prefix batch, without trace retention.
pub(crate) fn decoder_eval_hidden<F: Scalar>(
    params: &Parameters<F>,
    cross: &[(Array2<F>, Array2<F>)],
    src_mask: &Array2<bool>,
    dec_in: &[u32],
    b: usize,
    t: usize,
) -> Array2<F> {
    let cfg = &params.config;
    let s_len = src_mask.ncols();
    let mut y = embed_inputs(params, dec_in, b, t);
    for (layer, (k, v)) in params.decoder.iter().zip(cross) {
        let (n1, _) = rmsnorm_fwd(&y, &layer.norm1.gain);
        let sk = linear_fwd(&n1, &layer.self_attn.wk);
        let sv = linear_fwd(&n1, &layer.self_attn.wv);
        let sa = attn_eval_with_kv(
            &layer.self_attn,
            &n1,
            &sk,
            &sv,
            b,
            t,
            t,
            cfg.n_heads,
            &AttnMask::Causal,
        );
        let y1 = &y + &sa;
        let (n2, _) = rmsnorm_fwd(&y1, &layer.norm2.gain);
        let ca = attn_eval_with_kv(
            &layer.cross_attn,
            &n2,
            k,
            v,
            b,
            t,
            s_len,
            cfg.n_heads,
            &AttnMask::Keys(src_mask),
        );
        let y2 = &y1 + &ca;
        let (n3, _) = rmsnorm_fwd(&y2, &layer.norm3.gain);
        let h = relu(&linear_fwd(&n3, &layer.ffn.w1));
        let f = linear_fwd(&h, &layer.ffn.w2);
        y = &y2 + &f;
    }
    let (hidden, _) = rmsnorm_fwd(&y, &params.decoder_norm.gain);
    hidden
}
