//! Dense forward/backward primitives shared by the encoder and decoder.
//!
//! Everything operates on 2-D arrays whose rows are positions (batch and
//! time collapsed); attention alone reshapes per head. Backward functions
//! accumulate parameter gradients with `+=`, so one gradient container
//! serves a whole backward pass.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::Linear;
use super::Scalar;

/// Epsilon inside the RMS normalizer.
pub(crate) const NORM_EPS: f64 = 1e-6;

pub(crate) fn linear_fwd<F: Scalar>(x: &Array2<F>, lin: &Linear<F>) -> Array2<F> {
    let mut y = x.dot(&lin.weight.t());
    y += &lin.bias;
    y
}

/// Returns dx; accumulates weight and bias gradients.
pub(crate) fn linear_bwd<F: Scalar>(
    x: &Array2<F>,
    lin: &Linear<F>,
    dy: &Array2<F>,
    gw: &mut Array2<F>,
    gb: &mut Array1<F>,
) -> Array2<F> {
    *gw += &dy.t().dot(x);
    *gb += &dy.sum_axis(Axis(0));
    dy.dot(&lin.weight)
}

/// RMS norm with gain: `y = x / rms(x) ⊙ g`. Returns the normalized rows and
/// the per-row inverse RMS needed by the backward pass.
pub(crate) fn rmsnorm_fwd<F: Scalar>(x: &Array2<F>, gain: &Array1<F>) -> (Array2<F>, Array1<F>) {
    let d = F::from_f64(x.ncols() as f64);
    let eps = F::from_f64(NORM_EPS);
    let mut inv_rms = Array1::zeros(x.nrows());
    let mut y = x.clone();
    for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let ms = row.dot(&row) / d;
        let r = (ms + eps).sqrt().recip();
        inv_rms[i] = r;
        row.zip_mut_with(gain, |v, &g| *v = *v * r * g);
    }
    (y, inv_rms)
}

pub(crate) fn rmsnorm_bwd<F: Scalar>(
    x: &Array2<F>,
    gain: &Array1<F>,
    inv_rms: &Array1<F>,
    dy: &Array2<F>,
    ggain: &mut Array1<F>,
) -> Array2<F> {
    let d = F::from_f64(x.ncols() as f64);
    let mut dx = Array2::zeros(x.raw_dim());
    for i in 0..x.nrows() {
        let r = inv_rms[i];
        let xr = x.row(i);
        let dyr = dy.row(i);
        // dxhat = dy ⊙ g; s = Σ dxhat ⊙ x.
        let mut s = F::zero();
        for j in 0..x.ncols() {
            let dxhat = dyr[j] * gain[j];
            s = s + dxhat * xr[j];
            ggain[j] += dyr[j] * xr[j] * r;
        }
        let coeff = r * r * r / d * s;
        for j in 0..x.ncols() {
            dx[[i, j]] = r * dyr[j] * gain[j] - coeff * xr[j];
        }
    }
    dx
}

/// Row-wise softmax in place, with max subtraction. Rows may contain `-inf`
/// (masked); they come out exactly zero as long as one entry is finite.
pub(crate) fn softmax_rows<F: Scalar>(scores: &mut Array2<F>) {
    for mut row in scores.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        let inv = sum.recip();
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
}

/// Gradient through a row-wise softmax: `dz = a ⊙ (da − rowsum(da ⊙ a))`.
/// Masked entries have `a = 0` and therefore gradient zero automatically.
pub(crate) fn softmax_rows_bwd<F: Scalar>(a: &Array2<F>, da: &Array2<F>) -> Array2<F> {
    let mut dz = Array2::zeros(a.raw_dim());
    for i in 0..a.nrows() {
        let ar = a.row(i);
        let dar = da.row(i);
        let dot = ar.dot(&dar);
        for j in 0..a.ncols() {
            dz[[i, j]] = ar[j] * (dar[j] - dot);
        }
    }
    dz
}

pub(crate) fn relu<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| v.max(F::zero()))
}

/// dx from dy using the post-activation values.
pub(crate) fn relu_bwd<F: Scalar>(y: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// Inverted dropout mask: entries are `1/(1-p)` with probability `1-p`, else
/// zero. Multiplying by the same mask forward and backward is the whole op.
pub(crate) fn dropout_mask<F: Scalar>(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<F> {
    let keep = 1.0 - p;
    let scale = F::from_f64(keep.recip());
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            F::zero()
        }
    })
}

/// Rows of `table` selected by id, in id order: `[ids.len(), d]`.
pub(crate) fn gather_rows<F: Scalar>(table: &Array2<F>, ids: &[u32]) -> Array2<F> {
    let mut out = Array2::zeros((ids.len(), table.ncols()));
    for (mut row, &id) in out.axis_iter_mut(Axis(0)).zip(ids) {
        row.assign(&table.row(id as usize));
    }
    out
}

pub(crate) fn scatter_add_rows<F: Scalar>(
    gtable: &mut Array2<F>,
    ids: &[u32],
    d_out: &Array2<F>,
) {
    for (row, &id) in d_out.axis_iter(Axis(0)).zip(ids) {
        let mut target = gtable.row_mut(id as usize);
        target += &row;
    }
}
