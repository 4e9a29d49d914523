use ndarray::{Array2, ArrayView2};

use super::state::CapsuleState;

/// Regularizer in the radial nonlinearity denominator.
pub const DEFAULT_EPS: f64 = 1e-8;

/// The radial gain `g(r) = tanh(r) / (r + ε)`.
pub fn radial_gain(r: f64, eps: f64) -> f64 {
    if r == 0.0 && eps == 0.0 {
        // limit of tanh(r)/r
        return 1.0;
    }
    r.tanh() / (r + eps)
}

/// `r · g'(r)`, the quantity the backward pass needs.
///
/// For `r < 1e-6` the leading series of the numerator
/// `(r+ε)·sech²(r) − tanh(r)` is used, which avoids cancellation.
pub fn radial_gain_deriv_times_r(r: f64, eps: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let num = if r < 1e-6 {
        eps * (1.0 - r * r) - (2.0 / 3.0) * r * r * r
    } else {
        let t = r.tanh();
        (r + eps) * (1.0 - t * t) - t
    };
    r * num / ((r + eps) * (r + eps))
}

/// Applies `v ↦ tanh(|v|)/(|v|+ε) · v` to every capsule.
pub fn radial_nonlinearity(x: &CapsuleState, eps: f64) -> CapsuleState {
    CapsuleState::from_parts(
        radial_forward(x.view(), x.n_capsules(), x.capsule_dim(), eps),
        x.n_capsules(),
        x.capsule_dim(),
    )
}

pub(crate) fn radial_forward(x: ArrayView2<f64>, n: usize, k: usize, eps: f64) -> Array2<f64> {
    let mut out = x.to_owned();
    let mut gain = vec![0.0; n];
    for mut row in out.rows_mut() {
        let row = row.as_slice_mut().expect("owned rows are contiguous");
        row_norms(row, n, k, &mut gain);
        for g in gain.iter_mut() {
            *g = radial_gain(*g, eps);
        }
        for chunk in row.chunks_exact_mut(n) {
            for (v, g) in chunk.iter_mut().zip(&gain) {
                *v *= g;
            }
        }
    }
    out
}

/// Per-capsule Euclidean norms of one contiguous component-major row.
fn row_norms(row: &[f64], n: usize, k: usize, out: &mut [f64]) {
    out.fill(0.0);
    for chunk in row.chunks_exact(n).take(k) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v * v;
        }
    }
    for o in out.iter_mut() {
        *o = o.sqrt();
    }
}

/// Backward pass: given the upstream gradient `dy`, returns `dx`.
pub(crate) fn radial_backward(
    x: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    n: usize,
    k: usize,
    eps: f64,
) -> Array2<f64> {
    // dx = g dy + g'(r) (x̂·dy) x̂ · r / r  ⇒  g dy + (r g') (x·dy) x / r²
    let x = x.as_standard_layout();
    let dy = dy.as_standard_layout();
    let mut dx = Array2::<f64>::zeros(x.raw_dim());
    let mut gain = vec![0.0; n];
    let mut coef = vec![0.0; n];
    for ((xr, dyr), mut dxr) in x.rows().into_iter().zip(dy.rows()).zip(dx.rows_mut()) {
        let (xr, dyr) = (xr.as_slice().unwrap(), dyr.as_slice().unwrap());
        let dxr = dxr.as_slice_mut().unwrap();
        row_norms(xr, n, k, &mut gain);
        coef.fill(0.0);
        for (xc, dc) in xr.chunks_exact(n).zip(dyr.chunks_exact(n)) {
            for ((c, a), b) in coef.iter_mut().zip(xc).zip(dc) {
                *c += a * b;
            }
        }
        for (g, c) in gain.iter_mut().zip(coef.iter_mut()) {
            let r = *g;
            *c = if r > 0.0 {
                radial_gain_deriv_times_r(r, eps) * *c / (r * r)
            } else {
                0.0
            };
            *g = radial_gain(r, eps);
        }
        for ((out, xc), dc) in dxr
            .chunks_exact_mut(n)
            .zip(xr.chunks_exact(n))
            .zip(dyr.chunks_exact(n))
        {
            for i in 0..n {
                out[i] = gain[i] * dc[i] + coef[i] * xc[i];
            }
        }
    }
    dx
}
