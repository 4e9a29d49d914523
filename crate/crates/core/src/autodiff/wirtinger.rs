use ndarray::{s, Array2};

use crate::error::{Result, SsbError};
use crate::num::Complex;

/// The pair `(∂f/∂z, ∂f/∂z̄)` of complex Jacobian blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct WirtingerJacobian {
    pub dz: Array2<Complex>,
    pub dzbar: Array2<Complex>,
}

/// Converts a real Jacobian between planar complex vectors into Wirtinger
/// blocks: `∂f/∂z = ½(∂f/∂x − i ∂f/∂y)`, `∂f/∂z̄ = ½(∂f/∂x + i ∂f/∂y)`.
pub fn wirtinger(jac: &Array2<f64>) -> Result<WirtingerJacobian> {
    let (rows, cols) = jac.dim();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(SsbError::shape(
            "even-sized planar Jacobian",
            format!("{rows}x{cols}"),
        ));
    }
    let (m, n) = (rows / 2, cols / 2);
    let du_dx = jac.slice(s![..m, ..n]);
    let du_dy = jac.slice(s![..m, n..]);
    let dv_dx = jac.slice(s![m.., ..n]);
    let dv_dy = jac.slice(s![m.., n..]);
    let dz = Array2::from_shape_fn((m, n), |(i, j)| {
        let fx = Complex::new(du_dx[[i, j]], dv_dx[[i, j]]);
        let fy = Complex::new(du_dy[[i, j]], dv_dy[[i, j]]);
        (fx - Complex::i() * fy) * 0.5
    });
    let dzbar = Array2::from_shape_fn((m, n), |(i, j)| {
        let fx = Complex::new(du_dx[[i, j]], dv_dx[[i, j]]);
        let fy = Complex::new(du_dy[[i, j]], dv_dy[[i, j]]);
        (fx + Complex::i() * fy) * 0.5
    });
    Ok(WirtingerJacobian { dz, dzbar })
}
