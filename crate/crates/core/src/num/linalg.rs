use ndarray::{Array2, ArrayView2};

use crate::error::{Result, SsbError};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order.
pub fn symmetric_eigenvalues(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SsbError::shape(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SsbError::Numeric("non-finite matrix entry".into()));
    }
    let mut a = m.to_owned();
    for i in 0..n {
        for j in 0..i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-10 * (a[[i, j]].abs() + a[[j, i]].abs() + 1e-300) {
                return Err(SsbError::arg("matrix is not symmetric"));
            }
        }
    }
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
            ev.sort_by(|x, y| y.total_cmp(x));
            return Ok(ev);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(SsbError::Numeric("Jacobi eigensolver did not converge".into()))
}

/// Singular values (descending) from the eigenvalues of the smaller Gram matrix.
pub fn singular_values(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    let gram: Array2<f64> = if m.nrows() >= m.ncols() {
        m.t().dot(&m)
    } else {
        m.dot(&m.t())
    };
    let ev = symmetric_eigenvalues(gram.view())?;
    let top = ev.first().copied().unwrap_or(0.0).max(0.0);
    let floor = ev.len() as f64 * f64::EPSILON * top;
    Ok(ev
        .into_iter()
        .map(|l| if l > floor { l.sqrt() } else { 0.0 })
        .collect())
}

/// `exp(H)` with `H = −Σ pᵢ ln pᵢ`, `pᵢ = σᵢ / Σσⱼ` over the singular values.
pub fn effective_rank(m: ArrayView2<f64>) -> Result<f64> {
    let sv = singular_values(m)?;
    let total: f64 = sv.iter().sum();
    if total == 0.0 {
        return Err(SsbError::Degenerate(
            "effective rank of an all-zero matrix".into(),
        ));
    }
    let h: f64 = sv
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp())
}
