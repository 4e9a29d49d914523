use ndarray::{s, Array2};

use super::state::CapsuleState;
use crate::error::{Result, SsbError};
use crate::num::RngStream;

/// A symmetry transformation applied identically to every capsule.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    /// `z ↦ e^{iα} z` on `k = 2` capsules.
    Phase(f64),
    /// `v ↦ O v` with `OᵀO = I`.
    Orthogonal(Array2<f64>),
}

impl GroupElement {
    pub fn phase(alpha: f64) -> Self {
        GroupElement::Phase(alpha)
    }

    pub fn orthogonal(o: Array2<f64>) -> Result<Self> {
        if o.nrows() != o.ncols() || o.nrows() == 0 {
            return Err(SsbError::shape(
                "non-empty square matrix",
                format!("{:?}", o.dim()),
            ));
        }
        let gram = o.t().dot(&o);
        let err = (&gram - &Array2::<f64>::eye(o.nrows()))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if err > 1e-12 {
            return Err(SsbError::Invariant(format!(
                "matrix is not orthogonal (max |OᵀO − I| = {err:e})"
            )));
        }
        Ok(GroupElement::Orthogonal(o))
    }

    /// Haar-distributed orthogonal matrix from the QR factorization of a
    /// Gaussian matrix, with the sign of each column fixed by `R`'s diagonal.
    pub fn random_orthogonal(k: usize, rng: &mut RngStream) -> Result<Self> {
        if k == 0 {
            return Err(SsbError::arg("orthogonal dimension must be positive"));
        }
        let g = Array2::from_shape_simple_fn((k, k), || rng.normal());
        let mut q = Array2::<f64>::zeros((k, k));
        for j in 0..k {
            let mut v = g.column(j).to_owned();
            // two passes of modified Gram-Schmidt keep OᵀO = I at round-off
            for _ in 0..2 {
                for i in 0..j {
                    let qi = q.column(i);
                    let proj = qi.dot(&v);
                    v.scaled_add(-proj, &qi);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 {
                return Err(SsbError::Numeric("rank-deficient Gaussian draw".into()));
            }
            q.column_mut(j).assign(&(v / norm));
        }
        Self::orthogonal(q)
    }

    /// Dimension of the capsules this element acts on.
    pub fn dim(&self) -> usize {
        match self {
            GroupElement::Phase(_) => 2,
            GroupElement::Orthogonal(o) => o.nrows(),
        }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        match (self, other) {
            (GroupElement::Phase(a), GroupElement::Phase(b)) => Ok(GroupElement::Phase(a + b)),
            (GroupElement::Orthogonal(a), GroupElement::Orthogonal(b)) if a.dim() == b.dim() => {
                Ok(GroupElement::Orthogonal(a.dot(b)))
            }
            _ => Err(SsbError::arg("cannot compose group elements of different kinds")),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::Phase(a) => GroupElement::Phase(-a),
            GroupElement::Orthogonal(o) => GroupElement::Orthogonal(o.t().to_owned()),
        }
    }
}

/// Applies the representation of `g` to every capsule of `x`.
pub fn group_act(g: &GroupElement, x: &CapsuleState) -> Result<CapsuleState> {
    let n = x.n_capsules();
    let k = x.capsule_dim();
    if g.dim() != k {
        return Err(SsbError::arg(format!(
            "group element acts on dimension {}, capsules have {k}",
            g.dim()
        )));
    }
    let data = x.data();
    let mut out = Array2::zeros(data.raw_dim());
    match g {
        GroupElement::Phase(alpha) => {
            let (sin, cos) = alpha.sin_cos();
            let re = data.slice(s![.., ..n]);
            let im = data.slice(s![.., n..]);
            out.slice_mut(s![.., ..n]).assign(&(&re * cos - &im * sin));
            out.slice_mut(s![.., n..]).assign(&(&re * sin + &im * cos));
        }
        GroupElement::Orthogonal(o) => {
            for a in 0..k {
                for b in 0..k {
                    let src = data.slice(s![.., b * n..(b + 1) * n]);
                    out.slice_mut(s![.., a * n..(a + 1) * n])
                        .scaled_add(o[[a, b]], &src);
                }
            }
        }
    }
    Ok(CapsuleState::from_parts(out, n, k))
}
