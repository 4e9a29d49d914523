use std::f64::consts::PI;

use crate::error::{Result, SsbError};

/// Upper truncation point for integrals against `e^{-u²}`; the tail beyond it
/// is below `1e-27`.
pub const RADIAL_CUTOFF: f64 = 8.0;

/// A fixed set of nodes and positive weights approximating `∫ f(u) du` over
/// some interval.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Gauss–Legendre rule of the given order on `[-1, 1]`.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(SsbError::arg("quadrature order must be positive"));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            order,
        })
    }

    /// Composite Gauss–Legendre: `panels` equal sub-intervals of `[lo, hi]`,
    /// each carrying an `order`-point rule.
    pub fn composite(lo: f64, hi: f64, panels: usize, order: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(SsbError::arg(format!("bad interval [{lo}, {hi}]")));
        }
        if panels == 0 {
            return Err(SsbError::arg("need at least one panel"));
        }
        let edges: Vec<f64> = (0..=panels)
            .map(|i| lo + (hi - lo) * i as f64 / panels as f64)
            .collect();
        Self::on_edges(&edges, order)
    }

    /// Composite rule on arbitrary increasing panel edges.
    pub fn on_edges(edges: &[f64], order: usize) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SsbError::arg("panel edges must be strictly increasing"));
        }
        let base = Self::gauss_legendre(order)?;
        let mut nodes = Vec::with_capacity(base.order * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[1] + w[0]);
            for (x, wt) in base.nodes.iter().zip(&base.weights) {
                nodes.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            order,
        })
    }

    /// The default rule for radial integrals: `[0, 8]` split into 16 panels
    /// of 16 points each.
    pub fn radial() -> Self {
        Self::composite(0.0, RADIAL_CUTOFF, 16, 16).expect("static rule parameters are valid")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Points per panel.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `2 ∫₀^∞ u e^{-u²} f(u) du`, the radial average of `f(|z|)` over a unit
/// complex Gaussian.
pub fn integrate_radial<F: FnMut(f64) -> f64>(mut f: F, rule: &QuadratureRule) -> Result<f64> {
    let v = rule.integrate(|u| 2.0 * u * (-u * u).exp() * f(u));
    if v.is_nan() {
        return Err(SsbError::Numeric("radial integrand produced NaN".into()));
    }
    Ok(v)
}
