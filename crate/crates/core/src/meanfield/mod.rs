//! Large-width recursions for the U(1) network with radial `tanh`
//! activation.
//!
//! With complex weights of total variance `σ²/N`, a layer's post-activation
//! order parameter `c = (1/N) Σ |φ(zⱼ)|²` evolves as
//! `c' = 2 ∫₀^∞ u e^{-u²} tanh²(σ√c u) du`. A pair of inputs is tracked by
//! the off-diagonal covariance `Δ e^{iφ} = (1/N) Σ φ(zⱼ,a) φ(zⱼ,b)*`; its
//! phase is carried through unchanged and its magnitude follows a
//! two-dimensional integral with a Bessel `I₁` kernel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsbError};
use crate::num::{bessel_i1_scaled, integrate_radial, QuadratureRule};

/// Relative slack allowed when checking `Δ ≤ c` on states produced by
/// quadrature.
pub const DELTA_SLACK: f64 = 1e-8;

const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_START: f64 = 0.5;
const FIXED_POINT_CAP: usize = 10_000;

/// `(c, Δ, φ)` for one layer of the two-input recursion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub c: f64,
    pub delta: f64,
    /// Radians in `(−π, π]`.
    pub phi: f64,
}

impl CovarianceState {
    pub fn new(c: f64, delta: f64, phi: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(SsbError::arg(format!("c must be finite and >= 0, got {c}")));
        }
        if !(delta >= 0.0) {
            return Err(SsbError::arg(format!("delta must be >= 0, got {delta}")));
        }
        if delta > c * (1.0 + DELTA_SLACK) {
            return Err(SsbError::Invariant(format!("delta {delta} exceeds c {c}")));
        }
        if !phi.is_finite() {
            return Err(SsbError::arg("phi must be finite"));
        }
        Ok(CovarianceState {
            c,
            delta,
            phi: wrap_phase(phi),
        })
    }

    /// Normalized correlation `Δ/c`.
    pub fn rho(&self) -> f64 {
        if self.c > 0.0 {
            self.delta / self.c
        } else {
            0.0
        }
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldParams {
    sigma_w: f64,
    rule: QuadratureRule,
    /// Node count per panel for the two-dimensional rule.
    pair_order: usize,
    pair_panels: usize,
}

impl MeanFieldParams {
    pub fn new(sigma_w: f64) -> Result<Self> {
        Self::with_rule(sigma_w, QuadratureRule::radial())
    }

    pub fn with_rule(sigma_w: f64, rule: QuadratureRule) -> Result<Self> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return Err(SsbError::arg(format!("sigma_w must be positive, got {sigma_w}")));
        }
        Ok(MeanFieldParams {
            sigma_w,
            rule,
            pair_order: 16,
            pair_panels: 16,
        })
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }
}

/// One layer of the order-parameter recursion.
pub fn c_step(c: f64, p: &MeanFieldParams) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(SsbError::arg(format!("c must be >= 0, got {c}")));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let s = p.sigma_w * c.sqrt();
    integrate_radial(|u| (s * u).tanh().powi(2), &p.rule)
}

/// `c` after `depth` layers starting from `c0`.
pub fn iterate_c(c0: f64, depth: usize, p: &MeanFieldParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(depth + 1);
    out.push(c0);
    let mut c = c0;
    for _ in 0..depth {
        c = c_step(c, p)?;
        out.push(c);
    }
    Ok(out)
}

/// Non-trivial fixed point `c⋆` of [`c_step`], or 0 when `σ_w ≤ 1`.
///
/// Damped iteration `c ← (1−λ)c + λ c_step(c)` from `c = 0.5` with
/// `λ = 0.5`; if that does not reach `tol` within the iteration cap the
/// root of `c_step(c) − c` is bracketed and bisected instead.
pub fn c_fixed_point(p: &MeanFieldParams, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(SsbError::arg("tolerance must be positive"));
    }
    if p.sigma_w <= 1.0 {
        return Ok(0.0);
    }
    let mut c = FIXED_POINT_START;
    for _ in 0..FIXED_POINT_CAP {
        let next = c_step(c, p)?;
        if (next - c).abs() < tol {
            return Ok(c);
        }
        c = (1.0 - FIXED_POINT_DAMPING) * c + FIXED_POINT_DAMPING * next;
    }
    c_fixed_point_bisection(p, tol)
}

/// Root of `c_step(c) − c` on `(0, 1)` by bisection.
pub fn c_fixed_point_bisection(p: &MeanFieldParams, tol: f64) -> Result<f64> {
    if p.sigma_w <= 1.0 {
        return Ok(0.0);
    }
    let f = |c: f64| -> Result<f64> { Ok(c_step(c, p)? - c) };
    let mut lo = 1e-300;
    let mut hi = 1.0;
    if !(f(lo)? > 0.0 && f(hi)? < 0.0) {
        return Err(SsbError::Numeric(format!(
            "cannot bracket the fixed point at sigma_w = {}",
            p.sigma_w
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() < tol && hi - lo < tol.max(1e-15) {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
    }
    Err(SsbError::Numeric("bisection did not converge".into()))
}

/// One layer of the two-input recursion.
///
/// `c` follows [`c_step`], `φ` is copied unchanged, and
/// `Δ' = 4(1−ρ²) ∫∫ u₁u₂ e^{−u₁²−u₂²} I₁(2ρu₁u₂) tanh(a u₁) tanh(a u₂)`
/// with `ρ = Δ/c` and `a = σ√c √(1−ρ²)`.
pub fn delta_phi_step(s: &CovarianceState, p: &MeanFieldParams) -> Result<CovarianceState> {
    if s.c == 0.0 {
        return Err(SsbError::Degenerate("two-input step needs c > 0".into()));
    }
    if s.delta > s.c * (1.0 + DELTA_SLACK) {
        return Err(SsbError::Invariant(format!(
            "delta {} exceeds c {}",
            s.delta, s.c
        )));
    }
    let c_next = c_step(s.c, p)?;
    let rho = (s.delta / s.c).min(1.0);
    let delta_next = if rho >= 1.0 {
        c_next
    } else if rho == 0.0 {
        0.0
    } else {
        pair_integral(rho, s.c, p)?.min(c_next)
    };
    Ok(CovarianceState {
        c: c_next,
        delta: delta_next,
        phi: s.phi,
    })
}

/// The `Δ'` integral in rotated coordinates `p = (u₁+u₂)/√2`,
/// `q = (u₁−u₂)/√2`, where the Gaussian-times-Bessel weight becomes
/// `e^{−(1−ρ)p² −(1+ρ)q²} · [e^{−x} I₁(x)]` with `x = ρ(p²−q²)`. The wide
/// `p` direction is rescaled by `√(1−ρ)` so the rule adapts as `ρ → 1`.
fn pair_integral(rho: f64, c: f64, p: &MeanFieldParams) -> Result<f64> {
    let a = p.sigma_w * c.sqrt() * (1.0 - rho * rho).sqrt();
    let wp = (1.0 - rho).sqrt();
    let t_rule = QuadratureRule::composite(0.0, 8.0, p.pair_panels, p.pair_order)?;
    let base = QuadratureRule::gauss_legendre(p.pair_order)?;
    let q_cap = 8.0 / (1.0 + rho).sqrt();
    let q_panels = 4;
    let mut total = 0.0;
    for (&t, &wt) in t_rule.nodes().iter().zip(t_rule.weights()) {
        let pp = t / wp;
        let q_hi = pp.min(q_cap);
        let h = q_hi / q_panels as f64;
        let mut inner = 0.0;
        for panel in 0..q_panels {
            let mid = (panel as f64 + 0.5) * h;
            for (&x, &w) in base.nodes().iter().zip(base.weights()) {
                let q = mid + 0.5 * h * x;
                let u1 = (pp + q) * std::f64::consts::FRAC_1_SQRT_2;
                let u2 = (pp - q) * std::f64::consts::FRAC_1_SQRT_2;
                let arg = rho * (pp * pp - q * q);
                let weight = (-(1.0 + rho) * q * q).exp() * bessel_i1_scaled(arg.max(0.0))?;
                inner += 0.5 * h * w * u1 * u2 * weight * (a * u1).tanh() * (a * u2).tanh();
            }
        }
        // e^{−(1−ρ)p²} = e^{−t²}; dp = dt/√(1−ρ)
        total += wt * (-t * t).exp() * inner / wp;
    }
    // factor 2 for q < 0
    let v = 8.0 * (1.0 - rho * rho) * total;
    if !v.is_finite() {
        return Err(SsbError::Numeric("two-input integral is not finite".into()));
    }
    Ok(v)
}

/// Slope `dΔ'/dΔ` at `Δ = 0` on a background `c`:
/// `(4/c) [∫₀^∞ u² e^{−u²} tanh(σ√c u) du]²`, which tends to `σ²` as `c → 0`.
pub fn delta_slope_at_zero(c: f64, p: &MeanFieldParams) -> Result<f64> {
    if c == 0.0 {
        return Ok(p.sigma_w * p.sigma_w);
    }
    let s = p.sigma_w * c.sqrt();
    let m = p.rule.integrate(|u| u * u * (-u * u).exp() * (s * u).tanh());
    Ok(4.0 / c * m * m)
}

/// Depth scale of `Δˡ ~ exp(−l/ξ_Δ)`: `−1/ln(slope)` of the linearized
/// `Δ` map around the `c⋆` background. Infinite at `σ_w = 1`.
pub fn xi_delta(p: &MeanFieldParams) -> Result<f64> {
    let c_star = c_fixed_point(p, 1e-12)?;
    let slope = delta_slope_at_zero(c_star, p)?;
    if !(slope > 0.0) {
        return Err(SsbError::Numeric(format!("non-positive delta slope {slope}")));
    }
    if slope >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-1.0 / slope.ln())
}

/// Complex-Gaussian input variance `v` whose activated second moment is
/// `c0`, i.e. `2∫ u e^{−u²} tanh²(√v u) du = c0`.
pub fn input_variance_for(c0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c0) {
        return Err(SsbError::arg(format!("target c0 must be in [0, 1), got {c0}")));
    }
    if c0 == 0.0 {
        return Ok(0.0);
    }
    let rule = QuadratureRule::radial();
    let f = |v: f64| integrate_radial(|u| (v.sqrt() * u).tanh().powi(2), &rule);
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi)? < c0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SsbError::Numeric("cannot bracket input variance".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < c0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of a phase diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub sigma_w: f64,
    pub c_star: f64,
    pub xi_delta: f64,
    /// `c` after `depth` layers from `c⁰ = 0.5`.
    pub c_at_depth: f64,
}

pub fn phase_row(sigma_w: f64, depth: usize) -> Result<PhaseRow> {
    let p = MeanFieldParams::new(sigma_w)?;
    let c_star = c_fixed_point(&p, 1e-12)?;
    let xi = xi_delta(&p)?;
    let c_at_depth = *iterate_c(0.5, depth, &p)?.last().expect("non-empty");
    Ok(PhaseRow {
        sigma_w,
        c_star,
        xi_delta: xi,
        c_at_depth,
    })
}

/// `(σ_w, c⋆, ξ_Δ)` for every grid point, in grid order.
pub fn phase_diagram(sigma_grid: &[f64], depth: usize) -> Result<Vec<PhaseRow>> {
    if sigma_grid.is_empty() {
        return Err(SsbError::arg("sigma grid is empty"));
    }
    sigma_grid.iter().map(|&s| phase_row(s, depth)).collect()
}

/// CSV with header `sigma_w,c_star,xi_delta` and 17 significant digits.
pub fn phase_diagram_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from("sigma_w,c_star,xi_delta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt17(r.sigma_w),
            fmt17(r.c_star),
            fmt17(r.xi_delta)
        ));
    }
    out
}

/// Scientific notation with 17 significant digits; `inf` for infinities.
pub fn fmt17(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}
