use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::radial::{radial_forward, DEFAULT_EPS};
use super::state::CapsuleState;
use crate::error::{Result, SsbError};
use crate::num::RngStream;

/// Layer family: which symmetry the internal layers respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    U1,
    So2,
    Ok,
    Generic,
}

impl Family {
    pub fn is_equivariant(self) -> bool {
        !matches!(self, Family::Generic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::U1 => "u1",
            Family::So2 => "so2",
            Family::Ok => "ok",
            Family::Generic => "generic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = SsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u1" => Ok(Family::U1),
            "so2" => Ok(Family::So2),
            "ok" => Ok(Family::Ok),
            "generic" => Ok(Family::Generic),
            other => Err(SsbError::arg(format!("unknown family '{other}'"))),
        }
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Independent Gaussian entries with total variance `σ²/fan_in` per
    /// (possibly complex) weight.
    Gaussian,
    Identity,
    /// Uniform on `[-1/√fan_in, 1/√fan_in]` per real parameter.
    Uniform,
}

impl FromStr for InitScheme {
    type Err = SsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(InitScheme::Gaussian),
            "identity" => Ok(InitScheme::Identity),
            "uniform" => Ok(InitScheme::Uniform),
            other => Err(SsbError::arg(format!("unknown init scheme '{other}'"))),
        }
    }
}

/// Internal-layer weights for one family.
#[derive(Clone, Debug, PartialEq)]
pub enum EquivariantWeights {
    /// Complex `N×N` matrix `re + i·im`.
    U1 { re: Array2<f64>, im: Array2<f64> },
    /// SO(2) layer held in its complex representation; see [`So2Pair`] for
    /// the real `(w, u)` form.
    So2 { re: Array2<f64>, im: Array2<f64> },
    /// Real `N×N` matrix `A`, applied as `A ⊗ I_k`.
    Ok { a: Array2<f64>, k: usize },
    /// Unconstrained real `(N·k)×(N·k)` matrix in component-major layout.
    Generic { m: Array2<f64>, k: usize },
}

/// The real two-matrix form of an SO(2) layer,
/// `W_{αa;βb} = w_{αβ} δ_{ab} + u_{αβ} ε_{ab}` with `ε_{12} = +1`.
#[derive(Clone, Debug, PartialEq)]
pub struct So2Pair {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
}

impl EquivariantWeights {
    pub fn family(&self) -> Family {
        match self {
            EquivariantWeights::U1 { .. } => Family::U1,
            EquivariantWeights::So2 { .. } => Family::So2,
            EquivariantWeights::Ok { .. } => Family::Ok,
            EquivariantWeights::Generic { .. } => Family::Generic,
        }
    }

    pub fn n_capsules(&self) -> usize {
        match self {
            EquivariantWeights::U1 { re, .. } | EquivariantWeights::So2 { re, .. } => re.nrows(),
            EquivariantWeights::Ok { a, .. } => a.nrows(),
            EquivariantWeights::Generic { m, k } => m.nrows() / k,
        }
    }

    pub fn capsule_dim(&self) -> usize {
        match self {
            EquivariantWeights::U1 { .. } | EquivariantWeights::So2 { .. } => 2,
            EquivariantWeights::Ok { k, .. } | EquivariantWeights::Generic { k, .. } => *k,
        }
    }

    /// Number of independent real parameters.
    pub fn param_count(&self) -> usize {
        match self {
            EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => re.len() + im.len(),
            EquivariantWeights::Ok { a, .. } => a.len(),
            EquivariantWeights::Generic { m, .. } => m.len(),
        }
    }

    /// The layer as a dense real `(N·k)×(N·k)` matrix acting on
    /// component-major coordinates.
    pub fn dense(&self) -> Array2<f64> {
        let n = self.n_capsules();
        match self {
            EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => {
                let mut d = Array2::zeros((2 * n, 2 * n));
                d.slice_mut(s![..n, ..n]).assign(re);
                d.slice_mut(s![..n, n..]).assign(&im.mapv(|v| -v));
                d.slice_mut(s![n.., ..n]).assign(im);
                d.slice_mut(s![n.., n..]).assign(re);
                d
            }
            EquivariantWeights::Ok { a, k } => {
                let mut d = Array2::zeros((n * k, n * k));
                for c in 0..*k {
                    d.slice_mut(s![c * n..(c + 1) * n, c * n..(c + 1) * n]).assign(a);
                }
                d
            }
            EquivariantWeights::Generic { m, .. } => m.clone(),
        }
    }

    /// Real `(w, u)` form of an SO(2) or U(1) layer.
    pub fn to_so2_pair(&self) -> Result<So2Pair> {
        match self {
            EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => Ok(So2Pair {
                w: re.clone(),
                u: im.mapv(|v| -v),
            }),
            _ => Err(SsbError::arg("only k=2 rotation layers have an SO(2) pair form")),
        }
    }

    pub fn from_so2_pair(pair: &So2Pair) -> Result<Self> {
        if pair.w.dim() != pair.u.dim() || pair.w.nrows() != pair.w.ncols() {
            return Err(SsbError::shape(
                "two equal square matrices",
                format!("{:?} and {:?}", pair.w.dim(), pair.u.dim()),
            ));
        }
        Ok(EquivariantWeights::So2 {
            re: pair.w.clone(),
            im: pair.u.mapv(|v| -v),
        })
    }

    /// Linear part only: `y = W x` on every row.
    pub fn apply_linear(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = self.n_capsules();
        let k = self.capsule_dim();
        if x.ncols() != n * k {
            return Err(SsbError::shape(
                format!("{} columns", n * k),
                format!("{} columns", x.ncols()),
            ));
        }
        Ok(match self {
            EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => {
                complex_matmul(x, re.view(), im.view())
            }
            EquivariantWeights::Ok { a, k } => block_matmul(x, a.view(), *k),
            EquivariantWeights::Generic { m, .. } => x.dot(&m.t()),
        })
    }
}

/// `[yr | yi] = [xr | xi] · (re + i im)ᵀ` row-wise.
pub(crate) fn complex_matmul(x: ArrayView2<f64>, re: ArrayView2<f64>, im: ArrayView2<f64>) -> Array2<f64> {
    let n = re.nrows();
    let m = re.ncols();
    let xr = x.slice(s![.., ..m]);
    let xi = x.slice(s![.., m..]);
    let mut y = Array2::zeros((x.nrows(), 2 * n));
    let yr = xr.dot(&re.t()) - xi.dot(&im.t());
    let yi = xr.dot(&im.t()) + xi.dot(&re.t());
    y.slice_mut(s![.., ..n]).assign(&yr);
    y.slice_mut(s![.., n..]).assign(&yi);
    y
}

/// Applies `A ⊗ I_k` to every row of a component-major state.
pub(crate) fn block_matmul(x: ArrayView2<f64>, a: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let n_out = a.nrows();
    let n_in = a.ncols();
    let mut y = Array2::zeros((x.nrows(), n_out * k));
    for c in 0..k {
        let xc = x.slice(s![.., c * n_in..(c + 1) * n_in]);
        y.slice_mut(s![.., c * n_out..(c + 1) * n_out])
            .assign(&xc.dot(&a.t()));
    }
    y
}

/// One internal layer: `W · φ(x)`.
pub fn apply_layer(w: &EquivariantWeights, x: &CapsuleState) -> Result<CapsuleState> {
    apply_layer_eps(w, x, DEFAULT_EPS)
}

pub fn apply_layer_eps(w: &EquivariantWeights, x: &CapsuleState, eps: f64) -> Result<CapsuleState> {
    if x.n_capsules() != w.n_capsules() || x.capsule_dim() != w.capsule_dim() {
        return Err(SsbError::shape(
            format!("N={} k={}", w.n_capsules(), w.capsule_dim()),
            format!("N={} k={}", x.n_capsules(), x.capsule_dim()),
        ));
    }
    let act = radial_forward(x.view(), x.n_capsules(), x.capsule_dim(), eps);
    let y = w.apply_linear(act.view())?;
    Ok(CapsuleState::from_parts(y, x.n_capsules(), x.capsule_dim()))
}

/// Draws internal-layer weights.
///
/// Gaussian entries have total variance `σ²/fan_in` per weight: complex
/// entries split it evenly between real and imaginary parts, O(k) uses
/// `fan_in = N`, generic uses `fan_in = N·k`. Under this normalization every
/// family shares the same order-parameter recursion.
pub fn init_weights(
    family: Family,
    n_capsules: usize,
    capsule_dim: usize,
    sigma_w: f64,
    scheme: InitScheme,
    rng: &mut RngStream,
) -> Result<EquivariantWeights> {
    if n_capsules == 0 || capsule_dim == 0 {
        return Err(SsbError::arg("layer sizes must be positive"));
    }
    if matches!(family, Family::U1 | Family::So2) && capsule_dim != 2 {
        return Err(SsbError::arg(format!(
            "{family} layers need capsule_dim 2, got {capsule_dim}"
        )));
    }
    if scheme == InitScheme::Gaussian && !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(SsbError::arg(format!("sigma_w must be positive, got {sigma_w}")));
    }
    let n = n_capsules;
    let k = capsule_dim;
    let fan_in = match family {
        Family::Generic => n * k,
        _ => n,
    } as f64;
    let dim = match family {
        Family::Generic => n * k,
        _ => n,
    };
    let mut draw = |per_param_var: f64| -> Array2<f64> {
        match scheme {
            InitScheme::Gaussian => {
                let sd = per_param_var.sqrt();
                Array2::from_shape_simple_fn((dim, dim), || sd * rng.normal())
            }
            InitScheme::Uniform => {
                let bound = 1.0 / fan_in.sqrt();
                Array2::from_shape_simple_fn((dim, dim), || rng.uniform_range(-bound, bound))
            }
            InitScheme::Identity => Array2::eye(dim),
        }
    };
    let var = sigma_w * sigma_w / fan_in;
    Ok(match family {
        Family::U1 | Family::So2 => {
            let re = draw(var / 2.0);
            let im = if scheme == InitScheme::Identity {
                Array2::zeros((n, n))
            } else {
                draw(var / 2.0)
            };
            if family == Family::U1 {
                EquivariantWeights::U1 { re, im }
            } else {
                EquivariantWeights::So2 { re, im }
            }
        }
        Family::Ok => EquivariantWeights::Ok { a: draw(var), k },
        Family::Generic => EquivariantWeights::Generic { m: draw(var), k },
    })
}
