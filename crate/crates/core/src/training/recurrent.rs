use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::autodiff::{ConvGrid, Tape, Var};
use crate::error::{Result, SsbError};
use crate::layers::{CapsuleState, DEFAULT_EPS};
use crate::num::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    RnnGeneric,
    RnnU1,
    RnnOk,
    GruGeneric,
    GruU1,
    Conv2dU1,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::RnnGeneric => "rnn_generic",
            CellKind::RnnU1 => "rnn_u1",
            CellKind::RnnOk => "rnn_ok",
            CellKind::GruGeneric => "gru_generic",
            CellKind::GruU1 => "gru_u1",
            CellKind::Conv2dU1 => "conv2d_u1",
        }
    }

    pub fn is_equivariant(self) -> bool {
        !matches!(self, CellKind::RnnGeneric | CellKind::GruGeneric)
    }

    pub fn is_gru(self) -> bool {
        matches!(self, CellKind::GruGeneric | CellKind::GruU1)
    }
}

impl std::str::FromStr for CellKind {
    type Err = SsbError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rnn_generic" => CellKind::RnnGeneric,
            "rnn_u1" => CellKind::RnnU1,
            "rnn_ok" => CellKind::RnnOk,
            "gru_generic" => CellKind::GruGeneric,
            "gru_u1" => CellKind::GruU1,
            "conv2d_u1" => CellKind::Conv2dU1,
            _ => return Err(SsbError::arg(format!("unknown cell kind {s}"))),
        })
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pointwise activation of the baseline Elman cell; equivariant cells always
/// use the radial nonlinearity and the baseline GRU candidate is ReLU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = SsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(SsbError::arg(format!("unknown activation {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecInit {
    Identity,
    Random,
}

impl std::str::FromStr for RecInit {
    type Err = SsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(RecInit::Identity),
            "random" => Ok(RecInit::Random),
            _ => Err(SsbError::arg(format!("unknown recurrent init {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputInit {
    /// Uniform on `±1/√N`.
    Standard,
    /// Gaussian with variance `0.001`.
    LowVariance,
}

impl std::str::FromStr for InputInit {
    type Err = SsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(InputInit::Standard),
            "low_variance" | "low-var" => Ok(InputInit::LowVariance),
            _ => Err(SsbError::arg(format!("unknown input init {s}"))),
        }
    }
}

pub const LOW_VARIANCE: f64 = 0.001;
pub const DEFAULT_GATE_BIAS_Z: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentCellSpec {
    pub kind: CellKind,
    /// Hidden units (generic) or capsules (equivariant); for the conv cell,
    /// `channels·height·width`.
    pub n: usize,
    pub k: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Option<Activation>,
    pub gate_bias_z: Option<f64>,
    pub grid: Option<ConvGrid>,
    pub rec_init: RecInit,
    pub input_init: InputInit,
    /// Input index whose read-in column is zeroed and frozen.
    pub frozen_input: Option<usize>,
    pub eps: f64,
}

impl RecurrentCellSpec {
    /// Defaults for `kind` with `n` hidden units or capsules.
    pub fn new(kind: CellKind, n: usize, input_dim: usize, output_dim: usize) -> Self {
        RecurrentCellSpec {
            kind,
            n,
            k: match kind {
                CellKind::RnnGeneric | CellKind::GruGeneric => 1,
                CellKind::RnnOk => 4,
                _ => 2,
            },
            input_dim,
            output_dim,
            activation: (kind == CellKind::RnnGeneric).then_some(Activation::Tanh),
            gate_bias_z: (kind == CellKind::GruU1).then_some(DEFAULT_GATE_BIAS_Z),
            grid: None,
            rec_init: RecInit::Identity,
            input_init: InputInit::Standard,
            frozen_input: None,
            eps: DEFAULT_EPS,
        }
    }

    pub fn conv(grid: ConvGrid, input_dim: usize, output_dim: usize) -> Self {
        let mut s = Self::new(CellKind::Conv2dU1, grid.sites(), input_dim, output_dim);
        s.grid = Some(grid);
        s
    }

    pub fn width(&self) -> usize {
        self.n * self.k
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SsbError::arg(format!("{}: {m}", self.kind)));
        if self.n == 0 || self.input_dim == 0 || self.output_dim == 0 || self.k == 0 {
            return bad("dimensions must be positive");
        }
        match self.kind {
            CellKind::RnnGeneric | CellKind::GruGeneric if self.k != 1 => return bad("k must be 1"),
            CellKind::RnnU1 | CellKind::GruU1 | CellKind::Conv2dU1 if self.k != 2 => {
                return bad("k must be 2")
            }
            _ => {}
        }
        if self.activation.is_some() != (self.kind == CellKind::RnnGeneric) {
            return bad("an activation choice applies to rnn_generic only");
        }
        if self.gate_bias_z.is_some() && !self.kind.is_gru() {
            return bad("gate bias applies to GRU kinds only");
        }
        match (self.kind, self.grid) {
            (CellKind::Conv2dU1, Some(g)) if g.sites() == self.n && g.height > 0 && g.width > 0 => {}
            (CellKind::Conv2dU1, _) => return bad("needs a grid with channels·height·width = n"),
            (_, Some(_)) => return bad("grid applies to conv2d_u1 only"),
            _ => {}
        }
        if let Some(c) = self.frozen_input {
            if c >= self.input_dim {
                return bad("frozen input index out of range");
            }
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        Ok(())
    }
}

/// A recurrent cell plus an affine readout of the flattened hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentModel {
    pub spec: RecurrentCellSpec,
    pub params: ParamStore,
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-bound, bound))
}

/// Names of input-facing matrices per kind.
fn read_in_names(kind: CellKind) -> &'static [&'static str] {
    match kind {
        CellKind::RnnGeneric => &["w_x"],
        CellKind::GruGeneric => &["w_xr", "w_xz", "w_xn"],
        CellKind::GruU1 => &["e", "w_xr", "w_xz"],
        _ => &["e"],
    }
}

impl RecurrentModel {
    pub fn new(spec: RecurrentCellSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let (n, d, w) = (spec.n, spec.input_dim, spec.width());
        let bound = 1.0 / (n as f64).sqrt();
        let mut p = ParamStore::new();
        let read_in = |rows: usize, rng: &mut RngStream| match spec.input_init {
            InputInit::Standard => uniform(rows, d, bound, rng),
            InputInit::LowVariance => {
                let sd = LOW_VARIANCE.sqrt();
                Array2::from_shape_simple_fn((rows, d), || sd * rng.normal())
            }
        };
        let square = |rng: &mut RngStream, bound: f64| match spec.rec_init {
            RecInit::Identity => Array2::eye(n),
            RecInit::Random => uniform(n, n, bound, rng),
        };
        match spec.kind {
            CellKind::RnnGeneric => {
                p.add("w_x", read_in(n, rng));
                p.add("w_h", square(rng, bound));
                p.add("b", uniform(1, n, bound, rng));
            }
            CellKind::RnnU1 => {
                p.add("e", read_in(2 * n, rng));
                p.add("w_re", square(rng, bound));
                p.add("w_im", Self::imag_part(spec.rec_init, n, bound, rng));
            }
            CellKind::RnnOk => {
                p.add("e", read_in(w, rng));
                p.add("a", square(rng, bound));
            }
            CellKind::GruGeneric => {
                for g in ["w_xr", "w_xz", "w_xn"] {
                    p.add(g, read_in(n, rng));
                }
                for g in ["w_hr", "w_hz", "w_hn"] {
                    p.add(g, square(rng, bound));
                }
                p.add("b_r", uniform(1, n, bound, rng));
                p.add(
                    "b_z",
                    match spec.gate_bias_z {
                        Some(b) => Array2::from_elem((1, n), b),
                        None => uniform(1, n, bound, rng),
                    },
                );
                p.add("b_xn", uniform(1, n, bound, rng));
                p.add("b_hn", uniform(1, n, bound, rng));
            }
            CellKind::GruU1 => {
                p.add("e", read_in(2 * n, rng));
                p.add("w_re", square(rng, bound));
                p.add("w_im", Self::imag_part(spec.rec_init, n, bound, rng));
                p.add("w_xr", read_in(n, rng));
                p.add("w_xz", read_in(n, rng));
                p.add("w_hr", square(rng, bound));
                p.add("w_hz", square(rng, bound));
                p.add("b_r", Array2::zeros((1, n)));
                p.add(
                    "b_z",
                    Array2::from_elem((1, n), spec.gate_bias_z.unwrap_or(DEFAULT_GATE_BIAS_Z)),
                );
            }
            CellKind::Conv2dU1 => {
                let c = spec.grid.expect("validated").channels;
                p.add("e", read_in(2 * n, rng));
                let kb = 1.0 / ((9 * c) as f64).sqrt();
                let (re, im) = match spec.rec_init {
                    RecInit::Identity => {
                        let mut re = Array2::zeros((c, 9 * c));
                        for ch in 0..c {
                            re[[ch, ch * 9 + 4]] = 1.0;
                        }
                        (re, Array2::zeros((c, 9 * c)))
                    }
                    RecInit::Random => (uniform(c, 9 * c, kb, rng), uniform(c, 9 * c, kb, rng)),
                };
                p.add("k_re", re);
                p.add("k_im", im);
            }
        }
        let rb = 1.0 / (w as f64).sqrt();
        p.add("readout_w", uniform(spec.output_dim, w, rb, rng));
        p.add("readout_b", uniform(1, spec.output_dim, rb, rng));
        if let Some(col) = spec.frozen_input {
            for name in read_in_names(spec.kind) {
                let id = p.id(name)?;
                p.freeze_column(id, col)?;
            }
        }
        Ok(RecurrentModel { spec, params: p })
    }

    fn imag_part(init: RecInit, n: usize, bound: f64, rng: &mut RngStream) -> Array2<f64> {
        match init {
            RecInit::Identity => Array2::zeros((n, n)),
            RecInit::Random => uniform(n, n, bound, rng),
        }
    }

    fn v(&self, vars: &[Var], name: &str) -> Result<Var> {
        Ok(vars[self.params.id(name)?])
    }

    /// `hᵗ` from `hᵗ⁻¹` and `xᵗ` on a tape.
    pub fn step_tape(&self, tape: &mut Tape, vars: &[Var], h: Var, x: Var) -> Result<Var> {
        let s = &self.spec;
        let (n, k, eps) = (s.n, s.k, s.eps);
        match s.kind {
            CellKind::RnnGeneric => {
                let a = tape.linear(x, self.v(vars, "w_x")?)?;
                let b = tape.linear(h, self.v(vars, "w_h")?)?;
                let pre = tape.add(a, b)?;
                let pre = tape.add_bias(pre, self.v(vars, "b")?)?;
                Ok(match s.activation.expect("validated") {
                    Activation::Tanh => tape.tanh(pre),
                    Activation::Relu => tape.relu(pre),
                })
            }
            CellKind::RnnU1 => {
                let u = tape.linear(x, self.v(vars, "e")?)?;
                let wh = tape.complex_matmul(h, self.v(vars, "w_re")?, self.v(vars, "w_im")?)?;
                let pre = tape.add(u, wh)?;
                tape.radial(pre, n, k, eps)
            }
            CellKind::RnnOk => {
                let u = tape.linear(x, self.v(vars, "e")?)?;
                let ah = tape.block_matmul(h, self.v(vars, "a")?, k)?;
                let pre = tape.add(u, ah)?;
                tape.radial(pre, n, k, eps)
            }
            CellKind::GruGeneric => {
                let gate = |tape: &mut Tape, wx: &str, wh: &str, b: &str| -> Result<Var> {
                    let a = tape.linear(x, self.v(vars, wx)?)?;
                    let c = tape.linear(h, self.v(vars, wh)?)?;
                    let pre = tape.add(a, c)?;
                    let pre = tape.add_bias(pre, self.v(vars, b)?)?;
                    Ok(tape.sigmoid(pre))
                };
                let r = gate(tape, "w_xr", "w_hr", "b_r")?;
                let z = gate(tape, "w_xz", "w_hz", "b_z")?;
                let xn = tape.linear(x, self.v(vars, "w_xn")?)?;
                let xn = tape.add_bias(xn, self.v(vars, "b_xn")?)?;
                let hn = tape.linear(h, self.v(vars, "w_hn")?)?;
                let hn = tape.add_bias(hn, self.v(vars, "b_hn")?)?;
                let rh = tape.mul(r, hn)?;
                let pre = tape.add(xn, rh)?;
                let cand = tape.relu(pre);
                let keep = tape.mul(z, h)?;
                let one_minus = tape.affine(z, -1.0, 1.0);
                let fresh = tape.mul(one_minus, cand)?;
                tape.add(keep, fresh)
            }
            CellKind::GruU1 => {
                let mag = tape.magnitude(h, n, k)?;
                let gate = |tape: &mut Tape, wx: &str, wh: &str, b: &str| -> Result<Var> {
                    let a = tape.linear(x, self.v(vars, wx)?)?;
                    let c = tape.linear(mag, self.v(vars, wh)?)?;
                    let pre = tape.add(a, c)?;
                    let pre = tape.add_bias(pre, self.v(vars, b)?)?;
                    Ok(tape.sigmoid(pre))
                };
                let r = gate(tape, "w_xr", "w_hr", "b_r")?;
                let z = gate(tape, "w_xz", "w_hz", "b_z")?;
                let rh = tape.capsule_scale(r, h, n, k)?;
                let u = tape.linear(x, self.v(vars, "e")?)?;
                let wh = tape.complex_matmul(rh, self.v(vars, "w_re")?, self.v(vars, "w_im")?)?;
                let pre = tape.add(u, wh)?;
                let cand = tape.radial(pre, n, k, eps)?;
                let keep = tape.capsule_scale(z, h, n, k)?;
                let one_minus = tape.affine(z, -1.0, 1.0);
                let fresh = tape.capsule_scale(one_minus, cand, n, k)?;
                tape.add(keep, fresh)
            }
            CellKind::Conv2dU1 => {
                let u = tape.linear(x, self.v(vars, "e")?)?;
                let grid = s.grid.expect("validated");
                let kh = tape.complex_conv(h, self.v(vars, "k_re")?, self.v(vars, "k_im")?, grid)?;
                let pre = tape.add(u, kh)?;
                tape.radial(pre, n, k, eps)
            }
        }
    }

    pub fn readout_tape(&self, tape: &mut Tape, vars: &[Var], h: Var) -> Result<Var> {
        let y = tape.linear(h, self.v(vars, "readout_w")?)?;
        tape.add_bias(y, self.v(vars, "readout_b")?)
    }

    fn check_step(&self, h: &CapsuleState, x: &Array2<f64>) -> Result<()> {
        let s = &self.spec;
        if h.n_capsules() != s.n || h.capsule_dim() != s.k {
            return Err(SsbError::shape(
                format!("N={} k={}", s.n, s.k),
                format!("N={} k={}", h.n_capsules(), h.capsule_dim()),
            ));
        }
        if x.dim() != (h.batch(), s.input_dim) {
            return Err(SsbError::shape(
                format!("{}x{}", h.batch(), s.input_dim),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        Ok(())
    }

    /// One step without recording gradients.
    pub fn step(&self, h_prev: &CapsuleState, x: &Array2<f64>) -> Result<CapsuleState> {
        self.check_step(h_prev, x)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect();
        let h = tape.constant(h_prev.data().clone());
        let xv = tape.constant(x.clone());
        let out = self.step_tape(&mut tape, &vars, h, xv)?;
        CapsuleState::new(tape.value(out).clone(), self.spec.n, self.spec.k)
    }

    pub fn zero_state(&self, batch: usize) -> CapsuleState {
        CapsuleState::zeros(batch, self.spec.n, self.spec.k)
    }

    /// `h¹ … hᵀ` from `h⁰ = 0`.
    pub fn rollout(&self, inputs: &[Array2<f64>]) -> Result<Vec<CapsuleState>> {
        let batch = inputs.first().map_or(1, |x| x.nrows());
        let mut h = self.zero_state(batch);
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            h = self.step(&h, x)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    pub fn readout(&self, h: &CapsuleState) -> Result<Array2<f64>> {
        let rw = self.params.value(self.params.id("readout_w")?);
        let rb = self.params.value(self.params.id("readout_b")?);
        Ok(h.data().dot(&rw.t()) + &rb.row(0))
    }
}

/// Reset gate, update gate and candidate of a U(1) GRU step.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParts {
    pub r: Array2<f64>,
    pub z: Array2<f64>,
    pub candidate: CapsuleState,
}

impl RecurrentModel {
    pub fn gru_u1_parts(&self, h_prev: &CapsuleState, x: &Array2<f64>) -> Result<GruParts> {
        if self.spec.kind != CellKind::GruU1 {
            return Err(SsbError::arg("gate decomposition is defined for gru_u1"));
        }
        self.check_step(h_prev, x)?;
        let (n, k) = (self.spec.n, self.spec.k);
        let p = |name: &str| -> Result<&Array2<f64>> { Ok(self.params.value(self.params.id(name)?)) };
        let mag = h_prev.magnitudes();
        let gate = |wx: &str, wh: &str, b: &str| -> Result<Array2<f64>> {
            let pre = x.dot(&p(wx)?.t()) + mag.dot(&p(wh)?.t()) + &p(b)?.row(0);
            Ok(pre.mapv(crate::autodiff::sigmoid))
        };
        let r = gate("w_xr", "w_hr", "b_r")?;
        let z = gate("w_xz", "w_hz", "b_z")?;
        let rh = Array2::from_shape_fn(h_prev.data().raw_dim(), |(b, c)| {
            r[[b, c % n]] * h_prev.data()[[b, c]]
        });
        let pre = x.dot(&p("e")?.t())
            + crate::layers::complex_matmul(rh.view(), p("w_re")?.view(), p("w_im")?.view());
        let candidate = crate::layers::radial_nonlinearity(&CapsuleState::new(pre, n, k)?, self.spec.eps);
        Ok(GruParts { r, z, candidate })
    }
}
