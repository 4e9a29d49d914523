//! Empirical measurements on ensembles of randomly initialized networks.
//!
//! Covariances use the convention `C_ab = (1/N) Σⱼ φ(zⱼ,a) · conj(φ(zⱼ,b))`,
//! so an input pair with `b = e^{iβ} a` has measured phase `φ = −β`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{wirtinger, Tape, Var};
use crate::error::{Result, SsbError};
use crate::layers::{
    apply_layer_eps, init_weights, radial_forward, CapsuleState, EquivariantWeights, Family, InitScheme,
    Network, DEFAULT_EPS,
};
use crate::meanfield::{input_variance_for, wrap_phase, CovarianceState};
use crate::num::{effective_rank, Complex, RngStream};

/// Below this magnitude `C_ab` is subnormal-adjacent and its phase is not
/// resolvable to working precision.
pub const PHASE_FLOOR: f64 = 1e-290;

/// Number of trailing layers averaged for the empirical `c⋆`.
pub const TAIL_LAYERS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_networks: usize,
    pub depth: usize,
    pub n_capsules: usize,
    pub capsule_dim: usize,
    pub family: Family,
    pub sigma_w: f64,
    pub scheme: InitScheme,
    /// Target activated second moment of the input, `c⁰`.
    pub input_c0: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn u1(n_networks: usize, depth: usize, n_capsules: usize, sigma_w: f64, seed: u64) -> Self {
        EnsembleConfig {
            n_networks,
            depth,
            n_capsules,
            capsule_dim: 2,
            family: Family::U1,
            sigma_w,
            scheme: InitScheme::Gaussian,
            input_c0: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_networks == 0 || self.n_capsules == 0 || self.capsule_dim == 0 {
            return Err(SsbError::arg("ensemble counts must be positive"));
        }
        if !(0.0..1.0).contains(&self.input_c0) {
            return Err(SsbError::arg("input c0 must lie in [0, 1)"));
        }
        Ok(())
    }

    /// The `i`-th network of the ensemble and the stream its inputs are drawn from.
    pub fn network(&self, i: usize) -> Result<(Network, RngStream)> {
        let mut rng = self.weight_rng(i);
        let net = Network::random(
            self.family,
            self.n_capsules,
            self.capsule_dim,
            self.depth,
            self.sigma_w,
            self.scheme,
            &mut rng,
        )?;
        Ok((net, self.input_rng(i)))
    }

    fn weight_rng(&self, i: usize) -> RngStream {
        RngStream::new(self.seed).fork(i as u64)
    }

    /// Input stream of network `i`, separate from its weights so that layers
    /// can be drawn lazily.
    pub fn input_rng(&self, i: usize) -> RngStream {
        self.weight_rng(i).fork(0)
    }

    /// Same pre-activations as `network(i)?.0.trace(x)`, but each layer is
    /// drawn just before it is applied and dropped afterwards, so wide
    /// ensembles never hold more than one weight matrix.
    pub fn stream_trace<T>(
        &self,
        i: usize,
        x: &CapsuleState,
        mut visit: impl FnMut(&CapsuleState) -> Result<T>,
    ) -> Result<Vec<T>> {
        let mut rng = self.weight_rng(i);
        let mut out = Vec::with_capacity(self.depth + 1);
        out.push(visit(x)?);
        let mut z = x.clone();
        for _ in 0..self.depth {
            let w = init_weights(
                self.family,
                self.n_capsules,
                self.capsule_dim,
                self.sigma_w,
                self.scheme,
                &mut rng,
            )?;
            z = apply_layer_eps(&w, &z, DEFAULT_EPS)?;
            out.push(visit(&z)?);
        }
        Ok(out)
    }

    /// `batch` inputs with i.i.d. Gaussian capsules scaled so that the
    /// expected activated second moment equals `input_c0`.
    pub fn sample_inputs(&self, batch: usize, rng: &mut RngStream) -> Result<CapsuleState> {
        gaussian_inputs(batch, self.n_capsules, self.capsule_dim, self.input_c0, rng)
    }
}

/// Capsules with total variance `v` split evenly over `k` components, `v`
/// chosen so that `E|φ(z)|² = c0` for `k = 2`.
pub fn gaussian_inputs(
    batch: usize,
    n: usize,
    k: usize,
    c0: f64,
    rng: &mut RngStream,
) -> Result<CapsuleState> {
    let v = input_variance_for(c0)?;
    let sd = (v / k as f64).sqrt();
    let data = Array2::from_shape_simple_fn((batch, n * k), || sd * rng.normal());
    CapsuleState::new(data, n, k)
}

/// Per-layer mean and standard error of an ensemble statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Profile {
    fn from_samples(samples: &[Vec<f64>]) -> Self {
        let layers = samples[0].len();
        let m = samples.len() as f64;
        let mut mean = vec![0.0; layers];
        let mut stderr = vec![0.0; layers];
        for l in 0..layers {
            let mu = samples.iter().map(|s| s[l]).sum::<f64>() / m;
            mean[l] = mu;
            if samples.len() > 1 {
                let var = samples.iter().map(|s| (s[l] - mu).powi(2)).sum::<f64>() / (m - 1.0);
                stderr[l] = (var / m).sqrt();
            }
        }
        Profile { mean, stderr }
    }

    /// Average of the last `TAIL_LAYERS` layers (or all, if fewer).
    pub fn tail_mean(&self) -> f64 {
        let n = self.mean.len().min(TAIL_LAYERS);
        self.mean[self.mean.len() - n..].iter().sum::<f64>() / n as f64
    }

    pub fn tail_stderr(&self) -> f64 {
        let n = self.stderr.len().min(TAIL_LAYERS);
        self.stderr[self.stderr.len() - n..].iter().sum::<f64>() / n as f64
    }

    pub fn to_csv(&self, name: &str) -> String {
        let mut out = format!("layer,{name}_mean,{name}_stderr\n");
        for (l, (m, s)) in self.mean.iter().zip(&self.stderr).enumerate() {
            out.push_str(&format!("{l},{m:.16e},{s:.16e}\n"));
        }
        out
    }
}

/// `(1/N) Σ |φ(v_α)|²` for each row of a pre-activation state.
pub fn activated_order_parameter(z: &CapsuleState, eps: f64) -> Vec<f64> {
    let a = radial_forward(z.view(), z.n_capsules(), z.capsule_dim(), eps);
    let n = z.n_capsules() as f64;
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() / n)
        .collect()
}

/// Empirical `cˡ`, one input per network, averaged over the ensemble.
pub fn measure_c_profile(cfg: &EnsembleConfig) -> Result<Profile> {
    cfg.validate()?;
    let samples = (0..cfg.n_networks)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let x = cfg.sample_inputs(1, &mut cfg.input_rng(i))?;
            cfg.stream_trace(i, &x, |z| Ok(activated_order_parameter(z, DEFAULT_EPS)[0]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile::from_samples(&samples))
}

/// How the second input of a pair is generated from the first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairSpec {
    Identical,
    /// `b = e^{iβ} a`.
    Rotated {
        beta: f64,
    },
    /// `b = ρ a + √(1−ρ²) n` with fresh noise `n` of the same distribution.
    Correlated {
        rho: f64,
    },
    Independent,
}

/// Ensemble-averaged two-input statistics per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProfile {
    /// `(c, Δ, φ)` with `c = (c_aa + c_bb)/2` and `Δ e^{iφ}` the
    /// ensemble mean of `C_ab`.
    pub states: Vec<CovarianceState>,
    /// Per-network phase of `C_ab`, layer-major (`phases[l][i]`); NaN where
    /// that network's `C_ab` has underflowed below [`PHASE_FLOOR`].
    pub phases: Vec<Vec<f64>>,
}

impl PairProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,c_mean,delta,phi\n");
        for (l, s) in self.states.iter().enumerate() {
            out.push_str(&format!("{l},{:.16e},{:.16e},{:.16e}\n", s.c, s.delta, s.phi));
        }
        out
    }
}

/// `C_ab` for rows 0 and 1 of a `k = 2` pre-activation state.
pub fn pair_covariance(z: &CapsuleState, eps: f64) -> Result<(f64, f64, Complex)> {
    if z.capsule_dim() != 2 || z.batch() != 2 {
        return Err(SsbError::arg("pair covariance needs two rows of k = 2 capsules"));
    }
    let n = z.n_capsules();
    let a = radial_forward(z.view(), n, 2, eps);
    let mut caa = 0.0;
    let mut cbb = 0.0;
    let mut cab = Complex::new(0.0, 0.0);
    for j in 0..n {
        let za = Complex::new(a[[0, j]], a[[0, n + j]]);
        let zb = Complex::new(a[[1, j]], a[[1, n + j]]);
        caa += za.norm_sqr();
        cbb += zb.norm_sqr();
        cab += za * zb.conj();
    }
    let nf = n as f64;
    Ok((caa / nf, cbb / nf, cab / nf))
}

pub fn make_pair(cfg: &EnsembleConfig, pair: PairSpec, rng: &mut RngStream) -> Result<CapsuleState> {
    let n = cfg.n_capsules;
    let a = cfg.sample_inputs(1, rng)?;
    let a_row = a.row(0).to_owned();
    let b_row = match pair {
        PairSpec::Identical => a_row.clone(),
        PairSpec::Rotated { beta } => {
            let (s, c) = beta.sin_cos();
            let mut b = a_row.clone();
            for j in 0..n {
                let (re, im) = (a_row[j], a_row[n + j]);
                b[j] = c * re - s * im;
                b[n + j] = s * re + c * im;
            }
            b
        }
        PairSpec::Correlated { rho } => {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(SsbError::arg(format!("correlation {rho} outside [-1, 1]")));
            }
            let noise = cfg.sample_inputs(1, rng)?;
            let w = (1.0 - rho * rho).sqrt();
            &a_row * rho + &(noise.row(0).to_owned() * w)
        }
        PairSpec::Independent => cfg.sample_inputs(1, rng)?.row(0).to_owned(),
    };
    let mut data = Array2::zeros((2, 2 * n));
    data.row_mut(0).assign(&a_row);
    data.row_mut(1).assign(&b_row);
    CapsuleState::new(data, n, 2)
}

/// Propagates an input pair through every network and averages `C_ab`.
pub fn measure_two_input_cov(cfg: &EnsembleConfig, pair: PairSpec) -> Result<PairProfile> {
    cfg.validate()?;
    if cfg.capsule_dim != 2 {
        return Err(SsbError::arg("two-input covariance is defined for k = 2"));
    }
    let per_net = (0..cfg.n_networks)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, Complex)>> {
            let x = make_pair(cfg, pair, &mut cfg.input_rng(i))?;
            cfg.stream_trace(i, &x, |z| {
                let (caa, cbb, cab) = pair_covariance(z, DEFAULT_EPS)?;
                Ok((0.5 * (caa + cbb), cab))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let layers = cfg.depth + 1;
    let m = cfg.n_networks as f64;
    let mut states = Vec::with_capacity(layers);
    let mut phases = Vec::with_capacity(layers);
    for l in 0..layers {
        let c = per_net.iter().map(|v| v[l].0).sum::<f64>() / m;
        let cab = per_net.iter().fold(Complex::new(0.0, 0.0), |acc, v| acc + v[l].1) / m;
        states.push(CovarianceState {
            c,
            delta: cab.norm(),
            phi: wrap_phase(cab.arg()),
        });
        phases.push(
            per_net
                .iter()
                .map(|v| {
                    if v[l].1.norm() < PHASE_FLOOR {
                        f64::NAN
                    } else {
                        wrap_phase(v[l].1.arg())
                    }
                })
                .collect(),
        );
    }
    Ok(PairProfile { states, phases })
}

/// Fitted decay depth `ξ` from `ln Δˡ ≈ a − l/ξ` over `layers`.
pub fn fit_decay_depth(deltas: &[f64], layers: std::ops::RangeInclusive<usize>) -> Result<f64> {
    let pts: Vec<(f64, f64)> = layers
        .filter(|&l| l < deltas.len())
        .map(|l| (l as f64, deltas[l]))
        .collect();
    if pts.len() < 2 || pts.iter().any(|&(_, d)| !(d > 0.0)) {
        return Err(SsbError::Numeric(
            "need at least two positive points to fit".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Err(SsbError::Numeric(format!("no decay (slope {slope})")));
    }
    Ok(-1.0 / slope)
}

/// The protected Jacobian component of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianReport {
    /// `Jᵢ = Σⱼ (∂zᴸᵢ/∂z⁰ⱼ z⁰ⱼ − ∂zᴸᵢ/∂z̄⁰ⱼ z̄⁰ⱼ)`.
    pub j: Vec<Complex>,
    /// `(1/N) Σᵢ |Jᵢ|²`.
    pub d_l: f64,
    pub z_l: CapsuleState,
    /// `maxᵢ |Jᵢ − zᴸᵢ|`, present for equivariant bulks only.
    pub identity_error: Option<f64>,
}

/// Records `net` on a tape with a differentiable input; returns the input
/// node and the pre-activation node of every layer.
pub fn record_network(tape: &mut Tape, net: &Network, x: &CapsuleState) -> Result<(Var, Vec<Var>)> {
    let n = net.n_capsules();
    let k = net.capsule_dim();
    let input = tape.input(x.data().clone());
    let mut outs = vec![input];
    let mut z = input;
    for w in net.layers() {
        let a = tape.radial(z, n, k, net.eps())?;
        z = match w {
            EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => {
                let r = tape.constant(re.clone());
                let i = tape.constant(im.clone());
                tape.complex_matmul(a, r, i)?
            }
            EquivariantWeights::Ok { a: m, k } => {
                let mv = tape.constant(m.clone());
                tape.block_matmul(a, mv, *k)?
            }
            EquivariantWeights::Generic { m, .. } => {
                let mv = tape.constant(m.clone());
                tape.linear(a, mv)?
            }
        };
        outs.push(z);
    }
    Ok((input, outs))
}

fn contract(tape: &Tape, input: Var, out: Var, x: &[Complex], equivariant: bool) -> Result<JacobianReport> {
    let jac = tape.jacobian_rows(out, input)?;
    let w = wirtinger(&jac)?;
    let n = x.len();
    let j: Vec<Complex> = (0..n)
        .map(|i| {
            (0..n).fold(Complex::new(0.0, 0.0), |acc, jj| {
                acc + w.dz[[i, jj]] * x[jj] - w.dzbar[[i, jj]] * x[jj].conj()
            })
        })
        .collect();
    let d_l = j.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    let z_l = CapsuleState::new(tape.value(out).clone(), n, 2)?;
    let identity_error = if equivariant {
        let z = z_l.complex_row(0)?;
        Some(j.iter().zip(&z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(JacobianReport {
        j,
        d_l,
        z_l,
        identity_error,
    })
}

/// Contracts the full Wirtinger Jacobian of the network output with the
/// input. For a U(1)-equivariant bulk this equals the output itself.
pub fn protected_jacobian(net: &Network, x: &CapsuleState) -> Result<JacobianReport> {
    Ok(protected_jacobian_profile(net, x, &[net.depth()])?.remove(0))
}

/// [`protected_jacobian`] evaluated at several depths of the same network.
pub fn protected_jacobian_profile(
    net: &Network,
    x: &CapsuleState,
    depths: &[usize],
) -> Result<Vec<JacobianReport>> {
    if net.capsule_dim() != 2 || x.batch() != 1 {
        return Err(SsbError::arg(
            "protected Jacobian needs one row of k = 2 capsules",
        ));
    }
    if x.data().iter().all(|&v| v == 0.0) {
        return Err(SsbError::Degenerate(
            "protected Jacobian needs a nonzero input".into(),
        ));
    }
    if let Some(&d) = depths.iter().find(|&&d| d > net.depth()) {
        return Err(SsbError::arg(format!(
            "depth {d} beyond network depth {}",
            net.depth()
        )));
    }
    let equivariant = net
        .layers()
        .iter()
        .all(|w| matches!(w.family(), Family::U1 | Family::So2));
    let mut tape = Tape::new();
    let (input, outs) = record_network(&mut tape, net, x)?;
    let xc = x.complex_row(0)?;
    depths
        .iter()
        .map(|&d| contract(&tape, input, outs[d], &xc, equivariant))
        .collect()
}

/// Ensemble mean of `dᴸ` at the requested depths, one input per network.
pub fn measure_d_profile(cfg: &EnsembleConfig, depths: &[usize]) -> Result<Profile> {
    cfg.validate()?;
    let samples = (0..cfg.n_networks)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let (net, mut rng) = cfg.network(i)?;
            let x = cfg.sample_inputs(1, &mut rng)?;
            Ok(protected_jacobian_profile(&net, &x, depths)?
                .iter()
                .map(|r| r.d_l)
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile::from_samples(&samples))
}

/// Effective rank of the `batch × (N·k)` representation at each layer.
pub fn rank_profile(net: &Network, batch: &CapsuleState) -> Result<Vec<f64>> {
    if batch.batch() < 2 {
        return Err(SsbError::arg("rank profile needs more than one input"));
    }
    net.trace(batch)?
        .iter()
        .map(|z| match effective_rank(z.view()) {
            // a layer that underflowed to exactly zero has no surviving direction
            Err(SsbError::Degenerate(_)) => Ok(0.0),
            other => other,
        })
        .collect()
}
