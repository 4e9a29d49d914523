use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::autodiff::{GradientSet, Tape, Var};
use crate::error::{Result, SsbError};
use crate::layers::{
    init_weights, radial_nonlinearity, CapsuleState, EquivariantWeights, Family, InitScheme, Network,
    DEFAULT_EPS,
};
use crate::num::RngStream;

/// Feedforward classifier: a general affine embedding into capsule space,
/// `depth` internal layers `z ↦ W φ(z)`, and a general affine readout of
/// `φ(zᴸ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub family: Family,
    pub n_capsules: usize,
    pub capsule_dim: usize,
    pub depth: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub sigma_w: f64,
    pub scheme: InitScheme,
    pub eps: f64,
}

impl NetworkSpec {
    pub fn new(
        family: Family,
        n_capsules: usize,
        capsule_dim: usize,
        depth: usize,
        input_dim: usize,
        output_dim: usize,
        sigma_w: f64,
    ) -> Self {
        NetworkSpec {
            family,
            n_capsules,
            capsule_dim,
            depth,
            input_dim,
            output_dim,
            sigma_w,
            scheme: InitScheme::Gaussian,
            eps: DEFAULT_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.n_capsules * self.capsule_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_capsules == 0 || self.capsule_dim == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(SsbError::arg("network dimensions must be positive"));
        }
        if matches!(self.family, Family::U1 | Family::So2) && self.capsule_dim != 2 {
            return Err(SsbError::arg(format!("{} needs capsule_dim 2", self.family)));
        }
        if !(self.eps > 0.0) {
            return Err(SsbError::arg("eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BulkIds {
    Complex { re: usize, im: usize },
    Block { a: usize },
    Dense { m: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub spec: NetworkSpec,
    pub params: ParamStore,
    bulk: Vec<BulkIds>,
}

const EMBED_W: usize = 0;
const EMBED_B: usize = 1;

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-bound, bound))
}

impl Classifier {
    pub fn new(spec: NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let (w, d, o) = (spec.width(), spec.input_dim, spec.output_dim);
        let mut params = ParamStore::new();
        let bin = 1.0 / (d as f64).sqrt();
        params.add("embed_w", uniform(w, d, bin, rng));
        params.add("embed_b", uniform(1, w, bin, rng));
        let mut bulk = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let layer = init_weights(
                spec.family,
                spec.n_capsules,
                spec.capsule_dim,
                spec.sigma_w,
                spec.scheme,
                rng,
            )?;
            bulk.push(match layer {
                EquivariantWeights::U1 { re, im } | EquivariantWeights::So2 { re, im } => BulkIds::Complex {
                    re: params.add(format!("bulk{l}_re"), re),
                    im: params.add(format!("bulk{l}_im"), im),
                },
                EquivariantWeights::Ok { a, .. } => BulkIds::Block {
                    a: params.add(format!("bulk{l}_a"), a),
                },
                EquivariantWeights::Generic { m, .. } => BulkIds::Dense {
                    m: params.add(format!("bulk{l}_m"), m),
                },
            });
        }
        let bout = 1.0 / (w as f64).sqrt();
        params.add("readout_w", uniform(o, w, bout, rng));
        params.add("readout_b", uniform(1, o, bout, rng));
        Ok(Classifier { spec, params, bulk })
    }

    fn readout_ids(&self) -> (usize, usize) {
        (self.params.len() - 2, self.params.len() - 1)
    }

    /// The internal layers as a standalone [`Network`].
    pub fn bulk_network(&self) -> Result<Network> {
        let k = self.spec.capsule_dim;
        let layers = self
            .bulk
            .iter()
            .map(|ids| match *ids {
                BulkIds::Complex { re, im } => {
                    let (re, im) = (self.params.value(re).clone(), self.params.value(im).clone());
                    if self.spec.family == Family::So2 {
                        EquivariantWeights::So2 { re, im }
                    } else {
                        EquivariantWeights::U1 { re, im }
                    }
                }
                BulkIds::Block { a } => EquivariantWeights::Ok {
                    a: self.params.value(a).clone(),
                    k,
                },
                BulkIds::Dense { m } => EquivariantWeights::Generic {
                    m: self.params.value(m).clone(),
                    k,
                },
            })
            .collect();
        Ok(Network::new(layers, self.spec.n_capsules, k)?.with_eps(self.spec.eps))
    }

    /// `z⁰ = E x + b`.
    pub fn embed(&self, x: &Array2<f64>) -> Result<CapsuleState> {
        self.check_input(x)?;
        let z = x.dot(&self.params.value(EMBED_W).t()) + &self.params.value(EMBED_B).row(0);
        CapsuleState::new(z, self.spec.n_capsules, self.spec.capsule_dim)
    }

    /// Readout applied to a final pre-activation state.
    pub fn readout(&self, z: &CapsuleState) -> Array2<f64> {
        let (rw, rb) = self.readout_ids();
        let h = radial_nonlinearity(z, self.spec.eps);
        h.data().dot(&self.params.value(rw).t()) + &self.params.value(rb).row(0)
    }

    /// Logits computed layer by layer without a tape.
    pub fn logits(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.bulk_network()?.forward(&self.embed(x)?)?;
        Ok(self.readout(&z))
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(SsbError::shape(
                format!("{} input features", self.spec.input_dim),
                format!("{}", x.ncols()),
            ));
        }
        Ok(())
    }

    /// Records the forward pass; returns the logits node.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let (n, k, eps) = (self.spec.n_capsules, self.spec.capsule_dim, self.spec.eps);
        let e = tape.linear(x, vars[EMBED_W])?;
        let mut z = tape.add_bias(e, vars[EMBED_B])?;
        for ids in &self.bulk {
            let h = tape.radial(z, n, k, eps)?;
            z = match *ids {
                BulkIds::Complex { re, im } => tape.complex_matmul(h, vars[re], vars[im])?,
                BulkIds::Block { a } => tape.block_matmul(h, vars[a], k)?,
                BulkIds::Dense { m } => tape.linear(h, vars[m])?,
            };
        }
        let h = tape.radial(z, n, k, eps)?;
        let (rw, rb) = self.readout_ids();
        let y = tape.linear(h, vars[rw])?;
        tape.add_bias(y, vars[rb])
    }

    /// Mean cross-entropy, its gradients, and the logits.
    pub fn loss_and_grads(
        &self,
        x: &Array2<f64>,
        targets: &[usize],
    ) -> Result<(f64, GradientSet, Array2<f64>)> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let logits = self.forward_tape(&mut tape, &vars, xv)?;
        let loss = tape.softmax_cross_entropy(logits, targets)?;
        let grads = tape.backward(loss)?;
        Ok((tape.scalar(loss), grads, tape.value(logits).clone()))
    }
}

/// Row-wise argmax.
pub fn predictions(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}

pub fn accuracy(logits: &Array2<f64>, targets: &[usize]) -> f64 {
    let hits = predictions(logits)
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    hits as f64 / targets.len().max(1) as f64
}
