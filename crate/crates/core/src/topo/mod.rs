//! Phase-field vortices: plaquette winding numbers on complex hidden grids.
//!
//! Grid site `(y, x)` is row `y`, column `x`. A plaquette `(y, x)` is the
//! loop `(y,x) → (y,x+1) → (y+1,x+1) → (y+1,x)`, which is counterclockwise
//! when `y` points up, so `θ = atan2(y − y₀, x − x₀)` has winding `+1`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde_json::json;

use crate::autodiff::ConvGrid;
use crate::error::{Result, SsbError};
use crate::io::{write_flat, FlatArray};
use crate::layers::CapsuleState;
use crate::meanfield::wrap_phase;

/// Sites below this magnitude have no meaningful phase.
pub const MASK_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    /// Phases in `(−π, π]`.
    pub theta: Array2<f64>,
    pub magnitude: Array2<f64>,
    pub channel: usize,
    pub t: usize,
}

impl PhaseField {
    /// Unit-magnitude field from raw phases (wrapped on entry).
    pub fn from_theta(theta: Array2<f64>) -> Result<Self> {
        if theta.nrows() < 2 || theta.ncols() < 2 {
            return Err(SsbError::arg("phase field needs at least 2x2 sites"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(SsbError::Numeric("non-finite phase".into()));
        }
        let magnitude = Array2::ones(theta.dim());
        Ok(PhaseField {
            theta: theta.mapv(wrap_phase),
            magnitude,
            channel: 0,
            t: 0,
        })
    }

    /// Channel `channel` of batch row `b` of a U(1) hidden grid.
    pub fn from_state(
        state: &CapsuleState,
        b: usize,
        grid: ConvGrid,
        channel: usize,
        t: usize,
    ) -> Result<Self> {
        if state.n_capsules() != grid.sites() {
            return Err(SsbError::shape(
                format!("{} sites", grid.sites()),
                format!("{}", state.n_capsules()),
            ));
        }
        if channel >= grid.channels || b >= state.batch() {
            return Err(SsbError::arg("channel or batch row out of range"));
        }
        if grid.height < 2 || grid.width < 2 {
            return Err(SsbError::arg("phase field needs at least 2x2 sites"));
        }
        let z = state.complex_row(b)?;
        let (h, w) = (grid.height, grid.width);
        let off = channel * h * w;
        let theta = Array2::from_shape_fn((h, w), |(y, x)| wrap_phase(z[off + y * w + x].arg()));
        let magnitude = Array2::from_shape_fn((h, w), |(y, x)| z[off + y * w + x].norm());
        Ok(PhaseField {
            theta,
            magnitude,
            channel,
            t,
        })
    }

    pub fn height(&self) -> usize {
        self.theta.nrows()
    }

    pub fn width(&self) -> usize {
        self.theta.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VortexMap {
    /// `(H−1) × (W−1)` plaquette windings.
    pub winding: Array2<i32>,
    pub n_plus: usize,
    pub n_minus: usize,
    /// Plaquettes with `|winding| > 1`, which a smooth field should not have.
    pub flagged: usize,
}

impl VortexMap {
    pub fn net(&self) -> i64 {
        self.winding.iter().map(|&w| w as i64).sum()
    }

    /// Plaquettes with nonzero winding as `(y, x, winding)`.
    pub fn cores(&self) -> Vec<(usize, usize, i32)> {
        self.winding
            .indexed_iter()
            .filter(|(_, &w)| w != 0)
            .map(|((y, x), &w)| (y, x, w))
            .collect()
    }
}

fn edge(a: f64, b: f64) -> f64 {
    wrap_phase(b - a)
}

fn to_winding(circulation: f64) -> i32 {
    (circulation / (2.0 * PI)).round() as i32
}

/// Windings with every plaquette counted.
pub fn winding_numbers(f: &PhaseField) -> VortexMap {
    windings(f, None)
}

/// Windings with plaquettes touching a site of magnitude below `threshold`
/// set to zero.
pub fn winding_numbers_masked(f: &PhaseField, threshold: f64) -> VortexMap {
    windings(f, Some(threshold))
}

fn windings(f: &PhaseField, threshold: Option<f64>) -> VortexMap {
    let th = &f.theta;
    let (h, w) = th.dim();
    let mut winding = Array2::zeros((h - 1, w - 1));
    let (mut n_plus, mut n_minus, mut flagged) = (0, 0, 0);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let corners = [(y, x), (y, x + 1), (y + 1, x + 1), (y + 1, x)];
            if let Some(t) = threshold {
                if corners.iter().any(|&c| f.magnitude[c] < t) {
                    continue;
                }
            }
            let circ: f64 = (0..4)
                .map(|i| edge(th[corners[i]], th[corners[(i + 1) % 4]]))
                .sum();
            let n = to_winding(circ);
            winding[[y, x]] = n;
            match n {
                0 => {}
                n if n > 0 => n_plus += 1,
                _ => n_minus += 1,
            }
            if n.abs() > 1 {
                flagged += 1;
            }
        }
    }
    VortexMap {
        winding,
        n_plus,
        n_minus,
        flagged,
    }
}

/// Winding of the outer boundary loop, traversed with plaquette orientation.
pub fn boundary_winding(f: &PhaseField) -> i32 {
    let th = &f.theta;
    let (h, w) = th.dim();
    let mut loop_sites = Vec::with_capacity(2 * (h + w));
    loop_sites.extend((0..w).map(|x| (0, x)));
    loop_sites.extend((1..h).map(|y| (y, w - 1)));
    loop_sites.extend((0..w - 1).rev().map(|x| (h - 1, x)));
    loop_sites.extend((1..h - 1).rev().map(|y| (y, 0)));
    let n = loop_sites.len();
    to_winding(
        (0..n)
            .map(|i| edge(th[loop_sites[i]], th[loop_sites[(i + 1) % n]]))
            .sum(),
    )
}

/// Phase field of point vortices `(y₀, x₀, charge)`; cores should sit off
/// the lattice sites.
pub fn synthetic_vortices(h: usize, w: usize, cores: &[(f64, f64, i32)]) -> Result<PhaseField> {
    let theta = Array2::from_shape_fn((h, w), |(y, x)| {
        cores
            .iter()
            .map(|&(y0, x0, q)| q as f64 * (y as f64 - y0).atan2(x as f64 - x0))
            .sum::<f64>()
    });
    PhaseField::from_theta(theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VortexStep {
    pub t: usize,
    pub map: VortexMap,
    /// Steps where both counts dropped: `min(Δn₋, Δn₊)` pairs removed.
    pub annihilations: usize,
}

/// Per-step vortex maps of one channel of a hidden trajectory (batch row 0).
pub fn vortex_timeseries(
    trajectory: &[CapsuleState],
    grid: ConvGrid,
    channel: usize,
    threshold: Option<f64>,
) -> Result<Vec<VortexStep>> {
    let mut out: Vec<VortexStep> = Vec::with_capacity(trajectory.len());
    for (t, h) in trajectory.iter().enumerate() {
        let f = PhaseField::from_state(h, 0, grid, channel, t)?;
        let map = windings(&f, threshold);
        let annihilations = match out.last() {
            Some(prev) if map.n_plus < prev.map.n_plus && map.n_minus < prev.map.n_minus => {
                (prev.map.n_plus - map.n_plus).min(prev.map.n_minus - map.n_minus)
            }
            _ => 0,
        };
        out.push(VortexStep {
            t,
            map,
            annihilations,
        });
    }
    Ok(out)
}

pub fn vortex_csv(steps: &[VortexStep]) -> String {
    let mut s = String::from("t,n_plus,n_minus\n");
    for st in steps {
        let _ = writeln!(s, "{},{},{}", st.t, st.map.n_plus, st.map.n_minus);
    }
    s
}

/// Writes theta, magnitude and winding grids as one flat fixture.
pub fn dump_field(stem: &Path, f: &PhaseField, map: &VortexMap) -> Result<()> {
    let arrays = [
        FlatArray::from_array("theta", &f.theta),
        FlatArray::from_array("magnitude", &f.magnitude),
        FlatArray::from_array("winding", &map.winding.mapv(|w| w as f64)),
    ];
    write_flat(
        stem,
        json!({ "channel": f.channel, "t": f.t, "n_plus": map.n_plus, "n_minus": map.n_minus }),
        &arrays,
    )
}
