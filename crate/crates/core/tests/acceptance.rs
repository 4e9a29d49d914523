//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `SSB_ACCEPTANCE_ONLY=1,4,7` runs a subset. The process exits nonzero on
//! a failed criterion only when `SSB_ACCEPTANCE_STRICT=1`, so the long
//! training criteria can report honestly without breaking `cargo test`.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ssb_core::autodiff::{ConvGrid, GradientSet, Tape, Var};
use ssb_core::data::{
    chance_recall_loss, chance_sequence_loss, gen_copy_batch, load_split, CopyTaskConfig, BLANK, GO,
    TOKEN_DIM,
};
use ssb_core::ensemble::{
    fit_decay_depth, gaussian_inputs, measure_c_profile, measure_d_profile, measure_two_input_cov,
    protected_jacobian, rank_profile, EnsembleConfig, PairSpec,
};
use ssb_core::layers::group_act;
use ssb_core::meanfield::{c_fixed_point, delta_phi_step, xi_delta, CovarianceState, MeanFieldParams};
use ssb_core::num::effective_rank;
use ssb_core::topo::{boundary_winding, synthetic_vortices, winding_numbers, PhaseField};
use ssb_core::training::{
    seq_loss_and_grads, train_classifier, train_copy, CellKind, Classifier, CopySchedule, EpochSchedule,
    InputInit, Labeled, Metrics, NetworkSpec, OptimizerConfig, ParamStore, RecInit, RecurrentCellSpec,
    RecurrentModel,
};
use ssb_core::{CapsuleState, Complex, Family, GroupElement, InitScheme, Network, Result, RngStream};

type Outcome = Result<(bool, String)>;

fn randn(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.normal())
}

fn state(batch: usize, n: usize, k: usize, scale: f64, rng: &mut RngStream) -> CapsuleState {
    CapsuleState::new(randn(batch, n * k, scale, rng), n, k).expect("consistent shape")
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn c1_phase_transition() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.5, 0.8, 0.95, 1.0] {
        let c = c_fixed_point(&MeanFieldParams::new(s)?, 1e-13)?;
        ok &= c < 1e-9;
        parts.push(format!("c*({s})={c:.1e}"));
    }
    for s in [1.2, 1.5, 2.0, 3.0] {
        let c = c_fixed_point(&MeanFieldParams::new(s)?, 1e-13)?;
        ok &= c > 0.05;
        parts.push(format!("c*({s})={c:.4}"));
    }
    let s2: Vec<f64> = (0..=18).map(|i| 1.01 + 0.005 * i as f64).collect();
    let cs = s2
        .iter()
        .map(|v| c_fixed_point(&MeanFieldParams::new(v.sqrt())?, 1e-13))
        .collect::<Result<Vec<_>>>()?;
    let slope = fit_slope(&s2, &cs);
    ok &= (slope - 0.75).abs() < 0.1 * 0.75;
    parts.push(format!("slope on [1.01,1.1] = {slope:.4} (target 0.75 ± 10%)"));
    Ok((ok, parts.join(", ")))
}

fn c2_theory_vs_ensemble() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, s) in [0.5, 0.8, 1.2, 1.5, 2.0].into_iter().enumerate() {
        let theory = c_fixed_point(&MeanFieldParams::new(s)?, 1e-13)?;
        let prof = measure_c_profile(&EnsembleConfig::u1(200, 100, 16, s, 100 + i as u64))?;
        let diff = (prof.tail_mean() - theory).abs();
        ok &= diff <= 0.05;
        parts.push(format!("σ={s}: |{:.4}-{theory:.4}|={diff:.4}", prof.tail_mean()));
    }
    Ok((ok, format!("{} (tol 0.05)", parts.join(", "))))
}

fn c3_phase_conservation() -> Outcome {
    let p = MeanFieldParams::new(1.5)?;
    let phi0 = 1.234_567;
    let mut s = CovarianceState::new(0.6, 0.4, phi0)?;
    let mut bit_exact = true;
    for _ in 0..10_000 {
        s = delta_phi_step(&s, &p)?;
        bit_exact &= s.phi.to_bits() == phi0.to_bits();
    }
    let beta = 0.7;
    let prof = measure_two_input_cov(
        &EnsembleConfig::u1(10, 100, 16, 1.5, 3),
        PairSpec::Rotated { beta },
    )?;
    let mut worst = 0.0f64;
    for l in 0..prof.phases.len() {
        worst = worst.max((prof.states[l].phi + beta).abs());
        for &ph in prof.phases[l].iter().filter(|v| !v.is_nan()) {
            worst = worst.max((ph + beta).abs());
        }
    }
    let ok = bit_exact && worst <= 1e-10;
    Ok((
        ok,
        format!(
            "mean-field φ bit-identical over 1e4 steps: {bit_exact}; rotated pair β={beta}, L=100: max |φˡ+β| = {worst:.1e} (tol 1e-10)"
        ),
    ))
}

fn c4_delta_decay() -> Outcome {
    let theory = xi_delta(&MeanFieldParams::new(1.5)?)?;
    let cfg = EnsembleConfig::u1(4, 60, 4096, 1.5, 11);
    let prof = measure_two_input_cov(&cfg, PairSpec::Correlated { rho: 0.8 })?;
    let deltas: Vec<f64> = prof.states.iter().map(|s| s.delta).collect();
    let xi = fit_decay_depth(&deltas, 20..=60)?;
    let rel = (xi - theory).abs() / theory;
    let ind = EnsembleConfig { n_networks: 2, ..cfg };
    let ind_prof = measure_two_input_cov(&ind, PairSpec::Independent)?;
    let ind_deltas: Vec<f64> = ind_prof.states.iter().map(|s| s.delta).collect();
    let ind_fit = match fit_decay_depth(&ind_deltas, 20..=60) {
        Ok(v) => format!("ξ={v:.2}"),
        Err(e) => format!("{e}"),
    };
    Ok((
        rel <= 0.2,
        format!(
            "N=4096, σ=1.5, pair ρ=0.8: fitted ξ={xi:.3} vs theory {theory:.3}, rel err {rel:.3} (tol 0.2); \
             independent pair (Δ⁰≈0, noise floor ~N^-1/2): {ind_fit}, Δ at l=0/30/60 = {:.1e}/{:.1e}/{:.1e}",
            ind_deltas[0], ind_deltas[30], ind_deltas[60]
        ),
    ))
}

fn c5_protected_jacobian() -> Outcome {
    let mut worst = 0.0f64;
    let mut nets = 0;
    for (c, (depth, sigma)) in [(1, 0.5), (10, 0.5), (100, 0.5), (1, 1.5), (10, 1.5), (100, 1.5)]
        .into_iter()
        .enumerate()
    {
        let cfg = EnsembleConfig::u1(17, depth, 16, sigma, 50 + c as u64);
        for i in 0..cfg.n_networks {
            let (net, mut rng) = cfg.network(i)?;
            let x = cfg.sample_inputs(1, &mut rng)?;
            let rep = protected_jacobian(&net, &x)?;
            worst = worst.max(rep.identity_error.unwrap_or(f64::INFINITY));
            nets += 1;
        }
    }
    let depths: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
    let u1 = measure_d_profile(&EnsembleConfig::u1(40, 100, 16, 1.5, 60), &depths)?;
    let ratios: Vec<f64> = u1.mean.iter().map(|d| d / u1.mean[0]).collect();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let mut gcfg = EnsembleConfig::u1(40, 100, 16, 1.5, 61);
    gcfg.family = Family::Generic;
    let generic = measure_d_profile(&gcfg, &depths)?;
    let g_change = {
        let r = generic.mean[9] / generic.mean[0];
        r.max(1.0 / r)
    };
    let ok = worst <= 1e-8 && lo >= 0.5 && hi <= 2.0 && g_change > 10.0;
    Ok((
        ok,
        format!(
            "{nets} nets: max |Jᵢ−zᴸᵢ| = {worst:.1e} (tol 1e-8) {}; U(1) σ=1.5 dᴸ/d¹⁰ over L≤100 in [{lo:.3}, {hi:.3}] (need [0.5, 2]) {}; \
             generic d¹⁰⁰/d¹⁰ change {g_change:.1}x (need >10x) {}",
            mark(worst <= 1e-8),
            mark(lo >= 0.5 && hi <= 2.0),
            mark(g_change > 10.0)
        ),
    ))
}

fn random_element(family: Family, k: usize, rng: &mut RngStream) -> Result<GroupElement> {
    match family {
        Family::Ok => GroupElement::random_orthogonal(k, rng),
        _ => Ok(GroupElement::phase(rng.uniform_range(-PI, PI))),
    }
}

fn small_cell(kind: CellKind) -> RecurrentCellSpec {
    let mut spec = match kind {
        CellKind::Conv2dU1 => RecurrentCellSpec::conv(
            ConvGrid {
                channels: 2,
                height: 3,
                width: 3,
            },
            3,
            2,
        ),
        _ => RecurrentCellSpec::new(kind, 4, 3, 2),
    };
    spec.rec_init = RecInit::Random;
    spec
}

fn c6_equivariance() -> Outcome {
    let mut rng = RngStream::new(6);
    let mut worst = 0.0f64;
    for (family, k) in [
        (Family::U1, 2),
        (Family::So2, 2),
        (Family::Ok, 3),
        (Family::Ok, 4),
    ] {
        for _ in 0..20 {
            let net = Network::random(family, 6, k, 5, 1.5, InitScheme::Gaussian, &mut rng)?;
            let x = state(3, 6, k, 0.8, &mut rng);
            let g = random_element(family, k, &mut rng)?;
            let a = net.forward(&group_act(&g, &x)?)?;
            let b = group_act(&g, &net.forward(&x)?)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
    }
    let mut cell_worst = 0.0f64;
    for kind in [
        CellKind::RnnU1,
        CellKind::RnnOk,
        CellKind::GruU1,
        CellKind::Conv2dU1,
    ] {
        let m = RecurrentModel::new(small_cell(kind), &mut rng)?;
        let (n, k) = (m.spec.n, m.spec.k);
        let family = if kind == CellKind::RnnOk {
            Family::Ok
        } else {
            Family::U1
        };
        let zero = Array2::zeros((2, 3));
        for _ in 0..20 {
            let h = state(2, n, k, 0.7, &mut rng);
            let g = random_element(family, k, &mut rng)?;
            let a = m.step(&group_act(&g, &h)?, &zero)?;
            let b = group_act(&g, &m.step(&h, &zero)?)?;
            cell_worst = cell_worst.max(a.max_abs_diff(&b));
        }
    }
    let net = Network::random(Family::Generic, 6, 2, 5, 1.5, InitScheme::Gaussian, &mut rng)?;
    let x = state(3, 6, 2, 0.8, &mut rng);
    let g = GroupElement::phase(1.0);
    let witness = net
        .forward(&group_act(&g, &x)?)?
        .max_abs_diff(&group_act(&g, &net.forward(&x)?)?);
    let m = RecurrentModel::new(small_cell(CellKind::RnnGeneric), &mut rng)?;
    let h = state(1, 4, 1, 0.7, &mut rng);
    let as_pairs = |s: &CapsuleState| CapsuleState::new(s.data().clone(), 2, 2);
    let back = |s: CapsuleState| CapsuleState::new(s.into_data(), 4, 1);
    let zero = Array2::zeros((1, 3));
    let a = m.step(&back(group_act(&g, &as_pairs(&h)?)?)?, &zero)?;
    let b = back(group_act(&g, &as_pairs(&m.step(&h, &zero)?)?)?)?;
    let cell_witness = a.max_abs_diff(&b);
    let ok = worst <= 1e-10 && cell_worst <= 1e-10 && witness > 1e-3 && cell_witness > 1e-3;
    Ok((
        ok,
        format!(
            "layers U(1)/SO(2)/O(3)/O(4): {worst:.1e}; autonomous cells rnn_u1/rnn_ok/gru_u1/conv2d_u1: {cell_worst:.1e} (tol 1e-10); \
             generic witness: layer {witness:.2e}, cell {cell_witness:.2e} (need >1e-3)"
        ),
    ))
}

/// Worst relative error of the tape's vector-Jacobian product against
/// central differences of `⟨seed, f(inputs)⟩`.
fn primitive_fd<F>(inputs: &[Array2<f64>], rng: &mut RngStream, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |vals: &[Array2<f64>]| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.input(v.clone())).collect();
        let out = f(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(inputs);
    let seed = randn(tape.value(out).nrows(), tape.value(out).ncols(), 1.0, rng);
    let analytic = tape.vjp(out, seed.clone(), &vars).expect("vjp");
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, base) in inputs.iter().enumerate() {
        let mut numeric = Array2::zeros(base.raw_dim());
        for idx in 0..base.len() {
            let (r, c) = (idx / base.ncols(), idx % base.ncols());
            let mut plus = inputs.to_vec();
            plus[i][[r, c]] += h;
            let mut minus = inputs.to_vec();
            minus[i][[r, c]] -= h;
            let (tp, _, op) = eval(&plus);
            let (tm, _, om) = eval(&minus);
            numeric[[r, c]] = ((tp.value(op) * &seed).sum() - (tm.value(om) * &seed).sum()) / (2.0 * h);
        }
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        for (a, n) in analytic[i].iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-2 * scale);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    worst
}

/// Worst finite-difference error over all parameters, relative to the
/// largest gradient entry.
fn param_fd(params: &ParamStore, grads: &GradientSet, loss: impl Fn(&ParamStore) -> f64) -> f64 {
    let h = 1e-5;
    let (mut gmax, mut errmax) = (0.0f64, 0.0f64);
    for id in 0..params.len() {
        let g = grads.get(id).expect("every parameter has a gradient");
        for idx in 0..params.value(id).len() {
            let (r, c) = (idx / params.value(id).ncols(), idx % params.value(id).ncols());
            let mut p = params.clone();
            p.value_mut(id)[[r, c]] += h;
            let up = loss(&p);
            p.value_mut(id)[[r, c]] -= 2.0 * h;
            let fd = (up - loss(&p)) / (2.0 * h);
            gmax = gmax.max(g[[r, c]].abs());
            errmax = errmax.max((fd - g[[r, c]]).abs());
        }
    }
    errmax / gmax.max(1e-3)
}

fn c7_gradients() -> Outcome {
    let mut rng = RngStream::new(7);
    let grid = ConvGrid {
        channels: 2,
        height: 3,
        width: 3,
    };
    let mut prim = 0.0f64;
    for _ in 0..5 {
        let r = &mut rng;
        let checks: Vec<(Vec<Array2<f64>>, Box<dyn Fn(&mut Tape, &[Var]) -> Var>)> = vec![
            (
                vec![randn(3, 4, 1.0, r), randn(5, 4, 1.0, r)],
                Box::new(|t, v| t.linear(v[0], v[1]).unwrap()),
            ),
            (
                vec![randn(3, 4, 1.0, r), randn(1, 4, 1.0, r)],
                Box::new(|t, v| t.add_bias(v[0], v[1]).unwrap()),
            ),
            (
                vec![randn(3, 4, 1.0, r), randn(3, 4, 1.0, r)],
                Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
            ),
            (
                vec![randn(3, 4, 1.0, r), randn(3, 4, 1.0, r)],
                Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
            ),
            (
                vec![randn(2, 3, 1.0, r)],
                Box::new(|t, v| t.affine(v[0], -1.5, 1.0)),
            ),
            (
                vec![randn(3, 8, 1.0, r), randn(5, 4, 1.0, r), randn(5, 4, 1.0, r)],
                Box::new(|t, v| t.complex_matmul(v[0], v[1], v[2]).unwrap()),
            ),
            (
                vec![randn(2, 12, 1.0, r), randn(4, 4, 1.0, r)],
                Box::new(|t, v| t.block_matmul(v[0], v[1], 3).unwrap()),
            ),
            (
                vec![randn(3, 10, 1.2, r)],
                Box::new(|t, v| t.radial(v[0], 5, 2, 1e-8).unwrap()),
            ),
            (
                vec![randn(3, 20, 1.2, r)],
                Box::new(|t, v| t.radial(v[0], 5, 4, 1e-8).unwrap()),
            ),
            (
                vec![randn(3, 10, 1.0, r)],
                Box::new(|t, v| t.magnitude(v[0], 5, 2).unwrap()),
            ),
            (
                vec![randn(3, 5, 1.0, r), randn(3, 10, 1.0, r)],
                Box::new(|t, v| t.capsule_scale(v[0], v[1], 5, 2).unwrap()),
            ),
            (vec![randn(3, 4, 1.5, r)], Box::new(|t, v| t.sigmoid(v[0]))),
            (vec![randn(3, 4, 1.5, r)], Box::new(|t, v| t.tanh(v[0]))),
            (
                vec![randn(3, 4, 1.5, r).mapv(|x| x + 0.1 * x.signum())],
                Box::new(|t, v| t.relu(v[0])),
            ),
            (vec![randn(3, 4, 1.0, r)], Box::new(|t, v| t.sum_squares(v[0]))),
            (
                vec![randn(4, 5, 1.0, r)],
                Box::new(|t, v| t.softmax_cross_entropy(v[0], &[0, 3, 1, 4]).unwrap()),
            ),
            (
                vec![
                    randn(2, 2 * grid.sites(), 1.0, r),
                    randn(2, 18, 0.5, r),
                    randn(2, 18, 0.5, r),
                ],
                Box::new(move |t, v| t.complex_conv(v[0], v[1], v[2], grid).unwrap()),
            ),
        ];
        for (inputs, f) in &checks {
            prim = prim.max(primitive_fd(inputs, &mut rng, f));
        }
    }

    let mut net = 0.0f64;
    for (family, k) in [(Family::U1, 2), (Family::Ok, 3), (Family::Generic, 2)] {
        let c = Classifier::new(NetworkSpec::new(family, 3, k, 5, 4, 3, 1.5), &mut rng)?;
        let x = randn(5, 4, 1.0, &mut rng);
        let y = vec![0, 1, 2, 1, 0];
        let (_, grads, _) = c.loss_and_grads(&x, &y)?;
        net = net.max(param_fd(&c.params, &grads, |p| {
            let mut m = c.clone();
            m.params = p.clone();
            m.loss_and_grads(&x, &y).expect("forward").0
        }));
    }

    let mut bptt = 0.0f64;
    for kind in [
        CellKind::RnnGeneric,
        CellKind::RnnU1,
        CellKind::RnnOk,
        CellKind::GruGeneric,
        CellKind::GruU1,
        CellKind::Conv2dU1,
    ] {
        let mut spec = small_cell(kind);
        spec.input_dim = 1;
        let m = RecurrentModel::new(spec, &mut rng)?;
        let x = randn(3, 5, 1.0, &mut rng);
        let y = vec![1, 0, 1];
        let (_, grads, _) = seq_loss_and_grads(&m, &x, &y)?;
        bptt = bptt.max(param_fd(&m.params, &grads, |p| {
            let mut mm = m.clone();
            mm.params = p.clone();
            seq_loss_and_grads(&mm, &x, &y).expect("forward").0
        }));
    }
    let ok = prim < 1e-4 && net < 1e-4 && bptt < 1e-4;
    Ok((
        ok,
        format!("17 primitive cases × 5 draws: {prim:.1e}; L=5 classifiers: {net:.1e}; BPTT T=5, 6 cells: {bptt:.1e} (tol 1e-4)"),
    ))
}

fn data_dir() -> PathBuf {
    std::env::var_os("SSB_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist"))
}

fn c8_deep_mlp() -> Outcome {
    let dir = data_dir();
    let train = Labeled::from_idx(&load_split(&dir, true)?);
    let test = Labeled::from_idx(&load_split(&dir, false)?);
    let sched = EpochSchedule {
        epochs: 5,
        batch_size: 256,
        seed: 1,
        log_every: None,
    };
    let run = |family: Family, sigma: f64| -> Result<f64> {
        let spec = NetworkSpec::new(family, 64, 2, 100, 784, 10, sigma);
        let mut model = Classifier::new(spec, &mut RngStream::new(1))?;
        let ev = train_classifier(
            &mut model,
            &train,
            &test,
            &sched,
            OptimizerConfig::adam(1e-3),
            &mut Metrics::new(),
        )?;
        Ok(ev.accuracy)
    };
    let u1 = run(Family::U1, 1.5)?;
    let generic = run(Family::Generic, 1.5)?;
    let unbroken = run(Family::U1, 0.8)?;
    let ok = u1 >= 0.6 && generic <= 0.3 && unbroken <= 0.3;
    Ok((
        ok,
        format!(
            "test accuracy after 5 epochs: U(1) σ=1.5 {u1:.4} (need ≥0.60) {}, generic σ=1.5 {generic:.4} (need ≤0.30) {}, U(1) σ=0.8 {unbroken:.4} (need ≤0.30) {}",
            mark(u1 >= 0.6),
            mark(generic <= 0.3),
            mark(unbroken <= 0.3)
        ),
    ))
}

fn copy_run(kind: CellKind, n: usize, lr: f64, seed: u64) -> Result<(Option<u64>, f64)> {
    let mut spec = RecurrentCellSpec::new(kind, n, TOKEN_DIM, TOKEN_DIM);
    spec.rec_init = RecInit::Identity;
    spec.input_init = InputInit::LowVariance;
    spec.frozen_input = Some(BLANK);
    let mut model = RecurrentModel::new(spec, &mut RngStream::new(seed))?;
    let mut sched = CopySchedule::new(50_000, seed);
    sched.stop_below = Some(1e-2);
    let rep = train_copy(
        &mut model,
        10,
        &sched,
        OptimizerConfig::adam(lr),
        &mut Metrics::new(),
    )?;
    Ok((rep.reached_at, rep.best_recall_loss))
}

/// Seeds on which some learning rate of the sweep reaches the target, and
/// the per-run summaries.
fn copy_sweep(kind: CellKind, n: usize) -> Result<(usize, Vec<String>)> {
    let mut hits = 0;
    let mut notes = Vec::new();
    for seed in 1..=3u64 {
        for lr in [1e-3, 1e-4] {
            let (reached, best) = copy_run(kind, n, lr, seed)?;
            notes.push(match reached {
                Some(step) => format!("s{seed}/lr{lr:.0e}: reached at {step}"),
                None => format!("s{seed}/lr{lr:.0e}: best {best:.3}"),
            });
            if reached.is_some() {
                hits += 1;
                break;
            }
        }
    }
    Ok((hits, notes))
}

fn c9_copy_task() -> Outcome {
    let cfg = CopyTaskConfig::new(10, 128)?;
    let (u1_hits, u1_notes) = copy_sweep(CellKind::RnnU1, 16)?;
    let (base_hits, base_notes) = copy_sweep(CellKind::RnnGeneric, 32)?;
    let ok = u1_hits >= 2 && base_hits < 2;
    Ok((
        ok,
        format!(
            "T_max=10, ≤50k steps, recall CE target 1e-2; chance: recall {:.4}, full sequence {:.4}; \
             U(1) N=16 reached on {u1_hits}/3 seeds (need ≥2) {} [{}]; generic 32 units reached on {base_hits}/3 (need ≤1) {} [{}]",
            chance_recall_loss(),
            chance_sequence_loss(&cfg),
            mark(u1_hits >= 2),
            u1_notes.join("; "),
            mark(base_hits < 2),
            base_notes.join("; ")
        ),
    ))
}

fn c10_effective_rank() -> Outcome {
    let eye = effective_rank(Array2::<f64>::eye(12).view())?;
    let mut rng = RngStream::new(10);
    let u = randn(9, 1, 1.0, &mut rng);
    let v = randn(1, 7, 1.0, &mut rng);
    let one = effective_rank(u.dot(&v).view())?;
    let mut rng = RngStream::new(3);
    let generic = Network::random(Family::Generic, 8, 2, 90, 0.5, InitScheme::Gaussian, &mut rng)?;
    let x = gaussian_inputs(64, 8, 2, 0.5, &mut rng)?;
    let g_rank = rank_profile(&generic, &x)?[90];
    let control = rank_profile(&generic.clone().with_eps(0.0), &x)?[90];
    let ok_net = Network::random(Family::Ok, 8, 4, 90, 1.5, InitScheme::Gaussian, &mut rng)?;
    let xo = gaussian_inputs(64, 8, 4, 0.5, &mut rng)?;
    let o_rank = rank_profile(&ok_net, &xo)?[90];
    let ok = (eye - 12.0).abs() < 1e-12 && (one - 1.0).abs() < 1e-12 && g_rank < 2.0 && o_rank >= 3.5;
    Ok((
        ok,
        format!(
            "I₁₂ → {eye:.12}, rank-1 → {one:.12}; generic σ=0.5 L=90: {g_rank:.4} (need <2; eps=0 control {control:.4}); O(4) σ=1.5 L=90: {o_rank:.4} (need ≥3.5)"
        ),
    ))
}

/// Phase of a smooth random complex field; its zeros become vortices.
fn random_smooth_field(h: usize, w: usize, rng: &mut RngStream) -> Result<PhaseField> {
    let modes: Vec<(f64, f64, Complex)> = (0..6)
        .map(|_| {
            (
                rng.uniform_range(-0.6, 0.6),
                rng.uniform_range(-0.6, 0.6),
                Complex::new(rng.normal(), rng.normal()),
            )
        })
        .collect();
    let theta = Array2::from_shape_fn((h, w), |(y, x)| {
        modes
            .iter()
            .map(|&(ky, kx, a)| a * Complex::from_polar(1.0, ky * y as f64 + kx * x as f64))
            .sum::<Complex>()
            .arg()
    });
    PhaseField::from_theta(theta)
}

fn c11_vortices() -> Outcome {
    let single = winding_numbers(&synthetic_vortices(10, 12, &[(4.5, 3.5, 1)])?).cores();
    let single_ok = single == vec![(4, 3, 1)];
    let mut rng = RngStream::new(11);
    let (mut stokes_ok, mut total_cores, mut zero_boundary, mut balanced) = (true, 0, 0, true);
    for _ in 0..100 {
        let f = random_smooth_field(16, 16, &mut rng)?;
        let m = winding_numbers(&f);
        stokes_ok &= m.net() == boundary_winding(&f) as i64;
        total_cores += m.n_plus + m.n_minus;
        if boundary_winding(&f) == 0 {
            zero_boundary += 1;
            balanced &= m.n_plus == m.n_minus;
        }
    }
    let pair = synthetic_vortices(12, 12, &[(3.5, 3.5, 1), (7.5, 8.5, -1)])?;
    let pm = winding_numbers(&pair);
    balanced &= boundary_winding(&pair) == 0 && pm.n_plus == 1 && pm.n_minus == 1;
    let ok = single_ok && stokes_ok && balanced && zero_boundary > 0;
    Ok((
        ok,
        format!(
            "single vortex → {single:?}; Stokes exact on 100 fields ({total_cores} cores): {stokes_ok}; \
             n₊ = n₋ on {zero_boundary} zero-boundary fields and a synthetic pair: {balanced}"
        ),
    ))
}

fn c12_copy_structure() -> Outcome {
    let cfg = CopyTaskConfig::new(25, 1000)?;
    let mut rng = RngStream::new(12);
    let mut counts = [0usize; 26];
    let mut one_go = true;
    for _ in 0..100 {
        let b = gen_copy_batch(&cfg, &mut rng);
        for i in 0..b.batch() {
            let gos = (0..b.time_steps())
                .filter(|&t| b.inputs[[i, t, GO]] == 1.0)
                .count();
            one_go &= gos == 1;
        }
        for d in b.delays {
            counts[d] += 1;
        }
    }
    let expected = 1e5 / 26.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(25.0).expect("positive dof").cdf(chi2);
    Ok((
        p > 0.01 && one_go,
        format!(
            "1e5 delays on 0..=25: χ²={chi2:.2}, p={p:.3} (need >0.01); one go token per example: {one_go}"
        ),
    ))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "mean-field phase transition", c1_phase_transition),
        (2, "theory-ensemble agreement", c2_theory_vs_ensemble),
        (3, "phase conservation", c3_phase_conservation),
        (12, "copy-task structure", c12_copy_structure),
        (5, "protected Jacobian", c5_protected_jacobian),
        (6, "equivariance suite", c6_equivariance),
        (7, "gradient correctness", c7_gradients),
        (10, "effective rank", c10_effective_rank),
        (11, "vortex analysis", c11_vortices),
        (4, "delta decay depth", c4_delta_decay),
        (8, "deep MLP trainability", c8_deep_mlp),
        (9, "copy-task advantage", c9_copy_task),
    ];
    let only: Option<Vec<usize>> = std::env::var("SSB_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let strict = std::env::var("SSB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let status = if pass { "PASS" } else { "FAIL" };
        println!(
            "[{id:>2}] {status} {name}: {detail} [{:.1}s]",
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
