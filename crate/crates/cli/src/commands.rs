use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use ssb_core::autodiff::ConvGrid;
use ssb_core::data::{
    chance_recall_loss, chance_sequence_loss, gen_copy_batch, load_split, sequential_splits, CopyTaskConfig,
    IdxDataset, BLANK, TOKEN_DIM,
};
use ssb_core::ensemble::{measure_c_profile, EnsembleConfig};
use ssb_core::meanfield::{c_fixed_point, phase_diagram_csv, phase_row, MeanFieldParams};
use ssb_core::topo::{
    dump_field, synthetic_vortices, vortex_csv, vortex_timeseries, winding_numbers, PhaseField,
};
use ssb_core::training::{
    train_classifier, train_copy, train_seq_image, CellKind, Classifier, CopySchedule, EpochSchedule,
    InputInit, Labeled, Metrics, NetworkSpec, OptimizerConfig, RecInit, RecurrentCellSpec, RecurrentModel,
    StepDecay,
};
use ssb_core::{RngStream, SsbError};

use crate::run::{pool, Run};
use crate::{
    CellArgs, CliError, Command, ConvCopyArgs, CopyArgs, CopyTaskArgs, DataArgs, EnsembleArgs, MlpArgs,
    OptimArgs, PhaseDiagramArgs, SeqImageArgs, VortexArgs,
};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "SSB_DATA_DIR";

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::PhaseDiagram(a) => phase_diagram(cmd, a),
        Command::EnsembleCompare(a) => ensemble_compare(cmd, a),
        Command::TrainMlp(a) => train_mlp(cmd, a),
        Command::TrainCopy(a) => copy(cmd, a),
        Command::TrainConvCopy(a) => conv_copy(cmd, a),
        Command::TrainSeqImage(a) => seq_image(cmd, a),
        Command::Vortices(a) => vortices(cmd, a),
    }
}

/// `start:stop:step` (inclusive, stop snapped to the nearest step) or `a,b,c`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("malformed grid '{s}'"));
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(bad)
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step <= 0.0 || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|&v| v <= 0.0) {
        return Err(CliError::Usage(format!("grid '{s}' needs positive σ_w values")));
    }
    Ok(grid)
}

fn phase_diagram(cmd: &Command, a: &PhaseDiagramArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.sigma)?;
    let pool = pool(&a.common)?;
    let mut run = Run::start(&a.common)?;
    let rows = pool.install(|| {
        grid.par_iter()
            .map(|&s| phase_row(s, a.depth))
            .collect::<Result<Vec<_>, _>>()
    })?;
    run.write(
        "phase_diagram.csv",
        "sigma_w,c_star,xi_delta",
        &phase_diagram_csv(&rows),
    )?;
    run.write_json("phase_diagram.json", "[PhaseRow]", &rows)?;
    println!(
        "{} rows -> {}",
        rows.len(),
        run.path("phase_diagram.csv").display()
    );
    run.finish(cmd)
}

#[derive(Serialize)]
struct AgreementRow {
    sigma_w: f64,
    theory: f64,
    empirical: f64,
    stderr: f64,
    abs_diff: f64,
    within_tol: bool,
}

fn ensemble_compare(cmd: &Command, a: &EnsembleArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.sigma)?;
    if !(a.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let configs: Vec<EnsembleConfig> = grid
        .iter()
        .map(|&s| EnsembleConfig::u1(a.networks, a.depth, a.n, s, a.common.seed))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let pool = pool(&a.common)?;
    let mut run = Run::start(&a.common)?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| -> Result<AgreementRow, SsbError> {
                let theory = c_fixed_point(&MeanFieldParams::new(cfg.sigma_w)?, 1e-12)?;
                let profile = measure_c_profile(cfg)?;
                let empirical = profile.tail_mean();
                Ok(AgreementRow {
                    sigma_w: cfg.sigma_w,
                    theory,
                    empirical,
                    stderr: profile.tail_stderr(),
                    abs_diff: (theory - empirical).abs(),
                    within_tol: (theory - empirical).abs() <= a.tol,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut csv = String::from("sigma_w,theory,empirical,stderr,abs_diff\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.sigma_w, r.theory, r.empirical, r.stderr, r.abs_diff
        ));
        println!(
            "sigma_w={:.3} theory={:.4} empirical={:.4}±{:.4} diff={:.4}",
            r.sigma_w, r.theory, r.empirical, r.stderr, r.abs_diff
        );
    }
    run.write(
        "ensemble_compare.csv",
        "sigma_w,theory,empirical,stderr,abs_diff",
        &csv,
    )?;
    run.write_json(
        "ensemble_compare.json",
        "{tol,rows:[AgreementRow]}",
        &json!({ "tol": a.tol, "rows": rows }),
    )?;
    run.finish(cmd)?;
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !r.within_tol)
        .map(|r| format!("{}", r.sigma_w))
        .collect();
    if a.assert && !failing.is_empty() {
        return Err(CliError::Assertion(format!(
            "σ_w {} outside tol {}",
            failing.join(", "),
            a.tol
        )));
    }
    Ok(())
}

fn optimizer(o: &OptimArgs, decay: Option<StepDecay>) -> Result<OptimizerConfig, CliError> {
    let cfg = OptimizerConfig {
        kind: o.optimizer,
        lr: o.lr,
        clip: o.clip,
        decay,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn data_dir(d: &DataArgs, fallback: &str) -> PathBuf {
    d.data_dir
        .clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn load_data(dir: &Path, train: bool, limit: Option<usize>) -> Result<IdxDataset, CliError> {
    let ds = load_split(dir, train).map_err(|e| match e {
        SsbError::Io { path, source } => CliError::Core(SsbError::Io {
            path,
            source: std::io::Error::new(
                source.kind(),
                format!(
                    "{source}; place the four uncompressed IDX files \
                     (train/t10k-images-idx3-ubyte, train/t10k-labels-idx1-ubyte) in {} \
                     or point --data-dir / {DATA_DIR_ENV} at them",
                    dir.display()
                ),
            ),
        }),
        other => CliError::Core(other),
    })?;
    Ok(match limit {
        Some(n) if n < ds.count => ds.subset(&(0..n).collect::<Vec<_>>()),
        _ => ds,
    })
}

fn metrics_sink(run: &mut Run) -> Result<Metrics, CliError> {
    let p = run.path("metrics.jsonl");
    let f = File::create(&p).map_err(|e| SsbError::Io { path: p, source: e })?;
    run.record("metrics.jsonl", "MetricRecord per line");
    Ok(Metrics::with_writer(BufWriter::new(f)))
}

fn train_mlp(cmd: &Command, a: &MlpArgs) -> Result<(), CliError> {
    let spec = NetworkSpec::new(a.family, a.features, a.k, a.layers, 784, 10, a.sigma);
    spec.validate()?;
    let opt = optimizer(&a.optim, None)?;
    if a.batch == 0 || a.epochs == 0 {
        return Err(CliError::Usage("--batch and --epochs must be positive".into()));
    }
    let dir = data_dir(&a.data, "data/fashion-mnist");
    let train = load_data(&dir, true, a.data.train_limit)?;
    let test = load_data(&dir, false, a.data.test_limit)?;
    if train.pixels() != 784 {
        return Err(SsbError::Shape {
            expected: "28x28 images".into(),
            got: format!("{}x{}", train.rows, train.cols),
        }
        .into());
    }
    let mut rng = RngStream::new(a.common.seed);
    let mut model = Classifier::new(spec, &mut rng)?;
    let mut run = Run::start(&a.common)?;
    let mut metrics = metrics_sink(&mut run)?;
    let sched = EpochSchedule {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.common.seed,
        log_every: Some(50),
    };
    let ev = train_classifier(
        &mut model,
        &Labeled::from_idx(&train),
        &Labeled::from_idx(&test),
        &sched,
        opt,
        &mut metrics,
    )?;
    drop(metrics);
    model.params.save(
        &run.path("model"),
        serde_json::to_value(&model.spec).map_err(SsbError::from)?,
    )?;
    run.record("model.json", "ssb-flat checkpoint header, meta = NetworkSpec");
    run.record("model.bin", "ssb-flat payload");
    run.write_json(
        "summary.json",
        "{test_loss,test_accuracy,params}",
        &json!({
            "test_loss": ev.loss,
            "test_accuracy": ev.accuracy,
            "params": model.params.count_scalars(),
        }),
    )?;
    println!("test accuracy {:.4}, loss {:.4}", ev.accuracy, ev.loss);
    run.finish(cmd)
}

fn apply_cell_opts(spec: &mut RecurrentCellSpec, o: &CellArgs, copy_task: bool) {
    spec.rec_init = o.rec_init;
    spec.input_init = o.input_init;
    if spec.kind == CellKind::RnnGeneric {
        spec.activation = Some(o.activation);
    }
    if o.gate_bias_z.is_some() {
        spec.gate_bias_z = o.gate_bias_z;
    }
    if copy_task && o.input_init == InputInit::LowVariance {
        spec.frozen_input = Some(BLANK);
    }
}

fn run_copy(
    cmd: &Command,
    spec: RecurrentCellSpec,
    t: &CopyTaskArgs,
    o: &OptimArgs,
    common: &crate::Common,
) -> Result<(), CliError> {
    spec.validate()?;
    let task = CopyTaskConfig::new(t.tmax, t.batch)?;
    let opt = optimizer(o, None)?;
    if t.eval_every == 0 || t.eval_batch == 0 {
        return Err(CliError::Usage(
            "--eval-every and --eval-batch must be positive".into(),
        ));
    }
    let sched = CopySchedule {
        steps: t.steps,
        batch_size: t.batch,
        eval_every: t.eval_every,
        eval_batch: t.eval_batch,
        seed: common.seed,
        stop_below: t.stop_below,
    };
    let mut model = RecurrentModel::new(spec, &mut RngStream::new(common.seed))?;
    let mut run = Run::start(common)?;
    let mut metrics = metrics_sink(&mut run)?;
    let report = train_copy(&mut model, t.tmax, &sched, opt, &mut metrics)?;
    drop(metrics);
    model.params.save(
        &run.path("model"),
        serde_json::to_value(&model.spec).map_err(SsbError::from)?,
    )?;
    run.record(
        "model.json",
        "ssb-flat checkpoint header, meta = RecurrentCellSpec",
    );
    run.record("model.bin", "ssb-flat payload");
    run.write_json(
        "summary.json",
        "{report,chance_sequence_loss,chance_recall_loss,params}",
        &json!({
            "report": report,
            "chance_sequence_loss": chance_sequence_loss(&task),
            "chance_recall_loss": chance_recall_loss(),
            "params": model.params.count_scalars(),
        }),
    )?;
    println!(
        "{} steps, best recall loss {:.3e} (chance {:.4}), last test loss {:.3e}",
        report.steps_run,
        report.best_recall_loss,
        chance_recall_loss(),
        report.last.loss
    );
    run.finish(cmd)
}

fn copy(cmd: &Command, a: &CopyArgs) -> Result<(), CliError> {
    if a.cell == CellKind::Conv2dU1 {
        return Err(CliError::Usage("use train-conv-copy for conv2d_u1".into()));
    }
    let mut spec = RecurrentCellSpec::new(a.cell, a.n, TOKEN_DIM, TOKEN_DIM);
    if a.cell == CellKind::RnnOk {
        spec.k = a.k;
    }
    apply_cell_opts(&mut spec, &a.cell_opts, true);
    run_copy(cmd, spec, &a.task, &a.optim, &a.common)
}

fn grid_of(g: &crate::ConvGridArgs) -> ConvGrid {
    ConvGrid {
        channels: g.channels,
        height: g.height,
        width: g.width,
    }
}

fn conv_copy(cmd: &Command, a: &ConvCopyArgs) -> Result<(), CliError> {
    let mut spec = RecurrentCellSpec::conv(grid_of(&a.grid), TOKEN_DIM, TOKEN_DIM);
    apply_cell_opts(&mut spec, &a.cell_opts, true);
    run_copy(cmd, spec, &a.task, &a.optim, &a.common)
}

fn seq_image(cmd: &Command, a: &SeqImageArgs) -> Result<(), CliError> {
    if a.cell == CellKind::Conv2dU1 {
        return Err(CliError::Usage("conv2d_u1 is only wired to the copy task".into()));
    }
    let mut spec = RecurrentCellSpec::new(a.cell, a.n, 1, 10);
    if a.cell == CellKind::RnnOk {
        spec.k = a.k;
    }
    apply_cell_opts(&mut spec, &a.cell_opts, false);
    spec.validate()?;
    if a.batch == 0 || a.epochs == 0 {
        return Err(CliError::Usage("--batch and --epochs must be positive".into()));
    }
    optimizer(&a.optim, None)?;
    let dir = data_dir(&a.data, "data/mnist");
    let train = load_data(&dir, true, a.data.train_limit)?;
    let test = load_data(&dir, false, a.data.test_limit)?;
    let splits = sequential_splits(&train, &test, a.permute_seed, a.val_size, a.common.seed)?;
    let (tr, val, te) = (
        Labeled::from_seq(&splits.train),
        Labeled::from_seq(&splits.val),
        Labeled::from_seq(&splits.test),
    );
    let steps_per_epoch = tr.len().div_ceil(a.batch) as u64;
    let opt = optimizer(
        &a.optim,
        Some(StepDecay {
            after_steps: a.decay_after as u64 * steps_per_epoch,
            factor: 0.1,
        }),
    )?;
    let mut model = RecurrentModel::new(spec, &mut RngStream::new(a.common.seed))?;
    let mut run = Run::start(&a.common)?;
    let mut metrics = metrics_sink(&mut run)?;
    let sched = EpochSchedule {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.common.seed,
        log_every: Some(50),
    };
    let ev = train_seq_image(&mut model, &tr, &val, &te, &sched, opt, &mut metrics)?;
    drop(metrics);
    model.params.save(
        &run.path("model"),
        serde_json::to_value(&model.spec).map_err(SsbError::from)?,
    )?;
    run.record(
        "model.json",
        "ssb-flat checkpoint header, meta = RecurrentCellSpec",
    );
    run.record("model.bin", "ssb-flat payload");
    run.write_json(
        "summary.json",
        "{test_loss,test_accuracy,params,permutation}",
        &json!({
            "test_loss": ev.loss,
            "test_accuracy": ev.accuracy,
            "params": model.params.count_scalars(),
            "permutation": splits.permutation,
        }),
    )?;
    println!("test accuracy {:.4}, loss {:.4}", ev.accuracy, ev.loss);
    run.finish(cmd)
}

/// The analytic check: one +1 vortex centred in plaquette (3, 3) of an 8×8 grid.
pub fn vortex_self_test() -> bool {
    synthetic_vortices(8, 8, &[(3.5, 3.5, 1)])
        .map(|f| winding_numbers(&f).cores() == vec![(3, 3, 1)])
        .unwrap_or(false)
}

fn load_conv_model(stem: &Path) -> Result<RecurrentModel, CliError> {
    if !stem.with_extension("json").is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}", stem.display())));
    }
    let (meta, _) = ssb_core::io::read_flat(stem)?;
    let spec: RecurrentCellSpec = serde_json::from_value(meta).map_err(|e| SsbError::Format {
        offset: 0,
        message: format!("checkpoint meta is not a recurrent cell spec: {e}"),
    })?;
    if spec.kind != CellKind::Conv2dU1 || spec.grid.is_none() {
        return Err(SsbError::Format {
            offset: 0,
            message: format!("checkpoint holds a {} cell, not conv2d_u1", spec.kind),
        }
        .into());
    }
    let mut model = RecurrentModel::new(spec, &mut RngStream::new(0))?;
    model.params.load(stem).map_err(|e| match e {
        SsbError::Shape { expected, got } => SsbError::Format {
            offset: 0,
            message: format!("checkpoint arrays do not match its spec: expected {expected}, got {got}"),
        },
        other => other,
    })?;
    Ok(model)
}

fn vortices(cmd: &Command, a: &VortexArgs) -> Result<(), CliError> {
    if a.self_test {
        let ok = vortex_self_test();
        println!(
            "{} synthetic single vortex at plaquette (3, 3)",
            if ok { "PASS" } else { "FAIL" }
        );
        return if ok {
            Ok(())
        } else {
            Err(CliError::Assertion("synthetic vortex self-test".into()))
        };
    }
    let model = match (&a.checkpoint, a.random_init) {
        (Some(p), _) => load_conv_model(p)?,
        (None, true) => {
            let mut spec = RecurrentCellSpec::conv(grid_of(&a.grid), TOKEN_DIM, TOKEN_DIM);
            spec.rec_init = RecInit::Random;
            RecurrentModel::new(spec, &mut RngStream::new(a.common.seed))?
        }
        (None, false) => return Err(CliError::Usage("pass --checkpoint PATH or --random-init".into())),
    };
    let grid = model.spec.grid.expect("conv cell has a grid");
    if a.channel >= grid.channels {
        return Err(CliError::Usage(format!(
            "--channel {} but the grid has {}",
            a.channel, grid.channels
        )));
    }
    if a.steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    let task = CopyTaskConfig::new(a.steps.saturating_sub(21), 1)?;
    let batch = gen_copy_batch(&task, &mut RngStream::new(a.common.seed).fork(7));
    let inputs: Vec<Array2<f64>> = (0..a.steps.min(batch.time_steps()))
        .map(|t| batch.input_at(t))
        .collect();
    let traj = model.rollout(&inputs)?;
    let steps = vortex_timeseries(&traj, grid, a.channel, a.threshold)?;
    let mut run = Run::start(&a.common)?;
    run.write("vortices.csv", "t,n_plus,n_minus", &vortex_csv(&steps))?;
    if a.dump {
        for (h, s) in traj.iter().zip(&steps) {
            let name = format!("fields/t{:04}", s.t);
            let f = PhaseField::from_state(h, 0, grid, a.channel, s.t)?;
            dump_field(&run.path(&name), &f, &s.map)?;
            run.record(&format!("{name}.json"), "ssb-flat: theta, magnitude, winding");
        }
    }
    let unbalanced = steps.iter().filter(|s| s.map.n_plus != s.map.n_minus).count();
    let annihilated: usize = steps.iter().map(|s| s.annihilations).sum();
    println!(
        "{} steps, {} with n+ != n-, {} annihilated pairs",
        steps.len(),
        unbalanced,
        annihilated
    );
    run.finish(cmd)
}
