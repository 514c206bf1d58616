use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::artifacts::*;
use super::config::ExperimentConfig;
use crate::error::{Result, RomError};
use crate::estimator::{run_full_ekf, run_pod_ekf, run_pod_mlp_ekf, simulate_measured, EkfConfig, FilterRun, MeasuredRun, NoiseModel, PhaseTiming};
use crate::excitation::{generate_prms, write_inputs_csv};
use crate::mlp::{read_model, rollout, train, write_model, MlpParams, Split, Surrogate, SurrogateFrame};
use crate::plant::{self, Input, PlantConfig, NUM_INPUTS};
use crate::pod::{compute_basis, fit_normalization, order_sweep, reconstruct, reduce, rmse, NormalizationParams, ReducedBasis};

pub const SNAPSHOTS: &str = "snapshots.csv";
pub const INPUTS: &str = "inputs.csv";
pub const BASIS: &str = "basis.bin";
pub const RMSE_VS_ORDER: &str = "rmse_vs_order.csv";
pub const MODEL: &str = "model.bin";
pub const LOSS_HISTORY: &str = "loss_history.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.csv";
pub const ROLLOUT: &str = "rollout.csv";
pub const ESTIMATE_INPUTS: &str = "estimate_inputs.csv";
pub const TRUTH: &str = "truth.csv";
pub const MEASUREMENTS: &str = "measurements.csv";
pub const ESTIMATE_SUMMARY: &str = "estimate_summary.csv";
pub const BENCHMARK_MEASUREMENTS: &str = "benchmark_measurements.csv";
pub const TIMING: &str = "timing.csv";
pub const SPEEDUP: &str = "speedup.csv";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Reduce,
    Train,
    Estimate,
    Benchmark,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reduce => "reduce",
            Command::Train => "train",
            Command::Estimate => "estimate",
            Command::Benchmark => "benchmark",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    PodMlpEkf,
    Ekf,
    PodEkf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Ekf, FilterKind::PodEkf, FilterKind::PodMlpEkf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::PodMlpEkf => "pod-mlp-ekf",
            FilterKind::Ekf => "ekf",
            FilterKind::PodEkf => "pod-ekf",
        }
    }

    /// `None` selects the POD-MLP-EKF, `all` every filter.
    pub fn parse_selection(name: Option<&str>) -> Result<Vec<FilterKind>> {
        match name {
            None => Ok(vec![FilterKind::PodMlpEkf]),
            Some("all") => Ok(Self::ALL.to_vec()),
            Some(s) => Ok(vec![s.parse()?]),
        }
    }
}

impl FromStr for FilterKind {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| RomError::Config(format!("unknown filter `{s}` (expected ekf, pod-ekf, pod-mlp-ekf or all)")))
    }
}

/// Runs one command and records its outputs in the manifest. Files a
/// previous run of the same command produced and this one did not are
/// removed, so the directory and the manifest stay in step.
pub fn run(command: Command, config: &ExperimentConfig, filter: Option<&str>) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let out = config.out_dir.as_path();
    fs::create_dir_all(out)?;
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let t0 = Instant::now();
    let files = match command {
        Command::Simulate => cmd_simulate(config, out)?,
        Command::Reduce => cmd_reduce(config, out)?,
        Command::Train => cmd_train(config, out)?,
        Command::Estimate => cmd_estimate(config, out, &FilterKind::parse_selection(filter)?)?,
        Command::Benchmark => cmd_benchmark(config, out)?,
        Command::Report => cmd_report(config, out)?,
    };
    let record = CommandRecord { started_unix_s, elapsed_s: t0.elapsed().as_secs_f64() };

    let hash = config.hash();
    let mut manifest = match RunManifest::load(out)? {
        Some(m) if m.config_hash == hash => m,
        _ => RunManifest::new(hash, config.seeds()),
    };
    for stale in manifest.files.iter().filter(|e| e.command == command.name()) {
        let path = out.join(&stale.path);
        if !files.iter().any(|(p, _)| *p == path) && path.is_file() {
            fs::remove_file(path)?;
        }
    }
    manifest.record(out, command.name(), &files, record)?;
    manifest.save(out)?;
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

type Outputs = Vec<(PathBuf, bool)>;

/// `x(0) = x0`, then one plant step per input.
pub fn simulate_states(config: &PlantConfig, x0: &DVector<f64>, inputs: &[Input]) -> Result<Vec<DVector<f64>>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for u in inputs {
        let next = plant::step(config, states.last().unwrap(), u, None)?;
        states.push(next);
    }
    Ok(states)
}

fn steady_state(config: &ExperimentConfig) -> Result<DVector<f64>> {
    plant::steady_state(&config.plant, &config.plant.nominal_input())
}

fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let x_s = steady_state(config)?;
    let inputs = generate_prms(&config.excitation.prms(config.simulate.horizon_samples, config.seeds().snapshots))?;
    let states = simulate_states(&config.plant, &x_s, &inputs)?;
    let chi = DMatrix::from_columns(&states);
    write_snapshots(&out.join(SNAPSHOTS), &chi)?;
    write_inputs_csv(&out.join(INPUTS), &inputs)?;
    Ok(vec![(out.join(SNAPSHOTS), false), (out.join(INPUTS), false)])
}

fn load_snapshots(out: &Path) -> Result<DMatrix<f64>> {
    let path = out.join(SNAPSHOTS);
    require(&path, "simulate")?;
    read_snapshots(&path)
}

fn load_reduction(out: &Path) -> Result<(ReducedBasis, NormalizationParams)> {
    let path = out.join(BASIS);
    require(&path, "reduce")?;
    load_basis(&path)
}

fn load_surrogate(out: &Path) -> Result<Surrogate> {
    let path = out.join(MODEL);
    require(&path, "train")?;
    read_model(std::io::BufReader::new(fs::File::open(&path)?)).map_err(|e| match e {
        RomError::Contract(reason) => RomError::Format { path, reason },
        other => other,
    })
}

/// The held-out trajectory from the steady state used to score reduction
/// orders and open-loop rollouts.
pub fn validation_trajectory(config: &ExperimentConfig, x_s: &DVector<f64>) -> Result<(Vec<Input>, Vec<DVector<f64>>)> {
    let inputs = generate_prms(&config.excitation.prms(config.reduce.validation_samples, config.seeds().validation))?;
    let states = simulate_states(&config.plant, x_s, &inputs)?;
    Ok((inputs, states))
}

fn cmd_reduce(config: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let chi = load_snapshots(out)?;
    if chi.nrows() != config.plant.state_dim() {
        return Err(RomError::Format { path: out.join(SNAPSHOTS), reason: format!("{} state rows, plant has {}", chi.nrows(), config.plant.state_dim()) });
    }
    let params = fit_normalization(&chi)?;
    let basis = compute_basis(&params.normalize_matrix(&chi)?, config.reduce.order)?;
    save_basis(&out.join(BASIS), &basis, &params)?;

    let x_s = chi.column(0).into_owned();
    let (_, states) = validation_trajectory(config, &x_s)?;
    let sweep = order_sweep(&chi, &DMatrix::from_columns(&states), &params, &config.reduce.sweep_orders)?;
    let header = ["r", "log_rmse_norm", "log_rmse_raw"].map(String::from);
    write_rows(
        &out.join(RMSE_VS_ORDER),
        &header,
        sweep.iter().map(|e| [e.order.to_string(), e.rmse_normalized.log10().to_string(), e.rmse_raw.log10().to_string()]),
    )?;
    Ok(vec![(out.join(BASIS), false), (out.join(RMSE_VS_ORDER), false)])
}

/// Reduced transition pairs cut from seeded PRMS trajectories. Trajectory
/// `j` uses seed `training + j` for its excitation and for its start: a
/// random snapshot column plus uniform noise of `start_perturbation` times
/// the per-state range, clipped at zero.
///
/// Returns `([u; xi(k)], xi(k+1))`, one pair per column.
pub fn transition_pairs(config: &ExperimentConfig, chi: &DMatrix<f64>, basis: &ReducedBasis, params: &NormalizationParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = &config.train;
    let r = basis.order();
    let range = &params.x_max - &params.x_min;
    let mut inputs = DMatrix::zeros(NUM_INPUTS + r, t.pairs);
    let mut targets = DMatrix::zeros(r, t.pairs);
    let mut filled = 0;
    let mut j = 0u64;
    while filled < t.pairs {
        let seed = config.seeds().training.wrapping_add(j);
        j += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = chi.column(rng.random_range(0..chi.ncols()));
        let mut x = DVector::from_fn(base.len(), |i, _| (base[i] + t.start_perturbation * range[i] * rng.random_range(-1.0..=1.0)).max(0.0));
        let mut xi = reduce(&x, basis, params)?;
        for u in generate_prms(&config.excitation.prms(t.trajectory_samples, seed))? {
            if filled == t.pairs {
                break;
            }
            x = plant::step(&config.plant, &x, &u, None)?;
            let next = reduce(&x, basis, params)?;
            inputs.view_mut((0, filled), (NUM_INPUTS, 1)).copy_from_slice(u.as_slice());
            inputs.view_mut((NUM_INPUTS, filled), (r, 1)).copy_from(&xi);
            targets.set_column(filled, &next);
            xi = next;
            filled += 1;
        }
    }
    Ok((inputs, targets))
}

/// Normalized RMSE between trajectories over samples `from..`.
pub fn normalized_rmse(params: &NormalizationParams, truth: &[DVector<f64>], estimate: &[DVector<f64>], from: usize) -> Result<f64> {
    if truth.len() != estimate.len() || from + 2 > truth.len() {
        return Err(RomError::contract(format!("cannot score {} vs {} samples from {from}", truth.len(), estimate.len())));
    }
    let norm = |xs: &[DVector<f64>]| -> Result<DMatrix<f64>> {
        let cols = xs[from..].iter().map(|x| params.normalize(x)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    };
    rmse(&norm(truth)?, &norm(estimate)?)
}

fn cmd_train(config: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let chi = load_snapshots(out)?;
    let (basis, params) = load_reduction(out)?;
    let seeds = config.seeds();
    let (inputs, targets) = transition_pairs(config, &chi, &basis, &params)?;
    let t = &config.train;
    let split = Split::shuffled(inputs.ncols(), t.train_fraction, t.validation_fraction, seeds.split)?;
    let frame = SurrogateFrame::fit(&inputs, &targets, &split.train, t.affine_skip)?;
    let data = frame.dataset(&inputs, &targets, split)?;
    let init = MlpParams::glorot(&t.layer_dims(basis.order()), seeds.init)?;
    let optimizer = t.optimizer.train_config(seeds.shuffle);
    let outcome = train(&init, &data, &optimizer)?;
    let (test_x, test_y) = data.select(&data.split.test);
    let test_mse = outcome.params.loss(&test_x, &test_y)?;
    let validation_mse = outcome.history[outcome.best_epoch].validation;
    let model = frame.assemble(outcome.params)?;
    {
        let mut w = std::io::BufWriter::new(fs::File::create(out.join(MODEL))?);
        write_model(&mut w, &model)?;
        std::io::Write::flush(&mut w)?;
    }
    write_rows(
        &out.join(LOSS_HISTORY),
        &["epoch", "train_mse", "validation_mse"].map(String::from),
        outcome.history.iter().map(|e| [e.epoch.to_string(), e.train.to_string(), e.validation.to_string()]),
    )?;

    // open-loop rollout over the held-out trajectory
    let x_s = chi.column(0).into_owned();
    let (val_inputs, truth) = validation_trajectory(config, &x_s)?;
    let xi = rollout(&model, &reduce(&x_s, &basis, &params)?, &val_inputs)?;
    let predicted = xi.iter().map(|v| reconstruct(v, &basis, &params)).collect::<Result<Vec<_>>>()?;
    let projected = truth.iter().map(|x| reconstruct(&reduce(x, &basis, &params)?, &basis, &params)).collect::<Result<Vec<_>>>()?;
    let rollout_rmse = normalized_rmse(&params, &truth, &predicted, 0)?;
    let projection_rmse = normalized_rmse(&params, &truth, &projected, 0)?;
    let n = basis.state_dim();
    let mut header = vec!["sample_index".to_string(), "error_norm".to_string()];
    header.extend((1..=n).map(|i| format!("pred_{i}")));
    header.extend((1..=n).map(|i| format!("true_{i}")));
    let mut rows = Vec::with_capacity(truth.len());
    for (k, (p, x)) in predicted.iter().zip(&truth).enumerate() {
        let err = (params.normalize(p)? - params.normalize(x)?).norm();
        let mut row = vec![k.to_string(), err.to_string()];
        row.extend(p.iter().chain(x.iter()).map(|v| v.to_string()));
        rows.push(row);
    }
    write_rows(&out.join(ROLLOUT), &header, rows)?;

    let s = &data.split;
    let summary = [
        ("pairs", data.len().to_string()),
        ("train_samples", s.train.len().to_string()),
        ("validation_samples", s.validation.len().to_string()),
        ("test_samples", s.test.len().to_string()),
        ("parameters", model.network.num_parameters().to_string()),
        ("epochs_run", (outcome.history.len() - 1).to_string()),
        ("best_epoch", outcome.best_epoch.to_string()),
        ("validation_mse", validation_mse.to_string()),
        ("test_mse", test_mse.to_string()),
        ("rollout_rmse_normalized", rollout_rmse.to_string()),
        ("projection_rmse_normalized", projection_rmse.to_string()),
    ];
    write_rows(&out.join(TRAIN_SUMMARY), &["metric", "value"].map(String::from), summary.iter().map(|(k, v)| [k.to_string(), v.clone()]))?;
    Ok([MODEL, LOSS_HISTORY, ROLLOUT, TRAIN_SUMMARY].iter().map(|f| (out.join(f), false)).collect())
}

/// The noisy run shared by `estimate` and `benchmark`.
pub fn experiment_run(config: &ExperimentConfig, x_s: &DVector<f64>) -> Result<(MeasuredRun, NoiseModel)> {
    let seeds = config.seeds();
    let e = &config.estimate;
    let selection = plant::temperature_selection(&config.plant);
    let noise = NoiseModel::from_steady_state(x_s, &selection, e.noise_relative)?;
    let inputs = generate_prms(&config.excitation.prms(e.horizon_samples, seeds.estimate))?;
    Ok((simulate_measured(&config.plant, x_s, &inputs, &noise, seeds.noise)?, noise))
}

struct FilterContext<'a> {
    config: &'a ExperimentConfig,
    basis: &'a ReducedBasis,
    params: &'a NormalizationParams,
    model: &'a Surrogate,
    noise: &'a NoiseModel,
}

impl FilterContext<'_> {
    fn run(&self, kind: FilterKind, run: &MeasuredRun, health: bool) -> Result<FilterRun> {
        let reduced = || -> Result<EkfConfig> {
            let mut c = EkfConfig::reduced(self.noise, self.basis, self.params)?;
            c.p0 = DMatrix::identity(self.basis.order(), self.basis.order()) * self.config.estimate.p0_variance;
            Ok(c)
        };
        match kind {
            FilterKind::PodMlpEkf => run_pod_mlp_ekf(run, self.model, self.basis, self.params, &reduced()?, health),
            FilterKind::PodEkf => run_pod_ekf(run, &self.config.plant, self.basis, self.params, &reduced()?, health),
            FilterKind::Ekf => {
                let mut c = EkfConfig::full(self.noise, self.params)?;
                let d2 = self.params.scale().map(|s| s * s * self.config.estimate.p0_variance);
                c.p0 = DMatrix::from_diagonal(&d2);
                run_full_ekf(run, &self.config.plant, self.params, &c, health)
            }
        }
    }
}

/// One filter on the estimation run, with the truth needed to score it.
pub struct FilterEvaluation {
    pub run: MeasuredRun,
    pub result: FilterRun,
    pub params: NormalizationParams,
}

impl FilterEvaluation {
    /// Normalized full-state RMSE with the configured burn-in excluded.
    pub fn rmse_after_burn_in(&self, burn_in: usize) -> Result<f64> {
        normalized_rmse(&self.params, &self.run.states, &self.result.estimates, burn_in + 1)
    }
}

/// Loads the trained artifacts from `out` and runs `kind` on the noisy run
/// described by `config`, optionally recording covariance diagnostics.
pub fn evaluate_filter(config: &ExperimentConfig, out: &Path, kind: FilterKind, health: bool) -> Result<FilterEvaluation> {
    let chi = load_snapshots(out)?;
    let (basis, params) = load_reduction(out)?;
    let model = load_surrogate(out)?;
    let x_s = chi.column(0).into_owned();
    let (run, noise) = experiment_run(config, &x_s)?;
    let ctx = FilterContext { config, basis: &basis, params: &params, model: &model, noise: &noise };
    let result = ctx.run(kind, &run, health)?;
    Ok(FilterEvaluation { run, result, params })
}

fn cmd_estimate(config: &ExperimentConfig, out: &Path, filters: &[FilterKind]) -> Result<Outputs> {
    let chi = load_snapshots(out)?;
    let (basis, params) = load_reduction(out)?;
    let model = load_surrogate(out)?;
    let x_s = chi.column(0).into_owned();
    let (run, noise) = experiment_run(config, &x_s)?;
    write_inputs_csv(&out.join(ESTIMATE_INPUTS), &run.inputs)?;
    write_trajectory(&out.join(TRUTH), "x_", 0, &run.states)?;
    write_trajectory(&out.join(MEASUREMENTS), "y_", 1, &run.measurements)?;
    let mut files = vec![(out.join(ESTIMATE_INPUTS), false), (out.join(TRUTH), false), (out.join(MEASUREMENTS), false)];

    let from = config.estimate.burn_in + 1;
    let mut summary = Vec::new();
    let xi_open = rollout(&model, &reduce(&x_s, &basis, &params)?, &run.inputs)?;
    let open_loop = xi_open.iter().map(|v| reconstruct(v, &basis, &params)).collect::<Result<Vec<_>>>()?;
    summary.push(("open-loop".to_string(), normalized_rmse(&params, &run.states, &open_loop, from)?, normalized_rmse(&params, &run.states, &open_loop, 0)?));

    let ctx = FilterContext { config, basis: &basis, params: &params, model: &model, noise: &noise };
    let layout = config.plant.layout();
    let scale = params.scale();
    for &kind in filters {
        let result = ctx.run(kind, &run, false)?;
        let est_path = out.join(format!("estimates_{}.csv", kind.name()));
        write_trajectory(&est_path, "xhat_", 0, &result.estimates)?;
        let samples = (run.states.len() - from) as f64;
        let rows = (0..basis.state_dim()).map(|i| {
            let sq: f64 = run.states[from..].iter().zip(&result.estimates[from..]).map(|(x, e)| (x[i] - e[i]).powi(2)).sum();
            let phys = (sq / samples).sqrt();
            let norm = if scale[i] > 0.0 { phys / scale[i] } else { 0.0 };
            [(i + 1).to_string(), layout.label(i), phys.to_string(), norm.to_string()]
        });
        let rmse_path = out.join(format!("state_rmse_{}.csv", kind.name()));
        write_rows(&rmse_path, &["state_index", "label", "rmse", "rmse_normalized"].map(String::from), rows)?;
        summary.push((kind.name().to_string(), normalized_rmse(&params, &run.states, &result.estimates, from)?, normalized_rmse(&params, &run.states, &result.estimates, 0)?));
        files.push((est_path, false));
        files.push((rmse_path, false));
    }
    write_rows(
        &out.join(ESTIMATE_SUMMARY),
        &["filter", "rmse_normalized", "rmse_normalized_all", "burn_in"].map(String::from),
        summary.iter().map(|(name, a, b)| [name.clone(), a.to_string(), b.to_string(), config.estimate.burn_in.to_string()]),
    )?;
    files.push((out.join(ESTIMATE_SUMMARY), false));
    Ok(files)
}

/// Timing of every filter on one measurement file.
pub struct Benchmark {
    pub timings: Vec<(FilterKind, PhaseTiming)>,
    pub measurement_digest: String,
}

impl Benchmark {
    pub fn total_s(&self, kind: FilterKind) -> Option<f64> {
        self.timings.iter().find(|(k, _)| *k == kind).map(|(_, t)| t.total().as_secs_f64())
    }

    pub fn speedup(&self, kind: FilterKind) -> Option<f64> {
        Some(self.total_s(FilterKind::Ekf)? / self.total_s(kind)?)
    }
}

/// Writes the measurement file, reads it back and runs every filter on
/// exactly those bytes.
pub fn run_benchmark(config: &ExperimentConfig, out: &Path) -> Result<Benchmark> {
    let chi = load_snapshots(out)?;
    let (basis, params) = load_reduction(out)?;
    let model = load_surrogate(out)?;
    let x_s = chi.column(0).into_owned();
    let (mut run, noise) = experiment_run(config, &x_s)?;
    let path = out.join(BENCHMARK_MEASUREMENTS);
    write_trajectory(&path, "y_", 1, &run.measurements)?;
    run.measurements = read_trajectory(&path)?;
    let measurement_digest = sha256_file(&path)?;
    let ctx = FilterContext { config, basis: &basis, params: &params, model: &model, noise: &noise };
    let timings = FilterKind::ALL.iter().map(|&k| Ok((k, ctx.run(k, &run, false)?.timing))).collect::<Result<Vec<_>>>()?;
    Ok(Benchmark { timings, measurement_digest })
}

fn cmd_benchmark(config: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let bench = run_benchmark(config, out)?;
    let mut rows = Vec::new();
    for (kind, t) in &bench.timings {
        for phase in PhaseTiming::PHASES {
            let d = t.phase(phase).unwrap();
            rows.push([kind.name().to_string(), phase.to_string(), t.mean_ms(d).to_string(), d.as_secs_f64().to_string()]);
        }
    }
    write_rows(&out.join(TIMING), &["filter_name", "phase", "mean_ms", "total_s"].map(String::from), rows)?;
    write_rows(
        &out.join(SPEEDUP),
        &["filter_name", "total_s", "speedup_vs_ekf", "measurement_sha256"].map(String::from),
        bench.timings.iter().map(|(k, _)| {
            [k.name().to_string(), bench.total_s(*k).unwrap().to_string(), bench.speedup(*k).unwrap().to_string(), bench.measurement_digest.clone()]
        }),
    )?;
    Ok(vec![(out.join(BENCHMARK_MEASUREMENTS), false), (out.join(TIMING), true), (out.join(SPEEDUP), true)])
}

fn require_all(out: &Path, needed: &[(&str, &'static str)]) -> Result<()> {
    needed.iter().try_for_each(|(f, cmd)| require(&out.join(f), cmd))
}

fn copy_columns(table: &Table, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let cols = names
        .iter()
        .map(|n| table.column(n).ok_or_else(|| RomError::contract(format!("column {n} missing"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..table.rows.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect())
}

fn fmt_row(row: &[f64]) -> Vec<String> {
    row.iter().map(|v| v.to_string()).collect()
}

/// Representative states for the trajectory figures: lean CO2 leaving the
/// absorber, a mid-absorber temperature, rich CO2 at the desorber bottom and
/// the reboiler temperature. Returns zero-based indices.
fn figure_states(plant: &PlantConfig) -> Vec<usize> {
    let lay = plant.layout();
    let last = plant.stages_per_column - 1;
    vec![lay.liquid(plant::ABSORBER, 1, last), lay.liquid_temp(plant::ABSORBER, last / 2), lay.liquid(plant::DESORBER, 1, last), lay.t_reb()]
}

/// Collates existing artifacts into plot-ready CSVs and a markdown summary.
/// Reads only files written by earlier commands.
fn cmd_report(config: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    require_all(
        out,
        &[(RMSE_VS_ORDER, "reduce"), (TRAIN_SUMMARY, "train"), (ROLLOUT, "train"), (ESTIMATE_SUMMARY, "estimate"), (TRUTH, "estimate"), (TIMING, "benchmark"), (SPEEDUP, "benchmark")],
    )?;
    let est_file = format!("estimates_{}.csv", FilterKind::PodMlpEkf.name());
    require(&out.join(&est_file), "estimate")?;
    let manifest = RunManifest::load(out)?.ok_or_else(|| RomError::MissingArtifact { path: out.join(MANIFEST_FILE), command: "simulate" })?;
    let dir = out.join(REPORT_DIR);
    fs::create_dir_all(&dir)?;
    let layout = config.plant.layout();
    let picks = figure_states(&config.plant);
    let labels: Vec<String> = picks.iter().map(|&i| layout.label(i)).collect();

    let fig3 = read_table(&out.join(RMSE_VS_ORDER))?;
    write_rows(&dir.join("fig3_rmse_vs_order.csv"), &fig3.header, fig3.rows.iter().map(|r| fmt_row(r)))?;

    let roll = read_table(&out.join(ROLLOUT))?;
    let mut names = vec!["sample_index".to_string(), "error_norm".to_string()];
    for &i in &picks {
        names.push(format!("pred_{}", i + 1));
        names.push(format!("true_{}", i + 1));
    }
    let mut header = vec!["sample_index".to_string(), "error_norm".to_string()];
    for l in &labels {
        header.push(format!("pred {l}"));
        header.push(format!("true {l}"));
    }
    write_rows(&dir.join("fig5_rollout.csv"), &header, copy_columns(&roll, &names)?.iter().map(|r| fmt_row(r)))?;

    let truth = read_table(&out.join(TRUTH))?;
    let est = read_table(&out.join(&est_file))?;
    let t_cols = copy_columns(&truth, &picks.iter().map(|i| format!("x_{}", i + 1)).collect::<Vec<_>>())?;
    let e_cols = copy_columns(&est, &picks.iter().map(|i| format!("xhat_{}", i + 1)).collect::<Vec<_>>())?;
    let mut header = vec!["sample_index".to_string()];
    for l in &labels {
        header.push(format!("true {l}"));
        header.push(format!("estimate {l}"));
    }
    write_rows(
        &dir.join("fig6_estimates.csv"),
        &header,
        t_cols.iter().zip(&e_cols).enumerate().map(|(k, (t, e))| {
            let mut row = vec![k.to_string()];
            for (a, b) in t.iter().zip(e) {
                row.push(a.to_string());
                row.push(b.to_string());
            }
            row
        }),
    )?;

    let timing = read_table_text(&out.join(TIMING))?;
    let mut filters: Vec<String> = Vec::new();
    for row in &timing {
        if !filters.contains(&row[0]) {
            filters.push(row[0].clone());
        }
    }
    let total_of = |f: &str, phase: &str| timing.iter().find(|r| r[0] == f && r[1] == phase).map(|r| r[3].clone()).unwrap_or_default();
    let mut table3_header = vec!["filter_name".to_string()];
    table3_header.extend(PhaseTiming::PHASES.iter().map(|p| format!("{p}_s")));
    write_rows(
        &dir.join("table3_timing.csv"),
        &table3_header,
        filters.iter().map(|f| std::iter::once(f.clone()).chain(PhaseTiming::PHASES.iter().map(|p| total_of(f, p))).collect::<Vec<_>>()),
    )?;

    let mut md = String::from("# Experiment report\n\n");
    md += &format!("Config hash `{}`, base seed {}.\n\n", manifest.config_hash, config.seed);
    md += "## Reduction order sweep (log10 validation RMSE)\n\n| r | normalized | raw |\n|---|---|---|\n";
    for r in &fig3.rows {
        md += &format!("| {} | {:.4} | {:.4} |\n", r[0], r[1], r[2]);
    }
    md += "\n## Surrogate\n\n| metric | value |\n|---|---|\n";
    for r in read_table_text(&out.join(TRAIN_SUMMARY))? {
        md += &format!("| {} | {} |\n", r[0], r[1]);
    }
    md += "\n## Estimation (normalized RMSE)\n\n| filter | after burn-in | all samples |\n|---|---|---|\n";
    for r in read_table_text(&out.join(ESTIMATE_SUMMARY))? {
        md += &format!("| {} | {} | {} |\n", r[0], r[1], r[2]);
    }
    md += "\n## Runtime\n\n| filter | total (s) | speedup vs ekf |\n|---|---|---|\n";
    for r in read_table_text(&out.join(SPEEDUP))? {
        md += &format!("| {} | {} | {} |\n", r[0], r[1], r[2]);
    }
    md += "\n## Inputs\n\n| file | sha256 |\n|---|---|\n";
    for e in manifest.files.iter().filter(|e| !e.path.starts_with(REPORT_DIR)) {
        md += &format!("| {} | `{}` |\n", e.path, e.sha256);
    }
    fs::write(dir.join("summary.md"), md)?;

    Ok(vec![
        (dir.join("fig3_rmse_vs_order.csv"), false),
        (dir.join("fig5_rollout.csv"), false),
        (dir.join("fig6_estimates.csv"), false),
        (dir.join("table3_timing.csv"), true),
        (dir.join("summary.md"), true),
    ])
}

fn read_table_text(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.records().map(|r| Ok(r?.iter().map(str::to_string).collect())).collect()
}
