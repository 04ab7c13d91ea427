use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use recoilfree::composite::{gate_grid, Branch, GateGridPoint};
use recoilfree::linalg::{rx, Mat2};
use recoilfree::model::{apply_intensity_deviation, IntensityDeviation, SystemParams};
use recoilfree::optimizer::{
    intensity_grid, optimize_mikado, optimize_recoil_free, CostComponents, CostWeights, IterationRecord, OptimizeConfig, RestartSummary,
};
use recoilfree::oracles::{fock_state, product_state, semiclassical_trajectory, simulated_centroid, BlochInit};
use recoilfree::perturbation::expansion_report;
use recoilfree::propagator::{default_n_steps, evolve_columns, PropagationConfig};
use recoilfree::pulse::{PulseShape, DEFAULT_N_C};
use recoilfree::rb::{default_depths, idealized_resources, mossbauer_pulse, mossbauer_resources, pulse_resources, run_rb, GateMode, RBConfig};
use recoilfree::tomography::{process_tomography_columns, ProcessRecord, Target};

use crate::artifacts::{Meta, OutDir};
use crate::config::{resolve_system, Loaded, ResolvedSystem, SystemOverrides};

/// Outcome of a command that completed without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The optimizer hit its budget without meeting the convergence test.
    NotConverged,
}

pub struct Common {
    pub loaded: Loaded,
    pub seed: u64,
    pub out: PathBuf,
    pub system: SystemOverrides,
}

fn parse_target(name: &str) -> Result<Target> {
    match name {
        "rx90" => Ok(Target::Unitary(rx(FRAC_PI_2))),
        "mikado" => Ok(Target::Mikado),
        "identity" => Ok(Target::Unitary(Mat2::identity())),
        other => bail!("unknown target `{other}` (expected rx90, mikado or identity)"),
    }
}

fn prop(n_steps: Option<usize>) -> PropagationConfig {
    PropagationConfig { n_steps, ..PropagationConfig::default() }
}

fn read_pulse(meta: &mut Meta, path: &Path) -> Result<PulseShape> {
    let text = meta.read_input(path)?;
    PulseShape::from_json(&text).with_context(|| format!("invalid pulse file {}", path.display()))
}

/// Tomography of a pulse at one relative intensity deviation.
fn evaluate(pulse: &PulseShape, params: &SystemParams, target: &Target, rel_dev: f64, n_steps: Option<usize>) -> Result<recoilfree::tomography::ProcessResult> {
    let p = if rel_dev == 0.0 { *params } else { apply_intensity_deviation(params, IntensityDeviation::new(rel_dev)?)? };
    let (y, nf) = evolve_columns(pulse, &p, &prop(n_steps))?;
    Ok(process_tomography_columns(&y, nf, &p.with_n_fock(nf)?, target)?)
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeArgs {
    pub preset: Option<String>,
    pub target: Option<String>,
    pub duration_s: Option<f64>,
    pub restarts: Option<usize>,
    pub iterations: Option<usize>,
    pub n_c: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedOptimize {
    pub target: String,
    pub duration_us: f64,
    pub n_c: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub w_ent: f64,
    pub w_uni: f64,
    pub w_mot: f64,
    pub init_amplitude_rad: f64,
    pub grid_points: usize,
    pub grid_half_width: f64,
    pub n_steps: Option<usize>,
}

impl ResolvedOptimize {
    pub fn config(&self, seed: u64) -> Result<OptimizeConfig> {
        let target = parse_target(&self.target)?;
        let duration = self.duration_us * 1e-6;
        let mut cfg = if target == Target::Mikado { OptimizeConfig::mikado(duration) } else { OptimizeConfig::recoil_free(duration) };
        cfg.target = target;
        cfg.n_c = self.n_c;
        cfg.restarts = self.restarts;
        cfg.max_iterations = self.max_iterations;
        cfg.weights = CostWeights::new(self.w_ent, self.w_uni, self.w_mot)?;
        cfg.init_amplitude = self.init_amplitude_rad;
        cfg.intensity_grid = if self.grid_points > 1 { intensity_grid(self.grid_points, self.grid_half_width) } else { Vec::new() };
        cfg.propagation = prop(self.n_steps);
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn resolve_optimize(loaded: &Loaded, args: &OptimizeArgs, system: &ResolvedSystem) -> Result<ResolvedOptimize> {
    let s = loaded.file.optimize.clone().unwrap_or_default();
    let preset = args.preset.clone().or(s.preset.clone());
    // Preset values first; file keys and flags override them.
    let (p_target, p_duration, p_weights, p_grid) = match preset.as_deref() {
        None => (None, None, None, None),
        Some("sr88-mikado") => (Some("mikado"), Some(0.825 * PI / (2.0 * PI * system.rabi_khz * 1e3) * 1e6), Some(CostWeights::MIKADO), Some(11)),
        Some("sr88-rx90") => (Some("rx90"), Some(15.0), Some(CostWeights::STANDARD), None),
        Some("trajectory") => (Some("rx90"), Some(20.0), Some(CostWeights::TRAJECTORY), None),
        Some(other) => bail!("unknown optimize preset `{other}` (expected sr88-mikado, sr88-rx90 or trajectory)"),
    };
    let target = args.target.clone().or(s.target.clone()).or(p_target.map(String::from)).unwrap_or_else(|| "rx90".into());
    parse_target(&target).map_err(|e| anyhow!("{}: {e}", loaded.locate("optimize")))?;
    let duration_us = match args.duration_s.map(|d| d * 1e6).or(s.duration_us).or(p_duration) {
        Some(d) => d,
        None => return Err(loaded.missing("optimize", "duration_us")),
    };
    let mikado = target == "mikado";
    let w = p_weights.unwrap_or(if mikado { CostWeights::MIKADO } else { CostWeights::STANDARD });
    Ok(ResolvedOptimize {
        target,
        duration_us,
        n_c: args.n_c.or(s.n_c).unwrap_or(DEFAULT_N_C),
        restarts: args.restarts.or(s.restarts).unwrap_or(4),
        max_iterations: args.iterations.or(s.max_iterations).unwrap_or(300),
        w_ent: s.w_ent.unwrap_or(w.w_ent),
        w_uni: s.w_uni.unwrap_or(w.w_uni),
        w_mot: s.w_mot.unwrap_or(w.w_mot),
        init_amplitude_rad: s.init_amplitude_rad.unwrap_or(0.05),
        grid_points: s.grid_points.or(p_grid).unwrap_or(if mikado { 11 } else { 1 }),
        grid_half_width: s.grid_half_width.unwrap_or(0.025),
        n_steps: s.n_steps,
    })
}

#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    seed: u64,
    system: &'a ResolvedSystem,
    #[serde(flatten)]
    command: T,
}

#[derive(Serialize)]
struct GridRecord {
    rel_dev: f64,
    #[serde(flatten)]
    record: ProcessRecord,
}

#[derive(Serialize)]
struct OptimizeResult<'a> {
    target: &'a str,
    components: CostComponents,
    tomography: ProcessRecord,
    converged: bool,
    below_qsl: bool,
    restarts: &'a [RestartSummary],
    #[serde(skip_serializing_if = "Option::is_none")]
    mikado: Option<MikadoSummary>,
}

#[derive(Serialize)]
struct MikadoSummary {
    alpha: f64,
    beta: f64,
    mean: CostComponents,
    points: Vec<GridRecord>,
}

pub fn optimize(common: &Common, args: &OptimizeArgs) -> Result<Status> {
    let system = resolve_system(&common.loaded, &common.system)?;
    let params = system.params()?;
    let resolved = resolve_optimize(&common.loaded, args, &system)?;
    let cfg = resolved.config(common.seed).map_err(|e| anyhow!("{}: {e}", common.loaded.locate("optimize")))?;
    let meta = Meta::new("optimize", common.seed, RunConfig { seed: common.seed, system: &system, command: serde_json::json!({ "optimize": &resolved }) })?;
    let mut out = OutDir::create(&common.out)?;

    let (pulse, verified, outcome, mikado) = if cfg.target == Target::Mikado {
        let m = optimize_mikado(&cfg, &params)?;
        let zero = m.deviations.iter().position(|d| *d == 0.0);
        let verified = match zero {
            Some(i) => m.points[i].clone(),
            None => evaluate(&m.pulse, &params, &Target::Mikado, 0.0, cfg.propagation.n_steps)?,
        };
        let summary = MikadoSummary {
            alpha: m.alpha,
            beta: m.beta,
            mean: m.mean_components(),
            points: m.deviations.iter().zip(&m.points).map(|(&rel_dev, p)| GridRecord { rel_dev, record: p.record() }).collect(),
        };
        (m.pulse.clone(), verified, m.optimization, Some(summary))
    } else {
        let (pulse, verified, outcome) = optimize_recoil_free(&cfg, &params)?;
        (pulse, verified, outcome, None)
    };

    out.json("pulse.json", &meta, &pulse)?;
    out.csv("convergence.csv", outcome.log.iter().copied().collect::<Vec<IterationRecord>>())?;
    out.json(
        "result.json",
        &meta,
        OptimizeResult {
            target: &resolved.target,
            components: CostComponents { j_ent: verified.j_ent, j_uni: verified.j_uni, j_mot: verified.j_mot },
            tomography: verified.record(),
            converged: outcome.converged,
            below_qsl: outcome.below_qsl,
            restarts: &outcome.restarts,
            mikado,
        },
    )?;
    out.finish(&meta)?;
    log::info!("J_ent {:.3e}, J_uni {:.3e}, J_mot {:.3e}", verified.j_ent, verified.j_uni, verified.j_mot);
    Ok(if outcome.converged { Status::Ok } else { Status::NotConverged })
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub kind: Option<String>,
    pub pulse: Option<PathBuf>,
}

#[derive(Serialize)]
struct DurationRow {
    duration_us: f64,
    j_uni: f64,
    j_ent: f64,
    j_mot: f64,
    converged: bool,
}

#[derive(Serialize)]
struct P0Row {
    p0: f64,
    j_uni: f64,
    j_ent: f64,
    j_mot: f64,
}

#[derive(Serialize)]
struct IntensityRow {
    rel_dev: f64,
    j_uni: f64,
    j_ent: f64,
    j_mot: f64,
}

#[derive(Serialize)]
struct GateGridRow {
    mode: &'static str,
    theta_g: f64,
    rel_dev: f64,
    branch: Branch,
    j_ent: f64,
    j_uni: f64,
    j_mot: f64,
}

impl GateGridRow {
    fn new(mode: &'static str, p: GateGridPoint) -> Self {
        Self { mode, theta_g: p.theta_g, rel_dev: p.rel_dev, branch: p.branch, j_ent: p.j_ent, j_uni: p.j_uni, j_mot: p.j_mot }
    }
}

pub fn sweep(common: &Common, args: &SweepArgs) -> Result<Status> {
    let loaded = &common.loaded;
    let s = loaded.file.sweep.clone().unwrap_or_default();
    let system = resolve_system(loaded, &common.system)?;
    let params = system.params()?;
    let kind = args.kind.clone().or(s.kind.clone()).ok_or_else(|| loaded.missing("sweep", "kind"))?;
    let pulse_path = args.pulse.clone().or(s.pulse.as_ref().map(|p| loaded.resolve_path(p)));
    let mut meta = Meta::new("sweep", common.seed, RunConfig { seed: common.seed, system: &system, command: serde_json::json!({ "sweep": &s, "kind": &kind }) })?;
    let mut out = OutDir::create(&common.out)?;
    let mut status = Status::Ok;
    match kind.as_str() {
        "duration" => {
            let durations = s.durations_us.clone().ok_or_else(|| loaded.missing("sweep", "durations_us"))?;
            let mut rows = Vec::new();
            for &d in &durations {
                let resolved = resolve_optimize(loaded, &OptimizeArgs { duration_s: Some(d * 1e-6), ..Default::default() }, &system)?;
                let cfg = resolved.config(common.seed)?;
                let (_, r, outcome) = optimize_recoil_free(&cfg, &params)?;
                if !outcome.converged {
                    status = Status::NotConverged;
                }
                rows.push(DurationRow { duration_us: d, j_uni: r.j_uni, j_ent: r.j_ent, j_mot: r.j_mot, converged: outcome.converged });
            }
            meta.config["durations_us"] = serde_json::to_value(&durations)?;
            out.csv("sweep_duration.csv", rows)?;
        }
        "p0" => {
            let values = s.p0_values.clone().ok_or_else(|| loaded.missing("sweep", "p0_values"))?;
            let path = pulse_path.ok_or_else(|| loaded.missing("sweep", "pulse"))?;
            let pulse = read_pulse(&mut meta, &path)?;
            let target = parse_target("rx90")?;
            let rows = values
                .iter()
                .map(|&p0| {
                    let r = evaluate(&pulse, &params.with_p0(p0)?, &target, 0.0, None)?;
                    Ok(P0Row { p0, j_uni: r.j_uni, j_ent: r.j_ent, j_mot: r.j_mot })
                })
                .collect::<Result<Vec<_>>>()?;
            out.csv("sweep_p0.csv", rows)?;
        }
        "intensity" => {
            let path = pulse_path.ok_or_else(|| loaded.missing("sweep", "pulse"))?;
            let pulse = read_pulse(&mut meta, &path)?;
            let devs = s.rel_devs.clone().unwrap_or_else(|| intensity_grid(11, 0.025));
            let rows = devs
                .iter()
                .map(|&d| {
                    let r = evaluate(&pulse, &params, &Target::Mikado, d, None)?;
                    Ok(IntensityRow { rel_dev: d, j_uni: r.j_uni, j_ent: r.j_ent, j_mot: r.j_mot })
                })
                .collect::<Result<Vec<_>>>()?;
            out.csv("sweep_intensity.csv", rows)?;
        }
        "gate-grid" => {
            let path = s.mikado_pulse.as_ref().map(|p| loaded.resolve_path(p)).or(pulse_path).ok_or_else(|| loaded.missing("sweep", "mikado_pulse"))?;
            let mikado = read_pulse(&mut meta, &path)?;
            let n = s.theta_points.unwrap_or(9).max(2);
            let thetas: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect();
            let devs = s.rel_devs.clone().unwrap_or_else(|| intensity_grid(11, 0.025));
            let prop = PropagationConfig::default();
            let mut rows = Vec::new();
            for (mode, pulse) in [("mikado", mikado), ("mossbauer", mossbauer_pulse(&params)?)] {
                rows.extend(gate_grid(&pulse, &params, &thetas, &devs, &prop)?.into_iter().map(|p| GateGridRow::new(mode, p)));
            }
            out.csv("sweep_gate_grid.csv", rows)?;
        }
        other => bail!("{}: unknown sweep kind `{other}` (expected duration, p0, intensity or gate-grid)", loaded.locate("sweep")),
    }
    out.finish(&meta)?;
    Ok(status)
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkArgs {
    pub mode: Option<String>,
    pub depth: Option<usize>,
    pub circuits: Option<usize>,
    pub pulse: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedBenchmark {
    mode: GateMode,
    depth_max: usize,
    n_circuits: usize,
    p0: f64,
    record_depths: Vec<usize>,
    theta_ent_rad: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Serialize)]
struct BenchmarkRow {
    mode: GateMode,
    #[serde(rename = "N")]
    n: usize,
    j_ent: f64,
    j_ent_err: f64,
    j_uni: f64,
    j_uni_err: f64,
    j_mot: f64,
    j_mot_err: f64,
    n_circuits_used: usize,
}

pub fn benchmark(common: &Common, args: &BenchmarkArgs) -> Result<Status> {
    let loaded = &common.loaded;
    let s = loaded.file.benchmark.clone().unwrap_or_default();
    let system = resolve_system(loaded, &common.system)?;
    let params = system.params()?;
    let mode: GateMode = args.mode.clone().or(s.mode.clone()).ok_or_else(|| loaded.missing("benchmark", "mode"))?.parse()?;
    let idealized = mode == GateMode::IdealizedL4;
    let depth_max = args.depth.or(s.depth_max).unwrap_or(if idealized { 1000 } else { 100 });
    let resolved = ResolvedBenchmark {
        mode,
        depth_max,
        n_circuits: args.circuits.or(s.n_circuits).unwrap_or(if idealized { 100 } else { 20 }),
        p0: s.p0.unwrap_or(system.p0),
        record_depths: s.record_depths.clone().unwrap_or_else(|| default_depths(depth_max)),
        theta_ent_rad: if idealized { Some(s.theta_ent_rad.unwrap_or(recoilfree::rb::DEFAULT_THETA_ENT)) } else { None },
        n_steps: s.n_steps,
    };
    let mut meta = Meta::new("benchmark", common.seed, RunConfig { seed: common.seed, system: &system, command: serde_json::json!({ "benchmark": &resolved }) })?;
    let prop = prop(resolved.n_steps);
    let params = params.with_p0(resolved.p0)?;
    let resources = match mode {
        GateMode::IdealizedL4 => idealized_resources(resolved.theta_ent_rad.expect("set for idealized mode")),
        GateMode::Mossbauer => mossbauer_resources(&params, &prop)?,
        GateMode::Mikado => {
            let path = args.pulse.clone().or(s.pulse.as_ref().map(|p| loaded.resolve_path(p))).ok_or_else(|| loaded.missing("benchmark", "pulse"))?;
            pulse_resources(&read_pulse(&mut meta, &path)?, &params, &prop)?
        }
    };
    let cfg = RBConfig {
        depth_max: resolved.depth_max,
        n_circuits: resolved.n_circuits,
        seed: common.seed,
        p0: resolved.p0,
        gate_mode: mode,
        record_depths: resolved.record_depths.clone(),
    };
    cfg.validate().map_err(|e| anyhow!("{}: {e}", loaded.locate("benchmark")))?;
    let series = run_rb(&cfg, &params, &resources, &prop)?;
    let mut out = OutDir::create(&common.out)?;
    out.csv(
        "benchmark.csv",
        series.records.iter().map(|r| BenchmarkRow {
            mode,
            n: r.n,
            j_ent: r.j_ent,
            j_ent_err: r.j_ent_err,
            j_uni: r.j_uni,
            j_uni_err: r.j_uni_err,
            j_mot: r.j_mot,
            j_mot_err: r.j_mot_err,
            n_circuits_used: r.n_circuits_used,
        }),
    )?;
    out.json("benchmark.json", &meta, &series)?;
    out.finish(&meta)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct TrajectoryRow {
    state: usize,
    t_us: f64,
    x: f64,
    p: f64,
    x_first_order: f64,
    p_first_order: f64,
}

#[derive(Serialize)]
struct AnalyzeTomography {
    rx90: ProcessRecord,
    mikado: ProcessRecord,
}

pub fn analyze(common: &Common, pulse_arg: Option<&Path>) -> Result<Status> {
    let loaded = &common.loaded;
    let s = loaded.file.analyze.clone().unwrap_or_default();
    let system = resolve_system(loaded, &common.system)?;
    let params = system.params()?;
    let path = pulse_arg.map(Path::to_path_buf).or(s.pulse.as_ref().map(|p| loaded.resolve_path(p))).ok_or_else(|| loaded.missing("analyze", "pulse"))?;
    let mut meta = Meta::new("analyze", common.seed, RunConfig { seed: common.seed, system: &system, command: serde_json::json!({ "analyze": &s }) })?;
    let pulse = read_pulse(&mut meta, &path)?;
    let n_steps = s.n_steps.unwrap_or_else(|| default_n_steps(&pulse, &params));
    let every = s.record_every.unwrap_or((n_steps / 200).max(1));

    let mut rows = Vec::new();
    for (k, init) in BlochInit::tomography().into_iter().enumerate() {
        let psi = product_state(&init.state(), &fock_state(0, params.n_fock));
        let sim = simulated_centroid(&pulse, &params, &psi, n_steps, every)?;
        let times: Vec<f64> = sim.iter().map(|(t, _)| *t).collect();
        let first = semiclassical_trajectory(&pulse, &params, init, &times)?;
        for ((t, q), f) in sim.iter().zip(&first) {
            rows.push(TrajectoryRow { state: k, t_us: t * 1e6, x: q.x, p: q.p, x_first_order: f.x, p_first_order: f.p });
        }
    }
    let report = expansion_report(&pulse, &params)?;
    let tomography = AnalyzeTomography {
        rx90: evaluate(&pulse, &params, &parse_target("rx90")?, 0.0, Some(n_steps))?.record(),
        mikado: evaluate(&pulse, &params, &Target::Mikado, 0.0, Some(n_steps))?.record(),
    };
    let mut out = OutDir::create(&common.out)?;
    out.csv("trajectory.csv", rows)?;
    out.json("expansion.json", &meta, report.record())?;
    out.json("tomography.json", &meta, tomography)?;
    out.finish(&meta)?;
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Default)]
pub struct TomographyArgs {
    pub pulse: Option<PathBuf>,
    pub target: Option<String>,
    pub rel_dev: Option<f64>,
}

pub fn tomography(common: &Common, args: &TomographyArgs) -> Result<Status> {
    let loaded = &common.loaded;
    let s = loaded.file.tomography.clone().unwrap_or_default();
    let system = resolve_system(loaded, &common.system)?;
    let params = system.params()?;
    let path = args.pulse.clone().or(s.pulse.as_ref().map(|p| loaded.resolve_path(p))).ok_or_else(|| loaded.missing("tomography", "pulse"))?;
    let target_name = args.target.clone().or(s.target.clone()).unwrap_or_else(|| "rx90".into());
    let rel_dev = args.rel_dev.or(s.rel_dev).unwrap_or(0.0);
    let resolved = serde_json::json!({ "tomography": { "target": &target_name, "rel_dev": rel_dev, "n_steps": s.n_steps } });
    let mut meta = Meta::new("tomography", common.seed, RunConfig { seed: common.seed, system: &system, command: resolved })?;
    let pulse = read_pulse(&mut meta, &path)?;
    let target = parse_target(&target_name)?;
    let r = evaluate(&pulse, &params, &target, rel_dev, s.n_steps)?;
    let mut out = OutDir::create(&common.out)?;
    out.json("tomography.json", &meta, r.record())?;
    out.finish(&meta)?;
    Ok(Status::Ok)
}
