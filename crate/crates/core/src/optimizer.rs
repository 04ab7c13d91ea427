//! Pulse optimization: minimizes `J = w_ent·J_ent + w_uni·J_uni + w_mot·J_mot`
//! over the Fourier phase coefficients, optionally averaged over a grid of
//! laser-intensity deviations (the Mikado cost).
//!
//! Gradients are exact up to the χ-level derivative: the adjoint pass of the
//! propagator turns `∂J/∂Y` (tomography columns) into `∂J/∂φ_k`, and `∂J/∂χ`
//! is taken by central differences on the 16 real parameters of the 4×4
//! Hermitian χ matrix, which is cheap and handles the eigen-decomposition
//! and the Mikado Euler fit without special cases.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfgs::{self, BfgsSettings, Termination};
use crate::error::{Error, Result};
use crate::linalg::{pauli, pauli_coefficients, rx, ComplexMatrix, Mat2, C64, ZERO};
use crate::model::{apply_intensity_deviation, IntensityDeviation, SystemParams};
use crate::propagator::{evolve_columns, tomography_columns, PropagationConfig, StepPropagator};
use crate::pulse::{PulseShape, DEFAULT_N_C};
use crate::tomography::{
    chi_matrix, decompose_chi_unchecked, j_uni, j_uni_mikado_general, kraus_from_columns, process_tomography_columns, ChiMatrix,
    ProcessResult, Target, COMPLETENESS_TOL,
};

/// Step for the central differences on χ.
const CHI_FD_STEP: f64 = 1e-6;
/// Relative change of J in the last iteration above which a run counts as
/// not converged.
pub const CONVERGENCE_REL_CHANGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_ent: f64,
    pub w_uni: f64,
    pub w_mot: f64,
}

impl CostWeights {
    /// Weights of the phase-space trajectory study.
    pub const TRAJECTORY: Self = Self { w_ent: 100.0, w_uni: 1.0, w_mot: 100.0 };
    /// Weights of the pulse-duration study.
    pub const STANDARD: Self = Self { w_ent: 100.0, w_uni: 1.0, w_mot: 10.0 };
    /// Weights of the ⁸⁸Sr Mikado optimization.
    pub const MIKADO: Self = Self { w_ent: 100.0, w_uni: 1.0, w_mot: 10.0 };

    pub fn new(w_ent: f64, w_uni: f64, w_mot: f64) -> Result<Self> {
        let w = Self { w_ent, w_uni, w_mot };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_ent, self.w_uni, self.w_mot];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("cost weights must be finite and nonnegative, got {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidParameter("cost weights are all zero".into()));
        }
        Ok(())
    }

    pub fn combine(&self, c: &CostComponents) -> f64 {
        self.w_ent * c.j_ent + self.w_uni * c.j_uni + self.w_mot * c.j_mot
    }
}

/// `n` points spaced uniformly over `[−half_width, half_width]`.
pub fn intensity_grid(n: usize, half_width: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub target: Target,
    pub weights: CostWeights,
    pub n_c: usize,
    /// Seconds.
    pub duration: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Relative intensity deviations; empty for a single nominal point.
    pub intensity_grid: Vec<f64>,
    /// Half-width of the uniform distribution of initial coefficients.
    pub init_amplitude: f64,
    pub propagation: PropagationConfig,
}

impl OptimizeConfig {
    /// Recoil-free `Rx(π/2)` with the pulse-duration-study weights.
    pub fn recoil_free(duration: f64) -> Self {
        Self {
            target: Target::Unitary(rx(std::f64::consts::FRAC_PI_2)),
            weights: CostWeights::STANDARD,
            n_c: DEFAULT_N_C,
            duration,
            restarts: 4,
            max_iterations: 300,
            seed: 0,
            intensity_grid: Vec::new(),
            init_amplitude: 0.05,
            propagation: PropagationConfig::default(),
        }
    }

    /// Mikado optimization over 11 deviations in `±0.025`.
    pub fn mikado(duration: f64) -> Self {
        Self {
            target: Target::Mikado,
            weights: CostWeights::MIKADO,
            intensity_grid: intensity_grid(11, 0.025),
            ..Self::recoil_free(duration)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be positive, got {}", self.duration)));
        }
        if self.n_c == 0 {
            return Err(Error::InvalidParameter("n_c must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be positive".into()));
        }
        if !(self.init_amplitude >= 0.0 && self.init_amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!("init_amplitude must be nonnegative, got {}", self.init_amplitude)));
        }
        let mut sorted = self.intensity_grid.clone();
        sorted.sort_by(f64::total_cmp);
        let symmetric = sorted.iter().zip(sorted.iter().rev()).all(|(a, b)| (a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        if !symmetric {
            return Err(Error::InvalidParameter("intensity grid must be symmetric about 0".into()));
        }
        for &d in &self.intensity_grid {
            IntensityDeviation::new(d)?;
        }
        Ok(())
    }

    fn deviations(&self) -> Vec<f64> {
        if self.intensity_grid.is_empty() {
            vec![0.0]
        } else {
            self.intensity_grid.clone()
        }
    }

    /// Whether the duration is at or below one trap period.
    pub fn below_qsl(&self, params: &SystemParams) -> bool {
        self.duration <= 2.0 * std::f64::consts::PI / params.omega_trap
    }
}

/// Grid-averaged cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostComponents {
    pub j_ent: f64,
    pub j_uni: f64,
    pub j_mot: f64,
}

/// Cost of one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub j: f64,
    pub components: CostComponents,
    /// One result per intensity deviation, in grid order.
    pub points: Vec<ProcessResult>,
}

struct GridPoint {
    params: SystemParams,
    prop: StepPropagator,
    weights: Vec<f64>,
    start: ComplexMatrix,
}

/// Cached propagators for every grid point of one configuration.
pub struct CostModel {
    template: PulseShape,
    target: Target,
    weights: CostWeights,
    n_steps: usize,
    basis: Vec<f64>,
    deviations: Vec<f64>,
    points: Vec<GridPoint>,
}

impl CostModel {
    pub fn new(cfg: &OptimizeConfig, params: &SystemParams) -> Result<Self> {
        cfg.validate()?;
        params.validate()?;
        let template = PulseShape::zeros(cfg.duration, cfg.n_c)?;
        let deviations = cfg.deviations();
        let mut grid_params = Vec::with_capacity(deviations.len());
        for &d in &deviations {
            grid_params.push(if d == 0.0 { *params } else { apply_intensity_deviation(params, IntensityDeviation::new(d)?)? });
        }
        let mut n_steps = 0;
        for p in &grid_params {
            n_steps = n_steps.max(cfg.propagation.steps_for(&template, p)?);
        }
        let dt = cfg.duration / n_steps as f64;
        let points = grid_params
            .into_iter()
            .map(|p| {
                let prop = StepPropagator::new(&p, dt, cfg.propagation.use_exact_hamiltonian)?;
                let cols = tomography_columns(p.n_fock, p.n_thermal_max);
                let mut start = ComplexMatrix::zeros(prop.dim(), cols.len());
                for (j, &c) in cols.iter().enumerate() {
                    start[(c, j)] = C64::new(1.0, 0.0);
                }
                Ok(GridPoint { weights: p.thermal_weights(), params: p, prop, start })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { basis: template.midpoint_basis(n_steps), template, target: cfg.target, weights: cfg.weights, n_steps, deviations, points })
    }

    pub fn n_params(&self) -> usize {
        2 * self.template.n_c
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn pulse(&self, x: &[f64]) -> PulseShape {
        self.template.with_coefficients(x)
    }

    fn point_columns(&self, pt: &GridPoint, phases: &[f64]) -> ComplexMatrix {
        let mut y = pt.start.clone();
        pt.prop.propagate(phases, &mut y);
        y
    }

    /// Weighted cost of an arbitrary pulse of this model's duration
    /// (including constant-phase pulses).
    pub fn evaluate_pulse(&self, pulse: &PulseShape) -> Result<Evaluation> {
        if (pulse.duration - self.template.duration).abs() > 1e-12 * self.template.duration {
            return Err(Error::InvalidParameter(format!(
                "pulse duration {} differs from the model duration {}",
                pulse.duration, self.template.duration
            )));
        }
        pulse.validate()?;
        let phases = pulse.midpoint_phases(self.n_steps);
        let points = self
            .points
            .par_iter()
            .map(|pt| {
                let y = self.point_columns(pt, &phases);
                process_tomography_columns(&y, pt.params.n_fock, &pt.params, &self.target)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.summarize(points))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.evaluate_pulse(&self.pulse(x))
    }

    fn summarize(&self, points: Vec<ProcessResult>) -> Evaluation {
        let n = points.len() as f64;
        let mut c = CostComponents::default();
        for p in &points {
            c.j_ent += p.j_ent / n;
            c.j_uni += p.j_uni / n;
            c.j_mot += p.j_mot / n;
        }
        Evaluation { j: self.weights.combine(&c), components: c, points }
    }

    /// Cost and its gradient with respect to the coefficient vector.
    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        let pulse = self.pulse(x);
        let phases = pulse.midpoint_phases(self.n_steps);
        let per_point = self
            .points
            .par_iter()
            .map(|pt| self.point_gradient(pt, &phases))
            .collect::<Result<Vec<_>>>()?;
        let n = per_point.len() as f64;
        let np = self.n_params();
        let mut dphi = vec![0.0; self.n_steps];
        let mut results = Vec::with_capacity(per_point.len());
        for (res, g) in per_point {
            for (a, b) in dphi.iter_mut().zip(&g) {
                *a += b / n;
            }
            results.push(res);
        }
        let mut grad = vec![0.0; np];
        for (k, d) in dphi.iter().enumerate() {
            let row = &self.basis[k * np..(k + 1) * np];
            for (gi, r) in grad.iter_mut().zip(row) {
                *gi += d * r;
            }
        }
        Ok((self.summarize(results), grad))
    }

    fn point_gradient(&self, pt: &GridPoint, phases: &[f64]) -> Result<(ProcessResult, Vec<f64>)> {
        let nf = pt.params.n_fock;
        let nt = pt.weights.len();
        let y = self.point_columns(pt, phases);
        let result = process_tomography_columns(&y, nf, &pt.params, &self.target)?;
        let kraus = kraus_from_columns(&y, nf, &pt.weights)?;

        let gamma = chi_cost_gradient(&chi_matrix(&kraus), &self.target, &self.weights);
        let sigma = [pauli(0), pauli(1), pauli(2), pauli(3)];
        let mut g = ComplexMatrix::zeros(y.nrows(), y.ncols());
        for (n, &p) in pt.weights.iter().enumerate() {
            let sp = p.sqrt();
            for m in 0..nf {
                let k = &kraus[n * nf + m];
                let c = pauli_coefficients(k);
                let mut gk = Mat2::zeros();
                for (mu, s) in sigma.iter().enumerate() {
                    let gc: C64 = (0..4).map(|nu| gamma[(mu, nu)] * c[nu]).sum();
                    gk += s * gc;
                }
                for r in 0..2 {
                    for col in 0..2 {
                        g[(r * nf + m, col * nt + n)] += gk[(r, col)] * sp;
                    }
                }
            }
        }
        if self.weights.w_mot > 0.0 {
            add_j_mot_gradient(&y, nf, &pt.weights, self.weights.w_mot, &mut g);
        }
        Ok((result, pt.prop.phase_gradient(phases, &y, &g)))
    }
}

/// The χ-dependent part of the weighted cost.
fn chi_cost(chi: &ChiMatrix, target: &Target, w: &CostWeights) -> f64 {
    let tgt = match target {
        Target::Unitary(u) => Some(u),
        Target::Mikado => None,
    };
    let d = decompose_chi_unchecked(chi, tgt);
    let je = 2.0 / 3.0 * (1.0 - d.eigenvalues[0]);
    let ju = match target {
        Target::Unitary(u) => j_uni(&d.kraus, u),
        Target::Mikado => j_uni_mikado_general(&d.kraus[0]).j,
    };
    w.w_ent * je + w.w_uni * ju
}

/// `Γ` with `δJ = Re Σ conj(Γ_mn) δχ_mn` for Hermitian `δχ`.
fn chi_cost_gradient(chi: &ChiMatrix, target: &Target, w: &CostWeights) -> ChiMatrix {
    let h = CHI_FD_STEP;
    let diff = |dir: &ChiMatrix| {
        let up = chi_cost(&(chi + dir * C64::from(h)), target, w);
        let down = chi_cost(&(chi - dir * C64::from(h)), target, w);
        (up - down) / (2.0 * h)
    };
    let mut gamma = ChiMatrix::zeros();
    for m in 0..4 {
        let mut e = ChiMatrix::zeros();
        e[(m, m)] = C64::new(1.0, 0.0);
        gamma[(m, m)] = C64::new(diff(&e), 0.0);
        for n in m + 1..4 {
            let mut re = ChiMatrix::zeros();
            re[(m, n)] = C64::new(1.0, 0.0);
            re[(n, m)] = C64::new(1.0, 0.0);
            let mut im = ChiMatrix::zeros();
            im[(m, n)] = C64::new(0.0, 1.0);
            im[(n, m)] = C64::new(0.0, -1.0);
            let z = C64::new(diff(&re), diff(&im)) / 2.0;
            gamma[(m, n)] = z;
            gamma[(n, m)] = z.conj();
        }
    }
    gamma
}

/// Adds `∂(w·J_mot)/∂conj(Y)`; see `j_mot_columns` for the layout.
fn add_j_mot_gradient(y: &ComplexMatrix, n_fock: usize, weights: &[f64], w_mot: f64, g: &mut ComplexMatrix) {
    let nt = weights.len();
    for (n, &p) in weights.iter().enumerate() {
        for psi in &crate::tomography::tomography_states() {
            let mut v = vec![ZERO; 2 * n_fock];
            let mut mean_n = 0.0;
            for q in 0..2 {
                for m in 0..n_fock {
                    let r = q * n_fock + m;
                    v[r] = psi[0] * y[(r, n)] + psi[1] * y[(r, nt + n)];
                    mean_n += m as f64 * v[r].norm_sqr();
                }
            }
            let diff = mean_n - n as f64;
            if diff == 0.0 {
                continue;
            }
            let scale = w_mot * 0.25 * p * diff.signum() * 2.0;
            for q in 0..2 {
                for m in 1..n_fock {
                    let r = q * n_fock + m;
                    let a = v[r] * (scale * m as f64);
                    g[(r, n)] += a * psi[0].conj();
                    g[(r, nt + n)] += a * psi[1].conj();
                }
            }
        }
    }
}

/// Weighted cost of `pulse`, averaged over `cfg.intensity_grid`.
pub fn cost(pulse: &PulseShape, params: &SystemParams, cfg: &OptimizeConfig) -> Result<(f64, CostComponents)> {
    let cfg = OptimizeConfig { duration: pulse.duration, n_c: pulse.n_c.max(1), ..cfg.clone() };
    let model = CostModel::new(&cfg, params)?;
    let e = model.evaluate_pulse(pulse)?;
    Ok((e.j, e.components))
}

/// One accepted optimizer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub restart: usize,
    pub iteration: usize,
    pub j: f64,
    pub j_ent: f64,
    pub j_uni: f64,
    pub j_mot: f64,
    /// Lowest J seen so far in this run, across restarts.
    pub best_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub j: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub pulse: PulseShape,
    /// Cost of the best pulse on the optimization grid.
    pub evaluation: Evaluation,
    pub log: Vec<IterationRecord>,
    pub restarts: Vec<RestartSummary>,
    /// At least one restart met the convergence criterion.
    pub converged: bool,
    pub below_qsl: bool,
}

struct RestartRun {
    x: Vec<f64>,
    j: f64,
    log: Vec<IterationRecord>,
    summary: RestartSummary,
}

fn run_restart(model: &CostModel, cfg: &OptimizeConfig, restart: usize) -> Result<RestartRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let a = cfg.init_amplitude;
    let x0: Vec<f64> = (0..model.n_params()).map(|_| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 }).collect();

    let last: RefCell<Option<(Vec<f64>, CostComponents)>> = RefCell::new(None);
    let mut first_error: Option<Error> = None;
    let objective = |x: &[f64]| match model.evaluate_with_gradient(x) {
        Ok((e, g)) => {
            *last.borrow_mut() = Some((x.to_vec(), e.components));
            Some((e.j, g))
        }
        Err(err) => {
            log::debug!("cost evaluation failed: {err}");
            first_error.get_or_insert(err);
            None
        }
    };
    let settings = BfgsSettings { max_iterations: cfg.max_iterations, grad_tol: 1e-14, f_rel_tol: 1e-12, initial_step: 0.1 };
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut best = f64::INFINITY;
    let on_iteration = |k: usize, x: &[f64], f: f64| {
        // The accepted point is normally the latest evaluation.
        let cached = match &*last.borrow() {
            Some((lx, c)) if lx.as_slice() == x => Some(*c),
            _ => None,
        };
        let c = cached.unwrap_or_else(|| model.evaluate(x).map(|e| e.components).unwrap_or_default());
        best = best.min(f);
        log.push(IterationRecord { restart, iteration: k, j: f, j_ent: c.j_ent, j_uni: c.j_uni, j_mot: c.j_mot, best_j: best });
    };
    let outcome = bfgs::minimize(objective, &x0, &settings, on_iteration);
    let outcome = match outcome {
        Some(o) => o,
        None => return Err(first_error.unwrap_or_else(|| Error::NumericalConsistency("initial cost is not finite".into()))),
    };
    let records: Vec<f64> = log.iter().map(|r| r.j).collect();
    let rel_change = match records.len() {
        n if n >= 2 => (records[n - 2] - records[n - 1]).abs() / records[n - 1].abs().max(f64::MIN_POSITIVE),
        _ => 0.0,
    };
    let converged = matches!(outcome.termination, Termination::GradientTolerance | Termination::CostTolerance)
        || rel_change <= CONVERGENCE_REL_CHANGE;
    let summary = RestartSummary { restart, j: outcome.f, iterations: outcome.iterations, evaluations: outcome.evaluations, converged };
    Ok(RestartRun { x: outcome.x, j: outcome.f, log, summary })
}

fn optimize_inner(cfg: &OptimizeConfig, params: &SystemParams) -> Result<OptimizeOutcome> {
    let model = CostModel::new(cfg, params)?;
    let runs = (0..cfg.restarts).into_par_iter().map(|r| run_restart(&model, cfg, r)).collect::<Vec<_>>();
    let mut ok = Vec::new();
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(run) => ok.push(run),
            Err(e) => {
                log::warn!("restart failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(first_err.expect("at least one restart ran"));
    }
    let best_idx = ok.iter().enumerate().min_by(|a, b| a.1.j.total_cmp(&b.1.j)).map(|(i, _)| i).expect("nonempty");
    let mut log = Vec::new();
    let mut best = f64::INFINITY;
    for run in &ok {
        for rec in &run.log {
            best = best.min(rec.j);
            log.push(IterationRecord { best_j: best, ..*rec });
        }
    }
    let pulse = model.pulse(&ok[best_idx].x);
    let evaluation = model.evaluate(&ok[best_idx].x)?;
    let converged = ok.iter().any(|r| r.summary.converged);
    if !converged {
        log::warn!("no restart converged within {} iterations", cfg.max_iterations);
    }
    Ok(OptimizeOutcome {
        pulse,
        evaluation,
        log,
        restarts: ok.into_iter().map(|r| r.summary).collect(),
        converged,
        below_qsl: cfg.below_qsl(params),
    })
}

/// Optimizes a recoil-free pulse for `cfg.target`. The returned process
/// result is re-evaluated independently with the leakage guard and twice the
/// optimization step count.
pub fn optimize_recoil_free(cfg: &OptimizeConfig, params: &SystemParams) -> Result<(PulseShape, ProcessResult, OptimizeOutcome)> {
    if cfg.below_qsl(params) {
        log::info!("duration {:.3e} s is at or below the trap period; result is tagged below-QSL", cfg.duration);
    }
    let outcome = optimize_inner(cfg, params)?;
    let check = verify(&outcome.pulse, params, cfg, 0.0, 2)?;
    Ok((outcome.pulse.clone(), check, outcome))
}

/// Mikado optimization result.
#[derive(Debug, Clone, PartialEq)]
pub struct MikadoOutcome {
    pub pulse: PulseShape,
    pub deviations: Vec<f64>,
    /// Re-evaluated per grid point.
    pub points: Vec<ProcessResult>,
    /// Nominal `(α, β)` from the zero-deviation point.
    pub alpha: f64,
    pub beta: f64,
    pub optimization: OptimizeOutcome,
}

impl MikadoOutcome {
    /// Per-point `(δα, δβ, δθ)` relative to the nominal angles.
    pub fn angle_deviations(&self) -> Vec<(f64, f64, f64)> {
        self.points
            .iter()
            .map(|p| {
                let fit = p.mikado.expect("Mikado-scored point");
                (wrap(fit.alpha - self.alpha), wrap(fit.beta - self.beta), fit.delta_theta)
            })
            .collect()
    }

    pub fn mean_components(&self) -> CostComponents {
        let n = self.points.len() as f64;
        let mut c = CostComponents::default();
        for p in &self.points {
            c.j_ent += p.j_ent / n;
            c.j_uni += p.j_uni / n;
            c.j_mot += p.j_mot / n;
        }
        c
    }
}

fn wrap(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Optimizes a Mikado pulse against the intensity grid.
pub fn optimize_mikado(cfg: &OptimizeConfig, params: &SystemParams) -> Result<MikadoOutcome> {
    if cfg.intensity_grid.is_empty() {
        return Err(Error::InvalidParameter("Mikado optimization needs a nonempty intensity grid".into()));
    }
    if cfg.target != Target::Mikado {
        return Err(Error::InvalidParameter("Mikado optimization needs the Mikado target".into()));
    }
    let optimization = optimize_inner(cfg, params)?;
    let deviations = cfg.intensity_grid.clone();
    let points = deviations.iter().map(|&d| verify(&optimization.pulse, params, cfg, d, 2)).collect::<Result<Vec<_>>>()?;
    let nominal = match deviations.iter().position(|d| *d == 0.0) {
        Some(i) => points[i].mikado,
        None => verify(&optimization.pulse, params, cfg, 0.0, 2)?.mikado,
    }
    .expect("Mikado-scored point");
    Ok(MikadoOutcome { pulse: optimization.pulse.clone(), deviations, points, alpha: nominal.alpha, beta: nominal.beta, optimization })
}

/// Tomography of `pulse` at one intensity deviation, with `refine` times the
/// optimization step count and the leakage guard enabled.
pub fn verify(pulse: &PulseShape, params: &SystemParams, cfg: &OptimizeConfig, rel_dev: f64, refine: usize) -> Result<ProcessResult> {
    let p = if rel_dev == 0.0 { *params } else { apply_intensity_deviation(params, IntensityDeviation::new(rel_dev)?)? };
    let template = PulseShape::zeros(pulse.duration, cfg.n_c)?;
    let n = cfg.propagation.steps_for(&template, &p)? * refine.max(1);
    let prop_cfg = PropagationConfig { n_steps: Some(n), ..cfg.propagation };
    let (y, nf) = evolve_columns(pulse, &p, &prop_cfg)?;
    let p = p.with_n_fock(nf)?;
    let res = process_tomography_columns(&y, nf, &p, &cfg.target)?;
    debug_assert!(res.chi_eigenvalues.iter().sum::<f64>() > 1.0 - 10.0 * COMPLETENESS_TOL);
    Ok(res)
}
