//! Dense BFGS with a strong-Wolfe line search.
//!
//! The objective returns `None` for points where it cannot be evaluated
//! (for example when propagation leaves the truncated Fock space); the line
//! search treats those as infinitely bad and backtracks.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsSettings {
    pub max_iterations: usize,
    /// Stop when `‖∇f‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop when an iteration lowers `f` by less than `f_rel_tol·|f|`.
    pub f_rel_tol: f64,
    /// Largest initial step along the first search direction (in `‖·‖∞`).
    pub initial_step: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self { max_iterations: 200, grad_tol: 1e-12, f_rel_tol: 1e-12, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    evaluations: usize,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Option<Probe> {
        self.evaluations += 1;
        let xt: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let (f, g) = (self.objective)(&xt)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let slope = dot(&g, self.dir);
        Some(Probe { alpha, f, g, slope })
    }

    fn sufficient(&self, p: &Probe) -> bool {
        p.f <= self.f0 + C1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -C2 * self.slope0
    }

    /// Nocedal & Wright, Algorithm 3.5.
    fn search(&mut self, alpha0: f64) -> Option<Probe> {
        let mut prev = Probe { alpha: 0.0, f: self.f0, g: Vec::new(), slope: self.slope0 };
        let mut alpha = alpha0;
        for i in 0..30 {
            let cur = match self.probe(alpha) {
                Some(p) => p,
                None => {
                    // Unusable point: shrink towards the last good one.
                    alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
                    if alpha - prev.alpha < 1e-14 {
                        return None;
                    }
                    continue;
                }
            };
            if !self.sufficient(&cur) || (i > 0 && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            alpha = 2.0 * cur.alpha;
            prev = cur;
        }
        None
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        let mut best: Option<Probe> = None;
        for _ in 0..40 {
            let alpha = interpolate(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let cur = match self.probe(alpha) {
                Some(p) => p,
                None => {
                    hi = Probe { alpha, f: f64::INFINITY, g: Vec::new(), slope: f64::NAN };
                    continue;
                }
            };
            if !self.sufficient(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = Probe { alpha: lo.alpha, f: lo.f, g: lo.g.clone(), slope: lo.slope };
                }
                lo = cur;
                if lo.alpha > 0.0 {
                    best = Some(Probe { alpha: lo.alpha, f: lo.f, g: lo.g.clone(), slope: lo.slope });
                }
            }
        }
        // Accept the best sufficient-decrease point even without curvature.
        best.or(if lo.alpha > 0.0 { Some(lo) } else { None })
    }
}

/// Minimizer of the cubic through both ends (falling back to bisection),
/// safeguarded to stay inside the bracket.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (lo_b, hi_b) = (a.min(b), a.max(b));
    let margin = 0.1 * (hi_b - lo_b);
    if t.is_finite() && t > lo_b + margin && t < hi_b - margin {
        t
    } else {
        mid
    }
}

/// Minimizes `objective` from `x0`. `on_iteration(k, x, f)` is called after
/// every accepted step.
pub fn minimize<F, C>(mut objective: F, x0: &[f64], settings: &BfgsSettings, mut on_iteration: C) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    C: FnMut(usize, &[f64], f64),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    let mut evaluations = 1;
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    on_iteration(0, &x, f);
    for k in 1..=settings.max_iterations {
        if inf_norm(&g) <= settings.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Lost positive definiteness: restart from steepest descent.
            h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            first = true;
        }
        let alpha0 = if first { (settings.initial_step / inf_norm(&dir)).min(1.0) } else { 1.0 };
        let mut ls = LineSearch { objective: &mut objective, x: &x, dir: &dir, f0: f, slope0: slope, evaluations: 0 };
        let found = ls.search(alpha0);
        evaluations += ls.evaluations;
        let Some(step) = found else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let f_old = f;
        f = step.f;
        g = step.g;
        iterations = k;
        on_iteration(k, &x, f);

        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            // H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ, expanded for symmetric H.
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if (f_old - f).abs() <= settings.f_rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::CostTolerance;
            break;
        }
    }
    Some(BfgsOutcome { x, f, iterations, evaluations, termination })
}
