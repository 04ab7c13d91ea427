//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs everything; pass criterion
//! numbers after `--` to select a subset. Exits 0 unless
//! `RECOILFREE_ACCEPTANCE_STRICT` is set, in which case any FAIL exits 1.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DVector, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recoilfree::composite::{assemble, calibrate_pulse, corrected_angles, euler_zyz, gate_grid, verify_composite, Branch, MikadoCalibration};
use recoilfree::linalg::{projective_distance, ComplexMatrix, JointOperator, C64};
use recoilfree::model::{apply_intensity_deviation, IntensityDeviation, SystemParams};
use recoilfree::optimizer::{intensity_grid, optimize_mikado, optimize_recoil_free, CostWeights, MikadoOutcome, OptimizeConfig};
use recoilfree::oracles::{
    coherent_state, fock_state, haar_theta_cdf, mossbauer_alpha_sq_avg, mossbauer_trajectory, product_state, rb_saturation, simulated_centroid,
    thermal_channel, BlochInit, PhasePoint,
};
use recoilfree::perturbation::{expansion_report, plateau_j_ent, reconstruct_unitary};
use recoilfree::propagator::{evolve, evolve_fixed, PropagationConfig};
use recoilfree::pulse::PulseShape;
use recoilfree::rb::{
    idealized_resources, mossbauer_pulse, mossbauer_resources, pulse_resources, rotation_angle, run_rb, sample_haar_su2, GateMode, RBConfig,
    DEFAULT_THETA_ENT,
};
use recoilfree::stats::{ks_test, loglog_slope};
use recoilfree::tomography::{chi_matrix, kraus_from_joint_unitary, process_tomography};

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn sr88_mikado() -> Result<&'static MikadoOutcome, String> {
    static CELL: OnceLock<Result<MikadoOutcome, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = SystemParams::sr88();
        let mut cfg = OptimizeConfig::mikado(0.825 * PI / params.omega_rabi);
        cfg.restarts = 1;
        cfg.max_iterations = 200;
        cfg.seed = 1;
        eprintln!("  optimizing the Sr-88 Mikado pulse ({} grid points)", cfg.intensity_grid.len());
        optimize_mikado(&cfg, &params).map_err(err)
    })
    .as_ref()
    .map_err(|e| e.clone())
}

fn plateau_law() -> Outcome {
    let params = SystemParams::new(2.0 * PI * 2e3, 2.0 * PI * 100e3, 0.22, 0.95).map_err(err)?;
    let pulse = PulseShape::constant(PI / (2.0 * params.omega_rabi), 0.0).map_err(err)?;
    let u = evolve(&pulse, &params, &PropagationConfig::default()).map_err(err)?;
    let res = process_tomography(&u, &params.with_n_fock(u.n_fock()).map_err(err)?, &recoilfree::linalg::rx(FRAC_PI_2), false).map_err(err)?;
    let reference = 5.07e-5;
    let derived = plateau_j_ent(0.22, 0.95);
    let ratio = res.j_ent / reference;
    Ok(((0.85..=1.15).contains(&ratio), format!("J_ent = {:.4e} ({ratio:.3} of 5.07e-5; closed form {derived:.4e})", res.j_ent)))
}

fn thermal_unitary(theta: f64, axis: [f64; 3], n_fock: usize) -> JointOperator {
    let mut m = ComplexMatrix::zeros(2 * n_fock, 2 * n_fock);
    for n in 0..n_fock {
        let a = n as f64 * theta / 2.0;
        let (s, c) = a.sin_cos();
        // exp(iaσₙ) = cos a + i sin a σₙ.
        let block = [
            [C64::new(c, s * axis[2]), C64::new(s * axis[1], s * axis[0])],
            [C64::new(-s * axis[1], s * axis[0]), C64::new(c, -s * axis[2])],
        ];
        for q in 0..2 {
            for r in 0..2 {
                m[(q * n_fock + n, r * n_fock + n)] = block[q][r];
            }
        }
    }
    JointOperator::new(n_fock, m).expect("square")
}

fn thermal_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let axis = [0.48, 0.6, 0.64];
    for &p0 in &[0.9, 0.95, 0.99] {
        let params = SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, 0.22, p0).map_err(err)?;
        for &theta in &[0.1, FRAC_PI_4, FRAC_PI_2, PI] {
            let u = thermal_unitary(theta, axis, params.n_fock);
            let chi = chi_matrix(&kraus_from_joint_unitary(&u, &params).map_err(err)?);
            let zero = C64::new(0.0, 0.0);
            let b0 = Vector4::new(C64::new(1.0, 0.0), zero, zero, zero);
            let b1 = Vector4::new(zero, C64::from(axis[0]), C64::from(axis[1]), C64::from(axis[2]));
            let basis = [b0, b1];
            let oracle = thermal_channel(theta, axis, p0).map_err(err)?;
            for r in 0..2 {
                for c in 0..2 {
                    worst = worst.max((basis[r].dotc(&(chi * basis[c])) - oracle.chi[r][c]).norm());
                }
            }
            // Nothing outside the (σ₀, σₙ) plane.
            let trace_in_plane = (basis[0].dotc(&(chi * basis[0])) + basis[1].dotc(&(chi * basis[1]))).re;
            worst = worst.max((trace_in_plane - chi.trace().re).abs());
        }
    }
    Ok((worst < 1e-9, format!("max |χ − χ_closed| = {worst:.2e} over 12 (θ, p0) cases")))
}

fn mossbauer_oracle() -> Outcome {
    let mut errs = Vec::new();
    for eta in [0.05, 0.025] {
        let p = SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, eta, 0.95).map_err(err)?.with_n_fock(14).map_err(err)?;
        let pulse = PulseShape::constant(PI / (2.0 * p.omega_rabi), 0.0).map_err(err)?;
        let mut err_max: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for init in [BlochInit::new(FRAC_PI_2, 0.0), BlochInit::new(FRAC_PI_2, FRAC_PI_2), BlochInit::new(FRAC_PI_4, 1.0)] {
            let psi = product_state(&init.state(), &fock_state(0, p.n_fock));
            for (t, q) in simulated_centroid(&pulse, &p, &psi, 2000, 25).map_err(err)? {
                let exact = mossbauer_trajectory(&p, init, t).map_err(err)?;
                err_max = err_max.max(q.distance(&exact));
                scale = scale.max(exact.x.hypot(exact.p));
            }
        }
        errs.push(err_max / scale);
    }
    let ratio = errs[0] / errs[1];

    let p = SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, 0.22, 0.95).map_err(err)?.with_n_fock(20).map_err(err)?;
    let pulse = PulseShape::constant(PI / (2.0 * p.omega_rabi), 0.0).map_err(err)?;
    let mut avg = 0.0;
    for init in BlochInit::tomography() {
        let psi = product_state(&init.state(), &fock_state(0, p.n_fock));
        let end = simulated_centroid(&pulse, &p, &psi, 2000, 2000).map_err(err)?.last().expect("endpoint").1;
        avg += end.alpha().norm_sqr() / 4.0;
    }
    let closed = mossbauer_alpha_sq_avg(5.0, 0.22).map_err(err)?;
    let rel = (avg / 2.521e-4 - 1.0).abs();
    let pass = errs[0] <= 0.1 && (3.0..=5.0).contains(&ratio) && rel <= 0.15;
    Ok((
        pass,
        format!(
            "max rel. deviation {:.3} at η=0.05, halving ratio {ratio:.2}; simulated ⟨|α|²⟩ = {avg:.4e} vs 2.521e-4 ({:.1}%), closed form {closed:.4e}",
            errs[0],
            100.0 * rel
        ),
    ))
}

fn random_pulse(seed: u64, duration: f64, n_c: usize, amp: f64) -> Result<PulseShape, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || (0..n_c).map(|_| rng.random_range(-amp..amp)).collect::<Vec<_>>();
    let a = v();
    let b = v();
    PulseShape::fourier(duration, a, b).map_err(err)
}

fn perturbative_reconstruction() -> Outcome {
    let etas = [0.02, 0.04, 0.08, 0.16];
    let mut slopes = Vec::new();
    let mut small = Vec::new();
    for seed in 0..5u64 {
        let pulse = random_pulse(100 + seed, 15e-6, 8, 0.5)?;
        let mut errs = Vec::new();
        for &eta in &etas {
            let p = SystemParams::new(2.0 * PI * 20e3, 2.0 * PI * 100e3, eta, 0.95).map_err(err)?.with_n_fock(20).map_err(err)?;
            let full = evolve_fixed(&pulse, &p, 6000, true).map_err(err)?;
            let rec = reconstruct_unitary(&expansion_report(&pulse, &p).map_err(err)?, &p).map_err(err)?;
            // Columns of the lowest Fock inputs, away from the truncation edge.
            let nf = p.n_fock;
            let cols: Vec<usize> = (0..2).flat_map(|q| (0..4).map(move |n| q * nf + n)).collect();
            let d = full.matrix().select_columns(cols.iter()) - rec.matrix().select_columns(cols.iter());
            errs.push(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        slopes.push(loglog_slope(&etas, &errs));
        small.push(loglog_slope(&etas[..3], &errs[..3]));
    }
    let pass = slopes.iter().all(|s| (s - 3.0).abs() <= 0.2);
    let fmt = |v: &[f64]| v.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ");
    Ok((pass, format!("fitted exponents [{}] over η ≤ 0.16; [{}] over η ≤ 0.08", fmt(&slopes), fmt(&small))))
}

fn recoil_free_optimization() -> Outcome {
    let params = SystemParams::sr88();
    let period = 2.0 * PI / params.omega_trap;
    let run = |duration: f64| {
        let mut cfg = OptimizeConfig::recoil_free(duration);
        cfg.restarts = 2;
        cfg.max_iterations = 300;
        optimize_recoil_free(&cfg, &params).map_err(err)
    };
    let (_, main, out) = run(1.5 * period)?;
    eprintln!("  T = 15 µs: J_ent {:.3e} J_uni {:.3e} J_mot {:.3e} (converged {})", main.j_ent, main.j_uni, main.j_mot, out.converged);
    let (_, short, out_short) = run(0.5 * period)?;
    let ratio = short.j_mot / main.j_mot;
    let pass = main.j_mot < 1e-5 && main.j_ent < 1e-4 && ratio >= 10.0 && out_short.below_qsl;
    Ok((
        pass,
        format!(
            "T=15 µs: J_mot = {:.3e} (< 1e-5: {}), J_ent = {:.3e} (< 1e-4: {}), J_uni = {:.3e}; T=5 µs: J_mot = {:.3e}, ratio {ratio:.1}",
            main.j_mot,
            main.j_mot < 1e-5,
            main.j_ent,
            main.j_ent < 1e-4,
            main.j_uni,
            short.j_mot
        ),
    ))
}

fn symmetry_claims() -> Outcome {
    let params = SystemParams::sr88();
    let mut cfg = OptimizeConfig::recoil_free(20e-6);
    cfg.weights = CostWeights::TRAJECTORY;
    cfg.restarts = 1;
    cfg.max_iterations = 300;
    let (pulse, res, _) = optimize_recoil_free(&cfg, &params).map_err(err)?;
    eprintln!("  pulse: J_ent {:.3e} J_uni {:.3e} J_mot {:.3e}", res.j_ent, res.j_uni, res.j_mot);
    let steps = 4000;
    let mut devs = Vec::new();
    for eta in [0.22, 0.11] {
        let p = params.with_eta(eta).map_err(err)?.with_n_fock(30).map_err(err)?;
        let nf = p.n_fock;
        let end = |psi: &DVector<C64>| -> Result<PhasePoint, String> {
            Ok(simulated_centroid(&pulse, &p, psi, steps, steps).map_err(err)?.last().expect("endpoint").1)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d1: f64 = 0.0;
        for _ in 0..20 {
            let init = BlochInit::new((1.0 - 2.0 * rng.random::<f64>()).acos(), rng.random_range(0.0..2.0 * PI));
            d1 = d1.max(end(&product_state(&init.state(), &fock_state(0, nf)))?.alpha().norm());
        }
        let mut d2: f64 = 0.0;
        for init in BlochInit::tomography() {
            let e = (0..3).map(|n| end(&product_state(&init.state(), &fock_state(n, nf)))).collect::<Result<Vec<_>, _>>()?;
            for i in 0..3 {
                for j in 0..i {
                    d2 = d2.max(e[i].distance(&e[j]));
                }
            }
        }
        let a0 = C64::new(0.15, 0.0);
        let free = a0 * C64::from_polar(1.0, -p.omega_trap * pulse.duration);
        let mut d3: f64 = 0.0;
        for init in BlochInit::tomography() {
            d3 = d3.max((end(&product_state(&init.state(), &coherent_state(a0, nf)))?.alpha() - free).norm());
        }
        devs.push([d1, d2, d3]);
    }
    let ratios: Vec<f64> = (0..3).map(|k| devs[0][k] / devs[1][k]).collect();
    let pass = ratios.iter().all(|r| *r >= 3.0);
    Ok((
        pass,
        format!(
            "deviations at η=0.22 (i) {:.2e} (ii) {:.2e} (iii) {:.2e}; η-halving ratios {:.2} / {:.2} / {:.2} (≥ 3 for η² scaling)",
            devs[0][0], devs[0][1], devs[0][2], ratios[0], ratios[1], ratios[2]
        ),
    ))
}

fn composite_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let mut j9_total = 0;
    let mut j9_ok = 0;
    let mut j9_worst_ratio: f64 = 0.0;
    while n < 1000 || j9_total < 200 {
        let u_g = sample_haar_su2(&mut rng);
        let cal = MikadoCalibration {
            alpha: rng.random_range(-PI..PI),
            beta: rng.random_range(-PI..PI),
            delta_alpha: rng.random_range(-0.1..0.1),
            delta_beta: rng.random_range(-0.1..0.1),
            delta_theta: rng.random_range(-0.3..0.3),
        };
        let g = corrected_angles(&euler_zyz(&u_g), &cal, if rng.random::<bool>() { 1 } else { -1 }).map_err(err)?;
        let d = projective_distance(&g.ideal_unitary(), &u_g);
        match g.branch {
            Branch::J8 if n < 1000 => {
                n += 1;
                worst = worst.max(d);
            }
            Branch::J9 if j9_total < 200 => {
                j9_total += 1;
                let j = 2.0 / 3.0 * d;
                if j <= cal.j_uni_mikado() {
                    j9_ok += 1;
                }
                j9_worst_ratio = j9_worst_ratio.max(j / cal.j_uni_mikado());
            }
            _ => {}
        }
    }

    let mik = sr88_mikado()?;
    let params = SystemParams::sr88();
    let prop = PropagationConfig::default();
    let mut sim_worst: f64 = 0.0;
    let mut sim_j9 = 0;
    let mut sim_n = 0;
    for &dev in &[-0.025, 0.0, 0.025] {
        let p = apply_intensity_deviation(&params, IntensityDeviation::new(dev).map_err(err)?).map_err(err)?;
        let cal = calibrate_pulse(&mik.pulse, &p, &prop).map_err(err)?;
        for _ in 0..10 {
            let u_g = sample_haar_su2(&mut rng);
            let prog = assemble(&u_g, &cal, &mik.pulse, 1).map_err(err)?;
            let res = verify_composite(&prog, &p, &u_g, &prop).map_err(err)?;
            if prog.gate.branch == Branch::J9 {
                sim_j9 += 1;
            }
            sim_n += 1;
            sim_worst = sim_worst.max(res.j_uni);
        }
    }
    let exact_ok = worst < 1e-12;
    let j9_pass = j9_ok == j9_total;
    let sim_ok = sim_worst < 1e-6;
    Ok((
        exact_ok && j9_pass && sim_ok,
        format!(
            "J8 max projective error {worst:.2e} over 1000 cases; J9 J_uni ≤ J_uni^Mik in {j9_ok}/{j9_total} cases (worst ratio {j9_worst_ratio:.2}); \
             Sr-88 full simulation max J_uni {sim_worst:.2e} over {sim_n} gates ({sim_j9} on J9)"
        ),
    ))
}

fn mikado_robustness() -> Outcome {
    let mik = sr88_mikado()?;
    let m = mik.mean_components();
    let pass = m.j_uni <= 5e-4 && m.j_ent <= 2e-4 && m.j_mot <= 1e-5;
    let stretch = m.j_uni <= 5.61e-5 && m.j_ent <= 5.02e-5 && m.j_mot <= 2.47e-7;
    Ok((
        pass,
        format!(
            "⟨J_uni^Mik⟩ = {:.3e}, ⟨J_ent⟩ = {:.3e}, ⟨J_mot⟩ = {:.3e} over {} points (stretch targets 5.61e-5 / 5.02e-5 / 2.47e-7 met: {stretch})",
            m.j_uni,
            m.j_ent,
            m.j_mot,
            mik.points.len()
        ),
    ))
}

fn rb_saturation_check() -> Outcome {
    let mut cfg = RBConfig::new(GateMode::IdealizedL4, 300, 100, 0.99, 3);
    cfg.record_depths = vec![1, 100, 300];
    let series = run_rb(&cfg, &SystemParams::sr88(), &idealized_resources(DEFAULT_THETA_ENT), &PropagationConfig::default()).map_err(err)?;
    let deep = series.at(300).expect("recorded");
    let target = rb_saturation(0.99).map_err(err)?;
    let rel = (deep.j_ent / target - 1.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let angles: Vec<f64> = (0..100_000).map(|_| rotation_angle(&sample_haar_su2(&mut rng))).collect();
    let (_, p) = ks_test(&angles, haar_theta_cdf);
    Ok((
        rel <= 0.15 && p > 0.01,
        format!(
            "J_ent(300) = {:.4e} ± {:.1e} vs (1−p0)/2 = {target:.4e} ({:.1}% off); Haar KS p = {p:.3}",
            deep.j_ent,
            deep.j_ent_err,
            100.0 * rel
        ),
    ))
}

fn mikado_vs_mossbauer() -> Outcome {
    let mik = sr88_mikado()?;
    let params = SystemParams::sr88().with_p0(0.99).map_err(err)?;
    let prop = PropagationConfig::default();
    let depths = vec![1, 10, 30, 100];
    let series = |mode: GateMode, params: &SystemParams| {
        let resources = match mode {
            GateMode::Mikado => pulse_resources(&mik.pulse, params, &prop),
            _ => mossbauer_resources(params, &prop),
        }
        .map_err(err)?;
        let cfg = RBConfig { record_depths: depths.clone(), ..RBConfig::new(mode, 100, 20, params.p0, 5) };
        run_rb(&cfg, params, &resources, &prop).map_err(err)
    };
    let s_mik = series(GateMode::Mikado, &params)?;
    let s_moss = series(GateMode::Mossbauer, &params)?;
    let rb_ratio = s_moss.at(100).expect("recorded").j_mot / s_mik.at(100).expect("recorded").j_mot;
    let excluded = s_mik.excluded + s_moss.excluded;

    let thetas: Vec<f64> = (0..9).map(|i| PI * i as f64 / 8.0).collect();
    let devs = intensity_grid(11, 0.025);
    let mean_mot = |pulse: &PulseShape| -> Result<f64, String> {
        let grid = gate_grid(pulse, &params, &thetas, &devs, &prop).map_err(err)?;
        Ok(grid.iter().map(|g| g.j_mot).sum::<f64>() / grid.len() as f64)
    };
    let grid_ratio = mean_mot(&mossbauer_pulse(&params).map_err(err)?)? / mean_mot(&mik.pulse)?;

    let cold = SystemParams::sr88().with_p0(0.90).map_err(err)?;
    let warm = series(GateMode::Mikado, &cold)?;
    let (r10, r30, r100) = (warm.at(10).expect("recorded"), warm.at(30).expect("recorded"), warm.at(100).expect("recorded"));
    let uni_rising = r100.j_uni > r30.j_uni && r30.j_uni > r10.j_uni;
    let ent_growth = r100.j_ent / r30.j_ent;
    let uni_growth = r100.j_uni / r30.j_uni;
    let qualitative = uni_rising && ent_growth < uni_growth;

    let pass = rb_ratio >= 100.0 && grid_ratio >= 100.0 && excluded * 20 < 40;
    Ok((
        pass,
        format!(
            "RB depth 100 J_mot ratio {rb_ratio:.0} ({excluded} circuits dropped); gate grid mean J_mot ratio {grid_ratio:.0}; \
             p0=0.90 crossover check (qualitative): J_uni {:.2e}→{:.2e}→{:.2e}, J_ent {:.2e}→{:.2e}→{:.2e} at N=10/30/100, \
             J_uni rising faster than J_ent: {qualitative}",
            r10.j_uni, r30.j_uni, r100.j_uni, r10.j_ent, r30.j_ent, r100.j_ent
        ),
    ))
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "plateau law", plateau_law),
        (2, "thermal-channel oracle", thermal_oracle),
        (3, "Mössbauer oracle", mossbauer_oracle),
        (4, "perturbative reconstruction", perturbative_reconstruction),
        (5, "recoil-free optimization", recoil_free_optimization),
        (6, "symmetry claims", symmetry_claims),
        (7, "composite exactness", composite_exactness),
        (8, "Mikado robustness", mikado_robustness),
        (9, "RB saturation", rb_saturation_check),
        (10, "Mikado vs Mössbauer separation", mikado_vs_mossbauer),
    ];
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("{} {id:>2} {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failures > 0 && std::env::var_os("RECOILFREE_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
