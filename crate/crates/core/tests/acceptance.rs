//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use zakharov_core::dynamics::{evolve, State};
use zakharov_core::experiments::{
    local_mass_study, min_separation, modified_energy_bound, modified_energy_series,
    perturbation_audit, g0_drift_audit, BackwardAnalysis, ExperimentSpec,
};
use zakharov_core::functionals::{energy, mass, momentum, weinstein, weinstein_decompose, CutoffFamily};
use zakharov_core::modulation::{
    jacobian_constants, modulate, modulated_profile, orthogonality_residuals, track,
    ModulationOptions, ParamVector,
};
use zakharov_core::profiles::{closed_form as cf, traveling_wave};
use zakharov_core::spectral::{nls_coercivity, LinearizedOperator};
use zakharov_core::{Execution, Grid, GridSpec, MultiSolitonConfig, Result, SolitonParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn quadrature_constants() -> Result<Outcome> {
    let start = Instant::now();
    let g = Grid::new(1024, 40.0)?;
    let q = g.real_from_fn(|x| cf::q(g.wrap(x)));
    let q2 = q.map(|v| v * v).integral();
    let q4 = q.map(|v| v.powi(4)).integral();
    let (e2, e4) = ((q2 - 4.0).abs(), (q4 - 16.0 / 3.0).abs());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        e2 < 1e-10 && e4 < 1e-10 && secs < 1.0,
        format!("|int Q^2 - 4| = {e2:.1e}, |int Q^4 - 16/3| = {e4:.1e}, {secs:.2} s"),
    )
}

fn profile_residual() -> Result<Outcome> {
    let start = Instant::now();
    let g = Grid::from_spec(GridSpec::default())?;
    let (mut eq, mut first) = (0.0f64, 0.0f64);
    for omega in [0.5, 1.0, 2.0] {
        let phi = g.real_from_fn(|x| cf::phi(omega, g.wrap(x)));
        let d1 = phi.derivative(1)?;
        let d2 = phi.derivative(2)?;
        for ((p, a), b) in phi.values().iter().zip(d1.values()).zip(d2.values()) {
            eq = eq.max((b - omega * p + p.powi(3)).abs());
            first = first.max((a * a - omega * p * p + 0.5 * p.powi(4)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        eq < 1e-8 && first < 1e-8 && secs < 1.0,
        format!("profile equation {eq:.1e}, first integral {first:.1e} (spectral derivatives), {secs:.2} s"),
    )
}

fn mass_speed_link() -> Result<Outcome> {
    let g = Grid::new(1024, 40.0)?;
    let mut worst = 0.0f64;
    for omega in [0.5, 1.0, 2.0] {
        for c in [-0.8, 0.0, 0.8] {
            let s = traveling_wave(&SolitonParams::new(omega, c, 0.0, 0.0)?, 0.0, &g)?;
            worst = worst.max((mass(&s) - 4.0 * (1.0 - c * c) * omega.sqrt()).abs());
        }
    }
    outcome(worst < 1e-9, format!("max |M - 4(1-c^2) sqrt(omega)| = {worst:.1e}"))
}

fn integrator() -> Result<Outcome> {
    let start = Instant::now();
    let g = Grid::new(1024, 40.0)?;
    let p = SolitonParams::new(1.0, 0.5, -5.0, 0.3)?;
    let s0 = traveling_wave(&p, 0.0, &g)?;
    let traj = evolve(&s0, 10.0, 1e-3, 1000)?;
    let (m0, e0, p0) = (mass(&s0), energy(&s0)?, momentum(&s0)?);
    let mut mass_drift = 0.0f64;
    for w in traj.states.windows(2) {
        mass_drift = mass_drift.max(((mass(&w[1]) - mass(&w[0])) / m0).abs());
    }
    let (mut de, mut dp) = (0.0f64, 0.0f64);
    for s in &traj.states {
        de = de.max((energy(s)? - e0).abs());
        dp = dp.max((momentum(s)? - p0).abs());
    }
    let standing = |dt: f64| -> Result<f64> {
        let w = SolitonParams::new(1.0, 0.0, 0.0, 0.0)?;
        let end = evolve(&traveling_wave(&w, 0.0, &g)?, 1.0, dt, usize::MAX)?;
        let exact = traveling_wave(&w, 1.0, &g)?;
        Ok((&end.last().u - &exact.u).norm_sq().sqrt())
    };
    let (e1, e2) = (standing(1e-3)?, standing(5e-4)?);
    let ratio = e1 / e2;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mass_drift < 1e-12 && de < 1e-6 && dp < 1e-6 && e1 < 1e-6 && (3.5..=4.5).contains(&ratio) && secs < 60.0,
        format!(
            "mass drift/1000 steps {mass_drift:.1e}, E drift {de:.1e}, P drift {dp:.1e}, standing-wave error {e1:.2e}, halving ratio {ratio:.3}, {secs:.1} s"
        ),
    )
}

fn spectral_identities() -> Result<Outcome> {
    let start = Instant::now();
    let g = Grid::from_spec(GridSpec::default())?;
    let lp = LinearizedOperator::plus(&g);
    let lm = LinearizedOperator::minus(&g);
    let q = g.real_from_fn(|x| cf::q(g.wrap(x)));
    let qp = g.real_from_fn(|x| cf::q_prime(g.wrap(x)));
    let yq = g.real_from_fn(|x| {
        let y = g.wrap(x);
        y * cf::q(y)
    });
    let lq = g.real_from_fn(|x| cf::lambda_q(g.wrap(x)));
    let k = [
        lm.apply(&q)?.max_abs(),
        lp.apply(&qp)?.max_abs(),
        (&lm.apply(&yq)? + &qp.scale(2.0)).max_abs(),
        (&lp.apply(&lq)? + &q).max_abs(),
    ];
    let plus = lp.spectrum(1)?.values[0];
    let minus = lm.spectrum(1)?.values[0];
    let secs = start.elapsed().as_secs_f64();
    outcome(
        max_abs(&k) < 1e-8 && (plus + 3.0).abs() < 1e-3 && minus >= -1e-8 && secs < 30.0,
        format!(
            "kernel residuals {:.1e} {:.1e} {:.1e} {:.1e}, min eig L+ = {plus:.10}, min eig L- = {minus:.1e}, n = 2048 dense, {secs:.1} s",
            k[0], k[1], k[2], k[3]
        ),
    )
}

fn constrained_coercivity() -> Result<Outcome> {
    let coarse = nls_coercivity(&Grid::new(1024, 40.0)?)?;
    let fine = nls_coercivity(&Grid::new(2048, 40.0)?)?;
    let (a, b) = (coarse.lambda_min_constrained, fine.lambda_min_constrained);
    let rel = (a - b).abs() / b.abs();
    outcome(
        a > 0.0 && b > 0.0 && rel <= 0.02,
        format!("lambda_min = {a:.10} (n = 1024), {b:.10} (n = 2048), relative change {rel:.1e}"),
    )
}

fn modulation() -> Result<Outcome> {
    let g = Grid::from_spec(GridSpec::default())?;
    let cfg = MultiSolitonConfig::new(vec![
        SolitonParams::new(1.0, -0.5, -12.0, 0.4)?,
        SolitonParams::new(1.5, 0.5, 12.0, -0.7)?,
    ])?;
    let truth = ParamVector::from_config(&cfg);
    let exact = modulated_profile(&truth, &cfg, 0.0, &g)?;
    let fixed = max_abs(&orthogonality_residuals(&exact, &truth, &cfg)?);
    let flat = truth.to_flat();
    let mut recovery = 0.0f64;
    let mut converged = true;
    for sign in [1.0, -1.0] {
        let guess = ParamVector::from_flat(
            &flat.iter().enumerate().map(|(i, p)| p + sign * 1e-2 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>(),
        )?;
        let m = modulate(&exact, &guess, &cfg, ModulationOptions::default(), Execution::Parallel)?;
        converged &= m.converged;
        for (a, b) in m.pi.to_flat().iter().zip(&flat) {
            recovery = recovery.max((a - b).abs());
        }
    }
    let d = jacobian_constants(&truth, &cfg, 0.0, &g, Execution::Parallel)?;
    let mut jac = 0.0f64;
    for k in 0..cfg.len() {
        jac = jac
            .max((d.d_omega[k] - 1.0).abs())
            .max((d.d_sigma[k] + 2.0).abs() / 2.0)
            .max((d.d_gamma[k] - 1.0).abs());
    }
    outcome(
        fixed < 1e-12 && converged && recovery < 1e-8 && jac < 0.05,
        format!("fixed-point residual {fixed:.1e}, recovery error {recovery:.1e}, Jacobian constants within {:.1e} relative", jac),
    )
}

/// The two-soliton setting shared by the Weinstein audit and the backward
/// construction.
fn backward_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.config = MultiSolitonConfig::new(vec![
        SolitonParams::new(1.0, -0.5, 0.0, 0.0).expect("valid"),
        SolitonParams::new(1.0, 0.5, 0.0, FRAC_PI_2).expect("valid"),
    ])
    .expect("valid");
    spec.numerics.n_points = 2048;
    spec.numerics.box_length = 80.0;
    spec.numerics.dt = 1e-3;
    spec.knobs.t_final = 30.0;
    spec
}

fn weinstein_audit(run: &BackwardAnalysis, spec: &ExperimentSpec) -> Result<Outcome> {
    let cfg = &spec.config;
    let grid: Arc<Grid> = run.trajectory.states[0].grid().clone();
    let family = CutoffFamily::new(5.0, cfg)?;
    let options = ModulationOptions::default();

    // Decomposition around the modulated profile on every tenth sample of the run.
    let sub = zakharov_core::dynamics::Trajectory {
        states: run.trajectory.states.iter().step_by(10).cloned().collect::<Vec<State>>(),
        ..run.trajectory.clone()
    };
    let frames = track(&sub, cfg, options, Execution::Parallel)?;
    let mut worst = 0.0f64;
    for (s, f) in sub.states.iter().zip(&frames) {
        let g = weinstein(s, cfg, &family)?;
        let profile = modulated_profile(&f.pi, cfg, s.t, &grid)?;
        let parts = weinstein_decompose(&s.difference(&profile)?, &profile, cfg, Some(&f.pi.omega), &family)?;
        worst = worst.max((parts.total() - g).abs() / g.abs());
    }
    let t = spec.knobs.t_final;
    let mut reduction = f64::INFINITY;
    for seed in 0..3 {
        let a = perturbation_audit(cfg, &grid, t, 1e-3, seed, &family, options, Execution::Parallel)?;
        worst = worst.max(a.decomposition_residual);
        reduction = reduction.min(if a.converged { a.reduction } else { 0.0 });
    }
    let deltas = [-0.1, -0.05, -0.01, 0.01, 0.05, 0.1];
    let drift = g0_drift_audit(cfg, &grid, t, &family, &deltas)?;
    let sep = min_separation(cfg, t);
    outcome(
        worst < 1e-9 && reduction >= 100.0 && drift < 1e-6 && sep >= 30.0,
        format!(
            "decomposition residual {worst:.1e}, min G1 reduction {reduction:.1e}x over 3 seeds, G0 drift error {drift:.1e} at separation {sep}"
        ),
    )
}

fn ascending(run: &BackwardAnalysis) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..run.errors.len()).collect();
    idx.sort_by(|&a, &b| run.errors[a].t.total_cmp(&run.errors[b].t));
    (idx.iter().map(|&i| run.errors[i].t).collect(), idx)
}

fn backward_decay(run: &BackwardAnalysis, spec: &ExperimentSpec) -> Result<Outcome> {
    let (h, h2) = run.decay_fits(spec)?.expect("two solitons");
    let (t, _) = ascending(run);
    outcome(
        h.rate > 0.0 && h.r_squared > 0.99 && h2.rate > 0.0,
        format!(
            "theta_hat = {:.4} (R^2 {:.6}, t in [{}, {}], {} points), H2 rate {:.4} (R^2 {:.6}); theta0 = {:.4}; run t in [{}, {}]",
            h.rate, h.r_squared, h.t_window[0], h.t_window[1], h.points, h2.rate, h2.r_squared,
            spec.config.theta0(), t[0], t[t.len() - 1]
        ),
    )
}

fn local_quantities(run: &BackwardAnalysis, spec: &ExperimentSpec) -> Result<Outcome> {
    let study = local_mass_study(&run.trajectory, &spec.config, &[5.0, 10.0, 20.0], Execution::Parallel)?;
    outcome(
        study.monotone,
        format!(
            "max |M_k(t) - M_k(T)| = {:.3e} (L=5), {:.3e} (L=10), {:.3e} (L=20); times L: {:.3} {:.3} {:.3}",
            study.max_deviation[0], study.max_deviation[1], study.max_deviation[2],
            study.scaled[0], study.scaled[1], study.scaled[2]
        ),
    )
}

fn modified_energy(run: &BackwardAnalysis, spec: &ExperimentSpec) -> Result<Outcome> {
    let (h, _) = run.decay_fits(spec)?.expect("two solitons");
    let energies = modified_energy_series(&run.trajectory, &spec.config, Execution::Parallel)?;
    let t: Vec<f64> = run.errors.iter().map(|e| e.t).collect();
    let g: Vec<f64> = energies.iter().map(|e| e.g_mod).collect();
    let b = modified_energy_bound(&t, &g, h.rate, h.t_window)?;
    outcome(
        b.violations == 0,
        format!(
            "C = {:.4e} calibrated on {} samples; {} violations on {} window samples, worst ratio {:.4}",
            b.c, b.calibration_points, b.violations, b.checked_points, b.worst_ratio
        ),
    )
}

fn report(id: usize, name: &str, result: Result<Outcome>, secs: f64, failures: &mut usize) {
    let line = match result {
        Ok(o) => {
            if !o.pass {
                *failures += 1;
            }
            format!("{} criterion {id:>2} {name}: {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail)
        }
        Err(e) => {
            *failures += 1;
            format!("FAIL criterion {id:>2} {name}: error {e} [{secs:.1} s]")
        }
    };
    println!("{line}");
}

fn main() -> ExitCode {
    let mut failures = 0;
    let simple: [(&str, fn() -> Result<Outcome>); 7] = [
        ("quadrature constants", quadrature_constants),
        ("profile residual", profile_residual),
        ("mass/speed link", mass_speed_link),
        ("integrator", integrator),
        ("spectral identities", spectral_identities),
        ("constrained coercivity", constrained_coercivity),
        ("modulation", modulation),
    ];
    for (i, (name, f)) in simple.iter().enumerate() {
        let start = Instant::now();
        let r = f();
        report(i + 1, name, r, start.elapsed().as_secs_f64(), &mut failures);
    }

    let spec = backward_spec();
    let start = Instant::now();
    let run = BackwardAnalysis::compute(&spec, Execution::Parallel);
    let build = start.elapsed().as_secs_f64();
    type Shared = fn(&BackwardAnalysis, &ExperimentSpec) -> Result<Outcome>;
    let shared: [(usize, &str, Shared); 4] = [
        (8, "weinstein audit", weinstein_audit),
        (9, "backward construction", backward_decay),
        (10, "local quantities", local_quantities),
        (11, "modified-energy inequality", modified_energy),
    ];
    match run {
        Ok(run) => {
            println!("     backward run with noise floor built in {build:.1} s ({} samples)", run.errors.len());
            for (id, name, f) in shared {
                let start = Instant::now();
                let r = f(&run, &spec);
                report(id, name, r, start.elapsed().as_secs_f64(), &mut failures);
            }
        }
        Err(e) => {
            for (id, name, _) in shared {
                failures += 1;
                println!("FAIL criterion {id:>2} {name}: backward run failed: {e} [{build:.1} s]");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
