//! Decomposition of a state as a modulated multi-soliton plus an error that
//! is orthogonal to the 3K symmetry directions of the solitons, and tracking
//! of the modulation parameters along trajectories.
//!
//! The modulated profile uses `Gamma_k = c_k x / 2 - c_k^2 t / 4 + omega_k^0 t
//! + gamma_k(t)`: the reference pulsation multiplies `t`, while the modulated
//! `omega_k(t)` only enters the shape `phi_{omega_k}`.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{State, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::par::Execution;
use crate::profiles::{closed_form, MultiSolitonConfig};

/// Stacked modulation unknowns, ordered as all `omega`, all `sigma`, all
/// `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub omega: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParamVector {
    pub fn from_config(config: &MultiSolitonConfig) -> Self {
        ParamVector {
            omega: config.solitons.iter().map(|s| s.omega).collect(),
            sigma: config.solitons.iter().map(|s| s.sigma).collect(),
            gamma: config.solitons.iter().map(|s| s.gamma).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.omega.clone();
        v.extend(&self.sigma);
        v.extend(&self.gamma);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || flat.len() % 3 != 0 {
            return Err(Error::Domain(format!(
                "parameter vector length {} is not a positive multiple of 3",
                flat.len()
            )));
        }
        let k = flat.len() / 3;
        Ok(ParamVector {
            omega: flat[..k].to_vec(),
            sigma: flat[k..2 * k].to_vec(),
            gamma: flat[2 * k..].to_vec(),
        })
    }

    /// `sum_k |d omega_k| + |d sigma_k| + |d gamma_k|`.
    pub fn l1_distance(&self, other: &ParamVector) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    fn check(&self, config: &MultiSolitonConfig) -> Result<()> {
        if self.omega.len() != config.len()
            || self.sigma.len() != config.len()
            || self.gamma.len() != config.len()
        {
            return Err(Error::Domain(format!(
                "parameter vector does not match {} solitons",
                config.len()
            )));
        }
        if let Some(w) = self.omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("omega must be positive, got {w}")));
        }
        Ok(())
    }
}

/// Pointwise ingredients of soliton `k` under parameters `pi` at time `t`.
struct Frame {
    /// `x - c_k t - sigma_k`, wrapped.
    y: Vec<f64>,
    /// `exp(i Gamma_k)`.
    phase: Vec<Complex64>,
}

fn frame(config: &MultiSolitonConfig, pi: &ParamVector, k: usize, t: f64, grid: &Grid) -> Frame {
    let s = &config.solitons[k];
    let mut y = Vec::with_capacity(grid.n_points());
    let mut phase = Vec::with_capacity(grid.n_points());
    for &x in grid.points() {
        y.push(grid.wrap(x - s.c * t - pi.sigma[k]));
        let g = 0.5 * s.c * x - 0.25 * s.c * s.c * t + s.omega * t + pi.gamma[k];
        phase.push(Complex64::from_polar(1.0, g));
    }
    Frame { y, phase }
}

/// Modulated profile `S = sum_k S_k`.
pub fn modulated_profile(
    pi: &ParamVector,
    config: &MultiSolitonConfig,
    t: f64,
    grid: &Arc<Grid>,
) -> Result<State> {
    pi.check(config)?;
    let n = grid.n_points();
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    let mut nn = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (k, s) in config.solitons.iter().enumerate() {
        let f = frame(config, pi, k, t, grid);
        let amp = s.amplitude();
        for j in 0..n {
            let p = closed_form::phi(pi.omega[k], f.y[j]);
            u[j] += f.phase[j] * (amp * p);
            nn[j] -= p * p;
            v[j] -= s.c * p * p;
        }
    }
    Ok(State {
        u: ComplexField::new(grid.clone(), u)?,
        n: RealField::new(grid.clone(), nn)?,
        v: RealField::new(grid.clone(), v)?,
        t,
    })
}

/// The 3K orthogonality quantities of `u - S^u(pi)`:
/// `Re int phi_k e^{-i Gamma_k} eps`, `Re int y_k phi_k e^{-i Gamma_k} eps`,
/// `Im int Lambda_k e^{-i Gamma_k} eps`, in that block order.
pub fn orthogonality_residuals(
    state: &State,
    pi: &ParamVector,
    config: &MultiSolitonConfig,
) -> Result<Vec<f64>> {
    let s = modulated_profile(pi, config, state.t, state.grid())?;
    let eps = &state.u - &s.u;
    Ok(residuals_of(&eps, pi, config, state.t))
}

fn residuals_of(eps: &ComplexField, pi: &ParamVector, config: &MultiSolitonConfig, t: f64) -> Vec<f64> {
    let grid = eps.grid();
    let h = grid.spacing();
    let kk = config.len();
    let mut r = vec![0.0; 3 * kk];
    for k in 0..kk {
        let f = frame(config, pi, k, t, grid);
        let w = pi.omega[k];
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for (j, e) in eps.values().iter().enumerate() {
            let z = f.phase[j].conj() * e;
            let y = f.y[j];
            let p = closed_form::phi(w, y);
            a += p * z.re;
            b += y * p * z.re;
            c += closed_form::lambda_omega(w, y) * z.im;
        }
        r[k] = h * a;
        r[kk + k] = h * b;
        r[2 * kk + k] = h * c;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    pub max_damping: usize,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        ModulationOptions {
            tolerance: 1e-10,
            max_iter: 50,
            fd_step: 1e-6,
            max_damping: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModulationResult {
    pub pi: ParamVector,
    pub epsilon: State,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon_h_norm: f64,
    /// Why the solve stopped early, if it did not converge.
    pub failure: Option<String>,
}

impl ModulationResult {
    pub fn residual_max(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central finite-difference Jacobian of the residual map, one column per
/// parameter. Columns are independent and evaluated under `execution`.
pub fn residual_jacobian(
    state: &State,
    pi: &ParamVector,
    config: &MultiSolitonConfig,
    fd_step: f64,
    execution: Execution,
) -> Result<Mat<f64>> {
    let flat = pi.to_flat();
    let m = flat.len();
    let kk = config.len();
    let columns = execution.map_range(m, |i| -> Result<Vec<f64>> {
        let mut h = fd_step * flat[i].abs().max(1.0);
        if i < kk {
            h = h.min(0.5 * flat[i]);
        }
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let rp = orthogonality_residuals(state, &ParamVector::from_flat(&plus)?, config)?;
        let rm = orthogonality_residuals(state, &ParamVector::from_flat(&minus)?, config)?;
        Ok(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_fn(m, m, |r, c| columns[c][r]))
}

/// Newton iteration on the orthogonality residuals starting from `guess`.
pub fn modulate(
    state: &State,
    guess: &ParamVector,
    config: &MultiSolitonConfig,
    options: ModulationOptions,
    execution: Execution,
) -> Result<ModulationResult> {
    guess.check(config)?;
    let mut pi = guess.clone();
    let mut residuals = orthogonality_residuals(state, &pi, config)?;
    let mut best = (max_abs(&residuals), pi.clone(), residuals.clone());
    let mut iterations = 0;
    let mut failure = None;
    while max_abs(&residuals) > options.tolerance {
        if iterations == options.max_iter {
            failure = Some(format!("no convergence after {} iterations", options.max_iter));
            break;
        }
        iterations += 1;
        let jac = residual_jacobian(state, &pi, config, options.fd_step, execution)?;
        let rhs = Mat::from_fn(residuals.len(), 1, |i, _| -residuals[i]);
        let delta = jac.partial_piv_lu().solve(&rhs);
        let delta: Vec<f64> = (0..residuals.len()).map(|i| delta[(i, 0)]).collect();
        if delta.iter().any(|d| !d.is_finite()) {
            failure = Some("singular Jacobian".into());
            break;
        }
        let flat = pi.to_flat();
        let kk = config.len();
        let mut scale = 1.0;
        let mut damps = 0;
        // omega may at most halve per step, which keeps finite-difference
        // probes away from omega = 0.
        let shrinks = |scale: f64| (0..kk).any(|k| flat[k] + scale * delta[k] < 0.5 * flat[k]);
        while shrinks(scale) {
            if damps == options.max_damping {
                break;
            }
            scale *= 0.5;
            damps += 1;
        }
        if shrinks(scale) {
            failure = Some(format!(
                "omega step still too large after {} halvings",
                options.max_damping
            ));
            break;
        }
        let next: Vec<f64> = flat.iter().zip(&delta).map(|(p, d)| p + scale * d).collect();
        pi = ParamVector::from_flat(&next)?;
        residuals = orthogonality_residuals(state, &pi, config)?;
        let size = max_abs(&residuals);
        if !size.is_finite() {
            failure = Some("non-finite residuals".into());
            break;
        }
        if size < best.0 {
            best = (size, pi.clone(), residuals.clone());
        }
    }
    let converged = failure.is_none();
    if !converged {
        pi = best.1;
        residuals = best.2;
    }
    let profile = modulated_profile(&pi, config, state.t, state.grid())?;
    let epsilon = state.difference(&profile)?;
    let epsilon_h_norm = epsilon.bold_h_norm()?;
    Ok(ModulationResult {
        pi,
        epsilon,
        residuals,
        iterations,
        converged,
        epsilon_h_norm,
        failure,
    })
}

/// Jacobian diagonal at the exact profile, rescaled so that each block
/// should reproduce the constants `int Q Lambda Q = 1`, `int y Q Q' = -2`
/// and `int Q Lambda Q = 1`:
/// omega block times `-sqrt(omega) / sqrt(1 - c^2)`, sigma block divided by
/// `sqrt(1 - c^2) sqrt(omega)`, gamma block times `-sqrt(omega) / sqrt(1 - c^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianConstants {
    pub d_omega: Vec<f64>,
    pub d_sigma: Vec<f64>,
    pub d_gamma: Vec<f64>,
}

pub fn jacobian_constants(
    pi: &ParamVector,
    config: &MultiSolitonConfig,
    t: f64,
    grid: &Arc<Grid>,
    execution: Execution,
) -> Result<JacobianConstants> {
    let state = modulated_profile(pi, config, t, grid)?;
    let jac = residual_jacobian(&state, pi, config, 1e-6, execution)?;
    let kk = config.len();
    let mut out = JacobianConstants {
        d_omega: vec![],
        d_sigma: vec![],
        d_gamma: vec![],
    };
    for (k, s) in config.solitons.iter().enumerate() {
        let amp = s.amplitude();
        let root = pi.omega[k].sqrt();
        out.d_omega.push(jac[(k, k)] * (-root / amp));
        out.d_sigma.push(jac[(kk + k, kk + k)] / (amp * root));
        out.d_gamma.push(jac[(2 * kk + k, 2 * kk + k)] * (-root / amp));
    }
    Ok(out)
}

/// One tracked snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub t: f64,
    pub pi: ParamVector,
    pub residual_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon_h_norm: f64,
    /// `||eps_u||_{L^2}^2`.
    pub epsilon_u_l2_sq: f64,
    pub omega_dot: Vec<f64>,
    pub sigma_dot: Vec<f64>,
    pub gamma_dot: Vec<f64>,
    /// `gamma_dot_k - (omega_k - omega_k^0)`.
    pub gamma_excess: Vec<f64>,
}

/// Shift `value` by a multiple of `2 pi` to the branch nearest `reference`.
pub fn nearest_branch(value: f64, reference: f64) -> f64 {
    value + 2.0 * PI * ((reference - value) / (2.0 * PI)).round()
}

/// Modulate every snapshot of `trajectory`, warm-starting from the previous
/// converged frame (the first frame and any frame after a failure start
/// from the configuration itself), then difference the parameter series.
pub fn track(
    trajectory: &Trajectory,
    config: &MultiSolitonConfig,
    options: ModulationOptions,
    execution: Execution,
) -> Result<Vec<TrackFrame>> {
    let reference = ParamVector::from_config(config);
    let mut guess = reference.clone();
    let mut frames = Vec::with_capacity(trajectory.len());
    for state in &trajectory.states {
        let mut r = modulate(state, &guess, config, options, execution)?;
        for k in 0..config.len() {
            r.pi.gamma[k] = nearest_branch(r.pi.gamma[k], guess.gamma[k]);
        }
        guess = if r.converged {
            r.pi.clone()
        } else {
            log::warn!("modulation failed at t = {}: {:?}", state.t, r.failure);
            reference.clone()
        };
        frames.push(TrackFrame {
            t: state.t,
            pi: r.pi.clone(),
            residual_max: r.residual_max(),
            iterations: r.iterations,
            converged: r.converged,
            epsilon_h_norm: r.epsilon_h_norm,
            epsilon_u_l2_sq: r.epsilon.u.norm_sq(),
            omega_dot: vec![],
            sigma_dot: vec![],
            gamma_dot: vec![],
            gamma_excess: vec![],
        });
    }
    fill_rates(&mut frames, config);
    Ok(frames)
}

/// Second-order finite differences on a possibly non-uniform time grid,
/// one-sided at the ends.
pub fn derivative_series(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (y[1] - y[0]) / (t[1] - t[0])
            } else if i == n - 1 {
                (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2])
            } else {
                let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
                (y[i + 1] * h0 * h0 - y[i - 1] * h1 * h1 + y[i] * (h1 * h1 - h0 * h0))
                    / (h0 * h1 * (h0 + h1))
            }
        })
        .collect()
}

fn fill_rates(frames: &mut [TrackFrame], config: &MultiSolitonConfig) {
    let t: Vec<f64> = frames.iter().map(|f| f.t).collect();
    for (k, s) in config.solitons.iter().enumerate() {
        let series = |get: &dyn Fn(&TrackFrame) -> f64| {
            let y: Vec<f64> = frames.iter().map(get).collect();
            derivative_series(&t, &y)
        };
        let wd = series(&|f| f.pi.omega[k]);
        let sd = series(&|f| f.pi.sigma[k]);
        let gd = series(&|f| f.pi.gamma[k]);
        for (i, f) in frames.iter_mut().enumerate() {
            f.omega_dot.push(wd[i]);
            f.sigma_dot.push(sd[i]);
            f.gamma_dot.push(gd[i]);
            f.gamma_excess.push(gd[i] - (f.pi.omega[k] - s.omega));
        }
    }
}

pub fn write_track_csv<W: std::io::Write>(frames: &[TrackFrame], out: W) -> Result<()> {
    let k = frames.first().map_or(0, |f| f.pi.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for name in [
        "omega", "sigma", "gamma", "omega_dot", "sigma_dot", "gamma_dot", "gamma_excess",
    ] {
        header.extend((1..=k).map(|i| format!("{name}_{i}")));
    }
    header.extend(
        ["eps_H", "residual_max", "iterations", "converged"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for f in frames {
        let mut row = vec![format!("{:.17e}", f.t)];
        for series in [
            &f.pi.omega,
            &f.pi.sigma,
            &f.pi.gamma,
            &f.omega_dot,
            &f.sigma_dot,
            &f.gamma_dot,
            &f.gamma_excess,
        ] {
            row.extend(series.iter().map(|x| format!("{x:.17e}")));
        }
        row.push(format!("{:.17e}", f.epsilon_h_norm));
        row.push(format!("{:.17e}", f.residual_max));
        row.push(f.iterations.to_string());
        row.push(f.converged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{multi_soliton, SolitonParams};

    fn grid() -> Arc<Grid> {
        Grid::new(1024, 60.0).unwrap()
    }

    fn pair() -> MultiSolitonConfig {
        MultiSolitonConfig::new(vec![
            SolitonParams::new(1.0, -0.4, -10.0, 0.3).unwrap(),
            SolitonParams::new(1.5, 0.3, 10.0, -0.5).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn flat_layout_round_trip() {
        let pi = ParamVector::from_config(&pair());
        assert_eq!(pi.to_flat(), vec![1.0, 1.5, -10.0, 10.0, 0.3, -0.5]);
        assert_eq!(ParamVector::from_flat(&pi.to_flat()).unwrap(), pi);
        assert!(ParamVector::from_flat(&[1.0, 2.0]).is_err());
        let mut other = pi.clone();
        other.sigma[1] += 0.25;
        other.gamma[0] -= 0.5;
        assert!((pi.l1_distance(&other) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn profile_at_reference_equals_superposition() {
        let g = grid();
        let cfg = pair();
        let s = modulated_profile(&ParamVector::from_config(&cfg), &cfg, 1.3, &g).unwrap();
        let r = multi_soliton(&cfg, 1.3, &g).unwrap();
        assert!((&s.u - &r.u).max_abs() < 1e-13);
        assert!((&s.n - &r.n).max_abs() < 1e-13);
    }

    #[test]
    fn exact_profile_is_a_fixed_point() {
        let g = grid();
        let cfg = pair();
        let pi = ParamVector::from_config(&cfg);
        let s = modulated_profile(&pi, &cfg, 0.5, &g).unwrap();
        let r = orthogonality_residuals(&s, &pi, &cfg).unwrap();
        assert!(max_abs(&r) < 1e-12);
        let m = modulate(&s, &pi, &cfg, ModulationOptions::default(), Execution::Sequential).unwrap();
        assert!(m.converged && m.iterations <= 1);
        assert_eq!(m.pi, pi);
        assert!(m.epsilon_h_norm < 1e-12);
    }

    #[test]
    fn omega_residual_sees_the_omega_direction() {
        let g = grid();
        let cfg = pair();
        let pi = ParamVector::from_config(&cfg);
        let mut s = modulated_profile(&pi, &cfg, 0.0, &g).unwrap();
        let delta = 1e-4;
        let f = frame(&cfg, &pi, 0, 0.0, &g);
        let bump = g.complex_from_fn(|_| Complex64::new(0.0, 0.0));
        let bump = ComplexField::new(
            g.clone(),
            bump.values()
                .iter()
                .enumerate()
                .map(|(j, _)| f.phase[j] * (delta * closed_form::phi(1.0, f.y[j])))
                .collect(),
        )
        .unwrap();
        s.u = &s.u + &bump;
        let r = orthogonality_residuals(&s, &pi, &cfg).unwrap();
        assert!((r[0] - delta * 4.0).abs() < 1e-10, "{}", r[0]);
        for (i, v) in r.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-10, "residual {i} = {v}");
        }
    }

    #[test]
    fn jacobian_reproduces_leading_constants() {
        let g = Grid::new(2048, 80.0).unwrap();
        let cfg = MultiSolitonConfig::new(vec![
            SolitonParams::new(1.0, -0.5, -15.0, 0.0).unwrap(),
            SolitonParams::new(2.0, 0.5, 15.0, 0.0).unwrap(),
        ])
        .unwrap();
        let d = jacobian_constants(&ParamVector::from_config(&cfg), &cfg, 0.0, &g, Execution::Parallel)
            .unwrap();
        for k in 0..2 {
            assert!((d.d_omega[k] - 1.0).abs() < 1e-6, "{:?}", d);
            assert!((d.d_sigma[k] + 2.0).abs() < 1e-6, "{:?}", d);
            assert!((d.d_gamma[k] - 1.0).abs() < 1e-6, "{:?}", d);
        }
    }

    #[test]
    fn recovers_parameters_from_perturbed_guess() {
        let g = grid();
        let cfg = pair();
        let truth = ParamVector::from_config(&cfg);
        let s = modulated_profile(&truth, &cfg, 0.0, &g).unwrap();
        let guess = ParamVector::from_flat(&truth.to_flat().iter().map(|p| p + 1e-2).collect::<Vec<_>>())
            .unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let m = modulate(&s, &guess, &cfg, ModulationOptions::default(), exec).unwrap();
            assert!(m.converged, "{:?}", m.failure);
            assert!(m.iterations <= 8);
            for (a, b) in m.pi.to_flat().iter().zip(truth.to_flat()) {
                assert!((a - b).abs() < 1e-8);
            }
            let again = orthogonality_residuals(&s, &m.pi, &cfg).unwrap();
            assert!(max_abs(&again) <= 1e-10);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = grid();
        let cfg = pair();
        let truth = ParamVector::from_config(&cfg);
        let s = modulated_profile(&truth, &cfg, 0.0, &g).unwrap();
        let mut guess = truth.clone();
        guess.sigma[0] += 0.3;
        let opts = ModulationOptions {
            max_iter: 1,
            ..Default::default()
        };
        let m = modulate(&s, &guess, &cfg, opts, Execution::Sequential).unwrap();
        assert!(!m.converged);
        assert!(m.failure.is_some());
        let mut bad = truth.clone();
        bad.omega[0] = -1.0;
        assert!(matches!(
            orthogonality_residuals(&s, &bad, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn residuals_are_translation_covariant() {
        let g = grid();
        let cfg = pair();
        let pi = ParamVector::from_config(&cfg);
        let mut state = modulated_profile(&pi, &cfg, 0.0, &g).unwrap();
        state.u = state.u.map(|z| z * 1.01 + Complex64::new(0.0, 1e-3));
        let shift = 7usize;
        let delta = shift as f64 * g.spacing();
        let mut moved = state.clone();
        let n = g.n_points();
        let vals: Vec<Complex64> = (0..n).map(|j| state.u.values()[(j + n - shift) % n]).collect();
        moved.u = ComplexField::new(g.clone(), vals).unwrap();
        let mut shifted = pi.clone();
        for (k, s) in cfg.solitons.iter().enumerate() {
            shifted.sigma[k] += delta;
            shifted.gamma[k] -= 0.5 * s.c * delta;
        }
        let a = orthogonality_residuals(&state, &pi, &cfg).unwrap();
        let b = orthogonality_residuals(&moved, &shifted, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn branch_selection() {
        assert!((nearest_branch(0.1, 2.0 * PI) - (0.1 + 2.0 * PI)).abs() < 1e-12);
        assert_eq!(nearest_branch(0.1, 0.2), 0.1);
        assert!((nearest_branch(-3.0, 3.2) - (2.0 * PI - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn rates_of_linear_series() {
        let t = [0.0, 0.5, 1.5, 2.0, 3.0];
        let y: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        for d in derivative_series(&t, &y) {
            assert!((d - 2.0).abs() < 1e-12);
        }
        let q: Vec<f64> = t.iter().map(|x| x * x).collect();
        let d = derivative_series(&t, &q);
        for i in 1..4 {
            assert!((d[i] - 2.0 * t[i]).abs() < 1e-12);
        }
    }
}
