//! Closed-form solitary waves: the ground state `Q`, the pulsation family
//! `phi_omega`, the scaling generators `Lambda Q` and `Lambda_omega`, single
//! traveling waves and the K-soliton superposition `R`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};

/// Pointwise closed forms.
pub mod closed_form {
    use std::f64::consts::SQRT_2;

    /// `Q(y) = sqrt(2) / cosh(y)`.
    pub fn q(y: f64) -> f64 {
        SQRT_2 / y.cosh()
    }

    pub fn q_prime(y: f64) -> f64 {
        -SQRT_2 * y.tanh() / y.cosh()
    }

    /// `Lambda Q = (Q + y Q') / 2 = (1 - y tanh y) / (sqrt(2) cosh y)`.
    pub fn lambda_q(y: f64) -> f64 {
        (1.0 - y * y.tanh()) / (SQRT_2 * y.cosh())
    }

    pub fn phi(omega: f64, x: f64) -> f64 {
        let s = omega.sqrt();
        s * q(s * x)
    }

    pub fn phi_prime(omega: f64, x: f64) -> f64 {
        omega * q_prime(omega.sqrt() * x)
    }

    /// `d phi_omega / d omega = Lambda Q(sqrt(omega) x) / sqrt(omega)`.
    pub fn lambda_omega(omega: f64, x: f64) -> f64 {
        let s = omega.sqrt();
        lambda_q(s * x) / s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonParams {
    pub omega: f64,
    pub c: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl SolitonParams {
    pub fn new(omega: f64, c: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = SolitonParams {
            omega,
            c,
            sigma,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::Domain(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !(self.c.is_finite() && self.c.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "speed c must lie in (-1, 1), got {}",
                self.c
            )));
        }
        if !(self.sigma.is_finite() && self.gamma.is_finite()) {
            return Err(Error::Domain("sigma and gamma must be finite".into()));
        }
        Ok(())
    }

    /// `nu = omega + c^2 / 4`.
    pub fn nu(&self) -> f64 {
        self.omega + 0.25 * self.c * self.c
    }

    /// Amplitude factor `sqrt(1 - c^2)` of the `u` component.
    pub fn amplitude(&self) -> f64 {
        (1.0 - self.c * self.c).sqrt()
    }

    /// Moving-frame coordinate `x - c t - sigma`, wrapped into the box.
    pub fn frame_coordinate(&self, grid: &Grid, x: f64, t: f64) -> f64 {
        grid.wrap(x - self.c * t - self.sigma)
    }

    /// Phase `c x / 2 - c^2 t / 4 + omega t + gamma`. `x` is the grid
    /// coordinate, not the moving one: `gamma` and `sigma` are not
    /// interchangeable.
    pub fn phase(&self, x: f64, t: f64) -> f64 {
        0.5 * self.c * x - 0.25 * self.c * self.c * t + self.omega * t + self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSolitonConfig {
    pub solitons: Vec<SolitonParams>,
}

impl MultiSolitonConfig {
    pub fn new(solitons: Vec<SolitonParams>) -> Result<Self> {
        let c = MultiSolitonConfig { solitons };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solitons.is_empty() {
            return Err(Error::config("solitons", "at least one soliton is required"));
        }
        for (k, s) in self.solitons.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::config(format!("solitons[{k}]"), e.to_string()))?;
        }
        for (k, w) in self.solitons.windows(2).enumerate() {
            if w[1].c <= w[0].c {
                return Err(Error::config(
                    format!("solitons[{}].c", k + 1),
                    format!(
                        "speeds must be pairwise distinct and listed in increasing order \
                         (hypothesis c_k != c_l); got c[{}] = {} after c[{}] = {}",
                        k + 1,
                        w[1].c,
                        k,
                        w[0].c
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.solitons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solitons.is_empty()
    }

    /// `omega_- = min omega_k / 2`.
    pub fn omega_minus(&self) -> f64 {
        0.5 * self
            .solitons
            .iter()
            .map(|s| s.omega)
            .fold(f64::INFINITY, f64::min)
    }

    /// `omega_+ = 3 max omega_k / 2`.
    pub fn omega_plus(&self) -> f64 {
        1.5 * self
            .solitons
            .iter()
            .map(|s| s.omega)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `theta_0` with `sqrt(theta_0) = min(speed gaps, sqrt(omega_-)) / 16`.
    pub fn theta0(&self) -> f64 {
        let gap = self
            .solitons
            .windows(2)
            .map(|w| w[1].c - w[0].c)
            .fold(self.omega_minus().sqrt(), f64::min);
        (gap / 16.0).powi(2)
    }

    /// Boundary speeds `(c_{k-1} + c_k) / 2` for `k = 2..K`.
    pub fn boundary_speeds(&self) -> Vec<f64> {
        self.solitons
            .windows(2)
            .map(|w| 0.5 * (w[0].c + w[1].c))
            .collect()
    }
}

pub fn ground_state(grid: &Arc<Grid>, center: f64) -> RealField {
    grid.real_from_fn(|x| closed_form::q(grid.wrap(x - center)))
}

pub fn phi(omega: f64, grid: &Arc<Grid>, center: f64) -> Result<RealField> {
    check_omega(omega)?;
    Ok(grid.real_from_fn(|x| closed_form::phi(omega, grid.wrap(x - center))))
}

pub fn lambda_q(grid: &Arc<Grid>, center: f64) -> RealField {
    grid.real_from_fn(|x| closed_form::lambda_q(grid.wrap(x - center)))
}

pub fn lambda_omega(omega: f64, grid: &Arc<Grid>, center: f64) -> Result<RealField> {
    check_omega(omega)?;
    Ok(grid.real_from_fn(|x| closed_form::lambda_omega(omega, grid.wrap(x - center))))
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("omega must be positive, got {omega}")))
    }
}

/// Traveling wave `(u, n, v)` with parameters `params` at time `t`.
pub fn traveling_wave(params: &SolitonParams, t: f64, grid: &Arc<Grid>) -> Result<State> {
    params.validate()?;
    if !t.is_finite() {
        return Err(Error::Domain("time must be finite".into()));
    }
    let amp = params.amplitude();
    let mut u = Vec::with_capacity(grid.n_points());
    let mut n = Vec::with_capacity(grid.n_points());
    let mut v = Vec::with_capacity(grid.n_points());
    for &x in grid.points() {
        let p = closed_form::phi(params.omega, params.frame_coordinate(grid, x, t));
        u.push(Complex64::from_polar(amp * p, params.phase(x, t)));
        n.push(-p * p);
        v.push(-params.c * p * p);
    }
    Ok(State {
        u: ComplexField::new(grid.clone(), u)?,
        n: RealField::new(grid.clone(), n)?,
        v: RealField::new(grid.clone(), v)?,
        t,
    })
}

/// Field-wise sum of the traveling waves of `config`.
pub fn multi_soliton(config: &MultiSolitonConfig, t: f64, grid: &Arc<Grid>) -> Result<State> {
    config.validate()?;
    let mut total = State::zeros(grid, t);
    for s in &config.solitons {
        total.add_assign(&traveling_wave(s, t, grid)?);
    }
    Ok(total)
}

/// Interaction sources of the error system around `R`.
#[derive(Debug, Clone)]
pub struct InteractionSources {
    /// `sum_{j != k} R_j^u R_k^n`.
    pub psi_u: ComplexField,
    /// `d/dx (|sum R_k^u|^2 - sum |R_k^u|^2)`.
    pub psi_v: RealField,
}

pub fn interaction_sources(
    config: &MultiSolitonConfig,
    t: f64,
    grid: &Arc<Grid>,
) -> Result<InteractionSources> {
    config.validate()?;
    let waves = config
        .solitons
        .iter()
        .map(|s| traveling_wave(s, t, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut psi_u = ComplexField::zeros(grid);
    for (j, wj) in waves.iter().enumerate() {
        for (k, wk) in waves.iter().enumerate() {
            if j != k {
                psi_u = &psi_u + &wj.u.mul_real(&wk.n);
            }
        }
    }
    let total_u = waves
        .iter()
        .fold(ComplexField::zeros(grid), |acc, w| &acc + &w.u);
    let sum_sq = waves
        .iter()
        .fold(RealField::zeros(grid), |acc, w| &acc + &w.u.abs_sq());
    let cross = &total_u.abs_sq() - &sum_sq;
    let psi_v = cross.derivative(1)?;
    Ok(InteractionSources { psi_u, psi_v })
}
