//! Pseudospectral time integration of the first-order Zakharov system
//!
//! ```text
//! u_t = i u_xx - i n u,   n_t = -v_x,   v_t = -n_x - (|u|^2)_x
//! ```
//!
//! by Strang splitting `L(dt/2) N(dt) L(dt/2)`. `L` is the linear part
//! (free Schrödinger flow for `u`, free wave flow for `(n, v)`), solved
//! exactly per Fourier mode. `N` is the coupling
//!
//! ```text
//! u_t = -i n u,   n_t = 0,   v_t = -(|u|^2)_x
//! ```
//!
//! which keeps `n` and `|u|` fixed, so it is solved exactly by a pointwise
//! phase rotation of `u` and a linear-in-time kick of `v`. Both subflows are
//! exact, the composition is symmetric and second order, `u` evolves
//! unitarily and the zero modes of `n` and `v` never change.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sobolev_norms, ComplexField, Grid, RealField};
use crate::par::Execution;
use crate::profiles::{multi_soliton, MultiSolitonConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// The unknowns `(u, n, v)` at time `t`.
#[derive(Debug, Clone)]
pub struct State {
    pub u: ComplexField,
    pub n: RealField,
    pub v: RealField,
    pub t: f64,
}

impl State {
    pub fn new(u: ComplexField, n: RealField, v: RealField, t: f64) -> Result<Self> {
        if !u.grid().same_as(n.grid()) || !u.grid().same_as(v.grid()) {
            return Err(Error::GridMismatch("state components on different grids".into()));
        }
        Ok(State { u, n, v, t })
    }

    pub fn zeros(grid: &Arc<Grid>, t: f64) -> Self {
        State {
            u: ComplexField::zeros(grid),
            n: RealField::zeros(grid),
            v: RealField::zeros(grid),
            t,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn add_assign(&mut self, other: &State) {
        self.u = &self.u + &other.u;
        self.n = &self.n + &other.n;
        self.v = &self.v + &other.v;
    }

    /// Field-wise difference; the time of `self` is kept.
    pub fn difference(&self, other: &State) -> Result<State> {
        if !self.grid().same_as(other.grid()) {
            return Err(Error::GridMismatch("state difference".into()));
        }
        Ok(State {
            u: &self.u - &other.u,
            n: &self.n - &other.n,
            v: &self.v - &other.v,
            t: self.t,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.u.values().iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && self.n.values().iter().all(|x| x.is_finite())
            && self.v.values().iter().all(|x| x.is_finite())
    }

    /// `||u||_{H^1} + ||n||_{L^2} + ||v||_{L^2}`.
    pub fn bold_h_norm(&self) -> Result<f64> {
        Ok(sobolev_norms(&self.u, &self.n, &self.v)?.bold_h)
    }
}

/// `(u, n, v)(t) -> (conj u, n, -v)(-t)`. Substituting into `n_t = -v_x`
/// shows that `v` must change sign for the reversed triple to solve the
/// system again.
pub fn time_reverse(state: &State) -> State {
    State {
        u: state.u.conj(),
        n: state.n.clone(),
        v: state.v.scale(-1.0),
        t: -state.t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperOptions {
    /// Apply the 2/3 rule to `|u|^2` before it drives the wave equation.
    pub dealias: bool,
    /// Abort once `||u||_{H^1}` exceeds this value.
    pub h1_ceiling: f64,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions {
            dealias: true,
            h1_ceiling: 1e6,
        }
    }
}

pub const SCHEME: &str = "strang-linear-coupling";

/// Fourier multipliers for one step size.
struct Factors {
    dt: f64,
    /// `exp(-i k^2 dt / 2)`: free Schrödinger flow over half a step.
    schrodinger_half: Vec<Complex64>,
    /// `exp(-i k dt / 2)`: right-moving wave rotation over half a step.
    wave_half: Vec<Complex64>,
    /// `i k` with the Nyquist mode removed.
    ik: Vec<Complex64>,
}

impl Factors {
    fn new(grid: &Grid, dt: f64) -> Self {
        let schrodinger_half = grid
            .wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -0.5 * k * k * dt))
            .collect();
        let odd = grid.odd_wavenumbers();
        let wave_half = odd
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -0.5 * k * dt))
            .collect();
        let ik = odd.iter().map(|&k| Complex64::new(0.0, k)).collect();
        Factors {
            dt,
            schrodinger_half,
            wave_half,
            ik,
        }
    }
}

/// State in the representation used between steps: `u`, `n`, `v` as Fourier
/// coefficients.
struct Spectral {
    u: Vec<Complex64>,
    n: Vec<Complex64>,
    v: Vec<Complex64>,
}

/// Reusable integrator bound to one grid.
pub struct Stepper {
    grid: Arc<Grid>,
    options: StepperOptions,
    execution: Execution,
    scratch_u: Vec<Complex64>,
    scratch_n: Vec<Complex64>,
    scratch_f: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, options: StepperOptions) -> Self {
        Self::with_execution(grid, options, Execution::default())
    }

    pub fn with_execution(grid: &Arc<Grid>, options: StepperOptions, execution: Execution) -> Self {
        let n = grid.n_points();
        Stepper {
            grid: grid.clone(),
            options,
            execution,
            scratch_u: vec![ZERO; n],
            scratch_n: vec![ZERO; n],
            scratch_f: vec![ZERO; n],
        }
    }

    pub fn options(&self) -> StepperOptions {
        self.options
    }

    fn to_spectral(&self, state: &State) -> Spectral {
        let mut u = state.u.values().to_vec();
        self.grid.fft(&mut u);
        let mut n = state.n.to_complex().into_values();
        self.grid.fft(&mut n);
        let mut v = state.v.to_complex().into_values();
        self.grid.fft(&mut v);
        Spectral { u, n, v }
    }

    fn from_spectral(&self, s: &Spectral, t: f64) -> State {
        let mut u = s.u.clone();
        self.grid.ifft(&mut u);
        let mut n = s.n.clone();
        self.grid.ifft(&mut n);
        let mut v = s.v.clone();
        self.grid.ifft(&mut v);
        let g = &self.grid;
        State {
            u: ComplexField::new(g.clone(), u).expect("length preserved"),
            n: RealField::new(g.clone(), n.iter().map(|z| z.re).collect()).expect("length"),
            v: RealField::new(g.clone(), v.iter().map(|z| z.re).collect()).expect("length"),
            t,
        }
    }

    /// Linear flow over half a step. In the characteristic variables
    /// `n + v` and `n - v` the wave part is a pure rotation per mode.
    fn linear_half(&self, s: &mut Spectral, f: &Factors) {
        self.execution
            .for_each_mut(&mut s.u, |j, z| *z *= f.schrodinger_half[j]);
        for j in 0..s.n.len() {
            let rot = f.wave_half[j];
            let a = (s.n[j] + s.v[j]) * rot;
            let b = (s.n[j] - s.v[j]) * rot.conj();
            s.n[j] = 0.5 * (a + b);
            s.v[j] = 0.5 * (a - b);
        }
    }

    fn coupling(&mut self, s: &mut Spectral, f: &Factors) {
        let grid = self.grid.clone();
        let dt = f.dt;
        self.scratch_u.copy_from_slice(&s.u);
        grid.ifft(&mut self.scratch_u);
        self.scratch_n.copy_from_slice(&s.n);
        grid.ifft(&mut self.scratch_n);
        let u = &self.scratch_u;
        self.execution.for_each_mut(&mut self.scratch_f, |j, z| {
            *z = Complex64::new(u[j].norm_sqr(), 0.0)
        });
        grid.fft(&mut self.scratch_f);
        if self.options.dealias {
            grid.dealias(&mut self.scratch_f);
        }
        for j in 0..s.v.len() {
            s.v[j] -= dt * f.ik[j] * self.scratch_f[j];
        }
        let n = &self.scratch_n;
        self.execution.for_each_mut(&mut self.scratch_u, |j, z| {
            *z *= Complex64::from_polar(1.0, -dt * n[j].re)
        });
        s.u.copy_from_slice(&self.scratch_u);
        grid.fft(&mut s.u);
    }

    fn advance(&mut self, s: &mut Spectral, f: &Factors) {
        self.linear_half(s, f);
        self.coupling(s, f);
        self.linear_half(s, f);
    }

    /// `||u||_{H^1}` from Fourier coefficients.
    fn h1_of_u(&self, s: &Spectral) -> f64 {
        let n = self.grid.n_points() as f64;
        let sum: f64 = s
            .u
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(z, k)| (1.0 + k * k) * z.norm_sqr())
            .sum();
        (sum * self.grid.box_length() / (n * n)).sqrt()
    }

    fn check(&self, s: &Spectral, t: f64) -> Result<()> {
        let h1 = self.h1_of_u(s);
        let finite = h1.is_finite()
            && s.n.iter().chain(&s.v).all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::Integrator {
                time: t,
                message: "non-finite values in state".into(),
            });
        }
        if h1 > self.options.h1_ceiling {
            return Err(Error::Integrator {
                time: t,
                message: format!(
                    "||u||_H1 = {h1:.3e} exceeds the ceiling {:.3e}",
                    self.options.h1_ceiling
                ),
            });
        }
        Ok(())
    }

    /// One Strang step of size `dt` (either sign).
    pub fn step(&mut self, state: &State, dt: f64) -> Result<State> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::Domain(format!("time step must be nonzero, got {dt}")));
        }
        if !state.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("state and stepper grids differ".into()));
        }
        if !state.is_finite() {
            return Err(Error::Integrator {
                time: state.t,
                message: "non-finite values in initial state".into(),
            });
        }
        let factors = Factors::new(&self.grid, dt);
        let mut s = self.to_spectral(state);
        self.advance(&mut s, &factors);
        self.check(&s, state.t + dt)?;
        Ok(self.from_spectral(&s, state.t + dt))
    }

    /// Integrate from `state.t` to `t_target`, sampling every `sample_stride`
    /// steps. The first sample is the initial state and the last one sits
    /// exactly at `t_target`; a shorter final step is taken when needed.
    pub fn evolve(
        &mut self,
        state: &State,
        t_target: f64,
        dt: f64,
        sample_stride: usize,
    ) -> Result<Trajectory> {
        self.evolve_with(state, t_target, dt, sample_stride, |_| {})
    }

    /// As [`Stepper::evolve`], calling `progress` with the fraction done after
    /// each sample.
    pub fn evolve_with(
        &mut self,
        state: &State,
        t_target: f64,
        dt: f64,
        sample_stride: usize,
        mut progress: impl FnMut(f64),
    ) -> Result<Trajectory> {
        if !state.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("state and stepper grids differ".into()));
        }
        if !t_target.is_finite() || !dt.is_finite() || dt == 0.0 {
            return Err(Error::Domain("t_target and a nonzero dt must be finite".into()));
        }
        if sample_stride == 0 {
            return Err(Error::config("numerics.sample_stride", "must be at least 1"));
        }
        let span = t_target - state.t;
        let mut trajectory = Trajectory {
            states: vec![state.clone()],
            dt,
            scheme: SCHEME.to_string(),
            dealias: self.options.dealias,
        };
        if span == 0.0 {
            return Ok(trajectory);
        }
        if span.signum() != dt.signum() {
            return Err(Error::Domain(format!(
                "dt = {dt} points away from t_target = {t_target} (t = {})",
                state.t
            )));
        }
        if !state.is_finite() {
            return Err(Error::Integrator {
                time: state.t,
                message: "non-finite values in initial state".into(),
            });
        }
        let ratio = span / dt;
        let mut full_steps = ratio.floor() as usize;
        let mut remainder = span - full_steps as f64 * dt;
        if remainder.abs() <= 1e-9 * dt.abs() {
            remainder = 0.0;
        } else if (dt - remainder).abs() <= 1e-9 * dt.abs() {
            full_steps += 1;
            remainder = 0.0;
        }
        let total_steps = full_steps + usize::from(remainder != 0.0);

        let t0 = state.t;
        let factors = Factors::new(&self.grid, dt);
        let mut s = self.to_spectral(state);
        for i in 1..=full_steps {
            self.advance(&mut s, &factors);
            let t = if i == total_steps {
                t_target
            } else {
                t0 + i as f64 * dt
            };
            self.check(&s, t)?;
            if i % sample_stride == 0 || i == total_steps {
                trajectory.states.push(self.from_spectral(&s, t));
                progress(i as f64 / total_steps as f64);
            }
        }
        if remainder != 0.0 {
            let last = Factors::new(&self.grid, remainder);
            self.advance(&mut s, &last);
            self.check(&s, t_target)?;
            trajectory.states.push(self.from_spectral(&s, t_target));
            progress(1.0);
        }
        Ok(trajectory)
    }
}

/// Convenience wrapper: one step with default options.
pub fn step(state: &State, dt: f64) -> Result<State> {
    Stepper::new(state.grid(), StepperOptions::default()).step(state, dt)
}

/// Convenience wrapper: evolve with default options.
pub fn evolve(state: &State, t_target: f64, dt: f64, sample_stride: usize) -> Result<Trajectory> {
    Stepper::new(state.grid(), StepperOptions::default()).evolve(state, t_target, dt, sample_stride)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub dt: f64,
    pub scheme: String,
    pub dealias: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Distance of a state to the multi-soliton profile at the same time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub t: f64,
    /// `||(u - R^u, n - R^n, v - R^v)||` in `H^1 x L^2 x L^2`.
    pub bold_h: f64,
    /// Same difference in `H^2 x H^1 x H^1`.
    pub bold_h2: f64,
}

pub fn profile_error(state: &State, config: &MultiSolitonConfig) -> Result<ErrorSample> {
    let r = multi_soliton(config, state.t, state.grid())?;
    let d = state.difference(&r)?;
    let norms = sobolev_norms(&d.u, &d.n, &d.v)?;
    Ok(ErrorSample {
        t: state.t,
        bold_h: norms.bold_h,
        bold_h2: norms.bold_h2(),
    })
}

#[derive(Debug, Clone)]
pub struct BackwardRun {
    pub trajectory: Trajectory,
    pub errors: Vec<ErrorSample>,
}

/// Start from the exact multi-soliton profile at `t_final` and integrate
/// down to `t_start`, recording the distance to the profile along the way.
/// `dt` is taken as a magnitude.
#[allow(clippy::too_many_arguments)]
pub fn backward_construct(
    config: &MultiSolitonConfig,
    t_final: f64,
    t_start: f64,
    dt: f64,
    grid: &Arc<Grid>,
    options: StepperOptions,
    sample_stride: usize,
    execution: Execution,
) -> Result<BackwardRun> {
    if !(t_final > t_start && t_start >= 0.0) {
        return Err(Error::config(
            "t_final",
            format!("need t_final > t_start >= 0, got t_final = {t_final}, t_start = {t_start}"),
        ));
    }
    let start = multi_soliton(config, t_final, grid)?;
    let mut stepper = Stepper::with_execution(grid, options, execution);
    let trajectory = stepper.evolve(&start, t_start, -dt.abs(), sample_stride)?;
    let errors = execution
        .map(&trajectory.states, |s| profile_error(s, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(BackwardRun { trajectory, errors })
}
