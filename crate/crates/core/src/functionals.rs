//! Scalar functionals of a state: conserved mass, energy and momentum, the
//! moving partition of unity `chi_k` with localized masses and momenta, the
//! Weinstein functional and its expansion around a modulated profile, the
//! second-order modified energies, and tail integrals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::profiles::MultiSolitonConfig;

pub fn mass(state: &State) -> f64 {
    state.u.norm_sq()
}

/// Energy density `|u_x|^2 + n|u|^2 + n^2/2 + v^2/2`.
fn energy_density(state: &State) -> Result<RealField> {
    let du = state.u.derivative(1)?.abs_sq();
    let u2 = state.u.abs_sq();
    let n = state.n.values();
    let v = state.v.values();
    let values = (0..n.len())
        .map(|j| du.values()[j] + n[j] * u2.values()[j] + 0.5 * (n[j] * n[j] + v[j] * v[j]))
        .collect();
    RealField::new(state.grid().clone(), values)
}

pub fn energy(state: &State) -> Result<f64> {
    Ok(energy_density(state)?.integral())
}

/// Momentum density `Im(conj(u) u_x) + n v`.
fn momentum_density(state: &State) -> Result<RealField> {
    let du = state.u.derivative(1)?;
    let drift = (&state.u.conj() * &du).im();
    Ok(&drift + &(&state.n * &state.v))
}

pub fn momentum(state: &State) -> Result<f64> {
    Ok(momentum_density(state)?.integral())
}

/// The base transition profile `psi`: 0 on `(-inf, -1]`, 1 on `[1, inf)`,
/// the degree-7 smoothstep in between (C^3, nondecreasing).
pub mod cutoff {
    fn local(x: f64) -> Option<f64> {
        if x <= -1.0 || x >= 1.0 {
            None
        } else {
            Some(0.5 * (x + 1.0))
        }
    }

    pub fn psi(x: f64) -> f64 {
        match local(x) {
            Some(s) => s.powi(4) * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s))),
            None if x >= 1.0 => 1.0,
            None => 0.0,
        }
    }

    pub fn psi_prime(x: f64) -> f64 {
        // d/dx = (1/2) d/ds; d/ds smoothstep = 140 s^3 (1 - s)^3.
        local(x).map_or(0.0, |s| 70.0 * (s * (1.0 - s)).powi(3))
    }

    pub fn psi_second(x: f64) -> f64 {
        // (1/4) * 420 s^2 (1 - s)^2 (1 - 2 s).
        local(x).map_or(0.0, |s| 105.0 * (s * (1.0 - s)).powi(2) * (1.0 - 2.0 * s))
    }

    /// `sup |psi'|`, reached at `x = 0`.
    pub fn max_slope() -> f64 {
        psi_prime(0.0)
    }

    /// Measured `sup (psi')^2 / psi` and `sup (psi'')^2 / psi'` over a fine
    /// sampling of the open transition interval.
    pub fn regularity_constants() -> (f64, f64) {
        let samples = 200_000;
        let mut a: f64 = 0.0;
        let mut b: f64 = 0.0;
        for i in 1..samples {
            let x = -1.0 + 2.0 * i as f64 / samples as f64;
            let (p, d1, d2) = (psi(x), psi_prime(x), psi_second(x));
            if p > 0.0 {
                a = a.max(d1 * d1 / p);
            }
            if d1 > 0.0 {
                b = b.max(d2 * d2 / d1);
            }
        }
        (a, b)
    }
}

/// Moving partition of unity `chi_1, ..., chi_K` with transitions of width
/// `L` centred on the boundary rays `x = cbar_k t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub width: f64,
    /// `cbar_k = (c_{k-1} + c_k) / 2`, one per gap between consecutive speeds.
    pub boundary_speeds: Vec<f64>,
}

impl CutoffFamily {
    pub fn new(width: f64, config: &MultiSolitonConfig) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::config("L", format!("cutoff width must be positive, got {width}")));
        }
        Ok(CutoffFamily {
            width,
            boundary_speeds: config.boundary_speeds(),
        })
    }

    /// Number of pieces `K`.
    pub fn len(&self) -> usize {
        self.boundary_speeds.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn step(&self, j: usize, t: f64, x: f64) -> f64 {
        cutoff::psi((x - self.boundary_speeds[j] * t) / self.width)
    }

    /// `chi_k(t, .)` for the zero-based index `k`.
    pub fn chi(&self, k: usize, t: f64, grid: &Arc<Grid>) -> Result<RealField> {
        let kk = self.len();
        if k >= kk {
            return Err(Error::Domain(format!("cutoff index {k} out of range 0..{kk}")));
        }
        Ok(grid.real_from_fn(|x| {
            let left = if k == 0 { 1.0 } else { self.step(k - 1, t, x) };
            let right = if k + 1 == kk { 0.0 } else { self.step(k, t, x) };
            left - right
        }))
    }

    pub fn all(&self, t: f64, grid: &Arc<Grid>) -> Result<Vec<RealField>> {
        (0..self.len()).map(|k| self.chi(k, t, grid)).collect()
    }

    /// Bound on `sup |d chi_k / dx|`.
    pub fn slope_bound(&self) -> f64 {
        cutoff::max_slope() / self.width
    }
}

pub fn cutoff_chi(family: &CutoffFamily, k: usize, t: f64, grid: &Arc<Grid>) -> Result<RealField> {
    family.chi(k, t, grid)
}

/// `M_k = int |u|^2 chi_k`.
pub fn local_mass(state: &State, family: &CutoffFamily, k: usize) -> Result<f64> {
    let chi = family.chi(k, state.t, state.grid())?;
    Ok(state.u.abs_sq().dot(&chi))
}

/// `P_k = Im int u_x conj(u) chi_k + int n v chi_k`.
pub fn local_momentum(state: &State, family: &CutoffFamily, k: usize) -> Result<f64> {
    let chi = family.chi(k, state.t, state.grid())?;
    Ok(momentum_density(state)?.dot(&chi))
}

fn check_family(config: &MultiSolitonConfig, family: &CutoffFamily) -> Result<()> {
    if family.len() != config.len() {
        return Err(Error::Domain(format!(
            "cutoff family has {} pieces, config has {} solitons",
            family.len(),
            config.len()
        )));
    }
    Ok(())
}

/// `G = int(|u_x|^2 + n|u|^2 + (n^2+v^2)/2) + sum_k nu_k^0 M_k - sum_k c_k P_k`.
pub fn weinstein(state: &State, config: &MultiSolitonConfig, family: &CutoffFamily) -> Result<f64> {
    check_family(config, family)?;
    let chis = family.all(state.t, state.grid())?;
    let u2 = state.u.abs_sq();
    let p = momentum_density(state)?;
    let mut g = energy_density(state)?.integral();
    for (s, chi) in config.solitons.iter().zip(&chis) {
        g += s.nu() * u2.dot(chi) - s.c * p.dot(chi);
    }
    Ok(g)
}

/// Terms of `G(S + eps) = G0 + G1 + G21 + G22 + G3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeinsteinParts {
    pub g0: f64,
    pub g1: f64,
    pub g21: f64,
    pub g22: f64,
    pub g3: f64,
    /// True when no modulated pulsations were supplied, so `G22 = 0` by
    /// convention and `G21` carries the whole quadratic part.
    pub unmodulated: bool,
}

impl WeinsteinParts {
    pub fn total(&self) -> f64 {
        self.g0 + self.g1 + self.g21 + self.g22 + self.g3
    }

    pub fn g2(&self) -> f64 {
        self.g21 + self.g22
    }
}

/// Expand the Weinstein functional around the profile `profile` with error
/// `eps`. `omegas` are the modulated pulsations `omega_k(t)`; `None` means
/// `omega_k(t) = omega_k^0`.
pub fn weinstein_decompose(
    eps: &State,
    profile: &State,
    config: &MultiSolitonConfig,
    omegas: Option<&[f64]>,
    family: &CutoffFamily,
) -> Result<WeinsteinParts> {
    check_family(config, family)?;
    if !eps.grid().same_as(profile.grid()) {
        return Err(Error::GridMismatch("error and profile grids differ".into()));
    }
    if let Some(w) = omegas {
        if w.len() != config.len() {
            return Err(Error::Domain(format!(
                "{} modulated pulsations for {} solitons",
                w.len(),
                config.len()
            )));
        }
    }
    let grid = profile.grid();
    let t = profile.t;
    let chis = family.all(t, grid)?;

    let (s, sn, sv) = (&profile.u, &profile.n, &profile.v);
    let (e, en, ev) = (&eps.u, &eps.n, &eps.v);
    let ds = s.derivative(1)?;
    let de = e.derivative(1)?;
    let s2 = s.abs_sq();
    let e2 = e.abs_sq();
    // Re(S conj eps), pointwise.
    let cross = (s * &e.conj()).re();

    let g0 = weinstein(profile, config, family)?;

    let mut g1 = 2.0 * (&ds * &de.conj()).re().integral()
        + 2.0 * sn.dot(&cross)
        + en.dot(&s2)
        + en.dot(sn)
        + ev.dot(sv);
    let drift_lin = (&(&s.conj() * &de) + &(&e.conj() * &ds)).im();
    let nv_lin = &(sn * ev) + &(en * sv);
    for (p, chi) in config.solitons.iter().zip(&chis) {
        g1 += p.nu() * 2.0 * cross.dot(chi) - p.c * (drift_lin.dot(chi) + nv_lin.dot(chi));
    }

    let mut g2 = de.norm_sq() + 2.0 * en.dot(&cross) + sn.dot(&e2) + 0.5 * (en.norm_sq() + ev.norm_sq());
    let drift_quad = (&e.conj() * &de).im();
    let nv_quad = en * ev;
    let mut g22 = 0.0;
    for (k, (p, chi)) in config.solitons.iter().zip(&chis).enumerate() {
        let local = e2.dot(chi);
        let omega_t = omegas.map_or(p.omega, |w| w[k]);
        g2 += (omega_t + 0.25 * p.c * p.c) * local - p.c * (drift_quad.dot(chi) + nv_quad.dot(chi));
        g22 += (p.omega - omega_t) * local;
    }
    let g3 = en.dot(&e2);
    Ok(WeinsteinParts {
        g0,
        g1,
        g21: g2,
        g22,
        g3,
        unmodulated: omegas.is_none(),
    })
}

/// Closed-form drift `G0(omega) - G0(omega^0)` of one soliton:
/// `(1 - c^2) * (-4/3) (sqrt(omega) - sqrt(omega0))^2 (sqrt(omega) + 2 sqrt(omega0))`.
pub fn g0_drift_closed_form(omega: f64, omega0: f64, c: f64) -> f64 {
    let (a, b) = (omega.sqrt(), omega0.sqrt());
    (1.0 - c * c) * (-4.0 / 3.0) * (a - b).powi(2) * (a + 2.0 * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedEnergies {
    /// `int(|U_xx|^2 + (N_x)^2/2 + (V_x)^2/2)`.
    pub h: f64,
    /// `h` plus the coupling terms that cancel the worst terms of `h'`.
    pub g_mod: f64,
}

/// Modified energies of the difference `(U, N, V)` between a solution and
/// the multi-soliton profile `R^u`.
pub fn modified_energies(
    u: &ComplexField,
    n: &RealField,
    v: &RealField,
    r_u: &ComplexField,
) -> Result<ModifiedEnergies> {
    for g in [n.grid(), v.grid(), r_u.grid()] {
        if !u.grid().same_as(g) {
            return Err(Error::GridMismatch("modified_energies".into()));
        }
    }
    let du = u.derivative(1)?;
    let d2u = u.derivative(2)?;
    let dn = n.derivative(1)?;
    let dv = v.derivative(1)?;
    let dr = r_u.derivative(1)?;
    let h = d2u.norm_sq() + 0.5 * (dn.norm_sq() + dv.norm_sq());
    // N_x conj(U_x)
    let coupling = du.conj().mul_real(&dn);
    let g_mod = h
        + 2.0 * n.dot(&du.abs_sq())
        + 2.0 * (u * &coupling).integral().re
        + 2.0 * (r_u * &coupling).integral().re
        - 2.0 * (&u.conj() * &dr.mul_real(&dn)).integral().re;
    Ok(ModifiedEnergies { h, g_mod })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMasses {
    pub k0: f64,
    pub mass_tail: f64,
    pub energy_tail: f64,
}

/// Mass and energy-density integrals restricted to `|x| > k0`.
pub fn tail_mass(state: &State, k0: f64) -> Result<TailMasses> {
    let half = 0.5 * state.grid().box_length();
    if !(k0 >= 0.0 && k0 < half) {
        return Err(Error::Domain(format!("K0 = {k0} must lie in [0, {half})")));
    }
    let mask = state.grid().real_from_fn(|x| if x.abs() > k0 { 1.0 } else { 0.0 });
    Ok(TailMasses {
        k0,
        mass_tail: state.u.abs_sq().dot(&mask),
        energy_tail: energy_density(state)?.dot(&mask),
    })
}

/// All functionals at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub momentum: f64,
    pub local_mass: Vec<f64>,
    pub local_momentum: Vec<f64>,
    pub weinstein: f64,
    pub parts: Option<WeinsteinParts>,
    pub modified: Option<ModifiedEnergies>,
    pub tails: Option<TailMasses>,
}

impl FunctionalReport {
    /// Conserved, localized and Weinstein values of `state`; the optional
    /// parts are filled by the caller.
    pub fn evaluate(
        state: &State,
        config: &MultiSolitonConfig,
        family: &CutoffFamily,
    ) -> Result<Self> {
        check_family(config, family)?;
        let chis = family.all(state.t, state.grid())?;
        let u2 = state.u.abs_sq();
        let p = momentum_density(state)?;
        let local_mass: Vec<f64> = chis.iter().map(|c| u2.dot(c)).collect();
        let local_momentum: Vec<f64> = chis.iter().map(|c| p.dot(c)).collect();
        let e = energy(state)?;
        let weinstein = e + config
            .solitons
            .iter()
            .zip(local_mass.iter().zip(&local_momentum))
            .map(|(s, (m, pk))| s.nu() * m - s.c * pk)
            .sum::<f64>();
        Ok(FunctionalReport {
            t: state.t,
            mass: u2.integral(),
            energy: e,
            momentum: p.integral(),
            local_mass,
            local_momentum,
            weinstein,
            parts: None,
            modified: None,
            tails: None,
        })
    }

    /// Column names for `k` solitons; the order is fixed.
    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "M", "E", "P"].iter().map(|s| s.to_string()).collect();
        h.extend((1..=k).map(|i| format!("M_{i}")));
        h.extend((1..=k).map(|i| format!("P_{i}")));
        h.extend(
            ["G", "G0", "G1", "G21", "G22", "G3", "H", "G_mod", "K0", "mass_tail", "energy_tail"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// One row matching [`FunctionalReport::csv_header`]; absent values are
    /// left empty.
    pub fn csv_row(&self) -> Vec<String> {
        fn f(x: f64) -> String {
            format!("{x:.17e}")
        }
        fn opt(x: Option<f64>) -> String {
            x.map(f).unwrap_or_default()
        }
        let mut r = vec![f(self.t), f(self.mass), f(self.energy), f(self.momentum)];
        r.extend(self.local_mass.iter().map(|&x| f(x)));
        r.extend(self.local_momentum.iter().map(|&x| f(x)));
        r.push(f(self.weinstein));
        let p = self.parts;
        r.push(opt(p.map(|p| p.g0)));
        r.push(opt(p.map(|p| p.g1)));
        r.push(opt(p.map(|p| p.g21)));
        r.push(opt(p.map(|p| p.g22)));
        r.push(opt(p.map(|p| p.g3)));
        r.push(opt(self.modified.map(|m| m.h)));
        r.push(opt(self.modified.map(|m| m.g_mod)));
        r.push(opt(self.tails.map(|t| t.k0)));
        r.push(opt(self.tails.map(|t| t.mass_tail)));
        r.push(opt(self.tails.map(|t| t.energy_tail)));
        r
    }

    pub fn write_csv<W: std::io::Write>(reports: &[FunctionalReport], out: W) -> Result<()> {
        let k = reports.first().map_or(0, |r| r.local_mass.len());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(k))?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{multi_soliton, traveling_wave, SolitonParams};
    use num_complex::Complex64;

    fn grid() -> Arc<Grid> {
        Grid::new(1024, 40.0).unwrap()
    }

    fn single(omega: f64, c: f64) -> MultiSolitonConfig {
        MultiSolitonConfig::new(vec![SolitonParams::new(omega, c, 0.0, 0.0).unwrap()]).unwrap()
    }

    fn pair() -> MultiSolitonConfig {
        MultiSolitonConfig::new(vec![
            SolitonParams::new(1.0, -0.5, -15.0, 0.0).unwrap(),
            SolitonParams::new(1.2, 0.5, 15.0, 0.4).unwrap(),
        ])
        .unwrap()
    }

    fn smooth_noise(grid: &Arc<Grid>, seed: u64, amp: f64) -> State {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut modes = || -> Vec<(f64, f64, f64)> {
            (0..6)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(1.0..4.0), rng.gen_range(-10.0..10.0)))
                .collect()
        };
        let (mu, mi, mn, mv) = (modes(), modes(), modes(), modes());
        let bump = |m: &[(f64, f64, f64)], x: f64| {
            m.iter().map(|&(a, w, c)| a * (-(x - c).powi(2) / w).exp()).sum::<f64>()
        };
        State {
            u: grid.complex_from_fn(|x| Complex64::new(bump(&mu, x), bump(&mi, x)) * amp),
            n: grid.real_from_fn(|x| amp * bump(&mn, x)),
            v: grid.real_from_fn(|x| amp * bump(&mv, x)),
            t: 0.0,
        }
    }

    #[test]
    fn zero_state_functionals_vanish() {
        let g = grid();
        let z = State::zeros(&g, 0.0);
        assert_eq!(mass(&z), 0.0);
        assert_eq!(energy(&z).unwrap(), 0.0);
        assert_eq!(momentum(&z).unwrap(), 0.0);
        let cfg = single(1.0, 0.0);
        let fam = CutoffFamily::new(5.0, &cfg).unwrap();
        assert_eq!(weinstein(&z, &cfg, &fam).unwrap(), 0.0);
    }

    #[test]
    fn standing_wave_energy_and_weinstein() {
        let g = grid();
        let cfg = single(1.0, 0.0);
        let s = traveling_wave(&cfg.solitons[0], 0.0, &g).unwrap();
        assert!((energy(&s).unwrap() + 4.0 / 3.0).abs() < 1e-10);
        let fam = CutoffFamily::new(5.0, &cfg).unwrap();
        assert!((weinstein(&s, &cfg, &fam).unwrap() - 8.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn traveling_wave_momentum() {
        let g = Grid::new(2048, 40.0).unwrap();
        for &(w, c) in &[(1.0, 0.5), (2.0, -0.3), (0.5, 0.8)] {
            let s = traveling_wave(&SolitonParams::new(w, c, 1.0, 0.2).unwrap(), 0.3, &g).unwrap();
            let expected = 2.0 * c * (1.0 - c * c) * f64::sqrt(w) + 16.0 / 3.0 * c * w.powf(1.5);
            assert!((momentum(&s).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_profile_shape() {
        assert_eq!(cutoff::psi(-1.0), 0.0);
        assert_eq!(cutoff::psi(1.0), 1.0);
        assert!((cutoff::psi(0.0) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..=2000 {
            let x = -1.0 + i as f64 * 1e-3;
            let p = cutoff::psi(x);
            assert!(p >= prev - 1e-15 && (0.0..=1.0).contains(&p));
            prev = p;
            let h = 1e-6;
            let fd = (cutoff::psi(x + h) - cutoff::psi(x - h)) / (2.0 * h);
            assert!((fd - cutoff::psi_prime(x)).abs() < 1e-6);
            let fd2 = (cutoff::psi_prime(x + h) - cutoff::psi_prime(x - h)) / (2.0 * h);
            assert!((fd2 - cutoff::psi_second(x)).abs() < 1e-5);
        }
        let (a, b) = cutoff::regularity_constants();
        assert!(a.is_finite() && a > 0.0);
        assert!(b.is_finite() && b > 0.0);
    }

    #[test]
    fn partition_of_unity() {
        let g = Grid::new(512, 80.0).unwrap();
        let cfg = MultiSolitonConfig::new(vec![
            SolitonParams::new(1.0, -0.6, 0.0, 0.0).unwrap(),
            SolitonParams::new(1.0, 0.0, 0.0, 0.0).unwrap(),
            SolitonParams::new(1.0, 0.7, 0.0, 0.0).unwrap(),
        ])
        .unwrap();
        let fam = CutoffFamily::new(4.0, &cfg).unwrap();
        for &t in &[0.0, 5.0, 20.0] {
            let chis = fam.all(t, &g).unwrap();
            for j in 0..g.n_points() {
                let s: f64 = chis.iter().map(|c| c.values()[j]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert!(fam.chi(3, 0.0, &g).is_err());
        let chi0 = fam.chi(0, 10.0, &g).unwrap();
        // far left of the first boundary ray
        assert_eq!(chi0.values()[0], 1.0);
        assert_eq!(fam.chi(1, 10.0, &g).unwrap().values()[0], 0.0);
        let one = CutoffFamily::new(4.0, &single(1.0, 0.0)).unwrap();
        assert!(one.chi(0, 3.0, &g).unwrap().values().iter().all(|&v| v == 1.0));
        // The partition is not periodic, so measure slopes by differences.
        let slope = chi0
            .values()
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / g.spacing())
            .fold(0.0, f64::max);
        assert!(slope > 0.0 && slope <= fam.slope_bound() * 1.001);
    }

    #[test]
    fn localized_quantities_add_up() {
        let g = Grid::new(1024, 80.0).unwrap();
        let cfg = pair();
        let s = multi_soliton(&cfg, 0.0, &g).unwrap();
        let noisy = {
            let mut n = s.clone();
            n.add_assign(&smooth_noise(&g, 3, 0.1));
            n
        };
        for width in [2.0, 5.0, 10.0] {
            let fam = CutoffFamily::new(width, &cfg).unwrap();
            let r = FunctionalReport::evaluate(&noisy, &cfg, &fam).unwrap();
            let msum: f64 = r.local_mass.iter().sum();
            let psum: f64 = r.local_momentum.iter().sum();
            assert!((msum - r.mass).abs() < 1e-10 * r.mass.abs().max(1.0));
            assert!((psum - r.momentum).abs() < 1e-10 * r.momentum.abs().max(1.0));
            let direct = weinstein(&noisy, &cfg, &fam).unwrap();
            assert!((direct - r.weinstein).abs() < 1e-10 * direct.abs().max(1.0));
            assert!((local_mass(&noisy, &fam, 1).unwrap() - r.local_mass[1]).abs() < 1e-12);
        }
        let fam = CutoffFamily::new(5.0, &cfg).unwrap();
        let r = FunctionalReport::evaluate(&s, &cfg, &fam).unwrap();
        for (m, p) in r.local_mass.iter().zip(&cfg.solitons) {
            let expected = 4.0 * (1.0 - p.c * p.c) * p.omega.sqrt();
            assert!((m - expected).abs() < (-30.0 * 0.5f64.sqrt() / 2.0).exp());
        }
    }

    #[test]
    fn decomposition_reassembles_weinstein() {
        let g = Grid::new(1024, 80.0).unwrap();
        let cfg = pair();
        let fam = CutoffFamily::new(5.0, &cfg).unwrap();
        let profile = multi_soliton(&cfg, 0.0, &g).unwrap();
        for seed in 0..4 {
            let eps = smooth_noise(&g, seed, 0.2);
            let mut full = profile.clone();
            full.add_assign(&eps);
            let g_full = weinstein(&full, &cfg, &fam).unwrap();
            for omegas in [None, Some(&[1.05, 1.1][..])] {
                let parts = weinstein_decompose(&eps, &profile, &cfg, omegas, &fam).unwrap();
                assert!(
                    (parts.total() - g_full).abs() < 1e-9 * g_full.abs(),
                    "{} vs {g_full}",
                    parts.total()
                );
                assert_eq!(parts.unmodulated, omegas.is_none());
                if omegas.is_none() {
                    assert_eq!(parts.g22, 0.0);
                }
            }
        }
        let zero = State::zeros(&g, 0.0);
        let parts = weinstein_decompose(&zero, &profile, &cfg, None, &fam).unwrap();
        assert_eq!((parts.g1, parts.g21, parts.g22, parts.g3), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(parts.g0, weinstein(&profile, &cfg, &fam).unwrap());
    }

    #[test]
    fn family_size_must_match() {
        let g = grid();
        let fam = CutoffFamily::new(5.0, &single(1.0, 0.0)).unwrap();
        let z = State::zeros(&g, 0.0);
        assert!(weinstein(&z, &pair(), &fam).is_err());
        assert!(CutoffFamily::new(0.0, &pair()).is_err());
    }

    #[test]
    fn modified_energies_scaling() {
        let g = Grid::new(512, 40.0).unwrap();
        let r_u = traveling_wave(&SolitonParams::new(1.0, 0.3, 0.0, 0.0).unwrap(), 0.0, &g)
            .unwrap()
            .u;
        let z = State::zeros(&g, 0.0);
        let m0 = modified_energies(&z.u, &z.n, &z.v, &r_u).unwrap();
        assert_eq!((m0.h, m0.g_mod), (0.0, 0.0));

        // h is quadratic; the R-coupling terms are quadratic; the rest cubic.
        let rest = |a: f64| {
            let e = smooth_noise(&g, 11, a);
            let m = modified_energies(&e.u, &e.n, &e.v, &r_u).unwrap();
            let zero_r = ComplexField::zeros(&g);
            let m_free = modified_energies(&e.u, &e.n, &e.v, &zero_r).unwrap();
            (m.h, m.g_mod - m_free.g_mod, m_free.g_mod - m_free.h)
        };
        let (h1, r1, c1) = rest(1e-2);
        let (h2, r2, c2) = rest(5e-3);
        assert!((h1 / h2 - 4.0).abs() < 1e-9);
        assert!((r1 / r2 - 4.0).abs() < 1e-9);
        assert!((c1 / c2 - 8.0).abs() < 1e-9);
    }

    #[test]
    fn tail_of_standing_soliton() {
        let g = Grid::new(2048, 40.0).unwrap();
        let s = traveling_wave(&SolitonParams::new(1.0, 0.0, 0.0, 0.0).unwrap(), 0.0, &g).unwrap();
        // Rectangle rule on a half-open mask: compare with a tolerance that
        // covers one cell of the discontinuous indicator.
        let tails = tail_mass(&s, 5.0).unwrap();
        let exact = 4.0 * (1.0 - 5f64.tanh());
        let cell = 2.0 * 2.0 / 5f64.cosh().powi(2) * g.spacing();
        assert!((tails.mass_tail - exact).abs() < cell, "{} vs {exact}", tails.mass_tail);
        let far = tail_mass(&s, 19.0).unwrap();
        assert!(far.mass_tail < 1e-10 && far.energy_tail.abs() < 1e-10);
        assert!(tail_mass(&s, 20.0).is_err());
    }

    #[test]
    fn g0_drift_formula() {
        assert_eq!(g0_drift_closed_form(1.0, 1.0, 0.3), 0.0);
        assert!(g0_drift_closed_form(1.1, 1.0, 0.0) < 0.0);
        assert!(g0_drift_closed_form(0.9, 1.0, 0.0) < 0.0);
    }

    #[test]
    fn csv_layout_is_stable() {
        let g = grid();
        let cfg = single(1.0, 0.0);
        let fam = CutoffFamily::new(5.0, &cfg).unwrap();
        let s = traveling_wave(&cfg.solitons[0], 0.0, &g).unwrap();
        let r = FunctionalReport::evaluate(&s, &cfg, &fam).unwrap();
        assert_eq!(FunctionalReport::csv_header(1).len(), r.csv_row().len());
        let mut buf = Vec::new();
        FunctionalReport::write_csv(&[r.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,M,E,P,M_1,P_1,G,"));
        let back: FunctionalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
