//! Linearized operators `L+ = -d^2 + 1 - 3Q^2` and `L- = -d^2 + 1 - Q^2`,
//! the soliton quadratic forms `H2` and `H2B`, the localization weight
//! `Phi_B`, and constrained coercivity estimates computed by dense
//! generalized eigensolves.
//!
//! Dense discretizations use the same spectral multipliers as the field
//! derivatives: `-d^2` carries `k^2` (Nyquist kept) and first derivatives
//! carry the odd-order wavenumbers (Nyquist zeroed).

use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::CutoffFamily;
use crate::grid::{ComplexField, Grid, GridSpec, RealField};
use crate::par::Execution;
use crate::profiles::{closed_form, SolitonParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Plus,
    Minus,
}

impl OperatorKind {
    fn coefficient(self) -> f64 {
        match self {
            OperatorKind::Plus => 3.0,
            OperatorKind::Minus => 1.0,
        }
    }
}

/// `-d^2 + potential` with potential `1 - 3Q^2` or `1 - Q^2`, `Q` centred at 0.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub kind: OperatorKind,
    grid: Arc<Grid>,
    potential: RealField,
}

/// Lowest part of a discretized spectrum.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub fields: Vec<RealField>,
    /// `max |L f - lambda f|` per eigenpair.
    pub residuals: Vec<f64>,
}

impl LinearizedOperator {
    pub fn new(kind: OperatorKind, grid: &Arc<Grid>) -> Self {
        let a = kind.coefficient();
        let potential = grid.real_from_fn(|x| {
            let q = closed_form::q(grid.wrap(x));
            1.0 - a * q * q
        });
        LinearizedOperator {
            kind,
            grid: grid.clone(),
            potential,
        }
    }

    pub fn plus(grid: &Arc<Grid>) -> Self {
        Self::new(OperatorKind::Plus, grid)
    }

    pub fn minus(grid: &Arc<Grid>) -> Self {
        Self::new(OperatorKind::Minus, grid)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn potential(&self) -> &RealField {
        &self.potential
    }

    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        if !f.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("operator and field grids differ".into()));
        }
        let f2 = f.derivative(2)?;
        let vf = f * &self.potential;
        Ok(vf.zip_map(&f2, |a, b| a - b))
    }

    /// `<L f, f>` by quadrature.
    pub fn form(&self, f: &RealField) -> Result<f64> {
        Ok(self.apply(f)?.dot(f))
    }

    /// Dense matrix of the discretized operator; symmetric by construction.
    pub fn matrix(&self) -> Mat<f64> {
        let col = circulant_column(&self.grid, |k, _| k * k);
        let n = self.grid.n_points();
        let v = self.potential.values();
        Mat::from_fn(n, n, |i, j| {
            let d = if i == j { v[i] } else { 0.0 };
            col[(i + n - j) % n] + d
        })
    }

    /// Lowest `n_eigs` eigenpairs, ascending.
    pub fn spectrum(&self, n_eigs: usize) -> Result<Spectrum> {
        let n = self.grid.n_points();
        if n_eigs == 0 || n_eigs > n {
            return Err(Error::Domain(format!(
                "n_eigs = {n_eigs} outside 1..={n}"
            )));
        }
        let evd = self
            .matrix()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let scale = 1.0 / self.grid.spacing().sqrt();
        let mut out = Spectrum {
            values: Vec::with_capacity(n_eigs),
            fields: Vec::with_capacity(n_eigs),
            residuals: Vec::with_capacity(n_eigs),
        };
        for j in 0..n_eigs {
            let lambda = s[j];
            let field = self.grid.real_field((0..n).map(|i| u[(i, j)] * scale).collect())?;
            let lf = self.apply(&field)?;
            let res = lf
                .values()
                .iter()
                .zip(field.values())
                .map(|(a, b)| (a - lambda * b).abs())
                .fold(0.0, f64::max);
            if !res.is_finite() || res > 1e-6 * (1.0 + lambda.abs()) * field.max_abs() {
                return Err(Error::Eigen(format!(
                    "eigenpair {j} residual {res:e} too large"
                )));
            }
            out.values.push(lambda);
            out.fields.push(field);
            out.residuals.push(res);
        }
        Ok(out)
    }
}

/// First column of the circulant matrix with Fourier symbol
/// `symbol(k, k_odd)`.
fn circulant_column(grid: &Grid, symbol: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut data: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .zip(grid.odd_wavenumbers())
        .map(|(&k, ko)| Complex64::new(symbol(k, ko), 0.0))
        .collect();
    grid.ifft(&mut data);
    data.into_iter().map(|z| z.re).collect()
}

fn circulant(grid: &Grid, symbol: impl Fn(f64, f64) -> f64) -> Mat<f64> {
    let col = circulant_column(grid, symbol);
    let n = col.len();
    Mat::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

/// Apply a real Fourier multiplier to a real vector.
fn apply_symbol(grid: &Grid, f: &[f64], symbol: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    grid.fft(&mut data);
    for ((z, &k), ko) in data.iter_mut().zip(grid.wavenumbers()).zip(grid.odd_wavenumbers()) {
        *z *= symbol(k, ko);
    }
    grid.ifft(&mut data);
    data.into_iter().map(|z| z.re).collect()
}

/// Minimum of `x^T M x / x^T x` over `x` orthogonal to `constraints`, by
/// successive Householder deflation. Returns the unconstrained minimum too.
fn deflated_minimum(m: Mat<f64>, constraints: Vec<Vec<f64>>) -> Result<(f64, f64)> {
    let unconstrained = smallest_eigenvalue(&m)?;
    let mut m = m;
    let mut pending = constraints;
    while !pending.is_empty() {
        let c = pending.remove(0);
        let n = m.nrows();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // Reflector H = I - 2 w w^T with H c = alpha e_0.
        let alpha = if c[0] >= 0.0 { -norm } else { norm };
        let mut w = c.clone();
        w[0] -= alpha;
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut w {
            *x /= wn;
        }
        let v: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)] * w[j]).sum())
            .collect();
        let s: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        m = Mat::from_fn(n - 1, n - 1, |i, j| {
            let (i, j) = (i + 1, j + 1);
            m[(i, j)] - 2.0 * w[i] * v[j] - 2.0 * v[i] * w[j] + 4.0 * s * w[i] * w[j]
        });
        for other in &mut pending {
            let p: f64 = w.iter().zip(other.iter()).map(|(a, b)| a * b).sum();
            let reflected: Vec<f64> = other.iter().zip(&w).map(|(o, wi)| o - 2.0 * p * wi).collect();
            *other = reflected[1..].to_vec();
        }
    }
    Ok((unconstrained, smallest_eigenvalue(&m)?))
}

fn smallest_eigenvalue(m: &Mat<f64>) -> Result<f64> {
    let values = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    values
        .first()
        .copied()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Eigen("empty or non-finite spectrum".into()))
}

/// `G^{-1/2}` for a symmetric positive definite Gram matrix.
fn inverse_sqrt(g: &Mat<f64>) -> Result<Mat<f64>> {
    let evd = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let n = g.nrows();
    let mut scaled = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        if !(s[j] > 0.0) {
            return Err(Error::Eigen(format!(
                "Gram matrix is not positive definite (eigenvalue {:e})",
                s[j]
            )));
        }
        let f = s[j].powf(-0.5);
        for i in 0..n {
            scaled[(i, j)] = u[(i, j)] * f;
        }
    }
    Ok(&scaled * u.transpose())
}

fn mat_vec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// Minimum of `<A x, x> / <G x, x>` over `x` with `<q, x> = 0` for every
/// constraint `q`; `(unconstrained, constrained)`.
fn generalized_constrained_minimum(
    a: &Mat<f64>,
    gram: &Mat<f64>,
    constraints: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let g = inverse_sqrt(gram)?;
    let m = &(&g * a) * &g;
    let m = Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mapped = constraints.iter().map(|q| mat_vec(&g, q)).collect();
    deflated_minimum(m, mapped)
}

/// Constrained and unconstrained minima of
/// `<L+ f1, f1> + <L- f2, f2>` over `||f1||_{H1}^2 + ||f2||_{H1}^2 = 1`,
/// with `f1` orthogonal to `Q`, `yQ` and `f2` orthogonal to `Lambda Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsCoercivity {
    pub lambda_min_unconstrained: f64,
    pub lambda_min_constrained: f64,
    pub plus_constrained: f64,
    pub minus_constrained: f64,
}

/// Quadratic value `<L+ Re eta, Re eta> + <L- Im eta, Im eta>`.
pub fn nls_form(eta: &ComplexField) -> Result<f64> {
    let grid = eta.grid();
    Ok(LinearizedOperator::plus(grid).form(&eta.re())?
        + LinearizedOperator::minus(grid).form(&eta.im())?)
}

/// Dense constrained eigensolve for the `L+/L-` pair on `grid`.
pub fn nls_coercivity(grid: &Arc<Grid>) -> Result<NlsCoercivity> {
    // With h-weighted inner products the H1 Gram matrix is circulant:
    // G = h (1 + k_odd^2). Whitening by its inverse square root keeps the
    // kinetic part circulant with symbol k^2 / (1 + k_odd^2).
    let s = circulant(grid, |_, ko| (1.0 + ko * ko).powf(-0.5));
    let kinetic = circulant(grid, |k, ko| k * k / (1.0 + ko * ko));
    let n = grid.n_points();
    let q = grid.real_from_fn(|x| closed_form::q(grid.wrap(x)));
    let yq = grid.real_from_fn(|x| {
        let y = grid.wrap(x);
        y * closed_form::q(y)
    });
    let lq = grid.real_from_fn(|x| closed_form::lambda_q(grid.wrap(x)));
    let whiten = |f: &RealField| apply_symbol(grid, f.values(), |_, ko| (1.0 + ko * ko).powf(-0.5));

    let solve = |op: LinearizedOperator, constraints: Vec<Vec<f64>>| -> Result<(f64, f64)> {
        let v = op.potential().values();
        let sv = Mat::from_fn(n, n, |i, j| s[(i, j)] * v[j]);
        let pot = &sv * &s;
        let m = Mat::from_fn(n, n, |i, j| {
            kinetic[(i, j)] + 0.5 * (pot[(i, j)] + pot[(j, i)])
        });
        deflated_minimum(m, constraints)
    };
    let (plus_free, plus) = solve(LinearizedOperator::plus(grid), vec![whiten(&q), whiten(&yq)])?;
    let (minus_free, minus) = solve(LinearizedOperator::minus(grid), vec![whiten(&lq)])?;
    Ok(NlsCoercivity {
        lambda_min_unconstrained: plus_free.min(minus_free),
        lambda_min_constrained: plus.min(minus),
        plus_constrained: plus,
        minus_constrained: minus,
    })
}

/// Value of the form at `eta` together with the constrained minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsCoercivityAt {
    pub quadratic_value: f64,
    pub lambda_min_constrained: f64,
}

pub fn coercivity_nls(eta: &ComplexField) -> Result<NlsCoercivityAt> {
    Ok(NlsCoercivityAt {
        quadratic_value: nls_form(eta)?,
        lambda_min_constrained: nls_coercivity(eta.grid())?.lambda_min_constrained,
    })
}

/// Even `C^2` weight with `Phi_B = 1` on `[0, B]` and `Phi_B = e^{-|x|/B}`
/// beyond `(1 + blend) B`. In between `log Phi_B(x) = -s P((s - 1)/blend)`
/// with `s = |x|/B` and `P` the quintic smoothstep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPhiB {
    pub b: f64,
    pub blend: f64,
}

impl WeightPhiB {
    pub const DEFAULT_BLEND: f64 = 0.5;

    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::config("B", format!("must be positive, got {b}")));
        }
        Ok(WeightPhiB {
            b,
            blend: Self::DEFAULT_BLEND,
        })
    }

    /// `B` must leave room for the full transition inside the half box.
    pub fn for_grid(b: f64, grid: &Grid) -> Result<Self> {
        let w = Self::new(b)?;
        if 2.0 * b >= 0.5 * grid.box_length() {
            return Err(Error::config(
                "B",
                format!(
                    "2B = {} must be below half the box length {}",
                    2.0 * b,
                    0.5 * grid.box_length()
                ),
            ));
        }
        Ok(w)
    }

    pub fn unscaled(&self, x: f64) -> f64 {
        let s = x.abs();
        if s <= 1.0 {
            1.0
        } else if s >= 1.0 + self.blend {
            (-s).exp()
        } else {
            let t = (s - 1.0) / self.blend;
            let p = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            (-s * p).exp()
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.unscaled(x / self.b)
    }

    /// `Phi_B(x - c t - sigma)` on the grid, wrapped.
    pub fn field(&self, params: &SolitonParams, t: f64, grid: &Arc<Grid>) -> RealField {
        grid.real_from_fn(|x| self.value(params.frame_coordinate(grid, x, t)))
    }

    /// `(min, max)` of `Phi_B(x) e^{|x|/B}` over the grid points.
    pub fn sandwich(&self, grid: &Grid) -> (f64, f64) {
        grid.points().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
            let r = self.value(x) * (x.abs() / self.b).exp();
            (lo.min(r), hi.max(r))
        })
    }
}

fn check_triple(eta_u: &ComplexField, eta_n: &RealField, eta_v: &RealField) -> Result<()> {
    if !eta_u.grid().same_as(eta_n.grid()) || !eta_u.grid().same_as(eta_v.grid()) {
        return Err(Error::GridMismatch("perturbation components on different grids".into()));
    }
    Ok(())
}

/// Soliton-coupling part `int(2 sqrt(1-c^2) phi eta_n Re(e^{i Gamma} conj eta_u) - phi^2 |eta_u|^2)`.
fn coupling_part(eta_u: &ComplexField, eta_n: &RealField, params: &SolitonParams, t: f64) -> f64 {
    let grid = eta_u.grid();
    let h = grid.spacing();
    let amp = params.amplitude();
    let mut sum = 0.0;
    for (i, &x) in grid.points().iter().enumerate() {
        let phi = closed_form::phi(params.omega, params.frame_coordinate(grid, x, t));
        let e = Complex64::from_polar(1.0, params.phase(x, t));
        let u = eta_u.values()[i];
        sum += 2.0 * amp * phi * eta_n.values()[i] * (e * u.conj()).re - phi * phi * u.norm_sqr();
    }
    h * sum
}

/// Pointwise `|d eta_u|^2 + nu |eta_u|^2 - c(eta_n eta_v + Im(conj eta_u d eta_u)) + (eta_n^2 + eta_v^2)/2`.
fn free_density(
    eta_u: &ComplexField,
    eta_n: &RealField,
    eta_v: &RealField,
    nu: f64,
    c: f64,
) -> Result<RealField> {
    let du = eta_u.derivative(1)?;
    let grid = eta_u.grid();
    let vals = (0..grid.n_points())
        .map(|i| {
            let (u, p) = (eta_u.values()[i], du.values()[i]);
            let (n, v) = (eta_n.values()[i], eta_v.values()[i]);
            p.norm_sqr() + nu * u.norm_sqr() - c * (n * v + (u.conj() * p).im) + 0.5 * (n * n + v * v)
        })
        .collect();
    grid.real_field(vals)
}

/// The one-soliton quadratic form `H2` with `nu = omega + c^2/4`.
pub fn h2_form(
    eta_u: &ComplexField,
    eta_n: &RealField,
    eta_v: &RealField,
    params: &SolitonParams,
    t: f64,
) -> Result<f64> {
    check_triple(eta_u, eta_n, eta_v)?;
    Ok(free_density(eta_u, eta_n, eta_v, params.nu(), params.c)?.integral()
        + coupling_part(eta_u, eta_n, params, t))
}

/// `H2` with the free part weighted by `Phi_B(x - c t - sigma)`.
pub fn h2b_form(
    eta_u: &ComplexField,
    eta_n: &RealField,
    eta_v: &RealField,
    params: &SolitonParams,
    t: f64,
    weight: &WeightPhiB,
) -> Result<f64> {
    check_triple(eta_u, eta_n, eta_v)?;
    let grid = eta_u.grid();
    let phi_b = weight.field(params, t, grid);
    Ok(free_density(eta_u, eta_n, eta_v, params.nu(), params.c)?.dot(&phi_b)
        + coupling_part(eta_u, eta_n, params, t))
}

/// The multi-soliton quadratic part split into localized forms and
/// cutoff-mismatch remainders:
/// `G21 = sum_k H2B_k + sum_k int (chi_k - Phi_B(x - c_k t - sigma_k)) q_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedSplit {
    pub h2b: Vec<f64>,
    pub remainder: Vec<f64>,
}

impl LocalizedSplit {
    pub fn total(&self) -> f64 {
        self.h2b.iter().sum::<f64>() + self.remainder.iter().sum::<f64>()
    }
}

/// `params[k]` carries the modulated `omega_k(t)`, `sigma_k(t)`,
/// `gamma_k(t)` such that `params[k].phase(x, t)` is the profile phase.
pub fn localized_split(
    eta_u: &ComplexField,
    eta_n: &RealField,
    eta_v: &RealField,
    params: &[SolitonParams],
    family: &CutoffFamily,
    t: f64,
    weight: &WeightPhiB,
) -> Result<LocalizedSplit> {
    check_triple(eta_u, eta_n, eta_v)?;
    if params.len() != family.len() {
        return Err(Error::Domain(format!(
            "{} solitons for a {}-piece cutoff family",
            params.len(),
            family.len()
        )));
    }
    let grid = eta_u.grid();
    let chis = family.all(t, grid)?;
    let mut split = LocalizedSplit {
        h2b: Vec::with_capacity(params.len()),
        remainder: Vec::with_capacity(params.len()),
    };
    for (p, chi) in params.iter().zip(&chis) {
        let q = free_density(eta_u, eta_n, eta_v, p.nu(), p.c)?;
        let phi_b = weight.field(p, t, grid);
        split.h2b.push(q.dot(&phi_b) + coupling_part(eta_u, eta_n, p, t));
        split.remainder.push(q.dot(&(chi - &phi_b)));
    }
    Ok(split)
}

/// `mu = min(mu1, mu2)` of the pointwise lower bound on the localized
/// density, from the reference pulsations and speeds.
pub fn young_mu(omega0: &[f64], c: &[f64]) -> f64 {
    let mut mu1 = 0.5f64;
    let mut mu2 = f64::INFINITY;
    for (&w, &c) in omega0.iter().zip(c) {
        let half = 0.5 * w;
        mu1 = mu1.min(half + 0.25 * c * c);
        mu2 = mu2.min(2.0 * half / (2.0 * half + c * c)).min(0.5 * half).min(0.5 * (1.0 - c.abs()));
    }
    mu1.min(mu2)
}

/// Pointwise density `|p|^2 + nu |e|^2 + (n^2+v^2)/2 - c(n v + Im(conj e p))`.
pub fn localized_density(e: Complex64, p: Complex64, n: f64, v: f64, nu: f64, c: f64) -> f64 {
    p.norm_sqr() + nu * e.norm_sqr() + 0.5 * (n * n + v * v) - c * (n * v + (e.conj() * p).im)
}

/// Dense matrices of a one-soliton form in the frame variables
/// `eta_u = e^{i Gamma} (a + i b)`, unknown vector `(a, b, eta_n, eta_v)`.
struct FrameProblem {
    form: Mat<f64>,
    gram: Mat<f64>,
    constraints: Vec<Vec<f64>>,
}

/// Assemble the frame problem for `H2` (`weight = None`) or `H2B`. The Gram
/// matrix is the squared `H1 x L2 x L2` norm of `(eta_u, eta_n, eta_v)`,
/// weighted by `Phi_B` when a weight is given.
fn frame_problem(params: &SolitonParams, grid: &Arc<Grid>, weight: Option<&WeightPhiB>) -> FrameProblem {
    let n = grid.n_points();
    let h = grid.spacing();
    let (omega, c) = (params.omega, params.c);
    let amp = params.amplitude();
    let y: Vec<f64> = grid.points().iter().map(|&x| params.frame_coordinate(grid, x, 0.0)).collect();
    let phi: Vec<f64> = y.iter().map(|&s| closed_form::phi(omega, s)).collect();
    let w: Vec<f64> = y
        .iter()
        .map(|&s| weight.map_or(1.0, |wb| wb.value(s)))
        .collect();
    // First-derivative matrix: column j is the spectral derivative of e_j.
    let d1 = {
        let mut col: Vec<Complex64> = grid
            .odd_wavenumbers()
            .iter()
            .map(|&k| Complex64::new(0.0, k))
            .collect();
        grid.ifft(&mut col);
        Mat::from_fn(n, n, |i, j| col[(i + n - j) % n].re)
    };
    let wd1 = Mat::from_fn(n, n, |i, j| w[i] * d1[(i, j)]);
    let kin = d1.transpose() * &wd1;
    // Antisymmetric drift block from c Im(conj w w') with weight.
    let drift = Mat::from_fn(n, n, |i, j| 0.5 * c * (wd1[(i, j)] - wd1[(j, i)]));

    let dim = 4 * n;
    let mut form = Mat::<f64>::zeros(dim, dim);
    let mut gram = Mat::<f64>::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let k = kin[(i, j)];
            form[(i, j)] = h * k;
            form[(n + i, n + j)] = h * k;
            gram[(i, j)] = h * k;
            gram[(n + i, n + j)] = h * k;
            gram[(i, n + j)] = h * drift[(i, j)];
            gram[(n + j, i)] = h * drift[(i, j)];
        }
        let diag_u = h * (omega * w[i] - phi[i] * phi[i]);
        form[(i, i)] += diag_u;
        form[(n + i, n + i)] += diag_u;
        form[(i, 2 * n + i)] = h * amp * phi[i];
        form[(2 * n + i, i)] = h * amp * phi[i];
        form[(2 * n + i, 2 * n + i)] = 0.5 * h * w[i];
        form[(3 * n + i, 3 * n + i)] = 0.5 * h * w[i];
        form[(2 * n + i, 3 * n + i)] = -0.5 * c * h * w[i];
        form[(3 * n + i, 2 * n + i)] = -0.5 * c * h * w[i];

        let mass_u = h * w[i] * (1.0 + 0.25 * c * c);
        gram[(i, i)] += mass_u;
        gram[(n + i, n + i)] += mass_u;
        gram[(2 * n + i, 2 * n + i)] = h * w[i];
        gram[(3 * n + i, 3 * n + i)] = h * w[i];
    }

    let mut c_phi = vec![0.0; dim];
    let mut c_yphi = vec![0.0; dim];
    let mut c_lambda = vec![0.0; dim];
    for i in 0..n {
        c_phi[i] = phi[i];
        c_yphi[i] = y[i] * phi[i];
        c_lambda[n + i] = closed_form::lambda_omega(omega, y[i]);
    }
    FrameProblem {
        form,
        gram,
        constraints: vec![c_phi, c_yphi, c_lambda],
    }
}

/// Constrained minimum of `H2` (or `H2B`) over the unit sphere of the
/// (weighted) `H1 x L2 x L2` norm, under the three modulation orthogonality
/// relations `<Re(e^{-i Gamma} eta_u), phi> = <Re(...), y phi> = <Im(...), Lambda_omega> = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormMinimum {
    pub lambda_min_unconstrained: f64,
    pub lambda_min_constrained: f64,
}

pub fn h2_minimum(params: &SolitonParams, grid: &Arc<Grid>, weight: Option<&WeightPhiB>) -> Result<FormMinimum> {
    params.validate()?;
    if let Some(w) = weight {
        WeightPhiB::for_grid(w.b, grid)?;
    }
    let p = frame_problem(params, grid, weight);
    let (free, constrained) = generalized_constrained_minimum(&p.form, &p.gram, &p.constraints)?;
    Ok(FormMinimum {
        lambda_min_unconstrained: free,
        lambda_min_constrained: constrained,
    })
}

/// Coercivity report for one `(omega, c)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub omega: f64,
    pub c: f64,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub lambda_min_unconstrained: f64,
    pub lambda_min_constrained: f64,
    pub grid: GridSpec,
    /// `h2` without a weight, `h2b` with one.
    pub form: String,
}

pub fn coercivity_report(omega: f64, c: f64, b: Option<f64>, grid: &Arc<Grid>) -> Result<CoercivityReport> {
    let params = SolitonParams::new(omega, c, 0.0, 0.0)?;
    let weight = b.map(|b| WeightPhiB::for_grid(b, grid)).transpose()?;
    let m = h2_minimum(&params, grid, weight.as_ref())?;
    Ok(CoercivityReport {
        omega,
        c,
        b,
        lambda_min_unconstrained: m.lambda_min_unconstrained,
        lambda_min_constrained: m.lambda_min_constrained,
        grid: grid.spec(),
        form: if b.is_some() { "h2b" } else { "h2" }.into(),
    })
}

/// Reports for every `(omega, c, B)` combination, fanned out over points.
pub fn coercivity_sweep(
    omegas: &[f64],
    speeds: &[f64],
    weights: &[Option<f64>],
    grid: &Arc<Grid>,
    execution: Execution,
) -> Result<Vec<CoercivityReport>> {
    let mut points = Vec::new();
    for &w in omegas {
        for &c in speeds {
            for &b in weights {
                points.push((w, c, b));
            }
        }
    }
    execution
        .map(&points, |&(w, c, b)| coercivity_report(w, c, b, grid))
        .into_iter()
        .collect()
}
