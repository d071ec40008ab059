//! Periodic 1D grid, Fourier-multiplier derivatives, rectangle-rule
//! quadrature and the discrete Sobolev norms used on state triples.
//!
//! The whole line is truncated to the box `[-box_length/2, box_length/2)`.
//! Soliton tails decay like `exp(-sqrt(omega)|x|)`, so the wrap-around error
//! is exponentially small once the box is a few dozen widths long.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub box_length: f64,
}

impl Default for GridSpec {
    /// Box of length 80 at spacing 1/25: `exp(-sqrt(omega) * 40) < 1e-12`
    /// for every `omega >= 0.5`, so the periodic seam is invisible to
    /// spectral derivatives of soliton profiles.
    fn default() -> Self {
        GridSpec {
            n_points: 2048,
            box_length: 80.0,
        }
    }
}

pub struct Grid {
    n_points: usize,
    box_length: f64,
    spacing: f64,
    points: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n_points)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl Grid {
    pub fn new(n_points: usize, box_length: f64) -> Result<Arc<Grid>> {
        if n_points < 4 {
            return Err(Error::config("numerics.n_points", "need at least 4 points"));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::config("numerics.box_length", "must be positive"));
        }
        let spacing = box_length / n_points as f64;
        let points = (0..n_points)
            .map(|j| -0.5 * box_length + j as f64 * spacing)
            .collect();
        let base = 2.0 * PI / box_length;
        let wavenumbers = (0..n_points)
            .map(|j| base * signed_mode(j, n_points) as f64)
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            n_points,
            box_length,
            spacing,
            points,
            wavenumbers,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        }))
    }

    pub fn from_spec(spec: GridSpec) -> Result<Arc<Grid>> {
        Grid::new(spec.n_points, spec.box_length)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n_points: self.n_points,
            box_length: self.box_length,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Discrete frequencies `2 pi m / box_length` in FFT order. For even
    /// `n_points` the Nyquist entry is `-pi n_points / box_length`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Index of the Nyquist mode, if the grid has one.
    pub fn nyquist_index(&self) -> Option<usize> {
        (self.n_points % 2 == 0).then_some(self.n_points / 2)
    }

    /// Wavenumbers for odd-order derivatives: the Nyquist mode is zeroed so
    /// that real fields stay real.
    pub fn odd_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.wavenumbers.clone();
        if let Some(ny) = self.nyquist_index() {
            k[ny] = 0.0;
        }
        k
    }

    /// Reduce a coordinate into the periodic box.
    pub fn wrap(&self, x: f64) -> f64 {
        let half = 0.5 * self.box_length;
        (x + half).rem_euclid(self.box_length) - half
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.n_points == other.n_points && self.box_length == other.box_length)
    }

    pub fn fft(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Normalized inverse transform.
    pub fn ifft(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / self.n_points as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Zero the top third of the spectrum (2/3 rule).
    pub fn dealias(&self, spectrum: &mut [Complex64]) {
        let cutoff = self.n_points / 3;
        for (j, z) in spectrum.iter_mut().enumerate() {
            if signed_mode(j, self.n_points).unsigned_abs() > cutoff as u64 {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Fourier multiplier `(ik)^order` with the odd-order Nyquist convention.
    fn derivative_multiplier(&self, order: u32) -> Vec<Complex64> {
        let ks = if order % 2 == 1 {
            self.odd_wavenumbers()
        } else {
            self.wavenumbers.clone()
        };
        ks.into_iter()
            .map(|k| Complex64::new(0.0, k).powu(order))
            .collect()
    }

    pub fn real_field(self: &Arc<Self>, values: Vec<f64>) -> Result<RealField> {
        RealField::new(self.clone(), values)
    }

    pub fn complex_field(self: &Arc<Self>, values: Vec<Complex64>) -> Result<ComplexField> {
        ComplexField::new(self.clone(), values)
    }

    pub fn real_from_fn(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            grid: self.clone(),
            values: self.points.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn complex_from_fn(self: &Arc<Self>, f: impl Fn(f64) -> Complex64) -> ComplexField {
        ComplexField {
            grid: self.clone(),
            values: self.points.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Signed mode number of FFT index `j`; the Nyquist index maps to `-n/2`.
fn signed_mode(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn check_same(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )))
    }
}

#[derive(Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

#[derive(Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealField({:?}, {} values)", self.grid.spec(), self.values.len())
    }
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexField({:?}, {} values)", self.grid.spec(), self.values.len())
    }
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.n_points
            )));
        }
        Ok(RealField { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        RealField {
            grid: grid.clone(),
            values: vec![0.0; grid.n_points],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination; panics if the grids differ.
    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> RealField {
        assert!(self.grid.same_as(&other.grid), "zip_map across grids");
        RealField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> RealField {
        self.map(|v| a * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn derivative(&self, order: u32) -> Result<RealField> {
        spectral_derivative_real(self, order)
    }

    pub fn integral(&self) -> f64 {
        quadrature(self)
    }

    /// `||f||_{L^2}^2`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.spacing * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// `<f, g>` in L^2.
    pub fn dot(&self, other: &RealField) -> f64 {
        assert!(self.grid.same_as(&other.grid), "dot across grids");
        self.grid.spacing
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.n_points
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.n_points],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_real(&self, f: impl Fn(Complex64) -> f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &ComplexField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> ComplexField {
        assert!(self.grid.same_as(&other.grid), "zip_map across grids");
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|z| z.conj())
    }

    pub fn abs_sq(&self) -> RealField {
        self.map_real(|z| z.norm_sqr())
    }

    pub fn re(&self) -> RealField {
        self.map_real(|z| z.re)
    }

    pub fn im(&self) -> RealField {
        self.map_real(|z| z.im)
    }

    pub fn scale(&self, a: Complex64) -> ComplexField {
        self.map(|z| a * z)
    }

    /// Multiply pointwise by a real field.
    pub fn mul_real(&self, r: &RealField) -> ComplexField {
        assert!(self.grid.same_as(&r.grid), "mul_real across grids");
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&r.values)
                .map(|(&z, &a)| z * a)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn derivative(&self, order: u32) -> Result<ComplexField> {
        spectral_derivative(self, order)
    }

    pub fn integral(&self) -> Complex64 {
        quadrature_complex(self)
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.spacing * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
}

impl Add for &RealField {
    type Output = RealField;
    fn add(self, rhs: &RealField) -> RealField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &RealField {
    type Output = RealField;
    fn sub(self, rhs: &RealField) -> RealField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &RealField {
    type Output = RealField;
    fn mul(self, rhs: &RealField) -> RealField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: &ComplexField) -> ComplexField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: &ComplexField) -> ComplexField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ComplexField {
    type Output = ComplexField;
    fn mul(self, rhs: &ComplexField) -> ComplexField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

/// Spectral derivative of a complex field. `order` must be in `1..=4`.
pub fn spectral_derivative(field: &ComplexField, order: u32) -> Result<ComplexField> {
    if !(1..=4).contains(&order) {
        return Err(Error::Domain(format!(
            "derivative order {order} outside 1..=4"
        )));
    }
    let grid = &field.grid;
    let mut data = field.values.clone();
    grid.fft(&mut data);
    for (z, m) in data.iter_mut().zip(grid.derivative_multiplier(order)) {
        *z *= m;
    }
    grid.ifft(&mut data);
    Ok(ComplexField {
        grid: grid.clone(),
        values: data,
    })
}

/// Spectral derivative of a real field; the result is real by construction.
pub fn spectral_derivative_real(field: &RealField, order: u32) -> Result<RealField> {
    let d = spectral_derivative(&field.to_complex(), order)?;
    Ok(d.re())
}

/// Derivative of `field` checked against an expected grid.
pub fn spectral_derivative_on(
    grid: &Grid,
    field: &ComplexField,
    order: u32,
) -> Result<ComplexField> {
    check_same(grid, &field.grid, "spectral_derivative")?;
    spectral_derivative(field, order)
}

/// Rectangle rule `spacing * sum_j f_j`, summed in index order.
pub fn quadrature(field: &RealField) -> f64 {
    field.grid.spacing * field.values.iter().sum::<f64>()
}

pub fn quadrature_complex(field: &ComplexField) -> Complex64 {
    let s: Complex64 = field.values.iter().sum();
    s * field.grid.spacing
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevNorms {
    pub h1_of_u: f64,
    pub l2_of_n: f64,
    pub l2_of_v: f64,
    /// `||u||_{H^1} + ||n||_{L^2} + ||v||_{L^2}`.
    pub bold_h: f64,
    pub h2_of_u: f64,
    pub h1_of_n: f64,
    pub h1_of_v: f64,
}

impl SobolevNorms {
    /// The `H^2 x H^1 x H^1` companion of `bold_h`.
    pub fn bold_h2(&self) -> f64 {
        self.h2_of_u + self.h1_of_n + self.h1_of_v
    }
}

pub fn sobolev_norms(u: &ComplexField, n: &RealField, v: &RealField) -> Result<SobolevNorms> {
    check_same(&u.grid, &n.grid, "sobolev_norms(u, n)")?;
    check_same(&u.grid, &v.grid, "sobolev_norms(u, v)")?;
    let u0 = u.norm_sq();
    let u1 = u.derivative(1)?.norm_sq();
    let u2 = u.derivative(2)?.norm_sq();
    let n0 = n.norm_sq();
    let n1 = n.derivative(1)?.norm_sq();
    let v0 = v.norm_sq();
    let v1 = v.derivative(1)?.norm_sq();
    let h1_of_u = (u0 + u1).sqrt();
    let l2_of_n = n0.sqrt();
    let l2_of_v = v0.sqrt();
    Ok(SobolevNorms {
        h1_of_u,
        l2_of_n,
        l2_of_v,
        bold_h: h1_of_u + l2_of_n + l2_of_v,
        h2_of_u: (u0 + u1 + u2).sqrt(),
        h1_of_n: (n0 + n1).sqrt(),
        h1_of_v: (v0 + v1).sqrt(),
    })
}

/// JSON form of a field: grid plus `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRecord {
    pub grid: GridSpec,
    pub values: Vec<[f64; 2]>,
}

impl ComplexField {
    pub fn to_record(&self) -> FieldRecord {
        FieldRecord {
            grid: self.grid.spec(),
            values: self.values.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_record(grid: &Arc<Grid>, record: &FieldRecord) -> Result<Self> {
        if record.grid != grid.spec() {
            return Err(Error::GridMismatch(format!(
                "record grid {:?} vs {:?}",
                record.grid,
                grid.spec()
            )));
        }
        ComplexField::new(
            grid.clone(),
            record
                .values
                .iter()
                .map(|&[re, im]| Complex64::new(re, im))
                .collect(),
        )
    }

    /// CSV with columns `x,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re", "im"])?;
        for (x, z) in self.grid.points.iter().zip(&self.values) {
            w.write_record([x.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl RealField {
    pub fn to_record(&self) -> FieldRecord {
        self.to_complex().to_record()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.to_complex().write_csv(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(y: f64) -> f64 {
        2f64.sqrt() / y.cosh()
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(1024, 40.0).unwrap();
        assert_eq!(g.spacing() * 1024.0, 40.0);
        assert_eq!(g.points()[0], -20.0);
        assert!((g.points()[1023] - (20.0 - g.spacing())).abs() < 1e-14);
        let k = g.wavenumbers();
        for m in 1..512 {
            assert!((k[m] + k[1024 - m]).abs() < 1e-12);
        }
        assert_eq!(g.nyquist_index(), Some(512));
        assert_eq!(g.odd_wavenumbers()[512], 0.0);
    }

    #[test]
    fn wrap_reduces_into_box() {
        let g = Grid::new(64, 10.0).unwrap();
        assert!((g.wrap(6.0) - (-4.0)).abs() < 1e-14);
        assert!((g.wrap(-5.0) - (-5.0)).abs() < 1e-14);
        assert!((g.wrap(5.0) - (-5.0)).abs() < 1e-14);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::new(128, 40.0).unwrap();
        let one = g.real_from_fn(|_| 1.0);
        assert!(one.derivative(1).unwrap().max_abs() < 1e-14);
        assert!(one.derivative(2).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn derivative_of_single_mode() {
        let g = Grid::new(256, 40.0).unwrap();
        let kk = 2.0 * PI / 40.0;
        let f = g.real_from_fn(|x| (kk * x).sin());
        let d = f.derivative(1).unwrap();
        let expected = g.real_from_fn(|x| kk * (kk * x).cos());
        assert!((&d - &expected).max_abs() < 1e-13);
    }

    #[test]
    fn derivative_of_phi_one_matches_closed_form() {
        let g = Grid::from_spec(GridSpec::default()).unwrap();
        let phi = g.real_from_fn(|x| 2f64.sqrt() / x.cosh());
        let d = phi.derivative(1).unwrap();
        let expected = g.real_from_fn(|x| -(2f64.sqrt()) * x.sinh() / x.cosh().powi(2));
        assert!((&d - &expected).max_abs() < 1e-10);
    }

    #[test]
    fn invalid_order_is_rejected() {
        let g = Grid::new(16, 1.0).unwrap();
        let f = ComplexField::zeros(&g);
        assert!(matches!(f.derivative(0), Err(Error::Domain(_))));
        assert!(matches!(f.derivative(5), Err(Error::Domain(_))));
    }

    #[test]
    fn mismatched_grids_are_reported() {
        let g1 = Grid::new(16, 1.0).unwrap();
        let g2 = Grid::new(32, 1.0).unwrap();
        let u = ComplexField::zeros(&g1);
        let n = RealField::zeros(&g2);
        assert!(matches!(
            sobolev_norms(&u, &n, &RealField::zeros(&g1)),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            spectral_derivative_on(&g2, &u, 1),
            Err(Error::GridMismatch(_))
        ));
        assert!(RealField::new(g1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn ground_state_integrals() {
        let g = Grid::new(1024, 40.0).unwrap();
        let q2 = g.real_from_fn(|y| q(y).powi(2));
        let q4 = g.real_from_fn(|y| q(y).powi(4));
        assert!((quadrature(&q2) - 4.0).abs() < 1e-10);
        assert!((quadrature(&q4) - 16.0 / 3.0).abs() < 1e-10);
        assert_eq!(quadrature(&RealField::zeros(&g)), 0.0);
    }

    #[test]
    fn norms_of_phi_one() {
        let g = Grid::new(1024, 40.0).unwrap();
        let u = g.complex_from_fn(|x| Complex64::new(q(x), 0.0));
        let z = RealField::zeros(&g);
        let norms = sobolev_norms(&u, &z, &z).unwrap();
        assert!((u.norm_sq() - 4.0).abs() < 1e-10);
        assert!((u.derivative(1).unwrap().norm_sq() - 4.0 / 3.0).abs() < 1e-9);
        assert!((norms.h1_of_u - (16.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert_eq!(norms.bold_h, norms.h1_of_u);

        let zero = sobolev_norms(&ComplexField::zeros(&g), &z, &z).unwrap();
        assert_eq!(zero.bold_h, 0.0);
        assert_eq!(zero.h2_of_u, 0.0);
    }

    #[test]
    fn record_round_trip() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = g.complex_from_fn(|x| Complex64::new(x, -x));
        let json = serde_json::to_string(&f.to_record()).unwrap();
        let back: FieldRecord = serde_json::from_str(&json).unwrap();
        let f2 = ComplexField::from_record(&g, &back).unwrap();
        assert_eq!(f.values(), f2.values());
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,re,im\n-1,-1,1\n"));
    }

    /// Band-limited random field from a few low modes.
    fn band_limited(g: &Arc<Grid>, coeffs: &[(f64, f64)]) -> RealField {
        let base = 2.0 * PI / g.box_length();
        g.real_from_fn(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let k = base * (m + 1) as f64;
                    a * (k * x).cos() + b * (k * x).sin()
                })
                .sum()
        })
    }

    proptest! {
        #[test]
        fn parseval(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20)) {
            let g = Grid::new(128, 17.0).unwrap();
            let f = band_limited(&g, &coeffs);
            let mut spec = f.to_complex().into_values();
            g.fft(&mut spec);
            let coeff_sum: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>()
                * g.spacing() / g.n_points() as f64;
            let direct = f.norm_sq();
            prop_assert!((direct - coeff_sum).abs() <= 1e-12 * direct.max(1e-300));
        }

        #[test]
        fn derivative_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            c1 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10),
            c2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10),
        ) {
            let g = Grid::new(64, 10.0).unwrap();
            let f = band_limited(&g, &c1);
            let h = band_limited(&g, &c2);
            let combo = f.zip_map(&h, |x, y| a * x + b * y);
            let lhs = combo.derivative(1).unwrap();
            let rhs = f.derivative(1).unwrap().zip_map(&h.derivative(1).unwrap(), |x, y| a * x + b * y);
            prop_assert!((&lhs - &rhs).max_abs() < 1e-12 * (1.0 + rhs.max_abs()));
        }

        #[test]
        fn integration_by_parts(s1 in 0.5f64..2.0, s2 in 0.5f64..2.0, shift in -3.0f64..3.0) {
            let g = Grid::new(512, 40.0).unwrap();
            let f = g.real_from_fn(|x| (-(x / s1).powi(2)).exp());
            let h = g.real_from_fn(|x| 1.0 / ((x - shift) / s2).cosh());
            let lhs = f.dot(&h.derivative(1).unwrap());
            let rhs = -f.derivative(1).unwrap().dot(&h);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
