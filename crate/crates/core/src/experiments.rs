//! Named experiment drivers. Each run is described by an [`ExperimentSpec`],
//! writes its data files into a directory named by the hash of the spec, and
//! returns a [`RunManifest`] listing every output and fitted quantity.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::{backward_construct, ErrorSample, State, Stepper, StepperOptions, Trajectory};
use crate::error::{Error, Result};
use crate::functionals::{
    local_mass, local_momentum, mass, modified_energies, tail_mass, weinstein,
    weinstein_decompose, CutoffFamily, FunctionalReport, ModifiedEnergies, WeinsteinParts,
};
use crate::grid::{Grid, GridSpec};
use crate::modulation::{
    derivative_series, jacobian_constants, modulate, modulated_profile, track, write_track_csv,
    ModulationOptions, ParamVector,
};
use crate::par::Execution;
use crate::profiles::{multi_soliton, traveling_wave, MultiSolitonConfig, SolitonParams};
use crate::spectral::{coercivity_sweep, nls_coercivity, CoercivityReport};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a CSV column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Forward evolution of the multi-soliton profile with functional tracking.
    Simulate,
    #[default]
    BackwardMsw,
    WeinsteinAudit,
    CoercivitySweep,
    LocalQuantities,
    ModulationTrack,
    ConvergenceOrder,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::BackwardMsw => "backward_msw",
            ExperimentKind::WeinsteinAudit => "weinstein_audit",
            ExperimentKind::CoercivitySweep => "coercivity_sweep",
            ExperimentKind::LocalQuantities => "local_quantities",
            ExperimentKind::ModulationTrack => "modulation_track",
            ExperimentKind::ConvergenceOrder => "convergence_order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_points: usize,
    pub box_length: f64,
    pub dt: f64,
    /// Keep every `sample_stride`-th step.
    pub sample_stride: usize,
    pub dealias: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        let g = GridSpec::default();
        Numerics {
            n_points: g.n_points,
            box_length: g.box_length,
            dt: 1e-3,
            sample_stride: 100,
            dealias: true,
        }
    }
}

impl Numerics {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            n_points: self.n_points,
            box_length: self.box_length,
        }
    }

    pub fn stepper_options(&self) -> StepperOptions {
        StepperOptions {
            dealias: self.dealias,
            ..StepperOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 16 || self.n_points % 2 != 0 {
            return Err(Error::config("numerics.n_points", "must be even and at least 16"));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(Error::config("numerics.box_length", "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("numerics.dt", "must be positive"));
        }
        if self.sample_stride == 0 {
            return Err(Error::config("numerics.sample_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Experiment-specific settings. Each kind reads the subset it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    pub t_final: f64,
    pub t_start: f64,
    /// Cutoff widths `L` for localized quantities; the first one is used
    /// where a single width is needed.
    pub cutoff_widths: Vec<f64>,
    /// Localization scales `B` for the weighted coercivity form.
    pub weights: Vec<f64>,
    /// Tail radius for the tail-mass integrals.
    pub k0: f64,
    /// Modulation Newton tolerance.
    pub tolerance: f64,
    /// Fit window bounds on the error: `[lower, upper]`.
    pub fit_window: [f64; 2],
    /// Samples closer than this factor to the integrator noise floor are
    /// excluded from exponential fits.
    pub floor_factor: f64,
    /// Amplitude of the seeded perturbation used by the Weinstein audit.
    pub perturbation: f64,
    pub sweep_omegas: Vec<f64>,
    pub sweep_speeds: Vec<f64>,
    /// Grid for dense coercivity eigenproblems (four unknowns per point).
    pub coercivity_grid: GridSpec,
    pub convergence_dts: Vec<f64>,
    pub convergence_time: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs {
            t_final: 30.0,
            t_start: 0.0,
            cutoff_widths: vec![5.0, 10.0, 20.0],
            weights: vec![],
            k0: 20.0,
            tolerance: 1e-10,
            fit_window: [1e-10, 1e-2],
            floor_factor: 10.0,
            perturbation: 1e-3,
            sweep_omegas: vec![0.5, 1.0, 2.0],
            sweep_speeds: vec![-0.9, 0.0, 0.9],
            coercivity_grid: GridSpec {
                n_points: 256,
                box_length: 40.0,
            },
            convergence_dts: vec![2e-3, 1e-3, 5e-4],
            convergence_time: 1.0,
        }
    }
}

impl Knobs {
    pub fn validate(&self, numerics: &Numerics) -> Result<()> {
        let half = 0.5 * numerics.box_length;
        if !(self.t_start.is_finite() && self.t_start >= 0.0) {
            return Err(Error::config("knobs.t_start", "must be non-negative"));
        }
        if !(self.t_final.is_finite() && self.t_final > self.t_start) {
            return Err(Error::config("knobs.t_final", "must exceed knobs.t_start"));
        }
        if self.cutoff_widths.is_empty() || self.cutoff_widths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::config("knobs.cutoff_widths", "need at least one positive width"));
        }
        if let Some(b) = self.weights.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::config("knobs.weights", format!("B must be positive, got {b}")));
        }
        if let Some(b) = self.weights.iter().find(|b| 2.0 * **b >= 0.5 * self.coercivity_grid.box_length) {
            return Err(Error::config(
                "knobs.weights",
                format!("2B must stay below half of knobs.coercivity_grid.box_length, got B = {b}"),
            ));
        }
        if !(self.k0 >= 0.0 && self.k0 < half) {
            return Err(Error::config("knobs.k0", format!("must lie in [0, {half})")));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::config("knobs.tolerance", "must be positive"));
        }
        let [lo, hi] = self.fit_window;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::config("knobs.fit_window", "need 0 < lower < upper"));
        }
        if !(self.floor_factor >= 1.0) {
            return Err(Error::config("knobs.floor_factor", "must be at least 1"));
        }
        if !(self.perturbation.is_finite() && self.perturbation > 0.0) {
            return Err(Error::config("knobs.perturbation", "must be positive"));
        }
        if self.sweep_omegas.is_empty() || self.sweep_omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("knobs.sweep_omegas", "need positive pulsations"));
        }
        if self.sweep_speeds.is_empty() || self.sweep_speeds.iter().any(|c| !(c.abs() < 1.0)) {
            return Err(Error::config("knobs.sweep_speeds", "need speeds in (-1, 1)"));
        }
        let cg = self.coercivity_grid;
        if cg.n_points < 16 || cg.n_points > 1024 || !(cg.box_length > 0.0) {
            return Err(Error::config(
                "knobs.coercivity_grid",
                "n_points must lie in 16..=1024 and box_length be positive",
            ));
        }
        if self.convergence_dts.len() < 2 || self.convergence_dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::config("knobs.convergence_dts", "need at least two positive steps"));
        }
        if !(self.convergence_time.is_finite() && self.convergence_time > 0.0) {
            return Err(Error::config("knobs.convergence_time", "must be positive"));
        }
        Ok(())
    }
}

/// Two solitons with `omega = (1, 1)`, `c = (-1/2, 1/2)`. The phase offset
/// breaks the mirror symmetry that would otherwise freeze the localized
/// masses at `M/2` each.
pub fn default_config() -> MultiSolitonConfig {
    MultiSolitonConfig {
        solitons: vec![
            SolitonParams {
                omega: 1.0,
                c: -0.5,
                sigma: 0.0,
                gamma: 0.0,
            },
            SolitonParams {
                omega: 1.0,
                c: 0.5,
                sigma: 0.0,
                gamma: FRAC_PI_2,
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub numerics: Numerics,
    /// Serialized as the top-level `solitons` array.
    #[serde(rename = "solitons", with = "solitons_block", default = "default_config")]
    pub config: MultiSolitonConfig,
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default)]
    pub seed: u64,
}

mod solitons_block {
    use super::{MultiSolitonConfig, SolitonParams};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(config: &MultiSolitonConfig, s: S) -> Result<S::Ok, S::Error> {
        config.solitons.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<MultiSolitonConfig, D::Error> {
        Ok(MultiSolitonConfig {
            solitons: Vec::<SolitonParams>::deserialize(d)?,
        })
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::default(),
            numerics: Numerics::default(),
            config: default_config(),
            knobs: Knobs::default(),
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_config_error)
    }

    pub fn validate(&self) -> Result<()> {
        self.numerics.validate()?;
        self.config.validate()?;
        self.knobs.validate(&self.numerics)
    }

    /// Canonical serialization; the run directory is named by its hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Apply `key = value` overrides addressed by dotted paths such as
    /// `numerics.dt` or `solitons.1.gamma`. Values are parsed as JSON
    /// when possible and taken as strings otherwise.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for (key, raw) in overrides {
            let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            let slot = lookup_mut(&mut value, key)?;
            *slot = parsed;
        }
        serde_json::from_value(value).map_err(json_config_error)
    }
}

fn json_config_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
        .unwrap_or("<document>")
        .to_string();
    Error::config(key, msg)
}

fn lookup_mut<'a>(value: &'a mut Value, key: &str) -> Result<&'a mut Value> {
    let mut cur = value;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(key, "unknown key"))?;
    }
    Ok(cur)
}

/// Every leaf key of the default spec with its default value, in dotted form.
pub fn config_keys_with_defaults() -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x, out);
                }
            }
            Value::Array(items) if items.iter().any(|x| x.is_object()) => {
                for (i, x) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(ExperimentSpec::default()).expect("spec serializes"), &mut out);
    out
}

/// Least-squares fit of `log y = log amplitude - rate t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub points: usize,
    /// `[t_min, t_max]` of the fitted samples.
    pub t_window: [f64; 2],
    /// `[y_min, y_max]` of the fitted samples.
    pub y_window: [f64; 2],
    /// `rate > 0` with `r_squared >= 0.9`.
    pub decaying: bool,
}

pub const MIN_FIT_POINTS: usize = 8;

pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<FitResult> {
    if t.len() != y.len() {
        return Err(Error::Fit("time and value series differ in length".into()));
    }
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in window, need at least {MIN_FIT_POINTS}",
            t.len()
        )));
    }
    if let Some(v) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Fit(format!("non-positive value {v} in window")));
    }
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let lm = ly.iter().sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (ti, li) in t.iter().zip(&ly) {
        stt += (ti - tm) * (ti - tm);
        sty += (ti - tm) * (li - lm);
    }
    if stt == 0.0 {
        return Err(Error::Fit("all samples share one time".into()));
    }
    let slope = sty / stt;
    let intercept = lm - slope * tm;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (ti, li) in t.iter().zip(&ly) {
        ss_res += (li - intercept - slope * ti).powi(2);
        ss_tot += (li - lm).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    let rate = -slope;
    let fold = |f: fn(f64, f64) -> f64, init| t.iter().copied().fold(init, f);
    let yfold = |f: fn(f64, f64) -> f64, init| y.iter().copied().fold(init, f);
    Ok(FitResult {
        rate,
        amplitude: intercept.exp(),
        r_squared,
        points: t.len(),
        t_window: [fold(f64::min, f64::INFINITY), fold(f64::max, f64::NEG_INFINITY)],
        y_window: [yfold(f64::min, f64::INFINITY), yfold(f64::max, f64::NEG_INFINITY)],
        decaying: rate > 0.0 && r_squared >= 0.9,
    })
}

/// Longest contiguous run of indices with `lower <= y <= upper` and, when a
/// floor is given, `y >= factor * floor`. Returns a half-open range.
pub fn select_window(
    y: &[f64],
    floor: Option<&[f64]>,
    lower: f64,
    upper: f64,
    factor: f64,
) -> Option<(usize, usize)> {
    let ok = |i: usize| {
        let v = y[i];
        v.is_finite() && v >= lower && v <= upper && floor.is_none_or(|f| v >= factor * f[i])
    };
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=y.len() {
        match (i < y.len() && ok(i), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Auto-selected window plus fit, for samples sorted by increasing time.
pub fn fit_auto(
    t: &[f64],
    y: &[f64],
    floor: Option<&[f64]>,
    knobs: &Knobs,
) -> Result<FitResult> {
    let [lo, hi] = knobs.fit_window;
    let (a, b) = select_window(y, floor, lo, hi, knobs.floor_factor)
        .ok_or_else(|| Error::Fit("no sample inside the fit window".into()))?;
    fit_exponential(&t[a..b], &y[a..b])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub theta0: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    /// Measured `sup (psi')^2 / psi` of the cutoff profile.
    pub cutoff_psi_prime_sq_over_psi: f64,
    /// Measured `sup (psi'')^2 / psi'` of the cutoff profile.
    pub cutoff_psi_second_sq_over_psi_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub description: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub csv_schema_version: u32,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub derived: DerivedConstants,
    pub outputs: Vec<OutputFile>,
    pub fits: BTreeMap<String, FitResult>,
    pub values: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub notes: Vec<String>,
    pub complete: bool,
    pub error: Option<String>,
}

impl RunManifest {
    fn new(spec: &ExperimentSpec) -> Self {
        let reg = crate::functionals::cutoff::regularity_constants();
        RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            spec_hash: spec.hash(),
            spec: spec.clone(),
            derived: DerivedConstants {
                theta0: spec.config.theta0(),
                omega_minus: spec.config.omega_minus(),
                omega_plus: spec.config.omega_plus(),
                cutoff_psi_prime_sq_over_psi: reg.0,
                cutoff_psi_second_sq_over_psi_prime: reg.1,
            },
            outputs: vec![],
            fits: BTreeMap::new(),
            values: BTreeMap::new(),
            checks: BTreeMap::new(),
            notes: vec![],
            complete: false,
            error: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// `<root>/<kind>-<first 16 hex digits of the spec hash>`.
pub fn run_dir(spec: &ExperimentSpec, root: &Path) -> PathBuf {
    root.join(format!("{}-{}", spec.kind.name(), &spec.hash()[..16]))
}

/// Execute the experiment, writing outputs and `manifest.json` into
/// [`run_dir`]. On failure the manifest is still written, flagged
/// incomplete, and the error is returned.
pub fn run(spec: &ExperimentSpec, root: &Path, execution: Execution) -> Result<RunManifest> {
    spec.validate()?;
    let dir = run_dir(spec, root);
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new(spec);
    log::info!("{} -> {}", spec.kind.name(), dir.display());
    let outcome = match spec.kind {
        ExperimentKind::Simulate => run_simulate(spec, &dir, &mut manifest, execution),
        ExperimentKind::BackwardMsw => run_backward(spec, &dir, &mut manifest, execution),
        ExperimentKind::LocalQuantities => run_local_quantities(spec, &dir, &mut manifest, execution),
        ExperimentKind::WeinsteinAudit => run_weinstein_audit(spec, &dir, &mut manifest, execution),
        ExperimentKind::ModulationTrack => run_modulation_track(spec, &dir, &mut manifest, execution),
        ExperimentKind::CoercivitySweep => run_coercivity_sweep(spec, &dir, &mut manifest, execution),
        ExperimentKind::ConvergenceOrder => run_convergence(spec, &dir, &mut manifest),
    };
    match &outcome {
        Ok(()) => manifest.complete = true,
        Err(e) => manifest.error = Some(e.to_string()),
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    outcome.map(|_| manifest)
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_table(
    dir: &Path,
    manifest: &mut RunManifest,
    file: &str,
    description: &str,
    header: Vec<String>,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(file))?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    record_output(manifest, file, description, header);
    Ok(())
}

fn record_output(manifest: &mut RunManifest, file: &str, description: &str, columns: Vec<String>) {
    manifest.outputs.push(OutputFile {
        file: file.to_string(),
        description: description.to_string(),
        columns,
    });
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Backward run plus the integrator noise floor, measured as the summed
/// error of each soliton evolved alone under the same numerics (each is an
/// exact solution, so its error is pure discretization).
#[derive(Debug, Clone)]
pub struct BackwardAnalysis {
    /// Samples ordered from `t_final` down to `t_start`.
    pub trajectory: Trajectory,
    pub errors: Vec<ErrorSample>,
    pub floor: Vec<ErrorSample>,
}

impl BackwardAnalysis {
    pub fn compute(spec: &ExperimentSpec, execution: Execution) -> Result<Self> {
        let grid = Grid::from_spec(spec.numerics.grid_spec())?;
        let n = &spec.numerics;
        let k = &spec.knobs;
        let run = backward_construct(
            &spec.config,
            k.t_final,
            k.t_start,
            n.dt,
            &grid,
            n.stepper_options(),
            n.sample_stride,
            execution,
        )?;
        log::info!("backward run: {} samples", run.errors.len());
        let floor = if spec.config.len() == 1 {
            run.errors.clone()
        } else {
            let singles = execution
                .map(&spec.config.solitons, |s| {
                    let single = MultiSolitonConfig::new(vec![*s])?;
                    backward_construct(
                        &single,
                        k.t_final,
                        k.t_start,
                        n.dt,
                        &grid,
                        n.stepper_options(),
                        n.sample_stride,
                        Execution::Sequential,
                    )
                    .map(|r| r.errors)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            (0..run.errors.len())
                .map(|i| ErrorSample {
                    t: run.errors[i].t,
                    bold_h: singles.iter().map(|e| e[i].bold_h).sum(),
                    bold_h2: singles.iter().map(|e| e[i].bold_h2).sum(),
                })
                .collect()
        };
        Ok(BackwardAnalysis {
            trajectory: run.trajectory,
            errors: run.errors,
            floor,
        })
    }

    /// Sample times in increasing order, with the permutation into `errors`.
    fn ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.errors.len()).collect();
        idx.sort_by(|&a, &b| self.errors[a].t.total_cmp(&self.errors[b].t));
        idx
    }

    /// Exponential fits of the `H1 x L2 x L2` and `H2 x H1 x H1` errors on
    /// auto-selected windows. `None` for a single soliton.
    pub fn decay_fits(&self, spec: &ExperimentSpec) -> Result<Option<(FitResult, FitResult)>> {
        if spec.config.len() == 1 {
            return Ok(None);
        }
        let idx = self.ascending();
        let t: Vec<f64> = idx.iter().map(|&i| self.errors[i].t).collect();
        let pick = |f: fn(&ErrorSample) -> f64, s: &[ErrorSample]| -> Vec<f64> { idx.iter().map(|&i| f(&s[i])).collect() };
        let h = fit_auto(&t, &pick(|e| e.bold_h, &self.errors), Some(&pick(|e| e.bold_h, &self.floor)), &spec.knobs)?;
        let h2 = fit_auto(&t, &pick(|e| e.bold_h2, &self.errors), Some(&pick(|e| e.bold_h2, &self.floor)), &spec.knobs)?;
        Ok(Some((h, h2)))
    }
}

/// `max_t max_k |M_k(t) - M_k(t_final)|` for each cutoff width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMassStudy {
    pub widths: Vec<f64>,
    pub max_deviation: Vec<f64>,
    /// `max_deviation * L`, constant under a `C/L` law.
    pub scaled: Vec<f64>,
    /// Strictly decreasing in `L` (widths sorted ascending).
    pub monotone: bool,
    /// `series[l][k][i]`: `M_k` at sample `i` for width `l`.
    pub series: Vec<Vec<Vec<f64>>>,
    pub momentum_series: Vec<Vec<Vec<f64>>>,
}

pub fn local_mass_study(
    trajectory: &Trajectory,
    config: &MultiSolitonConfig,
    widths: &[f64],
    execution: Execution,
) -> Result<LocalMassStudy> {
    let mut widths = widths.to_vec();
    widths.sort_by(f64::total_cmp);
    let reference = trajectory
        .states
        .iter()
        .max_by(|a, b| a.t.total_cmp(&b.t))
        .ok_or_else(|| Error::Domain("empty trajectory".into()))?;
    let mut out = LocalMassStudy {
        widths: widths.clone(),
        max_deviation: vec![],
        scaled: vec![],
        monotone: true,
        series: vec![],
        momentum_series: vec![],
    };
    for &l in &widths {
        let family = CutoffFamily::new(l, config)?;
        let rows = execution
            .map(&trajectory.states, |s| -> Result<(Vec<f64>, Vec<f64>)> {
                let m = (0..config.len()).map(|k| local_mass(s, &family, k)).collect::<Result<Vec<_>>>()?;
                let p = (0..config.len()).map(|k| local_momentum(s, &family, k)).collect::<Result<Vec<_>>>()?;
                Ok((m, p))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let m0: Vec<f64> = (0..config.len()).map(|k| local_mass(reference, &family, k)).collect::<Result<_>>()?;
        let dev = rows
            .iter()
            .flat_map(|(m, _)| m.iter().zip(&m0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        out.max_deviation.push(dev);
        out.scaled.push(dev * l);
        out.series.push((0..config.len()).map(|k| rows.iter().map(|r| r.0[k]).collect()).collect());
        out.momentum_series.push((0..config.len()).map(|k| rows.iter().map(|r| r.1[k]).collect()).collect());
    }
    out.monotone = out.max_deviation.windows(2).all(|w| w[1] < w[0]);
    Ok(out)
}

/// Modified energies of the difference between each sample and the
/// multi-soliton profile at the same time.
pub fn modified_energy_series(
    trajectory: &Trajectory,
    config: &MultiSolitonConfig,
    execution: Execution,
) -> Result<Vec<ModifiedEnergies>> {
    execution
        .map(&trajectory.states, |s| {
            let r = multi_soliton(config, s.t, s.grid())?;
            let d = s.difference(&r)?;
            modified_energies(&d.u, &d.n, &d.v, &r.u)
        })
        .into_iter()
        .collect()
}

/// Check of `|G'(t)| <= C (|G|^{3/4} + 1) e^{-theta t}` on a window.
/// `C` is calibrated as the largest ratio on the earlier half of the window
/// and then tested on every sample of the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedEnergyBound {
    pub theta: f64,
    pub c: f64,
    pub calibration_points: usize,
    pub checked_points: usize,
    pub violations: usize,
    /// Largest `ratio / C` over the checked samples.
    pub worst_ratio: f64,
}

pub fn modified_energy_bound(
    t: &[f64],
    g: &[f64],
    theta: f64,
    window: [f64; 2],
) -> Result<ModifiedEnergyBound> {
    let mut idx: Vec<usize> = (0..t.len()).collect();
    idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let ts: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
    let gs: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
    let dg = derivative_series(&ts, &gs);
    let inside: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] >= window[0] && ts[i] <= window[1]).collect();
    if inside.len() < 4 {
        return Err(Error::Fit(format!("{} samples in the check window", inside.len())));
    }
    let ratio = |i: usize| dg[i].abs() / ((gs[i].abs().powf(0.75) + 1.0) * (-theta * ts[i]).exp());
    let calib = &inside[..inside.len() / 2];
    let c = calib.iter().map(|&i| ratio(i)).fold(0.0, f64::max);
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Fit("degenerate calibration of the modified-energy bound".into()));
    }
    let ratios: Vec<f64> = inside.iter().map(|&i| ratio(i) / c).collect();
    Ok(ModifiedEnergyBound {
        theta,
        c,
        calibration_points: calib.len(),
        checked_points: inside.len(),
        violations: ratios.iter().filter(|&&r| r > 1.0 + 1e-12).count(),
        worst_ratio: ratios.iter().copied().fold(0.0, f64::max),
    })
}

fn run_simulate(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    let grid = Grid::from_spec(spec.numerics.grid_spec())?;
    let k = &spec.knobs;
    let start = multi_soliton(&spec.config, k.t_start, &grid)?;
    let mut stepper = Stepper::with_execution(&grid, spec.numerics.stepper_options(), execution);
    let traj = stepper.evolve_with(&start, k.t_final, spec.numerics.dt, spec.numerics.sample_stride, |t| {
        log::debug!("t = {t:.3}")
    })?;
    let family = CutoffFamily::new(k.cutoff_widths[0], &spec.config)?;
    let reports = execution
        .map(&traj.states, |s| -> Result<FunctionalReport> {
            let mut r = FunctionalReport::evaluate(s, &spec.config, &family)?;
            r.tails = Some(tail_mass(s, k.k0)?);
            Ok(r)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let file = "functionals.csv";
    FunctionalReport::write_csv(&reports, fs::File::create(dir.join(file))?)?;
    record_output(manifest, file, "conserved, localized and Weinstein functionals per sample", FunctionalReport::csv_header(spec.config.len()));
    write_state(dir, manifest, "final_state.csv", traj.last())?;
    let (first, last) = (&reports[0], &reports[reports.len() - 1]);
    manifest.values.insert("mass_relative_drift".into(), (last.mass - first.mass).abs() / first.mass);
    manifest.values.insert("energy_drift".into(), (last.energy - first.energy).abs());
    manifest.values.insert("momentum_drift".into(), (last.momentum - first.momentum).abs());
    manifest.values.insert("t_reached".into(), traj.last().t);
    Ok(())
}

fn write_state(dir: &Path, manifest: &mut RunManifest, file: &str, s: &State) -> Result<()> {
    let g = s.grid();
    let rows = (0..g.n_points()).map(|i| {
        let u = s.u.values()[i];
        vec![fmt(g.points()[i]), fmt(u.re), fmt(u.im), fmt(s.n.values()[i]), fmt(s.v.values()[i])]
    });
    write_table(dir, manifest, file, &format!("state at t = {}", s.t), strings(&["x", "u_re", "u_im", "n", "v"]), rows)
}

/// Shared outputs of the backward-construction family: error series, decay
/// fits, localized masses and the modified-energy check.
fn backward_outputs(
    spec: &ExperimentSpec,
    dir: &Path,
    manifest: &mut RunManifest,
    execution: Execution,
    full: bool,
) -> Result<BackwardAnalysis> {
    let analysis = BackwardAnalysis::compute(spec, execution)?;
    let rows = analysis.errors.iter().zip(&analysis.floor).map(|(e, f)| {
        vec![fmt(e.t), fmt(e.bold_h), fmt(e.bold_h2), fmt(f.bold_h), fmt(f.bold_h2)]
    });
    write_table(
        dir,
        manifest,
        "errors.csv",
        "distance to the multi-soliton profile and integrator noise floor",
        strings(&["t", "err_H", "err_H2", "floor_H", "floor_H2"]),
        rows,
    )?;
    let fits = match analysis.decay_fits(spec)? {
        None => {
            manifest.notes.push(
                "single soliton: the profile is an exact solution, so the error is the integrator noise floor and no rate is fitted".into(),
            );
            None
        }
        Some((h, h2)) => {
            manifest.fits.insert("theta_hat".into(), h);
            manifest.fits.insert("theta_hat_h2".into(), h2);
            manifest.checks.insert("theta_hat_positive".into(), h.rate > 0.0 && h.r_squared > 0.99);
            manifest.checks.insert("theta_hat_h2_positive".into(), h2.rate > 0.0);
            Some((h, h2))
        }
    };

    let study = local_mass_study(&analysis.trajectory, &spec.config, &spec.knobs.cutoff_widths, execution)?;
    let kk = spec.config.len();
    let mut header = vec!["t".to_string()];
    for l in &study.widths {
        header.extend((1..=kk).map(|k| format!("M_{k}_L{l}")));
        header.extend((1..=kk).map(|k| format!("P_{k}_L{l}")));
    }
    let rows = (0..analysis.trajectory.len()).map(|i| {
        let mut r = vec![fmt(analysis.trajectory.states[i].t)];
        for (ms, ps) in study.series.iter().zip(&study.momentum_series) {
            r.extend(ms.iter().map(|s| fmt(s[i])));
            r.extend(ps.iter().map(|s| fmt(s[i])));
        }
        r
    });
    write_table(dir, manifest, "local_quantities.csv", "localized masses and momenta per cutoff width", header, rows)?;
    for (l, (d, s)) in study.widths.iter().zip(study.max_deviation.iter().zip(&study.scaled)) {
        manifest.values.insert(format!("local_mass_max_deviation_L{l}"), *d);
        manifest.values.insert(format!("local_mass_max_deviation_times_L{l}"), *s);
    }
    if kk > 1 {
        manifest.checks.insert("local_mass_deviation_decreases_in_L".into(), study.monotone);
    } else {
        manifest.notes.push("single soliton: localized masses equal the total mass".into());
    }

    if full {
        let energies = modified_energy_series(&analysis.trajectory, &spec.config, execution)?;
        let family = CutoffFamily::new(spec.knobs.cutoff_widths[0], &spec.config)?;
        let reports = execution
            .map(&analysis.trajectory.states, |s| -> Result<FunctionalReport> {
                let mut r = FunctionalReport::evaluate(s, &spec.config, &family)?;
                r.tails = Some(tail_mass(s, spec.knobs.k0)?);
                Ok(r)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let reports: Vec<FunctionalReport> = reports
            .into_iter()
            .zip(&energies)
            .map(|(mut r, e)| {
                r.modified = Some(*e);
                r
            })
            .collect();
        let file = "functionals.csv";
        FunctionalReport::write_csv(&reports, fs::File::create(dir.join(file))?)?;
        record_output(manifest, file, "functionals per sample; H and G_mod are the modified energies of the error", FunctionalReport::csv_header(kk));
        if let Some((h, _)) = fits {
            let t: Vec<f64> = analysis.errors.iter().map(|e| e.t).collect();
            let g: Vec<f64> = energies.iter().map(|e| e.g_mod).collect();
            let bound = modified_energy_bound(&t, &g, h.rate, h.t_window)?;
            manifest.values.insert("modified_energy_bound_c".into(), bound.c);
            manifest.values.insert("modified_energy_bound_worst_ratio".into(), bound.worst_ratio);
            manifest.values.insert("modified_energy_bound_violations".into(), bound.violations as f64);
            manifest.checks.insert("modified_energy_bound_holds".into(), bound.violations == 0);
        }
    }
    Ok(analysis)
}

fn run_backward(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    backward_outputs(spec, dir, manifest, execution, true).map(|_| ())
}

fn run_local_quantities(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    let analysis = backward_outputs(spec, dir, manifest, execution, false)?;
    let rows = analysis
        .trajectory
        .states
        .iter()
        .map(|s| -> Result<Vec<String>> {
            let tails = tail_mass(s, spec.knobs.k0)?;
            Ok(vec![fmt(s.t), fmt(mass(s)), fmt(tails.mass_tail), fmt(tails.energy_tail)])
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(dir, manifest, "tails.csv", "mass and energy density beyond |x| > K0", strings(&["t", "M", "mass_tail", "energy_tail"]), rows)
}

/// Pre- and post-modulation size of the linear Weinstein term for a seeded
/// perturbation of a modulated multi-soliton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationAudit {
    pub g1_before: f64,
    pub g1_after: f64,
    /// `|G1 before| / |G1 after|`.
    pub reduction: f64,
    /// Largest `|sum of parts - G| / |G|` over both expansions.
    pub decomposition_residual: f64,
    pub converged: bool,
}

/// Perturb the parameters of `config` (pulsations by up to 5%, positions and
/// phases by up to 0.05) and add a smooth localized perturbation of size
/// `amplitude` to every component. The expansion is first taken around the
/// perturbed parameters, then around the modulated ones.
pub fn perturbation_audit(
    config: &MultiSolitonConfig,
    grid: &std::sync::Arc<Grid>,
    t: f64,
    amplitude: f64,
    seed: u64,
    family: &CutoffFamily,
    options: ModulationOptions,
    execution: Execution,
) -> Result<PerturbationAudit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = ParamVector::from_config(config);
    let mut shifted = reference.clone();
    for k in 0..config.len() {
        shifted.omega[k] *= 1.0 + rng.gen_range(-0.05..0.05);
        shifted.sigma[k] += rng.gen_range(-0.05..0.05);
        shifted.gamma[k] += rng.gen_range(-0.05..0.05);
    }
    let mut state = modulated_profile(&shifted, config, t, grid)?;
    let centers: Vec<f64> = config.solitons.iter().zip(&shifted.sigma).map(|(s, sg)| s.c * t + sg).collect();
    let mut bumps = |n: usize| -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|_| {
                let k = rng.gen_range(0..centers.len());
                (centers[k] + rng.gen_range(-3.0..3.0), rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0))
            })
            .collect()
    };
    let (bu, bv, bn, bw) = (bumps(6), bumps(6), bumps(6), bumps(6));
    let eval = |b: &[(f64, f64, f64)], x: f64| -> f64 {
        b.iter().map(|(c, w, a)| a * (-((grid.wrap(x - c)) / w).powi(2)).exp()).sum::<f64>() * amplitude
    };
    state.u = &state.u + &grid.complex_from_fn(|x| Complex64::new(eval(&bu, x), eval(&bv, x)));
    state.n = &state.n + &grid.real_from_fn(|x| eval(&bn, x));
    state.v = &state.v + &grid.real_from_fn(|x| eval(&bw, x));

    let g_exact = weinstein(&state, config, family)?;
    let expand = |pi: &ParamVector| -> Result<WeinsteinParts> {
        let profile = modulated_profile(pi, config, t, grid)?;
        let eps = state.difference(&profile)?;
        weinstein_decompose(&eps, &profile, config, Some(&pi.omega), family)
    };
    let before = expand(&shifted)?;
    let m = modulate(&state, &shifted, config, options, execution)?;
    let after = expand(&m.pi)?;
    let residual = [before, after]
        .iter()
        .map(|p| (p.total() - g_exact).abs() / g_exact.abs())
        .fold(0.0, f64::max);
    Ok(PerturbationAudit {
        g1_before: before.g1,
        g1_after: after.g1,
        reduction: before.g1.abs() / after.g1.abs(),
        decomposition_residual: residual,
        converged: m.converged,
    })
}

/// Largest `|G(R_pi) - G(R) - sum_k closed form_k|` over pulsation offsets
/// `deltas`, applied with alternating signs across solitons, for the profile
/// at time `t`.
pub fn g0_drift_audit(
    config: &MultiSolitonConfig,
    grid: &std::sync::Arc<Grid>,
    t: f64,
    family: &CutoffFamily,
    deltas: &[f64],
) -> Result<f64> {
    use crate::functionals::g0_drift_closed_form;
    let reference = ParamVector::from_config(config);
    let base = weinstein(&modulated_profile(&reference, config, t, grid)?, config, family)?;
    let mut worst: f64 = 0.0;
    for &d in deltas {
        let mut pi = reference.clone();
        let mut predicted = 0.0;
        for (k, s) in config.solitons.iter().enumerate() {
            let dk = if k % 2 == 0 { d } else { -d };
            pi.omega[k] += dk;
            predicted += g0_drift_closed_form(s.omega + dk, s.omega, s.c);
        }
        let g = weinstein(&modulated_profile(&pi, config, t, grid)?, config, family)?;
        worst = worst.max((g - base - predicted).abs());
    }
    Ok(worst)
}

fn run_weinstein_audit(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    let analysis = BackwardAnalysis::compute(spec, execution)?;
    let grid = analysis.trajectory.last().grid().clone();
    let options = ModulationOptions {
        tolerance: spec.knobs.tolerance,
        ..ModulationOptions::default()
    };
    let family = CutoffFamily::new(spec.knobs.cutoff_widths[0], &spec.config)?;
    let frames = track(&analysis.trajectory, &spec.config, options, execution)?;
    let rows = analysis
        .trajectory
        .states
        .iter()
        .zip(&frames)
        .map(|(s, f)| -> Result<(f64, f64, WeinsteinParts, bool, f64)> {
            let g = weinstein(s, &spec.config, &family)?;
            let profile = modulated_profile(&f.pi, &spec.config, s.t, &grid)?;
            let eps = s.difference(&profile)?;
            let parts = weinstein_decompose(&eps, &profile, &spec.config, Some(&f.pi.omega), &family)?;
            Ok((s.t, g, parts, f.converged, f.epsilon_h_norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let g_final = rows.iter().max_by(|a, b| a.0.total_cmp(&b.0)).map(|r| r.1).unwrap_or(0.0);
    let mut worst_sum: f64 = 0.0;
    let table = rows.iter().map(|(t, g, p, conv, e)| {
        let rel = (p.total() - g).abs() / g.abs();
        worst_sum = worst_sum.max(rel);
        vec![
            fmt(*t), fmt(*g), fmt(p.g0), fmt(p.g1), fmt(p.g21), fmt(p.g22), fmt(p.g3), fmt(rel),
            fmt((g - g_final).abs()), fmt(*e), conv.to_string(),
        ]
    }).collect::<Vec<_>>();
    write_table(
        dir,
        manifest,
        "weinstein.csv",
        "Weinstein functional along the backward run, expanded around the modulated profile",
        strings(&["t", "G", "G0", "G1", "G21", "G22", "G3", "sum_relative_residual", "G_deviation", "eps_H", "converged"]),
        table,
    )?;
    manifest.values.insert("decomposition_max_relative_residual".into(), worst_sum);
    manifest.checks.insert("decomposition_sums_to_G".into(), worst_sum < 1e-9);

    if let Some((h, _)) = analysis.decay_fits(spec)? {
        manifest.fits.insert("theta_hat".into(), h);
        let inside: Vec<&(f64, f64, WeinsteinParts, bool, f64)> = rows
            .iter()
            .filter(|r| r.0 >= h.t_window[0] && r.0 <= h.t_window[1])
            .collect();
        let mut sorted = inside.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let t: Vec<f64> = sorted.iter().map(|r| r.0).collect();
        let y: Vec<f64> = sorted.iter().map(|r| (r.1 - g_final).abs()).collect();
        match fit_exponential(&t, &y) {
            Ok(f) => {
                manifest.values.insert("weinstein_deviation_rate_over_theta_hat".into(), f.rate / h.rate);
                manifest.fits.insert("weinstein_deviation".into(), f);
            }
            Err(e) => manifest.notes.push(format!("weinstein deviation fit skipped: {e}")),
        }
    }

    let t_audit = spec.knobs.t_final;
    let audit = perturbation_audit(&spec.config, &grid, t_audit, spec.knobs.perturbation, spec.seed, &family, options, execution)?;
    manifest.values.insert("perturbation_g1_before".into(), audit.g1_before);
    manifest.values.insert("perturbation_g1_after".into(), audit.g1_after);
    manifest.values.insert("perturbation_g1_reduction".into(), audit.reduction);
    manifest.values.insert("perturbation_decomposition_residual".into(), audit.decomposition_residual);
    manifest.checks.insert("modulation_reduces_g1_100x".into(), audit.converged && audit.reduction >= 100.0);
    let drift = g0_drift_audit(&spec.config, &grid, t_audit, &family, &[-0.1, -0.05, 0.05, 0.1])?;
    let separation = min_separation(&spec.config, t_audit);
    manifest.values.insert("g0_drift_separation".into(), separation);
    manifest.values.insert("g0_drift_max_error".into(), drift);
    manifest.checks.insert("g0_drift_matches_closed_form".into(), drift < 1e-6);
    Ok(())
}

/// Largest offset `d` in a fixed ladder such that starting Newton from
/// `pi + (d, -d, d, ...)` on the exact profile recovers `pi` to `1e-8`.
/// Zero when even the smallest offset fails.
pub fn modulation_basin(
    state: &State,
    config: &MultiSolitonConfig,
    options: ModulationOptions,
    execution: Execution,
) -> Result<f64> {
    let truth = ParamVector::from_config(config);
    let exact = modulated_profile(&truth, config, state.t, state.grid())?;
    let flat = truth.to_flat();
    let kk = config.len();
    let mut best = 0.0;
    for d in [1e-2f64, 3e-2, 0.1, 0.2, 0.3, 0.5, 1.0] {
        let guess: Vec<f64> = flat
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let step = if i % 2 == 0 { d } else { -d };
                // Keep omega positive.
                if i < kk { p * (1.0 + step.clamp(-0.9, 0.9)) } else { p + step }
            })
            .collect();
        let m = modulate(&exact, &ParamVector::from_flat(&guess)?, config, options, execution)?;
        let err = m.pi.to_flat().iter().zip(&flat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if m.converged && err < 1e-8 {
            best = d;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Smallest distance between soliton centers at time `t`.
pub fn min_separation(config: &MultiSolitonConfig, t: f64) -> f64 {
    let x: Vec<f64> = config.solitons.iter().map(|s| s.c * t + s.sigma).collect();
    let mut best = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            best = best.min((x[i] - x[j]).abs());
        }
    }
    best
}

fn run_modulation_track(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    let analysis = BackwardAnalysis::compute(spec, execution)?;
    let options = ModulationOptions {
        tolerance: spec.knobs.tolerance,
        ..ModulationOptions::default()
    };
    let frames = track(&analysis.trajectory, &spec.config, options, execution)?;
    let file = "track.csv";
    write_track_csv(&frames, fs::File::create(dir.join(file))?)?;
    let kk = spec.config.len();
    let mut cols = vec!["t".to_string()];
    for name in ["omega", "sigma", "gamma", "omega_dot", "sigma_dot", "gamma_dot", "gamma_excess"] {
        cols.extend((1..=kk).map(|i| format!("{name}_{i}")));
    }
    cols.extend(strings(&["eps_H", "residual_max", "iterations", "converged"]));
    record_output(manifest, file, "modulation parameters, their rates and Newton diagnostics per sample", cols);
    let converged = frames.iter().filter(|f| f.converged).count();
    manifest.values.insert("frames".into(), frames.len() as f64);
    manifest.values.insert("frames_converged".into(), converged as f64);
    let pi = ParamVector::from_config(&spec.config);
    let grid = analysis.trajectory.states[0].grid().clone();
    let d = jacobian_constants(&pi, &spec.config, spec.knobs.t_final, &grid, execution)?;
    for k in 0..kk {
        manifest.values.insert(format!("d_omega_{}", k + 1), d.d_omega[k]);
        manifest.values.insert(format!("d_sigma_{}", k + 1), d.d_sigma[k]);
        manifest.values.insert(format!("d_gamma_{}", k + 1), d.d_gamma[k]);
    }
    let basin = modulation_basin(analysis.trajectory.states.first().expect("nonempty"), &spec.config, options, execution)?;
    manifest.values.insert("basin_largest_converging_offset".into(), basin);
    manifest.notes.push(
        "basin: largest offset applied to every parameter (alternating signs) from which Newton still recovers the final-time parameters to 1e-8".into(),
    );
    let close = |x: f64, target: f64| (x - target).abs() <= 0.05 * target.abs();
    manifest.checks.insert(
        "jacobian_leading_constants".into(),
        (0..kk).all(|k| close(d.d_omega[k], 1.0) && close(d.d_sigma[k], -2.0) && close(d.d_gamma[k], 1.0)),
    );
    Ok(())
}

fn run_coercivity_sweep(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest, execution: Execution) -> Result<()> {
    let k = &spec.knobs;
    let grid = Grid::from_spec(k.coercivity_grid)?;
    let mut weights: Vec<Option<f64>> = vec![None];
    weights.extend(k.weights.iter().map(|&b| Some(b)));
    let reports: Vec<CoercivityReport> = coercivity_sweep(&k.sweep_omegas, &k.sweep_speeds, &weights, &grid, execution)?;
    let file = "coercivity.json";
    fs::write(dir.join(file), serde_json::to_string_pretty(&reports)? + "\n")?;
    record_output(manifest, file, "coercivity reports per (omega, c, B)", strings(&["omega", "c", "B", "lambda_min_unconstrained", "lambda_min_constrained", "grid", "form"]));
    let rows = reports.iter().map(|r| {
        vec![
            fmt(r.omega), fmt(r.c), r.b.map(fmt).unwrap_or_default(), fmt(r.lambda_min_unconstrained),
            fmt(r.lambda_min_constrained), r.form.clone(),
        ]
    });
    write_table(dir, manifest, "coercivity.csv", "constrained and unconstrained minima", strings(&["omega", "c", "B", "lambda_min_unconstrained", "lambda_min_constrained", "form"]), rows)?;
    let nls = nls_coercivity(&grid)?;
    manifest.values.insert("nls_lambda_min_constrained".into(), nls.lambda_min_constrained);
    manifest.values.insert("nls_lambda_min_unconstrained".into(), nls.lambda_min_unconstrained);
    let min = reports.iter().map(|r| r.lambda_min_constrained).fold(f64::INFINITY, f64::min);
    manifest.values.insert("min_lambda_min_constrained".into(), min);
    manifest.checks.insert("all_constrained_minima_positive".into(), min > 0.0 && nls.lambda_min_constrained > 0.0);
    manifest.notes.push("minima are taken over the unit sphere of the squared H1 x L2 x L2 norm; B-weighted forms use the B-weighted norm".into());
    Ok(())
}

/// Error of the first soliton evolved from its exact profile over
/// `convergence_time`, for each step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error_u_l2: f64,
    pub error_h: f64,
}

pub fn convergence_rows(spec: &ExperimentSpec, execution: Execution) -> Result<Vec<ConvergenceRow>> {
    let grid = Grid::from_spec(spec.numerics.grid_spec())?;
    let params = spec.config.solitons[0];
    let t_end = spec.knobs.convergence_time;
    let start = traveling_wave(&params, 0.0, &grid)?;
    let exact = traveling_wave(&params, t_end, &grid)?;
    spec.knobs
        .convergence_dts
        .iter()
        .map(|&dt| {
            let mut stepper = Stepper::with_execution(&grid, spec.numerics.stepper_options(), execution);
            let traj = stepper.evolve(&start, t_end, dt, usize::MAX)?;
            let end = traj.last();
            let d = end.difference(&exact)?;
            Ok(ConvergenceRow {
                dt,
                error_u_l2: d.u.norm_sq().sqrt(),
                error_h: d.bold_h_norm()?,
            })
        })
        .collect()
}

fn run_convergence(spec: &ExperimentSpec, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let rows = convergence_rows(spec, Execution::Sequential)?;
    let mut ok = true;
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ratio = if i > 0 { rows[i - 1].error_u_l2 / r.error_u_l2 } else { f64::NAN };
            let step = if i > 0 { rows[i - 1].dt / r.dt } else { f64::NAN };
            if i > 0 {
                let order = ratio.ln() / step.ln();
                manifest.values.insert(format!("observed_order_dt{}", r.dt), order);
                if (step - 2.0).abs() < 1e-12 {
                    ok &= (3.5..=4.5).contains(&ratio);
                }
            }
            vec![fmt(r.dt), fmt(r.error_u_l2), fmt(r.error_h), fmt(ratio)]
        })
        .collect();
    write_table(dir, manifest, "convergence.csv", "error of a traveling wave at convergence_time per step size", strings(&["dt", "error_u_L2", "error_H", "ratio_to_previous"]), table)?;
    manifest.checks.insert("halving_ratio_in_3p5_4p5".into(), ok);
    Ok(())
}
