// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Scenario registry and experiment execution.
//!
//! An [`ExperimentConfig`] is one JSON document. Energies are in eV and times
//! in fs, and the document must say so in its `units` header. Every run
//! writes its tables plus `manifest.json`, which embeds the resolved config;
//! feeding a manifest back to [`load_config`] reproduces the run.
//!
//! CSV tables always put the sweep variable in the first column.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    integrate_driven, max_photon_population, period_time_scan, pulse_grid_scan, quench_protocol,
    DriveKind, DriveWaveform, DEFAULT_DRIVE_AMPLITUDE,
};
use crate::ensemble::{
    apply_disorder, build_comb, burn_holes, sample_random_ensemble, spectral_gaps, Cavity,
    CombSpec, DisorderSpec, Ensemble, HoleSpec, HoleWindow, RandomEnsembleSpec, SpectralGap,
    REFERENCE_GAMMA,
};
use crate::error::{Error, Result};
use crate::linear_response::{
    transmission_at, transmission_sweep_with, uniform_grid, SpectrumResult, DEFAULT_PROMINENCE,
    DEFAULT_SWEEP_MAX, DEFAULT_SWEEP_MIN, DEFAULT_SWEEP_POINTS,
};
use crate::rng::Stream;
use crate::scan::{Axis, ScanMetadata, ScanResult};
use crate::singlex::{
    build_operator, cavity_sweep_spectrum, dark_splitting_frequency, dominant_frequency,
    eigensolve, evolve_fock, fit_envelope_decay, identify_dark_states, DarkState, EigenResult,
    OperatorVariant, TrajectoryResult, DEFAULT_DT, DEFAULT_FIT_START,
};
use crate::units::period_fs;

pub const ENERGY_UNIT: &str = "eV";
pub const TIME_UNIT: &str = "fs";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Dense ensembles above this size never go through a dense eigensolve.
const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub energy: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            energy: ENERGY_UNIT.into(),
            time: TIME_UNIT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSource {
    Comb(CombSpec),
    Random(RandomEnsembleSpec),
}

impl EnsembleSource {
    pub fn n(&self) -> usize {
        match self {
            EnsembleSource::Comb(c) => c.n,
            EnsembleSource::Random(r) => r.n,
        }
    }

    pub fn omega_e(&self) -> f64 {
        match self {
            EnsembleSource::Comb(c) => c.omega_e,
            EnsembleSource::Random(r) => r.omega_e,
        }
    }

    fn with_n(&self, n: usize) -> Self {
        match *self {
            EnsembleSource::Comb(c) => EnsembleSource::Comb(CombSpec { n, ..c }),
            EnsembleSource::Random(r) => EnsembleSource::Random(RandomEnsembleSpec { n, ..r }),
        }
    }
}

/// `points` uniform samples on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridRange {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            vec![self.min]
        } else {
            uniform_grid(self.min, self.max, self.points)
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.points == 0 || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::invalid(
                field,
                "need finite bounds and at least one point",
            ));
        }
        if self.points > 1 && !(self.min < self.max) {
            return Err(Error::invalid(
                field,
                format!("min {} must be below max {}", self.min, self.max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    /// Cavity energies for eigen-spectra (eV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_a: Option<GridRange>,
    /// Probe energies for pulse scans (eV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<GridRange>,
    /// Pulse periods (fs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<GridRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_values: Vec<usize>,
    /// Hole centers `(i_L, i_R)` on the comb; each hole is three teeth wide.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hole_pairs: Vec<[usize; 2]>,
    /// Number of disorder realizations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_sweep_min")]
    pub sweep_min: f64,
    #[serde(default = "default_sweep_max")]
    pub sweep_max: f64,
    #[serde(default = "default_sweep_points")]
    pub sweep_points: usize,
    #[serde(default = "default_prominence")]
    pub prominence: f64,
    /// Start of envelope fits and frequency analysis (fs).
    #[serde(default = "default_fit_start")]
    pub fit_start: f64,
}

fn default_sweep_min() -> f64 {
    DEFAULT_SWEEP_MIN
}
fn default_sweep_max() -> f64 {
    DEFAULT_SWEEP_MAX
}
fn default_sweep_points() -> usize {
    DEFAULT_SWEEP_POINTS
}
fn default_prominence() -> f64 {
    DEFAULT_PROMINENCE
}
fn default_fit_start() -> f64 {
    DEFAULT_FIT_START
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_max: 400.0,
            sweep_min: DEFAULT_SWEEP_MIN,
            sweep_max: DEFAULT_SWEEP_MAX,
            sweep_points: DEFAULT_SWEEP_POINTS,
            prominence: DEFAULT_PROMINENCE,
            fit_start: DEFAULT_FIT_START,
        }
    }
}

impl Numerics {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(
                "numerics.dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::invalid("numerics.t_max", "must be finite and >= dt"));
        }
        if !(self.sweep_min < self.sweep_max) {
            return Err(Error::invalid(
                "numerics.sweep_min",
                "must be below sweep_max",
            ));
        }
        if self.sweep_points < 3 {
            return Err(Error::invalid(
                "numerics.sweep_points",
                "need at least 3 points",
            ));
        }
        if !(self.prominence >= 0.0) {
            return Err(Error::invalid("numerics.prominence", "must be >= 0"));
        }
        if !(self.fit_start >= 0.0) {
            return Err(Error::invalid("numerics.fit_start", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub units: Units,
    pub scenario: String,
    pub ensemble: EnsembleSource,
    pub cavity: Cavity,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holes: Option<HoleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveWaveform>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub numerics: Numerics,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The master seed overrides the seeds of the random sub-specs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let EnsembleSource::Random(r) = &mut c.ensemble {
            r.seed = c.seed;
        }
        if let Some(d) = &mut c.disorder {
            d.seed = c.seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.energy != ENERGY_UNIT || self.units.time != TIME_UNIT {
            return Err(Error::invalid(
                "units",
                format!(
                    "expected energy `{ENERGY_UNIT}` and time `{TIME_UNIT}`, got `{}` / `{}`",
                    self.units.energy, self.units.time
                ),
            ));
        }
        let info = find_scenario(&self.scenario)?;
        self.cavity.validate()?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be finite and >= 0, got {}", self.gamma),
            ));
        }
        match &self.ensemble {
            EnsembleSource::Comb(c) => c.validate()?,
            EnsembleSource::Random(r) => r.validate()?,
        }
        if let Some(h) = &self.holes {
            h.validate(self.ensemble.n())?;
        }
        if let Some(d) = &self.disorder {
            if !matches!(self.ensemble, EnsembleSource::Comb(_)) {
                return Err(Error::invalid(
                    "disorder",
                    "disorder applies to comb ensembles only",
                ));
            }
            d.validate()?;
        }
        if let Some(w) = &self.drive {
            w.validate()?;
        }
        self.numerics.validate()?;
        for (name, g) in [
            ("grids.omega_a", &self.grids.omega_a),
            ("grids.probe", &self.grids.probe),
            ("grids.period", &self.grids.period),
        ] {
            if let Some(g) = g {
                g.validate(name)?;
            }
        }
        if self
            .grids
            .gammas
            .iter()
            .any(|g| !(*g >= 0.0 && g.is_finite()))
        {
            return Err(Error::invalid(
                "grids.gammas",
                "every value must be finite and >= 0",
            ));
        }
        if self.grids.n_values.contains(&0) {
            return Err(Error::invalid("grids.n_values", "every value must be >= 1"));
        }
        let n = self.ensemble.n();
        for [l, r] in &self.grids.hole_pairs {
            if *l == 0 || *r == 0 || *l > n || *r > n {
                return Err(Error::invalid(
                    "grids.hole_pairs",
                    format!("pair ({l}, {r}) outside [1, {n}]"),
                ));
            }
        }
        (info.requires)(self)
    }

    fn need<'a, T>(&self, v: &'a Option<T>, field: &str) -> Result<&'a T> {
        v.as_ref()
            .ok_or_else(|| Error::invalid(field, format!("required by scenario {}", self.scenario)))
    }

    fn drive(&self) -> Result<DriveWaveform> {
        self.need(&self.drive, "drive").copied()
    }

    fn sweep(&self, e: &Ensemble) -> Result<SpectrumResult> {
        let n = &self.numerics;
        transmission_sweep_with(
            e,
            n.sweep_min,
            n.sweep_max,
            n.sweep_points,
            true,
            n.prominence,
        )
    }
}

/// Reads a config, or the config embedded in a run manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = match v.get("config") {
        Some(inner) if v.get("files").is_some() => serde_json::from_value(inner.clone())?,
        _ => serde_json::from_value(v)?,
    };
    Ok(cfg)
}

/// One registered scenario.
#[derive(Clone)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Desk-scale wall-clock budget (s).
    pub budget_s: f64,
    default: fn() -> ExperimentConfig,
    requires: fn(&ExperimentConfig) -> Result<()>,
    run: fn(&ExperimentConfig, &mut Outputs) -> Result<()>,
}

impl ScenarioInfo {
    pub fn default_config(&self) -> ExperimentConfig {
        (self.default)()
    }

    /// `"name: summary"`.
    pub fn line(&self) -> String {
        format!("{}: {}", self.name, self.summary)
    }
}

impl std::fmt::Debug for ScenarioInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioInfo")
            .field("name", &self.name)
            .field("summary", &self.summary)
            .finish()
    }
}

pub fn scenario_list() -> Vec<ScenarioInfo> {
    fn s(
        name: &'static str,
        summary: &'static str,
        budget_s: f64,
        default: fn() -> ExperimentConfig,
        requires: fn(&ExperimentConfig) -> Result<()>,
        run: fn(&ExperimentConfig, &mut Outputs) -> Result<()>,
    ) -> ScenarioInfo {
        ScenarioInfo {
            name,
            summary,
            budget_s,
            default,
            requires,
            run,
        }
    }
    vec![
        s(
            "fig1c",
            "eigen-spectrum versus cavity energy",
            30.0,
            fig1c_default,
            fig1c_requires,
            run_fig1c,
        ),
        s(
            "fig2a",
            "transmission before and after hole burning",
            5.0,
            fig2a_default,
            no_requirements,
            run_fig2a,
        ),
        s(
            "fig2b",
            "Rabi oscillation from a one-photon Fock state",
            10.0,
            fig2b_default,
            no_requirements,
            run_fig2b,
        ),
        s(
            "fig2c",
            "transmission versus hole position",
            10.0,
            fig2c_default,
            pairs_requires,
            run_fig2c,
        ),
        s(
            "fig2d",
            "tunable Rabi frequency",
            30.0,
            fig2d_default,
            pairs_requires,
            run_fig2d,
        ),
        s(
            "fig3a",
            "quench after constant drive",
            30.0,
            fig3a_default,
            drive_requires,
            run_fig3a,
        ),
        s(
            "fig3b",
            "pulse grid scan",
            600.0,
            fig3b_default,
            fig3b_requires,
            run_fig3b,
        ),
        s(
            "fig3c",
            "pulse train versus constant drive",
            60.0,
            fig3c_default,
            pulse_requires,
            run_fig3c,
        ),
        s(
            "fig3d",
            "period-time contour of pulsed driving",
            120.0,
            fig3d_default,
            fig3d_requires,
            run_fig3d,
        ),
        s(
            "fig4a",
            "hole burning on a disordered comb",
            60.0,
            fig4a_default,
            fig4a_requires,
            run_fig4a,
        ),
        s(
            "fig4b",
            "hole burning on a Cauchy-sampled dense ensemble",
            30.0,
            fig4b_default,
            no_requirements,
            run_fig4b,
        ),
        s(
            "fig4c",
            "hole contrast versus emitter number",
            120.0,
            fig4c_default,
            fig4c_requires,
            run_fig4c,
        ),
        s(
            "fig4d",
            "hole contrast versus emitter linewidth",
            120.0,
            fig4d_default,
            fig4d_requires,
            run_fig4d,
        ),
    ]
}

pub fn find_scenario(name: &str) -> Result<ScenarioInfo> {
    scenario_list()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<FileRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Data files in write order (the manifest excluded).
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Collects written files for the manifest.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Validates, executes and records one scenario.
///
/// Validation errors are returned as they are; anything failing afterwards
/// is wrapped with the scenario name.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let info = find_scenario(&cfg.scenario)?;
    let wrap = |e: Error| Error::Scenario {
        scenario: cfg.scenario.clone(),
        source: Box::new(e),
    };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| wrap(e.into()))?;
    let mut out = Outputs {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    log::info!("running {} into {}", cfg.scenario, cfg.output_dir.display());
    (info.run)(&cfg, &mut out).map_err(wrap)?;

    let files = out
        .files
        .iter()
        .map(|p| {
            Ok(FileRecord {
                path: p
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let manifest = Manifest {
        tool: "shb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        files,
    };
    let mpath = cfg.output_dir.join(MANIFEST_FILE);
    std::fs::write(
        &mpath,
        serde_json::to_string_pretty(&manifest).map_err(|e| wrap(e.into()))? + "\n",
    )
    .map_err(|e| wrap(e.into()))?;
    Ok(RunOutput {
        dir: cfg.output_dir.clone(),
        files: out.files,
        manifest: mpath,
    })
}

/// Ensemble before and after burning (disorder, if any, applied first).
pub fn build_ensembles(cfg: &ExperimentConfig) -> Result<(Ensemble, Ensemble)> {
    let original = match &cfg.ensemble {
        EnsembleSource::Comb(c) => {
            let e = build_comb(c, cfg.gamma, cfg.cavity)?;
            match &cfg.disorder {
                Some(d) => apply_disorder(&e, d, c)?,
                None => e,
            }
        }
        EnsembleSource::Random(r) => sample_random_ensemble(r, cfg.gamma, cfg.cavity)?,
    };
    let burned = match &cfg.holes {
        Some(h) => burn_holes(&original, h)?,
        None => original.clone(),
    };
    Ok((original, burned))
}

/// Mean over spectral gaps of the largest transmission sampled inside the
/// gap, divided by the transmission at the ensemble center.
///
/// Heights are re-evaluated unnormalized, so the ratio does not depend on
/// whether `spectrum` was normalized.
pub fn hole_contrast(
    spectrum: &SpectrumResult,
    burned: &Ensemble,
    gaps: &[SpectralGap],
    omega_e: f64,
) -> Result<f64> {
    if gaps.is_empty() {
        return Err(Error::Fit("no spectral gaps to measure".into()));
    }
    let background = transmission_at(burned, omega_e)?;
    let mut total = 0.0;
    for gap in gaps {
        let mut peak = f64::NAN;
        for &w in spectrum.omegas.iter().filter(|w| gap.contains(**w)) {
            peak = peak.max(transmission_at(burned, w)?);
        }
        if peak.is_nan() {
            return Err(Error::Fit(format!(
                "gap ({}, {}) holds no sweep point",
                gap.lo, gap.hi
            )));
        }
        total += peak / background;
    }
    Ok(total / gaps.len() as f64)
}

/// Per-value burned spectra and hole contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastScan {
    pub scan: ScanResult,
    pub spectra: Vec<SpectrumResult>,
}

fn contrast_scan(
    base: &ExperimentConfig,
    axis: Axis,
    configs: Vec<ExperimentConfig>,
) -> Result<ContrastScan> {
    let mut spectra = Vec::with_capacity(configs.len());
    let mut values = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let (original, burned) = build_ensembles(cfg)?;
        let s = cfg.sweep(&burned)?;
        let gaps = spectral_gaps(&original, &burned);
        values.push(hole_contrast(&s, &burned, &gaps, cfg.ensemble.omega_e())?);
        spectra.push(s);
    }
    let scan = ScanResult::new(
        vec![axis],
        values,
        ScanMetadata {
            ensemble_digest: String::new(),
            seed: Some(base.seed),
            dt: None,
            t_max: None,
            observable: "hole_contrast".into(),
        },
    )?;
    Ok(ContrastScan { scan, spectra })
}

/// Hole contrast of the burned ensemble for each emitter linewidth.
pub fn gamma_scan(base: &ExperimentConfig, gammas: &[f64]) -> Result<ContrastScan> {
    if gammas.is_empty() {
        return Err(Error::invalid("grids.gammas", "list is empty"));
    }
    let base = base.resolved();
    let configs = gammas
        .iter()
        .map(|&g| ExperimentConfig {
            gamma: g,
            ..base.clone()
        })
        .collect();
    contrast_scan(&base, Axis::new("gamma", "ev", gammas.to_vec()), configs)
}

/// Hole contrast of the burned ensemble for each emitter number.
pub fn n_scan(base: &ExperimentConfig, ns: &[usize]) -> Result<ContrastScan> {
    if ns.is_empty() {
        return Err(Error::invalid("grids.n_values", "list is empty"));
    }
    let base = base.resolved();
    let configs = ns
        .iter()
        .map(|&n| ExperimentConfig {
            ensemble: base.ensemble.with_n(n),
            ..base.clone()
        })
        .collect();
    contrast_scan(
        &base,
        Axis::new("n", "count", ns.iter().map(|&n| n as f64).collect()),
        configs,
    )
}

// ---- shared writers -------------------------------------------------------

/// `omega_ev` followed by one column per spectrum.
fn write_spectra(path: &Path, names: &[String], spectra: &[&SpectrumResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["omega_ev".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let n = spectra.first().map_or(0, |s| s.omegas.len());
    for k in 0..n {
        let mut row = vec![format!("{:.10}", spectra[0].omegas[k])];
        row.extend(spectra.iter().map(|s| format!("{:.12e}", s.values[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_eigen_sweep(path: &Path, grid: &[f64], results: &[EigenResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega_a_ev", "re_ev", "im_ev", "photon_weight"])?;
    for (wa, r) in grid.iter().zip(results) {
        for (l, p) in r.eigenvalues.iter().zip(&r.photon_weights) {
            w.write_record([
                format!("{wa:.10}"),
                format!("{:.12e}", l.re),
                format!("{:.12e}", l.im),
                format!("{p:.12e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn pair_name(p: &[usize; 2]) -> String {
    format!("holes_{}_{}", p[0], p[1])
}

fn pair_holes(cfg: &ExperimentConfig, p: &[usize; 2]) -> HoleSpec {
    HoleSpec::index_pair(p[0], p[1], 1, cfg.ensemble.n())
}

#[derive(Debug, Clone, Serialize)]
struct DarkSummary {
    re_ev: f64,
    im_ev: f64,
    decay_rate_ev: f64,
    photon_weight: f64,
}

fn dark_summary(d: &[DarkState]) -> Vec<DarkSummary> {
    d.iter()
        .map(|s| DarkSummary {
            re_ev: s.eigenvalue.re,
            im_ev: s.eigenvalue.im,
            decay_rate_ev: 2.0 * s.eigenvalue.im.abs(),
            photon_weight: s.photon_weight,
        })
        .collect()
}

fn dark_states(original: &Ensemble, burned: &Ensemble) -> Result<Vec<DarkState>> {
    let eig = eigensolve(&build_operator(burned))?;
    Ok(identify_dark_states(&eig, &spectral_gaps(original, burned)))
}

// ---- defaults --------------------------------------------------------------

fn comb_config(scenario: &str) -> ExperimentConfig {
    ExperimentConfig {
        units: Units::default(),
        scenario: scenario.into(),
        ensemble: EnsembleSource::Comb(CombSpec::default()),
        cavity: Cavity::default(),
        gamma: REFERENCE_GAMMA,
        holes: Some(HoleSpec::reference()),
        disorder: None,
        drive: None,
        grids: Grids::default(),
        numerics: Numerics::default(),
        seed: 2019,
        output_dir: PathBuf::from(format!("out/{scenario}")),
    }
}

fn dense_config(scenario: &str) -> ExperimentConfig {
    ExperimentConfig {
        ensemble: EnsembleSource::Random(RandomEnsembleSpec::default()),
        holes: Some(HoleSpec::ByWindow {
            windows: vec![
                HoleWindow {
                    center: 1.9,
                    width: 0.033,
                },
                HoleWindow {
                    center: 2.1,
                    width: 0.033,
                },
            ],
        }),
        ..comb_config(scenario)
    }
}

fn fig1c_default() -> ExperimentConfig {
    let mut c = comb_config("fig1c");
    c.grids.omega_a = Some(GridRange::new(1.8, 2.2, 81));
    c
}

fn fig2a_default() -> ExperimentConfig {
    comb_config("fig2a")
}

fn fig2b_default() -> ExperimentConfig {
    let mut c = comb_config("fig2b");
    c.numerics.t_max = 400.0;
    c
}

fn fig2c_default() -> ExperimentConfig {
    let mut c = comb_config("fig2c");
    c.grids.hole_pairs = vec![[10, 41], [13, 38], [16, 35], [19, 32]];
    c
}

fn fig2d_default() -> ExperimentConfig {
    let mut c = comb_config("fig2d");
    c.grids.hole_pairs = vec![[13, 38], [19, 32]];
    c
}

fn fig3a_default() -> ExperimentConfig {
    let mut c = comb_config("fig3a");
    c.drive = Some(DriveWaveform::constant(DEFAULT_DRIVE_AMPLITUDE, 2.0).with_t_off(300.0));
    c.numerics.dt = 0.02;
    c.numerics.t_max = 500.0;
    c
}

fn fig3b_default() -> ExperimentConfig {
    let mut c = comb_config("fig3b");
    c.drive = Some(DriveWaveform::pulse_train(
        DEFAULT_DRIVE_AMPLITUDE,
        2.0,
        42.0,
    ));
    c.grids.probe = Some(GridRange::new(1.9, 2.1, 21));
    c.grids.period = Some(GridRange::new(30.0, 55.0, 26));
    c.numerics.dt = 0.1;
    c.numerics.t_max = 400.0;
    c
}

fn fig3c_default() -> ExperimentConfig {
    let mut c = comb_config("fig3c");
    c.drive =
        Some(DriveWaveform::pulse_train(DEFAULT_DRIVE_AMPLITUDE, 2.0, 42.0).with_t_off(300.0));
    c.numerics.dt = 0.02;
    c.numerics.t_max = 700.0;
    c
}

fn fig3d_default() -> ExperimentConfig {
    let mut c = comb_config("fig3d");
    c.drive =
        Some(DriveWaveform::pulse_train(DEFAULT_DRIVE_AMPLITUDE, 2.0, 42.0).with_t_off(300.0));
    c.grids.period = Some(GridRange::new(35.0, 45.0, 11));
    c.numerics.dt = 0.1;
    c.numerics.t_max = 700.0;
    c
}

fn fig4a_default() -> ExperimentConfig {
    let mut c = comb_config("fig4a");
    c.disorder = Some(DisorderSpec {
        r: 0.5,
        seed: c.seed,
    });
    c.grids.realizations = Some(20);
    c
}

fn fig4b_default() -> ExperimentConfig {
    dense_config("fig4b")
}

fn fig4c_default() -> ExperimentConfig {
    let mut c = dense_config("fig4c");
    c.grids.n_values = vec![2000, 4000, 6000];
    c
}

fn fig4d_default() -> ExperimentConfig {
    let mut c = dense_config("fig4d");
    c.grids.gammas = vec![0.01, 0.03, 0.05];
    c
}

// ---- requirements ----------------------------------------------------------

fn no_requirements(_: &ExperimentConfig) -> Result<()> {
    Ok(())
}

fn comb_only(c: &ExperimentConfig) -> Result<()> {
    match c.ensemble {
        EnsembleSource::Comb(_) => Ok(()),
        _ => Err(Error::invalid(
            "ensemble",
            format!("scenario {} needs a comb", c.scenario),
        )),
    }
}

fn fig1c_requires(c: &ExperimentConfig) -> Result<()> {
    c.need(&c.grids.omega_a, "grids.omega_a")?;
    if c.ensemble.n() > DENSE_EIGEN_LIMIT {
        return Err(Error::invalid(
            "ensemble.n",
            format!("eigen-spectra are limited to {DENSE_EIGEN_LIMIT} emitters"),
        ));
    }
    Ok(())
}

fn pairs_requires(c: &ExperimentConfig) -> Result<()> {
    comb_only(c)?;
    if c.grids.hole_pairs.is_empty() {
        return Err(Error::invalid(
            "grids.hole_pairs",
            format!("required by scenario {}", c.scenario),
        ));
    }
    Ok(())
}

fn drive_requires(c: &ExperimentConfig) -> Result<()> {
    let w = c.drive()?;
    if w.kind != DriveKind::Constant {
        return Err(Error::invalid(
            "drive.kind",
            "this scenario uses a constant drive",
        ));
    }
    quench_requires(c, &w)
}

fn quench_requires(c: &ExperimentConfig, w: &DriveWaveform) -> Result<()> {
    match w.t_off {
        Some(t) if t < c.numerics.t_max => Ok(()),
        _ => Err(Error::invalid(
            "drive.t_off",
            "needs a switch-off time before numerics.t_max",
        )),
    }
}

fn pulse_requires(c: &ExperimentConfig) -> Result<()> {
    let w = c.drive()?;
    if w.kind != DriveKind::PulseTrain {
        return Err(Error::invalid(
            "drive.kind",
            "this scenario uses a pulse train",
        ));
    }
    quench_requires(c, &w)
}

fn fig3b_requires(c: &ExperimentConfig) -> Result<()> {
    c.drive()?;
    c.need(&c.grids.probe, "grids.probe")?;
    c.need(&c.grids.period, "grids.period")?;
    Ok(())
}

fn fig3d_requires(c: &ExperimentConfig) -> Result<()> {
    c.drive()?;
    c.need(&c.grids.period, "grids.period")?;
    Ok(())
}

fn fig4a_requires(c: &ExperimentConfig) -> Result<()> {
    comb_only(c)?;
    c.need(&c.disorder, "disorder")?;
    match c.grids.realizations {
        Some(n) if n > 0 => Ok(()),
        _ => Err(Error::invalid(
            "grids.realizations",
            "need at least one realization",
        )),
    }
}

fn fig4c_requires(c: &ExperimentConfig) -> Result<()> {
    c.need(&c.holes, "holes")?;
    if c.grids.n_values.is_empty() {
        return Err(Error::invalid(
            "grids.n_values",
            "required by scenario fig4c",
        ));
    }
    Ok(())
}

fn fig4d_requires(c: &ExperimentConfig) -> Result<()> {
    c.need(&c.holes, "holes")?;
    if c.grids.gammas.is_empty() {
        return Err(Error::invalid("grids.gammas", "required by scenario fig4d"));
    }
    Ok(())
}

// ---- pipelines -------------------------------------------------------------

fn run_fig1c(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (_, burned) = build_ensembles(cfg)?;
    let grid = cfg.need(&cfg.grids.omega_a, "grids.omega_a")?.values();
    let diss = cavity_sweep_spectrum(&burned, &grid, OperatorVariant::Dissipative)?;
    write_eigen_sweep(&out.path("fig1c_dissipative.csv"), &grid, &diss)?;
    let herm = cavity_sweep_spectrum(&burned, &grid, OperatorVariant::Hermitian)?;
    write_eigen_sweep(&out.path("fig1c_hermitian.csv"), &grid, &herm)?;
    Ok(())
}

fn run_fig2a(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, burned) = build_ensembles(cfg)?;
    let before = cfg.sweep(&original)?;
    let after = cfg.sweep(&burned)?;
    before.write_csv(&out.path("fig2a_unburned.csv"))?;
    after.write_csv(&out.path("fig2a_burned.csv"))?;
    out.json(
        "fig2a_peaks.json",
        &serde_json::json!({ "unburned": before.peaks, "burned": after.peaks }),
    )
}

fn run_fig2b(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, burned) = build_ensembles(cfg)?;
    let n = &cfg.numerics;
    let mut rates = Vec::new();
    for (name, e) in [("unburned", &original), ("burned", &burned)] {
        let traj = evolve_fock(e, n.t_max, n.dt)?;
        traj.write_csv(&out.path(&format!("fig2b_{name}.csv")))?;
        rates.push(envelope_rate(&traj, n.fit_start, name));
    }
    let dark = dark_states(&original, &burned)?;
    out.json(
        "fig2b_summary.json",
        &serde_json::json!({
            "fit_start_fs": n.fit_start,
            "envelope_rate_unburned_ev": rates[0],
            "envelope_rate_burned_ev": rates[1],
            "dark_states": dark_summary(&dark),
        }),
    )
}

/// Envelope fit, or `None` when the trajectory has too few maxima.
fn envelope_rate(traj: &TrajectoryResult, t_start: f64, label: &str) -> Option<f64> {
    match fit_envelope_decay(traj, t_start) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{label}: {e}");
            None
        }
    }
}

fn run_fig2c(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, _) = build_ensembles(cfg)?;
    let mut spectra = Vec::new();
    for p in &cfg.grids.hole_pairs {
        spectra.push(cfg.sweep(&burn_holes(&original, &pair_holes(cfg, p))?)?);
    }
    let names: Vec<String> = cfg.grids.hole_pairs.iter().map(pair_name).collect();
    write_spectra(
        &out.path("fig2c_spectra.csv"),
        &names,
        &spectra.iter().collect::<Vec<_>>(),
    )?;
    let peaks: serde_json::Map<String, serde_json::Value> = names
        .iter()
        .zip(&spectra)
        .map(|(n, s)| Ok((n.clone(), serde_json::to_value(&s.peaks)?)))
        .collect::<Result<_>>()?;
    out.json("fig2c_peaks.json", &peaks)
}

fn run_fig2d(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, _) = build_ensembles(cfg)?;
    let n = &cfg.numerics;
    let mut rows = Vec::new();
    for p in &cfg.grids.hole_pairs {
        let burned = burn_holes(&original, &pair_holes(cfg, p))?;
        let traj = evolve_fock(&burned, n.t_max, n.dt)?;
        traj.write_csv(&out.path(&format!("fig2d_{}.csv", pair_name(p))))?;
        let dft = dominant_frequency(&traj, n.fit_start)?;
        let dark = dark_states(&original, &burned)?;
        let split = dark_splitting_frequency(&dark)?;
        rows.push(serde_json::json!({
            "holes": p,
            "dft_frequency_rad_fs": dft,
            "dark_splitting_rad_fs": split,
            "relative_difference": (dft - split).abs() / split,
        }));
    }
    out.json("fig2d_summary.json", &rows)
}

fn run_fig3a(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, burned) = build_ensembles(cfg)?;
    let w = cfg.drive()?;
    let n = &cfg.numerics;
    let mut offs = serde_json::Map::new();
    for (name, e) in [("unburned", &original), ("burned", &burned)] {
        let traj = quench_protocol(e, &w, n.t_max, n.dt)?;
        traj.write_csv(&out.path(&format!("fig3a_{name}.csv")))?;
        let t_off = traj.switch_off_index.map(|k| traj.times[k]);
        offs.insert(name.into(), serde_json::json!({ "switch_off_fs": t_off }));
    }
    out.json("fig3a_summary.json", &offs)
}

/// Largest constant-drive population over the probe grid within `t_max`.
fn constant_drive_peak(
    e: &Ensemble,
    template: &DriveWaveform,
    probes: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<f64> {
    let best = probes
        .par_iter()
        .map(|&p| {
            let w = DriveWaveform {
                kind: DriveKind::Constant,
                probe_omega: p,
                t_off: None,
                ..*template
            };
            integrate_driven(e, &w, t_max, dt).map(|t| max_photon_population(&t))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(best.into_iter().fold(0.0, f64::max))
}

fn run_fig3b(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (_, burned) = build_ensembles(cfg)?;
    let w = cfg.drive()?;
    let n = &cfg.numerics;
    let probes = cfg.need(&cfg.grids.probe, "grids.probe")?.values();
    let periods = cfg.need(&cfg.grids.period, "grids.period")?.values();
    let mut scan = pulse_grid_scan(&burned, &w, &probes, &periods, n.t_max, n.dt)?;
    scan.metadata.seed = Some(cfg.seed);
    scan.write_csv(&out.path("fig3b_scan.csv"))?;
    scan.write_json(&out.path("fig3b_scan.json"))?;
    let at_probe = constant_drive_peak(&burned, &w, &scan.argmax.coords[..1], n.t_max, n.dt)?;
    let over_grid = constant_drive_peak(&burned, &w, &probes, n.t_max, n.dt)?;
    out.json(
        "fig3b_summary.json",
        &serde_json::json!({
            "argmax_omega_ev": scan.argmax.coords[0],
            "argmax_period_fs": scan.argmax.coords[1],
            "max_pulsed_photon": scan.argmax.value,
            "max_constant_photon_at_argmax_probe": at_probe,
            "max_constant_photon_over_probe_grid": over_grid,
            "pulsed_over_constant": scan.argmax.value / at_probe,
            "rabi_period_fs": period_fs(burned.collective_coupling()),
            "unburned_rabi_period_fs": period_fs(build_ensembles(cfg)?.0.collective_coupling()),
        }),
    )
}

fn run_fig3c(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, burned) = build_ensembles(cfg)?;
    let w = cfg.drive()?;
    let n = &cfg.numerics;
    let t_off = w.t_off.unwrap_or(n.t_max);
    let constant = DriveWaveform {
        kind: DriveKind::Constant,
        ..w
    };
    let mut summary = serde_json::Map::new();
    for (name, e) in [("unburned", &original), ("burned", &burned)] {
        let pulsed = quench_protocol(e, &w, n.t_max, n.dt)?;
        pulsed.write_csv(&out.path(&format!("fig3c_pulse_{name}.csv")))?;
        let steady = quench_protocol(e, &constant, n.t_max, n.dt)?;
        steady.write_csv(&out.path(&format!("fig3c_constant_{name}.csv")))?;
        let (mp, mc) = (
            max_photon_population(&pulsed),
            max_photon_population(&steady),
        );
        summary.insert(
            name.into(),
            serde_json::json!({
                "max_pulsed_photon": mp,
                "max_constant_photon": mc,
                "pulsed_over_constant": mp / mc,
                "post_off_rate_ev": envelope_rate(&pulsed, t_off + n.fit_start, name),
            }),
        );
    }
    out.json("fig3c_summary.json", &summary)
}

fn run_fig3d(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (_, burned) = build_ensembles(cfg)?;
    let w = cfg.drive()?;
    let n = &cfg.numerics;
    let periods = cfg.need(&cfg.grids.period, "grids.period")?.values();
    let mut scan = period_time_scan(&burned, &w, &periods, n.t_max, n.dt)?;
    scan.metadata.seed = Some(cfg.seed);
    scan.write_csv(&out.path("fig3d_scan.csv"))?;
    scan.write_json(&out.path("fig3d_scan.json"))
}

/// Seeds of the disorder realizations.
pub fn realization_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|k| Stream::substream(seed, k).next_u64())
        .collect()
}

/// Peaks with centers inside the spectral gaps, at most one per gap.
fn dark_peak_count(s: &SpectrumResult, gaps: &[SpectralGap]) -> usize {
    gaps.iter()
        .filter(|g| s.peaks.iter().any(|p| g.contains(p.center)))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderOutcome {
    pub seed: u64,
    pub gaps: usize,
    pub dark_peaks: usize,
}

/// Burned spectra of disordered combs, one per realization.
pub fn disorder_realizations(
    cfg: &ExperimentConfig,
) -> Result<(Vec<SpectrumResult>, Vec<DisorderOutcome>)> {
    let d = *cfg.need(&cfg.disorder, "disorder")?;
    let count = cfg.grids.realizations.unwrap_or(1);
    let seeds = realization_seeds(cfg.seed, count);
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let c = ExperimentConfig {
                disorder: Some(DisorderSpec { seed, ..d }),
                ..cfg.clone()
            };
            let (original, burned) = build_ensembles(&c)?;
            let s = c.sweep(&burned)?;
            let gaps = spectral_gaps(&original, &burned);
            let outcome = DisorderOutcome {
                seed,
                gaps: gaps.len(),
                dark_peaks: dark_peak_count(&s, &gaps),
            };
            Ok((s, outcome))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().unzip())
}

fn run_fig4a(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (spectra, outcomes) = disorder_realizations(cfg)?;
    let names: Vec<String> = (0..spectra.len())
        .map(|k| format!("realization_{k}"))
        .collect();
    write_spectra(
        &out.path("fig4a_spectra.csv"),
        &names,
        &spectra.iter().collect::<Vec<_>>(),
    )?;
    let retained = outcomes.iter().filter(|o| o.dark_peaks == 2).count();
    out.json(
        "fig4a_summary.json",
        &serde_json::json!({
            "realizations": outcomes,
            "retained_two_peaks": retained,
            "fraction": retained as f64 / outcomes.len() as f64,
        }),
    )
}

fn run_fig4b(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (original, burned) = build_ensembles(cfg)?;
    let before = cfg.sweep(&original)?;
    let after = cfg.sweep(&burned)?;
    write_spectra(
        &out.path("fig4b_spectra.csv"),
        &["unburned".into(), "burned".into()],
        &[&before, &after],
    )?;
    let contrast = hole_contrast(
        &after,
        &burned,
        &spectral_gaps(&original, &burned),
        cfg.ensemble.omega_e(),
    )?;
    out.json(
        "fig4b_summary.json",
        &serde_json::json!({
            "emitters": original.len(),
            "emitters_after_burning": burned.len(),
            "collective_coupling_ev": original.collective_coupling(),
            "hole_contrast": contrast,
            "ensemble_digest": original.digest(),
        }),
    )
}

fn write_contrast(
    out: &mut Outputs,
    stem: &str,
    names: Vec<String>,
    cs: &ContrastScan,
) -> Result<()> {
    write_spectra(
        &out.path(&format!("{stem}_spectra.csv")),
        &names,
        &cs.spectra.iter().collect::<Vec<_>>(),
    )?;
    cs.scan
        .write_csv(&out.path(&format!("{stem}_contrast.csv")))?;
    cs.scan
        .write_json(&out.path(&format!("{stem}_contrast.json")))
}

fn run_fig4c(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cs = n_scan(cfg, &cfg.grids.n_values)?;
    let names = cfg
        .grids
        .n_values
        .iter()
        .map(|n| format!("n_{n}"))
        .collect();
    write_contrast(out, "fig4c", names, &cs)
}

fn run_fig4d(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cs = gamma_scan(cfg, &cfg.grids.gammas)?;
    let names = cfg
        .grids
        .gammas
        .iter()
        .map(|g| format!("gamma_{g}"))
        .collect();
    write_contrast(out, "fig4d", names, &cs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_tmp(mut c: ExperimentConfig, dir: &Path) -> ExperimentConfig {
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn registry_has_thirteen_panels() {
        let list = scenario_list();
        assert_eq!(list.len(), 13);
        assert!(list.iter().any(|s| s.line() == "fig3b: pulse grid scan"));
        let mut names: Vec<_> = list.iter().map(|s| s.name).collect();
        names.dedup();
        assert_eq!(names.len(), 13);
    }

    #[test]
    fn every_default_validates() {
        for s in scenario_list() {
            let c = s.default_config();
            assert_eq!(c.scenario, s.name);
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
    }

    #[test]
    fn negative_kappa_names_the_field() {
        let mut c = fig2a_default();
        c.cavity.kappa = -0.1;
        let err = c.validate().unwrap_err();
        assert_eq!(err.kind(), "invalid_config");
        assert!(err.to_string().contains("cavity.kappa"), "{err}");
    }

    #[test]
    fn unknown_scenario_and_units() {
        let mut c = fig2a_default();
        c.scenario = "fig9z".into();
        assert_eq!(c.validate().unwrap_err().kind(), "unknown_scenario");
        let mut c = fig2a_default();
        c.units.energy = "meV".into();
        assert!(c.validate().unwrap_err().to_string().contains("units"));
    }

    #[test]
    fn missing_units_header_rejected() {
        let c = fig2a_default();
        let mut v: serde_json::Value = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("units");
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn scenario_requirements_enforced() {
        let mut c = fig3b_default();
        c.grids.probe = None;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("grids.probe"));
        let mut c = fig3a_default();
        c.drive = Some(DriveWaveform::constant(1e-3, 2.0));
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("drive.t_off"));
        let mut c = fig4b_default();
        c.disorder = Some(DisorderSpec { r: 0.5, seed: 1 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_round_trips() {
        for s in scenario_list() {
            let c = s.default_config();
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn fig2a_writes_two_spectra_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&in_tmp(fig2a_default(), dir.path())).unwrap();
        let names: Vec<_> = out
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(
            names,
            ["fig2a_unburned.csv", "fig2a_burned.csv", "fig2a_peaks.json"]
        );
        let text = std::fs::read_to_string(&out.files[1]).unwrap();
        let first = text.lines().nth(1).unwrap();
        let last = text.lines().last().unwrap();
        assert!(first.starts_with("1.8000000000,"));
        assert!(last.starts_with("2.2000000000,"));
        let m = Manifest::read(&out.manifest).unwrap();
        assert_eq!(m.files.len(), 3);
        assert_eq!(m.config.scenario, "fig2a");
    }

    #[test]
    fn solver_errors_carry_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = in_tmp(fig2a_default(), dir.path());
        // zero linewidth and a grid point exactly on the single tooth at 2.0
        c.gamma = 0.0;
        c.holes = None;
        c.ensemble = EnsembleSource::Comb(CombSpec {
            n: 1,
            ..CombSpec::default()
        });
        c.numerics.sweep_points = 5;
        let err = run_scenario(&c).unwrap_err();
        assert!(matches!(err, Error::Scenario { .. }), "{err:?}");
        assert_eq!(err.kind(), "singular_evaluation");
        assert!(err.to_string().starts_with("scenario fig2a"));
    }

    #[test]
    fn master_seed_overrides_sub_seeds() {
        let mut c = fig4b_default();
        c.seed = 7;
        match c.resolved().ensemble {
            EnsembleSource::Random(r) => assert_eq!(r.seed, 7),
            _ => unreachable!(),
        }
    }

    #[test]
    fn realization_seeds_are_distinct() {
        let s = realization_seeds(2019, 20);
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 20);
        assert_eq!(s, realization_seeds(2019, 20));
    }

    #[test]
    fn single_gamma_matches_direct_fig4b() {
        let base = fig4b_default();
        let cs = gamma_scan(&base, &[base.gamma]).unwrap();
        let (original, burned) = build_ensembles(&base.resolved()).unwrap();
        let s = base.sweep(&burned).unwrap();
        let direct = hole_contrast(&s, &burned, &spectral_gaps(&original, &burned), 2.0).unwrap();
        assert_eq!(cs.scan.values, vec![direct]);
        assert_eq!(cs.spectra[0], s);
    }

    #[test]
    fn contrast_of_flat_spectrum_is_one() {
        // normalized flat spectrum of the bare cavity: both heights equal
        let e = Ensemble::empty(
            Cavity {
                omega_a: 2.0,
                kappa: 1e6,
            },
            0.0,
        )
        .unwrap();
        let s = transmission_sweep_with(&e, 1.8, 2.2, 401, false, 0.02).unwrap();
        let gaps = [SpectralGap { lo: 1.89, hi: 1.91 }];
        let c = hole_contrast(&s, &e, &gaps, 2.0).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
        assert!(hole_contrast(&s, &e, &[], 2.0).is_err());
    }
}
