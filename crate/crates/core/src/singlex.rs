// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! One-excitation sector: the arrowhead effective Hamiltonian
//!
//! ```text
//! M = [ ωa − iκ/2   g1  …  gN ]
//!     [ g1   ω1 − iΓ/2        ]
//!     [ …            ⋱        ]
//!     [ gN        ωN − iΓ/2   ]
//! ```
//!
//! its spectrum, and free evolution from the one-photon state. Jumps out of
//! this sector land in the ground state, so `|c_a(t)|²` is the exact photon
//! number of the full master equation for that initial state.

mod secular;

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, SpectralGap};
use crate::error::{Error, Result};
use crate::units::HBAR_EV_FS;

use secular::{reduce, schur_eigenvalues, Reduction};

/// Default output step for direct integration (fs).
pub const DEFAULT_DT: f64 = 0.05;
/// Default start of envelope fits: about three bare-cavity lifetimes (fs).
pub const DEFAULT_FIT_START: f64 = 20.0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorVariant {
    /// Complex shifts `−iκ/2`, `−iΓ/2` on the diagonal.
    #[default]
    Dissipative,
    /// Same matrix with `κ = Γ = 0`.
    Hermitian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleExcitationOperator {
    diag: Vec<Complex64>,
    arm: Vec<f64>,
}

impl SingleExcitationOperator {
    pub fn new(diag: Vec<Complex64>, arm: Vec<f64>) -> Result<Self> {
        if diag.len() != arm.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: arm.len() + 1,
                found: diag.len(),
            });
        }
        Ok(Self { diag, arm })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn arm(&self) -> &[f64] {
        &self.arm
    }

    pub fn is_hermitian(&self) -> bool {
        self.diag.iter().all(|d| d.im == 0.0)
    }

    pub fn trace(&self) -> Complex64 {
        self.diag.iter().sum()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (k, d) in self.diag.iter().enumerate() {
            m[(k, k)] = *d;
        }
        for (i, &g) in self.arm.iter().enumerate() {
            m[(0, i + 1)] = Complex64::new(g, 0.0);
            m[(i + 1, 0)] = Complex64::new(g, 0.0);
        }
        m
    }

    /// `y = (M − shift) x`.
    pub fn apply_shifted(&self, x: &[Complex64], shift: f64, y: &mut [Complex64]) {
        let mut y0 = (self.diag[0] - shift) * x[0];
        for (i, &g) in self.arm.iter().enumerate() {
            y0 += g * x[i + 1];
            y[i + 1] = g * x[0] + (self.diag[i + 1] - shift) * x[i + 1];
        }
        y[0] = y0;
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_shifted(x, 0.0, &mut y);
        y
    }
}

pub fn build_operator(e: &Ensemble) -> SingleExcitationOperator {
    build_operator_variant(e, OperatorVariant::Dissipative)
}

pub fn build_operator_variant(e: &Ensemble, variant: OperatorVariant) -> SingleExcitationOperator {
    let (kappa, gamma) = match variant {
        OperatorVariant::Dissipative => (e.cavity().kappa, e.gamma()),
        OperatorVariant::Hermitian => (0.0, 0.0),
    };
    let mut diag = Vec::with_capacity(e.len() + 1);
    diag.push(Complex64::new(e.cavity().omega_a, -0.5 * kappa));
    diag.extend(
        e.emitters()
            .iter()
            .map(|em| Complex64::new(em.omega, -0.5 * gamma)),
    );
    let arm = e.emitters().iter().map(|em| em.g).collect();
    SingleExcitationOperator { diag, arm }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Secular,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Sorted by real part (eV).
    pub eigenvalues: Vec<Complex64>,
    pub photon_weights: Vec<f64>,
    pub method: EigenMethod,
}

impl EigenResult {
    /// `2|Im λ|` per mode (eV).
    pub fn decay_rates(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| 2.0 * l.im.abs()).collect()
    }

    /// Writes `re_ev,im_ev,photon_weight` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["re_ev", "im_ev", "photon_weight"])?;
        for (l, p) in self.eigenvalues.iter().zip(&self.photon_weights) {
            w.write_record([
                format!("{:.12}", l.re),
                format!("{:.12e}", l.im),
                format!("{p:.12e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coupled eigenpairs of the reduced problem, used for time evolution.
struct Spectral {
    reduction: Reduction,
    roots: Vec<Complex64>,
    method: EigenMethod,
}

impl Spectral {
    fn new(op: &SingleExcitationOperator) -> Result<Self> {
        let reduction = reduce(&op.diag, &op.arm);
        if let Some(roots) = reduction.roots() {
            return Ok(Self {
                reduction,
                roots,
                method: EigenMethod::Secular,
            });
        }
        log::debug!("secular iteration rejected, using dense Schur fallback");
        let roots = schur_eigenvalues(reduction.dense()).ok_or_else(|| {
            Error::Convergence(format!(
                "dense Schur fallback did not converge (reduced dimension {})",
                reduction.poles.len() + 1
            ))
        })?;
        Ok(Self {
            reduction,
            roots,
            method: EigenMethod::Dense,
        })
    }

    /// Emitter components `c_j = G_j / (λ − d_j)` of the eigenvector with
    /// cavity component 1.
    fn components(&self, lambda: Complex64) -> Vec<Complex64> {
        self.reduction
            .poles
            .iter()
            .map(|p| p.coupling / (lambda - p.pole))
            .collect()
    }
}

pub fn eigensolve(op: &SingleExcitationOperator) -> Result<EigenResult> {
    let sp = Spectral::new(op)?;
    let mut pairs: Vec<(Complex64, f64)> = sp
        .roots
        .iter()
        .map(|&l| {
            let norm: f64 = sp.components(l).iter().map(|c| c.norm_sqr()).sum();
            (l, 1.0 / (1.0 + norm))
        })
        .chain(sp.reduction.decoupled.iter().map(|&l| (l, 0.0)))
        .collect();
    pairs.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Ok(EigenResult {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        photon_weights: pairs.iter().map(|p| p.1).collect(),
        method: sp.method,
    })
}

/// Eigenvalues of the full dense matrix by complex Schur decomposition,
/// sorted by real part.
pub fn dense_eigenvalues(op: &SingleExcitationOperator) -> Result<Vec<Complex64>> {
    let mut v = schur_eigenvalues(op.to_dense())
        .ok_or_else(|| Error::Convergence(format!("Schur failed at dimension {}", op.dim())))?;
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(v)
}

/// Eigensolve at each cavity energy in `omega_a_grid`.
pub fn cavity_sweep_spectrum(
    e: &Ensemble,
    omega_a_grid: &[f64],
    variant: OperatorVariant,
) -> Result<Vec<EigenResult>> {
    if omega_a_grid.is_empty() {
        return Err(Error::invalid("omega_a_grid", "grid is empty"));
    }
    omega_a_grid
        .par_iter()
        .map(|&wa| {
            let mut cav = e.cavity();
            cav.omega_a = wa;
            let shifted = e.with_cavity(cav)?;
            eigensolve(&build_operator_variant(&shifted, variant))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMethod {
    Spectral,
    Direct,
    Driven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub photon_population: Vec<f64>,
    pub emitter_population: Vec<f64>,
    /// Cavity amplitude (one-excitation amplitude or mean field `⟨a⟩`).
    pub cavity_amplitude: Vec<Complex64>,
    /// First recorded sample at or after the drive switch-off.
    pub switch_off_index: Option<usize>,
    pub method: EvolutionMethod,
}

impl TrajectoryResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `t_fs,photon,emitter` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t_fs", "photon", "emitter"])?;
        for k in 0..self.times.len() {
            w.write_record([
                format!("{:.6}", self.times[k]),
                format!("{:.12e}", self.photon_population[k]),
                format!("{:.12e}", self.emitter_population[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(t_max >= dt) || !t_max.is_finite() {
        return Err(Error::invalid(
            "t_max",
            format!("must be >= dt, got {t_max}"),
        ));
    }
    let n = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// Free evolution from the one-photon state with all emitters in the ground
/// state.
///
/// Uses the eigen-expansion `c(t) = Σ_k e^{−iλ_k t/ħ} v_k v_kᵀ e_0 / (v_kᵀ v_k)`
/// (M is complex symmetric). Near exceptional points, where that expansion
/// cancels badly, it falls back to [`evolve_fock_direct`].
pub fn evolve_fock(e: &Ensemble, t_max: f64, dt: f64) -> Result<TrajectoryResult> {
    let times = time_grid(t_max, dt)?;
    let op = build_operator(e);
    let sp = Spectral::new(&op)?;
    let comps: Vec<Vec<Complex64>> = sp.roots.iter().map(|&l| sp.components(l)).collect();
    let residues: Vec<Complex64> = comps
        .iter()
        .map(|c| 1.0 / (1.0 + c.iter().map(|x| x * x).sum::<Complex64>()))
        .collect();

    // c(0) must come back as e_0
    let m = sp.reduction.poles.len();
    let mut err = (residues.iter().sum::<Complex64>() - 1.0).norm();
    for j in 0..m {
        let s: Complex64 = residues.iter().zip(&comps).map(|(r, c)| r * c[j]).sum();
        err = err.max(s.norm());
    }
    let largest = residues.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if !(err < 1e-10) || largest > 1e6 {
        log::debug!("eigen-expansion ill-conditioned (reconstruction error {err:.2e}), integrating directly");
        return evolve_fock_direct(e, t_max, dt);
    }

    let rows: Vec<(f64, f64, Complex64)> = times
        .par_iter()
        .map(|&t| {
            let phases: Vec<Complex64> = sp
                .roots
                .iter()
                .zip(&residues)
                .map(|(l, r)| r * (Complex64::new(0.0, -t / HBAR_EV_FS) * l).exp())
                .collect();
            let ca: Complex64 = phases.iter().sum();
            let mut pe = 0.0;
            for j in 0..m {
                let cj: Complex64 = phases.iter().zip(&comps).map(|(p, c)| p * c[j]).sum();
                pe += cj.norm_sqr();
            }
            (ca.norm_sqr(), pe, ca)
        })
        .collect();
    Ok(TrajectoryResult {
        times,
        photon_population: rows.iter().map(|r| r.0).collect(),
        emitter_population: rows.iter().map(|r| r.1).collect(),
        cavity_amplitude: rows.iter().map(|r| r.2).collect(),
        switch_off_index: None,
        method: EvolutionMethod::Spectral,
    })
}

/// Fixed-step RK4 in a frame rotating at `Re M_00`, with enough substeps per
/// output interval that `h ‖M − ωa‖ / ħ ≤ 0.005`.
pub fn evolve_fock_direct(e: &Ensemble, t_max: f64, dt: f64) -> Result<TrajectoryResult> {
    let times = time_grid(t_max, dt)?;
    let op = build_operator(e);
    let shift = op.diag[0].re;
    let radius = op
        .diag
        .iter()
        .map(|d| (d - shift).norm())
        .fold(0.0, f64::max)
        + op.arm.iter().map(|g| g * g).sum::<f64>().sqrt();
    let sub = ((dt * radius / HBAR_EV_FS) / 0.005).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let n = op.dim();
    let mut c = vec![ZERO; n];
    c[0] = Complex64::new(1.0, 0.0);
    let mut k1 = vec![ZERO; n];
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];
    let factor = Complex64::new(0.0, -1.0 / HBAR_EV_FS);

    let mut out = TrajectoryResult {
        times: times.clone(),
        photon_population: Vec::with_capacity(times.len()),
        emitter_population: Vec::with_capacity(times.len()),
        cavity_amplitude: Vec::with_capacity(times.len()),
        switch_off_index: None,
        method: EvolutionMethod::Direct,
    };
    for (step, &t) in times.iter().enumerate() {
        if step > 0 {
            for _ in 0..sub {
                op.apply_shifted(&c, shift, &mut k1);
                k1.iter_mut().for_each(|x| *x *= factor);
                for i in 0..n {
                    tmp[i] = c[i] + 0.5 * h * k1[i];
                }
                op.apply_shifted(&tmp, shift, &mut k2);
                k2.iter_mut().for_each(|x| *x *= factor);
                for i in 0..n {
                    tmp[i] = c[i] + 0.5 * h * k2[i];
                }
                op.apply_shifted(&tmp, shift, &mut k3);
                k3.iter_mut().for_each(|x| *x *= factor);
                for i in 0..n {
                    tmp[i] = c[i] + h * k3[i];
                }
                op.apply_shifted(&tmp, shift, &mut k4);
                k4.iter_mut().for_each(|x| *x *= factor);
                for i in 0..n {
                    c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        // back to the lab frame
        let ca = c[0] * (Complex64::new(0.0, -shift * t / HBAR_EV_FS)).exp();
        let pe: f64 = c[1..].iter().map(|x| x.norm_sqr()).sum();
        if !pe.is_finite() || !ca.re.is_finite() {
            return Err(Error::Numerical(format!(
                "direct integration diverged at t = {t} fs"
            )));
        }
        out.photon_population.push(ca.norm_sqr());
        out.emitter_population.push(pe);
        out.cavity_amplitude.push(ca);
    }
    Ok(out)
}

/// Indices of strict local maxima of `y` (right edge of a plateau).
pub(crate) fn local_maxima(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1])
        .collect()
}

/// Decay rate (eV) of the photon-population envelope after `t_start`.
///
/// Least-squares slope of `ln p` at the local maxima, times `−ħ`.
pub fn fit_envelope_decay(traj: &TrajectoryResult, t_start: f64) -> Result<f64> {
    let p = &traj.photon_population;
    let pts: Vec<(f64, f64)> = local_maxima(p)
        .into_iter()
        .filter(|&k| traj.times[k] >= t_start && p[k] > 0.0)
        .map(|k| (traj.times[k], p[k].ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 maxima after t = {t_start} fs, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("maxima all at one time".into()));
    }
    Ok(-sxy / sxx * HBAR_EV_FS)
}

/// Dominant angular frequency (rad/fs) of the photon population after
/// `t_start`.
///
/// The signal is multiplied by `exp(r t/ħ)` with `r` from
/// [`fit_envelope_decay`] (skipped if that fit fails), mean-subtracted,
/// Hann-windowed and zero-padded; the largest interior spectral maximum is
/// refined by parabolic interpolation of the magnitudes.
pub fn dominant_frequency(traj: &TrajectoryResult, t_start: f64) -> Result<f64> {
    let start = traj
        .times
        .iter()
        .position(|&t| t >= t_start)
        .unwrap_or(traj.len());
    let t = &traj.times[start..];
    let p = &traj.photon_population[start..];
    if t.len() < 16 {
        return Err(Error::Fit(format!(
            "need at least 16 samples after t = {t_start} fs, found {}",
            t.len()
        )));
    }
    let dt = t[1] - t[0];
    let rate = fit_envelope_decay(traj, t_start).unwrap_or(0.0);
    let mut y: Vec<f64> = t
        .iter()
        .zip(p)
        .map(|(&ti, &pi)| pi * (rate * (ti - t[0]) / HBAR_EV_FS).exp())
        .collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let n = y.len();
    for (k, v) in y.iter_mut().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
        *v = (*v - mean) * hann;
    }
    let size = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(size, ZERO);
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let mag: Vec<f64> = buf[..size / 2].iter().map(|c| c.norm()).collect();
    let k = local_maxima(&mag)
        .into_iter()
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .ok_or_else(|| Error::Fit("no spectral maximum".into()))?;
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom < 0.0 {
        0.5 * (a - c) / denom
    } else {
        0.0
    };
    Ok(2.0 * std::f64::consts::PI * (k as f64 + offset) / (size as f64 * dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkState {
    pub gap: SpectralGap,
    pub eigenvalue: Complex64,
    pub photon_weight: f64,
}

/// For each gap, the eigenvalue with real part inside it and the smallest
/// `|Im λ|`; gaps without an eigenvalue are skipped.
pub fn identify_dark_states(eig: &EigenResult, gaps: &[SpectralGap]) -> Vec<DarkState> {
    gaps.iter()
        .filter_map(|gap| {
            eig.eigenvalues
                .iter()
                .zip(&eig.photon_weights)
                .filter(|(l, _)| gap.contains(l.re))
                .min_by(|a, b| a.0.im.abs().total_cmp(&b.0.im.abs()))
                .map(|(l, w)| DarkState {
                    gap: *gap,
                    eigenvalue: *l,
                    photon_weight: *w,
                })
        })
        .collect()
}

/// `|Re λ₊ − Re λ₋| / ħ` (rad/fs) for exactly two dark states.
pub fn dark_splitting_frequency(dark: &[DarkState]) -> Result<f64> {
    match dark {
        [a, b] => Ok((a.eigenvalue.re - b.eigenvalue.re).abs() / HBAR_EV_FS),
        _ => Err(Error::Fit(format!(
            "expected two dark states, found {}",
            dark.len()
        ))),
    }
}
