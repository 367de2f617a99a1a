// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Driven mean-field dynamics in the low-excitation limit.
//!
//! In the frame rotating at the probe energy ω,
//!
//! ```text
//! ħ d⟨a⟩/dt  = −(iΔa + κ/2)⟨a⟩ − i Σ g_i ⟨σ_i⟩ − iΩa(t)
//! ħ d⟨σ_i⟩/dt = −(iΔ_i + Γ/2)⟨σ_i⟩ − i g_i ⟨a⟩ − iΩe(t)
//! ```
//!
//! with `Δ = ω_x − ω`. This is `ħ ẋ = −i[(M − ω)x + b(t)]` for the
//! single-excitation operator `M`, so undriven runs coincide with the
//! one-excitation amplitudes up to the frame phase.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::scan::{Axis, ScanMetadata, ScanResult};
use crate::singlex::{
    build_operator, time_grid, EvolutionMethod, SingleExcitationOperator, TrajectoryResult,
};
use crate::units::HBAR_EV_FS;

/// Cavity drive amplitude used when none is configured (eV).
pub const DEFAULT_DRIVE_AMPLITUDE: f64 = 1e-3;
/// Ratio of cavity to emitter dipole moments.
pub const DIPOLE_RATIO: f64 = 19.0;
pub const DEFAULT_DRIVEN_DT: f64 = 0.02;
/// Relative tolerance of the steady-state test.
pub const DEFAULT_STEADY_TOL: f64 = 1e-6;

/// Largest `dt · ρ / ħ` accepted by the RK4 stepper (its stability interval on
/// the imaginary axis ends at 2√2).
const STABILITY_LIMIT: f64 = 2.5;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKind {
    Constant,
    PulseTrain,
    Off,
}

/// Where the π phase flips of a pulse train fall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFlip {
    /// Flip every `T/2`: one full ± cycle per period.
    #[default]
    HalfPeriod,
    /// Flip every `T`: `+` on `[2kT, (2k+1)T)`, `−` on `[(2k+1)T, (2k+2)T)`.
    EveryPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveWaveform {
    pub kind: DriveKind,
    /// Cavity drive Ωa (eV).
    pub amplitude_a: f64,
    /// Emitter drive Ωe (eV).
    pub amplitude_e: f64,
    pub probe_omega: f64,
    /// Pulse-train period T (fs).
    #[serde(default)]
    pub period: f64,
    /// Switch-off time (fs); `None` keeps the drive on.
    #[serde(default)]
    pub t_off: Option<f64>,
    #[serde(default)]
    pub phase_flip: PhaseFlip,
}

impl DriveWaveform {
    pub fn constant(amplitude_a: f64, probe_omega: f64) -> Self {
        Self {
            kind: DriveKind::Constant,
            amplitude_a,
            amplitude_e: amplitude_a / DIPOLE_RATIO,
            probe_omega,
            period: 0.0,
            t_off: None,
            phase_flip: PhaseFlip::default(),
        }
    }

    pub fn pulse_train(amplitude_a: f64, probe_omega: f64, period: f64) -> Self {
        Self {
            kind: DriveKind::PulseTrain,
            period,
            ..Self::constant(amplitude_a, probe_omega)
        }
    }

    pub fn off(probe_omega: f64) -> Self {
        Self {
            kind: DriveKind::Off,
            ..Self::constant(0.0, probe_omega)
        }
    }

    pub fn with_t_off(mut self, t_off: f64) -> Self {
        self.t_off = Some(t_off);
        self
    }

    pub fn with_amplitudes(mut self, amplitude_a: f64, amplitude_e: f64) -> Self {
        self.amplitude_a = amplitude_a;
        self.amplitude_e = amplitude_e;
        self
    }

    pub fn with_phase_flip(mut self, flip: PhaseFlip) -> Self {
        self.phase_flip = flip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_a >= 0.0) || !(self.amplitude_e >= 0.0) {
            return Err(Error::invalid("drive.amplitude", "amplitudes must be >= 0"));
        }
        if !self.probe_omega.is_finite() {
            return Err(Error::invalid("drive.probe_omega", "must be finite"));
        }
        if self.kind == DriveKind::PulseTrain && !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid(
                "drive.period",
                format!("must be > 0 for a pulse train, got {}", self.period),
            ));
        }
        if let Some(t) = self.t_off {
            if !(t >= 0.0) {
                return Err(Error::invalid("drive.t_off", "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Interval between sign flips (fs).
    pub fn flip_interval(&self) -> f64 {
        match self.phase_flip {
            PhaseFlip::HalfPeriod => 0.5 * self.period,
            PhaseFlip::EveryPeriod => self.period,
        }
    }

    /// Times in `(0, t_max)` where the drive is discontinuous.
    fn breakpoints(&self, t_max: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.kind == DriveKind::PulseTrain {
            let h = self.flip_interval();
            let end = self.t_off.unwrap_or(f64::INFINITY).min(t_max);
            let mut k = 1;
            while (k as f64) * h < end {
                out.push(k as f64 * h);
                k += 1;
            }
        }
        if let Some(t) = self.t_off {
            if t > 0.0 && t < t_max {
                out.push(t);
            }
        }
        out
    }
}

/// `(Ωa(t), Ωe(t))` in eV.
pub fn drive_value(w: &DriveWaveform, t: f64) -> (f64, f64) {
    if w.t_off.is_some_and(|off| t >= off) {
        return (0.0, 0.0);
    }
    match w.kind {
        DriveKind::Off => (0.0, 0.0),
        DriveKind::Constant => (w.amplitude_a, w.amplitude_e),
        DriveKind::PulseTrain => {
            let k = (t / w.flip_interval()).floor() as i64;
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            (s * w.amplitude_a, s * w.amplitude_e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub t: f64,
    pub a_amp: Complex64,
    pub sigma_amps: Vec<Complex64>,
}

impl MeanFieldState {
    pub fn ground(n: usize) -> Self {
        Self {
            t: 0.0,
            a_amp: ZERO,
            sigma_amps: vec![ZERO; n],
        }
    }

    pub fn photon_population(&self) -> f64 {
        self.a_amp.norm_sqr()
    }

    pub fn emitter_population(&self) -> f64 {
        self.sigma_amps.iter().map(|s| s.norm_sqr()).sum()
    }

    fn to_vec(&self) -> Vec<Complex64> {
        std::iter::once(self.a_amp)
            .chain(self.sigma_amps.iter().copied())
            .collect()
    }

    pub(crate) fn from_vec(t: f64, x: &[Complex64]) -> Self {
        Self {
            t,
            a_amp: x[0],
            sigma_amps: x[1..].to_vec(),
        }
    }
}

/// Linear system `ħ ẋ = −i[(M − ω)x + b]`.
struct System {
    op: SingleExcitationOperator,
    probe: f64,
}

impl System {
    fn new(e: &Ensemble, w: &DriveWaveform) -> Result<Self> {
        w.validate()?;
        Ok(Self {
            op: build_operator(e),
            probe: w.probe_omega,
        })
    }

    fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Writes `ẋ` (per fs) into `out`.
    fn rhs(&self, x: &[Complex64], drive: (f64, f64), out: &mut [Complex64]) {
        self.op.apply_shifted(x, self.probe, out);
        out[0] += drive.0;
        for v in out[1..].iter_mut() {
            *v += drive.1;
        }
        let f = Complex64::new(0.0, -1.0 / HBAR_EV_FS);
        out.iter_mut().for_each(|v| *v *= f);
    }

    /// Upper bound on the spectral radius of `M − ω` (eV).
    fn radius(&self) -> f64 {
        let d = self.op.diag();
        d.iter()
            .map(|z| (z - self.probe).norm())
            .fold(0.0, f64::max)
            + self.op.arm().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Smallest decay rate any mode can have: every eigenvalue of `M` has
    /// `Im λ ≤ −min(κ, Γ)/2`, so `‖(M − ω)⁻¹‖ ≤ 2 / min(κ, Γ)`.
    fn min_rate(&self) -> f64 {
        self.op
            .diag()
            .iter()
            .map(|z| -2.0 * z.im)
            .fold(f64::INFINITY, f64::min)
    }

    fn check_step(&self, dt: f64) -> Result<()> {
        let x = dt * self.radius() / HBAR_EV_FS;
        if x > STABILITY_LIMIT {
            return Err(Error::Numerical(format!(
                "dt = {dt} fs is unstable for this ensemble (dt·ρ/ħ = {x:.2} > {STABILITY_LIMIT}); use dt < {:.4} fs",
                STABILITY_LIMIT * HBAR_EV_FS / self.radius()
            )));
        }
        Ok(())
    }
}

struct Rk4 {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![ZERO; n],
            k2: vec![ZERO; n],
            k3: vec![ZERO; n],
            k4: vec![ZERO; n],
            tmp: vec![ZERO; n],
        }
    }

    /// One step with the drive held at `drive` (steps never straddle a flip).
    fn step(&mut self, sys: &System, x: &mut [Complex64], h: f64, drive: (f64, f64)) {
        let axpy = |out: &mut [Complex64], x: &[Complex64], a: f64, k: &[Complex64]| {
            for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
                *o = xi + a * ki;
            }
        };
        sys.rhs(x, drive, &mut self.k1);
        axpy(&mut self.tmp, x, 0.5 * h, &self.k1);
        sys.rhs(&self.tmp, drive, &mut self.k2);
        axpy(&mut self.tmp, x, 0.5 * h, &self.k2);
        sys.rhs(&self.tmp, drive, &mut self.k3);
        axpy(&mut self.tmp, x, h, &self.k3);
        sys.rhs(&self.tmp, drive, &mut self.k4);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative fixed-point residual `‖(M − ω)x + b‖ / ‖b‖` under the drive at
/// time `state.t`.
pub fn fixed_point_residual(
    e: &Ensemble,
    w: &DriveWaveform,
    state: &MeanFieldState,
) -> Result<f64> {
    let sys = System::new(e, w)?;
    if state.sigma_amps.len() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            found: state.sigma_amps.len(),
        });
    }
    let drive = drive_value(w, state.t);
    let x = state.to_vec();
    let mut out = vec![ZERO; x.len()];
    sys.rhs(&x, drive, &mut out);
    let b = (drive.0 * drive.0 + e.len() as f64 * drive.1 * drive.1).sqrt();
    let r = norm(&out) * HBAR_EV_FS;
    Ok(if b > 0.0 { r / b } else { r })
}

/// Switch-off rule applied on top of the waveform's own `t_off`.
#[derive(Debug, Clone, Copy)]
enum Release {
    Never,
    /// Switch off at the first recorded time where the state is within
    /// `tol` (relative) of the fixed point.
    WhenSteady {
        tol: f64,
    },
}

fn integrate(
    e: &Ensemble,
    w: &DriveWaveform,
    init: &MeanFieldState,
    t_max: f64,
    dt: f64,
    release: Release,
) -> Result<TrajectoryResult> {
    let sys = System::new(e, w)?;
    if init.sigma_amps.len() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            found: init.sigma_amps.len(),
        });
    }
    let times = time_grid(t_max, dt)?;
    sys.check_step(dt)?;

    let mut x = init.to_vec();
    let mut rk = Rk4::new(sys.dim());
    let mut deriv = vec![ZERO; sys.dim()];
    let min_rate = sys.min_rate();
    let mut released_at: Option<f64> = None;
    let mut out = TrajectoryResult {
        times: times.clone(),
        photon_population: Vec::with_capacity(times.len()),
        emitter_population: Vec::with_capacity(times.len()),
        cavity_amplitude: Vec::with_capacity(times.len()),
        switch_off_index: None,
        method: EvolutionMethod::Driven,
    };
    let mut breaks = w.breakpoints(t_max).into_iter().peekable();
    let drive_at = |t: f64, released: Option<f64>| -> (f64, f64) {
        if released.is_some_and(|r| t >= r) {
            (0.0, 0.0)
        } else {
            drive_value(w, t)
        }
    };
    let mut last_norm = norm(&x);

    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let t0 = times[k - 1];
            let mut s = t0;
            // substeps split at every discontinuity inside (t0, t]
            loop {
                while breaks.peek().is_some_and(|&b| b <= s + 1e-9 * dt) {
                    breaks.next();
                }
                let next = match breaks.peek() {
                    Some(&b) if b < t - 1e-9 * dt => b,
                    _ => t,
                };
                let mid = 0.5 * (s + next);
                rk.step(&sys, &mut x, next - s, drive_at(mid, released_at));
                s = next;
                if next == t {
                    break;
                }
            }
            let n = norm(&x);
            let undriven = drive_at(t0 + 0.5 * (t - t0), released_at) == (0.0, 0.0);
            if !n.is_finite() || (undriven && n > last_norm * (1.0 + 1e-10) + 1e-300) {
                return Err(Error::Numerical(format!(
                    "amplitude grew without drive at t = {t} fs; reduce dt (currently {dt} fs)"
                )));
            }
            last_norm = n;
        }

        if out.switch_off_index.is_none() {
            let off = w.t_off.is_some_and(|o| t >= o) || released_at.is_some_and(|r| t >= r);
            if off {
                out.switch_off_index = Some(k);
            }
        }
        if let (Release::WhenSteady { tol }, None) = (release, released_at) {
            if k > 0
                && w.kind == DriveKind::Constant
                && min_rate > 0.0
                && !w.t_off.is_some_and(|o| t >= o)
            {
                sys.rhs(&x, drive_value(w, t), &mut deriv);
                // ‖x − x*‖ ≤ ħ‖ẋ‖ / (min(κ,Γ)/2)
                let dist = norm(&deriv) * HBAR_EV_FS / (0.5 * min_rate);
                if dist <= tol * norm(&x) {
                    released_at = Some(t);
                    out.switch_off_index = Some(k);
                    log::debug!("steady state reached at t = {t} fs, drive released");
                }
            }
        }

        out.photon_population.push(x[0].norm_sqr());
        out.emitter_population
            .push(x[1..].iter().map(|v| v.norm_sqr()).sum());
        out.cavity_amplitude.push(x[0]);
    }
    Ok(out)
}

/// Fixed-step RK4 from the all-ground state.
pub fn integrate_driven(
    e: &Ensemble,
    w: &DriveWaveform,
    t_max: f64,
    dt: f64,
) -> Result<TrajectoryResult> {
    integrate(
        e,
        w,
        &MeanFieldState::ground(e.len()),
        t_max,
        dt,
        Release::Never,
    )
}

pub fn integrate_driven_from(
    e: &Ensemble,
    w: &DriveWaveform,
    init: &MeanFieldState,
    t_max: f64,
    dt: f64,
) -> Result<TrajectoryResult> {
    integrate(e, w, init, t_max, dt, Release::Never)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: MeanFieldState,
    /// Relative fixed-point residual at `state.t`.
    pub residual: f64,
}

/// Integrates a constant drive until `‖x − x*‖ ≤ tol ‖x‖` is certified, or
/// fails at `t_cap`.
///
/// The bound uses `‖x − x*‖ ≤ ħ‖ẋ‖ / (min(κ,Γ)/2)`. A fixed point of the RK4
/// map is the exact fixed point of the ODE, so no step-size error enters.
pub fn integrate_until_steady(
    e: &Ensemble,
    w: &DriveWaveform,
    dt: f64,
    tol: f64,
    t_cap: f64,
) -> Result<SteadyState> {
    if w.kind != DriveKind::Constant || w.t_off.is_some() {
        return Err(Error::invalid(
            "drive.kind",
            "steady state needs a constant, never-off drive",
        ));
    }
    let sys = System::new(e, w)?;
    sys.check_step(dt)?;
    let min_rate = sys.min_rate();
    if !(min_rate > 0.0) {
        return Err(Error::invalid(
            "gamma",
            "steady state needs kappa > 0 and gamma > 0",
        ));
    }
    let drive = drive_value(w, 0.0);
    let mut x = vec![ZERO; sys.dim()];
    let mut rk = Rk4::new(sys.dim());
    let mut deriv = vec![ZERO; sys.dim()];
    // check about once per slowest decay time
    let check_every = ((HBAR_EV_FS / min_rate / dt).ceil() as usize).clamp(1, 10_000);
    let mut t = 0.0;
    let mut steps = 0usize;
    while t < t_cap {
        rk.step(&sys, &mut x, dt, drive);
        steps += 1;
        t = steps as f64 * dt;
        if steps.is_multiple_of(check_every) {
            sys.rhs(&x, drive, &mut deriv);
            let dist = norm(&deriv) * HBAR_EV_FS / (0.5 * min_rate);
            if dist <= tol * norm(&x) {
                let state = MeanFieldState::from_vec(t, &x);
                let residual = fixed_point_residual(e, w, &state)?;
                return Ok(SteadyState { state, residual });
            }
        }
    }
    Err(Error::Convergence(format!(
        "no steady state within {t_cap} fs at tolerance {tol:e}"
    )))
}

/// Fixed point of a constant drive by a direct linear solve of
/// `(M − ω)x = −b`.
pub fn mean_field_fixed_point(e: &Ensemble, w: &DriveWaveform) -> Result<MeanFieldState> {
    if w.kind != DriveKind::Constant {
        return Err(Error::invalid(
            "drive.kind",
            "fixed point needs a constant drive",
        ));
    }
    let sys = System::new(e, w)?;
    let n = sys.dim();
    let mut m = sys.op.to_dense();
    for k in 0..n {
        m[(k, k)] -= sys.probe;
    }
    let (da, de) = drive_value(w, 0.0);
    let mut b = nalgebra::DVector::from_element(n, Complex64::new(-de, 0.0));
    b[0] = Complex64::new(-da, 0.0);
    let x = m.lu().solve(&b).ok_or_else(|| {
        Error::Numerical("singular mean-field system (kappa = gamma = 0 on resonance)".into())
    })?;
    Ok(MeanFieldState::from_vec(0.0, x.as_slice()))
}

/// Drive, switch off, and record the free relaxation.
///
/// A constant drive is released as soon as the state is certified steady (or
/// at `t_off`, whichever comes first); a pulse train is released at `t_off`.
pub fn quench_protocol(
    e: &Ensemble,
    w: &DriveWaveform,
    t_total: f64,
    dt: f64,
) -> Result<TrajectoryResult> {
    let off = w
        .t_off
        .ok_or_else(|| Error::invalid("drive.t_off", "a quench needs a switch-off time"))?;
    if !(off < t_total) {
        return Err(Error::invalid(
            "drive.t_off",
            format!("switch-off {off} fs must precede the end {t_total} fs"),
        ));
    }
    let release = match w.kind {
        DriveKind::Constant => Release::WhenSteady {
            tol: DEFAULT_STEADY_TOL,
        },
        _ => Release::Never,
    };
    integrate(e, w, &MeanFieldState::ground(e.len()), t_total, dt, release)
}

pub fn max_photon_population(traj: &TrajectoryResult) -> f64 {
    traj.photon_population.iter().cloned().fold(0.0, f64::max)
}

/// Peak photon population of a pulse train for every `(ω, T)` cell.
///
/// `template` provides the amplitudes, phase convention and switch-off;
/// kind, probe and period are overridden per cell.
pub fn pulse_grid_scan(
    e: &Ensemble,
    template: &DriveWaveform,
    omega_grid: &[f64],
    period_grid: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<ScanResult> {
    if omega_grid.is_empty() || period_grid.is_empty() {
        return Err(Error::invalid(
            "grids",
            "omega and period grids must be nonempty",
        ));
    }
    let cells: Vec<(f64, f64)> = omega_grid
        .iter()
        .flat_map(|&w| period_grid.iter().map(move |&p| (w, p)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(omega, period)| {
            let w = DriveWaveform {
                kind: DriveKind::PulseTrain,
                probe_omega: omega,
                period,
                ..*template
            };
            integrate_driven(e, &w, t_max, dt).map(|t| max_photon_population(&t))
        })
        .collect::<Result<Vec<f64>>>()?;
    ScanResult::new(
        vec![
            Axis::new("omega", "ev", omega_grid.to_vec()),
            Axis::new("period", "fs", period_grid.to_vec()),
        ],
        values,
        ScanMetadata {
            ensemble_digest: e.digest(),
            seed: None,
            dt: Some(dt),
            t_max: Some(t_max),
            observable: "max_photon".into(),
        },
    )
}

/// Photon population over `(T, t)` for pulse trains at the template's probe
/// energy.
pub fn period_time_scan(
    e: &Ensemble,
    template: &DriveWaveform,
    period_grid: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<ScanResult> {
    if period_grid.is_empty() {
        return Err(Error::invalid("grids", "period grid must be nonempty"));
    }
    let times = time_grid(t_max, dt)?;
    let rows = period_grid
        .par_iter()
        .map(|&period| {
            let w = DriveWaveform {
                kind: DriveKind::PulseTrain,
                period,
                ..*template
            };
            integrate_driven(e, &w, t_max, dt).map(|t| t.photon_population)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ScanResult::new(
        vec![
            Axis::new("period", "fs", period_grid.to_vec()),
            Axis::new("t", "fs", times),
        ],
        rows.concat(),
        ScanMetadata {
            ensemble_digest: e.digest(),
            seed: None,
            dt: Some(dt),
            t_max: Some(t_max),
            observable: "photon".into(),
        },
    )
}
