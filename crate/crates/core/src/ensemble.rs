// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Emitter ensembles coupled to a single lossy cavity mode.
//!
//! An [`Ensemble`] is the one input every solver consumes. It is built from a
//! frequency comb ([`build_comb`]) or by random sampling
//! ([`sample_random_ensemble`]), and then perturbed by spectral hole burning
//! ([`burn_holes`]) or on-site disorder ([`apply_disorder`]). All values are
//! immutable; every operation returns a new ensemble.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Collective coupling the reference comb amplitude is calibrated to (eV).
pub const REFERENCE_COLLECTIVE_COUPLING: f64 = 0.102;
/// Emitter linewidth of the reference configuration (eV).
pub const REFERENCE_GAMMA: f64 = 0.01;

/// q-deformed exponential `[1 + (1-q) x]^(1/(1-q))`.
///
/// Returns 0 wherever the base is not positive (compact-support convention),
/// and reduces to `exp(x)` at `q = 1`.
pub fn eq_exponential(x: f64, q: f64) -> f64 {
    let one_minus_q = 1.0 - q;
    if one_minus_q == 0.0 {
        return x.exp();
    }
    let t = one_minus_q * x;
    if 1.0 + t <= 0.0 {
        return 0.0;
    }
    // ln_1p keeps the q -> 1 limit continuous.
    (t.ln_1p() / one_minus_q).exp()
}

/// q-logarithm, inverse of [`eq_exponential`] on its range.
pub fn ln_q(x: f64, q: f64) -> f64 {
    let one_minus_q = 1.0 - q;
    if one_minus_q == 0.0 {
        x.ln()
    } else {
        (x.powf(one_minus_q) - 1.0) / one_minus_q
    }
}

/// Quantile of the untruncated q = 2 profile (a Cauchy law with scale 1/√β).
pub fn cauchy_inverse_cdf(u: f64, omega_e: f64, beta: f64) -> f64 {
    omega_e + (std::f64::consts::PI * (u - 0.5)).tan() / beta.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// Position in the comb it was built from (1-based); survives burning.
    pub index: usize,
    /// Transition energy (eV).
    pub omega: f64,
    /// Cavity coupling (eV).
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cavity {
    pub omega_a: f64,
    pub kappa: f64,
}

impl Default for Cavity {
    fn default() -> Self {
        Self {
            omega_a: 2.0,
            kappa: 0.1,
        }
    }
}

impl Cavity {
    pub fn validate(&self) -> Result<()> {
        if !self.omega_a.is_finite() {
            return Err(Error::invalid("cavity.omega_a", "must be finite"));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(
                "cavity.kappa",
                format!("must be finite and >= 0, got {}", self.kappa),
            ));
        }
        Ok(())
    }
}

/// Serialized layout of an [`Ensemble`].
#[derive(Serialize, Deserialize)]
struct EnsembleDoc {
    cavity: Cavity,
    gamma: f64,
    emitters: Vec<Emitter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleDoc", into = "EnsembleDoc")]
pub struct Ensemble {
    cavity: Cavity,
    gamma: f64,
    emitters: Vec<Emitter>,
}

impl TryFrom<EnsembleDoc> for Ensemble {
    type Error = Error;

    fn try_from(doc: EnsembleDoc) -> Result<Self> {
        Ensemble::new(doc.cavity, doc.gamma, doc.emitters)
    }
}

impl From<Ensemble> for EnsembleDoc {
    fn from(e: Ensemble) -> Self {
        EnsembleDoc {
            cavity: e.cavity,
            gamma: e.gamma,
            emitters: e.emitters,
        }
    }
}

impl Ensemble {
    /// Validates and sorts the emitters by transition energy.
    pub fn new(cavity: Cavity, gamma: f64, mut emitters: Vec<Emitter>) -> Result<Self> {
        cavity.validate()?;
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(
                "gamma",
                format!("must be finite and >= 0, got {gamma}"),
            ));
        }
        let mut seen = BTreeSet::new();
        for em in &emitters {
            if !em.omega.is_finite() {
                return Err(Error::invalid(
                    format!("emitters[{}].omega", em.index),
                    "must be finite",
                ));
            }
            if !(em.g >= 0.0) || !em.g.is_finite() {
                return Err(Error::invalid(
                    format!("emitters[{}].g", em.index),
                    format!("must be finite and >= 0, got {}", em.g),
                ));
            }
            if !seen.insert(em.index) {
                return Err(Error::invalid(
                    "emitters.index",
                    format!("duplicate index {}", em.index),
                ));
            }
        }
        emitters.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.index.cmp(&b.index)));
        Ok(Self {
            cavity,
            gamma,
            emitters,
        })
    }

    /// The bare cavity, no emitters.
    pub fn empty(cavity: Cavity, gamma: f64) -> Result<Self> {
        Self::new(cavity, gamma, Vec::new())
    }

    pub fn cavity(&self) -> Cavity {
        self.cavity
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.cavity, gamma, self.emitters.clone())
    }

    pub fn with_cavity(&self, cavity: Cavity) -> Result<Self> {
        Self::new(cavity, self.gamma, self.emitters.clone())
    }

    /// `Ω = sqrt(Σ g_i²)`.
    pub fn collective_coupling(&self) -> f64 {
        collective_coupling(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the compact JSON form; identifies an ensemble in run metadata.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("ensemble serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Equidistant comb with q-Gaussian couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub n: usize,
    pub omega_e: f64,
    pub delta_omega: f64,
    pub q: f64,
    /// Width parameter of the coupling profile (eV⁻²).
    pub beta: f64,
    /// Coupling amplitude A (eV).
    pub amplitude: f64,
}

impl Default for CombSpec {
    /// 50 teeth over 2 ± 0.2 eV, q = 2, β = 0.1, with A calibrated so that
    /// the full comb has collective coupling 0.102 eV.
    fn default() -> Self {
        CombSpec {
            n: 50,
            omega_e: 2.0,
            delta_omega: 0.2,
            q: 2.0,
            beta: 0.1,
            amplitude: 1.0,
        }
        .calibrated(REFERENCE_COLLECTIVE_COUPLING)
    }
}

impl CombSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("comb.n", "need at least one emitter"));
        }
        if !self.omega_e.is_finite() {
            return Err(Error::invalid("comb.omega_e", "must be finite"));
        }
        if !(self.delta_omega >= 0.0) {
            return Err(Error::invalid("comb.delta_omega", "must be >= 0"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("comb.beta", "must be >= 0"));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::invalid("comb.amplitude", "must be finite and >= 0"));
        }
        if !(self.q < 3.0) {
            return Err(Error::invalid(
                "comb.q",
                format!("must be < 3, got {}", self.q),
            ));
        }
        Ok(())
    }

    /// Transition energy of tooth `i` (1-based).
    pub fn tooth(&self, i: usize) -> f64 {
        if self.n == 1 {
            return self.omega_e;
        }
        let step = 2.0 * self.delta_omega / (self.n - 1) as f64;
        self.omega_e - self.delta_omega + step * (i - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        if self.n == 1 {
            0.0
        } else {
            2.0 * self.delta_omega / (self.n - 1) as f64
        }
    }

    /// `A · e_q[-β (ω - ω_e)²]`.
    pub fn coupling_at(&self, omega: f64) -> f64 {
        let x = omega - self.omega_e;
        self.amplitude * eq_exponential(-self.beta * x * x, self.q)
    }

    /// Rescales the amplitude so the full comb has collective coupling `target`.
    pub fn calibrated(mut self, target: f64) -> Self {
        let unit = CombSpec {
            amplitude: 1.0,
            ..self
        };
        let norm: f64 = (1..=self.n)
            .map(|i| unit.coupling_at(unit.tooth(i)).powi(2))
            .sum::<f64>()
            .sqrt();
        self.amplitude = if norm > 0.0 { target / norm } else { 0.0 };
        self
    }
}

pub fn build_comb(spec: &CombSpec, gamma: f64, cavity: Cavity) -> Result<Ensemble> {
    spec.validate()?;
    let emitters = (1..=spec.n)
        .map(|i| {
            let omega = spec.tooth(i);
            Emitter {
                index: i,
                omega,
                g: spec.coupling_at(omega),
            }
        })
        .collect();
    Ensemble::new(cavity, gamma, emitters)
}

/// Closed energy interval `[center - width/2, center + width/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleWindow {
    pub center: f64,
    pub width: f64,
}

impl HoleWindow {
    pub fn lo(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn hi(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.lo() && omega <= self.hi()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HoleSpec {
    ByIndex { indices: BTreeSet<usize> },
    ByWindow { windows: Vec<HoleWindow> },
}

impl HoleSpec {
    pub fn by_index(indices: impl IntoIterator<Item = usize>) -> Self {
        HoleSpec::ByIndex {
            indices: indices.into_iter().collect(),
        }
    }

    /// Two holes of `2 * half_width + 1` teeth centred on comb positions
    /// `left` and `right`, clipped to `1..=n`.
    pub fn index_pair(left: usize, right: usize, half_width: usize, n: usize) -> Self {
        let mut indices = BTreeSet::new();
        for c in [left, right] {
            let lo = c.saturating_sub(half_width).max(1);
            let hi = (c + half_width).min(n);
            indices.extend(lo..=hi);
        }
        HoleSpec::ByIndex { indices }
    }

    /// The reference burn: positions 12–14 and 37–39 of the 50-tooth comb.
    pub fn reference() -> Self {
        Self::index_pair(13, 38, 1, 50)
    }

    /// Validates against a comb of `n` teeth.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            HoleSpec::ByIndex { indices } => {
                if let Some(bad) = indices.iter().find(|&&i| i == 0 || i > n) {
                    return Err(Error::invalid(
                        "holes.indices",
                        format!("index {bad} outside [1, {n}]"),
                    ));
                }
            }
            HoleSpec::ByWindow { windows } => {
                if windows.is_empty() {
                    return Err(Error::invalid("holes.windows", "no windows given"));
                }
                for w in windows {
                    if !(w.width > 0.0) || !w.center.is_finite() {
                        return Err(Error::invalid(
                            "holes.windows",
                            format!("width must be > 0 and center finite, got {w:?}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn selects(&self, em: &Emitter) -> bool {
        match self {
            HoleSpec::ByIndex { indices } => indices.contains(&em.index),
            HoleSpec::ByWindow { windows } => windows.iter().any(|w| w.contains(em.omega)),
        }
    }
}

/// Removes the emitters selected by `spec`; survivors keep their indices.
///
/// Burning every emitter is allowed (the bare cavity is a valid ensemble) and
/// only logged.
pub fn burn_holes(e: &Ensemble, spec: &HoleSpec) -> Result<Ensemble> {
    if let HoleSpec::ByWindow { .. } = spec {
        spec.validate(usize::MAX)?;
    }
    if let HoleSpec::ByIndex { indices } = spec {
        if indices.contains(&0) {
            return Err(Error::invalid("holes.indices", "indices are 1-based"));
        }
    }
    let survivors: Vec<Emitter> = e
        .emitters
        .iter()
        .filter(|em| !spec.selects(em))
        .copied()
        .collect();
    if survivors.is_empty() && !e.is_empty() {
        log::warn!("hole burning removed all {} emitters", e.len());
    }
    Ok(Ensemble {
        cavity: e.cavity,
        gamma: e.gamma,
        emitters: survivors,
    })
}

/// Open energy interval left empty by burning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub lo: f64,
    pub hi: f64,
}

impl SpectralGap {
    pub fn contains(&self, omega: f64) -> bool {
        omega > self.lo && omega < self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Gaps opened by burning `original` down to `burned`.
///
/// Each maximal run of removed emitters (consecutive in energy order) gives one
/// gap spanning its surviving neighbours. A run at the edge of the ensemble is
/// bounded by its own outermost removed emitter on the open side.
pub fn spectral_gaps(original: &Ensemble, burned: &Ensemble) -> Vec<SpectralGap> {
    let kept: BTreeSet<usize> = burned.emitters.iter().map(|e| e.index).collect();
    let ems = &original.emitters;
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < ems.len() {
        if kept.contains(&ems[i].index) {
            i += 1;
            continue;
        }
        let start = i;
        while i < ems.len() && !kept.contains(&ems[i].index) {
            i += 1;
        }
        let lo = if start > 0 {
            ems[start - 1].omega
        } else {
            ems[start].omega
        };
        let hi = if i < ems.len() {
            ems[i].omega
        } else {
            ems[i - 1].omega
        };
        gaps.push(SpectralGap { lo, hi });
    }
    gaps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    /// Relative disorder amplitude, `0 <= r < 1`.
    pub r: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r < 1.0) {
            return Err(Error::invalid(
                "disorder.r",
                format!("must satisfy 0 <= r < 1, got {}", self.r),
            ));
        }
        Ok(())
    }
}

/// Shifts every transition energy by `α_i Δω/(N-1)` with `α_i` uniform on
/// `[-r, r]`, then re-evaluates the coupling profile at the new energy.
///
/// Draws are taken in the input's energy order, one per emitter.
pub fn apply_disorder(e: &Ensemble, spec: &DisorderSpec, comb: &CombSpec) -> Result<Ensemble> {
    spec.validate()?;
    comb.validate()?;
    let scale = if comb.n > 1 {
        comb.delta_omega / (comb.n - 1) as f64
    } else {
        0.0
    };
    let mut stream = Stream::new(spec.seed);
    let emitters = e
        .emitters
        .iter()
        .map(|em| {
            let alpha = stream.uniform_in(-spec.r, spec.r);
            let omega = em.omega + alpha * scale;
            Emitter {
                index: em.index,
                omega,
                g: comb.coupling_at(omega),
            }
        })
        .collect();
    Ensemble::new(e.cavity, e.gamma, emitters)
}

/// Ensemble with transition energies drawn from a truncated q-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomEnsembleSpec {
    pub n: usize,
    pub omega_e: f64,
    pub q: f64,
    pub beta: f64,
    pub g_uniform: f64,
    pub truncation_halfwidth: f64,
    pub seed: u64,
}

impl Default for RandomEnsembleSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            omega_e: 2.0,
            q: 2.0,
            beta: 0.1,
            g_uniform: 0.002,
            truncation_halfwidth: 0.5,
            seed: 2019,
        }
    }
}

impl RandomEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_halfwidth > 0.0) {
            return Err(Error::invalid("random.truncation_halfwidth", "must be > 0"));
        }
        if !(self.g_uniform >= 0.0) {
            return Err(Error::invalid("random.g_uniform", "must be >= 0"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("random.beta", "must be >= 0"));
        }
        if !(self.q < 3.0) {
            return Err(Error::invalid("random.q", "must be < 3"));
        }
        if !self.omega_e.is_finite() {
            return Err(Error::invalid("random.omega_e", "must be finite"));
        }
        Ok(())
    }

    /// One untruncated offset from `omega_e`.
    fn draw_offset(&self, s: &mut Stream) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        if self.beta == 0.0 {
            // flat profile: uniform over the truncation window
            return s.uniform_in(-self.truncation_halfwidth, self.truncation_halfwidth);
        }
        if self.q == 2.0 {
            return cauchy_inverse_cdf(s.uniform_open(), 0.0, self.beta);
        }
        // Generalized Box-Muller: z has density ∝ e_q(-z²/(3-q)).
        let q_prime = (1.0 + self.q) / (3.0 - self.q);
        let u1 = s.uniform_open();
        let u2 = s.uniform();
        let z = (-2.0 * ln_q(u1, q_prime)).max(0.0).sqrt() * (two_pi * u2).cos();
        z / ((3.0 - self.q) * self.beta).sqrt()
    }
}

pub fn sample_random_ensemble(
    spec: &RandomEnsembleSpec,
    gamma: f64,
    cavity: Cavity,
) -> Result<Ensemble> {
    spec.validate()?;
    let mut stream = Stream::new(spec.seed);
    let mut emitters = Vec::with_capacity(spec.n);
    let mut rejected = 0usize;
    while emitters.len() < spec.n {
        let x = spec.draw_offset(&mut stream);
        if x.abs() <= spec.truncation_halfwidth {
            emitters.push(Emitter {
                index: emitters.len() + 1,
                omega: spec.omega_e + x,
                g: spec.g_uniform,
            });
        } else {
            rejected += 1;
            if rejected > 1000 * (spec.n + 1) {
                return Err(Error::invalid(
                    "random.truncation_halfwidth",
                    "window too narrow: rejection sampling is not accepting draws",
                ));
            }
        }
    }
    Ensemble::new(cavity, gamma, emitters)
}

pub fn collective_coupling(e: &Ensemble) -> f64 {
    e.emitters.iter().map(|em| em.g * em.g).sum::<f64>().sqrt()
}

/// Dressed-ensemble terms entering the cavity response at probe energy ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralTerms {
    /// `Ω²ρ(ω) = Σ g² Γ / ((Γ/2)² + Δ²)`: added cavity broadening (eV).
    pub rho_term: f64,
    /// `Ω²δ(ω) = Σ g² Δ / ((Γ/2)² + Δ²)`: Lamb shift (eV).
    pub delta_term: f64,
}

/// Evaluates both dressed terms with `Δ_i = ω_i - ω`.
pub fn spectral_density(e: &Ensemble, omega: f64) -> Result<SpectralTerms> {
    let half = 0.5 * e.gamma;
    let half_sq = half * half;
    let mut rho_term = 0.0;
    let mut delta_term = 0.0;
    for em in &e.emitters {
        let detuning = em.omega - omega;
        let denom = half_sq + detuning * detuning;
        if denom == 0.0 {
            if em.g == 0.0 {
                continue;
            }
            return Err(Error::SingularEvaluation { omega });
        }
        let w = em.g * em.g / denom;
        rho_term += w * e.gamma;
        delta_term += w * detuning;
    }
    Ok(SpectralTerms {
        rho_term,
        delta_term,
    })
}
