// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense Lindblad reference solver for a few emitters.
//!
//! The density matrix is column-stacked, `vec(AXB) = (Bᵀ ⊗ A) vec(X)`, so
//!
//! ```text
//! ħ L = i(H_eff* ⊗ I − I ⊗ H_eff) + κ a*⊗a + Γ Σ σ_i*⊗σ_i
//! H_eff = H − iκ/2 a†a − iΓ/2 Σ σ_i⁺σ_i⁻
//! ```
//!
//! with `H` in the frame rotating at the probe energy. `L` is returned in
//! units of 1/fs. Basis states are `|n⟩ ⊗ |s_1 … s_N⟩` with index
//! `n · 2^N + bits`, bit `i` set when emitter `i` is excited.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{drive_value, DriveKind, DriveWaveform};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::units::HBAR_EV_FS;

/// Largest admissible `dim²` (dense Liouvillian side length).
pub const DIM_SQ_CAP: usize = 4096;
pub const MAX_EMITTERS: usize = 4;
/// Allowed drift of `tr ρ` over a propagation.
pub const TRACE_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseOperatorSpace {
    n_emitters: usize,
    photon_cutoff: usize,
    dim: usize,
}

impl DenseOperatorSpace {
    pub fn new(n_emitters: usize, photon_cutoff: usize) -> Result<Self> {
        if n_emitters > MAX_EMITTERS {
            return Err(Error::invalid(
                "oracle.n_emitters",
                format!("at most {MAX_EMITTERS}, got {n_emitters}"),
            ));
        }
        if photon_cutoff < 1 {
            return Err(Error::invalid("oracle.photon_cutoff", "must be >= 1"));
        }
        let dim = (photon_cutoff + 1) << n_emitters;
        let dim_sq = dim * dim;
        if dim_sq > DIM_SQ_CAP {
            return Err(Error::DimensionCap {
                dim_sq,
                cap: DIM_SQ_CAP,
            });
        }
        Ok(Self {
            n_emitters,
            photon_cutoff,
            dim,
        })
    }

    pub fn n_emitters(&self) -> usize {
        self.n_emitters
    }

    pub fn photon_cutoff(&self) -> usize {
        self.photon_cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn index(&self, photons: usize, bits: usize) -> usize {
        (photons << self.n_emitters) | bits
    }

    pub fn identity(&self) -> DMatrix<Complex64> {
        DMatrix::identity(self.dim, self.dim)
    }

    /// Truncated photon annihilation operator.
    pub fn annihilation(&self) -> DMatrix<Complex64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for n in 1..=self.photon_cutoff {
            for bits in 0..(1usize << self.n_emitters) {
                a[(self.index(n - 1, bits), self.index(n, bits))] =
                    Complex64::new((n as f64).sqrt(), 0.0);
            }
        }
        a
    }

    /// `σ⁻` of emitter `i`.
    pub fn lowering(&self, i: usize) -> DMatrix<Complex64> {
        assert!(i < self.n_emitters, "emitter {i} outside the space");
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for n in 0..=self.photon_cutoff {
            for bits in 0..(1usize << self.n_emitters) {
                if bits & (1 << i) != 0 {
                    s[(self.index(n, bits & !(1 << i)), self.index(n, bits))] = ONE;
                }
            }
        }
        s
    }

    pub fn number(&self) -> DMatrix<Complex64> {
        let a = self.annihilation();
        a.adjoint() * a
    }

    /// Projector onto `|n⟩ ⊗ |g…g⟩`.
    pub fn fock_projector(&self, photons: usize) -> DMatrix<Complex64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        let k = self.index(photons, 0);
        p[(k, k)] = ONE;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizedState {
    dim: usize,
    rho_vec: Vec<Complex64>,
}

impl VectorizedState {
    pub fn from_vec(dim: usize, rho_vec: Vec<Complex64>) -> Result<Self> {
        if rho_vec.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: rho_vec.len(),
            });
        }
        Ok(Self { dim, rho_vec })
    }

    pub fn from_matrix(rho: &DMatrix<Complex64>) -> Self {
        // nalgebra storage is column-major, i.e. already column-stacked
        Self {
            dim: rho.nrows(),
            rho_vec: rho.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.dim, self.dim, &self.rho_vec)
    }

    /// `|n⟩⟨n| ⊗ |g…g⟩⟨g…g|`.
    pub fn fock(space: &DenseOperatorSpace, photons: usize) -> Self {
        Self::from_matrix(&space.fock_projector(photons))
    }

    pub fn ground(space: &DenseOperatorSpace) -> Self {
        Self::fock(space, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.rho_vec
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.rho_vec[i + i * self.dim]).sum()
    }

    /// Largest `|ρ_ij − conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                err = err.max((self.rho_vec[i + j * n] - self.rho_vec[j + i * n].conj()).norm());
            }
        }
        err
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn hermitize(&mut self) {
        let n = self.dim;
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (self.rho_vec[i + j * n] + self.rho_vec[j + i * n].conj());
                self.rho_vec[i + j * n] = avg;
                self.rho_vec[j + i * n] = avg.conj();
            }
            let d = &mut self.rho_vec[j + j * n];
            d.im = 0.0;
        }
    }
}

/// `tr(Oρ)` in the inner-product form `⟨⟨O†|ρ⟩⟩`.
pub fn expectation(obs: &DMatrix<Complex64>, rho: &VectorizedState) -> Result<Complex64> {
    if obs.nrows() != rho.dim || obs.ncols() != rho.dim {
        return Err(Error::DimensionMismatch {
            expected: rho.dim,
            found: obs.nrows(),
        });
    }
    let od = obs.adjoint();
    Ok(od
        .as_slice()
        .iter()
        .zip(&rho.rho_vec)
        .map(|(o, r)| o.conj() * r)
        .sum())
}

/// Vectorized `X ↦ A X B`.
fn sandwich(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    b.transpose().kronecker(a)
}

/// Hamiltonian pieces in the frame rotating at `probe`: static part, cavity
/// drive operator `a + a†`, emitter drive operator `Σ(σ + σ†)`.
fn hamiltonian_parts(
    e: &Ensemble,
    space: &DenseOperatorSpace,
    probe: f64,
) -> (DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let a = space.annihilation();
    let ad = a.adjoint();
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut h = &ad * &a * c(e.cavity().omega_a - probe);
    let mut he = DMatrix::zeros(space.dim, space.dim);
    for (i, em) in e.emitters().iter().enumerate() {
        let s = space.lowering(i);
        let sd = s.adjoint();
        h += &sd * &s * c(em.omega - probe);
        h += (&sd * &a + &ad * &s) * c(em.g);
        he += &s + &sd;
    }
    (h, &a + &ad, he)
}

fn dissipator_parts(
    e: &Ensemble,
    space: &DenseOperatorSpace,
    h: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let a = space.annihilation();
    let id = space.identity();
    let mut h_eff = h.clone();
    h_eff -= space.number() * Complex64::new(0.0, 0.5 * e.cavity().kappa);
    let mut jumps = sandwich(&a, &a.adjoint()) * Complex64::new(e.cavity().kappa, 0.0);
    for i in 0..e.len() {
        let s = space.lowering(i);
        h_eff -= s.adjoint() * &s * Complex64::new(0.0, 0.5 * e.gamma());
        jumps += sandwich(&s, &s.adjoint()) * Complex64::new(e.gamma(), 0.0);
    }
    let i = Complex64::new(0.0, 1.0);
    (h_eff.conjugate().kronecker(&id) - id.kronecker(&h_eff)) * i + jumps
}

fn check_fits(e: &Ensemble, space: &DenseOperatorSpace) -> Result<()> {
    if e.len() > space.n_emitters {
        return Err(Error::DimensionMismatch {
            expected: space.n_emitters,
            found: e.len(),
        });
    }
    Ok(())
}

/// Dense `L` (1/fs) at time `t` of the waveform.
pub fn build_liouvillian(
    e: &Ensemble,
    space: &DenseOperatorSpace,
    w: &DriveWaveform,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    check_fits(e, space)?;
    w.validate()?;
    let (h0, ha, he) = hamiltonian_parts(e, space, w.probe_omega);
    let (da, de) = drive_value(w, t);
    let h = h0 + ha * Complex64::new(da, 0.0) + he * Complex64::new(de, 0.0);
    Ok(dissipator_parts(e, space, &h) / Complex64::new(HBAR_EV_FS, 0.0))
}

/// Row-compressed complex matrix; only used to speed up propagation.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    /// `out += scale · M x`.
    fn mul_add(&self, x: &[Complex64], scale: f64, out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o += acc * scale;
        }
    }

    /// Max absolute row sum.
    fn norm_inf(&self) -> f64 {
        (0..self.row_ptr.len() - 1)
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Source of `L(t)` for [`propagate`].
pub trait LiouvillianProvider: Sync {
    fn dim_sq(&self) -> usize;
    /// `out = L(t) x`.
    fn apply(&self, t: f64, x: &[Complex64], out: &mut [Complex64]);
    /// Upper bound on `‖L(t)‖∞` over all `t` (1/fs).
    fn norm_bound(&self) -> f64;
    /// Times in `(0, t_max)` where `L` jumps.
    fn breakpoints(&self, _t_max: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Time-independent `L`.
pub struct StaticLiouvillian {
    dim_sq: usize,
    csr: Csr,
}

impl StaticLiouvillian {
    pub fn new(l: &DMatrix<Complex64>) -> Self {
        Self {
            dim_sq: l.nrows(),
            csr: Csr::from_dense(l),
        }
    }
}

impl LiouvillianProvider for StaticLiouvillian {
    fn dim_sq(&self) -> usize {
        self.dim_sq
    }

    fn apply(&self, _t: f64, x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        self.csr.mul_add(x, 1.0, out);
    }

    fn norm_bound(&self) -> f64 {
        self.csr.norm_inf()
    }
}

/// `L(t) = L0 + Ωa(t) La + Ωe(t) Le` for a piecewise-constant waveform.
pub struct DrivenLiouvillian {
    dim_sq: usize,
    l0: Csr,
    la: Csr,
    le: Csr,
    waveform: DriveWaveform,
}

impl DrivenLiouvillian {
    pub fn new(e: &Ensemble, space: &DenseOperatorSpace, w: &DriveWaveform) -> Result<Self> {
        check_fits(e, space)?;
        w.validate()?;
        let (h0, ha, he) = hamiltonian_parts(e, space, w.probe_omega);
        let l0 = dissipator_parts(e, space, &h0);
        // drive terms enter only through i(H* ⊗ I − I ⊗ H)
        let id = space.identity();
        let i = Complex64::new(0.0, 1.0 / HBAR_EV_FS);
        let lift = |h: &DMatrix<Complex64>| (h.conjugate().kronecker(&id) - id.kronecker(h)) * i;
        Ok(Self {
            dim_sq: space.dim * space.dim,
            l0: Csr::from_dense(&(l0 / Complex64::new(HBAR_EV_FS, 0.0))),
            la: Csr::from_dense(&lift(&ha)),
            le: Csr::from_dense(&lift(&he)),
            waveform: *w,
        })
    }
}

impl LiouvillianProvider for DrivenLiouvillian {
    fn dim_sq(&self) -> usize {
        self.dim_sq
    }

    fn apply(&self, t: f64, x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        self.l0.mul_add(x, 1.0, out);
        let (da, de) = drive_value(&self.waveform, t);
        if da != 0.0 {
            self.la.mul_add(x, da, out);
        }
        if de != 0.0 {
            self.le.mul_add(x, de, out);
        }
    }

    fn norm_bound(&self) -> f64 {
        self.l0.norm_inf()
            + self.waveform.amplitude_a * self.la.norm_inf()
            + self.waveform.amplitude_e * self.le.norm_inf()
    }

    fn breakpoints(&self, t_max: f64) -> Vec<f64> {
        let w = &self.waveform;
        let mut out = Vec::new();
        if w.kind == DriveKind::PulseTrain {
            let h = w.flip_interval();
            let end = w.t_off.unwrap_or(f64::INFINITY).min(t_max);
            let mut k = 1;
            while (k as f64) * h < end {
                out.push(k as f64 * h);
                k += 1;
            }
        }
        if let Some(t) = w.t_off {
            if t > 0.0 && t < t_max {
                out.push(t);
            }
        }
        out
    }
}

/// RK4 propagation recording one state every `dt` on `[0, t_max]`.
///
/// Each output interval is split into substeps with `h ‖L‖∞ ≤ 0.02`, and at
/// every drive discontinuity. The state is re-Hermitized after each substep;
/// a trace drift above [`TRACE_TOL`] is an error.
pub fn propagate(
    provider: &dyn LiouvillianProvider,
    rho0: &VectorizedState,
    t_max: f64,
    dt: f64,
) -> Result<Vec<VectorizedState>> {
    let n = provider.dim_sq();
    if rho0.rho_vec.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho0.rho_vec.len(),
        });
    }
    let times = crate::singlex::time_grid(t_max, dt)?;
    let sub = ((dt * provider.norm_bound()) / 0.02).ceil().max(1.0) as usize;
    let mut nodes: Vec<f64> = Vec::new();
    let mut breaks = provider.breakpoints(t_max);
    breaks.sort_by(f64::total_cmp);

    let mut state = rho0.clone();
    let tr0 = state.trace();
    let mut out = Vec::with_capacity(times.len());
    out.push(state.clone());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
    );
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        nodes.clear();
        let h = (t1 - t0) / sub as f64;
        for k in 0..=sub {
            nodes.push(if k == sub { t1 } else { t0 + h * k as f64 });
        }
        nodes.extend(breaks.iter().filter(|&&b| b > t0 && b < t1));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * dt);
        for seg in nodes.windows(2) {
            let (s0, s1) = (seg[0], seg[1]);
            let h = s1 - s0;
            let mid = 0.5 * (s0 + s1);
            let x = &mut state.rho_vec;
            provider.apply(mid, x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            provider.apply(mid, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            provider.apply(mid, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            provider.apply(mid, &tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            state.hermitize();
        }
        let drift = (state.trace() - tr0).norm();
        if !(drift <= TRACE_TOL) {
            return Err(Error::Numerical(format!(
                "trace drifted by {drift:.3e} at t = {t1} fs"
            )));
        }
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSteadyState {
    pub state: VectorizedState,
    /// `‖L ρ‖₂` (1/fs).
    pub residual: f64,
    /// More than one trace-one null vector was found.
    pub degenerate: bool,
}

/// Trace-one null vector of a time-independent `L`.
///
/// The row of `ρ_00` is replaced by the trace functional and the system is
/// solved by LU. If that system is singular the steady manifold is degenerate;
/// one element is then taken from the SVD null space and flagged.
pub fn steady_state(l: &DMatrix<Complex64>) -> Result<OracleSteadyState> {
    let n2 = l.nrows();
    let dim = (n2 as f64).sqrt().round() as usize;
    if dim * dim != n2 || l.ncols() != n2 {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            found: n2,
        });
    }
    let mut a = l.clone();
    for c in 0..n2 {
        a[(0, c)] = ZERO;
    }
    for i in 0..dim {
        a[(0, i + i * dim)] = ONE;
    }
    let mut b = DVector::zeros(n2);
    b[0] = ONE;
    let lu = a.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..n2).map(|k| u[(k, k)].norm()).collect();
    let umax = diag.iter().cloned().fold(0.0, f64::max);
    let umin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let (vec, degenerate) = if umin > 1e-12 * umax {
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Numerical("steady-state solve failed".into()))?;
        (x, false)
    } else {
        let svd = l.clone().svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let null: Vec<usize> = (0..n2)
            .filter(|&k| svd.singular_values[k] <= 1e-10 * smax)
            .collect();
        // pick the null vector with the largest trace
        let tr = |k: usize| -> Complex64 { (0..dim).map(|i| v_t[(k, i + i * dim)].conj()).sum() };
        let best = null
            .iter()
            .copied()
            .max_by(|&p, &q| tr(p).norm().total_cmp(&tr(q).norm()))
            .ok_or_else(|| Error::Numerical("no null vector found".into()))?;
        let t = tr(best);
        if t.norm() < 1e-12 {
            return Err(Error::Numerical(
                "null space has no trace-carrying element".into(),
            ));
        }
        let x = DVector::from_iterator(n2, (0..n2).map(|k| v_t[(best, k)].conj() / t));
        (x, null.len() > 1)
    };
    let residual = (l * &vec).norm();
    let mut state = VectorizedState {
        dim,
        rho_vec: vec.as_slice().to_vec(),
    };
    state.hermitize();
    Ok(OracleSteadyState {
        state,
        residual,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::mean_field_fixed_point;
    use crate::ensemble::{Cavity, Emitter};
    use crate::rng::Stream;
    use crate::singlex::evolve_fock;

    fn ensemble(ems: &[(f64, f64)], kappa: f64, gamma: f64) -> Ensemble {
        Ensemble::new(
            Cavity {
                omega_a: 2.0,
                kappa,
            },
            gamma,
            ems.iter()
                .enumerate()
                .map(|(i, &(omega, g))| Emitter {
                    index: i + 1,
                    omega,
                    g,
                })
                .collect(),
        )
        .unwrap()
    }

    fn trace_row_error(l: &DMatrix<Complex64>, dim: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..l.ncols() {
            let s: Complex64 = (0..dim).map(|i| l[(i + i * dim, c)]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }

    #[test]
    fn space_limits() {
        assert_eq!(DenseOperatorSpace::new(3, 2).unwrap().dim(), 24);
        assert!(DenseOperatorSpace::new(5, 1).is_err());
        assert!(DenseOperatorSpace::new(1, 0).is_err());
        assert!(matches!(
            DenseOperatorSpace::new(4, 4),
            Err(Error::DimensionCap {
                dim_sq: 6400,
                cap: 4096
            })
        ));
        assert_eq!(DenseOperatorSpace::new(4, 3).unwrap().dim(), 64);
    }

    #[test]
    fn column_stacking_identity() {
        let space = DenseOperatorSpace::new(1, 2).unwrap();
        let a = space.annihilation();
        let x = DMatrix::from_fn(6, 6, |r, c| Complex64::new(r as f64, c as f64 * 0.5));
        let direct = &a * &x * a.adjoint();
        let via = sandwich(&a, &a.adjoint()) * DVector::from_column_slice(x.as_slice());
        for k in 0..36 {
            assert!((via[k] - direct.as_slice()[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn empty_cavity_number_decays_at_kappa() {
        let e = ensemble(&[], 0.1, 0.01);
        let space = DenseOperatorSpace::new(0, 1).unwrap();
        let l = build_liouvillian(&e, &space, &DriveWaveform::off(2.0), 0.0).unwrap();
        let rho = VectorizedState::fock(&space, 1);
        let drho = &l * DVector::from_column_slice(rho.as_slice());
        let d = VectorizedState::from_vec(space.dim(), drho.as_slice().to_vec()).unwrap();
        let rate = expectation(&space.number(), &d).unwrap();
        assert!((rate.re + 0.1 / HBAR_EV_FS).abs() < 1e-14);
    }

    #[test]
    fn trace_preserved_by_driven_liouvillian() {
        let e = ensemble(&[(1.95, 0.03), (2.04, 0.02)], 0.1, 0.01);
        let space = DenseOperatorSpace::new(2, 2).unwrap();
        let w = DriveWaveform::pulse_train(1e-2, 2.0, 40.0);
        for t in [0.0, 25.0] {
            let l = build_liouvillian(&e, &space, &w, t).unwrap();
            assert!(trace_row_error(&l, space.dim()) < 1e-10);
        }
    }

    #[test]
    fn oversized_ensemble_rejected() {
        let e = ensemble(&[(1.95, 0.03), (2.04, 0.02)], 0.1, 0.01);
        let space = DenseOperatorSpace::new(1, 2).unwrap();
        assert!(build_liouvillian(&e, &space, &DriveWaveform::off(2.0), 0.0).is_err());
    }

    #[test]
    fn expectation_forms_agree() {
        let space = DenseOperatorSpace::new(1, 2).unwrap();
        let rho = VectorizedState::fock(&space, 1);
        assert!((expectation(&space.identity(), &rho).unwrap() - ONE).norm() < 1e-15);
        assert!((expectation(&space.number(), &rho).unwrap() - ONE).norm() < 1e-15);
        assert!(expectation(&DMatrix::identity(3, 3), &rho).is_err());

        // random Hermitian observable on a propagated state
        let e = ensemble(&[(2.02, 0.04)], 0.1, 0.01);
        let l = DrivenLiouvillian::new(&e, &space, &DriveWaveform::constant(5e-3, 2.0)).unwrap();
        let states = propagate(&l, &rho, 10.0, 1.0).unwrap();
        let last = states.last().unwrap();
        let mut s = Stream::new(5);
        let m = DMatrix::from_fn(6, 6, |_, _| {
            Complex64::new(s.uniform() - 0.5, s.uniform() - 0.5)
        });
        let obs = &m + m.adjoint();
        let direct = (&obs * last.to_matrix()).trace();
        let inner = expectation(&obs, last).unwrap();
        assert!((direct - inner).norm() < 1e-12);
        assert!(inner.im.abs() < 1e-10);
    }

    #[test]
    fn ground_state_is_stationary() {
        let e = ensemble(&[(1.98, 0.03), (2.03, 0.05)], 0.1, 0.01);
        let space = DenseOperatorSpace::new(2, 2).unwrap();
        let l = DrivenLiouvillian::new(&e, &space, &DriveWaveform::off(2.0)).unwrap();
        let rho = VectorizedState::ground(&space);
        let states = propagate(&l, &rho, 50.0, 5.0).unwrap();
        for s in states {
            let diff: f64 = s
                .as_slice()
                .iter()
                .zip(rho.as_slice())
                .map(|(a, b)| (a - b).norm())
                .sum();
            assert!(diff < 1e-15);
        }
    }

    #[test]
    fn lossless_jc_rabi() {
        let e = ensemble(&[(2.0, 0.05)], 0.0, 0.0);
        let space = DenseOperatorSpace::new(1, 2).unwrap();
        let l = DrivenLiouvillian::new(&e, &space, &DriveWaveform::off(2.0)).unwrap();
        let states = propagate(&l, &VectorizedState::fock(&space, 1), 100.0, 1.0).unwrap();
        for (k, s) in states.iter().enumerate() {
            let n = expectation(&space.number(), s).unwrap().re;
            let expect = (0.05 * k as f64 / HBAR_EV_FS).cos().powi(2);
            assert!((n - expect).abs() < 1e-8, "t={k}: {n} vs {expect}");
        }
    }

    #[test]
    fn fock_decay_matches_one_excitation_solver() {
        let e = ensemble(&[(1.96, 0.04), (2.05, 0.03)], 0.1, 0.01);
        let space = DenseOperatorSpace::new(2, 2).unwrap();
        let l = DrivenLiouvillian::new(&e, &space, &DriveWaveform::off(2.0)).unwrap();
        let states = propagate(&l, &VectorizedState::fock(&space, 1), 100.0, 0.5).unwrap();
        let fock = evolve_fock(&e, 100.0, 0.5).unwrap();
        for (k, s) in states.iter().enumerate() {
            let n = expectation(&space.number(), s).unwrap().re;
            assert!((n - fock.photon_population[k]).abs() < 1e-8);
            assert!(s.hermiticity_error() == 0.0);
            assert!(s.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn undriven_steady_state_is_vacuum() {
        let e = ensemble(&[(1.96, 0.04), (2.05, 0.03)], 0.1, 0.01);
        let space = DenseOperatorSpace::new(2, 1).unwrap();
        let l = build_liouvillian(&e, &space, &DriveWaveform::off(2.0), 0.0).unwrap();
        let s = steady_state(&l).unwrap();
        assert!(!s.degenerate);
        let g = VectorizedState::ground(&space);
        for (a, b) in s.state.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn driven_empty_cavity_steady_field() {
        let e = ensemble(&[], 0.1, 0.01);
        let space = DenseOperatorSpace::new(0, 6).unwrap();
        let w = DriveWaveform::constant(1e-4, 1.97);
        let l = build_liouvillian(&e, &space, &w, 0.0).unwrap();
        let s = steady_state(&l).unwrap();
        let a = expectation(&space.annihilation(), &s.state).unwrap();
        let expect = Complex64::new(0.0, -1e-4) / Complex64::new(0.05, 0.03);
        assert!(
            (a - expect).norm() < 1e-9 * expect.norm(),
            "{a} vs {expect}"
        );
    }

    #[test]
    fn lossless_system_is_degenerate() {
        let e = ensemble(&[(2.0, 0.05)], 0.0, 0.0);
        let space = DenseOperatorSpace::new(1, 1).unwrap();
        let l = build_liouvillian(&e, &space, &DriveWaveform::off(2.0), 0.0).unwrap();
        let s = steady_state(&l).unwrap();
        assert!(s.degenerate);
        assert!(s.residual < 1e-10);
        assert!((s.state.trace() - ONE).norm() < 1e-10);
    }

    #[test]
    fn steady_state_matches_long_propagation() {
        let e = ensemble(&[(1.97, 0.03), (2.02, 0.04)], 0.1, 0.02);
        let space = DenseOperatorSpace::new(2, 2).unwrap();
        let w = DriveWaveform::constant(5e-3, 2.0);
        let l = build_liouvillian(&e, &space, &w, 0.0).unwrap();
        let s = steady_state(&l).unwrap();
        let prov = StaticLiouvillian::new(&l);
        let states = propagate(&prov, &VectorizedState::ground(&space), 1500.0, 500.0).unwrap();
        let n_ss = expectation(&space.number(), &s.state).unwrap().re;
        let n_t = expectation(&space.number(), states.last().unwrap())
            .unwrap()
            .re;
        assert!((n_ss - n_t).abs() < 1e-6 * n_ss, "{n_ss} vs {n_t}");
    }

    #[test]
    fn mean_field_error_scales_as_fourth_power() {
        let e = ensemble(&[(1.97, 0.03), (2.02, 0.04)], 0.1, 0.02);
        let space = DenseOperatorSpace::new(2, 3).unwrap();
        let gap = |amp: f64| {
            let w = DriveWaveform::constant(amp, 2.0);
            let l = build_liouvillian(&e, &space, &w, 0.0).unwrap();
            let s = steady_state(&l).unwrap();
            let n = expectation(&space.number(), &s.state).unwrap().re;
            let mf = mean_field_fixed_point(&e, &w).unwrap().photon_population();
            (n - mf).abs()
        };
        let ratio = gap(4e-3) / gap(4e-4);
        assert!((0.9e4..=1.1e4).contains(&ratio), "ratio {ratio:e}");
    }

    #[test]
    fn cutoff_converged_at_weak_drive() {
        let e = ensemble(&[(1.97, 0.03), (2.02, 0.04)], 0.1, 0.02);
        let w = DriveWaveform::constant(1e-4, 2.0);
        let n = |cutoff: usize| {
            let space = DenseOperatorSpace::new(2, cutoff).unwrap();
            let l = build_liouvillian(&e, &space, &w, 0.0).unwrap();
            expectation(&space.number(), &steady_state(&l).unwrap().state)
                .unwrap()
                .re
        };
        assert!((n(2) - n(3)).abs() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn every_liouvillian_preserves_trace(
                ems in prop::collection::vec((1.8f64..2.2, 0.0f64..0.08), 0..4),
                kappa in 0.0f64..0.3,
                gamma in 0.0f64..0.05,
                amp in 0.0f64..0.05,
                cutoff in 1usize..3,
                probe in 1.9f64..2.1,
                t in 0.0f64..100.0,
            ) {
                let e = ensemble(&ems, kappa, gamma);
                let space = DenseOperatorSpace::new(ems.len(), cutoff).unwrap();
                let w = DriveWaveform::pulse_train(amp, probe, 30.0);
                let l = build_liouvillian(&e, &space, &w, t).unwrap();
                prop_assert!(trace_row_error(&l, space.dim()) < 1e-10);
            }
        }
    }
}
