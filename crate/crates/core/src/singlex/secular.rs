// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Roots of the arrowhead secular function
//! `f(λ) = d0 − λ − Σ w_j / (d_j − λ)`, `w_j = g_j²`.
//!
//! Emitters with `g = 0` and repeated poles are deflated first, so every
//! remaining pole has positive weight and the reduced problem has exactly
//! `m + 1` roots for `m` poles. Roots are found simultaneously with the
//! Aberth-Ehrlich iteration on `p(λ) = f(λ) Π (d_j − λ)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

const MAX_ITER: usize = 500;

/// A pole of the reduced problem and the emitters merged into it.
#[derive(Debug, Clone)]
pub(crate) struct ReducedPole {
    pub pole: Complex64,
    /// `sqrt(Σ g²)` over the members.
    pub coupling: f64,
    /// Arm positions and couplings of the merged emitters.
    pub members: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Reduction {
    pub d0: Complex64,
    pub poles: Vec<ReducedPole>,
    /// Eigenvalues decoupled from the cavity (zero photon weight).
    pub decoupled: Vec<Complex64>,
}

pub(crate) fn reduce(diag: &[Complex64], arm: &[f64]) -> Reduction {
    let d0 = diag[0];
    let mut order: Vec<usize> = (0..arm.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (diag[a + 1], diag[b + 1]);
        x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
    });
    let mut poles: Vec<ReducedPole> = Vec::new();
    let mut decoupled = Vec::new();
    for i in order {
        let d = diag[i + 1];
        let g = arm[i];
        if g == 0.0 {
            decoupled.push(d);
            continue;
        }
        match poles.last_mut() {
            Some(last) if last.pole == d => {
                // one combination couples, the rest stay at d
                decoupled.push(d);
                last.members.push((i, g));
                last.coupling = last.coupling.hypot(g);
            }
            _ => poles.push(ReducedPole {
                pole: d,
                coupling: g,
                members: vec![(i, g)],
            }),
        }
    }
    Reduction {
        d0,
        poles,
        decoupled,
    }
}

impl Reduction {
    pub fn scale(&self) -> f64 {
        let w: f64 = self.poles.iter().map(|p| p.coupling * p.coupling).sum();
        self.poles
            .iter()
            .map(|p| p.pole.norm())
            .fold(self.d0.norm().max(w.sqrt()), f64::max)
            .max(1e-300)
    }

    pub fn secular(&self, z: Complex64) -> Complex64 {
        let mut f = self.d0 - z;
        for p in &self.poles {
            f -= p.coupling * p.coupling / (p.pole - z);
        }
        f
    }

    /// `p'/p` at `z`, with the nearest pole's singular parts cancelled
    /// analytically.
    fn log_derivative(&self, z: Complex64) -> Option<Complex64> {
        let near = self
            .poles
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.pole - z).norm().total_cmp(&(b.1.pole - z).norm()))
            .map(|(j, _)| j);
        let mut f_rest = self.d0 - z;
        let mut fp_rest = Complex64::new(-1.0, 0.0);
        let mut inv_sum = Complex64::new(0.0, 0.0);
        for (j, p) in self.poles.iter().enumerate() {
            if Some(j) == near {
                continue;
            }
            let u = 1.0 / (p.pole - z);
            let w = p.coupling * p.coupling;
            f_rest -= w * u;
            fp_rest -= w * u * u;
            inv_sum += u;
        }
        let (f, num) = match near {
            None => (f_rest, fp_rest),
            Some(j) => {
                let p = &self.poles[j];
                let dz = p.pole - z;
                if dz == Complex64::new(0.0, 0.0) {
                    return None;
                }
                let u = 1.0 / dz;
                let w = p.coupling * p.coupling;
                // f' − u f with the w u² terms cancelled
                (f_rest - w * u, fp_rest - u * f_rest)
            }
        };
        if f == Complex64::new(0.0, 0.0) {
            return None;
        }
        Some(num / f - inv_sum)
    }

    fn seeds(&self) -> Vec<Complex64> {
        let m = self.poles.len();
        let mut re: Vec<f64> = self.poles.iter().map(|p| p.pole.re).collect();
        re.sort_by(f64::total_cmp);
        let im = self.poles.iter().map(|p| p.pole.im).sum::<f64>() / m as f64;
        let im = 0.5 * (im + self.d0.im);
        let w: f64 = self.poles.iter().map(|p| p.coupling * p.coupling).sum();
        let span = re[m - 1] - re[0];
        let margin = w.sqrt().max(span / m as f64).max(1e-12 * self.scale());
        let mut out = Vec::with_capacity(m + 1);
        out.push(Complex64::new(re[0] - margin, im));
        for k in 0..m - 1 {
            out.push(Complex64::new(0.5 * (re[k] + re[k + 1]), im));
        }
        out.push(Complex64::new(re[m - 1] + margin, im));
        // tiny stagger breaks exact symmetry between seeds
        for (k, z) in out.iter_mut().enumerate() {
            z.im += 1e-7 * margin * ((k % 7) as f64 - 3.0);
        }
        out
    }

    /// All `m + 1` roots, or `None` if the iteration or the completeness
    /// checks fail.
    pub fn roots(&self) -> Option<Vec<Complex64>> {
        let m = self.poles.len();
        if m == 0 {
            return Some(vec![self.d0]);
        }
        let scale = self.scale();
        let mut z = self.seeds();
        let mut settled = 0;
        for _ in 0..MAX_ITER {
            let mut max_step: f64 = 0.0;
            for k in 0..z.len() {
                let Some(ratio) = self.log_derivative(z[k]) else {
                    continue;
                };
                let n = 1.0 / ratio;
                let mut s = Complex64::new(0.0, 0.0);
                for (l, zl) in z.iter().enumerate() {
                    if l != k {
                        s += 1.0 / (z[k] - zl);
                    }
                }
                let step = n / (1.0 - n * s);
                if !step.re.is_finite() || !step.im.is_finite() {
                    return None;
                }
                z[k] -= step;
                max_step = max_step.max(step.norm());
            }
            if max_step <= 4.0 * f64::EPSILON * scale {
                settled += 1;
                if settled >= 2 {
                    break;
                }
            }
        }
        self.accept(z, scale)
    }

    fn accept(&self, z: Vec<Complex64>, scale: f64) -> Option<Vec<Complex64>> {
        let m = self.poles.len();
        if z.len() != m + 1 || z.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return None;
        }
        // backward error of each root, or its Newton distance when it sits
        // so close to a pole that f loses relative accuracy
        for &x in &z {
            let mut mag = self.d0.norm() + x.norm();
            let mut fp = Complex64::new(-1.0, 0.0);
            for p in &self.poles {
                let u = 1.0 / (p.pole - x);
                mag += p.coupling * p.coupling * u.norm();
                fp -= p.coupling * p.coupling * u * u;
            }
            let f = self.secular(x);
            if f.norm() > 1e-10 * mag && (f / fp).norm() > 1e-13 * scale {
                return None;
            }
        }
        // distinct roots
        let sep_tol = 1e-11 * scale;
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                if (z[i] - z[j]).norm() < sep_tol {
                    return None;
                }
            }
        }
        // trace of the reduced matrix
        let trace: Complex64 = self.d0 + self.poles.iter().map(|p| p.pole).sum::<Complex64>();
        let total: Complex64 = z.iter().sum();
        if (trace - total).norm() > 1e-10 * scale * (m + 1) as f64 {
            return None;
        }
        Some(z)
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let m = self.poles.len();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a[(0, 0)] = self.d0;
        for (j, p) in self.poles.iter().enumerate() {
            a[(j + 1, j + 1)] = p.pole;
            a[(0, j + 1)] = Complex64::new(p.coupling, 0.0);
            a[(j + 1, 0)] = Complex64::new(p.coupling, 0.0);
        }
        a
    }
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub(crate) fn schur_eigenvalues(m: DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-15, 100_000)?;
    let (_, t) = schur.unpack();
    Some((0..n).map(|k| t[(k, k)]).collect())
}
