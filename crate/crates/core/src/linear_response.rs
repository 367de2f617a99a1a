// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed-form transmission of the dressed cavity in the low-drive limit.
//!
//! `T(ω) = 1 / |Δa − Ω²δ(ω) − i[κ + Ω²ρ(ω)]/2|²` with `Δa = ωa − ω`. The
//! proportionality constant is fixed to one.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{spectral_density, Ensemble};
use crate::error::{Error, Result};

pub const DEFAULT_SWEEP_MIN: f64 = 1.8;
pub const DEFAULT_SWEEP_MAX: f64 = 2.2;
pub const DEFAULT_SWEEP_POINTS: usize = 2001;
/// Minimum peak prominence as a fraction of the curve maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.02;

const TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub height: f64,
    /// Full width at half prominence (eV).
    pub fwhm: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: bool,
    pub peaks: Vec<Peak>,
}

/// Complex denominator `D = Δa − Ω²δ − i(κ + Ω²ρ)/2`. Without emitter drive
/// the steady cavity field is `−Ωa / D`.
pub fn response_denominator(e: &Ensemble, omega: f64) -> Result<Complex64> {
    let terms = spectral_density(e, omega)?;
    let cav = e.cavity();
    Ok(Complex64::new(
        cav.omega_a - omega - terms.delta_term,
        -0.5 * (cav.kappa + terms.rho_term),
    ))
}

pub fn transmission_at(e: &Ensemble, omega: f64) -> Result<f64> {
    let d = response_denominator(e, omega)?.norm_sqr();
    if d == 0.0 {
        return Err(Error::SingularEvaluation { omega });
    }
    Ok(1.0 / d)
}

/// Uniform grid of `n` points on `[lo, hi]`; the last point is exactly `hi`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + step * k as f64 })
        .collect()
}

pub fn transmission_sweep(
    e: &Ensemble,
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
    normalize: bool,
) -> Result<SpectrumResult> {
    transmission_sweep_with(
        e,
        omega_min,
        omega_max,
        n_points,
        normalize,
        DEFAULT_PROMINENCE,
    )
}

pub fn transmission_sweep_with(
    e: &Ensemble,
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
    normalize: bool,
    prominence: f64,
) -> Result<SpectrumResult> {
    if !(omega_min < omega_max) {
        return Err(Error::invalid(
            "sweep",
            format!("omega_min {omega_min} must be below omega_max {omega_max}"),
        ));
    }
    if n_points < 2 {
        return Err(Error::invalid("sweep.n_points", "need at least 2 points"));
    }
    let omegas = uniform_grid(omega_min, omega_max, n_points);
    let mut values = omegas
        .par_iter()
        .map(|&w| transmission_at(e, w))
        .collect::<Result<Vec<f64>>>()?;
    if normalize {
        let max = values.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
    }
    let mut s = SpectrumResult {
        omegas,
        values,
        normalized: normalize,
        peaks: Vec::new(),
    };
    s.peaks = find_peaks(&s, prominence);
    Ok(s)
}

/// Local maxima whose topographic prominence is at least `prominence` times
/// the curve maximum, sorted by center.
pub fn find_peaks(s: &SpectrumResult, prominence: f64) -> Vec<Peak> {
    find_peaks_in(&s.omegas, &s.values, prominence)
}

pub fn find_peaks_in(xs: &[f64], ys: &[f64], prominence: f64) -> Vec<Peak> {
    let n = ys.len();
    if n < 3 || xs.len() != n {
        return Vec::new();
    }
    let max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = prominence * max;
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if !(ys[i] > ys[i - 1]) {
            i += 1;
            continue;
        }
        // plateau: advance to its right end
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 >= n || ys[j + 1] > ys[i] {
            i = j + 1;
            continue;
        }
        let top = (i + j) / 2;
        let h = ys[top];
        // samples within rounding of h do not end the base search, so mirror
        // images of one peak get the same prominence
        let higher = h + TIE_RTOL * h.abs();

        let mut left_min = h;
        let mut left_base = i;
        for k in (0..i).rev() {
            if ys[k] > higher {
                break;
            }
            if ys[k] < left_min {
                left_min = ys[k];
                left_base = k;
            }
        }
        let mut right_min = h;
        let mut right_base = j;
        for (k, &y) in ys.iter().enumerate().skip(j + 1) {
            if y > higher {
                break;
            }
            if y < right_min {
                right_min = y;
                right_base = k;
            }
        }
        let prom = h - left_min.max(right_min);
        if prom >= threshold && prom > 0.0 {
            let level = h - 0.5 * prom;
            let mut l = top;
            while l > left_base && ys[l] > level {
                l -= 1;
            }
            let x_left = if ys[l] <= level {
                interpolate_crossing(xs[l], ys[l], xs[l + 1], ys[l + 1], level)
            } else {
                xs[l]
            };
            let mut r = top;
            while r < right_base && ys[r] > level {
                r += 1;
            }
            let x_right = if ys[r] <= level {
                interpolate_crossing(xs[r - 1], ys[r - 1], xs[r], ys[r], level)
            } else {
                xs[r]
            };
            let (center, height) = if i == j {
                parabolic_vertex(xs, ys, top)
            } else {
                (0.5 * (xs[i] + xs[j]), h)
            };
            peaks.push(Peak {
                center,
                height,
                fwhm: x_right - x_left,
                prominence: prom,
            });
        }
        i = j + 1;
    }
    peaks
}

fn interpolate_crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}

/// Vertex of the parabola through three samples around `k`, clamped to the
/// neighbouring grid points.
fn parabolic_vertex(xs: &[f64], ys: &[f64], k: usize) -> (f64, f64) {
    let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return (xs[k], y1);
    }
    let p = (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0);
    let step = if p >= 0.0 {
        xs[k + 1] - xs[k]
    } else {
        xs[k] - xs[k - 1]
    };
    (xs[k] + p * step, y1 - 0.25 * (y0 - y2) * p)
}

impl SpectrumResult {
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Writes `omega_ev,transmission` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["omega_ev", "transmission"])?;
        for (x, y) in self.omegas.iter().zip(&self.values) {
            w.write_record([format!("{x:.10}"), format!("{y:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_peaks_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.peaks)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{
        build_comb, burn_holes, Cavity, CombSpec, Emitter, HoleSpec, REFERENCE_GAMMA,
    };

    fn lorentzian(x: f64, c: f64, w: f64) -> f64 {
        let h = 0.5 * w;
        h * h / ((x - c) * (x - c) + h * h)
    }

    #[test]
    fn bare_cavity_is_lorentzian() {
        let e = Ensemble::empty(Cavity::default(), 0.01).unwrap();
        for w in [1.8, 1.95, 2.0, 2.07] {
            let t = transmission_at(&e, w).unwrap();
            let expect = 1.0 / ((2.0 - w) * (2.0 - w) + 0.0025);
            assert!((t - expect).abs() < 1e-12 * expect);
        }
        let s = transmission_sweep(&e, 1.8, 2.2, 2001, true).unwrap();
        let k = s
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(k, 1000);
        assert_eq!(s.values[1000], 1.0);
        assert_eq!(s.peaks.len(), 1);
        // the window edges set the base: width at level (1 + b)/2
        let b = s.values[0];
        let level = 0.5 * (1.0 + b);
        let expect = 2.0 * 0.05 * (1.0 / level - 1.0).sqrt();
        assert!((s.peaks[0].fwhm - expect).abs() < 2e-4, "{:?}", s.peaks);
    }

    #[test]
    fn lossless_pole_is_singular() {
        let cav = Cavity {
            omega_a: 2.0,
            kappa: 0.0,
        };
        let e = Ensemble::empty(cav, 0.0).unwrap();
        assert!(matches!(
            transmission_at(&e, 2.0),
            Err(Error::SingularEvaluation { .. })
        ));
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let e = Ensemble::empty(Cavity::default(), 0.01).unwrap();
        assert!(transmission_sweep(&e, 2.2, 1.8, 11, true).is_err());
        assert!(transmission_sweep(&e, 1.8, 2.2, 1, true).is_err());
    }

    #[test]
    fn synthetic_lorentzian_width() {
        let xs = uniform_grid(1.0, 3.0, 2000);
        let ys: Vec<f64> = xs.iter().map(|&x| lorentzian(x, 2.0, 0.1)).collect();
        let p = find_peaks_in(&xs, &ys, 0.02);
        assert_eq!(p.len(), 1);
        let step = xs[1] - xs[0];
        assert!((p[0].fwhm - 0.1).abs() <= step);
        assert!((p[0].center - 2.0).abs() <= step);
    }

    #[test]
    fn two_lorentzians_recovered() {
        let xs = uniform_grid(1.8, 2.2, 2001);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| lorentzian(x, 1.9, 0.01) + 0.6 * lorentzian(x, 2.1, 0.02))
            .collect();
        let p = find_peaks_in(&xs, &ys, 0.02);
        assert_eq!(p.len(), 2);
        assert!((p[0].center - 1.9).abs() < 2e-5);
        assert!((p[1].center - 2.1).abs() < 2e-5);
        assert!((p[0].fwhm - 0.01).abs() < 4e-4);
        assert!((p[1].fwhm - 0.02).abs() < 4e-4);
    }

    #[test]
    fn mirror_peaks_get_equal_widths() {
        // twin peaks over a sloped background; tiny rounding noise on one side
        let xs = uniform_grid(1.8, 2.2, 2001);
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let y = lorentzian(x, 1.9, 0.01)
                    + lorentzian(x, 2.1, 0.01)
                    + 0.3 * lorentzian(x, 2.0, 0.3);
                if k > 1000 {
                    y * (1.0 + 1e-14)
                } else {
                    y
                }
            })
            .collect();
        let p = find_peaks_in(&xs, &ys, 0.1);
        assert_eq!(p.len(), 2);
        assert!((p[0].fwhm - p[1].fwhm).abs() < 1e-9, "{p:?}");
        assert!((p[0].prominence - p[1].prominence).abs() < 1e-9);
    }

    #[test]
    fn flat_and_monotone_have_no_peaks() {
        let xs = uniform_grid(0.0, 1.0, 50);
        assert!(find_peaks_in(&xs, &vec![1.0; 50], 0.02).is_empty());
        assert!(find_peaks_in(&xs, &xs, 0.02).is_empty());
        assert!(find_peaks_in(&xs[..2], &xs[..2], 0.02).is_empty());
    }

    #[test]
    fn small_ripple_below_prominence_is_ignored() {
        let xs = uniform_grid(1.0, 3.0, 2001);
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| lorentzian(x, 2.0, 0.3) + 0.005 * (200.0 * x).sin())
            .collect();
        let p = find_peaks_in(&xs, &ys, 0.02);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn burned_comb_shows_two_narrow_peaks() {
        let comb = build_comb(&CombSpec::default(), REFERENCE_GAMMA, Cavity::default()).unwrap();
        let burned = burn_holes(&comb, &HoleSpec::reference()).unwrap();
        let s = transmission_sweep(&burned, 1.8, 2.2, 2001, true).unwrap();
        // tooth ripple on the background stays below 0.1 prominence
        let narrow: Vec<&Peak> = s.peaks.iter().filter(|p| p.prominence > 0.1).collect();
        assert_eq!(narrow.len(), 2, "{:?}", s.peaks);
        assert!((narrow[0].center - 1.898).abs() < 0.01);
        assert!((narrow[1].center - 2.102).abs() < 0.01);

        // the unburned comb has no sub-κ features
        let s0 = transmission_sweep(&comb, 1.8, 2.2, 2001, true).unwrap();
        assert!(
            s0.peaks
                .iter()
                .filter(|p| p.prominence > 0.1)
                .all(|p| p.fwhm > 0.05),
            "{:?}",
            s0.peaks
        );
    }

    #[test]
    fn burning_changes_spectrum_only_near_holes() {
        let comb = build_comb(&CombSpec::default(), REFERENCE_GAMMA, Cavity::default()).unwrap();
        let burned = burn_holes(&comb, &HoleSpec::reference()).unwrap();
        let a = transmission_sweep(&comb, 1.8, 2.2, 401, false).unwrap();
        let b = transmission_sweep(&burned, 1.8, 2.2, 401, false).unwrap();
        let mut in_hole = 0.0f64;
        let mut far = 0.0f64;
        for (k, &w) in a.omegas.iter().enumerate() {
            let rel = ((b.values[k] - a.values[k]) / a.values[k]).abs();
            let near = (w - 1.898).abs() < 0.03 || (w - 2.102).abs() < 0.03;
            if near {
                in_hole = in_hole.max(rel);
            } else if (w - 2.0).abs() > 0.19 || (w - 2.0).abs() < 0.05 {
                far = far.max(rel);
            }
        }
        assert!(in_hole > 5.0 * far, "in {in_hole} far {far}");
    }

    #[test]
    fn hole_center_transmission_does_not_drop() {
        let comb = build_comb(&CombSpec::default(), REFERENCE_GAMMA, Cavity::default()).unwrap();
        let burned = burn_holes(&comb, &HoleSpec::reference()).unwrap();
        let w = CombSpec::default().tooth(13);
        let before = spectral_density(&comb, w).unwrap().rho_term;
        let after = spectral_density(&burned, w).unwrap().rho_term;
        assert!(after < before);
        assert!(transmission_at(&burned, w).unwrap() >= transmission_at(&comb, w).unwrap());
    }

    /// Independent re-summation of the dressed terms, Kahan-compensated and
    /// in reverse order.
    fn oracle_terms(e: &Ensemble, omega: f64) -> (f64, f64) {
        let (mut rho, mut c_rho, mut del, mut c_del) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let g2 = e.gamma() * e.gamma() / 4.0;
        for em in e.emitters().iter().rev() {
            let d = em.omega - omega;
            let k = em.g * em.g / (g2 + d * d);
            let y = k * e.gamma() - c_rho;
            let t = rho + y;
            c_rho = (t - rho) - y;
            rho = t;
            let y = k * d - c_del;
            let t = del + y;
            c_del = (t - del) - y;
            del = t;
        }
        (rho, del)
    }

    #[test]
    fn dressed_terms_match_resummation() {
        let comb = build_comb(&CombSpec::default(), REFERENCE_GAMMA, Cavity::default()).unwrap();
        let t = spectral_density(&comb, 1.95).unwrap();
        let (rho, del) = oracle_terms(&comb, 1.95);
        assert!((t.rho_term - rho).abs() < 1e-12 * rho.abs());
        assert!((t.delta_term - del).abs() < 1e-12 * del.abs());
    }

    #[test]
    fn single_emitter_transmission() {
        let e = Ensemble::new(
            Cavity::default(),
            0.01,
            vec![Emitter {
                index: 1,
                omega: 2.0,
                g: 0.05,
            }],
        )
        .unwrap();
        // resonance: Δ = 0, ρ-term = 4g²/Γ
        let expect = 1.0 / (0.25 * (0.1f64 + 4.0 * 0.0025 / 0.01).powi(2));
        assert!((transmission_at(&e, 2.0).unwrap() - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn csv_and_sidecar_written() {
        let e = Ensemble::empty(Cavity::default(), 0.01).unwrap();
        let s = transmission_sweep(&e, 1.8, 2.2, 11, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("omega_ev,transmission\n"));
        assert_eq!(text.lines().count(), 12);
        let j = dir.path().join("s.json");
        s.write_peaks_json(&j).unwrap();
        let peaks: Vec<Peak> = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(peaks, s.peaks);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn ensemble_strategy() -> impl Strategy<Value = Ensemble> {
            (
                prop::collection::vec((1.8f64..2.2, 0.0f64..0.05), 0..12),
                0.0f64..0.3,
                0.001f64..0.05,
            )
                .prop_map(|(ems, kappa, gamma)| {
                    let emitters = ems
                        .into_iter()
                        .enumerate()
                        .map(|(i, (omega, g))| Emitter {
                            index: i + 1,
                            omega,
                            g,
                        })
                        .collect();
                    Ensemble::new(
                        Cavity {
                            omega_a: 2.0,
                            kappa: kappa + 1e-3,
                        },
                        gamma,
                        emitters,
                    )
                    .unwrap()
                })
        }

        proptest! {
            #[test]
            fn transmission_positive_and_bounded(e in ensemble_strategy(), w in 1.5f64..2.5) {
                let t = transmission_at(&e, w).unwrap();
                let terms = spectral_density(&e, w).unwrap();
                prop_assert!(t > 0.0);
                prop_assert!(terms.rho_term >= 0.0);
                let floor = 0.5 * (e.cavity().kappa + terms.rho_term);
                prop_assert!(t <= 1.0 / (floor * floor) * (1.0 + 1e-12));
            }

            #[test]
            fn empty_ensemble_argmax_is_center(kappa in 0.01f64..0.5, n in 1usize..200) {
                let cav = Cavity { omega_a: 2.0, kappa };
                let e = Ensemble::empty(cav, 0.01).unwrap();
                let s = transmission_sweep(&e, 1.8, 2.2, 2 * n + 1, true).unwrap();
                let k = s.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
                prop_assert_eq!(k, n);
            }

            #[test]
            fn permutation_invariant(e in ensemble_strategy(), w in 1.8f64..2.2) {
                let mut ems: Vec<Emitter> = e.emitters().to_vec();
                ems.reverse();
                let f = Ensemble::new(e.cavity(), e.gamma(), ems).unwrap();
                prop_assert_eq!(transmission_at(&e, w).unwrap(), transmission_at(&f, w).unwrap());
            }
        }
    }
}
