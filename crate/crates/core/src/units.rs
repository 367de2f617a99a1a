// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Unit conventions: energies and rates in eV, times in fs.
//!
//! A rate `r` quoted in eV enters a time-domain equation as `r / HBAR_EV_FS`
//! (per fs).

use serde::{Deserialize, Serialize};

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    hbar: f64,
}

impl PhysicalConstants {
    pub const fn hbar(&self) -> f64 {
        self.hbar
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: HBAR_EV_FS }
    }
}

/// Angular frequency (rad/fs) of an energy in eV.
#[inline]
pub fn to_angular(energy_ev: f64) -> f64 {
    energy_ev / HBAR_EV_FS
}

/// Period in fs of an oscillation whose energy quantum is `energy_ev`.
pub fn period_fs(energy_ev: f64) -> f64 {
    2.0 * std::f64::consts::PI * HBAR_EV_FS / energy_ev
}
