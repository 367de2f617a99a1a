// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use shb_core::{
    build_comb, burn_holes, sample_random_ensemble, Cavity, CombSpec, Ensemble, HoleSpec,
    RandomEnsembleSpec,
};

/// The 50-tooth reference comb, unburned and burned.
pub fn reference_combs() -> (Ensemble, Ensemble) {
    let e = build_comb(&CombSpec::default(), 0.01, Cavity::default()).expect("reference comb");
    let b = burn_holes(&e, &HoleSpec::reference()).expect("reference burn");
    (e, b)
}

pub fn dense_ensemble(n: usize) -> Ensemble {
    let spec = RandomEnsembleSpec {
        n,
        ..RandomEnsembleSpec::default()
    };
    sample_random_ensemble(&spec, 0.01, Cavity::default()).expect("dense ensemble")
}
