// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

//! Spectral hole burning in a cavity coupled to an emitter ensemble.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod linear_response;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod scan;
pub mod singlex;
pub mod units;

pub use dynamics::{
    drive_value, integrate_driven, period_time_scan, pulse_grid_scan, quench_protocol, DriveKind,
    DriveWaveform, MeanFieldState, PhaseFlip,
};
pub use ensemble::{
    apply_disorder, build_comb, burn_holes, collective_coupling, sample_random_ensemble,
    spectral_density, spectral_gaps, Cavity, CombSpec, DisorderSpec, Emitter, Ensemble, HoleSpec,
    HoleWindow, RandomEnsembleSpec, SpectralGap, SpectralTerms,
};
pub use error::{Error, Result};
pub use linear_response::{find_peaks, transmission_at, transmission_sweep, Peak, SpectrumResult};
pub use oracle::{
    build_liouvillian, expectation, propagate, steady_state, DenseOperatorSpace, DrivenLiouvillian,
    LiouvillianProvider, StaticLiouvillian, VectorizedState,
};
pub use runner::{
    gamma_scan, load_config, n_scan, run_scenario, scenario_list, ExperimentConfig, Manifest,
    ScenarioInfo,
};
pub use scan::{Axis, ScanResult};
pub use singlex::{
    build_operator, cavity_sweep_spectrum, eigensolve, evolve_fock, fit_envelope_decay,
    EigenResult, SingleExcitationOperator, TrajectoryResult,
};
pub use units::{PhysicalConstants, HBAR_EV_FS};
