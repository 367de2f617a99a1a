// Copyright 2026 The shb-sim Authors
// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shb_bench::{dense_ensemble, reference_combs};
use shb_core::dynamics::integrate_driven;
use shb_core::oracle::{propagate, DenseOperatorSpace, DrivenLiouvillian, VectorizedState};
use shb_core::singlex::dense_eigenvalues;
use shb_core::{
    build_comb, build_operator, eigensolve, evolve_fock, transmission_sweep, Cavity, CombSpec,
    DriveWaveform,
};

fn spectra(c: &mut Criterion) {
    let (_, burned) = reference_combs();
    c.bench_function("transmission_sweep comb 2001", |b| {
        b.iter(|| transmission_sweep(&burned, 1.8, 2.2, 2001, true).unwrap())
    });
    let mut g = c.benchmark_group("transmission_sweep dense");
    g.sample_size(10);
    for n in [2000, 6000] {
        let e = dense_ensemble(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &e, |b, e| {
            b.iter(|| transmission_sweep(e, 1.8, 2.2, 2001, true).unwrap())
        });
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let (_, burned) = reference_combs();
    let op = build_operator(&burned);
    c.bench_function("eigensolve secular comb", |b| {
        b.iter(|| eigensolve(&op).unwrap())
    });
    c.bench_function("eigensolve dense comb", |b| {
        b.iter(|| dense_eigenvalues(&op).unwrap())
    });
}

fn evolution(c: &mut Criterion) {
    let (_, burned) = reference_combs();
    c.bench_function("evolve_fock 400 fs", |b| {
        b.iter(|| evolve_fock(&burned, 400.0, 0.05).unwrap())
    });
    let w = DriveWaveform::pulse_train(1e-3, 2.0, 42.0);
    c.bench_function("integrate_driven pulse 400 fs", |b| {
        b.iter(|| integrate_driven(&burned, &w, 400.0, 0.1).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let spec = CombSpec {
        n: 3,
        delta_omega: 0.05,
        ..CombSpec::default()
    };
    let e = build_comb(&spec, 0.01, Cavity::default()).unwrap();
    let space = DenseOperatorSpace::new(3, 2).unwrap();
    let l = DrivenLiouvillian::new(&e, &space, &DriveWaveform::off(2.0)).unwrap();
    let rho = VectorizedState::fock(&space, 1);
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("propagate N=3 cutoff 2, 200 fs", |b| {
        b.iter(|| propagate(&l, &rho, 200.0, 1.0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, spectra, eigen, evolution, oracle);
criterion_main!(benches);
