//! Parallel vs sequential throughput on the two data-parallel hot paths:
//! Monte Carlo CRM sampling and batched triplet round trips. The parallel
//! numbers use the rayon-backed dispatch (the crate default); the
//! sequential numbers call the always-available fallback.

use criterion::{criterion_group, criterion_main, Criterion};

use qid_core::crm::{
    sample, sample_sequential, CrmSpec, Domain, FixedAtom, PiecewiseDensity, WeightsRate,
};
use qid_core::exec;
use qid_core::qid_lattice::{triplet_from_pmf, triplet_to_pmf};
use qid_core::FinitePmf;

fn fixture_spec() -> CrmSpec {
    CrmSpec {
        domain: Domain::new(vec![(0.0, 1.0)]).unwrap(),
        drift: PiecewiseDensity::new(vec![(0.0, 0.5, 0.3)]).unwrap(),
        weights_rate: WeightsRate::Atoms(vec![(0.5, 1.0), (1.5, 0.5)]),
        locations: PiecewiseDensity::new(vec![(0.0, 1.0, 1.0)]).unwrap(),
        fixed_atoms: vec![FixedAtom {
            location: 0.25,
            weight_law: FinitePmf::new(0.0, 1.0, vec![2.0 / 3.0, 1.0 / 3.0]).unwrap(),
        }],
    }
}

/// Deterministic family of extractable pmfs for the round-trip batch.
fn round_trip_pmfs() -> Vec<FinitePmf> {
    let mut state = 0xB17_5EEDu64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut pmfs = Vec::new();
    while pmfs.len() < 64 {
        let degree = 2 + (next() * 7.0) as usize;
        let weights: Vec<f64> = (0..=degree).map(|_| 0.05 + next()).collect();
        let pmf = FinitePmf::normalized(0.0, 1.0, weights).unwrap();
        if let Ok(t) = triplet_from_pmf(&pmf, 1e-9, 1e-12) {
            if t.qlm.total_variation() <= 8.0 && t.qlm.weights().len() <= 500 {
                pmfs.push(pmf);
            }
        }
    }
    pmfs
}

fn bench_crm_sample(c: &mut Criterion) {
    let spec = fixture_spec();
    let mut group = c.benchmark_group("crm_sample_10k");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| sample(&spec, 7, 10_000).unwrap());
    });
    group.bench_function("sequential", |b| {
        b.iter(|| sample_sequential(&spec, 7, 10_000).unwrap());
    });
    group.finish();
}

fn bench_triplet_round_trip(c: &mut Criterion) {
    let pmfs = round_trip_pmfs();
    let work = |i: usize| {
        let t = triplet_from_pmf(&pmfs[i], 1e-9, 1e-12).unwrap();
        triplet_to_pmf(&t, 1e-12).unwrap()
    };
    let mut group = c.benchmark_group("triplet_round_trip_64");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_indexed(pmfs.len(), work));
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_indexed_seq(pmfs.len(), work));
    });
    group.finish();
}

criterion_group!(benches, bench_crm_sample, bench_triplet_round_trip);
criterion_main!(benches);
