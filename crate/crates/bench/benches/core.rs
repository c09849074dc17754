use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use crtnd_core::estimators::{tpf_expected, tpf_solve};
use crtnd_core::inference::{exact_difference_in_means_test, permutation_distribution_test, PermutationMode};
use crtnd_core::simulation::{simulate_parallel, simulate_stepped_wedge, Baselines, SimScenario};
use crtnd_core::{Assignment, AssignmentScheme};

fn outcomes(m: usize) -> (Vec<f64>, Vec<bool>) {
    let u = (0..m).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3 + i as f64 * 0.01).collect();
    let treated = (0..m).map(|i| i % 2 == 0).collect();
    (u, treated)
}

fn diff(u: &[f64], a: &Assignment) -> f64 {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0, 0.0, 0);
    for (i, v) in u.iter().enumerate() {
        if a.is_treated(i) {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    s1 / n1 as f64 - s0 / n0 as f64
}

fn exact_test(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_difference_in_means");
    g.sample_size(10);
    for m in [12usize, 16] {
        let (u, treated) = outcomes(m);
        g.bench_with_input(BenchmarkId::new("split_half", m), &m, |b, _| {
            b.iter(|| exact_difference_in_means_test(black_box(&u), &treated, u64::MAX).unwrap())
        });
        let scheme = AssignmentScheme::parallel(m, m / 2).unwrap();
        let a = Assignment(treated.iter().map(|&t| t as usize).collect());
        let obs = diff(&u, &a);
        g.bench_with_input(BenchmarkId::new("enumeration", m), &m, |b, _| {
            b.iter(|| {
                permutation_distribution_test(&scheme, obs, 2.0, PermutationMode::Exact { cap: u64::MAX }, |a| {
                    Ok(diff(black_box(&u), a))
                })
                .unwrap()
            })
        });
    }
    let (u, treated) = outcomes(30);
    g.bench_function("split_half/30", |b| {
        b.iter(|| exact_difference_in_means_test(black_box(&u), &treated, u64::MAX).unwrap())
    });
    g.finish();
}

fn tpf(c: &mut Criterion) {
    let cases: Vec<(f64, f64)> = (0..50)
        .flat_map(|i| (0..50).map(move |j| (0.05 * 400f64.powf(i as f64 / 49.0), 0.1 * 500f64.powf(j as f64 / 49.0))))
        .map(|(lambda, r)| (tpf_expected(lambda, r), r))
        .collect();
    c.bench_function("tpf_solve/2500", |b| {
        b.iter(|| {
            for &(t, r) in &cases {
                black_box(tpf_solve(t, r).unwrap());
            }
        })
    });
}

fn replicates(c: &mut Criterion) {
    let baselines = Baselines::builtin();
    let mut g = c.benchmark_group("replicate_generation");
    let mut s = SimScenario::default_parallel();
    s.n_replicates = 1000;
    g.bench_function("parallel/1000", |b| {
        b.iter(|| simulate_parallel(&s, &baselines.parallel).unwrap())
    });
    let mut s = SimScenario::default_stepped_wedge();
    s.n_replicates = 1000;
    let sw = baselines.stepped_wedge.clone().unwrap();
    g.bench_function("stepped_wedge/1000", |b| {
        b.iter(|| simulate_stepped_wedge(&s, &sw).unwrap())
    });
    g.finish();
}

criterion_group!(benches, exact_test, tpf, replicates);
criterion_main!(benches);
