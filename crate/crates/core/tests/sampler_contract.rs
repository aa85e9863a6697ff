use std::fs;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rapinn::cases::build_case;
use rapinn::sampler::{
    adaptive_resample, dump_csv, fresh_pool, initial_set, quadrature_grid, Edge, SamplerConfig,
    SamplerError, QUAD_N,
};

fn cfg(n_interior: usize, keep: f64) -> SamplerConfig {
    SamplerConfig { n_interior, keep_fraction: keep, ..Default::default() }
}

#[test]
fn defaults_match_frozen_values() {
    let c = SamplerConfig::default();
    assert_eq!(
        (c.n_interior, c.n_boundary, c.n_interface, c.pool_size, c.resample_period),
        (2000, 400, 200, 8000, 500)
    );
    assert_eq!((c.keep_fraction, c.power_k), (0.3, 1.0));
    assert_eq!(c.kept_count(), 600);
}

#[test]
fn initial_set_geometry() {
    let case = build_case(1, None).unwrap();
    let set = initial_set(&case, &SamplerConfig::default());
    assert_eq!(set.interior.len(), 2000);
    assert!(set.interior.iter().all(|&[x, y]| x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0));
    assert_eq!(set.boundary.len(), 400);
    for b in &set.boundary {
        let on_edge = b.x == 0.0 || b.x == 1.0 || b.y == 0.0 || b.y == 1.0;
        assert!(on_edge, "({}, {}) not on the boundary", b.x, b.y);
    }
    assert!(set.interface.is_empty());
    assert_eq!(set.quadrature.len(), QUAD_N * QUAD_N);
    assert_eq!(set.generation, 0);
}

#[test]
fn boundary_equidistribution() {
    let case = build_case(1, None).unwrap();
    let set = initial_set(&case, &SamplerConfig { n_boundary: 8, ..Default::default() });
    for edge in [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left] {
        assert_eq!(set.boundary.iter().filter(|b| b.edge == edge).count(), 2);
    }
}

#[test]
fn interface_points_on_gamma() {
    let case = build_case(4, None).unwrap();
    let set = initial_set(&case, &SamplerConfig { n_interface: 3, ..Default::default() });
    let expect = [[0.7, 0.0], [0.5, 0.5], [0.3, 1.0]];
    for (p, e) in set.interface.iter().zip(expect) {
        assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12, "{p:?} vs {e:?}");
    }
    let iface = case.interface.unwrap();
    let big = initial_set(&case, &SamplerConfig::default());
    assert_eq!(big.interface.len(), 200);
    assert!(big.interface.iter().all(|&[x, y]| iface.g(x, y).abs() < 1e-12));
}

#[test]
fn initial_set_is_deterministic() {
    let case = build_case(4, None).unwrap();
    let c = SamplerConfig { rng_seed: 42, ..Default::default() };
    assert_eq!(initial_set(&case, &c), initial_set(&case, &c));
    let other = SamplerConfig { rng_seed: 43, ..Default::default() };
    assert_ne!(initial_set(&case, &c).interior, initial_set(&case, &other).interior);
}

#[test]
fn quadrature_is_interior_centered() {
    let q = quadrature_grid();
    assert_eq!(q[0], [0.5 / 64.0, 0.5 / 64.0]);
    assert!(q.iter().all(|&[x, y]| x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0));
    // Uniform weights integrate x to 1/2 exactly (midpoint rule, linear integrand).
    let mean_x: f64 = q.iter().map(|p| p[0]).sum::<f64>() / q.len() as f64;
    assert!((mean_x - 0.5).abs() < 1e-13);
}

#[test]
fn resample_top_m_example() {
    let case = build_case(1, None).unwrap();
    let c = cfg(2, 1.0); // kept = 2, no refill
    let set = initial_set(&case, &c);
    let pool = [[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4]];
    let next = adaptive_resample(&set, &pool, &[5.0, 2.0, 9.0, 1.0], &c).unwrap();
    assert_eq!(next.interior, vec![[0.3, 0.3], [0.1, 0.1]]); // indices 2 then 0
    assert_eq!(next.generation, 1);
}

#[test]
fn resample_equal_scores_keep_first_indices() {
    let case = build_case(1, None).unwrap();
    let c = cfg(10, 0.5); // kept = 5
    let set = initial_set(&case, &c);
    let pool: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 20.0, 0.5]).collect();
    let next = adaptive_resample(&set, &pool, &vec![1.0; 20], &c).unwrap();
    assert_eq!(&next.interior[..5], &pool[..5]);
}

#[test]
fn resample_preserves_fixed_sets() {
    let case = build_case(4, None).unwrap();
    let c = SamplerConfig::default();
    let set = initial_set(&case, &c);
    let pool = fresh_pool(&c, 1);
    let ind: Vec<f64> = (0..pool.len()).map(|i| (i % 97) as f64).collect();
    let next = adaptive_resample(&set, &pool, &ind, &c).unwrap();
    assert_eq!(next.boundary, set.boundary);
    assert_eq!(next.interface, set.interface);
    assert_eq!(next.quadrature, set.quadrature);
    assert_eq!(next.interior.len(), c.n_interior);
}

#[test]
fn resample_errors() {
    let case = build_case(1, None).unwrap();
    let c = cfg(100, 0.5);
    let set = initial_set(&case, &c);
    let pool = [[0.5, 0.5]; 10];
    assert!(matches!(
        adaptive_resample(&set, &pool, &[0.0; 10], &c),
        Err(SamplerError::PoolTooSmall { pool: 10, kept: 50 })
    ));
    let pool = [[0.5, 0.5]; 60];
    assert!(matches!(
        adaptive_resample(&set, &pool, &[0.0; 10], &c),
        Err(SamplerError::IndicatorMismatch { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn kept_set_matches_brute_force_sort(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg(40, 0.5); // kept = 20
        let case = build_case(1, None).unwrap();
        let set = initial_set(&case, &c);
        let pool: Vec<[f64; 2]> = (0..100).map(|_| [rng.gen(), rng.gen()]).collect();
        // Coarse scores force plenty of ties.
        let ind: Vec<f64> = (0..100).map(|_| (rng.gen::<f64>() * 5.0).floor()).collect();
        let next = adaptive_resample(&set, &pool, &ind, &c).unwrap();

        let mut order: Vec<usize> = (0..100).collect();
        order.sort_by(|&a, &b| {
            ind[b].partial_cmp(&ind[a]).unwrap().then(a.cmp(&b))
        });
        let expect: Vec<[f64; 2]> = order[..20].iter().map(|&i| pool[i]).collect();
        prop_assert_eq!(&next.interior[..20], &expect[..]);
    }
}

#[test]
fn concentrated_indicator_focuses_kept_points() {
    // Indicator supported on a disk of radius 0.1: every kept point lands in
    // the disk, versus ~pi/100 expected under uniform sampling.
    let case = build_case(1, None).unwrap();
    for seed in 0..10u64 {
        let c = SamplerConfig { n_interior: 500, rng_seed: seed, ..Default::default() };
        let kept = c.kept_count();
        let set = initial_set(&case, &c);
        let pool = fresh_pool(&c, 1);
        let in_disk =
            |p: &[f64; 2]| (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) < 0.01;
        let ind: Vec<f64> = pool.iter().map(|p| if in_disk(p) { 1.0 } else { 0.0 }).collect();
        assert!(ind.iter().sum::<f64>() >= kept as f64, "pool starves the disk at seed {seed}");
        let next = adaptive_resample(&set, &pool, &ind, &c).unwrap();
        let frac = next.interior[..kept].iter().filter(|p| in_disk(p)).count() as f64
            / kept as f64;
        assert_eq!(frac, 1.0);
    }
}

#[test]
fn zero_keep_fraction_is_fresh_uniform() {
    let case = build_case(1, None).unwrap();
    let mut means = Vec::new();
    for seed in 0..20u64 {
        let c = SamplerConfig { n_interior: 400, keep_fraction: 0.0, rng_seed: seed, ..Default::default() };
        let set = initial_set(&case, &c);
        let pool = fresh_pool(&c, 1);
        let ind = vec![1.0; pool.len()];
        let next = adaptive_resample(&set, &pool, &ind, &c).unwrap();
        assert_eq!(next.interior.len(), 400);
        assert!(next.interior.iter().all(|p| !pool.contains(p)));
        means.push(next.interior.iter().map(|p| p[0] + p[1]).sum::<f64>() / 400.0);
    }
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    // E[x + y] = 1, sd of the per-seed mean ~ 0.02
    assert!((grand - 1.0).abs() < 0.02, "grand mean {grand}");
}

#[test]
fn csv_dump_round_trips_counts() {
    let case = build_case(4, None).unwrap();
    let c = SamplerConfig { n_interior: 30, n_boundary: 8, n_interface: 5, ..Default::default() };
    let set = initial_set(&case, &c);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("colloc.csv");
    dump_csv(&set, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kind,x,y");
    let mut counts = std::collections::HashMap::new();
    for line in lines {
        let mut cols = line.split(',');
        let kind = cols.next().unwrap().to_string();
        let _: f64 = cols.next().unwrap().parse().unwrap();
        let _: f64 = cols.next().unwrap().parse().unwrap();
        *counts.entry(kind).or_insert(0usize) += 1;
    }
    assert_eq!(counts["interior"], 30);
    assert_eq!(counts["boundary"], 8);
    assert_eq!(counts["interface"], 5);
}
