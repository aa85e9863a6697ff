use std::fs;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rapinn::cases::build_case;
use rapinn::derivkit::Jet2;
use rapinn::network::{checkpoint, init_params, Arch, FieldState, NetworkConfig, ParamVector};
use rapinn::sampler::{initial_set, SamplerConfig};
use rapinn::training::{
    adam_step, assemble_loss, assemble_loss_pointwise, loss_and_grad, train, AdamState,
    LossWeights, TrainError, TrainLog, TrainSchedule,
};

fn small_cfg() -> NetworkConfig {
    NetworkConfig::new(Arch::RaPinn, 8, 2, 7)
}

fn small_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_interior: 40,
        n_boundary: 16,
        n_interface: 10,
        pool_size: 120,
        resample_period: 500,
        rng_seed: seed,
        ..Default::default()
    }
}

#[test]
fn default_weights_are_frozen() {
    let w = LossWeights::default();
    assert_eq!(
        (w.lambda_res, w.lambda_b, w.lambda_data, w.lambda_reg, w.lambda_gauge, w.lambda_gamma),
        (1.0, 1.0, 0.0, 0.0, 10.0, 10.0)
    );
}

#[test]
fn exact_surrogate_zeroes_physics_channels() {
    for id in 1..=4u8 {
        let case = build_case(id, None).unwrap();
        let colloc = initial_set(&case, &small_sampler(3));
        let (_, ch) =
            assemble_loss_pointwise(|x, y| case.reference.eval(x, y), &case, &colloc, &LossWeights::default());
        assert!(ch.residual < 1e-20, "case {id} residual {}", ch.residual);
        assert!(ch.boundary < 1e-20, "case {id} boundary {}", ch.boundary);
        assert!(ch.gauge < 1e-20, "case {id} gauge {}", ch.gauge);
        assert!(ch.interface < 1e-20, "case {id} interface {}", ch.interface);
    }
}

#[test]
fn inactive_channels_are_exactly_zero() {
    let case = build_case(1, None).unwrap();
    let cfg = small_cfg();
    let params = init_params(&cfg, 1);
    let colloc = initial_set(&case, &small_sampler(4));
    let w = LossWeights { lambda_gauge: 123.0, lambda_gamma: -0.0 + 456.0, ..Default::default() };
    let (_, ch) = assemble_loss(&params, &cfg, &case, &colloc, &w).unwrap();
    assert_eq!(ch.gauge, 0.0);
    assert_eq!(ch.interface, 0.0);
    assert_eq!(ch.data, 0.0);
    assert_eq!(ch.reg, 0.0);
}

#[test]
fn zero_network_loss_matches_brute_force() {
    let case = build_case(1, None).unwrap();
    let cfg = small_cfg();
    let params = ParamVector::zeros(&cfg);
    let colloc = initial_set(&case, &small_sampler(5));
    let w = LossWeights::default();
    let (total, ch) = assemble_loss(&params, &cfg, &case, &colloc, &w).unwrap();

    // Direct summation over the collocation set.
    let mut res = 0.0;
    for &[x, y] in &colloc.interior {
        let s = case.source_at(x, y);
        res += s.iter().map(|v| v * v).sum::<f64>();
    }
    res /= colloc.interior.len() as f64;
    let mut bnd = 0.0;
    for b in &colloc.boundary {
        let d = case.boundary_data(b.x, b.y);
        bnd += d.iter().map(|v| v * v).sum::<f64>();
    }
    bnd /= colloc.boundary.len() as f64;

    assert!((ch.residual - res).abs() < 1e-12 * res.max(1.0));
    assert!((ch.boundary - bnd).abs() < 1e-12 * bnd.max(1.0));
    assert!((total - (res + bnd)).abs() < 1e-12 * total.max(1.0));
}

#[test]
fn batched_loss_matches_pointwise_network_eval() {
    // Cross-validates the GEMM path against per-point forward inside the
    // full loss, for every case (gauge and interface channels included).
    for id in 1..=4u8 {
        let case = build_case(id, None).unwrap();
        let cfg = small_cfg();
        let params = init_params(&cfg, 11 + id as u64);
        let colloc = initial_set(&case, &small_sampler(6));
        let w = LossWeights { lambda_data: 0.5, ..Default::default() };
        let (total, ch) = assemble_loss(&params, &cfg, &case, &colloc, &w).unwrap();
        let (total_pw, ch_pw) = assemble_loss_pointwise(
            |x, y| rapinn::network::forward_at(&params, &cfg, x, y).unwrap(),
            &case,
            &colloc,
            &w,
        );
        assert!((total - total_pw).abs() < 1e-10 * total.max(1.0), "case {id}");
        for (a, b) in [
            (ch.residual, ch_pw.residual),
            (ch.boundary, ch_pw.boundary),
            (ch.gauge, ch_pw.gauge),
            (ch.interface, ch_pw.interface),
            (ch.data, ch_pw.data),
        ] {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "case {id}: {a} vs {b}");
        }
    }
}

#[test]
fn channel_additivity() {
    let case = build_case(2, None).unwrap();
    let cfg = small_cfg();
    let params = init_params(&cfg, 13);
    let colloc = initial_set(&case, &small_sampler(7));
    let w = LossWeights { lambda_data: 0.2, lambda_reg: 0.1, ..Default::default() };
    let (total, ch) = assemble_loss(&params, &cfg, &case, &colloc, &w).unwrap();
    let by_hand = w.lambda_res * ch.residual
        + w.lambda_b * ch.boundary
        + w.lambda_gauge * ch.gauge
        + w.lambda_gamma * ch.interface
        + w.lambda_data * ch.data
        + w.lambda_reg * ch.reg;
    assert_eq!(total, by_hand);
}

#[test]
fn nan_params_fault_names_channel() {
    let case = build_case(1, None).unwrap();
    let cfg = small_cfg();
    let mut params = init_params(&cfg, 14);
    params.values[0] = f64::NAN;
    let colloc = initial_set(&case, &small_sampler(8));
    let err = assemble_loss(&params, &cfg, &case, &colloc, &LossWeights::default());
    match err {
        Err(TrainError::NonFinite { channel }) => assert_eq!(channel, "residual"),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn gradient_matches_finite_differences() {
    // Case 2 exercises gauge + boundary mask; case 4 exercises the interface.
    for id in [2u8, 4u8] {
        let case = build_case(id, None).unwrap();
        let cfg = small_cfg();
        let mut params = init_params(&cfg, 20 + id as u64);
        // Perturb away from the symmetric init.
        let mut rng = ChaCha8Rng::seed_from_u64(id as u64);
        for v in params.values.iter_mut() {
            *v += 0.1 * (rng.gen::<f64>() - 0.5);
        }
        let colloc = initial_set(
            &case,
            &SamplerConfig { n_interior: 25, n_boundary: 12, n_interface: 6, ..small_sampler(9) },
        );
        let w = LossWeights { lambda_data: 0.3, lambda_reg: 0.05, ..Default::default() };
        let (_, _, grad) = loss_and_grad(&params, &cfg, &case, &colloc, &w).unwrap();

        let h = 1e-6;
        let mut coords: Vec<usize> =
            (0..50).map(|_| rng.gen_range(0..params.values.len())).collect();
        coords.dedup();
        for j in coords {
            let mut p = params.clone();
            p.values[j] += h;
            let (lp, _) = assemble_loss(&p, &cfg, &case, &colloc, &w).unwrap();
            p.values[j] -= 2.0 * h;
            let (lm, _) = assemble_loss(&p, &cfg, &case, &colloc, &w).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let scale = grad[j].abs().max(fd.abs()).max(1e-6);
            assert!(
                (grad[j] - fd).abs() / scale < 1e-5,
                "case {id} coord {j}: grad {} vs fd {fd}",
                grad[j]
            );
        }
    }
}

#[test]
fn adam_first_step_analytic() {
    let mut st = AdamState::new(1, 0.1);
    let mut theta = [0.0];
    adam_step(&mut st, &[1.0], &mut theta);
    assert!((theta[0] + 0.1).abs() < 1e-8, "{}", theta[0]);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_zero_gradient_is_identity() {
    let mut st = AdamState::new(3, 0.1);
    let mut theta = [1.0, -2.0, 0.5];
    let before = theta;
    adam_step(&mut st, &[0.0; 3], &mut theta);
    assert_eq!(theta, before);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_descends_on_quadratic() {
    let mut st = AdamState::new(1, 0.1);
    let mut theta = [1.0f64];
    let mut prev = theta[0] * theta[0];
    for _ in 0..5 {
        let g = [2.0 * theta[0]];
        adam_step(&mut st, &g, &mut theta);
        let f = theta[0] * theta[0];
        assert!(f < prev, "{f} !< {prev}");
        prev = f;
    }
}

#[test]
fn cosine_schedule_endpoints() {
    let s = TrainSchedule { epochs: 100, ..Default::default() };
    assert_eq!(s.lr_at(0), 1e-3);
    assert!((s.lr_at(99) - 1e-5).abs() < 1e-18);
    assert!(s.lr_at(50) < 1e-3 && s.lr_at(50) > 1e-5);
}

#[test]
fn zero_epochs_returns_initial_params() {
    let case = build_case(1, None).unwrap();
    let sched = TrainSchedule { epochs: 0, seed: 5, ..Default::default() };
    let (params, log) = train(&case, &small_cfg(), &small_sampler(5), &LossWeights::default(), &sched).unwrap();
    let mut cfg = small_cfg();
    cfg.seed = 5;
    assert_eq!(params.values, init_params(&cfg, 5).values);
    assert!(log.records.is_empty());
}

#[test]
fn training_is_bit_deterministic() {
    let case = build_case(2, None).unwrap();
    let sched = TrainSchedule { epochs: 12, seed: 3, ..Default::default() };
    let scfg = SamplerConfig { resample_period: 5, ..small_sampler(3) };
    let run = || train(&case, &small_cfg(), &scfg, &LossWeights::default(), &sched).unwrap();
    let (p1, l1) = run();
    let (p2, l2) = run();
    assert_eq!(p1.values, p2.values);
    let t1: Vec<f64> = l1.records.iter().map(|r| r.total).collect();
    let t2: Vec<f64> = l2.records.iter().map(|r| r.total).collect();
    assert_eq!(t1, t2);
}

#[test]
fn inactive_weights_leave_iterates_bit_identical() {
    let case = build_case(1, None).unwrap();
    let sched = TrainSchedule { epochs: 8, seed: 9, ..Default::default() };
    let w1 = LossWeights { lambda_gauge: 10.0, lambda_gamma: 10.0, ..Default::default() };
    let w2 = LossWeights { lambda_gauge: 1e6, lambda_gamma: 0.0, ..Default::default() };
    let (p1, _) = train(&case, &small_cfg(), &small_sampler(9), &w1, &sched).unwrap();
    let (p2, _) = train(&case, &small_cfg(), &small_sampler(9), &w2, &sched).unwrap();
    assert_eq!(p1.values, p2.values);
}

#[test]
fn resampling_advances_generation_and_keeps_sets_fixed() {
    let case = build_case(4, None).unwrap();
    let scfg = SamplerConfig { resample_period: 4, ..small_sampler(2) };
    let sched = TrainSchedule { epochs: 10, seed: 2, ..Default::default() };
    let (_, log) = train(&case, &small_cfg(), &scfg, &LossWeights::default(), &sched).unwrap();
    assert_eq!(log.records[0].generation, 0);
    assert_eq!(log.records[9].generation, 2); // resampled at epochs 4 and 8
    // wall clock monotone
    for w in log.records.windows(2) {
        assert!(w[1].seconds >= w[0].seconds);
        assert_eq!(w[1].epoch, w[0].epoch + 1);
    }
}

#[test]
fn train_log_csv_round_trip() {
    let case = build_case(1, None).unwrap();
    let sched = TrainSchedule { epochs: 5, seed: 1, ..Default::default() };
    let (_, log) = train(&case, &small_cfg(), &small_sampler(1), &LossWeights::default(), &sched).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    log.to_csv(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,total,residual,boundary,gauge,interface,data,reg,seconds,generation"
    );
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10);
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        let total: f64 = cols[1].parse().unwrap();
        assert_eq!(total.to_bits(), log.records[i].total.to_bits());
    }
}

#[test]
fn checkpoints_written_at_intervals() {
    let case = build_case(1, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sched = TrainSchedule {
        epochs: 9,
        seed: 4,
        checkpoint_interval: Some(4),
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let (params, _) = train(&case, &small_cfg(), &small_sampler(4), &LossWeights::default(), &sched).unwrap();
    assert!(dir.path().join("epoch000004.ckpt").exists());
    assert!(dir.path().join("epoch000008.ckpt").exists());
    let (_, loaded) = checkpoint::load(&dir.path().join("final.ckpt")).unwrap();
    assert_eq!(loaded.values, params.values);
}

#[test]
fn nonfinite_loss_retains_last_good_checkpoint() {
    let case = build_case(1, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // An absurd learning rate overflows the parameters within a few steps.
    let sched = TrainSchedule {
        epochs: 50,
        lr_max: 1e300,
        lr_min: 1e300,
        seed: 6,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = train(&case, &small_cfg(), &small_sampler(6), &LossWeights::default(), &sched);
    match out {
        Err(TrainError::NonFinite { .. }) => {}
        other => panic!("expected NonFinite fault, got {other:?}"),
    }
    let (_, saved) = checkpoint::load(&dir.path().join("last_good.ckpt")).unwrap();
    assert!(saved.values.iter().all(|v| v.is_finite()));
}

#[test]
fn short_training_reduces_loss() {
    let case = build_case(1, None).unwrap();
    let cfg = NetworkConfig::new(Arch::RaPinn, 16, 2, 0);
    let scfg = SamplerConfig {
        n_interior: 120,
        n_boundary: 40,
        pool_size: 400,
        resample_period: 100,
        ..Default::default()
    };
    let sched = TrainSchedule { epochs: 300, seed: 0, ..Default::default() };
    let (_, log) = train(&case, &cfg, &scfg, &LossWeights::default(), &sched).unwrap();
    let first = log.records.first().unwrap().total;
    let last = log.records.last().unwrap().total;
    assert!(last < 0.2 * first, "loss {first} -> {last}");
}

#[test]
fn surrogate_log_types_behave() {
    // TrainLog helpers on a hand-built log.
    let mut log = TrainLog::default();
    assert_eq!(log.wall_time_hours(), 0.0);
    log.records.push(rapinn::training::EpochRecord {
        epoch: 0,
        total: 1.0,
        channels: Default::default(),
        seconds: 7200.0,
        generation: 0,
    });
    assert_eq!(log.wall_time_hours(), 2.0);
}

#[test]
fn pointwise_loss_handles_zero_model() {
    let case = build_case(4, None).unwrap();
    let colloc = initial_set(&case, &small_sampler(10));
    let zero = |_: f64, _: f64| FieldState::<f64>::from_fields([Jet2::zero(); 5]);
    let (total, ch) = assemble_loss_pointwise(zero, &case, &colloc, &LossWeights::default());
    assert!(total.is_finite() && total > 0.0);
    assert!(ch.interface > 0.0); // prescribed flux jumps are nonzero
}
