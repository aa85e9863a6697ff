use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rapinn::cases::build_case;
use rapinn::config::RunConfig;
use rapinn::eval::{compare_runs, compute_metrics, export_fields, predict_grid, MetricsRecord};
use rapinn::network::Arch;
use rapinn::training::train;

#[derive(Parser)]
#[command(name = "rapinn", about = "Physics-informed solver for the coupled electrothermal benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, log, metrics, and field grids.
    Train(TrainArgs),
    /// Run the built-in verification suites (derivatives, MMS, sampler, metrics).
    Verify {
        /// Run a single suite: derivatives | gradients | mms | sampler | metrics
        #[arg(long)]
        only: Option<String>,
    },
    /// Compare metrics.json records from two or more run directories.
    Compare {
        /// Run directories, each containing a metrics.json
        dirs: Vec<PathBuf>,
        /// Output CSV path (default: comparison.csv in the working directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a case definition (JSON) and its reference grids (CSV).
    ExportCase {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
        #[arg(long, default_value = "case-export")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Benchmark case id
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    case: Option<u8>,
    /// Model architecture: rapinn | mlp
    #[arg(long)]
    model: Option<Arch>,
    /// Run configuration JSON (built-in defaults when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory root
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force single-threaded, fixed-order reductions
    #[arg(long)]
    deterministic: bool,
}

fn main() -> ExitCode {
    rapinn::tune_allocator();
    // Thread control: honor RAPINN_THREADS, which maps onto the BLAS pool.
    if let Ok(threads) = std::env::var("RAPINN_THREADS") {
        std::env::set_var("OPENBLAS_NUM_THREADS", &threads);
    }

    let cli = Cli::parse();
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Verify { only } => cmd_verify(only.as_deref()),
        Command::Compare { dirs, out } => cmd_compare(&dirs, out),
        Command::ExportCase { case, out } => cmd_export_case(case, &out),
    }
}

fn cmd_train(args: TrainArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(case) = args.case {
        cfg.case = case;
    }
    if let Some(model) = args.model {
        cfg.model = model;
        cfg.network.arch = model;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.schedule.epochs = epochs;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    cfg.deterministic |= args.deterministic;
    if cfg.deterministic {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    cfg.schedule.seed = cfg.seed;

    let warnings = match cfg.validate() {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for w in warnings {
        eprintln!("warning: {w}");
    }

    let case = match build_case(cfg.case, cfg.case_overrides.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let run_dir = cfg.out_dir.join(cfg.tag());
    if let Err(e) = std::fs::create_dir_all(&run_dir) {
        eprintln!("error: cannot create {}: {e}", run_dir.display());
        return ExitCode::from(2);
    }
    let mut schedule = cfg.schedule.clone();
    schedule.checkpoint_dir = Some(run_dir.clone());
    if let Err(e) = cfg.save(&run_dir.join("run_config.json")) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let (params, log) = match train(&case, &cfg.network, &cfg.sampler, &cfg.weights, &schedule) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: training failed: {e}");
            return ExitCode::FAILURE;
        }
    };

    let result: Result<MetricsRecord, Box<dyn std::error::Error>> = (|| {
        log.to_csv(&run_dir.join("train_log.csv"))?;
        let mut net = cfg.network.clone();
        net.seed = cfg.seed;
        let pred = predict_grid(&params, &net, &case);
        let reference = case.reference_grid();
        let mut metrics = compute_metrics(&pred, &reference)?;
        // Two-decimal hours: the reporting resolution of the time table.
        metrics.wall_time_hours = (log.wall_time_hours() * 100.0).round() / 100.0;
        metrics.to_json(&run_dir.join("metrics.json"))?;
        export_fields(&pred, &reference, &case, &cfg.model.to_string(), &run_dir)?;
        Ok(metrics)
    })();

    match result {
        Ok(metrics) => {
            println!(
                "trained {} for {} epochs: total loss {:.3e} -> {:.3e}, avg rel_l2 {:.3e}",
                cfg.tag(),
                log.records.len(),
                log.records.first().map_or(f64::NAN, |r| r.total),
                log.records.last().map_or(f64::NAN, |r| r.total),
                metrics.avg.rel_l2
            );
            println!("artifacts in {}", run_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_compare(dirs: &[PathBuf], out: Option<PathBuf>) -> ExitCode {
    if dirs.len() < 2 {
        eprintln!("error: compare needs at least 2 run directories, got {}", dirs.len());
        return ExitCode::from(2);
    }
    let mut records = Vec::new();
    for dir in dirs {
        let path = dir.join("metrics.json");
        match MetricsRecord::from_json(&path) {
            Ok(rec) => {
                let tag = dir
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                records.push((tag, rec));
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    let cmp = match compare_runs(&records) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    print!("{}", cmp.to_markdown());
    let out = out.unwrap_or_else(|| PathBuf::from("comparison.csv"));
    if let Err(e) = cmp.to_csv(&out) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn cmd_export_case(case_id: u8, out: &PathBuf) -> ExitCode {
    let case = match build_case(case_id, None) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let work = (|| -> Result<(), rapinn::cases::CaseError> {
        std::fs::create_dir_all(out)?;
        case.export_json(&out.join(format!("case{case_id}.json")))?;
        case.export_reference_grids(out)
    })();
    match work {
        Ok(()) => {
            println!("exported case {case_id} to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

// ---------------------------------------------------------------------------
// verify: fast self-checks over the numerical core

struct Check {
    name: &'static str,
    run: fn() -> Result<(), String>,
}

const CHECKS: [Check; 5] = [
    Check { name: "derivatives", run: check_derivatives },
    Check { name: "gradients", run: check_gradients },
    Check { name: "mms", run: check_mms },
    Check { name: "sampler", run: check_sampler },
    Check { name: "metrics", run: check_metrics },
];

fn cmd_verify(only: Option<&str>) -> ExitCode {
    if let Some(name) = only {
        if !CHECKS.iter().any(|c| c.name == name) {
            eprintln!(
                "error: unknown check `{name}` (available: {})",
                CHECKS.map(|c| c.name).join(", ")
            );
            return ExitCode::from(2);
        }
    }
    let mut failed = Vec::new();
    for check in CHECKS {
        if only.is_some_and(|name| name != check.name) {
            continue;
        }
        match (check.run)() {
            Ok(()) => println!("{:<12} PASS", check.name),
            Err(msg) => {
                println!("{:<12} FAIL  {msg}", check.name);
                failed.push(check.name);
            }
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}

fn check_derivatives() -> Result<(), String> {
    use rapinn::network::{forward_at, init_params, value_forward, NetworkConfig};
    let cfg = NetworkConfig::new(Arch::RaPinn, 16, 2, 0);
    let params = init_params(&cfg, 1);
    let h = 1e-4;
    for i in 0..20 {
        let x = 0.05 + 0.9 * (i as f64 * 0.61803).fract();
        let y = 0.05 + 0.9 * (i as f64 * 0.31803 + 0.17).fract();
        let jets = forward_at(&params, &cfg, x, y).map_err(|e| e.to_string())?;
        let val = |x: f64, y: f64| value_forward(&params, &cfg, x, y).unwrap();
        for (f, jet) in jets.fields().into_iter().enumerate() {
            let c = val(x, y)[f];
            let (xp, xm) = (val(x + h, y)[f], val(x - h, y)[f]);
            let (yp, ym) = (val(x, y + h)[f], val(x, y - h)[f]);
            let checks = [
                (jet.dx, (xp - xm) / (2.0 * h), 1e-5),
                (jet.dy, (yp - ym) / (2.0 * h), 1e-5),
                (jet.dxx, (xp - 2.0 * c + xm) / (h * h), 1e-3),
                (jet.dyy, (yp - 2.0 * c + ym) / (h * h), 1e-3),
            ];
            for (got, fd, tol) in checks {
                let scale = got.abs().max(fd.abs()).max(1e-3);
                if (got - fd).abs() / scale > tol {
                    return Err(format!("field {f} at ({x:.3}, {y:.3}): jet {got} vs fd {fd}"));
                }
            }
        }
    }
    Ok(())
}

fn check_gradients() -> Result<(), String> {
    use rapinn::network::{init_params, NetworkConfig};
    use rapinn::sampler::{initial_set, SamplerConfig};
    use rapinn::training::{assemble_loss, loss_and_grad, LossWeights};
    let case = build_case(1, None).map_err(|e| e.to_string())?;
    let cfg = NetworkConfig::new(Arch::RaPinn, 16, 2, 0);
    let params = init_params(&cfg, 2);
    let scfg = SamplerConfig { n_interior: 40, n_boundary: 16, ..Default::default() };
    let colloc = initial_set(&case, &scfg);
    let w = LossWeights::default();
    let (_, _, grad) =
        loss_and_grad(&params, &cfg, &case, &colloc, &w).map_err(|e| e.to_string())?;
    let h = 1e-6;
    for i in 0..50 {
        let j = (i * 7919) % params.values.len();
        let mut p = params.clone();
        p.values[j] += h;
        let (lp, _) = assemble_loss(&p, &cfg, &case, &colloc, &w).map_err(|e| e.to_string())?;
        p.values[j] -= 2.0 * h;
        let (lm, _) = assemble_loss(&p, &cfg, &case, &colloc, &w).map_err(|e| e.to_string())?;
        let fd = (lp - lm) / (2.0 * h);
        let scale = grad[j].abs().max(fd.abs()).max(1e-6);
        if (grad[j] - fd).abs() / scale > 1e-5 {
            return Err(format!("coordinate {j}: grad {} vs fd {fd}", grad[j]));
        }
    }
    Ok(())
}

fn check_mms() -> Result<(), String> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rapinn::physics::residual_indicator;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for id in 1..=4u8 {
        let case = build_case(id, None).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let s = case.reference.eval(x, y);
            let rv = case.full_operator_at(&s, x, y).map_err(|e| e.to_string())?;
            let ind = residual_indicator(&rv);
            if ind >= 1e-10 {
                return Err(format!("case {id}: indicator {ind:.3e} at ({x:.4}, {y:.4})"));
            }
        }
    }
    // Interface channels on Gamma.
    let case = build_case(4, None).map_err(|e| e.to_string())?;
    let iface = case.interface.unwrap();
    let lm = case.law.resolve(rapinn::physics::Side::Minus);
    let lp = case.law.resolve(rapinn::physics::Side::Plus);
    for i in 0..200 {
        let y = i as f64 / 199.0;
        let x = 0.7 - 0.4 * y;
        let e = case.reference.eval(x, y);
        let jumps = case.interface_jumps(x, y);
        let r = rapinn::physics::interface_residual(&e, &e, &iface, &lm, &lp, jumps, [x, y])
            .map_err(|e| e.to_string())?;
        if r.iter().any(|c| c.abs() >= 1e-10) {
            return Err(format!("interface residual {r:?} at y = {y:.4}"));
        }
    }
    Ok(())
}

fn check_sampler() -> Result<(), String> {
    use rapinn::sampler::{adaptive_resample, fresh_pool, initial_set, SamplerConfig};
    let case = build_case(1, None).map_err(|e| e.to_string())?;
    for seed in 0..10u64 {
        let cfg = SamplerConfig { n_interior: 500, rng_seed: seed, ..Default::default() };
        let set = initial_set(&case, &cfg);
        let pool = fresh_pool(&cfg, 1);
        let in_disk = |p: &[f64; 2]| (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) < 0.01;
        let ind: Vec<f64> = pool.iter().map(|p| if in_disk(p) { 1.0 } else { 0.0 }).collect();
        let next = adaptive_resample(&set, &pool, &ind, &cfg).map_err(|e| e.to_string())?;
        let kept = cfg.kept_count();
        if !next.interior[..kept].iter().all(in_disk) {
            return Err(format!("seed {seed}: kept points escaped the disk"));
        }
        // brute-force top-m oracle
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| ind[b].partial_cmp(&ind[a]).unwrap().then(a.cmp(&b)));
        for (i, &j) in order[..kept].iter().enumerate() {
            if next.interior[i] != pool[j] {
                return Err(format!("seed {seed}: kept point {i} disagrees with sort oracle"));
            }
        }
    }
    Ok(())
}

fn check_metrics() -> Result<(), String> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let reference: [Vec<f64>; 5] =
            std::array::from_fn(|_| (0..64).map(|_| rng.gen::<f64>() - 0.5).collect());
        let pred: [Vec<f64>; 5] =
            std::array::from_fn(|_| (0..64).map(|_| rng.gen::<f64>() - 0.5).collect());
        let m = compute_metrics(&pred, &reference).map_err(|e| e.to_string())?;
        for fm in m.by_table_order() {
            if (fm.rmse * fm.rmse - fm.mse).abs() > 1e-15 * fm.mse.max(1.0) {
                return Err("rmse^2 != mse".into());
            }
            if fm.mae > fm.rmse + 1e-15 {
                return Err("mae > rmse".into());
            }
        }
    }
    Ok(())
}
