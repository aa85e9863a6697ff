//! Composite loss assembly, Adam optimization, and the training loop with
//! periodic residual-driven resampling.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cases::CaseSpec;
use crate::derivkit::{Jet2, Tape};
use crate::network::batch::{batch_backward, batch_forward, JetBatch};
use crate::network::{checkpoint, init_params, FieldState, NetworkConfig, NetworkError, ParamVector};
use crate::physics::{interface_flux_terms, operator_terms, residual_indicator, ResidualVector, Side};
use crate::sampler::{adaptive_resample, fresh_pool, initial_set, CollocationSet, SamplerConfig, SamplerError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in channel `{channel}`")]
    NonFinite { channel: &'static str },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] crate::network::checkpoint::CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_res: f64,
    pub lambda_b: f64,
    pub lambda_data: f64,
    pub lambda_reg: f64,
    pub lambda_gauge: f64,
    pub lambda_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_res: 1.0,
            lambda_b: 1.0,
            lambda_data: 0.0,
            lambda_reg: 0.0,
            lambda_gauge: 10.0,
            lambda_gamma: 10.0,
        }
    }
}

/// Unweighted per-channel loss values (each a mean of squared residuals,
/// except `gauge` which is the squared gauge residual and `reg` the squared
/// parameter norm). Channels not active for the case are exactly 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossChannels {
    pub residual: f64,
    pub boundary: f64,
    pub gauge: f64,
    pub interface: f64,
    pub data: f64,
    pub reg: f64,
}

impl LossChannels {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.lambda_res * self.residual
            + w.lambda_b * self.boundary
            + w.lambda_gauge * self.gauge
            + w.lambda_gamma * self.interface
            + w.lambda_data * self.data
            + w.lambda_reg * self.reg
    }

    fn non_finite_channel(&self) -> Option<&'static str> {
        [
            (self.residual, "residual"),
            (self.boundary, "boundary"),
            (self.gauge, "gauge"),
            (self.interface, "interface"),
            (self.data, "data"),
            (self.reg, "reg"),
        ]
        .into_iter()
        .find(|(v, _)| !v.is_finite())
        .map(|(_, name)| name)
    }
}

fn state_from_batch(out: &JetBatch, i: usize) -> FieldState<f64> {
    let k = out.k();
    let slot = |f: usize, s: usize| if s < k { out.slots[s][[i, f]] } else { 0.0 };
    let jet = |f: usize| Jet2 {
        val: slot(f, 0),
        dx: slot(f, 1),
        dy: slot(f, 2),
        dxx: slot(f, 3),
        dyy: slot(f, 4),
    };
    FieldState::from_fields([jet(0), jet(1), jet(2), jet(3), jet(4)])
}

/// Squared-residual value and its adjoints w.r.t. the 25 jet slots
/// (field-major, slot-minor) for one interior point.
fn interior_point_grad(
    state: &FieldState<f64>,
    law: &crate::physics::ResolvedLaw,
    bf: &crate::physics::BodyForceParams,
    src: [f64; 5],
    want_grad: bool,
) -> (f64, [[f64; 5]; 5]) {
    if !want_grad {
        let terms = operator_terms(state, law, bf);
        let sq: f64 = (0..5).map(|c| (terms[c] - src[c]) * (terms[c] - src[c])).sum();
        return (sq, [[0.0; 5]; 5]);
    }
    let tape = Tape::new();
    let fields = state.fields();
    let vars: Vec<[crate::derivkit::Var; 5]> = fields
        .iter()
        .map(|j| [tape.leaf(j.val), tape.leaf(j.dx), tape.leaf(j.dy), tape.leaf(j.dxx), tape.leaf(j.dyy)])
        .collect();
    let var_state = FieldState::from_fields(std::array::from_fn(|f| Jet2 {
        val: vars[f][0],
        dx: vars[f][1],
        dy: vars[f][2],
        dxx: vars[f][3],
        dyy: vars[f][4],
    }));
    let terms = operator_terms(&var_state, law, bf);
    let mut root = (terms[0] - src[0]).square();
    for c in 1..5 {
        root = root + (terms[c] - src[c]).square();
    }
    let grads = tape.gradient(root).expect("root lives on this tape");
    let mut adj = [[0.0; 5]; 5];
    for f in 0..5 {
        for s in 0..5 {
            adj[f][s] = grads.wrt(vars[f][s]);
        }
    }
    (root.value(), adj)
}

/// Same shape as `interior_point_grad` for the interface flux channels.
/// A single network serves both sides, so the value jumps are structurally
/// zero and only the four flux channels carry residual.
fn interface_point_grad(
    state: &FieldState<f64>,
    normal: [f64; 2],
    law_m: &crate::physics::ResolvedLaw,
    law_p: &crate::physics::ResolvedLaw,
    prescribed: [f64; 4],
    want_grad: bool,
) -> (f64, [[f64; 5]; 5]) {
    if !want_grad {
        let flux = interface_flux_terms(state, state, normal, law_m, law_p);
        let sq: f64 = (0..4).map(|c| (flux[c] - prescribed[c]) * (flux[c] - prescribed[c])).sum();
        return (sq, [[0.0; 5]; 5]);
    }
    let tape = Tape::new();
    let fields = state.fields();
    let vars: Vec<[crate::derivkit::Var; 5]> = fields
        .iter()
        .map(|j| [tape.leaf(j.val), tape.leaf(j.dx), tape.leaf(j.dy), tape.leaf(j.dxx), tape.leaf(j.dyy)])
        .collect();
    let var_state = FieldState::from_fields(std::array::from_fn(|f| Jet2 {
        val: vars[f][0],
        dx: vars[f][1],
        dy: vars[f][2],
        dxx: vars[f][3],
        dyy: vars[f][4],
    }));
    let flux = interface_flux_terms(&var_state, &var_state, normal, law_m, law_p);
    let mut root = (flux[0] - prescribed[0]).square();
    for c in 1..4 {
        root = root + (flux[c] - prescribed[c]).square();
    }
    let grads = tape.gradient(root).expect("root lives on this tape");
    let mut adj = [[0.0; 5]; 5];
    for f in 0..5 {
        for s in 0..5 {
            adj[f][s] = grads.wrt(vars[f][s]);
        }
    }
    (root.value(), adj)
}

fn eval_loss(
    params: &ParamVector,
    cfg: &NetworkConfig,
    case: &CaseSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
    want_grad: bool,
) -> Result<(f64, LossChannels, Option<Vec<f64>>), TrainError> {
    let mut channels = LossChannels::default();
    let mut grad = if want_grad { Some(vec![0.0; params.values.len()]) } else { None };

    // Interior: residual channel (and optional supervised data channel).
    if !colloc.interior.is_empty() {
        let n = colloc.interior.len();
        let cache = batch_forward(params, cfg, &colloc.interior, 5);
        let mut ybar = want_grad.then(|| JetBatch::zeros(n, 5, 5));
        let mut sum_sq = 0.0;
        let mut data_sq = 0.0;
        for (i, &[x, y]) in colloc.interior.iter().enumerate() {
            let state = state_from_batch(&cache.out, i);
            let law = case.law_at(x, y);
            let src = case.source_at(x, y);
            let (sq, adj) = interior_point_grad(&state, &law, &case.body_force, src, want_grad);
            sum_sq += sq;
            if let Some(yb) = ybar.as_mut() {
                for f in 0..5 {
                    for s in 0..5 {
                        yb.slots[s][[i, f]] += weights.lambda_res / n as f64 * adj[f][s];
                    }
                }
            }
            if weights.lambda_data > 0.0 {
                let exact = case.reference.values(x, y);
                let pred = [state.u.val, state.v.val, state.p.val, state.phi.val, state.temp.val];
                for f in 0..5 {
                    let d = pred[f] - exact[f];
                    data_sq += d * d;
                    if let Some(yb) = ybar.as_mut() {
                        yb.slots[0][[i, f]] += 2.0 * weights.lambda_data / n as f64 * d;
                    }
                }
            }
        }
        channels.residual = sum_sq / n as f64;
        if weights.lambda_data > 0.0 {
            channels.data = data_sq / n as f64;
        }
        if let (Some(yb), Some(g)) = (ybar.as_ref(), grad.as_mut()) {
            batch_backward(params, cfg, &cache, yb, g);
        }
    }

    // Boundary: masked Dirichlet channel on values only.
    if !colloc.boundary.is_empty() {
        let nb = colloc.boundary.len();
        let pts: Vec<[f64; 2]> = colloc.boundary.iter().map(|b| [b.x, b.y]).collect();
        let cache = batch_forward(params, cfg, &pts, 1);
        let mut ybar = want_grad.then(|| JetBatch::zeros(nb, 5, 1));
        let mut sum_sq = 0.0;
        for (i, b) in colloc.boundary.iter().enumerate() {
            let data = case.boundary_data(b.x, b.y);
            for f in 0..5 {
                if !case.boundary_mask[f] {
                    continue;
                }
                let d = cache.out.slots[0][[i, f]] - data[f];
                sum_sq += d * d;
                if let Some(yb) = ybar.as_mut() {
                    yb.slots[0][[i, f]] = 2.0 * weights.lambda_b / nb as f64 * d;
                }
            }
        }
        channels.boundary = sum_sq / nb as f64;
        if let (Some(yb), Some(g)) = (ybar.as_ref(), grad.as_mut()) {
            batch_backward(params, cfg, &cache, yb, g);
        }
    }

    // Gauge: squared weighted mean of p over the fixed quadrature grid.
    if case.gauge_active && !colloc.quadrature.is_empty() {
        let w = colloc.quadrature_weight();
        let cache = batch_forward(params, cfg, &colloc.quadrature, 1);
        let r_g: f64 = (0..colloc.quadrature.len()).map(|i| w * cache.out.slots[0][[i, 2]]).sum();
        channels.gauge = r_g * r_g;
        if let Some(g) = grad.as_mut() {
            let mut ybar = JetBatch::zeros(colloc.quadrature.len(), 5, 1);
            for i in 0..colloc.quadrature.len() {
                ybar.slots[0][[i, 2]] = 2.0 * weights.lambda_gauge * r_g * w;
            }
            batch_backward(params, cfg, &cache, &ybar, g);
        }
    }

    // Interface: flux-jump channels on Gamma.
    if let Some(iface) = &case.interface {
        if !colloc.interface.is_empty() {
            let ni = colloc.interface.len();
            let normal = iface.unit_normal();
            let law_m = case.law.resolve(Side::Minus);
            let law_p = case.law.resolve(Side::Plus);
            let cache = batch_forward(params, cfg, &colloc.interface, 5);
            let mut ybar = want_grad.then(|| JetBatch::zeros(ni, 5, 5));
            let mut sum_sq = 0.0;
            for (i, &[x, y]) in colloc.interface.iter().enumerate() {
                let state = state_from_batch(&cache.out, i);
                let prescribed = case.interface_jumps(x, y);
                let (sq, adj) =
                    interface_point_grad(&state, normal, &law_m, &law_p, prescribed, want_grad);
                sum_sq += sq;
                if let Some(yb) = ybar.as_mut() {
                    for f in 0..5 {
                        for s in 0..5 {
                            yb.slots[s][[i, f]] += weights.lambda_gamma / ni as f64 * adj[f][s];
                        }
                    }
                }
            }
            channels.interface = sum_sq / ni as f64;
            if let (Some(yb), Some(g)) = (ybar.as_ref(), grad.as_mut()) {
                batch_backward(params, cfg, &cache, yb, g);
            }
        }
    }

    // Parameter regularization.
    if weights.lambda_reg > 0.0 {
        channels.reg = params.values.iter().map(|t| t * t).sum();
        if let Some(g) = grad.as_mut() {
            for (gj, tj) in g.iter_mut().zip(&params.values) {
                *gj += 2.0 * weights.lambda_reg * tj;
            }
        }
    }

    if let Some(channel) = channels.non_finite_channel() {
        return Err(TrainError::NonFinite { channel });
    }
    Ok((channels.total(weights), channels, grad))
}

/// Composite loss of a parameter vector on a collocation set.
pub fn assemble_loss(
    params: &ParamVector,
    cfg: &NetworkConfig,
    case: &CaseSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<(f64, LossChannels), TrainError> {
    eval_loss(params, cfg, case, colloc, weights, false).map(|(t, c, _)| (t, c))
}

/// Loss plus its parameter gradient (the training path).
pub fn loss_and_grad(
    params: &ParamVector,
    cfg: &NetworkConfig,
    case: &CaseSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<(f64, LossChannels, Vec<f64>), TrainError> {
    eval_loss(params, cfg, case, colloc, weights, true).map(|(t, c, g)| (t, c, g.unwrap()))
}

/// Loss of an arbitrary field model given as a pointwise jet evaluator.
/// Independent of the batched network path; used as a brute-force oracle and
/// for exact-solution surrogates.
pub fn assemble_loss_pointwise<F>(
    eval: F,
    case: &CaseSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> (f64, LossChannels)
where
    F: Fn(f64, f64) -> FieldState<f64>,
{
    let mut channels = LossChannels::default();
    if !colloc.interior.is_empty() {
        let mut sum_sq = 0.0;
        let mut data_sq = 0.0;
        for &[x, y] in &colloc.interior {
            let state = eval(x, y);
            let terms = operator_terms(&state, &case.law_at(x, y), &case.body_force);
            let src = case.source_at(x, y);
            sum_sq += (0..5).map(|c| (terms[c] - src[c]) * (terms[c] - src[c])).sum::<f64>();
            if weights.lambda_data > 0.0 {
                let exact = case.reference.values(x, y);
                let pred = [state.u.val, state.v.val, state.p.val, state.phi.val, state.temp.val];
                data_sq += (0..5).map(|f| (pred[f] - exact[f]) * (pred[f] - exact[f])).sum::<f64>();
            }
        }
        channels.residual = sum_sq / colloc.interior.len() as f64;
        if weights.lambda_data > 0.0 {
            channels.data = data_sq / colloc.interior.len() as f64;
        }
    }
    if !colloc.boundary.is_empty() {
        let mut sum_sq = 0.0;
        for b in &colloc.boundary {
            let state = eval(b.x, b.y);
            let data = case.boundary_data(b.x, b.y);
            let pred = [state.u.val, state.v.val, state.p.val, state.phi.val, state.temp.val];
            for f in 0..5 {
                if case.boundary_mask[f] {
                    let d = pred[f] - data[f];
                    sum_sq += d * d;
                }
            }
        }
        channels.boundary = sum_sq / colloc.boundary.len() as f64;
    }
    if case.gauge_active && !colloc.quadrature.is_empty() {
        let w = colloc.quadrature_weight();
        let r_g: f64 = colloc.quadrature.iter().map(|&[x, y]| w * eval(x, y).p.val).sum();
        channels.gauge = r_g * r_g;
    }
    if let Some(iface) = &case.interface {
        if !colloc.interface.is_empty() {
            let normal = iface.unit_normal();
            let law_m = case.law.resolve(Side::Minus);
            let law_p = case.law.resolve(Side::Plus);
            let mut sum_sq = 0.0;
            for &[x, y] in &colloc.interface {
                let state = eval(x, y);
                let flux = interface_flux_terms(&state, &state, normal, &law_m, &law_p);
                let j = case.interface_jumps(x, y);
                sum_sq += (0..4).map(|c| (flux[c] - j[c]) * (flux[c] - j[c])).sum::<f64>();
            }
            channels.interface = sum_sq / colloc.interface.len() as f64;
        }
    }
    (channels.total(weights), channels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, grad: &[f64], params: &mut [f64]) {
    assert_eq!(grad.len(), params.len());
    assert_eq!(state.m.len(), params.len());
    state.step += 1;
    let b1c = 1.0 - state.beta1.powi(state.step as i32);
    let b2c = 1.0 - state.beta2.powi(state.step as i32);
    for j in 0..params.len() {
        state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * grad[j];
        state.v[j] = state.beta2 * state.v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
        let m_hat = state.m[j] / b1c;
        let v_hat = state.v[j] / b2c;
        params[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub checkpoint_interval: Option<usize>,
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 20000,
            lr_max: 1e-3,
            lr_min: 1e-5,
            seed: 0,
            checkpoint_interval: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainSchedule {
    /// Cosine decay from lr_max at epoch 0 to lr_min at the final epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_max;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub channels: LossChannels,
    pub seconds: f64,
    pub generation: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn wall_time_hours(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.seconds / 3600.0)
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "epoch,total,residual,boundary,gauge,interface,data,reg,seconds,generation")?;
        for r in &self.records {
            let c = &r.channels;
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch, r.total, c.residual, c.boundary, c.gauge, c.interface, c.data, c.reg,
                r.seconds, r.generation
            )?;
        }
        Ok(())
    }
}

/// Residual indicator of the current parameters on a candidate pool.
pub fn indicator_on(
    params: &ParamVector,
    cfg: &NetworkConfig,
    case: &CaseSpec,
    pool: &[[f64; 2]],
) -> Vec<f64> {
    let cache = batch_forward(params, cfg, pool, 5);
    pool.iter()
        .enumerate()
        .map(|(i, &[x, y])| {
            let state = state_from_batch(&cache.out, i);
            let terms = operator_terms(&state, &case.law_at(x, y), &case.body_force);
            let src = case.source_at(x, y);
            residual_indicator(&ResidualVector {
                continuity: terms[0] - src[0],
                momentum_x: terms[1] - src[1],
                momentum_y: terms[2] - src[2],
                potential: terms[3] - src[3],
                temperature: terms[4] - src[4],
            })
        })
        .collect()
}

/// Full-batch Adam training with cosine learning-rate decay and adaptive
/// resampling every `sampler_cfg.resample_period` epochs. Deterministic for
/// a fixed schedule seed. On a non-finite loss the last good parameters are
/// written to `<checkpoint_dir>/last_good.ckpt` (when a dir is set) and the
/// fault is returned.
pub fn train(
    case: &CaseSpec,
    net_cfg: &NetworkConfig,
    sampler_cfg: &SamplerConfig,
    weights: &LossWeights,
    schedule: &TrainSchedule,
) -> Result<(ParamVector, TrainLog), TrainError> {
    let mut cfg = net_cfg.clone();
    cfg.seed = schedule.seed;
    cfg.validate()?;
    let mut scfg = *sampler_cfg;
    scfg.rng_seed = schedule.seed;

    if let Some(dir) = &schedule.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    let mut params = init_params(&cfg, cfg.seed);
    let mut colloc = initial_set(case, &scfg);
    let mut adam = AdamState::new(params.values.len(), schedule.lr_max);
    let mut log = TrainLog::default();
    let mut last_good = params.clone();
    let start = Instant::now();

    for epoch in 0..schedule.epochs {
        if epoch > 0 && scfg.resample_period > 0 && epoch % scfg.resample_period == 0 {
            let pool = fresh_pool(&scfg, colloc.generation + 1);
            let indicator = indicator_on(&params, &cfg, case, &pool);
            colloc = adaptive_resample(&colloc, &pool, &indicator, &scfg)?;
        }

        let (total, channels, grad) = match loss_and_grad(&params, &cfg, case, &colloc, weights) {
            Ok(out) => out,
            Err(e) => {
                if let Some(dir) = &schedule.checkpoint_dir {
                    checkpoint::save(&dir.join("last_good.ckpt"), &cfg, &last_good)?;
                }
                return Err(e);
            }
        };
        last_good = params.clone();

        adam.lr = schedule.lr_at(epoch);
        adam_step(&mut adam, &grad, &mut params.values);

        log.records.push(EpochRecord {
            epoch,
            total,
            channels,
            seconds: start.elapsed().as_secs_f64(),
            generation: colloc.generation,
        });

        if let (Some(interval), Some(dir)) = (schedule.checkpoint_interval, &schedule.checkpoint_dir)
        {
            if interval > 0 && (epoch + 1) % interval == 0 {
                checkpoint::save(&dir.join(format!("epoch{:06}.ckpt", epoch + 1)), &cfg, &params)?;
            }
        }
    }

    if let Some(dir) = &schedule.checkpoint_dir {
        checkpoint::save(&dir.join("final.ckpt"), &cfg, &params)?;
    }
    Ok((params, log))
}
