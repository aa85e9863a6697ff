//! Collocation point generation and residual-driven adaptive resampling.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cases::CaseSpec;

/// Side length of the fixed gauge quadrature grid (interior cell centers).
pub const QUAD_N: usize = 64;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("pool of {pool} candidates is smaller than the kept count {kept}")]
    PoolTooSmall { pool: usize, kept: usize },
    #[error("indicator has {indicator} entries for a pool of {pool}")]
    IndicatorMismatch { indicator: usize, pool: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub edge: Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<[f64; 2]>,
    pub boundary: Vec<BoundaryPoint>,
    pub interface: Vec<[f64; 2]>,
    /// Fixed gauge quadrature nodes; uniform weights 1/len sum to |Omega| = 1.
    pub quadrature: Vec<[f64; 2]>,
    pub generation: u32,
}

impl CollocationSet {
    pub fn quadrature_weight(&self) -> f64 {
        1.0 / self.quadrature.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_interface: usize,
    pub pool_size: usize,
    pub resample_period: usize,
    pub keep_fraction: f64,
    pub power_k: f64,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_interior: 2000,
            n_boundary: 400,
            n_interface: 200,
            pool_size: 8000,
            resample_period: 500,
            keep_fraction: 0.3,
            power_k: 1.0,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    /// Number of pool candidates retained per resample: floor(keep * n).
    pub fn kept_count(&self) -> usize {
        (self.keep_fraction * self.n_interior as f64).floor() as usize
    }
}

fn interior_rng(seed: u64, generation: u32) -> ChaCha8Rng {
    // Distinct, reproducible stream per resampling round.
    ChaCha8Rng::seed_from_u64(seed ^ (generation as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn uniform_interior(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()
}

/// Gauge quadrature: cell centers of a QUAD_N x QUAD_N uniform partition.
pub fn quadrature_grid() -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(QUAD_N * QUAD_N);
    for i in 0..QUAD_N {
        for j in 0..QUAD_N {
            pts.push([(i as f64 + 0.5) / QUAD_N as f64, (j as f64 + 0.5) / QUAD_N as f64]);
        }
    }
    pts
}

pub fn initial_set(case: &CaseSpec, cfg: &SamplerConfig) -> CollocationSet {
    let mut rng = interior_rng(cfg.rng_seed, 0);
    let interior = uniform_interior(&mut rng, cfg.n_interior);

    // Boundary: equidistribute over the four edges, remainder to the first
    // edges; cell-centered along each edge so corners never duplicate.
    let mut boundary = Vec::with_capacity(cfg.n_boundary);
    let base = cfg.n_boundary / 4;
    let rem = cfg.n_boundary % 4;
    for (e, edge) in [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left].into_iter().enumerate() {
        let m = base + usize::from(e < rem);
        for j in 0..m {
            let t = (j as f64 + 0.5) / m as f64;
            let (x, y) = match edge {
                Edge::Bottom => (t, 0.0),
                Edge::Right => (1.0, t),
                Edge::Top => (1.0 - t, 1.0),
                Edge::Left => (0.0, 1.0 - t),
            };
            boundary.push(BoundaryPoint { x, y, edge });
        }
    }

    // Interface points parameterized by y: x = (c + b y) solved from g = 0.
    let interface = match &case.interface {
        Some(iface) => {
            let n = cfg.n_interface;
            (0..n)
                .map(|j| {
                    let y = if n == 1 { 0.5 } else { j as f64 / (n - 1) as f64 };
                    let x = (-iface.c - iface.b * y) / iface.a;
                    [x, y]
                })
                .collect()
        }
        None => Vec::new(),
    };

    CollocationSet { interior, boundary, interface, quadrature: quadrature_grid(), generation: 0 }
}

/// Fresh uniform candidate pool for one resampling round.
pub fn fresh_pool(cfg: &SamplerConfig, generation: u32) -> Vec<[f64; 2]> {
    let mut rng = interior_rng(cfg.rng_seed.wrapping_add(1), generation);
    uniform_interior(&mut rng, cfg.pool_size)
}

/// Keep the top floor(keep_fraction * n_interior) pool candidates by
/// indicator^k (ties by candidate index ascending), refill the rest
/// uniformly. Boundary, interface, and quadrature sets never move.
pub fn adaptive_resample(
    current: &CollocationSet,
    pool: &[[f64; 2]],
    indicator: &[f64],
    cfg: &SamplerConfig,
) -> Result<CollocationSet, SamplerError> {
    let kept = cfg.kept_count();
    if pool.len() < kept {
        return Err(SamplerError::PoolTooSmall { pool: pool.len(), kept });
    }
    if indicator.len() != pool.len() {
        return Err(SamplerError::IndicatorMismatch { indicator: indicator.len(), pool: pool.len() });
    }

    let mut order: Vec<usize> = (0..pool.len()).collect();
    let score = |i: usize| indicator[i].powf(cfg.power_k);
    order.sort_by(|&a, &b| {
        score(b).partial_cmp(&score(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });

    let mut interior: Vec<[f64; 2]> = order[..kept].iter().map(|&i| pool[i]).collect();
    let generation = current.generation + 1;
    let mut rng = interior_rng(cfg.rng_seed, generation);
    interior.extend(uniform_interior(&mut rng, cfg.n_interior - kept));

    Ok(CollocationSet {
        interior,
        boundary: current.boundary.clone(),
        interface: current.interface.clone(),
        quadrature: current.quadrature.clone(),
        generation,
    })
}

/// Diagnostic dump: `kind,x,y` rows for every movable and fixed point class.
pub fn dump_csv(set: &CollocationSet, path: &Path) -> Result<(), SamplerError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "kind,x,y")?;
    for &[x, y] in &set.interior {
        writeln!(f, "interior,{x},{y}")?;
    }
    for b in &set.boundary {
        writeln!(f, "boundary,{},{}", b.x, b.y)?;
    }
    for &[x, y] in &set.interface {
        writeln!(f, "interface,{x},{y}")?;
    }
    Ok(())
}
