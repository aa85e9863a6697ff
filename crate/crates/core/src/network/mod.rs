//! RA-PINN backbone and the depth-matched Pure-MLP baseline.
//!
//! The network maps a spatial point (x, y) to the five-field prediction
//! (u, v, p, φ, T). Evaluating it on coordinate-seeded jets yields the spatial
//! derivative slots needed by the residual operators. The batched training
//! path lives in [`batch`]; this module holds the reference per-point
//! evaluation, parameter layout, initialization and checkpoint format.

pub mod batch;
pub mod checkpoint;

use crate::derivkit::Jet2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const FIELD_NAMES: [&str; 5] = ["u", "v", "p", "phi", "T"];
pub const N_FIELDS: usize = 5;
pub const N_INPUTS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector does not match network config: expected {expected} values, got {got}")]
    ConfigMismatch { expected: usize, got: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    RaPinn,
    Mlp,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::RaPinn => write!(f, "rapinn"),
            Arch::Mlp => write!(f, "mlp"),
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rapinn" => Ok(Arch::RaPinn),
            "mlp" => Ok(Arch::Mlp),
            other => Err(format!("unknown model arch '{other}' (expected rapinn or mlp)")),
        }
    }
}

fn default_width() -> usize {
    64
}
fn default_blocks() -> usize {
    4
}
fn default_trunk_activation() -> String {
    "tanh".into()
}
fn default_gate_activation() -> String {
    "sigmoid".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    /// Only "tanh" is supported; kept explicit in serialized configs.
    #[serde(default = "default_trunk_activation")]
    pub trunk_activation: String,
    /// Only "sigmoid" is supported.
    #[serde(default = "default_gate_activation")]
    pub gate_activation: String,
    pub arch: Arch,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(arch: Arch, width: usize, n_blocks: usize, seed: u64) -> Self {
        NetworkConfig {
            width,
            n_blocks,
            trunk_activation: default_trunk_activation(),
            gate_activation: default_gate_activation(),
            arch,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.width < 1 || self.n_blocks < 1 {
            return Err(NetworkError::InvalidConfig(
                "width and n_blocks must be >= 1".into(),
            ));
        }
        if self.trunk_activation != "tanh" {
            return Err(NetworkError::InvalidConfig(format!(
                "unsupported trunk activation '{}'",
                self.trunk_activation
            )));
        }
        if self.gate_activation != "sigmoid" {
            return Err(NetworkError::InvalidConfig(format!(
                "unsupported gate activation '{}'",
                self.gate_activation
            )));
        }
        Ok(())
    }
}

/// One named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    /// (fan_in, fan_out) for weight matrices; None for biases.
    pub fans: Option<(usize, usize)>,
}

/// Layout of named segments; a pure function of the config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub total: usize,
}

impl Layout {
    pub fn for_config(cfg: &NetworkConfig) -> Layout {
        let w = cfg.width;
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, len: usize, fans: Option<(usize, usize)>, off: &mut usize| {
            segments.push(Segment { name, offset: *off, len, fans });
            *off += len;
        };
        push("lift_w".into(), w * N_INPUTS, Some((N_INPUTS, w)), &mut offset);
        push("lift_b".into(), w, None, &mut offset);
        for l in 0..cfg.n_blocks {
            match cfg.arch {
                Arch::RaPinn => {
                    push(format!("block{l}_trunk_w"), w * w, Some((w, w)), &mut offset);
                    push(format!("block{l}_trunk_b"), w, None, &mut offset);
                    push(format!("block{l}_gate_w"), w * w, Some((w, w)), &mut offset);
                    push(format!("block{l}_gate_b"), w, None, &mut offset);
                }
                Arch::Mlp => {
                    push(format!("hidden{l}_w"), w * w, Some((w, w)), &mut offset);
                    push(format!("hidden{l}_b"), w, None, &mut offset);
                }
            }
        }
        push("head_w".into(), N_FIELDS * w, Some((w, N_FIELDS)), &mut offset);
        push("head_b".into(), N_FIELDS, None, &mut offset);
        Layout { segments, total: offset }
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Total parameter count for a config.
pub fn param_count(cfg: &NetworkConfig) -> usize {
    Layout::for_config(cfg).total
}

/// Flat parameter vector with its named-segment layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn zeros(cfg: &NetworkConfig) -> ParamVector {
        let layout = Layout::for_config(cfg);
        ParamVector { values: vec![0.0; layout.total], layout }
    }

    pub fn seg(&self, name: &str) -> &[f64] {
        let s = self.layout.segment(name).expect("unknown segment");
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn seg_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.layout.segment(name).expect("unknown segment").clone();
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scaled-uniform init on [-sqrt(6/(fan_in+fan_out)), +...] for weights,
/// zeros for biases. Deterministic for a fixed seed.
pub fn init_params(cfg: &NetworkConfig, rng_seed: u64) -> ParamVector {
    let layout = Layout::for_config(cfg);
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for seg in &layout.segments {
        if let Some((fan_in, fan_out)) = seg.fans {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[seg.offset..seg.offset + seg.len] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
    }
    ParamVector { values, layout }
}

/// Five-field prediction with per-field jets at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldState<S = f64> {
    pub u: Jet2<S>,
    pub v: Jet2<S>,
    pub p: Jet2<S>,
    pub phi: Jet2<S>,
    pub temp: Jet2<S>,
}

impl<S: crate::derivkit::Scalar> FieldState<S> {
    pub fn fields(&self) -> [Jet2<S>; 5] {
        [self.u, self.v, self.p, self.phi, self.temp]
    }

    pub fn from_fields(f: [Jet2<S>; 5]) -> Self {
        FieldState { u: f[0], v: f[1], p: f[2], phi: f[3], temp: f[4] }
    }
}

/// Parameters of one residual-attention block, viewed from a `ParamVector`.
#[derive(Debug, Clone, Copy)]
pub struct BlockParams<'a> {
    pub trunk_w: &'a [f64],
    pub trunk_b: &'a [f64],
    pub gate_w: &'a [f64],
    pub gate_b: &'a [f64],
    pub width: usize,
}

impl ParamVector {
    /// View of block `l`'s parameters (RA-PINN layout).
    pub fn block(&self, l: usize) -> BlockParams<'_> {
        let width = self.layout.segment("lift_b").expect("lift_b").len;
        BlockParams {
            trunk_w: self.seg(&format!("block{l}_trunk_w")),
            trunk_b: self.seg(&format!("block{l}_trunk_b")),
            gate_w: self.seg(&format!("block{l}_gate_w")),
            gate_b: self.seg(&format!("block{l}_gate_b")),
            width,
        }
    }
}

fn affine_jets(w: &[f64], b: Option<&[f64]>, x: &[Jet2], n_out: usize) -> Vec<Jet2> {
    let n_in = x.len();
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let mut acc = match b {
            Some(b) => Jet2::constant(b[i]),
            None => Jet2::zero(),
        };
        for (j, xj) in x.iter().enumerate() {
            acc = acc + xj.scale(w[i * n_in + j]);
        }
        out.push(acc);
    }
    out
}

/// One residual-attention block: z + (1 + m) ⊙ t with t = tanh(Wt z + bt),
/// m = sigmoid(Wm z + bm).
pub fn ra_block_forward(z: &[Jet2], block: BlockParams<'_>) -> Result<Vec<Jet2>, NetworkError> {
    let w = block.width;
    if z.len() != w {
        return Err(NetworkError::DimensionMismatch { expected: w, got: z.len() });
    }
    let t: Vec<Jet2> = affine_jets(block.trunk_w, Some(block.trunk_b), z, w)
        .into_iter()
        .map(|a| a.tanh())
        .collect();
    let m: Vec<Jet2> = affine_jets(block.gate_w, Some(block.gate_b), z, w)
        .into_iter()
        .map(|a| a.sigmoid())
        .collect();
    Ok(z.iter()
        .zip(t.iter().zip(m.iter()))
        .map(|(&zi, (&ti, &mi))| {
            let gate = Jet2::constant(1.0) + mi;
            zi + gate * ti
        })
        .collect())
}

/// Reference per-point forward pass on coordinate-seeded jets.
pub fn forward(
    params: &ParamVector,
    cfg: &NetworkConfig,
    point: (Jet2, Jet2),
) -> Result<FieldState, NetworkError> {
    let expected = param_count(cfg);
    if params.len() != expected {
        return Err(NetworkError::ConfigMismatch { expected, got: params.len() });
    }
    let input = [point.0, point.1];
    let mut z: Vec<Jet2> = affine_jets(params.seg("lift_w"), Some(params.seg("lift_b")), &input, cfg.width)
        .into_iter()
        .map(|a| a.tanh())
        .collect();
    for l in 0..cfg.n_blocks {
        match cfg.arch {
            Arch::RaPinn => {
                z = ra_block_forward(&z, params.block(l))?;
            }
            Arch::Mlp => {
                z = affine_jets(
                    params.seg(&format!("hidden{l}_w")),
                    Some(params.seg(&format!("hidden{l}_b"))),
                    &z,
                    cfg.width,
                )
                .into_iter()
                .map(|a| a.tanh())
                .collect();
            }
        }
    }
    let out = affine_jets(params.seg("head_w"), Some(params.seg("head_b")), &z, N_FIELDS);
    Ok(FieldState::from_fields([out[0], out[1], out[2], out[3], out[4]]))
}

/// Forward pass at a point, seeding the coordinates.
pub fn forward_at(
    params: &ParamVector,
    cfg: &NetworkConfig,
    x: f64,
    y: f64,
) -> Result<FieldState, NetworkError> {
    forward(params, cfg, (Jet2::var_x(x), Jet2::var_y(y)))
}

/// Value-only forward pass (no derivative slots); used for grids, boundary
/// data and the gauge quadrature, where jets would be wasted work.
pub fn value_forward(
    params: &ParamVector,
    cfg: &NetworkConfig,
    x: f64,
    y: f64,
) -> Result<[f64; N_FIELDS], NetworkError> {
    let expected = param_count(cfg);
    if params.len() != expected {
        return Err(NetworkError::ConfigMismatch { expected, got: params.len() });
    }
    let w = cfg.width;
    let lift_w = params.seg("lift_w");
    let lift_b = params.seg("lift_b");
    let mut z: Vec<f64> = (0..w)
        .map(|i| (lift_b[i] + lift_w[i * 2] * x + lift_w[i * 2 + 1] * y).tanh())
        .collect();
    let mut buf = vec![0.0; w];
    for l in 0..cfg.n_blocks {
        match cfg.arch {
            Arch::RaPinn => {
                let bp = params.block(l);
                for i in 0..w {
                    let mut at = bp.trunk_b[i];
                    let mut am = bp.gate_b[i];
                    let row_t = &bp.trunk_w[i * w..(i + 1) * w];
                    let row_m = &bp.gate_w[i * w..(i + 1) * w];
                    for j in 0..w {
                        at += row_t[j] * z[j];
                        am += row_m[j] * z[j];
                    }
                    let t = at.tanh();
                    let m = 1.0 / (1.0 + (-am).exp());
                    buf[i] = z[i] + (1.0 + m) * t;
                }
                z.copy_from_slice(&buf);
            }
            Arch::Mlp => {
                let hw = params.seg(&format!("hidden{l}_w"));
                let hb = params.seg(&format!("hidden{l}_b"));
                for i in 0..w {
                    let mut a = hb[i];
                    let row = &hw[i * w..(i + 1) * w];
                    for j in 0..w {
                        a += row[j] * z[j];
                    }
                    buf[i] = a.tanh();
                }
                z.copy_from_slice(&buf);
            }
        }
    }
    let head_w = params.seg("head_w");
    let head_b = params.seg("head_b");
    let mut out = [0.0; N_FIELDS];
    for (i, o) in out.iter_mut().enumerate() {
        let mut a = head_b[i];
        let row = &head_w[i * w..(i + 1) * w];
        for j in 0..w {
            a += row[j] * z[j];
        }
        *o = a;
    }
    Ok(out)
}

/// Residual block without the attention gate: z + tanh(Wz + b). Used to
/// check that the gate modulates only the trunk output.
#[doc(hidden)]
pub fn ra_block_forward_ungated(z: &[Jet2], trunk_w: &[f64], trunk_b: &[f64]) -> Vec<Jet2> {
    let t = affine_jets(trunk_w, Some(trunk_b), z, z.len());
    z.iter().zip(t).map(|(&zi, ti)| zi + ti.tanh()).collect()
}
