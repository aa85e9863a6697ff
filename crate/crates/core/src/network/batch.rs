//! Batched jet-valued forward and backward passes over many points at once.
//!
//! Activations are stored slot-major: one (N x width) matrix per jet slot, so
//! every affine layer becomes a handful of GEMMs. The backward pass
//! propagates adjoints of all jet slots through the same structure and
//! accumulates exact parameter gradients. `k = 1` runs a value-only batch
//! (boundary, gauge and data points); `k = 5` carries the full jet.

use super::{Arch, NetworkConfig, ParamVector, N_FIELDS, N_INPUTS};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

/// Slot-major batch of jets: `slots[s]` is (N x width) for slot s in
/// (val, dx, dy, dxx, dyy) order, truncated to k slots.
#[derive(Debug, Clone)]
pub struct JetBatch {
    pub slots: Vec<Array2<f64>>,
}

impl JetBatch {
    pub fn zeros(n: usize, width: usize, k: usize) -> Self {
        JetBatch { slots: (0..k).map(|_| Array2::zeros((n, width))).collect() }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn n(&self) -> usize {
        self.slots[0].nrows()
    }

    /// Coordinate-seeded input batch (N x 2).
    pub fn seed_points(pts: &[[f64; 2]], k: usize) -> Self {
        let n = pts.len();
        let mut b = JetBatch::zeros(n, N_INPUTS, k);
        for (i, p) in pts.iter().enumerate() {
            b.slots[0][[i, 0]] = p[0];
            b.slots[0][[i, 1]] = p[1];
        }
        if k > 1 {
            for i in 0..n {
                b.slots[1][[i, 0]] = 1.0; // dx of x
                b.slots[2][[i, 1]] = 1.0; // dy of y
            }
        }
        b
    }
}

fn weight_view(seg: &[f64], n_out: usize, n_in: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((n_out, n_in), seg).expect("segment shape")
}

fn affine_fwd(w: ArrayView2<'_, f64>, b: &[f64], x: &JetBatch) -> JetBatch {
    let k = x.k();
    let mut slots = Vec::with_capacity(k);
    for s in 0..k {
        let mut y = x.slots[s].dot(&w.t());
        if s == 0 {
            for mut row in y.rows_mut() {
                for (yi, bi) in row.iter_mut().zip(b.iter()) {
                    *yi += bi;
                }
            }
        }
        slots.push(y);
    }
    JetBatch { slots }
}

/// xbar = ybar W; wgrad += sum_s ybar_s^T x_s; bgrad += colsum(ybar_val).
fn affine_bwd(
    w: ArrayView2<'_, f64>,
    x: &JetBatch,
    ybar: &JetBatch,
    mut wgrad: ArrayViewMut2<'_, f64>,
    bgrad: &mut [f64],
) -> JetBatch {
    let k = x.k();
    let mut slots = Vec::with_capacity(k);
    for s in 0..k {
        slots.push(ybar.slots[s].dot(&w));
        general_mat_mul(1.0, &ybar.slots[s].t(), &x.slots[s], 1.0, &mut wgrad);
    }
    for row in ybar.slots[0].rows() {
        for (g, yi) in bgrad.iter_mut().zip(row.iter()) {
            *g += yi;
        }
    }
    JetBatch { slots }
}

/// Elementwise second-order chain rule through an activation, given the
/// derivatives d = f', dd = f'', computed per element from the output value.
macro_rules! activation_fwd {
    ($name:ident, $f:expr, $dfs:expr) => {
        fn $name(a: &JetBatch) -> JetBatch {
            let k = a.k();
            let n = a.n();
            let w = a.slots[0].ncols();
            let mut out = JetBatch::zeros(n, w, k);
            let len = n * w;
            let a0 = a.slots[0].as_slice().unwrap();
            if k == 1 {
                let o0 = out.slots[0].as_slice_mut().unwrap();
                for i in 0..len {
                    o0[i] = $f(a0[i]);
                }
                return out;
            }
            let (a1, a2, a3, a4) = (
                a.slots[1].as_slice().unwrap(),
                a.slots[2].as_slice().unwrap(),
                a.slots[3].as_slice().unwrap(),
                a.slots[4].as_slice().unwrap(),
            );
            {
                let [o0, o1, o2, o3, o4] = out.slots.get_disjoint_mut([0, 1, 2, 3, 4]).unwrap();
                let o0 = o0.as_slice_mut().unwrap();
                let o1 = o1.as_slice_mut().unwrap();
                let o2 = o2.as_slice_mut().unwrap();
                let o3 = o3.as_slice_mut().unwrap();
                let o4 = o4.as_slice_mut().unwrap();
                for i in 0..len {
                    let f = $f(a0[i]);
                    let (d, dd) = $dfs(f);
                    o0[i] = f;
                    o1[i] = d * a1[i];
                    o2[i] = d * a2[i];
                    o3[i] = dd * a1[i] * a1[i] + d * a3[i];
                    o4[i] = dd * a2[i] * a2[i] + d * a4[i];
                }
            }
            out
        }
    };
}

fn tanh_val(x: f64) -> f64 {
    x.tanh()
}
fn tanh_derivs(t: f64) -> (f64, f64) {
    let d = 1.0 - t * t;
    (d, -2.0 * t * d)
}
fn sigmoid_val(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
fn sigmoid_derivs(sv: f64) -> (f64, f64) {
    let d = sv * (1.0 - sv);
    (d, d * (1.0 - 2.0 * sv))
}

activation_fwd!(tanh_fwd, tanh_val, tanh_derivs);
activation_fwd!(sigmoid_fwd, sigmoid_val, sigmoid_derivs);

/// Adjoint of an activation: needs the cached pre-activation jets and the
/// output values (from which f', f'', f''' are reconstructed).
fn activation_bwd(
    a: &JetBatch,
    fval: &Array2<f64>,
    ybar: &JetBatch,
    derivs3: impl Fn(f64) -> (f64, f64, f64),
) -> JetBatch {
    let k = a.k();
    let n = a.n();
    let w = a.slots[0].ncols();
    let len = n * w;
    let mut out = JetBatch::zeros(n, w, k);
    let f = fval.as_slice().unwrap();
    if k == 1 {
        let y0 = ybar.slots[0].as_slice().unwrap();
        let o0 = out.slots[0].as_slice_mut().unwrap();
        for i in 0..len {
            let (d, _, _) = derivs3(f[i]);
            o0[i] = y0[i] * d;
        }
        return out;
    }
    let (a1, a2, a3, a4) = (
        a.slots[1].as_slice().unwrap(),
        a.slots[2].as_slice().unwrap(),
        a.slots[3].as_slice().unwrap(),
        a.slots[4].as_slice().unwrap(),
    );
    let (y0, y1, y2, y3, y4) = (
        ybar.slots[0].as_slice().unwrap(),
        ybar.slots[1].as_slice().unwrap(),
        ybar.slots[2].as_slice().unwrap(),
        ybar.slots[3].as_slice().unwrap(),
        ybar.slots[4].as_slice().unwrap(),
    );
    {
        let [o0, o1, o2, o3, o4] = out.slots.get_disjoint_mut([0, 1, 2, 3, 4]).unwrap();
        let o0 = o0.as_slice_mut().unwrap();
        let o1 = o1.as_slice_mut().unwrap();
        let o2 = o2.as_slice_mut().unwrap();
        let o3 = o3.as_slice_mut().unwrap();
        let o4 = o4.as_slice_mut().unwrap();
        for i in 0..len {
            let (d, dd, ddd) = derivs3(f[i]);
            o0[i] = y0[i] * d
                + y1[i] * dd * a1[i]
                + y2[i] * dd * a2[i]
                + y3[i] * (ddd * a1[i] * a1[i] + dd * a3[i])
                + y4[i] * (ddd * a2[i] * a2[i] + dd * a4[i]);
            o1[i] = y1[i] * d + 2.0 * dd * a1[i] * y3[i];
            o2[i] = y2[i] * d + 2.0 * dd * a2[i] * y4[i];
            o3[i] = y3[i] * d;
            o4[i] = y4[i] * d;
        }
    }
    out
}

fn tanh_derivs3(t: f64) -> (f64, f64, f64) {
    let d = 1.0 - t * t;
    let dd = -2.0 * t * d;
    (d, dd, -2.0 * (d * d + t * dd))
}

fn sigmoid_derivs3(sv: f64) -> (f64, f64, f64) {
    let d = sv * (1.0 - sv);
    let dd = d * (1.0 - 2.0 * sv);
    (d, dd, dd * (1.0 - 2.0 * sv) - 2.0 * d * d)
}

/// out = z + (1 + m) ⊙ t, elementwise jet product.
fn gate_combine_fwd(z: &JetBatch, t: &JetBatch, m: &JetBatch) -> JetBatch {
    let k = z.k();
    let n = z.n();
    let w = z.slots[0].ncols();
    let len = n * w;
    let mut out = JetBatch::zeros(n, w, k);
    if k == 1 {
        let (z0, t0, m0) = (
            z.slots[0].as_slice().unwrap(),
            t.slots[0].as_slice().unwrap(),
            m.slots[0].as_slice().unwrap(),
        );
        let o0 = out.slots[0].as_slice_mut().unwrap();
        for i in 0..len {
            o0[i] = z0[i] + (1.0 + m0[i]) * t0[i];
        }
        return out;
    }
    for s in 0..k {
        let zs = z.slots[s].as_slice().unwrap();
        let (t0, ts) = (t.slots[0].as_slice().unwrap(), t.slots[s].as_slice().unwrap());
        let (m0, ms) = (m.slots[0].as_slice().unwrap(), m.slots[s].as_slice().unwrap());
        let cross = match s {
            0 => None,
            1 | 2 => Some((s, s)),       // g_s * t_0 handled below; no extra cross term
            3 => Some((1, 1)),           // 2 g_dx t_dx
            4 => Some((2, 2)),           // 2 g_dy t_dy
            _ => unreachable!(),
        };
        let os = out.slots[s].as_slice_mut().unwrap();
        match (s, cross) {
            (0, _) => {
                for i in 0..len {
                    os[i] = zs[i] + (1.0 + m0[i]) * t0[i];
                }
            }
            (1 | 2, _) => {
                // (g t).d = g.d t.val + g.val t.d, with g = 1 + m
                for i in 0..len {
                    os[i] = zs[i] + ms[i] * t0[i] + (1.0 + m0[i]) * ts[i];
                }
            }
            (_, Some((gs, tsx))) => {
                let g1 = m.slots[gs].as_slice().unwrap();
                let t1 = t.slots[tsx].as_slice().unwrap();
                for i in 0..len {
                    os[i] = zs[i] + ms[i] * t0[i] + 2.0 * g1[i] * t1[i] + (1.0 + m0[i]) * ts[i];
                }
            }
            _ => unreachable!(),
        }
    }
    out
}

/// Adjoints of the gate combination; returns (tbar, mbar). The skip-path
/// adjoint is the output adjoint itself.
fn gate_combine_bwd(t: &JetBatch, m: &JetBatch, ybar: &JetBatch) -> (JetBatch, JetBatch) {
    let k = t.k();
    let n = t.n();
    let w = t.slots[0].ncols();
    let len = n * w;
    let mut tbar = JetBatch::zeros(n, w, k);
    let mut mbar = JetBatch::zeros(n, w, k);
    let t0 = t.slots[0].as_slice().unwrap();
    let m0 = m.slots[0].as_slice().unwrap();
    let y: Vec<&[f64]> = (0..k).map(|s| ybar.slots[s].as_slice().unwrap()).collect();
    if k == 1 {
        let tb = tbar.slots[0].as_slice_mut().unwrap();
        let mb = mbar.slots[0].as_slice_mut().unwrap();
        for i in 0..len {
            tb[i] = (1.0 + m0[i]) * y[0][i];
            mb[i] = t0[i] * y[0][i];
        }
        return (tbar, mbar);
    }
    let t1 = t.slots[1].as_slice().unwrap();
    let t2 = t.slots[2].as_slice().unwrap();
    let t3 = t.slots[3].as_slice().unwrap();
    let t4 = t.slots[4].as_slice().unwrap();
    let m1 = m.slots[1].as_slice().unwrap();
    let m2 = m.slots[2].as_slice().unwrap();
    let m3 = m.slots[3].as_slice().unwrap();
    let m4 = m.slots[4].as_slice().unwrap();
    {
        let [tb0s, tb1s, tb2s, tb3s, tb4s] = tbar.slots.get_disjoint_mut([0, 1, 2, 3, 4]).unwrap();
        let [mb0s, mb1s, mb2s, mb3s, mb4s] = mbar.slots.get_disjoint_mut([0, 1, 2, 3, 4]).unwrap();
        let tb0 = tb0s.as_slice_mut().unwrap();
        let tb1 = tb1s.as_slice_mut().unwrap();
        let tb2 = tb2s.as_slice_mut().unwrap();
        let tb3 = tb3s.as_slice_mut().unwrap();
        let tb4 = tb4s.as_slice_mut().unwrap();
        let mb0 = mb0s.as_slice_mut().unwrap();
        let mb1 = mb1s.as_slice_mut().unwrap();
        let mb2 = mb2s.as_slice_mut().unwrap();
        let mb3 = mb3s.as_slice_mut().unwrap();
        let mb4 = mb4s.as_slice_mut().unwrap();
        for i in 0..len {
            let g0 = 1.0 + m0[i];
            // transposed product rule, d(out)/dt and d(out)/dg slots
            tb0[i] = g0 * y[0][i] + m1[i] * y[1][i] + m2[i] * y[2][i] + m3[i] * y[3][i] + m4[i] * y[4][i];
            tb1[i] = g0 * y[1][i] + 2.0 * m1[i] * y[3][i];
            tb2[i] = g0 * y[2][i] + 2.0 * m2[i] * y[4][i];
            tb3[i] = g0 * y[3][i];
            tb4[i] = g0 * y[4][i];
            mb0[i] = t0[i] * y[0][i] + t1[i] * y[1][i] + t2[i] * y[2][i] + t3[i] * y[3][i] + t4[i] * y[4][i];
            mb1[i] = t0[i] * y[1][i] + 2.0 * t1[i] * y[3][i];
            mb2[i] = t0[i] * y[2][i] + 2.0 * t2[i] * y[4][i];
            mb3[i] = t0[i] * y[3][i];
            mb4[i] = t0[i] * y[4][i];
        }
    }
    (tbar, mbar)
}

enum LayerCache {
    Ra { t_pre: JetBatch, t: JetBatch, m_pre: JetBatch, m: JetBatch },
    Mlp { pre: JetBatch },
}

/// Cached activations from one batched forward pass.
pub struct BatchCache {
    input: JetBatch,
    lift_pre: JetBatch,
    /// z after the lift (index 0) and after each block (index l+1).
    zs: Vec<JetBatch>,
    layers: Vec<LayerCache>,
    /// Network output jets, (N x 5) per slot, field order (u, v, p, phi, T).
    pub out: JetBatch,
}

pub fn batch_forward(
    params: &ParamVector,
    cfg: &NetworkConfig,
    pts: &[[f64; 2]],
    k: usize,
) -> BatchCache {
    let w = cfg.width;
    let input = JetBatch::seed_points(pts, k);
    let lift_pre = affine_fwd(
        weight_view(params.seg("lift_w"), w, N_INPUTS),
        params.seg("lift_b"),
        &input,
    );
    let mut zs = vec![tanh_fwd(&lift_pre)];
    let mut layers = Vec::with_capacity(cfg.n_blocks);
    for l in 0..cfg.n_blocks {
        let z = zs.last().unwrap();
        match cfg.arch {
            Arch::RaPinn => {
                let bp = params.block(l);
                let t_pre = affine_fwd(weight_view(bp.trunk_w, w, w), bp.trunk_b, z);
                let t = tanh_fwd(&t_pre);
                let m_pre = affine_fwd(weight_view(bp.gate_w, w, w), bp.gate_b, z);
                let m = sigmoid_fwd(&m_pre);
                let z_next = gate_combine_fwd(z, &t, &m);
                layers.push(LayerCache::Ra { t_pre, t, m_pre, m });
                zs.push(z_next);
            }
            Arch::Mlp => {
                let pre = affine_fwd(
                    weight_view(params.seg(&format!("hidden{l}_w")), w, w),
                    params.seg(&format!("hidden{l}_b")),
                    z,
                );
                let z_next = tanh_fwd(&pre);
                layers.push(LayerCache::Mlp { pre });
                zs.push(z_next);
            }
        }
    }
    let out = affine_fwd(
        weight_view(params.seg("head_w"), N_FIELDS, w),
        params.seg("head_b"),
        zs.last().unwrap(),
    );
    BatchCache { input, lift_pre, zs, layers, out }
}

/// Accumulate d(loss)/d(params) into `grad` given the adjoints of the output
/// jets. `grad` must be layout-aligned with `params` and is added to, so
/// several batches can share one gradient accumulator.
pub fn batch_backward(
    params: &ParamVector,
    cfg: &NetworkConfig,
    cache: &BatchCache,
    out_bar: &JetBatch,
    grad: &mut [f64],
) {
    let w = cfg.width;
    let layout = params.layout.clone();
    let seg_range = |name: &str| {
        let s = layout.segment(name).expect("segment");
        (s.offset, s.len)
    };
    let mut grad_pair = |name_w: &str, name_b: &str, x: &JetBatch, ybar: &JetBatch, n_out: usize, n_in: usize| {
        let (wo, wl) = seg_range(name_w);
        let (bo, bl) = seg_range(name_b);
        // The bias segment directly follows its weight segment in the layout.
        debug_assert_eq!(wo + wl, bo);
        let (wseg, bseg) = grad[wo..bo + bl].split_at_mut(wl);
        let wview = ArrayViewMut2::from_shape((n_out, n_in), wseg).unwrap();
        affine_bwd(weight_view(params.seg(name_w), n_out, n_in), x, ybar, wview, bseg)
    };

    let mut zbar = grad_pair("head_w", "head_b", cache.zs.last().unwrap(), out_bar, N_FIELDS, w);

    for l in (0..cfg.n_blocks).rev() {
        let z_in = &cache.zs[l];
        match (&cache.layers[l], cfg.arch) {
            (LayerCache::Ra { t_pre, t, m_pre, m }, Arch::RaPinn) => {
                let (tbar, mbar) = gate_combine_bwd(t, m, &zbar);
                let t_pre_bar = activation_bwd(t_pre, &t.slots[0], &tbar, tanh_derivs3);
                let m_pre_bar = activation_bwd(m_pre, &m.slots[0], &mbar, sigmoid_derivs3);
                let z_from_t = grad_pair(
                    &format!("block{l}_trunk_w"),
                    &format!("block{l}_trunk_b"),
                    z_in,
                    &t_pre_bar,
                    w,
                    w,
                );
                let z_from_m = grad_pair(
                    &format!("block{l}_gate_w"),
                    &format!("block{l}_gate_b"),
                    z_in,
                    &m_pre_bar,
                    w,
                    w,
                );
                for s in 0..zbar.k() {
                    zbar.slots[s] += &z_from_t.slots[s];
                    zbar.slots[s] += &z_from_m.slots[s];
                }
            }
            (LayerCache::Mlp { pre }, Arch::Mlp) => {
                let pre_bar = activation_bwd(pre, &cache.zs[l + 1].slots[0], &zbar, tanh_derivs3);
                zbar = grad_pair(
                    &format!("hidden{l}_w"),
                    &format!("hidden{l}_b"),
                    z_in,
                    &pre_bar,
                    w,
                    w,
                );
            }
            _ => unreachable!("cache arch mismatch"),
        }
    }

    let lift_bar = activation_bwd(&cache.lift_pre, &cache.zs[0].slots[0], &zbar, tanh_derivs3);
    let _ = grad_pair("lift_w", "lift_b", &cache.input, &lift_bar, w, N_INPUTS);
}
