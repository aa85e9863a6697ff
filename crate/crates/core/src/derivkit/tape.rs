//! Reverse-mode tape over parameter-dependent scalars.
//!
//! A [`Tape`] records primitive operations as they execute; replaying the
//! record backward from a scalar root accumulates the exact gradient of that
//! root with respect to every leaf. Tape construction is confined to one
//! execution context per loss evaluation (the tape is not `Sync`); gradients
//! from independent tapes are combined by fixed-order summation.

use super::scalar::Scalar;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TapeError {
    #[error("backward pass on a variable that is not on this tape (unfinalized or foreign computation)")]
    ForeignVariable,
}

#[derive(Copy, Clone)]
struct Node {
    parents: [usize; 2],
    partials: [f64; 2],
}

/// Ordered record of primitive operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a tape. Cheap to copy; carries its current value.
#[derive(Copy, Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record a leaf (independent variable).
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let idx = self.push(Node { parents: [0, 0], partials: [0.0, 0.0] });
        Var { tape: self, idx, val }
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Replay the tape backward from `root`, returning per-node adjoints.
    pub fn gradient(&self, root: Var<'_>) -> Result<Gradients, TapeError> {
        let nodes = self.nodes.borrow();
        if !std::ptr::eq(root.tape, self) || root.idx >= nodes.len() {
            return Err(TapeError::ForeignVariable);
        }
        let mut adj = vec![0.0; nodes.len()];
        adj[root.idx] = 1.0;
        for i in (0..=root.idx).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.partials[0] != 0.0 {
                adj[n.parents[0]] += n.partials[0] * a;
            }
            if n.partials[1] != 0.0 {
                adj[n.parents[1]] += n.partials[1] * a;
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

/// Per-node adjoints from one backward replay.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints[v.idx]
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parents: [self.idx, 0],
            partials: [partial, 0.0],
        });
        Var { tape: self.tape, idx, val }
    }

    fn binary(self, rhs: Var<'t>, val: f64, pa: f64, pb: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parents: [self.idx, rhs.idx],
            partials: [pa, pb],
        });
        Var { tape: self.tape, idx, val }
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.val.sin(), self.val.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.val.cos(), -self.val.sin())
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.val;
        self.binary(rhs, self.val * inv, inv, -self.val * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.val * c, c)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(&self) -> f64 {
        self.val
    }
}

/// Gradient of a scalar loss with respect to a flat parameter vector.
///
/// The loss closure receives the tape and one leaf per parameter and must
/// return the scalar root of the computation.
pub fn param_gradient<F>(loss: F, params: &[f64]) -> Vec<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = params.iter().map(|&p| tape.leaf(p)).collect();
    let root = loss(&tape, &leaves);
    let grads = tape.gradient(root).expect("loss root not on tape");
    leaves.iter().map(|v| grads.wrt(*v)).collect()
}
