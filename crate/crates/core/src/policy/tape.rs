//! Scalar reverse-mode differentiation for loss composition.
//!
//! Network layers have hand-written backward passes; the tape only covers
//! the scalar algebra between head outputs and the loss.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
    arity: u8,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

/// Adjoints of every node on a tape with respect to one scalar output.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> Result<f64> {
        if v.tape.id != self.tape {
            return Err(Error::DetachedGraph("variable belongs to another tape"));
        }
        Ok(self.adj[v.idx as usize])
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, val: f64, parents: &[(u32, f64)]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let mut p = [(0, 0.0); 2];
        p[..parents.len()].copy_from_slice(parents);
        nodes.push(Node {
            parents: p,
            arity: parents.len() as u8,
        });
        Var {
            tape: self,
            idx: (nodes.len() - 1) as u32,
            val,
        }
    }

    /// Leaf whose gradient is wanted.
    pub fn var(&self, val: f64) -> Var<'_> {
        self.push(val, &[])
    }

    /// Leaf treated as a constant; its adjoint is still reported.
    pub fn constant(&self, val: f64) -> Var<'_> {
        self.push(val, &[])
    }

    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        if output.tape.id != self.id {
            return Err(Error::DetachedGraph("output recorded on another tape"));
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            for &(p, d) in &n.parents[..n.arity as usize] {
                adj[p as usize] += g * d;
            }
        }
        Ok(Gradients { tape: self.id, adj })
    }

    /// Sum of many variables as one chain of additions.
    pub fn sum<'t>(&'t self, vars: impl IntoIterator<Item = Var<'t>>) -> Var<'t> {
        vars.into_iter().fold(self.constant(0.0), |acc, v| acc + v)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    fn same_tape(&self, o: &Var<'t>) {
        assert!(
            self.tape.id == o.tape.id,
            "detached graph: operands recorded on different tapes"
        );
    }

    fn unary(&self, val: f64, d: f64) -> Var<'t> {
        self.tape.push(val, &[(self.idx, d)])
    }

    fn binary(&self, o: &Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        self.same_tape(o);
        self.tape.push(val, &[(self.idx, da), (o.idx, db)])
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.val * self.val, 2.0 * self.val)
    }

    pub fn sqrt(self) -> Var<'t> {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    /// Gradient flows to the larger operand (the first one on ties).
    pub fn max(self, o: Var<'t>) -> Var<'t> {
        if self.val >= o.val {
            self.binary(&o, self.val, 1.0, 0.0)
        } else {
            self.binary(&o, o.val, 0.0, 1.0)
        }
    }

    pub fn min(self, o: Var<'t>) -> Var<'t> {
        if self.val <= o.val {
            self.binary(&o, self.val, 1.0, 0.0)
        } else {
            self.binary(&o, o.val, 0.0, 1.0)
        }
    }

    /// Zero gradient outside `[lo, hi]`.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        if self.val < lo {
            self.unary(lo, 0.0)
        } else if self.val > hi {
            self.unary(hi, 0.0)
        } else {
            self.unary(self.val, 1.0)
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.val / o.val;
        self.binary(&o, q, 1.0 / o.val, -q / o.val)
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

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.val / c, 1.0 / c)
    }
}
