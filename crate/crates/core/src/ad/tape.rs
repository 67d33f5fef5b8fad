use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Wengert list of scalar operations for reverse-mode accumulation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Scalar recorded on a [`Tape`]. Constants carry no tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    v: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, partials });
        (nodes.len() - 1) as u32
    }

    /// New independent input.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.push([NONE, NONE], [0.0, 0.0]);
        Var { tape: Some(self), idx, v }
    }

    /// Adjoints of `out` with respect to every recorded node.
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if out.tape.is_none() {
            return adj;
        }
        adj[out.idx as usize] = 1.0;
        for i in (0..=out.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            for k in 0..2 {
                if n.parents[k] != NONE {
                    adj[n.parents[k] as usize] += a * n.partials[k];
                }
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    fn record(self, other: Option<Self>, v: f64, d_self: f64, d_other: f64) -> Self {
        let tape = self.tape.or(other.and_then(|o| o.tape));
        let Some(tape) = tape else {
            return Var { tape: None, idx: NONE, v };
        };
        let pa = if self.tape.is_some() { self.idx } else { NONE };
        let pb = match other {
            Some(o) if o.tape.is_some() => o.idx,
            _ => NONE,
        };
        let idx = tape.push([pa, pb], [d_self, d_other]);
        Var { tape: Some(tape), idx, v }
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, #{:?})", self.v, self.index())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.record(Some(o), self.v + o.v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.record(Some(o), self.v - o.v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.record(Some(o), self.v * o.v, o.v, self.v)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        self.record(Some(o), q, 1.0 / o.v, -q / o.v)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.record(None, -self.v, -1.0, 0.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.record(None, self.v + c, 1.0, 0.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.record(None, self.v - c, 1.0, 0.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.record(None, self.v * c, c, 0.0)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.record(None, self.v / c, 1.0 / c, 0.0)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl<'t> $tr for Var<'t> {
            fn $m(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    )*};
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl<'t> Scalar for Var<'t> {
    const SLOTS: usize = 0;

    fn constant(value: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            v: value,
        }
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn tangent(&self) -> &[f64] {
        &[]
    }

    fn from_parts(value: f64, _tangent: &[f64]) -> Self {
        Self::constant(value)
    }

    fn unary(self, value: f64, deriv: f64) -> Self {
        self.record(None, value, deriv, 0.0)
    }

    fn binary(self, other: Self, value: f64, d_self: f64, d_other: f64) -> Self {
        self.record(Some(other), value, d_self, d_other)
    }
}
