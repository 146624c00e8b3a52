//! Append-only scalar tape and its reverse sweep.

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The node `k` positions after this one.
    #[inline]
    pub fn offset(self, k: usize) -> Var {
        Var(self.0 + k as u32)
    }
}

/// A contiguous run of leaves pushed together.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub start: Var,
    pub len: usize,
}

impl Run {
    #[inline]
    pub fn var(&self, k: usize) -> Var {
        debug_assert!(k < self.len);
        self.start.offset(k)
    }

    pub fn vars(&self) -> Vec<Var> {
        (0..self.len).map(|k| self.start.offset(k)).collect()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start.index()..self.start.index() + self.len
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind {
    /// `scale * x + offset`
    Affine { scale: f64, offset: f64 },
    Tanh,
    Exp,
    Log,
    Square,
}

impl UnaryKind {
    /// Value and local derivative at `x`.
    #[inline]
    fn eval(self, x: f64) -> (f64, f64) {
        match self {
            UnaryKind::Affine { scale, offset } => (scale * x + offset, scale),
            UnaryKind::Tanh => {
                let y = x.tanh();
                (y, 1.0 - y * y)
            }
            UnaryKind::Exp => {
                let y = x.exp();
                (y, y)
            }
            UnaryKind::Log => (x.ln(), 1.0 / x),
            UnaryKind::Square => (x * x, 2.0 * x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

impl BinaryKind {
    #[inline]
    fn eval(self, a: f64, b: f64) -> (f64, [f64; 2]) {
        match self {
            BinaryKind::Add => (a + b, [1.0, 1.0]),
            BinaryKind::Sub => (a - b, [1.0, -1.0]),
            BinaryKind::Mul => (a * b, [b, a]),
        }
    }
}

/// One recorded operation. Inputs always index earlier nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Leaf,
    Unary {
        kind: UnaryKind,
        arg: Var,
        partial: f64,
    },
    Binary {
        kind: BinaryKind,
        lhs: Var,
        rhs: Var,
        partials: [f64; 2],
    },
    /// `Σ_k v[lhs+k]·v[rhs+k] + v[bias]` over two contiguous runs. The local
    /// partials are the opposite run's values.
    Dot {
        lhs: Var,
        rhs: Var,
        len: u32,
        bias: Option<Var>,
    },
}

/// Dot product with a fixed four-lane summation order. Every forward pass in
/// the crate goes through this so taped and dense evaluations agree bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Reverse-mode scalar tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the reverse sweep is a single backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    output: Option<Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            output: None,
        }
    }

    /// Drop every node but keep the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.output = None;
    }

    /// Drop every node from index `len` on.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.values.truncate(len);
        if self.output.is_some_and(|v| v.index() >= len) {
            self.output = None;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn run_values(&self, run: Run) -> &[f64] {
        &self.values[run.range()]
    }

    #[inline]
    fn push(&mut self, node: Node, value: f64) -> Var {
        let id = Var(u32::try_from(self.nodes.len()).expect("tape exceeds u32 nodes"));
        self.nodes.push(node);
        self.values.push(value);
        id
    }

    /// Independent variable or constant.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Node::Leaf, value)
    }

    /// Push `values` as consecutive leaves.
    pub fn leaves(&mut self, values: &[f64]) -> Run {
        let start = Var(self.nodes.len() as u32);
        self.nodes.extend(std::iter::repeat_n(Node::Leaf, values.len()));
        self.values.extend_from_slice(values);
        Run {
            start,
            len: values.len(),
        }
    }

    pub fn unary(&mut self, kind: UnaryKind, arg: Var) -> Var {
        let (y, partial) = kind.eval(self.value(arg));
        self.push(Node::Unary { kind, arg, partial }, y)
    }

    pub fn binary(&mut self, kind: BinaryKind, lhs: Var, rhs: Var) -> Var {
        let (y, partials) = kind.eval(self.value(lhs), self.value(rhs));
        self.push(
            Node::Binary {
                kind,
                lhs,
                rhs,
                partials,
            },
            y,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn affine(&mut self, a: Var, scale: f64, offset: f64) -> Var {
        self.unary(UnaryKind::Affine { scale, offset }, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.affine(a, c, 0.0)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Log, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Square, a)
    }

    /// Dot product of two contiguous runs plus an optional bias node.
    pub fn dot_runs(&mut self, lhs: Var, rhs: Var, len: usize, bias: Option<Var>) -> Var {
        let (li, ri) = (lhs.index(), rhs.index());
        let mut s = dot(&self.values[li..li + len], &self.values[ri..ri + len]);
        if let Some(b) = bias {
            s += self.value(b);
        }
        self.push(
            Node::Dot {
                lhs,
                rhs,
                len: len as u32,
                bias,
            },
            s,
        )
    }

    /// `Σ a_k·b_k (+ bias)`. Uses a single dot node when both operands are
    /// contiguous runs, otherwise a chain of multiply-adds.
    pub fn dot(&mut self, a: &[Var], b: &[Var], bias: Option<Var>) -> Var {
        assert_eq!(a.len(), b.len(), "dot operands differ in length");
        if a.is_empty() {
            return match bias {
                Some(b) => b,
                None => self.leaf(0.0),
            };
        }
        if is_run(a) && is_run(b) {
            return self.dot_runs(a[0], b[0], a.len(), bias);
        }
        let mut acc = self.mul(a[0], b[0]);
        for (&x, &y) in a.iter().zip(b).skip(1) {
            let p = self.mul(x, y);
            acc = self.add(acc, p);
        }
        match bias {
            Some(bv) => self.add(acc, bv),
            None => acc,
        }
    }

    /// Dot of the contiguous run starting at `row` with `x` (+ bias).
    pub fn dot_row(&mut self, row: Var, x: &[Var], bias: Option<Var>) -> Var {
        if is_run(x) && !x.is_empty() {
            self.dot_runs(row, x[0], x.len(), bias)
        } else {
            let lhs: Vec<Var> = (0..x.len()).map(|k| row.offset(k)).collect();
            self.dot(&lhs, x, bias)
        }
    }

    /// Left fold of additions.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        match terms.split_first() {
            None => self.leaf(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    pub fn set_output(&mut self, v: Var) {
        self.output = Some(v);
    }

    pub fn output(&self) -> Option<Var> {
        self.output
    }

    /// Reverse sweep from arbitrary seed adjoints; returns the adjoint of every node.
    pub fn backward(&self, seeds: &[(Var, f64)]) -> Vec<f64> {
        let mut adj = Vec::new();
        self.backward_into(&mut adj, seeds);
        adj
    }

    /// As [`Tape::backward`], reusing `adj`'s allocation.
    pub fn backward_into(&self, adj: &mut Vec<f64>, seeds: &[(Var, f64)]) {
        adj.clear();
        adj.resize(self.nodes.len(), 0.0);
        let mut top = 0;
        for &(v, g) in seeds {
            adj[v.index()] += g;
            top = top.max(v.index() + 1);
        }
        for i in (0..top).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.nodes[i] {
                Node::Leaf => {}
                Node::Unary { arg, partial, .. } => adj[arg.index()] += g * partial,
                Node::Binary {
                    lhs, rhs, partials, ..
                } => {
                    adj[lhs.index()] += g * partials[0];
                    adj[rhs.index()] += g * partials[1];
                }
                Node::Dot {
                    lhs,
                    rhs,
                    len,
                    bias,
                } => {
                    let (l, r, n) = (lhs.index(), rhs.index(), len as usize);
                    if let Some(b) = bias {
                        adj[b.index()] += g;
                    }
                    axpy(&mut adj[l..l + n], g, &self.values[r..r + n]);
                    axpy(&mut adj[r..r + n], g, &self.values[l..l + n]);
                }
            }
        }
    }

    /// Exact gradient of the marked scalar output with respect to `wrt`.
    pub fn gradient(&self, wrt: &[Var]) -> Result<Vec<f64>> {
        let out = self.output.ok_or(Error::NoScalarOutput)?;
        let adj = self.backward(&[(out, 1.0)]);
        Ok(wrt.iter().map(|v| adj[v.index()]).collect())
    }

    /// Re-evaluate every node from the leaf values, in order. `leaf_values`
    /// supplies one value per leaf in push order.
    pub fn replay(&self, leaf_values: &[f64]) -> Result<Vec<f64>> {
        let mut vals = Vec::with_capacity(self.nodes.len());
        let mut leaves = leaf_values.iter();
        for node in &self.nodes {
            let y = match *node {
                Node::Leaf => *leaves.next().ok_or(Error::DimensionMismatch {
                    what: "replay leaves",
                    expected: self.leaf_count(),
                    got: leaf_values.len(),
                })?,
                Node::Unary { kind, arg, .. } => kind.eval(vals[arg.index()]).0,
                Node::Binary { kind, lhs, rhs, .. } => {
                    kind.eval(vals[lhs.index()], vals[rhs.index()]).0
                }
                Node::Dot {
                    lhs,
                    rhs,
                    len,
                    bias,
                } => {
                    let (l, r, n) = (lhs.index(), rhs.index(), len as usize);
                    let mut s = dot(&vals[l..l + n], &vals[r..r + n]);
                    if let Some(b) = bias {
                        s += vals[b.index()];
                    }
                    s
                }
            };
            vals.push(y);
        }
        if leaves.next().is_some() {
            return Err(Error::DimensionMismatch {
                what: "replay leaves",
                expected: self.leaf_count(),
                got: leaf_values.len(),
            });
        }
        Ok(vals)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf)).count()
    }

    /// Values of all leaves in push order.
    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| matches!(n, Node::Leaf))
            .map(|(_, &v)| v)
            .collect()
    }
}

fn is_run(vars: &[Var]) -> bool {
    vars.windows(2).all(|w| w[1].0 == w[0].0 + 1)
}
