//! Input tangents recorded as ordinary tape nodes.
//!
//! A tangent is the derivative of a node with respect to one seeded input
//! coordinate. Because every tangent is itself a node on the same tape, a loss
//! built from input-gradients can be differentiated with respect to the
//! parameters by the ordinary reverse sweep. Only first-order tangents are
//! representable.

use super::tape::{Run, Tape, Var};

/// Derivative of a node along one seeded direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tangent {
    Zero,
    One,
    Node(Var),
}

impl Tangent {
    /// Turn the tangent into a node, pushing a constant leaf for `Zero`/`One`.
    pub fn materialize(self, tape: &mut Tape) -> Var {
        match self {
            Tangent::Zero => tape.leaf(0.0),
            Tangent::One => tape.leaf(1.0),
            Tangent::Node(v) => v,
        }
    }

    pub fn value(self, tape: &Tape) -> f64 {
        match self {
            Tangent::Zero => 0.0,
            Tangent::One => 1.0,
            Tangent::Node(v) => tape.value(v),
        }
    }

    /// `coeff · self`
    pub fn scaled_by(self, tape: &mut Tape, coeff: Var) -> Tangent {
        match self {
            Tangent::Zero => Tangent::Zero,
            Tangent::One => Tangent::Node(coeff),
            Tangent::Node(t) => Tangent::Node(tape.mul(coeff, t)),
        }
    }

    pub fn plus(self, tape: &mut Tape, other: Tangent) -> Tangent {
        match (self, other) {
            (Tangent::Zero, t) | (t, Tangent::Zero) => t,
            (a, b) => {
                let (a, b) = (a.materialize(tape), b.materialize(tape));
                Tangent::Node(tape.add(a, b))
            }
        }
    }
}

/// A vector of nodes together with their tangents along `directions()` seeded
/// input coordinates. `tangents[i][k]` is `∂ primal[k] / ∂ x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVec {
    pub primal: Vec<Var>,
    pub tangents: Vec<Vec<Tangent>>,
}

impl DualVec {
    pub fn len(&self) -> usize {
        self.primal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primal.is_empty()
    }

    pub fn directions(&self) -> usize {
        self.tangents.len()
    }

    /// Input-gradient of element `k`: one tangent per seeded direction.
    pub fn gradient_of(&self, k: usize) -> Vec<Tangent> {
        self.tangents.iter().map(|t| t[k]).collect()
    }

    /// Treat the nodes as constants with respect to the seeded input.
    pub fn constant(primal: Vec<Var>, directions: usize) -> Self {
        let n = primal.len();
        DualVec {
            primal,
            tangents: vec![vec![Tangent::Zero; n]; directions],
        }
    }
}

impl Tape {
    /// Push `values` as input leaves seeded with the identity: direction `i`
    /// has tangent one on coordinate `i` and zero elsewhere.
    pub fn seed_inputs(&mut self, values: &[f64]) -> (Run, DualVec) {
        let run = self.leaves(values);
        let n = values.len();
        let tangents = (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| if i == k { Tangent::One } else { Tangent::Zero })
                    .collect()
            })
            .collect();
        (
            run,
            DualVec {
                primal: run.vars(),
                tangents,
            },
        )
    }

    /// Affine map `W x + b` with constant-in-x weights. `weights` is a row-major
    /// `rows × x.len()` run, `bias` a run of `rows`.
    ///
    /// Primal outputs are pushed first as one contiguous run, then the tangents
    /// of each direction as their own contiguous run, so downstream affine maps
    /// can use single dot nodes for both.
    pub fn affine_dual(&mut self, weights: Run, bias: Run, x: &DualVec) -> DualVec {
        let cols = x.len();
        let rows = bias.len;
        assert_eq!(weights.len, rows * cols, "weight run does not match shape");

        let mut primal = Vec::with_capacity(rows);
        for r in 0..rows {
            primal.push(self.dot_row(weights.var(r * cols), &x.primal, Some(bias.var(r))));
        }

        let mut tangents = Vec::with_capacity(x.directions());
        for dir in &x.tangents {
            let ones: Vec<usize> = (0..cols).filter(|&c| dir[c] == Tangent::One).collect();
            let nodes: Vec<(usize, Var)> = (0..cols)
                .filter_map(|c| match dir[c] {
                    Tangent::Node(v) => Some((c, v)),
                    _ => None,
                })
                .collect();
            let node_vars: Vec<Var> = nodes.iter().map(|&(_, v)| v).collect();
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let t = if nodes.is_empty() {
                    match ones.as_slice() {
                        [] => Tangent::Zero,
                        [c] => Tangent::Node(weights.var(r * cols + c)),
                        many => {
                            let terms: Vec<Var> =
                                many.iter().map(|&c| weights.var(r * cols + c)).collect();
                            Tangent::Node(self.sum(&terms))
                        }
                    }
                } else {
                    let mut acc = if nodes.len() == cols {
                        self.dot_row(weights.var(r * cols), &node_vars, None)
                    } else {
                        let w: Vec<Var> = nodes
                            .iter()
                            .map(|&(c, _)| weights.var(r * cols + c))
                            .collect();
                        self.dot(&w, &node_vars, None)
                    };
                    for &c in &ones {
                        acc = self.add(acc, weights.var(r * cols + c));
                    }
                    Tangent::Node(acc)
                };
                out.push(t);
            }
            tangents.push(out);
        }
        DualVec { primal, tangents }
    }

    /// Elementwise `tanh`, carrying tangents `(1 − tanh²)·ẋ` as nodes so that
    /// their dependence on the parameters is differentiable too.
    pub fn tanh_dual(&mut self, x: &DualVec) -> DualVec {
        let primal: Vec<Var> = x.primal.iter().map(|&v| self.tanh(v)).collect();
        if x.directions() == 0 {
            return DualVec {
                primal,
                tangents: Vec::new(),
            };
        }
        let slopes: Vec<Var> = primal
            .iter()
            .map(|&h| {
                let h2 = self.square(h);
                self.affine(h2, -1.0, 1.0)
            })
            .collect();
        let tangents = x
            .tangents
            .iter()
            .map(|dir| {
                dir.iter()
                    .zip(&slopes)
                    .map(|(&t, &s)| t.scaled_by(self, s))
                    .collect()
            })
            .collect();
        DualVec { primal, tangents }
    }
}
