//! Expression trees recorded onto a tape.
//!
//! [`Expr::GradInput`] denotes the derivative of a sub-expression with respect
//! to one input coordinate. It is recorded through forward tangents, so the
//! resulting loss can still be differentiated with respect to parameters.

use super::dual::Tangent;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Input(usize),
    Param(usize),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Named unary primitive: `tanh`, `exp`, `log`, `square`, `neg`.
    Call(String, Vec<Expr>),
    Dot(Vec<Expr>, Vec<Expr>),
    Affine {
        weights: Vec<Expr>,
        inputs: Vec<Expr>,
        bias: Box<Expr>,
    },
    /// `∂ expr / ∂ input[input]`
    GradInput { expr: Box<Expr>, input: usize },
}

impl Expr {
    pub fn input(i: usize) -> Self {
        Expr::Input(i)
    }

    pub fn param(i: usize) -> Self {
        Expr::Param(i)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn call(name: &str, arg: Expr) -> Self {
        Expr::Call(name.to_string(), vec![arg])
    }

    pub fn tanh(self) -> Self {
        Expr::call("tanh", self)
    }

    pub fn exp(self) -> Self {
        Expr::call("exp", self)
    }

    pub fn ln(self) -> Self {
        Expr::call("log", self)
    }

    pub fn square(self) -> Self {
        Expr::call("square", self)
    }

    pub fn grad_input(self, input: usize) -> Self {
        Expr::GradInput {
            expr: Box::new(self),
            input,
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

/// A recorded expression with handles to its inputs, parameters and output.
#[derive(Clone, Debug)]
pub struct Recording {
    pub tape: Tape,
    pub inputs: Vec<Var>,
    pub params: Vec<Var>,
    pub output: Var,
}

impl Recording {
    pub fn value(&self) -> f64 {
        self.tape.value(self.output)
    }

    /// Reverse-mode gradient of the output with respect to the inputs.
    pub fn input_gradient(&self) -> Result<Vec<f64>> {
        self.tape.gradient(&self.inputs)
    }

    /// Reverse-mode gradient with respect to the parameters, flowing through
    /// any input-gradients the expression contains.
    pub fn param_gradient(&self) -> Result<Vec<f64>> {
        self.tape.gradient(&self.params)
    }
}

/// Record `expr` with the given input and parameter values.
pub fn record(expr: &Expr, inputs: &[f64], params: &[f64]) -> Result<Recording> {
    let mut tape = Tape::new();
    let inputs_run = tape.leaves(inputs);
    let params_run = tape.leaves(params);
    let mut ctx = Ctx {
        inputs: inputs_run.vars(),
        params: params_run.vars(),
    };
    let (output, _) = ctx.build(&mut tape, expr, None)?;
    tape.set_output(output);
    Ok(Recording {
        tape,
        inputs: ctx.inputs,
        params: ctx.params,
        output,
    })
}

struct Ctx {
    inputs: Vec<Var>,
    params: Vec<Var>,
}

impl Ctx {
    /// Build `expr`. With `dir = Some(i)`, also carry its tangent along input `i`.
    fn build(&mut self, tape: &mut Tape, expr: &Expr, dir: Option<usize>) -> Result<(Var, Tangent)> {
        Ok(match expr {
            Expr::Input(i) => {
                let v = *self
                    .inputs
                    .get(*i)
                    .ok_or_else(|| Error::InvalidExpression(format!("input {i} out of range")))?;
                let t = if dir == Some(*i) { Tangent::One } else { Tangent::Zero };
                (v, t)
            }
            Expr::Param(i) => {
                let v = *self
                    .params
                    .get(*i)
                    .ok_or_else(|| Error::InvalidExpression(format!("param {i} out of range")))?;
                (v, Tangent::Zero)
            }
            Expr::Const(c) => (tape.leaf(*c), Tangent::Zero),
            Expr::Add(a, b) => {
                let (av, at) = self.build(tape, a, dir)?;
                let (bv, bt) = self.build(tape, b, dir)?;
                let t = at.plus(tape, bt);
                (tape.add(av, bv), t)
            }
            Expr::Sub(a, b) => {
                let (av, at) = self.build(tape, a, dir)?;
                let (bv, bt) = self.build(tape, b, dir)?;
                let neg_bt = match bt {
                    Tangent::Zero => Tangent::Zero,
                    other => {
                        let n = other.materialize(tape);
                        Tangent::Node(tape.neg(n))
                    }
                };
                let t = at.plus(tape, neg_bt);
                (tape.sub(av, bv), t)
            }
            Expr::Mul(a, b) => {
                let (av, at) = self.build(tape, a, dir)?;
                let (bv, bt) = self.build(tape, b, dir)?;
                self.mul(tape, (av, at), (bv, bt))
            }
            Expr::Call(name, args) => {
                let [arg] = args.as_slice() else {
                    return Err(Error::InvalidExpression(format!(
                        "`{name}` takes one argument, got {}",
                        args.len()
                    )));
                };
                let (x, xt) = self.build(tape, arg, dir)?;
                match name.as_str() {
                    "tanh" => {
                        let y = tape.tanh(x);
                        let y2 = tape.square(y);
                        let slope = tape.affine(y2, -1.0, 1.0);
                        (y, tangent_times(tape, xt, slope))
                    }
                    "exp" => {
                        let y = tape.exp(x);
                        (y, tangent_times(tape, xt, y))
                    }
                    "log" => {
                        let y = tape.ln(x);
                        // 1/x = exp(-log x) keeps the tangent within the primitive set
                        let neg = tape.neg(y);
                        let recip = tape.exp(neg);
                        (y, tangent_times(tape, xt, recip))
                    }
                    "square" => {
                        let y = tape.square(x);
                        let two_x = tape.scale(x, 2.0);
                        (y, tangent_times(tape, xt, two_x))
                    }
                    "neg" => {
                        let y = tape.neg(x);
                        (y, tangent_times_const(tape, xt, -1.0))
                    }
                    other => return Err(Error::UnsupportedPrimitive(other.to_string())),
                }
            }
            Expr::Dot(a, b) => self.dot(tape, a, b, None, dir)?,
            Expr::Affine {
                weights,
                inputs,
                bias,
            } => self.dot(tape, weights, inputs, Some(bias), dir)?,
            Expr::GradInput { expr, input } => {
                if dir.is_some() {
                    return Err(Error::NestingTooDeep);
                }
                if *input >= self.inputs.len() {
                    return Err(Error::InvalidExpression(format!("input {input} out of range")));
                }
                let (_, t) = self.build(tape, expr, Some(*input))?;
                (t.materialize(tape), Tangent::Zero)
            }
        })
    }

    fn mul(&mut self, tape: &mut Tape, a: (Var, Tangent), b: (Var, Tangent)) -> (Var, Tangent) {
        let v = tape.mul(a.0, b.0);
        let t1 = b.1.scaled_by(tape, a.0);
        let t2 = a.1.scaled_by(tape, b.0);
        (v, t1.plus(tape, t2))
    }

    fn dot(
        &mut self,
        tape: &mut Tape,
        a: &[Expr],
        b: &[Expr],
        bias: Option<&Expr>,
        dir: Option<usize>,
    ) -> Result<(Var, Tangent)> {
        if a.len() != b.len() {
            return Err(Error::InvalidExpression(format!(
                "dot of lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut acc: Option<(Var, Tangent)> = match bias {
            Some(e) => Some(self.build(tape, e, dir)?),
            None => None,
        };
        for (x, y) in a.iter().zip(b) {
            let xa = self.build(tape, x, dir)?;
            let ya = self.build(tape, y, dir)?;
            let p = self.mul(tape, xa, ya);
            acc = Some(match acc {
                None => p,
                Some((v, t)) => {
                    let nt = t.plus(tape, p.1);
                    (tape.add(v, p.0), nt)
                }
            });
        }
        Ok(acc.unwrap_or_else(|| (tape.leaf(0.0), Tangent::Zero)))
    }
}

fn tangent_times(tape: &mut Tape, t: Tangent, coeff: Var) -> Tangent {
    t.scaled_by(tape, coeff)
}

fn tangent_times_const(tape: &mut Tape, t: Tangent, c: f64) -> Tangent {
    match t {
        Tangent::Zero => Tangent::Zero,
        other => {
            let v = other.materialize(tape);
            Tangent::Node(tape.scale(v, c))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_values() {
        let e = Expr::input(0) * Expr::param(0) + Expr::param(1);
        assert_eq!(record(&e, &[2.0], &[3.0, 1.0]).unwrap().value(), 7.0);
        assert_eq!(record(&Expr::input(0).tanh(), &[0.0], &[]).unwrap().value(), 0.0);
        assert_eq!(record(&Expr::input(0).square(), &[1.5], &[]).unwrap().value(), 2.25);
    }

    #[test]
    fn unsupported_primitive_is_rejected() {
        let e = Expr::call("sin", Expr::input(0));
        assert!(matches!(
            record(&e, &[1.0], &[]),
            Err(Error::UnsupportedPrimitive(name)) if name == "sin"
        ));
    }

    #[test]
    fn second_nesting_level_is_rejected() {
        let inner = (Expr::param(0) * Expr::input(0)).grad_input(0);
        let outer = inner.grad_input(0);
        assert!(matches!(record(&outer, &[1.0], &[2.0]), Err(Error::NestingTooDeep)));
    }

    #[test]
    fn gradient_of_squared_input_gradient() {
        // V = w·tanh(x), loss = (dV/dx)^2 at x = 0, w = 2: dloss/dw = 2w = 4
        let v = Expr::param(0) * Expr::input(0).tanh();
        let loss = v.grad_input(0).square();
        let rec = record(&loss, &[0.0], &[2.0]).unwrap();
        assert_eq!(rec.value(), 4.0);
        assert_eq!(rec.param_gradient().unwrap(), vec![4.0]);
    }

    #[test]
    fn residual_zero_at_minimum() {
        // V = w·x, loss = (dV/dx − c)^2 with w = c
        let c = 1.7;
        let v = Expr::param(0) * Expr::input(0);
        let loss = (v.grad_input(0) - Expr::constant(c)).square();
        let rec = record(&loss, &[0.3], &[c]).unwrap();
        assert_eq!(rec.param_gradient().unwrap(), vec![0.0]);
    }
}
