//! Minimal reverse-mode automatic differentiation.
//!
//! Each operation appends one node holding the local partial derivatives
//! with respect to its inputs. A single backward sweep over the node list
//! accumulates adjoints. Constants never touch the tape.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

const CONST: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    start: u32,
    end: u32,
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Node>>,
    partials: RefCell<Vec<(u32, T)>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(1 << 14)),
            partials: RefCell::new(Vec::with_capacity(1 << 15)),
        }
    }

    /// Registers an independent variable.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let idx = self.push(std::iter::empty());
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: impl IntoIterator<Item = (u32, T)>) -> u32 {
        let mut partials = self.partials.borrow_mut();
        let start = partials.len() as u32;
        partials.extend(parents.into_iter().filter(|(i, _)| *i != CONST));
        let end = partials.len() as u32;
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { start, end });
        (nodes.len() - 1) as u32
    }

    /// Adjoints of every node with respect to `output`; index with
    /// [`Var::index`].
    pub fn gradient(&self, output: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let partials = self.partials.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        if output.idx == CONST {
            return adj;
        }
        adj[output.idx as usize] = T::one();
        for i in (0..=output.idx as usize).rev() {
            let g = adj[i];
            if g.value() == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, d) in &partials[node.start as usize..node.end as usize] {
                adj[p as usize] = adj[p as usize] + g * d;
            }
        }
        adj
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: Option<&'t Tape<T>>,
    idx: u32,
    val: T,
}

impl<T: fmt::Debug> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({:?})", self.val)
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn constant(val: T) -> Self {
        Self {
            tape: None,
            idx: CONST,
            val,
        }
    }

    pub fn primal(self) -> T {
        self.val
    }

    /// Tape index, or `None` for constants.
    pub fn index(self) -> Option<usize> {
        (self.idx != CONST).then_some(self.idx as usize)
    }

    fn unary(self, val: T, d: T) -> Self {
        match self.tape {
            None => Self::constant(val),
            Some(tape) => Self {
                tape: Some(tape),
                idx: tape.push([(self.idx, d)]),
                val,
            },
        }
    }

    fn binary(self, other: Self, val: T, da: T, db: T) -> Self {
        match self.tape.or(other.tape) {
            None => Self::constant(val),
            Some(tape) => Self {
                tape: Some(tape),
                idx: tape.push([(self.idx, da), (other.idx, db)]),
                val,
            },
        }
    }
}

impl<T: Real> Add for Var<'_, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val + rhs.val, T::one(), T::one())
    }
}

impl<T: Real> Sub for Var<'_, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val - rhs.val, T::one(), -T::one())
    }
}

impl<T: Real> Mul for Var<'_, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<T: Real> Div for Var<'_, T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, q, T::one() / rhs.val, -q / rhs.val)
    }
}

impl<T: Real> Neg for Var<'_, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -T::one())
    }
}

impl<T: Real> Real for Var<'_, T> {
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }

    fn value(self) -> f64 {
        self.val.value()
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), T::one() / self.val)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, T::one() - t * t)
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, T::from_f64(0.5) / r)
    }

    fn abs(self) -> Self {
        let sign = if self.val.value() > 0.0 {
            T::one()
        } else if self.val.value() < 0.0 {
            -T::one()
        } else {
            T::zero()
        };
        self.unary(self.val.abs(), sign)
    }

    fn detach(self) -> Self {
        Self::constant(self.val)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.val * y.val);
        let tape = a.iter().chain(b).find_map(|v| v.tape);
        match tape {
            None => Self::constant(val),
            Some(tape) => {
                let parents = a.iter().zip(b).flat_map(|(x, y)| [(x.idx, y.val), (y.idx, x.val)]);
                Self {
                    tape: Some(tape),
                    idx: tape.push(parents),
                    val,
                }
            }
        }
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().fold(T::zero(), |acc, x| acc + x.val);
        match xs.iter().find_map(|v| v.tape) {
            None => Self::constant(val),
            Some(tape) => Self {
                tape: Some(tape),
                idx: tape.push(xs.iter().map(|x| (x.idx, T::one()))),
                val,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_unary(f: impl Fn(Var<'_, f64>) -> Var<'_, f64>, g: impl Fn(f64) -> f64, x: f64) {
        let tape = Tape::new();
        let v = tape.var(x);
        let y = f(v);
        let grad = tape.gradient(y)[v.index().unwrap()];
        let h = 1e-6;
        let fd = (g(x + h) - g(x - h)) / (2.0 * h);
        assert!((grad - fd).abs() < 1e-6, "grad {grad} fd {fd}");
    }

    #[test]
    fn elementary_derivatives() {
        check_unary(|v| v.exp(), f64::exp, 0.3);
        check_unary(|v| v.ln(), f64::ln, 1.7);
        check_unary(|v| v.tanh(), f64::tanh, -0.4);
        check_unary(|v| v.sqrt(), f64::sqrt, 2.2);
        check_unary(|v| v.sigmoid(), |x| 1.0 / (1.0 + (-x).exp()), 0.8);
        check_unary(|v| v.elu(), |x| if x > 0.0 { x } else { x.exp() - 1.0 }, -0.7);
        check_unary(|v| v * v / (v + Var::from_f64(1.0)), |x| x * x / (x + 1.0), 0.9);
    }

    #[test]
    fn dot_and_sum_nodes() {
        let tape = Tape::new();
        let a: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&x| tape.var(x)).collect();
        let b: Vec<_> = [0.5, -1.0, 4.0].iter().map(|&x| tape.var(x)).collect();
        let y = Real::dot(&a, &b) + Real::sum(&a);
        assert_eq!(y.primal(), 0.5 - 2.0 + 12.0 + 6.0);
        let g = tape.gradient(y);
        assert_eq!(g[a[2].index().unwrap()], 5.0);
        assert_eq!(g[b[1].index().unwrap()], 2.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x * x.detach();
        assert_eq!(tape.gradient(y)[x.index().unwrap()], 2.0);
    }

    #[test]
    fn constants_stay_off_tape() {
        let tape: Tape<f64> = Tape::new();
        let c: Var<f64> = Var::from_f64(3.0) * Var::from_f64(2.0);
        assert!(c.index().is_none());
        assert!(tape.is_empty());
    }
}
