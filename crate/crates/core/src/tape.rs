//! Recording tape for reverse-mode differentiation of scalar expressions.
//!
//! Every [`Var`] belongs to one tape generation; `reset` starts a new
//! generation and invalidates outstanding variables (checked on use).
//! Backward replays the node list once in reverse, yielding one adjoint per
//! recorded node, and fails fast with the offending node id when a NaN or
//! infinity shows up in the accumulation.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Index, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Gradient of a scalar loss with respect to every entry of a
/// [`crate::store::ParameterStore`]. Entries for parameters the loss never
/// touched are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub entries: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        GradientVector { entries: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn add_scaled(&mut self, other: &GradientVector, s: f64) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        assert_eq!(self.len(), other.len());
        self.entries.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    // (node id, parameter store index)
    params: RefCell<Vec<(u32, u32)>>,
    gen: Cell<u64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), params: RefCell::new(Vec::new()), gen: Cell::new(0) }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            params: RefCell::new(Vec::new()),
            gen: Cell::new(0),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start a new generation, invalidating all existing `Var`s while
    /// keeping allocations.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
        self.params.borrow_mut().clear();
        self.gen.set(self.gen.get() + 1);
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2], v: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len() as u32;
        nodes.push(Node { parents, partials });
        Var { tape: self, gen: self.gen.get(), id, v }
    }

    /// A leaf variable (input or constant).
    pub fn leaf(&self, v: f64) -> Var<'_> {
        let id = self.nodes.borrow().len() as u32;
        self.push([id, id], [0.0, 0.0], v)
    }

    /// A leaf bound to a parameter store slot; `backward` routes its adjoint
    /// into the gradient vector at `store_idx`.
    pub fn param(&self, v: f64, store_idx: usize) -> Var<'_> {
        let var = self.leaf(v);
        self.params.borrow_mut().push((var.id, store_idx as u32));
        var
    }

    /// Reverse accumulation from `loss`. Returns the adjoint of every node.
    pub fn backward(&self, loss: Var<'_>) -> Result<Adjoints> {
        assert!(
            std::ptr::eq(loss.tape, self) && loss.gen == self.gen.get(),
            "backward called with a variable from another tape generation"
        );
        if !loss.v.is_finite() {
            return Err(Error::numeric(
                format!("node {}", loss.id),
                format!("loss value {} is not finite", loss.v),
            ));
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; nodes.len()];
        adj[loss.id as usize] = 1.0;
        for i in (0..=loss.id as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            if !a.is_finite() {
                return Err(Error::numeric(
                    format!("node {i}"),
                    "non-finite adjoint during reverse accumulation".to_string(),
                ));
            }
            let n = nodes[i];
            adj[n.parents[0] as usize] += n.partials[0] * a;
            adj[n.parents[1] as usize] += n.partials[1] * a;
        }
        Ok(Adjoints { adj, gen: self.gen.get() })
    }

    /// Backward followed by gradient extraction for a store of `store_len`
    /// parameters.
    pub fn gradient(&self, loss: Var<'_>, store_len: usize) -> Result<GradientVector> {
        let adj = self.backward(loss)?;
        let mut g = GradientVector::zeros(store_len);
        for &(node, idx) in self.params.borrow().iter() {
            g.entries[idx as usize] += adj.adj[node as usize];
        }
        Ok(g)
    }
}

/// Adjoints of every node after one reverse sweep.
pub struct Adjoints {
    adj: Vec<f64>,
    gen: u64,
}

impl Adjoints {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        assert_eq!(v.gen, self.gen, "adjoint lookup across tape generations");
        self.adj[v.id as usize]
    }
}

/// Scalar variable recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    gen: u64,
    id: u32,
    v: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} = {})", self.id, self.v)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> u32 {
        self.id
    }

    fn same_tape(self, o: Var<'t>) -> &'t Tape {
        assert!(
            std::ptr::eq(self.tape, o.tape) && self.gen == o.gen && self.gen == self.tape.gen.get(),
            "mixed variables from different tape generations"
        );
        self.tape
    }

    fn unary(self, v: f64, d: f64) -> Var<'t> {
        assert!(self.gen == self.tape.gen.get(), "stale variable from a previous tape generation");
        self.tape.push([self.id, self.id], [d, 0.0], v)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.same_tape(o).push([self.id, o.id], [1.0, 1.0], self.v + o.v)
    }
}
impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.same_tape(o).push([self.id, o.id], [1.0, -1.0], self.v - o.v)
    }
}
impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.same_tape(o).push([self.id, o.id], [o.v, self.v], self.v * o.v)
    }
}
impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let v = self.v / o.v;
        self.same_tape(o).push([self.id, o.id], [1.0 / o.v, -v / o.v], v)
    }
}
impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.v, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.v + c, 1.0)
    }
}
impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.v - c, 1.0)
    }
}
impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.v * c, c)
    }
}
impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.v / c, 1.0 / c)
    }
}
impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}
impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(self - v.v, -1.0)
    }
}
impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.v
    }
    fn lit(self, c: f64) -> Self {
        self.tape.leaf(c)
    }
    fn sin(self) -> Self {
        self.unary(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn erf(self) -> Self {
        let g = 2.0 / std::f64::consts::PI.sqrt() * (-self.v * self.v).exp();
        self.unary(libm::erf(self.v), g)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn abs(self) -> Self {
        // sign(0) = +1 by the right-limit convention used for the rational
        // activation's denominator.
        let s = if self.v < 0.0 { -1.0 } else { 1.0 };
        self.unary(self.v * s, s)
    }
    fn powi(self, n: i32) -> Self {
        let p = self.v.powi(n - 1);
        self.unary(p * self.v, f64::from(n) * p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_gradient() {
        // loss = w * x with x = 3 held constant: d loss / d w = 3.
        let tape = Tape::new();
        let w = tape.param(1.5, 0);
        let x = tape.leaf(3.0);
        let loss = w * x;
        let g = tape.gradient(loss, 1).unwrap();
        assert_eq!(g[0], 3.0);
    }

    #[test]
    fn unreachable_parameter_has_zero_entry() {
        let tape = Tape::new();
        let w = tape.param(1.5, 0);
        let _dangling = tape.param(2.0, 1);
        let loss = w * w;
        let g = tape.gradient(loss, 2).unwrap();
        assert_eq!(g[0], 3.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn backward_is_linear() {
        let eval = |a: f64, b: f64| -> Vec<f64> {
            let tape = Tape::new();
            let x = tape.param(0.7, 0);
            let y = tape.param(-1.1, 1);
            let l1 = (x * y).sin() + x.exp();
            let l2 = x / y + y.tanh();
            let loss = l1 * a + l2 * b;
            tape.gradient(loss, 2).unwrap().entries
        };
        let ga = eval(1.0, 0.0);
        let gb = eval(0.0, 1.0);
        let gc = eval(2.5, -0.5);
        for i in 0..2 {
            assert_relative_eq!(gc[i], 2.5 * ga[i] - 0.5 * gb[i], max_relative = 1e-15);
        }
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let f = |x: f64| ((x.sin() * x).exp() + x * x).tanh().abs().sqrt();
        let x0 = 0.8;
        let tape = Tape::new();
        let x = tape.param(x0, 0);
        let loss = ((x.sin() * x).exp() + x * x).tanh().abs().sqrt();
        let g = tape.gradient(loss, 1).unwrap();
        let h = 1e-6;
        let fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        assert_relative_eq!(g[0], fd, max_relative = 1e-7);
    }

    #[test]
    fn nan_loss_is_a_numeric_fault() {
        let tape = Tape::new();
        let x = tape.param(-1.0, 0);
        let loss = x.ln(); // NaN
        let err = tape.gradient(loss, 1).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn non_finite_partial_reports_node() {
        let tape = Tape::new();
        let x = tape.param(0.0, 0);
        let y = x.ln(); // -inf value, 1/0 partial
        let loss = y * 0.0; // finite loss, broken upstream
        let err = tape.gradient(loss, 1).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    #[should_panic(expected = "different tape generations")]
    fn mixing_generations_panics() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.leaf(1.0);
        let b = t2.leaf(2.0);
        let _ = a + b;
    }

    #[test]
    #[should_panic(expected = "stale variable")]
    fn stale_variable_after_reset_panics() {
        let tape = Tape::new();
        let a = tape.leaf(1.0);
        tape.reset();
        let _ = a + 1.0;
    }

    #[test]
    fn deterministic_replay() {
        let run = || -> (f64, Vec<f64>) {
            let tape = Tape::new();
            let x = tape.param(0.3, 0);
            let y = tape.param(2.0, 1);
            let loss = (x.sin() + y.exp() * x).tanh() * (x / y);
            (loss.value(), tape.gradient(loss, 2).unwrap().entries)
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(g1[0].to_bits(), g2[0].to_bits());
        assert_eq!(g1[1].to_bits(), g2[1].to_bits());
    }
}
