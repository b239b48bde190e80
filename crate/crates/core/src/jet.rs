//! Truncated derivative bundles ("jets") over the input coordinates.
//!
//! A [`Jet`] carries the value of a quantity together with a fixed set of its
//! partial derivatives with respect to input coordinates (t, x, y), up to
//! total order 3. Which derivatives are carried is decided once, by the
//! [`JetBasis`], and never changes through arithmetic.
//!
//! Propagation rules (Leibniz products, chain-rule composition with a
//! univariate derivative stack) are *generated symbolically* per basis when
//! the basis is built, by formally differentiating `f·g` and `f(u)` along the
//! basis directions. The same tables drive the scalar recording path
//! (`Jet<Var>`), plain evaluation (`Jet<f64>`), and the batched training
//! engine, so there is a single source of truth for the calculus.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Input coordinate directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    T,
    X,
    Y,
}

/// Derivative multi-index: how many times each coordinate is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MIdx {
    pub t: u8,
    pub x: u8,
    pub y: u8,
}

impl MIdx {
    pub const ZERO: MIdx = MIdx { t: 0, x: 0, y: 0 };

    pub fn unit(d: Dim) -> MIdx {
        match d {
            Dim::T => MIdx { t: 1, x: 0, y: 0 },
            Dim::X => MIdx { t: 0, x: 1, y: 0 },
            Dim::Y => MIdx { t: 0, x: 0, y: 1 },
        }
    }

    pub fn total(&self) -> usize {
        self.t as usize + self.x as usize + self.y as usize
    }

    fn bump(&self, d: Dim) -> MIdx {
        let mut m = *self;
        match d {
            Dim::T => m.t += 1,
            Dim::X => m.x += 1,
            Dim::Y => m.y += 1,
        }
        m
    }

    fn drop_one(&self) -> Option<(Dim, MIdx)> {
        if self.t > 0 {
            Some((Dim::T, MIdx { t: self.t - 1, ..*self }))
        } else if self.x > 0 {
            Some((Dim::X, MIdx { x: self.x - 1, ..*self }))
        } else if self.y > 0 {
            Some((Dim::Y, MIdx { y: self.y - 1, ..*self }))
        } else {
            None
        }
    }

}

/// One term of the unary chain rule for a given output coefficient:
/// `coeff * f^(f_order)(u0) * Π u[factors]`.
#[derive(Clone, Debug)]
pub struct CompTerm {
    pub f_order: usize,
    pub coeff: f64,
    /// Positions (within the basis) of non-value input coefficients.
    pub factors: Vec<usize>,
}

/// One term of the Leibniz product rule: `coeff * a[lhs] * b[rhs]`.
#[derive(Clone, Copy, Debug)]
pub struct ProdTerm {
    pub coeff: f64,
    pub lhs: usize,
    pub rhs: usize,
}

/// The carried derivative set plus its generated propagation tables.
#[derive(Debug)]
pub struct JetBasis {
    indices: Vec<MIdx>,
    comp: Vec<Vec<CompTerm>>,
    prod: Vec<Vec<ProdTerm>>,
    max_order: usize,
}

pub const MAX_JET_ORDER: usize = 3;

impl JetBasis {
    /// Build a basis from an explicit multi-index list. The list must start
    /// with the value index, contain no duplicates, stay within total order
    /// 3, and be closed under component-wise decrements (every derivative the
    /// propagation rules can mention must itself be carried).
    pub fn custom(indices: Vec<MIdx>) -> Result<Arc<JetBasis>> {
        if indices.first() != Some(&MIdx::ZERO) {
            return Err(Error::config("jet basis must start with the value index"));
        }
        let mut max_order = 0;
        for (i, m) in indices.iter().enumerate() {
            if m.total() > MAX_JET_ORDER {
                return Err(Error::config(format!(
                    "unsupported derivative order {} (maximum {MAX_JET_ORDER})",
                    m.total()
                )));
            }
            max_order = max_order.max(m.total());
            if indices[..i].contains(m) {
                return Err(Error::config("duplicate index in jet basis"));
            }
        }
        // Downward closure.
        for m in &indices {
            for t in 0..=m.t {
                for x in 0..=m.x {
                    for y in 0..=m.y {
                        let sub = MIdx { t, x, y };
                        if !indices.contains(&sub) {
                            return Err(Error::config(format!(
                                "jet basis not closed: {m:?} carried but {sub:?} missing"
                            )));
                        }
                    }
                }
            }
        }

        let pos = |m: &MIdx| indices.iter().position(|i| i == m);
        let mut comp = Vec::with_capacity(indices.len());
        let mut prod = Vec::with_capacity(indices.len());
        for m in &indices {
            let terms = comp_terms(*m)
                .into_iter()
                .map(|(order, factors, coeff)| {
                    let factors = factors
                        .iter()
                        .map(|f| pos(f).expect("closure guarantees factor present"))
                        .collect();
                    CompTerm { f_order: order, coeff, factors }
                })
                .collect();
            comp.push(terms);
            let terms = prod_terms(*m)
                .into_iter()
                .map(|(a, b, coeff)| ProdTerm {
                    coeff,
                    lhs: pos(&a).expect("closure guarantees lhs present"),
                    rhs: pos(&b).expect("closure guarantees rhs present"),
                })
                .collect();
            prod.push(terms);
        }

        Ok(Arc::new(JetBasis { indices, comp, prod, max_order }))
    }

    /// 1D space only: value and x-derivatives up to `order`.
    pub fn space1(order: usize) -> Result<Arc<JetBasis>> {
        check_order(order)?;
        let indices =
            (0..=order as u8).map(|x| MIdx { t: 0, x, y: 0 }).collect();
        Self::custom(indices)
    }

    /// 1D space + time: value, first t-derivative, x-derivatives up to
    /// `order`.
    pub fn spacetime1(order: usize) -> Result<Arc<JetBasis>> {
        check_order(order)?;
        let mut indices = vec![MIdx::ZERO, MIdx::unit(Dim::T)];
        indices.extend((1..=order as u8).map(|x| MIdx { t: 0, x, y: 0 }));
        Self::custom(indices)
    }

    /// 2D space, steady: value, first and second derivatives in x and y
    /// (no mixed term; none of the residuals need it).
    pub fn plane(order: usize) -> Result<Arc<JetBasis>> {
        if order != 1 && order != 2 {
            return Err(Error::config(format!("unsupported plane order {order}")));
        }
        let mut indices = vec![MIdx::ZERO, MIdx::unit(Dim::X), MIdx::unit(Dim::Y)];
        if order == 2 {
            indices.push(MIdx { t: 0, x: 2, y: 0 });
            indices.push(MIdx { t: 0, x: 0, y: 2 });
        }
        Self::custom(indices)
    }

    /// 2D space + time.
    pub fn plane_time() -> Result<Arc<JetBasis>> {
        let indices = vec![
            MIdx::ZERO,
            MIdx::unit(Dim::T),
            MIdx::unit(Dim::X),
            MIdx::unit(Dim::Y),
            MIdx { t: 0, x: 2, y: 0 },
            MIdx { t: 0, x: 0, y: 2 },
        ];
        Self::custom(indices)
    }

    /// Value only; used for boundary/initial phases that need no input
    /// derivatives.
    pub fn value_only() -> Arc<JetBasis> {
        Self::custom(vec![MIdx::ZERO]).expect("value basis is always valid")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> &[MIdx] {
        &self.indices
    }

    /// Highest total derivative order carried.
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn position(&self, m: MIdx) -> Option<usize> {
        self.indices.iter().position(|i| *i == m)
    }

    pub fn first_deriv_pos(&self, d: Dim) -> Option<usize> {
        self.position(MIdx::unit(d))
    }

    pub fn comp_terms(&self, out: usize) -> &[CompTerm] {
        &self.comp[out]
    }

    pub fn prod_terms(&self, out: usize) -> &[ProdTerm] {
        &self.prod[out]
    }

    fn same(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || self.indices == other.indices
    }
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_JET_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "unsupported truncation order {order} (expected 1..={MAX_JET_ORDER})"
        )))
    }
}

/// Chain-rule terms for output index `m`, built by formally differentiating
/// `f(u)` one direction at a time. Term = (derivative order of f, multiset of
/// factor indices, coefficient).
fn comp_terms(m: MIdx) -> Vec<(usize, Vec<MIdx>, f64)> {
    match m.drop_one() {
        None => vec![(0, vec![], 1.0)],
        Some((d, prev)) => {
            let mut acc: BTreeMap<(usize, Vec<MIdx>), f64> = BTreeMap::new();
            for (order, factors, coeff) in comp_terms(prev) {
                // d/dd f^(order)(u) Π u_λ = f^(order+1) u_d Π u_λ + Σ_i f^(order) u_{λ_i + d} Π_{j≠i} u_λ
                let mut with_new = factors.clone();
                with_new.push(MIdx::unit(d));
                with_new.sort();
                *acc.entry((order + 1, with_new)).or_insert(0.0) += coeff;
                for i in 0..factors.len() {
                    let mut bumped = factors.clone();
                    bumped[i] = bumped[i].bump(d);
                    bumped.sort();
                    *acc.entry((order, bumped)).or_insert(0.0) += coeff;
                }
            }
            acc.into_iter().map(|((o, f), c)| (o, f, c)).collect()
        }
    }
}

/// Leibniz terms for output index `m` of a product `a·b`.
fn prod_terms(m: MIdx) -> Vec<(MIdx, MIdx, f64)> {
    match m.drop_one() {
        None => vec![(MIdx::ZERO, MIdx::ZERO, 1.0)],
        Some((d, prev)) => {
            let mut acc: BTreeMap<(MIdx, MIdx), f64> = BTreeMap::new();
            for (a, b, coeff) in prod_terms(prev) {
                *acc.entry((a.bump(d), b)).or_insert(0.0) += coeff;
                *acc.entry((a, b.bump(d))).or_insert(0.0) += coeff;
            }
            acc.into_iter().map(|((a, b), c)| (a, b, c)).collect()
        }
    }
}

/// A quantity plus its carried derivatives, with coefficients of scalar type
/// `S` (plain numbers, tape variables, or duals).
#[derive(Clone, Debug)]
pub struct Jet<S> {
    basis: Arc<JetBasis>,
    c: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn from_coeffs(basis: Arc<JetBasis>, c: Vec<S>) -> Self {
        assert_eq!(basis.len(), c.len(), "coefficient count must match basis");
        Jet { basis, c }
    }

    /// A constant: value `v`, all derivatives zero.
    pub fn constant(basis: &Arc<JetBasis>, v: S) -> Self {
        let c = (0..basis.len()).map(|i| if i == 0 { v } else { v.lit(0.0) }).collect();
        Jet { basis: basis.clone(), c }
    }

    /// Seed jet for an input coordinate: value `v`, derivative 1 in its own
    /// direction (when carried), 0 elsewhere.
    pub fn lift(basis: &Arc<JetBasis>, d: Dim, v: S) -> Self {
        let own = basis.first_deriv_pos(d);
        let c = (0..basis.len())
            .map(|i| {
                if i == 0 {
                    v
                } else if Some(i) == own {
                    v.lit(1.0)
                } else {
                    v.lit(0.0)
                }
            })
            .collect();
        Jet { basis: basis.clone(), c }
    }

    pub fn basis(&self) -> &Arc<JetBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    /// Coefficient for a given derivative multi-index; panics when the basis
    /// does not carry it (callers know their basis).
    pub fn deriv(&self, m: MIdx) -> S {
        let p = self.basis.position(m).unwrap_or_else(|| {
            panic!("basis {:?} does not carry {:?}", self.basis.indices, m)
        });
        self.c[p]
    }

    pub fn d(&self, d: Dim) -> S {
        self.deriv(MIdx::unit(d))
    }

    pub fn d2(&self, d: Dim) -> S {
        let mut m = MIdx::unit(d);
        m = m.bump(d);
        self.deriv(m)
    }

    pub fn d3(&self, d: Dim) -> S {
        let mut m = MIdx::unit(d);
        m = m.bump(d);
        m = m.bump(d);
        self.deriv(m)
    }

    fn zip_with(&self, other: &Jet<S>, f: impl Fn(S, S) -> S) -> Jet<S> {
        assert!(self.basis.same(&other.basis), "jets from different bases");
        let c = self.c.iter().zip(&other.c).map(|(&a, &b)| f(a, b)).collect();
        Jet { basis: self.basis.clone(), c }
    }

    pub fn add(&self, other: &Jet<S>) -> Jet<S> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet<S>) -> Jet<S> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet<S> {
        Jet { basis: self.basis.clone(), c: self.c.iter().map(|&a| -a).collect() }
    }

    pub fn scale(&self, s: S) -> Jet<S> {
        Jet { basis: self.basis.clone(), c: self.c.iter().map(|&a| a * s).collect() }
    }

    pub fn scale_f64(&self, s: f64) -> Jet<S> {
        Jet { basis: self.basis.clone(), c: self.c.iter().map(|&a| a * s).collect() }
    }

    pub fn add_f64(&self, s: f64) -> Jet<S> {
        let mut c = self.c.clone();
        c[0] = c[0] + s;
        Jet { basis: self.basis.clone(), c }
    }

    /// Leibniz product.
    pub fn mul(&self, other: &Jet<S>) -> Jet<S> {
        assert!(self.basis.same(&other.basis), "jets from different bases");
        let zero = self.c[0].lit(0.0);
        let c = (0..self.basis.len())
            .map(|out| {
                let mut acc = zero;
                for t in self.basis.prod_terms(out) {
                    let term = self.c[t.lhs] * other.c[t.rhs];
                    acc = acc + if t.coeff == 1.0 { term } else { term * t.coeff };
                }
                acc
            })
            .collect();
        Jet { basis: self.basis.clone(), c }
    }

    /// Apply a smooth unary function given its derivative stack
    /// `[f(u0), f'(u0), ..., f^(k)(u0)]` evaluated at this jet's value.
    /// The stack must cover the basis truncation order.
    pub fn apply_unary(&self, stack: &[S]) -> Result<Jet<S>> {
        if stack.len() < self.basis.max_order + 1 {
            return Err(Error::config(format!(
                "derivative stack of length {} cannot drive an order-{} jet",
                stack.len(),
                self.basis.max_order
            )));
        }
        Ok(self.compose(stack))
    }

    /// Infallible composition; callers have validated stack depth.
    pub fn compose(&self, stack: &[S]) -> Jet<S> {
        let c = (0..self.basis.len())
            .map(|out| {
                let terms = self.basis.comp_terms(out);
                let mut acc: Option<S> = None;
                for t in terms {
                    let mut v = stack[t.f_order];
                    for &f in &t.factors {
                        v = v * self.c[f];
                    }
                    if t.coeff != 1.0 {
                        v = v * t.coeff;
                    }
                    acc = Some(match acc {
                        None => v,
                        Some(a) => a + v,
                    });
                }
                acc.unwrap_or_else(|| stack[0].lit(0.0))
            })
            .collect();
        Jet { basis: self.basis.clone(), c }
    }

    /// 1/self via composition with the reciprocal derivative stack.
    pub fn recip(&self) -> Jet<S> {
        let u = self.c[0];
        let inv = u.lit(1.0) / u;
        let mut stack = Vec::with_capacity(self.basis.max_order + 1);
        // d^k/du^k (1/u) = (-1)^k k! / u^{k+1}
        let mut cur = inv;
        stack.push(cur);
        for k in 1..=self.basis.max_order {
            cur = cur * inv * (-(k as f64));
            stack.push(cur);
        }
        self.compose(&stack)
    }

    pub fn div(&self, other: &Jet<S>) -> Jet<S> {
        self.mul(&other.recip())
    }
}
