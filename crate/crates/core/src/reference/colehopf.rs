//! Closed-form solution of the viscous advection benchmark via the
//! Cole–Hopf transformation, evaluated by Gauss–Hermite quadrature.
//!
//! With the sine initial profile, the solution on the line is
//!
//! ```text
//! u(t,x) = −∫ sin(π(x−η)) F(t,x,η) dη / ∫ F(t,x,η) dη,
//! F = exp(−cos(π(x−η)) / (2πν)) · exp(−η² / (4νt)),
//! ```
//!
//! and substituting η = 2√(νt)·z turns both integrals into e^(−z²)-weighted
//! ones. The integrand's exponent is shifted by its maximum before
//! exponentiating, so small viscosities stay in range.

use crate::error::{Error, Result};

/// Gauss–Hermite nodes and weights for ∫ f(z)·e^(−z²) dz. Nodes come from
/// the eigenvalues of the Jacobi matrix (off-diagonal √(j/2)), polished by
/// two Newton steps on the scaled recurrence; weights from w = 2/pp² with
/// the recurrence rescaled on the fly so large rules do not overflow (edge
/// weights below the f64 range underflow to zero, which is also their
/// contribution).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n];
    for (j, o) in off.iter_mut().enumerate().skip(1) {
        *o = (j as f64 / 2.0).sqrt();
    }
    let mut nodes = crate::linalg::sym_tridiag_eigenvalues(diag, off)
        .expect("Hermite Jacobi matrix eigenvalues");
    let mut weights = vec![0.0f64; n];

    let pim4 = std::f64::consts::PI.powf(-0.25);
    const BIG: f64 = 1e280;
    let ln_big = BIG.ln();
    for i in 0..n {
        let mut z = nodes[i];
        let mut ln_pp = 0.0;
        for _ in 0..3 {
            // Orthonormal recurrence with rescaling.
            let mut p1 = pim4;
            let mut p2 = 0.0f64;
            let mut rescales = 0u32;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
                if p1.abs() > BIG {
                    p1 /= BIG;
                    p2 /= BIG;
                    rescales += 1;
                }
            }
            let pp = (2.0 * n as f64).sqrt() * p2;
            ln_pp = pp.abs().ln() + f64::from(rescales) * ln_big;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = (2.0f64.ln() - 2.0 * ln_pp).exp();
    }
    (nodes, weights)
}

#[derive(Clone, Debug)]
pub struct ColeHopf {
    viscosity: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ColeHopf {
    pub fn new(viscosity: f64, n_nodes: usize) -> Self {
        let (nodes, weights) = gauss_hermite(n_nodes.max(100));
        ColeHopf { viscosity, nodes, weights }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// u(t, x). The t → 0 limit returns the initial profile.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        use std::f64::consts::PI;
        if t < 1e-12 {
            return -(PI * x).sin();
        }
        let nu = self.viscosity;
        let s = 2.0 * (nu * t).sqrt();
        // exponent a(z) = −cos(π(x−η))/(2πν) with η = s·z; shift by max.
        let inv = 1.0 / (2.0 * PI * nu);
        let mut amax = f64::NEG_INFINITY;
        for &z in &self.nodes {
            let a = -(PI * (x - s * z)).cos() * inv;
            if a > amax {
                amax = a;
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let arg = PI * (x - s * z);
            let g = (-(arg.cos()) * inv - amax).exp() * w;
            num += arg.sin() * g;
            den += g;
        }
        -num / den
    }

    /// Evaluate with a node-doubling self-check; disagreement beyond 1e-6
    /// is an accuracy error.
    pub fn eval_checked(&self, t: f64, x: f64) -> Result<f64> {
        let coarse = self.eval(t, x);
        let fine = ColeHopf::new(self.viscosity, self.nodes.len() * 2).eval(t, x);
        if (coarse - fine).abs() > 1e-6 {
            return Err(Error::Accuracy(format!(
                "quadrature not converged at (t={t}, x={x}): {coarse} vs {fine}"
            )));
        }
        Ok(fine)
    }
}
