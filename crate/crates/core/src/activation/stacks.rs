//! Derivative stacks: `[f(x), f'(x), ..., f^(k)(x)]` for every activation.
//!
//! Jet composition needs the first `max_order` derivatives; the batched
//! engine's backward pass needs one more for the chain back to the
//! pre-activation value. `k` therefore ranges up to 4.
//!
//! Everything is generic over [`Scalar`] so the same formulas serve the f64
//! hot path, the recording tape, and dual-number parameter derivatives.

use crate::scalar::{sigmoid, softplus, Scalar};

use super::StandardKind;

pub const MAX_STACK: usize = 5;

/// Falling factorial i·(i-1)···(i-m+1).
fn falling(i: usize, m: usize) -> f64 {
    (0..m).map(|k| (i - k) as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    falling(n, k) / (1..=k).map(|v| v as f64).product::<f64>().max(1.0)
}

/// Derivatives 0..=k of the sigmoid function expressed through its value.
fn sigmoid_chain<S: Scalar>(s: S, k: usize, out: &mut [S]) {
    out[0] = s;
    if k >= 1 {
        out[1] = s * (-s + 1.0);
    }
    if k >= 2 {
        out[2] = out[1] * (s * (-2.0) + 1.0);
    }
    if k >= 3 {
        out[3] = out[1] * (s * s * 6.0 - s * 6.0 + 1.0);
    }
    if k >= 4 {
        out[4] = out[1] * (s * (-2.0) + 1.0) * (s * s * 12.0 - s * 12.0 + 1.0);
    }
}

impl StandardKind {
    /// Derivatives 0..=k at `x`, written into `out[0..=k]`.
    ///
    /// Orders beyond [`StandardKind::jet_order_limit`] + 1 exist only where
    /// the function is smooth; for ELU the order-2 entry is the almost-
    /// everywhere derivative (configuration-level checks keep ELU out of
    /// contexts that need more).
    pub fn stack<S: Scalar>(&self, x: S, k: usize, out: &mut [S]) {
        debug_assert!(k < MAX_STACK);
        match *self {
            StandardKind::Sin { beta } => {
                let z = x * beta;
                let (s, c) = (z.sin(), z.cos());
                let cycle = [s, c, -s, -c];
                let mut scale = 1.0;
                for m in 0..=k {
                    out[m] = cycle[m % 4] * scale;
                    scale *= beta;
                }
            }
            StandardKind::Cos { beta } => {
                let z = x * beta;
                let (s, c) = (z.sin(), z.cos());
                let cycle = [c, -s, -c, s];
                let mut scale = 1.0;
                for m in 0..=k {
                    out[m] = cycle[m % 4] * scale;
                    scale *= beta;
                }
            }
            StandardKind::Exp { beta } => {
                let e = (x * beta).exp();
                out[0] = e - 1.0;
                let mut scale = beta;
                for m in 1..=k {
                    out[m] = e * scale;
                    scale *= beta;
                }
            }
            StandardKind::Tanh => {
                let t = x.tanh();
                let w = -t * t + 1.0; // 1 - tanh²
                out[0] = t;
                if k >= 1 {
                    out[1] = w;
                }
                if k >= 2 {
                    out[2] = w * t * (-2.0);
                }
                if k >= 3 {
                    out[3] = w * (t * t * 6.0 - 2.0);
                }
                if k >= 4 {
                    out[4] = w * (t * 16.0 - t * t * t * 24.0);
                }
            }
            StandardKind::Sigmoid => {
                sigmoid_chain(sigmoid(x), k, out);
            }
            StandardKind::Softplus { beta } => {
                let z = x * beta;
                out[0] = softplus(z) / beta;
                if k >= 1 {
                    let mut chain = [out[0]; MAX_STACK];
                    sigmoid_chain(sigmoid(z), k - 1, &mut chain);
                    let mut scale = 1.0;
                    for m in 1..=k {
                        out[m] = chain[m - 1] * scale;
                        scale *= beta;
                    }
                }
            }
            StandardKind::Elu => {
                if x.value() >= 0.0 {
                    out[0] = x;
                    if k >= 1 {
                        out[1] = x.lit(1.0);
                    }
                    for m in 2..=k {
                        out[m] = x.lit(0.0);
                    }
                } else {
                    let e = x.exp();
                    out[0] = e - 1.0;
                    for m in 1..=k {
                        out[m] = e;
                    }
                }
            }
            StandardKind::Gelu => {
                // f = x·Φ(x); derivatives through the Gaussian pdf φ.
                let phi = (-x * x / 2.0).exp() * (1.0 / (2.0 * std::f64::consts::PI).sqrt());
                let cdf = ((x / std::f64::consts::SQRT_2).erf() + 1.0) * 0.5;
                out[0] = x * cdf;
                if k >= 1 {
                    out[1] = cdf + x * phi;
                }
                if k >= 2 {
                    out[2] = phi * (-x * x + 2.0);
                }
                if k >= 3 {
                    out[3] = phi * (x * x * x - x * 4.0);
                }
                if k >= 4 {
                    out[4] = phi * (-x * x * x * x + x * x * 7.0 - 4.0);
                }
            }
            StandardKind::Swish => {
                let mut s = [x; MAX_STACK];
                sigmoid_chain(sigmoid(x), k, &mut s);
                out[0] = x * s[0];
                for m in 1..=k {
                    out[m] = x * s[m] + s[m - 1] * (m as f64);
                }
            }
        }
    }
}

/// Blended-candidate activation: `f(x) = Σ w_i σ_i(β_i x)` with gate weights
/// `w` and per-candidate slopes (all ones when slopes are disabled).
/// `slopes` may be empty, meaning β ≡ 1.
pub fn blend_stack<S: Scalar>(
    candidates: &[StandardKind],
    weights: &[S],
    slopes: &[S],
    x: S,
    k: usize,
    out: &mut [S],
) {
    for m in 0..=k {
        out[m] = x.lit(0.0);
    }
    let mut cand = [x; MAX_STACK];
    for (i, kind) in candidates.iter().enumerate() {
        if slopes.is_empty() {
            kind.stack(x, k, &mut cand);
            for m in 0..=k {
                out[m] = out[m] + weights[i] * cand[m];
            }
        } else {
            let b = slopes[i];
            kind.stack(b * x, k, &mut cand);
            let mut scale = weights[i];
            for m in 0..=k {
                out[m] = out[m] + scale * cand[m];
                scale = scale * b;
            }
        }
    }
}

/// Polynomial activation `Σ a_i x^i` evaluated as a derivative stack.
pub fn poly_stack<S: Scalar>(coeffs: &[S], x: S, k: usize, out: &mut [S]) {
    let order = coeffs.len() - 1;
    for (m, slot) in out.iter_mut().enumerate().take(k + 1) {
        // Horner over the m-th derivative polynomial.
        let mut acc = x.lit(0.0);
        for i in (m..=order).rev() {
            acc = acc * x + coeffs[i] * falling(i, m);
        }
        *slot = acc;
    }
}

/// Rational activation `P(x) / (1 + |Q(x)|)`; the absolute value is carried
/// with the sign convention sign(0) = +1, so derivatives jump where the
/// denominator polynomial crosses zero.
pub fn rational_stack<S: Scalar>(num: &[S], den: &[S], x: S, k: usize, out: &mut [S]) {
    let mut p = [x; MAX_STACK];
    poly_stack(num, x, k, &mut p);
    // Q has no constant term: prepend zero.
    let mut q = [x; MAX_STACK];
    let q_full: Vec<S> = std::iter::once(x.lit(0.0)).chain(den.iter().copied()).collect();
    poly_stack(&q_full, x, k, &mut q);
    let sign = if q[0].value() < 0.0 { -1.0 } else { 1.0 };
    let mut d = [x; MAX_STACK];
    d[0] = q[0] * sign + 1.0;
    for m in 1..=k {
        d[m] = q[m] * sign;
    }
    quotient_stack(&p, &d, k, out);
}

/// Derivative stack of `p/d` from the stacks of `p` and `d`.
pub fn quotient_stack<S: Scalar>(p: &[S], d: &[S], k: usize, out: &mut [S]) {
    for m in 0..=k {
        let mut acc = p[m];
        for j in 0..m {
            acc = acc - out[j] * d[m - j] * binom(m, j);
        }
        out[m] = acc / d[0];
    }
}

/// Three-parameter smooth maxout approximator
/// `(p1 - p2)·x·sigmoid(β(p1 - p2)x) + p2·x`.
pub fn maxout_stack<S: Scalar>(p1: S, p2: S, beta: S, x: S, k: usize, out: &mut [S]) {
    let q = p1 - p2;
    let r = beta * q;
    let z = r * x;
    let mut s = [x; MAX_STACK];
    sigmoid_chain(sigmoid(z), k, &mut s);
    // g = x·s(z): g^(m) = x·r^m·s^(m) + m·r^(m-1)·s^(m-1)
    let mut g = [x; MAX_STACK];
    let mut r_pow = x.lit(1.0);
    let mut r_pow_prev = x.lit(1.0);
    for m in 0..=k {
        g[m] = x * r_pow * s[m];
        if m >= 1 {
            g[m] = g[m] + r_pow_prev * s[m - 1] * (m as f64);
        }
        r_pow_prev = r_pow;
        r_pow = r_pow * r;
    }
    out[0] = q * g[0] + p2 * x;
    if k >= 1 {
        out[1] = q * g[1] + p2;
    }
    for m in 2..=k {
        out[m] = q * g[m];
    }
}

