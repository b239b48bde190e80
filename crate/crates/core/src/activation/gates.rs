//! Gate functions turning raw blend coefficients into candidate weights.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

use super::GateKind;

/// Gate weights, generic over scalar type (recorded on the tape when `S` is
/// a tape variable). Softmax subtracts the running maximum for stability.
pub fn gate_weights_s<S: Scalar>(gate: GateKind, alpha: &[S]) -> Result<Vec<S>> {
    match gate {
        GateKind::Softmax => {
            let m = alpha.iter().map(|a| a.value()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<S> = alpha.iter().map(|&a| (a - m).exp()).collect();
            let mut sum = exps[0];
            for e in &exps[1..] {
                sum = sum + *e;
            }
            Ok(exps.into_iter().map(|e| e / sum).collect())
        }
        GateKind::Sigmoid => Ok(alpha.iter().map(|&a| sigmoid(a)).collect()),
        GateKind::Identity => Ok(alpha.to_vec()),
        GateKind::L1Norm => {
            let total: f64 = alpha.iter().map(|a| a.value().abs()).sum();
            if total == 0.0 {
                return Err(Error::DegenerateGate(
                    "l1 normalization over all-zero coefficients".into(),
                ));
            }
            let mut sum = alpha[0].abs();
            for a in &alpha[1..] {
                sum = sum + a.abs();
            }
            Ok(alpha.iter().map(|&a| a / sum).collect())
        }
    }
}

/// Plain f64 gate weights.
pub fn gate_weights(gate: GateKind, alpha: &[f64]) -> Result<Vec<f64>> {
    gate_weights_s(gate, alpha)
}

/// Accumulate `Jᵀ·w̄` into `grad`, where `J = ∂w/∂α` is the gate Jacobian at
/// `alpha` (with weights `w` already computed) and `w̄` is the adjoint of the
/// weights.
pub fn gate_vjp(gate: GateKind, alpha: &[f64], w: &[f64], w_bar: &[f64], grad: &mut [f64]) {
    match gate {
        GateKind::Softmax => {
            let inner: f64 = w.iter().zip(w_bar).map(|(wi, di)| wi * di).sum();
            for j in 0..alpha.len() {
                grad[j] += w[j] * (w_bar[j] - inner);
            }
        }
        GateKind::Sigmoid => {
            for j in 0..alpha.len() {
                grad[j] += w[j] * (1.0 - w[j]) * w_bar[j];
            }
        }
        GateKind::Identity => {
            for j in 0..alpha.len() {
                grad[j] += w_bar[j];
            }
        }
        GateKind::L1Norm => {
            let total: f64 = alpha.iter().map(|a| a.abs()).sum();
            let inner: f64 = alpha.iter().zip(w_bar).map(|(a, d)| a * d).sum();
            for j in 0..alpha.len() {
                let sign = if alpha[j] < 0.0 { -1.0 } else { 1.0 };
                grad[j] += w_bar[j] / total - sign * inner / (total * total);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let w = gate_weights(GateKind::Softmax, &[0.0; 5]).unwrap();
        for wi in &w {
            assert_relative_eq!(*wi, 0.2, max_relative = 1e-15);
        }
    }

    #[test]
    fn identity_passes_through() {
        let init = [0.25, 0.25, 0.25, 0.25];
        let w = gate_weights(GateKind::Identity, &init).unwrap();
        assert_eq!(w, init.to_vec());
    }

    #[test]
    fn softmax_large_gap() {
        let w = gate_weights(GateKind::Softmax, &[10.0, 0.0]).unwrap();
        let e = (-10.0f64).exp();
        assert_relative_eq!(w[0], 1.0 / (1.0 + e), max_relative = 1e-14);
        assert_relative_eq!(w[1], e / (1.0 + e), max_relative = 1e-14);
        assert_relative_eq!(w[0] + w[1], 1.0, max_relative = 1e-15);
        assert!(w[0] > 0.9999 && w[1] < 1e-4);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = [0.3, -1.2, 2.0, 0.0];
        let w1 = gate_weights(GateKind::Softmax, &a).unwrap();
        let shifted: Vec<f64> = a.iter().map(|v| v + 123.456).collect();
        let w2 = gate_weights(GateKind::Softmax, &shifted).unwrap();
        for (x, y) in w1.iter().zip(&w2) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_relative_eq!(w1.iter().sum::<f64>(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_huge_inputs() {
        let w = gate_weights(GateKind::Softmax, &[1000.0, 999.0]).unwrap();
        assert!(w.iter().all(|x| x.is_finite()));
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn l1_of_zeros_is_degenerate() {
        let err = gate_weights(GateKind::L1Norm, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateGate(_)));
    }

    #[test]
    fn l1_preserves_sign() {
        let w = gate_weights(GateKind::L1Norm, &[0.5, -1.5]).unwrap();
        assert_relative_eq!(w[0], 0.25, max_relative = 1e-15);
        assert_relative_eq!(w[1], -0.75, max_relative = 1e-15);
        assert!(w.iter().map(|x| x.abs()).sum::<f64>() <= 1.0 + 1e-15);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let alpha = [0.4, -0.8, 1.3];
        let w_bar = [0.7, -0.2, 0.5];
        for gate in [GateKind::Softmax, GateKind::Sigmoid, GateKind::Identity, GateKind::L1Norm] {
            let w = gate_weights(gate, &alpha).unwrap();
            let mut grad = vec![0.0; 3];
            gate_vjp(gate, &alpha, &w, &w_bar, &mut grad);
            let h = 1e-6;
            for j in 0..3 {
                let mut ap = alpha;
                ap[j] += h;
                let mut am = alpha;
                am[j] -= h;
                let wp = gate_weights(gate, &ap).unwrap();
                let wm = gate_weights(gate, &am).unwrap();
                let fd: f64 =
                    (0..3).map(|i| w_bar[i] * (wp[i] - wm[i]) / (2.0 * h)).sum();
                assert_relative_eq!(grad[j], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }
}
