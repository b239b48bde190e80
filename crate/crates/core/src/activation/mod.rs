//! Activation functions: the standard catalog and the four trainable
//! families (blended candidates, Taylor polynomial, rational, smooth
//! maxout), each exposing value + derivatives through order 3 plus one
//! spare order for gradient propagation.

mod gates;
mod parse;
mod stacks;

pub use gates::{gate_vjp, gate_weights, gate_weights_s};
pub use parse::parse_activation;
pub use stacks::{
    blend_stack, maxout_stack, poly_stack, quotient_stack, rational_stack, MAX_STACK,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::scalar::Scalar;

/// Fixed-shape activation functions. The scale β (where present) is a
/// configuration constant, not a trainable parameter; trainable slopes live
/// in the blended family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StandardKind {
    /// sin(βx)
    Sin { beta: f64 },
    /// cos(βx)
    Cos { beta: f64 },
    /// e^(βx) − 1
    Exp { beta: f64 },
    Tanh,
    Sigmoid,
    /// (1/β)·ln(1 + e^(βx))
    Softplus { beta: f64 },
    /// x for x ≥ 0, e^x − 1 otherwise. Second derivative jumps at 0, so it
    /// is unusable wherever order-2 jets are needed and is never accepted as
    /// a blend candidate.
    Elu,
    /// x·Φ(x) with the standard normal CDF Φ
    Gelu,
    /// x·sigmoid(x)
    Swish,
}

impl StandardKind {
    pub const SIN: StandardKind = StandardKind::Sin { beta: 1.0 };
    pub const COS: StandardKind = StandardKind::Cos { beta: 1.0 };
    pub const EXP: StandardKind = StandardKind::Exp { beta: 1.0 };
    pub const SOFTPLUS: StandardKind = StandardKind::Softplus { beta: 1.0 };

    /// Highest jet truncation order this function can drive. ELU's second
    /// derivative is discontinuous at the origin; everything else is smooth.
    pub fn jet_order_limit(&self) -> usize {
        match self {
            StandardKind::Elu => 1,
            _ => crate::jet::MAX_JET_ORDER,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StandardKind::Sin { .. } => "sin",
            StandardKind::Cos { .. } => "cos",
            StandardKind::Exp { .. } => "exp",
            StandardKind::Tanh => "tanh",
            StandardKind::Sigmoid => "sigmoid",
            StandardKind::Softplus { .. } => "softplus",
            StandardKind::Elu => "elu",
            StandardKind::Gelu => "gelu",
            StandardKind::Swish => "swish",
        }
    }

    fn beta(&self) -> Option<f64> {
        match self {
            StandardKind::Sin { beta }
            | StandardKind::Cos { beta }
            | StandardKind::Exp { beta }
            | StandardKind::Softplus { beta } => Some(*beta),
            _ => None,
        }
    }
}

impl std::fmt::Display for StandardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.beta() {
            Some(b) if b != 1.0 => write!(f, "{}(beta={})", self.name(), b),
            _ => write!(f, "{}", self.name()),
        }
    }
}

/// Normalization applied to the blend coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Softmax,
    Sigmoid,
    Identity,
    L1Norm,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Softmax => "softmax",
            GateKind::Sigmoid => "sigmoid",
            GateKind::Identity => "identity",
            GateKind::L1Norm => "l1norm",
        }
    }

    /// Initial raw coefficient per candidate: zero where the gate maps zeros
    /// to uniform attention, 1/N where the gate is (signed) linear.
    pub fn init_alpha(&self, n: usize) -> f64 {
        match self {
            GateKind::Softmax | GateKind::Sigmoid => 0.0,
            GateKind::Identity | GateKind::L1Norm => 1.0 / n as f64,
        }
    }
}

/// Whether adaptive parameters are shared across a layer or owned per
/// neuron.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Granularity {
    #[default]
    LayerWise,
    NeuronWise,
}

/// A layer's activation: one fixed function or a trainable family.
#[derive(Clone, Debug, PartialEq)]
pub enum ActivationSpec {
    Standard(StandardKind),
    /// Gated linear combination of candidate functions, optionally with a
    /// trainable slope per candidate.
    Abu {
        candidates: Vec<StandardKind>,
        gate: GateKind,
        slopes: bool,
        granularity: Granularity,
    },
    /// Polynomial of degree `order` with trainable coefficients.
    Slaf { order: usize, granularity: Granularity },
    /// Rational P_m(x) / (1 + |Q_n(x)|) with trainable coefficients.
    Pau { num_order: usize, den_order: usize, granularity: Granularity },
    /// (p1−p2)·x·sigmoid(β(p1−p2)x) + p2·x with trainable p1, p2, β.
    Acon { granularity: Granularity },
}

/// The default candidate set: sin for periodic structure plus a spread of
/// smooth general-purpose functions.
pub fn default_candidates() -> Vec<StandardKind> {
    vec![
        StandardKind::SIN,
        StandardKind::Tanh,
        StandardKind::Gelu,
        StandardKind::Swish,
        StandardKind::SOFTPLUS,
    ]
}

impl ActivationSpec {
    pub fn abu_default() -> Self {
        ActivationSpec::Abu {
            candidates: default_candidates(),
            gate: GateKind::Softmax,
            slopes: false,
            granularity: Granularity::LayerWise,
        }
    }

    pub fn slaf_default() -> Self {
        ActivationSpec::Slaf { order: 5, granularity: Granularity::LayerWise }
    }

    pub fn pau_default() -> Self {
        ActivationSpec::Pau { num_order: 5, den_order: 4, granularity: Granularity::LayerWise }
    }

    pub fn acon_default() -> Self {
        ActivationSpec::Acon { granularity: Granularity::LayerWise }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActivationSpec::Abu { candidates, .. } => {
                if candidates.is_empty() {
                    return Err(Error::config("blend candidate list is empty"));
                }
                for c in candidates {
                    if c.jet_order_limit() < 2 {
                        return Err(Error::config(format!(
                            "candidate {} lacks continuous higher-order derivatives",
                            c.name()
                        )));
                    }
                }
                Ok(())
            }
            ActivationSpec::Slaf { order, .. } => {
                if *order == 0 {
                    Err(Error::config("polynomial activation needs order >= 1"))
                } else {
                    Ok(())
                }
            }
            ActivationSpec::Pau { num_order, den_order, .. } => {
                if *num_order == 0 || *den_order == 0 {
                    Err(Error::config("rational activation needs nonzero orders"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Highest jet truncation order this activation can drive.
    pub fn jet_order_limit(&self) -> usize {
        match self {
            ActivationSpec::Standard(k) => k.jet_order_limit(),
            ActivationSpec::Abu { candidates, .. } => {
                candidates.iter().map(|c| c.jet_order_limit()).min().unwrap_or(0)
            }
            _ => crate::jet::MAX_JET_ORDER,
        }
    }

    pub fn granularity(&self) -> Granularity {
        match self {
            ActivationSpec::Standard(_) => Granularity::LayerWise,
            ActivationSpec::Abu { granularity, .. }
            | ActivationSpec::Slaf { granularity, .. }
            | ActivationSpec::Pau { granularity, .. }
            | ActivationSpec::Acon { granularity } => *granularity,
        }
    }

    /// Trainable parameters per neuron-group (α per candidate, plus a slope
    /// per candidate when enabled; polynomial m+1; rational m+1+n; maxout 3).
    pub fn unit_param_count(&self) -> usize {
        match self {
            ActivationSpec::Standard(_) => 0,
            ActivationSpec::Abu { candidates, slopes, .. } => {
                candidates.len() * if *slopes { 2 } else { 1 }
            }
            ActivationSpec::Slaf { order, .. } => order + 1,
            ActivationSpec::Pau { num_order, den_order, .. } => num_order + 1 + den_order,
            ActivationSpec::Acon { .. } => 3,
        }
    }

    /// Total trainable activation parameters for a layer of `width` units.
    pub fn params_per_layer(&self, width: usize) -> usize {
        match self.granularity() {
            Granularity::LayerWise => self.unit_param_count(),
            Granularity::NeuronWise => self.unit_param_count() * width,
        }
    }

    /// Initial parameter values: blend coefficients start at the gate's
    /// uniform-attention point and slopes at one; the other families draw
    /// from the standard normal distribution.
    pub fn init_params<R: Rng>(&self, width: usize, rng: &mut R) -> Vec<f64> {
        let groups = match self.granularity() {
            Granularity::LayerWise => 1,
            Granularity::NeuronWise => width,
        };
        let mut out = Vec::with_capacity(self.params_per_layer(width));
        for _ in 0..groups {
            match self {
                ActivationSpec::Standard(_) => {}
                ActivationSpec::Abu { candidates, gate, slopes, .. } => {
                    let n = candidates.len();
                    out.extend(std::iter::repeat(gate.init_alpha(n)).take(n));
                    if *slopes {
                        out.extend(std::iter::repeat(1.0).take(n));
                    }
                }
                _ => {
                    for _ in 0..self.unit_param_count() {
                        out.push(rng.sample::<f64, _>(StandardNormal));
                    }
                }
            }
        }
        out
    }

    /// Evaluate the derivative stack `[f(x), ..., f^(k)(x)]` for one
    /// neuron-group's parameter slice.
    pub fn stack<S: Scalar>(&self, params: &[S], x: S, k: usize, out: &mut [S]) -> Result<()> {
        match self {
            ActivationSpec::Standard(kind) => {
                kind.stack(x, k, out);
            }
            ActivationSpec::Abu { candidates, gate, slopes, .. } => {
                let n = candidates.len();
                let weights = gate_weights_s(*gate, &params[..n])?;
                let slope_slice = if *slopes { &params[n..2 * n] } else { &[] as &[S] };
                blend_stack(candidates, &weights, slope_slice, x, k, out);
            }
            ActivationSpec::Slaf { order, .. } => {
                poly_stack(&params[..order + 1], x, k, out);
            }
            ActivationSpec::Pau { num_order, den_order, .. } => {
                let num = &params[..num_order + 1];
                let den = &params[num_order + 1..num_order + 1 + den_order];
                rational_stack(num, den, x, k, out);
            }
            ActivationSpec::Acon { .. } => {
                maxout_stack(params[0], params[1], params[2], x, k, out);
            }
        }
        Ok(())
    }

    /// Apply the activation to a jet, propagating coefficients through the
    /// chain rule. `params` is one neuron-group's slice.
    pub fn apply<S: Scalar>(&self, params: &[S], x: &Jet<S>) -> Result<Jet<S>> {
        let order = x.basis().max_order();
        if order > self.jet_order_limit() {
            return Err(Error::config(format!(
                "activation {self} cannot drive order-{order} jets"
            )));
        }
        let mut stack = [x.value(); MAX_STACK];
        self.stack(params, x.value(), order, &mut stack)?;
        x.apply_unary(&stack[..order + 1])
    }
}

/// Apply a fixed-shape activation to a jet.
pub fn apply_standard<S: Scalar>(kind: StandardKind, x: &Jet<S>) -> Result<Jet<S>> {
    ActivationSpec::Standard(kind).apply(&[], x)
}

impl std::fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActivationSpec::Standard(k) => write!(f, "{k}"),
            ActivationSpec::Abu { candidates, gate, slopes, granularity } => {
                let cands: Vec<String> = candidates.iter().map(|c| c.to_string()).collect();
                write!(
                    f,
                    "abu(candidates=[{}], gate={}, slopes={}, granularity={})",
                    cands.join(","),
                    gate.name(),
                    slopes,
                    match granularity {
                        Granularity::LayerWise => "layer",
                        Granularity::NeuronWise => "neuron",
                    }
                )
            }
            ActivationSpec::Slaf { order, granularity } => {
                write!(f, "slaf(order={order}{})", granularity_suffix(*granularity))
            }
            ActivationSpec::Pau { num_order, den_order, granularity } => {
                write!(f, "pau(m={num_order}, n={den_order}{})", granularity_suffix(*granularity))
            }
            ActivationSpec::Acon { granularity } => match granularity {
                Granularity::LayerWise => write!(f, "acon"),
                Granularity::NeuronWise => write!(f, "acon(granularity=neuron)"),
            },
        }
    }
}

fn granularity_suffix(g: Granularity) -> &'static str {
    match g {
        Granularity::LayerWise => "",
        Granularity::NeuronWise => ", granularity=neuron",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{Dim, JetBasis};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn jet3(x: f64) -> Jet<f64> {
        Jet::lift(&JetBasis::space1(3).unwrap(), Dim::X, x)
    }

    #[test]
    fn standard_values() {
        let spec = ActivationSpec::Standard(StandardKind::Sigmoid);
        let y = spec.apply(&[], &jet3(0.0)).unwrap();
        assert_relative_eq!(y.value(), 0.5, max_relative = 1e-15);

        let y = apply_standard(StandardKind::EXP, &jet3(0.0)).unwrap();
        assert_relative_eq!(y.value(), 0.0, max_relative = 1e-15);

        let y = apply_standard(StandardKind::Exp { beta: 0.25 }, &jet3(2.0)).unwrap();
        assert_relative_eq!(y.value(), (0.5f64).exp() - 1.0, max_relative = 1e-14);
        assert_relative_eq!(y.d(Dim::X), 0.25 * (0.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn elu_rejected_at_order_two() {
        let err = apply_standard(StandardKind::Elu, &jet3(1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        // Order-1 jets are fine.
        let b1 = JetBasis::spacetime1(1).unwrap();
        let x = Jet::lift(&b1, Dim::X, -0.5f64);
        let y = apply_standard(StandardKind::Elu, &x).unwrap();
        assert_relative_eq!(y.value(), (-0.5f64).exp() - 1.0, max_relative = 1e-15);
    }

    #[test]
    fn blend_single_candidate_is_exact() {
        // One candidate with any gate that yields weight 1 degenerates to the
        // candidate itself.
        let spec = ActivationSpec::Abu {
            candidates: vec![StandardKind::Tanh],
            gate: GateKind::Identity,
            slopes: false,
            granularity: Granularity::LayerWise,
        };
        for x in [-5.0, -1.3, 0.0, 0.7, 5.0] {
            let y = spec.apply(&[1.0], &jet3(x)).unwrap();
            let t = apply_standard(StandardKind::Tanh, &jet3(x)).unwrap();
            for (a, b) in y.coeffs().iter().zip(t.coeffs()) {
                assert_relative_eq!(a, b, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn blend_zero_init_sin_exp() {
        let spec = ActivationSpec::Abu {
            candidates: vec![StandardKind::SIN, StandardKind::EXP],
            gate: GateKind::Softmax,
            slopes: false,
            granularity: Granularity::LayerWise,
        };
        let y = spec.apply(&[0.0, 0.0], &jet3(0.0)).unwrap();
        // 0.5·sin(0) + 0.5·(e⁰−1) = 0
        assert_relative_eq!(y.value(), 0.0, max_relative = 1e-15);
    }

    #[test]
    fn blend_matches_independent_weighted_sum() {
        let candidates = default_candidates();
        let spec = ActivationSpec::Abu {
            candidates: candidates.clone(),
            gate: GateKind::Softmax,
            slopes: false,
            granularity: Granularity::LayerWise,
        };
        let alpha = [0.3, -1.1, 0.8, 0.05, -0.4];
        let w = gate_weights(GateKind::Softmax, &alpha).unwrap();
        for x in [-2.0, -0.3, 0.0, 1.7] {
            let y = spec.apply(&alpha, &jet3(x)).unwrap();
            let expected: f64 = candidates
                .iter()
                .zip(&w)
                .map(|(c, wi)| wi * apply_standard(*c, &jet3(x)).unwrap().value())
                .sum();
            assert_relative_eq!(y.value(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_hot_weights_reproduce_each_candidate() {
        let candidates = default_candidates();
        for (i, kind) in candidates.iter().enumerate() {
            let spec = ActivationSpec::Abu {
                candidates: candidates.clone(),
                gate: GateKind::Identity,
                slopes: false,
                granularity: Granularity::LayerWise,
            };
            let mut alpha = vec![0.0; candidates.len()];
            alpha[i] = 1.0;
            let mut x = -5.0;
            while x <= 5.0 {
                let y = spec.apply(&alpha, &jet3(x)).unwrap();
                let t = apply_standard(*kind, &jet3(x)).unwrap();
                assert_relative_eq!(y.value(), t.value(), epsilon = 1e-12);
                x += 0.25;
            }
        }
    }

    #[test]
    fn poly_selects_identity_and_curvature() {
        // a = (0,1,0,...) is the identity map.
        let spec = ActivationSpec::slaf_default();
        let a = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let y = spec.apply(&a, &jet3(3.0)).unwrap();
        assert_relative_eq!(y.value(), 3.0, max_relative = 1e-15);
        assert_relative_eq!(y.d(Dim::X), 1.0, max_relative = 1e-15);
        // a = (0,0,1,0,0,0): f'' = 2 everywhere.
        let a = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let y = spec.apply(&a, &jet3(1.7)).unwrap();
        assert_relative_eq!(y.d2(Dim::X), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn poly_partial_exponential_series() {
        // Truncated e^x coefficients at x = 1: hand-summed oracle.
        let a = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
        let expected: f64 = a.iter().sum(); // Σ aᵢ·1^i
        assert_relative_eq!(expected, 2.7166666666666663, max_relative = 1e-15);
        let spec = ActivationSpec::slaf_default();
        let y = spec.apply(&a, &jet3(1.0)).unwrap();
        assert_relative_eq!(y.value(), expected, max_relative = 1e-14);
    }

    #[test]
    fn rational_reduces_to_polynomial_when_denominator_vanishes() {
        let spec = ActivationSpec::pau_default();
        let params = [0.4, -1.0, 0.3, 0.02, -0.5, 0.11, 0.0, 0.0, 0.0, 0.0];
        let poly = ActivationSpec::slaf_default();
        for x in [-2.2, 0.0, 1.4] {
            let y = spec.apply(&params, &jet3(x)).unwrap();
            let z = poly.apply(&params[..6], &jet3(x)).unwrap();
            for (a, b) in y.coeffs().iter().zip(z.coeffs()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
        // Identity numerator at x = 3.
        let params = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y = spec.apply(&params, &jet3(3.0)).unwrap();
        assert_relative_eq!(y.value(), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn maxout_reduces_to_swish() {
        let spec = ActivationSpec::acon_default();
        for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            let y = spec.apply(&[1.0, 0.0, 1.0], &jet3(x)).unwrap();
            let s = apply_standard(StandardKind::Swish, &jet3(x)).unwrap();
            for (a, b) in y.coeffs().iter().zip(s.coeffs()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn maxout_equal_params_is_linear() {
        let spec = ActivationSpec::acon_default();
        let c = 0.7;
        let y = spec.apply(&[c, c, 0.9], &jet3(2.5)).unwrap();
        assert_relative_eq!(y.value(), c * 2.5, max_relative = 1e-14);
        assert_relative_eq!(y.d(Dim::X), c, max_relative = 1e-14);
        assert!(y.d2(Dim::X).abs() < 1e-14);
    }

    #[test]
    fn maxout_sharp_gate_approaches_relu() {
        let spec = ActivationSpec::acon_default();
        let f2 = spec.apply(&[1.0, 0.0, 10.0], &jet3(2.0)).unwrap().value();
        let fm2 = spec.apply(&[1.0, 0.0, 10.0], &jet3(-2.0)).unwrap().value();
        assert!((f2 - 2.0).abs() <= 1e-3);
        assert!(fm2.abs() <= 1e-3);
    }

    #[test]
    fn init_layouts_and_determinism() {
        let abu = ActivationSpec::Abu {
            candidates: default_candidates(),
            gate: GateKind::Softmax,
            slopes: true,
            granularity: Granularity::LayerWise,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = abu.init_params(16, &mut rng);
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);

        let ident = ActivationSpec::Abu {
            candidates: vec![StandardKind::SIN, StandardKind::Tanh],
            gate: GateKind::Identity,
            slopes: false,
            granularity: Granularity::LayerWise,
        };
        let p = ident.init_params(16, &mut rng);
        assert_eq!(p, vec![0.5, 0.5]);

        let slaf = ActivationSpec::slaf_default();
        let a = slaf.init_params(8, &mut ChaCha8Rng::seed_from_u64(3));
        let b = slaf.init_params(8, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().any(|v| *v != 0.0));

        let neuron = ActivationSpec::Pau {
            num_order: 5,
            den_order: 4,
            granularity: Granularity::NeuronWise,
        };
        let p = neuron.init_params(8, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(p.len(), 80);
    }

    #[test]
    fn parameter_count_formulas() {
        assert_eq!(ActivationSpec::abu_default().unit_param_count(), 5);
        let with_slopes = ActivationSpec::Abu {
            candidates: default_candidates(),
            gate: GateKind::Softmax,
            slopes: true,
            granularity: Granularity::LayerWise,
        };
        assert_eq!(with_slopes.unit_param_count(), 10);
        assert_eq!(ActivationSpec::slaf_default().unit_param_count(), 6);
        assert_eq!(ActivationSpec::pau_default().unit_param_count(), 10);
        assert_eq!(ActivationSpec::acon_default().unit_param_count(), 3);
        let neuron = ActivationSpec::Acon { granularity: Granularity::NeuronWise };
        assert_eq!(neuron.params_per_layer(64), 192);
    }
}
