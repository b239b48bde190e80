//! Fully-connected network with pluggable per-layer activations and
//! hard-constraint output surrogates.
//!
//! `depth` counts weight layers; the final layer is linear, so a depth-D
//! network has D−1 activated hidden layers. This module holds the reference
//! (scalar, jet-by-jet) forward pass; [`crate::batch`] evaluates the same
//! network over whole point batches for training speed and is cross-checked
//! against this path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{ActivationSpec, Granularity};
use crate::error::{Error, Result};
use crate::jet::{Dim, Jet, JetBasis};
use crate::scalar::Scalar;
use crate::store::ParameterStore;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct MlpConfig {
    pub input_dim: usize,
    /// Number of weight layers.
    pub depth: usize,
    pub width: usize,
    pub output_dim: usize,
    /// One activation per hidden layer (`depth - 1` entries).
    pub activations: Vec<ActivationSpec>,
}

impl MlpConfig {
    /// Same activation on every hidden layer.
    pub fn new(
        input_dim: usize,
        depth: usize,
        width: usize,
        output_dim: usize,
        activation: ActivationSpec,
    ) -> Self {
        MlpConfig {
            input_dim,
            depth,
            width,
            output_dim,
            activations: vec![activation; depth.saturating_sub(1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::config("network depth must be at least 2 weight layers"));
        }
        if self.activations.len() != self.depth - 1 {
            return Err(Error::config(format!(
                "expected {} hidden activations, got {}",
                self.depth - 1,
                self.activations.len()
            )));
        }
        if self.input_dim == 0 || self.width == 0 || self.output_dim == 0 {
            return Err(Error::config("zero-sized network dimension"));
        }
        for a in &self.activations {
            a.validate()?;
        }
        Ok(())
    }

    /// (fan_in, fan_out) per weight layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth);
        let mut fan_in = self.input_dim;
        for l in 0..self.depth {
            let fan_out = if l + 1 == self.depth { self.output_dim } else { self.width };
            dims.push((fan_in, fan_out));
            fan_in = fan_out;
        }
        dims
    }

    /// Weights + biases only.
    pub fn base_param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Weights, biases and trainable activation parameters.
    pub fn total_param_count(&self) -> usize {
        self.base_param_count()
            + self.activations.iter().map(|a| a.params_per_layer(self.width)).sum::<usize>()
    }

    /// Highest jet order every hidden activation can drive.
    pub fn jet_order_limit(&self) -> usize {
        self.activations
            .iter()
            .map(|a| a.jet_order_limit())
            .min()
            .unwrap_or(crate::jet::MAX_JET_ORDER)
    }
}

/// Glorot-uniform initialization: weights from
/// U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))), biases zero, then the
/// per-layer activation parameter segments.
///
/// Store layout per layer l: `w{l}` (row-major, fan_out × fan_in), `b{l}`,
/// and `act{l}` for hidden layers with trainable activations.
pub fn init_xavier(config: &MlpConfig, seed: u64) -> Result<ParameterStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        store.push_segment(format!("w{l}"), &w);
        store.push_segment(format!("b{l}"), &vec![0.0; fan_out]);
        if l + 1 < config.depth {
            let p = config.activations[l].init_params(config.width, &mut rng);
            if !p.is_empty() {
                store.push_segment(format!("act{l}"), &p);
            }
        }
    }
    Ok(store)
}

/// How parameter values are materialized as scalars: plainly, or as
/// recorded tape leaves bound to their store indices.
pub trait ParamEnv<S: Scalar> {
    fn read(&self, idx: usize) -> S;
}

pub struct PlainEnv<'a>(pub &'a ParameterStore);

impl ParamEnv<f64> for PlainEnv<'_> {
    fn read(&self, idx: usize) -> f64 {
        self.0.get(idx)
    }
}

pub struct TapeEnv<'a, 't> {
    pub tape: &'t Tape,
    pub store: &'a ParameterStore,
}

impl<'t> ParamEnv<Var<'t>> for TapeEnv<'_, 't> {
    fn read(&self, idx: usize) -> Var<'t> {
        self.tape.param(self.store.get(idx), idx)
    }
}

/// Reference forward pass in jet arithmetic: one point, full derivative
/// bundle. `inputs` must supply one coordinate jet per input dimension.
pub fn forward_jet<S: Scalar, E: ParamEnv<S>>(
    env: &E,
    store: &ParameterStore,
    config: &MlpConfig,
    inputs: &[Jet<S>],
) -> Result<Vec<Jet<S>>> {
    if inputs.len() != config.input_dim {
        return Err(Error::config(format!(
            "expected {} input jets, got {}",
            config.input_dim,
            inputs.len()
        )));
    }
    let basis = inputs[0].basis().clone();
    let mut acts: Vec<S> = Vec::new();
    let mut cur: Vec<Jet<S>> = inputs.to_vec();
    for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
        let w_range = store
            .segment_range(&format!("w{l}"))
            .ok_or_else(|| Error::config(format!("store missing segment w{l}")))?;
        let b_range = store
            .segment_range(&format!("b{l}"))
            .ok_or_else(|| Error::config(format!("store missing segment b{l}")))?;
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let mut acc = Jet::constant(&basis, env.read(b_range.start + o));
            for (i, x) in cur.iter().enumerate() {
                let w = env.read(w_range.start + o * fan_in + i);
                acc = acc.add(&x.scale(w));
            }
            next.push(acc);
        }
        if l + 1 < config.depth {
            let spec = &config.activations[l];
            let unit_n = spec.unit_param_count();
            acts.clear();
            if unit_n > 0 {
                let range = store
                    .segment_range(&format!("act{l}"))
                    .ok_or_else(|| Error::config(format!("store missing segment act{l}")))?;
                acts.extend(range.map(|i| env.read(i)));
            }
            for (u, jet) in next.iter_mut().enumerate() {
                let slice: &[S] = match spec.granularity() {
                    Granularity::LayerWise => &acts,
                    Granularity::NeuronWise => &acts[u * unit_n..(u + 1) * unit_n],
                };
                *jet = spec.apply(slice, jet)?;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Hard-constraint wrappers that make the surrogate output satisfy the
/// problem's initial/boundary data identically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateKind {
    None,
    /// û(x) = x(x−π)·raw(x) + x; pins û(0)=0, û(π)=π.
    Poisson1d,
    /// û(t,x) = x²cos(πx) + t(1−x²)·raw(t,x); pins the initial profile and
    /// û(t,±1) = −1.
    AllenCahn,
    /// û(t,x) = cos(πx) + t·raw(t,x); pins the initial profile.
    Kdv,
}

impl SurrogateKind {
    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::None => "none",
            SurrogateKind::Poisson1d => "poisson1d",
            SurrogateKind::AllenCahn => "allen_cahn",
            SurrogateKind::Kdv => "kdv",
        }
    }
}

/// Compose the surrogate formula in jet arithmetic. `t` is required for the
/// time-dependent kinds.
pub fn apply_surrogate<S: Scalar>(
    kind: SurrogateKind,
    raw: &Jet<S>,
    t: Option<&Jet<S>>,
    x: &Jet<S>,
) -> Result<Jet<S>> {
    use std::f64::consts::PI;
    match kind {
        SurrogateKind::None => Ok(raw.clone()),
        SurrogateKind::Poisson1d => Ok(x.mul(&x.add_f64(-PI)).mul(raw).add(x)),
        SurrogateKind::AllenCahn => {
            let t = t.ok_or_else(|| Error::config("surrogate needs a time jet"))?;
            let cos_px = crate::activation::apply_standard(
                crate::activation::StandardKind::Cos { beta: PI },
                x,
            )?;
            let ic = x.mul(x).mul(&cos_px);
            let damp = x.mul(x).neg().add_f64(1.0);
            Ok(ic.add(&t.mul(&damp).mul(raw)))
        }
        SurrogateKind::Kdv => {
            let t = t.ok_or_else(|| Error::config("surrogate needs a time jet"))?;
            let cos_px = crate::activation::apply_standard(
                crate::activation::StandardKind::Cos { beta: PI },
                x,
            )?;
            Ok(cos_px.add(&t.mul(raw)))
        }
    }
}

/// Evaluate the surrogate-applied field at a plain point (no derivatives).
/// Coordinates follow [`coord_dims`] ordering.
pub fn eval_value(
    store: &ParameterStore,
    config: &MlpConfig,
    surrogate: SurrogateKind,
    time_dependent: bool,
    coords: &[f64],
) -> Result<Vec<f64>> {
    let basis = JetBasis::value_only();
    let dims = if time_dependent {
        coord_dims(config.input_dim)
    } else {
        coord_dims_steady(config.input_dim)
    };
    let inputs: Vec<Jet<f64>> =
        coords.iter().zip(dims.iter()).map(|(&v, &d)| Jet::lift(&basis, d, v)).collect();
    let raw = forward_jet(&PlainEnv(store), store, config, &inputs)?;
    let (t, x) = if time_dependent && config.input_dim >= 2 {
        (Some(&inputs[0]), &inputs[1])
    } else {
        (None, &inputs[0])
    };
    raw.iter().map(|r| Ok(apply_surrogate(surrogate, r, t, x)?.value())).collect()
}

/// Coordinate ordering for time-dependent problems: [t, x] or [t, x, y].
/// 1D steady problems take [x].
pub fn coord_dims(input_dim: usize) -> Vec<Dim> {
    match input_dim {
        1 => vec![Dim::X],
        2 => vec![Dim::T, Dim::X],
        3 => vec![Dim::T, Dim::X, Dim::Y],
        _ => panic!("unsupported input dimensionality {input_dim}"),
    }
}

/// Coordinate ordering for steady problems: [x] or [x, y].
pub fn coord_dims_steady(input_dim: usize) -> Vec<Dim> {
    match input_dim {
        1 => vec![Dim::X],
        2 => vec![Dim::X, Dim::Y],
        _ => panic!("unsupported steady input dimensionality {input_dim}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::StandardKind;
    use approx::assert_relative_eq;

    fn tanh_cfg(input: usize, depth: usize, width: usize, out: usize) -> MlpConfig {
        MlpConfig::new(input, depth, width, out, ActivationSpec::Standard(StandardKind::Tanh))
    }

    #[test]
    fn base_parameter_counts() {
        // 2·32+32 + 2·(32²+32) + 32+1 = 2241
        assert_eq!(tanh_cfg(2, 4, 32, 1).base_param_count(), 2241);
        // Deep configuration: depth 6, width 64, 2 inputs.
        assert_eq!(tanh_cfg(2, 6, 64, 1).base_param_count(), 16897);
        // Small 1D configuration: depth 4, width 16, 1 input.
        assert_eq!(tanh_cfg(1, 4, 16, 1).base_param_count(), 593);
    }

    #[test]
    fn blended_activation_parameter_total() {
        let cfg = MlpConfig::new(2, 6, 64, 1, ActivationSpec::abu_default());
        assert_eq!(cfg.total_param_count(), 16922);
    }

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let cfg = tanh_cfg(2, 4, 32, 1);
        let s1 = init_xavier(&cfg, 9).unwrap();
        let s2 = init_xavier(&cfg, 9).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 2241);
        let w0 = s1.segment("w0").unwrap();
        let bound = (6.0 / (2.0 + 32.0)).sqrt();
        assert!(w0.iter().all(|w| w.abs() < bound));
        assert!(s1.segment("b0").unwrap().iter().all(|b| *b == 0.0));
        let s3 = init_xavier(&cfg, 10).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn zero_network_outputs_zero_jet() {
        let cfg = tanh_cfg(2, 3, 8, 1);
        let mut store = init_xavier(&cfg, 0).unwrap();
        for v in store.values_mut() {
            *v = 0.0;
        }
        let basis = JetBasis::spacetime1(2).unwrap();
        let t = Jet::lift(&basis, Dim::T, 0.3f64);
        let x = Jet::lift(&basis, Dim::X, -0.7f64);
        let out = forward_jet(&PlainEnv(&store), &store, &cfg, &[t, x]).unwrap();
        for c in out[0].coeffs() {
            assert_eq!(*c, 0.0);
        }
    }

    #[test]
    fn single_unit_sine_has_known_curvature() {
        // u = sin(2x): u_xx = −4·sin(2x).
        let cfg = MlpConfig::new(1, 2, 1, 1, ActivationSpec::Standard(StandardKind::SIN));
        let mut store = ParameterStore::new();
        store.push_segment("w0", &[2.0]);
        store.push_segment("b0", &[0.0]);
        store.push_segment("w1", &[1.0]);
        store.push_segment("b1", &[0.0]);
        let basis = JetBasis::space1(2).unwrap();
        for x0 in [-1.2, 0.0, 0.9] {
            let x = Jet::lift(&basis, Dim::X, x0);
            let out = forward_jet(&PlainEnv(&store), &store, &cfg, &[x]).unwrap();
            assert_relative_eq!(out[0].value(), (2.0 * x0).sin(), max_relative = 1e-14);
            assert_relative_eq!(
                out[0].d2(Dim::X),
                -4.0 * (2.0 * x0).sin(),
                max_relative = 1e-13,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn surrogates_pin_boundary_and_initial_data() {
        use std::f64::consts::PI;
        let b1 = JetBasis::space1(2).unwrap();
        let bt = JetBasis::spacetime1(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let raw_v: f64 = rng.gen_range(-50.0..50.0);
            // 1D elliptic surrogate at the walls, for any raw output.
            for (x0, want) in [(0.0, 0.0), (PI, PI)] {
                let x = Jet::lift(&b1, Dim::X, x0);
                let raw = Jet::constant(&b1, raw_v);
                let s = apply_surrogate(SurrogateKind::Poisson1d, &raw, None, &x).unwrap();
                assert!((s.value() - want).abs() <= 1e-14);
            }
            // Phase-field surrogate: initial profile at t=0 and walls at ±1.
            let x0: f64 = rng.gen_range(-1.0..1.0);
            let t = Jet::lift(&bt, Dim::T, 0.0);
            let x = Jet::lift(&bt, Dim::X, x0);
            let raw = Jet::constant(&bt, raw_v);
            let s = apply_surrogate(SurrogateKind::AllenCahn, &raw, Some(&t), &x).unwrap();
            assert!((s.value() - x0 * x0 * (PI * x0).cos()).abs() <= 1e-14);
            let t = Jet::lift(&bt, Dim::T, rng.gen_range(0.0..1.0));
            for wall in [-1.0, 1.0] {
                let x = Jet::lift(&bt, Dim::X, wall);
                let s = apply_surrogate(SurrogateKind::AllenCahn, &raw, Some(&t), &x).unwrap();
                assert!((s.value() + 1.0).abs() <= 1e-14);
            }
            // Dispersive-wave surrogate at t=0.
            let t = Jet::lift(&bt, Dim::T, 0.0);
            let x = Jet::lift(&bt, Dim::X, x0);
            let s = apply_surrogate(SurrogateKind::Kdv, &raw, Some(&t), &x).unwrap();
            assert!((s.value() - (PI * x0).cos()).abs() <= 1e-14);
        }
    }

    #[test]
    fn allen_cahn_surrogate_example_point() {
        // t=0, x=0.5 → 0.25·cos(π/2) = 0 regardless of the raw output.
        let bt = JetBasis::spacetime1(2).unwrap();
        let t = Jet::lift(&bt, Dim::T, 0.0f64);
        let x = Jet::lift(&bt, Dim::X, 0.5);
        let raw = Jet::constant(&bt, 123.0);
        let s = apply_surrogate(SurrogateKind::AllenCahn, &raw, Some(&t), &x).unwrap();
        assert!(s.value().abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(tanh_cfg(2, 1, 8, 1).validate().is_err());
        let mut cfg = tanh_cfg(2, 4, 8, 1);
        cfg.activations.pop();
        assert!(cfg.validate().is_err());
    }
}
