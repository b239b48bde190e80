//! The batched engine and the scalar jet/tape path must agree exactly:
//! forward coefficients to machine precision, parameter gradients to
//! near-machine precision, and both against finite differences.

use std::sync::Arc;

use pinn_core::activation::{parse_activation, ActivationSpec};
use pinn_core::batch::{backward_phase, forward_phase, Phase};
use pinn_core::jet::{Dim, Jet, JetBasis};
use pinn_core::network::{forward_jet, init_xavier, MlpConfig, PlainEnv, TapeEnv};
use pinn_core::store::ParameterStore;
use pinn_core::tape::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    config: MlpConfig,
    store: ParameterStore,
    basis: Arc<JetBasis>,
    dims: Vec<Dim>,
}

fn cases() -> Vec<Case> {
    let specs: Vec<ActivationSpec> = [
        "tanh",
        "sin",
        "gelu",
        "abu(candidates=[sin,tanh,gelu,swish,softplus], gate=softmax)",
        "abu(candidates=[sin,exp], gate=identity, slopes=true)",
        "abu(gate=l1norm, slopes=true, granularity=neuron)",
        "abu(gate=sigmoid)",
        "slaf(order=5)",
        "slaf(order=3, granularity=neuron)",
        "pau(m=5, n=4)",
        "acon",
        "acon(granularity=neuron)",
    ]
    .iter()
    .map(|s| parse_activation(s).unwrap())
    .collect();

    let bases: Vec<(Arc<JetBasis>, Vec<Dim>, usize)> = vec![
        (JetBasis::space1(2).unwrap(), vec![Dim::X], 1),
        (JetBasis::spacetime1(2).unwrap(), vec![Dim::T, Dim::X], 2),
        (JetBasis::spacetime1(3).unwrap(), vec![Dim::T, Dim::X], 2),
        (JetBasis::plane(2).unwrap(), vec![Dim::X, Dim::Y], 2),
        (JetBasis::plane_time().unwrap(), vec![Dim::T, Dim::X, Dim::Y], 3),
        (JetBasis::value_only(), vec![Dim::T, Dim::X], 2),
    ];

    let mut out = Vec::new();
    for (i, spec) in specs.into_iter().enumerate() {
        let (basis, dims, input_dim) = &bases[i % bases.len()];
        let output_dim = 1 + i % 2;
        let config = MlpConfig::new(*input_dim, 3, 6, output_dim, spec);
        let store = init_xavier(&config, 1000 + i as u64).unwrap();
        out.push(Case {
            config,
            store,
            basis: basis.clone(),
            dims: dims.clone(),
        });
    }
    out
}

fn random_coords(n: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n * dims).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn forward_matches_scalar_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in cases() {
        let n = 17;
        let coords = random_coords(n, case.dims.len(), &mut rng);
        let phase = Phase::new(case.basis.clone(), case.dims.clone(), coords.clone());
        let eval = forward_phase(&case.store, &case.config, &phase).unwrap();
        for p in 0..n {
            let inputs: Vec<Jet<f64>> = case
                .dims
                .iter()
                .enumerate()
                .map(|(i, d)| Jet::lift(&case.basis, *d, coords[p * case.dims.len() + i]))
                .collect();
            let scalar =
                forward_jet(&PlainEnv(&case.store), &case.store, &case.config, &inputs).unwrap();
            for (o, jet) in scalar.iter().enumerate() {
                for (c, coeff) in jet.coeffs().iter().enumerate() {
                    let got = eval.coeff(o, c, p);
                    let tol = 1e-12 * coeff.abs().max(1.0);
                    assert!(
                        (got - coeff).abs() <= tol,
                        "case {:?} point {p} out {o} coeff {c}: batch {got} scalar {coeff}",
                        case.config.activations[0]
                    );
                }
            }
        }
    }
}

#[test]
fn gradients_match_scalar_tape_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in cases() {
        let n = 5;
        let coords = random_coords(n, case.dims.len(), &mut rng);
        let k = case.basis.len();
        let nout = case.config.output_dim;
        // Random linear functional over all output jet coefficients.
        let wts: Vec<f64> = (0..n * k * nout).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Batched gradient.
        let phase = Phase::new(case.basis.clone(), case.dims.clone(), coords.clone());
        let eval = forward_phase(&case.store, &case.config, &phase).unwrap();
        let mut seed = eval.new_seed();
        for p in 0..n {
            for o in 0..nout {
                for c in 0..k {
                    seed.accumulate(o, c, p, wts[(p * nout + o) * k + c]);
                }
            }
        }
        let mut grad = vec![0.0; case.store.len()];
        backward_phase(&case.store, &case.config, &phase, &eval, &seed, &mut grad).unwrap();

        // Scalar tape gradient of the same functional.
        let tape = Tape::new();
        let env = TapeEnv { tape: &tape, store: &case.store };
        let mut loss = tape.leaf(0.0);
        for p in 0..n {
            let inputs: Vec<Jet<_>> = case
                .dims
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    Jet::lift(&case.basis, *d, tape.leaf(coords[p * case.dims.len() + i]))
                })
                .collect();
            let outs = forward_jet(&env, &case.store, &case.config, &inputs).unwrap();
            for (o, jet) in outs.iter().enumerate() {
                for (c, coeff) in jet.coeffs().iter().enumerate() {
                    loss = loss + *coeff * wts[(p * nout + o) * k + c];
                }
            }
        }
        let tape_grad = tape.gradient(loss, case.store.len()).unwrap();

        let scale: f64 =
            grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
        for (i, (a, b)) in grad.iter().zip(tape_grad.as_slice()).enumerate() {
            assert!(
                (a - b).abs() <= 1e-10 * scale,
                "case {:?} param {i}: batch {a} tape {b}",
                case.config.activations[0]
            );
        }

        // Spot-check against central differences on a parameter subsample.
        let functional = |store: &ParameterStore| -> f64 {
            let phase = Phase::new(case.basis.clone(), case.dims.clone(), coords.clone());
            let eval = forward_phase(store, &case.config, &phase).unwrap();
            let mut acc = 0.0;
            for p in 0..n {
                for o in 0..nout {
                    for c in 0..k {
                        acc += eval.coeff(o, c, p) * wts[(p * nout + o) * k + c];
                    }
                }
            }
            acc
        };
        let mut store = case.store.clone();
        let step = case.store.len() / 7 + 1;
        for i in (0..case.store.len()).step_by(step) {
            let h = 1e-6;
            let orig = store.get(i);
            store.set(i, orig + h);
            let fp = functional(&store);
            store.set(i, orig - h);
            let fm = functional(&store);
            store.set(i, orig);
            let fd = (fp - fm) / (2.0 * h);
            let tol = 1e-5 * fd.abs().max(scale.max(1.0));
            assert!(
                (grad[i] - fd).abs() <= tol,
                "case {:?} param {i}: batch {} fd {fd}",
                case.config.activations[0],
                grad[i]
            );
        }
    }
}

#[test]
fn multi_block_phases_match_single_pass() {
    // More points than one block; exercise the parallel path and the
    // deterministic ordered reduction.
    let config = MlpConfig::new(
        2,
        3,
        8,
        1,
        parse_activation("abu(candidates=[sin,tanh,gelu], slopes=true)").unwrap(),
    );
    let store = init_xavier(&config, 5).unwrap();
    let basis = JetBasis::spacetime1(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2500;
    let coords = random_coords(n, 2, &mut rng);
    let phase = Phase::new(basis.clone(), vec![Dim::T, Dim::X], coords.clone());
    let eval = forward_phase(&store, &config, &phase).unwrap();

    // Values must equal the scalar path at block boundaries and beyond.
    for p in [0usize, 1023, 1024, 1025, 2047, 2048, 2499] {
        let inputs: Vec<Jet<f64>> = [Dim::T, Dim::X]
            .iter()
            .enumerate()
            .map(|(i, d)| Jet::lift(&basis, *d, coords[p * 2 + i]))
            .collect();
        let scalar = forward_jet(&PlainEnv(&store), &store, &config, &inputs).unwrap();
        for (c, coeff) in scalar[0].coeffs().iter().enumerate() {
            assert!((eval.coeff(0, c, p) - coeff).abs() <= 1e-12 * coeff.abs().max(1.0));
        }
    }

    // Gradient determinism across repeated runs.
    let run = || {
        let eval = forward_phase(&store, &config, &phase).unwrap();
        let mut seed = eval.new_seed();
        for p in 0..n {
            for c in 0..basis.len() {
                seed.accumulate(0, c, p, (p % 7) as f64 * 0.1 - 0.3 + c as f64 * 0.01);
            }
        }
        let mut grad = vec![0.0; store.len()];
        backward_phase(&store, &config, &phase, &eval, &seed, &mut grad).unwrap();
        grad
    };
    let g1 = run();
    let g2 = run();
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
