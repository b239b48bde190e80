//! Cross-validation of the reference solvers: spectral self-convergence,
//! physical sanity of the phase-field solution, and agreement between the
//! quadrature and spectral routes for the viscous advection equation.

use pinn_core::reference::{spectral_solve, ColeHopf, SpectralProblem, SpectralSettings};

fn slices(n: usize) -> Vec<f64> {
    (1..=n).map(|j| j as f64 / n as f64).collect()
}

fn max_diff(a: &pinn_core::reference::ReferenceGrid, b: &pinn_core::reference::ReferenceGrid) -> f64 {
    assert_eq!(a.values.len(), b.values.len());
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn spectral_self_convergence() {
    let ts = slices(12);
    // Phase-field reaction–diffusion: 1e-6 in max norm.
    let ac = SpectralProblem::AllenCahn { diffusion: 0.001 };
    let coarse =
        spectral_solve(&ac, &SpectralSettings { modes: 512, dt: 2.5e-4 }, &ts, 256).unwrap();
    let fine =
        spectral_solve(&ac, &SpectralSettings { modes: 1024, dt: 1.25e-4 }, &ts, 256).unwrap();
    let d = max_diff(&coarse, &fine);
    assert!(d <= 1e-6, "phase-field self-convergence {d}");

    // Linear convection: bandlimited, machine-exact.
    let cv = SpectralProblem::Convection { speed: 64.0 };
    let coarse =
        spectral_solve(&cv, &SpectralSettings { modes: 512, dt: 2.5e-4 }, &ts, 256).unwrap();
    let fine =
        spectral_solve(&cv, &SpectralSettings { modes: 1024, dt: 1.25e-4 }, &ts, 256).unwrap();
    let d = max_diff(&coarse, &fine);
    assert!(d <= 1e-6, "convection self-convergence {d}");

    // Dispersive and interface problems: 1e-5.
    let kdv = SpectralProblem::Kdv { advection: 1.0, dispersion: 0.0025 };
    let coarse =
        spectral_solve(&kdv, &SpectralSettings { modes: 512, dt: 1e-4 }, &ts, 256).unwrap();
    let fine =
        spectral_solve(&kdv, &SpectralSettings { modes: 1024, dt: 5e-5 }, &ts, 256).unwrap();
    let d = max_diff(&coarse, &fine);
    assert!(d <= 1e-5, "dispersive self-convergence {d}");

    let ch = SpectralProblem::CahnHilliard { interface: 0.02, mobility: 1.0 };
    let coarse =
        spectral_solve(&ch, &SpectralSettings { modes: 512, dt: 1e-4 }, &ts, 256).unwrap();
    let fine =
        spectral_solve(&ch, &SpectralSettings { modes: 1024, dt: 5e-5 }, &ts, 256).unwrap();
    let d = max_diff(&coarse, &fine);
    assert!(d <= 1e-5, "interface self-convergence {d}");
}

#[test]
fn phase_field_respects_the_maximum_principle() {
    let ts = slices(20);
    let ac = SpectralProblem::AllenCahn { diffusion: 0.001 };
    let g = spectral_solve(&ac, &SpectralSettings { modes: 512, dt: 2.5e-4 }, &ts, 256).unwrap();
    let bound = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(bound <= 1.01, "solution escaped [-1.01, 1.01]: {bound}");
}

#[test]
fn quadrature_and_spectral_solutions_agree_away_from_the_shock() {
    let nu = 0.01 / std::f64::consts::PI;
    let ch = ColeHopf::new(nu, 160);
    let ts: Vec<f64> = (1..=9).map(|j| 0.1 * j as f64).collect();
    let g = spectral_solve(
        &SpectralProblem::Burgers { viscosity: nu },
        &SpectralSettings { modes: 1024, dt: 1e-4 },
        &ts,
        256,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for (ti, &t) in g.t.iter().enumerate() {
        for (xi, &x) in g.x.iter().enumerate() {
            // The steep front lives near x = 0.
            if x.abs() < 0.15 {
                continue;
            }
            let diff = (g.value(ti, xi) - ch.eval(t, x)).abs();
            worst = worst.max(diff);
        }
    }
    assert!(worst <= 1e-3, "route disagreement {worst}");
}

#[test]
fn quadrature_reference_satisfies_the_pde() {
    // Differentiate the quadrature solution by Richardson finite differences
    // and plug into the residual.
    let nu = 0.01 / std::f64::consts::PI;
    let ch = ColeHopf::new(nu, 160);
    let fd1 = |f: &dyn Fn(f64) -> f64, z: f64| -> f64 {
        let d = |h: f64| (f(z + h) - f(z - h)) / (2.0 * h);
        let (d1, d2) = (d(1e-4), d(5e-5));
        (4.0 * d2 - d1) / 3.0
    };
    for (t, x) in [(0.5, 0.25), (0.3, -0.6), (0.8, 0.4), (0.9, 0.75)] {
        let u = ch.eval(t, x);
        let u_t = fd1(&|tt| ch.eval(tt, x), t);
        let u_x = fd1(&|xx| ch.eval(t, xx), x);
        let u_xx = fd1(&|xx| fd1(&|y| ch.eval(t, y), xx), x);
        let residual = u_t + u * u_x - nu * u_xx;
        assert!(residual.abs() <= 1e-4, "residual {residual} at ({t},{x})");
    }
}

#[test]
fn large_quadrature_rules_stay_consistent() {
    // The small-viscosity sweep needs rules in the several-hundred-node
    // range; they must agree with the converged 160-node rule where both
    // are valid and with each other where only the large ones are.
    let nu = 0.01 / std::f64::consts::PI;
    let base = ColeHopf::new(nu, 160);
    let big = ColeHopf::new(nu, 640);
    for (t, x) in [(0.5, 0.25), (1.0, 0.5), (0.2, -0.8)] {
        assert!((base.eval(t, x) - big.eval(t, x)).abs() <= 1e-9);
    }
    let nu_small = 0.001 / std::f64::consts::PI;
    let a = ColeHopf::new(nu_small, 384);
    let b = ColeHopf::new(nu_small, 768);
    for (t, x) in [(0.5, 0.25), (0.9, 0.6)] {
        assert!((a.eval(t, x) - b.eval(t, x)).abs() <= 1e-7);
    }
}
