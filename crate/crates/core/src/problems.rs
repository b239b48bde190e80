//! Benchmark problem registry: residual operators over jets, domains,
//! initial/boundary data, sampling plans, surrogates and reference sources.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::{Dim, Jet, JetBasis};
use crate::network::SurrogateKind;

/// Residual operators. Physical coefficients are passed as scalars so that
/// inverse problems can route tape variables through them.
pub mod residuals {
    use super::*;
    use crate::scalar::Scalar;

    /// u_xx − f(x) for the 1D elliptic problem; `source` is f at the point.
    pub fn poisson<S: Scalar>(u: &Jet<S>, source: S) -> S {
        u.d2(Dim::X) - source
    }

    /// u_t + speed·u_x
    pub fn convection<S: Scalar>(u: &Jet<S>, speed: S) -> S {
        u.d(Dim::T) + speed * u.d(Dim::X)
    }

    /// u_t + u·u_x − viscosity·u_xx
    pub fn burgers<S: Scalar>(u: &Jet<S>, viscosity: S) -> S {
        u.d(Dim::T) + u.value() * u.d(Dim::X) - viscosity * u.d2(Dim::X)
    }

    /// u_t − diffusion·u_xx − 5(u − u³)
    pub fn allen_cahn<S: Scalar>(u: &Jet<S>, diffusion: S) -> S {
        let u0 = u.value();
        u.d(Dim::T) - diffusion * u.d2(Dim::X) - (u0 - u0 * u0 * u0) * 5.0
    }

    /// u_t + advection·u·u_x + dispersion·u_xxx
    pub fn kdv<S: Scalar>(u: &Jet<S>, advection: S, dispersion: S) -> S {
        u.d(Dim::T) + advection * u.value() * u.d(Dim::X) + dispersion * u.d3(Dim::X)
    }

    /// Phase-space form of the fourth-order interface equation:
    /// r1 = u_t − ∂xx[−interface·mobility·h + mobility·(u³−u)],
    /// r2 = h − u_xx.
    /// The bracket's second derivative comes from jet algebra of the bracket
    /// itself, so both jets must carry x-derivatives to order 2.
    pub fn cahn_hilliard<S: Scalar>(u: &Jet<S>, h: &Jet<S>, interface: S, mobility: S) -> (S, S) {
        let u_cubed = u.mul(u).mul(u);
        let bulk = u_cubed.sub(u).scale(mobility);
        let bracket = h.scale(interface * mobility).neg().add(&bulk);
        let r1 = u.d(Dim::T) - bracket.d2(Dim::X);
        let r2 = h.value() - u.d2(Dim::X);
        (r1, r2)
    }

    /// Steady incompressible momentum + continuity:
    /// r1 = convective·(u·u_x + v·u_y) + p_x − viscosity·(u_xx + u_yy)
    /// r2 = convective·(u·v_x + v·v_y) + p_y − viscosity·(v_xx + v_yy)
    /// r3 = u_x + v_y
    pub fn ns_steady<S: Scalar>(
        u: &Jet<S>,
        v: &Jet<S>,
        p: &Jet<S>,
        convective: S,
        viscosity: S,
    ) -> (S, S, S) {
        let r1 = convective * (u.value() * u.d(Dim::X) + v.value() * u.d(Dim::Y)) + p.d(Dim::X)
            - viscosity * (u.d2(Dim::X) + u.d2(Dim::Y));
        let r2 = convective * (u.value() * v.d(Dim::X) + v.value() * v.d(Dim::Y)) + p.d(Dim::Y)
            - viscosity * (v.d2(Dim::X) + v.d2(Dim::Y));
        let r3 = u.d(Dim::X) + v.d(Dim::Y);
        (r1, r2, r3)
    }

    /// Unsteady momentum: the steady residuals plus u_t in the first
    /// equation and v_t in the second.
    pub fn ns_unsteady<S: Scalar>(
        u: &Jet<S>,
        v: &Jet<S>,
        p: &Jet<S>,
        convective: S,
        viscosity: S,
    ) -> (S, S, S) {
        let (r1, r2, r3) = ns_steady(u, v, p, convective, viscosity);
        (u.d(Dim::T) + r1, v.d(Dim::T) + r2, r3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoissonVariant {
    P1,
    P2,
}

/// Source term f(x) for the 1D elliptic benchmarks.
pub fn poisson_source(variant: PoissonVariant, x: f64) -> f64 {
    use std::f64::consts::PI;
    match variant {
        PoissonVariant::P1 => -(1..=20).map(|i| i as f64 * (i as f64 * x).sin()).sum::<f64>(),
        PoissonVariant::P2 => {
            (x * x * x - 2.0 * PI * x * x + (PI * PI + 3.0) * x - 2.0 * PI)
                * ((x - PI) * (x - PI) / 2.0).exp()
        }
    }
}

/// Initial profile u(0, x) for problems with an explicit initial-condition
/// loss term.
pub fn initial_profile(kind: &ProblemKind, x: f64) -> f64 {
    use std::f64::consts::PI;
    match kind {
        ProblemKind::Convection { .. } => x.sin(),
        ProblemKind::Burgers { .. } => -(PI * x).sin(),
        ProblemKind::CahnHilliard { .. } => (PI * x).cos() - (-4.0 * (PI * x) * (PI * x)).exp(),
        _ => panic!("{kind:?} has no explicit initial-condition term"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    Poisson { variant: PoissonVariant },
    Convection { speed: f64 },
    Burgers { viscosity: f64 },
    AllenCahn { diffusion: f64 },
    Kdv { advection: f64, dispersion: f64 },
    CahnHilliard { interface: f64, mobility: f64 },
    NsCavity { convective: f64, viscosity: f64 },
    NsCylinder { convective: f64, viscosity: f64 },
}

/// Space-time domain. `space` holds per-dimension bounds.
#[derive(Clone, Debug)]
pub struct Domain {
    pub time: Option<(f64, f64)>,
    pub space: Vec<(f64, f64)>,
}

impl Domain {
    pub fn contains(&self, coords: &[f64]) -> bool {
        let mut it = coords.iter();
        if let Some((t0, t1)) = self.time {
            let t = *it.next().unwrap();
            if t < t0 - 1e-12 || t > t1 + 1e-12 {
                return false;
            }
        }
        for (v, (lo, hi)) in it.zip(&self.space) {
            if *v < lo - 1e-12 || *v > hi + 1e-12 {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// i.i.d. uniform collocation points, equispaced initial grid.
    UniformRandom,
    /// Extra density near t = 0 given by `time_weighted` spans.
    TimeWeighted,
}

#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub n_ic: usize,
    pub n_bc: usize,
    pub n_r: usize,
    pub n_m: usize,
    pub strategy: SamplingStrategy,
    /// (t-interval, count) pairs for the time-weighted strategy.
    pub time_weighted: Vec<((f64, f64), usize)>,
    pub resample_each_iter: bool,
}

impl SamplingPlan {
    fn uniform(n_ic: usize, n_bc: usize, n_r: usize) -> Self {
        SamplingPlan {
            n_ic,
            n_bc,
            n_r,
            n_m: 0,
            strategy: SamplingStrategy::UniformRandom,
            time_weighted: Vec::new(),
            resample_each_iter: false,
        }
    }
}

/// Unknown physical coefficient recovered by an inverse run.
#[derive(Clone, Debug)]
pub struct UnknownParam {
    pub name: String,
    pub true_value: f64,
    pub init: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSource {
    ClosedForm,
    ColeHopf,
    Spectral,
    File,
}

#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub name: String,
    pub kind: ProblemKind,
    pub domain: Domain,
    pub surrogate: SurrogateKind,
    pub sampling: SamplingPlan,
    pub unknowns: Vec<UnknownParam>,
    pub reference: ReferenceSource,
    /// Network input dimensionality (time included when present).
    pub input_dim: usize,
    pub output_dim: usize,
    /// Jet truncation the residual needs.
    pub residual_order: usize,
}

impl PdeProblem {
    pub fn poisson(variant: PoissonVariant) -> Self {
        PdeProblem {
            name: match variant {
                PoissonVariant::P1 => "poisson_p1".into(),
                PoissonVariant::P2 => "poisson_p2".into(),
            },
            kind: ProblemKind::Poisson { variant },
            domain: Domain { time: None, space: vec![(0.0, std::f64::consts::PI)] },
            surrogate: SurrogateKind::Poisson1d,
            sampling: SamplingPlan::uniform(0, 0, 32),
            unknowns: Vec::new(),
            reference: ReferenceSource::ClosedForm,
            input_dim: 1,
            output_dim: 1,
            residual_order: 2,
        }
    }

    pub fn convection(speed: f64) -> Self {
        PdeProblem {
            name: "convection".into(),
            kind: ProblemKind::Convection { speed },
            domain: Domain {
                time: Some((0.0, 1.0)),
                space: vec![(0.0, 2.0 * std::f64::consts::PI)],
            },
            surrogate: SurrogateKind::None,
            sampling: SamplingPlan::uniform(512, 200, 6400),
            unknowns: Vec::new(),
            reference: ReferenceSource::ClosedForm,
            input_dim: 2,
            output_dim: 1,
            residual_order: 1,
        }
    }

    pub fn burgers(viscosity: f64) -> Self {
        PdeProblem {
            name: "burgers".into(),
            kind: ProblemKind::Burgers { viscosity },
            domain: Domain { time: Some((0.0, 1.0)), space: vec![(-1.0, 1.0)] },
            surrogate: SurrogateKind::None,
            sampling: SamplingPlan::uniform(256, 100, 5300),
            unknowns: Vec::new(),
            reference: ReferenceSource::ColeHopf,
            input_dim: 2,
            output_dim: 1,
            residual_order: 2,
        }
    }

    pub fn allen_cahn() -> Self {
        PdeProblem {
            name: "allen_cahn".into(),
            kind: ProblemKind::AllenCahn { diffusion: 0.001 },
            domain: Domain { time: Some((0.0, 1.0)), space: vec![(-1.0, 1.0)] },
            surrogate: SurrogateKind::AllenCahn,
            sampling: SamplingPlan::uniform(0, 0, 8000),
            unknowns: Vec::new(),
            reference: ReferenceSource::Spectral,
            input_dim: 2,
            output_dim: 1,
            residual_order: 2,
        }
    }

    pub fn kdv() -> Self {
        PdeProblem {
            name: "kdv".into(),
            kind: ProblemKind::Kdv { advection: 1.0, dispersion: 0.0025 },
            domain: Domain { time: Some((0.0, 1.0)), space: vec![(-1.0, 1.0)] },
            surrogate: SurrogateKind::Kdv,
            sampling: SamplingPlan::uniform(0, 200, 8000),
            unknowns: Vec::new(),
            reference: ReferenceSource::Spectral,
            input_dim: 2,
            output_dim: 1,
            residual_order: 3,
        }
    }

    /// The collocation budget follows the explicit near-initial split
    /// (4000 points in [0, 0.05), 8000 in [0.05, 1]).
    pub fn cahn_hilliard() -> Self {
        PdeProblem {
            name: "cahn_hilliard".into(),
            kind: ProblemKind::CahnHilliard { interface: 0.02, mobility: 1.0 },
            domain: Domain { time: Some((0.0, 1.0)), space: vec![(-1.0, 1.0)] },
            surrogate: SurrogateKind::None,
            sampling: SamplingPlan {
                n_ic: 256,
                n_bc: 100,
                n_r: 12000,
                n_m: 0,
                strategy: SamplingStrategy::TimeWeighted,
                time_weighted: vec![((0.0, 0.05), 4000), ((0.05, 1.0), 8000)],
                resample_each_iter: false,
            },
            unknowns: Vec::new(),
            reference: ReferenceSource::Spectral,
            input_dim: 2,
            output_dim: 2,
            residual_order: 2,
        }
    }

    pub fn ns_cavity() -> Self {
        PdeProblem {
            name: "ns_cavity".into(),
            kind: ProblemKind::NsCavity { convective: 1.0, viscosity: 0.01 },
            domain: Domain { time: None, space: vec![(0.0, 1.0), (0.0, 1.0)] },
            surrogate: SurrogateKind::None,
            sampling: SamplingPlan {
                n_ic: 0,
                n_bc: 512,
                n_r: 128,
                n_m: 0,
                strategy: SamplingStrategy::UniformRandom,
                time_weighted: Vec::new(),
                resample_each_iter: true,
            },
            unknowns: Vec::new(),
            reference: ReferenceSource::File,
            input_dim: 2,
            output_dim: 3,
            residual_order: 2,
        }
    }

    /// Inverse formulation: the convective coefficient and viscosity are
    /// trainables recovered from velocity measurements in the wake window.
    pub fn ns_cylinder() -> Self {
        PdeProblem {
            name: "ns_cylinder".into(),
            kind: ProblemKind::NsCylinder { convective: 1.0, viscosity: 0.01 },
            domain: Domain { time: Some((0.0, 20.0)), space: vec![(1.0, 8.0), (-2.0, 2.0)] },
            surrogate: SurrogateKind::None,
            sampling: SamplingPlan {
                n_ic: 0,
                n_bc: 0,
                n_r: 5000,
                n_m: 5000,
                strategy: SamplingStrategy::UniformRandom,
                time_weighted: Vec::new(),
                resample_each_iter: false,
            },
            unknowns: vec![
                UnknownParam { name: "convective".into(), true_value: 1.0, init: 0.0 },
                UnknownParam { name: "viscosity".into(), true_value: 0.01, init: 0.0 },
            ],
            reference: ReferenceSource::File,
            input_dim: 3,
            output_dim: 3,
            residual_order: 2,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "poisson_p1" => Self::poisson(PoissonVariant::P1),
            "poisson_p2" => Self::poisson(PoissonVariant::P2),
            "convection" => Self::convection(64.0),
            "burgers" => Self::burgers(0.01 / std::f64::consts::PI),
            "allen_cahn" => Self::allen_cahn(),
            "kdv" => Self::kdv(),
            "cahn_hilliard" => Self::cahn_hilliard(),
            "ns_cavity" => Self::ns_cavity(),
            "ns_cylinder" => Self::ns_cylinder(),
            _ => return Err(Error::config(format!("unknown problem '{name}'"))),
        })
    }

    pub fn time_dependent(&self) -> bool {
        self.domain.time.is_some()
    }

    /// Jet basis for residual evaluation.
    pub fn residual_basis(&self) -> Result<Arc<JetBasis>> {
        match self.kind {
            ProblemKind::Poisson { .. } => JetBasis::space1(2),
            ProblemKind::NsCavity { .. } => JetBasis::plane(2),
            ProblemKind::NsCylinder { .. } => JetBasis::plane_time(),
            _ => JetBasis::spacetime1(self.residual_order),
        }
    }

    /// Coordinate ordering for network inputs.
    pub fn coord_dims(&self) -> Vec<Dim> {
        if self.time_dependent() {
            crate::network::coord_dims(self.input_dim)
        } else {
            crate::network::coord_dims_steady(self.input_dim)
        }
    }
}

/// Sampled training data for one problem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetBundle {
    /// Full coordinate rows for collocation points.
    pub collocation: Vec<f64>,
    /// Spatial positions of initial-condition points.
    pub ic_x: Vec<f64>,
    /// Time samples for 1D boundary terms (walls or periodic pairs).
    pub bc_times: Vec<f64>,
    /// Boundary points for the 2D cavity: coordinate rows plus (u, v)
    /// targets.
    pub bc_points: Vec<f64>,
    pub bc_targets: Vec<f64>,
    /// Measurement rows (coords) and values for inverse problems.
    pub m_coords: Vec<f64>,
    pub m_values: Vec<f64>,
}

/// Draw the training point sets. Deterministic for a given seed.
pub fn sample(problem: &PdeProblem, seed: u64) -> DatasetBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundle = DatasetBundle::default();
    let plan = &problem.sampling;
    let (x_lo, x_hi) = problem.domain.space[0];

    match plan.strategy {
        SamplingStrategy::TimeWeighted => {
            for ((t0, t1), count) in &plan.time_weighted {
                for _ in 0..*count {
                    bundle.collocation.push(rng.gen_range(*t0..*t1));
                    bundle.collocation.push(rng.gen_range(x_lo..x_hi));
                }
            }
        }
        SamplingStrategy::UniformRandom => {
            for _ in 0..plan.n_r {
                if let Some((t0, t1)) = problem.domain.time {
                    bundle.collocation.push(rng.gen_range(t0..t1));
                }
                for (lo, hi) in &problem.domain.space {
                    bundle.collocation.push(rng.gen_range(*lo..*hi));
                }
            }
        }
    }

    // Initial-condition points: equispaced grid over space.
    if plan.n_ic > 0 {
        for i in 0..plan.n_ic {
            let x = x_lo + (x_hi - x_lo) * i as f64 / (plan.n_ic - 1) as f64;
            bundle.ic_x.push(x);
        }
    }

    match problem.kind {
        ProblemKind::NsCavity { .. } => {
            // n_bc split evenly over the four walls; the lid carries u = 1.
            let per_wall = plan.n_bc / 4;
            for wall in 0..4 {
                for _ in 0..per_wall {
                    let s = rng.gen_range(0.0..1.0);
                    let (x, y, u) = match wall {
                        0 => (s, 1.0, 1.0), // moving lid
                        1 => (s, 0.0, 0.0),
                        2 => (0.0, s, 0.0),
                        _ => (1.0, s, 0.0),
                    };
                    bundle.bc_points.extend_from_slice(&[x, y]);
                    bundle.bc_targets.extend_from_slice(&[u, 0.0]);
                }
            }
        }
        _ => {
            if plan.n_bc > 0 {
                let (t0, t1) = problem.domain.time.unwrap_or((0.0, 1.0));
                for _ in 0..plan.n_bc {
                    bundle.bc_times.push(rng.gen_range(t0..t1));
                }
            }
        }
    }

    bundle
}
