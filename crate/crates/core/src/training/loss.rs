//! Objective assembly: mean-squared initial/boundary/residual/measurement
//! terms with unit weights.
//!
//! The expensive network evaluation runs through the batched engine; the
//! per-point heads (surrogate composition, residual operators, squared
//! errors) are recorded on the scalar tape over the engine's output jets.
//! Backward therefore splits in two: the tape yields adjoints for every
//! output-jet coefficient and for any trainable physical coefficients, and
//! the engine pulls the coefficient adjoints back into network parameters.

use std::sync::Arc;

use crate::batch::{backward_phase, forward_phase, Phase, PhaseEval};
use crate::error::{Error, Result};
use crate::jet::{Dim, Jet, JetBasis};
use crate::network::{apply_surrogate, MlpConfig};
use crate::problems::{
    initial_profile, poisson_source, residuals, DatasetBundle, PdeProblem, ProblemKind,
};
use crate::store::ParameterStore;
use crate::tape::{GradientVector, Tape, Var};

/// Loss term values for one evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    pub total: f64,
    pub ic: f64,
    pub bc: f64,
    pub residual: f64,
    pub measure: f64,
}

/// Boundary-term shape per problem family.
pub enum BcPhases {
    None,
    /// Zero-valued walls, one point per boundary sample.
    DirichletWalls(Phase),
    /// Matched left/right evaluations at shared times; optionally also the
    /// first spatial derivative and the auxiliary output field.
    PeriodicPairs { left: Phase, right: Phase, with_slope: bool, with_aux: bool },
    /// Velocity targets on the cavity walls.
    Cavity { phase: Phase, targets: Vec<f64> },
}

/// Network evaluation batches for one dataset.
pub struct Phases {
    pub residual: Phase,
    pub ic: Option<Phase>,
    pub bc: BcPhases,
    pub measure: Option<MeasurePhase>,
}

pub struct MeasurePhase {
    pub phase: Phase,
    pub values: Vec<f64>,
    pub fields: usize,
}

impl Phases {
    pub fn build(problem: &PdeProblem, bundle: &DatasetBundle) -> Result<Phases> {
        let dims = problem.coord_dims();
        let residual =
            Phase::new(problem.residual_basis()?, dims.clone(), bundle.collocation.clone());

        let ic = if bundle.ic_x.is_empty() {
            None
        } else {
            let mut coords = Vec::with_capacity(bundle.ic_x.len() * 2);
            for &x in &bundle.ic_x {
                coords.push(0.0);
                coords.push(x);
            }
            Some(Phase::new(JetBasis::value_only(), dims.clone(), coords))
        };

        let bc = match &problem.kind {
            ProblemKind::Burgers { .. } => {
                if bundle.bc_times.is_empty() {
                    BcPhases::None
                } else {
                    let mut coords = Vec::new();
                    for (i, &t) in bundle.bc_times.iter().enumerate() {
                        let wall = if i % 2 == 0 { -1.0 } else { 1.0 };
                        coords.push(t);
                        coords.push(wall);
                    }
                    BcPhases::DirichletWalls(Phase::new(JetBasis::value_only(), dims.clone(), coords))
                }
            }
            ProblemKind::Convection { .. } => periodic_pairs(problem, bundle, false, false)?,
            ProblemKind::Kdv { .. } => periodic_pairs(problem, bundle, true, false)?,
            ProblemKind::CahnHilliard { .. } => periodic_pairs(problem, bundle, true, true)?,
            ProblemKind::NsCavity { .. } => {
                if bundle.bc_points.is_empty() {
                    BcPhases::None
                } else {
                    BcPhases::Cavity {
                        phase: Phase::new(
                            JetBasis::value_only(),
                            dims.clone(),
                            bundle.bc_points.clone(),
                        ),
                        targets: bundle.bc_targets.clone(),
                    }
                }
            }
            _ => BcPhases::None,
        };

        let measure = if bundle.m_coords.is_empty() {
            None
        } else {
            let fields = match problem.kind {
                ProblemKind::NsCylinder { .. } | ProblemKind::NsCavity { .. } => 2,
                _ => 1,
            };
            Some(MeasurePhase {
                phase: Phase::new(JetBasis::value_only(), dims.clone(), bundle.m_coords.clone()),
                values: bundle.m_values.clone(),
                fields,
            })
        };

        Ok(Phases { residual, ic, bc, measure })
    }
}

fn periodic_pairs(
    problem: &PdeProblem,
    bundle: &DatasetBundle,
    with_slope: bool,
    with_aux: bool,
) -> Result<BcPhases> {
    if bundle.bc_times.is_empty() {
        return Ok(BcPhases::None);
    }
    let dims = problem.coord_dims();
    let (lo, hi) = problem.domain.space[0];
    let basis = if with_slope { JetBasis::spacetime1(1)? } else { JetBasis::value_only() };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &t in &bundle.bc_times {
        left.push(t);
        left.push(lo);
        right.push(t);
        right.push(hi);
    }
    Ok(BcPhases::PeriodicPairs {
        left: Phase::new(basis.clone(), dims.clone(), left),
        right: Phase::new(basis, dims, right),
        with_slope,
        with_aux,
    })
}

/// Physical coefficients of the residual operator, in the order fixed by
/// the problem kind. Unknowns become parameter leaves so gradients flow
/// into them; the rest are constants.
fn phys_scalars<'t>(
    tape: &'t Tape,
    store: &ParameterStore,
    problem: &PdeProblem,
) -> Result<Vec<Var<'t>>> {
    let (names, defaults): (Vec<&str>, Vec<f64>) = match &problem.kind {
        ProblemKind::Poisson { .. } => (vec![], vec![]),
        ProblemKind::Convection { speed } => (vec!["speed"], vec![*speed]),
        ProblemKind::Burgers { viscosity } => (vec!["viscosity"], vec![*viscosity]),
        ProblemKind::AllenCahn { diffusion } => (vec!["diffusion"], vec![*diffusion]),
        ProblemKind::Kdv { advection, dispersion } => {
            (vec!["advection", "dispersion"], vec![*advection, *dispersion])
        }
        ProblemKind::CahnHilliard { interface, mobility } => {
            (vec!["interface", "mobility"], vec![*interface, *mobility])
        }
        ProblemKind::NsCavity { convective, viscosity }
        | ProblemKind::NsCylinder { convective, viscosity } => {
            (vec!["convective", "viscosity"], vec![*convective, *viscosity])
        }
    };
    let phys_range = store.segment_range("phys");
    names
        .iter()
        .zip(defaults)
        .map(|(name, default)| {
            match problem.unknowns.iter().position(|u| u.name == *name) {
                Some(i) => {
                    let range = phys_range.clone().ok_or_else(|| {
                        Error::config("problem has unknowns but store lacks a phys segment")
                    })?;
                    Ok(tape.param(store.get(range.start + i), range.start + i))
                }
                None => Ok(tape.leaf(default)),
            }
        })
        .collect()
}

/// Output jets of one evaluated point as tape leaves, recorded in
/// (point, output, coefficient) order in `leaves`.
fn point_jets<'t>(
    tape: &'t Tape,
    eval: &PhaseEval,
    basis: &Arc<JetBasis>,
    n_out: usize,
    p: usize,
    leaves: &mut Vec<Var<'t>>,
) -> Vec<Jet<Var<'t>>> {
    (0..n_out)
        .map(|o| {
            let coeffs: Vec<Var<'t>> = (0..basis.len())
                .map(|c| {
                    let v = tape.leaf(eval.coeff(o, c, p));
                    leaves.push(v);
                    v
                })
                .collect();
            Jet::from_coeffs(basis.clone(), coeffs)
        })
        .collect()
}

/// Coordinate jets for one point (constants with derivative seeds).
fn coord_jets<'t>(
    tape: &'t Tape,
    basis: &Arc<JetBasis>,
    dims: &[Dim],
    phase: &Phase,
    p: usize,
) -> Vec<Jet<Var<'t>>> {
    dims.iter()
        .enumerate()
        .map(|(i, d)| Jet::lift(basis, *d, tape.leaf(phase.coord(p, i))))
        .collect()
}

/// The surrogate-applied primary field for one point.
fn surrogate_field<'t>(
    problem: &PdeProblem,
    raw: &Jet<Var<'t>>,
    coords: &[Jet<Var<'t>>],
) -> Result<Jet<Var<'t>>> {
    let (t, x) = if problem.time_dependent() {
        (Some(&coords[0]), &coords[1])
    } else {
        (None, &coords[0])
    };
    apply_surrogate(problem.surrogate, raw, t, x)
}

struct TapedPhase<'a, 't> {
    phase: &'a Phase,
    eval: PhaseEval,
    leaves: Vec<Var<'t>>,
}

/// Evaluate the loss, and optionally its exact gradient, at the store's
/// current parameters.
pub fn loss_and_grad(
    tape: &Tape,
    store: &ParameterStore,
    mlp: &MlpConfig,
    problem: &PdeProblem,
    phases: &Phases,
    want_grad: bool,
) -> Result<(LossParts, Option<GradientVector>)> {
    tape.reset();
    let dims = problem.coord_dims();
    let n_out = mlp.output_dim;

    let mut taped: Vec<TapedPhase> = Vec::new();
    let mut forward = |phase: &'_ Phase| -> Result<usize> {
        let eval = forward_phase(store, mlp, phase)?;
        // Lifetime gymnastics: the taped list is indexed, not borrowed.
        taped.push(TapedPhase {
            phase: unsafe { std::mem::transmute::<&Phase, &Phase>(phase) },
            eval,
            leaves: Vec::new(),
        });
        Ok(taped.len() - 1)
    };

    let phys = phys_scalars(tape, store, problem)?;

    // --- Residual term -----------------------------------------------------
    let ridx = forward(&phases.residual)?;
    let rbasis = phases.residual.basis.clone();
    let n_r = phases.residual.n_points();
    let mut l_res = tape.leaf(0.0);
    if n_r > 0 {
        let mut acc = tape.leaf(0.0);
        for p in 0..n_r {
            let coords = coord_jets(tape, &rbasis, &dims, &phases.residual, p);
            let (eval, leaves) = {
                let tp = &mut taped[ridx];
                (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
            };
            let raws = unsafe { point_jets(tape, &*eval, &rbasis, n_out, p, &mut *leaves) };
            let sq = residual_squares(problem, tape, &raws, &coords, &phys)?;
            acc = acc + sq;
        }
        l_res = acc / n_r as f64;
    }

    // --- Initial-condition term ---------------------------------------------
    let mut l_ic = tape.leaf(0.0);
    let mut ic_idx = None;
    if let Some(icp) = &phases.ic {
        let idx = forward(icp)?;
        ic_idx = Some(idx);
        let basis = icp.basis.clone();
        let n = icp.n_points();
        let mut acc = tape.leaf(0.0);
        for p in 0..n {
            let coords = coord_jets(tape, &basis, &dims, icp, p);
            let (eval, leaves) = {
                let tp = &mut taped[idx];
                (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
            };
            let raws = unsafe { point_jets(tape, &*eval, &basis, n_out, p, &mut *leaves) };
            let u = surrogate_field(problem, &raws[0], &coords)?;
            let x = icp.coord(p, 1);
            let d = u.value() - initial_profile(&problem.kind, x);
            acc = acc + d * d;
        }
        l_ic = acc / n as f64;
    }

    // --- Boundary term -------------------------------------------------------
    let mut l_bc = tape.leaf(0.0);
    let mut bc_idx: Vec<usize> = Vec::new();
    match &phases.bc {
        BcPhases::None => {}
        BcPhases::DirichletWalls(bcp) => {
            let idx = forward(bcp)?;
            bc_idx.push(idx);
            let basis = bcp.basis.clone();
            let n = bcp.n_points();
            let mut acc = tape.leaf(0.0);
            for p in 0..n {
                let coords = coord_jets(tape, &basis, &dims, bcp, p);
                let (eval, leaves) = {
                    let tp = &mut taped[idx];
                    (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
                };
                let raws = unsafe { point_jets(tape, &*eval, &basis, n_out, p, &mut *leaves) };
                let u = surrogate_field(problem, &raws[0], &coords)?;
                acc = acc + u.value() * u.value();
            }
            l_bc = acc / n as f64;
        }
        BcPhases::PeriodicPairs { left, right, with_slope, with_aux } => {
            let li = forward(left)?;
            let ri = forward(right)?;
            bc_idx.push(li);
            bc_idx.push(ri);
            let basis = left.basis.clone();
            let n = left.n_points();
            let mut acc = tape.leaf(0.0);
            for p in 0..n {
                let lc = coord_jets(tape, &basis, &dims, left, p);
                let rc = coord_jets(tape, &basis, &dims, right, p);
                let (le, ll) = {
                    let tp = &mut taped[li];
                    (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
                };
                let lraw = unsafe { point_jets(tape, &*le, &basis, n_out, p, &mut *ll) };
                let (re, rl) = {
                    let tp = &mut taped[ri];
                    (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
                };
                let rraw = unsafe { point_jets(tape, &*re, &basis, n_out, p, &mut *rl) };
                let lu = surrogate_field(problem, &lraw[0], &lc)?;
                let ru = surrogate_field(problem, &rraw[0], &rc)?;
                let d = lu.value() - ru.value();
                let mut sq = d * d;
                if *with_slope {
                    let d = lu.d(Dim::X) - ru.d(Dim::X);
                    sq = sq + d * d;
                }
                if *with_aux && n_out > 1 {
                    let d = lraw[1].value() - rraw[1].value();
                    sq = sq + d * d;
                    if *with_slope {
                        let d = lraw[1].d(Dim::X) - rraw[1].d(Dim::X);
                        sq = sq + d * d;
                    }
                }
                acc = acc + sq;
            }
            l_bc = acc / n as f64;
        }
        BcPhases::Cavity { phase, targets } => {
            let idx = forward(phase)?;
            bc_idx.push(idx);
            let basis = phase.basis.clone();
            let n = phase.n_points();
            let mut acc = tape.leaf(0.0);
            for p in 0..n {
                let (eval, leaves) = {
                    let tp = &mut taped[idx];
                    (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
                };
                let raws = unsafe { point_jets(tape, &*eval, &basis, n_out, p, &mut *leaves) };
                let du = raws[0].value() - targets[2 * p];
                let dv = raws[1].value() - targets[2 * p + 1];
                acc = acc + du * du + dv * dv;
            }
            l_bc = acc / n as f64;
        }
    }

    // --- Measurement term ----------------------------------------------------
    let mut l_m = tape.leaf(0.0);
    let mut m_idx = None;
    if let Some(mp) = &phases.measure {
        let idx = forward(&mp.phase)?;
        m_idx = Some(idx);
        let basis = mp.phase.basis.clone();
        let n = mp.phase.n_points();
        let mut acc = tape.leaf(0.0);
        for p in 0..n {
            let coords = coord_jets(tape, &basis, &dims, &mp.phase, p);
            let (eval, leaves) = {
                let tp = &mut taped[idx];
                (&tp.eval as *const PhaseEval, &mut tp.leaves as *mut Vec<Var>)
            };
            let raws = unsafe { point_jets(tape, &*eval, &basis, n_out, p, &mut *leaves) };
            for f in 0..mp.fields {
                let pred = if f == 0 {
                    surrogate_field(problem, &raws[0], &coords)?.value()
                } else {
                    raws[f].value()
                };
                let d = pred - mp.values[p * mp.fields + f];
                acc = acc + d * d;
            }
        }
        l_m = acc / n as f64;
    }

    let total = l_res + l_ic + l_bc + l_m;
    let parts = LossParts {
        total: total.value(),
        ic: l_ic.value(),
        bc: l_bc.value(),
        residual: l_res.value(),
        measure: l_m.value(),
    };
    if !parts.total.is_finite() {
        return Err(Error::numeric("loss", format!("total loss {} not finite", parts.total)));
    }

    if !want_grad {
        return Ok((parts, None));
    }

    // Reverse pass: tape adjoints seed the engine backward per phase.
    let adjoints = tape.backward(total)?;
    let mut grad = tape.gradient(total, store.len())?;
    let _ = &adjoints;
    let order_hint = [Some(ridx), ic_idx, m_idx];
    let mut all_indices: Vec<usize> = Vec::new();
    all_indices.push(ridx);
    if let Some(i) = ic_idx {
        all_indices.push(i);
    }
    all_indices.extend(&bc_idx);
    if let Some(i) = m_idx {
        all_indices.push(i);
    }
    let _ = order_hint;
    all_indices.sort_unstable();
    all_indices.dedup();
    for idx in all_indices {
        let tp = &taped[idx];
        let basis_len = tp.phase.basis.len();
        let mut seed = tp.eval.new_seed();
        let mut li = 0;
        for p in 0..tp.phase.n_points() {
            for o in 0..n_out {
                for c in 0..basis_len {
                    let a = adjoints.wrt(tp.leaves[li]);
                    li += 1;
                    if a != 0.0 {
                        seed.accumulate(o, c, p, a);
                    }
                }
            }
        }
        backward_phase(store, mlp, tp.phase, &tp.eval, &seed, grad.entries.as_mut_slice())?;
    }

    Ok((parts, Some(grad)))
}

/// Sum of squared residual components at one point.
fn residual_squares<'t>(
    problem: &PdeProblem,
    tape: &'t Tape,
    raws: &[Jet<Var<'t>>],
    coords: &[Jet<Var<'t>>],
    phys: &[Var<'t>],
) -> Result<Var<'t>> {
    let u = surrogate_field(problem, &raws[0], coords)?;
    Ok(match &problem.kind {
        ProblemKind::Poisson { variant } => {
            let x = coords[0].value().value();
            let r = residuals::poisson(&u, tape.leaf(poisson_source(*variant, x)));
            r * r
        }
        ProblemKind::Convection { .. } => {
            let r = residuals::convection(&u, phys[0]);
            r * r
        }
        ProblemKind::Burgers { .. } => {
            let r = residuals::burgers(&u, phys[0]);
            r * r
        }
        ProblemKind::AllenCahn { .. } => {
            let r = residuals::allen_cahn(&u, phys[0]);
            r * r
        }
        ProblemKind::Kdv { .. } => {
            let r = residuals::kdv(&u, phys[0], phys[1]);
            r * r
        }
        ProblemKind::CahnHilliard { .. } => {
            let (r1, r2) = residuals::cahn_hilliard(&u, &raws[1], phys[0], phys[1]);
            r1 * r1 + r2 * r2
        }
        ProblemKind::NsCavity { .. } => {
            let (r1, r2, r3) = residuals::ns_steady(&raws[0], &raws[1], &raws[2], phys[0], phys[1]);
            r1 * r1 + r2 * r2 + r3 * r3
        }
        ProblemKind::NsCylinder { .. } => {
            let (r1, r2, r3) =
                residuals::ns_unsteady(&raws[0], &raws[1], &raws[2], phys[0], phys[1]);
            r1 * r1 + r2 * r2 + r3 * r3
        }
    })
}
