//! Batched network evaluation: the training hot path.
//!
//! The scalar jet forward in [`crate::network`] evaluates one point at a
//! time and records every multiply on the tape; that is exact but far too
//! slow for tens of thousands of optimizer steps. This module evaluates the
//! same affine/activation chain for a whole point batch at once, in
//! structure-of-arrays layout, and back-propagates output-jet adjoints into
//! the parameter store with hand-written vector-Jacobian products driven by
//! the same jet tables.
//!
//! Layout: one matrix per layer of shape (units × K·n), where K is the jet
//! basis size and column `c·n + p` holds coefficient `c` of point `p`. The
//! affine map acts identically on every coefficient, so each layer is a
//! single matrix product; activations walk unit rows and compose jets
//! point-wise via the basis tables.
//!
//! Points are processed in fixed-size blocks. Blocks run in parallel but
//! gradients reduce in block order, so results do not depend on the number
//! of worker threads.
//!
//! Equivalence with the scalar path (values, jets and parameter gradients)
//! is pinned by `tests/batch_consistency.rs`.

use std::ops::Range;
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rayon::prelude::*;

use crate::activation::{
    blend_stack, gate_vjp, gate_weights, ActivationSpec, Granularity, MAX_STACK,
};
use crate::error::{Error, Result};
use crate::jet::{Dim, JetBasis};
use crate::network::MlpConfig;
use crate::scalar::Dual;
use crate::store::ParameterStore;

/// Points per parallel block; fixed so results are independent of thread
/// count.
pub const BLOCK: usize = 1024;

/// One network evaluation batch: a jet basis, a coordinate ordering, and a
/// flat coordinate table (`n × dims.len()`).
#[derive(Clone, Debug)]
pub struct Phase {
    pub basis: Arc<JetBasis>,
    pub dims: Vec<Dim>,
    pub coords: Vec<f64>,
}

impl Phase {
    pub fn new(basis: Arc<JetBasis>, dims: Vec<Dim>, coords: Vec<f64>) -> Self {
        assert!(!dims.is_empty() && coords.len() % dims.len() == 0);
        Phase { basis, dims, coords }
    }

    pub fn n_points(&self) -> usize {
        self.coords.len() / self.dims.len()
    }

    pub fn coord(&self, p: usize, i: usize) -> f64 {
        self.coords[p * self.dims.len() + i]
    }
}

struct LayerOffsets {
    w: Range<usize>,
    b: Range<usize>,
    act: Option<Range<usize>>,
    fan_in: usize,
    fan_out: usize,
}

fn layer_offsets(store: &ParameterStore, config: &MlpConfig) -> Result<Vec<LayerOffsets>> {
    config
        .layer_dims()
        .into_iter()
        .enumerate()
        .map(|(l, (fan_in, fan_out))| {
            let w = store
                .segment_range(&format!("w{l}"))
                .ok_or_else(|| Error::config(format!("store missing w{l}")))?;
            let b = store
                .segment_range(&format!("b{l}"))
                .ok_or_else(|| Error::config(format!("store missing b{l}")))?;
            let act = if l + 1 < config.depth && config.activations[l].unit_param_count() > 0 {
                Some(
                    store
                        .segment_range(&format!("act{l}"))
                        .ok_or_else(|| Error::config(format!("store missing act{l}")))?,
                )
            } else {
                None
            };
            Ok(LayerOffsets { w, b, act, fan_in, fan_out })
        })
        .collect()
}

struct BlockCache {
    /// Input of every weight layer; `xs[0]` is the coordinate seed.
    xs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    us: Vec<Array2<f64>>,
    out: Array2<f64>,
    n: usize,
}

/// Forward result over a phase, with everything backward needs cached.
pub struct PhaseEval {
    blocks: Vec<BlockCache>,
    k: usize,
    n: usize,
    output_dim: usize,
}

impl PhaseEval {
    pub fn n_points(&self) -> usize {
        self.n
    }

    /// Jet coefficient `c` of output field `out` at point `p`.
    pub fn coeff(&self, out: usize, c: usize, p: usize) -> f64 {
        let (b, off) = (p / BLOCK, p % BLOCK);
        let blk = &self.blocks[b];
        blk.out[[out, c * blk.n + off]]
    }

    /// Zeroed adjoint buffers matching this evaluation's layout.
    pub fn new_seed(&self) -> PhaseSeed {
        PhaseSeed {
            mats: self
                .blocks
                .iter()
                .map(|b| Array2::zeros((self.output_dim, self.k * b.n)))
                .collect(),
            k: self.k,
        }
    }
}

/// Adjoints of the network output jets, to be pulled back through the net.
pub struct PhaseSeed {
    mats: Vec<Array2<f64>>,
    k: usize,
}

impl PhaseSeed {
    /// Add an adjoint contribution for coefficient `c` of output `out` at
    /// point `p`.
    pub fn accumulate(&mut self, out: usize, c: usize, p: usize, v: f64) {
        let (b, off) = (p / BLOCK, p % BLOCK);
        let m = &mut self.mats[b];
        let nb = m.ncols() / self.k;
        m[[out, c * nb + off]] += v;
    }
}

/// Evaluate the network over a phase.
pub fn forward_phase(
    store: &ParameterStore,
    config: &MlpConfig,
    phase: &Phase,
) -> Result<PhaseEval> {
    if phase.basis.max_order() > config.jet_order_limit() {
        return Err(Error::config(format!(
            "network activations cannot drive order-{} jets",
            phase.basis.max_order()
        )));
    }
    let offsets = layer_offsets(store, config)?;
    let n = phase.n_points();
    let ranges: Vec<Range<usize>> =
        (0..n.div_ceil(BLOCK)).map(|b| b * BLOCK..((b + 1) * BLOCK).min(n)).collect();
    let blocks: Result<Vec<BlockCache>> = if ranges.len() > 1 {
        ranges
            .par_iter()
            .map(|r| forward_block(store, config, &offsets, phase, r.clone()))
            .collect()
    } else {
        ranges.iter().map(|r| forward_block(store, config, &offsets, phase, r.clone())).collect()
    };
    Ok(PhaseEval { blocks: blocks?, k: phase.basis.len(), n, output_dim: config.output_dim })
}

fn w_view<'a>(store: &'a ParameterStore, off: &LayerOffsets) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((off.fan_out, off.fan_in), &store.values()[off.w.clone()])
        .expect("weight segment shape")
}

fn forward_block(
    store: &ParameterStore,
    config: &MlpConfig,
    offsets: &[LayerOffsets],
    phase: &Phase,
    range: Range<usize>,
) -> Result<BlockCache> {
    let k = phase.basis.len();
    let nb = range.len();
    let mut x = Array2::<f64>::zeros((config.input_dim, k * nb));
    for (i, d) in phase.dims.iter().enumerate() {
        for (j, p) in range.clone().enumerate() {
            x[[i, j]] = phase.coord(p, i);
        }
        if let Some(c) = phase.basis.first_deriv_pos(*d) {
            for j in 0..nb {
                x[[i, c * nb + j]] = 1.0;
            }
        }
    }

    let mut xs = Vec::with_capacity(config.depth);
    let mut us = Vec::with_capacity(config.depth - 1);
    for (l, off) in offsets.iter().enumerate() {
        let w = w_view(store, off);
        let mut z = Array2::<f64>::zeros((off.fan_out, k * nb));
        general_mat_mul(1.0, &w, &x, 0.0, &mut z);
        let bias = &store.values()[off.b.clone()];
        for (o, bo) in bias.iter().enumerate() {
            let mut row = z.slice_mut(s![o, 0..nb]);
            row += *bo;
        }
        xs.push(x);
        if l + 1 < config.depth {
            let spec = &config.activations[l];
            let mut y = Array2::<f64>::zeros((off.fan_out, k * nb));
            let act_params: &[f64] =
                off.act.clone().map(|r| &store.values()[r]).unwrap_or(&[]);
            activate_forward(spec, act_params, &phase.basis, &z, &mut y, nb)?;
            us.push(z);
            x = y;
        } else {
            x = z;
        }
    }
    Ok(BlockCache { xs, us, out: x, n: nb })
}

/// Per-unit parameter slice for the layer's granularity.
fn unit_slice<'a>(spec: &ActivationSpec, params: &'a [f64], unit: usize) -> &'a [f64] {
    let n = spec.unit_param_count();
    match spec.granularity() {
        Granularity::LayerWise => params,
        Granularity::NeuronWise => &params[unit * n..(unit + 1) * n],
    }
}

fn activate_forward(
    spec: &ActivationSpec,
    params: &[f64],
    basis: &JetBasis,
    u: &Array2<f64>,
    y: &mut Array2<f64>,
    nb: usize,
) -> Result<()> {
    let k = basis.len();
    let order = basis.max_order();
    let width = u.nrows();
    let uf = u.as_slice().expect("contiguous");
    let yf = y.as_slice_mut().expect("contiguous");
    let row = k * nb;
    let mut jin = [0.0f64; 8];
    let mut stack = [0.0f64; MAX_STACK];

    if let ActivationSpec::Abu { candidates, gate, slopes, .. } = spec {
        // Gate weights are per unit-group, not per point; hoist them.
        let ncand = candidates.len();
        for unit in 0..width {
            let ps = unit_slice(spec, params, unit);
            let w = gate_weights(*gate, &ps[..ncand])?;
            let sl: &[f64] = if *slopes { &ps[ncand..2 * ncand] } else { &[] };
            let base = unit * row;
            for p in 0..nb {
                for (c, j) in jin.iter_mut().enumerate().take(k) {
                    *j = uf[base + c * nb + p];
                }
                blend_stack(candidates, &w, sl, jin[0], order, &mut stack);
                compose_point(basis, &jin, &stack, &mut yf[base..base + row], nb, p);
            }
        }
    } else {
        for unit in 0..width {
            let ps = unit_slice(spec, params, unit);
            let base = unit * row;
            for p in 0..nb {
                for (c, j) in jin.iter_mut().enumerate().take(k) {
                    *j = uf[base + c * nb + p];
                }
                spec.stack(ps, jin[0], order, &mut stack)?;
                compose_point(basis, &jin, &stack, &mut yf[base..base + row], nb, p);
            }
        }
    }
    Ok(())
}

#[inline]
fn compose_point(
    basis: &JetBasis,
    jin: &[f64],
    stack: &[f64],
    yrow: &mut [f64],
    nb: usize,
    p: usize,
) {
    for out_c in 0..basis.len() {
        let mut acc = 0.0;
        for t in basis.comp_terms(out_c) {
            let mut v = stack[t.f_order] * t.coeff;
            for &f in &t.factors {
                v *= jin[f];
            }
            acc += v;
        }
        yrow[out_c * nb + p] = acc;
    }
}

/// Adjoint of the composition at one point: fills `dbar` (adjoint of each
/// stack entry) and `ubar` (adjoint of each input coefficient, including the
/// chain through the stack's dependence on the value coefficient).
#[inline]
fn compose_backward_point(
    basis: &JetBasis,
    jin: &[f64],
    stack: &[f64],
    ybar: &[f64],
    dbar: &mut [f64],
    ubar: &mut [f64; 8],
) {
    let k = basis.len();
    let order = basis.max_order();
    dbar[..order + 1].fill(0.0);
    ubar[..k].fill(0.0);
    for out_c in 0..k {
        let yb = ybar[out_c];
        if yb == 0.0 {
            continue;
        }
        for t in basis.comp_terms(out_c) {
            let mut prod = t.coeff;
            for &f in &t.factors {
                prod *= jin[f];
            }
            dbar[t.f_order] += yb * prod;
            for i in 0..t.factors.len() {
                let mut rest = yb * t.coeff * stack[t.f_order];
                for (j, &f) in t.factors.iter().enumerate() {
                    if j != i {
                        rest *= jin[f];
                    }
                }
                ubar[t.factors[i]] += rest;
            }
        }
    }
    for m in 0..=order {
        ubar[0] += dbar[m] * stack[m + 1];
    }
}

/// Pull output-jet adjoints back through the network, accumulating into
/// `grad` (length = store length). Deterministic: blocks reduce in order.
pub fn backward_phase(
    store: &ParameterStore,
    config: &MlpConfig,
    phase: &Phase,
    eval: &PhaseEval,
    seed: &PhaseSeed,
    grad: &mut [f64],
) -> Result<()> {
    let offsets = layer_offsets(store, config)?;
    let partials: Result<Vec<Vec<f64>>> = if eval.blocks.len() > 1 {
        eval.blocks
            .par_iter()
            .zip(seed.mats.par_iter())
            .map(|(blk, sm)| {
                let mut g = vec![0.0; store.len()];
                backward_block(store, config, &offsets, phase, blk, sm, &mut g)?;
                Ok(g)
            })
            .collect()
    } else {
        eval.blocks
            .iter()
            .zip(seed.mats.iter())
            .map(|(blk, sm)| {
                let mut g = vec![0.0; store.len()];
                backward_block(store, config, &offsets, phase, blk, sm, &mut g)?;
                Ok(g)
            })
            .collect()
    };
    for g in partials? {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(())
}

fn backward_block(
    store: &ParameterStore,
    config: &MlpConfig,
    offsets: &[LayerOffsets],
    phase: &Phase,
    blk: &BlockCache,
    seed: &Array2<f64>,
    grad: &mut [f64],
) -> Result<()> {
    let k = phase.basis.len();
    let nb = blk.n;
    let mut dz = seed.clone();
    for l in (0..config.depth).rev() {
        let off = &offsets[l];
        let x = &blk.xs[l];
        {
            let (before, rest) = grad.split_at_mut(off.w.end);
            let _ = rest;
            let gw = &mut before[off.w.clone()];
            let mut dw =
                ArrayViewMut2::from_shape((off.fan_out, off.fan_in), gw).expect("shape");
            general_mat_mul(1.0, &dz, &x.t(), 1.0, &mut dw);
        }
        {
            let db = dz.slice(s![.., 0..nb]).sum_axis(Axis(1));
            for (g, d) in grad[off.b.clone()].iter_mut().zip(db.iter()) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }
        let w = w_view(store, off);
        let mut dx = Array2::<f64>::zeros((off.fan_in, k * nb));
        general_mat_mul(1.0, &w.t(), &dz, 0.0, &mut dx);

        // Activation between U_{l-1} and X_l.
        let spec = &config.activations[l - 1];
        let act_off = &offsets[l - 1];
        let act_params: &[f64] =
            act_off.act.clone().map(|r| &store.values()[r]).unwrap_or(&[]);
        let mut du = Array2::<f64>::zeros((off.fan_in, k * nb));
        activate_backward(
            spec,
            act_params,
            &phase.basis,
            &blk.us[l - 1],
            &dx,
            &mut du,
            nb,
            act_off.act.clone().map(|r| r.start),
            grad,
        )?;
        dz = du;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn activate_backward(
    spec: &ActivationSpec,
    params: &[f64],
    basis: &JetBasis,
    u: &Array2<f64>,
    ybar: &Array2<f64>,
    ubar_out: &mut Array2<f64>,
    nb: usize,
    grad_start: Option<usize>,
    grad: &mut [f64],
) -> Result<()> {
    let k = basis.len();
    let order = basis.max_order();
    let width = u.nrows();
    let row = k * nb;
    let uf = u.as_slice().expect("contiguous");
    let yf = ybar.as_slice().expect("contiguous");
    let of = ubar_out.as_slice_mut().expect("contiguous");
    let unit_n = spec.unit_param_count();

    let mut jin = [0.0f64; 8];
    let mut yb = [0.0f64; 8];
    let mut ub = [0.0f64; 8];
    let mut stack = [0.0f64; MAX_STACK];
    let mut dbar = [0.0f64; MAX_STACK];

    let unit_grad_base = |unit: usize| {
        grad_start.map(|start| match spec.granularity() {
            Granularity::LayerWise => start,
            Granularity::NeuronWise => start + unit * unit_n,
        })
    };

    match spec {
        ActivationSpec::Standard(kind) => {
            for unit in 0..width {
                let base = unit * row;
                for p in 0..nb {
                    gather(uf, yf, base, nb, k, p, &mut jin, &mut yb);
                    kind.stack(jin[0], order + 1, &mut stack);
                    compose_backward_point(basis, &jin, &stack, &yb[..k], &mut dbar, &mut ub);
                    scatter(of, base, nb, k, p, &ub);
                }
            }
        }
        ActivationSpec::Abu { candidates, gate, slopes, .. } => {
            let ncand = candidates.len();
            let mut cand = vec![[0.0f64; MAX_STACK]; ncand];
            for unit in 0..width {
                let ps = unit_slice(spec, params, unit);
                let w = gate_weights(*gate, &ps[..ncand])?;
                let sl: &[f64] = if *slopes { &ps[ncand..2 * ncand] } else { &[] };
                let mut dw_acc = vec![0.0f64; ncand];
                let mut dbeta_acc = vec![0.0f64; ncand];
                let base = unit * row;
                for p in 0..nb {
                    gather(uf, yf, base, nb, k, p, &mut jin, &mut yb);
                    let u0 = jin[0];
                    stack.fill(0.0);
                    for (i, kind) in candidates.iter().enumerate() {
                        let b = if sl.is_empty() { 1.0 } else { sl[i] };
                        kind.stack(b * u0, order + 1, &mut cand[i]);
                        let mut scale = w[i];
                        for m in 0..=order + 1 {
                            stack[m] += scale * cand[i][m];
                            scale *= b;
                        }
                    }
                    compose_backward_point(basis, &jin, &stack, &yb[..k], &mut dbar, &mut ub);
                    scatter(of, base, nb, k, p, &ub);
                    for i in 0..ncand {
                        let b = if sl.is_empty() { 1.0 } else { sl[i] };
                        let mut bpow = 1.0; // b^m
                        let mut bpow_prev = 0.0; // b^(m-1), unused at m=0
                        let mut dwi = 0.0;
                        let mut dbi = 0.0;
                        for m in 0..=order {
                            dwi += dbar[m] * bpow * cand[i][m];
                            dbi += dbar[m]
                                * ((m as f64) * bpow_prev * cand[i][m]
                                    + bpow * cand[i][m + 1] * u0);
                            bpow_prev = bpow;
                            bpow *= b;
                        }
                        dw_acc[i] += dwi;
                        if !sl.is_empty() {
                            dbeta_acc[i] += w[i] * dbi;
                        }
                    }
                }
                if let Some(gbase) = unit_grad_base(unit) {
                    gate_vjp(*gate, &ps[..ncand], &w, &dw_acc, &mut grad[gbase..gbase + ncand]);
                    if !sl.is_empty() {
                        for (g, d) in
                            grad[gbase + ncand..gbase + 2 * ncand].iter_mut().zip(&dbeta_acc)
                        {
                            *g += d;
                        }
                    }
                }
            }
        }
        ActivationSpec::Slaf { order: deg, .. } => {
            for unit in 0..width {
                let ps = unit_slice(spec, params, unit);
                let base = unit * row;
                let gbase = unit_grad_base(unit);
                for p in 0..nb {
                    gather(uf, yf, base, nb, k, p, &mut jin, &mut yb);
                    spec.stack(ps, jin[0], order + 1, &mut stack)?;
                    compose_backward_point(basis, &jin, &stack, &yb[..k], &mut dbar, &mut ub);
                    scatter(of, base, nb, k, p, &ub);
                    if let Some(g0) = gbase {
                        let u0 = jin[0];
                        // ∂f^(m)/∂a_i = i·(i−1)···(i−m+1)·u0^(i−m)
                        for i in 0..=*deg {
                            let mut di = 0.0;
                            let mut fall = 1.0;
                            for m in 0..=order.min(i) {
                                di += dbar[m] * fall * u0.powi((i - m) as i32);
                                fall *= (i - m) as f64;
                            }
                            grad[g0 + i] += di;
                        }
                    }
                }
            }
        }
        _ => {
            // Rational / maxout: parameter derivatives via dual numbers.
            for unit in 0..width {
                let ps = unit_slice(spec, params, unit);
                let base = unit * row;
                let gbase = unit_grad_base(unit);
                let mut dual_params: Vec<Dual> = ps.iter().map(|&v| Dual::constant(v)).collect();
                let mut dual_stack = [Dual::constant(0.0); MAX_STACK];
                for p in 0..nb {
                    gather(uf, yf, base, nb, k, p, &mut jin, &mut yb);
                    spec.stack(ps, jin[0], order + 1, &mut stack)?;
                    compose_backward_point(basis, &jin, &stack, &yb[..k], &mut dbar, &mut ub);
                    scatter(of, base, nb, k, p, &ub);
                    if let Some(g0) = gbase {
                        let x0 = Dual::constant(jin[0]);
                        for j in 0..ps.len() {
                            dual_params[j].d = 1.0;
                            spec.stack(&dual_params, x0, order, &mut dual_stack)?;
                            let mut dj = 0.0;
                            for m in 0..=order {
                                dj += dbar[m] * dual_stack[m].d;
                            }
                            grad[g0 + j] += dj;
                            dual_params[j].d = 0.0;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[inline]
fn gather(
    uf: &[f64],
    yf: &[f64],
    base: usize,
    nb: usize,
    k: usize,
    p: usize,
    jin: &mut [f64; 8],
    yb: &mut [f64; 8],
) {
    for c in 0..k {
        jin[c] = uf[base + c * nb + p];
        yb[c] = yf[base + c * nb + p];
    }
}

#[inline]
fn scatter(of: &mut [f64], base: usize, nb: usize, k: usize, p: usize, ub: &[f64; 8]) {
    for c in 0..k {
        of[base + c * nb + p] = ub[c];
    }
}
