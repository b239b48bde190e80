//! Limited-memory BFGS with a strong-Wolfe line search (two-loop recursion,
//! cubic-interpolation zoom). Non-finite trial points are treated as
//! infinitely bad and backtracked over, which is what keeps the unstable
//! activation families from killing a whole run on one wild step.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub history: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 15_000,
            history: 50,
            grad_tol: 1e-9,
            step_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStop {
    MaxIters,
    GradTol,
    StepTol,
    LineSearchFailed,
}

impl LbfgsStop {
    pub fn name(&self) -> &'static str {
        match self {
            LbfgsStop::MaxIters => "max_iters",
            LbfgsStop::GradTol => "grad_tol",
            LbfgsStop::StepTol => "step_tol",
            LbfgsStop::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub stop: LbfgsStop,
    pub iters: usize,
    pub final_loss: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cubic interpolation of a step within [lo, hi] given endpoint values and
/// directional derivatives; falls back to bisection when the cubic has no
/// usable minimum.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let d2sq = d1 * d1 - da * db;
    if d2sq >= 0.0 {
        let d2 = d2sq.sqrt() * if b < a { -1.0 } else { 1.0 };
        let x = b - (b - a) * ((db + d2 - d1) / (db - da + 2.0 * d2));
        if x.is_finite() {
            return x.clamp(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
        }
    }
    0.5 * (lo + hi)
}

/// Minimize `eval` from `params`. `on_iter(k, loss, grad_inf)` is called
/// after every accepted step. Numeric faults at an accepted point abort
/// with the error; faults at trial points are backtracked over.
pub fn lbfgs_run<F>(
    params: &mut [f64],
    mut eval: F,
    cfg: &LbfgsConfig,
    mut on_iter: impl FnMut(usize, f64, f64),
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = params.len();
    let (mut f, mut g) = eval(params)?;
    if !f.is_finite() {
        return Err(Error::numeric("l-bfgs start", "initial loss not finite"));
    }
    if inf_norm(&g) <= cfg.grad_tol {
        return Ok(LbfgsOutcome { stop: LbfgsStop::GradTol, iters: 0, final_loss: f });
    }

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho: VecDeque<f64> = VecDeque::new();

    // Treat trial-point faults as +inf.
    let mut try_eval = |p: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        match eval(p) {
            Ok((f, g)) if f.is_finite() => Ok(Some((f, g))),
            Ok(_) => Ok(None),
            Err(Error::Numeric { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    for it in 0..cfg.max_iters {
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for i in (0..s_hist.len()).rev() {
            let a = rho[i] * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= a * yj;
            }
            alphas.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.back(), y_hist.back()) {
            let gamma = dot(s, y) / dot(y, y);
            for dj in d.iter_mut() {
                *dj *= gamma;
            }
        }
        alphas.reverse();
        for i in 0..s_hist.len() {
            let b = rho[i] * dot(&y_hist[i], &d);
            let a = alphas[i];
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (a - b) * sj;
            }
        }
        if dot(&g, &d) >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            d = g.iter().map(|x| -x).collect();
        }

        let x0 = params.to_vec();
        let mut accepted =
            strong_wolfe(params, &x0, &d, f, &g, cfg, &mut try_eval)?;
        if accepted.is_none() && !s_hist.is_empty() {
            // One steepest-descent fallback with fresh curvature state.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            let d_sd: Vec<f64> = g.iter().map(|x| -x).collect();
            accepted = strong_wolfe(params, &x0, &d_sd, f, &g, cfg, &mut try_eval)?;
            if accepted.is_some() {
                let step = accepted.as_ref().unwrap();
                let (f_new, g_new, alpha) = (step.0, step.1.clone(), step.2);
                let step_len = alpha * inf_norm(&d_sd);
                push_pair(
                    &mut s_hist, &mut y_hist, &mut rho, cfg.history, &x0, params, &g, &g_new,
                );
                f = f_new;
                g = g_new;
                on_iter(it, f, inf_norm(&g));
                if inf_norm(&g) <= cfg.grad_tol {
                    return Ok(LbfgsOutcome { stop: LbfgsStop::GradTol, iters: it + 1, final_loss: f });
                }
                if step_len <= cfg.step_tol {
                    return Ok(LbfgsOutcome { stop: LbfgsStop::StepTol, iters: it + 1, final_loss: f });
                }
                continue;
            }
        }
        match accepted {
            None => {
                params.copy_from_slice(&x0);
                return Ok(LbfgsOutcome {
                    stop: LbfgsStop::LineSearchFailed,
                    iters: it,
                    final_loss: f,
                });
            }
            Some((f_new, g_new, alpha)) => {
                let step_len = alpha * inf_norm(&d);
                push_pair(&mut s_hist, &mut y_hist, &mut rho, cfg.history, &x0, params, &g, &g_new);
                f = f_new;
                g = g_new;
                on_iter(it, f, inf_norm(&g));
                if inf_norm(&g) <= cfg.grad_tol {
                    return Ok(LbfgsOutcome { stop: LbfgsStop::GradTol, iters: it + 1, final_loss: f });
                }
                if step_len <= cfg.step_tol {
                    return Ok(LbfgsOutcome { stop: LbfgsStop::StepTol, iters: it + 1, final_loss: f });
                }
            }
        }
    }
    Ok(LbfgsOutcome { stop: LbfgsStop::MaxIters, iters: cfg.max_iters, final_loss: f })
}

#[allow(clippy::too_many_arguments)]
fn push_pair(
    s_hist: &mut VecDeque<Vec<f64>>,
    y_hist: &mut VecDeque<Vec<f64>>,
    rho: &mut VecDeque<f64>,
    cap: usize,
    x0: &[f64],
    x1: &[f64],
    g0: &[f64],
    g1: &[f64],
) {
    let s: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = g1.iter().zip(g0).map(|(a, b)| a - b).collect();
    let sy = dot(&s, &y);
    if sy > 1e-10 * inf_norm(&s).max(1e-300) * inf_norm(&y).max(1e-300) {
        if s_hist.len() == cap {
            s_hist.pop_front();
            y_hist.pop_front();
            rho.pop_front();
        }
        rho.push_back(1.0 / sy);
        s_hist.push_back(s);
        y_hist.push_back(y);
    }
}

type TrialResult = Result<Option<(f64, Vec<f64>)>>;

/// Strong-Wolfe search along `d` from `x0`. On success leaves `params` at
/// the accepted point and returns (f, g, α); on failure restores nothing
/// (caller resets) and returns None.
fn strong_wolfe(
    params: &mut [f64],
    x0: &[f64],
    d: &[f64],
    f0: f64,
    g0: &[f64],
    cfg: &LbfgsConfig,
    try_eval: &mut impl FnMut(&[f64]) -> TrialResult,
) -> Result<Option<(f64, Vec<f64>, f64)>> {
    let dphi0 = dot(g0, d);
    if dphi0 >= 0.0 {
        return Ok(None);
    }
    let set = |params: &mut [f64], alpha: f64| {
        for (p, (x, dd)) in params.iter_mut().zip(x0.iter().zip(d)) {
            *p = x + alpha * dd;
        }
    };

    let mut alpha_prev = 0.0f64;
    let mut f_prev = f0;
    let mut dphi_prev = dphi0;
    let mut alpha = 1.0f64;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None; // (lo, flo, dlo, hi, fhi, dhi)

    for i in 0..cfg.max_ls {
        set(params, alpha);
        let trial = try_eval(params)?;
        let (f_a, g_a) = match trial {
            Some(v) => v,
            None => {
                // Off the cliff: shrink toward the last good point.
                alpha = 0.5 * (alpha_prev + alpha);
                if alpha <= cfg.step_tol {
                    return Ok(None);
                }
                continue;
            }
        };
        let dphi_a = dot(&g_a, d);
        if f_a > f0 + cfg.c1 * alpha * dphi0 || (i > 0 && f_a >= f_prev) {
            bracket = Some((alpha_prev, f_prev, dphi_prev, alpha, f_a, dphi_a));
            break;
        }
        if dphi_a.abs() <= -cfg.c2 * dphi0 {
            return Ok(Some((f_a, g_a, alpha)));
        }
        if dphi_a >= 0.0 {
            bracket = Some((alpha, f_a, dphi_a, alpha_prev, f_prev, dphi_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = f_a;
        dphi_prev = dphi_a;
        alpha *= 2.0;
    }

    let (mut lo, mut flo, mut dlo, mut hi, mut fhi, mut dhi) = match bracket {
        Some(b) => b,
        None => return Ok(None),
    };

    for _ in 0..cfg.max_ls {
        let alpha = cubic_step(lo, flo, dlo, hi, fhi, dhi);
        set(params, alpha);
        let (f_a, g_a) = match try_eval(params)? {
            Some(v) => v,
            None => {
                // Shrink toward lo.
                hi = alpha;
                fhi = f64::INFINITY;
                dhi = 0.0;
                continue;
            }
        };
        let dphi_a = dot(&g_a, d);
        if f_a > f0 + cfg.c1 * alpha * dphi0 || f_a >= flo {
            hi = alpha;
            fhi = f_a;
            dhi = dphi_a;
        } else {
            if dphi_a.abs() <= -cfg.c2 * dphi0 {
                return Ok(Some((f_a, g_a, alpha)));
            }
            if dphi_a * (hi - lo) >= 0.0 {
                hi = lo;
                fhi = flo;
                dhi = dlo;
            }
            lo = alpha;
            flo = f_a;
            dlo = dphi_a;
        }
        if (hi - lo).abs() * inf_norm(d) <= cfg.step_tol {
            // Bracket collapsed; accept the better end if it at least
            // decreases the loss.
            if flo < f0 {
                set(params, lo);
                if let Some((f_a, g_a)) = try_eval(params)? {
                    return Ok(Some((f_a, g_a, lo)));
                }
            }
            return Ok(None);
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_converges_fast() {
        // ½θᵀAθ with A SPD (dim 10): minimum 0 within 50 iterations.
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = vec![vec![0.0f64; n]; n];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        // A = MᵀM + I (SPD).
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut s = if i == j { 1.0 } else { 0.0 };
                        for row in m.iter() {
                            s += row[i] * row[j];
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        let eval = |p: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            let mut g = vec![0.0; n];
            let mut f = 0.0;
            for i in 0..n {
                for j in 0..n {
                    g[i] += a[i][j] * p[j];
                    f += 0.5 * p[i] * a[i][j] * p[j];
                }
            }
            Ok((f, g))
        };
        let mut p: Vec<f64> = (0..n).map(|i| (i as f64 - 4.5) / 3.0).collect();
        let cfg = LbfgsConfig { max_iters: 50, ..LbfgsConfig::default() };
        let out = lbfgs_run(&mut p, eval, &cfg, |_, _, _| {}).unwrap();
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "‖θ‖ = {norm} after {} iters ({:?})", out.iters, out.stop);
    }

    #[test]
    fn rosenbrock_reaches_the_valley() {
        let eval = |p: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            let (x, y) = (p[0], p[1]);
            let f = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let g = vec![
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ];
            Ok((f, g))
        };
        let mut p = vec![-1.2, 1.0];
        let cfg = LbfgsConfig { max_iters: 200, ..LbfgsConfig::default() };
        let out = lbfgs_run(&mut p, eval, &cfg, |_, _, _| {}).unwrap();
        assert!(
            (p[0] - 1.0).abs() <= 1e-6 && (p[1] - 1.0).abs() <= 1e-6,
            "ended at {p:?} after {} iters ({:?})",
            out.iters,
            out.stop
        );
    }

    #[test]
    fn zero_gradient_start_terminates_immediately() {
        let eval = |p: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            Ok((p[0] * p[0], vec![0.0]))
        };
        let mut p = vec![3.0];
        let out = lbfgs_run(&mut p, eval, &LbfgsConfig::default(), |_, _, _| {}).unwrap();
        assert_eq!(out.stop, LbfgsStop::GradTol);
        assert_eq!(out.iters, 0);
    }

    #[test]
    fn survives_non_finite_trial_regions() {
        // f = −ln(1−x) + x² explodes past x = 1; the search must backtrack.
        let eval = |p: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            let x = p[0];
            if x >= 1.0 {
                return Err(crate::error::Error::numeric("trial", "diverged"));
            }
            Ok((-(1.0 - x).ln() + x * x, vec![1.0 / (1.0 - x) + 2.0 * x]))
        };
        let mut p = vec![0.0];
        let cfg = LbfgsConfig { max_iters: 100, grad_tol: 1e-10, ..LbfgsConfig::default() };
        let out = lbfgs_run(&mut p, eval, &cfg, |_, _, _| {}).unwrap();
        // Minimum of −ln(1−x)+x² is at x ≈ −0.366 (root of 1/(1−x) + 2x).
        assert!(out.final_loss < 0.05, "loss {}", out.final_loss);
        assert!((p[0] + 0.36602540378).abs() < 1e-6, "x = {}", p[0]);
    }
}
