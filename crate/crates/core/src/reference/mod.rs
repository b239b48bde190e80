//! Ground-truth generators used for scoring: closed forms, Cole–Hopf
//! quadrature for the viscous advection equation, and a periodic
//! pseudo-spectral time integrator for the remaining 1D benchmarks.

pub mod colehopf;
pub mod spectral;

use crate::error::{Error, Result};
use crate::problems::{PdeProblem, PoissonVariant, ProblemKind};

pub use colehopf::ColeHopf;
pub use spectral::{spectral_solve, SpectralProblem, SpectralSettings};

/// Where a reference grid's values came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    ColeHopf,
    Spectral,
    File,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::ColeHopf => "colehopf",
            Provenance::Spectral => "spectral",
            Provenance::File => "file",
        }
    }
}

/// Reference values on a fixed evaluation grid: `values[ti * x.len() + xi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGrid {
    pub problem: String,
    pub provenance: Provenance,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Second field where the problem has one (the curvature field of the
    /// fourth-order interface equation).
    pub aux: Option<Vec<f64>>,
    /// Solver settings recorded for auditability.
    pub meta: Vec<(String, String)>,
}

impl ReferenceGrid {
    pub fn value(&self, ti: usize, xi: usize) -> f64 {
        self.values[ti * self.x.len() + xi]
    }

    /// All (t, x) rows in grid order, matching `values`.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.t.len() * self.x.len() * 2);
        for &t in &self.t {
            for &x in &self.x {
                out.push(t);
                out.push(x);
            }
        }
        out
    }

    /// Serialize: metadata header lines, then one `t,x,value[,value2]` row
    /// per grid node.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = write!(s, "# problem={}, provenance={}", self.problem, self.provenance.name());
        for (k, v) in &self.meta {
            let _ = write!(s, ", {k}={v}");
        }
        s.push('\n');
        if self.aux.is_some() {
            s.push_str("# fields=u,h\n");
        }
        for (ti, &t) in self.t.iter().enumerate() {
            for (xi, &x) in self.x.iter().enumerate() {
                let v = self.value(ti, xi);
                match &self.aux {
                    Some(a) => {
                        let _ = writeln!(s, "{t},{x},{v},{}", a[ti * self.x.len() + xi]);
                    }
                    None => {
                        let _ = writeln!(s, "{t},{x},{v}");
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ReferenceGrid> {
        let mut problem = String::new();
        let mut provenance = Provenance::File;
        let mut meta = Vec::new();
        let mut rows: Vec<(f64, f64, f64, Option<f64>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for part in rest.split(',') {
                    let part = part.trim();
                    if let Some((k, v)) = part.split_once('=') {
                        match k.trim() {
                            "problem" => problem = v.trim().to_string(),
                            "provenance" => {
                                provenance = match v.trim() {
                                    "closed_form" => Provenance::ClosedForm,
                                    "colehopf" => Provenance::ColeHopf,
                                    "spectral" => Provenance::Spectral,
                                    _ => Provenance::File,
                                }
                            }
                            "fields" => {}
                            key => meta.push((key.to_string(), v.trim().to_string())),
                        }
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 && fields.len() != 4 {
                return Err(Error::Ingest(format!(
                    "line {}: expected t,x,value[,value2], got {:?}",
                    lineno + 1,
                    line
                )));
            }
            let mut parsed = [0.0f64; 4];
            for (i, f) in fields.iter().enumerate() {
                parsed[i] = f.trim().parse().map_err(|_| {
                    Error::Ingest(format!("line {}: bad number {f:?}", lineno + 1))
                })?;
                if !parsed[i].is_finite() {
                    return Err(Error::Ingest(format!("line {}: non-finite value", lineno + 1)));
                }
            }
            rows.push((
                parsed[0],
                parsed[1],
                parsed[2],
                if fields.len() == 4 { Some(parsed[3]) } else { None },
            ));
        }
        if rows.is_empty() {
            return Err(Error::Ingest("no data rows".into()));
        }
        // Recover the grid axes (rows are written t-major).
        let mut xs = Vec::new();
        for (_, x, _, _) in &rows {
            if xs.contains(x) {
                break;
            }
            xs.push(*x);
        }
        let nx = xs.len();
        if rows.len() % nx != 0 {
            return Err(Error::Ingest(format!(
                "row count {} is not a multiple of the x-grid size {nx}",
                rows.len()
            )));
        }
        let ts: Vec<f64> = rows.iter().step_by(nx).map(|(t, _, _, _)| *t).collect();
        let values: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let aux = if rows[0].3.is_some() {
            Some(rows.iter().map(|r| r.3.unwrap_or(0.0)).collect())
        } else {
            None
        };
        Ok(ReferenceGrid { problem, provenance, t: ts, x: xs, values, aux, meta })
    }
}

/// ‖pred − ref‖₂ / ‖ref‖₂.
pub fn l2_relative_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::config(format!(
            "length mismatch in error computation: {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    let ref_norm: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(Error::DegenerateReference("reference is identically zero".into()));
    }
    let diff: f64 =
        pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum::<f64>().sqrt();
    Ok(diff / ref_norm)
}

/// Exact solutions for the 1D elliptic benchmarks.
pub fn exact_poisson(variant: PoissonVariant, x: f64) -> Result<f64> {
    use std::f64::consts::PI;
    if !(0.0..=PI).contains(&x) {
        return Err(Error::Range(format!("x = {x} outside [0, π]")));
    }
    Ok(match variant {
        PoissonVariant::P1 => x + (1..=20).map(|i| (i as f64 * x).sin() / i as f64).sum::<f64>(),
        PoissonVariant::P2 => x * ((x - PI) * (x - PI) / 2.0).exp(),
    })
}

/// Traveling-wave solution of the linear convection problem.
pub fn exact_convection(t: f64, x: f64, speed: f64) -> f64 {
    (x - speed * t).sin()
}

/// Number of spatial nodes in the fixed evaluation grid.
pub const EVAL_X: usize = 256;
/// Number of time slices in the fixed evaluation grid.
pub const EVAL_T: usize = 100;

/// The fixed scoring grid: x-nodes at `lo + i·L/256` (aligned with the
/// spectral grid so no interpolation happens), time slices uniform over the
/// problem's interval including both ends.
pub fn eval_axes(problem: &PdeProblem) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = problem.domain.space[0];
    let xs: Vec<f64> =
        (0..EVAL_X).map(|i| lo + (hi - lo) * i as f64 / EVAL_X as f64).collect();
    let ts = match problem.domain.time {
        Some((t0, t1)) => (0..EVAL_T)
            .map(|j| t0 + (t1 - t0) * j as f64 / (EVAL_T - 1) as f64)
            .collect(),
        None => vec![0.0],
    };
    (ts, xs)
}

/// Default solver settings per spectral benchmark.
pub fn default_spectral_settings(kind: &ProblemKind) -> SpectralSettings {
    match kind {
        ProblemKind::Kdv { .. } => SpectralSettings { modes: 512, dt: 1e-4 },
        ProblemKind::CahnHilliard { .. } => SpectralSettings { modes: 512, dt: 1e-4 },
        _ => SpectralSettings { modes: 512, dt: 2.5e-4 },
    }
}

/// Build the scoring reference for a 1D problem on the fixed grid.
pub fn build_reference(problem: &PdeProblem) -> Result<ReferenceGrid> {
    let (ts, xs) = eval_axes(problem);
    match &problem.kind {
        ProblemKind::Poisson { variant } => {
            let values: Result<Vec<f64>> =
                xs.iter().map(|&x| exact_poisson(*variant, x)).collect();
            Ok(ReferenceGrid {
                problem: problem.name.clone(),
                provenance: Provenance::ClosedForm,
                t: vec![0.0],
                x: xs,
                values: values?,
                aux: None,
                meta: Vec::new(),
            })
        }
        ProblemKind::Convection { speed } => {
            let mut values = Vec::with_capacity(ts.len() * xs.len());
            for &t in &ts {
                for &x in &xs {
                    values.push(exact_convection(t, x, *speed));
                }
            }
            Ok(ReferenceGrid {
                problem: problem.name.clone(),
                provenance: Provenance::ClosedForm,
                t: ts,
                x: xs,
                values,
                aux: None,
                meta: Vec::new(),
            })
        }
        ProblemKind::Burgers { viscosity } => {
            let ch = ColeHopf::new(*viscosity, 160);
            let mut values = Vec::with_capacity(ts.len() * xs.len());
            for &t in &ts {
                for &x in &xs {
                    values.push(ch.eval(t, x));
                }
            }
            Ok(ReferenceGrid {
                problem: problem.name.clone(),
                provenance: Provenance::ColeHopf,
                t: ts,
                x: xs,
                values,
                aux: None,
                meta: vec![("nodes".into(), "160".into())],
            })
        }
        kind @ (ProblemKind::AllenCahn { .. }
        | ProblemKind::Kdv { .. }
        | ProblemKind::CahnHilliard { .. }) => {
            let settings = default_spectral_settings(kind);
            let sp = SpectralProblem::from_kind(kind)
                .ok_or_else(|| Error::config("not a spectral problem"))?;
            spectral_solve(&sp, &settings, &ts, EVAL_X)
        }
        other => Err(Error::config(format!(
            "no 1D reference generator for {other:?}; supply a reference file"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn l2_error_basics() {
        let r = vec![1.0, 2.0, 2.0];
        assert_eq!(l2_relative_error(&r, &r).unwrap(), 0.0);
        let double: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(l2_relative_error(&double, &r).unwrap(), 1.0, max_relative = 1e-15);
        // Unit-norm reference perturbed in one slot by ε.
        let e = vec![1.0, 0.0, 0.0];
        let p = vec![1.0, 1e-3, 0.0];
        assert_relative_eq!(l2_relative_error(&p, &e).unwrap(), 1e-3, max_relative = 1e-12);
        assert!(matches!(
            l2_relative_error(&[1.0], &[0.0]),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn poisson_exact_endpoints() {
        assert_eq!(exact_poisson(PoissonVariant::P1, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            exact_poisson(PoissonVariant::P2, PI).unwrap(),
            PI,
            max_relative = 1e-15
        );
        let hand = PI / 2.0
            + (1..=20).map(|i| (i as f64 * PI / 2.0).sin() / i as f64).sum::<f64>();
        assert_relative_eq!(
            exact_poisson(PoissonVariant::P1, PI / 2.0).unwrap(),
            hand,
            max_relative = 1e-15
        );
        assert!(exact_poisson(PoissonVariant::P1, -0.1).is_err());
        assert!(exact_poisson(PoissonVariant::P1, 4.0).is_err());
    }

    #[test]
    fn convection_exact_basics() {
        for x in [0.0, 1.0, 4.5] {
            assert_eq!(exact_convection(0.0, x, 64.0), x.sin());
        }
        // Zero along the characteristic through the origin, modulo period.
        let t = 0.25;
        assert!(exact_convection(t, 64.0 * t, 64.0).abs() < 1e-12);
    }

    #[test]
    fn grid_text_roundtrip() {
        let g = ReferenceGrid {
            problem: "convection".into(),
            provenance: Provenance::Spectral,
            t: vec![0.0, 0.5],
            x: vec![0.0, 1.0, 2.0],
            values: vec![0.1, 0.2, 0.3, -0.4, 1.0 / 3.0, 5e-17],
            aux: None,
            meta: vec![("modes".into(), "512".into()), ("dt".into(), "0.001".into())],
        };
        let text = g.to_text();
        let back = ReferenceGrid::from_text(&text).unwrap();
        assert_eq!(g.t, back.t);
        assert_eq!(g.x, back.x);
        for (a, b) in g.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.provenance, Provenance::Spectral);
        assert!(back.meta.contains(&("modes".to_string(), "512".to_string())));
    }

    #[test]
    fn grid_text_rejects_garbage() {
        assert!(ReferenceGrid::from_text("").is_err());
        assert!(ReferenceGrid::from_text("1,2\n").is_err());
        assert!(ReferenceGrid::from_text("1,2,nan\n").is_err());
    }
}
