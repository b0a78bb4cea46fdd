//! Approximation-solution pipeline: mollify the coefficients along a
//! decreasing schedule, solve each Dirichlet problem, and verify the uniform
//! bounds, the `L^2` Cauchy property on an interior compact, and the weak
//! residual of the final iterate against the unmollified coefficients.
//!
//! The standing hypothesis `nu_+ < 2 sigma` is enforced up front: schemes
//! violating it are refused with the measured bound attached. Measured-bound
//! violations found while running are recorded as findings instead.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cutoff::eta;
use crate::error::{Error, Result};
use crate::fields::{make_drift, make_matrix, DriftKind, DriftParts, DriftSpec, MatrixSpec};
use crate::formbounds::{
    estimate_mf_delta_with, estimate_quadratic_bound, hardy_reference, EigenOptions,
    FormBoundEstimate, PencilWorkspace,
};
use crate::grid::{w12_norm, GridDomain, ScalarField};
use crate::linalg::det_sum_iter;
use crate::mollify::{friedrichs_kernel, mollify_matrix, mollify_scalar, mollify_vector, Extension};
use crate::solver::{assemble, solve_dirichlet, weak_residual, SolveOptions, WeakForm};

/// Boundary data catalog; all entries are smooth with finite `W^{2,2}` norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Constant { value: f64 },
    Affine { offset: f64, slope: Vec<f64> },
    ExpAxis { axis: usize, amplitude: f64 },
}

impl BoundarySpec {
    pub fn realize(&self, domain: &Arc<GridDomain>) -> Result<ScalarField> {
        match self {
            BoundarySpec::Constant { value } => ScalarField::constant(domain.clone(), *value),
            BoundarySpec::Affine { offset, slope } => {
                if slope.len() != domain.dimension() {
                    return Err(Error::Config(format!(
                        "affine boundary slope has {} entries in dimension {}",
                        slope.len(),
                        domain.dimension()
                    )));
                }
                let (o, s) = (*offset, slope.clone());
                ScalarField::from_fn(domain.clone(), move |x| {
                    o + x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()
                })
            }
            BoundarySpec::ExpAxis { axis, amplitude } => {
                if *axis >= domain.dimension() {
                    return Err(Error::Config("boundary exp axis out of range".into()));
                }
                let (ax, amp) = (*axis, *amplitude);
                ScalarField::from_fn(domain.clone(), move |x| amp * x[ax].exp())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub eps_schedule: Vec<f64>,
    /// Analytic (when available) or estimated form bound of `(div b)_+`.
    pub nu_plus: f64,
    pub w12_norms: Vec<f64>,
    pub linf_norms: Vec<f64>,
    /// `||u_n - u_m||_{L^2(K)}` on the concentric half-extent box.
    pub cauchy_matrix: Vec<Vec<f64>>,
    /// Weak residual of the finest iterate against the unmollified
    /// coefficients, tested with interior cut-off functions.
    pub limit_weak_residual: f64,
    pub per_n_formbounds: Vec<FormBoundEstimate>,
    pub findings: Vec<String>,
}

/// Report plus the solution fields (kept out of serialization).
#[derive(Debug)]
pub struct SchemeRun {
    pub report: ApproximationReport,
    pub solutions: Vec<ScalarField>,
}

#[derive(Debug, Clone)]
pub struct SchemeOptions {
    pub form: WeakForm,
    pub solve: SolveOptions,
    pub eigen: EigenOptions,
    /// Companion constant for the per-step multiplicative estimates.
    pub c_delta: f64,
    /// Coarse eps-grid size for the per-step estimates; 0 skips them.
    pub mf_eps_points: usize,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            form: WeakForm::DivergenceForm,
            solve: SolveOptions::default(),
            eigen: EigenOptions::default(),
            c_delta: 0.0,
            mf_eps_points: 5,
        }
    }
}

/// Form bound of `(div b)_+`: the analytic Hardy value when the drift is an
/// attracting/repelling pair, 0 for divergence-free catalog entries, and the
/// discrete variational estimate otherwise.
pub fn estimate_nu_plus(
    spec: &DriftSpec,
    parts: &DriftParts,
    opts: &EigenOptions,
) -> Result<f64> {
    match &spec.kind {
        DriftKind::HardyPair { kappa_plus, .. } => {
            hardy_reference(parts.b.domain().dimension(), *kappa_plus)
        }
        _ => {
            if parts.div_plus.values().iter().all(|&v| v == 0.0) {
                Ok(0.0)
            } else {
                Ok(estimate_quadratic_bound(&parts.div_plus, 0.0, opts)?.bound)
            }
        }
    }
}

/// Node mask of the interior compact `K`: the concentric box of half the
/// extent.
pub fn compact_mask(domain: &GridDomain) -> Vec<usize> {
    let half = domain.half_extent() / 2.0;
    let mut mask = Vec::new();
    let mut coords = vec![0.0; domain.dimension()];
    for idx in 0..domain.node_count() {
        domain.node_coords(idx, &mut coords);
        if coords.iter().all(|c| c.abs() <= half + 1e-12) {
            mask.push(idx);
        }
    }
    mask
}

fn l2_on_mask(a: &ScalarField, b: &ScalarField, mask: &[usize]) -> f64 {
    let hd = a.domain().cell_volume();
    (hd * det_sum_iter(mask.iter().map(|&i| {
        let d = a.values()[i] - b.values()[i];
        d * d
    })))
    .sqrt()
}

/// Runs the full scheme. Refuses with [`Error::HypothesisViolated`] when the
/// measured `nu_+` reaches `2 sigma`.
pub fn run_scheme(
    a_spec: &MatrixSpec,
    b_spec: &DriftSpec,
    g_spec: &BoundarySpec,
    eps_schedule: &[f64],
    domain: &Arc<GridDomain>,
    opts: &SchemeOptions,
) -> Result<SchemeRun> {
    let h = domain.spacing();
    if eps_schedule.is_empty() {
        return Err(Error::Config("mollification schedule is empty".into()));
    }
    if eps_schedule.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Config(
            "mollification schedule must be strictly decreasing".into(),
        ));
    }
    if eps_schedule.iter().any(|&e| e < 2.0 * h) {
        return Err(Error::Resolution(format!(
            "schedule entry below the resolution floor 2h = {}",
            2.0 * h
        )));
    }

    let a = make_matrix(a_spec, domain)?;
    let drift = make_drift(b_spec, domain)?;
    let g = g_spec.realize(domain)?;
    let nu_plus = estimate_nu_plus(b_spec, &drift, &opts.eigen)?;
    let sigma = a_spec.sigma();
    if nu_plus >= 2.0 * sigma {
        return Err(Error::HypothesisViolated {
            nu_plus,
            two_sigma: 2.0 * sigma,
        });
    }

    let g_sup = g.values().iter().cloned().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut findings = Vec::new();
    let mut solutions = Vec::new();
    let mut w12_norms = Vec::new();
    let mut linf_norms = Vec::new();
    let mut per_n_formbounds = Vec::new();
    let ws = if opts.mf_eps_points > 0 {
        Some(PencilWorkspace::new(domain))
    } else {
        None
    };
    let eps_grid = crate::formbounds::default_eps_grid(domain, opts.mf_eps_points.max(2));

    for &eps in eps_schedule {
        let kernel = friedrichs_kernel(eps, domain)?;
        let a_n = mollify_matrix(&a, &kernel)?;
        let b_n = mollify_vector(&drift.b, &kernel, Extension::Zero)?;
        let dp_n = mollify_scalar(&drift.div_plus, &kernel, Extension::Zero)?;
        let dm_n = mollify_scalar(&drift.div_minus, &kernel, Extension::Zero)?;
        let g_n = mollify_scalar(&g, &kernel, Extension::Renormalized)?;

        let system = assemble(&a_n, &b_n, &dp_n, &dm_n, domain, opts.form)?;
        let solved = solve_dirichlet(&system, &g_n, &opts.solve)?;
        let linf = solved
            .u
            .values()
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let cap = g_sup * (1.0 + 10.0 * h * h);
        if linf > cap {
            findings.push(format!(
                "uniform sup bound violated at eps={eps}: ||u_n||_inf = {linf} > {cap}"
            ));
        }
        w12_norms.push(w12_norm(&solved.u));
        linf_norms.push(linf);
        if let Some(ws) = &ws {
            let est = estimate_mf_delta_with(
                ws,
                &b_n.magnitude(),
                opts.c_delta,
                &eps_grid,
                &opts.eigen,
            )?;
            per_n_formbounds.push(est);
        }
        solutions.push(solved.u);
    }

    // Uniform W^{1,2} bound: max within a factor 2 of the median.
    let mut sorted = w12_norms.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = sorted[sorted.len() - 1];
    if median > 0.0 && max / median > 2.0 {
        findings.push(format!(
            "W^{{1,2}} norms not uniformly bounded: max/median = {}",
            max / median
        ));
    }

    // Cauchy matrix on the interior compact.
    let mask = compact_mask(domain);
    let len = solutions.len();
    let mut cauchy = vec![vec![0.0; len]; len];
    for i in 0..len {
        for j in (i + 1)..len {
            let d = l2_on_mask(&solutions[i], &solutions[j], &mask);
            cauchy[i][j] = d;
            cauchy[j][i] = d;
        }
    }
    // Distances from each iterate stabilize toward the finest one: nothing
    // in a row may exceed the distance to the last iterate by more than 10%
    // (checked only above a rounding floor).
    if len >= 3 {
        let floor = 1e-12 * (1.0 + g_sup);
        for m in 0..len - 1 {
            let to_last = cauchy[m][len - 1];
            for n in (m + 1)..len {
                if cauchy[m][n] > 1.1 * to_last && cauchy[m][n] > floor {
                    findings.push(format!(
                        "Cauchy stabilization violated: ||u_{m} - u_{n}|| = {} exceeds \
                         1.1 * ||u_{m} - u_last|| = {}",
                        cauchy[m][n],
                        1.1 * to_last
                    ));
                }
            }
        }
    }

    // Weak residual of the finest iterate against the *unmollified*
    // coefficients, with nested interior cut-offs as test functions.
    let limit_weak_residual = {
        let le = domain.half_extent();
        let margin = 4.0 * h;
        let mut tests = Vec::new();
        for (f1, f2) in [(0.20, 0.45), (0.30, 0.60), (0.40, 0.70)] {
            let r2 = (f2 * le).min(le - margin);
            let r1 = (f1 * le).min(0.8 * r2);
            if r1 > 2.0 * h {
                let center = vec![0.0; domain.dimension()];
                tests.push(eta(r1, r2, domain, &center)?.0);
            }
        }
        if tests.is_empty() {
            findings.push("grid too coarse for interior test functions".into());
            f64::NAN
        } else {
            weak_residual(
                solutions.last().unwrap(),
                &a,
                &drift.b,
                &drift.div_plus,
                &drift.div_minus,
                &tests,
            )?
        }
    };

    Ok(SchemeRun {
        report: ApproximationReport {
            eps_schedule: eps_schedule.to_vec(),
            nu_plus,
            w12_norms,
            linf_norms,
            cauchy_matrix: cauchy,
            limit_weak_residual,
            per_n_formbounds,
            findings,
        },
        solutions,
    })
}
