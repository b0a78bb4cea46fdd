//! Friedrichs mollification with bound preservation.
//!
//! The kernel is `gamma_eps(y) = eps^-d gamma(y/eps)` with the unit bump
//! `gamma(y) = c exp(1/(|y|^2 - 1))` on `|y| < 1` and `c` fixed by unit mass.
//! Discrete kernels are renormalized so `h^d sum = 1` exactly; convolution
//! uses zero-extension outside the box (a mass-renormalized variant exists
//! for fields that must stay inside convex bounds, e.g. elliptic matrices).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{make_drift, DriftSpec};
use crate::formbounds::{
    estimate_mf_delta_with, EigenOptions, FormBoundEstimate, PencilWorkspace,
};
use crate::grid::{divergence, unit_ball_volume, GridDomain, MatrixField, ScalarField, VectorField};

/// Discrete Friedrichs kernel at scale `epsilon` on a given grid.
#[derive(Debug, Clone)]
pub struct Mollifier {
    epsilon: f64,
    dims: usize,
    radius_cells: usize,
    /// Per-entry lattice offsets (d each) and kernel values; `h^d * sum(values) = 1`.
    offsets: Vec<i32>,
    values: Vec<f64>,
    normalization: f64,
    grad_sqrt_energy: f64,
}

fn unit_bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 / (r * r - 1.0)).exp()
    }
}

/// Composite Simpson on `[0, 1]`.
fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 };
    let dt = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * dt);
    }
    acc * dt / 3.0
}

fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Normalization constant `c` of the unit kernel in dimension `d`.
pub fn kernel_normalization(d: usize) -> f64 {
    let mass = sphere_area(d) * simpson(|r| r.powi(d as i32 - 1) * unit_bump(r), 16_384);
    1.0 / mass
}

/// `C^2 = <|grad sqrt(gamma)|^2>` of the unit kernel; the scaled kernel has
/// energy `C^2 eps^-2`.
pub fn kernel_grad_sqrt_energy(d: usize) -> f64 {
    let c = kernel_normalization(d);
    c * sphere_area(d)
        * simpson(
            |r| {
                let q = r * r - 1.0;
                if q >= 0.0 {
                    return 0.0;
                }
                r.powi(d as i32 - 1) * unit_bump(r) * r * r / q.powi(4)
            },
            16_384,
        )
}

/// Builds the discrete kernel; requires `epsilon >= 2h` so the bump is
/// resolved by at least two cells per radius.
pub fn friedrichs_kernel(epsilon: f64, domain: &Arc<GridDomain>) -> Result<Mollifier> {
    let h = domain.spacing();
    let d = domain.dimension();
    if !(epsilon >= 2.0 * h) {
        return Err(Error::Resolution(format!(
            "mollifier scale eps = {epsilon} is below 2h = {}",
            2.0 * h
        )));
    }
    let c = kernel_normalization(d);
    let m = (epsilon / h).ceil() as i64;
    let mut offsets = Vec::new();
    let mut values = Vec::new();
    let mut offset = vec![-m; d];
    let eps_inv = 1.0 / epsilon;
    'outer: loop {
        let r2: f64 = offset.iter().map(|&j| (j as f64 * h).powi(2)).sum();
        let r = r2.sqrt() * eps_inv;
        if r < 1.0 {
            let v = c * unit_bump(r) * eps_inv.powi(d as i32);
            if v > 0.0 {
                for &j in &offset {
                    offsets.push(j as i32);
                }
                values.push(v);
            }
        }
        for k in 0..d {
            offset[k] += 1;
            if offset[k] <= m {
                continue 'outer;
            }
            offset[k] = -m;
        }
        break;
    }
    if values.is_empty() {
        return Err(Error::Resolution("empty mollifier stencil".into()));
    }
    let hd = domain.cell_volume();
    let mass: f64 = values.iter().sum::<f64>() * hd;
    let inv = 1.0 / mass;
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(Mollifier {
        epsilon,
        dims: d,
        radius_cells: m as usize,
        offsets,
        values,
        normalization: c,
        grad_sqrt_energy: kernel_grad_sqrt_energy(d),
    })
}

/// Out-of-box treatment during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Fields are extended by zero (the default; matches mollifying fields
    /// defined on all of `R^d` when only interior values are consumed).
    Zero,
    /// Kernel mass is renormalized over in-box samples; preserves convex
    /// bounds such as `sigma I <= a <= xi I` up to the boundary.
    Renormalized,
}

impl Mollifier {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Analytic normalization constant `c` of the unit kernel.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Unit-kernel energy `C^2`; the scaled kernel carries `C^2 / eps^2`.
    pub fn grad_sqrt_energy_unit(&self) -> f64 {
        self.grad_sqrt_energy
    }

    pub fn grad_sqrt_energy_scaled(&self) -> f64 {
        self.grad_sqrt_energy / (self.epsilon * self.epsilon)
    }

    pub fn radius_cells(&self) -> usize {
        self.radius_cells
    }

    /// Discrete kernel mass `h^d sum(values)`; 1 up to rounding.
    pub fn discrete_mass(&self, domain: &GridDomain) -> f64 {
        self.values.iter().sum::<f64>() * domain.cell_volume()
    }

    pub fn stencil(&self) -> (&[i32], &[f64]) {
        (&self.offsets, &self.values)
    }

    fn convolve(&self, domain: &Arc<GridDomain>, input: &[f64], extension: Extension) -> Vec<f64> {
        let d = self.dims;
        let n = domain.resolution() as i64;
        let hd = domain.cell_volume();
        let strides = domain.strides().to_vec();
        let m = self.radius_cells as i64;
        let entries = self.values.len();
        // Flat deltas for nodes far enough from every face.
        let flat_delta: Vec<i64> = (0..entries)
            .map(|e| {
                (0..d)
                    .map(|k| self.offsets[e * d + k] as i64 * strides[k] as i64)
                    .sum()
            })
            .collect();
        let nc = domain.node_count();
        let mut out = vec![0.0; nc];
        out.par_chunks_mut(4096).enumerate().for_each(|(chunk, slice)| {
            let base = chunk * 4096;
            let mut multi = vec![0i64; d];
            for (k, slot) in slice.iter_mut().enumerate() {
                let idx = base + k;
                let mut rest = idx;
                for (axis, m_i) in multi.iter_mut().enumerate() {
                    let _ = axis;
                    *m_i = (rest % domain.resolution()) as i64;
                    rest /= domain.resolution();
                }
                let deep = multi.iter().all(|&i| i >= m && i < n - m);
                let mut acc = 0.0;
                if deep {
                    for e in 0..entries {
                        let src = (idx as i64 - flat_delta[e]) as usize;
                        acc += self.values[e] * input[src];
                    }
                    *slot = hd * acc;
                } else {
                    let mut mass = 0.0;
                    for e in 0..entries {
                        let mut inside = true;
                        let mut src = 0usize;
                        for axis in 0..d {
                            let j = multi[axis] - self.offsets[e * d + axis] as i64;
                            if j < 0 || j >= n {
                                inside = false;
                                break;
                            }
                            src += j as usize * strides[axis];
                        }
                        if inside {
                            acc += self.values[e] * input[src];
                            mass += self.values[e];
                        }
                    }
                    *slot = match extension {
                        Extension::Zero => hd * acc,
                        Extension::Renormalized => {
                            if mass > 0.0 {
                                acc / mass
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
        });
        out
    }
}

/// Mollifies a scalar field.
pub fn mollify_scalar(
    f: &ScalarField,
    m: &Mollifier,
    extension: Extension,
) -> Result<ScalarField> {
    ScalarField::from_values(f.domain().clone(), m.convolve(f.domain(), f.values(), extension))
}

/// Mollifies a vector field componentwise.
pub fn mollify_vector(
    f: &VectorField,
    m: &Mollifier,
    extension: Extension,
) -> Result<VectorField> {
    let components = f
        .components()
        .iter()
        .map(|c| m.convolve(f.domain(), c, extension))
        .collect();
    VectorField::from_components(f.domain().clone(), components)
}

/// Mollifies a matrix field entrywise with mass renormalization, preserving
/// `sigma I <= a <= xi I` everywhere (convex combinations of the samples).
pub fn mollify_matrix(a: &MatrixField, m: &Mollifier) -> Result<MatrixField> {
    let domain = a.domain().clone();
    let d = domain.dimension();
    let nc = domain.node_count();
    let mut scratch = vec![0.0; nc];
    let mut entries = vec![0.0; nc * d * d];
    for i in 0..d {
        for j in i..d {
            for idx in 0..nc {
                scratch[idx] = a.entry(idx, i, j);
            }
            let sm = m.convolve(&domain, &scratch, Extension::Renormalized);
            for idx in 0..nc {
                entries[idx * d * d + i * d + j] = sm[idx];
                entries[idx * d * d + j * d + i] = sm[idx];
            }
        }
    }
    let mut out = MatrixField::from_entries(domain, entries)?;
    if let Some((sigma, xi)) = a.bounds() {
        crate::fields::verify_ellipticity(&out, sigma, xi)?;
        out.set_bounds(sigma, xi);
    }
    Ok(out)
}

/// One row of the mollification verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyRow {
    pub eps: f64,
    pub sup_bn: f64,
    pub sup_times_eps: f64,
    pub delta_n: FormBoundEstimate,
    pub l1_distance: f64,
    pub divsplit_max_violation: f64,
    pub divsplit_nonnegative: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyReport {
    pub delta_ref: FormBoundEstimate,
    pub rows: Vec<MollifyRow>,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MollifyVerifyOptions {
    /// Companion constant `c_delta` for the multiplicative estimates.
    pub c_delta: f64,
    /// Coarse eps-grid size for each delta estimate.
    pub eps_points: usize,
    /// Allowed slack in the preservation check `delta_n <= delta_ref + slack`.
    pub delta_slack: f64,
    pub eigen: EigenOptions,
}

impl Default for MollifyVerifyOptions {
    fn default() -> Self {
        MollifyVerifyOptions {
            c_delta: 0.0,
            eps_points: 9,
            delta_slack: 0.05,
            eigen: EigenOptions::default(),
        }
    }
}

/// Verifies the three smooth-approximation properties along a decreasing
/// mollification schedule: bounded `sup|b_n| * eps_n`, preservation of the
/// multiplicative form bound, `L^1` convergence on an interior compact, and
/// the nonnegative divergence split identity. Violations are findings, not
/// errors.
pub fn verify_mollification(
    spec: &DriftSpec,
    domain: &Arc<GridDomain>,
    eps_sequence: &[f64],
    opts: &MollifyVerifyOptions,
) -> Result<MollifyReport> {
    let h = domain.spacing();
    if eps_sequence.is_empty() {
        return Err(Error::Config("mollification schedule is empty".into()));
    }
    if eps_sequence.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Config("mollification schedule must decrease".into()));
    }
    if eps_sequence.iter().any(|&e| e < 2.0 * h) {
        return Err(Error::Resolution(format!(
            "schedule entry below resolution floor 2h = {}",
            2.0 * h
        )));
    }
    let drift = make_drift(spec, domain)?;
    let absb = drift.b.magnitude();
    let ws = PencilWorkspace::new(domain);
    let eps_grid = crate::formbounds::default_eps_grid(domain, opts.eps_points);
    let delta_ref = estimate_mf_delta_with(&ws, &absb, opts.c_delta, &eps_grid, &opts.eigen)?;

    let mut rows = Vec::new();
    let mut findings = Vec::new();
    // Interior compact K: concentric box of half the extent.
    let half = domain.half_extent() / 2.0;
    let mut k_mask = Vec::new();
    {
        let mut coords = vec![0.0; domain.dimension()];
        for idx in 0..domain.node_count() {
            domain.node_coords(idx, &mut coords);
            if coords.iter().all(|c| c.abs() <= half + 1e-12) {
                k_mask.push(idx);
            }
        }
    }
    let hd = domain.cell_volume();
    let mut prev_l1 = f64::INFINITY;
    for &eps in eps_sequence {
        let kernel = friedrichs_kernel(eps, domain)?;
        let bn = mollify_vector(&drift.b, &kernel, Extension::Zero)?;
        let bn_mag = bn.magnitude();
        let sup_bn = bn_mag.values().iter().cloned().fold(0.0, f64::max);
        let delta_n = estimate_mf_delta_with(&ws, &bn_mag, opts.c_delta, &eps_grid, &opts.eigen)?;
        if delta_n.bound > delta_ref.bound + opts.delta_slack {
            findings.push(format!(
                "delta preservation violated at eps={eps}: delta_n={} > delta_ref={} + {}",
                delta_n.bound, delta_ref.bound, opts.delta_slack
            ));
        }
        let mut l1 = 0.0;
        for &idx in &k_mask {
            let mut diff2 = 0.0;
            for k in 0..domain.dimension() {
                let d = bn.component(k)[idx] - drift.b.component(k)[idx];
                diff2 += d * d;
            }
            l1 += diff2.sqrt();
        }
        l1 *= hd;
        if l1 >= prev_l1 {
            findings.push(format!(
                "L1 distance not strictly decreasing at eps={eps}: {l1} >= {prev_l1}"
            ));
        }
        prev_l1 = l1;

        let dp = mollify_scalar(&drift.div_plus, &kernel, Extension::Zero)?;
        let dm = mollify_scalar(&drift.div_minus, &kernel, Extension::Zero)?;
        let nonneg = dp.values().iter().all(|&v| v >= 0.0)
            && dm.values().iter().all(|&v| v >= 0.0);
        if !nonneg {
            findings.push(format!(
                "mollified divergence split lost nonnegativity at eps={eps}"
            ));
        }
        // Identity check where convolution commutes with the difference
        // stencil: nodes at least radius+2 cells from every face.
        let div_bn = divergence(&bn);
        let margin = (kernel.radius_cells() + 2) as i64;
        let n = domain.resolution() as i64;
        let mut violation = 0.0f64;
        let mut multi = vec![0usize; domain.dimension()];
        for idx in 0..domain.node_count() {
            domain.multi_index(idx, &mut multi);
            if multi
                .iter()
                .any(|&i| (i as i64) < margin || (i as i64) >= n - margin)
            {
                continue;
            }
            let lhs = div_bn.values()[idx];
            let rhs = dp.values()[idx] - dm.values()[idx];
            violation = violation.max((lhs - rhs).abs());
        }
        rows.push(MollifyRow {
            eps,
            sup_bn,
            sup_times_eps: sup_bn * eps,
            delta_n,
            l1_distance: l1,
            divsplit_max_violation: violation,
            divsplit_nonnegative: nonneg,
        });
    }
    Ok(MollifyReport {
        delta_ref,
        rows,
        findings,
    })
}
