//! Variational estimation of form-bound constants.
//!
//! The quadratic bound of a potential `W >= 0` with companion `c` is the
//! largest `mu` with `(M_W - c M) phi = mu L phi` over interior nodes, where
//! `M_W` is the `W`-weighted (lumped) mass matrix, `M` the mass matrix and
//! `L` the Dirichlet stiffness matrix. The multiplicative bound uses the
//! identity `delta ||grad phi|| ||phi|| = inf_eps [(delta eps/2)||grad phi||^2
//! + (delta/2eps)||phi||^2]`, so it is the supremum over `eps` of pencil
//! eigenvalues with right side `(eps/2) L + (1/2eps) M`, refined by a
//! golden-section pass around the coarse maximizer.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, InteriorIndex, ScalarField};
use crate::linalg::{det_dot, norm2, pcg, DirichletLaplacian};

/// Estimated bound constant with solver diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormBoundEstimate {
    /// `delta` (multiplicative) or `nu` (quadratic), clipped below at 0.
    pub bound: f64,
    /// The companion constant `c_delta`/`c_nu` used (an input).
    pub companion: f64,
    /// Optimizing `eps` for multiplicative bounds; absent for quadratic ones.
    pub eps_star: Option<f64>,
    pub rayleigh_iterations: usize,
    pub residual: f64,
}

/// Iteration controls for the pencil eigensolver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative eigenvalue tolerance (consecutive-change criterion).
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Seed of the deterministic start vector.
    pub seed: u64,
    /// Relative tolerance of the inner preconditioner solve.
    pub inner_rel_tol: f64,
    pub inner_max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            rel_tol: 1e-8,
            max_iterations: 10_000,
            seed: 0x4b4f_4c4d,
            inner_rel_tol: 1e-2,
            inner_max_iterations: 400,
        }
    }
}

struct EigenOutcome {
    mu: f64,
    vector: Vec<f64>,
    iterations: usize,
    residual: f64,
}

/// Locally optimal preconditioned Rayleigh-quotient ascent (single vector,
/// three-term subspace) for the maximal pencil eigenvalue. The preconditioner
/// is an inexact Jacobi-CG solve with the right side `B`.
fn max_pencil_eigenvalue(
    pencil: &PencilOp<'_>,
    opts: &EigenOptions,
    warm_start: Option<&[f64]>,
) -> Result<EigenOutcome> {
    let n = pencil.len();
    debug_assert!(n > 0);
    let mut x = match warm_start {
        Some(v) if v.len() == n => v.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    let mut ax = vec![0.0; n];
    let mut bx = vec![0.0; n];
    pencil.apply_a(&x, &mut ax);
    pencil.apply_b(&x, &mut bx);
    let bnorm = det_dot(&x, &bx).sqrt();
    if !(bnorm > 0.0) {
        return Err(Error::Degenerate("start vector is B-degenerate".into()));
    }
    let inv = 1.0 / bnorm;
    x.iter_mut().for_each(|v| *v *= inv);
    ax.iter_mut().for_each(|v| *v *= inv);
    bx.iter_mut().for_each(|v| *v *= inv);

    let jacobi = vec![pencil.b_diag(); n];
    let mut mu = det_dot(&x, &ax);
    let mut p: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut streak = 0usize;
    let mut r = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for it in 0..opts.max_iterations {
        for ((ri, &axi), &bxi) in r.iter_mut().zip(&ax).zip(&bx) {
            *ri = axi - mu * bxi;
        }
        let rnorm = norm2(&r);
        let scale = norm2(&ax) + mu.abs() * norm2(&bx);
        residual = if scale > 0.0 { rnorm / scale } else { 0.0 };
        if residual <= 1e-13 {
            return Ok(EigenOutcome {
                mu,
                vector: x,
                iterations: it,
                residual,
            });
        }

        // Preconditioned residual direction.
        let mut w = vec![0.0; n];
        pcg(
            |v, out| pencil.apply_b(v, out),
            Some(&jacobi),
            &r,
            &mut w,
            opts.inner_rel_tol,
            opts.inner_max_iterations,
        );

        // B-orthonormal basis [x, w, p].
        let mut basis: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
            vec![(x.clone(), ax.clone(), bx.clone())];
        let push = |cand: (Vec<f64>, Vec<f64>, Vec<f64>),
                        basis: &mut Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>| {
            let (mut v, mut av, mut bv) = cand;
            let orig = det_dot(&v, &bv).max(0.0);
            for (u, au, bu) in basis.iter() {
                let _ = au;
                let proj = det_dot(&v, bu);
                for i in 0..n {
                    v[i] -= proj * u[i];
                }
                // Recompute av/bv lazily below from linearity.
                let (pu_a, pu_b) = (proj, proj);
                for ((avi, &aui), (bvi, &bui)) in av
                    .iter_mut()
                    .zip(au.iter())
                    .zip(bv.iter_mut().zip(bu.iter()))
                {
                    *avi -= pu_a * aui;
                    *bvi -= pu_b * bui;
                }
            }
            let nb2 = det_dot(&v, &bv);
            if nb2 > 1e-28 * orig.max(1e-300) && nb2 > 0.0 {
                let inv = 1.0 / nb2.sqrt();
                v.iter_mut().for_each(|t| *t *= inv);
                av.iter_mut().for_each(|t| *t *= inv);
                bv.iter_mut().for_each(|t| *t *= inv);
                basis.push((v, av, bv));
            }
        };
        let mut aw = vec![0.0; n];
        let mut bw = vec![0.0; n];
        pencil.apply_a(&w, &mut aw);
        pencil.apply_b(&w, &mut bw);
        push((w, aw, bw), &mut basis);
        if let Some(prev) = p.take() {
            push(prev, &mut basis);
        }

        let k = basis.len();
        if k == 1 {
            // No usable direction left; the iterate is (numerically) optimal.
            return Ok(EigenOutcome {
                mu,
                vector: x,
                iterations: it,
                residual,
            });
        }
        // Rayleigh-Ritz in the subspace (B-Gram is the identity).
        let mut gram = nalgebra::DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let gij = det_dot(&basis[i].0, &basis[j].1);
                gram[(i, j)] = gij;
                gram[(j, i)] = gij;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut best = 0;
        for i in 1..k {
            if eig.eigenvalues[i] > eig.eigenvalues[best] {
                best = i;
            }
        }
        let y = eig.eigenvectors.column(best);
        let mut xn = vec![0.0; n];
        let mut axn = vec![0.0; n];
        let mut bxn = vec![0.0; n];
        let mut pn = vec![0.0; n];
        let mut apn = vec![0.0; n];
        let mut bpn = vec![0.0; n];
        for (i, (v, av, bv)) in basis.iter().enumerate() {
            let c = y[i];
            if c == 0.0 {
                continue;
            }
            for t in 0..n {
                xn[t] += c * v[t];
                axn[t] += c * av[t];
                bxn[t] += c * bv[t];
            }
            if i > 0 {
                for t in 0..n {
                    pn[t] += c * v[t];
                    apn[t] += c * av[t];
                    bpn[t] += c * bv[t];
                }
            }
        }
        let mu_new = eig.eigenvalues[best];
        // Periodic exact refresh against linear-combination drift.
        if (it + 1) % 64 == 0 {
            pencil.apply_a(&xn, &mut axn);
            pencil.apply_b(&xn, &mut bxn);
        }
        let nrm = det_dot(&xn, &bxn).sqrt();
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            xn.iter_mut().for_each(|t| *t *= inv);
            axn.iter_mut().for_each(|t| *t *= inv);
            bxn.iter_mut().for_each(|t| *t *= inv);
        }
        let change = (mu_new - mu).abs();
        if change <= opts.rel_tol * mu_new.abs().max(1e-30) {
            streak += 1;
        } else {
            streak = 0;
        }
        x = xn;
        ax = axn;
        bx = bxn;
        mu = mu_new;
        p = Some((pn, apn, bpn));
        if streak >= 3 {
            return Ok(EigenOutcome {
                mu,
                vector: x,
                iterations: it + 1,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Concrete pencil operator (avoids borrowing gymnastics in the solver).
struct PencilOp<'a> {
    a_diag: &'a [f64],
    lap: &'a DirichletLaplacian,
    beta_lap: f64,
    beta_mass: f64,
    dims: usize,
}

impl PencilOp<'_> {
    fn len(&self) -> usize {
        self.a_diag.len()
    }
    fn apply_a(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, &xi), &ai) in y.iter_mut().zip(x).zip(self.a_diag) {
            *yi = ai * xi;
        }
    }
    fn apply_b(&self, x: &[f64], y: &mut [f64]) {
        self.lap.apply(x, y);
        let (bl, bm) = (self.beta_lap, self.beta_mass);
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = bl * *yi + bm * xi;
        }
    }
    fn b_diag(&self) -> f64 {
        self.beta_lap * 2.0 * self.dims as f64 + self.beta_mass
    }
}

/// Workspace shared across repeated estimates on one grid.
pub struct PencilWorkspace {
    domain: Arc<GridDomain>,
    interior: InteriorIndex,
    lap: DirichletLaplacian,
}

impl PencilWorkspace {
    pub fn new(domain: &Arc<GridDomain>) -> Self {
        let interior = InteriorIndex::new(domain);
        let lap = DirichletLaplacian::new(domain, &interior);
        PencilWorkspace {
            domain: domain.clone(),
            interior,
            lap,
        }
    }

    fn interior_values(&self, f: &ScalarField) -> Vec<f64> {
        self.interior.nodes.iter().map(|&i| f.values()[i]).collect()
    }
}

fn check_nonnegative(field: &ScalarField, what: &str) -> Result<()> {
    if let Some(pos) = field.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "{what} must be nonnegative; node {pos} holds {}",
            field.values()[pos]
        )));
    }
    Ok(())
}

/// Largest `mu` of `(M_W - companion*M) phi = mu L phi`, clipped below at 0.
pub fn estimate_quadratic_bound(
    w: &ScalarField,
    companion: f64,
    opts: &EigenOptions,
) -> Result<FormBoundEstimate> {
    let ws = PencilWorkspace::new(w.domain());
    estimate_quadratic_bound_with(&ws, w, companion, opts)
}

pub fn estimate_quadratic_bound_with(
    ws: &PencilWorkspace,
    w: &ScalarField,
    companion: f64,
    opts: &EigenOptions,
) -> Result<FormBoundEstimate> {
    check_nonnegative(w, "potential W")?;
    if companion < 0.0 {
        return Err(Error::Config("companion constant must be >= 0".into()));
    }
    if !w.domain().same_grid(&ws.domain) {
        return Err(Error::Config("workspace grid mismatch".into()));
    }
    let mut a_diag = ws.interior_values(w);
    a_diag.iter_mut().for_each(|v| *v -= companion);
    if ws.interior.is_empty() || a_diag.iter().all(|&v| v <= 0.0) {
        return Ok(FormBoundEstimate {
            bound: 0.0,
            companion,
            eps_star: None,
            rayleigh_iterations: 0,
            residual: 0.0,
        });
    }
    let h = ws.domain.spacing();
    let pencil = PencilOp {
        a_diag: &a_diag,
        lap: &ws.lap,
        beta_lap: 1.0 / (h * h),
        beta_mass: 0.0,
        dims: ws.domain.dimension(),
    };
    let out = max_pencil_eigenvalue(&pencil, opts, None)?;
    Ok(FormBoundEstimate {
        bound: out.mu.max(0.0),
        companion,
        eps_star: None,
        rayleigh_iterations: out.iterations,
        residual: out.residual,
    })
}

/// Log-spaced default `eps` grid on `[h, 2L]`.
pub fn default_eps_grid(domain: &GridDomain, points: usize) -> Vec<f64> {
    let lo = domain.spacing();
    let hi = 2.0 * domain.half_extent();
    let m = points.max(2);
    (0..m)
        .map(|i| lo * (hi / lo).powf(i as f64 / (m - 1) as f64))
        .collect()
}

/// Multiplicative form-bound `delta`: supremum over `eps` of the pencil with
/// right side `(eps/2) L + (1/2eps) M`, golden-section refined around the
/// coarse maximizer.
pub fn estimate_mf_delta(
    absb: &ScalarField,
    companion: f64,
    eps_grid: &[f64],
    opts: &EigenOptions,
) -> Result<FormBoundEstimate> {
    let ws = PencilWorkspace::new(absb.domain());
    estimate_mf_delta_with(&ws, absb, companion, eps_grid, opts)
}

pub fn estimate_mf_delta_with(
    ws: &PencilWorkspace,
    absb: &ScalarField,
    companion: f64,
    eps_grid: &[f64],
    opts: &EigenOptions,
) -> Result<FormBoundEstimate> {
    check_nonnegative(absb, "|b|")?;
    if companion < 0.0 {
        return Err(Error::Config("companion constant must be >= 0".into()));
    }
    if eps_grid.is_empty() {
        return Err(Error::Config("eps grid must be nonempty".into()));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("eps grid entries must be positive".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("eps grid must be strictly increasing".into()));
    }
    if !absb.domain().same_grid(&ws.domain) {
        return Err(Error::Config("workspace grid mismatch".into()));
    }
    let mut a_diag = ws.interior_values(absb);
    a_diag.iter_mut().for_each(|v| *v -= companion);
    if ws.interior.is_empty() || a_diag.iter().all(|&v| v <= 0.0) {
        return Ok(FormBoundEstimate {
            bound: 0.0,
            companion,
            eps_star: Some(eps_grid[0]),
            rayleigh_iterations: 0,
            residual: 0.0,
        });
    }

    let h = ws.domain.spacing();
    let dims = ws.domain.dimension();
    let mut total_iters = 0usize;
    let mut warm: Option<Vec<f64>> = None;
    let mut eval = |eps: f64, warm: &mut Option<Vec<f64>>| -> Result<(f64, f64)> {
        let pencil = PencilOp {
            a_diag: &a_diag,
            lap: &ws.lap,
            beta_lap: eps / (2.0 * h * h),
            beta_mass: 1.0 / (2.0 * eps),
            dims,
        };
        let out = max_pencil_eigenvalue(&pencil, opts, warm.as_deref())?;
        total_iters += out.iterations;
        *warm = Some(out.vector);
        Ok((out.mu, out.residual))
    };

    // Coarse sweep with automatic widening when the maximizer sits on an
    // edge of the grid.
    let mut grid: Vec<f64> = eps_grid.to_vec();
    let mut values: Vec<(f64, f64)> = Vec::new();
    for &eps in &grid {
        values.push(eval(eps, &mut warm)?);
    }
    for _ in 0..3 {
        let best = argmax(&values);
        if grid.len() >= 2 && best == 0 {
            let new_eps = grid[0] / 4.0;
            grid.insert(0, new_eps);
            values.insert(0, eval(new_eps, &mut warm)?);
        } else if grid.len() >= 2 && best + 1 == grid.len() {
            let new_eps = grid[grid.len() - 1] * 4.0;
            grid.push(new_eps);
            values.push(eval(new_eps, &mut warm)?);
        } else {
            break;
        }
    }
    let best = argmax(&values);
    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(grid.len() - 1)],
    );
    if lo >= hi {
        lo = grid[best] * 0.5;
        hi = grid[best] * 2.0;
    }

    // Golden-section maximization in log(eps) to relative width 1e-3.
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c.exp(), &mut warm)?;
    let mut fd = eval(d.exp(), &mut warm)?;
    let mut best_pair = if values[best].0 > fc.0.max(fd.0) {
        (grid[best], values[best])
    } else if fc.0 >= fd.0 {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    };
    while (b - a) > 1e-3 {
        if fc.0 >= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c.exp(), &mut warm)?;
            if fc.0 > best_pair.1 .0 {
                best_pair = (c.exp(), fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d.exp(), &mut warm)?;
            if fd.0 > best_pair.1 .0 {
                best_pair = (d.exp(), fd);
            }
        }
    }
    let (eps_star, (mu, residual)) = best_pair;
    Ok(FormBoundEstimate {
        bound: mu.max(0.0),
        companion,
        eps_star: Some(eps_star),
        rayleigh_iterations: total_iters,
        residual,
    })
}

fn argmax(values: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.0 > values[best].0 {
            best = i;
        }
    }
    best
}

/// Analytic form bound `4 kappa / (d - 2)` of the Hardy potential
/// `kappa (d-2) |x - x0|^-2` (companion 0).
pub fn hardy_reference(d: usize, kappa: f64) -> Result<f64> {
    if d < 3 {
        return Err(Error::Domain(format!(
            "Hardy reference requires d >= 3 (constant degenerates), got d = {d}"
        )));
    }
    if kappa < 0.0 {
        return Err(Error::Domain("kappa must be >= 0".into()));
    }
    Ok(4.0 * kappa / (d as f64 - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::hardy_potential;
    use crate::grid::build_domain;

    fn opts() -> EigenOptions {
        EigenOptions::default()
    }

    #[test]
    fn zero_potential_has_zero_bound() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let w = ScalarField::constant(g, 0.0).unwrap();
        let est = estimate_quadratic_bound(&w, 0.0, &opts()).unwrap();
        assert_eq!(est.bound, 0.0);
        assert_eq!(est.rayleigh_iterations, 0);
    }

    #[test]
    fn constant_absorbed_by_companion() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let w = ScalarField::constant(g, 7.0).unwrap();
        let est = estimate_quadratic_bound(&w, 7.0, &opts()).unwrap();
        assert_eq!(est.bound, 0.0);
    }

    #[test]
    fn rejects_negative_inputs() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let w = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!(matches!(
            estimate_quadratic_bound(&w, 0.0, &opts()),
            Err(Error::Domain(_))
        ));
        let ok = ScalarField::constant(g, 1.0).unwrap();
        assert!(estimate_quadratic_bound(&ok, -1.0, &opts()).is_err());
    }

    #[test]
    fn hardy_bound_below_continuum_and_refining_upward() {
        // W = |x|^-2 (offset h/3), d = 3: continuum constant is 4/(d-2)^2 = 4.
        let mut bounds = Vec::new();
        for n in [9usize, 17] {
            let g = build_domain(3, 1.0, n).unwrap();
            let w = hardy_potential(g.clone(), 1.0, &[0.0, 0.0, 0.0], g.spacing() / 3.0).unwrap();
            let est = estimate_quadratic_bound(&w, 0.0, &opts()).unwrap();
            bounds.push(est.bound);
        }
        assert!(bounds[0] > 0.5, "unexpectedly small: {bounds:?}");
        assert!(bounds[1] >= bounds[0] - 1e-9, "not nondecreasing: {bounds:?}");
        assert!(bounds[1] <= 4.0 * 1.05, "exceeds Hardy constant: {bounds:?}");
    }

    #[test]
    fn quadratic_bound_monotone_in_w_and_companion() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let w1 = ScalarField::from_fn(g.clone(), |x| x[0].abs() + 0.2).unwrap();
        let w2 = ScalarField::from_fn(g.clone(), |x| x[0].abs() + 0.2 + x[1] * x[1]).unwrap();
        let e1 = estimate_quadratic_bound(&w1, 0.0, &opts()).unwrap();
        let e2 = estimate_quadratic_bound(&w2, 0.0, &opts()).unwrap();
        assert!(e1.bound <= e2.bound + 1e-9, "{} vs {}", e1.bound, e2.bound);

        let ec = estimate_quadratic_bound(&w1, 0.3, &opts()).unwrap();
        assert!(ec.bound <= e1.bound + 1e-9);
    }

    #[test]
    fn quadratic_bound_scales_linearly() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let w = ScalarField::from_fn(g.clone(), |x| (x[0] + 1.1).powi(2)).unwrap();
        let base = estimate_quadratic_bound(&w, 0.5, &opts()).unwrap();
        let scaled_w = w.map(|v| 2.0 * v).unwrap();
        let scaled = estimate_quadratic_bound(&scaled_w, 1.0, &opts()).unwrap();
        assert!(
            (scaled.bound - 2.0 * base.bound).abs() <= 1e-12 * scaled.bound.abs().max(1e-12),
            "{} vs {}",
            scaled.bound,
            2.0 * base.bound
        );
    }

    #[test]
    fn mf_delta_trivial_cases() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let zero = ScalarField::constant(g.clone(), 0.0).unwrap();
        let grid = default_eps_grid(&g, 5);
        let est = estimate_mf_delta(&zero, 0.0, &grid, &opts()).unwrap();
        assert_eq!(est.bound, 0.0);

        let c = ScalarField::constant(g.clone(), 3.0).unwrap();
        let est = estimate_mf_delta(&c, 3.0, &grid, &opts()).unwrap();
        assert_eq!(est.bound, 0.0);

        assert!(estimate_mf_delta(&c, 0.0, &[], &opts()).is_err());
        assert!(estimate_mf_delta(&c, 0.0, &[0.5, 0.2], &opts()).is_err());
    }

    #[test]
    fn mf_delta_hardy_respects_cauchy_schwarz_cap() {
        // |b| = kappa |x|^-1: Hardy + Cauchy-Schwarz give
        // delta <= 2 kappa/(d-2) = 2 kappa at d = 3.
        let g = build_domain(3, 1.0, 17).unwrap();
        let rho = g.spacing() / 3.0;
        let absb = hardy_potential(g.clone(), 1.0, &[0.0, 0.0, 0.0], rho)
            .unwrap()
            .map(|v| v.sqrt())
            .unwrap();
        let grid = default_eps_grid(&g, 9);
        let est = estimate_mf_delta(&absb, 0.0, &grid, &opts()).unwrap();
        assert!(est.bound > 0.4, "suspiciously small: {}", est.bound);
        assert!(est.bound <= 2.0 * 1.02, "exceeds cap: {}", est.bound);
        // The optimizer of this singular field concentrates at the center, so
        // the maximizing eps may fall below h; the automatic widening must
        // keep it strictly inside the (widened) search range.
        let eps_star = est.eps_star.unwrap();
        assert!(eps_star > grid[0] / 64.0 && eps_star < grid[grid.len() - 1] * 64.0);
    }

    #[test]
    fn mf_delta_constant_field_interior_maximizer() {
        let g = build_domain(2, 1.0, 9).unwrap();
        let c = ScalarField::constant(g.clone(), 2.0).unwrap();
        let grid = default_eps_grid(&g, 9);
        let est = estimate_mf_delta(&c, 0.0, &grid, &opts()).unwrap();
        // For constant fields mu(eps) = 2 / ((eps/2) lam1 + 1/(2 eps)) with
        // lam1 the smallest Dirichlet eigenvalue; max over eps is
        // 2/sqrt(lam1), attained inside the sweep.
        assert!(est.bound > 0.0);
        let eps = est.eps_star.unwrap();
        assert!(eps > grid[0] && eps < grid[grid.len() - 1]);
    }

    #[test]
    fn hardy_reference_values() {
        assert_eq!(hardy_reference(3, 1.0).unwrap(), 4.0);
        assert_eq!(hardy_reference(4, 1.0).unwrap(), 2.0);
        assert_eq!(hardy_reference(3, 0.0).unwrap(), 0.0);
        assert!(hardy_reference(2, 1.0).is_err());
    }
}
