//! Assembly and solution of the discrete Dirichlet problem for
//! `-div(a grad u) + b . grad u` in weak form.
//!
//! The divergence form discretizes the three pairings
//! `<a grad u, grad phi> - <b u, grad phi> - <(div b) u, phi>` with centered
//! fluxes: diffusion through face-averaged conductivities, the drift term
//! through the centered divergence of `b u`, and the zeroth-order term
//! through the supplied nonnegative split of `div b`. The convection form
//! discretizes `b . grad u` directly and exists for smooth-coefficient
//! cross-validation. Both reduce to the `2d+1`-point Laplacian at `a = I`,
//! `b = 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    gradient, require_same_grid, w12_norm, GridDomain, InteriorIndex, MatrixField, ScalarField,
    VectorField,
};
use crate::linalg::{bicgstab, det_dot, pcg, Csr, CsrBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakForm {
    DivergenceForm,
    ConvectionForm,
}

/// Discrete operator over interior nodes with the boundary coupling kept
/// separate so one assembly serves many boundary data.
#[derive(Debug)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    /// `(interior row, boundary node, coefficient)` triples moved to the
    /// right-hand side at solve time.
    pub boundary_coupling: Vec<(u32, u32, f64)>,
    pub symmetric: bool,
    pub domain: Arc<GridDomain>,
    pub interior: InteriorIndex,
    /// Largest cell Peclet number `|b_k| h / a_kk` seen during assembly;
    /// centered convection can oscillate beyond 2.
    pub max_cell_peclet: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    pub linear_residual: f64,
    pub iterations: usize,
    /// `max(sup u - sup_boundary g, inf_boundary g - inf u, 0)`.
    pub max_principle_excess: f64,
}

/// Assembles the interior system for the requested weak form.
pub fn assemble(
    a: &MatrixField,
    b: &VectorField,
    divb_plus: &ScalarField,
    divb_minus: &ScalarField,
    domain: &Arc<GridDomain>,
    form: WeakForm,
) -> Result<LinearSystem> {
    require_same_grid(a.domain(), domain)?;
    require_same_grid(b.domain(), domain)?;
    require_same_grid(divb_plus.domain(), domain)?;
    require_same_grid(divb_minus.domain(), domain)?;
    for (field, name) in [(divb_plus, "divb_plus"), (divb_minus, "divb_minus")] {
        if let Some(pos) = field.values().iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!(
                "{name} must be nonnegative; node {pos} holds {}",
                field.values()[pos]
            )));
        }
    }

    let d = domain.dimension();
    let n = domain.resolution();
    let h = domain.spacing();
    let inv_h2 = 1.0 / (h * h);
    let inv_2h = 1.0 / (2.0 * h);
    let inv_4h2 = 1.0 / (4.0 * h * h);
    let interior = InteriorIndex::new(domain);
    if interior.is_empty() {
        return Err(Error::Config("grid has no interior nodes".into()));
    }
    let a_diagonal_only = a.is_diagonal();
    let b_is_zero = b
        .components()
        .iter()
        .all(|c| c.iter().all(|&v| v == 0.0));
    let div_is_zero = divb_plus.values().iter().all(|&v| v == 0.0)
        && divb_minus.values().iter().all(|&v| v == 0.0);

    let mut builder = CsrBuilder::new(interior.len());
    let mut coupling = Vec::new();
    let mut multi = vec![0usize; d];
    let mut max_peclet = 0.0f64;

    let add = |builder: &mut CsrBuilder,
                   coupling: &mut Vec<(u32, u32, f64)>,
                   row: usize,
                   node: usize,
                   value: f64,
                   interior: &InteriorIndex| {
        if value == 0.0 {
            return;
        }
        let rank = interior.rank_of_node[node];
        if rank >= 0 {
            builder.add(row, rank as usize, value);
        } else {
            coupling.push((row as u32, node as u32, value));
        }
    };

    for (row, &node) in interior.nodes.iter().enumerate() {
        domain.multi_index(node, &mut multi);
        // Diffusion, diagonal entries: centered fluxes with arithmetic face
        // averages of a_kk.
        for axis in 0..d {
            let stride = domain.strides()[axis];
            let up = node + stride;
            let down = node - stride;
            let a_here = a.entry(node, axis, axis);
            let a_up = 0.5 * (a_here + a.entry(up, axis, axis));
            let a_down = 0.5 * (a_here + a.entry(down, axis, axis));
            builder.add(row, row, (a_up + a_down) * inv_h2);
            add(&mut builder, &mut coupling, row, up, -a_up * inv_h2, &interior);
            add(&mut builder, &mut coupling, row, down, -a_down * inv_h2, &interior);
            let pe = b.component(axis)[node].abs() * h / a_here;
            max_peclet = max_peclet.max(pe);
        }
        // Diffusion, cross terms -d_j(a_jk d_k u) for j != k, centered.
        if !a_diagonal_only {
            for j in 0..d {
                for k in 0..d {
                    if j == k {
                        continue;
                    }
                    let sj = domain.strides()[j];
                    let sk = domain.strides()[k];
                    let a_pj = a.entry(node + sj, j, k);
                    let a_mj = a.entry(node - sj, j, k);
                    // Nodes i+e_j±e_k exist in the lattice because the center
                    // is interior (indices stay within [0, n-1]).
                    if multi[k] + 1 < n {
                        add(&mut builder, &mut coupling, row, node + sj + sk, -a_pj * inv_4h2, &interior);
                        add(&mut builder, &mut coupling, row, node - sj + sk, a_mj * inv_4h2, &interior);
                    }
                    if multi[k] > 0 {
                        add(&mut builder, &mut coupling, row, node + sj - sk, a_pj * inv_4h2, &interior);
                        add(&mut builder, &mut coupling, row, node - sj - sk, -a_mj * inv_4h2, &interior);
                    }
                }
            }
        }
        // Convection.
        match form {
            WeakForm::DivergenceForm => {
                for axis in 0..d {
                    let stride = domain.strides()[axis];
                    let up = node + stride;
                    let down = node - stride;
                    add(
                        &mut builder,
                        &mut coupling,
                        row,
                        up,
                        b.component(axis)[up] * inv_2h,
                        &interior,
                    );
                    add(
                        &mut builder,
                        &mut coupling,
                        row,
                        down,
                        -b.component(axis)[down] * inv_2h,
                        &interior,
                    );
                }
                let div_b = divb_plus.values()[node] - divb_minus.values()[node];
                if div_b != 0.0 {
                    builder.add(row, row, -div_b);
                }
            }
            WeakForm::ConvectionForm => {
                for axis in 0..d {
                    let stride = domain.strides()[axis];
                    let bv = b.component(axis)[node];
                    add(&mut builder, &mut coupling, row, node + stride, bv * inv_2h, &interior);
                    add(&mut builder, &mut coupling, row, node - stride, -bv * inv_2h, &interior);
                }
            }
        }
    }
    if max_peclet > 2.0 {
        log::warn!(
            "cell Peclet number {max_peclet:.3} exceeds 2; centered convection may oscillate"
        );
    }
    Ok(LinearSystem {
        matrix: builder.build(),
        rhs: vec![0.0; interior.len()],
        boundary_coupling: coupling,
        symmetric: b_is_zero && div_is_zero && a_diagonal_only,
        domain: domain.clone(),
        interior,
        max_cell_peclet: max_peclet,
    })
}

/// Solves with boundary trace taken from `g` (given as a full field; only
/// its boundary values enter the elimination, the interior is the warm
/// start).
pub fn solve_dirichlet(
    system: &LinearSystem,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    require_same_grid(g.domain(), &system.domain)?;
    let interior = &system.interior;
    let mut rhs = system.rhs.clone();
    for &(row, node, coeff) in &system.boundary_coupling {
        rhs[row as usize] -= coeff * g.values()[node as usize];
    }
    let mut x: Vec<f64> = interior.nodes.iter().map(|&i| g.values()[i]).collect();
    let diag = system.matrix.diagonal();
    if diag.iter().any(|&v| v == 0.0) {
        return Err(Error::Singular("zero pivot in assembled system".into()));
    }
    let stats = if system.symmetric {
        pcg(
            |v, out| system.matrix.matvec(v, out),
            Some(&diag),
            &rhs,
            &mut x,
            opts.rel_tol,
            opts.max_iterations,
        )
    } else {
        bicgstab(
            &system.matrix,
            &diag,
            &rhs,
            &mut x,
            opts.rel_tol,
            opts.max_iterations,
        )?
    };
    if !stats.converged {
        return Err(Error::Solve {
            iterations: stats.iterations,
            residual: stats.relative_residual,
            reason: "linear iteration did not reach the requested tolerance".into(),
        });
    }
    let mut values = g.values().to_vec();
    for (rank, &node) in interior.nodes.iter().enumerate() {
        values[node] = x[rank];
    }
    let u = ScalarField::from_values(system.domain.clone(), values)?;

    let mut g_sup = f64::NEG_INFINITY;
    let mut g_inf = f64::INFINITY;
    for idx in 0..system.domain.node_count() {
        if system.domain.is_boundary(idx) {
            g_sup = g_sup.max(g.values()[idx]);
            g_inf = g_inf.min(g.values()[idx]);
        }
    }
    let u_sup = u.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u_inf = u.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let excess = (u_sup - g_sup).max(g_inf - u_inf).max(0.0);
    Ok(SolveResult {
        u,
        linear_residual: stats.relative_residual,
        iterations: stats.iterations,
        max_principle_excess: excess,
    })
}

/// Normalized weak residual
/// `max_phi |<a grad u, grad phi> - <b u, grad phi> - <(div b) u, phi>| /
/// (||phi||_W12 ||u||_W12)` over compactly supported test functions.
pub fn weak_residual(
    u: &ScalarField,
    a: &MatrixField,
    b: &VectorField,
    divb_plus: &ScalarField,
    divb_minus: &ScalarField,
    test_functions: &[ScalarField],
) -> Result<f64> {
    let domain = u.domain();
    require_same_grid(a.domain(), domain)?;
    require_same_grid(b.domain(), domain)?;
    if test_functions.is_empty() {
        return Err(Error::Config("no test functions supplied".into()));
    }
    let d = domain.dimension();
    let n = domain.resolution();
    let mut multi = vec![0usize; d];
    for (t, phi) in test_functions.iter().enumerate() {
        require_same_grid(phi.domain(), domain)?;
        for idx in 0..domain.node_count() {
            if phi.values()[idx] == 0.0 {
                continue;
            }
            domain.multi_index(idx, &mut multi);
            if multi.iter().any(|&i| i < 2 || i + 2 >= n) {
                return Err(Error::Config(format!(
                    "test function {t} does not vanish near the boundary (node {idx})"
                )));
            }
        }
    }
    let grad_u = gradient(u);
    let hd = domain.cell_volume();
    let u_norm = w12_norm(u);
    if u_norm == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for phi in test_functions {
        let grad_phi = gradient(phi);
        let mut t1 = 0.0;
        for j in 0..d {
            // (a grad u)_j paired with (grad phi)_j.
            let mut flux = vec![0.0; domain.node_count()];
            for k in 0..d {
                let gk = grad_u.component(k);
                for (idx, slot) in flux.iter_mut().enumerate() {
                    *slot += a.entry(idx, j, k) * gk[idx];
                }
            }
            t1 += hd * det_dot(&flux, grad_phi.component(j));
        }
        let mut t2 = 0.0;
        for j in 0..d {
            let bu: Vec<f64> = b
                .component(j)
                .iter()
                .zip(u.values())
                .map(|(&bj, &uv)| bj * uv)
                .collect();
            t2 += hd * det_dot(&bu, grad_phi.component(j));
        }
        let divu_phi: f64 = hd
            * u.values()
                .iter()
                .zip(phi.values())
                .zip(divb_plus.values().iter().zip(divb_minus.values()))
                .map(|((&uv, &pv), (&dp, &dm))| (dp - dm) * uv * pv)
                .sum::<f64>();
        let phi_norm = w12_norm(phi);
        if phi_norm == 0.0 {
            continue;
        }
        let value = (t1 - t2 - divu_phi).abs() / (phi_norm * u_norm);
        worst = worst.max(value);
    }
    Ok(worst)
}
