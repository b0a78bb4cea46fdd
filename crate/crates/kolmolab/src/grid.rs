//! Discrete geometry and calculus on Cartesian boxes.
//!
//! Everything downstream (form-bound estimation, mollification, Dirichlet
//! solves, regularity measurements) works on the node lattice of `[-L, L]^d`
//! built here. Difference operators are second-order central in the interior
//! with one-sided second-order stencils on box faces, so affine fields are
//! differentiated exactly. Reductions use a fixed chunked summation order and
//! are bitwise deterministic regardless of thread count.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Node lattice of the box `[-L, L]^d` with `n` nodes per axis.
///
/// Node order is canonical: axis 0 fastest, so `idx = i0 + n*i1 + n^2*i2 + ...`.
#[derive(Debug)]
pub struct GridDomain {
    dimension: usize,
    half_extent: f64,
    resolution: usize,
    spacing: f64,
    node_count: usize,
    strides: Vec<usize>,
    boundary_mask: Vec<bool>,
}

/// Builds a grid over `[-half_extent, half_extent]^dimension`.
///
/// `d = 2` is accepted for fast tests but logged as outside the theory's
/// `d >= 3` assumption.
pub fn build_domain(dimension: usize, half_extent: f64, resolution: usize) -> Result<Arc<GridDomain>> {
    if dimension < 2 {
        return Err(Error::Config(format!(
            "dimension must be >= 2, got {dimension}"
        )));
    }
    if !(half_extent > 0.0) || !half_extent.is_finite() {
        return Err(Error::Config(format!(
            "half_extent must be positive and finite, got {half_extent}"
        )));
    }
    if resolution < 2 {
        return Err(Error::Config(format!(
            "resolution must be >= 2, got {resolution}"
        )));
    }
    let mut node_count: usize = 1;
    let mut strides = Vec::with_capacity(dimension);
    for _ in 0..dimension {
        strides.push(node_count);
        node_count = node_count.checked_mul(resolution).ok_or_else(|| {
            Error::Config(format!(
                "grid {resolution}^{dimension} overflows the node index space"
            ))
        })?;
    }
    if node_count > (1usize << 31) {
        return Err(Error::Config(format!(
            "grid {resolution}^{dimension} = {node_count} nodes exceeds the desk-scale cap 2^31"
        )));
    }
    if dimension == 2 {
        log::warn!("d = 2 grid requested; the regularity theory assumes d >= 3");
    }
    let spacing = 2.0 * half_extent / (resolution as f64 - 1.0);
    let mut boundary_mask = vec![false; node_count];
    let mut multi = vec![0usize; dimension];
    for (idx, flag) in boundary_mask.iter_mut().enumerate() {
        decompose(idx, resolution, &mut multi);
        *flag = multi.iter().any(|&i| i == 0 || i == resolution - 1);
    }
    Ok(Arc::new(GridDomain {
        dimension,
        half_extent,
        resolution,
        spacing,
        node_count,
        strides,
        boundary_mask,
    }))
}

fn decompose(idx: usize, n: usize, out: &mut [usize]) {
    let mut rest = idx;
    for slot in out.iter_mut() {
        *slot = rest % n;
        rest /= n;
    }
}

impl GridDomain {
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn node_count(&self) -> usize {
        self.node_count
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_mask[idx]
    }

    /// Volume element `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension as i32)
    }

    /// Coordinate of lattice index `i` along any axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing
    }

    pub fn multi_index(&self, idx: usize, out: &mut [usize]) {
        decompose(idx, self.resolution, out);
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    pub fn node_coords(&self, idx: usize, out: &mut [f64]) {
        let mut rest = idx;
        for slot in out.iter_mut() {
            *slot = self.axis_coord(rest % self.resolution);
            rest /= self.resolution;
        }
    }

    /// Sequential visit of every node with its coordinates.
    pub fn for_each_node(&self, mut visit: impl FnMut(usize, &[f64])) {
        let mut coords = vec![0.0; self.dimension];
        for idx in 0..self.node_count {
            self.node_coords(idx, &mut coords);
            visit(idx, &coords);
        }
    }

    /// Indices of nodes with `|x - center| < radius` (strict; no sub-cell correction).
    pub fn ball_indices(&self, center: &[f64], radius: f64) -> Vec<usize> {
        assert_eq!(center.len(), self.dimension, "center dimension mismatch");
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut coords = vec![0.0; self.dimension];
        for idx in 0..self.node_count {
            self.node_coords(idx, &mut coords);
            let d2: f64 = coords
                .iter()
                .zip(center)
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            if d2 < r2 {
                out.push(idx);
            }
        }
        out
    }

    /// Whether the closed ball `B_radius(center)` lies inside the box.
    pub fn ball_inside(&self, center: &[f64], radius: f64) -> bool {
        center
            .iter()
            .all(|&c| c.abs() + radius <= self.half_extent + 1e-12)
    }

    pub fn same_grid(&self, other: &GridDomain) -> bool {
        self.dimension == other.dimension
            && self.resolution == other.resolution
            && (self.half_extent - other.half_extent).abs() <= 1e-15 * self.half_extent.abs()
    }
}

/// Mapping between full node indices and the contiguous interior numbering
/// used by linear systems and eigenpencils.
#[derive(Debug)]
pub struct InteriorIndex {
    /// interior rank -> node index
    pub nodes: Vec<usize>,
    /// node index -> interior rank, or -1 for boundary nodes
    pub rank_of_node: Vec<i64>,
}

impl InteriorIndex {
    pub fn new(domain: &GridDomain) -> Self {
        let mut nodes = Vec::new();
        let mut rank_of_node = vec![-1i64; domain.node_count()];
        for idx in 0..domain.node_count() {
            if !domain.is_boundary(idx) {
                rank_of_node[idx] = nodes.len() as i64;
                nodes.push(idx);
            }
        }
        InteriorIndex { nodes, rank_of_node }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "{what} contains a non-finite value at node {pos}"
        )));
    }
    Ok(())
}

/// Grid-sampled scalar function. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::Config(format!(
                "scalar field has {} values for {} nodes",
                values.len(),
                domain.node_count()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(ScalarField { domain, values })
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; domain.node_count()];
        let mut coords = vec![0.0; domain.dimension()];
        for (idx, slot) in values.iter_mut().enumerate() {
            domain.node_coords(idx, &mut coords);
            *slot = f(&coords);
        }
        ScalarField::from_values(domain, values)
    }

    pub fn constant(domain: Arc<GridDomain>, value: f64) -> Result<Self> {
        ScalarField::from_values(domain.clone(), vec![value; domain.node_count()])
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        ScalarField::from_values(self.domain.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        require_same_grid(&self.domain, &other.domain)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::from_values(self.domain.clone(), values)
    }
}

/// Grid-sampled vector field, stored component-major.
#[derive(Debug, Clone)]
pub struct VectorField {
    domain: Arc<GridDomain>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn from_components(domain: Arc<GridDomain>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != domain.dimension() {
            return Err(Error::Config(format!(
                "vector field has {} components in dimension {}",
                components.len(),
                domain.dimension()
            )));
        }
        for comp in &components {
            if comp.len() != domain.node_count() {
                return Err(Error::Config(
                    "vector field component length does not match node count".into(),
                ));
            }
            check_finite(comp, "vector field")?;
        }
        Ok(VectorField { domain, components })
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let d = domain.dimension();
        let mut components = vec![vec![0.0; domain.node_count()]; d];
        let mut coords = vec![0.0; d];
        let mut value = vec![0.0; d];
        for idx in 0..domain.node_count() {
            domain.node_coords(idx, &mut coords);
            f(&coords, &mut value);
            for (k, comp) in components.iter_mut().enumerate() {
                comp[idx] = value[k];
            }
        }
        VectorField::from_components(domain, components)
    }

    pub fn zero(domain: Arc<GridDomain>) -> Self {
        let d = domain.dimension();
        let nc = domain.node_count();
        VectorField {
            domain,
            components: vec![vec![0.0; nc]; d],
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Pointwise Euclidean norm |V|.
    pub fn magnitude(&self) -> ScalarField {
        let nc = self.domain.node_count();
        let mut values = vec![0.0; nc];
        for comp in &self.components {
            for (slot, &v) in values.iter_mut().zip(comp) {
                *slot += v * v;
            }
        }
        for slot in values.iter_mut() {
            *slot = slot.sqrt();
        }
        ScalarField {
            domain: self.domain.clone(),
            values,
        }
    }
}

/// Grid-sampled symmetric matrix field (row-major d*d block per node).
#[derive(Debug, Clone)]
pub struct MatrixField {
    domain: Arc<GridDomain>,
    entries: Vec<f64>,
    /// `(sigma, xi)` when tagged uniformly elliptic.
    bounds: Option<(f64, f64)>,
}

impl MatrixField {
    pub fn from_entries(domain: Arc<GridDomain>, entries: Vec<f64>) -> Result<Self> {
        let d = domain.dimension();
        if entries.len() != domain.node_count() * d * d {
            return Err(Error::Config(
                "matrix field entry count does not match node count * d^2".into(),
            ));
        }
        check_finite(&entries, "matrix field")?;
        for idx in 0..domain.node_count() {
            let block = &entries[idx * d * d..(idx + 1) * d * d];
            for i in 0..d {
                for j in (i + 1)..d {
                    let a = block[i * d + j];
                    let b = block[j * d + i];
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::Config(format!(
                            "matrix field not symmetric at node {idx} ({a} vs {b})"
                        )));
                    }
                }
            }
        }
        Ok(MatrixField {
            domain,
            entries,
            bounds: None,
        })
    }

    pub fn identity(domain: Arc<GridDomain>) -> Self {
        let d = domain.dimension();
        let mut entries = vec![0.0; domain.node_count() * d * d];
        for idx in 0..domain.node_count() {
            for i in 0..d {
                entries[idx * d * d + i * d + i] = 1.0;
            }
        }
        MatrixField {
            domain,
            entries,
            bounds: Some((1.0, 1.0)),
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn block(&self, idx: usize) -> &[f64] {
        let d = self.domain.dimension();
        &self.entries[idx * d * d..(idx + 1) * d * d]
    }

    pub fn entry(&self, idx: usize, i: usize, j: usize) -> f64 {
        let d = self.domain.dimension();
        self.entries[idx * d * d + i * d + j]
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn set_bounds(&mut self, sigma: f64, xi: f64) {
        self.bounds = Some((sigma, xi));
    }

    /// True when every off-diagonal entry vanishes.
    pub fn is_diagonal(&self) -> bool {
        let d = self.domain.dimension();
        for idx in 0..self.domain.node_count() {
            let block = self.block(idx);
            for i in 0..d {
                for j in 0..d {
                    if i != j && block[i * d + j] != 0.0 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

pub(crate) fn require_same_grid(a: &GridDomain, b: &GridDomain) -> Result<()> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(Error::Config(
            "fields do not share one grid (dimension/extent/resolution mismatch)".into(),
        ))
    }
}

fn axis_derivative(domain: &GridDomain, values: &[f64], axis: usize, out: &mut [f64]) {
    let n = domain.resolution();
    let h = domain.spacing();
    let stride = domain.strides()[axis];
    let inv2h = 1.0 / (2.0 * h);
    if n < 3 {
        // Two-point difference; still exact on affine functions.
        for (idx, slot) in out.iter_mut().enumerate() {
            let i = (idx / stride) % n;
            *slot = if i == 0 {
                (values[idx + stride] - values[idx]) / h
            } else {
                (values[idx] - values[idx - stride]) / h
            };
        }
        return;
    }
    for (idx, slot) in out.iter_mut().enumerate() {
        let i = (idx / stride) % n;
        *slot = if i == 0 {
            (-3.0 * values[idx] + 4.0 * values[idx + stride] - values[idx + 2 * stride]) * inv2h
        } else if i == n - 1 {
            (3.0 * values[idx] - 4.0 * values[idx - stride] + values[idx - 2 * stride]) * inv2h
        } else {
            (values[idx + stride] - values[idx - stride]) * inv2h
        };
    }
}

/// Central-difference gradient (one-sided second order on box faces).
/// Exact on affine fields at every node.
pub fn gradient(f: &ScalarField) -> VectorField {
    let domain = f.domain().clone();
    let d = domain.dimension();
    let mut components = vec![vec![0.0; domain.node_count()]; d];
    for (axis, comp) in components.iter_mut().enumerate() {
        axis_derivative(&domain, f.values(), axis, comp);
    }
    VectorField { domain, components }
}

/// Discrete divergence, adjoint-compatible with [`gradient`] for fields
/// vanishing near the boundary.
pub fn divergence(v: &VectorField) -> ScalarField {
    let domain = v.domain().clone();
    let nc = domain.node_count();
    let mut values = vec![0.0; nc];
    let mut work = vec![0.0; nc];
    for axis in 0..domain.dimension() {
        axis_derivative(&domain, v.component(axis), axis, &mut work);
        for (slot, &w) in values.iter_mut().zip(&work) {
            *slot += w;
        }
    }
    ScalarField { domain, values }
}

/// Ball statistic selector for [`ball_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BallStat {
    Integral,
    Average,
    LpNorm(f64),
    Sup,
    Inf,
    Oscillation,
}

/// Statistics of `f` over the node mask of `B_radius(center)`.
///
/// `integral = h^d * sum`, `average = integral / (h^d * count)`,
/// `lp_norm = (h^d sum |f|^p)^{1/p}`, `oscillation = sup - inf`.
pub fn ball_stats(f: &ScalarField, center: &[f64], radius: f64, stat: BallStat) -> Result<f64> {
    let domain = f.domain();
    if center.len() != domain.dimension() {
        return Err(Error::Config(format!(
            "ball center has dimension {}, grid has {}",
            center.len(),
            domain.dimension()
        )));
    }
    let mask = domain.ball_indices(center, radius);
    masked_stats(f, &mask, stat)
}

/// Same statistics over an explicit node mask (used to reuse ball masks).
pub fn masked_stats(f: &ScalarField, mask: &[usize], stat: BallStat) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Domain(
            "ball mask contains no grid nodes (ball too small or outside the box)".into(),
        ));
    }
    let hd = f.domain().cell_volume();
    let values = f.values();
    Ok(match stat {
        BallStat::Integral => hd * crate::linalg::det_sum_iter(mask.iter().map(|&i| values[i])),
        BallStat::Average => {
            crate::linalg::det_sum_iter(mask.iter().map(|&i| values[i])) / mask.len() as f64
        }
        BallStat::LpNorm(p) => {
            if !(p > 0.0) {
                return Err(Error::Config(format!("lp_norm requires p > 0, got {p}")));
            }
            (hd * crate::linalg::det_sum_iter(mask.iter().map(|&i| values[i].abs().powf(p))))
                .powf(1.0 / p)
        }
        BallStat::Sup => mask.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max),
        BallStat::Inf => mask.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min),
        BallStat::Oscillation => {
            let sup = mask.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
            let inf = mask.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
            sup - inf
        }
    })
}

/// `h^d * sum_i f_i` over the whole box.
pub fn integral(f: &ScalarField) -> f64 {
    f.domain().cell_volume() * crate::linalg::det_sum(f.values())
}

/// `h^d * sum_i f_i g_i`.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    require_same_grid(f.domain(), g.domain())?;
    Ok(f.domain().cell_volume() * crate::linalg::det_dot(f.values(), g.values()))
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    (f.domain().cell_volume() * crate::linalg::det_dot(f.values(), f.values())).sqrt()
}

/// Discrete `W^{1,2}` norm: `sqrt(||f||_2^2 + ||grad f||_2^2)`.
pub fn w12_norm(f: &ScalarField) -> f64 {
    let grad = gradient(f);
    let hd = f.domain().cell_volume();
    let mut total = hd * crate::linalg::det_dot(f.values(), f.values());
    for comp in grad.components() {
        total += hd * crate::linalg::det_dot(comp, comp);
    }
    total.sqrt()
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn build_domain_dimensions_and_spacing() {
        let g = build_domain(3, 1.0, 33).unwrap();
        assert_eq!(g.node_count(), 35937);
        assert_relative_eq!(g.spacing(), 0.0625);

        let g2 = build_domain(2, 1.0, 3).unwrap();
        assert_eq!(g2.node_count(), 9);
        let boundary = g2.boundary_mask().iter().filter(|&&b| b).count();
        assert_eq!(boundary, 8);
    }

    #[test]
    fn build_domain_precondition_boundary() {
        assert!(build_domain(3, 1.0, 2).is_ok());
        assert!(matches!(build_domain(3, 1.0, 1), Err(Error::Config(_))));
        assert!(matches!(build_domain(1, 1.0, 5), Err(Error::Config(_))));
        assert!(matches!(build_domain(3, 0.0, 5), Err(Error::Config(_))));
        assert!(matches!(build_domain(3, -1.0, 5), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_exact_on_affine_everywhere() {
        let g = build_domain(3, 1.0, 9).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 7.0)
            .unwrap();
        let grad = gradient(&f);
        let expect = [2.0, -3.0, 0.5];
        for k in 0..3 {
            for &v in grad.component(k) {
                assert!((v - expect[k]).abs() < 1e-12, "axis {k}: {v}");
            }
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = build_domain(2, 1.0, 7).unwrap();
        let f = ScalarField::constant(g, 4.25).unwrap();
        let grad = gradient(&f);
        for k in 0..2 {
            assert!(grad.component(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_of_quadratic_exact_in_interior() {
        // Central difference of x^2 is exact: (x+h)^2 - (x-h)^2 = 4xh.
        let g = build_domain(2, 1.0, 21).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]).unwrap();
        let grad = gradient(&f);
        let n = g.resolution();
        let mut coords = vec![0.0; 2];
        for idx in 0..g.node_count() {
            let i0 = idx % n;
            if i0 == 0 || i0 == n - 1 {
                continue;
            }
            g.node_coords(idx, &mut coords);
            assert!((grad.component(0)[idx] - 2.0 * coords[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_constant_and_linear_fields() {
        let g = build_domain(3, 1.0, 9).unwrap();
        let e1 = VectorField::from_fn(g.clone(), |_, out| {
            out[0] = 1.0;
            out[1] = 0.0;
            out[2] = 0.0;
        })
        .unwrap();
        let div = divergence(&e1);
        assert!(div.values().iter().all(|&v| v.abs() < 1e-13));

        let x = VectorField::from_fn(g.clone(), |c, out| out.copy_from_slice(c)).unwrap();
        let div = divergence(&x);
        for idx in 0..g.node_count() {
            assert!((div.values()[idx] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_stats_average_of_one_is_one() {
        let g = build_domain(3, 1.0, 17).unwrap();
        let f = ScalarField::constant(g, 1.0).unwrap();
        let avg = ball_stats(&f, &[0.0, 0.0, 0.0], 0.6, BallStat::Average).unwrap();
        assert_relative_eq!(avg, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ball_stats_oscillation_of_affine() {
        let g = build_domain(3, 1.0, 33).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
        let r = 0.5;
        let osc = ball_stats(&f, &[0.0, 0.0, 0.0], r, BallStat::Oscillation).unwrap();
        assert!((osc - 2.0 * r).abs() <= 2.0 * g.spacing(), "osc = {osc}");
    }

    #[test]
    fn ball_stats_integral_of_x1_squared_converges() {
        // Analytic: integral of x1^2 over B_1 in d=3 is |B_1|/5 = 4*pi/15.
        let exact = 4.0 * std::f64::consts::PI / 15.0;
        let mut errors = Vec::new();
        for n in [17usize, 33, 65] {
            let g = build_domain(3, 1.0, n).unwrap();
            let f = ScalarField::from_fn(g, |x| x[0] * x[0]).unwrap();
            let val = ball_stats(&f, &[0.0, 0.0, 0.0], 1.0, BallStat::Integral).unwrap();
            errors.push((val - exact).abs() / exact);
        }
        assert!(errors[2] < 0.02, "finest error {}", errors[2]);
        assert!(
            errors[2] <= errors[0] / 2.0,
            "no first-order decay: {errors:?}"
        );
    }

    #[test]
    fn ball_volume_converges_first_order() {
        let r: f64 = 0.7;
        let exact = unit_ball_volume(3) * r.powi(3);
        let mut errors = Vec::new();
        for n in [17usize, 33, 65] {
            let g = build_domain(3, 1.0, n).unwrap();
            let f = ScalarField::constant(g, 1.0).unwrap();
            let val = ball_stats(&f, &[0.0, 0.0, 0.0], r, BallStat::Integral).unwrap();
            errors.push((val - exact).abs() / exact);
        }
        assert!(
            errors[2] <= errors[0] / 2.0,
            "mask volume error not decaying: {errors:?}"
        );
    }

    #[test]
    fn ball_stats_empty_mask_is_domain_error() {
        let g = build_domain(2, 1.0, 5).unwrap();
        let f = ScalarField::constant(g, 1.0).unwrap();
        // Radius smaller than any node distance from an off-lattice center.
        let err = ball_stats(&f, &[0.21, 0.21], 1e-6, BallStat::Average);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn integration_by_parts_exact_for_deeply_supported_test_function() {
        // phi vanishes on three node layers; central-difference summation by
        // parts then has no boundary leakage at all.
        let g = build_domain(2, 1.0, 33).unwrap();
        let h = g.spacing();
        let cut = 1.0 - 3.5 * h;
        let phi = ScalarField::from_fn(g.clone(), |x| {
            let mut v = 1.0;
            for &xi in x {
                let t = (xi / cut).abs();
                v *= if t >= 1.0 { 0.0 } else { (1.0 - t * t).powi(2) };
            }
            v
        })
        .unwrap();
        let v = VectorField::from_fn(g.clone(), |x, out| {
            out[0] = (std::f64::consts::PI * x[0]).sin() * (x[1] + 0.3);
            out[1] = x[0] * x[0] - 0.5 * x[1];
        })
        .unwrap();
        let grad_phi = gradient(&phi);
        let hd = g.cell_volume();
        let mut pairing = 0.0;
        for k in 0..2 {
            pairing += hd * crate::linalg::det_dot(v.component(k), grad_phi.component(k));
        }
        let div = divergence(&v);
        let other = inner(&div, &phi).unwrap();
        assert!(
            (pairing + other).abs() < 1e-12,
            "defect = {}",
            pairing + other
        );
    }

    #[test]
    fn integration_by_parts_first_order_for_boundary_supported_function() {
        // phi vanishing only on the boundary itself leaves an O(h) defect.
        let mut defects = Vec::new();
        for n in [17usize, 33] {
            let g = build_domain(2, 1.0, n).unwrap();
            let phi = ScalarField::from_fn(g.clone(), |x| {
                (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1])
            })
            .unwrap();
            let v = VectorField::from_fn(g.clone(), |x, out| {
                out[0] = (x[0] * 1.3).cos();
                out[1] = x[0] * x[1];
            })
            .unwrap();
            let grad_phi = gradient(&phi);
            let hd = g.cell_volume();
            let mut pairing = 0.0;
            for k in 0..2 {
                pairing += hd * crate::linalg::det_dot(v.component(k), grad_phi.component(k));
            }
            let div = divergence(&v);
            let defect = (pairing + inner(&div, &phi).unwrap()).abs();
            let scale = l2_norm(&v.magnitude()) * w12_norm(&phi);
            defects.push(defect / scale);
        }
        assert!(defects[1] <= 0.75 * defects[0], "defects: {defects:?}");
        assert!(defects[0] < 0.1, "defect too large: {defects:?}");
    }

    #[test]
    fn matrix_field_rejects_asymmetry() {
        let g = build_domain(2, 1.0, 3).unwrap();
        let mut entries = vec![0.0; g.node_count() * 4];
        for idx in 0..g.node_count() {
            entries[idx * 4] = 1.0;
            entries[idx * 4 + 3] = 1.0;
        }
        entries[1] = 0.5; // a_01 at node 0 without matching a_10
        assert!(MatrixField::from_entries(g, entries).is_err());
    }

    #[test]
    fn fields_reject_non_finite_values() {
        let g = build_domain(2, 1.0, 3).unwrap();
        let mut vals = vec![0.0; g.node_count()];
        vals[4] = f64::NAN;
        assert!(ScalarField::from_values(g, vals).is_err());
    }

    proptest! {
        #[test]
        fn oscillation_nonnegative_and_zero_iff_constant(
            values in proptest::collection::vec(-50.0f64..50.0, 81),
            constant in -5.0f64..5.0,
        ) {
            let g = build_domain(2, 1.0, 9).unwrap();
            let f = ScalarField::from_values(g.clone(), values).unwrap();
            let mask = g.ball_indices(&[0.0, 0.0], 0.8);
            let osc = masked_stats(&f, &mask, BallStat::Oscillation).unwrap();
            prop_assert!(osc >= 0.0);
            let distinct = mask
                .iter()
                .any(|&i| f.values()[i] != f.values()[mask[0]]);
            prop_assert_eq!(osc > 0.0, distinct);

            let c = ScalarField::constant(g, constant).unwrap();
            let osc_c = masked_stats(&c, &mask, BallStat::Oscillation).unwrap();
            prop_assert_eq!(osc_c, 0.0);
        }
    }
}
