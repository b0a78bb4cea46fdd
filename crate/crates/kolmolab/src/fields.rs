//! Catalog of analytic coefficient fields: singular drifts with sign-split
//! divergences, uniformly elliptic matrices, and smooth boundary data.
//!
//! The attracting/repelling pair drift
//! `b(x) = k+ |x-x+|^-2 (x-x+) - k- |x-x-|^-2 (x-x-)` has
//! `div b = k+ (d-2)|x-x+|^-2 - k- (d-2)|x-x-|^-2`, whose two potentials form
//! the canonical nonnegative split with form bounds `4 k/(d-2)` each.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    divergence, GridDomain, MatrixField, ScalarField, VectorField,
};

/// Drift catalog entry. `regularization` shifts singular centers off the
/// lattice by `rho` along the box diagonal so nodal samples stay finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(flatten)]
    pub kind: DriftKind,
    /// Offset distance `rho >= 0` applied to singular centers. `None` means
    /// the grid-aware default `h/3`.
    #[serde(default)]
    pub regularization: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    Constant { vector: Vec<f64> },
    HardyPair {
        kappa_plus: f64,
        kappa_minus: f64,
        center_plus: Vec<f64>,
        center_minus: Vec<f64>,
    },
    SmoothBounded { name: String },
    File { path: PathBuf },
}

impl DriftSpec {
    pub fn zero() -> Self {
        DriftSpec {
            kind: DriftKind::Zero,
            regularization: None,
        }
    }

    pub fn hardy_pair(
        kappa_plus: f64,
        kappa_minus: f64,
        center_plus: Vec<f64>,
        center_minus: Vec<f64>,
    ) -> Self {
        DriftSpec {
            kind: DriftKind::HardyPair {
                kappa_plus,
                kappa_minus,
                center_plus,
                center_minus,
            },
            regularization: None,
        }
    }
}

/// Elliptic matrix catalog entry; `sigma()`/`xi()` are the certified
/// eigenvalue bounds of the realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSpec {
    Identity,
    Diagonal { values: Vec<f64> },
    Checkerboard { sigma: f64, xi: f64, period: usize },
}

impl MatrixSpec {
    pub fn sigma(&self) -> f64 {
        match self {
            MatrixSpec::Identity => 1.0,
            MatrixSpec::Diagonal { values } => values.iter().cloned().fold(f64::INFINITY, f64::min),
            MatrixSpec::Checkerboard { sigma, .. } => *sigma,
        }
    }

    pub fn xi(&self) -> f64 {
        match self {
            MatrixSpec::Identity => 1.0,
            MatrixSpec::Diagonal { values } => {
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
            MatrixSpec::Checkerboard { xi, .. } => *xi,
        }
    }

    fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            MatrixSpec::Identity => Ok(()),
            MatrixSpec::Diagonal { values } => {
                if values.len() != dimension {
                    return Err(Error::Config(format!(
                        "diagonal matrix spec has {} values in dimension {dimension}",
                        values.len()
                    )));
                }
                if self.sigma() <= 0.0 {
                    return Err(Error::Config(
                        "diagonal matrix spec must have positive entries".into(),
                    ));
                }
                Ok(())
            }
            MatrixSpec::Checkerboard { sigma, xi, period } => {
                if !(*sigma > 0.0) || xi < sigma {
                    return Err(Error::Config(format!(
                        "checkerboard requires 0 < sigma <= xi, got sigma={sigma}, xi={xi}"
                    )));
                }
                if *period == 0 {
                    return Err(Error::Config("checkerboard period must be >= 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// Divergence split provenance: analytic formulas or sign-split of the
/// discrete divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivSplit {
    Analytic,
    Numeric,
}

/// Drift realization: the field plus a nonnegative split of its divergence.
#[derive(Debug, Clone)]
pub struct DriftParts {
    pub b: VectorField,
    pub div_plus: ScalarField,
    pub div_minus: ScalarField,
    pub split: DivSplit,
}

fn diagonal_shift(d: usize, rho: f64) -> f64 {
    rho / (d as f64).sqrt()
}

/// Snaps the center to the nearest lattice node, then offsets it by `rho`
/// along the box diagonal. The snap guarantees the distance to the nearest
/// node is exactly `rho` (for `rho < h/2`), independent of how the requested
/// center sits relative to the lattice.
fn effective_center(domain: &GridDomain, center: &[f64], rho: f64) -> Vec<f64> {
    if rho == 0.0 {
        return center.to_vec();
    }
    let h = domain.spacing();
    let le = domain.half_extent();
    let s = diagonal_shift(center.len(), rho);
    center
        .iter()
        .map(|&c| {
            let snapped = -le + ((c + le) / h).round().clamp(0.0, (domain.resolution() - 1) as f64) * h;
            snapped + s
        })
        .collect()
}

fn center_on_node(domain: &GridDomain, center: &[f64]) -> bool {
    let h = domain.spacing();
    center.iter().all(|&c| {
        let t = (c + domain.half_extent()) / h;
        let dist = (t - t.round()).abs();
        t.round() >= 0.0 && t.round() <= (domain.resolution() - 1) as f64 && dist * h < 1e-12
    })
}

fn check_center(domain: &GridDomain, center: &[f64], rho: f64, tag: &str) -> Result<Vec<f64>> {
    if center.len() != domain.dimension() {
        return Err(Error::Config(format!(
            "{tag} center has dimension {}, grid has {}",
            center.len(),
            domain.dimension()
        )));
    }
    if center.iter().any(|&c| c.abs() > domain.half_extent()) {
        return Err(Error::Config(format!("{tag} center lies outside the box")));
    }
    let eff = effective_center(domain, center, rho);
    if center_on_node(domain, &eff) {
        return Err(Error::Config(format!(
            "{tag} singular center coincides with a grid node and regularization is 0"
        )));
    }
    Ok(eff)
}

/// Hardy potential `kappa |x - c_eff|^-2` with the off-lattice center shift.
pub fn hardy_potential(
    domain: Arc<GridDomain>,
    kappa: f64,
    center: &[f64],
    rho: f64,
) -> Result<ScalarField> {
    let eff = check_center(&domain, center, rho, "hardy potential")?;
    ScalarField::from_fn(domain, |x| {
        let r2: f64 = x.iter().zip(&eff).map(|(a, c)| (a - c) * (a - c)).sum();
        kappa / r2
    })
}

/// Realizes a drift spec on the grid together with the nonnegative split of
/// its divergence. Analytic splits are used whenever the catalog provides a
/// formula; file-loaded drifts fall back to the sign-split of the discrete
/// divergence and are tagged [`DivSplit::Numeric`].
pub fn make_drift(spec: &DriftSpec, domain: &Arc<GridDomain>) -> Result<DriftParts> {
    let d = domain.dimension();
    let rho = spec.regularization.unwrap_or(domain.spacing() / 3.0);
    if rho < 0.0 {
        return Err(Error::Config("drift regularization must be >= 0".into()));
    }
    let zero = || ScalarField::constant(domain.clone(), 0.0);
    match &spec.kind {
        DriftKind::Zero => Ok(DriftParts {
            b: VectorField::zero(domain.clone()),
            div_plus: zero()?,
            div_minus: zero()?,
            split: DivSplit::Analytic,
        }),
        DriftKind::Constant { vector } => {
            if vector.len() != d {
                return Err(Error::Config(format!(
                    "constant drift has {} components in dimension {d}",
                    vector.len()
                )));
            }
            let v = vector.clone();
            Ok(DriftParts {
                b: VectorField::from_fn(domain.clone(), |_, out| out.copy_from_slice(&v))?,
                div_plus: zero()?,
                div_minus: zero()?,
                split: DivSplit::Analytic,
            })
        }
        DriftKind::HardyPair {
            kappa_plus,
            kappa_minus,
            center_plus,
            center_minus,
        } => {
            if d < 3 {
                return Err(Error::Config(
                    "hardy_pair drift requires d >= 3 (the Hardy constant degenerates below)".into(),
                ));
            }
            if *kappa_plus < 0.0 || *kappa_minus < 0.0 {
                return Err(Error::Config("hardy_pair requires kappa_{+,-} >= 0".into()));
            }
            let cp = check_center(domain, center_plus, rho, "hardy_pair (+)")?;
            let cm = check_center(domain, center_minus, rho, "hardy_pair (-)")?;
            let (kp, km) = (*kappa_plus, *kappa_minus);
            let b = VectorField::from_fn(domain.clone(), |x, out| {
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = 0.0;
                    let _ = k;
                }
                let rp2: f64 = x.iter().zip(&cp).map(|(a, c)| (a - c) * (a - c)).sum();
                let rm2: f64 = x.iter().zip(&cm).map(|(a, c)| (a - c) * (a - c)).sum();
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = kp * (x[k] - cp[k]) / rp2 - km * (x[k] - cm[k]) / rm2;
                }
            })?;
            let degree = (d - 2) as f64;
            let div_plus = hardy_potential(domain.clone(), kp * degree, center_plus, rho)?;
            let div_minus = hardy_potential(domain.clone(), km * degree, center_minus, rho)?;
            Ok(DriftParts {
                b,
                div_plus,
                div_minus,
                split: DivSplit::Analytic,
            })
        }
        DriftKind::SmoothBounded { name } => {
            let b = match name.as_str() {
                // Cyclic-shift sine field: b_k = sin(pi x_{k+1 mod d}), div = 0.
                "sine_curl" => VectorField::from_fn(domain.clone(), |x, out| {
                    let d = out.len();
                    for k in 0..d {
                        out[k] = (std::f64::consts::PI * x[(k + 1) % d]).sin();
                    }
                })?,
                // Single-component shear: b_1 = sin(pi x_2), rest 0, div = 0.
                "sine_shear" => VectorField::from_fn(domain.clone(), |x, out| {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    out[0] = (std::f64::consts::PI * x[1]).sin();
                })?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown smooth_bounded drift '{other}' (catalog: sine_curl, sine_shear)"
                    )))
                }
            };
            Ok(DriftParts {
                b,
                div_plus: zero()?,
                div_minus: zero()?,
                split: DivSplit::Analytic,
            })
        }
        DriftKind::File { path } => {
            let b = crate::io::load_vector_field(path, domain)?;
            let (div_plus, div_minus) = split_divergence(&b)?;
            Ok(DriftParts {
                b,
                div_plus,
                div_minus,
                split: DivSplit::Numeric,
            })
        }
    }
}

/// Realizes a matrix spec and certifies the per-node eigenvalue range
/// `[sigma, xi]`.
pub fn make_matrix(spec: &MatrixSpec, domain: &Arc<GridDomain>) -> Result<MatrixField> {
    let d = domain.dimension();
    spec.validate(d)?;
    let mut field = match spec {
        MatrixSpec::Identity => MatrixField::identity(domain.clone()),
        MatrixSpec::Diagonal { values } => {
            let mut entries = vec![0.0; domain.node_count() * d * d];
            for idx in 0..domain.node_count() {
                for (i, &v) in values.iter().enumerate() {
                    entries[idx * d * d + i * d + i] = v;
                }
            }
            MatrixField::from_entries(domain.clone(), entries)?
        }
        MatrixSpec::Checkerboard { sigma, xi, period } => {
            let mut entries = vec![0.0; domain.node_count() * d * d];
            let mut multi = vec![0usize; d];
            for idx in 0..domain.node_count() {
                domain.multi_index(idx, &mut multi);
                let parity: usize = multi.iter().map(|&i| i / period).sum();
                let v = if parity % 2 == 0 { *sigma } else { *xi };
                for i in 0..d {
                    entries[idx * d * d + i * d + i] = v;
                }
            }
            MatrixField::from_entries(domain.clone(), entries)?
        }
    };
    let (sigma, xi) = (spec.sigma(), spec.xi());
    verify_ellipticity(&field, sigma, xi)?;
    field.set_bounds(sigma, xi);
    Ok(field)
}

/// Checks every node's eigenvalues against `[sigma, xi]`.
pub fn verify_ellipticity(field: &MatrixField, sigma: f64, xi: f64) -> Result<()> {
    let d = field.domain().dimension();
    let tol = 1e-10 * xi.max(1.0);
    for idx in 0..field.domain().node_count() {
        let block = field.block(idx);
        let (lo, hi) = if block_is_diagonal(block, d) {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..d {
                lo = lo.min(block[i * d + i]);
                hi = hi.max(block[i * d + i]);
            }
            (lo, hi)
        } else {
            let m = nalgebra::DMatrix::from_row_slice(d, d, block);
            let eig = m.symmetric_eigenvalues();
            (
                eig.iter().cloned().fold(f64::INFINITY, f64::min),
                eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        if lo < sigma - tol || hi > xi + tol {
            return Err(Error::Config(format!(
                "matrix field eigenvalues [{lo:.6}, {hi:.6}] at node {idx} escape [{sigma}, {xi}]"
            )));
        }
    }
    Ok(())
}

fn block_is_diagonal(block: &[f64], d: usize) -> bool {
    for i in 0..d {
        for j in 0..d {
            if i != j && block[i * d + j] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Sign-split of the discrete divergence: `(max(div V, 0), -min(div V, 0))`.
/// The difference reproduces the discrete divergence exactly.
pub fn split_divergence(v: &VectorField) -> Result<(ScalarField, ScalarField)> {
    let div = divergence(v);
    let plus = div.map(|x| x.max(0.0))?;
    let minus = div.map(|x| (-x).max(0.0))?;
    Ok((plus, minus))
}
