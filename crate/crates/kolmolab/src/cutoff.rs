//! Radial cut-off families with certified gradient bounds.
//!
//! The profile is `eta(y) = 1 - int_1^{1+(|y|-r1)/(r2-r1)} phi(s) ds` with the
//! bump `phi(s) = C exp(-1/(1/4 - (s-3/2)^2))` supported on `[1, 2]` and `C`
//! fixed by `int_1^2 phi = 1`. All radial evaluations go through one shared
//! high-resolution table of the cumulative integral; the normalized constants
//! `c1, c2, c3` of the gradient estimates are pure profile quantities and
//! therefore scale-free.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, ScalarField, VectorField};

const TABLE_INTERVALS: usize = 16_384;

/// Shared table of the bump and its cumulative integral on `[1, 2]`.
struct ProfileTable {
    /// Normalization constant `C` with `int_1^2 phi = 1`.
    normalizer: f64,
    /// `phi` at the knots (normalized).
    phi: Vec<f64>,
    /// Cumulative `int_1^s phi` at the knots (normalized, ends at 1).
    cumulative: Vec<f64>,
}

fn raw_bump(s: f64) -> f64 {
    let u = s - 1.5;
    let q = 0.25 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

fn table() -> &'static ProfileTable {
    static TABLE: OnceLock<ProfileTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = TABLE_INTERVALS;
        let dt = 1.0 / n as f64;
        let raw: Vec<f64> = (0..=n).map(|i| raw_bump(1.0 + i as f64 * dt)).collect();
        // Trapezoid is spectrally accurate here: the bump vanishes to all
        // orders at both endpoints.
        let mut cumulative = vec![0.0; n + 1];
        for i in 1..=n {
            cumulative[i] = cumulative[i - 1] + 0.5 * dt * (raw[i - 1] + raw[i]);
        }
        let total = cumulative[n];
        let normalizer = 1.0 / total;
        let phi = raw.iter().map(|&v| v * normalizer).collect();
        let cumulative = cumulative.iter().map(|&v| v * normalizer).collect();
        ProfileTable {
            normalizer,
            phi,
            cumulative,
        }
    })
}

/// Normalized bump `phi(s)` on `[1, 2]`.
pub fn bump(s: f64) -> f64 {
    table().normalizer * raw_bump(s)
}

/// `phi'(s)`, computed analytically via the chain rule.
pub fn bump_derivative(s: f64) -> f64 {
    let u = s - 1.5;
    let q = 0.25 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        bump(s) * (-2.0 * u / (q * q))
    }
}

/// `int_1^s phi` by cubic Hermite interpolation of the shared table
/// (knot derivatives are the exact bump values).
fn cumulative(s: f64) -> f64 {
    if s <= 1.0 {
        return 0.0;
    }
    if s >= 2.0 {
        return 1.0;
    }
    let t = table();
    let n = TABLE_INTERVALS;
    let x = (s - 1.0) * n as f64;
    let i = (x.floor() as usize).min(n - 1);
    let u = x - i as f64;
    let dt = 1.0 / n as f64;
    let (f0, f1) = (t.cumulative[i], t.cumulative[i + 1]);
    let (d0, d1) = (t.phi[i] * dt, t.phi[i + 1] * dt);
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * f0
        + (u3 - 2.0 * u2 + u) * d0
        + (-2.0 * u3 + 3.0 * u2) * f1
        + (u3 - u2) * d1
}

/// Radial cut-off profile: 1 on `[0, r1]`, 0 beyond `r2`.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    r1: f64,
    r2: f64,
}

impl CutoffProfile {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0) || !(r2 > r1) || !r2.is_finite() {
            return Err(Error::Config(format!(
                "cutoff requires 0 < r1 < r2, got r1={r1}, r2={r2}"
            )));
        }
        Ok(CutoffProfile { r1, r2 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    /// Normalization constant `C` of the bump.
    pub fn normalizer(&self) -> f64 {
        table().normalizer
    }

    fn s_of(&self, rho: f64) -> f64 {
        1.0 + (rho - self.r1) / (self.r2 - self.r1)
    }

    /// `eta(rho)`.
    pub fn value(&self, rho: f64) -> f64 {
        if rho <= self.r1 {
            1.0
        } else if rho >= self.r2 {
            0.0
        } else {
            1.0 - cumulative(self.s_of(rho))
        }
    }

    /// Radial derivative `d eta / d rho = -phi(s)/(r2-r1)`; `|grad eta|` is its
    /// absolute value.
    pub fn radial_derivative(&self, rho: f64) -> f64 {
        if rho <= self.r1 || rho >= self.r2 {
            0.0
        } else {
            -bump(self.s_of(rho)) / (self.r2 - self.r1)
        }
    }

    /// `|grad |grad eta||(rho) = |phi'(s)|/(r2-r1)^2` on the annulus.
    pub fn grad_mag_derivative(&self, rho: f64) -> f64 {
        if rho <= self.r1 || rho >= self.r2 {
            0.0
        } else {
            bump_derivative(self.s_of(rho)).abs() / (self.r2 - self.r1).powi(2)
        }
    }

    /// `|d/d rho sqrt(|grad eta|)| = |phi'|/(2 sqrt(phi)) / (r2-r1)^{3/2}`.
    pub fn sqrt_grad_derivative(&self, rho: f64) -> f64 {
        if rho <= self.r1 || rho >= self.r2 {
            return 0.0;
        }
        let s = self.s_of(rho);
        let p = bump(s);
        if p <= 0.0 {
            return 0.0;
        }
        bump_derivative(s).abs() / (2.0 * p.sqrt()) / (self.r2 - self.r1).powf(1.5)
    }
}

/// Samples `eta_{r1,r2}` centered at `center` together with its analytic
/// gradient `-phi(s)/(r2-r1) * y/|y|`.
pub fn eta(
    r1: f64,
    r2: f64,
    domain: &Arc<GridDomain>,
    center: &[f64],
) -> Result<(ScalarField, VectorField)> {
    let profile = CutoffProfile::new(r1, r2)?;
    if center.len() != domain.dimension() {
        return Err(Error::Config("cutoff center dimension mismatch".into()));
    }
    if !domain.ball_inside(center, r2) {
        return Err(Error::Config(format!(
            "cutoff support B_{r2} around {center:?} leaves the box"
        )));
    }
    let field = ScalarField::from_fn(domain.clone(), |x| {
        let rho = dist(x, center);
        profile.value(rho)
    })?;
    let grad = VectorField::from_fn(domain.clone(), |x, out| {
        let rho = dist(x, center);
        let deriv = profile.radial_derivative(rho);
        if deriv == 0.0 || rho == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = deriv * (x[k] - center[k]) / rho;
            }
        }
    })?;
    Ok((field, grad))
}

/// Nested cut-off `zeta_m`: 1 on `B_{r_m}`, 0 outside `B_{r_{m+1}}` with
/// `r_m = r (1 - 2^{-m})`, realized through [`eta`].
pub fn zeta_family(
    r: f64,
    m: usize,
    domain: &Arc<GridDomain>,
    center: &[f64],
) -> Result<ScalarField> {
    if m < 1 {
        return Err(Error::Config("zeta_family requires m >= 1".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Config("zeta_family requires r > 0".into()));
    }
    let rm = zeta_radius(r, m);
    let rm1 = zeta_radius(r, m + 1);
    Ok(eta(rm, rm1, domain, center)?.0)
}

pub fn zeta_radius(r: f64, m: usize) -> f64 {
    r * (1.0 - 0.5f64.powi(m as i32))
}

fn dist(x: &[f64], center: &[f64]) -> f64 {
    x.iter()
        .zip(center)
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt()
}

/// Measured normalized constants of the three gradient estimates:
/// `c1 = sup(|grad eta|^2/eta) (r2-r1)^2`, `c2 = sup sqrt(|grad eta|) *
/// sqrt(r2-r1)`, `c3 = sup |grad sqrt(|grad eta|)| (r2-r1)^{3/2}`, with the
/// sups over the support annulus and `0/0 := 0` where both vanish.
pub fn verify_cutoff_bounds(r1: f64, r2: f64) -> Result<(f64, f64, f64)> {
    let profile = CutoffProfile::new(r1, r2)?;
    let samples = 50_000;
    let width = r2 - r1;
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut c3: f64 = 0.0;
    for i in 0..=samples {
        let rho = r1 + width * i as f64 / samples as f64;
        let e = profile.value(rho);
        let g = profile.radial_derivative(rho).abs();
        if e > 0.0 {
            c1 = c1.max(g * g / e * width * width);
        }
        c2 = c2.max(g.sqrt() * width.sqrt());
        c3 = c3.max(profile.sqrt_grad_derivative(rho) * width.powf(1.5));
    }
    Ok((c1, c2, c3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, gradient};

    #[test]
    fn bump_normalizes_to_unit_mass() {
        // Independent check with Simpson on a fresh sampling.
        let n = 4096;
        let dt = 1.0 / n as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let a = 1.0 + i as f64 * dt;
            integral += dt / 6.0 * (bump(a) + 4.0 * bump(a + 0.5 * dt) + bump(a + dt));
        }
        assert!((integral - 1.0).abs() < 1e-12, "mass = {integral}");
    }

    #[test]
    fn profile_plateau_support_and_midpoint() {
        let p = CutoffProfile::new(0.25, 0.75).unwrap();
        assert_eq!(p.value(0.1), 1.0);
        assert_eq!(p.value(0.25), 1.0);
        assert_eq!(p.value(0.75), 0.0);
        assert_eq!(p.value(0.9), 0.0);
        assert_eq!(p.radial_derivative(0.1), 0.0);
        // Midpoint: 1 - int_1^{3/2} phi = 1/2 by symmetry of the bump.
        let mid = p.value(0.5);
        assert!((mid - 0.5).abs() < 1e-10, "eta(mid) = {mid}");
        // Radially nonincreasing with values in [0, 1].
        let mut prev = 1.0;
        for i in 0..200 {
            let rho = 0.2 + 0.6 * i as f64 / 199.0;
            let v = p.value(rho);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-14);
            prev = v;
        }
    }

    #[test]
    fn eta_field_matches_prescribed_regions() {
        let g = build_domain(3, 1.0, 17).unwrap();
        let (field, grad) = eta(0.3, 0.7, &g, &[0.0, 0.0, 0.0]).unwrap();
        let mut coords = vec![0.0; 3];
        for idx in 0..g.node_count() {
            g.node_coords(idx, &mut coords);
            let rho = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            let v = field.values()[idx];
            if rho <= 0.3 {
                assert_eq!(v, 1.0);
                for k in 0..3 {
                    assert_eq!(grad.component(k)[idx], 0.0);
                }
            } else if rho >= 0.7 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn eta_rejects_bad_radii_and_support() {
        let g = build_domain(2, 1.0, 9).unwrap();
        assert!(eta(0.5, 0.5, &g, &[0.0, 0.0]).is_err());
        assert!(eta(0.5, 0.2, &g, &[0.0, 0.0]).is_err());
        assert!(eta(0.3, 0.9, &g, &[0.5, 0.0]).is_err());
    }

    #[test]
    fn analytic_gradient_agrees_with_grid_gradient_at_second_order() {
        let mut sups = Vec::new();
        for n in [33usize, 65] {
            let g = build_domain(2, 1.0, n).unwrap();
            let (field, grad) = eta(0.3, 0.8, &g, &[0.0, 0.0]).unwrap();
            let numeric = gradient(&field);
            let mut worst = 0.0f64;
            let mut coords = vec![0.0; 2];
            for idx in 0..g.node_count() {
                g.node_coords(idx, &mut coords);
                let rho = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
                // Compare strictly inside the annulus.
                if !(0.32..=0.78).contains(&rho) {
                    continue;
                }
                for k in 0..2 {
                    worst = worst.max((numeric.component(k)[idx] - grad.component(k)[idx]).abs());
                }
            }
            sups.push(worst);
        }
        assert!(
            sups[1] <= sups[0] / 3.0,
            "gradient agreement not O(h^2): {sups:?}"
        );
    }

    #[test]
    fn zeta_family_radii_and_gradient_growth() {
        let g = build_domain(2, 1.0, 33).unwrap();
        // m = 1, r = 1: plateau to 1/2, support to 3/4.
        let z = zeta_family(1.0, 1, &g, &[0.0, 0.0]).unwrap();
        let mut coords = vec![0.0; 2];
        for idx in 0..g.node_count() {
            g.node_coords(idx, &mut coords);
            let rho = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            let v = z.values()[idx];
            if rho <= 0.5 {
                assert_eq!(v, 1.0);
            } else if rho >= 0.75 {
                assert_eq!(v, 0.0);
            }
        }

        // sup|grad zeta_m| * r/2^m and sup|grad|grad zeta_m|| * r^2/4^m stay
        // bounded by single constants across m = 1..6 (profile-level sups).
        let r = 1.0;
        let mut first_order = Vec::new();
        let mut second_order = Vec::new();
        for m in 1..=6 {
            let p = CutoffProfile::new(zeta_radius(r, m), zeta_radius(r, m + 1)).unwrap();
            let mut sup_g: f64 = 0.0;
            let mut sup_gg: f64 = 0.0;
            for i in 0..=20_000 {
                let rho = p.r1() + (p.r2() - p.r1()) * i as f64 / 20_000.0;
                sup_g = sup_g.max(p.radial_derivative(rho).abs());
                sup_gg = sup_gg.max(p.grad_mag_derivative(rho));
            }
            first_order.push(sup_g * r / 2f64.powi(m as i32));
            second_order.push(sup_gg * r * r / 4f64.powi(m as i32));
        }
        let spread = |v: &[f64]| {
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        };
        assert!(spread(&first_order) < 1.01, "{first_order:?}");
        assert!(spread(&second_order) < 1.01, "{second_order:?}");
    }

    #[test]
    fn normalized_constants_are_scale_free() {
        let (a1, a2, a3) = verify_cutoff_bounds(0.25, 0.5).unwrap();
        let (b1, b2, b3) = verify_cutoff_bounds(0.125, 0.25).unwrap();
        assert!((a1 / b1 - 1.0).abs() < 1e-9);
        assert!((a2 / b2 - 1.0).abs() < 1e-9);
        assert!((a3 / b3 - 1.0).abs() < 1e-9);
        for v in [a1, a2, a3] {
            assert!(v.is_finite() && v > 0.0);
        }

        // c2 is sup sqrt(phi), a pure profile constant.
        let mut sup_sqrt_phi: f64 = 0.0;
        for i in 0..=20_000 {
            let s = 1.0 + i as f64 / 20_000.0;
            sup_sqrt_phi = sup_sqrt_phi.max(bump(s).sqrt());
        }
        assert!((a2 - sup_sqrt_phi).abs() < 1e-9, "{a2} vs {sup_sqrt_phi}");
    }

    #[test]
    fn all_constants_finite_for_wide_annulus() {
        let (c1, c2, c3) = verify_cutoff_bounds(0.3, 0.9).unwrap();
        assert!(c1.is_finite() && c2.is_finite() && c3.is_finite());
        // Grid-sampled e1-style bound agrees with the profile constant.
        let g = build_domain(2, 1.0, 33).unwrap();
        let (field, grad) = eta(0.3, 0.9, &g, &[0.0, 0.0]).unwrap();
        let width2 = (0.9f64 - 0.3).powi(2);
        for idx in 0..g.node_count() {
            let e = field.values()[idx];
            let g2: f64 = (0..2).map(|k| grad.component(k)[idx].powi(2)).sum();
            if e > 0.0 {
                assert!(g2 / e * width2 <= c1 * (1.0 + 1e-9));
            } else {
                // Near the outer edge eta rounds to 0 while the analytic
                // gradient still carries an exponentially small tail.
                assert!(g2 <= 1e-24, "gradient {g2} where eta = 0");
            }
        }
    }
}
