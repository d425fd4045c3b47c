use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::Serialize;

use super::functionals::Evaluator;
use super::monitor::MonitorRecord;
use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::model::{ModelParams, Potential};

/// Radius, in units of `R`, beyond which `phi_R` is constant.
pub const WEIGHT_SUPPORT: f64 = 10.0;
/// The taper of `phi'` ends here (units of `R`).
const TAPER_END: f64 = 9.0;

/// `f(x) / (f(x) + f(1-x))` with `f(x) = exp(-1/x)`: 0 for `x <= 0`, 1 for
/// `x >= 1`, smooth in between.
fn smooth_step(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |y: f64| (-1.0 / y).exp();
    let (a, b) = (f(x), f(1.0 - x));
    let da = a / (x * x);
    let db = b / ((1.0 - x) * (1.0 - x));
    let s = a + b;
    (a / s, (da * b + a * db) / (s * s))
}

/// Unscaled profile derivatives `(phi', phi'')` at `r`.
fn profile_derivatives(r: f64) -> (f64, f64) {
    if r <= 1.0 {
        return (r, 1.0);
    }
    if r >= TAPER_END {
        return (0.0, 0.0);
    }
    let width = TAPER_END - 1.0;
    let (s, ds) = smooth_step((r - 1.0) / width);
    (r * (1.0 - s), 1.0 - s - r * ds / width)
}

/// Truncated virial weight `phi_R(r) = R^2 phi(r/R)` sampled on a grid, with
/// `phi = r^2/2` on `[0, 1]`, `phi' = r (1 - S((r-1)/8))` on `[1, 9]` and
/// `phi` constant beyond 9.
#[derive(Debug, Clone)]
pub struct VirialWeight {
    grid: Arc<RadialGrid>,
    pub radius: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightMargins {
    /// `min (1 - phi_R'')`
    pub convexity: f64,
    /// `min (1 - phi_R'/r)`
    pub slope: f64,
    /// `min (N - Delta phi_R)`
    pub laplacian: f64,
}

impl VirialWeight {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn margins(&self) -> WeightMargins {
        let n = self.grid.dim() as f64;
        let mut m = WeightMargins { convexity: f64::INFINITY, slope: f64::INFINITY, laplacian: f64::INFINITY };
        for ((&r, &d1), &d2) in self.grid.nodes().iter().zip(&self.dphi).zip(&self.d2phi) {
            m.convexity = m.convexity.min(1.0 - d2);
            m.slope = m.slope.min(1.0 - d1 / r);
            m.laplacian = m.laplacian.min(n - d2 - (n - 1.0) * d1 / r);
        }
        m
    }

    fn verify(&self) -> Result<()> {
        let m = self.margins();
        if m.convexity < -1e-12 || m.slope < -1e-12 || m.laplacian < -1e-10 {
            return Err(Error::WeightInvariant(format!("{m:?}")));
        }
        for (i, &r) in self.grid.nodes().iter().enumerate() {
            if r <= self.radius && (self.phi[i] != 0.5 * r * r || self.dphi[i] != r || self.d2phi[i] != 1.0) {
                return Err(Error::WeightInvariant(format!("phi_R is not r^2/2 at r = {r}")));
            }
            if r >= WEIGHT_SUPPORT * self.radius && self.dphi[i] != 0.0 {
                return Err(Error::WeightInvariant(format!("phi_R' = {} at r = {r}", self.dphi[i])));
            }
        }
        Ok(())
    }
}

pub fn make_virial_weight(grid: &Arc<RadialGrid>, radius: f64) -> Result<VirialWeight> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("virial radius must be positive, got {radius}")));
    }
    if WEIGHT_SUPPORT * radius > grid.r_max() {
        return Err(Error::InvalidParameter(format!(
            "virial radius {radius} needs r_max >= {}, grid has {}",
            WEIGHT_SUPPORT * radius,
            grid.r_max()
        )));
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(64).expect("nonzero"));
    let phi_unscaled = |x: f64| -> f64 {
        if x <= 1.0 {
            return 0.5 * x * x;
        }
        0.5 + rule.integrate(1.0, x.min(TAPER_END), |s| profile_derivatives(s).0)
    };
    let r2 = radius * radius;
    let mut w = VirialWeight {
        grid: grid.clone(),
        radius,
        phi: Vec::with_capacity(grid.len()),
        dphi: Vec::with_capacity(grid.len()),
        d2phi: Vec::with_capacity(grid.len()),
    };
    for &r in grid.nodes() {
        if r <= radius {
            w.phi.push(0.5 * r * r);
            w.dphi.push(r);
            w.d2phi.push(1.0);
            continue;
        }
        let x = r / radius;
        let (d1, d2) = profile_derivatives(x);
        w.phi.push(r2 * phi_unscaled(x));
        w.dphi.push(radius * d1);
        w.d2phi.push(d2);
    }
    w.verify()?;
    Ok(w)
}

/// Centred radial derivative with the even reflection at `r = 0` and the
/// zero ghost node beyond `r_max`.
pub fn radial_derivative(u: &Field) -> Vec<Complex64> {
    let v = u.values();
    let n = v.len();
    let h = u.grid().spacing();
    (0..n)
        .map(|i| {
            let left = if i == 0 { v[0] } else { v[i - 1] };
            let right = if i + 1 == n { Complex64::new(0.0, 0.0) } else { v[i + 1] };
            (right - left) / (2.0 * h)
        })
        .collect()
}

/// `M_R(u) = 2 Im int u phi_R'(r) d_r conj(u) dx`.
pub fn localized_virial(u: &Field, w: &VirialWeight) -> Result<f64> {
    if !w.grid.same_as(u.grid()) {
        return Err(Error::GridMismatch);
    }
    let du = radial_derivative(u);
    let f: Vec<f64> = u.values().iter().zip(&du).zip(&w.dphi).map(|((a, d), p)| (a * d.conj()).im * p).collect();
    Ok(2.0 * u.grid().integrate(&f)?)
}

/// Terms of the localized virial bound, each evaluated separately; the
/// remainders carry constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VirialBound {
    /// `2 N (p-1) E(u_0)`
    pub energy_term: f64,
    /// `-((p-1) N - 8) <Hu,u>`
    pub kinetic_term: f64,
    /// `-int |u|^2 (2 r V' + 8 V)`
    pub potential_term: f64,
    /// `int |u|^2 (2 r V' + (p-1) N V)`, reported for comparison only.
    pub blowup_weighting: f64,
    /// `R^-4`
    pub rem_scale: f64,
    /// `R^-2 ||grad u||^2`
    pub rem_gradient: f64,
    /// `R^(-(N-1)(p-1)/2) ||grad u||^((p-1)/2)`
    pub rem_nonlinear: f64,
    /// `||u||^2_{L^2(r > R)}`
    pub rem_tail: f64,
}

impl VirialBound {
    pub fn main(&self) -> f64 {
        self.energy_term + self.kinetic_term + self.potential_term
    }

    pub fn remainder(&self) -> f64 {
        self.rem_scale + self.rem_gradient + self.rem_nonlinear + self.rem_tail
    }

    pub fn total(&self) -> f64 {
        self.main() + self.remainder()
    }
}

pub fn virial_rhs_bound_with(eval: &Evaluator, u: &Field, w: &VirialWeight, e_initial: f64) -> Result<VirialBound> {
    if !w.grid.same_as(u.grid()) {
        return Err(Error::GridMismatch);
    }
    let params = eval.params();
    let (n, p) = (params.dim() as f64, params.p());
    let q = eval.quadratics(u)?;
    let rr = w.radius;
    let grad = q.grad_sq.max(0.0);
    Ok(VirialBound {
        energy_term: 2.0 * n * (p - 1.0) * e_initial,
        kinetic_term: -((p - 1.0) * n - 8.0) * q.h_half_sq,
        potential_term: -eval.virial_potential_term(u)?,
        blowup_weighting: eval.blowup_potential_term(u)?,
        rem_scale: rr.powi(-4),
        rem_gradient: grad / (rr * rr),
        rem_nonlinear: rr.powf(-(n - 1.0) * (p - 1.0) / 2.0) * grad.sqrt().powf((p - 1.0) / 2.0),
        rem_tail: u.grid().integrate_outside(&u.abs_sq(), rr)?,
    })
}

pub fn virial_rhs_bound(
    u: &Field,
    pot: &Potential,
    params: &ModelParams,
    w: &VirialWeight,
    e_initial: f64,
) -> Result<VirialBound> {
    virial_rhs_bound_with(&Evaluator::new(u.grid(), pot, params)?, u, w, e_initial)
}

/// Second-order three-point derivative on a non-uniform time grid, returned
/// as `(t_k, f'(t_k))` for interior points.
pub fn fd_derivative(t: &[f64], f: &[f64]) -> Result<Vec<(f64, f64)>> {
    if t.len() != f.len() {
        return Err(Error::LengthMismatch { expected: t.len(), got: f.len() });
    }
    if t.len() < 3 {
        return Err(Error::TooFewRecords { need: 3, have: t.len() });
    }
    Ok((1..t.len() - 1)
        .map(|k| {
            let (h1, h2) = (t[k] - t[k - 1], t[k + 1] - t[k]);
            let d = -h2 / (h1 * (h1 + h2)) * f[k - 1] + (h2 - h1) / (h1 * h2) * f[k] + h1 / (h2 * (h1 + h2)) * f[k + 1];
            (t[k], d)
        })
        .collect())
}

/// Finite-difference `d/dt M_R` from the recorded virial column.
pub fn virial_derivative_fd(records: &[MonitorRecord]) -> Result<Vec<(f64, f64)>> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let m: Vec<f64> = records.iter().map(|r| r.virial_mr).collect();
    fd_derivative(&t, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::solve_ground_state;
    use crate::model::Nonlinearity;
    use proptest::prelude::*;

    fn grid(dim: usize, r_max: f64, n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(dim, r_max, n).unwrap())
    }

    #[test]
    fn weight_shape_and_invariants() {
        for (rr, g) in [(2.0, grid(10, 30.0, 4096)), (4.0, grid(10, 80.0, 4096)), (8.0, grid(10, 80.0, 4096))] {
            let w = make_virial_weight(&g, rr).unwrap();
            let m = w.margins();
            assert!(m.convexity >= -1e-12 && m.slope >= -1e-12 && m.laplacian >= -1e-10, "{m:?}");
            for (i, &r) in g.nodes().iter().enumerate() {
                if r <= rr {
                    assert_eq!((w.phi[i], w.dphi[i], w.d2phi[i]), (0.5 * r * r, r, 1.0));
                }
                if r >= 10.0 * rr {
                    assert_eq!(w.dphi[i], 0.0);
                }
                assert!(w.dphi[i] >= 0.0);
            }
            // phi_R is nondecreasing and constant once the taper ends
            assert!(w.phi.windows(2).all(|p| p[1] >= p[0] - 1e-12));
            let tail: Vec<f64> = g.nodes().iter().zip(&w.phi).filter(|(r, _)| **r >= 9.0 * rr).map(|(_, p)| *p).collect();
            assert!(tail.windows(2).all(|p| p[0] == p[1]));
        }
    }

    #[test]
    fn phi_matches_integral_of_its_derivative() {
        let g = grid(3, 40.0, 8000);
        let w = make_virial_weight(&g, 2.0).unwrap();
        let h = g.spacing();
        for i in 1..g.len() {
            let trap = 0.5 * h * (w.dphi[i] + w.dphi[i - 1]);
            assert!((w.phi[i] - w.phi[i - 1] - trap).abs() < 1e-5 * h, "{i}");
            let fd = (w.dphi[i] - w.dphi[i - 1]) / h;
            assert!((fd - 0.5 * (w.d2phi[i] + w.d2phi[i - 1])).abs() < 1e-3, "{i}");
        }
    }

    #[test]
    fn weight_rejects_small_box() {
        assert!(make_virial_weight(&grid(10, 30.0, 256), 3.5).is_err());
        assert!(make_virial_weight(&grid(10, 30.0, 256), 0.0).is_err());
        assert!(make_virial_weight(&grid(10, 30.0, 256), 3.0).is_ok());
    }

    #[test]
    fn virial_vanishes_on_real_fields_and_rejects_foreign_grids() {
        let g = grid(10, 30.0, 1024);
        let w = make_virial_weight(&g, 2.0).unwrap();
        let u = Field::from_fn(g.clone(), |r| Complex64::new((-r * r).exp(), 0.0));
        assert_eq!(localized_virial(&u, &w).unwrap(), 0.0);
        let other = Field::zeros(grid(9, 30.0, 1024));
        assert!(matches!(localized_virial(&other, &w), Err(Error::GridMismatch)));
    }

    #[test]
    fn virial_of_outgoing_phase() {
        // u = a(r) exp(i k r^2/2): M_R = -2 k int phi_R' r |a|^2
        let g = grid(5, 30.0, 8192);
        let w = make_virial_weight(&g, 2.0).unwrap();
        let k = 0.3;
        let u = Field::from_fn(g.clone(), |r| Complex64::from_polar((-r * r / 4.0).exp(), 0.5 * k * r * r));
        let exact: Vec<f64> = g.nodes().iter().zip(&w.dphi).map(|(r, d)| -2.0 * k * d * r * (-r * r / 2.0).exp()).collect();
        let exact = g.integrate(&exact).unwrap();
        let m = localized_virial(&u, &w).unwrap();
        assert!((m - exact).abs() < 1e-4 * exact.abs(), "{m} {exact}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn virial_cauchy_schwarz(a in -2.0f64..2.0, b in -2.0f64..2.0, k in -1.0f64..1.0, s in 0.5f64..3.0) {
            let g = grid(10, 30.0, 1024);
            let w = make_virial_weight(&g, 2.0).unwrap();
            let u = Field::from_fn(g.clone(), |r| Complex64::from_polar((1.0 + a * r) * (-r * r / s).exp(), k * r * r + b * r));
            let du: Vec<f64> = radial_derivative(&u).iter().map(|z| z.norm_sqr()).collect();
            let bound = 2.0 * w.dphi.iter().cloned().fold(0.0, f64::max)
                * crate::grid::mass(&u).sqrt() * g.integrate(&du).unwrap().sqrt();
            prop_assert!(localized_virial(&u, &w).unwrap().abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bound_at_ground_state_is_zero_main_term() {
        let params = ModelParams::new(10, 2.0, Nonlinearity::Focusing).unwrap();
        let g = grid(10, 30.0, 2048);
        let gs = solve_ground_state(&params, &g, 1e-11, 500).unwrap();
        let w = make_virial_weight(&g, 3.0).unwrap();
        let b = virial_rhs_bound(&gs.q, &Potential::Zero, &params, &w, gs.e0).unwrap();
        assert_eq!(b.potential_term, 0.0);
        assert_eq!(b.blowup_weighting, 0.0);
        // 20 E0 - 2 ||dQ||^2 = (20/12 - 10/6) P = 0 up to the Pohozaev residual
        assert!(b.main().abs() < 1e-3 * gs.p_norm, "{}", b.main() / gs.p_norm);
        assert!(b.rem_scale > 0.0 && b.rem_gradient > 0.0 && b.rem_nonlinear > 0.0 && b.rem_tail > 0.0);
    }

    #[test]
    fn bound_for_negative_energy_state_is_negative_for_large_radius() {
        let params = ModelParams::new(10, 2.0, Nonlinearity::Focusing).unwrap();
        let g = grid(10, 80.0, 4096);
        let gs = solve_ground_state(&params, &g, 1e-10, 500).unwrap();
        let u = gs.q.scaled(Complex64::new(2.0, 0.0));
        let v = Potential::inverse_power(1.0, 9.0).unwrap();
        let e = super::super::functionals::energy(&u, &v, &params).unwrap();
        assert!(e < 0.0);
        let totals: Vec<f64> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&rr| virial_rhs_bound(&u, &v, &params, &make_virial_weight(&g, rr).unwrap(), e).unwrap().total())
            .collect();
        assert!(totals.iter().all(|&t| t < 0.0), "{totals:?}");
    }

    #[test]
    fn fd_derivative_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.4, 1.0];
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        for (tk, d) in fd_derivative(&t, &f).unwrap() {
            assert!((d - (6.0 * tk - 1.0)).abs() < 1e-12);
        }
        assert!(matches!(fd_derivative(&t[..2], &f[..2]), Err(Error::TooFewRecords { need: 3, have: 2 })));
    }
}
