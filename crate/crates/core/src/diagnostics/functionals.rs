use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{lp_norm_pow, mass, Field, RadialGrid};
use crate::groundstate::GroundState;
use crate::model::{ModelParams, Potential};
use crate::operators::{build_laplacian, RadialOperator};

/// Slack used when comparing a state against the ground-state thresholds.
pub const THRESHOLD_SLACK: f64 = 1e-9;

/// Precomputed operators and potential samples for repeated evaluation of
/// the conserved quantities on one grid.
#[derive(Debug, Clone)]
pub struct Evaluator {
    grid: Arc<RadialGrid>,
    params: ModelParams,
    lap: RadialOperator,
    v: Vec<f64>,
    /// `2 r V' + 8 V`
    virial_v: Vec<f64>,
    /// `2 r V' + (p-1) N V`
    blowup_v: Vec<f64>,
}

/// `||L u||^2`, `<Hu,u>` and `||grad u||^2 = -<u, L u>` of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratics {
    pub delta_u_sq: f64,
    pub h_half_sq: f64,
    pub grad_sq: f64,
}

impl Evaluator {
    pub fn new(grid: &Arc<RadialGrid>, pot: &Potential, params: &ModelParams) -> Result<Self> {
        if grid.dim() != params.dim() {
            return Err(Error::InvalidParameter(format!(
                "grid dimension {} differs from model dimension {}",
                grid.dim(),
                params.dim()
            )));
        }
        let (v, dv) = pot.sample_with_derivative(grid)?;
        let pn = (params.p() - 1.0) * params.dim() as f64;
        let weight = |c: f64| -> Vec<f64> {
            grid.nodes().iter().zip(&v).zip(&dv).map(|((r, vi), di)| 2.0 * r * di + c * vi).collect()
        };
        Ok(Self {
            grid: grid.clone(),
            params: *params,
            lap: build_laplacian(grid),
            virial_v: weight(8.0),
            blowup_v: weight(pn),
            v,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn laplacian(&self) -> &RadialOperator {
        &self.lap
    }

    pub fn potential(&self) -> &[f64] {
        &self.v
    }

    fn check(&self, u: &Field) -> Result<()> {
        if self.grid.same_as(u.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `int w |u|^2` for a radial weight sampled on the grid.
    pub fn weighted_mass(&self, u: &Field, w: &[f64]) -> Result<f64> {
        self.check(u)?;
        let f: Vec<f64> = u.abs_sq().iter().zip(w).map(|(a, b)| a * b).collect();
        self.grid.integrate(&f)
    }

    pub fn quadratics(&self, u: &Field) -> Result<Quadratics> {
        self.check(u)?;
        let lu = self.lap.apply(u)?;
        let delta_u_sq = mass(&lu);
        let grad: Vec<f64> = u.values().iter().zip(lu.values()).map(|(a, b)| -(a.conj() * b).re).collect();
        let grad_sq = self.grid.integrate(&grad)?;
        let h_half_sq = delta_u_sq + self.weighted_mass(u, &self.v)?;
        Ok(Quadratics { delta_u_sq, h_half_sq, grad_sq })
    }

    /// `||u||_{p+1}^{p+1}`.
    pub fn potential_energy_norm(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        lp_norm_pow(u, self.params.p() + 1.0)
    }

    /// `E(u) = <Hu,u>/2 + lambda/(p+1) int |u|^(p+1)`.
    pub fn energy(&self, u: &Field) -> Result<f64> {
        let q = self.quadratics(u)?;
        Ok(self.energy_from(q.h_half_sq, self.potential_energy_norm(u)?))
    }

    pub fn energy_from(&self, h_half_sq: f64, p_norm: f64) -> f64 {
        let p = self.params.p();
        0.5 * h_half_sq + self.params.lambda().sign() / (p + 1.0) * p_norm
    }

    /// `||u||^((2-s_c)/s_c) <Hu,u>^(1/2)`.
    pub fn kinetic_product_from(&self, mass: f64, h_half_sq: f64) -> f64 {
        mass.sqrt().powf(self.params.threshold_exponent()) * h_half_sq.max(0.0).sqrt()
    }

    /// `int |u|^2 (2 r V' + 8 V)`.
    pub fn virial_potential_term(&self, u: &Field) -> Result<f64> {
        self.weighted_mass(u, &self.virial_v)
    }

    /// `int |u|^2 (2 r V' + (p-1) N V)`.
    pub fn blowup_potential_term(&self, u: &Field) -> Result<f64> {
        self.weighted_mass(u, &self.blowup_v)
    }
}

/// `<Hu,u> = ||L u||^2 + int V |u|^2`.
pub fn h_quadratic(u: &Field, pot: &Potential, params: &ModelParams) -> Result<f64> {
    Ok(Evaluator::new(u.grid(), pot, params)?.quadratics(u)?.h_half_sq)
}

pub fn energy(u: &Field, pot: &Potential, params: &ModelParams) -> Result<f64> {
    Evaluator::new(u.grid(), pot, params)?.energy(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdClass {
    BelowBoth,
    AboveKinetic,
    NegativeEnergy,
    Indeterminate,
}

impl ThresholdClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BelowBoth => "below_both",
            Self::AboveKinetic => "above_kinetic",
            Self::NegativeEnergy => "negative_energy",
            Self::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdVerdict {
    /// `M(u)^((2-s_c)/s_c) E(u) / thresh_energy`.
    pub energy_ratio: f64,
    /// `kinetic_product / thresh_kinetic`.
    pub kinetic_ratio: f64,
    pub energy: f64,
    pub class: ThresholdClass,
}

pub fn classify_ratios(energy: f64, energy_ratio: f64, kinetic_ratio: f64) -> ThresholdClass {
    if energy < 0.0 {
        return ThresholdClass::NegativeEnergy;
    }
    let near = |x: f64| (x - 1.0).abs() <= THRESHOLD_SLACK;
    if !energy_ratio.is_finite() || !kinetic_ratio.is_finite() || near(energy_ratio) || near(kinetic_ratio) {
        return ThresholdClass::Indeterminate;
    }
    match (energy_ratio < 1.0, kinetic_ratio < 1.0) {
        (true, true) => ThresholdClass::BelowBoth,
        (true, false) => ThresholdClass::AboveKinetic,
        _ => ThresholdClass::Indeterminate,
    }
}

pub fn threshold_classify_with(eval: &Evaluator, u: &Field, gs: &GroundState) -> Result<ThresholdVerdict> {
    let params = eval.params();
    if gs.params.dim() != params.dim() || gs.params.p() != params.p() {
        return Err(Error::InvalidParameter("ground state solved for a different (N, p)".into()));
    }
    let q = eval.quadratics(u)?;
    let m = mass(u);
    let e = eval.energy_from(q.h_half_sq, eval.potential_energy_norm(u)?);
    let energy_ratio = m.powf(params.threshold_exponent()) * e / gs.thresh_energy;
    let kinetic_ratio = eval.kinetic_product_from(m, q.h_half_sq) / gs.thresh_kinetic;
    Ok(ThresholdVerdict { energy_ratio, kinetic_ratio, energy: e, class: classify_ratios(e, energy_ratio, kinetic_ratio) })
}

pub fn threshold_classify(u: &Field, pot: &Potential, params: &ModelParams, gs: &GroundState) -> Result<ThresholdVerdict> {
    threshold_classify_with(&Evaluator::new(u.grid(), pot, params)?, u, gs)
}

/// `(||Delta u||^2 - N(p-1)/(4(p+1)) ||u||_{p+1}^{p+1}) / ||Delta u||^2`.
pub fn coercivity_gap(u: &Field, params: &ModelParams) -> Result<f64> {
    let eval = Evaluator::new(u.grid(), &Potential::Zero, params)?;
    let d = eval.quadratics(u)?.delta_u_sq;
    if d == 0.0 {
        return Err(Error::ZeroField);
    }
    let (n, p) = (params.dim() as f64, params.p());
    Ok((d - n * (p - 1.0) / (4.0 * (p + 1.0)) * eval.potential_energy_norm(u)?) / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparability {
    /// `(N(p-1)-8)/(2N(p-1)) <Hu,u> <= E(u)`
    pub lower_ok: bool,
    /// `E(u) <= <Hu,u>/2`
    pub upper_ok: bool,
}

pub fn comparability_check_with(eval: &Evaluator, u: &Field) -> Result<Comparability> {
    let params = eval.params();
    let q = eval.quadratics(u)?;
    let e = eval.energy_from(q.h_half_sq, eval.potential_energy_norm(u)?);
    let np = params.dim() as f64 * (params.p() - 1.0);
    let slack = THRESHOLD_SLACK * q.h_half_sq.abs().max(e.abs());
    Ok(Comparability {
        lower_ok: (np - 8.0) / (2.0 * np) * q.h_half_sq <= e + slack,
        upper_ok: e <= 0.5 * q.h_half_sq + slack,
    })
}

pub fn comparability_check(u: &Field, pot: &Potential, params: &ModelParams) -> Result<Comparability> {
    comparability_check_with(&Evaluator::new(u.grid(), pot, params)?, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::solve_ground_state;
    use crate::model::Nonlinearity;
    use num_complex::Complex64;
    use std::sync::OnceLock;

    fn ground_state() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| {
            let params = ModelParams::new(10, 2.0, Nonlinearity::Focusing).unwrap();
            let grid = Arc::new(RadialGrid::new(10, 30.0, 2048).unwrap());
            solve_ground_state(&params, &grid, 1e-11, 500).unwrap()
        })
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn zero_state() {
        let gs = ground_state();
        let z = Field::zeros(gs.grid().clone());
        assert_eq!(mass(&z), 0.0);
        assert_eq!(energy(&z, &Potential::Zero, &gs.params).unwrap(), 0.0);
        assert!(matches!(coercivity_gap(&z, &gs.params), Err(Error::ZeroField)));
    }

    #[test]
    fn ground_state_energy_is_twelfth_of_p() {
        let gs = ground_state();
        let e = energy(&gs.q, &Potential::Zero, &gs.params).unwrap();
        assert!((12.0 * e / gs.p_norm - 1.0).abs() < 1e-3);
        // scaling polynomial E(cQ) = c^2 ||dQ||^2/2 - c^3 P/3
        for cc in [0.5, 1.25, 1.5, 2.0] {
            let ec = energy(&gs.q.scaled(c(cc)), &Potential::Zero, &gs.params).unwrap();
            let exact = 0.5 * cc * cc * gs.delta_q_sq - cc.powi(3) * gs.p_norm / 3.0;
            assert!((ec - exact).abs() < 1e-10 * gs.p_norm, "{cc}");
        }
    }

    #[test]
    fn defocusing_energy_nonnegative_with_repulsive_potential() {
        let gs = ground_state();
        let params = ModelParams::new(10, 2.0, Nonlinearity::Defocusing).unwrap();
        let v = Potential::inverse_power(2.0, 9.0).unwrap();
        for cc in [0.1, 1.0, 3.0] {
            assert!(energy(&gs.q.scaled(Complex64::new(0.0, cc)), &v, &params).unwrap() >= 0.0);
        }
    }

    #[test]
    fn classifies_scaled_ground_states() {
        let gs = ground_state();
        let p = &gs.params;
        let cls = |cc: f64| threshold_classify(&gs.q.scaled(c(cc)), &Potential::Zero, p, gs).unwrap();
        assert_eq!(cls(0.5).class, ThresholdClass::BelowBoth);
        assert_eq!(cls(0.75).class, ThresholdClass::BelowBoth);
        assert_eq!(cls(1.0).class, ThresholdClass::Indeterminate);
        assert!(matches!(cls(1.5).class, ThresholdClass::NegativeEnergy | ThresholdClass::AboveKinetic));
        assert_eq!(cls(2.0).class, ThresholdClass::NegativeEnergy);
        // energy of cQ changes sign exactly once in c > 1, at c = 5/4 here
        let signs: Vec<bool> = (0..200).map(|k| cls(1.0 + 0.01 * (k as f64 + 0.5)).energy < 0.0).collect();
        assert_eq!(signs.windows(2).filter(|w| w[0] != w[1]).count(), 1);
        let first = signs.iter().position(|&s| s).unwrap();
        assert!((1.0 + 0.01 * (first as f64 + 0.5) - 1.25).abs() < 0.011);
    }

    #[test]
    fn classify_ratio_table() {
        assert_eq!(classify_ratios(-1.0, -0.5, 2.0), ThresholdClass::NegativeEnergy);
        assert_eq!(classify_ratios(1.0, 0.5, 0.5), ThresholdClass::BelowBoth);
        assert_eq!(classify_ratios(1.0, 0.5, 1.5), ThresholdClass::AboveKinetic);
        assert_eq!(classify_ratios(1.0, 1.5, 0.5), ThresholdClass::Indeterminate);
        assert_eq!(classify_ratios(1.0, 1.0 + 1e-10, 0.5), ThresholdClass::Indeterminate);
    }

    #[test]
    fn coercivity_and_comparability() {
        let gs = ground_state();
        let p = &gs.params;
        assert!(coercivity_gap(&gs.q.scaled(c(0.5)), p).unwrap() > 0.0);
        assert!(coercivity_gap(&gs.q, p).unwrap().abs() < 1e-3);
        assert!((coercivity_gap(&gs.q.scaled(c(1e-6)), p).unwrap() - 1.0).abs() < 1e-5);
        let cmp = comparability_check(&gs.q.scaled(c(0.5)), &Potential::Zero, p).unwrap();
        assert!(cmp.lower_ok && cmp.upper_ok);
    }

    #[test]
    fn rejects_foreign_ground_state() {
        let gs = ground_state();
        let params = ModelParams::new(10, 2.2, Nonlinearity::Focusing).unwrap();
        assert!(threshold_classify(&gs.q, &Potential::Zero, &params, gs).is_err());
    }
}
