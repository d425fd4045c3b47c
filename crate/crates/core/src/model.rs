//! Equation parameters, the radial potential family, and the structural
//! checks the scattering and blow-up results place on `(N, p, V)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// `s_c = N/2 - 4/(p-1)`.
pub fn critical_exponent(dim: usize, p: f64) -> Result<f64> {
    if dim < 1 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("power must satisfy p > 1, got {p}")));
    }
    Ok(dim as f64 / 2.0 - 4.0 / (p - 1.0))
}

/// Open interval `(1 + 8/N, 1 + 8/(N-4))` of mass-supercritical,
/// energy-subcritical powers.
pub fn admissible_power_range(dim: usize) -> Result<(f64, f64)> {
    if dim <= 4 {
        return Err(Error::InvalidParameter(format!(
            "the intercritical power range needs N >= 5, got {dim}"
        )));
    }
    let n = dim as f64;
    Ok((1.0 + 8.0 / n, 1.0 + 8.0 / (n - 4.0)))
}

pub fn in_power_range(dim: usize, p: f64) -> Result<bool> {
    let (lo, hi) = admissible_power_range(dim)?;
    Ok(lo < p && p < hi)
}

/// Sign in front of the nonlinearity: `-1` focusing, `+1` defocusing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Focusing,
    Defocusing,
}

impl Nonlinearity {
    pub fn sign(self) -> f64 {
        match self {
            Nonlinearity::Focusing => -1.0,
            Nonlinearity::Defocusing => 1.0,
        }
    }

    pub fn from_sign(lambda: i32) -> Result<Self> {
        match lambda {
            -1 => Ok(Nonlinearity::Focusing),
            1 => Ok(Nonlinearity::Defocusing),
            other => Err(Error::InvalidParameter(format!("lambda must be +1 or -1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    dim: usize,
    p: f64,
    lambda: Nonlinearity,
}

impl ModelParams {
    pub fn new(dim: usize, p: f64, lambda: Nonlinearity) -> Result<Self> {
        critical_exponent(dim, p)?;
        Ok(Self { dim, p, lambda })
    }

    /// Like [`ModelParams::new`], additionally requiring `0 < s_c < 2`.
    pub fn intercritical(dim: usize, p: f64, lambda: Nonlinearity) -> Result<Self> {
        let params = Self::new(dim, p, lambda)?;
        let sc = params.s_c();
        if !(sc > 0.0 && sc < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < s_c < 2 (1+8/N < p < 1+8/(N-4)), got s_c = {sc}"
            )));
        }
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda(&self) -> Nonlinearity {
        self.lambda
    }

    pub fn s_c(&self) -> f64 {
        self.dim as f64 / 2.0 - 4.0 / (self.p - 1.0)
    }

    /// Soliton frequency `2 - s_c`.
    pub fn frequency(&self) -> f64 {
        2.0 - self.s_c()
    }

    /// Exponent `(2 - s_c)/s_c` used in the mass-energy threshold.
    pub fn threshold_exponent(&self) -> f64 {
        let sc = self.s_c();
        (2.0 - sc) / sc
    }

    /// `N(p-1)/4`, the power of `||Delta u||` in the Gagliardo-Nirenberg inequality.
    pub fn gn_kinetic_power(&self) -> f64 {
        self.dim as f64 * (self.p - 1.0) / 4.0
    }

    /// `p + 1 - N(p-1)/4`, the power of `||u||_2` in the same inequality.
    pub fn gn_mass_power(&self) -> f64 {
        self.p + 1.0 - self.gn_kinetic_power()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    r: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl PotentialTable {
    /// Builds a table; a missing derivative column is filled by finite
    /// differences of `v`.
    pub fn new(r: Vec<f64>, v: Vec<f64>, dv: Option<Vec<f64>>) -> Result<Self> {
        if r.len() < 2 || v.len() != r.len() {
            return Err(Error::InvalidParameter("potential table needs >= 2 matching rows".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) || r[0] < 0.0 {
            return Err(Error::InvalidParameter("table radii must be >= 0 and increasing".into()));
        }
        if r.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("table contains non-finite values".into()));
        }
        let dv = match dv {
            Some(dv) if dv.len() == r.len() => dv,
            Some(_) => return Err(Error::InvalidParameter("derivative column length".into())),
            None => {
                let n = r.len();
                (0..n)
                    .map(|i| {
                        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                        (v[b] - v[a]) / (r[b] - r[a])
                    })
                    .collect()
            }
        };
        Ok(Self { r, v, dv })
    }

    /// Reads whitespace separated `r value [derivative]` rows; `#` starts a comment.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut r, mut v, mut dv) = (Vec::new(), Vec::new(), Vec::new());
        let mut has_dv = None;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(crate::grid::parse_num)
                .collect::<Result<_>>()?;
            let three = match cols.len() {
                2 => false,
                3 => true,
                k => return Err(Error::Parse(format!("potential table row has {k} columns"))),
            };
            if *has_dv.get_or_insert(three) != three {
                return Err(Error::Parse("inconsistent column count in potential table".into()));
            }
            r.push(cols[0]);
            v.push(cols[1]);
            if three {
                dv.push(cols[2]);
            }
        }
        Self::new(r, v, has_dv.unwrap_or(false).then_some(dv))
    }

    fn eval(&self, r: f64) -> Result<(f64, f64)> {
        let (lo, hi) = (self.r[0], *self.r.last().unwrap());
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfTable { r, lo, hi });
        }
        let k = match self.r.partition_point(|&x| x <= r) {
            0 => 0,
            k if k >= self.r.len() => self.r.len() - 2,
            k => k - 1,
        };
        let s = (r - self.r[k]) / (self.r[k + 1] - self.r[k]);
        let lerp = |a: &[f64]| a[k] + s * (a[k + 1] - a[k]);
        Ok((lerp(&self.v), lerp(&self.dv)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// `V(r) = C (1 + r^2)^(-sigma)`.
    InversePower { amplitude: f64, sigma: f64 },
    Tabulated(PotentialTable),
}

impl Potential {
    pub fn inverse_power(amplitude: f64, sigma: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse-power potential needs C >= 0 and sigma > 0, got C={amplitude}, sigma={sigma}"
            )));
        }
        Ok(Potential::InversePower { amplitude, sigma })
    }

    /// `(V(r), V'(r))`.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be >= 0, got {r}")));
        }
        match self {
            Potential::Zero => Ok((0.0, 0.0)),
            Potential::InversePower { amplitude, sigma } => {
                let base = 1.0 + r * r;
                let v = amplitude * base.powf(-sigma);
                Ok((v, -2.0 * sigma * r * v / base))
            }
            Potential::Tabulated(t) => t.eval(r),
        }
    }

    /// `V` at every grid node.
    pub fn sample(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        grid.nodes().iter().map(|&r| self.eval(r).map(|(v, _)| v)).collect()
    }

    /// `(V, V')` at every grid node.
    pub fn sample_with_derivative(&self, grid: &RadialGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        let pairs: Vec<(f64, f64)> = grid.nodes().iter().map(|&r| self.eval(r)).collect::<Result<_>>()?;
        Ok(pairs.into_iter().unzip())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::InversePower { amplitude, .. } => *amplitude == 0.0,
            Potential::Tabulated(t) => t.v.iter().chain(&t.dv).all(|&x| x == 0.0),
        }
    }
}

/// Serializable potential descriptor, as it appears in experiment configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    InversePower {
        #[serde(rename = "C")]
        amplitude: f64,
        sigma: f64,
    },
    Tabulated {
        table: String,
    },
}

impl PotentialSpec {
    /// Builds the potential; relative table paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Potential> {
        match self {
            PotentialSpec::Zero => Ok(Potential::Zero),
            PotentialSpec::InversePower { amplitude, sigma } => Potential::inverse_power(*amplitude, *sigma),
            PotentialSpec::Tabulated { table } => {
                let path = Path::new(table);
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.to_path_buf(),
                };
                Ok(Potential::Tabulated(PotentialTable::read(&path)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// `r V'(r) <= 0` at every node.
    pub repulsive: bool,
    pub nonnegative: bool,
    /// `sup_r <r>^(N+4) (|V| + |V'|)` over the nodes.
    pub decay_sup: f64,
    /// Node where the supremum is attained.
    pub decay_sup_at: f64,
    pub decay_finite: bool,
    /// `2 sigma > N + 4`, only available for the inverse-power family.
    pub exact_decay_criterion: Option<bool>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.repulsive && self.nonnegative && self.decay_finite
    }
}

pub fn check_hypotheses(pot: &Potential, params: &ModelParams, grid: &RadialGrid) -> Result<HypothesisReport> {
    let (v, dv) = pot.sample_with_derivative(grid)?;
    let nodes = grid.nodes();
    let repulsive = nodes.iter().zip(&dv).all(|(r, d)| r * d <= 0.0);
    let nonnegative = v.iter().all(|&x| x >= 0.0);
    let power = (params.dim() + 4) as f64;
    let weighted: Vec<f64> = nodes
        .iter()
        .zip(v.iter().zip(&dv))
        .map(|(&r, (a, b))| (1.0 + r * r).powf(power / 2.0) * (a.abs() + b.abs()))
        .collect();
    let (imax, sup) = weighted
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0_f64), |best, (i, w)| if w > best.1 { (i, w) } else { best });
    let exact = match pot {
        Potential::InversePower { amplitude, sigma } => Some(*amplitude == 0.0 || 2.0 * sigma > power),
        Potential::Zero => Some(true),
        Potential::Tabulated(_) => None,
    };
    // Without a closed form, a supremum still growing at the outer tenth of
    // the grid is read as unbounded.
    let sampled_finite = {
        let cut = grid.len() * 9 / 10;
        let inner = weighted[..cut].iter().copied().fold(0.0, f64::max);
        let outer = weighted[cut..].iter().copied().fold(0.0, f64::max);
        sup.is_finite() && outer <= inner.max(f64::MIN_POSITIVE)
            || weighted.iter().all(|&w| w == 0.0)
    };
    Ok(HypothesisReport {
        repulsive,
        nonnegative,
        decay_sup: sup,
        decay_sup_at: nodes[imax],
        decay_finite: exact.unwrap_or(sampled_finite),
        exact_decay_criterion: exact,
    })
}

/// `W = 4V + r V'` split into positive and negative parts, with `||W_-||_{L^{N/4}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirialPotentialDecomposition {
    pub w: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub w_minus_norm: f64,
}

impl VirialPotentialDecomposition {
    fn from_samples(w: Vec<f64>, grid: &RadialGrid) -> Result<Self> {
        let w_plus: Vec<f64> = w.iter().map(|&x| x.max(0.0)).collect();
        let w_minus: Vec<f64> = w.iter().map(|&x| (-x).max(0.0)).collect();
        let q = grid.dim() as f64 / 4.0;
        let pow: Vec<f64> = w_minus.iter().map(|x| x.powf(q)).collect();
        let w_minus_norm = grid.integrate(&pow)?.powf(1.0 / q);
        Ok(Self { w, w_plus, w_minus, w_minus_norm })
    }
}

pub fn virial_decomposition(
    pot: &Potential,
    _params: &ModelParams,
    grid: &RadialGrid,
) -> Result<VirialPotentialDecomposition> {
    let (v, dv) = pot.sample_with_derivative(grid)?;
    let w = grid
        .nodes()
        .iter()
        .zip(v.iter().zip(&dv))
        .map(|(r, (a, b))| 4.0 * a + r * b)
        .collect();
    VirialPotentialDecomposition::from_samples(w, grid)
}

/// Same split for the weighting `2 r V' + (p-1) N V` that appears in the
/// negative-energy blow-up argument.
pub fn blowup_weight_decomposition(
    pot: &Potential,
    params: &ModelParams,
    grid: &RadialGrid,
) -> Result<VirialPotentialDecomposition> {
    let (v, dv) = pot.sample_with_derivative(grid)?;
    let c = (params.p() - 1.0) * params.dim() as f64;
    let w = grid
        .nodes()
        .iter()
        .zip(v.iter().zip(&dv))
        .map(|(r, (a, b))| 2.0 * r * b + c * a)
        .collect();
    VirialPotentialDecomposition::from_samples(w, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn focusing(dim: usize, p: f64) -> ModelParams {
        ModelParams::new(dim, p, Nonlinearity::Focusing).unwrap()
    }

    #[test]
    fn critical_exponent_examples() {
        assert_eq!(critical_exponent(10, 2.0).unwrap(), 1.0);
        for n in 1..16 {
            let p = 1.0 + 8.0 / n as f64;
            assert!(critical_exponent(n, p).unwrap().abs() < 1e-12);
        }
        assert!((critical_exponent(10, 7.0 / 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(critical_exponent(10, 1.0).is_err());
        assert!(critical_exponent(10, 0.5).is_err());
    }

    #[test]
    fn power_range_endpoints() {
        let (a, b) = admissible_power_range(10).unwrap();
        assert!((a - 1.8).abs() < 1e-15 && (b - 7.0 / 3.0).abs() < 1e-15);
        let (a, b) = admissible_power_range(9).unwrap();
        assert!((a - 17.0 / 9.0).abs() < 1e-15 && (b - 13.0 / 5.0).abs() < 1e-15);
        let (a, b) = admissible_power_range(5).unwrap();
        assert!((a - 2.6).abs() < 1e-15 && (b - 9.0).abs() < 1e-15);
        assert!(admissible_power_range(4).is_err());
        assert!(!in_power_range(10, 1.8).unwrap());
        assert!(in_power_range(10, 2.0).unwrap());
    }

    #[test]
    fn derived_quantities() {
        let m = focusing(10, 2.0);
        assert_eq!(m.s_c(), 1.0);
        assert_eq!(m.frequency(), 1.0);
        assert_eq!(m.threshold_exponent(), 1.0);
        assert!(ModelParams::intercritical(10, 1.8, Nonlinearity::Focusing).is_err());
        assert!(ModelParams::intercritical(5, 2.7, Nonlinearity::Focusing).is_ok());
    }

    #[test]
    fn potential_values() {
        let v = Potential::inverse_power(1.0, 9.0).unwrap();
        assert_eq!(v.eval(0.0).unwrap(), (1.0, 0.0));
        assert_eq!(Potential::Zero.eval(3.7).unwrap(), (0.0, 0.0));
        let v = Potential::inverse_power(2.0, 1.0).unwrap();
        let (a, b) = v.eval(1.0).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b + 1.0).abs() < 1e-15);
        assert!(v.eval(-1.0).is_err());
        assert!(Potential::inverse_power(-1.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_potential_interpolates_and_rejects_out_of_range() {
        let t = PotentialTable::parse("0 1 0\n1 0.5 -1\n2 0.25 -0.25\n").unwrap();
        let v = Potential::Tabulated(t);
        let (a, b) = v.eval(0.5).unwrap();
        assert!((a - 0.75).abs() < 1e-15 && (b + 0.5).abs() < 1e-15);
        assert!(matches!(v.eval(2.5), Err(Error::OutOfTable { .. })));
        let t = PotentialTable::parse("# r V\n0 1\n1 0.5\n2 0.25\n").unwrap();
        let (_, b) = Potential::Tabulated(t).eval(1.0).unwrap();
        assert!((b + 0.375).abs() < 1e-15);
        assert!(PotentialTable::parse("0 1\n1 2 3\n").is_err());
    }

    #[test]
    fn hypothesis_checks() {
        let grid = RadialGrid::new(10, 30.0, 512).unwrap();
        let params = focusing(10, 2.0);
        let rep = check_hypotheses(&Potential::inverse_power(1.0, 9.0).unwrap(), &params, &grid).unwrap();
        assert!(rep.repulsive && rep.nonnegative && rep.decay_finite);
        assert_eq!(rep.exact_decay_criterion, Some(true));
        let rep = check_hypotheses(&Potential::inverse_power(1.0, 6.0).unwrap(), &params, &grid).unwrap();
        assert_eq!(rep.exact_decay_criterion, Some(false));
        assert!(!rep.decay_finite);
        for n in 1..13 {
            let g = RadialGrid::new(n, 10.0, 64).unwrap();
            let rep = check_hypotheses(&Potential::Zero, &focusing(n, 3.0), &g).unwrap();
            assert!(rep.all_pass());
        }
        // bump with V' > 0 somewhere
        let rows: String = (0..=40)
            .map(|i| {
                let r = i as f64;
                format!("{r} {}\n", (-(r - 5.0) * (r - 5.0)).exp())
            })
            .collect();
        let bump = Potential::Tabulated(PotentialTable::parse(&rows).unwrap());
        let g = RadialGrid::new(10, 30.0, 128).unwrap();
        let rep = check_hypotheses(&bump, &params, &g).unwrap();
        assert!(!rep.repulsive && rep.nonnegative);
        assert_eq!(rep.exact_decay_criterion, None);
        // slowly decaying table: weighted sup still growing at the edge
        let rows: String = (0..=40).map(|i| format!("{} {}\n", i as f64, 1.0 / (1.0 + i as f64))).collect();
        let slow = Potential::Tabulated(PotentialTable::parse(&rows).unwrap());
        assert!(!check_hypotheses(&slow, &params, &g).unwrap().decay_finite);
    }

    #[test]
    fn virial_weight_closed_form() {
        let grid = RadialGrid::new(10, 30.0, 600).unwrap();
        let params = focusing(10, 2.0);
        let d = virial_decomposition(&Potential::Zero, &params, &grid).unwrap();
        assert!(d.w.iter().all(|&x| x == 0.0) && d.w_minus_norm == 0.0);
        for sigma in [0.5, 1.0, 2.0, 3.0, 9.0] {
            let pot = Potential::inverse_power(1.3, sigma).unwrap();
            let d = virial_decomposition(&pot, &params, &grid).unwrap();
            for (i, &r) in grid.nodes().iter().enumerate() {
                let b = 1.0 + r * r;
                let closed = 1.3 * b.powf(-sigma - 1.0) * (4.0 + (4.0 - 2.0 * sigma) * r * r);
                assert!((d.w[i] - closed).abs() <= 1e-12 * closed.abs().max(1e-300));
                assert_eq!(d.w_plus[i] - d.w_minus[i], d.w[i]);
                assert_eq!(d.w_plus[i] * d.w_minus[i], 0.0);
            }
            if sigma <= 2.0 {
                assert!(d.w.iter().all(|&x| x >= 0.0));
                assert_eq!(d.w_minus_norm, 0.0);
            } else {
                assert!(d.w_minus_norm > 0.0);
            }
        }
        // sigma = 2, C = 1, r = 1: 4V = 1, rV' = -1/2
        let (v, dv) = Potential::inverse_power(1.0, 2.0).unwrap().eval(1.0).unwrap();
        assert!((4.0 * v + dv - 0.5).abs() < 1e-15);
    }
}
