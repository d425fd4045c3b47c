//! Ground state of `Delta^2 Q + (2 - s_c) Q = |Q|^(p-1) Q` by renormalized
//! (Petviashvili) fixed-point iteration, together with the scalar
//! quantities the threshold classifier and the sharp Gagliardo-Nirenberg
//! checks need.

use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{lp_norm_pow, mass, Field, RadialGrid};
use crate::model::{ModelParams, Potential};
use crate::operators::{build_bilaplacian, build_laplacian, RadialOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// The iteration stops once the relative L^2 change between successive
    /// iterates drops below `tol`. The equation residual is reported but not
    /// used to stop: evaluating `Delta^2 Q` in double precision leaves a
    /// round-off floor that grows like `h^-4`.
    pub tol: f64,
    pub max_iter: usize,
    /// Width `s` of the seed `exp(-(r/s)^2)`.
    pub seed_width: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, seed_width: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub q: Field,
    pub params: ModelParams,
    /// `m = 2 - s_c`.
    pub m: f64,
    pub mass: f64,
    /// `||L Q||^2`, the discrete `||Delta Q||^2`.
    pub delta_q_sq: f64,
    /// `||Q||_{p+1}^{p+1}`.
    pub p_norm: f64,
    pub e0: f64,
    pub c_gn: f64,
    /// `M(Q)^((2-s_c)/s_c) E_0(Q)`.
    pub thresh_energy: f64,
    /// `||Q||^((2-s_c)/s_c) ||Delta Q||`.
    pub thresh_kinetic: f64,
    pub iterations: usize,
    /// `||Delta^2 Q + m Q - |Q|^(p-1) Q|| / || |Q|^(p-1) Q ||`.
    pub residual: f64,
    /// Last stabilizing factor; tends to 1 at the fixed point.
    pub gamma: f64,
    /// `min Q / max Q`; the profile may carry small oscillating negative
    /// lobes in its tail.
    pub min_over_max: f64,
}

fn pow_nonlinearity(q: &[f64], p: f64) -> Vec<f64> {
    q.iter().map(|&x| x.abs().powf(p - 1.0) * x).collect()
}

fn dot(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    grid.integrate(&prod).expect("matching lengths")
}

struct Iteration<'a> {
    grid: &'a Arc<RadialGrid>,
    lap: RadialOperator,
    bilap: &'a RadialOperator,
    m: f64,
    p: f64,
}

impl Iteration<'_> {
    /// `<(L^2 + m) q, q> = ||L q||^2 + m ||q||^2`.
    fn quadratic(&self, q: &[f64]) -> f64 {
        let lq = self.lap.apply_slice(q).expect("length");
        dot(self.grid, &lq, &lq) + self.m * dot(self.grid, q, q)
    }

    fn residual(&self, q: &[f64]) -> f64 {
        let l2q = self.bilap.apply_slice(q).expect("length");
        let nl = pow_nonlinearity(q, self.p);
        let r: Vec<f64> = l2q.iter().zip(q).zip(&nl).map(|((a, b), c)| a + self.m * b - c).collect();
        (dot(self.grid, &r, &r) / dot(self.grid, &nl, &nl)).sqrt()
    }
}

/// One renormalized step `Q -> gamma^(p/(p-1)) (L^2 + m)^(-1) |Q|^(p-1) Q`.
/// Returns the new iterate and `gamma`.
fn petviashvili_step(
    it: &Iteration<'_>,
    solver: &crate::operators::ShiftedSolver<'_>,
    q: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let nl = pow_nonlinearity(q, it.p);
    let denom = dot(it.grid, &nl, q);
    if !(denom > 0.0) {
        return Err(Error::LostPositivity(format!("<|Q|^(p-1)Q, Q> = {denom}")));
    }
    let gamma = it.quadratic(q) / denom;
    let rhs = Field::from_real(it.grid.clone(), &nl)?;
    let x = solver.solve(&rhs)?;
    let scale = gamma.powf(it.p / (it.p - 1.0));
    Ok((x.values().iter().map(|v| v.re * scale).collect(), gamma))
}

pub fn solve_ground_state(params: &ModelParams, grid: &Arc<RadialGrid>, tol: f64, max_iter: usize) -> Result<GroundState> {
    solve_ground_state_with(params, grid, SolverOptions { tol, max_iter, ..Default::default() })
}

pub fn solve_ground_state_with(
    params: &ModelParams,
    grid: &Arc<RadialGrid>,
    opts: SolverOptions,
) -> Result<GroundState> {
    if grid.dim() != params.dim() {
        return Err(Error::InvalidParameter(format!(
            "grid dimension {} differs from model dimension {}",
            grid.dim(),
            params.dim()
        )));
    }
    let sc = params.s_c();
    if !(sc > 0.0 && sc < 2.0) {
        return Err(Error::InvalidParameter(format!("ground state solver needs 0 < s_c < 2, got {sc}")));
    }
    solve_profile(params, grid, params.frequency(), opts)
}

/// Solves `Delta^2 Q + m Q = |Q|^(p-1) Q` for an arbitrary frequency `m > 0`.
/// The returned scalars are those of this profile; they coincide with the
/// ground-state constants only for `m = 2 - s_c`.
pub fn solve_profile(params: &ModelParams, grid: &Arc<RadialGrid>, m: f64, opts: SolverOptions) -> Result<GroundState> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {m}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    match run_iteration(params, grid, m, opts) {
        Err(Error::LostPositivity(_)) => {
            run_iteration(params, grid, m, SolverOptions { seed_width: 2.0 * opts.seed_width, ..opts })
        }
        other => other,
    }
}

fn run_iteration(params: &ModelParams, grid: &Arc<RadialGrid>, m: f64, opts: SolverOptions) -> Result<GroundState> {
    let p = params.p();
    let bilap = build_bilaplacian(grid);
    let it = Iteration { grid, lap: build_laplacian(grid), bilap: &bilap, m, p };
    let solver = bilap.factor_shifted(Complex64::new(m, 0.0))?;

    let s = opts.seed_width;
    let mut q = grid.sample(|r| (-(r / s) * (r / s)).exp());
    let mut update = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter && !(update < opts.tol) {
        let (next, _) = petviashvili_step(&it, &solver, &q)?;
        // the core must stay positive; a negative centre means the iteration
        // has wandered onto another branch
        if !(next[0] > 0.0) || next.iter().any(|x| !x.is_finite()) {
            return Err(Error::LostPositivity(format!("iteration {iterations}: Q(r_0) = {}", next[0])));
        }
        let diff: Vec<f64> = next.iter().zip(&q).map(|(a, b)| a - b).collect();
        update = (dot(grid, &diff, &diff) / dot(grid, &next, &next)).sqrt();
        q = next;
        iterations += 1;
    }
    if !(update < opts.tol) {
        return Err(Error::NotConverged { iterations, residual: update });
    }
    let residual = it.residual(&q);
    // gamma at the accepted iterate
    let gamma = it.quadratic(&q) / dot(grid, &pow_nonlinearity(&q, p), &q);
    let q = Field::from_real(grid.clone(), &q)?;
    Ok(GroundState::from_profile(q, params, m, iterations, residual, gamma))
}

impl GroundState {
    /// Fills every cached scalar from a converged profile of frequency `m`.
    pub fn from_profile(q: Field, params: &ModelParams, m: f64, iterations: usize, residual: f64, gamma: f64) -> Self {
        let grid = q.grid().clone();
        let lap = build_laplacian(&grid);
        let lq = lap.apply(&q).expect("same grid");
        let mass_q = mass(&q);
        let delta_q_sq = mass(&lq);
        let p = params.p();
        let p_norm = lp_norm_pow(&q, p + 1.0).expect("length");
        let e0 = 0.5 * delta_q_sq - p_norm / (p + 1.0);
        let a = params.gn_mass_power();
        let b = params.gn_kinetic_power();
        let c_gn = 4.0 * (p + 1.0) / (params.dim() as f64 * (p - 1.0))
            / (mass_q.sqrt().powf(a) * delta_q_sq.sqrt().powf(b - 2.0));
        let k = params.threshold_exponent();
        let re = q.real_parts();
        let (lo, hi) = re.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        Self {
            m,
            mass: mass_q,
            delta_q_sq,
            p_norm,
            e0,
            c_gn,
            thresh_energy: mass_q.powf(k) * e0,
            thresh_kinetic: mass_q.sqrt().powf(k) * delta_q_sq.sqrt(),
            iterations,
            residual,
            gamma,
            min_over_max: lo / hi,
            params: *params,
            q,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.q.grid()
    }

    /// One more renormalized step from the stored profile.
    pub fn extra_step(&self) -> Result<(Field, f64)> {
        let grid = self.grid();
        let bilap = build_bilaplacian(grid);
        let it = Iteration { grid, lap: build_laplacian(grid), bilap: &bilap, m: self.m, p: self.params.p() };
        let solver = bilap.factor_shifted(Complex64::new(self.m, 0.0))?;
        let (next, gamma) = petviashvili_step(&it, &solver, &self.q.real_parts())?;
        Ok((Field::from_real(grid.clone(), &next)?, gamma))
    }

    /// `||L^2 Q + m Q - |Q|^(p-1) Q|| / || |Q|^(p-1) Q ||` on the stored profile.
    pub fn equation_residual(&self) -> f64 {
        let grid = self.grid();
        let bilap = build_bilaplacian(grid);
        let it = Iteration { grid, lap: build_laplacian(grid), bilap: &bilap, m: self.m, p: self.params.p() };
        it.residual(&self.q.real_parts())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PohozaevReport {
    /// `| ||Delta Q||^2 - N(p-1)/(4(p+1)) P | / P`
    pub kinetic: f64,
    /// `| ||Q||^2 - (p-1)/(2(p+1)) P | / P`
    pub mass: f64,
    /// `| E_0(Q) - (N(p-1)-8)/(8(p+1)) P | / P`
    pub energy: f64,
}

impl PohozaevReport {
    pub fn max(&self) -> f64 {
        self.kinetic.max(self.mass).max(self.energy)
    }
}

/// Coefficients `(kinetic, mass, energy)` of `P` in the three identities.
pub fn pohozaev_coefficients(params: &ModelParams) -> (f64, f64, f64) {
    let n = params.dim() as f64;
    let p = params.p();
    (
        n * (p - 1.0) / (4.0 * (p + 1.0)),
        (p - 1.0) / (2.0 * (p + 1.0)),
        (n * (p - 1.0) - 8.0) / (8.0 * (p + 1.0)),
    )
}

pub fn pohozaev_report(gs: &GroundState, params: &ModelParams) -> PohozaevReport {
    let (ck, cm, ce) = pohozaev_coefficients(params);
    let pn = gs.p_norm;
    PohozaevReport {
        kinetic: (gs.delta_q_sq - ck * pn).abs() / pn,
        mass: (gs.mass - cm * pn).abs() / pn,
        energy: (gs.e0 - ce * pn).abs() / pn,
    }
}

/// Weinstein functional
/// `J_V(u) = ||u||^(p+1-N(p-1)/4) <Hu,u>^(N(p-1)/8) / ||u||_{p+1}^{p+1}`
/// with `<Hu,u> = ||L u||^2 + int V |u|^2`.
pub fn functional_j(u: &Field, pot: &Potential, params: &ModelParams) -> Result<f64> {
    let grid = u.grid();
    let m = mass(u);
    if m == 0.0 {
        return Err(Error::ZeroField);
    }
    let lu = build_laplacian(grid).apply(u)?;
    let mut hq = mass(&lu);
    if !pot.is_zero() {
        let v = pot.sample(grid)?;
        let vu: Vec<f64> = u.abs_sq().iter().zip(&v).map(|(a, b)| a * b).collect();
        hq += grid.integrate(&vu)?;
    }
    let pn = lp_norm_pow(u, params.p() + 1.0)?;
    Ok(m.sqrt().powf(params.gn_mass_power()) * hq.powf(params.gn_kinetic_power() / 2.0) / pn)
}

/// Both routes to the sharp constant: the closed form in terms of
/// `||Q||` and `||Delta Q||`, and `1 / J_0(Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpConstant {
    pub formula: f64,
    pub inverse_j0: f64,
}

impl SharpConstant {
    pub fn relative_gap(&self) -> f64 {
        (self.formula - self.inverse_j0).abs() / self.inverse_j0
    }
}

pub fn sharp_gn_constant(gs: &GroundState, params: &ModelParams) -> Result<SharpConstant> {
    Ok(SharpConstant { formula: gs.c_gn, inverse_j0: 1.0 / functional_j(&gs.q, &Potential::Zero, params)? })
}

/// `||u||_{p+1}^{p+1} / (||u||^a ||Delta u||^b)`, to be compared with `C_GN`.
pub fn gn_ratio(u: &Field, params: &ModelParams) -> Result<f64> {
    Ok(1.0 / functional_j(u, &Potential::Zero, params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranslateValue {
    pub shift: f64,
    /// `int V(x) Q(x - a e_1)^2 dx`.
    pub potential_energy: f64,
    pub j_v: f64,
}

/// `J_V(Q(. - a e_1))` for each shift `a`.
///
/// Translation leaves `||Q||`, `||Delta Q||` and `||Q||_{p+1}` unchanged, so
/// only `int V Q(. - a)^2` depends on `a`. That integral is reduced to the
/// two variables `(r, theta)` with `|x - a e_1|^2 = r^2 + a^2 - 2 a r cos theta`
/// and evaluated by quadrature, with `Q` interpolated linearly between nodes.
pub fn minimizing_translates_check(gs: &GroundState, pot: &Potential, shifts: &[f64]) -> Result<Vec<TranslateValue>> {
    let grid = gs.grid();
    let params = &gs.params;
    let (v, _) = pot.sample_with_derivative(grid)?;
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParameter("translate check needs V >= 0".into()));
    }
    let base = gs.delta_q_sq;
    let pre = gs.mass.sqrt().powf(params.gn_mass_power()) / gs.p_norm;
    let half_b = params.gn_kinetic_power() / 2.0;
    let q = gs.q.real_parts();
    shifts
        .iter()
        .map(|&a| {
            if !(a >= 0.0) || a >= grid.r_max() {
                return Err(Error::InvalidParameter(format!(
                    "shift {a} must lie in [0, r_max = {})",
                    grid.r_max()
                )));
            }
            let pe = translated_potential_energy(grid, &q, &v, a);
            Ok(TranslateValue { shift: a, potential_energy: pe, j_v: pre * (base + pe).powf(half_b) })
        })
        .collect()
}

const ANGLE_NODES: usize = 128;

fn interpolate(grid: &RadialGrid, q: &[f64], r: f64) -> f64 {
    let h = grid.spacing();
    let x = r / h - 0.5;
    if x <= 0.0 {
        return q[0];
    }
    let i = x.floor() as usize;
    if i + 1 >= q.len() {
        return if i + 1 == q.len() { q[i] * (1.0 - (x - i as f64)) } else { 0.0 };
    }
    let s = x - i as f64;
    q[i] * (1.0 - s) + q[i + 1] * s
}

fn translated_potential_energy(grid: &RadialGrid, q: &[f64], v: &[f64], a: f64) -> f64 {
    let n = grid.dim();
    let nodes = grid.nodes();
    let weights = grid.weights();
    if a == 0.0 {
        let f: Vec<f64> = q.iter().zip(v).map(|(x, y)| x * x * y).collect();
        return grid.integrate(&f).expect("length");
    }
    if n == 1 {
        // x = +r and x = -r
        let sum: f64 = nodes
            .iter()
            .zip(v)
            .zip(weights)
            .map(|((&r, &vi), &w)| {
                let (q1, q2) = (interpolate(grid, q, (r - a).abs()), interpolate(grid, q, r + a));
                vi * (q1 * q1 + q2 * q2) * w
            })
            .sum();
        return sum;
    }
    // Gauss-Legendre in theta: sin^(N-2) is not smooth across theta = 0 when
    // N is odd, which would spoil a periodic rule
    let rule = GaussLegendre::new(NonZeroUsize::new(ANGLE_NODES).expect("nonzero"));
    let half_pi = std::f64::consts::FRAC_PI_2;
    let angles: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| {
            let th = half_pi * (x + 1.0);
            (th.cos(), th.sin().powi(n as i32 - 2) * w * half_pi)
        })
        .collect();
    let jac: f64 = angles.iter().map(|(_, s)| s).sum();
    let mut total = 0.0;
    for ((&r, &vi), &w) in nodes.iter().zip(v).zip(weights) {
        if vi == 0.0 {
            continue;
        }
        let ang: f64 = angles
            .iter()
            .map(|&(c, s)| {
                let d = (r * r + a * a - 2.0 * a * r * c).max(0.0).sqrt();
                let qd = interpolate(grid, q, d);
                qd * qd * s
            })
            .sum();
        total += vi * w * ang / jac;
    }
    total * grid.omega()
}
