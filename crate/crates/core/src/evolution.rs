//! Time integration of `i u_t + H u + lambda |u|^(p-1) u = 0` by Strang
//! splitting: an exact nonlinear phase rotation around a Crank-Nicolson
//! step for the linear flow.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{blowup_trigger, Monitor, MonitorRecord, BLOWUP_GROWTH};
use crate::error::{Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::model::{ModelParams, Potential};
use crate::operators::{OperatorSet, RadialOperator, ShiftedSolver};

/// Largest nonlinear phase `max |u|^(p-1) |dt|` an adaptive step may take.
pub const MAX_PHASE_PER_STEP: f64 = 0.5;
/// Default `dt_min = dt / 2^DT_FLOOR_HALVINGS`.
pub const DT_FLOOR_HALVINGS: i32 = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between records; the initial and final states are always recorded.
    pub record_every: usize,
    pub dt_min: f64,
    pub adaptive: bool,
    /// Keep a copy of the state at every record.
    pub keep_snapshots: bool,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            record_every: 1,
            dt_min: dt * 2f64.powi(-DT_FLOOR_HALVINGS),
            adaptive: true,
            keep_snapshots: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt) {
            return bad(format!("dt_min must lie in (0, dt], got {}", self.dt_min));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BlowupDetected,
    DtFloorHit,
    NanDetected,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::BlowupDetected => "blowup_detected",
            Termination::DtFloorHit => "dt_floor_hit",
            Termination::NanDetected => "nan_detected",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<MonitorRecord>,
    pub final_state: Field,
    pub termination: Termination,
    /// States at the record times, when retention was requested.
    pub snapshots: Option<Vec<Field>>,
    pub steps: usize,
}

impl Trajectory {
    pub fn t_termination(&self) -> f64 {
        self.final_state.t
    }
}

/// Pointwise `u exp(i lambda |u|^(p-1) dt)`.
pub fn nonlinear_step(u: &Field, params: &ModelParams, dt: f64) -> Field {
    let mut out = u.clone();
    nonlinear_in_place(out.values_mut(), params, dt);
    out
}

fn nonlinear_in_place(u: &mut [Complex64], params: &ModelParams, dt: f64) {
    let k = params.lambda().sign() * dt;
    let e = params.p() - 1.0;
    for z in u {
        let a = z.norm_sqr().sqrt();
        if a > 0.0 {
            *z *= Complex64::from_polar(1.0, k * a.powf(e));
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be finite and nonzero, got {dt}")));
    }
    Ok(())
}

/// One Crank-Nicolson step `(I - i dt/2 H) v = (I + i dt/2 H) u`, evaluated
/// as `v = (4i/dt) (H + 2i/dt)^(-1) u - u`.
fn cayley(solver: &ShiftedSolver<'_>, u: &Field, dt: f64) -> Result<Field> {
    let w = solver.solve(u)?;
    let c = Complex64::new(0.0, 4.0 / dt);
    let values = w.values().iter().zip(u.values()).map(|(wi, ui)| c * wi - ui).collect();
    Ok(u.with_values(values))
}

pub fn linear_half_step(u: &Field, h_op: &RadialOperator, dt: f64) -> Result<Field> {
    check_dt(dt)?;
    let solver = h_op.factor_shifted(Complex64::new(0.0, 2.0 / dt))?;
    cayley(&solver, u, dt)
}

/// `N(dt/2) L(dt) N(dt/2)`. The time stamp advances by `dt`.
pub fn strang_step(u: &Field, h_op: &RadialOperator, params: &ModelParams, dt: f64) -> Result<Field> {
    Propagator::new(h_op, params).step(u, dt)
}

/// Strang stepper holding the factorization for the last step size used.
pub struct Propagator<'a> {
    h: &'a RadialOperator,
    params: ModelParams,
    cache: Option<(f64, ShiftedSolver<'a>)>,
}

impl<'a> Propagator<'a> {
    pub fn new(h: &'a RadialOperator, params: &ModelParams) -> Self {
        Self { h, params: *params, cache: None }
    }

    fn solver(&mut self, dt: f64) -> Result<&ShiftedSolver<'a>> {
        if !matches!(&self.cache, Some((d, _)) if *d == dt) {
            let s = self.h.factor_shifted(Complex64::new(0.0, 2.0 / dt))?;
            self.cache = Some((dt, s));
        }
        Ok(&self.cache.as_ref().expect("filled above").1)
    }

    pub fn linear(&mut self, u: &Field, dt: f64) -> Result<Field> {
        check_dt(dt)?;
        let solver = self.solver(dt)?;
        let mut v = cayley(solver, u, dt)?;
        v.t = u.t + dt;
        Ok(v)
    }

    pub fn step(&mut self, u: &Field, dt: f64) -> Result<Field> {
        check_dt(dt)?;
        let mut half = u.clone();
        nonlinear_in_place(half.values_mut(), &self.params, 0.5 * dt);
        let mut v = self.linear(&half, dt)?;
        nonlinear_in_place(v.values_mut(), &self.params, 0.5 * dt);
        Ok(v)
    }
}

/// `||L u||^2`, the per-step blow-up gauge.
fn delta_sq(ops: &OperatorSet, u: &Field) -> Result<f64> {
    let lu = ops.laplacian.apply_slice(u.values())?;
    let sq: Vec<f64> = lu.iter().map(|z| z.norm_sqr()).collect();
    u.grid().integrate(&sq)
}

fn max_phase(u: &Field, params: &ModelParams, dt: f64) -> f64 {
    u.max_abs().powf(params.p() - 1.0) * dt.abs()
}

/// Builds the operators for `pot` and runs [`evolve_with`].
pub fn evolve(
    u0: &Field,
    pot: &Potential,
    params: &ModelParams,
    cfg: &EvolveConfig,
    monitor: &mut Monitor,
) -> Result<Trajectory> {
    let ops = OperatorSet::new(u0.grid(), pot)?;
    evolve_with(u0, &ops, params, cfg, monitor)
}

/// Steps from `u0.t` to `u0.t + t_end`, recording through `monitor`.
///
/// Blow-up, a NaN state and `dt < dt_min` end the run early and are reported
/// in [`Trajectory::termination`]. On a NaN the last finite state is kept.
pub fn evolve_with(
    u0: &Field,
    ops: &OperatorSet,
    params: &ModelParams,
    cfg: &EvolveConfig,
    monitor: &mut Monitor,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid: &Arc<RadialGrid> = u0.grid();
    if !ops.h.grid().same_as(grid) {
        return Err(Error::GridMismatch);
    }
    if grid.dim() != params.dim() {
        return Err(Error::InvalidParameter("field and model dimensions differ".into()));
    }
    let mut prop = Propagator::new(&ops.h, params);
    let t0 = u0.t;
    let t_stop = t0 + cfg.t_end;
    // Remaining time below this counts as arrival.
    let t_eps = 1e-12 * cfg.t_end.max(t0.abs());

    let mut dt = cfg.dt;
    let mut u = u0.clone();
    let first = monitor.record(&u, dt)?;
    let mut records = vec![first];
    let mut snapshots = cfg.keep_snapshots.then(|| vec![u.clone()]);
    let mut steps = 0usize;
    let mut last_recorded = 0usize;

    let termination = loop {
        let remaining = t_stop - u.t;
        if remaining <= t_eps {
            break Termination::Completed;
        }
        if u.is_collapsed() {
            break Termination::NanDetected;
        }
        if cfg.adaptive {
            while max_phase(&u, params, dt) > MAX_PHASE_PER_STEP && dt >= cfg.dt_min {
                dt *= 0.5;
            }
            if dt < cfg.dt_min {
                break Termination::DtFloorHit;
            }
        }
        let h = dt.min(remaining);
        let mut next = prop.step(&u, h)?;
        next.t = if remaining - h <= t_eps { t_stop } else { u.t + h };
        if next.is_collapsed() {
            break Termination::NanDetected;
        }
        u = next;
        steps += 1;

        let due = steps.is_multiple_of(cfg.record_every);
        let grown = delta_sq(ops, &u)? > BLOWUP_GROWTH * first.delta_u_sq;
        if due || grown {
            let rec = monitor.record(&u, dt)?;
            records.push(rec);
            if let Some(s) = snapshots.as_mut() {
                s.push(u.clone());
            }
            last_recorded = steps;
            if blowup_trigger(&rec, &first) {
                break Termination::BlowupDetected;
            }
        }
    };
    if last_recorded != steps {
        records.push(monitor.record(&u, dt)?);
        if let Some(s) = snapshots.as_mut() {
            s.push(u.clone());
        }
    }
    Ok(Trajectory { records, final_state: u, termination, snapshots, steps })
}
