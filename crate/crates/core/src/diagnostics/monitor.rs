use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;

use super::functionals::Evaluator;
use super::virial::{localized_virial, make_virial_weight, virial_rhs_bound_with, VirialWeight};
use crate::error::{Error, Result};
use crate::grid::{fmt_f64, lp_norm, mass, parse_num, Field, RadialGrid};
use crate::model::{ModelParams, Potential};

/// `||Delta u||^2` growth factor (i.e. 10x in `||Delta u||`) that declares a blow-up.
pub const BLOWUP_GROWTH: f64 = 100.0;
/// Records with `r > TAIL_FRACTION * r_max` count towards `tail_mass_frac`.
pub const TAIL_FRACTION: f64 = 0.9;

pub const RECORD_COLUMNS: [&str; 11] = [
    "t",
    "mass",
    "energy",
    "delta_u_sq",
    "h_half_sq",
    "lp1",
    "kinetic_product",
    "virial_MR",
    "virial_rhs",
    "tail_mass_frac",
    "dt_current",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub delta_u_sq: f64,
    pub h_half_sq: f64,
    /// `||u||_{p+1}`
    pub lp1: f64,
    /// `||u||^((2-s_c)/s_c) <Hu,u>^(1/2)`
    pub kinetic_product: f64,
    #[serde(rename = "virial_MR")]
    pub virial_mr: f64,
    pub virial_rhs: f64,
    pub tail_mass_frac: f64,
    pub dt_current: f64,
}

impl MonitorRecord {
    fn to_array(self) -> [f64; 11] {
        [
            self.t,
            self.mass,
            self.energy,
            self.delta_u_sq,
            self.h_half_sq,
            self.lp1,
            self.kinetic_product,
            self.virial_mr,
            self.virial_rhs,
            self.tail_mass_frac,
            self.dt_current,
        ]
    }

    fn from_array(a: [f64; 11]) -> Self {
        Self {
            t: a[0],
            mass: a[1],
            energy: a[2],
            delta_u_sq: a[3],
            h_half_sq: a[4],
            lp1: a[5],
            kinetic_product: a[6],
            virial_mr: a[7],
            virial_rhs: a[8],
            tail_mass_frac: a[9],
            dt_current: a[10],
        }
    }
}

pub fn write_records_csv<W: Write>(records: &[MonitorRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", RECORD_COLUMNS.join(","))?;
    for r in records {
        let row: Vec<String> = r.to_array().iter().map(|&x| fmt_f64(x)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_records_csv<R: BufRead>(input: R) -> Result<Vec<MonitorRecord>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty record file".into()))??;
    if header.trim() != RECORD_COLUMNS.join(",") {
        return Err(Error::Parse(format!("unexpected record header '{header}'")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != RECORD_COLUMNS.len() {
            return Err(Error::Parse(format!("bad record row '{line}'")));
        }
        let mut a = [0.0; 11];
        for (slot, c) in a.iter_mut().zip(&cols) {
            *slot = parse_num(c)?;
        }
        out.push(MonitorRecord::from_array(a));
    }
    Ok(out)
}

/// Produces [`MonitorRecord`]s for states on one grid.
#[derive(Debug, Clone)]
pub struct Monitor {
    eval: Evaluator,
    weight: Option<VirialWeight>,
    /// Energy of the initial datum, used by the virial bound.
    e_initial: Option<f64>,
}

impl Monitor {
    /// `virial_radius = None` leaves the virial columns as NaN.
    pub fn new(grid: &Arc<RadialGrid>, pot: &Potential, params: &ModelParams, virial_radius: Option<f64>) -> Result<Self> {
        let weight = virial_radius.map(|r| make_virial_weight(grid, r)).transpose()?;
        Ok(Self { eval: Evaluator::new(grid, pot, params)?, weight, e_initial: None })
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.eval
    }

    pub fn weight(&self) -> Option<&VirialWeight> {
        self.weight.as_ref()
    }

    /// Fixes `E(u_0)`; the first call to [`Monitor::record`] does this
    /// automatically.
    pub fn set_initial_energy(&mut self, e: f64) {
        self.e_initial = Some(e);
    }

    pub fn record(&mut self, u: &Field, dt: f64) -> Result<MonitorRecord> {
        let eval = &self.eval;
        let q = eval.quadratics(u)?;
        let m = mass(u);
        let pn = eval.potential_energy_norm(u)?;
        let energy = eval.energy_from(q.h_half_sq, pn);
        let e0 = *self.e_initial.get_or_insert(energy);
        let (virial_mr, virial_rhs) = match &self.weight {
            Some(w) => (localized_virial(u, w)?, virial_rhs_bound_with(eval, u, w, e0)?.total()),
            None => (f64::NAN, f64::NAN),
        };
        let grid = u.grid();
        let tail = grid.integrate_outside(&u.abs_sq(), TAIL_FRACTION * grid.r_max())?;
        Ok(MonitorRecord {
            t: u.t,
            mass: m,
            energy,
            delta_u_sq: q.delta_u_sq,
            h_half_sq: q.h_half_sq,
            lp1: pn.powf(1.0 / (eval.params().p() + 1.0)),
            kinetic_product: eval.kinetic_product_from(m, q.h_half_sq),
            virial_mr,
            virial_rhs,
            tail_mass_frac: if m > 0.0 { tail / m } else { 0.0 },
            dt_current: dt,
        })
    }
}

/// `||Delta u||` grew tenfold, or the state is no longer finite.
pub fn blowup_trigger(record: &MonitorRecord, initial: &MonitorRecord) -> bool {
    record.delta_u_sq > BLOWUP_GROWTH * initial.delta_u_sq || !record.delta_u_sq.is_finite() || !record.mass.is_finite()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatteringReport {
    /// Log-log slope of `lp1(t)` over the second half of the records.
    pub slope: f64,
    /// `lp1(t_end) / lp1(0)`; 0 for the zero state.
    pub ratio: f64,
    /// `max h_half_sq / h_half_sq(0)`.
    pub h_growth: f64,
    pub consistent_with_scattering: bool,
}

pub const SCATTERING_RATIO: f64 = 0.5;
pub const SCATTERING_H_GROWTH: f64 = 2.0;

pub fn scattering_proxy(records: &[MonitorRecord]) -> Result<ScatteringReport> {
    if records.len() < 3 {
        return Err(Error::TooFewRecords { need: 3, have: records.len() });
    }
    let first = records[0];
    let last = records[records.len() - 1];
    if first.lp1 == 0.0 {
        return Ok(ScatteringReport { slope: 0.0, ratio: 0.0, h_growth: 0.0, consistent_with_scattering: true });
    }
    let ratio = last.lp1 / first.lp1;
    let h_growth = records.iter().map(|r| r.h_half_sq).fold(f64::NEG_INFINITY, f64::max) / first.h_half_sq;
    let tail: Vec<(f64, f64)> = records[records.len() / 2..]
        .iter()
        .filter(|r| r.t > 0.0 && r.lp1 > 0.0)
        .map(|r| (r.t.ln(), r.lp1.ln()))
        .collect();
    let slope = if tail.len() >= 2 {
        let n = tail.len() as f64;
        let (mx, my) = (tail.iter().map(|p| p.0).sum::<f64>() / n, tail.iter().map(|p| p.1).sum::<f64>() / n);
        let sxy: f64 = tail.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = tail.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    Ok(ScatteringReport {
        slope,
        ratio,
        h_growth,
        consistent_with_scattering: ratio < SCATTERING_RATIO && h_growth <= SCATTERING_H_GROWTH,
    })
}

/// `( int_I ||u(t)||_{L^r}^q dt )^(1/q)` by the trapezoid rule over the
/// snapshot times; `q = inf` takes the maximum.
pub fn strichartz_norm(snapshots: &[Field], q: f64, r: f64) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::NoSnapshots);
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("time exponent must be >= 1, got {q}")));
    }
    let norms = snapshots.iter().map(|u| lp_norm(u, r)).collect::<Result<Vec<f64>>>()?;
    if q.is_infinite() {
        return Ok(norms.iter().cloned().fold(0.0, f64::max));
    }
    let mut acc = 0.0;
    for k in 1..snapshots.len() {
        let dt = snapshots[k].t - snapshots[k - 1].t;
        acc += 0.5 * dt * (norms[k].powf(q) + norms[k - 1].powf(q));
    }
    Ok(acc.powf(1.0 / q))
}
