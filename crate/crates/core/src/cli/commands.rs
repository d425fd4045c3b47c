use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Rational64;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::Report;
use crate::diagnostics::pairs::{excluded_endpoint, pair_check, pair_solve, Exponent, Given, PairFamily};
use crate::diagnostics::{
    fd_derivative, localized_virial, make_virial_weight, scattering_proxy, threshold_classify_with,
    virial_rhs_bound_with, write_records_csv, Evaluator, Monitor, MonitorRecord, ThresholdClass, ThresholdVerdict,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve, Termination, Trajectory};
use crate::grid::{fmt_f64, Field, RadialGrid};
use crate::groundstate::{pohozaev_report, sharp_gn_constant, solve_ground_state_with, GroundState};
use crate::model::{check_hypotheses, ModelParams, Potential};

/// Relative Pohozaev residual accepted by the ground-state report.
pub const POHOZAEV_TOLERANCE: f64 = 1e-3;
/// Slack in the virial check: `0.05 |bound| + 1e-6 P`.
pub const VIRIAL_SLACK_REL: f64 = 0.05;
pub const VIRIAL_SLACK_P: f64 = 1e-6;

pub const SCAN_COLUMNS: [&str; 6] = ["c", "energy_ratio", "kinetic_ratio", "class", "termination", "t_termination"];

pub(crate) fn create<P: AsRef<Path>>(path: P) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_report(dir: &Path, name: &str, report: &mut Report) -> Result<PathBuf> {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    report.text("generated_unix", secs);
    let path = dir.join(name);
    let mut out = create(&path)?;
    report.write(&mut out)?;
    out.flush()?;
    Ok(path)
}

fn write_field(path: &Path, u: &Field) -> Result<()> {
    let mut out = create(path)?;
    u.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_records(path: &Path, records: &[MonitorRecord]) -> Result<()> {
    let mut out = create(path)?;
    write_records_csv(records, &mut out)?;
    out.flush()?;
    Ok(())
}

struct Setup {
    params: ModelParams,
    pot: Potential,
    grid: Arc<RadialGrid>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let params = cfg.params()?;
    let pot = cfg.potential()?;
    let grid = Arc::new(RadialGrid::new(params.dim(), cfg.grid.r_max, cfg.grid.n)?);
    Ok(Setup { params, pot, grid })
}

fn ground_state(cfg: &ExperimentConfig, s: &Setup) -> Result<GroundState> {
    solve_ground_state_with(&s.params, &s.grid, cfg.solver_options())
}

fn model_entries(r: &mut Report, cfg: &ExperimentConfig, params: &ModelParams) {
    r.text("N", params.dim())
        .num("p", params.p())
        .text("lambda", cfg.model.lambda)
        .num("s_c", params.s_c())
        .num("r_max", cfg.grid.r_max)
        .text("n", cfg.grid.n)
        .text("potential", format!("{:?}", cfg.potential));
}

fn ground_state_entries(r: &mut Report, gs: &GroundState) {
    r.num("ground_state.m", gs.m)
        .text("ground_state.iterations", gs.iterations)
        .num("ground_state.equation_residual", gs.residual)
        .num("ground_state.gamma", gs.gamma)
        .num("ground_state.q0", gs.q.values()[0].re)
        .num("ground_state.mass", gs.mass)
        .num("ground_state.delta_q_sq", gs.delta_q_sq)
        .num("ground_state.p_norm", gs.p_norm)
        .num("ground_state.e0", gs.e0)
        .num("ground_state.thresh_energy", gs.thresh_energy)
        .num("ground_state.thresh_kinetic", gs.thresh_kinetic)
        .num("ground_state.min_over_max", gs.min_over_max);
}

fn verdict_entries(r: &mut Report, prefix: &str, v: &ThresholdVerdict) {
    r.text(&format!("{prefix}.class"), v.class.as_str())
        .num(&format!("{prefix}.energy"), v.energy)
        .num(&format!("{prefix}.energy_ratio"), v.energy_ratio)
        .num(&format!("{prefix}.kinetic_ratio"), v.kinetic_ratio);
}

pub fn cmd_ground_state(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let s = setup(cfg)?;
    let gs = ground_state(cfg, &s)?;
    let po = pohozaev_report(&gs, &s.params);
    let gn = sharp_gn_constant(&gs, &s.params)?;
    let hyp = check_hypotheses(&s.pot, &s.params, &s.grid)?;

    let mut r = Report::new("ground-state");
    model_entries(&mut r, cfg, &s.params);
    r.num("solver.tol", cfg.solver.tol).text("solver.max_iter", cfg.solver.max_iter);
    ground_state_entries(&mut r, &gs);
    r.num("pohozaev.kinetic", po.kinetic)
        .num("pohozaev.mass", po.mass)
        .num("pohozaev.energy", po.energy)
        .flag("pohozaev.verdict", po.max() < POHOZAEV_TOLERANCE)
        .num("gn.c_gn_formula", gn.formula)
        .num("gn.c_gn_inverse_j0", gn.inverse_j0)
        .num("gn.relative_gap", gn.relative_gap())
        .flag("hypotheses.repulsive", hyp.repulsive)
        .flag("hypotheses.nonnegative", hyp.nonnegative)
        .num("hypotheses.decay_sup", hyp.decay_sup)
        .flag("hypotheses.decay_finite", hyp.decay_finite);
    write_field(&out.join("ground_state.csv"), &gs.q)?;
    write_report(out, "ground_state_report.txt", &mut r)?;
    Ok(r)
}

fn initial_field(cfg: &ExperimentConfig, s: &Setup, gs: &GroundState, amplitude: f64) -> Result<Field> {
    match cfg.initial_path() {
        Some(path) => {
            let u = Field::read_csv(BufReader::new(File::open(&path)?))?;
            if !u.grid().same_as(&s.grid) {
                return Err(Error::InvalidParameter(format!(
                    "initial field {} does not live on the configured grid",
                    path.display()
                )));
            }
            Ok(Field::new(s.grid.clone(), u.into_values(), 0.0)?)
        }
        None => Ok(gs.q.scaled(amplitude.into())),
    }
}

/// Whether the kinetic product stays on its initial side of the threshold.
fn invariance(class: ThresholdClass, tr: &Trajectory, gs: &GroundState) -> Option<bool> {
    let recs = &tr.records;
    match class {
        ThresholdClass::BelowBoth => Some(recs.iter().all(|r| r.kinetic_product < gs.thresh_kinetic)),
        ThresholdClass::AboveKinetic | ThresholdClass::NegativeEnergy => {
            Some(recs.iter().all(|r| r.kinetic_product > gs.thresh_kinetic))
        }
        ThresholdClass::Indeterminate => None,
    }
}

fn run_entries(r: &mut Report, prefix: &str, tr: &Trajectory, class: ThresholdClass, gs: &GroundState) {
    let first = tr.records[0];
    let last = tr.records[tr.records.len() - 1];
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    let max_delta = tr.records.iter().map(|x| x.delta_u_sq).fold(0.0, f64::max);
    let key = |k: &str| format!("{prefix}{k}");
    r.text(&key("termination"), tr.termination.as_str())
        .num(&key("t_termination"), tr.t_termination())
        .text(&key("steps"), tr.steps)
        .text(&key("records"), tr.records.len())
        .num(&key("mass_drift"), rel(last.mass, first.mass))
        .num(&key("energy_drift"), rel(last.energy, first.energy))
        .num(&key("delta_growth"), if first.delta_u_sq > 0.0 { (max_delta / first.delta_u_sq).sqrt() } else { 0.0 })
        .num(&key("lp1_ratio"), if first.lp1 > 0.0 { last.lp1 / first.lp1 } else { 0.0 })
        .num(&key("tail_mass_frac_max"), tr.records.iter().map(|x| x.tail_mass_frac).fold(0.0, f64::max))
        .num(&key("dt_final"), last.dt_current);
    match invariance(class, tr, gs) {
        Some(ok) => r.flag(&key("threshold_invariance"), ok),
        None => r.text(&key("threshold_invariance"), "not_applicable"),
    };
    if tr.termination == Termination::Completed {
        if let Ok(sc) = scattering_proxy(&tr.records) {
            r.num(&key("scattering.slope"), sc.slope)
                .num(&key("scattering.lp1_ratio"), sc.ratio)
                .num(&key("scattering.h_growth"), sc.h_growth)
                .text(&key("scattering.consistent"), sc.consistent_with_scattering);
        }
    }
}

pub fn cmd_evolve(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let s = setup(cfg)?;
    let ev = cfg.evolve_section()?;
    let ecfg = cfg.evolve_config()?;
    let radius = cfg.virial.as_ref().map(|v| v.radius.as_vec()[0]);
    let gs = ground_state(cfg, &s)?;
    let u0 = initial_field(cfg, &s, &gs, ev.amplitude)?;
    let mut monitor = Monitor::new(&s.grid, &s.pot, &s.params, radius)?;
    let verdict = threshold_classify_with(monitor.evaluator(), &u0, &gs)?;
    let tr = evolve(&u0, &s.pot, &s.params, &ecfg, &mut monitor)?;

    let mut r = Report::new("evolve");
    model_entries(&mut r, cfg, &s.params);
    r.num("evolve.dt", ecfg.dt)
        .num("evolve.t_end", ecfg.t_end)
        .text("evolve.record_every", ecfg.record_every)
        .text("evolve.adaptive", ecfg.adaptive)
        .num("evolve.dt_min", ecfg.dt_min)
        .text("evolve.initial", cfg.initial_path().map(|p| p.display().to_string()).unwrap_or("amplitude*Q".into()))
        .num("evolve.amplitude", ev.amplitude);
    ground_state_entries(&mut r, &gs);
    verdict_entries(&mut r, "initial", &verdict);
    run_entries(&mut r, "run.", &tr, verdict.class, &gs);
    r.text("run.blowup_trigger", "||Delta u|| > 10x initial");
    write_records(&out.join("trajectory.csv"), &tr.records)?;
    write_field(&out.join("final_state.csv"), &tr.final_state)?;
    write_report(out, "evolve_report.txt", &mut r)?;
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub c: f64,
    pub energy_ratio: f64,
    pub kinetic_ratio: f64,
    pub class: String,
    pub termination: String,
    pub t_termination: f64,
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut out: W) -> Result<()> {
    writeln!(out, "{}", SCAN_COLUMNS.join(","))?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(row.c),
            fmt_f64(row.energy_ratio),
            fmt_f64(row.kinetic_ratio),
            row.class,
            row.termination,
            fmt_f64(row.t_termination)
        )?;
    }
    Ok(())
}

pub fn read_scan_csv<R: std::io::BufRead>(input: R) -> Result<Vec<ScanRow>> {
    let mut lines = input.lines();
    let head = lines.next().transpose()?.unwrap_or_default();
    if head.trim() != SCAN_COLUMNS.join(",") {
        return Err(Error::Parse(format!("unexpected scan header '{head}'")));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}'")));
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != SCAN_COLUMNS.len() {
            return Err(Error::Parse(format!("expected {} columns in '{line}'", SCAN_COLUMNS.len())));
        }
        rows.push(ScanRow {
            c: num(c[0])?,
            energy_ratio: num(c[1])?,
            kinetic_ratio: num(c[2])?,
            class: c[3].to_string(),
            termination: c[4].to_string(),
            t_termination: num(c[5])?,
        });
    }
    Ok(rows)
}

struct ScanOutcome {
    row: ScanRow,
    trajectory: Option<Trajectory>,
    error: Option<String>,
}

fn scan_one(cfg: &ExperimentConfig, s: &Setup, gs: &GroundState, c: f64) -> ScanOutcome {
    let run = || -> Result<(ThresholdVerdict, Trajectory)> {
        // each run owns its grid, operators and monitor
        let grid = Arc::new(RadialGrid::new(s.params.dim(), cfg.grid.r_max, cfg.grid.n)?);
        let u0 = Field::new(grid.clone(), gs.q.values().iter().map(|q| q * c).collect(), 0.0)?;
        let mut monitor = Monitor::new(&grid, &s.pot, &s.params, None)?;
        let verdict = threshold_classify_with(monitor.evaluator(), &u0, gs)?;
        let tr = evolve(&u0, &s.pot, &s.params, &cfg.evolve_config()?, &mut monitor)?;
        Ok((verdict, tr))
    };
    match run() {
        Ok((v, tr)) => ScanOutcome {
            row: ScanRow {
                c,
                energy_ratio: v.energy_ratio,
                kinetic_ratio: v.kinetic_ratio,
                class: v.class.as_str().into(),
                termination: tr.termination.as_str().into(),
                t_termination: tr.t_termination(),
            },
            trajectory: Some(tr),
            error: None,
        },
        Err(e) => ScanOutcome {
            row: ScanRow {
                c,
                energy_ratio: f64::NAN,
                kinetic_ratio: f64::NAN,
                class: "indeterminate".into(),
                termination: "error".into(),
                t_termination: f64::NAN,
            },
            trajectory: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn cmd_classify_scan(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<Report> {
    let s = setup(cfg)?;
    let amps = cfg.amplitudes()?.to_vec();
    cfg.evolve_config()?;
    let gs = ground_state(cfg, &s)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let outcomes: Vec<ScanOutcome> = pool.install(|| amps.par_iter().map(|&c| scan_one(cfg, &s, &gs, c)).collect());

    let mut r = Report::new("classify-scan");
    model_entries(&mut r, cfg, &s.params);
    ground_state_entries(&mut r, &gs);
    r.text("scan.runs", outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        let prefix = format!("run.{i}.");
        r.num(&format!("{prefix}c"), o.row.c).text(&format!("{prefix}class"), &o.row.class);
        match (&o.trajectory, &o.error) {
            (Some(tr), _) => {
                let class = classify_label(&o.row.class);
                run_entries(&mut r, &prefix, tr, class, &gs);
                write_records(&out.join(format!("scan_run_{i:03}.csv")), &tr.records)?;
            }
            (None, Some(e)) => {
                r.text(&format!("{prefix}error"), e);
            }
            (None, None) => {}
        }
    }
    let rows: Vec<ScanRow> = outcomes.into_iter().map(|o| o.row).collect();
    let mut csv = create(out.join("scan_summary.csv"))?;
    write_scan_csv(&rows, &mut csv)?;
    csv.flush()?;
    write_report(out, "scan_report.txt", &mut r)?;
    Ok(r)
}

fn classify_label(s: &str) -> ThresholdClass {
    match s {
        "below_both" => ThresholdClass::BelowBoth,
        "above_kinetic" => ThresholdClass::AboveKinetic,
        "negative_energy" => ThresholdClass::NegativeEnergy,
        _ => ThresholdClass::Indeterminate,
    }
}

pub const VIRIAL_COLUMNS: [&str; 14] = [
    "t",
    "virial_MR",
    "dMdt_fd",
    "rhs_bound",
    "main",
    "energy_term",
    "kinetic_term",
    "potential_term",
    "rem_scale",
    "rem_gradient",
    "rem_nonlinear",
    "rem_tail",
    "slack",
    "pass",
];

/// Per-record virial table for one radius: `(rows, all_pass, max |fd|)`.
fn virial_table(
    eval: &Evaluator,
    snaps: &[Field],
    radius: f64,
    e_initial: f64,
    p_norm: f64,
) -> Result<(Vec<[f64; 14]>, bool, f64)> {
    let grid = snaps[0].grid();
    let w = make_virial_weight(grid, radius)?;
    let t: Vec<f64> = snaps.iter().map(|u| u.t).collect();
    let m: Vec<f64> = snaps.iter().map(|u| localized_virial(u, &w)).collect::<Result<_>>()?;
    let fd = fd_derivative(&t, &m)?;
    let mut rows = Vec::with_capacity(fd.len());
    let mut all = true;
    let mut max_fd: f64 = 0.0;
    for (k, &(tk, d)) in fd.iter().enumerate() {
        let b = virial_rhs_bound_with(eval, &snaps[k + 1], &w, e_initial)?;
        let slack = VIRIAL_SLACK_REL * b.total().abs() + VIRIAL_SLACK_P * p_norm;
        let ok = d <= b.total() + slack;
        all &= ok;
        max_fd = max_fd.max(d.abs());
        rows.push([
            tk,
            m[k + 1],
            d,
            b.total(),
            b.main(),
            b.energy_term,
            b.kinetic_term,
            b.potential_term,
            b.rem_scale,
            b.rem_gradient,
            b.rem_nonlinear,
            b.rem_tail,
            slack,
            if ok { 1.0 } else { 0.0 },
        ]);
    }
    Ok((rows, all, max_fd))
}

pub fn cmd_virial_report(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let s = setup(cfg)?;
    let ev = cfg.evolve_section()?;
    let radii = cfg.radii()?;
    let mut ecfg = cfg.evolve_config()?;
    ecfg.keep_snapshots = true;
    let gs = ground_state(cfg, &s)?;
    let u0 = initial_field(cfg, &s, &gs, ev.amplitude)?;
    let mut monitor = Monitor::new(&s.grid, &s.pot, &s.params, Some(radii[0]))?;
    let verdict = threshold_classify_with(monitor.evaluator(), &u0, &gs)?;
    let tr = evolve(&u0, &s.pot, &s.params, &ecfg, &mut monitor)?;
    let snaps = tr.snapshots.as_ref().ok_or(Error::NoSnapshots)?;
    if snaps.len() < 3 {
        return Err(Error::TooFewRecords { need: 3, have: snaps.len() });
    }
    let e_initial = tr.records[0].energy;

    let mut r = Report::new("virial-report");
    model_entries(&mut r, cfg, &s.params);
    ground_state_entries(&mut r, &gs);
    verdict_entries(&mut r, "initial", &verdict);
    run_entries(&mut r, "run.", &tr, verdict.class, &gs);
    r.text("virial.slack", format!("{VIRIAL_SLACK_REL} |bound| + {VIRIAL_SLACK_P} P"));

    let (rows, all, max_fd) = virial_table(monitor.evaluator(), snaps, radii[0], e_initial, gs.p_norm)?;
    let mut csv = create(out.join("virial_table.csv"))?;
    writeln!(csv, "{}", VIRIAL_COLUMNS.join(","))?;
    for row in &rows {
        writeln!(csv, "{}", row.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(","))?;
    }
    csv.flush()?;
    r.num("virial.R", radii[0])
        .text("virial.interior_records", rows.len())
        .flag("virial.verdict", all)
        .num("virial.max_abs_fd_over_P", max_fd / gs.p_norm);
    let margins = monitor.weight().expect("monitor built with a radius").margins();
    r.num("virial.weight.convexity_margin", margins.convexity)
        .num("virial.weight.slope_margin", margins.slope)
        .num("virial.weight.laplacian_margin", margins.laplacian);

    for &radius in &radii[1..] {
        let key = format!("sweep.R={radius}");
        match virial_table(monitor.evaluator(), snaps, radius, e_initial, gs.p_norm) {
            Ok((rows, all, max_fd)) => {
                r.flag(&format!("{key}.verdict"), all)
                    .text(&format!("{key}.interior_records"), rows.len())
                    .num(&format!("{key}.max_abs_fd_over_P"), max_fd / gs.p_norm);
            }
            Err(Error::InvalidParameter(msg)) => {
                r.text(&format!("{key}.verdict"), format!("skipped ({msg})"));
            }
            Err(e) => return Err(e),
        }
    }
    write_records(&out.join("trajectory.csv"), &tr.records)?;
    write_report(out, "virial_report.txt", &mut r)?;
    Ok(r)
}

pub fn parse_family(name: &str, s: Option<&str>) -> Result<PairFamily> {
    let s_val = || -> Result<Rational64> {
        let text = s.ok_or_else(|| Error::InvalidParameter(format!("family {name} needs --s")))?;
        parse_rational(text)
    };
    match name.to_ascii_lowercase().as_str() {
        "s" | "schrodinger" => Ok(PairFamily::Schrodinger),
        "b" | "biharmonic" => Ok(PairFamily::Biharmonic),
        "lambda_s" | "lambda" => Ok(PairFamily::Lambda(s_val()?)),
        "dual_lambda_s" | "duallambda_s" | "dual_lambda" | "duallambda" => Ok(PairFamily::DualLambda(s_val()?)),
        other => Err(Error::Parse(format!("unknown family '{other}' (S, B, Lambda_s, DualLambda_s)"))),
    }
}

pub fn parse_rational(text: &str) -> Result<Rational64> {
    let t = text.trim();
    let bad = || Error::Parse(format!("malformed rational '{text}'"));
    match t.split_once('/') {
        Some((a, b)) => {
            let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0 {
                return Err(bad());
            }
            Ok(Rational64::new(a, b))
        }
        None => t.parse::<i64>().map(Rational64::from_integer).map_err(|_| bad()),
    }
}

/// Text printed by the `pairs` command.
pub fn cmd_pairs(n: u32, family: PairFamily, q: Option<&str>, r: Option<&str>) -> Result<String> {
    let parse = |s: &str| s.parse::<Exponent>();
    let q = q.map(parse).transpose()?;
    let r = r.map(parse).transpose()?;
    let head = format!("family: {family}\nN: {n}\n");
    Ok(match (q, r) {
        (Some(q), Some(r)) => {
            let ok = pair_check(n, q, r, family)?;
            let verdict = if ok {
                "admissible".to_string()
            } else if excluded_endpoint(n, &q, &r, family) {
                format!("rejected: excluded endpoint, requires (q, r, N) != ({q}, {r}, {n})")
            } else {
                "not admissible".to_string()
            };
            format!("{head}q: {q}\nr: {r}\nverdict: {verdict}\n")
        }
        (Some(q), None) => match pair_solve(n, family, Given::Q(q)) {
            Ok(p) => format!("{head}q: {}\nr: {}\n", p.q, p.r),
            Err(Error::NoPair(msg)) => format!("{head}q: {q}\nno solution in range ({msg})\n"),
            Err(e) => return Err(e),
        },
        (None, Some(r)) => match pair_solve(n, family, Given::R(r)) {
            Ok(p) => format!("{head}q: {}\nr: {}\n", p.q, p.r),
            Err(Error::NoPair(msg)) => format!("{head}r: {r}\nno solution in range ({msg})\n"),
            Err(e) => return Err(e),
        },
        (None, None) => return Err(Error::InvalidParameter("pairs needs --q, --r or both".into())),
    })
}
