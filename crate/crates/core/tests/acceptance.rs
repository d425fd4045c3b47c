//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use num_complex::Complex64;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bnls_core::cli::{cmd_classify_scan, cmd_virial_report, read_scan_csv, ExperimentConfig, Report};
use bnls_core::diagnostics::pairs::{pair_check, Exponent, PairFamily};
use bnls_core::diagnostics::{make_virial_weight, read_records_csv, Monitor, MonitorRecord};
use bnls_core::evolution::{evolve, EvolveConfig, Propagator};
use bnls_core::grid::{mass, weighted_inner, Field, RadialGrid};
use bnls_core::groundstate::{gn_ratio, pohozaev_report, sharp_gn_constant, solve_ground_state, GroundState};
use bnls_core::model::{ModelParams, Nonlinearity, Potential, PotentialTable};
use bnls_core::operators::{build_bilaplacian, build_h, build_laplacian};

const N_DESK: usize = 4096;
const R_MAX: f64 = 30.0;

type Outcome = Result<(bool, String), String>;

fn grid(dim: usize, r_max: f64, n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(dim, r_max, n).unwrap())
}

fn params(dim: usize, p: f64) -> ModelParams {
    ModelParams::intercritical(dim, p, Nonlinearity::Focusing).unwrap()
}

fn ground_state(dim: usize, p: f64, r_max: f64, n: usize) -> GroundState {
    solve_ground_state(&params(dim, p), &grid(dim, r_max, n), 1e-10, 500).unwrap()
}

fn bump() -> Potential {
    Potential::inverse_power(1.0, 9.0).unwrap()
}

fn random_smooth(g: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> Field {
    let terms: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..4.0), rng.gen_range(0.0..3.0)))
        .collect();
    Field::from_fn(g.clone(), |r| {
        terms.iter().map(|&(a, b, s, c)| Complex64::new(a, b) * (-((r - c) / s).powi(2)).exp()).sum()
    })
}

fn pohozaev() -> Outcome {
    let mut ok = true;
    let mut detail = vec![];
    for (dim, p) in [(10, 2.0), (9, 2.0), (5, 2.7)] {
        let pars = params(dim, p);
        let coarse = pohozaev_report(&ground_state(dim, p, R_MAX, N_DESK), &pars).max();
        let fine = pohozaev_report(&ground_state(dim, p, R_MAX, 2 * N_DESK), &pars).max();
        let ratio = coarse / fine;
        ok &= coarse < 1e-3 && fine < 1e-3 && (3.5..=4.5).contains(&ratio);
        detail.push(format!("({dim},{p}) max {coarse:.3e} -> {fine:.3e} ratio {ratio:.3}"));
    }
    Ok((ok, detail.join("; ")))
}

fn sharp_gn() -> Outcome {
    let pars = params(10, 2.0);
    let desk = ground_state(10, 2.0, R_MAX, N_DESK);
    let desk_gap = sharp_gn_constant(&desk, &pars).map_err(|e| e.to_string())?.relative_gap();
    let fine = ground_state(10, 2.0, R_MAX, 8 * N_DESK);
    let gap = sharp_gn_constant(&fine, &pars).map_err(|e| e.to_string())?.relative_gap();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = desk.grid().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u = random_smooth(&g, &mut rng);
        worst = worst.max(gn_ratio(&u, &pars).map_err(|e| e.to_string())? / desk.c_gn);
    }
    let at_q = (gn_ratio(&desk.q, &pars).map_err(|e| e.to_string())? / desk.c_gn - 1.0).abs();
    let ok = gap < 1e-6 && worst <= 1.0 + 1e-6 && at_q < 1e-3;
    Ok((ok, format!("gap {gap:.3e} at n={} ({desk_gap:.3e} at n={N_DESK}); max ratio/C_GN {worst:.6}; |ratio(Q)/C_GN-1| {at_q:.3e}", 8 * N_DESK)))
}

fn max_rel_drift(records: &[MonitorRecord], f: impl Fn(&MonitorRecord) -> f64) -> f64 {
    let f0 = f(&records[0]);
    records.iter().map(|r| ((f(r) - f0) / f0).abs()).fold(0.0, f64::max)
}

fn conservation() -> Outcome {
    let pars = params(10, 2.0);
    let gs = ground_state(10, 2.0, R_MAX, N_DESK);
    let g = gs.grid().clone();
    let u0 = gs.q.scaled(Complex64::new(0.5, 0.0));
    let pot = bump();
    let run = |dt: f64| -> Result<Vec<MonitorRecord>, String> {
        let mut cfg = EvolveConfig::new(dt, 5.0).map_err(|e| e.to_string())?;
        cfg.adaptive = false;
        cfg.record_every = (0.1 / dt).round() as usize;
        let mut mon = Monitor::new(&g, &pot, &pars, None).map_err(|e| e.to_string())?;
        let tr = evolve(&u0, &pot, &pars, &cfg, &mut mon).map_err(|e| e.to_string())?;
        if tr.records.last().map(|r| r.t) != Some(5.0) {
            return Err(format!("dt={dt} run ended with {}", tr.termination));
        }
        Ok(tr.records)
    };
    let (coarse, fine) = thread::scope(|s| {
        let a = s.spawn(|| run(1e-3));
        let b = s.spawn(|| run(5e-4));
        (a.join().unwrap(), b.join().unwrap())
    });
    let (coarse, fine) = (coarse?, fine?);
    let mass_drift = max_rel_drift(&coarse, |r| r.mass).max(max_rel_drift(&fine, |r| r.mass));
    let (ec, ef) = (max_rel_drift(&coarse, |r| r.energy), max_rel_drift(&fine, |r| r.energy));
    let ratio = ec / ef;

    let h = build_h(&g, &pot).map_err(|e| e.to_string())?;
    let mut prop = Propagator::new(&h, &pars);
    let mut u = u0.clone();
    for _ in 0..5000 {
        u = prop.step(&u, 1e-3).map_err(|e| e.to_string())?;
    }
    for _ in 0..5000 {
        u = prop.step(&u, -1e-3).map_err(|e| e.to_string())?;
    }
    let diff = u.with_values(u.values().iter().zip(u0.values()).map(|(a, b)| a - b).collect());
    let back = (mass(&diff) / mass(&u0)).sqrt();

    let ok = mass_drift < 1e-8 && (3.0..=5.0).contains(&ratio) && back < 1e-6;
    Ok((
        ok,
        format!("mass drift {mass_drift:.3e}; energy drift {ec:.3e} / {ef:.3e} ratio {ratio:.3}; reversibility {back:.3e}"),
    ))
}

fn operator_ordering() -> Outcome {
    let g = grid(10, R_MAX, N_DESK);
    let lap = build_laplacian(&g);
    let bilap = build_bilaplacian(&g);
    let table_r: Vec<f64> = (0..=600).map(|i| i as f64 * 0.05).collect();
    let table_v: Vec<f64> = table_r.iter().map(|r| 2.0 * (1.0 + r * r).powf(-6.0)).collect();
    let potentials = [
        ("zero", Potential::Zero),
        ("C=1,sigma=9", bump()),
        ("C=0.3,sigma=5.5", Potential::inverse_power(0.3, 5.5).unwrap()),
        ("C=5,sigma=12", Potential::inverse_power(5.0, 12.0).unwrap()),
        ("tabulated", Potential::Tabulated(PotentialTable::new(table_r, table_v, None).unwrap())),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fields: Vec<Field> = (0..100).map(|_| random_smooth(&g, &mut rng)).collect();
    let mut worst = f64::INFINITY;
    let mut self_adjoint: f64 = 0.0;
    for (_, pot) in &potentials {
        let h = build_h(&g, pot).map_err(|e| e.to_string())?;
        for u in &fields {
            let lu = lap.apply(u).map_err(|e| e.to_string())?;
            let norm = mass(&lu);
            let u = u.scaled(Complex64::new(1.0 / norm.sqrt(), 0.0));
            let hu = h.apply(&u).map_err(|e| e.to_string())?;
            let quad = weighted_inner(&hu, &u).map_err(|e| e.to_string())?.re;
            worst = worst.min(quad - 1.0);
            let b = weighted_inner(&bilap.apply(&u).map_err(|e| e.to_string())?, &u).map_err(|e| e.to_string())?.re;
            self_adjoint = self_adjoint.max((b - 1.0).abs());
        }
    }
    let ok = worst >= -1e-12;
    Ok((
        ok,
        format!(
            "min <Hu,u> - ||Lu||^2 = {worst:.3e} over {} potentials x 100 fields (||Lu|| = 1); max |<L^2u,u> - ||Lu||^2| {self_adjoint:.1e}",
            potentials.len()
        ),
    ))
}

fn scan_config(amplitudes: &[f64]) -> ExperimentConfig {
    let list: Vec<String> = amplitudes.iter().map(|c| format!("{c:?}")).collect();
    ExperimentConfig::parse(&format!(
        "[model]\nN = 10\np = 2.0\nlambda = -1\n\
         [potential]\nkind = \"inverse_power\"\nC = 1.0\nsigma = 9.0\n\
         [grid]\nr_max = {R_MAX:?}\nn = {N_DESK}\n\
         [evolve]\ndt = 1e-3\nt_end = 5.0\nrecord_every = 50\n\
         [scan]\namplitudes = [{}]\n",
        list.join(", ")
    ))
    .unwrap()
}

const SCAN: [f64; 6] = [0.25, 0.5, 0.75, 1.25, 1.5, 2.0];

fn run_scan(dir: &Path) -> Result<Report, String> {
    cmd_classify_scan(&scan_config(&SCAN), dir, Some(3)).map_err(|e| e.to_string())
}

fn scan_records(dir: &Path, i: usize) -> Result<Vec<MonitorRecord>, String> {
    let bytes = fs::read(dir.join(format!("scan_run_{i:03}.csv"))).map_err(|e| e.to_string())?;
    read_records_csv(bytes.as_slice()).map_err(|e| e.to_string())
}

fn dichotomy(dir: &Path) -> Outcome {
    let rows = read_scan_csv(fs::read(dir.join("scan_summary.csv")).map_err(|e| e.to_string())?.as_slice())
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = vec![];
    for (i, row) in rows.iter().enumerate() {
        let recs = scan_records(dir, i)?;
        let (first, last) = (recs[0], recs[recs.len() - 1]);
        if [0.25, 0.5, 0.75].contains(&row.c) {
            let growth = (recs.iter().map(|r| r.delta_u_sq).fold(0.0, f64::max) / first.delta_u_sq).sqrt();
            let lp1 = last.lp1 / first.lp1;
            ok &= row.termination == "completed" && last.t == 5.0 && growth <= 2.0 && lp1 < 0.8;
            detail.push(format!("c={} {} growth {growth:.3} lp1 ratio {lp1:.3}", row.c, row.termination));
        } else if [1.5, 2.0].contains(&row.c) {
            ok &= row.class == "negative_energy" && row.termination == "blowup_detected" && row.t_termination < 5.0;
            detail.push(format!("c={} {} {} at t={:.4}", row.c, row.class, row.termination, row.t_termination));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn threshold_invariance(dir: &Path, report: &Report) -> Outcome {
    let thresh: f64 = report.get("ground_state.thresh_kinetic").ok_or("no threshold")?.parse().map_err(|_| "bad threshold")?;
    let rows = read_scan_csv(fs::read(dir.join("scan_summary.csv")).map_err(|e| e.to_string())?.as_slice())
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = vec![];
    let mut checked = 0;
    for (i, row) in rows.iter().enumerate() {
        let recs = scan_records(dir, i)?;
        let kp: Vec<f64> = recs.iter().map(|r| r.kinetic_product / thresh).collect();
        let (lo, hi) = kp.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        match row.class.as_str() {
            "below_both" if row.termination == "completed" => {
                ok &= hi < 1.0;
                checked += 1;
                detail.push(format!("c={} max {hi:.4}", row.c));
            }
            "above_kinetic" | "negative_energy" => {
                ok &= lo > 1.0;
                checked += 1;
                detail.push(format!("c={} min {lo:.4}", row.c));
            }
            _ => {}
        }
    }
    ok &= checked == 6;
    Ok((ok, format!("kinetic_product / thresh_kinetic over all records: {}", detail.join("; "))))
}

fn virial_config(pot: &str, amplitude: f64, dt: f64, t_end: f64, record_every: usize) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "[model]\nN = 10\np = 2.0\n{pot}[grid]\nr_max = {R_MAX:?}\nn = {N_DESK}\n\
         [evolve]\ndt = {dt:?}\nt_end = {t_end:?}\nrecord_every = {record_every}\namplitude = {amplitude:?}\n\
         [virial]\nR = 2.0\n"
    ))
    .unwrap()
}

fn virial() -> Outcome {
    let mut ok = true;
    let mut detail = vec![];
    for (r_max, n) in [(R_MAX, N_DESK), (80.0, 10923)] {
        let g = grid(10, r_max, n);
        for radius in [2.0, 4.0, 8.0] {
            match make_virial_weight(&g, radius) {
                Ok(w) => {
                    let m = w.margins();
                    let good = m.convexity >= -1e-12 && m.slope >= -1e-12 && m.laplacian >= -1e-10;
                    // the sampled derivative must match a difference quotient of phi
                    let h = g.spacing();
                    let fd_err = (1..n - 1)
                        .map(|i| ((w.phi[i + 1] - w.phi[i - 1]) / (2.0 * h) - w.dphi[i]).abs() / radius)
                        .fold(0.0, f64::max);
                    ok &= good && fd_err < 1e-4;
                    detail.push(format!("R={radius} r_max={r_max} margins ok={good}"));
                }
                Err(e) if 10.0 * radius > r_max => detail.push(format!("R={radius} r_max={r_max} n/a ({e})")),
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    let bump = "[potential]\nkind = \"inverse_power\"\nC = 1.0\nsigma = 9.0\n";
    let zero = "[potential]\nkind = \"zero\"\n";
    let runs = [
        ("1.5Q", virial_config(bump, 1.5, 1e-3, 5.0, 5)),
        ("2Q", virial_config(bump, 2.0, 1e-3, 5.0, 5)),
        ("soliton", virial_config(zero, 1.0, 1e-4, 1.0, 40)),
    ];
    let dirs: Vec<tempfile::TempDir> = runs.iter().map(|_| tempfile::tempdir().unwrap()).collect();
    let reports: Vec<Result<Report, String>> = thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .zip(&dirs)
            .map(|((_, cfg), d)| s.spawn(move || cmd_virial_report(cfg, d.path()).map_err(|e| e.to_string())))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for ((name, _), rep) in runs.iter().zip(reports) {
        let rep = rep?;
        let term = rep.get("run.termination").unwrap_or("?").to_string();
        let fd: f64 = rep.get("virial.max_abs_fd_over_P").ok_or("missing fd")?.parse().map_err(|_| "bad fd")?;
        if *name == "soliton" {
            ok &= term == "completed" && fd < 1e-3;
            detail.push(format!("soliton max|fd|/P {fd:.3e}"));
        } else {
            let verdict = rep.get("virial.verdict") == Some("pass");
            ok &= term == "blowup_detected" && verdict;
            detail.push(format!("{name} {term}, fd <= bound + slack: {verdict}"));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn admissibility() -> Outcome {
    let inf = Exponent::infinity();
    let mut ok = true;
    for n in 1..=16u32 {
        ok &= pair_check(n, inf, Exponent::integer(2).unwrap(), PairFamily::Biharmonic).map_err(|e| e.to_string())?;
    }
    for n in 5..=12u32 {
        let r = Exponent::new(2 * n as i64, n as i64 - 4).unwrap();
        // 4/2 + N (N-4)/(2N) = N/2
        let inv_r = Rational64::new(n as i64 - 4, 2 * n as i64);
        ok &= Rational64::new(4, 2) + Rational64::from_integer(n as i64) * inv_r == Rational64::new(n as i64, 2);
        ok &= pair_check(n, Exponent::integer(2).unwrap(), r, PairFamily::Biharmonic).map_err(|e| e.to_string())?;
    }
    let endpoint = pair_check(4, Exponent::integer(2).unwrap(), inf, PairFamily::Biharmonic).map_err(|e| e.to_string())?;
    ok &= !endpoint;
    let lambda = pair_check(10, inf, Exponent::new(5, 2).unwrap(), PairFamily::Lambda(Rational64::from_integer(1)))
        .map_err(|e| e.to_string())?;
    ok &= lambda;
    Ok((ok, format!("(inf,2) N=1..16 and (2,2N/(N-4)) N=5..12 accepted; (2,inf,4) accepted={endpoint}; Lambda_1 (inf,5/2) N=10 accepted={lambda}")))
}

fn truncation() -> Outcome {
    let (a, b) = thread::scope(|s| {
        let a = s.spawn(|| ground_state(10, 2.0, R_MAX, N_DESK));
        let b = s.spawn(|| ground_state(10, 2.0, 2.0 * R_MAX, 2 * N_DESK));
        (a.join().unwrap(), b.join().unwrap())
    });
    let de = ((a.e0 - b.e0) / a.e0).abs();
    let dk = ((a.thresh_kinetic - b.thresh_kinetic) / a.thresh_kinetic).abs();
    Ok((de < 1e-4 && dk < 1e-4, format!("relative change E0 {de:.3e}, thresh_kinetic {dk:.3e}")))
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let x = fs::read(a.join("scan_summary.csv")).map_err(|e| e.to_string())?;
    let y = fs::read(b.join("scan_summary.csv")).map_err(|e| e.to_string())?;
    let mut same_runs = true;
    for i in 0..SCAN.len() {
        let name = format!("scan_run_{i:03}.csv");
        same_runs &= fs::read(a.join(&name)).ok() == fs::read(b.join(&name)).ok();
    }
    Ok((x == y && same_runs, format!("summary identical: {}, per-run CSVs identical: {same_runs}", x == y)))
}

fn main() {
    let start = Instant::now();
    let scan_a = tempfile::tempdir().unwrap();
    let scan_b = tempfile::tempdir().unwrap();
    let names = [
        "pohozaev identities",
        "sharp Gagliardo-Nirenberg constant",
        "conservation",
        "operator ordering",
        "scattering/blow-up dichotomy",
        "threshold invariance",
        "localized virial",
        "admissible pairs",
        "truncation robustness",
        "determinism",
    ];
    let outcomes: Vec<Outcome> = thread::scope(|s| {
        let (da, db) = (scan_a.path(), scan_b.path());
        let scans = s.spawn(move || {
            let ra = s.spawn(move || run_scan(da));
            let rb = run_scan(db);
            (ra.join().unwrap(), rb)
        });
        let c1 = s.spawn(pohozaev);
        let c2 = s.spawn(sharp_gn);
        let c3 = s.spawn(conservation);
        let c4 = s.spawn(operator_ordering);
        let c7 = s.spawn(virial);
        let c8 = admissibility();
        let c9 = s.spawn(truncation);
        let (ra, rb) = scans.join().unwrap();
        let (c5, c6, c10) = match (&ra, &rb) {
            (Ok(rep), Ok(_)) => (dichotomy(da), threshold_invariance(da, rep), determinism(da, db)),
            (Err(e), _) | (_, Err(e)) => (Err(e.clone()), Err(e.clone()), Err(e.clone())),
        };
        vec![
            c1.join().unwrap(),
            c2.join().unwrap(),
            c3.join().unwrap(),
            c4.join().unwrap(),
            c5,
            c6,
            c7.join().unwrap(),
            c8,
            c9.join().unwrap(),
            c10,
        ]
    });
    let mut failed = 0;
    for (i, (name, out)) in names.iter().zip(&outcomes).enumerate() {
        let (pass, detail) = match out {
            Ok((p, d)) => (*p, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} {name}: {} | {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} passed in {:.1}s", names.len() - failed, names.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
