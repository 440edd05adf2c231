//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Benchmark files are read from `$PMEDIAN_DATA_DIR` (default `data/` at the
//! workspace root). A criterion whose files are missing prints FAIL with the
//! reason but does not fail the run; any other FAIL exits with status 1.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use pmedian::benders::{compute_ktilde, dual_check, evaluate_client, separate};
use pmedian::driver::solve_keeping_cuts;
use pmedian::export::{export_lp, Formulation};
use pmedian::instance::{floor_euclid, parse_orlib, parse_tsplib};
use pmedian::oracle::{binomial, enumerate_opt, full_f4_lp_value, sp_lp_value};
use pmedian::{solve, Instance, Params, Preprocessed, SolveStatus};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Benchmark data not present on this machine.
    NoData(String),
}

fn data_dir() -> PathBuf {
    std::env::var_os("PMEDIAN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).unwrap().join("data"))
}

/// File contents, or the file name when it cannot be read.
fn read_data(file: &str) -> Result<String, String> {
    std::fs::read_to_string(data_dir().join(file)).map_err(|_| file.to_string())
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Exact agreement with enumeration on small random instances.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut cases = 0;
    for t in 0..240 {
        let n = r.gen_range(4..=12);
        let p = r.gen_range(1..n);
        let inst = random_instance(&mut r, n, p, 1, 20, t % 2 == 0);
        let res = match solve(&inst, &Params::default()) {
            Ok(res) => res,
            Err(e) => return Outcome::Fail(format!("case {t}: {e}")),
        };
        let truth = enumerate_opt(&inst).expect("small enumeration").value;
        if res.status != SolveStatus::Optimal || res.value != truth {
            return Outcome::Fail(format!("case {t} (n={n}, p={p}): got {:?} {}, expected {truth}", res.status, res.value));
        }
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("{cases} instances, {secs:.2}s"))
}

const ORLIB: [(&str, usize, i64); 9] = [
    ("pmed26.txt", 5, 9917),
    ("pmed27.txt", 10, 8306),
    ("pmed31.txt", 5, 10086),
    ("pmed32.txt", 10, 9297),
    ("pmed35.txt", 5, 10400),
    ("pmed38.txt", 5, 11060),
    ("pmed39.txt", 5, 11069),
    ("pmed40.txt", 5, 12305),
    ("pmed40.txt", 500, 900),
];

/// `Ok(None)` when the file is not present.
fn load_orlib(file: &str, p: usize) -> Result<Option<Instance>, String> {
    let Ok(text) = read_data(file) else {
        return Ok(None);
    };
    let inst = parse_orlib(&text).map_err(|e| format!("{file}: {e}"))?;
    inst.with_p(p).map(Some).map_err(|e| format!("{file}: {e}"))
}

fn orlib_optima() -> Outcome {
    let mut lines = Vec::new();
    let mut missing = Vec::new();
    let mut failed = false;
    for (file, p, opt) in ORLIB {
        let inst = match load_orlib(file, p) {
            Ok(Some(inst)) => inst,
            Ok(None) => {
                missing.push(file);
                continue;
            }
            Err(e) => {
                failed = true;
                lines.push(e);
                continue;
            }
        };
        let params = Params {
            time_limit: Some(1800.0),
            ..Params::default()
        };
        match solve(&inst, &params) {
            Ok(r) => {
                let ok = r.status == SolveStatus::Optimal && r.value == opt;
                failed |= !ok;
                lines.push(format!("{file} p={p}: {} {:?} in {:.1}s", r.value, r.status, r.ttot));
            }
            Err(e) => {
                failed = true;
                lines.push(format!("{file} p={p}: {e}"));
            }
        }
    }
    if failed {
        return Outcome::Fail(lines.join("; "));
    }
    if !missing.is_empty() {
        missing.dedup();
        return Outcome::NoData(format!("missing {} in {}", missing.join(", "), data_dir().display()));
    }
    Outcome::Pass(lines.join("; "))
}

fn lb1_agrees(inst: &Instance) -> Result<(f64, f64), String> {
    let prep = Preprocessed::new(inst);
    let r = solve(inst, &Params::default()).map_err(|e| e.to_string())?;
    let full = full_f4_lp_value(inst, &prep).map_err(|e| e.to_string())?;
    Ok((r.lb1, full))
}

fn root_bound() -> Outcome {
    let mut r = rng(3);
    let mut insts = Vec::new();
    for n in [20, 40, 60, 80] {
        insts.push(random_instance(&mut r, n, n / 8, 1, 100, false));
        insts.push(random_instance(&mut r, n, n / 4, 1, 100, true));
    }
    for (n, p) in [(60, 4), (120, 10), (150, 15)] {
        let text = orlib_text(&mut r, n, 2 * n, p);
        insts.push(parse_orlib(&text).unwrap());
    }
    let mut worst = 0.0f64;
    for inst in &insts {
        let k = Preprocessed::new(inst).k_total();
        if k > 50_000 {
            continue;
        }
        match lb1_agrees(inst) {
            Ok((lb1, full)) => {
                let rel = (lb1 - full).abs() / full.abs().max(1.0);
                worst = worst.max(rel);
                if rel > 1e-6 {
                    return Outcome::Fail(format!("{}: LB1 {lb1} vs full LP {full}", inst.name));
                }
            }
            Err(e) => return Outcome::Fail(format!("{}: {e}", inst.name)),
        }
    }
    let synthetic = format!("{} generated instances, worst relative difference {worst:.1e}", insts.len());
    let inst = match load_orlib("pmed26.txt", 5) {
        Ok(Some(inst)) => inst,
        Ok(None) => return Outcome::NoData(format!("{synthetic}; missing pmed26.txt in {}", data_dir().display())),
        Err(e) => return Outcome::Fail(e),
    };
    let r = match solve(&inst, &Params::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("pmed26: {e}")),
    };
    if (r.lb1 - 9854.0).abs() > 1.0 {
        return Outcome::Fail(format!("pmed26 LB1 {:.3}, expected 9854", r.lb1));
    }
    if Preprocessed::new(&inst).k_total() <= 50_000 {
        match lb1_agrees(&inst) {
            Ok((lb1, full)) if (lb1 - full).abs() <= 1e-6 * full.abs() => {}
            Ok((lb1, full)) => return Outcome::Fail(format!("pmed26: LB1 {lb1} vs full LP {full}")),
            Err(e) => return Outcome::Fail(format!("pmed26: {e}")),
        }
    }
    Outcome::Pass(format!("{synthetic}; pmed26 LB1 {:.3}", r.lb1))
}

fn closed_form_fuzz() -> Outcome {
    let mut r = rng(4);
    let cases = 10_000;
    for t in 0..cases {
        let n = r.gen_range(2..=15);
        let m = r.gen_range(2..=15);
        let p = r.gen_range(1..m);
        let hi = r.gen_range(2..=30);
        let inst = random_rect(&mut r, n, m, p, hi);
        let prep = Preprocessed::new(&inst);
        let y = fractional_point(&mut r, m, p);
        let i = r.gen_range(0..n);
        let k = match compute_ktilde(&prep, i, &y) {
            Ok(k) => k,
            Err(e) => return Outcome::Fail(format!("case {t}: {e}")),
        };
        if k != naive_ktilde(&prep, i, &y) {
            return Outcome::Fail(format!("case {t}: ktilde {k} vs scan {}", naive_ktilde(&prep, i, &y)));
        }
        let value = evaluate_client(&prep, i, &y).unwrap().value;
        let naive = sp_lp_value(i, &y, &prep);
        if (value - naive).abs() > 1e-9 {
            return Outcome::Fail(format!("case {t}: value {value} vs {naive}"));
        }
        match dual_check(&prep, i, k, &y) {
            Ok((pv, dv)) if (pv - dv).abs() <= 1e-9 => {}
            Ok((pv, dv)) => return Outcome::Fail(format!("case {t}: primal {pv} vs dual {dv}")),
            Err(e) => return Outcome::Fail(format!("case {t}: {e}")),
        }
    }
    Outcome::Pass(format!("{cases} cases"))
}

fn cut_validity() -> Outcome {
    let mut r = rng(5);
    let (mut instances, mut cuts, mut checks) = (0, 0, 0u64);
    while instances < 40 {
        let n = r.gen_range(4..=16);
        let p = r.gen_range(1..n);
        if binomial(n, p) > 100_000 {
            continue;
        }
        let hi = r.gen_range(2..=50);
        let inst = random_instance(&mut r, n, p, 1, hi, instances % 2 == 0);
        let pool = match solve_keeping_cuts(&inst, &Params::default()) {
            Ok((_, pool)) => pool,
            Err(e) => return Outcome::Fail(format!("{}: {e}", inst.name)),
        };
        for mask in all_masks(n, p) {
            let nearest: Vec<i64> = (0..n).map(|i| nearest_open(&inst, i, &mask)).collect();
            for e in pool.entries() {
                checks += 1;
                if e.cut.bound_at_binary(&mask) > nearest[e.cut.client] {
                    return Outcome::Fail(format!("{} cuts off an open set of {}", e.cut, inst.name));
                }
            }
        }
        cuts += pool.len();
        instances += 1;
    }
    Outcome::Pass(format!("{instances} instances, {cuts} cuts, {checks} checks, 0 violations"))
}

fn median_separation_time(n: usize, m: usize, p: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let inst = random_rect(&mut r, n, m, p, 1000);
    let prep = Preprocessed::new(&inst);
    let theta = vec![0.0; n];
    // warm caches and the allocator before timing
    for _ in 0..3 {
        std::hint::black_box(separate(&prep, &fractional_point(&mut r, m, p), &theta).unwrap());
    }
    let mut times: Vec<f64> = (0..20)
        .map(|_| {
            let y = fractional_point(&mut r, m, p);
            let start = Instant::now();
            for _ in 0..5 {
                std::hint::black_box(separate(&prep, &y, &theta).unwrap());
            }
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    (times[9] + times[10]) / 2.0
}

fn separation_scaling() -> Outcome {
    let base = median_separation_time(400, 400, 10, 6);
    let more_clients = median_separation_time(800, 400, 10, 6);
    let more_sites = median_separation_time(400, 800, 20, 6);
    let (a, b) = (more_clients / base, more_sites / base);
    check(a <= 2.5 && b <= 2.5, format!("2x clients: {a:.2}x, 2x sites: {b:.2}x"))
}

fn formulation_sizes() -> Outcome {
    let mut r = rng(7);
    for t in 0..5 {
        let n = r.gen_range(5..=25);
        let p = r.gen_range(1..n);
        let inst = random_instance(&mut r, n, p, 1, 30, t % 2 == 1);
        let prep = Preprocessed::new(&inst);
        let k = prep.k_total();
        let expected = [
            (Formulation::F1, n + n * n, 1 + n * (1 + n)),
            (Formulation::F2, n + k, 1 + k),
            (Formulation::F3, n + k, 1 + k),
            (Formulation::F4, n + n, 1 + k),
        ];
        for (f, vars, rows) in expected {
            let got = lp_counts(&export_lp(&inst, &prep, f).unwrap());
            if got != (vars, rows) {
                return Outcome::Fail(format!("{f} on n={n}: {got:?}, expected {:?}", (vars, rows)));
            }
        }
    }
    Outcome::Pass("5 instances, 4 formulations".into())
}

fn tsplib_rounding() -> Outcome {
    let text = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 1\n3 2 3\nEOF\n";
    let inst = match parse_tsplib(text, 1) {
        Ok(inst) => inst,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let (a, b) = (inst.d(0, 1), inst.d(0, 2));
    let direct = (floor_euclid((0.0, 0.0), (1.0, 1.0)), floor_euclid((0.0, 0.0), (2.0, 3.0)));
    check((a, b) == (1, 3) && direct == (1, 3), format!("d = {a}, {b}"))
}

fn medium_tsp() -> Outcome {
    let text = match read_data("rl1304.tsp") {
        Ok(t) => t,
        Err(e) => return Outcome::NoData(format!("missing {e} in {}", data_dir().display())),
    };
    let inst = match parse_tsplib(&text, 500) {
        Ok(inst) => inst,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let params = Params {
        time_limit: Some(3600.0),
        ..Params::default()
    };
    match solve(&inst, &params) {
        Ok(r) => check(
            r.status == SolveStatus::Optimal && r.value == 97024 && r.ttot <= 3600.0,
            format!("{} {:?} in {:.1}s", r.value, r.status, r.ttot),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("OR-Library optima", orlib_optima),
        ("root bound", root_bound),
        ("closed-form subproblems", closed_form_fuzz),
        ("cut validity", cut_validity),
        ("separation scaling", separation_scaling),
        ("formulation sizes", formulation_sizes),
        ("TSPLIB rounding", tsplib_rounding),
        ("rl1304 smoke test", medium_tsp),
    ];
    let mut hard_failures = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {} {name}: {d} [{secs:.1}s]", idx + 1),
            Outcome::Fail(d) => {
                hard_failures += 1;
                println!("FAIL {} {name}: {d} [{secs:.1}s]", idx + 1);
            }
            Outcome::NoData(d) => println!("FAIL {} {name}: benchmark data unavailable ({d}) [{secs:.1}s]", idx + 1),
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
