//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cellm2m::access::{contend, pick_opportunity, Outcome};
use cellm2m::cell::{RunOutput, RunParams, SimMode};
use cellm2m::engine::derive_stream;
use cellm2m::lte::Bandwidth;
use cellm2m::runner::{population_for, results_csv, run_scenario, simulate_cell, sweep_points, PointResult, RunMode};
use cellm2m::scenario::{ModeSelection, RadioTech, Scenario};
use cellm2m::traffic::{
    build_population, esm_bit_rate, esm_report_size, validate_daily_volume, Direction, EsmFrameSpec,
    ReportingInterval,
};
use rand::Rng;

// Tolerances and budgets, fixed here rather than derived from results.
const TRAFFIC_TOL_DEFAULT: f64 = 0.10;
const TRAFFIC_TOL_REDUCED: f64 = 0.05;
const TRAFFIC_DAYS: u32 = 30;
const TRAFFIC_BUDGET: Duration = Duration::from_secs(10);
const ESM_BYTES: u64 = 3848;
const ESM_KBPS: f64 = 30.8;
const BASELINE_OUTAGE_MAX: f64 = 0.01;
const BASELINE_CI_MAX: f64 = 0.005;
const BASELINE_REPLICATIONS: usize = 10;
const BASELINE_BUDGET: Duration = Duration::from_secs(120);
const RI_SWEEP_HORIZON: f64 = 1800.0;
const RI_SWEEP_REPLICATIONS: usize = 10;
const RI_300_MAX: f64 = 0.10;
const RI_15_MIN: f64 = 0.50;
const RI_BUDGET: Duration = Duration::from_secs(300);
const OUTAGE_THRESHOLD: f64 = 0.10;
const ESM_REPLICATIONS: usize = 5;
const ESM_HORIZON: f64 = 600.0;
const GPRS_ESM_BUDGET: Duration = Duration::from_secs(300);
const LTE_BUDGET: Duration = Duration::from_secs(900);
const LTE_3848_RANGE: (f64, f64) = (1.0, 4.0);
const LTE_400_RANGE: (f64, f64) = (15.0, 25.0);
const WIDE_BAND_PENETRATION: f64 = 30.0;
const GAP_MIN: f64 = 0.10;
const BINS_TRIALS: usize = 10_000;
const BINS_OPPORTUNITIES: u32 = 54;
const BINS_TOL: f64 = 0.02;
const INVARIANT_BUDGET: Duration = Duration::from_secs(60);

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

/// `spent` is simulation time computed ahead of the check and shared with
/// other criteria.
fn criterion(
    id: u32,
    name: &'static str,
    budget: Duration,
    spent: Duration,
    body: impl FnOnce() -> (bool, String),
) -> Verdict {
    let start = Instant::now();
    let (ok, mut detail) = body();
    let elapsed = start.elapsed() + spent;
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str(&format!("; over time budget {budget:?}"));
    }
    let v = Verdict { id, name, pass: ok && in_time, detail, elapsed };
    println!(
        "{} criterion {}: {} ({:.1} s): {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.name,
        v.elapsed.as_secs_f64(),
        v.detail
    );
    v
}

fn scenario(tech: RadioTech) -> Scenario {
    Scenario {
        technology: tech,
        mode: ModeSelection::Both,
        ..Scenario::default()
    }
}

fn arp(results: &[PointResult]) -> impl Iterator<Item = &PointResult> {
    results.iter().filter(|r| r.mode == RunMode::ArpD)
}

fn find(results: &[PointResult], mode: RunMode, pen: f64, rs: u32) -> &PointResult {
    results
        .iter()
        .find(|r| r.mode == mode && r.point.esm_penetration == pen && r.point.rs == Some(rs))
        .expect("sweep point present")
}

/// Largest swept penetration whose ARP+D outage is below the threshold.
fn largest_supported(results: &[PointResult], rs: u32) -> Option<f64> {
    arp(results)
        .filter(|r| r.point.rs == Some(rs) && r.mean().is_some_and(|m| m < OUTAGE_THRESHOLD))
        .map(|r| r.point.esm_penetration)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
}

fn c1_traffic() -> (bool, String) {
    let cases = [
        (ReportingInterval::Default, 13_400.0, TRAFFIC_TOL_DEFAULT),
        (ReportingInterval::Reduced(300), 97_000.0, TRAFFIC_TOL_REDUCED),
        (ReportingInterval::Reduced(60), 477_000.0, TRAFFIC_TOL_REDUCED),
        (ReportingInterval::Reduced(30), 952_000.0, TRAFFIC_TOL_REDUCED),
        (ReportingInterval::Reduced(15), 1_900_000.0, TRAFFIC_TOL_REDUCED),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (ri, published, tol) in cases {
        let mut rng = derive_stream(7, 0);
        let pop = build_population(4500, 0.0, None, ri, &mut rng).unwrap();
        let lines = validate_daily_volume(&pop, ri, TRAFFIC_DAYS, 7).unwrap();
        let total = lines
            .iter()
            .find(|l| l.use_case == "total" && l.direction == Direction::Uplink)
            .unwrap()
            .model;
        let rel = (total - published).abs() / published;
        ok &= rel <= tol;
        parts.push(format!("{}: {:.0} vs {:.0} ({:+.1}%)", ri.label(), total, published, 100.0 * (total - published) / published));
    }
    (ok, parts.join(", "))
}

fn c2_esm_size() -> (bool, String) {
    let size = esm_report_size(&EsmFrameSpec::default());
    let kbps = esm_bit_rate(size as u32) / 1000.0;
    let ok = size == ESM_BYTES && (kbps * 10.0).round() / 10.0 == ESM_KBPS;
    (ok, format!("{size} B, {kbps:.3} kbit/s"))
}

fn c3_baseline() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for tech in [RadioTech::Gprs, RadioTech::Lte] {
        let s = Scenario {
            mode: ModeSelection::ArpD,
            replications: BASELINE_REPLICATIONS,
            ..scenario(tech)
        };
        let r = run_scenario(&s).unwrap();
        let est = r[0].estimate.unwrap();
        let ci = est.ci95_halfwidth.unwrap();
        ok &= est.mean < BASELINE_OUTAGE_MAX && ci < BASELINE_CI_MAX;
        parts.push(format!("{tech} outage {:.5} ± {:.5} over {} reports", est.mean, ci, est.n_reports));
    }
    (ok, parts.join(", "))
}

fn c4_ri_frontier() -> (bool, String) {
    let ris = [
        ReportingInterval::Default,
        ReportingInterval::Reduced(300),
        ReportingInterval::Reduced(60),
        ReportingInterval::Reduced(30),
        ReportingInterval::Reduced(15),
    ];
    let s = Scenario {
        ri: ris.to_vec(),
        mode: ModeSelection::ArpD,
        horizon: Some(RI_SWEEP_HORIZON),
        replications: RI_SWEEP_REPLICATIONS,
        ..scenario(RadioTech::Gprs)
    };
    let r = run_scenario(&s).unwrap();
    let means: Vec<f64> = r.iter().map(|p| p.mean().unwrap()).collect();
    let strictly_increasing = means.windows(2).all(|w| w[0] < w[1]);
    let ok = strictly_increasing && means[1] < RI_300_MAX && means[4] > RI_15_MIN;
    let detail = ris
        .iter()
        .zip(&means)
        .map(|(ri, m)| format!("{}: {m:.4}", ri.label()))
        .collect::<Vec<_>>()
        .join(" < ");
    let note = if strictly_increasing { "" } else { " (ordering not strict)" };
    (ok, format!("{detail}{note}"))
}

fn esm_sweep(tech: RadioTech, bandwidth: Bandwidth, points: &[f64], rs: &[u32]) -> Vec<PointResult> {
    let mut s = Scenario {
        esm_penetration: points.to_vec(),
        rs: rs.to_vec(),
        horizon: Some(ESM_HORIZON),
        replications: ESM_REPLICATIONS,
        ..scenario(tech)
    };
    s.lte.bandwidth = bandwidth;
    run_scenario(&s).unwrap()
}

fn c5_gprs_esm(results: &[PointResult]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for rs in [3848, 400, 115] {
        let p = find(results, RunMode::ArpD, 1.0, rs);
        let m = p.mean().unwrap();
        ok &= m > OUTAGE_THRESHOLD;
        parts.push(format!("RS {rs}: {m:.3}"));
    }
    (ok, format!("outage at 1% penetration, {}", parts.join(", ")))
}

fn c6_lte_esm(large: &[PointResult], medium: &[PointResult], wide: &[PointResult]) -> (bool, String) {
    let l3848 = largest_supported(large, 3848);
    let l400 = largest_supported(medium, 400);
    let in_range = |v: Option<f64>, (lo, hi): (f64, f64)| v.is_some_and(|v| (lo..=hi).contains(&v));
    let w = find(wide, RunMode::ArpD, WIDE_BAND_PENETRATION, 3848);
    let wm = w.mean().unwrap();
    let wd = find(wide, RunMode::DOnly, WIDE_BAND_PENETRATION, 3848).mean().unwrap();
    let ok = in_range(l3848, LTE_3848_RANGE) && in_range(l400, LTE_400_RANGE) && wm < OUTAGE_THRESHOLD;
    (
        ok,
        format!(
            "1.4 MHz RS 3848 supports {:?}%, RS 400 supports {:?}%, 10 MHz RS 3848 at 30%: outage {wm:.3} (data-only {wd:.3})",
            l3848, l400
        ),
    )
}

fn c7_gap(all: &[&[PointResult]], narrow_115: &[PointResult]) -> (bool, String) {
    let mut violations = Vec::new();
    let mut checked = 0;
    for results in all {
        for a in arp(results) {
            let d = results
                .iter()
                .find(|r| r.mode == RunMode::DOnly && r.scenario_id == a.scenario_id)
                .unwrap();
            checked += 1;
            let (am, dm) = (a.mean().unwrap(), d.mean().unwrap());
            if am < dm - a.ci95() - d.ci95() {
                violations.push(format!("pen {} rs {:?}: {am:.3} < {dm:.3}", a.point.esm_penetration, a.point.rs));
            }
        }
    }
    let top = narrow_115
        .iter()
        .filter(|r| r.mode == RunMode::ArpD)
        .map(|r| r.point.esm_penetration)
        .fold(0.0, f64::max);
    let a = find(narrow_115, RunMode::ArpD, top, 115).mean().unwrap();
    let d = find(narrow_115, RunMode::DOnly, top, 115).mean().unwrap();
    let ok = violations.is_empty() && a - d > GAP_MIN;
    (
        ok,
        format!(
            "{checked} points checked, {} ordering violations{}; RS 115 at {top}%: ARP+D {a:.3} vs D {d:.3}",
            violations.len(),
            if violations.is_empty() { String::new() } else { format!(" [{}]", violations.join("; ")) }
        ),
    )
}

fn max_in_window(times: &[f64], width: f64) -> usize {
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= width - 1e-12 {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

fn traced(s: &Scenario, pen: f64, rs: u32, ri: ReportingInterval, horizon: f64, seed: u64) -> RunOutput {
    let point = sweep_points(&Scenario {
        esm_penetration: vec![pen],
        rs: vec![rs],
        ri: vec![ri],
        ..s.clone()
    })[0];
    let pop = population_for(s, &point, seed).unwrap();
    let params = RunParams { horizon, seed, mode: SimMode::AccessAndData, trace: true };
    simulate_cell(s, &pop, &params).unwrap()
}

fn c8_invariants() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();

    let gprs = scenario(RadioTech::Gprs);
    let lte = scenario(RadioTech::Lte);
    let runs = [
        ("gprs", &gprs, traced(&gprs, 0.0, 3848, ReportingInterval::Reduced(60), 300.0, 3)),
        ("lte", &lte, traced(&lte, 25.0, 400, ReportingInterval::Default, 30.0, 3)),
    ];
    for (name, s, out) in &runs {
        let conserved = out.records.len() as u64 == out.reports_created
            && out.records.iter().all(|r| r.outcome != Outcome::Pending);
        let t = out.trace.as_ref().unwrap();
        let (budget, limit, tick_bits) = match s.technology {
            RadioTech::Gprs => (
                s.gprs.agch_rate as usize,
                s.gprs.n_pdch as usize * s.gprs.usf_per_pdch as usize,
                u64::from(s.gprs.n_pdch) * s.gprs.bits_per_block(),
            ),
            RadioTech::Lte => (s.lte.rar_grant_budget as usize, s.lte.identifier_limit, s.lte.tbs_per_tti()),
        };
        let per_second = max_in_window(&t.grant_times, 1.0);
        let mut grants_ok = per_second <= budget;
        if s.technology == RadioTech::Lte {
            grants_ok &= max_in_window(&t.grant_times, s.lte.prach_period) <= 15;
        }
        let ids_ok = t.max_active_identifiers <= limit;
        let bits_ok = t.max_bits_per_tick <= tick_bits;
        let usf_ok = s.technology == RadioTech::Lte || t.max_transfers_per_channel <= s.gprs.usf_per_pdch as usize;
        ok &= conserved && grants_ok && ids_ok && bits_ok && usf_ok && t.grant_times.len() > 100;
        parts.push(format!(
            "{name}: {} reports conserved={conserved}, peak grants/s {per_second}/{budget}, peak identifiers {}/{limit}, peak bits/tick {}/{tick_bits}",
            out.reports_created, t.max_active_identifiers, t.max_bits_per_tick
        ));
    }

    let cell = cellm2m::lte::lte_cell(&cellm2m::lte::LteConfig { p_control_error: 0.0, ..Default::default() }).unwrap();
    assert_eq!(cell.opportunities_per_slot, BINS_OPPORTUNITIES);
    let mut pick_rng = derive_stream(9, 1);
    let mut ctrl_rng = derive_stream(9, 2);
    let mut oracle_rng = derive_stream(9, 3);
    let (mut model, mut brute) = (0usize, 0usize);
    let n = BINS_OPPORTUNITIES as usize;
    for _ in 0..BINS_TRIALS {
        let choices: Vec<u32> = (0..n).map(|_| pick_opportunity(&cell, &mut pick_rng)).collect();
        model += contend(&cell, &choices, &mut ctrl_rng)
            .iter()
            .filter(|o| **o == cellm2m::access::ContentionOutcome::SingletonSuccess)
            .count();
        let mut bins = vec![0u32; n];
        for _ in 0..n {
            bins[oracle_rng.gen_range(0..n)] += 1;
        }
        brute += bins.iter().filter(|&&b| b == 1).count();
    }
    let analytic = n as f64 * ((n - 1) as f64 / n as f64).powi(n as i32 - 1);
    let (model, brute) = (model as f64 / BINS_TRIALS as f64, brute as f64 / BINS_TRIALS as f64);
    let bins_ok = (model - analytic).abs() / analytic < BINS_TOL && (model - brute).abs() / brute < BINS_TOL;
    ok &= bins_ok;
    parts.push(format!("singletons {model:.2} vs brute force {brute:.2} vs analytic {analytic:.2}"));

    let det = Scenario {
        esm_penetration: vec![5.0],
        rs: vec![400],
        horizon: Some(20.0),
        replications: 2,
        ..lte.clone()
    };
    let a = results_csv(&det, &run_scenario(&det).unwrap());
    let b = results_csv(&det, &run_scenario(&det).unwrap());
    ok &= a == b;
    parts.push(format!("repeat run identical={}", a == b));
    (ok, parts.join("; "))
}

fn main() -> ExitCode {
    let mut verdicts = vec![
        criterion(1, "traffic volumes", TRAFFIC_BUDGET, Duration::ZERO, c1_traffic),
        criterion(2, "eSM report size", Duration::from_secs(1), Duration::ZERO, c2_esm_size),
        criterion(3, "baseline SM support", BASELINE_BUDGET, Duration::ZERO, c3_baseline),
        criterion(4, "GPRS reporting-interval frontier", RI_BUDGET, Duration::ZERO, c4_ri_frontier),
    ];

    let start = Instant::now();
    let gprs_esm = esm_sweep(RadioTech::Gprs, Bandwidth::Mhz1_4, &[1.0, 2.0, 5.0], &[3848, 400, 115]);
    let gprs_time = start.elapsed();
    verdicts.push(criterion(5, "eSM on GPRS", GPRS_ESM_BUDGET, gprs_time, || c5_gprs_esm(&gprs_esm)));

    let start = Instant::now();
    let large = esm_sweep(RadioTech::Lte, Bandwidth::Mhz1_4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0], &[3848]);
    let medium = esm_sweep(RadioTech::Lte, Bandwidth::Mhz1_4, &[5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0], &[400]);
    let wide = esm_sweep(RadioTech::Lte, Bandwidth::Mhz10, &[10.0, 20.0, 25.0, WIDE_BAND_PENETRATION], &[3848]);
    let small = esm_sweep(RadioTech::Lte, Bandwidth::Mhz1_4, &[10.0, 20.0, 30.0, 40.0, 50.0, 60.0], &[115]);
    let lte_time = start.elapsed();
    verdicts.push(criterion(6, "eSM on LTE", LTE_BUDGET, lte_time, || c6_lte_esm(&large, &medium, &wide)));
    verdicts.push(criterion(7, "ARP+D versus D gap", LTE_BUDGET, lte_time, || {
        c7_gap(&[&gprs_esm, &large, &medium, &wide, &small], &small)
    }));
    verdicts.push(criterion(8, "protocol invariants", INVARIANT_BUDGET, Duration::ZERO, c8_invariants));

    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {} of {} criteria passed (LTE sweeps {:.1} s, GPRS eSM sweep {:.1} s)",
        verdicts.len() - failed.len(),
        verdicts.len(),
        lte_time.as_secs_f64(),
        gprs_time.as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
