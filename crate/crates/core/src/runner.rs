//! Sweep execution: one work item per (sweep point, mode, replication),
//! run on a rayon pool and written back in a fixed order.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::capacity::{d_only_outage, offered_load, LoadSummary};
use crate::cell::{RunOutput, RunParams, SimMode};
use crate::engine::{derive_stream, CELL_STREAM_BASE};
use crate::error::SimError;
use crate::gprs::{gprs_cell, simulate_gprs};
use crate::lte::{lte_cell, simulate_lte};
use crate::metrics::{aggregate, count_window, from_counts, OutageEstimate, OutcomeCounts};
use crate::scenario::{DOnlyMethod, ModeSelection, RadioTech, Scenario};
use crate::traffic::{
    build_population, validate_daily_volume, DeviceClass, DevicePopulation, ReportingInterval,
    VolumeLine,
};

/// Stream that places eSMs and draws periodic phases.
const POPULATION_STREAM: u64 = CELL_STREAM_BASE + 2;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CELLM2M_THREADS";

pub const RESULTS_HEADER: &str = "scenario_id,technology,bandwidth_hz,n_sm,ri_s,esm_penetration_pct,rs_bytes,mode,replication,seed,outage,ci95,reports_total,reports_failed_deadline,reports_failed_retries";
pub const VALIDATION_HEADER: &str =
    "use_case,direction,bytes_per_meter_per_day_model,bytes_per_meter_per_day_paper,relative_error";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n_sm: usize,
    pub ri: ReportingInterval,
    pub esm_penetration: f64,
    /// Report size of the eSMs; `None` when the point has none.
    pub rs: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RunMode {
    ArpD,
    DOnly,
}

impl RunMode {
    pub fn label(self) -> &'static str {
        match self {
            RunMode::ArpD => "ARP+D",
            RunMode::DOnly => "D",
        }
    }
}

impl ModeSelection {
    pub fn modes(self) -> &'static [RunMode] {
        match self {
            ModeSelection::ArpD => &[RunMode::ArpD],
            ModeSelection::DOnly => &[RunMode::DOnly],
            ModeSelection::Both => &[RunMode::ArpD, RunMode::DOnly],
        }
    }
}

/// Sweep points in cartesian order n_sm × ri × penetration × rs. A point
/// without eSMs is not repeated per report size.
pub fn sweep_points(s: &Scenario) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &n_sm in &s.n_sm {
        for &ri in &s.ri {
            for &esm_penetration in &s.esm_penetration {
                if esm_penetration > 0.0 {
                    for &rs in &s.rs {
                        points.push(SweepPoint { n_sm, ri, esm_penetration, rs: Some(rs) });
                    }
                } else {
                    points.push(SweepPoint { n_sm, ri, esm_penetration, rs: None });
                }
            }
        }
    }
    points
}

/// Devices of one replication of `point`.
pub fn population_for(s: &Scenario, point: &SweepPoint, seed: u64) -> Result<DevicePopulation, SimError> {
    let mut rng = derive_stream(seed, POPULATION_STREAM);
    let mut pop = build_population(point.n_sm, point.esm_penetration, point.rs, point.ri, &mut rng)?;
    if !s.sm_background && pop.n_esm > 0 {
        pop.devices.retain(|d| d.class == DeviceClass::Esm);
        pop.n_residential = 0;
        pop.n_ci = 0;
    }
    Ok(pop)
}

pub fn raw_capacity(s: &Scenario) -> f64 {
    match s.technology {
        RadioTech::Gprs => s.gprs.raw_capacity(),
        RadioTech::Lte => s.lte.raw_capacity(),
    }
}

/// Simulates `population` on the scenario's cell.
pub fn simulate_cell(s: &Scenario, population: &DevicePopulation, params: &RunParams) -> Result<RunOutput, SimError> {
    match s.technology {
        RadioTech::Gprs => simulate_gprs(&s.gprs, population, params),
        RadioTech::Lte => simulate_lte(&s.lte, population, params),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    /// Absent when the measurement window held no report.
    pub outage: Option<f64>,
    pub counts: OutcomeCounts,
}

/// One replication of `point` in `mode`, seeded with `seed`.
pub fn run_replication(
    s: &Scenario,
    point: &SweepPoint,
    mode: RunMode,
    replication: usize,
    seed: u64,
) -> Result<ReplicationResult, SimError> {
    let population = population_for(s, point, seed)?;
    if mode == RunMode::DOnly && s.d_only == DOnlyMethod::AnalyticDeficit {
        let load = LoadSummary::new(offered_load(&population), raw_capacity(s))
            .ok_or_else(|| SimError::Cell("negative load or capacity".into()))?;
        return Ok(ReplicationResult {
            replication,
            seed,
            outage: Some(d_only_outage(&load)),
            counts: OutcomeCounts::default(),
        });
    }
    let params = RunParams {
        horizon: s.horizon(),
        seed,
        mode: match mode {
            RunMode::ArpD => SimMode::AccessAndData,
            RunMode::DOnly => SimMode::DataOnly,
        },
        trace: false,
    };
    let out = simulate_cell(s, &population, &params)?;
    let counts = count_window(&out.records, s.warmup(), s.horizon());
    Ok(ReplicationResult {
        replication,
        seed,
        outage: from_counts(&counts).map(|e| e.mean),
        counts,
    })
}

/// All replications of one point and mode, with their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub scenario_id: usize,
    pub point: SweepPoint,
    pub mode: RunMode,
    pub replications: Vec<ReplicationResult>,
    pub estimate: Option<OutageEstimate<f64>>,
}

impl PointResult {
    pub fn mean(&self) -> Option<f64> {
        self.estimate.map(|e| e.mean)
    }

    pub fn ci95(&self) -> f64 {
        self.estimate.and_then(|e| e.ci95_halfwidth).unwrap_or(0.0)
    }
}

fn summarize(scenario_id: usize, point: SweepPoint, mode: RunMode, mut reps: Vec<ReplicationResult>) -> PointResult {
    reps.sort_by_key(|r| r.replication);
    let per_rep: Vec<OutageEstimate<f64>> = reps
        .iter()
        .filter_map(|r| {
            r.outage.map(|mean| OutageEstimate {
                mean,
                ci95_halfwidth: None,
                n_reports: r.counts.total,
                n_replications: 1,
            })
        })
        .collect();
    PointResult {
        scenario_id,
        point,
        mode,
        estimate: aggregate(&per_rep),
        replications: reps,
    }
}

/// Worker pool honoring [`THREADS_ENV`].
pub fn thread_pool() -> Result<rayon::ThreadPool, SimError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| SimError::Cell(format!("cannot start worker pool: {e}")))
}

/// Runs every (point, mode, replication) of the scenario. Results are
/// ordered by scenario id, then mode, then replication.
pub fn run_scenario(s: &Scenario) -> Result<Vec<PointResult>, SimError> {
    match s.technology {
        RadioTech::Gprs => gprs_cell(&s.gprs)?,
        RadioTech::Lte => lte_cell(&s.lte)?,
    };
    let points = sweep_points(s);
    let mut items = Vec::new();
    for (id, point) in points.iter().enumerate() {
        for &mode in s.mode.modes() {
            for r in 0..s.replications {
                items.push((id, *point, mode, r));
            }
        }
    }
    let pool = thread_pool()?;
    let results: Vec<_> = pool.install(|| {
        items
            .par_iter()
            .map(|&(id, point, mode, r)| {
                let seed = s.seed.wrapping_add(r as u64);
                run_replication(s, &point, mode, r, seed).map(|res| (id, mode, res))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut grouped: Vec<PointResult> = Vec::new();
    for (id, point) in points.iter().enumerate() {
        for &mode in s.mode.modes() {
            let reps = results
                .iter()
                .filter(|(i, m, _)| *i == id && *m == mode)
                .map(|(_, _, r)| r.clone())
                .collect();
            grouped.push(summarize(id, *point, mode, reps));
        }
    }
    Ok(grouped)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

/// CSV text of `results`, one row per replication.
pub fn results_csv(s: &Scenario, results: &[PointResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for p in results {
        let ri = match p.point.ri {
            ReportingInterval::Default => "default".to_owned(),
            ReportingInterval::Reduced(v) => v.to_string(),
        };
        let rs = p.point.rs.map(|v| v.to_string()).unwrap_or_default();
        let ci = p
            .estimate
            .and_then(|e| e.ci95_halfwidth)
            .map(fmt_f64)
            .unwrap_or_default();
        for r in &p.replications {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.scenario_id,
                s.technology,
                s.bandwidth_hz(),
                p.point.n_sm,
                ri,
                p.point.esm_penetration,
                rs,
                p.mode.label(),
                r.replication,
                r.seed,
                r.outage.map(fmt_f64).unwrap_or_default(),
                ci,
                r.counts.total,
                r.counts.failed_deadline,
                r.counts.failed_retries,
            );
        }
    }
    out
}

/// Traffic table for every reporting interval of the scenario, generated
/// from `n_sm[0]` meters.
pub fn traffic_validation(s: &Scenario) -> Result<Vec<(ReportingInterval, Vec<VolumeLine>)>, SimError> {
    let n_sm = s.n_sm[0];
    s.ri.iter()
        .map(|&ri| {
            let point = SweepPoint { n_sm, ri, esm_penetration: 0.0, rs: None };
            let pop = population_for(s, &point, s.seed)?;
            validate_daily_volume(&pop, ri, s.validation_days, s.seed).map(|lines| (ri, lines))
        })
        .collect()
}

pub fn validation_csv(tables: &[(ReportingInterval, Vec<VolumeLine>)]) -> String {
    let multi = tables.len() > 1;
    let mut out = String::from(VALIDATION_HEADER);
    out.push('\n');
    for (ri, lines) in tables {
        for l in lines {
            let name = if multi {
                format!("{}@ri={}", l.use_case, ri.label())
            } else {
                l.use_case.clone()
            };
            let rel = l.relative_error();
            let rel = if rel.is_finite() { fmt_f64(rel) } else { String::new() };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                name,
                l.direction.name(),
                fmt_f64(l.model),
                fmt_f64(l.published),
                rel
            );
        }
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    f.flush()
}
