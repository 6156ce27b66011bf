//! Outage and reliability estimates over replications.

use num_traits::Float;

use crate::access::{Outcome, Report};
use crate::traffic::UseCase;

/// Terminal state of one report, kept after the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRecord {
    pub owner: u32,
    pub use_case: UseCase,
    pub created_at: f64,
    pub outcome: Outcome,
}

impl From<&Report> for ReportRecord {
    fn from(r: &Report) -> Self {
        Self {
            owner: r.owner,
            use_case: r.use_case,
            created_at: r.created_at,
            outcome: r.outcome,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub total: usize,
    pub delivered: usize,
    pub failed_deadline: usize,
    pub failed_retries: usize,
}

impl OutcomeCounts {
    pub fn failed(&self) -> usize {
        self.failed_deadline + self.failed_retries
    }

    pub fn add(&mut self, outcome: Outcome) {
        self.total += 1;
        match outcome {
            Outcome::Delivered { .. } => self.delivered += 1,
            Outcome::FailedDeadline => self.failed_deadline += 1,
            Outcome::FailedMaxRetries => self.failed_retries += 1,
            Outcome::Pending => {}
        }
    }
}

/// Counts reports created in `[warmup, horizon)`.
pub fn count_window(records: &[ReportRecord], warmup: f64, horizon: f64) -> OutcomeCounts {
    let mut counts = OutcomeCounts::default();
    for r in records
        .iter()
        .filter(|r| r.created_at >= warmup && r.created_at < horizon)
    {
        counts.add(r.outcome);
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate<T> {
    pub mean: T,
    /// Normal-approximation 95% half-width; absent below two replications.
    pub ci95_halfwidth: Option<T>,
    pub n_reports: usize,
    pub n_replications: usize,
}

/// Outage of one replication: failed / total over reports created in the
/// measurement window. `None` when the window holds no report.
pub fn outage(records: &[ReportRecord], warmup: f64, horizon: f64) -> Option<OutageEstimate<f64>> {
    assert!(horizon > warmup, "horizon must exceed warm-up");
    let counts = count_window(records, warmup, horizon);
    from_counts(&counts)
}

pub fn from_counts(counts: &OutcomeCounts) -> Option<OutageEstimate<f64>> {
    (counts.total > 0).then(|| OutageEstimate {
        mean: counts.failed() as f64 / counts.total as f64,
        ci95_halfwidth: None,
        n_reports: counts.total,
        n_replications: 1,
    })
}

const Z95: f64 = 1.959_963_984_540_054;

/// Mean and 95% CI over replication means.
pub fn aggregate<T: Float>(replications: &[OutageEstimate<T>]) -> Option<OutageEstimate<T>> {
    let n = replications.len();
    if n == 0 {
        return None;
    }
    let nf = T::from(n).unwrap();
    let mean = replications.iter().fold(T::zero(), |acc, r| acc + r.mean) / nf;
    let ci95_halfwidth = (n >= 2).then(|| {
        let ss = replications
            .iter()
            .fold(T::zero(), |acc, r| acc + (r.mean - mean) * (r.mean - mean));
        let sd = (ss / (nf - T::one())).sqrt();
        T::from(Z95).unwrap() * sd / nf.sqrt()
    });
    Some(OutageEstimate {
        mean,
        ci95_halfwidth,
        n_reports: replications.iter().map(|r| r.n_reports).sum(),
        n_replications: n,
    })
}

/// Outage over the union of replications: report-weighted mean.
pub fn pooled<T: Float>(replications: &[OutageEstimate<T>]) -> Option<T> {
    let total: usize = replications.iter().map(|r| r.n_reports).sum();
    if total == 0 {
        return None;
    }
    let failed = replications
        .iter()
        .fold(T::zero(), |acc, r| acc + r.mean * T::from(r.n_reports).unwrap());
    Some(failed / T::from(total).unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UseCaseReliability {
    pub use_case: UseCase,
    pub delivered: usize,
    pub total: usize,
    pub target: f64,
}

impl UseCaseReliability {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.delivered as f64 / self.total as f64
        }
    }

    pub fn passes(&self) -> bool {
        self.ratio() >= self.target
    }
}

/// Delivery ratio per use case, in [`UseCase::ALL`] order, skipping use cases
/// without reports.
pub fn reliability_by_usecase(records: &[ReportRecord]) -> Vec<UseCaseReliability> {
    let mut counts = [OutcomeCounts::default(); UseCase::ALL.len()];
    for r in records {
        counts[r.use_case as usize].add(r.outcome);
    }
    UseCase::ALL
        .iter()
        .zip(counts.iter())
        .filter(|(_, c)| c.total > 0)
        .map(|(&use_case, c)| UseCaseReliability {
            use_case,
            delivered: c.delivered,
            total: c.total,
            target: use_case.reliability_target(),
        })
        .collect()
}
