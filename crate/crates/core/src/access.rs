//! Three-stage access reservation: random access, grant, data.
//!
//! A report that finds no connection contends in a random access opportunity
//! (RAO). A request that was alone in its opportunity and decoded correctly
//! enters the grant queue; the cell grants it when grant budget and an uplink
//! identifier are both available. Collisions are not detected by the cell, so
//! a failed device only notices through its grant timeout and then backs off.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::SimError;
use crate::traffic::UseCase;

pub type AttemptId = u64;

const TIME_EPS: f64 = 1e-9;

/// Technology parameterization of the access reservation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModel {
    /// Seconds between consecutive RAO slots.
    pub rao_slot_spacing: f64,
    /// Contention opportunities (preambles) per slot.
    pub opportunities_per_slot: u32,
    /// Grant messages per second.
    pub grant_budget: f64,
    /// Grants are issued in batches at multiples of this period.
    pub grant_window: f64,
    pub grant_queue_capacity: usize,
    /// Longest time a decoded request may wait in the grant queue.
    pub response_window: f64,
    /// Time after contention at which an unanswered device gives up and backs off.
    pub grant_timeout: f64,
    /// Simultaneously active uplink transfers.
    pub identifier_limit: usize,
    pub p_control_error: f64,
    pub p_data_error: f64,
    /// Raw uplink data capacity, bytes per second.
    pub data_capacity: f64,
    pub max_retransmissions: u32,
    pub backoff_window: f64,
}

impl CellModel {
    pub fn rao_rate(&self) -> f64 {
        f64::from(self.opportunities_per_slot) / self.rao_slot_spacing
    }

    pub fn grants_per_window(&self) -> usize {
        (self.grant_budget * self.grant_window + TIME_EPS).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |p: f64| (0.0..1.0).contains(&p);
        let checks = [
            (self.rao_slot_spacing > 0.0, "RAO slot spacing must be positive"),
            (self.opportunities_per_slot > 0, "need at least one opportunity per slot"),
            (self.grant_budget > 0.0, "grant budget must be positive"),
            (self.grant_window > 0.0, "grant window must be positive"),
            (self.grants_per_window() > 0, "grant window too short for the budget"),
            (self.grant_queue_capacity > 0, "grant queue capacity must be positive"),
            (self.response_window > 0.0, "response window must be positive"),
            (self.grant_timeout >= self.response_window, "grant timeout shorter than response window"),
            (self.identifier_limit > 0, "identifier limit must be positive"),
            (prob(self.p_control_error), "control error probability outside [0, 1)"),
            (prob(self.p_data_error), "data error probability outside [0, 1)"),
            (self.data_capacity > 0.0, "data capacity must be positive"),
            (self.backoff_window > 0.0, "backoff window must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(SimError::Cell((*msg).to_owned())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Pending,
    Delivered { at: f64 },
    FailedMaxRetries,
    FailedDeadline,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Pending
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Outcome::FailedMaxRetries | Outcome::FailedDeadline)
    }
}

/// One uplink message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub owner: u32,
    pub use_case: UseCase,
    pub created_at: f64,
    pub size: u32,
    pub deadline_at: f64,
    pub outcome: Outcome,
}

impl Report {
    pub fn new(owner: u32, use_case: UseCase, created_at: f64, size: u32, deadline: f64) -> Self {
        Self {
            owner,
            use_case,
            created_at,
            size,
            deadline_at: created_at + deadline,
            outcome: Outcome::Pending,
        }
    }

    /// Marks the report delivered at `at`. A delivery after the deadline
    /// counts as a deadline failure. Terminal outcomes never change.
    pub fn deliver(&mut self, at: f64) -> Outcome {
        if self.outcome == Outcome::Pending {
            self.outcome = if at <= self.deadline_at {
                Outcome::Delivered { at }
            } else {
                Outcome::FailedDeadline
            };
        }
        self.outcome
    }

    fn fail(&mut self, outcome: Outcome) {
        if self.outcome == Outcome::Pending {
            self.outcome = outcome;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptState {
    Backlogged,
    Contending,
    AwaitingGrant,
    Connected,
    Transmitting,
    Finished,
}

impl AttemptState {
    fn may_enter(self, next: AttemptState) -> bool {
        use AttemptState::*;
        matches!(
            (self, next),
            (Backlogged, Contending)
                | (Contending, AwaitingGrant)
                | (AwaitingGrant, Connected)
                | (Connected, Transmitting)
                | (Contending | AwaitingGrant | Connected, Backlogged)
                | (_, Finished)
        )
    }
}

/// Per-report progress through the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessAttempt {
    pub report: Report,
    pub state: AttemptState,
    pub retries_used: u32,
    /// Time of the latest contention.
    pub contended_at: f64,
    pub holds_identifier: bool,
}

impl AccessAttempt {
    pub fn new(report: Report) -> Self {
        Self {
            report,
            state: AttemptState::Backlogged,
            retries_used: 0,
            contended_at: report.created_at,
            holds_identifier: false,
        }
    }

    pub fn set_state(&mut self, next: AttemptState) {
        debug_assert!(
            self.state.may_enter(next),
            "illegal transition {:?} -> {:?}",
            self.state,
            next
        );
        self.state = next;
    }

    /// Walks the full protocol path without contention (data-only runs).
    pub fn bypass_access(&mut self) {
        self.set_state(AttemptState::Contending);
        self.set_state(AttemptState::AwaitingGrant);
        self.set_state(AttemptState::Connected);
        self.set_state(AttemptState::Transmitting);
    }

    pub fn is_finished(&self) -> bool {
        self.state == AttemptState::Finished
    }

    pub fn finish(&mut self, outcome: Outcome) {
        self.report.fail(outcome);
        self.state = AttemptState::Finished;
    }

    pub fn deliver(&mut self, at: f64) -> Outcome {
        let outcome = self.report.deliver(at);
        self.state = AttemptState::Finished;
        outcome
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentionOutcome {
    SingletonSuccess,
    Collision,
    ControlError,
}

/// Uniform choice of one of the slot's opportunities.
pub fn pick_opportunity<R: Rng + ?Sized>(cell: &CellModel, rng: &mut R) -> u32 {
    rng.gen_range(0..cell.opportunities_per_slot)
}

/// Resolves one RAO slot given each contender's chosen opportunity.
/// `control_rng` draws the decoding errors of singleton requests.
pub fn contend<R: Rng + ?Sized>(
    cell: &CellModel,
    choices: &[u32],
    control_rng: &mut R,
) -> Vec<ContentionOutcome> {
    let mut load = vec![0u32; cell.opportunities_per_slot as usize];
    for &c in choices {
        load[c as usize] += 1;
    }
    choices
        .iter()
        .map(|&c| {
            if load[c as usize] > 1 {
                ContentionOutcome::Collision
            } else if control_rng.gen::<f64>() < cell.p_control_error {
                ContentionOutcome::ControlError
            } else {
                ContentionOutcome::SingletonSuccess
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Queued {
    pub id: AttemptId,
    pub enqueued_at: f64,
}

/// FIFO of decoded access requests waiting for a grant.
#[derive(Debug, Clone, Default)]
pub struct GrantQueue {
    entries: VecDeque<Queued>,
    capacity: usize,
}

impl GrantQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    /// Returns `false` when the queue is full and the request is dropped.
    pub fn push(&mut self, id: AttemptId, now: f64) -> bool {
        if self.entries.len() >= self.capacity {
            return false;
        }
        self.entries.push_back(Queued {
            id,
            enqueued_at: now,
        });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Queued> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrantRound {
    pub granted: Vec<Queued>,
    /// Requests that waited longer than the response window.
    pub expired: Vec<Queued>,
}

/// Serves one grant window of length `window` ending at `now`: at most
/// `grant_budget * window` grants, and only while fewer than
/// `identifier_limit` transfers are active. Entries for which `is_live`
/// returns false (withdrawn attempts) are discarded silently.
pub fn issue_grants(
    cell: &CellModel,
    queue: &mut GrantQueue,
    window: f64,
    now: f64,
    active_transfers: usize,
    mut is_live: impl FnMut(AttemptId) -> bool,
) -> GrantRound {
    let mut round = GrantRound::default();
    let budget = (cell.grant_budget * window + TIME_EPS).floor() as usize;
    let mut available = budget.min(cell.identifier_limit.saturating_sub(active_transfers));

    while let Some(front) = queue.entries.front().copied() {
        if !is_live(front.id) {
            queue.entries.pop_front();
            continue;
        }
        if front.enqueued_at + cell.response_window < now - TIME_EPS {
            queue.entries.pop_front();
            round.expired.push(front);
            continue;
        }
        if available == 0 {
            break;
        }
        queue.entries.pop_front();
        round.granted.push(front);
        available -= 1;
    }
    round
}

/// Delay before the next access try, or `None` when the retry budget is
/// spent (the report is then failed).
pub fn backoff_delay<R: Rng + ?Sized>(
    cell: &CellModel,
    attempt: &mut AccessAttempt,
    rng: &mut R,
) -> Option<f64> {
    if attempt.retries_used >= cell.max_retransmissions {
        attempt.finish(Outcome::FailedMaxRetries);
        return None;
    }
    attempt.retries_used += 1;
    Some(rng.gen::<f64>() * cell.backoff_window)
}

/// Fails `attempt` if its deadline has passed. Returns true on expiry.
pub fn expire_if_due(attempt: &mut AccessAttempt, now: f64) -> bool {
    if attempt.report.outcome == Outcome::Pending && attempt.report.deadline_at <= now {
        attempt.finish(Outcome::FailedDeadline);
        true
    } else {
        false
    }
}

/// Expires every pending attempt whose deadline is `<= now`; returns their
/// indices. Callers withdraw those attempts from their queues.
pub fn expire_deadlines(attempts: &mut [AccessAttempt], now: f64) -> Vec<usize> {
    attempts
        .iter_mut()
        .enumerate()
        .filter_map(|(i, a)| expire_if_due(a, now).then_some(i))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::engine::derive_stream;

    pub(crate) fn toy_cell() -> CellModel {
        CellModel {
            rao_slot_spacing: 0.005,
            opportunities_per_slot: 54,
            grant_budget: 28.0,
            grant_window: 1.0,
            grant_queue_capacity: 1000,
            response_window: 1.0,
            grant_timeout: 1.0,
            identifier_limit: 49,
            p_control_error: 0.0,
            p_data_error: 0.0,
            data_capacity: 1000.0,
            max_retransmissions: 3,
            backoff_window: 1.0,
        }
    }

    fn attempt(deadline: f64) -> AccessAttempt {
        AccessAttempt::new(Report::new(0, UseCase::EsmReport, 0.0, 100, deadline))
    }

    #[test]
    fn lone_request_succeeds() {
        let cell = CellModel {
            opportunities_per_slot: 1,
            ..toy_cell()
        };
        let mut rng = derive_stream(1, 1);
        assert_eq!(contend(&cell, &[0], &mut rng), vec![ContentionOutcome::SingletonSuccess]);
    }

    #[test]
    fn shared_opportunity_collides() {
        let cell = toy_cell();
        let mut rng = derive_stream(1, 1);
        let out = contend(&cell, &[3, 3, 7], &mut rng);
        assert_eq!(
            out,
            vec![
                ContentionOutcome::Collision,
                ContentionOutcome::Collision,
                ContentionOutcome::SingletonSuccess
            ]
        );
    }

    #[test]
    fn control_errors_hit_singletons_only() {
        let cell = CellModel {
            p_control_error: 0.999_999,
            ..toy_cell()
        };
        let mut rng = derive_stream(1, 1);
        let out = contend(&cell, &[1, 2, 2], &mut rng);
        assert_eq!(out[0], ContentionOutcome::ControlError);
        assert_eq!(out[1], ContentionOutcome::Collision);
    }

    #[test]
    fn grant_budget_caps_one_window() {
        let cell = toy_cell();
        let mut q = GrantQueue::new(1000);
        for id in 0..100 {
            q.push(id, 0.0);
        }
        let round = issue_grants(&cell, &mut q, 1.0, 1.0, 0, |_| true);
        assert_eq!(round.granted.len(), 28);
        assert_eq!(round.granted[0].id, 0);
        assert_eq!(q.len(), 72);
    }

    #[test]
    fn identifier_limit_gates_grants() {
        let cell = toy_cell();
        let mut q = GrantQueue::new(1000);
        q.push(1, 0.0);
        let round = issue_grants(&cell, &mut q, 1.0, 0.5, cell.identifier_limit, |_| true);
        assert!(round.granted.is_empty());
        let round = issue_grants(&cell, &mut q, 1.0, 0.5, cell.identifier_limit - 1, |_| true);
        assert_eq!(round.granted.len(), 1);
    }

    #[test]
    fn empty_queue_grants_nothing() {
        let mut q = GrantQueue::new(10);
        assert_eq!(issue_grants(&toy_cell(), &mut q, 1.0, 0.0, 0, |_| true), GrantRound::default());
    }

    #[test]
    fn stale_and_withdrawn_requests_leave_the_queue() {
        let cell = toy_cell();
        let mut q = GrantQueue::new(10);
        q.push(1, 0.0);
        q.push(2, 0.2);
        q.push(3, 1.5);
        let round = issue_grants(&cell, &mut q, 1.0, 1.6, 0, |id| id != 2);
        assert_eq!(round.expired.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(round.granted.iter().map(|e| e.id).collect::<Vec<_>>(), vec![3]);
        assert!(q.is_empty());
    }

    #[test]
    fn full_queue_drops_requests() {
        let mut q = GrantQueue::new(1);
        assert!(q.push(1, 0.0));
        assert!(!q.push(2, 0.0));
    }

    #[test]
    fn backoff_counts_retries_then_fails() {
        let cell = toy_cell();
        let mut rng = derive_stream(2, 2);
        let mut a = attempt(100.0);
        let d = backoff_delay(&cell, &mut a, &mut rng).unwrap();
        assert!((0.0..1.0).contains(&d));
        assert_eq!(a.retries_used, 1);
        backoff_delay(&cell, &mut a, &mut rng).unwrap();
        backoff_delay(&cell, &mut a, &mut rng).unwrap();
        assert_eq!(backoff_delay(&cell, &mut a, &mut rng), None);
        assert_eq!(a.report.outcome, Outcome::FailedMaxRetries);
        assert!(a.is_finished());
        assert!(a.retries_used <= cell.max_retransmissions);
    }

    #[test]
    fn deadline_expiry() {
        let mut attempts = vec![attempt(1.0), attempt(5.0), attempt(1.0)];
        attempts[0].set_state(AttemptState::Contending);
        attempts[2].deliver(0.9);
        let expired = expire_deadlines(&mut attempts, 1.0);
        assert_eq!(expired, vec![0]);
        assert_eq!(attempts[0].report.outcome, Outcome::FailedDeadline);
        assert_eq!(attempts[1].report.outcome, Outcome::Pending);
        assert_eq!(attempts[2].report.outcome, Outcome::Delivered { at: 0.9 });
        assert!(expire_deadlines(&mut attempts, 10.0) == vec![1]);
        assert_eq!(attempts[2].report.outcome, Outcome::Delivered { at: 0.9 });
    }

    #[test]
    fn late_delivery_is_a_deadline_failure() {
        let mut a = attempt(1.0);
        assert_eq!(a.deliver(1.2), Outcome::FailedDeadline);
    }

    #[test]
    fn cell_validation() {
        assert!(toy_cell().validate().is_ok());
        assert!(CellModel { p_data_error: 1.0, ..toy_cell() }.validate().is_err());
        assert!(CellModel { identifier_limit: 0, ..toy_cell() }.validate().is_err());
        assert_eq!(toy_cell().rao_rate(), 54.0 / 0.005);
    }
}
