//! Event-driven run of one cell: traffic arrivals, RAO contention, the grant
//! queue, backoff and deadlines. The technology-specific data phase plugs in
//! through [`Technology`].

use std::collections::{BTreeMap, HashMap};

use crate::access::{
    backoff_delay, contend, expire_if_due, issue_grants, pick_opportunity, AccessAttempt,
    AttemptId, AttemptState, CellModel, ContentionOutcome, GrantQueue, Outcome, Report,
};
use crate::engine::{
    derive_stream, device_access_stream, device_traffic_stream, EventCalendar, RngStream,
    CELL_STREAM_BASE,
};
use crate::error::SimError;
use crate::metrics::ReportRecord;
use crate::traffic::{next_arrival, DevicePopulation};

const CONTROL_STREAM: u64 = CELL_STREAM_BASE;
const DATA_STREAM: u64 = CELL_STREAM_BASE + 1;
const SLOT_EPS: f64 = 1e-9;

/// Which parts of the protocol a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimMode {
    /// Access reservation followed by the data phase.
    AccessAndData,
    /// Reports go straight to the data scheduler: no contention, no grant
    /// budget, no identifier limit.
    DataOnly,
}

#[derive(Debug, Clone)]
pub struct RunParams {
    /// Arrivals are generated in `[0, horizon)`; the run then drains.
    pub horizon: f64,
    pub seed: u64,
    pub mode: SimMode,
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub enum Event<E> {
    Arrival { device: u32, profile: u16 },
    RaoSlot(u64),
    GrantWindow(u64),
    /// The device noticed its access failed and backs off.
    Retry(AttemptId),
    Deadline(AttemptId),
    Tech(E),
}

/// Protocol counters and the raw grant timeline, for invariant checks.
#[derive(Debug, Clone, Default)]
pub struct ProtocolTrace {
    pub grant_times: Vec<f64>,
    pub max_active_identifiers: usize,
    pub rao_slots: u64,
    pub contenders: u64,
    pub singletons: u64,
    pub collisions: u64,
    pub control_errors: u64,
    /// Largest number of bits scheduled in one data tick.
    pub max_bits_per_tick: u64,
    /// Largest number of transfers sharing one data channel.
    pub max_transfers_per_channel: usize,
}

/// State shared between the access procedure and the data phase.
pub struct CellContext<E> {
    pub calendar: EventCalendar<f64, Event<E>>,
    pub cell: CellModel,
    pub attempts: HashMap<AttemptId, AccessAttempt>,
    pub active_identifiers: usize,
    pub control_rng: RngStream,
    pub data_rng: RngStream,
    pub records: Vec<ReportRecord>,
    pub trace: Option<ProtocolTrace>,
    pub mode: SimMode,
}

impl<E> CellContext<E> {
    pub fn schedule(&mut self, at: f64, event: E) {
        self.calendar
            .schedule(at, Event::Tech(event))
            .expect("technology scheduled an event in the past");
    }

    pub fn now(&self) -> f64 {
        self.calendar.now()
    }

    pub fn is_live(&self, id: AttemptId) -> bool {
        self.attempts.get(&id).is_some_and(|a| !a.is_finished())
    }

    pub fn attempt_mut(&mut self, id: AttemptId) -> Option<&mut AccessAttempt> {
        self.attempts.get_mut(&id).filter(|a| !a.is_finished())
    }

    fn release_identifier(&mut self, id: AttemptId) {
        if let Some(a) = self.attempts.get_mut(&id) {
            if a.holds_identifier {
                a.holds_identifier = false;
                self.active_identifiers -= 1;
            }
        }
    }

    /// The access procedure of `id` failed; the device notices at
    /// `detect_at` and then backs off.
    pub fn fail_access(&mut self, id: AttemptId, detect_at: f64) {
        self.release_identifier(id);
        let at = detect_at.max(self.now());
        self.calendar
            .schedule(at, Event::Retry(id))
            .expect("retry time is never in the past");
    }

    /// Last data block of `id` acknowledged at `at`.
    pub fn deliver(&mut self, id: AttemptId, at: f64) {
        self.release_identifier(id);
        if let Some(mut a) = self.attempts.remove(&id) {
            a.deliver(at);
            self.records.push(ReportRecord::from(&a.report));
        }
    }

    pub fn note_tick(&mut self, bits: u64, max_per_channel: usize) {
        if let Some(t) = self.trace.as_mut() {
            t.max_bits_per_tick = t.max_bits_per_tick.max(bits);
            t.max_transfers_per_channel = t.max_transfers_per_channel.max(max_per_channel);
        }
    }

    fn finish(&mut self, id: AttemptId) {
        if let Some(a) = self.attempts.remove(&id) {
            self.records.push(ReportRecord::from(&a.report));
        }
    }
}

/// Data phase and technology-specific handshake of a radio access technology.
pub trait Technology {
    type Event: Clone;

    fn cell(&self) -> &CellModel;

    /// `id` was granted at `now` and holds an uplink identifier.
    fn on_grant(&mut self, ctx: &mut CellContext<Self::Event>, id: AttemptId, now: f64);

    /// Data-only runs: hand the report to the data scheduler directly.
    fn start_transfer(&mut self, ctx: &mut CellContext<Self::Event>, id: AttemptId, now: f64);

    fn on_event(&mut self, ctx: &mut CellContext<Self::Event>, event: Self::Event, now: f64);

    /// `id` expired; drop it from every technology structure.
    fn withdraw(&mut self, ctx: &mut CellContext<Self::Event>, id: AttemptId);
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ReportRecord>,
    /// Reports generated, including warm-up; equals `records.len()`.
    pub reports_created: u64,
    pub trace: Option<ProtocolTrace>,
    pub events: u64,
}

struct Driver<'p, T: Technology> {
    ctx: CellContext<T::Event>,
    tech: T,
    population: &'p DevicePopulation,
    traffic_rngs: Vec<RngStream>,
    access_rngs: Vec<RngStream>,
    rao_buckets: BTreeMap<u64, Vec<AttemptId>>,
    grant_queue: GrantQueue,
    grant_window_pending: bool,
    next_id: AttemptId,
    horizon: f64,
}

/// Simulates one replication of `population` on `tech`.
pub fn simulate<T: Technology>(
    tech: T,
    population: &DevicePopulation,
    params: &RunParams,
) -> Result<RunOutput, SimError> {
    let cell = tech.cell().clone();
    cell.validate()?;
    if !(params.horizon > 0.0) {
        return Err(SimError::Cell("horizon must be positive".into()));
    }
    let n = population.devices.len() as u32;
    let grant_queue = GrantQueue::new(cell.grant_queue_capacity);
    let ctx = CellContext {
        calendar: EventCalendar::new(),
        cell,
        attempts: HashMap::new(),
        active_identifiers: 0,
        control_rng: derive_stream(params.seed, CONTROL_STREAM),
        data_rng: derive_stream(params.seed, DATA_STREAM),
        records: Vec::new(),
        trace: params.trace.then(ProtocolTrace::default),
        mode: params.mode,
    };
    let driver = Driver {
        ctx,
        tech,
        population,
        traffic_rngs: (0..n)
            .map(|d| derive_stream(params.seed, device_traffic_stream(d)))
            .collect(),
        access_rngs: (0..n)
            .map(|d| derive_stream(params.seed, device_access_stream(d)))
            .collect(),
        rao_buckets: BTreeMap::new(),
        grant_queue,
        grant_window_pending: false,
        next_id: 0,
        horizon: params.horizon,
    };
    driver.run()
}

impl<T: Technology> Driver<'_, T> {
    fn run(mut self) -> Result<RunOutput, SimError> {
        for (d, device) in self.population.devices.iter().enumerate() {
            for (p, profile) in device.profiles.iter().enumerate() {
                let rng = &mut self.traffic_rngs[d];
                if let Some(t) = next_arrival(profile, rng, 0.0) {
                    if t < self.horizon {
                        self.ctx.calendar.schedule(
                            t,
                            Event::Arrival {
                                device: d as u32,
                                profile: p as u16,
                            },
                        )?;
                    }
                }
            }
        }

        // Arrivals stop at the horizon; every pending report then either
        // finishes or hits its deadline.
        let longest_deadline = self
            .population
            .devices
            .iter()
            .flat_map(|d| d.profiles.iter().map(|p| p.deadline))
            .fold(0.0, f64::max);
        let drain_end = self.horizon + longest_deadline + 1.0;
        while let Some((now, event)) = self.ctx.calendar.next_until(drain_end) {
            self.dispatch(now, event)?;
        }
        if !self.ctx.attempts.is_empty() {
            return Err(SimError::Unterminated(self.ctx.attempts.len()));
        }
        let events = self.ctx.calendar.executed();
        Ok(RunOutput {
            records: self.ctx.records,
            reports_created: self.next_id,
            trace: self.ctx.trace,
            events,
        })
    }

    fn dispatch(&mut self, now: f64, event: Event<T::Event>) -> Result<(), SimError> {
        match event {
            Event::Arrival { device, profile } => self.on_arrival(now, device, profile)?,
            Event::RaoSlot(slot) => self.on_rao_slot(now, slot)?,
            Event::GrantWindow(k) => self.on_grant_window(now, k)?,
            Event::Retry(id) => self.on_retry(now, id)?,
            Event::Deadline(id) => self.on_deadline(now, id),
            Event::Tech(e) => self.tech.on_event(&mut self.ctx, e, now),
        }
        Ok(())
    }

    fn on_arrival(&mut self, now: f64, device: u32, profile: u16) -> Result<(), SimError> {
        let spec = &self.population.devices[device as usize].profiles[profile as usize];
        let report = Report::new(device, spec.use_case, now, spec.message_size, spec.deadline);
        let id = self.next_id;
        self.next_id += 1;
        self.ctx.attempts.insert(id, AccessAttempt::new(report));
        self.ctx
            .calendar
            .schedule(report.deadline_at, Event::Deadline(id))?;

        match self.ctx.mode {
            SimMode::AccessAndData => self.enter_contention(id, now)?,
            SimMode::DataOnly => {
                if let Some(a) = self.ctx.attempts.get_mut(&id) {
                    a.bypass_access();
                }
                self.tech.start_transfer(&mut self.ctx, id, now);
            }
        }

        let rng = &mut self.traffic_rngs[device as usize];
        if let Some(next) = next_arrival(spec, rng, now) {
            if next < self.horizon {
                self.ctx
                    .calendar
                    .schedule(next, Event::Arrival { device, profile })?;
            }
        }
        Ok(())
    }

    /// Queues `id` for the first RAO slot at or after `at`.
    fn enter_contention(&mut self, id: AttemptId, at: f64) -> Result<(), SimError> {
        let spacing = self.ctx.cell.rao_slot_spacing;
        let now = self.ctx.now();
        let mut slot = (at / spacing - SLOT_EPS).ceil().max(0.0) as u64;
        if (slot as f64) * spacing < now {
            slot += 1;
        }
        let bucket = self.rao_buckets.entry(slot).or_default();
        if bucket.is_empty() {
            self.ctx
                .calendar
                .schedule(slot as f64 * spacing, Event::RaoSlot(slot))?;
        }
        bucket.push(id);
        Ok(())
    }

    fn on_rao_slot(&mut self, now: f64, slot: u64) -> Result<(), SimError> {
        let Some(bucket) = self.rao_buckets.remove(&slot) else {
            return Ok(());
        };
        let mut contenders = Vec::with_capacity(bucket.len());
        let mut choices = Vec::with_capacity(bucket.len());
        for id in bucket {
            let Some(a) = self.ctx.attempt_mut(id) else {
                continue;
            };
            a.set_state(AttemptState::Contending);
            a.contended_at = now;
            let owner = a.report.owner as usize;
            choices.push(pick_opportunity(&self.ctx.cell, &mut self.access_rngs[owner]));
            contenders.push(id);
        }
        let outcomes = contend(&self.ctx.cell, &choices, &mut self.ctx.control_rng);
        let timeout = self.ctx.cell.grant_timeout;

        if let Some(t) = self.ctx.trace.as_mut() {
            t.rao_slots += 1;
            t.contenders += contenders.len() as u64;
            for o in &outcomes {
                match o {
                    ContentionOutcome::SingletonSuccess => t.singletons += 1,
                    ContentionOutcome::Collision => t.collisions += 1,
                    ContentionOutcome::ControlError => t.control_errors += 1,
                }
            }
        }

        for (id, outcome) in contenders.into_iter().zip(outcomes) {
            if outcome == ContentionOutcome::SingletonSuccess && self.grant_queue.push(id, now) {
                if let Some(a) = self.ctx.attempts.get_mut(&id) {
                    a.set_state(AttemptState::AwaitingGrant);
                }
                self.ensure_grant_window(now)?;
            } else {
                self.ctx.fail_access(id, now + timeout);
            }
        }
        Ok(())
    }

    fn ensure_grant_window(&mut self, now: f64) -> Result<(), SimError> {
        if self.grant_window_pending {
            return Ok(());
        }
        let w = self.ctx.cell.grant_window;
        let mut k = (now / w + SLOT_EPS).floor() as u64 + 1;
        if (k as f64) * w <= now {
            k += 1;
        }
        self.ctx
            .calendar
            .schedule(k as f64 * w, Event::GrantWindow(k))?;
        self.grant_window_pending = true;
        Ok(())
    }

    fn on_grant_window(&mut self, now: f64, k: u64) -> Result<(), SimError> {
        self.grant_window_pending = false;
        let attempts = &self.ctx.attempts;
        let round = issue_grants(
            &self.ctx.cell,
            &mut self.grant_queue,
            self.ctx.cell.grant_window,
            now,
            self.ctx.active_identifiers,
            |id| {
                attempts
                    .get(&id)
                    .is_some_and(|a| a.state == AttemptState::AwaitingGrant)
            },
        );
        let timeout = self.ctx.cell.grant_timeout;
        for stale in round.expired {
            self.ctx.fail_access(stale.id, stale.enqueued_at + timeout);
        }
        for granted in round.granted {
            let id = granted.id;
            if let Some(a) = self.ctx.attempts.get_mut(&id) {
                a.set_state(AttemptState::Connected);
                a.holds_identifier = true;
            }
            self.ctx.active_identifiers += 1;
            if let Some(t) = self.ctx.trace.as_mut() {
                t.grant_times.push(now);
                t.max_active_identifiers = t.max_active_identifiers.max(self.ctx.active_identifiers);
            }
            self.tech.on_grant(&mut self.ctx, id, now);
        }
        if !self.grant_queue.is_empty() {
            let w = self.ctx.cell.grant_window;
            self.ctx
                .calendar
                .schedule((k + 1) as f64 * w, Event::GrantWindow(k + 1))?;
            self.grant_window_pending = true;
        }
        Ok(())
    }

    fn on_retry(&mut self, now: f64, id: AttemptId) -> Result<(), SimError> {
        let Some(a) = self.ctx.attempts.get_mut(&id) else {
            return Ok(());
        };
        if a.is_finished() {
            return Ok(());
        }
        a.set_state(AttemptState::Backlogged);
        let owner = a.report.owner as usize;
        match backoff_delay(&self.ctx.cell, a, &mut self.access_rngs[owner]) {
            Some(delay) => self.enter_contention(id, now + delay),
            None => {
                self.ctx.finish(id);
                Ok(())
            }
        }
    }

    fn on_deadline(&mut self, now: f64, id: AttemptId) {
        let expired = self
            .ctx
            .attempts
            .get_mut(&id)
            .is_some_and(|a| expire_if_due(a, now));
        if expired {
            self.tech.withdraw(&mut self.ctx, id);
            self.ctx.release_identifier(id);
            self.ctx.finish(id);
        }
    }
}

/// Outcome counts straight from a record list.
pub fn count_outcomes(records: &[ReportRecord]) -> (usize, usize, usize) {
    records.iter().fold((0, 0, 0), |(d, fd, fr), r| match r.outcome {
        Outcome::Delivered { .. } => (d + 1, fd, fr),
        Outcome::FailedDeadline => (d, fd + 1, fr),
        Outcome::FailedMaxRetries => (d, fd, fr + 1),
        Outcome::Pending => (d, fd, fr),
    })
}
