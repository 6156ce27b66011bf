//! LTE cell: PRACH contention, PDCCH-limited random access responses, the
//! msg3/msg4 contention resolution and a PRB-granular PUSCH scheduler.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::access::{AttemptId, AttemptState, CellModel};
use crate::cell::{simulate, CellContext, RunOutput, RunParams, Technology};
use crate::error::SimError;
use crate::traffic::DevicePopulation;

/// Transport block bits per PRB at the highest modulation and coding
/// (4392 bits over 6 PRBs).
pub const BITS_PER_PRB: u64 = 732;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bandwidth {
    Mhz1_4,
    Mhz10,
}

impl Bandwidth {
    pub fn n_prb(self) -> u32 {
        match self {
            Bandwidth::Mhz1_4 => 6,
            Bandwidth::Mhz10 => 50,
        }
    }

    pub fn hz(self) -> u64 {
        match self {
            Bandwidth::Mhz1_4 => 1_400_000,
            Bandwidth::Mhz10 => 10_000_000,
        }
    }

    pub fn from_hz(hz: u64) -> Result<Self, SimError> {
        match hz {
            1_400_000 => Ok(Bandwidth::Mhz1_4),
            10_000_000 => Ok(Bandwidth::Mhz10),
            _ => Err(SimError::Cell(format!("unsupported LTE bandwidth {hz} Hz"))),
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bandwidth::Mhz1_4 => "1.4MHz",
            Bandwidth::Mhz10 => "10MHz",
        })
    }
}

impl FromStr for Bandwidth {
    type Err = SimError;

    /// Accepts `1.4`, `1.4MHz`, `10`, `10MHz` or a value in Hz.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_suffix("mhz").unwrap_or(&t).trim();
        match t {
            "1.4" => Ok(Bandwidth::Mhz1_4),
            "10" => Ok(Bandwidth::Mhz10),
            _ => t
                .parse::<u64>()
                .map_err(|_| SimError::Cell(format!("unsupported LTE bandwidth {s:?}")))
                .and_then(Bandwidth::from_hz),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LteConfig {
    pub bandwidth: Bandwidth,
    pub prach_period: f64,
    pub n_preambles: u32,
    /// RAR messages per second.
    pub rar_grant_budget: f64,
    /// Time after the preamble within which the RAR must arrive.
    pub response_window: f64,
    pub grant_timeout: f64,
    pub tti: f64,
    pub bits_per_prb: u64,
    pub rar_to_msg3: f64,
    pub msg3_to_msg4: f64,
    pub contention_resolution_timeout: f64,
    pub msg3_max_transmissions: u32,
    pub msg3_harq_rtt: f64,
    pub msg3_prbs: u32,
    pub identifier_limit: usize,
    pub p_control_error: f64,
    pub p_data_error: f64,
    pub max_retransmissions: u32,
    pub backoff_window: f64,
    pub grant_queue_capacity: usize,
}

impl Default for LteConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Mhz1_4,
            prach_period: 0.005,
            n_preambles: 54,
            rar_grant_budget: 3000.0,
            response_window: 0.005,
            grant_timeout: 0.04,
            tti: 0.001,
            bits_per_prb: BITS_PER_PRB,
            rar_to_msg3: 0.005,
            msg3_to_msg4: 0.005,
            contention_resolution_timeout: 0.048,
            msg3_max_transmissions: 5,
            msg3_harq_rtt: 0.008,
            msg3_prbs: 1,
            identifier_limit: 256,
            p_control_error: 0.01,
            p_data_error: 0.1,
            max_retransmissions: 10,
            backoff_window: 0.02,
            grant_queue_capacity: 4096,
        }
    }
}

impl LteConfig {
    pub fn n_prb(&self) -> u32 {
        self.bandwidth.n_prb()
    }

    /// Bits in one full-bandwidth transport block.
    pub fn tbs_per_tti(&self) -> u64 {
        u64::from(self.n_prb()) * self.bits_per_prb
    }

    /// Raw PUSCH capacity in bytes per second.
    pub fn raw_capacity(&self) -> f64 {
        self.tbs_per_tti() as f64 / 8.0 / self.tti
    }
}

pub fn lte_cell(config: &LteConfig) -> Result<CellModel, SimError> {
    if config.msg3_prbs > config.n_prb() || config.bits_per_prb == 0 || config.tti <= 0.0 {
        return Err(SimError::Cell("invalid PUSCH layout".into()));
    }
    if config.msg3_max_transmissions == 0 {
        return Err(SimError::Cell("msg3 needs at least one transmission".into()));
    }
    let cell = CellModel {
        rao_slot_spacing: config.prach_period,
        opportunities_per_slot: config.n_preambles,
        grant_budget: config.rar_grant_budget,
        grant_window: config.prach_period,
        grant_queue_capacity: config.grant_queue_capacity,
        response_window: config.response_window,
        grant_timeout: config.grant_timeout,
        identifier_limit: config.identifier_limit,
        p_control_error: config.p_control_error,
        p_data_error: config.p_data_error,
        data_capacity: config.raw_capacity(),
        max_retransmissions: config.max_retransmissions,
        backoff_window: config.backoff_window,
    };
    cell.validate()?;
    Ok(cell)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LteEvent {
    /// msg3 transmission number `tx` (1-based).
    Msg3 { id: AttemptId, generation: u32, tx: u32 },
    Msg4 { id: AttemptId, generation: u32, msg3_at: f64 },
    Tti(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub id: AttemptId,
    pub remaining_bits: u64,
}

/// PRBs a transfer received in one TTI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub id: AttemptId,
    pub prbs: u32,
}

/// FIFO PUSCH scheduler: the head-of-line transfer takes every PRB it can
/// use, leftovers go to the next one.
#[derive(Debug, Clone)]
pub struct PuschScheduler {
    config: LteConfig,
    cell: CellModel,
    queue: VecDeque<Transfer>,
    /// msg3 PRBs reserved per TTI index.
    reserved: BTreeMap<u64, u32>,
    last_served: Option<u64>,
    tick_pending: bool,
}

impl PuschScheduler {
    pub fn new(config: LteConfig) -> Result<Self, SimError> {
        let cell = lte_cell(&config)?;
        Ok(Self {
            config,
            cell,
            queue: VecDeque::new(),
            reserved: BTreeMap::new(),
            last_served: None,
            tick_pending: false,
        })
    }

    pub fn config(&self) -> &LteConfig {
        &self.config
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn enqueue(&mut self, id: AttemptId, bytes: u32) {
        self.queue.push_back(Transfer {
            id,
            remaining_bits: u64::from(bytes) * 8,
        });
    }

    pub fn remove(&mut self, id: AttemptId) -> bool {
        let before = self.queue.len();
        self.queue.retain(|t| t.id != id);
        self.queue.len() != before
    }

    fn tti_index(&self, t: f64) -> u64 {
        (t / self.config.tti + 1e-6).floor() as u64
    }

    /// Reserves msg3 PRBs in the first TTI at or after `now` that is not yet
    /// served and has room. Returns the TTI index.
    pub fn reserve_msg3(&mut self, now: f64) -> u64 {
        let mut k = self.tti_index(now);
        if let Some(last) = self.last_served {
            k = k.max(last + 1);
        }
        while self.reserved.first_key_value().is_some_and(|(&f, _)| f < k) {
            self.reserved.pop_first();
        }
        let (cap, need) = (self.config.n_prb(), self.config.msg3_prbs);
        loop {
            let used = self.reserved.entry(k).or_insert(0);
            if *used + need <= cap {
                *used += need;
                return k;
            }
            k += 1;
        }
    }

    /// Serves TTI `k`. `ok` draws whether one transport block is received.
    /// Returns the allocations and the transfers completed in this TTI.
    pub fn serve_tti(
        &mut self,
        k: u64,
        mut ok: impl FnMut() -> bool,
    ) -> (Vec<Allocation>, Vec<AttemptId>) {
        self.last_served = Some(k);
        let signaling = self.reserved.remove(&k).unwrap_or(0);
        let mut free = self.config.n_prb().saturating_sub(signaling);
        let per_prb = self.config.bits_per_prb;
        let mut allocations = Vec::new();
        let mut done = Vec::new();
        let mut i = 0;
        while free > 0 && i < self.queue.len() {
            let t = &mut self.queue[i];
            let need = t.remaining_bits.div_ceil(per_prb).max(1);
            let prbs = need.min(u64::from(free)) as u32;
            free -= prbs;
            allocations.push(Allocation { id: t.id, prbs });
            if ok() {
                t.remaining_bits = t.remaining_bits.saturating_sub(u64::from(prbs) * per_prb);
            }
            if t.remaining_bits == 0 {
                done.push(t.id);
                self.queue.remove(i);
            } else {
                i += 1;
            }
        }
        (allocations, done)
    }

    fn ensure_tick(&mut self, ctx: &mut CellContext<LteEvent>, now: f64) {
        if self.tick_pending {
            return;
        }
        let mut k = self.tti_index(now);
        if (k as f64) * self.config.tti < now - 1e-9 {
            k += 1;
        }
        if let Some(last) = self.last_served {
            k = k.max(last + 1);
        }
        // k * tti may round to just below `now`.
        ctx.schedule((k as f64 * self.config.tti).max(now), LteEvent::Tti(k));
        self.tick_pending = true;
    }

    fn live_generation(ctx: &mut CellContext<LteEvent>, id: AttemptId, generation: u32) -> bool {
        ctx.attempt_mut(id)
            .is_some_and(|a| a.state == AttemptState::Connected && a.retries_used == generation)
    }

    fn on_msg3(&mut self, ctx: &mut CellContext<LteEvent>, id: AttemptId, generation: u32, tx: u32) {
        if !Self::live_generation(ctx, id, generation) {
            return;
        }
        let k = self.reserve_msg3(ctx.now());
        let at = k as f64 * self.config.tti;
        if ctx.data_rng.gen::<f64>() >= self.cell.p_data_error {
            ctx.schedule(
                at + self.config.msg3_to_msg4,
                LteEvent::Msg4 { id, generation, msg3_at: at },
            );
        } else if tx < self.config.msg3_max_transmissions {
            ctx.schedule(
                at + self.config.msg3_harq_rtt,
                LteEvent::Msg3 { id, generation, tx: tx + 1 },
            );
        } else {
            ctx.fail_access(id, at + self.config.contention_resolution_timeout);
        }
    }

    fn on_msg4(&mut self, ctx: &mut CellContext<LteEvent>, id: AttemptId, generation: u32, msg3_at: f64) {
        if !Self::live_generation(ctx, id, generation) {
            return;
        }
        if ctx.control_rng.gen::<f64>() < self.cell.p_control_error {
            ctx.fail_access(id, msg3_at + self.config.contention_resolution_timeout);
            return;
        }
        let now = ctx.now();
        let Some(a) = ctx.attempt_mut(id) else { return };
        a.set_state(AttemptState::Transmitting);
        let bytes = a.report.size;
        self.enqueue(id, bytes);
        self.ensure_tick(ctx, now);
    }

    fn on_tti(&mut self, ctx: &mut CellContext<LteEvent>, k: u64) {
        self.tick_pending = false;
        let signaling = self.reserved.get(&k).copied().unwrap_or(0);
        let p_data = self.cell.p_data_error;
        let rng = &mut ctx.data_rng;
        let (allocations, done) = self.serve_tti(k, || rng.gen::<f64>() >= p_data);
        let prbs: u32 = signaling + allocations.iter().map(|a| a.prbs).sum::<u32>();
        ctx.note_tick(u64::from(prbs) * self.config.bits_per_prb, allocations.len());
        let end = (k + 1) as f64 * self.config.tti;
        for id in done {
            ctx.deliver(id, end);
        }
        if !self.queue.is_empty() {
            ctx.schedule(end, LteEvent::Tti(k + 1));
            self.tick_pending = true;
        }
    }
}

impl Technology for PuschScheduler {
    type Event = LteEvent;

    fn cell(&self) -> &CellModel {
        &self.cell
    }

    /// The RAR goes out at `now`.
    fn on_grant(&mut self, ctx: &mut CellContext<LteEvent>, id: AttemptId, now: f64) {
        let Some(a) = ctx.attempt_mut(id) else { return };
        let (generation, contended_at) = (a.retries_used, a.contended_at);
        if ctx.control_rng.gen::<f64>() < self.cell.p_control_error {
            ctx.fail_access(id, contended_at + self.cell.grant_timeout);
            return;
        }
        ctx.schedule(
            now + self.config.rar_to_msg3,
            LteEvent::Msg3 { id, generation, tx: 1 },
        );
    }

    fn start_transfer(&mut self, ctx: &mut CellContext<LteEvent>, id: AttemptId, now: f64) {
        let Some(a) = ctx.attempt_mut(id) else { return };
        let bytes = a.report.size;
        self.enqueue(id, bytes);
        self.ensure_tick(ctx, now);
    }

    fn on_event(&mut self, ctx: &mut CellContext<LteEvent>, event: LteEvent, _now: f64) {
        match event {
            LteEvent::Msg3 { id, generation, tx } => self.on_msg3(ctx, id, generation, tx),
            LteEvent::Msg4 { id, generation, msg3_at } => self.on_msg4(ctx, id, generation, msg3_at),
            LteEvent::Tti(k) => self.on_tti(ctx, k),
        }
    }

    fn withdraw(&mut self, _ctx: &mut CellContext<LteEvent>, id: AttemptId) {
        self.remove(id);
    }
}

/// One replication of `population` on an LTE cell.
pub fn simulate_lte(
    config: &LteConfig,
    population: &DevicePopulation,
    params: &RunParams,
) -> Result<RunOutput, SimError> {
    simulate(PuschScheduler::new(config.clone())?, population, params)
}
