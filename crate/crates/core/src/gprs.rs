//! GPRS on one 200 kHz carrier: RACH on the CCCH timeslot, AGCH-limited
//! grants, and PDCHs multiplexing uplink TBFs by USF.

use rand::Rng;

use crate::access::{AttemptId, AttemptState, CellModel};
use crate::cell::{simulate, CellContext, RunOutput, RunParams, Technology};
use crate::error::SimError;
use crate::traffic::DevicePopulation;

/// Data timeslots available when one of eight carries the CCCH.
pub const MAX_PDCH: u32 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct GprsConfig {
    pub rao_rate: f64,
    pub agch_rate: f64,
    /// Upper bound on grants per second; documentation only, the simulated
    /// budget is `agch_rate`.
    pub theoretical_grant_ceiling: f64,
    pub n_pdch: u32,
    pub usf_per_pdch: u32,
    /// Bits per second of one PDCH.
    pub per_pdch_rate: f64,
    pub block_period: f64,
    pub p_control_error: f64,
    pub p_data_error: f64,
    pub max_retransmissions: u32,
    pub grant_timeout: f64,
    pub backoff_window: f64,
    pub grant_queue_capacity: usize,
}

impl Default for GprsConfig {
    fn default() -> Self {
        Self {
            rao_rate: 217.0,
            agch_rate: 28.0,
            theoretical_grant_ceiling: 32.0,
            n_pdch: 7,
            usf_per_pdch: 7,
            per_pdch_rate: 21_400.0,
            block_period: 0.02,
            p_control_error: 0.01,
            p_data_error: 0.1,
            max_retransmissions: 7,
            grant_timeout: 1.0,
            backoff_window: 1.0,
            grant_queue_capacity: 1024,
        }
    }
}

impl GprsConfig {
    pub fn bits_per_block(&self) -> u64 {
        (self.per_pdch_rate * self.block_period).round() as u64
    }

    pub fn identifier_limit(&self) -> usize {
        (self.n_pdch * self.usf_per_pdch) as usize
    }

    /// Raw uplink capacity of all PDCHs in bytes per second.
    pub fn raw_capacity(&self) -> f64 {
        f64::from(self.n_pdch) * self.per_pdch_rate / 8.0
    }
}

pub fn gprs_cell(config: &GprsConfig) -> Result<CellModel, SimError> {
    if !(1..=MAX_PDCH).contains(&config.n_pdch) {
        return Err(SimError::Cell(format!(
            "n_pdch must lie in 1..={MAX_PDCH}, got {}",
            config.n_pdch
        )));
    }
    if config.usf_per_pdch == 0 || config.bits_per_block() == 0 || config.rao_rate <= 0.0 {
        return Err(SimError::Cell("invalid GPRS carrier layout".into()));
    }
    if config.agch_rate <= 0.0 {
        return Err(SimError::Cell("agch_rate must be positive".into()));
    }
    let cell = CellModel {
        rao_slot_spacing: 1.0 / config.rao_rate,
        opportunities_per_slot: 1,
        grant_budget: config.agch_rate,
        // One AGCH block per window.
        grant_window: 1.0 / config.agch_rate,
        grant_queue_capacity: config.grant_queue_capacity,
        response_window: config.grant_timeout,
        grant_timeout: config.grant_timeout,
        identifier_limit: config.identifier_limit(),
        p_control_error: config.p_control_error,
        p_data_error: config.p_data_error,
        data_capacity: config.raw_capacity(),
        max_retransmissions: config.max_retransmissions,
        backoff_window: config.backoff_window,
    };
    cell.validate()?;
    Ok(cell)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkTbf {
    pub id: AttemptId,
    pub remaining_bits: u64,
    pub usf: u32,
    /// The assignment block still has to go out on this PDCH.
    pub signaling_pending: bool,
}

#[derive(Debug, Clone, Default)]
struct Pdch {
    tbfs: Vec<UplinkTbf>,
    cursor: usize,
}

/// What one PDCH carried in one block period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockUse {
    Idle,
    Signaling(AttemptId),
    Data(AttemptId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GprsEvent {
    BlockTick(u64),
}

/// Round-robin block scheduler over the PDCHs of one carrier.
#[derive(Debug, Clone)]
pub struct PdchScheduler {
    config: GprsConfig,
    cell: CellModel,
    pdchs: Vec<Pdch>,
    tick_pending: bool,
}

impl PdchScheduler {
    pub fn new(config: GprsConfig) -> Result<Self, SimError> {
        let cell = gprs_cell(&config)?;
        Ok(Self {
            pdchs: vec![Pdch::default(); config.n_pdch as usize],
            config,
            cell,
            tick_pending: false,
        })
    }

    pub fn active_tbfs(&self) -> usize {
        self.pdchs.iter().map(|p| p.tbfs.len()).sum()
    }

    pub fn tbfs_on(&self, pdch: usize) -> usize {
        self.pdchs[pdch].tbfs.len()
    }

    /// Places a TBF on the least loaded PDCH. With `enforce_usf`, fails when
    /// every USF is taken.
    pub fn admit(
        &mut self,
        id: AttemptId,
        bytes: u32,
        signaling: bool,
        enforce_usf: bool,
    ) -> Option<usize> {
        let (idx, pdch) = self
            .pdchs
            .iter_mut()
            .enumerate()
            .min_by_key(|(_, p)| p.tbfs.len())?;
        if enforce_usf && pdch.tbfs.len() >= self.config.usf_per_pdch as usize {
            return None;
        }
        let usf = (0..)
            .find(|u| pdch.tbfs.iter().all(|t| t.usf != *u))
            .expect("free USF exists");
        pdch.tbfs.push(UplinkTbf {
            id,
            remaining_bits: u64::from(bytes) * 8,
            usf,
            signaling_pending: signaling,
        });
        Some(idx)
    }

    pub fn remove(&mut self, id: AttemptId) -> bool {
        for p in &mut self.pdchs {
            if let Some(pos) = p.tbfs.iter().position(|t| t.id == id) {
                p.tbfs.remove(pos);
                if pos < p.cursor {
                    p.cursor -= 1;
                }
                if p.cursor >= p.tbfs.len() {
                    p.cursor = 0;
                }
                return true;
            }
        }
        false
    }

    /// Serves one block period. `ok` decides whether a block of the given
    /// kind (true = signaling) is received. Returns per-PDCH block use and
    /// the TBFs whose last block was acknowledged.
    pub fn serve_block(
        &mut self,
        mut ok: impl FnMut(bool) -> bool,
    ) -> (Vec<BlockUse>, Vec<AttemptId>) {
        let bits = self.config.bits_per_block();
        let mut uses = Vec::with_capacity(self.pdchs.len());
        let mut done = Vec::new();
        for p in &mut self.pdchs {
            if p.tbfs.is_empty() {
                uses.push(BlockUse::Idle);
                continue;
            }
            // Access signaling preempts data on the timeslot.
            if let Some(t) = p.tbfs.iter_mut().find(|t| t.signaling_pending) {
                if ok(true) {
                    t.signaling_pending = false;
                }
                uses.push(BlockUse::Signaling(t.id));
                continue;
            }
            let i = p.cursor % p.tbfs.len();
            let t = &mut p.tbfs[i];
            uses.push(BlockUse::Data(t.id));
            if ok(false) {
                t.remaining_bits = t.remaining_bits.saturating_sub(bits);
            }
            if t.remaining_bits == 0 {
                done.push(t.id);
                p.tbfs.remove(i);
                if p.tbfs.is_empty() || i >= p.tbfs.len() {
                    p.cursor = 0;
                } else {
                    p.cursor = i;
                }
            } else {
                p.cursor = (i + 1) % p.tbfs.len();
            }
        }
        (uses, done)
    }

    fn ensure_tick(&mut self, ctx: &mut CellContext<GprsEvent>, now: f64) {
        if self.tick_pending {
            return;
        }
        let period = self.config.block_period;
        let mut k = (now / period - 1e-9).ceil().max(0.0) as u64;
        if (k as f64) * period < now {
            k += 1;
        }
        ctx.schedule(k as f64 * period, GprsEvent::BlockTick(k));
        self.tick_pending = true;
    }
}

impl Technology for PdchScheduler {
    type Event = GprsEvent;

    fn cell(&self) -> &CellModel {
        &self.cell
    }

    fn on_grant(&mut self, ctx: &mut CellContext<GprsEvent>, id: AttemptId, now: f64) {
        let Some(a) = ctx.attempt_mut(id) else { return };
        let bytes = a.report.size;
        // The identifier gate keeps a USF free for every granted attempt.
        self.admit(id, bytes, true, true)
            .expect("identifier limit equals total USF count");
        self.ensure_tick(ctx, now);
    }

    fn start_transfer(&mut self, ctx: &mut CellContext<GprsEvent>, id: AttemptId, now: f64) {
        let Some(a) = ctx.attempt_mut(id) else { return };
        let bytes = a.report.size;
        self.admit(id, bytes, false, false);
        self.ensure_tick(ctx, now);
    }

    fn on_event(&mut self, ctx: &mut CellContext<GprsEvent>, event: GprsEvent, now: f64) {
        let GprsEvent::BlockTick(k) = event;
        self.tick_pending = false;
        let (p_ctrl, p_data) = (self.cell.p_control_error, self.cell.p_data_error);
        let rng = &mut ctx.data_rng;
        let (uses, done) =
            self.serve_block(|signaling| rng.gen::<f64>() >= if signaling { p_ctrl } else { p_data });

        for u in &uses {
            if let BlockUse::Data(id) = *u {
                if let Some(a) = ctx.attempt_mut(id) {
                    if a.state == AttemptState::Connected {
                        a.set_state(AttemptState::Transmitting);
                    }
                }
            }
        }
        let busy = uses.iter().filter(|u| **u != BlockUse::Idle).count() as u64;
        let max_per = self.pdchs.iter().map(|p| p.tbfs.len()).max().unwrap_or(0);
        ctx.note_tick(busy * self.config.bits_per_block(), max_per);

        let end = now + self.config.block_period;
        for id in done {
            ctx.deliver(id, end);
        }
        if self.active_tbfs() > 0 {
            ctx.schedule((k + 1) as f64 * self.config.block_period, GprsEvent::BlockTick(k + 1));
            self.tick_pending = true;
        }
    }

    fn withdraw(&mut self, _ctx: &mut CellContext<GprsEvent>, id: AttemptId) {
        self.remove(id);
    }
}

/// One replication of `population` on a GPRS carrier.
pub fn simulate_gprs(
    config: &GprsConfig,
    population: &DevicePopulation,
    params: &RunParams,
) -> Result<RunOutput, SimError> {
    simulate(PdchScheduler::new(config.clone())?, population, params)
}
