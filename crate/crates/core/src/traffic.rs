//! Uplink workload of smart meters (SM) and enhanced smart meters (eSM).
//!
//! An SM carries one periodic meter-reading stream plus a set of sporadic
//! event-driven streams (Poisson). An eSM sends one PMU report per second.
//!
//! The event-driven message sizes are chosen so that the daily uplink byte
//! volume of each use case reproduces the per-meter budget table. Rows that
//! only publish a daily volume (meter events, service switch, prepay, IDCS)
//! are modelled as a Poisson stream of 50-byte messages.
//!
//! Note: the per-SM message count implied by the event frequencies is about
//! 100 messages per day (dominated by 96 price confirmations), not the
//! "approximately 125 per hour" figure that sometimes accompanies this traffic
//! model. The generator follows the event frequencies.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::engine::{derive_stream, device_traffic_stream};
use crate::error::SimError;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
const DAYS_PER_YEAR: f64 = 365.0;

/// Size of the generic message used for use cases that only publish a daily
/// byte volume.
const SCALED_MESSAGE_BYTES: u32 = 50;
/// Staleness bound for sporadic event-driven messages.
pub const EVENT_DEADLINE_S: f64 = 60.0;
pub const ESM_PERIOD_S: f64 = 1.0;
pub const RESIDENTIAL_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum UseCase {
    MeterReading,
    OnDemandRead,
    CappedEnergy,
    DrDlc,
    HanJoin,
    RealTimePrice,
    MetrologyFirmware,
    MetrologyProgram,
    NicFirmware,
    NicProgram,
    MeterEvents,
    ServiceSwitch,
    PrePay,
    Idcs,
    EsmReport,
}

impl UseCase {
    pub const ALL: [UseCase; 15] = [
        UseCase::MeterReading,
        UseCase::OnDemandRead,
        UseCase::CappedEnergy,
        UseCase::DrDlc,
        UseCase::HanJoin,
        UseCase::RealTimePrice,
        UseCase::MetrologyFirmware,
        UseCase::MetrologyProgram,
        UseCase::NicFirmware,
        UseCase::NicProgram,
        UseCase::MeterEvents,
        UseCase::ServiceSwitch,
        UseCase::PrePay,
        UseCase::Idcs,
        UseCase::EsmReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UseCase::MeterReading => "meter_reading",
            UseCase::OnDemandRead => "on_demand_read",
            UseCase::CappedEnergy => "capped_energy",
            UseCase::DrDlc => "dr_dlc",
            UseCase::HanJoin => "han_join_unjoin",
            UseCase::RealTimePrice => "rtp_confirmation",
            UseCase::MetrologyFirmware => "metrology_firmware_update",
            UseCase::MetrologyProgram => "metrology_program_update",
            UseCase::NicFirmware => "nic_firmware_update",
            UseCase::NicProgram => "nic_program_update",
            UseCase::MeterEvents => "meter_events",
            UseCase::ServiceSwitch => "service_switch",
            UseCase::PrePay => "prepay",
            UseCase::Idcs => "idcs",
            UseCase::EsmReport => "esm_report",
        }
    }

    /// Delivery ratio the use case must reach.
    pub fn reliability_target(self) -> f64 {
        match self {
            UseCase::MeterReading => 0.995,
            UseCase::Idcs => 0.99,
            _ => 0.98,
        }
    }

    /// Row of the daily volume table this use case is accounted under.
    pub fn volume_row(self) -> Option<VolumeRow> {
        Some(match self {
            UseCase::MeterReading | UseCase::OnDemandRead => VolumeRow::MeterReading,
            UseCase::ServiceSwitch | UseCase::CappedEnergy => VolumeRow::ServiceSwitch,
            UseCase::PrePay => VolumeRow::PrePay,
            UseCase::MeterEvents => VolumeRow::MeterEvents,
            UseCase::Idcs => VolumeRow::Idcs,
            UseCase::DrDlc => VolumeRow::DrDlc,
            UseCase::HanJoin => VolumeRow::PremiseNetworkAdmin,
            UseCase::RealTimePrice => VolumeRow::Price,
            UseCase::MetrologyFirmware
            | UseCase::MetrologyProgram
            | UseCase::NicFirmware
            | UseCase::NicProgram => VolumeRow::FirmwareProgramUpdate,
            UseCase::EsmReport => return None,
        })
    }
}

/// Reporting interval of the periodic meter read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportingInterval {
    /// 4 h for residential, 1 h for commercial/industrial meters.
    Default,
    /// One of the reduced intervals, in seconds.
    Reduced(u32),
}

impl ReportingInterval {
    pub const SUPPORTED_REDUCED: [u32; 4] = [300, 60, 30, 15];

    pub fn reduced(seconds: u32) -> Result<Self, SimError> {
        if Self::SUPPORTED_REDUCED.contains(&seconds) {
            Ok(Self::Reduced(seconds))
        } else {
            Err(SimError::Traffic(format!(
                "unsupported reporting interval {seconds} s (expected default, 300, 60, 30 or 15)"
            )))
        }
    }

    /// The interval as written in configs and CSV output.
    pub fn label(self) -> String {
        match self {
            ReportingInterval::Default => "default".to_owned(),
            ReportingInterval::Reduced(s) => s.to_string(),
        }
    }

    fn column(self) -> usize {
        match self {
            ReportingInterval::Default => 0,
            ReportingInterval::Reduced(300) => 1,
            ReportingInterval::Reduced(60) => 2,
            ReportingInterval::Reduced(30) => 3,
            ReportingInterval::Reduced(_) => 4,
        }
    }
}

impl std::str::FromStr for ReportingInterval {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("default") {
            return Ok(Self::Default);
        }
        let secs: u32 = s
            .trim_end_matches('s')
            .parse()
            .map_err(|_| SimError::Traffic(format!("bad reporting interval `{s}`")))?;
        Self::reduced(secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalProcess {
    /// Arrivals at `phase_offset + k * period`.
    Periodic { period: f64, phase_offset: f64 },
    /// Exponential inter-arrivals with mean `86400 / rate_per_day` seconds.
    Poisson { rate_per_day: f64 },
}

impl ArrivalProcess {
    /// Mean number of arrivals per day.
    pub fn daily_rate(&self) -> f64 {
        match *self {
            ArrivalProcess::Periodic { period, .. } => SECONDS_PER_DAY / period,
            ArrivalProcess::Poisson { rate_per_day } => rate_per_day,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UseCaseProfile {
    pub use_case: UseCase,
    pub arrival: ArrivalProcess,
    /// Bytes per message.
    pub message_size: u32,
    /// Relative deadline in seconds.
    pub deadline: f64,
    pub reliability_target: f64,
}

impl UseCaseProfile {
    fn checked(self) -> Result<Self, SimError> {
        let ok = self.message_size > 0
            && self.deadline > 0.0
            && self.reliability_target > 0.0
            && self.reliability_target <= 1.0
            && match self.arrival {
                ArrivalProcess::Periodic {
                    period,
                    phase_offset,
                } => period > 0.0 && phase_offset >= 0.0,
                ArrivalProcess::Poisson { rate_per_day } => rate_per_day >= 0.0,
            };
        if ok {
            Ok(self)
        } else {
            Err(SimError::Traffic(format!("invalid profile {self:?}")))
        }
    }

    /// Mean uplink bytes per day.
    pub fn daily_bytes(&self) -> f64 {
        self.arrival.daily_rate() * f64::from(self.message_size)
    }

    fn with_phase(mut self, phase: f64) -> Self {
        if let ArrivalProcess::Periodic { phase_offset, .. } = &mut self.arrival {
            *phase_offset = phase;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceClass {
    Residential,
    CommercialIndustrial,
    Esm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub class: DeviceClass,
    pub profiles: Vec<UseCaseProfile>,
    /// For an eSM, the SM location index it is co-located with.
    pub location: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DevicePopulation {
    pub devices: Vec<DeviceSpec>,
    pub n_residential: usize,
    pub n_ci: usize,
    pub n_esm: usize,
}

impl DevicePopulation {
    pub fn n_sm(&self) -> usize {
        self.n_residential + self.n_ci
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

fn poisson(use_case: UseCase, rate_per_day: f64, size: u32) -> UseCaseProfile {
    UseCaseProfile {
        use_case,
        arrival: ArrivalProcess::Poisson { rate_per_day },
        message_size: size,
        deadline: EVENT_DEADLINE_S,
        reliability_target: use_case.reliability_target(),
    }
}

/// Profiles of one smart meter. Periodic phase offsets are zero; the
/// population builder randomizes them.
pub fn sm_profiles(
    class: DeviceClass,
    ri: ReportingInterval,
) -> Result<Vec<UseCaseProfile>, SimError> {
    let (period, size) = match (class, ri) {
        (DeviceClass::Residential, ReportingInterval::Default) => (14_400.0, 1200),
        (DeviceClass::CommercialIndustrial, ReportingInterval::Default) => (3_600.0, 2400),
        (DeviceClass::Residential, ReportingInterval::Reduced(s)) => {
            ReportingInterval::reduced(s)?;
            (f64::from(s), 300)
        }
        (DeviceClass::CommercialIndustrial, ReportingInterval::Reduced(s)) => {
            ReportingInterval::reduced(s)?;
            (f64::from(s), 600)
        }
        (DeviceClass::Esm, _) => {
            return Err(SimError::Traffic(
                "eSM devices have no smart-meter profiles".into(),
            ))
        }
    };
    let reading = UseCaseProfile {
        use_case: UseCase::MeterReading,
        arrival: ArrivalProcess::Periodic {
            period,
            phase_offset: 0.0,
        },
        message_size: size,
        deadline: period,
        reliability_target: UseCase::MeterReading.reliability_target(),
    };

    let capped_per_day = 5.0 / DAYS_PER_YEAR;
    let update_per_day = 4.0 / DAYS_PER_YEAR;
    // Service switch keeps its 6 B/day row total with capped-energy responses
    // accounted under the same row.
    let service_switch_bytes = 6.0 - f64::from(SCALED_MESSAGE_BYTES) * capped_per_day;

    let scaled = |uc, daily_bytes: f64| {
        poisson(uc, daily_bytes / f64::from(SCALED_MESSAGE_BYTES), SCALED_MESSAGE_BYTES)
    };

    let profiles = vec![
        reading,
        poisson(UseCase::OnDemandRead, 0.025, SCALED_MESSAGE_BYTES),
        poisson(UseCase::CappedEnergy, capped_per_day, SCALED_MESSAGE_BYTES),
        // 0.5 B/day at 0.015/day
        poisson(UseCase::DrDlc, 0.015, 33),
        // 1 B/day at 5/year
        poisson(UseCase::HanJoin, capped_per_day, 73),
        // 2400 B/day at 96/day
        poisson(UseCase::RealTimePrice, 96.0, 25),
        // 5 B/day shared by four updates at 4/year each
        poisson(UseCase::MetrologyFirmware, update_per_day, 114),
        poisson(UseCase::MetrologyProgram, update_per_day, 114),
        poisson(UseCase::NicFirmware, update_per_day, 114),
        poisson(UseCase::NicProgram, update_per_day, 114),
        scaled(UseCase::MeterEvents, 50.0),
        scaled(UseCase::ServiceSwitch, service_switch_bytes),
        scaled(UseCase::PrePay, 8.0),
        scaled(UseCase::Idcs, 5.0),
    ];
    profiles.into_iter().map(UseCaseProfile::checked).collect()
}

/// Layout of one PMU data frame and the transport framing of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EsmFrameSpec {
    pub n_phasors: u32,
    pub n_analogs: u32,
    pub n_digitals: u32,
    pub samples_per_report: u32,
    pub per_frame_overhead: u32,
    pub transport_header: u32,
}

impl Default for EsmFrameSpec {
    /// 6 floating-point phasors, one analog and one digital word sampled at
    /// 50 Hz; UDP (8 B) plus IPv6 (40 B) per report.
    fn default() -> Self {
        Self {
            n_phasors: 6,
            n_analogs: 1,
            n_digitals: 1,
            samples_per_report: 50,
            per_frame_overhead: 22,
            transport_header: 48,
        }
    }
}

impl EsmFrameSpec {
    pub fn frame_bytes(&self) -> u64 {
        u64::from(self.per_frame_overhead)
            + 8 * u64::from(self.n_phasors)
            + 4 * u64::from(self.n_analogs)
            + 2 * u64::from(self.n_digitals)
    }
}

pub fn esm_report_size(spec: &EsmFrameSpec) -> u64 {
    u64::from(spec.samples_per_report) * spec.frame_bytes() + u64::from(spec.transport_header)
}

/// Offered bit rate of one eSM sending `report_size` bytes every second.
pub fn esm_bit_rate(report_size: u32) -> f64 {
    f64::from(report_size) * 8.0 / ESM_PERIOD_S
}

pub fn esm_profile(report_size: u32) -> Result<UseCaseProfile, SimError> {
    if report_size == 0 {
        return Err(SimError::Traffic("eSM report size must be positive".into()));
    }
    UseCaseProfile {
        use_case: UseCase::EsmReport,
        arrival: ArrivalProcess::Periodic {
            period: ESM_PERIOD_S,
            phase_offset: 0.0,
        },
        message_size: report_size,
        deadline: ESM_PERIOD_S,
        reliability_target: UseCase::EsmReport.reliability_target(),
    }
    .checked()
}

/// Builds the devices of one cell: `n_sm` meters split 90/10 into
/// residential and C/I, plus `round(penetration% * n_sm)` eSMs placed at
/// random meter locations. Every periodic stream gets a uniform phase.
pub fn build_population<R: Rng + ?Sized>(
    n_sm: usize,
    esm_penetration: f64,
    report_size: Option<u32>,
    ri: ReportingInterval,
    rng: &mut R,
) -> Result<DevicePopulation, SimError> {
    if !(0.0..=100.0).contains(&esm_penetration) {
        return Err(SimError::Traffic(format!(
            "eSM penetration {esm_penetration}% outside [0, 100]"
        )));
    }
    let n_residential = (RESIDENTIAL_FRACTION * n_sm as f64).round() as usize;
    let n_ci = n_sm - n_residential;
    let n_esm = (esm_penetration / 100.0 * n_sm as f64).round() as usize;

    let residential = sm_profiles(DeviceClass::Residential, ri)?;
    let ci = sm_profiles(DeviceClass::CommercialIndustrial, ri)?;
    let esm = match (n_esm, report_size) {
        (0, _) => None,
        (_, Some(rs)) => Some(esm_profile(rs)?),
        (_, None) => {
            return Err(SimError::Traffic(
                "eSM penetration > 0 requires a report size".into(),
            ))
        }
    };

    let mut devices = Vec::with_capacity(n_sm + n_esm);
    let classes = std::iter::repeat(DeviceClass::Residential)
        .take(n_residential)
        .chain(std::iter::repeat(DeviceClass::CommercialIndustrial).take(n_ci));
    for class in classes {
        let template = if class == DeviceClass::Residential {
            &residential
        } else {
            &ci
        };
        devices.push(DeviceSpec {
            class,
            profiles: randomize_phases(template, rng),
            location: None,
        });
    }
    if let Some(esm) = esm {
        for _ in 0..n_esm {
            let location = if n_sm > 0 {
                Some(rng.gen_range(0..n_sm as u32))
            } else {
                None
            };
            devices.push(DeviceSpec {
                class: DeviceClass::Esm,
                profiles: randomize_phases(std::slice::from_ref(&esm), rng),
                location,
            });
        }
    }
    Ok(DevicePopulation {
        devices,
        n_residential,
        n_ci,
        n_esm,
    })
}

fn randomize_phases<R: Rng + ?Sized>(
    template: &[UseCaseProfile],
    rng: &mut R,
) -> Vec<UseCaseProfile> {
    template
        .iter()
        .map(|p| match p.arrival {
            ArrivalProcess::Periodic { period, .. } => p.with_phase(rng.gen::<f64>() * period),
            ArrivalProcess::Poisson { .. } => *p,
        })
        .collect()
}

/// Next arrival strictly after `now`, or `None` for a zero-rate stream.
pub fn next_arrival<R: Rng + ?Sized>(
    profile: &UseCaseProfile,
    rng: &mut R,
    now: f64,
) -> Option<f64> {
    match profile.arrival {
        ArrivalProcess::Periodic {
            period,
            phase_offset,
        } => {
            if now < phase_offset {
                return Some(phase_offset);
            }
            let k = ((now - phase_offset) / period).floor() + 1.0;
            let mut t = phase_offset + k * period;
            if t <= now {
                t += period;
            }
            Some(t)
        }
        ArrivalProcess::Poisson { rate_per_day } => {
            if rate_per_day <= 0.0 {
                return None;
            }
            let exp = Exp::new(rate_per_day / SECONDS_PER_DAY).ok()?;
            Some(now + exp.sample(rng))
        }
    }
}

/// Number of periodic arrivals in `[0, horizon)`.
fn periodic_count(period: f64, phase_offset: f64, horizon: f64) -> u64 {
    if horizon <= phase_offset {
        0
    } else {
        ((horizon - phase_offset) / period).ceil() as u64
    }
}

/// Rows of the published per-meter daily volume table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VolumeRow {
    MeterReading,
    ServiceSwitch,
    PrePay,
    MeterEvents,
    Idcs,
    DrDlc,
    PremiseNetworkAdmin,
    Price,
    FirmwareProgramUpdate,
}

impl VolumeRow {
    pub const ALL: [VolumeRow; 9] = [
        VolumeRow::MeterReading,
        VolumeRow::ServiceSwitch,
        VolumeRow::PrePay,
        VolumeRow::MeterEvents,
        VolumeRow::Idcs,
        VolumeRow::DrDlc,
        VolumeRow::PremiseNetworkAdmin,
        VolumeRow::Price,
        VolumeRow::FirmwareProgramUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VolumeRow::MeterReading => "meter_reading",
            VolumeRow::ServiceSwitch => "service_switch",
            VolumeRow::PrePay => "prepay",
            VolumeRow::MeterEvents => "meter_events",
            VolumeRow::Idcs => "islanded_distributed_customer_storage",
            VolumeRow::DrDlc => "dr_dlc",
            VolumeRow::PremiseNetworkAdmin => "premise_network_admin",
            VolumeRow::Price => "price",
            VolumeRow::FirmwareProgramUpdate => "firmware_program_update",
        }
    }

    /// Published uplink bytes/meter/day.
    pub fn published_uplink(self, ri: ReportingInterval) -> f64 {
        match self {
            VolumeRow::MeterReading => {
                [11_000.0, 95_000.0, 475_000.0, 950_000.0, 1_900_000.0][ri.column()]
            }
            VolumeRow::ServiceSwitch => 6.0,
            VolumeRow::PrePay => 8.0,
            VolumeRow::MeterEvents => 50.0,
            VolumeRow::Idcs => 5.0,
            VolumeRow::DrDlc => 0.5,
            VolumeRow::PremiseNetworkAdmin => 1.0,
            VolumeRow::Price => 2_400.0,
            VolumeRow::FirmwareProgramUpdate => 5.0,
        }
    }

    /// Published downlink bytes/meter/day (default reporting interval). The
    /// downlink is not simulated; these are carried through analytically.
    pub fn published_downlink(self) -> f64 {
        match self {
            VolumeRow::MeterReading => 1.25,
            VolumeRow::ServiceSwitch => 3.0,
            VolumeRow::PrePay => 3.5,
            VolumeRow::MeterEvents => 0.0,
            VolumeRow::Idcs => 2.0,
            VolumeRow::DrDlc => 400.0,
            VolumeRow::PremiseNetworkAdmin => 1.0,
            VolumeRow::Price => 10_000.0,
            VolumeRow::FirmwareProgramUpdate => 30_000.0,
        }
    }
}

pub fn published_uplink_total(ri: ReportingInterval) -> f64 {
    [13_400.0, 97_000.0, 477_000.0, 952_000.0, 1_900_000.0][ri.column()]
}

pub const PUBLISHED_DOWNLINK_TOTAL: f64 = 40_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

/// One line of the volume validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeLine {
    pub use_case: String,
    pub direction: Direction,
    pub model: f64,
    pub published: f64,
}

impl VolumeLine {
    pub fn relative_error(&self) -> f64 {
        if self.published == 0.0 {
            if self.model == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.model - self.published) / self.published
        }
    }
}

/// Generates the arrivals of every smart meter over `days` days (no radio
/// protocol) and returns uplink bytes per meter per day by table row, plus a
/// `total` row. eSMs are excluded; downlink rows are analytic.
pub fn validate_daily_volume(
    population: &DevicePopulation,
    ri: ReportingInterval,
    days: u32,
    seed: u64,
) -> Result<Vec<VolumeLine>, SimError> {
    if days < 1 {
        return Err(SimError::Traffic("validation needs at least one day".into()));
    }
    let horizon = f64::from(days) * SECONDS_PER_DAY;
    let mut bytes = [0.0f64; VolumeRow::ALL.len()];
    let mut meters = 0usize;
    for (idx, device) in population.devices.iter().enumerate() {
        if device.class == DeviceClass::Esm {
            continue;
        }
        meters += 1;
        let mut rng = derive_stream(seed, device_traffic_stream(idx as u32));
        for profile in &device.profiles {
            let Some(row) = profile.use_case.volume_row() else {
                continue;
            };
            let count = match profile.arrival {
                ArrivalProcess::Periodic {
                    period,
                    phase_offset,
                } => periodic_count(period, phase_offset, horizon),
                ArrivalProcess::Poisson { .. } => {
                    let mut n = 0u64;
                    let mut t = 0.0;
                    while let Some(next) = next_arrival(profile, &mut rng, t) {
                        if next >= horizon {
                            break;
                        }
                        n += 1;
                        t = next;
                    }
                    n
                }
            };
            bytes[row as usize] += count as f64 * f64::from(profile.message_size);
        }
    }
    let norm = if meters == 0 {
        0.0
    } else {
        1.0 / (meters as f64 * f64::from(days))
    };

    let mut lines = Vec::with_capacity(2 * VolumeRow::ALL.len() + 2);
    let mut total = 0.0;
    for row in VolumeRow::ALL {
        let model = bytes[row as usize] * norm;
        total += model;
        lines.push(VolumeLine {
            use_case: row.name().to_owned(),
            direction: Direction::Uplink,
            model,
            published: row.published_uplink(ri),
        });
    }
    lines.push(VolumeLine {
        use_case: "total".to_owned(),
        direction: Direction::Uplink,
        model: total,
        published: published_uplink_total(ri),
    });
    for row in VolumeRow::ALL {
        lines.push(VolumeLine {
            use_case: row.name().to_owned(),
            direction: Direction::Downlink,
            model: row.published_downlink(),
            published: row.published_downlink(),
        });
    }
    lines.push(VolumeLine {
        use_case: "total".to_owned(),
        direction: Direction::Downlink,
        model: VolumeRow::ALL.iter().map(|r| r.published_downlink()).sum(),
        published: PUBLISHED_DOWNLINK_TOTAL,
    });
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(profiles: &[UseCaseProfile]) -> UseCaseProfile {
        profiles
            .iter()
            .find(|p| p.use_case == UseCase::MeterReading)
            .copied()
            .unwrap()
    }

    #[test]
    fn ci_default_reading_is_hourly_2400() {
        let p = reading(&sm_profiles(DeviceClass::CommercialIndustrial, ReportingInterval::Default).unwrap());
        assert_eq!(p.message_size, 2400);
        assert!(matches!(p.arrival, ArrivalProcess::Periodic { period, .. } if period == 3600.0));
        assert_eq!(p.deadline, 3600.0);
    }

    #[test]
    fn residential_reduced_reading_is_300_bytes() {
        let ri = ReportingInterval::reduced(300).unwrap();
        let p = reading(&sm_profiles(DeviceClass::Residential, ri).unwrap());
        assert_eq!(p.message_size, 300);
        assert!(matches!(p.arrival, ArrivalProcess::Periodic { period, .. } if period == 300.0));
    }

    #[test]
    fn unsupported_interval_and_class_are_rejected() {
        assert!(ReportingInterval::reduced(120).is_err());
        assert!(sm_profiles(DeviceClass::Residential, ReportingInterval::Reduced(7)).is_err());
        assert!(sm_profiles(DeviceClass::Esm, ReportingInterval::Default).is_err());
        assert!("abc".parse::<ReportingInterval>().is_err());
        assert_eq!("default".parse::<ReportingInterval>().unwrap(), ReportingInterval::Default);
        assert_eq!("60".parse::<ReportingInterval>().unwrap(), ReportingInterval::Reduced(60));
    }

    #[test]
    fn event_rates_follow_frequency_table() {
        let profiles = sm_profiles(DeviceClass::Residential, ReportingInterval::Default).unwrap();
        let rate = |uc| {
            profiles
                .iter()
                .find(|p| p.use_case == uc)
                .unwrap()
                .arrival
                .daily_rate()
        };
        assert_eq!(rate(UseCase::OnDemandRead), 0.025);
        assert_eq!(rate(UseCase::DrDlc), 0.015);
        assert_eq!(rate(UseCase::RealTimePrice), 96.0);
        assert!((rate(UseCase::CappedEnergy) - 5.0 / 365.0).abs() < 1e-12);
        assert!((rate(UseCase::HanJoin) - 5.0 / 365.0).abs() < 1e-12);
        for uc in [
            UseCase::MetrologyFirmware,
            UseCase::MetrologyProgram,
            UseCase::NicFirmware,
            UseCase::NicProgram,
        ] {
            assert!((rate(uc) - 4.0 / 365.0).abs() < 1e-12);
        }
        let idcs = profiles.iter().find(|p| p.use_case == UseCase::Idcs).unwrap();
        assert_eq!(idcs.reliability_target, 0.99);
        assert_eq!(reading(&profiles).reliability_target, 0.995);
        assert_eq!(idcs.deadline, EVENT_DEADLINE_S);
    }

    #[test]
    fn expected_default_volume_is_close_to_published_total() {
        let mean = |class| {
            sm_profiles(class, ReportingInterval::Default)
                .unwrap()
                .iter()
                .map(UseCaseProfile::daily_bytes)
                .sum::<f64>()
        };
        let weighted = 0.9 * mean(DeviceClass::Residential) + 0.1 * mean(DeviceClass::CommercialIndustrial);
        assert!((weighted / 13_400.0 - 1.0).abs() < 0.10, "{weighted}");
    }

    #[test]
    fn esm_report_sizes() {
        let spec = EsmFrameSpec::default();
        assert_eq!(spec.frame_bytes(), 76);
        assert_eq!(esm_report_size(&spec), 3848);
        assert_eq!(esm_report_size(&EsmFrameSpec { samples_per_report: 0, ..spec }), 48);
        assert_eq!(esm_report_size(&EsmFrameSpec { samples_per_report: 1, ..spec }), 124);
    }

    #[test]
    fn esm_bit_rates() {
        assert_eq!(esm_bit_rate(3848), 30_784.0);
        assert_eq!(esm_bit_rate(400), 3_200.0);
        assert_eq!(esm_bit_rate(115), 920.0);
        let p = esm_profile(400).unwrap();
        assert_eq!(p.deadline, 1.0);
        assert!(esm_profile(0).is_err());
    }

    #[test]
    fn population_composition() {
        let mut rng = derive_stream(3, 0);
        let pop = build_population(4500, 0.0, None, ReportingInterval::Default, &mut rng).unwrap();
        assert_eq!((pop.n_residential, pop.n_ci, pop.n_esm), (4050, 450, 0));
        let pop = build_population(4500, 2.0, Some(3848), ReportingInterval::Default, &mut rng).unwrap();
        assert_eq!(pop.n_esm, 90);
        assert_eq!(pop.devices.len(), 4590);
        assert!(pop.devices[4500..].iter().all(|d| d.class == DeviceClass::Esm));
        let pop = build_population(0, 0.0, None, ReportingInterval::Default, &mut rng).unwrap();
        assert!(pop.is_empty());
        assert!(build_population(10, 101.0, Some(1), ReportingInterval::Default, &mut rng).is_err());
        assert!(build_population(10, 50.0, None, ReportingInterval::Default, &mut rng).is_err());
    }

    #[test]
    fn phases_are_within_period() {
        let mut rng = derive_stream(9, 0);
        let pop = build_population(200, 10.0, Some(115), ReportingInterval::Reduced(60), &mut rng).unwrap();
        for d in &pop.devices {
            for p in &d.profiles {
                if let ArrivalProcess::Periodic { period, phase_offset } = p.arrival {
                    assert!((0.0..period).contains(&phase_offset));
                }
            }
        }
    }

    #[test]
    fn periodic_next_arrival() {
        let p = UseCaseProfile {
            use_case: UseCase::MeterReading,
            arrival: ArrivalProcess::Periodic { period: 14_400.0, phase_offset: 0.0 },
            message_size: 1200,
            deadline: 14_400.0,
            reliability_target: 0.995,
        };
        let mut rng = derive_stream(0, 0);
        assert_eq!(next_arrival(&p, &mut rng, 0.0), Some(14_400.0));
        assert_eq!(next_arrival(&p, &mut rng, 14_400.0), Some(28_800.0));
        let shifted = p.with_phase(100.0);
        assert_eq!(next_arrival(&shifted, &mut rng, 0.0), Some(100.0));
        assert_eq!(next_arrival(&shifted, &mut rng, 100.0), Some(14_500.0));
    }

    #[test]
    fn poisson_mean_interarrival() {
        let p = poisson(UseCase::RealTimePrice, 96.0, 25);
        let mut rng = derive_stream(5, 1);
        let n = 100_000;
        let mut t = 0.0;
        for _ in 0..n {
            t = next_arrival(&p, &mut rng, t).unwrap();
        }
        let mean = t / n as f64;
        assert!((mean / 900.0 - 1.0).abs() < 0.02, "mean {mean}");
        assert_eq!(next_arrival(&poisson(UseCase::Idcs, 0.0, 50), &mut rng, 0.0), None);
    }

    #[test]
    fn periodic_count_matches_enumeration() {
        for &(period, phase, horizon) in &[(300.0, 12.5, 86_400.0), (3600.0, 0.0, 7200.0), (15.0, 14.9, 100.0)] {
            let mut n = 0;
            let mut t = phase;
            while t < horizon {
                n += 1;
                t += period;
            }
            assert_eq!(periodic_count(period, phase, horizon), n);
        }
    }
}
