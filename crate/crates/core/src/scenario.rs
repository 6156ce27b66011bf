//! Scenario files: `# comment`, `[section]`, `key = value`, comma lists.
//!
//! Keys before any section header belong to `[scenario]`. Every key has a
//! default, so a file holding only `technology = gprs` is complete.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::gprs::GprsConfig;
use crate::lte::{Bandwidth, LteConfig};
use crate::traffic::ReportingInterval;

pub const DEFAULT_N_SM: usize = 4500;
pub const DEFAULT_REPLICATIONS: usize = 10;
/// Horizon of sweeps without eSMs.
pub const SM_HORIZON_S: f64 = 7200.0;
/// Horizon of sweeps with eSMs.
pub const ESM_HORIZON_S: f64 = 600.0;
pub const WARMUP_FRACTION: f64 = 0.1;
/// Carrier width reported for GPRS rows.
pub const GPRS_BANDWIDTH_HZ: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RadioTech {
    Gprs,
    Lte,
}

impl fmt::Display for RadioTech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RadioTech::Gprs => "gprs",
            RadioTech::Lte => "lte",
        })
    }
}

impl FromStr for RadioTech {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gprs" => Ok(RadioTech::Gprs),
            "lte" => Ok(RadioTech::Lte),
            other => Err(format!("expected gprs or lte, got `{other}`")),
        }
    }
}

/// Which outage curves a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeSelection {
    ArpD,
    DOnly,
    Both,
}

impl FromStr for ModeSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arp+d" | "arpd" => Ok(ModeSelection::ArpD),
            "d-only" | "d" => Ok(ModeSelection::DOnly),
            "both" => Ok(ModeSelection::Both),
            other => Err(format!("expected arp+d, d-only or both, got `{other}`")),
        }
    }
}

/// How the data-only curve is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DOnlyMethod {
    /// `1 - C/L` against the raw data capacity.
    AnalyticDeficit,
    /// Simulation with the access protocol bypassed.
    SimNoArp,
}

impl FromStr for DOnlyMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic-deficit" | "analytic" => Ok(DOnlyMethod::AnalyticDeficit),
            "sim-no-arp" => Ok(DOnlyMethod::SimNoArp),
            other => Err(format!("expected analytic-deficit or sim-no-arp, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub technology: RadioTech,
    pub n_sm: Vec<usize>,
    pub ri: Vec<ReportingInterval>,
    pub esm_penetration: Vec<f64>,
    pub rs: Vec<u32>,
    pub seed: u64,
    pub replications: usize,
    /// `None` picks [`SM_HORIZON_S`] or [`ESM_HORIZON_S`].
    pub horizon: Option<f64>,
    /// `None` means [`WARMUP_FRACTION`] of the horizon.
    pub warmup: Option<f64>,
    pub mode: ModeSelection,
    pub d_only: DOnlyMethod,
    /// Keep the smart meters' own traffic running during eSM sweeps.
    pub sm_background: bool,
    pub gprs: GprsConfig,
    pub lte: LteConfig,
    pub traffic_validation: bool,
    pub validation_days: u32,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            technology: RadioTech::Gprs,
            n_sm: vec![DEFAULT_N_SM],
            ri: vec![ReportingInterval::Default],
            esm_penetration: vec![0.0],
            rs: vec![3848],
            seed: 1,
            replications: DEFAULT_REPLICATIONS,
            horizon: None,
            warmup: None,
            mode: ModeSelection::Both,
            d_only: DOnlyMethod::AnalyticDeficit,
            sm_background: true,
            gprs: GprsConfig::default(),
            lte: LteConfig::default(),
            traffic_validation: false,
            validation_days: 30,
        }
    }
}

impl Scenario {
    pub fn has_esm(&self) -> bool {
        self.esm_penetration.iter().any(|&p| p > 0.0)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(if self.has_esm() {
            ESM_HORIZON_S
        } else {
            SM_HORIZON_S
        })
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(WARMUP_FRACTION * self.horizon())
    }

    pub fn bandwidth_hz(&self) -> u64 {
        match self.technology {
            RadioTech::Gprs => GPRS_BANDWIDTH_HZ,
            RadioTech::Lte => self.lte.bandwidth.hz(),
        }
    }

    /// Checks cross-field constraints that single keys cannot.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Scenario(m.to_owned()));
        if self.n_sm.is_empty() || self.ri.is_empty() || self.esm_penetration.is_empty() || self.rs.is_empty() {
            return fail("sweep lists must not be empty");
        }
        if self.n_sm.contains(&0) {
            return fail("n_sm values must be positive");
        }
        if self.replications == 0 {
            return fail("replications must be positive");
        }
        let horizon = self.horizon();
        if !(horizon > 0.0) {
            return fail("horizon must be positive");
        }
        let warmup = self.warmup();
        if !(0.0..horizon).contains(&warmup) {
            return fail("warmup must lie in [0, horizon)");
        }
        if self.validation_days == 0 {
            return fail("validation_days must be positive");
        }
        crate::gprs::gprs_cell(&self.gprs).map_err(|e| ConfigError::Scenario(e.to_string()))?;
        crate::lte::lte_cell(&self.lte).map_err(|e| ConfigError::Scenario(e.to_string()))?;
        Ok(())
    }
}

pub fn parse_config_file(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut s = Scenario::default();
    let mut section = String::from("scenario");
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Malformed { line, text: raw.to_owned() })?
                .trim()
                .to_ascii_lowercase();
            if !matches!(name.as_str(), "scenario" | "access" | "gprs" | "lte" | "output") {
                return Err(ConfigError::UnknownSection { line, section: name });
            }
            section = name;
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Malformed { line, text: raw.to_owned() })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Malformed { line, text: raw.to_owned() });
        }
        apply(&mut s, &section, &key, value, line)?;
    }
    s.validate()?;
    Ok(s)
}

struct Field<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

impl Field<'_> {
    fn err(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: self.line,
            key: self.key.to_owned(),
            reason: reason.into(),
        }
    }

    fn parse<T: FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.value.parse::<T>().map_err(|e| self.err(e.to_string()))
    }

    fn list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let items: Result<Vec<T>, _> = self
            .value
            .split(',')
            .map(|v| v.trim().parse::<T>().map_err(|e| self.err(format!("`{}`: {e}", v.trim()))))
            .collect();
        let items = items?;
        if items.is_empty() {
            return Err(self.err("empty list"));
        }
        Ok(items)
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse()?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("{v} must be positive")))
        }
    }

    fn count(&self) -> Result<u32, ConfigError> {
        let v: u32 = self.parse()?;
        if v > 0 {
            Ok(v)
        } else {
            Err(self.err("must be positive"))
        }
    }

    fn probability(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse()?;
        if (0.0..1.0).contains(&v) {
            Ok(v)
        } else {
            Err(self.err(format!("{v} outside [0, 1)")))
        }
    }

    fn flag(&self) -> Result<bool, ConfigError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.err("expected true or false")),
        }
    }
}

fn apply(s: &mut Scenario, section: &str, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    let f = Field { key, value, line };
    match (section, key) {
        ("scenario", "name") => s.name = value.to_owned(),
        ("scenario", "technology") => s.technology = f.parse()?,
        ("scenario", "bandwidth") | ("lte", "bandwidth") => {
            s.lte.bandwidth = value.parse::<Bandwidth>().map_err(|e| f.err(e.to_string()))?
        }
        ("scenario", "n_sm") => s.n_sm = f.list()?,
        ("scenario", "ri") => {
            s.ri = f.list::<ReportingInterval>()?;
        }
        ("scenario", "esm_penetration") => {
            let v: Vec<f64> = f.list()?;
            if let Some(bad) = v.iter().find(|p| !(0.0..=100.0).contains(*p)) {
                return Err(f.err(format!("penetration {bad} outside [0, 100]")));
            }
            s.esm_penetration = v;
        }
        ("scenario", "rs") => {
            let v: Vec<u32> = f.list()?;
            if v.contains(&0) {
                return Err(f.err("report size must be positive"));
            }
            s.rs = v;
        }
        ("scenario", "seed") => s.seed = f.parse()?,
        ("scenario", "replications") => s.replications = f.count()? as usize,
        ("scenario", "horizon") => s.horizon = Some(f.positive()?),
        ("scenario", "warmup") => {
            let v: f64 = f.parse()?;
            if !(v >= 0.0) {
                return Err(f.err("warmup must be non-negative"));
            }
            s.warmup = Some(v);
        }
        ("scenario", "mode") => s.mode = f.parse()?,
        ("scenario", "d_only") => s.d_only = f.parse()?,
        ("scenario", "sm_background") => s.sm_background = f.flag()?,

        ("access", "p_control_error") => {
            let p = f.probability()?;
            s.gprs.p_control_error = p;
            s.lte.p_control_error = p;
        }
        ("access", "p_data_error") => {
            let p = f.probability()?;
            s.gprs.p_data_error = p;
            s.lte.p_data_error = p;
        }
        ("gprs", "max_retransmissions") => s.gprs.max_retransmissions = f.parse()?,
        ("lte", "max_retransmissions") => s.lte.max_retransmissions = f.parse()?,
        ("gprs", "backoff_window") => s.gprs.backoff_window = f.positive()?,
        ("lte", "backoff_window") => s.lte.backoff_window = f.positive()?,
        ("gprs", "grant_timeout") => s.gprs.grant_timeout = f.positive()?,
        ("lte", "grant_timeout") => s.lte.grant_timeout = f.positive()?,
        ("gprs", "grant_queue_capacity") => s.gprs.grant_queue_capacity = f.count()? as usize,
        ("lte", "grant_queue_capacity") => s.lte.grant_queue_capacity = f.count()? as usize,
        ("gprs", "p_control_error") => s.gprs.p_control_error = f.probability()?,
        ("gprs", "p_data_error") => s.gprs.p_data_error = f.probability()?,
        ("lte", "p_control_error") => s.lte.p_control_error = f.probability()?,
        ("lte", "p_data_error") => s.lte.p_data_error = f.probability()?,

        ("gprs", "rao_rate") => s.gprs.rao_rate = f.positive()?,
        ("gprs", "agch_rate") => s.gprs.agch_rate = f.positive()?,
        ("gprs", "n_pdch") => s.gprs.n_pdch = f.count()?,
        ("gprs", "usf_per_pdch") => s.gprs.usf_per_pdch = f.count()?,
        ("gprs", "per_pdch_rate") => s.gprs.per_pdch_rate = f.positive()?,
        ("gprs", "block_period") => s.gprs.block_period = f.positive()?,

        ("lte", "prach_period") => s.lte.prach_period = f.positive()?,
        ("lte", "n_preambles") => s.lte.n_preambles = f.count()?,
        ("lte", "rar_grant_budget") => s.lte.rar_grant_budget = f.positive()?,
        ("lte", "response_window") => s.lte.response_window = f.positive()?,
        ("lte", "identifier_limit") => s.lte.identifier_limit = f.count()? as usize,
        ("lte", "rar_to_msg3") => s.lte.rar_to_msg3 = f.positive()?,
        ("lte", "msg3_to_msg4") => s.lte.msg3_to_msg4 = f.positive()?,
        ("lte", "contention_resolution_timeout") => s.lte.contention_resolution_timeout = f.positive()?,
        ("lte", "msg3_max_transmissions") => s.lte.msg3_max_transmissions = f.count()?,
        ("lte", "msg3_harq_rtt") => s.lte.msg3_harq_rtt = f.positive()?,
        ("lte", "msg3_prbs") => s.lte.msg3_prbs = f.count()?,

        ("output", "traffic_validation") => s.traffic_validation = f.flag()?,
        ("output", "validation_days") => s.validation_days = f.count()?,

        _ => {
            return Err(ConfigError::UnknownKey {
                line,
                section: section.to_owned(),
                key: key.to_owned(),
            })
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let s = parse_config("technology=gprs").unwrap();
        assert_eq!(s.technology, RadioTech::Gprs);
        assert_eq!(s.n_sm, vec![4500]);
        assert_eq!(s.gprs.p_control_error, 0.01);
        assert_eq!(s.gprs.p_data_error, 0.1);
        assert_eq!(s.replications, 10);
        assert_eq!(s.horizon(), 7200.0);
        assert_eq!(s.warmup(), 720.0);
    }

    #[test]
    fn penetration_list() {
        let s = parse_config("technology = lte\nesm_penetration=0,2,5,10,20,30\n").unwrap();
        assert_eq!(s.esm_penetration.len(), 6);
        assert_eq!(s.horizon(), 600.0);
    }

    #[test]
    fn out_of_range_probability() {
        let e = parse_config("technology=gprs\n[access]\np_data_error=1.5").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 3, ref key, .. } if key == "p_data_error"), "{e}");
    }

    #[test]
    fn sections_comments_and_lists() {
        let text = "# reference cell\nname = fig\ntechnology = lte # inline\n\n[lte]\nbandwidth = 10MHz\n[scenario]\nri = default, 300, 15\nrs = 3848,400,115\n[output]\ntraffic_validation = yes\n";
        let s = parse_config(text).unwrap();
        assert_eq!(s.lte.bandwidth, Bandwidth::Mhz10);
        assert_eq!(s.ri.len(), 3);
        assert_eq!(s.rs, vec![3848, 400, 115]);
        assert!(s.traffic_validation);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        assert!(matches!(
            parse_config("technology=gprs\nfoo=1").unwrap_err(),
            ConfigError::UnknownKey { line: 2, .. }
        ));
        assert!(matches!(
            parse_config("\n\n[radio]").unwrap_err(),
            ConfigError::UnknownSection { line: 3, .. }
        ));
        assert!(matches!(
            parse_config("technology gprs").unwrap_err(),
            ConfigError::Malformed { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("ri = 120").unwrap_err(),
            ConfigError::Invalid { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("esm_penetration = 0, 101").unwrap_err(),
            ConfigError::Invalid { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("[gprs]\nn_pdch = 9").unwrap_err(),
            ConfigError::Scenario(_)
        ));
    }
}
