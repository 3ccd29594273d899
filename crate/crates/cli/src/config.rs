//! TOML experiment configuration.
//!
//! The file mirrors the core parameter structs (`[pump]`, `[sfwm]`,
//! `[apparatus]` with its two detectors) plus runner-only tables. Unknown keys
//! are rejected; both syntax and range errors name the offending line.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use entangle_core::analysis::{calibrate_noise, peak_matched_dark_rates, CarModel};
use entangle_core::sim::Apparatus;
use entangle_core::source::{channel_pair_for, ChannelPair, PumpConfig, SfwmConfig, SourceConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PAPER_DEFAULTS: &str = include_str!("../configs/paper-defaults.toml");
pub const MIXED_STATE: &str = include_str!("../configs/mixed-state.toml");
pub const IDEAL: &str = include_str!("../configs/ideal.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used when `--seed` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Used when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Channel pairs in the `C31-C37` notation, symmetric about the pump.
    #[serde(default = "default_pairs")]
    pub channel_pairs: Vec<String>,
    pub pump: PumpConfig,
    pub sfwm: SfwmConfig,
    pub apparatus: Apparatus,
    #[serde(default)]
    pub timebin: TimebinSetup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub durations: Durations,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_pairs() -> Vec<String> {
    vec!["C31-C37".into(), "C32-C36".into(), "C30-C38".into()]
}

/// Differences of the time-bin setup from the polarization one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimebinSetup {
    /// Replaces `sfwm.white_noise` for time-bin runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub white_noise: Option<f64>,
    /// Multiplies both detector dark rates (after calibration).
    #[serde(default = "one")]
    pub dark_scale: f64,
}

impl Default for TimebinSetup {
    fn default() -> Self {
        Self {
            white_noise: None,
            dark_scale: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Solves for the Raman coefficient (and optionally the background rates)
/// from a CAR anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub target_car: f64,
    /// W
    pub target_power: f64,
    #[serde(default = "first_pair")]
    pub pair: String,
    /// Place the CAR maximum at `target_power` by setting the dark rates.
    #[serde(default)]
    pub peak_matched_darks: bool,
    #[serde(default)]
    pub model: CarModel,
}

fn first_pair() -> String {
    "C31-C37".into()
}

/// Integration time per analyzer setting, s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Durations {
    #[serde(default = "Durations::fringe")]
    pub fringe: f64,
    #[serde(default = "Durations::short")]
    pub table: f64,
    #[serde(default = "Durations::short")]
    pub car: f64,
    #[serde(default = "Durations::short")]
    pub chsh: f64,
    #[serde(default = "Durations::short")]
    pub tomography: f64,
}

impl Durations {
    fn fringe() -> f64 {
        60.0
    }
    fn short() -> f64 {
        30.0
    }
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            fringe: 60.0,
            table: 30.0,
            car: 30.0,
            chsh: 30.0,
            tomography: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Pump powers of the CAR sweep, W.
    #[serde(default = "Sweep::powers")]
    pub car_powers: Vec<f64>,
    /// Analyzer values per fringe period.
    #[serde(default = "Sweep::points")]
    pub fringe_points: usize,
    #[serde(default = "Sweep::resamples")]
    pub bootstrap_resamples: usize,
    /// CAR points integrate at least `durations.car` and long enough to
    /// expect this many accidentals (0 disables).
    #[serde(default)]
    pub car_min_accidentals: f64,
}

impl Sweep {
    fn powers() -> Vec<f64> {
        vec![5e-6, 10e-6, 20e-6, 50e-6, 100e-6, 200e-6]
    }
    fn points() -> usize {
        24
    }
    fn resamples() -> usize {
        200
    }
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            car_powers: Self::powers(),
            fringe_points: Self::points(),
            bootstrap_resamples: Self::resamples(),
            car_min_accidentals: 0.0,
        }
    }
}

/// Load or validation failure, with the 1-based line it refers to when known.
#[derive(Debug)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.origin, line, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, span: Range<usize>) -> usize {
    let end = span.start.min(text.len());
    text[..end].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the deepest key along `path` that exists in the document.
/// Line of the key at `path`. When `path` ends at a table and `message`
/// names one of its keys (searching one level of subtables too), the line
/// of that key is returned instead.
fn locate(text: &str, path: &[&str], message: &str) -> Option<usize> {
    let doc = toml::de::DeTable::parse(text).ok()?;
    let mut table = doc.get_ref();
    let mut found = None;
    let mut at_table = false;
    for key in path {
        let (k, v) = table.iter().find(|(k, _)| k.get_ref().as_ref() == *key)?;
        found = Some(k.span());
        at_table = false;
        match v.get_ref() {
            toml::de::DeValue::Table(t) => {
                table = t;
                at_table = true;
            }
            _ => break,
        }
    }
    if at_table {
        let subtables = table.iter().filter_map(|(_, v)| match v.get_ref() {
            toml::de::DeValue::Table(t) => Some(t),
            _ => None,
        });
        let named = std::iter::once(table).chain(subtables).find_map(|t| {
            t.iter()
                .find(|(k, _)| names_key(message, k.get_ref()))
                .map(|(k, _)| k.span())
        });
        found = named.or(found);
    }
    found.map(|s| line_of(text, s))
}

fn names_key(message: &str, key: &str) -> bool {
    let ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    message.match_indices(key).any(|(i, _)| {
        let before = message[..i].chars().next_back().is_none_or(|c| !ident(c));
        let after = message[i + key.len()..]
            .chars()
            .next()
            .is_none_or(|c| !ident(c));
        before && after
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError {
            origin: origin.to_string(),
            line: e.span().map(|s| line_of(text, s)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|(path, message)| ConfigError {
            origin: origin.to_string(),
            line: locate(text, &path, &message),
            message: format!("[{}] {message}", path.join(".")),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(Self::from_toml(&text, &path.display().to_string())?)
    }

    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let text = match name {
            "paper-defaults" => PAPER_DEFAULTS,
            "mixed-state" => MIXED_STATE,
            "ideal" => IDEAL,
            other => anyhow::bail!(
                "unknown preset `{other}` (expected paper-defaults, mixed-state or ideal)"
            ),
        };
        Ok(Self::from_toml(text, &format!("preset:{name}"))?)
    }

    /// Range checks, each failure tagged with the key path it concerns.
    pub fn validate(&self) -> Result<(), (Vec<&'static str>, String)> {
        let at = |path: &[&'static str]| {
            let path = path.to_vec();
            move |e: entangle_core::Error| (path, e.to_string())
        };
        self.pump.validate().map_err(at(&["pump"]))?;
        self.sfwm.validate().map_err(at(&["sfwm"]))?;
        self.apparatus
            .detector_s
            .validate()
            .map_err(at(&["apparatus", "detector_s"]))?;
        self.apparatus
            .detector_i
            .validate()
            .map_err(at(&["apparatus", "detector_i"]))?;
        self.apparatus.validate().map_err(at(&["apparatus"]))?;
        if self.channel_pairs.is_empty() {
            return Err((
                vec!["channel_pairs"],
                "at least one channel pair is required".into(),
            ));
        }
        for label in &self.channel_pairs {
            parse_pair(label, self.pump.itu_channel()).map_err(|m| (vec!["channel_pairs"], m))?;
        }
        if let Some(w) = self.timebin.white_noise {
            if !(0.0..=1.0).contains(&w) {
                return Err((vec!["timebin", "white_noise"], "must lie in [0, 1]".into()));
            }
        }
        if !(self.timebin.dark_scale >= 0.0 && self.timebin.dark_scale.is_finite()) {
            return Err((
                vec!["timebin", "dark_scale"],
                "must be finite and >= 0".into(),
            ));
        }
        if let Some(c) = &self.calibration {
            if !(c.target_car > 1.0 && c.target_car.is_finite()) {
                return Err((vec!["calibration", "target_car"], "must be > 1".into()));
            }
            if !(c.target_power > 0.0 && c.target_power.is_finite()) {
                return Err((vec!["calibration", "target_power"], "must be > 0".into()));
            }
            parse_pair(&c.pair, self.pump.itu_channel())
                .map_err(|m| (vec!["calibration", "pair"], m))?;
        }
        let d = &self.durations;
        if ![d.fringe, d.table, d.car, d.chsh, d.tomography]
            .iter()
            .all(|t| *t > 0.0 && t.is_finite())
        {
            return Err((vec!["durations"], "durations must be > 0 s".into()));
        }
        if self.sweep.car_powers.is_empty()
            || self
                .sweep
                .car_powers
                .iter()
                .any(|p| !(*p > 0.0 && p.is_finite()))
        {
            return Err((vec!["sweep", "car_powers"], "powers must be > 0 W".into()));
        }
        if self.sweep.fringe_points < 6 {
            return Err((
                vec!["sweep", "fringe_points"],
                "need at least 6 points".into(),
            ));
        }
        if !(self.sweep.car_min_accidentals >= 0.0 && self.sweep.car_min_accidentals.is_finite()) {
            return Err((
                vec!["sweep", "car_min_accidentals"],
                "must be finite and >= 0".into(),
            ));
        }
        if self.sweep.bootstrap_resamples < 100 {
            return Err((
                vec!["sweep", "bootstrap_resamples"],
                "need at least 100 resamples".into(),
            ));
        }
        Ok(())
    }

    /// Canonical TOML text; loading it again gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn pairs(&self) -> Vec<ChannelPair> {
        let pump = self.pump.itu_channel();
        self.channel_pairs
            .iter()
            .map(|l| parse_pair(l, pump).expect("validated on load"))
            .collect()
    }

    pub fn pair(&self, label: &str) -> anyhow::Result<ChannelPair> {
        parse_pair(label, self.pump.itu_channel()).map_err(anyhow::Error::msg)
    }

    /// Applies the calibration block and the time-bin overrides.
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let mut source = SourceConfig {
            pump: self.pump.clone(),
            sfwm: self.sfwm.clone(),
        };
        let mut apparatus = self.apparatus.clone();
        let mut report = None;
        if let Some(cal) = &self.calibration {
            let pair = self.pair(&cal.pair)?;
            if cal.peak_matched_darks {
                let (ds, di) =
                    peak_matched_dark_rates(&source, &pair, &apparatus, cal.target_power);
                apparatus.detector_s.dark_rate = ds;
                apparatus.detector_i.dark_rate = di;
            }
            let uniform = source.sfwm.channel_noise.is_empty();
            let coeff = calibrate_noise(
                cal.target_car,
                cal.target_power,
                &mut source,
                &pair,
                &apparatus,
                cal.model,
            )?;
            if uniform {
                source.sfwm.set_uniform_noise(coeff);
            }
            report = Some(CalibrationReport {
                noise_coeff: coeff,
                dark_rate_s: apparatus.detector_s.dark_rate,
                dark_rate_i: apparatus.detector_i.dark_rate,
            });
        }
        let mut timebin_source = source.clone();
        if let Some(w) = self.timebin.white_noise {
            timebin_source.sfwm.white_noise = w;
        }
        let mut timebin_apparatus = apparatus.clone();
        timebin_apparatus.detector_s.dark_rate *= self.timebin.dark_scale;
        timebin_apparatus.detector_i.dark_rate *= self.timebin.dark_scale;
        Ok(Resolved {
            source,
            apparatus,
            timebin_source,
            timebin_apparatus,
            pairs: self.pairs(),
            calibration: report,
        })
    }
}

/// Parses `C31-C37` (either order) into a pair symmetric about `pump_channel`.
pub fn parse_pair(label: &str, pump_channel: i64) -> Result<ChannelPair, String> {
    let bad = || format!("channel pair `{label}` is not of the form C31-C37");
    let (a, b) = label.trim().split_once('-').ok_or_else(bad)?;
    let num = |s: &str| {
        s.trim()
            .strip_prefix(['C', 'c'])
            .and_then(|n| n.parse::<i64>().ok())
            .ok_or_else(bad)
    };
    let (a, b) = (num(a)?, num(b)?);
    let (lo, hi) = (a.min(b), a.max(b));
    if lo + hi != 2 * pump_channel {
        return Err(format!(
            "channel pair `{label}` is not symmetric about the pump channel C{pump_channel}"
        ));
    }
    channel_pair_for(pump_channel, (hi - lo) / 2).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// Raman coefficient, photons per pulse per W.
    pub noise_coeff: f64,
    /// counts/s
    pub dark_rate_s: f64,
    pub dark_rate_i: f64,
}

/// Configuration after calibration, ready for simulation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub source: SourceConfig,
    pub apparatus: Apparatus,
    pub timebin_source: SourceConfig,
    pub timebin_apparatus: Apparatus,
    pub pairs: Vec<ChannelPair>,
    pub calibration: Option<CalibrationReport>,
}

impl Resolved {
    pub fn setup(&self, kind: entangle_core::source::SourceKind) -> (&SourceConfig, &Apparatus) {
        match kind {
            entangle_core::source::SourceKind::Polarization => (&self.source, &self.apparatus),
            entangle_core::source::SourceKind::TimeBin => {
                (&self.timebin_source, &self.timebin_apparatus)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_and_roundtrip() {
        for name in ["paper-defaults", "mixed-state", "ideal"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let again = ExperimentConfig::from_toml(&cfg.to_toml(), "roundtrip").unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(cfg.hash(), again.hash());
        }
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = PAPER_DEFAULTS.replacen("[pump]", "[pump]\nbogus_key = 1", 1);
        let err = ExperimentConfig::from_toml(&text, "x.toml").unwrap_err();
        let expected = text
            .lines()
            .position(|l| l.starts_with("bogus_key"))
            .unwrap()
            + 1;
        assert_eq!(err.line, Some(expected));
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn range_error_points_at_key() {
        let text = PAPER_DEFAULTS.replacen("efficiency = 0.15", "efficiency = -0.15", 1);
        let err = ExperimentConfig::from_toml(&text, "x.toml").unwrap_err();
        let line = err.line.unwrap();
        assert!(
            text.lines().nth(line - 1).unwrap().contains("-0.15"),
            "{err}"
        );
        assert!(err.message.contains("efficiency"));

        let text =
            PAPER_DEFAULTS.replacen("boundary_efficiency = 0.9", "boundary_efficiency = 1.5", 1);
        let err = ExperimentConfig::from_toml(&text, "x.toml").unwrap_err();
        assert!(
            text.lines()
                .nth(err.line.unwrap() - 1)
                .unwrap()
                .starts_with("boundary_efficiency"),
            "{err}"
        );
    }

    #[test]
    fn pair_labels() {
        let p = parse_pair("C37-C31", 34).unwrap();
        assert_eq!(p.detuning_k, 3);
        assert_eq!(p.label(), "C31-C37");
        assert!(parse_pair("C31-C36", 34).is_err());
        assert!(parse_pair("31-37", 34).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::preset("paper-defaults").unwrap();
        let mut b = a.clone();
        b.pump.average_power *= 2.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
