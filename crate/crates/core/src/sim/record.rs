use serde::{Deserialize, Serialize};

use super::analyzer::AnalyzerSetting;

/// Counts collected at one analyzer setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: AnalyzerSetting,
    pub singles_s: u64,
    pub singles_i: u64,
    pub coincidences: u64,
    /// Delayed-window (next pulse) coincidences.
    pub accidentals: u64,
    pub pulses: u64,
    /// s
    pub duration: f64,
    /// Coincidence window, s.
    pub window: f64,
    /// dB
    pub channel_loss_s: f64,
    /// dB
    pub channel_loss_i: f64,
}

impl CountRecord {
    pub fn empty(setting: AnalyzerSetting) -> Self {
        Self {
            setting,
            singles_s: 0,
            singles_i: 0,
            coincidences: 0,
            accidentals: 0,
            pulses: 0,
            duration: 0.0,
            window: 0.4e-9,
            channel_loss_s: 0.0,
            channel_loss_i: 0.0,
        }
    }

    /// Background-subtracted coincidences, clamped at zero.
    pub fn net_coincidences(&self) -> u64 {
        self.coincidences.saturating_sub(self.accidentals)
    }

    pub fn coincidence_rate(&self) -> f64 {
        self.coincidences as f64 / self.duration
    }
}
