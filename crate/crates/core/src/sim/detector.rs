use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DetectorMode {
    /// Opened once per pump pulse (and time slot) for `gate_width` seconds.
    Gated {
        gate_width: f64,
    },
    FreeRunning,
}

/// Click detector: no photon-number resolution, non-paralyzable dead time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Effective dark/background count rate, counts/s.
    pub dark_rate: f64,
    /// s
    #[serde(default)]
    pub dead_time: f64,
    pub mode: DetectorMode,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            dead_time: 0.0,
            mode: DetectorMode::FreeRunning,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidConfig(format!(
                "detector efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "detector dark_rate must be >= 0".into(),
            ));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::InvalidConfig(
                "detector dead_time must be >= 0".into(),
            ));
        }
        if let DetectorMode::Gated { gate_width } = self.mode {
            if !(gate_width > 0.0 && gate_width.is_finite()) {
                return Err(Error::InvalidConfig(
                    "detector gate_width must be > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Mean dark counts inside one detection window (gate, or the coincidence
    /// window for a free-running detector).
    pub fn dark_per_window(&self, coincidence_window: f64) -> f64 {
        self.dark_rate * self.window_width(coincidence_window)
    }

    /// Time over which dark counts can land in one slot, s.
    pub fn window_width(&self, coincidence_window: f64) -> f64 {
        match self.mode {
            DetectorMode::Gated { gate_width } => gate_width,
            DetectorMode::FreeRunning => coincidence_window,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_window_depends_on_mode() {
        let gated = DetectorModel {
            efficiency: 0.15,
            dark_rate: 1e5,
            dead_time: 0.0,
            mode: DetectorMode::Gated { gate_width: 1e-9 },
        };
        assert!((gated.dark_per_window(0.4e-9) - 1e-4).abs() < 1e-18);
        let free = DetectorModel {
            mode: DetectorMode::FreeRunning,
            ..gated
        };
        assert!((free.dark_per_window(0.4e-9) - 4e-5).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_efficiency() {
        let mut d = DetectorModel::ideal();
        d.efficiency = -0.1;
        assert!(d.validate().is_err());
        d.efficiency = 0.2;
        d.dead_time = -1.0;
        assert!(d.validate().is_err());
    }
}
