//! Monte-Carlo realization of the apparatus plus closed-form expectations.

mod analyzer;
mod detector;
pub mod engine;
mod record;

use serde::{Deserialize, Serialize};

pub use analyzer::{
    analytic_coincidence_prob, analytic_coincidence_prob_mixed, elliptical_polarization,
    noise_slot_probabilities, pair_outcomes, AnalyzerSetting, Outcome, PairOutcomes, Slot,
};
pub use detector::{DetectorMode, DetectorModel};
pub use record::CountRecord;

use crate::error::{Error, Result};
use crate::source::{noise_rate, pair_rate, unpaired_rate, ChannelPair, SourceConfig, SourceKind};
use engine::{run_pulse_train, SlotCounts, StreamEffect, StreamSet, Timing};

/// Everything between the source and the coincidence counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Apparatus {
    /// s
    #[serde(default = "Apparatus::default_window")]
    pub coincidence_window: f64,
    /// Excess channel loss on the signal arm, detector excluded, dB.
    #[serde(default = "Apparatus::default_loss")]
    pub loss_s_db: f64,
    #[serde(default = "Apparatus::default_loss")]
    pub loss_i_db: f64,
    /// Arm imbalance of the analysis interferometers, s.
    #[serde(default = "Apparatus::default_umi_delay")]
    pub umi_delay: f64,
    /// Component loss of each analysis interferometer beyond its intrinsic
    /// output-port split, dB per photon.
    #[serde(default)]
    pub umi_excess_loss_db: f64,
    pub detector_s: DetectorModel,
    pub detector_i: DetectorModel,
}

impl Apparatus {
    fn default_window() -> f64 {
        0.4e-9
    }
    fn default_loss() -> f64 {
        4.0
    }
    fn default_umi_delay() -> f64 {
        1.6e-9
    }

    /// Lossless, noiseless, unit-efficiency apparatus with no dead time.
    pub fn ideal() -> Self {
        Self {
            coincidence_window: Self::default_window(),
            loss_s_db: 0.0,
            loss_i_db: 0.0,
            umi_delay: Self::default_umi_delay(),
            umi_excess_loss_db: 0.0,
            detector_s: DetectorModel::ideal(),
            detector_i: DetectorModel::ideal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector_s.validate()?;
        self.detector_i.validate()?;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.coincidence_window > 0.0 && self.coincidence_window.is_finite()) {
            return Err(Error::InvalidConfig(
                "coincidence_window must be > 0".into(),
            ));
        }
        if !(finite_nonneg(self.loss_s_db)
            && finite_nonneg(self.loss_i_db)
            && finite_nonneg(self.umi_excess_loss_db))
        {
            return Err(Error::InvalidConfig(
                "losses must be finite and >= 0 dB".into(),
            ));
        }
        if !(self.umi_delay > 0.0 && self.umi_delay.is_finite()) {
            return Err(Error::InvalidConfig("umi_delay must be > 0".into()));
        }
        Ok(())
    }

    /// Probability that a photon entering the signal (`arm = 0`) or idler
    /// channel produces a detector click, analyzer excluded.
    pub fn throughput(&self, arm: usize, kind: SourceKind) -> f64 {
        let (loss, det) = if arm == 0 {
            (self.loss_s_db, &self.detector_s)
        } else {
            (self.loss_i_db, &self.detector_i)
        };
        let umi = match kind {
            SourceKind::TimeBin => self.umi_excess_loss_db,
            SourceKind::Polarization => 0.0,
        };
        db_to_transmission(loss + umi) * det.efficiency
    }

    /// Mean dark counts per slot window on each arm.
    pub fn dark_per_window(&self, arm: usize) -> f64 {
        let det = if arm == 0 {
            &self.detector_s
        } else {
            &self.detector_i
        };
        det.dark_per_window(self.coincidence_window)
    }
}

pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Mixes a base seed with an index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Poisson event streams of one pulse for the given configuration.
pub fn build_streams(
    src: &SourceConfig,
    pair: &ChannelPair,
    setting: &AnalyzerSetting,
    app: &Apparatus,
) -> StreamSet {
    let kind = setting.source_kind();
    let rho = src.emitted_state(kind, setting.pump_phase());
    let out = pair_outcomes(&rho, setting);
    let mu = pair_rate(&src.pump, &src.sfwm, pair) * kind.pair_yield_factor();
    // uncorrelated photons from either source behave alike downstream
    let lone = unpaired_rate(&src.pump, &src.sfwm, pair) * kind.pair_yield_factor();
    let nu_s = noise_rate(&src.pump, &src.sfwm, pair.signal_channel) + lone;
    let nu_i = noise_rate(&src.pump, &src.sfwm, pair.idler_channel) + lone;
    let xs = app.throughput(0, kind);
    let xi = app.throughput(1, kind);
    let slots = setting.slot_count();
    let mut streams = StreamSet::new(slots);
    let sig = |a: usize| Some(a as u8);
    for a in 0..slots {
        for b in 0..slots {
            let p = out.joint[a][b];
            streams.push(
                mu * p * xs * xi,
                StreamEffect {
                    signal: sig(a),
                    idler: sig(b),
                },
            );
            streams.push(
                mu * p * xs * (1.0 - xi),
                StreamEffect {
                    signal: sig(a),
                    idler: None,
                },
            );
            streams.push(
                mu * p * (1.0 - xs) * xi,
                StreamEffect {
                    signal: None,
                    idler: sig(b),
                },
            );
        }
    }
    let noise_s = noise_slot_probabilities(setting, 0);
    let noise_i = noise_slot_probabilities(setting, 1);
    for a in 0..slots {
        streams.push(
            mu * out.signal_only[a] * xs,
            StreamEffect {
                signal: sig(a),
                idler: None,
            },
        );
        streams.push(
            mu * out.idler_only[a] * xi,
            StreamEffect {
                signal: None,
                idler: sig(a),
            },
        );
        streams.push(
            nu_s * noise_s[a] * xs,
            StreamEffect {
                signal: sig(a),
                idler: None,
            },
        );
        streams.push(
            nu_i * noise_i[a] * xi,
            StreamEffect {
                signal: None,
                idler: sig(a),
            },
        );
        streams.push(
            app.dark_per_window(0),
            StreamEffect {
                signal: sig(a),
                idler: None,
            },
        );
        streams.push(
            app.dark_per_window(1),
            StreamEffect {
                signal: None,
                idler: sig(a),
            },
        );
    }
    streams
}

/// Dead-time-free per-pulse expectations for the counted slots of `setting`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedClicks {
    pub singles_s: f64,
    pub singles_i: f64,
    pub coincidences: f64,
    pub accidentals: f64,
}

pub fn expected_clicks(
    src: &SourceConfig,
    pair: &ChannelPair,
    setting: &AnalyzerSetting,
    app: &Apparatus,
) -> ExpectedClicks {
    let streams = build_streams(src, pair, setting, app);
    let (a, b) = setting.counted_slots();
    let (ps, pi, pc) = streams.click_probabilities(a, b);
    ExpectedClicks {
        singles_s: ps,
        singles_i: pi,
        coincidences: pc,
        accidentals: ps * pi,
    }
}

fn checked_pulses(src: &SourceConfig, duration: f64) -> Result<u64> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidConfig("duration must be > 0".into()));
    }
    let pulses = (duration * src.pump.repetition_rate).round();
    if pulses < 1.0 {
        return Err(Error::InvalidConfig(
            "duration shorter than one pump period".into(),
        ));
    }
    Ok(pulses as u64)
}

fn validate_all(src: &SourceConfig, app: &Apparatus, setting: &AnalyzerSetting) -> Result<()> {
    src.validate()?;
    app.validate()?;
    if setting.slot_count() > 1 && app.umi_delay <= app.coincidence_window {
        return Err(Error::SlotsUnresolvable {
            delay: app.umi_delay,
            window: app.coincidence_window,
        });
    }
    Ok(())
}

fn run(
    src: &SourceConfig,
    pair: &ChannelPair,
    setting: &AnalyzerSetting,
    app: &Apparatus,
    duration: f64,
    seed: u64,
) -> Result<SlotCounts> {
    validate_all(src, app, setting)?;
    let pulses = checked_pulses(src, duration)?;
    let streams = build_streams(src, pair, setting, app);
    let timing = Timing {
        period: src.pump.period(),
        slot_spacing: app.umi_delay,
        dead_time_s: app.detector_s.dead_time,
        dead_time_i: app.detector_i.dead_time,
    };
    Ok(run_pulse_train(&streams, &timing, pulses, seed))
}

/// Simulates one measurement. Identical inputs and seed give identical output.
pub fn simulate_counts(
    src: &SourceConfig,
    pair: &ChannelPair,
    setting: &AnalyzerSetting,
    app: &Apparatus,
    duration: f64,
    seed: u64,
) -> Result<CountRecord> {
    let counts = run(src, pair, setting, app, duration, seed)?;
    let (a, b) = setting.counted_slots();
    Ok(CountRecord {
        setting: *setting,
        singles_s: counts.singles_s[a],
        singles_i: counts.singles_i[b],
        coincidences: counts.coincidences[a][b],
        accidentals: counts.accidentals[a][b],
        pulses: counts.pulses,
        duration: counts.pulses as f64 * src.pump.period(),
        window: app.coincidence_window,
        channel_loss_s: app.loss_s_db,
        channel_loss_i: app.loss_i_db,
    })
}

/// Coincidences between every pair of arrival slots (early, central, late).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotHistogram {
    pub coincidences: [[u64; 3]; 3],
    pub accidentals: [[u64; 3]; 3],
    pub singles_s: [u64; 3],
    pub singles_i: [u64; 3],
    pub pulses: u64,
}

impl SlotHistogram {
    pub fn total_coincidences(&self) -> u64 {
        self.coincidences.iter().flatten().sum()
    }
}

pub fn timebin_slot_histogram(
    src: &SourceConfig,
    pair: &ChannelPair,
    phases: (f64, f64, f64),
    app: &Apparatus,
    duration: f64,
    seed: u64,
) -> Result<SlotHistogram> {
    let (phi_p, phi_s, phi_i) = phases;
    let setting = AnalyzerSetting::timebin_central(phi_p, phi_s, phi_i);
    let c = run(src, pair, &setting, app, duration, seed)?;
    Ok(SlotHistogram {
        coincidences: c.coincidences,
        accidentals: c.accidentals,
        singles_s: c.singles_s,
        singles_i: c.singles_i,
        pulses: c.pulses,
    })
}
