//! Entangled-state construction and the stochastic emission model of a
//! fiber SFWM pair source: pair and noise rates versus pump power and the
//! DWDM channel plan.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{density_from_pure, DensityMatrix, PureState2Q};
use crate::scalar::Real;

pub const ITU_MIN_CHANNEL: i64 = 1;
pub const ITU_MAX_CHANNEL: i64 = 72;
/// Grid anchor and spacing of the 100 GHz ITU plan, in THz.
pub const ITU_ANCHOR_THZ: f64 = 190.0;
pub const ITU_SPACING_THZ: f64 = 0.1;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Entanglement degree of freedom carried by the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Polarization,
    TimeBin,
}

impl std::str::FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polarization" | "pol" => Ok(Self::Polarization),
            "timebin" | "time-bin" | "tb" => Ok(Self::TimeBin),
            other => Err(Error::InvalidConfig(format!(
                "unknown source kind `{other}`"
            ))),
        }
    }
}

impl SourceKind {
    /// Pairs per pump period relative to [`pair_rate`]. The pump interferometer
    /// of the time-bin source splits each pulse into two of half the energy,
    /// and the pair yield is quadratic in pulse energy: 2·(1/2)² = 1/2.
    pub fn pair_yield_factor(self) -> f64 {
        match self {
            Self::Polarization => 1.0,
            Self::TimeBin => 0.5,
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Polarization => "polarization",
            Self::TimeBin => "timebin",
        })
    }
}

/// Mode-locked pump laser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    /// nm
    #[serde(default = "PumpConfig::default_wavelength")]
    pub center_wavelength: f64,
    /// Hz
    #[serde(default = "PumpConfig::default_rep_rate")]
    pub repetition_rate: f64,
    /// s
    #[serde(default = "PumpConfig::default_pulse_width")]
    pub pulse_width: f64,
    /// W
    pub average_power: f64,
}

impl PumpConfig {
    fn default_wavelength() -> f64 {
        1550.1
    }
    fn default_rep_rate() -> f64 {
        27.9e6
    }
    fn default_pulse_width() -> f64 {
        25e-12
    }

    pub fn with_power(power: f64) -> Self {
        Self {
            center_wavelength: Self::default_wavelength(),
            repetition_rate: Self::default_rep_rate(),
            pulse_width: Self::default_pulse_width(),
            average_power: power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.center_wavelength,
            self.repetition_rate,
            self.pulse_width,
            self.average_power,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(Error::InvalidConfig(
                "pump parameters must be finite and strictly positive".into(),
            ));
        }
        if self.pulse_width * self.repetition_rate >= 1.0 {
            return Err(Error::InvalidConfig(
                "pump duty cycle pulse_width * repetition_rate must be < 1".into(),
            ));
        }
        Ok(())
    }

    /// s
    pub fn period(&self) -> f64 {
        1.0 / self.repetition_rate
    }

    /// THz
    pub fn frequency_thz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.center_wavelength * 1e-9) / 1e12
    }

    /// Nearest grid channel to the pump wavelength.
    pub fn itu_channel(&self) -> i64 {
        ((self.frequency_thz() - ITU_ANCHOR_THZ) / ITU_SPACING_THZ).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelNoise {
    pub channel: i64,
    /// noise photons per pulse per W
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningEfficiency {
    pub detuning: i64,
    pub efficiency: f64,
}

/// Nonlinear-process parameters of the fiber source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfwmConfig {
    /// Amplitude ratio of the `|VV⟩` to `|HH⟩` term.
    #[serde(default = "one")]
    pub eta: f64,
    /// Relative phase of the `|VV⟩` term, rad.
    #[serde(default)]
    pub delta: f64,
    /// Pump interferometer phase (time-bin mode), rad.
    #[serde(default)]
    pub phi_p: f64,
    /// Fraction of the two-photon coherence retained (1 = pure state,
    /// 0 = incoherent mixture of the two emission paths).
    #[serde(default = "one")]
    pub coherence: f64,
    /// Weight of the maximally mixed state admixed to every emitted pair,
    /// lumping residual distinguishability and interferometer imperfections.
    #[serde(default)]
    pub white_noise: f64,
    /// Pair coefficient κ in μ = κ P², pairs per pulse per W².
    pub kappa: f64,
    /// Default Raman noise coefficient for every channel, photons per pulse per W.
    #[serde(default)]
    pub noise_coeff: f64,
    /// Per-channel overrides of `noise_coeff`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_noise: Vec<ChannelNoise>,
    /// Channel pairs with detuning at or beyond this see `boundary_efficiency`.
    #[serde(default = "SfwmConfig::default_boundary_detuning")]
    pub boundary_detuning: i64,
    #[serde(default = "SfwmConfig::default_boundary_efficiency")]
    pub boundary_efficiency: f64,
    /// Explicit per-detuning spectral efficiencies; take precedence over the boundary rule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_efficiency: Vec<DetuningEfficiency>,
}

fn one() -> f64 {
    1.0
}

impl SfwmConfig {
    fn default_boundary_detuning() -> i64 {
        4
    }
    fn default_boundary_efficiency() -> f64 {
        0.6
    }

    /// Maximally entangled defaults with the pair coefficient and no noise.
    pub fn ideal(kappa: f64) -> Self {
        Self {
            eta: 1.0,
            delta: 0.0,
            phi_p: 0.0,
            coherence: 1.0,
            white_noise: 0.0,
            kappa,
            noise_coeff: 0.0,
            channel_noise: Vec::new(),
            boundary_detuning: Self::default_boundary_detuning(),
            boundary_efficiency: Self::default_boundary_efficiency(),
            pair_efficiency: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("sfwm.eta must be finite and >= 0");
        }
        if !self.delta.is_finite() || !self.phi_p.is_finite() {
            return bad("sfwm phases must be finite");
        }
        if !(0.0..=1.0).contains(&self.coherence) {
            return bad("sfwm.coherence must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.white_noise) {
            return bad("sfwm.white_noise must lie in [0, 1]");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("sfwm.kappa must be finite and >= 0");
        }
        if !(self.noise_coeff >= 0.0 && self.noise_coeff.is_finite()) {
            return bad("sfwm.noise_coeff must be finite and >= 0");
        }
        if self.channel_noise.iter().any(|n| !(n.coeff >= 0.0)) {
            return bad("sfwm.channel_noise coefficients must be >= 0");
        }
        let eff_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eff_ok(self.boundary_efficiency) {
            return bad("sfwm.boundary_efficiency must lie in [0, 1]");
        }
        if self.pair_efficiency.iter().any(|p| !eff_ok(p.efficiency)) {
            return bad("sfwm.pair_efficiency entries must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn noise_coeff_for(&self, channel: i64) -> f64 {
        self.channel_noise
            .iter()
            .find(|n| n.channel == channel)
            .map_or(self.noise_coeff, |n| n.coeff)
    }

    /// Spectral roll-off factor for a channel pair `detuning` channels from the pump.
    pub fn pair_efficiency_for(&self, detuning: i64) -> f64 {
        if let Some(p) = self.pair_efficiency.iter().find(|p| p.detuning == detuning) {
            return p.efficiency;
        }
        if detuning.abs() >= self.boundary_detuning {
            self.boundary_efficiency
        } else {
            1.0
        }
    }

    /// Sets the same noise coefficient for every channel.
    pub fn set_uniform_noise(&mut self, coeff: f64) {
        self.noise_coeff = coeff;
        self.channel_noise.clear();
    }
}

/// Complete description of the emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub pump: PumpConfig,
    pub sfwm: SfwmConfig,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.sfwm.validate()
    }

    /// Emitted two-photon state. `phi_p` overrides the configured pump
    /// interferometer phase for time-bin sources.
    pub fn emitted_state(&self, kind: SourceKind, phi_p: Option<f64>) -> DensityMatrix<f64> {
        let pure = match kind {
            SourceKind::Polarization => polarization_state(self.sfwm.eta, self.sfwm.delta),
            SourceKind::TimeBin => timebin_state(phi_p.unwrap_or(self.sfwm.phi_p)),
        };
        let rho = dephase(&density_from_pure(&pure), self.sfwm.coherence);
        if self.sfwm.white_noise > 0.0 {
            DensityMatrix::mix(
                self.sfwm.white_noise,
                &DensityMatrix::maximally_mixed(),
                &rho,
            )
        } else {
            rho
        }
    }
}

/// Scales the `|00⟩⟨11|` coherences (the only ones the sources populate) by `coherence`.
pub fn dephase<T: Real>(rho: &DensityMatrix<T>, coherence: T) -> DensityMatrix<T> {
    let mut m = rho.matrix().clone();
    for (i, j) in [(0, 3), (3, 0)] {
        m[(i, j)] = m[(i, j)] * coherence;
    }
    DensityMatrix::from_matrix(m)
}

/// `(|HH⟩ + η e^{iδ}|VV⟩)/√(1+η²)`.
pub fn polarization_state<T: Real>(eta: T, delta: T) -> PureState2Q<T> {
    let z = Complex::new(T::zero(), T::zero());
    PureState2Q::new([
        Complex::new(T::one(), T::zero()),
        z,
        z,
        Complex::from_polar(eta, delta),
    ])
    .expect("|HH> amplitude is always 1")
}

/// `(|SS⟩ − e^{2iφ_p}|LL⟩)/√2`.
pub fn timebin_state<T: Real>(phi_p: T) -> PureState2Q<T> {
    let z = Complex::new(T::zero(), T::zero());
    let two = T::one() + T::one();
    PureState2Q::new([
        Complex::new(T::one(), T::zero()),
        z,
        z,
        -Complex::from_polar(T::one(), two * phi_p),
    ])
    .expect("|SS> amplitude is always 1")
}

/// Centre frequency of a 100 GHz grid channel, THz.
pub fn itu_frequency(channel: i64) -> Result<f64> {
    if !(ITU_MIN_CHANNEL..=ITU_MAX_CHANNEL).contains(&channel) {
        return Err(Error::ChannelOutOfGrid(channel));
    }
    Ok(ITU_ANCHOR_THZ + ITU_SPACING_THZ * channel as f64)
}

/// Signal/idler channels placed symmetrically about the pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPair {
    pub pump_channel: i64,
    pub signal_channel: i64,
    pub idler_channel: i64,
    pub detuning_k: i64,
    /// THz
    pub signal_freq: f64,
    /// THz
    pub idler_freq: f64,
}

impl ChannelPair {
    /// Label in the `C31-C37` style, lower channel first.
    pub fn label(&self) -> String {
        let (lo, hi) = if self.idler_channel < self.signal_channel {
            (self.idler_channel, self.signal_channel)
        } else {
            (self.signal_channel, self.idler_channel)
        };
        format!("C{lo}-C{hi}")
    }

    /// Pump frequency implied by energy conservation, THz.
    pub fn pump_freq(&self) -> f64 {
        0.5 * (self.signal_freq + self.idler_freq)
    }
}

pub fn channel_pair_for(pump_channel: i64, k: i64) -> Result<ChannelPair> {
    if k < 1 {
        return Err(Error::InvalidDetuning(k));
    }
    itu_frequency(pump_channel)?;
    let signal_channel = pump_channel + k;
    let idler_channel = pump_channel - k;
    Ok(ChannelPair {
        pump_channel,
        signal_channel,
        idler_channel,
        detuning_k: k,
        signal_freq: itu_frequency(signal_channel)?,
        idler_freq: itu_frequency(idler_channel)?,
    })
}

/// Mean pairs per pulse, μ = κ P² η_spec(k).
pub fn pair_rate(pump: &PumpConfig, cfg: &SfwmConfig, ch: &ChannelPair) -> f64 {
    let p = pump.average_power.max(0.0);
    cfg.kappa * p * p * cfg.pair_efficiency_for(ch.detuning_k)
}

/// Mean photons per pulse, per arm, whose partner falls outside the conjugate
/// channel: κ P² (1 − η_spec(k)). Near the edge of the emission band the two
/// filters stop matching the joint spectrum, so in-band flux stays while the
/// cross-channel correlation drops.
pub fn unpaired_rate(pump: &PumpConfig, cfg: &SfwmConfig, ch: &ChannelPair) -> f64 {
    let p = pump.average_power.max(0.0);
    cfg.kappa * p * p * (1.0 - cfg.pair_efficiency_for(ch.detuning_k))
}

/// Mean Raman noise photons per pulse in one channel, ν = n_ch P.
pub fn noise_rate(pump: &PumpConfig, cfg: &SfwmConfig, channel: i64) -> f64 {
    cfg.noise_coeff_for(channel) * pump.average_power.max(0.0)
}
