use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{Error, Result};
use crate::sim::{expected_clicks, AnalyzerSetting, Apparatus, CountRecord};
use crate::source::{noise_rate, pair_rate, unpaired_rate, ChannelPair, SourceConfig, SourceKind};

/// Coincidence-to-accidental ratio `C/A` with Poisson uncertainty.
pub fn compute_car(record: &CountRecord) -> Result<Estimate> {
    if record.accidentals == 0 {
        return Err(Error::CarUndefined);
    }
    let c = record.coincidences as f64;
    let a = record.accidentals as f64;
    if c == 0.0 {
        return Ok(Estimate::new(0.0, 1.0 / a));
    }
    let car = c / a;
    Ok(Estimate::new(car, car * (1.0 / c + 1.0 / a).sqrt()))
}

/// Closed-form CAR of the open (analyzer-free) configuration. Photons without
/// a partner in the conjugate channel count as noise in both forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarModel {
    /// Low-gain form `μ x_s x_i / ((μ+ν_s) x_s + d_s)((μ+ν_i) x_i + d_i)`:
    /// true coincidences over accidentals.
    LowGain,
    /// Exact click probabilities `P(s∧i) / (P(s) P(i))` of the Poisson model,
    /// which is what `compute_car` estimates from simulated records.
    #[default]
    Clicks,
    /// `Clicks` corrected for idler dead time spanning a pump period. An
    /// idler click in pulse t blinds pulse t+1, and that click is more likely
    /// when the signal fired in t, so delayed-window accidentals lose a
    /// fraction `P(i|s) - P(i)`: CAR is multiplied by `1 / (1 - P(i|s) + P(i))`.
    DeadTime,
}

/// Analytic CAR at the source's configured pump power.
pub fn analytic_car(
    src: &SourceConfig,
    pair: &ChannelPair,
    app: &Apparatus,
    model: CarModel,
) -> Result<f64> {
    match model {
        CarModel::LowGain => {
            let mu = pair_rate(&src.pump, &src.sfwm, pair);
            let xs = app.throughput(0, SourceKind::Polarization);
            let xi = app.throughput(1, SourceKind::Polarization);
            let lone = unpaired_rate(&src.pump, &src.sfwm, pair);
            let ns = noise_rate(&src.pump, &src.sfwm, pair.signal_channel) + lone;
            let ni = noise_rate(&src.pump, &src.sfwm, pair.idler_channel) + lone;
            let acc = ((mu + ns) * xs + app.dark_per_window(0))
                * ((mu + ni) * xi + app.dark_per_window(1));
            if acc <= 0.0 {
                return Err(Error::CarUndefined);
            }
            Ok(mu * xs * xi / acc)
        }
        CarModel::Clicks | CarModel::DeadTime => {
            let e = expected_clicks(src, pair, &AnalyzerSetting::Open, app);
            if e.accidentals <= 0.0 {
                return Err(Error::CarUndefined);
            }
            let car = e.coincidences / e.accidentals;
            if model == CarModel::DeadTime && app.detector_i.dead_time >= src.pump.period() {
                Ok(car / (1.0 - e.coincidences / e.singles_s + e.singles_i))
            } else {
                Ok(car)
            }
        }
    }
}

fn car_at(
    src: &SourceConfig,
    pair: &ChannelPair,
    app: &Apparatus,
    model: CarModel,
    power: f64,
) -> Result<f64> {
    let mut s = src.clone();
    s.pump.average_power = power;
    analytic_car(&s, pair, app, model)
}

/// Scales the Raman coefficient of both channels of `pair` so the analytic
/// CAR equals `target_car` at `target_power`. Other channels keep their
/// coefficients relative to the signal channel.
///
/// Returns the coefficient (photons per pulse per W) for the signal channel
/// and updates `src` in place.
pub fn calibrate_noise(
    target_car: f64,
    target_power: f64,
    src: &mut SourceConfig,
    pair: &ChannelPair,
    app: &Apparatus,
    model: CarModel,
) -> Result<f64> {
    if !(target_car > 1.0 && target_car.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "target CAR must be > 1, got {target_car}"
        )));
    }
    if !(target_power > 0.0 && target_power.is_finite()) {
        return Err(Error::InvalidConfig("target power must be > 0".into()));
    }
    let base_s = src.sfwm.noise_coeff_for(pair.signal_channel);
    let base_i = src.sfwm.noise_coeff_for(pair.idler_channel);
    // ratio of idler to signal coefficient is kept; a silent pair scales both equally
    let ratio = if base_s > 0.0 { base_i / base_s } else { 1.0 };
    let with = |n: f64| {
        let mut s = src.clone();
        set_pair_noise(&mut s, pair, n, n * ratio);
        s
    };
    let f = |n: f64| car_at(&with(n), pair, app, model, target_power).map(|c| c - target_car);
    let f0 = f(0.0)?;
    if f0 < 0.0 {
        return Err(Error::Unattainable(format!(
            "CAR without noise is {:.3} at {target_power} W, below the target {target_car}",
            f0 + target_car
        )));
    }
    let mut hi = 1.0;
    while f(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Unattainable(
                "no noise level reaches the target CAR".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let n = 0.5 * (lo + hi);
    *src = with(n);
    Ok(n)
}

fn set_pair_noise(src: &mut SourceConfig, pair: &ChannelPair, ns: f64, ni: f64) {
    use crate::source::ChannelNoise;
    let noise = &mut src.sfwm.channel_noise;
    noise.retain(|c| c.channel != pair.signal_channel && c.channel != pair.idler_channel);
    noise.push(ChannelNoise {
        channel: pair.signal_channel,
        coeff: ns,
    });
    noise.push(ChannelNoise {
        channel: pair.idler_channel,
        coeff: ni,
    });
    noise.sort_by_key(|c| c.channel);
}

/// Pump power maximizing the analytic CAR inside `[lo, hi]` (W), by golden
/// section on a logarithmic axis after a coarse scan.
pub fn peak_power(
    src: &SourceConfig,
    pair: &ChannelPair,
    app: &Apparatus,
    model: CarModel,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidConfig("invalid power range".into()));
    }
    let g = |u: f64| car_at(src, pair, app, model, u.exp());
    let (a0, b0) = (lo.ln(), hi.ln());
    let steps = 200;
    let mut best = (a0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let u = a0 + (b0 - a0) * i as f64 / steps as f64;
        let v = g(u)?;
        if v > best.1 {
            best = (u, v);
        }
    }
    let du = (b0 - a0) / steps as f64;
    let (mut a, mut b) = ((best.0 - du).max(a0), (best.0 + du).min(b0));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c)? > g(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let u = 0.5 * (a + b);
    Ok((u.exp(), g(u)?))
}

/// Dark-count rates (counts/s) that put the low-gain CAR maximum at
/// `peak_power`: the maximum sits where each arm's dark counts per window
/// equal its detected pairs per pulse, independently of the Raman noise.
pub fn peak_matched_dark_rates(
    src: &SourceConfig,
    pair: &ChannelPair,
    app: &Apparatus,
    peak_power: f64,
) -> (f64, f64) {
    let mut s = src.clone();
    s.pump.average_power = peak_power;
    let mu = pair_rate(&s.pump, &s.sfwm, pair);
    let rate = |arm: usize| {
        let det = if arm == 0 {
            &app.detector_s
        } else {
            &app.detector_i
        };
        mu * app.throughput(arm, SourceKind::Polarization)
            / det.window_width(app.coincidence_window)
    };
    (rate(0), rate(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DetectorMode, DetectorModel};
    use crate::source::{channel_pair_for, PumpConfig, SfwmConfig};

    fn rec(c: u64, a: u64) -> CountRecord {
        let mut r = CountRecord::empty(AnalyzerSetting::Open);
        r.coincidences = c;
        r.accidentals = a;
        r
    }

    fn setup(dark: bool) -> (SourceConfig, ChannelPair, Apparatus) {
        let src = SourceConfig {
            pump: PumpConfig::with_power(20e-6),
            sfwm: SfwmConfig::ideal(1.1e7),
        };
        let pair = channel_pair_for(34, 3).unwrap();
        let mut app = Apparatus::ideal();
        app.loss_s_db = 4.0;
        app.loss_i_db = 4.0;
        app.detector_s = DetectorModel {
            efficiency: 0.15,
            dark_rate: 0.0,
            dead_time: 0.0,
            mode: DetectorMode::Gated { gate_width: 1e-9 },
        };
        app.detector_i = DetectorModel {
            efficiency: 0.2,
            dark_rate: 0.0,
            dead_time: 0.0,
            mode: DetectorMode::FreeRunning,
        };
        if dark {
            let (ds, di) = peak_matched_dark_rates(&src, &pair, &app, 20e-6);
            app.detector_s.dark_rate = ds;
            app.detector_i.dark_rate = di;
        }
        (src, pair, app)
    }

    #[test]
    fn car_propagation_example() {
        let e = compute_car(&rec(300, 10)).unwrap();
        assert!((e.value - 30.0).abs() < 1e-12);
        assert!((e.sigma - 30.0 * (1.0f64 / 300.0 + 0.1).sqrt()).abs() < 1e-12);
        assert!((e.sigma - 9.6).abs() < 0.05);
        assert_eq!(compute_car(&rec(0, 4)).unwrap().value, 0.0);
        assert!(matches!(compute_car(&rec(10, 0)), Err(Error::CarUndefined)));
    }

    #[test]
    fn noiseless_dark_free_car_is_monotone() {
        let (src, pair, app) = setup(false);
        for model in [CarModel::LowGain, CarModel::Clicks] {
            let mut prev = f64::INFINITY;
            for i in 1..=40 {
                let car = car_at(&src, &pair, &app, model, i as f64 * 5e-6).unwrap();
                assert!(car < prev, "{model:?} at step {i}");
                prev = car;
            }
        }
    }

    #[test]
    fn dark_counts_create_interior_maximum_at_matched_power() {
        let (mut src, pair, app) = setup(true);
        src.sfwm.set_uniform_noise(150.0);
        let (p, _) = peak_power(&src, &pair, &app, CarModel::LowGain, 1e-6, 1e-3).unwrap();
        assert!((p / 20e-6 - 1.0).abs() < 1e-3, "{p}");
        // brute-force sign change of the slope
        let cars: Vec<f64> = (1..100)
            .map(|i| car_at(&src, &pair, &app, CarModel::Clicks, i as f64 * 1e-6).unwrap())
            .collect();
        let imax = cars
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(imax > 0 && imax < cars.len() - 1);
    }

    #[test]
    fn calibration_hits_target() {
        for model in [CarModel::LowGain, CarModel::Clicks] {
            let (mut src, pair, app) = setup(true);
            let n = calibrate_noise(30.0, 20e-6, &mut src, &pair, &app, model).unwrap();
            assert!(n > 0.0);
            let car = analytic_car(&src, &pair, &app, model).unwrap();
            assert!((car / 30.0 - 1.0).abs() < 1e-6, "{model:?}: {car}");
            assert_eq!(src.sfwm.noise_coeff_for(pair.idler_channel), n);
        }
    }

    #[test]
    fn dead_time_correction_matches_simulation() {
        use crate::sim::simulate_counts;
        let (mut src, pair, mut app) = setup(true);
        src.sfwm.set_uniform_noise(175.0);
        src.pump.average_power = 100e-6;
        app.detector_i.dead_time = 10e-6;
        let rec = simulate_counts(&src, &pair, &AnalyzerSetting::Open, &app, 20.0, 17).unwrap();
        let got = compute_car(&rec).unwrap();
        let plain = analytic_car(&src, &pair, &app, CarModel::Clicks).unwrap();
        let corrected = analytic_car(&src, &pair, &app, CarModel::DeadTime).unwrap();
        assert!(corrected > 1.03 * plain);
        assert!(
            (got.value - corrected).abs() < 3.0 * got.sigma,
            "{got} vs {corrected}"
        );
        assert!(
            (got.value - plain).abs() > 3.0 * got.sigma,
            "{got} vs {plain}"
        );
        // short dead time leaves the plain form exact
        app.detector_i.dead_time = 10e-9;
        assert_eq!(
            analytic_car(&src, &pair, &app, CarModel::DeadTime).unwrap(),
            plain
        );
    }

    #[test]
    fn calibration_reports_unattainable_target() {
        let (mut src, pair, app) = setup(true);
        assert!(matches!(
            calibrate_noise(1e6, 20e-6, &mut src, &pair, &app, CarModel::LowGain),
            Err(Error::Unattainable(_))
        ));
        assert!(matches!(
            calibrate_noise(0.5, 20e-6, &mut src, &pair, &app, CarModel::LowGain),
            Err(Error::InvalidConfig(_))
        ));
    }
}
