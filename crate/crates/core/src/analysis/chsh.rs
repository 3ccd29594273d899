use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{CountMode, Estimate};
use crate::error::{Error, Result};
use crate::quantum::DensityMatrix;
use crate::sim::{analytic_coincidence_prob_mixed, AnalyzerSetting, CountRecord};

/// Polarizer angles (rad) of the two CHSH settings per photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// Settings reaching S = 2√2 on Φ⁺: signal at 22.5° and −22.5°, idler
    /// at 0° and −45°. With their orthogonal partners these are the eight
    /// analyzer angles θs ∈ {−22.5°, 67.5°, 22.5°, 112.5°} and
    /// θi ∈ {−45°, 45°, 0°, 90°}.
    pub fn maximal() -> Self {
        let d = f64::to_radians;
        Self {
            a: d(22.5),
            a_prime: d(-22.5),
            b: d(0.0),
            b_prime: d(-45.0),
        }
    }

    /// Setting pairs in the order `(a,b), (a,b′), (a′,b), (a′,b′)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.a_prime, self.b, self.b_prime]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("CHSH angles must be finite".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshResult {
    pub s: Estimate,
    /// `E(a,b), E(a,b′), E(a′,b), E(a′,b′)`.
    pub correlations: [Estimate; 4],
}

/// The 16 analyzer settings: four groups in [`ChshSettings::pairs`] order,
/// each `(θs,θi), (θs,θi⊥), (θs⊥,θi), (θs⊥,θi⊥)`.
pub fn chsh_settings_list(settings: &ChshSettings) -> Vec<AnalyzerSetting> {
    settings
        .pairs()
        .iter()
        .flat_map(|&(s, i)| {
            [
                (s, i),
                (s, i + FRAC_PI_2),
                (s + FRAC_PI_2, i),
                (s + FRAC_PI_2, i + FRAC_PI_2),
            ]
            .map(|(ts, ti)| AnalyzerSetting::polarization(ts, ti))
        })
        .collect()
}

fn correlation(n: [f64; 4], var: [f64; 4]) -> Result<Estimate> {
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroCounts);
    }
    let sign = [1.0, -1.0, -1.0, 1.0];
    let e = (0..4).map(|k| sign[k] * n[k]).sum::<f64>() / total;
    let var_e = (0..4).map(|k| (sign[k] - e).powi(2) * var[k]).sum::<f64>() / (total * total);
    Ok(Estimate::new(e, var_e.sqrt()))
}

/// `E = (C₊₊ + C₋₋ − C₊₋ − C₋₊)/ΣC` from records at `(θs,θi), (θs,θi⊥),
/// (θs⊥,θi), (θs⊥,θi⊥)`, with independent Poisson errors.
pub fn chsh_correlation(records: &[CountRecord; 4], mode: CountMode) -> Result<Estimate> {
    correlation(
        records.each_ref().map(|r| mode.counts(r)),
        records.each_ref().map(|r| mode.variance(r)),
    )
}

fn combine(e: [Estimate; 4]) -> ChshResult {
    let s = e[0].value - e[1].value + e[2].value + e[3].value;
    let sigma = e.iter().map(|x| x.sigma * x.sigma).sum::<f64>().sqrt();
    ChshResult {
        s: Estimate::new(s.abs(), sigma),
        correlations: e,
    }
}

fn same_angle(x: f64, y: f64) -> bool {
    // polarizers are π-periodic
    let d = (x - y).rem_euclid(std::f64::consts::PI);
    d < 1e-9 || std::f64::consts::PI - d < 1e-9
}

/// `S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|` from 16 records ordered as
/// [`chsh_settings_list`]. Records carrying polarization settings must match
/// that list.
pub fn chsh_s(
    settings: &ChshSettings,
    records: &[CountRecord],
    mode: CountMode,
) -> Result<ChshResult> {
    settings.validate()?;
    if records.len() != 16 {
        return Err(Error::InsufficientData(format!(
            "CHSH needs 16 records, got {}",
            records.len()
        )));
    }
    for (k, (rec, want)) in records.iter().zip(chsh_settings_list(settings)).enumerate() {
        if let (
            AnalyzerSetting::Polarization {
                theta_s, theta_i, ..
            },
            AnalyzerSetting::Polarization {
                theta_s: ws,
                theta_i: wi,
                ..
            },
        ) = (rec.setting, want)
        {
            if !(same_angle(theta_s, ws) && same_angle(theta_i, wi)) {
                return Err(Error::InvalidConfig(format!(
                    "record {k} has setting {} but {want} was expected",
                    rec.setting
                )));
            }
        }
    }
    let mut e = [Estimate::new(0.0, 0.0); 4];
    for (g, chunk) in records.chunks_exact(4).enumerate() {
        let group: &[CountRecord; 4] = chunk.try_into().expect("chunk of four");
        e[g] = chsh_correlation(group, mode)?;
    }
    Ok(combine(e))
}

/// [`chsh_s`] on bare counts in [`chsh_settings_list`] order, each with
/// Poisson variance equal to its value.
pub fn chsh_s_from_counts(counts: &[f64; 16]) -> Result<ChshResult> {
    let mut e = [Estimate::new(0.0, 0.0); 4];
    for g in 0..4 {
        let n: [f64; 4] = counts[4 * g..4 * g + 4].try_into().unwrap();
        e[g] = correlation(n, n)?;
    }
    Ok(combine(e))
}

/// Expected counts `scale · P(setting)` for the 16 CHSH settings.
pub fn exact_chsh_counts(
    rho: &DensityMatrix<f64>,
    settings: &ChshSettings,
    scale: f64,
) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (k, s) in chsh_settings_list(settings).iter().enumerate() {
        out[k] = scale * analytic_coincidence_prob_mixed(rho, s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{density_from_pure, PureState2Q};
    use num_complex::Complex;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};
    use std::f64::consts::SQRT_2;

    fn phi_plus() -> DensityMatrix<f64> {
        density_from_pure(&PureState2Q::phi_plus())
    }

    fn records(counts: &[f64]) -> Vec<CountRecord> {
        let list = chsh_settings_list(&ChshSettings::maximal());
        counts
            .iter()
            .zip(list)
            .map(|(&c, s)| {
                let mut r = CountRecord::empty(s);
                r.coincidences = c.round() as u64;
                r
            })
            .collect()
    }

    #[test]
    fn maximal_angles_are_reproduced() {
        let deg: Vec<(f64, f64)> = chsh_settings_list(&ChshSettings::maximal())
            .iter()
            .map(|s| match *s {
                AnalyzerSetting::Polarization {
                    theta_s, theta_i, ..
                } => (theta_s.to_degrees(), theta_i.to_degrees()),
                _ => unreachable!(),
            })
            .collect();
        let mut signal: Vec<i64> = deg.iter().map(|d| (d.0 * 10.0).round() as i64).collect();
        let mut idler: Vec<i64> = deg.iter().map(|d| (d.1 * 10.0).round() as i64).collect();
        signal.sort();
        signal.dedup();
        idler.sort();
        idler.dedup();
        assert_eq!(signal, vec![-225, 225, 675, 1125]);
        assert_eq!(idler, vec![-450, 0, 450, 900]);
    }

    #[test]
    fn correlation_examples() {
        let rho = phi_plus();
        let corr = |ts: f64, ti: f64| {
            let rs = [
                (ts, ti),
                (ts, ti + FRAC_PI_2),
                (ts + FRAC_PI_2, ti),
                (ts + FRAC_PI_2, ti + FRAC_PI_2),
            ]
            .map(|(a, b)| {
                let s = AnalyzerSetting::polarization(a, b);
                let mut r = CountRecord::empty(s);
                r.coincidences = (1e8 * analytic_coincidence_prob_mixed(&rho, &s)).round() as u64;
                r
            });
            chsh_correlation(&rs, CountMode::Raw).unwrap().value
        };
        assert!((corr(0.0, 0.0) - 1.0).abs() < 1e-7);
        assert!((corr(22.5f64.to_radians(), 0.0) - 45f64.to_radians().cos()).abs() < 1e-7);
        let mixed = DensityMatrix::maximally_mixed();
        let n = exact_chsh_counts(&mixed, &ChshSettings::maximal(), 1e6);
        let r = chsh_s_from_counts(&n).unwrap();
        for e in r.correlations {
            assert!(e.value.abs() < 1e-12);
        }
        assert!(r.s.value < 1e-12);
    }

    #[test]
    fn ideal_bell_state_reaches_tsirelson() {
        let n = exact_chsh_counts(&phi_plus(), &ChshSettings::maximal(), 1.0);
        let r = chsh_s_from_counts(&n).unwrap();
        assert!((r.s.value - 2.0 * SQRT_2).abs() < 1e-9, "{}", r.s.value);
        let r2 = chsh_s(
            &ChshSettings::maximal(),
            &records(&n.map(|p| p * 1e9)),
            CountMode::Raw,
        )
        .unwrap();
        assert!((r2.s.value - 2.0 * SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn zero_group_is_an_error() {
        let mut n = exact_chsh_counts(&phi_plus(), &ChshSettings::maximal(), 100.0);
        n[4..8].fill(0.0);
        assert!(matches!(chsh_s_from_counts(&n), Err(Error::ZeroCounts)));
    }

    #[test]
    fn mismatched_record_settings_are_rejected() {
        let n = exact_chsh_counts(&phi_plus(), &ChshSettings::maximal(), 100.0);
        let mut rs = records(&n);
        rs.swap(0, 5);
        assert!(chsh_s(&ChshSettings::maximal(), &rs, CountMode::Raw).is_err());
        assert!(chsh_s(&ChshSettings::maximal(), &rs[..8], CountMode::Raw).is_err());
    }

    #[test]
    fn doubling_counts_shrinks_sigma_by_sqrt_two() {
        let expected = exact_chsh_counts(&phi_plus(), &ChshSettings::maximal(), 2e4);
        let run = |scale: f64, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = expected.map(|m| Poisson::new(m * scale).unwrap().sample(&mut rng));
            chsh_s_from_counts(&n).unwrap().s.sigma
        };
        let ratio = run(1.0, 11) / run(2.0, 12);
        assert!((ratio / SQRT_2 - 1.0).abs() < 0.05, "{ratio}");
    }

    fn random_state(v: &[f64]) -> DensityMatrix<f64> {
        // mixture of two random pure states
        let ket = |o: usize| {
            let amp: [Complex<f64>; 4] =
                std::array::from_fn(|k| Complex::new(v[o + 2 * k], v[o + 2 * k + 1]));
            PureState2Q::new(amp)
                .map(|p| density_from_pure(&p))
                .unwrap_or_else(|_| DensityMatrix::maximally_mixed())
        };
        DensityMatrix::mix(v[16].abs().min(1.0), &ket(0), &ket(8))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn tsirelson_bound_holds(v in prop::collection::vec(-1.0f64..1.0, 17), angles in prop::array::uniform4(-3.2f64..3.2)) {
            let rho = random_state(&v);
            for settings in [ChshSettings::maximal(), ChshSettings { a: angles[0], a_prime: angles[1], b: angles[2], b_prime: angles[3] }] {
                let n = exact_chsh_counts(&rho, &settings, 1.0);
                if let Ok(r) = chsh_s_from_counts(&n) {
                    prop_assert!(r.s.value <= 2.0 * SQRT_2 + 1e-9);
                }
            }
        }
    }
}
