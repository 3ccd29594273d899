use std::f64::consts::TAU;

use serde::Serialize;

use super::{CountMode, Estimate};
use crate::error::{Error, Result};
use crate::linalg::solve_real;
use crate::sim::CountRecord;

/// Coincidence counts recorded while sweeping one analyzer parameter.
#[derive(Debug, Clone)]
pub struct FringeDataset {
    /// (swept setting value in rad, record)
    pub points: Vec<(f64, CountRecord)>,
    pub basis_label: String,
    /// Angular frequency of the fringe in the swept variable: 2 for a
    /// polarizer angle or a pump phase, 1 for a signal/idler phase.
    pub harmonic: f64,
}

/// Weighted least-squares fit of `offset + amplitude * cos(harmonic * x - phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub visibility: Estimate,
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub chi2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityResult {
    pub v_raw: Estimate,
    pub v_net: Estimate,
    /// Parameters of the raw fit, `C(x) = A (1 + V cos(h x - x0))`.
    pub fit_amplitude: f64,
    pub fit_offset: f64,
    pub fit_phase: f64,
}

fn fit_linear(xs: &[f64], ys: &[f64], vars: &[f64], harmonic: f64) -> Result<FringeFit> {
    let mut normal = [0.0; 9];
    let mut rhs = [0.0; 3];
    for ((&x, &y), &var) in xs.iter().zip(ys).zip(vars) {
        let w = 1.0 / var.max(1.0);
        let row = [1.0, (harmonic * x).cos(), (harmonic * x).sin()];
        for i in 0..3 {
            rhs[i] += w * row[i] * y;
            for j in 0..3 {
                normal[3 * i + j] += w * row[i] * row[j];
            }
        }
    }
    let coef = solve_real(&normal, &rhs, 1e-12)
        .ok_or_else(|| Error::FitFailed("degenerate sampling of the fringe".into()))?;
    // covariance = inverse of the normal matrix
    let mut cov = [0.0; 9];
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        let col = solve_real(&normal, &e, 1e-12)
            .ok_or_else(|| Error::FitFailed("singular normal matrix".into()))?;
        for i in 0..3 {
            cov[3 * i + k] = col[i];
        }
    }
    let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
    if !(c0 > 0.0) {
        return Err(Error::FitFailed(format!("non-positive fringe offset {c0}")));
    }
    let amp = c1.hypot(c2);
    let v = amp / c0;
    let grad = if amp > 0.0 {
        [-v / c0, c1 / (amp * c0), c2 / (amp * c0)]
    } else {
        [0.0, 1.0 / c0, 0.0]
    };
    let mut var_v = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var_v += grad[i] * cov[3 * i + j] * grad[j];
        }
    }
    let chi2 = xs
        .iter()
        .zip(ys)
        .zip(vars)
        .map(|((&x, &y), &var)| {
            let m = c0 + c1 * (harmonic * x).cos() + c2 * (harmonic * x).sin();
            (y - m).powi(2) / var.max(1.0)
        })
        .sum();
    Ok(FringeFit {
        visibility: Estimate::new(v.min(1.0), var_v.max(0.0).sqrt()),
        offset: c0,
        amplitude: amp,
        phase: c2.atan2(c1),
        chi2,
    })
}

fn columns(data: &FringeDataset, mode: CountMode) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let xs = data.points.iter().map(|(x, _)| *x).collect();
    let ys = data.points.iter().map(|(_, r)| mode.counts(r)).collect();
    let vs = data.points.iter().map(|(_, r)| mode.variance(r)).collect();
    (xs, ys, vs)
}

fn check(data: &FringeDataset) -> Result<()> {
    let n = data.points.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!(
            "{n} fringe points, need at least 6"
        )));
    }
    if !(data.harmonic > 0.0) {
        return Err(Error::InsufficientData(
            "fringe harmonic must be positive".into(),
        ));
    }
    let (lo, hi) = data
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
            (lo.min(*x), hi.max(*x))
        });
    let period = TAU / data.harmonic;
    // n evenly spaced samples cover (n-1)/n of the period they tile
    if (hi - lo) * (n as f64) / ((n - 1) as f64) < period * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(
            "fringe points span less than one period".into(),
        ));
    }
    if data.points.iter().all(|(_, r)| r.coincidences == 0) {
        return Err(Error::InsufficientData(
            "all coincidence counts are zero".into(),
        ));
    }
    Ok(())
}

/// Raw and background-subtracted fringe visibility with fit uncertainties.
pub fn fit_visibility(data: &FringeDataset) -> Result<VisibilityResult> {
    check(data)?;
    let (xs, ys, vs) = columns(data, CountMode::Raw);
    let raw = fit_linear(&xs, &ys, &vs, data.harmonic)?;
    let (xs, ys, vs) = columns(data, CountMode::Net);
    let net = fit_linear(&xs, &ys, &vs, data.harmonic)?;
    Ok(VisibilityResult {
        v_raw: raw.visibility,
        v_net: net.visibility,
        fit_amplitude: raw.offset,
        fit_offset: raw.offset,
        fit_phase: raw.phase,
    })
}

/// Fits the fringe with a free angular frequency in `[lo, hi]` by profiling
/// the linear parameters: coarse scan of χ², then golden-section refinement.
pub fn fit_fringe_frequency(
    data: &FringeDataset,
    lo: f64,
    hi: f64,
    mode: CountMode,
) -> Result<(f64, FringeFit)> {
    if data.points.len() < 6 {
        return Err(Error::InsufficientData("need at least 6 points".into()));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InsufficientData("invalid frequency range".into()));
    }
    let (xs, ys, vs) = columns(data, mode);
    let chi2 = |w: f64| {
        fit_linear(&xs, &ys, &vs, w)
            .map(|f| f.chi2)
            .unwrap_or(f64::INFINITY)
    };
    let steps = 400;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| {
            chi2(*a)
                .partial_cmp(&chi2(*b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let dw = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best - dw).max(lo), (best + dw).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..100 {
        if chi2(c) < chi2(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let w = 0.5 * (a + b);
    if !chi2(w).is_finite() {
        return Err(Error::FitFailed(
            "no finite chi-square in frequency range".into(),
        ));
    }
    Ok((w, fit_linear(&xs, &ys, &vs, w)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AnalyzerSetting;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn record(c: u64, a: u64) -> CountRecord {
        let mut r = CountRecord::empty(AnalyzerSetting::Open);
        r.coincidences = c;
        r.accidentals = a;
        r
    }

    fn dataset(mut f: impl FnMut(f64) -> (u64, u64), n: usize, harmonic: f64) -> FringeDataset {
        let period = TAU / harmonic;
        FringeDataset {
            points: (0..n)
                .map(|i| {
                    let x = period * i as f64 / n as f64;
                    let (c, a) = f(x);
                    (x, record(c, a))
                })
                .collect(),
            basis_label: "test".into(),
            harmonic,
        }
    }

    #[test]
    fn exact_unit_visibility_sinusoid() {
        let d = dataset(|x| ((500.0 * (1.0 + x.cos())).round() as u64, 0), 12, 1.0);
        let v = fit_visibility(&d).unwrap();
        assert!((v.v_raw.value - 1.0).abs() < 1e-3, "{:?}", v.v_raw);
        assert!(v.v_raw.sigma < 0.01);
        assert!((v.fit_offset - 500.0).abs() < 1.0);
    }

    #[test]
    fn constant_counts_have_zero_visibility() {
        let d = dataset(|_| (400, 0), 12, 2.0);
        let v = fit_visibility(&d).unwrap();
        assert!(v.v_raw.value.abs() < 1e-12);
    }

    #[test]
    fn background_subtraction_raises_visibility() {
        let d = dataset(
            |x| {
                (
                    (300.0 * (1.0 + 0.98 * (2.0 * x).cos()) + 40.0).round() as u64,
                    40,
                )
            },
            12,
            2.0,
        );
        let v = fit_visibility(&d).unwrap();
        assert!(v.v_net.value > v.v_raw.value);
        assert!((v.v_raw.value - 0.98 * 300.0 / 340.0).abs() < 5e-3);
        assert!((v.v_net.value - 0.98).abs() < 5e-3);
    }

    #[test]
    fn rejects_bad_datasets() {
        let short = dataset(|_| (10, 0), 5, 1.0);
        assert!(matches!(
            fit_visibility(&short),
            Err(Error::InsufficientData(_))
        ));
        let zeros = dataset(|_| (0, 0), 12, 1.0);
        assert!(matches!(
            fit_visibility(&zeros),
            Err(Error::InsufficientData(_))
        ));
        let mut half = dataset(|x| (100 + (50.0 * x.cos()) as u64, 0), 12, 1.0);
        for p in half.points.iter_mut() {
            p.0 *= 0.5;
        }
        assert!(fit_visibility(&half).is_err());
    }

    #[test]
    fn visibility_recovered_within_three_sigma() {
        for &v_true in &[0.5, 0.9, 1.0] {
            for seed in 0..20u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = dataset(
                    |x| {
                        let mean = 400.0 * (1.0 + v_true * (x - 0.3).cos());
                        let c = if mean > 0.0 {
                            Poisson::new(mean).unwrap().sample(&mut rng) as u64
                        } else {
                            0
                        };
                        (c, 0)
                    },
                    12,
                    1.0,
                );
                let v = fit_visibility(&d).unwrap();
                // clamping at 1 only moves the estimate toward the truth for v_true = 1
                assert!(
                    (v.v_raw.value - v_true).abs() <= 3.0 * v.v_raw.sigma + 1e-9,
                    "V={v_true} seed={seed}: {:?}",
                    v.v_raw
                );
            }
        }
    }

    #[test]
    fn free_frequency_fit_finds_the_period() {
        let d = dataset(
            |x| {
                (
                    (200.0 * (1.0 - 0.9 * (2.0 * x).cos())).round() as u64 + 5,
                    0,
                )
            },
            16,
            1.0,
        );
        let (w, fit) = fit_fringe_frequency(&d, 0.5, 3.0, CountMode::Raw).unwrap();
        assert!((w - 2.0).abs() < 1e-3, "{w}");
        assert!((fit.visibility.value - 0.9 * 200.0 / 205.0).abs() < 0.01);
    }
}
