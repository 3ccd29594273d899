//! One function per subcommand. Each returns its artifacts in memory.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use anyhow::{bail, Context};
use entangle_core::analysis::{
    analytic_car, bootstrap_fidelity, chsh_s, chsh_settings_list, compute_car,
    fit_fringe_frequency, fit_visibility, mle_reconstruct, tomography_settings, ChshResult,
    ChshSettings, CountMode, Estimate, FidelityEstimate, FringeDataset, MleOptions, TomographyData,
    VisibilityResult,
};
use entangle_core::quantum::{is_physical, PureState2Q};
use entangle_core::sim::{
    derive_seed, expected_clicks, simulate_counts, AnalyzerSetting, CountRecord,
};
use entangle_core::source::{polarization_state, timebin_state, ChannelPair, SourceKind};
use serde::Serialize;

use crate::config::{CalibrationReport, ExperimentConfig, Resolved};
use crate::output::{Artifacts, Provenance};

/// Shared inputs of every command.
pub struct RunContext<'a> {
    pub config: &'a ExperimentConfig,
    pub resolved: Resolved,
    pub seed: u64,
    pub provenance: Provenance,
}

impl<'a> RunContext<'a> {
    pub fn new(config: &'a ExperimentConfig, seed: u64) -> anyhow::Result<Self> {
        let resolved = config.resolve().context("applying calibration")?;
        Ok(Self {
            config,
            resolved,
            seed,
            provenance: Provenance::new(seed, config.hash()),
        })
    }

    fn pair(&self, label: Option<&str>) -> anyhow::Result<ChannelPair> {
        match label {
            Some(l) => self.config.pair(l),
            None => Ok(self.resolved.pairs[0]),
        }
    }

    /// Simulates `settings` in order; setting `k` of stream `stream` gets its
    /// own derived seed.
    fn measure(
        &self,
        kind: SourceKind,
        pair: &ChannelPair,
        power: Option<f64>,
        settings: &[AnalyzerSetting],
        duration: f64,
        stream: u64,
    ) -> anyhow::Result<Vec<CountRecord>> {
        let (src, app) = self.resolved.setup(kind);
        let mut src = src.clone();
        if let Some(p) = power {
            src.pump.average_power = p;
        }
        let base = derive_seed(self.seed, stream);
        settings
            .iter()
            .enumerate()
            .map(|(k, s)| {
                simulate_counts(&src, pair, s, app, duration, derive_seed(base, k as u64))
                    .map_err(Into::into)
            })
            .collect()
    }
}

/// Swept analyzer of a fringe measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    /// Signal polarizer angle or signal interferometer phase.
    Signal,
    /// Pump interferometer phase (time-bin only).
    Pump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Polarization,
    Timebin,
}

impl From<Kind> for SourceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Polarization => SourceKind::Polarization,
            Kind::Timebin => SourceKind::TimeBin,
        }
    }
}

/// Fringe sweep: analyzer settings, swept values and the fringe harmonic.
/// `basis` is the fixed idler angle or phase, rad.
pub fn fringe_settings(
    kind: Kind,
    sweep: SweepVar,
    basis: f64,
    phi_p: f64,
    points: usize,
) -> anyhow::Result<(Vec<f64>, Vec<AnalyzerSetting>, f64)> {
    let step = |span: f64| (0..points).map(move |k| span * k as f64 / points as f64);
    Ok(match (kind, sweep) {
        (Kind::Polarization, SweepVar::Signal) => {
            let xs: Vec<f64> = step(PI).collect();
            let settings = xs
                .iter()
                .map(|&x| AnalyzerSetting::polarization(x, basis))
                .collect();
            (xs, settings, 2.0)
        }
        (Kind::Timebin, SweepVar::Signal) => {
            let xs: Vec<f64> = step(TAU).collect();
            let settings = xs
                .iter()
                .map(|&x| AnalyzerSetting::timebin_central(phi_p, x, basis))
                .collect();
            (xs, settings, 1.0)
        }
        (Kind::Timebin, SweepVar::Pump) => {
            // two pump periods so the free-frequency fit sees the period
            let xs: Vec<f64> = step(TAU).collect();
            let settings = xs
                .iter()
                .map(|&x| AnalyzerSetting::timebin_central(x, 0.0, basis))
                .collect();
            (xs, settings, 2.0)
        }
        (Kind::Polarization, SweepVar::Pump) => {
            bail!("the pump sweep applies to the time-bin source only")
        }
    })
}

#[derive(Serialize)]
struct FringeRow {
    x: f64,
    setting: String,
    singles_s: u64,
    singles_i: u64,
    coincidences: u64,
    accidentals: u64,
    pulses: u64,
    duration: f64,
}

#[derive(Debug, Serialize)]
pub struct FringeSummary {
    pub kind: Kind,
    pub pair: String,
    pub sweep: SweepVar,
    /// rad
    pub basis: f64,
    /// W
    pub pump_power: f64,
    pub points: usize,
    pub visibility: VisibilityResult,
    /// Period of a free-frequency fit of the raw counts, rad.
    pub fitted_period: f64,
    pub calibration: Option<CalibrationReport>,
}

pub struct FringeRequest<'r> {
    pub kind: Kind,
    pub pair: Option<&'r str>,
    pub basis: f64,
    pub sweep: SweepVar,
    /// Measured records to analyze instead of simulating.
    pub counts: Option<Vec<CountRecord>>,
}

fn fringe_dataset(
    xs: &[f64],
    records: Vec<CountRecord>,
    harmonic: f64,
    label: String,
) -> FringeDataset {
    FringeDataset {
        points: xs.iter().copied().zip(records).collect(),
        basis_label: label,
        harmonic,
    }
}

/// Swept value of a record, recovered from its setting.
fn swept_value(sweep: SweepVar, s: &AnalyzerSetting) -> anyhow::Result<f64> {
    Ok(match (sweep, s) {
        (SweepVar::Signal, AnalyzerSetting::Polarization { theta_s, .. }) => *theta_s,
        (SweepVar::Signal, AnalyzerSetting::TimeBin { phi_s, .. }) => *phi_s,
        (SweepVar::Pump, AnalyzerSetting::TimeBin { phi_p, .. }) => *phi_p,
        _ => bail!("record setting `{s}` does not fit a {sweep:?} sweep"),
    })
}

pub fn cmd_fringe(
    ctx: &RunContext,
    req: FringeRequest,
) -> anyhow::Result<(Artifacts, FringeSummary)> {
    let pair = ctx.pair(req.pair)?;
    let phi_p = ctx.config.sfwm.phi_p;
    let (xs, records, harmonic) = match req.counts {
        Some(records) => {
            let xs = records
                .iter()
                .map(|r| swept_value(req.sweep, &r.setting))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let harmonic = match (req.kind, req.sweep) {
                (Kind::Timebin, SweepVar::Signal) => 1.0,
                _ => 2.0,
            };
            (xs, records, harmonic)
        }
        None => {
            let (xs, settings, harmonic) = fringe_settings(
                req.kind,
                req.sweep,
                req.basis,
                phi_p,
                ctx.config.sweep.fringe_points,
            )?;
            let stream =
                100 + pair.detuning_k as u64 * 10 + (req.kind as u64) * 2 + req.sweep as u64;
            let records = ctx.measure(
                req.kind.into(),
                &pair,
                None,
                &settings,
                ctx.config.durations.fringe,
                stream,
            )?;
            (xs, records, harmonic)
        }
    };
    let data = fringe_dataset(&xs, records.clone(), harmonic, format!("{}", req.basis));
    let visibility = fit_visibility(&data)?;
    let (freq, _) = fit_fringe_frequency(&data, 0.5 * harmonic, 1.5 * harmonic, CountMode::Raw)?;
    let summary = FringeSummary {
        kind: req.kind,
        pair: pair.label(),
        sweep: req.sweep,
        basis: req.basis,
        pump_power: ctx.config.pump.average_power,
        points: xs.len(),
        visibility,
        fitted_period: TAU / freq,
        calibration: ctx.resolved.calibration.clone(),
    };
    let rows: Vec<FringeRow> = xs
        .iter()
        .zip(&records)
        .map(|(&x, r)| FringeRow {
            x,
            setting: r.setting.to_string(),
            singles_s: r.singles_s,
            singles_i: r.singles_i,
            coincidences: r.coincidences,
            accidentals: r.accidentals,
            pulses: r.pulses,
            duration: r.duration,
        })
        .collect();
    let mut out = Artifacts::default();
    out.csv("fringe.csv", &ctx.provenance, &rows)?;
    out.json("fringe.json", &ctx.provenance, &summary)?;
    Ok((out, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct CarPoint {
    pub pair: String,
    pub power_w: f64,
    pub duration_s: f64,
    pub coincidences: u64,
    pub accidentals: u64,
    pub car: f64,
    pub car_sigma: f64,
    pub car_analytic: f64,
}

#[derive(Debug, Serialize)]
pub struct CarPairSummary {
    pub pair: String,
    /// Sweep power with the highest simulated CAR, W.
    pub peak_power_w: f64,
    pub peak_car: Estimate,
    /// The maximum is neither the first nor the last sweep point.
    pub interior_maximum: bool,
}

#[derive(Debug, Serialize)]
pub struct CarSummary {
    pub pairs: Vec<CarPairSummary>,
    pub calibration: Option<CalibrationReport>,
}

pub fn cmd_car_sweep(
    ctx: &RunContext,
    powers: Option<&[f64]>,
) -> anyhow::Result<(Artifacts, Vec<CarPoint>, CarSummary)> {
    let powers = powers.unwrap_or(&ctx.config.sweep.car_powers);
    if powers.is_empty() || powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        bail!("sweep powers must be > 0 W");
    }
    let model = ctx
        .config
        .calibration
        .as_ref()
        .map(|c| c.model)
        .unwrap_or_default();
    let (src, app) = ctx.resolved.setup(SourceKind::Polarization);
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    for (pi, pair) in ctx.resolved.pairs.iter().enumerate() {
        let mut best: Option<(usize, Estimate)> = None;
        for (k, &power) in powers.iter().enumerate() {
            let mut s = src.clone();
            s.pump.average_power = power;
            let expected = expected_clicks(&s, pair, &AnalyzerSetting::Open, app).accidentals
                * s.pump.repetition_rate;
            let duration = ctx
                .config
                .durations
                .car
                .max(ctx.config.sweep.car_min_accidentals / expected);
            let stream = 1000 + (pi * 64 + k) as u64;
            let rec = &ctx.measure(
                SourceKind::Polarization,
                pair,
                Some(power),
                &[AnalyzerSetting::Open],
                duration,
                stream,
            )?[0];
            let car = compute_car(rec).with_context(|| format!("{} at {power} W", pair.label()))?;
            let exact = analytic_car(&s, pair, app, model)?;
            if best.is_none_or(|(_, b)| car.value > b.value) {
                best = Some((k, car));
            }
            points.push(CarPoint {
                pair: pair.label(),
                power_w: power,
                duration_s: rec.duration,
                coincidences: rec.coincidences,
                accidentals: rec.accidentals,
                car: car.value,
                car_sigma: car.sigma,
                car_analytic: exact,
            });
        }
        let (k, car) = best.expect("non-empty sweep");
        summaries.push(CarPairSummary {
            pair: pair.label(),
            peak_power_w: powers[k],
            peak_car: car,
            interior_maximum: k > 0 && k + 1 < powers.len(),
        });
    }
    let summary = CarSummary {
        pairs: summaries,
        calibration: ctx.resolved.calibration.clone(),
    };
    let mut out = Artifacts::default();
    out.csv("car_sweep.csv", &ctx.provenance, &points)?;
    out.json("car_sweep.json", &ctx.provenance, &summary)?;
    Ok((out, points, summary))
}

#[derive(Debug, Serialize)]
pub struct ChshSummary {
    pub pair: String,
    pub pump_power: f64,
    /// Signal and idler polarizer angles, degrees.
    pub angles_deg: [f64; 4],
    pub raw: ChshResult,
    pub net: ChshResult,
    /// (S − 2) / σ_S of the raw estimate.
    pub violation_sigmas: f64,
}

pub fn cmd_chsh(
    ctx: &RunContext,
    pair: Option<&str>,
    counts: Option<Vec<CountRecord>>,
) -> anyhow::Result<(Artifacts, ChshSummary)> {
    let pair = ctx.pair(pair)?;
    let settings = ChshSettings::maximal();
    let records = match counts {
        Some(r) => r,
        None => ctx.measure(
            SourceKind::Polarization,
            &pair,
            None,
            &chsh_settings_list(&settings),
            ctx.config.durations.chsh,
            2000,
        )?,
    };
    let raw = chsh_s(&settings, &records, CountMode::Raw)?;
    let net = chsh_s(&settings, &records, CountMode::Net)?;
    let summary = ChshSummary {
        pair: pair.label(),
        pump_power: ctx.config.pump.average_power,
        angles_deg: [settings.a, settings.a_prime, settings.b, settings.b_prime]
            .map(f64::to_degrees),
        raw,
        net,
        violation_sigmas: (raw.s.value - 2.0) / raw.s.sigma,
    };
    let mut out = Artifacts::default();
    out.records("chsh_records.csv", &ctx.provenance, &records)?;
    out.json("chsh.json", &ctx.provenance, &summary)?;
    Ok((out, summary))
}

#[derive(Debug, Serialize)]
pub struct Reconstruction {
    pub fidelity: FidelityEstimate,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub physical: bool,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Serialize)]
pub struct TomoSummary {
    pub kind: Kind,
    pub pair: String,
    pub pump_power: f64,
    pub raw: Reconstruction,
    pub net: Reconstruction,
}

fn target_state(ctx: &RunContext, kind: Kind) -> PureState2Q<f64> {
    match kind {
        Kind::Polarization => polarization_state(1.0, 0.0),
        Kind::Timebin => timebin_state(ctx.config.sfwm.phi_p),
    }
}

fn matrix_rows(
    rho: &entangle_core::DensityMatrix64,
    part: fn(num_complex::Complex<f64>) -> f64,
) -> Vec<Vec<f64>> {
    (0..4)
        .map(|i| (0..4).map(|j| part(rho.get(i, j))).collect())
        .collect()
}

pub fn cmd_tomo(
    ctx: &RunContext,
    kind: Kind,
    pair: Option<&str>,
    counts: Option<Vec<CountRecord>>,
) -> anyhow::Result<(Artifacts, TomoSummary)> {
    let pair = ctx.pair(pair)?;
    let records = match counts {
        Some(r) => r,
        None => {
            let settings = tomography_settings(kind.into(), ctx.config.sfwm.phi_p);
            ctx.measure(
                kind.into(),
                &pair,
                None,
                &settings,
                ctx.config.durations.tomography,
                3000 + kind as u64,
            )?
        }
    };
    let target = target_state(ctx, kind);
    let mut out = Artifacts::default();
    let mut recon = |mode: CountMode, tag: &str, stream: u64| -> anyhow::Result<Reconstruction> {
        let data = TomographyData::from_records(&records, mode)?;
        let fit = mle_reconstruct(&data, &MleOptions::default())?;
        let boot = bootstrap_fidelity(
            &records,
            mode,
            &target,
            ctx.config.sweep.bootstrap_resamples,
            derive_seed(ctx.seed, stream),
        )?;
        out.matrix(
            &format!("rho_{tag}_real.csv"),
            &ctx.provenance,
            &matrix_rows(&fit.rho, |z| z.re),
        );
        out.matrix(
            &format!("rho_{tag}_imag.csv"),
            &ctx.provenance,
            &matrix_rows(&fit.rho, |z| z.im),
        );
        let min_eigenvalue = fit
            .rho
            .eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Ok(Reconstruction {
            fidelity: boot,
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
            converged: fit.converged,
            physical: is_physical(&fit.rho, 1e-9),
            min_eigenvalue,
        })
    };
    let raw = recon(CountMode::Raw, "raw", 3100)?;
    let net = recon(CountMode::Net, "net", 3200)?;
    let summary = TomoSummary {
        kind,
        pair: pair.label(),
        pump_power: ctx.config.pump.average_power,
        raw,
        net,
    };
    out.records("tomo_records.csv", &ctx.provenance, &records)?;
    out.json("tomo.json", &ctx.provenance, &summary)?;
    Ok((out, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub pair: String,
    /// Mean singles rates over the basis-0 sweep, counts/s.
    pub singles_s_rate: f64,
    pub singles_i_rate: f64,
    pub raw_0: f64,
    pub raw_0_sigma: f64,
    pub net_0: f64,
    pub net_0_sigma: f64,
    pub raw_45: f64,
    pub raw_45_sigma: f64,
    pub net_45: f64,
    pub net_45_sigma: f64,
}

/// Idler analyzer for the two bases: 0 and 45° for polarizers, 0 and π/4
/// for the idler interferometer phase.
pub const TABLE_BASES: [f64; 2] = [0.0, FRAC_PI_4];

pub fn cmd_multiplex_table(
    ctx: &RunContext,
    kind: Kind,
) -> anyhow::Result<(Artifacts, Vec<TableRow>)> {
    let mut rows = Vec::new();
    for (pi, pair) in ctx.resolved.pairs.iter().enumerate() {
        let mut vis = Vec::new();
        let mut singles = (0.0, 0.0);
        for (bi, &basis) in TABLE_BASES.iter().enumerate() {
            let (xs, settings, harmonic) = fringe_settings(
                kind,
                SweepVar::Signal,
                basis,
                ctx.config.sfwm.phi_p,
                ctx.config.sweep.fringe_points,
            )?;
            let stream = 4000 + (kind as u64) * 100 + (pi * 2 + bi) as u64;
            let records = ctx.measure(
                kind.into(),
                pair,
                None,
                &settings,
                ctx.config.durations.table,
                stream,
            )?;
            if bi == 0 {
                let t: f64 = records.iter().map(|r| r.duration).sum();
                singles.0 = records.iter().map(|r| r.singles_s as f64).sum::<f64>() / t;
                singles.1 = records.iter().map(|r| r.singles_i as f64).sum::<f64>() / t;
            }
            vis.push(fit_visibility(&fringe_dataset(
                &xs,
                records,
                harmonic,
                format!("{basis}"),
            ))?);
        }
        rows.push(TableRow {
            pair: pair.label(),
            singles_s_rate: singles.0,
            singles_i_rate: singles.1,
            raw_0: vis[0].v_raw.value,
            raw_0_sigma: vis[0].v_raw.sigma,
            net_0: vis[0].v_net.value,
            net_0_sigma: vis[0].v_net.sigma,
            raw_45: vis[1].v_raw.value,
            raw_45_sigma: vis[1].v_raw.sigma,
            net_45: vis[1].v_net.value,
            net_45_sigma: vis[1].v_net.sigma,
        });
    }
    let mut out = Artifacts::default();
    out.csv("multiplex_table.csv", &ctx.provenance, &rows)?;
    Ok((out, rows))
}
