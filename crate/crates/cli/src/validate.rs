//! Invariant suite behind the `validate` subcommand.

use std::f64::consts::{PI, SQRT_2};

use entangle_core::analysis::{
    analytic_car, chsh_s_from_counts, exact_chsh_counts, exact_tomography_counts, fit_visibility,
    mle_reconstruct, tomography_settings, ChshSettings, FringeDataset, MleOptions, TomographyData,
};
use entangle_core::quantum::{density_from_pure, is_physical, PureState2Q};
use entangle_core::sim::{
    analytic_coincidence_prob, derive_seed, expected_clicks, simulate_counts, AnalyzerSetting,
    CountRecord, Slot,
};
use entangle_core::source::{polarization_state, timebin_state, SourceKind};
use serde::Serialize;

use crate::experiments::RunContext;
use crate::output::Artifacts;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(
    name: impl Into<String>,
    passed: bool,
    value: f64,
    limit: f64,
    detail: impl Into<String>,
) -> Check {
    Check {
        name: name.into(),
        passed,
        value,
        limit,
        detail: detail.into(),
    }
}

/// Six settings per source kind spanning the analyzer parameters.
pub fn oracle_settings(kind: SourceKind) -> Vec<AnalyzerSetting> {
    match kind {
        SourceKind::Polarization => vec![
            AnalyzerSetting::polarization(0.0, 0.0),
            AnalyzerSetting::polarization(PI / 8.0, 0.0),
            AnalyzerSetting::polarization(PI / 4.0, PI / 4.0),
            AnalyzerSetting::polarization(PI / 2.0, 0.0),
            AnalyzerSetting::polarization(-PI / 8.0, -PI / 4.0),
            AnalyzerSetting::Polarization {
                theta_s: PI / 4.0,
                theta_i: PI / 4.0,
                chi_s: PI / 2.0,
                chi_i: PI / 2.0,
            },
        ],
        SourceKind::TimeBin => vec![
            AnalyzerSetting::timebin_central(0.0, 0.0, 0.0),
            AnalyzerSetting::timebin_central(0.0, PI / 2.0, 0.0),
            AnalyzerSetting::timebin_central(0.0, PI, 0.0),
            AnalyzerSetting::timebin_central(PI / 4.0, 0.0, PI / 4.0),
            AnalyzerSetting::TimeBin {
                phi_p: 0.0,
                phi_s: 0.0,
                phi_i: 0.0,
                slot_s: Slot::Early,
                slot_i: Slot::Early,
            },
            AnalyzerSetting::TimeBin {
                phi_p: 0.0,
                phi_s: 0.0,
                phi_i: 0.0,
                slot_s: Slot::Early,
                slot_i: Slot::Late,
            },
        ],
    }
}

/// Monte-Carlo coincidences at 1e6 pulses against the closed-form click
/// probabilities of the configured setup, dead time switched off (the
/// closed form has none). Four standard deviations per setting.
fn oracle_agreement(ctx: &RunContext) -> anyhow::Result<Vec<Check>> {
    let pair = ctx.resolved.pairs[0];
    let mut out = Vec::new();
    for (ki, kind) in [SourceKind::Polarization, SourceKind::TimeBin]
        .into_iter()
        .enumerate()
    {
        let (src, app) = ctx.resolved.setup(kind);
        let mut app = app.clone();
        app.detector_s.dead_time = 0.0;
        app.detector_i.dead_time = 0.0;
        let duration = 1e6 / src.pump.repetition_rate;
        let mut worst: f64 = 0.0;
        for (k, setting) in oracle_settings(kind).iter().enumerate() {
            let seed = derive_seed(derive_seed(ctx.seed, 5000 + ki as u64), k as u64);
            let rec: CountRecord = simulate_counts(src, &pair, setting, &app, duration, seed)?;
            let mean = expected_clicks(src, &pair, setting, &app).coincidences * rec.pulses as f64;
            worst = worst.max((rec.coincidences as f64 - mean).abs() / mean.max(1.0).sqrt());
        }
        out.push(check(
            format!("oracle_agreement_{kind:?}").to_lowercase(),
            worst < 4.0,
            worst,
            4.0,
            "max |z| over 6 settings, 1e6 pulses",
        ));
    }
    Ok(out)
}

fn ideal_visibility() -> anyhow::Result<Check> {
    let psi = polarization_state(1.0, 0.0);
    let n = 24;
    let points = (0..n)
        .map(|k| {
            let x = PI * k as f64 / n as f64;
            let s = AnalyzerSetting::polarization(x, 0.0);
            let mut r = CountRecord::empty(s);
            r.coincidences = (analytic_coincidence_prob(&psi, &s) * 1e9).round() as u64;
            (x, r)
        })
        .collect();
    let v = fit_visibility(&FringeDataset {
        points,
        basis_label: "0".into(),
        harmonic: 2.0,
    })?;
    let dev = (v.v_raw.value - 1.0).abs();
    Ok(check(
        "ideal_polarization_visibility",
        dev < 1e-6,
        v.v_raw.value,
        1.0,
        "exact counts of the maximally entangled state",
    ))
}

fn tomography_identity(ctx: &RunContext) -> anyhow::Result<Vec<Check>> {
    let mut out = Vec::new();
    let phi_p = ctx.config.sfwm.phi_p;
    for (kind, psi) in [
        (SourceKind::Polarization, PureState2Q::phi_plus()),
        (SourceKind::TimeBin, timebin_state(phi_p)),
    ] {
        let settings = tomography_settings(kind, phi_p);
        let counts = exact_tomography_counts(&density_from_pure(&psi), &settings, 1e6);
        let fit = mle_reconstruct(
            &TomographyData::new(settings, counts)?,
            &MleOptions::default(),
        )?;
        let f = fit.fidelity(&psi);
        let ok = f >= 0.9999 && is_physical(&fit.rho, 1e-9);
        out.push(check(
            format!("tomography_identity_{kind:?}").to_lowercase(),
            ok,
            f,
            0.9999,
            "MLE on exact counts, physical",
        ));
    }
    Ok(out)
}

fn tsirelson(ctx: &RunContext) -> anyhow::Result<Vec<Check>> {
    let settings = ChshSettings::maximal();
    let bell = chsh_s_from_counts(&exact_chsh_counts(
        &density_from_pure(&PureState2Q::phi_plus()),
        &settings,
        1e6,
    ))?;
    let dev = (bell.s.value - 2.0 * SQRT_2).abs();
    let emitted = ctx
        .resolved
        .source
        .emitted_state(SourceKind::Polarization, None);
    let s = chsh_s_from_counts(&exact_chsh_counts(&emitted, &settings, 1e6))?
        .s
        .value;
    Ok(vec![
        check(
            "chsh_bell_state",
            dev < 1e-9,
            bell.s.value,
            2.0 * SQRT_2,
            "exact counts, |S - 2√2| < 1e-9",
        ),
        check(
            "chsh_tsirelson_bound",
            s <= 2.0 * SQRT_2 + 1e-9,
            s,
            2.0 * SQRT_2,
            "configured state",
        ),
    ])
}

fn emitted_physical(ctx: &RunContext) -> Vec<Check> {
    [SourceKind::Polarization, SourceKind::TimeBin]
        .into_iter()
        .map(|kind| {
            let (src, _) = ctx.resolved.setup(kind);
            let rho = src.emitted_state(kind, None);
            let tr = rho.trace().re;
            check(
                format!("emitted_state_physical_{kind:?}").to_lowercase(),
                is_physical(&rho, 1e-10),
                tr,
                1.0,
                "unit trace, PSD, Hermitian",
            )
        })
        .collect()
}

fn calibration(ctx: &RunContext) -> anyhow::Result<Option<Check>> {
    let Some(cal) = &ctx.config.calibration else {
        return Ok(None);
    };
    let pair = ctx.config.pair(&cal.pair)?;
    let mut src = ctx.resolved.source.clone();
    src.pump.average_power = cal.target_power;
    let car = analytic_car(&src, &pair, &ctx.resolved.apparatus, cal.model)?;
    let dev = (car - cal.target_car).abs() / cal.target_car;
    Ok(Some(check(
        "calibration_anchor",
        dev < 1e-6,
        car,
        cal.target_car,
        format!("analytic CAR of {} at {} W", pair.label(), cal.target_power),
    )))
}

pub fn run(ctx: &RunContext) -> anyhow::Result<Report> {
    let mut checks = Vec::new();
    checks.push(ideal_visibility()?);
    checks.extend(tsirelson(ctx)?);
    checks.extend(tomography_identity(ctx)?);
    checks.extend(emitted_physical(ctx));
    checks.extend(calibration(ctx)?);
    checks.extend(oracle_agreement(ctx)?);
    Ok(Report {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

pub fn cmd_validate(ctx: &RunContext) -> anyhow::Result<(Artifacts, Report)> {
    let report = run(ctx)?;
    let mut text = String::new();
    for c in &report.checks {
        text.push_str(&format!(
            "{} {:<36} value={:.9} limit={:.9}  {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit,
            c.detail
        ));
    }
    text.push_str(if report.passed {
        "all checks passed\n"
    } else {
        "some checks FAILED\n"
    });
    let mut out = Artifacts::default();
    out.json("validate.json", &ctx.provenance, &report)?;
    out.text("validate.txt", text);
    Ok((out, report))
}
