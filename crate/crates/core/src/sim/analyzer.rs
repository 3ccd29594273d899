//! Measurement settings and the per-photon measurement operators they realize.
//!
//! A polarizer passes `cos θ|H⟩ + sin θ|V⟩` into a single time slot. An
//! unbalanced Michelson interferometer observed on one output port maps a
//! time-bin photon into three arrival slots with amplitude 1/2 per arm:
//!
//! * early: `|S⟩` through the short arm, weight 1/4
//! * central: `(|S⟩ + e^{iφ}|L⟩)/√2`, weight 1/2 (the two paths interfere)
//! * late: `|L⟩` through the long arm, weight 1/4
//!
//! so each slot is a rank-1 POVM element `w |e⟩⟨e|` and joint slot
//! probabilities follow from the Born rule on product kets.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    born_probability, density_from_pure, linear_polarization, DensityMatrix, Ket2, Projector,
    PureState2Q, TimeBinKet,
};
use crate::source::SourceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Early,
    Central,
    Late,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Early, Slot::Central, Slot::Late];

    pub fn index(self) -> usize {
        match self {
            Slot::Early => 0,
            Slot::Central => 1,
            Slot::Late => 2,
        }
    }

    fn code(self) -> char {
        match self {
            Slot::Early => 'e',
            Slot::Central => 'c',
            Slot::Late => 'l',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c {
            'e' => Some(Slot::Early),
            'c' => Some(Slot::Central),
            'l' => Some(Slot::Late),
            _ => None,
        }
    }
}

/// Analyzer configuration for one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyzerSetting {
    /// No analyzer: every photon reaches its detector (used for CAR).
    Open,
    /// Polarizers passing `cos θ|H⟩ + e^{iχ} sin θ|V⟩` on each arm (rad);
    /// `χ` is the retardance of an optional wave plate, 0 for linear analysis.
    Polarization {
        theta_s: f64,
        theta_i: f64,
        #[serde(default)]
        chi_s: f64,
        #[serde(default)]
        chi_i: f64,
    },
    /// Interferometer phases (rad) and the arrival slot counted on each arm.
    TimeBin {
        phi_p: f64,
        phi_s: f64,
        phi_i: f64,
        slot_s: Slot,
        slot_i: Slot,
    },
}

/// `cos θ|H⟩ + e^{iχ} sin θ|V⟩`.
pub fn elliptical_polarization(theta: f64, chi: f64) -> Ket2<f64> {
    [
        num_complex::Complex::new(theta.cos(), 0.0),
        num_complex::Complex::from_polar(theta.sin(), chi),
    ]
}

/// One measurement outcome of a single-photon analyzer.
#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub slot: usize,
    pub weight: f64,
    pub ket: Ket2<f64>,
}

impl AnalyzerSetting {
    pub fn polarization(theta_s: f64, theta_i: f64) -> Self {
        Self::Polarization {
            theta_s,
            theta_i,
            chi_s: 0.0,
            chi_i: 0.0,
        }
    }

    /// Time-bin setting post-selecting the central slot on both arms.
    pub fn timebin_central(phi_p: f64, phi_s: f64, phi_i: f64) -> Self {
        Self::TimeBin {
            phi_p,
            phi_s,
            phi_i,
            slot_s: Slot::Central,
            slot_i: Slot::Central,
        }
    }

    pub fn source_kind(&self) -> SourceKind {
        match self {
            Self::Open | Self::Polarization { .. } => SourceKind::Polarization,
            Self::TimeBin { .. } => SourceKind::TimeBin,
        }
    }

    /// Number of resolvable arrival slots per pulse.
    pub fn slot_count(&self) -> usize {
        match self {
            Self::TimeBin { .. } => 3,
            _ => 1,
        }
    }

    /// Slots (signal, idler) whose coincidences this setting records.
    pub fn counted_slots(&self) -> (usize, usize) {
        match *self {
            Self::TimeBin { slot_s, slot_i, .. } => (slot_s.index(), slot_i.index()),
            _ => (0, 0),
        }
    }

    pub fn pump_phase(&self) -> Option<f64> {
        match *self {
            Self::TimeBin { phi_p, .. } => Some(phi_p),
            _ => None,
        }
    }

    /// Measurement operators of the signal (`arm = 0`) or idler (`arm = 1`) analyzer.
    /// `None` means the arm has no analyzer.
    pub fn outcomes(&self, arm: usize) -> Option<Vec<Outcome>> {
        match *self {
            Self::Open => None,
            Self::Polarization {
                theta_s,
                theta_i,
                chi_s,
                chi_i,
            } => {
                let (theta, chi) = if arm == 0 {
                    (theta_s, chi_s)
                } else {
                    (theta_i, chi_i)
                };
                Some(vec![Outcome {
                    slot: 0,
                    weight: 1.0,
                    ket: elliptical_polarization(theta, chi),
                }])
            }
            Self::TimeBin { phi_s, phi_i, .. } => {
                let phi = if arm == 0 { phi_s } else { phi_i };
                Some(vec![
                    Outcome {
                        slot: 0,
                        weight: 0.25,
                        ket: TimeBinKet::Short.ket(),
                    },
                    Outcome {
                        slot: 1,
                        weight: 0.5,
                        ket: TimeBinKet::Superposition(phi).ket(),
                    },
                    Outcome {
                        slot: 2,
                        weight: 0.25,
                        ket: TimeBinKet::Long.ket(),
                    },
                ])
            }
        }
    }

    /// Rank-1 projector and throughput weight of the counted slot pair, so that
    /// the recorded coincidence probability is `weight * ⟨p|ρ|p⟩`.
    pub fn projector(&self) -> (Projector<f64>, f64) {
        match *self {
            Self::Open => {
                // identity is not rank-1; callers needing Open use joint_probabilities
                (
                    Projector::from_product(
                        &linear_polarization(0.0),
                        &linear_polarization(0.0),
                        "open",
                    ),
                    f64::NAN,
                )
            }
            Self::Polarization { .. } | Self::TimeBin { .. } => {
                let (a, b) = self.counted_slots();
                let out_s = self.outcomes(0).unwrap();
                let out_i = self.outcomes(1).unwrap();
                let es = out_s.iter().find(|o| o.slot == a).unwrap();
                let ei = out_i.iter().find(|o| o.slot == b).unwrap();
                (
                    Projector::from_product(&es.ket, &ei.ket, self.to_string()),
                    es.weight * ei.weight,
                )
            }
        }
    }
}

impl fmt::Display for AnalyzerSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Open => write!(f, "open"),
            Self::Polarization {
                theta_s,
                theta_i,
                chi_s,
                chi_i,
            } => {
                if *chi_s == 0.0 && *chi_i == 0.0 {
                    write!(f, "pol:{theta_s}:{theta_i}")
                } else {
                    write!(f, "pol:{theta_s}:{theta_i}:{chi_s}:{chi_i}")
                }
            }
            Self::TimeBin {
                phi_p,
                phi_s,
                phi_i,
                slot_s,
                slot_i,
            } => {
                write!(
                    f,
                    "tb:{phi_p}:{phi_s}:{phi_i}:{}{}",
                    slot_s.code(),
                    slot_i.code()
                )
            }
        }
    }
}

impl FromStr for AnalyzerSetting {
    type Err = Error;

    /// Parses `open`, `pol:<θs>:<θi>[:<χs>:<χi>]` or `tb:<φp>:<φs>:<φi>:<slots>` with
    /// angles in radians and slots two letters from `e`, `c`, `l`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid setting descriptor `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["open"] => Ok(Self::Open),
            ["pol", a, b] => Ok(Self::polarization(num(a)?, num(b)?)),
            ["pol", a, b, cs, ci] => Ok(Self::Polarization {
                theta_s: num(a)?,
                theta_i: num(b)?,
                chi_s: num(cs)?,
                chi_i: num(ci)?,
            }),
            ["tb", p, a, b, slots] => {
                let mut chars = slots.trim().chars();
                let slot_s = chars.next().and_then(Slot::from_code).ok_or_else(bad)?;
                let slot_i = chars.next().and_then(Slot::from_code).ok_or_else(bad)?;
                if chars.next().is_some() {
                    return Err(bad());
                }
                Ok(Self::TimeBin {
                    phi_p: num(p)?,
                    phi_s: num(a)?,
                    phi_i: num(b)?,
                    slot_s,
                    slot_i,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Joint detection-independent outcome probabilities of one pair.
///
/// `joint[a][b]` is the probability that the signal lands in outcome slot `a`
/// and the idler in `b`; `signal_only[a]` and `idler_only[b]` cover the cases
/// where the partner photon is rejected by its analyzer.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcomes {
    pub slots: usize,
    pub joint: [[f64; 3]; 3],
    pub signal_only: [f64; 3],
    pub idler_only: [f64; 3],
}

fn reduced_probability(rho: &DensityMatrix<f64>, arm: usize, o: &Outcome) -> f64 {
    let basis = [linear_polarization(0.0), linear_polarization(FRAC_PI_2)];
    basis
        .iter()
        .map(|b| {
            let p = if arm == 0 {
                Projector::from_product(&o.ket, b, "")
            } else {
                Projector::from_product(b, &o.ket, "")
            };
            born_probability(rho, &p).unwrap_or(0.0)
        })
        .sum::<f64>()
        * o.weight
}

pub fn pair_outcomes(rho: &DensityMatrix<f64>, setting: &AnalyzerSetting) -> PairOutcomes {
    let slots = setting.slot_count();
    let mut out = PairOutcomes {
        slots,
        joint: [[0.0; 3]; 3],
        signal_only: [0.0; 3],
        idler_only: [0.0; 3],
    };
    let (Some(os), Some(oi)) = (setting.outcomes(0), setting.outcomes(1)) else {
        out.joint[0][0] = 1.0;
        return out;
    };
    for a in &os {
        for b in &oi {
            let p = Projector::from_product(&a.ket, &b.ket, "");
            out.joint[a.slot][b.slot] =
                a.weight * b.weight * born_probability(rho, &p).unwrap_or(0.0);
        }
    }
    for a in &os {
        let row: f64 = out.joint[a.slot].iter().sum();
        out.signal_only[a.slot] = (reduced_probability(rho, 0, a) - row).max(0.0);
    }
    for b in &oi {
        let col: f64 = (0..3).map(|a| out.joint[a][b.slot]).sum();
        out.idler_only[b.slot] = (reduced_probability(rho, 1, b) - col).max(0.0);
    }
    out
}

/// Per-pair probability that the counted slots of `setting` both receive a
/// photon, before loss and detector efficiency.
///
/// For the `(|SS⟩ − e^{2iφ_p}|LL⟩)/√2` state and central-slot post-selection
/// this is `(1 − cos(2φ_p − φ_s − φ_i))/16`.
pub fn analytic_coincidence_prob(state: &PureState2Q<f64>, setting: &AnalyzerSetting) -> f64 {
    analytic_coincidence_prob_mixed(&density_from_pure(state), setting)
}

pub fn analytic_coincidence_prob_mixed(rho: &DensityMatrix<f64>, setting: &AnalyzerSetting) -> f64 {
    match setting {
        AnalyzerSetting::Open => 1.0,
        _ => {
            let (p, w) = setting.projector();
            w * born_probability(rho, &p).unwrap_or(0.0)
        }
    }
}

/// Per-photon probability that a noise photon (maximally mixed in the encoded
/// degree of freedom) lands in each slot.
pub fn noise_slot_probabilities(setting: &AnalyzerSetting, arm: usize) -> [f64; 3] {
    let mut p = [0.0; 3];
    match setting.outcomes(arm) {
        None => p[0] = 1.0,
        Some(os) => {
            for o in os {
                p[o.slot] += 0.5 * o.weight;
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::timebin_state;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, TAU};

    #[test]
    fn bell_state_parallel_polarizers() {
        let p = analytic_coincidence_prob(
            &PureState2Q::phi_plus(),
            &AnalyzerSetting::polarization(0.0, 0.0),
        );
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn timebin_fringe_minimum_at_zero_phase() {
        let p = analytic_coincidence_prob(
            &timebin_state(0.0),
            &AnalyzerSetting::timebin_central(0.0, 0.0, 0.0),
        );
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn timebin_fringe_law_and_periods() {
        for i in 0..24 {
            let x = TAU * i as f64 / 24.0;
            // signal sweep: period 2π
            let p_s = analytic_coincidence_prob(
                &timebin_state(0.0),
                &AnalyzerSetting::timebin_central(0.0, x, 0.0),
            );
            assert_abs_diff_eq!(p_s, (1.0 - (-x).cos()) / 16.0, epsilon = 1e-15);
            let p_s2 = analytic_coincidence_prob(
                &timebin_state(0.0),
                &AnalyzerSetting::timebin_central(0.0, x + TAU, 0.0),
            );
            assert_abs_diff_eq!(p_s, p_s2, epsilon = 1e-14);
            // pump sweep: period π
            let p_p = analytic_coincidence_prob(
                &timebin_state(x),
                &AnalyzerSetting::timebin_central(x, 0.0, 0.3),
            );
            let p_p2 = analytic_coincidence_prob(
                &timebin_state(x + PI),
                &AnalyzerSetting::timebin_central(x + PI, 0.0, 0.3),
            );
            assert_abs_diff_eq!(p_p, (1.0 - (2.0 * x - 0.3).cos()) / 16.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p_p, p_p2, epsilon = 1e-14);
        }
    }

    #[test]
    fn slot_probabilities_are_phase_independent_at_the_edges() {
        // brute force over amplitude paths: photon from bin b through arm u lands in slot b + u
        let psi = timebin_state(0.4);
        for &phi_s in &[0.0, 0.7, 1.9, 3.3] {
            let setting = AnalyzerSetting::TimeBin {
                phi_p: 0.4,
                phi_s,
                phi_i: 1.1,
                slot_s: Slot::Central,
                slot_i: Slot::Central,
            };
            let out = pair_outcomes(&density_from_pure(&psi), &setting);
            let amps = psi.amplitudes();
            let mut brute = [[num_complex::Complex::new(0.0, 0.0); 3]; 3];
            for bs in 0..2 {
                for bi in 0..2 {
                    for us in 0..2 {
                        for ui in 0..2 {
                            let ph = phi_s * us as f64 + 1.1 * ui as f64;
                            brute[bs + us][bi + ui] +=
                                amps[2 * bs + bi] * num_complex::Complex::from_polar(0.25, ph);
                        }
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    assert_abs_diff_eq!(out.joint[a][b], brute[a][b].norm_sqr(), epsilon = 1e-15);
                }
            }
            assert_abs_diff_eq!(out.joint[0][0], 1.0 / 32.0, epsilon = 1e-15);
            assert_abs_diff_eq!(out.joint[2][2], 1.0 / 32.0, epsilon = 1e-15);
            // a single output port is observed, so only the off-centre slots are
            // phase independent; the centre carries the fringe (1 - cos)/16
            let outer: f64 = out.joint.iter().flatten().sum::<f64>() - out.joint[1][1];
            assert_abs_diff_eq!(outer, 3.0 / 16.0, epsilon = 1e-14);
            assert_abs_diff_eq!(
                out.joint[1][1],
                (1.0 - (0.8 - phi_s - 1.1f64).cos()) / 16.0,
                epsilon = 1e-15
            );
            // each photon leaves the observed port with probability 1/2
            let signal_total: f64 =
                out.joint.iter().flatten().sum::<f64>() + out.signal_only.iter().sum::<f64>();
            assert_abs_diff_eq!(signal_total, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn polarization_outcomes_partition() {
        let rho = density_from_pure(&PureState2Q::phi_plus());
        let out = pair_outcomes(&rho, &AnalyzerSetting::polarization(0.3, 0.3 + FRAC_PI_2));
        assert_abs_diff_eq!(out.joint[0][0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.signal_only[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.idler_only[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn descriptor_round_trip() {
        for s in [
            AnalyzerSetting::Open,
            AnalyzerSetting::polarization(FRAC_PI_8, -FRAC_PI_4),
            AnalyzerSetting::Polarization {
                theta_s: 0.25,
                theta_i: 0.5,
                chi_s: FRAC_PI_2,
                chi_i: 0.0,
            },
            AnalyzerSetting::TimeBin {
                phi_p: 0.0,
                phi_s: FRAC_PI_2,
                phi_i: 0.0,
                slot_s: Slot::Early,
                slot_i: Slot::Late,
            },
        ] {
            assert_eq!(s.to_string().parse::<AnalyzerSetting>().unwrap(), s);
        }
        assert!("tb:0:0:0:cx".parse::<AnalyzerSetting>().is_err());
        assert!("pol:1".parse::<AnalyzerSetting>().is_err());
    }

    #[test]
    fn noise_slot_weights() {
        assert_eq!(
            noise_slot_probabilities(&AnalyzerSetting::Open, 0),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            noise_slot_probabilities(&AnalyzerSetting::polarization(0.2, 0.0), 1),
            [0.5, 0.0, 0.0]
        );
        assert_eq!(
            noise_slot_probabilities(&AnalyzerSetting::timebin_central(0.0, 0.0, 0.0), 0),
            [0.125, 0.25, 0.125]
        );
    }
}
