//! Pulse-train Monte Carlo.
//!
//! Every detected-photon mechanism (a pair landing in given slots of both
//! arms, a pair photon seen on one arm only, Raman noise, dark counts) is an
//! independent Poisson stream per pulse, by Poisson thinning of the pair and
//! noise emission. Pulses without any event are skipped geometrically, so the
//! cost scales with the number of detector events rather than pulses.
//!
//! The train is cut into fixed blocks of [`BLOCK_PULSES`] pulses, each with
//! its own ChaCha stream derived from the seed and block index. Blocks run in
//! parallel and merge in index order, so results do not depend on the number
//! of worker threads. Dead-time state does not cross a block boundary; the
//! error this introduces is below `dead_time * singles_rate` clicks per
//! boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const BLOCK_PULSES: u64 = 1 << 22;
pub const MAX_SLOTS: usize = 3;

/// Effect of one event: the slot hit on the signal and/or idler detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEffect {
    pub signal: Option<u8>,
    pub idler: Option<u8>,
}

/// Independent Poisson event streams of a single pulse.
#[derive(Debug, Clone)]
pub struct StreamSet {
    pub slots: usize,
    rates: Vec<f64>,
    effects: Vec<StreamEffect>,
    cumulative: Vec<f64>,
    total: f64,
}

impl StreamSet {
    pub fn new(slots: usize) -> Self {
        assert!((1..=MAX_SLOTS).contains(&slots));
        Self {
            slots,
            rates: Vec::new(),
            effects: Vec::new(),
            cumulative: Vec::new(),
            total: 0.0,
        }
    }

    /// Adds a stream with mean `rate` events per pulse; zero rates are dropped.
    pub fn push(&mut self, rate: f64, effect: StreamEffect) {
        assert!(
            rate >= 0.0 && rate.is_finite(),
            "stream rate must be finite and >= 0"
        );
        if rate == 0.0 || (effect.signal.is_none() && effect.idler.is_none()) {
            return;
        }
        self.total += rate;
        self.rates.push(rate);
        self.effects.push(effect);
        self.cumulative.push(self.total);
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> StreamEffect {
        let u = rng.random::<f64>() * self.total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.effects.len() - 1);
        self.effects[idx]
    }

    /// Mean events per pulse hitting `slot` on the signal (`arm = 0`) or idler detector.
    pub fn arm_rate(&self, arm: usize, slot: usize) -> f64 {
        self.rates
            .iter()
            .zip(&self.effects)
            .filter(|(_, e)| if arm == 0 { e.signal } else { e.idler } == Some(slot as u8))
            .map(|(r, _)| r)
            .sum()
    }

    fn joint_rate(&self, a: usize, b: usize) -> f64 {
        self.rates
            .iter()
            .zip(&self.effects)
            .filter(|(_, e)| e.signal == Some(a as u8) && e.idler == Some(b as u8))
            .map(|(r, _)| r)
            .sum()
    }

    /// Exact per-pulse probabilities without dead time: signal click in `a`,
    /// idler click in `b`, and both in the same pulse.
    pub fn click_probabilities(&self, a: usize, b: usize) -> (f64, f64, f64) {
        let la = self.arm_rate(0, a);
        let lb = self.arm_rate(1, b);
        let lab = self.joint_rate(a, b);
        let pa = -(-la).exp_m1();
        let pb = -(-lb).exp_m1();
        let p_none_either = (-(la + lb - lab)).exp();
        let pab = 1.0 - (-la).exp() - (-lb).exp() + p_none_either;
        (pa, pb, pab.max(0.0))
    }
}

/// Timing of the pulse train as seen by the detectors.
#[derive(Debug, Clone, Copy)]
pub struct Timing {
    /// Pump period, s.
    pub period: f64,
    /// Spacing of adjacent arrival slots, s.
    pub slot_spacing: f64,
    pub dead_time_s: f64,
    pub dead_time_i: f64,
}

/// Slot-resolved tallies of a pulse train.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotCounts {
    pub pulses: u64,
    pub singles_s: [u64; MAX_SLOTS],
    pub singles_i: [u64; MAX_SLOTS],
    pub coincidences: [[u64; MAX_SLOTS]; MAX_SLOTS],
    pub accidentals: [[u64; MAX_SLOTS]; MAX_SLOTS],
}

#[derive(Debug, Clone, Default)]
struct BlockCounts {
    counts: SlotCounts,
    /// Idler clicks in the first pulse of the block.
    first_idler: u8,
    /// Signal clicks in the last pulse of the block.
    last_signal: u8,
}

struct DeadTime {
    last: f64,
    dead: f64,
}

impl DeadTime {
    fn new(dead: f64) -> Self {
        Self {
            last: f64::NEG_INFINITY,
            dead,
        }
    }

    /// Filters a slot mask in time order, returning the slots that click.
    fn filter(&mut self, mask: u8, pulse_time: f64, slot_spacing: f64, slots: usize) -> u8 {
        let mut out = 0u8;
        for s in 0..slots {
            if mask & (1 << s) == 0 {
                continue;
            }
            let t = pulse_time + s as f64 * slot_spacing;
            if t - self.last >= self.dead {
                out |= 1 << s;
                self.last = t;
            }
        }
        out
    }
}

/// Zero-truncated Poisson sampler by inversion of a precomputed CDF.
struct PositivePoisson {
    cdf: Vec<f64>,
}

impl PositivePoisson {
    fn new(lambda: f64) -> Self {
        let norm = -(-lambda).exp_m1();
        let mut cdf = Vec::new();
        let mut term = (-lambda).exp() * lambda / norm;
        let mut acc = term;
        let mut k = 1u64;
        cdf.push(acc);
        while acc < 1.0 - f64::EPSILON && k < 10_000 {
            k += 1;
            term *= lambda / k as f64;
            acc += term;
            cdf.push(acc);
            if term < f64::EPSILON * acc {
                break;
            }
        }
        Self { cdf }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.random();
        let k = self
            .cdf
            .iter()
            .position(|&c| u <= c)
            .unwrap_or(self.cdf.len() - 1);
        k as u64 + 1
    }
}

/// Failures before the first success of a Bernoulli(p) sequence, by inversion.
struct GeometricSkip {
    inv_log_q: f64,
}

impl GeometricSkip {
    fn new(p: f64) -> Self {
        Self {
            inv_log_q: 1.0 / (-p).ln_1p(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        // u in (0, 1] keeps ln finite
        let u = 1.0 - rng.random::<f64>();
        let k = (u.ln() * self.inv_log_q).floor();
        if k >= u64::MAX as f64 {
            u64::MAX
        } else {
            k as u64
        }
    }
}

fn simulate_block(
    streams: &StreamSet,
    timing: &Timing,
    seed: u64,
    block: u64,
    start: u64,
    len: u64,
) -> BlockCounts {
    let mut out = BlockCounts::default();
    out.counts.pulses = len;
    let lambda = streams.total_rate();
    if lambda <= 0.0 || len == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let p_any = -(-lambda).exp_m1();
    let gap = GeometricSkip::new(p_any);
    let multiplicity = PositivePoisson::new(lambda);
    let slots = streams.slots;
    let mut dead_s = DeadTime::new(timing.dead_time_s);
    let mut dead_i = DeadTime::new(timing.dead_time_i);
    let mut prev: Option<(u64, u8)> = None;
    let end = start + len;
    let mut pulse = start;
    loop {
        let skip = gap.sample(&mut rng);
        pulse = match pulse.checked_add(skip) {
            Some(p) if p < end => p,
            _ => break,
        };
        let mut mask_s = 0u8;
        let mut mask_i = 0u8;
        for _ in 0..multiplicity.sample(&mut rng) {
            let e = streams.pick(&mut rng);
            if let Some(s) = e.signal {
                mask_s |= 1 << s;
            }
            if let Some(s) = e.idler {
                mask_i |= 1 << s;
            }
        }
        let t = pulse as f64 * timing.period;
        let click_s = dead_s.filter(mask_s, t, timing.slot_spacing, slots);
        let click_i = dead_i.filter(mask_i, t, timing.slot_spacing, slots);
        let c = &mut out.counts;
        for a in 0..slots {
            if click_s & (1 << a) != 0 {
                c.singles_s[a] += 1;
            }
            if click_i & (1 << a) != 0 {
                c.singles_i[a] += 1;
            }
        }
        for a in 0..slots {
            if click_s & (1 << a) == 0 {
                continue;
            }
            for b in 0..slots {
                if click_i & (1 << b) != 0 {
                    c.coincidences[a][b] += 1;
                }
            }
        }
        if let Some((pp, prev_s)) = prev {
            if pp + 1 == pulse {
                add_accidentals(c, prev_s, click_i, slots);
            }
        }
        if pulse == start {
            out.first_idler = click_i;
        }
        if pulse == end - 1 {
            out.last_signal = click_s;
        }
        prev = Some((pulse, click_s));
        pulse += 1;
        if pulse >= end {
            break;
        }
    }
    out
}

fn add_accidentals(c: &mut SlotCounts, signal: u8, idler: u8, slots: usize) {
    for a in 0..slots {
        if signal & (1 << a) == 0 {
            continue;
        }
        for b in 0..slots {
            if idler & (1 << b) != 0 {
                c.accidentals[a][b] += 1;
            }
        }
    }
}

/// Runs `pulses` pulses and returns slot-resolved counts. Deterministic in `seed`.
pub fn run_pulse_train(streams: &StreamSet, timing: &Timing, pulses: u64, seed: u64) -> SlotCounts {
    let n_blocks = pulses.div_ceil(BLOCK_PULSES);
    let blocks: Vec<BlockCounts> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_PULSES;
            let len = BLOCK_PULSES.min(pulses - start);
            simulate_block(streams, timing, seed, b, start, len)
        })
        .collect();
    let mut total = SlotCounts::default();
    let mut prev_last: Option<u8> = None;
    for blk in &blocks {
        let c = &blk.counts;
        total.pulses += c.pulses;
        for a in 0..MAX_SLOTS {
            total.singles_s[a] += c.singles_s[a];
            total.singles_i[a] += c.singles_i[a];
            for b in 0..MAX_SLOTS {
                total.coincidences[a][b] += c.coincidences[a][b];
                total.accidentals[a][b] += c.accidentals[a][b];
            }
        }
        if let Some(last) = prev_last {
            add_accidentals(&mut total, last, blk.first_idler, streams.slots);
        }
        prev_last = Some(blk.last_signal);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timing() -> Timing {
        Timing {
            period: 1.0 / 27.9e6,
            slot_spacing: 1.6e-9,
            dead_time_s: 0.0,
            dead_time_i: 0.0,
        }
    }

    fn pair_streams(mu: f64) -> StreamSet {
        let mut s = StreamSet::new(1);
        s.push(
            mu * 0.3,
            StreamEffect {
                signal: Some(0),
                idler: Some(0),
            },
        );
        s.push(
            mu * 0.2,
            StreamEffect {
                signal: Some(0),
                idler: None,
            },
        );
        s.push(
            mu * 0.1,
            StreamEffect {
                signal: None,
                idler: Some(0),
            },
        );
        s
    }

    #[test]
    fn zero_rates_give_zero_counts() {
        let mut s = StreamSet::new(3);
        s.push(
            0.0,
            StreamEffect {
                signal: Some(0),
                idler: Some(0),
            },
        );
        let c = run_pulse_train(&s, &timing(), 1_000_000, 1);
        assert_eq!(
            c,
            SlotCounts {
                pulses: 1_000_000,
                ..Default::default()
            }
        );
    }

    #[test]
    fn counts_match_exact_click_probabilities() {
        let s = pair_streams(0.2);
        let n = 2_000_000u64;
        let c = run_pulse_train(&s, &timing(), n, 11);
        let (pa, pb, pab) = s.click_probabilities(0, 0);
        for (got, p) in [
            (c.singles_s[0], pa),
            (c.singles_i[0], pb),
            (c.coincidences[0][0], pab),
            (c.accidentals[0][0], pa * pb),
        ] {
            let mean = p * n as f64;
            assert!(
                (got as f64 - mean).abs() < 4.0 * mean.sqrt(),
                "{got} vs {mean}"
            );
        }
    }

    #[test]
    fn independent_of_thread_count_and_seeded() {
        let s = pair_streams(0.05);
        let n = 3 * BLOCK_PULSES + 17;
        let a = run_pulse_train(&s, &timing(), n, 5);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_pulse_train(&s, &timing(), n, 5));
        assert_eq!(a, b);
        assert_ne!(a, run_pulse_train(&s, &timing(), n, 6));
    }

    #[test]
    fn dead_time_saturates() {
        let mut s = StreamSet::new(1);
        s.push(
            0.5,
            StreamEffect {
                signal: Some(0),
                idler: None,
            },
        );
        let dead = 10e-6;
        let t = Timing {
            dead_time_s: dead,
            ..timing()
        };
        let n = 27_900_000u64; // one second
        let c = run_pulse_train(&s, &t, n, 3);
        let duration = n as f64 * t.period;
        assert!((c.singles_s[0] as f64) <= duration / dead + 1.0 + n.div_ceil(BLOCK_PULSES) as f64);
        assert!(c.singles_s[0] as f64 > 0.95 * duration / dead);
    }

    #[test]
    fn positive_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        for lambda in [0.01, 0.7, 5.0] {
            let d = PositivePoisson::new(lambda);
            let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
            let expected = lambda / (1.0 - (-lambda).exp());
            assert!(
                (mean - expected).abs() < 0.01 * expected,
                "{lambda}: {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn geometric_skip_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        for p in [1e-4, 0.05, 0.5, 1.0] {
            let g = GeometricSkip::new(p);
            let mean = (0..n).map(|_| g.sample(&mut rng) as f64).sum::<f64>() / n as f64;
            let expected = (1.0 - p) / p;
            assert!(
                (mean - expected).abs() <= 0.02 * expected + 1e-9,
                "{p}: {mean} vs {expected}"
            );
        }
    }
}
