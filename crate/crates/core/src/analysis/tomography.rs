use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use super::{CountMode, Estimate};
use crate::error::{Error, Result};
use crate::linalg::{solve_real, CMatrix};
use crate::quantum::{fidelity, DensityMatrix, Ket4, PureState2Q};
use crate::sim::{derive_seed, AnalyzerSetting, CountRecord, Slot};
use crate::source::SourceKind;

type C64 = Complex<f64>;

/// The 16 product settings `{0, 1, (0+1)/√2, (0+i1)/√2}^⊗2`, signal outer.
///
/// Polarization uses linear analyzers at 0, π/2, π/4 and a quarter-wave
/// retarded analyzer at π/4. Time-bin uses early/late slot selection for the
/// basis states and central-slot post-selection at interferometer phases 0
/// and π/2 for the superpositions, with the pump interferometer at `phi_p`.
pub fn tomography_settings(kind: SourceKind, phi_p: f64) -> Vec<AnalyzerSetting> {
    let mut out = Vec::with_capacity(16);
    for s in 0..4 {
        for i in 0..4 {
            out.push(match kind {
                SourceKind::Polarization => {
                    let pol = [
                        (0.0, 0.0),
                        (FRAC_PI_2, 0.0),
                        (FRAC_PI_4, 0.0),
                        (FRAC_PI_4, FRAC_PI_2),
                    ];
                    AnalyzerSetting::Polarization {
                        theta_s: pol[s].0,
                        theta_i: pol[i].0,
                        chi_s: pol[s].1,
                        chi_i: pol[i].1,
                    }
                }
                SourceKind::TimeBin => {
                    let tb = [
                        (Slot::Early, 0.0),
                        (Slot::Late, 0.0),
                        (Slot::Central, 0.0),
                        (Slot::Central, FRAC_PI_2),
                    ];
                    AnalyzerSetting::TimeBin {
                        phi_p,
                        phi_s: tb[s].1,
                        phi_i: tb[i].1,
                        slot_s: tb[s].0,
                        slot_i: tb[i].0,
                    }
                }
            });
        }
    }
    out
}

/// Counts paired with the rank-1 operators `w_k |p_k⟩⟨p_k|` they estimate,
/// up to a common unknown scale.
#[derive(Debug, Clone)]
pub struct TomographyData {
    pub settings: Vec<AnalyzerSetting>,
    pub counts: Vec<f64>,
    pub kets: Vec<Ket4<f64>>,
    pub weights: Vec<f64>,
}

impl TomographyData {
    pub fn new(settings: Vec<AnalyzerSetting>, counts: Vec<f64>) -> Result<Self> {
        if settings.len() != counts.len() {
            return Err(Error::InsufficientData(
                "one count per setting required".into(),
            ));
        }
        if settings.len() < 16 {
            return Err(Error::InsufficientData(format!(
                "{} settings, tomography needs at least 16",
                settings.len()
            )));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InsufficientData(
                "counts must be finite and non-negative".into(),
            ));
        }
        let mut kets = Vec::with_capacity(settings.len());
        let mut weights = Vec::with_capacity(settings.len());
        for s in &settings {
            if matches!(s, AnalyzerSetting::Open) {
                return Err(Error::InvalidConfig(
                    "open setting carries no tomographic information".into(),
                ));
            }
            let (p, w) = s.projector();
            kets.push(*p.ket());
            weights.push(w);
        }
        Ok(Self {
            settings,
            counts,
            kets,
            weights,
        })
    }

    pub fn from_records(records: &[CountRecord], mode: CountMode) -> Result<Self> {
        Self::new(
            records.iter().map(|r| r.setting).collect(),
            records.iter().map(|r| mode.counts(r)).collect(),
        )
    }

    fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

fn pauli(k: usize) -> [[C64; 2]; 2] {
    let (o, z, i) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    match k {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -i], [i, z]],
        _ => [[o, z], [z, -o]],
    }
}

fn pauli_pair(a: usize, b: usize) -> [[C64; 4]; 4] {
    let (pa, pb) = (pauli(a), pauli(b));
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = pa[r / 2][c / 2] * pb[r % 2][c % 2];
        }
    }
    m
}

fn expect(m: &[[C64; 4]; 4], v: &Ket4<f64>) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..4 {
        for c in 0..4 {
            acc += v[r].conj() * m[r][c] * v[c];
        }
    }
    acc.re
}

/// Least-squares inversion of `n_k ∝ w_k ⟨p_k|ρ|p_k⟩` over the 16 Pauli
/// coefficients, normalized to unit trace. The result may be unphysical.
pub fn linear_inversion(data: &TomographyData) -> Result<DensityMatrix<f64>> {
    if !(data.total() > 0.0) {
        return Err(Error::ZeroCounts);
    }
    let basis: Vec<[[C64; 4]; 4]> = (0..16).map(|k| pauli_pair(k / 4, k % 4)).collect();
    let design: Vec<Vec<f64>> = data
        .kets
        .iter()
        .zip(&data.weights)
        .map(|(v, w)| basis.iter().map(|b| w * expect(b, v) / 4.0).collect())
        .collect();
    let mut normal = vec![0.0; 256];
    let mut rhs = vec![0.0; 16];
    for (row, n) in design.iter().zip(&data.counts) {
        for i in 0..16 {
            rhs[i] += row[i] * n;
            for j in 0..16 {
                normal[16 * i + j] += row[i] * row[j];
            }
        }
    }
    let x = solve_real(&normal, &rhs, 1e-10).ok_or(Error::SingularDesign)?;
    if !(x[0] > 0.0) {
        return Err(Error::ZeroCounts);
    }
    let mut m = CMatrix::<f64>::zeros(4);
    for (coef, b) in x.iter().zip(&basis) {
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] += b[r][c] * (coef / (4.0 * x[0]));
            }
        }
    }
    // symmetrize away rounding
    let mut h = CMatrix::<f64>::zeros(4);
    for r in 0..4 {
        for c in 0..4 {
            h[(r, c)] = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
        }
    }
    Ok(DensityMatrix::from_matrix(h))
}

/// Lower-triangular `T` packed as 4 real diagonal entries followed by the
/// real and imaginary parts of the 6 sub-diagonal entries, row by row.
fn unpack(t: &[f64]) -> [[C64; 4]; 4] {
    let mut m = [[C64::new(0.0, 0.0); 4]; 4];
    for d in 0..4 {
        m[d][d] = C64::new(t[d], 0.0);
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            m[r][c] = C64::new(t[k], t[k + 1]);
            k += 2;
        }
    }
    m
}

fn pack(m: &[[C64; 4]; 4]) -> Vec<f64> {
    let mut t = vec![0.0; 16];
    for d in 0..4 {
        t[d] = m[d][d].re;
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            t[k] = m[r][c].re;
            t[k + 1] = m[r][c].im;
            k += 2;
        }
    }
    t
}

fn apply(m: &[[C64; 4]; 4], v: &Ket4<f64>) -> [C64; 4] {
    std::array::from_fn(|r| (0..4).map(|c| m[r][c] * v[c]).sum())
}

fn rho_from_t(t: &[f64]) -> DensityMatrix<f64> {
    let m = unpack(t);
    let mut rho = CMatrix::<f64>::zeros(4);
    let mut tr = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            rho[(r, c)] = (0..4).map(|k| m[k][r].conj() * m[k][c]).sum::<C64>();
        }
        tr += rho[(r, r)].re;
    }
    DensityMatrix::from_matrix(rho.scale(1.0 / tr))
}

/// `Σ n_k ln(q_k / Σq)` with `q_k = w_k ⟨p_k|ρ|p_k⟩`: the Poisson
/// log-likelihood with the overall scale profiled out, up to a constant.
pub fn log_likelihood(rho: &DensityMatrix<f64>, data: &TomographyData) -> f64 {
    let q: Vec<f64> = data
        .kets
        .iter()
        .zip(&data.weights)
        .map(|(v, w)| w * rho.expectation(v).re.max(0.0))
        .collect();
    profiled(&q, &data.counts)
}

fn profiled(q: &[f64], n: &[f64]) -> f64 {
    let total_q: f64 = q.iter().sum();
    let mut l = 0.0;
    for (&qk, &nk) in q.iter().zip(n) {
        if nk > 0.0 {
            if qk <= 0.0 {
                return f64::NEG_INFINITY;
            }
            l += nk * (qk / total_q).ln();
        }
    }
    l
}

/// Log-likelihood and its gradient with respect to the packed `T`.
fn objective(t: &[f64], data: &TomographyData) -> (f64, Vec<f64>) {
    let m = unpack(t);
    let us: Vec<[C64; 4]> = data.kets.iter().map(|v| apply(&m, v)).collect();
    let q: Vec<f64> = us
        .iter()
        .zip(&data.weights)
        .map(|(u, w)| w * u.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    let l = profiled(&q, &data.counts);
    let total_q: f64 = q.iter().sum();
    let total_n = data.total();
    // ∂L/∂q_k, then dq_k = 2 w_k Re(u† dT p)
    let mut g = [[C64::new(0.0, 0.0); 4]; 4];
    for k in 0..q.len() {
        let nk = data.counts[k];
        let coef = if nk > 0.0 { nk / q[k] } else { 0.0 } - total_n / total_q;
        let (u, p) = (&us[k], &data.kets[k]);
        for r in 0..4 {
            for c in 0..=r {
                g[r][c] += u[r].conj() * p[c] * (2.0 * coef * data.weights[k]);
            }
        }
    }
    let mut grad = vec![0.0; 16];
    for d in 0..4 {
        grad[d] = g[d][d].re;
    }
    let mut k = 4;
    for r in 1..4 {
        for c in 0..r {
            grad[k] = g[r][c].re;
            grad[k + 1] = -g[r][c].im;
            k += 2;
        }
    }
    (l, grad)
}

/// Lower-triangular `T` with `T†T = ρ` (Cholesky of the index-reversed matrix).
fn reversed_cholesky(rho: &DensityMatrix<f64>) -> Option<[[C64; 4]; 4]> {
    let a = |r: usize, c: usize| rho.get(3 - r, 3 - c);
    let mut l = [[C64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..=r {
            let mut s = a(r, c);
            for k in 0..c {
                s -= l[r][k] * l[c][k].conj();
            }
            if r == c {
                if !(s.re > 0.0) {
                    return None;
                }
                l[r][r] = C64::new(s.re.sqrt(), 0.0);
            } else {
                l[r][c] = s / l[c][c].re;
            }
        }
    }
    // ρ = J L L† J = U U† with U = J L J upper; T = U†
    let mut t = [[C64::new(0.0, 0.0); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            t[r][c] = l[3 - c][3 - r].conj();
        }
    }
    Some(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when `|ΔL| < rel_tol · |L|`.
    pub rel_tol: f64,
    /// Stop when the gradient norm divided by the total count is below this.
    pub grad_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            rel_tol: 1e-10,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TomographyResult {
    #[serde(skip)]
    pub rho: DensityMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `rho` is then the best iterate.
    pub converged: bool,
}

impl TomographyResult {
    pub fn fidelity(&self, target: &PureState2Q<f64>) -> f64 {
        fidelity(&self.rho, target)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood state over `ρ = T†T / tr(T†T)`, maximized by BFGS
/// from the physicality-projected linear-inversion estimate.
pub fn mle_reconstruct(data: &TomographyData, opts: &MleOptions) -> Result<TomographyResult> {
    let start = linear_inversion(data)?.project_to_physical();
    // keep the start strictly inside the cone so every T entry is free
    let start = DensityMatrix::mix(1e-3, &DensityMatrix::maximally_mixed(), &start);
    let t0 = reversed_cholesky(&start)
        .ok_or_else(|| Error::FitFailed("initial state not positive definite".into()))?;
    let mut x = pack(&t0);
    let n = x.len();
    let scale = data.total();
    let (mut f, mut g) = objective(&x, data);
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut small_steps = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        if norm(&g) / scale < opts.grad_tol {
            converged = true;
            break;
        }
        // ascent direction d = H g
        let mut d: Vec<f64> = (0..n).map(|i| dot(&h[i], &g)).collect();
        if dot(&d, &g) <= 0.0 {
            h = identity(n);
            d = g.clone();
        }
        let slope = dot(&d, &g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = objective(&xn, data);
            if fn_.is_finite() && fn_ >= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no ascent along d: restart from steepest ascent once, else stop
            if h != identity(n) {
                h = identity(n);
                continue;
            }
            converged = true;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // minimizing −L: y = −(g_new − g_old)
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] +=
                        (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let change = (fn_ - f).abs();
        x = xn;
        g = gn;
        f = fn_;
        // L is invariant under T → cT; keep the scale near 1
        let norm_t = norm(&x);
        if (norm_t - 1.0).abs() > 0.5 {
            x.iter_mut().for_each(|v| *v /= norm_t);
            g.iter_mut().for_each(|v| *v *= norm_t);
            h = identity(n);
        }
        if change < opts.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            small_steps += 1;
            if small_steps >= 3 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    Ok(TomographyResult {
        rho: rho_from_t(&x),
        log_likelihood: f,
        iterations,
        converged,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityEstimate {
    /// Fidelity of the reconstruction from the observed counts.
    pub point: f64,
    /// Mean and standard deviation over the bootstrap resamples.
    pub bootstrap: Estimate,
    pub resamples: usize,
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
    } else {
        0.0
    }
}

/// Parametric bootstrap of the MLE fidelity: every coincidence (and, for net
/// counts, every accidental) count is redrawn as Poisson of its observed value.
/// Resample `r` uses a seed derived from `(seed, r)`, so the result does not
/// depend on thread scheduling.
pub fn bootstrap_fidelity(
    records: &[CountRecord],
    mode: CountMode,
    target: &PureState2Q<f64>,
    n_resamples: usize,
    seed: u64,
) -> Result<FidelityEstimate> {
    if n_resamples < 100 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 100 resamples, got {n_resamples}"
        )));
    }
    let opts = MleOptions::default();
    let data = TomographyData::from_records(records, mode)?;
    let point = mle_reconstruct(&data, &opts)?.fidelity(target);
    let settings = data.settings.clone();
    let samples: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
            let counts = records
                .iter()
                .map(|rec| {
                    let c = poisson(rec.coincidences as f64, &mut rng);
                    match mode {
                        CountMode::Raw => c,
                        CountMode::Net => (c - poisson(rec.accidentals as f64, &mut rng)).max(0.0),
                    }
                })
                .collect();
            let d = TomographyData::new(settings.clone(), counts)?;
            Ok(mle_reconstruct(&d, &opts)?.fidelity(target))
        })
        .collect::<Result<_>>()?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    Ok(FidelityEstimate {
        point,
        bootstrap: Estimate::new(mean, var.sqrt()),
        resamples: n_resamples,
    })
}

/// Expected counts `scale · w_k ⟨p_k|ρ|p_k⟩` for each setting.
pub fn exact_tomography_counts(
    rho: &DensityMatrix<f64>,
    settings: &[AnalyzerSetting],
    scale: f64,
) -> Vec<f64> {
    settings
        .iter()
        .map(|s| {
            let (p, w) = s.projector();
            scale * w * rho.expectation(p.ket()).re.max(0.0)
        })
        .collect()
}
