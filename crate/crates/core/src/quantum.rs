//! Two-qubit state algebra.
//!
//! Basis ordering is fixed crate-wide as `{|00⟩, |01⟩, |10⟩, |11⟩}` with the
//! first factor the signal photon and the second the idler. Logical `0` is `H`
//! for polarization and `S` (short arm, early bin) for time-bin encoding;
//! logical `1` is `V` or `L`. Index `2 * signal + idler`.

use std::fmt;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, HermitianEigen};
use crate::scalar::Real;

pub type Ket2<T> = [Complex<T>; 2];
pub type Ket4<T> = [Complex<T>; 4];

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Tolerance floor: `base` for `f64`, widened to a few ulps for `f32`.
pub(crate) fn tol<T: Real>(base: f64) -> T {
    T::lit(base).max(T::epsilon() * T::lit(64.0))
}

/// `a ⊗ b` for single-photon kets, signal first.
pub fn tensor<T: Real>(a: &Ket2<T>, b: &Ket2<T>) -> Ket4<T> {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

fn norm_sqr<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Normalized two-qubit pure state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState2Q<T> {
    amplitudes: Ket4<T>,
}

impl<T: Real> PureState2Q<T> {
    /// Builds a state from unnormalized amplitudes, normalizing on the way.
    pub fn new(amplitudes: Ket4<T>) -> Result<Self> {
        let n = norm_sqr(&amplitudes).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amplitudes: amplitudes.map(|a| a / n),
        })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [czero(); 4];
        amplitudes[index] = c(T::one(), T::zero());
        Self { amplitudes }
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn phi_plus() -> Self {
        let h = T::FRAC_1_SQRT_2();
        Self {
            amplitudes: [c(h, T::zero()), czero(), czero(), c(h, T::zero())],
        }
    }

    /// `(|00⟩ - |11⟩)/√2`.
    pub fn phi_minus() -> Self {
        let h = T::FRAC_1_SQRT_2();
        Self {
            amplitudes: [c(h, T::zero()), czero(), czero(), c(-h, T::zero())],
        }
    }

    pub fn amplitudes(&self) -> &Ket4<T> {
        &self.amplitudes
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &Self) -> T {
        inner(&self.amplitudes, &other.amplitudes).norm_sqr()
    }
}

/// 4×4 complex matrix meant to hold a two-qubit density operator.
///
/// Construction does not enforce physicality: reconstruction routines may
/// legitimately produce matrices with small negative eigenvalues. Use
/// [`is_physical`] to check.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    entries: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn from_matrix(entries: CMatrix<T>) -> Self {
        assert_eq!(entries.dim(), 4, "two-qubit density matrix must be 4x4");
        Self { entries }
    }

    /// Row-major entries.
    pub fn from_entries(entries: [[Complex<T>; 4]; 4]) -> Self {
        Self::from_matrix(CMatrix::from_rows(
            4,
            entries.iter().flatten().copied().collect(),
        ))
    }

    pub fn diagonal(values: [T; 4]) -> Self {
        let mut m = CMatrix::zeros(4);
        for (i, v) in values.into_iter().enumerate() {
            m[(i, i)] = c(v, T::zero());
        }
        Self::from_matrix(m)
    }

    pub fn maximally_mixed() -> Self {
        let q = T::lit(0.25);
        Self::diagonal([q; 4])
    }

    /// `weight * a + (1 - weight) * b`.
    pub fn mix(weight: T, a: &Self, b: &Self) -> Self {
        let data = a
            .entries
            .as_slice()
            .iter()
            .zip(b.entries.as_slice())
            .map(|(x, y)| x * weight + y * (T::one() - weight))
            .collect();
        Self::from_matrix(CMatrix::from_rows(4, data))
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> Complex<T> {
        self.entries.trace()
    }

    pub fn eigen(&self) -> HermitianEigen<T> {
        hermitian_eigen(&self.entries)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        self.eigen().values
    }

    /// `⟨v|ρ|v⟩` without any validation.
    pub fn expectation(&self, v: &Ket4<T>) -> Complex<T> {
        let mut acc = czero();
        for i in 0..4 {
            let mut row = czero();
            for j in 0..4 {
                row = row + self.entries[(i, j)] * v[j];
            }
            acc = acc + v[i].conj() * row;
        }
        acc
    }

    /// Nearest physical state in the sense of clipping negative eigenvalues and
    /// redistributing the deficit evenly over the remaining ones.
    pub fn project_to_physical(&self) -> Self {
        let eig = self.eigen();
        let tr = eig.values.iter().fold(T::zero(), |a, &b| a + b);
        let mut values: Vec<T> = eig.values.iter().map(|&v| v / tr).collect();
        // ascending order: walk from the smallest
        let n = values.len();
        let mut deficit = T::zero();
        let mut i = 0;
        while i < n {
            let remaining = T::from_usize(n - i).unwrap();
            if values[i] + deficit / remaining < T::zero() {
                deficit = deficit + values[i];
                values[i] = T::zero();
                i += 1;
            } else {
                break;
            }
        }
        let remaining = T::from_usize(n - i).unwrap();
        for v in values.iter_mut().skip(i) {
            *v = *v + deficit / remaining;
        }
        let projected = HermitianEigen {
            values,
            vectors: eig.vectors,
        };
        Self::from_matrix(projected.reconstruct())
    }
}

impl<T: Real> From<&PureState2Q<T>> for DensityMatrix<T> {
    fn from(psi: &PureState2Q<T>) -> Self {
        density_from_pure(psi)
    }
}

impl<T: Real> fmt::Display for DensityMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..4 {
            let row: Vec<String> = (0..4)
                .map(|j| {
                    let z = self.entries[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Rank-1 projector represented by a normalized ket.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T> {
    ket: Ket4<T>,
    label: String,
}

impl<T: Real> Projector<T> {
    pub fn new(ket: Ket4<T>, label: impl Into<String>) -> Result<Self> {
        let n = norm_sqr(&ket).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            ket: ket.map(|a| a / n),
            label: label.into(),
        })
    }

    pub fn from_product(signal: &Ket2<T>, idler: &Ket2<T>, label: impl Into<String>) -> Self {
        Self::new(tensor(signal, idler), label).expect("product of normalized kets")
    }

    pub fn ket(&self) -> &Ket4<T> {
        &self.ket
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same projector with the ket multiplied by `e^{iφ}`.
    pub fn with_global_phase(&self, phi: T) -> Self {
        let ph = Complex::from_polar(T::one(), phi);
        Self {
            ket: self.ket.map(|a| a * ph),
            label: self.label.clone(),
        }
    }
}

/// `cos θ |H⟩ + sin θ |V⟩`.
pub fn linear_polarization<T: Real>(theta: T) -> Ket2<T> {
    [c(theta.cos(), T::zero()), c(theta.sin(), T::zero())]
}

/// Single-photon time-bin analysis choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeBinKet<T> {
    /// Short arm / early bin, `|S⟩`.
    Short,
    /// Long arm / late bin, `|L⟩`.
    Long,
    /// `(|S⟩ + e^{iφ}|L⟩)/√2`.
    Superposition(T),
}

impl<T: Real> TimeBinKet<T> {
    pub fn ket(&self) -> Ket2<T> {
        match *self {
            Self::Short => [c(T::one(), T::zero()), czero()],
            Self::Long => [czero(), c(T::one(), T::zero())],
            Self::Superposition(phi) => {
                let h = T::FRAC_1_SQRT_2();
                [c(h, T::zero()), Complex::from_polar(h, phi)]
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Self::Short => "S".into(),
            Self::Long => "L".into(),
            Self::Superposition(phi) => format!("S+e^(i{phi:.4})L"),
        }
    }
}

/// `ρ = |ψ⟩⟨ψ|`.
pub fn density_from_pure<T: Real>(psi: &PureState2Q<T>) -> DensityMatrix<T> {
    let a = psi.amplitudes();
    let mut m = CMatrix::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = a[i] * a[j].conj();
        }
    }
    DensityMatrix::from_matrix(m)
}

/// Product of linear polarizers at `theta_s` (signal) and `theta_i` (idler).
pub fn polarization_projector<T: Real>(theta_s: T, theta_i: T) -> Projector<T> {
    Projector::from_product(
        &linear_polarization(theta_s),
        &linear_polarization(theta_i),
        format!("pol({theta_s:.4},{theta_i:.4})"),
    )
}

pub fn timebin_projector<T: Real>(signal: TimeBinKet<T>, idler: TimeBinKet<T>) -> Projector<T> {
    Projector::from_product(
        &signal.ket(),
        &idler.ket(),
        format!("tb({},{})", signal.label(), idler.label()),
    )
}

/// `⟨p|ρ|p⟩`, clamped to `[0, 1]`.
///
/// Fails when `rho` is not Hermitian within `1e-10` or the expectation value
/// carries an imaginary part above `1e-8`.
pub fn born_probability<T: Real>(rho: &DensityMatrix<T>, p: &Projector<T>) -> Result<T> {
    let herm = rho.matrix().hermiticity_error();
    if herm > tol(1e-10) {
        return Err(Error::NotHermitian(herm.to_f64().unwrap_or(f64::NAN)));
    }
    let z = rho.expectation(p.ket());
    if z.im.abs() > tol(1e-8) {
        return Err(Error::ComplexProbability(z.im.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(z.re.max(T::zero()).min(T::one()))
}

/// `⟨target|ρ|target⟩`, clamped to `[0, 1]`.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, target: &PureState2Q<T>) -> T {
    rho.expectation(target.amplitudes())
        .re
        .max(T::zero())
        .min(T::one())
}

/// Hermitian, unit trace and positive semidefinite, each within `tol`.
pub fn is_physical<T: Real>(rho: &DensityMatrix<T>, tol: T) -> bool {
    if rho.matrix().hermiticity_error() > tol {
        return false;
    }
    let tr = rho.trace();
    if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
        return false;
    }
    rho.eigenvalues().first().is_some_and(|&v| v >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

    fn cx(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn assert_matrix_eq(a: &DensityMatrix<f64>, b: &DensityMatrix<f64>, eps: f64) {
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (a.get(i, j) - b.get(i, j)).norm() <= eps,
                    "({i},{j}): {} vs {}",
                    a.get(i, j),
                    b.get(i, j)
                );
            }
        }
    }

    #[test]
    fn density_of_basis_state() {
        let rho = density_from_pure(&PureState2Q::<f64>::basis(0));
        assert_matrix_eq(&rho, &DensityMatrix::diagonal([1.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn density_of_bell_state_has_half_corners() {
        let rho = density_from_pure(&PureState2Q::<f64>::phi_plus());
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i == 0 || i == 3) && (j == 0 || j == 3) {
                    0.5
                } else {
                    0.0
                };
                assert_abs_diff_eq!(rho.get(i, j).re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(rho.get(i, j).im, 0.0);
            }
        }
    }

    #[test]
    fn normalization_and_zero_norm() {
        let psi =
            PureState2Q::new([cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(norm_sqr(psi.amplitudes()), 1.0, epsilon = 1e-12);
        assert!(matches!(
            PureState2Q::<f64>::new([cx(0.0, 0.0); 4]),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn polarization_projector_examples() {
        let hh = polarization_projector(0.0, 0.0);
        assert_abs_diff_eq!(hh.ket()[0].re, 1.0);
        let vv = polarization_projector(FRAC_PI_2, FRAC_PI_2);
        assert_abs_diff_eq!(vv.ket()[3].re, 1.0, epsilon = 1e-15);
        assert!(vv.ket()[..3].iter().all(|z| z.norm() < 1e-15));
        let dd = polarization_projector(FRAC_PI_4, FRAC_PI_4);
        for z in dd.ket() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn timebin_projector_examples() {
        let ss = timebin_projector::<f64>(TimeBinKet::Short, TimeBinKet::Short);
        assert_eq!(ss.ket()[0], cx(1.0, 0.0));
        let pp = timebin_projector(
            TimeBinKet::Superposition(0.0),
            TimeBinKet::Superposition(0.0),
        );
        for z in pp.ket() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
        }
        let rl = timebin_projector(TimeBinKet::Superposition(FRAC_PI_2), TimeBinKet::Long);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [cx(0.0, 0.0), cx(h, 0.0), cx(0.0, 0.0), cx(0.0, h)];
        for (z, e) in rl.ket().iter().zip(expected) {
            assert!((z - e).norm() < 1e-15);
        }
    }

    #[test]
    fn born_rule_examples() {
        let hh = density_from_pure(&PureState2Q::<f64>::basis(0));
        assert_eq!(
            born_probability(&hh, &polarization_projector(0.0, 0.0)).unwrap(),
            1.0
        );
        let p = born_probability(&hh, &polarization_projector(FRAC_PI_2, FRAC_PI_2)).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-30);
    }

    #[test]
    fn born_rule_bell_state_is_half_for_parallel_polarizers() {
        let rho = density_from_pure(&PureState2Q::<f64>::phi_plus());
        for theta in [0.0, FRAC_PI_8, FRAC_PI_4] {
            // brute force: explicit sum over i, j of conj(p_i) rho_ij p_j
            let p = polarization_projector(theta, theta);
            let mut brute = cx(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    brute += p.ket()[i].conj() * rho.get(i, j) * p.ket()[j];
                }
            }
            assert_abs_diff_eq!(brute.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(born_probability(&rho, &p).unwrap(), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn born_rejects_non_hermitian() {
        let mut m = CMatrix::<f64>::identity(4).scale(0.25);
        m[(0, 1)] = cx(0.1, 0.0);
        let rho = DensityMatrix::from_matrix(m);
        assert!(matches!(
            born_probability(&rho, &polarization_projector(0.0, 0.0)),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let phi = PureState2Q::<f64>::phi_plus();
        let rho = density_from_pure(&phi);
        assert_abs_diff_eq!(fidelity(&rho, &phi), 1.0, epsilon = 1e-15);
        let mixed = DensityMatrix::maximally_mixed();
        assert_abs_diff_eq!(fidelity(&mixed, &phi), 0.25, epsilon = 1e-15);
        let werner = DensityMatrix::mix(0.9, &rho, &mixed);
        assert_abs_diff_eq!(fidelity(&werner, &phi), 0.925, epsilon = 1e-15);
    }

    #[test]
    fn physicality_examples() {
        assert!(is_physical(
            &DensityMatrix::<f64>::diagonal([1.0, 0.0, 0.0, 0.0]),
            1e-9
        ));
        assert!(!is_physical(
            &DensityMatrix::<f64>::diagonal([1.5, -0.5, 0.0, 0.0]),
            1e-9
        ));
        assert!(!is_physical(
            &DensityMatrix::<f64>::diagonal([0.5, 0.0, 0.0, 0.0]),
            1e-9
        ));
    }

    #[test]
    fn projection_restores_physicality() {
        let bad = DensityMatrix::<f64>::diagonal([0.7, 0.4, -0.05, -0.05]);
        let fixed = bad.project_to_physical();
        assert!(is_physical(&fixed, 1e-12));
        let ev = fixed.eigenvalues();
        assert_abs_diff_eq!(ev[3], 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[2], 0.35, epsilon = 1e-12);
    }

    #[test]
    fn complete_product_basis_sums_to_one() {
        let rho = density_from_pure(
            &PureState2Q::new([cx(0.3, 0.1), cx(-0.2, 0.4), cx(0.5, 0.0), cx(0.1, -0.6)]).unwrap(),
        );
        for (ts, ti) in [(0.0, 0.0), (0.3, 1.1), (-0.7, 2.0)] {
            let total: f64 = [
                (0.0, 0.0),
                (0.0, FRAC_PI_2),
                (FRAC_PI_2, 0.0),
                (FRAC_PI_2, FRAC_PI_2),
            ]
            .iter()
            .map(|(a, b)| born_probability(&rho, &polarization_projector(ts + a, ti + b)).unwrap())
            .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
        let total: f64 = [(PI / 3.0, 0.0)]
            .iter()
            .flat_map(|&(phi, _)| {
                let plus = TimeBinKet::Superposition(phi);
                let minus = TimeBinKet::Superposition(phi + PI);
                [
                    (plus, TimeBinKet::Short),
                    (plus, TimeBinKet::Long),
                    (minus, TimeBinKet::Short),
                    (minus, TimeBinKet::Long),
                ]
            })
            .map(|(a, b)| born_probability(&rho, &timebin_projector(a, b)).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn single_precision_bell_state() {
        let rho = density_from_pure(&PureState2Q::<f32>::phi_plus());
        let p = born_probability(&rho, &polarization_projector(0.3f32, 0.3)).unwrap();
        assert!((p - 0.5).abs() < 1e-6);
        assert!(is_physical(&rho, 1e-5));
    }

    fn ket4() -> impl Strategy<Value = [Complex<f64>; 4]> {
        prop::array::uniform8(-1.0f64..1.0).prop_map(|v| {
            [
                cx(v[0], v[1]),
                cx(v[2], v[3]),
                cx(v[4], v[5]),
                cx(v[6], v[7]),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn self_fidelity_is_one(amps in ket4()) {
            prop_assume!(norm_sqr(&amps) > 1e-6);
            let psi = PureState2Q::new(amps).unwrap();
            prop_assert!((fidelity(&density_from_pure(&psi), &psi) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn born_probability_ignores_global_phase(amps in ket4(), proj in ket4(), phase in 0.0..(2.0 * PI)) {
            prop_assume!(norm_sqr(&amps) > 1e-6 && norm_sqr(&proj) > 1e-6);
            let rho = density_from_pure(&PureState2Q::new(amps).unwrap());
            let p = Projector::new(proj, "random").unwrap();
            let a = born_probability(&rho, &p).unwrap();
            let b = born_probability(&rho, &p.with_global_phase(phase)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
