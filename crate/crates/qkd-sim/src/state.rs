//! Simulated single-qubit states: the orthogonal message pair, unitary
//! application, fidelity and Born-rule measurement.
//!
//! Everything here is a pure value. Measurement takes the caller's
//! [`RngStream`] and consumes exactly one draw; the "collapse" contract
//! (do not reuse a measured in-flight state) is enforced structurally by the
//! protocol layer, not here.

use num_complex::Complex64;
use thiserror::Error;

use crate::rng::RngStream;
use crate::unitary::{Tolerance, Unitary2};

/// A classical bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    /// One fair coin flip from the stream.
    pub fn random(rng: &mut RngStream) -> Self {
        Bit::from_bool(rng.next_bool())
    }
}

impl std::fmt::Display for Bit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StateError {
    #[error("state vector is not normalized: |amp0|^2 + |amp1|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },
    #[error("basis inputs must satisfy alpha^2 + beta^2 = 1, got {norm_sq}")]
    BasisNotNormalized { norm_sq: f64 },
    #[error("basis states are not orthogonal: |<x0|x1>| = {overlap}")]
    NotOrthogonal { overlap: f64 },
    #[error("amplitude is not finite")]
    NonFiniteAmplitude,
}

/// Raised by [`StateVector::decode_exact`] when a state is close to neither
/// basis member, which signals protocol corruption such as a non-commuting
/// eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("state matches neither basis member (fidelities {fid0} and {fid1})")]
pub struct AmbiguousState {
    pub fid0: f64,
    pub fid1: f64,
}

/// Tolerance on the squared-norm defect accepted by state constructors.
const NORM_EPS: f64 = 1e-12;

/// Fidelity short of 1 accepted by exact decoding.
const DECODE_EPS_DEFAULT: f64 = 1e-9;

/// A unit-norm complex 2-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    amp0: Complex64,
    amp1: Complex64,
}

impl StateVector {
    pub fn new(amp0: Complex64, amp1: Complex64) -> Result<Self, StateError> {
        if !(amp0.is_finite() && amp1.is_finite()) {
            return Err(StateError::NonFiniteAmplitude);
        }
        let norm_sq = amp0.norm_sqr() + amp1.norm_sqr();
        if (norm_sq - 1.0).abs() > NORM_EPS {
            return Err(StateError::NotNormalized { norm_sq });
        }
        Ok(Self { amp0, amp1 })
    }

    /// Constructor for values already known to be unit norm (unitary images
    /// of unit vectors).
    pub(crate) fn new_unchecked(amp0: Complex64, amp1: Complex64) -> Self {
        Self { amp0, amp1 }
    }

    pub fn amp0(&self) -> Complex64 {
        self.amp0
    }

    pub fn amp1(&self) -> Complex64 {
        self.amp1
    }

    pub fn norm_sq(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1
    }

    /// `|<self|other>|^2`: 1 iff equal up to global phase, 0 iff orthogonal.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Born-rule measurement in `basis`. Returns `Bit::Zero` with probability
    /// `|<x0|self>|^2`. Consumes exactly one rng draw. The caller must treat
    /// the measured state as collapsed and not reuse it as a quantum state.
    pub fn measure_in(&self, basis: &BasisPair, rng: &mut RngStream) -> Bit {
        let p0 = basis.x0.inner(self).norm_sqr();
        if rng.next_f64() < p0 {
            Bit::Zero
        } else {
            Bit::One
        }
    }

    /// Noiseless decode: returns the bit whose basis member matches `self`
    /// with fidelity at least `1 - tol`, or [`AmbiguousState`] if neither does.
    pub fn decode_exact(&self, basis: &BasisPair, tol: Tolerance) -> Result<Bit, AmbiguousState> {
        let fid0 = self.fidelity(&basis.x0);
        let fid1 = self.fidelity(&basis.x1);
        if fid0 >= 1.0 - tol.eps() {
            Ok(Bit::Zero)
        } else if fid1 >= 1.0 - tol.eps() {
            Ok(Bit::One)
        } else {
            Err(AmbiguousState { fid0, fid1 })
        }
    }
}

/// Default tolerance used by protocol decoding.
pub fn decode_tolerance() -> Tolerance {
    Tolerance::new(DECODE_EPS_DEFAULT)
}

impl Unitary2 {
    /// Matrix-vector product. Unitarity keeps the result unit norm, so no
    /// renormalization is applied.
    pub fn apply(&self, s: &StateVector) -> StateVector {
        let e = self.entries();
        StateVector::new_unchecked(e[0] * s.amp0 + e[1] * s.amp1, e[2] * s.amp0 + e[3] * s.amp1)
    }
}

/// The orthogonal message pair: bit 0 encodes as `x0`, bit 1 as `x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPair {
    x0: StateVector,
    x1: StateVector,
}

impl BasisPair {
    /// Builds the pair `x0 = (alpha, beta)`, `x1 = (beta, -alpha)` from a
    /// real amplitude pair. Inputs are accepted when `alpha^2 + beta^2 = 1`
    /// within 1e-9 and renormalized exactly.
    pub fn make_basis(alpha: f64, beta: f64) -> Result<Self, StateError> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(StateError::NonFiniteAmplitude);
        }
        let norm_sq = alpha * alpha + beta * beta;
        if (norm_sq - 1.0).abs() > 1e-9 {
            return Err(StateError::BasisNotNormalized { norm_sq });
        }
        let norm = norm_sq.sqrt();
        let (a, b) = (alpha / norm, beta / norm);
        Ok(Self {
            x0: StateVector::new_unchecked(Complex64::new(a, 0.0), Complex64::new(b, 0.0)),
            x1: StateVector::new_unchecked(Complex64::new(b, 0.0), Complex64::new(-a, 0.0)),
        })
    }

    /// Validates an arbitrary pair of states as orthonormal.
    pub fn new(x0: StateVector, x1: StateVector) -> Result<Self, StateError> {
        let overlap = x0.inner(&x1).norm();
        if overlap > NORM_EPS {
            return Err(StateError::NotOrthogonal { overlap });
        }
        Ok(Self { x0, x1 })
    }

    /// The computational basis: `x0 = |0>`, `x1 = -|1>`.
    pub fn computational() -> Self {
        Self::make_basis(1.0, 0.0).expect("computational basis is normalized")
    }

    pub fn x0(&self) -> &StateVector {
        &self.x0
    }

    pub fn x1(&self) -> &StateVector {
        &self.x1
    }

    /// The message state for `bit`.
    pub fn encode(&self, bit: Bit) -> StateVector {
        match bit {
            Bit::Zero => self.x0,
            Bit::One => self.x1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::Angle;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, TAU};

    fn angle(r: f64) -> Angle {
        Angle::new(r).unwrap()
    }

    fn superposition(basis: &BasisPair) -> StateVector {
        // (x0 + x1) / sqrt 2
        StateVector::new(
            (basis.x0().amp0() + basis.x1().amp0()) * FRAC_1_SQRT_2,
            (basis.x0().amp1() + basis.x1().amp1()) * FRAC_1_SQRT_2,
        )
        .unwrap()
    }

    #[test]
    fn computational_basis_layout() {
        let b = BasisPair::computational();
        assert_eq!(b.x0().amp0(), Complex64::new(1.0, 0.0));
        assert_eq!(b.x0().amp1(), Complex64::new(0.0, 0.0));
        assert_eq!(b.x1().amp0(), Complex64::new(0.0, 0.0));
        assert_eq!(b.x1().amp1(), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn hadamard_like_pair() {
        let b = BasisPair::make_basis(FRAC_1_SQRT_2, FRAC_1_SQRT_2).unwrap();
        assert!((b.x0().amp0().re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((b.x1().amp1().re + FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(b.x0().inner(b.x1()).norm() < 1e-15);
    }

    #[test]
    fn tilted_pair_is_orthogonal() {
        let b = BasisPair::make_basis(0.6, 0.8).unwrap();
        // <x0|x1> = 0.6*0.8 - 0.8*0.6 = 0 exactly.
        assert_eq!(b.x0().inner(b.x1()), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn make_basis_rejects_unnormalized_input() {
        assert!(matches!(
            BasisPair::make_basis(0.6, 0.9),
            Err(StateError::BasisNotNormalized { .. })
        ));
    }

    #[test]
    fn encode_selects_the_basis_member() {
        let b = BasisPair::computational();
        assert_eq!(b.encode(Bit::Zero), *b.x0());
        assert_eq!(b.encode(Bit::One), *b.x1());
        let t = BasisPair::make_basis(0.6, 0.8).unwrap();
        let x = t.encode(Bit::One);
        assert!((x.amp0().re - 0.8).abs() < 1e-15);
        assert!((x.amp1().re + 0.6).abs() < 1e-15);
    }

    #[test]
    fn apply_identity_and_rotation() {
        let b = BasisPair::computational();
        let s = b.encode(Bit::Zero);
        assert_eq!(Unitary2::identity().apply(&s), s);
        let r = Unitary2::rotation(angle(FRAC_PI_2)).apply(&s);
        assert!((r.amp0().norm()) < 1e-15);
        assert!((r.amp1().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_preserves_norm() {
        let mut rng = RngStream::new(99);
        for _ in 0..1_000 {
            let t = angle(rng.next_range(0.0, TAU));
            let u = match rng.next_u64() % 3 {
                0 => Unitary2::rotation(t),
                1 => Unitary2::reflection(t),
                _ => Unitary2::phase_pair(t),
            };
            let phase = rng.next_range(0.0, TAU);
            let mix = rng.next_f64();
            let s = StateVector::new(
                Complex64::new(mix.sqrt(), 0.0),
                Complex64::from_polar((1.0 - mix).sqrt(), phase),
            )
            .unwrap();
            assert!((u.apply(&s).norm_sq() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn fidelity_basics() {
        let b = BasisPair::make_basis(0.6, 0.8).unwrap();
        let s = b.encode(Bit::Zero);
        assert!((s.fidelity(&s) - 1.0).abs() < 1e-15);
        assert!(b.x0().fidelity(b.x1()) < 1e-30);
        let plus = superposition(&BasisPair::computational());
        let zero = BasisPair::computational().encode(Bit::Zero);
        assert!((zero.fidelity(&plus) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_ignores_global_phase() {
        let s = superposition(&BasisPair::computational());
        let phase = Complex64::from_polar(1.0, 2.1);
        let rotated = StateVector::new(s.amp0() * phase, s.amp1() * phase).unwrap();
        assert!((s.fidelity(&rotated) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measuring_a_basis_state_is_deterministic() {
        let b = BasisPair::make_basis(0.6, 0.8).unwrap();
        let mut rng = RngStream::new(5);
        for _ in 0..100 {
            assert_eq!(b.x0().measure_in(&b, &mut rng), Bit::Zero);
            assert_eq!(b.x1().measure_in(&b, &mut rng), Bit::One);
        }
    }

    #[test]
    fn born_statistics_for_an_equal_superposition() {
        let b = BasisPair::computational();
        let s = superposition(&b);
        let mut rng = RngStream::new(0xb0a7);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| s.measure_in(&b, &mut rng) == Bit::Zero)
            .count();
        let freq = zeros as f64 / n as f64;
        assert!(
            (freq - 0.5).abs() < 0.02,
            "empirical frequency {freq} too far from 0.5"
        );
    }

    #[test]
    fn measurement_distribution_is_phase_invariant() {
        let b = BasisPair::computational();
        let s = superposition(&b);
        let phase = Complex64::from_polar(1.0, 0.83);
        let t = StateVector::new(s.amp0() * phase, s.amp1() * phase).unwrap();
        let mut rng_a = RngStream::new(71);
        let mut rng_b = RngStream::new(71);
        for _ in 0..2_000 {
            assert_eq!(s.measure_in(&b, &mut rng_a), t.measure_in(&b, &mut rng_b));
        }
    }

    #[test]
    fn born_statistics_within_four_sigma_on_a_biased_state() {
        let b = BasisPair::computational();
        let p0 = 0.36f64;
        let s = StateVector::new(
            Complex64::new(p0.sqrt(), 0.0),
            Complex64::new((1.0 - p0).sqrt(), 0.0),
        )
        .unwrap();
        let mut rng = RngStream::new(1234);
        let n = 10_000usize;
        let zeros = (0..n)
            .filter(|_| s.measure_in(&b, &mut rng) == Bit::Zero)
            .count() as f64;
        let sigma = (n as f64 * p0 * (1.0 - p0)).sqrt();
        assert!((zeros - n as f64 * p0).abs() <= 4.0 * sigma);
    }

    #[test]
    fn decode_exact_handles_both_bits_and_phases() {
        let b = BasisPair::make_basis(0.6, 0.8).unwrap();
        let tol = decode_tolerance();
        assert_eq!(b.x0().decode_exact(&b, tol), Ok(Bit::Zero));
        let neg_x1 = StateVector::new(-b.x1().amp0(), -b.x1().amp1()).unwrap();
        assert_eq!(neg_x1.decode_exact(&b, tol), Ok(Bit::One));
    }

    #[test]
    fn decode_exact_flags_a_superposition_as_ambiguous() {
        let b = BasisPair::computational();
        let s = superposition(&b);
        let err = s.decode_exact(&b, decode_tolerance()).unwrap_err();
        assert!((err.fid0 - 0.5).abs() < 1e-12);
        assert!((err.fid1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn encode_decode_round_trip_over_random_bases() {
        let mut rng = RngStream::new(0xdead);
        for _ in 0..100 {
            let t = rng.next_range(0.0, TAU);
            let b = BasisPair::make_basis(t.cos(), t.sin()).unwrap();
            for bit in [Bit::Zero, Bit::One] {
                assert_eq!(b.encode(bit).decode_exact(&b, decode_tolerance()), Ok(bit));
            }
        }
    }

    proptest! {
        #[test]
        fn fidelity_is_symmetric_and_bounded(a in 0.0..TAU, b in 0.0..TAU, pa in 0.0..TAU, pb in 0.0..TAU) {
            let s = StateVector::new(
                Complex64::new(a.cos(), 0.0),
                Complex64::from_polar(a.sin(), pa),
            ).unwrap();
            let t = StateVector::new(
                Complex64::new(b.cos(), 0.0),
                Complex64::from_polar(b.sin(), pb),
            ).unwrap();
            let f = s.fidelity(&t);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
            prop_assert!((f - t.fidelity(&s)).abs() < 1e-12);
        }
    }
}
