//! 2x2 unitary transform families and commutation queries.
//!
//! Three one-parameter families cover everything the protocols use: plane
//! rotations, reflections, and a complex conjugate-phase family. All of them
//! are exposed both as raw matrices ([`Unitary2`]) and as tagged descriptors
//! ([`TransformSpec`]) where the tag is the public "form" and the angle is
//! the secret parameter.
//!
//! Commutation can be answered two ways: numerically from the commutator
//! ([`Unitary2::commutes`]) or in closed form ([`commutes_analytic`]). The
//! closed-form conditions were derived by brute-force multiplication, not
//! taken on faith; in particular two reflections commute only when
//! `sin(theta - phi) = 0`, because composing reflections gives the rotation
//! by `theta - phi` and swapping the order flips its sign.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use thiserror::Error;

/// Raised when an angle is constructed from a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("angle must be finite, got {value}")]
pub struct NonFiniteAngle {
    pub value: f64,
}

/// An angle stored canonically in `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    radians: f64,
}

impl Angle {
    pub const ZERO: Angle = Angle { radians: 0.0 };

    /// Canonicalizes any finite value into `[0, 2*pi)` by reduction mod 2*pi.
    pub fn new(radians: f64) -> Result<Self, NonFiniteAngle> {
        if !radians.is_finite() {
            return Err(NonFiniteAngle { value: radians });
        }
        let mut r = radians.rem_euclid(TAU);
        if r >= TAU {
            r -= TAU;
        }
        Ok(Self { radians: r })
    }

    pub fn radians(self) -> f64 {
        self.radians
    }

    pub fn sin(self) -> f64 {
        self.radians.sin()
    }

    pub fn cos(self) -> f64 {
        self.radians.cos()
    }
}

/// Absolute tolerance used by the approximate matrix predicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    eps: f64,
}

impl Tolerance {
    /// Bound for unitarity checks on freshly constructed matrices.
    pub const UNITARITY: Tolerance = Tolerance { eps: 1e-12 };
    /// Bound for commutator checks; products accumulate one extra multiply
    /// of rounding error, so this is looser than `UNITARITY`.
    pub const COMMUTATION: Tolerance = Tolerance { eps: 1e-9 };

    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0 && eps.is_finite(), "tolerance must be positive");
        Self { eps }
    }

    pub fn eps(self) -> f64 {
        self.eps
    }
}

/// The public form of a transform, without its secret angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformForm {
    Rotation,
    Reflection,
    PhasePair,
}

impl TransformForm {
    pub fn realize(self, angle: Angle) -> Unitary2 {
        match self {
            TransformForm::Rotation => Unitary2::rotation(angle),
            TransformForm::Reflection => Unitary2::reflection(angle),
            TransformForm::PhasePair => Unitary2::phase_pair(angle),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransformForm::Rotation => "rotation",
            TransformForm::Reflection => "reflection",
            TransformForm::PhasePair => "phase-pair",
        }
    }
}

impl std::fmt::Display for TransformForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TransformForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rotation" => Ok(TransformForm::Rotation),
            "reflection" => Ok(TransformForm::Reflection),
            "phase-pair" => Ok(TransformForm::PhasePair),
            other => Err(format!(
                "unknown transform form {other:?} (expected rotation, reflection or phase-pair)"
            )),
        }
    }
}

/// A transform family tag plus its secret angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    Rotation(Angle),
    Reflection(Angle),
    PhasePair(Angle),
}

impl TransformSpec {
    pub fn form(self) -> TransformForm {
        match self {
            TransformSpec::Rotation(_) => TransformForm::Rotation,
            TransformSpec::Reflection(_) => TransformForm::Reflection,
            TransformSpec::PhasePair(_) => TransformForm::PhasePair,
        }
    }

    pub fn angle(self) -> Angle {
        match self {
            TransformSpec::Rotation(a)
            | TransformSpec::Reflection(a)
            | TransformSpec::PhasePair(a) => a,
        }
    }

    /// Builds the concrete matrix for this descriptor.
    pub fn realize(self) -> Unitary2 {
        self.form().realize(self.angle())
    }
}

/// A 2x2 complex matrix with entries stored row-major.
///
/// Values are immutable; every operation returns a fresh matrix, so equality
/// is entrywise comparison with a tolerance ([`Unitary2::max_abs_diff`]).
#[derive(Debug, Clone, Copy)]
pub struct Unitary2 {
    entries: [Complex64; 4],
}

impl Unitary2 {
    pub fn from_entries(entries: [Complex64; 4]) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[Complex64; 4] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[2 * row + col]
    }

    pub fn identity() -> Self {
        Self::from_entries([
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ])
    }

    /// Rotation by `theta`: `[[cos, -sin], [sin, cos]]`.
    pub fn rotation(theta: Angle) -> Self {
        let (s, c) = theta.radians().sin_cos();
        Self::from_entries([
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ])
    }

    /// Reflection across the line at `theta / 2`:
    /// `[[cos, sin], [sin, -cos]]`. Determinant -1.
    pub fn reflection(theta: Angle) -> Self {
        let (s, c) = theta.radians().sin_cos();
        Self::from_entries([
            Complex64::new(c, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(-c, 0.0),
        ])
    }

    /// The complex conjugate-phase family:
    /// `(1/sqrt 2) * [[e^{i t}, e^{-i t}], [i e^{i t}, -i e^{-i t}]]`.
    pub fn phase_pair(theta: Angle) -> Self {
        let a = Complex64::from_polar(FRAC_1_SQRT_2, theta.radians());
        let b = Complex64::from_polar(FRAC_1_SQRT_2, -theta.radians());
        let i = Complex64::new(0.0, 1.0);
        Self::from_entries([a, b, i * a, -i * b])
    }

    /// Standard matrix product `self * rhs`.
    pub fn multiply(&self, rhs: &Unitary2) -> Self {
        let a = &self.entries;
        let b = &rhs.entries;
        Self::from_entries([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let e = &self.entries;
        Self::from_entries([e[0].conj(), e[2].conj(), e[1].conj(), e[3].conj()])
    }

    pub fn det(&self) -> Complex64 {
        let e = &self.entries;
        e[0] * e[3] - e[1] * e[2]
    }

    /// Largest entrywise absolute difference between two matrices.
    pub fn max_abs_diff(&self, other: &Unitary2) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// True iff the largest entry of `U^dagger U - I` is at most `tol`.
    pub fn is_unitary(&self, tol: Tolerance) -> bool {
        self.dagger().multiply(self).max_abs_diff(&Self::identity()) <= tol.eps
    }

    /// True iff the largest entry of the commutator `AB - BA` is at most `tol`.
    pub fn commutes(&self, other: &Unitary2, tol: Tolerance) -> bool {
        let ab = self.multiply(other);
        let ba = other.multiply(self);
        ab.max_abs_diff(&ba) <= tol.eps
    }
}

impl std::ops::Mul for &Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: &Unitary2) -> Unitary2 {
        self.multiply(rhs)
    }
}

/// Builds the matrix named by a [`TransformSpec`].
pub fn realize(spec: TransformSpec) -> Unitary2 {
    spec.realize()
}

/// Tolerance applied to the closed-form angle conditions below. Matched to
/// [`Tolerance::COMMUTATION`] so the predicate and the numerical commutator
/// agree away from the razor edge of the threshold.
const ANALYTIC_EPS: f64 = 1e-9;

/// Closed-form commutation predicate over transform descriptors.
///
/// The conditions, each confirmed against the brute-force commutator:
///
/// * rotation x rotation: always commute.
/// * reflection(t) x reflection(p): iff `sin(t - p) = 0`.
/// * rotation(t) x reflection(_): iff `sin(t) = 0` (the rotation is +/-I).
/// * phase-pair(t) x phase-pair(p): iff `sin(p - t) = 0`.
/// * rotation(t) x phase-pair(_): iff `sin(t) = 0`.
/// * reflection(r) x phase-pair(p): iff `cos(r) = 0` and `p = 3*pi/4 mod pi`
///   (the reflection is +/- Pauli X and the phase-pair matrix is one of the
///   two members X happens to commute with).
pub fn commutes_analytic(a: TransformSpec, b: TransformSpec) -> bool {
    use TransformSpec::*;
    let near_zero = |x: f64| x.abs() <= ANALYTIC_EPS;
    match (a, b) {
        (Rotation(_), Rotation(_)) => true,
        (Reflection(t), Reflection(p)) => near_zero((t.radians() - p.radians()).sin()),
        (Rotation(t), Reflection(_)) | (Reflection(_), Rotation(t)) => near_zero(t.sin()),
        (PhasePair(t), PhasePair(p)) => near_zero((p.radians() - t.radians()).sin()),
        (Rotation(t), PhasePair(_)) | (PhasePair(_), Rotation(t)) => near_zero(t.sin()),
        (Reflection(r), PhasePair(p)) | (PhasePair(p), Reflection(r)) => {
            near_zero(r.cos()) && near_zero((p.radians() - 3.0 * std::f64::consts::FRAC_PI_4).sin())
        }
    }
}
