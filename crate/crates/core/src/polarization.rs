//! Stokes-space polarization states on the Poincaré sphere.
//!
//! Axis convention: H/V on `s1`, D/A on `s2`, L/R on `s3`. Rotations follow
//! the right-hand rule about the given axis.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Reduced Stokes vector `(s1, s2, s3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StokesVector<T> {
    pub s1: T,
    pub s2: T,
    pub s3: T,
}

impl<T: Real> StokesVector<T> {
    pub const fn new(s1: T, s2: T, s3: T) -> Self {
        Self { s1, s2, s3 }
    }

    /// Normalized vector pointing along `(s1, s2, s3)`.
    pub fn normalized(s1: T, s2: T, s3: T) -> Result<Self> {
        Self::new(s1, s2, s3).unit()
    }

    /// Point on the sphere at polar angle `theta` from `+s3` and azimuth `phi` in the s1-s2 plane.
    pub fn from_spherical(theta: T, phi: T) -> Self {
        Self::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    pub fn dot(&self, other: &Self) -> T {
        self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3
    }

    pub fn cross(&self, other: &Self) -> Self {
        Self::new(
            self.s2 * other.s3 - self.s3 * other.s2,
            self.s3 * other.s1 - self.s1 * other.s3,
            self.s1 * other.s2 - self.s2 * other.s1,
        )
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.s1 * k, self.s2 * k, self.s3 * k)
    }

    pub fn unit(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite Stokes vector"));
        }
        Ok(self.scale(T::one() / n))
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= T::unit_tolerance()
    }

    /// Angle between two directions, robust near 0 and pi.
    pub fn angle_to(&self, other: &Self) -> T {
        self.cross(other).norm().atan2(self.dot(other))
    }

    /// Some unit vector orthogonal to `self`.
    pub fn any_orthogonal(&self) -> Self {
        let pick = if self.s1.abs() <= self.s2.abs() && self.s1.abs() <= self.s3.abs() {
            Self::new(T::one(), T::zero(), T::zero())
        } else if self.s2.abs() <= self.s3.abs() {
            Self::new(T::zero(), T::one(), T::zero())
        } else {
            Self::new(T::zero(), T::zero(), T::one())
        };
        let v = self.cross(&pick);
        v.scale(T::one() / v.norm())
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.s1, self.s2, self.s3]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn cast<U: Real>(&self) -> StokesVector<U> {
        StokesVector::new(
            U::lit(self.s1.to_f64_lossy()),
            U::lit(self.s2.to_f64_lossy()),
            U::lit(self.s3.to_f64_lossy()),
        )
    }

    /// Right-hand rotation about a unit `axis` by `angle` radians.
    pub fn rotate(&self, axis: &Self, angle: T) -> Result<Self> {
        if !axis.is_unit() {
            return Err(invalid(format!("rotation axis must be a unit vector (|axis| = {})", axis.norm())));
        }
        Ok(self.rotate_unchecked(axis, angle))
    }

    /// Rodrigues rotation without the axis check; the result is renormalized
    /// to the input length.
    pub(crate) fn rotate_unchecked(&self, axis: &Self, angle: T) -> Self {
        let (sin, cos) = angle.sin_cos();
        let along = axis.scale(axis.dot(self) * (T::one() - cos));
        let out = self.scale(cos) + axis.cross(self).scale(sin) + along;
        let n_in = self.norm();
        let n_out = out.norm();
        if n_out > T::zero() {
            out.scale(n_in / n_out)
        } else {
            out
        }
    }
}

impl<T: Real> Add for StokesVector<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.s1 + o.s1, self.s2 + o.s2, self.s3 + o.s3)
    }
}

impl<T: Real> Sub for StokesVector<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.s1 - o.s1, self.s2 - o.s2, self.s3 - o.s3)
    }
}

impl<T: Real> Neg for StokesVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.s1, -self.s2, -self.s3)
    }
}

impl<T: Real> Mul<T> for StokesVector<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        self.scale(k)
    }
}

/// Free-function form of [`StokesVector::rotate`].
pub fn rotate<T: Real>(s: &StokesVector<T>, axis: &StokesVector<T>, angle: T) -> Result<StokesVector<T>> {
    s.rotate(axis, angle)
}

/// Labels of the six cardinal polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    H,
    V,
    D,
    A,
    L,
    R,
}

impl StateLabel {
    pub const ALL: [StateLabel; 6] = [Self::H, Self::V, Self::D, Self::A, Self::L, Self::R];

    pub fn orthogonal(self) -> Self {
        match self {
            Self::H => Self::V,
            Self::V => Self::H,
            Self::D => Self::A,
            Self::A => Self::D,
            Self::L => Self::R,
            Self::R => Self::L,
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::H => "H",
            Self::V => "V",
            Self::D => "D",
            Self::A => "A",
            Self::L => "L",
            Self::R => "R",
        };
        f.write_str(s)
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Self::H),
            "V" | "v" => Ok(Self::V),
            "D" | "d" => Ok(Self::D),
            "A" | "a" => Ok(Self::A),
            "L" | "l" => Ok(Self::L),
            "R" | "r" => Ok(Self::R),
            other => Err(invalid(format!("unknown polarization label {other:?}"))),
        }
    }
}

/// Stokes vector of a cardinal state.
pub fn stokes_of<T: Real>(label: StateLabel) -> StokesVector<T> {
    let (o, z) = (T::one(), T::zero());
    match label {
        StateLabel::H => StokesVector::new(o, z, z),
        StateLabel::V => StokesVector::new(-o, z, z),
        StateLabel::D => StokesVector::new(z, o, z),
        StateLabel::A => StokesVector::new(z, -o, z),
        StateLabel::L => StokesVector::new(z, z, o),
        StateLabel::R => StokesVector::new(z, z, -o),
    }
}

/// Parses a label and returns its Stokes vector.
pub fn stokes_of_str<T: Real>(label: &str) -> Result<StokesVector<T>> {
    label.parse::<StateLabel>().map(stokes_of)
}

/// State produced by the Sagnac modulator: `|H> + e^{i phi}|V>`, i.e. `(0, cos phi, sin phi)`.
pub fn phase_to_state<T: Real>(phi_v: T) -> StokesVector<T> {
    let phi = phi_v % T::TAU();
    let (sin, cos) = phi.sin_cos();
    StokesVector::new(T::zero(), cos, sin)
}

/// Probability of the wrong outcome when `s` is measured in the basis whose
/// correct outcome is `reference`.
pub fn misalignment_error<T: Real>(s: &StokesVector<T>, reference: &StokesVector<T>) -> T {
    ((T::one() - s.dot(reference)) * T::half()).max(T::zero()).min(T::one())
}

/// The two measurement bases of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhysicalBasis {
    #[serde(rename = "DA")]
    Da,
    #[serde(rename = "LR")]
    Lr,
}

impl PhysicalBasis {
    pub fn other(self) -> Self {
        match self {
            Self::Da => Self::Lr,
            Self::Lr => Self::Da,
        }
    }

    /// Stokes axis whose `+` end encodes bit 0.
    pub fn axis<T: Real>(self) -> StokesVector<T> {
        match self {
            Self::Da => stokes_of(StateLabel::D),
            Self::Lr => stokes_of(StateLabel::L),
        }
    }

    pub fn state(self, bit: bool) -> StateLabel {
        match (self, bit) {
            (Self::Da, false) => StateLabel::D,
            (Self::Da, true) => StateLabel::A,
            (Self::Lr, false) => StateLabel::L,
            (Self::Lr, true) => StateLabel::R,
        }
    }

    /// Modulator phase preparing `bit` in this basis.
    pub fn phase<T: Real>(self, bit: bool) -> T {
        let quarter = T::FRAC_PI_2();
        let steps = match (self, bit) {
            (Self::Da, false) => 0.0,
            (Self::Lr, false) => 1.0,
            (Self::Da, true) => 2.0,
            (Self::Lr, true) => 3.0,
        };
        quarter * T::lit(steps)
    }
}

impl fmt::Display for PhysicalBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Da => "DA",
            Self::Lr => "LR",
        })
    }
}

impl FromStr for PhysicalBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DA" => Ok(Self::Da),
            "LR" => Ok(Self::Lr),
            other => Err(invalid(format!("unknown basis {other:?}, expected DA or LR"))),
        }
    }
}

/// Role a basis plays in key distillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisRole {
    /// Bit basis (Z): generates the key.
    Key,
    /// Phase basis (X): bounds the eavesdropper's information.
    Check,
}

/// Which physical basis generates the key. Exactly one basis holds the key
/// role; the other is the check basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisAssignment {
    pub key: PhysicalBasis,
}

impl Default for BasisAssignment {
    fn default() -> Self {
        Self { key: PhysicalBasis::Da }
    }
}

impl BasisAssignment {
    pub fn new(key: PhysicalBasis) -> Self {
        Self { key }
    }

    pub fn check(&self) -> PhysicalBasis {
        self.key.other()
    }

    pub fn physical(&self, role: BasisRole) -> PhysicalBasis {
        match role {
            BasisRole::Key => self.key,
            BasisRole::Check => self.check(),
        }
    }

    pub fn role_of(&self, basis: PhysicalBasis) -> BasisRole {
        if basis == self.key {
            BasisRole::Key
        } else {
            BasisRole::Check
        }
    }
}
