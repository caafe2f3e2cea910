//! Value types shared by every part of the laboratory: measurement settings,
//! the four-setting CHSH quad, ±1 outcomes, source values and clock ticks.
//!
//! Angles are planar and generic over the float type; the crate root exports
//! `f64` aliases.

use std::fmt::{self, Debug};

use num_traits::{Float, FloatConst};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

/// Float types usable as angles.
pub trait Real: Float + FloatConst + Debug + Send + Sync + 'static {}

impl<T: Float + FloatConst + Debug + Send + Sync + 'static> Real for T {}

/// Reduce `theta` to `[0, 2π)`.
pub fn normalize_angle<T: Real>(theta: T) -> T {
    let tau = T::TAU();
    let r = theta % tau;
    let r = if r < T::zero() { r + tau } else { r };
    // r + tau can round up to exactly tau for tiny negative inputs
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

/// A measurement direction, stored as a normalized planar angle in radians.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct Setting<T> {
    angle: T,
}

impl<T: Real> Setting<T> {
    pub fn from_radians(theta: T) -> Self {
        Self {
            angle: normalize_angle(theta),
        }
    }

    pub fn from_degrees(deg: T) -> Self {
        Self::from_radians(deg.to_radians())
    }

    pub fn radians(&self) -> T {
        self.angle
    }

    pub fn degrees(&self) -> T {
        self.angle.to_degrees()
    }

    /// Unsigned angle between two settings, in `[0, π]`.
    pub fn relative_angle(&self, other: &Self) -> T {
        let d = normalize_angle(self.angle - other.angle);
        if d > T::PI() {
            T::TAU() - d
        } else {
            d
        }
    }
}

impl<T: Debug> Debug for Setting<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Setting({:?} rad)", self.angle)
    }
}

impl<T: Real + Serialize> Serialize for Setting<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.angle.serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for Setting<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let theta = T::deserialize(deserializer)?;
        if !theta.is_finite() {
            return Err(serde::de::Error::custom("setting angle must be finite"));
        }
        Ok(Self::from_radians(theta))
    }
}

/// Column signs of Δ in canonical order: (a,c), (a,b), (d,b), (d,c).
pub const CHSH_SIGNS: [i32; 4] = [1, -1, -1, -1];

/// The four settings of a CHSH experiment. Station 1 uses `a` and `d`,
/// station 2 uses `b` and `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SettingQuad<T> {
    pub a: Setting<T>,
    pub b: Setting<T>,
    pub c: Setting<T>,
    pub d: Setting<T>,
}

/// One column of Δ: a setting pair and its sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChshPair<T> {
    pub first: Setting<T>,
    pub second: Setting<T>,
    pub sign: i32,
}

impl<T: Real> SettingQuad<T> {
    pub fn from_radians(a: T, b: T, c: T, d: T) -> Self {
        Self {
            a: Setting::from_radians(a),
            b: Setting::from_radians(b),
            c: Setting::from_radians(c),
            d: Setting::from_radians(d),
        }
    }

    pub fn from_degrees(a: T, b: T, c: T, d: T) -> Self {
        Self {
            a: Setting::from_degrees(a),
            b: Setting::from_degrees(b),
            c: Setting::from_degrees(c),
            d: Setting::from_degrees(d),
        }
    }

    /// The quad (0, π/4, 3π/4, π/2) at which the singlet correlation reaches 2√2.
    pub fn canonical() -> Self {
        let pi = T::PI();
        let four = T::from(4.0).unwrap();
        let three = T::from(3.0).unwrap();
        let two = T::from(2.0).unwrap();
        Self::from_radians(T::zero(), pi / four, three * pi / four, pi / two)
    }

    pub fn pairs(&self) -> [ChshPair<T>; 4] {
        chsh_pairs(self)
    }
}

/// `[(a,c,+1), (a,b,−1), (d,b,−1), (d,c,−1)]`.
pub fn chsh_pairs<T: Real>(quad: &SettingQuad<T>) -> [ChshPair<T>; 4] {
    let pair = |first, second, sign| ChshPair {
        first,
        second,
        sign,
    };
    [
        pair(quad.a, quad.c, CHSH_SIGNS[0]),
        pair(quad.a, quad.b, CHSH_SIGNS[1]),
        pair(quad.d, quad.b, CHSH_SIGNS[2]),
        pair(quad.d, quad.c, CHSH_SIGNS[3]),
    ]
}

/// A measurement result, always +1 or −1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct Outcome(i8);

impl Outcome {
    pub const PLUS: Outcome = Outcome(1);
    pub const MINUS: Outcome = Outcome(-1);
    pub const BOTH: [Outcome; 2] = [Outcome::PLUS, Outcome::MINUS];

    /// Sign of `x` with the tie rule `sign(0) = +1`.
    pub fn sign_of<T: Float>(x: T) -> Self {
        if x >= T::zero() {
            Self::PLUS
        } else {
            Self::MINUS
        }
    }

    pub fn from_bool(plus: bool) -> Self {
        if plus {
            Self::PLUS
        } else {
            Self::MINUS
        }
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }

    pub fn as_i8(self) -> i8 {
        self.0
    }

    pub fn product(self, other: Outcome) -> i32 {
        self.value() * other.value()
    }
}

impl std::ops::Neg for Outcome {
    type Output = Outcome;
    fn neg(self) -> Outcome {
        Outcome(-self.0)
    }
}

impl std::ops::Mul for Outcome {
    type Output = Outcome;
    fn mul(self, rhs: Outcome) -> Outcome {
        Outcome(self.0 * rhs.0)
    }
}

impl TryFrom<i8> for Outcome {
    type Error = LabError;
    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 | -1 => Ok(Outcome(v)),
            _ => Err(LabError::InvalidValue(format!(
                "outcome must be ±1, got {v}"
            ))),
        }
    }
}

impl TryFrom<i32> for Outcome {
    type Error = LabError;
    fn try_from(v: i32) -> Result<Self> {
        match v {
            1 | -1 => Ok(Outcome(v as i8)),
            _ => Err(LabError::InvalidValue(format!(
                "outcome must be ±1, got {v}"
            ))),
        }
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> i8 {
        o.0
    }
}

/// A value of the source variable carried by the particle pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenVariable<T> {
    DiscreteIndex(u32),
    PlanarAngle(T),
}

impl<T: Real> HiddenVariable<T> {
    /// Index `i` of a discrete space with `m` values.
    pub fn discrete(i: u32, m: u32) -> Result<Self> {
        if i < m {
            Ok(Self::DiscreteIndex(i))
        } else {
            Err(LabError::InvalidValue(format!(
                "hidden-variable index {i} outside space of size {m}"
            )))
        }
    }

    pub fn angle(theta: T) -> Self {
        Self::PlanarAngle(normalize_angle(theta))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::DiscreteIndex(_))
    }
}

/// Shared trial clock tick. Strictly increasing within one log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeTag(pub u64);

/// Returns `(|xz − yz|, 1 − xy)`; the two agree for every ±1 triple.
pub fn row_identity(x: Outcome, y: Outcome, z: Outcome) -> (i32, i32) {
    let lhs = (x.product(z) - y.product(z)).abs();
    let rhs = 1 - x.product(y);
    (lhs, rhs)
}

/// One row of Δ for a single source value:
/// `A_a·B_c − A_a·B_b − A_d·B_b − A_d·B_c`, always ±2.
pub fn row_sum(a_a: Outcome, a_d: Outcome, b_b: Outcome, b_c: Outcome) -> i32 {
    a_a.product(b_c) - a_a.product(b_b) - a_d.product(b_b) - a_d.product(b_c)
}
