//! Extended reals `[-inf, +inf]` with a one-sided subtraction convention.
//!
//! Differences of two infinities of the same sign are resolved upward:
//! `(+inf) - (+inf) = +inf` and `(-inf) - (-inf) = +inf`. With this rule
//! `c(x, y) - a(x) - b(y)` is total and never under-reports a cost.
//!
//! | a \ b   | -inf  | finite | +inf  |
//! |---------|-------|--------|-------|
//! | -inf    | +inf  | -inf   | -inf  |
//! | finite  | +inf  | a - b  | -inf  |
//! | +inf    | +inf  | +inf   | +inf  |

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Subtraction on raw `f64` values following the table above.
///
/// Inputs must not be NaN; the output never is.
#[inline]
pub fn ext_sub(a: f64, b: f64) -> f64 {
    debug_assert!(!a.is_nan() && !b.is_nan());
    if a == f64::INFINITY || b == f64::NEG_INFINITY {
        f64::INFINITY
    } else if a == f64::NEG_INFINITY || b == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        a - b
    }
}

/// Addition defined as `a - (-b)`, so `(+inf) + (-inf) = +inf`.
#[inline]
pub fn ext_add(a: f64, b: f64) -> f64 {
    ext_sub(a, -b)
}

/// `mass * value` with `0 * (+-inf) = 0`.
#[inline]
pub(crate) fn weighted(mass: f64, value: f64) -> f64 {
    if mass == 0.0 {
        0.0
    } else {
        mass * value
    }
}

/// A value in `[-inf, +inf]`. NaN is not representable.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const NEG_INFINITY: ExtReal = ExtReal(f64::NEG_INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Returns `None` for NaN.
    pub fn new(value: f64) -> Option<Self> {
        if value.is_nan() {
            None
        } else {
            Some(ExtReal(value))
        }
    }

    /// Wraps a value that is known not to be NaN.
    ///
    /// # Panics
    /// On NaN input.
    pub fn from_f64(value: f64) -> Self {
        Self::new(value).expect("ExtReal cannot hold NaN")
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Finite value, or `None` for either infinity.
    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.partial_cmp(&other.0).expect("ExtReal is never NaN")
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;
    fn sub(self, rhs: ExtReal) -> ExtReal {
        ExtReal(ext_sub(self.0, rhs.0))
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        ExtReal(ext_add(self.0, rhs.0))
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal(-self.0)
    }
}

impl From<ExtReal> for f64 {
    fn from(v: ExtReal) -> f64 {
        v.0
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pos_inf() {
            f.write_str("inf")
        } else if self.is_neg_inf() {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

// JSON has no infinity literal, so infinities travel as the strings "inf" / "-inf".
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_pos_inf() {
            serializer.serialize_str("inf")
        } else if self.is_neg_inf() {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtVisitor;

        impl<'de> Visitor<'de> for ExtVisitor {
            type Value = ExtReal;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"+inf\", \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
                ExtReal::new(v).ok_or_else(|| E::custom("NaN is not allowed"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
                Ok(ExtReal(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
                Ok(ExtReal(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
                parse_inf_token(v).ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}

pub(crate) fn parse_inf_token(s: &str) -> Option<ExtReal> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(ExtReal::INFINITY),
        "-inf" | "-infinity" => Some(ExtReal::NEG_INFINITY),
        _ => None,
    }
}
