//! Exact dyadic position coordinates.
//!
//! Every coordinate is an integer multiple of 2^-8, stored as that integer.
//! Equality and hashing are exact, so overlap checks never compare floats.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported denominator exponent.
pub const MAX_EXP: u32 = 8;
const SCALE: i64 = 1 << MAX_EXP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PosCoord(i64);

impl PosCoord {
    pub const ZERO: PosCoord = PosCoord(0);
    pub const ONE: PosCoord = PosCoord(SCALE);

    pub const fn from_int(n: i64) -> Self {
        PosCoord(n * SCALE)
    }

    /// `numerator / 2^exp`.
    pub fn dyadic(numerator: i64, exp: u32) -> Result<Self> {
        if exp > MAX_EXP {
            return Err(Error::InvalidCoord(format!(
                "{numerator}/2^{exp}: denominator exponent exceeds {MAX_EXP}"
            )));
        }
        Ok(PosCoord(numerator << (MAX_EXP - exp)))
    }

    /// Nearest representable coordinate; ties round away from zero.
    pub fn nearest(x: f64) -> Self {
        PosCoord((x * SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Raw numerator over 2^8.
    pub fn raw(self) -> i64 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % SCALE == 0
    }

    /// True for 1, 1/2, 1/4, ..., 1/256.
    pub fn is_unit_fraction_of_two(self) -> bool {
        self.0 > 0 && self.0 <= SCALE && (self.0 as u64).is_power_of_two()
    }

    pub fn max(self, other: Self) -> Self {
        Ord::max(self, other)
    }
}

impl Add for PosCoord {
    type Output = PosCoord;
    fn add(self, rhs: Self) -> Self {
        PosCoord(self.0 + rhs.0)
    }
}

impl Sub for PosCoord {
    type Output = PosCoord;
    fn sub(self, rhs: Self) -> Self {
        PosCoord(self.0 - rhs.0)
    }
}

impl Mul<i64> for PosCoord {
    type Output = PosCoord;
    fn mul(self, rhs: i64) -> Self {
        PosCoord(self.0 * rhs)
    }
}

impl From<i64> for PosCoord {
    fn from(n: i64) -> Self {
        PosCoord::from_int(n)
    }
}

/// Exact decimal rendering: `3`, `1.5`, `-0.25`, `0.00390625`.
impl fmt::Display for PosCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u64;
        let frac = abs % SCALE as u64;
        if frac == 0 {
            return write!(f, "{sign}{int}");
        }
        // 2^8 divides 10^8, so eight decimal digits are exact.
        let digits = frac * (100_000_000 / SCALE as u64);
        let s = format!("{digits:08}");
        write!(f, "{sign}{int}.{}", s.trim_end_matches('0'))
    }
}

/// Accepts integers, `p/q` with `q` a power of two up to 256, and finite
/// decimals that are exact multiples of 2^-8.
impl FromStr for PosCoord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidCoord(s.to_string());
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: u64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 || !den.is_power_of_two() {
                return Err(bad());
            }
            return PosCoord::dyadic(num, den.trailing_zeros());
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(PosCoord::from_int(n));
        }
        let x: f64 = s.parse().map_err(|_| bad())?;
        let c = PosCoord::nearest(x);
        if !x.is_finite() || c.to_f64() != x {
            return Err(bad());
        }
        Ok(c)
    }
}

/// Temporal, vertical and horizontal position identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PosTriple {
    pub t: PosCoord,
    pub h: PosCoord,
    pub w: PosCoord,
}

impl PosTriple {
    pub fn new(t: PosCoord, h: PosCoord, w: PosCoord) -> Self {
        Self { t, h, w }
    }

    /// The degenerate triple `(m, m, m)` housing a scalar 1D position.
    pub fn scalar(m: PosCoord) -> Self {
        Self { t: m, h: m, w: m }
    }

    pub fn ints(t: i64, h: i64, w: i64) -> Self {
        Self::new(t.into(), h.into(), w.into())
    }

    pub fn max_component(&self) -> PosCoord {
        self.t.max(self.h).max(self.w)
    }

    pub fn min_component(&self) -> PosCoord {
        self.t.min(self.h).min(self.w)
    }

    pub fn to_f64(&self) -> [f64; 3] {
        [self.t.to_f64(), self.h.to_f64(), self.w.to_f64()]
    }
}

impl Add for PosTriple {
    type Output = PosTriple;
    fn add(self, o: Self) -> Self {
        PosTriple::new(self.t + o.t, self.h + o.h, self.w + o.w)
    }
}

impl Sub for PosTriple {
    type Output = PosTriple;
    fn sub(self, o: Self) -> Self {
        PosTriple::new(self.t - o.t, self.h - o.h, self.w - o.w)
    }
}

impl fmt::Display for PosTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.t, self.h, self.w)
    }
}
