//! Q32.32 signed fixed point over `i64`.
//!
//! Multiplication rounds to nearest, ties to even. Additions and conversions
//! either saturate or report overflow; nothing wraps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAC_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixedError {
    #[error("not a decimal number: {0:?}")]
    Syntax(String),
    #[error("{0} is not exactly representable in Q32.32")]
    Inexact(String),
    #[error("{0} is outside the Q32.32 range")]
    OutOfRange(String),
}

/// Raw Q32.32 value: the represented number is `raw / 2^32`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed(pub i64);

fn clamp_i128(v: i128) -> (i64, bool) {
    if v > i64::MAX as i128 {
        (i64::MAX, true)
    } else if v < i64::MIN as i128 {
        (i64::MIN, true)
    } else {
        (v as i64, false)
    }
}

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(1 << FRAC_BITS);
    pub const ULP: Fixed = Fixed(1);

    pub fn raw(self) -> i64 {
        self.0
    }

    /// Integer to Q32.32. The flag reports saturation.
    pub fn from_int(v: i64) -> (Fixed, bool) {
        let (raw, sat) = clamp_i128((v as i128) << FRAC_BITS);
        (Fixed(raw), sat)
    }

    /// Product rounded to nearest, ties to even. The flag reports saturation.
    pub fn mul(self, rhs: Fixed) -> (Fixed, bool) {
        let p = self.0 as i128 * rhs.0 as i128;
        let q = p >> FRAC_BITS;
        let r = p & ((1i128 << FRAC_BITS) - 1);
        let half = 1i128 << (FRAC_BITS - 1);
        let rounded = if r > half || (r == half && q & 1 == 1) {
            q + 1
        } else {
            q
        };
        let (raw, sat) = clamp_i128(rounded);
        (Fixed(raw), sat)
    }

    pub fn add(self, rhs: Fixed) -> (Fixed, bool) {
        let (raw, sat) = clamp_i128(self.0 as i128 + rhs.0 as i128);
        (Fixed(raw), sat)
    }

    /// Exact conversion from a decimal string such as `-0.5` or `12.25`.
    pub fn parse_decimal(text: &str) -> Result<Fixed, FixedError> {
        let syntax = || FixedError::Syntax(text.to_string());
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if int_part.is_empty() || !all_digits(int_part) || !all_digits(frac_part) {
            return Err(syntax());
        }
        if body.ends_with('.') {
            return Err(syntax());
        }
        let int_trimmed = int_part.trim_start_matches('0');
        if int_trimmed.len() > 20 {
            return Err(FixedError::OutOfRange(text.to_string()));
        }
        let int_value: i128 = if int_trimmed.is_empty() {
            0
        } else {
            int_trimmed.parse().map_err(|_| syntax())?
        };

        let frac = frac_part.trim_end_matches('0');
        let k = frac.len() as u32;
        let frac_raw: i128 = if k == 0 {
            0
        } else {
            if k > 38 {
                return Err(FixedError::Inexact(text.to_string()));
            }
            let f: u128 = frac.parse().map_err(|_| syntax())?;
            // f / 10^k = (f / 5^k) / 2^k; Q32.32 needs 5^k | f and the
            // remaining power of two to fit in 32 fractional bits.
            let five_k = 5u128.pow(k);
            if f % five_k != 0 {
                return Err(FixedError::Inexact(text.to_string()));
            }
            let m = f / five_k;
            if k <= FRAC_BITS {
                (m << (FRAC_BITS - k)) as i128
            } else {
                let shift = k - FRAC_BITS;
                if m % (1u128 << shift) != 0 {
                    return Err(FixedError::Inexact(text.to_string()));
                }
                (m >> shift) as i128
            }
        };
        let magnitude = (int_value << FRAC_BITS) + frac_raw;
        let signed = if negative { -magnitude } else { magnitude };
        let (raw, sat) = clamp_i128(signed);
        if sat {
            return Err(FixedError::OutOfRange(text.to_string()));
        }
        Ok(Fixed(raw))
    }

    /// Exact decimal rendering; always has a fractional part.
    pub fn to_decimal(self) -> String {
        let v = self.0 as i128;
        let mag = v.unsigned_abs();
        let int = mag >> FRAC_BITS;
        let frac = mag & ((1u128 << FRAC_BITS) - 1);
        // frac / 2^32 == frac * 5^32 / 10^32
        let digits = format!("{:032}", frac * 5u128.pow(FRAC_BITS));
        let digits = digits.trim_end_matches('0');
        let digits = if digits.is_empty() { "0" } else { digits };
        let sign = if v < 0 { "-" } else { "" };
        format!("{sign}{int}.{digits}")
    }
}

impl FromStr for Fixed {
    type Err = FixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fixed::parse_decimal(s)
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({})", self.to_decimal())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    #[test]
    fn exact_decimals() {
        assert_eq!(fx("1.0"), Fixed::ONE);
        assert_eq!(fx("1"), Fixed::ONE);
        assert_eq!(fx("-0.5").raw(), -(1 << 31));
        assert_eq!(fx("0.25").raw(), 1 << 30);
        assert_eq!(fx("0.00000095367431640625").raw(), 1 << 12);
        assert_eq!(fx("0.00000000023283064365386962890625"), Fixed::ULP);
        assert_eq!(fx("-7.000"), Fixed(-7 << 32));
    }

    #[test]
    fn inexact_and_bad_inputs() {
        assert!(matches!(Fixed::parse_decimal("0.1"), Err(FixedError::Inexact(_))));
        assert!(matches!(
            Fixed::parse_decimal("0.000000000116415321826934814453125"),
            Err(FixedError::Inexact(_))
        ));
        for bad in ["", "-", ".5", "1.", "1e3", "+1", "1,5", " 1"] {
            assert!(matches!(Fixed::parse_decimal(bad), Err(FixedError::Syntax(_))), "{bad}");
        }
        assert!(matches!(
            Fixed::parse_decimal("2147483648"),
            Err(FixedError::OutOfRange(_))
        ));
        assert_eq!(fx("-2147483648").raw(), i64::MIN);
    }

    #[test]
    fn decimal_rendering_round_trips() {
        for raw in [0, 1, -1, 1 << 31, -(1 << 31), i64::MAX, i64::MIN, 123_456_789_012] {
            let f = Fixed(raw);
            assert_eq!(f.to_decimal().parse::<Fixed>().unwrap(), f);
        }
        assert_eq!(Fixed::ONE.to_decimal(), "1.0");
        assert_eq!(fx("-0.5").to_decimal(), "-0.5");
    }

    #[test]
    fn multiplication_rounds_half_to_even() {
        // 0.5 ulp products: ULP * 0.5 = half an ulp -> rounds to 0 (even).
        let half = fx("0.5");
        assert_eq!(Fixed::ULP.mul(half).0, Fixed::ZERO);
        // 3 ulp * 0.5 = 1.5 ulp -> 2 ulp.
        assert_eq!(Fixed(3).mul(half).0, Fixed(2));
        // -1 ulp * 0.5 = -0.5 ulp -> 0; -3 ulp * 0.5 -> -2 ulp.
        assert_eq!(Fixed(-1).mul(half).0, Fixed(0));
        assert_eq!(Fixed(-3).mul(half).0, Fixed(-2));
        assert_eq!(fx("1.0").mul(fx("-0.5")).0, fx("-0.5"));
    }

    #[test]
    fn saturation_is_flagged() {
        let (v, sat) = Fixed(i64::MAX).add(Fixed::ULP);
        assert!(sat);
        assert_eq!(v.0, i64::MAX);
        let (v, sat) = Fixed::from_int(1 << 40);
        assert!(sat);
        assert_eq!(v.0, i64::MAX);
        let (v, sat) = Fixed::from_int(-(1 << 31));
        assert!(!sat);
        assert_eq!(v.0, i64::MIN);
    }
}
