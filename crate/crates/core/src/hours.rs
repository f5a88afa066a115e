//! Fixed-point hours.
//!
//! Logged time is stored as an integer count of micro-hours so that splitting
//! an entry across its fragments conserves the total exactly.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const UNITS_PER_HOUR: i64 = 1_000_000;

/// A non-negative duration in hours with micro-hour resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hours(i64);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HoursError {
    #[error("hours must be non-negative, got {0}")]
    Negative(f64),
    #[error("hours must be finite, got {0}")]
    NotFinite(f64),
    #[error("hours value {0} is too large")]
    Overflow(f64),
}

impl Hours {
    pub const ZERO: Hours = Hours(0);

    pub fn from_f64(value: f64) -> Result<Hours, HoursError> {
        if !value.is_finite() {
            return Err(HoursError::NotFinite(value));
        }
        if value < 0.0 {
            return Err(HoursError::Negative(value));
        }
        let scaled = (value * UNITS_PER_HOUR as f64).round();
        if scaled > i64::MAX as f64 / 2.0 {
            return Err(HoursError::Overflow(value));
        }
        Ok(Hours(scaled as i64))
    }

    pub fn from_micros(micros: i64) -> Hours {
        assert!(micros >= 0, "negative micro-hours");
        Hours(micros)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / UNITS_PER_HOUR as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Splits into `parts` shares that differ by at most one micro-hour and
    /// sum exactly to `self`. Leading shares absorb the remainder.
    pub fn split_even(self, parts: usize) -> Vec<Hours> {
        if parts == 0 {
            return Vec::new();
        }
        let n = parts as i64;
        let base = self.0 / n;
        let remainder = (self.0 % n) as usize;
        (0..parts)
            .map(|i| Hours(base + i64::from(i < remainder)))
            .collect()
    }
}

impl Add for Hours {
    type Output = Hours;
    fn add(self, rhs: Hours) -> Hours {
        Hours(self.0 + rhs.0)
    }
}

impl AddAssign for Hours {
    fn add_assign(&mut self, rhs: Hours) {
        self.0 += rhs.0;
    }
}

impl Sub for Hours {
    type Output = Hours;
    fn sub(self, rhs: Hours) -> Hours {
        Hours(self.0 - rhs.0)
    }
}

impl Sum for Hours {
    fn sum<I: Iterator<Item = Hours>>(iter: I) -> Hours {
        iter.fold(Hours::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Hours> for Hours {
    fn sum<I: Iterator<Item = &'a Hours>>(iter: I) -> Hours {
        iter.copied().sum()
    }
}

impl fmt::Display for Hours {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Hours {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Hours {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Hours, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Hours::from_f64(value).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_split_examples() {
        let six = Hours::from_f64(6.0).unwrap();
        assert_eq!(six.split_even(3), vec![Hours::from_f64(2.0).unwrap(); 3]);
        let one = Hours::from_f64(1.0).unwrap();
        assert_eq!(one.split_even(2), vec![Hours::from_f64(0.5).unwrap(); 2]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(Hours::from_f64(-0.5), Err(HoursError::Negative(_))));
        assert!(matches!(Hours::from_f64(f64::NAN), Err(HoursError::NotFinite(_))));
    }

    #[test]
    fn serde_uses_decimal_hours() {
        let h: Hours = serde_json::from_str("1.25").unwrap();
        assert_eq!(h.micros(), 1_250_000);
        assert_eq!(serde_json::to_string(&h).unwrap(), "1.25");
    }

    proptest! {
        #[test]
        fn split_conserves_total(micros in 0i64..10_000_000_000, parts in 1usize..50) {
            let total = Hours::from_micros(micros);
            let shares = total.split_even(parts);
            prop_assert_eq!(shares.len(), parts);
            prop_assert_eq!(shares.iter().sum::<Hours>(), total);
            let max = shares.iter().max().unwrap().micros();
            let min = shares.iter().min().unwrap().micros();
            prop_assert!(max - min <= 1);
        }
    }
}
