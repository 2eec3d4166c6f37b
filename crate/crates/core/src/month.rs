//! Calendar month stamps.
//!
//! All analysis runs at monthly frequency, so the canonical time key is a
//! `(year, month)` pair with no day component. Day-precision dates are
//! accepted on input and truncated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid month stamp `{0}` (expected YYYY-MM or YYYY-MM-DD)")]
pub struct MonthParseError(pub String);

impl Month {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, used for arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn prev(self) -> Self {
        self.offset(-1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: Month) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// Inclusive iterator over `self..=end`.
    pub fn range_inclusive(self, end: Month) -> impl Iterator<Item = Month> {
        (self.ordinal()..=end.ordinal()).map(Self::from_ordinal)
    }
}

/// A day-precision date, only used for ingesting sub-monthly data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day {
    pub month: Month,
    pub day: u8,
}

impl FromStr for Day {
    type Err = MonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || MonthParseError(s.to_string());
        let (ym, d) = s.rsplit_once('-').ok_or_else(err)?;
        if ym.len() != 7 || d.len() != 2 {
            return Err(err());
        }
        let month: Month = ym.parse().map_err(|_| err())?;
        let day: u8 = d.parse().map_err(|_| err())?;
        if !(1..=31).contains(&day) {
            return Err(err());
        }
        Ok(Day { month, day })
    }
}

impl FromStr for Month {
    type Err = MonthParseError;

    /// Parses `YYYY-MM` or `YYYY-MM-DD` (the day is validated then dropped).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || MonthParseError(s.to_string());
        if s.len() == 10 {
            return s.parse::<Day>().map(|d| d.month);
        }
        if s.len() != 7 || s.as_bytes()[4] != b'-' {
            return Err(err());
        }
        let year: i32 = s[..4].parse().map_err(|_| err())?;
        let month: u8 = s[5..].parse().map_err(|_| err())?;
        Month::new(year, month).ok_or_else(err)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
