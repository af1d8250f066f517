//! Reporting periods (ISO weeks and calendar months) in enterprise-local time.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, TimeZone, Utc, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::ReportingPeriod;

/// A reporting period, written `2026-W10` (ISO week) or `2026-03` (month).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Week { year: i32, week: u32 },
    Month { year: i32, month: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid period '{0}': expected YYYY-Www or YYYY-MM")]
pub struct PeriodParseError(pub String);

fn offset(minutes: i32) -> FixedOffset {
    FixedOffset::east_opt(minutes * 60).unwrap_or_else(|| FixedOffset::east_opt(0).unwrap())
}

fn local_midnight(date: NaiveDate, utc_offset_minutes: i32) -> DateTime<Utc> {
    let naive = date.and_hms_opt(0, 0, 0).expect("midnight exists");
    offset(utc_offset_minutes)
        .from_local_datetime(&naive)
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc)
}

impl Period {
    pub fn kind(&self) -> ReportingPeriod {
        match self {
            Period::Week { .. } => ReportingPeriod::Weekly,
            Period::Month { .. } => ReportingPeriod::Monthly,
        }
    }

    fn first_day(&self) -> NaiveDate {
        match *self {
            Period::Week { year, week } => {
                NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).expect("validated week")
            }
            Period::Month { year, month } => {
                NaiveDate::from_ymd_opt(year, month, 1).expect("validated month")
            }
        }
    }

    pub fn next(&self) -> Period {
        match *self {
            Period::Week { .. } => {
                let d = self.first_day() + chrono::Duration::days(7);
                let iso = d.iso_week();
                Period::Week {
                    year: iso.year(),
                    week: iso.week(),
                }
            }
            Period::Month { year, month: 12 } => Period::Month {
                year: year + 1,
                month: 1,
            },
            Period::Month { year, month } => Period::Month {
                year,
                month: month + 1,
            },
        }
    }

    /// `[start, end)` in UTC for an enterprise at the given offset.
    pub fn bounds(&self, utc_offset_minutes: i32) -> (DateTime<Utc>, DateTime<Utc>) {
        (
            local_midnight(self.first_day(), utc_offset_minutes),
            local_midnight(self.next().first_day(), utc_offset_minutes),
        )
    }

    pub fn contains(&self, at: DateTime<Utc>, utc_offset_minutes: i32) -> bool {
        let (s, e) = self.bounds(utc_offset_minutes);
        s <= at && at < e
    }

    pub fn containing(kind: ReportingPeriod, at: DateTime<Utc>, utc_offset_minutes: i32) -> Period {
        let local = at.with_timezone(&offset(utc_offset_minutes)).date_naive();
        match kind {
            ReportingPeriod::Weekly => {
                let iso = local.iso_week();
                Period::Week {
                    year: iso.year(),
                    week: iso.week(),
                }
            }
            ReportingPeriod::Monthly => Period::Month {
                year: local.year(),
                month: local.month(),
            },
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Week { year, week } => write!(f, "{year:04}-W{week:02}"),
            Period::Month { year, month } => write!(f, "{year:04}-{month:02}"),
        }
    }
}

impl FromStr for Period {
    type Err = PeriodParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PeriodParseError(s.to_owned());
        let (year, rest) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = year.parse().map_err(|_| err())?;
        if let Some(week) = rest.strip_prefix('W') {
            let week: u32 = week.parse().map_err(|_| err())?;
            NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).ok_or_else(err)?;
            Ok(Period::Week { year, week })
        } else {
            let month: u32 = rest.parse().map_err(|_| err())?;
            NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(err)?;
            Ok(Period::Month { year, month })
        }
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["2026-W10", "2026-03", "2020-W53", "2026-12"] {
            assert_eq!(s.parse::<Period>().unwrap().to_string(), s);
        }
        for bad in ["2026", "2026-W54", "2026-13", "x-W01", "2026-Wx"] {
            assert!(bad.parse::<Period>().is_err(), "{bad}");
        }
    }

    #[test]
    fn week_bounds_follow_local_offset() {
        let p: Period = "2026-W10".parse().unwrap();
        let (s, e) = p.bounds(8 * 60);
        // Monday 2026-03-02 00:00 at +08:00
        assert_eq!(s.to_rfc3339(), "2026-03-01T16:00:00+00:00");
        assert_eq!((e - s).num_days(), 7);
        assert_eq!(Period::containing(ReportingPeriod::Weekly, s, 480), p);
        assert_eq!(
            Period::containing(
                ReportingPeriod::Weekly,
                s - chrono::Duration::seconds(1),
                480
            ),
            "2026-W09".parse().unwrap()
        );
    }

    #[test]
    fn next_crosses_year_boundaries() {
        let last: Period = "2026-W53".parse().unwrap_or("2026-W52".parse().unwrap());
        assert_eq!(last.next().to_string().split('-').next(), Some("2027"));
        assert_eq!(
            "2026-12".parse::<Period>().unwrap().next().to_string(),
            "2027-01"
        );
    }
}
