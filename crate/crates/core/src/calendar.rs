//! Trading-session calendars.
//!
//! A calendar answers one question: which session (if any) contains a given
//! minute. Sessions are closed intervals `[open, close]` on a single date; a
//! date may carry several sessions (e.g. a morning and an afternoon session
//! separated by a lunch break).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trading session on one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Session {
    pub date: NaiveDate,
    #[serde(with = "hhmm")]
    pub open: NaiveTime,
    #[serde(with = "hhmm")]
    pub close: NaiveTime,
}

impl Session {
    pub fn contains(&self, t: NaiveDateTime) -> bool {
        t.date() == self.date && t.time() >= self.open && t.time() <= self.close
    }
}

/// Session schedule, either an explicit table or a rule-based preset.
#[derive(Debug, Clone, PartialEq)]
pub enum Calendar {
    /// Explicit per-date sessions, sorted by open time within each date.
    Table(BTreeMap<NaiveDate, Vec<Session>>),
    /// Hong Kong schedule July 1994 to June 1997: weekdays, 10:00-12:30 and
    /// 14:30-close, where close moved from 15:45 to 15:55 (Sep 1995) and to
    /// 16:00 (Jan 1997).
    HongKong1994To1997,
    /// Every minute of every day belongs to a single daily session. Useful for
    /// synthetic series with no session structure.
    Continuous,
}

pub const HK_PRESET: &str = "hk-1994-1997";
pub const CONTINUOUS_PRESET: &str = "continuous";

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).expect("valid clock time")
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Calendar {
    /// Resolves a preset name or loads a calendar table from a `.json` or
    /// `.csv` file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec {
            HK_PRESET => Ok(Calendar::HongKong1994To1997),
            CONTINUOUS_PRESET => Ok(Calendar::Continuous),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn from_sessions(sessions: impl IntoIterator<Item = Session>) -> Result<Self> {
        let mut table: BTreeMap<NaiveDate, Vec<Session>> = BTreeMap::new();
        for s in sessions {
            if s.close < s.open {
                return Err(Error::Calendar(format!(
                    "session on {} closes ({}) before it opens ({})",
                    s.date, s.close, s.open
                )));
            }
            table.entry(s.date).or_default().push(s);
        }
        for day in table.values_mut() {
            day.sort();
            if day.windows(2).any(|w| w[1].open <= w[0].close) {
                return Err(Error::Calendar(format!(
                    "overlapping sessions on {}",
                    day[0].date
                )));
            }
        }
        Ok(Calendar::Table(table))
    }

    /// Loads `(date, open, close)` rows from JSON (an array of objects) or CSV
    /// (header `date,open,close`), chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let text = std::fs::read_to_string(path).map_err(io_err)?;
            let sessions: Vec<Session> = serde_json::from_str(&text)
                .map_err(|e| Error::Calendar(format!("{}: {e}", path.display())))?;
            return Self::from_sessions(sessions);
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => io_err(source),
                other => Error::Calendar(format!("{other:?}")),
            })?;
        let mut sessions = Vec::new();
        for row in reader.deserialize::<Session>() {
            sessions.push(row.map_err(|e| Error::Calendar(format!("{}: {e}", path.display())))?);
        }
        Self::from_sessions(sessions)
    }

    /// All sessions held on `date`, in time order.
    pub fn sessions_on(&self, date: NaiveDate) -> Vec<Session> {
        match self {
            Calendar::Table(t) => t.get(&date).cloned().unwrap_or_default(),
            Calendar::Continuous => vec![Session {
                date,
                open: hm(0, 0),
                close: hm(23, 59),
            }],
            Calendar::HongKong1994To1997 => {
                if date < ymd(1994, 7, 1)
                    || date > ymd(1997, 6, 30)
                    || matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
                {
                    return Vec::new();
                }
                let close = if date < ymd(1995, 9, 1) {
                    hm(15, 45)
                } else if date < ymd(1997, 1, 1) {
                    hm(15, 55)
                } else {
                    hm(16, 0)
                };
                vec![
                    Session {
                        date,
                        open: hm(10, 0),
                        close: hm(12, 30),
                    },
                    Session {
                        date,
                        open: hm(14, 30),
                        close,
                    },
                ]
            }
        }
    }

    /// The session containing `t`, if any.
    pub fn session_of(&self, t: NaiveDateTime) -> Option<Session> {
        self.sessions_on(t.date())
            .into_iter()
            .find(|s| s.contains(t))
    }
}

mod hhmm {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveTime::parse_from_str(&raw, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(&raw, "%H:%M:%S"))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(date: NaiveDate, h: u32, m: u32) -> NaiveDateTime {
        date.and_time(hm(h, m))
    }

    #[test]
    fn hk_preset_trading_minutes_per_regime() {
        let cal = Calendar::HongKong1994To1997;
        let minutes = |d: NaiveDate| -> i64 {
            cal.sessions_on(d)
                .iter()
                .map(|s| (s.close - s.open).num_minutes())
                .sum()
        };
        assert_eq!(minutes(ymd(1994, 7, 4)), 225);
        assert_eq!(minutes(ymd(1996, 3, 5)), 235);
        assert_eq!(minutes(ymd(1997, 2, 3)), 240);
        assert_eq!(minutes(ymd(1995, 8, 30)), 225);
        assert_eq!(minutes(ymd(1995, 9, 1)), 235);
    }

    #[test]
    fn hk_preset_rejects_lunch_and_weekends() {
        let cal = Calendar::HongKong1994To1997;
        let monday = ymd(1996, 3, 4);
        assert!(cal.session_of(at(monday, 10, 0)).is_some());
        assert!(cal.session_of(at(monday, 12, 30)).is_some());
        assert!(cal.session_of(at(monday, 13, 0)).is_none());
        assert!(cal.session_of(at(monday, 15, 55)).is_some());
        assert!(cal.session_of(at(monday, 15, 56)).is_none());
        assert!(cal.session_of(at(ymd(1996, 3, 9), 11, 0)).is_none());
    }

    #[test]
    fn table_from_json_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("cal.json");
        std::fs::write(
            &json,
            r#"[{"date":"2020-01-02","open":"09:30","close":"16:00"}]"#,
        )
        .unwrap();
        let cal = Calendar::load(&json).unwrap();
        assert!(cal.session_of(at(ymd(2020, 1, 2), 9, 30)).is_some());
        assert!(cal.session_of(at(ymd(2020, 1, 3), 9, 30)).is_none());

        let csv = dir.path().join("cal.csv");
        std::fs::write(&csv, "date,open,close\n2020-01-02,09:30,12:00\n2020-01-02,13:00,16:00\n")
            .unwrap();
        let cal = Calendar::load(&csv).unwrap();
        assert_eq!(cal.sessions_on(ymd(2020, 1, 2)).len(), 2);
        assert!(cal.session_of(at(ymd(2020, 1, 2), 12, 30)).is_none());
    }

    #[test]
    fn overlapping_sessions_rejected() {
        let d = ymd(2020, 1, 2);
        let err = Calendar::from_sessions([
            Session { date: d, open: hm(9, 0), close: hm(12, 0) },
            Session { date: d, open: hm(11, 0), close: hm(13, 0) },
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Calendar(_)));
    }
}
