//! Minute-resolution index series: ingestion, segmentation and one-step
//! increments.

use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::calendar::{Calendar, Session};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickPoint {
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

/// Timestamped index values together with the sessions they were recorded in.
///
/// Invariants (checked at construction): timestamps strictly increase, each
/// lies inside a calendar session, and every value is finite and positive.
#[derive(Debug, Clone, Serialize)]
pub struct TickSeries {
    points: Vec<TickPoint>,
    sessions: Vec<Session>,
    /// Index into `sessions` for each point.
    #[serde(skip)]
    session_index: Vec<usize>,
    source: String,
}

/// Contiguous, half-open slice of a [`TickSeries`].
#[derive(Debug, Clone)]
pub struct Segment<'a> {
    parent: &'a TickSeries,
    range: Range<usize>,
    label: String,
}

/// Signed and absolute one-step increments of a segment.
///
/// `crossing[k]` marks increment `k` as spanning a session boundary or a gap
/// of more than one minute. Flagged increments are dropped from downstream
/// statistics unless `exclude_crossing` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    signed: Vec<f64>,
    absolute: Vec<f64>,
    crossing: Vec<bool>,
    exclude_crossing: bool,
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .filter(|t| t.second() == 0 && t.nanosecond() == 0)
}

impl TickSeries {
    /// Builds a series from points already in ascending order. Diagnostics
    /// report 1-based point positions as line numbers.
    pub fn new(
        points: Vec<TickPoint>,
        calendar: &Calendar,
        source: impl Into<String>,
    ) -> Result<Self> {
        let lines: Vec<usize> = (1..=points.len()).collect();
        Self::build(points, &lines, calendar, source.into())
    }

    fn build(
        points: Vec<TickPoint>,
        lines: &[usize],
        calendar: &Calendar,
        source: String,
    ) -> Result<Self> {
        let mut sessions: Vec<Session> = Vec::new();
        let mut session_index = Vec::with_capacity(points.len());
        for (k, p) in points.iter().enumerate() {
            if !(p.value.is_finite() && p.value > 0.0) {
                return Err(Error::NonPositiveValue {
                    line: lines[k],
                    value: p.value,
                });
            }
            if k > 0 {
                let prev = points[k - 1].timestamp;
                if p.timestamp == prev {
                    return Err(Error::DuplicateTimestamp {
                        line: lines[k],
                        timestamp: p.timestamp.to_string(),
                    });
                }
                if p.timestamp < prev {
                    return Err(Error::MalformedRow {
                        line: lines[k],
                        message: format!("timestamp {} is not after {}", p.timestamp, prev),
                    });
                }
            }
            let session = calendar
                .session_of(p.timestamp)
                .ok_or_else(|| Error::OutsideCalendar {
                    line: lines[k],
                    timestamp: p.timestamp.format("%Y-%m-%dT%H:%M").to_string(),
                })?;
            if sessions.last() != Some(&session) {
                sessions.push(session);
            }
            session_index.push(sessions.len() - 1);
        }
        Ok(Self {
            points,
            sessions,
            session_index,
            source,
        })
    }

    /// Reads a `timestamp,value` CSV. Rows may appear in any order; they are
    /// sorted by time before validation.
    pub fn load_csv(path: &Path, calendar: &Calendar) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => Error::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => Error::MalformedRow {
                    line: 1,
                    message: format!("{other:?}"),
                },
            })?;

        let headers = reader.headers().map_err(|e| Error::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.len() < 2
            || !headers[0].eq_ignore_ascii_case("timestamp")
            || !headers[1].eq_ignore_ascii_case("value")
        {
            return Err(Error::MalformedRow {
                line: 1,
                message: "expected header `timestamp,value`".into(),
            });
        }

        let mut rows: Vec<(usize, TickPoint)> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::MalformedRow {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let timestamp = parse_timestamp(&record[0]).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("bad timestamp {:?}", &record[0]),
            })?;
            let value: f64 = record[1].parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("bad value {:?}", &record[1]),
            })?;
            rows.push((line, TickPoint { timestamp, value }));
        }
        // stable: for duplicates the later file line is reported
        rows.sort_by_key(|(_, p)| p.timestamp);
        let (lines, points): (Vec<usize>, Vec<TickPoint>) = rows.into_iter().unzip();
        Self::build(points, &lines, calendar, path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TickPoint] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The whole series as a single segment labelled "1".
    pub fn whole(&self) -> Segment<'_> {
        Segment {
            parent: self,
            range: 0..self.len(),
            label: "1".into(),
        }
    }

    /// Splits the series at calendar dates: each boundary starts a new
    /// segment with the first point dated on or after it. Segments are
    /// labelled "1", "2", ... in time order.
    pub fn segment_by_calendar(&self, boundaries: &[NaiveDate]) -> Result<Vec<Segment<'_>>> {
        if self.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                have: self.len(),
            });
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "segment boundaries must be strictly increasing".into(),
            ));
        }
        let first = self.points[0].timestamp.date();
        let last = self.points[self.len() - 1].timestamp.date();
        let mut cuts = vec![0];
        for &b in boundaries {
            if b <= first || b > last {
                return Err(Error::BoundaryOutsideSpan(b.to_string()));
            }
            cuts.push(self.points.partition_point(|p| p.timestamp.date() < b));
        }
        cuts.push(self.len());

        let segments: Vec<Segment<'_>> = cuts
            .windows(2)
            .enumerate()
            .map(|(k, w)| Segment {
                parent: self,
                range: w[0]..w[1],
                label: (k + 1).to_string(),
            })
            .collect();
        if let Some(s) = segments.iter().find(|s| s.len() < 2) {
            return Err(Error::InvalidParameter(format!(
                "segment {} would hold {} point(s); at least 2 are required",
                s.label,
                s.len()
            )));
        }
        Ok(segments)
    }
}

impl<'a> Segment<'a> {
    pub fn parent(&self) -> &'a TickSeries {
        self.parent
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn points(&self) -> &'a [TickPoint] {
        &self.parent.points[self.range.clone()]
    }

    /// One-step increments `y[k+1] - y[k]` between consecutive records.
    ///
    /// Increments that cross a session boundary or skip minutes are always
    /// flagged; with `cross_sessions = false` they are also excluded from
    /// window statistics and tail fits.
    pub fn increments(&self, cross_sessions: bool) -> Result<IncrementSeries> {
        if self.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                have: self.len(),
            });
        }
        let pts = self.points();
        let sidx = &self.parent.session_index[self.range.clone()];
        let signed: Vec<f64> = pts.windows(2).map(|w| w[1].value - w[0].value).collect();
        let crossing: Vec<bool> = (0..pts.len() - 1)
            .map(|k| {
                sidx[k] != sidx[k + 1]
                    || (pts[k + 1].timestamp - pts[k].timestamp).num_minutes() > 1
            })
            .collect();
        Ok(IncrementSeries::with_flags(signed, crossing, !cross_sessions))
    }
}

impl IncrementSeries {
    /// Increments with no session structure (e.g. surrogates).
    pub fn from_signed(signed: Vec<f64>) -> Self {
        let n = signed.len();
        Self::with_flags(signed, vec![false; n], true)
    }

    pub fn with_flags(signed: Vec<f64>, crossing: Vec<bool>, exclude_crossing: bool) -> Self {
        assert_eq!(signed.len(), crossing.len(), "one flag per increment");
        let absolute = signed.iter().map(|x| x.abs()).collect();
        Self {
            signed,
            absolute,
            crossing,
            exclude_crossing,
        }
    }

    /// Builds signed increments `sign * magnitude`, keeping `absolute`
    /// bit-identical to the supplied magnitudes.
    pub(crate) fn from_parts(signed: Vec<f64>, absolute: Vec<f64>) -> Self {
        let n = signed.len();
        Self {
            signed,
            absolute,
            crossing: vec![false; n],
            exclude_crossing: true,
        }
    }

    pub fn len(&self) -> usize {
        self.signed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signed.is_empty()
    }

    pub fn signed(&self) -> &[f64] {
        &self.signed
    }

    pub fn absolute(&self) -> &[f64] {
        &self.absolute
    }

    pub fn crossing_flags(&self) -> &[bool] {
        &self.crossing
    }

    pub fn excludes_crossing(&self) -> bool {
        self.exclude_crossing
    }

    /// Whether increment `k` takes part in downstream statistics.
    pub fn is_usable(&self, k: usize) -> bool {
        !(self.exclude_crossing && self.crossing[k])
    }

    /// Absolute increments that take part in downstream statistics.
    pub fn usable_absolute(&self) -> Vec<f64> {
        self.absolute
            .iter()
            .enumerate()
            .filter(|&(k, _)| self.is_usable(k))
            .map(|(_, &x)| x)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveTime;
    use proptest::prelude::*;

    fn minute(k: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2000, 1, 3)
            .unwrap()
            .and_time(NaiveTime::MIN)
            + chrono::Duration::minutes(k)
    }

    fn series(values: &[f64]) -> TickSeries {
        let pts = values
            .iter()
            .enumerate()
            .map(|(k, &v)| TickPoint {
                timestamp: minute(k as i64),
                value: v,
            })
            .collect();
        TickSeries::new(pts, &Calendar::Continuous, "test").unwrap()
    }

    #[test]
    fn increments_by_hand() {
        let s = series(&[100.0, 101.0, 99.0]);
        let inc = s.whole().increments(false).unwrap();
        assert_eq!(inc.signed(), &[1.0, -2.0]);
        assert_eq!(inc.absolute(), &[1.0, 2.0]);
    }

    #[test]
    fn constant_series_has_zero_increments() {
        let s = series(&[42.0; 10]);
        let inc = s.whole().increments(false).unwrap();
        assert!(inc.absolute().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn monotone_series_has_positive_increments() {
        let vals: Vec<f64> = (1..=20).map(|k| 100.0 + (k * k) as f64).collect();
        let inc = series(&vals).whole().increments(false).unwrap();
        assert!(inc.signed().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn single_point_segment_is_too_short() {
        let s = series(&[100.0]);
        assert!(matches!(
            s.whole().increments(false),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn non_positive_value_rejected() {
        let pts = vec![
            TickPoint { timestamp: minute(0), value: 1.0 },
            TickPoint { timestamp: minute(1), value: 0.0 },
        ];
        let err = TickSeries::new(pts, &Calendar::Continuous, "t").unwrap_err();
        assert!(matches!(err, Error::NonPositiveValue { line: 2, .. }));
    }

    #[test]
    fn gaps_and_session_crossings_are_flagged() {
        let cal = Calendar::HongKong1994To1997;
        let day = NaiveDate::from_ymd_opt(1996, 3, 4).unwrap();
        let t = |h, m| day.and_time(NaiveTime::from_hms_opt(h, m, 0).unwrap());
        let pts = [
            (t(12, 29), 100.0),
            (t(12, 30), 101.0),
            (t(14, 30), 105.0),
            (t(14, 31), 104.0),
            (t(14, 34), 103.0),
        ]
        .into_iter()
        .map(|(timestamp, value)| TickPoint { timestamp, value })
        .collect();
        let s = TickSeries::new(pts, &cal, "t").unwrap();
        assert_eq!(s.sessions().len(), 2);

        let inc = s.whole().increments(false).unwrap();
        assert_eq!(inc.crossing_flags(), &[false, true, false, true]);
        assert_eq!(inc.usable_absolute(), vec![1.0, 1.0]);

        let naive = s.whole().increments(true).unwrap();
        assert_eq!(naive.crossing_flags(), inc.crossing_flags());
        assert_eq!(naive.usable_absolute(), vec![1.0, 4.0, 1.0, 1.0]);
        assert_eq!(naive.signed(), inc.signed());
    }

    #[test]
    fn no_boundaries_gives_identity_partition() {
        let s = series(&[1.0, 2.0, 3.0]);
        let segs = s.segment_by_calendar(&[]).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].range(), 0..3);
    }

    #[test]
    fn boundary_outside_span_rejected() {
        let s = series(&[1.0, 2.0, 3.0]);
        let late = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        assert!(matches!(
            s.segment_by_calendar(&[late]),
            Err(Error::BoundaryOutsideSpan(_))
        ));
    }

    proptest! {
        #[test]
        fn segments_partition_the_series(
            n in 4usize..400,
            cut_days in proptest::collection::btree_set(1i64..20, 0..5),
        ) {
            // one point every 73 minutes spans ~20 days for n = 400
            let pts: Vec<TickPoint> = (0..n)
                .map(|k| TickPoint { timestamp: minute(73 * k as i64), value: 1.0 + k as f64 })
                .collect();
            let s = TickSeries::new(pts, &Calendar::Continuous, "p").unwrap();
            let first = s.points()[0].timestamp.date();
            let last = s.points()[n - 1].timestamp.date();
            let bounds: Vec<NaiveDate> = cut_days
                .iter()
                .map(|&d| first + chrono::Duration::days(d))
                .filter(|&d| d <= last)
                .collect();
            match s.segment_by_calendar(&bounds) {
                Ok(segs) => {
                    let joined: Vec<TickPoint> =
                        segs.iter().flat_map(|g| g.points().iter().copied()).collect();
                    prop_assert_eq!(joined.as_slice(), s.points());
                    prop_assert!(segs.windows(2).all(|w| w[0].range().end == w[1].range().start));
                }
                Err(Error::InvalidParameter(_)) => {} // a segment with < 2 points
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn absolute_matches_recomputation(vals in proptest::collection::vec(1.0f64..1e4, 2..200)) {
            let s = series(&vals);
            let inc = s.whole().increments(false).unwrap();
            prop_assert_eq!(inc.len(), vals.len() - 1);
            for k in 0..inc.len() {
                prop_assert_eq!(inc.absolute()[k], (vals[k + 1] - vals[k]).abs());
                prop_assert!(inc.absolute()[k] >= 0.0);
            }
        }
    }
}
