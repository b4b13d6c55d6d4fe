use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::{default_region_labels, Dims, RegionMap, ReportingTriangle};
use crate::error::{NowcastError, Result};

/// One notified case: the date used as the occurrence reference, the date it
/// entered the database, and an optional region key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineListRecord {
    pub event_time: NaiveDate,
    pub report_time: NaiveDate,
    pub region: Option<String>,
}

impl LineListRecord {
    pub fn new(event_time: NaiveDate, report_time: NaiveDate) -> Self {
        Self {
            event_time,
            report_time,
            region: None,
        }
    }

    pub fn in_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }
}

/// Aggregation unit for both axes of the triangle.
///
/// Epidemiological weeks start on Sunday by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TimeUnit {
    Day,
    Week { start: Weekday },
}

impl Default for TimeUnit {
    fn default() -> Self {
        TimeUnit::Week {
            start: Weekday::Sun,
        }
    }
}

impl TimeUnit {
    pub fn days(&self) -> i64 {
        match self {
            TimeUnit::Day => 1,
            TimeUnit::Week { .. } => 7,
        }
    }

    /// First day of the period containing `date`.
    pub fn period_start(&self, date: NaiveDate) -> NaiveDate {
        match self {
            TimeUnit::Day => date,
            TimeUnit::Week { start } => {
                let back =
                    (date.weekday().num_days_from_sunday() + 7 - start.num_days_from_sunday()) % 7;
                date - Duration::days(back as i64)
            }
        }
    }

    /// Zero-based period number of `date` counted from the period starting at `origin`.
    pub fn period_index(&self, origin: NaiveDate, date: NaiveDate) -> i64 {
        (self.period_start(date) - origin)
            .num_days()
            .div_euclid(self.days())
    }

    pub fn period_date(&self, origin: NaiveDate, index: i64) -> NaiveDate {
        origin + Duration::days(index * self.days())
    }
}

const WEEKDAY_TAGS: [(Weekday, &str); 7] = [
    (Weekday::Sun, "sun"),
    (Weekday::Mon, "mon"),
    (Weekday::Tue, "tue"),
    (Weekday::Wed, "wed"),
    (Weekday::Thu, "thu"),
    (Weekday::Fri, "fri"),
    (Weekday::Sat, "sat"),
];

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeUnit::Day => f.write_str("day"),
            TimeUnit::Week {
                start: Weekday::Sun,
            } => f.write_str("week"),
            TimeUnit::Week { start } => {
                let tag = WEEKDAY_TAGS
                    .iter()
                    .find(|(w, _)| w == start)
                    .map(|(_, t)| *t)
                    .unwrap();
                write!(f, "week-{tag}")
            }
        }
    }
}

impl FromStr for TimeUnit {
    type Err = NowcastError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "day" => Ok(TimeUnit::Day),
            "week" => Ok(TimeUnit::default()),
            other => other
                .strip_prefix("week-")
                .and_then(|tag| WEEKDAY_TAGS.iter().find(|(_, t)| *t == tag))
                .map(|(w, _)| TimeUnit::Week { start: *w })
                .ok_or_else(|| NowcastError::Parse(format!("unknown time unit `{other}`"))),
        }
    }
}

impl TryFrom<String> for TimeUnit {
    type Error = NowcastError;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<TimeUnit> for String {
    fn from(value: TimeUnit) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions<'a> {
    pub unit: TimeUnit,
    pub max_delay: usize,
    pub as_of: NaiveDate,
    pub regions: Option<&'a RegionMap>,
    /// Period containing this date becomes row 1; defaults to the earliest event.
    pub origin: Option<NaiveDate>,
}

impl<'a> BuildOptions<'a> {
    pub fn weekly(max_delay: usize, as_of: NaiveDate) -> Self {
        Self {
            unit: TimeUnit::default(),
            max_delay,
            as_of,
            regions: None,
            origin: None,
        }
    }
}

/// Aggregate a line list into a censored triangle.
///
/// The delay of a record is the period index of its report minus that of its
/// event. Delays beyond `max_delay` go to the overflow tally of their row.
/// Records reported after `as_of` are not yet known and are dropped (their
/// number is available from [`ReportingTriangle::unreported`]). Without a
/// region map all records are pooled into a single region.
pub fn build_triangle(
    records: &[LineListRecord],
    opts: &BuildOptions<'_>,
) -> Result<ReportingTriangle> {
    if records.is_empty() {
        return Err(NowcastError::EmptyRecords);
    }
    if opts.max_delay < 1 {
        return Err(NowcastError::InvalidArgument(
            "maximum delay D must be at least 1".into(),
        ));
    }
    let unit = opts.unit;
    let s_len = opts.regions.map_or(1, |m| m.len());

    let mut region_of = Vec::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        if r.report_time < r.event_time {
            return Err(NowcastError::InvalidRecord {
                index,
                reason: format!(
                    "report date {} precedes event date {}",
                    r.report_time, r.event_time
                ),
            });
        }
        if r.event_time > opts.as_of {
            return Err(NowcastError::InvalidRecord {
                index,
                reason: format!(
                    "event date {} is after the as-of date {}",
                    r.event_time, opts.as_of
                ),
            });
        }
        let s = match (opts.regions, &r.region) {
            (Some(map), Some(key)) => {
                map.index_of(key)
                    .ok_or_else(|| NowcastError::UnknownRegion {
                        index,
                        region: key.clone(),
                    })?
            }
            (Some(_), None) => {
                return Err(NowcastError::InvalidRecord {
                    index,
                    reason: "missing region for a spatial triangle".into(),
                })
            }
            (None, _) => 0,
        };
        region_of.push(s);
    }

    let earliest = records
        .iter()
        .map(|r| r.event_time)
        .min()
        .expect("non-empty");
    let origin = unit.period_start(opts.origin.unwrap_or(earliest));
    if earliest < origin {
        return Err(NowcastError::InvalidArgument(format!(
            "origin {origin} is after the earliest event {earliest}"
        )));
    }
    let as_of_period = unit.period_index(origin, opts.as_of);
    let t_len = (as_of_period + 1) as usize;
    if t_len <= opts.max_delay {
        return Err(NowcastError::InvalidArgument(format!(
            "as-of date leaves T={t_len} periods, need more than D={}",
            opts.max_delay
        )));
    }

    let dims = Dims::new(t_len, opts.max_delay, s_len);
    let mut full = vec![0u64; dims.n_cells()];
    let mut overflow = vec![0u64; t_len * s_len];
    let mut unreported = 0u64;
    for (r, &s) in records.iter().zip(&region_of) {
        let t = unit.period_index(origin, r.event_time);
        let rep = unit.period_index(origin, r.report_time);
        if rep > as_of_period {
            unreported += 1;
            continue;
        }
        let delay = (rep - t) as usize;
        let t = t as usize;
        if delay > opts.max_delay {
            overflow[t * s_len + s] += 1;
        } else {
            full[dims.index(t, delay, s)] += 1;
        }
    }

    let labels = opts
        .regions
        .map_or_else(|| default_region_labels(1), |m| m.regions.clone());
    let mut tri = ReportingTriangle::censored(dims, &full)?
        .with_overflow(overflow)?
        .with_regions(labels)?
        .with_unit(unit)
        .with_as_of(Some(opts.as_of));
    tri.set_unreported(unreported);
    Ok(tri)
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    event_date: String,
    report_date: String,
    #[serde(default)]
    region: Option<String>,
}

fn parse_date(s: &str, line: u64, column: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| NowcastError::Parse(format!("line {line}: bad {column} `{s}`: {e}")))
}

/// Read a `event_date,report_date[,region]` CSV with ISO-8601 dates.
pub fn read_line_list<R: Read>(reader: R) -> Result<Vec<LineListRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawRecord>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            NowcastError::Parse(format!("line {line}: {e}"))
        })?;
        // header is line 1
        let line = out.len() as u64 + 2;
        out.push(LineListRecord {
            event_time: parse_date(&row.event_date, line, "event_date")?,
            report_time: parse_date(&row.report_date, line, "report_date")?,
            region: row.region.filter(|r| !r.is_empty()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn weeks_start_on_sunday() {
        let unit = TimeUnit::default();
        // 2017-04-02 is a Sunday
        assert_eq!(unit.period_start(date("2017-04-02")), date("2017-04-02"));
        assert_eq!(unit.period_start(date("2017-04-08")), date("2017-04-02"));
        assert_eq!(unit.period_start(date("2017-04-09")), date("2017-04-09"));
        let monday = TimeUnit::Week {
            start: Weekday::Mon,
        };
        assert_eq!(monday.period_start(date("2017-04-02")), date("2017-03-27"));
        assert_eq!("week-mon".parse::<TimeUnit>().unwrap(), monday);
        assert_eq!(monday.to_string(), "week-mon");
        assert!("fortnight".parse::<TimeUnit>().is_err());
    }

    #[test]
    fn single_record_lands_in_last_row() {
        let as_of = date("2017-04-06");
        let early = LineListRecord::new(date("2017-01-01"), date("2017-01-01"));
        let rec = LineListRecord::new(date("2017-04-03"), date("2017-04-04"));
        // one anchoring record far in the past so that T > D
        let mut opts = BuildOptions::weekly(2, as_of);
        opts.origin = Some(date("2017-03-12"));
        let tri = build_triangle(std::slice::from_ref(&rec), &opts).unwrap();
        let dims = tri.dims();
        assert_eq!(dims.t, 4);
        assert_eq!(tri.count(3, 0, 0), Some(1));
        assert!(!tri.is_observed(3, 1, 0));
        let total: u64 = tri.raw_counts().iter().sum();
        assert_eq!(total, 1);
        assert!(build_triangle(&[early, rec], &BuildOptions::weekly(2, as_of)).is_ok());
    }

    #[test]
    fn long_delays_go_to_overflow() {
        let event = date("2020-01-05");
        let rec = LineListRecord::new(event, event + Duration::days(7 * 11));
        let tri = build_triangle(&[rec], &BuildOptions::weekly(10, date("2020-06-01"))).unwrap();
        assert!(tri.raw_counts().iter().all(|&c| c == 0));
        assert_eq!(tri.overflow(0, 0), 1);
    }

    #[test]
    fn rejects_bad_records() {
        let as_of = date("2020-06-01");
        let bad = LineListRecord::new(date("2020-02-01"), date("2020-01-01"));
        let good = LineListRecord::new(date("2020-01-01"), date("2020-01-02"));
        match build_triangle(&[good.clone(), bad], &BuildOptions::weekly(2, as_of)) {
            Err(NowcastError::InvalidRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            build_triangle(&[], &BuildOptions::weekly(2, as_of)),
            Err(NowcastError::EmptyRecords)
        ));
        let map =
            RegionMap::new(vec!["a".into(), "b".into()], vec![vec![0, 1], vec![1, 0]]).unwrap();
        let mut opts = BuildOptions::weekly(2, as_of);
        opts.regions = Some(&map);
        let stray = good.clone().in_region("zzz");
        assert!(matches!(
            build_triangle(&[good.in_region("a"), stray], &opts),
            Err(NowcastError::UnknownRegion { index: 1, .. })
        ));
    }

    #[test]
    fn conserves_generated_weekly_totals() {
        // 1000 records with known weekly totals; recount independently
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let origin = date("2019-01-06");
        let weeks = 30usize;
        let mut totals = vec![0u64; weeks];
        let mut records = Vec::new();
        for _ in 0..1000 {
            let w = rng.random_range(0..weeks);
            let day = rng.random_range(0..7);
            let lag_days = rng.random_range(0..7 * 14);
            let event = origin + Duration::days((w * 7 + day) as i64);
            records.push(LineListRecord::new(event, event + Duration::days(lag_days)));
            totals[w] += 1;
        }
        let as_of = origin + Duration::days(7 * 60);
        let tri = build_triangle(&records, &BuildOptions::weekly(10, as_of)).unwrap();
        for (w, &total) in totals.iter().enumerate() {
            let in_cells: u64 = (0..=10).map(|d| tri.count(w, d, 0).unwrap_or(0)).sum();
            assert_eq!(in_cells + tri.overflow(w, 0), total, "week {w}");
        }
        assert_eq!(tri.unreported(), 0);

        // permutation invariance
        records.shuffle(&mut rng);
        let again = build_triangle(&records, &BuildOptions::weekly(10, as_of)).unwrap();
        assert_eq!(tri, again);
    }

    #[test]
    fn reads_csv_with_optional_region() {
        let csv =
            "event_date,report_date,region\n2020-01-01,2020-01-09,a\n2020-01-02,2020-01-02,\n";
        let recs = read_line_list(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].region.as_deref(), Some("a"));
        assert_eq!(recs[1].region, None);
        let plain = "event_date,report_date\n2020-01-01,2020-01-09\n";
        assert_eq!(read_line_list(plain.as_bytes()).unwrap().len(), 1);
        let bad = "event_date,report_date\n2020-01-01,2020-01-09\n2020-13-01,2020-01-01\n";
        let err = read_line_list(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
