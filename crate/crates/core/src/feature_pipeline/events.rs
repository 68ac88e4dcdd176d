use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::scaled_beta::SummaryStats;

pub const SNAPSHOT_HEADER: [&str; 8] = [
    "artist",
    "event_id",
    "snapshot_date",
    "mean_price",
    "median_price",
    "low_price",
    "high_price",
    "listing_count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSnapshot {
    pub artist: String,
    pub event_id: String,
    pub snapshot_date: NaiveDate,
    pub mean_price: f64,
    pub median_price: f64,
    pub low_price: f64,
    pub high_price: f64,
    pub listing_count: u32,
}

impl EventSnapshot {
    fn check(&self) -> Result<(), String> {
        let prices = [
            self.mean_price,
            self.median_price,
            self.low_price,
            self.high_price,
        ];
        if prices.iter().any(|p| !p.is_finite()) {
            return Err("non-finite price".into());
        }
        if self.low_price > self.high_price {
            return Err("low_price exceeds high_price".into());
        }
        let inside = |p: f64| self.low_price <= p && p <= self.high_price;
        if !inside(self.mean_price) || !inside(self.median_price) {
            return Err("mean or median outside [low, high]".into());
        }
        Ok(())
    }
}

/// All snapshots of one event, ordered by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    pub event_id: String,
    pub artist: String,
    pub snapshots: Vec<EventSnapshot>,
}

impl EventSeries {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Events grouped by id (sorted), plus the rows that failed validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCorpus {
    pub series: Vec<EventSeries>,
    pub rejected: Vec<RejectedRow>,
}

impl EventCorpus {
    /// Groups already-validated snapshots. Later duplicates of an
    /// `(event_id, date)` pair are discarded.
    pub fn from_snapshots(snapshots: impl IntoIterator<Item = EventSnapshot>) -> Self {
        let mut corpus = Self::default();
        let mut groups: BTreeMap<String, Vec<EventSnapshot>> = BTreeMap::new();
        for snap in snapshots {
            groups.entry(snap.event_id.clone()).or_default().push(snap);
        }
        for (event_id, mut snaps) in groups {
            snaps.sort_by_key(|s| s.snapshot_date);
            snaps.dedup_by_key(|s| s.snapshot_date);
            corpus.series.push(EventSeries {
                artist: snaps[0].artist.clone(),
                event_id,
                snapshots: snaps,
            });
        }
        corpus
    }

    pub fn by_artist<'a>(&'a self, artist: &'a str) -> impl Iterator<Item = &'a EventSeries> + 'a {
        self.series.iter().filter(move |s| s.artist == artist)
    }

    /// Distinct artists in first-appearance order of the sorted series.
    pub fn artists(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for s in &self.series {
            if !seen.contains(&s.artist) {
                seen.push(s.artist.clone());
            }
        }
        seen
    }

    pub fn snapshot_count(&self) -> usize {
        self.series.iter().map(|s| s.snapshots.len()).sum()
    }
}

/// Which snapshots feed the per-event aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Every observed snapshot.
    #[default]
    Full,
    /// Snapshots dated within the last `k` days of the series (inclusive of
    /// the final date).
    LastDays(u32),
}

impl FromStr for Window {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "full" {
            return Ok(Window::Full);
        }
        let days = s
            .strip_prefix("last:")
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|&k| k > 0);
        days.map(Window::LastDays).ok_or_else(|| {
            PipelineError::Config(format!("bad window {s:?} (expected full or last:K)"))
        })
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::Full => f.write_str("full"),
            Window::LastDays(k) => write!(f, "last:{k}"),
        }
    }
}

/// Per-field average of the snapshots selected by `window`.
pub fn aggregate_window(
    series: &EventSeries,
    window: Window,
) -> Result<SummaryStats, PipelineError> {
    let selected: Vec<&EventSnapshot> = match window {
        Window::Full => series.snapshots.iter().collect(),
        Window::LastDays(k) => match series.snapshots.last() {
            Some(last) => {
                let cutoff = last.snapshot_date - Duration::days(i64::from(k));
                series
                    .snapshots
                    .iter()
                    .filter(|s| s.snapshot_date > cutoff)
                    .collect()
            }
            None => Vec::new(),
        },
    };
    if selected.is_empty() {
        return Err(PipelineError::EmptyWindow(series.event_id.clone()));
    }
    let n = selected.len() as f64;
    let avg = |f: fn(&EventSnapshot) -> f64| selected.iter().map(|s| f(s)).sum::<f64>() / n;
    Ok(SummaryStats::new(
        avg(|s| s.low_price),
        avg(|s| s.high_price),
        avg(|s| s.mean_price),
        avg(|s| s.median_price),
    ))
}

/// Reads the snapshot CSV. A wrong header or column count is a schema error;
/// rows that parse but violate price ordering (or repeat a date) land in
/// `rejected`.
pub fn load_event_csv(path: &Path) -> Result<EventCorpus, PipelineError> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let schema = |line: u64, message: String| PipelineError::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| schema(1, e.to_string()))?
        .clone();
    if header.iter().ne(SNAPSHOT_HEADER.iter().copied()) {
        return Err(schema(
            1,
            format!("expected header {:?}", SNAPSHOT_HEADER.join(",")),
        ));
    }

    let mut rejected = Vec::new();
    let mut groups: BTreeMap<String, Vec<(u64, EventSnapshot)>> = BTreeMap::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                if let csv::ErrorKind::Io(_) = e.kind() {
                    let csv::ErrorKind::Io(source) = e.into_kind() else {
                        unreachable!()
                    };
                    return Err(PipelineError::Io {
                        path: path.to_path_buf(),
                        source,
                    });
                }
                return Err(schema(line, e.to_string()));
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        match parse_row(&record) {
            Ok(snap) => match snap.check() {
                Ok(()) => groups
                    .entry(snap.event_id.clone())
                    .or_default()
                    .push((line, snap)),
                Err(reason) => rejected.push(RejectedRow { line, reason }),
            },
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }

    let mut series = Vec::with_capacity(groups.len());
    for (event_id, mut rows) in groups {
        rows.sort_by_key(|(line, s)| (s.snapshot_date, *line));
        let artist = rows[0].1.artist.clone();
        let mut snapshots: Vec<EventSnapshot> = Vec::with_capacity(rows.len());
        for (line, snap) in rows {
            if snap.artist != artist {
                rejected.push(RejectedRow {
                    line,
                    reason: format!("event {event_id} already belongs to artist {artist:?}"),
                });
            } else if snapshots
                .last()
                .is_some_and(|prev| prev.snapshot_date == snap.snapshot_date)
            {
                rejected.push(RejectedRow {
                    line,
                    reason: format!("duplicate snapshot date {}", snap.snapshot_date),
                });
            } else {
                snapshots.push(snap);
            }
        }
        series.push(EventSeries {
            event_id,
            artist,
            snapshots,
        });
    }
    rejected.sort_by_key(|r| r.line);
    Ok(EventCorpus { series, rejected })
}

fn parse_row(record: &csv::StringRecord) -> Result<EventSnapshot, String> {
    let field = |i: usize| record.get(i).unwrap_or_default();
    let price = |i: usize| {
        field(i)
            .parse::<f64>()
            .map_err(|_| format!("{} is not a number: {:?}", SNAPSHOT_HEADER[i], field(i)))
    };
    let snapshot_date = NaiveDate::parse_from_str(field(2), "%Y-%m-%d")
        .map_err(|_| format!("snapshot_date is not an ISO-8601 date: {:?}", field(2)))?;
    let listing_count = field(7)
        .parse::<u32>()
        .map_err(|_| format!("listing_count is not a count: {:?}", field(7)))?;
    if field(0).is_empty() || field(1).is_empty() {
        return Err("artist and event_id must be non-empty".into());
    }
    Ok(EventSnapshot {
        artist: field(0).to_string(),
        event_id: field(1).to_string(),
        snapshot_date,
        mean_price: price(3)?,
        median_price: price(4)?,
        low_price: price(5)?,
        high_price: price(6)?,
        listing_count,
    })
}

pub fn write_event_csv(corpus: &EventCorpus, path: &Path) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    writer
        .write_record(SNAPSHOT_HEADER)
        .map_err(|e| io(e.into()))?;
    for snap in corpus.series.iter().flat_map(|s| &s.snapshots) {
        writer
            .write_record([
                snap.artist.clone(),
                snap.event_id.clone(),
                snap.snapshot_date.format("%Y-%m-%d").to_string(),
                snap.mean_price.to_string(),
                snap.median_price.to_string(),
                snap.low_price.to_string(),
                snap.high_price.to_string(),
                snap.listing_count.to_string(),
            ])
            .map_err(|e| io(e.into()))?;
    }
    writer.flush().map_err(io)
}
