//! Pen-stream ingestion: parsing digitizer files, loading labelled datasets
//! from a metadata CSV, and splitting records into strokes.
//!
//! A pen-stream file holds one sample per line as seven whitespace-separated
//! integers `x y t on_surface azimuth altitude pressure`, optionally preceded
//! by a single-integer row count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PenSample {
    pub x: i64,
    pub y: i64,
    pub t: i64,
    pub on_surface: bool,
    pub azimuth: i64,
    pub altitude: i64,
    pub pressure: i64,
}

impl PenSample {
    /// Pressure as seen by feature extraction: zero while the pen is in the air.
    pub fn effective_pressure(&self) -> i64 {
        if self.on_surface {
            self.pressure
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Word,
    Pseudoword,
    DifficultWord,
    Other(String),
}

impl Task {
    pub fn token(&self) -> &str {
        match self {
            Task::Word => "word",
            Task::Pseudoword => "pseudoword",
            Task::DifficultWord => "difficult_word",
            Task::Other(s) => s,
        }
    }
}

impl FromStr for Task {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim() {
            "word" => Task::Word,
            "pseudoword" => Task::Pseudoword,
            "difficult_word" => Task::DifficultWord,
            other => Task::Other(other.to_string()),
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Binary diagnosis label. DYG is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "TD")]
    Td,
    #[serde(rename = "DYG")]
    Dyg,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Dyg
    }

    /// +1 for DYG, -1 for TD.
    pub fn sign(self) -> f64 {
        match self {
            Label::Dyg => 1.0,
            Label::Td => -1.0,
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "TD" => Ok(Label::Td),
            "DYG" => Ok(Label::Dyg),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Td => "TD",
            Label::Dyg => "DYG",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandwritingRecord {
    pub subject_id: String,
    pub task: Task,
    pub label: Label,
    pub samples: Vec<PenSample>,
    pub sample_id: String,
}

impl HandwritingRecord {
    /// Checks the record-level invariants: nonempty, time-ordered, some ink.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyStream);
        }
        if let Some(i) = self.samples.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::MalformedRow {
                line: i + 2,
                reason: "timestamp decreases".into(),
            });
        }
        if !self.samples.iter().any(|s| s.on_surface) {
            return Err(Error::RecordRejected(self.sample_id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<HandwritingRecord>,
    pub task_filter: Task,
    pub class_counts: BTreeMap<Label, usize>,
}

impl Dataset {
    /// Builds a dataset, sorting records by sample id and counting classes.
    pub fn new(task: Task, mut records: Vec<HandwritingRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(w) = records.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
            return Err(Error::DuplicateSampleId(w[0].sample_id.clone()));
        }
        let mut class_counts = BTreeMap::new();
        for r in &records {
            if r.task != task {
                return Err(Error::InvalidConfig(format!(
                    "record {} has task {}, dataset is {}",
                    r.sample_id, r.task, task
                )));
            }
            *class_counts.entry(r.label).or_insert(0) += 1;
        }
        Ok(Dataset {
            records,
            task_filter: task,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.class_counts.get(&label).copied().unwrap_or(0)
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.subject_id.as_str()).collect()
    }
}

/// Parsing options for pen-stream files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatConfig {
    pub has_count_header: bool,
    /// Inclusive device range for azimuth; `None` only enforces non-negativity.
    pub azimuth_range: Option<(i64, i64)>,
    pub altitude_range: Option<(i64, i64)>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            has_count_header: true,
            azimuth_range: None,
            altitude_range: None,
        }
    }
}

fn check_range(v: i64, range: Option<(i64, i64)>, what: &str, line: usize) -> Result<()> {
    let ok = match range {
        Some((lo, hi)) => (lo..=hi).contains(&v),
        None => v >= 0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::MalformedRow {
            line,
            reason: format!("{what} {v} out of range"),
        })
    }
}

pub fn parse_pen_stream(raw: &[u8], config: &FormatConfig) -> Result<Vec<PenSample>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::MalformedRow {
        line: 0,
        reason: format!("not utf-8: {e}"),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let declared = if config.has_count_header {
        match lines.next() {
            None => return Err(Error::EmptyStream),
            Some((line, l)) => Some(l.parse::<usize>().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad count header {l:?}"),
            })?),
        }
    } else {
        None
    };

    let mut samples: Vec<PenSample> = Vec::new();
    for (line, l) in lines {
        let mut vals = [0i64; 7];
        let mut n = 0;
        for tok in l.split_whitespace() {
            if n == 7 {
                n += 1;
                break;
            }
            vals[n] = tok.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("non-integer token {tok:?}"),
            })?;
            n += 1;
        }
        if n != 7 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 7 columns, found {}", l.split_whitespace().count()),
            });
        }
        let [x, y, t, pen, azimuth, altitude, pressure] = vals;
        let on_surface = match pen {
            0 => false,
            1 => true,
            other => {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("pen indicator {other} is not 0/1"),
                })
            }
        };
        check_range(x, None, "x", line)?;
        check_range(y, None, "y", line)?;
        check_range(pressure, None, "pressure", line)?;
        check_range(azimuth, config.azimuth_range, "azimuth", line)?;
        check_range(altitude, config.altitude_range, "altitude", line)?;
        if let Some(prev) = samples.last() {
            if t < prev.t {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("timestamp {t} precedes {}", prev.t),
                });
            }
        }
        samples.push(PenSample {
            x,
            y,
            t,
            on_surface,
            azimuth,
            altitude,
            pressure,
        });
    }

    if let Some(declared) = declared {
        if declared != samples.len() {
            return Err(Error::CountMismatch {
                declared,
                found: samples.len(),
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(samples)
}

/// Serializes samples in the pen-stream format, with a count header.
pub fn write_pen_stream(samples: &[PenSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 32 + 8);
    out.push_str(&samples.len().to_string());
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            s.x,
            s.y,
            s.t,
            u8::from(s.on_surface),
            s.azimuth,
            s.altitude,
            s.pressure
        ));
    }
    out
}

#[derive(Debug, Deserialize)]
struct MetadataRow {
    subject_id: String,
    label: String,
    task: String,
    file: String,
}

/// Loads every metadata row whose task matches `task`, reading pen streams
/// relative to `stream_dir`. The sample id of a record is its file stem.
pub fn load_dataset(
    stream_dir: &Path,
    metadata: &[u8],
    task: &Task,
    config: &FormatConfig,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(metadata);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedMetadata(e.to_string()))?
        .clone();
    let expected = ["subject_id", "label", "task", "file"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::MalformedMetadata(format!(
            "header must be {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.deserialize::<MetadataRow>() {
        let row = row.map_err(|e| Error::MalformedMetadata(e.to_string()))?;
        let label: Label = row.label.parse()?;
        let row_task: Task = row.task.parse().expect("infallible");
        if &row_task != task {
            continue;
        }
        let path = stream_dir.join(&row.file);
        let sample_id = Path::new(&row.file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| row.file.clone());
        if !seen.insert(sample_id.clone()) {
            return Err(Error::DuplicateSampleId(sample_id));
        }
        let raw = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
            _ => Error::io(&path, e),
        })?;
        let samples = parse_pen_stream(&raw, config)?;
        let record = HandwritingRecord {
            subject_id: row.subject_id,
            task: row_task,
            label,
            samples,
            sample_id,
        };
        record.validate()?;
        records.push(record);
    }
    Dataset::new(task.clone(), records)
}

/// Maximal run of consecutive on-surface samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub samples: Vec<PenSample>,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPosition {
    /// Hover before the first stroke.
    Leading,
    /// Pen lift between two strokes.
    Between,
    /// Hover after the last stroke.
    Trailing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InAirGap {
    pub samples: Vec<PenSample>,
    pub position: GapPosition,
    /// For `Between` gaps: ticks from the last sample of the previous stroke
    /// to the first sample of the next one. Otherwise the span of the gap.
    pub duration_ticks: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub strokes: Vec<Stroke>,
    pub gaps: Vec<InAirGap>,
}

impl Segmentation {
    pub fn pen_lifts(&self) -> usize {
        self.strokes.len().saturating_sub(1)
    }
}

pub fn segment_strokes(record: &HandwritingRecord) -> Segmentation {
    let mut strokes: Vec<Stroke> = Vec::new();
    let mut gaps = Vec::new();
    let samples = &record.samples;
    let mut i = 0;
    while i < samples.len() {
        let on = samples[i].on_surface;
        let start = i;
        while i < samples.len() && samples[i].on_surface == on {
            i += 1;
        }
        let run = samples[start..i].to_vec();
        if on {
            strokes.push(Stroke {
                samples: run,
                index: strokes.len(),
            });
        } else {
            let position = if start == 0 {
                GapPosition::Leading
            } else if i == samples.len() {
                GapPosition::Trailing
            } else {
                GapPosition::Between
            };
            let duration_ticks = match position {
                GapPosition::Between => samples[i].t - samples[start - 1].t,
                _ => run[run.len() - 1].t - run[0].t,
            };
            gaps.push(InAirGap {
                samples: run,
                position,
                duration_ticks,
            });
        }
    }
    Segmentation { strokes, gaps }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(on: bool, t: i64) -> PenSample {
        PenSample {
            x: t,
            y: 0,
            t,
            on_surface: on,
            azimuth: 0,
            altitude: 0,
            pressure: if on { 10 } else { 0 },
        }
    }

    fn record(pattern: &[u8]) -> HandwritingRecord {
        HandwritingRecord {
            subject_id: "s".into(),
            task: Task::Word,
            label: Label::Td,
            samples: pattern
                .iter()
                .enumerate()
                .map(|(i, &p)| sample(p == 1, i as i64))
                .collect(),
            sample_id: "r".into(),
        }
    }

    #[test]
    fn parses_with_count_header() {
        let raw = b"2\n100 200 10 1 1500 600 512\n110 200 20 1 1500 600 500\n";
        let s = parse_pen_stream(raw, &FormatConfig::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(
            s[0],
            PenSample {
                x: 100,
                y: 200,
                t: 10,
                on_surface: true,
                azimuth: 1500,
                altitude: 600,
                pressure: 512
            }
        );
        assert_eq!(s[1].pressure, 500);
    }

    #[test]
    fn parses_zero_row_without_header() {
        let cfg = FormatConfig {
            has_count_header: false,
            ..Default::default()
        };
        let s = parse_pen_stream(b"0 0 0 0 0 0 0\n", &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert!(!s[0].on_surface);
        assert_eq!(s[0].pressure, 0);
    }

    #[test]
    fn short_row_is_malformed() {
        let cfg = FormatConfig {
            has_count_header: false,
            ..Default::default()
        };
        match parse_pen_stream(b"1 2 3\n", &cfg) {
            Err(Error::MalformedRow { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_and_long_rows_are_malformed() {
        let cfg = FormatConfig {
            has_count_header: false,
            ..Default::default()
        };
        assert!(matches!(
            parse_pen_stream(b"1 2 3 1 0 0 x\n", &cfg),
            Err(Error::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_pen_stream(b"0 0 0 1 0 0 0\n1 2 3 1 0 0 0 9\n", &cfg),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn count_mismatch_and_empty() {
        let cfg = FormatConfig::default();
        assert!(matches!(
            parse_pen_stream(b"3\n0 0 0 1 0 0 0\n", &cfg),
            Err(Error::CountMismatch {
                declared: 3,
                found: 1
            })
        ));
        assert!(matches!(parse_pen_stream(b"", &cfg), Err(Error::EmptyStream)));
        assert!(matches!(parse_pen_stream(b"0\n", &cfg), Err(Error::EmptyStream)));
    }

    #[test]
    fn decreasing_time_rejected_equal_allowed() {
        let cfg = FormatConfig {
            has_count_header: false,
            ..Default::default()
        };
        assert!(parse_pen_stream(b"0 0 5 1 0 0 0\n1 0 5 1 0 0 0\n", &cfg).is_ok());
        assert!(matches!(
            parse_pen_stream(b"0 0 5 1 0 0 0\n1 0 4 1 0 0 0\n", &cfg),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn device_ranges_enforced() {
        let cfg = FormatConfig {
            has_count_header: false,
            azimuth_range: Some((0, 3600)),
            altitude_range: Some((0, 900)),
        };
        assert!(parse_pen_stream(b"0 0 0 1 3600 900 1\n", &cfg).is_ok());
        assert!(parse_pen_stream(b"0 0 0 1 3601 900 1\n", &cfg).is_err());
        assert!(parse_pen_stream(b"0 0 0 1 0 0 -1\n", &cfg).is_err());
    }

    #[test]
    fn segments_runs() {
        let seg = segment_strokes(&record(&[1, 1, 0, 1, 1, 1]));
        let sizes: Vec<_> = seg.strokes.iter().map(|s| s.samples.len()).collect();
        assert_eq!(sizes, vec![2, 3]);
        assert_eq!(seg.gaps.len(), 1);
        assert_eq!(seg.gaps[0].position, GapPosition::Between);
        assert_eq!(seg.gaps[0].duration_ticks, 2);

        let seg = segment_strokes(&record(&[1, 1, 1]));
        assert_eq!(seg.strokes.len(), 1);
        assert!(seg.gaps.is_empty());
        assert_eq!(seg.pen_lifts(), 0);

        let seg = segment_strokes(&record(&[0, 1, 0, 1, 0]));
        let sizes: Vec<_> = seg.strokes.iter().map(|s| s.samples.len()).collect();
        assert_eq!(sizes, vec![1, 1]);
        assert_eq!(seg.pen_lifts(), 1);
        let between = seg
            .gaps
            .iter()
            .filter(|g| g.position == GapPosition::Between)
            .count();
        assert_eq!(between, 1);
        assert_eq!(seg.gaps.len(), 3);
    }

    #[test]
    fn record_validation() {
        let mut r = record(&[0, 0]);
        assert!(matches!(r.validate(), Err(Error::RecordRejected(_))));
        r.samples.clear();
        assert!(matches!(r.validate(), Err(Error::EmptyStream)));
    }

    #[test]
    fn label_and_task_tokens() {
        assert_eq!("DYG".parse::<Label>().unwrap(), Label::Dyg);
        assert!(matches!("XX".parse::<Label>(), Err(Error::InvalidLabel(_))));
        assert_eq!("difficult_word".parse::<Task>().unwrap(), Task::DifficultWord);
        assert_eq!(
            "sentence".parse::<Task>().unwrap(),
            Task::Other("sentence".into())
        );
    }
}
