use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::constants::MAX_STROKE_S;

const TIME_SLACK_S: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrokeSource {
    Hand,
    Automatic,
}

impl fmt::Display for StrokeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrokeSource::Hand => "hand",
            StrokeSource::Automatic => "automatic",
        })
    }
}

impl FromStr for StrokeSource {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hand" => Ok(StrokeSource::Hand),
            "automatic" => Ok(StrokeSource::Automatic),
            other => Err(CorpusError::Source(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecord {
    pub stroke_id: String,
    pub clip_id: String,
    pub dataset_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub source: StrokeSource,
}

impl StrokeRecord {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// What the label validator needs to know about a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipInfo {
    pub dataset_id: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedStroke {
    pub stroke_id: String,
    pub reason: String,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    stroke_id: String,
    clip_id: String,
    start_s: f64,
    end_s: f64,
    source: String,
}

fn parse_rows(text: &str, name: &str) -> Result<Vec<LabelRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize::<LabelRow>()
        .map(|r| {
            r.map_err(|e| CorpusError::Csv {
                file: name.to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

fn validate(row: LabelRow, clips: &BTreeMap<String, ClipInfo>) -> Result<StrokeRecord, CorpusError> {
    let clip = clips.get(&row.clip_id).ok_or_else(|| CorpusError::UnknownClip {
        stroke: row.stroke_id.clone(),
        clip: row.clip_id.clone(),
    })?;
    let source: StrokeSource = row.source.parse()?;
    if !(row.start_s.is_finite() && row.end_s.is_finite() && row.start_s < row.end_s) {
        return Err(CorpusError::EmptyInterval {
            stroke: row.stroke_id,
            start_s: row.start_s,
            end_s: row.end_s,
        });
    }
    if row.start_s < 0.0 || row.end_s > clip.duration_s + TIME_SLACK_S {
        return Err(CorpusError::OutOfBounds {
            stroke: row.stroke_id,
            clip: row.clip_id,
            start_s: row.start_s,
            end_s: row.end_s,
            duration_s: clip.duration_s,
        });
    }
    if row.end_s - row.start_s > MAX_STROKE_S + TIME_SLACK_S {
        return Err(CorpusError::ExceedsCap {
            duration_s: row.end_s - row.start_s,
            stroke: row.stroke_id,
        });
    }
    Ok(StrokeRecord {
        stroke_id: row.stroke_id,
        clip_id: row.clip_id,
        dataset_id: clip.dataset_id.clone(),
        start_s: row.start_s,
        end_s: row.end_s,
        source,
    })
}

fn sort(records: &mut [StrokeRecord]) {
    records.sort_by(|a, b| {
        a.clip_id
            .cmp(&b.clip_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.stroke_id.cmp(&b.stroke_id))
    });
}

/// Parses and validates a labels CSV (`stroke_id, clip_id, start_s, end_s,
/// source`). The first invalid row or overlap aborts the load. Output is
/// sorted by clip and start time.
pub fn load_labels(
    text: &str,
    name: &str,
    clips: &BTreeMap<String, ClipInfo>,
) -> Result<Vec<StrokeRecord>, CorpusError> {
    let mut ids = BTreeSet::new();
    let mut records = Vec::new();
    for row in parse_rows(text, name)? {
        if !ids.insert(row.stroke_id.clone()) {
            return Err(CorpusError::DuplicateStroke(row.stroke_id));
        }
        records.push(validate(row, clips)?);
    }
    sort(&mut records);
    for pair in records.windows(2) {
        if pair[0].clip_id == pair[1].clip_id && pair[0].end_s > pair[1].start_s + TIME_SLACK_S {
            return Err(CorpusError::Overlap {
                clip: pair[0].clip_id.clone(),
                first: pair[0].stroke_id.clone(),
                second: pair[1].stroke_id.clone(),
            });
        }
    }
    Ok(records)
}

/// Like [`load_labels`] but drops invalid rows and reports them. Of two
/// overlapping strokes the later-starting one is dropped.
pub fn load_labels_lenient(
    text: &str,
    name: &str,
    clips: &BTreeMap<String, ClipInfo>,
) -> Result<(Vec<StrokeRecord>, Vec<RejectedStroke>), CorpusError> {
    let mut ids = BTreeSet::new();
    let mut candidates = Vec::new();
    let mut rejected = Vec::new();
    for row in parse_rows(text, name)? {
        if !ids.insert(row.stroke_id.clone()) {
            rejected.push(RejectedStroke {
                reason: CorpusError::DuplicateStroke(row.stroke_id.clone()).to_string(),
                stroke_id: row.stroke_id,
            });
            continue;
        }
        let id = row.stroke_id.clone();
        match validate(row, clips) {
            Ok(r) => candidates.push(r),
            Err(e) => rejected.push(RejectedStroke {
                stroke_id: id,
                reason: e.to_string(),
            }),
        }
    }
    sort(&mut candidates);
    let mut kept: Vec<StrokeRecord> = Vec::with_capacity(candidates.len());
    for r in candidates {
        match kept.last() {
            Some(prev) if prev.clip_id == r.clip_id && prev.end_s > r.start_s + TIME_SLACK_S => {
                rejected.push(RejectedStroke {
                    reason: CorpusError::Overlap {
                        clip: r.clip_id.clone(),
                        first: prev.stroke_id.clone(),
                        second: r.stroke_id.clone(),
                    }
                    .to_string(),
                    stroke_id: r.stroke_id,
                });
            }
            _ => kept.push(r),
        }
    }
    Ok((kept, rejected))
}

/// Labels CSV text for a set of records.
pub fn write_labels(records: &[StrokeRecord]) -> String {
    let mut out = String::from("stroke_id,clip_id,start_s,end_s,source\n");
    for r in records {
        out.push_str(&format!("{},{},{},{},{}\n", r.stroke_id, r.clip_id, r.start_s, r.end_s, r.source));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clips() -> BTreeMap<String, ClipInfo> {
        [("c1", 10.0), ("c2", 6.0)]
            .into_iter()
            .map(|(id, d)| {
                (
                    id.to_string(),
                    ClipInfo {
                        dataset_id: "A".into(),
                        duration_s: d,
                    },
                )
            })
            .collect()
    }

    const HEADER: &str = "stroke_id,clip_id,start_s,end_s,source\n";

    #[test]
    fn single_row() {
        let text = format!("{HEADER}s1,c1,1.0,2.0,hand\n");
        let recs = load_labels(&text, "l.csv", &clips()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].duration(), 1.0);
        assert_eq!(recs[0].dataset_id, "A");
        assert_eq!(recs[0].source, StrokeSource::Hand);
    }

    #[test]
    fn long_stroke_names_cap() {
        let text = format!("{HEADER}s1,c1,0.0,4.0,hand\n");
        let err = load_labels(&text, "l.csv", &clips()).unwrap_err();
        assert!(matches!(err, CorpusError::ExceedsCap { .. }));
        assert!(err.to_string().contains("5.5 s"));
    }

    #[test]
    fn output_is_sorted() {
        let text = format!("{HEADER}s3,c1,5.0,6.0,automatic\ns1,c2,0.5,1.0,hand\ns2,c1,1.0,2.0,hand\n");
        let recs = load_labels(&text, "l.csv", &clips()).unwrap();
        let ids: Vec<&str> = recs.iter().map(|r| r.stroke_id.as_str()).collect();
        assert_eq!(ids, ["s2", "s3", "s1"]);
    }

    #[test]
    fn overlap_names_both_strokes() {
        let text = format!("{HEADER}a,c1,1.0,2.5,hand\nb,c1,2.0,3.0,hand\n");
        match load_labels(&text, "l.csv", &clips()).unwrap_err() {
            CorpusError::Overlap { first, second, .. } => assert_eq!((first.as_str(), second.as_str()), ("a", "b")),
            other => panic!("{other}"),
        }
        let (kept, rejected) = load_labels_lenient(&text, "l.csv", &clips()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(rejected[0].stroke_id, "b");
    }

    #[test]
    fn bounds_and_unknown_clip() {
        let text = format!("{HEADER}a,c2,5.0,6.5,hand\n");
        assert!(matches!(load_labels(&text, "l", &clips()), Err(CorpusError::OutOfBounds { .. })));
        let text = format!("{HEADER}a,zz,1.0,1.5,hand\n");
        assert!(matches!(load_labels(&text, "l", &clips()), Err(CorpusError::UnknownClip { .. })));
        let text = format!("{HEADER}a,c1,2.0,1.5,hand\n");
        assert!(matches!(load_labels(&text, "l", &clips()), Err(CorpusError::EmptyInterval { .. })));
        let text = format!("{HEADER}a,c1,1.0,1.5,robot\n");
        assert!(matches!(load_labels(&text, "l", &clips()), Err(CorpusError::Source(_))));
    }

    #[test]
    fn write_then_load() {
        let text = format!("{HEADER}s1,c1,1.25,2,hand\ns2,c1,3,4.5,automatic\n");
        let recs = load_labels(&text, "l", &clips()).unwrap();
        assert_eq!(load_labels(&write_labels(&recs), "l", &clips()).unwrap(), recs);
    }
}
