//! Line-delimited JSON post records and the ground-truth trend they imply.

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One post. `posting_time` accepts an RFC 3339 string or Unix seconds and
/// is written back as RFC 3339; `user_id` accepts a string or an integer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(deserialize_with = "de_user_id")]
    pub user_id: String,
    #[serde(default)]
    pub user_description: String,
    #[serde(default)]
    pub follower_count: u64,
    #[serde(default)]
    pub following_count: u64,
    #[serde(default)]
    pub tweet_content: String,
    #[serde(serialize_with = "ser_time", deserialize_with = "de_time")]
    pub posting_time: DateTime<Utc>,
    pub opinion_value: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Int(i64),
}

fn de_user_id<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(match RawId::deserialize(d)? {
        RawId::Text(s) => s,
        RawId::Int(i) => i.to_string(),
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTime {
    Text(String),
    Seconds(f64),
}

fn de_time<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
    use serde::de::Error as _;
    match RawTime::deserialize(d)? {
        RawTime::Text(s) => DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| D::Error::custom(format!("bad posting_time {s:?}: {e}"))),
        RawTime::Seconds(x) => {
            if !x.is_finite() {
                return Err(D::Error::custom("posting_time is not finite"));
            }
            let secs = x.floor();
            let nanos = ((x - secs) * 1e9).round().min(999_999_999.0) as u32;
            Utc.timestamp_opt(secs as i64, nanos)
                .single()
                .ok_or_else(|| D::Error::custom(format!("posting_time {x} out of range")))
        }
    }
}

fn ser_time<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

/// Records with their time windows and the per-window mean opinion.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    /// Window index of each record.
    pub windows: Vec<usize>,
    /// Per-window mean opinion, gaps linearly interpolated.
    pub truth: Vec<f64>,
}

/// All posts of one user, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserHistory {
    pub user_id: String,
    pub description: String,
    pub follower_count: u64,
    pub following_count: u64,
    /// `(window, opinion)` pairs.
    pub observations: Vec<(usize, f64)>,
}

impl Dataset {
    /// Buckets records into `t_max` equal-width windows spanning the first to
    /// the last posting time. A zero-length span puts everything in window 0.
    pub fn from_records(records: Vec<DatasetRecord>, t_max: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Precondition("dataset has no records".into()));
        }
        if t_max == 0 {
            return Err(Error::Precondition("t_max must be positive".into()));
        }
        let secs: Vec<f64> = records
            .iter()
            .map(|r| {
                r.posting_time.timestamp() as f64
                    + f64::from(r.posting_time.timestamp_subsec_nanos()) * 1e-9
            })
            .collect();
        let lo = secs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = secs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / t_max as f64;
        let windows: Vec<usize> = secs
            .iter()
            .map(|s| {
                if width > 0.0 {
                    (((s - lo) / width).floor() as usize).min(t_max - 1)
                } else {
                    0
                }
            })
            .collect();
        let mut sum = vec![0.0; t_max];
        let mut count = vec![0usize; t_max];
        for (r, &w) in records.iter().zip(&windows) {
            sum[w] += r.opinion_value;
            count[w] += 1;
        }
        let means: Vec<Option<f64>> = (0..t_max)
            .map(|w| (count[w] > 0).then(|| sum[w] / count[w] as f64))
            .collect();
        Ok(Dataset {
            records,
            windows,
            truth: fill_gaps(&means),
        })
    }

    pub fn t_max(&self) -> usize {
        self.truth.len()
    }

    pub fn users(&self) -> Vec<UserHistory> {
        let mut order: Vec<UserHistory> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (r, &w) in self.records.iter().zip(&self.windows) {
            let slot = *index.entry(r.user_id.clone()).or_insert_with(|| {
                order.push(UserHistory {
                    user_id: r.user_id.clone(),
                    description: r.user_description.clone(),
                    follower_count: r.follower_count,
                    following_count: r.following_count,
                    observations: Vec::new(),
                });
                order.len() - 1
            });
            order[slot].observations.push((w, r.opinion_value));
        }
        order
    }

    /// Opinions of records in window 0.
    pub fn initial_opinions(&self) -> Vec<f64> {
        self.records
            .iter()
            .zip(&self.windows)
            .filter(|(_, w)| **w == 0)
            .map(|(r, _)| r.opinion_value)
            .collect()
    }
}

/// Linear interpolation across missing entries, constant beyond the ends.
fn fill_gaps(values: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    (0..values.len())
        .map(|i| {
            if let Some(v) = values[i] {
                return v;
            }
            let k = known.partition_point(|p| p.0 < i);
            match (k.checked_sub(1).map(|j| known[j]), known.get(k)) {
                (Some((i0, v0)), Some(&(i1, v1))) => {
                    v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
                }
                (Some((_, v0)), None) => v0,
                (None, Some(&(_, v1))) => v1,
                (None, None) => 0.0,
            }
        })
        .collect()
}

fn validate(record: &DatasetRecord) -> std::result::Result<(), String> {
    if record.user_id.trim().is_empty() {
        return Err("user_id is empty".into());
    }
    if !(-1.0..=1.0).contains(&record.opinion_value) {
        return Err(format!(
            "opinion_value {} outside [-1, 1]",
            record.opinion_value
        ));
    }
    Ok(())
}

/// Parses one JSON object per non-blank line.
pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        validate(&record).map_err(parse_err)?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no records".into(),
        });
    }
    Ok(records)
}

pub fn load_dataset(path: &Path, t_max: usize) -> Result<Dataset> {
    Dataset::from_records(read_records(path)?, t_max)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
