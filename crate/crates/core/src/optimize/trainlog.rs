use std::io::Write;

use serde::{Deserialize, Serialize};

use super::camera::OrbitPose;
use crate::error::Result;
use crate::guidance::AdjustmentEvent;

/// Gradient norms per parameter tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TensorNorms {
    pub kd: f64,
    pub orm: f64,
    pub normal: f64,
    pub env: f64,
}

/// One optimizer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Diffusion step of each view in the batch.
    pub t: Vec<usize>,
    pub cotangent_norm: f64,
    pub grad_norms: TensorNorms,
    pub source_prompt: String,
    pub cameras: Vec<OrbitPose>,
    /// Non-finite gradients: the update was skipped.
    pub skipped: bool,
    pub wall_ms: f64,
}

/// Append-only run log; serialized as one JSON record per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Iteration(IterationRecord),
    Adjustment(AdjustmentEvent),
    CaptionFailed { iteration: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Iteration(r) => Some(r),
            _ => None,
        })
    }

    pub fn adjustments(&self) -> impl Iterator<Item = &AdjustmentEvent> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Adjustment(a) => Some(a),
            _ => None,
        })
    }

    /// Writes entries as newline-delimited JSON.
    pub fn write_ndjson(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| crate::error::Error::Config(format!("bad log record: {e}")))?;
        Ok(Self { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip() {
        let mut log = TrainLog::default();
        log.push(LogEntry::Iteration(IterationRecord {
            iteration: 1,
            t: vec![500],
            cotangent_norm: 0.25,
            grad_norms: TensorNorms {
                kd: 1.0,
                ..Default::default()
            },
            source_prompt: "a chair".into(),
            cameras: vec![OrbitPose {
                azimuth: 10.0,
                elevation: 5.0,
                radius: 3.0,
            }],
            skipped: false,
            wall_ms: 1.5,
        }));
        log.push(LogEntry::Adjustment(AdjustmentEvent {
            iteration: 50,
            from: "a chair".into(),
            to: "a red chair".into(),
        }));
        let mut buf = Vec::new();
        log.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("\"type\":\"adjustment\""));
        assert_eq!(TrainLog::from_ndjson(&text).unwrap(), log);
    }
}
