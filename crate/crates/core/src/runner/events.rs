//! Append-only, line-delimited JSON metric events.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Task name used for cross-task aggregate values.
pub const AGGREGATE: &str = "aggregate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEvent {
    /// Seconds since the Unix epoch. Not part of run reproducibility.
    pub wall_time: f64,
    pub phase: String,
    pub step: u64,
    pub task: String,
    pub metric: String,
    pub value: f64,
}

impl MetricEvent {
    pub fn new(phase: &str, step: u64, task: &str, metric: &str, value: f64) -> Self {
        let wall_time = chrono::Utc::now().timestamp_micros() as f64 / 1e6;
        MetricEvent { wall_time, phase: phase.into(), step, task: task.into(), metric: metric.into(), value }
    }

    /// The event with its wall time cleared.
    pub fn timeless(&self) -> Self {
        MetricEvent { wall_time: 0.0, ..self.clone() }
    }
}

/// Single appender for a run's event file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    count: u64,
}

impl EventLog {
    /// Opens or creates the log, counting the readable events already in it.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let count = if path.exists() { read_events(path)?.len() as u64 } else { 0 };
        Ok(EventLog { path: path.to_path_buf(), count })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Appends `events` sorted by task then metric, so events sharing a
    /// phase and step are ordered.
    pub fn emit(&mut self, events: &mut [MetricEvent]) -> std::io::Result<()> {
        events.sort_by(|a, b| a.task.cmp(&b.task).then_with(|| a.metric.cmp(&b.metric)));
        let mut text = String::new();
        for e in events.iter() {
            text.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            text.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(text.as_bytes())?;
        f.sync_data()?;
        self.count += events.len() as u64;
        Ok(())
    }

    /// Keeps the first `n` events, dropping anything written after them.
    pub fn truncate_to(&mut self, n: u64) -> std::io::Result<()> {
        let events = if self.path.exists() { read_events(&self.path)? } else { Vec::new() };
        if events.len() as u64 == n && self.path.exists() && std::fs::read(&self.path)?.ends_with(b"\n") {
            self.count = n;
            return Ok(());
        }
        let mut text = String::new();
        for e in events.iter().take(n as usize) {
            text.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            text.push('\n');
        }
        crate::codec::write_atomic(&self.path, text.as_bytes())?;
        self.count = n.min(events.len() as u64);
        Ok(())
    }
}

/// Events in write order. An unparseable final line, as left by a crash
/// mid-write, is skipped with a warning; corruption elsewhere is an error.
pub fn read_events(path: &Path) -> std::io::Result<Vec<MetricEvent>> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            Err(err) if i + 1 == lines.len() => {
                log::warn!("skipping truncated final event in {}: {err}", path.display());
            }
            Err(err) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {err}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_three_read_three() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::open(&path).unwrap();
        let mut batch = vec![
            MetricEvent::new("intermediate", 10, "b", "accuracy", 0.5),
            MetricEvent::new("intermediate", 10, AGGREGATE, "primary_mean", 0.5),
        ];
        log.emit(&mut batch).unwrap();
        log.emit(&mut [MetricEvent::new("intermediate", 20, "b", "accuracy", 0.75)]).unwrap();
        let read = read_events(&path).unwrap();
        assert_eq!(read.len(), 3);
        assert_eq!(read[0].task, AGGREGATE);
        assert_eq!(read[2].value, 0.75);
        assert_eq!(EventLog::open(&path).unwrap().count(), 3);
    }

    #[test]
    fn truncated_final_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = EventLog::open(&path).unwrap();
        for step in 0..3 {
            log.emit(&mut [MetricEvent::new("p", step, "t", "m", 1.0)]).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 10]).unwrap();
        let read = read_events(&path).unwrap();
        assert_eq!(read.iter().map(|e| e.step).collect::<Vec<_>>(), vec![0, 1]);

        let mut log = EventLog::open(&path).unwrap();
        log.truncate_to(1).unwrap();
        assert_eq!(read_events(&path).unwrap().len(), 1);
    }
}
