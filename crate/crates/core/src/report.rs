//! Run reports, written as newline-delimited records like the datasets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::records::{write_records, RecordError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub command: String,
    pub metric: String,
    pub value: Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    command: String,
    lines: Vec<ReportLine>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            lines: Vec::new(),
        }
    }

    pub fn push(&mut self, metric: impl Into<String>, value: impl Into<Value>) {
        self.lines.push(ReportLine {
            command: self.command.clone(),
            metric: metric.into(),
            value: value.into(),
        });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.push("warning", message.into());
    }

    pub fn lines(&self) -> &[ReportLine] {
        &self.lines
    }

    pub fn get(&self, metric: &str) -> Option<&Value> {
        self.lines
            .iter()
            .find(|l| l.metric == metric)
            .map(|l| &l.value)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(|l| l.metric == "warning")
            .filter_map(|l| l.value.as_str())
    }

    pub fn extend(&mut self, other: Report) {
        self.lines.extend(other.lines);
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        write_records(path, &self.lines)
    }
}
