use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::EvolutionTrace;

pub const CSV_SCHEMA: u32 = 1;

/// In-memory CSV table with a `# schema=N` first line.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: Vec<String>,
    body: String,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self { columns: columns.iter().map(|c| c.as_ref().to_string()).collect(), body: String::new() }
    }

    /// Appends a row of preformatted cells.
    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        assert_eq!(cells.len(), self.columns.len(), "row width");
        let line: Vec<&str> = cells.iter().map(|c| c.as_ref()).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn numbers(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| num(*v)).collect();
        self.row(&cells);
    }

    pub fn render(&self) -> String {
        format!("# schema={CSV_SCHEMA}\n{}\n{}", self.columns.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// `t, P_total, event` plus one column per watched site group. An event is
/// flagged on the sample nearest to it.
pub fn trace_table(trace: &EvolutionTrace<f64>) -> CsvTable {
    let mut cols = vec!["t".to_string(), "P_total".into(), "event".into()];
    cols.extend(trace.watch.iter().map(|w| format!("P_{}", w.name)));
    let mut flags = vec![String::new(); trace.times.len()];
    for e in &trace.events {
        let i = trace.sample_index(e.time);
        if !flags[i].is_empty() {
            flags[i].push(';');
        }
        flags[i].push_str(&e.label);
    }
    let mut t = CsvTable::new(&cols);
    for (i, time) in trace.times.iter().enumerate() {
        let mut row = vec![num(*time), num(trace.total_probability[i]), flags[i].clone()];
        row.extend(trace.watch.iter().map(|w| num(w.values[i])));
        t.row(&row);
    }
    t
}

/// `t, j, P` for every stored snapshot.
pub fn snapshot_table(trace: &EvolutionTrace<f64>) -> CsvTable {
    let mut t = CsvTable::new(&["t", "j", "P"]);
    let mut line = String::new();
    for s in &trace.snapshots {
        for (label, p) in trace.labels.iter().zip(&s.probabilities) {
            line.clear();
            let _ = write!(line, "{label}");
            t.row(&[num(s.time), line.clone(), num(*p)]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip_numbers() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.numbers(&[0.1, 1.0 / 3.0]);
        let s = t.render();
        assert!(s.starts_with("# schema=1\na,b\n"));
        let row = s.lines().nth(2).unwrap();
        let back: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
    }
}
