//! Short-term evaluation report: an aligned text table and a CSV that
//! parses back into the same report.

use std::fmt::Write as _;

use qmotion::losses::SHORT_TERM_MS;
use qmotion::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub action: String,
    /// One mean angle error per horizon.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub horizons_ms: Vec<usize>,
    pub rows: Vec<ReportRow>,
    /// Echo of the settings that produced the report.
    pub config: Vec<(String, String)>,
    pub seed: u64,
    /// Seconds; shown in the table only, never written to the CSV.
    pub wall_clock: Option<f64>,
}

impl BenchReport {
    pub fn new(seed: u64) -> Self {
        Self {
            horizons_ms: SHORT_TERM_MS.to_vec(),
            rows: Vec::new(),
            config: Vec::new(),
            seed,
            wall_clock: None,
        }
    }

    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    pub fn actions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.action.as_str()) {
                out.push(&r.action);
            }
        }
        out
    }

    pub fn get(&self, method: &str, action: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.action == action)
            .map(|r| r.errors.as_slice())
    }

    /// One block per action with a row per method, columns in milliseconds.
    pub fn to_table(&self) -> String {
        let methods = self.methods();
        let w = methods.iter().map(|m| m.len()).max().unwrap_or(0).max(12);
        let mut s = String::new();
        for action in self.actions() {
            let _ = write!(s, "{action:<w$}");
            for h in &self.horizons_ms {
                let _ = write!(s, " {h:>6}");
            }
            s.push('\n');
            for m in &methods {
                if let Some(e) = self.get(m, action) {
                    let _ = write!(s, "{m:<w$}");
                    for v in e {
                        let _ = write!(s, " {v:>6.2}");
                    }
                    s.push('\n');
                }
            }
            s.push('\n');
        }
        let _ = write!(s, "seed {}", self.seed);
        if let Some(t) = self.wall_clock {
            let _ = write!(s, ", {t:.1} s");
        }
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "# seed = {}", self.seed);
        for (k, v) in &self.config {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string(), "action".to_string()];
        header.extend(self.horizons_ms.iter().map(|h| format!("ms{h}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), r.action.clone()];
            rec.extend(r.errors.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        out.push_str(&String::from_utf8(body).expect("csv is utf-8"));
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut report = BenchReport::new(0);
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let Some((k, v)) = line[1..].split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            if k == "seed" {
                report.seed = v.parse().map_err(|_| Error::Config(format!("bad seed `{v}`")))?;
            } else {
                report.config.push((k.to_string(), v.to_string()));
            }
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        report.horizons_ms = header
            .iter()
            .skip(2)
            .map(|h| {
                h.strip_prefix("ms")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad horizon column `{h}`")))
            })
            .collect::<Result<_>>()?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let errors = rec
                .iter()
                .skip(2)
                .map(|v| v.parse().map_err(|_| Error::Config(format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            report.rows.push(ReportRow {
                method: rec[0].to_string(),
                action: rec[1].to_string(),
                errors,
            });
        }
        Ok(report)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_table() {
        let mut r = BenchReport::new(9);
        r.config.push(("sequences".into(), "8".into()));
        r.rows.push(ReportRow {
            method: "zero_velocity".into(),
            action: "walking".into(),
            errors: vec![0.1, 1.0 / 3.0, 0.7, 1e-17],
        });
        r.rows.push(ReportRow {
            method: "model".into(),
            action: "walking".into(),
            errors: vec![0.0, 0.2, 0.3, 0.4],
        });
        let csv = r.to_csv().unwrap();
        let back = BenchReport::from_csv(&csv).unwrap();
        assert_eq!(back, r);
        r.wall_clock = Some(3.0);
        let table = r.to_table();
        assert!(table.contains("walking"));
        assert!(table.contains("    80    160    320    400"));
        assert_eq!(r.to_csv().unwrap(), csv);
    }
}
