//! Result rows and their CSV form.
//!
//! Header: `experiment,subset_or_pair,snr_db,trial,accuracy,d_ij,wall_ms`.
//! Per-trial rows carry the trial index; each `(experiment, subset_or_pair,
//! snr_db)` group is followed by a `mean` and an `sd` row. Non-applicable
//! fields are left empty.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};

pub const HEADER: [&str; 7] = ["experiment", "subset_or_pair", "snr_db", "trial", "accuracy", "d_ij", "wall_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrialKey {
    Trial(u32),
    Mean,
    Sd,
}

impl TrialKey {
    fn encode(self) -> String {
        match self {
            TrialKey::Trial(t) => t.to_string(),
            TrialKey::Mean => "mean".into(),
            TrialKey::Sd => "sd".into(),
        }
    }

    fn decode(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(TrialKey::Mean),
            "sd" => Some(TrialKey::Sd),
            other => other.parse().ok().map(TrialKey::Trial),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    /// Subset size (`"16"`) or pair (`"3-7"`).
    pub subset_or_pair: String,
    pub snr_db: f64,
    pub trial: TrialKey,
    pub accuracy: f64,
    pub d_ij: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    experiment: String,
    subset_or_pair: String,
    snr_db: f64,
    trial: String,
    accuracy: f64,
    d_ij: Option<f64>,
    wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultTable {
    /// Builds a table from per-trial rows, appending mean/sd rows per group.
    /// Groups keep first-appearance order; trials inside a group are sorted.
    pub fn with_aggregates(trial_rows: Vec<ResultRow>) -> Self {
        let mut order: Vec<(String, String, u64)> = Vec::new();
        let mut groups: BTreeMap<(String, String, u64), Vec<ResultRow>> = BTreeMap::new();
        for row in trial_rows {
            let key = (row.experiment.clone(), row.subset_or_pair.clone(), row.snr_db.to_bits());
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(row);
        }
        let mut rows = Vec::new();
        for key in order {
            let mut group = groups.remove(&key).expect("key recorded");
            group.sort_by_key(|r| r.trial);
            let acc: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
            let (mean, sd) = mean_sd(&acc);
            let template = group[0].clone();
            let wall = template.wall_ms.map(|_| group.iter().filter_map(|r| r.wall_ms).sum::<f64>() / group.len() as f64);
            rows.extend(group);
            rows.push(ResultRow {
                trial: TrialKey::Mean,
                accuracy: mean,
                wall_ms: wall,
                ..template.clone()
            });
            rows.push(ResultRow {
                trial: TrialKey::Sd,
                accuracy: sd,
                wall_ms: None,
                ..template
            });
        }
        Self { rows }
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.trial == TrialKey::Mean)
    }

    /// Trial-averaged accuracy curve for one subset or pair, ordered by SNR.
    pub fn curve(&self, experiment: &str, subset_or_pair: &str) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .aggregates()
            .filter(|r| r.experiment == experiment && r.subset_or_pair == subset_or_pair)
            .map(|r| (r.snr_db, r.accuracy))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    /// Distinct `(experiment, subset_or_pair)` series in table order.
    pub fn series(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.rows {
            let key = (r.experiment.clone(), r.subset_or_pair.clone());
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.serialize(CsvRow {
                experiment: r.experiment.clone(),
                subset_or_pair: r.subset_or_pair.clone(),
                snr_db: r.snr_db,
                trial: r.trial.encode(),
                accuracy: r.accuracy,
                d_ij: r.d_ij,
                wall_ms: r.wall_ms,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Parses and validates a results CSV.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != HEADER {
            return Err(format_err("results csv", format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.deserialize() {
            let rec: CsvRow = rec?;
            let trial = TrialKey::decode(&rec.trial)
                .ok_or_else(|| format_err("results csv", format!("bad trial field {:?}", rec.trial)))?;
            if !(0.0..=1.0).contains(&rec.accuracy) {
                return Err(format_err("results csv", format!("accuracy {} outside [0, 1]", rec.accuracy)));
            }
            if !rec.snr_db.is_finite() || rec.d_ij.is_some_and(|d| !(d >= 0.0)) {
                return Err(format_err("results csv", "non-finite snr or negative distance"));
            }
            rows.push(ResultRow {
                experiment: rec.experiment,
                subset_or_pair: rec.subset_or_pair,
                snr_db: rec.snr_db,
                trial,
                accuracy: rec.accuracy,
                d_ij: rec.d_ij,
                wall_ms: rec.wall_ms,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(subset: &str, snr: f64, trial: u32, acc: f64) -> ResultRow {
        ResultRow {
            experiment: "sweep".into(),
            subset_or_pair: subset.into(),
            snr_db: snr,
            trial: TrialKey::Trial(trial),
            accuracy: acc,
            d_ij: None,
            wall_ms: None,
        }
    }

    #[test]
    fn aggregates_follow_trials() {
        let t = ResultTable::with_aggregates(vec![
            row("2", 0.0, 1, 0.75),
            row("2", 0.0, 0, 0.25),
            row("4", 0.0, 0, 0.5),
        ]);
        let trials: Vec<_> = t.rows.iter().map(|r| r.trial).collect();
        use TrialKey::*;
        assert_eq!(trials, vec![Trial(0), Trial(1), Mean, Sd, Trial(0), Mean, Sd]);
        assert_eq!(t.rows[2].accuracy, 0.5);
        assert!((t.rows[3].accuracy - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.rows[6].accuracy, 0.0);
        assert_eq!(t.curve("sweep", "2"), vec![(0.0, 0.5)]);
    }

    #[test]
    fn csv_roundtrip_and_schema() {
        let mut r = row("3-7", -35.0, 0, 0.5);
        r.experiment = "pairs".into();
        r.d_ij = Some(0.125);
        let t = ResultTable::with_aggregates(vec![r]);
        let text = t.to_csv_string();
        assert!(text.starts_with("experiment,subset_or_pair,snr_db,trial,accuracy,d_ij,wall_ms\npairs,"));
        assert!(text.contains("pairs,3-7,-35.0,0,0.5,0.125,\n"));
        assert_eq!(ResultTable::read_csv(text.as_bytes()).unwrap(), t);
        let bad = text.replace(",0.5,0.125", ",1.5,0.125");
        assert!(ResultTable::read_csv(bad.as_bytes()).is_err());
        assert!(ResultTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
