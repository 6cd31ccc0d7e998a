//! Per-prediction analyses: identity separation, umbra coverage, and pose
//! and lighting statistics split by classification outcome.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, ArrayView1};

use super::sweep::Cell;
use super::table::mean_sd;
use crate::dataset::{mean_signal_power, LabeledDataset};
use crate::error::{invalid, Result};
use crate::mlclass::{Classifier, Predictor};
use crate::transport::umbra_fraction;

/// `‖a − b‖₂`.
pub fn pair_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    assert_eq!(a.len(), b.len(), "mean vectors differ in length");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean of each class's noiseless training rows.
pub fn class_means(dataset: &LabeledDataset) -> Result<BTreeMap<u32, Array1<f64>>> {
    let mut out = BTreeMap::new();
    for label in dataset.classes() {
        let rows = dataset.train_of(label);
        if rows.is_empty() {
            return Err(invalid(format!("class {label} has no training rows")));
        }
        let mean = dataset.rows(&rows).mean_axis(ndarray::Axis(0)).expect("nonempty");
        out.insert(label, mean);
    }
    Ok(out)
}

/// Pearson correlation in one pass (co-moment updates); `None` when either
/// variable is constant or fewer than two points are given.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (k + 1) as f64;
        let dx = a - mx;
        let dy = b - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    (x.len() >= 2 && sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Test-set predictions at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub rows: Vec<usize>,
    pub truth: Vec<u32>,
    pub predicted: Vec<u32>,
    /// Noise the classified images were drawn with.
    pub cell: Cell,
}

impl Predictions {
    pub fn correct(&self) -> Vec<bool> {
        self.truth.iter().zip(&self.predicted).map(|(t, p)| t == p).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let c = self.correct();
        c.iter().filter(|&&b| b).count() as f64 / c.len() as f64
    }
}

/// Classifies the noisy test rows of the classifier's classes at `snr_db`.
pub fn predict_test(dataset: &LabeledDataset, classifier: &Classifier, snr_db: f64, trial: u32, seed: u64) -> Result<Predictions> {
    let cell = Cell::new(mean_signal_power(dataset)?, snr_db, trial, seed)?;
    let rows: Vec<usize> = dataset
        .test
        .iter()
        .copied()
        .filter(|&i| classifier.labels.contains(&dataset.labels[i]))
        .collect();
    if rows.is_empty() {
        return Err(invalid("no labeled test rows for the classifier's classes"));
    }
    let x = cell.noisy(dataset, &rows);
    let predicted = classifier.predict_rows(x.view())?;
    Ok(Predictions {
        truth: rows.iter().map(|&i| dataset.labels[i]).collect(),
        rows,
        predicted,
        cell,
    })
}

/// Summary statistics of one partition; statistics are `None` when empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub partition: &'static str,
    pub count: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

fn partition_stats(partition: &'static str, values: &[f64]) -> PartitionStats {
    let (mean, sd) = if values.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_sd(values);
        (Some(m), Some(s))
    };
    PartitionStats {
        partition,
        count: values.len(),
        mean,
        sd,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmbraReport {
    pub threshold: f64,
    /// Correct, incorrect, all.
    pub partitions: [PartitionStats; 3],
}

impl UmbraReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["partition", "count", "mean_umbra", "sd_umbra", "threshold"])?;
        for p in &self.partitions {
            w.write_record([
                p.partition.to_string(),
                p.count.to_string(),
                fmt_opt(p.mean),
                fmt_opt(p.sd),
                self.threshold.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Umbra fraction statistics split by correctness.
pub fn umbra_summary(fractions: &[f64], correct: &[bool], threshold: f64) -> UmbraReport {
    assert_eq!(fractions.len(), correct.len());
    let pick = |want: bool| -> Vec<f64> {
        fractions
            .iter()
            .zip(correct)
            .filter(|(_, &c)| c == want)
            .map(|(&f, _)| f)
            .collect()
    };
    UmbraReport {
        threshold,
        partitions: [
            partition_stats("correct", &pick(true)),
            partition_stats("incorrect", &pick(false)),
            partition_stats("all", fractions),
        ],
    }
}

/// Umbra coverage of correctly vs incorrectly classified test images.
///
/// Without `noisy_sigmas` the fraction is measured on the noiseless shadows
/// with `threshold`; otherwise on the noisy images the classifier saw, with
/// the threshold raised to `noisy_sigmas · σ`.
pub fn run_umbra_report(
    dataset: &LabeledDataset,
    predictions: &Predictions,
    threshold: f64,
    noisy_sigmas: Option<f64>,
) -> Result<UmbraReport> {
    if !(threshold >= 0.0) || noisy_sigmas.is_some_and(|k| !(k >= 0.0)) {
        return Err(invalid("umbra thresholds must be >= 0"));
    }
    let (images, threshold) = match noisy_sigmas {
        None => (dataset.rows(&predictions.rows), threshold),
        Some(k) => (
            predictions.cell.noisy(dataset, &predictions.rows),
            k * predictions.cell.noise.sigma2.sqrt(),
        ),
    };
    let fractions: Vec<f64> = images
        .rows()
        .into_iter()
        .map(|r| umbra_fraction(r.as_slice().expect("standard layout"), threshold))
        .collect();
    Ok(umbra_summary(&fractions, &predictions.correct(), threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseStats {
    pub partition: &'static str,
    pub count: usize,
    pub mean_elevation_deg: Option<f64>,
    pub mean_azimuth_deg: Option<f64>,
    /// Pearson correlation between light position along its segment and azimuth.
    pub light_azimuth_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseReport {
    /// Correct, incorrect, all.
    pub partitions: [PoseStats; 3],
}

impl PoseReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["partition", "count", "mean_elevation_deg", "mean_azimuth_deg", "pearson_light_azimuth"])?;
        for p in &self.partitions {
            w.write_record([
                p.partition.to_string(),
                p.count.to_string(),
                fmt_opt(p.mean_elevation_deg),
                fmt_opt(p.mean_azimuth_deg),
                fmt_opt(p.light_azimuth_corr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pose_stats(partition: &'static str, meta: &[crate::dataset::ObservationMeta]) -> PoseStats {
    let mean = |f: fn(&crate::dataset::ObservationMeta) -> f64| {
        (!meta.is_empty()).then(|| meta.iter().map(f).sum::<f64>() / meta.len() as f64)
    };
    let light: Vec<f64> = meta.iter().map(|m| m.light_coef).collect();
    let azimuth: Vec<f64> = meta.iter().map(|m| m.azimuth_deg).collect();
    PoseStats {
        partition,
        count: meta.len(),
        mean_elevation_deg: mean(|m| m.elevation_deg),
        mean_azimuth_deg: mean(|m| m.azimuth_deg),
        light_azimuth_corr: pearson(&light, &azimuth),
    }
}

/// Pose and lighting statistics of correctly vs incorrectly classified test images.
pub fn run_pose_report(dataset: &LabeledDataset, predictions: &Predictions) -> Result<PoseReport> {
    if dataset.meta.len() != dataset.len() {
        return Err(invalid("dataset lacks render metadata"));
    }
    let correct = predictions.correct();
    let split = |want: Option<bool>| -> Vec<crate::dataset::ObservationMeta> {
        predictions
            .rows
            .iter()
            .zip(&correct)
            .filter(|(_, &c)| want.is_none_or(|w| w == c))
            .map(|(&i, _)| dataset.meta[i])
            .collect()
    };
    Ok(PoseReport {
        partitions: [
            pose_stats("correct", &split(Some(true))),
            pose_stats("incorrect", &split(Some(false))),
            pose_stats("all", &split(None)),
        ],
    })
}
