//! Gaussian maximum-likelihood identity classifier with rank-refined covariances.
//!
//! Each class is summarized by its sample mean and sample covariance
//! `Q̂ = U Λ Uᵀ` (1/N normalization). Assuming the noiseless covariance has
//! rank `r`, the trailing eigenvalues are replaced by the noise-floor estimate
//!
//! ```text
//! σ̂² = (1 / (n − r)) Σ_{i > r} λ_i = (trace Q̂ − Σ_{i ≤ r} λ_i) / (n − r)
//! ```
//!
//! and a test vector goes to the class minimizing `(x − μ̂)ᵀ Q̂⁻¹ (x − μ̂)`.
//! When `σ̂²` is numerically negligible (below `σ²_th`) the inverse is replaced
//! by a pseudoinverse keeping only eigenvalues above `max(σ²_th, k σ̂²)`.
//!
//! No `n × n` inverse is ever formed: quadratic forms are evaluated from the
//! kept eigenpairs, and when there are fewer samples than pixels the
//! eigenpairs come from the `N × N` Gram matrix of the centered samples.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Precision, Record};
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh_desc, matmul, partial_eigh, syrk, KrylovOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionPolicy {
    pub sigma2_th: f64,
    pub k: f64,
    pub selection: ModeSelection,
}

impl Default for InversionPolicy {
    fn default() -> Self {
        Self {
            sigma2_th: 1e-6,
            k: 5.0,
            selection: ModeSelection::Pooled,
        }
    }
}

/// How a classifier chooses between refined and pseudoinverse inversion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    /// Every class inverts by pseudoinverse when the mean noise floor over the
    /// classifier's classes is below `sigma2_th`; a class whose own floor is
    /// below it does so regardless.
    #[default]
    Pooled,
    /// Each class decides from its own noise floor.
    PerClass,
}

impl InversionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_th > 0.0) || !(self.k >= 1.0) {
            return Err(invalid("inversion policy needs sigma2_th > 0 and k >= 1"));
        }
        Ok(())
    }

    /// `max(σ²_th, k σ̂²)`.
    pub fn refined_threshold(&self, noise_floor: f64) -> f64 {
        self.sigma2_th.max(self.k * noise_floor)
    }

    /// Whether classes with these noise floors must all use the pseudoinverse.
    pub fn forces_pseudoinverse(&self, noise_floors: &[f64]) -> bool {
        match self.selection {
            ModeSelection::PerClass => false,
            ModeSelection::Pooled => {
                !noise_floors.is_empty() && noise_floors.iter().sum::<f64>() / (noise_floors.len() as f64) < self.sigma2_th
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMode {
    Refined,
    Pseudoinverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub mean: Array1<f64>,
    /// Kept eigenvectors as columns (`n × kept`).
    pub vectors: Array2<f64>,
    /// Kept eigenvalues, descending.
    pub values: Array1<f64>,
    pub noise_floor: f64,
    pub rank: usize,
    pub mode: InversionMode,
}

/// `(1 / (n − r)) Σ_{i > r} λ_i` from an explicit (possibly truncated)
/// descending spectrum; eigenvalues not listed are zero.
pub fn noise_floor_from_spectrum(eigenvalues: &[f64], n: usize, r: usize) -> f64 {
    assert!(r < n);
    eigenvalues.iter().skip(r).sum::<f64>() / (n - r) as f64
}

/// Same estimate through the trace identity, needing only the top `r` eigenvalues.
pub fn noise_floor_from_trace(trace: f64, top: &[f64], n: usize, r: usize) -> f64 {
    assert!(r < n && top.len() >= r);
    let head: f64 = top[..r].iter().sum();
    ((trace - head) / (n - r) as f64).max(0.0)
}

/// Spectrum source for one class.
enum Spectrum {
    /// Eigenpairs live in pixel space.
    Covariance(Array2<f64>),
    /// `N × N` Gram matrix of the centered samples, plus the samples for lifting.
    Gram { gram: Array2<f64>, centered: Array2<f64> },
}

impl Spectrum {
    fn dim(&self) -> usize {
        match self {
            Spectrum::Covariance(c) => c.nrows(),
            Spectrum::Gram { gram, .. } => gram.nrows(),
        }
    }

    fn matrix(&self) -> &Array2<f64> {
        match self {
            Spectrum::Covariance(c) => c,
            Spectrum::Gram { gram, .. } => gram,
        }
    }

    /// Eigenvalues plus pixel-space eigenvectors for the leading `k` pairs.
    fn top(&self, k: usize, opts: &KrylovOptions) -> Result<(Array1<f64>, Array2<f64>)> {
        let pairs = partial_eigh(self.matrix(), k, opts)?;
        let values = pairs.values.mapv(|v| v.max(0.0));
        match self {
            Spectrum::Covariance(_) => Ok((values, pairs.vectors)),
            Spectrum::Gram { centered, .. } => {
                // u = Xcᵀ v / sqrt(N λ)
                let n_samples = centered.nrows() as f64;
                let mut lifted = matmul(centered.view(), true, pairs.vectors.view(), false);
                for (mut col, &lambda) in lifted.axis_iter_mut(Axis(1)).zip(values.iter()) {
                    if lambda > 0.0 {
                        col /= (n_samples * lambda).sqrt();
                    } else {
                        col.fill(0.0);
                    }
                }
                Ok((values, lifted))
            }
        }
    }
}

/// Tuning for [`fit_class`]; defaults suit production use.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub krylov: KrylovOptions,
}

/// Fits one class from `samples` (`N × n`, one observation per row), choosing
/// the inversion mode from its own noise floor.
pub fn fit_class(samples: ArrayView2<f64>, rank: usize, policy: &InversionPolicy) -> Result<ClassModel> {
    fit_class_with(samples, rank, policy, &FitOptions::default())
}

pub fn fit_class_with(samples: ArrayView2<f64>, rank: usize, policy: &InversionPolicy, opts: &FitOptions) -> Result<ClassModel> {
    policy.validate()?;
    ClassFit::new(samples, rank, opts)?.model(policy, false)
}

/// Fits several classes in parallel and applies the policy's mode selection
/// across them.
pub fn fit_classes(classes: &[ArrayView2<f64>], rank: usize, policy: &InversionPolicy, opts: &FitOptions) -> Result<Vec<ClassModel>> {
    policy.validate()?;
    let fits = classes
        .par_iter()
        .map(|s| ClassFit::new(*s, rank, opts))
        .collect::<Result<Vec<_>>>()?;
    let floors: Vec<f64> = fits.iter().map(ClassFit::noise_floor).collect();
    let force = policy.forces_pseudoinverse(&floors);
    fits.par_iter().map(|f| f.model(policy, force)).collect()
}

/// Sample moments and leading eigenpairs of one class, before an inversion
/// mode is chosen.
pub struct ClassFit {
    mean: Array1<f64>,
    spectrum: Spectrum,
    values: Array1<f64>,
    vectors: Array2<f64>,
    noise_floor: f64,
    rank: usize,
    krylov: KrylovOptions,
}

impl ClassFit {
    pub fn new(samples: ArrayView2<f64>, rank: usize, opts: &FitOptions) -> Result<Self> {
        let (n_samples, n) = samples.dim();
        if n_samples < 2 {
            return Err(Error::InsufficientData(format!("{n_samples} samples, need at least 2")));
        }
        if rank >= n_samples || rank >= n {
            return Err(invalid(format!(
                "rank {rank} must be below min(N, n) = {}",
                n_samples.min(n)
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples contain non-finite values"));
        }
        let (mean, centered) = center(samples);
        let scale = 1.0 / n_samples as f64;
        let trace = centered.iter().map(|v| v * v).sum::<f64>() * scale;

        let spectrum = if n_samples < n {
            Spectrum::Gram {
                gram: syrk(centered.view(), false, scale),
                centered,
            }
        } else {
            Spectrum::Covariance(syrk(centered.view(), true, scale))
        };
        let (values, vectors) = spectrum.top(rank, &opts.krylov)?;
        let noise_floor = noise_floor_from_trace(trace, values.as_slice().expect("contiguous"), n, rank);
        Ok(Self {
            mean,
            spectrum,
            values,
            vectors,
            noise_floor,
            rank,
            krylov: opts.krylov,
        })
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    /// Refined model, or `None` when the noise floor is below `sigma2_th`.
    pub fn refined(&self, policy: &InversionPolicy) -> Option<ClassModel> {
        (self.noise_floor >= policy.sigma2_th).then(|| ClassModel {
            mean: self.mean.clone(),
            vectors: self.vectors.clone(),
            values: self.values.clone(),
            noise_floor: self.noise_floor,
            rank: self.rank,
            mode: InversionMode::Refined,
        })
    }

    /// Model keeping every eigenpair above `max(σ²_th, k σ̂²)`.
    pub fn pseudoinverse(&self, policy: &InversionPolicy) -> Result<ClassModel> {
        let cutoff = policy.refined_threshold(self.noise_floor);
        let dim = self.spectrum.dim();
        let mut want = (2 * self.rank).max(16).min(dim);
        let (values, vectors) = loop {
            let (vals, vecs) = self.spectrum.top(want, &self.krylov)?;
            let enough = vals.len() == dim || vals.last().is_some_and(|&v| v <= cutoff);
            if enough {
                break (vals, vecs);
            }
            want = (want * 2).min(dim);
        };
        let kept = values.iter().take_while(|&&v| v > cutoff).count();
        Ok(ClassModel {
            mean: self.mean.clone(),
            vectors: vectors.slice(s![.., ..kept]).to_owned(),
            values: values.slice(s![..kept]).to_owned(),
            noise_floor: self.noise_floor,
            rank: self.rank,
            mode: InversionMode::Pseudoinverse,
        })
    }

    /// Refined when allowed and not `force_pseudo`, else pseudoinverse.
    pub fn model(&self, policy: &InversionPolicy, force_pseudo: bool) -> Result<ClassModel> {
        match self.refined(policy) {
            Some(m) if !force_pseudo => Ok(m),
            _ => self.pseudoinverse(policy),
        }
    }
}

impl ClassModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn kept(&self) -> usize {
        self.values.len()
    }

    /// Isotropic model `Q̂ = σ² I` (refined mode with `r = 0`).
    pub fn isotropic(mean: Array1<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(invalid("isotropic variance must be positive"));
        }
        let n = mean.len();
        Ok(Self {
            mean,
            vectors: Array2::zeros((n, 0)),
            values: Array1::zeros(0),
            noise_floor: sigma2,
            rank: 0,
            mode: InversionMode::Refined,
        })
    }

    /// `(x − μ̂)ᵀ Q̂⁻¹ (x − μ̂)` in factored form.
    pub fn mahalanobis(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid(format!("vector has {} entries, model has {}", x.len(), self.dim())));
        }
        let d = &x - &self.mean;
        let c = self.vectors.t().dot(&d);
        self.combine(d.dot(&d), c.view())
    }

    /// Scores for every row of `x` (`m × n`).
    pub fn mahalanobis_rows(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.dim() {
            return Err(invalid("row length does not match model dimension"));
        }
        let d = &x - &self.mean;
        let c = matmul(d.view(), false, self.vectors.view(), false);
        d.axis_iter(Axis(0))
            .zip(c.axis_iter(Axis(0)))
            .map(|(d, c)| self.combine(d.dot(&d), c))
            .collect()
    }

    fn combine(&self, dist_sq: f64, coords: ArrayView1<f64>) -> Result<f64> {
        let head: f64 = coords.iter().zip(self.values.iter()).map(|(c, l)| c * c / l).sum();
        match self.mode {
            InversionMode::Pseudoinverse => Ok(head),
            InversionMode::Refined => {
                if !(self.noise_floor > 0.0) {
                    return Err(Error::Internal("refined model with zero noise floor".into()));
                }
                let projected: f64 = coords.iter().map(|c| c * c).sum();
                Ok(head + (dist_sq - projected).max(0.0) / self.noise_floor)
            }
        }
    }

    /// Dense `Q̂⁻¹` (or pseudoinverse) for cross-checking; `O(n²)` memory.
    pub fn dense_inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let u = &self.vectors;
        let scaled = u / &self.values;
        let mut inv = matmul(scaled.view(), false, u.view(), true);
        if self.mode == InversionMode::Refined {
            let proj = matmul(u.view(), false, u.view(), true);
            inv = inv + (Array2::<f64>::eye(n) - proj) / self.noise_floor;
        }
        inv
    }
}

/// Sample mean and centered rows, computed relative to the first row so that
/// identical samples center to exact zeros.
fn center(samples: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let origin = samples.row(0);
    let mut shifted = &samples - &origin;
    let offset = shifted.mean_axis(Axis(0)).expect("nonempty");
    shifted -= &offset;
    (&origin + &offset, shifted)
}

/// Smallest `r` whose leading eigenvalues explain at least `fraction` of the
/// total variance of `samples`, capped at `min(N, n) − 1`.
pub fn select_rank(samples: ArrayView2<f64>, fraction: f64) -> Result<usize> {
    let (n_samples, n) = samples.dim();
    if n_samples < 2 {
        return Err(Error::InsufficientData("need at least 2 samples to select a rank".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("explained-variance fraction must lie in (0, 1]"));
    }
    let (_, centered) = center(samples);
    let scale = 1.0 / n_samples as f64;
    let gram = if n_samples < n {
        syrk(centered.view(), false, scale)
    } else {
        syrk(centered.view(), true, scale)
    };
    let (vals, _) = eigh_desc(&gram)?;
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let cap = n_samples.min(n) - 1;
    if total <= 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (i, v) in vals.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= fraction * total {
            return Ok((i + 1).min(cap));
        }
    }
    Ok(cap)
}

/// Anything that can label a batch of observations.
pub trait Predictor {
    /// Class labels this predictor can emit, in index order.
    fn labels(&self) -> &[u32];
    fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<u32>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub labels: Vec<u32>,
    pub models: Vec<ClassModel>,
    pub policy: InversionPolicy,
    pub rank: usize,
}

impl Classifier {
    /// Fits one model per class, classes in parallel.
    pub fn fit(classes: &[(u32, ArrayView2<f64>)], rank: usize, policy: InversionPolicy) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid("no classes to fit"));
        }
        let dim = classes[0].1.ncols();
        if classes.iter().any(|(_, s)| s.ncols() != dim) {
            return Err(invalid("classes have different dimensions"));
        }
        let samples: Vec<ArrayView2<f64>> = classes.iter().map(|(_, s)| *s).collect();
        let models = fit_classes(&samples, rank, &policy, &FitOptions::default())?;
        Self::from_models(classes.iter().map(|(l, _)| *l).collect(), models, policy, rank)
    }

    pub fn from_models(labels: Vec<u32>, models: Vec<ClassModel>, policy: InversionPolicy, rank: usize) -> Result<Self> {
        if labels.len() != models.len() || models.is_empty() {
            return Err(invalid("need one model per label"));
        }
        let dim = models[0].dim();
        if models.iter().any(|m| m.dim() != dim) {
            return Err(invalid("class models have different dimensions"));
        }
        Ok(Self {
            labels,
            models,
            policy,
            rank,
        })
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// Predicted label (ties go to the lowest class index) and all scores.
    pub fn classify(&self, x: ArrayView1<f64>) -> Result<(u32, Vec<f64>)> {
        let scores = self
            .models
            .iter()
            .map(|m| m.mahalanobis(x))
            .collect::<Result<Vec<_>>>()?;
        Ok((self.labels[argmin(&scores)], scores))
    }

    /// `m × M` score matrix.
    pub fn score_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.models.len()));
        for (j, m) in self.models.iter().enumerate() {
            out.column_mut(j).assign(&m.mahalanobis_rows(x)?);
        }
        Ok(out)
    }

    pub fn to_container(&self, side: usize) -> Result<Container> {
        if side * side != self.dim() {
            return Err(invalid("side does not match classifier dimension"));
        }
        let mut c = Container::new(Precision::F64, side, side, 1);
        let mut head = vec![0.0; self.dim()];
        head[0] = match self.policy.selection {
            ModeSelection::Pooled => 0.0,
            ModeSelection::PerClass => 1.0,
        };
        c.push(Record {
            label: 0,
            pixels: head,
            meta: [KIND_POLICY, self.policy.sigma2_th, self.policy.k, self.rank as f64],
        })?;
        for (label, m) in self.labels.iter().zip(&self.models) {
            let mode = match m.mode {
                InversionMode::Refined => 0.0,
                InversionMode::Pseudoinverse => 1.0,
            };
            c.push(Record {
                label: *label,
                pixels: m.mean.to_vec(),
                meta: [KIND_MEAN, m.noise_floor, mode, m.kept() as f64],
            })?;
            for (i, (col, &lambda)) in m.vectors.axis_iter(Axis(1)).zip(m.values.iter()).enumerate() {
                c.push(Record {
                    label: *label,
                    pixels: col.to_vec(),
                    meta: [KIND_EIGEN, lambda, i as f64, 0.0],
                })?;
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let bad = |why: &str| crate::error::format_err("classifier", why.to_string());
        let records = &c.records;
        let head = records.first().ok_or_else(|| bad("empty container"))?;
        if head.meta[0] != KIND_POLICY {
            return Err(bad("first record must carry the policy"));
        }
        let selection = match head.pixels.first() {
            Some(&v) if v == 0.0 => ModeSelection::Pooled,
            Some(&v) if v == 1.0 => ModeSelection::PerClass,
            _ => return Err(bad("unknown mode selection")),
        };
        let policy = InversionPolicy {
            sigma2_th: head.meta[1],
            k: head.meta[2],
            selection,
        };
        policy.validate()?;
        let rank = as_count(head.meta[3]).ok_or_else(|| bad("bad rank"))?;
        let n = c.record_len();
        let mut labels = Vec::new();
        let mut models = Vec::new();
        let mut pos = 1;
        while pos < records.len() {
            let rec = &records[pos];
            pos += 1;
            if rec.meta[0] != KIND_MEAN {
                return Err(bad("expected a class mean record"));
            }
            let kept = as_count(rec.meta[3]).ok_or_else(|| bad("bad eigenpair count"))?;
            if kept > n || kept > records.len() - pos {
                return Err(bad("eigenpair count exceeds the records present"));
            }
            let mode = match rec.meta[2] {
                m if m == 0.0 => InversionMode::Refined,
                m if m == 1.0 => InversionMode::Pseudoinverse,
                _ => return Err(bad("unknown inversion mode")),
            };
            let mut vectors = Array2::zeros((n, kept));
            let mut values = Array1::zeros(kept);
            for (i, e) in records[pos..pos + kept].iter().enumerate() {
                if e.meta[0] != KIND_EIGEN || e.label != rec.label || as_count(e.meta[2]) != Some(i) {
                    return Err(bad("eigenpair record out of order"));
                }
                if !(e.meta[1] > 0.0) {
                    return Err(bad("kept eigenvalues must be positive"));
                }
                values[i] = e.meta[1];
                vectors.column_mut(i).assign(&ArrayView1::from(&e.pixels));
            }
            pos += kept;
            if mode == InversionMode::Refined && !(rec.meta[1] > 0.0) {
                return Err(bad("refined model needs a positive noise floor"));
            }
            if rec.pixels.iter().any(|v| !v.is_finite()) {
                return Err(bad("class mean must be finite"));
            }
            labels.push(rec.label);
            models.push(ClassModel {
                mean: Array1::from(rec.pixels.clone()),
                vectors,
                values,
                noise_floor: rec.meta[1],
                rank,
                mode,
            });
        }
        Self::from_models(labels, models, policy, rank)
    }
}

const KIND_POLICY: f64 = 2.0;
const KIND_MEAN: f64 = 0.0;
const KIND_EIGEN: f64 = 1.0;

fn as_count(v: f64) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v < 1e9).then_some(v as usize)
}

/// Index of the first minimum; NaN scores never win.
pub fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

impl Predictor for Classifier {
    fn labels(&self) -> &[u32] {
        &self.labels
    }

    fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<u32>> {
        if x.ncols() != self.dim() {
            return Err(invalid("row length does not match classifier dimension"));
        }
        let scores = self.score_rows(x)?;
        Ok(scores
            .axis_iter(Axis(0))
            .map(|row| self.labels[argmin(row.as_slice().expect("row-major"))])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub labels: Vec<u32>,
    /// `confusion[[true, predicted]]` counts, indexed like `labels`.
    pub confusion: Array2<u64>,
}

impl Evaluation {
    /// Row-stochastic confusion matrix (empty rows stay zero).
    pub fn normalized(&self) -> Array2<f64> {
        let mut out = self.confusion.mapv(|v| v as f64);
        for mut row in out.axis_iter_mut(Axis(0)) {
            let total = row.sum();
            if total > 0.0 {
                row /= total;
            }
        }
        out
    }

    pub fn write_confusion_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.labels.iter().map(|l| l.to_string()));
        w.write_record(&header)?;
        for (i, l) in self.labels.iter().enumerate() {
            let mut row = vec![l.to_string()];
            row.extend(self.confusion.row(i).iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accuracy and confusion of `predictor` on labeled rows.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, x: ArrayView2<f64>, truth: &[Option<u32>]) -> Result<Evaluation> {
    if x.nrows() == 0 || x.nrows() != truth.len() {
        return Err(invalid("test set must be nonempty with one label per row"));
    }
    let truth: Vec<u32> = truth
        .iter()
        .map(|t| t.ok_or_else(|| invalid("test observation without a label")))
        .collect::<Result<_>>()?;
    let labels = predictor.labels().to_vec();
    let index = |l: u32| labels.iter().position(|&c| c == l);
    let predicted = predictor.predict_rows(x)?;
    let mut confusion = Array2::zeros((labels.len(), labels.len()));
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(&predicted) {
        let ti = index(t).ok_or_else(|| invalid(format!("label {t} unknown to the classifier")))?;
        let pi = index(p).ok_or_else(|| Error::Internal(format!("predictor emitted unknown label {p}")))?;
        confusion[[ti, pi]] += 1;
        correct += usize::from(t == p);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        labels,
        confusion,
    })
}
