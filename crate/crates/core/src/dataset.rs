//! Labeled shadow datasets, the noise model and SNR calibration.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Precision, Record};
use crate::error::{invalid, Error, Result};
use crate::morphable::{Identity, MorphableModel};
use crate::render::{render, SceneConfig};
use crate::rng::{substream, Domain, Rng};
use crate::transport::{make_rectangle_occluder, make_square_occluder, LightTransport, OccluderMask};

/// Per-sample render metadata, kept for pose/light analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub light_coef: f64,
    /// Index of the render substream within its class.
    pub sample_index: f64,
}

impl ObservationMeta {
    pub fn to_array(self) -> [f64; 4] {
        [self.elevation_deg, self.azimuth_deg, self.light_coef, self.sample_index]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            elevation_deg: a[0],
            azimuth_deg: a[1],
            light_coef: a[2],
            sample_index: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Array1<f64>,
    pub label: Option<u32>,
    pub meta: Option<ObservationMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(invalid(format!("noise variance {sigma2} must be finite and >= 0")));
        }
        Ok(Self { sigma2 })
    }
}

/// `x + z`, `z ~ N(0, σ² I)`; label and metadata are carried over.
pub fn add_noise(observation: &Observation, noise: NoiseModel, rng: &mut Rng) -> Observation {
    let mut out = observation.clone();
    perturb(out.x.view_mut().into_slice().expect("contiguous"), noise.sigma2, rng);
    out
}

fn perturb(x: &mut [f64], sigma2: f64, rng: &mut Rng) {
    if sigma2 == 0.0 {
        return;
    }
    let sigma = sigma2.sqrt();
    for v in x {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Occluder description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OccluderSpec {
    Square {
        canvas: usize,
        diagonal: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    Rectangle {
        canvas: usize,
        width: f64,
        height: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    /// 8-bit PGM or PBM; nonzero pixels are opaque.
    Bitmap { path: String },
}

impl Default for OccluderSpec {
    fn default() -> Self {
        OccluderSpec::Square {
            canvas: 127,
            diagonal: 100.0,
            angle_deg: 0.0,
        }
    }
}

impl OccluderSpec {
    pub fn build(&self) -> Result<OccluderMask> {
        match *self {
            OccluderSpec::Square { canvas, diagonal, angle_deg } => make_square_occluder(canvas, diagonal, angle_deg),
            OccluderSpec::Rectangle {
                canvas,
                width,
                height,
                angle_deg,
            } => make_rectangle_occluder(canvas, width, height, angle_deg),
            OccluderSpec::Bitmap { ref path } => {
                let bytes = std::fs::read(path)?;
                let img = crate::pnm::parse(&bytes)?;
                OccluderMask::from_bitmap(img.height, img.width, img.data.iter().map(|&v| u8::from(v != 0)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub grid: usize,
    pub k_id: usize,
    pub k_exp: usize,
    pub k_tex: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            k_id: 10,
            k_exp: 10,
            k_tex: 10,
        }
    }
}

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub scene: SceneConfig,
    pub occluder: OccluderSpec,
    pub identities: usize,
    pub per_class: usize,
    pub train_fraction: f64,
    /// Side of the shadow image (`n_out = out_side²`).
    pub out_side: usize,
    /// Scale each noiseless shadow to peak 1 before any noise is added.
    pub normalize: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelConfig::default(),
            scene: SceneConfig::default(),
            occluder: OccluderSpec::default(),
            identities: 16,
            per_class: 2000,
            train_fraction: 0.9,
            out_side: 32,
            normalize: false,
        }
    }
}

/// Model, identities and transport built from a [`GenerationConfig`].
#[derive(Debug)]
pub struct Scene {
    pub model: MorphableModel,
    pub identities: Vec<Identity>,
    pub transport: LightTransport,
}

impl GenerationConfig {
    pub fn build_scene(&self) -> Result<Scene> {
        self.scene.validate()?;
        let m = &self.model;
        let model = MorphableModel::procedural(m.grid, m.k_id, m.k_exp, m.k_tex, self.seed)?;
        let identities = model.sample_identities(self.identities, self.seed);
        let transport = LightTransport::new(&self.occluder.build()?, self.scene.face_side, self.out_side)?;
        Ok(Scene {
            model,
            identities,
            transport,
        })
    }

    pub fn generate(&self) -> Result<LabeledDataset> {
        let scene = self.build_scene()?;
        let mut ds = generate_dataset(
            &scene.model,
            &scene.identities,
            &self.scene,
            &scene.transport,
            self.per_class,
            self.train_fraction,
            self.seed,
        )?;
        if self.normalize {
            normalize_rows(&mut ds.signals);
        }
        ds.config = Some(self.clone());
        Ok(ds)
    }
}

/// Divides each row by its maximum; all-zero rows are left alone.
pub fn normalize_rows(signals: &mut Array2<f64>) {
    for mut row in signals.rows_mut() {
        let peak = row.fold(0.0f64, |m, &v| m.max(v));
        if peak > 0.0 {
            row /= peak;
        }
    }
}

/// Noiseless shadows with labels, metadata and a per-class train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// One noiseless shadow per row.
    pub signals: Array2<f64>,
    pub labels: Vec<u32>,
    pub meta: Vec<ObservationMeta>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub side: usize,
    pub seed: u64,
    pub config: Option<GenerationConfig>,
}

fn check_generation_args(identities: &[Identity], per_class: usize, split_fraction: f64) -> Result<()> {
    if identities.is_empty() {
        return Err(invalid("identity list is empty"));
    }
    if per_class < 2 {
        return Err(invalid("need at least 2 samples per class"));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(invalid("split fraction must lie strictly between 0 and 1"));
    }
    let mut labels: Vec<u32> = identities.iter().map(|i| i.label).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != identities.len() {
        return Err(invalid("identity labels must be unique"));
    }
    Ok(())
}

/// Renders `per_class` shadows for each identity with independent
/// expression, pose and light draws, then splits each class.
pub fn generate_dataset(
    model: &MorphableModel,
    identities: &[Identity],
    scene: &SceneConfig,
    transport: &LightTransport,
    per_class: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    check_generation_args(identities, per_class, split_fraction)?;
    scene.validate()?;
    if transport.face_side() != scene.face_side {
        return Err(invalid("transport and scene disagree on face resolution"));
    }
    let n_out = transport.out_len();
    let total = identities.len() * per_class;
    let mut signals = Array2::<f64>::zeros((total, n_out));
    let mut labels = Vec::with_capacity(total);
    let mut meta = Vec::with_capacity(total);

    for (class, identity) in identities.iter().enumerate() {
        let rendered: Vec<(Vec<f64>, ObservationMeta)> = (0..per_class)
            .into_par_iter()
            .map(|k| {
                let mut rng = substream(seed, Domain::Render, &[identity.label as u64, k as u64]);
                let expression = model.sample_expression(scene.expression_scale, &mut rng)?;
                let params = scene.sample_render_params(&mut rng);
                let face = render(model, identity, &expression, &params, scene)?;
                let m = ObservationMeta {
                    elevation_deg: params.elevation_deg,
                    azimuth_deg: params.azimuth_deg,
                    light_coef: params.light_coef,
                    sample_index: k as f64,
                };
                Ok((face.pixels, m))
            })
            .collect::<Result<_>>()?;
        let mut faces = Array2::<f64>::zeros((per_class, transport.source_len()));
        for (k, (pixels, m)) in rendered.into_iter().enumerate() {
            faces.row_mut(k).assign(&ArrayView1::from(&pixels));
            labels.push(identity.label);
            meta.push(m);
        }
        let shadows = transport.apply_rows(faces.view())?;
        signals
            .slice_mut(ndarray::s![class * per_class..(class + 1) * per_class, ..])
            .assign(&shadows);
    }

    let (train, test) = split_indices(&labels, split_fraction, seed);
    Ok(LabeledDataset {
        signals,
        labels,
        meta,
        train,
        test,
        side: transport.out_side(),
        seed,
        config: None,
    })
}

/// Per-class random partition; `round(N · fraction)` of each class goes to
/// training (at least one sample on each side).
pub fn split_indices(labels: &[u32], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n = idx.len();
        let mut rng = substream(seed, Domain::Split, &[class as u64]);
        idx.shuffle(&mut rng);
        let n_train = if n < 2 {
            n
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_out(&self) -> usize {
        self.signals.ncols()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            x: self.signals.row(i).to_owned(),
            label: Some(self.labels[i]),
            meta: Some(self.meta[i]),
        }
    }

    pub fn train_of(&self, label: u32) -> Vec<usize> {
        self.train.iter().copied().filter(|&i| self.labels[i] == label).collect()
    }

    pub fn test_of(&self, label: u32) -> Vec<usize> {
        self.test.iter().copied().filter(|&i| self.labels[i] == label).collect()
    }

    /// Noiseless rows at `indices`.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.signals.select(Axis(0), indices)
    }

    /// Rows at `indices` with fresh noise. Each row's noise comes from a
    /// substream keyed by (seed, stream, trial, row index), so the result is
    /// independent of which other rows are drawn alongside it.
    pub fn noisy_rows(&self, indices: &[usize], noise: NoiseModel, stream: u64, trial: u64, seed: u64) -> Array2<f64> {
        let mut out = self.rows(indices);
        let width = out.ncols().max(1);
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(width)
            .zip(indices.par_iter())
            .for_each(|(row, &i)| {
                let mut rng = substream(seed, Domain::Noise, &[stream, trial, i as u64]);
                perturb(row, noise.sigma2, &mut rng);
            });
        out
    }

    /// Writes the observations as an f32 `SHDW1` container.
    pub fn to_container(&self) -> Container {
        let mut c = Container::new(Precision::F32, self.side, self.side, 1);
        for i in 0..self.len() {
            c.records.push(Record {
                label: self.labels[i],
                pixels: self.signals.row(i).to_vec(),
                meta: self.meta[i].to_array(),
            });
        }
        c
    }

    /// Rebuilds a dataset from a container; the split is recomputed from `config`.
    pub fn from_container(c: &Container, config: &GenerationConfig) -> Result<Self> {
        if c.channels != 1 || c.height != c.width {
            return Err(invalid("dataset container must hold square single-channel images"));
        }
        let n = c.record_len();
        let mut signals = Array2::zeros((c.records.len(), n));
        for (i, r) in c.records.iter().enumerate() {
            if r.pixels.iter().chain(r.meta.iter()).any(|v| !v.is_finite()) {
                return Err(invalid(format!("record {i} contains non-finite values")));
            }
            signals.row_mut(i).assign(&ArrayView1::from(&r.pixels));
        }
        let labels: Vec<u32> = c.records.iter().map(|r| r.label).collect();
        let (train, test) = split_indices(&labels, config.train_fraction, config.seed);
        Ok(Self {
            signals,
            meta: c.records.iter().map(|r| ObservationMeta::from_array(r.meta)).collect(),
            labels,
            train,
            test,
            side: c.height,
            seed: config.seed,
            config: Some(config.clone()),
        })
    }

    /// Saves `dataset.shdw` and the `dataset.toml` config snapshot into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let config = self
            .config
            .as_ref()
            .ok_or_else(|| invalid("dataset has no generation config to snapshot"))?;
        std::fs::create_dir_all(dir)?;
        let file = std::io::BufWriter::new(std::fs::File::create(dir.join("dataset.shdw"))?);
        self.to_container().write_to(file)?;
        let toml = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("dataset.toml"), toml)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("dataset.toml"))?;
        let config: GenerationConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let file = std::io::BufReader::new(std::fs::File::open(dir.join("dataset.shdw"))?);
        Self::from_container(&Container::read_from(file)?, &config)
    }
}

/// Mean per-pixel power of the training shadows.
pub fn mean_signal_power(dataset: &LabeledDataset) -> Result<f64> {
    if dataset.train.is_empty() {
        return Err(invalid("dataset has no training observations"));
    }
    let n = dataset.n_out() as f64;
    let total: f64 = dataset
        .train
        .iter()
        .map(|&i| dataset.signals.row(i).dot(&dataset.signals.row(i)) / n)
        .sum();
    Ok(total / dataset.train.len() as f64)
}

/// `σ² = P̄ / 10^(snr_db / 10)` with `P̄` the mean training-shadow power.
pub fn calibrate_sigma(dataset: &LabeledDataset, snr_db: f64) -> Result<f64> {
    let p = mean_signal_power(dataset)?;
    sigma2_for(p, snr_db)
}

pub fn sigma2_for(mean_power: f64, snr_db: f64) -> Result<f64> {
    if !(mean_power > 0.0) {
        return Err(Error::DegenerateSignal("training shadows have zero power".into()));
    }
    if !snr_db.is_finite() {
        return Err(invalid("SNR must be finite"));
    }
    Ok(mean_power / 10f64.powf(snr_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GenerationConfig {
        GenerationConfig {
            model: ModelConfig {
                grid: 16,
                k_id: 3,
                k_exp: 4,
                k_tex: 5,
            },
            scene: SceneConfig {
                face_side: 16,
                ..SceneConfig::default()
            },
            occluder: OccluderSpec::Square {
                canvas: 47,
                diagonal: 36.0,
                angle_deg: 0.0,
            },
            identities: 3,
            per_class: 10,
            train_fraction: 0.9,
            out_side: 16,
            seed: 5,
            normalize: false,
        }
    }

    fn flat_dataset(value: f64) -> LabeledDataset {
        let labels = vec![1, 1, 2, 2];
        LabeledDataset {
            signals: Array2::from_elem((4, 9), value),
            meta: vec![ObservationMeta::from_array([0.0; 4]); 4],
            train: vec![0, 1, 2, 3],
            test: vec![],
            labels,
            side: 3,
            seed: 0,
            config: None,
        }
    }

    #[test]
    fn split_counts() {
        let ds = tiny_config().generate().unwrap();
        for class in ds.classes() {
            assert_eq!(ds.train_of(class).len(), 9);
            assert_eq!(ds.test_of(class).len(), 1);
        }
        assert!(ds.train.iter().all(|i| !ds.test.contains(i)));
        // 16 identities × 20000 samples, 90/10 split
        let labels: Vec<u32> = (0..16 * 20000).map(|i| (i % 16) as u32 + 1).collect();
        let (tr, te) = split_indices(&labels, 0.9, 3);
        assert_eq!((tr.len(), te.len()), (16 * 18000, 16 * 2000));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tiny_config().generate().unwrap();
        let b = tiny_config().generate().unwrap();
        assert_eq!(a.to_container().to_bytes(), b.to_container().to_bytes());
        assert!(a.signals.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn normalization_scales_each_shadow_to_unit_peak() {
        let raw = tiny_config().generate().unwrap();
        let scaled = GenerationConfig {
            normalize: true,
            ..tiny_config()
        }
        .generate()
        .unwrap();
        for (r, s) in raw.signals.rows().into_iter().zip(scaled.signals.rows()) {
            let peak = r.fold(0.0f64, |m, &v| m.max(v));
            assert!((s.fold(0.0f64, |m, &v| m.max(v)) - 1.0).abs() < 1e-12);
            assert!(r.iter().zip(s).all(|(a, b)| (a / peak - b).abs() < 1e-12));
        }
        let mut zeros = Array2::<f64>::zeros((2, 3));
        normalize_rows(&mut zeros);
        assert!(zeros.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_config().generate().unwrap();
        ds.save(dir.path()).unwrap();
        let back = LabeledDataset::load(dir.path()).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.signals.iter().zip(ds.signals.iter()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        let regen = back.config.as_ref().unwrap().generate().unwrap();
        assert_eq!(regen.signals, ds.signals);
    }

    #[test]
    fn generation_argument_errors() {
        let cfg = tiny_config();
        let scene = cfg.build_scene().unwrap();
        let gen = |ids: &[Identity], n, f| generate_dataset(&scene.model, ids, &cfg.scene, &scene.transport, n, f, 0);
        assert!(gen(&[], 10, 0.9).is_err());
        assert!(gen(&scene.identities, 1, 0.9).is_err());
        assert!(gen(&scene.identities, 10, 1.0).is_err());
        let dup = vec![scene.identities[0].clone(), scene.identities[0].clone()];
        assert!(gen(&dup, 10, 0.5).is_err());
    }

    #[test]
    fn sigma_calibration() {
        let ds = flat_dataset(0.5);
        assert_eq!(mean_signal_power(&ds).unwrap(), 0.25);
        assert_eq!(calibrate_sigma(&ds, 0.0).unwrap(), 0.25);
        assert!((calibrate_sigma(&ds, 10.0).unwrap() - 0.025).abs() < 1e-15);
        assert!((calibrate_sigma(&ds, 20.0).unwrap() - 0.0025).abs() < 1e-15);
        assert!(matches!(calibrate_sigma(&flat_dataset(0.0), 10.0), Err(Error::DegenerateSignal(_))));
        // scaling images by 3 scales σ² by 9
        let s1 = calibrate_sigma(&flat_dataset(0.2), 17.0).unwrap();
        let s3 = calibrate_sigma(&flat_dataset(0.6), 17.0).unwrap();
        assert!((s3 / s1 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn noise_moments() {
        let obs = Observation {
            x: Array1::zeros(1_000_000),
            label: Some(3),
            meta: Some(ObservationMeta::from_array([1.0, 2.0, 3.0, 4.0])),
        };
        let mut rng = substream(9, Domain::Test, &[]);
        assert_eq!(add_noise(&obs, NoiseModel::new(0.0).unwrap(), &mut rng), obs);
        let noisy = add_noise(&obs, NoiseModel::new(0.04).unwrap(), &mut rng);
        assert_eq!(noisy.label, obs.label);
        assert_eq!(noisy.meta, obs.meta);
        let n = noisy.x.len() as f64;
        let mean = noisy.x.sum() / n;
        let var = noisy.x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var / 0.04 - 1.0).abs() < 0.01, "variance {var}");
        let cross: f64 = noisy.x.windows(2).into_iter().map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        assert!((cross / var).abs() < 0.01);
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn noise_is_keyed_per_row() {
        let ds = tiny_config().generate().unwrap();
        let noise = NoiseModel::new(0.01).unwrap();
        let all = ds.noisy_rows(&ds.train, noise, 1, 0, 3);
        let pos = ds.train.len() - 1;
        let one = ds.noisy_rows(&ds.train[pos..], noise, 1, 0, 3);
        assert_eq!(all.row(pos), one.row(0));
        let other_trial = ds.noisy_rows(&ds.train[pos..], noise, 1, 1, 3);
        assert_ne!(one, other_trial);
    }
}
