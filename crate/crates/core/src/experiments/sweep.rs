//! SNR sweeps over identity subsets and identity pairs.
//!
//! Every `(snr, trial)` cell draws fresh noise for the rows it touches from
//! substreams keyed by `(seed, snr, trial, row index)`, so a class model
//! depends only on its own training rows and the cell. The engine therefore
//! estimates each class once per cell and scores every subset or pair from
//! shared score columns, restricting the argmin to the group's classes. A
//! group's inversion modes follow the policy's mode selection over its own
//! classes, so a class may be scored in both modes within one cell.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::config::SweepConfig;
use super::reports::{class_means, pair_distance};
use super::table::{ResultRow, ResultTable, TrialKey};
use crate::dataset::{mean_signal_power, sigma2_for, LabeledDataset, NoiseModel};
use crate::error::{invalid, Result};
use crate::mlclass::{fit_class, fit_classes, select_rank, ClassFit, ClassModel, Classifier, FitOptions, InversionPolicy};

/// A set of classes scored together, e.g. the first 4 identities or a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub experiment: String,
    pub key: String,
    pub labels: Vec<u32>,
    pub d_ij: Option<f64>,
}

/// Noise for one `(snr, trial)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_db: f64,
    pub trial: u32,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Cell {
    pub fn new(power: f64, snr_db: f64, trial: u32, seed: u64) -> Result<Self> {
        Ok(Self {
            snr_db,
            trial,
            noise: NoiseModel::new(sigma2_for(power, snr_db)?)?,
            seed,
        })
    }

    pub fn noisy(&self, dataset: &LabeledDataset, rows: &[usize]) -> Array2<f64> {
        dataset.noisy_rows(rows, self.noise, self.snr_db.to_bits(), u64::from(self.trial), self.seed)
    }

    pub fn fit(&self, dataset: &LabeledDataset, label: u32, rank: usize, policy: &InversionPolicy) -> Result<ClassModel> {
        let x = self.noisy(dataset, &dataset.train_of(label));
        fit_class(x.view(), rank, policy)
    }

    /// Classifier over `labels` trained on this cell's noisy training rows.
    pub fn fit_classifier(&self, dataset: &LabeledDataset, labels: &[u32], rank: usize, policy: InversionPolicy) -> Result<Classifier> {
        let samples: Vec<Array2<f64>> = labels.iter().map(|&l| self.noisy(dataset, &dataset.train_of(l))).collect();
        let views: Vec<_> = samples.iter().map(|s| s.view()).collect();
        let models = fit_classes(&views, rank, &policy, &FitOptions::default())?;
        Classifier::from_models(labels.to_vec(), models, policy, rank)
    }
}

/// Rank from `explained` variance of the first class's noiseless training
/// rows unless `fixed` is given.
pub fn resolve_rank(dataset: &LabeledDataset, fixed: Option<usize>, explained: f64) -> Result<usize> {
    if let Some(r) = fixed {
        return Ok(r);
    }
    let first = *dataset.classes().first().ok_or_else(|| invalid("dataset has no classes"))?;
    select_rank(dataset.rows(&dataset.train_of(first)).view(), explained)
}

/// Scores every group in every cell of the configured grid.
pub fn run_groups(dataset: &LabeledDataset, groups: &[Group], cfg: &SweepConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(invalid("nothing to evaluate"));
    }
    let known = dataset.classes();
    let mut classes: Vec<u32> = Vec::new();
    for g in groups {
        if g.labels.is_empty() {
            return Err(invalid(format!("group {} has no classes", g.key)));
        }
        for l in &g.labels {
            if !known.contains(l) {
                return Err(invalid(format!("class {l} is not in the dataset")));
            }
            if !classes.contains(l) {
                classes.push(*l);
            }
        }
    }
    classes.sort_unstable();
    let column = |l: u32| classes.binary_search(&l).expect("class collected above");

    let power = mean_signal_power(dataset)?;
    let rank = resolve_rank(dataset, cfg.rank, cfg.explained_variance)?;
    let test: Vec<usize> = dataset
        .test
        .iter()
        .copied()
        .filter(|&i| classes.binary_search(&dataset.labels[i]).is_ok())
        .collect();
    if test.is_empty() {
        return Err(invalid("no test rows for the requested classes"));
    }
    let cells: Vec<(f64, u32)> = cfg
        .snr_grid()
        .into_iter()
        .flat_map(|s| (0..cfg.trials as u32).map(move |t| (s, t)))
        .collect();

    let per_cell = cells
        .par_iter()
        .map(|&(snr, trial)| -> Result<Vec<ResultRow>> {
            let start = Instant::now();
            let cell = Cell::new(power, snr, trial, cfg.seed)?;
            let fits = classes
                .par_iter()
                .map(|&l| ClassFit::new(cell.noisy(dataset, &dataset.train_of(l)).view(), rank, &FitOptions::default()))
                .collect::<Result<Vec<_>>>()?;
            let floors: Vec<f64> = fits.iter().map(ClassFit::noise_floor).collect();
            // Mode per (group, class); a class may need both variants across groups.
            let modes: Vec<Vec<bool>> = groups
                .iter()
                .map(|g| {
                    let group_floors: Vec<f64> = g.labels.iter().map(|&l| floors[column(l)]).collect();
                    let force = cfg.policy.forces_pseudoinverse(&group_floors);
                    g.labels.iter().map(|&l| force || floors[column(l)] < cfg.policy.sigma2_th).collect()
                })
                .collect();
            let mut needed = vec![[false; 2]; classes.len()];
            for (g, m) in groups.iter().zip(&modes) {
                for (&l, &pseudo) in g.labels.iter().zip(m) {
                    needed[column(l)][usize::from(pseudo)] = true;
                }
            }
            let x = cell.noisy(dataset, &test);
            let scores = fits
                .par_iter()
                .zip(needed.par_iter())
                .map(|(fit, need)| -> Result<[Option<Array1<f64>>; 2]> {
                    let mut out = [None, None];
                    for (variant, slot) in out.iter_mut().enumerate() {
                        if need[variant] {
                            let model = fit.model(&cfg.policy, variant == 1)?;
                            *slot = Some(model.mahalanobis_rows(x.view())?);
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            drop(fits);
            let wall = start.elapsed().as_secs_f64() * 1e3;
            let rows = groups
                .iter()
                .zip(&modes)
                .map(|(g, m)| {
                    let cols: Vec<&Array1<f64>> = g
                        .labels
                        .iter()
                        .zip(m)
                        .map(|(&l, &pseudo)| scores[column(l)][usize::from(pseudo)].as_ref().expect("variant scored above"))
                        .collect();
                    let accuracy = group_accuracy(&cols, &test, dataset, g);
                    ResultRow {
                        experiment: g.experiment.clone(),
                        subset_or_pair: g.key.clone(),
                        snr_db: snr,
                        trial: TrialKey::Trial(trial),
                        accuracy,
                        d_ij: g.d_ij,
                        wall_ms: cfg.record_timing.then_some(wall),
                    }
                })
                .collect();
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    // Deterministic order: group, then SNR, then trial.
    let mut rows: Vec<(usize, usize, ResultRow)> = Vec::new();
    for (cell_index, cell_rows) in per_cell.into_iter().enumerate() {
        for (g, row) in cell_rows.into_iter().enumerate() {
            rows.push((g, cell_index, row));
        }
    }
    rows.sort_by_key(|(g, c, _)| (*g, *c));
    Ok(ResultTable::with_aggregates(rows.into_iter().map(|(_, _, r)| r).collect()))
}

fn group_accuracy(cols: &[&Array1<f64>], test: &[usize], dataset: &LabeledDataset, group: &Group) -> f64 {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (r, &i) in test.iter().enumerate() {
        let truth = dataset.labels[i];
        if !group.labels.contains(&truth) {
            continue;
        }
        let restricted: Vec<f64> = cols.iter().map(|c| c[r]).collect();
        let predicted = group.labels[crate::mlclass::argmin(&restricted)];
        total += 1;
        correct += usize::from(predicted == truth);
    }
    correct as f64 / total as f64
}

/// Accuracy vs SNR for the first `m` identities, for each configured `m`.
pub fn run_snr_sweep(dataset: &LabeledDataset, cfg: &SweepConfig) -> Result<ResultTable> {
    let classes = dataset.classes();
    let mut groups = Vec::new();
    for &m in &cfg.subsets {
        if m > classes.len() {
            return Err(invalid(format!("subset size {m} exceeds the {} identities available", classes.len())));
        }
        groups.push(Group {
            experiment: "sweep".into(),
            key: m.to_string(),
            labels: classes[..m].to_vec(),
            d_ij: None,
        });
    }
    run_groups(dataset, &groups, cfg)
}

/// Binary SNR sweeps for each pair, annotated with the distance between the
/// noiseless class means and ordered by that distance.
pub fn run_pair_analysis(dataset: &LabeledDataset, pairs: &[(u32, u32)], cfg: &SweepConfig) -> Result<ResultTable> {
    if pairs.len() < 2 {
        return Err(invalid("pair analysis needs at least 2 pairs"));
    }
    let known = dataset.classes();
    if let Some(&(i, j)) = pairs.iter().find(|(i, j)| !known.contains(i) || !known.contains(j)) {
        return Err(invalid(format!("pair {i}-{j} names a class not in the dataset")));
    }
    if let Some(&(i, _)) = pairs.iter().find(|(i, j)| i == j) {
        return Err(invalid(format!("pair {i}-{i} repeats a class")));
    }
    let means = class_means(dataset)?;
    let mut groups: Vec<Group> = pairs
        .iter()
        .map(|&(i, j)| Group {
            experiment: "pairs".into(),
            key: format!("{i}-{j}"),
            labels: vec![i.min(j), i.max(j)],
            d_ij: Some(pair_distance(means[&i].view(), means[&j].view())),
        })
        .collect();
    groups.sort_by(|a, b| a.d_ij.unwrap().total_cmp(&b.d_ij.unwrap()));
    run_groups(dataset, &groups, cfg)
}

/// `count` pairs spread evenly over the sorted range of pairwise distances,
/// always including the closest and the farthest pair.
pub fn select_pairs(dataset: &LabeledDataset, count: usize) -> Result<Vec<(u32, u32, f64)>> {
    let means = class_means(dataset)?;
    let classes = dataset.classes();
    let mut all = Vec::new();
    for (a, &i) in classes.iter().enumerate() {
        for &j in &classes[a + 1..] {
            all.push((i, j, pair_distance(means[&i].view(), means[&j].view())));
        }
    }
    if count < 2 || all.len() < count {
        return Err(invalid(format!("cannot pick {count} pairs from {} identities", classes.len())));
    }
    all.sort_by(|a, b| a.2.total_cmp(&b.2));
    let last = all.len() - 1;
    Ok((0..count).map(|k| all[(k * last + (count - 1) / 2) / (count - 1)]).collect())
}
