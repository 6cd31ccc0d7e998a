use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shadowleak::container::Container;
use shadowleak::dataset::LabeledDataset;
use shadowleak::experiments::plot::accuracy_chart;
use shadowleak::experiments::{
    predict_test, resolve_rank, run_pair_analysis, run_pose_report, run_snr_sweep, run_umbra_report, select_pairs,
    Cell, ExperimentConfig, ResultTable,
};
use shadowleak::mlclass::{evaluate, Classifier, InversionMode};
use shadowleak::pnm::write_pgm;

#[derive(Parser)]
#[command(name = "shadowleak", version, about = "Identity leakage through occluder shadows")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation and noise (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArg {
    /// Directory written by `generate`; generated from the config when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct Operating {
    /// Directory written by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Classifier file written by `fit`.
    #[arg(long)]
    classifier: PathBuf,
    /// Test SNR in dB (default: `report.snr_db`).
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a labeled dataset of noiseless shadows.
    Generate,
    /// Fit the ML classifier on noisy training data at one SNR.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        /// Shared covariance rank (default: from explained variance).
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Accuracy and confusion matrix of a fitted classifier.
    Evaluate(Operating),
    /// Accuracy vs SNR for nested identity subsets.
    Sweep(DatasetArg),
    /// Binary accuracy vs SNR for identity pairs at varying separation.
    Pairs(DatasetArg),
    /// Umbra coverage of correctly vs incorrectly classified images.
    Umbra(Operating),
    /// Pose and lighting statistics of correctly vs incorrectly classified images.
    PoseReport(Operating),
    /// SVG chart of a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "Classification accuracy vs SNR")]
        title: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let out = cli.out_dir.as_path();

    match cli.command {
        Command::Generate => generate(&config, out),
        Command::Fit { dataset, snr, rank } => fit(&config, out, &dataset, snr, rank),
        Command::Evaluate(op) => {
            let (ds, clf, predictions) = operate(&config, &op)?;
            let x = predictions.cell.noisy(&ds, &predictions.rows);
            let truth: Vec<Option<u32>> = predictions.truth.iter().map(|&t| Some(t)).collect();
            let e = evaluate(&clf, x.view(), &truth)?;
            let path = out.join("confusion.csv");
            e.write_confusion_csv(BufWriter::new(File::create(&path)?))?;
            println!(
                "accuracy {:.4} on {} test images at {} dB ({} classes); confusion matrix in {}",
                e.accuracy,
                truth.len(),
                predictions.cell.snr_db,
                clf.labels.len(),
                path.display()
            );
            Ok(())
        }
        Command::Sweep(arg) => {
            let ds = dataset_or_generate(&config, arg.dataset.as_deref())?;
            let start = Instant::now();
            let table = run_snr_sweep(&ds, &config.sweep)?;
            let path = out.join("sweep.csv");
            write_table(&table, &path)?;
            for m in &config.sweep.subsets {
                summarize(&table, "sweep", &m.to_string(), &format!("M = {m}"));
            }
            println!("wrote {} in {:.1} s", path.display(), start.elapsed().as_secs_f64());
            Ok(())
        }
        Command::Pairs(arg) => {
            let ds = dataset_or_generate(&config, arg.dataset.as_deref())?;
            let pairs: Vec<(u32, u32)> = if config.pairs.explicit.is_empty() {
                select_pairs(&ds, config.pairs.count)?.into_iter().map(|(i, j, _)| (i, j)).collect()
            } else {
                config.pairs.explicit.iter().map(|p| (p[0], p[1])).collect()
            };
            let start = Instant::now();
            let table = run_pair_analysis(&ds, &pairs, &config.sweep)?;
            let path = out.join("pairs.csv");
            write_table(&table, &path)?;
            for (_, key) in table.series() {
                let d = table.rows.iter().find(|r| r.subset_or_pair == key).and_then(|r| r.d_ij);
                summarize(&table, "pairs", &key, &format!("pair {key} d={:.4}", d.unwrap_or(f64::NAN)));
            }
            println!("wrote {} in {:.1} s", path.display(), start.elapsed().as_secs_f64());
            Ok(())
        }
        Command::Umbra(op) => {
            let (ds, _, predictions) = operate(&config, &op)?;
            let noisy = config.report.umbra_on_noisy.then_some(config.report.noisy_sigmas);
            let report = run_umbra_report(&ds, &predictions, config.report.umbra_threshold, noisy)?;
            let path = out.join("umbra.csv");
            report.write_csv(BufWriter::new(File::create(&path)?))?;
            for p in &report.partitions {
                println!("{:<9} n={:<6} umbra mean {}", p.partition, p.count, fmt(p.mean));
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::PoseReport(op) => {
            let (ds, _, predictions) = operate(&config, &op)?;
            let report = run_pose_report(&ds, &predictions)?;
            let path = out.join("pose.csv");
            report.write_csv(BufWriter::new(File::create(&path)?))?;
            for p in &report.partitions {
                println!(
                    "{:<9} n={:<6} elevation {} azimuth {} corr(light, azimuth) {}",
                    p.partition,
                    p.count,
                    fmt(p.mean_elevation_deg),
                    fmt(p.mean_azimuth_deg),
                    fmt(p.light_azimuth_corr)
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Plot { input, output, title } => {
            let table = ResultTable::read_csv(File::open(&input).with_context(|| format!("opening {}", input.display()))?)
                .with_context(|| format!("parsing {}", input.display()))?;
            let svg = accuracy_chart(&table, &title)?;
            let path = output.unwrap_or_else(|| out.join(input.with_extension("svg").file_name().expect("input has a file name")));
            fs::write(&path, svg)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn write_table(table: &ResultTable, path: &Path) -> Result<()> {
    table
        .write_csv(BufWriter::new(File::create(path)?))
        .with_context(|| format!("writing {}", path.display()))
}

fn summarize(table: &ResultTable, experiment: &str, key: &str, label: &str) {
    let curve = table.curve(experiment, key);
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!(
            "{label:<22} {:>6.1} dB: {:.4}   {:>6.1} dB: {:.4}",
            first.0, first.1, last.0, last.1
        );
    }
}

fn generate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let start = Instant::now();
    let ds = config.generation.generate()?;
    let dir = out.join("dataset");
    ds.save(&dir).with_context(|| format!("saving dataset to {}", dir.display()))?;
    let side = ds.side;
    let preview = out.join("preview.pgm");
    write_pgm(
        BufWriter::new(File::create(&preview)?),
        side,
        side,
        ds.signals.row(0).as_slice().expect("standard layout"),
    )?;
    println!(
        "{} shadows ({} identities, {} train / {} test, {}x{} pixels) in {:.1} s -> {}",
        ds.len(),
        ds.classes().len(),
        ds.train.len(),
        ds.test.len(),
        side,
        side,
        start.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    LabeledDataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn dataset_or_generate(config: &ExperimentConfig, dir: Option<&Path>) -> Result<LabeledDataset> {
    match dir {
        Some(d) => load_dataset(d),
        None => Ok(config.generation.generate()?),
    }
}

fn fit(config: &ExperimentConfig, out: &Path, dataset: &Path, snr: Option<f64>, rank: Option<usize>) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let snr = snr.unwrap_or(config.report.snr_db);
    let rank = resolve_rank(&ds, rank.or(config.sweep.rank), config.sweep.explained_variance)?;
    let power = shadowleak::dataset::mean_signal_power(&ds)?;
    let cell = Cell::new(power, snr, 0, config.sweep.seed)?;
    let clf = cell.fit_classifier(&ds, &ds.classes(), rank, config.sweep.policy)?;
    let path = out.join("classifier.shdw");
    clf.to_container(ds.side)?
        .write_to(BufWriter::new(File::create(&path)?))
        .with_context(|| format!("writing {}", path.display()))?;
    let pseudo = clf.models.iter().filter(|m| m.mode == InversionMode::Pseudoinverse).count();
    println!(
        "fitted {} classes at {snr} dB, rank {rank} ({pseudo} in pseudoinverse mode) -> {}",
        clf.labels.len(),
        path.display()
    );
    Ok(())
}

fn operate(config: &ExperimentConfig, op: &Operating) -> Result<(LabeledDataset, Classifier, shadowleak::experiments::Predictions)> {
    let ds = load_dataset(&op.dataset)?;
    let container = Container::read_from(File::open(&op.classifier).with_context(|| format!("opening {}", op.classifier.display()))?)?;
    let clf = Classifier::from_container(&container).with_context(|| format!("reading {}", op.classifier.display()))?;
    if clf.dim() != ds.n_out() {
        bail!("classifier expects {} pixels but the dataset has {}", clf.dim(), ds.n_out());
    }
    let snr = op.snr.unwrap_or(config.report.snr_db);
    let predictions = predict_test(&ds, &clf, snr, 0, config.sweep.seed)?;
    Ok((ds, clf, predictions))
}
