//! Config-driven training runs, comparisons and diagnostics.

mod compare;
mod histogram;
mod overrides;
mod record;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use compare::{
    run_arms, run_grid_sweep, run_noise_sweep, run_opt_mode_comparison, run_scaling_ablation, Arm, ArmResult, GridRow,
    NoiseRow, OptRow, ScalingRow,
};
pub use histogram::{export_weight_histograms, histogram, write_histograms, LayerHistogram};
pub use overrides::{parse_pattern, Overrides};
pub use record::{mean_std, read_metrics_csv, EpochMetrics, RunRecord, Summary};

use crate::data::{augment, AugmentPolicy, Dataset, DatasetSpec, LabelNoise, NoiseSpec};
use crate::error::{config_err, Error, Result};
use crate::loss::{one_hot, total_loss, CollabLossConfig};
use crate::net::{HeadPattern, NetSpec, TrainingGraph};
use crate::optim::{step, SgdConfig, TrainState};
use crate::tape::Tape;

const BATCH_STREAM: u64 = 1 << 40;
const AUGMENT_STREAM: u64 = 2 << 40;

/// The network either inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetRef {
    Path(String),
    Inline(NetSpec),
}

/// Value lists for the comparison subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub noise_levels: Vec<f64>,
    /// Collaborative patterns compared against the individual baseline.
    pub patterns: Vec<HeadPattern>,
    pub betas: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// Split markers tried with a simple-ILR pattern.
    pub splits: Vec<String>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.0, 0.2, 0.4],
            patterns: Vec::new(),
            betas: vec![0.5],
            temperatures: vec![2.0],
            splits: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    pub net: NetRef,
    pub pattern: HeadPattern,
    #[serde(default)]
    pub loss: CollabLossConfig,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub augment: AugmentPolicy,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub sweep: SweepGrid,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_bins() -> usize {
    51
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn net_spec(&self) -> Result<NetSpec> {
        match &self.net {
            NetRef::Inline(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
            NetRef::Path(p) => NetSpec::load(self.base_dir.join(p)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seed list is empty"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err("epochs and batch size must be positive"));
        }
        self.loss.validate()?;
        self.sgd.validate()?;
        self.noise.validate()?;
        if self.pattern.heads() == 1 && self.loss.beta != 1.0 {
            return Err(config_err("a single head has no peers; set beta = 1"));
        }
        let files: Vec<&String> = match &self.dataset {
            DatasetSpec::MnistSubset {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                vec![train_images, train_labels, test_images, test_labels]
            }
            DatasetSpec::Csv { train, test } => vec![train, test],
            DatasetSpec::SyntheticBlobs { .. } => Vec::new(),
        };
        let net_file = match &self.net {
            NetRef::Path(p) => Some(p),
            NetRef::Inline(_) => None,
        };
        for f in files.into_iter().chain(net_file) {
            if !self.base_dir.join(f).is_file() {
                return Err(config_err(format!(
                    "referenced file {} does not exist",
                    self.base_dir.join(f).display()
                )));
            }
        }
        Ok(())
    }
}

/// Row indices of every mini-batch in `epoch`, derived only from `seed` so
/// that every arm of a comparison sees the same order.
pub fn epoch_batches(seed: u64, epoch: usize, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Per-head error rates on `data`.
pub fn evaluate(graph: &TrainingGraph, data: &Dataset) -> Result<Vec<f64>> {
    let mut wrong = vec![0usize; graph.head_count()];
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(256) {
        let x = data.features.select_rows(chunk);
        for (h, z) in graph.predict(&x)?.iter().enumerate() {
            let m = z.shape()[1];
            for (r, &i) in chunk.iter().enumerate() {
                if argmax(&z.data()[r * m..(r + 1) * m]) != data.labels[i] {
                    wrong[h] += 1;
                }
            }
        }
    }
    Ok(wrong.into_iter().map(|w| w as f64 / data.len() as f64).collect())
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

/// A loaded configuration ready to train.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub net: NetSpec,
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let net = config.net_spec()?;
        let (train, test) = config.dataset.load(&config.base_dir)?;
        if train.example_shape() != net.input_shape.as_slice() {
            return Err(config_err(format!(
                "dataset examples are {:?} but the network expects {:?}",
                train.example_shape(),
                net.input_shape
            )));
        }
        if train.classes > net.classes {
            return Err(config_err(format!(
                "{} classes in the data, {} logits",
                train.classes, net.classes
            )));
        }
        Ok(Self {
            config,
            net,
            train: Arc::new(train),
            test: Arc::new(test),
        })
    }

    /// Same data, different settings.
    pub fn with_config(&self, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let net = config.net_spec()?;
        Ok(Self {
            config,
            net,
            train: Arc::clone(&self.train),
            test: Arc::clone(&self.test),
        })
    }

    pub fn label(&self) -> String {
        self.config.pattern.label()
    }

    pub fn build_graph(&self, seed: u64) -> Result<TrainingGraph> {
        TrainingGraph::build(&self.net, &self.config.pattern, self.config.loss.scaling, seed)
    }

    fn activations(&self, graph: &TrainingGraph) -> Result<usize> {
        let rows: Vec<usize> = (0..self.config.batch_size.min(self.train.len())).collect();
        let batch = self.train.batch(&rows);
        let mut tape = Tape::new();
        let x = tape.constant(batch.inputs);
        let y = tape.constant(one_hot(&batch.labels, self.net.classes)?);
        let logits = graph.forward(&mut tape, x)?;
        let all: Vec<_> = graph.store().ids().collect();
        total_loss(&mut tape, y, &logits, &self.config.loss, graph.store(), &all)?;
        Ok(tape.activation_count())
    }

    pub fn run_seed(&self, seed: u64) -> Result<RunRecord> {
        self.run_seed_with(seed, |_, _| {})
    }

    /// Trains one seed, calling `on_epoch` after each evaluated epoch.
    pub fn run_seed_with(
        &self,
        seed: u64,
        mut on_epoch: impl FnMut(&TrainingGraph, &EpochMetrics),
    ) -> Result<RunRecord> {
        let cfg = &self.config;
        let mut graph = self.build_graph(seed)?;
        let noise = LabelNoise::new(&cfg.noise, self.train.len(), self.train.classes)?;
        let mut record = RunRecord {
            label: self.label(),
            seed,
            epochs: Vec::new(),
            epoch_seconds: Vec::new(),
            training_params: graph.store().scalar_count(),
            inference_params: self.net.param_count(),
            activations: self.activations(&graph)?,
            aborted: None,
            histograms: Vec::new(),
        };
        let mut state = TrainState::new(&cfg.sgd);
        let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
        'epochs: for epoch in 0..cfg.epochs {
            let started = Instant::now();
            state.start_epoch(epoch, &cfg.sgd);
            aug_rng.set_stream(AUGMENT_STREAM | epoch as u64);
            let labels = noise.epoch_labels(&self.train.labels, epoch);
            let mut loss_sum = 0.0;
            let mut head_sums = vec![0.0; graph.head_count()];
            let batches = epoch_batches(seed, epoch, self.train.len(), cfg.batch_size);
            for rows in &batches {
                let mut batch = self.train.batch_with_labels(rows, &labels);
                batch.inputs = augment(&batch.inputs, cfg.augment, &mut aug_rng)?;
                match step(&mut graph, &batch, &cfg.loss, &cfg.sgd, &mut state) {
                    Ok(s) => {
                        loss_sum += s.total_loss;
                        for (a, l) in head_sums.iter_mut().zip(&s.head_losses) {
                            *a += l;
                        }
                    }
                    Err(Error::NonFinite(msg)) => {
                        record.aborted = Some(format!("{} under {:?} scaling: {msg}", record.label, cfg.loss.scaling));
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            let nb = batches.len() as f64;
            record.epoch_seconds.push(started.elapsed().as_secs_f64());
            let metrics = EpochMetrics {
                epoch,
                lr: state.lr,
                train_loss: loss_sum / nb,
                head_losses: head_sums.iter().map(|s| s / nb).collect(),
                test_errors: evaluate(&graph, &self.test)?,
            };
            on_epoch(&graph, &metrics);
            record.epochs.push(metrics);
        }
        if record.aborted.is_none() {
            record.histograms = export_weight_histograms(&graph, cfg.histogram_bins, None)?;
        }
        Ok(record)
    }

    /// Every configured seed, in parallel when threads are available.
    pub fn run(&self) -> Result<ExperimentResult> {
        let records = self
            .config
            .seeds
            .par_iter()
            .map(|&s| self.run_seed(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.result(records))
    }

    /// Every configured seed, one after another (for wall-clock comparisons).
    pub fn run_sequential(&self) -> Result<ExperimentResult> {
        let records = self
            .config
            .seeds
            .iter()
            .map(|&s| self.run_seed(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.result(records))
    }

    fn result(&self, records: Vec<RunRecord>) -> ExperimentResult {
        ExperimentResult {
            summary: Summary::from_records(&self.label(), &records),
            records,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

impl ExperimentResult {
    /// Writes `metrics_<seed>.csv`, `timing_<seed>.csv`, `summary.json`
    /// and, for the first seed, `hist_<layer>.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.records {
            r.write_metrics_csv(&dir.join(format!("metrics_{}.csv", r.seed)))?;
            r.write_timing_csv(&dir.join(format!("timing_{}.csv", r.seed)))?;
        }
        if let Some(r) = self.records.iter().find(|r| !r.histograms.is_empty()) {
            write_histograms(&r.histograms, dir)?;
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

/// Trains every seed of `cfg` and writes the outputs to `cfg.out_dir`
/// when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let exp = Experiment::new(cfg.clone())?;
    let result = exp.run()?;
    if let Some(out) = &cfg.out_dir {
        result.write(Path::new(out))?;
    }
    Ok(result)
}
