use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, Seeds};
use crate::data::{load_idx, normalize, rebalance, synthesize, LabeledDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{analyze_selected, subsample_coordinates, CoordinateSubsample, LayerMetrics};
use crate::nn::{
    argmax_rows, error_rate, init_model, mse_loss, sgd_step, ArchitectureSpec, MlpModel,
    OneCycleSchedule, SgdState,
};

/// Rows per forward shard during analysis.
const SHARD_ROWS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub train_error: f64,
    pub train_loss: f64,
    /// Ordered by depth.
    pub layers: Vec<LayerMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcReport {
    pub config_fingerprint: String,
    /// Effective configuration in its text form.
    pub config: String,
    pub seeds: Seeds,
    pub coord_cap: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub tpt_epoch: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// First checkpoint epoch with zero training error.
pub fn detect_tpt(report: &NcReport) -> Option<usize> {
    report
        .checkpoints
        .iter()
        .find(|c| c.train_error == 0.0)
        .map(|c| c.epoch)
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: NcReport,
    pub model: MlpModel,
}

/// A failed run, with whatever checkpoints completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub partial: Option<NcReport>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<LabeledDataset> {
    let ds = match &config.data {
        DataSource::Synthetic {
            class_count,
            input_dim,
            per_class,
            separation,
            std,
        } => synthesize(&SyntheticSpec {
            class_count: *class_count,
            input_dim: *input_dim,
            per_class: *per_class,
            separation: *separation,
            std: *std,
            seed: config.seeds.data,
        })?,
        DataSource::Idx {
            images,
            labels,
            per_class_n,
        } => {
            let ds = load_idx(images, labels)?;
            match per_class_n {
                Some(n) => rebalance(&ds, *n, config.seeds.data)?,
                None => ds,
            }
        }
    };
    match config.normalize {
        Some(mode) => Ok(normalize(&ds, mode)?.0),
        None => Ok(ds),
    }
}

/// Number of threads for analysis, from `NC_THREADS` when set.
pub fn analysis_threads() -> usize {
    std::env::var("NC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Frozen-network pass over the whole training set, followed by the four
/// metrics in every hidden layer.
pub fn analyze_model(
    model: &MlpModel,
    data: &LabeledDataset,
    selections: &[CoordinateSubsample],
    rel_tol: Option<f64>,
    epoch: usize,
    pool: &rayon::ThreadPool,
) -> Result<Checkpoint> {
    let n = data.len();
    let shards: Vec<(usize, usize)> = (0..n)
        .step_by(SHARD_ROWS)
        .map(|start| (start, (start + SHARD_ROWS).min(n)))
        .collect();
    let traces = pool.install(|| {
        shards
            .par_iter()
            .map(|&(a, b)| {
                let idx: Vec<usize> = (a..b).collect();
                let trace = model.forward(&data.inputs.select_rows(&idx))?;
                let hidden: Vec<Matrix> = trace
                    .hidden
                    .iter()
                    .zip(selections)
                    .map(|(h, sel)| {
                        if sel.is_identity(h.cols()) {
                            h.clone()
                        } else {
                            h.select_columns(&sel.indices)
                        }
                    })
                    .collect();
                Ok((hidden, trace.logits))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let layer_count = model.hidden_count();
    let mut per_layer: Vec<Vec<Matrix>> = vec![Vec::with_capacity(traces.len()); layer_count];
    let mut logits = Vec::with_capacity(traces.len());
    for (hidden, l) in traces {
        for (dst, h) in per_layer.iter_mut().zip(hidden) {
            dst.push(h);
        }
        logits.push(l);
    }
    let logits = Matrix::vstack(&logits)?;
    let predictions = argmax_rows(&logits);
    let train_error = error_rate(&predictions, &data.labels);
    let train_loss = mse_loss(&logits, &data.labels)?;
    let activations: Vec<Matrix> = per_layer
        .into_iter()
        .map(|parts| Matrix::vstack(&parts))
        .collect::<Result<_>>()?;

    let layers = pool.install(|| {
        activations
            .par_iter()
            .enumerate()
            .map(|(k, h)| {
                analyze_selected(k + 1, h, &data.labels, &predictions, data.class_count, rel_tol)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Checkpoint {
        epoch,
        train_error,
        train_loss,
        layers,
    })
}

/// Trains for `config.epochs`, pausing at every checkpoint epoch to analyze
/// the frozen network on the full training set.
pub fn run(config: &ExperimentConfig) -> std::result::Result<RunOutput, RunFailure> {
    config.validate()?;
    let data = load_dataset(config)?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()).into());
    }
    let arch = ArchitectureSpec::uniform(
        data.input_dim(),
        config.depth,
        config.width,
        data.class_count,
        config.activation,
    );
    let mut model = init_model(&arch, config.seeds.model)?;
    let mut sgd = SgdState::new(&model, config.momentum, config.weight_decay);

    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let schedule = OneCycleSchedule {
        max_lr: config.max_lr,
        total_steps: config.epochs * steps_per_epoch,
        warmup_fraction: config.warmup_fraction,
        start_div: config.start_div,
        final_div: config.final_div,
    };
    schedule.validate()?;

    // One coordinate selection per layer, reused at every checkpoint.
    let selections = arch
        .hidden
        .iter()
        .enumerate()
        .map(|(k, &w)| subsample_coordinates(w, config.coord_cap, config.seeds.subsample.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(analysis_threads())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let mut report = NcReport {
        config_fingerprint: config.fingerprint(),
        config: config.to_text(),
        seeds: config.seeds,
        coord_cap: config.coord_cap,
        checkpoints: Vec::new(),
        tpt_epoch: None,
        warnings: Vec::new(),
    };

    let checkpoints = config.checkpoint_epochs();
    let mut next_checkpoint = checkpoints.iter().peekable();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seeds.data);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;

    for epoch in 0..=config.epochs {
        if next_checkpoint.peek() == Some(&&epoch) {
            next_checkpoint.next();
            match analyze_model(&model, &data, &selections, config.rel_tol, epoch, &pool) {
                Ok(cp) => report.checkpoints.push(cp),
                Err(error) => {
                    finish_report(&mut report);
                    return Err(RunFailure {
                        error,
                        partial: Some(report),
                    });
                }
            }
        }
        if epoch == config.epochs {
            break;
        }
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let x = data.inputs.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let lr = schedule.lr_at(step)?;
            let (_, grads) = model.backward(&x, &y)?;
            sgd_step(&mut model, &grads, &mut sgd, lr)?;
            step += 1;
        }
    }
    finish_report(&mut report);
    Ok(RunOutput { report, model })
}

fn finish_report(report: &mut NcReport) {
    report.tpt_epoch = detect_tpt(report);
    if let Some(tpt) = report.tpt_epoch {
        for cp in report.checkpoints.iter().filter(|c| c.epoch > tpt && c.train_error > 0.0) {
            report.warnings.push(format!(
                "train error rebounded to {} at epoch {} after reaching zero at epoch {tpt}",
                cp.train_error, cp.epoch
            ));
        }
    }
}
