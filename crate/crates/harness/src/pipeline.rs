//! One seed of the experiment pipeline: data, source training, adaptation,
//! evaluation. Pure functions of (config, seed); no files are touched here.

use std::time::Instant;

use pdiv_core::adapt::{adapt_target, AdaptInputs, AdaptationConfig, ClassProportion, Trace};
use pdiv_core::datagen::{apply_label_shift, load_csv, make_shifted_pair, Dataset};
use pdiv_core::ensemble::{train_source, Ensemble};
use pdiv_core::metrics::{accuracy, EvalReport};
use pdiv_core::Result;

use crate::config::ExperimentConfig;

/// Source and target domains for one seed.
pub fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let (source, target) = match (&cfg.data.generator, &cfg.data.csv) {
        (Some(g), _) => make_shifted_pair(g, seed)?,
        (None, Some(c)) => (
            load_csv(&c.source, Some(c.classes))?,
            load_csv(&c.target, Some(c.classes))?,
        ),
        (None, None) => unreachable!("validated config names a data source"),
    };
    let target = match &cfg.data.label_shift {
        Some(shift) => {
            let mut shift = shift.clone();
            shift.seed = seed;
            apply_label_shift(&target, &shift)?
        }
        None => target,
    };
    Ok((source, target))
}

/// Everything that precedes adaptation. Shared by every variant of a seed so
/// ablations differ only in the adaptation settings.
#[derive(Debug, Clone)]
pub struct PreparedSeed {
    pub seed: u64,
    pub source: Dataset,
    pub target: Dataset,
    /// Source-trained ensemble, after any weak-member injection.
    pub ensemble: Ensemble,
    pub source_accuracy: f64,
    pub source_only: EvalReport,
    pub prepare_secs: f64,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedSeed> {
    let started = Instant::now();
    let (source, target) = load_data(cfg, seed)?;
    let archs = cfg.ensemble.arch_specs()?;
    let mut ensemble = Ensemble::build(
        cfg.ensemble.topology,
        &archs,
        source.dim(),
        source.classes,
        seed,
    )?;
    train_source(&mut ensemble, &source, &cfg.source_training, seed)?;
    if cfg.weak_hypothesis.enabled {
        ensemble.corrupt_member(cfg.weak_hypothesis.member)?;
    }
    let source_accuracy = accuracy(
        &ensemble.predict_labels(source.features.view())?,
        &source.labels,
    );
    let (preds, _) = ensemble.predict(target.features.view())?;
    let source_only = EvalReport::evaluate(&preds, &target.labels, cfg.eval.ece_bins)?;
    Ok(PreparedSeed {
        seed,
        source,
        target,
        ensemble,
        source_accuracy,
        source_only,
        prepare_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct AdaptedSeed {
    pub ensemble: Ensemble,
    pub trace: Trace,
    pub adapted: EvalReport,
    pub adapt_secs: f64,
}

/// Adapts a copy of the prepared ensemble. Target labels reach the adapter
/// only as trace annotations and, in `true` proportion mode, as class counts.
pub fn adapt_seed(
    prepared: &PreparedSeed,
    adaptation: &AdaptationConfig,
    ece_bins: usize,
) -> Result<AdaptedSeed> {
    let started = Instant::now();
    let mut cfg = adaptation.clone();
    cfg.seed = prepared.seed;
    let true_proportion = ClassProportion::from_counts(&prepared.target.class_counts())?;
    let inputs = AdaptInputs {
        trace_labels: Some(&prepared.target.labels),
        true_proportion: Some(&true_proportion),
    };
    let mut ensemble = prepared.ensemble.clone();
    let trace = adapt_target(&mut ensemble, prepared.target.features.view(), &cfg, inputs)?;
    let (preds, _) = ensemble.predict(prepared.target.features.view())?;
    let adapted = EvalReport::evaluate(&preds, &prepared.target.labels, ece_bins)?;
    Ok(AdaptedSeed {
        ensemble,
        trace,
        adapted,
        adapt_secs: started.elapsed().as_secs_f64(),
    })
}
