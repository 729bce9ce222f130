//! Source-free target adaptation.
//!
//! Only the feature extractors move. Each step minimizes
//! `alpha · mean_i(−I_W(h_i)) + beta · HD(anchor, members)` on one target
//! minibatch, where the anchor is a detached consensus of the members.

mod anchor;
mod objective;
mod proportion;

pub use anchor::{anchor_weights, build_anchor, AnchorStrategy, AnchorWeights, CosineMode};
pub use objective::{
    hypothesis_disparity, hypothesis_disparity_over, mutual_information,
    weighted_mutual_information,
};
pub use proportion::{pseudo_labels, ClassProportion, ProportionSource, EMPTY_CLASS_FLOOR};

pub use crate::prediction::PredictionTensor;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    loss_with_prob_grad, softmax_backward, softmax_rows, weighted_mi_with_grad, ForwardCache,
    FrozenMask, GradientSet, Loss, Marginal, Sgd,
};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::prediction::argmax_rows;
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionMode {
    /// `W = 1/C` for every class.
    Uniform,
    /// Re-estimated from ensemble pseudo-labels on the whole target set.
    #[default]
    Pseudo,
    /// Supplied by the caller through [`AdaptInputs::true_proportion`].
    True,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    /// Class marginal of the current minibatch.
    #[default]
    Batch,
    /// Class marginal of the whole target set, out-of-batch rows detached.
    Full,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.5
}

fn default_log_interval() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    #[serde(default = "AdaptationConfig::default_strategy")]
    pub anchor_strategy: AnchorStrategy,
    /// Member used by the fixed strategy.
    #[serde(default)]
    pub anchor_index: Option<usize>,
    #[serde(default)]
    pub proportion_mode: ProportionMode,
    /// Steps between pseudo-label refreshes; `None` means one pass over the
    /// target set, `ceil(N / batch_size)`.
    #[serde(default)]
    pub proportion_refresh_interval: Option<usize>,
    #[serde(default)]
    pub cosine_mode: CosineMode,
    #[serde(default)]
    pub marginal_mode: MarginalMode,
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AdaptationConfig {
    fn default_strategy() -> AnchorStrategy {
        AnchorStrategy::Whp
    }

    pub fn new(lr: f64, iterations: usize, batch_size: usize) -> Self {
        AdaptationConfig {
            alpha: default_alpha(),
            beta: default_beta(),
            lr,
            momentum: 0.0,
            iterations,
            batch_size,
            anchor_strategy: AnchorStrategy::Whp,
            anchor_index: None,
            proportion_mode: ProportionMode::Pseudo,
            proportion_refresh_interval: None,
            cosine_mode: CosineMode::PerSample,
            marginal_mode: MarginalMode::Batch,
            log_interval: default_log_interval(),
            seed: 0,
        }
    }

    /// Checks that do not depend on the ensemble or the data.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be positive".into()));
        }
        if self.proportion_refresh_interval == Some(0) {
            return Err(Error::Config("proportion_refresh_interval must be positive".into()));
        }
        if self.anchor_strategy == AnchorStrategy::Fixed && self.anchor_index.is_none() {
            return Err(Error::Config("fixed anchor strategy needs anchor_index".into()));
        }
        Ok(())
    }
}

/// Side information that adaptation may consume without touching target
/// labels: labels only score the trace, proportions only serve `True` mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptInputs<'a> {
    pub trace_labels: Option<&'a [usize]>,
    pub true_proportion: Option<&'a ClassProportion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Full objective on the step's minibatch, before the update.
    pub loss: f64,
    /// `I_W` averaged over members.
    pub mi: f64,
    /// Disparity to the anchor over the members that enter the penalty.
    pub hd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_index: Option<usize>,
    pub class_proportion: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member_accuracy: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Validation(format!("trace record: {e}")))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k as u64 + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Trace { records })
    }
}

struct MemberPass {
    ext_cache: ForwardCache,
    head_cache: ForwardCache,
    probs: Array2<f64>,
}

/// Cached forward pass of every member on one batch.
pub struct EnsembleForward {
    passes: Vec<MemberPass>,
}

impl EnsembleForward {
    pub fn new(ens: &Ensemble, x: ArrayView2<f64>) -> Result<Self> {
        let passes = (0..ens.len())
            .map(|i| {
                let ext_cache = ens.extractor_of(i).forward_cached(x)?;
                let head_cache = ens.hypotheses[i]
                    .classifier
                    .forward_cached(ext_cache.output.view())?;
                let probs = softmax_rows(head_cache.output.view());
                Ok(MemberPass {
                    ext_cache,
                    head_cache,
                    probs,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EnsembleForward { passes })
    }

    /// Unclamped softmax rows of member `i`.
    pub fn probs(&self, i: usize) -> ArrayView2<'_, f64> {
        self.passes[i].probs.view()
    }

    pub fn tensor(&self) -> Result<PredictionTensor> {
        PredictionTensor::new(self.passes.iter().map(|p| p.probs.clone()).collect())
    }
}

/// The detached quantities one evaluation of the objective holds fixed.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub class_weights: &'a [f64],
    /// Required when `beta > 0`.
    pub anchor: Option<ArrayView2<'a, f64>>,
    /// Member left out of the disparity mean.
    pub hd_skip: Option<usize>,
    /// Per-member out-of-batch probability sums and the full row count, for
    /// the dataset-wide marginal.
    pub pooled: Option<(&'a [Vec<f64>], usize)>,
}

#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    /// `alpha · mean_i(−I_W) + beta · HD`.
    pub value: f64,
    /// `mean_i I_W`.
    pub mi: f64,
    /// Gradient with respect to each extractor; shared extractors receive the
    /// sum over the heads that use them.
    pub extractor_grads: Vec<GradientSet>,
}

/// Value and extractor gradients of the adaptation objective on a batch.
pub fn ensemble_objective(
    ens: &Ensemble,
    fwd: &EnsembleForward,
    inputs: &ObjectiveInputs,
) -> Result<ObjectiveEval> {
    let m = ens.len();
    if fwd.passes.len() != m {
        return Err(Error::Shape(format!(
            "forward pass has {} members, ensemble {m}",
            fwd.passes.len()
        )));
    }
    let hd_members = m - usize::from(inputs.hd_skip.is_some_and(|k| k < m));
    let hd_scale = if hd_members == 0 { 0.0 } else { 1.0 / hd_members as f64 };
    let mut value = 0.0;
    let mut mi = 0.0;
    let mut grads: Vec<GradientSet> = ens.extractors.iter().map(GradientSet::zeros_like).collect();
    for (i, pass) in fwd.passes.iter().enumerate() {
        let marginal = match inputs.pooled {
            None => Marginal::Batch,
            Some((sums, total)) => Marginal::Pooled {
                detached_sum: &sums[i],
                total,
            },
        };
        let loss = Loss::Composite {
            alpha: inputs.alpha,
            beta: inputs.beta,
            class_weights: inputs.class_weights,
            marginal,
            anchor: inputs.anchor,
            mi_scale: 1.0 / m as f64,
            hd_scale: if inputs.hd_skip == Some(i) { 0.0 } else { hd_scale },
        };
        let (v, grad_probs) = loss_with_prob_grad(pass.probs.view(), &loss)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("hypothesis {i} loss is {v}")));
        }
        value += v;
        mi += weighted_mi_with_grad(pass.probs.view(), inputs.class_weights, marginal)?.0;
        let dz = softmax_backward(pass.probs.view(), grad_probs.view());
        let (_, dfeat) = ens.hypotheses[i].classifier.backprop(&pass.head_cache, dz.view())?;
        let (g, _) = ens.extractor_of(i).backprop(&pass.ext_cache, dfeat.view())?;
        if !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for hypothesis {i}")));
        }
        grads[ens.hypotheses[i].extractor].add_assign(&g);
    }
    Ok(ObjectiveEval {
        value,
        mi: mi / m as f64,
        extractor_grads: grads,
    })
}

fn trace_accuracy(ens: &Ensemble, x: ArrayView2<f64>, labels: &[usize]) -> Result<(Vec<f64>, f64)> {
    let (tensor, mean) = ens.predict(x)?;
    let members = (0..tensor.m())
        .map(|i| accuracy(&tensor.labels(i), labels))
        .collect();
    Ok((members, accuracy(&argmax_rows(mean.view()), labels)))
}

/// Adapts the extractors of `ens` to the unlabeled rows `target_x`.
///
/// Classifiers are never written. Deterministic for a given `cfg.seed`.
pub fn adapt_target(
    ens: &mut Ensemble,
    target_x: ArrayView2<f64>,
    cfg: &AdaptationConfig,
    inputs: AdaptInputs,
) -> Result<Trace> {
    cfg.validate()?;
    ens.validate()?;
    let m = ens.len();
    let n = target_x.nrows();
    let c = ens.classes;
    if target_x.ncols() != ens.input_dim {
        return Err(Error::Shape(format!(
            "target has {} features, ensemble expects {}",
            target_x.ncols(),
            ens.input_dim
        )));
    }
    if cfg.batch_size > n {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {n} target rows",
            cfg.batch_size
        )));
    }
    if cfg.anchor_strategy == AnchorStrategy::Whp && m < 3 {
        return Err(Error::Config(format!("whp anchor needs at least 3 members, got {m}")));
    }
    if cfg.anchor_strategy.is_member_anchor() && m < 2 && cfg.beta > 0.0 {
        return Err(Error::Config("a member anchor needs at least 2 members".into()));
    }
    if let Some(i) = cfg.anchor_index {
        if i >= m {
            return Err(Error::Config(format!("anchor_index {i} out of range for {m} members")));
        }
    }
    if let Some(labels) = inputs.trace_labels {
        if labels.len() != n {
            return Err(Error::Shape(format!("{} trace labels for {n} rows", labels.len())));
        }
    }

    let anchor_index = match cfg.anchor_strategy {
        AnchorStrategy::Fixed => cfg.anchor_index,
        AnchorStrategy::Random => Some(rng_for(cfg.seed, Stream::RandomAnchor).random_range(0..m)),
        _ => None,
    };
    let hd_skip = if cfg.anchor_strategy.is_member_anchor() {
        anchor_index
    } else {
        None
    };
    let hd_members = m - usize::from(hd_skip.is_some());
    let need_anchor = cfg.beta > 0.0 && hd_members > 0;

    let mut proportion = match cfg.proportion_mode {
        ProportionMode::Uniform => ClassProportion::uniform(c),
        ProportionMode::True => {
            let p = inputs
                .true_proportion
                .ok_or_else(|| Error::Config("proportion_mode true needs proportions".into()))?;
            p.validate()?;
            if p.weights.len() != c {
                return Err(Error::Shape(format!(
                    "{} true proportions for {c} classes",
                    p.weights.len()
                )));
            }
            p.clone()
        }
        ProportionMode::Pseudo => ClassProportion::uniform(c),
    };
    let refresh = cfg
        .proportion_refresh_interval
        .unwrap_or_else(|| n.div_ceil(cfg.batch_size));

    let frozen: Vec<FrozenMask> = ens.extractors.iter().map(FrozenMask::none).collect();
    let mut opts: Vec<Sgd> = ens
        .extractors
        .iter()
        .map(|_| Sgd::new(cfg.lr, cfg.momentum))
        .collect();
    let mut batch_rng = rng_for(cfg.seed, Stream::TargetBatches);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut batch_rng);
    let mut cursor = 0usize;
    let mut trace = Trace::default();

    for step in 0..cfg.iterations {
        if cfg.proportion_mode == ProportionMode::Pseudo && step % refresh == 0 {
            let (_, mean) = ens.predict(target_x)?;
            proportion = pseudo_labels(mean.view())?.1;
        }
        if cursor + cfg.batch_size > n {
            order.shuffle(&mut batch_rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;
        let x = target_x.select(Axis(0), rows);

        let at_step = |e: Error| match e {
            Error::Numeric(msg) => Error::Numeric(format!("step {step}: {msg}")),
            other => other,
        };
        let fwd = EnsembleForward::new(ens, x.view())?;
        let tensor = fwd
            .tensor()
            .map_err(|e| Error::Numeric(format!("step {step}: {e}")))?;
        let weights = if cfg.anchor_strategy == AnchorStrategy::Whp {
            Some(anchor_weights(&tensor, cfg.cosine_mode)?)
        } else {
            None
        };
        let anchor = if m > 1 || need_anchor {
            Some(build_anchor(&tensor, cfg.anchor_strategy, weights.as_ref(), anchor_index)?)
        } else {
            None
        };
        let pooled: Option<Vec<Vec<f64>>> = match cfg.marginal_mode {
            MarginalMode::Batch => None,
            MarginalMode::Full => Some(
                (0..m)
                    .map(|i| {
                        let all = ens.member_probs(i, target_x)?.sum_axis(Axis(0));
                        Ok((all - fwd.probs(i).sum_axis(Axis(0))).to_vec())
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let objective = ObjectiveInputs {
            alpha: cfg.alpha,
            beta: cfg.beta,
            class_weights: &proportion.weights,
            anchor: if need_anchor { anchor.as_ref().map(|a| a.view()) } else { None },
            hd_skip,
            pooled: pooled.as_deref().map(|p| (p, n)),
        };
        let eval = ensemble_objective(ens, &fwd, &objective).map_err(at_step)?;
        if !eval.value.is_finite() {
            return Err(Error::Numeric(format!("step {step}: loss is {}", eval.value)));
        }

        if step % cfg.log_interval == 0 || step + 1 == cfg.iterations {
            let hd = match &anchor {
                Some(a) if hd_members > 0 => hypothesis_disparity_over(&tensor, a.view(), hd_skip)?,
                _ => 0.0,
            };
            let (member_accuracy, ensemble_accuracy) = match inputs.trace_labels {
                Some(labels) => {
                    let (mem, ens_acc) = trace_accuracy(ens, target_x, labels)?;
                    (Some(mem), Some(ens_acc))
                }
                None => (None, None),
            };
            trace.records.push(TraceRecord {
                step,
                loss: eval.value,
                mi: eval.mi,
                hd,
                anchor_weights: weights.as_ref().map(|w| w.normalized.clone()),
                anchor_index,
                class_proportion: proportion.weights.clone(),
                member_accuracy,
                ensemble_accuracy,
            });
        }

        for (e, g) in eval.extractor_grads.iter().enumerate() {
            opts[e].step(&mut ens.extractors[e], g, &frozen[e])?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_shifted_pair, GeneratorSpec, Transform};
    use crate::ensemble::{train_source, ArchSpec, SourceTrainConfig, Topology};

    fn fixture(seed: u64, m: usize) -> (Ensemble, crate::datagen::Dataset) {
        let spec = GeneratorSpec {
            n: 120,
            dim: 2,
            classes: 3,
            modes_per_class: 1,
            mean_scale: 3.0,
            sigma: 0.6,
            transforms: vec![Transform::Rotation { degrees: 30.0 }],
        };
        let (src, tgt) = make_shifted_pair(&spec, seed).unwrap();
        let archs = vec![ArchSpec::mlp(&[8], 3); m];
        let mut ens = Ensemble::build(Topology::SeB, &archs, 2, 3, seed).unwrap();
        let tc = SourceTrainConfig {
            epochs: 5,
            lr: 0.1,
            batch_size: 20,
            momentum: 0.0,
        };
        train_source(&mut ens, &src, &tc, seed).unwrap();
        (ens, tgt)
    }

    fn cfg() -> AdaptationConfig {
        let mut c = AdaptationConfig::new(0.05, 12, 20);
        c.log_interval = 1;
        c.seed = 7;
        c
    }

    #[test]
    fn classifiers_stay_bit_identical() {
        let (mut ens, tgt) = fixture(1, 3);
        let heads: Vec<_> = ens.hypotheses.iter().map(|h| h.classifier.clone()).collect();
        let before = ens.extractors.clone();
        adapt_target(&mut ens, tgt.features.view(), &cfg(), AdaptInputs::default()).unwrap();
        for (h, old) in ens.hypotheses.iter().zip(&heads) {
            assert_eq!(&h.classifier, old);
        }
        assert_ne!(ens.extractors, before);
    }

    #[test]
    fn zero_coefficients_leave_ensemble_unchanged() {
        let (mut ens, tgt) = fixture(2, 3);
        let before = ens.clone();
        let mut c = cfg();
        c.alpha = 0.0;
        c.beta = 0.0;
        adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default()).unwrap();
        assert_eq!(ens, before);
    }

    #[test]
    fn uniform_mode_matches_explicit_uniform_weights() {
        let (ens, tgt) = fixture(3, 3);
        let mut a = ens.clone();
        let mut b = ens;
        let mut c1 = cfg();
        c1.proportion_mode = ProportionMode::Uniform;
        let mut c2 = cfg();
        c2.proportion_mode = ProportionMode::True;
        let uniform = ClassProportion::from_weights(vec![1.0 / 3.0; 3]).unwrap();
        let t1 = adapt_target(&mut a, tgt.features.view(), &c1, AdaptInputs::default()).unwrap();
        let inputs = AdaptInputs {
            trace_labels: None,
            true_proportion: Some(&uniform),
        };
        let t2 = adapt_target(&mut b, tgt.features.view(), &c2, inputs).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_per_seed() {
        let (ens, tgt) = fixture(4, 3);
        let labels = tgt.labels.clone();
        let inputs = AdaptInputs {
            trace_labels: Some(&labels),
            true_proportion: None,
        };
        let mut a = ens.clone();
        let mut b = ens;
        let t1 = adapt_target(&mut a, tgt.features.view(), &cfg(), inputs).unwrap();
        let t2 = adapt_target(&mut b, tgt.features.view(), &cfg(), inputs).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.records[0].member_accuracy.as_ref().unwrap().len() == 3);
    }

    #[test]
    fn config_errors() {
        let (mut ens, tgt) = fixture(5, 2);
        let err = adapt_target(&mut ens, tgt.features.view(), &cfg(), AdaptInputs::default());
        assert!(matches!(err, Err(Error::Config(_))));
        let mut c = cfg();
        c.anchor_strategy = AnchorStrategy::Fixed;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.anchor_index = Some(5);
        let err = adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default());
        assert!(matches!(err, Err(Error::Config(_))));
        let mut c = cfg();
        c.proportion_mode = ProportionMode::True;
        c.anchor_strategy = AnchorStrategy::Ensemble;
        let err = adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn exploding_lr_reports_step() {
        let (mut ens, tgt) = fixture(6, 3);
        let mut c = cfg();
        c.lr = 1e200;
        c.iterations = 50;
        match adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default()) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("step")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn random_anchor_is_held_for_the_run() {
        let (mut ens, tgt) = fixture(7, 3);
        let mut c = cfg();
        c.anchor_strategy = AnchorStrategy::Random;
        let t = adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default()).unwrap();
        let first = t.records[0].anchor_index.unwrap();
        assert!(t.records.iter().all(|r| r.anchor_index == Some(first)));
    }

    #[test]
    fn full_marginal_runs() {
        let (mut ens, tgt) = fixture(8, 3);
        let mut c = cfg();
        c.marginal_mode = MarginalMode::Full;
        let t = adapt_target(&mut ens, tgt.features.view(), &c, AdaptInputs::default()).unwrap();
        assert!(t.records.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn trace_roundtrip() {
        let (mut ens, tgt) = fixture(9, 3);
        let t = adapt_target(&mut ens, tgt.features.view(), &cfg(), AdaptInputs::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.jsonl");
        t.write_jsonl(&p).unwrap();
        assert_eq!(Trace::read_jsonl(&p).unwrap(), t);
    }
}
