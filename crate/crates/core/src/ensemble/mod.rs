//! Ensembles of `classifier ∘ extractor` hypotheses and their source training.

mod snapshot;

pub use snapshot::{load_snapshot, save_snapshot, SNAPSHOT_VERSION};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::diffcore::{
    backward_stack, softmax_rows, Activation, FrozenMask, GradientSet, Loss, ParamSet, Sgd,
};
use crate::error::{Error, Result};
use crate::prediction::{argmax_rows, PredictionTensor};
use crate::seeding::{rng_for, Stream};

/// Widths of one hypothesis. The extractor maps the input through `hidden`
/// to `bottleneck` (all ReLU); the classifier maps the bottleneck through
/// `classifier`, whose last entry is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub classifier: Vec<usize>,
}

impl ArchSpec {
    /// Desk-scale MLP backbone of the given widths with a 16-wide bottleneck
    /// and a one-hidden-layer head.
    pub fn mlp(hidden: &[usize], classes: usize) -> Self {
        ArchSpec {
            hidden: hidden.to_vec(),
            bottleneck: 16,
            classifier: vec![16, classes],
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.bottleneck == 0 || self.hidden.contains(&0) || self.classifier.contains(&0) {
            return Err(Error::Config(format!("zero width in {self:?}")));
        }
        if self.classifier.last() != Some(&classes) {
            return Err(Error::Config(format!(
                "classifier widths {:?} must end in the class count {classes}",
                self.classifier
            )));
        }
        Ok(())
    }

    fn extractor_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.bottleneck);
        dims
    }

    fn classifier_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.bottleneck];
        dims.extend(&self.classifier);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// One extractor shared by every head.
    ShB,
    /// Separate extractors, identical architecture.
    SeB,
    /// Separate extractors with distinct architectures.
    Dba,
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Topology::ShB => "shb",
            Topology::SeB => "seb",
            Topology::Dba => "dba",
        })
    }
}

/// One member. `extractor` indexes [`Ensemble::extractors`], so members of a
/// shared-backbone ensemble all point at the same parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub extractor: usize,
    pub classifier: ParamSet,
    pub arch: ArchSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub topology: Topology,
    pub input_dim: usize,
    pub classes: usize,
    pub extractors: Vec<ParamSet>,
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default)]
    pub anchor_index: Option<usize>,
}

impl Ensemble {
    /// Initializes one hypothesis per spec. Every member draws from its own
    /// seeded stream, so shared and separate backbones differ only in sharing.
    pub fn build(
        topology: Topology,
        arch_specs: &[ArchSpec],
        input_dim: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if arch_specs.is_empty() {
            return Err(Error::Config("an ensemble needs at least one hypothesis".into()));
        }
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        for spec in arch_specs {
            spec.validate(classes)?;
        }
        let all_equal = arch_specs.iter().all(|s| s == &arch_specs[0]);
        match topology {
            Topology::ShB | Topology::SeB if !all_equal => {
                return Err(Error::Config(format!(
                    "{topology} ensembles need identical architectures"
                )))
            }
            Topology::Dba if all_equal => {
                return Err(Error::Config(
                    "dba ensembles need at least two distinct architectures".into(),
                ))
            }
            _ => {}
        }

        let n_extractors = if topology == Topology::ShB { 1 } else { arch_specs.len() };
        let extractors = (0..n_extractors)
            .map(|i| {
                ParamSet::init(
                    &arch_specs[i].extractor_dims(input_dim),
                    Activation::Relu,
                    Activation::Relu,
                    &mut rng_for(seed, Stream::ExtractorInit(i)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let hypotheses = arch_specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                Ok(Hypothesis {
                    extractor: if topology == Topology::ShB { 0 } else { i },
                    classifier: ParamSet::init(
                        &spec.classifier_dims(),
                        Activation::Relu,
                        Activation::Identity,
                        &mut rng_for(seed, Stream::HeadInit(i)),
                    )?,
                    arch: spec.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ens = Ensemble {
            topology,
            input_dim,
            classes,
            extractors,
            hypotheses,
            anchor_index: None,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn extractor_of(&self, i: usize) -> &ParamSet {
        &self.extractors[self.hypotheses[i].extractor]
    }

    pub fn extractor_of_mut(&mut self, i: usize) -> &mut ParamSet {
        let e = self.hypotheses[i].extractor;
        &mut self.extractors[e]
    }

    /// Structural invariants of the topology plus per-network validity.
    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::Validation("ensemble has no hypotheses".into()));
        }
        for (i, h) in self.hypotheses.iter().enumerate() {
            let ext = self.extractors.get(h.extractor).ok_or_else(|| {
                Error::Validation(format!("hypothesis {i} points at a missing extractor"))
            })?;
            ext.validate()?;
            h.classifier.validate()?;
            h.arch.validate(self.classes)?;
            if ext.in_dim() != self.input_dim {
                return Err(Error::Shape(format!(
                    "hypothesis {i}: extractor input {} != {}",
                    ext.in_dim(),
                    self.input_dim
                )));
            }
            if ext.out_dim() != h.classifier.in_dim() {
                return Err(Error::Shape(format!(
                    "hypothesis {i}: extractor output {} != classifier input {}",
                    ext.out_dim(),
                    h.classifier.in_dim()
                )));
            }
            if h.classifier.out_dim() != self.classes {
                return Err(Error::Shape(format!(
                    "hypothesis {i}: classifier emits {} classes, expected {}",
                    h.classifier.out_dim(),
                    self.classes
                )));
            }
        }
        let mut owners: Vec<usize> = self.hypotheses.iter().map(|h| h.extractor).collect();
        owners.sort_unstable();
        owners.dedup();
        match self.topology {
            Topology::ShB if self.extractors.len() != 1 || owners != [0] => Err(
                Error::Validation("shared-backbone ensemble must use exactly one extractor".into()),
            ),
            Topology::SeB | Topology::Dba if owners.len() != self.len() => Err(
                Error::Validation("separate-backbone members must not share extractors".into()),
            ),
            Topology::SeB if self.hypotheses.iter().any(|h| h.arch != self.hypotheses[0].arch) => {
                Err(Error::Validation("seb members must share one architecture".into()))
            }
            Topology::Dba if self.hypotheses.iter().all(|h| h.arch == self.hypotheses[0].arch) => {
                Err(Error::Validation("dba members need distinct architectures".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn features(&self, i: usize, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.extractor_of(i).forward(x)
    }

    pub fn logits(&self, i: usize, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let feats = self.features(i, x)?;
        self.hypotheses[i].classifier.forward(feats.view())
    }

    pub fn member_probs(&self, i: usize, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.logits(i, x)?.view()))
    }

    /// Per-member softmax rows and their uniform average.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<(PredictionTensor, Array2<f64>)> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, ensemble expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let members = (0..self.len())
            .map(|i| self.member_probs(i, x))
            .collect::<Result<Vec<_>>>()?;
        let tensor = PredictionTensor::new(members)?;
        let mean = tensor.mean();
        Ok((tensor, mean))
    }

    /// Ensemble labels: argmax of the averaged probabilities.
    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let (_, mean) = self.predict(x)?;
        Ok(argmax_rows(mean.view()))
    }

    /// Makes member `i` confidently wrong: output class `c` now carries the
    /// logit that used to belong to class `(c + 1) mod C`.
    pub fn corrupt_member(&mut self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Config(format!(
                "cannot corrupt member {i} of a {}-member ensemble",
                self.len()
            )));
        }
        let c = self.classes;
        let layer = self.hypotheses[i]
            .classifier
            .layers
            .last_mut()
            .expect("validated classifier has layers");
        let order: Vec<usize> = (0..c).map(|k| (k + 1) % c).collect();
        layer.weight = layer.weight.select(Axis(1), &order);
        layer.bias = layer.bias.select(Axis(0), &order);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTrainReport {
    /// `epoch_losses[e][i]`: mean cross entropy of member `i` during epoch `e`.
    pub epoch_losses: Vec<Vec<f64>>,
    /// Training accuracy of each member after the last epoch.
    pub final_accuracy: Vec<f64>,
}

/// Minimizes each member's cross entropy on the labeled source data with
/// minibatch SGD. In a shared-backbone ensemble every head trains on its own
/// loss and the shared extractor follows the mean of the heads' gradients.
pub fn train_source(
    ens: &mut Ensemble,
    source: &Dataset,
    cfg: &SourceTrainConfig,
    seed: u64,
) -> Result<SourceTrainReport> {
    if source.dim() != ens.input_dim {
        return Err(Error::Shape(format!(
            "source has {} features, ensemble expects {}",
            source.dim(),
            ens.input_dim
        )));
    }
    if cfg.batch_size == 0 || cfg.batch_size > source.len() {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size,
            source.len()
        )));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let m = ens.len();
    let mut rng = rng_for(seed, Stream::SourceBatches);
    let mut ext_opts: Vec<Sgd> = (0..ens.extractors.len())
        .map(|_| Sgd::new(cfg.lr, cfg.momentum))
        .collect();
    let mut head_opts: Vec<Sgd> = (0..m).map(|_| Sgd::new(cfg.lr, cfg.momentum)).collect();
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = vec![0.0; m];
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = source.features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&k| source.labels[k]).collect();
            let loss = Loss::CrossEntropy { targets: &y };
            let mut ext_grads: Vec<Option<GradientSet>> = vec![None; ens.extractors.len()];
            for i in 0..m {
                let h = &ens.hypotheses[i];
                let (value, mut grads, _) =
                    backward_stack(&[ens.extractor_of(i), &h.classifier], x.view(), &loss)
                        .map_err(|e| Error::Numeric(format!("hypothesis {i}: {e}")))?;
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("hypothesis {i}: loss is {value}")));
                }
                sums[i] += value * chunk.len() as f64;
                let head_grad = grads.pop().expect("two networks");
                let ext_grad = grads.pop().expect("two networks");
                let mask = FrozenMask::none(&h.classifier);
                head_opts[i].step(&mut ens.hypotheses[i].classifier, &head_grad, &mask)?;
                let slot = &mut ext_grads[ens.hypotheses[i].extractor];
                match slot {
                    Some(acc) => acc.add_assign(&ext_grad),
                    None => *slot = Some(ext_grad),
                }
            }
            let sharers = m / ens.extractors.len();
            for (e, grad) in ext_grads.into_iter().enumerate() {
                if let Some(mut g) = grad {
                    if sharers > 1 {
                        g.scale(1.0 / sharers as f64);
                    }
                    let mask = FrozenMask::none(&ens.extractors[e]);
                    ext_opts[e].step(&mut ens.extractors[e], &g, &mask)?;
                }
            }
            seen += chunk.len();
        }
        epoch_losses.push(sums.into_iter().map(|s| s / seen as f64).collect());
    }

    let final_accuracy = (0..m)
        .map(|i| {
            let probs = ens.member_probs(i, source.features.view())?;
            Ok(accuracy_of(&argmax_rows(probs.view()), &source.labels))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceTrainReport {
        epoch_losses,
        final_accuracy,
    })
}

fn accuracy_of(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}
