use std::collections::HashSet;
use std::path::{Path, PathBuf};

use pdiv_core::adapt::{AdaptationConfig, AnchorStrategy};
use pdiv_core::datagen::{GeneratorSpec, ShiftKind, ShiftSpec};
use pdiv_core::ensemble::{ArchSpec, SourceTrainConfig, Topology};
use pdiv_core::metrics::DEFAULT_ECE_BINS;
use pdiv_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the root under which relative output
/// directories are resolved.
pub const OUTPUT_ROOT_ENV: &str = "PDIV_OUTPUT_ROOT";

/// One experiment: data, ensemble, both training phases and the seeds to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub ensemble: EnsembleConfig,
    pub source_training: SourceTrainConfig,
    pub adaptation: AdaptationConfig,
    #[serde(default)]
    pub weak_hypothesis: WeakHypothesis,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic source/target pair; exclusive with `csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvData>,
    /// Applied to the target domain. Its `seed` is replaced by the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_shift: Option<ShiftSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub source: PathBuf,
    pub target: PathBuf,
    pub classes: usize,
}

/// Either an explicit `archs` list or `members` copies of `arch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub archs: Vec<ArchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<usize>,
}

impl EnsembleConfig {
    pub fn arch_specs(&self) -> Result<Vec<ArchSpec>> {
        match (&self.archs[..], &self.arch, self.members) {
            (list, None, None) if !list.is_empty() => Ok(list.to_vec()),
            ([], Some(a), Some(m)) if m > 0 => Ok(vec![a.clone(); m]),
            _ => Err(Error::Config(
                "ensemble needs either `archs` or both `arch` and `members` > 0".into(),
            )),
        }
    }
}

/// Corrupts one member after source training so it is confidently wrong.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakHypothesis {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub member: usize,
}

fn default_bins() -> usize {
    DEFAULT_ECE_BINS
}

fn default_z() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    /// Multiplier on the standard error in shift confidence intervals.
    #[serde(default = "default_z")]
    pub ci_z: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ece_bins: default_bins(),
            ci_z: default_z(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads and validates a config; relative CSV paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(csv), Some(dir)) = (cfg.data.csv.as_mut(), path.parent()) {
            csv.source = dir.join(&csv.source);
            csv.target = dir.join(&csv.target);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn classes(&self) -> usize {
        match (&self.data.generator, &self.data.csv) {
            (Some(g), _) => g.classes,
            (None, Some(c)) => c.classes,
            (None, None) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        match (&self.data.generator, &self.data.csv) {
            (Some(g), None) => g.validate()?,
            (None, Some(c)) => {
                for p in [&c.source, &c.target] {
                    if !p.is_file() {
                        return Err(Error::Config(format!("data file {} not found", p.display())));
                    }
                }
                if c.classes < 2 {
                    return Err(Error::Config("csv data needs at least 2 classes".into()));
                }
            }
            _ => {
                return Err(Error::Config(
                    "data needs exactly one of `generator` or `csv`".into(),
                ))
            }
        }
        let classes = self.classes();
        if let Some(shift) = &self.data.label_shift {
            shift.validate(classes)?;
        }
        let archs = self.ensemble.arch_specs()?;
        for a in &archs {
            a.validate(classes)?;
        }
        if self.weak_hypothesis.enabled && self.weak_hypothesis.member >= archs.len() {
            return Err(Error::Config(format!(
                "weak member {} out of range for {} members",
                self.weak_hypothesis.member,
                archs.len()
            )));
        }
        let adapt = &self.adaptation;
        if adapt.anchor_strategy == AnchorStrategy::Whp && archs.len() < 3 {
            return Err(Error::Config(format!(
                "the whp anchor needs at least 3 members, got {}",
                archs.len()
            )));
        }
        if let Some(i) = adapt.anchor_index.filter(|&i| i >= archs.len()) {
            return Err(Error::Config(format!(
                "anchor index {i} out of range for {} members",
                archs.len()
            )));
        }
        let st = &self.source_training;
        if st.batch_size == 0 || !(st.lr > 0.0) {
            return Err(Error::Config("source training needs batch_size > 0 and lr > 0".into()));
        }
        self.adaptation.validate()?;
        if self.eval.ece_bins == 0 || !(self.eval.ci_z >= 0.0) {
            return Err(Error::Config("eval needs ece_bins > 0 and ci_z >= 0".into()));
        }
        Ok(())
    }

    pub fn has_label_shift(&self) -> bool {
        matches!(&self.data.label_shift, Some(s) if s.kind != ShiftKind::None)
    }

    /// Content hash of everything that determines a run's result apart from
    /// the seed. Keys are serialized in sorted order, so field order in the
    /// source file does not matter.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seeds");
            obj.remove("output_dir");
            if let Some(adapt) = obj.get_mut("adaptation").and_then(|a| a.as_object_mut()) {
                adapt.remove("seed");
            }
        }
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Output directory: the CLI override, then the config, then `results`,
    /// resolved under the output-root variable when relative.
    pub fn resolve_output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        let dir = override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("results"));
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
seeds = [1, 2]

[data.generator]
n = 120
dim = 2
classes = 3
mean_scale = 3.0
sigma = 0.5
transforms = [{ kind = "rotation", degrees = 45.0 }]

[ensemble]
topology = "seb"
members = 3
arch = { hidden = [8], bottleneck = 8, classifier = [8, 3] }

[source_training]
epochs = 2
lr = 0.1
batch_size = 20

[adaptation]
lr = 0.01
iterations = 5
batch_size = 20
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.adaptation.alpha, 1.0);
        assert_eq!(cfg.adaptation.beta, 0.5);
        assert_eq!(cfg.eval.ece_bins, 10);
        assert_eq!(cfg.ensemble.arch_specs().unwrap().len(), 3);
    }

    #[test]
    fn hash_ignores_order_seeds_and_output() {
        let a = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let reordered = SAMPLE.replace(
            "epochs = 2\nlr = 0.1\nbatch_size = 20",
            "batch_size = 20\nepochs = 2\nlr = 0.1",
        );
        assert_ne!(reordered, SAMPLE);
        let mut b = ExperimentConfig::from_toml_str(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![9];
        b.output_dir = Some("elsewhere".into());
        b.adaptation.seed = 4;
        assert_eq!(a.hash(), b.hash());
        b.adaptation.beta = 0.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        cfg.seeds = vec![1, 1];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        cfg.data.csv = Some(CsvData {
            source: "missing.csv".into(),
            target: "missing.csv".into(),
            classes: 3,
        });
        cfg.data.generator = None;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        cfg.weak_hypothesis = WeakHypothesis {
            enabled: true,
            member: 3,
        };
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::from_toml_str(&format!("bogus = 1\n{SAMPLE}")).is_err());
        let typo = SAMPLE.replace("iterations = 5", "iteratons = 5");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
    }
}
