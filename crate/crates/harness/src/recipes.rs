//! Experiment recipes: plain runs, anchor ablations and β sweeps, each
//! writing records, traces and adapted snapshots under one output directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pdiv_core::adapt::{AdaptationConfig, AnchorStrategy};
use pdiv_core::datagen::{load_csv, save_csv};
use pdiv_core::ensemble::{load_snapshot, save_snapshot};
use pdiv_core::metrics::EvalReport;
use pdiv_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::pipeline::{adapt_seed, load_data, prepare_seed, PreparedSeed};
use crate::results::{ResultsStore, RunKey, RunRecord, RunStatus};
use crate::shift::DomainAccuracy;
use crate::table::write_csv;

/// One adaptation setting applied to every seed.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub adaptation: AdaptationConfig,
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    recipe: &'a str,
    out: &'a Path,
    store: &'a ResultsStore,
}

impl Job<'_> {
    fn key(&self, seed: u64, variant: &Variant) -> RunKey {
        RunKey {
            config_hash: self.hash.clone(),
            seed,
            recipe: self.recipe.to_string(),
            variant: variant.name.clone(),
        }
    }

    fn stem(&self, seed: u64, variant: &Variant) -> String {
        let name: String = variant
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
            .collect();
        format!("{}-s{seed}-{}-{name}", &self.hash[..12], self.recipe)
    }

    fn blank(&self, seed: u64, variant: &Variant) -> RunRecord {
        RunRecord {
            config_hash: self.hash.clone(),
            seed,
            recipe: self.recipe.to_string(),
            variant: variant.name.clone(),
            strategy: variant.adaptation.anchor_strategy.to_string(),
            beta: variant.adaptation.beta,
            status: RunStatus::Failed,
            error: None,
            source_accuracy: None,
            source_n: 0,
            target_n: 0,
            source_only_accuracy: None,
            adapted_accuracy: None,
            source_only: None,
            adapted: None,
            trace_path: None,
            snapshot_path: None,
            wall_time_secs: 0.0,
        }
    }

    fn adapt_one(&self, prepared: &PreparedSeed, variant: &Variant) -> Result<RunRecord> {
        let adapted = adapt_seed(prepared, &variant.adaptation, self.cfg.eval.ece_bins)?;
        let stem = self.stem(prepared.seed, variant);
        let trace_path = self.out.join("traces").join(format!("{stem}.jsonl"));
        adapted.trace.write_jsonl(&trace_path)?;
        let snapshot_path = self.out.join("snapshots").join(format!("{stem}.json"));
        save_snapshot(&adapted.ensemble, &snapshot_path)?;
        Ok(RunRecord {
            status: RunStatus::Ok,
            source_accuracy: Some(prepared.source_accuracy),
            source_n: prepared.source.len(),
            target_n: prepared.target.len(),
            source_only_accuracy: Some(prepared.source_only.accuracy),
            adapted_accuracy: Some(adapted.adapted.accuracy),
            source_only: Some(prepared.source_only.clone()),
            adapted: Some(adapted.adapted),
            trace_path: Some(trace_path),
            snapshot_path: Some(snapshot_path),
            wall_time_secs: prepared.prepare_secs + adapted.adapt_secs,
            ..self.blank(prepared.seed, variant)
        })
    }

    fn seed(&self, seed: u64, variants: &[Variant]) -> Result<Vec<RunRecord>> {
        let pending: Vec<bool> = variants
            .iter()
            .map(|v| self.store.completed(&self.key(seed, v)).is_none())
            .collect();
        let prepared = if pending.iter().any(|&p| p) {
            let started = Instant::now();
            match prepare_seed(self.cfg, seed) {
                Ok(p) => Some(p),
                Err(e) => {
                    let mut out = Vec::new();
                    for (v, _) in variants.iter().zip(&pending).filter(|(_, &p)| p) {
                        let rec = RunRecord {
                            error: Some(e.to_string()),
                            wall_time_secs: started.elapsed().as_secs_f64(),
                            ..self.blank(seed, v)
                        };
                        self.store.append(&rec)?;
                        out.push(rec);
                    }
                    return Ok(out);
                }
            }
        } else {
            None
        };
        let mut out = Vec::with_capacity(variants.len());
        for (v, &todo) in variants.iter().zip(&pending) {
            if !todo {
                out.push(self.store.completed(&self.key(seed, v)).cloned().expect("checked"));
                continue;
            }
            let prepared = prepared.as_ref().expect("prepared when pending");
            let started = Instant::now();
            let rec = self.adapt_one(prepared, v).unwrap_or_else(|e| RunRecord {
                error: Some(e.to_string()),
                wall_time_secs: started.elapsed().as_secs_f64(),
                ..self.blank(seed, v)
            });
            self.store.append(&rec)?;
            out.push(rec);
        }
        Ok(out)
    }
}

/// Runs every variant on every seed, skipping (config, seed, variant) keys
/// already completed in `out/runs.jsonl`. Seeds run in parallel; records come
/// back in seed order, then variant order.
pub fn execute(
    cfg: &ExperimentConfig,
    recipe: &str,
    variants: &[Variant],
    out: &Path,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    for v in variants {
        v.adaptation.validate()?;
    }
    for sub in ["traces", "snapshots"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let store = ResultsStore::open(out)?;
    let job = Job {
        cfg,
        hash: cfg.hash(),
        recipe,
        out,
        store: &store,
    };
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| job.seed(seed, variants))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// The configured adaptation on every seed. Also writes the per-seed source
/// and target accuracies of the source-only ensemble to `domain_accuracy.csv`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunRecord>> {
    let variant = Variant {
        name: cfg.adaptation.anchor_strategy.to_string(),
        adaptation: cfg.adaptation.clone(),
    };
    let records = execute(cfg, "run", &[variant], out)?;
    let mut rows = Vec::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let (Some(src), Some(tgt)) = (r.source_accuracy, r.source_only_accuracy) else {
            continue;
        };
        for (domain, accuracy, n) in [("source", src, r.source_n), ("target", tgt, r.target_n)] {
            rows.push(DomainAccuracy {
                source: "source".into(),
                run: r.seed.to_string(),
                domain: domain.into(),
                accuracy,
                n,
            });
        }
    }
    write_csv(&rows, &out.join("domain_accuracy.csv"))?;
    Ok(records)
}

/// Column order of the anchor ablation table.
pub const ABLATION_ORDER: [AnchorStrategy; 4] = AnchorStrategy::ALL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: String,
    pub fixed: f64,
    pub random: f64,
    pub ensemble: f64,
    pub whp: f64,
}

impl AblationRow {
    pub fn get(&self, s: AnchorStrategy) -> f64 {
        match s {
            AnchorStrategy::Fixed => self.fixed,
            AnchorStrategy::Random => self.random,
            AnchorStrategy::Ensemble => self.ensemble,
            AnchorStrategy::Whp => self.whp,
        }
    }
}

/// All four anchor strategies on the same seeds. The fixed anchor is the
/// injected weak member when injection is on, else the configured index or
/// member 0. Returns one row per fully successful seed plus a `mean` row.
pub fn ablate_anchor(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<RunRecord>, Vec<AblationRow>)> {
    let members = cfg.ensemble.arch_specs()?.len();
    if members < 3 {
        return Err(Error::Config(format!(
            "the anchor ablation includes whp and needs at least 3 members, got {members}"
        )));
    }
    let fixed_index = if cfg.weak_hypothesis.enabled {
        cfg.weak_hypothesis.member
    } else {
        cfg.adaptation.anchor_index.unwrap_or(0)
    };
    let variants: Vec<Variant> = ABLATION_ORDER
        .iter()
        .map(|&s| {
            let mut a = cfg.adaptation.clone();
            a.anchor_strategy = s;
            a.anchor_index = (s == AnchorStrategy::Fixed).then_some(fixed_index);
            Variant {
                name: s.to_string(),
                adaptation: a,
            }
        })
        .collect();
    let records = execute(cfg, "ablate_anchor", &variants, out)?;
    let mut rows = Vec::new();
    for chunk in records.chunks(variants.len()) {
        let acc: Vec<Option<f64>> = chunk.iter().map(|r| r.adapted_accuracy).collect();
        if let [Some(fixed), Some(random), Some(ensemble), Some(whp)] = acc[..] {
            rows.push(AblationRow {
                seed: chunk[0].seed.to_string(),
                fixed,
                random,
                ensemble,
                whp,
            });
        }
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |s| rows.iter().map(|r: &AblationRow| r.get(s)).sum::<f64>() / n;
        rows.push(AblationRow {
            seed: "mean".into(),
            fixed: mean(AnchorStrategy::Fixed),
            random: mean(AnchorStrategy::Random),
            ensemble: mean(AnchorStrategy::Ensemble),
            whp: mean(AnchorStrategy::Whp),
        });
    }
    write_csv(&rows, &out.join("ablate_anchor.csv"))?;
    Ok((records, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub beta: f64,
    pub mean_accuracy: f64,
    pub seeds: usize,
}

pub fn validate_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::Config("beta list is empty".into()));
    }
    let mut seen = HashSet::new();
    for &b in betas {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {b}")));
        }
        if !seen.insert(b.to_bits()) {
            return Err(Error::Config(format!("duplicate beta {b}")));
        }
    }
    Ok(())
}

/// One adaptation per (β, seed). Rows follow the order of `betas`.
pub fn sweep_beta(
    cfg: &ExperimentConfig,
    betas: &[f64],
    out: &Path,
) -> Result<(Vec<RunRecord>, Vec<BetaRow>)> {
    validate_betas(betas)?;
    let variants: Vec<Variant> = betas
        .iter()
        .map(|&b| {
            let mut a = cfg.adaptation.clone();
            a.beta = b;
            Variant {
                name: format!("beta={b}"),
                adaptation: a,
            }
        })
        .collect();
    let records = execute(cfg, "sweep_beta", &variants, out)?;
    let rows: Vec<BetaRow> = betas
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let acc: Vec<f64> = records
                .chunks(variants.len())
                .filter_map(|c| c[k].adapted_accuracy)
                .collect();
            BetaRow {
                beta,
                mean_accuracy: if acc.is_empty() {
                    f64::NAN
                } else {
                    acc.iter().sum::<f64>() / acc.len() as f64
                },
                seeds: acc.len(),
            }
        })
        .collect();
    write_csv(&rows, &out.join("sweep_beta.csv"))?;
    Ok((records, rows))
}

/// Writes `seed<s>/source.csv` and `seed<s>/target.csv` for every seed.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let (source, target) = load_data(cfg, seed)?;
        let dir = out.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, data) in [("source", &source), ("target", &target)] {
            let p = dir.join(format!("{name}.csv"));
            save_csv(data, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Scores a saved ensemble on a labeled CSV.
pub fn eval_snapshot(snapshot: &Path, data: &Path, bins: usize) -> Result<EvalReport> {
    let ens = load_snapshot(snapshot)?;
    let ds = load_csv(data, Some(ens.classes))?;
    let (preds, _) = ens.predict(ds.features.view())?;
    EvalReport::evaluate(&preds, &ds.labels, bins)
}
