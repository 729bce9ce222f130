//! Pairwise two-proportion confidence intervals between domains.

use std::path::Path;

use pdiv_core::metrics::{ci_difference, CiResult};
use pdiv_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// One model's accuracy on one domain. `source` names the training domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub source: String,
    pub run: String,
    pub domain: String,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub source: String,
    pub run: String,
    pub domain_a: String,
    pub domain_b: String,
    pub p_diff: f64,
    pub se_diff: f64,
    pub lo: f64,
    pub hi: f64,
    pub overlaps_zero: bool,
}

#[derive(Deserialize)]
struct RawRow {
    source: String,
    run: String,
    domain: String,
    accuracy: Option<f64>,
    n: Option<usize>,
}

/// Reads `source,run,domain,accuracy,n` rows; a blank accuracy or count is
/// a validation error naming the line.
pub fn read_domain_accuracies(path: &Path) -> Result<Vec<DomainAccuracy>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (k, raw) in reader.deserialize::<RawRow>().enumerate() {
        let line = k as u64 + 2;
        let raw = raw.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let (Some(accuracy), Some(n)) = (raw.accuracy, raw.n) else {
            return Err(Error::Validation(format!(
                "{} line {line}: missing accuracy or sample count",
                path.display()
            )));
        };
        rows.push(DomainAccuracy {
            source: raw.source,
            run: raw.run,
            domain: raw.domain,
            accuracy,
            n,
        });
    }
    Ok(rows)
}

/// Every unordered domain pair within each (source, run) group, in order of
/// first appearance.
pub fn shift_report(rows: &[DomainAccuracy], z: f64) -> Result<Vec<ShiftRow>> {
    let mut groups: Vec<((String, String), Vec<&DomainAccuracy>)> = Vec::new();
    for r in rows {
        if r.n == 0 {
            return Err(Error::Validation(format!(
                "run {} domain {}: sample count is zero",
                r.run, r.domain
            )));
        }
        let key = (r.source.clone(), r.run.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let distinct: std::collections::HashSet<&str> = rows.iter().map(|r| r.domain.as_str()).collect();
    if distinct.len() < 2 {
        return Err(Error::Validation("shift report needs at least two domains".into()));
    }
    let mut out = Vec::new();
    for ((source, run), members) in &groups {
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let CiResult {
                    p_diff,
                    se_diff,
                    lo,
                    hi,
                    overlaps_zero,
                } = ci_difference(a.accuracy, a.n, b.accuracy, b.n, z)?;
                out.push(ShiftRow {
                    source: source.clone(),
                    run: run.clone(),
                    domain_a: a.domain.clone(),
                    domain_b: b.domain.clone(),
                    p_diff,
                    se_diff,
                    lo,
                    hi,
                    overlaps_zero,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: &str, domain: &str, accuracy: f64, n: usize) -> DomainAccuracy {
        DomainAccuracy {
            source: "src".into(),
            run: run.into(),
            domain: domain.into(),
            accuracy,
            n,
        }
    }

    #[test]
    fn identical_domains_overlap_zero() {
        let rows: Vec<_> = (0..4)
            .flat_map(|r| {
                let run = r.to_string();
                [row(&run, "a", 0.7, 200), row(&run, "b", 0.7, 200)]
            })
            .collect();
        let report = shift_report(&rows, 1.0).unwrap();
        assert_eq!(report.len(), 4);
        assert!(report.iter().all(|r| r.overlaps_zero));
    }

    #[test]
    fn row_count_is_runs_times_pairs() {
        let rows: Vec<_> = (0..3)
            .flat_map(|r| {
                let run = r.to_string();
                ["a", "b", "c"].map(|d| row(&run, d, 0.5, 10))
            })
            .collect();
        assert_eq!(shift_report(&rows, 1.0).unwrap().len(), 3 * 3);
    }

    #[test]
    fn csv_round_trip_and_missing_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("acc.csv");
        let rows = vec![row("1", "a", 0.8, 100), row("1", "b", 0.7, 100)];
        crate::table::write_csv(&rows, &p).unwrap();
        assert_eq!(read_domain_accuracies(&p).unwrap(), rows);

        std::fs::write(&p, "source,run,domain,accuracy,n\nsrc,1,a,0.8,\n").unwrap();
        assert!(matches!(read_domain_accuracies(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn single_domain_is_rejected() {
        let rows = vec![row("1", "a", 0.8, 100)];
        assert!(matches!(shift_report(&rows, 1.0), Err(Error::Validation(_))));
    }
}
