use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Ensemble;
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_FORMAT: &str = "pdiv-ensemble";

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    ensemble: Ensemble,
}

/// Writes the whole ensemble (topology, architectures, every parameter) as
/// JSON. Floats use the shortest representation that parses back to the
/// identical bits.
pub fn save_snapshot(ens: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let snap = Snapshot {
        format: SNAPSHOT_FORMAT.to_string(),
        version: SNAPSHOT_VERSION,
        ensemble: ens.clone(),
    };
    let text = serde_json::to_string_pretty(&snap).map_err(|e| Error::Snapshot(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snap: Snapshot = serde_json::from_str(&text)
        .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
    if snap.format != SNAPSHOT_FORMAT {
        return Err(Error::Snapshot(format!("unknown format `{}`", snap.format)));
    }
    if snap.version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
            snap.version
        )));
    }
    snap.ensemble.validate()?;
    Ok(snap.ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{ArchSpec, Topology};
    use ndarray::Array2;

    #[test]
    fn round_trip_reproduces_predictions_bitwise() {
        let archs = vec![
            ArchSpec::mlp(&[9, 7], 3),
            ArchSpec::mlp(&[9, 8, 7], 3),
            ArchSpec::mlp(&[9, 7], 3),
        ];
        let ens = Ensemble::build(Topology::Dba, &archs, 4, 3, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        save_snapshot(&ens, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back, ens);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - 2.5) * 0.37 + j as f64 * 0.11);
        let (a, _) = ens.predict(x.view()).unwrap();
        let (b, _) = back.predict(x.view()).unwrap();
        for (p, q) in a.members().iter().zip(b.members()) {
            for (u, v) in p.iter().zip(q.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let ens = Ensemble::build(Topology::SeB, &[ArchSpec::mlp(&[4], 2)], 2, 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ens.json");
        save_snapshot(&ens, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_snapshot(&path), Err(Error::Snapshot(_))));
    }
}
