//! Labeled datasets with controllable covariate and label distribution shift.

mod csv_io;

pub use csv_io::{load_csv, save_csv};

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{rng_for, Stream};

/// Feature matrix plus integer labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub domain: String,
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        domain: impl Into<String>,
        classes: usize,
    ) -> Result<Self> {
        let data = Dataset {
            features,
            labels,
            domain: domain.into(),
            classes,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::Validation(format!(
                "label {bad} is not below the class count {}",
                self.classes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn class_proportions(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.class_counts()
            .into_iter()
            .map(|c| c as f64 / n)
            .collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain.clone(),
            classes: self.classes,
        }
    }
}

/// Feature-space transform applied to the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Rotates every consecutive coordinate pair `(0,1), (2,3), …` by the
    /// same angle; a trailing odd coordinate is left alone.
    Rotation { degrees: f64 },
    /// `x ↦ A x + b`.
    Affine { matrix: Vec<Vec<f64>>, shift: Vec<f64> },
    /// Additive isotropic Gaussian noise.
    Noise { sigma: f64 },
}

impl Transform {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Transform::Rotation { degrees } if !degrees.is_finite() => {
                Err(Error::Config("rotation angle must be finite".into()))
            }
            Transform::Noise { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")))
            }
            Transform::Affine { matrix, shift } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("affine matrix must be {dim}x{dim}")));
                }
                if shift.len() != dim {
                    return Err(Error::Config(format!("affine shift must have length {dim}")));
                }
                let det = determinant(matrix);
                if !det.is_finite() || det.abs() < 1e-12 {
                    return Err(Error::Config(format!(
                        "affine matrix is singular (det = {det:e})"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn apply<R: Rng + ?Sized>(&self, x: &mut Array2<f64>, rng: &mut R) {
        match self {
            Transform::Rotation { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                for mut row in x.rows_mut() {
                    let mut k = 0;
                    while k + 1 < row.len() {
                        let (a, b) = (row[k], row[k + 1]);
                        row[k] = c * a - s * b;
                        row[k + 1] = s * a + c * b;
                        k += 2;
                    }
                }
            }
            Transform::Affine { matrix, shift } => {
                let a = Array2::from_shape_fn((matrix.len(), matrix.len()), |(i, j)| matrix[i][j]);
                let b = Array1::from(shift.clone());
                *x = x.dot(&a.t()) + &b;
            }
            Transform::Noise { sigma } => {
                if *sigma > 0.0 {
                    for v in x.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v += sigma * z;
                    }
                }
            }
        }
    }
}

fn determinant(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    let mut m: Vec<Vec<f64>> = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        let pivot_row = m[col].clone();
        for row in m.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (v, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * p;
            }
        }
    }
    det
}

fn default_modes() -> usize {
    1
}

/// Class-conditional Gaussian mixture: each class owns `modes_per_class`
/// isotropic components whose means are drawn uniformly from
/// `[-mean_scale, mean_scale]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Samples per domain.
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    #[serde(default = "default_modes")]
    pub modes_per_class: usize,
    pub mean_scale: f64,
    pub sigma: f64,
    /// Applied in order to the target features only.
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.dim == 0 || self.modes_per_class == 0 {
            return Err(Error::Config("dim and modes_per_class must be >= 1".into()));
        }
        if self.n < self.classes * 10 {
            return Err(Error::Config(format!(
                "n = {} is below 10 samples per class ({} classes)",
                self.n, self.classes
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) || !self.mean_scale.is_finite() {
            return Err(Error::Config("sigma and mean_scale must be finite, sigma >= 0".into()));
        }
        self.transforms.iter().try_for_each(|t| t.validate(self.dim))
    }
}

fn sample_domain<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    means: &Array2<f64>,
    rng: &mut R,
) -> (Array2<f64>, Vec<usize>) {
    let base = spec.n / spec.classes;
    let extra = spec.n % spec.classes;
    let mut labels = Vec::with_capacity(spec.n);
    for c in 0..spec.classes {
        let count = base + usize::from(c < extra);
        labels.extend(std::iter::repeat_n(c, count));
    }
    let mut features = Array2::zeros((spec.n, spec.dim));
    let mut seen = vec![0usize; spec.classes];
    for (i, &y) in labels.iter().enumerate() {
        let mode = seen[y] % spec.modes_per_class;
        seen[y] += 1;
        let mean = means.row(y * spec.modes_per_class + mode);
        for j in 0..spec.dim {
            let z: f64 = StandardNormal.sample(rng);
            features[[i, j]] = mean[j] + spec.sigma * z;
        }
    }
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(rng);
    let features = features.select(Axis(0), &order);
    let labels = order.iter().map(|&i| labels[i]).collect();
    (features, labels)
}

/// Draws a balanced source domain and an independently sampled target domain
/// from the same mixture, then applies the transforms to the target.
pub fn make_shifted_pair(spec: &GeneratorSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = rng_for(seed, Stream::Data);
    let components = spec.classes * spec.modes_per_class;
    let means = Array2::from_shape_fn((components, spec.dim), |_| {
        rng.random_range(-spec.mean_scale..=spec.mean_scale)
    });
    let (xs, ys) = sample_domain(spec, &means, &mut rng);
    let (mut xt, yt) = sample_domain(spec, &means, &mut rng);
    for t in &spec.transforms {
        t.apply(&mut xt, &mut rng);
    }
    Ok((
        Dataset::new(xs, ys, "source", spec.classes)?,
        Dataset::new(xt, yt, "target", spec.classes)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    TweakOne,
    MinorityClass,
    None,
}

/// Label distribution shift protocol: `k` randomly chosen classes keep a
/// fraction `p` of their samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub p: f64,
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl ShiftSpec {
    pub fn none() -> Self {
        ShiftSpec {
            kind: ShiftKind::None,
            p: 1.0,
            k: 1,
            seed: 0,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.kind == ShiftKind::None {
            return Ok(());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!("retention p must be in (0, 1], got {}", self.p)));
        }
        match self.kind {
            ShiftKind::TweakOne if self.k != 1 => {
                Err(Error::Config(format!("tweak-one shift needs k = 1, got {}", self.k)))
            }
            ShiftKind::MinorityClass if self.k == 0 || self.k >= classes => Err(Error::Config(
                format!("minority-class shift needs 1 <= k < {classes}, got {}", self.k),
            )),
            _ => Ok(()),
        }
    }

    /// The classes this spec subsamples, sorted.
    pub fn affected_classes(&self, classes: usize) -> Result<Vec<usize>> {
        self.validate(classes)?;
        if self.kind == ShiftKind::None {
            return Ok(Vec::new());
        }
        Ok(choose_classes(&mut rng_for(self.seed, Stream::LabelShift), classes, self.k))
    }
}

fn choose_classes<R: Rng + ?Sized>(rng: &mut R, classes: usize, k: usize) -> Vec<usize> {
    let mut chosen = index::sample(rng, classes, k).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Number of samples a class of size `count` keeps (round half up).
pub fn retained_count(count: usize, p: f64) -> usize {
    (p * count as f64 + 0.5).floor() as usize
}

/// Subsamples the affected classes; other rows are kept verbatim. Row order
/// is shuffled deterministically.
pub fn apply_label_shift(data: &Dataset, spec: &ShiftSpec) -> Result<Dataset> {
    spec.validate(data.classes)?;
    if spec.kind == ShiftKind::None {
        return Ok(data.clone());
    }
    let mut rng = rng_for(spec.seed, Stream::LabelShift);
    let affected = choose_classes(&mut rng, data.classes, spec.k);
    let mut keep: Vec<usize> = Vec::with_capacity(data.len());
    for c in 0..data.classes {
        let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == c).collect();
        if affected.contains(&c) {
            let n_keep = retained_count(members.len(), spec.p).min(members.len());
            let picks = index::sample(&mut rng, members.len(), n_keep);
            keep.extend(picks.iter().map(|j| members[j]));
        } else {
            keep.extend(members);
        }
    }
    keep.shuffle(&mut rng);
    Ok(data.select(&keep))
}
