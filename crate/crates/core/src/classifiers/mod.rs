//! Base classifier families written from scratch.
//!
//! Every family follows the same contract: [`fit`] takes a row-major
//! feature matrix and 1-based label ids and returns an immutable
//! [`TrainedModel`]; [`TrainedModel::predict`] maps rows to label ids.
//! All ties resolve to the lowest label id. Distance and kernel based
//! families (kNN, RBF SVM, shrinkage LDA) z-score features with statistics
//! taken from the training rows only; trees see raw features.

mod forest;
mod knn;
mod lda;
mod svm;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, LabelId, Result};

pub use forest::RandomForest;
pub use knn::Knn;
pub use lda::{ledoit_wolf_shrinkage, LdaModel};
pub use svm::{BinarySvm, SvmModel};
pub use tree::DecisionTree;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equal-length rows. `cols` is used when `rows`
    /// is empty.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(cols);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Per-feature z-scoring captured at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.nrows().max(1) as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        for i in 0..x.nrows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..x.nrows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // zero-variance columns map to 0 instead of dividing by zero
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        let d = x.ncols();
        for row in out.data.chunks_mut(d.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    DecisionTree,
    RandomForest,
    KNearestNeighbors,
    RbfSvm,
    ShrinkageLda,
}

impl Family {
    pub fn short_name(self) -> &'static str {
        match self {
            Family::DecisionTree => "dt",
            Family::RandomForest => "rf",
            Family::KNearestNeighbors => "knn",
            Family::RbfSvm => "svm-rbf",
            Family::ShrinkageLda => "lda",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Family::DecisionTree => "Decision Tree",
            Family::RandomForest => "Random Forest",
            Family::KNearestNeighbors => "Nearest Neighbors",
            Family::RbfSvm => "RBF SVM",
            Family::ShrinkageLda => "Shrinkage LDA",
        }
    }

    fn parse(name: &str) -> Option<Self> {
        Some(match name.trim().to_ascii_lowercase().as_str() {
            "dt" | "tree" | "decision-tree" => Family::DecisionTree,
            "rf" | "forest" | "random-forest" => Family::RandomForest,
            "knn" | "nearest-neighbors" => Family::KNearestNeighbors,
            "svm-rbf" | "svm" | "rbf-svm" => Family::RbfSvm,
            "lda" | "shrinkage-lda" => Family::ShrinkageLda,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1)),
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            tree: TreeParams::default(),
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    /// `1 / (d * Var(X))` over the standardized training matrix.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    pub tol: f64,
    /// SMO iteration cap per class pair, as a multiple of the pair's rows.
    pub max_iter_factor: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Auto,
            tol: 1e-3,
            max_iter_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shrinkage {
    /// Ledoit-Wolf analytic intensity.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub shrinkage: Shrinkage,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self {
            shrinkage: Shrinkage::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    KNearestNeighbors(KnnParams),
    RbfSvm(SvmParams),
    ShrinkageLda(LdaParams),
}

/// A classifier family with its hyperparameters and seed.
///
/// Parses from and prints to strings like `rf:trees=100,depth=12` or
/// `svm-rbf:C=1,gamma=auto`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassifierSpec {
    pub hyper: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(hyper: Hyperparameters) -> Self {
        Self { hyper, seed: 0 }
    }

    pub fn default_for(family: Family) -> Self {
        Self::new(match family {
            Family::DecisionTree => Hyperparameters::DecisionTree(TreeParams::default()),
            Family::RandomForest => Hyperparameters::RandomForest(ForestParams::default()),
            Family::KNearestNeighbors => Hyperparameters::KNearestNeighbors(KnnParams::default()),
            Family::RbfSvm => Hyperparameters::RbfSvm(SvmParams::default()),
            Family::ShrinkageLda => Hyperparameters::ShrinkageLda(LdaParams::default()),
        })
    }

    pub fn family(&self) -> Family {
        match self.hyper {
            Hyperparameters::DecisionTree(_) => Family::DecisionTree,
            Hyperparameters::RandomForest(_) => Family::RandomForest,
            Hyperparameters::KNearestNeighbors(_) => Family::KNearestNeighbors,
            Hyperparameters::RbfSvm(_) => Family::RbfSvm,
            Hyperparameters::ShrinkageLda(_) => Family::ShrinkageLda,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Parses specs separated by `;` or, when no spec carries parameters,
    /// by `,` (`rf,svm-rbf,knn`).
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let parts: Vec<&str> = if s.contains(':') || s.contains(';') {
            s.split(';').collect()
        } else {
            s.split(',').collect()
        };
        parts
            .into_iter()
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidSpec {
                spec: self.to_string(),
                reason: reason.to_string(),
            })
        };
        let tree_ok = |t: &TreeParams| t.max_depth >= 1 && t.min_samples_leaf >= 1;
        match &self.hyper {
            Hyperparameters::DecisionTree(t) if !tree_ok(t) => bad("depth and leaf must be >= 1"),
            Hyperparameters::RandomForest(f) if f.trees == 0 => bad("trees must be >= 1"),
            Hyperparameters::RandomForest(f) if !tree_ok(&f.tree) => bad("depth and leaf must be >= 1"),
            Hyperparameters::RandomForest(f) if matches!(f.max_features, MaxFeatures::Count(0)) => {
                bad("mtry must be >= 1")
            }
            Hyperparameters::KNearestNeighbors(k) if k.k == 0 => bad("k must be >= 1"),
            Hyperparameters::RbfSvm(s) if !(s.c > 0.0 && s.c.is_finite()) => bad("C must be > 0"),
            Hyperparameters::RbfSvm(s) if matches!(s.gamma, Gamma::Value(g) if !(g > 0.0 && g.is_finite())) => {
                bad("gamma must be > 0")
            }
            Hyperparameters::RbfSvm(s) if !(s.tol > 0.0) || s.max_iter_factor == 0 => {
                bad("tol must be > 0 and iter >= 1")
            }
            Hyperparameters::ShrinkageLda(l)
                if matches!(l.shrinkage, Shrinkage::Fixed(v) if !(0.0..=1.0).contains(&v)) =>
            {
                bad("shrinkage must be in [0,1]")
            }
            _ => Ok(()),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl FromStr for ClassifierSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidSpec {
            spec: s.to_string(),
            reason,
        };
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, p),
            None => (s, ""),
        };
        let family = Family::parse(name).ok_or_else(|| invalid(format!("unknown family `{}`", name.trim())))?;
        let mut spec = ClassifierSpec::default_for(family);
        for kv in params.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got `{kv}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|_| invalid(format!("bad number `{value}` for `{key}`")));
            let int = || value.parse::<usize>().map_err(|_| invalid(format!("bad integer `{value}` for `{key}`")));
            if key == "seed" {
                spec.seed = value.parse().map_err(|_| invalid(format!("bad seed `{value}`")))?;
                continue;
            }
            match (&mut spec.hyper, key) {
                (Hyperparameters::DecisionTree(t), "depth") => t.max_depth = int()?,
                (Hyperparameters::DecisionTree(t), "leaf") => t.min_samples_leaf = int()?,
                (Hyperparameters::RandomForest(f), "trees") => f.trees = int()?,
                (Hyperparameters::RandomForest(f), "depth") => f.tree.max_depth = int()?,
                (Hyperparameters::RandomForest(f), "leaf") => f.tree.min_samples_leaf = int()?,
                (Hyperparameters::RandomForest(f), "bootstrap") => {
                    f.bootstrap = parse_bool(value).ok_or_else(|| invalid(format!("bad bool `{value}`")))?
                }
                (Hyperparameters::RandomForest(f), "mtry") => {
                    f.max_features = match value {
                        "sqrt" => MaxFeatures::Sqrt,
                        "all" => MaxFeatures::All,
                        _ => MaxFeatures::Count(int()?),
                    }
                }
                (Hyperparameters::KNearestNeighbors(k), "k") => k.k = int()?,
                (Hyperparameters::RbfSvm(p), "C" | "c") => p.c = num()?,
                (Hyperparameters::RbfSvm(p), "gamma") => {
                    p.gamma = if value == "auto" { Gamma::Auto } else { Gamma::Value(num()?) }
                }
                (Hyperparameters::RbfSvm(p), "tol") => p.tol = num()?,
                (Hyperparameters::RbfSvm(p), "iter") => p.max_iter_factor = int()?,
                (Hyperparameters::ShrinkageLda(p), "shrinkage") => {
                    p.shrinkage = if value == "auto" { Shrinkage::Auto } else { Shrinkage::Fixed(num()?) }
                }
                _ => return Err(invalid(format!("unknown parameter `{key}` for {}", family.short_name()))),
            }
        }
        spec.validate().map_err(|e| match e {
            Error::InvalidSpec { reason, .. } => invalid(reason),
            other => other,
        })?;
        Ok(spec)
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.family().short_name())?;
        match &self.hyper {
            Hyperparameters::DecisionTree(t) => write!(f, "depth={},leaf={}", t.max_depth, t.min_samples_leaf)?,
            Hyperparameters::RandomForest(p) => {
                let mtry = match p.max_features {
                    MaxFeatures::Sqrt => "sqrt".to_string(),
                    MaxFeatures::All => "all".to_string(),
                    MaxFeatures::Count(k) => k.to_string(),
                };
                write!(
                    f,
                    "trees={},depth={},leaf={},bootstrap={},mtry={}",
                    p.trees, p.tree.max_depth, p.tree.min_samples_leaf, p.bootstrap, mtry
                )?
            }
            Hyperparameters::KNearestNeighbors(k) => write!(f, "k={}", k.k)?,
            Hyperparameters::RbfSvm(p) => {
                let gamma = match p.gamma {
                    Gamma::Auto => "auto".to_string(),
                    Gamma::Value(g) => g.to_string(),
                };
                write!(f, "C={},gamma={},tol={},iter={}", p.c, gamma, p.tol, p.max_iter_factor)?
            }
            Hyperparameters::ShrinkageLda(p) => match p.shrinkage {
                Shrinkage::Auto => write!(f, "shrinkage=auto")?,
                Shrinkage::Fixed(v) => write!(f, "shrinkage={v}")?,
            },
        }
        if self.seed != 0 {
            write!(f, ",seed={}", self.seed)?;
        }
        Ok(())
    }
}

impl TryFrom<String> for ClassifierSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClassifierSpec> for String {
    fn from(s: ClassifierSpec) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    KNearestNeighbors(Knn),
    RbfSvm(SvmModel),
    ShrinkageLda(LdaModel),
}

/// A fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub feature_dim: usize,
    /// Size of the label space; predictions fall in `1..=n_labels`.
    pub n_labels: usize,
    pub scaler: Option<Standardizer>,
    pub kind: ModelKind,
    /// Set when an iterative solver stopped at its iteration cap.
    pub non_converged: bool,
}

/// Trains a model. `y` holds label ids in `1..=n_labels`.
pub fn fit(spec: &ClassifierSpec, x: &Matrix, y: &[LabelId], n_labels: usize) -> Result<TrainedModel> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|&&l| l == 0 || l as usize > n_labels) {
        return Err(Error::DegenerateInput(format!("label {bad} outside 1..={n_labels}")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite feature".into()));
    }
    let mut present = vec![false; n_labels];
    for &l in y {
        present[l as usize - 1] = true;
    }
    let n_present = present.iter().filter(|&&p| p).count();
    if n_present < 2 {
        return Err(Error::DegenerateInput("training labels cover fewer than two classes".into()));
    }
    if x.nrows() < n_present {
        return Err(Error::DegenerateInput(format!(
            "{} rows for {} classes",
            x.nrows(),
            n_present
        )));
    }
    let d = x.ncols();
    let all_constant = (0..d).all(|j| (1..x.nrows()).all(|i| x.get(i, j) == x.get(0, j)));
    if d == 0 || all_constant {
        return Err(Error::DegenerateInput("every feature has zero variance".into()));
    }
    // class indices 0..n_labels-1
    let classes: Vec<u8> = y.iter().map(|&l| l - 1).collect();

    let scaled = |x: &Matrix| {
        let s = Standardizer::fit(x);
        let z = s.transform(x);
        (s, z)
    };
    let mut non_converged = false;
    let (scaler, kind) = match &spec.hyper {
        Hyperparameters::DecisionTree(p) => (None, ModelKind::DecisionTree(DecisionTree::fit(x, &classes, n_labels, p))),
        Hyperparameters::RandomForest(p) => (
            None,
            ModelKind::RandomForest(RandomForest::fit(x, &classes, n_labels, p, spec.seed)),
        ),
        Hyperparameters::KNearestNeighbors(p) => {
            let (s, z) = scaled(x);
            (Some(s), ModelKind::KNearestNeighbors(Knn::fit(z, classes, n_labels, p)))
        }
        Hyperparameters::RbfSvm(p) => {
            let (s, z) = scaled(x);
            let model = SvmModel::fit(&z, &classes, n_labels, p);
            non_converged = model.pairs.iter().any(|m| !m.converged);
            if non_converged {
                log::warn!("SMO hit its iteration cap on at least one class pair");
            }
            (Some(s), ModelKind::RbfSvm(model))
        }
        Hyperparameters::ShrinkageLda(p) => {
            let (s, z) = scaled(x);
            (Some(s), ModelKind::ShrinkageLda(LdaModel::fit(&z, &classes, n_labels, p)?))
        }
    };
    Ok(TrainedModel {
        spec: *spec,
        feature_dim: d,
        n_labels,
        scaler,
        kind,
        non_converged,
    })
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<LabelId>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        if x.ncols() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: x.ncols(),
            });
        }
        let z;
        let input = match &self.scaler {
            Some(s) => {
                z = s.transform(x);
                &z
            }
            None => x,
        };
        let classes = match &self.kind {
            ModelKind::DecisionTree(m) => m.predict(input),
            ModelKind::RandomForest(m) => m.predict(input),
            ModelKind::KNearestNeighbors(m) => m.predict(input),
            ModelKind::RbfSvm(m) => m.predict(input),
            ModelKind::ShrinkageLda(m) => m.predict(input),
        };
        Ok(classes.into_iter().map(|c| c + 1).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let container = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &container)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let container: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if container.format != MODEL_FORMAT || container.version != MODEL_VERSION {
            return Err(Error::ConfigInvalid(format!(
                "unsupported model container {} v{}",
                container.format, container.version
            )));
        }
        Ok(container.model)
    }
}

const MODEL_FORMAT: &str = "tmv-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::Matrix;
    use crate::LabelId;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Gaussian blobs centred at `centers`, `per_class` rows each.
    pub fn blobs(centers: &[Vec<f64>], per_class: usize, sigma: f64, seed: u64) -> (Matrix, Vec<LabelId>) {
        let mut rng = crate::rng::substream(seed, &["blobs"]);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                rows.push(center.iter().map(|m| m + normal.sample(&mut rng)).collect::<Vec<_>>());
                y.push(c as LabelId + 1);
            }
        }
        (Matrix::from_rows(&rows, centers[0].len()).unwrap(), y)
    }

    /// Two-class XOR on [-1,1]^2 with a margin band removed around the axes.
    pub fn xor(n: usize, seed: u64) -> (Matrix, Vec<LabelId>) {
        let mut rng = crate::rng::substream(seed, &["xor"]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while rows.len() < n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            if a.abs() < 0.1 || b.abs() < 0.1 {
                continue;
            }
            y.push(if (a > 0.0) == (b > 0.0) { 1 } else { 2 });
            rows.push(vec![a, b]);
        }
        (Matrix::from_rows(&rows, 2).unwrap(), y)
    }

    pub fn accuracy(pred: &[LabelId], y: &[LabelId]) -> f64 {
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }
}
