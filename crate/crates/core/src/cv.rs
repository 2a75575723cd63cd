//! Time-wise cross-validation.
//!
//! Each block's retained window is cut into contiguous, equally long
//! subsets (seven 6 s subsets of the 42 s window by default). Fold `k` of
//! every block forms the test set of split `k`; the other non-discarded
//! folds of the same subject form its training set. Rows are never
//! shuffled, so every train and test range is an interval in time.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit, ClassifierSpec, Matrix};
use crate::cleaning::exceeds;
use crate::dataset::{seconds_to_rows, BlockKey, Dataset, SubjectId};
use crate::{rng, Error, LabelId, Result, FRACTION_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds_per_task: usize,
    pub subset_seconds: f64,
    /// Start of the retained window within each block.
    pub window_start_s: f64,
    /// A fold losing strictly more than this share of its nominal rows is
    /// discarded.
    pub fold_loss_threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds_per_task: 7,
            subset_seconds: 6.0,
            window_start_s: 18.0,
            fold_loss_threshold: 0.65,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSlot {
    /// Row index range within the block.
    pub rows: Range<usize>,
    pub loss: f64,
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFolds {
    pub key: BlockKey,
    /// Index of the block in the dataset the plan was built from.
    pub block_index: usize,
    pub folds: Vec<FoldSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub config: CvConfig,
    pub fold_nominal_rows: usize,
    pub blocks: Vec<BlockFolds>,
}

impl FoldPlan {
    pub fn assignment(&self, key: &BlockKey, fold: usize) -> Option<&Range<usize>> {
        self.blocks
            .iter()
            .find(|b| &b.key == key)
            .and_then(|b| b.folds.get(fold))
            .map(|f| &f.rows)
    }

    /// Discarded (block, fold) pairs with their loss fractions.
    pub fn discarded(&self) -> Vec<(BlockKey, usize, f64)> {
        self.blocks
            .iter()
            .flat_map(|b| {
                b.folds
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.discarded)
                    .map(move |(k, f)| (b.key.clone(), k, f.loss))
            })
            .collect()
    }

    /// Fold indices that are kept in at least one block.
    pub fn usable_folds(&self) -> BTreeSet<usize> {
        self.blocks
            .iter()
            .flat_map(|b| b.folds.iter().enumerate().filter(|(_, f)| !f.discarded).map(|(k, _)| k))
            .collect()
    }

    /// Restricts the plan to blocks whose key passes `keep`.
    pub fn retain_blocks(&self, ds: &Dataset, mut keep: impl FnMut(&BlockKey) -> bool) -> Result<(Dataset, FoldPlan)> {
        let sub = ds.filter_blocks(|b| keep(&b.key));
        let plan = partition_folds(&sub, &self.config)?;
        Ok((sub, plan))
    }
}

/// Cuts each block's window into folds and marks lossy folds as discarded.
pub fn partition_folds(ds: &Dataset, cfg: &CvConfig) -> Result<FoldPlan> {
    if cfg.folds_per_task == 0 || !(cfg.subset_seconds > 0.0) {
        return Err(Error::ConfigInvalid("need at least one fold of positive length".into()));
    }
    let rate = ds.sample_rate_hz;
    let fold_nominal_rows = seconds_to_rows(cfg.subset_seconds, rate);
    let mut blocks = Vec::with_capacity(ds.blocks.len());
    for (block_index, block) in ds.blocks.iter().enumerate() {
        if block.nominal_duration_s - cfg.window_start_s + FRACTION_EPS < cfg.subset_seconds {
            return Err(Error::BlockTooShort(block.key.clone()));
        }
        let edge = |k: usize| cfg.window_start_s + k as f64 * cfg.subset_seconds;
        // first row at or after each boundary; rows are sorted by t
        let cut = |s: f64| block.rows.partition_point(|r| r.t + FRACTION_EPS < s);
        let folds = (0..cfg.folds_per_task)
            .map(|k| {
                let rows = cut(edge(k))..cut(edge(k + 1));
                let loss = if fold_nominal_rows == 0 {
                    0.0
                } else {
                    (1.0 - rows.len() as f64 / fold_nominal_rows as f64).clamp(0.0, 1.0)
                };
                FoldSlot {
                    discarded: exceeds(loss, cfg.fold_loss_threshold),
                    rows,
                    loss,
                }
            })
            .collect();
        blocks.push(BlockFolds {
            key: block.key.clone(),
            block_index,
            folds,
        });
    }
    Ok(FoldPlan {
        config: cfg.clone(),
        fold_nominal_rows,
        blocks,
    })
}

/// Row ranges of one block used by a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBlock {
    pub block_index: usize,
    pub train: Vec<Range<usize>>,
    pub test: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub test_fold: usize,
    pub train_folds: Vec<usize>,
    pub blocks: Vec<SplitBlock>,
}

/// A row addressed by (block index, row index within block).
pub type RowRef = (usize, usize);

impl Split {
    /// Training and test rows restricted to the given dataset blocks.
    pub fn rows_for(&self, block_indices: &[usize]) -> (Vec<RowRef>, Vec<RowRef>) {
        let wanted: BTreeSet<usize> = block_indices.iter().copied().collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for b in self.blocks.iter().filter(|b| wanted.contains(&b.block_index)) {
            for r in &b.train {
                train.extend(r.clone().map(|i| (b.block_index, i)));
            }
            if let Some(r) = &b.test {
                test.extend(r.clone().map(|i| (b.block_index, i)));
            }
        }
        (train, test)
    }
}

/// One split per usable fold index, in fold order.
pub fn make_splits(plan: &FoldPlan) -> Result<Vec<Split>> {
    let usable = plan.usable_folds();
    if usable.len() < 2 {
        return Err(Error::InsufficientFolds(usable.len()));
    }
    Ok(usable
        .iter()
        .map(|&k| Split {
            test_fold: k,
            train_folds: usable.iter().copied().filter(|&f| f != k).collect(),
            blocks: plan
                .blocks
                .iter()
                .map(|b| SplitBlock {
                    block_index: b.block_index,
                    train: b
                        .folds
                        .iter()
                        .enumerate()
                        .filter(|(f, slot)| *f != k && !slot.discarded && !slot.rows.is_empty())
                        .map(|(_, slot)| slot.rows.clone())
                        .collect(),
                    test: b.folds.get(k).filter(|s| !s.discarded && !s.rows.is_empty()).map(|s| s.rows.clone()),
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub fold: usize,
    pub t: f64,
    pub truth: LabelId,
    pub predicted: LabelId,
}

/// Out-of-fold predictions for one block, ordered by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTimeline {
    pub key: BlockKey,
    pub points: Vec<TimelinePoint>,
}

impl BlockTimeline {
    pub fn accuracy(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.truth == p.predicted).count() as f64 / self.points.len() as f64
    }

    pub fn predictions(&self) -> Vec<LabelId> {
        self.points.iter().map(|p| p.predicted).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject: SubjectId,
    pub accuracy: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRowCount {
    pub key: BlockKey,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub classifier: ClassifierSpec,
    pub per_subject: Vec<SubjectScore>,
    pub mean_accuracy: f64,
    pub timelines: Vec<BlockTimeline>,
    /// Training rows drawn from each block, summed over splits.
    pub training_rows: Vec<BlockRowCount>,
    pub non_converged_fits: usize,
}

impl EvalResult {
    pub fn mean_runtime_s(&self) -> f64 {
        if self.per_subject.is_empty() {
            return 0.0;
        }
        self.per_subject.iter().map(|s| s.runtime_s).sum::<f64>() / self.per_subject.len() as f64
    }

    pub fn total_runtime_s(&self) -> f64 {
        self.per_subject.iter().map(|s| s.runtime_s).sum()
    }

    pub fn timeline(&self, key: &BlockKey) -> Option<&BlockTimeline> {
        self.timelines
            .binary_search_by(|t| t.key.cmp(key))
            .ok()
            .map(|i| &self.timelines[i])
    }

    /// JSON view with timelines stored elsewhere.
    pub fn summary(&self, timelines_ref: &str) -> EvalSummary {
        EvalSummary {
            classifier: self.classifier,
            per_subject: self.per_subject.clone(),
            mean_accuracy: self.mean_accuracy,
            timelines_ref: timelines_ref.to_string(),
        }
    }

    /// Writes `subject,session,task,fold,t,true,predicted`.
    pub fn write_timelines_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "subject,session,task,fold,t,true,predicted").map_err(io)?;
        for tl in &self.timelines {
            for p in &tl.points {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    tl.key.subject, tl.key.session, tl.key.task, p.fold, p.t, p.truth, p.predicted
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub classifier: ClassifierSpec,
    pub per_subject: Vec<SubjectScore>,
    pub mean_accuracy: f64,
    pub timelines_ref: String,
}

struct SubjectEval {
    score: SubjectScore,
    timelines: Vec<BlockTimeline>,
    training_rows: BTreeMap<BlockKey, usize>,
    non_converged: usize,
}

fn gather(ds: &Dataset, refs: &[RowRef]) -> Result<(Matrix, Vec<LabelId>)> {
    let d = ds.feature_dim().unwrap_or(0);
    let mut data = Vec::with_capacity(refs.len() * d);
    let mut y = Vec::with_capacity(refs.len());
    for &(b, r) in refs {
        let block = &ds.blocks[b];
        data.extend_from_slice(&block.rows[r].features);
        y.push(block.key.task);
    }
    Ok((Matrix::new(refs.len(), d, data)?, y))
}

fn evaluate_subject(
    ds: &Dataset,
    splits: &[Split],
    spec: &ClassifierSpec,
    seed: u64,
    subject: &SubjectId,
) -> Result<Option<SubjectEval>> {
    let blocks = ds.subject_block_indices(subject);
    let n_labels = ds.label_set.len();
    let mut split_acc = Vec::new();
    let mut runtime = 0.0;
    let mut points: BTreeMap<usize, Vec<TimelinePoint>> = BTreeMap::new();
    let mut training_rows: BTreeMap<BlockKey, usize> = BTreeMap::new();
    let mut non_converged = 0;
    for split in splits {
        let (train, test) = split.rows_for(&blocks);
        if test.is_empty() || train.is_empty() {
            continue;
        }
        let (x_train, y_train) = gather(ds, &train)?;
        let (x_test, y_test) = gather(ds, &test)?;
        let fit_seed = rng::derive_seed(
            seed,
            &[
                "fit",
                spec.family().short_name(),
                &spec.seed.to_string(),
                subject.as_str(),
                &split.test_fold.to_string(),
            ],
        );
        let started = Instant::now();
        let model = fit(&spec.with_seed(fit_seed), &x_train, &y_train, n_labels)?;
        let predicted = model.predict(&x_test)?;
        runtime += started.elapsed().as_secs_f64();
        if model.non_converged {
            non_converged += 1;
        }
        for &(b, _) in &train {
            *training_rows.entry(ds.blocks[b].key.clone()).or_insert(0) += 1;
        }
        let correct = predicted.iter().zip(&y_test).filter(|(p, t)| p == t).count();
        split_acc.push(correct as f64 / y_test.len() as f64);
        for (((b, r), truth), pred) in test.iter().zip(y_test).zip(predicted) {
            points.entry(*b).or_default().push(TimelinePoint {
                fold: split.test_fold,
                t: ds.blocks[*b].rows[*r].t,
                truth,
                predicted: pred,
            });
        }
    }
    if split_acc.is_empty() {
        return Ok(None);
    }
    let timelines = points
        .into_iter()
        .map(|(b, mut pts)| {
            pts.sort_by(|a, b| a.t.total_cmp(&b.t));
            BlockTimeline {
                key: ds.blocks[b].key.clone(),
                points: pts,
            }
        })
        .collect();
    Ok(Some(SubjectEval {
        score: SubjectScore {
            subject: subject.clone(),
            accuracy: split_acc.iter().sum::<f64>() / split_acc.len() as f64,
            runtime_s: runtime,
        },
        timelines,
        training_rows,
        non_converged,
    }))
}

/// Runs time-wise CV of one classifier, training one model per subject and
/// split. Subjects run in parallel; results are reduced in subject order.
pub fn evaluate(ds: &Dataset, plan: &FoldPlan, spec: &ClassifierSpec, seed: u64) -> Result<EvalResult> {
    let splits = make_splits(plan)?;
    let subjects = ds.subjects();
    let per: Vec<Option<SubjectEval>> = subjects
        .par_iter()
        .map(|s| evaluate_subject(ds, &splits, spec, seed, s))
        .collect::<Result<_>>()?;
    let per: Vec<SubjectEval> = per.into_iter().flatten().collect();
    if per.is_empty() {
        return Err(Error::InsufficientFolds(0));
    }
    let mean_accuracy = per.iter().map(|s| s.score.accuracy).sum::<f64>() / per.len() as f64;
    let mut timelines = Vec::new();
    let mut training_rows = Vec::new();
    let mut per_subject = Vec::new();
    let mut non_converged_fits = 0;
    for s in per {
        per_subject.push(s.score);
        timelines.extend(s.timelines);
        training_rows.extend(s.training_rows.into_iter().map(|(key, rows)| BlockRowCount { key, rows }));
        non_converged_fits += s.non_converged;
    }
    timelines.sort_by(|a, b| a.key.cmp(&b.key));
    training_rows.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(EvalResult {
        classifier: *spec,
        per_subject,
        mean_accuracy,
        timelines,
        training_rows,
        non_converged_fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelSet, RecordingRow, TaskBlock};

    /// A cleaned 42 s block: rows at t = 18.0, 18.1, ..., 59.9.
    fn retained_block(subject: &str, session: u32, task: LabelId, value: f64) -> TaskBlock {
        let rows = (180..600)
            .map(|i| RecordingRow {
                t: i as f64 / 10.0,
                features: vec![value + (i % 7) as f64 * 0.01, (i % 5) as f64],
            })
            .collect();
        TaskBlock::new(BlockKey::new(subject, session, task), rows, 10.0)
    }

    fn ds(blocks: Vec<TaskBlock>) -> Dataset {
        Dataset::new(LabelSet::tcr(), blocks, 10.0, "test")
    }

    #[test]
    fn full_block_gives_seven_folds_of_sixty() {
        let plan = partition_folds(&ds(vec![retained_block("s1", 1, 1, 0.0)]), &CvConfig::default()).unwrap();
        let folds = &plan.blocks[0].folds;
        assert_eq!(folds.len(), 7);
        for (k, f) in folds.iter().enumerate() {
            assert_eq!(f.rows, 60 * k..60 * (k + 1));
            assert!(!f.discarded);
        }
    }

    #[test]
    fn heavily_depleted_fold_is_discarded() {
        let mut b = retained_block("s1", 1, 1, 0.0);
        // fold 3 spans rows 180..240 of the block; keep 10 of its 60 rows
        b.rows.drain(180..230);
        let plan = partition_folds(&ds(vec![b]), &CvConfig::default()).unwrap();
        let f = &plan.blocks[0].folds[3];
        assert_eq!(f.rows.len(), 10);
        assert!(f.discarded);
        assert!((f.loss - 50.0 / 60.0).abs() < 1e-12);
        assert_eq!(plan.discarded().len(), 1);
    }

    #[test]
    fn uniform_ten_percent_loss_keeps_every_fold() {
        let mut b = retained_block("s1", 1, 1, 0.0);
        // drop every tenth row; recount per fold directly
        b.rows = b.rows.into_iter().enumerate().filter(|(i, _)| i % 10 != 9).map(|(_, r)| r).collect();
        let expected: Vec<usize> = (0..7)
            .map(|k| {
                b.rows
                    .iter()
                    .filter(|r| r.t + 1e-9 >= 18.0 + 6.0 * k as f64 && r.t + 1e-9 < 18.0 + 6.0 * (k + 1) as f64)
                    .count()
            })
            .collect();
        let plan = partition_folds(&ds(vec![b]), &CvConfig::default()).unwrap();
        let got: Vec<usize> = plan.blocks[0].folds.iter().map(|f| f.rows.len()).collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec![54; 7]);
        assert!(plan.blocks[0].folds.iter().all(|f| !f.discarded));
    }

    #[test]
    fn too_short_window_is_an_error() {
        let mut b = retained_block("s1", 1, 1, 0.0);
        b.nominal_duration_s = 20.0;
        assert!(matches!(
            partition_folds(&ds(vec![b]), &CvConfig::default()),
            Err(Error::BlockTooShort(_))
        ));
    }

    #[test]
    fn splits_follow_usable_folds() {
        let plan = partition_folds(&ds(vec![retained_block("s1", 1, 1, 0.0)]), &CvConfig::default()).unwrap();
        let splits = make_splits(&plan).unwrap();
        assert_eq!(splits.len(), 7);
        for (k, s) in splits.iter().enumerate() {
            assert_eq!(s.test_fold, k);
            assert!(!s.train_folds.contains(&k));
            assert_eq!(s.blocks[0].test, Some(60 * k..60 * (k + 1)));
        }

        let mut b = retained_block("s1", 1, 1, 0.0);
        b.rows.drain(180..240);
        let plan = partition_folds(&ds(vec![b]), &CvConfig::default()).unwrap();
        let splits = make_splits(&plan).unwrap();
        assert_eq!(splits.iter().map(|s| s.test_fold).collect::<Vec<_>>(), vec![0, 1, 2, 4, 5, 6]);
        assert!(splits.iter().all(|s| !s.train_folds.contains(&3)));
    }

    #[test]
    fn one_surviving_fold_cannot_split() {
        let mut b = retained_block("s1", 1, 1, 0.0);
        b.rows.truncate(60);
        let plan = partition_folds(&ds(vec![b]), &CvConfig::default()).unwrap();
        assert!(matches!(make_splits(&plan), Err(Error::InsufficientFolds(1))));
    }

    #[test]
    fn train_and_test_never_overlap() {
        let data = ds((1..=5).map(|t| retained_block("s1", 1, t, t as f64)).collect());
        let plan = partition_folds(&data, &CvConfig::default()).unwrap();
        for split in make_splits(&plan).unwrap() {
            let (train, test) = split.rows_for(&[0, 1, 2, 3, 4]);
            let tr: BTreeSet<_> = train.iter().collect();
            assert!(test.iter().all(|r| !tr.contains(r)));
            assert_eq!(train.len() + test.len(), 5 * 420);
        }
    }

    #[test]
    fn constant_classifier_is_at_chance() {
        // a stump forced to one leaf predicts the first class everywhere
        let data = ds((1..=5).map(|t| retained_block("s1", 1, t, 0.0)).collect());
        let plan = partition_folds(&data, &CvConfig::default()).unwrap();
        let spec: ClassifierSpec = "dt:depth=1,leaf=10000".parse().unwrap();
        let r = evaluate(&data, &plan, &spec, 1).unwrap();
        assert!((r.mean_accuracy - 0.2).abs() < 1e-12);
        assert_eq!(r.timelines.len(), 5);
        assert!(r.timelines.iter().all(|t| t.points.iter().all(|p| p.predicted == 1)));
    }

    #[test]
    fn separable_tasks_are_learned() {
        let data = ds((1..=5).map(|t| retained_block("s1", 1, t, t as f64 * 3.0)).collect());
        let plan = partition_folds(&data, &CvConfig::default()).unwrap();
        let spec: ClassifierSpec = "rf:trees=10".parse().unwrap();
        let r = evaluate(&data, &plan, &spec, 1).unwrap();
        assert!(r.mean_accuracy >= 0.95);
        // every retained row predicted exactly once
        assert_eq!(r.timelines.iter().map(|t| t.points.len()).sum::<usize>(), 5 * 420);
    }

    #[test]
    fn all_discarded_is_insufficient() {
        let mut b = retained_block("s1", 1, 1, 0.0);
        b.rows.clear();
        let data = ds(vec![b]);
        let plan = partition_folds(&data, &CvConfig::default()).unwrap();
        assert!(matches!(
            evaluate(&data, &plan, &ClassifierSpec::default_for(crate::classifiers::Family::KNearestNeighbors), 0),
            Err(Error::InsufficientFolds(0))
        ));
    }
}
