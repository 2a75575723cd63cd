//! Two-phase Time Majority Voting.
//!
//! Phase 1 benchmarks every classifier and keeps the top two. Blocks on
//! which the best classifier scores below the exclusion threshold are
//! dropped. Phase 2 re-runs the top two on the remaining blocks and combines
//! them per timepoint: agreement is kept, disagreement falls back to the
//! block's majority label under the best classifier.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierSpec;
use crate::cv::{evaluate, BlockTimeline, EvalResult, FoldPlan};
use crate::dataset::{BlockKey, Dataset, SubjectId};
use crate::{rng, Error, LabelId, Result, FRACTION_EPS};

/// Serializes `None` as `-1`, the excluded-block sentinel.
pub mod sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    /// Values that can sit next to the sentinel.
    pub trait Number: Sized + Serialize {
        fn from_f64(v: f64) -> Option<Self>;
    }

    impl Number for f64 {
        fn from_f64(v: f64) -> Option<Self> {
            Some(v)
        }
    }

    impl Number for u8 {
        fn from_f64(v: f64) -> Option<Self> {
            (v.fract() == 0.0 && (0.0..=255.0).contains(&v)).then_some(v as u8)
        }
    }

    pub fn serialize<T: Number, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => v.serialize(s),
            None => (-1).serialize(s),
        }
    }

    pub fn deserialize<'de, T: Number, D: Deserializer<'de>>(d: D) -> Result<Option<T>, D::Error> {
        let v = f64::deserialize(d)?;
        if v == -1.0 {
            return Ok(None);
        }
        T::from_f64(v)
            .map(Some)
            .ok_or_else(|| serde::de::Error::custom(format!("{v} is out of range")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClassifier {
    pub spec: ClassifierSpec,
    pub mean_accuracy: f64,
    /// Mean per-subject fit and predict time; excluded from serialized
    /// rankings because it varies between runs.
    #[serde(skip)]
    pub mean_runtime_s: f64,
}

/// Classifiers by descending mean accuracy; ties go to the faster one,
/// then to the earlier spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneRanking {
    pub entries: Vec<RankedClassifier>,
}

impl PhaseOneRanking {
    pub fn best(&self) -> &RankedClassifier {
        &self.entries[0]
    }

    pub fn second(&self) -> &RankedClassifier {
        &self.entries[1]
    }
}

/// Orders already-evaluated classifiers.
pub fn rank_results(results: &[EvalResult]) -> Result<PhaseOneRanking> {
    if results.len() < 2 {
        return Err(Error::TooFewSpecs(results.len()));
    }
    let mut entries: Vec<RankedClassifier> = results
        .iter()
        .map(|r| RankedClassifier {
            spec: r.classifier,
            mean_accuracy: r.mean_accuracy,
            mean_runtime_s: r.mean_runtime_s(),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_accuracy
            .total_cmp(&a.mean_accuracy)
            .then(a.mean_runtime_s.total_cmp(&b.mean_runtime_s))
    });
    Ok(PhaseOneRanking { entries })
}

/// Runs CV for every spec and ranks them. Evaluations are returned in the
/// order of `specs`.
pub fn rank_phase1(
    ds: &Dataset,
    plan: &FoldPlan,
    specs: &[ClassifierSpec],
    seed: u64,
) -> Result<(PhaseOneRanking, Vec<EvalResult>)> {
    if specs.len() < 2 {
        return Err(Error::TooFewSpecs(specs.len()));
    }
    let results = specs
        .iter()
        .map(|s| {
            log::info!("phase 1: evaluating {s}");
            evaluate(ds, plan, s, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rank_results(&results)?, results))
}

/// Mode of the predictions; ties go to the lowest label id.
pub fn session_majority(predictions: &[LabelId]) -> Result<LabelId> {
    if predictions.is_empty() {
        return Err(Error::EmptyTimeline);
    }
    let mut counts = [0u32; LabelId::MAX as usize + 1];
    for &p in predictions {
        counts[p as usize] += 1;
    }
    let mut best = 0;
    for (label, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = label;
        }
    }
    Ok(best as LabelId)
}

/// The combiner: agreement wins, otherwise the block majority.
pub fn vote(best: LabelId, second: LabelId, majority: LabelId) -> LabelId {
    if best == second {
        best
    } else {
        majority
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStatus {
    pub key: BlockKey,
    pub majority: LabelId,
    pub accuracy: f64,
    pub excluded: bool,
    /// `accuracy`, or `-1` when excluded.
    #[serde(with = "sentinel")]
    pub retained_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTaskStatus {
    pub threshold: f64,
    pub blocks: Vec<BlockStatus>,
}

impl SessionTaskStatus {
    pub fn get(&self, key: &BlockKey) -> Option<&BlockStatus> {
        self.blocks.binary_search_by(|b| b.key.cmp(key)).ok().map(|i| &self.blocks[i])
    }

    pub fn is_excluded(&self, key: &BlockKey) -> bool {
        self.get(key).is_some_and(|b| b.excluded)
    }

    pub fn excluded(&self) -> impl Iterator<Item = &BlockStatus> {
        self.blocks.iter().filter(|b| b.excluded)
    }
}

/// `accuracy < threshold`, strict.
fn below(accuracy: f64, threshold: f64) -> bool {
    accuracy < threshold - FRACTION_EPS
}

/// Marks blocks whose best-classifier accuracy is strictly below
/// `threshold`. Takes the best classifier's Phase-1 timelines.
pub fn exclude_noisy_sessions(timelines: &[BlockTimeline], threshold: f64) -> Result<SessionTaskStatus> {
    let mut blocks = timelines
        .iter()
        .filter(|t| !t.points.is_empty())
        .map(|t| {
            let accuracy = t.accuracy();
            let excluded = below(accuracy, threshold);
            Ok(BlockStatus {
                key: t.key.clone(),
                majority: session_majority(&t.predictions())?,
                accuracy,
                excluded,
                retained_accuracy: (!excluded).then_some(accuracy),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    blocks.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(SessionTaskStatus { threshold, blocks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmvPoint {
    pub fold: usize,
    pub t: f64,
    pub truth: LabelId,
    #[serde(with = "sentinel")]
    pub best: Option<LabelId>,
    #[serde(with = "sentinel")]
    pub second: Option<LabelId>,
    #[serde(with = "sentinel")]
    pub tmv: Option<LabelId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub key: BlockKey,
    pub excluded: bool,
    #[serde(with = "sentinel")]
    pub majority: Option<LabelId>,
    #[serde(with = "sentinel")]
    pub best_accuracy: Option<f64>,
    #[serde(with = "sentinel")]
    pub second_accuracy: Option<f64>,
    #[serde(with = "sentinel")]
    pub tmv_accuracy: Option<f64>,
    pub points: Vec<TmvPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutcome {
    pub subject: SubjectId,
    pub best_accuracy: f64,
    pub second_accuracy: f64,
    pub tmv_accuracy: f64,
    pub retained_blocks: usize,
    pub retained_rows: usize,
}

/// Wall-clock seconds spent in Phase 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeBreakdown {
    pub best_fit_s: f64,
    pub second_fit_s: f64,
    pub vote_s: f64,
}

impl RuntimeBreakdown {
    pub fn total_s(&self) -> f64 {
        self.best_fit_s + self.second_fit_s + self.vote_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmvResult {
    pub best: ClassifierSpec,
    pub second: ClassifierSpec,
    pub frozen_majority: bool,
    pub blocks: Vec<BlockOutcome>,
    pub subjects: Vec<SubjectOutcome>,
    pub best_mean: f64,
    pub second_mean: f64,
    pub tmv_mean: f64,
    /// Kept out of the serialized result; see [`TmvResult::runtime`].
    #[serde(skip)]
    pub timing: Phase2Timing,
}

/// Volatile timing of a Phase-2 run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phase2Timing {
    pub breakdown: RuntimeBreakdown,
    /// Per subject: (best fit seconds, second fit seconds).
    pub per_subject: Vec<(SubjectId, f64, f64)>,
}

impl TmvResult {
    pub fn runtime(&self) -> RuntimeBreakdown {
        self.timing.breakdown
    }

    pub fn block(&self, key: &BlockKey) -> Option<&BlockOutcome> {
        self.blocks.binary_search_by(|b| b.key.cmp(key)).ok().map(|i| &self.blocks[i])
    }

    pub fn retained(&self) -> impl Iterator<Item = &BlockOutcome> {
        self.blocks.iter().filter(|b| !b.excluded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase2Options {
    /// Vote with the Phase-1 majority instead of recomputing it.
    pub freeze_majority: bool,
}

impl Default for Phase2Options {
    fn default() -> Self {
        Self { freeze_majority: false }
    }
}

fn accuracy_of(points: &[TmvPoint], pick: impl Fn(&TmvPoint) -> Option<LabelId>) -> Option<f64> {
    let scored: Vec<bool> = points.iter().filter_map(|p| pick(p).map(|l| l == p.truth)).collect();
    if scored.is_empty() {
        None
    } else {
        Some(scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64)
    }
}

/// Aligns two timelines of one block by timestamp and votes per point.
fn combine(best: Option<&BlockTimeline>, second: Option<&BlockTimeline>, majority: LabelId) -> Vec<TmvPoint> {
    let mut points: Vec<TmvPoint> = Vec::new();
    let mut push = |fold, t, truth, b: Option<LabelId>, s: Option<LabelId>| {
        let tmv = match (b, s) {
            (Some(b), Some(s)) => Some(vote(b, s, majority)),
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        };
        points.push(TmvPoint {
            fold,
            t,
            truth,
            best: b,
            second: s,
            tmv,
        });
    };
    let empty = Vec::new();
    let bp = best.map_or(&empty, |t| &t.points);
    let sp = second.map_or(&empty, |t| &t.points);
    let (mut i, mut j) = (0, 0);
    while i < bp.len() || j < sp.len() {
        let take_b = j >= sp.len() || (i < bp.len() && bp[i].t < sp[j].t);
        let take_s = i >= bp.len() || (j < sp.len() && sp[j].t < bp[i].t);
        if take_b {
            let p = bp[i];
            push(p.fold, p.t, p.truth, Some(p.predicted), None);
            i += 1;
        } else if take_s {
            let p = sp[j];
            push(p.fold, p.t, p.truth, None, Some(p.predicted));
            j += 1;
        } else {
            let (p, q) = (bp[i], sp[j]);
            push(p.fold, p.t, p.truth, Some(p.predicted), Some(q.predicted));
            i += 1;
            j += 1;
        }
    }
    points
}

/// Retrains the top two classifiers without the excluded blocks and votes.
pub fn run_phase2(
    ds: &Dataset,
    plan: &FoldPlan,
    ranking: &PhaseOneRanking,
    status: &SessionTaskStatus,
    phase1_best: &EvalResult,
    seed: u64,
    options: Phase2Options,
) -> Result<(TmvResult, [EvalResult; 2])> {
    let (retained, plan2) = plan.retain_blocks(ds, |k| !status.is_excluded(k))?;
    if retained.blocks.is_empty() {
        return Err(Error::NoRetainedBlocks);
    }
    let phase_seed = rng::derive_seed(seed, &["phase2"]);
    let best_spec = ranking.best().spec;
    let second_spec = ranking.second().spec;
    log::info!("phase 2: evaluating {best_spec}");
    let best_eval = evaluate(&retained, &plan2, &best_spec, phase_seed)?;
    log::info!("phase 2: evaluating {second_spec}");
    let second_eval = evaluate(&retained, &plan2, &second_spec, phase_seed)?;

    let started = Instant::now();
    let mut blocks = Vec::with_capacity(ds.blocks.len());
    for block in &ds.blocks {
        let key = &block.key;
        if status.is_excluded(key) {
            let points = phase1_best
                .timeline(key)
                .map(|t| {
                    t.points
                        .iter()
                        .map(|p| TmvPoint {
                            fold: p.fold,
                            t: p.t,
                            truth: p.truth,
                            best: None,
                            second: None,
                            tmv: None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            blocks.push(BlockOutcome {
                key: key.clone(),
                excluded: true,
                majority: None,
                best_accuracy: None,
                second_accuracy: None,
                tmv_accuracy: None,
                points,
            });
            continue;
        }
        let bt = best_eval.timeline(key);
        let st = second_eval.timeline(key);
        if bt.is_none() && st.is_none() {
            continue;
        }
        let majority = if options.freeze_majority {
            status.get(key).map(|s| s.majority)
        } else {
            bt.filter(|t| !t.points.is_empty())
                .map(|t| session_majority(&t.predictions()))
                .transpose()?
        };
        let points = match majority {
            Some(m) => combine(bt, st, m),
            // no best-classifier predictions: fall back to the second
            None => combine(None, st, 0),
        };
        blocks.push(BlockOutcome {
            key: key.clone(),
            excluded: false,
            majority,
            best_accuracy: accuracy_of(&points, |p| p.best),
            second_accuracy: accuracy_of(&points, |p| p.second),
            tmv_accuracy: accuracy_of(&points, |p| p.tmv),
            points,
        });
    }
    let vote_s = started.elapsed().as_secs_f64();

    let mut subjects = Vec::new();
    for subject in retained.subjects() {
        let mine: Vec<&BlockOutcome> = blocks
            .iter()
            .filter(|b| !b.excluded && b.key.subject == subject && b.tmv_accuracy.is_some())
            .collect();
        if mine.is_empty() {
            continue;
        }
        let mean = |f: &dyn Fn(&BlockOutcome) -> Option<f64>| {
            let v: Vec<f64> = mine.iter().filter_map(|b| f(b)).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        subjects.push(SubjectOutcome {
            subject: subject.clone(),
            best_accuracy: mean(&|b| b.best_accuracy),
            second_accuracy: mean(&|b| b.second_accuracy),
            tmv_accuracy: mean(&|b| b.tmv_accuracy),
            retained_blocks: mine.len(),
            retained_rows: retained
                .subject_block_indices(&subject)
                .iter()
                .map(|&i| retained.blocks[i].len())
                .sum(),
        });
    }
    if subjects.is_empty() {
        return Err(Error::NoRetainedBlocks);
    }
    let global = |f: fn(&SubjectOutcome) -> f64| subjects.iter().map(f).sum::<f64>() / subjects.len() as f64;
    let runtime_of = |e: &EvalResult, s: &SubjectId| {
        e.per_subject
            .iter()
            .find(|p| &p.subject == s)
            .map_or(0.0, |p| p.runtime_s)
    };
    let timing = Phase2Timing {
        breakdown: RuntimeBreakdown {
            best_fit_s: best_eval.mean_runtime_s(),
            second_fit_s: second_eval.mean_runtime_s(),
            vote_s: vote_s / subjects.len() as f64,
        },
        per_subject: subjects
            .iter()
            .map(|s| {
                (
                    s.subject.clone(),
                    runtime_of(&best_eval, &s.subject),
                    runtime_of(&second_eval, &s.subject),
                )
            })
            .collect(),
    };
    let result = TmvResult {
        best: best_spec,
        second: second_spec,
        frozen_majority: options.freeze_majority,
        best_mean: global(|s| s.best_accuracy),
        second_mean: global(|s| s.second_accuracy),
        tmv_mean: global(|s| s.tmv_accuracy),
        subjects,
        blocks,
        timing,
    };
    Ok((result, [best_eval, second_eval]))
}

/// Checks the structural guarantees of a Phase-2 result. Returns one
/// message per violation.
pub fn check_invariants(result: &TmvResult, status: &SessionTaskStatus, phase2: &[EvalResult]) -> Vec<String> {
    let mut problems = Vec::new();
    for b in &result.blocks {
        if b.excluded {
            if b.points.iter().any(|p| p.best.is_some() || p.second.is_some() || p.tmv.is_some()) {
                problems.push(format!("{}: excluded block carries predictions", b.key));
            }
            if !status.is_excluded(&b.key) {
                problems.push(format!("{}: excluded in result but not in status", b.key));
            }
            continue;
        }
        let Some(m) = b.majority else { continue };
        let mut both_right = 0;
        for p in &b.points {
            match (p.best, p.second, p.tmv) {
                (Some(x), Some(y), Some(z)) => {
                    if x == y && z != x {
                        problems.push(format!("{} t={}: agreement not kept", b.key, p.t));
                    }
                    if x != y && z != m {
                        problems.push(format!("{} t={}: disagreement did not use the majority", b.key, p.t));
                    }
                    if x == y && x == p.truth {
                        both_right += 1;
                    }
                }
                (Some(_), Some(_), None) => problems.push(format!("{} t={}: missing vote", b.key, p.t)),
                _ => {}
            }
        }
        if let Some(acc) = b.tmv_accuracy {
            let n = b.points.iter().filter(|p| p.tmv.is_some()).count();
            if n > 0 && acc + FRACTION_EPS < both_right as f64 / n as f64 {
                problems.push(format!("{}: accuracy below the agreement bound", b.key));
            }
        }
    }
    for e in phase2 {
        for r in &e.training_rows {
            if status.is_excluded(&r.key) && r.rows > 0 {
                problems.push(format!("{}: excluded block used for training {}", r.key, e.classifier));
            }
        }
    }
    let rt = result.runtime();
    if rt.best_fit_s < 0.0 || rt.second_fit_s < 0.0 || rt.vote_s < 0.0 {
        problems.push("negative runtime component".into());
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::{SubjectScore, TimelinePoint};

    #[test]
    fn vote_follows_agreement_then_majority() {
        assert_eq!(vote(1, 1, 1), 1);
        assert_eq!(vote(2, 2, 1), 2);
        assert_eq!(vote(1, 3, 1), 1);
        assert_eq!(vote(2, 3, 1), 1);
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(session_majority(&[1, 1, 1, 2, 3]).unwrap(), 1);
        assert_eq!(session_majority(&[2, 2, 3, 3]).unwrap(), 2);
        assert_eq!(session_majority(&[5, 4]).unwrap(), 4);
        assert!(matches!(session_majority(&[]), Err(Error::EmptyTimeline)));
    }

    fn eval(spec: &str, acc: f64, runtime: f64) -> EvalResult {
        EvalResult {
            classifier: spec.parse().unwrap(),
            per_subject: vec![SubjectScore {
                subject: "s1".into(),
                accuracy: acc,
                runtime_s: runtime,
            }],
            mean_accuracy: acc,
            timelines: vec![],
            training_rows: vec![],
            non_converged_fits: 0,
        }
    }

    #[test]
    fn ranking_orders_by_accuracy_then_runtime() {
        let r = rank_results(&[eval("dt", 0.5, 1.0), eval("rf", 0.7, 9.0), eval("knn", 0.7, 5.0)]).unwrap();
        let names: Vec<String> = r.entries.iter().map(|e| e.spec.family().short_name().to_string()).collect();
        assert_eq!(names, ["knn", "rf", "dt"]);
        assert!(matches!(rank_results(&[eval("dt", 0.5, 1.0)]), Err(Error::TooFewSpecs(1))));
    }

    fn timeline(key: BlockKey, truth: LabelId, preds: &[LabelId]) -> BlockTimeline {
        BlockTimeline {
            key,
            points: preds
                .iter()
                .enumerate()
                .map(|(i, &p)| TimelinePoint {
                    fold: i / 6,
                    t: 18.0 + i as f64 * 0.1,
                    truth,
                    predicted: p,
                })
                .collect(),
        }
    }

    #[test]
    fn exclusion_is_strict_at_half() {
        let half = timeline(BlockKey::new("s1", 1, 1), 1, &[1, 1, 2, 2]);
        let below = timeline(BlockKey::new("s1", 2, 1), 1, &[1, 2, 2, 2]);
        let st = exclude_noisy_sessions(&[half, below], 0.5).unwrap();
        assert!(!st.blocks[0].excluded);
        assert_eq!(st.blocks[0].retained_accuracy, Some(0.5));
        assert!(st.blocks[1].excluded);
        assert_eq!(st.blocks[1].retained_accuracy, None);
        let json = serde_json::to_string(&st.blocks[1]).unwrap();
        assert!(json.contains("\"retained_accuracy\":-1"), "{json}");
        let back: BlockStatus = serde_json::from_str(&json).unwrap();
        assert_eq!(back, st.blocks[1]);
    }

    #[test]
    fn disagreement_with_true_majority_is_always_right() {
        let key = BlockKey::new("s1", 1, 2);
        let best = timeline(key.clone(), 2, &[2, 2, 3, 4, 2, 1]);
        let second = timeline(key, 2, &[3, 2, 1, 1, 5, 3]);
        let pts = combine(Some(&best), Some(&second), 2);
        assert!(pts.iter().all(|p| p.tmv == Some(2)));
        assert_eq!(accuracy_of(&pts, |p| p.tmv), Some(1.0));
        assert_eq!(accuracy_of(&pts, |p| p.best), Some(0.5));
    }

    #[test]
    fn missing_prediction_falls_back_to_the_other() {
        let key = BlockKey::new("s1", 1, 2);
        let best = timeline(key.clone(), 2, &[2, 3]);
        let mut second = timeline(key, 2, &[4, 4, 4]);
        second.points.remove(0);
        let pts = combine(Some(&best), Some(&second), 2);
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].tmv, Some(2));
        assert_eq!(pts[1].tmv, Some(2));
        assert_eq!(pts[2].best, None);
        assert_eq!(pts[2].tmv, Some(4));
    }

    #[test]
    fn sentinel_round_trips_points() {
        let p = TmvPoint {
            fold: 0,
            t: 18.0,
            truth: 3,
            best: None,
            second: Some(2),
            tmv: None,
        };
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"best\":-1") && json.contains("\"tmv\":-1"));
        assert_eq!(serde_json::from_str::<TmvPoint>(&json).unwrap(), p);
    }
}
