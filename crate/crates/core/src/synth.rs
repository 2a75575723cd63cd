//! Seeded synthetic recordings with known ground truth.
//!
//! Each subject has its own task means. A row is the task mean (for the
//! session's mode of that task) plus autocorrelated isotropic Gaussian
//! noise. The first seconds of every block drift linearly from the previous
//! task's mean. Stuck-sensor plateaus and label-confused rows are injected
//! on top, and everything injected is written to a [`GenerationLog`].

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{seconds_to_rows, BlockKey, Dataset, LabelSet, RecordingRow, SubjectId, TaskBlock};
use crate::rng::{substream, StreamRng};
use crate::{Error, LabelId, Result};

/// Overwrite spans of `span_s` seconds with a constant on `channels`, once
/// per block with the given probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauInjection {
    pub probability: f64,
    pub span_s: f64,
    pub channels: Vec<usize>,
}

/// Rows of one block drawn from a wrong task's mean. `wrong_task: None`
/// picks a random other task per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedSession {
    pub subject: String,
    pub session: u32,
    pub task: LabelId,
    pub rate: f64,
    pub wrong_task: Option<LabelId>,
}

/// Confusion applied to randomly chosen blocks of surviving subjects,
/// except subject-task pairs covered by an explicit corrupted session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCorruption {
    pub block_probability: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub subjects: usize,
    pub sessions: u32,
    pub tasks: usize,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub feature_dim: usize,
    /// Leading dimensions that carry task information; the rest are noise.
    pub informative_dims: usize,
    pub class_mean_separation: f64,
    pub noise_sigma: f64,
    /// Each subject's noise level is `noise_sigma * (1 +- noise_spread)`.
    pub noise_spread: f64,
    /// AR(1) coefficient of the per-channel noise.
    pub noise_autocorrelation: f64,
    /// Alternative means per task; each (session, task) uses one of them.
    pub modes_per_task: usize,
    /// Informative dimensions set in each mean; 0 sets all of them.
    pub mean_support: usize,
    pub transition_drift_s: f64,
    /// Injected plateaus and the heavy-loss spans are placed after this
    /// offset so that they land in the window kept by trimming.
    pub retained_start_s: f64,
    pub plateau_injections: Vec<PlateauInjection>,
    /// Subjects whose every block is mostly plateau.
    pub corrupted_subject_count: usize,
    /// Share of the retained window covered in heavy-loss blocks.
    pub heavy_loss_fraction: f64,
    /// Sessions of surviving subjects covered like heavy-loss subjects.
    pub lossy_session_count: usize,
    pub corrupted_session_specs: Vec<CorruptedSession>,
    pub random_corruption: Option<RandomCorruption>,
    /// When positive, features are reported as band powers
    /// `exp(power_scale * g)` of the Gaussian value `g`.
    pub power_scale: f64,
    /// Decimal places kept in generated features.
    pub decimals: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 17,
            sessions: 6,
            tasks: 5,
            duration_s: 60.0,
            rate_hz: 10.0,
            feature_dim: 20,
            informative_dims: 20,
            class_mean_separation: 1.0,
            noise_sigma: 1.0,
            noise_spread: 0.0,
            noise_autocorrelation: 0.0,
            modes_per_task: 1,
            mean_support: 0,
            transition_drift_s: 15.0,
            retained_start_s: 18.0,
            plateau_injections: Vec::new(),
            corrupted_subject_count: 0,
            heavy_loss_fraction: 0.8,
            lossy_session_count: 0,
            corrupted_session_specs: Vec::new(),
            random_corruption: None,
            power_scale: 0.0,
            decimals: 5,
            seed: 0,
        }
    }
}

pub const PRESETS: [&str; 2] = ["paper", "small"];

impl SynthConfig {
    /// `paper`: 17 subjects, 6 sessions, 5 tasks of 60 s at 10 Hz, 20
    /// features, 5 subjects lost to plateaus. `small`: a quick variant for
    /// tests.
    pub fn preset(name: &str) -> Result<Self> {
        let paper = Self {
            informative_dims: 16,
            class_mean_separation: 0.9,
            noise_sigma: 1.0,
            noise_spread: 0.3,
            noise_autocorrelation: 0.6,
            modes_per_task: 4,
            power_scale: 0.7,
            plateau_injections: vec![
                PlateauInjection {
                    probability: 0.3,
                    span_s: 2.0,
                    channels: vec![3],
                },
                PlateauInjection {
                    probability: 0.2,
                    span_s: 1.0,
                    channels: vec![7, 8],
                },
            ],
            corrupted_subject_count: 5,
            lossy_session_count: 1,
            corrupted_session_specs: vec![
                CorruptedSession {
                    subject: "s3".into(),
                    session: 2,
                    task: 1,
                    rate: 0.8,
                    wrong_task: None,
                },
                CorruptedSession {
                    subject: "s3".into(),
                    session: 3,
                    task: 1,
                    rate: 0.8,
                    wrong_task: None,
                },
                CorruptedSession {
                    subject: "s3".into(),
                    session: 5,
                    task: 1,
                    rate: 0.9,
                    wrong_task: Some(3),
                },
            ],
            random_corruption: Some(RandomCorruption {
                block_probability: 0.12,
                min_rate: 0.5,
                max_rate: 0.9,
            }),
            ..Self::default()
        };
        match name {
            "paper" => Ok(paper),
            "small" => Ok(Self {
                subjects: 4,
                sessions: 3,
                feature_dim: 10,
                informative_dims: 4,
                corrupted_subject_count: 1,
                lossy_session_count: 0,
                corrupted_session_specs: vec![CorruptedSession {
                    subject: "s2".into(),
                    session: 2,
                    task: 1,
                    rate: 1.0,
                    wrong_task: Some(3),
                }],
                random_corruption: None,
                ..paper
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.subjects == 0 || self.sessions == 0 || self.tasks == 0 || self.feature_dim == 0 {
            return bad("subjects, sessions, tasks and feature_dim must be positive".into());
        }
        if self.tasks > LabelId::MAX as usize {
            return bad(format!("{} tasks", self.tasks));
        }
        if !(self.rate_hz > 0.0) || !(self.duration_s > 0.0) {
            return bad("rate and duration must be positive".into());
        }
        if self.informative_dims == 0 || self.informative_dims > self.feature_dim {
            return bad("informative_dims must be in 1..=feature_dim".into());
        }
        if self.mean_support > self.informative_dims {
            return bad("mean_support exceeds informative_dims".into());
        }
        if !(self.power_scale >= 0.0) {
            return bad("power_scale must be non-negative".into());
        }
        if self.modes_per_task == 0 {
            return bad("modes_per_task must be positive".into());
        }
        if !(0.0..1.0).contains(&self.noise_autocorrelation) {
            return bad("noise_autocorrelation must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.noise_spread) || !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative and noise_spread in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.heavy_loss_fraction) {
            return bad("heavy_loss_fraction must be in [0, 1]".into());
        }
        if self.retained_start_s < 0.0 || self.retained_start_s >= self.duration_s {
            return bad("retained_start_s must fall inside the block".into());
        }
        for p in &self.plateau_injections {
            if !(0.0..=1.0).contains(&p.probability) || !(p.span_s > 0.0) {
                return bad("plateau probability must be in [0, 1] and span positive".into());
            }
            if p.channels.is_empty() || p.channels.iter().any(|&c| c >= self.feature_dim) {
                return bad("plateau channels must be valid feature indices".into());
            }
        }
        if self.corrupted_subject_count > self.subjects {
            return bad("more corrupted subjects than subjects".into());
        }
        for c in &self.corrupted_session_specs {
            let idx = subject_index(&c.subject);
            if idx.map_or(true, |i| i == 0 || i > self.subjects) || c.session == 0 || c.session > self.sessions {
                return bad(format!("corrupted session {}/{} is out of range", c.subject, c.session));
            }
            if c.task == 0 || c.task as usize > self.tasks || c.wrong_task.is_some_and(|w| w == 0 || w as usize > self.tasks) {
                return bad(format!("corrupted session {}/{} names an unknown task", c.subject, c.session));
            }
            if !(0.0..=1.0).contains(&c.rate) {
                return bad("corruption rate must be in [0, 1]".into());
            }
        }
        if let Some(r) = &self.random_corruption {
            if !(0.0..=1.0).contains(&r.block_probability) || !(0.0 <= r.min_rate && r.min_rate <= r.max_rate && r.max_rate <= 1.0) {
                return bad("random corruption probabilities must be in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn label_set(&self) -> LabelSet {
        if self.tasks == 5 {
            LabelSet::tcr()
        } else {
            LabelSet::new((1..=self.tasks).map(|i| format!("T{i}"))).expect("generated names are unique")
        }
    }

    fn subject_name(i: usize) -> String {
        format!("s{i}")
    }
}

fn subject_index(name: &str) -> Option<usize> {
    name.strip_prefix('s').and_then(|n| n.parse().ok())
}

/// A constant overwrite of `rows` rows starting at row `start` of the
/// nominal block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSpan {
    pub start: usize,
    pub rows: usize,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub rate: f64,
    pub wrong_task: Option<LabelId>,
    /// Rows after the drift period that were drawn from a wrong mean.
    pub corrupted_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub key: BlockKey,
    pub mode: usize,
    pub noise_sigma: f64,
    pub plateaus: Vec<PlateauSpan>,
    pub corruption: Option<Corruption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeans {
    pub subject: SubjectId,
    pub noise_sigma: f64,
    /// Indexed by task (0-based), then mode.
    pub means: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub config: SynthConfig,
    pub heavy_loss_subjects: Vec<SubjectId>,
    pub lossy_sessions: Vec<(SubjectId, u32)>,
    pub subjects: Vec<SubjectMeans>,
    pub blocks: Vec<BlockRecord>,
}

impl GenerationLog {
    pub fn block(&self, key: &BlockKey) -> Option<&BlockRecord> {
        self.blocks.binary_search_by(|b| b.key.cmp(key)).ok().map(|i| &self.blocks[i])
    }
}

struct Plan {
    heavy: BTreeSet<usize>,
    lossy: BTreeSet<(usize, u32)>,
}

fn plan_losses(cfg: &SynthConfig) -> Plan {
    let mut rng = substream(cfg.seed, &["synth", "losses"]);
    let protected: BTreeSet<usize> = cfg
        .corrupted_session_specs
        .iter()
        .filter_map(|c| subject_index(&c.subject))
        .collect();
    let mut candidates: Vec<usize> = (1..=cfg.subjects).filter(|i| !protected.contains(i)).collect();
    candidates.shuffle(&mut rng);
    let mut heavy: BTreeSet<usize> = candidates.iter().take(cfg.corrupted_subject_count).copied().collect();
    // fall back to protected subjects only if there are not enough others
    for i in 1..=cfg.subjects {
        if heavy.len() >= cfg.corrupted_subject_count {
            break;
        }
        heavy.insert(i);
    }
    let corrupted: BTreeSet<(usize, u32)> = cfg
        .corrupted_session_specs
        .iter()
        .filter_map(|c| subject_index(&c.subject).map(|s| (s, c.session)))
        .collect();
    let mut sessions: Vec<(usize, u32)> = (1..=cfg.subjects)
        .filter(|s| !heavy.contains(s))
        .flat_map(|s| (1..=cfg.sessions).map(move |k| (s, k)))
        .filter(|p| !corrupted.contains(p))
        .collect();
    sessions.shuffle(&mut rng);
    let lossy = sessions.into_iter().take(cfg.lossy_session_count).collect();
    Plan { heavy, lossy }
}

fn gaussian(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn subject_means(cfg: &SynthConfig, subject: usize) -> SubjectMeans {
    let name = SynthConfig::subject_name(subject);
    let mut rng = substream(cfg.seed, &["synth", "means", &name]);
    let support = if cfg.mean_support == 0 {
        cfg.informative_dims
    } else {
        cfg.mean_support
    };
    let means = (0..cfg.tasks)
        .map(|_| {
            (0..cfg.modes_per_task)
                .map(|_| {
                    let mut mean = vec![0.0; cfg.feature_dim];
                    let mut dims = rand::seq::index::sample(&mut rng, cfg.informative_dims, support).into_vec();
                    dims.sort_unstable();
                    for j in dims {
                        mean[j] = cfg.class_mean_separation * gaussian(&mut rng);
                    }
                    mean
                })
                .collect()
        })
        .collect();
    let factor = 1.0 + cfg.noise_spread * (2.0 * rng.random::<f64>() - 1.0);
    SubjectMeans {
        subject: SubjectId::from(name.as_str()),
        noise_sigma: cfg.noise_sigma * factor,
        means,
    }
}

/// Mode used by each task of a session, drawn once per (subject, session).
fn session_modes(cfg: &SynthConfig, subject: &str, session: u32) -> Vec<usize> {
    let mut rng = substream(cfg.seed, &["synth", "modes", subject, &session.to_string()]);
    (0..cfg.tasks).map(|_| rng.random_range(0..cfg.modes_per_task)).collect()
}

/// Places non-overlapping spans (with a one-row gap) inside `window`.
fn place_span(
    rng: &mut StreamRng,
    taken: &[PlateauSpan],
    rows: usize,
    window: std::ops::Range<usize>,
) -> Option<usize> {
    if rows == 0 || rows > window.len() {
        return None;
    }
    for _ in 0..64 {
        let start = rng.random_range(window.start..=window.end - rows);
        let clear = taken
            .iter()
            .all(|s| start + rows + 1 <= s.start || s.start + s.rows + 1 <= start);
        if clear {
            return Some(start);
        }
    }
    None
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

struct BlockJob<'a> {
    cfg: &'a SynthConfig,
    means: &'a SubjectMeans,
    modes: &'a [usize],
    key: BlockKey,
    heavy: bool,
    corruption: Option<(f64, Option<LabelId>)>,
}

fn generate_block(job: BlockJob<'_>) -> (TaskBlock, BlockRecord) {
    let cfg = job.cfg;
    let key = job.key;
    let name = key.subject.as_str().to_string();
    let mut rng = substream(
        cfg.seed,
        &["synth", "block", &name, &key.session.to_string(), &key.task.to_string()],
    );
    let n = seconds_to_rows(cfg.duration_s, cfg.rate_hz);
    let d = cfg.feature_dim;
    let task = key.task as usize - 1;
    let mode = job.modes[task];
    let mean = &job.means.means[task][mode];
    let prev_task = if task == 0 { cfg.tasks - 1 } else { task - 1 };
    let prev_mean = &job.means.means[prev_task][job.modes[prev_task]];
    let sigma = job.means.noise_sigma;
    let phi = cfg.noise_autocorrelation;
    let innovation = sigma * (1.0 - phi * phi).sqrt();
    let drift_rows = seconds_to_rows(cfg.transition_drift_s, cfg.rate_hz);

    let mut noise: Vec<f64> = (0..d).map(|_| sigma * gaussian(&mut rng)).collect();
    let mut corrupted_rows = 0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            for e in noise.iter_mut() {
                *e = phi * *e + innovation * gaussian(&mut rng);
            }
        }
        let mut centre: &[f64] = mean;
        if let Some((rate, wrong)) = job.corruption {
            if i >= drift_rows && rng.random::<f64>() < rate {
                let w = match wrong {
                    Some(w) => w as usize - 1,
                    None => {
                        let others: Vec<usize> = (0..cfg.tasks).filter(|&k| k != task).collect();
                        *others.choose(&mut rng).unwrap_or(&task)
                    }
                };
                centre = &job.means.means[w][job.modes[w]];
                corrupted_rows += 1;
            }
        }
        let features = (0..d)
            .map(|j| {
                let mu = if i < drift_rows {
                    let a = i as f64 / drift_rows as f64;
                    prev_mean[j] + a * (centre[j] - prev_mean[j])
                } else {
                    centre[j]
                };
                let g = mu + noise[j];
                let v = if cfg.power_scale > 0.0 { (cfg.power_scale * g).exp() } else { g };
                round_to(v, cfg.decimals)
            })
            .collect();
        rows.push(RecordingRow {
            t: i as f64 / cfg.rate_hz,
            features,
        });
    }

    let window = seconds_to_rows(cfg.retained_start_s, cfg.rate_hz).min(n)..n;
    let mut plateaus: Vec<PlateauSpan> = Vec::new();
    if job.heavy {
        let span = (cfg.heavy_loss_fraction * window.len() as f64).ceil() as usize;
        if let Some(start) = place_span(&mut rng, &plateaus, span, window.clone()) {
            plateaus.push(PlateauSpan {
                start,
                rows: span,
                channels: (0..d).collect(),
            });
        }
    }
    for inj in &cfg.plateau_injections {
        if rng.random::<f64>() >= inj.probability {
            continue;
        }
        let span = seconds_to_rows(inj.span_s, cfg.rate_hz);
        if let Some(start) = place_span(&mut rng, &plateaus, span, window.clone()) {
            plateaus.push(PlateauSpan {
                start,
                rows: span,
                channels: inj.channels.clone(),
            });
        }
    }
    for p in &plateaus {
        for &c in &p.channels {
            let stuck = rows[p.start].features[c];
            for r in &mut rows[p.start..p.start + p.rows] {
                r.features[c] = stuck;
            }
        }
    }
    plateaus.sort_by_key(|p| p.start);

    let record = BlockRecord {
        key: key.clone(),
        mode,
        noise_sigma: sigma,
        plateaus,
        corruption: job.corruption.map(|(rate, wrong_task)| Corruption {
            rate,
            wrong_task,
            corrupted_rows,
        }),
    };
    let mut block = TaskBlock::new(key, rows, cfg.rate_hz);
    block.nominal_duration_s = cfg.duration_s;
    (block, record)
}

/// Generates a dataset and the log of everything injected into it.
/// The output depends only on the config, including its seed.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GenerationLog)> {
    cfg.validate()?;
    let plan = plan_losses(cfg);
    let subjects: Vec<SubjectMeans> = (1..=cfg.subjects).map(|s| subject_means(cfg, s)).collect();

    let mut jobs = Vec::new();
    for (si, means) in subjects.iter().enumerate() {
        let s = si + 1;
        let name = SynthConfig::subject_name(s);
        let mut corr_rng = substream(cfg.seed, &["synth", "corruption", &name]);
        for session in 1..=cfg.sessions {
            let modes = session_modes(cfg, &name, session);
            let lossy = plan.lossy.contains(&(s, session));
            for task in 1..=cfg.tasks as LabelId {
                let explicit = cfg
                    .corrupted_session_specs
                    .iter()
                    .find(|c| c.subject == name && c.session == session && c.task == task)
                    .map(|c| (c.rate, c.wrong_task));
                // drawn for every block so the stream does not depend on
                // which blocks are explicitly corrupted
                let draw: f64 = corr_rng.random();
                let rate: f64 = corr_rng.random();
                // subject-task pairs with an explicit scenario are left to it
                let scripted = cfg.corrupted_session_specs.iter().any(|c| c.subject == name && c.task == task);
                let random = cfg.random_corruption.as_ref().and_then(|r| {
                    (!plan.heavy.contains(&s) && !scripted && draw < r.block_probability)
                        .then(|| (r.min_rate + rate * (r.max_rate - r.min_rate), None))
                });
                jobs.push((
                    means,
                    modes.clone(),
                    BlockKey::new(name.clone(), session, task),
                    plan.heavy.contains(&s) || lossy,
                    explicit.or(random),
                ));
            }
        }
    }
    let out: Vec<(TaskBlock, BlockRecord)> = jobs
        .into_par_iter()
        .map(|(means, modes, key, heavy, corruption)| {
            generate_block(BlockJob {
                cfg,
                means,
                modes: &modes,
                key,
                heavy,
                corruption,
            })
        })
        .collect();
    let (blocks, mut records): (Vec<TaskBlock>, Vec<BlockRecord>) = out.into_iter().unzip();
    records.sort_by(|a, b| a.key.cmp(&b.key));
    let ds = Dataset::new(cfg.label_set(), blocks, cfg.rate_hz, format!("synthetic, seed {}", cfg.seed));
    let log = GenerationLog {
        config: cfg.clone(),
        heavy_loss_subjects: plan
            .heavy
            .iter()
            .map(|&s| SubjectId::from(SynthConfig::subject_name(s).as_str()))
            .collect(),
        lossy_sessions: plan
            .lossy
            .iter()
            .map(|&(s, k)| (SubjectId::from(SynthConfig::subject_name(s).as_str()), k))
            .collect(),
        subjects,
        blocks: records,
    };
    Ok((ds, log))
}
