//! Transition trimming, plateau removal and loss-based exclusion.
//!
//! Loss is measured against the rows a complete block would still hold
//! after the transition trim (42 s worth at the defaults), because the trim
//! is a planned removal rather than lost data. [`LossDenominator::Raw`]
//! switches to the full nominal block length instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{seconds_to_rows, BlockKey, Dataset, RecordingRow, SubjectId, TaskBlock};
use crate::{Error, Result, FRACTION_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossDenominator {
    /// Nominal rows remaining after the transition trim.
    #[default]
    PostTrim,
    /// Nominal rows of the full block.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub transition_fraction: f64,
    pub plateau_seconds: f64,
    pub subject_loss_threshold: f64,
    pub session_loss_threshold: f64,
    pub loss_denominator: LossDenominator,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            transition_fraction: 0.30,
            plateau_seconds: 1.4,
            subject_loss_threshold: 0.65,
            session_loss_threshold: 0.65,
            loss_denominator: LossDenominator::PostTrim,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if !(0.0..1.0).contains(&self.transition_fraction) {
            return bad(format!("transition_fraction {} not in [0,1)", self.transition_fraction));
        }
        for (name, v) in [
            ("subject_loss_threshold", self.subject_loss_threshold),
            ("session_loss_threshold", self.session_loss_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} {v} not in (0,1)"));
            }
        }
        if !(self.plateau_seconds > 0.0) || self.plateau_threshold_rows(sample_rate_hz) < 2 {
            return bad(format!(
                "plateau of {} s at {} Hz is shorter than two rows",
                self.plateau_seconds, sample_rate_hz
            ));
        }
        Ok(())
    }

    /// Minimum run length, in rows, that counts as a plateau.
    pub fn plateau_threshold_rows(&self, sample_rate_hz: f64) -> usize {
        (self.plateau_seconds * sample_rate_hz - FRACTION_EPS).ceil().max(0.0) as usize
    }

    /// Start of the retained window within a block, in seconds.
    pub fn trim_cutoff_s(&self, nominal_duration_s: f64) -> f64 {
        self.transition_fraction * nominal_duration_s
    }
}

/// Drops rows recorded during the transition phase at the start of a block.
pub fn trim_transition(block: &TaskBlock, cfg: &CleaningConfig) -> TaskBlock {
    let cutoff = cfg.trim_cutoff_s(block.nominal_duration_s);
    let rows = block
        .rows
        .iter()
        .filter(|r| r.t + FRACTION_EPS >= cutoff)
        .cloned()
        .collect();
    block.with_rows(rows)
}

/// Two rows are neighbours when no sample is missing between them.
fn adjacent(a: &RecordingRow, b: &RecordingRow, sample_rate_hz: f64) -> bool {
    b.t - a.t <= 1.5 / sample_rate_hz
}

/// Marks rows that sit inside a run of at least `threshold` identical
/// consecutive values in any feature column.
pub(crate) fn plateau_mask(rows: &[RecordingRow], threshold: usize, sample_rate_hz: f64) -> Vec<bool> {
    let n = rows.len();
    let mut mask = vec![false; n];
    if n == 0 || threshold == 0 {
        return mask;
    }
    let d = rows[0].features.len();
    for col in 0..d {
        let mut start = 0;
        for i in 1..=n {
            let continues = i < n
                && adjacent(&rows[i - 1], &rows[i], sample_rate_hz)
                && rows[i].features[col] == rows[i - 1].features[col];
            if !continues {
                if i - start >= threshold {
                    mask[start..i].iter_mut().for_each(|m| *m = true);
                }
                start = i;
            }
        }
    }
    mask
}

/// Removes stuck-sensor plateaus. A run only continues across rows that are
/// one sample apart, so rows left behind by an earlier removal never merge
/// into a new run.
pub fn remove_plateaus(block: &TaskBlock, cfg: &CleaningConfig, sample_rate_hz: f64) -> (TaskBlock, usize) {
    let threshold = cfg.plateau_threshold_rows(sample_rate_hz);
    let mask = plateau_mask(&block.rows, threshold, sample_rate_hz);
    let removed = mask.iter().filter(|&&m| m).count();
    let rows = block
        .rows
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r.clone())
        .collect();
    (block.with_rows(rows), removed)
}

/// Row accounting for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLoss {
    pub key: BlockKey,
    /// Rows present at ingestion.
    pub nominal_rows: usize,
    pub retained_rows: usize,
    pub trimmed_rows: usize,
    pub plateau_rows: usize,
    /// Rows a complete block would keep after trimming.
    pub expected_rows: usize,
    /// Rows a complete block would hold.
    pub full_rows: usize,
}

impl BlockLoss {
    fn denominator(&self, mode: LossDenominator) -> usize {
        match mode {
            LossDenominator::PostTrim => self.expected_rows,
            LossDenominator::Raw => self.full_rows,
        }
    }
}

fn loss_fraction(retained: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        return 0.0;
    }
    (1.0 - retained as f64 / denominator as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLoss {
    pub subject: SubjectId,
    pub session: u32,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectLoss {
    pub subject: SubjectId,
    pub loss: f64,
}

/// Per-block row accounting plus derived session and subject losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossLedger {
    pub denominator: LossDenominator,
    pub blocks: Vec<BlockLoss>,
    pub sessions: Vec<SessionLoss>,
    pub subjects: Vec<SubjectLoss>,
}

impl LossLedger {
    /// Builds the ledger from per-block entries in any order.
    pub fn from_blocks(mut blocks: Vec<BlockLoss>, denominator: LossDenominator) -> Self {
        blocks.sort_by(|a, b| a.key.cmp(&b.key));
        let mut sessions: BTreeMap<(SubjectId, u32), (usize, usize)> = BTreeMap::new();
        let mut subjects: BTreeMap<SubjectId, (usize, usize)> = BTreeMap::new();
        for b in &blocks {
            let den = b.denominator(denominator);
            let s = sessions.entry((b.key.subject.clone(), b.key.session)).or_default();
            s.0 += b.retained_rows;
            s.1 += den;
            let s = subjects.entry(b.key.subject.clone()).or_default();
            s.0 += b.retained_rows;
            s.1 += den;
        }
        Self {
            denominator,
            sessions: sessions
                .into_iter()
                .map(|((subject, session), (r, d))| SessionLoss {
                    subject,
                    session,
                    loss: loss_fraction(r, d),
                })
                .collect(),
            subjects: subjects
                .into_iter()
                .map(|(subject, (r, d))| SubjectLoss {
                    subject,
                    loss: loss_fraction(r, d),
                })
                .collect(),
            blocks,
        }
    }

    pub fn block(&self, key: &BlockKey) -> Option<&BlockLoss> {
        self.blocks
            .binary_search_by(|b| b.key.cmp(key))
            .ok()
            .map(|i| &self.blocks[i])
    }

    pub fn block_loss(&self, key: &BlockKey) -> Option<f64> {
        self.block(key)
            .map(|b| loss_fraction(b.retained_rows, b.denominator(self.denominator)))
    }

    pub fn session_loss(&self, subject: &SubjectId, session: u32) -> Option<f64> {
        self.sessions
            .iter()
            .find(|s| &s.subject == subject && s.session == session)
            .map(|s| s.loss)
    }

    pub fn subject_loss(&self, subject: &SubjectId) -> Option<f64> {
        self.subjects.iter().find(|s| &s.subject == subject).map(|s| s.loss)
    }

    /// Retained rows per subject.
    pub fn retained_by_subject(&self) -> BTreeMap<SubjectId, usize> {
        let mut out = BTreeMap::new();
        for b in &self.blocks {
            *out.entry(b.key.subject.clone()).or_insert(0) += b.retained_rows;
        }
        out
    }
}

/// Trims one block and removes its plateaus.
pub fn clean_block(block: &TaskBlock, cfg: &CleaningConfig, sample_rate_hz: f64) -> (TaskBlock, BlockLoss) {
    let trimmed = trim_transition(block, cfg);
    let trimmed_rows = block.len() - trimmed.len();
    let (cleaned, plateau_rows) = remove_plateaus(&trimmed, cfg, sample_rate_hz);
    let full_rows = block.nominal_rows();
    let cutoff_rows = seconds_to_rows(cfg.trim_cutoff_s(block.nominal_duration_s), sample_rate_hz);
    let loss = BlockLoss {
        key: block.key.clone(),
        nominal_rows: block.len(),
        retained_rows: cleaned.len(),
        trimmed_rows,
        plateau_rows,
        expected_rows: full_rows.saturating_sub(cutoff_rows),
        full_rows,
    };
    (cleaned, loss)
}

/// Applies trimming and plateau removal to every block.
pub fn clean_dataset(ds: &Dataset, cfg: &CleaningConfig) -> Result<(Dataset, LossLedger)> {
    cfg.validate(ds.sample_rate_hz)?;
    let (blocks, losses): (Vec<_>, Vec<_>) = ds
        .blocks
        .iter()
        .map(|b| clean_block(b, cfg, ds.sample_rate_hz))
        .unzip();
    let cleaned = Dataset {
        label_set: ds.label_set.clone(),
        blocks,
        sample_rate_hz: ds.sample_rate_hz,
        provenance: ds.provenance.clone(),
    };
    Ok((cleaned, LossLedger::from_blocks(losses, cfg.loss_denominator)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub subjects: Vec<SubjectLoss>,
    pub sessions: Vec<SessionLoss>,
}

impl ExclusionReport {
    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty() && self.sessions.is_empty()
    }
}

/// `loss > threshold`, strict.
pub(crate) fn exceeds(loss: f64, threshold: f64) -> bool {
    loss > threshold + FRACTION_EPS
}

/// Drops subjects, then sessions, whose loss is strictly above threshold.
pub fn apply_loss_exclusions(
    ds: &Dataset,
    ledger: &LossLedger,
    cfg: &CleaningConfig,
) -> Result<(Dataset, ExclusionReport)> {
    let mut report = ExclusionReport::default();
    for s in &ledger.subjects {
        if exceeds(s.loss, cfg.subject_loss_threshold) {
            report.subjects.push(s.clone());
        }
    }
    let dropped_subject = |subject: &SubjectId| report.subjects.iter().any(|s| &s.subject == subject);
    let mut dropped_sessions = Vec::new();
    for s in &ledger.sessions {
        if !dropped_subject(&s.subject) && exceeds(s.loss, cfg.session_loss_threshold) {
            dropped_sessions.push(s.clone());
        }
    }
    let kept = ds.filter_blocks(|b| {
        !dropped_subject(&b.key.subject)
            && !dropped_sessions
                .iter()
                .any(|s| s.subject == b.key.subject && s.session == b.key.session)
    });
    report.sessions = dropped_sessions;
    if kept.blocks.is_empty() {
        return Err(Error::AllDataExcluded);
    }
    Ok((kept, report))
}

/// Cleaning followed by exclusions.
pub fn run_cleaning(ds: &Dataset, cfg: &CleaningConfig) -> Result<(Dataset, LossLedger, ExclusionReport)> {
    let (cleaned, ledger) = clean_dataset(ds, cfg)?;
    let (kept, report) = apply_loss_exclusions(&cleaned, &ledger, cfg)?;
    Ok((kept, ledger, report))
}
