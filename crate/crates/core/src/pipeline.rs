//! File-driven stages and the one-shot `reproduce` run.
//!
//! Each stage reads only files written by earlier stages. `reproduce`
//! chains them into one output tree and checks invariants along the way.
//!
//! Layout of a reproduce tree:
//!
//! ```text
//! raw.csv  gen_log.json
//! clean.csv  ledger.json  exclusions.json
//! results/  ranking.json status.json tmv_result.json timelines.csv labels.json
//!           phase1/<family>.json phase1/<family>_timelines.csv runtime.json
//! figures/run-<hash>/  tables, timelines, charts, manifest.json
//! manifest.json
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::ClassifierSpec;
use crate::cleaning::{run_cleaning, CleaningConfig, ExclusionReport, LossLedger};
use crate::cv::{make_splits, partition_folds, CvConfig, EvalResult, EvalSummary, FoldPlan};
use crate::dataset::{load_csv_with_labels, validate, write_csv_file, CsvSchema, Dataset, LabelSet, SubjectId};
use crate::report::{self, Artifact, ClassifierRuntime, RuntimeRecord};
use crate::synth::{generate, SynthConfig};
use crate::tmv::{
    check_invariants, exclude_noisy_sessions, rank_phase1, run_phase2, Phase2Options, PhaseOneRanking,
    SessionTaskStatus, TmvResult,
};
use crate::{Error, LabelId, Result};

pub const DEFAULT_SPECS: &str = "rf,svm-rbf,knn,dt,lda";

/// Everything a run needs. Loads from a JSON file; CLI flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    /// Input CSV; `None` means generate from the preset.
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub sample_rate_hz: f64,
    pub labels: Option<Vec<String>>,
    /// Overrides applied to the preset's synthetic config.
    pub synth: Option<serde_json::Value>,
    pub cleaning: CleaningConfig,
    pub cv: CvConfig,
    pub specs: Vec<ClassifierSpec>,
    pub exclude_threshold: f64,
    pub freeze_majority: bool,
    pub report_subject: String,
    pub report_task: LabelId,
    /// Worker cap. Never changes outputs.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "paper".into(),
            seed: 42,
            input: None,
            out_dir: PathBuf::from("out"),
            sample_rate_hz: 10.0,
            labels: None,
            synth: None,
            cleaning: CleaningConfig::default(),
            cv: CvConfig::default(),
            specs: ClassifierSpec::parse_list(DEFAULT_SPECS).expect("default specs parse"),
            exclude_threshold: 0.5,
            freeze_majority: false,
            report_subject: "s3".into(),
            report_task: 1,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn label_set(&self) -> Result<LabelSet> {
        match &self.labels {
            Some(l) => LabelSet::new(l.iter().cloned()),
            None => Ok(LabelSet::tcr()),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let mut cfg = SynthConfig::preset(&self.preset)?;
        if let Some(overrides) = &self.synth {
            let mut value = serde_json::to_value(&cfg)?;
            let obj = overrides
                .as_object()
                .ok_or_else(|| Error::ConfigInvalid("synth overrides must be an object".into()))?;
            for (k, v) in obj {
                if value.get(k).is_none() {
                    return Err(Error::ConfigInvalid(format!("unknown synth field `{k}`")));
                }
                value[k] = v.clone();
            }
            cfg = serde_json::from_value(value)?;
        }
        cfg.seed = self.seed;
        cfg.rate_hz = self.sample_rate_hz;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cleaning.validate(self.sample_rate_hz)?;
        if self.specs.len() < 2 {
            return Err(Error::TooFewSpecs(self.specs.len()));
        }
        for s in &self.specs {
            s.validate()?;
        }
        if !(0.0..=1.0).contains(&self.exclude_threshold) {
            return Err(Error::ConfigInvalid(format!(
                "exclude_threshold {} not in [0,1]",
                self.exclude_threshold
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::ConfigInvalid("threads must be positive".into()));
        }
        Ok(())
    }

    /// The config as echoed into manifests: output location and thread
    /// count are left out because they do not affect any output.
    pub fn echo(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
            o.remove("threads");
        }
        Ok(v)
    }
}

/// Runs `f` on a pool capped at `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// A file listed in a manifest, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sha256: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub volatile: bool,
}

impl FileEntry {
    pub fn hashed(root: &Path, rel: &Path, volatile: bool) -> Result<Self> {
        Ok(Self {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: if volatile { None } else { Some(sha256_file(&root.join(rel))?) },
            volatile,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub artifacts: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Files whose content depends on wall-clock time.
pub fn is_volatile(rel: &Path) -> bool {
    let name = rel.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.starts_with("runtime") || name.starts_with("data_runtime") || rel.starts_with("results/phase1") && name.ends_with(".json") || rel.starts_with("phase1") && name.ends_with(".json")
}

// ---------------------------------------------------------------- stages

pub struct SynthOutput {
    pub dataset: Dataset,
    pub log: crate::synth::GenerationLog,
}

pub fn stage_synth(cfg: &SynthConfig, raw: &Path, log_path: &Path) -> Result<SynthOutput> {
    let (dataset, log) = generate(cfg)?;
    write_csv_file(&dataset, raw)?;
    write_json(log_path, &log)?;
    Ok(SynthOutput { dataset, log })
}

pub fn stage_ingest(input: &Path, rate_hz: f64, labels: &LabelSet) -> Result<(Dataset, crate::dataset::ValidationReport)> {
    let ds = load_csv_with_labels(input, &CsvSchema::default(), rate_hz, labels.clone())?;
    let report = validate(&ds);
    Ok((ds, report))
}

pub struct CleanOutput {
    pub dataset: Dataset,
    pub ledger: LossLedger,
    pub exclusions: ExclusionReport,
}

pub fn stage_clean(
    input: &Path,
    output: &Path,
    ledger_path: &Path,
    exclusions_path: &Path,
    cfg: &CleaningConfig,
    rate_hz: f64,
    labels: &LabelSet,
) -> Result<CleanOutput> {
    let (raw, _) = stage_ingest(input, rate_hz, labels)?;
    let (dataset, ledger, exclusions) = run_cleaning(&raw, cfg)?;
    write_csv_file(&dataset, output)?;
    write_json(ledger_path, &ledger)?;
    write_json(exclusions_path, &exclusions)?;
    Ok(CleanOutput {
        dataset,
        ledger,
        exclusions,
    })
}

pub struct BenchOutput {
    pub plan: FoldPlan,
    pub ranking: PhaseOneRanking,
    pub evals: Vec<EvalResult>,
}

fn spec_stem(spec: &ClassifierSpec) -> String {
    spec.family().short_name().to_string()
}

/// Phase-1 benchmark of every spec.
pub fn stage_bench(ds: &Dataset, cv: &CvConfig, specs: &[ClassifierSpec], seed: u64, out: &Path) -> Result<BenchOutput> {
    let plan = partition_folds(ds, cv)?;
    let (ranking, evals) = rank_phase1(ds, &plan, specs, seed)?;
    mkdir(&out.join("phase1"))?;
    let mut stems = BTreeSet::new();
    for e in &evals {
        let mut stem = spec_stem(&e.classifier);
        let mut n = 2;
        while !stems.insert(stem.clone()) {
            stem = format!("{}{n}", spec_stem(&e.classifier));
            n += 1;
        }
        let timelines = format!("{stem}_timelines.csv");
        e.write_timelines_csv(out.join("phase1").join(&timelines))?;
        write_json(&out.join("phase1").join(format!("{stem}.json")), &e.summary(&timelines))?;
    }
    write_json(&out.join("ranking.json"), &ranking)?;
    Ok(BenchOutput { plan, ranking, evals })
}

pub struct RunOutput {
    pub bench: BenchOutput,
    pub status: SessionTaskStatus,
    pub result: TmvResult,
    pub phase2: [EvalResult; 2],
    pub runtime: RuntimeRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimelineRow {
    subject: String,
    session: u32,
    task: LabelId,
    fold: usize,
    t: f64,
    #[serde(rename = "true")]
    truth: LabelId,
    best: i32,
    second: i32,
    tmv: i32,
}

fn write_tmv_timelines(result: &TmvResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ConfigInvalid(format!("{other:?}")),
    })?;
    let s = |v: Option<LabelId>| v.map_or(-1, i32::from);
    for b in &result.blocks {
        for p in &b.points {
            w.serialize(TimelineRow {
                subject: b.key.subject.to_string(),
                session: b.key.session,
                task: b.key.task,
                fold: p.fold,
                t: p.t,
                truth: p.truth,
                best: s(p.best),
                second: s(p.second),
                tmv: s(p.tmv),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Phase 1, exclusion, Phase 2 and voting.
pub fn stage_run(ds: &Dataset, cfg: &RunConfig, out: &Path) -> Result<RunOutput> {
    mkdir(out)?;
    let t = Instant::now();
    let bench = stage_bench(ds, &cfg.cv, &cfg.specs, cfg.seed, out)?;
    let bench_s = t.elapsed().as_secs_f64();
    let best_idx = cfg
        .specs
        .iter()
        .position(|s| *s == bench.ranking.best().spec)
        .expect("ranked spec comes from the list");
    let phase1_best = &bench.evals[best_idx];
    let status = exclude_noisy_sessions(&phase1_best.timelines, cfg.exclude_threshold)?;
    let t = Instant::now();
    let (result, phase2) = run_phase2(
        ds,
        &bench.plan,
        &bench.ranking,
        &status,
        phase1_best,
        cfg.seed,
        Phase2Options {
            freeze_majority: cfg.freeze_majority,
        },
    )?;
    let phase2_s = t.elapsed().as_secs_f64();

    write_json(&out.join("status.json"), &status)?;
    write_json(&out.join("tmv_result.json"), &result)?;
    write_json(&out.join("labels.json"), &ds.label_set)?;
    write_tmv_timelines(&result, &out.join("timelines.csv"))?;

    let runtime = RuntimeRecord {
        phase1: bench
            .evals
            .iter()
            .map(|e| ClassifierRuntime {
                spec: e.classifier,
                mean_runtime_s: e.mean_runtime_s(),
                per_subject: e.per_subject.iter().map(|s| (s.subject.clone(), s.runtime_s)).collect(),
            })
            .collect(),
        phase2: result.timing.clone(),
        stages: vec![("bench".into(), bench_s), ("phase2".into(), phase2_s)],
    };
    write_json(&out.join("runtime.json"), &runtime)?;
    Ok(RunOutput {
        bench,
        status,
        result,
        phase2,
        runtime,
    })
}

/// Inputs the report stage reads, relative to the results directory.
pub const REPORT_INPUTS: [&str; 4] = ["labels.json", "ranking.json", "status.json", "tmv_result.json"];

pub struct ReportOutput {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

/// Writes tables and figures under `out/run-<hash>/`, where the hash covers
/// the stable inputs, and a manifest listing every artifact.
pub fn stage_report(results: &Path, subject: &SubjectId, task: LabelId, out: &Path) -> Result<ReportOutput> {
    let mut inputs = Vec::new();
    let mut stamp = Sha256::new();
    for name in REPORT_INPUTS {
        let entry = FileEntry::hashed(results, Path::new(name), false)?;
        stamp.update(entry.sha256.as_deref().unwrap_or_default().as_bytes());
        inputs.push(entry);
    }
    let labels: LabelSet = read_json(&results.join("labels.json"))?;
    let ranking: PhaseOneRanking = read_json(&results.join("ranking.json"))?;
    let result: TmvResult = read_json(&results.join("tmv_result.json"))?;
    let mut phase1: Vec<EvalSummary> = Vec::new();
    let phase1_dir = results.join("phase1");
    if phase1_dir.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(&phase1_dir)
            .map_err(|e| Error::io(&phase1_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        names.sort();
        for p in names {
            phase1.push(read_json(&p)?);
            let rel = p.strip_prefix(results).expect("listed under results");
            inputs.push(FileEntry::hashed(results, rel, true)?);
        }
    }
    let runtime_path = results.join("runtime.json");
    let runtime: Option<RuntimeRecord> = if runtime_path.is_file() {
        inputs.push(FileEntry::hashed(results, Path::new("runtime.json"), true)?);
        Some(read_json(&runtime_path)?)
    } else {
        None
    };

    let dir = out.join(format!("run-{}", &hex::encode(stamp.finalize())[..12]));
    mkdir(&dir)?;
    let mut artifacts = report::emit_comparison(&result, &ranking, &dir)?;
    artifacts.extend(report::emit_timelines(&result, &labels, subject, task, &dir)?);
    artifacts.extend(report::emit_subject_bars(&result, &ranking, &phase1, &dir)?);
    if let Some(rt) = &runtime {
        artifacts.extend(report::emit_runtime(&result, rt, &dir)?);
        artifacts.extend(report::emit_data_runtime(&result, &rt.phase2, &dir)?);
    }
    artifacts.sort();
    let problems = report::check_twins(&artifacts);
    if !problems.is_empty() {
        return Err(Error::Invariant {
            stage: "report".into(),
            detail: problems.join("; "),
        });
    }
    let mut manifest = Manifest::new(
        None,
        serde_json::json!({ "subject": subject.as_str(), "task": task }),
    );
    manifest.inputs = inputs;
    for a in &artifacts {
        manifest.artifacts.push(FileEntry::hashed(&dir, &a.path, a.volatile)?);
    }
    manifest.write(&dir.join("manifest.json"))?;
    Ok(ReportOutput { dir, artifacts })
}

// ------------------------------------------------------------ invariants

fn invariant(stage: &str, problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Invariant {
            stage: stage.into(),
            detail: problems.join("; "),
        })
    }
}

/// Train and test ranges of every split are disjoint and time-contiguous.
pub fn split_violations(ds: &Dataset, plan: &FoldPlan) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    for split in make_splits(plan)? {
        for sb in &split.blocks {
            let block = &ds.blocks[sb.block_index];
            let mut ranges: Vec<_> = sb.train.clone();
            ranges.extend(sb.test.clone());
            ranges.sort_by_key(|r| r.start);
            for w in ranges.windows(2) {
                if w[0].end > w[1].start {
                    problems.push(format!("{}: overlapping ranges in split {}", block.key, split.test_fold));
                }
            }
            for r in &ranges {
                if r.end > block.rows.len() {
                    problems.push(format!("{}: range past block end", block.key));
                    continue;
                }
                let rows = &block.rows[r.clone()];
                let contiguous = rows
                    .windows(2)
                    .all(|w| w[1].t > w[0].t && w[1].t - w[0].t < 0.5 * plan.config.subset_seconds);
                if !contiguous {
                    problems.push(format!("{}: range {:?} is not contiguous in time", block.key, r));
                }
            }
        }
    }
    Ok(problems)
}

fn clean_violations(clean: &CleanOutput, cfg: &CleaningConfig) -> Vec<String> {
    let mut problems = Vec::new();
    let excluded: BTreeSet<&SubjectId> = clean.exclusions.subjects.iter().map(|s| &s.subject).collect();
    for s in &clean.ledger.subjects {
        let over = crate::cleaning::exceeds(s.loss, cfg.subject_loss_threshold);
        if over != excluded.contains(&s.subject) {
            problems.push(format!("subject {} loss {:.4} disagrees with exclusion", s.subject, s.loss));
        }
    }
    let report = validate(&clean.dataset);
    problems.extend(report.violations().map(|f| format!("{f:?}")));
    problems
}

// -------------------------------------------------------------- reproduce

pub struct ReproduceOutput {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub run: RunOutput,
    pub report_dir: PathBuf,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("walked from root").to_path_buf());
        }
    }
    Ok(())
}

/// Full pipeline from the preset (or `cfg.input`) to figures and manifest.
pub fn reproduce(cfg: &RunConfig) -> Result<ReproduceOutput> {
    cfg.validate()?;
    with_threads(cfg.threads, || reproduce_inner(cfg))?
}

fn reproduce_inner(cfg: &RunConfig) -> Result<ReproduceOutput> {
    let out = &cfg.out_dir;
    mkdir(out)?;
    let stale = out.join("manifest.json");
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let labels;
    let mut manifest = Manifest::new(Some(cfg.seed), cfg.echo()?);
    let raw = match &cfg.input {
        Some(input) => {
            labels = cfg.label_set()?;
            manifest.inputs.push(FileEntry {
                path: input.to_string_lossy().into_owned(),
                sha256: Some(sha256_file(input)?),
                volatile: false,
            });
            input.clone()
        }
        None => {
            let synth = cfg.synth_config()?;
            labels = synth.label_set();
            log::info!("synth: preset {} seed {}", cfg.preset, cfg.seed);
            let raw = out.join("raw.csv");
            let generated = stage_synth(&synth, &raw, &out.join("gen_log.json")).map_err(|e| e.in_stage("synth"))?;
            let report = validate(&generated.dataset);
            let expected = synth.subjects * synth.sessions as usize * synth.tasks;
            let mut problems: Vec<String> = report.violations().map(|f| format!("{f:?}")).collect();
            if generated.dataset.blocks.len() != expected {
                problems.push(format!("{} blocks, expected {expected}", generated.dataset.blocks.len()));
            }
            invariant("synth", problems)?;
            raw
        }
    };

    log::info!("clean");
    let clean = stage_clean(
        &raw,
        &out.join("clean.csv"),
        &out.join("ledger.json"),
        &out.join("exclusions.json"),
        &cfg.cleaning,
        cfg.sample_rate_hz,
        &labels,
    ).map_err(|e| e.in_stage("clean"))?;
    invariant("clean", clean_violations(&clean, &cfg.cleaning))?;

    log::info!("run");
    let results = out.join("results");
    let ds = load_csv_with_labels(out.join("clean.csv"), &CsvSchema::default(), cfg.sample_rate_hz, labels).map_err(|e| e.in_stage("run"))?;
    let run = stage_run(&ds, cfg, &results).map_err(|e| e.in_stage("run"))?;
    let mut problems = split_violations(&ds, &run.bench.plan).map_err(|e| e.in_stage("run"))?;
    problems.extend(check_invariants(&run.result, &run.status, &run.phase2));
    let reread: TmvResult = read_json(&results.join("tmv_result.json")).map_err(|e| e.in_stage("run"))?;
    if reread.tmv_mean != run.result.tmv_mean || reread.best_mean != run.result.best_mean {
        problems.push("tmv_result.json does not round-trip".into());
    }
    if !(reread.tmv_mean > reread.best_mean) {
        problems.push(format!(
            "TMV mean {:.4} does not exceed best-classifier mean {:.4}",
            reread.tmv_mean, reread.best_mean
        ));
    }
    invariant("run", problems)?;

    log::info!("report");
    let subject = SubjectId::from(cfg.report_subject.as_str());
    let figures = out.join("figures");
    let report_out = if run.result.blocks.iter().any(|b| b.key.subject == subject && b.key.task == cfg.report_task) {
        stage_report(&results, &subject, cfg.report_task, &figures).map_err(|e| e.in_stage("report"))?
    } else {
        let first = &run.result.blocks[0].key;
        log::warn!("{subject} task {} not in result, reporting {} instead", cfg.report_task, first.subject);
        stage_report(&results, &first.subject.clone(), first.task, &figures).map_err(|e| e.in_stage("report"))?
    };
    invariant("report", report_sentinel_violations(&report_out.dir, &run.result))?;

    let mut files = Vec::new();
    collect_files(out, out, &mut files).map_err(|e| e.in_stage("manifest"))?;
    for rel in files {
        let rel_str = rel.to_string_lossy();
        if rel_str == "manifest.json" {
            continue;
        }
        let volatile = is_volatile(&rel);
        manifest.artifacts.push(FileEntry::hashed(out, &rel, volatile)?);
    }
    manifest.write(&out.join("manifest.json")).map_err(|e| e.in_stage("manifest"))?;
    Ok(ReproduceOutput {
        out_dir: out.clone(),
        manifest,
        run,
        report_dir: report_out.dir,
    })
}

/// Excluded blocks appear as `-1` in the grid and nowhere else.
fn report_sentinel_violations(dir: &Path, result: &TmvResult) -> Vec<String> {
    let mut problems = Vec::new();
    let grid: Vec<report::GridRow> = match std::fs::read_to_string(dir.join("block_grid.json"))
        .map_err(|e| e.to_string())
        .and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string()))
    {
        Ok(g) => g,
        Err(e) => return vec![format!("block_grid.json: {e}")],
    };
    for (row, block) in grid.iter().zip(&result.blocks) {
        let sentinel = row.best == report::SENTINEL && row.tmv == report::SENTINEL;
        let any_sentinel = row.best == report::SENTINEL || row.tmv == report::SENTINEL;
        if block.excluded != sentinel || (!block.excluded && any_sentinel) {
            problems.push(format!("{}: grid sentinel does not match exclusion", block.key));
        }
    }
    if grid.len() != result.blocks.len() {
        problems.push("grid row count differs from result".into());
    }
    problems
}
