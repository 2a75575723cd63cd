//! Recording data model and CSV ingestion.
//!
//! A [`Dataset`] is a list of [`TaskBlock`]s, one per (subject, session,
//! task). Each block holds its spectral snapshots in time order. Blocks are
//! kept sorted by [`BlockKey`], and subjects sort in natural order
//! (`s2` before `s10`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, LabelId, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 10.0;
pub const DEFAULT_BLOCK_DURATION_S: f64 = 60.0;
pub const DEFAULT_FEATURE_DIM: usize = 20;

/// The ordered task vocabulary. Label ids are 1-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidLabelSet("no labels".into()));
        }
        if labels.len() > LabelId::MAX as usize {
            return Err(Error::InvalidLabelSet(format!("{} labels", labels.len())));
        }
        let unique: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidLabelSet("duplicate label names".into()));
        }
        Ok(Self { labels })
    }

    /// Think, Count, Recall, Breathe, Draw.
    pub fn tcr() -> Self {
        Self::new(["Think", "Count", "Recall", "Breathe", "Draw"]).expect("static labels are valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        1..=self.labels.len() as LabelId
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id >= 1 && (id as usize) <= self.labels.len()
    }

    pub fn name(&self, id: LabelId) -> Option<&str> {
        if self.contains(id) {
            Some(&self.labels[id as usize - 1])
        } else {
            None
        }
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.labels
            .iter()
            .position(|l| l == name)
            .map(|i| (i + 1) as LabelId)
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::tcr()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

/// Subject identifier ordered naturally: the alphabetic prefix first, then
/// the trailing number numerically, then the raw string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        let s = self.0.as_str();
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (prefix, num) = s.split_at(s.len() - digits);
        (prefix, num.parse().ok())
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_string())
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Ord for SubjectId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (pa, na) = self.split();
        let (pb, nb) = other.split();
        pa.cmp(pb)
            .then_with(|| na.cmp(&nb))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for SubjectId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Identity of one task block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockKey {
    pub subject: SubjectId,
    pub session: u32,
    pub task: LabelId,
}

impl BlockKey {
    pub fn new(subject: impl Into<String>, session: u32, task: LabelId) -> Self {
        Self {
            subject: SubjectId(subject.into()),
            session,
            task,
        }
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, session {}, task {})", self.subject, self.session, self.task)
    }
}

/// One spectral snapshot. Identity lives on the enclosing [`TaskBlock`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingRow {
    /// Seconds since the start of the task.
    pub t: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBlock {
    pub key: BlockKey,
    pub rows: Vec<RecordingRow>,
    pub nominal_duration_s: f64,
    pub sample_rate_hz: f64,
}

impl TaskBlock {
    pub fn new(key: BlockKey, rows: Vec<RecordingRow>, sample_rate_hz: f64) -> Self {
        Self {
            key,
            rows,
            nominal_duration_s: DEFAULT_BLOCK_DURATION_S,
            sample_rate_hz,
        }
    }

    /// Rows a complete block would hold.
    pub fn nominal_rows(&self) -> usize {
        seconds_to_rows(self.nominal_duration_s, self.sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_rows(&self, rows: Vec<RecordingRow>) -> Self {
        Self {
            key: self.key.clone(),
            rows,
            nominal_duration_s: self.nominal_duration_s,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Rounds a duration to a whole number of samples.
pub fn seconds_to_rows(seconds: f64, rate_hz: f64) -> usize {
    (seconds * rate_hz).round().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub label_set: LabelSet,
    pub blocks: Vec<TaskBlock>,
    pub sample_rate_hz: f64,
    pub provenance: String,
}

impl Dataset {
    /// Builds a dataset, sorting blocks by key. Duplicate keys are kept so
    /// that [`validate`] can report them.
    pub fn new(
        label_set: LabelSet,
        mut blocks: Vec<TaskBlock>,
        sample_rate_hz: f64,
        provenance: impl Into<String>,
    ) -> Self {
        blocks.sort_by(|a, b| a.key.cmp(&b.key));
        Self {
            label_set,
            blocks,
            sample_rate_hz,
            provenance: provenance.into(),
        }
    }

    /// Feature length of the first row, if any.
    pub fn feature_dim(&self) -> Option<usize> {
        self.blocks
            .iter()
            .flat_map(|b| b.rows.first())
            .map(|r| r.features.len())
            .next()
    }

    pub fn row_count(&self) -> usize {
        self.blocks.iter().map(TaskBlock::len).sum()
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        let set: BTreeSet<&SubjectId> = self.blocks.iter().map(|b| &b.key.subject).collect();
        set.into_iter().cloned().collect()
    }

    pub fn block(&self, key: &BlockKey) -> Option<&TaskBlock> {
        self.blocks
            .binary_search_by(|b| b.key.cmp(key))
            .ok()
            .map(|i| &self.blocks[i])
    }

    /// Indices of the blocks belonging to `subject`, in key order.
    pub fn subject_block_indices(&self, subject: &SubjectId) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| &b.key.subject == subject)
            .map(|(i, _)| i)
            .collect()
    }

    /// Keeps only blocks for which `keep` returns true.
    pub fn filter_blocks(&self, mut keep: impl FnMut(&TaskBlock) -> bool) -> Dataset {
        Dataset {
            label_set: self.label_set.clone(),
            blocks: self.blocks.iter().filter(|b| keep(b)).cloned().collect(),
            sample_rate_hz: self.sample_rate_hz,
            provenance: self.provenance.clone(),
        }
    }
}

/// Column names of the CSV layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub subject: String,
    pub session: String,
    pub task: String,
    pub time: String,
    /// Feature columns are `<prefix>0 .. <prefix>{d-1}`.
    pub feature_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            subject: "subject".into(),
            session: "session".into(),
            task: "task".into(),
            time: "t".into(),
            feature_prefix: "f".into(),
        }
    }
}

/// Reads a dataset from a CSV file using the TCR label set.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, sample_rate_hz: f64) -> Result<Dataset> {
    load_csv_with_labels(path, schema, sample_rate_hz, LabelSet::tcr())
}

pub fn load_csv_with_labels(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    sample_rate_hz: f64,
    label_set: LabelSet,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv(std::io::BufReader::new(file), schema, sample_rate_hz, label_set)
        .map_err(|e| match e {
            Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
            other => other,
        })?;
    ds.provenance = format!("csv:{}", path.display());
    Ok(ds)
}

struct ColumnMap {
    subject: usize,
    session: usize,
    task: usize,
    time: usize,
    features: Vec<usize>,
}

fn column_map(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<ColumnMap> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let subject = find(&schema.subject)?;
    let session = find(&schema.session)?;
    let task = find(&schema.task)?;
    let time = find(&schema.time)?;

    let mut indexed: BTreeMap<usize, usize> = BTreeMap::new();
    for (col, h) in headers.iter().enumerate() {
        if let Some(rest) = h.trim().strip_prefix(schema.feature_prefix.as_str()) {
            if let Ok(k) = rest.parse::<usize>() {
                indexed.insert(k, col);
            }
        }
    }
    if indexed.is_empty() {
        return Err(Error::MissingColumn(format!("{}0", schema.feature_prefix)));
    }
    let mut features = Vec::with_capacity(indexed.len());
    for (expected, (k, col)) in indexed.into_iter().enumerate() {
        if k != expected {
            return Err(Error::MissingColumn(format!("{}{expected}", schema.feature_prefix)));
        }
        features.push(col);
    }
    Ok(ColumnMap {
        subject,
        session,
        task,
        time,
        features,
    })
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, column: &str, line: u64) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Parse {
        column: column.to_string(),
        value: raw.to_string(),
        line,
    })
}

/// Parses CSV from any reader. Rows of different blocks may interleave,
/// but within one block timestamps must be strictly increasing.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, sample_rate_hz: f64, label_set: LabelSet) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].trim().is_empty()) => h.clone(),
        Ok(_) => return Err(Error::EmptyFile("<reader>".into())),
        Err(e) => return Err(e.into()),
    };
    let cols = column_map(&headers, schema)?;

    let mut blocks: BTreeMap<BlockKey, Vec<RecordingRow>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let subject = record.get(cols.subject).unwrap_or("").trim().to_string();
        let session: u32 = parse_field(&record, cols.session, &schema.session, line)?;
        let task_name = record.get(cols.task).unwrap_or("").trim();
        let task = label_set
            .id(task_name)
            .ok_or_else(|| Error::UnknownLabel(task_name.to_string()))?;
        let t: f64 = parse_field(&record, cols.time, &schema.time, line)?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Parse {
                column: schema.time.clone(),
                value: t.to_string(),
                line,
            });
        }
        let mut features = Vec::with_capacity(cols.features.len());
        for (k, &col) in cols.features.iter().enumerate() {
            let name = format!("{}{k}", schema.feature_prefix);
            let v: f64 = parse_field(&record, col, &name, line)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    column: name,
                    value: v.to_string(),
                    line,
                });
            }
            features.push(v);
        }
        let key = BlockKey::new(subject, session, task);
        let rows = blocks.entry(key.clone()).or_default();
        if let Some(prev) = rows.last() {
            if t <= prev.t {
                return Err(Error::NonMonotonicTime { key, line });
            }
        }
        rows.push(RecordingRow { t, features });
    }
    if blocks.is_empty() {
        return Err(Error::EmptyFile("<reader>".into()));
    }
    let blocks = blocks
        .into_iter()
        .map(|(key, rows)| TaskBlock::new(key, rows, sample_rate_hz))
        .collect();
    Ok(Dataset::new(label_set, blocks, sample_rate_hz, "csv"))
}

/// Writes the dataset in the canonical layout. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let d = ds.feature_dim().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string(), "session".into(), "task".into(), "t".into()];
    header.extend((0..d).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(4 + d);
    for block in &ds.blocks {
        let task = ds
            .label_set
            .name(block.key.task)
            .ok_or_else(|| Error::UnknownLabel(block.key.task.to_string()))?;
        for row in &block.rows {
            fields.clear();
            fields.push(block.key.subject.0.clone());
            fields.push(block.key.session.to_string());
            fields.push(task.to_string());
            fields.push(row.t.to_string());
            fields.extend(row.features.iter().map(f64::to_string));
            w.write_record(&fields)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv_file(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    ShortBlock { key: BlockKey, rows: usize, nominal: usize },
    LongBlock { key: BlockKey, rows: usize, nominal: usize },
    DuplicateTriple { key: BlockKey },
    FeatureDimMismatch { key: BlockKey, row: usize, expected: usize, actual: usize },
    NonFiniteFeature { key: BlockKey, row: usize },
    UnknownTask { key: BlockKey },
    NonMonotonicTime { key: BlockKey, row: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub block_rows: Vec<(BlockKey, usize)>,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    /// Findings other than short blocks, which ingestion tolerates.
    pub fn violations(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| !matches!(f, Finding::ShortBlock { .. }))
    }
}

/// Inspects a dataset without modifying it.
pub fn validate(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let expected_dim = ds.feature_dim();
    let mut seen: BTreeSet<&BlockKey> = BTreeSet::new();
    for block in &ds.blocks {
        report.block_rows.push((block.key.clone(), block.len()));
        if !seen.insert(&block.key) {
            report.findings.push(Finding::DuplicateTriple { key: block.key.clone() });
        }
        if !ds.label_set.contains(block.key.task) {
            report.findings.push(Finding::UnknownTask { key: block.key.clone() });
        }
        let nominal = block.nominal_rows();
        if block.len() < nominal {
            report.findings.push(Finding::ShortBlock {
                key: block.key.clone(),
                rows: block.len(),
                nominal,
            });
        } else if block.len() > nominal {
            report.findings.push(Finding::LongBlock {
                key: block.key.clone(),
                rows: block.len(),
                nominal,
            });
        }
        for (i, row) in block.rows.iter().enumerate() {
            if let Some(d) = expected_dim {
                if row.features.len() != d {
                    report.findings.push(Finding::FeatureDimMismatch {
                        key: block.key.clone(),
                        row: i,
                        expected: d,
                        actual: row.features.len(),
                    });
                }
            }
            if row.features.iter().any(|v| !v.is_finite()) {
                report.findings.push(Finding::NonFiniteFeature { key: block.key.clone(), row: i });
            }
            if i > 0 && row.t <= block.rows[i - 1].t {
                report.findings.push(Finding::NonMonotonicTime { key: block.key.clone(), row: i });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("subject,session,task,t,f0,f1\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &CsvSchema::default(), 10.0, LabelSet::tcr())
    }

    #[test]
    fn three_row_file_is_one_block() {
        let ds = read(&csv_text(&["s1,1,Think,0,1.0,2.0", "s1,1,Think,0.1,1.5,2.5", "s1,1,Think,0.2,1.0,2.0"])).unwrap();
        assert_eq!(ds.blocks.len(), 1);
        assert_eq!(ds.blocks[0].len(), 3);
        assert_eq!(ds.blocks[0].key, BlockKey::new("s1", 1, 1));
        assert_eq!(ds.feature_dim(), Some(2));
    }

    #[test]
    fn unknown_task_label_is_rejected() {
        let err = read(&csv_text(&["s1,1,Jump,0,1.0,2.0"])).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(ref l) if l == "Jump"), "{err}");
    }

    #[test]
    fn missing_columns_are_reported() {
        let err = read("subject,session,t,f0\ns1,1,0,1\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "task"));
        let err = read("subject,session,task,t,f0,f2\ns1,1,Think,0,1,2\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "f1"));
        let err = read("subject,session,task,t\ns1,1,Think,0\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "f0"));
    }

    #[test]
    fn decreasing_time_is_rejected() {
        let err = read(&csv_text(&["s1,1,Think,0.2,1,2", "s1,1,Think,0.1,1,2"])).unwrap_err();
        assert!(matches!(err, Error::NonMonotonicTime { .. }));
    }

    #[test]
    fn interleaved_blocks_are_grouped_and_sorted() {
        let ds = read(&csv_text(&[
            "s10,1,Think,0,1,2",
            "s2,1,Count,0,1,2",
            "s2,1,Think,0,1,2",
            "s10,1,Think,0.1,1,2",
        ]))
        .unwrap();
        let keys: Vec<_> = ds.blocks.iter().map(|b| b.key.clone()).collect();
        assert_eq!(
            keys,
            vec![BlockKey::new("s2", 1, 1), BlockKey::new("s2", 1, 2), BlockKey::new("s10", 1, 1)]
        );
    }

    #[test]
    fn empty_and_bad_numbers() {
        assert!(matches!(read("").unwrap_err(), Error::EmptyFile(_)));
        assert!(matches!(read("subject,session,task,t,f0\n").unwrap_err(), Error::EmptyFile(_)));
        assert!(matches!(read(&csv_text(&["s1,1,Think,0,abc,2"])).unwrap_err(), Error::Parse { .. }));
        assert!(matches!(read(&csv_text(&["s1,1,Think,0,NaN,2"])).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn label_set_invariants() {
        assert!(LabelSet::new(Vec::<String>::new()).is_err());
        assert!(LabelSet::new(["a", "a"]).is_err());
        let l = LabelSet::tcr();
        assert_eq!(l.id("Draw"), Some(5));
        assert_eq!(l.name(1), Some("Think"));
        assert_eq!(l.name(0), None);
        assert_eq!(l.ids().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    fn full_block(key: BlockKey, n: usize) -> TaskBlock {
        let rows = (0..n)
            .map(|i| RecordingRow {
                t: i as f64 / 10.0,
                features: vec![i as f64, 0.5 * i as f64],
            })
            .collect();
        TaskBlock::new(key, rows, 10.0)
    }

    #[test]
    fn validate_flags_short_blocks_and_duplicates() {
        let ds = Dataset::new(
            LabelSet::tcr(),
            vec![
                full_block(BlockKey::new("s1", 1, 1), 600),
                full_block(BlockKey::new("s1", 1, 2), 599),
            ],
            10.0,
            "test",
        );
        let report = validate(&ds);
        assert_eq!(
            report.findings,
            vec![Finding::ShortBlock { key: BlockKey::new("s1", 1, 2), rows: 599, nominal: 600 }]
        );

        let dup = Dataset::new(
            LabelSet::tcr(),
            vec![
                full_block(BlockKey::new("s1", 2, 1), 600),
                full_block(BlockKey::new("s1", 2, 1), 600),
            ],
            10.0,
            "test",
        );
        let report = validate(&dup);
        assert_eq!(report.findings, vec![Finding::DuplicateTriple { key: BlockKey::new("s1", 2, 1) }]);
    }

    #[test]
    fn validate_flags_dimension_mismatch() {
        let mut block = full_block(BlockKey::new("s1", 1, 1), 600);
        block.rows[5].features.push(1.0);
        let ds = Dataset::new(LabelSet::tcr(), vec![block], 10.0, "test");
        assert!(matches!(
            validate(&ds).findings[0],
            Finding::FeatureDimMismatch { row: 5, expected: 2, actual: 3, .. }
        ));
    }

    #[test]
    fn write_then_read_is_bitwise_equal() {
        let mut block = full_block(BlockKey::new("s1", 3, 4), 50);
        block.rows[3].features[0] = 0.1 + 0.2;
        block.rows[4].features[1] = -1.234_567_890_123_456_7e-7;
        let ds = Dataset::new(LabelSet::tcr(), vec![block], 10.0, "test");
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default(), 10.0, LabelSet::tcr()).unwrap();
        assert_eq!(back.blocks, ds.blocks);
    }

    #[test]
    fn natural_subject_order() {
        let mut v: Vec<SubjectId> = ["s10", "s2", "s1", "a3"].into_iter().map(SubjectId::from).collect();
        v.sort();
        let names: Vec<_> = v.iter().map(|s| s.as_str()).collect();
        assert_eq!(names, vec!["a3", "s1", "s2", "s10"]);
    }
}
