//! Tables and figures.
//!
//! Every figure is an SVG written by hand next to a CSV holding exactly the
//! plotted numbers. Accuracies use three decimals and excluded cells are
//! written as `-1`. Files that contain wall-clock times are marked volatile
//! because they differ between runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierSpec;
use crate::cv::EvalSummary;
use crate::dataset::{LabelSet, SubjectId};
use crate::tmv::{Phase2Timing, PhaseOneRanking, TmvResult};
use crate::{Error, LabelId, Result};

/// A written file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub volatile: bool,
}

/// Wall-clock measurements of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    pub phase1: Vec<ClassifierRuntime>,
    pub phase2: Phase2Timing,
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRuntime {
    pub spec: ClassifierSpec,
    pub mean_runtime_s: f64,
    pub per_subject: Vec<(SubjectId, f64)>,
}

pub const SENTINEL: &str = "-1";

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| SENTINEL.to_string(), fmt3)
}

/// Renders `a + b + c = total` with one decimal. Components are rounded to
/// tenths first so that the printed parts add up to the printed total.
pub fn format_breakdown(parts: &[f64]) -> String {
    let tenths: Vec<i64> = parts.iter().map(|p| (p * 10.0).round() as i64).collect();
    let total: i64 = tenths.iter().sum();
    let show = |t: i64| format!("{}{}.{}", if t < 0 { "-" } else { "" }, t.abs() / 10, t.abs() % 10);
    let lhs: Vec<String> = tenths.iter().map(|&t| show(t)).collect();
    format!("{} = {}", lhs.join(" + "), show(total))
}

fn write(out_dir: &Path, name: &str, content: &str, volatile: bool, list: &mut Vec<Artifact>) -> Result<()> {
    let path = out_dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    list.push(Artifact {
        path: PathBuf::from(name),
        volatile,
    });
    Ok(())
}

fn write_json<T: Serialize>(out_dir: &Path, name: &str, v: &T, volatile: bool, list: &mut Vec<Artifact>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write(out_dir, name, &s, volatile, list)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub algorithm: String,
    pub mean_accuracy: String,
}

/// One cell of the per-(session, task) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub subject: String,
    pub session: u32,
    pub task: LabelId,
    pub best: String,
    pub tmv: String,
}

/// Phase-1 and Phase-2 accuracy tables and the per-block grid.
pub fn emit_comparison(result: &TmvResult, ranking: &PhaseOneRanking, out_dir: &Path) -> Result<Vec<Artifact>> {
    if result.subjects.is_empty() || result.blocks.is_empty() {
        return Err(Error::EmptyResult("no retained subjects".into()));
    }
    if ranking.entries.is_empty() {
        return Err(Error::EmptyResult("empty ranking".into()));
    }
    let mut files = Vec::new();

    let phase1: Vec<AccuracyRow> = ranking
        .entries
        .iter()
        .map(|e| AccuracyRow {
            algorithm: e.spec.family().display_name().to_string(),
            mean_accuracy: fmt3(e.mean_accuracy),
        })
        .collect();
    write_table(out_dir, "phase1_accuracy", &phase1, &mut files)?;

    let mut phase2 = vec![
        ("TMV".to_string(), result.tmv_mean, 0),
        (format!("{} Phase 2", result.best.family().display_name()), result.best_mean, 1),
        (format!("{} Phase 2", result.second.family().display_name()), result.second_mean, 2),
    ];
    phase2.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
    let phase2: Vec<AccuracyRow> = phase2
        .into_iter()
        .map(|(algorithm, acc, _)| AccuracyRow {
            algorithm,
            mean_accuracy: fmt3(acc),
        })
        .collect();
    write_table(out_dir, "phase2_accuracy", &phase2, &mut files)?;

    let grid: Vec<GridRow> = result
        .blocks
        .iter()
        .map(|b| GridRow {
            subject: b.key.subject.to_string(),
            session: b.key.session,
            task: b.key.task,
            best: fmt_opt(b.best_accuracy),
            tmv: fmt_opt(b.tmv_accuracy),
        })
        .collect();
    write_table(out_dir, "block_grid", &grid, &mut files)?;
    Ok(files)
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::EmptyResult(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_table<T: Serialize>(out_dir: &Path, stem: &str, rows: &[T], files: &mut Vec<Artifact>) -> Result<()> {
    write(out_dir, &format!("{stem}.csv"), &csv_string(rows)?, false, files)?;
    write_json(out_dir, &format!("{stem}.json"), &rows, false, files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub algorithm: String,
    pub phase: u8,
    pub runtime_s: String,
}

/// Runtime tables, including the Phase-2 breakdown string.
pub fn emit_runtime(result: &TmvResult, runtime: &RuntimeRecord, out_dir: &Path) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    let mut rows: Vec<RuntimeRow> = runtime
        .phase1
        .iter()
        .map(|c| RuntimeRow {
            algorithm: c.spec.family().display_name().to_string(),
            phase: 1,
            runtime_s: format!("{:.1}", c.mean_runtime_s),
        })
        .collect();
    let b = runtime.phase2.breakdown;
    let breakdown = format_breakdown(&[b.best_fit_s, b.second_fit_s, b.vote_s]);
    rows.push(RuntimeRow {
        algorithm: format!("{} Phase 2", result.best.family().display_name()),
        phase: 2,
        runtime_s: format!("{:.1}", b.best_fit_s),
    });
    rows.push(RuntimeRow {
        algorithm: "TMV".into(),
        phase: 2,
        runtime_s: breakdown.clone(),
    });
    write(out_dir, "runtime.csv", &csv_string(&rows)?, true, &mut files)?;
    write_json(
        out_dir,
        "runtime_breakdown.json",
        &serde_json::json!({
            "best_fit_s": b.best_fit_s,
            "second_fit_s": b.second_fit_s,
            "vote_s": b.vote_s,
            "rendered": breakdown,
        }),
        true,
        &mut files,
    )?;
    Ok(files)
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#79706e",
];
const SENTINEL_COLOR: &str = "#bbbbbb";

/// Fill colour of a label; `None` is the excluded band.
pub fn label_color(label: Option<LabelId>) -> &'static str {
    match label {
        Some(l) if l >= 1 => PALETTE[(l as usize - 1) % PALETTE.len()],
        _ => SENTINEL_COLOR,
    }
}

/// Inverse of [`label_color`] over `1..=k`; `Some(None)` is the sentinel.
pub fn color_label(color: &str, k: usize) -> Option<Option<LabelId>> {
    if color == SENTINEL_COLOR {
        return Some(None);
    }
    (1..=k as LabelId).find(|&l| label_color(Some(l)) == color).map(Some)
}

fn label_text(label: Option<LabelId>) -> String {
    label.map_or_else(|| SENTINEL.to_string(), |l| l.to_string())
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One plotted timeline sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSample {
    pub session: u32,
    pub series: String,
    pub t: f64,
    pub label: i32,
}

pub const TIMELINE_SERIES: [&str; 3] = ["best", "second", "tmv"];
const STRIP_X0: f64 = 90.0;
const STRIP_W: f64 = 840.0;
const STRIP_H: f64 = 12.0;

/// Per-session prediction strips for one subject and task.
pub fn emit_timelines(
    result: &TmvResult,
    labels: &LabelSet,
    subject: &SubjectId,
    task: LabelId,
    out_dir: &Path,
) -> Result<Vec<Artifact>> {
    let blocks: Vec<_> = result
        .blocks
        .iter()
        .filter(|b| &b.key.subject == subject && b.key.task == task)
        .collect();
    if blocks.is_empty() {
        return Err(Error::UnknownSubjectTask {
            subject: subject.to_string(),
            task,
        });
    }
    let mut samples = Vec::new();
    for b in &blocks {
        for (si, series) in TIMELINE_SERIES.iter().enumerate() {
            for p in &b.points {
                let label = [p.best, p.second, p.tmv][si];
                samples.push(TimelineSample {
                    session: b.key.session,
                    series: series.to_string(),
                    t: p.t,
                    label: label.map_or(-1, i32::from),
                });
            }
        }
    }
    let (t0, t1) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.t), b.max(s.t)));
    let step = 1.0 / blocks.iter().flat_map(|b| b.points.windows(2)).map(|w| 1.0 / (w[1].t - w[0].t)).fold(1.0, f64::max);
    let span = (t1 - t0 + step).max(step);
    let row_h = STRIP_H * 3.0 + 10.0;
    let height = 40.0 + row_h * blocks.len() as f64 + 20.0 + 16.0 * labels.len() as f64;
    let mut svg = svg_open(STRIP_X0 + STRIP_W + 20.0, height);
    let task_name = labels.name(task).unwrap_or("?");
    let _ = writeln!(
        svg,
        "<text x=\"10\" y=\"18\">{} task {} ({}): predictions per session</text>",
        escape(subject.as_str()),
        task,
        escape(task_name)
    );
    for (bi, b) in blocks.iter().enumerate() {
        let y0 = 30.0 + bi as f64 * row_h;
        let note = if b.excluded { " (excluded, -1)" } else { "" };
        let _ = writeln!(svg, "<text x=\"4\" y=\"{:.1}\">session {}{}</text>", y0 + 10.0, b.key.session, note);
        for (si, series) in TIMELINE_SERIES.iter().enumerate() {
            let y = y0 + si as f64 * STRIP_H;
            for p in &b.points {
                let label = [p.best, p.second, p.tmv][si];
                let x = STRIP_X0 + (p.t - t0) / span * STRIP_W;
                let w = step / span * STRIP_W;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.3}\" y=\"{y:.1}\" width=\"{w:.3}\" height=\"{:.1}\" fill=\"{}\" data-session=\"{}\" data-series=\"{series}\" data-t=\"{}\"/>",
                    STRIP_H - 1.0,
                    label_color(label),
                    b.key.session,
                    p.t
                );
            }
        }
    }
    let ly = 40.0 + row_h * blocks.len() as f64;
    for (i, l) in labels.ids().map(Some).chain([None]).enumerate() {
        let y = ly + i as f64 * 16.0;
        let name = l.and_then(|l| labels.name(l)).unwrap_or("excluded");
        let _ = writeln!(
            svg,
            "<rect x=\"10\" y=\"{y:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"26\" y=\"{:.1}\">{} {}</text>",
            label_color(l),
            y + 9.0,
            label_text(l),
            escape(name)
        );
    }
    svg.push_str("</svg>\n");

    let stem = format!("timeline_{}_task{}", subject, task);
    let mut files = Vec::new();
    write(out_dir, &format!("{stem}.svg"), &svg, false, &mut files)?;
    write(out_dir, &format!("{stem}.csv"), &csv_string(&samples)?, false, &mut files)?;
    Ok(files)
}

/// Reads back the samples drawn in a timeline SVG.
pub fn parse_timeline_svg(svg: &str, k: usize) -> Result<Vec<TimelineSample>> {
    let attr = |tag: &str, name: &str| -> Option<String> {
        let pat = format!(" {name}=\"");
        let start = tag.find(&pat)? + pat.len();
        let end = tag[start..].find('"')? + start;
        Some(tag[start..end].to_string())
    };
    let mut out = Vec::new();
    for tag in svg.split('<').filter(|t| t.starts_with("rect ") && t.contains("data-series")) {
        let bad = || Error::EmptyResult(format!("malformed strip element: {tag}"));
        let fill = attr(tag, "fill").ok_or_else(bad)?;
        let label = color_label(&fill, k).ok_or_else(bad)?;
        out.push(TimelineSample {
            session: attr(tag, "data-session").and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            series: attr(tag, "data-series").ok_or_else(bad)?,
            t: attr(tag, "data-t").and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            label: label.map_or(-1, i32::from),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarRow {
    pub subject: String,
    pub series: String,
    pub accuracy: String,
}

/// Grouped bars per subject, subjects ordered by the first series
/// (descending, then by subject).
fn bar_chart(title: &str, series: &[(String, BTreeMap<SubjectId, f64>)]) -> (String, Vec<BarRow>) {
    let first = &series[0].1;
    let mut subjects: Vec<&SubjectId> = first.keys().collect();
    subjects.sort_by(|a, b| first[*b].total_cmp(&first[*a]).then(a.cmp(b)));
    let group_w = 18.0 * series.len() as f64 + 14.0;
    let (x0, y0, h) = (50.0, 40.0, 200.0);
    let width = x0 + group_w * subjects.len() as f64 + 170.0;
    let mut svg = svg_open(width, y0 + h + 50.0);
    let _ = writeln!(svg, "<text x=\"10\" y=\"18\">{}</text>", escape(title));
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>",
        y0 + h,
        x0 + group_w * subjects.len() as f64,
        y0 + h
    );
    let mut rows = Vec::new();
    for (si, subject) in subjects.iter().enumerate() {
        let gx = x0 + si as f64 * group_w;
        for (k, (name, values)) in series.iter().enumerate() {
            let Some(&v) = values.get(*subject) else { continue };
            let text = fmt3(v);
            let shown: f64 = text.parse().unwrap_or(v);
            let bh = shown.clamp(0.0, 1.0) * h;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.3}\" width=\"16\" height=\"{:.3}\" fill=\"{}\" data-subject=\"{}\" data-series=\"{}\" data-value=\"{}\"/>",
                gx + k as f64 * 18.0,
                y0 + h - bh,
                bh,
                PALETTE[k % PALETTE.len()],
                escape(subject.as_str()),
                escape(name),
                text
            );
            rows.push(BarRow {
                subject: subject.to_string(),
                series: name.clone(),
                accuracy: text,
            });
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            gx,
            y0 + h + 14.0,
            escape(subject.as_str())
        );
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let lx = x0 + group_w * subjects.len() as f64 + 20.0;
        let ly = y0 + k as f64 * 16.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{lx:.1}\" y=\"{ly:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            PALETTE[k % PALETTE.len()],
            lx + 16.0,
            ly + 9.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    (svg, rows)
}

/// Per-subject accuracy bars for Phase 1 (every classifier, best first)
/// and Phase 2 (best, second, TMV).
pub fn emit_subject_bars(
    result: &TmvResult,
    ranking: &PhaseOneRanking,
    phase1: &[EvalSummary],
    out_dir: &Path,
) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    let mut p1: Vec<(String, BTreeMap<SubjectId, f64>)> = Vec::new();
    for entry in &ranking.entries {
        if let Some(s) = phase1.iter().find(|s| s.classifier == entry.spec) {
            p1.push((
                entry.spec.family().display_name().to_string(),
                s.per_subject.iter().map(|p| (p.subject.clone(), p.accuracy)).collect(),
            ));
        }
    }
    if !p1.is_empty() {
        let (svg, rows) = bar_chart("Phase 1 accuracy per subject", &p1);
        write(out_dir, "subjects_phase1.svg", &svg, false, &mut files)?;
        write(out_dir, "subjects_phase1.csv", &csv_string(&rows)?, false, &mut files)?;
    }
    let pick = |f: fn(&crate::tmv::SubjectOutcome) -> f64| -> BTreeMap<SubjectId, f64> {
        result.subjects.iter().map(|s| (s.subject.clone(), f(s))).collect()
    };
    let p2 = vec![
        (format!("{} Phase 2", result.best.family().display_name()), pick(|s| s.best_accuracy)),
        (format!("{} Phase 2", result.second.family().display_name()), pick(|s| s.second_accuracy)),
        ("TMV".to_string(), pick(|s| s.tmv_accuracy)),
    ];
    let (svg, rows) = bar_chart("Phase 2 accuracy per subject", &p2);
    write(out_dir, "subjects_phase2.svg", &svg, false, &mut files)?;
    write(out_dir, "subjects_phase2.csv", &csv_string(&rows)?, false, &mut files)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRuntimeRow {
    pub subject: String,
    pub retained_rows: usize,
    pub fit_s: String,
}

/// Retained rows against Phase-2 fit time per subject.
pub fn emit_data_runtime(result: &TmvResult, timing: &Phase2Timing, out_dir: &Path) -> Result<Vec<Artifact>> {
    let rows: Vec<DataRuntimeRow> = result
        .subjects
        .iter()
        .filter(|s| s.retained_rows > 0)
        .filter_map(|s| {
            timing.per_subject.iter().find(|(id, _, _)| id == &s.subject).map(|(_, b, c)| DataRuntimeRow {
                subject: s.subject.to_string(),
                retained_rows: s.retained_rows,
                fit_s: fmt3(b + c),
            })
        })
        .collect();
    let (x0, y0, w, h) = (60.0, 30.0, 400.0, 240.0);
    let max_rows = rows.iter().map(|r| r.retained_rows).max().unwrap_or(1).max(1) as f64;
    let max_s = rows
        .iter()
        .filter_map(|r| r.fit_s.parse::<f64>().ok())
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut svg = svg_open(x0 + w + 30.0, y0 + h + 40.0);
    let _ = writeln!(svg, "<text x=\"10\" y=\"18\">Phase 2 fit time against retained rows</text>");
    let _ = writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/><line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{:.1}\" stroke=\"#333\"/>",
        y0 + h,
        x0 + w,
        y0 + h,
        y0 + h
    );
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\">retained rows (max {})</text>", x0 + w / 2.0 - 60.0, y0 + h + 30.0, max_rows);
    let _ = writeln!(svg, "<text x=\"4\" y=\"{:.1}\">{:.3} s</text>", y0 + 10.0, max_s);
    for r in &rows {
        let s: f64 = r.fit_s.parse().unwrap_or(0.0);
        let cx = x0 + r.retained_rows as f64 / max_rows * w;
        let cy = y0 + h - s / max_s * h;
        let _ = writeln!(
            svg,
            "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"4\" fill=\"{}\" data-subject=\"{}\" data-rows=\"{}\" data-seconds=\"{}\"/>",
            PALETTE[0],
            escape(&r.subject),
            r.retained_rows,
            r.fit_s
        );
    }
    svg.push_str("</svg>\n");
    let mut files = Vec::new();
    write(out_dir, "data_runtime.svg", &svg, true, &mut files)?;
    write(out_dir, "data_runtime.csv", &csv_string(&rows)?, true, &mut files)?;
    Ok(files)
}

/// Pairs every SVG with a CSV of the same stem.
pub fn check_twins(files: &[Artifact]) -> Vec<String> {
    files
        .iter()
        .filter(|a| a.path.extension().is_some_and(|e| e == "svg"))
        .filter(|a| !files.iter().any(|b| b.path == a.path.with_extension("csv")))
        .map(|a| format!("{} has no CSV twin", a.path.display()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakdown_matches_table_format() {
        assert_eq!(format_breakdown(&[39.1, 29.5, 5.7]), "39.1 + 29.5 + 5.7 = 74.3");
        // parts round first, so the total is their exact sum
        assert_eq!(format_breakdown(&[0.04, 0.04, 0.04]), "0.0 + 0.0 + 0.0 = 0.0");
        assert_eq!(format_breakdown(&[1.06, 2.06, 0.06]), "1.1 + 2.1 + 0.1 = 3.3");
        assert_eq!(format_breakdown(&[12.0, 0.0, 0.349]), "12.0 + 0.0 + 0.3 = 12.3");
    }

    #[test]
    fn colors_round_trip() {
        for l in 1..=5 {
            assert_eq!(color_label(label_color(Some(l)), 5), Some(Some(l)));
        }
        assert_eq!(color_label(label_color(None), 5), Some(None));
        assert_eq!(color_label("#000000", 5), None);
    }

    #[test]
    fn sentinel_cells() {
        assert_eq!(fmt_opt(None), "-1");
        assert_eq!(fmt_opt(Some(0.5)), "0.500");
    }
}
