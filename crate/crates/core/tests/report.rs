use std::collections::BTreeMap;
use std::path::Path;

use tmv_core::classifiers::ClassifierSpec;
use tmv_core::cv::{evaluate, partition_folds, CvConfig, EvalSummary, SubjectScore};
use tmv_core::dataset::{BlockKey, LabelSet};
use tmv_core::report::{
    emit_comparison, emit_data_runtime, emit_subject_bars, emit_timelines, format_breakdown, parse_timeline_svg,
    TimelineSample,
};
use tmv_core::synth::{generate, SynthConfig};
use tmv_core::tmv::{
    BlockOutcome, Phase2Timing, PhaseOneRanking, RankedClassifier, RuntimeBreakdown, SubjectOutcome, TmvPoint,
    TmvResult,
};
use tmv_core::Error;

fn spec(s: &str) -> ClassifierSpec {
    ClassifierSpec::parse_list(s).unwrap()[0]
}

fn points(truth: u8, preds: &[(u8, u8)]) -> Vec<TmvPoint> {
    preds
        .iter()
        .enumerate()
        .map(|(i, &(b, s))| TmvPoint {
            fold: i / 6,
            t: 18.0 + i as f64 * 0.1,
            truth,
            best: Some(b),
            second: Some(s),
            tmv: Some(if b == s { b } else { truth }),
        })
        .collect()
}

/// Subject s3, task 1, six sessions; sessions 2, 3 and 5 excluded.
fn fixture() -> (TmvResult, PhaseOneRanking) {
    let mut blocks = Vec::new();
    for session in 1..=6u32 {
        let key = BlockKey::new("s3", session, 1);
        let excluded = [2, 3, 5].contains(&session);
        let pts: Vec<(u8, u8)> = (0..42).map(|i| if session == 1 || i % 3 == 0 { (1, 1) } else { (2, 1) }).collect();
        let mut p = points(1, &pts);
        if excluded {
            for x in &mut p {
                x.best = None;
                x.second = None;
                x.tmv = None;
            }
        }
        let acc = |f: fn(&TmvPoint) -> Option<u8>| -> Option<f64> {
            (!excluded).then(|| p.iter().filter(|x| f(x) == Some(x.truth)).count() as f64 / p.len() as f64)
        };
        blocks.push(BlockOutcome {
            key,
            excluded,
            majority: (!excluded).then_some(1),
            best_accuracy: acc(|x| x.best),
            second_accuracy: acc(|x| x.second),
            tmv_accuracy: acc(|x| x.tmv),
            points: p.clone(),
        });
    }
    let second_subject = BlockKey::new("s1", 1, 1);
    blocks.insert(
        0,
        BlockOutcome {
            key: second_subject,
            excluded: false,
            majority: Some(1),
            best_accuracy: Some(0.9),
            second_accuracy: Some(0.8),
            tmv_accuracy: Some(0.95),
            points: points(1, &[(1, 1); 42]),
        },
    );
    let result = TmvResult {
        best: spec("rf"),
        second: spec("svm-rbf"),
        frozen_majority: false,
        subjects: vec![
            SubjectOutcome {
                subject: "s1".into(),
                best_accuracy: 0.9,
                second_accuracy: 0.8,
                tmv_accuracy: 0.95,
                retained_blocks: 1,
                retained_rows: 420,
            },
            SubjectOutcome {
                subject: "s3".into(),
                best_accuracy: 0.5,
                second_accuracy: 0.9,
                tmv_accuracy: 1.0,
                retained_blocks: 3,
                retained_rows: 1260,
            },
        ],
        blocks,
        best_mean: 0.7,
        second_mean: 0.85,
        tmv_mean: 0.975,
        timing: Phase2Timing {
            breakdown: RuntimeBreakdown {
                best_fit_s: 39.1,
                second_fit_s: 29.5,
                vote_s: 5.7,
            },
            per_subject: vec![("s1".into(), 1.0, 2.0), ("s3".into(), 3.0, 4.0)],
        },
    };
    let ranking = PhaseOneRanking {
        entries: vec![
            RankedClassifier {
                spec: spec("rf"),
                mean_accuracy: 0.55,
                mean_runtime_s: 3.0,
            },
            RankedClassifier {
                spec: spec("svm-rbf"),
                mean_accuracy: 0.53,
                mean_runtime_s: 2.0,
            },
        ],
    };
    (result, ranking)
}

fn read_csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|x| x.unwrap()).collect()
}

#[test]
fn breakdown_string() {
    assert_eq!(format_breakdown(&[39.1, 29.5, 5.7]), "39.1 + 29.5 + 5.7 = 74.3");
}

#[test]
fn phase2_table_puts_tmv_first_and_grid_uses_sentinels() {
    let (result, ranking) = fixture();
    let dir = tempfile::tempdir().unwrap();
    emit_comparison(&result, &ranking, dir.path()).unwrap();
    let rows = read_csv_rows(&dir.path().join("phase2_accuracy.csv"));
    let algos: Vec<&str> = rows.iter().map(|r| r["algorithm"].as_str()).collect();
    assert_eq!(algos[0], "TMV");
    let accs: Vec<f64> = rows.iter().map(|r| r["mean_accuracy"].parse().unwrap()).collect();
    assert!(accs.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(rows[0]["mean_accuracy"], "0.975");

    let grid = read_csv_rows(&dir.path().join("block_grid.csv"));
    for (row, block) in grid.iter().zip(&result.blocks) {
        assert_eq!(row["best"] == "-1", block.excluded);
        assert_eq!(row["tmv"] == "-1", block.excluded);
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("block_grid.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), grid.len());
}

#[test]
fn empty_result_is_an_error() {
    let (mut result, ranking) = fixture();
    result.blocks.clear();
    result.subjects.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_comparison(&result, &ranking, dir.path()), Err(Error::EmptyResult(_))));
}

#[test]
fn timeline_svg_matches_csv_and_shows_excluded_bands() {
    let (result, _) = fixture();
    let dir = tempfile::tempdir().unwrap();
    emit_timelines(&result, &LabelSet::tcr(), &"s3".into(), 1, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("timeline_s3_task1.svg")).unwrap();
    let from_svg = parse_timeline_svg(&svg, 5).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("timeline_s3_task1.csv")).unwrap();
    let from_csv: Vec<TimelineSample> = r.deserialize().map(|x| x.unwrap()).collect();
    assert_eq!(from_svg, from_csv);
    assert_eq!(from_csv.len(), 6 * 3 * 42);

    let mut flat = std::collections::BTreeSet::new();
    for s in &from_csv {
        if s.label == -1 {
            flat.insert(s.session);
        }
    }
    assert_eq!(flat.into_iter().collect::<Vec<_>>(), vec![2, 3, 5]);
    for s in from_csv.iter().filter(|s| [2, 3, 5].contains(&s.session)) {
        assert_eq!(s.label, -1);
    }
    // session 1 is perfect: one colour, the true task
    assert!(from_csv.iter().filter(|s| s.session == 1).all(|s| s.label == 1));
    let ts: Vec<f64> = from_csv.iter().filter(|s| s.session == 1 && s.series == "tmv").map(|s| s.t).collect();
    assert!(ts[0] >= 18.0 && *ts.last().unwrap() < 60.0);

    assert!(matches!(
        emit_timelines(&result, &LabelSet::tcr(), &"s9".into(), 1, dir.path()),
        Err(Error::UnknownSubjectTask { .. })
    ));
}

#[test]
fn bars_are_sorted_by_best_accuracy_and_match_csv() {
    let (result, ranking) = fixture();
    let phase1 = vec![
        EvalSummary {
            classifier: spec("rf"),
            per_subject: vec![
                SubjectScore { subject: "s1".into(), accuracy: 0.4, runtime_s: 1.0 },
                SubjectScore { subject: "s3".into(), accuracy: 0.7, runtime_s: 1.0 },
            ],
            mean_accuracy: 0.55,
            timelines_ref: String::new(),
        },
        EvalSummary {
            classifier: spec("svm-rbf"),
            per_subject: vec![
                SubjectScore { subject: "s1".into(), accuracy: 0.6, runtime_s: 1.0 },
                SubjectScore { subject: "s3".into(), accuracy: 0.46, runtime_s: 1.0 },
            ],
            mean_accuracy: 0.53,
            timelines_ref: String::new(),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    emit_subject_bars(&result, &ranking, &phase1, dir.path()).unwrap();
    let p1 = read_csv_rows(&dir.path().join("subjects_phase1.csv"));
    assert_eq!(p1[0]["subject"], "s3");
    let p2 = read_csv_rows(&dir.path().join("subjects_phase2.csv"));
    assert_eq!(p2[0]["subject"], "s1");
    for (name, rows) in [("subjects_phase1", &p1), ("subjects_phase2", &p2)] {
        let svg = std::fs::read_to_string(dir.path().join(format!("{name}.svg"))).unwrap();
        let values: Vec<&str> = svg
            .split("data-value=\"")
            .skip(1)
            .map(|s| &s[..s.find('"').unwrap()])
            .collect();
        let csv: Vec<&str> = rows.iter().map(|r| r["accuracy"].as_str()).collect();
        assert_eq!(values, csv, "{name}");
    }
}

#[test]
fn data_runtime_skips_empty_subjects() {
    let (mut result, _) = fixture();
    let dir = tempfile::tempdir().unwrap();
    emit_data_runtime(&result, &result.timing.clone(), dir.path()).unwrap();
    assert_eq!(read_csv_rows(&dir.path().join("data_runtime.csv")).len(), 2);
    result.subjects[0].retained_rows = 0;
    emit_data_runtime(&result, &result.timing.clone(), dir.path()).unwrap();
    let rows = read_csv_rows(&dir.path().join("data_runtime.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["subject"], "s3");
    let svg = std::fs::read_to_string(dir.path().join("data_runtime.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
}

#[test]
fn report_files_are_byte_identical_on_rerun() {
    let (result, ranking) = fixture();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        emit_comparison(&result, &ranking, d).unwrap();
        emit_timelines(&result, &LabelSet::tcr(), &"s3".into(), 1, d).unwrap();
    }
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn doubling_rows_increases_rf_fit_time() {
    let base = SynthConfig {
        subjects: 1,
        sessions: 3,
        corrupted_subject_count: 0,
        corrupted_session_specs: vec![],
        ..SynthConfig::preset("small").unwrap()
    };
    let rf = spec("rf:trees=30");
    let time_for = |sessions: u32| {
        let (ds, _) = generate(&SynthConfig { sessions, ..base.clone() }).unwrap();
        let ds = tmv_core::cleaning::run_cleaning(&ds, &Default::default()).unwrap().0;
        let plan = partition_folds(&ds, &CvConfig::default()).unwrap();
        (0..3)
            .map(|_| evaluate(&ds, &plan, &rf, 1).unwrap().per_subject[0].runtime_s)
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (time_for(3), time_for(6));
    assert!(large > small, "3 sessions {small:.3}s, 6 sessions {large:.3}s");
}
