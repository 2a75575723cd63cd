use std::collections::BTreeSet;

use tmv_core::classifiers::ClassifierSpec;
use tmv_core::cleaning::{run_cleaning, CleaningConfig};
use tmv_core::cv::{evaluate, make_splits, partition_folds, CvConfig, FoldPlan};
use tmv_core::dataset::Dataset;
use tmv_core::synth::{generate, SynthConfig};

fn paper_clean() -> Dataset {
    let (raw, _) = generate(&SynthConfig::preset("paper").unwrap()).unwrap();
    run_cleaning(&raw, &CleaningConfig::default()).unwrap().0
}

fn window(cfg: &CvConfig, fold: usize) -> (f64, f64) {
    let lo = cfg.window_start_s + fold as f64 * cfg.subset_seconds;
    (lo, lo + cfg.subset_seconds)
}

/// Checks every split against the raw timestamps: each range holds exactly
/// the block's rows inside its fold window, test and train never share a
/// row, and no training row falls inside the test window.
fn leakage_report(ds: &Dataset, plan: &FoldPlan) -> (usize, Vec<String>) {
    let cfg = &plan.config;
    let mut checked = 0;
    let mut problems = Vec::new();
    for split in make_splits(plan).unwrap() {
        let (test_lo, test_hi) = window(cfg, split.test_fold);
        for sb in &split.blocks {
            let block = &ds.blocks[sb.block_index];
            let in_window = |lo: f64, hi: f64| -> Vec<usize> {
                (0..block.len())
                    .filter(|&i| block.rows[i].t >= lo - 1e-9 && block.rows[i].t < hi - 1e-9)
                    .collect()
            };
            let test: BTreeSet<usize> = sb.test.clone().into_iter().flatten().collect();
            let train: BTreeSet<usize> = sb.train.iter().flat_map(|r| r.clone()).collect();
            if !test.is_disjoint(&train) {
                problems.push(format!("{} split {}: shared rows", block.key, split.test_fold));
            }
            if let Some(r) = &sb.test {
                if r.clone().collect::<Vec<_>>() != in_window(test_lo, test_hi) {
                    problems.push(format!("{} split {}: test range is not its window", block.key, split.test_fold));
                }
            }
            for r in &sb.train {
                let t0 = block.rows[r.start].t;
                let fold = ((t0 - cfg.window_start_s + 1e-9) / cfg.subset_seconds).floor() as usize;
                let (lo, hi) = window(cfg, fold);
                if fold == split.test_fold || r.clone().collect::<Vec<_>>() != in_window(lo, hi) {
                    problems.push(format!("{} split {}: train range {r:?} leaks", block.key, split.test_fold));
                }
            }
            if train.iter().any(|&i| block.rows[i].t >= test_lo - 1e-9 && block.rows[i].t < test_hi - 1e-9) {
                problems.push(format!("{} split {}: train row in test window", block.key, split.test_fold));
            }
            let (tr, te) = split.rows_for(&[sb.block_index]);
            let tr: BTreeSet<_> = tr.into_iter().collect();
            if te.iter().any(|r| tr.contains(r)) {
                problems.push(format!("{} split {}: row refs overlap", block.key, split.test_fold));
            }
            checked += 1;
        }
    }
    (checked, problems)
}

#[test]
fn no_leakage_over_all_subjects_of_paper_preset() {
    let ds = paper_clean();
    let plan = partition_folds(&ds, &CvConfig::default()).unwrap();
    let (checked, problems) = leakage_report(&ds, &plan);
    assert!(checked >= 7 * ds.blocks.len() - plan.discarded().len() * 0, "{checked}");
    assert!(problems.is_empty(), "{problems:#?}");
    assert_eq!(ds.subjects().len(), 12);
}

#[test]
fn full_blocks_give_seven_folds_of_sixty_rows() {
    let ds = paper_clean();
    let plan = partition_folds(&ds, &CvConfig::default()).unwrap();
    assert_eq!(plan.fold_nominal_rows, 60);
    let intact = plan
        .blocks
        .iter()
        .filter(|b| ds.blocks[b.block_index].len() == 420)
        .collect::<Vec<_>>();
    assert!(!intact.is_empty());
    for b in intact {
        assert_eq!(b.folds.len(), 7);
        assert!(b.folds.iter().all(|f| f.rows.len() == 60 && !f.discarded));
    }
}

#[test]
fn discarded_folds_lost_more_than_65_percent() {
    let ds = paper_clean();
    let plan = partition_folds(&ds, &CvConfig::default()).unwrap();
    for b in &plan.blocks {
        for f in &b.folds {
            let lost = 1.0 - f.rows.len() as f64 / 60.0;
            assert_eq!(f.discarded, lost > 0.65 + 1e-9, "{} {:?}", b.key, f);
        }
    }
}

#[test]
fn evaluate_trains_only_on_planned_rows() {
    let ds = paper_clean();
    let subjects = ds.subjects();
    let ds = ds.filter_blocks(|b| b.key.subject == subjects[0]);
    let plan = partition_folds(&ds, &CvConfig::default()).unwrap();
    let spec = ClassifierSpec::parse_list("lda").unwrap()[0];
    let r = evaluate(&ds, &plan, &spec, 42).unwrap();
    let splits = make_splits(&plan).unwrap();
    for count in &r.training_rows {
        let idx = ds.blocks.iter().position(|b| b.key == count.key).unwrap();
        let expected: usize = splits
            .iter()
            .map(|s| s.blocks[idx].train.iter().map(|r| r.len()).sum::<usize>())
            .sum();
        assert_eq!(count.rows, expected, "{}", count.key);
    }
    for tl in &r.timelines {
        let block = ds.block(&tl.key).unwrap();
        let planned: usize = splits.iter().filter_map(|s| s.blocks.iter().find(|b| ds.blocks[b.block_index].key == tl.key)?.test.clone()).map(|r| r.len()).sum();
        assert_eq!(tl.points.len(), planned, "{}", block.key);
    }
}
