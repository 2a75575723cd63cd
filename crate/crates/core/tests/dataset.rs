use proptest::prelude::*;
use tmv_core::dataset::{
    read_csv, validate, write_csv, BlockKey, CsvSchema, Dataset, Finding, LabelSet, RecordingRow, TaskBlock,
};
use tmv_core::synth::{generate, SynthConfig};
use tmv_core::Error;

fn read(text: &str) -> tmv_core::Result<Dataset> {
    read_csv(text.as_bytes(), &CsvSchema::default(), 10.0, LabelSet::tcr())
}

#[test]
fn three_rows_make_one_block() {
    let ds = read("subject,session,task,t,f0,f1\ns1,1,Think,0.0,1,2\ns1,1,Think,0.1,3,4\ns1,1,Think,0.2,5,6\n").unwrap();
    assert_eq!(ds.blocks.len(), 1);
    assert_eq!(ds.blocks[0].len(), 3);
    assert_eq!(ds.blocks[0].key, BlockKey::new("s1", 1, 1));
}

#[test]
fn unknown_task_is_rejected() {
    let err = read("subject,session,task,t,f0\ns1,1,Jump,0.0,1\n").unwrap_err();
    assert!(matches!(err, Error::UnknownLabel(ref l) if l == "Jump"), "{err}");
}

#[test]
fn short_block_and_duplicate_are_reported() {
    let (ds, _) = generate(&SynthConfig::preset("small").unwrap()).unwrap();
    let mut blocks = ds.blocks.clone();
    blocks[0].rows.pop();
    let dup = blocks[1].clone();
    blocks.push(dup);
    let report = validate(&Dataset::new(ds.label_set.clone(), blocks, 10.0, "edited"));
    assert!(report
        .findings
        .iter()
        .any(|f| matches!(f, Finding::ShortBlock { rows: 599, nominal: 600, .. })));
    assert!(report
        .findings
        .iter()
        .any(|f| matches!(f, Finding::DuplicateTriple { key } if *key == ds.blocks[1].key)));
    assert!(validate(&ds).is_clean());
}

#[test]
fn synthetic_12_subjects_round_trip_to_360_blocks() {
    let cfg = SynthConfig {
        subjects: 12,
        corrupted_subject_count: 0,
        corrupted_session_specs: vec![],
        ..SynthConfig::preset("paper").unwrap()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &CsvSchema::default(), 10.0, LabelSet::tcr()).unwrap();
    assert_eq!(back.blocks.len(), 360);
    assert!(back.blocks.iter().all(|b| b.len() == 600));
    assert_eq!(back.blocks, ds.blocks);
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    let row = (1usize..4).prop_flat_map(|d| {
        prop::collection::vec(
            (
                "s[0-9]{1,2}",
                1u32..4,
                1u8..=5,
                prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), d), 1..6),
            ),
            1..6,
        )
    });
    row.prop_map(|blocks| {
        let mut seen = std::collections::BTreeSet::new();
        let blocks = blocks
            .into_iter()
            .filter(|(s, sess, task, _)| seen.insert((s.clone(), *sess, *task)))
            .map(|(s, sess, task, feats)| {
                let rows = feats
                    .into_iter()
                    .enumerate()
                    .map(|(i, f)| RecordingRow { t: i as f64 * 0.1, features: f })
                    .collect();
                TaskBlock::new(BlockKey::new(s, sess, task), rows, 10.0)
            })
            .collect();
        Dataset::new(LabelSet::tcr(), blocks, 10.0, "csv")
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_bitwise(ds in arb_dataset()) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default(), 10.0, LabelSet::tcr()).unwrap();
        prop_assert_eq!(back.blocks.len(), ds.blocks.len());
        for (a, b) in back.blocks.iter().zip(&ds.blocks) {
            prop_assert_eq!(&a.key, &b.key);
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                prop_assert_eq!(ra.t.to_bits(), rb.t.to_bits());
                let bits = |r: &RecordingRow| r.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(ra), bits(rb));
            }
        }
    }
}
