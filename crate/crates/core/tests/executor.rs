mod common;

use std::collections::BTreeMap;

use common::*;
use kgflow::executor::{execute, load_bindings, ExecError, Mode, Payload, RunBindings, Schedule};
use kgflow::kg::{parse_json_plan, parse_yaml_plan, Dag, KnowledgeGraph};
use kgflow::registry::builtin_registry;
use kgflow::tools::SegmenterWeights;

fn plan() -> KnowledgeGraph {
    parse_json_plan(&three_target_plan()).unwrap()
}

fn bindings(ds: &Dataset, mode: Mode, out: &std::path::Path) -> RunBindings {
    load_bindings(&ds.bindings, mode, out).unwrap()
}

#[test]
fn learn_then_think_on_separable_data() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 10, 5, 0.0, 7);
    let out = dir.path().join("out");
    let reg = builtin_registry();

    let learned = execute(&plan(), &reg, &bindings(&ds, Mode::Learn, &out)).unwrap();
    assert_eq!(learned.weights.len(), 3);
    let (t, d) = oracle_threshold(&ds.train);
    assert_eq!(t, BG_MAX + 1);
    assert_eq!(d, 1.0);
    for w in &learned.weights {
        let weights = SegmenterWeights::parse(&std::fs::read_to_string(w).unwrap()).unwrap();
        assert_eq!(weights.threshold, t);
    }
    // Save chunks are not upstream of any trainable agent.
    assert!(learned.fired.iter().all(|c| c.chunk != "save"));

    let thought = execute(&plan(), &reg, &bindings(&ds, Mode::Think, &out)).unwrap();
    assert_eq!(thought.masks.len(), 15);
    assert_eq!(thought.overlays.len(), 15);
    assert_eq!(thought.dice.len(), 15);
    assert_eq!(thought.mean_dice(None), Some(1.0));
    assert!(out.join("chest_xr_ribs_4.png").is_file());
    assert!(out.join("masks/heart_chest_xr_0.png").is_file());
    assert!(out.join("blackboard.json").is_file());
}

#[test]
fn think_before_learn_is_missing_weights() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 2, 1, 0.0, 1);
    let err = execute(&plan(), &builtin_registry(), &bindings(&ds, Mode::Think, &dir.path().join("o"))).unwrap_err();
    assert!(matches!(err, ExecError::MissingWeights { .. }), "{err}");
}

#[test]
fn unbound_placeholder_and_unverified_plan() {
    let reg = builtin_registry();
    let b = RunBindings::new(Mode::Think, "unused");
    assert!(matches!(execute(&plan(), &reg, &b), Err(ExecError::Bindings(_))));
    let bad = parse_json_plan(r#"{"chunks": {"s": {"c": {"agents": {"z_score": {}}}}}}"#).unwrap();
    assert!(matches!(execute(&bad, &reg, &b), Err(ExecError::NotVerified(_))));
}

#[test]
fn schedules_give_identical_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 4, 3, 0.05, 3);
    let reg = builtin_registry();
    let g = plan();
    let dag = Dag::build(&g).unwrap();
    let n = dag.nodes.len();
    let schedules = [
        Schedule::Authoring,
        Schedule::Reverse,
        Schedule::Permuted((0..n).map(|i| (i * 7 + 3) % n).collect()),
    ];
    let mut dumps = Vec::new();
    let mut orders = Vec::new();
    for (i, s) in schedules.iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let mut learn = bindings(&ds, Mode::Learn, &out);
        learn.schedule = s.clone();
        execute(&g, &reg, &learn).unwrap();
        let mut think = bindings(&ds, Mode::Think, &out);
        think.schedule = s.clone();
        let r = execute(&g, &reg, &think).unwrap();
        // Every chunk fires after all of its producers.
        let pos: BTreeMap<_, _> = r.fired.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        for (node, links) in dag.inputs.iter().enumerate() {
            for l in links {
                assert!(pos[&dag.nodes[l.producer]] < pos[&dag.nodes[node]]);
            }
        }
        orders.push(r.fired.clone());
        dumps.push(std::fs::read(out.join("blackboard.json")).unwrap());
    }
    assert_ne!(orders[0], orders[1], "schedules should differ");
    assert_eq!(dumps[0], dumps[1]);
    assert_eq!(dumps[0], dumps[2]);
}

#[test]
fn single_reader_posts_one_message_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 3, 3, 0.0, 5);
    let g = parse_json_plan(
        r#"{"chunks": {"img": {"load": {"agents": {"reader": {"csv_path": "__input_images__", "header_params": "image"}}}}}}"#,
    )
    .unwrap();
    let r = execute(&g, &builtin_registry(), &bindings(&ds, Mode::Think, &dir.path().join("o"))).unwrap();
    assert_eq!(r.blackboard.len(), 3);
    assert!(r.blackboard.messages().iter().all(|m| m.tag == "img/load/reader"));
}

#[test]
fn ribs_plan_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 1, 1, 0.0, 11);
    let g = parse_yaml_plan(&std::fs::read_to_string(fixture("plans/ribs_chest_xr.yaml")).unwrap()).unwrap();
    let reg = builtin_registry();
    let out = dir.path().join("o");
    let mut learn = bindings(&ds, Mode::Learn, &out);
    learn.substitutions.insert("__input_images__".into(), "data/test.csv".into());
    execute(&g, &reg, &learn).unwrap();
    assert!(out
        .join("weights/simplemind/example/sub/weights/ribs_chest_xr/weights.txt")
        .is_file());
    let r = execute(&g, &reg, &bindings(&ds, Mode::Think, &out)).unwrap();
    let board = &r.blackboard;
    for tag in [
        "chest_xr_image/load_image/reader",
        "ribs_chest_xr/image_processing/z_score",
        "ribs_chest_xr/neural_net/tf2_segmentation",
        "ribs_chest_xr",
    ] {
        assert!(board.latest(tag).is_some(), "missing {tag}");
    }
    assert_eq!(r.overlays, vec![out.join("chest_xr_ribs_0.png")]);
    // The processed image chain: reader, resize, expand, clahe, z_score.
    let (head, chain) = board.query_chain("ribs_chest_xr/image_processing").unwrap();
    assert_eq!(head.tag, "ribs_chest_xr/image_processing/z_score");
    assert_eq!(chain.len(), 4);
    if let Payload::Image(img) = head.payload.as_ref() {
        assert_eq!((img.width, img.height), (512, 512));
    } else {
        panic!("z_score should post an image");
    }
    // The mask is returned at the original image geometry.
    match board.latest("ribs_chest_xr").unwrap().payload.as_ref() {
        Payload::Mask(m) => assert_eq!((m.width, m.height), (SIDE, SIDE)),
        _ => panic!("expected a mask"),
    }
}

#[test]
fn retraining_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 5, 1, 0.05, 2);
    let reg = builtin_registry();
    let mut texts = Vec::new();
    for run in 0..2 {
        let r = execute(&plan(), &reg, &bindings(&ds, Mode::Learn, &dir.path().join(format!("r{run}")))).unwrap();
        texts.push(r.weights.iter().map(|w| std::fs::read(w).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn preprocessing_matches_between_modes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 3, 1, 0.05, 9);
    let reg = builtin_registry();
    let out = dir.path().join("o");
    let learn = execute(&plan(), &reg, &bindings(&ds, Mode::Learn, &out)).unwrap();
    let mut think_b = bindings(&ds, Mode::Think, &out);
    think_b.substitutions.insert("__input_images__".into(), "data/train.csv".into());
    let think = execute(&plan(), &reg, &think_b).unwrap();
    let hashes = |r: &kgflow::executor::ExecutionResult| -> Vec<(String, Option<usize>, String)> {
        r.blackboard
            .messages()
            .iter()
            .filter(|m| m.tag.contains("image_processing"))
            .map(|m| (m.tag.clone(), m.case, m.payload.digest()))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    assert!(!hashes(&learn).is_empty());
    assert_eq!(hashes(&learn), hashes(&think));
}

#[test]
fn all_background_image_gives_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), 4, 1, 0.0, 4);
    let reg = builtin_registry();
    let out = dir.path().join("o");
    execute(&plan(), &reg, &bindings(&ds, Mode::Learn, &out)).unwrap();
    let blank = kgflow::tools::ImageBuffer::filled(SIDE, SIDE, 1, 100.0);
    kgflow::tools::image::save_gray_png(&blank, &dir.path().join("blank.png")).unwrap();
    std::fs::write(dir.path().join("blank.csv"), "image\nblank.png\n").unwrap();
    let mut b = bindings(&ds, Mode::Think, &out);
    b.substitutions.insert("__input_images__".into(), "blank.csv".into());
    let r = execute(&plan(), &reg, &b).unwrap();
    match r.blackboard.latest("ribs_chest_xr").unwrap().payload.as_ref() {
        Payload::Mask(m) => assert_eq!(m.count(), 0),
        _ => panic!("expected a mask"),
    }
    assert!(r.dice.is_empty());
}
