mod common;

use std::collections::HashSet;
use std::fs;

use orbitsynth::annotation::{Annotation, PixelBox};
use orbitsynth::datasetio::{
    read_coco, read_coco_file, read_split_file, read_yolo, split_dataset, subsample_train, write_coco,
    write_coco_file, write_split_files, write_yolo, yolo_line, DatasetManifest, ManifestEntry,
    DEFAULT_RATIOS,
};
use orbitsynth::Error;
use proptest::prelude::*;

fn plain_manifest(n: usize) -> DatasetManifest {
    let entries = (0..n)
        .map(|i| ManifestEntry {
            image_id: format!("{i:06}"),
            image_path: format!("images/{i:06}.png"),
            width: 641,
            height: 512,
            annotations: vec![],
            scene_spec: None,
        })
        .collect();
    DatasetManifest::new(vec!["satellite".into()], entries).unwrap()
}

fn boxes_only(m: &DatasetManifest) -> Vec<Vec<(u32, PixelBox)>> {
    m.entries
        .iter()
        .map(|e| e.annotations.iter().map(|a| (a.class_id, a.bbox)).collect())
        .collect()
}

#[test]
fn yolo_line_examples() {
    let b = PixelBox::new(40, 80, 140, 280).unwrap();
    assert_eq!(yolo_line(0, &b, 641, 512), "0 0.140406 0.351562 0.156006 0.390625");
    let full = PixelBox::new(0, 0, 641, 512).unwrap();
    assert_eq!(yolo_line(2, &full, 641, 512), "2 0.500000 0.500000 1.000000 1.000000");
}

#[test]
fn coco_round_trip_keeps_masks() {
    let mut rng = common::rng(4);
    for _ in 0..50 {
        let m = common::random_manifest(&mut rng);
        let back = read_coco(&write_coco(&m)).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.annotations().zip(back.annotations()) {
            let (ma, mb) = (a.mask.as_ref().unwrap().decode().unwrap(), b.mask.as_ref().unwrap().decode().unwrap());
            assert_eq!(ma, mb);
            assert_eq!(Some(a.bbox), common::mask_bounds_box(&mb));
        }
    }
}

#[test]
fn coco_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::random_manifest(&mut common::rng(9));
    let path = dir.path().join("annotations.json");
    write_coco_file(&m, &path).unwrap();
    assert_eq!(read_coco_file(&path).unwrap(), m);
}

#[test]
fn empty_manifest_round_trips() {
    let m = DatasetManifest::new(vec!["satellite".into()], vec![]).unwrap();
    assert_eq!(read_coco(&write_coco(&m)).unwrap(), m);
    let dir = tempfile::tempdir().unwrap();
    assert!(write_yolo(&m, dir.path()).unwrap().is_empty());
    assert_eq!(read_yolo(&m, dir.path()).unwrap(), m);
    assert!(split_dataset(&m, DEFAULT_RATIOS, 0).is_err());
}

#[test]
fn yolo_round_trip_keeps_boxes_and_classes() {
    let mut rng = common::rng(5);
    for _ in 0..50 {
        let m = common::random_manifest(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let files = write_yolo(&m, dir.path()).unwrap();
        assert_eq!(files.len(), m.entries.len());
        let back = read_yolo(&m, dir.path()).unwrap();
        assert_eq!(boxes_only(&back), boxes_only(&m));
        assert!(back.annotations().all(|a| a.mask.is_none()));
    }
}

#[test]
fn yolo_rejects_malformed_lines() {
    let m = plain_manifest(1);
    let dir = tempfile::tempdir().unwrap();
    write_yolo(&m, dir.path()).unwrap();
    fs::write(dir.path().join("labels/000000.txt"), "0 0.5 0.5 0.1 0.1\n0 0.5 0.5\n").unwrap();
    match read_yolo(&m, dir.path()).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn coco_must_reference_known_images() {
    let text = r#"{"images": [], "annotations": [{"id": 1, "image_id": 3, "category_id": 0,
        "bbox": [0, 0, 2, 2]}], "categories": [{"id": 0, "name": "satellite"}]}"#;
    assert!(read_coco(text).is_err());
}

#[test]
fn hundred_images_split_75_20_5() {
    let m = plain_manifest(100);
    let s = split_dataset(&m, DEFAULT_RATIOS, 1).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (75, 20, 5));
    assert!(s.is_disjoint());
}

#[test]
fn split_files_round_trip() {
    let m = plain_manifest(40);
    let s = subsample_train(&split_dataset(&m, DEFAULT_RATIOS, 3).unwrap(), 0.5, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_split_files(&s, dir.path()).unwrap();
    assert_eq!(read_split_file(dir.path().join("split.json")).unwrap(), s);
    let train: Vec<String> = serde_json::from_str(&fs::read_to_string(dir.path().join("train.json")).unwrap()).unwrap();
    assert_eq!(train, s.train);
    assert_eq!(s.fraction_used, 0.5);
}

#[test]
fn subsample_keeps_eval_splits() {
    let m = plain_manifest(301);
    let s = split_dataset(&m, DEFAULT_RATIOS, 3).unwrap();
    let sub = subsample_train(&s, 0.125, 4).unwrap();
    assert_eq!(sub.train.len(), 29);
    assert_eq!((sub.val.clone(), sub.test.clone()), (s.val.clone(), s.test.clone()));
    assert!(subsample_train(&s, 0.0, 4).is_err());
    assert!(subsample_train(&s, 1.5, 4).is_err());
}

#[test]
fn manifest_rejects_foreign_annotations() {
    let mut m = plain_manifest(2);
    m.entries[0].annotations.push(Annotation {
        image_id: "000001".into(),
        class_id: 0,
        bbox: PixelBox::new(0, 0, 1, 1).unwrap(),
        mask: None,
    });
    assert!(m.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coco_round_trip_is_identity(seed in any::<u64>()) {
        let m = common::random_manifest(&mut common::rng(seed));
        prop_assert_eq!(read_coco(&write_coco(&m)).unwrap(), m);
    }

    #[test]
    fn split_is_a_partition(n in 3usize..400, seed in any::<u64>()) {
        let m = plain_manifest(n);
        let s = split_dataset(&m, DEFAULT_RATIOS, seed).unwrap();
        prop_assert!(s.is_disjoint());
        let all: HashSet<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        prop_assert_eq!(all, m.image_ids().into_iter().collect::<HashSet<_>>());
        prop_assert!(!s.val.is_empty() && !s.test.is_empty());
        prop_assert_eq!(&s, &split_dataset(&m, DEFAULT_RATIOS, seed).unwrap());
    }

    #[test]
    fn subsamples_are_nested(n in 3usize..400, split_seed in any::<u64>(), seed in any::<u64>(),
                             a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let s = split_dataset(&plain_manifest(n), DEFAULT_RATIOS, split_seed).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = subsample_train(&s, lo, seed).unwrap();
        let large = subsample_train(&s, hi, seed).unwrap();
        let large_set: HashSet<&String> = large.train.iter().collect();
        prop_assert!(small.train.iter().all(|id| large_set.contains(id)));
        prop_assert_eq!(small.train.len(), ((lo * s.train.len() as f64) - 1e-9).ceil() as usize);
    }
}
