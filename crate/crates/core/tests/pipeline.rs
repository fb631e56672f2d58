use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use scf_core::evaluation::{load_sequence, read_run, run_ope, timing_path, write_run};
use scf_core::synthetic::{moving_square_sequence, SyntheticSequence};
use scf_core::{Frame, Sequence, TrackerConfig, Variant};

fn write_fixture(dir: &Path, seq: &SyntheticSequence) {
    let img = dir.join("img");
    fs::create_dir_all(&img).unwrap();
    for (k, frame) in seq.frames.iter().enumerate() {
        let (w, h) = (frame.width() as u32, frame.height() as u32);
        let out = GrayImage::from_fn(w, h, |x, y| Luma([frame.get(y as usize, x as usize, 0) as u8]));
        out.save(img.join(format!("{:04}.png", k + 1))).unwrap();
    }
    let gt: String = seq.groundtruth.iter().map(|b| format!("{},{},{},{}\n", b.x + 1.0, b.y + 1.0, b.w, b.h)).collect();
    fs::write(dir.join("groundtruth_rect.txt"), gt).unwrap();
    fs::write(dir.join("attributes.txt"), "IV, FM\n").unwrap();
}

fn square() -> SyntheticSequence {
    moving_square_sequence(4, 128, 20, 24, (0.8, 1.3)).unwrap()
}

#[test]
fn loads_an_otb_layout_from_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let synthetic = square();
    write_fixture(tmp.path(), &synthetic);
    let seq = load_sequence(tmp.path()).unwrap();
    assert_eq!(seq.len(), 20);
    assert_eq!(seq.attributes, vec!["IV".to_string(), "FM".to_string()]);
    assert_eq!(seq.groundtruth, synthetic.groundtruth);
    let first: &Frame = &seq.frame(0).unwrap();
    let original = &synthetic.frames[0];
    assert_eq!((first.width(), first.height()), (original.width(), original.height()));
    for (r, c) in [(0, 0), (64, 64), (70, 50), (127, 3)] {
        for ch in 0..first.channels() {
            assert_eq!(first.get(r, c, ch), original.get(r, c, 0).trunc(), "({r}, {c}, {ch})");
        }
    }
}

#[test]
fn mismatched_groundtruth_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), &square());
    fs::write(tmp.path().join("groundtruth_rect.txt"), "1,1,5,5\n").unwrap();
    assert!(load_sequence(tmp.path()).is_err());
}

#[test]
fn every_variant_follows_the_moving_square() {
    let seq = Sequence::from_synthetic("square", square()).unwrap();
    for v in Variant::ALL {
        let r = run_ope(&TrackerConfig::preset(v), &seq).unwrap();
        assert_eq!(r.dp20, 1.0, "{v}: precision {}", r.dp20);
        assert!(r.failures.is_empty(), "{v}: {:?}", r.failures);
        assert!(r.fps > 0.0);
    }
}

#[test]
fn runs_are_deterministic_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = Sequence::from_synthetic("square", square()).unwrap();
    let cfg = TrackerConfig::preset(Variant::Skscf);
    let a = run_ope(&cfg, &seq).unwrap();
    let b = run_ope(&cfg, &seq).unwrap();
    assert_eq!(a.boxes, b.boxes);
    let path = tmp.path().join("square.jsonl");
    write_run(&path, &a).unwrap();
    assert!(timing_path(&path).exists());
    let replayed = read_run(&path).unwrap();
    assert_eq!(replayed.len(), a.boxes.len());
    for (x, y) in replayed.iter().zip(&a.boxes) {
        assert!((x.x - y.x).abs() < 1e-9 && (x.y - y.y).abs() < 1e-9);
        assert!((x.w - y.w).abs() < 1e-9 && (x.h - y.h).abs() < 1e-9);
    }
}
