use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use proptest::prelude::*;
use tempfile::TempDir;

use wmkit::cli::run;
use wmkit::io::{load_annotation, load_motion, save_motion, ProjectManifest};
use wmkit::motion::MotionSequence;
use wmkit::motion_model::{KinematicTree, Pose, Vec3};

fn arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn wmkit(args: &[&str]) -> i32 {
    run(std::iter::once("wmkit").chain(args.iter().copied()))
}

fn static_g1(frames: usize) -> MotionSequence {
    let dof = KinematicTree::example_g1().dof();
    let mut p = Pose::zero(dof);
    p.root_position = Vec3::new(0.0, 0.0, 0.78);
    MotionSequence::new(50.0, vec![p; frames]).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn motion_round_trip_is_exact(
        q in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..12),
        wxyz in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        fps in 1.0f64..500.0,
        with_v in any::<bool>(),
    ) {
        prop_assume!(wxyz.0.abs() + wxyz.1.abs() + wxyz.2.abs() + wxyz.3.abs() > 0.1);
        let frames: Vec<Pose> = q
            .iter()
            .map(|q| {
                let rot = UnitQuaternion::from_quaternion(Quaternion::new(wxyz.0, wxyz.1, wxyz.2, wxyz.3));
                Pose::new(Vec3::new(q[0] * 1e-3, q[1], 0.7), rot, q.clone())
            })
            .collect();
        let mut seq = MotionSequence::new(fps, frames).unwrap();
        if with_v {
            let v = q.iter().map(|r| r.iter().map(|x| x / 7.0).collect()).collect();
            seq = seq.with_velocities(v).unwrap();
        }
        let dir = TempDir::new().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_motion(&a, &seq).unwrap();
        let back = load_motion(&a).unwrap();
        prop_assert_eq!(&back, &seq);
        save_motion(&b, &back).unwrap();
        prop_assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}

#[test]
fn fifty_hz_hundred_frames_last_two_seconds() {
    assert_eq!(static_g1(100).duration(), 2.0);
}

#[test]
fn truncated_file_names_offset() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("m.json");
    save_motion(&p, &static_g1(3)).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, &text[..text.len() / 2]).unwrap();
    let msg = load_motion(&p).unwrap_err().to_string();
    assert!(msg.contains(&format!("byte {}", text.len() / 2)), "{msg}");
}

#[test]
fn label_twice_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    assert_eq!(wmkit(&["--seed", "7", "--out", &arg(out), "synth", "--count", "1", "--frames", "120"]), 0);
    let args = |name: &str| {
        vec![
            "--seed".to_string(),
            "7".into(),
            "--out".into(),
            arg(out),
            "--tree".into(),
            arg(&out.join("tree.json")),
            "--scene".into(),
            arg(&out.join("scene_000.json")),
            "label".into(),
            "--input".into(),
            arg(&out.join("motion_000.json")),
            "--name".into(),
            name.into(),
        ]
    };
    let run_args = |name: &str| run(std::iter::once("wmkit".to_string()).chain(args(name)));
    assert_eq!(run_args("a.json"), 0);
    assert_eq!(run_args("b.json"), 0);
    assert_eq!(fs::read(out.join("a.json")).unwrap(), fs::read(out.join("b.json")).unwrap());
    let ann = load_annotation(&out.join("a.json")).unwrap();
    assert_eq!(ann.frame_count, 120);
    assert_eq!(ann.intervals.len(), 1);
}

#[test]
fn reward_on_identical_sequences_is_task_sum() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("m.json");
    save_motion(&m, &static_g1(10)).unwrap();
    assert_eq!(wmkit(&["--out", &arg(dir.path()), "reward", "--motion", &arg(&m), "--reference", &arg(&m)]), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("reward.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().last(), Some("total"));
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.iter().last().unwrap().parse::<f64>().unwrap(), 36.75);
        rows += 1;
    }
    assert_eq!(rows, 10);
}

#[test]
fn stochastic_subcommands_reproduce_outputs() {
    let runs: Vec<TempDir> = (0..2).map(|_| TempDir::new().unwrap()).collect();
    for d in &runs {
        let out = arg(d.path());
        assert_eq!(wmkit(&["--seed", "3", "--out", &out, "synth", "--count", "2", "--frames", "80"]), 0);
        assert_eq!(wmkit(&["--seed", "3", "--out", &out, "randomize", "--count", "5"]), 0);
        let manifest = arg(&d.path().join("manifest.json"));
        let train = ["--seed", "3", "--out", &out, "train-wm", "--manifest", &manifest, "--epochs", "2", "--hidden", "8,8,4"];
        assert_eq!(wmkit(&train), 0);
        let ckpt = arg(&d.path().join("wm.ckpt"));
        assert_eq!(wmkit(&["--out", &out, "eval-wm", "--manifest", &manifest, "--checkpoint", &ckpt]), 0);
        assert_eq!(wmkit(&["--out", &out, "simulate", "--duration", "0.5"]), 0);
    }
    assert_eq!(dir_contents(runs[0].path()), dir_contents(runs[1].path()));
}

#[test]
fn manifest_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    assert_eq!(wmkit(&["--out", &arg(dir.path()), "synth", "--count", "1", "--frames", "60"]), 0);
    let m = ProjectManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.motions.len(), 1);
    assert!(m.motions[0].is_absolute() || m.motions[0].starts_with(dir.path()));
    assert!(m.motions[0].exists());

    fs::remove_file(dir.path().join("motion_000.json")).unwrap();
    assert!(ProjectManifest::load(&dir.path().join("manifest.json")).is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(wmkit(&["frobnicate"]), 2);
    assert_eq!(wmkit(&["--help"]), 0);
    let dir = TempDir::new().unwrap();
    assert_eq!(wmkit(&["--out", &arg(dir.path()), "smooth", "--input", "/nonexistent/motion.json"]), 1);
    assert_eq!(wmkit(&["--out", &arg(dir.path()), "smooth", "--input", "x.json", "--median-window", "4"]), 1);
}
