use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use streetfield::cli::{parse_camera_path, run};

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn digests(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, Sha256::digest(std::fs::read(&p).unwrap()).to_vec());
            }
        }
    }
    out
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(["eval", "--help"]), 0);
    assert_eq!(run(["--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(["train"]), 1);
    assert_eq!(run(Vec::<String>::new()), 1);
    assert_eq!(run(["synth", "--out", "x", "--bogus"]), 1);
    assert_eq!(run(["render", "--checkpoint", "c"]), 1);
    assert_eq!(run(["synth", "--out", "x", "--resolution", "64"]), 1);
    assert_eq!(run(["frobnicate"]), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.cfg");
    assert_eq!(run(["train", "--config", &s(&missing), "--out", &s(&dir.path().join("o"))]), 2);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "colour = red\n").unwrap();
    assert_eq!(run(["train", "--config", &s(&bad), "--out", &s(&dir.path().join("o"))]), 2);
    assert_eq!(run(["eval", "--checkpoint", &s(&missing)]), 2);
    assert!(!dir.path().join("o").exists());
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run(["synth", "--seed", "7", "--resolution", "24x16", "--out", &s(&a)]), 0);
    assert_eq!(run(["synth", "--seed", "7", "--resolution", "24x16", "--out", &s(&b)]), 0);
    assert_eq!(run(["synth", "--seed", "8", "--resolution", "24x16", "--out", &s(&c)]), 0);
    let (da, db, dc) = (digests(&a), digests(&b), digests(&c));
    assert!(da.contains_key("sparse/0/images.txt"));
    assert!(da.contains_key("appearance_gt.txt"));
    assert!(da.contains_key("masks/frame_0000.transient.png"));
    assert!(da.contains_key("depth/frame_0000.png"));
    assert_eq!(da, db);
    assert_ne!(da, dc);
}

#[test]
fn fit_plane_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pts.txt");
    std::fs::write(&p, "0 0 1\n1 0 1\n0 1 1\n1 1 1 # comment\n").unwrap();
    assert_eq!(run(["fit-plane", "--path", &s(&p)]), 0);
    let report = streetfield::cli::fit_plane(&p).unwrap();
    assert!(report.contains("barycenter  0.500000000 0.500000000 1.000000000"), "{report}");
    assert!(report.contains("normal      0.000000000 0.000000000 1.000000000"), "{report}");
    std::fs::write(&p, "0 0 1\n1 0\n").unwrap();
    assert_eq!(run(["fit-plane", "--path", &s(&p)]), 2);
}

#[test]
fn camera_path_format() {
    let poses = parse_camera_path("# q t\n2 0 0 0 1 2 3\n\n1 0 0 0 0 0 0\n", Path::new("p")).unwrap();
    assert_eq!(poses.len(), 2);
    assert_eq!(poses[0].0.w, 1.0);
    assert_eq!(poses[0].1.z(), 3.0);
    let err = parse_camera_path("1 0 0 0 1 2\n", Path::new("p")).unwrap_err();
    assert_eq!(err.to_string(), "p:1: expected 7 values, found 6");
}

#[test]
fn train_render_eval_check_grad() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.cfg");
    std::fs::write(
        &cfg,
        "max_iters = 4\nbatch_size = 32\nsamples = 8\npatch_size = 2\nhash_levels = 2\nhash_table_size = 256\n\
         hash_resolution_max = 32\ndensity_width = 8\ncolor_width = 8\nsky_width = 8\nlatent_dim = 4\n\
         probe_steps = 5\nsynth_width = 8\nsynth_height = 8\nsynth_frames = 9\nvalidation_interval = 2\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(["train", "--config", &s(&cfg), "--out", &s(&out), "--deterministic"]), 0);
    let ck = out.join("checkpoint.sgnf");
    assert!(ck.exists());
    let log = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    let path = dir.path().join("path.txt");
    std::fs::write(&path, "1 0 0 0 0 0 -2\n0.7071 0 0.7071 0 0 0 2\n").unwrap();
    let frames = dir.path().join("frames");
    assert_eq!(run(["render", "--checkpoint", &s(&ck), "--path", &s(&path), "--out", &s(&frames), "--resolution", "6x4"]), 0);
    let img = image::open(frames.join("frame_0001.png")).unwrap();
    assert_eq!((img.width(), img.height()), (6, 4));
    assert!(frames.join("depth_0000.png").exists());

    let ev = dir.path().join("ev");
    assert_eq!(run(["eval", "--checkpoint", &s(&ck), "--out", &s(&ev)]), 0);
    let table = std::fs::read_to_string(ev.join("eval.txt")).unwrap();
    for region in ["overall", "sky", "ground", "static"] {
        assert!(table.contains(region), "{table}");
    }

    assert_eq!(run(["check-grad", "--checkpoint", &s(&ck)]), 0);
}
