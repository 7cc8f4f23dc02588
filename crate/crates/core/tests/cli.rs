use std::fs;
use std::process::Command;

fn pfm(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pfm"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ds = d.join("ds");
    let (ok, _, err) = pfm(&[
        "synth",
        "--out",
        ds.to_str().unwrap(),
        "--subjects",
        "3",
        "--cameras",
        "1",
        "--trajectories",
        "3",
        "--frames",
        "30",
    ]);
    assert!(ok, "{err}");
    let cfg = d.join("exp.cfg");
    fs::write(
        &cfg,
        "# small run\ndataset = ds\ntrain_trajectories = 1,2\ntest_trajectories = 3\nscales = 1\ngmm_k = 4\npcal = 50%\n",
    )
    .unwrap();
    let model = d.join("m.pfm");
    let (ok, out, err) = pfm(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("3 classes"));
    let (ok, out, _) = pfm(&["inspect-model", "--model", model.to_str().unwrap()]);
    assert!(ok && out.contains("fisher, 4 components"));

    let csv = d.join("r.csv");
    let (ok, out, err) = pfm(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("multiview"));
    let csv = fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("subject,trajectory,camera,predicted,correct\n"));
    assert_eq!(csv.lines().count(), 1 + 3 + 3);

    let (ok, out, err) = pfm(&["eval", "--config", cfg.to_str().unwrap()]);
    assert!(ok, "{err}");
    assert!(out.contains("fold"));

    let dump = d.join("t.txt");
    let seq = ds.join("s01_t1/c1");
    let (ok, _, err) = pfm(&[
        "extract",
        "--seq",
        seq.to_str().unwrap(),
        "--out",
        dump.to_str().unwrap(),
        "--scales",
        "1",
    ]);
    assert!(ok, "{err}");
    let dump = fs::read_to_string(&dump).unwrap();
    let first = dump.lines().next().unwrap();
    assert_eq!(first.split_whitespace().count(), 2 + 32 + 318);

    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, text.replacen("PFM1", "PFM9", 1)).unwrap();
    let (ok, _, err) = pfm(&["inspect-model", "--model", model.to_str().unwrap()]);
    assert!(!ok && err.contains("version"), "{err}");
    fs::write(&model, &text[..text.len() / 2]).unwrap();
    let (ok, _, err) = pfm(&["inspect-model", "--model", model.to_str().unwrap()]);
    assert!(!ok && err.contains("truncated"), "{err}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "dataset = nowhere\ncolour = blue\n").unwrap();
    let (ok, _, err) = pfm(&["eval", "--config", bad.to_str().unwrap()]);
    assert!(!ok && err.contains("unknown key"), "{err}");
    let (ok, _, _) = pfm(&["eval", "--config", "/does/not/exist.cfg"]);
    assert!(!ok);
    let (ok, _, _) = pfm(&[
        "synth",
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--subjects",
        "1",
    ]);
    assert!(!ok);
    let (ok, _, _) = pfm(&["no-such-command"]);
    assert!(!ok);
}
