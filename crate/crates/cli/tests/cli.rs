use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn resboot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resboot")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

struct Phantom {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Phantom {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let out = resboot(&[
            "phantom",
            "--out-dir",
            root.join("ph").to_str().unwrap(),
            "--dims",
            "5,4,3",
            "--in-span",
            "--sigma",
            "10",
            "--seed",
            "2",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Phantom { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).to_str().unwrap().to_string()
    }

    fn augment(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "augment".to_string(),
            "--dwi".into(),
            self.path("ph/signals.nii"),
            "--bvals".into(),
            self.path("ph/dwi.bval"),
            "--bvecs".into(),
            self.path("ph/dwi.bvec"),
            "--out-dir".into(),
            self.path(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        resboot(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = resboot(&["augment", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&resboot(&[])), 1);
    assert_eq!(code(&resboot(&["augment"])), 1);
    assert_eq!(
        code(&resboot(&["--threads", "0", "basis", "dump", "--out-dir", "/tmp/x"])),
        1
    );
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&resboot(&["--help"])), 0);
    assert_eq!(code(&resboot(&["--version"])), 0);
    assert_eq!(code(&resboot(&["augment", "--help"])), 0);
}

#[test]
fn augment_writes_default_plan() {
    let p = Phantom::new();
    let out = p.augment("aug", &["--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = p.root.join("aug");
    for f in [
        "boot_r2_rep0.nii",
        "boot_r3_rep0.nii",
        "boot_r4_rep0.nii",
        "dwi.bval",
        "dwi.bvec",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let m = manifest(&dir);
    assert_eq!(m["subcommand"], "augment");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["params"]["scales"], serde_json::json!([2.0, 3.0, 4.0]));
    assert_eq!(m["inputs"]["dwi"]["sha256"].as_str().unwrap().len(), 64);
    let sigma = m["report"]["sigma_hat"]["pooled"].as_f64().unwrap();
    assert!((5.0..15.0).contains(&sigma), "{sigma}");
    assert_eq!(
        fs::read(dir.join("dwi.bval")).unwrap(),
        fs::read(p.root.join("ph/dwi.bval")).unwrap()
    );
}

#[test]
fn manifest_replays_bit_exactly_and_flags_win() {
    let p = Phantom::new();
    assert_eq!(
        code(&p.augment("a", &["--seed", "9", "--scales", "1.5", "--replicates", "2"])),
        0
    );
    let cfg = p.path("a/manifest.json");
    let replay = resboot(&["augment", "--config", &cfg, "--out-dir", &p.path("b"), "--threads", "3"]);
    assert_eq!(code(&replay), 0, "{}", String::from_utf8_lossy(&replay.stderr));
    for f in ["boot_r1.5_rep0.nii", "boot_r1.5_rep1.nii"] {
        assert_eq!(
            fs::read(p.root.join("a").join(f)).unwrap(),
            fs::read(p.root.join("b").join(f)).unwrap()
        );
    }
    assert_ne!(
        fs::read(p.root.join("a/boot_r1.5_rep0.nii")).unwrap(),
        fs::read(p.root.join("a/boot_r1.5_rep1.nii")).unwrap()
    );
    let other = resboot(&["augment", "--config", &cfg, "--seed", "10", "--out-dir", &p.path("c")]);
    assert_eq!(code(&other), 0);
    assert_eq!(manifest(&p.root.join("c"))["seed"], 10);
    assert_ne!(
        fs::read(p.root.join("a/boot_r1.5_rep0.nii")).unwrap(),
        fs::read(p.root.join("c/boot_r1.5_rep0.nii")).unwrap()
    );
    assert_eq!(code(&resboot(&["fit", "--config", &cfg])), 1);
}

#[test]
fn plain_config_file() {
    let p = Phantom::new();
    let cfg = p.root.join("cfg.json");
    fs::write(&cfg, r#"{"scales": [0.5, 1.0], "seed": 1, "dtype": "float64"}"#).unwrap();
    let out = p.augment("d", &["--config", cfg.to_str().unwrap(), "--scales", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        manifest(&p.root.join("d"))["params"]["scales"],
        serde_json::json!([3.0])
    );
    assert_eq!(manifest(&p.root.join("d"))["params"]["dtype"], "float64");
    fs::write(&cfg, r#"{"scalez": [1]}"#).unwrap();
    assert_eq!(code(&p.augment("e", &["--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn input_and_numerical_errors() {
    let p = Phantom::new();
    let junk = p.root.join("junk.nii");
    fs::write(&junk, b"not a nifti file").unwrap();
    let out = resboot(&[
        "fit",
        "--dwi",
        junk.to_str().unwrap(),
        "--bvals",
        &p.path("ph/dwi.bval"),
        "--bvecs",
        &p.path("ph/dwi.bvec"),
        "--out-dir",
        &p.path("f"),
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);

    let missing = p.augment("g", &["--mask", "/no/such/mask.nii"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/no/such/mask.nii"));

    let sub = resboot(&[
        "subsample",
        "--bvals",
        &p.path("ph/dwi.bval"),
        "--bvecs",
        &p.path("ph/dwi.bvec"),
        "--shells",
        "1000:12",
        "--b0-count",
        "18",
        "--dwi",
        &p.path("ph/signals.nii"),
        "--out-dir",
        &p.path("s12"),
    ]);
    assert_eq!(code(&sub), 0);
    let out = resboot(&[
        "augment",
        "--dwi",
        &p.path("s12/dwi.nii"),
        "--bvals",
        &p.path("s12/dwi.bval"),
        "--bvecs",
        &p.path("s12/dwi.bvec"),
        "--out-dir",
        &p.path("h"),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("12 DW channels for 50 atoms"));
    assert_eq!(code(&p.augment("i", &["--scales", "2,2"])), 1);
}

#[test]
fn subsample_counts_and_gather() {
    let p = Phantom::new();
    let out = resboot(&[
        "subsample",
        "--bvals",
        &p.path("ph/dwi.bval"),
        "--bvecs",
        &p.path("ph/dwi.bvec"),
        "--shells",
        "1000:18,2000:18",
        "--b0-count",
        "1",
        "--dwi",
        &p.path("ph/signals.nii"),
        "--out-dir",
        &p.path("s36"),
    ]);
    assert_eq!(code(&out), 0);
    let m = manifest(&p.root.join("s36"));
    assert_eq!(m["report"]["dw_channels"], 36);
    assert_eq!(m["report"]["b0_channels"], 1);
    let bvals = fs::read_to_string(p.root.join("s36/dwi.bval")).unwrap();
    assert_eq!(bvals.split_whitespace().count(), 37);
    let full = resboot_core::nifti::read_nifti(p.root.join("ph/signals.nii")).unwrap();
    let sub = resboot_core::nifti::read_nifti(p.root.join("s36/dwi.nii")).unwrap();
    let map: Vec<usize> = m["report"]["index_map"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert_eq!(sub.data(), full.gather_channels(&map).unwrap().data());
    assert_eq!(
        code(&resboot(&[
            "subsample",
            "--bvals",
            &p.path("ph/dwi.bval"),
            "--bvecs",
            &p.path("ph/dwi.bvec"),
            "--shells",
            "1000-12",
            "--out-dir",
            &p.path("bad"),
        ])),
        1
    );
}

#[test]
fn fit_outputs_and_report() {
    let p = Phantom::new();
    let out = resboot(&[
        "fit",
        "--dwi",
        &p.path("ph/signals.nii"),
        "--bvals",
        &p.path("ph/dwi.bval"),
        "--bvecs",
        &p.path("ph/dwi.bvec"),
        "--mask",
        &p.path("ph/mask.nii"),
        "--out-dir",
        &p.path("fit"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let coef = resboot_core::nifti::read_nifti(p.root.join("fit/coefficients.nii")).unwrap();
    assert_eq!(coef.dims(), [5, 4, 3, 50]);
    let res = resboot_core::nifti::read_nifti(p.root.join("fit/residuals.nii")).unwrap();
    assert_eq!(res.channels(), 270);
    let report: Value = serde_json::from_str(&fs::read_to_string(p.root.join("fit/fit_report.json")).unwrap()).unwrap();
    assert!((report["hat_diag"]["sum"].as_f64().unwrap() - 50.0).abs() < 1e-8);
    assert_eq!(report["residual_variance"].as_array().unwrap().len(), 270);
}

#[test]
fn basis_dump_dice_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("basis");
    let out = resboot(&[
        "basis",
        "dump",
        "--radial-order",
        "4",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.join("dictionary.txt")).unwrap();
    assert_eq!(text.lines().count(), 270);
    assert!(text.lines().all(|l| l.split_whitespace().count() == 22));
    let side: Value = serde_json::from_str(&fs::read_to_string(dir.join("dictionary.json")).unwrap()).unwrap();
    assert_eq!(side["atom_labels"].as_array().unwrap().len(), 22);

    let p = Phantom::new();
    let out = resboot(&[
        "dice",
        "--a",
        &p.path("ph/mask.nii"),
        "--b",
        &p.path("ph/mask.nii"),
        "--json",
    ]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mean_dice"], 1.0);
    assert_eq!(
        code(&resboot(&[
            "dice",
            "--a",
            &p.path("ph/mask.nii"),
            "--b",
            &p.path("ph/signals.nii")
        ])),
        2
    );

    let out = resboot(&["stats", "--dwi", &p.path("ph/signals.nii"), "--sigma", "10", "--json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["per_channel_snr"].as_array().unwrap().len(), 288);
    assert!((v["per_channel_snr"][0].as_f64().unwrap() - 100.0).abs() < 5.0);
    assert_eq!(code(&resboot(&["stats", "--dwi", &p.path("ph/signals.nii")])), 1);
}
