//! End-to-end tests for the `p2orm` binary: exit codes, determinism,
//! thread-count handling, and pipeline composition against the library.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_p2orm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn exit_codes() {
    // no subcommand: usage
    assert_code(&run(&[]), 1);
    // unknown flag: usage
    assert_code(&run(&["synth", "--bogus"]), 1);
    // unknown scene name: usage
    assert_code(&run(&["synth", "--scene", "no_such_scene"]), 1);
    // missing input file: data
    assert_code(
        &run(&["gen-labels", "--depth", "/nonexistent/d.pfm", "--order", "0", "--out", "/tmp/x"]),
        2,
    );
    // help and version succeed
    assert_code(&run(&["--help"]), 0);
    assert_code(&run(&["--version"]), 0);
    assert_code(&run(&["synth", "--list"]), 0);
    // conflicting camera specs: usage
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.pfm");
    synth_depth(&depth);
    let out = run(&[
        "gen-labels",
        "--depth",
        depth.to_str().unwrap(),
        "--order",
        "0",
        "--hfov",
        "60",
        "--fx",
        "100",
        "--fy",
        "100",
        "--cx",
        "10",
        "--cy",
        "10",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_code(&out, 1);
}

fn synth_depth(path: &Path) {
    let dir = path.parent().unwrap();
    let out = run(&[
        "synth",
        "--scene",
        "step",
        "--width",
        "80",
        "--height",
        "60",
        "--out-depth",
        path.to_str().unwrap(),
        "--out-normals",
        dir.join("n.raw").to_str().unwrap(),
    ]);
    assert_code(&out, 0);
}

#[test]
fn invalid_thread_count_is_usage_error() {
    let out = bin()
        .args(["synth", "--list"])
        .env("P2ORM_THREADS", "lots")
        .output()
        .unwrap();
    assert_code(&out, 1);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.pfm");
    synth_depth(&depth);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let base = dir.path().join(format!("rel{threads}"));
        let out = bin()
            .args([
                "gen-labels",
                "--depth",
                depth.to_str().unwrap(),
                "--normals",
                dir.path().join("n.raw").to_str().unwrap(),
                "--out",
                base.to_str().unwrap(),
            ])
            .env("P2ORM_THREADS", threads)
            .output()
            .unwrap();
        assert_code(&out, 0);
        outputs.push(relation_bytes(&base));
    }
    assert_eq!(outputs[0], outputs[1], "results depend on thread count");
}

fn relation_bytes(base: &Path) -> Vec<u8> {
    let dir = base.parent().unwrap();
    let stem = base.file_name().unwrap().to_str().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(stem))
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no output files for {stem}");
    let mut bytes = Vec::new();
    for n in names {
        bytes.extend(std::fs::read(dir.join(n)).unwrap());
    }
    bytes
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.pfm");
    synth_depth(&depth);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let base = dir.path().join(format!("rel_{tag}"));
        let out = run(&[
            "gen-labels",
            "--depth",
            depth.to_str().unwrap(),
            "--estimate-normals",
            "3",
            "--out",
            base.to_str().unwrap(),
            "--viz",
            dir.path().join(format!("viz_{tag}.png")).to_str().unwrap(),
        ]);
        assert_code(&out, 0);
        let mut bytes = relation_bytes(&base);
        bytes.extend(std::fs::read(dir.path().join(format!("viz_{tag}.png"))).unwrap());
        outputs.push(bytes);
    }
    assert_eq!(outputs[0], outputs[1], "pipeline is not deterministic");
}

#[test]
fn gen_labels_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let depth_path = dir.path().join("d.pfm");
    synth_depth(&depth_path);
    let base = dir.path().join("rel");
    let out = run(&[
        "gen-labels",
        "--depth",
        depth_path.to_str().unwrap(),
        "--normals",
        dir.path().join("n.raw").to_str().unwrap(),
        "--connectivity",
        "8",
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    let k = p2orm::CameraIntrinsics::with_hfov(80, 60, 60.0);
    let depth = p2orm::io::read_pfm(&depth_path).unwrap();
    let normals = p2orm::io::read_normals(&dir.path().join("n.raw")).unwrap();
    let expected = p2orm::relation::compute_p2orm(
        &depth,
        Some(&normals),
        &k,
        p2orm::DEFAULT_DELTA,
        p2orm::relation::Connectivity::Eight,
        1,
    )
    .unwrap();
    let got = p2orm::io::read_relation(&base).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn pipeline_composition_reproduces_library_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.pfm");
    synth_depth(&depth);
    let base = dir.path().join("rel");
    assert_code(
        &run(&[
            "gen-labels",
            "--depth",
            depth.to_str().unwrap(),
            "--normals",
            dir.path().join("n.raw").to_str().unwrap(),
            "--out",
            base.to_str().unwrap(),
        ]),
        0,
    );
    // derive a thresholded boundary image
    let boundary = dir.path().join("b.png");
    assert_code(
        &run(&[
            "derive",
            "--labels",
            base.to_str().unwrap(),
            "--threshold",
            "0.5",
            "--out-boundary",
            boundary.to_str().unwrap(),
            "--out-orientation",
            dir.path().join("o.raw").to_str().unwrap(),
        ]),
        0,
    );
    assert!(boundary.exists());
    // self-evaluation: prediction = ground truth must report perfect scores
    let report = dir.path().join("report.txt");
    let out = run(&[
        "eval",
        "--pred-labels",
        base.to_str().unwrap(),
        "--gt-labels",
        base.to_str().unwrap(),
        "--pred-depth",
        depth.to_str().unwrap(),
        "--gt-depth",
        depth.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&report).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("{key} missing from report:\n{text}"))
            .parse()
            .unwrap()
    };
    assert_eq!(value("ods"), 1.0, "report:\n{text}");
    assert_eq!(value("ois"), 1.0);
    assert_eq!(value("ap"), 1.0);
    assert_eq!(value("eps_acc"), 0.0);
    assert_eq!(value("eps_comp"), 0.0);
    assert_eq!(value("rel"), 0.0);
    assert_eq!(value("rmse_lin"), 0.0);
    assert_eq!(value("sigma1"), 1.0);
}

#[test]
fn refine_is_a_fixed_point_on_consistent_input() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.pfm");
    synth_depth(&depth);
    let base = dir.path().join("rel");
    assert_code(
        &run(&[
            "gen-labels",
            "--depth",
            depth.to_str().unwrap(),
            "--normals",
            dir.path().join("n.raw").to_str().unwrap(),
            "--out",
            base.to_str().unwrap(),
        ]),
        0,
    );
    let refined = dir.path().join("refined.pfm");
    let trace = dir.path().join("trace.txt");
    let out = run(&[
        "refine",
        "--depth",
        depth.to_str().unwrap(),
        "--labels",
        base.to_str().unwrap(),
        "--normals",
        dir.path().join("n.raw").to_str().unwrap(),
        "--out",
        refined.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let a = p2orm::io::read_pfm(&depth).unwrap();
    let b = p2orm::io::read_pfm(&refined).unwrap();
    for y in 0..60 {
        for x in 0..80 {
            let (da, db) = (a.get(x, y).unwrap(), b.get(x, y).unwrap());
            assert!((da / db - 1.0).abs() < 1e-6, "moved at ({x},{y})");
        }
    }
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let first = trace_text.lines().nth(1).unwrap();
    assert_eq!(first.split_whitespace().nth(1), Some("0"), "initial loss nonzero: {first}");
}
