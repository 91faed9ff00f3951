use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn mrope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn check_exit_codes() {
    let doc = fixture("confusion.json");
    let o = mrope(&["check", "--stream", &doc, "--design", "diagonal"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["generated_overlap"], true);

    let o = mrope(&["check", "--stream", &doc, "--design", "mrope-i"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["generated_overlap"], false);
    assert_eq!(report["overlaps"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_design_lists_choices() {
    let o = mrope(&[
        "layout",
        "--stream",
        &fixture("video.json"),
        "--design",
        "hope",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["vanilla", "mrope-i", "mhrope", "diagonal", "circle"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn malformed_stream_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"segments": [{"kind": "image", "h": 0, "w": 3}]}"#).unwrap();
    let out = dir.path().join("out.csv");
    let o = mrope(&[
        "layout",
        "--stream",
        bad.to_str().unwrap(),
        "--design",
        "mrope",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("segment 0"));
    assert!(!out.exists(), "no output on failure");
}

#[test]
fn layout_csv_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("layout.csv");
    let o = mrope(&[
        "layout",
        "--stream",
        &fixture("video.json"),
        "--design",
        "mrope-i",
        "--stride",
        "1/2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "token_index,segment_index,modality,t,h,w,design");
    assert_eq!(lines.len(), 1 + 3 + 36 + 2);
    // Second frame of the video: t = 3 + 1/2.
    assert_eq!(lines[1 + 3 + 9], "12,1,video,3.5,0,0,mrope-i");
}

#[test]
fn text_only_stream_matches_vanilla() {
    let s = fixture("text_only.json");
    let body = |design: &str| {
        stdout(&mrope(&["layout", "--stream", &s, "--design", design]))
            .lines()
            .skip(1)
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    let vanilla = body("vanilla");
    for d in ["mrope", "mrope-i", "mhrope", "diagonal", "circle"] {
        assert_eq!(body(d), vanilla, "{d}");
    }
}

#[test]
fn freqs_inline_alloc_and_override() {
    let o = mrope(&[
        "freqs",
        "--alloc",
        "scheme=chunked,ratio=1:1:1,d=6,base=100",
    ]);
    assert_eq!(
        stdout(&o),
        "pair_index,axis,theta\n0,t,1\n1,h,0.2154434690031884\n2,w,0.046415888336127795\n"
    );
    let o = mrope(&[
        "freqs",
        "--alloc",
        "scheme=chunked,ratio=1:1:1,d=6,base=100",
        "--scheme",
        "videorope",
    ]);
    let axes: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(axes, ["h", "w", "t"]);
    let o = mrope(&["freqs", "--alloc", "colour=red"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn decay_default_grid_and_axis_filter() {
    let o = mrope(&["decay"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("delta,axis,indicator,scheme,ratio,d,base")
    );
    assert_eq!(lines.count(), 3 * 201);
    assert!(text.contains("\n0,t,12.5,interleaved,24:20:20,128,1000000\n"));

    let o = mrope(&["decay", "--axis", "w", "--grid", "0,5"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("w")));
}

#[test]
fn score_channel_and_multihead() {
    let o = mrope(&[
        "score",
        "--d",
        "8",
        "--ratio",
        "2:1:1",
        "--q",
        &fixture("q8.csv"),
        "--k",
        &fixture("k8.csv"),
        "--pq",
        "1,2,3",
        "--pk",
        "5,1/2,0",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((row[0] - row[1]).abs() < 1e-10);

    let o = mrope(&[
        "score",
        "--d",
        "8",
        "--scheme",
        "multihead",
        "--ratio",
        "1:1:1",
        "--heads",
        "6:3",
        "--q",
        &fixture("q_heads.csv"),
        "--k",
        &fixture("k_heads.csv"),
        "--pq",
        "1,2,3",
        "--pk",
        "5,1/2,0",
    ]);
    assert!(o.status.success());
    let axes: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(axes, ["t", "t", "h", "h", "w", "w"]);

    // Key file has the wrong head count.
    let o = mrope(&[
        "score",
        "--d",
        "8",
        "--scheme",
        "multihead",
        "--ratio",
        "1:1:1",
        "--heads",
        "6:3",
        "--q",
        &fixture("q_heads.csv"),
        "--k",
        &fixture("k8.csv"),
        "--pq",
        "0,0,0",
        "--pk",
        "0,0,0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mass_report() {
    let o = mrope(&[
        "mass",
        "--stream",
        &fixture("small.json"),
        "--design",
        "mrope-i",
        "--matrix",
        &fixture("uniform.csv"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = report["mean"].as_f64().unwrap();
    assert!((mean - 10.0 / 15.0).abs() < 1e-12);
    assert_eq!(report["profiles"].as_array().unwrap().len(), 2);

    // Layout size does not match the matrix.
    let o = mrope(&[
        "mass",
        "--stream",
        &fixture("video.json"),
        "--design",
        "mrope-i",
        "--matrix",
        &fixture("uniform.csv"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recommend_csv() {
    let o = mrope(&[
        "recommend",
        "--stream",
        &fixture("confusion.json"),
        "--design",
        "vanilla",
        "--train-ctx",
        "64",
    ]);
    assert_eq!(
        stdout(&o),
        "design,train_ctx,max_coordinate,scale\nvanilla,64,10053,157.09375\n"
    );
    let o = mrope(&[
        "recommend",
        "--stream",
        &fixture("confusion.json"),
        "--design",
        "mrope-i",
        "--train-ctx",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
