use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn taxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxnet")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn missing_gdp_exits_two_and_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    assert!(taxnet(&["synth", "--out", s(&bundle)]).status.success());
    fs::remove_file(bundle.join("gdp.csv")).unwrap();
    let out = taxnet(&["run", "--input", s(&bundle), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"], "missing_input");
    assert!(v["message"].as_str().unwrap().contains("gdp.csv"));
}

#[test]
fn bad_flag_value_is_an_input_error() {
    let out = taxnet(&["run", "--alpha", "-1", "--input", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_set_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    assert!(taxnet(&["synth", "--set", "n_firms=50", "--out", s(&out)]).status.success());
    let firms = fs::read_to_string(out.join("firms.csv")).unwrap();
    assert_eq!(data_rows(&firms).len(), 51);
    let bad = taxnet(&["synth", "--set", "n_firms", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn published_tables_reproduce_at_beta_point_three() {
    // the low-beta table matches beta=0.3, not the 0.1 in its caption
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let status = taxnet(&[
        "compute-multilayer",
        "--conduit-scores",
        s(&fixture("published_conduit_scores.csv")),
        "--load-scores",
        s(&fixture("published_load_scores.csv")),
        "--beta",
        "0.3",
        "--out",
        s(&out),
    ]);
    assert!(status.status.success());
    let rows = taxnet_core::report::load_multilayer_scores(&out.join("multilayer_scores_beta0.3.csv")).unwrap().rows;
    let expected = [
        ("NLD:K", [13.00, 5.37, 9.94]),
        ("LUX:G", [5.08, 7.81, 6.59]),
        ("LUX:K", [5.32, 6.25, 5.80]),
        ("MYS:C", [4.64, 1.26, 3.40]),
        ("GBR:N", [2.60, 3.69, 3.19]),
        ("CHE:G", [3.62, 1.21, 2.70]),
        ("IRL:K", [2.93, 1.39, 2.29]),
    ];
    assert_eq!(rows.len(), expected.len());
    for (p, want) in expected {
        let r = rows.iter().find(|r| r.pair.to_string() == p).unwrap();
        for (got, want) in [r.m_out, r.m_in, r.m].iter().zip(want) {
            assert!((got - want).abs() <= 0.01, "{p}: {got} vs {want}");
        }
    }
}

#[test]
fn sweep_reports_threshold_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let res = taxnet(&[
        "sweep-beta",
        "--conduit-scores",
        s(&fixture("published_conduit_scores.csv")),
        "--load-scores",
        s(&fixture("published_load_scores.csv")),
        "--out",
        s(&out),
    ]);
    assert!(res.status.success());
    let sweep = fs::read_to_string(out.join("beta_sweep.csv")).unwrap();
    let rows = data_rows(&sweep);
    assert_eq!(rows[0], "beta,threshold,pairs");
    // four betas, three thresholds each
    assert_eq!(rows.len(), 1 + 4 * 3);
    for b in ["0.1", "0.3", "0.5", "0.8"] {
        assert!(out.join(format!("multilayer_scores_beta{b}.csv")).exists());
    }
}

#[test]
fn histogram_bins_from_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("load_scores.csv");
    fs::write(&scores, "jurisdiction,l_raw,L\nAAA,1,0.5\nBBB,2,1.6\nCCC,3,1.7\n").unwrap();
    let out = taxnet(&["histogram", s(&scores), "--bin-width", "1.1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(data_rows(&text), ["bin_low,bin_high,count", "0,1.1000000000000001,1", "1.1000000000000001,2.2000000000000002,2"]);

    let raw = taxnet(&["histogram", s(&scores), "--bin-width", "1", "--column", "l_raw"]);
    let text = String::from_utf8(raw.stdout).unwrap();
    assert_eq!(data_rows(&text), ["bin_low,bin_high,count", "1,2,1", "2,3,1", "3,4,1"]);

    let bad = taxnet(&["histogram", s(&scores), "--bin-width", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn histogram_of_empty_scores_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("s.csv");
    fs::write(&scores, "jurisdiction,sector,S\n").unwrap();
    let out = taxnet(&["histogram", s(&scores), "--bin-width", "81.5"]);
    assert!(out.status.success());
    assert_eq!(data_rows(&String::from_utf8(out.stdout).unwrap()), ["bin_low,bin_high,count"]);
}

#[test]
fn cartogram_projects_one_sector() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m");
    assert!(taxnet(&[
        "compute-multilayer",
        "--conduit-scores",
        s(&fixture("published_conduit_scores.csv")),
        "--load-scores",
        s(&fixture("published_load_scores.csv")),
        "--out",
        s(&m),
    ])
    .status
    .success());
    let scores = m.join("multilayer_scores_beta0.5.csv");
    let out = taxnet(&["cartogram-data", s(&scores), "--sector", "K"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows[0], "jurisdiction,M");
    let mut ranked: Vec<(String, f64)> = rows[1..]
        .iter()
        .map(|r| {
            let (j, v) = r.split_once(',').unwrap();
            (j.to_owned(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(ranked.len(), 3);
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    assert_eq!([ranked[0].0.as_str(), ranked[1].0.as_str()], ["NLD", "LUX"]);

    let empty = taxnet(&["cartogram-data", s(&scores), "--sector", "A"]);
    assert!(empty.status.success());
    assert_eq!(data_rows(&String::from_utf8(empty.stdout).unwrap()), ["jurisdiction,M"]);
    assert!(String::from_utf8(empty.stderr).unwrap().contains("no scored pairs"));

    let bad = taxnet(&["cartogram-data", s(&scores), "--sector", "Z"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn run_writes_full_output_set() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    assert!(taxnet(&["synth", "--seed", "7", "--out", s(&bundle)]).status.success());
    let out = tmp.path().join("out");
    let res = taxnet(&["run", "--input", s(&bundle), "--beta", "0.3", "--beta", "0.5", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "flows.csv",
        "sink_scores.csv",
        "conduit_scores.csv",
        "load_scores.csv",
        "multilayer_scores_beta0.3.csv",
        "multilayer_scores_beta0.5.csv",
        "beta_sweep.csv",
        "diagnostics.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let digest = manifest["digest"].as_str().unwrap();
    let sink = fs::read_to_string(out.join("sink_scores.csv")).unwrap();
    assert_eq!(sink.lines().next().unwrap(), format!("# manifest-digest: {digest}"));
}
