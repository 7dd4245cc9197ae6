use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polarmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarmix"))
        .args(args)
        .current_dir(dir)
        .env("POLARMIX_THREADS", "2")
        .output()
        .unwrap()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn validator(name: &str) -> jsonschema::Validator {
    let mut opts = jsonschema::options();
    for entry in std::fs::read_dir(schema_dir()).unwrap() {
        let p = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        let uri = format!("json-schema:///{}", p.file_name().unwrap().to_string_lossy());
        opts.with_resource(uri, jsonschema::Resource::from_contents(doc).unwrap());
    }
    let main: Value = serde_json::from_str(&std::fs::read_to_string(schema_dir().join(name)).unwrap()).unwrap();
    opts.build(&main).unwrap()
}

fn assert_valid(schema: &str, file: &Path) {
    let v = validator(schema);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    let errors: Vec<String> = v.iter_errors(&doc).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{} against {schema}: {errors:?}", file.display());
}

fn read_csv(file: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(file).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect::<Vec<_>>();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    for row in &rows {
        assert_eq!(row.len(), header.len(), "ragged row in {}", file.display());
    }
    (header, rows)
}

#[test]
fn evolve_depth_two_matches_closed_form_densities() {
    let d = tempfile::tempdir().unwrap();
    let out = polarmix(d.path(), &["evolve", "--dist", "uniform:0,1", "--n", "2", "--out", "o"]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&d.path().join("o/family.csv"));
    assert_eq!(header, ["t", "cdf_00", "pdf_00", "cdf_01", "pdf_01", "cdf_10", "pdf_10", "cdf_11", "pdf_11"]);
    let closed: [fn(f64) -> f64; 4] = [
        |t| 4.0 * (1.0 - t).powi(3),
        |t| 4.0 * t * (1.0 - t) * (2.0 - t),
        |t| 4.0 * t * (1.0 - t) * (1.0 + t),
        |t| 4.0 * t.powi(3),
    ];
    for row in rows {
        let v: Vec<f64> = row.iter().map(|x| x.parse().unwrap()).collect();
        let t = v[0];
        if t <= 0.0 || t >= 1.0 {
            continue;
        }
        for (k, f) in closed.iter().enumerate() {
            assert!((v[2 + 2 * k] - f(t)).abs() < 1e-12, "member {k} at t = {t}");
        }
    }
    assert_valid("family.schema.json", &d.path().join("o/family.json"));
}

#[test]
fn codec_reports_roundtrip() {
    let d = tempfile::tempdir().unwrap();
    let out = polarmix(d.path(), &["codec", "--n", "3", "--rate", "0.5", "--seed", "1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("roundtrip max rel err < 1e-9"));
    assert_valid("codec_report.schema.json", &d.path().join("o/codec_report.json"));
}

#[test]
fn validation_errors_exit_two_and_name_the_key() {
    let d = tempfile::tempdir().unwrap();
    for (args, key) in [
        (vec!["simulate", "--trials", "0"], "trials"),
        (vec!["construct", "--rate", "1.5"], "rate"),
        (vec!["construct", "--dist", "gamma:2"], "dist"),
        (vec!["construct", "--rule", "median"], "rule"),
    ] {
        let out = polarmix(d.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(key), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn unwritable_output_exits_three() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("blocker"), b"").unwrap();
    let out = polarmix(d.path(), &["construct", "--n", "2", "--out", "blocker/sub"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.json"), r#"{"n": 3, "seed": 4, "trials": 50}"#).unwrap();
    let out = polarmix(d.path(), &["simulate", "--config", "run.json", "--seed", "9", "--out", "o"]);
    assert!(out.status.success());
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("o/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["n"], 3);
    assert_eq!(cfg["trials"], 50);

    std::fs::write(d.path().join("bad.json"), r#"{"n": 3, "colour": "red"}"#).unwrap();
    let out = polarmix(d.path(), &["simulate", "--config", "bad.json", "--out", "o2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn artifacts_validate_and_parse() {
    let d = tempfile::tempdir().unwrap();
    let common = ["--n", "3", "--trials", "200", "--paths", "50", "--deadline", "0.6,0.8", "--joint-points", "16"];
    for cmd in ["construct", "simulate", "analyze", "joint"] {
        let mut args = vec![cmd, "--out", cmd];
        args.extend_from_slice(&common);
        let out = polarmix(d.path(), &args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert_valid("config.schema.json", &d.path().join(cmd).join("config.json"));
        for entry in std::fs::read_dir(d.path().join(cmd)).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                let bytes = std::fs::read(&p).unwrap();
                assert!(bytes.ends_with(b"\r\n"), "{}", p.display());
                let (header, rows) = read_csv(&p);
                assert!(!header.is_empty() && !rows.is_empty(), "{}", p.display());
            }
        }
    }
    assert_valid("frozenset.schema.json", &d.path().join("construct/frozenset.json"));
    assert_valid("summary.schema.json", &d.path().join("simulate/summary.json"));
    assert_valid("analysis.schema.json", &d.path().join("analyze/analysis.json"));

    let (header, rows) = read_csv(&d.path().join("construct/bounds.csv"));
    assert_eq!(header, ["deadline", "failure_bound"]);
    let bounds: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(bounds.windows(2).all(|w| w[1] <= w[0]));

    let (header, rows) = read_csv(&d.path().join("simulate/comparison.csv"));
    assert_eq!(header, ["trial", "scheme", "decode_time"]);
    assert_eq!(rows.len(), 200 * 4);
}

#[test]
fn frozen_set_file_roundtrips_through_library() {
    let d = tempfile::tempdir().unwrap();
    assert!(polarmix(d.path(), &["construct", "--n", "4", "--rate", "0.25", "--out", "o"]).status.success());
    let text = std::fs::read_to_string(d.path().join("o/frozenset.json")).unwrap();
    let f = polarmix::freezing::FrozenSet::from_json(&text).unwrap();
    assert_eq!((f.workers(), f.k()), (16, 4));
    assert_eq!(f.to_json(), text);
}
