use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn csc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csc")).args(args).current_dir(dir).env_remove("CSC_THREADS").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = csc(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_then_stats_reports_a_fitted_range() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--nx", "256", "--ny", "256", "--range", "8", "--seed", "1", "--out", "f.raw"]);
    assert_eq!(fs::metadata(d.join("f.raw")).unwrap().len(), 256 * 256 * 8);
    let meta = json(&d.join("f.raw.json"));
    assert_eq!(meta["field_id"], "grf_a8_s1");
    assert_eq!(meta["generator"]["seed"], 1);

    ok(d, &["stats", "--in", "f.raw", "--global-variogram", "--local-variogram", "--local-svd", "-o", "s.json"]);
    let s = json(&d.join("s.json"));
    let a = s["global_variogram"]["fit"]["a"].as_f64().unwrap();
    assert!((6.0..10.0).contains(&a), "{a}");
    assert_eq!(s["local_variogram"]["H"], 32);
    assert_eq!(s["local_svd"]["threshold"], 0.99);

    // matches the library on the same field
    let field = csc_core::fields::generate_grf(&csc_core::GrfSpec::single(256, 256, 8.0, 1)).unwrap();
    let lib = csc_core::variogram::global_range(&field).unwrap();
    assert_eq!(a, lib.range);
}

#[test]
fn compress_writes_a_record_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--nx", "64", "--ny", "48", "--range", "4", "--range", "16", "--out", "m.raw"]);
    let stdout = ok(d, &["compress", "--in", "m.raw", "--codec", "sz-like", "--eb", "1e-3", "--blob", "m.cscx"]);
    let rec: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(rec["max_abs_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(rec["field_id"], "grf_a4+16_s0");
    assert_eq!(rec["original_bytes"], 64 * 48 * 8);
    let blob = fs::read(d.join("m.cscx")).unwrap();
    assert_eq!(&blob[..4], b"CSCX");

    ok(
        d,
        &[
            "compress",
            "--in",
            "m.raw",
            "--codec",
            "sz-like",
            "--eb",
            "1e-2",
            "--option",
            "lossless=none",
            "-o",
            "r.json",
        ],
    );
    assert!(json(&d.join("r.json"))["max_abs_error"].as_f64().unwrap() <= 1e-2);
}

#[test]
fn ingest_slices_a_volume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vol: Vec<u8> = (0..4 * 3 * 2).flat_map(|i| (i as f32).to_le_bytes()).collect();
    fs::write(d.join("vol.f32"), vol).unwrap();
    ok(
        d,
        &[
            "ingest",
            "--in",
            "vol.f32",
            "--dims",
            "4,3,2",
            "--dtype",
            "float32",
            "--slice-axis",
            "0",
            "--slice-index",
            "2",
            "-o",
            "s.raw",
        ],
    );
    let bytes = fs::read(d.join("s.raw")).unwrap();
    let vals: Vec<f64> = bytes.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(vals, vec![12.0, 13.0, 14.0, 15.0, 16.0, 17.0]);
    assert_eq!(json(&d.join("s.raw.json"))["nx"], 2);
}

#[test]
fn failures_exit_nonzero_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = csc(d, &["compress", "--in", "missing.raw", "--codec", "sz-like", "--eb", "1e-3", "-o", "r.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.raw"));
    assert!(!d.join("r.json").exists());

    ok(d, &["gen", "--nx", "16", "--ny", "16", "--range", "2", "--out", "f.raw"]);
    for args in [
        vec!["compress", "--in", "f.raw", "--codec", "lz4", "--eb", "1e-3", "-o", "r.json"],
        vec!["compress", "--in", "f.raw", "--codec", "sz-like", "--eb", "-1", "-o", "r.json"],
        vec!["stats", "--in", "f.raw", "-o", "r.json"],
        vec!["fit", "--records", "nope.csv", "--predictor", "global_range", "-o", "r.json"],
        vec!["fit", "--records", "f.raw.json", "--predictor", "psnr", "-o", "r.json"],
    ] {
        let out = csc(d, &args);
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error"), "{args:?}");
    }
    assert!(!d.join("r.json").exists());
    let out = csc(d, &["gen", "--range", "0", "--nx", "8", "--ny", "8", "--out", "bad.raw"]);
    assert!(!out.status.success());
    assert!(!d.join("bad.raw").exists());
}

const CONFIG: &str = r#"{
    "fields": [{"kind": "grf_sweep", "nx": 64, "ny": 64, "ranges": [2, 3, 4, 6, 8, 12], "seeds": [1]}],
    "codecs": [{"id": "sz-like"}, {"id": "zfp-like"}],
    "error_bounds": [1e-5, 1e-4, 1e-3, 1e-2],
    "statistics": [{"kind": "global_range"}, {"kind": "local_vario_std", "H": 16}, {"kind": "local_svd_std", "H": 16}],
    "output_dir": "from_config"
}"#;

#[test]
fn sweep_fit_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), CONFIG).unwrap();
    ok(d, &["sweep", "--config", "cfg.json"]);
    let records = fs::read_to_string(d.join("from_config/records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next().unwrap(),
        "field_id,codec,eb,original_bytes,compressed_bytes,cr,max_abs_error,global_range,local_vario_std_H16,local_svd_std_H16,encode_seconds,decode_seconds"
    );
    assert_eq!(lines.count(), 6 * 2 * 4);
    let manifest = json(&d.join("from_config/manifest.json"));
    assert_eq!(manifest["config"]["codecs"][1]["id"], "zfp-like");

    let out = Command::new(env!("CARGO_BIN_EXE_csc"))
        .args(["sweep", "--config", "cfg.json", "-o", "again"])
        .current_dir(d)
        .env("CSC_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(d.join("again/records.csv")).unwrap(), records);

    ok(d, &["fit", "--records", "from_config/records.csv", "--predictor", "global_range", "-o", "fits.csv"]);
    let fits = fs::read_to_string(d.join("fits.csv")).unwrap();
    let mut lines = fits.lines();
    assert_eq!(lines.next().unwrap(), "codec,eb,predictor,alpha,beta,r2,residual_std,n");
    assert_eq!(lines.count(), 8);

    ok(
        d,
        &[
            "report",
            "--records",
            "from_config/records.csv",
            "--predictor",
            "global_range",
            "-o",
            "rep",
            "--exclude-eb",
            "1e-2",
        ],
    );
    let panel = fs::read_to_string(d.join("rep/report_sz-like_global_range.csv")).unwrap();
    assert!(panel.starts_with("series,codec,eb,x,cr,field_id\n"));
    assert!(!panel.contains(",0.01,"));
    assert_eq!(panel.lines().filter(|l| l.starts_with("curve,")).count(), 3 * 100);
    assert!(d.join("rep/report_zfp-like_global_range.csv").exists());
}

#[test]
fn report_rejects_rows_over_their_bound_and_bad_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let header = "field_id,codec,eb,original_bytes,compressed_bytes,cr,max_abs_error,global_range,local_vario_std_H32,local_svd_std_H32,encode_seconds,decode_seconds";
    fs::write(d.join("bad.csv"), format!("{header}\nf,sz-like,0.001,800,100,8,0.5,3,,,,\n")).unwrap();
    let out = csc(d, &["report", "--records", "bad.csv", "--predictor", "global_range", "-o", "rep"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bound"));

    fs::write(d.join("short.csv"), "field_id,codec,eb\nf,sz-like,0.001\n").unwrap();
    let out = csc(d, &["fit", "--records", "short.csv", "--predictor", "global_range", "-o", "fits.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected"));
    assert!(!d.join("fits.csv").exists());
}
