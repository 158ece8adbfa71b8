use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::Request;
use finq::server::router;
use finq::wire::WireCurve;
use finq_core::market_data::{load_history, CsvFormat};
use finq_core::pipeline::load_model;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn finq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finq"))
        .args(args)
        .env_remove("FINQ_MODEL")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Vec<u8> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn workspace() -> &'static Workspace {
    static W: OnceLock<Workspace> = OnceLock::new();
    W.get_or_init(|| {
        let w = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        let data = w.path("curves.csv");
        let model = w.path("model.json");
        ok(finq(&["generate-data", "--n", "200", "--seed", "5", "--out", s(&data)]));
        ok(finq(&[
            "train", "--data", s(&data), "--out", s(&model), "--seed", "5", "--epochs", "40",
        ]));
        w
    })
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(finq(&[]).status.code(), Some(1));
    assert_eq!(finq(&["decompose", "--bogus"]).status.code(), Some(1));
    assert_eq!(finq(&["--help"]).status.code(), Some(0));
    assert_eq!(finq(&["--version"]).status.code(), Some(0));
    let w = workspace();
    let out = finq(&["scenario", "--model", s(&w.path("model.json")), "--move", "10Y"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let w = workspace();
    let out = finq(&["decompose", "--model", s(&w.path("missing.json")), "--data", s(&w.path("curves.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
    let out = finq(&["scenario", "--model", s(&w.path("model.json")), "--move", "8Y=+1bp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_is_byte_reproducible() {
    let w = workspace();
    let again = w.path("model_again.json");
    ok(finq(&[
        "train", "--data", s(&w.path("curves.csv")), "--out", s(&again), "--seed", "5", "--epochs", "40",
    ]));
    assert_eq!(std::fs::read(w.path("model.json")).unwrap(), std::fs::read(again).unwrap());
}

#[test]
fn generated_data_is_reproducible() {
    let a = ok(finq(&["generate-data", "--n", "20", "--seed", "9"]));
    let b = ok(finq(&["generate-data", "--n", "20", "--seed", "9"]));
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("date,3M,"));
}

#[test]
fn cli_decompose_matches_service() {
    let w = workspace();
    let data = w.path("curves.csv");
    let model = w.path("model.json");
    let history = load_history(&data, &CsvFormat::default()).unwrap();
    let x = &history.objects()[123];
    let date = x.date.unwrap().to_string();
    let cli: Value =
        serde_json::from_slice(&ok(finq(&["decompose", "--model", s(&model), "--data", s(&data), "--date", &date])))
            .unwrap();

    let app = router(Arc::new(load_model(&model).unwrap()), None, 1 << 20);
    let body = json!({ "curve": WireCurve::from_object(x) }).to_string();
    let req = Request::builder()
        .method("POST")
        .uri("/decompose")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let service: Value = rt.block_on(async {
        let res = app.oneshot(req).await.unwrap();
        serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap()
    });
    assert_eq!(cli, service);
}

#[test]
fn model_path_from_environment() {
    let w = workspace();
    let out = Command::new(env!("CARGO_BIN_EXE_finq"))
        .args(["sample", "--count", "3", "--seed", "2"])
        .env("FINQ_MODEL", w.path("model.json"))
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&ok(out)).unwrap();
    assert_eq!(v["curves"].as_array().unwrap().len(), 3);
}

#[test]
fn scenario_from_mean_shape_and_from_data() {
    let w = workspace();
    let model = w.path("model.json");
    let v: Value = serde_json::from_slice(&ok(finq(&["scenario", "--model", s(&model), "--move", "10Y=+25bp"]))).unwrap();
    assert_eq!(v["converged"], true);
    let v: Value = serde_json::from_slice(&ok(finq(&[
        "scenario",
        "--model",
        s(&model),
        "--data",
        s(&w.path("curves.csv")),
        "--move",
        "3Y=-0.05%",
        "--move",
        "30Y=0.0004",
    ])))
    .unwrap();
    assert_eq!(v["level"], 1);
    assert!(v["date"].is_string());
}

#[test]
fn analysis_commands_write_their_outputs() {
    let w = workspace();
    let model = w.path("model.json");
    let data = w.path("curves.csv");
    let rs = String::from_utf8(ok(finq(&[
        "residual-signal", "--model", s(&model), "--data", s(&data), "--tenor", "20Y",
    ])))
    .unwrap();
    assert!(rs.starts_with("date,resid_o0,resid_o1,resid_o2\n"));
    assert_eq!(rs.lines().count(), 201);

    let pca = w.path("pca.csv");
    ok(finq(&[
        "pca-compare", "--model", s(&model), "--data", s(&data), "--split-date", "2001-06-01", "--out", s(&pca),
    ]));
    let text = std::fs::read_to_string(pca).unwrap();
    assert!(text.starts_with("date,tenor,finq_abs_resid,pca_abs_resid\n"));

    let v: Value =
        serde_json::from_slice(&ok(finq(&["outliers", "--model", s(&model), "--data", s(&data)]))).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 4);

    let v: Value = serde_json::from_slice(&ok(finq(&[
        "relative-value", "--model", s(&model), "--data", s(&data), "--other", s(&data),
    ])))
    .unwrap();
    assert_eq!(v["tenors"].as_array().unwrap().len(), 18);

    let v: Value = serde_json::from_slice(&ok(finq(&[
        "nowcast", "--model", s(&model), "--observe", "2Y=0.02", "--observe", "5Y=2.5%", "--observe", "10Y=0.03",
        "--observe", "30Y=0.032",
    ])))
    .unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 18);

    let csv = String::from_utf8(ok(finq(&["sample", "--model", s(&model), "--count", "2", "--csv"]))).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
