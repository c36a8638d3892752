use std::path::Path;

use clap::Parser;
use extremes::cli::{run, Cli};
use extremes::series::{read_metadata, Series};
use extremes::Error;
use serde_json::Value;

fn exec(args: &[&str]) -> extremes::Result<()> {
    let mut argv = vec!["extremes"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).expect("arguments parse"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.display().to_string()
}

#[test]
fn csv_ingest_rules() {
    let s = Series::read_csv("# note: x\nY, V1\n1.5,NA\n2.5,\n,3\n".as_bytes()).unwrap();
    assert_eq!(s.names(), &["Y".to_string(), "V1".to_string()]);
    assert_eq!(s.missing_mask("V1").unwrap(), &[true, true, false]);
    assert_eq!(s.missing_mask("Y").unwrap(), &[false, false, true]);
    assert!(matches!(Series::read_csv("".as_bytes()), Err(Error::Ingest { .. })));
    assert!(matches!(Series::read_csv("# only\n".as_bytes()), Err(Error::Ingest { .. })));
    assert!(matches!(
        Series::read_csv("a,b\n1,2\n3\n".as_bytes()),
        Err(Error::Ingest { line: 3, .. })
    ));
}

#[test]
fn synth_then_fit_and_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("u.json"), r#"{"n": 4000, "missing": 0.0}"#);
    let data = dir.path().join("u.csv");
    exec(&["synth", "univariate", "--seed", "3", "--config", &cfg, "-o", data.to_str().unwrap()]).unwrap();
    let meta = read_metadata(std::fs::File::open(&data).unwrap()).unwrap();
    assert!(meta.iter().any(|(k, v)| k == "truth" && v.contains("\"seed\":3")));
    let s = Series::read_csv_path(&data).unwrap();
    assert_eq!(s.n_rows(), 4000);

    let input = data.to_str().unwrap();
    let fit = dir.path().join("fit.json");
    let qq = dir.path().join("qq.csv");
    exec(&["fit-gpd", "--input", input, "--tau", "0.85", "--qq", qq.to_str().unwrap(), "-o", fit.to_str().unwrap()])
        .unwrap();
    let r = json(&fit);
    assert_eq!(r["command"], "fit-gpd");
    assert_eq!(r["seed"], 1);
    assert!(r["result"]["shape"].as_f64().unwrap().abs() < 0.5);
    assert_eq!(Series::read_csv_path(&qq).unwrap().n_rows(), r["result"]["n_v"].as_u64().unwrap() as usize);

    let q = dir.path().join("q.json");
    exec(&["quantile", "--input", input, "--tau", "0.85", "--marginal", "--prob", "0.999", "-o", q.to_str().unwrap()])
        .unwrap();
    let r = json(&q);
    let point = r["result"][0]["point"].as_f64().unwrap();
    let y = s.column("Y").unwrap();
    assert!(point > extremes::numeric::quantile(y, 0.99));

    let sel = dir.path().join("sel.json");
    exec(&[
        "select-threshold", "--input", input, "--candidates", "0.8,0.9", "--boot", "50", "-o",
        sel.to_str().unwrap(),
    ])
    .unwrap();
    let c = json(&sel)["result"]["chosen"].as_f64().unwrap();
    assert!(c == 0.8 || c == 0.9);
}

#[test]
fn forward_select_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("u.json"), r#"{"n": 3000, "missing": 0.0}"#);
    let data = dir.path().join("u.csv");
    exec(&["synth", "univariate", "--config", &cfg, "-o", data.to_str().unwrap()]).unwrap();
    let table = dir.path().join("t.csv");
    let out = dir.path().join("fs.json");
    exec(&[
        "forward-select", "--input", data.to_str().unwrap(), "--tau", "0.85", "--pool", "lin(V3);lin(V1)",
        "--table", table.to_str().unwrap(), "-o", out.to_str().unwrap(),
    ])
    .unwrap();
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("model,formula,delta_crps,delta_aic,delta_bic\n1,\"1\",0.0,0.0,0.0\n"));
    assert_eq!(json(&out)["result"]["k"], 5);
}

#[test]
fn dependence_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("t.json"), r#"{"n": 3000, "copula": {"kind": "comonotone"}}"#);
    let data = dir.path().join("t.csv");
    exec(&["synth", "trivariate", "--config", &cfg, "-o", data.to_str().unwrap()]).unwrap();
    let input = data.to_str().unwrap();

    let out = dir.path().join("d.json");
    let heat = dir.path().join("chi.csv");
    exec(&[
        "dep-measures", "--input", input, "--columns", "Y1,Y2,Y3", "--slice-by", "season", "--boot", "5",
        "--heatmap", heat.to_str().unwrap(), "-o", out.to_str().unwrap(),
    ])
    .unwrap();
    let r = json(&out);
    assert_eq!(r["result"]["chi"][0][1], 1.0);
    assert_eq!(r["result"]["sliced"].as_array().unwrap().len(), 4);
    assert_eq!(Series::read_csv_path(&heat).unwrap().n_rows(), 3);

    let out = dir.path().join("c.json");
    exec(&["cluster", "--input", input, "--columns", "Y1,Y2,Y3", "-o", out.to_str().unwrap()]).unwrap();
    assert_eq!(json(&out)["result"]["groups"], serde_json::json!([[0, 1, 2]]));

    let out = dir.path().join("e.csv");
    exec(&[
        "transform", "--input", input, "--columns", "Y1", "--from", "gumbel", "--to", "exponential", "-o",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let e = Series::read_csv_path(&out).unwrap();
    assert!(e.column("Y1").unwrap().iter().all(|v| *v > 0.0));
}

#[test]
fn condex_command_on_grouped_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("g.json"),
        r#"{"n": 3000, "groups": [[0, 1], [2]], "within": {"kind": "gaussian", "rho": 0.7}}"#,
    );
    let data = dir.path().join("g.csv");
    exec(&["synth", "grouped", "--config", &cfg, "-o", data.to_str().unwrap()]).unwrap();
    let groups = write(&dir.path().join("groups.json"), "[[0, 1], [2]]");
    let out = dir.path().join("p.json");
    exec(&[
        "joint-prob", "condex", "--input", data.to_str().unwrap(), "--groups", &groups, "--boot", "3", "--sims",
        "20000", "-o", out.to_str().unwrap(),
    ])
    .unwrap();
    let r = json(&out);
    let per: Vec<f64> = r["result"]["per_group"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let p = r["result"]["probability"].as_f64().unwrap();
    assert!((p - per.iter().product::<f64>()).abs() <= 1e-12 * p);
    assert!((per[1] - 1.0 / 300.0).abs() < 1e-12);
}

#[test]
fn missing_input_is_an_error() {
    assert!(exec(&["fit-gpd", "--input", "/nonexistent/file.csv"]).is_err());
    assert!(Cli::try_parse_from(["extremes", "synth", "bogus"]).is_err());
}
