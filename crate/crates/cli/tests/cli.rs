use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use cnnslicer_cli::format::sig6;
use cnnslicer_core::deconv::project_sample;
use cnnslicer_core::flow::{capacity_matrix, channel_intra_entropy, layer_inter_entropy, sort_matrix, SortAxis, SortStat};
use cnnslicer_core::render::encode_png;
use cnnslicer_core::store::{Run, SampleSelector};
use cnnslicer_testkit::dump::{one_hot_outputs, tiny_net, DumpSpec};
use serde_json::Value;

/// Writes run "tiny" (nothing predicted as class 2 at epoch 3) and run
/// "partial" (layers 0..=3 dumped) under `dir`.
fn fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let mut spec = DumpSpec::random("tiny", tiny_net(), 3, 4, &[0, 3], 11);
    spec.outputs.insert(3, one_hot_outputs(3, &(0..12).map(|i| i % 2).collect::<Vec<_>>()));
    let tiny = spec.write(&dir.join("tiny"));
    let partial =
        DumpSpec::random("partial", tiny_net().dump_only(&[0, 1, 2, 3]), 3, 4, &[0], 5).write(&dir.join("partial"));
    (tiny, partial)
}

fn cnnslicer(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cnnslicer"));
    cmd.args(args).env_remove("CNNSLICER_DATA_ROOT");
    cmd
}

fn run(args: &[&str]) -> Output {
    cnnslicer(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Data error: exit 2 and `{"code", "message"}` on stderr.
fn data_error(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(out.status.code(), Some(2), "{args:?}");
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
    err["code"].as_str().unwrap().to_string()
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; rerun with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "{name} differs from its golden file");
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn query_intra_is_the_per_channel_intra_entropy() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let out = ok(&["query", "--run", s(&tiny), "--slice", "x=label:0;l=3;c=*;t=3", "--metric", "intra"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    golden("query_intra.csv", &csv);

    let run = Run::open(&tiny).unwrap();
    let table = rows(&csv);
    assert_eq!(table[0], ["layer", "epoch", "channel", "bits"]);
    assert_eq!(table.len(), 5);
    for (c, row) in table[1..].iter().enumerate() {
        let direct = channel_intra_entropy(&run, 3, 3, c, &SampleSelector::Label(0), 32).unwrap();
        assert_eq!(row, &["3".to_string(), "3".into(), c.to_string(), sig6(direct)]);
    }
}

#[test]
fn query_inter_over_every_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let out_file = tmp.path().join("out/inter.csv");
    ok(&["query", "--run", s(&tiny), "--slice", "t=0", "--k", "5", "--out", s(&out_file)]);
    let csv = fs::read_to_string(&out_file).unwrap();
    golden("query_inter.csv", &csv);

    let run = Run::open(&tiny).unwrap();
    for (layer, row) in rows(&csv)[1..].iter().enumerate() {
        let direct = layer_inter_entropy(&run, 0, layer, &SampleSelector::All, 5).unwrap();
        assert_eq!(row, &[layer.to_string(), "0".into(), String::new(), sig6(direct)]);
    }
}

#[test]
fn query_on_an_undumped_layer_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, partial) = fixtures(tmp.path());
    assert_eq!(data_error(&["query", "--run", s(&partial), "--slice", "l=5;t=0"]), "LayerNotDumped");
    let out = run(&["query", "--run", s(&partial), "--slice", "l=5;t=0"]);
    assert!(out.stdout.is_empty());
}

#[test]
fn capacity_matrix_and_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let out = tmp.path().join("cap.csv");
    ok(&["capacity", "--run", s(&tiny), "--epoch", "3", "--layers", "3,4", "--sort", "cols:max", "--out", s(&out)]);
    let matrix = fs::read_to_string(&out).unwrap();
    let row_order = fs::read_to_string(tmp.path().join("cap.rows.csv")).unwrap();
    let col_order = fs::read_to_string(tmp.path().join("cap.cols.csv")).unwrap();
    golden("capacity.csv", &matrix);
    golden("capacity.rows.csv", &row_order);
    golden("capacity.cols.csv", &col_order);

    let run = Run::open(&tiny).unwrap();
    let m = sort_matrix(
        &capacity_matrix(&run, 3, 3, 4, &SampleSelector::All, 32).unwrap(),
        SortAxis::Cols,
        SortStat::Max,
    );
    let table = rows(&matrix);
    assert_eq!(table[0], ["channel", "0", "1", "2", "3", "4", "5"]);
    for (a, row) in table[1..].iter().enumerate() {
        assert_eq!(row[0], a.to_string());
        let expected: Vec<String> = m.values[a].iter().map(|&v| sig6(v)).collect();
        assert_eq!(&row[1..], expected.as_slice());
    }
    let cols: Vec<usize> = rows(&col_order)[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(cols, m.col_order);
    let rows_: Vec<usize> = rows(&row_order)[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(rows_, vec![0, 1, 2, 3]);

    // Same arguments, same bytes.
    ok(&["capacity", "--run", s(&tiny), "--epoch", "3", "--layers", "3,4", "--sort", "cols:max", "--out", s(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap(), matrix);
}

#[test]
fn perf_writes_confusion_conditional_and_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let dir = tmp.path().join("perf");
    ok(&["perf", "--run", s(&tiny), "--out-dir", s(&dir)]);
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "conditional_label_given_pred.csv",
            "conditional_pred_given_label.csv",
            "confusion_epoch_0.csv",
            "confusion_epoch_3.csv",
            "loss.csv"
        ]
    );
    for name in &names {
        golden(&format!("perf/{name}"), &fs::read_to_string(dir.join(name)).unwrap());
    }
    let confusion = fs::read_to_string(dir.join("confusion_epoch_3.csv")).unwrap();
    assert_eq!(confusion, "label,0,1,2\n0,2,2,0\n1,2,2,0\n2,2,2,0\n");
    let conditional = fs::read_to_string(dir.join("conditional_label_given_pred.csv")).unwrap();
    assert!(conditional.contains("\n2,3,\n"), "{conditional}");
    assert!(conditional.contains("\n0,3,1.58496\n"), "{conditional}");
    assert_eq!(
        fs::read_to_string(dir.join("loss.csv")).unwrap(),
        "epoch,train_loss,test_accuracy\n1,1,0.5\n2,0.5,0.5\n3,0.333333,0.5\n"
    );
}

#[test]
fn series_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let out = tmp.path().join("series.csv");
    ok(&["series", "--run", s(&tiny), "--layer", "1", "-B", "16", "--out", s(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    golden("series.csv", &csv);
    let table = rows(&csv);
    // 4 channels x (3 classes + all) x 2 epochs.
    assert_eq!(table.len(), 1 + 4 * 4 * 2);
    assert_eq!(table[8], ["0", "all", "3", table[8][3].as_str()]);
}

#[test]
fn deconv_png_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let out = tmp.path().join("p.png");
    ok(&[
        "deconv", "--run", s(&tiny), "--epoch", "3", "--layer", "4", "--channel", "5", "--sample", "2", "--out", s(&out),
    ]);
    let run = Run::open(&tiny).unwrap();
    let expected = encode_png(project_sample(&run, 3, 4, 5, 2).unwrap().view()).unwrap();
    assert_eq!(fs::read(&out).unwrap(), expected);
    assert_eq!(
        data_error(&["deconv", "--run", s(&tiny), "--epoch", "3", "--layer", "4", "--channel", "9", "--sample", "2", "--out", s(&out)]),
        "UnknownChannel"
    );
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let scratch = tmp.path().join("scratch.csv");
    for args in [
        &[][..],
        &["frobnicate"],
        &["query", "--slice", "t=0"],
        &["query", "--run", s(&tiny), "--slice", "t=0", "--bogus"],
        &["capacity", "--run", s(&tiny), "--epoch", "x", "--layers", "1", "--out", s(&scratch)],
        &["capacity", "--run", s(&tiny), "--epoch", "0", "--layers", "1,2,3", "--out", s(&scratch)],
        &["query", "--run", "tiny", "--slice", "t=0"],
        &["serve"],
        &["perf", "--run", s(&tiny), "--out-dir", s(&scratch), "--config", "/nonexistent.toml"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let help = ok(&["--help"]);
    assert!(String::from_utf8(help.stdout).unwrap().contains("capacity"));

    assert_eq!(data_error(&["query", "--run", s(&tiny), "--slice", "l=foo"]), "InvalidSlice");
    assert_eq!(data_error(&["query", "--run", s(&tiny), "--slice", "t=0", "--metric", "both"]), "InvalidArgument");
    assert_eq!(data_error(&["query", "--run", s(&tiny), "--slice", "x=ids:0;l=1;t=0"]), "TooFewSamples");
    assert_eq!(data_error(&["query", "--run", s(&tiny), "--slice", "t=7"]), "UnknownEpoch");
    let root = tmp.path().to_str().unwrap();
    assert_eq!(data_error(&["--data-root", root, "query", "--run", "nope", "--slice", "t=0"]), "UnknownRun");
    assert_eq!(data_error(&["ingest", s(&tmp.path().join("missing"))]), "MissingFile");
}

#[test]
fn ingest_registers_runs_under_the_data_root() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let root = tmp.path().join("root");
    let first = ok(&["ingest", "--data-root", s(&root), s(&tiny)]);
    let summary: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(summary["run_id"], "tiny");
    assert!(root.join("tiny/manifest.json").is_file());
    let index = fs::read(tiny.join("index.json")).unwrap();
    // Idempotent.
    let second = ok(&["ingest", "--data-root", s(&root), s(&tiny)]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(fs::read(tiny.join("index.json")).unwrap(), index);

    // The env var supplies the data root; run ids resolve under it.
    let out = cnnslicer(&["query", "--run", "tiny", "--slice", "x=label:0;l=3;c=*;t=3", "--metric", "intra"])
        .env("CNNSLICER_DATA_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    golden("query_intra.csv", &String::from_utf8(out.stdout).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let (tiny, _) = fixtures(tmp.path());
    let config = tmp.path().join("cnnslicer.toml");
    fs::write(
        &config,
        format!(
            "data_root = \"{}\"\nthreads = 1\n\n[query]\nrun = \"tiny\"\nslice = \"x=label:0;l=3;c=*;t=3\"\nmetric = \"inter\"\nk = 3\n",
            tmp.path().display()
        ),
    )
    .unwrap();
    let out = ok(&["query", "--config", s(&config), "--metric", "intra"]);
    golden("query_intra.csv", &String::from_utf8(out.stdout).unwrap());

    let out = ok(&["query", "--config", s(&config), "--run", s(&tiny)]);
    let table = rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(table.len(), 2);
    assert_eq!(table[1][2], "");
}

#[test]
fn serve_answers_http_requests() {
    let tmp = tempfile::tempdir().unwrap();
    fixtures(tmp.path());
    let mut child = cnnslicer(&["serve", "--data-root", s(tmp.path()), "--port", "0", "--threads", "1"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        if stderr.read_line(&mut line).unwrap() == 0 {
            let _ = child.kill();
            panic!("service exited before listening");
        }
        if line.contains("listening") {
            let addr = line.split("addr=").nth(1).unwrap().trim().to_string();
            break addr;
        }
    };
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /api/runs/tiny/confusion?epoch=3 HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.to_ascii_lowercase().contains("etag: \""));
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let m: Value = serde_json::from_str(body).unwrap();
    assert_eq!(m["counts"], serde_json::json!([[2, 2, 0], [2, 2, 0], [2, 2, 0]]));
}
