use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relubits::formats::load_mlp;
use relubits::pipeline::{quantize, Report};
use relubits::MlpNetwork;

fn relubits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relubits"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = relubits(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn blobs(dir: &Path) {
    ok(&["make-blobs", "--n-train", "80", "--n-eval", "40", "--out", p(dir)]);
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(relubits(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(relubits(&["attack", "--attack", "cw"]).status.code(), Some(1));
    assert_eq!(relubits(&["train"]).status.code(), Some(1));
    assert_eq!(relubits(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    blobs(tmp.path());
    let data = tmp.path().join("train.csv");
    let out = relubits(&["extract-bits", "--weights", p(&tmp.path().join("missing.mlp")), "--data", p(&data), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.mlp"));

    ok(&["train", "--data", p(&data), "--epochs", "1", "--out", p(tmp.path())]);
    let weights = tmp.path().join("weights.mlp");
    let out = relubits(&["extract-bits", "--weights", p(&weights), "--data", p(&data), "--layer", "9", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = relubits(&["attack", "--weights", p(&weights), "--data", p(&data), "--epsilon=-1", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_is_reproducible_and_zero_epochs_keeps_the_init() {
    let tmp = tempfile::tempdir().unwrap();
    blobs(tmp.path());
    let data = tmp.path().join("train.csv");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let report = ok(&["train", "--data", p(&data), "--out", p(&a)]);
    ok(&["train", "--data", p(&data), "--out", p(&b)]);
    assert_eq!(fs::read(a.join("weights.mlp")).unwrap(), fs::read(b.join("weights.mlp")).unwrap());
    let acc: f64 = Report::parse(&report).unwrap().get("train_accuracy").unwrap().parse().unwrap();
    assert!(acc >= 0.99);

    let z = tmp.path().join("z");
    ok(&["train", "--data", p(&data), "--epochs", "0", "--seed", "3", "--out", p(&z)]);
    let init = quantize(&MlpNetwork::init(&[16, 64, 64, 32, 2], 3).unwrap()).unwrap();
    assert_eq!(load_mlp(z.join("weights.mlp")).unwrap(), init);
}

#[test]
fn stage_commands_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    blobs(d);
    let train = d.join("train.csv");
    ok(&["train", "--data", p(&train), "--layers", "16,20,10,2", "--epochs", "20", "--out", p(d)]);
    let weights = d.join("weights.mlp");

    let listed = ok(&["extract-bits", "--weights", p(&weights), "--data", p(&train), "--out", p(&d.join("bits"))]);
    assert_eq!(listed.lines().count(), 2);
    let bits = d.join("bits/bits_layer2.bvm");
    let labels = d.join("bits/labels.txt");

    ok(&["select-features", "--bits", p(&bits), "--labels", p(&labels), "--k", "5", "--out", p(&d.join("sel"))]);
    assert_eq!(fs::read_to_string(d.join("sel/selected.txt")).unwrap().lines().count(), 5);
    let out = relubits(&["select-features", "--bits", p(&bits), "--labels", p(&labels), "--k", "11", "--out", p(&d.join("sel"))]);
    assert_eq!(out.status.code(), Some(2));

    ok(&["rdm", "--bits", p(&bits), "--out", p(&d.join("rdm"))]);
    for f in ["rdm.dmx", "rdm.csv", "rdm.pgm"] {
        assert!(d.join("rdm").join(f).exists());
    }
    let report = ok(&["fiedler", "--rdm", p(&d.join("rdm/rdm.dmx")), "--labels", p(&labels), "--out", p(&d.join("fied"))]);
    let acc: f64 = Report::parse(&report).unwrap().get("accuracy").unwrap().parse().unwrap();
    assert!(acc > 0.5);
    ok(&["fiedler", "--rdm", p(&d.join("rdm/rdm.dmx")), "--levels", "2", "--out", p(&d.join("fied2"))]);
    assert!(d.join("fied2/eigenvectors.dmx").exists());

    ok(&["rdm", "--metric", "cosine", "--data", p(&train), "--out", p(&d.join("cos"))]);
    assert_eq!(relubits(&["rdm", "--metric", "cosine", "--bits", p(&bits), "--out", p(d)]).status.code(), Some(2));

    let fooled = ok(&["attack", "--weights", p(&weights), "--data", p(&train), "--attack", "pgd", "--out", p(&d.join("att"))]);
    assert!(fooled.starts_with("fooled_fraction: "));

    let adv = d.join("adv");
    ok(&["pipeline-adv", "--weights", p(&weights), "--data", p(&train), "--k", "6", "--out", p(&adv)]);
    ok(&["svm-train", "--data", p(&adv.join("detector_train.csv")), "--seed", "7", "--out", p(&d.join("svm"))]);
    // the stand-alone SVM stages reproduce the pipeline's detector
    assert_eq!(fs::read(d.join("svm/model.svm")).unwrap(), fs::read(adv.join("detector.svm")).unwrap());
    let eval = ok(&["svm-eval", "--model", p(&d.join("svm/model.svm")), "--data", p(&adv.join("detector_test.csv")), "--out", p(&d.join("svm"))]);
    let pipeline_report = Report::parse(&fs::read_to_string(adv.join("report.txt")).unwrap()).unwrap();
    let eval_report = Report::parse(&eval).unwrap();
    assert_eq!(eval_report.get("accuracy"), pipeline_report.get("test_accuracy"));
    assert_eq!(eval_report.get("auroc"), pipeline_report.get("test_auroc"));
}

#[test]
fn fiedler_pipeline_over_all_layers_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    blobs(d);
    ok(&["train", "--data", p(&d.join("train.csv")), "--layers", "16,20,10,2", "--epochs", "20", "--out", p(d)]);
    let out = ok(&[
        "pipeline-fiedler",
        "--weights", p(&d.join("weights.mlp")),
        "--train", p(&d.join("train.csv")),
        "--eval", p(&d.join("eval.csv")),
        "--k", "16",
        "--out", p(&d.join("f")),
    ]);
    assert_eq!(out.lines().count(), 2);
    let summary = Report::parse(&fs::read_to_string(d.join("f/summary.txt")).unwrap()).unwrap();
    assert_eq!(summary.get("layer_2_k_effective"), Some("10"));
    for f in ["selected.txt", "scores.csv", "rdm_train.dmx", "rdm_eval.pgm", "partition_eval.csv", "report.txt"] {
        assert!(d.join("f/layer_1").join(f).exists(), "{f}");
    }
}
