use std::fs;
use std::path::Path;

use relubits::data::{make_blobs, BlobSpec, Dataset};
use relubits::formats::{load_bvm, load_dmx, load_mlp, load_svm, read_bvm, read_dmx, read_mlp, read_svm, write_bvm, write_dmx, write_mlp, write_svm};
use relubits::net::TrainConfig;
use relubits::pipeline::{
    adversarial_pipeline, cmd_extract_bits, cmd_fiedler_pipeline, cmd_train, fiedler_pipeline, quantize, AdvOptions,
    LayerSel, Report,
};
use relubits::{AttackConfig, BitMatrix, Error, Matrix, MlpNetwork};

fn small_setup(dir: &Path) -> (MlpNetwork, Dataset, Dataset) {
    let all = make_blobs(&BlobSpec {
        n_samples: 120,
        ..BlobSpec::default()
    })
    .unwrap();
    let idx: Vec<usize> = (0..120).collect();
    let train = all.subset(&idx[..90]);
    let eval = all.subset(&idx[90..]);
    let config = TrainConfig {
        layer_dims: vec![16, 24, 12, 2],
        epochs: 20,
        ..TrainConfig::default()
    };
    let net = cmd_train(&train, &config, &dir.join("net")).unwrap().network;
    (net, train, eval)
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Context { source, .. } => root(source),
        other => other,
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn eval_labels_do_not_influence_selection_or_partitions() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, train, eval) = small_setup(tmp.path());
    let mut corrupted = eval.clone();
    for l in &mut corrupted.labels {
        *l = 1 - *l;
    }
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_fiedler_pipeline(&net, &train, &eval, LayerSel::One(2), 8, &a).unwrap();
    cmd_fiedler_pipeline(&net, &train, &corrupted, LayerSel::One(2), 8, &b).unwrap();
    let fa = files(&a);
    let fb = files(&b);
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "report.txt" {
            assert_eq!(ba, bb, "{na} depends on eval labels");
        }
    }
}

#[test]
fn duplicated_prototypes_partition_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let protos = [[true, true, false, true, false, false], [true, false, true, false, false, true]];
    let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
    let bits = BitMatrix::from_fn(10, 6, |i, j| protos[labels[i]][j]);
    let out = fiedler_pipeline(&bits, &labels, &bits, &labels, 6, None, tmp.path()).unwrap();
    assert_eq!(out.train.accuracy, 1.0);
    assert_eq!(out.eval.accuracy, 1.0);
}

#[test]
fn k_beyond_width_is_clamped_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let protos = [[true, true, false, true], [true, false, true, false]];
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let bits = BitMatrix::from_fn(8, 4, |i, j| protos[labels[i]][j]);
    let out = fiedler_pipeline(&bits, &labels, &bits, &labels, 64, None, tmp.path()).unwrap();
    assert_eq!((out.k_requested, out.k_effective), (64, 4));
    assert_eq!(out.report.get("k_effective"), Some("4"));
    let err = fiedler_pipeline(&bits, &labels, &bits, &labels, 0, None, tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Param(_)));
}

#[test]
fn single_class_and_disconnected_graphs_are_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bits = BitMatrix::from_fn(6, 4, |i, j| (i + j) % 2 == 0);
    let one_class = vec![0; 6];
    let err = fiedler_pipeline(&bits, &one_class, &bits, &one_class, 4, None, tmp.path()).unwrap_err();
    assert!(matches!(err, Error::Label(_)));

    // complementary prototypes: every cross-class similarity is 0
    let labels: Vec<usize> = (0..6).map(|i| i % 2).collect();
    let bits = BitMatrix::from_fn(6, 4, |i, j| (labels[i] == 0) == (j % 2 == 0));
    let err = fiedler_pipeline(&bits, &labels, &bits, &labels, 4, Some(3), tmp.path()).unwrap_err();
    assert!(matches!(root(&err), Error::Multiplicity { components: 2 }), "{err}");
}

#[test]
fn layer_context_is_attached_to_stage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, train, _) = small_setup(tmp.path());
    let mut single = train.clone();
    for l in &mut single.labels {
        *l = 0;
    }
    let err = cmd_fiedler_pipeline(&net, &single, &train, LayerSel::All, 8, &tmp.path().join("x")).unwrap_err();
    assert!(err.to_string().starts_with("layer 1:"), "{err}");
    let err = cmd_fiedler_pipeline(&net, &train, &train, LayerSel::One(3), 8, &tmp.path().join("y")).unwrap_err();
    assert!(matches!(root(&err), Error::Param(_)));
}

#[test]
fn extract_bits_writes_one_file_per_hidden_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let net = MlpNetwork::init(&[3, 4, 5, 2], 1).unwrap();
    let x = Matrix::from_fn(7, 3, |i, j| (i as f64 - 3.0) * (j as f64 + 1.0) * 0.3);
    let paths = cmd_extract_bits(&net, &x, LayerSel::All, tmp.path()).unwrap();
    assert_eq!(paths.len(), 2);
    let first = load_bvm(&paths[0]).unwrap();
    assert_eq!((first.n_rows(), first.n_bits()), (7, 4));
    assert!(cmd_extract_bits(&net, &x, LayerSel::One(3), tmp.path()).is_err());

    let identity = MlpNetwork::new(
        vec![2, 2, 2],
        vec![Matrix::identity(2), Matrix::identity(2)],
        vec![vec![0.0; 2], vec![0.0; 2]],
    )
    .unwrap();
    let input = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
    let paths = cmd_extract_bits(&identity, &input, LayerSel::One(1), tmp.path()).unwrap();
    assert_eq!(load_bvm(&paths[0]).unwrap().row(0).to_string(), "10");
}

#[test]
fn zero_epoch_training_stores_the_seeded_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let data = make_blobs(&BlobSpec {
        n_samples: 30,
        ..BlobSpec::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    cmd_train(&data, &config, tmp.path()).unwrap();
    let stored = load_mlp(tmp.path().join("weights.mlp")).unwrap();
    assert_eq!(stored, quantize(&MlpNetwork::init(&config.layer_dims, config.seed).unwrap()).unwrap());
}

#[test]
fn zero_epsilon_attack_gives_a_chance_level_detector() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, train, _) = small_setup(tmp.path());
    let opts = AdvOptions {
        attack: AttackConfig::fgsm(0.0),
        k: 8,
        ..AdvOptions::default()
    };
    let out = adversarial_pipeline(&net, &train, &opts, &tmp.path().join("adv")).unwrap();
    assert!((out.fooled_fraction - (1.0 - net.accuracy(&train.features, &train.labels).unwrap())).abs() < 1e-12);
    assert!((0.35..=0.65).contains(&out.auroc), "auroc {}", out.auroc);
    let test = Dataset::load(tmp.path().join("adv/detector_test.csv")).unwrap();
    let half = test.len() / 2;
    for i in 0..half {
        assert_eq!(test.features.row(i), test.features.row(i + half));
    }
}

#[test]
fn pipelines_are_byte_reproducible() {
    let run = |dir: &Path| {
        let (net, train, eval) = small_setup(dir);
        cmd_fiedler_pipeline(&net, &train, &eval, LayerSel::All, 8, &dir.join("fiedler")).unwrap();
        let opts = AdvOptions {
            attack: AttackConfig::pgd(0.5, 5, 0.1),
            k: 8,
            latent: true,
            ..AdvOptions::default()
        };
        adversarial_pipeline(&net, &train, &opts, &dir.join("adv")).unwrap();
        files(dir)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run(a.path());
    let fb = run(b.path());
    assert!(fa.len() > 20);
    assert_eq!(fa, fb);
}

#[test]
fn artifacts_round_trip_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let (net, train, eval) = small_setup(tmp.path());
    cmd_fiedler_pipeline(&net, &train, &eval, LayerSel::One(1), 8, &tmp.path().join("f")).unwrap();
    let opts = AdvOptions {
        k: 8,
        latent: true,
        ..AdvOptions::default()
    };
    adversarial_pipeline(&net, &train, &opts, &tmp.path().join("adv")).unwrap();
    cmd_extract_bits(&net, &train.features, LayerSel::All, &tmp.path().join("bits")).unwrap();

    for (name, bytes) in files(tmp.path()) {
        let path = tmp.path().join(&name);
        let mut again = Vec::new();
        match path.extension().and_then(|e| e.to_str()) {
            Some("mlp") => write_mlp(&read_mlp(bytes.as_slice()).unwrap(), &mut again).unwrap(),
            Some("bvm") => write_bvm(&read_bvm(bytes.as_slice()).unwrap(), &mut again).unwrap(),
            Some("dmx") => write_dmx(&read_dmx(bytes.as_slice()).unwrap(), &mut again).unwrap(),
            Some("svm") => write_svm(&read_svm(bytes.as_slice()).unwrap(), &mut again).unwrap(),
            Some("csv") if name.starts_with("adv/detector") => {
                Dataset::read_csv(bytes.as_slice()).unwrap().write_csv(&mut again).unwrap()
            }
            Some("txt") if name.ends_with("report.txt") || name.ends_with("summary.txt") => {
                Report::parse(std::str::from_utf8(&bytes).unwrap()).unwrap().write(&mut again).unwrap()
            }
            _ => continue,
        }
        assert_eq!(again, bytes, "{name}");
    }
    // the loaders agree with the in-memory values
    let svm = load_svm(tmp.path().join("adv/detector.svm")).unwrap();
    assert_eq!(svm.dim(), 16);
    let rdm = load_dmx(tmp.path().join("f/rdm_eval.dmx")).unwrap();
    assert_eq!(rdm.rows(), eval.len());
}
