//! End-to-end stages shared by the command-line tool and the tests.
//!
//! Every stage writes its artifacts into a caller-chosen directory and
//! returns the numbers it reported. Reports are plain `key: value` lines
//! with floats printed as `%.17g`.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bitvec::{select_columns, BitMatrix};
use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::featsel::{chi2_scores, select_k_best, top_k};
use crate::formats::{
    format_g17, save_bvm, save_dmx, save_mlp, save_svm, write_file, write_index_list,
    write_partition_csv, write_pgm, write_scores_csv,
};
use crate::matrix::Matrix;
use crate::net::{attack, train_sgd, AttackConfig, AttackKind, EpochRecord, MlpNetwork, TrainConfig};
use crate::rdm::{adjacency_from_dissim, laplacian, pearson_rdm, rdm_cosine, rdm_hamming, DissimMatrix};
use crate::spectral::{fiedler_partition, partition_accuracy, Partition};
use crate::svm::{accuracy, auroc, label_of, svm_scores, svm_train, SvmModel, SvmParams};

/// Ordered `key: value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn float(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push((key.into(), format_g17(value)));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k}: {v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, |w| self.write(w))
    }

    /// Parses the format produced by [`Report::write`].
    pub fn parse(text: &str) -> Result<Report> {
        let mut report = Report::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::Data(format!("report line {}: missing ': '", n + 1)))?;
            report.text(k, v);
        }
        Ok(report)
    }
}

/// Which hidden layers a stage works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSel {
    One(usize),
    All,
}

impl LayerSel {
    /// 1-based layer indices, checked against the network.
    pub fn resolve(self, net: &MlpNetwork) -> Result<Vec<usize>> {
        let n = net.n_hidden();
        match self {
            LayerSel::All => Ok((1..=n).collect()),
            LayerSel::One(l) if (1..=n).contains(&l) => Ok(vec![l]),
            LayerSel::One(l) => Err(Error::Param(format!(
                "layer {l} out of range; the network has hidden layers 1..={n}"
            ))),
        }
    }
}

impl std::str::FromStr for LayerSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(LayerSel::All);
        }
        s.parse()
            .map(LayerSel::One)
            .map_err(|_| Error::Param(format!("layer must be a positive index or \"all\", got {s:?}")))
    }
}

impl Display for LayerSel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSel::One(l) => write!(f, "{l}"),
            LayerSel::All => f.write_str("all"),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).with_context(dir.display().to_string()))
}

/// Post-ReLU outputs of hidden layer `layer` (1-based), one row per input.
pub fn hidden_activations(net: &MlpNetwork, inputs: &Matrix, layer: usize) -> Result<Matrix> {
    LayerSel::One(layer).resolve(net)?;
    let rows: Vec<Vec<f64>> = (0..inputs.rows())
        .into_par_iter()
        .map(|i| {
            net.forward(inputs.row(i))
                .map(|mut t| t.layer_outputs.swap_remove(layer - 1))
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, net.hidden_width(layer).unwrap_or(0)));
    }
    Matrix::from_rows(&rows)
}

pub fn extract_bits(net: &MlpNetwork, inputs: &Matrix, layer: usize) -> Result<BitMatrix> {
    BitMatrix::from_activations(&hidden_activations(net, inputs, layer)?)
}

/// Round-trips parameters through the on-disk precision so in-memory
/// results match what a later run loading the weight file would see.
pub fn quantize(net: &MlpNetwork) -> Result<MlpNetwork> {
    let mut buf = Vec::new();
    crate::formats::write_mlp(net, &mut buf)?;
    crate::formats::read_mlp(buf.as_slice())
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub network: MlpNetwork,
    pub log: Vec<EpochRecord>,
    pub selected_epoch: usize,
    pub train_accuracy: f64,
    pub report: Report,
}

/// Trains and writes `weights.mlp`, `train_log.csv` and `train_report.txt`.
/// The returned network and accuracy are those of the stored weights.
pub fn cmd_train(data: &Dataset, config: &TrainConfig, out: &Path) -> Result<TrainSummary> {
    ensure_dir(out)?;
    let outcome = train_sgd(&data.features, &data.labels, config)?;
    let network = quantize(&outcome.network)?;
    save_mlp(&network, out.join("weights.mlp"))?;
    write_file(out.join("train_log.csv"), |w| {
        writeln!(w, "epoch,mean_loss,accuracy")?;
        for r in &outcome.log {
            writeln!(w, "{},{},{}", r.epoch, format_g17(r.mean_loss), format_g17(r.accuracy))?;
        }
        Ok(())
    })?;
    let train_accuracy = network.accuracy(&data.features, &data.labels)?;
    let mut report = Report::new();
    report
        .text("layer_dims", join(&config.layer_dims))
        .text("seed", config.seed)
        .text("epochs", config.epochs)
        .float("learning_rate", config.learning_rate)
        .text("batch_size", config.batch_size)
        .text("selected_epoch", outcome.selected_epoch)
        .float("train_loss", network.mean_loss(&data.features, &data.labels)?)
        .float("train_accuracy", train_accuracy);
    report.save(out.join("train_report.txt"))?;
    Ok(TrainSummary {
        network,
        log: outcome.log,
        selected_epoch: outcome.selected_epoch,
        train_accuracy,
        report,
    })
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `bits_layer{i}.bvm` for every requested layer.
pub fn cmd_extract_bits(net: &MlpNetwork, inputs: &Matrix, layers: LayerSel, out: &Path) -> Result<Vec<PathBuf>> {
    let layers = layers.resolve(net)?;
    ensure_dir(out)?;
    let mut paths = Vec::new();
    for layer in layers {
        let bits = extract_bits(net, inputs, layer)?;
        let path = out.join(format!("bits_layer{layer}.bvm"));
        save_bvm(&bits, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Attacks every row against its own label.
pub fn generate_adversarial(net: &MlpNetwork, data: &Dataset, cfg: &AttackConfig) -> Result<Matrix> {
    cfg.validate()?;
    let rows: Vec<Vec<f64>> = (0..data.len())
        .into_par_iter()
        .map(|i| attack(net, data.features.row(i), data.labels[i], cfg))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Data("no samples to attack".into()));
    }
    Matrix::from_rows(&rows)
}

/// Writes the adversarial set (original labels kept) as `adversarial.csv`
/// and returns the fraction whose prediction no longer matches the label.
pub fn cmd_attack(net: &MlpNetwork, data: &Dataset, cfg: &AttackConfig, out: &Path) -> Result<f64> {
    ensure_dir(out)?;
    let adv = Dataset::new(generate_adversarial(net, data, cfg)?, data.labels.clone())?;
    adv.save(out.join("adversarial.csv"))?;
    Ok(1.0 - net.accuracy(&adv.features, &adv.labels)?)
}

/// Writes `rdm.dmx`, `rdm.csv` and `rdm.pgm`.
pub fn cmd_rdm(rdm: &DissimMatrix, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    save_dmx(rdm.values(), out.join("rdm.dmx"))?;
    write_file(out.join("rdm.csv"), |w| crate::formats::write_matrix_csv(rdm.values(), w))?;
    write_file(out.join("rdm.pgm"), |w| write_pgm(rdm.values(), w))
}

/// Partitions the similarity graph of `rdm` with the sign patterns of
/// `levels` eigenvectors; writes `partition.csv`, `eigenvalues.dmx`
/// (one row) and `eigenvectors.dmx` (vectors as columns). With labels,
/// also scores the partition.
pub fn cmd_fiedler(rdm: &DissimMatrix, levels: usize, labels: Option<&[usize]>, out: &Path) -> Result<Report> {
    ensure_dir(out)?;
    let lap = laplacian(&adjacency_from_dissim(rdm)?)?;
    let part = crate::spectral::sign_pattern_partition(&lap, levels)?;
    let eig = crate::spectral::eig_symmetric(lap.values())?;
    write_file(out.join("partition.csv"), |w| write_partition_csv(&part, w))?;
    save_dmx(&Matrix::from_vec(1, eig.eigenvalues.len(), eig.eigenvalues.clone())?, out.join("eigenvalues.dmx"))?;
    save_dmx(&eig.eigenvectors, out.join("eigenvectors.dmx"))?;
    let mut report = Report::new();
    report
        .text("n", rdm.n())
        .text("levels", levels)
        .text("clusters", part.n_clusters)
        .text("cluster_sizes", join(&part.cluster_sizes()))
        .float("fiedler_value", part.eigenvalues.first().copied().unwrap_or(f64::NAN));
    if let Some(labels) = labels {
        let acc = partition_accuracy(&part, labels)?;
        report
            .float("accuracy", acc.overall)
            .text("per_class_accuracy", join(&acc.per_class.iter().map(|&v| format_g17(v)).collect::<Vec<_>>()))
            .text("mapping", join(&acc.mapping));
    }
    report.save(out.join("report.txt"))?;
    Ok(report)
}

/// Chi-square selection; writes `selected.txt` and `scores.csv`.
pub fn cmd_select_features(bits: &BitMatrix, labels: &[usize], k: usize, out: &Path) -> Result<Vec<usize>> {
    ensure_dir(out)?;
    let fs = select_k_best(bits, labels, k)?;
    write_file(out.join("selected.txt"), |w| write_index_list(&fs.selected, w))?;
    write_file(out.join("scores.csv"), |w| write_scores_csv(&fs.scores, w))?;
    Ok(fs.selected)
}

/// Detector-style label column: 0 maps to −1, 1 to +1.
pub fn binary_labels(labels: &[usize]) -> Result<Vec<i8>> {
    labels
        .iter()
        .map(|&l| match l {
            0 => Ok(-1),
            1 => Ok(1),
            _ => Err(Error::Label(format!("binary labels must be 0 or 1, got {l}"))),
        })
        .collect()
}

pub fn cmd_svm_train(data: &Dataset, params: &SvmParams, out: &Path) -> Result<SvmModel> {
    ensure_dir(out)?;
    let model = svm_train(&data.features, &binary_labels(&data.labels)?, params)?;
    save_svm(&model, out.join("model.svm"))?;
    Ok(model)
}

/// Scores `data` and writes `scores.csv` plus a report with accuracy and AUROC.
pub fn cmd_svm_eval(model: &SvmModel, data: &Dataset, out: &Path) -> Result<Report> {
    ensure_dir(out)?;
    let truth = binary_labels(&data.labels)?;
    let scores = svm_scores(model, &data.features)?;
    write_sample_scores(&out.join("scores.csv"), &scores, &data.labels)?;
    let pred: Vec<i8> = scores.iter().map(|&s| label_of(s)).collect();
    let mut report = Report::new();
    report
        .text("n", data.len())
        .float("accuracy", accuracy(&pred, &truth)?)
        .float("auroc", auroc(&scores, &truth)?);
    report.save(out.join("report.txt"))?;
    Ok(report)
}

fn write_sample_scores(path: &Path, scores: &[f64], labels: &[usize]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "row,label,score")?;
        for (i, (s, l)) in scores.iter().zip(labels).enumerate() {
            writeln!(w, "{i},{l},{}", format_g17(*s))?;
        }
        Ok(())
    })
}

/// Result of partitioning one split.
#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub partition: Partition,
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    /// `mapping[cluster]` is the class that cluster was scored as.
    pub mapping: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct FiedlerOutcome {
    pub layer: Option<usize>,
    pub k_requested: usize,
    pub k_effective: usize,
    pub selected: Vec<usize>,
    pub train: SplitOutcome,
    pub eval: SplitOutcome,
    pub report: Report,
}

/// Chi-square selection fitted on the training bits, then Hamming RDM,
/// similarity graph and Fiedler partition for each split.
///
/// `k` above the layer width is clamped to the width; the report carries
/// both values. Eval labels are read only when scoring the eval partition.
pub fn fiedler_pipeline(
    train_bits: &BitMatrix,
    train_labels: &[usize],
    eval_bits: &BitMatrix,
    eval_labels: &[usize],
    k: usize,
    layer: Option<usize>,
    out: &Path,
) -> Result<FiedlerOutcome> {
    if k == 0 {
        return Err(Error::Param("k must be positive".into()));
    }
    let mut classes = train_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::Label(format!(
            "the Fiedler pipeline needs exactly two classes, got {}",
            classes.len()
        )));
    }
    if train_bits.n_bits() != eval_bits.n_bits() {
        return Err(Error::Shape(format!(
            "train has {} bits per row, eval has {}",
            train_bits.n_bits(),
            eval_bits.n_bits()
        )));
    }
    ensure_dir(out)?;
    let k_effective = k.min(train_bits.n_bits());
    let scores = chi2_scores(train_bits, train_labels)?;
    let selected = top_k(&scores, k_effective)?;
    write_file(out.join("selected.txt"), |w| write_index_list(&selected, w))?;
    write_file(out.join("scores.csv"), |w| write_scores_csv(&scores, w))?;

    let partition_split = |bits: &BitMatrix, name: &str| -> Result<Partition> {
        let rdm = rdm_hamming(&select_columns(bits, &selected)?, layer)?;
        save_dmx(rdm.values(), out.join(format!("rdm_{name}.dmx")))?;
        write_file(out.join(format!("rdm_{name}.pgm")), |w| write_pgm(rdm.values(), w))?;
        let part = fiedler_partition(&laplacian(&adjacency_from_dissim(&rdm)?)?)
            .map_err(|e| e.with_context(format!("{name} split")))?;
        write_file(out.join(format!("partition_{name}.csv")), |w| write_partition_csv(&part, w))?;
        Ok(part)
    };
    let train_part = partition_split(train_bits, "train")?;
    let eval_part = partition_split(eval_bits, "eval")?;

    let score = |part: Partition, labels: &[usize]| -> Result<SplitOutcome> {
        let acc = partition_accuracy(&part, labels)?;
        Ok(SplitOutcome {
            partition: part,
            accuracy: acc.overall,
            per_class: acc.per_class,
            mapping: acc.mapping,
        })
    };
    let train = score(train_part, train_labels)?;
    let eval = score(eval_part, eval_labels)?;

    let mut report = Report::new();
    if let Some(l) = layer {
        report.text("layer", l);
    }
    report
        .text("n_bits", train_bits.n_bits())
        .text("k_requested", k)
        .text("k_effective", k_effective)
        .text("n_train", train_bits.n_rows())
        .text("n_eval", eval_bits.n_rows());
    for (name, s) in [("train", &train), ("eval", &eval)] {
        report
            .float(format!("{name}_accuracy"), s.accuracy)
            .text(
                format!("{name}_per_class_accuracy"),
                join(&s.per_class.iter().map(|&v| format_g17(v)).collect::<Vec<_>>()),
            )
            .text(format!("{name}_mapping"), join(&s.mapping))
            .float(format!("{name}_fiedler_value"), s.partition.eigenvalues[0])
            .text(format!("{name}_cluster_sizes"), join(&s.partition.cluster_sizes()));
    }
    report.save(out.join("report.txt"))?;
    Ok(FiedlerOutcome {
        layer,
        k_requested: k,
        k_effective,
        selected,
        train,
        eval,
        report,
    })
}

/// Runs [`fiedler_pipeline`] on each requested layer. A single layer
/// writes straight into `out`; several go to `layer_{i}/` with a
/// `summary.txt` listing per-layer accuracies.
pub fn cmd_fiedler_pipeline(
    net: &MlpNetwork,
    train: &Dataset,
    eval: &Dataset,
    layers: LayerSel,
    k: usize,
    out: &Path,
) -> Result<Vec<FiedlerOutcome>> {
    let layers = layers.resolve(net)?;
    let multi = layers.len() > 1;
    let mut outcomes = Vec::new();
    for &layer in &layers {
        let dir = if multi { out.join(format!("layer_{layer}")) } else { out.to_path_buf() };
        let run = || -> Result<FiedlerOutcome> {
            let tb = extract_bits(net, &train.features, layer)?;
            let eb = extract_bits(net, &eval.features, layer)?;
            fiedler_pipeline(&tb, &train.labels, &eb, &eval.labels, k, Some(layer), &dir)
        };
        outcomes.push(run().map_err(|e| e.with_context(format!("layer {layer}")))?);
    }
    if multi {
        let mut summary = Report::new();
        summary.text("layers", join(&layers)).text("k_requested", k);
        for o in &outcomes {
            let l = o.layer.unwrap_or(0);
            summary
                .text(format!("layer_{l}_k_effective"), o.k_effective)
                .float(format!("layer_{l}_train_accuracy"), o.train.accuracy)
                .float(format!("layer_{l}_eval_accuracy"), o.eval.accuracy);
        }
        summary.save(out.join("summary.txt"))?;
    }
    Ok(outcomes)
}

#[derive(Clone, Debug)]
pub struct AdvOptions {
    pub attack: AttackConfig,
    /// 1-based hidden layer; `None` means the last one.
    pub layer: Option<usize>,
    pub k: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub svm: SvmParams,
    /// Also compare against the real-valued activations of the same layer.
    pub latent: bool,
}

impl Default for AdvOptions {
    fn default() -> Self {
        AdvOptions {
            attack: AttackConfig::fgsm(0.5),
            layer: None,
            k: 64,
            train_fraction: 0.8,
            split_seed: 7,
            svm: SvmParams::default(),
            latent: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LatentOutcome {
    pub accuracy: f64,
    pub auroc: f64,
    /// Pearson correlation of the bit RDM and the cosine RDM over the test
    /// rows; `None` when a test row has an all-zero embedding.
    pub pearson: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AdvOutcome {
    pub layer: usize,
    pub k_requested: usize,
    pub k_effective: usize,
    pub selected_org: Vec<usize>,
    pub selected_adv: Vec<usize>,
    pub fooled_fraction: f64,
    pub accuracy: f64,
    pub auroc: f64,
    pub model: SvmModel,
    pub latent: Option<LatentOutcome>,
    pub report: Report,
}

/// Adversarial-input detection from ReLU bit patterns.
///
/// 1. split the samples into train/test index sets
/// 2. attack every sample, read the bits of the chosen layer for the
///    original and adversarial inputs
/// 3. choose `k` columns per set by chi-square against the class labels
///    of its training split
/// 4. each row's features are `[bits[S_org], bits[S_adv]]`
/// 5. originals are labelled 0, adversarial rows 1; train a linear SVM on
///    the training rows of both and score the test rows
///
/// An original and its adversarial counterpart always fall in the same split.
pub fn adversarial_pipeline(net: &MlpNetwork, data: &Dataset, opts: &AdvOptions, out: &Path) -> Result<AdvOutcome> {
    let layer = opts.layer.unwrap_or(net.n_hidden());
    LayerSel::One(layer).resolve(net)?;
    if opts.k == 0 {
        return Err(Error::Param("k must be positive".into()));
    }
    ensure_dir(out)?;
    let (train_idx, test_idx) = split_indices(data.len(), opts.train_fraction, opts.split_seed)?;

    let adv_inputs = generate_adversarial(net, data, &opts.attack)?;
    let fooled = adv_inputs
        .row_iter()
        .zip(&data.labels)
        .map(|(x, &y)| net.predict(x).map(|p| p != y))
        .collect::<Result<Vec<_>>>()?;
    let fooled_fraction = fooled.iter().filter(|&&f| f).count() as f64 / data.len() as f64;
    let org_acts = hidden_activations(net, &data.features, layer)?;
    let adv_acts = hidden_activations(net, &adv_inputs, layer)?;
    let org_bits = BitMatrix::from_activations(&org_acts)?;
    let adv_bits = BitMatrix::from_activations(&adv_acts)?;

    let n_bits = org_bits.n_bits();
    let k_effective = opts.k.min(n_bits);
    let train_classes: Vec<usize> = train_idx.iter().map(|&i| data.labels[i]).collect();
    let select = |bits: &BitMatrix| -> Result<Vec<usize>> {
        top_k(&chi2_scores(&bits.select_rows(&train_idx), &train_classes)?, k_effective)
    };
    let selected_org = select(&org_bits)?;
    let selected_adv = select(&adv_bits)?;
    write_file(out.join("selected_org.txt"), |w| write_index_list(&selected_org, w))?;
    write_file(out.join("selected_adv.txt"), |w| write_index_list(&selected_adv, w))?;

    let features = |bits: &BitMatrix, idx: &[usize]| -> Result<BitMatrix> {
        let rows = bits.select_rows(idx);
        select_columns(&rows, &selected_org)?.hstack(&select_columns(&rows, &selected_adv)?)
    };
    let stacked = |idx: &[usize]| -> Result<BitMatrix> { features(&org_bits, idx)?.vstack(&features(&adv_bits, idx)?) };
    let detector_labels = |n: usize| -> Vec<usize> { (0..2 * n).map(|i| usize::from(i >= n)).collect() };

    let train_bits = stacked(&train_idx)?;
    let test_bits = stacked(&test_idx)?;
    let train_set = Dataset::new(train_bits.to_real(), detector_labels(train_idx.len()))?;
    let test_set = Dataset::new(test_bits.to_real(), detector_labels(test_idx.len()))?;
    train_set.save(out.join("detector_train.csv"))?;
    test_set.save(out.join("detector_test.csv"))?;

    let y_train = binary_labels(&train_set.labels)?;
    let y_test = binary_labels(&test_set.labels)?;
    let model = svm_train(&train_set.features, &y_train, &opts.svm)?;
    save_svm(&model, out.join("detector.svm"))?;
    let scores = svm_scores(&model, &test_set.features)?;
    write_sample_scores(&out.join("test_scores.csv"), &scores, &test_set.labels)?;
    let pred: Vec<i8> = scores.iter().map(|&s| label_of(s)).collect();
    let acc = accuracy(&pred, &y_test)?;
    let auc = auroc(&scores, &y_test)?;

    let latent = if opts.latent {
        let embed = |idx: &[usize]| -> Result<Matrix> { org_acts.select_rows(idx).vstack(&adv_acts.select_rows(idx)) };
        let latent_train = embed(&train_idx)?;
        let latent_test = embed(&test_idx)?;
        let latent_model = svm_train(&latent_train, &y_train, &opts.svm)?;
        let latent_scores = svm_scores(&latent_model, &latent_test)?;
        let latent_pred: Vec<i8> = latent_scores.iter().map(|&s| label_of(s)).collect();
        let bit_rdm = rdm_hamming(&test_bits, Some(layer))?;
        save_dmx(bit_rdm.values(), out.join("rdm_bits.dmx"))?;
        write_file(out.join("rdm_bits.pgm"), |w| write_pgm(bit_rdm.values(), w))?;
        let pearson = match rdm_cosine(&latent_test, Some(layer)) {
            Ok(cos_rdm) => {
                save_dmx(cos_rdm.values(), out.join("rdm_latent.dmx"))?;
                write_file(out.join("rdm_latent.pgm"), |w| write_pgm(cos_rdm.values(), w))?;
                Some(pearson_rdm(&bit_rdm, &cos_rdm)?)
            }
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Some(LatentOutcome {
            accuracy: accuracy(&latent_pred, &y_test)?,
            auroc: auroc(&latent_scores, &y_test)?,
            pearson,
        })
    } else {
        None
    };

    let mut report = Report::new();
    report
        .text(
            "attack",
            match opts.attack.kind {
                AttackKind::Fgsm => "fgsm",
                AttackKind::Pgd => "pgd",
            },
        )
        .float("epsilon", opts.attack.epsilon);
    if opts.attack.kind == AttackKind::Pgd {
        report
            .text("pgd_steps", opts.attack.pgd_steps)
            .float("pgd_step_size", opts.attack.pgd_step_size);
    }
    report
        .text("layer", layer)
        .text("n_bits", n_bits)
        .text("k_requested", opts.k)
        .text("k_effective", k_effective)
        .text("n_samples", data.len())
        .text("n_train_rows", train_set.len())
        .text("n_test_rows", test_set.len())
        .float("fooled_fraction", fooled_fraction)
        .float("svm_c", opts.svm.c)
        .text("svm_iterations", model.meta.iterations)
        .text("svm_converged", model.meta.converged)
        .float("test_accuracy", acc)
        .float("test_auroc", auc);
    if let Some(l) = &latent {
        report
            .float("latent_test_accuracy", l.accuracy)
            .float("latent_test_auroc", l.auroc);
        match l.pearson {
            Some(p) => report.float("pearson_bits_latent", p),
            None => report.text("pearson_bits_latent", "undefined (all-zero embedding row)"),
        };
    }
    report.save(out.join("report.txt"))?;

    Ok(AdvOutcome {
        layer,
        k_requested: opts.k,
        k_effective,
        selected_org,
        selected_adv,
        fooled_fraction,
        accuracy: acc,
        auroc: auc,
        model,
        latent,
        report,
    })
}
