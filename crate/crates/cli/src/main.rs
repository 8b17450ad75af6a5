use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relubits::data::{make_blobs, BlobSpec, Dataset};
use relubits::formats::{load_bvm, load_dmx, load_mlp, load_svm, read_file, read_index_list, write_file, write_index_list};
use relubits::net::TrainConfig;
use relubits::pipeline::{self, AdvOptions, LayerSel};
use relubits::rdm::{rdm_cosine, rdm_hamming, DissimMatrix};
use relubits::{AttackConfig, Error, Metric, Result, SvmParams};

#[derive(Parser)]
#[command(name = "relubits", version, about = "ReLU bit-pattern analysis: RDMs, Fiedler partitions, adversarial detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded Gaussian blobs as train.csv and eval.csv
    MakeBlobs(MakeBlobsArgs),
    /// Train an MLP with mini-batch SGD
    Train(TrainArgs),
    /// Write the ReLU bit patterns of one or all hidden layers
    ExtractBits(ExtractArgs),
    /// Generate adversarial counterparts of a dataset
    Attack(AttackArgs),
    /// Dissimilarity matrix of bit vectors or real embeddings
    Rdm(RdmArgs),
    /// Spectral partition of a dissimilarity matrix's similarity graph
    Fiedler(FiedlerArgs),
    /// Chi-square selection of the k most class-dependent bits
    SelectFeatures(SelectArgs),
    /// Train a linear SVM on a CSV with 0/1 labels
    SvmTrain(SvmTrainArgs),
    /// Score a CSV with a trained SVM
    SvmEval(SvmEvalArgs),
    /// Per-layer Fiedler class separation on train and eval sets
    PipelineFiedler(PipelineFiedlerArgs),
    /// Adversarial-input detection from final-layer bits
    PipelineAdv(PipelineAdvArgs),
}

#[derive(Args)]
struct MakeBlobsArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 400)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_eval: usize,
    /// Distance between class means in units of sigma
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated layer widths, input first
    #[arg(long, value_delimiter = ',', default_value = "16,64,64,32,2")]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Hidden layer index (1-based) or "all"
    #[arg(long, default_value = "all")]
    layer: LayerSel,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    Fgsm,
    Pgd,
}

#[derive(Args)]
struct AttackOpts {
    #[arg(long, value_enum, default_value_t = AttackArg::Fgsm)]
    attack: AttackArg,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// PGD iterations
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// PGD step size
    #[arg(long, default_value_t = 0.1)]
    step_size: f64,
    #[arg(long, allow_hyphen_values = true)]
    clip_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    clip_max: Option<f64>,
}

impl AttackOpts {
    fn config(&self) -> AttackConfig {
        let cfg = match self.attack {
            AttackArg::Fgsm => AttackConfig::fgsm(self.epsilon),
            AttackArg::Pgd => AttackConfig::pgd(self.epsilon, self.steps, self.step_size),
        };
        cfg.with_clip(
            self.clip_min.unwrap_or(f64::NEG_INFINITY),
            self.clip_max.unwrap_or(f64::INFINITY),
        )
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    attack: AttackOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Hamming,
    Cosine,
}

#[derive(Args)]
struct RdmArgs {
    #[arg(long, value_enum, default_value_t = MetricArg::Hamming)]
    metric: MetricArg,
    /// BVM1 bit matrix (hamming)
    #[arg(long)]
    bits: Option<PathBuf>,
    /// CSV whose feature columns are the embeddings (cosine)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FiedlerArgs {
    /// DMX1 dissimilarity matrix with values in [0, 1]
    #[arg(long)]
    rdm: PathBuf,
    /// Number of eigenvectors whose sign patterns define clusters
    #[arg(long, default_value_t = 1)]
    levels: usize,
    /// One label per line, to score the partition
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    bits: PathBuf,
    /// One label per line
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SvmOpts {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

#[derive(Args)]
struct SvmTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    svm: SvmOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SvmEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineFiedlerArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    /// Hidden layer index (1-based) or "all"
    #[arg(long, default_value = "all")]
    layer: LayerSel,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineAdvArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Sample CSVs; several files are concatenated in order
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    #[command(flatten)]
    attack: AttackOpts,
    /// Hidden layer index (1-based); defaults to the last one
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value_t = 64)]
    k: usize,
    /// Seed of the train/test split and the SVM shuffle
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[command(flatten)]
    svm: SvmOpts,
    /// Also fit an SVM on the real-valued activations and correlate the RDMs
    #[arg(long)]
    latent: bool,
    #[arg(long)]
    out: PathBuf,
}

fn print_report(report: &pipeline::Report) {
    for (k, v) in report.entries() {
        println!("{k}: {v}");
    }
}

fn load_labels(path: &Path) -> Result<Vec<usize>> {
    read_file(path, read_index_list)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::MakeBlobs(a) => {
            let spec = BlobSpec {
                n_classes: a.classes,
                dim: a.dim,
                n_samples: a.n_train + a.n_eval,
                separation: a.separation,
                sigma: a.sigma,
                seed: a.seed,
            };
            if a.n_train == 0 || a.n_eval == 0 {
                return Err(Error::Param("train and eval sets must be non-empty".into()));
            }
            let all = make_blobs(&spec)?;
            std::fs::create_dir_all(&a.out)?;
            let idx: Vec<usize> = (0..all.len()).collect();
            all.subset(&idx[..a.n_train]).save(a.out.join("train.csv"))?;
            all.subset(&idx[a.n_train..]).save(a.out.join("eval.csv"))?;
            println!("wrote {} train and {} eval rows to {}", a.n_train, a.n_eval, a.out.display());
        }
        Command::Train(a) => {
            let data = Dataset::load(&a.data)?;
            let config = TrainConfig {
                layer_dims: a.layers,
                seed: a.seed,
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch_size,
            };
            let summary = pipeline::cmd_train(&data, &config, &a.out)?;
            print_report(&summary.report);
        }
        Command::ExtractBits(a) => {
            let net = load_mlp(&a.weights)?;
            let data = Dataset::load(&a.data)?;
            let paths = pipeline::cmd_extract_bits(&net, &data.features, a.layer, &a.out)?;
            write_file(a.out.join("labels.txt"), |w| write_index_list(&data.labels, w))?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Attack(a) => {
            let net = load_mlp(&a.weights)?;
            let data = Dataset::load(&a.data)?;
            let fooled = pipeline::cmd_attack(&net, &data, &a.attack.config(), &a.out)?;
            println!("fooled_fraction: {}", relubits::formats::format_g17(fooled));
        }
        Command::Rdm(a) => {
            let rdm = match (a.metric, a.bits, a.data) {
                (MetricArg::Hamming, Some(bits), None) => rdm_hamming(&load_bvm(bits)?, a.layer)?,
                (MetricArg::Cosine, None, Some(data)) => rdm_cosine(&Dataset::load(data)?.features, a.layer)?,
                (MetricArg::Hamming, _, _) => return Err(Error::Param("--metric hamming needs --bits only".into())),
                (MetricArg::Cosine, _, _) => return Err(Error::Param("--metric cosine needs --data only".into())),
            };
            pipeline::cmd_rdm(&rdm, &a.out)?;
            println!("n: {}", rdm.n());
        }
        Command::Fiedler(a) => {
            let rdm = DissimMatrix::new(load_dmx(&a.rdm)?, Metric::NormalizedHamming, None)?;
            let labels = a.labels.as_deref().map(load_labels).transpose()?;
            let report = pipeline::cmd_fiedler(&rdm, a.levels, labels.as_deref(), &a.out)?;
            print_report(&report);
        }
        Command::SelectFeatures(a) => {
            let selected = pipeline::cmd_select_features(&load_bvm(&a.bits)?, &load_labels(&a.labels)?, a.k, &a.out)?;
            println!("selected: {}", selected.len());
        }
        Command::SvmTrain(a) => {
            let params = SvmParams {
                c: a.svm.c,
                tol: a.svm.tol,
                max_iter: a.svm.max_iter,
                seed: a.seed,
            };
            let model = pipeline::cmd_svm_train(&Dataset::load(&a.data)?, &params, &a.out)?;
            println!("iterations: {}", model.meta.iterations);
            println!("converged: {}", model.meta.converged);
        }
        Command::SvmEval(a) => {
            let report = pipeline::cmd_svm_eval(&load_svm(&a.model)?, &Dataset::load(&a.data)?, &a.out)?;
            print_report(&report);
        }
        Command::PipelineFiedler(a) => {
            let net = load_mlp(&a.weights)?;
            let train = Dataset::load(&a.train)?;
            let eval = Dataset::load(&a.eval)?;
            for o in pipeline::cmd_fiedler_pipeline(&net, &train, &eval, a.layer, a.k, &a.out)? {
                println!(
                    "layer {}: train_accuracy {} eval_accuracy {} k_effective {}",
                    o.layer.unwrap_or(0),
                    relubits::formats::format_g17(o.train.accuracy),
                    relubits::formats::format_g17(o.eval.accuracy),
                    o.k_effective
                );
            }
        }
        Command::PipelineAdv(a) => {
            let net = load_mlp(&a.weights)?;
            let mut data = Dataset::load(&a.data[0])?;
            for p in &a.data[1..] {
                let more = Dataset::load(p)?;
                let mut labels = data.labels;
                labels.extend(more.labels);
                data = Dataset::new(data.features.vstack(&more.features)?, labels)?;
            }
            let opts = AdvOptions {
                attack: a.attack.config(),
                layer: a.layer,
                k: a.k,
                train_fraction: a.train_fraction,
                split_seed: a.seed,
                svm: SvmParams {
                    c: a.svm.c,
                    tol: a.svm.tol,
                    max_iter: a.svm.max_iter,
                    seed: a.seed,
                },
                latent: a.latent,
            };
            let outcome = pipeline::adversarial_pipeline(&net, &data, &opts, &a.out)?;
            print_report(&outcome.report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
