//! `stacklstm`: synthesize data, train, evaluate and gradient-check the
//! two-stage terrain classifier.

mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use stacklstm::data::{
    ingest_csv, ingest_csv_mapped, synth_generate, write_csv, HeaderMap, SequenceSample, SynthSpec, TerrainLabel,
};
use stacklstm::gradcheck::{run_gradcheck, run_gradcheck_with, GradCheckConfig};
use stacklstm::metrics::{emit_history, evaluate, write_confusion_csv, Evaluation};
use stacklstm::pipeline::{load_model, run_training, save_model, TrainingRun, FORMAT_VERSION};

use config::{CliConfig, ResolvedConfig, TrainFlags};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Contract(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Contract(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Contract(m) => f.write_str(m),
        }
    }
}

impl From<stacklstm::Error> for CliError {
    fn from(e: stacklstm::Error) -> Self {
        match e {
            stacklstm::Error::Contract(_) => CliError::Contract(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "stacklstm", version, about = "Semi-supervised stacked-LSTM terrain classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a deterministic synthetic gait dataset as CSV.
    Synth(SynthArgs),
    /// Train both stages and write the model, histories and manifest.
    Train(TrainFlags),
    /// Score a model on a labeled dataset.
    Eval(EvalArgs),
    /// Compare BPTT gradients with central finite differences on a toy net.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML generator spec (keys n_sequences, t_min, t_max, seed, class_count, dim, noise_scale).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of sequences.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Confusion-matrix CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    header_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    /// Frame dimension.
    #[arg(long, default_value_t = 4)]
    input: usize,
    /// Sequence length.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Perturb one analytic gradient entry; the check must then fail.
    #[arg(long, hide = true)]
    corrupt: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(f) => cmd_train(&f),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = match &a.config {
        Some(p) => SynthSpec::from_toml_str(&fs::read_to_string(p).map_err(io_err(p))?)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.n {
        spec.n_sequences = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.t_min {
        spec.t_min = v;
    }
    if let Some(v) = a.t_max {
        spec.t_max = v;
    }
    if let Some(v) = a.classes {
        spec.class_count = v;
    }
    if let Some(v) = a.dim {
        spec.dim = v;
    }
    if let Some(v) = a.noise_scale {
        spec.noise_scale = v;
    }
    let samples = synth_generate(&spec)?;
    let mut outputs = Outputs::default();
    outputs.write(&a.out, |w| Ok(write_csv(w, &samples)?))?;
    outputs.keep();
    println!("wrote {} sequences to {}", samples.len(), a.out.display());
    Ok(())
}

fn read_dataset(path: &Path, header_map: Option<&Path>) -> Result<(Vec<u8>, Vec<SequenceSample>), CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let samples = match header_map {
        Some(m) => {
            let map = HeaderMap::parse(&fs::read_to_string(m).map_err(io_err(m))?)?;
            ingest_csv_mapped(bytes.as_slice(), &map)
        }
        None => ingest_csv(bytes.as_slice()),
    }
    .map_err(|e| CliError::from(e).prefixed(path))?;
    Ok((bytes, samples))
}

impl CliError {
    fn prefixed(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Contract(m) => CliError::Contract(format!("{p}: {m}")),
            u => u,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Manifest {
    tool: String,
    model_format: u32,
    dataset: String,
    dataset_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    header_map_sha256: Option<String>,
    sequences: usize,
    config: ResolvedConfig,
    split: SplitSizes,
    results: Results,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct SplitSizes {
    predictor: usize,
    classifier_train: usize,
    classifier_val: usize,
    test: usize,
    test_held_out: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Results {
    stage1_epochs: usize,
    stage1_best_val_loss: f64,
    stage2_epochs: usize,
    stage2_best_val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kfold_accuracies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kfold_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kfold_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
}

fn best_val(h: &[stacklstm::pipeline::EpochRecord]) -> f64 {
    h.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min)
}

fn cmd_train(flags: &TrainFlags) -> Result<(), CliError> {
    let c = CliConfig::resolve(flags)?;
    let data = c.data.clone().ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("stacklstm-run"));
    let cfg = c.train_config()?;
    if cfg.epochs == 0 {
        return Err(CliError::Usage("--epochs must be at least 1".into()));
    }
    let (bytes, samples) = read_dataset(&data, c.header_map.as_deref())?;
    let header_map_sha256 = match &c.header_map {
        Some(m) => Some(sha256_hex(&fs::read(m).map_err(io_err(m))?)),
        None => None,
    };
    let run = run_training(&samples, &cfg)?;

    let manifest = Manifest {
        tool: format!("stacklstm {}", env!("CARGO_PKG_VERSION")),
        model_format: FORMAT_VERSION,
        dataset: data.display().to_string(),
        dataset_sha256: sha256_hex(&bytes),
        header_map_sha256,
        sequences: samples.len(),
        config: ResolvedConfig::from(&cfg),
        split: SplitSizes {
            predictor: run.split.predictor_set.len(),
            classifier_train: run.split.classifier_train_set.len(),
            classifier_val: run.split.classifier_val_set.len(),
            test: run.split.test_set.len(),
            test_held_out: run.split.test_held_out,
        },
        results: Results {
            stage1_epochs: run.stage1_history.len(),
            stage1_best_val_loss: best_val(&run.stage1_history),
            stage2_epochs: run.stage2_history.len(),
            stage2_best_val_loss: best_val(&run.stage2_history),
            kfold_accuracies: run.kfold.as_ref().map(|k| k.fold_accuracies.clone()),
            kfold_mean: run.kfold.as_ref().map(|k| k.mean),
            kfold_std: run.kfold.as_ref().map(|k| k.std),
            test_accuracy: run.test.as_ref().map(|e| e.accuracy),
        },
    };
    let manifest_text = toml::to_string(&manifest).map_err(|e| CliError::Data(e.to_string()))?;

    let mut outputs = Outputs::default();
    outputs.dir(&out)?;
    outputs.file(&out.join("model.txt"), |p| Ok(save_model(&run.model, p)?))?;
    outputs.file(&out.join("history_stage1.csv"), |p| Ok(emit_history(&run.stage1_history, p)?))?;
    outputs.file(&out.join("history_stage2.csv"), |p| Ok(emit_history(&run.stage2_history, p)?))?;
    outputs.write(&out.join("manifest.toml"), |w| Ok(w.write_all(manifest_text.as_bytes())?))?;
    outputs.keep();

    print_training_summary(&run);
    println!("outputs in {}", out.display());
    Ok(())
}

fn print_training_summary(run: &TrainingRun) {
    println!(
        "stage 1: {} epochs, best validation loss {:.6}",
        run.stage1_history.len(),
        best_val(&run.stage1_history)
    );
    if let Some(k) = &run.kfold {
        println!(
            "stage 2 {}-fold validation accuracy: {:.4} ± {:.4}",
            k.fold_accuracies.len(),
            k.mean,
            k.std
        );
    }
    println!(
        "stage 2: {} epochs, best validation loss {:.6}",
        run.stage2_history.len(),
        best_val(&run.stage2_history)
    );
    match &run.test {
        Some(e) => {
            println!("held-out test ({} sequences):", run.split.test_set.len());
            print_evaluation(e);
        }
        None => println!("held-out test: skipped, unlabeled sequences"),
    }
}

fn print_evaluation(e: &Evaluation) {
    let cm = &e.confusion;
    println!("accuracy: {:.4} ({}/{})", e.accuracy, cm.trace(), cm.total());
    println!("step accuracy: {:.4}", e.step_accuracy);
    println!("confusion (rows true, columns predicted):");
    print!("{:>10}", "");
    for l in TerrainLabel::ALL {
        print!("{:>10}", l.name());
    }
    println!();
    for t in TerrainLabel::ALL {
        print!("{:>10}", t.name());
        for p in TerrainLabel::ALL {
            print!("{:>10}", cm.get(t.code(), p.code()));
        }
        println!();
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&a.model).map_err(|e| CliError::from(e).prefixed(&a.model))?;
    let (_, samples) = read_dataset(&a.data, a.header_map.as_deref())?;
    let normalized = model.normalize(&samples)?;
    let e = evaluate(&model, &normalized)?;
    println!("sequences: {}", samples.len());
    print_evaluation(&e);
    if let Some(out) = &a.out {
        let mut outputs = Outputs::default();
        outputs.write(out, |w| Ok(write_confusion_csv(w, &e.confusion)?))?;
        outputs.keep();
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let cfg = GradCheckConfig {
        hidden: a.hidden,
        input: a.input,
        steps: a.steps,
        classes: a.classes,
        seed: a.seed,
        ..GradCheckConfig::default()
    };
    if cfg.hidden == 0 || cfg.input == 0 || cfg.steps == 0 || cfg.classes < 2 {
        return Err(CliError::Usage("toy sizes must be positive and classes at least 2".into()));
    }
    let report = if a.corrupt {
        run_gradcheck_with(&cfg, |g| g.du.as_mut_slice()[0] += 1e-3)?
    } else {
        run_gradcheck(&cfg)?
    };
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Contract("gradient check failed".into()))
    }
}

/// Files created by a command; removed on drop unless [`Outputs::keep`] is called.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dir: Option<PathBuf>,
    kept: bool,
}

impl Outputs {
    fn dir(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            fs::create_dir_all(path).map_err(io_err(path))?;
            self.dir = Some(path.to_path_buf());
        }
        Ok(())
    }

    fn file(&mut self, path: &Path, f: impl FnOnce(&Path) -> Result<(), CliError>) -> Result<(), CliError> {
        self.files.push(path.to_path_buf());
        f(path)
    }

    fn write(&mut self, path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>) -> Result<(), CliError> {
        self.file(path, |p| {
            let mut w = BufWriter::new(File::create(p).map_err(io_err(p))?);
            f(&mut w)?;
            w.flush().map_err(io_err(p))
        })
    }

    fn keep(&mut self) {
        self.kept = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.kept {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(d) = &self.dir {
            let _ = fs::remove_dir(d);
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
