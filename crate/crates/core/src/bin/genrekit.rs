use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genrekit::eval::{render_text, FacetClassifier};
use genrekit::pipeline::{facet_labels, labeled_for, run_experiments, select_cues, train_classifier};
use genrekit::{
    load_corpus, split_stratified, synth_corpus, Classifier, Corpus, CueRegistry, Error, Facet,
    FeatureMatrix, Method, Result, SynthSpec, TrainOptions,
};

/// Classify texts along genre facets from surface cues.
#[derive(Parser)]
#[command(name = "genrekit", version)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cue registry file, or "default" for the built-in 55 cues.
    #[arg(long, global = true, default_value = "default")]
    registry: String,
    /// Corpus directory holding labels.tsv and texts/.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the feature matrix of a corpus.
    Extract {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model for one facet.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a registry holding only the cues a selecting method keeps.
    Select {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign a level to every document of the corpus.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a stratified split and score the held-out documents.
    Evaluate {
        #[arg(long = "facet", required = true)]
        facets: Vec<Facet>,
        #[arg(long = "method", required = true)]
        methods: Vec<Method>,
        /// Evaluation documents per label cell.
        #[arg(long, default_value_t = 1)]
        holdout: usize,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        /// Text report path; standard output when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Directory receiving one model file per facet and method.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    facet: Facet,
    #[arg(long)]
    method: Method,
    /// Train only on the training side of a stratified split with this many
    /// evaluation documents per label cell.
    #[arg(long)]
    holdout: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Cli {
    fn registry(&self) -> Result<CueRegistry> {
        if self.registry == "default" {
            Ok(CueRegistry::default_registry())
        } else {
            Ok(CueRegistry::load(Path::new(&self.registry))?)
        }
    }

    fn corpus(&self) -> Result<Corpus> {
        let root = self
            .corpus
            .as_deref()
            .ok_or_else(|| Error::Invalid("--corpus is required for this command".into()))?;
        Ok(load_corpus(root)?)
    }

    fn options(&self, epochs: usize) -> TrainOptions {
        TrainOptions {
            seed: self.seed,
            epochs,
            ..TrainOptions::default()
        }
    }

    fn training_data(&self, args: &TrainArgs) -> Result<(FeatureMatrix, Vec<usize>)> {
        let mut corpus = self.corpus()?;
        if let Some(per_cell) = args.holdout {
            corpus = split_stratified(&corpus, per_cell, self.seed)?.0;
        }
        let corpus = labeled_for(&corpus, args.facet);
        if corpus.is_empty() {
            return Err(Error::Invalid(format!("no documents labeled for {}", args.facet)));
        }
        let labels = facet_labels(&corpus, args.facet)?;
        Ok((FeatureMatrix::extract(&corpus, &self.registry()?), labels))
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract { out } => {
            let registry = cli.registry()?;
            let features = FeatureMatrix::extract(&cli.corpus()?, &registry);
            write(out, &features.to_tsv())?;
            println!("{} cues, {} documents", registry.len(), features.n_rows());
        }
        Command::Train { train, out } => {
            let (features, labels) = cli.training_data(train)?;
            let model = train_classifier(&features, &labels, train.facet, train.method, &cli.options(train.epochs))?;
            write(out, &model.to_json())?;
        }
        Command::Select { train, out } => {
            if !train.method.is_selecting() {
                return Err(Error::Invalid(format!(
                    "method {} does not select cues (use lr-selected or 2lp-selected)",
                    train.method
                )));
            }
            let (features, labels) = cli.training_data(train)?;
            let selection = select_cues(&features, &labels, train.facet, train.method, &cli.options(train.epochs))?;
            let kept = selection.union(&features.cue_names);
            if kept.is_empty() {
                return Err(Error::Invalid("selection kept no cues".into()));
            }
            write(out, &cli.registry()?.restrict(&kept)?.to_tsv())?;
            println!("kept {} of {} cues", kept.len(), features.cue_names.len());
        }
        Command::Classify { model, out } => {
            let model = Classifier::from_json(&read(model)?)?;
            let corpus = cli.corpus()?;
            let features = FeatureMatrix::extract(&corpus, &cli.registry()?);
            let predicted = model.classify(&features)?;
            let mut text = String::new();
            for (id, level) in features.doc_ids.iter().zip(predicted) {
                text.push_str(&format!("{id}\t{}\n", model.levels()[level]));
            }
            match out {
                Some(path) => write(path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Evaluate {
            facets,
            methods,
            holdout,
            epochs,
            report,
            json,
            models,
        } => {
            let experiments = run_experiments(
                &cli.corpus()?,
                &cli.registry()?,
                facets,
                methods,
                *holdout,
                &cli.options(*epochs),
            )?;
            let reports: Vec<_> = experiments.iter().map(|e| e.report.clone()).collect();
            let text = render_text(&reports);
            match report {
                Some(path) => write(path, &text)?,
                None => print!("{text}"),
            }
            if let Some(path) = json {
                let body = serde_json::to_string_pretty(&reports).expect("reports serialize");
                write(path, &format!("{body}\n"))?;
            }
            if let Some(dir) = models {
                for e in &experiments {
                    write(&dir.join(format!("{}-{}.json", e.facet, e.method)), &e.model.to_json())?;
                }
            }
        }
        Command::Synth { spec, out } => {
            let spec: SynthSpec =
                serde_json::from_str(&read(spec)?).map_err(|e| Error::Invalid(format!("synth spec: {e}")))?;
            let corpus = synth_corpus(&spec, cli.seed)?;
            corpus.save(out)?;
            println!("{} documents", corpus.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("genrekit: {message}");
            ExitCode::from(2)
        }
    }
}
