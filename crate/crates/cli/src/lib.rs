//! `vcd` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod gen;
pub mod manifest;
pub mod object;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Config, Method, Settings, Variant};
use error::{CliError, CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "vcd", version, about = "Visual concept detection and planar object detection")]
pub struct Cli {
    /// TOML file with default parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-image work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract descriptors for every manifest image.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; each image gets `<path>.ovcd` inside it.
        #[arg(long)]
        out: PathBuf,
        /// Write one concatenated file instead of one file per image.
        #[arg(long)]
        concat: bool,
        #[command(flatten)]
        extract: ExtractArgs,
    },
    /// Sample descriptors and build an ERT codebook.
    Codebook {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        ert: ErtArgs,
    },
    /// Encode manifest images as bag-of-words histograms. Two forests give a
    /// fused histogram.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "forest", required = true, num_args = 1)]
        forests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Read `<path>.ovcd` descriptor files from this directory instead of
        /// extracting (single forest only).
        #[arg(long)]
        features: Option<PathBuf>,
        /// DURF sampling scale used when extracting.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Train a HIK-SVM on histograms labelled by a manifest.
    Train {
        #[arg(long)]
        histograms: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store support vectors as references into the histogram file.
        #[arg(long)]
        reference: bool,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Score histograms and write a ranked list.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        histograms: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average precision of ranked lists against ground truth.
    Eval {
        #[arg(long = "ranked")]
        ranked: Vec<PathBuf>,
        #[arg(long = "truth")]
        truth: Vec<PathBuf>,
        /// Report the mean of these AP values instead.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["ranked", "truth"])]
        aps: Vec<f64>,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Time DURF against SIFT extraction.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Learn planar objects and find them in frames.
    #[command(subcommand)]
    Object(ObjectCommand),
    /// Write synthetic datasets.
    GenFixtures {
        #[arg(value_enum)]
        kind: gen::Kind,
        #[arg(long)]
        out: PathBuf,
        /// Images per class, benchmark images, or positive frames.
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ObjectCommand {
    /// Create a model directory from one image.
    Learn {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "object")]
        name: String,
    },
    /// Add another view to a model.
    AddView {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Detect the object in every image of a frame directory.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        matching: MatchArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExtractArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// DURF sampling scale `s`.
    #[arg(long)]
    pub scale: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ErtArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Descriptors sampled per image.
    #[arg(long)]
    pub per_image: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SvmArgs {
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Use one cost for both classes.
    #[arg(long)]
    pub no_class_weighting: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub inlier_px: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub max_checks: Option<usize>,
}

impl Cli {
    /// Parameters from the command's flags.
    fn flag_config(&self) -> Config {
        let mut c = Config {
            seed: self.seed,
            jobs: self.jobs,
            ..Config::default()
        };
        match &self.command {
            Command::Extract { extract, .. } => {
                c.method = extract.method;
                c.scale = extract.scale;
            }
            Command::Codebook { extract, ert, .. } => {
                c.method = extract.method;
                c.scale = extract.scale;
                c.n_trees = ert.n_trees;
                c.max_depth = ert.max_depth;
                c.per_image = ert.per_image;
            }
            Command::Encode { scale, .. } | Command::Bench { scale, .. } => c.scale = *scale,
            Command::Train { svm, .. } => {
                c.c = svm.c;
                c.tol = svm.tol;
                c.class_weighting = svm.no_class_weighting.then_some(false);
            }
            Command::Eval { variant, .. } => c.ap_variant = *variant,
            Command::Object(ObjectCommand::Detect { matching, .. }) => {
                c.ratio = matching.ratio;
                c.inlier_px = matching.inlier_px;
                c.min_inliers = matching.min_inliers;
                c.max_checks = matching.max_checks;
            }
            _ => {}
        }
        c
    }

    pub fn settings(&self) -> CliResult<Settings> {
        let file = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        file.overlay(&self.flag_config()).resolve()
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let s = cli.settings()?;
    match &cli.command {
        Command::Extract {
            manifest,
            out,
            concat,
            ..
        } => commands::extract(&s, manifest, out, *concat),
        Command::Codebook { manifest, out, .. } => commands::codebook(&s, manifest, out),
        Command::Encode {
            manifest,
            forests,
            out,
            features,
            ..
        } => commands::encode(&s, manifest, forests, out, features.as_deref()),
        Command::Train {
            histograms,
            manifest,
            out,
            reference,
            ..
        } => commands::train(&s, histograms, manifest, out, *reference),
        Command::Predict {
            model,
            histograms,
            out,
        } => commands::predict(model, histograms, out),
        Command::Eval {
            ranked, truth, aps, ..
        } => commands::eval(&s, ranked, truth, aps),
        Command::Bench {
            manifest,
            reps,
            json,
            ..
        } => commands::bench(&s, manifest, *reps, json.as_deref()),
        Command::Object(ObjectCommand::Learn { image, model, name }) => {
            object::learn(image, model, name)
        }
        Command::Object(ObjectCommand::AddView { image, model }) => object::add_view(image, model),
        Command::Object(ObjectCommand::Detect {
            model, frames, out, ..
        }) => object::detect(&s, model, frames, out),
        Command::GenFixtures { kind, out, count } => gen::generate(*kind, out, *count, s.seed),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs `f` on a pool of `jobs` threads, or on rayon's global pool.
pub(crate) fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| CliError::Usage(format!("thread pool: {e}"))),
    }
}
