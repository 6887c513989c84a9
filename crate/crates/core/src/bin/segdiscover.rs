use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use segdiscover::dataset::Manifest;
use segdiscover::eval::MatchKind;
use segdiscover::pipeline::{resolve_config, EvalSource, Run};
use segdiscover::synth::{write_hue_band_dataset, HueBandParams};
use segdiscover::{Error, Result};

#[derive(Parser)]
#[command(
    name = "segdiscover",
    version,
    about = "Unsupervised concept discovery and segmentation"
)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and merge concept primitives.
    Primitives(Common),
    /// Write mean-color-filled primitive crops.
    Crops(Common),
    /// Embed crops with the built-in descriptor or import an embedding file.
    Embed(Common),
    /// Overcluster embeddings and reassign centers to concepts.
    Cluster(Common),
    /// Assemble per-pixel concept labels.
    Pseudolabel(Common),
    /// Train the refiner on pseudo-labels.
    Refine(Common),
    /// Predict refined concept maps.
    Predict(Common),
    /// Score label maps against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// Which maps to score.
        #[arg(long, value_enum, default_value_t = Source::Predictions)]
        source: Source,
    },
    /// Render predictions as color images.
    Viz {
        #[command(flatten)]
        common: Common,
        /// Ground-truth manifest; recolors predictions through the matching.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Ground-truth manifest; enables evaluation and matched rendering.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Matching::Majority)]
        matching: Matching,
    },
    /// Generate the synthetic hue-band dataset with ground truth.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Working directory holding every stage's outputs.
    #[arg(long)]
    workdir: PathBuf,
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image manifest; defaults to the run's copy.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Felzenszwalb scale.
    #[arg(long)]
    scale: Option<f64>,
    /// Felzenszwalb pre-smoothing sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// `auto` or a pixel count.
    #[arg(long = "min-size")]
    min_size: Option<String>,
    /// Overcluster count.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Concept count.
    #[arg(long = "C")]
    c: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// `builtin` or a path to an embedding file.
    #[arg(long)]
    embeddings: Option<String>,
    /// Any other configuration key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth manifest.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value_t = Matching::Majority)]
    matching: Matching,
}

#[derive(Clone, Copy, ValueEnum)]
enum Matching {
    Majority,
    Hungarian,
}

impl From<Matching> for MatchKind {
    fn from(m: Matching) -> Self {
        match m {
            Matching::Majority => MatchKind::Majority,
            Matching::Hungarian => MatchKind::Hungarian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Predictions,
    Pseudolabels,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(&str, String)>> {
        let mut out: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("scale", self.scale.map(|v| v.to_string()));
        push("sigma", self.sigma.map(|v| v.to_string()));
        push("min_size", self.min_size.clone());
        push("k", self.k.map(|v| v.to_string()));
        push("c", self.c.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("embeddings", self.embeddings.clone());
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            out.push((k.trim(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn run(&self) -> Result<Run> {
        let cfg = resolve_config(&self.workdir, self.config.as_deref(), &self.overrides()?)?;
        Run::open(&self.workdir, cfg)
    }

    fn manifest(&self, run: &Run, stage: &'static str) -> Result<Manifest> {
        run.manifest(stage, self.manifest.as_deref())
    }
}

fn load_gt(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::Stage {
            stage: "eval",
            path: path.to_path_buf(),
            message: "ground-truth manifest not found".into(),
        });
    }
    Manifest::load(path)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Primitives(c) => {
            let run = c.run()?;
            let manifest = match &c.manifest {
                Some(_) => c.manifest(&run, "primitives")?,
                None => {
                    return Err(Error::Stage {
                        stage: "primitives",
                        path: run.workdir.clone(),
                        message: "--manifest is required".into(),
                    })
                }
            };
            run.primitives(&manifest)
        }
        Command::Crops(c) => {
            let run = c.run()?;
            run.crops(&c.manifest(&run, "crops")?)
        }
        Command::Embed(c) => c.run()?.embed(),
        Command::Cluster(c) => c.run()?.cluster(),
        Command::Pseudolabel(c) => {
            let run = c.run()?;
            run.pseudolabel(&c.manifest(&run, "pseudolabel")?)
        }
        Command::Refine(c) => {
            let run = c.run()?;
            run.refine(&c.manifest(&run, "refine")?).map(|_| ())
        }
        Command::Predict(c) => {
            let run = c.run()?;
            run.predict(&c.manifest(&run, "predict")?)
        }
        Command::Eval { common, eval, source } => {
            let run = common.run()?;
            let source = match source {
                Source::Predictions => EvalSource::Predictions,
                Source::Pseudolabels => EvalSource::Pseudolabels,
            };
            let report = run.eval(&load_gt(&eval.gt)?, source, eval.matching.into())?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Viz { common, gt } => {
            let run = common.run()?;
            let manifest = common.manifest(&run, "viz")?;
            let gt = gt.as_deref().map(load_gt).transpose()?;
            run.viz(&manifest, gt.as_ref())
        }
        Command::Pipeline { common, gt, matching } => {
            let run = common.run()?;
            let manifest = match &common.manifest {
                Some(p) => run.manifest("pipeline", Some(p))?,
                None => {
                    return Err(Error::Stage {
                        stage: "pipeline",
                        path: run.workdir.clone(),
                        message: "--manifest is required".into(),
                    })
                }
            };
            let gt = gt.as_deref().map(load_gt).transpose()?;
            if let Some((refined, unrefined)) = run.pipeline(&manifest, gt.as_ref(), matching.into())? {
                println!("unrefined (cluster labels):");
                print!("{}", unrefined.to_table());
                println!("refined:");
                print!("{}", refined.to_table());
            }
            Ok(())
        }
        Command::Synth { out, count, size, seed } => {
            let params = HueBandParams {
                count,
                height: size,
                width: size,
                seed,
                ..HueBandParams::default()
            };
            let paths = write_hue_band_dataset(&out, &params)?;
            println!("{}", paths.manifest.display());
            println!("{}", paths.gt_manifest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
