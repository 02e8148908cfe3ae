use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shape_concepts::topo::CutRule;
use shape_concepts_cli::config::TStar;
use shape_concepts_cli::{run_pipeline, run_stage, CliError, PipelineConfig, Stage, StageOptions, Workspace};

/// Unsupervised shape concepts from segmented 2.5D scans.
#[derive(Parser, Debug)]
#[command(name = "shape-concepts", version)]
struct Cli {
    /// Root seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory shared by all stages.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the labeled synthetic scan dataset.
    Synth {
        #[arg(long)]
        scans_per_class: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Estimate normals and segment every scan by region growing.
    Segment {
        #[arg(long)]
        angle: Option<f64>,
    },
    /// Train the hierarchical visual-word dictionary.
    DictTrain {
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Train one motif hierarchy per dictionary level.
    EnsembleTrain {
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Compute a stimuli vector per object.
    Stimuli,
    /// Build the topological space and run the filtration.
    Filtrate {
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Cut the filtration into concepts and compute concept responses.
    Concepts(ConceptArgs),
    /// Purity and classification error over a grid of cuts.
    Sweep,
    /// Cross-validate a linear classifier on concept responses.
    Classify {
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// 2D t-SNE embedding of the concept responses.
    Embed {
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Write barcode, F edges, annexation curve and region grid tables.
    Export {
        /// Also render SVG figures.
        #[arg(long)]
        svg: bool,
    },
    /// Run every stage from `synth` to `export`.
    Pipeline {
        /// Include the supervised sweep.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        concepts: ConceptArgs,
    },
}

#[derive(Args, Debug, Default)]
struct ConceptArgs {
    /// Cut time in [0, 1], or `auto` for the annexation maximum.
    #[arg(long)]
    t_star: Option<TStar>,
    #[arg(long)]
    min_size: Option<usize>,
    /// Which side of the cut time is dropped.
    #[arg(long, value_parser = parse_rule)]
    rule: Option<CutRule>,
}

fn parse_rule(s: &str) -> Result<CutRule, String> {
    match s {
        "drop-later" => Ok(CutRule::DropLater),
        "drop-earlier" => Ok(CutRule::DropEarlier),
        _ => Err(format!("expected `drop-later` or `drop-earlier`, got `{s}`")),
    }
}

fn apply_concept_args(cfg: &mut PipelineConfig, a: &ConceptArgs) {
    if let Some(t) = a.t_star {
        cfg.concepts.t_star = t;
    }
    if let Some(m) = a.min_size {
        cfg.concepts.min_size = m;
    }
    if let Some(r) = a.rule {
        cfg.concepts.rule = r;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut opts = StageOptions::default();
    let stage = match &cli.command {
        Command::Synth { scans_per_class, noise } => {
            if let Some(n) = scans_per_class {
                cfg.synth.scans_per_class = *n;
            }
            if let Some(s) = noise {
                cfg.synth.noise_sigma = *s;
            }
            Some(Stage::Synth)
        }
        Command::Segment { angle } => {
            if let Some(a) = angle {
                cfg.segment.angle_thresh_deg = *a;
            }
            Some(Stage::Segment)
        }
        Command::DictTrain { depth } => {
            if let Some(d) = depth {
                cfg.dictionary.depth = *d;
            }
            Some(Stage::DictTrain)
        }
        Command::EnsembleTrain { sigma } => {
            if let Some(s) = sigma {
                cfg.ensemble.sigma = *s;
            }
            Some(Stage::EnsembleTrain)
        }
        Command::Stimuli => Some(Stage::Stimuli),
        Command::Filtrate { max_steps } => {
            if let Some(m) = max_steps {
                cfg.filtration.max_steps = *m;
            }
            Some(Stage::Filtrate)
        }
        Command::Concepts(a) => {
            apply_concept_args(&mut cfg, a);
            Some(Stage::Concepts)
        }
        Command::Sweep => Some(Stage::Sweep),
        Command::Classify { repetitions } => {
            if let Some(r) = repetitions {
                cfg.classifier.repetitions = *r;
            }
            Some(Stage::Classify)
        }
        Command::Embed { perplexity, iterations } => {
            if let Some(p) = perplexity {
                cfg.tsne.perplexity = *p;
            }
            if let Some(i) = iterations {
                cfg.tsne.iterations = *i;
            }
            Some(Stage::Embed)
        }
        Command::Export { svg } => {
            opts.svg = *svg;
            Some(Stage::Export)
        }
        Command::Pipeline { svg, concepts, .. } => {
            opts.svg = *svg;
            apply_concept_args(&mut cfg, concepts);
            None
        }
    };
    cfg.validate()?;
    let ws = Workspace::new(&cli.out, cfg);
    match stage {
        Some(s) => {
            let m = run_stage(&ws, s, opts)?;
            println!("{}: {}", m.stage, m.results);
        }
        None => {
            let with_sweep = matches!(cli.command, Command::Pipeline { sweep: true, .. });
            for m in run_pipeline(&ws, opts, with_sweep)? {
                println!("{}: {}", m.stage, m.results);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
