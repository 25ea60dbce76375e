use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use wordpull::pipeline::{compare, export_json, export_svg, run_pipeline, FailureClass, PipelineConfig, PipelineError, RunArtifact, Stage};

use crate::server::{serve, ArtifactStore};

#[derive(Debug, Parser)]
#[command(name = "wordpull", version, about = "Explain 2D projections of text embeddings with word gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Svg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline and write `<output_dir>/<name>.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Artifact name; defaults to the config file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Re-export a stored artifact.
    Export {
        artifact: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the clouds of two artifacts over the same corpus.
    Compare { a: PathBuf, b: PathBuf },
    /// Serve artifacts over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value = "runs")]
        artifacts_dir: PathBuf,
    },
}

fn io_error(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::new(Stage::Export, FailureClass::Data, format!("{}: {e}", path.display()))
}

/// Execute `run` and return the artifact path.
pub fn run(config: &Path, name: Option<&str>) -> Result<PathBuf, PipelineError> {
    let cfg = PipelineConfig::load(config)?;
    let artifact = run_pipeline(&cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
    let stem = name.map(str::to_string).unwrap_or_else(|| config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into()));
    let path = cfg.output_dir.join(format!("{stem}.json"));
    export_json(&artifact, &path)?;
    let t = &artifact.timing;
    eprintln!(
        "{} documents, {} cloud words, {} backward passes; forward {:.1} ms (untracked {:.1} ms, ratio {:.2}), backward {:.1} ms",
        artifact.stats.documents,
        artifact.cloud.len(),
        artifact.stats.backward_passes,
        t.forward_ms,
        t.forward_untracked_ms,
        t.overhead_ratio,
        t.backward_ms
    );
    Ok(path)
}

/// Dispatch a parsed command; the error's exit code is the process status.
pub fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { config, name } => {
            println!("{}", run(&config, name.as_deref())?.display());
        }
        Command::Export { artifact, format, out } => {
            let a = RunArtifact::load(&artifact)?;
            match format {
                Format::Json => export_json(&a, &out)?,
                Format::Svg => export_svg(&a, &out)?,
            }
        }
        Command::Compare { a, b } => {
            let report = compare(&RunArtifact::load(&a)?, &RunArtifact::load(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Serve { addr, artifacts_dir } => {
            let store = ArtifactStore::open(&artifacts_dir).map_err(|e| io_error(&artifacts_dir, e))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::config(e.to_string()))?;
            rt.block_on(serve(&addr, store)).map_err(|e| PipelineError::config(format!("cannot serve on {addr}: {e}")))?;
        }
    }
    Ok(())
}
