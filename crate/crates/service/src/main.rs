use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::http::HeaderValue;
use clap::{Parser, Subcommand};
use polariscope::ann::AnnParams;
use polariscope_service::pipeline::{self, StageOutcome};
use polariscope_service::{api, Snapshot, Workdir};

#[derive(Parser)]
#[command(name = "polariscope", version, about = "Party-labeled politician embeddings and polarization metrics")]
struct Cli {
    /// Working directory holding every pipeline artifact.
    #[arg(long, global = true, env = "POLARISCOPE_WORKDIR", default_value = "polariscope-work")]
    workdir: PathBuf,
    /// Re-run the stage even if its inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the raw corpus from congress rosters and politician pages.
    Ingest {
        /// Directory with fixture.json and the HTML it lists.
        #[arg(long, conflicts_with = "live")]
        fixture: Option<PathBuf>,
        /// Fetch from Wikipedia, caching every page under the working directory.
        #[arg(long, requires = "congress")]
        live: bool,
        /// Congress ordinals to fetch rosters for.
        #[arg(long, num_args = 1..)]
        congress: Vec<u32>,
    },
    /// Route section text into background, political and other categories.
    Annotate {
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Report headings no rule matches instead of applying the default category.
        #[arg(long)]
        strict: bool,
    },
    /// Remove entities, numbers and party terms from categorized text.
    Clean {
        #[arg(long)]
        policy: Option<PathBuf>,
        /// JSON Lines of precomputed entity spans.
        #[arg(long)]
        entities: Option<PathBuf>,
        /// Directory with loc.txt, person_given.txt and org_suffix.txt.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Train document vectors and per-party, per-phase word vectors.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Load externally computed candidate vectors and attention scores.
    EmbedLoad {
        #[arg(long = "manifest")]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Build nearest-neighbor indexes over every candidate embedding set.
    Index {
        #[arg(long, default_value_t = AnnParams::default().n_trees)]
        trees: usize,
        #[arg(long, default_value_t = AnnParams::default().leaf_capacity)]
        leaf_capacity: usize,
        #[arg(long, default_value_t = AnnParams::default().seed)]
        seed: u64,
    },
    /// Party classification accuracy for SVM and k-means.
    Classify {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Same-party neighbor ratios for every candidate.
    Polarize {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Print the accuracy table, ordering checks and cohort summaries.
    Report,
    /// Serve the JSON API over a finished working directory.
    Serve {
        /// Defaults to the working directory.
        #[arg(long, env = "POLARISCOPE_SNAPSHOT")]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Origin allowed by CORS, e.g. http://localhost:5173.
        #[arg(long)]
        allow_origin: Option<String>,
    },
}

fn print(outcome: &StageOutcome) {
    if outcome.cached {
        println!("{}: up to date", outcome.stage);
    } else {
        println!("{}: {}", outcome.stage, outcome.summary);
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let wd = Workdir::new(&cli.workdir);
    let force = cli.force;
    let outcome = match cli.command {
        Command::Ingest { fixture, live, congress } => {
            let source = match fixture {
                Some(dir) => pipeline::IngestSource::Fixture(dir),
                None if live => pipeline::IngestSource::Live { congresses: congress },
                None => anyhow::bail!("pass --fixture DIR or --live --congress N..."),
            };
            pipeline::ingest(&wd, &source, force)?
        }
        Command::Annotate { rules, strict } => pipeline::annotate(&wd, &pipeline::AnnotateOptions { rules, strict }, force)?,
        Command::Clean { policy, entities, gazetteer } => {
            pipeline::clean(&wd, &pipeline::CleanOptions { policy, entities, gazetteer }, force)?
        }
        Command::Train { config, seed, epochs, workers } => {
            pipeline::train(&wd, &pipeline::TrainOptions { config, seed, epochs, workers }, force)?
        }
        Command::EmbedLoad { manifests, attention } => {
            pipeline::embed_load(&wd, &pipeline::EmbedLoadOptions { manifests, attention }, force)?
        }
        Command::Index { trees, leaf_capacity, seed } => {
            pipeline::index(&wd, AnnParams { n_trees: trees, leaf_capacity, seed }, force)?
        }
        Command::Classify { lambda, seed } => pipeline::classify(&wd, &pipeline::ClassifyOptions { lambda, seed }, force)?,
        Command::Polarize { k } => pipeline::polarize(&wd, k, force)?,
        Command::Report => {
            let (_, text) = pipeline::report(&wd, force)?;
            print!("{text}");
            return Ok(());
        }
        Command::Serve { snapshot, port, host, allow_origin } => {
            let root = snapshot.unwrap_or(cli.workdir);
            let snap = Snapshot::load(&root).with_context(|| format!("loading snapshot {}", root.display()))?;
            let origin = allow_origin.map(|o| HeaderValue::from_str(&o)).transpose().context("invalid --allow-origin")?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid --host/--port")?;
            return serve(api::router(Arc::new(snap), origin), addr);
        }
    };
    print(&outcome);
    Ok(())
}

#[tokio::main]
async fn serve(app: axum::Router, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
