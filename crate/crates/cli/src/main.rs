use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reltex_cli::commands;
use reltex_cli::config::{Overrides, ProjectConfig};
use reltex_cli::failure::Failure;
use reltex_core::optimize::Mode;

#[derive(Parser)]
#[command(name = "reltex", version, about = "Text-guided texture and environment-map editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache the BRDF table and the prefiltered environment.
    Precompute(Common),
    /// Render a turntable of the scene.
    Render {
        #[command(flatten)]
        common: Common,
        /// Render the parameters written by a previous edit or relight.
        #[arg(long)]
        edited: bool,
    },
    /// Edit the material maps toward the target prompt.
    Edit(Train),
    /// Optimize the environment map with materials frozen.
    Relight(Train),
    /// Score the edit with image/text embeddings.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// Project TOML file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// `mock:color`, `mock:null` or `sidecar:<endpoint>`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Turntable render resolution.
    #[arg(long)]
    resolution: Option<usize>,
    /// Resolution of the renders fed to the predictor.
    #[arg(long)]
    train_resolution: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    common: Common,
    /// Validate configuration, assets and backend without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Continue from a checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ProjectConfig, Failure> {
        let flags = Overrides {
            output: self.output.clone(),
            backend: self.backend.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
            mesh: self.mesh.clone(),
            env: self.env.clone(),
            seed: self.seed,
            iterations: self.iterations,
            resolution: self.resolution,
            train_resolution: self.train_resolution,
            views: self.views,
        };
        ProjectConfig::load(self.config.as_deref(), &flags)
    }
}

fn run(cmd: &Command) -> Result<serde_json::Value, Failure> {
    match cmd {
        Command::Precompute(c) => commands::precompute(&c.load()?),
        Command::Render { common, edited } => commands::render(&common.load()?, *edited),
        Command::Edit(t) => commands::train(&t.common.load()?, Mode::TextureEdit, t.dry_run, t.resume.as_deref()),
        Command::Relight(t) => commands::train(&t.common.load()?, Mode::Relight, t.dry_run, t.resume.as_deref()),
        Command::Eval(c) => commands::eval(&c.load()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::Config(e.to_string().trim().to_string());
            eprintln!("{}", f.diagnostic("reltex"));
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    let name = match &cli.command {
        Command::Precompute(_) => "precompute",
        Command::Render { .. } => "render",
        Command::Edit(_) => "edit",
        Command::Relight(_) => "relight",
        Command::Eval(_) => "eval",
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.diagnostic(name));
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
