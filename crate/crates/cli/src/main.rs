use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matforge_core::library::{caption_library, load_library, write_toy_library};
use matforge_core::mllm::{ClientConfig, MllmClient};
use matforge_core::pipeline::{MaskSource, MatcherMode, Pipeline, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "matforge", version, about = "Assign PBR materials to a diffuse-textured mesh")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage for one asset.
    Run(RunArgs),
    /// Run a single stage against an existing run directory.
    Stage {
        /// render, segment, annotate, match, backproject, reconcile, merge, refine, estimate or export.
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Material library maintenance.
    Library {
        #[command(subcommand)]
        command: LibraryCommand,
    },
    /// Write the bundled cube and sphere fixtures, a toy library and ready-to-run configs.
    Fixtures {
        dir: PathBuf,
        #[arg(long, default_value_t = 256)]
        tex_size: usize,
        #[arg(long, default_value_t = 64)]
        library_size: usize,
    },
}

#[derive(Subcommand)]
enum LibraryCommand {
    /// Load and validate a library, printing one line per material.
    Ingest { dir: PathBuf },
    /// Caption every material with the vision model and write the captions back.
    Caption {
        dir: PathBuf,
        #[arg(long, default_value_t = 256)]
        ball_size: usize,
    },
    /// Write the 12-material toy library.
    Toy {
        dir: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    views: Option<usize>,
    /// Render resolution in pixels.
    #[arg(long)]
    res: Option<usize>,
    #[arg(long, value_parser = parse_matcher)]
    matcher: Option<MatcherMode>,
    /// Directory of `view<k>_region<j>.png` masks, or `fallback`.
    #[arg(long)]
    masks: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replay_log: Option<PathBuf>,
    /// Object description prepended to matcher prompts.
    #[arg(long)]
    hint: Option<String>,
    #[arg(long)]
    dump_gbuffer: bool,
    #[arg(long)]
    dump_partition: bool,
    /// Export 16-bit PNGs.
    #[arg(long)]
    deep: bool,
}

fn parse_matcher(s: &str) -> Result<MatcherMode, String> {
    s.parse()
}

impl RunArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        let cwd = Path::new(".");
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(r) = self.res {
            cfg.resolution = r;
        }
        if let Some(m) = self.matcher {
            cfg.matcher = m;
        }
        if let Some(m) = &self.masks {
            cfg.masks = if m == "fallback" {
                MaskSource::Fallback
            } else {
                MaskSource::Files(cwd.join(m))
            };
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = &self.replay_log {
            cfg.replay_log = Some(r.clone());
        }
        if let Some(h) = &self.hint {
            cfg.object_hint = Some(h.clone());
        }
        cfg.dump_gbuffer |= self.dump_gbuffer;
        cfg.dump_partition |= self.dump_partition;
        cfg.deep |= self.deep;
        Ok(cfg)
    }
}

fn fail(e: &dyn std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn pipeline_fail(e: &PipelineError) -> ExitCode {
    fail(e, e.exit_code() as u8)
}

fn run(args: &RunArgs) -> ExitCode {
    let pipeline = match args.load().and_then(Pipeline::new) {
        Ok(p) => p,
        Err(e) => return pipeline_fail(&e),
    };
    let (manifest, outcome) = pipeline.run();
    if let Err(e) = outcome {
        return pipeline_fail(&e);
    }
    for s in &manifest.stages {
        println!("{:<12} {:>8.3}s", s.stage.name(), s.seconds);
    }
    for (m, n) in &manifest.materials {
        println!("material {m}: {n} texels");
    }
    println!("wrote {}", pipeline.layout().dir("export").display());
    ExitCode::SUCCESS
}

fn stage(name: &str, args: &RunArgs) -> ExitCode {
    let result = name
        .parse()
        .and_then(|st| Ok((st, args.load().and_then(Pipeline::new)?)))
        .and_then(|(st, p)| p.run_stage(st));
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => pipeline_fail(&e),
    }
}

fn library(cmd: &LibraryCommand) -> ExitCode {
    match cmd {
        LibraryCommand::Ingest { dir } => match load_library(dir) {
            Ok(index) => {
                for r in index.records() {
                    let (w, h) = r.resolution();
                    println!(
                        "{:<24} {:<10} {:<14} key={} {w}x{h} maps={}",
                        r.id,
                        r.major_type,
                        r.subcategory,
                        r.key_role,
                        r.maps.len()
                    );
                }
                println!("{} materials", index.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, 3),
        },
        LibraryCommand::Caption { dir, ball_size } => {
            let client = match MllmClient::from_env(ClientConfig::default()) {
                Ok(c) => c,
                Err(e) => return fail(&e, 4),
            };
            match caption_library(&client, dir, *ball_size) {
                Ok(n) => {
                    println!("captioned {n} materials");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, 3),
            }
        }
        LibraryCommand::Toy { dir, size } => match write_toy_library(dir, *size) {
            Ok(ids) => {
                println!("wrote {} materials to {}", ids.len(), dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, 3),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Stage { name, run } => stage(name, run),
        Command::Library { command } => library(command),
        Command::Fixtures {
            dir,
            tex_size,
            library_size,
        } => match matforge_core::fixtures::write_demo(dir, *tex_size, *library_size) {
            Ok(configs) => {
                for c in configs {
                    println!("{}", c.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, 3),
        },
    }
}
