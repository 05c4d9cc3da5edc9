//! `advneg` command-line driver: config loading, subcommand dispatch and run
//! manifests.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

use anyhow::Result;

use args::{Cli, Command, PromptCommand};
use commands::{apply_llm_flags, apply_prompt_flags, Status};
use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Commands that issue completion requests need a credential unless mocked.
fn needs_llm(command: &Command) -> bool {
    matches!(
        command,
        Command::Generate { .. } | Command::Ablate { .. } | Command::Pipeline { .. }
    )
}

/// Layer flags over the config file and validate, before any work is done.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if cli.mock {
        cfg.generation.mock = true;
    }
    match &cli.command {
        Command::Generate { prompt, llm, .. } | Command::Pipeline { prompt, llm, .. } => {
            apply_prompt_flags(&mut cfg, prompt);
            apply_llm_flags(&mut cfg, llm);
        }
        Command::Prompt {
            action: PromptCommand::Render { prompt, .. },
        } => apply_prompt_flags(&mut cfg, prompt),
        Command::Ablate { llm, .. } => apply_llm_flags(&mut cfg, llm),
        Command::Negatives {
            method,
            n,
            alpha,
            embeddings,
            ..
        } => {
            if let Some(v) = method {
                cfg.negatives.method = *v;
            }
            if let Some(v) = n {
                cfg.negatives.n = *v;
            }
            if let Some(v) = alpha {
                cfg.negatives.alpha = *v;
            }
            if let Some(v) = embeddings {
                cfg.negatives.embeddings = v.clone();
            }
        }
        Command::Quality { embeddings, .. } => {
            if let Some(v) = embeddings {
                cfg.negatives.embeddings = v.clone();
            }
        }
        Command::Train {
            learning_rate,
            max_steps,
            ..
        } => {
            if let Some(v) = learning_rate {
                cfg.train.learning_rate = *v;
            }
            if let Some(v) = max_steps {
                cfg.train.max_steps = *v;
            }
        }
        _ => {}
    }
    cfg.validate(needs_llm(&cli.command))?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Status> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Ingest {
            format,
            input,
            out,
            split,
        } => commands::ingest(&cfg, format, input, out, *split),
        Command::Assemble {
            kind,
            input,
            neg_source,
            negatives,
            out,
        } => commands::assemble(&cfg, *kind, input, *neg_source, negatives.as_deref(), out),
        Command::Prompt {
            action:
                PromptCommand::Render {
                    input,
                    examples,
                    target_id,
                    out,
                    ..
                },
        } => commands::prompt_render(&cfg, input, examples.as_deref(), target_id, out.as_deref()),
        Command::Generate {
            input,
            examples,
            out,
            ..
        } => commands::generate(&cfg, input, examples.as_deref(), out),
        Command::Negatives { input, out, .. } => commands::negatives(&cfg, input, out),
        Command::Train {
            train_instances,
            out,
            ..
        } => commands::train_cmd(&cfg, train_instances, out),
        Command::Eval {
            model,
            train_instances,
            tests,
            out,
        } => commands::eval_cmd(&cfg, model, train_instances, tests, out),
        Command::Quality {
            model,
            train_instances,
            labeled,
            out,
            ..
        } => commands::quality_cmd(&cfg, model, train_instances, labeled, out),
        Command::Contamination { generations, out } => {
            commands::contamination_cmd(&cfg, generations, out)
        }
        Command::Ablate {
            axes,
            train,
            test,
            augmentation_contexts,
            sizes,
            synthetic,
            out_dir,
            ..
        } => pipeline::ablate(
            &cfg,
            axes,
            train.as_deref(),
            test.as_deref(),
            augmentation_contexts.as_deref(),
            sizes,
            *synthetic,
            out_dir,
        ),
        Command::Pipeline {
            train,
            test,
            synthetic,
            out_dir,
            ..
        } => pipeline::pipeline(&cfg, train.as_deref(), test.as_deref(), *synthetic, out_dir),
    }
}

/// Parse, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(Status::Complete) => EXIT_OK,
        Ok(Status::Partial) => EXIT_PARTIAL,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
