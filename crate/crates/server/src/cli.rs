//! Command-line interface: serve, single turns, replay, fixtures and the
//! evaluation harness.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use labassist_core::assistant::{
    bundled_script, parse_script, read_log, replay, Assistant, AssistantError, ServiceConfig, TurnInput, TurnRecord,
};
use labassist_core::scene::SceneDocument;
use labassist_eval::{fixtures as eval_fixtures, ingest_latency, ingest_ratings, parse_sample, Published};
use labassist_eval::{paired_t_test, report, ReportOptions};

#[derive(Debug, Parser)]
#[command(
    name = "labassist",
    version,
    about = "Physics lab assistant: turn pipeline, HTTP service and evaluation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the listen address from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run one turn and print its record as JSON.
    Turn(TurnArgs),
    /// Run a scripted session (the bundled five-question script by default).
    Script {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Re-run a session log and print fresh records as JSON lines.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Compare prompts, verdicts and answers with the log; exit 1 on any
        /// difference.
        #[arg(long)]
        check: bool,
    },
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Debug, Args)]
pub struct TurnArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Detection wire document.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub scene: Option<PathBuf>,
    /// Name of a bundled or configured scene fixture.
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub question_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// List scene fixtures.
    List {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Aggregate ratings and latency into a JSON report.
    Run {
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Latency CSV, or a session log (.jsonl).
        #[arg(long)]
        latency: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a Markdown rendering next to the JSON.
        #[arg(long)]
        markdown: bool,
        /// Published values to check against; "bundled" selects the shipped
        /// ones.
        #[arg(long)]
        published: Option<String>,
        /// Paired systems as "A,B" (t is computed on A - B).
        #[arg(long)]
        pair: Option<String>,
        /// System name for latencies read from a session log.
        #[arg(long, default_value = "PhysicsAssistant")]
        log_system: String,
        /// Use the bundled ratings, latency and published values.
        #[arg(long)]
        bundled: bool,
    },
    /// Paired t-test of two samples, each "1,2,3" or "file.csv:column".
    Ttest {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<ServiceConfig> {
    match path {
        Some(p) => Ok(ServiceConfig::from_file(p)?),
        None => Ok(ServiceConfig::default()),
    }
}

/// Fields replay must reproduce exactly, per turn.
pub fn replay_differences(original: &[TurnRecord], fresh: &[TurnRecord]) -> Vec<String> {
    let mut out = Vec::new();
    if original.len() != fresh.len() {
        out.push(format!("{} logged turns, {} replayed", original.len(), fresh.len()));
    }
    for (a, b) in original.iter().zip(fresh) {
        let id = format!("{}#{}", a.session_id, a.turn_id);
        if json(&a.prompts) != json(&b.prompts) {
            out.push(format!("{id}: prompts differ"));
        }
        if json(&a.verdicts) != json(&b.verdicts) {
            out.push(format!("{id}: verdicts differ"));
        }
        if a.answer != b.answer || a.spoken_text != b.spoken_text {
            out.push(format!("{id}: answers differ"));
        }
        if a.turn_id != b.turn_id {
            out.push(format!("{id}: replayed as turn {}", b.turn_id));
        }
    }
    out
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn turn_error(out: &mut dyn Write, e: AssistantError) -> anyhow::Result<i32> {
    if let AssistantError::Stage { record, .. } = &e {
        print_json(out, record)?;
    }
    eprintln!("error [{}]: {e}", e.code());
    Ok(2)
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    match cli.command {
        Command::Serve { config, listen } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            serve(cfg)?;
            Ok(0)
        }
        Command::Turn(args) => {
            let cfg = load_config(args.config.as_deref())?;
            let assistant = Assistant::from_config(cfg)?;
            let mut input = TurnInput::text(args.text);
            input.question_id = args.question_id;
            if let Some(p) = &args.scene {
                let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
                input = input.with_scene(SceneDocument::from_json(&text)?);
            } else if let Some(f) = args.fixture {
                input = input.with_fixture(f);
            }
            let sid = assistant.create_session();
            match assistant.run_turn(&sid, input) {
                Ok(r) => {
                    print_json(out, &r)?;
                    Ok(0)
                }
                Err(e) => turn_error(out, e),
            }
        }
        Command::Script { config, file } => {
            let cfg = load_config(config.as_deref())?;
            let steps = match file {
                Some(p) => parse_script(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?,
                None => bundled_script(),
            };
            let assistant = Assistant::from_config(cfg)?;
            let sid = assistant.create_session();
            for step in steps {
                match assistant.run_turn(&sid, step.input()) {
                    Ok(r) => writeln!(out, "{}", serde_json::to_string(&r)?)?,
                    Err(e) => return turn_error(out, e),
                }
            }
            if let Some(p) = assistant.log_path(&sid) {
                eprintln!("log: {}", p.display());
            }
            Ok(0)
        }
        Command::Replay { log, config, check } => {
            let cfg = load_config(config.as_deref())?;
            let fresh = replay(&log, &cfg)?;
            for r in &fresh {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
            if check {
                let diffs = replay_differences(&read_log(&log)?, &fresh);
                for d in &diffs {
                    eprintln!("{d}");
                }
                if !diffs.is_empty() {
                    return Ok(1);
                }
                eprintln!("replay matches {} logged turns", fresh.len());
            }
            Ok(0)
        }
        Command::Fixtures {
            command: FixturesCommand::List { config },
        } => {
            let assistant = Assistant::from_config(load_config(config.as_deref())?)?;
            for name in assistant.fixture_names() {
                writeln!(out, "{name}")?;
            }
            Ok(0)
        }
        Command::Eval { command } => eval(command, out),
    }
}

fn eval(cmd: EvalCommand, out: &mut dyn Write) -> anyhow::Result<i32> {
    match cmd {
        EvalCommand::Run {
            ratings,
            latency,
            out: out_path,
            markdown,
            published,
            pair,
            log_system,
            bundled,
        } => {
            let matrix = match (&ratings, bundled) {
                (Some(p), _) => Some(ingest_ratings(p)?),
                (None, true) => Some(eval_fixtures::ratings()?),
                (None, false) => None,
            };
            let table = match (&latency, bundled) {
                (Some(p), _) => Some(ingest_latency(p, &log_system)?),
                (None, true) => Some(eval_fixtures::latency()?),
                (None, false) => None,
            };
            let published = match published.as_deref() {
                Some("bundled") => Some(eval_fixtures::published()?),
                Some(p) => Some(Published::from_file(Path::new(p))?),
                None if bundled => Some(eval_fixtures::published()?),
                None => None,
            };
            let pair = match pair {
                Some(s) => match s.split_once(',') {
                    Some((a, b)) => Some((a.trim().to_string(), b.trim().to_string())),
                    None => bail!("--pair takes two comma-separated system names"),
                },
                None => None,
            };
            let opts = ReportOptions {
                pair,
                published,
                markdown,
            };
            let rep = report(matrix.as_ref(), table.as_ref(), &opts)?;
            std::fs::write(&out_path, &rep.json).with_context(|| out_path.display().to_string())?;
            writeln!(out, "wrote {}", out_path.display())?;
            if let Some(md) = &rep.markdown {
                let md_path = out_path.with_extension("md");
                std::fs::write(&md_path, md).with_context(|| md_path.display().to_string())?;
                writeln!(out, "wrote {}", md_path.display())?;
            }
            if !rep.report.discrepancies.is_empty() {
                writeln!(
                    out,
                    "{} published values disagree with recomputation",
                    rep.report.discrepancies.len()
                )?;
            }
            Ok(0)
        }
        EvalCommand::Ttest { a, b } => {
            let xs = parse_sample(&a)?;
            let ys = parse_sample(&b)?;
            match paired_t_test(&xs, &ys) {
                Ok(r) => {
                    print_json(out, &r)?;
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(2)
                }
            }
        }
    }
}

fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let listen = cfg.listen.clone();
    let assistant = Arc::new(Assistant::from_config(cfg)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .with_context(|| format!("cannot bind {listen}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(assistant))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
