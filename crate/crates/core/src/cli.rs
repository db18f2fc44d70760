//! `flux` command line.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage or configuration
//! error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::agents::{Agent, Player};
use crate::arena::{
    classify_failure, failure_histogram, read_transcripts, replay_record, reproduce_table2,
    run_matchup, stats_csv, write_transcripts, AgentFactory, AgentSpec, MatchupSpec,
};
use crate::env::{GameState, Role, Rules};
use crate::error::{Error, Result};
use crate::llm::{parse_reply, ParsedReply};
use crate::qlearn::{save_qtable, train, Schedule, TrainConfig};
use crate::rng::GameRng;
use crate::solver::{random_play_table, random_play_table_exact, solve};

pub const EXIT_OK: u8 = 0;
pub const EXIT_MISMATCH: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "flux", version, about = "FLUX game engine, trainer, solver and arena")]
pub struct Cli {
    /// More logging (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train both Q-tables with the three-mode curriculum.
    Train(TrainArgs),
    /// Solve the game exactly and export every reachable state's value.
    Solve(SolveArgs),
    /// Play one matchup.
    Tournament(TournamentArgs),
    /// Run the eight baseline matchups against the reference numbers.
    Table2(Table2Args),
    /// Play a single game on the terminal.
    Play(PlayArgs),
    /// Check a transcript against the engine.
    Replay(TranscriptArgs),
    /// Tag failure modes in a transcript.
    Classify(TranscriptArgs),
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct RulesArgs {
    /// Role that makes the first move.
    #[arg(long, default_value = "shrinker")]
    pub first_mover: Role,
}

impl RulesArgs {
    fn rules(&self) -> Rules {
        Rules {
            first_mover: self.first_mover,
            ..Rules::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 30_000)]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out", default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eps_start: Option<f64>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_decay: Option<f64>,
    #[arg(long)]
    pub reward_win: Option<f64>,
    #[arg(long)]
    pub reward_loss: Option<f64>,
    #[arg(long)]
    pub reward_step: Option<f64>,
    /// Run blocks of N episodes per curriculum mode instead of alternating.
    #[arg(long)]
    pub block: Option<u64>,
    /// Log every Nth episode to the training curve.
    #[arg(long, default_value_t = 1)]
    pub curve_stride: u64,
    #[command(flatten)]
    pub rules: RulesArgs,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            gamma: self.gamma.unwrap_or(d.gamma),
            eps_start: self.eps_start.unwrap_or(d.eps_start),
            eps_min: self.eps_min.unwrap_or(d.eps_min),
            eps_decay: self.eps_decay.unwrap_or(d.eps_decay),
            episodes: self.episodes,
            seed: self.seed,
            reward_win: self.reward_win.unwrap_or(d.reward_win),
            reward_loss: self.reward_loss.unwrap_or(d.reward_loss),
            reward_step: self.reward_step.unwrap_or(d.reward_step),
            schedule: self.block.map_or(Schedule::RoundRobin, Schedule::Block),
            rules: self.rules.rules(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(short = 'o', long = "out", default_value = "out")]
    pub out: PathBuf,
    /// Print the random-play probability as an exact fraction.
    #[arg(long)]
    pub rational: bool,
    #[command(flatten)]
    pub rules: RulesArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MatchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Concurrent games; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-request timeout for HTTP LLM agents, in seconds.
    #[arg(long, default_value_t = 60)]
    pub llm_timeout: u64,
    /// Save raw LLM exchanges into the output directory.
    #[arg(long)]
    pub log_llm: bool,
    #[command(flatten)]
    pub rules: RulesArgs,
}

impl MatchArgs {
    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn factory(&self, out: &Path) -> AgentFactory {
        let mut factory = AgentFactory::new(self.rules.rules());
        factory.llm_timeout = Duration::from_secs(self.llm_timeout);
        if self.log_llm {
            factory.llm_log_dir = Some(out.to_path_buf());
        }
        factory
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TournamentArgs {
    /// Shrinker seat.
    #[arg(long, value_parser = parse_agent)]
    pub p0: AgentSpec,
    /// Amplifier seat.
    #[arg(long, value_parser = parse_agent)]
    pub p1: AgentSpec,
    #[arg(long, default_value_t = 1000)]
    pub games: u64,
    #[arg(short = 'o', long = "out", default_value = "out")]
    pub out: PathBuf,
    /// Write one JSON line per ply to transcripts.jsonl.
    #[arg(long)]
    pub transcripts: bool,
    #[command(flatten)]
    pub matches: MatchArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct Table2Args {
    #[arg(long, default_value = "out/q_shrinker.txt")]
    pub q_shrinker: PathBuf,
    #[arg(long, default_value = "out/q_amplifier.txt")]
    pub q_amplifier: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub games: u64,
    #[arg(short = 'o', long = "out", default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub matches: MatchArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PlayArgs {
    #[arg(long, value_parser = parse_agent, default_value = "human")]
    pub p0: AgentSpec,
    #[arg(long, value_parser = parse_agent, default_value = "heuristic")]
    pub p1: AgentSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub rules: RulesArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TranscriptArgs {
    pub transcript: PathBuf,
    #[command(flatten)]
    pub rules: RulesArgs,
}

fn parse_agent(s: &str) -> std::result::Result<AgentSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses the process arguments, runs, and maps the result to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let stdin = io::stdin();
    let code = run(cli.command, &mut stdin.lock(), &mut io::stdout().lock());
    ExitCode::from(code)
}

/// Runs one subcommand with explicit streams and returns the exit code.
pub fn run(command: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> u8 {
    let result = match command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Tournament(a) => cmd_tournament(&a, out),
        Command::Table2(a) => cmd_table2(&a, out),
        Command::Play(a) => cmd_play(&a, input, out),
        Command::Replay(a) => cmd_replay(&a, out),
        Command::Classify(a) => cmd_classify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Convenience for tests: parses `args` (without the program name) and runs.
pub fn run_args<I, S>(args: I, input: &mut dyn BufRead, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("flux"))
        .chain(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli.command, input, out),
        Err(e) => {
            let _ = writeln!(out, "{e}");
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Echoes the effective configuration next to the artifacts.
fn write_run_cfg<T: Serialize>(dir: &Path, subcommand: &str, args: &T) -> Result<()> {
    #[derive(Serialize)]
    struct RunConfig<'a, T> {
        subcommand: &'a str,
        version: &'a str,
        args: &'a T,
    }
    let cfg = RunConfig {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let mut text = serde_json::to_string_pretty(&cfg).expect("config serializes");
    text.push('\n');
    write_file(&dir.join("run.cfg"), &text)
}

fn out_line(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<u8> {
    let cfg = args.config();
    cfg.validate()?;
    prepare_dir(&args.out)?;
    #[derive(Serialize)]
    struct Echo<'a> {
        args: &'a TrainArgs,
        effective: &'a TrainConfig,
        config_digest: String,
    }
    write_run_cfg(
        &args.out,
        "train",
        &Echo {
            args,
            effective: &cfg,
            config_digest: cfg.digest(),
        },
    )?;

    let started = std::time::Instant::now();
    let result = train(&cfg, args.curve_stride)?;
    let elapsed = started.elapsed();
    save_qtable(&result.shrinker, &args.out.join("q_shrinker.txt"))?;
    save_qtable(&result.amplifier, &args.out.join("q_amplifier.txt"))?;
    write_file(&args.out.join("training_curve.csv"), &result.curve.to_csv())?;

    let final_eps = if cfg.episodes == 0 {
        cfg.eps_start
    } else {
        result.final_epsilon(&cfg)
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "episodes: {}", cfg.episodes);
    let _ = writeln!(summary, "seed: {}", cfg.seed);
    let _ = writeln!(summary, "final epsilon: {final_eps}");
    let _ = writeln!(
        summary,
        "shrinker table: {} states (reference 3,092)",
        result.shrinker.len()
    );
    let _ = writeln!(
        summary,
        "amplifier table: {} states (reference 2,657)",
        result.amplifier.len()
    );
    write_file(&args.out.join("train_summary.txt"), &summary)?;
    out_line(out, &summary)?;
    out_line(
        out,
        &format!("wrote {} in {:.1}s\n", args.out.display(), elapsed.as_secs_f64()),
    )?;
    Ok(EXIT_OK)
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<u8> {
    let rules = args.rules.rules();
    prepare_dir(&args.out)?;
    write_run_cfg(&args.out, "solve", args)?;
    let solved = solve(&rules);
    write_file(&args.out.join("solved.txt"), &solved.to_text())?;

    let space = solved.space();
    let initial = rules.initial_state();
    let value = solved.initial();
    let probability = if args.rational {
        let exact = random_play_table_exact(space);
        let p = &exact[&initial];
        format!(
            "{}/{} (~{:.6})",
            p.numer(),
            p.denom(),
            p.to_f64().unwrap_or(f64::NAN)
        )
    } else {
        let p = random_play_table(space)
            .get(&initial)
            .expect("initial state is reachable");
        format!("{p:.6}")
    };
    let mut summary = String::new();
    let _ = writeln!(summary, "reachable states: {}", space.len());
    let _ = writeln!(
        summary,
        "  shrinker to move: {}",
        space.to_move_count(Role::Shrinker)
    );
    let _ = writeln!(
        summary,
        "  amplifier to move: {}",
        space.to_move_count(Role::Amplifier)
    );
    let _ = writeln!(
        summary,
        "  terminal: {}",
        space.len() - space.ongoing().count()
    );
    let _ = writeln!(
        summary,
        "initial state winner: {} in {} plies",
        value.winner, value.depth
    );
    let _ = writeln!(summary, "random-play shrinker win probability: {probability}");
    write_file(&args.out.join("solve_summary.txt"), &summary)?;
    out_line(out, &summary)?;
    Ok(EXIT_OK)
}

/// `rl:out/q_shrinker` may omit the `.txt` extension.
fn resolve_spec(spec: &AgentSpec) -> AgentSpec {
    match spec {
        AgentSpec::Rl(path) if !path.exists() => {
            let with_ext = path.with_extension("txt");
            if with_ext.exists() {
                AgentSpec::Rl(with_ext)
            } else {
                spec.clone()
            }
        }
        _ => spec.clone(),
    }
}

fn cmd_tournament(args: &TournamentArgs, out: &mut dyn Write) -> Result<u8> {
    let spec = MatchupSpec {
        p0: resolve_spec(&args.p0),
        p1: resolve_spec(&args.p1),
        games: args.games,
        base_seed: args.matches.seed,
        record_transcripts: args.transcripts,
    };
    prepare_dir(&args.out)?;
    write_run_cfg(&args.out, "tournament", args)?;
    let factory = args.matches.factory(&args.out);
    let result = run_matchup(&spec, &factory, args.matches.jobs())?;
    let label = format!("{} vs {}", args.p0, args.p1);
    let csv = stats_csv(&label, &result.stats);
    write_file(&args.out.join("stats.csv"), &csv)?;
    if args.transcripts {
        write_file(
            &args.out.join("transcripts.jsonl"),
            &write_transcripts(&result.records),
        )?;
    }
    let s = &result.stats;
    let mut text = csv;
    let _ = writeln!(
        text,
        "outcomes: {}",
        s.outcomes
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if s.total_llm_plies() > 0 {
        let _ = writeln!(
            text,
            "llm plies: {}, invalid: {} (shrinker {}, amplifier {}), transport failures: {}",
            s.total_llm_plies(),
            s.total_invalid(),
            s.invalid_moves[0],
            s.invalid_moves[1],
            s.transport_failures
        );
    }
    if s.fallbacks > 0 {
        let _ = writeln!(text, "unseen-state fallbacks: {}", s.fallbacks);
    }
    out_line(out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_table2(args: &Table2Args, out: &mut dyn Write) -> Result<u8> {
    prepare_dir(&args.out)?;
    write_run_cfg(&args.out, "table2", args)?;
    let factory = args.matches.factory(&args.out);
    let report = reproduce_table2(
        &args.q_shrinker,
        &args.q_amplifier,
        args.games,
        args.matches.seed,
        &factory,
        args.matches.jobs(),
    )?;
    write_file(&args.out.join("table2.csv"), &report.to_csv())?;
    let text = report.to_text();
    write_file(&args.out.join("table2.txt"), &text)?;
    out_line(out, &text)?;
    Ok(EXIT_OK)
}

fn render_board(state: &GameState) -> String {
    let mut s = String::new();
    let idx: Vec<String> = (0..state.len()).map(|i| format!("{i:>3}")).collect();
    let vals: Vec<String> = state.cells().iter().map(|v| format!("{v:>3}")).collect();
    let _ = writeln!(s, "index {}", idx.join(""));
    let _ = writeln!(s, "value {}", vals.join(""));
    let _ = writeln!(s, "sum {}   move {} of {}", state.sum(), state.moves_played() + 1, crate::env::MAX_PLIES);
    s
}

fn cmd_play(args: &PlayArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<u8> {
    let rules = args.rules.rules();
    let factory = AgentFactory::new(rules.clone());
    let specs = [&args.p0, &args.p1];
    let roles = [Role::Shrinker, Role::Amplifier];
    let mut agents: Vec<Option<Box<dyn Agent>>> = Vec::new();
    for (spec, role) in specs.iter().zip(roles) {
        agents.push(match spec {
            AgentSpec::Human => None,
            other => Some(Box::new(ArcAgent(factory.build(&resolve_spec(other), role)?))),
        });
    }
    let mut players: Vec<Option<Box<dyn Player + '_>>> = agents
        .iter()
        .map(|a| a.as_ref().map(|a| a.start_game()))
        .collect();
    let mut rng = GameRng::seed_from(args.seed);
    let mut state = rules.initial_state();
    let mut status = state.status();
    while !status.is_terminal() {
        let role = rules.role_to_move(&state)?;
        out_line(out, &format!("\n{}", render_board(&state)))?;
        let action = match &mut players[role.index()] {
            Some(player) => player.choose(&state, role, &mut rng).action,
            None => loop {
                out_line(out, &format!("{role} to move (AMPLIFY i / DRAIN i): "))?;
                out.flush().map_err(io_err(Path::new("<stdout>")))?;
                let mut line = String::new();
                let n = input
                    .read_line(&mut line)
                    .map_err(io_err(Path::new("<stdin>")))?;
                if n == 0 {
                    return Err(Error::Config("input closed before the game ended".into()));
                }
                match parse_reply(&line, &state) {
                    ParsedReply::Action(a) => break a,
                    ParsedReply::Invalid(reason) => out_line(
                        out,
                        &format!("not a legal move ({}), try again\n", reason_text(reason)),
                    )?,
                }
            },
        };
        out_line(out, &format!("{role}: {action}\n"))?;
        let (next, s) = state.apply(action)?;
        state = next;
        status = s;
    }
    out_line(out, &format!("\n{}", render_board(&state)))?;
    let winner = status.winner().expect("terminal");
    out_line(
        out,
        &format!(
            "game over after {} moves: {} wins ({})\n",
            state.moves_played(),
            winner,
            status.reason().unwrap_or("")
        ),
    )?;
    Ok(EXIT_OK)
}

fn reason_text(reason: crate::llm::InvalidReason) -> &'static str {
    match reason {
        crate::llm::InvalidReason::Format => "could not read a move",
        crate::llm::InvalidReason::OutOfRange => "no such cell",
    }
}

/// Lets an `Arc<dyn Agent>` sit in a box of `dyn Agent`.
struct ArcAgent(std::sync::Arc<dyn Agent>);

impl Agent for ArcAgent {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn start_game(&self) -> Box<dyn Player + '_> {
        self.0.start_game()
    }
}

fn cmd_replay(args: &TranscriptArgs, out: &mut dyn Write) -> Result<u8> {
    let rules = args.rules.rules();
    let records = read_transcripts(&args.transcript)?;
    let mut mismatches = 0;
    for r in &records {
        if let Err(m) = replay_record(r, &rules) {
            out_line(out, &format!("mismatch: {m}\n"))?;
            mismatches += 1;
        }
    }
    out_line(
        out,
        &format!(
            "{} games checked, {} mismatched\n",
            records.len(),
            mismatches
        ),
    )?;
    Ok(if mismatches == 0 { EXIT_OK } else { EXIT_MISMATCH })
}

fn cmd_classify(args: &TranscriptArgs, out: &mut dyn Write) -> Result<u8> {
    let rules = args.rules.rules();
    let records = read_transcripts(&args.transcript)?;
    let solved = solve(&rules);
    let mut all = Vec::new();
    let mut text = String::new();
    for r in &records {
        for t in classify_failure(r, &solved) {
            if !t.tags.is_empty() {
                let tags: Vec<String> = t.tags.iter().map(ToString::to_string).collect();
                let _ = writeln!(text, "game {} ply {}: {}", r.game_id, t.ply, tags.join(","));
            }
            all.push(t);
        }
    }
    let hist = failure_histogram(&all);
    let _ = writeln!(
        text,
        "{}",
        serde_json::to_string(&hist).expect("histogram serializes")
    );
    out_line(out, &text)?;
    Ok(EXIT_OK)
}
