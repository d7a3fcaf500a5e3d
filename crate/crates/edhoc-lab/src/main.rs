use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use edhoc_lab::environment::{
    explore, schedule_from_jsonl, schedule_to_jsonl, seed_from_env, session_action, setup_actions,
    trace_from_jsonl, trace_to_jsonl, Action, Bounds, World,
};
use edhoc_lab::properties::{check_all, exit_code, Lemma, Verdict};
use edhoc_lab::roles::MethodPair;
use edhoc_lab::scenarios::{self, Options, SCENARIOS};

#[derive(Parser)]
#[command(name = "edhoc-lab", about = "Symbolic EDHOC runs, attacks and lemma checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one honest handshake and check the four lemmas.
    Handshake {
        #[arg(long)]
        method: MethodPair,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a named scenario and compare against its expected table.
    Scenario {
        /// One of: honest, unintended-peer, pfs, sk-independence, replay-m3,
        /// reveal-before, negotiation.
        name: String,
        #[arg(long, default_value = "sig-sig")]
        method: MethodPair,
        #[arg(long)]
        mitigation: bool,
        /// Leave A's key secret in unintended-peer.
        #[arg(long)]
        no_compromise: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Random adversarial schedules, checked against the four lemmas.
    Explore {
        /// A method pair, or "all".
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 3)]
        max_sessions: usize,
        #[arg(long, default_value_t = 40)]
        max_steps: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Where to write schedules of failing runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a recorded trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        lemma: Vec<Lemma>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        json: bool,
    },
    /// Replay a schedule, print the verdicts, optionally save the trace.
    Replay {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        lemma: Vec<Lemma>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        json: bool,
    },
}

type Res = Result<i32, Box<dyn std::error::Error>>;

fn print_verdicts(vs: &[Verdict], json: bool) {
    for v in vs {
        if json {
            println!("{}", v.to_json());
        } else {
            println!("{v}");
        }
    }
}

fn write(path: &Option<PathBuf>, text: String) -> Result<(), std::io::Error> {
    match path {
        Some(p) => fs::write(p, text),
        None => Ok(()),
    }
}

fn lemmas(given: Vec<Lemma>) -> Vec<Lemma> {
    if given.is_empty() {
        Lemma::CORE.to_vec()
    } else {
        given
    }
}

fn handshake(pair: MethodPair, seed: u64, trace: Option<PathBuf>, schedule: Option<PathBuf>, json: bool) -> Res {
    let mut w = World::default();
    w.apply(Action::Seed { seed })?;
    for a in setup_actions(pair, &["A", "B"]) {
        w.apply(a)?;
    }
    w.apply(session_action(pair, "A", "B", false))?;
    for m in 0..3 {
        w.apply(Action::Deliver { msg: m })?;
    }
    w.deduce_committed();
    write(&trace, trace_to_jsonl(&w.trace))?;
    write(&schedule, schedule_to_jsonl(&w.schedule))?;
    let vs = check_all(&w.trace, &Lemma::CORE, Bounds::default())?;
    print_verdicts(&vs, json);
    Ok(exit_code(&vs))
}

fn run_explore(method: &str, first: u64, n: u64, bounds: Bounds, out: Option<PathBuf>) -> Res {
    let pairs: Vec<MethodPair> = if method.eq_ignore_ascii_case("all") {
        MethodPair::ALL.to_vec()
    } else {
        vec![method.parse()?]
    };
    let mut failed = 0;
    for pair in pairs {
        let t = Instant::now();
        let runs = explore(pair, first, n, bounds);
        let (mut commits, mut fails) = (0, 0);
        for r in &runs {
            commits += r.trace.iter().filter(|e| e.event.kind() == "CommitI").count();
            let vs = check_all(&r.trace, &Lemma::CORE, bounds)?;
            for v in vs.iter().filter(|v| !v.passed()) {
                fails += 1;
                println!("  seed {} {v}", r.seed);
                if let Some(dir) = &out {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join(format!("{pair}-{}.schedule.jsonl", r.seed)), schedule_to_jsonl(&r.schedule))?;
                }
            }
        }
        println!(
            "{pair:10} seeds={n} commits={commits} failures={fails} time={:.1}s",
            t.elapsed().as_secs_f64()
        );
        failed += fails;
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

fn run(cli: Cli) -> Res {
    match cli.cmd {
        Cmd::Handshake { method, seed, trace, schedule, json } => {
            handshake(method, seed.unwrap_or_else(|| seed_from_env(0)), trace, schedule, json)
        }
        Cmd::Scenario { name, method, mitigation, no_compromise, seed, trace, schedule } => {
            if !SCENARIOS.iter().any(|(n, _)| *n == name) {
                eprintln!("unknown scenario {name}; known:");
                for (n, d) in SCENARIOS {
                    eprintln!("  {n:16} {d}");
                }
                return Ok(2);
            }
            let opts = Options {
                pair: method,
                mitigation,
                compromise: !no_compromise,
                seed: seed.unwrap_or_else(|| seed_from_env(0)),
            };
            let r = scenarios::run(&name, opts)?;
            write(&trace, trace_to_jsonl(&r.trace))?;
            write(&schedule, schedule_to_jsonl(&r.schedule))?;
            print!("{r}");
            Ok(r.exit_code())
        }
        Cmd::Explore { method, seeds, seed, max_sessions, max_steps, depth, out } => {
            let bounds = Bounds { max_sessions, max_steps, depth };
            run_explore(&method, seed.unwrap_or_else(|| seed_from_env(0)), seeds, bounds, out)
        }
        Cmd::Check { trace, lemma, depth, json } => {
            let tr = trace_from_jsonl(&fs::read_to_string(trace)?)?;
            let vs = check_all(&tr, &lemmas(lemma), Bounds { depth, ..Bounds::default() })?;
            print_verdicts(&vs, json);
            Ok(exit_code(&vs))
        }
        Cmd::Replay { schedule, trace, lemma, depth, json } => {
            let actions = schedule_from_jsonl(&fs::read_to_string(schedule)?)?;
            let w = World::replay(&actions, depth).map_err(|(i, e)| format!("schedule step {i}: {e}"))?;
            write(&trace, trace_to_jsonl(&w.trace))?;
            let vs = check_all(&w.trace, &lemmas(lemma), Bounds { depth, ..Bounds::default() })?;
            print_verdicts(&vs, json);
            Ok(exit_code(&vs))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
