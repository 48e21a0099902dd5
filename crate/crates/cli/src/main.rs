use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fifo_routing::equilibria::{
    enumerate_equilibria, is_ufr_equilibrium, sequential_equilibrium, worst_equilibrium,
    TieBreakPolicy, UfrVerdict,
};
use fifo_routing::extensions::{check_flow_feasible, split_capacities, state_to_flow};
use fifo_routing::instances::{
    limit_bound, pos_ratio, to_decimal, Mode, PosReport, DEFAULT_SIMULATION_CAP,
};
use fifo_routing::model::{ensure_valid, GameFile, StateFile};
use fifo_routing::optimum::{optimal_state, optimality_certificate};
use fifo_routing::{load, Error, Game, LoadingResult, State};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Value};

const DECIMALS: u32 = 6;

#[derive(Parser)]
#[command(
    name = "fiforoute",
    version,
    about = "Packet routing games with FIFO queues on linear multigraphs"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Load a state and report arrival times at every node.
    Load {
        game: PathBuf,
        state: PathBuf,
        /// Append the per-event trace as CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Build an equilibrium by sequential fastest-route choice.
    Eq {
        game: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Compute an optimal state with its certificate.
    Opt { game: PathBuf },
    /// Worst equilibrium makespan over optimal makespan.
    Poa { game: PathBuf },
    /// Rows of the lower-bound family table.
    Lowerbound(LowerboundArgs),
    /// List every equilibrium of a small game.
    Enumerate {
        game: PathBuf,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        state_budget: u64,
    },
    /// Check whether a state is an equilibrium; exit code 1 if not.
    CheckUfr {
        game: PathBuf,
        state: PathBuf,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        path_budget: u64,
    },
    /// Embed a state as a flow over time.
    Flow {
        game: PathBuf,
        state: PathBuf,
        /// Verify feasibility; exit code 1 on violation.
        #[arg(long)]
        check: bool,
    },
    /// Replace every edge of capacity c by c unit-capacity copies.
    Split { game: PathBuf },
}

#[derive(Args)]
struct PolicyArgs {
    /// greedy-queue, lowest-index, shortest-queue, seeded or seeded:<u64>.
    #[arg(long, default_value = "greedy-queue")]
    policy: String,
    /// Seed for `--policy seeded`.
    #[arg(long)]
    seed: Option<u64>,
}

impl PolicyArgs {
    fn resolve(&self) -> Result<TieBreakPolicy, Failure> {
        if self.policy == "seeded" {
            return Ok(TieBreakPolicy::Seeded(self.seed.unwrap_or(0)));
        }
        let policy: TieBreakPolicy = self.policy.parse().map_err(Failure::input)?;
        if self.seed.is_some() && !matches!(policy, TieBreakPolicy::Seeded(_)) {
            return Err(Failure::Input(
                "--seed only applies to the seeded policy".into(),
            ));
        }
        Ok(policy)
    }
}

#[derive(Args)]
struct LowerboundArgs {
    /// A single family parameter.
    #[arg(long, conflicts_with = "i_range", required_unless_present = "i_range",
          value_parser = clap::value_parser!(u64).range(1..))]
    i: Option<u64>,
    /// Inclusive range `a..b`.
    #[arg(long)]
    i_range: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Analytic)]
    mode: ModeArg,
    /// Largest player count simulated in simulate mode.
    #[arg(long, default_value_t = DEFAULT_SIMULATION_CAP, value_parser = clap::value_parser!(u64).range(1..))]
    cap: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Simulate,
    Analytic,
}

/// Why a command did not succeed, mapped to the exit code.
enum Failure {
    /// A checked property does not hold (exit 1).
    Verdict(String),
    /// Bad input or usage (exit 2).
    Input(String),
}

impl Failure {
    fn input(e: impl ToString) -> Self {
        Failure::Input(e.to_string())
    }

    fn core(e: Error) -> Self {
        match e {
            Error::OrderingViolated { .. } | Error::HorizonExceeded { .. } => {
                Failure::Verdict(e.to_string())
            }
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

fn read_game(path: &Path) -> Result<Game, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: GameFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let game = Game::from(file);
    ensure_valid(&game).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(game)
}

fn read_state(path: &Path, game: &Game) -> Result<State, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: StateFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let state = State::from(file);
    state
        .check(game)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(state)
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialize") + "\n"
}

fn paths_json(state: &State) -> Value {
    json!(StateFile::from(state).paths)
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn json_only(format: Format, command: &str) -> Result<(), Failure> {
    match format {
        Format::Json => Ok(()),
        Format::Csv => Err(Failure::Input(format!("`{command}` has no CSV output"))),
    }
}

fn arrivals_csv(out: &mut String, r: &LoadingResult) {
    let nodes = r.arrivals.len();
    let header: Vec<String> = (0..nodes).map(|j| format!("v_{j}")).collect();
    let _ = writeln!(out, "player,{}", header.join(","));
    for player in 0..r.completions.len() {
        let row: Vec<String> = r.arrivals.iter().map(|a| a[player].to_string()).collect();
        let _ = writeln!(out, "{},{}", player + 1, row.join(","));
    }
}

fn cmd_load(format: Format, game: &Path, state: &Path, trace: bool) -> Outcome {
    let game = read_game(game)?;
    let state = read_state(state, &game)?;
    let r = load(&game, &state).map_err(Failure::core)?;
    let mut out = match format {
        Format::Json => pretty(&json!({
            "arrivals": r.arrivals,
            "completions": r.completions,
            "makespan": r.makespan,
        })),
        Format::Csv => {
            let mut s = String::new();
            arrivals_csv(&mut s, &r);
            s
        }
    };
    if trace {
        let mut csv = Vec::new();
        r.write_trace_csv(&mut csv).map_err(Failure::input)?;
        out.push('\n');
        out.push_str(&String::from_utf8(csv).expect("trace is ASCII"));
    }
    Ok(out)
}

fn cmd_eq(format: Format, game: &Path, policy: &PolicyArgs) -> Outcome {
    let game = read_game(game)?;
    let policy = policy.resolve()?;
    let state = sequential_equilibrium(&game, policy).map_err(Failure::core)?;
    let r = load(&game, &state).map_err(Failure::core)?;
    Ok(match format {
        Format::Json => pretty(&json!({
            "policy": policy.to_string(),
            "paths": paths_json(&state),
            "completions": r.completions,
            "makespan": r.makespan,
        })),
        Format::Csv => {
            let mut s = String::from("player,path,completion\n");
            for (i, p) in state.paths.iter().enumerate() {
                let _ = writeln!(s, "{},\"{p}\",{}", i + 1, r.completions[i]);
            }
            s
        }
    })
}

/// Optimal plans need unit capacities; wider edges are split first.
fn unit_game(game: &Game) -> (Game, bool) {
    if game.graph.has_unit_capacities() {
        (game.clone(), false)
    } else {
        (split_capacities(game).0, true)
    }
}

fn cmd_opt(format: Format, game: &Path) -> Outcome {
    json_only(format, "opt")?;
    let (game, split) = unit_game(&read_game(game)?);
    let plan = optimal_state(&game).map_err(Failure::core)?;
    let verified = optimality_certificate(&plan, &game);
    let report = json!({
        "horizon": plan.horizon,
        "paths": plan.paths.iter().map(|p| &p.edge_indices).collect::<Vec<_>>(),
        "lengths": plan.lengths,
        "counts": plan.counts,
        "deltas": plan.deltas,
        "certificate": {
            "packets_before_horizon": plan.certificate.below,
            "packets_at_horizon": plan.certificate.at,
            "verified": verified.is_ok(),
        },
        "capacities_split": split,
        "state": paths_json(&plan.state),
    });
    match verified {
        Ok(()) => Ok(pretty(&report)),
        Err(v) => {
            print!("{}", pretty(&report));
            Err(Failure::Verdict(v.to_string()))
        }
    }
}

fn cmd_poa(format: Format, game: &Path) -> Outcome {
    let game = read_game(game)?;
    let state = worst_equilibrium(&game).map_err(Failure::core)?;
    let eq = load(&game, &state).map_err(Failure::core)?.makespan;
    let (unit, _) = unit_game(&game);
    let opt = optimal_state(&unit).map_err(Failure::core)?.horizon;
    let r = ratio(eq, opt);
    let decimal = to_decimal(&r, DECIMALS);
    Ok(match format {
        Format::Json => pretty(&json!({
            "worst_eq_makespan": eq,
            "opt_horizon": opt,
            "ratio": r.to_string(),
            "ratio_decimal": decimal,
        })),
        Format::Csv => {
            format!("worst_eq_makespan,opt_horizon,ratio,ratio_decimal\n{eq},{opt},{r},{decimal}\n")
        }
    })
}

fn parse_range(text: &str) -> Result<(u64, u64), Failure> {
    let bad = || Failure::Input(format!("expected `a..b` with 1 <= a <= b, got `{text}`"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a, b))
}

const LOWERBOUND_COLUMNS: &str =
    "i,k,l,n,eq_makespan,eq_source,opt_horizon,ratio_exact,ratio_decimal,limit_bound";

fn lowerbound_row(i: u64, mode: Mode, cap: u64) -> Result<(PosReport, BigRational), Error> {
    Ok((pos_ratio(i, mode, cap)?, limit_bound(i)?))
}

fn cmd_lowerbound(format: Format, args: &LowerboundArgs) -> Outcome {
    let (a, b) = match (&args.i, &args.i_range) {
        (Some(i), _) => (*i, *i),
        (None, Some(range)) => parse_range(range)?,
        (None, None) => unreachable!("clap requires one of --i, --i-range"),
    };
    let mode = match args.mode {
        ModeArg::Simulate => Mode::Simulate,
        ModeArg::Analytic => Mode::Analytic,
    };
    let rows: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = (a..=b)
            .map(|i| s.spawn(move || lowerbound_row(i, mode, args.cap)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut csv = format!("{LOWERBOUND_COLUMNS}\n");
    let mut json_rows = Vec::new();
    for row in rows {
        let (report, limit) = row.map_err(Failure::core)?;
        let p = &report.params;
        let decimal = to_decimal(&report.ratio, DECIMALS);
        let limit = to_decimal(&limit, DECIMALS);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            p.i,
            p.k,
            p.l,
            p.n,
            report.eq_makespan,
            report.source,
            report.opt_horizon,
            report.ratio,
            decimal,
            limit
        );
        json_rows.push(json!({
            "i": p.i,
            "k": p.k,
            "l": p.l,
            "n": p.n.to_string(),
            "eq_makespan": report.eq_makespan.to_string(),
            "eq_source": report.source.to_string(),
            "opt_horizon": report.opt_horizon.to_string(),
            "ratio_exact": report.ratio.to_string(),
            "ratio_decimal": decimal,
            "limit_bound": limit,
        }));
    }
    Ok(match format {
        Format::Csv => csv,
        Format::Json => pretty(&Value::Array(json_rows)),
    })
}

fn cmd_enumerate(format: Format, game: &Path, budget: u64) -> Outcome {
    let game = read_game(game)?;
    let all = enumerate_equilibria(&game, budget).map_err(Failure::core)?;
    let mut rows = Vec::new();
    for s in &all {
        rows.push((s, load(&game, s).map_err(Failure::core)?.makespan));
    }
    Ok(match format {
        Format::Json => pretty(&json!({
            "count": all.len(),
            "equilibria": rows
                .iter()
                .map(|(s, m)| json!({"paths": paths_json(s), "makespan": m}))
                .collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut out = String::from("index,makespan,state\n");
            for (k, (s, m)) in rows.iter().enumerate() {
                let _ = writeln!(out, "{},{m},\"{s}\"", k + 1);
            }
            out
        }
    })
}

fn cmd_check_ufr(format: Format, game: &Path, state: &Path, budget: u64) -> Outcome {
    json_only(format, "check-ufr")?;
    let game = read_game(game)?;
    let state = read_state(state, &game)?;
    match is_ufr_equilibrium(&game, &state, budget).map_err(Failure::core)? {
        UfrVerdict::Equilibrium => Ok(pretty(&json!({"equilibrium": true}))),
        UfrVerdict::Witness(w) => {
            print!(
                "{}",
                pretty(&json!({
                    "equilibrium": false,
                    "witness": {
                        "player": w.player + 1,
                        "node": w.node,
                        "deviation": w.deviation.edge_indices,
                        "original_arrival": w.original_arrival,
                        "improved_arrival": w.improved_arrival,
                    },
                }))
            );
            Err(Failure::Verdict(w.to_string()))
        }
    }
}

fn cmd_flow(format: Format, game: &Path, state: &Path, check: bool) -> Outcome {
    json_only(format, "flow")?;
    let game = read_game(game)?;
    let state = read_state(state, &game)?;
    let r = load(&game, &state).map_err(Failure::core)?;
    let flow = state_to_flow(&game, &r);
    let out = flow.to_json() + "\n";
    if !check {
        return Ok(out);
    }
    match check_flow_feasible(&game.graph, &flow, Some(game.n as u64)) {
        Ok(value) => {
            eprintln!("feasible, flow value {value}");
            Ok(out)
        }
        Err(violations) => {
            print!("{out}");
            let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Failure::Verdict(lines.join("\n")))
        }
    }
}

fn cmd_split(format: Format, game: &Path) -> Outcome {
    json_only(format, "split")?;
    let game = read_game(game)?;
    let (split, map) = split_capacities(&game);
    let copies: Vec<Vec<[usize; 2]>> = game
        .graph
        .layers()
        .iter()
        .map(|layer| {
            layer
                .iter()
                .map(|e| {
                    let r = map.copies(e.layer, e.index).expect("every edge is mapped");
                    [r.start, r.end - 1]
                })
                .collect()
        })
        .collect();
    Ok(pretty(&json!({
        "game": GameFile::from(&split),
        "copies": copies,
    })))
}

fn run(cli: &Cli) -> Outcome {
    let format = cli.format;
    match &cli.command {
        Command::Load { game, state, trace } => cmd_load(format, game, state, *trace),
        Command::Eq { game, policy } => cmd_eq(format, game, policy),
        Command::Opt { game } => cmd_opt(format, game),
        Command::Poa { game } => cmd_poa(format, game),
        Command::Lowerbound(args) => cmd_lowerbound(format, args),
        Command::Enumerate { game, state_budget } => cmd_enumerate(format, game, *state_budget),
        Command::CheckUfr {
            game,
            state,
            path_budget,
        } => cmd_check_ufr(format, game, state, *path_budget),
        Command::Flow { game, state, check } => cmd_flow(format, game, state, *check),
        Command::Split { game } => cmd_split(format, game),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            // a closed pipe is not worth a panic
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Verdict(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
