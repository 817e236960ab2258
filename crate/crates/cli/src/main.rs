use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use optoslime_core::calibration::Calibration;
use optoslime_core::cascade::{estimate_cascade, Netlist};
use optoslime_core::config::scene_from_config;
use optoslime_core::experiments::{fault_sweep, rank_colours, reuse_campaign, FaultVariable};
use optoslime_core::gates::{build, truth_table, GateHarness, GateKind, Prepared};
use optoslime_core::record::{format_bits, parse_bits, replay, RunRecord, Script};

const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_MISMATCH: u8 = 1;

#[derive(Parser)]
#[command(name = "optoslime", version, about = "Simulate light-controlled slime-mould logic gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one gate and write its run record.
    Run(RunArgs),
    /// Run an experimental campaign and write its results table and summary.
    Campaign {
        #[arg(value_enum)]
        name: CampaignName,
        #[command(flatten)]
        args: CampaignArgs,
    },
    /// Re-simulate a run record and compare the summary.
    Replay {
        record: PathBuf,
        /// Where to write the re-simulated record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate bench area and delay for a NAND netlist (default: half adder).
    Cascade {
        #[arg(long)]
        netlist: Option<PathBuf>,
        /// Dish diameter, mm.
        #[arg(long, default_value_t = 90.0)]
        dish: f64,
        /// Median single-gate delay, ticks.
        #[arg(long, default_value_t = 2880.0)]
        gate_delay: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CampaignName {
    Phototaxis,
    Truth,
    Fault,
    Reuse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gate {
    Pnot,
    Pnand,
}

impl From<Gate> for GateKind {
    fn from(g: Gate) -> Self {
        match g {
            Gate::Pnot => GateKind::Pnot,
            Gate::Pnand => GateKind::Pnand,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Calibration TOML; defaults to the shipped calibration.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, env = "OPTOSLIME_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    gate: Gate,
    /// Input bits, e.g. `A=0,B=1`.
    #[arg(long = "in")]
    inputs: String,
    /// Budget per operation, ticks.
    #[arg(long)]
    budget: Option<u64>,
    /// Scene TOML replacing the built-in gate layout.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Input-change script: lines of `<tick> A=0,B=1`, optionally `end <tick>`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Electrode gap, mm.
    #[arg(long, default_value_t = 10.0)]
    gap: f64,
    /// Output-circuit supply, V.
    #[arg(long, default_value_t = 9.0)]
    supply: f64,
    /// Record path; defaults to `<out-dir>/run-<gate>-<seed>.ndjson`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long, default_value_t = 40)]
    trials: usize,
    #[arg(long, value_enum, default_value = "pnot")]
    gate: Gate,
    /// Fault variable: luminosity, gap or voltage.
    #[arg(long = "var", default_value = "gap")]
    variable: String,
    /// Comma-separated levels of the fault variable.
    #[arg(long, default_value = "10,20")]
    levels: String,
    #[arg(long)]
    budget: Option<u64>,
    /// Results directory; overrides `--out-dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

/// An error tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn config(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_CONFIG, error }
}

fn io(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_IO, error }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Run(args) => cmd_run(args).map(|_| 0),
        Command::Campaign { name, args } => cmd_campaign(name, args).map(|_| 0),
        Command::Replay { record, out } => cmd_replay(&record, out.as_deref()),
        Command::Cascade { netlist, dish, gate_delay } => cmd_cascade(netlist.as_deref(), dish, gate_delay).map(|_| 0),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(io)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(io)
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration, Failure> {
    let Some(path) = path else { return Ok(Calibration::default()) };
    let cal = Calibration::from_toml(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(config)?;
    let problems = cal.violations();
    if !problems.is_empty() {
        return Err(config(anyhow!("calibration {}: {}", path.display(), problems.join("; "))));
    }
    Ok(cal)
}

fn harness(gate: Gate, gap: f64, supply: f64, budget: Option<u64>, scene: Option<&Path>) -> Result<GateHarness, Failure> {
    if !(gap > 0.0) || !(supply > 0.0) {
        return Err(usage(anyhow!("--gap and --supply must be positive")));
    }
    let mut h = build(gate.into(), gap, supply);
    if let Some(path) = scene {
        h.scene = scene_from_config(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(config)?;
    }
    if let Some(b) = budget {
        h.budget = b;
    }
    let problems = h.problems();
    if !problems.is_empty() {
        return Err(config(anyhow!("gate layout: {}", problems.join("; "))));
    }
    Ok(h)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let inputs = parse_bits(&args.inputs).map_err(|e| usage(anyhow!("--in: {e}")))?;
    let cal = load_calibration(args.common.calibration.as_deref())?;
    let h = harness(args.gate, args.gap, args.supply, args.budget, args.scene.as_deref())?;
    let script = match &args.script {
        Some(p) => Some(Script::parse(&read(p)?).with_context(|| format!("in {}", p.display())).map_err(config)?),
        None => None,
    };
    let kind = h.gate_kind;
    let record = RunRecord::execute(h, &cal, &inputs, script, args.common.seed).map_err(|e| config(e.into()))?;
    let out = args.out.unwrap_or_else(|| args.common.out_dir.join(format!("run-{}-{}.ndjson", kind.as_str(), args.common.seed)));
    write(&out, &record.to_ndjson())?;
    let o = &record.summary.as_ref().expect("fresh records have a summary").outcome;
    println!(
        "{} {} seed {}: logic {} completed {} failed {} delay {} tick {} -> {}",
        kind.as_str(),
        format_bits(&inputs),
        args.common.seed,
        o.logic_output,
        o.completed,
        o.failed,
        o.propagation_delay.map_or("-".into(), |d| d.to_string()),
        o.tick,
        out.display()
    );
    Ok(())
}

fn cmd_campaign(name: CampaignName, args: CampaignArgs) -> Result<(), Failure> {
    let cal = load_calibration(args.common.calibration.as_deref())?;
    if args.trials == 0 {
        return Err(usage(anyhow!("--trials must be at least 1")));
    }
    let dir = args.out.clone().unwrap_or_else(|| args.common.out_dir.clone());
    let seed = args.common.seed;
    let started = Instant::now();
    let (stem, table, mut summary) = match name {
        CampaignName::Phototaxis => {
            let r = rank_colours(&cal, args.trials, seed).map_err(|e| config(e.into()))?;
            let mut s = String::new();
            s.push_str("rank  colour_nm  phobia_points\n");
            for (i, (nm, pts)) in r.points.iter().enumerate() {
                s.push_str(&format!("{:>4}  {:>9}  {:>13}\n", i + 1, nm, pts));
            }
            for p in &r.pairs {
                s.push_str(&format!("{} vs {}: A {} B {} neither {}\n", p.colour_a, p.colour_b, p.chose_a, p.chose_b, p.neither));
            }
            ("phototaxis", to_json(&r), s)
        }
        CampaignName::Truth => {
            let h = harness(args.gate, 10.0, 9.0, args.budget, None)?;
            let prepared = Prepared::new(h, cal).map_err(|e| config(e.into()))?;
            let t = truth_table(&prepared, args.trials, seed).map_err(|e| config(e.into()))?;
            let mut s = String::from("inputs  ideal  success_rate  failures  median_delay\n");
            for r in &t.rows {
                s.push_str(&format!(
                    "{:<6}  {:>5}  {:>12.3}  {:>8}  {:>12}\n",
                    format_bits(&r.inputs),
                    r.ideal,
                    r.success_rate,
                    r.failures,
                    r.median_delay.map_or("-".into(), |d| d.to_string())
                ));
            }
            ("truth", to_json(&t), s)
        }
        CampaignName::Fault => {
            let variable: FaultVariable = args.variable.parse().map_err(|e: optoslime_core::experiments::ExperimentError| usage(e.into()))?;
            let levels = args
                .levels
                .split(',')
                .map(|l| l.trim().parse::<f64>().with_context(|| format!("level `{l}`")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            let sweep = fault_sweep(&cal, variable, &levels, args.trials, seed).map_err(|e| config(e.into()))?;
            let mut s = String::from("level  gate   failure_rate  median_delay  mean_tubules\n");
            for l in &sweep {
                s.push_str(&format!(
                    "{:>5}  {:<5}  {:>12.3}  {:>12}  {:>12}\n",
                    l.level,
                    l.gate.as_str(),
                    l.failure_rate,
                    l.median_delay.map_or("-".into(), |d| d.to_string()),
                    l.mean_tubules.map_or("-".into(), |t| format!("{t:.3}"))
                ));
            }
            ("fault", to_json(&sweep), s)
        }
        CampaignName::Reuse => {
            let r = reuse_campaign(&cal, args.trials, seed).map_err(|e| config(e.into()))?;
            let fmt = |v: Option<f64>| v.map_or("-".into(), |d| d.to_string());
            let s = format!(
                "fresh median delay {}\nreset median delay {}\nwithdrawal within 120-360 ticks {:.3}\npnot re-reset stays at logic 0 {:.3}\n",
                fmt(r.fresh_median_delay),
                fmt(r.reset_median_delay),
                r.withdrawal_in_window,
                r.rereset_failure_rate
            );
            ("reuse", to_json(&r), s)
        }
    };
    summary.push_str(&format!("trials {} seed {} elapsed {:.1}s\n", args.trials, seed, started.elapsed().as_secs_f64()));
    write(&dir.join(format!("{stem}.json")), &table)?;
    write(&dir.join(format!("{stem}.txt")), &summary)?;
    print!("{summary}");
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialise");
    s.push('\n');
    s
}

fn cmd_replay(path: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let record = RunRecord::parse(&read(path)?).with_context(|| format!("in {}", path.display())).map_err(config)?;
    let r = replay(&record).map_err(|e| config(e.into()))?;
    if let Some(out) = out {
        write(out, &r.replayed.to_ndjson())?;
    }
    if r.matches() {
        println!("replay matches: {}", path.display());
        Ok(0)
    } else if r.recorded.is_none() {
        println!("record has no summary; replayed to tick {}", r.replayed.summary.as_ref().map_or(0, |s| s.outcome.tick));
        Ok(EXIT_MISMATCH)
    } else {
        println!("replay differs from the recorded summary: {}", path.display());
        Ok(EXIT_MISMATCH)
    }
}

fn cmd_cascade(netlist: Option<&Path>, dish: f64, gate_delay: f64) -> Result<(), Failure> {
    if !(dish > 0.0) || !(gate_delay >= 0.0) {
        return Err(usage(anyhow!("--dish must be positive and --gate-delay non-negative")));
    }
    let net = match netlist {
        Some(p) => Netlist::parse(&read(p)?).with_context(|| format!("in {}", p.display())).map_err(config)?,
        None => Netlist::half_adder(),
    };
    let e = estimate_cascade(&net, dish, gate_delay).map_err(|e| config(e.into()))?;
    let row: BTreeMap<&str, serde_json::Value> = [
        ("gates", e.gates.into()),
        ("depth", e.depth.into()),
        ("area_m2", e.area_m2.into()),
        ("delay_ticks", e.delay_ticks.into()),
        ("dish_mm", dish.into()),
    ]
    .into();
    println!("{}", serde_json::to_string(&row).expect("row serialises"));
    Ok(())
}
