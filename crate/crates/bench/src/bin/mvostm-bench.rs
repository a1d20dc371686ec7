use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mvostm::history::{check_opacity, Verdict};
use mvostm::Policy;
use mvostm_bench::{
    aggregate, report, report_aggregates, run_with_watchdog, sweep_k, watchdog_from_env, Format, Mix, RunOptions,
    WorkloadSpec,
};

/// Runs a seeded transactional workload and prints one report row per run.
#[derive(Parser, Debug)]
#[command(name = "mvostm-bench", version)]
struct Args {
    /// Start from a named workload: w1, w2, w3, c1 or c2.
    #[arg(long)]
    preset: Option<String>,
    /// Lookup, insert and delete percentages, e.g. 90,8,2.
    #[arg(long)]
    mix: Option<Mix>,
    #[arg(long)]
    threads: Option<usize>,
    /// Transactions per thread.
    #[arg(long)]
    txns: Option<usize>,
    /// Operations per transaction.
    #[arg(long)]
    ops: Option<usize>,
    /// Keys are drawn uniformly from 1..=KEYS.
    #[arg(long)]
    keys: Option<u64>,
    #[arg(long)]
    buckets: Option<usize>,
    /// unbounded, gc or k:<K>.
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Repeat with seeds seed..seed+SEEDS and also print a mean ± stdev row.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Run once per K (comma separated; `inf` for unbounded) instead of --policy.
    #[arg(long, value_delimiter = ',')]
    sweep_k: Option<Vec<String>>,
    /// Re-run aborted transactions until they commit.
    #[arg(long)]
    retry: bool,
    /// Capture the history and check it for opacity.
    #[arg(long)]
    record: bool,
    #[arg(long, default_value_t = 1 << 20)]
    history_cap: usize,
    /// Write the captured history to this file.
    #[arg(long, requires = "record")]
    history_out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

fn build_spec(args: &Args) -> Result<WorkloadSpec, String> {
    let mut spec = match &args.preset {
        Some(name) => WorkloadSpec::preset(name).map_err(|e| e.to_string())?,
        None => WorkloadSpec::default(),
    };
    if let Some(m) = args.mix {
        spec.mix = m;
    }
    if let Some(v) = args.threads {
        spec.threads = v;
    }
    if let Some(v) = args.txns {
        spec.txns_per_thread = v;
    }
    if let Some(v) = args.ops {
        spec.ops_per_txn = v;
    }
    if let Some(v) = args.keys {
        spec.key_space = v;
    }
    if let Some(v) = args.buckets {
        spec.buckets = v;
    }
    if let Some(p) = args.policy {
        spec.policy = p;
    }
    spec.seed = args.seed;
    spec.retry = args.retry;
    spec.record_history = args.record;
    spec.history_cap = args.history_cap;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn parse_ks(values: &[String]) -> Result<Vec<Option<usize>>, String> {
    values
        .iter()
        .map(|v| match v.as_str() {
            "inf" | "∞" => Ok(None),
            k => match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(Some(k)),
                _ => Err(format!("bad K {k:?}")),
            },
        })
        .collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match real_main(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mvostm-bench: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main(args: &Args) -> Result<ExitCode, String> {
    let spec = build_spec(args)?;
    if args.seeds == 0 {
        return Err("--seeds must be at least 1".into());
    }
    if let Some(ks) = &args.sweep_k {
        let ks = parse_ks(ks)?;
        let mut rows = Vec::new();
        for seed in args.seed..args.seed + args.seeds {
            rows.extend(sweep_k(&WorkloadSpec { seed, ..spec.clone() }, &ks).map_err(|e| e.to_string())?);
        }
        print!("{}", report(&rows, args.format).map_err(|e| e.to_string())?);
        return Ok(ExitCode::SUCCESS);
    }

    let limit = watchdog_from_env();
    let mut rows = Vec::new();
    let mut opaque = true;
    for seed in args.seed..args.seed + args.seeds {
        let outcome = run_with_watchdog(&WorkloadSpec { seed, ..spec.clone() }, &RunOptions::default(), limit)
            .map_err(|e| e.to_string())?;
        if let Some(history) = &outcome.history {
            if let Some(path) = &args.history_out {
                std::fs::write(path, history.to_text()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let truncated = if outcome.history_truncated { " (truncated)" } else { "" };
            match check_opacity(history) {
                Verdict::Opaque(_) => eprintln!("seed {seed}: history of {} events{truncated} is opaque", history.len()),
                Verdict::NotOpaque(cycle) => {
                    opaque = false;
                    eprintln!("seed {seed}: history{truncated} is not opaque: {cycle}");
                }
                Verdict::Invalid(v) => {
                    opaque = false;
                    eprintln!("seed {seed}: history{truncated} is invalid: {v}");
                }
            }
        }
        rows.push(outcome.report);
    }
    print!("{}", report(&rows, args.format).map_err(|e| e.to_string())?);
    if rows.len() > 1 {
        let agg = aggregate(&rows).map_err(|e| e.to_string())?;
        print!("{}", report_aggregates(&[agg], args.format).map_err(|e| e.to_string())?);
    }
    Ok(if opaque { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
