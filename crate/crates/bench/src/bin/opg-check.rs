use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mvostm::history::{check_opacity, History, Verdict};

/// Checks a recorded history for opacity. Prints a serialization witness and
/// exits 0 when opaque; prints the offending cycle or violation and exits 1
/// otherwise.
#[derive(Parser, Debug)]
#[command(name = "opg-check", version)]
struct Args {
    /// Tab-separated history file, one event per line.
    history: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.history) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("opg-check: {}: {e}", args.history.display());
            return ExitCode::from(2);
        }
    };
    let history = match History::parse(&text) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("opg-check: {}: {e}", args.history.display());
            return ExitCode::from(2);
        }
    };
    match check_opacity(&history) {
        Verdict::Opaque(w) => {
            println!("OPAQUE");
            let order: Vec<String> = w.order.iter().map(|t| format!("T{t}")).collect();
            println!("order: {}", order.join(" "));
            for key in w.version_order.keys() {
                let writers: Vec<String> = w.version_order.writers(key).iter().map(|t| format!("T{t}")).collect();
                println!("key {key}: {}", writers.join(" << "));
            }
            print!("{}", w.serial);
            ExitCode::SUCCESS
        }
        Verdict::NotOpaque(cycle) => {
            println!("NOT_OPAQUE");
            for e in &cycle.edges {
                println!("{e}");
            }
            ExitCode::FAILURE
        }
        Verdict::Invalid(v) => {
            println!("INVALID");
            println!("{v}");
            ExitCode::FAILURE
        }
    }
}
