use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use acabe_cli::bench::TimesConfig;
use acabe_cli::commands::{self, DemoArgs, ReplayArgs};
use acabe_cli::envelope::Field;
use clap::{Parser, Subcommand};

/// Accountable multi-authority CP-ABE: scenarios, artifact checks, benchmarks.
///
/// Exit codes: 0 success, 2 usage, 3 verifier rejected, 4 protocol phase failed.
#[derive(Parser)]
#[command(name = "acabe", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a sharing scenario (built-in `gamefi` or a JSON file).
    Demo {
        scenario: String,
        /// Only run this user.
        #[arg(long = "as")]
        as_user: Option<String>,
        /// dishonest_authority, cross_gid_colluders, impersonator or key_discloser.
        #[arg(long)]
        adversary: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace output; defaults to `<scenario>.trace.jsonl`.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the ledger journal here.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Emit benchmark CSV on stdout.
    Bench {
        #[command(subcommand)]
        what: BenchCmd,
    },
    /// Run both verifiers on a key-submission envelope.
    Verify { file: PathBuf },
    /// Write an honest key-submission envelope.
    Issue {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "female@AUTH3")]
        attr: String,
        #[arg(long, default_value = "gid-1")]
        gid: String,
        #[arg(long, default_value = "player2")]
        user: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Flip one bit of one field of an envelope.
    Tamper {
        file: PathBuf,
        #[arg(long)]
        field: Field,
        /// Lowest bit index to try.
        #[arg(long, default_value_t = 0)]
        bit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ledger journal tools.
    Journal {
        #[command(subcommand)]
        what: JournalCmd,
    },
    /// Regenerate a scenario trace and compare it with a recorded one.
    Replay {
        trace: PathBuf,
        scenario: String,
        #[arg(long = "as")]
        as_user: Option<String>,
        #[arg(long)]
        adversary: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Ciphertext, encrypted-key and proof sizes.
    Sizes {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_attrs: u64,
        #[arg(long, default_value_t = 10)]
        step: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Issuance timings and the hybrid encryption grid.
    Times {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_attrs: u64,
        #[arg(long)]
        payload_mb: f64,
        #[arg(long, default_value_t = 10)]
        step: usize,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum JournalCmd {
    /// Replay a journal, checking every recorded outcome.
    Replay { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let res = match cli.cmd {
        Cmd::Demo { scenario, as_user, adversary, seed, trace, journal } => {
            commands::demo(&DemoArgs { target: scenario, as_user, adversaries: adversary, seed, trace, journal }, &mut out)
        }
        Cmd::Bench { what: BenchCmd::Sizes { max_attrs, step, seed } } => commands::bench_sizes(max_attrs as usize, step, seed, &mut out),
        Cmd::Bench { what: BenchCmd::Times { max_attrs, payload_mb, step, trials, seed } } => {
            commands::bench_times(&TimesConfig { max_attrs: max_attrs as usize, payload_mb, step, trials, seed }, &mut out)
        }
        Cmd::Verify { file } => commands::verify(&file, &mut out),
        Cmd::Issue { out: dest, attr, gid, user, seed } => commands::issue(&dest, &attr, &gid, &user, seed, &mut out),
        Cmd::Tamper { file, field, bit, out: dest } => commands::tamper_file(&file, field, bit, &dest, &mut out),
        Cmd::Journal { what: JournalCmd::Replay { file } } => commands::journal_replay(&file, &mut out),
        Cmd::Replay { trace, scenario, as_user, adversary, seed } => {
            commands::replay_trace(&ReplayArgs { trace, target: scenario, as_user, adversaries: adversary, seed }, &mut out)
        }
    };
    let _ = out.flush();
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::INTERNAL)
        }
    }
}
