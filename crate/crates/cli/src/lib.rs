//! Front end for the `icbd` binary: config parsing, command orchestration and
//! CSV output. `run` is the whole program minus process exit.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use icbd::Dims;

use crate::commands::VerifyOptions;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "icbd", version, about = "Interference-cancellation based detection experiments")]
pub struct Cli {
    /// Run configuration file; built-in defaults are used without it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// CSV destination; overrides the config. `-` writes to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate thresholds and sweep PD over the eSNR grid.
    Simulate,
    /// Analytic PD and thresholds over the eSNR grid.
    Theory,
    /// Monte Carlo thresholds with a fresh-trial false-alarm check.
    Calibrate {
        /// Skip the independent false-alarm re-measurement.
        #[arg(long)]
        no_recheck: bool,
    },
    /// Numerical checks of the cancellation and equivalence identities.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// cancellation, equivalence, relations or all.
    #[arg(long, default_value = "all")]
    pub identity: String,
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = icbd::verify::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// N,L,p,q used for every selected group.
    #[arg(long, value_name = "N,L,P,Q", value_parser = parse_dims)]
    pub dims: Option<Dims>,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [n, l, p, q] => Ok(Dims { n, l, p, q }),
        _ => Err(format!("expected N,L,p,q, got `{s}`")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.master_seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.mc.workers = workers;
    }
    if let Some(out) = &cli.out {
        cfg.output.csv = Some(out.clone());
    }
    Ok(cfg)
}

fn open_output<'a>(path: Option<&PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let file = File::create(p).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        _ => Ok(Box::new(stdout)),
    }
}

/// Executes a parsed command line. Console summaries go to `log`, CSV to the
/// configured file or `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, log: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Verify(args) => {
            let groups = match args.identity.as_str() {
                "all" => icbd::verify::GROUPS.iter().map(|g| g.to_string()).collect(),
                one => vec![one.to_string()],
            };
            let opts = VerifyOptions {
                groups,
                dims: args.dims,
                instances: args.instances,
                tolerance: args.tolerance,
                seed: cli.seed.unwrap_or(VerifyOptions::default().seed),
            };
            if let Some(w) = cli.workers.filter(|&w| w > 0) {
                // identity checks use the global pool
                let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
            }
            let mut sink: Box<dyn Write> = match &cli.out {
                Some(_) => open_output(cli.out.as_ref(), stdout)?,
                None => Box::new(std::io::sink()),
            };
            let result = commands::verify_identities(&opts, &mut *sink, log);
            sink.flush()?;
            result.map(|_| ())
        }
        cmd => {
            let cfg = load_config(cli)?;
            let mut out = open_output(cfg.output.csv.as_ref(), stdout)?;
            match cmd {
                Command::Simulate => commands::simulate(&cfg, &mut *out, log).map(|_| ())?,
                Command::Theory => commands::theory(&cfg, &mut *out, log).map(|_| ())?,
                Command::Calibrate { no_recheck } => commands::calibrate(&cfg, !no_recheck, &mut *out, log).map(|_| ())?,
                Command::Verify(_) => unreachable!(),
            }
            out.flush()?;
            Ok(())
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_flag() {
        assert_eq!(parse_dims("12, 16,2,3").unwrap(), Dims { n: 12, l: 16, p: 2, q: 3 });
        assert!(parse_dims("12,16,2").is_err());
        assert!(parse_dims("a,1,1,1").is_err());
    }

    #[test]
    fn argument_errors_exit_one_and_help_exits_zero() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["icbd", "frobnicate"], &mut out, &mut err), 1);
        assert_eq!(run(["icbd", "--seed", "x", "theory"], &mut out, &mut err), 1);
        assert_eq!(run(["icbd", "--help"], &mut out, &mut err), 0);
        assert!(String::from_utf8_lossy(&out).contains("simulate"));
    }

    #[test]
    fn theory_to_stdout_with_seed_override() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("t.cfg");
        std::fs::write(&cfg, "[mc]\nesnr_db = 0, 10\ndetectors = icbd-glrt-he\n").unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let args = ["icbd", "--config", cfg.to_str().unwrap(), "--seed", "77", "theory"];
        assert_eq!(run(args, &mut out, &mut err), 0, "{}", String::from_utf8_lossy(&err));
        let csv = String::from_utf8(out).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("esnr_db,detector,pd_theory,threshold_theory"));
        assert!(String::from_utf8_lossy(&err).contains("seed=77"));
    }

    #[test]
    fn malformed_config_names_key_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, "[mc]\npfa = 0.001\ntrials_pd = lots\n").unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["icbd", "--config", cfg.to_str().unwrap(), "simulate"], &mut out, &mut err), 1);
        let msg = String::from_utf8_lossy(&err);
        assert!(msg.contains("line 3") && msg.contains("trials_pd"), "{msg}");
    }
}
