//! `swipt` command line: run scenarios, print link budgets, sweep BER.
//!
//! Exit codes: 0 success, 1 scenario parse/validation failure, 2 I/O or
//! usage failure. Every failure prints one line on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::codec::ber_estimate;
use crate::rf_link::{
    dynamic_range_simplified, eirp, fspl, leakage_power, reflected_power_wired, Frequency, Gain, PowerLevel,
};
use crate::sim::{self, Scenario, ScenarioError};

/// Environment variable overriding the default output directory of `run`.
pub const OUTPUT_DIR_ENV: &str = "SWIPT_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "swipt", version, about = "Backscatter authentication simulator for SWIPT IoT nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Print a summary on stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and run a scenario file or shipped preset.
    Run {
        /// Preset name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Report file (json) or directory (csv).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print leakage, wired reflection, dynamic range, FSPL and EIRP.
    Linkbudget {
        #[arg(long, allow_hyphen_values = true)]
        power_dbm: f64,
        #[arg(long)]
        isolation_db: f64,
        #[arg(long, default_value_t = 0.0)]
        forward_loss_db: f64,
        #[arg(long, allow_hyphen_values = true)]
        s11_db: f64,
        #[arg(long)]
        distance_m: f64,
        #[arg(long, default_value_t = 868.0)]
        freq_mhz: f64,
        /// Transmit antenna gain, used for EIRP.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        gain_dbi: f64,
    },
    /// Monte Carlo bit-error sweep as CSV (delta_p_db,ber,stderr).
    Ber {
        /// Comma separated dynamic ranges.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        delta_p_db: Vec<f64>,
        #[arg(long)]
        sigma_db: f64,
        /// Bits simulated per point.
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub verbosity: u8,
}

/// Loads a preset by name, otherwise a file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if !Path::new(name_or_path).exists() {
        if let Some(s) = sim::preset_source(name_or_path) {
            return Scenario::from_json_str(s);
        }
    }
    Scenario::load(name_or_path)
}

fn default_output(name: &str, seed: u64, format: Format) -> PathBuf {
    let dir = std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
    match format {
        Format::Json => dir.join(format!("{name}-{seed}.json")),
        Format::Csv => dir.join(format!("{name}-{seed}")),
    }
}

pub fn cmd_run(cfg: &RunConfig, err: &mut dyn Write) -> i32 {
    let mut scenario = match load_scenario(&cfg.scenario) {
        Ok(s) => s,
        Err(e @ ScenarioError::Io { .. }) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_IO;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INVALID;
        }
    };
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let report = match sim::run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INVALID;
        }
    };
    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| default_output(&scenario.name, scenario.seed, cfg.format));
    let written = match cfg.format {
        Format::Json => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                let _ = std::fs::create_dir_all(parent);
            }
            std::fs::write(&path, report.to_json())
        }
        Format::Csv => report.write_csv_dir(&path),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
        return EXIT_IO;
    }
    if cfg.verbosity > 0 {
        let _ = writeln!(
            err,
            "{}: {} events, {} auth windows, {} uplinks -> {}",
            scenario.name,
            report.total_events(),
            report.auth.len(),
            report.uplinks.len(),
            path.display()
        );
    }
    EXIT_OK
}

pub struct LinkBudgetArgs {
    pub power_dbm: f64,
    pub isolation_db: f64,
    pub forward_loss_db: f64,
    pub s11_db: f64,
    pub distance_m: f64,
    pub freq_mhz: f64,
    pub gain_dbi: f64,
}

pub fn cmd_linkbudget(a: &LinkBudgetArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let values = [a.power_dbm, a.isolation_db, a.forward_loss_db, a.s11_db, a.distance_m, a.freq_mhz, a.gain_dbi];
    if values.iter().any(|v| !v.is_finite()) {
        let _ = writeln!(err, "usage: all link budget arguments must be finite numbers");
        return EXIT_IO;
    }
    let path_loss = Frequency::mhz(a.freq_mhz).and_then(|f| fspl(f, a.distance_m));
    let path_loss = match path_loss {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "usage: {e}");
            return EXIT_IO;
        }
    };
    let p = PowerLevel::dbm(a.power_dbm);
    let leak = leakage_power(p, Gain::db(a.isolation_db));
    let refl = reflected_power_wired(p, Gain::db(a.forward_loss_db), Gain::db(a.s11_db));
    let dp = dynamic_range_simplified(refl, leak);
    let table = format!(
        "quantity  value\nP_leak    {:+.1} dBm\nP_refl    {:+.1} dBm\ndelta_P   {:.1} dB\nFSPL      {:.1} dB\nEIRP      {:+.1} dBm\n",
        leak.value(),
        refl.value(),
        dp.value(),
        path_loss.value(),
        eirp(p, Gain::db(a.gain_dbi)).value(),
    );
    match out.write_all(table.as_bytes()) {
        Ok(()) => EXIT_OK,
        Err(_) => EXIT_IO,
    }
}

pub fn cmd_ber(
    delta_p_db: &[f64],
    sigma_db: f64,
    trials: u64,
    seed: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    if trials == 0 {
        let _ = writeln!(err, "usage: --trials must be > 0");
        return EXIT_IO;
    }
    if !(sigma_db.is_finite() && sigma_db >= 0.0) || delta_p_db.iter().any(|d| !d.is_finite()) {
        let _ = writeln!(err, "usage: sigma and delta_p values must be finite, sigma >= 0");
        return EXIT_IO;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut rows = || -> Result<(), csv::Error> {
        w.write_record(["delta_p_db", "ber", "stderr"])?;
        for (i, d) in delta_p_db.iter().enumerate() {
            // Independent stream per point, still a pure function of seed.
            let est = ber_estimate(*d, sigma_db, trials, seed.wrapping_add(i as u64));
            w.write_record([d.to_string(), est.ber.to_string(), est.stderr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    match rows() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
    }
}

/// Parses `args` (program name first) and dispatches.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return EXIT_IO;
            }
            let _ = write!(out, "{rendered}");
            return EXIT_OK;
        }
    };
    match cli.command {
        Command::Run { scenario, seed, output, format } => cmd_run(
            &RunConfig { scenario, seed, output, format, verbosity: cli.verbose },
            err,
        ),
        Command::Linkbudget { power_dbm, isolation_db, forward_loss_db, s11_db, distance_m, freq_mhz, gain_dbi } => {
            cmd_linkbudget(
                &LinkBudgetArgs { power_dbm, isolation_db, forward_loss_db, s11_db, distance_m, freq_mhz, gain_dbi },
                out,
                err,
            )
        }
        Command::Ber { delta_p_db, sigma_db, trials, seed, output } => match output {
            None => cmd_ber(&delta_p_db, sigma_db, trials, seed, out, err),
            Some(path) => match std::fs::File::create(&path) {
                Ok(mut f) => cmd_ber(&delta_p_db, sigma_db, trials, seed, &mut f, err),
                Err(e) => {
                    let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
                    EXIT_IO
                }
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with_args(std::iter::once("swipt").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn linkbudget_wired() {
        let (code, out, _) = call(&[
            "linkbudget", "--power-dbm", "-10", "--isolation-db", "20", "--forward-loss-db", "0.8",
            "--s11-db", "-0.6", "--distance-m", "1.61",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("-30.0 dBm") && out.contains("-12.2 dBm") && out.contains("17.8 dB"), "{out}");
    }

    #[test]
    fn linkbudget_wireless() {
        let (code, out, _) = call(&[
            "linkbudget", "--power-dbm", "15", "--isolation-db", "20", "--s11-db", "-0.6",
            "--distance-m", "1.61", "--freq-mhz", "868", "--gain-dbi", "9.2",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("-5.0 dBm") && out.contains("35.4 dB") && out.contains("+24.2 dBm"), "{out}");
    }

    #[test]
    fn linkbudget_usage_errors() {
        let (code, _, err) = call(&[
            "linkbudget", "--power-dbm", "15", "--isolation-db", "20", "--s11-db", "-0.6", "--distance-m", "0",
        ]);
        assert_eq!(code, EXIT_IO);
        assert_eq!(err.lines().count(), 1, "{err}");
        let (code, _, _) = call(&["linkbudget", "--power-dbm", "15"]);
        assert_eq!(code, EXIT_IO);
    }

    #[test]
    fn ber_rows() {
        let (code, out, _) = call(&["ber", "--delta-p-db", "0,16.6", "--sigma-db", "0.5", "--trials", "20000"]);
        assert_eq!(code, 0);
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines[0], "delta_p_db,ber,stderr");
        let zero: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert!((zero[1] - 0.5).abs() < 0.02, "{out}");
        assert!(lines[2].starts_with("16.6,0,"), "{out}");
        assert_eq!(call(&["ber", "--delta-p-db", "1", "--sigma-db", "0.5", "--trials", "0"]).0, EXIT_IO);
    }

    #[test]
    fn run_reports_missing_file_as_io() {
        let (code, _, err) = call(&["run", "--scenario", "/nonexistent/x.json"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.starts_with("error: cannot read scenario"));
    }
}
