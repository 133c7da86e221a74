use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use cds_contagion::harness::{self, stream_rng, Cell, Stream, SystemConfig};
use cds_contagion::market::Calibration;
use cds_contagion::metrics::{Arm, SEVERITY_HEADER};
use cds_contagion::netgen::{
    generate_topology, measure_concentration, measure_denseness, tune_concentration, GrowthParams,
};
use cds_contagion::Error;

#[derive(Parser)]
#[command(
    name = "contagion",
    version,
    about = "Interbank contagion with CDS risk transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the shock amplitude and print diagnostics.
    Calibrate(Common),
    /// Run one (gamma, arm, f) cell and write its distribution of F.
    Run(Common),
    /// Baseline and transferred severity curves plus buffer curves.
    Sweep(Common),
    /// Dump one sampled network as an edge list.
    Netgen {
        #[command(flatten)]
        common: Common,
        /// Sample index whose topology is drawn.
        #[arg(long, default_value_t = 0)]
        sample: u64,
    },
}

#[derive(Args)]
struct Common {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (netgen: output file); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    arm: Option<Arm>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n_banks: Option<usize>,
    #[arg(long)]
    sellers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<SystemConfig, Error> {
        let mut c = match &self.config {
            Some(p) => SystemConfig::from_file(p)?,
            None => SystemConfig::default(),
        };
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.workers {
            c.workers = Some(v);
        }
        if let Some(v) = self.arm {
            c.arm = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.kappa {
            c.kappa = v;
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.f {
            c.leverage_f = v;
        }
        if let Some(v) = self.theta {
            c.theta = v;
        }
        if let Some(v) = self.n_banks {
            c.n_banks = v;
        }
        if let Some(v) = self.sellers {
            c.s_sellers = v;
        }
        for w in c.validate()? {
            warn!("{w}");
        }
        Ok(c)
    }
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Error> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn calibrate(config: &SystemConfig) -> Result<Calibration, Error> {
    let cal = harness::calibrate(config)?;
    info!(
        "amplitude {} (solo failure rate {}, {} trials)",
        cal.amplitude, cal.failure_rate, cal.trials
    );
    Ok(cal)
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Calibrate(common) => {
            let config = common.load()?;
            let cal = calibrate(&config)?;
            let text = format!(
                "amplitude={}\nfailure_rate={}\ntrials={}\ngamma_ref={}\ntarget_p={}\nm_assets={}\ndof={}\n",
                cal.amplitude,
                cal.failure_rate,
                cal.trials,
                config.calib_gamma,
                config.calib_p,
                config.m_assets,
                config.dof
            );
            emit(common.out.as_deref(), "calibration.txt", &text)
        }
        Command::Run(common) => {
            let config = common.load()?;
            let cal = calibrate(&config)?;
            let cell = Cell::from_config(&config);
            let summary = harness::run_cells(&config, &[cell], cal.amplitude)?.remove(0);
            if summary.low_sample_warning {
                warn!(
                    "{} samples are too few for the 99.9th percentile",
                    summary.sample_count
                );
            }
            let f = match cell.arm {
                Arm::Baseline => String::new(),
                Arm::Transferred => cell.leverage_f.to_string(),
            };
            let row = format!(
                "{SEVERITY_HEADER}\n{},{f},{},{},{},{},{},{},{}\n",
                cell.gamma,
                config.kappa,
                config.rho,
                cell.arm,
                summary.f_star,
                summary.mean_f,
                summary.sample_count,
                summary.discarded_samples
            );
            emit(common.out.as_deref(), "distribution.csv", &row)?;
            emit(
                common.out.as_deref(),
                "histogram.csv",
                &summary.histogram_csv(),
            )?;
            if let Some(dir) = &common.out {
                fs::write(
                    dir.join("manifest.txt"),
                    harness::manifest(&config, &cal, summary.discarded_samples),
                )?;
            }
            Ok(())
        }
        Command::Sweep(common) => {
            let config = common.load()?;
            let cal = calibrate(&config)?;
            let output = harness::run_sweep(&config, cal.amplitude)?;
            let discarded = output.discarded();
            let total =
                config.samples * (1 + config.f_set.len() as u64) * config.gamma_grid.len() as u64;
            if discarded as f64 > 0.01 * total as f64 {
                warn!("{discarded} infeasible draws discarded over {total} cell samples");
            }
            match &common.out {
                Some(dir) => harness::write_sweep(dir, &config, &cal, &output),
                None => {
                    let mut stdout = std::io::stdout();
                    stdout.write_all(
                        cds_contagion::metrics::severity_csv(&output.severity).as_bytes(),
                    )?;
                    stdout.write_all(b"\n")?;
                    stdout.write_all(
                        cds_contagion::metrics::buffer_csv(&output.buffers).as_bytes(),
                    )?;
                    Ok(())
                }
            }
        }
        Command::Netgen { common, sample } => {
            let config = common.load()?;
            let growth = GrowthParams {
                n_banks: config.n_banks,
                denseness: config.kappa,
                offset_ratio: config.offset_ratio,
            };
            let topology = generate_topology(
                &growth,
                &mut stream_rng(config.master_seed, sample, 0, Stream::Topology),
            )?;
            let (_, network) =
                tune_concentration(&topology, config.rho, config.theta * config.n_banks as f64)?;
            let mut text = format!(
                "# N={} E={} kappa={} rho={}\n",
                network.n_banks(),
                topology.edge_count(),
                measure_denseness(&topology),
                measure_concentration(&network)
            );
            for (e, w) in network.edges().iter().zip(network.weights()) {
                text.push_str(&format!("{},{},{}\n", e.creditor, e.debtor, w));
            }
            match &common.out {
                Some(path) => fs::write(path, text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Unreachable { .. } => 2,
        Error::CalibrationDiverged { .. } => 3,
        Error::SampleExhausted { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
