//! Experiment orchestration: per-sample pipeline, parameter sweeps and
//! output files.
//!
//! A sample is drawn once per (sample index, attempt) and reused by every
//! equity ratio and every arm of a sweep: topology, loan weights, portfolio,
//! shocks and the protection pattern do not depend on `gamma` or `f`. A cell
//! whose balance sheets are infeasible for a draw moves on to the next
//! attempt of the same sample index.

mod config;
mod seeding;

use std::fs;
use std::path::Path;

use rayon::prelude::*;

pub use config::{default_gamma_grid, SystemConfig};
pub use seeding::{derived_seed, stream_rng, Stream};

use crate::balance::{transfer_sheets_with, AssetTemplate, SheetPolicy};
use crate::cascade::{run_book, CascadeResult, LoanBook, Uncovered};
use crate::cds::{assign_protection, select_sellers_by_assets, ProtectionPattern};
use crate::error::{Error, Result};
use crate::market::{
    calibrate_amplitude, draw_portfolio, draw_shocks, initial_distress, Calibration,
    CalibrationTarget, ShockVector,
};
use crate::metrics::{
    buffer_csv, severity_csv, systemic_buffer_ratio, Arm, BufferCurve, CurveMeta,
    DistributionSummary, SeverityCurve,
};
use crate::netgen::{generate_topology, tune_concentration, GrowthParams, WeightedNetwork};

/// Regenerations allowed per sample before giving up.
pub const MAX_ATTEMPTS: u32 = 32;

/// Calibrates the shock amplitude for a configuration, or returns the
/// configured override.
pub fn calibrate(config: &SystemConfig) -> Result<Calibration> {
    if let Some(amplitude) = config.amplitude {
        return Ok(Calibration {
            amplitude,
            failure_rate: f64::NAN,
            trials: 0,
        });
    }
    let target = CalibrationTarget {
        gamma_ref: config.calib_gamma,
        target_p: config.calib_p,
        m_assets: config.m_assets,
        dof: config.dof,
        trials: config.calib_trials,
    };
    calibrate_amplitude(
        &target,
        derived_seed(config.master_seed, Stream::Calibration),
    )
}

/// Everything about one Monte-Carlo sample that does not depend on the
/// equity ratio or the arm.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub network: WeightedNetwork,
    pub template: AssetTemplate,
    pub initial_loss: Vec<f64>,
    pub sellers: Vec<usize>,
    pub protection: Option<ProtectionPattern>,
}

impl SampleDraw {
    /// Draws sample `sample_index`, regeneration `attempt`. A zero amplitude
    /// switches the price shocks off.
    pub fn generate(
        config: &SystemConfig,
        sample_index: u64,
        attempt: u32,
        amplitude: f64,
        with_protection: bool,
    ) -> Result<Self> {
        let seed = config.master_seed;
        let growth = GrowthParams {
            n_banks: config.n_banks,
            denseness: config.kappa,
            offset_ratio: config.offset_ratio,
        };
        let topology = generate_topology(
            &growth,
            &mut stream_rng(seed, sample_index, attempt, Stream::Topology),
        )?;
        let total_loans = config.theta * config.n_banks as f64;
        let (_, network) = tune_concentration(&topology, config.rho, total_loans)?;
        let template = AssetTemplate::from_network(&network, config.theta)?;

        let portfolio = draw_portfolio(
            config.n_banks,
            config.m_assets,
            &mut stream_rng(seed, sample_index, attempt, Stream::Portfolio),
        )?;
        let shocks = if amplitude == 0.0 {
            ShockVector {
                returns: vec![0.0; config.m_assets],
                amplitude: 0.0,
                dof: config.dof,
            }
        } else {
            draw_shocks(
                config.m_assets,
                amplitude,
                config.dof,
                &mut stream_rng(seed, sample_index, attempt, Stream::Shocks),
            )?
        };
        let initial_loss = initial_distress(&template.external, &portfolio, &shocks)?;

        let sellers = select_sellers_by_assets(&template.assets(), config.s_sellers)?;
        let protection = if with_protection {
            Some(assign_protection(
                &network,
                &sellers,
                &mut stream_rng(seed, sample_index, attempt, Stream::Protection),
            )?)
        } else {
            None
        };
        Ok(SampleDraw {
            network,
            template,
            initial_loss,
            sellers,
            protection,
        })
    }

    /// Runs the cascade for one cell; `Ok(None)` if the balance sheets are
    /// infeasible for this draw.
    pub fn evaluate(
        &self,
        cell: &Cell,
        policy: SheetPolicy,
        use_protection: bool,
    ) -> Result<Option<CascadeResult>> {
        let sheets = match self.template.sheets(cell.gamma, policy) {
            Ok(s) => s,
            Err(Error::InfeasibleSheet { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (uncovered, protection) = match cell.arm {
            Arm::Baseline => (Uncovered::None, None),
            Arm::Transferred => {
                match transfer_sheets_with(&sheets, cell.leverage_f, policy) {
                    Ok(_) => {}
                    Err(Error::InfeasibleSheet { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
                let p = if use_protection {
                    self.protection.as_ref()
                } else {
                    None
                };
                (Uncovered::Scaled(cell.leverage_f), p)
            }
        };
        let book = LoanBook {
            capital: &sheets.capital,
            edges: self.network.edges(),
            covered: self.network.weights(),
            uncovered,
        };
        run_book(&book, protection, &self.initial_loss, None).map(Some)
    }
}

/// One (equity ratio, arm) combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub gamma: f64,
    pub arm: Arm,
    pub leverage_f: f64,
}

impl Cell {
    pub fn from_config(config: &SystemConfig) -> Self {
        Cell {
            gamma: config.gamma,
            arm: config.arm,
            leverage_f: match config.arm {
                Arm::Baseline => 0.0,
                Arm::Transferred => config.leverage_f,
            },
        }
    }
}

/// Outcome of one sample in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub result: CascadeResult,
    /// Infeasible draws discarded before this one.
    pub discarded: u32,
}

/// Lazily generated attempts of one sample index, shared by all cells.
struct Attempts<'c> {
    config: &'c SystemConfig,
    sample_index: u64,
    amplitude: f64,
    with_protection: bool,
    draws: Vec<SampleDraw>,
}

impl Attempts<'_> {
    fn outcome(&mut self, cell: &Cell) -> Result<SampleOutcome> {
        for attempt in 0..MAX_ATTEMPTS {
            if self.draws.len() <= attempt as usize {
                let draw = SampleDraw::generate(
                    self.config,
                    self.sample_index,
                    attempt,
                    self.amplitude,
                    self.with_protection,
                );
                self.draws.push(draw?);
            }
            let draw = &self.draws[attempt as usize];
            if let Some(result) =
                draw.evaluate(cell, self.config.sheet_policy, self.config.protection)?
            {
                return Ok(SampleOutcome {
                    result,
                    discarded: attempt,
                });
            }
        }
        Err(Error::SampleExhausted {
            sample_index: self.sample_index,
            attempts: MAX_ATTEMPTS,
        })
    }
}

/// Runs the full pipeline for the configuration's single cell.
pub fn run_sample(
    config: &SystemConfig,
    sample_index: u64,
    amplitude: f64,
) -> Result<SampleOutcome> {
    let cell = Cell::from_config(config);
    let mut attempts = Attempts {
        config,
        sample_index,
        amplitude,
        with_protection: cell.arm == Arm::Transferred && config.protection,
        draws: Vec::new(),
    };
    attempts.outcome(&cell)
}

fn thread_pool(config: &SystemConfig) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Clone)]
struct Tally {
    histograms: Vec<Vec<u64>>,
    discarded: Vec<u64>,
}

impl Tally {
    fn new(cells: usize, n_banks: usize) -> Self {
        Tally {
            histograms: vec![vec![0; n_banks + 1]; cells],
            discarded: vec![0; cells],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.histograms.iter_mut().zip(other.histograms) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.discarded
            .iter_mut()
            .zip(other.discarded)
            .for_each(|(x, y)| *x += y);
        self
    }
}

/// Runs every sample on every cell and returns one distribution per cell.
pub fn run_cells(
    config: &SystemConfig,
    cells: &[Cell],
    amplitude: f64,
) -> Result<Vec<DistributionSummary>> {
    let with_protection = config.protection && cells.iter().any(|c| c.arm == Arm::Transferred);
    let n = config.n_banks;
    let tally = thread_pool(config)?.install(|| {
        (0..config.samples)
            .into_par_iter()
            .try_fold(
                || Tally::new(cells.len(), n),
                |mut tally, sample_index| {
                    let mut attempts = Attempts {
                        config,
                        sample_index,
                        amplitude,
                        with_protection,
                        draws: Vec::new(),
                    };
                    for (k, cell) in cells.iter().enumerate() {
                        let o = attempts.outcome(cell)?;
                        tally.histograms[k][o.result.failures] += 1;
                        tally.discarded[k] += o.discarded as u64;
                    }
                    Ok::<_, Error>(tally)
                },
            )
            .try_reduce(|| Tally::new(cells.len(), n), |a, b| Ok(a.merge(b)))
    })?;
    Ok(tally
        .histograms
        .into_iter()
        .zip(tally.discarded)
        .map(|(h, d)| DistributionSummary::from_histogram(h, d))
        .collect())
}

/// Severity curve for one arm over the configured grid.
pub fn severity_curve(
    config: &SystemConfig,
    arm: Arm,
    leverage_f: f64,
    amplitude: f64,
) -> Result<SeverityCurve> {
    let cells: Vec<Cell> = config
        .gamma_grid
        .iter()
        .map(|&gamma| Cell {
            gamma,
            arm,
            leverage_f,
        })
        .collect();
    let summaries = run_cells(config, &cells, amplitude)?;
    SeverityCurve::from_summaries(
        config.gamma_grid.clone(),
        summaries,
        curve_meta(config, arm, leverage_f),
    )
}

fn curve_meta(config: &SystemConfig, arm: Arm, leverage_f: f64) -> CurveMeta {
    CurveMeta {
        kappa: config.kappa,
        rho: config.rho,
        theta: config.theta,
        arm,
        leverage_f,
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Baseline curve first, then one per entry of `f_set`.
    pub severity: Vec<SeverityCurve>,
    /// One per entry of `f_set`.
    pub buffers: Vec<BufferCurve>,
    pub amplitude: f64,
}

impl SweepOutput {
    pub fn baseline(&self) -> &SeverityCurve {
        &self.severity[0]
    }

    pub fn transferred(&self, leverage_f: f64) -> Option<&SeverityCurve> {
        self.severity[1..]
            .iter()
            .find(|c| c.meta.leverage_f == leverage_f)
    }

    pub fn buffer(&self, leverage_f: f64) -> Option<&BufferCurve> {
        self.buffers.iter().find(|b| b.leverage_f == leverage_f)
    }

    /// Total discarded draws over all cells.
    pub fn discarded(&self) -> u64 {
        self.severity
            .iter()
            .flat_map(|c| &c.summaries)
            .map(|s| s.discarded_samples)
            .sum()
    }
}

/// Baseline and transferred severity curves over the grid, then the buffer
/// curve for every `f` in the configuration.
pub fn run_sweep(config: &SystemConfig, amplitude: f64) -> Result<SweepOutput> {
    let g = config.gamma_grid.len();
    let mut cells: Vec<Cell> = config
        .gamma_grid
        .iter()
        .map(|&gamma| Cell {
            gamma,
            arm: Arm::Baseline,
            leverage_f: 0.0,
        })
        .collect();
    for &f in &config.f_set {
        cells.extend(config.gamma_grid.iter().map(|&gamma| Cell {
            gamma,
            arm: Arm::Transferred,
            leverage_f: f,
        }));
    }
    let mut summaries = run_cells(config, &cells, amplitude)?.into_iter();

    let mut severity = Vec::with_capacity(1 + config.f_set.len());
    severity.push(SeverityCurve::from_summaries(
        config.gamma_grid.clone(),
        summaries.by_ref().take(g).collect(),
        curve_meta(config, Arm::Baseline, 0.0),
    )?);
    for &f in &config.f_set {
        severity.push(SeverityCurve::from_summaries(
            config.gamma_grid.clone(),
            summaries.by_ref().take(g).collect(),
            curve_meta(config, Arm::Transferred, f),
        )?);
    }
    let buffers = severity[1..]
        .iter()
        .map(|c| systemic_buffer_ratio(&severity[0], c))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutput {
        severity,
        buffers,
        amplitude,
    })
}

/// Writes `severity.csv`, `buffer.csv` and `manifest.txt` into `dir`.
pub fn write_sweep(
    dir: &Path,
    config: &SystemConfig,
    calibration: &Calibration,
    output: &SweepOutput,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("severity.csv"), severity_csv(&output.severity))?;
    fs::write(dir.join("buffer.csv"), buffer_csv(&output.buffers))?;
    fs::write(
        dir.join("manifest.txt"),
        manifest(config, calibration, output.discarded()),
    )?;
    Ok(())
}

/// Run manifest: every parameter, the calibrated amplitude and the code
/// version.
pub fn manifest(config: &SystemConfig, calibration: &Calibration, discarded: u64) -> String {
    format!(
        "# {} {}\n{}calibrated_amplitude={}\ncalibration_failure_rate={}\ncalibration_trials={}\ndiscarded_draws={}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        config.to_kv_string(),
        calibration.amplitude,
        calibration.failure_rate,
        calibration.trials,
        discarded
    )
}
