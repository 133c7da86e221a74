//! External-asset portfolios, heavy-tailed price shocks and the amplitude
//! calibration against a standalone bank's failure probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StudentT};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Portfolio weights `X` as an N×M row-major matrix; each row lies on the
/// simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    n_banks: usize,
    m_assets: usize,
    allocation: Vec<f64>,
}

impl Portfolio {
    pub fn n_banks(&self) -> usize {
        self.n_banks
    }

    pub fn m_assets(&self) -> usize {
        self.m_assets
    }

    pub fn row(&self, bank: usize) -> &[f64] {
        &self.allocation[bank * self.m_assets..(bank + 1) * self.m_assets]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.allocation.chunks_exact(self.m_assets)
    }
}

fn draw_row<R: Rng + ?Sized>(rng: &mut R, row: &mut [f64]) {
    match row.len() {
        1 => row[0] = 1.0,
        2 => {
            let x: f64 = rng.random();
            row[0] = x;
            row[1] = 1.0 - x;
        }
        _ => {
            // normalised unit exponentials are uniform on the simplex
            for x in row.iter_mut() {
                *x = Exp1.sample(rng);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
}

/// Draws one portfolio row per bank, uniformly on the simplex.
pub fn draw_portfolio<R: Rng + ?Sized>(
    n_banks: usize,
    m_assets: usize,
    rng: &mut R,
) -> Result<Portfolio> {
    if m_assets < 1 {
        return Err(Error::InvalidParameter(
            "need at least one asset class".into(),
        ));
    }
    let mut allocation = vec![0.0; n_banks * m_assets];
    for row in allocation.chunks_exact_mut(m_assets) {
        draw_row(rng, row);
    }
    Ok(Portfolio {
        n_banks,
        m_assets,
        allocation,
    })
}

/// Fractional price changes of the external asset classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockVector {
    pub returns: Vec<f64>,
    pub amplitude: f64,
    pub dof: f64,
}

fn student_t(dof: f64) -> Result<StudentT<f64>> {
    if !(dof > 1.0) || !dof.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom {dof} must exceed 1"
        )));
    }
    StudentT::new(dof).map_err(|e| Error::InvalidParameter(format!("student t: {e}")))
}

fn check_amplitude(amplitude: f64) -> Result<()> {
    if amplitude > 0.0 && amplitude.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "shock amplitude {amplitude} must be positive"
        )))
    }
}

/// `amplitude * T_m` with `T_m` i.i.d. standard Student-t.
pub fn draw_shocks<R: Rng + ?Sized>(
    m_assets: usize,
    amplitude: f64,
    dof: f64,
    rng: &mut R,
) -> Result<ShockVector> {
    check_amplitude(amplitude)?;
    let t = student_t(dof)?;
    let returns = (0..m_assets).map(|_| amplitude * t.sample(rng)).collect();
    Ok(ShockVector {
        returns,
        amplitude,
        dof,
    })
}

/// Loss from the external book, `max(0, -e_n * sum_m X_nm v_m)`.
pub fn initial_distress(
    external: &[f64],
    portfolio: &Portfolio,
    shocks: &ShockVector,
) -> Result<Vec<f64>> {
    if external.len() != portfolio.n_banks || shocks.returns.len() != portfolio.m_assets {
        return Err(Error::DimensionMismatch(format!(
            "{} banks / {} shocks against a {}x{} portfolio",
            external.len(),
            shocks.returns.len(),
            portfolio.n_banks,
            portfolio.m_assets
        )));
    }
    Ok(external
        .iter()
        .zip(portfolio.rows())
        .map(|(e, row)| {
            let change: f64 = row.iter().zip(&shocks.returns).map(|(x, v)| x * v).sum();
            (-e * change).max(0.0)
        })
        .collect())
}

/// Targets for the shock amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    /// Equity ratio of the standalone reference bank.
    pub gamma_ref: f64,
    /// Desired probability that the reference bank fails.
    pub target_p: f64,
    pub m_assets: usize,
    pub dof: f64,
    pub trials: usize,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        CalibrationTarget {
            gamma_ref: 0.07,
            target_p: 1e-3,
            m_assets: 2,
            dof: 1.5,
            trials: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub amplitude: f64,
    /// Failure rate of the reference bank at `amplitude` on the calibration
    /// draws.
    pub failure_rate: f64,
    pub trials: usize,
}

const CHUNK: usize = 1 << 16;
const AMPLITUDE_BRACKET: (f64, f64) = (1e-6, 1e3);

/// Portfolio loss per unit amplitude, `-sum_m X_m T_m`, for `trials`
/// standalone banks. Chunks use separate ChaCha streams so the output does not
/// depend on the thread count.
fn unit_losses(m_assets: usize, dof: f64, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if m_assets < 1 {
        return Err(Error::InvalidParameter(
            "need at least one asset class".into(),
        ));
    }
    let t = student_t(dof)?;
    let mut out = vec![0.0; trials];
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(i, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut row = vec![0.0; m_assets];
            for z in chunk.iter_mut() {
                draw_row(&mut rng, &mut row);
                *z = -row.iter().map(|x| x * t.sample(&mut rng)).sum::<f64>();
            }
        });
    Ok(out)
}

/// Monte-Carlo failure rate of a standalone bank (all assets external) with
/// equity ratio `gamma_ref` under shocks of the given amplitude.
pub fn solo_failure_rate(
    amplitude: f64,
    gamma_ref: f64,
    m_assets: usize,
    dof: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_amplitude(amplitude)?;
    let z = unit_losses(m_assets, dof, trials, seed)?;
    let failures = z.iter().filter(|&&z| amplitude * z > gamma_ref).count();
    Ok(failures as f64 / trials as f64)
}

/// Finds the amplitude at which a standalone bank with equity ratio
/// `gamma_ref` fails with probability `target_p`. The same loss draws are
/// reused for every trial amplitude, so the failure rate is an exact step
/// function of the amplitude and bisection converges to its crossing.
pub fn calibrate_amplitude(target: &CalibrationTarget, seed: u64) -> Result<Calibration> {
    if !(target.target_p > 0.0 && target.target_p < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "target failure probability {} outside (0, 0.5)",
            target.target_p
        )));
    }
    if !(target.gamma_ref >= 0.0) || target.trials == 0 {
        return Err(Error::InvalidParameter(format!(
            "reference equity ratio {} / trials {} invalid",
            target.gamma_ref, target.trials
        )));
    }
    let mut z = unit_losses(target.m_assets, target.dof, target.trials, seed)?;
    z.par_sort_unstable_by(f64::total_cmp);
    let n = z.len() as f64;
    let rate = |s: f64| {
        let threshold = target.gamma_ref / s;
        let survivors = z.len() - z.partition_point(|&x| x <= threshold);
        survivors as f64 / n
    };

    let (mut lo, mut hi) = AMPLITUDE_BRACKET;
    let (p_low, p_high) = (rate(lo), rate(hi));
    if !(p_low <= target.target_p && target.target_p <= p_high) {
        return Err(Error::CalibrationDiverged {
            p_low,
            p_high,
            target: target.target_p,
        });
    }
    for _ in 0..200 {
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if rate(mid) < target.target_p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let amplitude = (lo * hi).sqrt();
    Ok(Calibration {
        amplitude,
        failure_rate: rate(amplitude),
        trials: target.trials,
    })
}
