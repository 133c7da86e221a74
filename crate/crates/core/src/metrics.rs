//! Failure-count distributions, severity curves and the systemic capital
//! buffer ratio.

use std::fmt;

use crate::balance::{core_tier1_ratio, leverage_ratio};
use crate::cascade::CascadeResult;
use crate::error::{Error, Result};

/// Samples below which the 99.9th-percentile order statistic is flagged.
pub const MIN_QUANTILE_SAMPLES: u64 = 1000;

/// Empirical distribution of the failure count F.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub sample_count: u64,
    /// `histogram[k]` = number of samples with F = k.
    pub histogram: Vec<u64>,
    /// F at the 1-based order statistic `ceil(0.999 * sample_count)`.
    pub f_star: u64,
    pub mean_f: f64,
    pub discarded_samples: u64,
    /// Set when fewer than `MIN_QUANTILE_SAMPLES` back the quantile.
    pub low_sample_warning: bool,
}

impl DistributionSummary {
    pub fn from_histogram(histogram: Vec<u64>, discarded_samples: u64) -> Self {
        let sample_count: u64 = histogram.iter().sum();
        let rank = (999 * sample_count).div_ceil(1000);
        let mut seen = 0;
        let mut f_star = 0;
        for (k, &c) in histogram.iter().enumerate() {
            seen += c;
            if seen >= rank && c > 0 {
                f_star = k as u64;
                break;
            }
        }
        let mean_f = if sample_count == 0 {
            0.0
        } else {
            histogram
                .iter()
                .enumerate()
                .map(|(k, &c)| k as f64 * c as f64)
                .sum::<f64>()
                / sample_count as f64
        };
        DistributionSummary {
            sample_count,
            histogram,
            f_star,
            mean_f,
            discarded_samples,
            low_sample_warning: sample_count < MIN_QUANTILE_SAMPLES,
        }
    }

    /// `F,count` rows for every non-empty bin.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("F,count\n");
        for (k, &c) in self.histogram.iter().enumerate().filter(|(_, c)| **c > 0) {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

/// Aggregates cascade outcomes on a system of `n_banks` banks.
pub fn summarize(samples: &[CascadeResult], n_banks: usize) -> DistributionSummary {
    let mut histogram = vec![0u64; n_banks + 1];
    for s in samples {
        histogram[s.failures] += 1;
    }
    DistributionSummary::from_histogram(histogram, 0)
}

/// Least-squares non-increasing fit (pool adjacent violators).
pub fn isotonic_non_increasing(values: &[f64]) -> Vec<f64> {
    // (sum, count) per pooled block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Baseline,
    Transferred,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Baseline => "baseline",
            Arm::Transferred => "transferred",
        })
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Arm::Baseline),
            "transferred" => Ok(Arm::Transferred),
            other => Err(Error::Config(format!("unknown arm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveMeta {
    pub kappa: f64,
    pub rho: f64,
    pub theta: f64,
    pub arm: Arm,
    /// Additional lending fraction; zero on the baseline arm.
    pub leverage_f: f64,
}

/// 99.9th-percentile failure count as a function of the equity ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityCurve {
    pub gammas: Vec<f64>,
    pub raw_f_star: Vec<f64>,
    /// Non-increasing fit of `raw_f_star`.
    pub f_star: Vec<f64>,
    pub summaries: Vec<DistributionSummary>,
    pub meta: CurveMeta,
}

impl SeverityCurve {
    pub fn from_raw(gammas: Vec<f64>, raw_f_star: Vec<f64>, meta: CurveMeta) -> Result<Self> {
        if gammas.len() != raw_f_star.len() || gammas.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points for {} values",
                gammas.len(),
                raw_f_star.len()
            )));
        }
        if gammas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "gamma grid must be strictly increasing".into(),
            ));
        }
        let f_star = isotonic_non_increasing(&raw_f_star);
        Ok(SeverityCurve {
            gammas,
            raw_f_star,
            f_star,
            summaries: Vec::new(),
            meta,
        })
    }

    pub fn from_summaries(
        gammas: Vec<f64>,
        summaries: Vec<DistributionSummary>,
        meta: CurveMeta,
    ) -> Result<Self> {
        let raw = summaries.iter().map(|s| s.f_star as f64).collect();
        let mut curve = Self::from_raw(gammas, raw, meta)?;
        curve.summaries = summaries;
        Ok(curve)
    }

    /// Grid steps where the raw curve increases with gamma.
    pub fn monotonicity_violations(&self) -> usize {
        self.raw_f_star.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

/// Systemic capital buffer ratio per grid point with the companion
/// regulatory ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferCurve {
    pub gammas: Vec<f64>,
    pub gamma_s: Vec<f64>,
    /// Target severity outside the baseline's range; `gamma_s` pinned to a
    /// grid endpoint.
    pub clamped: Vec<bool>,
    pub t_prime: Vec<f64>,
    pub l_prime: Vec<f64>,
    pub leverage_f: f64,
    pub theta: f64,
}

impl BufferCurve {
    pub fn negative_impact(&self, i: usize) -> bool {
        self.gamma_s[i] < self.gammas[i]
    }

    pub fn gamma_s_at(&self, gamma: f64) -> Option<f64> {
        self.gammas
            .iter()
            .position(|g| (g - gamma).abs() < 1e-9)
            .map(|i| self.gamma_s[i])
    }
}

/// Interval of equity ratios at which the piecewise-linear non-increasing
/// curve equals `target`, or `None` if `target` lies outside its range.
fn preimage(gammas: &[f64], f: &[f64], target: f64) -> Option<(f64, f64)> {
    let last = f.len() - 1;
    if target > f[0] || target < f[last] {
        return None;
    }
    let cross = |i: usize| {
        let (g0, g1, f0, f1) = (gammas[i], gammas[i + 1], f[i], f[i + 1]);
        if f1 == target {
            g1
        } else if f0 == target {
            g0
        } else {
            g0 + (f0 - target) / (f0 - f1) * (g1 - g0)
        }
    };
    let lo = if f[0] <= target {
        gammas[0]
    } else {
        let i = (0..last).find(|&i| f[i + 1] <= target).unwrap();
        cross(i)
    };
    let hi = if f[last] >= target {
        gammas[last]
    } else {
        let i = (0..last).rev().find(|&i| f[i] >= target).unwrap();
        cross(i)
    };
    Some((lo, hi))
}

/// Inverts the baseline severity curve at the transferred curve's values:
/// `gamma_s(g)` is the baseline equity ratio with the same 99.9th-percentile
/// failure count. Where the baseline is flat at the target value the
/// preimage is an interval and the point nearest to `g` is used.
pub fn systemic_buffer_ratio(
    baseline: &SeverityCurve,
    transferred: &SeverityCurve,
) -> Result<BufferCurve> {
    if baseline.gammas != transferred.gammas {
        return Err(Error::DimensionMismatch(
            "severity curves on different gamma grids".into(),
        ));
    }
    let f0 = &baseline.f_star;
    if f0.iter().all(|&v| v == f0[0]) {
        return Err(Error::NonInvertible);
    }
    if f0.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter(
            "baseline curve is not non-increasing".into(),
        ));
    }
    let g = &baseline.gammas;
    let (lo_g, hi_g) = (g[0], g[g.len() - 1]);
    let mut gamma_s = Vec::with_capacity(g.len());
    let mut clamped = Vec::with_capacity(g.len());
    for (&gamma, &target) in g.iter().zip(&transferred.f_star) {
        match preimage(g, f0, target) {
            Some((lo, hi)) => {
                gamma_s.push(gamma.clamp(lo, hi));
                clamped.push(false);
            }
            None => {
                gamma_s.push(if target > f0[0] { lo_g } else { hi_g });
                clamped.push(true);
            }
        }
    }
    let (theta, f) = (transferred.meta.theta, transferred.meta.leverage_f);
    Ok(BufferCurve {
        gammas: g.clone(),
        gamma_s,
        clamped,
        t_prime: g.iter().map(|&x| core_tier1_ratio(x, theta, f)).collect(),
        l_prime: g.iter().map(|&x| leverage_ratio(x, theta, f)).collect(),
        leverage_f: f,
        theta,
    })
}

pub const SEVERITY_HEADER: &str = "gamma,f,kappa,rho,arm,f_star,mean_F,samples,discarded";
pub const BUFFER_HEADER: &str = "gamma,f,gamma_s,clamped,t_prime,l_prime,negative_impact";

/// Rows of `severity.csv`. The `f` column is empty on the baseline arm.
pub fn severity_csv(curves: &[SeverityCurve]) -> String {
    let mut out = format!("{SEVERITY_HEADER}\n");
    for c in curves {
        let f = match c.meta.arm {
            Arm::Baseline => String::new(),
            Arm::Transferred => c.meta.leverage_f.to_string(),
        };
        for (i, g) in c.gammas.iter().enumerate() {
            let (mean, samples, discarded) = c.summaries.get(i).map_or((f64::NAN, 0, 0), |s| {
                (s.mean_f, s.sample_count, s.discarded_samples)
            });
            out.push_str(&format!(
                "{g},{f},{},{},{},{},{mean},{samples},{discarded}\n",
                c.meta.kappa, c.meta.rho, c.meta.arm, c.raw_f_star[i]
            ));
        }
    }
    out
}

/// Rows of `buffer.csv`.
pub fn buffer_csv(curves: &[BufferCurve]) -> String {
    let mut out = format!("{BUFFER_HEADER}\n");
    for c in curves {
        for i in 0..c.gammas.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.gammas[i],
                c.leverage_f,
                c.gamma_s[i],
                c.clamped[i],
                c.t_prime[i],
                c.l_prime[i],
                c.negative_impact(i)
            ));
        }
    }
    out
}
