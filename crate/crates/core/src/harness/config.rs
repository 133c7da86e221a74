use std::fmt::Write as _;
use std::path::Path;

use crate::balance::SheetPolicy;
use crate::error::{Error, Result};
use crate::metrics::Arm;

/// Scenario parameters. Defaults reproduce the baseline experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_banks: usize,
    pub m_assets: usize,
    pub s_sellers: usize,
    pub theta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub rho: f64,
    pub leverage_f: f64,
    pub dof: f64,
    pub calib_gamma: f64,
    pub calib_p: f64,
    pub calib_trials: usize,
    pub samples: u64,
    pub master_seed: u64,
    pub gamma_grid: Vec<f64>,
    pub f_set: Vec<f64>,
    pub arm: Arm,
    /// Additive attractiveness of the growth kernel as a multiple of the
    /// attachments per node.
    pub offset_ratio: f64,
    /// Skips calibration when set.
    pub amplitude: Option<f64>,
    /// Whether the transferred arm settles CDS claims.
    pub protection: bool,
    pub sheet_policy: SheetPolicy,
    pub workers: Option<usize>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_banks: 500,
            m_assets: 2,
            s_sellers: 10,
            theta: 0.3,
            gamma: 0.09,
            kappa: 0.05,
            rho: 0.3,
            leverage_f: 0.0,
            dof: 1.5,
            calib_gamma: 0.07,
            calib_p: 1e-3,
            calib_trials: 10_000_000,
            samples: 10_000,
            master_seed: 1,
            gamma_grid: default_gamma_grid(),
            f_set: vec![0.0, 0.2, 0.4, 1.0],
            arm: Arm::Baseline,
            offset_ratio: -0.5,
            amplitude: None,
            protection: true,
            sheet_policy: SheetPolicy::Prerequisite,
            workers: None,
        }
    }
}

/// 0.04, 0.05, ..., 0.14.
pub fn default_gamma_grid() -> Vec<f64> {
    (4..=14).map(|i| i as f64 / 100.0).collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key}={value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

impl SystemConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "n_banks" => self.n_banks = parse(key, value)?,
            "m_assets" => self.m_assets = parse(key, value)?,
            "s_sellers" => self.s_sellers = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "leverage_f" | "f" => self.leverage_f = parse(key, value)?,
            "dof" => self.dof = parse(key, value)?,
            "calib_gamma" => self.calib_gamma = parse(key, value)?,
            "calib_p" => self.calib_p = parse(key, value)?,
            "calib_trials" => self.calib_trials = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "master_seed" | "seed" => self.master_seed = parse(key, value)?,
            "gamma_grid" => self.gamma_grid = parse_list(key, value)?,
            "f_set" => self.f_set = parse_list(key, value)?,
            "arm" => self.arm = value.trim().parse()?,
            "offset_ratio" => self.offset_ratio = parse(key, value)?,
            "amplitude" => {
                self.amplitude = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "protection" => self.protection = parse(key, value)?,
            "sheet_policy" => self.sheet_policy = value.trim().parse()?,
            "workers" => {
                self.workers = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = SystemConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }

    /// Serialises every field as `key=value` lines, readable by
    /// [`SystemConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let opt = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        let _ = writeln!(s, "n_banks={}", self.n_banks);
        let _ = writeln!(s, "m_assets={}", self.m_assets);
        let _ = writeln!(s, "s_sellers={}", self.s_sellers);
        let _ = writeln!(s, "theta={}", self.theta);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "kappa={}", self.kappa);
        let _ = writeln!(s, "rho={}", self.rho);
        let _ = writeln!(s, "leverage_f={}", self.leverage_f);
        let _ = writeln!(s, "dof={}", self.dof);
        let _ = writeln!(s, "calib_gamma={}", self.calib_gamma);
        let _ = writeln!(s, "calib_p={}", self.calib_p);
        let _ = writeln!(s, "calib_trials={}", self.calib_trials);
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "master_seed={}", self.master_seed);
        let _ = writeln!(s, "gamma_grid={}", join(&self.gamma_grid));
        let _ = writeln!(s, "f_set={}", join(&self.f_set));
        let _ = writeln!(s, "arm={}", self.arm);
        let _ = writeln!(s, "offset_ratio={}", self.offset_ratio);
        let _ = writeln!(
            s,
            "amplitude={}",
            opt(self.amplitude.map(|a| a.to_string()))
        );
        let _ = writeln!(s, "protection={}", self.protection);
        let _ = writeln!(s, "sheet_policy={}", self.sheet_policy);
        let _ = writeln!(s, "workers={}", opt(self.workers.map(|w| w.to_string())));
        s
    }

    /// Rejects values the model cannot run with; returns warnings for values
    /// outside the studied ranges.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_banks < 3 {
            return bad(format!("n_banks={} must be at least 3", self.n_banks));
        }
        if self.m_assets < 1 {
            return bad("m_assets must be at least 1".into());
        }
        if self.s_sellers < 1 || self.s_sellers > self.n_banks {
            return bad(format!("s_sellers={} outside [1, n_banks]", self.s_sellers));
        }
        for (name, v) in [
            ("theta", self.theta),
            ("gamma", self.gamma),
            ("rho", self.rho),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name}={v} outside (0, 1)"));
            }
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad(format!("kappa={} outside (0, 1]", self.kappa));
        }
        if !(self.dof > 1.0) {
            return bad(format!("dof={} must exceed 1", self.dof));
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if !(self.offset_ratio > -1.0) {
            return bad(format!("offset_ratio={} must exceed -1", self.offset_ratio));
        }
        if self.gamma_grid.is_empty()
            || self.gamma_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0))
            || self.gamma_grid.windows(2).any(|w| !(w[0] < w[1]))
        {
            return bad("gamma_grid must be strictly increasing values in (0, 1)".into());
        }
        if std::iter::once(self.leverage_f)
            .chain(self.f_set.iter().copied())
            .any(|f| !(f >= 0.0) || !f.is_finite())
        {
            return bad("additional lending fractions must be finite and non-negative".into());
        }
        if let Some(a) = self.amplitude {
            if !(a >= 0.0) || !a.is_finite() {
                return bad(format!("amplitude={a} must be non-negative"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }

        let mut warnings = Vec::new();
        let mut warn = |name: &str, v: f64, lo: f64, hi: f64| {
            if !in_range(v, lo, hi) {
                warnings.push(format!("{name}={v} outside studied range [{lo}, {hi}]"));
            }
        };
        warn("gamma", self.gamma, 0.04, 0.14);
        for &g in &self.gamma_grid {
            warn("gamma_grid", g, 0.04, 0.14);
        }
        warn("kappa", self.kappa, 0.01, 0.1);
        warn("rho", self.rho, 0.1, 0.5);
        warn("leverage_f", self.leverage_f, 0.0, 1.0);
        for &f in &self.f_set {
            warn("f_set", f, 0.0, 1.0);
        }
        if self.samples < crate::metrics::MIN_QUANTILE_SAMPLES {
            warnings.push(format!(
                "samples={} too few for a 99.9th percentile",
                self.samples
            ));
        }
        Ok(warnings)
    }
}
