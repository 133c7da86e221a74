//! Per-bank balance sheets and the risk-transfer transformation.
//!
//! Units are average-bank-assets: the network carries `theta * N` of loans, so
//! the system holds `N` of assets in total.

use crate::error::{Error, Result};
use crate::netgen::WeightedNetwork;

/// Interbank and external asset columns before any capital is assigned.
/// They depend on the network and `theta` only, so one template serves every
/// equity ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTemplate {
    pub loans: Vec<f64>,
    pub borrowings: Vec<f64>,
    pub external: Vec<f64>,
    pub theta: f64,
}

impl AssetTemplate {
    /// Allocates external assets: every bank first covers its net interbank
    /// borrowing, the rest of the external pool is split in proportion to
    /// interbank lending.
    pub fn from_network(network: &WeightedNetwork, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "interbank loan ratio {theta} outside (0, 1)"
            )));
        }
        let loans = network.loans();
        let borrowings = network.borrowings();
        let total_loans: f64 = loans.iter().sum();
        if !(total_loans > 0.0) {
            return Err(Error::InvalidParameter("network carries no loans".into()));
        }
        let net_borrowing: Vec<f64> = loans
            .iter()
            .zip(&borrowings)
            .map(|(l, b)| (b - l).max(0.0))
            .collect();
        let pool = (1.0 - theta) / theta * total_loans - net_borrowing.iter().sum::<f64>();
        let external: Vec<f64> = net_borrowing
            .iter()
            .zip(&loans)
            .map(|(nb, l)| nb + pool * l / total_loans)
            .collect();
        if let Some((bank, &e)) = external.iter().enumerate().find(|(_, e)| **e < 0.0) {
            return Err(Error::InfeasibleSheet { bank, deposits: e });
        }
        Ok(AssetTemplate {
            loans,
            borrowings,
            external,
            theta,
        })
    }

    pub fn n_banks(&self) -> usize {
        self.loans.len()
    }

    /// Total assets per bank.
    pub fn assets(&self) -> Vec<f64> {
        self.loans
            .iter()
            .zip(&self.external)
            .map(|(l, e)| l + e)
            .collect()
    }

    /// Completes the sheets with capital `gamma * a` and deposits as the
    /// residual, rejecting negative deposits.
    pub fn with_gamma(&self, gamma: f64) -> Result<BalanceSheetSet> {
        self.sheets(gamma, SheetPolicy::Strict)
    }

    /// Same as [`AssetTemplate::with_gamma`] under an explicit policy.
    pub fn sheets(&self, gamma: f64, policy: SheetPolicy) -> Result<BalanceSheetSet> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "equity capital ratio {gamma} outside (0, 1)"
            )));
        }
        let assets = self.assets();
        let capital: Vec<f64> = assets.iter().map(|a| gamma * a).collect();
        let deposits: Vec<f64> = assets
            .iter()
            .zip(&capital)
            .zip(&self.borrowings)
            .map(|((a, c), b)| a - c - b)
            .collect();
        if policy == SheetPolicy::Strict {
            check_deposits(&deposits)?;
        }
        Ok(BalanceSheetSet {
            loans: self.loans.clone(),
            borrowings: self.borrowings.clone(),
            external: self.external.clone(),
            capital,
            deposits,
            assets,
            gamma,
            theta: self.theta,
        })
    }
}

/// Which balance sheets count as feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SheetPolicy {
    /// Every bank must hold non-negative deposits, before and after risk
    /// transfer.
    Strict,
    /// Only external plus interbank assets covering interbank borrowings on
    /// the original sheet is required, which the external allocation
    /// guarantees. Deposits are a residual and may be negative; they play no
    /// part in the contagion.
    #[default]
    Prerequisite,
}

impl std::fmt::Display for SheetPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SheetPolicy::Strict => "strict",
            SheetPolicy::Prerequisite => "prerequisite",
        })
    }
}

impl std::str::FromStr for SheetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(SheetPolicy::Strict),
            "prerequisite" => Ok(SheetPolicy::Prerequisite),
            other => Err(Error::Config(format!("unknown sheet policy {other:?}"))),
        }
    }
}

fn check_deposits(deposits: &[f64]) -> Result<()> {
    match deposits.iter().enumerate().find(|(_, d)| **d < 0.0) {
        Some((bank, &d)) => Err(Error::InfeasibleSheet { bank, deposits: d }),
        None => Ok(()),
    }
}

/// Column-oriented balance sheets of all banks.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSheetSet {
    pub loans: Vec<f64>,
    pub borrowings: Vec<f64>,
    pub external: Vec<f64>,
    pub capital: Vec<f64>,
    pub deposits: Vec<f64>,
    pub assets: Vec<f64>,
    pub gamma: f64,
    pub theta: f64,
}

impl BalanceSheetSet {
    pub fn n_banks(&self) -> usize {
        self.loans.len()
    }

    /// Aggregate interbank loans over aggregate assets.
    pub fn loan_ratio(&self) -> f64 {
        self.loans.iter().sum::<f64>() / self.assets.iter().sum::<f64>()
    }

    /// `bank,l,b,e,c,d,a` rows for debugging.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bank,l,b,e,c,d,a\n");
        for n in 0..self.n_banks() {
            out.push_str(&format!(
                "{n},{},{},{},{},{},{}\n",
                self.loans[n],
                self.borrowings[n],
                self.external[n],
                self.capital[n],
                self.deposits[n],
                self.assets[n]
            ));
        }
        out
    }
}

/// Builds balance sheets for a network at interbank loan ratio `theta` and
/// equity capital ratio `gamma`.
pub fn build_balance_sheets(
    network: &WeightedNetwork,
    theta: f64,
    gamma: f64,
) -> Result<BalanceSheetSet> {
    AssetTemplate::from_network(network, theta)?.with_gamma(gamma)
}

/// Scales the interbank columns by `1 + f` and recomputes deposits with capital
/// and external assets held fixed. Negative deposits are rejected.
pub fn transfer_sheets(sheets: &BalanceSheetSet, leverage_f: f64) -> Result<BalanceSheetSet> {
    transfer_sheets_with(sheets, leverage_f, SheetPolicy::Strict)
}

pub fn transfer_sheets_with(
    sheets: &BalanceSheetSet,
    leverage_f: f64,
    policy: SheetPolicy,
) -> Result<BalanceSheetSet> {
    if !(leverage_f >= 0.0) || !leverage_f.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "additional lending fraction {leverage_f} must be finite and non-negative"
        )));
    }
    if leverage_f == 0.0 {
        return Ok(sheets.clone());
    }
    let scale = 1.0 + leverage_f;
    let loans: Vec<f64> = sheets.loans.iter().map(|l| scale * l).collect();
    let borrowings: Vec<f64> = sheets.borrowings.iter().map(|b| scale * b).collect();
    let assets: Vec<f64> = sheets
        .external
        .iter()
        .zip(&loans)
        .map(|(e, l)| e + l)
        .collect();
    let deposits: Vec<f64> = assets
        .iter()
        .zip(&sheets.capital)
        .zip(&borrowings)
        .map(|((a, c), b)| a - c - b)
        .collect();
    if policy == SheetPolicy::Strict {
        check_deposits(&deposits)?;
    }
    let loan_total: f64 = loans.iter().sum();
    let asset_total: f64 = assets.iter().sum();
    Ok(BalanceSheetSet {
        loans,
        borrowings,
        external: sheets.external.clone(),
        capital: sheets.capital.clone(),
        deposits,
        assets,
        gamma: sheets.gamma,
        theta: loan_total / asset_total,
    })
}

/// Balance sheets after every loan is insured and the freed capacity is lent
/// out again along the same edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferredSystem {
    pub base: BalanceSheetSet,
    /// Original notionals, insured (risk weight 0%). Aligned with the network
    /// edges.
    pub covered_weights: Vec<f64>,
    /// Additional notionals `f * w`, uninsured (risk weight 100%).
    pub uncovered_weights: Vec<f64>,
    pub leverage_f: f64,
}

/// Risk transfer with the strict sheet policy.
pub fn apply_risk_transfer(
    sheets: &BalanceSheetSet,
    network: &WeightedNetwork,
    leverage_f: f64,
) -> Result<TransferredSystem> {
    apply_risk_transfer_with(sheets, network, leverage_f, SheetPolicy::Strict)
}

pub fn apply_risk_transfer_with(
    sheets: &BalanceSheetSet,
    network: &WeightedNetwork,
    leverage_f: f64,
    policy: SheetPolicy,
) -> Result<TransferredSystem> {
    if sheets.n_banks() != network.n_banks() {
        return Err(Error::DimensionMismatch(format!(
            "{} balance sheets for {} banks",
            sheets.n_banks(),
            network.n_banks()
        )));
    }
    let base = transfer_sheets_with(sheets, leverage_f, policy)?;
    let covered_weights = network.weights().to_vec();
    let uncovered_weights = covered_weights.iter().map(|w| leverage_f * w).collect();
    Ok(TransferredSystem {
        base,
        covered_weights,
        uncovered_weights,
        leverage_f,
    })
}

/// Aggregate interbank loan ratio after risk transfer with additional lending
/// fraction `f`.
pub fn transferred_loan_ratio(theta: f64, leverage_f: f64) -> f64 {
    (theta + leverage_f * theta) / (1.0 + leverage_f * theta)
}

/// Capital over risk-weighted assets, with insured loans weighted 0%.
pub fn core_tier1_ratio(gamma: f64, theta: f64, leverage_f: f64) -> f64 {
    gamma / (1.0 - theta + leverage_f * theta)
}

/// Capital over total unweighted assets.
pub fn leverage_ratio(gamma: f64, theta: f64, leverage_f: f64) -> f64 {
    gamma / (1.0 + leverage_f * theta)
}
