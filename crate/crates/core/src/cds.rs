//! Protection sellers and the loan-to-seller assignment.

use rand::Rng;

use crate::balance::BalanceSheetSet;
use crate::error::{Error, Result};
use crate::netgen::WeightedNetwork;

/// Which seller insures each loan edge, plus per-seller exposure bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionPattern {
    sellers: Vec<usize>,
    /// Seller per edge, aligned with the network edges.
    assignment: Vec<u32>,
    /// Insured notional per seller, aligned with `sellers`.
    seller_exposure: Vec<f64>,
    /// Sellers treated as having defaulted on their CDS book before the
    /// cascade starts.
    defaulted: Vec<bool>,
}

impl ProtectionPattern {
    pub fn sellers(&self) -> &[usize] {
        &self.sellers
    }

    /// Seller of the protection on edge `edge_index`.
    pub fn seller_of(&self, edge_index: usize) -> usize {
        self.assignment[edge_index] as usize
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn seller_exposure(&self) -> &[f64] {
        &self.seller_exposure
    }

    /// Marks every seller as already in default on its protection contracts,
    /// so that no claim is ever honored.
    pub fn with_defaulted_sellers(mut self) -> Self {
        self.defaulted.iter_mut().for_each(|d| *d = true);
        self
    }

    /// Whether `bank` defaulted on its protection book before the cascade.
    pub fn is_predefaulted(&self, bank: usize) -> bool {
        self.sellers
            .iter()
            .position(|&s| s == bank)
            .is_some_and(|i| self.defaulted[i])
    }

    pub(crate) fn predefaulted_mask(&self, n_banks: usize) -> Vec<bool> {
        let mut mask = vec![false; n_banks];
        for (&s, &d) in self.sellers.iter().zip(&self.defaulted) {
            mask[s] = d;
        }
        mask
    }

    /// `creditor,debtor,seller,covered_notional` rows.
    pub fn to_csv(&self, network: &WeightedNetwork) -> String {
        let mut out = String::from("creditor,debtor,seller,covered_notional\n");
        for ((e, w), s) in network
            .edges()
            .iter()
            .zip(network.weights())
            .zip(&self.assignment)
        {
            out.push_str(&format!("{},{},{},{}\n", e.creditor, e.debtor, s, w));
        }
        out
    }
}

/// The `s_count` banks with the largest total assets, ties broken by index.
pub fn select_sellers(sheets: &BalanceSheetSet, s_count: usize) -> Result<Vec<usize>> {
    select_sellers_by_assets(&sheets.assets, s_count)
}

/// Same ranking on a bare asset column.
pub fn select_sellers_by_assets(assets: &[f64], s_count: usize) -> Result<Vec<usize>> {
    let n = assets.len();
    if s_count < 1 || s_count > n {
        return Err(Error::InvalidParameter(format!(
            "seller count {s_count} outside [1, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| assets[b].total_cmp(&assets[a]).then(a.cmp(&b)));
    order.truncate(s_count);
    order.sort_unstable();
    Ok(order)
}

/// Assigns every loan edge a seller drawn uniformly from `sellers` minus the
/// creditor itself.
pub fn assign_protection<R: Rng + ?Sized>(
    network: &WeightedNetwork,
    sellers: &[usize],
    rng: &mut R,
) -> Result<ProtectionPattern> {
    if sellers.is_empty() {
        return Err(Error::InvalidParameter("no protection sellers".into()));
    }
    let n = network.n_banks();
    if let Some(&s) = sellers.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidParameter(format!(
            "seller {s} out of range for {n} banks"
        )));
    }
    let mut slot = vec![usize::MAX; n];
    for (i, &s) in sellers.iter().enumerate() {
        slot[s] = i;
    }

    let mut assignment = Vec::with_capacity(network.edges().len());
    let mut seller_exposure = vec![0.0; sellers.len()];
    for (e, w) in network.edges().iter().zip(network.weights()) {
        let creditor = e.creditor as usize;
        let pick = match slot[creditor] {
            usize::MAX => rng.random_range(0..sellers.len()),
            own => {
                if sellers.len() == 1 {
                    return Err(Error::NoEligibleSeller {
                        creditor,
                        debtor: e.debtor as usize,
                    });
                }
                // skip the creditor's own slot
                let k = rng.random_range(0..sellers.len() - 1);
                if k >= own {
                    k + 1
                } else {
                    k
                }
            }
        };
        assignment.push(sellers[pick] as u32);
        seller_exposure[pick] += w;
    }
    Ok(ProtectionPattern {
        sellers: sellers.to_vec(),
        assignment,
        seller_exposure,
        defaulted: vec![false; sellers.len()],
    })
}
