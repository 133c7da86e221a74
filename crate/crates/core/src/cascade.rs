//! Round-based default contagion with CDS settlement.
//!
//! Round 0 applies the external-asset distress. Every later round runs four
//! synchronous phases:
//!
//! * A: creditors of banks that failed in the previous round book the full
//!   exposure (insured plus additional notional) as a loss. No recovery.
//! * B: banks whose gross loss exceeds capital fail.
//! * C: surviving buyers claim the insured notional from their seller. A claim
//!   is honored only if both buyer and seller are alive after phase B and the
//!   seller has not defaulted on its protection book beforehand.
//! * D: banks whose loss (now including payoffs) exceeds capital fail.
//!
//! The cascade stops after the first round without new failures, or when
//! every bank has failed.

use std::fmt;

use crate::balance::{BalanceSheetSet, TransferredSystem};
use crate::cds::ProtectionPattern;
use crate::error::{Error, Result};
use crate::netgen::{Edge, WeightedNetwork};

const ALIVE: u32 = u32::MAX;

/// Additional, uninsured notional on top of the insured one.
#[derive(Debug, Clone, Copy)]
pub enum Uncovered<'a> {
    None,
    /// `f * covered` on every edge.
    Scaled(f64),
    PerEdge(&'a [f64]),
}

/// Everything the cascade needs to know about a system.
#[derive(Debug, Clone, Copy)]
pub struct LoanBook<'a> {
    pub capital: &'a [f64],
    pub edges: &'a [Edge],
    pub covered: &'a [f64],
    pub uncovered: Uncovered<'a>,
}

impl LoanBook<'_> {
    fn exposure(&self, edge: usize) -> f64 {
        match self.uncovered {
            Uncovered::None => self.covered[edge],
            Uncovered::Scaled(f) => self.covered[edge] + f * self.covered[edge],
            Uncovered::PerEdge(u) => self.covered[edge] + u[edge],
        }
    }

    fn validate(&self, protection: Option<&ProtectionPattern>, initial_loss: &[f64]) -> Result<()> {
        let n = self.capital.len();
        if initial_loss.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} initial losses for {n} banks",
                initial_loss.len()
            )));
        }
        if self.covered.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} notionals for {} edges",
                self.covered.len(),
                self.edges.len()
            )));
        }
        if let Uncovered::PerEdge(u) = self.uncovered {
            if u.len() != self.edges.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} additional notionals for {} edges",
                    u.len(),
                    self.edges.len()
                )));
            }
        }
        if let Some(p) = protection {
            if p.assignment().len() != self.edges.len() {
                return Err(Error::DimensionMismatch(format!(
                    "protection covers {} edges, network has {}",
                    p.assignment().len(),
                    self.edges.len()
                )));
            }
            if p.sellers().iter().any(|&s| s >= n) {
                return Err(Error::DimensionMismatch("seller index out of range".into()));
            }
        }
        if self
            .edges
            .iter()
            .any(|e| e.creditor as usize >= n || e.debtor as usize >= n)
        {
            return Err(Error::DimensionMismatch("edge index out of range".into()));
        }
        if initial_loss.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidParameter(
                "initial losses must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A system as handed to [`run_cascade`].
#[derive(Debug, Clone, Copy)]
pub enum SystemView<'a> {
    Plain {
        sheets: &'a BalanceSheetSet,
        network: &'a WeightedNetwork,
    },
    Transferred {
        system: &'a TransferredSystem,
        network: &'a WeightedNetwork,
    },
}

impl<'a> SystemView<'a> {
    fn book(&self) -> Result<LoanBook<'a>> {
        match *self {
            SystemView::Plain { sheets, network } => {
                if sheets.n_banks() != network.n_banks() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} sheets for {} banks",
                        sheets.n_banks(),
                        network.n_banks()
                    )));
                }
                Ok(LoanBook {
                    capital: &sheets.capital,
                    edges: network.edges(),
                    covered: network.weights(),
                    uncovered: Uncovered::None,
                })
            }
            SystemView::Transferred { system, network } => {
                if system.base.n_banks() != network.n_banks() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} sheets for {} banks",
                        system.base.n_banks(),
                        network.n_banks()
                    )));
                }
                Ok(LoanBook {
                    capital: &system.base.capital,
                    edges: network.edges(),
                    covered: &system.covered_weights,
                    uncovered: Uncovered::PerEdge(&system.uncovered_weights),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeResult {
    pub failures: usize,
    /// Failed banks in ascending index order.
    pub failed_set: Vec<usize>,
    /// Executed rounds, including the final quiet one.
    pub rounds: usize,
    /// New failures per executed round.
    pub per_round_failures: Vec<usize>,
}

impl CascadeResult {
    /// Rounds in which at least one bank failed.
    pub fn failure_rounds(&self) -> usize {
        self.per_round_failures.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Seed,
    Accrual,
    BuyerSolvency,
    Settlement,
    SellerSolvency,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Seed => "seed",
            Phase::Accrual => "A",
            Phase::BuyerSolvency => "B",
            Phase::Settlement => "C",
            Phase::SellerSolvency => "D",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Distress,
    LoanLoss,
    Failure,
    /// Buyer's loss reduced by an honored claim.
    Compensated,
    /// Seller's loss increased by an honored claim.
    Payoff,
    /// Claim not honored; the amount stays with the buyer.
    Unhonored,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Distress => "distress",
            EventKind::LoanLoss => "loan_loss",
            EventKind::Failure => "failure",
            EventKind::Compensated => "compensated",
            EventKind::Payoff => "payoff",
            EventKind::Unhonored => "unhonored",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub round: usize,
    pub phase: Phase,
    pub bank: usize,
    pub kind: EventKind,
    pub amount: f64,
}

/// `round,phase,bank,event,amount` rows.
pub fn trace_to_csv(events: &[TraceEvent]) -> String {
    let mut out = String::from("round,phase,bank,event,amount\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.round, e.phase, e.bank, e.kind, e.amount
        ));
    }
    out
}

struct Recorder<'t>(Option<&'t mut Vec<TraceEvent>>);

impl Recorder<'_> {
    #[inline]
    fn push(&mut self, round: usize, phase: Phase, bank: usize, kind: EventKind, amount: f64) {
        if let Some(t) = self.0.as_deref_mut() {
            t.push(TraceEvent {
                round,
                phase,
                bank,
                kind,
                amount,
            });
        }
    }
}

/// Edges grouped by debtor (CSR layout).
struct Incoming {
    offsets: Vec<usize>,
    edges: Vec<u32>,
}

impl Incoming {
    fn new(n: usize, edges: &[Edge]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for e in edges {
            offsets[e.debtor as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut slots = vec![0u32; edges.len()];
        for (i, e) in edges.iter().enumerate() {
            let d = e.debtor as usize;
            slots[cursor[d]] = i as u32;
            cursor[d] += 1;
        }
        Incoming {
            offsets,
            edges: slots,
        }
    }

    fn of(&self, debtor: usize) -> &[u32] {
        &self.edges[self.offsets[debtor]..self.offsets[debtor + 1]]
    }
}

fn solvency_sweep(
    loss: &[f64],
    capital: &[f64],
    failed_in: &mut [u32],
    round: usize,
    phase: Phase,
    newly: &mut Vec<usize>,
    rec: &mut Recorder<'_>,
) {
    for (b, status) in failed_in.iter_mut().enumerate() {
        if *status == ALIVE && loss[b] > capital[b] {
            *status = round as u32;
            newly.push(b);
            rec.push(round, phase, b, EventKind::Failure, loss[b]);
        }
    }
}

/// Runs the cascade on a raw loan book. This is the engine behind
/// [`run_cascade`]; the sweep harness calls it directly to avoid materialising
/// per-edge notionals for every cell.
pub fn run_book(
    book: &LoanBook<'_>,
    protection: Option<&ProtectionPattern>,
    initial_loss: &[f64],
    trace: Option<&mut Vec<TraceEvent>>,
) -> Result<CascadeResult> {
    book.validate(protection, initial_loss)?;
    let n = book.capital.len();
    let mut rec = Recorder(trace);
    let mut loss = initial_loss.to_vec();
    let mut failed_in = vec![ALIVE; n];
    let mut newly = Vec::new();

    for (b, &l) in loss.iter().enumerate() {
        if l > 0.0 {
            rec.push(0, Phase::Seed, b, EventKind::Distress, l);
        }
    }
    solvency_sweep(
        &loss,
        book.capital,
        &mut failed_in,
        0,
        Phase::BuyerSolvency,
        &mut newly,
        &mut rec,
    );
    let mut per_round = vec![newly.len()];
    let mut failed_total = newly.len();

    if failed_total > 0 {
        let incoming = Incoming::new(n, book.edges);
        let predefaulted = protection.map(|p| p.predefaulted_mask(n));
        let mut prev = Vec::new();
        let mut round = 0;
        while !newly.is_empty() && failed_total < n {
            round += 1;
            std::mem::swap(&mut prev, &mut newly);
            newly.clear();

            for &d in &prev {
                for &ei in incoming.of(d) {
                    let c = book.edges[ei as usize].creditor as usize;
                    if failed_in[c] == ALIVE {
                        let x = book.exposure(ei as usize);
                        loss[c] += x;
                        rec.push(round, Phase::Accrual, c, EventKind::LoanLoss, x);
                    }
                }
            }

            solvency_sweep(
                &loss,
                book.capital,
                &mut failed_in,
                round,
                Phase::BuyerSolvency,
                &mut newly,
                &mut rec,
            );

            if let (Some(p), Some(dead)) = (protection, predefaulted.as_deref()) {
                for &d in &prev {
                    for &ei in incoming.of(d) {
                        let ei = ei as usize;
                        let buyer = book.edges[ei].creditor as usize;
                        if failed_in[buyer] != ALIVE {
                            continue;
                        }
                        let seller = p.seller_of(ei);
                        let amount = book.covered[ei];
                        if failed_in[seller] != ALIVE || dead[seller] {
                            rec.push(
                                round,
                                Phase::Settlement,
                                buyer,
                                EventKind::Unhonored,
                                amount,
                            );
                            continue;
                        }
                        loss[buyer] -= amount;
                        loss[seller] += amount;
                        rec.push(
                            round,
                            Phase::Settlement,
                            buyer,
                            EventKind::Compensated,
                            amount,
                        );
                        rec.push(round, Phase::Settlement, seller, EventKind::Payoff, amount);
                    }
                }
            }

            solvency_sweep(
                &loss,
                book.capital,
                &mut failed_in,
                round,
                Phase::SellerSolvency,
                &mut newly,
                &mut rec,
            );
            per_round.push(newly.len());
            failed_total += newly.len();
        }
    }

    let failed_set: Vec<usize> = (0..n).filter(|&b| failed_in[b] != ALIVE).collect();
    Ok(CascadeResult {
        failures: failed_set.len(),
        failed_set,
        rounds: per_round.len(),
        per_round_failures: per_round,
    })
}

/// Runs the contagion to its fixed point.
pub fn run_cascade(
    system: SystemView<'_>,
    protection: Option<&ProtectionPattern>,
    initial_loss: &[f64],
) -> Result<CascadeResult> {
    if protection.is_some() && matches!(system, SystemView::Plain { .. }) {
        return Err(Error::InvalidParameter(
            "protection requires a risk-transferred system".into(),
        ));
    }
    run_book(&system.book()?, protection, initial_loss, None)
}

/// Same as [`run_cascade`], also returning the event trace.
pub fn run_cascade_traced(
    system: SystemView<'_>,
    protection: Option<&ProtectionPattern>,
    initial_loss: &[f64],
) -> Result<(CascadeResult, Vec<TraceEvent>)> {
    if protection.is_some() && matches!(system, SystemView::Plain { .. }) {
        return Err(Error::InvalidParameter(
            "protection requires a risk-transferred system".into(),
        ));
    }
    let mut events = Vec::new();
    let result = run_book(&system.book()?, protection, initial_loss, Some(&mut events))?;
    Ok((result, events))
}
