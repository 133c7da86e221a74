//! Interbank topology generation and loan-value assignment.
//!
//! The topology is grown as an undirected preferential-attachment graph with
//! additive attractiveness and then oriented edge by edge. Loan values follow
//! the power kernel `(k_out[creditor] * k_in[debtor])^r`, with `r` tuned by
//! bisection to hit a target top-1% concentration.

use rand::Rng;

use crate::error::{Error, Result};

/// Upper end of the bisection bracket on the weight exponent.
pub const R_MAX: f64 = 32.0;
/// Accepted absolute error on the tuned concentration.
pub const RHO_TOLERANCE: f64 = 0.005;
const MAX_BISECTIONS: usize = 60;

/// A directed loan edge: `creditor` lends to `debtor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub creditor: u32,
    pub debtor: u32,
}

impl Edge {
    pub fn new(creditor: usize, debtor: usize) -> Self {
        Edge {
            creditor: creditor as u32,
            debtor: debtor as u32,
        }
    }
}

/// Directed interbank topology. Edges are kept sorted by (creditor, debtor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n_banks: usize,
    edges: Vec<Edge>,
    in_degree: Vec<u32>,
    out_degree: Vec<u32>,
}

impl Topology {
    /// Builds a topology from an explicit edge list, rejecting self-edges,
    /// duplicates and out-of-range indices.
    pub fn from_edges(n_banks: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_unstable();
        let mut in_degree = vec![0u32; n_banks];
        let mut out_degree = vec![0u32; n_banks];
        for (i, e) in edges.iter().enumerate() {
            let (c, d) = (e.creditor as usize, e.debtor as usize);
            if c >= n_banks || d >= n_banks {
                return Err(Error::InvalidParameter(format!(
                    "edge {c}->{d} out of range for {n_banks} banks"
                )));
            }
            if c == d {
                return Err(Error::InvalidParameter(format!("self-edge on bank {c}")));
            }
            if i > 0 && edges[i - 1] == *e {
                return Err(Error::InvalidParameter(format!("duplicate edge {c}->{d}")));
            }
            out_degree[c] += 1;
            in_degree[d] += 1;
        }
        Ok(Topology {
            n_banks,
            edges,
            in_degree,
            out_degree,
        })
    }

    pub fn n_banks(&self) -> usize {
        self.n_banks
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn in_degree(&self) -> &[u32] {
        &self.in_degree
    }

    pub fn out_degree(&self) -> &[u32] {
        &self.out_degree
    }

    /// Degree in the underlying undirected graph.
    pub fn undirected_degree(&self) -> Vec<u32> {
        self.in_degree
            .iter()
            .zip(&self.out_degree)
            .map(|(i, o)| i + o)
            .collect()
    }

    pub fn has_edge(&self, creditor: usize, debtor: usize) -> bool {
        self.edges
            .binary_search(&Edge::new(creditor, debtor))
            .is_ok()
    }
}

/// Parameters of the preferential-attachment growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub n_banks: usize,
    /// Target average in-degree as a fraction of `n_banks - 1`.
    pub denseness: f64,
    /// Additive attractiveness expressed as a multiple of `m`; the kernel is
    /// `degree + offset_ratio * m` and the degree tail exponent is
    /// `3 + offset_ratio`. Must be greater than -1.
    pub offset_ratio: f64,
}

impl GrowthParams {
    pub fn new(n_banks: usize, denseness: f64) -> Self {
        GrowthParams {
            n_banks,
            denseness,
            offset_ratio: -0.5,
        }
    }

    /// Attachments per new node.
    pub fn attachments(&self) -> usize {
        (self.denseness * (self.n_banks as f64 - 1.0)).round() as usize
    }

    /// Tail exponent of the undirected degree distribution.
    pub fn tail_exponent(&self) -> f64 {
        3.0 + self.offset_ratio
    }
}

/// Grows a scale-free undirected graph and orients every edge uniformly at
/// random.
pub fn generate_topology<R: Rng + ?Sized>(params: &GrowthParams, rng: &mut R) -> Result<Topology> {
    let n = params.n_banks;
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 banks, got {n}"
        )));
    }
    if !(params.denseness > 0.0 && params.denseness <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "denseness {} outside (0, 1]",
            params.denseness
        )));
    }
    let m = params.attachments();
    if m < 1 {
        return Err(Error::InvalidParameter(format!(
            "denseness {} too small for {n} banks: no attachments per node",
            params.denseness
        )));
    }
    if !(params.offset_ratio > -1.0) || !params.offset_ratio.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "attractiveness offset ratio {} must exceed -1",
            params.offset_ratio
        )));
    }
    let offset = params.offset_ratio * m as f64;

    let mut degree = vec![0u32; n];
    // Every node appears once per incident edge, so a uniform pick is
    // degree-proportional.
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * m * n);
    let mut undirected: Vec<(u32, u32)> = Vec::with_capacity(m * n);

    for u in 0..=m {
        for v in (u + 1)..=m {
            undirected.push((u as u32, v as u32));
            endpoints.push(u as u32);
            endpoints.push(v as u32);
            degree[u] += 1;
            degree[v] += 1;
        }
    }

    let mut chosen = vec![false; n];
    let mut targets: Vec<u32> = Vec::with_capacity(m);
    for new in (m + 1)..n {
        targets.clear();
        let stub_mass = endpoints.len() as f64;
        let uniform_share = if offset > 0.0 {
            offset * new as f64 / (stub_mass + offset * new as f64)
        } else {
            0.0
        };
        while targets.len() < m {
            let candidate = if offset > 0.0 && rng.random::<f64>() < uniform_share {
                rng.random_range(0..new) as u32
            } else {
                let c = endpoints[rng.random_range(0..endpoints.len())];
                if offset < 0.0 {
                    let k = degree[c as usize] as f64;
                    if rng.random::<f64>() >= (k + offset) / k {
                        continue;
                    }
                }
                c
            };
            if !chosen[candidate as usize] {
                chosen[candidate as usize] = true;
                targets.push(candidate);
            }
        }
        for &t in &targets {
            chosen[t as usize] = false;
            undirected.push((t, new as u32));
            endpoints.push(t);
            endpoints.push(new as u32);
            degree[t as usize] += 1;
            degree[new] += 1;
        }
    }

    let directed = undirected.into_iter().map(|(a, b)| {
        if rng.random::<bool>() {
            Edge {
                creditor: a,
                debtor: b,
            }
        } else {
            Edge {
                creditor: b,
                debtor: a,
            }
        }
    });
    Topology::from_edges(n, directed)
}

/// Topology with a loan value on every edge, in units where the average bank
/// has total assets 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    topology: Topology,
    weights: Vec<f64>,
    exponent_r: f64,
    total_loans: f64,
}

impl WeightedNetwork {
    /// Wraps explicit per-edge weights (aligned with `topology.edges()`).
    pub fn from_weights(topology: Topology, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != topology.edge_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} edges",
                weights.len(),
                topology.edge_count()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "edge weight {w} is not strictly positive"
            )));
        }
        let total_loans = weights.iter().sum();
        Ok(WeightedNetwork {
            topology,
            weights,
            exponent_r: f64::NAN,
            total_loans,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_banks(&self) -> usize {
        self.topology.n_banks
    }

    pub fn edges(&self) -> &[Edge] {
        &self.topology.edges
    }

    /// Loan values aligned with `edges()`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Exponent used to generate the weights; NaN for explicit weights.
    pub fn exponent_r(&self) -> f64 {
        self.exponent_r
    }

    pub fn total_loans(&self) -> f64 {
        self.total_loans
    }

    /// Weight of the loan `creditor -> debtor`, zero off edges.
    pub fn weight(&self, creditor: usize, debtor: usize) -> f64 {
        self.topology
            .edges
            .binary_search(&Edge::new(creditor, debtor))
            .map_or(0.0, |i| self.weights[i])
    }

    /// Interbank loans per bank (row sums).
    pub fn loans(&self) -> Vec<f64> {
        row_sums(self.n_banks(), self.edges(), &self.weights)
    }

    /// Interbank borrowings per bank (column sums).
    pub fn borrowings(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.n_banks()];
        for (e, w) in self.edges().iter().zip(&self.weights) {
            b[e.debtor as usize] += w;
        }
        b
    }
}

fn row_sums(n: usize, edges: &[Edge], weights: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0; n];
    for (e, w) in edges.iter().zip(weights) {
        l[e.creditor as usize] += w;
    }
    l
}

/// `ln(k_out[creditor] * k_in[debtor])` per edge.
fn log_kernel(topology: &Topology) -> Vec<f64> {
    topology
        .edges
        .iter()
        .map(|e| {
            let k = topology.out_degree[e.creditor as usize] as f64
                * topology.in_degree[e.debtor as usize] as f64;
            k.ln()
        })
        .collect()
}

fn kernel_weights(log_kernel: &[f64], exponent_r: f64, total_loans: f64, out: &mut Vec<f64>) {
    out.clear();
    if exponent_r == 0.0 {
        out.resize(log_kernel.len(), total_loans / log_kernel.len() as f64);
        return;
    }
    let peak = log_kernel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.extend(log_kernel.iter().map(|lk| (exponent_r * (lk - peak)).exp()));
    let scale = total_loans / out.iter().sum::<f64>();
    out.iter_mut().for_each(|w| *w *= scale);
}

/// Assigns `total_loans * kernel / sum(kernel)` to every edge, with kernel
/// `(k_out[creditor] * k_in[debtor])^r`.
pub fn assign_loan_weights(
    topology: &Topology,
    exponent_r: f64,
    total_loans: f64,
) -> Result<WeightedNetwork> {
    if topology.edge_count() == 0 {
        return Err(Error::InvalidParameter("topology has no edges".into()));
    }
    if !(exponent_r >= 0.0) || !exponent_r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "weight exponent {exponent_r} must be a finite non-negative number"
        )));
    }
    if !(total_loans > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total loans {total_loans} must be positive"
        )));
    }
    let mut weights = Vec::with_capacity(topology.edge_count());
    kernel_weights(&log_kernel(topology), exponent_r, total_loans, &mut weights);
    Ok(WeightedNetwork {
        topology: topology.clone(),
        weights,
        exponent_r,
        total_loans,
    })
}

/// Number of banks counted in the top 1%.
pub fn top_bank_count(n_banks: usize) -> usize {
    n_banks.div_ceil(100).max(1)
}

fn top_share(loans: &mut [f64], total: f64) -> f64 {
    let k = top_bank_count(loans.len()).min(loans.len());
    if k < loans.len() {
        loans.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    loans[..k].iter().sum::<f64>() / total
}

/// Share of all interbank loans held by the top 1% of lenders.
pub fn measure_concentration(network: &WeightedNetwork) -> f64 {
    let mut loans = network.loans();
    top_share(&mut loans, network.total_loans)
}

/// Average in- (or out-) degree as a fraction of `N - 1`.
pub fn measure_denseness(topology: &Topology) -> f64 {
    let n = topology.n_banks as f64;
    topology.edge_count() as f64 / (n * (n - 1.0))
}

/// Bisects the weight exponent on `[0, R_MAX]` until the top-1% share is
/// within `RHO_TOLERANCE` of `target_rho`.
pub fn tune_concentration(
    topology: &Topology,
    target_rho: f64,
    total_loans: f64,
) -> Result<(f64, WeightedNetwork)> {
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target concentration {target_rho} outside (0, 1)"
        )));
    }
    if topology.edge_count() == 0 {
        return Err(Error::InvalidParameter("topology has no edges".into()));
    }
    if !(total_loans > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total loans {total_loans} must be positive"
        )));
    }

    let lk = log_kernel(topology);
    let n = topology.n_banks;
    let mut weights = Vec::with_capacity(lk.len());
    let rho_at = |r: f64, weights: &mut Vec<f64>| {
        kernel_weights(&lk, r, total_loans, weights);
        let mut loans = row_sums(n, &topology.edges, weights);
        top_share(&mut loans, total_loans)
    };
    let finish = |r: f64, weights: Vec<f64>| {
        (
            r,
            WeightedNetwork {
                topology: topology.clone(),
                weights,
                exponent_r: r,
                total_loans,
            },
        )
    };

    let at_zero = rho_at(0.0, &mut weights);
    if (at_zero - target_rho).abs() <= RHO_TOLERANCE {
        return Ok(finish(0.0, weights));
    }
    let at_max = rho_at(R_MAX, &mut weights);
    let unreachable = Error::Unreachable {
        target: target_rho,
        at_zero,
        at_max,
        r_max: R_MAX,
    };
    if target_rho < at_zero {
        return Err(unreachable);
    }
    if (at_max - target_rho).abs() <= RHO_TOLERANCE {
        return Ok(finish(R_MAX, weights));
    }
    if at_max < target_rho {
        return Err(unreachable);
    }

    let (mut lo, mut hi) = (0.0, R_MAX);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let rho = rho_at(mid, &mut weights);
        if (rho - target_rho).abs() <= RHO_TOLERANCE {
            return Ok(finish(mid, weights));
        }
        if rho < target_rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(unreachable)
}
