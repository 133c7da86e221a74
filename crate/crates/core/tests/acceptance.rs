//! Acceptance criteria, one `criterion N: PASS|FAIL` line each. Runs without
//! the libtest harness and exits non-zero if any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;

use cds_contagion::balance::{
    core_tier1_ratio, leverage_ratio, BalanceSheetSet, TransferredSystem,
};
use cds_contagion::cascade::{run_cascade, run_cascade_traced, EventKind, SystemView};
use cds_contagion::cds::{assign_protection, ProtectionPattern};
use cds_contagion::harness::{
    calibrate, run_sweep, write_sweep, SampleDraw, SweepOutput, SystemConfig,
};
use cds_contagion::market::{solo_failure_rate, Calibration};
use cds_contagion::metrics::{systemic_buffer_ratio, Arm, CurveMeta, SeverityCurve};
use cds_contagion::netgen::{
    assign_loan_weights, generate_topology, measure_concentration, measure_denseness,
    tune_concentration, Edge, GrowthParams, Topology, WeightedNetwork,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: u64 = 10_000;
const RATIO_TOL: f64 = 1e-12;
const CALIBRATION_TOL: f64 = 2e-4;
const RECHECK_TRIALS: usize = 10_000_000;
const RECHECK_SEED: u64 = 0x5eed_0002;
const VANISHING_SHARE: f64 = 0.01;
const NEUTRALITY_REL: f64 = 0.10;
const LEVERAGE_TOL: f64 = 0.015;
const ANCHOR: f64 = 0.073;
const ANCHOR_TOL: f64 = 0.010;
const EXCESS_NOISE: f64 = 0.005;
const MAX_VIOLATIONS: usize = 2;
const IDENTITY_TOL: f64 = 1e-9;
const FLOW_TOL: f64 = 1e-9;
const KAPPA_REL: f64 = 0.05;
const RHO_TOL: f64 = 0.005;

type Verdict = (bool, String);

fn verdict(pass: bool, detail: &str) -> Verdict {
    (pass, detail.to_string())
}

fn config(rho: f64) -> SystemConfig {
    SystemConfig {
        rho,
        samples: SAMPLES,
        ..SystemConfig::default()
    }
}

fn calibration() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| calibrate(&SystemConfig::default()).unwrap())
}

fn sweep(rho: f64) -> &'static SweepOutput {
    static BASE: OnceLock<SweepOutput> = OnceLock::new();
    static HIGH: OnceLock<SweepOutput> = OnceLock::new();
    static LOW: OnceLock<SweepOutput> = OnceLock::new();
    let cell = match rho {
        0.3 => &BASE,
        0.5 => &HIGH,
        0.1 => &LOW,
        _ => unreachable!(),
    };
    cell.get_or_init(|| run_sweep(&config(rho), calibration().amplitude).unwrap())
}

fn fmt_curve(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(" "))
}

fn fmt_ratios(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(" "))
}

/// Smallest equity ratio at which the piecewise-linear non-increasing curve
/// reaches `target`, clamped to the grid ends when `target` is out of range.
fn lowest_preimage(gammas: &[f64], f: &[f64], target: f64) -> f64 {
    let last = f.len() - 1;
    if target >= f[0] {
        return gammas[0];
    }
    if target < f[last] {
        return gammas[last];
    }
    let i = (0..last).find(|&i| f[i + 1] <= target).unwrap();
    let t = (f[i] - target) / (f[i] - f[i + 1]);
    gammas[i] + t * (gammas[i + 1] - gammas[i])
}

fn criterion_01_ratio_identities() -> Verdict {
    let r0 = core_tier1_ratio(0.09, 0.3, 0.0) / leverage_ratio(0.09, 0.3, 0.0);
    let r1 = core_tier1_ratio(0.09, 0.3, 1.0) / leverage_ratio(0.09, 0.3, 1.0);
    let pass = (r0 - 1.0 / 0.7).abs() < RATIO_TOL
        && (r1 - 1.3).abs() < RATIO_TOL
        && (r0 - 1.4286).abs() < 1e-4;
    verdict(pass, &format!("t'/l' = {r0:.12} (f=0), {r1:.12} (f=1)"))
}

fn criterion_02_calibration() -> Verdict {
    let cal = calibration();
    let c = SystemConfig::default();
    let rate = solo_failure_rate(
        cal.amplitude,
        c.calib_gamma,
        c.m_assets,
        c.dof,
        RECHECK_TRIALS,
        RECHECK_SEED,
    )
    .unwrap();
    let pass = (rate - c.calib_p).abs() <= CALIBRATION_TOL;
    verdict(
        pass,
        &format!(
            "amplitude {} gives {rate} on a fresh {RECHECK_TRIALS}-trial run (target {})",
            cal.amplitude, c.calib_p
        ),
    )
}

fn criterion_03_vanishing_contagion() -> Verdict {
    let base = sweep(0.3).baseline();
    let i = base
        .gammas
        .iter()
        .position(|&g| (g - 0.14).abs() < 1e-9)
        .unwrap();
    let share = base.raw_f_star[i] / 500.0;
    verdict(share < VANISHING_SHARE, &format!("F*(0.14)/N = {share}"))
}

fn criterion_04_zero_leverage_neutrality() -> Verdict {
    let s = sweep(0.3);
    let base = &s.baseline().raw_f_star;
    let zero = &s.transferred(0.0).unwrap().raw_f_star;
    let agree =
        |a: f64, b: f64| (a == 0.0 && b == 0.0) || (a - b).abs() <= NEUTRALITY_REL * a.max(b);
    let pass = base.iter().zip(zero).all(|(&a, &b)| agree(a, b));
    verdict(
        pass,
        &format!("baseline {} vs f=0 {}", fmt_curve(base), fmt_curve(zero)),
    )
}

fn criterion_05_leverage_tracking() -> Verdict {
    let s = sweep(0.3);
    let mut details = Vec::new();
    let mut pass = true;
    for f in [0.2, 0.4, 1.0] {
        let b = s.buffer(f).unwrap();
        let worst = b
            .gamma_s
            .iter()
            .zip(&b.l_prime)
            .map(|(g, l)| (g - l).abs())
            .fold(0.0, f64::max);
        pass &= worst <= LEVERAGE_TOL;
        details.push(format!("f={f}: max|gamma_s-l'| = {worst:.4}"));
    }
    verdict(pass, &details.join("; "))
}

fn criterion_06_anchor() -> Verdict {
    let s = sweep(0.3);
    let mut hits = Vec::new();
    let mut details = Vec::new();
    for f in [0.2, 0.4] {
        let gs = s.buffer(f).unwrap().gamma_s_at(0.09).unwrap();
        if (gs - ANCHOR).abs() <= ANCHOR_TOL {
            hits.push(f.to_string());
        }
        details.push(format!("f={f}: gamma_s(0.09) = {gs:.4}"));
    }
    let matched = if hits.is_empty() {
        "none".to_string()
    } else {
        hits.join(",")
    };
    verdict(
        !hits.is_empty(),
        &format!("{}; matching f: {matched}", details.join("; ")),
    )
}

/// Lower end of the baseline preimage of the transferred F*(0.10) minus
/// l'(0.10), per f arm.
fn excess_at_010(s: &SweepOutput) -> Vec<(f64, f64)> {
    let base = s.baseline();
    let i = base
        .gammas
        .iter()
        .position(|&g| (g - 0.10).abs() < 1e-9)
        .unwrap();
    [0.2, 0.4, 1.0]
        .iter()
        .map(|&f| {
            let target = s.transferred(f).unwrap().f_star[i];
            let lo = lowest_preimage(&base.gammas, &base.f_star, target);
            (f, lo - leverage_ratio(0.10, 0.3, f))
        })
        .collect()
}

fn criterion_07_concentration_effect() -> Verdict {
    let high = excess_at_010(sweep(0.5));
    let low = excess_at_010(sweep(0.1));
    let high_ok = high.iter().any(|&(_, e)| e > 0.0);
    let low_ok = low.iter().all(|&(_, e)| e <= EXCESS_NOISE);
    let fmt = |v: &[(f64, f64)]| {
        v.iter()
            .map(|(f, e)| format!("f={f}:{e:+.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let b5 = sweep(0.5).buffer(1.0).unwrap();
    let b1 = sweep(0.1).buffer(1.0).unwrap();
    verdict(high_ok && low_ok,
        &format!(
            "excess of lowest consistent gamma_s(0.10) over l'(0.10): rho=0.5 {} ({}); rho=0.1 {} ({}); point gamma_s(f=1) {:.4}/{:.4}",
            fmt(&high),
            if high_ok { "excess" } else { "no excess" },
            fmt(&low),
            if low_ok { "within noise" } else { "excess" },
            b5.gamma_s_at(0.10).unwrap(),
            b1.gamma_s_at(0.10).unwrap(),
        ),
    )
}

fn criterion_08_monotonic_severity() -> Verdict {
    let s = sweep(0.3);
    let worst = s
        .severity
        .iter()
        .map(|c| c.monotonicity_violations())
        .max()
        .unwrap();
    let zero = &s.transferred(0.0).unwrap().f_star;
    let one = &s.transferred(1.0).unwrap().f_star;
    let n = zero.len();
    let ordered = (1..n - 1).all(|i| one[i] > zero[i]);
    verdict(
        worst < MAX_VIOLATIONS && ordered,
        &format!(
            "max violations {worst}; F*(f=1) {} vs F*(f=0) {}",
            fmt_curve(&one[1..n - 1]),
            fmt_curve(&zero[1..n - 1])
        ),
    )
}

fn criterion_09_balance_identities() -> Verdict {
    let c = SystemConfig::default();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst = 0.0f64;
    let mut accepted = 0;
    let mut index = 0u64;
    while accepted < 1000 {
        let draw = SampleDraw::generate(&c, index, 0, 0.0, false).unwrap();
        let gamma = c.gamma_grid[index as usize % c.gamma_grid.len()];
        index += 1;
        let Ok(s) = draw.template.sheets(gamma, c.sheet_policy) else {
            continue;
        };
        accepted += 1;
        let (sl, sa, se): (f64, f64, f64) = (
            s.loans.iter().sum(),
            s.assets.iter().sum(),
            s.external.iter().sum(),
        );
        worst = worst
            .max(rel(se, (1.0 - c.theta) / c.theta * sl))
            .max((sl / sa - c.theta).abs());
        for n in 0..s.n_banks() {
            worst = worst.max(rel(
                s.assets[n],
                s.capital[n] + s.borrowings[n] + s.deposits[n],
            ));
        }
    }
    verdict(
        worst <= IDENTITY_TOL,
        &format!("{accepted} samples, worst residual {worst:e}"),
    )
}

fn hand_sheets(capital: Vec<f64>) -> BalanceSheetSet {
    let n = capital.len();
    BalanceSheetSet {
        loans: vec![0.0; n],
        borrowings: vec![0.0; n],
        external: capital.clone(),
        deposits: vec![0.0; n],
        assets: capital.clone(),
        capital,
        gamma: 1.0,
        theta: 0.0,
    }
}

fn system(capital: Vec<f64>, net: &WeightedNetwork, f: f64) -> TransferredSystem {
    TransferredSystem {
        base: hand_sheets(capital),
        covered_weights: net.weights().to_vec(),
        uncovered_weights: net.weights().iter().map(|w| f * w).collect(),
        leverage_f: f,
    }
}

fn random_system(seed: u64) -> (WeightedNetwork, Vec<f64>, Vec<f64>, f64, ProtectionPattern) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..40);
    let p = rng.random_range(0.05..0.4);
    let mut edges = vec![Edge::new(0, 1)];
    for a in 0..n {
        for b in 0..n {
            if a != b && (a, b) != (0, 1) && rng.random_bool(p) {
                edges.push(Edge::new(a, b));
            }
        }
    }
    let weights = (0..edges.len())
        .map(|_| rng.random_range(0.01..1.0))
        .collect();
    let net =
        WeightedNetwork::from_weights(Topology::from_edges(n, edges).unwrap(), weights).unwrap();
    let capital = (0..n).map(|_| rng.random_range(0.05..1.5)).collect();
    let loss = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                rng.random_range(0.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    let k = rng.random_range(2..=n.min(6));
    let mut sellers = rand::seq::index::sample(&mut rng, n, k).into_vec();
    sellers.sort_unstable();
    let protection = assign_protection(&net, &sellers, &mut rng).unwrap();
    (net, capital, loss, rng.random_range(0.0..1.0), protection)
}

fn criterion_10_cascade_oracles() -> Verdict {
    let t = Topology::from_edges(3, [Edge::new(0, 1)]).unwrap();
    let net = WeightedNetwork::from_weights(t, vec![0.2]).unwrap();
    let p = assign_protection(&net, &[2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let shock = [0.0, 0.1, 0.0];
    let plain_sheets = hand_sheets(vec![0.05, 0.03, 0.04]);
    let no_cds = run_cascade(
        SystemView::Plain {
            sheets: &plain_sheets,
            network: &net,
        },
        None,
        &shock,
    )
    .unwrap();
    let weak = system(vec![0.05, 0.03, 0.04], &net, 0.0);
    let with_cds = run_cascade(
        SystemView::Transferred {
            system: &weak,
            network: &net,
        },
        Some(&p),
        &shock,
    )
    .unwrap();
    let strong = system(vec![0.25, 0.03, 0.04], &net, 0.0);
    let seller_hit = run_cascade(
        SystemView::Transferred {
            system: &strong,
            network: &net,
        },
        Some(&p),
        &shock,
    )
    .unwrap();
    let traces_ok = no_cds.failed_set == [0, 1]
        && with_cds.failed_set == [0, 1]
        && seller_hit.failed_set == [1, 2];

    let mut worst_flow = 0.0f64;
    let mut dead_ok = 0;
    for seed in 0..100 {
        let (net, capital, loss, f, p) = random_system(seed);
        let sys = system(capital, &net, f);
        let view = SystemView::Transferred {
            system: &sys,
            network: &net,
        };
        let (_, trace) = run_cascade_traced(view, Some(&p), &loss).unwrap();
        let rounds = trace.iter().map(|e| e.round).max().unwrap_or(0);
        for r in 0..=rounds {
            let sum = |k: EventKind| {
                trace
                    .iter()
                    .filter(|e| e.round == r && e.kind == k)
                    .map(|e| e.amount)
                    .sum::<f64>()
            };
            worst_flow =
                worst_flow.max((sum(EventKind::Compensated) - sum(EventKind::Payoff)).abs());
        }
        let dead = p.clone().with_defaulted_sellers();
        if run_cascade(view, Some(&dead), &loss).unwrap() == run_cascade(view, None, &loss).unwrap()
        {
            dead_ok += 1;
        }
    }
    verdict(traces_ok && worst_flow <= FLOW_TOL && dead_ok == 100,
        &format!(
            "hand traces {:?} {:?} {:?}; worst per-round claim imbalance {worst_flow:e}; dead-seller equivalence {dead_ok}/100",
            no_cds.failed_set, with_cds.failed_set, seller_hit.failed_set
        ),
    )
}

fn criterion_11_inversion_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gammas: Vec<f64> = (0..11).map(|i| 0.04 + 0.01 * i as f64).collect();
    let mut exact = 0;
    for _ in 0..100 {
        let mut v: Vec<f64> = (0..11)
            .map(|_| rng.random_range(0.0..500.0f64).round())
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v[0] == v[10] {
            v[0] += 1.0;
        }
        let meta = CurveMeta {
            kappa: 0.05,
            rho: 0.3,
            theta: 0.3,
            arm: Arm::Baseline,
            leverage_f: 0.0,
        };
        let c = SeverityCurve::from_raw(gammas.clone(), v, meta).unwrap();
        if systemic_buffer_ratio(&c, &c).unwrap().gamma_s == gammas {
            exact += 1;
        }
    }
    verdict(
        exact == 100,
        &format!("identity exact on {exact}/100 curves"),
    )
}

fn criterion_12_determinism() -> Verdict {
    let c = SystemConfig {
        samples: 1000,
        ..SystemConfig::default()
    };
    let cal = calibration();
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        write_sweep(d.path(), &c, cal, &run_sweep(&c, cal.amplitude).unwrap()).unwrap();
    }
    let same = ["severity.csv", "buffer.csv"].iter().all(|f| {
        fs::read(dirs[0].path().join(f)).unwrap() == fs::read(dirs[1].path().join(f)).unwrap()
    });
    verdict(
        same,
        "severity.csv and buffer.csv compared byte for byte over two runs",
    )
}

fn criterion_13_network_statistics() -> Verdict {
    let params = GrowthParams::new(500, 0.05);
    let topologies: Vec<Topology> = (0..100)
        .map(|s| generate_topology(&params, &mut ChaCha8Rng::seed_from_u64(s)).unwrap())
        .collect();
    let kappa = topologies.iter().map(measure_denseness).sum::<f64>() / 100.0;
    let kappa_ok = (kappa / 0.05 - 1.0).abs() <= KAPPA_REL;
    let mut worst_rho = 0.0f64;
    let mut monotone = true;
    for t in &topologies[..20] {
        let (_, net) = tune_concentration(t, 0.3, 150.0).unwrap();
        worst_rho = worst_rho.max((measure_concentration(&net) - 0.3).abs());
        let rhos: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&r| measure_concentration(&assign_loan_weights(t, r, 150.0).unwrap()))
            .collect();
        monotone &= rhos.windows(2).all(|w| w[0] <= w[1]);
    }
    verdict(
        kappa_ok && worst_rho <= RHO_TOL && monotone,
        &format!(
            "mean kappa {kappa:.5}; worst |rho-0.3| {worst_rho:.5}; monotone in r: {monotone}"
        ),
    )
}

fn print_curves() {
    for rho in [0.3, 0.5, 0.1] {
        let s = sweep(rho);
        for c in &s.severity {
            println!(
                "rho={rho} {} f={}: F* {}",
                c.meta.arm,
                c.meta.leverage_f,
                fmt_curve(&c.raw_f_star)
            );
        }
        for b in &s.buffers {
            println!(
                "rho={rho} f={}: gamma_s {} l' {}",
                b.leverage_f,
                fmt_ratios(&b.gamma_s),
                fmt_ratios(&b.l_prime)
            );
        }
    }
}

fn main() -> ExitCode {
    let criteria: [fn() -> Verdict; 13] = [
        criterion_01_ratio_identities,
        criterion_02_calibration,
        criterion_03_vanishing_contagion,
        criterion_04_zero_leverage_neutrality,
        criterion_05_leverage_tracking,
        criterion_06_anchor,
        criterion_07_concentration_effect,
        criterion_08_monotonic_severity,
        criterion_09_balance_identities,
        criterion_10_cascade_oracles,
        criterion_11_inversion_identity,
        criterion_12_determinism,
        criterion_13_network_statistics,
    ];
    let mut failed = 0;
    for (i, check) in criteria.iter().enumerate() {
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    print_curves();
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
