use cds_contagion::cds::{assign_protection, select_sellers_by_assets};
use cds_contagion::harness::{stream_rng, SampleDraw, Stream, SystemConfig};
use cds_contagion::netgen::{Edge, Topology, WeightedNetwork};
use cds_contagion::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper 1% point of chi-square with 9 degrees of freedom.
const CHI2_9_99: f64 = 21.666;

fn net(n: usize, edges: &[(usize, usize)]) -> WeightedNetwork {
    let t = Topology::from_edges(n, edges.iter().map(|&(a, b)| Edge::new(a, b))).unwrap();
    let k = edges.len();
    WeightedNetwork::from_weights(t, vec![1.0; k]).unwrap()
}

fn top_by(values: &[f64], k: usize) -> Vec<usize> {
    select_sellers_by_assets(values, k).unwrap()
}

#[test]
fn seller_selection_examples() {
    assert_eq!(top_by(&[5.0, 9.0, 9.0, 1.0], 2), vec![1, 2]);
    assert_eq!(top_by(&[5.0, 9.0, 9.0, 1.0], 4), vec![0, 1, 2, 3]);
    assert_eq!(top_by(&[1.0, 1.0, 1.0], 1), vec![0]);
    assert!(matches!(
        select_sellers_by_assets(&[1.0], 0),
        Err(Error::InvalidParameter(_))
    ));
    assert!(select_sellers_by_assets(&[1.0], 2).is_err());
}

#[test]
fn single_seller_examples() {
    let n = net(8, &[(0, 1), (1, 2), (3, 0), (5, 6)]);
    let p = assign_protection(&n, &[7], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(p.assignment().iter().all(|&s| s == 7));
    assert_eq!(p.seller_exposure(), &[4.0]);

    let n = net(8, &[(0, 1), (7, 2)]);
    assert!(matches!(
        assign_protection(&n, &[7], &mut ChaCha8Rng::seed_from_u64(3)),
        Err(Error::NoEligibleSeller {
            creditor: 7,
            debtor: 2
        })
    ));
}

#[test]
fn assignment_is_uniform_over_eligible_sellers() {
    let config = SystemConfig::default();
    let mut passes = 0;
    for seed in 0..100u64 {
        let draw = SampleDraw::generate(&config, seed, 0, 0.0, false).unwrap();
        let sellers = draw.sellers.clone();
        let mut rng = stream_rng(config.master_seed, seed, 0, Stream::Protection);
        let p = assign_protection(&draw.network, &sellers, &mut rng).unwrap();
        let s = sellers.len();
        let mut expected = vec![0.0; s];
        let mut observed = vec![0.0; s];
        for (e, &got) in draw.network.edges().iter().zip(p.assignment()) {
            let own = sellers.iter().position(|&x| x == e.creditor as usize);
            for (i, x) in expected.iter_mut().enumerate() {
                *x += match own {
                    None => 1.0 / s as f64,
                    Some(j) if j == i => 0.0,
                    Some(_) => 1.0 / (s - 1) as f64,
                };
            }
            observed[sellers.iter().position(|&x| x == got as usize).unwrap()] += 1.0;
        }
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        if chi2 < CHI2_9_99 {
            passes += 1;
        }
    }
    assert!(passes >= 95, "chi-square passes in {passes}/100 seeds");
}

#[test]
fn largest_banks_are_large_lenders_or_borrowers() {
    let config = SystemConfig::default();
    let k = config.s_sellers;
    let mut overlaps = Vec::new();
    for seed in 0..100u64 {
        let draw = SampleDraw::generate(&config, seed, 0, 0.0, false).unwrap();
        let by_assets = top_by(&draw.template.assets(), k);
        assert_eq!(by_assets, draw.sellers);
        let lenders = top_by(&draw.network.loans(), k);
        let borrowers = top_by(&draw.network.borrowings(), k);
        assert!(
            by_assets
                .iter()
                .all(|b| lenders.contains(b) || borrowers.contains(b)),
            "seed {seed}"
        );
        overlaps.push(by_assets.iter().filter(|b| lenders.contains(b)).count());
    }
    assert!(overlaps.iter().all(|&o| o >= 7), "{overlaps:?}");
    let most = overlaps.iter().filter(|&&o| o >= 9).count();
    assert!(most >= 65, "overlap >= 9 in {most}/100");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coverage_and_self_exclusion(n in 3usize..40, p_edge in 0.05f64..0.6, s in 2usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && rand::Rng::random_bool(&mut rng, p_edge) {
                    edges.push((a, b));
                }
            }
        }
        let network = net(n, &edges);
        let sellers: Vec<usize> = (0..s.min(n)).collect();
        let p = assign_protection(&network, &sellers, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(p.assignment().len(), edges.len());
        for (e, &sel) in network.edges().iter().zip(p.assignment()) {
            prop_assert!(sellers.contains(&(sel as usize)));
            prop_assert_ne!(sel, e.creditor);
        }
        let exposure: f64 = p.seller_exposure().iter().sum();
        prop_assert!((exposure - edges.len() as f64).abs() < 1e-9);
        let again = assign_protection(&network, &sellers, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(again, p);
    }
}
