use custext::attacks::{
    analytic_inversion_success, inversion_attack, query_attack, InversionAdversary, QueryAttackConfig,
};
use custext::rng::{Domain, RandomStream};
use custext::sampler::em_sample;
use custext::synth::gaussian_table;
use custext::{em_probabilities, generate_mapping, read_embeddings, MappingTable, Measure, SamplerParams, SeedOrder, TokenId};
use statrs::distribution::{Binomial, DiscreteCDF};

fn params(eps: f64) -> SamplerParams {
    SamplerParams::new(eps).unwrap()
}

fn toy_mapping() -> MappingTable {
    let t = read_embeddings("a 0.0\nb 1.0\nc 10.0\nd 11.0\n".as_bytes(), None).unwrap();
    generate_mapping(&t, 2, Measure::Euclidean, &SeedOrder::Vocab).unwrap()
}

/// First odd n whose strict-majority probability reaches `confidence`.
fn exact_two_member_n(p_self: f64, confidence: f64) -> u64 {
    (0..)
        .map(|m| 2 * m + 1)
        .find(|&n| {
            let b = Binomial::new(p_self, n).unwrap();
            1.0 - b.cdf(n / 2) >= confidence
        })
        .unwrap()
}

#[test]
fn query_attack_matches_binomial_oracle() {
    let p_self = em_probabilities(&[0.0, -1.0], params(2.0))[0];
    let oracle = exact_two_member_n(p_self, 0.95);
    assert_eq!(oracle, 11);
    let m = toy_mapping();
    for seed in 0..5 {
        let config = QueryAttackConfig { seed, ..Default::default() };
        let r = query_attack(&m, TokenId(0), params(2.0), &config).unwrap();
        assert!((9..=13).contains(&r.n), "seed {seed}: N = {}", r.n);
        assert!(r.n.abs_diff(oracle) <= 2);
        assert!(!r.censored && !r.no_protection);
    }
}

#[test]
fn query_attack_n_non_increasing_in_epsilon() {
    let t = gaussian_table(200, 10, 17);
    let m = generate_mapping(&t, 20, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let config = QueryAttackConfig::default();
    for x in [TokenId(0), TokenId(50), TokenId(199)] {
        let ns: Vec<u64> = [1.0, 2.0, 3.0, 8.0]
            .iter()
            .map(|&e| query_attack(&m, x, params(e), &config).unwrap().n)
            .collect();
        assert!(ns.iter().all(|&n| n >= 1));
        assert!(ns.windows(2).all(|w| w[0] >= w[1]), "{ns:?}");
    }
}

#[test]
fn singleton_group_has_no_protection() {
    let t = gaussian_table(10, 3, 1);
    let m = generate_mapping(&t, 1, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let r = query_attack(&m, TokenId(4), params(0.1), &QueryAttackConfig::default()).unwrap();
    assert_eq!(r.n, 1);
    assert!(r.no_protection);
    let inv = inversion_attack(&m, params(0.1), [(TokenId(3), TokenId(3))]);
    assert_eq!(inv.success_rate, 1.0);
}

fn sampled_pairs(m: &MappingTable, eps: f64, per_token: u64, seed: u64) -> Vec<(TokenId, TokenId)> {
    let stream = RandomStream::new(seed);
    let mut pairs = Vec::new();
    for x in m.vocab().ids() {
        for i in 0..per_token {
            let mut rng = stream.substream(Domain::Sampling, x.0 as u64, i);
            pairs.push((x, em_sample(m, x, params(eps), &mut rng).unwrap()));
        }
    }
    pairs
}

#[test]
fn two_member_inversion_equals_self_probability() {
    let m = toy_mapping();
    let r = inversion_attack(&m, params(2.0), sampled_pairs(&m, 2.0, 10_000, 5));
    assert!((r.success_rate - 0.7311).abs() < 0.01, "{}", r.success_rate);
    assert!((analytic_inversion_success(&m, params(2.0)) - 0.7311).abs() < 1e-4);
}

#[test]
fn inversion_monte_carlo_agrees_with_analytic() {
    let t = gaussian_table(100, 10, 23);
    for k in [3, 5, 20] {
        let m = generate_mapping(&t, k, Measure::Cosine, &SeedOrder::Vocab).unwrap();
        for eps in [0.5, 2.0, 8.0] {
            let r = inversion_attack(&m, params(eps), sampled_pairs(&m, eps, 2000, 7));
            let exact = analytic_inversion_success(&m, params(eps));
            assert!((r.success_rate - exact).abs() < 0.01, "k={k} eps={eps}: {} vs {exact}", r.success_rate);
            assert_eq!(r.skipped, 0);
            assert!((0.0..=1.0).contains(&r.success_rate));
        }
    }
}

#[test]
fn inversion_limits() {
    let t = gaussian_table(100, 10, 29);
    let m = generate_mapping(&t, 20, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let low = analytic_inversion_success(&m, params(1e-9));
    assert!((low - 1.0 / 20.0).abs() < 1e-6, "{low}");
    let high = analytic_inversion_success(&m, params(100.0));
    assert!(high > 0.999);
}

#[test]
fn tied_columns_guess_smallest_id() {
    let t = read_embeddings("a 1 0\nb 1 0\nc 1 0\n".as_bytes(), None).unwrap();
    let m = generate_mapping(&t, 3, Measure::Euclidean, &SeedOrder::Vocab).unwrap();
    let adv = InversionAdversary::new(&m, params(2.0));
    assert!(t.vocab().ids().all(|y| adv.guess(y) == TokenId(0)));
    assert!((analytic_inversion_success(&m, params(2.0)) - 1.0 / 3.0).abs() < 1e-12);
}
