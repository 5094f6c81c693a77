use safety_pool::metrics::Averaging;
use safety_pool::records::{read_pool_from, write_pool_to, Domain, Lexicon, OutcomeKind, Taxonomy};
use safety_pool::synth::{
    baseline_difficulty, baseline_difficulty_from_counts, difficulty_curve, draw_imbalanced_labels, draw_label_counts,
    draw_probabilities, generate_pool, Baseline, CompanySpec, CurveConfig, ImbalanceSpec, PoolSpec, RuleRegime,
};

fn frequencies(labels: &[usize], k: usize) -> Vec<f64> {
    let mut f = vec![0.0; k];
    labels.iter().for_each(|&l| f[l] += 1.0);
    f.iter().map(|x| x / labels.len() as f64).collect()
}

#[test]
fn empirical_frequencies_track_probabilities() {
    for seed in 0..3 {
        let spec = ImbalanceSpec::new(6, seed);
        let p = draw_probabilities(&spec);
        let f = frequencies(&draw_imbalanced_labels(&spec), 6);
        for (a, b) in p.iter().zip(&f) {
            // five standard errors at n = 1e5
            assert!((a - b).abs() < 5.0 * (a * (1.0 - a) / 1e5).sqrt() + 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn sampled_counts_track_probabilities() {
    for seed in 0..5 {
        let spec = ImbalanceSpec::new(9, seed);
        let p = draw_probabilities(&spec);
        let counts = draw_label_counts(&spec);
        assert_eq!(counts.iter().sum::<u64>(), 100_000);
        for (a, &c) in p.iter().zip(&counts) {
            let f = c as f64 / 1e5;
            assert!((a - f).abs() < 5.0 * (a * (1.0 - a) / 1e5).sqrt() + 1e-9, "{a} vs {f}");
        }
    }
}

#[test]
fn count_and_label_baselines_agree() {
    let labels = draw_imbalanced_labels(&ImbalanceSpec { lognormal_sd: 1.0, ..ImbalanceSpec::new(5, 9) });
    let mut support = vec![0u64; 5];
    labels.iter().for_each(|&l| support[l] += 1);
    for kind in [Baseline::Random, Baseline::MostFrequent] {
        for avg in [Averaging::Macro, Averaging::Weighted] {
            assert_eq!(
                baseline_difficulty(&labels, 5, kind, 3, avg),
                baseline_difficulty_from_counts(&support, kind, 3, avg)
            );
        }
    }
}

#[test]
fn zero_sd_gives_uniform_labels() {
    let spec = ImbalanceSpec { lognormal_sd: 0.0, ..ImbalanceSpec::new(5, 4) };
    let f = frequencies(&draw_imbalanced_labels(&spec), 5);
    assert!(f.iter().all(|x| (x - 0.2).abs() < 0.01));
}

#[test]
fn random_baseline_matches_closed_form() {
    for (k, seed) in [(2, 1), (4, 2), (6, 3), (9, 4)] {
        let spec = ImbalanceSpec { lognormal_sd: 1.0, ..ImbalanceSpec::new(k, seed) };
        let labels = draw_imbalanced_labels(&spec);
        let f = frequencies(&labels, k);
        let q = 1.0 / k as f64;
        let per_class: Vec<f64> = f.iter().map(|&p| 2.0 * p * q / (p + q)).collect();
        let macro_f1 = per_class.iter().sum::<f64>() / k as f64;
        let weighted: f64 = per_class.iter().zip(&f).map(|(x, p)| x * p).sum();
        let got_macro = baseline_difficulty(&labels, k, Baseline::Random, seed, Averaging::Macro);
        let got_weighted = baseline_difficulty(&labels, k, Baseline::Random, seed, Averaging::Weighted);
        assert!((got_macro - (1.0 - macro_f1)).abs() < 0.02, "k={k}");
        assert!((got_weighted - (1.0 - weighted)).abs() < 0.02, "k={k}");
    }
}

#[test]
fn most_frequent_baseline_is_exact() {
    for (k, seed) in [(2, 5), (5, 6), (12, 7)] {
        let labels = draw_imbalanced_labels(&ImbalanceSpec { n: 5000, ..ImbalanceSpec::new(k, seed) });
        let f = frequencies(&labels, k);
        let present = f.iter().filter(|&&p| p > 0.0).count() as f64;
        let pmax = f.iter().copied().fold(0.0, f64::max);
        let modal = 2.0 * pmax / (1.0 + pmax);
        let macro_d = baseline_difficulty(&labels, k, Baseline::MostFrequent, 0, Averaging::Macro);
        let weighted_d = baseline_difficulty(&labels, k, Baseline::MostFrequent, 0, Averaging::Weighted);
        assert!((macro_d - (1.0 - modal / present)).abs() < 1e-12);
        assert!((weighted_d - (1.0 - pmax * modal)).abs() < 1e-12);
    }
}

#[test]
fn curve_shape() {
    let cfg = CurveConfig { n: 20_000, replicates: 8, seed: 1, ..CurveConfig::default() };
    let rows = difficulty_curve(&cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), (2..=12).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.random) && (0.0..=1.0).contains(&r.most_frequent)));
    assert!(rows.last().unwrap().aggregate() > rows[0].aggregate());
    assert!(difficulty_curve(&CurveConfig { k_min: 1, ..cfg }).is_err());
    assert!(difficulty_curve(&CurveConfig { replicates: 0, ..cfg }).is_err());
}

fn pool_spec(regime: RuleRegime, noise: f64) -> PoolSpec {
    PoolSpec {
        seed: 17,
        outcome: OutcomeKind::AccidentType,
        categories: None,
        n_attributes: 10,
        n_informative: 4,
        density: 0.4,
        skew: 1.0,
        regime,
        rules: None,
        companies: vec![
            CompanySpec { name: "north".into(), domain: Domain::Construction, n: 400, noise },
            CompanySpec { name: "south".into(), domain: Domain::OilGas, n: 600, noise },
        ],
    }
}

fn rule_of(records: &[safety_pool::records::AccidentRecord], company: &str) -> Vec<Option<String>> {
    let mut table = vec![None; 16];
    for r in records.iter().filter(|r| r.company == company) {
        let p = (0..4).fold(0, |acc, j| acc | (r.attributes.get(j) as usize) << j);
        let label = r.label(OutcomeKind::AccidentType).unwrap().to_string();
        if let Some(prev) = &table[p] {
            assert_eq!(prev, &label, "noise-free records must follow one rule");
        }
        table[p] = Some(label);
    }
    table
}

#[test]
fn shared_rules_agree_across_companies() {
    let tax = Taxonomy::default();
    let records = generate_pool(&pool_spec(RuleRegime::Shared, 0.0), &tax).unwrap();
    let (a, b) = (rule_of(&records, "north"), rule_of(&records, "south"));
    for (x, y) in a.iter().zip(&b) {
        if let (Some(x), Some(y)) = (x, y) {
            assert_eq!(x, y);
        }
    }
    let disjoint = generate_pool(&pool_spec(RuleRegime::Disjoint, 0.0), &tax).unwrap();
    assert_ne!(rule_of(&disjoint, "north"), rule_of(&disjoint, "south"));
}

#[test]
fn noise_rate_is_respected() {
    let tax = Taxonomy::default();
    let clean = generate_pool(&pool_spec(RuleRegime::Shared, 0.0), &tax).unwrap();
    let noisy = generate_pool(&pool_spec(RuleRegime::Shared, 0.3), &tax).unwrap();
    let table = rule_of(&clean, "north");
    let flipped = noisy
        .iter()
        .filter(|r| {
            let p = (0..4).fold(0, |acc, j| acc | (r.attributes.get(j) as usize) << j);
            table[p].as_deref().is_some_and(|l| l != r.label(OutcomeKind::AccidentType).unwrap())
        })
        .count();
    let k = tax.categories(OutcomeKind::AccidentType).len() as f64;
    // a uniform redraw keeps the rule label 1/k of the time
    let expected = 0.3 * (1.0 - 1.0 / k) * noisy.len() as f64;
    assert!((flipped as f64 - expected).abs() < 0.25 * expected, "{flipped} vs {expected}");
}

#[test]
fn pools_are_deterministic_and_round_trip() {
    let tax = Taxonomy::default();
    let spec = pool_spec(RuleRegime::Shared, 0.1);
    let a = generate_pool(&spec, &tax).unwrap();
    assert_eq!(a, generate_pool(&spec, &tax).unwrap());
    assert_ne!(a, generate_pool(&PoolSpec { seed: 18, ..spec.clone() }, &tax).unwrap());

    let lex = Lexicon::numbered(spec.n_attributes);
    let mut buf = Vec::new();
    write_pool_to(&mut buf, &a, &lex).unwrap();
    let back = read_pool_from(buf.as_slice(), &lex, &tax).unwrap();
    assert_eq!(a, back);
}
