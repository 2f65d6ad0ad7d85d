use dgmm::experiments::{
    run_experiment, write_records, write_summary, ExperimentConfig, NoiseRegime, SizeKnowledge,
};

fn config(regime: NoiseRegime, knowledge: SizeKnowledge, n_min: usize, n_max: usize, trials: usize) -> ExperimentConfig {
    ExperimentConfig { n_min, n_max, trials, ..ExperimentConfig::preset(regime, knowledge) }
}

fn summary_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let out = run_experiment(cfg).unwrap();
    let mut buf = Vec::new();
    write_summary(&out.summary, &mut buf).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_summary_bytes() {
    let cfg = ExperimentConfig { base_seed: 77, ..config(NoiseRegime::High, SizeKnowledge::Unknown, 2, 12, 40) };
    assert_eq!(summary_bytes(&cfg), summary_bytes(&cfg));
    let other = ExperimentConfig { base_seed: 78, ..cfg.clone() };
    assert_ne!(summary_bytes(&cfg), summary_bytes(&other));
}

#[test]
fn low_noise_rate_is_monotone_within_two_standard_errors() {
    for cfg in [
        config(NoiseRegime::Low, SizeKnowledge::Known, 8, 20, 200),
        config(NoiseRegime::Low, SizeKnowledge::Unknown, 8, 16, 200),
    ] {
        let out = run_experiment(&cfg).unwrap();
        for w in out.summary.windows(2) {
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            assert!(w[1].rate >= w[0].rate - 2.0 * se, "{:?} -> {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn known_sizes_dominate_trial_by_trial() {
    for regime in [NoiseRegime::Low, NoiseRegime::High] {
        let unknown = run_experiment(&config(regime, SizeKnowledge::Unknown, 2, 12, 100)).unwrap();
        let known = run_experiment(&config(regime, SizeKnowledge::Known, 2, 12, 100)).unwrap();
        for (u, k) in unknown.records.iter().zip(&known.records) {
            assert_eq!((u.n, u.trial, u.seed), (k.n, k.trial, k.seed));
            assert!(!u.recovered || k.recovered, "{u:?} vs {k:?}");
            assert!(k.objective_min >= u.objective_min - 1e-9 * u.objective_min.abs().max(1.0));
        }
    }
}

#[test]
fn balanced_sizes_never_recover() {
    // n = 4 and 6 give n₁ = n₂ with α = 16/25; every balanced partition then ties
    let out = run_experiment(&config(NoiseRegime::Low, SizeKnowledge::Unknown, 4, 6, 30)).unwrap();
    for r in out.records.iter().filter(|r| r.n != 5) {
        assert!(r.tied && !r.recovered, "{r:?}");
    }
    assert_eq!(out.rate(5), Some(1.0));
}

#[test]
fn thousand_trials_give_thousand_rows() {
    let out = run_experiment(&config(NoiseRegime::High, SizeKnowledge::Known, 7, 7, 1000)).unwrap();
    let mut buf = Vec::new();
    write_records(&out.records, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1001);
}

#[test]
fn objective_never_exceeds_truth() {
    let out = run_experiment(&config(NoiseRegime::High, SizeKnowledge::Unknown, 2, 14, 30)).unwrap();
    for r in &out.records {
        assert!(r.objective_min <= r.objective_true + 1e-9 * r.objective_true.abs().max(1.0), "{r:?}");
    }
}
