mod common;

use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use engage_core::corpus::{Corpus, Thread};
use engage_core::format::Provenance;
use engage_core::generator::{generate_corpus, recovery_score, GroundTruthSpec};
use engage_core::mixture::{
    assign, beta_mom, corpus_log_likelihood, gibbs_fit, gibbs_fit_with_trace, log_beta_pdf, model_from_json,
    model_to_json, sweep_k, thread_log_likelihood, BetaParams, EngagementModel, FitConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use statrs::distribution::{Beta as OracleBeta, Continuous};

use common::{scaled, thread, toy_corpus_10, toy_corpus_3};

/// Five-point Gauss-Legendre over `n` equal panels of (0, 1).
fn integrate(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let mid = (i as f64 + 0.5) * h;
            X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

#[test]
fn beta_density_integrates_to_one() {
    for (a, b) in [(3.0, 7.0), (2.0, 5.0), (5.0, 1.0), (2.5, 3.5), (10.0, 20.0)] {
        let total = integrate(|x| log_beta_pdf(x, a, b).unwrap().exp(), 2000);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }
}

#[test]
fn log_density_matches_reference_implementation() {
    for (a, b) in [(0.5, 0.5), (2.0, 5.0), (8.0, 3.0), (1.5, 9.0)] {
        let oracle = OracleBeta::new(a, b).unwrap();
        for x in [1e-6, 0.01, 0.3, 0.5, 0.77, 0.999_999] {
            assert_abs_diff_eq!(log_beta_pdf(x, a, b).unwrap(), oracle.ln_pdf(x), epsilon = 1e-9);
        }
    }
}

#[test]
fn mom_recovers_sampled_parameters() {
    for (i, (a, b)) in [(2.0, 5.0), (0.5, 0.5), (5.0, 1.0)].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let dist = Beta::new(a, b).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let p = beta_mom(&xs, 5).unwrap();
        assert!((p.alpha - a).abs() / a < 0.10, "alpha {} vs {a}", p.alpha);
        assert!((p.beta - b).abs() / b < 0.10, "beta {} vs {b}", p.beta);
    }
}

/// Direct evaluation of the thread likelihood, reply by reply, against an
/// independent Beta density.
fn oracle_log_likelihood(t: &Thread, e: usize, m: &EngagementModel) -> f64 {
    let c = &m.clusters[e];
    let k = m.k as f64;
    let mut ll = ((c.n_threads as f64 + m.alpha_e) / (m.n_threads_fit as f64 + k * m.alpha_e)).ln();
    ll += OracleBeta::new(c.length.alpha, c.length.beta).unwrap().ln_pdf(t.length_scaled.unwrap());
    let counts = c.role_counts.to_array();
    let total: u64 = counts.iter().sum();
    let delta = OracleBeta::new(c.delta.alpha, c.delta.beta).unwrap();
    for r in &t.replies {
        ll += ((counts[r.role.index()] as f64 + m.alpha_r) / (total as f64 + 4.0 * m.alpha_r)).ln();
        ll += delta.ln_pdf(r.delta_scaled.unwrap());
    }
    ll
}

fn oracle_posterior(t: &Thread, m: &EngagementModel) -> Vec<f64> {
    let lls: Vec<f64> = (0..m.k).map(|e| oracle_log_likelihood(t, e, m)).collect();
    let max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lls.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn toy_config(k: usize, seed: u64) -> FitConfig {
    FitConfig { min_cluster_for_mom: 2, n_sweeps: 10, ..FitConfig::new(k, seed) }
}

fn check_posteriors(corpus: &Corpus, seed: u64) {
    let model = gibbs_fit(corpus, &toy_config(2, seed)).unwrap();
    let post = assign(&model, corpus).unwrap();
    for t in &corpus.threads {
        let got = &post[&t.thread_id];
        let want = oracle_posterior(t, &model);
        assert_eq!(got.posterior.len(), 2);
        for (g, w) in got.posterior.iter().zip(&want) {
            assert_abs_diff_eq!(*g, *w, epsilon = 1e-10);
        }
        for e in 0..2 {
            let ll = thread_log_likelihood(t, e, &model, false).unwrap();
            assert_abs_diff_eq!(ll, oracle_log_likelihood(t, e, &model), epsilon = 1e-9);
        }
    }
}

#[test]
fn posterior_matches_direct_evaluation_three_threads() {
    let corpus = toy_corpus_3();
    // a hand-made model so both clusters carry non-uniform shapes
    let mut model = gibbs_fit(&corpus, &toy_config(2, 1)).unwrap();
    model.clusters[0].length = BetaParams::new(2.0, 6.0).unwrap();
    model.clusters[1].delta = BetaParams::new(0.7, 3.0).unwrap();
    for t in &corpus.threads {
        let got = &assign(&model, &corpus).unwrap()[&t.thread_id];
        for (g, w) in got.posterior.iter().zip(oracle_posterior(t, &model)) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-10);
        }
    }
    check_posteriors(&corpus, 2);
}

#[test]
fn posterior_matches_direct_evaluation_ten_threads() {
    for seed in 0..5 {
        check_posteriors(&toy_corpus_10(), seed);
    }
}

#[test]
fn single_cluster_single_reply_example() {
    let corpus = scaled(vec![
        thread("only", 0, &[("s", 0), ("a", 10)]),
        thread("other", 0, &[("s2", 0), ("b", 20), ("c", 50)]),
    ]);
    let model = gibbs_fit(&corpus, &FitConfig::new(1, 3)).unwrap();
    assert_eq!(model.clusters[0].length, BetaParams::UNIFORM);
    let t = &corpus.threads[0];
    // cluster roles: two first peer-supporters, one new; one FirstPS draw
    let c = &model.clusters[0];
    assert_eq!(c.role_counts.to_array(), [2, 1, 0, 0]);
    let mix = ((c.n_threads as f64 + model.alpha_e) / (model.n_threads_fit as f64 + model.alpha_e)).ln();
    let role = ((2.0 + model.alpha_r) / (3.0 + 4.0 * model.alpha_r)).ln();
    assert_abs_diff_eq!(thread_log_likelihood(t, 0, &model, false).unwrap(), mix + role, epsilon = 1e-12);
    assert_abs_diff_eq!(mix, 0.0, epsilon = 1e-15);

    // collapsed: this thread's own counts removed, |T| - 1
    let own_removed = ((1.0 + model.alpha_e) / (1.0 + model.alpha_e)).ln()
        + ((1.0 + model.alpha_r) / (2.0 + 4.0 * model.alpha_r)).ln();
    assert_abs_diff_eq!(thread_log_likelihood(t, 0, &model, true).unwrap(), own_removed, epsilon = 1e-12);
}

#[test]
fn single_cluster_fit_holds_corpus_totals() {
    let corpus = toy_corpus_10();
    let model = gibbs_fit(&corpus, &FitConfig::new(1, 9)).unwrap();
    assert!(model.assignments.values().all(|&e| e == 0));
    let mut totals = [0u64; 4];
    for t in &corpus.threads {
        for (a, b) in totals.iter_mut().zip(t.role_counts()) {
            *a += u64::from(b);
        }
    }
    assert_eq!(model.clusters[0].role_counts.to_array(), totals);
    for a in assign(&model, &corpus).unwrap().values() {
        assert_eq!(a.posterior, vec![1.0]);
    }
}

#[test]
fn identical_clusters_score_identically() {
    let corpus = toy_corpus_10();
    let mut model = gibbs_fit(&corpus, &toy_config(2, 4)).unwrap();
    model.clusters[1] = model.clusters[0].clone();
    for t in &corpus.threads {
        assert_eq!(
            thread_log_likelihood(t, 0, &model, false).unwrap(),
            thread_log_likelihood(t, 1, &model, false).unwrap()
        );
    }
}

#[test]
fn fit_is_deterministic_and_round_trips() {
    let corpus = generate_corpus(&GroundTruthSpec::well_separated(600, 5)).unwrap().corpus;
    let cfg = FitConfig::new(4, 7);
    let a = model_to_json(&gibbs_fit(&corpus, &cfg).unwrap(), &Provenance::with_seed(7)).unwrap();
    let b = model_to_json(&gibbs_fit(&corpus, &cfg).unwrap(), &Provenance::with_seed(7)).unwrap();
    assert_eq!(a, b);
    let (model, prov) = model_from_json(&a).unwrap();
    assert_eq!(model_to_json(&model, &prov).unwrap(), a);
    assert_eq!(model, gibbs_fit(&corpus, &cfg).unwrap());
}

#[test]
fn counts_are_conserved() {
    let synth = generate_corpus(&GroundTruthSpec::well_separated(800, 11)).unwrap();
    let corpus = synth.corpus;
    let replies: u64 = corpus.threads.iter().map(|t| t.replies.len() as u64).sum();
    for sweeps in [1, 3, 8] {
        let model = gibbs_fit(&corpus, &FitConfig { n_sweeps: sweeps, early_stop_frac: 0.0, ..FitConfig::new(5, 2) }).unwrap();
        assert_eq!(model.cluster_sizes().iter().sum::<u64>(), corpus.non_isolated().count() as u64);
        assert_eq!(model.clusters.iter().map(|c| c.role_counts.total()).sum::<u64>(), replies);
        let mut recount = vec![[0u64; 4]; model.k];
        for t in &corpus.threads {
            let e = model.assignments[&t.thread_id];
            for (a, b) in recount[e].iter_mut().zip(t.role_counts()) {
                *a += u64::from(b);
            }
        }
        for (c, r) in model.clusters.iter().zip(recount) {
            assert_eq!(c.role_counts.to_array(), r);
        }
    }
}

#[test]
fn likelihood_is_invariant_under_relabeling() {
    let corpus = generate_corpus(&GroundTruthSpec::well_separated(400, 3)).unwrap().corpus;
    let model = gibbs_fit(&corpus, &FitConfig::new(4, 1)).unwrap();
    let perm = [2usize, 0, 3, 1];
    let mut permuted = model.clone();
    for (old, &new) in perm.iter().enumerate() {
        permuted.clusters[new] = model.clusters[old].clone();
    }
    for e in permuted.assignments.values_mut() {
        *e = perm[*e];
    }
    let a = corpus_log_likelihood(&model, &corpus).unwrap();
    let b = corpus_log_likelihood(&permuted, &corpus).unwrap();
    assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs());
}

#[test]
fn corpus_likelihood_is_the_sum_of_thread_terms() {
    let corpus = toy_corpus_10();
    let model = gibbs_fit(&corpus, &toy_config(2, 8)).unwrap();
    let direct: f64 = corpus
        .threads
        .iter()
        .map(|t| oracle_log_likelihood(t, model.assignments[&t.thread_id], &model))
        .sum();
    assert_abs_diff_eq!(corpus_log_likelihood(&model, &corpus).unwrap(), direct, epsilon = 1e-9);

    let empty = Corpus { threads: vec![thread("iso", 0, &[("s", 0)])], scaling: corpus.scaling };
    assert_eq!(corpus_log_likelihood(&model, &empty).unwrap(), 0.0);
}

#[test]
fn duplicating_a_thread_lowers_the_likelihood() {
    let corpus = toy_corpus_10();
    let model = gibbs_fit(&corpus, &toy_config(2, 8)).unwrap();
    let base = corpus_log_likelihood(&model, &corpus).unwrap();
    let mut extended = corpus.clone();
    let mut dup = corpus.threads[3].clone();
    dup.thread_id = "t03-copy".into();
    let mut with_dup = model.clone();
    with_dup.assignments.insert(dup.thread_id.clone(), model.assignments["t03"]);
    extended.threads.push(dup);
    let more = corpus_log_likelihood(&with_dup, &extended).unwrap();
    assert!(more.is_finite());
    assert!(more < base);
}

#[test]
fn refitted_assignments_agree_with_hard_labels() {
    let corpus = generate_corpus(&GroundTruthSpec::well_separated(2000, 21)).unwrap().corpus;
    let model = gibbs_fit(&corpus, &FitConfig::new(4, 3)).unwrap();
    let post = assign(&model, &corpus).unwrap();
    let agree = model.assignments.iter().filter(|(id, e)| post[*id].cluster == Some(**e)).count();
    assert!(agree as f64 / model.assignments.len() as f64 >= 0.95, "{agree} of {}", model.assignments.len());
    for a in post.values() {
        assert_abs_diff_eq!(a.posterior.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn assign_rejects_foreign_scaling() {
    let corpus = toy_corpus_10();
    let model = gibbs_fit(&corpus, &toy_config(2, 8)).unwrap();
    let mut other = corpus.clone();
    other.scaling.as_mut().unwrap().delta_cap += 1.0;
    assert!(assign(&model, &other).is_err());
    other.scaling = None;
    assert!(assign(&model, &other).is_err());

    let mut iso = corpus.clone();
    iso.threads.push(thread("iso", 0, &[("z", 0)]));
    let a = assign(&model, &iso).unwrap();
    assert!(a["iso"].is_isolated());
    assert!(a["iso"].posterior.is_empty());
}

#[test]
fn fit_rejects_too_many_clusters() {
    let corpus = toy_corpus_3();
    assert!(gibbs_fit(&corpus, &FitConfig::new(4, 0)).is_err());
    let unscaled = Corpus::new(corpus.threads.clone());
    assert!(gibbs_fit(&unscaled, &FitConfig::new(2, 0)).is_err());
}

#[test]
fn recovers_well_separated_clusters() {
    for seed in [1u64, 2, 3] {
        let synth = generate_corpus(&GroundTruthSpec::well_separated(5000, seed)).unwrap();
        let (model, trace) = gibbs_fit_with_trace(&synth.corpus, &FitConfig::new(4, seed + 100)).unwrap();
        let ari = recovery_score(&synth.truth, &model.assignments).unwrap();
        assert!(ari >= 0.8, "seed {seed}: ARI {ari}");
        assert!(trace.final_log_likelihood() > trace.initial_log_likelihood);
    }
}

#[test]
fn likelihood_curve_rises_with_k() {
    let corpus = generate_corpus(&GroundTruthSpec::well_separated(1500, 4)).unwrap().corpus;
    let ks = [1, 2, 3, 4];
    let mut inversions = 0;
    for seed in [1u64, 2] {
        let curve = sweep_k(&corpus, &ks, &FitConfig::new(1, seed)).unwrap();
        assert_eq!(curve.iter().map(|p| p.0).collect::<Vec<_>>(), ks);
        inversions += curve.windows(2).filter(|w| w[1].1 < w[0].1).count();
    }
    assert!(inversions <= 1, "{inversions} inversions");
    let single = sweep_k(&corpus, &[1], &FitConfig::new(1, 0)).unwrap();
    assert_eq!(single.len(), 1);
}

#[test]
fn model_file_keeps_assignments() {
    let corpus = toy_corpus_10();
    let model = gibbs_fit(&corpus, &toy_config(3, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    engage_core::mixture::write_model(&model, &path, &Provenance::with_seed(5)).unwrap();
    let (back, prov) = engage_core::mixture::read_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(prov.seed, Some(5));
    let ids: BTreeMap<_, _> = corpus.threads.iter().map(|t| (t.thread_id.clone(), ())).collect();
    assert!(back.assignments.keys().all(|k| ids.contains_key(k)));
}
