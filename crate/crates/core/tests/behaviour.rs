mod common;

use cate_core::data::ScoredSample;
use cate_core::inference::bootstrap_ci;
use cate_core::matching::ProxyEffects;
use cate_core::parallel::available_threads;
use cate_core::pipeline::PipelineConfig;
use cate_core::seed::{derive_seed, labeled_rng};
use cate_core::simulation::{simulate, ScenarioSpec};
use cate_core::tree::{grow_tree, prune_tree, GrowParams, PruneParams};
use rand::Rng;

fn fitted_leaves(scores: &ScoredSample, y: Vec<f64>, seed: u64) -> usize {
    let proxy = ProxyEffects { y_tilde: y };
    let grown = grow_tree(scores, &proxy, GrowParams::default()).unwrap();
    let params = PruneParams {
        seed,
        ..PruneParams::default()
    };
    prune_tree(&grown, scores, &proxy, params).unwrap().n_leaves()
}

fn uniform_scores<R: Rng>(rng: &mut R, n: usize) -> ScoredSample {
    ScoredSample::new((0..n).map(|_| rng.random()).collect(), (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .unwrap()
}

#[test]
fn pure_noise_prunes_to_the_root() {
    // rate threshold 90%, checked on 1000 seeds to keep sampling noise low
    let roots = (0..1000)
        .filter(|&t| {
            let mut rng = labeled_rng(7, &format!("noise-{t}"));
            let scores = uniform_scores(&mut rng, 500);
            let y = (0..500).map(|_| common::normal(&mut rng)).collect();
            fitted_leaves(&scores, y, t) == 1
        })
        .count();
    assert!(roots >= 900, "root-only trees in {roots}/1000 trials");
}

#[test]
fn a_genuine_step_survives_pruning() {
    let split = (0..100)
        .filter(|&t| {
            let mut rng = labeled_rng(8, &format!("step-{t}"));
            let scores = uniform_scores(&mut rng, 500);
            let y = (0..500)
                .map(|i| (scores.e_hat[i] < 0.6) as u8 as f64 + common::normal(&mut rng))
                .collect();
            fitted_leaves(&scores, y, t) >= 2
        })
        .count();
    assert!(split >= 95, "split kept in {split}/100 trials");
}

#[test]
fn scenario5_noise_has_the_stated_variance() {
    let spec = ScenarioSpec::new(5, 10_000, 10, 3);
    let sim = simulate(&spec).unwrap();
    let ds = &sim.dataset;
    // tau is zero, so y - p is the noise
    let eps: Vec<f64> = (0..ds.n()).map(|i| ds.y()[i] - sim.p_true[i]).collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (eps.len() - 1) as f64;
    assert!((var / 90.0 - 1.0).abs() < 0.05, "noise variance {var}");
    assert_eq!(ds.n_treated(), 5000);
}

#[test]
fn stored_effects_match_the_region_formulas() {
    for (id, n, d) in [(1, 2000, 4), (2, 1500, 10), (3, 1500, 10), (4, 1500, 10), (7, 300, 400)] {
        for seed in 0..3 {
            let sim = simulate(&ScenarioSpec::new(id, n, d, seed)).unwrap();
            let tau = sim.dataset.tau_true().unwrap();
            for i in 0..n {
                let (e, p) = (sim.e_true[i], sim.p_true[i]);
                let want = if id == 4 {
                    (e > 0.6) as u8 as f64 + (p > 0.0) as u8 as f64
                } else {
                    (e < 0.6 && p < 0.0) as u8 as f64
                };
                assert_eq!(tau[i], want, "scenario {id} seed {seed} unit {i}");
            }
            for i in 0..n {
                let x = sim.dataset.x().row(i);
                let lin: f64 = x.iter().zip(&sim.beta_p).map(|(a, b)| a * b).sum();
                if id == 1 || id == 4 || id == 7 {
                    assert!((sim.p_true[i] - lin).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn scenario6_propensity_stays_in_range() {
    let sim = simulate(&ScenarioSpec::new(6, 5000, 2, 4)).unwrap();
    let hi = 0.25 * (1.0 + 2.109375);
    assert!(sim.e_true.iter().all(|&e| (0.25..=hi + 1e-12).contains(&e)));
    let max = sim.e_true.iter().cloned().fold(0.0, f64::max);
    assert!(max > hi - 0.01);
    assert!(sim.dataset.tau_true().unwrap().iter().all(|&t| t == 0.0));
}

#[test]
fn intervals_narrow_with_more_data() {
    let seed = derive_seed(11, "width");
    let mut spec = ScenarioSpec::new(1, 500, 2, seed);
    spec.coefficient_seed = Some(seed);
    let small = simulate(&spec).unwrap().dataset;
    spec.n = 2000;
    let large = simulate(&spec).unwrap().dataset;
    let config = PipelineConfig {
        seed,
        ..PipelineConfig::default()
    };
    let threads = available_threads();
    let ws = bootstrap_ci(&small, &config, 60, 0.95, seed, threads).unwrap().mean_width();
    let wl = bootstrap_ci(&large, &config, 60, 0.95, seed, threads).unwrap().mean_width();
    assert!(wl < ws, "mean width n=500 {ws:.4}, n=2000 {wl:.4}");
}
