use layoutpref::layout::TokenizedLayout;
use layoutpref::policy::gradcheck::{finite_diff_check_at, probe_indices};
use layoutpref::policy::loss::{margin, preference_loss, reference_log_probs};
use layoutpref::policy::model::head_probs;
use layoutpref::policy::{
    adamw_step, ce_loss_and_grad, finite_diff_check, log_prob, preference_loss_and_grad, sample, AdamWConfig, AdamWState,
    CeExample, PolicyParams, PreferenceExample, DEFAULT_BETA, FEATURE_DIM,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; FEATURE_DIM]> {
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
}

fn tokens(rng: &mut ChaCha8Rng, n: usize, bins: u32) -> TokenizedLayout {
    TokenizedLayout { tokens: (0..4 * n).map(|_| rng.random_range(0..=bins)).collect(), bins }
}

#[test]
fn exhaustive_normalization_small_alphabet() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = PolicyParams::random(3, 1.0, &mut rng);
    let f = features(&mut rng, 1);
    let mut total = 0.0;
    for code in 0..256u32 {
        let t: Vec<u32> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
        let lp = log_prob(&p, &f, &TokenizedLayout { tokens: t, bins: 3 }).unwrap();
        assert!(lp <= 0.0);
        total += lp.exp();
    }
    assert!((total - 1.0).abs() < 1e-10, "total {total}");
}

#[test]
fn sampling_matches_head_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = PolicyParams::random(3, 1.0, &mut rng);
    let f = features(&mut rng, 1);
    let draws = 100_000;
    let mut counts = [[0usize; 4]; 4];
    for _ in 0..draws {
        let t = sample(&p, &f, 1.0, &mut rng).unwrap();
        for (a, &tok) in t.tokens.iter().enumerate() {
            counts[a][tok as usize] += 1;
        }
    }
    for (a, row) in counts.iter().enumerate() {
        let probs = head_probs(&p, a, &f[0], 1.0);
        let tv: f64 = 0.5 * row.iter().zip(&probs).map(|(&c, &q)| (c as f64 / draws as f64 - q).abs()).sum::<f64>();
        assert!(tv < 0.01, "head {a} total variation {tv}");
    }
}

/// Straight transcription of decoupled-decay Adam, independent of the crate.
fn adamw_oracle(p: &mut [f64], grads: &[Vec<f64>], lrs: &[f64], wd: f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    for (t, (g, lr)) in grads.iter().zip(lrs).enumerate() {
        let t = (t + 1) as f64;
        for i in 0..p.len() {
            p[i] *= 1.0 - lr * wd;
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powf(t));
            let vh = v[i] / (1.0 - b2.powf(t));
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

#[test]
fn adamw_first_step_by_hand() {
    // bias-corrected moments equal g and g^2 on step one
    let mut p = vec![1.0, -2.0];
    let mut st = AdamWState::new(2);
    let cfg = AdamWConfig { weight_decay: 0.1, ..AdamWConfig::default() };
    adamw_step(&mut p, &[0.5, -0.25], &mut st, &cfg, 0.01).unwrap();
    let want0 = 1.0 * (1.0 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8);
    let want1 = -2.0 * (1.0 - 0.001) + 0.01 * 0.25 / (0.25 + 1e-8);
    assert!((p[0] - want0).abs() < 1e-10);
    assert!((p[1] - want1).abs() < 1e-10);
}

#[test]
fn adamw_matches_scripted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 17;
    let grads: Vec<Vec<f64>> = (0..40).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let lrs: Vec<f64> = (0..40).map(|s| 0.05 * (1.0 + s as f64).recip()).collect();
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut want = start.clone();
    adamw_oracle(&mut want, &grads, &lrs, 0.01);
    let mut got = start;
    let mut st = AdamWState::new(n);
    let cfg = AdamWConfig { weight_decay: 0.01, ..AdamWConfig::default() };
    for (g, &lr) in grads.iter().zip(&lrs) {
        adamw_step(&mut got, g, &mut st, &cfg, lr).unwrap();
    }
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

fn probe_setup(seed: u64) -> (PolicyParams, PolicyParams, Vec<CeExample>, Vec<PreferenceExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = PolicyParams::random(12, 0.5, &mut rng);
    let r = PolicyParams::random(12, 0.5, &mut rng);
    let f = features(&mut rng, 3);
    let ce = vec![CeExample { features: f.clone(), tokens: tokens(&mut rng, 3, 12) }];
    let pref = vec![PreferenceExample { features: f, winner: tokens(&mut rng, 3, 12), loser: tokens(&mut rng, 3, 12) }];
    (p, r, ce, pref)
}

#[test]
fn gradients_hold_across_step_sizes() {
    let (p, r, ce, pref) = probe_setup(21);
    for eps in [1e-4, 1e-5, 1e-6] {
        let ce_rep = finite_diff_check(|q| ce_loss_and_grad(q, &ce).unwrap(), &p, eps, 1);
        let pr_rep = finite_diff_check(|q| preference_loss_and_grad(q, &r, &pref, DEFAULT_BETA).unwrap(), &p, eps, 2);
        assert!(ce_rep.max_rel_error < 1e-4, "ce eps {eps}: {ce_rep:?}");
        assert!(pr_rep.max_rel_error < 1e-4, "preference eps {eps}: {pr_rep:?}");
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let (p, _, ce, _) = probe_setup(4);
    let (_, mut grad) = ce_loss_and_grad(&p, &ce).unwrap();
    let idx = probe_indices(p.len(), 256, 9);
    // pick a probed coordinate with a gradient well above the absolute floor
    let target = *idx.iter().max_by(|&&a, &&b| grad[a].abs().total_cmp(&grad[b].abs())).unwrap();
    grad[target] *= 1.01;
    let rep = finite_diff_check_at(|q| ce_loss_and_grad(q, &ce).unwrap().0, &p, &grad, 1e-5, &idx);
    assert!(rep.max_rel_error > 1e-3, "{rep:?}");
    assert_eq!(rep.worst_index, target);
}

#[test]
fn one_step_widens_the_pair_gap() {
    let (p, _, _, pref) = probe_setup(6);
    let gap = |q: &PolicyParams| log_prob(q, &pref[0].features, &pref[0].winner).unwrap() - log_prob(q, &pref[0].features, &pref[0].loser).unwrap();
    let (_, g) = preference_loss_and_grad(&p, &p, &pref, DEFAULT_BETA).unwrap();
    let mut q = p.clone();
    for (w, d) in q.data.iter_mut().zip(&g) {
        *w -= 1e-3 * d;
    }
    assert!(gap(&q) > gap(&p));
}

proptest! {
    #[test]
    fn preference_loss_is_ln2_at_reference(seed in 0u64..1000, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::random(8, 1.0, &mut rng);
        let batch: Vec<_> = (0..3)
            .map(|_| PreferenceExample { features: features(&mut rng, n), winner: tokens(&mut rng, n, 8), loser: tokens(&mut rng, n, 8) })
            .collect();
        let refs = reference_log_probs(&p, &batch).unwrap();
        let loss = preference_loss(&p, &batch, &refs, DEFAULT_BETA).unwrap();
        prop_assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_moves_with_each_log_ratio(seed in 0u64..1000, shift in 0.01f64..2.0) {
        // raising the winner's log-ratio lowers the loss; raising the loser's raises it
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::random(8, 1.0, &mut rng);
        let ex = PreferenceExample { features: features(&mut rng, 2), winner: tokens(&mut rng, 2, 8), loser: tokens(&mut rng, 2, 8) };
        let refs = reference_log_probs(&p, std::slice::from_ref(&ex)).unwrap();
        let base = preference_loss(&p, std::slice::from_ref(&ex), &refs, DEFAULT_BETA).unwrap();
        let winner_up = preference_loss(&p, std::slice::from_ref(&ex), &[(refs[0].0 - shift, refs[0].1)], DEFAULT_BETA).unwrap();
        let loser_up = preference_loss(&p, std::slice::from_ref(&ex), &[(refs[0].0, refs[0].1 - shift)], DEFAULT_BETA).unwrap();
        prop_assert!(winner_up < base);
        prop_assert!(loser_up > base);
        prop_assert!(margin(&p, &ex, (refs[0].0 - shift, refs[0].1)).unwrap() > 0.0);
    }

    #[test]
    fn log_prob_is_never_positive(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::random(16, 2.0, &mut rng);
        let f = features(&mut rng, 3);
        prop_assert!(log_prob(&p, &f, &tokens(&mut rng, 3, 16)).unwrap() <= 0.0);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PolicyParams::random(16, 1.0, &mut rng);
        let f = features(&mut rng, 4);
        let a = sample(&p, &f, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = sample(&p, &f, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
