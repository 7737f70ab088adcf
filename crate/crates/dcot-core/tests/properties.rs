//! Property tests for the engine's cross-cutting invariants.

use proptest::prelude::*;

use dcot_core::config::DCoTConfig;
use dcot_core::controller::{classify_segment, dynamic_threshold, RewardState};
use dcot_core::haro::{observe_importance, semantic_reward, structural_reward, ThresholdState};
use dcot_core::model::ModelParams;
use dcot_core::vocab::{normalize_ws, Vocabulary};

proptest! {
    #[test]
    fn tokenize_round_trips_any_text(text in "\\PC{0,120}") {
        let v = Vocabulary::new();
        let back = v.detokenize(&v.tokenize(&text)).unwrap();
        prop_assert_eq!(&back, &text);
        prop_assert_eq!(normalize_ws(&back), normalize_ws(&text));
    }

    #[test]
    fn config_pairs_round_trip(
        alpha in 0.0f64..=1.0,
        gamma in 0.0f64..=1.0,
        eta in 0.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let cfg = DCoTConfig {
            alpha,
            gamma_ema: gamma,
            eta_thr: eta,
            seed,
            ..DCoTConfig::default()
        };
        let back = DCoTConfig::from_pairs(&cfg.to_pairs()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_pairs(), cfg.to_pairs());
    }

    #[test]
    fn threshold_is_clamped_and_monotone(
        tau_0 in 0.0f64..=1.0,
        eta in 0.0f64..=5.0,
        rewards in prop::collection::vec(0.0f64..=1.0, 1..20),
        bump in 0.0f64..=1.0,
    ) {
        let cfg = DCoTConfig { tau_0, eta_thr: eta, ..DCoTConfig::default() };
        let mut state = RewardState::new();
        for r in &rewards {
            state.observe(*r);
            let tau = dynamic_threshold(&state, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&tau));
        }
        // A higher final reward never lowers the threshold.
        let last = *rewards.last().unwrap();
        let mut lo = RewardState::new();
        let mut hi = RewardState::new();
        for r in &rewards[..rewards.len() - 1] {
            lo.observe(*r);
            hi.observe(*r);
        }
        lo.observe(last.min(last + 0.0));
        hi.observe((last + bump).min(1.0));
        let t_lo = dynamic_threshold(&lo, &cfg).unwrap();
        let t_hi = dynamic_threshold(&hi, &cfg).unwrap();
        prop_assert!(t_hi + 1e-12 >= t_lo);
    }

    #[test]
    fn pruning_is_monotone_in_threshold(
        imps in prop::collection::vec(0.0f64..=1.0, 1..50),
        tau_lo in 0.0f64..=1.0,
        extra in 0.0f64..=1.0,
        delta in 0.0f64..=0.3,
    ) {
        let tau_hi = (tau_lo + extra).min(1.0);
        let kept = |tau: f64| -> Vec<usize> {
            imps.iter()
                .enumerate()
                .filter(|(_, &i)| classify_segment(i, tau, delta).retains())
                .map(|(k, _)| k)
                .collect()
        };
        let at_hi = kept(tau_hi);
        let at_lo = kept(tau_lo);
        prop_assert!(at_hi.iter().all(|i| at_lo.contains(i)));
    }

    #[test]
    fn ema_threshold_stays_in_unit_interval(
        tau_0 in 0.0f64..=1.0,
        imps in prop::collection::vec(0.0f64..=1.0, 1..200),
    ) {
        let mut st = ThresholdState::new(tau_0, 16);
        for i in imps {
            observe_importance(&mut st, i, 0.9).unwrap();
            prop_assert!((0.0..=1.0).contains(&st.tau));
        }
    }

    #[test]
    fn router_scores_always_a_distribution(
        seed in any::<u64>(),
        hidden in prop::collection::vec(-2.0f64..=2.0, 32),
        k in 1usize..=4,
    ) {
        let model = ModelParams::seeded(seed, 4);
        let out = model.route(0, &hidden, k).unwrap();
        let sum: f64 = out.scores.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(out.scores.iter().all(|&s| s >= 0.0));
        prop_assert_eq!(out.active.len(), k);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&out.gating_sum()));
    }

    #[test]
    fn rewards_respect_their_ranges(
        a in "\\PC{0,30}",
        b in "\\PC{0,30}",
        tokens in 0usize..1000,
        budget in 1usize..1000,
    ) {
        let sem = semantic_reward(&a, &b);
        prop_assert!((0.0..=1.0).contains(&sem));
        let st = structural_reward(tokens, budget);
        prop_assert!((-1.0..=1.0).contains(&st));
    }
}
