mod common;

use common::*;
use homoflow::config::TrainRun;
use homoflow::fields::{Architecture, FieldModels, Order};
use homoflow::losses::{LossConfig, LossTerms, Reduction};
use homoflow::metrics::euclidean_distance_points;
use homoflow::nn::{Activation, Checkpoint};
use homoflow::rng::SeededRng;
use homoflow::sample::SamplerConfig;
use homoflow::train::{homo_loss, sample_step_and_time, self_consistency_steps};
use homoflow::trajectory::Schedule;
use proptest::prelude::*;

fn cloud() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-50.0f64..50.0), 1..40)
}

fn terms() -> impl Strategy<Value = LossTerms> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>())
        .prop_filter("at least one term", |(a, b, c, d)| *a || *b || *c || *d)
        .prop_map(|(m1, m2, m3, sc)| LossTerms { m1, m2, m3, sc })
}

proptest! {
    #[test]
    fn metric_is_symmetric(a in cloud(), b in cloud()) {
        let ab = euclidean_distance_points(&a, &b).unwrap();
        let ba = euclidean_distance_points(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(euclidean_distance_points(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn metric_is_translation_invariant(a in cloud(), b in cloud(), dx in -10.0f64..10.0, dy in -10.0f64..10.0) {
        let shift = |c: &[[f64; 2]]| c.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>();
        let base = euclidean_distance_points(&a, &b).unwrap();
        let moved = euclidean_distance_points(&shift(&a), &shift(&b)).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn metric_matches_brute_force(a in cloud(), b in cloud()) {
        let lib = euclidean_distance_points(&a, &b).unwrap();
        prop_assert!((lib - brute_force_distance(&a, &b)).abs() <= 1e-12 * lib.max(1.0));
    }

    #[test]
    fn split_accounts_for_every_row(t in terms(), frac in 0.0f64..=1.0, batch in 1usize..5000) {
        let cfg = LossConfig { true_target_fraction: frac, ..LossConfig::with_terms(t) };
        let (k, r) = cfg.split(batch);
        prop_assert_eq!(k + r, batch);
        if !t.sc {
            prop_assert_eq!(k, batch);
        }
        if !t.any_matching() {
            prop_assert_eq!(r, batch);
        }
    }

    #[test]
    fn vp_identity(t in 0.0f64..=1.0, a in 0.5f64..40.0, b in 0.01f64..2.0) {
        let (al, be) = Schedule::Vp { a, b }.eval(t, 0).unwrap();
        prop_assert!((al * al + be * be - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn step_grid_constraints(seed in any::<u64>(), depth in 1u32..10) {
        let cfg = LossConfig { step_depth: depth, ..LossConfig::default() };
        let steps = self_consistency_steps(&cfg);
        let mut rng = SeededRng::new(seed);
        for _ in 0..50 {
            let (d, t) = sample_step_and_time(&mut rng, &steps);
            prop_assert!(steps.contains(&d));
            prop_assert!(t + 2.0 * d <= 1.0 + 1e-12);
            let k = t / d;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn conditioning_step_is_dyadic_and_bounded(m in 1usize..2000) {
        let c = SamplerConfig::new(Order::Second, m).conditioning_step();
        let h = 1.0 / m as f64;
        if h < 1.0 / 128.0 {
            prop_assert_eq!(c, 0.0);
        } else {
            prop_assert!(c <= h * (1.0 + 1e-12) && 2.0 * c > h);
            prop_assert_eq!(c.log2().fract(), 0.0);
        }
    }

    #[test]
    fn config_round_trip(t in terms(), seed in any::<u64>(), lr in 1e-5f64..1.0, steps in 1usize..5000,
                         batch in 1usize..4000, frac in 0.0f64..=1.0, mean in any::<bool>(), m in 1usize..300) {
        let mut run = TrainRun::for_experiment("two_round_spin").unwrap();
        run.loss = LossConfig {
            terms: t,
            true_target_fraction: frac,
            reduction: if mean { Reduction::Mean } else { Reduction::Sum },
            ..LossConfig::default()
        };
        run.seed = seed;
        run.optimizer.learning_rate = lr;
        run.optimizer.steps = steps;
        run.optimizer.batch_size = batch;
        run.sampler.steps = m;
        let back = TrainRun::from_json(&run.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, run);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), order in 1u8..=3, sc in any::<bool>(), w in 1usize..12, tanh in any::<bool>()) {
        let arch = Architecture {
            hidden: vec![w, w + 1],
            activation: if tanh { Activation::Tanh } else { Activation::Relu },
        };
        let models = FieldModels::init(&arch, Order::from_int(order).unwrap(), sc, &mut SeededRng::new(seed)).unwrap();
        let text = models.to_checkpoint(seed, 17).to_json().unwrap();
        let back = FieldModels::from_checkpoint(&Checkpoint::from_json(&text).unwrap()).unwrap();
        prop_assert_eq!(back, models);
    }

    #[test]
    fn terms_are_isolated(seed in 0u64..10_000) {
        let tr = random_triple(seed);
        let full = homo_loss(&tr.models, &tr.batch, &tr.cfg).unwrap();
        let t = tr.cfg.terms;
        let none = LossTerms::default();
        let single = [
            (t.m1, LossTerms { m1: true, ..none }, full.m1),
            (t.m2, LossTerms { m2: true, ..none }, full.m2),
            (t.m3, LossTerms { m3: true, ..none }, full.m3),
            (t.sc, LossTerms { sc: true, ..none }, full.sc),
        ];
        for (on, only, part) in single {
            if on {
                let cfg = LossConfig { terms: only, ..tr.cfg.clone() };
                let alone = homo_loss(&tr.models, &tr.batch, &cfg).unwrap();
                prop_assert!((alone.total - part).abs() <= 1e-12 * part.abs().max(1.0));
            } else {
                prop_assert_eq!(part, 0.0);
            }
        }
    }
}
