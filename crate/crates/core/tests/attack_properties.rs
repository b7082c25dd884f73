//! Budget, quantization and determinism properties of the perturbation engines.

mod common;

use pap_core::attack::{protect, protect_observed, AttackConfig, AttackMode, StepEvent};
use pap_core::diffusion::{DenoiserParams, ModelDims, ScheduleConfig, ToyModel};
use pap_core::prompt::{model_prompt_distribution, sample_prompt, PhiConfig};
use pap_core::stats::paired_t_test;
use pap_core::{Image, Rng};
use proptest::prelude::*;

fn small_model(seed: u64) -> ToyModel {
    let dims = ModelDims {
        height: 6,
        width: 6,
        embed_dim: 4,
        time_dim: 4,
        hidden: 12,
    };
    let params = DenoiserParams::init(dims, &mut Rng::new(seed));
    ToyModel::new(params, ScheduleConfig { steps: 20, ..Default::default() }).unwrap()
}

#[derive(Default)]
struct Violations {
    steps: usize,
    budget: usize,
    range: usize,
    quantization: usize,
}

fn check_step(x0: &Image, eta: f64, alpha: f64, ev: &StepEvent, v: &mut Violations) {
    v.steps += 1;
    for (i, &p) in ev.after.pixels.iter().enumerate() {
        if (p - x0.pixels[i]).abs() > eta + 1e-12 {
            v.budget += 1;
        }
        if !(0.0..=1.0).contains(&p) {
            v.range += 1;
        }
    }
    for (c, b) in ev.candidate.iter().zip(&ev.before.pixels) {
        let d = c - b;
        if !(d.abs() < 1e-15 || (d.abs() - alpha).abs() < 1e-15) {
            v.quantization += 1;
        }
    }
}

fn mode_strategy() -> impl Strategy<Value = AttackMode> {
    prop_oneof![Just(AttackMode::Pap), Just(AttackMode::PromptSpecific), Just(AttackMode::Aspap)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_iterate_respects_the_budget(
        seed in 0u64..1_000_000,
        mode in mode_strategy(),
        eta in 0.01f64..0.2,
        ratio in 0.05f64..1.0,
        steps in 0usize..12,
        rounds in 1usize..3,
        pixels in proptest::collection::vec(0.0f64..=1.0, 36),
    ) {
        let model = small_model(seed);
        let x0 = Image::new(6, 6, pixels).unwrap();
        let c0 = Rng::new(seed ^ 7).gaussian_vec(4);
        let cfg = AttackConfig {
            eta,
            alpha: eta * ratio,
            steps,
            text_steps: 3,
            rounds,
            surrogate_steps: 2,
            mode,
            ..Default::default()
        };
        let mut v = Violations::default();
        let mut obs = |ev: &StepEvent| check_step(&x0, eta, cfg.alpha, ev, &mut v);
        let (r, _) = protect_observed(&model, &x0, &c0, &cfg, &Rng::new(seed), Some(&mut obs)).unwrap();
        let expected = if mode == AttackMode::Aspap { steps * rounds } else { steps };
        prop_assert_eq!(v.steps, expected);
        prop_assert_eq!(r.trace.len(), expected);
        prop_assert_eq!((v.budget, v.range, v.quantization), (0, 0, 0));
        prop_assert!(r.linf <= eta + 1e-12);
        if steps == 0 {
            prop_assert_eq!(&r.x_adv, &x0);
        }
    }

    #[test]
    fn runs_are_reproducible(seed in 0u64..1_000_000, mode in mode_strategy()) {
        let model = small_model(seed);
        let x0 = Image::filled(6, 6, 0.4);
        let c0 = vec![0.1, -0.2, 0.3, 0.0];
        let cfg = AttackConfig { steps: 4, text_steps: 2, rounds: 2, mode, ..Default::default() };
        let a = protect(&model, &x0, &c0, &cfg, &Rng::new(seed)).unwrap();
        let b = protect(&model, &x0, &c0, &cfg, &Rng::new(seed)).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1.map(|m| m.params.flat().to_vec()), b.1.map(|m| m.params.flat().to_vec()));
    }

    #[test]
    fn tanh_output_stays_open(seed in 0u64..1_000_000, steps in 0usize..20) {
        let model = small_model(seed);
        let pixels: Vec<f64> = (0..36).map(|i| (i % 3) as f64 / 2.0).collect();
        let x0 = Image::new(6, 6, pixels).unwrap();
        let cfg = AttackConfig { steps, alpha: 0.05, mode: AttackMode::Tanh, ..Default::default() };
        let (r, _) = protect(&model, &x0, &[0.0; 4], &cfg, &Rng::new(seed)).unwrap();
        prop_assert!(r.x_adv.pixels.iter().all(|p| *p > 0.0 && *p < 1.0));
        prop_assert!((r.linf - r.x_adv.linf_distance(&x0)).abs() < 1e-15);
    }
}

/// Expected loss over prompts from the modeled distribution, with the same
/// (prompt, t, noise) draws for both images.
fn modeled_loss(model: &ToyModel, x: &Image, dist: &pap_core::prompt::PromptGaussian, rng: &Rng) -> f64 {
    let mut r = rng.clone();
    let mut total = 0.0;
    let draws = 20;
    for _ in 0..draws {
        let c = sample_prompt(dist, &mut r);
        let t = r.timestep(model.steps());
        let eps = r.gaussian_vec(x.len());
        total += model.loss(x, &eps, t, &c).unwrap();
    }
    total / draws as f64
}

#[test]
fn pap_raises_the_modeled_loss() {
    let t = common::trained();
    let (mut clean, mut protected) = (vec![], vec![]);
    for seed in 0..4u64 {
        let item = &t.dataset.items[seed as usize * 7];
        let rng = Rng::new(seed);
        let dist = model_prompt_distribution(&t.model, std::slice::from_ref(&item.image), &item.embedding, &PhiConfig::default(), &rng.child("dist"))
            .unwrap()
            .gaussian;
        let (r, _) = protect(&t.model, &item.image, &item.embedding, &AttackConfig::default(), &rng.child("attack")).unwrap();
        let er = rng.child("eval");
        clean.push(modeled_loss(&t.model, &item.image, &dist, &er));
        protected.push(modeled_loss(&t.model, &r.x_adv, &dist, &er));
    }
    let test = paired_t_test(&protected, &clean).unwrap();
    assert!(test.mean_diff > 0.0, "{test:?}");
}

#[test]
fn specific_raises_the_loss_at_c0() {
    let t = common::trained();
    let item = &t.dataset.items[11];
    let cfg = AttackConfig::with_mode(AttackMode::PromptSpecific);
    let (r, _) = protect(&t.model, &item.image, &item.embedding, &cfg, &Rng::new(2)).unwrap();
    let mut rr = Rng::new(3);
    let (mut before, mut after) = (0.0, 0.0);
    for _ in 0..32 {
        let tt = rr.timestep(t.model.steps());
        let eps = rr.gaussian_vec(256);
        before += t.model.loss(&item.image, &eps, tt, &item.embedding).unwrap();
        after += t.model.loss(&r.x_adv, &eps, tt, &item.embedding).unwrap();
    }
    assert!(after > before, "{after} <= {before}");
}
