use num_complex::Complex64;

use super::*;
use crate::baselines::{fixed_pattern, hbf_solve, GreedyConfig, HbfContext};
use crate::channel::{apply_pattern, generate_samples, EmCsiTensor, PatternVector};
use crate::nn::{EncoderConfig, Graph, Init, ParamId, Tensor};
use crate::precoding::{average_transmit_power, sum_se, validate_analog};
use crate::SystemConfig;

fn micro_sys() -> SystemConfig {
    SystemConfig { num_users: 1, num_subcarriers: 2, num_patterns: 2, ..SystemConfig::desk().with_array(2, 2, 2) }
}

fn small_net_cfg() -> PrHbfNetConfig {
    PrHbfNetConfig::uniform(EncoderConfig { depth: 1, d_model: 8, heads: 2, d_ff: 16 })
}

fn desk_small() -> (SystemConfig, PrHbfNet, HbfContext) {
    let sys = SystemConfig::desk();
    let net = PrHbfNet::new(&sys, &PrHbfNetConfig::uniform(EncoderConfig { depth: 1, d_model: 16, heads: 2, d_ff: 32 })).unwrap();
    let ctx = HbfContext::from_config(&sys).unwrap();
    (sys, net, ctx)
}

/// Adds uniform noise of amplitude `amp` to every parameter whose name
/// starts with one of `prefixes`.
fn perturb(net: &mut PrHbfNet, prefixes: &[&str], seed: u64, amp: f64) {
    let mut init = Init::new(seed);
    let store = net.params_mut();
    for i in 0..store.len() {
        let id = ParamId::from_index(i);
        if !prefixes.iter().any(|p| store.name(id).starts_with(p)) {
            continue;
        }
        let noise = init.uniform(store.get(id).shape(), amp);
        store.data_mut(id).iter_mut().zip(noise.data()).for_each(|(w, n)| *w += n);
    }
}

#[test]
fn residual_identity_reproduces_anchor_solution() {
    let (sys, net, ctx) = desk_small();
    for s in generate_samples(&sys, 5, 21).unwrap() {
        let sol = net.solve(&s, &ctx.budget, PatternChoice::Forced(1)).unwrap();
        let anchor = fixed_pattern(&s, &ctx, 1).unwrap();
        assert!((sol.achieved_se - anchor.achieved_se).abs() < 1e-9);
        for (a, b) in sol.analog.phases().iter().zip(anchor.analog.phases()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (fa, fb) in sol.digital.matrices().iter().zip(anchor.digital.matrices()) {
            assert!((fa - fb).norm() < 1e-9 * fb.norm());
        }
    }
}

#[test]
fn graph_se_matches_outside_recomputation() {
    let (sys, mut net, ctx) = desk_small();
    perturb(&mut net, &[ANALOG_PREFIX, DIGITAL_PREFIX], 4, 0.2);
    for s in generate_samples(&sys, 4, 3).unwrap() {
        let g = Graph::new();
        let p = net.params().bind(&g);
        let pass = net.forward(&g, &p, &s, &ctx.budget, PatternChoice::Learned).unwrap();
        let sol = net.to_solution(&s, &pass, &ctx.budget).unwrap();
        let direct = sum_se(&apply_pattern(&s, &sol.pattern).unwrap(), &sol.analog, &sol.digital, ctx.budget.sigma2).unwrap();
        assert!((pass.se.item() - direct).abs() < 1e-9, "{} vs {direct}", pass.se.item());
        let loss = net.loss(&g, &p, &[&s], &ctx.budget).unwrap();
        assert!((loss.item() + direct).abs() < 1e-9);
    }
}

#[test]
fn both_gather_paths_agree() {
    let (sys, mut net, ctx) = desk_small();
    perturb(&mut net, &[ANALOG_PREFIX, DIGITAL_PREFIX], 5, 0.2);
    let s = &generate_samples(&sys, 1, 8).unwrap()[0];
    let g = Graph::new();
    let p = net.params().bind(&g);
    let a = net.forward(&g, &p, s, &ctx.budget, PatternChoice::Learned).unwrap();
    let b = net.forward_inference(&g, &p, s, &ctx.budget, PatternChoice::Learned).unwrap();
    assert_eq!(a.pattern.pattern, b.pattern.pattern);
    assert_eq!(a.se.item(), b.se.item());
    assert_eq!(a.phases.value().data(), b.phases.value().data());
}

#[test]
fn solutions_are_feasible_for_any_parameters() {
    let (sys, mut net, ctx) = desk_small();
    let samples = generate_samples(&sys, 3, 30).unwrap();
    for trial in 0..4 {
        perturb(&mut net, &[PATTERN_PREFIX, ANALOG_PREFIX, DIGITAL_PREFIX], 100 + trial, 0.5);
        for s in &samples {
            let sol = net.solve(s, &ctx.budget, PatternChoice::Learned).unwrap();
            assert!(validate_analog(&sol.analog.matrix(), &ctx.mapping).is_ok());
            let power = average_transmit_power(&sol.analog, &sol.digital);
            assert!((power - ctx.budget.pt_watts).abs() < 1e-9 * ctx.budget.pt_watts);
            assert!(sol.pattern.is_valid_for(sys.num_antennas, sys.num_patterns));
        }
    }
}

#[test]
fn one_hot_rows_follow_logit_argmax() {
    let (sys, net, _) = desk_small();
    let s = &generate_samples(&sys, 1, 2).unwrap()[0];
    let g = Graph::new();
    let p = net.params().bind(&g);
    let stage = net.prn_forward(&g, &p, s, PatternChoice::Learned).unwrap();
    let logits = stage.logits.unwrap().value();
    let one_hot = stage.one_hot.value();
    let m = sys.num_patterns;
    for a in 0..sys.num_antennas {
        let row = &logits.data()[a * m..(a + 1) * m];
        let mut best = 0;
        for j in 1..m {
            if row[j] > row[best] {
                best = j;
            }
        }
        let oh = &one_hot.data()[a * m..(a + 1) * m];
        assert_eq!(oh.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(oh.iter().sum::<f64>(), 1.0);
        assert_eq!(oh[best], 1.0);
        assert_eq!(stage.pattern.modes()[a], best + 1);
    }
}

#[test]
fn single_mode_codebook_selects_mode_one() {
    let sys = SystemConfig { num_patterns: 1, ..SystemConfig::desk() };
    let mut net = PrHbfNet::new(&sys, &small_net_cfg()).unwrap();
    perturb(&mut net, &[PATTERN_PREFIX], 1, 1.0);
    let ctx = HbfContext::from_config(&sys).unwrap();
    for s in generate_samples(&sys, 2, 1).unwrap() {
        let sol = net.solve(&s, &ctx.budget, PatternChoice::Learned).unwrap();
        assert_eq!(sol.pattern, PatternVector::uniform(sys.num_antennas, 1));
    }
}

#[test]
fn duplicate_antennas_get_identical_scores() {
    let (sys, mut net, _) = desk_small();
    let base = &generate_samples(&sys, 1, 6).unwrap()[0];
    let [nc, k, nt, m] = base.dims();
    let mut data = base.data().to_vec();
    for g in 0..nc {
        for u in 0..k {
            for mode in 0..m {
                data[base.offset(g, u, 3, mode)] = base.get(g, u, 0, mode);
            }
        }
    }
    let s = EmCsiTensor::from_parts([nc, k, nt, m], data, base.subcarrier_freqs().to_vec()).unwrap();
    let pos = net.params().id_of("pattern.position").unwrap();
    let d = net.params().get(pos).shape()[1];
    let row0: Vec<f64> = net.params().get(pos).data()[..d].to_vec();
    net.params_mut().data_mut(pos)[3 * d..4 * d].copy_from_slice(&row0);
    let g = Graph::new();
    let p = net.params().bind(&g);
    let logits = net.prn_forward(&g, &p, &s, PatternChoice::Learned).unwrap().logits.unwrap().value();
    assert_eq!(logits.data()[..m], logits.data()[3 * m..4 * m]);
}

#[test]
fn loss_is_mean_invariant() {
    let (sys, net, ctx) = desk_small();
    let s = &generate_samples(&sys, 1, 12).unwrap()[0];
    let one = net.loss_and_gradients(&[s], &ctx.budget).unwrap();
    let two = net.loss_and_gradients(&[s, s], &ctx.budget).unwrap();
    let sol = net.solve(s, &ctx.budget, PatternChoice::Learned).unwrap();
    assert!((one.loss + sol.achieved_se).abs() < 1e-9);
    assert!((one.loss - two.loss).abs() < 1e-12);
    for (a, b) in one.grads.iter().flatten().zip(two.grads.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn gradients_reach_all_three_subnetworks() {
    let (sys, mut net, ctx) = desk_small();
    let samples = generate_samples(&sys, 4, 40).unwrap();
    let batch: Vec<&EmCsiTensor> = samples.iter().collect();
    let norm = |net: &PrHbfNet, grads: &[Vec<f64>], prefix: &str, body_only: bool| -> f64 {
        net.params()
            .names()
            .iter()
            .zip(grads)
            .filter(|(n, _)| n.starts_with(prefix) && (!body_only || n.contains(".encoder.")))
            .map(|(_, g)| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let out = net.loss_and_gradients(&batch, &ctx.budget).unwrap();
    for prefix in [PATTERN_PREFIX, ANALOG_PREFIX, DIGITAL_PREFIX] {
        assert!(norm(&net, &out.grads, prefix, false) > 0.0, "{prefix}");
    }
    assert!(norm(&net, &out.grads, PATTERN_PREFIX, true) > 0.0);
    // the refinement encoders sit behind zero heads until the first update
    let mut opt = crate::nn::Adam::new(net.params());
    opt.step(net.params_mut(), &out.grads, 1e-3).unwrap();
    let out = net.loss_and_gradients(&batch, &ctx.budget).unwrap();
    for prefix in [PATTERN_PREFIX, ANALOG_PREFIX, DIGITAL_PREFIX] {
        assert!(norm(&net, &out.grads, prefix, true) > 0.0, "{prefix}");
    }
}

#[test]
fn refinement_gradients_match_finite_differences() {
    let sys = micro_sys();
    let mut net = PrHbfNet::new(&sys, &small_net_cfg()).unwrap();
    perturb(&mut net, &[ANALOG_PREFIX, DIGITAL_PREFIX], 7, 0.3);
    let ctx = HbfContext::from_config(&sys).unwrap();
    let s = &generate_samples(&sys, 1, 77).unwrap()[0];
    let (_, grads) = net.sample_gradients(s, &ctx.budget).unwrap();
    let se = |n: &PrHbfNet| {
        let g = Graph::new();
        let p = n.params().bind(&g);
        n.forward(&g, &p, s, &ctx.budget, PatternChoice::Learned).unwrap().se.item()
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..net.params().len() {
        let id = ParamId::from_index(i);
        if net.params().name(id).starts_with(PATTERN_PREFIX) {
            continue;
        }
        for j in 0..net.params().get(id).len() {
            let mut plus = net.clone();
            plus.params_mut().data_mut(id)[j] += h;
            let mut minus = net.clone();
            minus.params_mut().data_mut(id)[j] -= h;
            let numeric = -(se(&plus) - se(&minus)) / (2.0 * h);
            let a = grads[i][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn zero_epochs_keep_initial_parameters() {
    let (sys, mut net, ctx) = desk_small();
    let data = generate_samples(&sys, 4, 1).unwrap();
    let before = net.params().clone();
    let cfg = TrainConfig { epochs: 0, ..Default::default() };
    let out = train(&mut net, &data, &data, &ctx.budget, &cfg, |_| {}).unwrap();
    assert!(out.history.steps.is_empty());
    assert_eq!(out.best.values().collect::<Vec<_>>(), before.values().collect::<Vec<_>>());
    assert_eq!(out.last.values().collect::<Vec<_>>(), before.values().collect::<Vec<_>>());
}

#[test]
fn training_is_reproducible() {
    let sys = micro_sys();
    let ctx = HbfContext::from_config(&sys).unwrap();
    let data = generate_samples(&sys, 6, 2).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 4, warmup_steps: 2, ..Default::default() };
    let run = || {
        let mut net = PrHbfNet::new(&sys, &small_net_cfg()).unwrap();
        train(&mut net, &data, &data[..2], &ctx.budget, &cfg, |_| {}).unwrap().history
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.steps.len(), 4);
    assert!(a.steps.windows(2).all(|w| w[1].step > w[0].step));
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("step,lr,loss,mean_se\n1,"));
}

#[test]
fn stagewise_freezes_one_group_per_stage() {
    let sys = micro_sys();
    let ctx = HbfContext::from_config(&sys).unwrap();
    let data = generate_samples(&sys, 4, 2).unwrap();
    let mut net = PrHbfNet::new(&sys, &small_net_cfg()).unwrap();
    let before = net.params().clone();
    let cfg = TrainConfig { epochs: 1, batch_size: 4, stagewise: true, ..Default::default() };
    train(&mut net, &data, &[], &ctx.budget, &cfg, |_| {}).unwrap();
    for ((name, a), b) in net.params().names().iter().zip(net.params().values()).zip(before.values()) {
        if !name.starts_with(PATTERN_PREFIX) {
            assert_eq!(a, b, "{name} moved during the pattern stage");
        }
    }
}

#[test]
fn single_user_training_improves_on_anchor() {
    let sys = SystemConfig { num_users: 1, num_subcarriers: 4, ..SystemConfig::desk() };
    let ctx = HbfContext::from_config(&sys).unwrap();
    let data = generate_samples(&sys, 16, 9).unwrap();
    let mut net = PrHbfNet::new(&sys, &small_net_cfg()).unwrap();
    let batch: Vec<&EmCsiTensor> = data.iter().collect();
    let start = net.loss_and_gradients(&batch, &ctx.budget).unwrap().mean_se;
    let mut opt = crate::nn::Adam::new(net.params());
    for _ in 0..200 {
        let out = net.loss_and_gradients(&batch, &ctx.budget).unwrap();
        opt.step(net.params_mut(), &out.grads, 1e-3).unwrap();
    }
    let end = net.loss_and_gradients(&batch, &ctx.budget).unwrap().mean_se;
    assert!(end >= start, "{end} < {start}");
}

#[test]
fn solver_harness_contracts() {
    let sys = SystemConfig { num_patterns: 1, ..SystemConfig::desk().with_array(1, 4, 2) };
    let ctx = HbfContext::from_config(&sys).unwrap();
    let data = generate_samples(&sys, 3, 4).unwrap();
    let fixed = evaluate(&data, &Solver::Fixed { mode: 1 }, &ctx, None).unwrap();
    let greedy = evaluate(&data, &Solver::Greedy(GreedyConfig::default()), &ctx, None).unwrap();
    let exhaustive = evaluate(&data, &Solver::Exhaustive { cap: 4096 }, &ctx, None).unwrap();
    assert_eq!(fixed, greedy);
    assert_eq!(fixed, exhaustive);
    let one = evaluate(&data[..1], &Solver::Fixed { mode: 1 }, &ctx, None).unwrap();
    assert_eq!(one.mean, one.per_sample[0]);
    assert_eq!(one.std, 0.0);
    assert!(evaluate(&data, &Solver::PrHbfNet, &ctx, None).is_err());
}

#[test]
fn network_greedy_benchmark_is_feasible() {
    let (sys, net, ctx) = desk_small();
    let s = &generate_samples(&sys, 1, 14).unwrap()[0];
    let sol = solve_sample(s, 0, &Solver::GreedyHbfNet(GreedyConfig::default()), &ctx, Some(&net)).unwrap();
    let fixed = fixed_pattern(s, &ctx, 1).unwrap();
    // at zero residuals each candidate is scored by its anchor solution
    assert!(sol.achieved_se >= fixed.achieved_se - 1e-9);
    let anchor = hbf_solve(&sol.pattern, &apply_pattern(s, &sol.pattern).unwrap(), &ctx).unwrap();
    assert!((anchor.achieved_se - sol.achieved_se).abs() < 1e-9);
}

#[test]
fn mismatched_tensor_is_rejected() {
    let (_, net, ctx) = desk_small();
    let s = EmCsiTensor::zeros(8, 1, 8, 4);
    assert!(net.solve(&s, &ctx.budget, PatternChoice::Learned).is_err());
    let bad = EmCsiTensor::from_parts([8, 2, 8, 4], vec![Complex64::new(0.0, 0.0); 8 * 2 * 8 * 4], vec![0.0; 8]);
    let bad = bad.unwrap();
    // all-zero channel: anchors are degenerate but the budget still holds
    let sol = net.solve(&bad, &ctx.budget, PatternChoice::Learned);
    if let Ok(sol) = sol {
        assert_eq!(sol.achieved_se, 0.0);
    }
    let _ = Tensor::scalar(0.0);
}
