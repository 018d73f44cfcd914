use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

use super::*;
use crate::autodiff::{check_gradient, Graph, NodeId};
use crate::network::{gather, init_params, param_leaves, slice_layers, Activation, ParamVector};
use crate::physics::{integrate, Tolerance};
use crate::taskgen::{make_task, task_rng, Dataset, Task};

fn small_spec(output_dim: usize, hidden: Vec<usize>) -> NetworkSpec {
    NetworkSpec::new(2, hidden, output_dim, Activation::Softplus).unwrap()
}

fn task(system: SystemKind, n: usize, seed: u64) -> Task {
    make_task(system, n, &mut task_rng(seed, 0)).unwrap()
}

/// `x ↦ loss` closure over a flat parameter vector for the gradient checker.
fn loss_fn(
    kind: LossKind,
    spec: NetworkSpec,
    data: Dataset,
) -> impl Fn(&mut Graph, &[f64]) -> crate::Result<(NodeId, Vec<NodeId>)> {
    move |g, x| {
        let params = ParamVector::new(&spec, x.to_vec())?;
        let layers = param_leaves(g, &spec, &params)?;
        let loss = field_loss(kind, &spec, g, &layers, &data)?;
        Ok((
            loss,
            layers.iter().flat_map(|l| [l.weight, l.bias]).collect(),
        ))
    }
}

#[test]
fn zero_network_hnn_loss_is_mean_squared_label() {
    let t = task(SystemKind::Pendulum, 20, 1);
    let spec = NetworkSpec::hamiltonian(2);
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &ParamVector::zeros(&spec)).unwrap();
    let loss = hnn_loss(&spec, &mut g, &layers, &t.train).unwrap();
    let expected = t.train.derivs.iter().map(|v| v * v).sum::<f64>() / 20.0;
    assert!((g.scalar(loss) - expected).abs() <= 1e-12 * expected);
}

#[test]
fn closed_form_energy_gives_zero_loss() {
    for system in SystemKind::ALL {
        let t = task(system, 30, 2);
        let mut g = Graph::new();
        let x = g.leaf(t.train.states.clone()).unwrap();
        let h = t.params.hamiltonian_graph(&mut g, x).unwrap();
        let pred = symplectic_field(&mut g, h, x).unwrap();
        let target = g.leaf(t.train.derivs.clone()).unwrap();
        let loss = mean_squared_norm(&mut g, pred, target).unwrap();
        assert!(g.scalar(loss) < 1e-20, "{system}: {}", g.scalar(loss));
    }
}

#[test]
fn hnn_loss_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let spec = small_spec(1, vec![8, 8]);
        let t = task(SystemKind::SpringMass, 10, seed);
        let params = init_params(&spec, seed);
        let err = check_gradient(
            loss_fn(LossKind::Hamiltonian, spec, t.train),
            params.as_slice(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn naive_loss_cases() {
    let spec = small_spec(2, vec![8]);
    let t = task(SystemKind::Pendulum, 10, 3);
    let params = init_params(&spec, 3);
    let err = check_gradient(
        loss_fn(LossKind::Naive, spec.clone(), t.train.clone()),
        params.as_slice(),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &ParamVector::zeros(&spec)).unwrap();
    let loss = naive_loss(&spec, &mut g, &layers, &t.train).unwrap();
    let c = t.train.derivs.iter().map(|v| v * v).sum::<f64>() / 10.0;
    assert!((g.scalar(loss) - c).abs() <= 1e-12 * c);

    // Relabel the data with the network's own output.
    let model = FieldModel::new(LossKind::Naive, &spec, &params).unwrap();
    let own = Dataset::new(
        t.train.states.clone(),
        model.field_batch(&t.train.states).unwrap(),
    )
    .unwrap();
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &params).unwrap();
    let loss = naive_loss(&spec, &mut g, &layers, &own).unwrap();
    assert_eq!(g.scalar(loss), 0.0);
}

#[test]
fn losses_reject_bad_shapes() {
    let spec = NetworkSpec::hamiltonian(2);
    let kepler = task(SystemKind::Kepler, 5, 0);
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &ParamVector::zeros(&spec)).unwrap();
    assert!(hnn_loss(&spec, &mut g, &layers, &kepler.train).is_err());
    assert!(naive_loss(
        &spec,
        &mut g,
        &layers,
        &task(SystemKind::SpringMass, 5, 0).train
    )
    .is_err());
}

#[test]
fn zero_inner_steps_is_identity() {
    let spec = small_spec(1, vec![8]);
    let params = init_params(&spec, 0);
    let t = task(SystemKind::SpringMass, 10, 0);
    let cfg = InnerConfig {
        steps: 0,
        ..InnerConfig::default()
    };
    assert_eq!(
        adapt_params(LossKind::Hamiltonian, &spec, &params, &t.train, &cfg).unwrap(),
        params
    );
}

#[test]
fn one_step_on_quadratic_loss_scales_params() {
    let spec = small_spec(1, vec![4]);
    let params = init_params(&spec, 5);
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &params).unwrap();
    let alpha = 0.1;
    let adapted = inner_adapt_with(&mut g, &layers, &[0, 1], 1, alpha, true, |g, cur| {
        let mut total = g.constant(0.0)?;
        for l in cur {
            for p in [l.weight, l.bias] {
                let sq = g.square(p)?;
                let s = g.sum(sq)?;
                total = g.add(total, s)?;
            }
        }
        g.scale(total, 0.5)
    })
    .unwrap();
    for (a, p) in gather(&g, &adapted).iter().zip(params.as_slice()) {
        assert!((a - (1.0 - alpha) * p).abs() <= 1e-15 * p.abs().max(1.0));
    }
}

#[test]
fn inner_loop_reports_divergence_step() {
    let spec = small_spec(1, vec![4]);
    let params = init_params(&spec, 5);
    let mut g = Graph::new();
    let layers = param_leaves(&mut g, &spec, &params).unwrap();
    // The loss grows as exp(exp(θ)) and overflows within a few steps.
    let res = inner_adapt_with(&mut g, &layers, &[1], 50, 10.0, false, |g, cur| {
        let s = g.sum(cur[1].weight)?;
        let e = g.exp(s)?;
        let e = g.exp(e)?;
        g.neg(e)
    });
    assert!(
        matches!(res, Err(crate::Error::AdaptationDiverged { step }) if step > 0),
        "{res:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn anil_and_anil_inverse_freeze_their_body(seed in 0u64..1_000) {
        let t = task(SystemKind::Pendulum, 10, seed);
        for (kind, frozen) in [(LearnerKind::Hanil, vec![0, 1, 2]), (LearnerKind::HanilInv, vec![0])] {
            let learner = build_learner(kind, SystemKind::Pendulum);
            let spec = NetworkSpec::new(2, vec![16, 16, 16], 1, Activation::Softplus).unwrap();
            let params = init_params(&spec, seed);
            let adapted = adapt_params(learner.loss, &spec, &params, &t.train, &learner.inner).unwrap();
            let before = slice_layers(&spec, &params, &frozen).unwrap().to_vec();
            let after = slice_layers(&spec, &adapted, &frozen).unwrap().to_vec();
            prop_assert_eq!(before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), after.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert!(adapted != params);
        }
    }

    #[test]
    fn first_and_second_order_agree_for_tiny_steps(seed in 0u64..1_000) {
        let spec = small_spec(1, vec![6, 6]);
        let params = init_params(&spec, seed);
        let t = task(SystemKind::SpringMass, 8, seed);
        let inner = InnerConfig { steps: 1, lr: 1e-6, update_set: crate::network::LayerSelection::All };
        let (_, first) = task_meta_grad(LossKind::Hamiltonian, &spec, &params, &t, &inner, false).unwrap();
        let (_, second) = task_meta_grad(LossKind::Hamiltonian, &spec, &params, &t, &inner, true).unwrap();
        let num: f64 = first.iter().zip(&second).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = second.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(num / den < 1e-3, "{}", num / den);
    }
}

/// Bi-level objective of a 1-hidden-unit net, evaluated by adapting the
/// numeric parameters and scoring the result.
fn bilevel_value(spec: &NetworkSpec, t: &Task, inner: &InnerConfig, x: &[f64]) -> f64 {
    let params = ParamVector::new(spec, x.to_vec()).unwrap();
    let adapted = adapt_params(LossKind::Hamiltonian, spec, &params, &t.train, inner).unwrap();
    let all: Vec<usize> = (0..spec.num_layers()).collect();
    loss_and_grad(LossKind::Hamiltonian, spec, &adapted, &t.test, &all)
        .unwrap()
        .0
}

#[test]
fn second_order_meta_gradient_matches_finite_differences() {
    let spec = small_spec(1, vec![1]);
    let inner = InnerConfig {
        steps: 2,
        lr: 0.05,
        update_set: crate::network::LayerSelection::All,
    };
    for seed in 0..5 {
        let t = task(SystemKind::SpringMass, 10, seed);
        let params = init_params(&spec, seed + 100);
        let (_, grad) =
            task_meta_grad(LossKind::Hamiltonian, &spec, &params, &t, &inner, true).unwrap();
        let (_, first) =
            task_meta_grad(LossKind::Hamiltonian, &spec, &params, &t, &inner, false).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut first_gap: f64 = 0.0;
        for i in 0..params.len() {
            let mut up = params.as_slice().to_vec();
            let mut down = up.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (bilevel_value(&spec, &t, &inner, &up)
                - bilevel_value(&spec, &t, &inner, &down))
                / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-3);
            worst = worst.max((grad[i] - fd).abs() / scale);
            first_gap = first_gap.max((first[i] - fd).abs() / scale);
        }
        assert!(worst < 1e-4, "seed {seed}: {worst}");
        // The oracle must be able to tell the two apart.
        assert!(
            first_gap > 10.0 * worst,
            "seed {seed}: first-order gap {first_gap}"
        );
    }
}

#[test]
fn zero_inner_steps_reduce_to_adam_on_pooled_test_loss() {
    let spec = small_spec(1, vec![8]);
    let tasks: Vec<Task> = (0..3).map(|i| task(SystemKind::Pendulum, 10, i)).collect();
    let refs: Vec<&Task> = tasks.iter().collect();
    let inner = InnerConfig {
        steps: 0,
        ..InnerConfig::default()
    };
    let outer = OuterConfig::default();
    let mut params = init_params(&spec, 1);
    let mut adam = AdamState::new(params.len());
    let loss = meta_step(
        LossKind::Hamiltonian,
        &spec,
        &mut params,
        &refs,
        &inner,
        &outer,
        &mut adam,
    )
    .unwrap();

    let start = init_params(&spec, 1);
    let all = [0, 1];
    let mut expect_loss = 0.0;
    let mut grad = vec![0.0; start.len()];
    for t in &tasks {
        let (l, g) = loss_and_grad(LossKind::Hamiltonian, &spec, &start, &t.test, &all).unwrap();
        expect_loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let (expected, _) = adam_update(
        &AdamState::new(start.len()),
        start.as_slice(),
        &grad,
        outer.lr,
    )
    .unwrap();
    assert_eq!(loss, expect_loss);
    assert_eq!(params.as_slice(), &expected[..]);
}

#[test]
fn meta_loss_decreases_on_a_fixed_task() {
    let spec = NetworkSpec::naive(2);
    let mut t = task(SystemKind::SpringMass, 20, 4);
    t.test = t.train.clone();
    let inner = InnerConfig {
        steps: 1,
        lr: 1e-4,
        update_set: crate::network::LayerSelection::All,
    };
    let outer = OuterConfig::default();
    let mut params = init_params(&spec, 4);
    let mut adam = AdamState::new(params.len());
    let losses: Vec<f64> = (0..10)
        .map(|_| {
            meta_step(
                LossKind::Naive,
                &spec,
                &mut params,
                &[&t],
                &inner,
                &outer,
                &mut adam,
            )
            .unwrap()
        })
        .collect();
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn batch_of_copies_matches_scaled_single_task_under_sgd() {
    let spec = small_spec(1, vec![8]);
    let t = task(SystemKind::SpringMass, 10, 6);
    let inner = InnerConfig {
        steps: 2,
        ..InnerConfig::default()
    };
    let k = 4;
    let base = OuterConfig {
        optimizer: Optimizer::Sgd,
        lr: 1e-3,
        ..OuterConfig::default()
    };
    let mut batched = init_params(&spec, 6);
    let mut single = batched.clone();
    let mut adam = AdamState::new(batched.len());
    let copies = vec![&t; k];
    meta_step(
        LossKind::Hamiltonian,
        &spec,
        &mut batched,
        &copies,
        &inner,
        &base,
        &mut adam,
    )
    .unwrap();
    let scaled = OuterConfig {
        lr: base.lr * k as f64,
        ..base
    };
    meta_step(
        LossKind::Hamiltonian,
        &spec,
        &mut single,
        &[&t],
        &inner,
        &scaled,
        &mut adam,
    )
    .unwrap();
    for (a, b) in batched.as_slice().iter().zip(single.as_slice()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn learned_hamiltonian_is_conserved_along_its_flow() {
    for seed in 0..5 {
        let spec = NetworkSpec::hamiltonian(2);
        let params = init_params(&spec, seed);
        let model = FieldModel::new(LossKind::Hamiltonian, &spec, &params).unwrap();
        let x0 = [1.5, -0.5];
        let tol = Tolerance::ROLLOUT;
        let traj = integrate(|x: &[f64]| model.field(x), &x0, 1.0, 20, tol).unwrap();
        let h0 = model.energy(&x0).unwrap();
        for s in &traj.states {
            let drift = (model.energy(s).unwrap() - h0).abs() / h0.abs().max(1.0);
            assert!(drift < 10.0 * tol.rtol, "seed {seed}: drift {drift}");
        }
    }
}

#[test]
fn pretraining_one_task_is_ordinary_training() {
    let spec = small_spec(1, vec![8]);
    let t = task(SystemKind::Pendulum, 20, 8);
    let start = init_params(&spec, 8);
    let cfg = PretrainConfig {
        steps: 15,
        task_batch: 10,
        lr: 1e-3,
    };
    let (pre, history) = pretrain(
        LossKind::Hamiltonian,
        &spec,
        &start,
        std::slice::from_ref(&t),
        &cfg,
        0,
    )
    .unwrap();
    let mut p = start.clone();
    let mut adam = AdamState::new(p.len());
    for (step, &recorded) in history.iter().enumerate() {
        let (l, g) = loss_and_grad(LossKind::Hamiltonian, &spec, &p, &t.train, &[0, 1]).unwrap();
        assert_eq!(l, recorded, "step {step}");
        adam.step(p.as_mut_slice(), &g, 1e-3).unwrap();
    }
    assert_eq!(pre, p);
}

#[test]
fn pretraining_loss_trends_down() {
    let learner = build_learner(LearnerKind::HnnPretrained, SystemKind::SpringMass);
    let pool: Vec<Task> =
        crate::taskgen::make_meta_train(SystemKind::SpringMass, 50, 50, 3).unwrap();
    let cfg = PretrainConfig {
        steps: 200,
        task_batch: 10,
        lr: 1e-3,
    };
    let (_, history) = pretrain(
        learner.loss,
        &learner.spec,
        &init_params(&learner.spec, 3),
        &pool,
        &cfg,
        3,
    )
    .unwrap();
    let window = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let averages: Vec<f64> = history.chunks(40).map(window).collect();
    for pair in averages.windows(2) {
        assert!(pair[1] <= pair[0], "{averages:?}");
    }
}

#[test]
fn learner_wiring() {
    use crate::network::LayerSelection;
    let l = build_learner(LearnerKind::Hanil, SystemKind::Pendulum);
    assert_eq!(
        (l.inner.update_set, l.loss, l.spec.output_dim),
        (LayerSelection::Last, LossKind::Hamiltonian, 1)
    );
    let l = build_learner(LearnerKind::HanilInv, SystemKind::Pendulum);
    assert_eq!(l.inner.update_set.layers(&l.spec).unwrap(), vec![1, 2, 3]);
    let l = build_learner(LearnerKind::NaiveAnil, SystemKind::Kepler);
    assert_eq!(
        (l.spec.input_dim, l.spec.output_dim, l.inner.update_set),
        (4, 4, LayerSelection::Last)
    );
    assert!(!build_learner(LearnerKind::HnnScratch, SystemKind::Pendulum).meta_trained());
    assert!(build_learner(LearnerKind::Hamaml, SystemKind::Pendulum).meta_trained());
    assert_eq!(
        build_learner(LearnerKind::HnnPretrained, SystemKind::Pendulum).adapt_selection(),
        LayerSelection::All
    );
    assert_eq!(
        build_learner(LearnerKind::NaiveAnil, SystemKind::Pendulum).adapt_selection(),
        LayerSelection::Last
    );
    for kind in LearnerKind::ALL {
        assert_eq!(kind.name().parse::<LearnerKind>().unwrap(), kind);
    }
    let inner = InnerConfig::default();
    let outer = OuterConfig::default();
    assert_eq!((inner.steps, inner.lr), (5, 0.002));
    assert_eq!(
        (
            outer.episodes,
            outer.task_batch,
            outer.lr,
            outer.second_order
        ),
        (100, 10, 0.001, true)
    );
}

#[test]
fn trainer_resumes_with_identical_batches() {
    let spec = small_spec(1, vec![8]);
    let pool: Vec<Task> =
        crate::taskgen::make_meta_train(SystemKind::SpringMass, 30, 10, 1).unwrap();
    let inner = InnerConfig {
        steps: 1,
        ..InnerConfig::default()
    };
    let outer = OuterConfig {
        task_batch: 4,
        optimizer: Optimizer::Sgd,
        ..OuterConfig::default()
    };
    let mut straight = TrainerState::new(init_params(&spec, 2), 9);
    for _ in 0..4 {
        straight
            .episode(LossKind::Hamiltonian, &spec, &pool, &inner, &outer)
            .unwrap();
    }
    let mut first = TrainerState::new(init_params(&spec, 2), 9);
    for _ in 0..2 {
        first
            .episode(LossKind::Hamiltonian, &spec, &pool, &inner, &outer)
            .unwrap();
    }
    let json = serde_json::to_string(&first).unwrap();
    let mut resumed: TrainerState = serde_json::from_str(&json).unwrap();
    for _ in 0..2 {
        resumed
            .episode(LossKind::Hamiltonian, &spec, &pool, &inner, &outer)
            .unwrap();
    }
    assert_eq!(resumed, straight);
    assert_eq!(episode_batch(9, 3, 30, 4).len(), 4);
}

#[test]
fn field_model_matches_graph_loss() {
    let spec = small_spec(1, vec![8]);
    let params = init_params(&spec, 0);
    let t = task(SystemKind::Pendulum, 5, 0);
    let model = FieldModel::new(LossKind::Hamiltonian, &spec, &params).unwrap();
    let pred = model.field_batch(&t.train.states).unwrap();
    let direct = (&pred - &t.train.derivs).mapv(|v| v * v).sum() / 5.0;
    let (loss, _) =
        loss_and_grad(LossKind::Hamiltonian, &spec, &params, &t.train, &[0, 1]).unwrap();
    assert!((loss - direct).abs() <= 1e-12 * direct);
    let row: Vec<f64> = t.train.states.row(0).to_vec();
    assert_eq!(model.field(&row).unwrap(), pred.row(0).to_vec());
}
