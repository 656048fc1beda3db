use hiermem::config::{Ablation, TrainConfig};
use hiermem::eval::{generate_synthetic, SyntheticSpec};
use hiermem::fixture::{fixture_config, fixture_graph, gradient_check, synthetic_config};
use hiermem::graph::{Graph, SplitAssignment};
use hiermem::membership::hard_assignment;
use hiermem::model::infer;
use hiermem::numerics::Tensor;
use hiermem::trainer::{Checkpoint, Trainer};
use hiermem::Error;

fn small(epochs: usize) -> (Graph, TrainConfig) {
    let s = generate_synthetic(&SyntheticSpec::nested(2, 2, 10, [0.5, 0.1, 0.02], 2.0, 3)).unwrap();
    let mut c = synthetic_config(epochs, 9);
    c.batch_size = 16;
    c.deterministic = true;
    (s.graph, c)
}

fn totals(t: &Trainer) -> Vec<f64> {
    t.history().iter().map(|r| r.total).collect()
}

#[test]
fn same_seed_same_losses() {
    let (g, c) = small(5);
    let run = || {
        let mut t = Trainer::new(c.clone(), &g, None).unwrap();
        t.run(None).unwrap();
        totals(&t)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 5);
    assert!((a[4] - b[4]).abs() <= 1e-9);
    assert_eq!(a, b);
}

#[test]
fn losses_stay_finite() {
    let (g, c) = small(8);
    let mut t = Trainer::new(c, &g, None).unwrap();
    t.run(None).unwrap();
    for r in t.history() {
        assert!(r.total.is_finite() && r.val_loss.is_finite());
        assert!(r.l_context.iter().chain(&r.l_reg).all(|v| v.is_finite()));
    }
}

#[test]
fn disabled_reg_matches_zero_weights() {
    let (g, c) = small(3);
    let mut off = c.clone();
    off.disable_reg = true;
    let mut zero = c.clone();
    zero.gamma = 0.0;
    zero.beta = 0.0;
    let mut a = Trainer::new(off, &g, None).unwrap();
    let mut b = Trainer::new(zero, &g, None).unwrap();
    a.run(None).unwrap();
    b.run(None).unwrap();
    assert_eq!(totals(&a), totals(&b));
    assert!(a.history().iter().all(|r| r.l_reg.is_empty()));
    assert!(b.history().iter().all(|r| r.l_reg.iter().all(|&v| v == 0.0)));
}

#[test]
fn minus_reg_drops_the_term() {
    let (g, c) = small(2);
    let mut t = Trainer::new(c.with_ablation(Ablation::MinusReg), &g, None).unwrap();
    t.run(None).unwrap();
    assert!(t.history().iter().all(|r| r.l_reg.is_empty()));
    let mut full = Trainer::new(c, &g, None).unwrap();
    full.run(None).unwrap();
    assert!(full.history().iter().all(|r| r.l_reg.len() == 1));
}

#[test]
fn minus_lambda_is_a_no_op_with_one_group() {
    let (g, mut c) = small(3);
    c.layers = 1;
    c.groups = vec![1];
    c.dims = vec![16];
    c.fanouts = vec![6];
    let mut base = Trainer::new(c.clone(), &g, None).unwrap();
    let mut ablated = Trainer::new(c.with_ablation(Ablation::MinusLambda), &g, None).unwrap();
    base.run(None).unwrap();
    ablated.run(None).unwrap();
    for (a, b) in totals(&base).iter().zip(totals(&ablated)) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn resume_reproduces_the_next_epoch() {
    let (g, c) = small(12);
    let mut straight = Trainer::new(c.clone(), &g, None).unwrap();
    for _ in 0..11 {
        straight.step_epoch().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(c.clone(), &g, None).unwrap();
    for _ in 0..10 {
        first.step_epoch().unwrap();
    }
    first.save_checkpoint(dir.path(), serde_json::json!({})).unwrap();
    let mut resumed = Trainer::resume(dir.path(), c.clone(), &g, None).unwrap();
    assert_eq!(resumed.epoch(), 10);
    assert_eq!(resumed.adam_step(), first.adam_step());
    assert_eq!(resumed.params(), first.params());
    let r = resumed.step_epoch().unwrap();
    assert_eq!(&r, straight.history().last().unwrap());
    assert_eq!(resumed.params(), straight.params());
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let (g, c) = small(2);
    let mut t = Trainer::new(c.clone(), &g, None).unwrap();
    t.run(None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    t.save_checkpoint(dir.path(), serde_json::Value::Null).unwrap();
    let ckpt = Checkpoint::load(dir.path()).unwrap();
    assert_eq!(ckpt.config, c);
    let outcome = t.finish();
    assert_eq!(ckpt.params(&g).unwrap(), outcome.params);

    let mut other = c.clone();
    other.groups = vec![3, 2];
    assert!(matches!(Trainer::resume(dir.path(), other, &g, None), Err(Error::Incompatible(_))));
    let mut other_k = c.clone();
    other_k.groups = vec![5, 2];
    let shape = hiermem::model::ModelShape::new(&other_k, &g);
    let named: Vec<(String, Tensor)> = ckpt.tensors.iter().filter_map(|(n, t)| n.strip_prefix("param.").map(|s| (s.into(), t.clone()))).collect();
    assert!(matches!(hiermem::model::ModelParams::from_named(&shape, &named), Err(Error::Incompatible(_))));
}

#[test]
fn non_finite_loss_reports_the_batch() {
    let (g, c) = small(1);
    let mut f = g.features().clone();
    f.data_mut()[3] = f64::NAN;
    let bad = Graph::from_edges(g.node_count(), g.edges(), f).unwrap();
    let err = Trainer::new(c, &bad, None).unwrap().step_epoch().unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
    assert!(err.to_string().contains("offending batch"), "{err}");
}

#[test]
fn joint_classification_and_two_phase_run() {
    let (g, mut c) = small(3);
    c.classification = true;
    c.two_phase = true;
    c.finetune_epochs = 2;
    let split = SplitAssignment::new(&g, 5, 0).unwrap();
    let roles = split.roles(0);
    let mut t = Trainer::new(c, &g, Some(&roles)).unwrap();
    t.run(None).unwrap();
    let h = t.history();
    assert_eq!(h.len(), 5);
    assert!(h[..3].iter().all(|r| r.l_cls.is_none()));
    assert!(h[3..].iter().all(|r| r.l_cls.is_some()));
    assert!(t.params().classifier.is_some());
}

#[test]
fn must_link_violations_drop_with_training() {
    let spec = SyntheticSpec::benchmark(0);
    let s = generate_synthetic(&spec).unwrap();
    let c = synthetic_config(60, 0);
    let rate = |params: &hiermem::model::ModelParams| {
        let inf = infer(params, &c, &s.graph, 0, c.tau).unwrap();
        let upper: Vec<usize> = (0..s.fine.len()).map(|i| hard_assignment(inf.pi[1].row(i))).collect();
        let (mut pairs, mut bad) = (0usize, 0usize);
        for i in 0..s.fine.len() {
            for j in i + 1..s.fine.len() {
                if s.fine[i] == s.fine[j] {
                    pairs += 1;
                    bad += usize::from(upper[i] != upper[j]);
                }
            }
        }
        bad as f64 / pairs as f64
    };
    let mut t = Trainer::new(c.clone(), &s.graph, None).unwrap();
    let before = rate(t.params());
    t.run(None).unwrap();
    let after = rate(&t.finish().params);
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn fixture_gradients_match_without_classifier() {
    let g = fixture_graph(1);
    let mut c = fixture_config();
    c.classification = false;
    let report = gradient_check(&c, &g, 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn joint_context_table_gradients_match() {
    let g = fixture_graph(2);
    let mut c = fixture_config();
    c.context_form = hiermem::objective::ContextForm::Joint;
    let report = gradient_check(&c, &g, 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}
