use chantrack::harness::evaluate::evaluate_with;
use chantrack::harness::sweep::train_method;
use chantrack::harness::{
    evaluate_ls, generate_dataset, train, AnyModel, ExperimentConfig, Method, PointData, Split,
    TrainOptions,
};
use chantrack::ChannelTracker;
use num_complex::Complex64;

fn config(nr: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.system.n_antennas = nr;
    c.training.n_train_samples = 300;
    c.training.n_validation_samples = 60;
    c.training.n_epochs = 4;
    c.training.kappa = 1e-4;
    c.evaluation.n_eval_samples = 100;
    c
}

#[test]
fn zero_predictor_scores_the_channel_power() {
    let mut c = config(16);
    c.evaluation.n_eval_samples = 2000;
    let eval = generate_dataset(&c, Split::Eval, 2000).unwrap();
    let mse = evaluate_with(&eval, |chunk| {
        Ok(vec![Complex64::new(0.0, 0.0); chunk.len() * 16])
    })
    .unwrap();
    assert!((mse - 1.0).abs() < 0.05, "zero predictor mse {mse}");
}

#[test]
fn held_ls_at_rest_costs_only_the_noise() {
    // A static user with K = 2: the held estimate differs from the channel
    // by the pilot noise alone, so the error is σ_n² = 10^(−SNR/10).
    let mut c = config(16);
    c.system.user_speed = 0.0;
    c.system.snr_db = 10.0;
    c.layout.group_len = 2;
    let eval = generate_dataset(&c, Split::Eval, 2000).unwrap();
    let mse = evaluate_ls(&eval).unwrap();
    assert!((mse / 0.1 - 1.0).abs() < 0.03, "LS mse {mse}");
}

#[test]
fn held_ls_degrades_with_speed() {
    let c = config(8);
    let mse_at = |v: f64| {
        let mut c = c.clone();
        c.system.user_speed = v;
        evaluate_ls(&generate_dataset(&c, Split::Eval, 1000).unwrap()).unwrap()
    };
    let (slow, fast) = (mse_at(5.0), mse_at(50.0));
    assert!(slow < fast, "slow {slow} fast {fast}");
}

#[test]
fn training_lowers_the_loss() {
    let c = config(8);
    let data = PointData::generate(&c).unwrap();
    for m in [Method::Gnn, Method::Fnn] {
        let t = train_method(&c, m, &data).unwrap();
        let h = &t.report.history;
        assert!(h.last().unwrap().mse < h[0].mse, "{m}: {:?}", h);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let c = config(8);
    let data = PointData::generate(&c).unwrap();
    for m in [Method::Gnn, Method::Fnn] {
        let mut model = AnyModel::build(&c, m).unwrap();
        let before = model.params_flat();
        let opts = TrainOptions {
            learning_rate: 0.0,
            n_epochs: 2,
            ..TrainOptions::from_config(&c, m)
        };
        train(&mut model, &data.train, &[], &opts).unwrap();
        assert_eq!(model.params_flat(), before, "{m}");
    }
}

#[test]
fn different_seeds_give_different_models_and_data() {
    let c = config(8);
    let a = AnyModel::build(&c.with_seed(0), Method::Gnn).unwrap();
    let b = AnyModel::build(&c.with_seed(1), Method::Gnn).unwrap();
    assert_ne!(a.params_flat(), b.params_flat());
    let da = generate_dataset(&c.with_seed(0), Split::Train, 5).unwrap();
    let db = generate_dataset(&c.with_seed(1), Split::Train, 5).unwrap();
    assert_ne!(da[0].target, db[0].target);
}

#[test]
fn early_stopping_keeps_the_best_validation_epoch() {
    let mut c = config(8);
    c.training.n_epochs = 6;
    c.training.patience = 2;
    let data = PointData::generate(&c).unwrap();
    let t = train_method(&c, Method::Gnn, &data).unwrap();
    let best = t
        .report
        .history
        .iter()
        .min_by(|a, b| a.val_mse.unwrap().total_cmp(&b.val_mse.unwrap()))
        .unwrap();
    assert_eq!(best.epoch, t.report.best_epoch);
    let restored = chantrack::harness::evaluate(&t.model, &data.validation).unwrap();
    assert_eq!(restored.to_bits(), best.val_mse.unwrap().to_bits());
}
