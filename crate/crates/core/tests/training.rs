use std::collections::BTreeMap;

use tslab_core::data::{corpus_windows, FamilyKind, SynthFamily, WindowSample};
use tslab_core::init::{encode_checkpoint, decode_checkpoint, is_diagonal_backbone, Dtype, TextProxySpec};
use tslab_core::model::{ForecastModel, ModelConfig, ParamGroup};
use tslab_core::train::{
    assemble_model, corpus_split, grid_search_lr, text_proxy_model, train, window_loss, AssemblyConfig, TrainConfig,
    Variant,
};

const L: usize = 16;
const H: usize = 4;

fn sine_windows(n: usize, seed: u64) -> Vec<WindowSample> {
    corpus_windows(&[SynthFamily::new(FamilyKind::SinusoidMix, 0.05)], n, L, H, seed).unwrap()
}

fn tiny_model(seed: u64) -> ForecastModel {
    let m = ForecastModel::new(ModelConfig::tiny()).unwrap();
    tslab_core::init::init_random(&m, seed);
    m
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        batch_size: 16,
        max_epochs: 8,
        patience: 3,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn assembly_cfg() -> AssemblyConfig {
    AssemblyConfig {
        model: ModelConfig::tiny(),
        train: TrainConfig {
            max_epochs: 3,
            ..quick_cfg()
        },
        text_proxy: TextProxySpec {
            vocab_size: 32,
            corpus_tokens: 4000,
            pretrain_steps: 150,
            lr: 1e-2,
            batch_size: 16,
            support: 4,
            boost_set: 8,
            ..TextProxySpec::default()
        },
        seed: 11,
    }
}

#[test]
fn training_is_reproducible() {
    let w = sine_windows(120, 1);
    let (tr, va) = corpus_split(&w);
    let mut a = tiny_model(2);
    let mut b = tiny_model(2);
    let la = train(&mut a, &tr, &va, &quick_cfg()).unwrap();
    let lb = train(&mut b, &tr, &va, &quick_cfg()).unwrap();
    assert_eq!(a.param_hash(), b.param_hash());
    assert_eq!(la.epochs, lb.epochs);
    assert_eq!(la.best_epoch, lb.best_epoch);
}

#[test]
fn best_epoch_is_restored_and_training_helps() {
    let w = sine_windows(200, 4);
    let (tr, va) = corpus_split(&w);
    let mut m = tiny_model(5);
    let log = train(&mut m, &tr, &va, &quick_cfg()).unwrap();
    let best = log.val_losses().into_iter().fold(f64::INFINITY, f64::min);
    assert_eq!(log.best_val_loss, Some(best));
    assert!((window_loss(&m, &va).unwrap() - best).abs() < 1e-9);
    let first = log.epochs[0].val_loss;
    assert!(log.initial_val_loss > best);
    assert!(first >= best);
    assert!(log.train_losses()[0] > *log.train_losses().last().unwrap());
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let w = sine_windows(40, 6);
    let (tr, va) = corpus_split(&w);
    let mut m = tiny_model(7);
    let h = m.param_hash();
    let log = train(&mut m, &tr, &va, &TrainConfig { max_epochs: 0, ..quick_cfg() }).unwrap();
    assert_eq!(m.param_hash(), h);
    assert_eq!(log.best_epoch, None);
}

#[test]
fn frozen_groups_survive_full_runs() {
    let w = sine_windows(60, 8);
    let (tr, va) = corpus_split(&w);
    for groups in [
        vec![ParamGroup::Backbone],
        vec![ParamGroup::Encoder, ParamGroup::Decoder],
        vec![ParamGroup::Encoder, ParamGroup::Pos],
    ] {
        let mut m = tiny_model(9);
        let cfg = quick_cfg().with_freeze(&groups);
        let frozen = cfg.effective_freeze();
        let before: Vec<_> = frozen.iter().map(|g| m.group_state(*g)).collect();
        train(&mut m, &tr, &va, &cfg).unwrap();
        let after: Vec<_> = frozen.iter().map(|g| m.group_state(*g)).collect();
        assert_eq!(before, after, "{groups:?}");
    }
}

#[test]
fn grid_candidates_start_from_the_same_parameters() {
    let w = sine_windows(60, 10);
    let (tr, va) = corpus_split(&w);
    let mut m = tiny_model(11);
    let start = m.param_hash();
    let cfg = TrainConfig {
        grid: Some(vec![1e-2, 1e-3, 1e-4]),
        max_epochs: 3,
        ..quick_cfg()
    };
    let g = grid_search_lr(&mut m, &tr, &va, &cfg).unwrap();
    assert_eq!(g.candidates.len(), 3);
    assert!(g.candidates.iter().all(|c| c.start_hash == start));
    let best = g.candidates.iter().map(|c| c.best_val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(g.candidates.iter().find(|c| c.lr == g.best_lr).unwrap().best_val_loss, best);
    assert!((window_loss(&m, &va).unwrap() - best).abs() < 1e-9);
}

#[test]
fn assembled_variants_honour_their_contracts() {
    let cfg = assembly_cfg();
    let corpus = sine_windows(80, 12);
    let (proxy, outcome) = text_proxy_model(&cfg).unwrap();
    assert!(outcome.model_ppl < outcome.unigram_ppl);

    let a = assemble_model(Variant::A, &corpus, &cfg, None).unwrap();
    assert_eq!(a.model.group_state(ParamGroup::Backbone), proxy.group_state(ParamGroup::Backbone));
    assert_eq!(a.model.group_state(ParamGroup::Pos), proxy.group_state(ParamGroup::Pos));

    let b = assemble_model(Variant::B, &corpus, &cfg, Some(&a.model)).unwrap();
    assert_eq!(b.model.group_state(ParamGroup::Encoder), a.model.group_state(ParamGroup::Encoder));
    assert_eq!(b.model.group_state(ParamGroup::Decoder), a.model.group_state(ParamGroup::Decoder));
    assert_ne!(b.model.group_state(ParamGroup::Backbone), a.model.group_state(ParamGroup::Backbone));

    let c = assemble_model(Variant::C, &corpus, &cfg, None).unwrap();
    let di = assemble_model(Variant::Di, &corpus, &cfg, None).unwrap();
    assert!(is_diagonal_backbone(&di.model));
    assert!(di.model.group_state(ParamGroup::Pos).iter().flatten().all(|v| *v == 0.0));
    let lin = assemble_model(Variant::Linear, &corpus, &cfg, None).unwrap();
    assert!(lin.model.n_params() < c.model.n_params());

    let tags = BTreeMap::new();
    let table = |m: &ForecastModel| {
        m.named_params()
            .into_iter()
            .map(|p| (p.name, p.tensor.shape().to_vec()))
            .collect::<Vec<_>>()
    };
    for v in [&a, &b, &c, &di] {
        assert_eq!(table(&v.model), table(&a.model));
    }
    for v in [&a, &b, &c, &di, &lin] {
        let bytes = encode_checkpoint(&v.model, &tags, Dtype::F64).unwrap();
        let (back, _) = decode_checkpoint(&bytes, Some(v.model.config())).unwrap();
        assert_eq!(encode_checkpoint(&back, &tags, Dtype::F64).unwrap(), bytes, "{}", v.variant.name());
    }
}
