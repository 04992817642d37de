mod common;

use rand::Rng;
use sparsegan::corpus::{random_embeddings, synth_grammar, Corpus, Vocab, BOS, PAD};
use sparsegan::diff::{Graph, Tensor};
use sparsegan::nets::{
    init_model, Checkpoint, ConvCritic, Critic, Decode, EncoderKind, LinearCritic, ParamStore, CRITIC, DAE, EMB, GEN,
};
use sparsegan::train::{
    dae_evaluate, generate_ids, gradient_penalty, gradient_penalty_hidden, interpolate, pretrain_dae,
    pretrain_generator, GpSpace, MetricsLog, SamplePair, ToyConfig, TrainConfig, Trainer,
};
use sparsegan::Error;

struct Fixture {
    vocab: Vocab,
    corpus: Corpus,
    cfg: TrainConfig,
    store: ParamStore,
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        hidden: 8,
        critic_channels: 4,
        critic_widths: vec![3],
        batch: 4,
        n_critic: 2,
        sparse_iters: 3,
        max_len: 16,
        seed: 11,
        lr_adv: 1e-3,
        dae_steps: 5,
        gen_steps: 5,
        log_wallclock: false,
        ..TrainConfig::default()
    }
}

fn fixture_with(cfg: TrainConfig, emb_std: f64) -> Fixture {
    let data = synth_grammar(3, 40).unwrap();
    let lines: Vec<&str> = data.sentences.iter().map(String::as_str).collect();
    let vocab = Vocab::build(lines.iter().copied(), 1).unwrap();
    let corpus = Corpus::from_lines(lines, &vocab, cfg.max_len).unwrap();
    let emb = random_embeddings(vocab.len(), cfg.hidden, emb_std, cfg.seed);
    let store = init_model(&cfg.model(vocab.len()), emb, cfg.seed).unwrap();
    Fixture {
        vocab,
        corpus,
        cfg,
        store,
    }
}

fn fixture() -> Fixture {
    fixture_with(small_cfg(), 1.0)
}

fn trainer(f: &Fixture) -> Trainer {
    Trainer::new(f.cfg.clone(), f.vocab.words().to_vec(), f.store.clone()).unwrap()
}

fn zero_prefix(store: &mut ParamStore, prefix: &str) {
    let names: Vec<String> = store.names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
    for n in names {
        let t = store.get_mut(&n).unwrap();
        *t = Tensor::zeros(t.shape());
    }
}

#[test]
fn config_defaults_and_validation() {
    let c = TrainConfig::default();
    assert_eq!((c.lambda, c.n_critic, c.batch, c.max_len, c.sparse_iters), (10.0, 5, 64, 40, 10));
    assert_eq!((c.lr_pretrain, c.lr_adv, c.max_iters), (1e-3, 1e-4, 20000));
    assert_eq!((c.beta1, c.beta2, c.adam_eps), (0.9, 0.999, 1e-8));
    assert_eq!(c.gp_space, GpSpace::Sparse);
    c.validate().unwrap();
    for bad in [
        TrainConfig { n_critic: 0, ..c.clone() },
        TrainConfig { lambda: -1.0, ..c.clone() },
        TrainConfig { lr_adv: 0.0, ..c.clone() },
        TrainConfig { lr_pretrain: -1e-3, ..c.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn empty_corpus_is_config_error() {
    let vocab = Vocab::from_words(["a"]).unwrap();
    assert!(matches!(Corpus::from_lines(Vec::<&str>::new(), &vocab, 10), Err(Error::Config(_))));
}

#[test]
fn dae_first_loss_is_near_uniform() {
    let mut f = fixture_with(TrainConfig { dae_steps: 1, ..small_cfg() }, 0.1);
    let report = pretrain_dae(&mut f.store, &f.corpus, &f.cfg).unwrap();
    let ln_v = (f.vocab.len() as f64).ln();
    assert!((report.losses[0] - ln_v).abs() < 0.05 * ln_v, "{} vs ln V {}", report.losses[0], ln_v);
}

#[test]
fn dae_pretraining_is_deterministic() {
    let run = || {
        let mut f = fixture();
        pretrain_dae(&mut f.store, &f.corpus, &f.cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
}

#[test]
fn dae_reconstructs_toy_corpus() {
    let toy = ToyConfig::default();
    let data = sparsegan::train::prepare_toy(&toy).unwrap();
    let t = &toy.train;
    let emb = random_embeddings(data.vocab.len(), t.hidden, toy.emb_std, t.seed);
    let mut store = init_model(&t.model(data.vocab.len()), emb, t.seed).unwrap();
    let report = pretrain_dae(&mut store, &data.train, t).unwrap();
    let (_, acc) = dae_evaluate(&store, &data.train, t).unwrap();
    assert_eq!(acc, report.accuracy);
    assert!(report.accuracy >= 0.90, "reconstruction accuracy {}", report.accuracy);
}

/// Ten long sentences with distinct first words; only the first word of
/// each is unpredictable from the latent.
fn memorization_corpus(seed: u64) -> (Vocab, Corpus) {
    let words: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    let mut rng = common::rng(seed);
    let lines: Vec<String> = (0..10)
        .map(|s| {
            let mut line = vec![words[s].clone()];
            line.extend((0..29).map(|_| words[rng.random_range(0..words.len())].clone()));
            line.join(" ")
        })
        .collect();
    let vocab = Vocab::build(lines.iter().map(String::as_str), 1).unwrap();
    let corpus = Corpus::from_lines(lines.iter().map(String::as_str), &vocab, 40).unwrap();
    (vocab, corpus)
}

#[test]
fn generator_memorizes_ten_sentences() {
    let (vocab, corpus) = memorization_corpus(5);
    let cfg = TrainConfig {
        hidden: 32,
        batch: 10,
        gen_steps: 400,
        lr_pretrain: 1e-2,
        seed: 2,
        ..small_cfg()
    };
    let emb = random_embeddings(vocab.len(), cfg.hidden, 1.0, cfg.seed);
    let mut store = init_model(&cfg.model(vocab.len()), emb, cfg.seed).unwrap();
    let report = pretrain_generator(&mut store, &corpus, &cfg).unwrap();
    assert!(report.accuracy >= 0.95, "teacher-forced accuracy {}", report.accuracy);

    let training: std::collections::HashSet<usize> = corpus.sentences().iter().flatten().copied().collect();
    let ids = generate_ids(&store, &cfg.model(vocab.len()), &cfg.encoder(), 20, 40, 1, cfg.z_std, Decode::Greedy).unwrap();
    for id in ids.iter().flatten() {
        assert!(training.contains(id) && *id != BOS && *id != PAD, "emitted {id}");
    }
}

#[test]
fn generator_loss_decreases_on_toy_corpus() {
    let toy = ToyConfig::default();
    let data = sparsegan::train::prepare_toy(&toy).unwrap();
    let t = TrainConfig {
        gen_steps: 100,
        ..toy.train.clone()
    };
    let emb = random_embeddings(data.vocab.len(), t.hidden, toy.emb_std, t.seed);
    let mut store = init_model(&t.model(data.vocab.len()), emb, t.seed).unwrap();
    let report = pretrain_generator(&mut store, &data.train, &t).unwrap();
    let head: f64 = report.losses[..10].iter().sum();
    let tail: f64 = report.losses[90..].iter().sum();
    assert!(tail < head, "first ten {head}, last ten {tail}");
}

#[test]
fn linear_critic_penalty_is_exact() {
    let mut rng = common::rng(3);
    for lambda in [1.0, 10.0] {
        let w = common::rand_tensor(&mut rng, &[5, 4], 0.7);
        let norm = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let s_r = common::rand_tensor(&mut rng, &[5, 4], 1.0);
        let s_g = common::rand_tensor(&mut rng, &[5, 4], 1.0);
        let mut g = Graph::new();
        let critic = LinearCritic {
            w: g.param(w.clone()),
            b: g.param(Tensor::scalar(0.3)),
        };
        let p = gradient_penalty(&mut g, &critic, &s_r, &s_g, rng.random(), lambda).unwrap();
        let expected = lambda * (norm - 1.0).powi(2);
        assert!((g.value(p).item() - expected).abs() < 1e-12);

        let unit = Tensor::new(vec![5, 4], w.data().iter().map(|x| x / norm).collect()).unwrap();
        let mut g = Graph::new();
        let critic = LinearCritic {
            w: g.param(unit),
            b: g.param(Tensor::scalar(0.0)),
        };
        let p = gradient_penalty(&mut g, &critic, &s_r, &s_g, 0.5, lambda).unwrap();
        assert!(g.value(p).item().abs() < 1e-20);
    }
}

#[test]
fn penalty_shape_mismatch_is_dimension_error() {
    let mut g = Graph::new();
    let critic = LinearCritic {
        w: g.param(Tensor::zeros(&[2, 2])),
        b: g.param(Tensor::scalar(0.0)),
    };
    let r = gradient_penalty(&mut g, &critic, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3, 2]), 0.5, 10.0);
    assert!(matches!(r, Err(Error::Dimension { .. })));
}

fn conv_critic_store(seed: u64, d: usize) -> ParamStore {
    common::small_model(&common::small_config(6, d), seed)
}

fn critic_score(store: &ParamStore, widths: &[usize], s: &Tensor) -> f64 {
    let mut g = Graph::new();
    let b = sparsegan::nets::Bound::bind(&mut g, store, |_| sparsegan::nets::Role::Constant);
    let critic = ConvCritic::from_bound(&g, &b, widths).unwrap();
    let s = g.constant(s.clone());
    let d = critic.score(&mut g, s).unwrap();
    g.value(d).item()
}

#[test]
fn conv_critic_penalty_matches_finite_difference_norm() {
    let d = 4;
    let widths = [3];
    let store = conv_critic_store(9, d);
    let mut rng = common::rng(9);
    for _ in 0..5 {
        let s_r = common::rand_tensor(&mut rng, &[6, d], 1.0);
        let s_g = common::rand_tensor(&mut rng, &[6, d], 1.0);
        let eps: f64 = rng.random();
        let lambda = 10.0;
        let mut g = Graph::new();
        let b = sparsegan::nets::Bound::bind(&mut g, &store, |_| sparsegan::nets::Role::Constant);
        let critic = ConvCritic::from_bound(&g, &b, &widths).unwrap();
        let p = gradient_penalty(&mut g, &critic, &s_r, &s_g, eps, lambda).unwrap();
        let p = g.value(p).item();

        let s_hat = interpolate(&s_r, &s_g, eps).unwrap();
        let h = 1e-6;
        let mut sq = 0.0;
        for i in 0..s_hat.numel() {
            let mut plus = s_hat.clone();
            plus.data_mut()[i] += h;
            let mut minus = s_hat.clone();
            minus.data_mut()[i] -= h;
            let gi = (critic_score(&store, &widths, &plus) - critic_score(&store, &widths, &minus)) / (2.0 * h);
            sq += gi * gi;
        }
        let oracle = lambda * (sq.sqrt() - 1.0).powi(2);
        assert!(p >= 0.0);
        assert!((p - oracle).abs() <= 1e-4 * oracle.abs().max(1e-8), "{p} vs {oracle}");
    }
}

#[test]
fn hidden_space_penalty_without_encoder_equals_sparse_space() {
    let f = fixture_with(
        TrainConfig {
            encoder_kind: EncoderKind::None,
            ..small_cfg()
        },
        1.0,
    );
    let t = trainer(&f);
    let mut rng = common::rng(4);
    let h_r = common::rand_tensor(&mut rng, &[5, 8], 1.0);
    let h_g = common::rand_tensor(&mut rng, &[5, 8], 1.0);
    let widths = f.cfg.critic_widths.clone();
    let mut g = Graph::new();
    let b = sparsegan::nets::Bound::bind(&mut g, &f.store, |_| sparsegan::nets::Role::Constant);
    let critic = ConvCritic::from_bound(&g, &b, &widths).unwrap();
    let a = gradient_penalty(&mut g, &critic, &h_r, &h_g, 0.3, 10.0).unwrap();
    let emb = f.store.get(EMB).unwrap();
    let h = gradient_penalty_hidden(&mut g, &critic, &h_r, &h_g, 0.3, 10.0, emb, &t.enc, &[PAD]).unwrap();
    assert!((g.value(a).item() - g.value(h).item()).abs() < 1e-12);
}

fn pair(s_r: Tensor, s_g: Tensor) -> SamplePair {
    SamplePair {
        h_r: s_r.clone(),
        h_g: s_g.clone(),
        s_r,
        s_g,
        eps: 0.5,
    }
}

#[test]
fn identical_batches_without_penalty_give_zero_loss() {
    let f = fixture_with(TrainConfig { lambda: 0.0, ..small_cfg() }, 1.0);
    let t = trainer(&f);
    let mut rng = common::rng(8);
    let pairs: Vec<SamplePair> = (0..3)
        .map(|_| {
            let s = common::rand_tensor(&mut rng, &[6, 8], 1.0);
            pair(s.clone(), s)
        })
        .collect();
    let (stats, _) = t.critic_loss_on(&pairs).unwrap();
    assert_eq!(stats.loss, 0.0);
    assert_eq!(stats.wasserstein, 0.0);
}

#[test]
fn zero_critic_loss_is_penalty() {
    let mut f = fixture();
    zero_prefix(&mut f.store, CRITIC);
    f.store.insert("critic.b", Tensor::filled(&[1, 1], 0.7));
    let mut t = trainer(&f);
    let stats = t.critic_iteration(&f.corpus, 0).unwrap();
    assert_eq!(stats.d_real, 0.7);
    assert_eq!(stats.d_fake, 0.7);
    assert_eq!(stats.wasserstein, 0.0);
    assert_eq!(stats.loss, stats.penalty);
    assert!((stats.penalty - f.cfg.lambda).abs() < 1e-12);
}

#[test]
fn critic_iteration_changes_only_critic() {
    let f = fixture();
    let mut t = trainer(&f);
    let before: Vec<u64> = [GEN, DAE, EMB, CRITIC].iter().map(|p| t.store.checksum(p)).collect();
    t.critic_iteration(&f.corpus, 0).unwrap();
    let after: Vec<u64> = [GEN, DAE, EMB, CRITIC].iter().map(|p| t.store.checksum(p)).collect();
    assert_eq!(before[..3], after[..3]);
    assert_ne!(before[3], after[3]);
}

#[test]
fn generator_iteration_leaves_critic_and_dae() {
    for freeze in [false, true] {
        let f = fixture_with(
            TrainConfig {
                freeze_embeddings: freeze,
                ..small_cfg()
            },
            1.0,
        );
        let mut t = trainer(&f);
        let before: Vec<u64> = [GEN, DAE, EMB, CRITIC].iter().map(|p| t.store.checksum(p)).collect();
        t.generator_iteration(&f.corpus).unwrap();
        let after: Vec<u64> = [GEN, DAE, EMB, CRITIC].iter().map(|p| t.store.checksum(p)).collect();
        assert_ne!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert_eq!(before[2] == after[2], freeze);
        assert_eq!(before[3], after[3]);
    }
}

#[test]
fn zero_critic_gives_zero_generator_gradients() {
    let mut f = fixture();
    let names: Vec<String> = f.store.names().filter(|n| n.starts_with("critic.conv") || *n == "critic.w").map(String::from).collect();
    assert!(!names.is_empty());
    for n in names {
        let t = f.store.get_mut(&n).unwrap();
        *t = Tensor::zeros(t.shape());
    }
    let t = trainer(&f);
    let latents = t.generator_latents(&f.corpus).unwrap();
    let (stats, grads) = t.generator_loss_on(&latents).unwrap();
    assert_eq!(stats.grad_norm, 0.0);
    assert!(grads.0.values().all(|g| g.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn generator_loss_falls_against_a_frozen_critic() {
    let f = fixture();
    let mut t = trainer(&f);
    for j in 0..10 {
        t.critic_iteration(&f.corpus, j % t.cfg.n_critic).unwrap();
    }
    let critic = t.store.checksum(CRITIC);
    let probe = t.generator_latents(&f.corpus).unwrap();
    let (start, _) = t.generator_loss_on(&probe).unwrap();
    for _ in 0..50 {
        t.generator_iteration(&f.corpus).unwrap();
        t.iter += 1;
    }
    let (end, _) = t.generator_loss_on(&probe).unwrap();
    assert_eq!(critic, t.store.checksum(CRITIC));
    assert!(end.loss < start.loss, "{} -> {}", start.loss, end.loss);
}

#[test]
fn separable_case_sign_convention() {
    let f = fixture_with(TrainConfig { lambda: 0.0, ..small_cfg() }, 1.0);
    let mut t = trainer(&f);
    let emb = f.store.get(EMB).unwrap();
    let rows = |id: usize| {
        let mut data = Vec::new();
        (0..6).for_each(|_| data.extend_from_slice(emb.row_slice(id)));
        Tensor::matrix(6, 8, data).unwrap()
    };
    let pairs = vec![pair(rows(5), rows(6)); 4];
    let first = t.critic_loss_on(&pairs).unwrap().0;
    let mut last = first;
    for _ in 0..30 {
        let s = t.critic_step_on(&pairs).unwrap();
        assert_eq!(s.loss, -s.wasserstein);
        last = t.critic_loss_on(&pairs).unwrap().0;
    }
    assert!(last.loss < first.loss);
    assert!(last.wasserstein > first.wasserstein);
}

#[test]
fn non_finite_critic_aborts_with_gradient_norms() {
    let mut f = fixture();
    f.store.get_mut("critic.w").unwrap().data_mut()[0] = f64::NAN;
    let mut t = trainer(&f);
    let before = t.store.checksum(CRITIC);
    match t.critic_iteration(&f.corpus, 0) {
        Err(Error::NonFinite { phase, grad_norms }) => {
            assert_eq!(phase, "critic");
            assert!(grad_norms.iter().any(|(n, _)| n == "critic.w"));
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(before, t.store.checksum(CRITIC));
}

#[test]
fn zero_iterations_write_only_the_initial_checkpoint() {
    let f = fixture_with(TrainConfig { max_iters: 0, ..small_cfg() }, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(&f);
    let written = t.run(&f.corpus, f.cfg.max_iters, Some(dir.path())).unwrap();
    assert_eq!(written, vec![Trainer::checkpoint_path(dir.path(), 0)]);
    assert!(t.log.is_empty());
    assert_eq!(t.log.to_jsonl().unwrap(), "");
    let back = Trainer::from_checkpoint(Checkpoint::load(&written[0]).unwrap(), None).unwrap();
    assert_eq!(back.store, f.store);
}

fn run_log(f: &Fixture, iters: u64) -> (MetricsLog, ParamStore) {
    let mut t = trainer(f);
    t.run(&f.corpus, iters, None).unwrap();
    (t.log, t.store)
}

#[test]
fn training_is_deterministic() {
    let f = fixture();
    let (a, sa) = run_log(&f, 4);
    let (b, sb) = run_log(&f, 4);
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_eq!(sa, sb);
    assert_eq!(a.len(), 4);
    assert!(a.all_finite());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let f = fixture_with(
        TrainConfig {
            checkpoint_every: 3,
            ..small_cfg()
        },
        1.0,
    );
    let (full, full_store) = run_log(&f, 13);

    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(&f);
    t.run(&f.corpus, 3, Some(dir.path())).unwrap();
    let ckpt = Checkpoint::load(&Trainer::checkpoint_path(dir.path(), 3)).unwrap();
    drop(t);
    let mut resumed = Trainer::from_checkpoint(ckpt, None).unwrap();
    assert_eq!(resumed.iter, 3);
    resumed.run(&f.corpus, 13, None).unwrap();
    assert_eq!(full.to_jsonl().unwrap(), resumed.log.to_jsonl().unwrap());
    assert_eq!(full_store, resumed.store);
}

#[test]
fn checkpoints_follow_the_interval() {
    let f = fixture_with(
        TrainConfig {
            checkpoint_every: 2,
            ..small_cfg()
        },
        1.0,
    );
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(&f);
    let written = t.run(&f.corpus, 5, Some(dir.path())).unwrap();
    let iters: Vec<u64> = [0, 2, 4, 5].to_vec();
    assert_eq!(written, iters.iter().map(|&i| Trainer::checkpoint_path(dir.path(), i)).collect::<Vec<_>>());
}

#[test]
fn wallclock_budget_stops_early() {
    let f = fixture_with(
        TrainConfig {
            wallclock_budget_secs: Some(0.0),
            ..small_cfg()
        },
        1.0,
    );
    let mut t = trainer(&f);
    t.run(&f.corpus, 5, None).unwrap();
    assert_eq!(t.iter, 0);
}

#[test]
fn every_encoder_trains() {
    for kind in [EncoderKind::Sparse, EncoderKind::TopkStatic, EncoderKind::TopkDynamic, EncoderKind::None] {
        for gp in [GpSpace::Sparse, GpSpace::Hidden] {
            let f = fixture_with(
                TrainConfig {
                    encoder_kind: kind,
                    gp_space: gp,
                    ..small_cfg()
                },
                1.0,
            );
            let mut t = trainer(&f);
            t.run(&f.corpus, 2, None).unwrap();
            assert!(t.log.all_finite(), "{kind:?} {gp:?}");
        }
    }
}

#[test]
fn metrics_log_round_trip_and_order() {
    let f = fixture();
    let (log, _) = run_log(&f, 2);
    let text = log.to_jsonl().unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(MetricsLog::from_jsonl(&text).unwrap(), log);
    let mut bad = log.clone();
    let first = bad.records[0].clone();
    assert!(bad.push(first).is_err());
}
