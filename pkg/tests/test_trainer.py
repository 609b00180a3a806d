import dataclasses

import numpy as np
import pytest

from instrsearch.errors import TooFewPairs
from instrsearch.retrieval import ZeroVector
from instrsearch.trainer import (
    COMMENT,
    SHARED,
    TRANSLATION,
    Model,
    Moments,
    NonFiniteLoss,
    ShapeMismatch,
    TrainConfig,
    TrainingPair,
    TrainState,
    Triplet,
    batch_loss_and_grads,
    clip_by_global_norm,
    format_log_line,
    optimizer_step,
    ranking_loss,
    sample_negatives,
    split_validation,
    train,
    train_epoch,
)

from gradcheck import numeric_grad, rel_error


def random_pairs(n, vocab=20, seed=0, max_len=6):
    rng = np.random.default_rng(seed)

    def seq():
        return tuple(rng.integers(1, vocab, size=rng.integers(1, max_len + 1)).tolist())

    return [TrainingPair(f"p{i}", seq(), seq()) for i in range(n)]


def small_config(**kw):
    base = dict(embed_dim=8, hidden_dim=8, batch_size=4, epochs=2, seed=1, dropout=0.0, vocab_size=20)
    base.update(kw)
    return TrainConfig(**base)


def test_default_hyperparameters():
    c = TrainConfig()
    assert (c.batch_size, c.vocab_size, c.embed_dim, c.hidden_dim) == (32, 15000, 512, 512)
    assert (c.margin, c.learning_rate, c.dropout, c.epochs) == (0.6, 3e-4, 0.1, 200)
    assert (c.beta1, c.beta2, c.eps, c.weight_decay) == (0.9, 0.999, 1e-8, 0.01)


@pytest.mark.parametrize("field,value", [("margin", 0.0), ("batch_size", 0), ("learning_rate", -1.0),
                                         ("dropout", 1.0), ("seed", -3)])
def test_config_rejects_bad_values(field, value):
    with pytest.raises(ValueError):
        TrainConfig(**{field: value})


def test_pair_needs_both_sequences():
    with pytest.raises(ValueError):
        TrainingPair("x", (), (1,))


def test_two_pairs_swap_negatives():
    pairs = random_pairs(2)
    t = sample_negatives(pairs, seed=3)
    assert t[0].c_neg == pairs[1].comment_ids and t[1].c_neg == pairs[0].comment_ids


def test_one_pair_is_too_few():
    with pytest.raises(TooFewPairs):
        sample_negatives(random_pairs(1), seed=0)


def test_negative_sampling_is_seeded():
    pairs = random_pairs(100)
    assert sample_negatives(pairs, 5, epoch=2) == sample_negatives(pairs, 5, epoch=2)
    assert sample_negatives(pairs, 5, epoch=2) != sample_negatives(pairs, 5, epoch=3)


def test_negatives_come_from_other_pairs():
    pairs = random_pairs(30)
    for tr in sample_negatives(pairs, 9):
        assert tr.neg_index != tr.pair_index


def test_ranking_loss_examples():
    t, c = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert ranking_loss(t, t, c, 0.6) == 0.0
    assert ranking_loss(t, c, c, 0.6) == pytest.approx(0.6)
    assert ranking_loss(t, c, t, 0.6) == pytest.approx(1.6)
    with pytest.raises(ZeroVector):
        ranking_loss(np.zeros(2), t, c, 0.6)


def test_model_layouts():
    shared = Model.init(small_config(), 20)
    assert list(shared.embeddings) == [SHARED]
    assert shared.comment_embedding is shared.translation_embedding
    split = Model.init(small_config(shared_vocab=False), (15, 25))
    assert sorted(split.embeddings) == [COMMENT, TRANSLATION]
    assert split.comment_embedding.shape[0] == 15 and split.translation_embedding.shape[0] == 25
    assert not shared.embeddings[SHARED][0].any()


@pytest.mark.parametrize("shared", [True, False])
def test_full_loss_gradient_matches_finite_differences(shared):
    cfg = small_config(shared_vocab=shared)
    model = Model.init(cfg, 20).astype(np.float64)
    pairs = random_pairs(3, seed=11)
    triplets = [Triplet(pairs[0].translation_ids, pairs[0].comment_ids, pairs[1].comment_ids, 0, 1)]
    res = batch_loss_and_grads(model, triplets, cfg, train=False)
    assert res.loss > 0

    def f():
        return batch_loss_and_grads(model, triplets, cfg, train=False, need_grads=False).loss

    for name, arr in model.parameters().items():
        assert rel_error(res.grads[name], numeric_grad(f, arr)) <= 1e-3, name


def test_zero_margin_identical_comments_gives_zero_loss():
    cfg = small_config(weight_decay=0.0)
    cfg.margin = 0.0  # below the config floor on purpose: the hinge must be flat
    pairs = [TrainingPair(f"p{i}", (1 + i, 2), (3, 4)) for i in range(4)]
    state = TrainState.fresh(cfg, 20)
    before = {k: v.copy() for k, v in state.model.parameters().items()}
    state, loss = train_epoch(state, pairs, cfg)
    assert loss == 0.0
    for k, v in state.model.parameters().items():
        assert np.array_equal(v, before[k]), k


def test_zero_grads_only_decay_weights():
    cfg = small_config(weight_decay=0.01, learning_rate=0.1)
    params = {"w": np.ones((2, 2), dtype=np.float32)}
    optimizer_step(params, {"w": np.zeros((2, 2), dtype=np.float32)}, Moments.zeros_for(params), cfg)
    np.testing.assert_allclose(params["w"], 1 - 0.1 * 0.01)


def test_zero_grads_zero_decay_unchanged():
    cfg = small_config(weight_decay=0.0)
    params = {"w": np.full(3, 2.0)}
    optimizer_step(params, {"w": np.zeros(3)}, Moments.zeros_for(params), cfg)
    assert params["w"].tolist() == [2.0, 2.0, 2.0]


def test_first_step_moves_by_learning_rate():
    cfg = small_config(weight_decay=0.0, learning_rate=3e-4)
    params = {"x": np.array([0.5])}
    optimizer_step(params, {"x": np.array([1.0])}, Moments.zeros_for(params), cfg)
    # bias-corrected moments are exactly g and g^2 on step one
    assert 0.5 - params["x"][0] == pytest.approx(3e-4 * 1.0 / (1.0 + 1e-8), rel=1e-9)


def test_pad_row_never_moves():
    cfg = small_config(learning_rate=0.1)
    params = {"embed.shared": np.zeros((4, 3)), "w": np.ones(2)}
    params["embed.shared"][1:] = 1.0
    grads = {"embed.shared": np.ones((4, 3)), "w": np.ones(2)}
    moments = Moments.zeros_for(params)
    for _ in range(3):
        optimizer_step(params, grads, moments, cfg)
    assert not params["embed.shared"][0].any()
    assert (params["embed.shared"][1:] < 1.0).all()


def test_shape_mismatch():
    params = {"w": np.zeros(3)}
    with pytest.raises(ShapeMismatch):
        optimizer_step(params, {"w": np.zeros(4)}, Moments.zeros_for(params), small_config())
    with pytest.raises(ShapeMismatch):
        optimizer_step(params, {}, Moments.zeros_for(params), small_config())


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_by_global_norm(grads, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose([grads["a"][0], grads["b"][0]], [0.6, 0.8], rtol=1e-9)
    with pytest.raises(NonFiniteLoss):
        clip_by_global_norm({"a": np.array([np.nan])}, 1.0)


def test_non_finite_parameters_abort():
    cfg = small_config()
    state = TrainState.fresh(cfg, 20)
    state.model.tenc.w_x[:] = np.nan
    with pytest.raises(NonFiniteLoss):
        train_epoch(state, random_pairs(4), cfg)


def test_epoch_visits_every_pair_and_advances():
    cfg = small_config(batch_size=3)
    state = TrainState.fresh(cfg, 20)
    state, loss = train_epoch(state, random_pairs(7), cfg)
    assert state.epoch == 1
    assert state.moments.step == 3  # 3 + 3 + a partial batch of 1
    assert loss >= 0


def test_loss_falls_on_tiny_corpus():
    cfg = small_config(embed_dim=16, hidden_dim=16, batch_size=8, learning_rate=0.01, epochs=50, val_fraction=0.0)
    result = train(random_pairs(8, seed=2), cfg, 20)
    losses = [loss for _, loss, _ in result.history]
    assert np.mean(losses[-10:]) < losses[0]


def test_training_is_deterministic():
    cfg = small_config(dropout=0.1, epochs=3)
    a = train(random_pairs(10), cfg, 20)
    b = train(random_pairs(10), cfg, 20)
    assert a.history == b.history
    for k, v in a.state.model.parameters().items():
        assert np.array_equal(v, b.state.model.parameters()[k])


def test_validation_split_and_best_epoch():
    pairs = random_pairs(60)
    tr, val = split_validation(pairs, 0.05, seed=4)
    assert len(val) == 3 and len(tr) == 57
    assert split_validation(pairs, 0.05, seed=4) == (tr, val)
    assert split_validation(random_pairs(10), 0.05, seed=4)[1] == []

    cfg = small_config(epochs=4, val_fraction=0.05)
    lines = []
    result = train(pairs, cfg, 20, log=lines.append)
    assert len(lines) == 4
    vals = [v for _, _, v in result.history]
    assert result.best_epoch == 1 + int(np.argmin(vals))
    assert result.state.epoch == result.best_epoch


def test_log_line_format():
    assert format_log_line(3, 0.5, 0.25) == "3\t0.500000\t0.250000"
    assert format_log_line(3, 0.5, None) == "3\t0.500000\tnan"


def test_config_round_trip():
    cfg = small_config(shared_vocab=False)
    assert TrainConfig(**cfg.to_dict()) == cfg
    assert dataclasses.asdict(cfg) == cfg.to_dict()


@pytest.mark.slow
def test_overfits_twenty_toy_pairs():
    from instrsearch.corpus import CorpusRecord, make_pairs, translate_records
    from instrsearch.retrieval import mrr
    from instrsearch.ruleset import default_rules
    from instrsearch.synthetic import toy_corpus
    from instrsearch.text import build_shared_vocabulary
    from instrsearch.trainer import retrieval_franks

    recs = [CorpusRecord(r["id"], r["code"], r["docstring"], r["disassembly"]) for r in toy_corpus(20, 0)]
    items = translate_records(recs, default_rules()).items
    vocab = build_shared_vocabulary([i.translation for i in items], [i.record.comment for i in items], 15000)
    pairs = make_pairs(items, vocab)
    cfg = TrainConfig(embed_dim=32, hidden_dim=32, batch_size=2, learning_rate=0.003, epochs=200, seed=1,
                      val_fraction=0.0)
    res = train(pairs, cfg, len(vocab))
    # each training comment ranked against all 20 translations
    score = mrr(retrieval_franks(res.state.model, pairs), cutoff=20)
    assert score >= 0.9, f"training-set MRR {score:.4f}"
