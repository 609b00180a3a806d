"""Joint training of the comment and translation encoders with a cosine margin ranking loss."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .encoder import EncoderParams, encode, encode_backward
from .errors import InstrSearchError, TooFewPairs
from .retrieval import ZeroVector, cosine, distractor_franks
from .text import PAD_ID, pad_batch

IdSeq = Sequence[int]

VALIDATION_EPOCH = 2**31 - 1  # negative-sampling stream reserved for the validation split

SHARED = "shared"
COMMENT = "comment"
TRANSLATION = "translation"


class TrainingError(InstrSearchError):
    pass


class NonFiniteLoss(TrainingError):
    pass


class ShapeMismatch(TrainingError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    vocab_size: int = 15000
    embed_dim: int = 512
    hidden_dim: int = 512
    margin: float = 0.6
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.1
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.05
    clip_norm: float = 5.0
    max_len: int = 512
    shared_vocab: bool = True

    def __post_init__(self) -> None:
        for name in ("batch_size", "vocab_size", "embed_dim", "hidden_dim", "epochs", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainingPair:
    snippet_id: str
    translation_ids: tuple[int, ...]
    comment_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.translation_ids or not self.comment_ids:
            raise ValueError(f"pair {self.snippet_id!r} has an empty sequence")
        object.__setattr__(self, "translation_ids", tuple(int(i) for i in self.translation_ids))
        object.__setattr__(self, "comment_ids", tuple(int(i) for i in self.comment_ids))


@dataclass(frozen=True)
class Triplet:
    t: tuple[int, ...]
    c_pos: tuple[int, ...]
    c_neg: tuple[int, ...]
    pair_index: int
    neg_index: int


@dataclass
class Model:
    """Embedding table(s) plus the two encoders.

    With a shared vocabulary there is one table under ``"shared"``; the
    two-vocabulary ablation keeps ``"comment"`` and ``"translation"`` tables.
    """

    embeddings: dict[str, np.ndarray]
    cenc: EncoderParams
    tenc: EncoderParams

    @classmethod
    def init(cls, config: TrainConfig, vocab_sizes, dtype=np.float32) -> "Model":
        """``vocab_sizes`` is one int (shared) or ``(comment, translation)``."""
        rng = np.random.default_rng([config.seed, 101])

        def table(n):
            emb = rng.uniform(-0.1, 0.1, size=(n, config.embed_dim)).astype(dtype)
            emb[PAD_ID] = 0.0
            return emb

        if config.shared_vocab:
            n = vocab_sizes if isinstance(vocab_sizes, int) else vocab_sizes[0]
            embeddings = {SHARED: table(n)}
        else:
            nc, nt = (vocab_sizes, vocab_sizes) if isinstance(vocab_sizes, int) else vocab_sizes
            embeddings = {COMMENT: table(nc), TRANSLATION: table(nt)}
        cenc = EncoderParams.init(config.embed_dim, config.hidden_dim, rng, dtype)
        tenc = EncoderParams.init(config.embed_dim, config.hidden_dim, rng, dtype)
        return cls(embeddings, cenc, tenc)

    @property
    def comment_embedding(self) -> np.ndarray:
        return self.embeddings.get(SHARED, self.embeddings.get(COMMENT))

    @property
    def translation_embedding(self) -> np.ndarray:
        return self.embeddings.get(SHARED, self.embeddings.get(TRANSLATION))

    def parameters(self) -> dict[str, np.ndarray]:
        out = {f"embed.{k}": v for k, v in sorted(self.embeddings.items())}
        out.update({f"cenc.{k}": v for k, v in self.cenc.items()})
        out.update({f"tenc.{k}": v for k, v in self.tenc.items()})
        return out

    def astype(self, dtype) -> "Model":
        return Model({k: v.astype(dtype) for k, v in self.embeddings.items()},
                     self.cenc.astype(dtype), self.tenc.astype(dtype))

    def copy(self) -> "Model":
        return Model({k: v.copy() for k, v in self.embeddings.items()}, self.cenc.copy(), self.tenc.copy())

    def encode_comments(self, seqs: Sequence[IdSeq], max_len: int = 512, batch: int = 256) -> np.ndarray:
        return _encode_all(self.cenc, self.comment_embedding, seqs, max_len, batch)

    def encode_translations(self, seqs: Sequence[IdSeq], max_len: int = 512, batch: int = 256) -> np.ndarray:
        return _encode_all(self.tenc, self.translation_embedding, seqs, max_len, batch)


def _encode_all(p: EncoderParams, emb: np.ndarray, seqs, max_len: int, batch: int) -> np.ndarray:
    out = np.empty((len(seqs), p.hidden_dim), dtype=p.w_x.dtype)
    # group similar lengths to limit padding; results go back to input order
    order = sorted(range(len(seqs)), key=lambda i: (min(len(seqs[i]), max_len), i))
    for start in range(0, len(order), batch):
        rows = order[start:start + batch]
        ids, mask = pad_batch([seqs[i] for i in rows], max_len)
        out[rows] = encode(p, emb, ids, mask).embedding
    return out


@dataclass
class Moments:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_for(cls, params: dict[str, np.ndarray]) -> "Moments":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, 0)

    def copy(self) -> "Moments":
        return Moments({k: v.copy() for k, v in self.first.items()},
                       {k: v.copy() for k, v in self.second.items()}, self.step)


@dataclass
class TrainState:
    model: Model
    moments: Moments
    epoch: int = 0

    @classmethod
    def fresh(cls, config: TrainConfig, vocab_sizes) -> "TrainState":
        model = Model.init(config, vocab_sizes)
        return cls(model, Moments.zeros_for(model.parameters()), 0)

    def copy(self) -> "TrainState":
        return TrainState(self.model.copy(), self.moments.copy(), self.epoch)


def sample_negatives(pairs: Sequence[TrainingPair], seed: int, epoch: int = 0) -> list[Triplet]:
    """One triplet per pair, the negative comment drawn uniformly from the other pairs."""
    n = len(pairs)
    if n < 2:
        raise TooFewPairs(f"need at least 2 pairs to draw negatives, got {n}")
    rng = np.random.default_rng([seed, epoch, 7])
    out = []
    for i, pair in enumerate(pairs):
        j = int(rng.integers(n))
        while j == i:
            j = int(rng.integers(n))
        out.append(Triplet(pair.translation_ids, pair.comment_ids, pairs[j].comment_ids, i, j))
    return out


def ranking_loss(et, ecp, ecn, beta: float) -> float:
    """Hinge on the cosine gap: ``max(0, beta - cos(t, c+) + cos(t, c-))``."""
    return max(0.0, beta - cosine(et, ecp) + cosine(et, ecn))


def _cos_rows(a: np.ndarray, b: np.ndarray):
    """Row-wise cosine and its partial derivatives with respect to both inputs."""
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if (na == 0).any() or (nb == 0).any():
        raise ZeroVector("cosine similarity of a zero embedding")
    ua, ub = a / na, b / nb
    cos = (ua * ub).sum(axis=1, keepdims=True)
    da = (ub - cos * ua) / na
    db = (ua - cos * ub) / nb
    return cos[:, 0], da, db


@dataclass
class BatchResult:
    loss: float
    grads: dict[str, np.ndarray]
    per_triplet: np.ndarray


def batch_loss_and_grads(
    model: Model,
    triplets: Sequence[Triplet],
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    train: bool = True,
    need_grads: bool = True,
) -> BatchResult:
    """Mean triplet loss over a batch and its gradient with respect to every parameter."""
    dropout = config.dropout if train else 0.0
    t_ids, t_mask = pad_batch([tr.t for tr in triplets], config.max_len)
    c_ids, c_mask = pad_batch([tr.c_pos for tr in triplets] + [tr.c_neg for tr in triplets], config.max_len)

    t_res = encode(model.tenc, model.translation_embedding, t_ids, t_mask, dropout=dropout, rng=rng, train=train)
    c_res = encode(model.cenc, model.comment_embedding, c_ids, c_mask, dropout=dropout, rng=rng, train=train)

    B = len(triplets)
    et = t_res.embedding.astype(np.float64)
    ec = c_res.embedding.astype(np.float64)
    ecp, ecn = ec[:B], ec[B:]
    cos_p, dt_p, dcp = _cos_rows(et, ecp)
    cos_n, dt_n, dcn = _cos_rows(et, ecn)
    per = np.maximum(0.0, config.margin - cos_p + cos_n)
    loss = float(per.mean())
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite batch loss {loss}")
    if not need_grads:
        return BatchResult(loss, {}, per)

    active = (per > 0).astype(np.float64)[:, None] / B
    d_et = active * (dt_n - dt_p)
    d_ec = np.concatenate([-active * dcp, active * dcn])

    t_grads = encode_backward(model.tenc, t_res, d_et)
    c_grads = encode_backward(model.cenc, c_res, d_ec)

    grads: dict[str, np.ndarray] = {}
    if SHARED in model.embeddings:
        n = len(model.embeddings[SHARED])
        grads[f"embed.{SHARED}"] = t_grads.embedding_grad(n) + c_grads.embedding_grad(n)
    else:
        grads[f"embed.{COMMENT}"] = c_grads.embedding_grad(len(model.embeddings[COMMENT]))
        grads[f"embed.{TRANSLATION}"] = t_grads.embedding_grad(len(model.embeddings[TRANSLATION]))
    grads.update({f"cenc.{k}": v for k, v in c_grads.params.items()})
    grads.update({f"tenc.{k}": v for k, v in t_grads.params.items()})
    return BatchResult(loss, grads, per)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if not math.isfinite(total):
        raise NonFiniteLoss(f"non-finite gradient norm {total}")
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: Moments,
    config: TrainConfig,
) -> dict[str, np.ndarray]:
    """One AdamW update, in place.  The PAD row of every embedding table is never touched."""
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape or moments.first[name].shape != p.shape:
            raise ShapeMismatch(f"{name}: parameter {p.shape}, gradient {None if g is None else g.shape}")
    moments.step += 1
    t = moments.step
    lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m, v = moments.first[name], moments.second[name]
        if name.startswith("embed."):
            p, g, m, v = p[PAD_ID + 1:], g[PAD_ID + 1:], m[PAD_ID + 1:], v[PAD_ID + 1:]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p *= 1.0 - lr * config.weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params


def train_epoch(state: TrainState, pairs: Sequence[TrainingPair], config: TrainConfig):
    """One pass over shuffled mini-batches; returns ``(state, mean loss)``."""
    if not pairs:
        raise ValueError("no training pairs")
    epoch = state.epoch
    triplets = sample_negatives(pairs, config.seed, epoch)
    rng = np.random.default_rng([config.seed, epoch])
    order = rng.permutation(len(triplets))
    params = state.model.parameters()
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = [triplets[i] for i in order[start:start + config.batch_size]]
        res = batch_loss_and_grads(state.model, batch, config, rng, train=True)
        if not all(np.isfinite(g).all() for g in res.grads.values()):
            raise NonFiniteLoss(f"epoch {epoch}, batch at {start}: non-finite gradient")
        clip_by_global_norm(res.grads, config.clip_norm)
        optimizer_step(params, res.grads, state.moments, config)
        total += res.loss * len(batch)
    state.epoch = epoch + 1
    return state, total / len(triplets)


def validation_loss(model: Model, pairs: Sequence[TrainingPair], config: TrainConfig) -> float:
    """Mean loss on a fixed set of validation triplets, without dropout."""
    triplets = sample_negatives(pairs, config.seed, epoch=VALIDATION_EPOCH)
    total = 0.0
    for start in range(0, len(triplets), config.batch_size):
        batch = triplets[start:start + config.batch_size]
        total += batch_loss_and_grads(model, batch, config, train=False, need_grads=False).loss * len(batch)
    return total / len(triplets)


def split_validation(pairs: Sequence[TrainingPair], fraction: float, seed: int):
    """Deterministic ``(train, validation)`` split; validation is empty if it would hold < 2 pairs."""
    n_val = int(round(len(pairs) * fraction))
    if n_val < 2 or len(pairs) - n_val < 2:
        return list(pairs), []
    perm = np.random.default_rng([seed, 31]).permutation(len(pairs))
    val_idx = set(perm[:n_val].tolist())
    train = [p for i, p in enumerate(pairs) if i not in val_idx]
    val = [p for i, p in enumerate(pairs) if i in val_idx]
    return train, val


@dataclass
class TrainResult:
    state: TrainState
    history: list[tuple[int, float, Optional[float]]] = field(default_factory=list)
    best_epoch: int = 0


def format_log_line(epoch: int, train_loss: float, val_loss: Optional[float]) -> str:
    val = "nan" if val_loss is None else f"{val_loss:.6f}"
    return f"{epoch}\t{train_loss:.6f}\t{val}"


def train(
    pairs: Sequence[TrainingPair],
    config: TrainConfig,
    vocab_sizes,
    log: Optional[Callable[[str], None]] = None,
    state: Optional[TrainState] = None,
) -> TrainResult:
    """Train for ``config.epochs`` epochs and keep the state with the lowest validation loss.

    Without a validation split (tiny corpora) the final state is kept.
    """
    train_pairs, val_pairs = split_validation(pairs, config.val_fraction, config.seed)
    if len(train_pairs) < 2:
        raise TooFewPairs("need at least 2 training pairs")
    state = state or TrainState.fresh(config, vocab_sizes)
    result = TrainResult(state)
    best_val = math.inf
    best_state = None
    while state.epoch < config.epochs:
        state, loss = train_epoch(state, train_pairs, config)
        val = validation_loss(state.model, val_pairs, config) if val_pairs else None
        result.history.append((state.epoch, loss, val))
        if log is not None:
            log(format_log_line(state.epoch, loss, val))
        if val is not None and val < best_val:
            best_val = val
            best_state = state.copy()
            result.best_epoch = state.epoch
    if best_state is None:
        result.best_epoch = state.epoch
        best_state = state
    result.state = best_state
    return result


def config_from_dict(d: dict) -> TrainConfig:
    known = {k: v for k, v in d.items() if k in TrainConfig.__dataclass_fields__}
    return TrainConfig(**known)


def retrieval_franks(model: Model, pairs: Sequence[TrainingPair], max_len: int = 512) -> list[int]:
    """Rank of each pair's own translation when its comment queries all translations in ``pairs``."""
    c = model.encode_comments([p.comment_ids for p in pairs], max_len)
    t = model.encode_translations([p.translation_ids for p in pairs], max_len)
    return distractor_franks(c, t)


__all__ = [
    "TrainConfig", "TrainingPair", "Triplet", "Model", "Moments", "TrainState", "TrainResult",
    "NonFiniteLoss", "ShapeMismatch", "sample_negatives", "ranking_loss", "batch_loss_and_grads",
    "clip_by_global_norm", "optimizer_step", "train_epoch", "validation_loss", "split_validation",
    "train", "format_log_line", "config_from_dict", "retrieval_franks",
]
