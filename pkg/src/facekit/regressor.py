"""Linear shape/expression decoders from a voice embedding, trained with Adam.

Training runs in normalized parameter space; meshes are synthesized after
denormalizing with the model's statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import DimensionError, NormalizationStateError, NumericalError, ValidationError
from .model import ParamVector

EMBEDDING_DIM = 64


@dataclass(frozen=True, eq=False)
class DecoderWeights:
    shape_head: np.ndarray
    shape_bias: np.ndarray
    expr_head: np.ndarray
    expr_bias: np.ndarray

    def __post_init__(self):
        arrays = {f.name: np.asarray(getattr(self, f.name), dtype=np.float64) for f in fields(self)}
        ps, d = arrays["shape_head"].shape
        pe, d2 = arrays["expr_head"].shape
        if d != d2 or arrays["shape_bias"].shape != (ps,) or arrays["expr_bias"].shape != (pe,):
            raise DimensionError("decoder head/bias shapes are inconsistent")
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)

    @property
    def embedding_dim(self) -> int:
        return self.shape_head.shape[1]

    @property
    def n_shape(self) -> int:
        return self.shape_head.shape[0]

    def arrays(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn, *others) -> DecoderWeights:
        return DecoderWeights(**{name: fn(arr, *(o.arrays()[name] for o in others))
                                 for name, arr in self.arrays().items()})

    @classmethod
    def zeros(cls, n_shape: int, n_expr: int, dim: int = EMBEDDING_DIM) -> DecoderWeights:
        return cls(np.zeros((n_shape, dim)), np.zeros(n_shape), np.zeros((n_expr, dim)), np.zeros(n_expr))

    @classmethod
    def init(cls, n_shape: int, n_expr: int, seed: int, dim: int = EMBEDDING_DIM) -> DecoderWeights:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7])))
        sigma = 1.0 / np.sqrt(dim)
        return cls(rng.standard_normal((n_shape, dim)) * sigma, np.zeros(n_shape),
                   rng.standard_normal((n_expr, dim)) * sigma, np.zeros(n_expr))


@dataclass(frozen=True, eq=False)
class AdamState:
    step: int
    m: DecoderWeights
    v: DecoderWeights
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, like: DecoderWeights, lr: float = 2e-4) -> AdamState:
        zero = like.map(np.zeros_like)
        return cls(0, zero, zero, lr)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch_size: int = 32
    iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ValidationError("lr must be positive")
        if self.batch_size < 1 or self.iters < 0:
            raise ValidationError("batch_size must be >= 1 and iters >= 0")


def forward(embedding, w: DecoderWeights) -> ParamVector:
    v = np.asarray(embedding, dtype=np.float64).ravel()
    if v.size != w.embedding_dim:
        raise DimensionError(f"embedding has {v.size} entries, decoder expects {w.embedding_dim}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("embedding must be finite")
    return ParamVector(w.shape_head @ v + w.shape_bias, w.expr_head @ v + w.expr_bias, normalized=True)


def forward_batch(embeddings: np.ndarray, w: DecoderWeights) -> np.ndarray:
    """Stacked normalized parameters ``(S, P_s + P_e)`` for a ``(S, D)`` batch."""
    return np.hstack([embeddings @ w.shape_head.T + w.shape_bias, embeddings @ w.expr_head.T + w.expr_bias])


def supervised_loss(pred: ParamVector, gt: ParamVector) -> tuple[float, ParamVector]:
    """Squared error over shape and expression coefficients, with gradient wrt ``pred``."""
    if pred.normalized != gt.normalized:
        raise NormalizationStateError("prediction and ground truth differ in normalization state")
    if pred.shape.size != gt.shape.size or pred.expr.size != gt.expr.size:
        raise DimensionError("prediction and ground truth dimensions differ")
    ds, de = pred.shape - gt.shape, pred.expr - gt.expr
    return float(ds @ ds + de @ de), ParamVector(2 * ds, 2 * de, pred.normalized)


def batch_loss_and_grads(emb: np.ndarray, targets: np.ndarray, w: DecoderWeights) -> tuple[float, DecoderWeights]:
    """Mean per-sample squared error over a batch and its gradient wrt the weights."""
    ps = w.n_shape
    diff = forward_batch(emb, w) - targets
    n = emb.shape[0]
    loss = float(np.sum(diff * diff) / n)
    g = 2.0 * diff / n
    gs, ge = g[:, :ps], g[:, ps:]
    grads = DecoderWeights(gs.T @ emb, gs.sum(axis=0), ge.T @ emb, ge.sum(axis=0))
    return loss, grads


def adam_step(state: AdamState, w: DecoderWeights, grads: DecoderWeights) -> tuple[AdamState, DecoderWeights]:
    if not all(np.all(np.isfinite(a)) for a in grads.arrays().values()):
        raise NumericalError("non-finite gradient")
    b1, b2 = state.beta1, state.beta2
    step = state.step + 1
    m = state.m.map(lambda m, g: b1 * m + (1 - b1) * g, grads)
    v = state.v.map(lambda v, g: b2 * v + (1 - b2) * g * g, grads)
    c1, c2 = 1 - b1**step, 1 - b2**step
    new_w = w.map(lambda p, m, v: p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps), m, v)
    return replace(state, step=step, m=m, v=v), new_w


def _unpack(dataset):
    emb = np.asarray(dataset.embeddings, dtype=np.float64)
    targets = np.asarray(dataset.params, dtype=np.float64)
    if emb.shape[0] == 0:
        raise ValidationError("dataset is empty")
    if emb.shape[0] != targets.shape[0]:
        raise DimensionError("embeddings and params disagree on sample count")
    return emb, targets


def train(dataset, cfg: TrainConfig | None = None, init: DecoderWeights | None = None):
    """Mini-batch Adam on the squared parameter loss.

    ``dataset`` needs ``embeddings (S, D)``, normalized ``params (S, P)`` and
    ``n_shape``. Batches are drawn from a seeded per-epoch shuffle. Returns the
    final weights and the per-iteration mean batch loss.
    """
    cfg = cfg or TrainConfig()
    emb, targets = _unpack(dataset)
    ps = int(dataset.n_shape)
    w = init or DecoderWeights.init(ps, targets.shape[1] - ps, cfg.seed, emb.shape[1])
    state = AdamState.fresh(w, cfg.lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(cfg.seed), 8])))
    bs = min(cfg.batch_size, emb.shape[0])
    order = rng.permutation(emb.shape[0])
    pos = 0
    history = []
    for _ in range(cfg.iters):
        if pos + bs > order.size:
            order, pos = rng.permutation(emb.shape[0]), 0
        idx = order[pos:pos + bs]
        pos += bs
        loss, grads = batch_loss_and_grads(emb[idx], targets[idx], w)
        history.append(loss)
        state, w = adam_step(state, w, grads)
    return w, np.asarray(history)


def dataset_loss(dataset, w: DecoderWeights) -> float:
    """Mean per-sample squared parameter error over the whole dataset."""
    emb, targets = _unpack(dataset)
    diff = forward_batch(emb, w) - targets
    return float(np.sum(diff * diff) / emb.shape[0])
