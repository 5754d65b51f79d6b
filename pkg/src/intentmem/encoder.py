"""Multi-view intent encoder.

Each view slot (environment ``E``, middle ``M`` = action or keyword, description
``D``) has its own projection head ``D_raw -> H -> d`` (GELU, dropout, then
LayerNorm). The shared embedding is the fixed convex fusion
``0.4 z_E + 0.3 z_M + 0.3 z_D``.

Training minimises ``L_con + lambda_pred * L_pred + lambda_rec * L_rec`` with
gradients computed by hand (no autodiff framework), so every term also exposes
its analytic gradient for finite-difference checking.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import erf, logsumexp

from .embedding import Provider, ProviderConfig, embed_units, embed_views
from .errors import CorruptFileError, DivergenceError, EncoderError
from .persist import decode_array, encode_array, read_document, write_document
from .trace_model import IntentUnit

log = logging.getLogger(__name__)

SLOTS = ("E", "M", "D")
VIEW_TO_SLOT = {"E": "E", "A": "M", "K": "M", "M": "M", "D": "D"}

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class EncoderConfig:
    raw_dim: int = 3072
    hidden_dim: int = 256
    dim: int = 256
    pred_hidden: int = 128
    lambda_pred: float = 0.1
    lambda_rec: float = 0.05
    temperature: float = 0.1
    learning_rate: float = 1e-3
    dropout: float = 0.05
    fusion: tuple[float, float, float] = (0.4, 0.3, 0.3)
    seed: int = 0
    optimizer: str = "sgd"
    predictor_activation: str = "gelu"
    # "symmetric": G_qp maps z_q back to z_p; "as_printed": both maps read z_p
    pred_mode: str = "symmetric"
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        if abs(sum(self.fusion) - 1.0) > 1e-12:
            raise EncoderError(f"fusion weights must sum to 1, got {self.fusion}")
        if self.temperature <= 0:
            raise EncoderError("temperature must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError("dropout must be in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise EncoderError(f"unknown optimizer {self.optimizer!r}")
        if self.predictor_activation not in ("gelu", "identity"):
            raise EncoderError(f"unknown predictor activation {self.predictor_activation!r}")
        if self.pred_mode not in ("symmetric", "as_printed"):
            raise EncoderError(f"unknown pred_mode {self.pred_mode!r}")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "EncoderConfig":
        doc = dict(doc)
        if "fusion" in doc:
            doc["fusion"] = tuple(doc["fusion"])
        return cls(**doc)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["fusion"] = list(self.fusion)
        return d


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, list(self.loss_history))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def fusion(self) -> dict[str, float]:
        return dict(zip(SLOTS, self.config.fusion))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())


def ordered_pairs(slots: Sequence[str]) -> list[tuple[str, str]]:
    return list(itertools.permutations(slots, 2))


def init_params(cfg: EncoderConfig) -> EncoderParams:
    rng = np.random.default_rng([cfg.seed, 0])

    def xavier(fan_in: int, fan_out: int) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))

    t: dict[str, np.ndarray] = {}
    for s in SLOTS:
        t[f"head.{s}.W1"] = xavier(cfg.raw_dim, cfg.hidden_dim)
        t[f"head.{s}.b1"] = np.zeros(cfg.hidden_dim)
        t[f"head.{s}.W2"] = xavier(cfg.hidden_dim, cfg.dim)
        t[f"head.{s}.b2"] = np.zeros(cfg.dim)
        t[f"head.{s}.gamma"] = np.ones(cfg.dim)
        t[f"head.{s}.beta"] = np.zeros(cfg.dim)
    for p, q in ordered_pairs(SLOTS):
        t[f"pred.{p}{q}.W1"] = xavier(cfg.dim, cfg.pred_hidden)
        t[f"pred.{p}{q}.b1"] = np.zeros(cfg.pred_hidden)
        t[f"pred.{p}{q}.W2"] = xavier(cfg.pred_hidden, cfg.dim)
        t[f"pred.{p}{q}.b2"] = np.zeros(cfg.dim)
    for s in SLOTS:
        t[f"dec.{s}.W"] = xavier(cfg.dim, cfg.raw_dim)
        t[f"dec.{s}.b"] = np.zeros(cfg.raw_dim)
    return EncoderParams(cfg, t)


# ---------------------------------------------------------------------------
# primitives


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def _layernorm(o: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    mu = o.mean(axis=-1, keepdims=True)
    var = o.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (o - mu) * inv
    return gamma * xhat + beta, (xhat, inv)


def _layernorm_back(dy: np.ndarray, gamma: np.ndarray, cache):
    xhat, inv = cache
    dxhat = dy * gamma
    do = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return do, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def _normalize_rows(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms, norms


def _normalize_back(u: np.ndarray, norms: np.ndarray, du: np.ndarray) -> np.ndarray:
    return (du - u * (u * du).sum(axis=1, keepdims=True)) / norms


# ---------------------------------------------------------------------------
# projection heads


def _head_forward(x: np.ndarray, slot: str, params: EncoderParams, train: bool, rng: np.random.Generator | None):
    cfg = params.config
    t = params.tensors
    if x.shape[-1] != cfg.raw_dim:
        raise EncoderError(f"view {slot}: input dimension {x.shape[-1]} != configured {cfg.raw_dim}")
    h = x @ t[f"head.{slot}.W1"] + t[f"head.{slot}.b1"]
    a = gelu(h)
    mask = None
    if train and cfg.dropout > 0.0:
        if rng is None:
            raise EncoderError("train mode with dropout needs an rng")
        mask = (rng.random(a.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
        a = a * mask
    o = a @ t[f"head.{slot}.W2"] + t[f"head.{slot}.b2"]
    z, ln_cache = _layernorm(o, t[f"head.{slot}.gamma"], t[f"head.{slot}.beta"], cfg.ln_eps)
    return z, (x, h, a, mask, ln_cache)


def _head_backward(dz: np.ndarray, slot: str, params: EncoderParams, cache, grads: dict[str, np.ndarray]) -> None:
    t = params.tensors
    x, h, a, mask, ln_cache = cache
    do, dgamma, dbeta = _layernorm_back(dz, t[f"head.{slot}.gamma"], ln_cache)
    grads[f"head.{slot}.gamma"] += dgamma
    grads[f"head.{slot}.beta"] += dbeta
    grads[f"head.{slot}.W2"] += a.T @ do
    grads[f"head.{slot}.b2"] += do.sum(axis=0)
    da = do @ t[f"head.{slot}.W2"].T
    if mask is not None:
        da = da * mask
    dh = da * gelu_grad(h)
    grads[f"head.{slot}.W1"] += x.T @ dh
    grads[f"head.{slot}.b1"] += dh.sum(axis=0)


def project(x: np.ndarray, view: str, params: EncoderParams, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Project raw view embedding(s) into the shared space."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z, _ = _head_forward(np.atleast_2d(x), VIEW_TO_SLOT[view], params, train_mode, rng)
    return z[0] if single else z


def fuse(per_view: Mapping[str, np.ndarray], params: EncoderParams | Sequence[float] | None = None) -> np.ndarray:
    """Weighted fusion of the three slot projections (middle slot = A or K)."""
    weights = params.config.fusion if isinstance(params, EncoderParams) else (params or (0.4, 0.3, 0.3))
    by_slot: dict[str, np.ndarray] = {}
    for view, vec in per_view.items():
        slot = VIEW_TO_SLOT.get(view)
        if slot is None or slot in by_slot:
            raise EncoderError(f"unexpected or duplicate view {view!r}")
        by_slot[slot] = np.asarray(vec, dtype=float)
    missing = [s for s in SLOTS if s not in by_slot]
    if missing:
        raise EncoderError(f"missing views for slots {missing}")
    return sum(w * by_slot[s] for w, s in zip(weights, SLOTS))


# ---------------------------------------------------------------------------
# minibatches and loss terms


@dataclass
class Minibatch:
    """Raw view embeddings of N units, one (N, D_raw) array per slot."""

    views: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if len(self.views) < 2:
            raise EncoderError("a minibatch needs at least two views")
        ns = {v.shape[0] for v in self.views.values()}
        if len(ns) != 1:
            raise EncoderError("all views must hold the same number of units")
        if self.n < 2:
            raise EncoderError("contrastive terms need N >= 2 units per minibatch")

    @property
    def n(self) -> int:
        return next(iter(self.views.values())).shape[0]

    @property
    def slots(self) -> list[str]:
        return [s for s in SLOTS if s in self.views]

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return ordered_pairs(self.slots)

    @classmethod
    def from_items(cls, items: Sequence[Mapping[str, np.ndarray]]) -> "Minibatch":
        stacked: dict[str, list[np.ndarray]] = {}
        for item in items:
            for view, vec in item.items():
                stacked.setdefault(VIEW_TO_SLOT[view], []).append(np.asarray(vec, dtype=float))
        return cls({s: np.stack(v) for s, v in stacked.items()})

    def take(self, idx: np.ndarray) -> "Minibatch":
        return Minibatch({s: v[idx] for s, v in self.views.items()})


def contrastive_loss(zs: Mapping[str, np.ndarray], tau: float, pairs: Sequence[tuple[str, str]] | None = None):
    """InfoNCE over ordered view pairs; returns ``(value, dL/dz per slot)``.

    The denominator sums over the other units ``j != i`` in view ``q``.
    """
    pairs = list(pairs) if pairs is not None else ordered_pairs([s for s in SLOTS if s in zs])
    n = next(iter(zs.values())).shape[0]
    if n < 2:
        raise EncoderError("contrastive loss needs N >= 2")
    normed = {s: _normalize_rows(z) for s, z in zs.items()}
    du = {s: np.zeros_like(z) for s, z in zs.items()}
    total = 0.0
    scale = 1.0 / (n * len(pairs))
    offdiag = ~np.eye(n, dtype=bool)
    for k, (p, q) in enumerate(pairs):
        up, uq = normed[p][0], normed[q][0]
        s = up @ uq.T / tau
        masked = np.where(offdiag, s, -np.inf)
        lse = logsumexp(masked, axis=1)
        terms = lse - np.diag(s)
        value = terms.mean()
        if not np.isfinite(value):
            raise EncoderError(f"non-finite contrastive term at pair index {k} ({p}->{q})")
        total += value / len(pairs)
        soft = np.where(offdiag, np.exp(masked - lse[:, None]), 0.0)
        ds = (soft - np.eye(n)) * scale
        du[p] += ds @ uq / tau
        du[q] += ds.T @ up / tau
    dz = {s: _normalize_back(normed[s][0], normed[s][1], du[s]) for s in zs}
    return float(total), dz


def _predictor_forward(z: np.ndarray, name: str, params: EncoderParams):
    t = params.tensors
    u = z @ t[f"pred.{name}.W1"] + t[f"pred.{name}.b1"]
    a = gelu(u) if params.config.predictor_activation == "gelu" else u
    return a @ t[f"pred.{name}.W2"] + t[f"pred.{name}.b2"], (z, u, a)


def _predictor_backward(dy: np.ndarray, name: str, params: EncoderParams, cache, grads) -> np.ndarray:
    t = params.tensors
    z, u, a = cache
    grads[f"pred.{name}.W2"] += a.T @ dy
    grads[f"pred.{name}.b2"] += dy.sum(axis=0)
    da = dy @ t[f"pred.{name}.W2"].T
    du = da * gelu_grad(u) if params.config.predictor_activation == "gelu" else da
    grads[f"pred.{name}.W1"] += z.T @ du
    grads[f"pred.{name}.b1"] += du.sum(axis=0)
    return du @ t[f"pred.{name}.W1"].T


def prediction_loss(zs: Mapping[str, np.ndarray], params: EncoderParams,
                    pairs: Sequence[tuple[str, str]] | None = None, grads: dict[str, np.ndarray] | None = None):
    """Dual cross-view prediction; returns ``(value, dL/dz per slot)``.

    Predictor gradients are accumulated into ``grads`` when given.
    """
    pairs = list(pairs) if pairs is not None else ordered_pairs([s for s in SLOTS if s in zs])
    n = next(iter(zs.values())).shape[0]
    if n < 1:
        raise EncoderError("prediction loss needs N >= 1")
    g = grads if grads is not None else _zero_grads(params, prefix="pred.")
    dz = {s: np.zeros_like(z) for s, z in zs.items()}
    c = 1.0 / (2 * n * len(pairs))
    total = 0.0
    as_printed = params.config.pred_mode == "as_printed"
    for k, (p, q) in enumerate(pairs):
        y1, cache1 = _predictor_forward(zs[p], f"{p}{q}", params)
        r1 = y1 - zs[q]
        src2, tgt2 = (p, q) if as_printed else (q, p)
        y2, cache2 = _predictor_forward(zs[src2], f"{q}{p}", params)
        r2 = y2 - zs[tgt2]
        value = c * (np.sum(r1 * r1) + np.sum(r2 * r2))
        if not np.isfinite(value):
            raise EncoderError(f"non-finite prediction term at pair index {k} ({p}->{q})")
        total += value
        dz[p] += _predictor_backward(2 * c * r1, f"{p}{q}", params, cache1, g)
        dz[q] -= 2 * c * r1
        dz[src2] += _predictor_backward(2 * c * r2, f"{q}{p}", params, cache2, g)
        dz[tgt2] -= 2 * c * r2
    return float(total), dz


def reconstruction_loss(zs: Mapping[str, np.ndarray], xs: Mapping[str, np.ndarray], params: EncoderParams,
                        grads: dict[str, np.ndarray] | None = None):
    """Mean squared reconstruction of raw views from their projections."""
    t = params.tensors
    g = grads if grads is not None else _zero_grads(params, prefix="dec.")
    n = next(iter(zs.values())).shape[0]
    c = 1.0 / (len(zs) * n)
    total = 0.0
    dz = {}
    for s, z in zs.items():
        y = z @ t[f"dec.{s}.W"] + t[f"dec.{s}.b"]
        r = y - xs[s]
        value = c * np.sum(r * r)
        if not np.isfinite(value):
            raise EncoderError(f"non-finite reconstruction term for view {s}")
        total += value
        dy = 2 * c * r
        g[f"dec.{s}.W"] += z.T @ dy
        g[f"dec.{s}.b"] += dy.sum(axis=0)
        dz[s] = dy @ t[f"dec.{s}.W"].T
    return float(total), dz


def _zero_grads(params: EncoderParams, prefix: str = "") -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items() if k.startswith(prefix)}


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    con: float
    pred: float
    rec: float


def loss_and_grad(batch: Minibatch, params: EncoderParams, train: bool = False,
                  rng: np.random.Generator | None = None, need_grad: bool = True,
                  weights: tuple[float, float, float] | None = None):
    """Forward all heads and the three loss terms; backprop when asked.

    ``weights`` overrides the ``(con, pred, rec)`` coefficients of the
    differentiated objective, e.g. ``(0, 1, 0)`` for the gradient of L_pred
    alone. The reported ``total`` always uses the configured coefficients.
    """
    cfg = params.config
    w_con, w_pred, w_rec = weights if weights is not None else (1.0, cfg.lambda_pred, cfg.lambda_rec)
    zs, caches = {}, {}
    for s in batch.slots:
        zs[s], caches[s] = _head_forward(batch.views[s], s, params, train, rng)
    grads = _zero_grads(params)
    con, dz_con = contrastive_loss(zs, cfg.temperature, batch.pairs)
    pred, dz_pred = prediction_loss(zs, params, batch.pairs, grads)
    rec, dz_rec = reconstruction_loss(zs, batch.views, params, grads)
    total = con + cfg.lambda_pred * pred + cfg.lambda_rec * rec
    breakdown = LossBreakdown(total, con, pred, rec)
    if not need_grad:
        return breakdown, None
    for k in grads:
        if k.startswith("pred."):
            grads[k] *= w_pred
        elif k.startswith("dec."):
            grads[k] *= w_rec
    for s in batch.slots:
        dz = w_con * dz_con[s] + w_pred * dz_pred[s] + w_rec * dz_rec[s]
        _head_backward(dz, s, params, caches[s], grads)
    return breakdown, grads


def loss_con(batch: Minibatch, params: EncoderParams) -> float:
    return loss_and_grad(batch, params, need_grad=False)[0].con


def loss_pred(batch: Minibatch, params: EncoderParams) -> float:
    return loss_and_grad(batch, params, need_grad=False)[0].pred


def loss_rec(batch: Minibatch, params: EncoderParams) -> float:
    return loss_and_grad(batch, params, need_grad=False)[0].rec


def total_loss(batch: Minibatch, params: EncoderParams) -> float:
    return loss_and_grad(batch, params, need_grad=False)[0].total


def averaged_predictor(params: EncoderParams, p: str, q: str, z: np.ndarray) -> np.ndarray:
    """Diagnostic symmetric predictor ``(G_pq(z) + G_qp(z)) / 2``; unused in training."""
    return 0.5 * (_predictor_forward(z, f"{p}{q}", params)[0] + _predictor_forward(z, f"{q}{p}", params)[0])


# ---------------------------------------------------------------------------
# training


class _Adam:
    def __init__(self, tensors: Mapping[str, np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1 ** self.t)
            vhat = self.v[k] / (1 - self.b2 ** self.t)
            tensors[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train(corpus: Minibatch | Sequence[Mapping[str, np.ndarray]], params: EncoderParams, epochs: int,
          batch_size: int = 32) -> EncoderParams:
    """Minibatch gradient descent on the total loss; returns updated copy.

    Shuffling and dropout draw from an rng seeded by ``config.seed`` so runs are
    reproducible. The mean minibatch loss of every epoch is appended to
    ``loss_history``.
    """
    data = corpus if isinstance(corpus, Minibatch) else Minibatch.from_items(corpus)
    if not 2 <= batch_size <= data.n:
        raise EncoderError(f"need 2 <= batch_size ({batch_size}) <= corpus size ({data.n})")
    out = params.copy()
    if epochs <= 0:
        return out
    cfg = out.config
    rng = np.random.default_rng([cfg.seed, 1])
    adam = _Adam(out.tensors, cfg.learning_rate) if cfg.optimizer == "adam" else None
    for epoch in range(epochs):
        losses = []
        for idx in _batches(rng.permutation(data.n), batch_size):
            try:
                breakdown, grads = loss_and_grad(data.take(idx), out, train=True, rng=rng)
            except EncoderError as exc:
                raise DivergenceError(epoch, float("nan")) from exc
            if not np.isfinite(breakdown.total):
                raise DivergenceError(epoch, breakdown.total)
            if adam is not None:
                adam.step(out.tensors, grads)
            else:
                for k, g in grads.items():
                    out.tensors[k] -= cfg.learning_rate * g
            losses.append(breakdown.total)
        out.loss_history.append(float(np.mean(losses)))
        if not out.all_finite():
            raise DivergenceError(epoch, float("nan"))
        log.debug("epoch %d loss %.6f", epoch, out.loss_history[-1])
    return out


# ---------------------------------------------------------------------------
# encoding units


@dataclass(frozen=True)
class SharedEmbedding:
    z: np.ndarray
    per_view: Mapping[str, np.ndarray]


class UnitEncoder:
    """Turns intent units into shared embeddings.

    With ``params=None`` the learned representation is bypassed: ``per_view``
    holds the raw provider vectors and ``z`` is their plain mean.
    """

    def __init__(self, provider: Provider, params: EncoderParams | None = None):
        self.provider = provider
        self.params = params

    @property
    def learned(self) -> bool:
        return self.params is not None

    @property
    def dim(self) -> int:
        return self.params.config.dim if self.params is not None else self.provider.dimension

    def _from_raw(self, raw: Mapping[str, np.ndarray]) -> SharedEmbedding:
        if self.params is None:
            per_view = {v: np.asarray(x, dtype=float) for v, x in raw.items()}
            return SharedEmbedding(np.mean(list(per_view.values()), axis=0), per_view)
        per_view = {v: project(x, v, self.params) for v, x in raw.items()}
        return SharedEmbedding(fuse(per_view, self.params), per_view)

    def encode(self, unit: IntentUnit) -> SharedEmbedding:
        raw = {v: e.vector for v, e in embed_views(unit, self.provider).items()}
        return self._from_raw(raw)

    def encode_many(self, units: Sequence[IntentUnit]) -> list[SharedEmbedding]:
        raws = embed_units(units, self.provider)
        if self.params is None or not units:
            return [self._from_raw(r) for r in raws]
        # batch each slot through its head in one matmul
        out_views: list[dict[str, np.ndarray]] = [{} for _ in units]
        for view in ("E", "A", "K", "D"):
            idx = [i for i, r in enumerate(raws) if view in r]
            if not idx:
                continue
            z = project(np.stack([raws[i][view] for i in idx]), view, self.params)
            for row, i in zip(z, idx):
                out_views[i][view] = row
        return [SharedEmbedding(fuse(pv, self.params), pv) for pv in out_views]


def encode_unit(unit: IntentUnit, params: EncoderParams | None, provider: Provider | ProviderConfig) -> SharedEmbedding:
    from .embedding import get_provider

    prov = get_provider(provider) if isinstance(provider, ProviderConfig) else provider
    return UnitEncoder(prov, params).encode(unit)


def corpus_items(units: Sequence[IntentUnit], provider: Provider) -> list[dict[str, np.ndarray]]:
    return embed_units(units, provider)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: EncoderParams, path: str | Path) -> None:
    write_document(path, "encoder", {
        "config": params.config.to_dict(),
        "tensors": {k: encode_array(v) for k, v in sorted(params.tensors.items())},
        "loss_history": [float(x) for x in params.loss_history],
    })


def load_checkpoint(path: str | Path) -> EncoderParams:
    doc = read_document(path, "encoder")
    try:
        cfg = EncoderConfig.from_dict(doc["config"])
        tensors = {k: decode_array(v) for k, v in doc["tensors"].items()}
        history = [float(x) for x in doc.get("loss_history", [])]
    except (KeyError, TypeError, EncoderError) as exc:
        raise CorruptFileError(f"{path}: bad encoder checkpoint ({exc})") from exc
    expected = set(init_params(replace(cfg, raw_dim=8, hidden_dim=2, dim=2, pred_hidden=2)).tensors)
    if set(tensors) != expected:
        raise CorruptFileError(f"{path}: checkpoint tensors do not match the encoder layout")
    params = EncoderParams(cfg, tensors, history)
    if not params.all_finite():
        raise CorruptFileError(f"{path}: checkpoint holds non-finite values")
    return params
