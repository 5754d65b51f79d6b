"""Central finite-difference checks of the hand-written encoder gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intentmem.encoder import EncoderConfig, EncoderParams, Minibatch, init_params, loss_and_grad

TERMS = {"con": (1.0, 0.0, 0.0), "pred": (0.0, 1.0, 0.0), "rec": (0.0, 0.0, 1.0), "total": None}
SMALL = EncoderConfig(raw_dim=12, hidden_dim=7, dim=6, pred_hidden=5, dropout=0.0)


@dataclass
class GradReport:
    term: str
    point: int
    coords: int
    max_rel: float


def random_point(seed: int, cfg: EncoderConfig = SMALL, n: int = 5) -> tuple[Minibatch, EncoderParams]:
    """A random batch and a perturbed parameter point (non-trivial gamma, beta, biases)."""
    rng = np.random.default_rng(seed)
    params = init_params(EncoderConfig(**{**SMALL.__dict__, "seed": seed}) if cfg is SMALL else cfg)
    for k, v in params.tensors.items():
        v += rng.normal(0.0, 0.3, size=v.shape)
    batch = Minibatch({s: rng.normal(size=(n, cfg.raw_dim)) for s in ("E", "M", "D")})
    return batch, params


def term_value(batch: Minibatch, params: EncoderParams, term: str) -> float:
    b = loss_and_grad(batch, params, need_grad=False)[0]
    return {"con": b.con, "pred": b.pred, "rec": b.rec, "total": b.total}[term]


def check_term(batch: Minibatch, params: EncoderParams, term: str, n_coords: int = 120, h: float = 1e-3,
               seed: int = 0, point: int = 0) -> GradReport:
    _, grads = loss_and_grad(batch, params, weights=TERMS[term])
    rng = np.random.default_rng(seed)
    # sample only tensors the term depends on; the others carry exact zeros
    names = sorted(k for k, g in grads.items() if np.any(g != 0.0))
    worst = 0.0
    for _ in range(n_coords):
        name = names[int(rng.integers(len(names)))]
        idx = tuple(int(rng.integers(d)) for d in params.tensors[name].shape)
        t = params.tensors[name]
        old = t[idx]
        f = {}
        for k in (-2, -1, 1, 2):
            t[idx] = old + k * h
            f[k] = term_value(batch, params, term)
        t[idx] = old
        # fourth-order central stencil keeps roundoff below the tolerance for small gradients
        numeric = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
        analytic = grads[name][idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return GradReport(term, point, n_coords, worst)


def check_all(points=(0, 1, 2), n_coords: int = 120) -> list[GradReport]:
    out = []
    for p in points:
        batch, params = random_point(100 + p)
        for term in TERMS:
            out.append(check_term(batch, params, term, n_coords, seed=p, point=p))
    return out
