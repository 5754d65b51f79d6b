"""Loop-based reference evaluation of the three encoder losses, written from the definitions."""

from __future__ import annotations

import math

import numpy as np

SLOTS = ("E", "M", "D")


def _gelu(x):
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def head(x, t, s, eps):
    h = [_gelu(v) for v in (np.asarray(x) @ t[f"head.{s}.W1"] + t[f"head.{s}.b1"])]
    o = np.asarray(h) @ t[f"head.{s}.W2"] + t[f"head.{s}.b2"]
    mu = sum(o) / len(o)
    var = sum((v - mu) ** 2 for v in o) / len(o)
    return np.array([t[f"head.{s}.gamma"][k] * (o[k] - mu) / math.sqrt(var + eps) + t[f"head.{s}.beta"][k]
                     for k in range(len(o))])


def predictor(z, t, name, gelu=True):
    u = z @ t[f"pred.{name}.W1"] + t[f"pred.{name}.b1"]
    a = np.array([_gelu(v) for v in u]) if gelu else u
    return a @ t[f"pred.{name}.W2"] + t[f"pred.{name}.b2"]


def losses(views, params):
    cfg, t = params.config, params.tensors
    n = len(views["E"])
    z = {s: [head(views[s][i], t, s, cfg.ln_eps) for i in range(n)] for s in SLOTS}
    pairs = [(p, q) for p in SLOTS for q in SLOTS if p != q]

    def cos(a, b):
        return float(a @ b) / (math.sqrt(float(a @ a)) * math.sqrt(float(b @ b)))

    con = 0.0
    for p, q in pairs:
        for i in range(n):
            pos = cos(z[p][i], z[q][i]) / cfg.temperature
            den = sum(math.exp(cos(z[p][i], z[q][j]) / cfg.temperature) for j in range(n) if j != i)
            con += math.log(den) - pos
    con /= n * len(pairs)

    pred = 0.0
    for p, q in pairs:
        for i in range(n):
            r1 = predictor(z[p][i], t, p + q, cfg.predictor_activation == "gelu") - z[q][i]
            r2 = predictor(z[q][i], t, q + p, cfg.predictor_activation == "gelu") - z[p][i]
            pred += float(r1 @ r1) + float(r2 @ r2)
    pred /= 2 * n * len(pairs)

    rec = 0.0
    for s in SLOTS:
        for i in range(n):
            r = z[s][i] @ t[f"dec.{s}.W"] + t[f"dec.{s}.b"] - views[s][i]
            rec += float(r @ r)
    rec /= len(SLOTS) * n
    return con, pred, rec
