"""p-norm push top-rank losses, optionally weighted by rejection and LOF.

For ``m`` positive scores ``t_i`` and ``n`` negative scores ``u_j`` the rank
term is::

    (1/m) * sum_i ( sum_j (l(t_i - u_j) * w_j)^p )^(1/p),   l(z) = log(1 + e^-z)

with per-negative weights ``w_j`` equal to 1 (``top``), the rejection output
``r_j`` (``toprej``), the LOF weight ``O_j`` (``toplof``) or ``r_j * O_j``
(``toprejlof``).  Rejecting variants add ``lam * max(0, c - mean(r))^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

VARIANTS = ("top", "toprej", "toplof", "toprejlof")


def uses_rejection(variant: str) -> bool:
    return _check_variant(variant) in ("toprej", "toprejlof")


def uses_lof(variant: str) -> bool:
    return _check_variant(variant) in ("toplof", "toprejlof")


def _check_variant(variant: str) -> str:
    v = variant.lower()
    if v not in VARIANTS:
        raise ValueError(f"unknown loss variant {variant!r}; expected one of {VARIANTS}")
    return v


@dataclass(frozen=True)
class LossConfig:
    variant: str = "top"
    p: int = 32
    lam: float = 32.0
    c: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "variant", _check_variant(self.variant))
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0.0 < self.c <= 1.0:
            raise ValueError("c must lie in (0, 1]")


@dataclass(frozen=True)
class LossValue:
    total: float
    rank_term: float
    penalty_term: float


def surrogate(z):
    """Logistic surrogate ``log(1 + exp(-z))`` without overflow."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def surrogate_grad(z):
    return -expit(-np.asarray(z, dtype=np.float64))


def pnorm_reduce(a, p: int, axis: int = -1):
    """``(sum a^p)^(1/p)`` along ``axis`` with the max factored out."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0):
        raise ValueError("pnorm_reduce expects non-negative entries")
    M = a.max(axis=axis, keepdims=True)
    safe = np.where(M > 0, M, 1.0)
    s = np.sum((a / safe) ** p, axis=axis, keepdims=True) ** (1.0 / p)
    out = np.where(M > 0, M * s, 0.0)
    return np.squeeze(out, axis=axis)


def pnorm_reduce_grad(a, p: int, axis: int = -1):
    """Partial derivatives ``(a_j / S)^(p-1)``; zero where ``S == 0``."""
    a = np.asarray(a, dtype=np.float64)
    S = np.expand_dims(pnorm_reduce(a, p, axis=axis), axis)
    safe = np.where(S > 0, S, 1.0)
    return np.where(S > 0, (a / safe) ** (p - 1), 0.0)


def rejection_penalty(neg_reject, lam: float, c: float) -> tuple[float, np.ndarray]:
    r = np.asarray(neg_reject, dtype=np.float64)
    n = r.shape[0]
    gap = max(0.0, c - float(np.mean(r)))
    value = lam * gap * gap
    grad = np.full(n, -2.0 * lam * gap / n)
    return value, grad


def loss_and_grads(pos_scores, neg_scores, cfg: LossConfig, neg_reject=None, neg_lofw=None):
    """Loss value and its gradients with respect to the branch outputs.

    Returns ``(LossValue, d_pos, d_neg, d_reject)`` where ``d_reject`` is None
    for variants without rejection.
    """
    t = np.asarray(pos_scores, dtype=np.float64)
    u = np.asarray(neg_scores, dtype=np.float64)
    if t.ndim != 1 or u.ndim != 1 or t.size < 1 or u.size < 1:
        raise ValueError("need at least one positive and one negative score")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite scores")
    m, n = t.size, u.size
    rej, lofw = uses_rejection(cfg.variant), uses_lof(cfg.variant)
    if rej != (neg_reject is not None):
        raise ValueError(f"variant {cfg.variant!r} {'needs' if rej else 'takes no'} rejection weights")
    if lofw != (neg_lofw is not None):
        raise ValueError(f"variant {cfg.variant!r} {'needs' if lofw else 'takes no'} LOF weights")

    z = t[:, None] - u[None, :]
    ell = surrogate(z)
    w = np.ones(n)
    if rej:
        r = np.asarray(neg_reject, dtype=np.float64)
        if r.shape != (n,) or not np.all(np.isfinite(r)):
            raise ValueError("rejection weights must be finite with one entry per negative")
        w = w * r
    if lofw:
        o = np.asarray(neg_lofw, dtype=np.float64)
        if o.shape != (n,) or not np.all(np.isfinite(o)):
            raise ValueError("LOF weights must be finite with one entry per negative")
        w = w * o
    a = ell * w[None, :]
    S = pnorm_reduce(a, cfg.p, axis=1)
    rank_term = float(np.sum(S) / m)

    dS_da = pnorm_reduce_grad(a, cfg.p, axis=1) / m
    dl = surrogate_grad(z)
    da_dz = dl * w[None, :]
    d_pos = np.sum(dS_da * da_dz, axis=1)
    d_neg = -np.sum(dS_da * da_dz, axis=0)

    penalty = 0.0
    d_rej = None
    if rej:
        other = o if lofw else 1.0
        d_rej = np.sum(dS_da * ell, axis=0) * other
        penalty, pgrad = rejection_penalty(r, cfg.lam, cfg.c)
        d_rej = d_rej + pgrad
    return LossValue(rank_term + penalty, rank_term, penalty), d_pos, d_neg, d_rej
