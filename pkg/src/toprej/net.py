"""Two-branch feed-forward network used for top-rank learning with rejection.

Each branch is a two-layer perceptron ``x -> relu(x W1 + b1) W2 + b2``.  The
top-rank branch returns the raw linear output as a ranking score, the
rejection branch squashes it through a sigmoid to a weight in (0, 1).

All arrays are float64.  Inputs are row-major batches of shape ``(N, D)``; a
single 1-D feature vector is accepted and treated as a batch of one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

RELU_TOP = "relu_top"
SIGMOID_REJECT = "sigmoid_reject"
ACTIVATIONS = (RELU_TOP, SIGMOID_REJECT)

FORMAT_VERSION = 1
LAYER_NAMES = ("W1", "b1", "W2", "b2")


class NumericalError(ArithmeticError):
    """Raised when training produces non-finite values."""


@dataclass
class BranchParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = RELU_TOP

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation tag {self.activation!r}")
        D, H = self.W1.shape
        if self.b1.shape != (H,) or self.W2.shape != (H, 1) or self.b2.shape != (1,):
            raise ValueError(
                f"inconsistent branch shapes W1={self.W1.shape} b1={self.b1.shape} "
                f"W2={self.W2.shape} b2={self.b2.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    def copy(self) -> "BranchParams":
        return BranchParams(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), self.activation
        )


@dataclass
class ModelParams:
    top: BranchParams
    reject: BranchParams | None = None
    variant: str = "top"

    def __post_init__(self):
        if self.top.activation != RELU_TOP:
            raise ValueError("top branch must use the relu_top tag")
        if self.reject is not None:
            if self.reject.activation != SIGMOID_REJECT:
                raise ValueError("reject branch must use the sigmoid_reject tag")
            if self.reject.in_dim != self.top.in_dim:
                raise ValueError("branches must share the input dimension")

    @property
    def in_dim(self) -> int:
        return self.top.in_dim

    def branches(self) -> dict[str, BranchParams]:
        out = {"top": self.top}
        if self.reject is not None:
            out["reject"] = self.reject
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.top.copy(), None if self.reject is None else self.reject.copy(), self.variant
        )


@dataclass
class BranchGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LAYER_NAMES}


@dataclass
class ParamGrads:
    top: BranchGrads
    reject: BranchGrads | None = None

    def branches(self) -> dict[str, BranchGrads]:
        out = {"top": self.top}
        if self.reject is not None:
            out["reject"] = self.reject
        return out


@dataclass
class Cache:
    X: np.ndarray
    Z1: np.ndarray
    A1: np.ndarray
    out: np.ndarray = field(default=None)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_branch(in_dim: int, hidden_dim: int, activation: str, seed: int) -> BranchParams:
    """Glorot-uniform weights, zero biases.  Same seed gives identical bytes."""
    if in_dim < 1 or hidden_dim < 1:
        raise ValueError(f"dimensions must be positive, got in_dim={in_dim}, hidden_dim={hidden_dim}")
    rng = np.random.default_rng(seed)
    W1 = _glorot(rng, in_dim, hidden_dim)
    W2 = _glorot(rng, hidden_dim, 1)
    return BranchParams(W1, np.zeros(hidden_dim), W2, np.zeros(1), activation)


def init_model(in_dim: int, hidden_dim: int, variant: str, seed: int,
               reject_bias: float = 0.0) -> ModelParams:
    """Both branches for ``variant``; ``reject_bias`` sets the initial rejection logit offset."""
    from .losses import uses_rejection

    top_seed, rej_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    top = init_branch(in_dim, hidden_dim, RELU_TOP, int(top_seed))
    reject = None
    if uses_rejection(variant):
        reject = init_branch(in_dim, hidden_dim, SIGMOID_REJECT, int(rej_seed))
        reject.b2[0] = reject_bias
    return ModelParams(top, reject, variant)


def _as_batch(params: BranchParams, x) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ValueError(f"expected input of dimension {params.in_dim}, got shape {np.shape(x)}")
    return X


def _hidden(params: BranchParams, x) -> tuple[np.ndarray, Cache]:
    X = _as_batch(params, x)
    Z1 = X @ params.W1 + params.b1
    A1 = np.maximum(Z1, 0.0)
    logit = (A1 @ params.W2)[:, 0] + params.b2[0]
    return logit, Cache(X, Z1, A1)


def forward_top(params: BranchParams, x) -> tuple[np.ndarray, Cache]:
    """Ranking scores, shape ``(N,)``, and the cache for :func:`backward_branch`."""
    if params.activation != RELU_TOP:
        raise ValueError("forward_top needs a relu_top branch")
    score, cache = _hidden(params, x)
    cache.out = score
    return score, cache


def forward_reject(params: BranchParams, x) -> tuple[np.ndarray, Cache]:
    """Rejection weights in the open interval (0, 1)."""
    if params.activation != SIGMOID_REJECT:
        raise ValueError("forward_reject needs a sigmoid_reject branch")
    logit, cache = _hidden(params, x)
    w = expit(logit)
    # keep the range open in float64 for saturated logits
    w = np.clip(w, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))
    cache.out = w
    return w, cache


def backward_branch(params: BranchParams, cache: Cache, d_out) -> BranchGrads:
    """Gradients of a branch given dL/d(branch output) per sample."""
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != (cache.X.shape[0],) or cache.X.shape[1] != params.in_dim:
        raise ValueError("cache and gradient shapes do not match the branch")
    if cache.Z1.shape[1] != params.hidden_dim:
        raise ValueError("cache hidden width does not match the branch")
    if params.activation == SIGMOID_REJECT:
        w = cache.out
        d_logit = d_out * w * (1.0 - w)
    else:
        d_logit = d_out
    gW2 = cache.A1.T @ d_logit[:, None]
    gb2 = np.array([d_logit.sum()])
    dA1 = d_logit[:, None] * params.W2[:, 0][None, :]
    dZ1 = dA1 * (cache.Z1 > 0)
    gW1 = cache.X.T @ dZ1
    gb1 = dZ1.sum(axis=0)
    return BranchGrads(gW1, gb1, gW2, gb2)


def backward(params: ModelParams, caches: dict, dL_dscore, dL_dweight=None) -> ParamGrads:
    """Chain rule through both branches.

    ``caches`` maps ``"top"`` (and ``"reject"`` for rejecting models) to the
    cache returned by the matching forward call.  ``dL_dscore`` has one entry
    per row scored by the top branch, ``dL_dweight`` one per row passed to the
    rejection branch.
    """
    top = backward_branch(params.top, caches["top"], dL_dscore)
    reject = None
    if params.reject is not None:
        if dL_dweight is None or "reject" not in caches:
            raise ValueError("rejecting model needs a reject cache and dL_dweight")
        reject = backward_branch(params.reject, caches["reject"], dL_dweight)
    return ParamGrads(top, reject)


def zero_state(params: ModelParams) -> dict:
    return {
        (b, name): np.zeros_like(arr)
        for b, branch in params.branches().items()
        for name, arr in branch.arrays().items()
    }


def sgd_step(params: ModelParams, grads: ParamGrads, lr: float, momentum: float = 0.9, state=None):
    """Heavy-ball update ``v <- momentum*v + g; w <- w - lr*v``.

    Returns ``(new_params, new_state)``; the inputs are not modified.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    if state is None:
        state = zero_state(params)
    new = params.copy()
    new_state = {}
    gb = grads.branches()
    for b, branch in new.branches().items():
        if b not in gb:
            raise ValueError(f"missing gradients for branch {b!r}")
        for name, g in gb[b].arrays().items():
            w = getattr(branch, name)
            if g.shape != w.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {b}.{name}")
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {b}.{name}")
            v = momentum * state[(b, name)] + g
            new_state[(b, name)] = v
            setattr(branch, name, w - lr * v)
    return new, new_state


def score(params: ModelParams, X) -> np.ndarray:
    """Top-branch scores only; the rejection branch is never consulted."""
    return forward_top(params.top, X)[0]


def save_model(params: ModelParams, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "in_dim": params.in_dim,
        "hidden_dim": params.top.hidden_dim,
        "variant": params.variant,
        "branches": {
            b: {
                "activation": branch.activation,
                "layers": [
                    {"name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
                    for name, arr in branch.arrays().items()
                ],
            }
            for b, branch in params.branches().items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> ModelParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    branches = {}
    for b, spec in doc["branches"].items():
        arrays = {
            layer["name"]: np.array(layer["values"], dtype=np.float64).reshape(layer["shape"])
            for layer in spec["layers"]
        }
        branches[b] = BranchParams(activation=spec["activation"], **arrays)
    params = ModelParams(branches["top"], branches.get("reject"), doc["variant"])
    if params.in_dim != doc["in_dim"] or params.top.hidden_dim != doc["hidden_dim"]:
        raise ValueError("model header does not match layer shapes")
    return params
