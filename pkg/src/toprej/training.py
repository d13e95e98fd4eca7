"""Training loop, evaluation and cross-validated model selection."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import logit

from . import metrics
from .data import Dataset, FoldPlan, sample_batch, stratified_split
from .lof import LofConfig, lof_report
from .losses import LossConfig, loss_and_grads, uses_lof, uses_rejection
from .net import (
    NumericalError,
    ModelParams,
    backward,
    forward_reject,
    forward_top,
    init_model,
    sgd_step,
)

logger = logging.getLogger(__name__)

DEFAULT_LR_GRID = tuple(round(0.01 * i, 2) for i in range(1, 11))
DEFAULT_P_GRID = (16, 32, 64)


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    lof: LofConfig | None = None
    lr: float = 0.01
    momentum: float = 0.9
    steps: int = 2000
    batch_pos: int = 5
    batch_neg: int = 45
    seed: int = 0
    hidden_dim: int = 64
    # initial rejection logit offset; None starts the branch at mean weight ~c
    reject_init: float | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if uses_lof(self.loss.variant) and self.lof is None:
            object.__setattr__(self, "lof", LofConfig())
        if not uses_lof(self.loss.variant) and self.lof is not None:
            raise ValueError(f"variant {self.loss.variant!r} takes no LOF config")

    @property
    def reject_bias(self) -> float:
        if self.reject_init is not None:
            return float(self.reject_init)
        return float(logit(min(self.loss.c, 1.0 - 1e-6)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainRecord:
    step: int
    total: float
    rank: float
    penalty: float
    mean_reject: float  # nan for variants without rejection


def _stream_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, dtype=np.uint64)[0])


def train(ds: Dataset, cfg: TrainConfig):
    """Fit a model by minibatch gradient descent.

    Returns ``(params, records)`` with one :class:`TrainRecord` per step.
    Raises :class:`NumericalError` naming the step if the loss diverges.
    """
    variant = cfg.loss.variant
    params = init_model(ds.dim, cfg.hidden_dim, variant, _stream_seed(cfg.seed, 0),
                        reject_bias=cfg.reject_bias)
    rng = np.random.default_rng(_stream_seed(cfg.seed, 1))
    rejecting = uses_rejection(variant)

    lofw = None
    if uses_lof(variant):
        # computed once over all training negatives; constant during optimisation
        lofw = np.ones(len(ds))
        lofw[ds.neg_index] = lof_report(ds.X[ds.neg_index], cfg.lof).weights

    state = None
    records = []
    for step in range(cfg.steps):
        pi, ni = sample_batch(ds, cfg.batch_pos, cfg.batch_neg, rng)
        X = np.vstack([ds.X[pi], ds.X[ni]])
        scores, top_cache = forward_top(params.top, X)
        caches = {"top": top_cache}
        if not np.all(np.isfinite(scores)):
            raise NumericalError(f"non-finite scores at step {step}")
        r = None
        if rejecting:
            r, caches["reject"] = forward_reject(params.reject, ds.X[ni])
        value, d_pos, d_neg, d_rej = loss_and_grads(
            scores[: pi.size], scores[pi.size :], cfg.loss,
            neg_reject=r, neg_lofw=None if lofw is None else lofw[ni],
        )
        if not np.isfinite(value.total):
            raise NumericalError(f"loss diverged at step {step}")
        grads = backward(params, caches, np.concatenate([d_pos, d_neg]), d_rej)
        try:
            params, state = sgd_step(params, grads, cfg.lr, cfg.momentum, state)
        except NumericalError as exc:
            raise NumericalError(f"step {step}: {exc}") from None
        records.append(
            TrainRecord(step, value.total, value.rank_term, value.penalty_term,
                        float(np.mean(r)) if rejecting else float("nan"))
        )
    return params, records


def reject_weights(params: ModelParams, X) -> np.ndarray:
    if params.reject is None:
        raise ValueError("model has no rejection branch")
    return forward_reject(params.reject, X)[0]


def evaluate(params: ModelParams, ds: Dataset) -> metrics.EvalReport:
    """Score with the top branch only and compute every ranking metric."""
    if ds.dim != params.in_dim:
        raise ValueError(f"dataset dimension {ds.dim} != model input dimension {params.in_dim}")
    s = forward_top(params.top, ds.X)[0]
    return metrics.evaluate_scores(s[ds.y], s[~ds.y])


def make_grid(base: TrainConfig, p_grid=DEFAULT_P_GRID, lr_grid=DEFAULT_LR_GRID) -> list[TrainConfig]:
    return [
        replace(base, loss=replace(base.loss, p=int(p)), lr=float(lr))
        for p in p_grid
        for lr in lr_grid
    ]


class Standardizer:
    def __init__(self, X):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)

    def __call__(self, ds: Dataset) -> Dataset:
        return Dataset((ds.X - self.mean) / self.std, ds.y, ds.ids)


@dataclass
class FoldResult:
    fold: int
    chosen: TrainConfig
    chosen_index: int
    validation: list  # per grid config: metrics summary dict
    test: metrics.EvalReport


@dataclass
class CVReport:
    variant: str
    folds: list
    mean: dict
    variance: dict

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "folds": [
                {
                    "fold": f.fold,
                    "chosen_index": f.chosen_index,
                    "chosen": f.chosen.to_dict(),
                    "validation": f.validation,
                    "test": f.test.summary(),
                }
                for f in self.folds
            ],
            "mean": self.mean,
            "variance": self.variance,
        }


def _prepare(ds: Dataset, train_idx, eval_idx, standardize: bool):
    tr, ev = ds.subset(train_idx), ds.subset(eval_idx)
    if standardize:
        z = Standardizer(tr.X)
        tr, ev = z(tr), z(ev)
    return tr, ev


def _run_job(job):
    ds, train_idx, eval_idx, cfg, standardize = job
    tr, ev = _prepare(ds, train_idx, eval_idx, standardize)
    params, _ = train(tr, cfg)
    return evaluate(params, ev)


def _selection_key(item):
    gi, cfg, rep = item
    return (-rep.pos_at_top, -rep.pr_auc, cfg.lr, gi)


def cross_validate(ds: Dataset, folds: FoldPlan, grid: list[TrainConfig], jobs: int = 1,
                   inner_frac: float = 0.1, standardize: bool = False) -> CVReport:
    """Nested model selection over ``grid`` for every fold of ``folds``.

    Each (fold, grid index) job gets its own seed derived from the config seed,
    so serial and parallel runs give identical reports.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    variant = grid[0].loss.variant
    if any(cfg.loss.variant != variant for cfg in grid):
        raise ValueError("a grid must hold a single loss variant")

    splits = []
    inner_jobs = []
    for f in range(folds.k):
        train_idx, test_idx = folds.split(f)
        rng = np.random.default_rng(_stream_seed(folds.seed, f, 2))
        fit_idx, val_idx = stratified_split(ds, train_idx, inner_frac, rng)
        splits.append((train_idx, test_idx))
        for gi, cfg in enumerate(grid):
            job_cfg = replace(cfg, seed=_stream_seed(cfg.seed, f, gi, 0))
            inner_jobs.append((ds, fit_idx, val_idx, job_cfg, standardize))

    inner = _map(inner_jobs, jobs)

    chosen = []
    outer_jobs = []
    for f in range(folds.k):
        reps = inner[f * len(grid) : (f + 1) * len(grid)]
        gi, cfg, _ = min(((gi, cfg, rep) for gi, (cfg, rep) in enumerate(zip(grid, reps))),
                         key=_selection_key)
        chosen.append((gi, cfg, [r.summary() for r in reps]))
        train_idx, test_idx = splits[f]
        job_cfg = replace(cfg, seed=_stream_seed(cfg.seed, f, gi, 1))
        outer_jobs.append((ds, train_idx, test_idx, job_cfg, standardize))
        logger.info("fold %d: selected grid entry %d (p=%d, lr=%g)", f, gi, cfg.loss.p, cfg.lr)

    tests = _map(outer_jobs, jobs)
    results = [FoldResult(f, cfg, gi, val, rep)
               for f, ((gi, cfg, val), rep) in enumerate(zip(chosen, tests))]
    names = ("pos_at_top", "roc_auc", "pr_auc")
    values = {k: np.array([getattr(r.test, k) for r in results]) for k in names}
    return CVReport(
        variant,
        results,
        {k: float(v.mean()) for k, v in values.items()},
        {k: float(v.var()) for k, v in values.items()},
    )


def _map(jobs_list, jobs: int):
    if jobs <= 1:
        return [_run_job(j) for j in jobs_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_job, jobs_list))
