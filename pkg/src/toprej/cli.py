"""``toprej`` command line: train, eval, curves, cv, synth and lof subcommands.

Settings come from an optional JSON config file (``--config``) and are
overridden by flags.  ``--print-config`` dumps the effective settings in the
same JSON format and exits.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import metrics
from .data import (
    DataError,
    Dataset,
    SynthConfig,
    load_csv,
    save_csv,
    stratified_folds,
    synth_generate,
    write_outlier_flags,
)
from .lof import LofConfig, lof_report
from .losses import VARIANTS, LossConfig, uses_lof, uses_rejection
from .net import NumericalError, load_model, save_model
from .training import (
    DEFAULT_LR_GRID,
    DEFAULT_P_GRID,
    Standardizer,
    TrainConfig,
    _stream_seed,
    cross_validate,
    evaluate,
    make_grid,
    reject_weights,
    train,
)

logger = logging.getLogger("toprej")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    variant: str = "toprej"
    p: int = 32
    lam: float = 32.0
    c: float = 0.9
    lof_k: int = 20
    d: float = 100.0
    lr: float = 0.01
    momentum: float = 0.9
    steps: int = 2000
    batch_pos: int = 5
    batch_neg: int = 45
    hidden_dim: int = 64
    reject_init: float | None = None
    seed: int = 0
    standardize: bool = False
    folds: int = 10
    inner_frac: float = 0.1
    variants: list = field(default_factory=lambda: ["top", "toplof", "toprej", "toprejlof"])
    p_grid: list = field(default_factory=lambda: list(DEFAULT_P_GRID))
    lr_grid: list = field(default_factory=lambda: list(DEFAULT_LR_GRID))
    jobs: int = 1
    n_pos: int = 300
    n_neg: int = 300
    dim: int = 10
    separation: float = 3.0
    outlier_rate: float = 0.05
    outlier_shift: float | None = None
    repeats: int = 10

    def train_config(self, variant: str | None = None) -> TrainConfig:
        variant = variant or self.variant
        return TrainConfig(
            loss=LossConfig(variant, self.p, self.lam, self.c),
            lof=LofConfig(self.lof_k, self.d) if uses_lof(variant) else None,
            lr=self.lr,
            momentum=self.momentum,
            steps=self.steps,
            batch_pos=self.batch_pos,
            batch_neg=self.batch_neg,
            seed=self.seed,
            hidden_dim=self.hidden_dim,
            reject_init=self.reject_init,
        )

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(self.n_pos, self.n_neg, self.dim, self.separation,
                           self.outlier_rate, self.outlier_shift, seed)


CONFIG_KEYS = {f.name: f for f in fields(RunConfig)}


def _listed(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v.strip()]
    return parse


def _optional_float(text):
    return None if text.lower() in ("none", "null", "") else float(text)


def _bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


FLAG_TYPES = {
    "variant": str, "p": int, "lam": float, "c": float, "lof_k": int, "d": float,
    "lr": float, "momentum": float, "steps": int, "batch_pos": int, "batch_neg": int,
    "hidden_dim": int, "reject_init": _optional_float, "seed": int, "standardize": _bool,
    "folds": int, "inner_frac": float, "variants": _listed(str), "p_grid": _listed(int),
    "lr_grid": _listed(float), "jobs": int, "n_pos": int, "n_neg": int, "dim": int,
    "separation": float, "outlier_rate": float, "outlier_shift": _optional_float,
    "repeats": int,
}
FLAG_ALIASES = {"lam": ["--lambda"]}


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such config file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return RunConfig(**doc)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(k_means: str) -> argparse.ArgumentParser:
    # ``--k`` is the fold count for ``cv`` and the LOF neighbourhood elsewhere
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective config as JSON and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    for key, kind in FLAG_TYPES.items():
        names = ["--" + key.replace("_", "-")] + FLAG_ALIASES.get(key, [])
        if key == k_means:
            names.append("--k")
        common.add_argument(*names, dest=key, type=kind, default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common("lof_k")
    parser = _Parser(prog="toprej", description="Top-rank learning with a rejection branch.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train one model on a feature CSV")
    p.add_argument("--data")
    p.add_argument("--model-out")
    p.add_argument("--records", help="per-step record CSV (default: <model-out>.records.csv)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out", help="write the metrics JSON here instead of stdout")

    p = sub.add_parser("curves", parents=[common], help="export ROC and PR curve points")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out-prefix")

    p = sub.add_parser("cv", parents=[_common("folds")], help="cross-validated comparison of loss variants")
    p.add_argument("--data")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", parents=[common], help="synthetic outlier-injection experiment")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("lof", parents=[common], help="LOF scores and weights of the negatives")
    p.add_argument("--data")
    p.add_argument("--out")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in FLAG_TYPES if getattr(args, k) is not None}
    cfg = replace(cfg, **overrides)
    for v in [cfg.variant, *cfg.variants]:
        if v.lower() not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    if cfg.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    try:
        for v in [cfg.variant, *cfg.variants]:
            cfg.train_config(v)
        cfg.synth_config(cfg.seed)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _need(args, *names):
    missing = ["--" + n.replace("_", "-") for n in names if not getattr(args, n)]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def cmd_train(cfg: RunConfig, args) -> int:
    _need(args, "data", "model_out")
    ds = load_csv(args.data)
    tcfg = cfg.train_config()
    if cfg.standardize:
        # the model then expects standardized inputs; statistics are stored alongside
        z = Standardizer(ds.X)
        ds = z(ds)
        Path(args.model_out + ".standardize.json").write_text(
            _dump({"mean": z.mean.tolist(), "std": z.std.tolist()}))
    params, records = train(ds, tcfg)
    save_model(params, args.model_out)
    records_path = args.records or args.model_out + ".records.csv"
    _write_rows(records_path, ("step", "total", "rank", "penalty", "mean_reject"),
                ([r.step, _fmt(r.total), _fmt(r.rank), _fmt(r.penalty), _fmt(r.mean_reject)]
                 for r in records))
    logger.info("wrote %s and %s", args.model_out, records_path)
    return EXIT_OK


def _load_scored(args):
    _need(args, "model", "data")
    params = load_model(args.model)
    ds = load_csv(args.data)
    side = Path(args.model + ".standardize.json")
    if side.is_file():
        stats = json.loads(side.read_text())
        ds = Dataset((ds.X - np.array(stats["mean"])) / np.array(stats["std"]), ds.y, ds.ids)
    if ds.dim != params.in_dim:
        raise DataError(f"data dimension {ds.dim} does not match model input dimension {params.in_dim}")
    return params, ds


def cmd_eval(cfg: RunConfig, args) -> int:
    params, ds = _load_scored(args)
    text = _dump(evaluate(params, ds).summary())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_curves(cfg: RunConfig, args) -> int:
    _need(args, "out_prefix")
    params, ds = _load_scored(args)
    report = evaluate(params, ds)
    metrics.write_curves(report, args.out_prefix + "_roc.csv", args.out_prefix + "_pr.csv")
    return EXIT_OK


def _variants(cfg: RunConfig) -> list[str]:
    return [v.lower() for v in cfg.variants]


def cmd_cv(cfg: RunConfig, args) -> int:
    _need(args, "data", "out")
    ds = load_csv(args.data)
    plan = stratified_folds(ds, cfg.folds, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    manifest = {
        "command": "cv",
        "data": str(args.data),
        "config": asdict(cfg),
        "n_samples": len(ds),
        "n_pos": ds.n_pos,
        "n_neg": ds.n_neg,
        "folds": {
            "k": plan.k,
            "stratified": True,
            "seed": plan.seed,
            "test_counts": [
                {"pos": int(np.sum(ds.y[plan.assignment == f])),
                 "neg": int(np.sum(~ds.y[plan.assignment == f]))}
                for f in range(plan.k)
            ],
        },
        "batch": {"pos": cfg.batch_pos, "neg": cfg.batch_neg},
        "grid": {"p": list(cfg.p_grid), "lr": list(cfg.lr_grid),
                 "size": len(cfg.p_grid) * len(cfg.lr_grid)},
        "fixed": {"lambda": cfg.lam, "c": cfg.c, "d": cfg.d, "lof_k": cfg.lof_k},
        "variants": _variants(cfg),
    }
    (out / "manifest.json").write_text(_dump(manifest))
    _write_rows(out / "folds.csv", ("id", "label", "fold"),
                zip(ds.ids.tolist(), ds.y.astype(int).tolist(), plan.assignment.tolist()))

    reports = {}
    rows = []
    for v in _variants(cfg):
        grid = make_grid(cfg.train_config(v), cfg.p_grid, cfg.lr_grid)
        rep = cross_validate(ds, plan, grid, jobs=cfg.jobs, inner_frac=cfg.inner_frac,
                             standardize=cfg.standardize)
        reports[v] = rep.to_dict()
        for f in rep.folds:
            s = f.test.summary()
            rows.append([f.fold, v, _fmt(s["pos_at_top"]), _fmt(s["roc_auc"]), _fmt(s["pr_auc"])])
        logger.info("%s: %s", v, rep.mean)
    (out / "cv_report.json").write_text(_dump(reports))
    _write_rows(out / "cv_folds.csv", ("fold", "variant", "pos_at_top", "roc_auc", "pr_auc"), rows)
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    _need(args, "out")
    out = Path(args.out)
    for sub in ("data", "curves"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    variants = _variants(cfg)
    per_seed = []
    weights_rows = []
    for rep in range(cfg.repeats):
        data_seed = _stream_seed(cfg.seed, rep, 0)
        train_ds, test_ds, outlier_ids = synth_generate(cfg.synth_config(data_seed))
        save_csv(train_ds, out / "data" / f"train_{rep}.csv")
        save_csv(test_ds, out / "data" / f"test_{rep}.csv")
        write_outlier_flags(train_ds, outlier_ids, out / "data" / f"outliers_{rep}.csv")
        injected = np.isin(train_ds.ids, outlier_ids)
        for v in variants:
            tcfg = replace(cfg.train_config(v), seed=_stream_seed(cfg.seed, rep, 1))
            params, _ = train(train_ds, tcfg)
            report = evaluate(params, test_ds)
            metrics.write_curves(report, out / "curves" / f"{v}_{rep}_roc.csv",
                                 out / "curves" / f"{v}_{rep}_pr.csv")
            s = report.summary()
            row = {"repeat": rep, "variant": v, **s}
            if uses_rejection(v):
                neg = train_ds.neg_index
                r = reject_weights(params, train_ds.X[neg])
                inj = injected[neg]
                row["reject_injected"] = float(r[inj].mean()) if inj.any() else float("nan")
                row["reject_other"] = float(r[~inj].mean())
                row["reject_mean"] = float(r.mean())
                weights_rows += [[rep, v, i, _fmt(w), int(f)]
                                 for i, w, f in zip(train_ds.ids[neg].tolist(), r, inj)]
            per_seed.append(row)
            logger.info("repeat %d %s: %s", rep, v, s)

    cols = ("repeat", "variant", "pos_at_top", "roc_auc", "pr_auc",
            "reject_injected", "reject_other", "reject_mean")
    _write_rows(out / "per_seed.csv", cols,
                ([_fmt(r.get(c, float("nan"))) if c not in ("repeat", "variant") else r[c]
                  for c in cols] for r in per_seed))
    _write_rows(out / "rejection_weights.csv",
                ("repeat", "variant", "id", "reject_weight", "is_injected"), weights_rows)

    table = []
    for v in variants:
        vals = {k: np.array([r[k] for r in per_seed if r["variant"] == v])
                for k in ("pos_at_top", "roc_auc", "pr_auc")}
        table.append([v] + [_fmt(x) for k in vals for x in (vals[k].mean(), vals[k].var())])
    _write_rows(out / "comparison.csv",
                ("variant", "pos_at_top_mean", "pos_at_top_var", "roc_auc_mean", "roc_auc_var",
                 "pr_auc_mean", "pr_auc_var"), table)
    (out / "manifest.json").write_text(_dump({"command": "synth", "config": asdict(cfg)}))
    return EXIT_OK


def cmd_lof(cfg: RunConfig, args) -> int:
    _need(args, "data", "out")
    ds = load_csv(args.data)
    neg = ds.neg_index
    if cfg.lof_k >= neg.size:
        raise DataError(f"k={cfg.lof_k} must be smaller than the number of negatives ({neg.size})")
    rep = lof_report(ds.X[neg], LofConfig(cfg.lof_k, cfg.d))
    _write_rows(args.out, ("id", "lof", "weight"),
                ([i, _fmt(s), _fmt(w)] for i, s, w in zip(ds.ids[neg].tolist(), rep.lof, rep.weights)))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "curves": cmd_curves,
            "cv": cmd_cv, "synth": cmd_synth, "lof": cmd_lof}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(_dump(asdict(cfg)))
            return EXIT_OK
        return COMMANDS[args.command](cfg, args)
    except (UsageError, TypeError) as exc:
        print(f"toprej: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"toprej: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"toprej: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
