"""Command-line interface: ``manidrift {drift,train,compare,bound,verify}``.

Exit codes: 0 success, 1 computation or validation failure, 2 usage error.
Every failure prints exactly one line to stderr.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import bounds, drift, fileio, trainer, verify
from .config import read_config
from .errors import IoFailure, ManidriftError, ShapeMismatch


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text):
    vals = [int(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _floats(text):
    vals = [float(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"{text!r} not in {options}")
        return text

    parse.__name__ = "choice"
    return parse


def f6(x):
    return f"{x:.6f}"


def write_csv(path, header, rows):
    """Write CSV with '\\n' endings; ``path`` None means stdout."""
    text = header + "\n" + "".join(",".join(r) + "\n" for r in rows)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


# --------------------------------------------------------------------------
# drift
# --------------------------------------------------------------------------


def _cap_per_class(rows, labels, cap):
    keep = np.zeros(labels.shape[0], dtype=bool)
    for c in np.unique(labels):
        keep[np.flatnonzero(labels == c)[:cap]] = True
    return rows[keep]


def cmd_drift(args):
    if args.pretrained is None or args.tuned is None:
        raise UsageError("drift requires --pretrained and --tuned")
    Z = fileio.load_features(args.pretrained, args.format).rows
    H = fileio.load_features(args.tuned, args.format).rows
    if Z.shape != H.shape:
        raise ShapeMismatch(f"pretrained {Z.shape} vs tuned {H.shape}")
    if args.per_class_cap is not None:
        if args.labels is None:
            raise UsageError("--per-class-cap requires --labels")
        labels = fileio.load_labels(args.labels)
        if labels.shape[0] != Z.shape[0]:
            raise ShapeMismatch(f"{labels.shape[0]} labels for {Z.shape[0]} rows")
        Z = _cap_per_class(Z, labels, args.per_class_cap)
        H = _cap_per_class(H, labels, args.per_class_cap)
    ranks = args.ranks if args.ranks is not None else [args.rank]
    reports = drift.drift_sensitivity(Z, H, ranks)
    by_rank = {r.rank: r for r in reports}
    default = by_rank.get(args.rank) or drift.manifold_drift(Z, H, args.rank)
    rows = [(str(r.rank), f6(r.ratio_pretrained), f6(r.ratio_tuned), f6(r.delta), str(r.n_samples))
            for r in reports]
    write_csv(args.out, "rank,ratio_pretrained,ratio_tuned,delta,n_samples", rows)
    print(f"delta={f6(default.delta)}")
    return 0


# --------------------------------------------------------------------------
# train / compare
# --------------------------------------------------------------------------

TASK_FLAGS = {
    "classes": "num_classes",
    "dim": "dim",
    "transferable_rank": "transferable_rank",
    "shortcut_rank": "shortcut_rank",
    "train_per_class": "train_per_class",
    "test_per_class": "test_per_class",
    "shortcut_strength": "shortcut_strength",
    "noise_std": "noise_std",
    "class_spread": "class_spread",
    "test_shortcut_scale": "test_shortcut_scale",
}
CONFIG_FLAGS = {
    "lam": "lam",
    "tau": "tau",
    "lr": "learning_rate",
    "epochs": "epochs",
    "d_pca": "d_pca_report",
    "init_std": "init_std",
}


def _task_and_config(args, seed):
    spec = trainer.TaskSpec(**{v: getattr(args, k) for k, v in TASK_FLAGS.items() if getattr(args, k) is not None})
    cfg = trainer.TrainerConfig(seed=seed, **{v: getattr(args, k) for k, v in CONFIG_FLAGS.items()
                                              if getattr(args, k, None) is not None})
    spec.validate()
    cfg.validate()
    if cfg.d_pca_report > drift.max_rank(spec.num_classes * spec.test_per_class, spec.dim):
        raise drift.RankTooLarge(f"d-pca {cfg.d_pca_report} too large for the held-out pool")
    task = trainer.generate_task(spec, seed)
    if args.descriptions is not None:
        if args.description_labels is None:
            raise UsageError("--descriptions requires --description-labels")
        bank = fileio.load_prototype_bank(args.descriptions, args.description_labels, spec.num_classes)
        task = trainer.with_prototypes(task, bank)
    return task, cfg


def _epoch_rows(report):
    return [(str(e), *(f6(v) for v in h.as_row())) for e, h in enumerate(report.history)]


EPOCH_HEADER = "epoch,ce,img,txt,con,total"
SUMMARY_HEADER = "lambda,delta,mean_alignment,test_accuracy"


def _summary_row(lam, delta, align, acc):
    return (f6(lam), f6(delta), f6(align), f6(acc))


def cmd_train(args):
    task, cfg = _task_and_config(args, args.seed)
    rep = trainer.train(task, cfg, keep_params=False)
    if args.out is not None:
        write_csv(args.out, EPOCH_HEADER, _epoch_rows(rep))
    summary = [_summary_row(rep.lam, rep.drift.delta, rep.mean_alignment, rep.test_accuracy)]
    write_csv(args.summary_out, SUMMARY_HEADER, summary)
    if args.summary_out is not None:
        write_csv(None, SUMMARY_HEADER, summary)
    return 0


def cmd_compare(args):
    seeds = args.seeds if args.seeds is not None else [args.seed]
    per_lambda = {lam: [] for lam in args.lambdas}
    for seed in seeds:
        task, cfg = _task_and_config(args, seed)
        for lam in args.lambdas:
            rep = trainer.train(task, replace(cfg, lam=float(lam)), keep_params=False)
            per_lambda[lam].append(rep)
            if args.epochs_dir is not None:
                os.makedirs(args.epochs_dir, exist_ok=True)
                path = os.path.join(args.epochs_dir, f"epochs_lambda{f6(lam)}_seed{seed}.csv")
                write_csv(path, EPOCH_HEADER, _epoch_rows(rep))
    rows = []
    for lam in args.lambdas:
        reps = per_lambda[lam]
        rows.append(_summary_row(
            lam,
            float(np.mean([r.drift.delta for r in reps])),
            float(np.mean([r.mean_alignment for r in reps])),
            float(np.mean([r.test_accuracy for r in reps])),
        ))
    if args.out is not None:
        write_csv(args.out, SUMMARY_HEADER, rows)
    write_csv(None, SUMMARY_HEADER, rows)
    return 0


# --------------------------------------------------------------------------
# bound
# --------------------------------------------------------------------------


def cmd_bound(args):
    if args.classes is None or args.samples is None:
        raise UsageError("bound requires --classes and --samples")
    params = bounds.BoundParams(
        tau=args.tau, num_classes=args.classes, num_samples=args.samples, prompt_dim=args.prompt_dim,
        param_radius=args.radius, lipschitz=args.lipschitz, confidence=args.confidence, epsilon=args.epsilon,
    )
    if args.mode == "peeling":
        if args.l_con is None:
            raise UsageError("--mode peeling requires --l-con")
        b = bounds.peeling_bound(args.empirical_risk, args.l_con, params, breakdown=True)
    else:
        b = bounds.generalization_bound(args.empirical_risk, params, breakdown=True)
    print(f"B={f6(b.B)}, rademacher={f6(b.rademacher)}, deviation={f6(b.deviation)}, bound={f6(b.bound)}")
    if b.H is not None:
        print(f"H={b.H}")
    return 0


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def cmd_verify(args):
    results = verify.run(args.suite, args.trials, args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.ok]
    if failed:
        names = ", ".join(f"{r.suite}/{r.name} (seed={r.seed} trial={r.first_failure})" for r in failed)
        print(f"error: verify-failed: {names}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_task_flags(p):
    g = p.add_argument_group("synthetic task")
    g.add_argument("--classes", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--transferable-rank", type=int)
    g.add_argument("--shortcut-rank", type=int)
    g.add_argument("--train-per-class", type=int)
    g.add_argument("--test-per-class", type=int)
    g.add_argument("--shortcut-strength", type=float)
    g.add_argument("--noise-std", type=float)
    g.add_argument("--class-spread", type=float)
    g.add_argument("--test-shortcut-scale", type=float)
    g.add_argument("--descriptions", type=str, help="description feature file (replaces synthetic prototypes)")
    g.add_argument("--description-labels", type=str, help="class label per description feature, one per line")
    t = p.add_argument_group("trainer")
    t.add_argument("--tau", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--d-pca", type=int, help="PCA rank for the held-out drift report")
    t.add_argument("--init-std", type=float)
    t.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="manidrift", description="Manifold drift, consistency losses and bound evaluation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("drift", help="manifold drift between two feature files")
    p.add_argument("--pretrained", type=str)
    p.add_argument("--tuned", type=str)
    p.add_argument("--rank", type=int, default=drift.DEFAULT_RANK)
    p.add_argument("--ranks", type=_ints)
    p.add_argument("--per-class-cap", type=int)
    p.add_argument("--labels", type=str)
    p.add_argument("--format", type=_choice("bin", "csv"))
    p.add_argument("--out", type=str)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("train", help="train the toy two-tower model")
    _add_task_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out", type=str, help="per-epoch loss CSV")
    p.add_argument("--summary-out", type=str)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="sweep the consistency weight")
    _add_task_flags(p)
    p.add_argument("--lambdas", type=_floats, default=[0.0, 12.0])
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--out", type=str, help="summary CSV")
    p.add_argument("--epochs-dir", type=str)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bound", help="evaluate the generalization bounds")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--classes", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--prompt-dim", type=int, default=1)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.add_argument("--confidence", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--empirical-risk", type=float, default=0.0)
    p.add_argument("--l-con", type=float)
    p.add_argument("--mode", type=_choice("fixed", "peeling"), default="fixed")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", help="run randomized property checks")
    p.add_argument("--suite", type=_choice("sphere", "drift", "bounds", "grad", "all"), default="all")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    for name, sp in sub.choices.items():
        if name != "verify":
            sp.add_argument("--config", type=str, help="key = value file; explicit flags win")
    return parser


def _config_schema(subparser):
    schema = {}
    for action in subparser._actions:
        if action.option_strings and action.dest not in ("help", "config"):
            schema[action.dest] = action.type or str
            for opt in action.option_strings:
                schema[opt.lstrip("-").replace("-", "_")] = action.type or str
    return schema


def _dest_aliases(subparser):
    out = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            out[opt.lstrip("-").replace("-", "_")] = action.dest
    return out


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required")
    if getattr(args, "config", None):
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        raw = read_config(args.config, _config_schema(subparser))
        aliases = _dest_aliases(subparser)
        subparser.set_defaults(**{aliases.get(k, k): v for k, v in raw.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ManidriftError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
