"""Command-line front end: reproducible runs wired through file artifacts.

Exit codes: 0 success, 1 runtime/data error (the module error is printed
verbatim), 2 usage error. Every command writes a manifest JSON next to
its primary output (suffix ``.manifest.json``) recording the resolved
flags, seeds, paths, tool version and wall time; ``sqfa replay`` re-runs
a manifest. All randomness flows from ``--seed``; child seeds are derived
by fixed offsets. Outputs are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .baselines import ama_gauss_fit, lda, pca
from .distances import DistanceKind, GaussianParams, distance
from .errors import SqfaError, UnknownSpec, UnknownSweep
from .evaluation import gaussian_resample_eval, knn_predict, qda_evaluate, qda_fit
from .stats import estimate_class_statistics, load_dataset, load_stats, save_dataset
from .toydata import SWEEP_NAMES, TOY_NAMES, ToySpec, generate, sweep_grid
from .trainer import TrainConfig, fit, load_filters, save_filters

METHOD_KINDS = {
    "sqfa": DistanceKind.FISHER_RAO_CALVO_OLLER,
    "smsqfa": DistanceKind.FISHER_RAO_ZERO_MEAN,
    "sqfa-b": DistanceKind.BHATTACHARYYA,
    "sqfa-h": DistanceKind.HELLINGER,
}

METRIC_KINDS = {
    "calvo-oller": DistanceKind.FISHER_RAO_CALVO_OLLER,
    "zero-mean": DistanceKind.FISHER_RAO_ZERO_MEAN,
    "bhattacharyya": DistanceKind.BHATTACHARYYA,
    "hellinger": DistanceKind.HELLINGER,
    "mahalanobis-sq": DistanceKind.MAHALANOBIS_SQ,
}


class UsageError(Exception):
    """Command-line misuse that argparse cannot catch itself."""


def _atomic_write(path: Path, writer) -> None:
    """Call writer(tmp_path), then rename the temp file over path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out: Path, command: str, args: argparse.Namespace, start: float,
                    inputs: list[str], outputs: list[str]) -> None:
    flags = {
        k: v for k, v in vars(args).items() if k not in ("func", "command")
    }
    payload = {
        "command": command,
        "flags": flags,
        "seed": flags.get("seed"),
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
        "wall_time_s": time.perf_counter() - start,
    }
    manifest_path = Path(str(out) + ".manifest.json")
    _atomic_write(
        manifest_path,
        lambda tmp: tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8"),
    )


def _truth_path(out: Path) -> Path:
    return out.with_suffix(".truth.json")


def _cmd_toygen(args) -> int:
    start = time.perf_counter()
    spec = ToySpec(name=args.name, samples_per_class=args.samples, seed=args.seed)
    data, truth = generate(spec)
    out = Path(args.out)
    _atomic_write(out, lambda tmp: save_dataset(data, tmp))
    truth_out = _truth_path(out)
    _atomic_write(
        truth_out,
        lambda tmp: tmp.write_text(json.dumps(truth, indent=2), encoding="utf-8"),
    )
    _write_manifest(out, "toygen", args, start, [], [str(out), str(truth_out)])
    print(f"wrote {data.n_samples} samples to {out}")
    return 0


def _cmd_fit(args) -> int:
    start = time.perf_counter()
    data = load_dataset(args.data)
    ens = estimate_class_statistics(data)
    out = Path(args.out)
    log = None

    if args.method in METHOD_KINDS:
        cfg = TrainConfig(
            kind=METHOD_KINDS[args.method],
            sigma2=args.sigma2,
            m=args.m,
            seed=args.seed,
            restarts=args.restarts,
            tol=args.tol,
            max_iters=args.max_iters,
            sequential_pairs=args.pairs,
        )
        bank, log = fit(ens, cfg)
    elif args.method == "pca":
        bank = pca(ens, args.m)
    elif args.method == "lda":
        if args.m > ens.n_classes - 1:
            raise UsageError(
                f"lda can learn at most c-1 = {ens.n_classes - 1} filters, "
                f"got --m {args.m}"
            )
        bank = lda(ens, args.m, shrinkage=args.shrinkage).filters
    elif args.method == "ama":
        cfg = TrainConfig(
            kind=DistanceKind.FISHER_RAO_CALVO_OLLER,
            sigma2=args.sigma2,
            m=args.m,
            seed=args.seed,
            restarts=args.restarts,
            tol=args.tol,
            max_iters=args.max_iters,
            sequential_pairs=args.pairs,
        )
        model, log = ama_gauss_fit(data, cfg)
        bank = model.filters
    else:  # pragma: no cover - argparse choices guard this
        raise UsageError(f"unknown method {args.method!r}")

    _atomic_write(
        out, lambda tmp: save_filters(bank, tmp, kind=args.method, sigma2=args.sigma2)
    )
    outputs = [str(out)]
    if args.log is not None and log is not None:
        _atomic_write(Path(args.log), log.write_jsonl)
        outputs.append(args.log)
    _write_manifest(out, "fit", args, start, [args.data], outputs)
    if log is not None:
        best = max(log.restart_objectives)
        print(
            f"fit {args.method}: objective {best:.6g}, "
            f"converged={log.converged}, iterations={log.n_iters}"
        )
    else:
        print(f"fit {args.method}: m={bank.m} filters")
    return 0


def _cmd_eval(args) -> int:
    start = time.perf_counter()
    train = load_dataset(args.data)
    test = load_dataset(args.test) if args.test else train
    bank, _, filter_sigma2 = load_filters(args.filters)
    ridge = args.ridge if args.ridge is not None else filter_sigma2
    if args.gaussian_resample:
        report = gaussian_resample_eval(
            train, test, bank, classifier=args.classifier, seed=args.seed,
            ridge=ridge, k=args.k,
        )
    elif args.classifier == "qda":
        model = qda_fit(train, bank, ridge=ridge)
        report = qda_evaluate(model, test, bank)
        report.seed = args.seed
    else:
        report = knn_predict(train, test, bank, k=args.k)
        report.seed = args.seed
    out = Path(args.out)
    _atomic_write(out, report.save)
    inputs = [args.data, args.filters] + ([args.test] if args.test else [])
    _write_manifest(out, "eval", args, start, inputs, [str(out)])
    print(f"{report.classifier} accuracy: {report.accuracy:.4f} on {report.n_test}")
    return 0


def _cmd_distances(args) -> int:
    start = time.perf_counter()
    ens = load_stats(args.stats)
    kind = METRIC_KINDS[args.metric]
    covs = (
        ens.second_moments
        if kind is DistanceKind.FISHER_RAO_ZERO_MEAN
        else ens.covariances
    )
    params = [GaussianParams(ens.means[i], covs[i]) for i in range(ens.n_classes)]
    lines = ["class_i,class_j,distance"]
    for i in range(ens.n_classes):
        for j in range(i + 1, ens.n_classes):
            lines.append(f"{i},{j},{distance(kind, params[i], params[j])!r}")
    out = Path(args.out)
    _atomic_write(
        out, lambda tmp: tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    )
    _write_manifest(out, "distances", args, start, [args.stats], [str(out)])
    return 0


def _cmd_sweep(args) -> int:
    start = time.perf_counter()
    ens = load_stats(args.stats) if args.stats else None
    if args.name == "co_gap_dataset" and ens is None:
        raise UsageError("sweep co_gap_dataset requires --stats")
    table = sweep_grid(args.name, seed=args.seed, ens=ens, mc_samples=args.mc_samples)
    out = Path(args.out)
    _atomic_write(out, table.write_csv)
    inputs = [args.stats] if args.stats else []
    _write_manifest(out, "sweep", args, start, inputs, [str(out)])
    return 0


def _cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = manifest["command"]
    flags = manifest["flags"]
    argv = [command]
    for key, value in flags.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return main(argv)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqfa",
        description="Learn and evaluate discriminative linear features "
        "from class-conditional Gaussian statistics.",
    )
    parser.add_argument("--version", action="version", version=f"sqfa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toygen", help="generate a toy dataset CSV + ground truth")
    p.add_argument("--name", required=True, choices=TOY_NAMES)
    p.add_argument("--samples", type=int, default=500, help="samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset CSV path")
    p.set_defaults(func=_cmd_toygen)

    p = sub.add_parser("fit", help="learn filters from a dataset CSV")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument(
        "--method",
        required=True,
        choices=["sqfa", "smsqfa", "sqfa-b", "sqfa-h", "pca", "lda", "ama"],
    )
    p.add_argument("--m", type=int, required=True, help="number of filters")
    p.add_argument("--sigma2", type=float, default=0.01, help="covariance ridge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--pairs", action="store_true", help="learn filters in pairs")
    p.add_argument("--shrinkage", type=float, default=0.1, help="lda shrinkage")
    p.add_argument("--out", required=True, help="output filter JSON path")
    p.add_argument("--log", default=None, help="optional train-log JSONL path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="evaluate filters with a classifier")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--test", default=None, help="test dataset CSV (default: --data)")
    p.add_argument("--filters", required=True, help="filter JSON path")
    p.add_argument("--classifier", default="qda", choices=["qda", "knn"])
    p.add_argument(
        "--ridge",
        type=float,
        default=None,
        help="qda covariance ridge (default: the filters' training sigma2)",
    )
    p.add_argument("--k", type=int, default=3, help="knn neighbor count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--gaussian-resample",
        action="store_true",
        help="evaluate on Gaussian-resampled test data",
    )
    p.add_argument("--out", required=True, help="output metrics JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("distances", help="pairwise class distances from stats JSON")
    p.add_argument("--stats", required=True, help="statistics JSON path")
    p.add_argument("--metric", required=True, choices=sorted(METRIC_KINDS))
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_distances)

    p = sub.add_parser("sweep", help="emit a validation sweep table CSV")
    p.add_argument("--name", required=True, choices=SWEEP_NAMES)
    p.add_argument("--stats", default=None, help="stats JSON (co_gap_dataset only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, UnknownSpec, UnknownSweep) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SqfaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
