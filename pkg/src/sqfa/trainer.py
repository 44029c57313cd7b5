"""Filter learning by maximizing pairwise class dissimilarities.

The objective is the sum of a chosen dissimilarity over all ordered class
pairs in feature space. The ordered-pair (double-counted) convention is
kept: it rescales the objective by 2 without changing the argmax, and is
stated here so logged objective values are comparable.

The unit-norm column constraint is handled by trivialization: optimize an
unconstrained matrix W, map each column w -> w/||w||, and chain the
gradient through the normalization. Restarts are seeded seed + index and
may run anywhere; within one restart everything is deterministic.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distances import DistanceKind, GaussianParams, distance, distance_and_gradient
from .errors import DegenerateDistance, DimensionMismatch, NoImprovingStep, ParseError
from .optim import IterationRecord, MinimizeResult, minimize_lbfgs
from .stats import ClassEnsemble, FeatureStats, project_statistics

UNIT_NORM_TOL = 1e-10


@dataclass(frozen=True)
class FilterBank:
    """n x m projection matrix with unit-norm columns, one filter per column."""

    filters: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.filters, dtype=float)
        if f.ndim != 2:
            raise DimensionMismatch(f"filters must be 2-d, got shape {f.shape}")
        n, m = f.shape
        if m > n:
            raise DimensionMismatch(f"more filters ({m}) than data dims ({n})")
        norms = np.linalg.norm(f, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError(
                f"filter columns must have unit norm, got norms {norms}"
            )
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "filters", f)

    @property
    def n(self) -> int:
        return self.filters.shape[0]

    @property
    def m(self) -> int:
        return self.filters.shape[1]

    @classmethod
    def from_unconstrained(cls, w: np.ndarray) -> "FilterBank":
        w = np.asarray(w, dtype=float)
        return cls(w / np.linalg.norm(w, axis=0))


@dataclass
class TrainConfig:
    """Objective choice and optimization settings for one fit."""

    kind: DistanceKind
    sigma2: float
    m: int
    seed: int = 0
    restarts: int = 20
    tol: float = 1e-6
    max_iters: int = 500
    sequential_pairs: bool = False
    lbfgs_memory: int = 10

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.restarts < 1 or self.max_iters < 1 or self.lbfgs_memory < 1:
            raise ValueError("restarts, max_iters and lbfgs_memory must be >= 1")
        if self.sequential_pairs and self.m % 2 != 0:
            raise ValueError("m must be even when sequential_pairs is set")


@dataclass
class TrainLog:
    """Per-iteration trace of the winning restart plus run summary."""

    iterations: list[IterationRecord]
    converged: bool
    n_iters: int
    wall_time: float
    restart_objectives: list[float]
    selected_restart: int
    line_search_failed: bool = False
    stage_logs: list["TrainLog"] = field(default_factory=list)

    def write_jsonl(self, path) -> None:
        """One JSON record per iteration, then a final summary record."""
        lines = [
            json.dumps(
                {
                    "iteration": rec.iteration,
                    "objective": rec.objective,
                    "grad_norm": rec.grad_norm,
                    "step_size": rec.step_size,
                }
            )
            for rec in self.iterations
        ]
        lines.append(
            json.dumps(
                {
                    "event": "final",
                    "converged": self.converged,
                    "iterations": self.n_iters,
                    "wall_time": self.wall_time,
                    "restart_objectives": self.restart_objectives,
                    "selected_restart": self.selected_restart,
                }
            )
        )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _as_filter_array(filters) -> np.ndarray:
    if isinstance(filters, FilterBank):
        return filters.filters
    f = np.asarray(filters, dtype=float)
    if f.ndim != 2:
        raise DimensionMismatch(f"filters must be 2-d, got shape {f.shape}")
    return f


def _class_params(stats: FeatureStats, kind: DistanceKind) -> list[GaussianParams]:
    # the zero-mean objective discriminates on second moments
    covs = (
        stats.second_moments
        if kind is DistanceKind.FISHER_RAO_ZERO_MEAN
        else stats.covariances
    )
    return [
        GaussianParams(stats.means[i], covs[i]) for i in range(stats.means.shape[0])
    ]


def pairwise_objective(kind: DistanceKind, params: list[GaussianParams]) -> float:
    """Sum of the pairwise dissimilarity over all ordered class pairs."""
    c = len(params)
    total = 0.0
    for i in range(c):
        for j in range(i + 1, c):
            total += distance(kind, params[i], params[j])
    return 2.0 * total


def _pairwise_value_and_class_grads(kind: DistanceKind, params):
    """Ordered-pair objective plus accumulated per-class (mean, cov) gradients.

    Pairs closer than the degeneracy tolerance contribute zero, so one
    coincident pair cannot poison the whole gradient.
    """
    c = len(params)
    m = params[0].dim
    total = 0.0
    gmu = np.zeros((c, m))
    gcov = np.zeros((c, m, m))
    for i in range(c):
        for j in range(i + 1, c):
            try:
                d, (dmu_i, dcov_i, dmu_j, dcov_j) = distance_and_gradient(
                    kind, params[i], params[j]
                )
            except DegenerateDistance:
                continue
            total += d
            gmu[i] += dmu_i
            gcov[i] += dcov_i
            gmu[j] += dmu_j
            gcov[j] += dcov_j
    return 2.0 * total, 2.0 * gmu, 2.0 * gcov


def objective(filters, ens: ClassEnsemble, cfg: TrainConfig) -> float:
    """Objective value at the given filters (FilterBank or plain array)."""
    f = _as_filter_array(filters)
    stats = project_statistics(ens, f, cfg.sigma2)
    return pairwise_objective(cfg.kind, _class_params(stats, cfg.kind))


def objective_gradient(filters, ens: ClassEnsemble, cfg: TrainConfig) -> np.ndarray:
    """Gradient of objective() with respect to the (unnormalized) filters."""
    _, grad = objective_value_and_gradient(filters, ens, cfg)
    return grad


def objective_value_and_gradient(filters, ens: ClassEnsemble, cfg: TrainConfig):
    """Fused objective and filter gradient.

    Chains the per-class statistic gradients through mu = F^T gamma and
    cov = F^T X F (d/dF of tr(G F^T X F) is 2 X F G for symmetric G, X).
    """
    f = _as_filter_array(filters)
    stats = project_statistics(ens, f, cfg.sigma2)
    params = _class_params(stats, cfg.kind)
    total, gmu, gcov = _pairwise_value_and_class_grads(cfg.kind, params)

    use_moments = cfg.kind is DistanceKind.FISHER_RAO_ZERO_MEAN
    base = ens.second_moments if use_moments else ens.covariances
    grad = np.zeros_like(f)
    for i in range(len(params)):
        grad += 2.0 * base[i] @ f @ gcov[i]
        if not use_moments:
            grad += np.outer(ens.means[i], gmu[i])
    return total, grad


def orthogonalize(bank: FilterBank) -> FilterBank:
    """Post-hoc QR orthogonalization, for reporting only.

    The span is unchanged; the objective value generally is not (under
    regularization the objective is not invariant to within-span maps).
    """
    q, r = np.linalg.qr(bank.filters)
    q = q * np.sign(np.diag(r))
    return FilterBank(q)


def fit(ens: ClassEnsemble, cfg: TrainConfig) -> tuple[FilterBank, TrainLog]:
    """Learn cfg.m filters from class statistics.

    Runs cfg.restarts seeded initializations and returns the bank from the
    restart with the highest final objective (ties go to the lowest
    restart index). Deterministic given cfg.seed.

    Raises
    ------
    NoImprovingStep
        If every restart's line search fails at its first iteration. The
        partial log is attached to the exception as ``.log``.
    """
    def value_and_grad(full):
        return objective_value_and_gradient(full, ens, cfg)

    return fit_filters(value_and_grad, ens.n_dims, cfg)


def fit_sequential_pairs(ens: ClassEnsemble, cfg: TrainConfig) -> tuple[FilterBank, TrainLog]:
    """Learn filters two at a time, freezing earlier pairs.

    Each stage maximizes the full objective over the new pair with all
    previously learned columns held fixed, so filter pairs come out
    ordered by how much class separation they add. Stage s draws restart
    seeds seed + s*restarts + index; stage 0 therefore reproduces a plain
    m=2 fit with the same seed exactly.
    """

    def value_and_grad(full):
        return objective_value_and_gradient(full, ens, cfg)

    return fit_filters(value_and_grad, ens.n_dims, cfg, staged=True)


def fit_filters(
    value_and_grad, n: int, cfg: TrainConfig, staged: bool | None = None
) -> tuple[FilterBank, TrainLog]:
    """Generic multi-restart filter fit for any differentiable objective.

    ``value_and_grad(F)`` must return the objective to maximize and its
    gradient with respect to the full n x k filter matrix. Used by the
    pairwise-dissimilarity trainer and by the posterior-based baseline, so
    both share the trivialization, restart, and staging behavior.
    """
    if staged is None:
        staged = cfg.sequential_pairs
    if cfg.m > n:
        raise DimensionMismatch(f"cannot learn {cfg.m} filters in {n} dimensions")
    if not staged:
        return _optimize_block(
            value_and_grad, n, cfg, fixed=np.zeros((n, 0)), k=cfg.m,
            seed_base=cfg.seed,
        )
    if cfg.m % 2 != 0:
        raise ValueError("sequential-pairs fitting requires an even filter count")
    start = time.perf_counter()
    fixed = np.zeros((n, 0))
    stage_logs: list[TrainLog] = []
    for stage in range(cfg.m // 2):
        bank, log = _optimize_block(
            value_and_grad, n, cfg, fixed=fixed, k=2,
            seed_base=cfg.seed + stage * cfg.restarts,
        )
        stage_logs.append(log)
        fixed = bank.filters
    final = stage_logs[-1]
    combined = TrainLog(
        iterations=final.iterations,
        converged=all(log.converged for log in stage_logs),
        n_iters=sum(log.n_iters for log in stage_logs),
        wall_time=time.perf_counter() - start,
        restart_objectives=final.restart_objectives,
        selected_restart=final.selected_restart,
        line_search_failed=any(log.line_search_failed for log in stage_logs),
        stage_logs=stage_logs,
    )
    return FilterBank(fixed), combined


def _optimize_block(
    value_and_grad,
    n: int,
    cfg: TrainConfig,
    fixed: np.ndarray,
    k: int,
    seed_base: int,
) -> tuple[FilterBank, TrainLog]:
    """Optimize k new unit-norm columns appended to a fixed prefix."""
    n_fixed = fixed.shape[1]
    start = time.perf_counter()

    def neg_value_and_grad(wflat: np.ndarray):
        w = wflat.reshape(n, k)
        norms = np.linalg.norm(w, axis=0)
        cols = w / norms
        full = np.hstack([fixed, cols])
        value, grad_full = value_and_grad(full)
        gcols = grad_full[:, n_fixed:]
        # normalization chain rule: project out the radial component
        gw = (gcols - cols * np.sum(cols * gcols, axis=0)) / norms
        return -value, -gw.ravel()

    results: list[MinimizeResult] = []
    for idx in range(cfg.restarts):
        rng = np.random.default_rng(seed_base + idx)
        w0 = rng.standard_normal((n, k))
        w0 /= np.linalg.norm(w0, axis=0)
        results.append(
            minimize_lbfgs(
                neg_value_and_grad,
                w0.ravel(),
                tol=cfg.tol,
                max_iters=cfg.max_iters,
                memory=cfg.lbfgs_memory,
            )
        )

    finals = [-res.fun for res in results]
    best = int(np.argmax(finals))
    winner = results[best]
    log = TrainLog(
        iterations=[
            IterationRecord(r.iteration, -r.objective, r.grad_norm, r.step_size)
            for r in winner.history
        ],
        converged=winner.converged,
        n_iters=winner.n_iters,
        wall_time=time.perf_counter() - start,
        restart_objectives=finals,
        selected_restart=best,
        line_search_failed=winner.line_search_failed,
    )
    if all(res.first_step_failed for res in results):
        exc = NoImprovingStep(
            "line search failed at initialization in every restart"
        )
        exc.log = log
        raise exc
    w_best = winner.x.reshape(n, k)
    cols = w_best / np.linalg.norm(w_best, axis=0)
    return FilterBank(np.hstack([fixed, cols])), log


# ---------------------------------------------------------------------------
# Filter JSON: {"n", "m", "sigma2", "kind", "filters": row-major n x m}
# ---------------------------------------------------------------------------


def save_filters(bank: FilterBank, path, kind: str, sigma2: float) -> None:
    payload = {
        "n": bank.n,
        "m": bank.m,
        "sigma2": float(sigma2),
        "kind": kind,
        "filters": bank.filters.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_filters(path) -> tuple[FilterBank, str, float]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    try:
        filters = np.asarray(payload["filters"], dtype=float)
        n, m = int(payload["n"]), int(payload["m"])
        kind = str(payload["kind"])
        sigma2 = float(payload["sigma2"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad filter file ({exc})") from None
    if filters.shape != (n, m):
        raise ParseError(
            f"{path}: filters shape {filters.shape} does not match n={n}, m={m}"
        )
    return FilterBank(filters), kind, sigma2
