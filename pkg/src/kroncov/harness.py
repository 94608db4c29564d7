"""Benchmark harness: generate, fit over a penalty grid, score, persist.

run_experiment walks the (method, seed) grid of an ExperimentSpec. Every
cell draws its own dataset from the seeded process, so cells are fully
independent: parallel workers share no state and an interrupted grid
resumes by skipping the cells already on disk. Each finished cell lands as
one JSON file written atomically (temp file + rename); a final pass merges
the cells into results.csv.

Penalty selection follows an error-minimization protocol. Each C in the
grid maps to a penalty through the method's rate rule, every candidate is
fitted, and the one with the lowest log-relative-Frobenius error against
the ground truth wins (covariance-side methods compare against the true
covariance, the rest against the true precision). The l1-regression
baseline has no ground-truth matrix to compare with, so it selects on
training-set forecast error. Runtime-only experiments skip selection and
fit a single candidate at C = 1.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import METHODS, EstimatorConfig, lambda_from_rate
from .evaluation import (
    SupportPattern,
    extract_support,
    forward_predict,
    frob_error,
    ind_lasso,
    mcc,
    nrmse,
    predictor_blocks,
)
from .formats import write_pgm
from .generators import ProcessSpec, build_process, sample_process
from .multiway import MultiwayTensor
from .structured import StructuredMatrix

METRIC_NAMES = ("fnorm", "mcc", "nrmse", "runtime")
DEFAULT_C_GRID = tuple(float(c) for c in np.logspace(-2.0, 1.0, 8))
WORKERS_ENV = "KRONCOV_WORKERS"
IND_LASSO = "ind_lasso"


# experiment description ----------------------------------------------------


@dataclass(frozen=True)
class MethodPlan:
    """One method's fitting plan.

    ``lam`` pins the penalty outright (scalar, or one value per mode);
    otherwise ``c_grid`` scales the method's rate rule, defaulting to
    DEFAULT_C_GRID. ``cfg`` overrides solver settings, and ``fit_dims``
    overrides the experiment-level mode grouping for this method alone
    (pair-structured methods like kpca need two modes while the rest fit
    the native tensor shape). The special name ``ind_lasso`` runs the
    per-coordinate l1-regression forecaster instead of a covariance model;
    it only produces nrmse and runtime.
    """

    name: str
    lam: object = None
    c_grid: tuple = None
    cfg: EstimatorConfig = None
    fit_dims: tuple = None

    def __post_init__(self):
        name = str(self.name).replace("-", "_")
        if name not in METHODS and name != IND_LASSO:
            known = ", ".join(sorted(METHODS) + [IND_LASSO])
            raise ValueError(f"unknown method {self.name!r}; known: {known}")
        object.__setattr__(self, "name", name)
        if self.c_grid is not None:
            grid = tuple(float(c) for c in self.c_grid)
            if not grid or any(c <= 0 for c in grid):
                raise ValueError("c_grid must be positive and nonempty")
            object.__setattr__(self, "c_grid", grid)
        if self.fit_dims is not None:
            dims = tuple(int(d) for d in self.fit_dims)
            if any(d < 1 for d in dims):
                raise ValueError("fit_dims entries must be positive")
            object.__setattr__(self, "fit_dims", dims)


@dataclass(frozen=True)
class PredictionPlan:
    """Forecast the last frame of each held-out tensor from the others.

    p is the number of frames (the trailing tensor mode) and q the
    coordinates per frame; holdout is the fraction of replicates reserved
    as the test split (at least one).
    """

    p: int
    q: int
    holdout: float = 0.2

    def __post_init__(self):
        if int(self.p) < 2 or int(self.q) < 1:
            raise ValueError("need p >= 2 frames of dimension q >= 1")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))
        if not 0.0 < float(self.holdout) < 1.0:
            raise ValueError("holdout must be a fraction in (0, 1)")
        object.__setattr__(self, "holdout", float(self.holdout))


@dataclass(frozen=True)
class ExperimentSpec:
    """A full benchmark grid: process, replicate seeds, methods, metrics.

    fit_dims reinterprets each replicate's modes before fitting (the flat
    colexicographic values are unchanged, so grouping adjacent modes is
    exact). The comparison studies use it to treat space-time tensors as
    two-mode (space, time) data.
    """

    process: object
    n_samples: int
    seeds: tuple
    methods: tuple
    metrics: tuple = ("fnorm",)
    output_dir: str = "results"
    prediction: PredictionPlan = None
    fit_dims: tuple = None

    def __post_init__(self):
        if isinstance(self.process, dict):
            object.__setattr__(self, "process", ProcessSpec(**self.process))
        if not isinstance(self.process, ProcessSpec):
            raise TypeError("process must be a ProcessSpec (or its kwargs)")
        if int(self.n_samples) < 1:
            raise ValueError("n_samples must be positive")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ValueError("need at least one seed")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
        object.__setattr__(self, "seeds", seeds)
        methods = tuple(self.methods)
        if not methods:
            raise ValueError("need at least one method")
        names = [m.name for m in methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique within a spec")
        object.__setattr__(self, "methods", methods)
        metrics = tuple(self.metrics)
        bad = [m for m in metrics if m not in METRIC_NAMES]
        if bad or not metrics:
            raise ValueError(
                f"metrics must be a nonempty subset of {METRIC_NAMES}"
            )
        object.__setattr__(self, "metrics", metrics)
        if "nrmse" in metrics and self.prediction is None:
            raise ValueError("nrmse requires a prediction plan")
        if self.fit_dims is not None:
            fit_dims = tuple(int(d) for d in self.fit_dims)
            if any(d < 1 for d in fit_dims):
                raise ValueError("fit_dims entries must be positive")
            object.__setattr__(self, "fit_dims", fit_dims)


@dataclass(frozen=True)
class ResultRecord:
    """One scored metric for one (method, seed) cell."""

    method: str
    seed: int
    lambda_used: object
    metric: str
    value: float
    wall_time_seconds: float
    iterations: int
    converged: bool


# ground-truth comparison sides ---------------------------------------------


class _TruthSides:
    """Dense views of the ground truth, built once and shared by cells."""

    def __init__(self, truth):
        self.truth = truth
        self._omega = None
        self._sigma = None
        self._support = None

    def _precision(self):
        if self.truth.precision is None:
            raise ValueError(
                "ground truth too large for dense comparison metrics; "
                "restrict metrics to runtime"
            )
        return self.truth.precision

    def omega(self):
        if self._omega is None:
            self._omega = self._precision().toarray()
        return self._omega

    def sigma(self):
        if self._sigma is None:
            inv = np.linalg.inv(self.omega())
            self._sigma = (inv + inv.T) / 2
        return self._sigma

    def side(self, estimates):
        return self.omega() if estimates == "precision" else self.sigma()

    def support(self):
        if self._support is None:
            if self.truth.support is None:
                raise ValueError("ground truth support unavailable")
            coo = self.truth.support.tocoo()
            pairs = frozenset(
                (int(i), int(j))
                for i, j in zip(coo.row, coo.col)
                if i != j
            )
            self._support = SupportPattern(
                dim=self.truth.d, offdiag_nonzeros=pairs, threshold=0.0
            )
        return self._support


# cell execution ------------------------------------------------------------


def _split_samples(data, prediction):
    if prediction is None:
        return data, []
    n = len(data)
    n_test = max(1, int(round(prediction.holdout * n)))
    if n_test >= n:
        raise ValueError("holdout fraction leaves no training data")
    return data[: n - n_test], data[n - n_test :]


def _history_target(tensor, p, q):
    # time is the trailing (slowest) mode, so the colexicographic flat is
    # frame-major: the last q entries are the final frame
    flat = tensor.values
    cut = (p - 1) * q
    return flat[:cut], flat[cut:]


def _stack_splits(tensors, p, q):
    pairs = [_history_target(t, p, q) for t in tensors]
    hists = np.stack([h for h, _ in pairs])
    targets = np.stack([t for _, t in pairs])
    return hists, targets


def _dense_estimate(fit):
    model = fit.model
    if isinstance(model, StructuredMatrix):
        return model.materialize()
    return np.asarray(model, dtype=float)


def _explicit_lams(name, dims, lam):
    if np.isscalar(lam):
        lam = float(lam)
        return [lam] if name in ("glasso", "kpca") else [lam] * len(dims)
    return [float(v) for v in lam]


def _candidates(plan, dims, n_train, runtime_only):
    """Yield (c, lams) penalty candidates for a registered method."""
    mspec = METHODS[plan.name]
    if plan.lam is not None:
        return [(None, _explicit_lams(plan.name, dims, plan.lam))]
    if mspec.rate_rule is None:
        return [(None, None)]
    grid = plan.c_grid
    if grid is None:
        grid = (1.0,) if runtime_only else DEFAULT_C_GRID
    return [
        (c, lambda_from_rate(mspec.rate_rule, dims, n_train, c))
        for c in grid
    ]


def _forecast_nrmse(blocks, tensors, p, q):
    hists, targets = _stack_splits(tensors, p, q)
    preds = np.stack([forward_predict(blocks, h) for h in hists])
    return nrmse(preds, targets)


def _run_model_cell(dims, sides, spec, plan, seed, train, test):
    mspec = METHODS[plan.name]
    cfg = plan.cfg or EstimatorConfig()
    runtime_only = set(spec.metrics) == {"runtime"}
    needs_fnorm = not runtime_only

    best = None  # (criterion, lams, fit, dense estimate)
    for _, lams in _candidates(plan, dims, len(train), runtime_only):
        fit = mspec.fit(train, dims, lams, cfg)
        if needs_fnorm:
            est = _dense_estimate(fit)
            crit = frob_error(est, sides.side(mspec.estimates))
        else:
            est, crit = None, 0.0
        if best is None or (np.isfinite(crit) and crit < best[0]):
            best = (crit, lams, fit, est)

    crit, lams, fit, est = best
    values = {}
    if "fnorm" in spec.metrics:
        values["fnorm"] = float(crit)
    if "mcc" in spec.metrics:
        if mspec.supports_mcc:
            values["mcc"] = mcc(extract_support(est), sides.support())
        else:
            values["mcc"] = None
    if "nrmse" in spec.metrics:
        if mspec.estimates == "precision":
            blocks = predictor_blocks(
                est if est is not None else _dense_estimate(fit),
                spec.prediction.p,
                spec.prediction.q,
            )
            values["nrmse"] = float(
                _forecast_nrmse(
                    blocks, test, spec.prediction.p, spec.prediction.q
                )
            )
        else:
            values["nrmse"] = None
    if "runtime" in spec.metrics:
        values["runtime"] = float(fit.wall_time_seconds)

    if lams is None:
        lam_used = None
    elif plan.name in ("glasso", "kpca"):
        lam_used = float(lams[0])
    else:
        lam_used = [float(v) for v in lams]
    return {
        "method": plan.name,
        "seed": seed,
        "failed": False,
        "lambda_used": lam_used,
        "wall_time_seconds": float(fit.wall_time_seconds),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "values": values,
    }


def _run_ind_cell(spec, plan, seed, train, test):
    if spec.prediction is None:
        raise ValueError("ind_lasso needs a prediction plan")
    p, q = spec.prediction.p, spec.prediction.q
    hists, targets = _stack_splits(train, p, q)
    n, m = hists.shape
    rate = math.sqrt(math.log(max(m, 2)) / n)

    if plan.lam is not None:
        lam_grid = [float(plan.lam)]
    else:
        grid = plan.c_grid
        if grid is None:
            grid = (
                (1.0,)
                if set(spec.metrics) == {"runtime"}
                else DEFAULT_C_GRID
            )
        lam_grid = [c * rate for c in grid]

    best = None  # (criterion, lam, predictor, wall)
    for lam in lam_grid:
        t0 = time.perf_counter()
        predictor = ind_lasso(hists, targets, lam)
        wall = time.perf_counter() - t0
        crit = (
            nrmse(hists @ predictor.coef.T, targets)
            if len(lam_grid) > 1
            else 0.0
        )
        if best is None or (np.isfinite(crit) and crit < best[0]):
            best = (crit, lam, predictor, wall)

    _, lam, predictor, wall = best
    values = {}
    if "fnorm" in spec.metrics:
        values["fnorm"] = None
    if "mcc" in spec.metrics:
        values["mcc"] = None
    if "nrmse" in spec.metrics:
        test_hists, test_targets = _stack_splits(test, p, q)
        values["nrmse"] = float(
            nrmse(test_hists @ predictor.coef.T, test_targets)
        )
    if "runtime" in spec.metrics:
        values["runtime"] = float(wall)
    return {
        "method": IND_LASSO,
        "seed": seed,
        "failed": False,
        "lambda_used": float(lam),
        "wall_time_seconds": float(wall),
        "iterations": 0,
        "converged": True,
        "values": values,
    }


def _run_cell(truth, sides, spec, plan, seed):
    data = sample_process(truth, spec.n_samples, seed)
    dims = truth.dims
    fit_dims = plan.fit_dims if plan.fit_dims is not None else spec.fit_dims
    if fit_dims is not None:
        dims = fit_dims
        data = [MultiwayTensor(dims, t.values) for t in data]
    train, test = _split_samples(data, spec.prediction)
    if plan.name == IND_LASSO:
        return _run_ind_cell(spec, plan, seed, train, test)
    return _run_model_cell(dims, sides, spec, plan, seed, train, test)


def _cell_entry(spec, plan, seed):
    # parallel workers rebuild the (deterministic) truth themselves rather
    # than shipping dense sides across process boundaries
    truth = build_process(spec.process)
    sides = _TruthSides(truth)
    try:
        return _run_cell(truth, sides, spec, plan, seed)
    except Exception as exc:  # recorded, grid continues
        return {
            "method": plan.name,
            "seed": seed,
            "failed": True,
            "error": f"{type(exc).__name__}: {exc}",
        }


# persistence ---------------------------------------------------------------


def _cell_path(output_dir, plan, seed):
    return os.path.join(output_dir, "cells", f"{plan.name}_s{seed}.json")


def _load_cell(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, ValueError):
        return None
    if not isinstance(payload, dict) or "failed" not in payload:
        return None
    if not payload["failed"] and "values" not in payload:
        return None
    return payload


def _write_cell(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _records_from_cells(spec, cells):
    records = []
    for plan in spec.methods:
        for seed in spec.seeds:
            payload = cells[(plan.name, seed)]
            if payload["failed"]:
                continue
            for metric in METRIC_NAMES:
                if metric not in spec.metrics:
                    continue
                value = payload["values"].get(metric)
                if value is None:
                    continue
                lam = payload["lambda_used"]
                records.append(
                    ResultRecord(
                        method=payload["method"],
                        seed=payload["seed"],
                        lambda_used=tuple(lam)
                        if isinstance(lam, list)
                        else lam,
                        metric=metric,
                        value=float(value),
                        wall_time_seconds=payload["wall_time_seconds"],
                        iterations=payload["iterations"],
                        converged=payload["converged"],
                    )
                )
    return records


def _write_csv(path, records):
    header = (
        "method,seed,metric,value,lambda_used,"
        "wall_time_seconds,iterations,converged"
    )
    lines = [header]
    for r in records:
        lam = json.dumps(
            list(r.lambda_used)
            if isinstance(r.lambda_used, tuple)
            else r.lambda_used
        ).replace(", ", ";")
        lines.append(
            f"{r.method},{r.seed},{r.metric},{r.value!r},{lam},"
            f"{r.wall_time_seconds!r},{r.iterations},{r.converged}"
        )
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def failed_cells(output_dir):
    """Names of recorded cell failures under output_dir, sorted."""
    cell_dir = os.path.join(output_dir, "cells")
    if not os.path.isdir(cell_dir):
        return []
    out = []
    for name in sorted(os.listdir(cell_dir)):
        if not name.endswith(".json"):
            continue
        payload = _load_cell(os.path.join(cell_dir, name))
        if payload is not None and payload["failed"]:
            out.append(name[: -len(".json")])
    return out


# the grid runner -----------------------------------------------------------


def run_experiment(spec):
    """Run the full (method, seed) grid and return the merged records.

    Finished cells found on disk are reused, so a killed run resumes where
    it stopped. Cell failures are recorded in their JSON payloads and
    simply produce no records; inspect failed_cells() or the bench exit
    code to detect them. Set the KRONCOV_WORKERS environment variable above
    1 to fan cells out across processes.
    """
    os.makedirs(os.path.join(spec.output_dir, "cells"), exist_ok=True)
    truth = build_process(spec.process)
    dims = truth.dims if spec.fit_dims is None else spec.fit_dims
    if int(np.prod(dims)) != truth.d:
        raise ValueError(
            f"fit_dims {spec.fit_dims} does not cover the process size "
            f"{truth.d}"
        )
    for plan in spec.methods:
        if plan.fit_dims is not None and int(np.prod(plan.fit_dims)) != truth.d:
            raise ValueError(
                f"method {plan.name!r} fit_dims {plan.fit_dims} does not "
                f"cover the process size {truth.d}"
            )
    if spec.prediction is not None:
        p_want = dims[-1]
        q_want = int(np.prod(dims[:-1]))
        if (spec.prediction.p, spec.prediction.q) != (p_want, q_want):
            raise ValueError(
                f"prediction plan (p={spec.prediction.p}, "
                f"q={spec.prediction.q}) does not match process frames "
                f"(p={p_want}, q={q_want})"
            )
    sides = _TruthSides(truth)

    cells = {}
    pending = []
    for plan in spec.methods:
        for seed in spec.seeds:
            path = _cell_path(spec.output_dir, plan, seed)
            payload = _load_cell(path)
            if payload is None:
                pending.append((plan, seed, path))
            else:
                cells[(plan.name, seed)] = payload

    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    if workers == 1 or len(pending) <= 1:
        for plan, seed, path in pending:
            payload = _cell_entry_shared(truth, sides, spec, plan, seed)
            _write_cell(path, payload)
            cells[(plan.name, seed)] = payload
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (pool.submit(_cell_entry, spec, plan, seed), path, plan, seed)
                for plan, seed, path in pending
            ]
            for future, path, plan, seed in futures:
                payload = future.result()
                _write_cell(path, payload)
                cells[(plan.name, seed)] = payload

    records = _records_from_cells(spec, cells)
    _write_csv(os.path.join(spec.output_dir, "results.csv"), records)
    return records


def _cell_entry_shared(truth, sides, spec, plan, seed):
    try:
        return _run_cell(truth, sides, spec, plan, seed)
    except Exception as exc:  # recorded, grid continues
        return {
            "method": plan.name,
            "seed": seed,
            "failed": True,
            "error": f"{type(exc).__name__}: {exc}",
        }


# summary tables and figures ------------------------------------------------


def _summaries(records):
    methods = []
    metrics = []
    groups = {}
    for r in records:
        if r.method not in methods:
            methods.append(r.method)
        if r.metric not in metrics:
            metrics.append(r.metric)
        groups.setdefault((r.method, r.metric), []).append(r.value)
    metrics.sort(key=METRIC_NAMES.index)
    stats = {}
    for key, values in groups.items():
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        se = (
            float(arr.std(ddof=1) / math.sqrt(arr.size))
            if arr.size > 1
            else 0.0
        )
        stats[key] = (mean, se, arr.size)
    return methods, metrics, stats


def emit_table(records, path, format="csv", transpose=False):
    """Aggregate records to per-(method, metric) mean and standard error.

    The default layout is one row per (method, metric); transpose puts
    methods in columns with one mean row and one SE row per metric,
    matching the side-by-side comparison layout. Returns the path.
    """
    if not records:
        raise ValueError("no records to tabulate")
    if format not in ("csv", "json"):
        raise ValueError(f"unknown table format {format!r}")
    methods, metrics, stats = _summaries(records)

    if format == "json":
        if transpose:
            body = {
                metric: {
                    m: {
                        "mean": stats[(m, metric)][0],
                        "se": stats[(m, metric)][1],
                        "n": stats[(m, metric)][2],
                    }
                    for m in methods
                    if (m, metric) in stats
                }
                for metric in metrics
            }
        else:
            body = {
                m: {
                    metric: {
                        "mean": stats[(m, metric)][0],
                        "se": stats[(m, metric)][1],
                        "n": stats[(m, metric)][2],
                    }
                    for metric in metrics
                    if (m, metric) in stats
                }
                for m in methods
            }
        text = json.dumps(body, indent=1, sort_keys=False) + "\n"
    elif transpose:
        lines = ["metric," + ",".join(methods)]
        for metric in metrics:
            for kind, pick in (("mean", 0), ("se", 1)):
                row = [f"{metric}_{kind}"]
                for m in methods:
                    cell = stats.get((m, metric))
                    row.append("" if cell is None else repr(cell[pick]))
                lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
    else:
        lines = ["method,metric,mean,se,n"]
        for m in methods:
            for metric in metrics:
                cell = stats.get((m, metric))
                if cell is None:
                    continue
                lines.append(
                    f"{m},{metric},{cell[0]!r},{cell[1]!r},{cell[2]}"
                )
        text = "\n".join(lines) + "\n"

    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def emit_heatmap(m, path, zero_is_white=True, threshold=None):
    """Render a matrix (dense or structured) as a PGM heatmap at path."""
    if isinstance(m, StructuredMatrix):
        m = m.materialize()
    write_pgm(path, m, zero_is_white=zero_is_white, threshold=threshold)
    return path
