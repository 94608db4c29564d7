"""Command line front end.

Subcommands:

    generate  draw replicates from a synthetic process config (JSON) and
              write MWT1 tensor files plus a precision sidecar
    fit       fit one method to MWT1 data, writing factor CSVs + a summary
    eval      score fitted-result directories against a truth sidecar
    bench     run a full benchmark grid from a spec JSON
    heatmap   render a matrix file as a PGM image

Exit status is 0 on success; bench additionally requires that no grid cell
recorded a failure. Worker fan-out for bench grids is controlled by the
KRONCOV_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .estimators import METHODS, EstimatorConfig, lambda_from_rate
from .evaluation import extract_support, frob_error, mcc
from .formats import read_mwt, read_triplets, write_mwt, write_triplets
from .generators import PROCESS_NAMES, ProcessSpec, build_process, sample_process
from .harness import (
    ExperimentSpec,
    MethodPlan,
    PredictionPlan,
    emit_heatmap,
    emit_table,
    failed_cells,
    run_experiment,
)
from .structured import FactorSet, StructuredMatrix

_METHOD_FLAGS = ("glasso", "kp-ls", "kpca", "tlasso", "teralasso", "sg-palm")


def _fail(message):
    raise SystemExit(f"error: {message}")


def _process_from_dict(cfg):
    fields = {f.name for f in dataclasses.fields(ProcessSpec)}
    unknown = set(cfg) - fields
    if unknown:
        _fail(f"unknown process fields: {sorted(unknown)}")
    if "name" not in cfg:
        _fail(f"process config needs a name, one of {PROCESS_NAMES}")
    kwargs = dict(cfg)
    if "dims" in kwargs:
        kwargs["dims"] = tuple(int(d) for d in kwargs["dims"])
    return ProcessSpec(**kwargs)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        _fail(f"cannot read {path}: {exc}")
    except ValueError as exc:
        _fail(f"{path} is not valid JSON: {exc}")


# generate -------------------------------------------------------------------


def _cmd_generate(args):
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        _fail("generate config must be a JSON object")
    n = int(cfg.pop("n_samples", 1))
    seed = int(cfg.pop("seed", 0))
    spec = _process_from_dict(cfg)
    truth = build_process(spec)
    os.makedirs(args.out, exist_ok=True)
    data = sample_process(truth, n, seed)
    width = max(4, len(str(n - 1)))
    for i, tensor in enumerate(data):
        write_mwt(
            os.path.join(args.out, f"sample_{i:0{width}d}.mwt"), tensor
        )
    if truth.precision is not None:
        write_triplets(
            os.path.join(args.out, "truth_precision.txt"), truth.precision
        )
    else:
        print(
            "note: precision too large to materialize; no sidecar written",
            file=sys.stderr,
        )
    manifest = {
        "process": {
            **dataclasses.asdict(spec),
            "dims": list(spec.dims),
        },
        "tensor_dims": list(truth.dims),
        "n_samples": n,
        "seed": seed,
    }
    with open(os.path.join(args.out, "generate.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {n} tensors to {args.out}")
    return 0


# fit ------------------------------------------------------------------------


def _load_data(path):
    if os.path.isdir(path):
        names = sorted(
            n for n in os.listdir(path) if n.endswith(".mwt")
        )
        if not names:
            _fail(f"no .mwt files in {path}")
        return [read_mwt(os.path.join(path, n)) for n in names]
    return [read_mwt(path)]


def _parse_dims(text):
    try:
        dims = tuple(int(p) for p in text.split(","))
    except ValueError:
        _fail(f"--dims expects comma-separated integers, got {text!r}")
    if any(d < 1 for d in dims):
        _fail("--dims entries must be positive")
    return dims


def _cmd_fit(args):
    method = args.method.replace("-", "_")
    mspec = METHODS[method]
    data = _load_data(args.data)
    dims = _parse_dims(args.dims) if args.dims else data[0].dims
    if int(np.prod(dims)) != data[0].values.size:
        _fail(
            f"--dims {dims} does not match tensor size {data[0].values.size}"
        )

    if args.lam is not None and args.lambda_rule is not None:
        _fail("--lambda and --lambda-rule are mutually exclusive")
    if mspec.rate_rule is None:
        if args.lam is not None or args.lambda_rule is not None:
            _fail(f"{args.method} takes no penalty")
        lams = None
    elif args.lam is not None:
        parts = [float(p) for p in str(args.lam).split(",")]
        if len(parts) == 1:
            parts = (
                parts
                if method in ("glasso", "kpca")
                else parts * len(dims)
            )
        lams = parts
    elif args.lambda_rule is not None:
        lams = lambda_from_rate(
            mspec.rate_rule, dims, len(data), float(args.lambda_rule)
        )
    else:
        _fail(f"{args.method} needs --lambda or --lambda-rule C")

    cfg = EstimatorConfig(tol=args.tol, max_iter=args.max_iter)
    fit = mspec.fit(data, dims, lams, cfg)

    os.makedirs(args.out, exist_ok=True)
    files = {}
    if fit.factors is not None:
        for k, factor in enumerate(fit.factors.factors):
            name = f"factor_{k}.csv"
            np.savetxt(
                os.path.join(args.out, name), factor, delimiter=",",
                fmt="%.17g",
            )
            files[f"mode_{k}"] = name
    else:
        name = "estimate.csv"
        np.savetxt(
            os.path.join(args.out, name), fit.model.materialize(),
            delimiter=",", fmt="%.17g",
        )
        files["estimate"] = name

    summary = {
        "method": method,
        "estimates": mspec.estimates,
        "model_kind": fit.model.kind,
        "dims": list(dims),
        "n_samples": len(data),
        "lambda": lams,
        "objective_trace": [float(v) for v in fit.objective_trace],
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "wall_time_seconds": float(fit.wall_time_seconds),
        "files": files,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        f"{method}: {fit.iterations} iterations, "
        f"converged={fit.converged}, {fit.wall_time_seconds:.3f}s"
    )
    return 0


# eval -----------------------------------------------------------------------


def _model_from_summary(fit_dir, summary):
    files = summary["files"]
    if "estimate" in files:
        dense = np.loadtxt(
            os.path.join(fit_dir, files["estimate"]), delimiter=","
        )
        return StructuredMatrix("dense", dense=dense)
    factors = []
    for k in range(len(files)):
        factors.append(
            np.loadtxt(
                os.path.join(fit_dir, files[f"mode_{k}"]), delimiter=","
            )
        )
    factors = [np.atleast_2d(f) for f in factors]
    kind = summary["model_kind"]
    fs = FactorSet(factors)
    if kind == "kron_product":
        return StructuredMatrix.kron_product(fs)
    if kind == "kron_sum":
        return StructuredMatrix.kron_sum(fs)
    if kind == "squared_kron_sum":
        return StructuredMatrix.squared_kron_sum(fs)
    _fail(f"{fit_dir}: cannot rebuild model kind {kind!r}")


def _cmd_eval(args):
    omega = read_triplets(args.truth).toarray()
    sigma = None
    status = 0
    for fit_dir in args.fits:
        summary_path = os.path.join(fit_dir, "summary.json")
        try:
            summary = _load_json(summary_path)
            model = _model_from_summary(fit_dir, summary)
            est = model.materialize()
            if summary["estimates"] == "precision":
                metrics = {
                    "fnorm": frob_error(est, omega),
                    "mcc": mcc(extract_support(est), extract_support(omega)),
                }
            else:
                if sigma is None:
                    inv = np.linalg.inv(omega)
                    sigma = (inv + inv.T) / 2
                metrics = {"fnorm": frob_error(est, sigma), "mcc": None}
            metrics["method"] = summary["method"]
        except SystemExit:
            raise
        except Exception as exc:
            print(f"{fit_dir}: {type(exc).__name__}: {exc}", file=sys.stderr)
            status = 1
            continue
        out = os.path.join(fit_dir, "metrics.json")
        with open(out, "w") as fh:
            json.dump(metrics, fh, indent=1, sort_keys=True)
            fh.write("\n")
        shown = {k: v for k, v in metrics.items() if k != "method"}
        print(f"{fit_dir}: {shown}")
    return status


# bench ----------------------------------------------------------------------


def _plan_from_entry(entry):
    if isinstance(entry, str):
        return MethodPlan(name=entry)
    if not isinstance(entry, dict) or "name" not in entry:
        _fail(f"method entries need a name, got {entry!r}")
    kwargs = dict(entry)
    cfg = kwargs.pop("cfg", None)
    if cfg is not None:
        try:
            cfg = EstimatorConfig(**cfg)
        except TypeError as exc:
            _fail(f"bad cfg for method {entry['name']!r}: {exc}")
    grid = kwargs.pop("c_grid", None)
    name = kwargs.pop("name")
    lam = kwargs.pop("lam", None)
    if kwargs:
        _fail(f"unknown keys for method {name!r}: {sorted(kwargs)}")
    return MethodPlan(
        name=name,
        lam=lam,
        c_grid=tuple(grid) if grid is not None else None,
        cfg=cfg,
    )


_PRESETS = {
    # spatial grid, time steps, replicate count
    "small": ((6, 6), 20, 50),
    "tiny": ((4, 4), 10, 25),
}


def _cmd_bench(args):
    raw = _load_json(args.spec)
    if not isinstance(raw, dict) or "process" not in raw:
        _fail("bench spec must be a JSON object with a process block")
    process_cfg = dict(raw["process"])
    n_samples = raw.get("n_samples", 50)
    preset = (
        "tiny" if args.tiny else "small" if args.small else None
    )
    prediction = raw.get("prediction")
    fit_dims = raw.get("fit_dims")
    if preset is not None:
        dims, steps, n_samples = _PRESETS[preset]
        process_cfg["dims"] = list(dims)
        process_cfg["n_steps"] = steps
        space = dims[0] * dims[1]
        if fit_dims is not None:
            if len(fit_dims) != 2:
                _fail(
                    f"--{preset} can only rescale two-mode fit_dims, "
                    f"got {fit_dims}"
                )
            fit_dims = [space, steps]
        if prediction is not None:
            prediction = {**prediction, "p": steps, "q": space}

    if prediction is not None:
        prediction = PredictionPlan(**prediction)
    spec = ExperimentSpec(
        process=_process_from_dict(process_cfg),
        n_samples=n_samples,
        seeds=tuple(raw.get("seeds", (0,))),
        methods=tuple(
            _plan_from_entry(e) for e in raw.get("methods", ())
        ),
        metrics=tuple(raw.get("metrics", ("fnorm",))),
        output_dir=args.out or raw.get("output_dir", "results"),
        prediction=prediction,
        fit_dims=tuple(fit_dims) if fit_dims is not None else None,
    )
    records = run_experiment(spec)
    if records:
        table = emit_table(
            records,
            os.path.join(spec.output_dir, "table.csv"),
            transpose=True,
        )
        print(f"results: {os.path.join(spec.output_dir, 'results.csv')}")
        print(f"summary: {table}")
    failures = failed_cells(spec.output_dir)
    for name in failures:
        print(f"failed cell: {name}", file=sys.stderr)
    return 1 if failures else 0


# heatmap --------------------------------------------------------------------


def _load_matrix(path):
    if path.endswith(".csv"):
        return np.loadtxt(path, delimiter=",")
    return read_triplets(path).toarray()


def _cmd_heatmap(args):
    m = _load_matrix(args.matrix)
    emit_heatmap(
        m,
        args.out,
        zero_is_white=not args.no_zero_white,
        threshold=args.threshold,
    )
    print(f"wrote {args.out}")
    return 0


# parser ---------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kroncov",
        description="Kronecker-structured covariance toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate", help="sample a synthetic process to MWT1 files"
    )
    p.add_argument("config", help="JSON config mirroring the process fields")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("fit", help="fit one method to MWT1 data")
    p.add_argument("--method", required=True, choices=_METHOD_FLAGS)
    p.add_argument(
        "--data", required=True, help="an .mwt file or a directory of them"
    )
    p.add_argument("--dims", help="override tensor dims, comma-separated")
    p.add_argument(
        "--lambda", dest="lam",
        help="penalty value (comma-separated for per-mode values)",
    )
    p.add_argument(
        "--lambda-rule", dest="lambda_rule", type=float, metavar="C",
        help="penalty from the method's rate rule scaled by C",
    )
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out", required=True, help="result directory")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser(
        "eval", help="score fitted results against a truth sidecar"
    )
    p.add_argument("fits", nargs="+", help="fitted-result directories")
    p.add_argument(
        "--truth", required=True, help="precision sidecar (triplet text)"
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="run a benchmark grid from a spec JSON")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--out", help="override the spec's output_dir")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument(
        "--small", action="store_true",
        help="6x6 grid, 20 steps, 50 replicates",
    )
    scale.add_argument(
        "--tiny", action="store_true",
        help="4x4 grid, 10 steps, 25 replicates",
    )
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("heatmap", help="render a matrix file as a PGM image")
    p.add_argument("matrix", help=".csv (dense) or triplet text matrix")
    p.add_argument("--out", required=True, help="output .pgm path")
    p.add_argument(
        "--threshold", type=float,
        help="zero out magnitudes at or below this first",
    )
    p.add_argument(
        "--no-zero-white", action="store_true",
        help="plain linear ramp instead of pinning zeros to white",
    )
    p.set_defaults(func=_cmd_heatmap)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
