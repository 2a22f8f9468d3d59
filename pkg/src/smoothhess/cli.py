"""Command-line entry point: ``smoothhess <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import SmoothHessError
from .estimator import EstimatorConfig, estimate
from .evaluation import REPORT_COLUMNS, trust_region_attack, with_flip
from .experiments import io
from .experiments.benchmark import (
    PMSE_METHODS,
    SUMMARY_COLUMNS,
    PmseConfig,
    run_pmse_benchmark,
)
from .experiments.datasets import GENERATORS
from .experiments.sweeps import (
    log_grid,
    sweep_beta,
    sweep_beta_columns,
    sweep_sigma,
    sweep_sigma_columns,
)
from .experiments.training import TOY_HIDDEN, TrainConfig, train
from .net import Network, SoftmaxHead, init_mlp, loads_finite
from .sampling import CovarianceModel

log = logging.getLogger("smoothhess")


class UsageError(Exception):
    """Bad flag values detected after parsing (mapped to exit code 2)."""


# -- parsing helpers ---------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _entries(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(";"):
        i, j = _ints(part)
        out.append((i, j))
    return out


def _grid(text: str) -> list[float]:
    """Either ``lo:hi:num`` (log10 exponents) or an explicit comma list."""
    if ":" in text:
        lo, hi, num = text.split(":")
        return log_grid(float(lo), float(hi), int(num))
    return _floats(text)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads_default() -> int:
    env = os.environ.get("SMOOTHHESS_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _cov(spec: str | None, d: int) -> CovarianceModel:
    if spec is None:
        return CovarianceModel.isotropic(1.0, d)
    path = Path(spec)
    text = path.read_text() if path.is_file() else spec
    try:
        data = loads_finite(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--cov is neither a JSON file nor a JSON object: {exc}") from None
    return CovarianceModel.from_spec(data, dim=d)


def _est_cfg(args) -> EstimatorConfig:
    if args.n % args.batch:
        raise UsageError(f"--n ({args.n}) must be a multiple of --batch ({args.batch})")
    return EstimatorConfig(args.batch, args.n // args.batch, args.antithetic, args.seed)


def _point(args, d: int) -> np.ndarray:
    x0 = np.asarray(args.point if args.point is not None else [0.0] * d, dtype=np.float64)
    if x0.shape[0] != d:
        raise UsageError(f"--point has {x0.shape[0]} values, model expects {d}")
    return x0


def _emit(args, summary: dict, human: str) -> None:
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(human)


def _add_common(p, estimator=True):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--point", type=_floats, help="comma-separated point x0 (default: origin)")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True, help="output file")
    if estimator:
        p.add_argument("--cov", help='covariance JSON object or file, e.g. {"kind":"isotropic","sigma2":0.1}')
        p.add_argument("--n", type=int, default=100000, help="total perturbation samples")
        p.add_argument("--batch", type=int, default=1000, help="gradient-oracle batch size")
        p.add_argument("--antithetic", action="store_true")


# -- commands ----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    ds = GENERATORS[args.dataset](args.spacing)
    io.write_csv(
        args.out,
        ["x1", "x2", "y"],
        ({"x1": x[0], "x2": x[1], "y": y} for x, y in zip(ds.inputs, ds.targets)),
    )
    _emit(args, {"rows": len(ds), "dataset": ds.name, "out": args.out}, f"wrote {len(ds)} rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = GENERATORS[args.dataset](args.spacing)
    widths = [ds.dim] + list(args.widths) + [1]
    net = init_mlp(widths, seed=args.seed)
    cfg = TrainConfig(
        optimizer=args.optimizer,
        lr=args.lr,
        lr_decay_iters=tuple(args.decay_iters),
        lr_decay_factor=args.decay_factor,
        iters=args.iters,
        batch=args.batch_size,
        seed=args.seed,
    )
    trained, mse = train(net, ds.inputs, ds.targets, cfg)
    trained.save(args.out)
    io.write_metadata(
        args.out,
        {"dataset": ds.name, "spacing": args.spacing, "widths": widths, "train": cfg.metadata()},
        {"final_mse": mse},
    )
    _emit(args, {"final_mse": mse, "out": args.out}, f"final MSE {mse:.3e}; model written to {args.out}")
    return 0


def cmd_estimate(args) -> int:
    net = Network.load(args.model)
    d = net.input_dim
    x0 = _point(args, d)
    cov = _cov(args.cov, d)
    est = estimate(net, x0, cov, _est_cfg(args), threads=args.threads)
    Path(args.out).write_text(json.dumps(est.to_dict(), allow_nan=False) + "\n")
    human = "SmoothHess:\n" + np.array2string(est.hessian, precision=4) + "\nSmoothGrad: " + np.array2string(
        est.grad, precision=4
    )
    _emit(args, est.to_dict(), human)
    return 0


def _load_config(path):
    if path is None:
        return {}
    return loads_finite(Path(path).read_text())


def cmd_sweep(args) -> int:
    conf = _load_config(args.config)
    sweep = conf.get("sweep", {})
    model = args.model or conf.get("model_path")
    out = args.out or conf.get("output_path")
    if not model or not out:
        raise UsageError("sweep needs --model and --out (or model_path/output_path in --config)")
    net = Network.load(model)
    kind = args.kind or sweep.get("kind", "sigma")
    if args.point is None and "point" in sweep:
        args.point = [float(v) for v in sweep["point"]]
    x0 = _point(args, net.input_dim)
    entries = args.entries or [tuple(e) for e in sweep.get("entries", [[0, 1]])]
    if args.grid is not None:
        grid = args.grid
    elif "grid" in sweep:
        g = sweep["grid"]
        grid = log_grid(g["log10_min"], g["log10_max"], g["num"]) if isinstance(g, dict) else list(g)
    else:
        grid = log_grid(-3, 0, 13) if kind == "sigma" else log_grid(-1, 4, 21)
    if kind == "sigma":
        for key, attr in (("n", "n"), ("batch_size", "batch"), ("seed", "seed")):
            if key in sweep and getattr(args, attr) == args._defaults[attr]:
                setattr(args, attr, sweep[key])
        args.antithetic = args.antithetic or bool(sweep.get("antithetic", False))
        rows = sweep_sigma(net, x0, grid, _est_cfg(args), entries, threads=args.threads)
        io.write_csv(out, sweep_sigma_columns(entries), rows)
    else:
        rows = sweep_beta(net, x0, grid, entries)
        io.write_csv(out, sweep_beta_columns(entries), rows)
    meta = {
        "model_path": str(model),
        "kind": kind,
        "point": x0.tolist(),
        "grid": grid,
        "entries": [list(e) for e in entries],
        "seed": args.seed,
        "n": args.n,
        "batch": args.batch,
        "antithetic": args.antithetic,
    }
    io.write_metadata(out, meta)
    _emit(args, {"rows": len(rows), "out": out}, f"wrote {len(rows)} sweep rows to {out}")
    return 0


def cmd_pmse(args) -> int:
    conf = _load_config(args.config)
    model = args.model or conf.get("model_path")
    out = args.out or conf.get("output_path")
    if not model or not out:
        raise UsageError("pmse needs --model and --out (or model_path/output_path in --config)")
    net = Network.load(model)
    dataset = args.dataset or conf.get("dataset", "four-quadrant")
    pconf = dict(conf.get("pmse", {}))
    pconf["seed"] = args.seed if args.seed is not None else conf.get("seed", 0)
    if args.epsilon:
        pconf["epsilons"] = args.epsilon
    if args.methods:
        pconf["methods"] = args.methods
    if args.n is not None:
        pconf["n_estimate"] = args.n
    if args.batch is not None:
        pconf["batch_size"] = args.batch
    if args.n_test is not None:
        pconf["n_test"] = args.n_test
    if args.n_val is not None:
        pconf["n_val"] = args.n_val
    cfg = PmseConfig.from_dict(pconf)
    inputs = GENERATORS[dataset](conf.get("spacing", 0.008)).inputs
    summary, report = run_pmse_benchmark(net, inputs, cfg, threads=args.threads)
    io.write_csv(out, REPORT_COLUMNS, report)
    summary_path = str(out) + ".summary.csv"
    io.write_csv(summary_path, SUMMARY_COLUMNS, summary)
    io.write_metadata(out, {"model_path": str(model), "dataset": dataset, "pmse": cfg.to_dict()})
    human = "\n".join(f"{r['method']:>8s}  eps={r['epsilon']:<5g} P_MSE={r['value']:.4g}" for r in summary)
    _emit(args, {"summary": summary, "out": out}, human)
    return 0


def cmd_attack(args) -> int:
    net = Network.load(args.model)
    d = net.input_dim
    x0 = _point(args, d)
    cls = int(np.argmax(net.outputs(x0[None, :])[0]))
    f = SoftmaxHead(net, cls) if net.output_dim > 1 else net
    cov = _cov(args.cov, d)
    est = estimate(f, x0, cov, _est_cfg(args), threads=args.threads)
    res = trust_region_attack(est.grad, est.hessian, args.epsilon, args.threshold)
    if net.output_dim > 1:
        res = with_flip(net, x0, res)
    payload = {
        "point": x0.tolist(),
        "delta_star": res.delta_star.tolist(),
        "epsilon": res.epsilon,
        "threshold": args.threshold,
        "k_used": res.k_used,
        "objective_value": res.objective_value,
        "flipped": res.flipped,
        "eigenvalues": res.eigenvalues.tolist(),
        "estimate": est.to_dict(),
    }
    Path(args.out).write_text(json.dumps(payload, allow_nan=False) + "\n")
    _emit(
        args,
        payload,
        f"attack k={res.k_used} |delta|={np.linalg.norm(res.delta_star):.4g} "
        f"objective={res.objective_value:.4g} flipped={res.flipped}",
    )
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle_suite import run_all

    results = run_all(seed=args.seed, threads=args.threads)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
    if args.json:
        print(json.dumps([{"suite": n, "passed": p, "detail": d} for n, p, d in results]))
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothhess", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument(
        "--threads",
        type=int,
        default=_threads_default(),
        help="worker threads for batch evaluation (env SMOOTHHESS_THREADS); outputs do not depend on it",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset as CSV")
    p.add_argument("--dataset", required=True, choices=sorted(GENERATORS))
    p.add_argument("--spacing", type=float, default=0.008)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a ReLU MLP on a synthetic dataset")
    p.add_argument("--dataset", required=True, choices=sorted(GENERATORS))
    p.add_argument("--spacing", type=float, default=0.008)
    p.add_argument("--widths", type=_ints, default=list(TOY_HIDDEN), help="hidden widths")
    p.add_argument("--optimizer", choices=["rmsprop", "sgd"], default="rmsprop")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--decay-iters", type=_ints, default=[5000, 10000, 20000])
    p.add_argument("--decay-factor", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=40000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", parents=[common], help="estimate SmoothHess and SmoothGrad at a point")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", parents=[common], help="Hessian entries across smoothing levels")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--model")
    p.add_argument("--point", type=_floats)
    p.add_argument("--kind", choices=["sigma", "beta"])
    p.add_argument("--grid", type=_grid, help="lo:hi:num in log10, or a comma list")
    p.add_argument("--entries", type=_entries, help="e.g. '0,1;0,0'")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--n", type=int, default=200000)
    p.add_argument("--batch", type=int, default=2000)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep, _defaults={"n": 200000, "batch": 2000, "seed": 0})

    p = sub.add_parser("pmse", parents=[common], help="P_MSE benchmark of surrogate fidelity")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--model")
    p.add_argument("--dataset", choices=sorted(GENERATORS))
    p.add_argument("--epsilon", type=_floats)
    p.add_argument("--methods", type=lambda s: [m.strip() for m in s.split(",")], help=",".join(PMSE_METHODS))
    p.add_argument("--seed", type=_u64)
    p.add_argument("--n", type=int, help="samples per SmoothHess estimate")
    p.add_argument("--batch", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-val", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pmse)

    p = sub.add_parser("attack", parents=[common], help="second-order trust-region attack at a point")
    _add_common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--threshold", type=float, default=1.0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("oracle-check", parents=[common], help="cross-check the estimator against exact oracles")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"smoothhess: error: {exc}", file=sys.stderr)
        return 2
    except (SmoothHessError, ValueError, OSError, KeyError) as exc:
        print(f"smoothhess: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
