"""Command-line front end.

Every subcommand prints JSON lines (``"schema": 1``, floats with 17 significant
digits).  Exit status: 0 success, 2 invalid input or failed validation, 3 when two
evaluation routes disagree.
"""

from __future__ import annotations

import os

# Pin BLAS to one thread before numpy loads, so results do not depend on the
# worker count given through ASEP_THREADS.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

SCHEMA = 1
EXIT_OK, EXIT_INVALID, EXIT_MISMATCH = 0, 2, 3


class CrossCheckFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- output

def _fmt(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return json.dumps(str(obj))
        return format(obj, ".17g")
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, complex):
        return _fmt({"re": obj.real, "im": obj.imag})
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    if hasattr(obj, "item"):
        return _fmt(obj.item())
    return json.dumps(str(obj))


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.1.0"


def record(subcommand: str, params: dict, **fields) -> dict:
    out = {"schema": SCHEMA, "subcommand": subcommand, "params": params}
    out.update(fields)
    out["version"] = _version()
    return out


class Sink:
    """Single writer for stdout records and the optional CSV table."""

    def __init__(self, csv_path: str | None):
        self.csv_path = csv_path
        self.rows: list[dict] = []

    def emit(self, rec: dict):
        sys.stdout.write(_fmt(rec) + "\n")

    def row(self, row: dict):
        self.rows.append(row)

    def close(self):
        if self.csv_path and self.rows:
            with open(self.csv_path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
                w.writeheader()
                for r in self.rows:
                    w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})


# ---------------------------------------------------------------- parsing helpers

def _sites(text: str):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _site_range(text: str):
    """``a..b`` or a comma list."""
    if ".." in text:
        a, b = text.split("..")
        return tuple(range(int(a), int(b) + 1))
    return _sites(text)


def _floats(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("ASEP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _params(p: float):
    from .core import make_params
    return make_params(p)


# ---------------------------------------------------------------- subcommands

def cmd_transition(args, sink):
    from .bethe import transition_probability
    from .oracle import default_window, uniformization_table

    params = _params(args.p)
    echo = {"p": args.p, "y": list(args.y), "x": list(args.x), "t": args.t, "nodes": args.nodes,
            "method": args.method}
    if args.method == "bethe":
        res = transition_probability(args.y, args.x, args.t, params, nodes=args.nodes, details=True)
        sink.emit(record("transition", echo, value=res.value, error_estimate=abs(res.imag),
                         method=res.method, grid={"nodes": res.nodes, "radius": res.radius}))
    else:
        table = uniformization_table(args.y, args.t, params, default_window(args.y, args.t, 1e-14))
        sink.emit(record("transition", echo, value=float(table.get(tuple(args.x), 0.0)),
                         error_estimate=1e-13, method="uniformization", grid={}))


def cmd_marginal(args, sink):
    from .marginal import leftmost_distribution, mth_particle_distribution

    params = _params(args.p)
    xs = list(args.x)
    echo = {"p": args.p, "y": list(args.y), "m": args.m, "x": xs, "t": args.t}
    if args.m == 1 and args.method == "leftmost":
        vals = leftmost_distribution(args.y, xs, args.t, params)
    else:
        vals = mth_particle_distribution(args.y, args.m, xs, args.t, params)
    if isinstance(vals, dict):
        vals = [vals[x] for x in xs]
    for x, v in zip(xs, vals):
        sink.row({"x": x, "probability": float(v)})
    sink.emit(record("marginal", echo, values=[float(v) for v in vals], method=args.method))


def _step_values(method, m, xs, t, params, args):
    from . import fredholm, marginal, oracle
    from .asymptotics import kernel_J_and_probform4

    out = []
    if method == "series":
        ss = marginal.StepSeries(m, t, params, k_max=args.k_max)
        for x in xs:
            r = ss(x)
            out.append({"x": x, "value": r.value, "error_estimate": r.truncation_estimate})
    elif method == "fredholm":
        for x in xs:
            try:
                r = fredholm.step_distribution_fredholm(m, x, t, params, details=True, tol=args.tol)
            except fredholm.StrategyMismatch as exc:
                raise CrossCheckFailure(str(exc))
            if isinstance(r, float):
                out.append({"x": x, "value": r})
            else:
                out.append({"x": x, "value": r.value, "residue_sum": r.residue_sum,
                            "lambda_contour": r.lambda_contour, "discrepancy": r.discrepancy})
    elif method == "j-kernel":
        g = float(params.gamma)
        for x in xs:
            out.append({"x": x, "value": kernel_J_and_probform4(m, x, t * g, params)})
    elif method == "toeplitz":
        if params.p != 0:
            raise ValueError("the Toeplitz form needs p = 0")
        for x in xs:
            out.append({"x": x, "value": marginal.tasep_step_toeplitz(m, x, t)})
    elif method == "gillespie":
        rows, _ = oracle.gillespie_step_cdf(m, xs, params, t, args.trials, args.seed, _threads(args))
        for x, v, se in rows:
            out.append({"x": x, "value": v, "stderr": se})
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def cmd_step(args, sink):
    params = _params(args.p)
    xs = list(args.x)
    echo = {"p": args.p, "m": args.m, "x": xs, "t": args.t, "method": args.method}
    if args.method == "gillespie":
        echo.update(trials=args.trials, seed=args.seed)
    if args.method == "series":
        echo["k_max"] = args.k_max
    rows = _step_values(args.method, args.m, xs, args.t, params, args)
    for r in rows:
        sink.row(dict(r))
    sink.emit(record("step", echo, values=rows, method=args.method))


def cmd_simulate(args, sink):
    from .oracle import gillespie_sample, step_truncation

    params = _params(args.p)
    y = args.y
    if y == "step":
        if args.observable == "configuration":
            raise ValueError("--y step needs a particle index as --observable")
        y = tuple(range(1, step_truncation(int(args.observable), args.t) + 1))
    emp = gillespie_sample(y, params, args.t, args.trials, args.seed,
                           observable=args.observable, threads=_threads(args))
    counts = sorted(emp.counts.items())
    for k, c in counts:
        sink.row({"outcome": k if isinstance(k, int) else ",".join(map(str, k)), "count": c})
    echo = {"p": args.p, "y": list(y), "t": args.t, "trials": args.trials, "seed": args.seed,
            "observable": args.observable}
    sink.emit(record("simulate", echo, seed=args.seed, block_size=emp.block_size,
                     counts=[[k if isinstance(k, int) else list(k), c] for k, c in counts]))


def cmd_verify(args, sink):
    ok = True
    if args.suite == "identities":
        from .identities import verify_all
        reports = verify_all(count=args.trials, max_size=args.max_size, seed=args.seed)
        for rep in reports:
            sys.stdout.write(_fmt(rep.to_json()) + "\n")
            ok &= bool(rep.equal)
        sink.emit(record("verify", {"suite": args.suite, "trials": args.trials, "seed": args.seed},
                         checked=len(reports), all_exact=ok))
    elif args.suite == "kernels":
        from .core import circle
        from .fredholm import (ScalarFunctionPhi, default_rho_eta, eta_operator, infinite_product)
        params = _params(args.p)
        tau = float(params.tau)
        grid = circle(default_rho_eta(params), 64)
        k0 = eta_operator("K0", ScalarFunctionPhi(0, 0.0, params), grid)
        det_err = abs(k0.det(0.5) - infinite_product(0.5, tau))
        tr_err = max(abs(k0.trace_power(n) - 1 / (1 - tau ** n)) for n in range(1, 6))
        ok = det_err < 1e-9 and tr_err < 1e-10
        sink.emit(record("verify", {"suite": args.suite, "p": args.p},
                         det_error=det_err, trace_error=tr_err, passed=ok))
    else:
        raise ValueError(f"unknown suite {args.suite!r}")
    if not ok:
        raise CrossCheckFailure("verification failed")


def cmd_f2(args, sink):
    from .asymptotics import f2
    for s in args.s:
        r = f2(s, details=True)
        sink.row({"s": s, "F2": r.value, "discrepancy": r.discrepancy})
        sink.emit(record("f2", {"s": s}, value=r.value, error_estimate=r.discrepancy,
                         method="nystrom-gauss-legendre", grid={"length": 40.0, "n": 200}))


def cmd_asym(args, sink):
    from . import asymptotics as asy
    params = _params(args.p)
    ts = list(args.t)
    if args.theorem == 1:
        rows = asy.theorem1_trend(args.m, args.x, ts, params)
        label = "ratio"
    elif args.theorem == 2:
        rows = asy.theorem2_trend(args.s, ts, params, m=args.m)
        label = "abs_error"
    else:
        rows = asy.theorem3_limit_check(args.sigma, args.s, ts, params)
        label = "abs_error"
    table = []
    for r in rows:
        row = {"t": r.t, "lhs": r.lhs, "rhs": r.rhs, label: r.error, "m": r.m, "x": r.x}
        sink.row(row)
        table.append(row)
    echo = {"theorem": args.theorem, "p": args.p, "t": ts, "m": args.m, "x": args.x,
            "s": args.s, "sigma": args.sigma}
    sink.emit(record("asym", echo, rows=table))


def cmd_compare(args, sink):
    params = _params(args.p)
    worst = 0.0
    pair = args.pair
    if pair in ("fredholm-series", "fredholm-gillespie", "fredholm-j-kernel"):
        other = pair.split("-", 1)[1]
        for m in args.m:
            a = _step_values("fredholm", m, args.x, args.t, params, args)
            b = _step_values(other, m, args.x, args.t, params, args)
            for ra, rb in zip(a, b):
                diff = abs(ra["value"] - rb["value"])
                if other == "gillespie":
                    diff = diff / max(rb["stderr"], 1e-300)
                worst = max(worst, diff)
                sink.row({"m": m, "x": ra["x"], "a": ra["value"], "b": rb["value"], "discrepancy": diff})
        tol = args.z if other == "gillespie" else args.tol
    elif pair == "bethe-uniformization":
        from .bethe import transition_table
        from .oracle import default_window, uniformization_table
        y = args.y
        table = uniformization_table(y, args.t, params, default_window(y, args.t, 1e-12))
        states = list(table)
        bethe = transition_table(y, args.t, params, states)
        for s in states:
            diff = abs(bethe[s] - table[s])
            worst = max(worst, diff)
            sink.row({"x": ",".join(map(str, s)), "a": float(bethe[s]), "b": float(table[s]),
                      "discrepancy": diff})
        tol = args.tol
    else:
        raise ValueError(f"incompatible method pair {pair!r}")
    passed = worst <= tol
    sink.emit(record("compare", {"pair": pair, "p": args.p, "t": args.t, "tol": tol},
                     max_discrepancy=worst, passed=passed, points=len(sink.rows)))
    if not passed:
        raise CrossCheckFailure(f"max discrepancy {worst:g} exceeds {tol:g}")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asep", description="Exact finite-time ASEP distributions.",
                                 allow_abbrev=False)
    ap.add_argument("--csv", metavar="PATH", help="also write the result table as CSV")
    ap.add_argument("--threads", type=int, help="worker count (default: ASEP_THREADS or all cores)")
    ap.add_argument("--timing", action="store_true", help="add wall time to records")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transition", help="P_Y(X; t)")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--y", type=_sites, required=True)
    p.add_argument("--x", type=_sites, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--nodes", type=int)
    p.add_argument("--method", choices=["bethe", "uniformization"], default="bethe")
    p.set_defaults(func=cmd_transition)

    p = sub.add_parser("marginal", help="law of the m-th particle, finite system")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--y", type=_sites, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--x", type=_site_range, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--method", choices=["subsets", "leftmost"], default="subsets")
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("step", help="P(x_m(t) <= x) for step initial data")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--x", type=_site_range, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--method", choices=["series", "fredholm", "j-kernel", "toeplitz", "gillespie"],
                   default="fredholm")
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("simulate", help="Monte Carlo sample")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--y", type=lambda s: s if s == "step" else _sites(s), required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--observable", default="configuration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="exact identity and kernel checks")
    p.add_argument("--suite", choices=["identities", "kernels"], default="identities")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-size", type=int, default=4)
    p.add_argument("--p", type=float, default=0.3)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("f2", help="GUE Tracy-Widom distribution")
    p.add_argument("--s", type=_floats, required=True)
    p.set_defaults(func=cmd_f2)

    p = sub.add_parser("asym", help="finite-t convergence reports")
    p.add_argument("--theorem", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--t", type=_floats, required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--x", type=int, default=0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.25)
    p.set_defaults(func=cmd_asym)

    p = sub.add_parser("compare", help="route-vs-route discrepancy table")
    p.add_argument("--pair", required=True,
                   choices=["fredholm-series", "fredholm-j-kernel", "fredholm-gillespie",
                            "bethe-uniformization"])
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--m", type=_sites, default=(1,))
    p.add_argument("--x", type=_site_range, default=tuple(range(-4, 3)))
    p.add_argument("--y", type=_sites, default=(0, 2))
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--z", type=float, default=3.0, help="z-score threshold for gillespie pairs")
    p.set_defaults(func=cmd_compare)
    return ap


def _cache_key(args) -> str:
    skip = {"func", "threads", "timing", "csv"}
    body = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return hashlib.sha256(_fmt(body).encode()).hexdigest()


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cache_dir = os.environ.get("ASEP_CACHE_DIR")
    cache_file = None
    if cache_dir and not args.timing and args.csv is None:
        cache_file = Path(cache_dir) / f"{_cache_key(args)}.jsonl"
        if cache_file.exists():
            sys.stdout.write(cache_file.read_text())
            return EXIT_OK
    sink = Sink(args.csv)
    start = time.perf_counter()
    captured: list[str] = []
    if cache_file is not None:
        real_write = sys.stdout.write

        def tee(s):
            captured.append(s)
            return real_write(s)
        sys.stdout.write = tee  # type: ignore[method-assign]
    try:
        args.func(args, sink)
        if args.timing:
            sink.emit({"schema": SCHEMA, "wall_time": time.perf_counter() - start})
        sink.close()
    except CrossCheckFailure as exc:
        sink.close()
        print(f"cross-check failed: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ValueError, ArithmeticError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        if cache_file is not None:
            sys.stdout.write = real_write  # type: ignore[method-assign]
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text("".join(captured))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
