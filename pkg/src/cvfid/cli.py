"""Command-line front end: one record per evaluated parameter point.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import fock, montecarlo
from .gaussian import NumericalError, ValidationError
from .protocols import (
    MemoryParams,
    TeleportationParams,
    memory_fidelity_analytic,
    memory_pipeline,
    optimal_gain_memory,
    optimal_gain_teleport,
    optimize_gain,
    teleport_fidelity_analytic,
    teleport_pipeline,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

METHOD_COLUMNS = (
    "fidelity_analytic",
    "fidelity_pipeline",
    "fidelity_polygauss",
    "fidelity_mc",
    "fidelity_mc_stderr",
    "gain",
    "seed",
)


@dataclass
class OutputRecord:
    params: dict
    fidelity_analytic: float | None = None
    fidelity_pipeline: float | None = None
    fidelity_polygauss: float | None = None
    fidelity_mc: float | None = None
    fidelity_mc_stderr: float | None = None
    gain: float | None = None
    seed: int | None = None
    timestamp: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        methods = (self.fidelity_analytic, self.fidelity_pipeline, self.fidelity_polygauss, self.fidelity_mc)
        if all(v is None for v in methods):
            raise ValidationError("record has no fidelity value")

    def columns(self) -> list[str]:
        cols = sorted(self.params) + list(METHOD_COLUMNS)
        return cols + ["timestamp"] if self.timestamp else cols

    def flat(self) -> dict:
        row = {k: _param_text(v) for k, v in sorted(self.params.items())}
        for col in METHOD_COLUMNS:
            v = getattr(self, col)
            row[col] = "" if v is None else (str(v) if col == "seed" else fmt(v))
        if self.timestamp:
            row["timestamp"] = self.timestamp
        return row

    def to_json(self) -> str:
        out: dict = dict(sorted(self.params.items()))
        for col in METHOD_COLUMNS:
            v = getattr(self, col)
            out[col] = v if v is None or col == "seed" else float(fmt(v))
        for k, v in self.extra.items():
            out[k] = float(fmt(v)) if isinstance(v, float) else v
        if self.timestamp:
            out["timestamp"] = self.timestamp
        return json.dumps(out)


def fmt(x: float) -> str:
    """12 significant digits."""
    return format(float(x), ".12g")


def _param_text(v) -> str:
    # parameters print exactly so that output parses back to the input
    return repr(v) if isinstance(v, float) else str(v)


# -- record builders (module level so worker processes can pickle them) --------

def teleport_record(n, k, vc=0.0, gain=None, mc_samples=0, seed=0) -> OutputRecord:
    p = TeleportationParams(n, k, vc, gain)
    g = p.gain
    optimal = gain is None or math.isclose(gain, optimal_gain_teleport(n, k, vc), abs_tol=1e-12)
    rec = OutputRecord({"n": n, "k": k, "vc": vc}, gain=g, seed=seed)
    rec.fidelity_pipeline = teleport_pipeline(p).value
    if optimal:
        rec.fidelity_analytic = teleport_fidelity_analytic(n, k, vc)
    rec.fidelity_polygauss = fock.displaced_fock_teleport_fidelity(0, n, k, g, vc).value
    if mc_samples:
        est = montecarlo.mc_teleport(p, mc_samples, seed)
        rec.fidelity_mc, rec.fidelity_mc_stderr = est.mean, est.stderr
    return rec


def memory_record(kappa, vc, r=1.0, gain=None, mc_samples=0, seed=0) -> OutputRecord:
    p = MemoryParams(kappa, r, vc, gain)
    optimal = gain is None or math.isclose(gain, optimal_gain_memory(kappa, vc, r), abs_tol=1e-12)
    rec = OutputRecord({"kappa": kappa, "r": r, "vc": vc}, gain=p.gain, seed=seed)
    rec.fidelity_pipeline = memory_pipeline(p).value
    if optimal:
        rec.fidelity_analytic = memory_fidelity_analytic(kappa, vc, r)
    if mc_samples:
        est = montecarlo.mc_memory(p, mc_samples, seed)
        rec.fidelity_mc, rec.fidelity_mc_stderr = est.mean, est.stderr
    return rec


def fock_record(N, n, k=None, gain=None, vc=0.0, seed=0) -> OutputRecord:
    if k is None:
        if n < 1:
            raise ValidationError(f"n >= 1 required, got n={n}")
        k = math.sqrt(n * n - 1)
    N = int(N)
    if gain is None:
        g, _ = _fock_optimum(N, n, k, vc)
    else:
        g = gain
    rec = OutputRecord({"N": N, "n": n, "k": k, "vc": vc}, gain=g, seed=seed)
    rec.fidelity_polygauss = fock.displaced_fock_teleport_fidelity(N, n, k, g, vc).value
    if N == 1 and g == 1.0:
        rec.fidelity_analytic = fock.single_photon_unit_gain_fidelity(n - k)
    if N == 0:
        rec.fidelity_pipeline = teleport_pipeline(TeleportationParams(n, k, vc, g)).value
    return rec


def _fock_optimum(N, n, k, vc):
    if not vc:
        return fock.optimal_fock_gain(N, n, k)
    TeleportationParams(n, k, vc)  # validates the channel
    return optimize_gain(lambda g: fock.displaced_fock_teleport_fidelity(N, n, k, g, vc).value)


def ensemble_record(lam, delta, nmax=60, tol=None, seed=0) -> OutputRecord:
    params = fock.FockEnsembleParams(lam, delta, int(nmax))
    res = fock.fock_ensemble_fidelity(params, tol=tol)
    rec = OutputRecord({"delta": delta, "lambda": lam, "nmax": int(nmax)}, gain=1.0, seed=seed)
    rec.fidelity_analytic = res.closed_form
    rec.fidelity_polygauss = res.fidelity.value
    rec.extra = {"tail_bound": res.tail_bound, "polygauss_terms": res.polygauss_terms}
    return rec


BUILDERS = {
    "teleport": teleport_record,
    "memory": memory_record,
    "fock": fock_record,
    "ensemble": ensemble_record,
}

# flag name -> keyword of the record builder
SWEEPABLE = {
    "teleport": {"n": "n", "k": "k", "vc": "vc", "gain": "gain"},
    "memory": {"kappa": "kappa", "vc": "vc", "r": "r", "squeeze": "r", "gain": "gain"},
    "fock": {"N": "N", "n": "n", "k": "k", "vc": "vc", "gain": "gain"},
    "ensemble": {"lambda": "lam", "delta": "delta", "nmax": "nmax"},
}


REQUIRED = {"teleport": ("n", "k"), "memory": ("kappa",), "fock": ("N", "n"), "ensemble": ("lam", "delta")}


def _call(args):
    protocol, kwargs = args
    return BUILDERS[protocol](**kwargs)


# -- argument parsing ---------------------------------------------------------

def _gain_flags(p):
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--gain", type=float, help="fixed feedback gain")
    grp.add_argument("--optimal", action="store_true", help="optimal gain (default)")


def _output_flags(p):
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--timestamp", action="store_true", help="add a UTC timestamp to each record")


def _mc_flags(p):
    p.add_argument("--mc-samples", type=int, default=0, help="also run the Monte-Carlo oracle")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $CVFID_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvfid", description="Fidelities of Gaussian teleportation and memory protocols."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("teleport", help="coherent-state teleportation")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--vc", type=float, default=0.0)
    _gain_flags(p)
    _mc_flags(p)
    _output_flags(p)

    p = sub.add_parser("memory", help="light-to-atom quantum memory")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--vc", type=float, default=0.0)
    p.add_argument("--squeeze", type=float, default=1.0, help="atomic squeezing r >= 1")
    _gain_flags(p)
    _mc_flags(p)
    _output_flags(p)

    p = sub.add_parser("fock", help="Fock-state teleportation")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--k", type=float, default=None, help="default: pure channel sqrt(n^2-1)")
    p.add_argument("--vc", type=float, default=0.0, help="spread of random displacements")
    _gain_flags(p)
    _output_flags(p)

    p = sub.add_parser("ensemble", help="exponential ensemble of Fock states, unit gain")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--nmax", type=int, default=60)
    p.add_argument("--tol", type=float, default=None, help="fail if the truncation tail exceeds this")
    _output_flags(p)

    p = sub.add_parser("sweep", help="evaluate a protocol on a Cartesian parameter grid")
    p.add_argument("--protocol", choices=sorted(BUILDERS), required=True)
    p.add_argument(
        "--sweep", action="append", default=[], metavar="PARAM:START:STOP:STEPS",
        help="linear grid for one parameter (repeatable)",
    )
    for name in ("n", "k", "vc", "kappa", "squeeze", "gain", "delta", "lambda"):
        p.add_argument(f"--{name}", type=float, default=None,
                       dest=name if name != "lambda" else "lam")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    _mc_flags(p)
    _output_flags(p)
    return parser


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    steps: int

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise ValidationError(f"sweep must be PARAM:START:STOP:STEPS, got {text!r}")
        try:
            spec = cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
        except ValueError:
            raise ValidationError(f"cannot parse sweep {text!r}") from None
        if spec.steps < 1:
            raise ValidationError("sweep step-count must be >= 1")
        if spec.stop < spec.start:
            raise ValidationError("sweep stop must be >= start")
        return spec

    def values(self) -> list[float]:
        if self.steps == 1:
            return [self.start]
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("CVFID_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"CVFID_SEED must be an integer, got {env!r}") from None
    return 0


def _gain(args):
    return None if args.optimal or args.gain is None else args.gain


def _sweep_points(args, seed):
    protocol = args.protocol
    allowed = SWEEPABLE[protocol]
    base: dict = {}
    given = {
        "n": args.n, "k": args.k, "vc": args.vc, "kappa": args.kappa, "squeeze": args.squeeze,
        "gain": args.gain, "delta": args.delta, "lambda": args.lam, "N": args.N, "nmax": args.nmax,
    }
    for name, value in given.items():
        if value is None:
            continue
        if name not in allowed:
            raise ValidationError(f"--{name} does not apply to {protocol}")
        base[allowed[name]] = value
    specs = [SweepSpec.parse(s) for s in args.sweep]
    for s in specs:
        if s.param not in allowed:
            raise ValidationError(f"cannot sweep {s.param!r} for {protocol}; choose from {sorted(allowed)}")
    if protocol in ("teleport", "memory") and args.mc_samples:
        base["mc_samples"] = args.mc_samples
    base["seed"] = seed
    swept = {allowed[s.param] for s in specs}
    missing = [name for name in REQUIRED[protocol] if name not in base and name not in swept]
    if missing:
        flags = {v: k for k, v in allowed.items()}
        raise ValidationError(f"{protocol} sweep needs {', '.join('--' + flags[m] for m in missing)}")
    for combo in itertools.product(*(s.values() for s in specs)):
        kwargs = dict(base)
        for s, v in zip(specs, combo):
            kwargs[allowed[s.param]] = int(round(v)) if s.param in ("N", "nmax") else v
        yield protocol, kwargs


def _records(args, seed):
    cmd = args.command
    if cmd == "teleport":
        yield teleport_record(args.n, args.k, args.vc, _gain(args), args.mc_samples, seed)
    elif cmd == "memory":
        yield memory_record(args.kappa, args.vc, args.squeeze, _gain(args), args.mc_samples, seed)
    elif cmd == "fock":
        yield fock_record(args.N, args.n, args.k, _gain(args), args.vc, seed)
    elif cmd == "ensemble":
        yield ensemble_record(args.lam, args.delta, args.nmax, args.tol, seed)
    elif cmd == "sweep":
        points = _sweep_points(args, seed)
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                yield from pool.map(_call, points)
        else:
            for point in points:
                yield _call(point)


def emit(records, fmt_name: str, out, timestamp: bool = False) -> None:
    writer = None
    for rec in records:
        rec.validate()
        if timestamp:
            rec.timestamp = datetime.now(timezone.utc).isoformat()
        if fmt_name == "json":
            out.write(rec.to_json() + "\n")
        else:
            if writer is None:
                writer = csv.DictWriter(out, fieldnames=rec.columns(), lineterminator="\n")
                writer.writeheader()
            writer.writerow(rec.flat())
        out.flush()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "mc_samples", 0) < 0:
            raise ValidationError("--mc-samples must be >= 0")
        seed = resolve_seed(getattr(args, "seed", None))
        emit(_records(args, seed), args.format, sys.stdout, args.timestamp)
    except ValidationError as exc:
        print(f"cvfid: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cvfid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
