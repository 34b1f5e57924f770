"""Command-line entry point: teleport, repeater, twirl-approx and sweep.

Every command writes a table as CSV (``#`` manifest lines, a header row, then
data) or JSON. Exit codes: 0 success, 2 bad arguments, 3 SDP non-convergence.
The master seed defaults to 0 and can be set with ``--seed`` or the
``QNETLAB_SEED`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from . import __version__
from . import fidelity as fid
from . import noisegen as ng
from . import numkernel as nk
from . import repeater as rp
from . import teleport as tp
from .errors import NoiseSpecError, SdpConvergenceError

EXIT_OK, EXIT_USAGE, EXIT_SDP = 0, 2, 3
MIN_SWEEP_STEP = 0.01
METRICS = ("eta", "zeta", "fb", "fd", "fe")


class UsageError(Exception):
    pass


def fmt(value) -> str:
    """10 significant digits, locale independent; booleans and text pass through."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".10g")
    return str(value)


def _json_value(value):
    text = fmt(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if text == "nan" else float(text)
    return value


def render(command: str, args: dict, seed: int, columns: Sequence[str], rows: Sequence[dict], fmt_name: str, started: float) -> str:
    manifest = {
        "command": command,
        "arguments": ";".join(f"{k}={args[k]}" for k in sorted(args)),
        "seed": seed,
        "tool_version": __version__,
        "wall_time_ms": int(round((time.perf_counter() - started) * 1000)),
    }
    if fmt_name == "json":
        doc = {
            "manifest": manifest,
            "columns": list(columns),
            "rows": [{c: _json_value(r.get(c)) for c in columns} for r in rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    lines = [f"# {k}: {v}" for k, v in manifest.items()]
    lines.append(",".join(columns))
    lines += [",".join(fmt(r.get(c)) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


def emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# argument parsing helpers


def parse_noise(text: str) -> ng.NoiseSpec:
    try:
        return ng.parse_noise_spec(text)
    except NoiseSpecError as err:
        raise UsageError(str(err)) from None


_ANGLE = re.compile(r"^\s*(?:([-+]?\d*\.?\d+)\s*\*?\s*)?pi(?:\s*/\s*(\d*\.?\d+))?\s*$")


def parse_angle(text: str) -> float:
    """A float, or a multiple of pi such as ``pi/10`` or ``2pi/5``."""
    t = text.strip().lower()
    m = _ANGLE.match(t)
    if m:
        k = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return k * math.pi / den
    try:
        v = float(t)
    except ValueError:
        raise UsageError(f"cannot parse angle {text!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"angle must be finite: {text!r}")
    return v


def parse_resource(text: str) -> tuple[ng.NoiseSpec, ng.NoiseSpec, ng.PreprocessAngles]:
    parts = [p for p in text.split(",")]
    if len(parts) not in (2, 4):
        raise UsageError(f"resource must be n1,n2[,alpha,beta], got {text!r}")
    n1, n2 = parse_noise(parts[0]), parse_noise(parts[1])
    angles = ng.PreprocessAngles()
    if len(parts) == 4:
        angles = ng.PreprocessAngles(parse_angle(parts[2]), parse_angle(parts[3]))
    return n1, n2, angles


def parse_copies(text: str) -> list[int]:
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", text)
    if not m:
        raise UsageError(f"copies must look like a..b, got {text!r}")
    a = int(m.group(1))
    b = int(m.group(2)) if m.group(2) else a
    if not (1 <= a <= b <= rp.MAX_COPIES):
        raise UsageError(f"copies range must lie within [1, {rp.MAX_COPIES}]")
    return list(range(a, b + 1))


def parse_twirl(text: str):
    t = text.strip().lower()
    if t in ("none", "exact"):
        return t, None
    m = re.fullmatch(r"approx:(\d+)", t)
    if m and int(m.group(1)) >= 1:
        return "approx", int(m.group(1))
    raise UsageError(f"twirl must be none, exact or approx:<M>, got {text!r}")


def parse_range(text: str) -> list[float]:
    """``a:b:step`` inclusive of b (up to rounding); step must be at least 0.01."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range must be a:b:step, got {text!r}")
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"range must be numeric, got {text!r}") from None
    if not all(math.isfinite(v) for v in (a, b, step)):
        raise UsageError("range values must be finite")
    if step < MIN_SWEEP_STEP:
        raise UsageError(f"step must be at least {MIN_SWEEP_STEP}")
    if b < a or a < 0 or b > 1:
        raise UsageError("range must satisfy 0 <= a <= b <= 1")
    n = int(math.floor((b - a) / step + 1e-9))
    return [round(a + k * step, 12) for k in range(n + 1)]


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise UsageError("list must be nonempty with entries >= 1")
    return values


def default_seed() -> int:
    raw = os.environ.get("QNETLAB_SEED")
    if raw is None or raw == "":
        return 0
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"QNETLAB_SEED must be an integer, got {raw!r}") from None
    if not 0 <= value < 2**64:
        raise UsageError("QNETLAB_SEED must be a 64-bit unsigned integer")
    return value


# commands


def cmd_teleport(ns) -> int:
    started = time.perf_counter()
    n1, n2 = parse_noise(ns.n1), parse_noise(ns.n2)
    step = ns.grid_step
    if not (0 < step <= math.pi):
        raise UsageError("grid step must lie in (0, pi]")
    status = EXIT_OK
    f_b = tp.eval_protocol_b(n1, n2)
    try:
        cert = tp.solve_protocol_d(n1, n2)
        lower, upper = cert.primal_value, cert.dual_value
    except SdpConvergenceError as err:
        lower, upper = err.bracket if err.bracket else (float("nan"), float("nan"))
        status = EXIT_SDP
    f_d = fid.avg_from_ent(lower, 2)
    f_e, angles = tp.eval_protocol_e(n1, n2, None, step)
    row = {
        "n1": str(n1),
        "n2": str(n2),
        "f_b": f_b,
        "f_d": f_d,
        "f_d_gap": 2 * (upper - lower) / 3,
        "f_e": f_e,
        "alpha": angles.alpha,
        "beta": angles.beta,
        "eta": (f_e - f_d) / f_d,
        "f_c_lower": f_b,
        "f_c_upper": f_d,
        "f_f_lower": f_e,
        "f_f_upper": 1.0,
    }
    args = {"n1": str(n1), "n2": str(n2), "grid_step": fmt(step)}
    emit(render("teleport", args, ns.seed, list(row), [row], ns.format, started), ns.out)
    return status


def _formula(n1, n2, angles, twirl, rho_plain, N):
    if twirl == "exact":
        return rp.singlet_chain_fidelity(fid.entanglement_fidelity_state(rho_plain), N)
    if twirl == "none" and n2.kind == "ID" and n1.kind in ("AD", "ID") and angles.beta == 0:
        return rp.chain_recursion(n1.param, angles.alpha, N)
    return None


def cmd_repeater(ns) -> int:
    started = time.perf_counter()
    n1, n2, angles = parse_resource(ns.resource)
    twirl, samples = parse_twirl(ns.twirl)
    copies = parse_copies(ns.copies)
    rho_plain = ng.prepare_resource(n1, n2, angles)
    if twirl == "none":
        rho = rho_plain
    elif twirl == "exact":
        rho = fid.isotropic_twirl_exact(rho_plain)
    else:
        rho = fid.isotropic_twirl_approx(rho_plain, fid.TwirlApproxConfig(samples, ns.seed))
    states = rp.chain_states(rho, copies[-1])
    rows = []
    for N in copies:
        F = fid.entanglement_fidelity_state(states[N - 1])
        f = fid.avg_from_ent(F, 2)
        formula = _formula(n1, n2, angles, twirl, rho_plain, N)
        rows.append({
            "N": N,
            "F": F,
            "f": f,
            "F_formula": None if formula is None else formula.F_N,
            "f_formula": None if formula is None else formula.f_N,
            "abs_diff": None if formula is None else abs(formula.F_N - F),
            "formula": "" if formula is None else formula.method,
            "beats_classical": f > rp.CLASSICAL_LIMIT,
        })
    columns = ["N", "F", "f", "F_formula", "f_formula", "abs_diff", "formula", "beats_classical"]
    args = {
        "resource": f"{n1},{n2},{fmt(angles.alpha)},{fmt(angles.beta)}",
        "twirl": ns.twirl.strip().lower(),
        "copies": f"{copies[0]}..{copies[-1]}",
    }
    emit(render("repeater", args, ns.seed, columns, rows, ns.format, started), ns.out)
    return EXIT_OK


def cmd_twirl_approx(ns) -> int:
    started = time.perf_counter()
    n1, n2, angles = parse_resource(ns.resource)
    ms = parse_int_list(ns.m)
    if ns.seeds < 1:
        raise UsageError("seeds must be >= 1")
    rho = ng.prepare_resource(n1, n2, angles)
    exact = fid.isotropic_twirl_exact(rho)
    rows = []
    for M in sorted(set(ms)):
        values = []
        for s in range(ns.seeds):
            # seed s is shared across M, so a larger M extends the same sample stream
            cfg = fid.TwirlApproxConfig(M, nk.derive_seed(ns.seed, s))
            value = fid.uhlmann_fidelity(fid.isotropic_twirl_approx(rho, cfg), exact)
            values.append(value)
            rows.append({"M": M, "kind": "sample", "seed_index": s, "fidelity": value})
        rows.append({"M": M, "kind": "median", "seed_index": None, "fidelity": float(np.median(values))})
    args = {"resource": f"{n1},{n2},{fmt(angles.alpha)},{fmt(angles.beta)}", "m": ",".join(map(str, sorted(set(ms)))), "seeds": ns.seeds}
    emit(render("twirl-approx", args, ns.seed, ["M", "kind", "seed_index", "fidelity"], rows, ns.format, started), ns.out)
    return EXIT_OK


def sweep_cell(kind1: str, kind2: str, p: float, q: float, metric: str) -> tuple[float, float, float, bool]:
    """Value of one sweep cell; returns (p, q, value, sdp_failed)."""
    n1 = ng.NoiseSpec(kind1, p)
    n2 = ng.NoiseSpec(kind2, q)
    try:
        if metric == "fb":
            value = tp.eval_protocol_b(n1, n2)
        elif metric == "fe":
            value = tp.eval_protocol_e(n1, n2)[0]
        elif metric == "fd":
            value = tp.eval_protocol_d(n1, n2)
        elif metric == "eta":
            value = tp.improvement_ratio_eta(n1, n2)
        else:
            try:
                value = rp.improvement_ratio_zeta(n1, n2)
            except ValueError:
                value = float("nan")
    except SdpConvergenceError:
        return p, q, float("nan"), True
    return p, q, float(value), False


_KIND_TOKENS = {"bf": "BF", "pf": "PF", "dep": "D", "ad": "AD", "id": "ID"}


def cmd_sweep(ns) -> int:
    started = time.perf_counter()
    k1 = _KIND_TOKENS.get(ns.n1.strip().lower())
    k2 = _KIND_TOKENS.get(ns.n2.strip().lower())
    if k1 is None or k2 is None:
        raise UsageError("noise kinds must be one of bf, pf, dep, ad, id")
    ps, qs = parse_range(ns.p), parse_range(ns.q)
    if ns.workers < 1:
        raise UsageError("workers must be >= 1")
    cells = [(k1, k2, p, q, ns.metric) for p in ps for q in qs]
    if ns.workers == 1:
        results = [sweep_cell(*c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=ns.workers) as pool:
            results = list(pool.map(sweep_cell, *zip(*cells), chunksize=max(1, len(cells) // (4 * ns.workers))))
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [{"p": p, "q": q, "value": v} for p, q, v, _ in results]
    args = {"n1": ns.n1.lower(), "n2": ns.n2.lower(), "p": ns.p, "q": ns.q, "metric": ns.metric}
    emit(render("sweep", args, ns.seed, ["p", "q", "value"], rows, ns.format, started), ns.out)
    return EXIT_SDP if any(r[3] for r in results) else EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: $QNETLAB_SEED or 0)")

    parser = _Parser(prog="qnetlab", description="Teleportation and repeater fidelity experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("teleport", parents=[common], help="protocols b, d, e and eta for one noise pair")
    p.add_argument("--n1", required=True, help="noise on the first qubit: bf:<p>|pf:<p>|dep:<p>|ad:<p>|id")
    p.add_argument("--n2", required=True, help="noise on the second qubit")
    p.add_argument("--grid-step", type=parse_angle_arg, default=tp.GRID_STEP, help="angle grid step in radians")
    p.set_defaults(func=cmd_teleport)

    p = sub.add_parser("repeater", parents=[common], help="chain fidelities for N = a..b links")
    p.add_argument("--resource", required=True, help="n1,n2[,alpha,beta]")
    p.add_argument("--twirl", default="none", help="none | exact | approx:<M>")
    p.add_argument("--copies", default="1..5", help="range a..b within [1, 12]")
    p.set_defaults(func=cmd_repeater)

    p = sub.add_parser("twirl-approx", parents=[common], help="sampled vs exact isotropic twirl")
    p.add_argument("--resource", required=True, help="n1,n2[,alpha,beta]")
    p.add_argument("--m", default="1,5,10,20,50", help="comma-separated sample counts")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds per sample count")
    p.set_defaults(func=cmd_twirl_approx)

    p = sub.add_parser("sweep", parents=[common], help="metric over a (p, q) grid")
    p.add_argument("--n1", required=True, help="noise kind: bf|pf|dep|ad|id")
    p.add_argument("--n2", required=True, help="noise kind: bf|pf|dep|ad|id")
    p.add_argument("--p", required=True, help="a:b:step for the first parameter")
    p.add_argument("--q", required=True, help="a:b:step for the second parameter")
    p.add_argument("--metric", choices=METRICS, required=True)
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def parse_angle_arg(text: str) -> float:
    try:
        return parse_angle(text)
    except UsageError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.seed is None:
            ns.seed = default_seed()
        if not 0 <= ns.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        return ns.func(ns)
    except UsageError as err:
        parser.error(str(err))
    return EXIT_USAGE
