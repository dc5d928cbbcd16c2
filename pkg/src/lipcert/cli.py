"""Command-line front end.

Commands: ``lip`` (Lipschitz enclosure), ``eval`` (real or interval forward
pass), ``classify`` (possible argmax classes over a region), ``radius``
(certified robustness radius) and ``repro-exp1`` (bundled two-neuron
reproduction run checked against its expected trace).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from lipcert.interval import HyperBox, Interval, ShapeError
from lipcert.lipschitz import certified_radius, lipschitz_enclosure, possible_classes
from lipcert.maximize import MaxParams
from lipcert.network import (
    InputRegion,
    NetworkFormatError,
    eval_interval,
    eval_real,
    load_network,
    read_network,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISMATCH = 1

_VECTOR_FLAGS = ("--center", "--point")


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


def fmt_iv(iv: Interval) -> str:
    return f"[{fmt(iv.lo)}, {fmt(iv.hi)}]"


def parse_vector(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None
    if not all(np.isfinite(values)):
        raise UsageError(f"vector {text!r} has non-finite entries")
    return values


def _join_vector_args(argv: list[str]) -> list[str]:
    # "--center -4.8,-7.3" would otherwise be read as an unknown option
    out = []
    it = iter(argv)
    for arg in it:
        if arg in _VECTOR_FLAGS:
            nxt = next(it, None)
            out.append(arg if nxt is None else f"{arg}={nxt}")
        else:
            out.append(arg)
    return out


def _threads_default() -> int:
    env = os.environ.get("LIPCERT_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise UsageError(f"LIPCERT_THREADS must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipcert", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_region(p):
        p.add_argument("--center", help="comma-separated center of an inf-norm ball")
        p.add_argument("--radius", type=float, help="ball radius")
        p.add_argument("--box", help="JSON file with a box ([{lo, hi}, ...]) or a region object")

    def add_params(p, max_iter=100):
        p.add_argument("--max-iter", type=int, default=max_iter, help="bisection rounds")
        p.add_argument("--max-boxes", type=int, default=10 ** 6)
        p.add_argument("--delta", type=float, default=0.0, help="target enclosure width")
        p.add_argument("--threads", type=int, default=None)

    def add_report(p):
        p.add_argument("--report", help="write the JSON report to this path")
        p.add_argument("--no-timing", action="store_true",
                       help="write wall_ms as 0 so repeated runs give identical reports")

    lip = sub.add_parser("lip", help="enclose the local Lipschitz constant")
    lip.add_argument("--network", required=True)
    add_region(lip)
    lip.add_argument("--output", type=int, default=0)
    add_params(lip)
    lip.add_argument("--trace", action="store_true", help="include the per-round trace")
    add_report(lip)

    ev = sub.add_parser("eval", help="evaluate the network at a point or over a region")
    ev.add_argument("--network", required=True)
    ev.add_argument("--point")
    add_region(ev)

    cls = sub.add_parser("classify", help="possible argmax classes over a region")
    cls.add_argument("--network", required=True)
    add_region(cls)
    add_report(cls)

    rad = sub.add_parser("radius", help="certified robustness radius around a point")
    rad.add_argument("--network", required=True)
    rad.add_argument("--point", required=True)
    rad.add_argument("--radius", type=float, required=True, help="search radius")
    add_params(rad)
    add_report(rad)

    rep = sub.add_parser("repro-exp1", help="rerun the bundled two-neuron example")
    add_params(rep, max_iter=None)
    add_report(rep)
    return parser


def _params(args) -> MaxParams:
    try:
        return MaxParams(args.max_iter, args.max_boxes, args.delta)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _region(args, dims: int) -> InputRegion:
    if args.box is not None:
        if args.center is not None:
            raise UsageError("give either --box or --center/--radius")
        with open(args.box) as fh:
            obj = json.load(fh)
        # a bare list is a box, an object is a full region
        if isinstance(obj, list):
            region = InputRegion(box=HyperBox.from_json(obj))
        else:
            region = InputRegion.from_json(obj)
    else:
        if args.center is None or args.radius is None:
            raise UsageError("a region needs --center and --radius, or --box")
        region = InputRegion(center=tuple(parse_vector(args.center)), radius=args.radius)
    if region.dims != dims:
        raise UsageError(f"region has dimension {region.dims}, network expects {dims}")
    return region


def _write_report(args, obj: dict):
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def _lip_report(report, args, with_trace: bool) -> dict:
    obj = report.to_json()
    if not with_trace:
        obj["trace"] = []
    if args.no_timing:
        obj["wall_ms"] = 0.0
    return obj


def _print_trace(trace, out):
    for row in trace:
        print(f"  iter {row.iter}: {fmt_iv(row.value)}  boxes {row.boxes_retained}", file=out)


def cmd_lip(args, out) -> int:
    net = read_network(args.network)
    region = _region(args, net.input_dim)
    if not 0 <= args.output < net.output_count:
        raise UsageError(f"output {args.output} out of range for {net.output_count} outputs")
    report = lipschitz_enclosure(net, region, args.output, _params(args), args.threads)
    r = report.result
    if args.trace:
        _print_trace(r.trace, out)
    print(f"lipschitz {fmt_iv(r.value)}", file=out)
    print(f"stop {r.stop_reason.value} after {r.iterations} rounds, {r.box_count} boxes", file=out)
    _write_report(args, _lip_report(report, args, args.trace))
    return EXIT_OK


def cmd_eval(args, out) -> int:
    net = read_network(args.network)
    if args.point is not None:
        x = parse_vector(args.point)
        if len(x) != net.input_dim:
            raise UsageError(f"point has dimension {len(x)}, network expects {net.input_dim}")
        for j, v in enumerate(eval_real(net, np.array(x))):
            print(f"output {j}: {fmt(float(v))}", file=out)
        return EXIT_OK
    region = _region(args, net.input_dim)
    for j, iv in enumerate(eval_interval(net, region.to_box())):
        print(f"output {j}: {fmt_iv(iv)}", file=out)
    return EXIT_OK


def cmd_classify(args, out) -> int:
    net = read_network(args.network)
    region = _region(args, net.input_dim)
    classes = sorted(possible_classes(net, region.to_box()))
    print("possible classes: " + " ".join(map(str, classes)), file=out)
    _write_report(args, {"version": 1, "network_sha256": net.digest(),
                         "region": region.to_json(), "possible_classes": classes})
    return EXIT_OK


def cmd_radius(args, out) -> int:
    net = read_network(args.network)
    x = parse_vector(args.point)
    if len(x) != net.input_dim:
        raise UsageError(f"point has dimension {len(x)}, network expects {net.input_dim}")
    rep = certified_radius(net, x, args.radius, _params(args), args.threads)
    print(f"predicted class {rep.predicted}", file=out)
    for c in rep.competitors:
        print(f"  vs {c.index}: margin {fmt_iv(c.margin)}  lipschitz {fmt_iv(c.lipschitz)}"
              f"  radius {fmt(c.radius)}", file=out)
    print(f"certified radius {fmt(rep.radius)}", file=out)
    obj = rep.to_json()
    obj["network_sha256"] = net.digest()
    _write_report(args, obj)
    return EXIT_OK


def load_exp1():
    """Bundled network, region, output index and expected trace."""
    data = resources.files("lipcert") / "data"
    raw = json.loads((data / "exp1.json").read_text())
    expected = json.loads((data / "exp1_expected.json").read_text())
    net = load_network(json.dumps(raw))
    region = InputRegion.from_json(raw["region"])
    return net, region, int(raw["output"]), expected


def compare_trace(trace, expected: dict) -> list[str]:
    """Rows of ``trace`` that deviate from the expected table, as messages."""
    tol = float(expected["tolerance"])
    table = {int(r["iter"]): (float(r["lo"]), float(r["hi"])) for r in expected["trace"]}
    problems = []
    for row in trace:
        if row.iter not in table:
            continue
        lo, hi = table[row.iter]
        if abs(row.value.lo - lo) > tol or abs(row.value.hi - hi) > tol:
            problems.append(f"iter {row.iter}: got {fmt_iv(row.value)}, expected [{fmt(lo)}, {fmt(hi)}]")
    return problems


def cmd_repro_exp1(args, out) -> int:
    try:
        net, region, output, expected = load_exp1()
    except FileNotFoundError as e:
        raise UsageError(f"bundled fixture missing: {e}") from None
    if args.max_iter is None:
        args.max_iter = int(expected["max_iterations"])
    report = lipschitz_enclosure(net, region, output, _params(args), args.threads)
    r = report.result
    _print_trace(r.trace, out)
    print(f"lipschitz {fmt_iv(r.value)}", file=out)
    print(f"stop {r.stop_reason.value} after {r.iterations} rounds", file=out)
    _write_report(args, _lip_report(report, args, True))
    problems = compare_trace(r.trace, expected)
    for p in problems:
        print(f"MISMATCH {p}", file=sys.stderr)
    if problems:
        return EXIT_MISMATCH
    print(f"trace matches the expected table within {expected['tolerance']}", file=out)
    return EXIT_OK


COMMANDS = {
    "lip": cmd_lip,
    "eval": cmd_eval,
    "classify": cmd_classify,
    "radius": cmd_radius,
    "repro-exp1": cmd_repro_exp1,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_vector_args(argv))
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if getattr(args, "threads", None) is None:
            args.threads = _threads_default()
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return COMMANDS[args.command](args, out)
    except (UsageError, NetworkFormatError, ShapeError, ValueError, IndexError,
            OSError, json.JSONDecodeError, KeyError) as e:
        print(f"lipcert {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
