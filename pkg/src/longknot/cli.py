"""Command line front end.

Every run is described by a :class:`RunConfig`; flags override values from
an optional JSON config file. Result records are JSON lines containing the
full config, so ``longknot rerun --record FILE`` reproduces them.

Exit codes: 0 success, 1 failed check, 2 invalid configuration,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .configspace import ProposalSpec, probe_configurations, sample
from .diagrams import (
    DiagramDegreeError,
    complete_permutation,
    enumerate_connected,
    involution_residual,
    involution_sign,
    parity_report,
)
from .geometry import FAMILIES, IsotopyPath, LongKnot, LoopCurve, make_knot
from .invariants import (
    InvariantResult,
    ProximityError,
    dtheta1_probe,
    linking_number,
    mixed_expectation,
    term_integrands,
    theta1,
    theta2,
    theta3,
)
from .mc import Estimate, NumericalAbort

COMMANDS = ("compute", "sweep", "parity-check", "diagrams", "degree-audit")
THETA_INVARIANTS = ("theta1", "theta2", "theta2_compact", "theta3", "theta3_even")
INVARIANTS = ("lk",) + THETA_INVARIANTS + ("dtheta1_probe", "mixed_expectation")
MIN_SAMPLES = 1000
PARITY_TOL = 1e-12
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

# named involutions for the printed Θ₁/Θ₂ terms (label -> label)
NAMED_INVOLUTIONS = {
    "theta1": {"term1": {1: 2, 2: 1}},
    "theta2": {
        "term1": {1: 3, 3: 1},
        "term2": {1: 2, 2: 1, 3: 4, 4: 3},
        "term3": {1: 2, 2: 1},
    },
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    command: str = "compute"
    invariant: Optional[str] = None
    m: int = 4
    knot: str = "flat"
    knot_params: Dict = field(default_factory=dict)
    loop: Optional[str] = None
    n: int = 100_000
    seed: int = 0
    workers: int = 1
    chunk: int = 8192
    antithetic: bool = False
    proposal: Dict = field(default_factory=dict)
    t: float = 0.5
    h: float = 1e-3
    ts: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    order: int = 1
    format: str = "csv"
    points: int = 1000
    lk_value: float = 0.0
    xi: List[List[float]] = field(default_factory=list)
    hbar: float = 1.0
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError(key, "unknown configuration key")
        return cls(**data)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        if not isinstance(self.m, int) or self.m < 4:
            raise ConfigError("m", "ambient dimension must be an integer >= 4")
        if self.knot not in FAMILIES:
            raise ConfigError("knot", f"unknown knot family {self.knot!r}; choose from {sorted(FAMILIES)}")
        if self.command in ("compute", "sweep", "parity-check", "degree-audit"):
            if self.invariant is None:
                raise ConfigError("invariant", "required for this command")
            if self.invariant not in INVARIANTS:
                raise ConfigError("invariant", f"unknown invariant {self.invariant!r}; choose from {list(INVARIANTS)}")
        if self.command in ("compute", "sweep") and self.invariant != "mixed_expectation" and self.n < MIN_SAMPLES:
            raise ConfigError("n", f"need at least {MIN_SAMPLES} samples")
        if self.command == "sweep" and self.invariant not in THETA_INVARIANTS + ("lk",):
            raise ConfigError("invariant", "sweeps support lk and the Θ invariants")
        if self.command == "parity-check" and self.invariant not in ("theta1", "theta2", "theta3"):
            raise ConfigError("invariant", "parity checks cover theta1, theta2 and theta3")
        if self.command == "degree-audit" and self.invariant not in THETA_INVARIANTS:
            raise ConfigError("invariant", "degree audits cover the Θ invariants")
        if self.invariant == "lk" and self.command in ("compute", "sweep") and not self.loop:
            raise ConfigError("loop", "the linking number needs --loop")
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        if self.antithetic and (self.n % 2 or self.chunk % 2):
            raise ConfigError("n", "antithetic runs need an even n and chunk")
        if self.command == "diagrams":
            if not 1 <= self.order <= 4:
                raise ConfigError("order", "supported orders are 1..4")
            if self.format not in ("csv", "json"):
                raise ConfigError("format", "choose csv or json")
        if self.points < 1:
            raise ConfigError("points", "must be positive")
        try:
            self.proposal_spec()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("proposal", str(exc)) from None

    def proposal_spec(self) -> ProposalSpec:
        return ProposalSpec(**self.proposal)

    def make_knot(self) -> LongKnot:
        try:
            return make_knot(self.knot, self.m, **self.knot_params)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("knot_params", str(exc)) from None

    def make_loop(self) -> LoopCurve:
        return parse_loop(self.loop, self.m)

    def mc_options(self) -> Dict:
        return dict(spec=self.proposal_spec(), antithetic=self.antithetic, workers=self.workers, chunk=self.chunk)


def parse_loop(text: Optional[str], m: int) -> LoopCurve:
    """``meridian:R[:-1]`` or ``offset:D[:R[:-1]]`` (circle centred D along axis m-1, not encircling)."""
    if not text:
        raise ConfigError("loop", "missing loop description")
    parts = text.split(":")
    try:
        kind = parts[0]
        nums = [float(p) for p in parts[1:]]
        if kind == "meridian":
            radius = nums[0] if nums else 1.0
            orient = int(nums[1]) if len(nums) > 1 else 1
            return LoopCurve.meridian(m, radius, orientation=orient)
        if kind == "offset":
            dist = nums[0] if nums else 10.0
            radius = nums[1] if len(nums) > 1 else 1.0
            orient = int(nums[2]) if len(nums) > 2 else 1
            e1, e2, c = np.zeros(m), np.zeros(m), np.zeros(m)
            e1[m - 2] = e2[m - 1] = 1.0
            c[m - 2] = dist
            return LoopCurve.circle(c, radius, e1, e2, orientation=orient)
    except (ValueError, IndexError) as exc:
        raise ConfigError("loop", f"cannot parse {text!r}: {exc}") from None
    raise ConfigError("loop", f"unknown loop kind {parts[0]!r}; use meridian or offset")


# --- command implementations ----------------------------------------------------

def _estimate_record(est: Estimate) -> Dict:
    return {"value": est.value, "stderr": est.stderr, "n_samples": est.n_samples, "seed": est.seed,
            "n_nonfinite": est.n_nonfinite}


def compute_invariant(cfg: RunConfig, knot: Optional[LongKnot] = None) -> Dict:
    knot = knot if knot is not None else cfg.make_knot()
    opts = cfg.mc_options()
    name = cfg.invariant
    if name == "mixed_expectation":
        xi = np.asarray(cfg.xi, dtype=float) if cfg.xi else np.zeros((1, 1))
        if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
            raise ConfigError("xi", "must be a square matrix")
        return {"value": mixed_expectation(cfg.lk_value, xi, cfg.hbar)}
    if name == "lk":
        try:
            return _estimate_record(linking_number(knot, cfg.make_loop(), cfg.n, cfg.seed, **opts))
        except ProximityError as exc:
            raise ConfigError("loop", str(exc)) from None
    if name == "dtheta1_probe":
        try:
            path = IsotopyPath(knot)
        except ValueError as exc:
            raise ConfigError("knot", str(exc)) from None
        lhs, rhs = dtheta1_probe(path, cfg.t, cfg.n, cfg.seed, h=cfg.h, **opts)
        return {"value": lhs.value, "stderr": lhs.stderr, "lhs": _estimate_record(lhs), "rhs": _estimate_record(rhs)}
    res = _theta(name, knot, cfg.n, cfg.seed, opts)
    out = res.to_dict()
    out.pop("knot")
    return out


def _theta(name, knot, n, seed, opts) -> InvariantResult:
    if name == "theta1":
        return theta1(knot, n, seed, **opts)
    if name in ("theta2", "theta2_compact"):
        return theta2(knot, n, seed, form="printed" if name == "theta2" else "compact", **opts)
    return theta3(knot, n, seed, form="printed" if name == "theta3" else "even_compact", **opts)


def cmd_compute(cfg: RunConfig, out) -> int:
    result = compute_invariant(cfg)
    record = {"version": __version__, "config": cfg.to_dict(), "result": result}
    _write_records(cfg.out, [record])
    _summary(out, cfg.invariant, result)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out) -> int:
    knot = cfg.make_knot()
    try:
        path = IsotopyPath(knot)
    except ValueError as exc:
        raise ConfigError("knot", str(exc)) from None
    records = []
    for t in sorted(cfg.ts):
        result = compute_invariant(cfg, path.at(t))
        result["t"] = t
        records.append({"version": __version__, "config": cfg.to_dict(), "result": result})
        _summary(out, f"{cfg.invariant} t={t:g}", result)
    _write_records(cfg.out, records)
    vals = [(r["result"]["t"], r["result"]["value"], r["result"]["stderr"]) for r in records]
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            (ta, va, sa), (tb, vb, sb) = vals[i], vals[j]
            z = (va - vb) / math.hypot(sa, sb) if (sa or sb) else 0.0
            print(f"  t={ta:g} vs t={tb:g}: difference {va - vb:+.3e}, z = {z:+.2f}", file=out)
    return EXIT_OK


def cmd_parity(cfg: RunConfig, out) -> int:
    knot = cfg.make_knot()
    order = {"theta1": 1, "theta2": 2, "theta3": 3}[cfg.invariant]
    rng = np.random.default_rng(cfg.seed)
    ok = True
    for d in enumerate_connected(order):
        pts = probe_configurations(d.s, d.t, cfg.m, knot, rng, cfg.points)
        named = NAMED_INVOLUTIONS.get(cfg.invariant, {}).get(d.name)
        report = parity_report(d, cfg.m, knot, pts)
        if named is not None:
            eps = involution_sign(d, complete_permutation(d, named), cfg.m)
            resid = involution_residual(d, named, cfg.m, knot, pts)
            mapping = " ".join(f"{a}<->{b}" for a, b in named.items() if a < b)
            sign = "+" if eps < 0 else "-"
            print(f"{d.name}: involution {mapping} ({'odd' if eps < 0 else 'even'}): "
                  f"max |g {sign} g∘inv| = {resid:.2e} (relative)", file=out)
            ok &= resid <= PARITY_TOL
        elif report.vanishes:
            print(f"{d.name}: integrand vanishes identically at m={cfg.m}", file=out)
        else:
            status = f"{len(report.odd)} odd involution(s)" if report.odd else "no odd involution"
            print(f"{d.name}: {status}; worst residual {report.max_residual:.2e}", file=out)
            ok &= report.max_residual <= PARITY_TOL
    return EXIT_OK if ok else EXIT_FAIL


def cmd_diagrams(cfg: RunConfig, out) -> int:
    rows = [d.as_row() for d in enumerate_connected(cfg.order)]
    if cfg.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    out.write(text)
    return EXIT_OK


def cmd_degree_audit(cfg: RunConfig, out) -> int:
    knot = make_knot("flat", cfg.m)
    ok = True
    for label, s, t, g in term_integrands(cfg.invariant, cfg.m, knot):
        if hasattr(g, "diagram"):
            d = g.diagram
            deg, dim = d.form_degree(cfg.m), d.config_dim(cfg.m)
        else:
            _, th, et = g.monomials[0]
            deg, dim = len(th) * (cfg.m - 1) + len(et) * (cfg.m - 3), s * (cfg.m - 2) + t * cfg.m
        ok &= deg == dim
        print(f"{label}: C_{{{s},{t}}} form degree {deg}, dimension {dim} {'ok' if deg == dim else 'MISMATCH'}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_rerun(path: str, line: int, workers: Optional[int], out) -> int:
    with open(path) as fh:
        records = [json.loads(x) for x in fh if x.strip()]
    if not records:
        raise ConfigError("record", f"{path} holds no records")
    try:
        record = records[line]
    except IndexError:
        raise ConfigError("line", f"{path} has {len(records)} record(s)") from None
    cfg = RunConfig.from_dict(record["config"])
    if workers is not None:
        cfg.workers = workers
    cfg.out = None
    cfg.validate()
    if cfg.command != "compute":
        raise ConfigError("command", "only compute records can be re-run")
    result = compute_invariant(cfg)
    same = result["value"] == record["result"]["value"]
    print(f"recorded {record['result']['value']!r}, recomputed {result['value']!r}: "
          f"{'identical' if same else 'DIFFERENT'} (workers={cfg.workers})", file=out)
    return EXIT_OK if same else EXIT_FAIL


def _write_records(path: Optional[str], records: List[Dict]) -> None:
    if not path:
        return
    with open(path, "a") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _summary(out, label: str, result: Dict) -> None:
    if "stderr" in result:
        print(f"{label}: {result['value']:.6g} ± {result['stderr']:.2g}", file=out)
    else:
        print(f"{label}: {result['value']:.12g}", file=out)
    for term in result.get("terms", []):
        print(f"  {term['label']} C_{{{term['space'][0]},{term['space'][1]}}}: "
              f"{term['value']:.4g} ± {term['stderr']:.2g}", file=out)
    if "lhs" in result:
        print(f"  lhs {result['lhs']['value']:.4g} ± {result['lhs']['stderr']:.2g}, "
              f"rhs {result['rhs']['value']:.4g} ± {result['rhs']['stderr']:.2g}", file=out)


# --- argument parsing -------------------------------------------------------------

def _count(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"{text} is not a whole number")
    return int(value)


def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longknot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p, mc=True):
        p.add_argument("--config", default=S, help="JSON file with configuration keys")
        p.add_argument("--invariant", default=S, help=f"one of {', '.join(INVARIANTS)}")
        p.add_argument("--m", type=int, default=S, help="ambient dimension (>= 4)")
        p.add_argument("--knot", default=S, help=f"knot family ({', '.join(FAMILIES)})")
        p.add_argument("--knot-param", dest="knot_params", action="append", type=_key_value, default=S,
                       metavar="KEY=VALUE", help="knot parameter (JSON value); repeatable")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--out", default=S, help="append JSON-lines records here")
        if mc:
            p.add_argument("--n", type=_count, default=S, help="samples per term, e.g. 2e6")
            p.add_argument("--workers", type=int, default=S)
            p.add_argument("--chunk", type=_count, default=S)
            p.add_argument("--antithetic", action="store_true", default=S)
            p.add_argument("--proposal-scale", dest="proposal_scale", type=float, default=S)
            p.add_argument("--tail-exponent", dest="tail_exponent", type=float, default=S)
            p.add_argument("--proposal-mode", dest="proposal_mode", default=S,
                           choices=("iid-heavy-tail", "stratified"))
            p.add_argument("--loop", default=S, help="meridian:R[:-1] or offset:D[:R[:-1]]")

    p = sub.add_parser("compute", help="estimate one invariant")
    common(p)
    p.add_argument("--t", type=float, default=S, help="path parameter for dtheta1_probe")
    p.add_argument("--h", type=float, default=S, help="finite-difference step for dtheta1_probe")
    p.add_argument("--lk-value", dest="lk_value", type=float, default=S)
    p.add_argument("--xi", type=json.loads, default=S, help="rho(Xi) as a JSON matrix")
    p.add_argument("--hbar", type=float, default=S)

    p = sub.add_parser("sweep", help="evaluate an invariant along the amplitude path")
    common(p)
    p.add_argument("--ts", type=_floats, default=S, help="comma-separated path parameters")

    p = sub.add_parser("parity-check", help="pointwise involution checks")
    common(p, mc=False)
    p.add_argument("--points", type=_count, default=S)

    p = sub.add_parser("diagrams", help="table of connected diagrams")
    p.add_argument("--order", type=int, default=S)
    p.add_argument("--format", default=S, choices=("csv", "json"))
    p.add_argument("--out", default=S)

    p = sub.add_parser("degree-audit", help="form degree vs configuration dimension per term")
    common(p, mc=False)

    p = sub.add_parser("rerun", help="recompute a compute record and compare bit-for-bit")
    p.add_argument("--record", required=True)
    p.add_argument("--line", type=int, default=-1, help="record index (default: last)")
    p.add_argument("--workers", type=int, default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = vars(args).copy()
    command = values.pop("command")
    data: Dict = {}
    if "config" in values:
        path = values.pop("config")
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("config", "must hold a JSON object")
    proposal = dict(data.pop("proposal", {}))
    for flag, key in (("proposal_scale", "scale"), ("tail_exponent", "tail_exponent"), ("proposal_mode", "mode")):
        if flag in values:
            proposal[key] = values.pop(flag)
    if "knot_params" in values:
        values["knot_params"] = {**data.pop("knot_params", {}), **dict(values["knot_params"])}
    data.update(values)
    data["command"] = command
    data["proposal"] = proposal
    cfg = RunConfig.from_dict(data)
    cfg.validate()
    return cfg


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            return cmd_rerun(args.record, args.line, args.workers, out)
        cfg = config_from_args(args)
        handler = {
            "compute": cmd_compute,
            "sweep": cmd_sweep,
            "parity-check": cmd_parity,
            "diagrams": cmd_diagrams,
            "degree-audit": cmd_degree_audit,
        }[cfg.command]
        return handler(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiagramDegreeError as exc:
        print(f"error: malformed diagram: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
