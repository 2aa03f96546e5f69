"""``maassdyn`` command line.

Exit codes: 0 success, 1 a check failed or computation error, 2 usage
error, 3 summit condition violated, 4 unstable sphere envelope,
5 no candidate could be refined.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import parse_quadratic
from .config import RunConfig, build, load
from .geometry import ConditionAError, UnstableEnvelopeError, condition_A_report, compute_exterior, to_svg
from .geometry import dump_json as geometry_json
from .symdyn import build_branches
from .symdyn import dump_json as symbols_json

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_CONDITION_A = 3
EXIT_UNSTABLE = 4
EXIT_REFINE = 5

FORMATS = ("json", "latex", "text-equations")


class UsageError(Exception):
    pass


# --- serialization -----------------------------------------------------------


def _clean(obj):
    """JSON-ready copy with floats at fixed precision and complex split."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(float(obj.real)), "im": _clean(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, name: str, text: str) -> None:
    if cfg.out:
        d = Path(cfg.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    else:
        sys.stdout.write(text)


def _stamp(cfg: RunConfig, comment: str) -> str:
    return f"{comment} maassdyn {__version__} config {cfg.digest()}\n"


# --- arguments ---------------------------------------------------------------


def _shift(text: str) -> tuple[str, int]:
    key, sep, val = text.rpartition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"shift {text!r} is not CELL:ELEMENT=INT")
    try:
        return key, int(val)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"shift {text!r} has a non-integer value") from exc


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", default="example", help="bundled name (example, psl2z, hecke5, lambda17) or YAML path")
    common.add_argument("--preset", help="named choice preset from the group file")
    common.add_argument("--strip-base", help="left end of the vertical strip (exact number)")
    common.add_argument("--generator", action="append", default=[], metavar="CELL:ELEMENT", help="cycle generator pick, repeatable")
    common.add_argument("--shift", action="append", type=_shift, default=[], metavar="CELL:ELEMENT=INT", help="translation shift, repeatable")
    common.add_argument("--word-bound", type=int, default=4)
    common.add_argument("--order", type=int, default=32, help="Chebyshev nodes per symbol")
    common.add_argument("--kappa", type=float, help="chart half-width (default from the group file)")
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--out", help="output directory (default: stdout)")

    p = argparse.ArgumentParser(prog="maassdyn", description="Transfer operators, period functions and cocycles for Fuchsian groups.")
    p.add_argument("--version", action="version", version=f"maassdyn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", parents=[common], help="geometry, symbols and branches")
    t = sub.add_parser("transfer", parents=[common], help="transfer operator")
    t.add_argument("--format", default="json", help="json | latex | text-equations")
    for name in ("scan", "refine", "cocycle-verify"):
        q = sub.add_parser(name, parents=[common])
        q.add_argument("--t0", type=float, default=9.0)
        q.add_argument("--t1", type=float, default=10.0)
        q.add_argument("--step", type=float, default=0.01)
        if name != "scan":
            q.add_argument("--candidates", help="scan CSV or refine JSON with candidate t values")
        if name == "cocycle-verify":
            q.add_argument("--t", type=float, dest="t_value", help="eigenvalue guess instead of a candidate file")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--only", help="comma-separated check numbers")
    return p


def _config(ns) -> RunConfig:
    if ns.word_bound < 1:
        raise UsageError("--word-bound must be positive")
    if ns.order < 2:
        raise UsageError("--order must be at least 2")
    return RunConfig(
        group=ns.group,
        preset=ns.preset,
        strip_base=ns.strip_base,
        generators=list(ns.generator),
        shifts=dict(ns.shift),
        word_bound=ns.word_bound,
        order=ns.order,
        kappa=ns.kappa,
        t0=getattr(ns, "t0", 9.0),
        t1=getattr(ns, "t1", 10.0),
        step=getattr(ns, "step", 0.01),
        tol=ns.tol,
        out=ns.out,
    )


# --- commands ------------------------------------------------------------------


def cmd_analyze(cfg: RunConfig, ns) -> int:
    grp = load(cfg)
    r = cfg.resolved(grp)
    base = parse_quadratic(r.strip_base, grp.field_d) if r.strip_base is not None else None
    eb = compute_exterior(grp, strip_base=base, word_bound=r.word_bound)
    report = condition_A_report(eb)
    if not report.holds:
        _emit(cfg, "analysis.json", dumps({"meta": cfg.header(), "condition_A": report.to_dict()}))
        return EXIT_CONDITION_A
    p = build(cfg)
    doc = {
        "meta": cfg.header(),
        "condition_A": report.to_dict(),
        "tiling": json.loads(geometry_json(p.tiling)),
        "symbols": json.loads(symbols_json(p.system, build_branches(p.system, p.op))),
    }
    _emit(cfg, "analysis.json", dumps(doc))
    if cfg.out:
        _emit(cfg, "domain.svg", to_svg(p.tiling))
    return EXIT_OK


def cmd_transfer(cfg: RunConfig, ns) -> int:
    if ns.format not in FORMATS:
        raise UsageError(f"unknown format {ns.format!r}; choose from {', '.join(FORMATS)}")
    op = build(cfg).op
    if ns.format == "json":
        doc = {"meta": cfg.header(), "operator": op.to_dict()}
        _emit(cfg, "transfer.json", dumps(doc))
    elif ns.format == "latex":
        _emit(cfg, "transfer.tex", _stamp(cfg, "%") + op.to_latex() + "\n")
    else:
        _emit(cfg, "transfer.txt", _stamp(cfg, "#") + op.to_text() + "\n")
    return EXIT_OK


def _check_range(cfg: RunConfig) -> None:
    if cfg.step <= 0:
        raise UsageError("--step must be positive")
    if cfg.t1 < cfg.t0:
        raise UsageError("--t1 must not be below --t0")


def cmd_scan(cfg: RunConfig, ns) -> int:
    _check_range(cfg)
    from .spectral import scan

    res = scan(build(cfg).op, cfg.t0, cfg.t1, cfg.step, N=cfg.order, kappa=cfg.kappa)
    _emit(cfg, "scan.csv", _stamp(cfg, "#") + res.to_csv())
    if cfg.out:
        _emit(cfg, "candidates.json", dumps({"meta": cfg.header(), "candidates": res.candidates, "dip": res.threshold}))
    return EXIT_OK


def read_candidates(path: str | None) -> list[float]:
    if not path:
        raise UsageError("a candidate file from a previous scan is required (--candidates)")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"candidate file {path!r} not found")
    text = p.read_text()
    if p.suffix == ".json":
        doc = json.loads(text)
        if "candidates" in doc:
            return [float(c) for c in doc["candidates"]]
        return [float(r["t"]) for r in doc.get("refined", [])]
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    out = [float(r["t"]) for r in rows if r.get("candidate", "0").strip() == "1"]
    return out


def _refine_all(cfg: RunConfig, cands: list[float]):
    from .spectral import RefinementError, refine
    from .transfer import regularity_check

    p = build(cfg)
    refined, failed = [], []
    for c in cands:
        try:
            r = refine(p.op, c, N=cfg.order, kappa=cfg.kappa, max_residual=cfg.tol)
        except RefinementError as exc:
            failed.append({"guess": c, "error": str(exc)})
            continue
        refined.append((c, r, regularity_check(p.op, r.f, order=3, tol=1e-5)))
    return p, refined, failed


def cmd_refine(cfg: RunConfig, ns) -> int:
    cands = read_candidates(ns.candidates)
    if not cands:
        raise UsageError("the candidate file lists no candidates")
    _, refined, failed = _refine_all(cfg, cands)
    doc = {
        "meta": cfg.header(),
        "refined": [
            {"guess": c, "t": r.t, "s": r.s, "residual": r.residual, "sigma_min": r.sigma_min, "regularity": reg.to_dict()}
            for c, r, reg in refined
        ],
        "failed": failed,
    }
    _emit(cfg, "refined.json", dumps(doc))
    return EXIT_OK if refined else EXIT_REFINE


def cmd_cocycle_verify(cfg: RunConfig, ns) -> int:
    from .cohomology import cocycle_from_period, period_from_cocycle, verify_relations

    if ns.t_value is not None:
        cands = [ns.t_value]
    else:
        cands = read_candidates(ns.candidates)
    if not cands:
        raise UsageError("no candidate to verify")
    p, refined, failed = _refine_all(cfg, cands)
    results, ok = [], True
    for c, r, _ in refined:
        coc = cocycle_from_period(p.system, r.f)
        rep = verify_relations(coc, tol=cfg.tol)
        back = period_from_cocycle(coc, N=r.f.N, kappa=cfg.kappa)
        rt = max(float(np.max(np.abs(back.node_values(a.index) - r.f.node_values(a.index)))) for a in p.system.symbols)
        ok = ok and rep.passed
        results.append({"t": r.t, "relations": rep.to_dict(), "round_trip": rt})
    _emit(cfg, "cocycle.json", dumps({"meta": cfg.header(), "results": results, "failed": failed}))
    if not refined:
        return EXIT_REFINE
    return EXIT_OK if ok else EXIT_FAILED


def cmd_verify(cfg: RunConfig, ns) -> int:
    from .acceptance import run_all

    only = None
    if ns.only:
        try:
            only = {int(x) for x in ns.only.split(",")}
        except ValueError as exc:
            raise UsageError("--only expects comma-separated integers") from exc
    results = run_all(only, echo=lambda line: print(line, flush=True))
    if cfg.out:
        _emit(cfg, "verify.json", dumps({"meta": cfg.header(), "checks": [r.to_dict() for r in results]}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "analyze": cmd_analyze,
    "transfer": cmd_transfer,
    "scan": cmd_scan,
    "refine": cmd_refine,
    "cocycle-verify": cmd_cocycle_verify,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(ns)
        try:
            load(cfg)
        except (ValueError, KeyError, FileNotFoundError) as exc:
            raise UsageError(f"cannot load group: {exc}") from exc
        return COMMANDS[ns.command](cfg, ns)
    except UsageError as exc:
        print(f"maassdyn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConditionAError as exc:
        print(f"maassdyn: summit condition violated: {exc}", file=sys.stderr)
        return EXIT_CONDITION_A
    except UnstableEnvelopeError as exc:
        print(f"maassdyn: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except KeyError as exc:
        print(f"maassdyn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"maassdyn: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
