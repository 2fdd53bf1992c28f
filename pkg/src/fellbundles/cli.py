"""Command-line frontend.

Exit codes: 0 pass, 1 mathematical failure, 2 structural or schema failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import specfile
from .applications import fixture_catalogue, run_fixture
from .demiequiv import derived_properties_check, validate_demi
from .fellbundle import validate_fell_bundle
from .groupoid import validate_action, validate_groupoid
from .imprimitivity import (build_imprimitivity_bundle, construction_properties_check,
                            uniqueness_iso, validate_equivalence)
from .report import StructuralError, _fmt

DEFAULT_TOL = 1e-9
EXIT_PASS, EXIT_FAIL, EXIT_STRUCTURAL = 0, 1, 2


class Outcome:
    """Collected reports plus free-form sections for one command run."""

    def __init__(self, command):
        self.command = command
        self.reports = []
        self.sections = {}
        self.notes = []
        self.failed = False

    def add(self, rep):
        self.reports.append(rep)
        self.failed |= not rep.passed
        return rep.passed

    @property
    def passed(self):
        return not self.failed

    def to_dict(self):
        return {"command": self.command, "passed": self.passed,
                "max_residual": _fmt(max((r.max_residual for r in self.reports), default=0.0)),
                **self.sections,
                "notes": self.notes,
                "reports": [r.to_dict() for r in self.reports]}

    def to_text(self):
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"note: {n}" for n in self.notes]
        for key, val in self.sections.items():
            lines.append(f"{key}:")
            lines += ["  " + row for row in _text_rows(val)]
        lines += [r.to_text() for r in self.reports]
        return "\n".join(lines)


def _text_rows(val):
    if isinstance(val, dict):
        return [f"{k}: {json.dumps(v)}" for k, v in val.items()]
    if isinstance(val, list):
        return [json.dumps(v) for v in val]
    return [json.dumps(val)]


def _settings(args, spec=None):
    tol = args.tol if args.tol is not None else (spec.tolerance if spec and spec.tolerance else DEFAULT_TOL)
    seed = args.seed if args.seed is not None else (spec.seed if spec and spec.seed is not None else 0)
    return float(tol), int(seed)


# -- validation pipeline -------------------------------------------------------------

def _validate_inputs(spec, out, tol, seed, derived=True):
    """Run every applicable validator; later stages need earlier ones to pass."""
    G = spec.groupoid
    if not out.add(validate_groupoid(G)):
        return False
    if not out.add(validate_fell_bundle(spec.bundle, tol, seed=seed)):
        return False
    if spec.demi is None:
        return True
    if not out.add(validate_action(G, spec.demi.action)):
        return False
    if not out.add(validate_demi(spec.demi, tol)):
        return False
    if derived and not out.add(derived_properties_check(spec.demi, tol=tol, seed=seed)):
        return False
    return True


def _validate_equivalence(e, out, tol, seed, label):
    ok = out.add(_relabel(validate_groupoid(e.base), label))
    ok = ok and out.add(_relabel(validate_fell_bundle(e.bundle, tol, seed=seed), label))
    return ok and out.add(_relabel(validate_equivalence(e, tol), label))


def _relabel(rep, label):
    rep.subject = f"{label} {rep.subject}".strip()
    return rep


def cmd_validate(args, out):
    spec = specfile.load(args.path)
    tol, seed = _settings(args, spec)
    if _validate_inputs(spec, out, tol, seed) and spec.equivalence is not None:
        _validate_equivalence(spec.equivalence, out, tol, seed, "equivalence")
    return None


def cmd_construct(args, out):
    spec = specfile.load(args.path)
    tol, seed = _settings(args, spec)
    if spec.demi is None:
        raise StructuralError("the file carries no demi-equivalence")
    if not _validate_inputs(spec, out, tol, seed, derived=False):
        out.notes.append("input failed validation; nothing constructed")
        return None
    e = build_imprimitivity_bundle(spec.demi, tol=max(tol, 1e-8), check=False)
    out.add(construction_properties_check(spec.demi, tol, seed=seed))
    _validate_equivalence(e, out, tol, seed, "constructed")
    out.sections["dims"] = {"input": list(spec.bundle.dims), "constructed": list(e.bundle.dims)}
    return specfile.dumps(specfile.SpecFile(spec.bundle, spec.demi, e, spec.tolerance, spec.seed))


def cmd_compare(args, out):
    a, b = specfile.load(args.path_a), specfile.load(args.path_b)
    tol, seed = _settings(args, a)
    if a.equivalence is None or b.equivalence is None:
        raise StructuralError("both files must carry an equivalence section")
    da, db = specfile.encode(a), specfile.encode(b)
    for key in ("groupoid", "fell_bundle", "action", "demi_equivalence"):
        if not _same_section(da[key], db[key], tol):
            out.failed = True
            out.notes.append(f"the files differ in their '{key}' section")
            return None
    iso = uniqueness_iso(a.equivalence, b.equivalence, tol, strict=False, seed=seed)
    out.add(iso.report)
    out.sections["omega"] = {
        "base_map": [int(v) for v in iso.base_map],
        "fibre_residuals": [_fmt(r) for r in _fibre_residuals(a.equivalence, b.equivalence, iso)],
    }
    return None


def _same_section(x, y, tol):
    """Structural equality with numeric entries compared to ``tol``."""
    if isinstance(x, dict) and isinstance(y, dict):
        return x.keys() == y.keys() and all(_same_section(x[k], y[k], tol) for k in x)
    if isinstance(x, list) and isinstance(y, list):
        return len(x) == len(y) and all(_same_section(u, v, tol) for u, v in zip(x, y))
    if isinstance(x, float) or isinstance(y, float):
        return abs(float(x) - float(y)) <= tol * (1 + abs(float(x)))
    return x == y


def _fibre_residuals(e1, e2, iso):
    """Per arrow: relative misfit of Omega on the left inner products in that fibre."""
    if not iso.fibre_maps:
        return []
    worst = np.zeros(e1.base.n_arrows)
    for (x, y), T in e1.lip.items():
        g = e1.leoq_table[(x, y)]
        lhs = T.reshape(-1, T.shape[-1]) @ iso.fibre_maps[g]
        rhs = e2.lip[(x, y)].reshape(lhs.shape)
        worst[g] = max(worst[g], np.abs(lhs - rhs).max(initial=0.0) / (1 + np.abs(rhs).max(initial=0.0)))
    return worst.tolist()


def _fixture_params(tokens):
    params = {}
    for tok in tokens:
        if "=" in tok:
            k, v = tok.split("=", 1)
            params[k] = v
        else:
            params["bundle"] = tok
    return params


def cmd_fixture(args, out):
    catalogue = fixture_catalogue()
    if args.name not in catalogue:
        raise StructuralError(f"unknown fixture '{args.name}'; known: {', '.join(catalogue)}")
    tol, seed = _settings(args)
    params = _fixture_params(args.params)
    params.setdefault("seed", str(seed))
    f = catalogue[args.name](params)
    r = run_fixture(f, max(tol, 1e-8))
    out.failed |= not r.passed
    d = r.to_dict()
    out.sections["fixture"] = {
        "name": d["name"],
        "params": dict(sorted(params.items())),
        "error": d["error"],
        "max_residual": _fmt(d["max_residual"]),
        "stages": {k: {"passed": v["passed"], "max_residual": _fmt(v["max_residual"])}
                   for k, v in d["stages"].items()},
        "base_map": d["base_map"],
    }
    if r.constructed is not None:
        e = r.constructed
        out.sections["dimensions"] = [
            {"arrow": g, "pair": [int(v) for v in e.groupoid.rep[g]], "constructed": e.bundle.dims[g],
             "expected": f.expected.bundle.dims[int(r.base_map[g])] if r.base_map else None}
            for g in e.base.arrows]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        fb = f.demi.bundle
        if r.constructed is not None:
            specfile.write(specfile.SpecFile(fb, f.demi, r.constructed), os.path.join(args.out, "constructed.json"))
        specfile.write(specfile.SpecFile(fb, f.demi, f.expected), os.path.join(args.out, "expected.json"))
    return None


# -- entry point ----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help=f"tolerance (default {DEFAULT_TOL})")
    common.add_argument("--seed", type=int, default=None, help="seed for sampled norm checks")
    common.add_argument("--out", default=None, help="output file (construct) or directory (fixture)")
    common.add_argument("--report", choices=("text", "machine"), default="text")

    p = argparse.ArgumentParser(prog="fellbundles",
                                description="Validate, construct and compare finite Fell bundle data.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("validate", parents=[common], help="run all applicable validators")
    s.add_argument("path", help="spec file, or - for standard input")
    s = sub.add_parser("construct", parents=[common], help="build the imprimitivity bundle")
    s.add_argument("path", help="spec file, or - for standard input")
    s = sub.add_parser("compare", parents=[common], help="uniqueness isomorphism between two equivalences")
    s.add_argument("path_a")
    s.add_argument("path_b")
    s = sub.add_parser("fixture", parents=[common], help="run a named fixture")
    s.add_argument("name", help="self, matrix, transformation or kumjian")
    s.add_argument("params", nargs="*", help="bundle name (z2, z3, pair2, point, random) or key=value")
    return p


COMMANDS = {"validate": cmd_validate, "construct": cmd_construct,
            "compare": cmd_compare, "fixture": cmd_fixture}


def _error(args, stdout, stderr, exc, code):
    msg = f"{type(exc).__name__}: {exc}"
    if args.report == "machine":
        stdout.write(json.dumps({"command": args.command, "passed": False, "error": msg}, indent=1) + "\n")
    else:
        stderr.write(f"error: {msg}\n")
    return code


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    out = Outcome(args.command)
    try:
        payload = COMMANDS[args.command](args, out)
    except (StructuralError, KeyError, OSError) as exc:
        return _error(args, stdout, stderr, exc, EXIT_STRUCTURAL)
    except ValueError as exc:
        # numerical failure inside a construction step
        return _error(args, stdout, stderr, exc, EXIT_FAIL)
    report = json.dumps(out.to_dict(), indent=1) if args.report == "machine" else out.to_text()
    if payload is not None and args.out is None:
        stdout.write(payload)
        stderr.write(report + "\n")
    else:
        if payload is not None:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(payload)
        stdout.write(report + "\n")
    return EXIT_PASS if out.passed else EXIT_FAIL
