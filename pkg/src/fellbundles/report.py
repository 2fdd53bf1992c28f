"""Validation reports: per-axiom status with witnesses and residuals."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

MAX_WITNESSES = 5


class StructuralError(ValueError):
    """Malformed input (bad indices, shape mismatch, undefined composition).

    Kept distinct from axiom failures, which are reported rather than raised.
    """


@dataclass
class Witness:
    indices: tuple
    residual: float


@dataclass
class AxiomStatus:
    label: str
    passed: bool = True
    max_residual: float = 0.0
    checked: int = 0
    witnesses: list[Witness] = field(default_factory=list)
    note: str = ""


class ValidationReport:
    """Collects axiom checks.  A report passes iff every recorded axiom passes.

    Residuals are expected to be already scaled (relative to operand norms),
    so a single tolerance decides pass/fail.
    """

    def __init__(self, subject: str = "", tol: float = 1e-9):
        self.subject = subject
        self.tol = tol
        self.axioms: dict[str, AxiomStatus] = {}

    def _status(self, label):
        if label not in self.axioms:
            self.axioms[label] = AxiomStatus(label)
        return self.axioms[label]

    def record(self, label, residual, indices=(), tol=None):
        """Record one check; fails when residual exceeds the tolerance."""
        st = self._status(label)
        residual = float(residual)
        tol = self.tol if tol is None else tol
        st.checked += 1
        if math.isnan(residual):
            residual = math.inf
        if residual > st.max_residual:
            st.max_residual = residual
        if residual > tol:
            st.passed = False
            if len(st.witnesses) < MAX_WITNESSES:
                st.witnesses.append(Witness(tuple(_plain(i) for i in indices), residual))
        return residual <= tol

    def check(self, label, ok, indices=()):
        """Record a boolean (combinatorial) check: residual 0 or inf."""
        return self.record(label, 0.0 if ok else math.inf, indices)

    def touch(self, label, note=""):
        """Declare an axiom as checked (possibly vacuously), optionally with a note."""
        st = self._status(label)
        if note:
            st.note = note
        return st

    def merge(self, other: "ValidationReport", prefix=""):
        for label, st in other.axioms.items():
            mine = self._status(prefix + label)
            mine.passed &= st.passed
            mine.checked += st.checked
            mine.max_residual = max(mine.max_residual, st.max_residual)
            room = MAX_WITNESSES - len(mine.witnesses)
            mine.witnesses.extend(st.witnesses[:max(room, 0)])
            if st.note and not mine.note:
                mine.note = st.note
        return self

    @property
    def passed(self):
        return all(st.passed for st in self.axioms.values())

    @property
    def max_residual(self):
        finite = [st.max_residual for st in self.axioms.values()]
        return max(finite, default=0.0)

    def failed(self):
        return [label for label, st in self.axioms.items() if not st.passed]

    def __getitem__(self, label):
        return self.axioms[label]

    def __contains__(self, label):
        return label in self.axioms

    def to_dict(self):
        return {
            "subject": self.subject,
            "passed": self.passed,
            "tolerance": self.tol,
            "max_residual": _fmt(self.max_residual),
            "axioms": [
                {
                    "label": st.label,
                    "passed": st.passed,
                    "checked": st.checked,
                    "max_residual": _fmt(st.max_residual),
                    "witnesses": [
                        {"indices": list(w.indices), "residual": _fmt(w.residual)}
                        for w in st.witnesses
                    ],
                    **({"note": st.note} if st.note else {}),
                }
                for st in self.axioms.values()
            ],
        }

    def to_text(self):
        lines = [f"{self.subject or 'report'}: {'PASS' if self.passed else 'FAIL'}"
                 f" (max residual {_fmt(self.max_residual)})"]
        for st in self.axioms.values():
            mark = "ok  " if st.passed else "FAIL"
            line = f"  {mark} {st.label:<14} checked={st.checked:<6} max_residual={_fmt(st.max_residual)}"
            if st.note:
                line += f"  [{st.note}]"
            lines.append(line)
            for w in st.witnesses:
                lines.append(f"         witness {list(w.indices)} residual={_fmt(w.residual)}")
        return "\n".join(lines)

    def __repr__(self):
        return f"ValidationReport({self.subject!r}, passed={self.passed}, failed={self.failed()})"

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    try:
        return int(v)
    except (TypeError, ValueError):
        return str(v)


def _fmt(x):
    """Stable short float formatting for reports."""
    x = float(x)
    if math.isinf(x):
        return "inf"
    return float(f"{x:.3e}")
