"""JSON spec files: schema validation, loading and deterministic writing."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from . import groupoid as gpd
from .demiequiv import DemiEquivalence
from .fellbundle import FellBundle
from .imprimitivity import Equivalence
from .report import StructuralError

FORMAT = "fellbundles/1"
ZERO_SNAP = 1e-15       # entries below this print as exact zeros


class SchemaError(StructuralError):
    """The file is not valid JSON or does not match the schema."""


def schema():
    text = resources.files("fellbundles").joinpath("bundle_spec.schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass
class SpecFile:
    """Everything a spec file can carry; absent sections are None."""
    bundle: FellBundle
    demi: DemiEquivalence | None = None
    equivalence: Equivalence | None = None
    tolerance: float | None = None
    seed: int | None = None

    @property
    def groupoid(self):
        return self.bundle.base


# -- encoding -------------------------------------------------------------------

def _num(x):
    x = float(x)
    return 0.0 if abs(x) < ZERO_SNAP else x


def _complex_list(T):
    flat = np.asarray(T, dtype=complex).reshape(-1)
    return [[_num(z.real), _num(z.imag)] for z in flat]


def _tensors(d):
    return [{"key": [int(k) for k in (key if isinstance(key, tuple) else (key,))],
             "shape": [int(s) for s in np.shape(T)],
             "data": _complex_list(T)}
            for key, T in sorted(d.items())]


def encode_groupoid(G: gpd.FiniteGroupoid):
    out = {"n_units": G.n_units, "src": G.src.tolist(), "rng": G.rng.tolist(),
           "comp": G.comp_table.tolist(), "inv": G.inv.tolist(),
           "unit_embed": G.unit_embed.tolist()}
    if G.labels is not None:
        out["labels"] = [str(s) for s in G.labels]
    return out


def encode_bundle(fb: FellBundle):
    return {"unit_algebras": [list(a.blocks) for a in fb.unit_algebras],
            "dims": list(fb.dims),
            "mult": _tensors(fb.mult),
            "invol": _tensors({g: J for g, J in enumerate(fb.invol)})}


def encode(spec: SpecFile) -> dict:
    doc = {"format": FORMAT}
    if spec.tolerance is not None:
        doc["tolerance"] = float(spec.tolerance)
    if spec.seed is not None:
        doc["seed"] = int(spec.seed)
    doc["groupoid"] = encode_groupoid(spec.bundle.base)
    doc["fell_bundle"] = encode_bundle(spec.bundle)
    if spec.demi is not None:
        m = spec.demi
        doc["action"] = {"sigma": m.action.sigma.tolist(), "act": m.action.act_table.tolist()}
        doc["demi_equivalence"] = {"dims": list(m.dims), "ract": _tensors(m.ract),
                                   "rip": _tensors(m.rip)}
    if spec.equivalence is not None:
        e = spec.equivalence
        doc["equivalence"] = {"groupoid": encode_groupoid(e.base),
                              "fell_bundle": encode_bundle(e.bundle),
                              "rho": e.rho.tolist(), "lact_table": e.lact_table.tolist(),
                              "lact": _tensors(e.lact), "lip": _tensors(e.lip)}
    return doc


def dumps(spec: SpecFile | dict) -> str:
    """Deterministic text: fixed key order, fixed float repr, trailing newline."""
    doc = encode(spec) if isinstance(spec, SpecFile) else spec
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=False) + "\n"


def write(spec: SpecFile, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(spec))


# -- decoding -------------------------------------------------------------------

def _tensor_dict(items, nkey, where):
    out = {}
    for t in items:
        key = tuple(t["key"])
        if len(key) != nkey:
            raise StructuralError(f"{where}: key {list(key)} should have {nkey} entries")
        shape = tuple(t["shape"])
        if len(t["data"]) != int(np.prod(shape, dtype=int)):
            raise StructuralError(f"{where}{list(key)}: {len(t['data'])} entries for shape {list(shape)}")
        if key in out:
            raise StructuralError(f"{where}: duplicate key {list(key)}")
        data = np.array(t["data"], dtype=float).reshape(-1, 2) if t["data"] else np.zeros((0, 2))
        out[key if nkey > 1 else key[0]] = (data[:, 0] + 1j * data[:, 1]).reshape(shape)
    return out


def _table(rows, shape, where):
    arr = np.array(rows, dtype=int) if rows else np.zeros(shape, dtype=int)
    if arr.shape != shape:
        raise StructuralError(f"{where} has shape {list(arr.shape)}, expected {list(shape)}")
    return arr


def decode_groupoid(d):
    n = len(d["src"])
    return gpd.FiniteGroupoid(d["n_units"], d["src"], d["rng"], _table(d["comp"], (n, n), "comp"),
                              d["inv"], d["unit_embed"], d.get("labels"))


def decode_bundle(G, d):
    invol = _tensor_dict(d["invol"], 1, "invol")
    if sorted(invol) != list(G.arrows):
        raise StructuralError("one involution tensor per arrow is required")
    return FellBundle(G, d["unit_algebras"], d["dims"], _tensor_dict(d["mult"], 2, "mult"),
                      [invol[g] for g in G.arrows])


def decode(doc: dict) -> SpecFile:
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(f"schema violation at '{path}': {exc.message}") from None
    G = decode_groupoid(doc["groupoid"])
    fb = decode_bundle(G, doc["fell_bundle"])
    spec = SpecFile(fb, tolerance=doc.get("tolerance"), seed=doc.get("seed"))
    if "demi_equivalence" in doc:
        a = doc["action"]
        n = len(a["sigma"])
        action = gpd.PrincipalAction(G, a["sigma"], _table(a["act"], (n, G.n_arrows), "act"))
        d = doc["demi_equivalence"]
        spec.demi = DemiEquivalence(fb, action, d["dims"], _tensor_dict(d["ract"], 2, "ract"),
                                    _tensor_dict(d["rip"], 2, "rip"))
    if "equivalence" in doc:
        d = doc["equivalence"]
        G2 = decode_groupoid(d["groupoid"])
        fb2 = decode_bundle(G2, d["fell_bundle"])
        table = _table(d["lact_table"], (G2.n_arrows, spec.demi.n_points), "lact_table")
        spec.equivalence = Equivalence(fb2, spec.demi, d["rho"], table,
                                       _tensor_dict(d["lact"], 2, "lact"),
                                       _tensor_dict(d["lip"], 2, "lip"))
    return spec


def loads(text: str) -> SpecFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return decode(doc)


def load(path) -> SpecFile:
    """Read a spec file; ``-`` reads standard input."""
    if str(path) == "-":
        import sys
        return loads(sys.stdin.read())
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
