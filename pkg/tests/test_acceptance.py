"""Acceptance criteria, each run at its stated tolerance.

Every criterion is a function returning (passed, detail).  Under pytest each
one is a test that records a one-line verdict, printed in the terminal
summary; run this file directly to get the same lines on standard output.
"""

import io
import itertools
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

from fellbundles import applications as app
from fellbundles import cli
from fellbundles import groupoid as gpd
from fellbundles.cstar import BlockAlgebra
from fellbundles.demiequiv import derived_properties_check, random_demi_equivalence, validate_demi
from fellbundles.fellbundle import (BundleProfile, line_bundle_z2, random_fell_bundle, trivial_bundle,
                                    validate_fell_bundle)
from fellbundles.hilbmod import norm_of_compacts_check, random_module
from fellbundles.imprimitivity import (build_imprimitivity_bundle, construction_properties_check,
                                       uniqueness_iso, validate_equivalence)

TOL = 1e-8
VERDICTS = []


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max(initial=0.0) / (1.0 + np.abs(b).max(initial=0.0)))


def _omega_generator_residual(f, e, iso, raw_generator):
    """Worst misfit between Omega applied to constructed left inner products of
    basis vectors and the closed-form generator image, read in raw coordinates
    and converted to the expected bundle's coordinates."""
    worst = 0.0
    G2 = f.expected.base
    for (x, y), T in e.lip.items():
        g = e.leoq(x, y)
        target_arrow, raw = raw_generator(x, y)
        if int(iso.base_map[g]) != target_arrow:
            return np.inf
        for i in range(T.shape[0]):
            for j in range(T.shape[1]):
                want = f.raw_to_expected(target_arrow, raw[i, j])
                worst = max(worst, _rel(iso.apply(g, T[i, j]), want))
    assert G2.n_arrows == e.base.n_arrows
    return worst


# -- criterion 1 ---------------------------------------------------------------------------

def criterion_1():
    worst_iso, worst_gen, n = 0.0, 0.0, 25
    for seed in range(n):
        fb = random_fell_bundle(1000 + seed, BundleProfile(max_arrows=6, max_fibre_dim=3))
        f = app.fixture_self(fb)
        e = build_imprimitivity_bundle(f.demi, tol=TOL)
        iso = uniqueness_iso(e, f.expected, TOL, strict=False)
        worst_iso = max(worst_iso, iso.max_residual if iso.passed else np.inf)
        H = fb.base

        def gen(x, y):
            # b1 b2^* at x y^-1, evaluated straight from the bundle tensors
            yi = H.inv[y]
            raw = np.empty((fb.dims[x], fb.dims[y], fb.dims[H.comp(x, yi)]), dtype=complex)
            for i in range(fb.dims[x]):
                for j in range(fb.dims[y]):
                    raw[i, j] = fb.multiply(x, yi, np.eye(fb.dims[x])[i], fb.star(y, np.eye(fb.dims[y])[j]))
            return H.comp(x, yi), raw
        worst_gen = max(worst_gen, _omega_generator_residual(f, e, iso, gen))
    ok = worst_iso < TOL and worst_gen < TOL
    return ok, f"{n} random bundles; iso residual {worst_iso:.2e}; Omega vs b1 b2* {worst_gen:.2e}"


# -- criterion 2 ---------------------------------------------------------------------------

def _matrix_cases():
    small = BundleProfile(max_arrows=4, max_fibre_dim=2)
    return [(1, line_bundle_z2()), (1, random_fell_bundle(21, small)),
            (2, line_bundle_z2()), (2, random_fell_bundle(22, small)),
            (3, line_bundle_z2()), (3, trivial_bundle(gpd.pair_groupoid(2)))]


def criterion_2():
    worst_iso, worst_gen, dims_ok = 0.0, 0.0, True
    for n, fb in _matrix_cases():
        f = app.fixture_matrix(fb, n)
        e = build_imprimitivity_bundle(f.demi, tol=TOL)
        iso = uniqueness_iso(e, f.expected, TOL, strict=False)
        worst_iso = max(worst_iso, iso.max_residual if iso.passed else np.inf)
        H = fb.base
        for g in e.base.arrows:
            dims_ok &= e.bundle.dims[g] == n * n * fb.dims[int(iso.base_map[g])]

        def gen(x, y):
            # (e_i ⊗ b1) ⊗ (e_j ⊗ b2)^op -> (E_ij, b1 b2^*), raw coordinates (i, j, beta)
            yi = H.inv[y]
            g = H.comp(x, yi)
            dx, dy, dg = fb.dims[x], fb.dims[y], fb.dims[g]
            raw = np.zeros((n, dx, n, dy, n, n, dg), dtype=complex)
            for a in range(dx):
                for b in range(dy):
                    prod = fb.multiply(x, yi, np.eye(dx)[a], fb.star(y, np.eye(dy)[b]))
                    for i in range(n):
                        for j in range(n):
                            raw[i, a, j, b, i, j] = prod
            return g, raw.reshape(n * dx, n * dy, n * n * dg)
        worst_gen = max(worst_gen, _omega_generator_residual(f, e, iso, gen))
    ok = dims_ok and worst_iso < TOL and worst_gen < TOL
    return ok, (f"n in 1..3; dims n^2 dim B(h): {dims_ok}; iso residual {worst_iso:.2e}; "
                f"Omega vs (E_ij, b1 b2*) {worst_gen:.2e}")


# -- criterion 3 ---------------------------------------------------------------------------

def _example_fixtures():
    z4 = gpd.cyclic_group(4)
    m2 = BlockAlgebra([2])
    unitaries = [np.array([1, 0, 0, 1j ** x]) for x in range(4)]
    return [("C", app.fixture_transformation_group(z4, [0, 2], BlockAlgebra([1]))),
            ("M2", app.fixture_transformation_group(z4, [0, 2], m2, app.inner_action(m2, unitaries)))]


def criterion_3():
    worst, base_ok, arrows = 0.0, True, []
    for _, f in _example_fixtures():
        e = build_imprimitivity_bundle(f.demi, tol=TOL)
        iso = uniqueness_iso(e, f.expected, TOL, strict=False)
        worst = max(worst, iso.max_residual if iso.passed else np.inf)
        arrows.append(e.base.n_arrows)
        for (x, y), want in f.info["base_formula"].items():
            base_ok &= int(iso.base_map[e.groupoid.class_of(x, y)]) == want
    ok = worst < TOL and base_ok
    return ok, f"A in (C, M2); arrows {arrows}; residual {worst:.2e}; base map formula exact: {base_ok}"


# -- criterion 4 ---------------------------------------------------------------------------

def criterion_4():
    cases = [("pair2", trivial_bundle(gpd.pair_groupoid(2))), ("Z/2", line_bundle_z2()),
             ("Z/3", trivial_bundle(gpd.cyclic_group(3)))]
    worst, dims_ok, table = 0.0, True, []
    for name, fb in cases:
        f = app.fixture_kumjian(fb)
        e = build_imprimitivity_bundle(f.demi, tol=TOL)
        iso = uniqueness_iso(e, f.expected, TOL, strict=False)
        worst = max(worst, iso.max_residual if iso.passed else np.inf)
        V = f.info["V_dims"]
        E = f.expected.base
        for g in e.base.arrows:
            k = int(iso.base_map[g])
            dims_ok &= e.bundle.dims[g] == V[int(E.rng[k])] * V[int(E.src[k])]
        table.append(f"{name}:{e.bundle.dims}")
    ok = worst < TOL and dims_ok
    return ok, f"dims {' '.join(table)}; dim law exact: {dims_ok}; residual {worst:.2e}"


# -- criterion 5 ---------------------------------------------------------------------------

def criterion_5(count=100):
    worst = {}
    failed = []
    for seed in range(count):
        m = random_demi_equivalence(seed, max_copies=2 if seed % 3 == 0 else 1)
        reports = [validate_demi(m, TOL), derived_properties_check(m, trials=4, tol=TOL, seed=seed)]
        e = build_imprimitivity_bundle(m, tol=TOL, check=False)
        reports += [validate_fell_bundle(e.bundle, TOL, seed=seed), validate_equivalence(e, TOL),
                    construction_properties_check(m, TOL, trials=0, seed=seed)]
        for r in reports:
            for label, st in r.axioms.items():
                worst[label] = max(worst.get(label, 0.0), st.max_residual)
                if not st.passed:
                    failed.append((seed, label))
    required = ([f"F{i}" for i in range(1, 11)] + ["SAT"] + [f"DE{i}" for i in range(9, 17)]
                + [f"Psi{i}" for i in range(1, 6)] + [f"U{i}" for i in range(1, 5)]
                + ["Flip-Psi", "U-Phi", "Phi"] + [f"LIP{i}" for i in range(1, 6)] + ["LA1", "LA2"])
    missing = [r for r in required if r not in worst]
    ok = not failed and not missing
    top = max(worst.values(), default=0.0)
    return ok, (f"{count} demis, {len(worst)} labels; max residual {top:.2e}; "
                f"failures {failed[:3]}; missing labels {missing}")


# -- criterion 6 ---------------------------------------------------------------------------

def criterion_6(count=100):
    rng = np.random.default_rng(6)
    catalogue = [(1,), (2,), (1, 1), (1, 2), (3,), (2, 2)]
    worst, example = 0.0, None
    for _ in range(count):
        alg = BlockAlgebra(catalogue[rng.integers(len(catalogue))])
        M = random_module(alg, rng)
        xs = [M.random(rng) for _ in range(int(rng.integers(1, 4)))]
        lhs, rhs = norm_of_compacts_check(M, xs)
        gap = abs(lhs - rhs) / (1 + rhs)
        if gap > worst:
            worst, example = gap, (alg.blocks, len(xs), lhs, rhs)
    ok = worst < TOL
    return ok, f"{count} modules; worst relative gap {worst:.2e} (blocks, k, lhs, rhs) = {example}"


# -- criterion 7 ---------------------------------------------------------------------------

def criterion_7(count=10):
    rng = np.random.default_rng(7)
    m = random_demi_equivalence(77, max_copies=2)
    builds = [build_imprimitivity_bundle(m, order=rng.permutation(m.n_points), tol=TOL)
              for _ in range(count)]
    worst, nontrivial = 0.0, 0
    for e1, e2 in itertools.combinations(builds, 2):
        iso = uniqueness_iso(e1, e2, TOL, strict=False)
        worst = max(worst, iso.max_residual if iso.passed else np.inf)
        nontrivial += not iso.is_identity()
    ok = worst < TOL
    return ok, (f"{count} orders, {len(builds) * (len(builds) - 1) // 2} pairs "
                f"({nontrivial} non-identity); residual {worst:.2e}")


# -- criterion 8 ---------------------------------------------------------------------------

def _run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _files(paths):
    return [open(p, "rb").read() if os.path.exists(p) else None for p in paths]


def criterion_8():
    identical, codes = True, []
    with tempfile.TemporaryDirectory() as tmp:
        runs = []
        for k in range(2):
            d = os.path.join(tmp, f"run{k}")
            outputs = []
            for argv, files in [
                (["fixture", "matrix", "n=2", "--out", d, "--report", "machine"],
                 [os.path.join(d, "constructed.json"), os.path.join(d, "expected.json")]),
                (["validate", os.path.join(tmp, "run0", "expected.json")], []),
                (["construct", os.path.join(tmp, "run0", "expected.json"), "--out",
                  os.path.join(d, "built.json")], [os.path.join(d, "built.json")]),
                (["compare", os.path.join(tmp, "run0", "constructed.json"),
                  os.path.join(tmp, "run0", "expected.json"), "--report", "machine"], []),
            ]:
                code, out, err = _run_cli(argv)
                codes.append(code)
                outputs.append((code, out.replace(tmp, "<tmp>").replace(f"run{k}", "run"), err, _files(files)))
            runs.append(outputs)
        identical &= runs[0] == runs[1]
        # one round through separate interpreter processes
        src = os.path.join(tmp, "run0", "expected.json")
        procs = [subprocess.run([sys.executable, "-m", "fellbundles", "construct", src,
                                 "--report", "machine"], capture_output=True) for _ in range(2)]
        identical &= procs[0].stdout == procs[1].stdout and procs[0].stderr == procs[1].stderr
        codes += [p.returncode for p in procs]
    ok = identical and all(c == 0 for c in codes)
    return ok, f"validate/construct/compare/fixture twice in-process, construct twice as a process; identical: {identical}; exit codes {sorted(set(codes))}"


# -- harness -------------------------------------------------------------------------------

CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


def _verdict(k):
    t = time.perf_counter()
    ok, detail = CRITERIA[k]()
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t:.1f}s) {detail}"
    VERDICTS.append(line)
    print(line)
    return ok, line


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    ok, line = _verdict(k)
    assert ok, line


if __name__ == "__main__":
    start = time.perf_counter()
    results = [_verdict(k)[0] for k in sorted(CRITERIA)]
    print(f"{sum(results)}/{len(results)} criteria passed in {time.perf_counter() - start:.1f}s")
    sys.exit(0 if all(results) else 1)
