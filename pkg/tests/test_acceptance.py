"""End-to-end checks of the toolkit against exact integer and analytic oracles.

Each test prints one summary line so a full run reads as a twelve-line report.
"""

import json
import math

import numpy as np
import pytest

from morseflow.geometry import Point, builtin_system
from morseflow.critical import euler_characteristic, find_critical_points
from morseflow.dynamics import FlowSettings, flow, flow_trajectory, flow_with_jacobian
from morseflow.chains import build_morse_complex, homology
from morseflow.functor import (
    attaching_degree,
    chain_map_by_flow,
    chain_map_by_intersection,
    compose_experiment,
    induced_on_homology,
)
from morseflow.invariants import count_trajectories
from morseflow.maps import (
    circle_self_map,
    circle_to_torus_map,
    identity_map,
    torus_linear_map,
    torus_to_circle_map,
)
from morseflow.cup import pairing_report, torus_triple
from morseflow.cli import EXIT_OK, main as cli_main


def criterion(n, desc, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {desc}", flush=True)
    assert ok, f"criterion {n} failed: {desc}"


EXPECTED_EULER = {
    "circle": 0,
    "torus": 0,
    "torus3": 0,
    "sphere_height": 2,
    "peanut": 2,
    "product": 0,
}

PERTURBATIONS_PER_FAMILY = 20


@pytest.fixture(scope="module")
def builtins_data():
    out = {}
    recipes = {
        "circle": {},
        "torus": {"a": 0.0, "b": 0.0},
        "sphere_height": {},
        "peanut": {},
        "torus3": {},
        "product": {
            "factors": [
                {"family": "circle", "a": 0.15},
                {"family": "torus", "a": 0.3, "b": 0.45},
            ]
        },
    }
    for family, params in recipes.items():
        sys_ = builtin_system(family, **params)
        cps = find_critical_points(sys_)
        out[family] = (sys_, cps, build_morse_complex(sys_, cps))
    return out


@pytest.fixture(scope="module")
def perturbed_data():
    rng = np.random.default_rng(2026)
    out = []
    for _ in range(PERTURBATIONS_PER_FAMILY):
        draws = {
            "circle": {"a": rng.uniform(0, 1), "w": rng.uniform(0.7, 1.4)},
            "torus": {
                "a": rng.uniform(0, 1),
                "b": rng.uniform(0, 1),
                "w1": rng.uniform(0.7, 1.4),
                "w2": rng.uniform(0.7, 1.4),
            },
            "torus3": {
                "a": rng.uniform(0, 1),
                "b": rng.uniform(0, 1),
                "c": rng.uniform(0, 1),
                "w1": rng.uniform(0.7, 1.4),
                "w2": rng.uniform(0.7, 1.4),
                "w3": rng.uniform(0.7, 1.4),
            },
            "peanut": {"lam": rng.uniform(0.7, 1.3), "gamma": rng.uniform(0, 2 * np.pi)},
        }
        for family, params in draws.items():
            sys_ = builtin_system(family, **params)
            cps = find_critical_points(sys_)
            out.append((family, sys_, cps, build_morse_complex(sys_, cps)))
    return out


def boundary_squares_to_zero(cx):
    for k in range(2, cx.top_degree + 1):
        a, b = cx.boundary(k - 1), cx.boundary(k)
        if not a or not b or not b[0]:
            continue
        for j in range(len(b[0])):
            for i in range(len(a)):
                if sum(a[i][m] * b[m][j] for m in range(len(b))) != 0:
                    return False
    return True


@pytest.fixture(scope="module")
def map_suite(builtins_data):
    """Transverse test maps with their intersection-counted chain maps."""
    circle, circle_cps, circle_cx = builtins_data["circle"]
    torus, torus_cps, torus_cx = builtins_data["torus"]
    sphere, sphere_cps, sphere_cx = builtins_data["sphere_height"]
    peanut, peanut_cps, peanut_cx = builtins_data["peanut"]
    rng = np.random.default_rng(17)
    off = lambda: float(rng.uniform(0.05, 0.95))
    maps = [
        ("circle identity", identity_map(circle), circle_cps, circle_cps, circle_cx, circle_cx),
        ("circle degree -2", circle_self_map(circle, circle, -2, off()), circle_cps, circle_cps, circle_cx, circle_cx),
        ("circle degree -1", circle_self_map(circle, circle, -1, off()), circle_cps, circle_cps, circle_cx, circle_cx),
        ("circle degree 2", circle_self_map(circle, circle, 2, off()), circle_cps, circle_cps, circle_cx, circle_cx),
        ("circle degree 3", circle_self_map(circle, circle, 3, off()), circle_cps, circle_cps, circle_cx, circle_cx),
        ("torus identity", identity_map(torus), torus_cps, torus_cps, torus_cx, torus_cx),
        ("torus shear", torus_linear_map(torus, torus, [[1, 1], [0, 1]], (off(), off())), torus_cps, torus_cps, torus_cx, torus_cx),
        ("torus cat-like", torus_linear_map(torus, torus, [[2, 1], [1, 1]], (off(), off())), torus_cps, torus_cps, torus_cx, torus_cx),
        ("circle into torus (1,0)", circle_to_torus_map(circle, torus, (1, 0), (off(), off())), circle_cps, torus_cps, circle_cx, torus_cx),
        ("circle into torus (1,1)", circle_to_torus_map(circle, torus, (1, 1), (off(), off())), circle_cps, torus_cps, circle_cx, torus_cx),
        ("sphere identity", identity_map(sphere), sphere_cps, sphere_cps, sphere_cx, sphere_cx),
        ("peanut identity", identity_map(peanut), peanut_cps, peanut_cps, peanut_cx, peanut_cx),
    ]
    out = []
    for label, phi, scps, dcps, scx, dcx in maps:
        cm = chain_map_by_intersection(phi, scps, dcps, scx, dcx)
        out.append((label, phi, scps, dcps, scx, dcx, cm))
    return out


def test_criterion_01_torus_complex(builtins_data):
    _, cps, cx = builtins_data["torus"]
    h = homology(cx)
    ok = (
        len(cps) == 4
        and sorted(c.index for c in cps) == [0, 1, 1, 2]
        and cx.boundary(1) == [[0, 0]]
        and cx.boundary(2) == [[0], [0]]
        and h.betti == (1, 2, 1)
        and all(not t for t in h.torsion)
    )
    criterion(1, "flat torus: 4 critical points, zero boundaries, Betti (1,2,1), torsion-free", ok)


def test_criterion_02_peanut_complex(builtins_data):
    _, cps, cx = builtins_data["peanut"]
    h = homology(cx)
    d2 = cx.boundary(2)
    entries = [d2[0][0], d2[0][1]]
    ok = (
        sorted(c.index for c in cps) == [0, 1, 2, 2]
        and cx.boundary(1) == [[0]]
        and sorted(entries) == [-1, 1]
        and math.gcd(*[abs(e) for e in entries]) == 1
        and h.betti == (1, 0, 1)
    )
    criterion(2, "peanut sphere: indices {0,1,2,2}, rank-one cancelling boundary, homology (1,0,1)", ok)


def test_criterion_03_boundary_squares_zero(builtins_data, perturbed_data):
    ok = all(boundary_squares_to_zero(cx) for _, _, cx in builtins_data.values())
    ok = ok and all(boundary_squares_to_zero(cx) for _, _, _, cx in perturbed_data)
    criterion(3, "boundary squared vanishes exactly on built-ins and 20 seeded perturbations per family", ok)


def test_criterion_04_euler_characteristics(builtins_data, perturbed_data):
    ok = all(
        euler_characteristic(cps) == EXPECTED_EULER[family]
        for family, (_, cps, _) in builtins_data.items()
    )
    ok = ok and all(
        euler_characteristic(cps) == EXPECTED_EULER[family]
        for family, _, cps, _ in perturbed_data
    )
    criterion(4, "Euler characteristics match the topological values on every generated system", ok)


def test_criterion_05_circle_degree_maps(builtins_data):
    sys_, cps, cx = builtins_data["circle"]
    ok = True
    for d in (-2, -1, 1, 2, 3):
        phi = circle_self_map(sys_, sys_, d, 0.1 + 0.13 * abs(d))
        cm = chain_map_by_intersection(phi, cps, cps, cx, cx)
        induced = induced_on_homology(cm)
        ok = ok and cm.block(1) == [[d]] and induced[1] == [[d]] and induced[0] == [[1]]
    criterion(5, "circle self-maps of each degree induce multiplication by that degree", ok)


def test_criterion_06_chain_maps_commute(map_suite):
    ok = True
    for label, _, _, _, scx, dcx, cm in map_suite:
        for k in range(1, scx.top_degree + 1):
            if k > dcx.top_degree:
                continue
            bd, bs = dcx.boundary(k), scx.boundary(k)
            rows = len(dcx.generators[k - 1])
            cols = len(scx.generators[k])
            mid_l = len(dcx.generators[k])
            mid_r = len(scx.generators[k - 1])
            lhs = [
                [sum(bd[i][m] * cm.block(k)[m][j] for m in range(mid_l)) for j in range(cols)]
                for i in range(rows)
            ]
            rhs = [
                [sum(cm.block(k - 1)[i][m] * bs[m][j] for m in range(mid_r)) for j in range(cols)]
                for i in range(rows)
            ]
            ok = ok and lhs == rhs
    criterion(6, "every computed chain map commutes with the boundary operators exactly", ok)


def test_criterion_07_flow_matches_intersection(map_suite):
    ok = len(map_suite) >= 10
    for label, phi, scps, dcps, scx, dcx, cm in map_suite:
        cm_flow = chain_map_by_flow(phi, scps, dcps, scx, dcx)
        ok = ok and cm_flow.blocks == cm.blocks
    criterion(7, "flow-pushed chain maps equal intersection-counted ones, stable when the push time doubles", ok)


def test_criterion_08_attaching_degrees(builtins_data):
    ok = True
    for family in ("torus", "peanut"):
        sys_, cps, _ = builtins_data[family]
        for x in cps:
            for y in cps:
                if x.index - y.index != 1:
                    continue
                deg = attaching_degree(sys_, x, y, cps)
                cnt = count_trajectories(sys_, x, y, cps)
                ok = ok and deg == cnt
    criterion(8, "attaching degrees equal signed trajectory counts for every adjacent pair", ok)


def test_criterion_09_cup_pairing():
    rng = np.random.default_rng(5)
    reseeded = torus_triple(
        shift1=(float(rng.uniform(0.1, 0.45)), float(rng.uniform(0.1, 0.45))),
        shift2=(float(rng.uniform(0.55, 0.9)), float(rng.uniform(0.55, 0.9))),
    )
    r1 = pairing_report(torus_triple())
    r2 = pairing_report(reseeded)
    def shape_ok(r):
        m = r["pairing"]
        return (
            r["antisymmetric"]
            and m[0][0] == 0 and m[1][1] == 0
            and abs(m[0][1]) == 1 and abs(m[1][0]) == 1
        )
    ok = shape_ok(r1) and shape_ok(r2) and r1["pairing"] == r2["pairing"]
    criterion(9, "torus cup pairing is antisymmetric with unit off-diagonal and stable under re-seeded offsets", ok)


def test_criterion_10_composition(builtins_data):
    circle, circle_cps, circle_cx = builtins_data["circle"]
    torus, torus_cps, torus_cx = builtins_data["torus"]
    phi = circle_to_torus_map(circle, torus, (1, 0), (0.12, 0.37))
    psi = torus_to_circle_map(torus, circle, (1, 0), 0.21, 0.0)
    result = compose_experiment(
        psi, phi, circle_cps, torus_cps, circle_cps,
        circle_cx, torus_cx, circle_cx, samples=200,
    )
    criterion(10, "chain map of a composite equals the product of chain maps, through a stably regular projection", result["product_equals_composite"])


def test_criterion_11_variational_jacobians():
    st = FlowSettings()
    rng = np.random.default_rng(3)
    worst_rel = 0.0
    worst_increase = -np.inf
    for family in ("circle", "torus", "torus3", "sphere_height", "peanut"):
        sys_ = builtin_system(family)
        for _ in range(50):
            p = sys_.random_point(rng)
            t = float(rng.uniform(0.2, 2.0))
            q, J = flow_with_jacobian(sys_, p, t, st)
            h = 1e-6
            n = sys_.dim
            for i in range(n):
                d = np.zeros(n)
                d[i] = h
                qp = flow(sys_, Point.of(p.chart, p.array + d), t, st)
                qm = flow(sys_, Point.of(p.chart, p.array - d), t, st)
                up = sys_.to_chart(qp, q.chart)
                um = sys_.to_chart(qm, q.chart)
                col = sys_.displacement(Point.of(q.chart, um), Point.of(q.chart, up)) / (2 * h)
                rel = np.max(np.abs(col - J[:, i])) / max(1.0, np.max(np.abs(J)))
                worst_rel = max(worst_rel, float(rel))
            traj = flow_trajectory(sys_, p, t)
            worst_increase = max(worst_increase, float(np.diff(traj.values).max(initial=-np.inf)))
    ok = worst_rel <= 1e-4 and worst_increase <= 1e-8
    criterion(11, f"flow Jacobians match central differences (worst {worst_rel:.2e}) and values never increase", ok)


def test_criterion_12_reproducible_reports(tmp_path):
    cfg = tmp_path / "scenario.ini"
    cfg.write_text("[run]\nseed = 123\n\n[system]\nfamily = torus\na = 0.2\nb = 0.6\n")
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    c1 = cli_main(["verify", "--config", str(cfg), "--out", str(out1)])
    c2 = cli_main(["verify", "--config", str(cfg), "--out", str(out2)])
    b1 = (out1 / "verify-report.json").read_bytes()
    b2 = (out2 / "verify-report.json").read_bytes()
    ok = c1 == EXIT_OK and c2 == EXIT_OK and b1 == b2
    criterion(12, "repeated verification runs with one seed produce byte-identical reports", ok)
