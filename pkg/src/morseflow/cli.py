"""Scenario-driven command-line runner producing deterministic JSON reports.

Configs are INI files with [system], [run], [tolerances] and per-command
sections; every report embeds the seed and the full effective config so that
identical (config, seed) pairs reproduce byte-identical output.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys

import numpy as np

from .errors import (
    ChainMapError,
    ConfigError,
    DegenerateCriticalPointError,
    MorseflowError,
    NonConvergenceError,
    RegularityError,
    TransversalityError,
)
from .geometry import builtin_system
from .critical import euler_characteristic, find_critical_points
from .dynamics import FlowSettings
from .chains import build_morse_complex, homology
from .functor import (
    attaching_degree,
    chain_map_by_flow,
    chain_map_by_intersection,
    compose_experiment,
    induced_on_homology,
)
from .invariants import count_trajectories
from .maps import (
    circle_self_map,
    circle_to_torus_map,
    identity_map,
    torus_linear_map,
    torus_to_circle_map,
)
from .cup import cup_pairing_matrix, pairing_report, torus_triple

__all__ = ["main"]

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = (
    "crit", "complex", "chainmap", "flowmap", "compose", "cup", "degree-check", "verify",
)

_EXPECTED_BETTI = {
    "circle": (1, 1),
    "torus": (1, 2, 1),
    "torus3": (1, 3, 3, 1),
    "sphere_height": (1, 0, 1),
    "peanut": (1, 0, 1),
}

_SYSTEM_PARAMS = {
    "circle": ("a", "w"),
    "torus": ("a", "b", "w1", "w2"),
    "torus3": ("a", "b", "c", "w1", "w2", "w3"),
    "sphere_height": (),
    "peanut": ("lam", "gamma"),
}


def _load_config(path: str) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except configparser.Error as e:
        raise ConfigError(f"config parse error in {path}: {e}")
    return cfg


def _effective_config(cfg: configparser.ConfigParser) -> dict:
    return {s: dict(cfg.items(s)) for s in cfg.sections()}


def _system_from_section(cfg, section="system"):
    if not cfg.has_section(section):
        raise ConfigError(f"config is missing the [{section}] section")
    family = cfg.get(section, "family", fallback=None)
    if family is None:
        raise ConfigError(f"[{section}] must set family")
    if family not in _SYSTEM_PARAMS:
        raise ConfigError(f"unknown system family {family!r} in [{section}]")
    params = {}
    for key in _SYSTEM_PARAMS[family]:
        if cfg.has_option(section, key):
            try:
                params[key] = cfg.getfloat(section, key)
            except ValueError:
                raise ConfigError(f"[{section}] {key} must be a number")
    return builtin_system(family, **params), family


def _settings_from_config(cfg) -> FlowSettings:
    kwargs = {}
    for key in ("rel_tol", "abs_tol", "t_max", "r_conv", "backward_cap"):
        if cfg.has_option("tolerances", key):
            try:
                kwargs[key] = cfg.getfloat("tolerances", key)
            except ValueError:
                raise ConfigError(f"[tolerances] {key} must be a number")
    try:
        return FlowSettings(**kwargs)
    except MorseflowError as e:
        raise ConfigError(str(e))


def _float_opt(cfg, section, key, default):
    if cfg.has_option(section, key):
        try:
            return cfg.getfloat(section, key)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number")
    return default


def _int_opt(cfg, section, key, default):
    if cfg.has_option(section, key):
        try:
            return cfg.getint(section, key)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer")
    return default


def _ledger(settings: FlowSettings, tau: float, crit_tol: float, density: int) -> dict:
    return {
        "rel_tol": settings.rel_tol,
        "abs_tol": settings.abs_tol,
        "t_max": settings.t_max,
        "r_conv": settings.r_conv,
        "backward_cap": settings.backward_cap,
        "tau": tau,
        "crit_tol": crit_tol,
        "density": density,
    }


def _catalogue_payload(cps) -> list:
    return [
        {
            "id": cp.id,
            "chart": cp.point.chart,
            "coords": list(cp.point.coords),
            "value": cp.value,
            "index": cp.index,
            "eigenvalues": list(cp.eigenvalues),
        }
        for cp in cps
    ]


def _catalogue_csv(cps) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    dim = cps[0].dim if cps else 0
    writer.writerow(["id", "index", "value", "chart"] + [f"x{i}" for i in range(dim)])
    for cp in cps:
        writer.writerow(
            [cp.id, cp.index, repr(cp.value), cp.point.chart]
            + [repr(c) for c in cp.point.coords]
        )
    return buf.getvalue()


def _map_from_config(cfg, settings):
    if not cfg.has_section("map"):
        raise ConfigError("chainmap/flowmap/compose need a [map] section")
    kind = cfg.get("map", "kind", fallback=None)
    src, _ = _system_from_section(cfg, "system")
    if cfg.has_section("target"):
        dst, _ = _system_from_section(cfg, "target")
    else:
        dst = src
    if kind == "identity":
        return identity_map(src)
    if kind == "circle_degree":
        return circle_self_map(
            src, dst,
            _int_opt(cfg, "map", "degree", 1),
            _float_opt(cfg, "map", "offset", 0.0),
        )
    if kind == "torus_linear":
        raw = cfg.get("map", "matrix", fallback="1 0; 0 1")
        try:
            matrix = [[int(v) for v in row.split()] for row in raw.split(";")]
        except ValueError:
            raise ConfigError("[map] matrix must hold integers, rows separated by ';'")
        off = [float(v) for v in cfg.get("map", "offset", fallback="0 0").split()]
        return torus_linear_map(src, dst, matrix, off)
    if kind == "circle_to_torus":
        wind = [int(v) for v in cfg.get("map", "winding", fallback="1 0").split()]
        off = [float(v) for v in cfg.get("map", "offset", fallback="0 0").split()]
        return circle_to_torus_map(src, dst, tuple(wind), tuple(off))
    if kind == "torus_to_circle":
        wind = [int(v) for v in cfg.get("map", "winding", fallback="1 0").split()]
        return torus_to_circle_map(
            src, dst, tuple(wind),
            _float_opt(cfg, "map", "offset", 0.0),
            _float_opt(cfg, "map", "amp", 0.0),
        )
    raise ConfigError(f"unknown [map] kind {kind!r}")


# --------------------------------------------------------------------------
# commands; each returns (results dict, checks dict)


def _cmd_crit(cfg, settings, tau, crit_tol, density, seed):
    sys_, family = _system_from_section(cfg)
    cps = find_critical_points(sys_, crit_tol=crit_tol)
    results = {
        "system": sys_.describe(),
        "catalogue": _catalogue_payload(cps),
        "euler_characteristic": euler_characteristic(cps),
    }
    checks = {"nondegenerate": True}
    return results, checks, _catalogue_csv(cps)


def _cmd_complex(cfg, settings, tau, crit_tol, density, seed):
    sys_, family = _system_from_section(cfg)
    cps = find_critical_points(sys_, crit_tol=crit_tol)
    cx = build_morse_complex(sys_, cps, settings, tau=tau)
    hom = homology(cx)
    expected = _EXPECTED_BETTI.get(family)
    results = {
        "system": sys_.describe(),
        "complex": cx.to_dict(),
        "homology": hom.to_dict(),
        "euler_characteristic": cx.euler_characteristic(),
    }
    checks = {"boundary_squared_zero": True}
    if expected is not None:
        checks["betti_matches_oracle"] = tuple(hom.betti) == expected
    return results, checks, None


def _cmd_chainmap(cfg, settings, tau, crit_tol, density, seed):
    phi = _map_from_config(cfg, settings)
    src_cps = find_critical_points(phi.src, crit_tol=crit_tol)
    dst_cps = (
        src_cps if phi.dst is phi.src else find_critical_points(phi.dst, crit_tol=crit_tol)
    )
    src_cx = build_morse_complex(phi.src, src_cps, settings, tau=tau)
    dst_cx = (
        src_cx if phi.dst is phi.src
        else build_morse_complex(phi.dst, dst_cps, settings, tau=tau)
    )
    cm = chain_map_by_intersection(phi, src_cps, dst_cps, src_cx, dst_cx, settings, tau)
    results = {
        "map": phi.describe(),
        "chain_map": cm.to_dict(),
        "induced_on_homology": {str(k): v for k, v in induced_on_homology(cm).items()},
    }
    checks = {"chain_map_identity": True}
    return results, checks, None


def _cmd_flowmap(cfg, settings, tau, crit_tol, density, seed):
    phi = _map_from_config(cfg, settings)
    src_cps = find_critical_points(phi.src, crit_tol=crit_tol)
    dst_cps = (
        src_cps if phi.dst is phi.src else find_critical_points(phi.dst, crit_tol=crit_tol)
    )
    src_cx = build_morse_complex(phi.src, src_cps, settings, tau=tau)
    dst_cx = (
        src_cx if phi.dst is phi.src
        else build_morse_complex(phi.dst, dst_cps, settings, tau=tau)
    )
    cm_i = chain_map_by_intersection(phi, src_cps, dst_cps, src_cx, dst_cx, settings, tau)
    cm_f = chain_map_by_flow(phi, src_cps, dst_cps, src_cx, dst_cx, settings, tau)
    equal = cm_i.to_dict() == cm_f.to_dict()
    results = {
        "map": phi.describe(),
        "intersection_method": cm_i.to_dict(),
        "flow_method": cm_f.to_dict(),
    }
    checks = {"methods_agree": equal, "time_doubling_stable": True}
    return results, checks, None


def _cmd_compose(cfg, settings, tau, crit_tol, density, seed):
    rng = np.random.default_rng(seed)
    section = "compose" if cfg.has_section("compose") else None
    c = (
        _float_opt(cfg, section, "offset", float(rng.uniform(0.15, 0.85)))
        if section else float(rng.uniform(0.15, 0.85))
    )
    amp = _float_opt(cfg, section, "amp", 0.0) if section else 0.0
    samples = _int_opt(cfg, section, "samples", 200) if section else 200
    circle = builtin_system("circle")
    torus = builtin_system("torus")
    inner = circle_to_torus_map(circle, torus, (1, 0), (0.0, c))
    outer = torus_to_circle_map(torus, circle, (1, 0), 0.0, amp)
    cps_c = find_critical_points(circle, crit_tol=crit_tol)
    cps_t = find_critical_points(torus, crit_tol=crit_tol)
    cx_c = build_morse_complex(circle, cps_c, settings, tau=tau)
    cx_t = build_morse_complex(torus, cps_t, settings, tau=tau)
    exp = compose_experiment(
        outer, inner, cps_c, cps_t, cps_c, cx_c, cx_t, cx_c, settings, tau, samples
    )
    results = {
        "offset": c,
        "inner": exp["inner"].to_dict(),
        "outer": exp["outer"].to_dict(),
        "composite": exp["composite"].to_dict(),
    }
    checks = {
        "stably_regular": True,
        "product_equals_composite": bool(exp["product_equals_composite"]),
    }
    return results, checks, None


def _cmd_cup(cfg, settings, tau, crit_tol, density, seed):
    rng = np.random.default_rng(seed)
    draw = rng.uniform(0.1, 0.9, size=4)
    s1 = (
        [float(v) for v in cfg.get("cup", "shift1").split()]
        if cfg.has_option("cup", "shift1") else (float(draw[0]), float(draw[1]))
    )
    s2 = (
        [float(v) for v in cfg.get("cup", "shift2").split()]
        if cfg.has_option("cup", "shift2") else (float(draw[2]), float(draw[3]))
    )
    a = _float_opt(cfg, "system", "a", 0.1)
    b = _float_opt(cfg, "system", "b", 0.35)
    triple = torus_triple(a=a, b=b, shift1=tuple(s1), shift2=tuple(s2))
    report = pairing_report(triple, settings, tau=tau, density=density)
    mat = report["pairing"]
    n = len(mat)
    off_diag_unit = all(
        abs(mat[i][j]) == 1 for i in range(n) for j in range(n) if i != j
    )
    diag_zero = all(mat[i][i] == 0 for i in range(n))
    results = {"shift1": list(s1), "shift2": list(s2), **report}
    checks = {
        "antisymmetric": bool(report["antisymmetric"]),
        "off_diagonal_unit": off_diag_unit,
        "squares_vanish": diag_zero,
    }
    return results, checks, None


def _cmd_degree_check(cfg, settings, tau, crit_tol, density, seed):
    sys_, family = _system_from_section(cfg)
    cps = find_critical_points(sys_, crit_tol=crit_tol)
    table = []
    all_equal = True
    for x in cps:
        for y in cps:
            if y.index != x.index - 1:
                continue
            deg = attaching_degree(sys_, x, y, cps, settings, tau=tau)
            cnt = count_trajectories(sys_, x, y, cps, settings, tau=tau)
            eq = deg == cnt
            all_equal = all_equal and eq
            table.append(
                {"x": x.id, "y": y.id, "count": cnt, "degree": deg, "equal": eq}
            )
    results = {"system": sys_.describe(), "pairs": table}
    checks = {"degrees_match_counts": all_equal}
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["x", "y", "count", "degree", "equal"])
    for row in table:
        writer.writerow([row["x"], row["y"], row["count"], row["degree"], row["equal"]])
    return results, checks, buf.getvalue()


def _cmd_verify(cfg, settings, tau, crit_tol, density, seed):
    sys_, family = _system_from_section(cfg)
    cps = find_critical_points(sys_, crit_tol=crit_tol)
    cx = build_morse_complex(sys_, cps, settings, tau=tau)
    hom = homology(cx)
    expected = _EXPECTED_BETTI.get(family)
    degree_rows = []
    degrees_ok = True
    for x in cps:
        for y in cps:
            if y.index != x.index - 1:
                continue
            deg = attaching_degree(sys_, x, y, cps, settings, tau=tau)
            cnt = count_trajectories(sys_, x, y, cps, settings, tau=tau)
            degrees_ok = degrees_ok and deg == cnt
            degree_rows.append(
                {"x": x.id, "y": y.id, "count": cnt, "degree": deg, "equal": deg == cnt}
            )
    results = {
        "system": sys_.describe(),
        "catalogue": _catalogue_payload(cps),
        "complex": cx.to_dict(),
        "homology": hom.to_dict(),
        "euler_characteristic": cx.euler_characteristic(),
        "degree_pairs": degree_rows,
    }
    checks = {
        "boundary_squared_zero": True,
        "degrees_match_counts": degrees_ok,
        "euler_matches_betti": cx.euler_characteristic()
        == sum((-1) ** k * b for k, b in enumerate(hom.betti)),
    }
    if expected is not None:
        checks["betti_matches_oracle"] = tuple(hom.betti) == expected
    return results, checks, _catalogue_csv(cps)


_DISPATCH = {
    "crit": _cmd_crit,
    "complex": _cmd_complex,
    "chainmap": _cmd_chainmap,
    "flowmap": _cmd_flowmap,
    "compose": _cmd_compose,
    "cup": _cmd_cup,
    "degree-check": _cmd_degree_check,
    "verify": _cmd_verify,
}


def _error_report(command, kind, message, code):
    return {
        "command": command,
        "error": {"kind": kind, "message": message},
        "verdict": "error",
        "exit_code": code,
    }


def _write_report(out_dir, command, payload):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{command}-report.json")
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="morseflow",
        description="Morse complexes, induced chain maps and cup products with JSON reports.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to an INI scenario config")
    parser.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    parser.add_argument("--out", default=".", help="directory for report files")
    parser.add_argument("--format", choices=("json", "json+csv"), default="json")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        seed = args.seed
        if seed is None and cfg.has_option("run", "seed"):
            seed = cfg.getint("run", "seed")
        if seed is None:
            raise ConfigError("a seed is required (--seed or [run] seed)")
        settings = _settings_from_config(cfg)
        tau = _float_opt(cfg, "tolerances", "tau", 1e-6)
        crit_tol = _float_opt(cfg, "tolerances", "crit_tol", 1e-9)
        density = _int_opt(cfg, "tolerances", "density", 32)
    except ConfigError as e:
        report = _error_report(args.command, "config", str(e), EXIT_USAGE)
        print(json.dumps(report, sort_keys=True, indent=2))
        return EXIT_USAGE

    try:
        results, checks, csv_text = _DISPATCH[args.command](
            cfg, settings, tau, crit_tol, density, seed
        )
        verdict = "pass" if all(checks.values()) else "fail"
        code = EXIT_OK if verdict == "pass" else EXIT_CHECK
    except (ChainMapError, RegularityError) as e:
        report = _error_report(args.command, type(e).__name__, str(e), EXIT_CHECK)
        _write_report(args.out, args.command, report)
        print(json.dumps(report, sort_keys=True, indent=2))
        return EXIT_CHECK
    except (
        TransversalityError,
        NonConvergenceError,
        DegenerateCriticalPointError,
        ConfigError,
        MorseflowError,
    ) as e:
        code = EXIT_USAGE if isinstance(e, ConfigError) else EXIT_NUMERICAL
        report = _error_report(args.command, type(e).__name__, str(e), code)
        _write_report(args.out, args.command, report)
        print(json.dumps(report, sort_keys=True, indent=2))
        return code

    report = {
        "command": args.command,
        "seed": seed,
        "effective_config": _effective_config(cfg),
        "tolerances": _ledger(settings, tau, crit_tol, density),
        "results": results,
        "checks": checks,
        "verdict": verdict,
    }
    path = _write_report(args.out, args.command, report)
    if args.format == "json+csv" and csv_text is not None:
        with open(os.path.join(args.out, f"{args.command}-table.csv"), "w") as fh:
            fh.write(csv_text)
    print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
