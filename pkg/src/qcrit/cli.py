"""Command line front end.

One TOML config drives every command; reports are JSON with sorted keys so
identical config and seed give byte-identical bytes. Field artifacts go to
CSV (id, x[, y], value), optional PNG renderings of the same artifacts sit
next to them behind --plot. Exit codes: 0 success, 1 failed verification
verdict, 2 invalid config or usage, 3 non-convergence or an inconclusive
verdict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .calibration import (
    CalibrationError,
    constant_for,
    ensure_calibration,
    file_sha256,
    load_calibration,
)
from .criticality import (
    ap_field,
    ap_nonnegativity_from_field,
    criticality_probe,
)
from .eigen import (
    maximum_principle_suite,
    principal_eigenpair,
    simplicity_probe,
)
from .green import green_function, minimal_growth_solution
from .mesh import (
    ExhaustionSchedule,
    GridFunction,
    Mesh,
    build_mesh_1d,
    build_mesh_1d_log,
    build_mesh_2d,
    grid_function_to_csv,
    make_exhaustion,
)
from .morrey import MorreyParams, morrey_norm, morrey_norm_detail
from .qcore import (
    MatrixField,
    PotentialField,
    ProblemSpec,
    anorm,
    energy,
    ellipticity_theta,
    negative_part_subsolution_check,
    residual,
)
from .solver import (
    SolveOptions,
    UnboundedBelowError,
    monotone_iteration,
    solve_dirichlet,
    wcp_check,
)
from .util import stream_rng

CONFIG_SCHEMA = "qcrit-config/1"
REPORT_SCHEMA = "qcrit-report/1"


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int, context: dict | None = None):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code
        self.context = context or {}


def _invalid(message, **context):
    return CliError("invalid-config", message, 2, context)


# ---------------------------------------------------------------------------
# Config ingestion


def _take(table: dict, where: str, allowed: dict):
    """Pop every allowed key with conversion; reject leftovers."""
    out = {}
    for key, conv in allowed.items():
        if key in table:
            raw = table.pop(key)
            try:
                out[key] = conv(raw) if conv is not None else raw
            except (TypeError, ValueError) as exc:
                raise _invalid(f"{where}.{key}: {exc}", key=key)
    if table:
        raise _invalid(f"unknown keys in [{where}]: {sorted(table)}", keys=sorted(table))
    return out


def _floatlist(v):
    return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


_V_CATALOG = {
    "zero": {},
    "const": {"c": float},
    "hardy": {"beta": float},
    "radial_power": {"c": float, "alpha": float},
    "step": {"c": float, "lo": _floatlist, "hi": _floatlist},
    "hat": {"center": _floatlist, "halfwidth": float},
}

_A_CATALOG = {
    "identity": {},
    "scalar": {"c": float},
    "diag": {"cx": float, "cy": float},
}


def _potential_from(table: dict, where: str) -> PotentialField:
    if not isinstance(table, dict):
        raise _invalid(f"[{where}] must be a table")
    table = dict(table)
    kind = table.pop("kind", None)
    if kind not in _V_CATALOG:
        raise _invalid(f"{where}.kind must be one of {sorted(_V_CATALOG)}", got=kind)
    params = _take(table, where, _V_CATALOG[kind])
    if kind == "zero":
        return PotentialField.zero()
    if kind == "hat":
        return PotentialField.hat(params["center"], params["halfwidth"])
    if kind == "step":
        return PotentialField.step(params["c"], params["lo"], params["hi"])
    return PotentialField(kind, params)


def _matrix_from(table: dict, where: str) -> MatrixField:
    if not isinstance(table, dict):
        raise _invalid(f"[{where}] must be a table")
    table = dict(table)
    kind = table.pop("kind", None)
    if kind not in _A_CATALOG:
        raise _invalid(f"{where}.kind must be one of {sorted(_A_CATALOG)}", got=kind)
    params = _take(table, where, _A_CATALOG[kind])
    return MatrixField(kind, params)


def _mesh_from(table: dict) -> Mesh:
    table = dict(table)
    kind = table.pop("kind", None)
    if kind == "interval":
        d = _take(table, "problem.domain", {"a": float, "b": float, "n": int, "ambient_n": int})
        return build_mesh_1d(d.get("a", 0.0), d.get("b", 1.0), d.get("n", 128), d.get("ambient_n", 1))
    if kind == "interval_log":
        d = _take(table, "problem.domain", {"a": float, "b": float, "n": int, "ambient_n": int})
        return build_mesh_1d_log(d.get("a", 1.0), d.get("b", 8.0), d.get("n", 128), d.get("ambient_n", 3))
    if kind == "rectangle":
        d = _take(table, "problem.domain",
                  {"x0": float, "y0": float, "x1": float, "y1": float, "nx": int, "ny": int})
        return build_mesh_2d(d.get("x0", 0.0), d.get("y0", 0.0), d.get("x1", 1.0),
                             d.get("y1", 1.0), d.get("nx", 32), d.get("ny", 32))
    raise _invalid("problem.domain.kind must be interval, interval_log, or rectangle", got=kind)


def load_config(path: str) -> dict:
    """Parse and validate; returns the normalized config dict (the echo)."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise _invalid(f"cannot read config: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise _invalid(f"config is not valid TOML: {exc}")
    cfg = dict(raw)
    schema = cfg.pop("schema", None)
    if schema != CONFIG_SCHEMA:
        raise _invalid(f"config schema must be {CONFIG_SCHEMA!r}", got=schema)

    out = {"schema": CONFIG_SCHEMA}
    problem = cfg.pop("problem", None)
    if problem is not None:
        if not isinstance(problem, dict):
            raise _invalid("[problem] must be a table")
        problem = dict(problem)
        domain = problem.pop("domain", None)
        a_tab = problem.pop("A", None)
        v_tab = problem.pop("V", None)
        fields = _take(problem, "problem", {"p": float})
        if "p" not in fields:
            raise _invalid("problem.p is required")
        if fields["p"] <= 1.0:
            raise _invalid("problem.p must exceed 1", got=fields["p"])
        out["problem"] = fields
        if domain is not None:
            out["problem"]["domain"] = dict(domain)
        if a_tab is not None:
            out["problem"]["A"] = dict(a_tab)
        if v_tab is not None:
            out["problem"]["V"] = dict(v_tab)

    for name, allowed in (
        ("exhaustion", None),
        ("solver", {"tol_grad": float, "max_iter": int, "method": str,
                    "eps_regularization": float, "max_backtracks": int}),
        ("seeds", {"master": int}),
        ("tolerances", {"tol": float, "tol_bisect": float, "tol_t": float, "stab": float}),
        ("morrey", {"q": float}),
        ("green", {"pole": _floatlist, "x1": _floatlist, "levels": int,
                   "source_radius": float}),
        ("load", None),
        ("boundary", {"value": float}),
        ("output", {"dir": str}),
    ):
        tab = cfg.pop(name, None)
        if tab is None:
            continue
        if not isinstance(tab, dict):
            raise _invalid(f"[{name}] must be a table")
        out[name] = _take(dict(tab), name, allowed) if allowed is not None else dict(tab)
    if cfg:
        raise _invalid(f"unknown top-level keys: {sorted(cfg)}", keys=sorted(cfg))

    # eager catalog validation so bad entries die at parse time
    if "problem" in out:
        if "domain" in out["problem"]:
            _mesh_from(dict(out["problem"]["domain"]))
        if "A" in out["problem"]:
            _matrix_from(out["problem"]["A"], "problem.A")
        if "V" in out["problem"]:
            _potential_from(out["problem"]["V"], "problem.V")
    if "load" in out:
        _potential_from(out["load"], "load")
    if "exhaustion" in out:
        tab = dict(out["exhaustion"])
        if "kind" not in tab:
            raise _invalid("exhaustion.kind is required")
        try:
            make_exhaustion(tab.pop("kind"), tab)
        except ValueError as exc:
            raise _invalid(f"exhaustion: {exc}")
    return out


def _build_problem(cfg: dict, need_mesh: bool = True):
    if "problem" not in cfg:
        raise _invalid("this command needs a [problem] table")
    prob = cfg["problem"]
    p = prob["p"]
    A = _matrix_from(prob["A"], "problem.A") if "A" in prob else MatrixField.identity()
    V = _potential_from(prob["V"], "problem.V") if "V" in prob else PotentialField.zero()
    mesh = None
    if "domain" in prob:
        mesh = _mesh_from(dict(prob["domain"]))
    elif need_mesh:
        raise _invalid("this command needs problem.domain")
    return p, mesh, A, V


def _build_schedule(cfg: dict) -> ExhaustionSchedule:
    if "exhaustion" not in cfg:
        raise _invalid("this command needs an [exhaustion] table")
    tab = dict(cfg["exhaustion"])
    kind = tab.pop("kind")
    try:
        return make_exhaustion(kind, tab)
    except ValueError as exc:
        raise _invalid(f"exhaustion: {exc}")


def _solve_options(cfg: dict) -> SolveOptions | None:
    if "solver" not in cfg:
        return None
    return SolveOptions(**cfg["solver"])


# ---------------------------------------------------------------------------
# Artifacts


def _out_dir(cfg: dict) -> str:
    env = os.environ.get("QCRIT_OUT_DIR")
    if env:
        return env
    return cfg.get("output", {}).get("dir", ".")


def _resolve(path: str | None, cfg: dict, default: str) -> str:
    base = _out_dir(cfg)
    os.makedirs(base, exist_ok=True)
    if path is None:
        return os.path.join(base, default)
    if os.path.isabs(path):
        return path
    return os.path.join(base, path)


def _emit(report: dict, args, cfg: dict, extra_csv: dict | None = None) -> None:
    """Write the JSON report (stdout, or --out when it names a .json)."""
    report = {"schema": REPORT_SCHEMA, **report}
    if args.timing is not None:
        report["timing"] = {"wall_s": round(time.perf_counter() - args.timing, 3)}
    text = json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
    out = getattr(args, "out", None)
    if out and out.endswith(".json"):
        path = _resolve(out, cfg, out)
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)


def _field_csv(u: GridFunction, args, cfg: dict, default: str) -> str:
    out = getattr(args, "out", None)
    path = _resolve(out if out and out.endswith(".csv") else None, cfg, default)
    grid_function_to_csv(u, path)
    if getattr(args, "plot", False):
        from .plots import render_field
        render_field(u, os.path.splitext(path)[0] + ".png")
    return path


def _provenance(cfg: dict, cal_sha: str | None) -> dict:
    seed = cfg.get("seeds", {}).get("master", 42)
    return {"seed": seed, "calibration_sha256": cal_sha, "version": __version__}


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_json_safe(x) for x in v.tolist()]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# Commands


def cmd_eigen(args):
    cfg = load_config(args.config)
    p, mesh, A, V = _build_problem(cfg)
    eig = principal_eigenpair(ProblemSpec(p, mesh, A, V), solve_options=_solve_options(cfg))
    csv_path = _field_csv(eig.v1, args, cfg, "v1.csv")
    report = {
        "command": "eigen",
        "config": cfg,
        "results": {
            "lambda1": eig.lambda1,
            "iterations": eig.iterations,
            "residual": eig.rayleigh_residual,
            "method": eig.method,
            "converged": eig.converged,
            "eigenfunction_csv_path": csv_path,
        },
        "provenance": _provenance(cfg, _existing_cal_sha()),
    }
    _emit(report, args, cfg)
    if not eig.converged:
        raise CliError("non-convergence", "eigensolve did not converge", 3)
    return 0


def _load_field(cfg: dict, args) -> PotentialField:
    if getattr(args, "g", None):
        return _parse_inline_catalog(args.g)
    if "load" in cfg:
        return _potential_from(cfg["load"], "load")
    return PotentialField.const(1.0)


def _parse_inline_catalog(text: str) -> PotentialField:
    kind, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            if not _ or not k:
                raise _invalid(f"bad catalog entry {text!r}: expected kind:key=value,...")
            params[k.strip()] = [float(x) for x in v.split("/")] if "/" in v else float(v)
    return _potential_from({"kind": kind.strip(), **params}, "--g")


def cmd_solve(args):
    cfg = load_config(args.config)
    p, mesh, A, V = _build_problem(cfg)
    g = _load_field(cfg, args)
    fb = cfg.get("boundary", {}).get("value")
    try:
        u, trace = solve_dirichlet(ProblemSpec(p, mesh, A, V), g, f_boundary=fb,
                                   options=_solve_options(cfg))
    except UnboundedBelowError as exc:
        raise CliError("non-convergence", str(exc), 3)
    csv_path = _field_csv(u, args, cfg, "u.csv")
    if args.trace:
        tp = _resolve(args.trace, cfg, args.trace)
        with open(tp, "w") as fh:
            fh.write("iter,energy,gradnorm\n")
            for i, (e, r) in enumerate(zip(trace.energies, trace.residual_norms)):
                fh.write(f"{i},{e!r},{r!r}\n")
    report = {
        "command": "solve",
        "config": cfg,
        "results": {
            "converged": trace.converged,
            "iterations": trace.n_iter,
            "final_energy": trace.energies[-1] if trace.energies else None,
            "solution_csv_path": csv_path,
        },
        "provenance": _provenance(cfg, _existing_cal_sha()),
    }
    _emit(report, args, cfg)
    if not trace.converged:
        raise CliError("non-convergence", trace.message or "solver did not converge", 3)
    return 0


def cmd_iterate(args):
    cfg = load_config(args.config)
    p, mesh, A, V = _build_problem(cfg)
    g = _load_field(cfg, args)
    fb = cfg.get("boundary", {}).get("value")
    try:
        lower, upper, info = monotone_iteration(ProblemSpec(p, mesh, A, V), g, f_boundary=fb,
                                                options=_solve_options(cfg))
    except (ValueError, UnboundedBelowError) as exc:
        raise CliError("non-convergence", str(exc), 3)
    csv_path = _field_csv(upper, args, cfg, "iterate.csv")
    report = {
        "command": "iterate",
        "config": cfg,
        "results": {
            "converged": info["converged"],
            "gap": info["gap"],
            "limits_ordered": info["limits_ordered"],
            "lower_residual": info["lower_residual"],
            "upper_residual": info["upper_residual"],
            "solution_csv_path": csv_path,
        },
        "provenance": _provenance(cfg, _existing_cal_sha()),
    }
    _emit(report, args, cfg)
    if not info["converged"]:
        raise CliError("non-convergence", "monotone iteration did not converge", 3)
    return 0


def cmd_criticality(args):
    cfg = load_config(args.config)
    if args.exhaustion:
        cfg.setdefault("exhaustion", {})["kind"] = args.exhaustion
    if args.levels:
        cfg.setdefault("exhaustion", {})["count"] = args.levels
    schedule = _build_schedule(cfg)
    p, _, A, V = _build_problem(cfg, need_mesh=False)
    tols = cfg.get("tolerances", {})
    report_obj = criticality_probe(
        schedule, p, A, V,
        tol_t=tols.get("tol_t"), tol_bisect=tols.get("tol_bisect", 1e-4),
        tol=tols.get("tol", 1e-8), solve_options=_solve_options(cfg),
    )
    ground_csv = None
    if report_obj.ground_state is not None:
        ground_csv = _resolve(None, cfg, "ground_state.csv")
        grid_function_to_csv(report_obj.ground_state, ground_csv)
    results = {
        "verdict": report_obj.verdict,
        "tol_t": report_obj.tol_t,
        "lambda_sequence": list(report_obj.lambda_sequence),
        "t_sequence": list(report_obj.t_sequence),
        "ground_state_csv_path": ground_csv,
        "diagnostics": _json_safe(report_obj.diagnostics),
    }
    if getattr(args, "plot", False):
        from .plots import render_sequences
        render_sequences(
            {"lambda1 per member": report_obj.lambda_sequence,
             "crossing weight per member": report_obj.t_sequence},
            os.path.join(_out_dir(cfg), "criticality.png"),
        )
    report = {
        "command": "criticality",
        "config": cfg,
        "results": results,
        "provenance": _provenance(cfg, _existing_cal_sha()),
    }
    _emit(report, args, cfg)
    if report_obj.verdict == "inconclusive":
        raise CliError("inconclusive", report_obj.message or "probe inconclusive", 3)
    return 0


def cmd_green(args):
    cfg = load_config(args.config)
    green_cfg = dict(cfg.get("green", {}))
    if args.pole is not None:
        green_cfg["pole"] = args.pole
    if args.levels:
        green_cfg["levels"] = args.levels
    if "exhaustion" in cfg:
        domain = _build_schedule(cfg)
        p, _, A, V = _build_problem(cfg, need_mesh=False)
    else:
        p, domain, A, V = _build_problem(cfg)
    tols = cfg.get("tolerances", {})
    res = green_function(
        domain, p, A, V,
        x0=green_cfg.get("pole"), x1=green_cfg.get("x1"),
        levels=green_cfg.get("levels"), source_radius=green_cfg.get("source_radius"),
        solve_options=_solve_options(cfg),
    )
    csv_path = None
    if res.G is not None:
        csv_path = _field_csv(res.G, args, cfg, "G.csv")
    rec = res.to_dict()
    rec["green_csv_path"] = csv_path
    report = {
        "command": "green",
        "config": cfg,
        "results": _json_safe(rec),
        "provenance": _provenance(cfg, _existing_cal_sha()),
    }
    _emit(report, args, cfg)
    if res.verdict == "inconclusive":
        raise CliError("inconclusive", res.message or "green construction inconclusive", 3)
    return 0


def cmd_morrey(args):
    cfg = load_config(args.config)
    p, mesh, A, V = _build_problem(cfg)
    if "morrey" not in cfg:
        raise _invalid("this command needs a [morrey] table with q")
    q = cfg["morrey"]["q"]
    try:
        params = MorreyParams(p, mesh.ambient_n, q)
    except ValueError as exc:
        raise _invalid(str(exc))
    detail = morrey_norm_detail(V, mesh, params)
    data, sha, _ = _calibration()
    try:
        cal = constant_for(data, "morrey_adams", f"n={mesh.ambient_n:g},p={p:g},q={q:g}")
    except CalibrationError:
        cal = None
    report = {
        "command": "morrey",
        "config": cfg,
        "results": _json_safe({
            "norm": detail["norm"],
            "argmax_center": detail.get("argmax_center"),
            "argmax_radius": detail.get("argmax_radius"),
            "regime": detail["regime"],
            "calibrated_C": cal,
        }),
        "provenance": _provenance(cfg, sha),
    }
    _emit(report, args, cfg)
    return 0


# ---------------------------------------------------------------------------
# Verification suites


def _existing_cal_sha() -> str | None:
    path = os.environ.get("QCRIT_CALIBRATION", "qcrit_calibration.json")
    if os.path.exists(path):
        try:
            return load_calibration(path)[1]
        except CalibrationError:
            return file_sha256(path)
    return None


def _calibration():
    path = os.environ.get("QCRIT_CALIBRATION", "qcrit_calibration.json")
    data, sha, path = ensure_calibration(path)
    return data, sha, path


def _suite_lindqvist(samples: int, seed: int) -> dict:
    from .qcore import lindqvist_gap

    data, sha, _ = _calibration()
    worst = np.inf
    consts = {}
    for p in (1.5, 2.0, 3.0):
        from .calibration import random_pairs

        alpha, beta, a_elems = random_pairs(p, samples, seed)
        c_p = constant_for(data, "lindqvist_pointwise", f"{p:g}")
        gap = lindqvist_gap(alpha, beta, a_elems, p, c_p)
        worst = min(worst, float(gap.min()))
        consts[f"{p:g}"] = c_p
    return {"suite": "lindqvist", "samples": samples, "min_gap": worst,
            "calibrated_constant": consts, "passed": bool(worst >= -1e-12)}


def _suite_kato(samples: int, seed: int) -> dict:
    mesh = build_mesh_1d(0.0, 1.0, 96)
    bc = np.zeros(mesh.n_nodes)
    bc[0] = -1.0
    bc[-1] = 0.5
    worst = 0.0
    count = 0
    for p in (1.5, 2.0, 3.0):
        # the p < 2 descent cannot take the deep indefinite well
        depth = (10.0, -4.0) if p < 2.0 else (60.0, -25.0)
        for V in (PotentialField.const(2.0),
                  PotentialField.radial_power(depth[0], 1.0).plus(PotentialField.const(depth[1]))):
            spec = ProblemSpec(p, mesh, V=V)
            u, tr = solve_dirichlet(spec, 0.0, f_boundary=bc)
            rep = negative_part_subsolution_check(spec, u)
            worst = max(worst, rep["max_violation"])
            count += 1
    return {"suite": "kato", "samples": count, "min_gap": -worst,
            "calibrated_constant": None, "passed": bool(worst <= 0.0)}


def _suite_ellipticity(samples: int, seed: int) -> dict:
    rng = stream_rng(seed, "ellipticity")
    n = max(16, samples)
    th = rng.uniform(0.0, np.pi, n)
    lam = np.exp(rng.uniform(np.log(0.2), np.log(5.0), (n, 2)))
    c, s = np.cos(th), np.sin(th)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    a = np.einsum("mij,mj,mkj->mik", rot, lam, rot)
    theta = ellipticity_theta(a)
    xi = rng.normal(size=(n, 2))
    na = anorm(xi, a)
    norm2 = np.sqrt((xi**2).sum(axis=1))
    lo = na - theta * norm2
    hi = norm2 / theta - na
    worst = float(min(lo.min(), hi.min()))
    return {"suite": "ellipticity", "samples": n, "min_gap": worst,
            "calibrated_constant": None, "passed": bool(worst >= -1e-10 * (1.0 + norm2.max()))}


def _suite_morrey(samples: int, seed: int) -> dict:
    data, sha, _ = _calibration()
    mesh = build_mesh_1d(0.0, 1.0, 256)
    V = PotentialField.step(2.0, 0.25, 0.625)
    params = MorreyParams(1.5, 1, 1.0)
    detail = morrey_norm_detail(V, mesh, params)
    n1 = detail["norm"]
    hom_gap = abs(morrey_norm(V.scaled(3.0), mesh, params) - 3.0 * n1) / max(n1, 1e-300)
    mono_ok = morrey_norm(PotentialField.step(1.0, 0.25, 0.625), mesh, params) <= n1 + 1e-12
    cal = constant_for(data, "morrey_adams", "n=1,p=1.5,q=1")
    passed = bool(hom_gap <= 1e-12 and mono_ok)
    return {"suite": "morrey", "samples": 2, "passed": passed,
            "norm": n1, "argmax_center": _json_safe(detail.get("argmax_center")),
            "argmax_radius": detail.get("argmax_radius"), "regime": detail["regime"],
            "calibrated_C": cal, "homogeneity_gap": hom_gap, "monotonicity_ok": bool(mono_ok)}


def _suite_homogeneity(samples: int, seed: int) -> dict:
    rng = stream_rng(seed, "homogeneity")
    mesh = build_mesh_1d(0.0, 1.0, 64)
    mesh2 = build_mesh_2d(0.0, 0.0, 1.0, 1.0, 8, 8)
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        for m in (mesh, mesh2):
            spec = ProblemSpec(p, m, V=PotentialField.const(0.7))
            vals = rng.normal(size=m.n_nodes)
            vals[m.boundary] = 0.0
            u = GridFunction(m, vals)
            e1 = energy(spec, u)
            for c in (0.5, -2.0, 3.7):
                ec = energy(spec, GridFunction(m, c * vals))
                worst = max(worst, abs(ec - abs(c) ** p * e1) / (1.0 + abs(e1)))
    return {"suite": "homogeneity", "samples": 18, "min_gap": -worst,
            "calibrated_constant": None, "passed": bool(worst <= 1e-10)}


def _suite_shift(samples: int, seed: int) -> dict:
    from .eigen import principal_eigenvalue

    mesh = build_mesh_1d(0.0, 1.0, 96)
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        lam0 = principal_eigenvalue(ProblemSpec(p, mesh))
        for c in (-3.0, 2.5):
            lam = principal_eigenvalue(ProblemSpec(p, mesh, V=PotentialField.const(c)))
            worst = max(worst, abs(lam - (lam0 + c)) / (1.0 + abs(lam0)))
    return {"suite": "shift", "samples": 6, "min_gap": -worst,
            "calibrated_constant": None, "passed": bool(worst <= 1e-7)}


def _suite_monotonicity(samples: int, seed: int) -> dict:
    from .eigen import principal_eigenvalue

    ok = True
    details = {}
    for p in (2.0, 3.0):
        lams = [principal_eigenvalue(ProblemSpec(p, build_mesh_1d(-r, 1.0 + r, 128)))
                for r in (0.0, 0.25, 0.5)]
        ok &= bool(lams[0] >= lams[1] >= lams[2] - 1e-10)
        details[f"domain_p{p:g}"] = lams
        mesh = build_mesh_1d(0.0, 1.0, 96)
        la = principal_eigenvalue(ProblemSpec(p, mesh))
        lb = principal_eigenvalue(ProblemSpec(p, mesh, V=PotentialField.step(2.0, 0.3, 0.7)))
        ok &= bool(la <= lb + 1e-10)
        details[f"potential_p{p:g}"] = [la, lb]
    return {"suite": "monotonicity", "samples": 10, "passed": bool(ok), "details": details}


def _suite_wcp(samples: int, seed: int) -> dict:
    mesh = build_mesh_1d(0.0, 1.0, 96)
    verdicts = []
    for p in (2.0, 3.0):
        spec = ProblemSpec(p, mesh, V=PotentialField.const(1.0))
        u1, _ = solve_dirichlet(spec, 0.5)
        u2, _ = solve_dirichlet(spec, 1.0)
        from .eigen import principal_eigenvalue

        rep = wcp_check(spec, u1, u2, g=1.0, lambda1=principal_eigenvalue(spec))
        verdicts.append(rep["verdict"])
    return {"suite": "wcp", "samples": len(verdicts), "passed": all(v == "pass" for v in verdicts),
            "verdicts": verdicts}


def _suite_scaling(samples: int, seed: int) -> dict:
    worst = 0.0
    opts = SolveOptions(tol_grad=1e-14)
    for p in (2.0, 3.0):
        m1 = build_mesh_1d(0.0, 1.0, 256)
        mR = build_mesh_1d(0.0, 2.0, 256)
        V1 = PotentialField.radial_power(5.0, 1.0)
        VR = PotentialField.radial_power(5.0 * 2.0 ** (-p - 1.0), 1.0)
        u1, t1 = minimal_growth_solution(m1, p, V=V1, x0=0.5, levels=5, solve_options=opts)
        uR, _ = minimal_growth_solution(mR, p, V=VR, x0=1.0, x1=0.5, levels=5,
                                        source_radius=2 * t1["source_radius"], solve_options=opts)
        worst = max(worst, float(np.abs(u1.values - uR.values).max()))
    return {"suite": "scaling", "samples": 2, "min_gap": -worst,
            "calibrated_constant": None, "passed": bool(worst <= 1e-8)}


def _suite_maximum_principle(samples: int, seed: int) -> dict:
    mesh = build_mesh_1d(0.0, 1.0, 96)
    out = {}
    ok = True
    for p, V in ((2.0, PotentialField.const(1.0)), (3.0, PotentialField.zero()),
                 (2.0, PotentialField.const(-15.0))):
        rep = maximum_principle_suite(ProblemSpec(p, mesh, V=V), trials=max(4, samples), seed=seed)
        key = f"p{p:g}_{V.kind}{V.params.get('c', 0):g}"
        out[key] = {"branch": rep["branch"], "passed": rep["passed"]}
        ok &= rep["passed"]
    return {"suite": "maximum_principle", "samples": len(out), "passed": bool(ok), "cases": out}


def _suite_simplicity(samples: int, seed: int) -> dict:
    mesh = build_mesh_1d(0.0, 1.0, 64)
    ok = True
    pairs = {}
    for p in (1.5, 3.0):
        rep = simplicity_probe(ProblemSpec(p, mesh), restarts=max(3, samples), seed=seed)
        pairs[f"p{p:g}"] = rep["max_pair_rhs"]
        ok &= rep["passed"]
    return {"suite": "simplicity", "samples": len(pairs), "passed": bool(ok),
            "max_pair_rhs": pairs}


def _suite_ap(samples: int, seed: int) -> dict:
    mesh = build_mesh_1d(-1.0, 1.0, 128)
    a = np.pi / 4.0
    spec = ProblemSpec(2.0, mesh, V=PotentialField.const(-a * a))
    v = GridFunction(mesh, np.cos(a * mesh.coords2[:, 0]))
    fld = ap_field(spec, v)
    rep = ap_nonnegativity_from_field(spec, fld, trials=max(10, samples), seed=seed)
    return {"suite": "ap", "samples": rep["total"], "passed": rep["all_pass"],
            "failures": rep["failures"], "max_interior_residual": fld.max_interior_residual}


SUITES = {
    "lindqvist": _suite_lindqvist,
    "kato": _suite_kato,
    "ellipticity": _suite_ellipticity,
    "morrey": _suite_morrey,
    "homogeneity": _suite_homogeneity,
    "shift": _suite_shift,
    "monotonicity": _suite_monotonicity,
    "wcp": _suite_wcp,
    "scaling": _suite_scaling,
    "maximum_principle": _suite_maximum_principle,
    "simplicity": _suite_simplicity,
    "ap": _suite_ap,
}

_DEFAULT_SAMPLES = {
    "lindqvist": 200_000,
    "ellipticity": 50_000,
}


def cmd_verify(args):
    cfg = load_config(args.config) if args.config else {"schema": CONFIG_SCHEMA}
    seed = args.seed if args.seed is not None else cfg.get("seeds", {}).get("master", 42)
    names = [args.suite] if args.suite and args.suite != "all" else sorted(SUITES)
    for name in names:
        if name not in SUITES:
            raise _invalid(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    single = args.suite is not None and args.suite != "all"
    reports = []
    for name in names:
        samples = args.samples if args.samples is not None else _DEFAULT_SAMPLES.get(name, 24)
        rep = SUITES[name](samples, seed)
        reports.append(rep)
        if not single:
            status = "PASS" if rep["passed"] else "FAIL"
            print(f"{status} {name}")
    aggregate = all(r["passed"] for r in reports)
    if single:
        _emit({"command": "verify", "config": cfg, "results": _json_safe(reports[0]),
               "provenance": _provenance(cfg, _existing_cal_sha())}, args, cfg)
    else:
        _emit({"command": "verify", "config": cfg,
               "results": _json_safe({"suites": reports, "all_passed": aggregate}),
               "provenance": _provenance(cfg, _existing_cal_sha())}, args, cfg)
    if not aggregate:
        failing = [r["suite"] for r in reports if not r["passed"]]
        raise CliError("suite-failure", f"failing suites: {', '.join(failing)}", 1)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcrit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--out", default=None)
        sp.add_argument("--plot", action="store_true")
        sp.add_argument("--timing", action="store_true")

    sp = sub.add_parser("eigen", help="principal eigenpair of the configured form")
    common(sp)
    sp = sub.add_parser("solve", help="Dirichlet solve with a catalog load")
    common(sp)
    sp.add_argument("--g", default=None, metavar="KIND:K=V,...")
    sp.add_argument("--trace", default=None)
    sp = sub.add_parser("iterate", help="two-sided monotone iteration")
    common(sp)
    sp.add_argument("--g", default=None, metavar="KIND:K=V,...")
    sp = sub.add_parser("criticality", help="exhaustion-limit verdict for the configured family")
    common(sp)
    sp.add_argument("--exhaustion", default=None)
    sp.add_argument("--levels", type=int, default=None)
    sp = sub.add_parser("green", help="pole construction and existence verdict")
    common(sp)
    sp.add_argument("--pole", type=float, nargs="+", default=None)
    sp.add_argument("--levels", type=int, default=None)
    sp = sub.add_parser("morrey", help="weighted Morrey norm of the configured potential")
    common(sp)
    sp = sub.add_parser("verify", help="invariant suites; no --suite runs all of them")
    common(sp, config_required=False)
    sp.add_argument("--suite", default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    return ap


_HANDLERS = {
    "eigen": cmd_eigen,
    "solve": cmd_solve,
    "iterate": cmd_iterate,
    "criticality": cmd_criticality,
    "green": cmd_green,
    "morrey": cmd_morrey,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    args.timing = time.perf_counter() if args.timing else None
    try:
        return _HANDLERS[args.command](args)
    except CliError as exc:
        _print_error(exc.code, str(exc), exc.context)
        return exc.exit_code
    except CalibrationError as exc:
        _print_error("invalid-config", str(exc), {})
        return 2
    except (ValueError, ArithmeticError) as exc:
        _print_error("invalid-input", str(exc), {"type": type(exc).__name__})
        return 2
    except UnboundedBelowError as exc:
        _print_error("non-convergence", str(exc), {})
        return 3


def _print_error(code: str, message: str, context: dict):
    sys.stdout.write(json.dumps(
        {"error": {"code": code, "message": message, "context": _json_safe(context)}},
        sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())
