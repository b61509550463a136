"""Command-line entry point: ``weaknoise <subcommand> --builtin NAME | --model PATH [options]``.

Every run writes its outputs and a ``manifest.json`` into ``--out``.  Floats are
printed with 17 significant digits, so identical invocations give identical
files.  Exit codes: 0 success, 2 invalid input or a failed validation check,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import characteristics as ch
from . import kramers as kr
from .equilibrium import ATTRACTOR, SADDLE, analyze_equilibrium, find_equilibria, lattice_seeds
from .errors import ChiUndeterminedError, ModelError, NumericalError, ValidationError
from .exit_regular import boundary_exit, boundary_normal_form, saddle_exit_analysis, w0_prefactor
from .exit_singular import ABOVE, BELOW, singular_boundary_coefficients, singular_exit
from .grid import GridSpec, SampleCloud, build_grid
from .model import BUILTINS, builtin, cubic_potential, load_model
from .montecarlo import AbsorbingBoundary, mc_simulate
from .polynomial import Poly
from .serialize import dumps, read_csv_columns, write_csv, write_json, write_jsonl
from .validate import cross_oracle, eikonal_residual, projection_gap

SUBCOMMANDS = ("analyze", "quasipotential", "exit", "kramers", "mc", "validate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _pair(text):
    return _floats(text, 2)


def _box(text):
    return _floats(text, 4)


def _grid(text):
    v = _floats(text, 6)
    return GridSpec(v[0], v[1], int(v[2]), v[3], v[4], int(v[5]))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=Path, help="model configuration document (JSON)")
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in model")
    common.add_argument("--gamma", type=float, help="friction (kramers models)")
    common.add_argument("--omega", type=float, help="rotation rate (rotational_ou) or barrier frequency")
    common.add_argument("--alpha", type=float, help="Maier-Stein parameter")
    common.add_argument("--potential", default=None,
                        help="'cubic' or JSON terms [[coefficient, x_power], ...] for U(x)")
    common.add_argument("--box", type=_box, help="domain box x_min,x_max,y_min,y_max")
    common.add_argument("--chi-if-undetermined", type=float, default=None,
                        help="chi at equilibria where div a = 0 leaves it free")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = _Parser(prog="weaknoise", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"weaknoise {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    sub.add_parser("analyze", parents=[common], help="locate and analyse equilibria")

    q = sub.add_parser("quasipotential", parents=[common], help="phi on a grid from characteristics")
    _fan_args(q)

    e = sub.add_parser("exit", parents=[common], help="exit rate and exit-point density")
    e.add_argument("--epsilon", type=float, required=True)
    where = e.add_mutually_exclusive_group(required=True)
    where.add_argument("--boundary", type=Path, help="CSV polyline with columns x, y")
    where.add_argument("--separatrix-from-saddle", type=int, metavar="ID",
                       help="exit through the saddle with this equilibrium id (see analyze)")
    e.add_argument("--reference", type=_pair, help="reference point x,y on the boundary")
    e.add_argument("--inside", type=_pair, help="a point inside the domain (regular diffusion)")
    e.add_argument("--side", choices=(ABOVE, BELOW), default=BELOW,
                   help="side of a singular-diffusion boundary graph where the domain lies")
    _fan_args(e)

    k = sub.add_parser("kramers", parents=[common], help="Kramers exit rate for all friction")
    k.add_argument("--epsilon", type=float, required=True)
    k.add_argument("--density-points", type=int, default=2001)

    m = sub.add_parser("mc", parents=[common], help="Monte Carlo exit statistics")
    m.add_argument("--epsilon", type=float, required=True)
    m.add_argument("--dt", type=float, required=True)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--cap-multiplier", type=float, default=50.0,
                   help="time cap as a multiple of the predicted mean exit time")
    m.add_argument("--start", type=_pair, help="start point (default: the attractor)")
    m.add_argument("--radius", type=float, help="absorbing circle around the start (non-Kramers models)")
    m.add_argument("--predicted-time", type=float,
                   help="predicted mean exit time (needed when no prediction is available)")
    m.add_argument("--bins", type=int, default=60)

    v = sub.add_parser("validate", parents=[common], help="cross-oracle and structural checks")
    v.add_argument("--epsilon", type=float, default=None,
                   help="recorded in the report; the checks themselves do not depend on it")
    v.add_argument("--n-traj", type=int, default=24)
    v.add_argument("--attractor", type=int, default=None)
    v.add_argument("--grid", type=_grid, default=None,
                   help="grid for the eikonal residual (default: 51 x 51 around the attractor)")
    return p


def _fan_args(p):
    p.add_argument("--attractor", type=int, default=None, help="equilibrium id of the attractor")
    p.add_argument("--n-traj", type=int, default=64, help="characteristics in the upward fan")
    p.add_argument("--phi0", type=float, default=1e-6, help="phi on the seed ellipse")
    p.add_argument("--grid", type=_grid, default=None,
                   help="x_min,x_max,nx,y_min,y_max,ny (default: domain box, 61 x 61); "
                        "its spacing also bounds the sample triangles used on boundaries")


# -- model ingestion ----------------------------------------------------------------------

def _potential(args) -> Poly | None:
    if args.potential is None or args.potential == "cubic":
        return None
    try:
        terms = json.loads(args.potential)
        return Poly.from_terms([[c, i, 0] for c, i in terms])
    except (json.JSONDecodeError, TypeError, ValueError):
        raise ModelError("--potential must be 'cubic' or JSON [[coefficient, x_power], ...]") from None


def _builtin_params(args) -> dict:
    params = {k: getattr(args, k) for k in ("gamma", "omega", "alpha") if getattr(args, k) is not None}
    pot = _potential(args)
    if args.builtin == "kramers":
        if pot is None:
            raise ModelError("built-in 'kramers' needs --potential terms")
        params["potential"] = pot
    elif pot is not None:
        raise ModelError(f"--potential terms apply to the built-in 'kramers', not {args.builtin!r}")
    if args.builtin == "kramers_cubic" and args.potential not in (None, "cubic"):
        raise ModelError("kramers_cubic has the cubic potential")
    if args.box is not None:
        params["box"] = tuple(args.box)
    return params


def load_from_args(args):
    if args.model is not None:
        if any(getattr(args, k) is not None for k in ("gamma", "omega", "alpha", "potential", "box")):
            raise ModelError("model parameters come from the document when --model is given")
        try:
            text = args.model.read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read model document: {exc}") from None
        return load_model(text)
    return builtin(args.builtin, **_builtin_params(args))


def _description(args, model) -> dict:
    if model is not None:
        return model.to_document()
    params = {k: v.to_triples() if isinstance(v, Poly) else v for k, v in _builtin_params(args).items()}
    return {"builtin": args.builtin, "params": params}


def _hash(doc) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# -- equilibria -----------------------------------------------------------------------------

def _equilibria(model, chi_if_undetermined, strict: bool):
    """Analyses of all equilibria in the box; with ``strict`` False, points where chi
    is undetermined are returned as (location, message) in the second list."""
    out, skipped = [], []
    for z in find_equilibria(model, lattice_seeds(model)):
        try:
            out.append(analyze_equilibrium(model, z, chi_if_undetermined))
        except ChiUndeterminedError as exc:
            if strict:
                raise ChiUndeterminedError(f"{exc}; pass --chi-if-undetermined") from None
            skipped.append({"location": [float(v) for v in z], "reason": str(exc)})
    return out, skipped


def _pick(eqs, index, kind):
    if index is None:
        hits = [a for a in eqs if a.kind == kind]
        if not hits:
            raise ValidationError(f"model has no {kind} in its domain box")
        return hits[0]
    if not 0 <= index < len(eqs):
        raise ValidationError(f"equilibrium id {index} out of range (0..{len(eqs) - 1})")
    if eqs[index].kind != kind:
        raise ValidationError(f"equilibrium {index} is a {eqs[index].kind}, not a {kind}")
    return eqs[index]


def _fan_grid(model, args, attractor):
    gs = args.grid
    if gs is None:
        x0, x1, y0, y1 = model.domain_box
        gs = GridSpec(x0, x1, 61, y0, y1, 61)
    fan = ch.upward_fan(model, attractor, args.n_traj, args.phi0)
    return fan, build_grid(fan, gs, model), gs


def _cloud(model, args, att):
    """Triangulated fan samples for phi and chi at boundary points."""
    gs = args.grid
    x0, x1, y0, y1 = model.domain_box
    h = max(x1 - x0, y1 - y0) / 60.0 if gs is None else max(gs.hx, gs.hy)
    fan = ch.upward_fan(model, att, args.n_traj, args.phi0)
    return SampleCloud.from_trajectories(model, fan, 4.0 * h)


# -- subcommands ------------------------------------------------------------------------------

def run_analyze(args, model, out: Path) -> tuple[dict, list]:
    eqs, _ = _equilibria(model, args.chi_if_undetermined, strict=True)
    recs = [{"id": k, **a.as_record()} for k, a in enumerate(eqs)]
    write_jsonl(out / "equilibria.jsonl", recs)
    for r in recs:
        print(dumps(r, indent=None))
    return {"n_equilibria": len(recs)}, ["equilibria.jsonl"]


def run_quasipotential(args, model, out: Path):
    eqs, _ = _equilibria(model, args.chi_if_undetermined, strict=False)
    att = _pick(eqs, args.attractor, ATTRACTOR)
    fan, grid, gs = _fan_grid(model, args, att)
    with np.errstate(divide="ignore"):
        chi = 1.0 / grid.chi if grid.mode == "psi" else grid.chi
    X, Y = np.meshgrid(grid.x_axis, grid.y_axis)
    write_csv(out / "grid.csv", ("x", "y", "phi", "chi", "reached"),
              zip(X.ravel(), Y.ravel(), grid.phi.ravel(), chi.ravel(), grid.reached.ravel()))
    rows = []
    for k, tr in enumerate(fan):
        rows.extend(zip(tr.t, tr.x, tr.y, tr.chi, tr.phi, [k] * len(tr)))
    write_csv(out / "trajectories.csv", ("t", "x", "y", "chi", "phi", "trajectory_id"), rows)
    terms = {}
    for tr in fan:
        terms[tr.termination] = terms.get(tr.termination, 0) + 1
    summary = {"attractor": att.location.tolist(), "coverage": grid.coverage, "mode": grid.mode,
               "n_trajectories": len(fan), "terminations": dict(sorted(terms.items())),
               "grid": [gs.x_min, gs.x_max, gs.nx, gs.y_min, gs.y_max, gs.ny]}
    write_json(out / "quasipotential.json", summary)
    print(dumps(summary))
    return summary, ["grid.csv", "trajectories.csv", "quasipotential.json"]


def _density_out(out, rep, name="exit_density.csv"):
    write_csv(out / name, ("s", "s_scaled", "weight", "weight_normalized"),
              zip(rep.s, rep.s_scaled, rep.weight, rep.weight_normalized))


def _read_polyline(path: Path) -> np.ndarray:
    try:
        cols = read_csv_columns(path)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read boundary {path}: {exc}") from None
    if "x" not in cols or "y" not in cols:
        raise ValidationError("boundary CSV needs columns x and y")
    return np.column_stack([cols["x"], cols["y"]])


def run_exit(args, model, out: Path):
    eps = args.epsilon
    if not eps > 0.0:
        raise ValidationError("--epsilon must be positive")
    eqs, _ = _equilibria(model, args.chi_if_undetermined, strict=False)
    att = _pick(eqs, args.attractor, ATTRACTOR)
    if model.singular:
        rep, extra = _exit_singular(args, model, eqs, att, eps)
    elif args.separatrix_from_saddle is not None:
        sad = _pick(eqs, args.separatrix_from_saddle, SADDLE)
        bar = ch.upward_barrier(model, att, sad)
        w0 = w0_prefactor(att.S, bar.delta_phi, eps)
        rep = saddle_exit_analysis(model, sad, eps, w0)
        extra = {"saddle": sad.location.tolist(), "phi_saddle": bar.delta_phi}
    else:
        poly = _read_polyline(args.boundary)
        cloud = _cloud(model, args, att)
        ref = args.reference if args.reference is not None else poly[0]
        form = boundary_normal_form(model, poly, cloud, ref, inside=args.inside)
        rep = boundary_exit(model, form, cloud.phi_lookup, att.S, eps)
        extra = {"orientation": form.orientation}
    record = {**rep.as_record(), "attractor": att.location.tolist(), **extra}
    write_json(out / "exit.json", record)
    _density_out(out, rep)
    print(dumps(record))
    return record, ["exit.json", "exit_density.csv"]


def _exit_singular(args, model, eqs, att, eps):
    exact = ch.detect_exact_solution(model)
    if args.separatrix_from_saddle is not None:
        sad = _pick(eqs, args.separatrix_from_saddle, SADDLE)
        pot = kr.kramers_potential(model)
        if np.hypot(*sad.location) > 1e-9:
            raise ValidationError("the Kramers separatrix starts at the saddle at the origin")
        sep = kr.compute_separatrix(model)
        lo = max(sep.x1, -12.0 * math.sqrt(2.0 * eps) / sep.omega)
        x = np.unique(np.concatenate([np.linspace(sep.x1, 0.0, 2001), np.linspace(lo, 0.0, 2001)]))
        x = x[x > sep.x1]      # the separatrix slope is infinite at x_1
        graph = np.column_stack([x, sep.v_s(x)])
        psi = exact.value if exact.kind == "constant_psi" else _cloud(model, args, att)
        co = singular_boundary_coefficients(model, graph, psi, side=BELOW, slope=sep.dv_s,
                                            g=lambda s: kr.g_function(s, eps, sep.omega))
        phi = lambda P: pot.u(P[:, 0]) + 0.5 * P[:, 1] ** 2 - pot.U_A
        rep = singular_exit(co, phi, att.S, eps)
        return rep, {"saddle": sad.location.tolist(), "x1": sep.x1, "g": "erf"}
    graph = _read_polyline(args.boundary)
    cloud = _cloud(model, args, att)
    co = singular_boundary_coefficients(model, graph, cloud, side=args.side)
    return singular_exit(co, cloud.phi_lookup, att.S, eps), {"g": "one"}


def _kramers_setup(args, model):
    if model is not None:
        return kr.kramers_potential(model)
    # zero friction has no diffusion and hence no SDE model; build the potential directly
    if args.builtin not in ("kramers_cubic", "kramers"):
        raise ModelError("the kramers subcommand needs a Kramers model")
    pot = _potential(args)
    if pot is None:
        if args.builtin == "kramers":
            raise ModelError("built-in 'kramers' needs --potential terms")
        pot = cubic_potential(1.0 if args.omega is None else args.omega)
    x_search = args.box[0] if args.box is not None else -2.5
    return kr.make_potential(pot, float(args.gamma), x_search)


def run_kramers(args, model, out: Path):
    pot = _kramers_setup(args, model)
    sep = kr.compute_separatrix(pot)
    res = kr.exit_rate(sep, args.epsilon, args.density_points)
    record = res.as_record()
    write_json(out / "kramers.json", record)
    write_csv(out / "kramers_density.csv", ("x", "weight", "weight_normalized"),
              zip(res.density_x, res.density_weight, res.density_normalized))
    print(dumps(record))
    return record, ["kramers.json", "kramers_density.csv"]


def run_mc(args, model, out: Path):
    eqs, _ = _equilibria(model, args.chi_if_undetermined, strict=False)
    start = args.start
    if start is None:
        start = _pick(eqs, None, ATTRACTOR).location.tolist()
    predicted = args.predicted_time
    if model.singular and "potential" in model.params:
        sep = kr.compute_separatrix(model)
        boundary = AbsorbingBoundary.separatrix(sep)
        if predicted is None:
            predicted = 1.0 / kr.exit_rate(sep, args.epsilon).rate
        desc = "separatrix"
    else:
        if args.radius is None:
            raise ValidationError("--radius is required for models without a separatrix boundary")
        boundary = AbsorbingBoundary.circle(start, args.radius)
        desc = "circle"
    if predicted is None or not predicted > 0.0:
        raise ValidationError("--predicted-time is required to set the time cap")
    stats = mc_simulate(model, start, boundary, args.epsilon, args.dt, args.n, args.seed,
                        args.cap_multiplier * predicted, bins=args.bins)
    record = {**stats.as_record(), "start": list(start), "boundary": desc,
              "predicted_mean_exit_time": predicted,
              "ratio_to_prediction": stats.mean_exit_time / predicted,
              "mass_x_positive": stats.mass_where(lambda p: p > 0.0) if desc == "separatrix" else None}
    write_json(out / "mc.json", record)
    e = stats.hist_edges
    write_csv(out / "mc_histogram.csv", ("bin_lo", "bin_hi", "mass"), zip(e[:-1], e[1:], stats.hist_mass))
    print(dumps(record))
    return record, ["mc.json", "mc_histogram.csv"]


def run_validate(args, model, out: Path):
    eqs, skipped = _equilibria(model, args.chi_if_undetermined, strict=False)
    att = _pick(eqs, args.attractor, ATTRACTOR)
    checks = {}

    def check(name, value, tol, ok=None):
        checks[name] = {"value": value, "tolerance": tol, "passed": bool(value <= tol) if ok is None else ok}

    inv = []
    for a in eqs:
        Mt, M, S = a.M_assoc, a.M, a.S
        D = model.diffusion_matrix(*a.location)
        inv.append(max(abs(np.trace(Mt) - np.trace(M)), abs(np.linalg.det(Mt) - np.linalg.det(M))))
        check(f"S_symmetric@{a.location.tolist()}", float(abs(S[0, 1] - S[1, 0])), 1e-8)
        rho_s = D[0, 0] * S[0, 0] + 2 * D[0, 1] * S[0, 1] + D[1, 1] * S[1, 1]
        check(f"DS_trace_equals_rho@{a.location.tolist()}", float(abs(rho_s - a.rho)), 1e-8)
    check("trace_det_preserved", float(max(inv)), 1e-10)
    co = cross_oracle(model, att, n=args.n_traj)
    check("cross_oracle_rel_phi_gap", co.max_rel_phi_gap, 1e-4)
    check("cross_oracle_matched_points", float(co.n_matched), 100.0, ok=co.n_matched >= 100)
    check("hamiltonian_drift", co.max_H_drift, 1e-8)
    fan = ch.upward_fan(model, att, args.n_traj)
    pts = np.concatenate([np.column_stack([t.x, t.y, t.c]) for t in fan])
    if not model.singular:
        check("projection_gap", projection_gap(model, pts[:, 0], pts[:, 1], pts[:, 2]), 1e-8)
    sel = pts[np.linspace(0, len(pts) - 1, min(1000, len(pts))).astype(int)]
    px, py = ch._grad_phi(model, sel[:, 0], sel[:, 1], sel[:, 2])
    a, b = model.drift(sel[:, 0], sel[:, 1])
    A, B, C = model.diffusion(sel[:, 0], sel[:, 1])
    # a.grad(phi) = -grad(phi).D grad(phi) <= 0 and the associated drift has the same projection
    adot = a * px + b * py
    at = -(a + 2 * (A * px + B * py)), -(b + 2 * (B * px + C * py))
    scale = np.maximum(1.0, np.abs(adot))
    check("drift_descends_phi", float(max(np.max(adot), 0.0)), 1e-8)
    check("assoc_projection_gap", float(np.max(np.abs(at[0] * px + at[1] * py - adot) / scale)), 1e-8)
    gs = args.grid or _around(att.location, model.domain_box)
    grid = build_grid(ch.upward_fan(model, att, 512), gs, model)
    res = eikonal_residual(model, grid)
    check("eikonal_residual1", res.max_residual1, 1e-5)
    report = {"attractor": att.location.tolist(), "epsilon": args.epsilon,
              "cross_oracle": co.as_record(), "eikonal_residual1_max": res.max_residual1,
              "eikonal_residual2_max": res.max_residual2, "grid_coverage": grid.coverage,
              "skipped_equilibria": skipped, "checks": checks,
              "passed": all(c["passed"] for c in checks.values())}
    write_json(out / "validate.json", report)
    print(dumps(report))
    return report, ["validate.json"]


def _around(p, box, half=0.5, n=51):
    """Square grid of half-width ``half`` around ``p``, clipped to the box."""
    x0, x1, y0, y1 = box
    return GridSpec(max(p[0] - half, x0), min(p[0] + half, x1), n,
                    max(p[1] - half, y0), min(p[1] + half, y1), n)


RUNNERS = {"analyze": run_analyze, "quasipotential": run_quasipotential, "exit": run_exit,
           "kramers": run_kramers, "mc": run_mc, "validate": run_validate}


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = None
        if not (args.subcommand == "kramers" and args.model is None and args.gamma == 0.0):
            model = load_from_args(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        result, files = RUNNERS[args.subcommand](args, model, out)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("subcommand", "out", "model", "builtin") and not isinstance(v, GridSpec)}
    grid = getattr(args, "grid", None)
    if grid is not None:
        params["grid"] = [grid.x_min, grid.x_max, grid.nx, grid.y_min, grid.y_max, grid.ny]
    desc = _description(args, model)
    manifest = {
        "subcommand": args.subcommand,
        "model": desc.get("name", desc.get("builtin")),
        "model_hash": _hash(desc),
        "parameters": params,
        "tool_version": __version__,
        "rng_seed": getattr(args, "seed", None),
        "outputs": files + ["manifest.json"],
    }
    write_json(out / "manifest.json", manifest)
    if args.subcommand == "validate" and not result["passed"]:
        print("error: validation checks failed", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
