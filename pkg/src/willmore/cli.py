"""Run configuration and the command-line pipeline.

A run is described by one JSON document: exactly one builder section (which
potential or closed form to construct, with expression-valued parameters as
verbatim strings), a grid section, the Laurent truncation degree, a
projection choice, output paths and tolerance overrides.  The `run`
function executes build -> integrate -> factor -> extract -> verify ->
export and hands back the surface field, the residual report and the mesh.

Command verbs: generate (full pipeline with exports), verify (residual
table only), classify (minimality trichotomy of the builder data), oracle
(closed forms only) and export (mesh only).  Flags mirror config keys and
override them.  The exit status is nonzero exactly when no valid vertex
survived.
"""

import argparse
import json
import sys
import numpy as np
from dataclasses import dataclass, field, fields

from .dpw import DomainGrid, extract_frames, extract_surfaces, integrate_frame
from .expressions import evaluate, parse
from .geometry import (
    circle_frame,
    closed_form,
    equivariant_so4_frame,
    find_constant_combination,
    residual_report,
    umbilic_density,
)
from .meshout import export_mesh, mesh_from_field, report
from .potentials import (
    BjorlingData,
    HoloPotential,
    build_boundary_potential,
    build_circle_family,
    build_equivariant_so4,
    build_so13_family,
    classify_minimality,
    expr_matrix,
    potential_from_b1,
)

BUILDERS = ("boundary", "circle-family", "equivariant-so4", "so13",
            "raw-potential", "closed-form")
_SECTIONS = ("grid", "truncation", "projection", "output", "tolerances")
_MODELS = ("s3", "h3", "poincare")


class ConfigError(ValueError):
    """A config document that cannot be turned into a RunConfig."""


@dataclass
class RunConfig:
    builder: str
    params: dict
    u_range: tuple = (-0.5, 0.5)
    v_range: tuple = (-0.5, 0.5)
    shape: tuple = (33, 33)
    base_point: object = None  # None = rectangle centre
    truncation: int = 12
    model: str = "s3"
    which: str = "Y"
    pole: tuple = (0.0, 0.0, 0.0, 1.0)
    slot: int = 4
    channels: tuple = ()
    mesh_path: object = None
    mesh_format: object = None
    report_path: object = None
    residual_tol: float = 1e-6
    nsub: int = 4

    def __post_init__(self):
        if self.builder not in BUILDERS:
            raise ConfigError(f"unknown builder {self.builder!r}")
        nu, nv = self.shape
        if not (isinstance(nu, int) and isinstance(nv, int)
                and nu >= 2 and nv >= 2):
            raise ConfigError("grid resolutions must be integers >= 2")
        if not 4 <= int(self.truncation) <= 64:
            raise ConfigError("truncation degree must lie in [4, 64]")
        if self.model not in _MODELS:
            raise ConfigError(f"unknown projection model {self.model!r}")
        if self.which not in ("Y", "Yhat"):
            raise ConfigError("projection surface must be 'Y' or 'Yhat'")


def _pair(obj, what):
    if (not isinstance(obj, (list, tuple)) or len(obj) != 2
            or not all(isinstance(x, (int, float)) for x in obj)):
        raise ConfigError(f"{what} must be a pair of numbers")
    return tuple(obj)


def parse_config(text, source="<config>"):
    """JSON text -> RunConfig, with every complaint naming its source."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: {e}")
    if not isinstance(obj, dict):
        raise ConfigError(f"{source}: top level must be an object")
    chosen = [b for b in BUILDERS if b in obj]
    if len(chosen) != 1:
        raise ConfigError(f"{source}: exactly one builder section required, "
                          f"found {chosen if chosen else 'none'}")
    unknown = sorted(set(obj) - set(BUILDERS) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    params = obj[chosen[0]]
    if not isinstance(params, dict):
        raise ConfigError(f"{source}: builder section must be an object")

    kw = {"builder": chosen[0], "params": params}
    grid = obj.get("grid", {})
    if "u_range" in grid:
        kw["u_range"] = _pair(grid["u_range"], "grid.u_range")
    if "v_range" in grid:
        kw["v_range"] = _pair(grid["v_range"], "grid.v_range")
    if "shape" in grid:
        kw["shape"] = tuple(grid["shape"]) if isinstance(
            grid["shape"], (list, tuple)) and len(grid["shape"]) == 2 else \
            grid["shape"]
    if grid.get("base_point") is not None:
        kw["base_point"] = _pair(grid["base_point"], "grid.base_point")
    if "truncation" in obj:
        kw["truncation"] = obj["truncation"]
    proj = obj.get("projection", {})
    for src, dst in (("model", "model"), ("which", "which"), ("slot", "slot")):
        if src in proj:
            kw[dst] = proj[src]
    if "pole" in proj:
        kw["pole"] = tuple(float(x) for x in proj["pole"])
    out = obj.get("output", {})
    kw["mesh_path"] = out.get("mesh")
    kw["mesh_format"] = out.get("format")
    kw["report_path"] = out.get("report")
    kw["channels"] = tuple(out.get("channels", ()))
    tol = obj.get("tolerances", {})
    if "residual_tol" in tol:
        kw["residual_tol"] = float(tol["residual_tol"])
    if "nsub" in tol:
        kw["nsub"] = int(tol["nsub"])
    try:
        return RunConfig(**kw)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}")


def serialize_config(cfg):
    """RunConfig -> canonical JSON text (parse of which equals cfg)."""
    base = None if cfg.base_point is None else list(cfg.base_point)
    doc = {
        cfg.builder: cfg.params,
        "grid": {"u_range": list(cfg.u_range), "v_range": list(cfg.v_range),
                 "shape": list(cfg.shape), "base_point": base},
        "truncation": cfg.truncation,
        "projection": {"model": cfg.model, "which": cfg.which,
                       "pole": list(cfg.pole), "slot": cfg.slot},
        "output": {"mesh": cfg.mesh_path, "format": cfg.mesh_format,
                   "report": cfg.report_path, "channels": list(cfg.channels)},
        "tolerances": {"residual_tol": cfg.residual_tol, "nsub": cfg.nsub},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"{path}: {e}")
    return parse_config(text, source=str(path))


# ---------------------------------------------------------------------------
# builder plumbing

def _real_at_zero(v, what):
    if isinstance(v, str):
        x = complex(evaluate(parse(v), np.array(0.0 + 0.0j)))
    else:
        x = complex(v)
    if abs(x.imag) > 1e-12:
        raise ConfigError(f"{what} must be real at u = 0, got {x}")
    return x.real


def _require(params, keys, builder):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigError(f"builder {builder!r} needs parameters {missing}")


def builder_data(cfg):
    """The boundary data a builder section describes (families only)."""
    p = dict(cfg.params)
    p.pop("frame", None)
    b = cfg.builder
    if b == "boundary":
        _require(p, ("mu", "k", "rho"), b)
        return BjorlingData(p["mu"], p["k"], p["rho"],
                            gamma=list(p.get("gamma", [])),
                            n=int(p.get("n", 1)))
    if b == "circle-family":
        _require(p, ("m", "beta"), b)
        return build_circle_family(p["m"], p["beta"])
    if b == "equivariant-so4":
        _require(p, ("r", "ell", "h"), b)
        return build_equivariant_so4(float(p["r"]),
                                     float(p.get("theta", np.pi / 4.0)),
                                     float(p.get("phi", 0.0)),
                                     float(p["ell"]), float(p["h"]))
    if b == "so13":
        _require(p, ("variant",), b)
        variant = p.pop("variant")
        return build_so13_family(variant, **{k: float(v)
                                             for k, v in p.items()})
    raise ConfigError(f"builder {cfg.builder!r} has no boundary data")


def _frame_from_spec(spec):
    if spec is None or spec == "identity":
        return None
    if isinstance(spec, dict) and "circle" in spec:
        s = spec["circle"]
        return circle_frame(float(s.get("m", 0.0)), float(s.get("beta", 0.0)))
    if isinstance(spec, dict) and "equivariant-so4" in spec:
        s = spec["equivariant-so4"]
        return equivariant_so4_frame(float(s["r"]),
                                     float(s.get("theta", np.pi / 4.0)),
                                     float(s.get("phi", 0.0)),
                                     float(s["ell"]), float(s["h"]))
    if isinstance(spec, dict) and "matrix" in spec:
        return np.asarray(spec["matrix"], dtype=float)
    raise ConfigError(f"unrecognized initial frame {spec!r}")


def initial_frame(cfg):
    """Initial loop for the frame integration (None = identity).

    The family builders default to the family's own section frame so the
    generated surface actually contains the designed boundary curve;
    everything else starts at the identity.
    """
    spec = cfg.params.get("frame")
    if spec is not None:
        return _frame_from_spec(spec)
    if cfg.builder == "circle-family":
        m0 = _real_at_zero(cfg.params["m"], "circle-family m")
        return circle_frame(m0, float(cfg.params["beta"]))
    if cfg.builder == "equivariant-so4":
        p = cfg.params
        return equivariant_so4_frame(float(p["r"]),
                                     float(p.get("theta", np.pi / 4.0)),
                                     float(p.get("phi", 0.0)),
                                     float(p["ell"]), float(p["h"]))
    return None


def base_point(cfg):
    if cfg.base_point is None:
        return complex((cfg.u_range[0] + cfg.u_range[1]) / 2.0,
                       (cfg.v_range[0] + cfg.v_range[1]) / 2.0)
    return complex(*cfg.base_point)


def build_potential(cfg):
    if cfg.builder == "raw-potential":
        p = cfg.params
        z0 = base_point(cfg)
        if "b1" in p:
            return potential_from_b1(p["b1"], base_point=z0)
        if "terms" in p:
            terms = {int(d): expr_matrix(M) for d, M in p["terms"].items()}
            return HoloPotential(terms, base_point=z0, n=int(p.get("n", 1)))
        raise ConfigError("raw-potential needs a 'b1' block or a "
                          "'terms' table")
    return build_boundary_potential(builder_data(cfg))


@dataclass
class RunResult:
    surface: object
    report: object
    mesh: object


def run(cfg):
    """Execute the configured pipeline and return all three products."""
    grid = DomainGrid(cfg.u_range, cfg.v_range, cfg.shape, base_point(cfg))
    if cfg.builder == "closed-form":
        p = dict(cfg.params)
        family = p.pop("family", None)
        if family is None:
            raise ConfigError("closed-form needs a 'family' name")
        r = p.pop("r", None)
        if p:
            raise ConfigError(f"unexpected closed-form keys {sorted(p)}")
        sf = closed_form(family, grid, r=None if r is None else float(r))
    else:
        pot = build_potential(cfg)
        cfield = integrate_frame(pot, grid, F0=initial_frame(cfg),
                                 truncation=cfg.truncation, nsub=cfg.nsub)
        ff = extract_frames(cfield, residual_tol=cfg.residual_tol)
        sf = extract_surfaces(ff)

    rr = residual_report(sf)
    channels = {}
    for name in cfg.channels:
        if name == "umbilic_density":
            channels[name] = umbilic_density(sf)
        elif name in rr.columns:
            channels[name] = rr.columns[name]
        else:
            raise ConfigError(f"unknown channel {name!r}")
    mesh = mesh_from_field(sf, model=cfg.model, which=cfg.which,
                           pole=cfg.pole, slot=cfg.slot, channels=channels)
    return RunResult(sf, rr, mesh)


# ---------------------------------------------------------------------------
# command line

def _write_outputs(cfg, result, mesh=True, table=True):
    if mesh and cfg.mesh_path:
        export_mesh(result.mesh, cfg.mesh_path, cfg.mesh_format)
        print(f"mesh: {cfg.mesh_path}")
    if table and cfg.report_path:
        report(result.report, cfg.report_path)
        print(f"report: {cfg.report_path}")


def _summary(result):
    valid = int(result.mesh.valid.sum())
    total = result.mesh.valid.size
    print(f"valid vertices: {valid}/{total}  faces: {len(result.mesh.faces)}")
    for name, agg in result.report.aggregates.items():
        print(f"  {name:16s} max {agg['max']:.3e}  rms {agg['rms']:.3e}")
    return 0 if valid else 1


def _apply_overrides(cfg, args):
    kw = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    if args.truncation is not None:
        kw["truncation"] = args.truncation
    if args.model is not None:
        kw["model"] = args.model
    if args.which is not None:
        kw["which"] = args.which
    if args.shape is not None:
        kw["shape"] = tuple(args.shape)
    if args.u_range is not None:
        kw["u_range"] = tuple(args.u_range)
    if args.v_range is not None:
        kw["v_range"] = tuple(args.v_range)
    if args.mesh is not None:
        kw["mesh_path"] = args.mesh
    if args.format is not None:
        kw["mesh_format"] = args.format
    if args.report is not None:
        kw["report_path"] = args.report
    if args.channel:
        kw["channels"] = tuple(args.channel)
    return RunConfig(**kw)


def _add_common(sub):
    sub.add_argument("--config", required=True, help="JSON run description")
    sub.add_argument("--truncation", type=int)
    sub.add_argument("--model", choices=_MODELS)
    sub.add_argument("--which", choices=("Y", "Yhat"))
    sub.add_argument("--shape", type=int, nargs=2, metavar=("NU", "NV"))
    sub.add_argument("--u-range", type=float, nargs=2, metavar=("U0", "U1"))
    sub.add_argument("--v-range", type=float, nargs=2, metavar=("V0", "V1"))
    sub.add_argument("--mesh", help="mesh output path")
    sub.add_argument("--format", choices=("obj", "ply"))
    sub.add_argument("--report", help="residual CSV output path")
    sub.add_argument("--channel", action="append",
                     help="per-vertex scalar to embed (repeatable)")


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="willmore",
        description="Willmore surfaces from Bjorling data by loop-group "
                    "factorization")
    subs = ap.add_subparsers(dest="verb", required=True)
    for verb in ("generate", "verify", "oracle", "export"):
        _add_common(subs.add_parser(verb))
    cl = subs.add_parser("classify")
    cl.add_argument("--config", required=True)
    cl.add_argument("--fit", action="store_true",
                    help="also fit a constant combination on the surface")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.verb != "classify":
            cfg = _apply_overrides(cfg, args)

        if args.verb == "classify":
            label = classify_minimality(builder_data(cfg))
            print(f"minimality: {label}")
            if args.fit:
                res = find_constant_combination(run(cfg).surface)
                print(f"fit: {res['character']}  "
                      f"residual {res['residual']:.3e}")
            return 0
        if args.verb == "oracle" and cfg.builder != "closed-form":
            raise ConfigError("oracle runs closed-form configs; "
                              f"got builder {cfg.builder!r}")

        result = run(cfg)
        if args.verb == "export":
            if not cfg.mesh_path:
                raise ConfigError("export needs an output mesh path")
            _write_outputs(cfg, result, table=False)
            return 0 if result.mesh.valid.any() else 1
        _write_outputs(cfg, result, mesh=args.verb != "verify")
        return _summary(result)
    except (ConfigError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
