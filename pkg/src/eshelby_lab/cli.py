"""Config-driven batch runner.

Usage::

    eshelby-lab --config run.ini --out results/ [--seed N] [--threads N]
                [--sweep section.key=v1,v2,...]

The config is an INI document.  ``[run] command`` selects the experiment; the
other sections describe the shape, material(s), eigenstress, grid, quadrature
and outputs.  Parsing is strict: an unknown section or key is an error.

Exit status: 0 success, 2 configuration error (the message names the key),
3 numerical rejection raised by the library (the message carries its reason).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy import optimize
from scipy.spatial.transform import Rotation

from . import __version__
from .errors import Rejection
from .fields import (
    FieldMethod,
    FieldSample,
    compare_paths,
    solve_spectral,
    spectral_uniformity,
    write_field_csv,
    write_field_dump,
)
from .geometry import (
    Box,
    Difference,
    Ellipsoid,
    GridSpec,
    Superellipsoid,
    ball,
    load_voxel_mask,
    voxelize,
)
from .io import flatten_record, format_report, write_csv
from .lab import (
    appendix_checks,
    axis_ratios,
    check_theorem1,
    check_theorem2,
    flux_test,
    interior_fit,
)
from .materials import (
    LameMaterial,
    SpectralClass,
    classify_eigenstress,
    material_constants,
    special_material_eta2,
    special_material_gamma0,
    special_material_joint,
)
from .potentials import PotentialKind, QuadSpec, build_quadrature, evaluate, write_samples_csv
from .rng import make_rng

TOOL = "eshelby-lab"
EXIT_OK, EXIT_CONFIG, EXIT_REJECTED = 0, 2, 3
COMMANDS = ("field", "potential", "uniformity", "shape-test", "theorem1", "theorem2",
            "flux", "special-material", "appendix")
MIN_PADDING = 3.0


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is ``section.key`` (or a section name)."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --- value parsers -------------------------------------------------------------

def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> list[float]:
    return [_float(t) for t in s.replace(",", " ").split()]


def _vec3(s: str) -> list[float]:
    v = _floats(s)
    if len(v) != 3:
        raise ValueError(f"expected 3 numbers, got {len(v)}")
    return v


def _tensor(s: str) -> list[float]:
    v = _floats(s)
    if len(v) != 9:
        raise ValueError(f"expected 9 numbers, got {len(v)}")
    return v


def _points(s: str) -> list[list[float]]:
    pts = [_vec3(chunk) for chunk in s.split(";") if chunk.strip()]
    if not pts:
        raise ValueError("no points given")
    return pts


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        t = s.strip()
        if t not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return t
    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None  # None: required when the section is used
    scalar: bool = True


_SHAPE_KEYS = {
    "type": Key(_choice("ellipsoid", "ball", "box", "superellipsoid", "voxel", "difference")),
    "center": Key(_vec3, [0.0, 0.0, 0.0], False),
    "semi_axes": Key(_vec3, "", False),
    "radius": Key(_float, 1.0),
    "rotation_euler_deg": Key(_vec3, [0.0, 0.0, 0.0], False),
    "half_extents": Key(_vec3, "", False),
    "exponent": Key(_float, 4.0),
    "convex": Key(_bool, ""),
    "path": Key(str, ""),
}

SCHEMA: dict[str, dict[str, Key]] = {
    "run": {"command": Key(_choice(*COMMANDS)), "seed": Key(_int, 0)},
    "shape": _SHAPE_KEYS,
    "outer": _SHAPE_KEYS,
    "inner": _SHAPE_KEYS,
    "material": {"lambda": Key(_float), "mu": Key(_float)},
    "material2": {"lambda": Key(_float), "mu": Key(_float)},
    "eigenstress": {
        "k1": Key(_float, ""),
        "k2": Key(_float, ""),
        "k3": Key(_float, ""),
        "tensor": Key(_tensor, "", False),
        "rotation_euler_deg": Key(_vec3, [0.0, 0.0, 0.0], False),
    },
    "grid": {
        "resolution": Key(_int, 64),
        "padding": Key(_float, 3.0),
        "subsamples": Key(_int, 8),
        "zero_mode": Key(_choice("sphere_average", "zero"), "sphere_average"),
        "smoothing": Key(_choice("lanczos", "none"), "lanczos"),
    },
    "quadrature": {"n": Key(_int, 64), "subsamples": Key(_int, 6), "near": Key(_int, 2)},
    "probes": {"count": Key(_int, 30), "margin_frac": Key(_float, 0.1)},
    "potential": {
        "kind": Key(_choice(*(k.value for k in PotentialKind)), "N"),
        "axis": Key(_int, 3),
        "points": Key(_points, None, False),
    },
    "ellipsoid": {
        "semi_axes": Key(_vec3, None, False),
        "rotation_euler_deg": Key(_vec3, [0.0, 0.0, 0.0], False),
    },
    "flux": {
        "samples": Key(_int, 20000),
        "n": Key(_int, 64),
        "subsamples": Key(_int, 4),
        "cone_directions": Key(_int, 0),
        "cone_angle_deg": Key(_float, 10.0),
    },
    "thresholds": {
        "uniformity": Key(_float, 2e-2),
        "dual_path": Key(_float, 2e-2),
        "shape_test": Key(_float, 1e-3),
        "theorem1": Key(_float, 1e-2),
        "theorem2": Key(_float, 1e-3),
        "appendix": Key(_float, 1e-2),
        "trace_tol": Key(_float, 2e-2),
    },
    "output": {"prefix": Key(str, ""), "dump": Key(_bool, False), "csv": Key(_bool, True)},
}

_NO_DEFAULT = ("material", "material2", "eigenstress")

# sections each command reads (besides run/output); optional ones may be absent
USES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "field": (("shape", "material", "eigenstress"), ("grid", "quadrature", "probes", "thresholds")),
    "uniformity": (("shape", "material", "eigenstress"), ("grid", "thresholds")),
    "potential": (("shape", "potential"), ("quadrature",)),
    "shape-test": (("shape",), ("quadrature", "probes", "thresholds")),
    "theorem1": (("shape", "material", "eigenstress"), ("quadrature", "thresholds")),
    "theorem2": (("shape", "material", "material2", "eigenstress"),
                 ("quadrature", "probes", "thresholds")),
    "flux": (("shape", "ellipsoid"), ("material", "eigenstress", "flux")),
    "special-material": (("eigenstress",), ("material",)),
    "appendix": (("shape",), ("material", "eigenstress", "grid", "quadrature", "probes",
                              "thresholds")),
}


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    sections: dict[str, dict[str, Any]]
    output: dict[str, Any]

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def has(self, section: str) -> bool:
        return section in self.sections

    def canonical(self) -> dict[str, Any]:
        return {"command": self.command, "seed": self.seed, "sections": self.sections}

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _parse_section(name: str, raw: dict[str, str]) -> dict[str, Any]:
    schema = SCHEMA[name]
    out = {}
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"{name}.{key}", "unknown key")
        try:
            out[key] = schema[key].parse(text)
        except ValueError as exc:
            raise ConfigError(f"{name}.{key}", f"invalid value {text!r} ({exc})") from None
    for key, spec in schema.items():
        if key not in out:
            if spec.default is None:
                raise ConfigError(f"{name}.{key}", "required key missing")
            out[key] = spec.default
    return out


def _shape_sections(cmd_sections: tuple[str, ...], raw: dict[str, dict[str, str]]) -> tuple[str, ...]:
    if "shape" in cmd_sections and raw.get("shape", {}).get("type", "").strip() == "difference":
        return cmd_sections + ("outer", "inner")
    return cmd_sections


def load_config(text: str, overrides: Optional[dict[str, str]] = None,
                seed: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate an INI config.

    ``overrides`` maps ``section.key`` to raw text and takes precedence over
    the document; ``seed`` overrides ``[run] seed``.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed document ({exc.message.splitlines()[0]})") from None
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        raw.setdefault(section, {})[key] = value
    for s in raw:
        if s not in SCHEMA:
            raise ConfigError(s, "unknown section")
    if "run" not in raw:
        raise ConfigError("run", "required section missing")
    run = _parse_section("run", raw["run"])
    if seed is not None:
        if seed < 0:
            raise ConfigError("run.seed", "seed must be non-negative")
        run["seed"] = seed
    command = run["command"]
    required, optional = USES[command]
    required = _shape_sections(required, raw)
    sections = {}
    for s in required:
        if s not in raw:
            raise ConfigError(s, f"required section missing for command {command}")
        sections[s] = _parse_section(s, raw[s])
    for s in optional:
        if s in raw:
            sections[s] = _parse_section(s, raw[s])
        else:
            # absent optional blocks: defaults where every key has one, else empty
            sections[s] = {} if s in _NO_DEFAULT else _parse_section(s, {})
    # sections not used by the command are still checked for typos
    for s in raw:
        if s not in sections and s not in ("run", "output"):
            _parse_section_lenient(s, raw[s])
    output = _parse_section("output", raw.get("output", {}))
    cfg = ExperimentConfig(command, run["seed"], sections, output)
    _validate(cfg)
    return cfg


def _parse_section_lenient(name: str, raw: dict[str, str]) -> None:
    schema = SCHEMA[name]
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"{name}.{key}", "unknown key")
        try:
            schema[key].parse(text)
        except ValueError as exc:
            raise ConfigError(f"{name}.{key}", f"invalid value {text!r} ({exc})") from None


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.has("grid"):
        g = cfg["grid"]
        if cfg.command in ("field", "uniformity", "appendix") and g["padding"] < MIN_PADDING:
            raise ConfigError("grid.padding", f"padding must be >= {MIN_PADDING:g} (periodic-image "
                              f"precondition of the spectral solver), got {g['padding']:g}")
        if g["resolution"] < 8:
            raise ConfigError("grid.resolution", "resolution must be >= 8")
        if g["subsamples"] < 1:
            raise ConfigError("grid.subsamples", "subsamples must be >= 1")
    if cfg.has("quadrature"):
        q = cfg["quadrature"]
        for key in ("n", "subsamples"):
            if q[key] < 2:
                raise ConfigError(f"quadrature.{key}", "must be >= 2")
        if q["near"] < 0:
            raise ConfigError("quadrature.near", "must be >= 0")
    if cfg.has("probes"):
        if cfg["probes"]["count"] < 1:
            raise ConfigError("probes.count", "must be >= 1")
        if not 0 <= cfg["probes"]["margin_frac"] < 1:
            raise ConfigError("probes.margin_frac", "must lie in [0, 1)")
    if cfg.has("potential") and cfg["potential"]["axis"] not in (1, 2, 3):
        raise ConfigError("potential.axis", "axis must be 1, 2 or 3")
    for s in ("shape", "outer", "inner"):
        if cfg.has(s):
            _validate_shape(s, cfg[s])
    if cfg.has("eigenstress") and cfg["eigenstress"]:
        e = cfg["eigenstress"]
        has_k = [e[k] != "" for k in ("k1", "k2", "k3")]
        if e["tensor"] != "" and any(has_k):
            raise ConfigError("eigenstress.tensor", "give either tensor or k1/k2/k3, not both")
        if e["tensor"] == "":
            if not has_k[0]:
                raise ConfigError("eigenstress.k1", "required key missing")
            if not has_k[2]:
                raise ConfigError("eigenstress.k3", "required key missing")


def _validate_shape(section: str, s: dict[str, Any]) -> None:
    needs = {"ellipsoid": "semi_axes", "box": "half_extents", "superellipsoid": "semi_axes",
             "voxel": "path"}
    key = needs.get(s["type"])
    if key and s[key] == "":
        raise ConfigError(f"{section}.{key}", f"required for type {s['type']}")
    if section != "shape" and s["type"] == "difference":
        raise ConfigError(f"{section}.type", "nested differences are not supported")


# --- builders --------------------------------------------------------------------

def euler_matrix(angles_deg) -> np.ndarray:
    """Intrinsic z-y'-z'' rotation, angles in degrees."""
    return Rotation.from_euler("ZYZ", angles_deg, degrees=True).as_matrix()


def build_shape(cfg: ExperimentConfig, section: str = "shape"):
    s = cfg[section]
    kind = s["type"]
    convex = None if s["convex"] == "" else s["convex"]
    if kind == "difference":
        if section != "shape":
            raise ConfigError(f"{section}.type", "nested differences are not supported")
        return Difference(build_shape(cfg, "outer"), build_shape(cfg, "inner"))
    if kind == "ball":
        shape = ball(s["radius"], s["center"])
    elif kind == "ellipsoid":
        shape = Ellipsoid(np.array(s["semi_axes"]), np.array(s["center"]),
                          euler_matrix(s["rotation_euler_deg"]))
    elif kind == "box":
        shape = Box(np.array(s["half_extents"]), np.array(s["center"]))
    elif kind == "superellipsoid":
        shape = Superellipsoid(np.array(s["semi_axes"]), s["exponent"], np.array(s["center"]))
    else:
        shape = load_voxel_mask(s["path"])
    if convex is not None and convex != shape.convex:
        object.__setattr__(shape, "convex", convex)
    return shape


def build_material(cfg: ExperimentConfig, section: str = "material") -> LameMaterial:
    m = cfg[section]
    return LameMaterial(m["lambda"], m["mu"])


def build_sigma(cfg: ExperimentConfig) -> np.ndarray:
    e = cfg["eigenstress"]
    if e["tensor"] != "":
        s = np.array(e["tensor"]).reshape(3, 3)
        if not np.allclose(s, s.T, rtol=0, atol=1e-12 * max(1.0, np.abs(s).max())):
            raise ConfigError("eigenstress.tensor", "tensor must be symmetric")
    else:
        k2 = e["k1"] if e["k2"] == "" else e["k2"]
        s = np.diag([e["k1"], k2, e["k3"]])
    R = euler_matrix(e["rotation_euler_deg"])
    return R @ s @ R.T


def two_equal(cfg: ExperimentConfig) -> tuple[float, float]:
    """(k1, k3) of a two-equal eigenstress; rejects other spectral classes."""
    es = classify_eigenstress(build_sigma(cfg))
    if es.spectral_class is not SpectralClass.TWO_EQUAL:
        raise Rejection(f"command needs an eigenstress with exactly two equal eigenvalues, "
                        f"got class {es.spectral_class.value}")
    return es.k1, es.k3


def build_quad(cfg: ExperimentConfig) -> QuadSpec:
    q = cfg["quadrature"]
    return QuadSpec(q["n"], q["subsamples"], q["near"])


# --- commands ------------------------------------------------------------------------

@dataclass
class Outcome:
    record: dict[str, Any]
    writers: list  # callables (out_dir, prefix, preamble) -> None


def _mask(cfg: ExperimentConfig, shape):
    g = cfg["grid"]
    grid = GridSpec.for_shape(shape, g["resolution"], g["padding"])
    return voxelize(shape, grid, g["subsamples"], check_connected=False)


def _spectral(cfg: ExperimentConfig, shape, sigma):
    g = cfg["grid"]
    return solve_spectral(_mask(cfg, shape), build_material(cfg), sigma, g["zero_mode"], g["smoothing"])


def cmd_uniformity(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    fld = _spectral(cfg, shape, build_sigma(cfg))
    rep = spectral_uniformity(fld, shape)
    rec = flatten_record(rep)
    rec["threshold"] = cfg["thresholds"]["uniformity"]
    rec["uniform"] = rep.rms_dev < rec["threshold"]
    return Outcome(rec, [])


def cmd_field(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    sigma = build_sigma(cfg)
    material = build_material(cfg)
    fld = _spectral(cfg, shape, sigma)
    rep = spectral_uniformity(fld, shape)
    rec = flatten_record(rep)
    dual = compare_paths(fld, shape, material, sigma, cfg["probes"]["count"],
                         make_rng(cfg.seed, 3), build_quad(cfg))
    rec["dual_path.max_rel_diff"] = dual.max_rel_diff
    rec["dual_path.n_probes"] = dual.n_probes
    rec["dual_path.threshold"] = cfg["thresholds"]["dual_path"]
    rec["dual_path.agree"] = dual.max_rel_diff < cfg["thresholds"]["dual_path"]

    def csv(out, prefix, pre):
        samples = [FieldSample(p, g, FieldMethod.SPECTRAL, True) for p, g in zip(dual.points, dual.spectral)]
        samples += [FieldSample(p, g, FieldMethod.POTENTIAL, True) for p, g in zip(dual.points, dual.potential)]
        write_field_csv(os.path.join(out, f"{prefix}.csv"), samples, pre)

    def dump(out, prefix, pre):
        path = os.path.join(out, f"{prefix}.eshf")
        write_field_dump(path, fld)
        with open(path + ".header", "w", newline="") as fh:
            fh.write("".join(f"# {line}\n" for line in pre))

    writers = []
    if cfg.output["csv"]:
        writers.append(csv)
    if cfg.output["dump"]:
        writers.append(dump)
    return Outcome(rec, writers)


def cmd_potential(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    p = cfg["potential"]
    kind = PotentialKind(p["kind"])
    axis = p["axis"] - 1 if kind in (PotentialKind.D2H, PotentialKind.NTILDE) else None
    samples = evaluate(shape, np.array(p["points"]), kind, axis, build_quad(cfg))
    rec: dict[str, Any] = {"kind": kind.value, "axis": "none" if axis is None else axis + 1,
                           "n_points": len(samples)}
    for i, s in enumerate(samples, 1):
        rec[f"value.{i}"] = s.value
        rec[f"est_error.{i}"] = s.est_error

    def csv(out, prefix, pre):
        write_samples_csv(os.path.join(out, f"{prefix}.csv"), samples, pre)

    return Outcome(rec, [csv] if cfg.output["csv"] else [])


def cmd_shape_test(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    pr = cfg["probes"]
    fit, n = interior_fit(shape, build_quadrature(shape, build_quad(cfg)), pr["count"], cfg.seed,
                          pr["margin_frac"])
    thr = cfg["thresholds"]["shape_test"]
    rec = {"fit_rms": fit.fit_rms, "fit_max": fit.fit_max, "condition": fit.condition,
           "n_probes": n, "threshold": thr, "quadratic": fit.fit_rms < thr}
    rec.update(flatten_record({"hessian": fit.hessian}))
    return Outcome(rec, [])


def cmd_theorem1(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    k1, k3 = two_equal(cfg)
    th = cfg["thresholds"]
    rep = check_theorem1(shape, build_material(cfg), k1, k3, build_quad(cfg),
                         threshold=th["theorem1"], trace_tol=th["trace_tol"])
    rec = flatten_record(rep)
    rec["k1"], rec["k3"] = k1, k3
    rec.update(flatten_record({"axis_ratios": axis_ratios(rep.ellipsoid_E)}))
    return Outcome(rec, [])


def cmd_theorem2(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    k1, k3 = two_equal(cfg)
    pr = cfg["probes"]
    rep = check_theorem2(shape, [build_material(cfg), build_material(cfg, "material2")], k1, k3,
                         build_quad(cfg), pr["count"], cfg.seed, cfg["thresholds"]["theorem2"],
                         pr["margin_frac"])
    rec = {"independent": rep.independent, "determinant": rep.determinant,
           "verdict": rep.verdict, "threshold": rep.threshold, "n_probes": rep.n_probes,
           "fit_rms": rep.fit.fit_rms if rep.fit is not None else None}
    return Outcome(flatten_record(rec), [])


def cmd_flux(cfg: ExperimentConfig) -> Outcome:
    omega = build_shape(cfg)
    e = cfg["ellipsoid"]
    E = Ellipsoid(np.array(e["semi_axes"]), np.zeros(3), euler_matrix(e["rotation_euler_deg"]))
    material = build_material(cfg) if cfg["material"] else None
    k1 = k3 = None
    if cfg["eigenstress"]:
        k1, k3 = two_equal(cfg)
    f = cfg["flux"]
    rep = flux_test(E, omega, material, k1, k3, f["n"], f["subsamples"], f["samples"],
                    f["cone_directions"], f["cone_angle_deg"])
    rec = flatten_record(rep)
    rec["positive"] = rep.n_dot_F > 0
    return Outcome(rec, [])


def cmd_special_material(cfg: ExperimentConfig) -> Outcome:
    e = cfg["eigenstress"]
    if e["tensor"] != "":
        k1, k3 = two_equal(cfg)
    else:
        k1, k3 = e["k1"], e["k3"]
    g0 = special_material_gamma0(k1, k3)
    eta = special_material_eta2(k1, k3)
    joint = special_material_joint(k1, k3)
    rec: dict[str, Any] = {"k1": k1, "k3": k3, "k3_over_k1": k3 / k1 if k1 != 0 else None}
    rec.update(flatten_record({"gamma0": g0, "eta2": eta, "joint": joint}))
    if cfg["material"]:
        rec.update(flatten_record({"constants": material_constants(build_material(cfg), k1, k3)}))
    return Outcome(flatten_record(rec), [])


def cmd_appendix(cfg: ExperimentConfig) -> Outcome:
    shape = build_shape(cfg)
    g, pr = cfg["grid"], cfg["probes"]
    material = build_material(cfg) if cfg["material"] else LameMaterial(1.0, 1.0)
    k = 1.0
    if cfg["eigenstress"]:
        es = classify_eigenstress(build_sigma(cfg))
        if es.spectral_class is not SpectralClass.ALL_EQUAL:
            raise Rejection("appendix identity check needs an all-equal eigenstress k I")
        k = es.k1
    rep = appendix_checks(shape, build_quad(cfg), g["resolution"], g["padding"], g["subsamples"],
                          material, k, pr["count"], cfg.seed, pr["margin_frac"],
                          cfg["thresholds"]["appendix"])
    return Outcome(flatten_record(rep), [])


RUNNERS: dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "field": cmd_field,
    "uniformity": cmd_uniformity,
    "potential": cmd_potential,
    "shape-test": cmd_shape_test,
    "theorem1": cmd_theorem1,
    "theorem2": cmd_theorem2,
    "flux": cmd_flux,
    "special-material": cmd_special_material,
    "appendix": cmd_appendix,
}


def header(cfg: ExperimentConfig) -> dict[str, Any]:
    return {"tool": TOOL, "version": __version__, "config_hash": cfg.hash(),
            "command": cfg.command, "seed": cfg.seed}


def preamble(cfg: ExperimentConfig) -> list[str]:
    return [f"{k} = {v}" for k, v in header(cfg).items()]


def run(cfg: ExperimentConfig, out_dir: str) -> dict[str, Any]:
    """Run one experiment and write its artifacts; returns the flat record."""
    outcome = RUNNERS[cfg.command](cfg)
    prefix = cfg.output["prefix"] or cfg.command
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{prefix}.report"), "w", newline="") as fh:
        fh.write(format_report(outcome.record, header(cfg)))
    for w in outcome.writers:
        w(out_dir, prefix, preamble(cfg))
    return outcome.record


# --- sweeps ----------------------------------------------------------------------------

def parse_sweep(spec: str) -> tuple[str, list[str]]:
    """``section.key=v1,v2,...`` or ``section.key=start:stop:step`` (stop inclusive)."""
    key, sep, values = spec.partition("=")
    key = key.strip()
    if not sep or "." not in key:
        raise ConfigError("sweep", f"expected section.key=values, got {spec!r}")
    section, _, name = key.partition(".")
    if section not in SCHEMA or name not in SCHEMA[section]:
        raise ConfigError(key, "unknown sweep key")
    if not SCHEMA[section][name].scalar:
        raise ConfigError(key, "only scalar keys can be swept")
    values = values.strip()
    if ":" in values:
        try:
            start, stop, step = (float(t) for t in values.split(":"))
        except ValueError:
            raise ConfigError(key, f"bad range {values!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError(key, f"bad range {values!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [repr(round(start + i * step, 12)) for i in range(count)]
    else:
        vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise ConfigError(key, "empty sweep list")
    return key, vals


def _numeric(v) -> Optional[float]:
    if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, float, np.number)):
        return None
    return float(v)


def summarize_sweep(xs: list[float], table: dict[str, list[Any]], slack: float = 0.10,
                    refine: Optional[Callable[[str, float, float], float]] = None) -> dict[str, Any]:
    """Monotonicity flags and sign-change roots for every numeric column."""
    out: dict[str, Any] = {"n_values": len(xs)}
    for col, vals in table.items():
        ys = [_numeric(v) for v in vals]
        if any(y is None for y in ys) or len(set(ys)) <= 1:
            continue
        y = np.array(ys)
        d = np.diff(y)
        out[f"{col}.strictly_decreasing"] = bool(np.all(d < 0))
        out[f"{col}.decreasing_within_slack"] = bool(np.all(y[1:] < y[:-1] * (1 + slack)))
        out[f"{col}.strictly_increasing"] = bool(np.all(d > 0))
        roots = []
        for i in range(len(y) - 1):
            if y[i] == 0:
                roots.append(xs[i])
            elif y[i] * y[i + 1] < 0:
                r = xs[i] + (xs[i + 1] - xs[i]) * y[i] / (y[i] - y[i + 1])
                if refine is not None:
                    r = refine(col, xs[i], xs[i + 1])
                roots.append(r)
        if y[-1] == 0:
            roots.append(xs[-1])
        out[f"{col}.sign_changes"] = len(roots)
        for j, r in enumerate(roots, 1):
            out[f"{col}.root.{j}"] = r
    return out


# commands cheap enough to re-run inside a root refinement
REFINABLE = ("special-material",)


def sweep(text: str, spec: str, out_dir: str, seed: Optional[int] = None) -> dict[str, Any]:
    key, vals = parse_sweep(spec)
    section, _, name = key.partition(".")
    base = load_config(text, seed=seed)
    if section not in base.sections and section != "run":
        raise ConfigError(key, f"section {section} is not used by command {base.command}")
    records, xs = [], []
    for v in vals:
        cfg = load_config(text, {key: v}, seed)
        cfg.output["prefix"] = f"{base.output['prefix'] or base.command}_{len(records):03d}"
        records.append(run(cfg, out_dir))
        x = _numeric(cfg[section][name]) if section != "run" else float(cfg.seed)
        xs.append(float("nan") if x is None else x)
    cols: list[str] = []
    for r in records:
        cols += [c for c in r if c not in cols]
    table = {c: [r.get(c, "") for r in records] for c in cols}

    refine = None
    if base.command in REFINABLE:
        def refine(col, a, b):
            def f(x):
                return float(RUNNERS[base.command](load_config(text, {key: repr(x)}, seed)).record[col])
            return optimize.brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    summary = summarize_sweep(xs, table, refine=refine)
    summary = {"sweep_key": key, **summary}
    pre = preamble(base) + [f"sweep = {key}"]
    write_csv(os.path.join(out_dir, "sweep.csv"), [key, *cols],
              [[x, *(table[c][i] for c in cols)] for i, x in enumerate(xs)], pre)
    with open(os.path.join(out_dir, "sweep.report"), "w", newline="") as fh:
        fh.write(format_report(summary, {**header(base), "sweep": key}))
    return summary


# --- entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="INI experiment config")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--sweep", default=None, metavar="KEY=V1,V2,...",
                   help="sweep one scalar key (section.key), values or start:stop:step")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config} ({exc.strerror})") from None
        with sp_fft.set_workers(args.threads):
            if args.sweep is not None:
                summary = sweep(text, args.sweep, args.out, args.seed)
                print(f"sweep over {summary['sweep_key']}: {summary['n_values']} values -> "
                      f"{os.path.join(args.out, 'sweep.csv')}")
            else:
                cfg = load_config(text, seed=args.seed)
                run(cfg, args.out)
                prefix = cfg.output["prefix"] or cfg.command
                print(f"{cfg.command}: wrote {os.path.join(args.out, prefix + '.report')}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Rejection as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK
