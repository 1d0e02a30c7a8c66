"""Run configuration files, snapshot files and run provenance.

Config grammar: one ``key = value`` per line, ``#`` starts a comment, blank
lines are ignored. Lists (``snapshot_times``, ``formats``) are
comma-separated. Unknown or repeated keys are errors.
"""

import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__, kernels
from .errors import ConfigError
from .experiments import PRESETS, SpiralPreset
from .reaction import BarkleyParams, barkley, zero_reaction
from .timestepper import SCHEMES, StepperConfig


def _float(text):
    x = float(text)
    if not math.isfinite(x):
        raise ValueError("non-finite number")
    return x


def _int(text):
    return int(text)


def _floats(text):
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _words(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _word(text):
    return text.strip()


# key -> (parser, kind used in error messages)
KEYS = {
    "preset": (_word, "name"),
    "kinetics": (_word, "name"),
    "L": (_float, "number"),
    "n": (_int, "integer"),
    "mu": (_float, "number"),
    "rho": (_float, "number"),
    "a": (_float, "number"),
    "b": (_float, "number"),
    "delta": (_float, "number"),
    "alpha1": (_float, "number"),
    "alpha2": (_float, "number"),
    "alpha3": (_float, "number"),
    "u_x1_below": (_float, "number"),
    "u_x2_above": (_float, "number"),
    "v_x1_below": (_float, "number"),
    "v_x2_below": (_float, "number"),
    "T": (_float, "number"),
    "dt": (_float, "number"),
    "scheme": (_word, "name"),
    "fp_tol": (_float, "number"),
    "fp_max_iter": (_int, "integer"),
    "lin_tol": (_float, "number"),
    "linear_solver": (_word, "name"),
    "snapshot_times": (_floats, "number list"),
    "out": (_word, "path"),
    "formats": (_words, "name list"),
}

_PRESET_FIELDS = ("L", "n", "mu", "alpha1", "alpha2", "alpha3", "u_x1_below", "u_x2_above",
                  "v_x1_below", "v_x2_below", "T", "dt", "snapshot_times")
_PARAM_FIELDS = ("rho", "a", "b", "delta")
_STEPPER_FIELDS = ("scheme", "fp_tol", "fp_max_iter", "lin_tol", "linear_solver")


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration; ``None`` means "not given"."""

    preset: str = None
    kinetics: str = None
    L: float = None
    n: int = None
    mu: float = None
    rho: float = None
    a: float = None
    b: float = None
    delta: float = None
    alpha1: float = None
    alpha2: float = None
    alpha3: float = None
    u_x1_below: float = None
    u_x2_above: float = None
    v_x1_below: float = None
    v_x2_below: float = None
    T: float = None
    dt: float = None
    scheme: str = None
    fp_tol: float = None
    fp_max_iter: int = None
    lin_tol: float = None
    linear_solver: str = None
    snapshot_times: tuple = None
    out: str = None
    formats: tuple = None

    def given(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def merged(self, **overrides):
        """Copy with the non-``None`` overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def parse_config(text):
    """Parse config text into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        On a malformed line, unknown or repeated key, or unparsable value;
        the message names the line.
    """
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in vals:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        parser, kind = KEYS[key]
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        try:
            vals[key] = parser(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: malformed {kind} for {key!r}: {value!r}") from None
    return RunConfig(**vals)


def _fmt(value):
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)       # shortest string that reads back bit-exactly
    return str(value)


def format_config(cfg):
    """Serialise a config so that ``parse_config(format_config(c)) == c``."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.given().items())


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def config_from_preset(preset, **extra):
    """Fully explicit config describing ``preset``."""
    vals = {k: getattr(preset, k) for k in _PRESET_FIELDS}
    vals.update({k: getattr(preset.params, k) for k in _PARAM_FIELDS})
    vals = {k: (float(v) if isinstance(v, (int, float)) and k not in ("n",) else v)
            for k, v in vals.items() if v is not None}
    return RunConfig(preset="custom", kinetics="barkley", **vals).merged(**extra)


@dataclass
class ResolvedRun:
    config: RunConfig          # fully explicit
    preset: SpiralPreset
    stepper: StepperConfig
    kinetics: str
    out: str
    formats: tuple

    def reaction(self):
        return barkley(self.preset.params) if self.kinetics == "barkley" else zero_reaction()


def resolve(cfg):
    """Validate a config and fill unspecified values from its preset."""
    name = cfg.preset or "custom"
    given = cfg.given()
    if name in PRESETS:
        base = PRESETS[name]()
    elif name == "custom":
        missing = [k for k in _PRESET_FIELDS + _PARAM_FIELDS
                   if k not in given and k not in ("dt", "mu", "n", "delta")]
        if missing:
            raise ConfigError(f"custom config is missing keys: {', '.join(missing)}")
        base = None
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)} or 'custom'")
    kinetics = given.get("kinetics", "barkley")
    if kinetics not in ("barkley", "off"):
        raise ConfigError(f"kinetics must be 'barkley' or 'off', got {kinetics!r}")
    try:
        if base is None:
            params = BarkleyParams(**{k: given[k] for k in _PARAM_FIELDS if k in given})
            kw = {k: given[k] for k in _PRESET_FIELDS if k in given}
            preset = SpiralPreset(name="custom", params=params, **kw)
        else:
            pk = {k: given[k] for k in _PARAM_FIELDS if k in given}
            params = replace(base.params, **pk) if pk else base.params
            kw = {k: given[k] for k in _PRESET_FIELDS if k in given}
            if "T" in kw and "snapshot_times" not in kw:
                # a shortened run keeps the preset snapshots that still fit
                kw["snapshot_times"] = tuple(t for t in base.snapshot_times if t <= kw["T"]) or (kw["T"],)
            preset = replace(base, params=params, **kw)
        stepper = StepperConfig(**{k: given[k] for k in _STEPPER_FIELDS if k in given})
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if stepper.scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}")
    formats = given.get("formats", ("csv",))
    bad = [f for f in formats if f not in ("csv", "vtk")]
    if bad or not formats:
        raise ConfigError(f"formats must be a non-empty subset of csv, vtk; got {formats}")
    out = given.get("out", "out")
    full = config_from_preset(preset).merged(
        preset=name, kinetics=kinetics, scheme=stepper.scheme, fp_tol=stepper.fp_tol,
        fp_max_iter=stepper.fp_max_iter, lin_tol=stepper.lin_tol,
        linear_solver=stepper.linear_solver, out=out, formats=tuple(formats), dt=preset.time_step)
    return ResolvedRun(full, preset, stepper, kinetics, out, tuple(formats))


# ------------------------------------------------------------------ snapshots
CSV_COLUMNS = ("cell", "x1", "x2", "u", "v")


def write_snapshot_csv(state, mesh, path):
    """Write one row per cell: ``cell,x1,x2,u,v`` with 17 significant digits.

    The first line is ``# time=<t> step=<n> mesh=<hash>``, the second the
    column names. ``x1, x2`` are the cell centers.
    """
    c = mesh.cell_center
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# time={state.t:.17g} step={state.n} mesh={mesh.hash()}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        u, v = state.u.cell, state.v.cell
        fh.writelines(f"{K},{c[K, 0]:.17g},{c[K, 1]:.17g},{u[K]:.17g},{v[K]:.17g}\n"
                      for K in range(mesh.n_cells))


@dataclass
class Snapshot:
    time: float
    step: int
    mesh_hash: str
    cell: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    v: np.ndarray


def read_snapshot_csv(path):
    with open(path) as fh:
        head = fh.readline()
        cols = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if not head.startswith("#") or tuple(cols) != CSV_COLUMNS:
        raise ValueError(f"{path}: not a snapshot file")
    meta = dict(item.split("=", 1) for item in head[1:].split())
    if data.size == 0:
        data = np.zeros((0, len(CSV_COLUMNS)))
    return Snapshot(float(meta["time"]), int(meta["step"]), meta["mesh"],
                    data[:, 0].astype(np.int64), data[:, 1], data[:, 2], data[:, 3], data[:, 4])


def write_snapshot_vtk(state, mesh, path):
    """Legacy ASCII VTK unstructured grid with cell arrays ``u`` then ``v``."""
    nc = mesh.n_cells
    sizes = np.diff(mesh.cell_vptr)
    lines = ["# vtk DataFile Version 3.0",
             f"hmmrd snapshot t={state.t:.17g} step={state.n}",
             "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc} {int(nc + sizes.sum())}")
    for K in range(nc):
        ids = mesh.cell_vertex_ids(K)
        lines.append(f"{len(ids)} " + " ".join(str(int(i)) for i in ids))
    lines.append(f"CELL_TYPES {nc}")
    lines += ["5" if s == 3 else "7" for s in sizes]      # triangle or polygon
    lines.append(f"CELL_DATA {nc}")
    for name, arr in (("u", state.u.cell), ("v", state.v.cell)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{x:.17g}" for x in arr]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def snapshot_name(t, ext):
    return f"snapshot_t{t:09.4f}.{ext}"


class SnapshotWriter:
    """Observer writing snapshots at the grid steps closest to the requested times."""

    def __init__(self, mesh, out_dir, grid, times, formats=("csv",)):
        self.mesh = mesh
        self.out_dir = out_dir
        self.formats = tuple(formats)
        self.targets = {}
        for t in times:
            self.targets.setdefault(grid.index_of(t), []).append(float(t))
        self.written = []

    def __call__(self, state, n, t):
        for t_req in self.targets.get(n, ()):
            for fmt in self.formats:
                path = os.path.join(self.out_dir, snapshot_name(t_req, fmt))
                (write_snapshot_csv if fmt == "csv" else write_snapshot_vtk)(state, self.mesh, path)
                self.written.append(path)


def write_provenance(path, resolved, mesh, extra=None):
    """Echo the resolved config, mesh hash, tolerances and build details."""
    lines = [f"hmmrd {__version__}", f"kernel_backend = {kernels.backend()}",
             f"mesh_hash = {mesh.hash()}", f"mesh_cells = {mesh.n_cells}",
             f"mesh_faces = {mesh.n_faces}",
             f"tolerances = fp_tol {resolved.stepper.fp_tol!r}, lin_tol {resolved.stepper.lin_tol!r}, "
             f"fp_max_iter {resolved.stepper.fp_max_iter}",
             "", "# resolved config", format_config(resolved.config).rstrip()]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
