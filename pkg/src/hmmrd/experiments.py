"""Barkley spiral presets, spiral diagnostics and the heat convergence study."""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from .gdm import cell_averages, reconstruct_gradient
from .mesh import build_box_triangular, build_uniform_triangular
from .quadrature import diamond_rule
from .reaction import BarkleyParams, barkley, zero_reaction
from .timestepper import DiffusionOperator, StepperConfig, TimeGrid, run


def u_profile(x1, alpha1, alpha2):
    """``(1 + exp(4(|x1| - alpha1)))**-2 - (1 + exp(4(|x1| - alpha2)))**-2``."""
    ax = np.abs(np.asarray(x1, dtype=float))
    # exp overflows to inf for very large |x1|, giving the correct limit 0
    with np.errstate(over="ignore"):
        return (1.0 + np.exp(4.0 * (ax - alpha1))) ** -2 - (1.0 + np.exp(4.0 * (ax - alpha2))) ** -2


@dataclass(frozen=True)
class SpiralPreset:
    """Barkley run on ``[-L, L]^2``.

    ``u_ini`` vanishes where ``x1 < u_x1_below`` or ``x2 > u_x2_above`` and
    equals the two-front profile elsewhere. ``v_ini`` equals ``alpha3`` where
    ``x1 < v_x1_below`` and ``x2 < v_x2_below`` and vanishes elsewhere.
    """

    name: str
    L: float
    params: BarkleyParams
    alpha1: float
    alpha2: float
    alpha3: float
    u_x1_below: float
    u_x2_above: float
    v_x1_below: float
    v_x2_below: float
    T: float
    snapshot_times: tuple
    mu: float = 1.0
    n: int = 30
    dt: float = None             # None means rho / 5

    def __post_init__(self):
        vals = (self.L, self.alpha1, self.alpha2, self.alpha3, self.T, self.mu,
                self.u_x1_below, self.u_x2_above, self.v_x1_below, self.v_x2_below)
        if not all(math.isfinite(float(x)) for x in vals):
            raise ValueError("preset constants must be finite")
        if not (self.L > 0 and self.T > 0 and self.mu > 0 and self.n >= 1):
            raise ValueError("L, T, mu and n must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if any(not (0 <= t <= self.T) for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, T]")

    @property
    def time_step(self):
        return self.params.rho / 5.0 if self.dt is None else float(self.dt)

    def u_ini(self, x1, x2):
        x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
        zero = (x1 < self.u_x1_below) | (x2 > self.u_x2_above)
        return np.where(zero, 0.0, u_profile(x1, self.alpha1, self.alpha2))

    def v_ini(self, x1, x2):
        x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
        on = (x1 < self.v_x1_below) & (x2 < self.v_x2_below)
        return np.where(on, self.alpha3, 0.0)

    def reaction(self):
        return barkley(self.params)

    def mesh(self):
        return build_uniform_triangular(self.L, self.n)

    def grid(self):
        return TimeGrid.uniform(self.T, self.time_step)


def preset_example1():
    return SpiralPreset(
        name="example1", L=30.0, params=BarkleyParams(rho=0.005, a=0.3, b=0.01),
        alpha1=5.0, alpha2=1.0, alpha3=0.1,
        u_x1_below=0.0, u_x2_above=5.0, v_x1_below=1.0, v_x2_below=10.0,
        T=100.0, snapshot_times=(5, 10, 20, 30, 40, 60, 80, 100))


def preset_example2():
    return SpiralPreset(
        name="example2", L=7.5, params=BarkleyParams(rho=0.0208, a=0.52, b=0.05),
        alpha1=3.0, alpha2=1.0, alpha3=0.25,
        u_x1_below=0.0, u_x2_above=5.0, v_x1_below=-1.0, v_x2_below=3.0,
        T=3.0, snapshot_times=(0.2, 0.5, 1, 1.5, 2, 3))


PRESETS = {"example1": preset_example1, "example2": preset_example2}


# ---------------------------------------------------------------- diagnostics
def excited_fraction(mesh, u_cells, delta):
    """Area fraction of cells with ``u_K > delta``."""
    area = mesh.cell_area
    # math.fsum makes the sum independent of cell order
    return math.fsum(area[np.asarray(u_cells) > delta]) / math.fsum(area)


class SpiralRecorder:
    """Observer recording the excited-area fraction and ``max u`` every ``every`` steps."""

    def __init__(self, mesh, delta, every=1):
        self.mesh = mesh
        self.delta = float(delta)
        self.every = max(1, int(every))
        self.times, self.fraction, self.max_u = [], [], []

    def __call__(self, state, n, t):
        if n % self.every:
            return
        self.times.append(t)
        self.fraction.append(excited_fraction(self.mesh, state.u.cell, self.delta))
        self.max_u.append(float(np.max(state.u.cell)))


@dataclass
class SpiralDiagnostics:
    times: np.ndarray
    fraction: np.ndarray
    max_u: np.ndarray
    n_maxima: int
    classification: str


def spiral_diagnostics(trajectory, delta=None, window=0.05, min_maxima=3, prominence=1e-3):
    """Classify the boundary interaction of a recorded spiral run.

    ``annihilated``: no excited cell anywhere in the final ``window`` fraction
    of the run while some cell was excited earlier. ``reflected``: excited
    cells remain at the final time and the fraction series has at least
    ``min_maxima`` local maxima (a sustained rotation). Anything else is
    ``indeterminate``. Both thresholds are heuristics.

    ``trajectory`` is a :class:`SpiralRecorder` or any object with ``times``,
    ``fraction`` and ``max_u`` sequences. ``delta`` is accepted for interface
    symmetry; the fractions were already computed with the recorder's level.
    """
    t = np.asarray(trajectory.times, dtype=float)
    frac = np.asarray(trajectory.fraction, dtype=float)
    mx = np.asarray(trajectory.max_u, dtype=float)
    if t.size == 0:
        return SpiralDiagnostics(t, frac, mx, 0, "indeterminate")
    T0, T1 = t[0], t[-1]
    in_window = t >= T1 - window * (T1 - T0)
    peaks, _ = find_peaks(frac, prominence=prominence)
    n_max = int(peaks.size)
    if np.all(frac[in_window] == 0) and np.any(frac[~in_window] > 0):
        label = "annihilated"
    elif frac[-1] > 0 and n_max >= min_maxima:
        label = "reflected"
    else:
        label = "indeterminate"
    return SpiralDiagnostics(t, frac, mx, n_max, label)


@dataclass
class SpiralRun:
    preset: SpiralPreset
    mesh: object
    result: object
    recorder: SpiralRecorder
    diagnostics: SpiralDiagnostics


def run_preset(preset, config=None, observers=(), record_every=None, mesh=None):
    """Simulate a spiral preset and classify it."""
    config = config if config is not None else StepperConfig(scheme="semi-implicit")
    mesh = mesh if mesh is not None else preset.mesh()
    grid = preset.grid()
    if record_every is None:
        record_every = max(1, grid.n_steps // 2000)
    rec = SpiralRecorder(mesh, preset.params.delta, record_every)
    res = run(mesh, preset.reaction(), preset.u_ini, preset.v_ini, grid, config,
              observers=(rec, *observers), mu=preset.mu)
    return SpiralRun(preset, mesh, res, rec, spiral_diagnostics(rec))


# ------------------------------------------------------- heat convergence
def heat_exact(x1, x2, t, L=1.0, mu=1.0):
    """``cos(pi x1/L) cos(pi x2/L) exp(-2 mu (pi/L)^2 t)``, Neumann on ``[0, L]^2``."""
    k = math.pi / L
    return np.cos(k * x1) * np.cos(k * x2) * math.exp(-2.0 * mu * k * k * t)


def heat_exact_gradient(x1, x2, t, L=1.0, mu=1.0):
    k = math.pi / L
    e = math.exp(-2.0 * mu * k * k * t)
    return (-k * np.sin(k * x1) * np.cos(k * x2) * e, -k * np.cos(k * x1) * np.sin(k * x2) * e)


@dataclass
class ConvergenceRow:
    n: int
    h: float
    dt: float
    steps: int
    err_cell: float
    err_grad: float
    order_cell: float = math.nan
    order_grad: float = math.nan


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    L: float = 1.0
    T: float = 0.05
    mu: float = 1.0

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def format(self):
        head = f"{'n':>5} {'h':>10} {'dt':>10} {'steps':>6} {'err_cell':>12} {'order':>6} {'err_grad':>12} {'order':>6}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r.n:5d} {r.h:10.4e} {r.dt:10.3e} {r.steps:6d} {r.err_cell:12.5e} "
                         f"{r.order_cell:6.2f} {r.err_grad:12.5e} {r.order_grad:6.2f}")
        return "\n".join(lines)


def heat_convergence_study(levels, n0=4, L=1.0, T=0.05, mu=1.0, dt_factor=0.1,
                           config=StepperConfig(scheme="semi-implicit")):
    """Pure heat runs on ``[0, L]^2`` with ``n0 * 2**l`` subdivisions per side.

    The time step is ``dt_factor * h**2`` so the time error is of the same
    order as the spatial one. The cell error is measured against the cell
    averages of the exact solution at ``T`` and the gradient error against
    the exact gradient with the diamond quadrature rule. Orders are base-2
    logarithms of successive error ratios.
    """
    if levels < 3:
        raise ValueError("the study needs at least 3 levels")
    table = ConvergenceTable(L=L, T=T, mu=mu)
    reac = zero_reaction()
    for lev in range(levels):
        n = n0 * 2 ** lev
        mesh = build_box_triangular(0.0, L, 0.0, L, n)
        grid = TimeGrid.uniform(T, dt_factor * mesh.h ** 2)
        res = run(mesh, reac, lambda x1, x2: heat_exact(x1, x2, 0.0, L, mu), lambda x1, x2: 0.0,
                  grid, config, mu=mu, ops=DiffusionOperator(mesh, mu))
        u = res.state.u
        ref = cell_averages(mesh, lambda x1, x2: heat_exact(x1, x2, T, L, mu))
        e_cell = math.sqrt(float(np.dot(mesh.cell_area, (u.cell - ref) ** 2)))
        pts, w = diamond_rule(mesh)
        gex = np.stack(heat_exact_gradient(pts[..., 0], pts[..., 1], T, L, mu), axis=-1)
        gD = reconstruct_gradient(mesh, u).values
        e_grad = math.sqrt(float((w * ((gex - gD[:, None, :]) ** 2).sum(axis=-1)).sum()))
        table.rows.append(ConvergenceRow(n, mesh.h, grid.dt_max, grid.n_steps, e_cell, e_grad))
    for prev, cur in zip(table.rows, table.rows[1:]):
        cur.order_cell = math.log2(prev.err_cell / cur.err_cell)
        cur.order_grad = math.log2(prev.err_grad / cur.err_grad)
    return table


def with_overrides(preset, **kw):
    """Copy of a preset with some fields replaced (``rho``, ``a``, ``b``, ``delta`` go to the params)."""
    pk = {k: kw.pop(k) for k in ("rho", "a", "b", "delta") if k in kw}
    if pk:
        kw["params"] = replace(preset.params, **pk)
    return replace(preset, **kw)


# ------------------------------------------------------------ GD quality
def smooth_field(x1, x2):
    return np.cos(np.pi * x1) * np.cos(np.pi * x2)


def smooth_field_gradient(x1, x2):
    return (-np.pi * np.sin(np.pi * x1) * np.cos(np.pi * x2),
            -np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2))


def _bump(s):
    return s * s * (1 - s) ** 2, 2 * s * (1 - s) * (1 - 2 * s)


def curl_field(x1, x2):
    """Divergence-free field ``curl(X(x1) X(x2))`` with ``X(s) = s^2 (1-s)^2``.

    Its normal component vanishes on the boundary of the unit square.
    """
    X, dX = _bump(x1)
    Y, dY = _bump(x2)
    return (X * dY, -dX * Y)


def curl_field_divergence(x1, x2):
    return np.zeros_like(np.asarray(x1, dtype=float))


@dataclass
class QualityRow:
    n: int
    h: float
    S: float
    S_prime: float
    W: float
    theta: float


@dataclass
class QualityTable:
    rows: list

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def order(self, name):
        """Observed orders ``log(e_l / e_{l+1}) / log(h_l / h_{l+1})``."""
        e, h = self.column(name), self.column("h")
        return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])

    def format(self):
        lines = [f"{'n':>5} {'h':>10} {'S_D':>12} {'S_Dprime':>12} {'W_D':>12} {'theta':>8}"]
        for r in self.rows:
            lines.append(f"{r.n:5d} {r.h:10.4e} {r.S:12.5e} {r.S_prime:12.5e} {r.W:12.5e} {r.theta:8.4f}")
        return "\n".join(lines)


def gd_quality_study(levels, n0=4, solver="cg", tol=1e-12):
    """Consistency and limit-conformity measures on refined meshes of the unit square.

    ``S`` uses ``cos(pi x1) cos(pi x2)``; ``S_prime`` the same function;
    ``W`` uses :func:`curl_field`.
    """
    from .gdm import consistency_measure_u, consistency_measure_v, limit_conformity_measure
    from .mesh import regularity

    rows = []
    for lev in range(levels):
        n = n0 * 2 ** lev
        mesh = build_box_triangular(0.0, 1.0, 0.0, 1.0, n)
        rows.append(QualityRow(
            n, mesh.h,
            consistency_measure_u(mesh, smooth_field, smooth_field_gradient, solver=solver, tol=tol),
            consistency_measure_v(mesh, smooth_field),
            limit_conformity_measure(mesh, curl_field, curl_field_divergence, solver=solver, tol=tol),
            regularity(mesh).theta))
    return QualityTable(rows)
