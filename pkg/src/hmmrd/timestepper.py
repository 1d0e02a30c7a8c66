"""Time integration of the HMM gradient scheme.

Two steppers share one prepared diffusion operator:

``implicit-fixedpoint``
    The fully implicit scheme. Each step iterates the frozen-argument linear
    problem: with the reaction arguments fixed at the previous iterate, the
    ``u`` update is one SPD hybrid solve and the ``v`` update is a per-cell
    scalar formula (``g`` is affine in ``v``, so ``v`` is solved exactly).
``semi-implicit``
    Implicit diffusion, explicit reaction evaluated at the previous step.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FixedPointDivergence, LinearSolverFailure, NonFiniteState, SolverFailure
from .gdm import CellVector, HybridVector, interpolate_initial_u, interpolate_initial_v, reconstruct_gradient
from .hmm import assemble_global, schur_face_system

SCHEMES = ("implicit-fixedpoint", "semi-implicit")


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T, dt):
        """Uniform grid on ``[0, T]`` with step at most ``dt``.

        The step count is ``ceil(T / dt)`` (not counting round-off), and the
        step is shrunk so the grid ends exactly at ``T``.
        """
        if not (T > 0 and dt > 0):
            raise ValueError("T and dt must be positive")
        N = max(1, int(math.ceil(T / dt - 1e-9)))
        return cls(np.arange(N + 1) * (T / N))

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def steps(self):
        return np.diff(self.times)

    @property
    def dt_max(self):
        return float(self.steps.max())

    @property
    def T(self):
        return float(self.times[-1])

    def index_of(self, t):
        """Index of the grid time closest to ``t``."""
        return int(np.argmin(np.abs(self.times - t)))


@dataclass
class SimulationState:
    u: HybridVector
    v: CellVector
    t: float
    n: int
    iterations: int = 0      # fixed-point iterations used by the step that produced it


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "semi-implicit"
    fp_tol: float = 1e-8
    fp_max_iter: int = 50
    linear_solver: str = "direct"
    lin_tol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not (self.fp_tol > 0 and self.lin_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be at least 1")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError("linear_solver must be 'direct' or 'cg'")


class DiffusionOperator:
    """HMM diffusion matrix with cached face systems per time step size."""

    def __init__(self, mesh, mu, beta=1.0, backend=None):
        self.mesh = mesh
        self.mu = float(mu)
        self.beta = float(beta)
        self.diffusion = assemble_global(mesh, mu, beta, backend=backend)
        self._systems = {}

    def face_system(self, dt):
        """Face system for step ``dt`` and the step it was built for.

        Steps of a uniform grid differ by round-off only; any ``dt`` within
        a relative 1e-12 of the cached one reuses that system and its
        factorisation.
        """
        dt = float(dt)
        for key, fs in self._systems.items():
            if abs(key - dt) <= 1e-12 * key:
                return fs, key
        fs = schur_face_system(self.diffusion, self.mesh.cell_area / dt)
        self._systems = {dt: fs}     # steps are almost always uniform
        return fs, dt

    def solve(self, u_cells_old, source, dt, config, x0=None):
        """Solve ``(M/dt + A) u = M/dt u_old + M source`` for the hybrid ``u``.

        ``source`` holds cell values of the frozen reaction term.
        """
        area = self.mesh.cell_area
        fs, dt = self.face_system(dt)
        bc = area / dt * u_cells_old + area * source
        try:
            uf = fs.solve_faces(fs.reduce_rhs(bc), config.linear_solver, config.lin_tol, x0)
        except SolverFailure as exc:
            raise LinearSolverFailure(str(exc)) from exc
        return fs.back_substitute(uf, bc), uf


def _l2(area, x):
    return math.sqrt(float(np.dot(area, x * x)))


def _finite_state(uc, uf, v, t, n, iterations=0):
    if not (np.all(np.isfinite(uc)) and np.all(np.isfinite(uf)) and np.all(np.isfinite(v))):
        raise NonFiniteState(f"non-finite values at step {n} (t={t:g})")
    return SimulationState(HybridVector(uc, uf), CellVector(v), t, n, iterations)


def step_semi_implicit(mesh, ops, reaction, state, dt, config=StepperConfig()):
    if not dt > 0:
        raise ValueError("time step must be positive")
    uc, vc = state.u.cell, state.v.cell
    f = reaction.f(uc, vc)
    v_new = vc + dt * reaction.g(uc, vc)
    u_cells, u_faces = ops.solve(uc, f, dt, config, x0=state.u.face)
    return _finite_state(u_cells, u_faces, v_new, state.t + dt, state.n + 1, 1)


def step_implicit(mesh, ops, reaction, state, dt, config=StepperConfig()):
    """One step of the fully implicit scheme by fixed-point iteration.

    Raises
    ------
    FixedPointDivergence
        If the iterates have not settled after ``config.fp_max_iter`` sweeps.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    area = mesh.cell_area
    u0c, v0 = state.u.cell, state.v.cell
    wu, wv, wf = u0c, v0, state.u.face
    denom = 1.0 - reaction.alpha * dt
    if denom == 0.0:
        raise FixedPointDivergence("1 - alpha*dt vanishes; the v update is singular")
    change = math.inf
    for it in range(1, config.fp_max_iter + 1):
        v_new = (v0 + dt * reaction.g1(wu)) / denom
        f = reaction.f(wu, v_new)
        u_cells, u_faces = ops.solve(u0c, f, dt, config, x0=wf)
        if not (np.all(np.isfinite(u_cells)) and np.all(np.isfinite(v_new))):
            raise FixedPointDivergence(f"fixed-point iterate became non-finite at sweep {it}")
        du = _l2(area, u_cells - wu) / max(_l2(area, u_cells), 1e-300)
        dv = _l2(area, v_new - wv) / max(_l2(area, v_new), 1e-300)
        change = max(du if _l2(area, u_cells) > 0 else _l2(area, u_cells - wu),
                     dv if _l2(area, v_new) > 0 else _l2(area, v_new - wv))
        wu, wv, wf = u_cells, v_new, u_faces
        if change <= config.fp_tol:
            return _finite_state(u_cells, u_faces, v_new, state.t + dt, state.n + 1, it)
    raise FixedPointDivergence(
        f"fixed point not reached in {config.fp_max_iter} sweeps at t={state.t + dt:g} "
        f"(last relative change {change:.3e})", change)


STEPPERS = {"implicit-fixedpoint": step_implicit, "semi-implicit": step_semi_implicit}


# ----------------------------------------------------------------- monitoring
@dataclass
class Trajectory:
    """Per-step norms recorded along a run.

    Index 0 is the initial state. ``dtu`` holds the L2 norm of the discrete
    time derivative of ``Pi u`` over each step (length ``n_steps``).
    """

    times: list = field(default_factory=list)
    l2_u: list = field(default_factory=list)
    l2_v: list = field(default_factory=list)
    grad_u: list = field(default_factory=list)
    mass_u: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    dtu: list = field(default_factory=list)
    zero_reaction: bool = False

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k), dtype=float)
                for k in ("times", "l2_u", "l2_v", "grad_u", "mass_u", "dt", "dtu")}


class EstimateMonitor:
    """Observer that accumulates the norms used by the estimate checks."""

    def __init__(self, mesh, zero_reaction=False):
        self.mesh = mesh
        self.trajectory = Trajectory(zero_reaction=zero_reaction)
        self._prev = None

    def __call__(self, state, n, t):
        area = self.mesh.cell_area
        tr = self.trajectory
        uc = state.u.cell
        if self._prev is not None:
            dt = t - tr.times[-1]
            tr.dt.append(dt)
            tr.dtu.append(_l2(area, (uc - self._prev) / dt) if dt != 0 else math.inf)
        tr.times.append(t)
        tr.l2_u.append(_l2(area, uc))
        tr.l2_v.append(_l2(area, state.v.cell))
        tr.grad_u.append(reconstruct_gradient(self.mesh, state.u).l2_norm())
        tr.mass_u.append(float(np.dot(area, uc)))
        self._prev = uc.copy()


@dataclass
class EstimateReport:
    norms: dict
    finite: bool
    monotone: bool
    passed: bool
    messages: list

    def bounded_against(self, finer, factor=2.0):
        """True when no norm of ``finer`` exceeds ``factor`` times this report's."""
        return all(finer.norms[k] <= factor * v + 1e-300 for k, v in self.norms.items())


def energy_estimate_check(trajectory, zero_reaction=None):
    """Norms of the basic energy estimate along a trajectory.

    Computes ``sup_t ||Pi u||``, ``sup_t ||Pi v||`` and the space-time L2
    norm of ``grad_D u``. For zero kinetics additionally requires the cell L2
    norm of ``u`` to be non-increasing at every step.
    """
    a = trajectory.as_arrays()
    zero = trajectory.zero_reaction if zero_reaction is None else zero_reaction
    msgs = []
    norms = {
        "sup_l2_u": float(a["l2_u"].max()),
        "sup_l2_v": float(a["l2_v"].max()),
        "l2_grad_u": math.sqrt(float(np.dot(a["dt"], a["grad_u"][1:] ** 2))) if a["dt"].size else 0.0,
    }
    finite = all(math.isfinite(v) for v in norms.values())
    if not finite:
        msgs.append("non-finite norm")
    if a["dt"].size and np.any(a["dt"] <= 0):
        finite = False
        msgs.append("non-positive time step in trajectory")
    monotone = True
    if zero:
        inc = np.diff(a["l2_u"])
        tol = 1e-12 * max(1.0, float(a["l2_u"].max()))
        if np.any(inc > tol):
            monotone = False
            msgs.append(f"L2 norm of u increased by {inc.max():.3e}")
    return EstimateReport(norms, finite, monotone, finite and monotone, msgs)


def gradient_estimate_check(trajectory):
    """Norms of the gradient/time-derivative estimate.

    ``l2_dtu`` is the space-time L2 norm of the discrete time derivative of
    ``Pi u`` and ``sup_grad_u`` the largest ``||grad_D u^n||`` over the run.
    """
    a = trajectory.as_arrays()
    msgs = []
    norms = {
        "l2_dtu": math.sqrt(float(np.dot(a["dt"], a["dtu"] ** 2))) if a["dt"].size else 0.0,
        "sup_grad_u": float(a["grad_u"].max()),
    }
    finite = all(math.isfinite(v) for v in norms.values())
    if a["dt"].size and np.any(a["dt"] <= 0):
        finite = False
        msgs.append("non-positive time step in trajectory")
    if not finite:
        msgs.append("non-finite norm")
    return EstimateReport(norms, finite, True, finite, msgs)


# ------------------------------------------------------------------------ run
@dataclass
class RunResult:
    state: SimulationState
    trajectory: Trajectory
    fixed_point_iterations: list


def initial_state(mesh, u_ini, v_ini, face_values="sample", refine=0):
    u0 = interpolate_initial_u(mesh, u_ini, face_values=face_values, refine=refine)
    v0 = interpolate_initial_v(mesh, v_ini, refine=refine)
    return SimulationState(u0, v0, 0.0, 0)


def run(mesh, reaction, u_ini, v_ini, grid, config=StepperConfig(), observers=(), mu=1.0,
        ops=None, face_values="sample", refine=0, state=None):
    """Advance the scheme over ``grid`` from interpolated initial data.

    Every observer is called as ``observer(state, n, t)`` after the initial
    interpolation (``n = 0``) and after every step. An
    :class:`EstimateMonitor` is always attached; its trajectory is returned.
    """
    ops = ops if ops is not None else DiffusionOperator(mesh, mu)
    stepper = STEPPERS[config.scheme]
    if state is None:
        state = initial_state(mesh, u_ini, v_ini, face_values, refine)
    monitor = EstimateMonitor(mesh, zero_reaction=reaction.is_zero)
    all_obs = [monitor, *observers]
    for ob in all_obs:
        ob(state, 0, state.t)
    iters = []
    times = grid.times
    for n in range(grid.n_steps):
        dt = times[n + 1] - times[n]
        state = stepper(mesh, ops, reaction, state, dt, config)
        state.t = float(times[n + 1])          # no drift from accumulated sums
        iters.append(state.iterations)
        for ob in all_obs:
            ob(state, n + 1, state.t)
    return RunResult(state, monitor.trajectory, iters)
