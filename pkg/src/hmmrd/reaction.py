"""Reaction kinetics that are affine in the second unknown.

A model is ``f(s, xi) = f1(s) + f2(s) * xi`` and ``g(s, xi) = g1(s) + alpha * xi``.
All callables act elementwise on numpy arrays.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AffineReaction:
    f1: callable
    f2: callable
    g1: callable
    alpha: float
    name: str = "affine"
    is_zero: bool = False

    def f(self, s, xi):
        return self.f1(s) + self.f2(s) * xi

    def g(self, s, xi):
        return self.g1(s) + self.alpha * xi


def _zeros_like(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def zero_reaction():
    """``f = g = 0``: pure diffusion plus a frozen second unknown."""
    return AffineReaction(_zeros_like, _zeros_like, _zeros_like, 0.0, name="off", is_zero=True)


def constant_reaction(cf, cg):
    return AffineReaction(lambda s: np.full_like(np.asarray(s, dtype=float), cf),
                          _zeros_like,
                          lambda s: np.full_like(np.asarray(s, dtype=float), cg),
                          0.0, name="constant")


def linear_reaction(p, q, r=0.0, c=0.0, alpha=0.0):
    """``f = p + q s + r xi``, ``g = c + alpha xi`` (second coefficient of g1 is zero)."""
    return AffineReaction(lambda s: p + q * np.asarray(s, dtype=float),
                          lambda s: np.full_like(np.asarray(s, dtype=float), r),
                          lambda s: np.full_like(np.asarray(s, dtype=float), c),
                          float(alpha), name="linear")


@dataclass(frozen=True)
class BarkleyParams:
    """Barkley kinetics parameters.

    ``rho`` separates the fast and slow time scales, ``a`` controls the
    excitation duration and ``b / a`` the excitation threshold; ``delta`` is
    the level above which a point counts as excited in diagnostics.
    """

    rho: float
    a: float
    b: float
    delta: float = 0.1

    def __post_init__(self):
        for k in ("rho", "a", "b"):
            if not getattr(self, k) > 0:
                raise ValueError(f"Barkley parameter {k} must be positive")


def barkley(params):
    """Barkley kinetics ``f = u(1-u)(u - (v+b)/a)/rho``, ``g = u - v``."""
    rho, a, b = params.rho, params.a, params.b
    th0 = b / a

    def f1(s):
        s = np.asarray(s, dtype=float)
        return s * (1.0 - s) * (s - th0) / rho

    def f2(s):
        s = np.asarray(s, dtype=float)
        return -s * (1.0 - s) / (a * rho)

    def g1(s):
        return np.asarray(s, dtype=float) * 1.0

    return AffineReaction(f1, f2, g1, -1.0, name="barkley")


@dataclass(frozen=True)
class Nullclines:
    u_lines: tuple              # u = 0, u = 1 and the threshold line
    v_line: str
    fixed_points: tuple
    a: float
    b: float

    def threshold(self, v):
        """Excitation threshold ``u_th(v) = (v + b) / a``."""
        return (np.asarray(v, dtype=float) + self.b) / self.a


def nullcline_diagnostics(params):
    return Nullclines(
        u_lines=("u = 0", "u = 1", f"u = (v + {params.b}) / {params.a}"),
        v_line="u = v",
        fixed_points=((0.0, 0.0), (1.0, 1.0)),
        a=params.a,
        b=params.b,
    )


@dataclass
class GrowthReport:
    """Growth constants ``|f1| <= c1 + c2|s|``, ``|f2| <= c3``, ``|g1| <= c4 + c5|s|``.

    Entries are ``math.inf`` where no finite constant exists.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    interval: tuple
    admissible: bool
    notes: list

    @property
    def constants(self):
        return (self.c1, self.c2, self.c3, self.c4, self.c5)


def _grows(func, power):
    # compare |func(s)| / |s|**power at |s| = 1e7 and 1e8
    near = np.array([-1e7, 1e7])
    far = np.array([-1e8, 1e8])
    r_near = (np.abs(func(near)) / np.abs(near) ** power).max()
    r_far = (np.abs(func(far)) / np.abs(far) ** power).max()
    return not np.isfinite(r_far) or r_far > 1.5 * r_near + 1e-12


def _linear_bound(func, s):
    if _grows(func, 1):
        return math.inf, math.inf
    vals = np.abs(func(s))
    far = np.array([-1e8, 1e8])
    c2 = float((np.abs(func(far) - func(np.zeros(1))) / 1e8).max())
    c1 = float(max((vals - c2 * np.abs(s)).max(), 0.0))
    return c1, c2


def growth_admissibility_check(reaction, interval=None, samples=4001):
    """Growth constants of the kinetics, globally or on a bounded interval.

    With ``interval=None`` the bounds must hold on the whole real line; the
    functions are sampled on a logarithmic grid out to ``|s| = 1e8`` and a
    bound is declared infinite if ``|f1(s)|/|s|`` (or ``|g1(s)|/|s|``,
    ``|f2(s)|``) keeps increasing at the far end. On a bounded interval the
    bounded-function constants are reported (slope zero, intercept the
    sampled maximum).
    """
    notes = []
    if interval is None:
        pos = np.logspace(-3, 8, samples // 2)
        s = np.concatenate([-pos[::-1], [0.0], pos])
        c1, c2 = _linear_bound(reaction.f1, s)
        c3 = math.inf if _grows(reaction.f2, 0) else float(np.abs(reaction.f2(s)).max())
        c4, c5 = _linear_bound(reaction.g1, s)
        if math.isinf(c2):
            notes.append("f1 grows faster than linearly")
        if math.isinf(c3):
            notes.append("f2 is unbounded")
        if math.isinf(c5):
            notes.append("g1 grows faster than linearly")
        admissible = all(math.isfinite(c) for c in (c1, c2, c3, c4, c5))
        return GrowthReport(c1, c2, c3, c4, c5, (-math.inf, math.inf), admissible, notes)
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("interval must be increasing")
    s = np.linspace(lo, hi, samples)
    c1 = float(np.abs(reaction.f1(s)).max())
    c3 = float(np.abs(reaction.f2(s)).max())
    c4 = float(np.abs(reaction.g1(s)).max())
    notes.append("constants valid on the sampled interval only")
    return GrowthReport(c1, 0.0, c3, c4, 0.0, (lo, hi), True, notes)
