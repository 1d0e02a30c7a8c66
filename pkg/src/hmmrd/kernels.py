"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` module. Set ``HMMRD_PURE_PYTHON=1`` to force the
fallback. Both expose ``hmm_local_triplets`` and ``diamond_gradients``.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels


def _default_backend():
    if os.environ.get("HMMRD_PURE_PYTHON", "") == "1" or _ckernels is None:
        return "python"
    return "cython"


_active = _default_backend()


def backend():
    """Name of the active kernel backend (``"cython"`` or ``"python"``)."""
    return _active


def set_backend(name):
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}")
    _active = name


def _mesh_args(mesh):
    # mesh arrays are read-only, so the packed arguments can be cached on it
    args = getattr(mesh, "_kernel_args", None)
    if args is None:
        args = _pack(mesh)
        mesh._kernel_args = args
    return args


def _pack(mesh):
    return (
        np.ascontiguousarray(mesh.cell_ptr, dtype=np.int64),
        np.ascontiguousarray(mesh.inc_face, dtype=np.int64),
        np.ascontiguousarray(mesh.inc_normal),
        np.ascontiguousarray(mesh.inc_measure),
        np.ascontiguousarray(mesh.inc_dist),
        np.ascontiguousarray(mesh.face_center[mesh.inc_face]),
        np.ascontiguousarray(mesh.cell_center),
        np.ascontiguousarray(mesh.cell_area),
    )


def hmm_local_triplets(mesh, mu, beta=1.0, backend=None):
    mod = BACKENDS[backend or _active]
    return mod.hmm_local_triplets(*_mesh_args(mesh), float(mu), float(beta))


def diamond_gradients(mesh, phi, backend=None):
    mod = BACKENDS[backend or _active]
    return mod.diamond_gradients(*_mesh_args(mesh), np.ascontiguousarray(phi, dtype=float))
