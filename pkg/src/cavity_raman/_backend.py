"""Selects the compiled propagator when available, else the numpy one.

Set ``CAVITY_RAMAN_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from .sector import SectorLayout, rk4_steps_numpy

log = logging.getLogger(__name__)

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None

COMPILED_AVAILABLE = _kernel is not None


def default_backend() -> str:
    if os.environ.get("CAVITY_RAMAN_PURE_PYTHON", "") not in ("", "0"):
        return "python"
    return "compiled" if COMPILED_AVAILABLE else "python"


def rk4_steps(layout: SectorLayout, rho: np.ndarray, half_om: np.ndarray, phase_a: np.ndarray,
              phase_b: np.ndarray, rates: np.ndarray, dt: float, backend: str | None = None) -> None:
    backend = backend or default_backend()
    if backend == "compiled":
        if _kernel is None:
            raise RuntimeError("compiled kernel requested but cavity_raman._kernel is not built")
        g = layout.gather_tables()
        rates = np.asarray(rates, float)
        _kernel.rk4_steps(
            rho, g["comm_idx"], g["comm_coef"], g["comm_sel"], g["jump_idx"],
            np.ascontiguousarray(g["jump_fac"] * rates[:, None]), layout.damping(rates),
            g["target"], g["mirror"], g["diag"].view(np.uint8),
            np.ascontiguousarray(half_om, float), np.ascontiguousarray(phase_a, float),
            np.ascontiguousarray(phase_b, float), dt,
        )
    elif backend == "python":
        rk4_steps_numpy(layout, rho, half_om, phase_a, phase_b, rates, dt)
    else:
        raise ValueError(f"unknown backend {backend!r}")
