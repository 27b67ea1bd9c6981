"""Time integration of Schrodinger and Lindblad dynamics.

Two engines are provided:

* :func:`evolve_unitary` / :func:`evolve_density` integrate any
  :class:`~cavity_raman.model.LindbladModel` on dense matrices.
* :func:`evolve_structured` handles models built by
  :func:`~cavity_raman.model.build_lindblad_model`.  It propagates only the
  excitation-diagonal blocks in the interaction picture (see
  :mod:`cavity_raman.sector`) with the compiled kernel when available.

The two engines are independent and are cross-checked in the tests.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import _backend
from .fockspace import (
    TRACE_TOL,
    POSITIVITY_TOL,
    DensityOperator,
    FockSpaceConfig,
    StateVector,
)
from .model import LindbladModel
from .sector import SectorLayout, decay_rates

log = logging.getLogger(__name__)


class IntegrationAccuracyError(RuntimeError):
    """The integrated state violates trace or positivity tolerances."""


@dataclass(frozen=True)
class StepperSettings:
    dt: float = 0.025e-6
    method: str = "rk4"
    tol_rel: float = 1e-8
    # step for stretches where the coupling vanishes (structured engine only)
    dt_idle: float = 5e-6
    backend: str | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.dt_idle > 0 and self.tol_rel > 0):
            raise ValueError("step sizes and tolerance must be positive")
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class ObservableTrace:
    """Per-step record of populations and diagnostics."""

    every: int = 1
    rows: list[tuple[float, ...]] = field(default_factory=list)

    COLUMNS = ("t", "p_e", "p_g", "n_a", "n_b", "trace", "min_eig")

    def record(self, t: float, populations: np.ndarray, space: FockSpaceConfig, min_eig: float) -> None:
        p = populations.reshape(space.dims)
        tr = float(p.sum())
        n_a = float(np.tensordot(p.sum(axis=(0, 2)), np.arange(space.dim_a), 1))
        n_b = float(np.tensordot(p.sum(axis=(0, 1)), np.arange(space.dim_b), 1))
        self.rows.append((t, float(p[1].sum()), float(p[0].sum()), n_a, n_b, tr, min_eig))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows:
                w.writerow([f"{x:.12g}" for x in row])


def _grid(t0: float, t1: float, dt: float) -> tuple[int, float]:
    if not t1 > t0:
        raise ValueError(f"t1 = {t1} must exceed t0 = {t0}")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    return n, (t1 - t0) / n


def _rk4(f: Callable, y: np.ndarray, t: float, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_unitary(psi0: StateVector, model: LindbladModel, t0: float, t1: float,
                   settings: StepperSettings = StepperSettings()) -> StateVector:
    """Integrate ``d psi/dt = -i H(t) psi``; dissipators are ignored.

    The norm is never renormalized; drift above ``1e-8`` per ms is logged.
    """
    if abs(psi0.norm() - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")

    def f(t, y):
        return -1j * (model.hamiltonian(t) @ y)

    y = np.array(psi0.amplitudes)
    if settings.method == "adaptive":
        sol = solve_ivp(f, (t0, t1), y, method="DOP853", rtol=settings.tol_rel, atol=settings.tol_rel * 1e-3)
        if sol.status != 0:
            raise IntegrationAccuracyError(f"adaptive integration failed: {sol.message}")
        y = sol.y[:, -1]
    else:
        n, h = _grid(t0, t1, settings.dt)
        for k in range(n):
            y = _rk4(f, y, t0 + k * h, h)
    drift = abs(np.linalg.norm(y) - 1.0)
    if drift > 1e-8 * max(1.0, (t1 - t0) / 1e-3):
        log.warning("norm drift %.2e over %.3g s; consider a smaller step", drift, t1 - t0)
    return StateVector(y, psi0.space, check=False)


def _lindblad_rhs(model: LindbladModel):
    ops = [(d.rate, d.operator.matrix) for d in model.dissipators if d.rate > 0]
    pre = [(rate, L, L.conj().T, L.conj().T @ L) for rate, L in ops]

    def f(t, rho):
        h = model.hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        for rate, L, Ld, LdL in pre:
            out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
        return out

    return f


def _check_final(trace0: float, trace1: float, min_eig: float) -> None:
    if abs(trace1 - trace0) > TRACE_TOL:
        raise IntegrationAccuracyError(f"trace drifted by {trace1 - trace0:.2e}; reduce dt")
    if min_eig < -POSITIVITY_TOL:
        raise IntegrationAccuracyError(f"negative eigenvalue {min_eig:.2e}; reduce dt")


def evolve_density(rho0: DensityOperator, model: LindbladModel, t0: float, t1: float,
                   settings: StepperSettings = StepperSettings(),
                   trace: ObservableTrace | None = None) -> DensityOperator:
    """Integrate the Lindblad equation on the full density matrix."""
    f = _lindblad_rhs(model)
    space = model.space
    rho = np.array(rho0.matrix)
    tr0 = rho0.trace()
    if settings.method == "adaptive":
        dim = rho.shape[0]

        def fv(t, y):
            return f(t, y.reshape(dim, dim)).ravel()

        sol = solve_ivp(fv, (t0, t1), rho.ravel(), method="DOP853",
                        rtol=settings.tol_rel, atol=settings.tol_rel * 1e-3)
        if sol.status != 0:
            raise IntegrationAccuracyError(f"adaptive integration failed: {sol.message}")
        rho = sol.y[:, -1].reshape(dim, dim)
        rho = 0.5 * (rho + rho.conj().T)
    else:
        n, h = _grid(t0, t1, settings.dt)
        for k in range(n):
            rho = _rk4(f, rho, t0 + k * h, h)
            rho = 0.5 * (rho + rho.conj().T)
            if trace is not None and (k + 1) % trace.every == 0:
                trace.record(t0 + (k + 1) * h, np.diag(rho).real, space, float("nan"))
    out = DensityOperator(rho, rho0.dims, check=False)
    _check_final(tr0, out.trace(), out.min_eigenvalue())
    return out


# -- structured engine --------------------------------------------------------

@functools.lru_cache(maxsize=16)
def sector_layout(space: FockSpaceConfig) -> SectorLayout:
    return SectorLayout(space)


@dataclass
class SectorState:
    """Excitation-diagonal state held in the interaction picture.

    ``phase_a`` is the accumulated detuning phase and ``elapsed`` the time
    since the picture's reference instant.
    """

    layout: SectorLayout
    flat: np.ndarray
    delta: float
    phase_a: float = 0.0
    elapsed: float = 0.0

    @classmethod
    def from_density(cls, rho: DensityOperator, delta: float) -> "SectorState":
        layout = sector_layout(rho.space)
        return cls(layout, layout.from_matrix(rho.matrix), delta)

    @property
    def space(self) -> FockSpaceConfig:
        return self.layout.space

    def populations(self) -> np.ndarray:
        return np.clip(self.layout.diagonal(self.flat), 0.0, None)

    def population_tensor(self) -> np.ndarray:
        return self.populations().reshape(self.space.dims)

    def trace(self) -> float:
        return self.layout.trace(self.flat)

    def min_eigenvalue(self) -> float:
        return self.layout.min_eigenvalue(self.flat)

    def to_density(self, check: bool = True) -> DensityOperator:
        """Dense state in the rotating frame; inter-block coherences are zero."""
        phases = self.layout.interaction_phases(self.phase_a, self.elapsed, self.delta)
        return self.layout.to_density(self.flat * phases, check=check)

    def expect_excitation(self) -> float:
        lay = self.layout
        return float(np.sum(self.populations()[lay.perm] * (lay.s + lay.na + lay.nb)))


def _pieces(model: LindbladModel, t0: float, t1: float, settings: StepperSettings):
    cuts = {t0, t1}
    for a, b, _ in model.schedule.segments:
        cuts.update(x for x in (a, b) if t0 < x < t1)
    w0, w1 = model.params.window()
    if model.coupling is None:
        cuts.update(x for x in (w0, w1) if t0 < x < t1)
    cuts = sorted(cuts)
    for a, b in zip(cuts[:-1], cuts[1:]):
        idle = model.coupling is None and (b <= w0 or a >= w1)
        yield a, b, (settings.dt_idle if idle else settings.dt)


def evolve_structured(state: SectorState | DensityOperator, model: LindbladModel, t0: float, t1: float,
                      settings: StepperSettings = StepperSettings(),
                      trace: ObservableTrace | None = None) -> SectorState:
    """Propagate the excitation-diagonal blocks from ``t0`` to ``t1``.

    Exact for every observable that commutes with the total excitation
    number (populations, photon statistics, atomic levels).
    """
    if model.params is None or model.schedule is None:
        raise ValueError("structured propagation needs a model from build_lindblad_model")
    if settings.method != "rk4":
        raise ValueError("the structured engine only supports fixed-step RK4")
    if not model.schedule.covers(t0, t1):
        raise ValueError(f"schedule does not cover [{t0:.3e}, {t1:.3e}]")
    params = model.params
    if isinstance(state, DensityOperator):
        state = SectorState.from_density(state, params.delta)
    else:
        state = SectorState(state.layout, state.flat.copy(), state.delta, state.phase_a, state.elapsed)
    layout, flat = state.layout, state.flat
    rates = decay_rates(params.kappa_a, params.n_th_a, params.kappa_b, params.n_th_b)
    rates = rates if model.dissipators else np.zeros(4)
    tr0 = layout.trace(flat)
    # the picture keeps its original reference: phase_a(t) = state.phase_a + int_{t0}^{t} D
    base_phase, base_elapsed = state.phase_a, state.elapsed

    for a, b, step in _pieces(model, t0, t1, settings):
        n, h = _grid(a, b, step)
        chunk = n if trace is None else trace.every
        done = 0
        while done < n:
            m = min(chunk, n - done)
            ts = a + h * (done + 0.5 * np.arange(2 * m + 1))
            half_om = 0.5 * model.coupling_values(ts)
            ph_a = base_phase + model.schedule.phase(ts, t_ref=t0)
            ph_b = ph_a + params.delta * (base_elapsed + ts - t0)
            _backend.rk4_steps(layout, flat, half_om, ph_a, ph_b, rates, h, settings.backend)
            done += m
            if trace is not None:
                trace.record(a + done * h, layout.diagonal(flat), layout.space, float("nan"))

    state.phase_a = base_phase + model.schedule.phase(t1, t_ref=t0)
    state.elapsed = base_elapsed + (t1 - t0)
    _check_final(tr0, layout.trace(flat), layout.min_eigenvalue(flat))
    return state
