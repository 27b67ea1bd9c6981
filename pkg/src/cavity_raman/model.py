"""Atom-cavity generator in the frame rotating at the mode-a frequency.

Units are seconds and rad/s throughout.  ``detuning`` is the atomic
frequency minus the mode-a frequency, mode b sits ``delta`` below mode a::

    H = D(t) |e><e| - delta n_b + W(t)/2 (a s+ + a+ s- + b s+ + b+ s-)

with the Gaussian transit coupling ``W(t) = omega0 exp(-(v t / w)^2)``
cut to zero beyond three waists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .fockspace import (
    FockSpaceConfig,
    LinearOperator,
    build_atomic_operator,
    build_mode_operator,
)

TWO_PI = 2.0 * math.pi
CUTOFF_WAISTS = 3.0


def khz(value: float) -> float:
    """Convert a frequency in kHz (divided by 2 pi) to rad/s."""
    return TWO_PI * 1e3 * value


def to_khz(value: float) -> float:
    return value / (TWO_PI * 1e3)


@dataclass(frozen=True)
class SystemParams:
    omega0: float = khz(49.0)
    delta: float = khz(128.0)
    waist: float = 6e-3
    velocity: float = 200.0
    kappa_a: float = 1.0 / 1.2e-3
    kappa_b: float = 1.0 / 0.9e-3
    n_th_a: float = 1.0
    n_th_b: float = 1.0

    def __post_init__(self):
        for name in ("delta", "waist", "velocity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        # zero coupling or zero damping are legitimate limiting cases
        for name in ("omega0", "kappa_a", "kappa_b", "n_th_a", "n_th_b"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and non-negative")

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def transit_time(self) -> float:
        """Time to cross one waist, ``w / v``."""
        return self.waist / self.velocity

    def window(self) -> tuple[float, float]:
        """Coupling window ``[-3w/v, +3w/v]`` centred on the cavity axis."""
        half = CUTOFF_WAISTS * self.transit_time
        return -half, half


def coupling_at(t, params: SystemParams):
    """Vacuum Rabi frequency seen by the atom at time ``t`` (scalar or array)."""
    x = params.velocity * np.asarray(t, dtype=float) / params.waist
    out = np.where(np.abs(x) <= CUTOFF_WAISTS, params.omega0 * np.exp(-x * x), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DetuningSchedule:
    """Piecewise-constant atom-cavity detuning.

    Segments are ``(t_start, t_end, value)`` and must tile the covered
    interval.  Lookups use closed-open intervals; the final segment also
    contains its end point.
    """

    segments: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(d)) for a, b, d in self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        for (a, b, _), nxt in zip(segs, segs[1:] + (None,)):
            if not b > a:
                raise ValueError(f"segment [{a}, {b}) is empty")
            if nxt is not None and nxt[0] != b:
                raise ValueError("schedule segments must be contiguous")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, value: float, t0: float, t1: float) -> "DetuningSchedule":
        return cls(((t0, t1, value),))

    @classmethod
    def switched(cls, before: float, after: float, t_switch: float, t0: float, t1: float) -> "DetuningSchedule":
        if not t0 < t_switch < t1:
            return cls.constant(before if t_switch >= t1 else after, t0, t1)
        return cls(((t0, t_switch, before), (t_switch, t1, after)))

    @property
    def start(self) -> float:
        return self.segments[0][0]

    @property
    def end(self) -> float:
        return self.segments[-1][1]

    def covers(self, t0: float, t1: float) -> bool:
        return self.start <= t0 and t1 <= self.end

    def _edges(self):
        starts = np.array([s[0] for s in self.segments])
        values = np.array([s[2] for s in self.segments])
        return starts, values

    def phase(self, t, t_ref: float | None = None):
        """Integral of the detuning from ``t_ref`` (default: schedule start) to ``t``."""
        t = np.asarray(t, dtype=float)
        starts, values = self._edges()
        ends = np.array([s[1] for s in self.segments])
        # accumulated phase at each segment start
        acc = np.concatenate([[0.0], np.cumsum(values * (ends - starts))[:-1]])
        k = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)
        out = acc[k] + values[k] * (t - starts[k])
        if t_ref is not None:
            out = out - self.phase(t_ref)
        return float(out) if out.ndim == 0 else out


def detuning_at(t: float, schedule: DetuningSchedule) -> float:
    slack = 1e-9 * (schedule.end - schedule.start)  # rounding of stage times
    if not schedule.start - slack <= t <= schedule.end + slack:
        raise ValueError(f"t = {t:.3e} s outside schedule [{schedule.start:.3e}, {schedule.end:.3e}]")
    for t_start, t_end, value in schedule.segments:
        if t < t_end:
            return value
    return schedule.segments[-1][2]


class Dissipator(NamedTuple):
    name: str
    rate: float
    operator: LinearOperator


def _coupling_operator(space: FockSpaceConfig) -> LinearOperator:
    a = build_mode_operator("a", "annihilate", space)
    b = build_mode_operator("b", "annihilate", space)
    up = build_atomic_operator("raise", space)
    v = (a @ up) + (b @ up)
    return v + v.dag()


def hamiltonian_at(
    t: float,
    schedule: DetuningSchedule,
    params: SystemParams,
    space: FockSpaceConfig,
    coupling: Callable[[float], float] | None = None,
) -> LinearOperator:
    """``H(t) / hbar`` in rad/s."""
    omega = coupling(t) if coupling is not None else coupling_at(t, params)
    return _HamiltonianParts(space).at(detuning_at(t, schedule), params.delta, omega)


class _HamiltonianParts:
    """Cached static pieces of the Hamiltonian for one truncated space."""

    def __init__(self, space: FockSpaceConfig):
        self.space = space
        self.p_e = build_atomic_operator("project_e", space).matrix
        self.n_b = build_mode_operator("b", "number", space).matrix
        self.coupling = _coupling_operator(space).matrix

    def matrix(self, detuning: float, delta: float, omega: float) -> np.ndarray:
        h = detuning * self.p_e - delta * self.n_b + 0.5 * omega * self.coupling
        return 0.5 * (h + h.conj().T)

    def at(self, detuning: float, delta: float, omega: float) -> LinearOperator:
        return LinearOperator(self.matrix(detuning, delta, omega), self.space)


def lindblad_dissipators(params: SystemParams, space: FockSpaceConfig) -> list[Dissipator]:
    """Thermal damping of both modes, as ``(name, rate, jump operator)``."""
    out = []
    for mode, kappa, n_th in (("a", params.kappa_a, params.n_th_a), ("b", params.kappa_b, params.n_th_b)):
        lower = build_mode_operator(mode, "annihilate", space)
        out.append(Dissipator(f"{mode}-loss", kappa * (1.0 + n_th), lower))
        out.append(Dissipator(f"{mode}-gain", kappa * n_th, lower.dag()))
    return out


@dataclass(frozen=True)
class LindbladModel:
    """Time-dependent generator plus collapse channels.

    ``hamiltonian(t)`` returns a dense ``H / hbar`` matrix.  Models built by
    :func:`build_lindblad_model` also keep ``params``/``schedule`` so the
    structured propagator can recognise them.
    """

    space: FockSpaceConfig
    hamiltonian: Callable[[float], np.ndarray]
    dissipators: Sequence[Dissipator] = ()
    params: SystemParams | None = None
    schedule: DetuningSchedule | None = None
    coupling: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        for d in self.dissipators:
            if d.operator.space != self.space:
                raise ValueError(f"dissipator {d.name} lives on a different space")

    def coupling_values(self, t):
        if self.coupling is not None:
            return np.vectorize(self.coupling, otypes=[float])(t)
        return coupling_at(t, self.params)

    def without_dissipation(self) -> "LindbladModel":
        return replace(self, dissipators=())


def build_lindblad_model(
    params: SystemParams,
    schedule: DetuningSchedule,
    space: FockSpaceConfig,
    coupling: Callable[[float], float] | None = None,
) -> LindbladModel:
    parts = _HamiltonianParts(space)
    omega = coupling if coupling is not None else (lambda t: coupling_at(t, params))

    def hamiltonian(t: float) -> np.ndarray:
        return parts.matrix(detuning_at(t, schedule), params.delta, omega(t))

    dissipators = [d for d in lindblad_dissipators(params, space) if d.rate > 0]
    return LindbladModel(space, hamiltonian, dissipators, params, schedule, coupling)
