"""Closed-form perturbative estimates for the Raman transfer.

All frequencies are in rad/s.  The third-order Raman element links
``|e, 0, n>`` to ``|g, 2, n-1>`` through the intermediate states
``|g, 1, n>`` and ``|e, 1, n-1>``; second-order light shifts move both
ends of that transition and pull the resonance below ``delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf

from .fockspace import LEVELS
from .model import CUTOFF_WAISTS, DetuningSchedule, SystemParams


class SingularDetuningError(ValueError):
    """A perturbative denominator vanishes."""


class NoResonanceError(ValueError):
    """The shifted resonance condition has no root in the search interval."""


class PerturbativeRegimeWarning(UserWarning):
    """The detuning is too small for perturbation theory to be trusted."""


def _check_denominators(detuning: float, delta: float) -> None:
    if detuning == 0 or detuning + delta == 0:
        raise SingularDetuningError(
            f"detuning {detuning:g} rad/s makes a perturbative denominator vanish (delta = {delta:g})"
        )


def raman_coupling(n: int, detuning: float, delta: float, omega: float) -> float:
    """Third-order Raman matrix element ``omega^3 sqrt(2n) / (8 D (D + delta))``."""
    if n < 0:
        raise ValueError("photon number must be non-negative")
    _check_denominators(detuning, delta)
    if not (detuning > 0 and detuning + delta > 0):
        raise ValueError("the Raman element is defined for D > 0")
    return omega**3 * math.sqrt(2.0 * n) / (8.0 * detuning * (detuning + delta))


@dataclass(frozen=True)
class LevelShift:
    level: str
    n_a: int
    n_b: int
    shift: float

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")


def light_shift(level: str, n_a: float, n_b: float, detuning, delta: float, omega):
    """Second-order shift of ``|level, n_a, n_b>``.

    ``detuning`` and ``omega`` may be arrays (used for time integrals).
    """
    d = np.asarray(detuning, dtype=float)
    if np.any(d == 0) or np.any(d + delta == 0):
        raise SingularDetuningError("light shift diverges at D = 0 or D = -delta")
    w2 = 0.25 * np.asarray(omega, dtype=float) ** 2
    if level == "e":
        out = w2 * ((n_a + 1) / d + (n_b + 1) / (d + delta))
    elif level == "g":
        out = -w2 * (n_a / d + n_b / (d + delta))
    else:
        raise ValueError(f"unknown level {level!r}")
    return float(out) if out.ndim == 0 else out


def level_shift(level: str, n_a: int, n_b: int, detuning: float, delta: float, omega: float) -> LevelShift:
    return LevelShift(level, n_a, n_b, light_shift(level, n_a, n_b, detuning, delta, omega))


def resonance_mismatch(detuning: float, n: int, delta: float, omega: float) -> float:
    """Shifted energy of ``|e,0,n>`` minus that of ``|g,2,n-1>``.

    The bare energies are ``D - n delta`` and ``-(n - 1) delta``.
    """
    return (
        detuning - delta
        + light_shift("e", 0, n, detuning, delta, omega)
        - light_shift("g", 2, n - 1, detuning, delta, omega)
    )


def shifted_raman_resonance(n: int, omega: float, delta: float, grid: int = 4000) -> float:
    """Light-shift corrected Raman resonance on ``(0, delta]``.

    The mismatch is positive at ``delta`` and diverges to ``+inf`` at zero,
    so roots come in pairs.  The returned root is the one closest to
    ``delta``, found by walking down a grid and bisecting the first sign
    change.
    """
    if n < 1:
        raise ValueError("the Raman process needs at least one source photon")
    f = lambda d: resonance_mismatch(d, n, delta, omega)  # noqa: E731
    if abs(f(delta)) <= 1e-12 * delta:  # no coupling, bare resonance
        return float(delta)
    xs = np.linspace(delta, delta / grid, grid)
    prev = xs[0]
    for x in xs[1:]:
        if f(x) <= 0:
            return float(brentq(f, x, prev, xtol=1e-9 * delta))
        prev = x
    raise NoResonanceError(f"no shifted Raman resonance for n = {n} in (0, delta]")


def process_mismatch(initial: tuple[int, int, int], final: tuple[int, int, int], detuning: float,
                     delta: float, omega: float) -> float:
    """Shifted energy of ``initial`` minus that of ``final`` (labels ``(s, n_a, n_b)``)."""
    def energy(s, n_a, n_b):
        bare = detuning * s - delta * n_b
        return bare + light_shift("e" if s else "g", n_a, n_b, detuning, delta, omega)

    return energy(*initial) - energy(*final)


def shifted_fifth_order_resonance(n: int, omega: float, delta: float, grid: int = 4000) -> float:
    """Shifted resonance of ``|e,0,n> -> |g,3,n-2>``, searched downwards from ``2 delta``."""
    if n < 2:
        raise ValueError("the fifth-order process needs at least two source photons")
    f = lambda d: process_mismatch((1, 0, n), (0, 3, n - 2), d, delta, omega)  # noqa: E731
    if abs(f(2 * delta)) <= 1e-12 * delta:
        return float(2 * delta)
    xs = np.linspace(2 * delta, delta * (1 + 1.0 / grid), grid)
    prev = xs[0]
    for x in xs[1:]:
        if f(x) * f(prev) <= 0:
            return float(brentq(f, x, prev, xtol=1e-9 * delta))
        prev = x
    raise NoResonanceError(f"no shifted fifth-order resonance for n = {n} in (delta, 2 delta]")


def _gauss_integral(power: float, t0: float, t1: float, params: SystemParams) -> float:
    """``int_{t0}^{t1} exp(-power (v t / w)^2) dt`` restricted to the window."""
    lo, hi = params.window()
    a, b = max(t0, lo), min(t1, hi)
    if b <= a:
        return 0.0
    k = math.sqrt(power) * params.velocity / params.waist
    return math.sqrt(math.pi) / (2.0 * k) * (erf(k * b) - erf(k * a))


def ramsey_phase(n_a: float, n_b: float, schedule: DetuningSchedule, params: SystemParams,
                 t_freeze: float) -> float:
    """Light-shift phase picked up by ``|g, n_a, n_b>`` after ``t_freeze``.

    The lower level is shifted by ``-(W^2/4)(n_a/D + n_b/(D + delta))``;
    the probe level is taken as unshifted, so the phase is minus the
    integrated shift up to the end of the coupling window.
    """
    t_exit = params.window()[1]
    if not schedule.covers(t_freeze, t_exit):
        raise ValueError("schedule must cover the remaining transit")
    phase = 0.0
    for a, b, d in schedule.segments:
        lo, hi = max(a, t_freeze), min(b, t_exit)
        if hi <= lo:
            continue
        _check_denominators(d, params.delta)
        weight = 0.25 * params.omega0**2 * _gauss_integral(2.0, lo, hi, params)
        phase += weight * (n_a / d + n_b / (d + params.delta))
    return phase


def effective_raman_time(params: SystemParams) -> float:
    """``int (W(t)/W0)^3 dt`` over the window, close to ``w sqrt(pi/3) / v``."""
    lo, hi = params.window()
    return _gauss_integral(3.0, lo, hi, params)


def perturbative_transfer(n: int, params: SystemParams, detuning: float) -> float:
    """Two-level estimate ``sin^2(theta/2)`` with ``theta`` the integrated Raman element."""
    if not 0 < detuning <= params.delta:
        raise ValueError("detuning must lie in (0, delta]")
    if detuning < 2.0 * params.omega0:
        warnings.warn(
            f"D = {detuning:.3g} rad/s is below 2 W0; perturbative estimate unreliable",
            PerturbativeRegimeWarning,
            stacklevel=2,
        )
    if n == 0:
        return 0.0
    theta = raman_coupling(n, detuning, params.delta, params.omega0) * effective_raman_time(params)
    return math.sin(0.5 * theta) ** 2


# -- exact dressed levels -----------------------------------------------------

def excitation_block(n_exc: int, detuning: float, delta: float, omega: float, n_max_a: int | None = None):
    """Hamiltonian of the block with ``s + n_a + n_b = n_exc`` and its labels."""
    if n_max_a is None:
        n_max_a = n_exc
    labels = [(s, na, n_exc - s - na) for s in (0, 1) for na in range(n_max_a + 1) if n_exc - s - na >= 0]
    index = {lab: i for i, lab in enumerate(labels)}
    h = np.zeros((len(labels), len(labels)))
    for i, (s, na, nb) in enumerate(labels):
        h[i, i] = detuning * s - delta * nb
        if s == 1:
            for j, amp in ((index.get((0, na + 1, nb)), math.sqrt(na + 1)),
                           (index.get((0, na, nb + 1)), math.sqrt(nb + 1))):
                if j is not None:
                    h[i, j] = h[j, i] = 0.5 * omega * amp
    return h, labels


def raman_splitting(n: int, detuning: float, delta: float, omega: float) -> float:
    """Energy gap between the two dressed levels carrying ``|e,0,n>`` and ``|g,2,n-1>``."""
    h, labels = excitation_block(n + 1, detuning, delta, omega)
    w, v = np.linalg.eigh(h)
    weight = np.abs(v[labels.index((1, 0, n))]) ** 2 + np.abs(v[labels.index((0, 2, n - 1))]) ** 2
    hi, lo = np.argsort(weight)[-2:]
    return float(abs(w[hi] - w[lo]))


def avoided_crossing(n: int, delta: float, omega: float, bracket: tuple[float, float] | None = None):
    """Locate the minimum Raman splitting by exact diagonalization.

    Returns ``(detuning, splitting)`` in rad/s.
    """
    if n < 1:
        raise ValueError("the Raman process needs at least one source photon")
    lo, hi = bracket if bracket is not None else (0.15 * delta, 0.999 * delta)
    res = minimize_scalar(lambda d: raman_splitting(n, d, delta, omega), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-7 * delta})
    return float(res.x), float(res.fun)


__all__ = [
    "CUTOFF_WAISTS",
    "LevelShift",
    "NoResonanceError",
    "PerturbativeRegimeWarning",
    "SingularDetuningError",
    "avoided_crossing",
    "effective_raman_time",
    "excitation_block",
    "level_shift",
    "light_shift",
    "perturbative_transfer",
    "process_mismatch",
    "shifted_fifth_order_resonance",
    "raman_coupling",
    "raman_splitting",
    "ramsey_phase",
    "resonance_mismatch",
    "shifted_raman_resonance",
]
