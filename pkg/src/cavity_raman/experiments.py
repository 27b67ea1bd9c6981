"""Simulated protocols: detuning scans, two-photon preparation, Ramsey probe.

Every protocol starts with an atom entering the coupling window at
``-3w/v`` and ends when it leaves at ``+3w/v``.  Field states are described
by :class:`FieldSpec`; the Hilbert space is sized from them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import analytic
from .evolve import SectorState, StepperSettings, evolve_structured
from .fockspace import (
    DEGENERATE_PROB,
    TRUNCATION_TOL,
    DegenerateConditionError,
    DensityOperator,
    FockSpaceConfig,
    compose_initial_state,
    default_cutoff,
    make_field_state,
    required_cutoff,
)
from .model import DetuningSchedule, SystemParams, build_lindblad_model, khz

log = logging.getLogger(__name__)

REFERENCE_VELOCITY = 200.0


class FitError(ValueError):
    """A fringe fit is ill-conditioned."""


# -- inputs -------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Initial state of one mode.

    ``kind`` is ``'fock'``, ``'coherent'`` or ``'thermal'``; ``mean`` is the
    photon number (Fock) or mean photon number.
    """

    kind: str = "fock"
    mean: float = 0.0
    n_max: int | None = None

    def __post_init__(self):
        if self.kind not in ("fock", "coherent", "thermal"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.mean < 0:
            raise ValueError("mean photon number must be non-negative")
        if self.kind == "fock" and self.mean != int(self.mean):
            raise ValueError("a Fock state needs an integer photon number")

    @classmethod
    def vacuum(cls) -> "FieldSpec":
        return cls("fock", 0)

    def _value(self):
        return math.sqrt(self.mean) if self.kind == "coherent" else self.mean

    def cutoff(self) -> int:
        return self.n_max if self.n_max is not None else default_cutoff(self.kind, self._value())

    def state(self, n_max: int | None = None) -> DensityOperator:
        return make_field_state(self.kind, self._value(), self.cutoff() if n_max is None else n_max)


@dataclass(frozen=True)
class ImperfectionModel:
    """Classical imperfections layered on the ideal simulation."""

    p_enter_g: float = 0.0
    background_floor: float = 0.0
    ramsey_contrast: float = 1.0
    mean_atoms: float = 0.0
    thermal_growth: float = 0.0

    def __post_init__(self):
        for name in ("p_enter_g", "background_floor"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.ramsey_contrast <= 1.0:
            raise ValueError("ramsey_contrast must lie in (0, 1]")
        if self.mean_atoms < 0 or self.thermal_growth < 0:
            raise ValueError("mean_atoms and thermal_growth must be non-negative")

    @property
    def is_identity(self) -> bool:
        return self == ImperfectionModel()

    def atom_weights(self) -> tuple[float, float]:
        """Weights of one- and two-atom events given at least one atom (three or more dropped)."""
        w1, w2 = 1.0, 0.5 * self.mean_atoms
        return w1 / (w1 + w2), w2 / (w1 + w2)


def default_settings(params: SystemParams) -> StepperSettings:
    """RK4 step shrunk as ``v^(1/4)`` so slow transits keep the same global error."""
    scale = min(1.0, (params.velocity / REFERENCE_VELOCITY) ** 0.25)
    return StepperSettings(dt=StepperSettings().dt * scale)


def _hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _params_dict(params: SystemParams) -> dict:
    return dataclasses.asdict(params)


def _map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map; worker threads only change the evaluation order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- single transit -----------------------------------------------------------

def _initial(atom_level, field_a: DensityOperator, field_b: DensityOperator) -> DensityOperator:
    return compose_initial_state(atom_level, field_a, field_b)


def _as_field(f, n_max: int | None = None) -> DensityOperator:
    return f.state(n_max) if isinstance(f, FieldSpec) else f


def _transit(rho0: DensityOperator | SectorState, schedule: DetuningSchedule, params: SystemParams,
             settings: StepperSettings | None, space: FockSpaceConfig) -> SectorState:
    t0, t1 = params.window()
    if not schedule.covers(t0, t1):
        raise ValueError("schedule must cover the coupling window [-3w/v, 3w/v]")
    model = build_lindblad_model(params, schedule, space)
    return evolve_structured(rho0, model, t0, t1, settings or default_settings(params))


def run_transit(atom_level, field_a, field_b, schedule: DetuningSchedule, params: SystemParams,
                settings: StepperSettings | None = None) -> DensityOperator:
    """Full Lindblad evolution of one atom across the cavity; returns the exit state."""
    rho0 = _initial(atom_level, _as_field(field_a), _as_field(field_b))
    return _transit(rho0, schedule, params, settings, rho0.space).to_density()


def _tail_check(pops: np.ndarray, what: str) -> None:
    tail = max(pops[:, -1, :].sum(), pops[:, :, -1].sum())
    if tail > TRUNCATION_TOL:
        log.warning("%s: %.1e of the population sits at the photon cutoff", what, tail)


def _excited_with_field(first: SectorState, level: int) -> DensityOperator:
    """Fresh excited atom with the field left by ``first`` given its level (unnormalized)."""
    rho = first.to_density(check=False)
    n_f = rho.dim // 2
    block = rho.matrix[level * n_f:(level + 1) * n_f, level * n_f:(level + 1) * n_f]
    return DensityOperator(np.kron(np.diag([0.0, 1.0]), block), rho.dims, check=False)


def _pair_detection(*groups: Sequence[SectorState]):
    """Combine second transits when one of the two atoms, chosen at random, is detected.

    Each group holds the second atom's final state given that the first
    one left in g and in e.  Returns, per group, the unnormalized field
    populations of g detections, then the detection probability of the
    last group.
    """
    outs = []
    for after_g, after_e in groups:
        pg, pe = after_g.population_tensor(), after_e.population_tensor()
        outs.append(0.5 * (pg.sum(axis=0) + pg[0] + pe[0]))
    return (*outs, float(outs[-1].sum()))


# -- detuning scans -----------------------------------------------------------

@dataclass(frozen=True)
class ScanSpec:
    """Constant-detuning transits over a grid of detunings (rad/s)."""

    start: float
    stop: float
    step: float
    velocity: float = 200.0
    field_a: FieldSpec = FieldSpec("thermal", 1.0)
    field_b: FieldSpec = FieldSpec("thermal", 1.0)
    relaxation: bool = True
    imperfections: ImperfectionModel | None = None
    params: SystemParams = SystemParams()
    atom_level: str = "e"
    settings: StepperSettings | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("scan step must be positive")
        if not self.stop >= self.start:
            raise ValueError("scan range is empty")

    def detunings(self) -> np.ndarray:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return self.start + self.step * np.arange(n + 1)

    def physical_params(self) -> SystemParams:
        p = self.params.replace(velocity=self.velocity)
        return p if self.relaxation else p.replace(kappa_a=0.0, kappa_b=0.0)

    def space(self) -> FockSpaceConfig:
        """Field cutoffs plus room for emitted photons and for the bath.

        A mode given an explicit ``n_max`` keeps it.  Otherwise mode a can
        take the two Raman photons, mode b one emitted photon, and both the
        thermal population fed in by the bath during the transit.
        """
        p = self.physical_params()
        t0, t1 = p.window()
        out = []
        for f, kappa, n_th, room in ((self.field_a, p.kappa_a, p.n_th_a, 4), (self.field_b, p.kappa_b, p.n_th_b, 2)):
            if f.n_max is not None:
                out.append(f.n_max)
                continue
            fed = n_th * -math.expm1(-kappa * (t1 - t0))
            out.append(max(f.cutoff() + room // 2, room, required_cutoff("thermal", fed)))
        return FockSpaceConfig(*out)

    def stepper(self) -> StepperSettings:
        return self.settings or default_settings(self.physical_params())

    def describe(self) -> dict:
        out = dataclasses.asdict(self)
        out["params"] = _params_dict(self.physical_params())
        out["settings"] = dataclasses.asdict(self.stepper())
        return out


@dataclass(frozen=True)
class ScanResult:
    detunings: np.ndarray
    p_g: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)
    spec: ScanSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if np.any(self.p_g < -1e-12) or np.any(self.p_g > 1 + 1e-12):
            raise ValueError("P_g outside [0, 1]")

    def rows(self):
        return list(zip(self.detunings, self.p_g))

    def error_bars(self, shots: int = 1000) -> np.ndarray:
        """Binomial standard deviation for ``shots`` detected atoms per point."""
        p = np.clip(self.p_g, 0.0, 1.0)
        return np.sqrt(p * (1.0 - p) / shots)

    def local_maxima(self) -> list[tuple[float, float]]:
        p = self.p_g
        idx = [i for i in range(len(p)) if (i == 0 or p[i] > p[i - 1]) and (i == len(p) - 1 or p[i] >= p[i + 1])]
        return [(float(self.detunings[i]), float(p[i])) for i in idx]

    def maximum_near(self, centre: float, half_width: float) -> tuple[float, float]:
        sel = np.abs(self.detunings - centre) <= half_width
        if not np.any(sel):
            raise ValueError("no scan point in the requested window")
        i = np.flatnonzero(sel)[np.argmax(self.p_g[sel])]
        return float(self.detunings[i]), float(self.p_g[i])


class _PointEvaluator:
    """Computes P_g at one detuning for a fixed scan specification."""

    def __init__(self, spec: ScanSpec):
        self.spec = spec
        self.params = spec.physical_params()
        self.space = spec.space()
        self.settings = spec.stepper()
        self.rho0 = _initial(spec.atom_level, spec.field_a.state(self.space.n_max_a),
                             spec.field_b.state(self.space.n_max_b))

    def final(self, detuning: float, rho0=None) -> SectorState:
        t0, t1 = self.params.window()
        sched = DetuningSchedule.constant(detuning, t0, t1)
        return _transit(self.rho0 if rho0 is None else rho0, sched, self.params, self.settings, self.space)

    def __call__(self, detuning: float) -> float:
        return float(self.final(detuning).population_tensor()[0].sum())


def scan_pg_vs_delta(spec: ScanSpec, threads: int = 1) -> ScanResult:
    """``P_g`` after the transit for each detuning of the scan grid."""
    evaluate = _PointEvaluator(spec)
    grid = spec.detunings()
    p_g = np.array(_map(evaluate, list(grid), threads))
    meta = {
        "kind": "scan",
        "truncation": [evaluate.space.n_max_a, evaluate.space.n_max_b],
        "settings_hash": _hash(spec.describe()),
    }
    result = ScanResult(grid, np.clip(p_g, 0.0, 1.0), meta, spec)
    if spec.imperfections is not None and not spec.imperfections.is_identity:
        result = apply_imperfections(result, spec.imperfections)
    return result


def refine_maximum(spec: ScanSpec, lo: float, hi: float, xatol: float = khz(0.1)) -> tuple[float, float]:
    """Locate the largest ``P_g`` in ``[lo, hi]`` with a bounded scalar search."""
    evaluate = _PointEvaluator(spec)
    res = minimize_scalar(lambda d: -evaluate(d), bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    return float(res.x), float(-res.fun)


# -- two-photon preparation ---------------------------------------------------

@dataclass(frozen=True)
class PrepInputs:
    params: SystemParams
    source_mean: float = 6.0
    velocity: float = 170.0
    t_switch: float = 5e-6
    detuning_before: float = khz(65.0)
    detuning_after: float = khz(135.0)
    n_max_a: int | None = None
    n_max_b: int | None = None
    settings: StepperSettings | None = None

    def physical_params(self) -> SystemParams:
        return self.params.replace(velocity=self.velocity)

    def schedule(self) -> DetuningSchedule:
        t0, t1 = self.physical_params().window()
        return DetuningSchedule.switched(self.detuning_before, self.detuning_after, self.t_switch, t0, t1)

    def space(self) -> FockSpaceConfig:
        p = self.physical_params()
        n_a = self.n_max_a
        if n_a is None:
            # two Raman photons plus room for thermal photons fed by the bath
            n_a = 4 if p.n_th_a == 0 else 4 + default_cutoff("thermal", p.n_th_a) // 2
        n_b = self.n_max_b if self.n_max_b is not None else default_cutoff("coherent", math.sqrt(self.source_mean))
        if p.n_th_b > 0 and self.n_max_b is None:
            n_b += 2
        return FockSpaceConfig(n_a, n_b)


@dataclass(frozen=True)
class RamanPrepResult:
    """Outcome of the freeze protocol, post-selected on the atom found in g.

    The field distributions refer to the freeze instant: the evolution is
    continued without dissipation after the switch so that each dressed
    state is read out under its bare photon-number label.  ``state`` and
    the ``exit_*`` fields describe the joint state when the atom leaves
    the cavity with damping on throughout.
    """

    state: DensityOperator
    success_probability: float
    distribution_a: np.ndarray
    distribution_b: np.ndarray
    joint_distribution: np.ndarray
    p_two: float
    exit_distribution_a: np.ndarray
    exit_distribution_b: np.ndarray
    initial_mean_b: float
    inputs: PrepInputs | None = field(default=None, compare=False, repr=False)
    imperfections: ImperfectionModel = ImperfectionModel()

    def __post_init__(self):
        for name in ("distribution_a", "distribution_b", "exit_distribution_a", "exit_distribution_b"):
            p = getattr(self, name)
            if abs(p.sum() - 1.0) > 1e-8:
                raise ValueError(f"{name} is not normalized")

    @property
    def mean_b(self) -> float:
        return float(np.dot(np.arange(len(self.distribution_b)), self.distribution_b))

    @property
    def exit_mean_b(self) -> float:
        return float(np.dot(np.arange(len(self.exit_distribution_b)), self.exit_distribution_b))


def _g_conditioned(pops: np.ndarray, what: str) -> tuple[float, np.ndarray]:
    prob = float(pops[0].sum())
    if prob < DEGENERATE_PROB:
        raise DegenerateConditionError(f"{what}: atom found in g with probability {prob:.1e}")
    return prob, pops[0] / prob


def _freeze_and_exit(rho0, inputs: PrepInputs, params: SystemParams) -> tuple[SectorState, SectorState]:
    space = rho0.space if isinstance(rho0, DensityOperator) else rho0.space
    sched = inputs.schedule()
    t0, t1 = params.window()
    settings = inputs.settings or default_settings(params)
    model = build_lindblad_model(params, sched, space)
    t_sw = min(max(inputs.t_switch, t0), t1)
    if t_sw > t0:
        at_switch = evolve_structured(rho0, model, t0, t_sw, settings)
    else:
        at_switch = SectorState.from_density(rho0, params.delta)
    if t_sw >= t1:
        return at_switch, at_switch
    exit_state = evolve_structured(at_switch, model, t_sw, t1, settings)
    frozen = evolve_structured(at_switch, model.without_dissipation(), t_sw, t1, settings)
    return frozen, exit_state


def _prep_from(inputs: PrepInputs, atom_level: str = "e") -> tuple[SectorState, SectorState]:
    space = inputs.space()
    fa = make_field_state("fock", 0, space.n_max_a)
    fb = make_field_state("coherent", math.sqrt(inputs.source_mean), space.n_max_b)
    rho0 = compose_initial_state(atom_level, fa, fb, space)
    return _freeze_and_exit(rho0, inputs, inputs.physical_params())


def _prep_result(inputs: PrepInputs, frozen: SectorState, exit_state: SectorState,
                 imperfections: ImperfectionModel = ImperfectionModel()) -> RamanPrepResult:
    pops_f = frozen.population_tensor()
    pops_x = exit_state.population_tensor()
    _tail_check(pops_x, "two-photon preparation")
    _, joint = _g_conditioned(pops_f, "freeze distribution")
    success, joint_x = _g_conditioned(pops_x, "exit distribution")
    return RamanPrepResult(
        state=exit_state.to_density(check=False),
        success_probability=success,
        distribution_a=joint.sum(axis=1),
        distribution_b=joint.sum(axis=0),
        joint_distribution=joint,
        p_two=float(joint.sum(axis=1)[2]) if joint.shape[0] > 2 else 0.0,
        exit_distribution_a=joint_x.sum(axis=1),
        exit_distribution_b=joint_x.sum(axis=0),
        initial_mean_b=inputs.source_mean,
        inputs=inputs,
        imperfections=imperfections,
    )


def prepare_two_photon(params: SystemParams = SystemParams(), source_mean: float = 6.0, velocity: float = 170.0,
                       t_switch: float = 5e-6, detuning_before: float = khz(65.0),
                       detuning_after: float = khz(135.0), settings: StepperSettings | None = None,
                       n_max_a: int | None = None, n_max_b: int | None = None) -> RamanPrepResult:
    """Raman emission at ``detuning_before`` frozen by a sudden switch at ``t_switch``.

    Mode a starts empty and mode b holds a coherent field of
    ``source_mean`` photons.
    """
    inputs = PrepInputs(params, source_mean, velocity, t_switch, detuning_before, detuning_after,
                        n_max_a, n_max_b, settings)
    frozen, exit_state = _prep_from(inputs)
    return _prep_result(inputs, frozen, exit_state)


# -- Ramsey probe -------------------------------------------------------------

@dataclass(frozen=True)
class FringeFit:
    phase: float
    contrast: float
    baseline: float


def _wrap(phase: float) -> float:
    return float(math.remainder(phase, 2.0 * math.pi))


def fit_fringe(points, ramsey_time: float) -> FringeFit:
    """Least-squares fit of ``A cos(2 pi nu T + phi) + B`` with ``A >= 0``.

    ``contrast`` is the peak-to-peak amplitude ``2A``; for a fringe
    ``(1 - C cos(...)) / 2`` it equals ``C``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
        raise ValueError("need at least five (offset, P_g) points")
    nu, y = pts[:, 0], pts[:, 1]
    if (nu.max() - nu.min()) * ramsey_time < 1.0 - 1e-9:
        raise ValueError("offsets must span at least one fringe period")
    x = 2.0 * math.pi * nu * ramsey_time
    design = np.column_stack([np.cos(x), -np.sin(x), np.ones_like(x)])
    if np.linalg.cond(design) > 1e8:
        raise FitError("fringe design matrix is singular")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    c, s, b = coef
    amp = math.hypot(c, s)
    if amp <= 1e-9 * max(1.0, abs(b)):
        raise FitError("flat data: fringe phase undefined")
    return FringeFit(_wrap(math.atan2(s, c)), 2.0 * amp, float(b))


@dataclass(frozen=True)
class FringeResult:
    offsets: np.ndarray
    p_g: np.ndarray
    phase: float
    contrast: float
    absolute_phase: float
    ramsey_time: float
    scenario: str
    reference: str = "vacuum_ref"
    # interferometer contrast the fringe was computed with; the fitted one also carries dephasing
    applied_contrast: float = 1.0
    distribution: np.ndarray | None = field(default=None, compare=False, repr=False)
    prep: RamanPrepResult | None = field(default=None, compare=False, repr=False)
    probe: "RamseyProbe | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not -1e-9 <= self.contrast <= 1.0 + 1e-9:
            raise ValueError(f"fitted contrast {self.contrast} outside [0, 1]")

    def rows(self):
        return list(zip(self.offsets, self.p_g))


@dataclass(frozen=True)
class RamseyProbe:
    """Geometry of the dispersive probe: free evolution from the freeze to the exit."""

    params: SystemParams = SystemParams(velocity=170.0)
    t_freeze: float = 5e-6
    detuning_after: float = khz(135.0)
    source_mean: float = 6.0

    @property
    def ramsey_time(self) -> float:
        return self.params.window()[1] - self.t_freeze

    def unit_phases(self) -> tuple[float, float]:
        """Phase per photon in mode a and in mode b."""
        t0, t1 = self.params.window()
        sched = DetuningSchedule.constant(self.detuning_after, min(t0, self.t_freeze), t1)
        return (analytic.ramsey_phase(1, 0, sched, self.params, self.t_freeze),
                analytic.ramsey_phase(0, 1, sched, self.params, self.t_freeze))

    def phase_table(self, shape: tuple[int, int]) -> np.ndarray:
        pa, pb = self.unit_phases()
        na, nb = np.indices(shape)
        return pa * na + pb * nb

    def default_offsets(self, points: int = 41) -> np.ndarray:
        half = 1.0 / self.ramsey_time
        return np.linspace(-half, half, points)

    def reference_distribution(self, n_a: int, n_max_b: int | None = None) -> np.ndarray:
        """Mode a in ``|n_a>`` and mode b coherent with ``source_mean`` photons."""
        fb = FieldSpec("coherent", self.source_mean, n_max_b)
        pb = np.real(np.diag(fb.state().matrix))
        p = np.zeros((n_a + 1, len(pb)))
        p[n_a] = pb
        return p

    def fringe(self, distribution: np.ndarray, offsets: np.ndarray, contrast: float = 1.0) -> np.ndarray:
        phi = self.phase_table(distribution.shape)
        z = np.sum(distribution * np.exp(1j * phi))
        x = 2.0 * math.pi * np.asarray(offsets) * self.ramsey_time
        return 0.5 * (1.0 - contrast * np.real(np.exp(1j * x) * z))


def fringe_from_distribution(probe: RamseyProbe, scenario: str, dist: np.ndarray, offsets: np.ndarray,
                   contrast: float, floor: float = 0.0, prep: RamanPrepResult | None = None) -> FringeResult:
    ref = probe.reference_distribution(0, dist.shape[1] - 1)
    p = np.clip(probe.fringe(dist, offsets, contrast) + floor, 0.0, 1.0)
    p_ref = np.clip(probe.fringe(ref, offsets, contrast) + floor, 0.0, 1.0)
    fit = fit_fringe(np.column_stack([offsets, p]), probe.ramsey_time)
    fit_ref = fit_fringe(np.column_stack([offsets, p_ref]), probe.ramsey_time)
    return FringeResult(
        offsets=np.asarray(offsets, dtype=float),
        p_g=p,
        phase=_wrap(fit.phase - fit_ref.phase),
        contrast=min(1.0, fit.contrast),
        absolute_phase=fit.phase,
        ramsey_time=probe.ramsey_time,
        scenario=scenario,
        applied_contrast=contrast,
        distribution=dist,
        prep=prep,
        probe=probe,
    )


SCENARIOS = ("vacuum_ref", "one_photon_ref", "raman")


def ramsey_probe(scenario: str, params: SystemParams = SystemParams(), offsets=None,
                 prep: RamanPrepResult | None = None, t_freeze: float = 5e-6,
                 detuning_after: float = khz(135.0), source_mean: float = 6.0,
                 velocity: float = 170.0, contrast: float = 1.0) -> FringeResult:
    """Ramsey fringe of the lower level after the freeze.

    The phase of each component ``|g, n_a, n_b>`` is the integrated light
    shift between the freeze and the exit; the fitted phase is reported
    relative to the fit of the ``vacuum_ref`` field (mode a empty).  The
    ``raman`` scenario uses the freeze distribution of ``prep``, which is
    computed on demand.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    probe = RamseyProbe(params.replace(velocity=velocity), t_freeze, detuning_after, source_mean)
    offsets = probe.default_offsets() if offsets is None else np.asarray(offsets, dtype=float)
    if scenario == "raman":
        if prep is None:
            prep = prepare_two_photon(params, source_mean, velocity, t_freeze, detuning_after=detuning_after)
        dist = prep.joint_distribution
    else:
        dist = probe.reference_distribution(0 if scenario == "vacuum_ref" else 1)
    return fringe_from_distribution(probe, scenario, dist, offsets, contrast, prep=prep)


# -- imperfections ------------------------------------------------------------

def mix_distributions(a: np.ndarray, b: np.ndarray, weight_b: float) -> np.ndarray:
    """``(1 - w) a + w b`` for joint distributions of possibly different cutoffs."""
    shape = tuple(max(x, y) for x, y in zip(a.shape, b.shape))
    out = np.zeros(shape)
    out[tuple(slice(0, n) for n in a.shape)] += (1.0 - weight_b) * a
    out[tuple(slice(0, n) for n in b.shape)] += weight_b * b
    return out


def _raise_bath(params: SystemParams, growth: float) -> SystemParams:
    return params.replace(n_th_a=max(params.n_th_a, growth), n_th_b=max(params.n_th_b, growth))


def _prep_imperfect(ideal: RamanPrepResult, model: ImperfectionModel) -> RamanPrepResult:
    inputs = ideal.inputs
    if inputs is None:
        raise ValueError("the preparation inputs are needed to apply imperfections")
    if model.thermal_growth > 0:
        inputs = dataclasses.replace(inputs, params=_raise_bath(inputs.params, model.thermal_growth))
    frozen, exit_state = _prep_from(inputs)
    success = float(exit_state.population_tensor()[0].sum())
    joint_f = frozen.population_tensor()[0]
    joint_x = exit_state.population_tensor()[0]

    w1, w2 = model.atom_weights()
    if w2 > 0:
        params = inputs.physical_params()
        seconds = [_freeze_and_exit(_excited_with_field(exit_state, level), inputs, params) for level in (0, 1)]
        pair_f, pair_x, pair_success = _pair_detection(*zip(*seconds))
        joint_f = w1 * joint_f + w2 * pair_f
        joint_x = w1 * joint_x + w2 * pair_x
        success = w1 * success + w2 * pair_success

    joint_f = joint_f / joint_f.sum()
    joint_x = joint_x / joint_x.sum()
    if model.p_enter_g > 0:
        # atoms entering in g cannot emit: their detections carry the undisturbed field
        frozen_g, exit_g = _prep_from(inputs, atom_level="g")
        _, jf = _g_conditioned(frozen_g.population_tensor(), "g-entry branch")
        _, jx = _g_conditioned(exit_g.population_tensor(), "g-entry branch")
        joint_f = mix_distributions(joint_f, jf, model.p_enter_g)
        joint_x = mix_distributions(joint_x, jx, model.p_enter_g)
    success = min(1.0, success + model.background_floor)
    return RamanPrepResult(
        state=exit_state.to_density(check=False),
        success_probability=success,
        distribution_a=joint_f.sum(axis=1),
        distribution_b=joint_f.sum(axis=0),
        joint_distribution=joint_f,
        p_two=float(joint_f.sum(axis=1)[2]) if joint_f.shape[0] > 2 else 0.0,
        exit_distribution_a=joint_x.sum(axis=1),
        exit_distribution_b=joint_x.sum(axis=0),
        initial_mean_b=ideal.initial_mean_b,
        inputs=inputs,
        imperfections=model,
    )


def _scan_imperfect(ideal: ScanResult, model: ImperfectionModel) -> ScanResult:
    spec = ideal.spec
    needs_rerun = model.thermal_growth > 0 or model.p_enter_g > 0 or model.mean_atoms > 0
    p = ideal.p_g
    if needs_rerun:
        if spec is None:
            raise ValueError("the scan specification is needed to apply imperfections")
        base = dataclasses.replace(spec, imperfections=None)
        if model.thermal_growth > 0:
            base = dataclasses.replace(base, params=_raise_bath(base.params, model.thermal_growth))
        evaluate = _PointEvaluator(base)
        grid = base.detunings()
        w1, w2 = model.atom_weights()
        p = []
        for d in grid:
            first = evaluate.final(d)
            pg = float(first.population_tensor()[0].sum())
            if w2 > 0:
                seconds = [evaluate.final(d, _excited_with_field(first, level)) for level in (0, 1)]
                _, pair = _pair_detection(seconds)
                pg = w1 * pg + w2 * pair
            if model.p_enter_g > 0:
                g_rho = _initial("g", base.field_a.state(evaluate.space.n_max_a),
                                 base.field_b.state(evaluate.space.n_max_b))
                pg_g = float(evaluate.final(d, g_rho).population_tensor()[0].sum())
                pg = (1.0 - model.p_enter_g) * pg + model.p_enter_g * pg_g
            p.append(pg)
        p = np.array(p)
    p = np.clip(p + model.background_floor, 0.0, 1.0)
    meta = dict(ideal.metadata, imperfections=dataclasses.asdict(model))
    return ScanResult(ideal.detunings, p, meta, spec)


def _fringe_imperfect(ideal: FringeResult, model: ImperfectionModel) -> FringeResult:
    probe = ideal.probe
    if probe is None or ideal.distribution is None:
        raise ValueError("the fringe needs its probe geometry and distribution")
    dist, prep = ideal.distribution, ideal.prep
    if prep is not None and (model.thermal_growth > 0 or model.mean_atoms > 0 or model.p_enter_g > 0):
        prep = _prep_imperfect(prep, dataclasses.replace(model, background_floor=0.0, ramsey_contrast=1.0))
        dist = prep.joint_distribution
    elif model.p_enter_g > 0:
        dist = mix_distributions(dist, probe.reference_distribution(0, dist.shape[1] - 1), model.p_enter_g)
    contrast = ideal.applied_contrast * model.ramsey_contrast
    return fringe_from_distribution(probe, ideal.scenario, dist, ideal.offsets, contrast, model.background_floor, prep)


def apply_imperfections(ideal, model: ImperfectionModel):
    """Layer classical imperfections on an ideal result of the same type.

    ``thermal_growth`` raises the bath occupation of both modes and reruns
    the dynamics; ``p_enter_g`` mixes in atoms that enter in g; two-atom
    events are two successive transits, one of which is detected.
    """
    if model.is_identity:
        return ideal
    if isinstance(ideal, RamanPrepResult):
        return _prep_imperfect(ideal, model)
    if isinstance(ideal, ScanResult):
        return _scan_imperfect(ideal, model)
    if isinstance(ideal, FringeResult):
        return _fringe_imperfect(ideal, model)
    raise TypeError(f"cannot apply imperfections to {type(ideal).__name__}")


# -- extension scenarios ------------------------------------------------------

@dataclass(frozen=True)
class ReverseRamanResult:
    transfer: float
    detuning: float
    distribution_b_given_e: np.ndarray
    mean_b_loss: float


def _fock_transit(level: str, n_a: int, n_b: int, detuning: float, params: SystemParams,
                  space: FockSpaceConfig, settings: StepperSettings | None) -> np.ndarray:
    rho0 = compose_initial_state(level, make_field_state("fock", n_a, space.n_max_a),
                                 make_field_state("fock", n_b, space.n_max_b), space)
    t0, t1 = params.window()
    return _transit(rho0, DetuningSchedule.constant(detuning, t0, t1), params, settings, space).population_tensor()


def _maximize(fn: Callable[[float], float], lo: float, hi: float, points: int) -> tuple[float, float]:
    grid = np.linspace(lo, hi, points)
    vals = [fn(x) for x in grid]
    i = int(np.argmax(vals))
    step = grid[1] - grid[0]
    a, b = max(lo, grid[i] - step), min(hi, grid[i] + step)
    res = minimize_scalar(lambda x: -fn(x), bounds=(a, b), method="bounded", options={"xatol": 1e-4 * step})
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(vals[i])


def scenario_reverse_raman(n: int, params: SystemParams = SystemParams(), detuning: float | None = None,
                           settings: StepperSettings | None = None) -> ReverseRamanResult:
    """Atom entering in g absorbs two photons of mode b and emits one into mode a.

    ``|g, 0, n> -> |e, 1, n-2>`` is resonant for ``D = -2 delta`` before
    light shifts.  Without an explicit detuning the transfer is maximized
    over ``[-2.5 delta, -1.2 delta]``.
    """
    if n < 2:
        raise ValueError("the reverse Raman process needs at least two source photons")
    space = FockSpaceConfig(3, n + 2)

    def transfer(d):
        return float(_fock_transit("g", 0, n, d, params, space, settings)[1, 1, n - 2])

    if detuning is None:
        detuning, _ = _maximize(transfer, -2.5 * params.delta, -1.2 * params.delta, 27)
    pops = _fock_transit("g", 0, n, detuning, params, space, settings)
    p_e = float(pops[1].sum())
    if p_e < DEGENERATE_PROB:
        raise DegenerateConditionError(f"atom excited with probability {p_e:.1e}")
    dist_b = pops[1].sum(axis=0) / p_e
    return ReverseRamanResult(float(pops[1, 1, n - 2]), float(detuning), dist_b,
                              float(n - np.dot(np.arange(len(dist_b)), dist_b)))


@dataclass(frozen=True)
class FifthOrderResult:
    transfer: float
    detuning: float
    velocity: float


def scenario_fifth_order(n: int, params: SystemParams = SystemParams(), velocity: float = 200.0,
                         half_width: float = khz(10.0), points: int = 11,
                         settings: StepperSettings | None = None) -> FifthOrderResult:
    """Peak ``P(g, n_a = 3)`` for ``|e, 0, n>`` near the shifted ``D = 2 delta`` resonance."""
    p = params.replace(velocity=velocity)
    space = FockSpaceConfig(4, max(n, 0) + 1)
    try:
        centre = analytic.shifted_fifth_order_resonance(n, p.omega0, p.delta)
    except (ValueError, analytic.NoResonanceError):
        centre = 2.0 * p.delta

    def transfer(d):
        return float(_fock_transit("e", 0, n, d, p, space, settings)[0, 3].sum())

    d, val = _maximize(transfer, centre - half_width, centre + half_width, points)
    return FifthOrderResult(val, d, velocity)


__all__ = [
    "FieldSpec",
    "FifthOrderResult",
    "FitError",
    "FringeFit",
    "FringeResult",
    "ImperfectionModel",
    "PrepInputs",
    "RamanPrepResult",
    "RamseyProbe",
    "ReverseRamanResult",
    "SCENARIOS",
    "ScanResult",
    "ScanSpec",
    "apply_imperfections",
    "default_settings",
    "fit_fringe",
    "fringe_from_distribution",
    "mix_distributions",
    "prepare_two_photon",
    "ramsey_probe",
    "refine_maximum",
    "run_transit",
    "scan_pg_vs_delta",
    "scenario_fifth_order",
    "scenario_reverse_raman",
]
