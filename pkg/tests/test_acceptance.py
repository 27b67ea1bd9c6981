"""Quantitative acceptance suite.

Each test checks one numbered criterion at its stated tolerance and
prints a PASS/FAIL line (also collected in the terminal summary).
"""

import filecmp
import time
import warnings

import numpy as np
import pytest
from scipy.optimize import curve_fit
from scipy.signal import peak_prominences

from cavity_raman import analytic, experiments
from cavity_raman.cli import main
from cavity_raman.evolve import StepperSettings, evolve_density, evolve_structured, evolve_unitary
from cavity_raman.experiments import FieldSpec, ImperfectionModel, ScanSpec
from cavity_raman.fockspace import (
    DensityOperator,
    FockSpaceConfig,
    StateVector,
    basis_index,
    build_mode_operator,
    compose_initial_state,
    excitation_operator,
    expectation,
    make_field_state,
)
from cavity_raman.model import DetuningSchedule, SystemParams, build_lindblad_model, khz, to_khz

PAPER = SystemParams()
THERMAL = FieldSpec("thermal", 1.0)
VACUUM = FieldSpec.vacuum()


def _thermal_spec(velocity, start, stop, step, **kw):
    return ScanSpec(khz(start), khz(stop), khz(step), velocity=velocity, field_a=kw.pop("field_a", THERMAL),
                    field_b=kw.pop("field_b", THERMAL), **kw)


def _refined_peak(spec, scan, centre, half_width):
    """Coarse maximum near ``centre`` refined within one grid step."""
    d, _ = scan.maximum_near(centre, half_width)
    return experiments.refine_maximum(spec, d - spec.step, d + spec.step)


@pytest.fixture(scope="module")
def thermal_scan_200():
    spec = _thermal_spec(200.0, -300, 150, 10)
    return spec, experiments.scan_pg_vs_delta(spec)


# -- 1 -----------------------------------------------------------------------

def test_01_resonant_rabi_frequency(criterion):
    start = time.perf_counter()
    params = PAPER.replace(kappa_a=0.0, kappa_b=0.0, n_th_a=0.0, n_th_b=0.0)
    space = FockSpaceConfig(1, 0)
    t_end = 10 / 49e3
    model = build_lindblad_model(params, DetuningSchedule.constant(0.0, 0.0, t_end), space,
                                 coupling=lambda t: params.omega0)
    psi = StateVector.basis("e", 0, 0, space)
    times = np.linspace(0.0, t_end, 201)
    p_e = [1.0]
    for a, b in zip(times[:-1], times[1:]):
        psi = evolve_unitary(psi, model, a, b, StepperSettings(dt=0.05e-6))
        p_e.append(abs(psi.amplitudes[basis_index("e", 0, 0, space)]) ** 2)
    # seed the fit with the strongest Fourier component of the record
    spectrum = np.abs(np.fft.rfft(np.asarray(p_e) - np.mean(p_e), 16 * len(p_e)))
    seed = 2 * np.pi * np.fft.rfftfreq(16 * len(p_e), times[1] - times[0])[np.argmax(spectrum)]
    (omega,), _ = curve_fit(lambda t, w: 0.5 * (1 + np.cos(w * t)), times, p_e, p0=[seed])
    elapsed = time.perf_counter() - start
    rel = abs(omega / params.omega0 - 1.0)
    ok = rel < 1e-3 and elapsed < 1.0
    criterion(1, "resonant Rabi frequency", ok,
              f"{to_khz(omega):.4f} kHz vs 49 kHz (rel {rel:.1e}), {elapsed:.2f} s")
    assert ok


# -- 2 -----------------------------------------------------------------------

def test_02_excitation_conservation(criterion):
    params = PAPER.replace(kappa_a=0.0, kappa_b=0.0)
    t0, t1 = params.window()
    # structured engine, thermal fields at the scan cutoff
    rho = compose_initial_state("e", THERMAL.state(), THERMAL.state())
    model = build_lindblad_model(params, DetuningSchedule.constant(khz(80), t0, t1), rho.space)
    n_op = excitation_operator(rho.space)
    before = expectation(n_op, rho).real
    after = evolve_structured(rho, model, t0, t1).expect_excitation()
    drift_structured = abs(after - before)
    # dense engine: coherent fields carry coherences between excitation sectors;
    # a tenth of white noise keeps the state full rank
    space = FockSpaceConfig(4, 6)
    pure = compose_initial_state("e", make_field_state("coherent", 0.5, 4), make_field_state("coherent", 1.0, 6),
                                 space)
    rho = DensityOperator(0.9 * pure.matrix + 0.1 * np.eye(space.dim) / space.dim, space.dims)
    model = build_lindblad_model(params, DetuningSchedule.constant(khz(80), t0, t1), space)
    out = evolve_density(rho, model, t0, t1, StepperSettings(dt=0.01e-6))
    n_op = excitation_operator(space)
    drift_dense = abs(expectation(n_op, out).real - expectation(n_op, rho).real)
    ok = drift_structured < 1e-9 and drift_dense < 1e-9
    criterion(2, "excitation conservation", ok,
              f"|dN| structured {drift_structured:.1e}, dense {drift_dense:.1e}")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_03_lindblad_sanity(criterion):
    t0, t1 = PAPER.window()
    rho = compose_initial_state("e", THERMAL.state(), THERMAL.state())
    model = build_lindblad_model(PAPER, DetuningSchedule.constant(khz(80), t0, t1), rho.space)
    st = evolve_structured(rho, model, t0, t1)
    trace_drift = abs(st.trace() - 1.0)
    min_eig = st.min_eigenvalue()
    # isolated mode a, no atom coupling, from vacuum for five damping times
    iso = PAPER.replace(omega0=0.0)
    space = FockSpaceConfig(30, 0)
    t_end = 5.0 / iso.kappa_a
    rho0 = compose_initial_state("g", make_field_state("fock", 0, 30), make_field_state("fock", 0, 0), space)
    model = build_lindblad_model(iso, DetuningSchedule.constant(0.0, 0.0, t_end), space)
    out = evolve_density(rho0, model, 0.0, t_end, StepperSettings(dt=1e-6))
    n_a = expectation(build_mode_operator("a", "number", space), out).real
    oracle = iso.n_th_a * (1.0 - np.exp(-5.0))
    ok = (trace_drift < 1e-8 and min_eig >= -1e-8 and abs(n_a / iso.n_th_a - 1.0) < 0.01
          and abs(n_a - oracle) < 1e-6)
    criterion(3, "Lindblad sanity", ok,
              f"trace drift {trace_drift:.1e}, min eig {min_eig:.1e}, <n>(5/kappa) = {n_a:.5f} "
              f"(n_th 1, oracle {oracle:.5f})")
    assert ok


# -- 4 -----------------------------------------------------------------------

@pytest.mark.slow
def test_04_thermal_scan_structure(criterion, thermal_scan_200):
    spec, scan = thermal_scan_200
    peaks = {
        "0": (_refined_peak(spec, scan, khz(0), khz(20)), 0.0, 3.0),
        "-delta": (_refined_peak(spec, scan, khz(-128), khz(20)), -128.0, 3.0),
        "+80": (_refined_peak(spec, scan, khz(80), khz(30)), 80.0, 15.0),
        "-210": (_refined_peak(spec, scan, khz(-210), khz(30)), -210.0, 15.0),
    }
    checks = {k: abs(to_khz(d) - target) <= tol for k, ((d, _), target, tol) in peaks.items()}
    empty = _thermal_spec(200.0, 50, 110, 2.5, field_a=VACUUM, field_b=VACUUM)
    empty_max = float(experiments.scan_pg_vs_delta(empty).p_g.max())
    ok = all(checks.values()) and empty_max < 0.02
    detail = ", ".join(f"{k}: {to_khz(d):.1f} kHz (P {p:.3f})" for k, ((d, p), _, _) in peaks.items())
    criterion(4, "thermal scan structure", ok, f"{detail}; empty-mode max near +80 kHz {empty_max:.4f}")
    assert ok


# -- 5 -----------------------------------------------------------------------

@pytest.mark.slow
def test_05_coherent_source_peak(criterion):
    spec = _thermal_spec(200.0, 20, 125, 5, field_a=VACUUM, field_b=FieldSpec("coherent", 11.2))
    scan = experiments.scan_pg_vs_delta(spec)
    d, p = _refined_peak(spec, scan, khz(72.5), khz(52.5))
    ok = abs(p - 0.30) <= 0.10 and d < PAPER.delta
    criterion(5, "coherent-source peak", ok, f"peak P_g {p:.3f} at {to_khz(d):.1f} kHz (target 0.30 +/- 0.10)")
    assert ok


# -- 6 -----------------------------------------------------------------------

@pytest.mark.slow
def test_06_shifted_resonance(criterion):
    d_an = to_khz(analytic.shifted_raman_resonance(6, PAPER.omega0, PAPER.delta))
    spec = _thermal_spec(170.0, 30, 126, 4, field_a=VACUUM, field_b=FieldSpec("coherent", 6.0))
    scan = experiments.scan_pg_vs_delta(spec)
    d_num, p = _refined_peak(spec, scan, khz(78), khz(48))
    d_num = to_khz(d_num)
    ok_an, ok_num = abs(d_an - 65) <= 10, abs(d_num - 65) <= 10
    criterion(6, "shifted resonance", ok_an and ok_num,
              f"analytic {d_an:.1f} kHz ({'ok' if ok_an else 'off'}), full numerics {d_num:.1f} kHz "
              f"(P_g {p:.3f}, {'ok' if ok_num else 'model discrepancy'}); target 65 +/- 10")
    assert ok_an and ok_num


# -- 7 & 8 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def ideal_prep():
    return experiments.prepare_two_photon(PAPER.replace(n_th_a=0.0, n_th_b=0.0))


def test_07_ramsey_phase_ratio(criterion, ideal_prep):
    phi1 = experiments.ramsey_probe("one_photon_ref").phase
    phi2 = experiments.ramsey_probe("raman", prep=ideal_prep).phase
    vac = experiments.ramsey_probe("vacuum_ref").phase
    ratio = phi2 / phi1
    ok = 1.40 <= ratio <= 1.70 and vac == 0.0
    criterion(7, "Ramsey phase ratio", ok,
              f"phi1 {phi1:.3f} rad, phi2 {phi2:.3f} rad, ratio {ratio:.3f} (window [1.40, 1.70])")
    assert ok


@pytest.mark.slow
def test_08_photon_statistics_ladder(criterion, ideal_prep):
    growth = experiments.apply_imperfections(ideal_prep, ImperfectionModel(thermal_growth=1.0))
    entry = experiments.apply_imperfections(ideal_prep, ImperfectionModel(thermal_growth=1.0, p_enter_g=0.2))
    rungs = [ideal_prep.p_two, growth.p_two, entry.p_two]
    targets = [0.63, 0.46, 0.37]
    within = [abs(r - t) <= 0.08 for r, t in zip(rungs, targets)]
    monotone = rungs[0] > rungs[1] > rungs[2]
    ok = all(within) and monotone
    detail = ", ".join(f"{r:.3f} vs {t:.2f} ({'ok' if w else 'off'})" for r, t, w in zip(rungs, targets, within))
    criterion(8, "photon-statistics ladder", ok, f"{detail}; monotone {monotone}")
    assert ok


# -- 9 -----------------------------------------------------------------------

@pytest.mark.slow
def test_09_fifth_order_bound(criterion):
    velocities = [200.0, 150.0, 100.0, 75.0, 50.0]
    values = [experiments.scenario_fifth_order(6, PAPER, velocity=v).transfer for v in velocities]
    increasing = all(b > a for a, b in zip(values, values[1:]))
    ok = values[0] < 1e-3 and increasing
    detail = ", ".join(f"{v:.0f} m/s: {x:.2e}" for v, x in zip(velocities, values))
    criterion(9, "fifth-order bound", ok, detail)
    assert ok


# -- 10 ----------------------------------------------------------------------

def test_10_perturbation_oracles(criterion):
    p = PAPER
    split = []
    for n in range(1, 7):
        d, gap = analytic.avoided_crossing(n, p.delta, p.omega0)
        split.append((n, gap / (2 * analytic.raman_coupling(n, d, p.delta, p.omega0))))
    ideal = p.replace(kappa_a=0.0, kappa_b=0.0, n_th_a=0.0, n_th_b=0.0)
    t0, t1 = ideal.window()
    transfer = []
    for n in range(1, 7):
        d = analytic.shifted_raman_resonance(n, p.omega0, p.delta)
        theta = analytic.raman_coupling(n, d, p.delta, p.omega0) * analytic.effective_raman_time(ideal)
        if theta > np.pi / 2:
            continue
        space = FockSpaceConfig(n + 1, n + 1)
        rho = compose_initial_state("e", make_field_state("fock", 0, n + 1), make_field_state("fock", n, n + 1),
                                    space)
        model = build_lindblad_model(ideal, DetuningSchedule.constant(d, t0, t1), space)
        numeric = evolve_structured(rho, model, t0, t1).population_tensor()[0, 2, n - 1]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", analytic.PerturbativeRegimeWarning)
            pert = analytic.perturbative_transfer(n, ideal, d)
        transfer.append((n, numeric, pert))
    ok_split = all(abs(r - 1.0) <= 0.15 for _, r in split)
    ok_transfer = bool(transfer) and all(abs(a / b - 1.0) <= 0.20 for _, a, b in transfer)
    detail = ("splitting/2g " + " ".join(f"n{n}:{r:.2f}" for n, r in split)
              + "; transfer numerics/pert " + " ".join(f"n{n}:{a / b:.2f}" for n, a, b in transfer))
    criterion(10, "perturbation oracles", ok_split and ok_transfer, detail)
    assert ok_split and ok_transfer


# -- 11 ----------------------------------------------------------------------

def _feature_prominence(scan, centre, half_width):
    """Height of the scan maximum near ``centre`` above its higher neighbouring base."""
    sel = np.flatnonzero(np.abs(scan.detunings - centre) <= half_width)
    i = sel[np.argmax(scan.p_g[sel])]
    (prominence,), *_ = peak_prominences(scan.p_g, [i])
    return float(scan.p_g[i]), float(prominence)


@pytest.mark.slow
def test_11_fast_atom_suppression(criterion, thermal_scan_200):
    # the +80 kHz feature sits on the wing of the single-photon line at 0, which broadens for
    # fast atoms; the feature height is therefore taken above its local base
    _, scan = thermal_scan_200
    fast = experiments.scan_pg_vs_delta(_thermal_spec(350.0, 20, 130, 5))
    slow_p, slow_h = _feature_prominence(scan, khz(80), khz(30))
    fast_p, fast_h = _feature_prominence(fast, khz(80), khz(30))
    ok = fast_h < slow_h / 3.0
    criterion(11, "fast-atom suppression", ok,
              f"+80 kHz feature height above base {fast_h:.4f} at 350 m/s vs {slow_h:.4f} at 200 m/s "
              f"(ratio {fast_h / slow_h:.2f}); peak P_g {fast_p:.4f} vs {slow_p:.4f} (ratio {fast_p / slow_p:.2f})")
    assert ok


# -- 12 ----------------------------------------------------------------------

def test_12_cli_determinism(criterion, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("field_a = fock:0\nfield_b = coherent:2\nscan_start_khz = 40\nscan_stop_khz = 120\n"
                   "scan_step_khz = 20\nshots = 1000\n")
    runs = []
    for k, threads in enumerate((1, 3, 1)):
        out = tmp_path / f"run{k}"
        assert main(["scan", "--config", str(cfg), "--out", str(out), "--threads", str(threads), "--seed", "7"]) == 0
        assert main(["analytic", "resonance", "--config", str(cfg), "--out", str(out)]) == 0
        runs.append(out)
    files = sorted(p.name for p in runs[0].iterdir())
    same = all(filecmp.cmp(runs[0] / f, r / f, shallow=False) for r in runs[1:] for f in files)
    ok = same and len(files) >= 3
    criterion(12, "CLI determinism", ok, f"{len(files)} files compared across --threads 1/3/1: "
                                         f"{'identical' if same else 'differ'}")
    assert ok
