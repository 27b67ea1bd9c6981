import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cavity_raman.experiments import (
    FieldSpec,
    FitError,
    ImperfectionModel,
    RamseyProbe,
    ScanSpec,
    _fock_transit,
    apply_imperfections,
    default_settings,
    fit_fringe,
    mix_distributions,
    prepare_two_photon,
    ramsey_probe,
    run_transit,
    scan_pg_vs_delta,
    scenario_fifth_order,
    scenario_reverse_raman,
)
from cavity_raman.fockspace import FockSpaceConfig, photon_distribution
from cavity_raman.model import DetuningSchedule, SystemParams, khz

COLD = SystemParams(kappa_a=0.0, kappa_b=0.0, n_th_a=0.0, n_th_b=0.0)


def test_field_spec():
    assert FieldSpec.vacuum().cutoff() == 0
    assert FieldSpec("coherent", 11.2).cutoff() == 26
    rho = FieldSpec("coherent", 6.0).state()
    assert np.dot(np.diag(rho.matrix).real, np.arange(rho.dim)) == pytest.approx(6.0, rel=1e-3)
    with pytest.raises(ValueError):
        FieldSpec("fock", 1.5)
    with pytest.raises(ValueError):
        FieldSpec("thermal", -1.0)


def test_default_settings_scale_with_velocity():
    assert default_settings(SystemParams(velocity=200.0)).dt == pytest.approx(0.025e-6)
    assert default_settings(SystemParams(velocity=400.0)).dt == pytest.approx(0.025e-6)
    assert default_settings(SystemParams(velocity=50.0)).dt == pytest.approx(0.025e-6 / math.sqrt(2))


def test_transit_without_coupling_only_relaxes():
    p = SystemParams(omega0=0.0, n_th_a=0.0, n_th_b=0.0)
    t0, t1 = p.window()
    out = run_transit("e", FieldSpec("fock", 2, 3), FieldSpec.vacuum(), DetuningSchedule.constant(0.0, t0, t1), p)
    decay = math.exp(-p.kappa_a * (t1 - t0))
    pa = photon_distribution(out, "a")
    # binomial loss of two photons with survival probability decay
    assert pa[:3] == pytest.approx([(1 - decay) ** 2, 2 * decay * (1 - decay), decay**2], abs=1e-7)
    assert out.matrix[0, 0].real == pytest.approx(0.0, abs=1e-12)


def test_pi_pulse_velocity():
    # Gaussian area omega0 w sqrt(pi) / v equals pi
    v = COLD.omega0 * COLD.waist / math.sqrt(math.pi)
    p = COLD.replace(velocity=v)
    t0, t1 = p.window()
    out = run_transit("e", FieldSpec("fock", 0, 1), FieldSpec("fock", 0, 1), DetuningSchedule.constant(0.0, t0, t1), p)
    p_g = out.populations().reshape(out.dims)[0].sum()
    assert p_g > 0.9


def test_raman_population_appears():
    space = FockSpaceConfig(3, 7)
    pops = _fock_transit("e", 0, 6, khz(65), COLD, space, None)
    assert pops[0, 2, 5] > 0.01
    assert pops.sum() == pytest.approx(1.0, abs=1e-8)


def test_scan_probabilities_and_rows():
    spec = ScanSpec(khz(-20), khz(20), khz(20), field_a=FieldSpec("fock", 0, 1), field_b=FieldSpec("fock", 0, 1))
    res = scan_pg_vs_delta(spec)
    assert res.detunings == pytest.approx([khz(-20), 0.0, khz(20)])
    assert np.all((res.p_g >= 0) & (res.p_g <= 1))
    assert res.p_g[1] == max(res.p_g)
    assert res.local_maxima()[0][0] == pytest.approx(0.0)
    assert res.error_bars(1000) == pytest.approx(np.sqrt(res.p_g * (1 - res.p_g) / 1000))
    assert len(res.rows()) == 3
    assert res.metadata["truncation"] == [1, 1]


def test_scan_thread_count_is_irrelevant():
    spec = ScanSpec(khz(-40), khz(40), khz(20), field_a=FieldSpec.vacuum(), field_b=FieldSpec("thermal", 0.2))
    a = scan_pg_vs_delta(spec, threads=1)
    b = scan_pg_vs_delta(spec, threads=3)
    assert np.array_equal(a.p_g, b.p_g)


def test_scan_spec_validation():
    with pytest.raises(ValueError):
        ScanSpec(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ScanSpec(1.0, 0.0, 0.1)


def test_identity_imperfections():
    spec = ScanSpec(khz(300), khz(320), khz(20), field_a=FieldSpec.vacuum(), field_b=FieldSpec.vacuum())
    res = scan_pg_vs_delta(spec)
    assert apply_imperfections(res, ImperfectionModel()) is res
    with pytest.raises(TypeError):
        apply_imperfections(object(), ImperfectionModel(background_floor=0.1))


def test_background_floor_far_off_resonance():
    spec = ScanSpec(khz(600), khz(650), khz(50), field_a=FieldSpec("fock", 0, 1), field_b=FieldSpec("fock", 0, 1),
                    imperfections=ImperfectionModel(background_floor=0.08))
    res = scan_pg_vs_delta(spec)
    assert res.p_g == pytest.approx([0.08, 0.08], abs=2e-3)


def test_imperfection_validation():
    with pytest.raises(ValueError):
        ImperfectionModel(p_enter_g=1.5)
    with pytest.raises(ValueError):
        ImperfectionModel(ramsey_contrast=0.0)
    w1, w2 = ImperfectionModel(mean_atoms=0.4).atom_weights()
    assert w1 + w2 == pytest.approx(1.0)
    assert w2 / w1 == pytest.approx(0.2)


@given(st.floats(0.0, 1.0))
def test_mix_distributions_normalized(w):
    a = np.full((2, 3), 1 / 6)
    b = np.zeros((4, 2))
    b[3, 1] = 1.0
    out = mix_distributions(a, b, w)
    assert out.shape == (4, 3)
    assert out.sum() == pytest.approx(1.0)
    assert out[3, 1] == pytest.approx(w)


def test_fit_fringe_exact():
    t_r = 80e-6
    nu = np.linspace(-1 / t_r, 1 / t_r, 21)
    y = 0.4 * np.cos(2 * np.pi * nu * t_r + 0.7) + 0.5
    fit = fit_fringe(np.column_stack([nu, y]), t_r)
    assert fit.phase == pytest.approx(0.7, abs=1e-10)
    assert fit.contrast == pytest.approx(0.8, abs=1e-10)
    assert fit.baseline == pytest.approx(0.5, abs=1e-10)


@given(st.floats(-3.0, 3.0))
def test_fit_fringe_phase_shift(shift):
    t_r = 80e-6
    nu = np.linspace(-1 / t_r, 1 / t_r, 21)
    base = 0.5 - 0.45 * np.cos(2 * np.pi * nu * t_r + 0.2)
    moved = 0.5 - 0.45 * np.cos(2 * np.pi * nu * t_r + 0.2 + shift)
    a = fit_fringe(np.column_stack([nu, base]), t_r)
    b = fit_fringe(np.column_stack([nu, moved]), t_r)
    assert math.remainder(b.phase - a.phase - shift, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_fit_fringe_errors():
    t_r = 80e-6
    nu = np.linspace(-1 / t_r, 1 / t_r, 21)
    with pytest.raises(FitError):
        fit_fringe(np.column_stack([nu, np.full_like(nu, 0.5)]), t_r)
    with pytest.raises(ValueError):
        fit_fringe(np.column_stack([nu[:4], nu[:4]]), t_r)
    with pytest.raises(ValueError):
        fit_fringe(np.column_stack([nu / 4, np.cos(nu)]), t_r)


def test_ramsey_reference_phases():
    vac = ramsey_probe("vacuum_ref")
    one = ramsey_probe("one_photon_ref")
    assert vac.phase == pytest.approx(0.0, abs=1e-12)
    probe = RamseyProbe()
    assert one.phase == pytest.approx(probe.unit_phases()[0], abs=1e-9)
    # the spread of mode-b light shifts washes out part of the fringe
    z = np.sum(vac.distribution * np.exp(1j * probe.phase_table(vac.distribution.shape)))
    assert vac.contrast == pytest.approx(abs(z), abs=1e-9)
    assert np.all((one.p_g >= 0) & (one.p_g <= 1))
    with pytest.raises(ValueError):
        ramsey_probe("squeezed")


def test_fringe_contrast_imperfection():
    one = ramsey_probe("one_photon_ref")
    worse = apply_imperfections(one, ImperfectionModel(ramsey_contrast=0.5))
    assert worse.contrast == pytest.approx(0.5 * one.contrast, rel=1e-9)
    assert worse.phase == pytest.approx(one.phase, abs=1e-9)


def test_prepare_without_source():
    res = prepare_two_photon(COLD, source_mean=0.0)
    # only non-adiabatic single-photon emission is left; two photons in mode a are impossible
    assert res.success_probability < 0.05
    assert res.p_two < 1e-12
    assert res.initial_mean_b == 0.0


def test_reverse_raman_needs_two_photons():
    with pytest.raises(ValueError):
        scenario_reverse_raman(1, COLD)


def test_reverse_raman_time_reversal():
    # a real Hamiltonian with an even envelope makes P(i -> f) = P(f -> i)
    space = FockSpaceConfig(3, 6)
    d = khz(-200)
    forward = _fock_transit("g", 0, 6, d, COLD, space, None)[1, 1, 4]
    backward = _fock_transit("e", 1, 4, d, COLD, space, None)[0, 0, 6]
    assert forward == pytest.approx(backward, rel=1e-6, abs=1e-10)


@pytest.mark.slow
def test_reverse_raman_six_photons():
    res = scenario_reverse_raman(6, COLD)
    assert res.transfer > 0.3
    assert int(np.argmax(res.distribution_b_given_e)) == 4
    assert res.mean_b_loss == pytest.approx(2.0, abs=0.05)


def test_fifth_order_needs_source():
    for n in (0, 1):
        assert scenario_fifth_order(n, COLD, points=3).transfer < 1e-6
