import numpy as np
import pytest

from frameupdate import dynamics
from frameupdate.dynamics import integrate, newmark, peak
from frameupdate.excitation import GroundMotionSpec, synthesize_record
from frameupdate.frame_core import assemble, load_two_storey_frame, solve_modal


def test_undamped_free_vibration_tracks_cosine():
    w = 2 * np.pi
    dt = 1e-3
    n = int(10 / dt) + 1
    u, _, _ = newmark([[1.0]], [[0.0]], [[w**2]], np.zeros(n), dt, u0=[1.0])
    t = np.arange(n) * dt
    assert np.max(np.abs(u[:, 0] - np.cos(w * t))) < 1e-3


def test_logarithmic_decrement():
    w, zeta, dt = 2 * np.pi, 0.02, 1e-3
    n = int(20 / dt)
    u, _, _ = newmark([[1.0]], [[2 * zeta * w]], [[w**2]], np.zeros(n), dt, u0=[1.0])
    x = u[:, 0]
    peaks = np.nonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:]))[0] + 1
    delta = np.mean(np.log(x[peaks[:-1]] / x[peaks[1:]]))
    expected = 2 * np.pi * zeta / np.sqrt(1 - zeta**2)
    assert abs(delta / expected - 1) < 0.01


def test_zero_input_zero_response():
    u, v, a = newmark(np.eye(2), np.zeros((2, 2)), np.array([[2.0, -1.0], [-1.0, 1.0]]), np.zeros((50, 2)), 0.01)
    assert not np.any(u) and not np.any(v) and not np.any(a)


def test_peak():
    assert peak([1, -3, 2]) == 3
    assert peak(np.full(7, -2.5)) == 2.5
    with pytest.raises(ValueError):
        peak([])


def test_resonant_amplification():
    w, zeta, dt, k = 2 * np.pi, 0.02, 2e-3, 1.0
    t = np.arange(0, 80, dt)
    F = np.sin(w * t)
    u, _, _ = newmark([[k / w**2]], [[2 * zeta * w * k / w**2]], [[k]], F, dt)
    steady = peak(u[t > 60, 0])
    assert abs(steady / (1 / (2 * zeta)) - 1) < 0.05


def test_energy_conservation_two_storey():
    model = load_two_storey_frame()
    mats = assemble(model, *model.targets())
    w, phi = solve_modal(mats.K_red, mats.mass_red)
    dt = 2 * np.pi / w[0] / 100
    M = np.diag(mats.mass_red)
    u0 = phi[:, 0] * 1e-3 + phi[:, 1] * 5e-4
    u, v, _ = newmark(M, np.zeros_like(M), mats.K_red, np.zeros((10_001, 8)), dt, u0=u0)
    e = dynamics.total_energy(M, mats.K_red, u, v)
    assert np.max(np.abs(e / e[0] - 1)) < 1e-3


def test_singular_effective_stiffness():
    with pytest.raises(dynamics.IntegrationError):
        newmark([[0.0]], [[0.0]], [[0.0]], np.zeros(5), 0.01)


def _two_storey_record(seed=0):
    spec = GroundMotionSpec(seed=seed)
    return spec, synthesize_record(spec)


def test_integrate_channels_and_linearity():
    model = load_two_storey_frame()
    tk, tm = model.targets()
    spec, ag = _two_storey_record()
    r1 = integrate(model, tk, tm, 0.02, ag, spec.dt)
    r2 = integrate(model, tk, tm, 0.02, 2.5 * ag, spec.dt)
    assert r1.accel.shape == (4096, 8) and r1.moments.shape == (4096, 8)
    np.testing.assert_allclose(r2.accel, 2.5 * r1.accel, rtol=0, atol=1e-12 * np.abs(r2.accel).max())
    ch = r1.channels()
    assert list(ch)[:3] == ["a1x", "a3x", "a4x"]
    assert np.all(np.isfinite(np.column_stack(list(ch.values()))))
    zero = integrate(model, tk, tm, 0.02, np.zeros(100), spec.dt)
    assert not np.any(zero.accel) and not np.any(zero.moments)


def test_exact_and_newmark_agree_with_substeps():
    model = load_two_storey_frame()
    tk, tm = model.targets()
    spec, ag = _two_storey_record(3)
    ex = integrate(model, tk, tm, 0.02, ag, spec.dt, method="exact")
    nm = integrate(model, tk, tm, 0.02, ag, spec.dt, substeps=20)
    for name in ("a5x", "r1i"):
        assert peak(nm.channel(name)) == pytest.approx(peak(ex.channel(name)), rel=0.01)


def test_halving_dt_changes_peaks_little():
    model = load_two_storey_frame()
    tk, tm = model.targets()
    spec, ag = _two_storey_record(1)
    # sampled at 0.01 s, integrated with the pipeline's 10 substeps vs 20
    coarse = integrate(model, tk, tm, 0.02, ag, spec.dt, substeps=10)
    fine = integrate(model, tk, tm, 0.02, ag, spec.dt, substeps=20)
    for name in ("a5x", "r1i"):
        pc, pf = peak(coarse.channel(name)), peak(fine.channel(name))
        assert abs(pc / pf - 1) < 0.005
