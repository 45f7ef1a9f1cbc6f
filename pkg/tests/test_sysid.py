import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from frameupdate import sysid
from frameupdate.dynamics import integrate
from frameupdate.excitation import GroundMotionSpec, synthesize_record
from frameupdate.frame_core import assemble, load_two_storey_frame, solve_modal


def _two_dof(dt=0.01):
    """Base-excited 2-DOF chain with known modes; outputs are two accelerations and a displacement."""
    M = np.diag([1.0, 2.0])
    K = np.array([[300.0, -100.0], [-100.0, 100.0]])
    C = 0.002 * K + 0.05 * M
    Minv = np.linalg.inv(M)
    Ac = np.block([[np.zeros((2, 2)), np.eye(2)], [-Minv @ K, -Minv @ C]])
    Bc = np.vstack([np.zeros((2, 1)), -np.ones((2, 1))])
    Cc = np.vstack([np.hstack([-Minv @ K, -Minv @ C]), [[1.0, 0, 0, 0]]])
    Dc = np.zeros((3, 1))
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete((Ac, Bc, Cc, Dc), dt, method="zoh")
    lam = np.linalg.eigvals(Ac)
    lam = lam[lam.imag > 0]
    lam = lam[np.argsort(np.abs(lam))]
    return (Ad, Bd, Cd, Dd), np.abs(lam), -lam.real / np.abs(lam)


def _simulate(sys_d, u, x0=None):
    A, B, C, D = sys_d
    x = np.zeros(A.shape[0]) if x0 is None else x0
    y = np.empty((u.shape[0], C.shape[0]))
    for k in range(u.shape[0]):
        y[k] = C @ x + D @ u[k]
        x = A @ x + B @ u[k]
    return y


def test_block_hankel_layout():
    x = np.arange(20.0).reshape(10, 2)
    H = sysid.block_hankel(x, 3, 4, start=1)
    assert H.shape == (6, 4)
    np.testing.assert_array_equal(H[:2, 0], x[1])
    np.testing.assert_array_equal(H[4:, 3], x[6])


@pytest.mark.parametrize("variant", ["po", "ordinary"])
def test_moesp_recovers_known_system(variant):
    sys_d, w, z = _two_dof()
    u = np.random.default_rng(0).standard_normal((3000, 1))
    y = _simulate(sys_d, u)
    real = sysid.moesp_identify(u, y, 10, 4, 0.01, variant=variant)
    modes, reals = sysid.extract_modes(real)
    assert not reals
    np.testing.assert_allclose([m.omega for m in modes], w, rtol=1e-6)
    np.testing.assert_allclose([m.damping for m in modes], z, rtol=1e-6)
    ysim = real.simulate(u)
    assert np.max(np.abs(ysim - y)) < 1e-6 * np.max(np.abs(y))


def test_order_too_high():
    # SDOF data cannot support a fourth-order model
    A = np.array([[0.99, 0.1], [-0.1, 0.99]])
    sys_d = (A, np.array([[0.0], [1.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 1)))
    u = np.random.default_rng(1).standard_normal((1000, 1))
    y = _simulate(sys_d, u)
    with pytest.raises(sysid.OrderTooHighError) as exc:
        sysid.moesp_identify(u, y, 8, 4)
    assert exc.value.rank == 2
    with pytest.raises(sysid.OrderTooHighError):
        sysid.moesp_identify(u, y, 2, 4)


def test_zero_input_channel_dropped():
    sys_d, w, _ = _two_dof()
    u = np.random.default_rng(2).standard_normal((2000, 1))
    y = _simulate(sys_d, u)
    u2 = np.hstack([u, np.zeros_like(u)])
    real = sysid.moesp_identify(u2, y, 10, 4, 0.01)
    assert not np.any(real.B[:, 1]) and not np.any(real.D[:, 1])
    modes, _ = sysid.extract_modes(real)
    np.testing.assert_allclose([m.omega for m in modes], w, rtol=1e-6)
    with pytest.raises(sysid.IdentificationError):
        sysid.moesp_identify(np.zeros_like(u), y, 10, 4)


def test_stochastic_realization_free_decay():
    sys_d, w, z = _two_dof()
    y = _simulate(sys_d, np.zeros((3000, 1)), x0=np.array([0.01, -0.02, 0.0, 0.0]))
    real = sysid.stochastic_realization(y, 10, 4, 0.01)
    modes, _ = sysid.extract_modes(real)
    np.testing.assert_allclose([m.omega for m in modes], w, rtol=1e-4)
    np.testing.assert_allclose([m.damping for m in modes], z, rtol=1e-4)


def test_stochastic_realization_white_noise_response():
    sys_d, w, _ = _two_dof()
    u = np.random.default_rng(4).standard_normal((40000, 1))
    y = _simulate(sys_d, u)
    modes, _ = sysid.extract_modes(sysid.stochastic_realization(y, 20, 4, 0.01))
    np.testing.assert_allclose([m.omega for m in modes], w, rtol=0.02)


def test_extract_modes_pairs_and_real_poles():
    dt = 0.01
    s = complex(-0.3, 20.0)
    lam = np.exp(s * dt)
    A = np.zeros((3, 3))
    A[:2, :2] = [[lam.real, -lam.imag], [lam.imag, lam.real]]
    A[2, 2] = 0.5
    real = sysid.StateSpaceRealization(A, None, np.eye(3), None, dt)
    modes, reals = sysid.extract_modes(real, ["accel", "accel", "msr"])
    assert len(modes) == 1 and len(reals) == 1
    assert modes[0].omega == pytest.approx(abs(s), rel=1e-12)
    assert modes[0].damping == pytest.approx(0.3 / abs(s), rel=1e-10)
    assert modes[0].accel.shape == (2,) and modes[0].strain.shape == (1,)
    assert reals[0].real == pytest.approx(np.log(0.5) / dt)


def test_select_modes_filters_damping_and_band():
    mk = lambda w, z: sysid.ComplexMode(w, z, 0j, np.ones(1), np.ones(1), np.ones(0))
    modes = [mk(1.0, -0.01), mk(2.0, 0.05), mk(3.0, 0.5), mk(4.0, 0.02), mk(500.0, 0.01)]
    chosen = sysid.select_modes(modes, 2, (0, 100))
    assert [m.omega for m in chosen] == [2.0, 4.0]
    with pytest.raises(sysid.IdentificationError):
        sysid.select_modes(modes, 3, (0, 100))


def test_ma_to_md():
    np.testing.assert_allclose(sysid.ma_to_md(np.array([4.0, -8.0]), 2.0), [-1.0, 2.0])
    np.testing.assert_allclose(sysid.md_to_ma(sysid.ma_to_md([1 + 2j], 3.0), 3.0), [1 + 2j])
    with pytest.raises(ValueError):
        sysid.ma_to_md([1.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.integers(0, 2**31 - 1))
def test_rotation_recovers_real_shapes(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(4)
    r = rng.standard_normal(3)
    d[1] = abs(d[1]) + 0.1
    r[0] = abs(r[0]) + 0.1
    # common phase for a proportionally damped mode
    dr, rr = sysid.rotate_to_real(d * np.exp(1j * alpha), r * np.exp(1j * alpha), 1, 0)
    np.testing.assert_allclose(dr, d, atol=1e-12)
    np.testing.assert_allclose(rr, r, atol=1e-12)
    # independent MSR phase without sign preservation: reference comes out positive
    dr, rr = sysid.rotate_to_real(d * np.exp(1j * alpha), r * np.exp(1j * beta), 1, 0, preserve_relative_sign=False)
    assert dr[1] > 0 and rr[0] > 0


def test_relative_sign_preserved():
    d = np.array([1.0, 0.5])
    r = np.array([-2.0, 1.0])
    ph = np.exp(0.7j)
    dr, rr = sysid.rotate_to_real(d * ph, r * ph, 0, 0)
    np.testing.assert_allclose(rr, r, atol=1e-12)
    _, rr2 = sysid.rotate_to_real(d * ph, r * ph, 0, 0, preserve_relative_sign=False)
    np.testing.assert_allclose(rr2, -r, atol=1e-12)


def test_magnitude_phase_matches_real_part_for_real_modes():
    d = np.array([1.0, -0.5, 0.2])
    r = np.array([3.0, -1.0])
    ph = np.exp(-1.1j)
    a = sysid.rotate_to_real(d * ph, r * ph, 0, 0)
    b = sysid.rotate_to_real(d * ph, r * ph, 0, 0, magnitude_phase=True)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_reference_zero_rejected():
    with pytest.raises(sysid.ReferenceSelectionError):
        sysid.rotate_to_real(np.array([0.0, 1.0j]), np.array([1.0]), 0, 0)
    with pytest.raises(sysid.ReferenceSelectionError):
        sysid.rotate_to_real(np.array([1.0, 1.0j]), np.array([0.0, 1.0]), 0, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_normalization_scale_invariant(scale, seed):
    rng = np.random.default_rng(seed)
    d, r = rng.standard_normal(5), rng.standard_normal(4)
    d1, r1, f1 = sysid.normalize_pair(d, r)
    d2, r2, f2 = sysid.normalize_pair(scale * d, scale * r)
    assert np.linalg.norm(d1) == pytest.approx(1.0)
    np.testing.assert_allclose(d1, d2, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(r1, r2, rtol=1e-10, atol=1e-14)
    assert f2 == pytest.approx(scale * f1)


def test_normalize_zero_md():
    with pytest.raises(ValueError):
        sysid.normalize_pair(np.zeros(3), np.ones(2))


def test_strain_to_mbm():
    # E = 205 GPa, Z = 1.0e-3 m^3, strains +-100e-6
    m = sysid.strain_to_mbm(100e-6, -100e-6, 2.05e11, 1.0e-3)
    assert m == pytest.approx(2.05e4)
    with pytest.raises(ValueError):
        sysid.strain_to_mbm(1e-6, 0.0, -1.0, 1.0)
    # two sections on a linear moment diagram extrapolate exactly to the ends
    z = np.array([0.0, 3.0])
    ends = sysid.interpolate_moments(10.0, 0.5, 5.0, 2.5, z)
    np.testing.assert_allclose(ends, [11.25, 3.75])


def test_dataset_json_round_trip(tmp_path):
    ds = sysid.ModalDataset(
        [sysid.ModalEntry(22.2, 0.02, np.array([0.6, 0.8]), np.array([1e4, -2e4]), 0, 1, 3.5)],
        ["3x", "5x"], ["r1i", "r2i"], {"seed": 4},
    )
    p = tmp_path / "modes.json"
    ds.to_json(p)
    back = sysid.ModalDataset.from_json(p)
    np.testing.assert_array_equal(back.D, ds.D)
    np.testing.assert_array_equal(back.R, ds.R)
    assert back.modes[0].ref_r == 1 and back.metadata == {"seed": 4}


def test_two_storey_noise_free_identification():
    model = load_two_storey_frame()
    tk, tm = model.targets()
    mats = assemble(model, tk, tm)
    w, phi = solve_modal(mats.K_red, mats.mass_red)
    spec = GroundMotionSpec(seed=0)
    res = integrate(model, tk, tm, 0.02, synthesize_record(spec), spec.dt, method="exact")
    ds = sysid.identify_dataset(res.channels(), spec.dt, ["a1x"], res.accel_labels, res.moment_labels,
                                sysid.SysIdSettings(order=10))
    assert ds.md_labels == model.master_labels()
    np.testing.assert_allclose(ds.omega, w[:2], rtol=1e-6)
    for k, e in enumerate(ds.modes):
        assert sysid_mac(phi[:, k], e.d_bar) > 0.9999
        mbm = mats.S @ e.d_bar
        assert np.max(np.abs(e.r_bar - mbm)) <= 1e-3 * np.max(np.abs(mbm))


def sysid_mac(a, b):
    return (a @ b) ** 2 / ((a @ a) * (b @ b))
