import math

import numpy as np
import pytest
from scipy import integrate as quad_int
from scipy import stats

from frameupdate.bayes import (
    AdaptationError,
    DegenerateChainError,
    ModalPosterior,
    NUTSConfig,
    Priors,
    leapfrog,
    rhat,
    sample,
    sample_posterior,
    true_dataset,
)
from frameupdate.bayes.nuts import run_chain
from frameupdate.bayes.posterior import LOG_2PI
from frameupdate.frame_core import FrameModel, assemble, load_two_storey_frame


@pytest.fixture(scope="module")
def two_storey():
    return load_two_storey_frame()


@pytest.fixture(scope="module")
def frame_posterior(two_storey):
    tk, tm = two_storey.targets()
    return ModalPosterior(two_storey, true_dataset(two_storey, tk, tm))


def _interior_x(post, rng):
    x = np.empty(post.dim)
    nb = post.n_bounded
    x[:nb] = post.lower + post.width * rng.uniform(0.1, 0.9, nb)
    x[nb:] = rng.uniform(0.5, 2.0, 3) * post.half_normal_scales
    return x


# -- likelihood algebra -----------------------------------------------------------


def test_zero_residual_leaves_normalising_constant(frame_posterior):
    p = frame_posterior
    K, N = p.n_modes, p.d_bar.shape[0]
    sw, sd = 0.7, 0.02
    v = p.log_likelihood_modal(p.omega_bar, p.d_bar, sw, sd)
    const = -K * (math.log(sw) + 0.5 * LOG_2PI) - K * N * (math.log(sd) + 0.5 * LOG_2PI)
    assert v == pytest.approx(const, abs=1e-12)


def test_unit_standardised_frequency_residual(frame_posterior):
    p = frame_posterior
    sw, sd = 0.7, 0.02
    base = p.log_likelihood_modal(p.omega_bar, p.d_bar, sw, sd)
    om = p.omega_bar.copy()
    om[0] -= sw
    assert p.log_likelihood_modal(om, p.d_bar, sw, sd) - base == pytest.approx(-0.5, abs=1e-12)


def test_doubling_sigma_d(frame_posterior):
    p = frame_posterior
    K, N = p.n_modes, p.d_bar.shape[0]
    rng = np.random.default_rng(3)
    d = p.d_bar + 0.01 * rng.standard_normal(p.d_bar.shape)
    sw, sd = 1.0, 0.02
    def parts(s):
        total = p.log_likelihood_modal(p.omega_bar, d, sw, s)
        const = -K * (math.log(sw) + 0.5 * LOG_2PI) - K * N * (math.log(s) + 0.5 * LOG_2PI)
        return total - const, const
    e1, c1 = parts(sd)
    e2, c2 = parts(2 * sd)
    assert e2 / e1 == pytest.approx(0.25, rel=1e-12)
    assert c2 - c1 == pytest.approx(-K * N * math.log(2.0), rel=1e-12)


def test_static_zero_and_unit_residual(frame_posterior):
    p = frame_posterior
    sr = 3.0e4
    n = p.r_bar.size
    base = p.log_likelihood_static(p.r_bar, sr)
    assert base == pytest.approx(-n * (math.log(sr) + 0.5 * LOG_2PI), abs=1e-9)
    r = p.r_bar.copy()
    r[2, 1] += sr
    assert p.log_likelihood_static(r, sr) - base == pytest.approx(-0.5, abs=1e-9)


def test_static_term_ignores_mass_given_modes(frame_posterior):
    p = frame_posterior
    rng = np.random.default_rng(5)
    x = _interior_x(p, rng)
    tm, tk, sig = p.split(x)
    ev1 = p.evaluate(x)
    x2 = x.copy()
    x2[: p.n_mass] *= 1.3
    ev2 = p.evaluate(x2)
    S = p.static_map(tk)
    np.testing.assert_allclose(ev1.r_hat, S @ ev1.d_hat, rtol=1e-10, atol=1e-6)
    np.testing.assert_allclose(ev2.r_hat, S @ ev2.d_hat, rtol=1e-10, atol=1e-6)
    # same simulated modes -> same static term whatever the masses
    assert p.log_likelihood_static(S @ ev1.d_hat, sig[2]) == pytest.approx(ev1.log_lik_static, rel=1e-12)


# -- transform, bounds, gradient ---------------------------------------------------


def test_transform_round_trip(frame_posterior):
    p = frame_posterior
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = _interior_x(p, rng)
        np.testing.assert_allclose(p.to_constrained(p.to_unconstrained(x)), x, rtol=1e-12)


def test_density_at_bounds_is_minus_infinity(frame_posterior):
    p = frame_posterior
    z = p.to_unconstrained(_interior_x(p, np.random.default_rng(1)))
    for idx, val in [(0, 1e4), (3, -1e4), (p.dim - 1, 1e4)]:
        zz = z.copy()
        zz[idx] = val
        assert p.log_density(zz) == -np.inf
        v, g = p.log_density_and_gradient(zz)
        assert v == -np.inf and np.all(g == 0)
    tk_edge = _interior_x(p, np.random.default_rng(1))
    tk_edge[p.n_mass] = 0.0
    assert p.log_prior(tk_edge) > -np.inf  # on the closed support
    assert p.log_density(p.to_unconstrained(tk_edge)) == -np.inf


def test_gradient_matches_finite_differences(frame_posterior):
    p = frame_posterior
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        z = p.to_unconstrained(_interior_x(p, rng))
        v, g = p.log_density_and_gradient(z)
        assert v == pytest.approx(p.log_density(z), rel=1e-12, abs=1e-9)
        fd = p.fd_gradient(z, h=1e-5)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0)))
    assert worst < 1e-5


def test_gradient_modal_only_and_static_only(two_storey):
    tk, tm = two_storey.targets()
    ds = true_dataset(two_storey, tk, tm)
    rng = np.random.default_rng(9)
    for flags in ({"use_static": False}, {"use_modal": False}):
        p = ModalPosterior(two_storey, ds, **flags)
        for _ in range(4):
            z = p.to_unconstrained(_interior_x(p, rng))
            _, g = p.log_density_and_gradient(z)
            fd = p.fd_gradient(z)
            assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-5


def _cantilever(scale_bounds=(-1.0, 1.0)):
    # vertical members only: axial and lateral response decouple exactly,
    # so the EI multiplier scales the lateral reduced stiffness exactly
    data = {
        "units": {"length": "m", "force": "N"},
        "nodes": [{"id": "1", "x": 0, "y": 0}, {"id": "2", "x": 0, "y": 3}, {"id": "3", "x": 0, "y": 6}],
        "elements": [
            {"id": "e1", "nodes": ["1", "2"], "E": 2.05e11, "A": 6.67e-3, "I": 3.99e-5, "stiffness_scale": "s"},
            {"id": "e2", "nodes": ["2", "3"], "E": 2.05e11, "A": 6.67e-3, "I": 3.99e-5, "stiffness_scale": "s"},
        ],
        "supports": [{"node": "1", "dofs": ["x", "y", "rz"]}],
        "parameters": [
            {"name": "s", "kind": "log10_scale", "bounds": list(scale_bounds), "target": 0.0},
            {"name": "m1", "kind": "mass", "bounds": [0, 1e4], "target": 2000.0},
            {"name": "m2", "kind": "mass", "bounds": [0, 1e4], "target": 1000.0},
        ],
        "extra_masses": [{"node": "2", "dofs": ["x"], "parameter": "m1"}, {"node": "3", "dofs": ["x"], "parameter": "m2"}],
        "master_dofs": [["2", "x"], ["3", "x"]],
        "observed_components": [
            {"name": "r1i", "element": "e1", "component": "Mi"},
            {"name": "r2i", "element": "e2", "component": "Mi"},
        ],
    }
    return FrameModel.from_dict(data)


def test_eigenvalue_preserving_direction():
    model = _cantilever()
    ds = true_dataset(model, np.array([0.0]), np.array([2000.0, 1000.0]))
    c = 2.0
    x1 = np.array([1500.0, 800.0, 0.1, 1.0, 0.01, 2e4])
    x2 = x1.copy()
    x2[:2] *= c
    x2[2] += math.log10(c)
    modal = ModalPosterior(model, ds, use_static=False)
    full = ModalPosterior(model, ds)
    e1, e2 = modal.evaluate(x1), modal.evaluate(x2)
    np.testing.assert_allclose(e2.omega, e1.omega, rtol=1e-12)
    assert e2.log_lik_modal == pytest.approx(e1.log_lik_modal, rel=1e-10, abs=1e-9)
    assert modal.log_density_constrained(x2) - modal.log_density_constrained(x1) == pytest.approx(0.0, abs=1e-8)
    # moments double with the stiffness, so the static term notices
    np.testing.assert_allclose(e2.r_hat, c * e1.r_hat, rtol=1e-10)
    assert abs(full.log_density_constrained(x2) - full.log_density_constrained(x1)) > 1.0


def test_log10_scale_gradient():
    model = _cantilever()
    ds = true_dataset(model, np.array([0.2]), np.array([2000.0, 1000.0]))
    p = ModalPosterior(model, ds)
    rng = np.random.default_rng(4)
    for _ in range(5):
        z = p.to_unconstrained(_interior_x(p, rng))
        _, g = p.log_density_and_gradient(z)
        fd = p.fd_gradient(z)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-5


def test_priors_validation(two_storey):
    with pytest.raises(ValueError):
        Priors({"a": (1.0, 0.0)})
    with pytest.raises(ValueError):
        Priors.from_model(two_storey, s_d=0.0)


# -- sampler on toy targets -------------------------------------------------------


def _gauss(prec):
    prec = np.atleast_2d(prec)
    def f(q):
        g = -prec @ q
        return 0.5 * float(q @ g), g
    return f


@pytest.fixture(scope="module")
def toy_run():
    cfg = NUTSConfig(chains=4, draws=1000, burn_in=500, seed=11)
    rng = np.random.default_rng(0)
    inits = [rng.uniform(-2, 2, 3) for _ in range(4)]
    return sample(_gauss(np.eye(3)), inits, cfg)


def test_toy_gaussian_moments(toy_run):
    x = np.concatenate([r.draws for r in toy_run])
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)
    v = x.var(axis=0)
    assert np.all((v > 0.9) & (v < 1.1))


def test_toy_gaussian_rhat(toy_run):
    for j in range(3):
        assert rhat(np.stack([r.draws[:, j] for r in toy_run])) < 1.01


def test_correlated_gaussian():
    rho = 0.9
    cov = np.array([[1, rho], [rho, 1]])
    cfg = NUTSConfig(chains=4, draws=1000, burn_in=500, seed=3)
    res = sample(_gauss(np.linalg.inv(cov)), [np.zeros(2)] * 4, cfg)
    x = np.concatenate([r.draws for r in res])
    assert abs(np.corrcoef(x.T)[0, 1] - rho) < 0.03


def test_leapfrog_second_order():
    f = _gauss(np.diag([1.0, 4.0]))
    q0, p0 = np.array([1.0, -0.5]), np.array([0.3, 0.8])
    def drift(eps, T=1.0):
        q, p = q0.copy(), p0.copy()
        lp, g = f(q)
        H0 = -lp + 0.5 * p @ p
        for _ in range(int(round(T / eps))):
            q, p, lp, g = leapfrog(f, q, p, g, eps, np.ones(2))
        return abs(-lp + 0.5 * p @ p - H0)
    ratio = drift(0.02) / drift(0.01)
    assert 3.6 < ratio < 4.4


def test_hmc_double_well_detailed_balance():
    def logp(q):
        x = q[0]
        return -(x**2 - 1.0) ** 2 * 2.0, np.array([-8.0 * x * (x**2 - 1.0)])
    cfg = NUTSConfig(chains=1, draws=100_000, burn_in=1000, seed=5, algorithm="hmc", hmc_steps=8, step_size=0.25)
    x = sample(logp, [np.array([0.5])], cfg)[0].draws[:, 0]
    Z = quad_int.quad(lambda t: math.exp(-2.0 * (t * t - 1) ** 2), -4, 4)[0]
    def cdf(t):
        t = np.atleast_1d(t)
        return np.array([quad_int.quad(lambda s: math.exp(-2.0 * (s * s - 1) ** 2), -4, v)[0] for v in t]) / Z
    grid = np.linspace(-2.2, 2.2, 221)
    emp = np.searchsorted(np.sort(x), grid, side="right") / x.size
    assert np.max(np.abs(emp - cdf(grid))) < 0.05


def test_prior_only_sampling_recovers_priors(two_storey):
    priors = Priors.from_model(two_storey)
    post = ModalPosterior(two_storey, None, priors, use_modal=False, use_static=False)
    cfg = NUTSConfig(chains=4, draws=2500, burn_in=500, seed=21)
    s = sample_posterior(post, cfg)
    for j, name in enumerate(post.names):
        x = s.flat(name)
        if j < post.n_bounded:
            lo, hi = post.lower[j], post.upper[j]
            d = stats.kstest(x, stats.uniform(lo, hi - lo).cdf).statistic
        else:
            d = stats.kstest(x, stats.halfnorm(scale=post.half_normal_scales[j - post.n_bounded]).cdf).statistic
        assert d < 0.02, (name, d)


def test_all_divergent_warmup_raises():
    z0 = np.zeros(2)
    def cliff(q):
        if np.array_equal(q, z0):
            return 0.0, np.zeros(2)
        return -np.inf, np.zeros(2)
    cfg = NUTSConfig(chains=1, draws=5, burn_in=20, step_size=0.5, adapt_metric=False)
    with pytest.raises(AdaptationError) as info:
        run_chain(cliff, z0, cfg, np.random.SeedSequence(0))
    assert info.value.diagnostics["warmup_divergences"] == 20


def test_sampler_deterministic_given_seed():
    cfg = NUTSConfig(chains=2, draws=50, burn_in=50, seed=8)
    f = _gauss(np.eye(2))
    a = sample(f, [np.ones(2), -np.ones(2)], cfg)
    b = sample(f, [np.ones(2), -np.ones(2)], cfg)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.draws, rb.draws)
    c = sample(f, [np.ones(2), -np.ones(2)], NUTSConfig(chains=2, draws=50, burn_in=50, seed=9))
    assert not np.array_equal(a[0].draws, c[0].draws)


def test_chains_use_distinct_streams():
    cfg = NUTSConfig(chains=2, draws=50, burn_in=20, seed=1)
    a = sample(_gauss(np.eye(2)), [np.zeros(2), np.zeros(2)], cfg)
    assert not np.array_equal(a[0].draws, a[1].draws)


# -- R-hat --------------------------------------------------------------------------


def test_rhat_identical_chains():
    x = np.random.default_rng(0).standard_normal(1000)
    assert rhat(np.stack([x, x, x]), split=False) == pytest.approx(1.0, abs=1e-12)
    y = np.concatenate([x[:500], x[:500]])
    assert rhat(np.stack([y, y])) == pytest.approx(1.0, abs=1e-12)


def test_rhat_separated_chains():
    rng = np.random.default_rng(1)
    assert rhat(np.stack([rng.standard_normal(1000), 10 + rng.standard_normal(1000)])) > 3.0


def test_rhat_errors():
    with pytest.raises(DegenerateChainError):
        rhat(np.ones((3, 100)))
    with pytest.raises(ValueError):
        rhat(np.zeros((1, 100)))
    with pytest.raises(ValueError):
        rhat(np.random.default_rng(0).standard_normal((2, 5)))


# -- posterior draws obey the frame invariants ---------------------------------------


def test_frame_invariants_at_posterior_draws(two_storey, frame_posterior):
    cfg = NUTSConfig(chains=1, draws=40, burn_in=40, max_depth=6, seed=2)
    s = sample_posterior(frame_posterior, cfg)
    assert s.draws.shape == (1, 40, frame_posterior.dim)
    p = frame_posterior
    for x in s.flat_draws():
        assert np.all(x[: p.n_bounded] >= p.lower) and np.all(x[: p.n_bounded] <= p.upper)
        assert np.all(x[p.n_bounded :] > 0)
        tm, tk, _ = p.split(x)
        m = assemble(two_storey, tk, tm)
        np.testing.assert_allclose(m.K, m.H @ m.Km @ m.H.T, rtol=0, atol=1e-9 * np.abs(m.K).max())
        ev = p.evaluate(x)
        for k in range(p.n_modes):
            d = ev.d_hat[:, k]
            res = m.K_red @ d - ev.omega[k] ** 2 * (m.mass_red * d)
            assert np.linalg.norm(res) < 1e-8 * np.linalg.norm(m.K_red @ d)
