"""Compartment dynamics and driver transitions against hand-derived values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epismc import (
    BkParams,
    BlackKarasinski,
    BrownianMotion,
    GeometricBrownianMotion,
    OrnsteinUhlenbeck,
    SihrParams,
    StateVector,
    advance_log_beta,
    bk_exact_step,
    driver_step,
    euler_step,
    sihr_derivatives,
    simulate_trajectory,
)
from epismc.model import _clamp_rebalance
from epismc.rng import substream


# Hand oracle at S=990, I=10, H=0, R=0, N=1000, beta=0.5, alpha=1/7,
# gamma=0.1, eta=0.1:
#   infection = 0.5*990*10/1000 = 4.95
#   exits     = 10/7
#   dS = -4.95
#   dI = 4.95 - 10/7
#   dH = 0.1*10/7 - 0 = 1/7
#   dR = 0.9*10/7 + 0 = 9/7
def test_derivatives_hand_oracle(small_state, small_sihr):
    ds, di, dh, dr = sihr_derivatives(small_state, small_sihr)
    assert ds == pytest.approx(-4.95, abs=1e-14)
    assert di == pytest.approx(4.95 - 10.0 / 7.0, abs=1e-14)
    assert dh == pytest.approx(1.0 / 7.0, abs=1e-14)
    assert dr == pytest.approx(9.0 / 7.0, abs=1e-14)
    assert ds + di + dh + dr == pytest.approx(0.0, abs=1e-12)


def test_euler_single_substep_hand_oracle(small_state, small_sihr):
    out = euler_step(small_state, small_sihr, dt=1.0, substeps=1)
    assert out.s == pytest.approx(990.0 - 4.95, abs=1e-12)
    assert out.i == pytest.approx(10.0 + 4.95 - 10.0 / 7.0, abs=1e-12)
    assert out.h == pytest.approx(1.0 / 7.0, abs=1e-12)
    assert out.r == pytest.approx(9.0 / 7.0, abs=1e-12)
    assert out.log_beta == small_state.log_beta


def test_euler_conserves_population(small_state, small_sihr):
    state = small_state
    for _ in range(50):
        state = euler_step(state, small_sihr, dt=1.0, substeps=10)
        assert state.total == pytest.approx(1000.0, abs=1e-9)
        assert state.s >= 0 and state.i >= 0 and state.h >= 0 and state.r >= 0


def test_euler_clamps_overshoot_into_largest():
    # eta*dt = 2 would drive H negative in one raw Euler increment
    params = SihrParams(n=1000.0, alpha=0.01, gamma=0.0, eta=2.0)
    state = StateVector(s=900.0, i=50.0, h=30.0, r=20.0, log_beta=-50.0)
    out = euler_step(state, params, dt=1.0, substeps=1)
    assert out.h == 0.0
    assert out.total == pytest.approx(1000.0, abs=1e-9)


def test_clamp_rebalance_scalar_and_tie():
    s, i, h, r = _clamp_rebalance(-2.0, 5.0, 5.0, 1.0)
    # deficit -2 lands on the first compartment attaining the max
    assert (s, i, h, r) == (0.0, 3.0, 5.0, 1.0)
    assert isinstance(i, float)
    s, i, h, r = _clamp_rebalance(4.0, 3.0, 2.0, 1.0)
    assert (s, i, h, r) == (4.0, 3.0, 2.0, 1.0)


def test_clamp_rebalance_array():
    s, i, h, r = _clamp_rebalance(
        np.array([-1.0, 10.0]),
        np.array([6.0, -2.0]),
        np.array([4.0, 1.0]),
        np.array([1.0, 1.0]),
    )
    np.testing.assert_allclose(s, [0.0, 8.0])
    np.testing.assert_allclose(i, [5.0, 0.0])
    np.testing.assert_allclose(h, [4.0, 1.0])
    np.testing.assert_allclose(r, [1.0, 1.0])


def test_bk_step_closed_form():
    # a = exp(-ln 2) = 1/2, eps = 0: 0*1/2 + (-1.3)*(1 - 1/2) = -0.65
    bk = BkParams(lam=1.0, mu=-1.3, sigma=0.4)
    assert bk_exact_step(0.0, bk, np.log(2.0), 0.0) == pytest.approx(-0.65, abs=1e-15)


def test_bk_step_dt_zero_identity():
    bk = BkParams(lam=0.3, mu=-1.0, sigma=0.5)
    assert bk_exact_step(0.7, bk, 0.0, 3.0) == pytest.approx(0.7, abs=0.0)


def test_bk_step_stationary_limit():
    bk = BkParams(lam=2.0, mu=-1.3, sigma=0.4)
    out = bk_exact_step(5.0, bk, 1e6, 1.7)
    assert out == pytest.approx(-1.3 + 0.4 * 1.7, abs=1e-12)


def test_bk_composition_is_exact():
    # two dt/2 steps with independent draws must match the one-step
    # closed-form law; 1e5 samples, 3 SE tolerance on mean and variance
    bk = BkParams(lam=0.2, mu=-1.0, sigma=0.6)
    dt, x0, n = 3.0, 0.5, 100_000
    rng = substream(42)
    e1, e2 = rng.standard_normal((2, n))
    half = bk_exact_step(bk_exact_step(x0, bk, dt / 2.0, e1), bk, dt / 2.0, e2)
    a = np.exp(-bk.lam * dt)
    mean_exact = a * x0 + bk.mu * (1.0 - a)
    var_exact = bk.sigma**2 * (1.0 - np.exp(-2.0 * bk.lam * dt))
    se_mean = np.sqrt(var_exact / n)
    assert abs(half.mean() - mean_exact) < 3.0 * se_mean
    se_var = var_exact * np.sqrt(2.0 / (n - 1))
    assert abs(half.var(ddof=1) - var_exact) < 3.0 * se_var


def test_driver_step_bm_deterministic_drift():
    bm = BrownianMotion(drift=0.02, volatility=0.0)
    advanced, degenerate = driver_step(0.4, bm, 1.0, 0.0)
    assert advanced == pytest.approx(0.42, abs=1e-15)
    assert degenerate is False or degenerate == False  # noqa: E712


def test_driver_step_flags_nonpositive_beta():
    bm = BrownianMotion(drift=-1.0, volatility=0.0)
    advanced, degenerate = driver_step(0.4, bm, 1.0, 0.0)
    assert advanced == pytest.approx(-0.6)
    assert bool(degenerate) is True
    ou = OrnsteinUhlenbeck(lam=1e9, mu=-2.0, sigma=0.0)
    advanced, degenerate = driver_step(0.4, ou, 1.0, 0.0)
    assert advanced == pytest.approx(-2.0)
    assert bool(degenerate) is True


def test_advance_log_beta_floors_degenerate_paths():
    bm = BrownianMotion(drift=-1.0, volatility=0.0)
    lb, dead = advance_log_beta(np.log(0.4), bm, 1.0, 0.0)
    assert dead is True
    assert np.isfinite(lb) and lb < -600.0


def test_advance_log_beta_gbm_matches_bm_on_log_scale():
    gbm = GeometricBrownianMotion(drift=0.1, volatility=0.2)
    lb, dead = advance_log_beta(-1.0, gbm, 1.0, 0.5)
    assert lb == pytest.approx(-1.0 + 0.1 + 0.2 * 0.5, abs=1e-15)
    assert dead is False


@given(
    beta=st.floats(0.01, 1.5),
    i0=st.floats(0.0, 1000.0),
    alpha=st.floats(0.01, 1.0),
    gamma=st.floats(0.0, 1.0),
    eta=st.floats(0.01, 3.0),
    substeps=st.integers(1, 10),
)
@settings(max_examples=60, deadline=None)
def test_euler_conservation_property(beta, i0, alpha, gamma, eta, substeps):
    # conservation and positivity must survive even forced clamping
    # (eta up to 3/day guarantees overshoot at one substep)
    params = SihrParams(n=1000.0, alpha=alpha, gamma=gamma, eta=eta)
    state = StateVector(
        s=1000.0 - i0 - 1.0, i=i0, h=1.0, r=0.0, log_beta=np.log(beta)
    )
    for _ in range(5):
        state = euler_step(state, params, dt=1.0, substeps=substeps)
        assert state.total == pytest.approx(1000.0, rel=1e-12)
        assert min(state.s, state.i, state.h, state.r) >= 0.0


def test_simulate_shapes_and_determinism(small_sihr, table1_bk):
    init = StateVector(s=990.0, i=10.0, h=0.0, r=0.0, log_beta=np.log(0.4))
    t1 = simulate_trajectory(init, small_sihr, table1_bk, t_end=40.0, rng_seed=7)
    t2 = simulate_trajectory(init, small_sihr, table1_bk, t_end=40.0, rng_seed=7)
    assert len(t1) == 41
    assert t1.times[-1] == 40.0
    np.testing.assert_array_equal(t1.h, t2.h)
    np.testing.assert_array_equal(t1.log_beta, t2.log_beta)
    t3 = simulate_trajectory(init, small_sihr, table1_bk, t_end=40.0, rng_seed=8)
    assert not np.array_equal(t1.log_beta, t3.log_beta)
    assert not t1.degenerate.any()


def test_simulate_sigma_zero_beta_converges_to_mu(small_sihr):
    driver = BlackKarasinski(BkParams(lam=0.5, mu=-1.3, sigma=0.0))
    init = StateVector(s=999.0, i=1.0, h=0.0, r=0.0, log_beta=-2.0)
    traj = simulate_trajectory(init, small_sihr, driver, t_end=60.0, rng_seed=0)
    # deterministic pull toward mu: exact geometric decay of the gap
    gap0 = -2.0 - (-1.3)
    expected = -1.3 + gap0 * np.exp(-0.5 * np.arange(61))
    np.testing.assert_allclose(traj.log_beta, expected, atol=1e-12)


def test_simulate_no_infected_no_hospitalizations(small_sihr, table1_bk):
    init = StateVector(s=1000.0, i=0.0, h=0.0, r=0.0, log_beta=-1.0)
    traj = simulate_trajectory(init, small_sihr, table1_bk, t_end=30.0, rng_seed=3)
    np.testing.assert_array_equal(traj.h, np.zeros(31))
    np.testing.assert_array_equal(traj.i, np.zeros(31))
    np.testing.assert_array_equal(traj.s, np.full(31, 1000.0))


def test_simulate_batch_matches_scalar(small_sihr, table1_bk):
    # a batch with identical rows must reproduce the scalar path through
    # the shared rng stream only if seeds differ per row; here we check
    # shape plumbing and conservation instead
    init = StateVector(
        s=np.full(6, 990.0),
        i=np.full(6, 10.0),
        h=np.zeros(6),
        r=np.zeros(6),
        log_beta=np.full(6, np.log(0.4)),
    )
    traj = simulate_trajectory(init, small_sihr, table1_bk, t_end=25.0, rng_seed=11)
    assert traj.s.shape == (26, 6)
    totals = traj.s + traj.i + traj.h + traj.r
    np.testing.assert_allclose(totals, 1000.0, atol=1e-9)


def test_simulate_degenerate_flag_is_cumulative(small_sihr):
    bm = BrownianMotion(drift=-0.5, volatility=0.0)
    init = StateVector(s=999.0, i=1.0, h=0.0, r=0.0, log_beta=np.log(0.9))
    traj = simulate_trajectory(init, small_sihr, bm, t_end=10.0, rng_seed=0)
    dead = traj.degenerate
    assert dead[-1]
    first = int(np.argmax(dead))
    assert dead[first:].all() and not dead[:first].any()


def test_param_validation():
    with pytest.raises(ValueError, match="gamma"):
        SihrParams(n=100.0, alpha=0.1, gamma=1.5, eta=0.1)
    with pytest.raises(ValueError, match="lam"):
        BkParams(lam=0.0, mu=-1.0, sigma=0.4)
    with pytest.raises(ValueError, match="sigma"):
        BkParams(lam=0.1, mu=-1.0, sigma=-0.1)
    with pytest.raises(ValueError, match="dt"):
        euler_step(
            StateVector(s=1.0, i=0.0, h=0.0, r=0.0, log_beta=0.0),
            SihrParams(n=1.0, alpha=0.1, gamma=0.1, eta=0.1),
            dt=0.0,
            substeps=1,
        )
