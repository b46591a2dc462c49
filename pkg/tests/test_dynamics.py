"""Market state updates: trade impact, relaxation, exogenous flow, impulses."""
import dataclasses
import math

import numpy as np
import pytest

from impactmm import autodiff as ad
from impactmm import dynamics as dyn
from impactmm import flows as fl
from impactmm import orderbook as ob
from impactmm.errors import ConfigError

BOOK = ob.BookShape(bid=ob.linear_side(100.0, 0.5), ask=ob.linear_side(100.0, 0.5))
IMPACT = dyn.Impact(eta=0.3, r=15120.0, rho=50400.0, floor=0.02)
FLOW = fl.SelfExcitingFlow(mu=7560.0, theta=1.0, kappa=0.0, lam0=7560.0)
EXCITED = fl.SelfExcitingFlow(mu=7560.0, theta=1.0, kappa=0.5, lam0=7560.0)
MARKS = fl.MarkLaw(kind="beta", a=2.0, b=5.0, value=1.0)


def fresh(n=4, P0=100.0, D0=0.0, S0=0.10, flow=FLOW):
    return dyn.initial_state(P0, D0, S0, flow, flow, n, IMPACT)


def test_impact_validation():
    with pytest.raises(ConfigError):
        dyn.Impact(eta=1.2, r=1.0, rho=1.0, floor=0.02)
    with pytest.raises(ConfigError):
        dyn.Impact(eta=0.3, r=-1.0, rho=1.0, floor=0.02)
    with pytest.raises(ConfigError):
        dyn.Impact(eta=0.3, r=1.0, rho=1.0, floor=0.0)


def test_initial_state_and_quotes():
    state = fresh(3)
    np.testing.assert_array_equal(state.P, [100.0] * 3)
    np.testing.assert_array_equal(dyn.best_bid(state), [99.95] * 3)
    np.testing.assert_array_equal(dyn.best_ask(state), [100.05] * 3)
    with pytest.raises(ConfigError):
        dyn.initial_state(100.0, 0.0, 0.01, FLOW, FLOW, 2, IMPACT)


def test_decay_closed_form():
    state = dyn.MarketState(P=np.array([100.0]), D=np.array([0.2]),
                            S=np.array([0.3]), lam_sell=np.array([9000.0]),
                            lam_buy=np.array([8000.0]))
    dt = 1e-4
    out = dyn.decay(state, IMPACT, FLOW, FLOW, dt)
    f_r = math.exp(-IMPACT.r * dt)
    f_rho = math.exp(-IMPACT.rho * dt)
    assert out.P[0] == pytest.approx(100.0 - 0.2 * (1 - f_r), rel=1e-14)
    assert out.D[0] == pytest.approx(0.2 * f_r, rel=1e-14)
    assert out.S[0] == pytest.approx(0.02 + 0.28 * f_rho, rel=1e-14)
    assert out.lam_sell[0] == pytest.approx(
        7560.0 + (9000.0 - 7560.0) * math.exp(-dt), rel=1e-14)


def test_decay_preserves_permanent_component():
    # P - D is the relaxation-invariant part of the mid
    state = dyn.MarketState(P=np.array([101.0, 99.0]), D=np.array([0.4, -0.3]),
                            S=np.array([0.1, 0.2]), lam_sell=np.zeros(2),
                            lam_buy=np.zeros(2))
    for dt in (1e-5, 1e-3, 0.5):
        out = dyn.decay(state, IMPACT, FLOW, FLOW, dt)
        np.testing.assert_allclose(out.P - out.D, state.P - state.D, rtol=1e-13)


def test_apply_sell_exact_split():
    state = fresh(1)
    out = dyn.apply_sell(state, BOOK, IMPACT, np.array([20.0]))
    # volume 20 on density 100 reaches x = 0.2
    assert out.P[0] == pytest.approx(100.0 - 0.1, abs=1e-14)
    assert out.D[0] == pytest.approx(-0.2 * 0.5 * 0.7, abs=1e-14)
    assert out.S[0] == pytest.approx(0.30, abs=1e-14)
    assert out.lam_sell[0] == state.lam_sell[0]


def test_apply_buy_mirrors_sell():
    state = fresh(1)
    up = dyn.apply_buy(state, BOOK, IMPACT, np.array([20.0]))
    dn = dyn.apply_sell(state, BOOK, IMPACT, np.array([20.0]))
    assert up.P[0] - 100.0 == pytest.approx(100.0 - dn.P[0], abs=1e-14)
    assert up.D[0] == pytest.approx(-dn.D[0], abs=1e-14)
    assert up.S[0] == dn.S[0]


def test_zero_volume_is_exact_noop():
    state = fresh(2)
    out = dyn.apply_sell(state, BOOK, IMPACT, np.zeros(2))
    np.testing.assert_array_equal(out.P, state.P)
    np.testing.assert_array_equal(out.D, state.D)
    np.testing.assert_array_equal(out.S, state.S)


def test_permanent_share_after_full_relaxation():
    # a sell of depth x moves the mid by x/2; only eta of that survives decay
    state = fresh(1)
    out = dyn.apply_sell(state, BOOK, IMPACT, np.array([30.0]))
    out = dyn.decay(out, IMPACT, FLOW, FLOW, dt=10.0)  # r*dt huge: D -> 0
    assert out.P[0] == pytest.approx(100.0 - 0.3 * 0.3 * 0.5, abs=1e-12)
    assert abs(out.D[0]) < 1e-12


# ----------------------------------------------------------- exogenous flow

DT = 0.0992 / 50


def test_exogenous_step_deterministic():
    a = dyn.exogenous_step(fresh(16), BOOK, IMPACT, FLOW, FLOW, MARKS, MARKS,
                           DT, seed=7, step=3, n_total=16)
    b = dyn.exogenous_step(fresh(16), BOOK, IMPACT, FLOW, FLOW, MARKS, MARKS,
                           DT, seed=7, step=3, n_total=16)
    np.testing.assert_array_equal(a[0].P, b[0].P)
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[2], b[2])
    c = dyn.exogenous_step(fresh(16), BOOK, IMPACT, FLOW, FLOW, MARKS, MARKS,
                           DT, seed=8, step=3, n_total=16)
    assert not np.array_equal(a[0].P, c[0].P)


def test_exogenous_step_lane_invariance():
    n = 64
    full_state = fresh(n)
    full, ns_f, nb_f = dyn.exogenous_step(full_state, BOOK, IMPACT, FLOW, FLOW,
                                          MARKS, MARKS, DT, seed=11, step=5,
                                          n_total=n)
    parts, ns_p, nb_p = [], [], []
    for lane in (slice(0, 20), slice(20, 64)):
        sub = dyn.MarketState(*(getattr(full_state, f)[lane]
                                for f in ("P", "D", "S", "lam_sell", "lam_buy")))
        st, ns, nb = dyn.exogenous_step(sub, BOOK, IMPACT, FLOW, FLOW, MARKS,
                                        MARKS, DT, seed=11, step=5, n_total=n,
                                        lane=lane)
        parts.append(st)
        ns_p.append(ns)
        nb_p.append(nb)
    np.testing.assert_array_equal(full.P, np.concatenate([p.P for p in parts]))
    np.testing.assert_array_equal(full.S, np.concatenate([p.S for p in parts]))
    np.testing.assert_array_equal(ns_f, np.concatenate(ns_p))
    np.testing.assert_array_equal(nb_f, np.concatenate(nb_p))


def test_exogenous_counts_mean():
    n = 2000
    _, n_sell, n_buy = dyn.exogenous_step(fresh(n), BOOK, IMPACT, FLOW, FLOW,
                                          MARKS, MARKS, DT, seed=3, step=0,
                                          n_total=n)
    mean = 7560.0 * DT
    tol = 3.0 * math.sqrt(mean / n)
    assert abs(n_sell.mean() - mean) < tol
    assert abs(n_buy.mean() - mean) < tol


def test_exogenous_zero_intensity_is_pure_decay():
    quiet = fl.SelfExcitingFlow(mu=0.0, theta=1.0, kappa=0.0, lam0=0.0)
    state = fresh(8, flow=quiet)
    out, n_sell, n_buy = dyn.exogenous_step(state, BOOK, IMPACT, quiet, quiet,
                                            MARKS, MARKS, DT, seed=1, step=0,
                                            n_total=8)
    assert n_sell.max() == 0 and n_buy.max() == 0
    want = dyn.decay(state, IMPACT, quiet, quiet, DT)
    np.testing.assert_array_equal(out.P, want.P)
    np.testing.assert_array_equal(out.S, want.S)


def test_exogenous_excitation_bookkeeping():
    # constant-zero marks: trades are no-ops but counts still excite the flow
    zero_marks = fl.MarkLaw(kind="constant", a=2.0, b=5.0, value=0.0)
    n = 32
    state = fresh(n, flow=EXCITED)
    out, n_sell, n_buy = dyn.exogenous_step(state, BOOK, IMPACT, EXCITED,
                                            EXCITED, zero_marks, zero_marks,
                                            DT, seed=2, step=1, n_total=n)
    base = EXCITED.decayed(state.lam_sell, DT)
    np.testing.assert_allclose(out.lam_sell, base + 0.5 * n_sell, rtol=1e-14)
    np.testing.assert_array_equal(out.P, state.P)  # zero volume moved nothing


# ----------------------------------------------------------------- impulses

def test_impulse_buy_books_cash_and_impact():
    state = fresh(1)
    out, cash, fee = dyn.apply_impulse(state, BOOK, IMPACT, EXCITED, EXCITED,
                                       np.array([30.0]), fee=0.25)
    # pays ask * q plus the walk up the ask side: 30^2 / 200
    assert cash[0] == pytest.approx(-(100.05 * 30.0 + 4.5), rel=1e-13)
    assert out.P[0] == pytest.approx(100.0 + 0.15, abs=1e-14)
    assert out.S[0] == pytest.approx(0.40, abs=1e-14)
    assert out.lam_buy[0] == pytest.approx(7560.0 + 0.5, rel=1e-14)
    assert out.lam_sell[0] == 7560.0
    assert fee[0] == 0.25


def test_impulse_sell_and_zero():
    state = fresh(3)
    dq = np.array([-30.0, 0.0, 30.0])
    out, cash, fee = dyn.apply_impulse(state, BOOK, IMPACT, EXCITED, EXCITED,
                                       dq, fee=0.25)
    assert cash[0] == pytest.approx(99.95 * 30.0 - 4.5, rel=1e-13)
    assert cash[1] == 0.0
    np.testing.assert_array_equal(fee, [0.25, 0.0, 0.25])
    assert out.lam_sell[0] == pytest.approx(7560.5)
    assert out.lam_buy[0] == 7560.0
    assert out.P[1] == 100.0


def test_impulse_cash_gradient():
    # marginal cost of the q-th bought unit is ask + q/density
    state = fresh(1)
    tape = ad.Tape()
    with ad.recording(tape):
        dq = tape.var(np.array([30.0]))
        _, cash, _ = dyn.apply_impulse(state, BOOK, IMPACT, EXCITED, EXCITED,
                                       dq, fee=0.25)
        tape.backward(ad.total(cash))
    assert dq.grad[0] == pytest.approx(-(100.05 + 0.3), rel=1e-12)
