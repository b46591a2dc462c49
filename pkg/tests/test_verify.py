"""Property-check suite: reports, preconditions, and small-scale passes."""
import dataclasses
import json
import math

import numpy as np
import pytest

from impactmm import config as cf
from impactmm import orderbook as ob
from impactmm import simulator as sim
from impactmm import verify as ver


@pytest.fixture(scope="module")
def ver_cfg():
    return cf.desk_scale(cf.builtin_config("baseline"))


def test_report_helpers():
    rep = ver._finish("demo", np.array([-1.0, -0.5]), 1e-9, {"n": 2})
    assert rep.status == "pass" and rep.passed
    assert rep.violations == 0
    assert rep.worst_margin == -0.5
    bad = ver._finish("demo", np.array([-1.0, 2.0]), 1e-9, {})
    assert bad.status == "fail" and not bad.passed
    assert bad.violations == 1 and bad.worst_margin == 2.0
    skip = ver._skip("demo", "not applicable here")
    assert skip.status == "n/a" and skip.passed
    assert skip.details == ("not applicable here",)


def test_report_line_and_record():
    rep = ver._finish("roundtrip", np.array([-0.25]), 1e-9,
                      {"trials": 1, "tag": "x"})
    line = rep.line()
    assert "roundtrip" in line and "pass" in line and "violations=0" in line
    record = rep.to_record()
    json.dumps(record)  # must be serializable as-is
    assert record["worst_margin"] == -0.25
    assert record["params"] == {"trials": 1.0, "tag": "x"}


def test_instant_roundtrip_passes(ver_cfg):
    rep = ver.check_instant_roundtrip(ver_cfg, trials=5000)
    assert rep.status == "pass"
    assert rep.trials == 5000
    # a round trip must actually lose the floor: strictly negative margin
    assert rep.worst_margin <= 0.0


def test_roundtrip_bound_passes(ver_cfg):
    rep = ver.check_roundtrip_bound(ver_cfg, trials=300)
    assert rep.status == "pass"


def test_ttpm_passes_and_needs_two_steps(ver_cfg):
    rep = ver.check_ttpm(ver_cfg, trials=300)
    assert rep.status == "pass"
    one = dataclasses.replace(ver_cfg, grid=dataclasses.replace(ver_cfg.grid,
                                                                steps=1))
    assert ver.check_ttpm(one, trials=10).status == "n/a"


def test_terminal_bound_passes(ver_cfg):
    rep = ver.check_terminal_bound(ver_cfg, trials=100)
    assert rep.status == "pass"


def test_terminal_bound_preconditions(ver_cfg):
    excited = dataclasses.replace(
        ver_cfg, flow_sell=dataclasses.replace(ver_cfg.flow_sell, kappa=0.5))
    rep = ver.check_terminal_bound(excited, trials=10)
    assert rep.status == "n/a"
    assert "diverge" in rep.details[0]
    # a non-uniform book also opts out; only reachable via a prebuilt model
    steps = np.array([0.0, 0.2])
    side = ob.Side(steps, np.array([0.2, 0.6]), np.array([100.0, 40.0]))
    model = dataclasses.replace(sim.Model.build(ver_cfg),
                                book=ob.BookShape(bid=side, ask=side))
    rep2 = ver.check_terminal_bound(model, trials=10)
    assert rep2.status == "n/a"
    assert "density" in rep2.details[0]


def test_quote_positivity_passes(ver_cfg):
    rep = ver.check_quote_positivity(ver_cfg, paths=300)
    assert rep.status == "pass"
    assert len(rep.details) == 3
    bad = dataclasses.replace(
        ver_cfg, initial=dataclasses.replace(ver_cfg.initial, P0=0.5, S0=1.2))
    assert ver.check_quote_positivity(bad, paths=10).status == "n/a"


def test_cash_additivity_exact(ver_cfg):
    rep = ver.check_cash_additivity(ver_cfg, trials=6, paths=3)
    assert rep.status == "pass"
    assert rep.params["exact_pairs"] == 6.0
    assert rep.worst_margin == 0.0


def test_flow_moments_passes(ver_cfg):
    rep = ver.check_flow_moments(ver_cfg, paths=2000)
    assert rep.status == "pass"
    names = " ".join(rep.details)
    # the excitation branch must have been exercised for this kappa=0 config
    assert "excited_sell_intensity_recursion" in names
    assert "sell_intensity_exact" in names


def test_inventory_moments_passes(ver_cfg):
    rep = ver.check_inventory_moments(ver_cfg, paths=400)
    assert rep.status == "pass"
    assert any("terminal_symmetry" in d for d in rep.details)


def test_state_envelope_passes(ver_cfg):
    rep = ver.check_state_envelope(ver_cfg, paths=2000)
    assert rep.status == "pass"
    assert any("terminal_second_moment" in d for d in rep.details)


def test_run_suite_all(ver_cfg):
    reports = ver.run_suite(ver_cfg, "all", trials=2000, paths=300)
    assert [r.name for r in reports] == list(ver.ARBITRAGE_CHECKS
                                             + ver.MOMENT_CHECKS)
    assert all(r.passed for r in reports)
    assert all(r.status in ("pass", "n/a") for r in reports)


def test_run_suite_subsets(ver_cfg):
    arb = ver.run_suite(ver_cfg, "arbitrage", trials=1000, paths=100)
    assert [r.name for r in arb] == list(ver.ARBITRAGE_CHECKS)
    mom = ver.run_suite(ver_cfg, "moments", trials=1000, paths=500)
    assert [r.name for r in mom] == list(ver.MOMENT_CHECKS)
    with pytest.raises(ValueError, match="unknown suite"):
        ver.run_suite(ver_cfg, "everything")
