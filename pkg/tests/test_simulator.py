"""Rollout engine: determinism, chunking, objective, gradients, training."""
import numpy as np
import pytest

from impactmm import config as cf
from impactmm import simulator as sim
from impactmm.errors import SimulationFault


def small_cfg(**edits):
    flat = cf.Config().flat_dict()
    flat.update({"grid.steps": 6, "train.batch_size": 16, "train.epochs": 3,
                 "policy.hidden": [8], "run.seed": 11})
    flat.update(edits)
    return cf.config_from_mapping(flat)


@pytest.fixture(scope="module")
def small_model():
    return sim.Model.build(small_cfg())


def test_rollout_deterministic(small_model):
    a = sim.rollout(small_model, small_model.cfg.fresh_policy(), 40, stream=2)
    b = sim.rollout(small_model, small_model.cfg.fresh_policy(), 40, stream=2)
    np.testing.assert_array_equal(a.J, b.J)
    for name in sim.CURVE_NAMES:
        np.testing.assert_array_equal(a.curves[name], b.curves[name])
    c = sim.rollout(small_model, small_model.cfg.fresh_policy(), 40, stream=3)
    assert not np.array_equal(a.J, c.J)


def test_rollout_seed_defaults_to_config(small_model):
    a = sim.rollout(small_model, small_model.cfg.fresh_policy(), 16)
    b = sim.rollout(small_model, small_model.cfg.fresh_policy(), 16, seed=11)
    np.testing.assert_array_equal(a.J, b.J)
    assert a.seed == 11


def test_threads_do_not_change_results(small_model):
    policy = small_model.cfg.fresh_policy()
    one = sim.rollout(small_model, policy, 700, threads=1)
    two = sim.rollout(small_model, policy, 700, threads=3)
    np.testing.assert_array_equal(one.J, two.J)
    np.testing.assert_array_equal(one.fills_a, two.fills_a)
    for name in sim.CURVE_NAMES:
        np.testing.assert_array_equal(one.curves[name], two.curves[name])
    assert one.min_bid == two.min_bid


def test_chunk_size_is_invisible(small_model, monkeypatch):
    policy = small_model.cfg.fresh_policy()
    whole = sim.rollout(small_model, policy, 50)
    monkeypatch.setattr(sim, "CHUNK", 16)
    parts = sim.rollout(small_model, policy, 50)
    np.testing.assert_array_equal(whole.J, parts.J)
    np.testing.assert_array_equal(whole.inventory_T, parts.inventory_T)


def test_rollout_shapes_and_curve_consistency(small_model):
    n = 30
    r = sim.rollout(small_model, small_model.cfg.fresh_policy(), n,
                    want_sample=True)
    steps = small_model.cfg.grid.steps
    assert r.times.shape == (steps + 1,)
    assert r.J.shape == (n,)
    assert set(r.curves) == set(sim.CURVE_NAMES)
    assert r.sample is not None and r.sample["P"].shape == (steps + 1,)
    # step-summed fill curves must reproduce the per-path totals
    assert r.curves["dN_a"].sum() == pytest.approx(r.fills_a.mean(), rel=1e-12)
    assert r.curves["dN_minus"].sum() == pytest.approx(r.exo_sells.mean(), rel=1e-12)
    assert r.curves["P"][0] == pytest.approx(100.0)
    assert r.curves["absI"][0] == 0.0
    assert r.min_spread >= small_model.impact.floor - 1e-12


def test_idle_market_pays_exactly_initial_cash():
    # no client flow, no activity penalty: every path returns X0 untouched
    cfg = small_cfg(**{"client.bid.lambda_bar": 0.0,
                       "client.ask.lambda_bar": 0.0,
                       "penalty.kappa_act": 0.0,
                       "initial.X0": 5.0})
    model = sim.Model.build(cfg)
    r = sim.rollout(model, cfg.fresh_policy(), 25)
    np.testing.assert_allclose(r.J, 5.0, atol=1e-12)
    np.testing.assert_array_equal(r.fills_a, np.zeros(25))
    np.testing.assert_allclose(r.liquidation, 0.0, atol=1e-12)


def test_objective_estimate(small_model):
    mean, stderr, diag = sim.objective_estimate(
        small_model, small_model.cfg.fresh_policy(), 60, stream=1)
    r = sim.rollout(small_model, small_model.cfg.fresh_policy(), 60, stream=1)
    assert mean == pytest.approx(float(r.J.mean()), rel=1e-15)
    assert stderr == pytest.approx(float(r.J.std(ddof=1) / np.sqrt(60)), rel=1e-12)
    assert diag["fills_ask_mean"] == pytest.approx(float(r.fills_a.mean()))
    assert diag["time_avg_abs_inventory"] >= 0.0


def test_rollout_rejects_empty_batch(small_model):
    with pytest.raises(SimulationFault):
        sim.rollout(small_model, small_model.cfg.fresh_policy(), 0)


# ------------------------------------------------------------ training loss

def jitter_policy(cfg, scale=0.05, seed=0):
    """Fresh policy with a small random output head so gradients are generic."""
    policy = cfg.fresh_policy()
    gen = np.random.default_rng(seed)
    theta = policy.theta + gen.normal(size=policy.theta.shape) * scale
    import impactmm.policy as pol
    return pol.Policy(policy.arch, policy.scales, theta)


def test_forward_values_agree_across_gradient_modes(small_model):
    policy = jitter_policy(small_model.cfg)
    outs = {}
    for mode in ("pathwise", "straight_through", "hybrid"):
        loss, grad, chunks = sim.training_loss(small_model, policy, 24,
                                               stream=4, gradient_mode=mode)
        outs[mode] = (loss, grad, np.concatenate([c.J for c in chunks]))
    np.testing.assert_allclose(outs["pathwise"][2], outs["straight_through"][2],
                               rtol=1e-13)
    np.testing.assert_allclose(outs["pathwise"][2], outs["hybrid"][2], rtol=1e-13)
    # identical surrogate values for the two sampled-count estimators
    assert outs["pathwise"][0] == pytest.approx(outs["straight_through"][0],
                                                rel=1e-12)
    # the estimators must actually differ where it matters
    assert not np.allclose(outs["pathwise"][1], outs["straight_through"][1])
    assert not np.allclose(outs["straight_through"][1], outs["hybrid"][1])


def test_pathwise_gradient_matches_finite_differences(small_model):
    policy = jitter_policy(small_model.cfg)
    n, stream = 12, 6

    def loss_at(theta):
        import impactmm.policy as pol
        p = pol.Policy(policy.arch, policy.scales, theta)
        loss, _, _ = sim.training_loss(small_model, p, n, stream=stream,
                                       gradient_mode="pathwise")
        return loss

    _, grad, _ = sim.training_loss(small_model, policy, n, stream=stream,
                                   gradient_mode="pathwise")
    gen = np.random.default_rng(3)
    coords = gen.choice(policy.theta.size, size=6, replace=False)
    eps = 1e-6
    for i in coords:
        up = policy.theta.copy(); up[i] += eps
        dn = policy.theta.copy(); dn[i] -= eps
        fd = (loss_at(up) - loss_at(dn)) / (2 * eps)
        assert grad[i] == pytest.approx(fd, rel=2e-4, abs=1e-7), f"coord {i}"


@pytest.mark.parametrize("mode", ["pathwise", "straight_through"])
def test_training_loss_weights_chunks(small_model, monkeypatch, mode):
    # hybrid is excluded: its score baseline is chunk-local by design
    policy = jitter_policy(small_model.cfg)
    whole = sim.training_loss(small_model, policy, 40, stream=2,
                              gradient_mode=mode)
    monkeypatch.setattr(sim, "CHUNK", 16)
    split = sim.training_loss(small_model, policy, 40, stream=2,
                              gradient_mode=mode)
    assert whole[0] == pytest.approx(split[0], rel=1e-12)
    np.testing.assert_allclose(whole[1], split[1], rtol=1e-9, atol=1e-12)


# ---------------------------------------------------------------- training

def test_train_smoke(small_model):
    tr = sim.train(small_model, threads=1)
    cfg = small_model.cfg
    assert tr.epochs == 3 and tr.batch_size == 16
    assert tr.optimizer == "adam" and tr.gradient_mode == "hybrid"
    assert tr.adam is not None and tr.adam.t == 3
    for name in ("epoch", "return", "hedge_penalty", "activity_penalty",
                 "loss", "grad_norm", "fills", "time_avg_abs_inventory"):
        assert tr.curve[name].shape == (3,)
    assert not np.array_equal(tr.policy.theta, cfg.fresh_policy().theta)
    np.testing.assert_array_equal(tr.curve["epoch"], [0, 1, 2])
    assert np.all(tr.curve["grad_norm"] > 0.0)


def test_train_deterministic(small_model):
    a = sim.train(small_model)
    b = sim.train(small_model)
    np.testing.assert_array_equal(a.policy.theta, b.policy.theta)
    np.testing.assert_array_equal(a.curve["loss"], b.curve["loss"])


def test_train_first_epoch_matches_training_loss(small_model):
    tr = sim.train(small_model)
    loss0, _, _ = sim.training_loss(small_model, small_model.cfg.fresh_policy(),
                                    16, stream=0)
    assert tr.curve["loss"][0] == pytest.approx(loss0, rel=1e-12)


def test_train_sgd_has_no_adam_state():
    cfg = small_cfg(**{"policy.optimizer": "sgd", "policy.lr": 1e-9,
                       "train.epochs": 2})
    tr = sim.train(sim.Model.build(cfg))
    assert tr.adam is None and tr.optimizer == "sgd"


def test_train_progress_callback(small_model):
    rows = []
    sim.train(small_model, epochs=2, progress=rows.append)
    assert len(rows) == 2
    assert rows[0]["epoch"] == 0 and "return" in rows[0]


# ------------------------------------------------------------------- export

def test_trajectory_csv_bytes(tmp_path, small_model):
    r = sim.rollout(small_model, small_model.cfg.fresh_policy(), 8,
                    want_sample=True)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    sim.write_trajectory_csv(p1, r.times, r.sample)
    sim.write_trajectory_csv(p2, r.times, r.sample)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == ",".join(sim.CSV_COLUMNS)
    assert len(lines) == small_model.cfg.grid.steps + 2
    # repr round-trip: parsed floats reproduce the arrays exactly
    got = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    np.testing.assert_array_equal(got[:, 0], r.times)
    col = sim.CSV_COLUMNS.index("P")
    np.testing.assert_array_equal(got[:, col], r.sample["P"])
