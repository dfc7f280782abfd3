"""Execution engine: sampling, unbiasedness, bit-reproducibility, recording.

The heavy hitters here are exact-equality checks: a manual loop of ``step``
calls must reproduce ``run`` bit for bit, and the exhaustive-batch noiseless
configuration must degenerate to textbook preconditioned gradient descent
with no randomness consumed.
"""

import math

import numpy as np
import pytest

import oracles
from sgalab import engine, models
from sgalab.engine import RecordingPlan, dataset_hash, sample_batch, stochastic_gradient
from sgalab.errors import ConfigError, DivergenceError
from sgalab.tuning import (
    CONTROL_VARIATE,
    MOMENTUM,
    WITH_REPLACEMENT,
    WITHOUT_REPLACEMENT,
    TuningConfig,
)


def _gaussian_case(n=40, d=3, seed=7):
    model, data, truth = models.generate_gaussian(n, d, seed=seed)
    return model, data, truth


# ------------------------------------------------------------ batch sampling


def test_sample_batch_uniformity_chi_square():
    # all 2-tuples from 5 records should be hit uniformly; alpha = 0.001
    n, b, draws = 5, 2, 100_000
    for policy in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
        rng = np.random.default_rng(11)
        counts = {}
        for _ in range(draws):
            batch = tuple(sorted(sample_batch(rng, n, b, policy)))
            counts[batch] = counts.get(batch, 0) + 1
        cells = oracles.enumerate_batches(n, b, policy)
        if policy == WITH_REPLACEMENT:
            # collapse ordered tuples to sorted multisets with their weights
            weight = {}
            for cell in cells:
                key = tuple(sorted(cell))
                weight[key] = weight.get(key, 0) + 1
            total = len(cells)
            expected = {k: draws * w / total for k, w in weight.items()}
        else:
            expected = {tuple(c): draws / len(cells) for c in cells}
        assert set(counts) <= set(expected)
        chi2 = sum(
            (counts.get(k, 0) - e) ** 2 / e for k, e in expected.items()
        )
        dof = len(expected) - 1
        # chi-square(dof) upper 0.001 quantile, dof <= 14: generous bound
        limit = dof + 4.0 * math.sqrt(2.0 * dof) + 10.0
        assert chi2 < limit, f"{policy}: chi2 = {chi2:.1f} over {dof} cells"


def test_sample_batch_without_replacement_distinct():
    rng = np.random.default_rng(0)
    for _ in range(200):
        batch = sample_batch(rng, 6, 4, WITHOUT_REPLACEMENT)
        assert len(set(batch.tolist())) == 4
    with pytest.raises(ConfigError):
        sample_batch(rng, 3, 4, WITH_REPLACEMENT)
    with pytest.raises(ConfigError):
        sample_batch(rng, 3, 0, WITH_REPLACEMENT)


# ----------------------------------------------------------- drift estimate


def test_stochastic_gradient_unbiased_over_all_batches():
    model, data, _ = _gaussian_case(n=6)
    theta = np.array([0.3, -0.2, 0.5])
    full = model.grad(theta, data.records).mean(axis=0) + model.grad_prior(theta) / 6
    for policy in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
        batches = oracles.enumerate_batches(6, 2, policy)
        mean_est = np.mean(
            [stochastic_gradient(model, data, theta, np.array(b)) for b in batches],
            axis=0,
        )
        assert np.linalg.norm(mean_est - full) <= 1e-12


def test_control_variate_unbiased_and_exact_at_anchor():
    model, data, _ = models.generate_logistic(8, 2, seed=3)
    anchor = np.array([0.2, -0.4])
    theta = np.array([0.9, 0.1])
    full = model.grad(theta, data.records).mean(axis=0) + model.grad_prior(theta) / 8
    batches = oracles.enumerate_batches(8, 1, WITH_REPLACEMENT)
    ests = [
        stochastic_gradient(model, data, theta, np.array(b), anchor=anchor)
        for b in batches
    ]
    assert np.linalg.norm(np.mean(ests, axis=0) - full) <= 1e-12
    # at the anchor itself every batch gives the identical full-data value
    at_anchor = [
        stochastic_gradient(model, data, anchor, np.array(b), anchor=anchor)
        for b in batches
    ]
    spread = np.ptp(np.asarray(at_anchor), axis=0)
    assert np.all(spread == 0.0)


def test_control_variate_variance_decays_quadratically():
    # batch variance of the recentered estimate ~ ||theta - anchor||^2
    model, data, _ = models.generate_logistic(60, 2, seed=9)
    anchor = np.array([0.1, 0.3])
    direction = np.array([1.0, -0.7]) / np.linalg.norm([1.0, -0.7])
    scales = np.array([1e-3, 1e-2, 1e-1])
    variances = []
    for t in scales:
        theta = anchor + t * direction
        ests = np.array(
            [
                stochastic_gradient(model, data, theta, np.array([j]), anchor=anchor)
                for j in range(60)
            ]
        )
        variances.append(np.mean(np.sum((ests - ests.mean(axis=0)) ** 2, axis=1)))
    slope = np.polyfit(np.log(scales), np.log(variances), 1)[0]
    assert abs(slope - 2.0) < 0.2


# -------------------------------------------------- step/run bit identity


def _manual_replay(model, data, cfg, n_steps, init_state):
    """Reproduce run()'s randomness consumption with explicit step() calls."""
    records = data.records
    n = records.shape[0]
    d = model.dim
    b = cfg.batch_size(n)
    root = np.random.SeedSequence(cfg.seed)
    batch_ss, noise_ss, _ = root.spawn(3)
    batch_rng = np.random.Generator(np.random.Philox(batch_ss))
    noise_rng = np.random.Generator(np.random.Philox(noise_ss))

    # the engine draws all batch indices for the block, then the noise block
    if b == 1:
        idx_block = batch_rng.integers(0, n, size=n_steps).reshape(n_steps, 1)
    elif cfg.policy == WITHOUT_REPLACEMENT and b == n:
        idx_block = np.tile(np.arange(n), (n_steps, 1))
    elif cfg.policy == WITHOUT_REPLACEMENT:
        idx_block = np.stack([batch_rng.permutation(n)[:b] for _ in range(n_steps)])
    else:
        idx_block = batch_rng.integers(0, n, size=(n_steps, b))
    noise_block = noise_rng.standard_normal((n_steps, d)) if cfg.has_noise else None

    state = init_state.copy()
    path = np.empty((n_steps, len(state)))
    for k in range(n_steps):
        xi = noise_block[k] if noise_block is not None else None
        state = engine.step(model, data, cfg, state, idx_block[k], xi=xi)
        path[k] = state
    return path


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(frak_h=1.0, c_h=2.0, frak_b=0.0, c_b=1.0, frak_t=math.inf, seed=5),
        dict(frak_h=1.0, c_h=2.0, frak_b=0.0, c_b=3.0, frak_t=1.0, c_beta=2.0, seed=6),
        dict(
            frak_h=1.0,
            c_h=1.0,
            frak_b=0.0,
            c_b=4.0,
            policy=WITHOUT_REPLACEMENT,
            frak_t=math.inf,
            seed=7,
        ),
    ],
    ids=["sgd_b1", "sgld_b3", "sgd_b4_noreplace"],
)
def test_run_matches_manual_step_loop_bitwise(kwargs):
    model, data, _ = _gaussian_case(n=12, d=2, seed=21)
    cfg = TuningConfig(gamma=np.diag([1.0, 0.5]), **kwargs)
    init = np.array([0.7, -0.3])
    n_steps = 50
    record = engine.run(
        model, data, cfg, n_steps=n_steps, init=init, recording=RecordingPlan(thin=1)
    )
    manual = _manual_replay(model, data, cfg, n_steps, init)
    assert np.array_equal(record.states, manual)
    assert np.array_equal(record.final_state, manual[-1])


def test_exhaustive_batch_consumes_no_batch_randomness():
    # with b = n (without replacement), runs at different seeds but beta = inf
    # are identical: no randomness of any kind is consumed
    model, data, _ = _gaussian_case(n=10, d=2, seed=33)
    base = dict(frak_h=1.0, c_h=1.5, frak_b=1.0, c_b=1.0, policy=WITHOUT_REPLACEMENT)
    a = engine.run(
        model, data, TuningConfig(seed=1, **base), n_steps=40, init=np.zeros(2)
    )
    b = engine.run(
        model, data, TuningConfig(seed=999, **base), n_steps=40, init=np.zeros(2)
    )
    assert np.array_equal(a.states, b.states)


def test_exhaustive_noiseless_run_equals_direct_gradient_descent():
    model, data, _ = _gaussian_case(n=30, d=3, seed=13)
    gamma = np.diag([1.0, 2.0, 0.5])
    cfg = TuningConfig(
        frak_h=1.0, c_h=3.0, frak_b=1.0, c_b=1.0,
        policy=WITHOUT_REPLACEMENT, gamma=gamma, seed=4,
    )
    n_steps = 1000
    init = np.array([1.0, -1.0, 0.5])
    record = engine.run(
        model, data, cfg, n_steps=n_steps, init=init, recording=RecordingPlan(thin=1)
    )
    path = oracles.direct_gradient_descent(
        model, data.records, gamma, cfg.step_size(30), init, n_steps
    )
    assert np.array_equal(record.states, path)


# ------------------------------------------------------- momentum variant


def test_momentum_single_step_hand_computed():
    # d = 1 gaussian location, one record x = 2, weight 1: score = x - theta
    records = np.array([[2.0]])
    model = models.gaussian_location_model(1, np.array([1.0]))
    data = models.Dataset(records)
    h, gamma, mass = 0.5, 1.2, 4.0
    cfg = TuningConfig(
        frak_h=0.0, c_h=h, frak_b=0.0, c_b=1.0, frak_t=math.inf,
        variant=MOMENTUM, gamma=np.array([[gamma]]), mass=np.array([[mass]]),
    )
    theta0, psi0 = 0.3, -0.8
    state = engine.step(model, data, cfg, np.array([theta0, psi0]), np.array([0]))
    want_theta = theta0 + 0.5 * h * (psi0 / mass)
    want_psi = psi0 + 0.5 * h * (2.0 - theta0) - 0.5 * h * gamma * (psi0 / mass)
    assert state[0] == pytest.approx(want_theta, rel=0, abs=1e-15)
    assert state[1] == pytest.approx(want_psi, rel=0, abs=1e-15)


def test_momentum_state_dimension_and_recording():
    model, data, _ = _gaussian_case(n=8, d=2, seed=2)
    cfg = TuningConfig(
        frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0, frak_t=math.inf,
        variant=MOMENTUM, seed=3,
    )
    record = engine.run(model, data, cfg, n_steps=20, init=np.zeros(4))
    assert record.states.shape == (20, 4)
    assert record.state_dim == 4
    assert record.dim == 2


# ------------------------------------------------- divergence and recording


def test_divergence_truncates_and_reports():
    model, data, _ = _gaussian_case(n=20, d=2, seed=17)
    cfg = TuningConfig(frak_h=0.0, c_h=1e9, frak_b=0.0, c_b=1.0, seed=0)
    with pytest.raises(DivergenceError) as info:
        engine.run(
            model, data, cfg, n_steps=500,
            init=np.array([1.0, 1.0]), recording=RecordingPlan(thin=1),
        )
    err = info.value
    rec = err.partial_record
    assert err.step == rec.diverged_at
    assert rec.diverged_at is not None and rec.diverged_at <= 500
    assert rec.manifest["diverged_at"] == rec.diverged_at
    assert rec.states.shape[0] == (rec.diverged_at - 1) // rec.thin
    if rec.states.size:
        assert np.all(np.abs(rec.states) <= engine.DIVERGENCE_LIMIT)


def test_thinning_and_average_window():
    model, data, _ = _gaussian_case(n=15, d=2, seed=29)
    cfg = TuningConfig(frak_h=1.0, c_h=2.0, frak_b=0.0, c_b=1.0,
                       frak_t=1.0, c_beta=1.0, seed=8)
    fine = engine.run(
        model, data, cfg, n_steps=10,
        init=np.zeros(2),
        recording=RecordingPlan(thin=1, average_start=4),
    )
    coarse = engine.run(
        model, data, cfg, n_steps=10,
        init=np.zeros(2),
        recording=RecordingPlan(thin=3, average_start=4),
    )
    assert coarse.states.shape == (3, 2)
    assert np.array_equal(coarse.step_numbers(), [3, 6, 9])
    # thinned rows are exactly the fine rows at steps 3, 6, 9
    assert np.array_equal(coarse.states, fine.states[[2, 5, 8]])
    # the average window covers steps 5..10 regardless of thinning
    window = fine.states[4:10]
    assert np.array_equal(coarse.avg_state, window.sum(axis=0) / 6.0)
    assert np.array_equal(coarse.second_moment, window.T @ window / 6.0)
    assert coarse.avg_window == (4, 10)
    # an explicit stop caps the window
    stopped = engine.run(
        model, data, cfg, n_steps=10,
        init=np.zeros(2),
        recording=RecordingPlan(thin=1, average_start=4, average_stop=7),
    )
    assert np.array_equal(stopped.avg_state, fine.states[4:7].mean(axis=0))


def test_recording_plan_validation():
    with pytest.raises(ConfigError):
        RecordingPlan(thin=0)
    with pytest.raises(ConfigError):
        RecordingPlan(average_start=-1)
    with pytest.raises(ConfigError):
        RecordingPlan(average_start=5, average_stop=5)


def test_empty_average_window_yields_none():
    model, data, _ = _gaussian_case(n=10, d=2, seed=5)
    cfg = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0, seed=1)
    record = engine.run(
        model, data, cfg, n_steps=5,
        init=np.zeros(2), recording=RecordingPlan(average_start=50),
    )
    assert record.avg_state is None
    assert record.second_moment is None


# ---------------------------------------------------------- initialization


def test_init_modes():
    model, data, truth = _gaussian_case(n=25, d=3, seed=41)
    theta_hat = np.array([0.1, 0.2, 0.3])
    cfg = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0, seed=12)
    # default: start at the anchor
    rec = engine.run(model, data, cfg, n_steps=1, theta_hat=theta_hat)
    assert np.array_equal(rec.init_state, theta_hat)
    # explicit array
    rec = engine.run(model, data, cfg, n_steps=1, init=np.array([9.0, 9.0, 9.0]))
    assert np.array_equal(rec.init_state, [9.0, 9.0, 9.0])
    # stationary draw with zero covariance degenerates to the anchor exactly
    rec = engine.run(
        model, data, cfg, n_steps=1, theta_hat=theta_hat,
        init=("stationary", np.zeros((3, 3))),
    )
    assert np.array_equal(rec.init_state, theta_hat)
    # stationary and overdispersed draws are seed-deterministic
    for mode in (("stationary", np.eye(3)), ("overdispersed", 3.0)):
        a = engine.run(model, data, cfg, n_steps=1, theta_hat=theta_hat, init=mode)
        b = engine.run(model, data, cfg, n_steps=1, theta_hat=theta_hat, init=mode)
        assert np.array_equal(a.init_state, b.init_state)
        assert not np.array_equal(a.init_state, theta_hat)
    # randomized modes need an anchor
    with pytest.raises(ConfigError, match="anchor"):
        engine.run(model, data, cfg, n_steps=1, init=("overdispersed", 2.0))
    with pytest.raises(ConfigError, match="init"):
        engine.run(model, data, cfg, n_steps=1, init=np.zeros(5))


def test_run_determinism_and_seed_sensitivity():
    model, data, _ = _gaussian_case(n=12, d=2, seed=3)
    cfg = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0,
                       frak_t=1.0, c_beta=1.0, seed=42)
    a = engine.run(model, data, cfg, n_steps=30, init=np.zeros(2))
    b = engine.run(model, data, cfg, n_steps=30, init=np.zeros(2))
    c = engine.run(model, data, cfg.with_seed(43), n_steps=30, init=np.zeros(2))
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_noiseless_and_noisy_runs_share_batch_sequences():
    # d = 1, two records far apart: the batch index at each step is readable
    # off the increment, so the index sequences can be compared in law
    records = np.array([[0.0], [10.0]])
    model = models.gaussian_location_model(1, np.array([1.0]))
    data = models.Dataset(records)
    common = dict(frak_h=0.0, c_h=0.2, frak_b=0.0, c_b=1.0, seed=314)
    sgd = TuningConfig(frak_t=math.inf, **common)
    sgld = TuningConfig(frak_t=0.0, c_beta=1e18, **common)

    def index_sequence(cfg):
        rec = engine.run(
            model, data, cfg, n_steps=200, init=np.zeros(1),
            recording=RecordingPlan(thin=1),
        )
        thetas = np.concatenate([[0.0], rec.states[:, 0]])
        out = []
        for k in range(200):
            d_obs = thetas[k + 1] - thetas[k]
            cands = [0.1 * (x - thetas[k]) for x in (0.0, 10.0)]
            out.append(int(np.argmin([abs(d_obs - c) for c in cands])))
        return out

    assert index_sequence(sgd) == index_sequence(sgld)


# ------------------------------------------------------------- constraints


def test_boundary_box_clips_every_iterate():
    model, data, _ = models.generate_gaussian(
        30, 2, seed=19, theta_star=np.array([5.0, -5.0])
    )
    box = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    cfg = TuningConfig(
        frak_h=0.0, c_h=0.8, frak_b=0.0, c_b=1.0,
        frak_t=0.0, c_beta=0.5, boundary=box, seed=23,
    )
    rec = engine.run(
        model, data, cfg, n_steps=300, init=np.zeros(2),
        recording=RecordingPlan(thin=1),
    )
    assert np.all(rec.states >= -1.0) and np.all(rec.states <= 1.0)
    # the drift pushes coordinate 0 against the upper face; it should sit there
    assert np.max(rec.states[100:, 0]) == 1.0


def test_dataset_hash_sensitivity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 3))
    assert dataset_hash(x) == dataset_hash(x.copy())
    y = x.copy()
    y[7, 1] += 1e-12
    assert dataset_hash(x) != dataset_hash(y)
    assert dataset_hash(x) != dataset_hash(x[:19])


def test_run_replicates_seeds():
    model, data, _ = _gaussian_case(n=10, d=2, seed=1)
    cfg = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0,
                       frak_t=1.0, c_beta=1.0, seed=100)
    recs = engine.run_replicates(model, data, cfg, 3, n_steps=10, init=np.zeros(2))
    assert len(recs) == 3
    direct = engine.run(
        model, data, cfg.with_seed(101), n_steps=10, init=np.zeros(2)
    )
    assert np.array_equal(recs[1].states, direct.states)
    assert recs[0].manifest["config"]["seed"] == 100
    with pytest.raises(ConfigError):
        engine.run_replicates(model, data, cfg, 0, n_steps=1)


def test_step_requires_noise_draw_exactly_when_noisy():
    model, data, _ = _gaussian_case(n=6, d=2, seed=0)
    noisy = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0,
                         frak_t=1.0, c_beta=1.0)
    with pytest.raises(ConfigError, match="xi"):
        engine.step(model, data, noisy, np.zeros(2), np.array([0]))
    quiet = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0)
    out = engine.step(model, data, quiet, np.zeros(2), np.array([0]))
    assert out.shape == (2,)


def test_control_variate_run_needs_anchor():
    model, data, _ = _gaussian_case(n=6, d=2, seed=0)
    cfg = TuningConfig(frak_h=1.0, c_h=1.0, frak_b=0.0, c_b=1.0,
                       variant=CONTROL_VARIATE)
    with pytest.raises(ConfigError, match="anchor"):
        engine.run(model, data, cfg, n_steps=2, init=np.zeros(2))
