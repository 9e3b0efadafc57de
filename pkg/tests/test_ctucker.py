import numpy as np
import pytest

from oracles import cond_h, cond_s, cond_y, cond_z, random_instance
from vatensor import ctucker
from vatensor import rng as rngmod
from vatensor.chain import run
from vatensor.core import GIP, ChainControl, LatentState, ModelConfig, VADataset, ValidationError
from vatensor.synth import SimConfig, generate


def _instances(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, p = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        yield random_instance(rng, n, p, C=2, K=2, r=2, h=2)


def test_conditionals_match_enumeration():
    for ds, state, params in _instances(21, 25):
        assert np.allclose(ctucker.conditional_y(ds, state, params), cond_y(ds, state, params), atol=1e-10)
        assert np.allclose(ctucker.conditional_z(ds, state, params), cond_z(ds, state, params), atol=1e-10)
        assert np.allclose(ctucker.conditional_h(state, params), cond_h(ds, state, params), atol=1e-10)
        assert np.allclose(ctucker.conditional_s(ds, state, params), cond_s(ds, state, params), atol=1e-10)


def test_uninformative_symptoms_give_prior_cause_probs():
    rng = np.random.default_rng(1)
    ds, state, params = random_instance(rng, 5, 3, C=2, K=2, r=2, h=2)
    params.phi[:] = 0.3
    probs = ctucker.conditional_y(ds, state, params)
    assert np.allclose(probs, params.pi[0][None, :], atol=1e-12)


def test_empty_group_does_not_inform_z():
    rng = np.random.default_rng(2)
    ds, state, params = random_instance(rng, 4, 3, C=2, K=2, r=2, h=2)
    state.s[:] = 0  # group 1 holds no symptoms
    pz = ctucker.conditional_z(ds, state, params)
    prior = params.psi[state.y, state.H][:, 1, :]
    assert np.allclose(pz[:, 1, :], prior, atol=1e-12)


def test_symptom_counts_by_hand():
    X = np.array([[1, 0, -1], [1, 1, 0], [0, 1, 1]])
    ds = VADataset(X=X, y=[0, 0, 1], domain=[1, 1, 1], cause_names=("a", "b"))
    state = LatentState(y=np.array([0, 0, 1]), Z=np.array([[0, 1], [1, 1], [0, 0]]),
                        H=np.zeros(3, int), s=np.zeros((2, 3), int))
    N1, N0 = ctucker.symptom_counts(ds, state, C=2, K=2, r=2)
    # cause 0, group 0: row 0 in class 0, row 1 in class 1
    assert N1[0, 0, 0].tolist() == [1, 0, 0] and N0[0, 0, 0].tolist() == [0, 1, 0]
    assert N1[0, 0, 1].tolist() == [1, 1, 0] and N0[0, 0, 1].tolist() == [0, 0, 1]
    assert N1[1, 0, 0].tolist() == [0, 1, 1] and N0[1, 0, 0].tolist() == [1, 0, 0]
    assert N1.sum() + N0.sum() == 2 * 8  # every observed cell counted once per group


def test_count_helpers():
    state = LatentState(y=np.array([0, 1, 1]), Z=np.array([[0, 1], [1, 1], [0, 0]]),
                        H=np.array([1, 0, 0]), s=np.array([[0, 1, 1], [0, 0, 0]]))
    assert ctucker.nu_counts(state, 2, 2).tolist() == [[0, 1], [2, 0]]
    psi = ctucker.psi_counts(state, 2, 2, 2, 2)
    assert psi[0, 1, 0].tolist() == [1, 0] and psi[0, 1, 1].tolist() == [0, 1]
    assert psi[1, 0, 0].tolist() == [1, 1] and psi[1, 0, 1].tolist() == [1, 1]
    assert ctucker.xi_counts(state, 2, 2).tolist() == [[1, 2], [3, 0]]


def test_dirichlet_sampler_moments():
    rng = rngmod.substream(rngmod.master_key(5), 1, 1)
    alpha = np.array([0.5, 2.0, 7.5])
    draws = rngmod.dirichlet(np.broadcast_to(alpha, (40000, 3)), rng)
    mean = alpha / alpha.sum()
    var = alpha * (alpha.sum() - alpha) / (alpha.sum() ** 2 * (alpha.sum() + 1))
    se = np.sqrt(var / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    assert np.allclose(draws.var(axis=0), var, rtol=0.05)


def test_dirichlet_tiny_concentration_is_a_simplex():
    rng = rngmod.substream(rngmod.master_key(1), 1, 1)
    d = rngmod.dirichlet(np.full((1000, 5), 1e-3), rng)
    assert np.all(np.isfinite(d)) and np.allclose(d.sum(axis=1), 1.0)


def test_beta_clipped_inside_unit_interval():
    rng = rngmod.substream(rngmod.master_key(2), 1, 1)
    b = rngmod.beta(np.full(5000, 1e-3), np.full(5000, 1e-3), rng)
    assert np.all((b > 0) & (b < 1))


def test_categorical_fallback_logs_warning(caplog):
    rng = rngmod.substream(rngmod.master_key(3), 1, 1)
    logw = np.array([[-np.inf, -np.inf], [0.0, -np.inf]])
    with caplog.at_level("WARNING"):
        out = rngmod.categorical_log(logw, rng, fallback=np.array([-np.inf, 0.0]), what="test")
    assert out.tolist() == [1, 0]
    assert "zero total mass" in caplog.text
    with pytest.raises(FloatingPointError):
        rngmod.categorical_log(logw, rng)


def test_categorical_frequencies():
    rng = rngmod.substream(rngmod.master_key(4), 1, 1)
    p = np.array([0.1, 0.6, 0.3])
    idx = rngmod.categorical_log(np.broadcast_to(np.log(p), (60000, 3)), rng)
    freq = np.bincount(idx, minlength=3) / len(idx)
    assert np.all(np.abs(freq - p) < 4 * np.sqrt(p * (1 - p) / len(idx)))


@pytest.fixture(scope="module")
def small_data():
    return generate(SimConfig(C=4, p=10, n_train=60, n_target=30, K=2, r=2, h=2, seed=7))


def test_run_chain_retained_counts(small_data):
    ds, _ = small_data
    cfg = ModelConfig(C=4, K=2, r=2, h=2, mcmc=ChainControl(iterations=10, burn_in=5, seed=1))
    draws = ctucker.run_chain(ds, cfg)
    assert draws.n_draws == 5 and draws.iterations.tolist() == [6, 7, 8, 9, 10]
    assert draws.pi.shape == (5, 2, 4) and draws.psi.shape == (5, 4, 2, 2, 2)
    thinned = ctucker.run_chain(ds, cfg.with_(mcmc=ChainControl(iterations=20, burn_in=5, thinning=5)))
    assert thinned.iterations.tolist() == [10, 15, 20]


def test_run_chain_is_deterministic(small_data):
    ds, _ = small_data
    cfg = ModelConfig(C=4, K=2, r=2, h=2, mcmc=ChainControl(iterations=15, burn_in=5, seed=9, store_phi=True))
    a, b = ctucker.run_chain(ds, cfg), ctucker.run_chain(ds, cfg)
    for name in ("pi", "xi", "nu", "psi", "phi", "s", "loglik", "y_prob"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = ctucker.run_chain(ds, cfg.with_(mcmc=ChainControl(iterations=15, burn_in=5, seed=10)))
    assert not np.array_equal(a.pi, c.pi)


def test_run_chain_draws_are_simplexes(small_data):
    ds, _ = small_data
    draws = run(ds, ModelConfig(C=4, K=2, r=2, h=2, mcmc=ChainControl(iterations=30, burn_in=10, seed=2)))
    for name in ("pi", "xi", "nu", "psi"):
        a = getattr(draws, name)
        assert np.all(a >= 0) and np.allclose(a.sum(axis=-1), 1.0, atol=1e-10)
    assert np.allclose(draws.y_prob.sum(axis=1), 1.0, atol=1e-10)
    assert draws.best_iteration in draws.iterations


def test_no_target_rows(small_data):
    ds, _ = small_data
    tr = ds.train_rows
    train_only = VADataset(X=ds.X[tr], y=ds.y[tr], domain=ds.domain[tr], cause_names=ds.cause_names)
    draws = run(train_only, ModelConfig(C=4, K=2, r=2, h=2, mcmc=ChainControl(iterations=8, burn_in=4)))
    assert draws.y_prob.shape == (0, 4) and draws.n_draws == 4


def test_fixed_grouping_is_kept(small_data):
    ds, truth = small_data
    cfg = ModelConfig(C=4, K=2, r=2, h=2, group_fixed=truth.s,
                      mcmc=ChainControl(iterations=8, burn_in=2))
    draws = run(ds, cfg)
    assert all(np.array_equal(s, truth.s) for s in draws.s)


def test_invalid_input_rejected_before_sampling(small_data):
    ds, _ = small_data
    with pytest.raises(ValidationError):
        run(ds, ModelConfig(C=3, K=2, r=2, h=2))
    with pytest.raises(ValueError):
        ctucker.run_chain(ds, ModelConfig(family=GIP, C=4, K=2, r=2))


def test_s_conditional_without_deaths_is_xi():
    rng = np.random.default_rng(40)
    ds, state, params = random_instance(rng, 4, 3, C=2, K=2, r=2, h=2)
    state.y[:] = 0  # nobody died of cause 1
    ps = ctucker.conditional_s(ds, state, params)
    assert np.allclose(ps[1], params.xi[1][None, :], atol=1e-14)


def test_single_group_assigns_everything_to_it():
    rng = np.random.default_rng(41)
    ds, state, params = random_instance(rng, 4, 3, C=2, K=2, r=1, h=2)
    assert np.all(ctucker.sample_s(ds, state, params, rngmod.substream(rngmod.master_key(0), 1, 8)) == 0)
