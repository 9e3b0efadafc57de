"""Gibbs updates for the collapsed Tucker model.

Each ``conditional_*`` function returns the normalized full-conditional
probabilities; the matching ``sample_*`` draws from them and writes the
result into ``state`` or returns fresh parameters.  Steps shared with the
group-independent PARAFAC sampler (pi, phi, s, xi) live here as well.
"""

from __future__ import annotations

import numpy as np

from vatensor import rng as rngmod
from vatensor.core import (
    CTUCKER,
    LatentState,
    ModelConfig,
    ModelParams,
    TARGET,
    TRAIN,
    VADataset,
    cause_loglik_ctucker,
    group_loglik,
)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def dims(params: ModelParams) -> tuple[int, int, int, int]:
    C, K, _ = params.phi.shape
    r = params.xi.shape[1]
    h = 1 if params.nu is None else params.nu.shape[1]
    return C, K, r, h


def sweep_group_loglik(dataset: VADataset, params: ModelParams, state: LatentState) -> np.ndarray:
    return group_loglik(dataset.ones, dataset.zeros, params.phi, state.s, params.xi.shape[1])


# ---------------------------------------------------------------------------
# step 1: causes of target deaths

def y_logmass(dataset, state, params, G=None) -> np.ndarray:
    rows = dataset.target_rows
    if G is None:
        G = sweep_group_loglik(dataset, params, state)
    return _log(params.pi[TARGET])[None, :] + cause_loglik_ctucker(G[rows], params.nu, params.psi)


def conditional_y(dataset, state, params, G=None) -> np.ndarray:
    """(n_target, C) probabilities p(Y_i = c | x_i, s, pi, phi, psi, nu)."""
    return rngmod.normalize_log(y_logmass(dataset, state, params, G))


def _draw_y(dataset, state, params, logmass, rng):
    rows = dataset.target_rows
    if len(rows):
        state.y[rows] = rngmod.categorical_log(logmass, rng, fallback=_log(params.pi[TARGET]), what="cause")
    return state.y


def sample_y(dataset: VADataset, state: LatentState, params: ModelParams, rng, G=None) -> np.ndarray:
    return _draw_y(dataset, state, params, y_logmass(dataset, state, params, G), rng)


# ---------------------------------------------------------------------------
# step 2: group-level classes

def z_logmass(dataset, state, params, G=None) -> np.ndarray:
    if G is None:
        G = sweep_group_loglik(dataset, params, state)
    n = dataset.n
    Gy = G[np.arange(n), state.y].transpose(0, 2, 1)  # (n, r, K)
    return Gy + _log(params.psi[state.y, state.H])  # psi[c, l] is (r, K)


def conditional_z(dataset, state, params, G=None) -> np.ndarray:
    """(n, r, K) probabilities p(Z_is = k | H_i, Y_i, x_i, s, phi, psi)."""
    return rngmod.normalize_log(z_logmass(dataset, state, params, G))


def sample_z(dataset: VADataset, state: LatentState, params: ModelParams, rng, G=None) -> np.ndarray:
    prior = _log(params.psi[state.y, state.H])
    state.Z = rngmod.categorical_log(z_logmass(dataset, state, params, G), rng, fallback=prior, what="Z")
    return state.Z


# ---------------------------------------------------------------------------
# step 3: higher-level mixture component

def h_logmass(state, params) -> np.ndarray:
    n, r = state.Z.shape
    logpsi = _log(params.psi[state.y])  # (n, h, r, K)
    picked = np.take_along_axis(logpsi, state.Z[:, None, :, None], axis=3)[..., 0]  # (n, h, r)
    return _log(params.nu[state.y]) + picked.sum(axis=2)


def conditional_h(state, params) -> np.ndarray:
    return rngmod.normalize_log(h_logmass(state, params))


def sample_h(dataset: VADataset, state: LatentState, params: ModelParams, rng) -> np.ndarray:
    state.H = rngmod.categorical_log(h_logmass(state, params), rng, fallback=_log(params.nu[state.y]), what="H")
    return state.H


# ---------------------------------------------------------------------------
# conjugate Dirichlet / Beta steps

def cause_counts(dataset: VADataset, state: LatentState, C: int) -> np.ndarray:
    """(2, C) cause counts; row g counts deaths with domain flag g."""
    out = np.zeros((2, C))
    for g in (TARGET, TRAIN):
        out[g] = np.bincount(state.y[dataset.domain == g], minlength=C)[:C]
    return out


def sample_pi(dataset: VADataset, state: LatentState, config: ModelConfig, rng) -> np.ndarray:
    alpha = np.asarray(config.alpha)
    return rngmod.dirichlet(alpha[None, :] + cause_counts(dataset, state, config.C), rng)


def nu_counts(state: LatentState, C: int, h: int) -> np.ndarray:
    return np.bincount(state.y * h + state.H, minlength=C * h).reshape(C, h).astype(float)


def sample_nu(state: LatentState, config: ModelConfig, rng) -> np.ndarray:
    return rngmod.dirichlet(1.0 / config.h + nu_counts(state, config.C, config.h), rng)


def psi_counts(state: LatentState, C: int, h: int, r: int, K: int) -> np.ndarray:
    n = len(state.y)
    base = (state.y * h + state.H)[:, None] * r + np.arange(r)[None, :]
    idx = (base * K + state.Z).ravel()
    return np.bincount(idx, minlength=C * h * r * K).reshape(C, h, r, K).astype(float) if n else np.zeros((C, h, r, K))


def sample_psi(state: LatentState, config: ModelConfig, rng) -> np.ndarray:
    counts = psi_counts(state, config.C, config.h, config.r, config.K)
    return rngmod.dirichlet(np.asarray(config.dir_psi) + counts, rng)


def symptom_counts(dataset: VADataset, state: LatentState, C: int, K: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts of observed ones and zeros by (cause, group, class, symptom).

    ``N1[c, g, k, j]`` is the number of deaths with Y_i = c, Z_ig = k and
    X_ij = 1; ``N0`` likewise for X_ij = 0.  Missing entries count in neither.
    """
    n = dataset.n
    E = np.zeros((n, C * r * K))
    idx = (state.y[:, None] * r + np.arange(r)[None, :]) * K + state.Z
    np.put_along_axis(E, idx, 1.0, axis=1)
    N = (E.T @ dataset.both).reshape(C, r, K, 2, dataset.p)
    return N[:, :, :, 0], N[:, :, :, 1]


def phi_counts(N1, N0, s) -> tuple[np.ndarray, np.ndarray]:
    """Select the counts of each symptom's own group: (C, K, p) each."""
    sel = s[:, None, None, :]
    a = np.take_along_axis(N1, sel, axis=1)[:, 0]
    b = np.take_along_axis(N0, sel, axis=1)[:, 0]
    return a, b


def sample_phi(dataset: VADataset, state: LatentState, config: ModelConfig, rng, counts=None) -> np.ndarray:
    if counts is None:
        counts = symptom_counts(dataset, state, config.C, config.K, config.r)
    a, b = phi_counts(*counts, state.s)
    return rngmod.beta(config.beta_phi_a + a, config.beta_phi_b + b, rng)


def s_logmass(dataset, state, params, counts=None) -> np.ndarray:
    C, K, r, _ = dims(params)
    if counts is None:
        counts = symptom_counts(dataset, state, C, K, r)
    N1, N0 = counts
    ll = np.einsum("cgkj,ckj->cjg", N1, np.log(params.phi)) + np.einsum("cgkj,ckj->cjg", N0, np.log1p(-params.phi))
    return ll + _log(params.xi)[:, None, :]


def conditional_s(dataset, state, params, counts=None) -> np.ndarray:
    """(C, p, r) probabilities p(s_cj = g | Y, X, Z, phi, xi)."""
    return rngmod.normalize_log(s_logmass(dataset, state, params, counts))


def sample_s(dataset: VADataset, state: LatentState, params: ModelParams, rng,
             config: ModelConfig | None = None, counts=None) -> np.ndarray:
    if config is not None and config.group_fixed is not None:
        state.s = config.group_fixed.copy()
        return state.s
    prior = _log(params.xi)[:, None, :]
    state.s = rngmod.categorical_log(s_logmass(dataset, state, params, counts), rng, fallback=prior, what="s")
    return state.s


def xi_counts(state: LatentState, C: int, r: int) -> np.ndarray:
    p = state.s.shape[1]
    idx = (np.arange(C)[:, None] * r + state.s).ravel()
    return np.bincount(idx, minlength=C * r).reshape(C, r).astype(float) if p else np.zeros((C, r))


def sample_xi(state: LatentState, config: ModelConfig, rng) -> np.ndarray:
    return rngmod.dirichlet(1.0 / config.r + xi_counts(state, config.C, config.r), rng)


# ---------------------------------------------------------------------------
# chain plumbing

def initial_state(dataset: VADataset, config: ModelConfig, rng) -> LatentState:
    """Target causes from the empirical training distribution, Z and H
    uniform, s uniform (or the fixed grouping)."""
    n, C = dataset.n, config.C
    y = dataset.y.copy()
    train = np.bincount(y[dataset.train_rows], minlength=C)[:C].astype(float)
    w = train / train.sum() if train.sum() > 0 else np.full(C, 1.0 / C)
    rows = dataset.target_rows
    y[rows] = rng.choice(C, size=len(rows), p=w)
    Z = rng.integers(config.K, size=(n, config.r))
    H = rng.integers(config.h, size=n)
    if config.group_fixed is not None:
        s = config.group_fixed.copy()
    else:
        s = rng.integers(config.r, size=(C, dataset.p))
    return LatentState(y=y, Z=Z, H=H, s=s)


def prior_params(config: ModelConfig, p: int, rng, family: str = CTUCKER) -> ModelParams:
    C, K, r, h = config.C, config.K, config.r, config.h
    alpha = np.asarray(config.alpha)
    b = np.asarray(config.dir_psi)
    pi = rngmod.dirichlet(np.broadcast_to(alpha, (2, C)), rng)
    phi = rngmod.beta(np.full((C, K, p), config.beta_phi_a), np.full((C, K, p), config.beta_phi_b), rng)
    xi = rngmod.dirichlet(np.full((C, r), 1.0 / r), rng)
    if family == CTUCKER:
        nu = rngmod.dirichlet(np.full((C, h), 1.0 / h), rng)
        psi = rngmod.dirichlet(np.broadcast_to(b, (C, h, r, K)), rng)
        return ModelParams(pi=pi, phi=phi, xi=xi, nu=nu, psi=psi)
    lam = rngmod.dirichlet(np.broadcast_to(b, (C, r, K)), rng)
    return ModelParams(pi=pi, phi=phi, xi=xi, lam=lam)


def initialize(dataset: VADataset, config: ModelConfig, key) -> tuple[LatentState, ModelParams]:
    rng = rngmod.substream(key, 0, rngmod.INIT)
    state = initial_state(dataset, config, rng)
    params = prior_params(config, dataset.p, rng, CTUCKER)
    return state, params


def sweep(dataset: VADataset, config: ModelConfig, state: LatentState, params: ModelParams,
          key, iteration: int) -> ModelParams:
    """One full scan over steps 1-9; returns the new parameters."""
    stream = lambda step: rngmod.substream(key, iteration, step)  # noqa: E731
    G = sweep_group_loglik(dataset, params, state)
    sample_y(dataset, state, params, stream(rngmod.STEP_Y), G)
    sample_z(dataset, state, params, stream(rngmod.STEP_Z), G)
    sample_h(dataset, state, params, stream(rngmod.STEP_H))
    pi = sample_pi(dataset, state, config, stream(rngmod.STEP_PI))
    nu = sample_nu(state, config, stream(rngmod.STEP_NU))
    psi = sample_psi(state, config, stream(rngmod.STEP_PSI))
    counts = symptom_counts(dataset, state, config.C, config.K, config.r)
    phi = sample_phi(dataset, state, config, stream(rngmod.STEP_PHI), counts)
    new = ModelParams(pi=pi, phi=phi, xi=params.xi, nu=nu, psi=psi)
    sample_s(dataset, state, new, stream(rngmod.STEP_S), config, counts)
    new.xi = sample_xi(state, config, stream(rngmod.STEP_XI))
    return new


def run_chain(dataset: VADataset, config: ModelConfig, control=None):
    from vatensor.chain import run

    if config.family != CTUCKER:
        raise ValueError(f"run_chain expects a {CTUCKER} config, got {config.family}")
    return run(dataset, config, control)
