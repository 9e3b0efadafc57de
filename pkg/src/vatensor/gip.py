"""Gibbs updates for r-group independent PARAFACs (and plain PARAFAC, r = 1).

Only the cause, class and mixing-weight updates differ from the c-Tucker
sampler; the pi, phi, s and xi updates are shared.
"""

from __future__ import annotations

import numpy as np

from vatensor import rng as rngmod
from vatensor.core import CTUCKER, GIP, LatentState, ModelConfig, ModelParams, TARGET, VADataset, cause_loglik_gip
from vatensor.ctucker import (
    _log,
    prior_params,
    initial_state,
    sample_phi,
    sample_pi,
    sample_s,
    sample_xi,
    sweep_group_loglik,
    symptom_counts,
)


def y_logmass_gip(dataset, state, params, G=None) -> np.ndarray:
    rows = dataset.target_rows
    if G is None:
        G = sweep_group_loglik(dataset, params, state)
    return _log(params.pi[TARGET])[None, :] + cause_loglik_gip(G[rows], params.lam)


def conditional_y_gip(dataset, state, params, G=None) -> np.ndarray:
    return rngmod.normalize_log(y_logmass_gip(dataset, state, params, G))


def sample_y_gip(dataset: VADataset, state: LatentState, params: ModelParams, rng, G=None) -> np.ndarray:
    rows = dataset.target_rows
    if len(rows):
        logmass = y_logmass_gip(dataset, state, params, G)
        state.y[rows] = rngmod.categorical_log(logmass, rng, fallback=_log(params.pi[TARGET]), what="cause")
    return state.y


def z_logmass_gip(dataset, state, params, G=None) -> np.ndarray:
    if G is None:
        G = sweep_group_loglik(dataset, params, state)
    Gy = G[np.arange(dataset.n), state.y].transpose(0, 2, 1)  # (n, r, K)
    return Gy + _log(params.lam[state.y])


def conditional_z_gip(dataset, state, params, G=None) -> np.ndarray:
    return rngmod.normalize_log(z_logmass_gip(dataset, state, params, G))


def sample_z_gip(dataset: VADataset, state: LatentState, params: ModelParams, rng, G=None) -> np.ndarray:
    prior = _log(params.lam[state.y])
    state.Z = rngmod.categorical_log(z_logmass_gip(dataset, state, params, G), rng, fallback=prior, what="Z")
    return state.Z


def lambda_counts(state: LatentState, C: int, r: int, K: int) -> np.ndarray:
    idx = ((state.y[:, None] * r + np.arange(r)[None, :]) * K + state.Z).ravel()
    return np.bincount(idx, minlength=C * r * K).reshape(C, r, K).astype(float)


def sample_lambda(state: LatentState, config: ModelConfig, rng) -> np.ndarray:
    counts = lambda_counts(state, config.C, config.r, config.K)
    return rngmod.dirichlet(np.asarray(config.dir_psi) + counts, rng)


def initialize(dataset: VADataset, config: ModelConfig, key) -> tuple[LatentState, ModelParams]:
    rng = rngmod.substream(key, 0, rngmod.INIT)
    state = initial_state(dataset, config, rng)
    params = prior_params(config, dataset.p, rng, GIP)
    return state, params


def sweep(dataset: VADataset, config: ModelConfig, state: LatentState, params: ModelParams,
          key, iteration: int) -> ModelParams:
    stream = lambda step: rngmod.substream(key, iteration, step)  # noqa: E731
    G = sweep_group_loglik(dataset, params, state)
    sample_y_gip(dataset, state, params, stream(rngmod.STEP_Y), G)
    sample_z_gip(dataset, state, params, stream(rngmod.STEP_Z), G)
    lam = sample_lambda(state, config, stream(rngmod.STEP_LAMBDA))
    pi = sample_pi(dataset, state, config, stream(rngmod.STEP_PI))
    counts = symptom_counts(dataset, state, config.C, config.K, config.r)
    phi = sample_phi(dataset, state, config, stream(rngmod.STEP_PHI), counts)
    new = ModelParams(pi=pi, phi=phi, xi=params.xi, lam=lam)
    sample_s(dataset, state, new, stream(rngmod.STEP_S), config, counts)
    new.xi = sample_xi(state, config, stream(rngmod.STEP_XI))
    return new


def run_chain_gip(dataset: VADataset, config: ModelConfig, control=None):
    from vatensor.chain import run

    if config.family == CTUCKER:
        raise ValueError("run_chain_gip expects a PARAFAC or GroupIndepPARAFAC config")
    return run(dataset, config, control)
