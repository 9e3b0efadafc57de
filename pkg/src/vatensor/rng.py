"""Counter-based random streams and numerically safe draws.

Every sampler step takes its randomness from a Philox generator whose
counter encodes ``(iteration, step)``.  Element ``i`` of a vectorized draw is
therefore a fixed function of ``(seed, iteration, step, i)`` and does not
depend on how many numbers other steps consumed.
"""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

# step ids used as the second counter word
INIT = 0
STEP_Y, STEP_Z, STEP_H, STEP_PI, STEP_NU, STEP_PSI, STEP_PHI, STEP_S, STEP_XI = range(1, 10)
STEP_LAMBDA = STEP_H


def master_key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def substream(key: np.ndarray, iteration: int, step: int, sub: int = 0) -> np.random.Generator:
    """Generator for one (iteration, step) block of the chain."""
    counter = np.array([0, sub, step, iteration], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def normalize_log(logw: np.ndarray) -> np.ndarray:
    """Softmax over the last axis; rows that are entirely -inf come back as nan."""
    m = np.max(logw, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        w = np.exp(logw - m)
        return w / w.sum(axis=-1, keepdims=True)


def categorical_log(
    logw: np.ndarray,
    rng: np.random.Generator,
    fallback: np.ndarray | None = None,
    what: str = "categorical",
) -> np.ndarray:
    """Draw one index per row of ``logw`` (shape ``(..., m)``) by inverse CDF.

    Rows whose masses all underflow are redrawn from ``fallback`` (log weights
    broadcastable to ``logw``) and a warning is logged.
    """
    logw = np.asarray(logw, dtype=float)
    u = rng.random(logw.shape[:-1])
    m = np.max(logw, axis=-1, keepdims=True)
    bad = ~np.isfinite(m[..., 0])
    if bad.any():
        if fallback is None:
            raise FloatingPointError(f"{what}: all masses are zero")
        logger.warning("%s: %d rows with zero total mass, drawing from prior", what, int(bad.sum()))
        logw = np.where(bad[..., None], np.broadcast_to(fallback, logw.shape), logw)
        m = np.max(logw, axis=-1, keepdims=True)
    w = np.exp(logw - m)
    cdf = np.cumsum(w, axis=-1)
    target = u[..., None] * cdf[..., -1:]
    idx = np.sum(cdf <= target, axis=-1)
    return np.minimum(idx, logw.shape[-1] - 1)


def dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Dirichlet draws along the last axis of ``alpha``.

    Uses log G = log Gamma(a + 1) + log(U) / a so that tiny concentrations
    never produce an all-zero row.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = rng.standard_gamma(alpha + 1.0)
    u = rng.random(alpha.shape)
    logg = np.log(g) + np.log(u) / alpha
    return normalize_log(logg)


def beta(a: np.ndarray, b: np.ndarray, rng: np.random.Generator, eps: float = 1e-12) -> np.ndarray:
    """Beta draws clipped to the open interval (eps, 1 - eps)."""
    ab = np.stack(np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float)), axis=-1)
    x = dirichlet(ab, rng)[..., 0]
    return np.clip(x, eps, 1.0 - eps)
