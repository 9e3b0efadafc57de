"""Chain orchestration and retained posterior draws."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from vatensor import ctucker, gip
from vatensor import rng as rngmod
from vatensor.core import (
    CTUCKER,
    TARGET,
    TRAIN,
    ChainControl,
    LatentState,
    ModelConfig,
    ModelParams,
    VADataset,
    cause_loglik_ctucker,
    cause_loglik_gip,
    group_loglik,
    own_cause_loglik,
    require_valid,
)

logger = logging.getLogger(__name__)


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws of one chain.

    Arrays carry a leading draw axis of length ``len(iterations)``.  ``phi``,
    ``s`` and the per-death assignments are only kept when the corresponding
    ``ChainControl`` flag is on; ``class_counts`` (occupancy of each class by
    cause and group) is always kept.  ``best_*`` hold the complete snapshot
    of the retained sweep with the highest observed-data log-likelihood.
    """

    config: ModelConfig
    iterations: np.ndarray
    pi: np.ndarray
    xi: np.ndarray
    class_counts: np.ndarray
    loglik: np.ndarray
    target_rows: np.ndarray
    y_prob: np.ndarray
    nu: np.ndarray | None = None
    psi: np.ndarray | None = None
    lam: np.ndarray | None = None
    phi: np.ndarray | None = None
    s: np.ndarray | None = None
    y: np.ndarray | None = None
    Z: np.ndarray | None = None
    H: np.ndarray | None = None
    best_iteration: int = -1
    best_params: ModelParams | None = None
    best_state: LatentState | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.iterations)

    @property
    def family(self) -> str:
        return self.config.family

    def params_at(self, t: int) -> ModelParams:
        """Parameters of retained draw ``t`` (needs stored phi)."""
        if self.phi is None:
            if self.iterations[t] == self.best_iteration:
                return self.best_params
            raise ValueError("phi was not stored; rerun with store_phi or use best_params")
        pick = lambda a: None if a is None else a[t]  # noqa: E731
        return ModelParams(pi=self.pi[t], phi=self.phi[t], xi=self.xi[t],
                           nu=pick(self.nu), psi=pick(self.psi), lam=pick(self.lam))


def observed_loglik(dataset: VADataset, params: ModelParams, s: np.ndarray):
    """Observed-data log-likelihood of (X, Y_train) and the target cause
    probabilities p(Y_i = c | x_i, parameters)."""
    r = params.xi.shape[1]
    G = group_loglik(dataset.ones, dataset.zeros, params.phi, s, r)
    with np.errstate(divide="ignore"):
        logpi = np.log(params.pi)
    tr, tg = dataset.train_rows, dataset.target_rows
    y = dataset.y[tr]
    total = float(np.sum(logpi[TRAIN, y] + own_cause_loglik(G[tr], y, params)))
    if params.psi is not None:
        L = cause_loglik_ctucker(G[tg], params.nu, params.psi)
    else:
        L = cause_loglik_gip(G[tg], params.lam)
    logmass = logpi[TARGET][None, :] + L
    if len(tg):
        total += float(np.sum(rngmod.logsumexp(logmass, axis=1)))
    return total, rngmod.normalize_log(logmass)


class _Recorder:
    def __init__(self, dataset, config, control):
        self.dataset, self.config, self.control = dataset, config, control
        self.rows = {k: [] for k in ("iterations", "pi", "xi", "nu", "psi", "lam", "phi", "s",
                                     "class_counts", "loglik", "y", "Z", "H")}
        self.y_prob = np.zeros((len(dataset.target_rows), config.C))
        self.best = (-np.inf, -1, None, None)

    def record(self, it: int, state: LatentState, params: ModelParams):
        cfg, ctl, rows = self.config, self.control, self.rows
        ll, prob = observed_loglik(self.dataset, params, state.s)
        self.y_prob += prob
        rows["iterations"].append(it)
        rows["loglik"].append(ll)
        rows["pi"].append(params.pi.copy())
        rows["xi"].append(params.xi.copy())
        for name in ("nu", "psi", "lam"):
            v = getattr(params, name)
            if v is not None:
                rows[name].append(v.copy())
        if ctl.store_phi:
            rows["phi"].append(params.phi.copy())
        if ctl.store_s:
            rows["s"].append(state.s.copy())
        if ctl.store_assignments:
            rows["y"].append(state.y[self.dataset.target_rows].copy())
            rows["Z"].append(state.Z.copy())
            rows["H"].append(state.H.copy())
        occ = gip.lambda_counts(state, cfg.C, cfg.r, cfg.K).astype(np.int64)
        rows["class_counts"].append(occ)
        if ll > self.best[0]:
            snap = LatentState(state.y.copy(), state.Z.copy(), state.H.copy(), state.s.copy())
            self.best = (ll, it, params.copy(), snap)

    def finish(self, meta) -> PosteriorDraws:
        cfg = self.config
        stack = {}
        for k, v in self.rows.items():
            stack[k] = np.array(v) if v else None
        T = len(self.rows["iterations"])
        C, r, K = cfg.C, cfg.r, cfg.K
        empty = {"pi": (0, 2, C), "xi": (0, C, r), "class_counts": (0, C, r, K), "loglik": (0,)}
        for k, shape in empty.items():
            if stack[k] is None:
                stack[k] = np.zeros(shape)
        if stack["iterations"] is None:
            stack["iterations"] = np.zeros(0, dtype=np.int64)
        _, best_it, best_params, best_state = self.best
        return PosteriorDraws(
            config=cfg,
            target_rows=self.dataset.target_rows.copy(),
            y_prob=self.y_prob / max(T, 1),
            best_iteration=best_it,
            best_params=best_params,
            best_state=best_state,
            meta=meta,
            **stack,
        )


def run(dataset: VADataset, config: ModelConfig, control: ChainControl | None = None) -> PosteriorDraws:
    """Run one Gibbs chain for ``config.family`` and return the retained draws.

    Deaths may be zero (prior-only runs); every other dataset/config
    invariant must hold or a ``ValidationError`` is raised before sampling.
    """
    control = control or config.mcmc
    config = config.with_(mcmc=control)
    require_valid(dataset, config, allow_empty=True)
    kernel = ctucker if config.family == CTUCKER else gip
    key = rngmod.master_key(control.seed)
    t0 = time.perf_counter()
    state, params = kernel.initialize(dataset, config, key)
    rec = _Recorder(dataset, config, control)
    logger.info("%s chain: n=%d p=%d C=%d K=%d r=%d h=%d, %d iterations",
                config.family, dataset.n, dataset.p, config.C, config.K, config.r, config.h, control.iterations)
    for it in range(1, control.iterations + 1):
        params = kernel.sweep(dataset, config, state, params, key, it)
        if it > control.burn_in and (it - control.burn_in) % control.thinning == 0:
            rec.record(it, state, params)
        if callable(control.progress):
            control.progress(it, control.iterations)
    elapsed = time.perf_counter() - t0
    logger.info("chain finished in %.1fs", elapsed)
    meta = {"seed": int(control.seed), "config_hash": config.digest(),
            "dataset_checksum": dataset.checksum(), "seconds": elapsed}
    draws = rec.finish(meta)
    draws.meta["last_state"] = state
    draws.meta["last_params"] = params
    return draws


run_chain = run
