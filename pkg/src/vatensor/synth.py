"""Synthetic verbal-autopsy data drawn from a c-Tucker model.

Symptoms are split into ``r`` cyclic groups per cause.  The first
``ceil(2r/5)`` groups emit from class profiles shared by all causes (they
carry no cause information); the remaining groups use cause-specific
profiles.  Scenario II draws separate class weights for the training and
target domains so that p(X | Y) shifts between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vatensor import rng as rngmod
from vatensor.core import TARGET, TRAIN, ConfigError, VADataset


@dataclass(frozen=True)
class SimConfig:
    C: int = 20
    p: int = 80
    n_train: int = 2000
    n_target: int = 1000
    K: int = 3
    r: int = 5
    h: int = 3
    scenario: str = "I"
    beta_range: tuple[int, int] = (1, 10)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", str(self.scenario).upper())
        object.__setattr__(self, "beta_range", tuple(int(b) for b in self.beta_range))

    def violations(self) -> list[str]:
        out = []
        for name in ("C", "p", "K", "r", "h"):
            if getattr(self, name) < 1:
                out.append(f"sim.{name} must be a positive integer")
        if self.C < 2:
            out.append("sim.C must be at least 2")
        if self.n_train < 0 or self.n_target < 0:
            out.append("sample sizes must be non-negative")
        if self.r >= 1 and self.p % self.r:
            out.append(f"r={self.r} must divide p={self.p} for the cyclic grouping")
        if self.scenario not in ("I", "II"):
            out.append(f"scenario must be I or II, got {self.scenario!r}")
        lo, hi = self.beta_range
        if not 1 <= lo <= hi:
            out.append("beta_range must satisfy 1 <= low <= high")
        return out

    @property
    def n_shared_groups(self) -> int:
        return math.ceil(2 * self.r / 5)


@dataclass
class SimTruth:
    """Ground truth behind a generated dataset (0-based indices)."""

    pi: np.ndarray  # (2, C): row 1 training, row 0 target
    nu: np.ndarray  # (C, h)
    psi: np.ndarray  # (2, C, h, r, K): weights used for domain g (equal rows in scenario I)
    beta: np.ndarray  # (2, C, h, r)
    phi: np.ndarray  # (C, K, p) effective emission probabilities
    phi_shared: np.ndarray  # (K, p)
    s: np.ndarray  # (C, p)
    y: np.ndarray  # (n,) causes of every death, including target rows
    Z: np.ndarray  # (n, r)
    H: np.ndarray  # (n,)

    def target_csmf(self, domain: np.ndarray) -> np.ndarray:
        """Empirical cause fractions among target deaths."""
        y = self.y[domain == TARGET]
        return np.bincount(y, minlength=self.pi.shape[1]) / max(len(y), 1)


def cyclic_groups(C: int, p: int, r: int) -> np.ndarray:
    """0-based cyclic grouping: group(c, j) = floor(((j - (c - 1)) mod p) / (p / r))
    with 1-based c and j, shifted down by one."""
    if r < 1 or p % r:
        raise ConfigError(f"r={r} must divide p={p}")
    g = p // r
    c = np.arange(1, C + 1)[:, None]
    j = np.arange(1, p + 1)[None, :]
    return np.mod(j - (c - 1), p) // g


def generate(sim: SimConfig) -> tuple[VADataset, SimTruth]:
    problems = sim.violations()
    if problems:
        raise ConfigError("; ".join(problems))
    C, p, K, r, h = sim.C, sim.p, sim.K, sim.r, sim.h
    key = rngmod.master_key(sim.seed)
    stream = lambda i: rngmod.substream(key, 0, i)  # noqa: E731
    n = sim.n_train + sim.n_target
    domain = np.r_[np.full(sim.n_train, TRAIN), np.full(sim.n_target, TARGET)].astype(np.int64)

    pi = stream(1).dirichlet(np.ones(C), size=2)  # pi[g] for domain g
    nu = np.full((C, h), 1.0 / h)
    lo, hi = sim.beta_range
    beta = stream(2).integers(lo, hi + 1, size=(2, C, h, r)).astype(float)
    if sim.scenario == "I":
        beta[TARGET] = beta[TRAIN]
    psi = rngmod.dirichlet(np.repeat(beta[..., None], K, axis=-1), stream(3))
    if sim.scenario == "I":
        psi[TARGET] = psi[TRAIN]

    s = cyclic_groups(C, p, r)
    rng = stream(4)
    phi_shared = rng.beta(1.0, 1.0, size=(K, p))
    phi_specific = rng.beta(1.0, 1.0, size=(C, K, p))
    shared = s < sim.n_shared_groups
    phi = np.where(shared[:, None, :], phi_shared[None], phi_specific)

    rng = stream(5)
    y = np.empty(n, dtype=np.int64)
    for g in (TRAIN, TARGET):
        rows = domain == g
        y[rows] = rng.choice(C, size=int(rows.sum()), p=pi[g])
    H = rngmod.categorical_log(np.log(nu[y]), stream(6))
    w = psi[domain, y, H]  # (n, r, K)
    Z = rngmod.categorical_log(np.log(w), stream(7))
    cls = np.take_along_axis(Z, s[y], axis=1)  # class governing symptom j of death i
    prob = phi[y[:, None], cls, np.arange(p)[None, :]]
    X = (stream(8).random((n, p)) < prob).astype(np.int8)

    y_obs = np.where(domain == TRAIN, y, -1)
    ds = VADataset(X=X, y=y_obs, domain=domain, cause_names=tuple(f"cause_{c + 1}" for c in range(C)))
    truth = SimTruth(pi=pi, nu=nu, psi=psi, beta=beta, phi=phi, phi_shared=phi_shared, s=s, y=y, Z=Z, H=H)
    return ds, truth
