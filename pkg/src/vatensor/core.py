"""Domain types, validation and exact likelihoods for the three decompositions.

Indices are 0-based throughout the library (causes, latent classes, groups,
mixture components).  File formats and reports use 1-based labels.

Missing symptoms are coded as ``-1`` (or ``nan`` when a float array is
passed) and contribute no Bernoulli factor.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from vatensor.rng import logsumexp

PARAFAC = "PARAFAC"
GIP = "GroupIndepPARAFAC"
CTUCKER = "CTucker"
FAMILIES = (PARAFAC, GIP, CTUCKER)

_FAMILY_ALIASES = {
    "parafac": PARAFAC,
    "groupindepparafac": GIP,
    "gip": GIP,
    "ctucker": CTUCKER,
    "c-tucker": CTUCKER,
}

TRAIN, TARGET = 1, 0
MISSING = -1


class DimensionError(ValueError):
    """Array shapes disagree with the declared model dimensions."""


class ConfigError(ValueError):
    """A model or simulation configuration is invalid."""


class ValidationError(ValueError):
    """Dataset/config invariants are violated; ``violations`` lists them."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def canonical_family(name: str) -> str:
    try:
        return _FAMILY_ALIASES[name.replace("_", "").lower()]
    except KeyError:
        raise ConfigError(f"unknown model family {name!r}; expected one of {FAMILIES}") from None


def coerce_symptoms(X) -> np.ndarray:
    """int8 matrix with 0/1 and -1 for missing.  Out-of-range values are kept
    as-is so that ``validate`` can report them."""
    X = np.asarray(X)
    if X.dtype.kind == "f":
        out = np.where(np.isnan(X), MISSING, X)
        if np.any(out != np.round(out)):
            return out  # left as float so validate can flag it
        return out.astype(np.int8)
    return X.astype(np.int8) if X.size and np.abs(X).max() < 127 else X.astype(np.int64)


@dataclass(frozen=True)
class VADataset:
    """Binary symptoms ``X`` (n x p), causes ``y`` (-1 when unobserved) and
    domain flags ``domain`` (1 training, 0 target)."""

    X: np.ndarray
    y: np.ndarray
    domain: np.ndarray
    cause_names: tuple[str, ...]
    symptom_names: tuple[str, ...] = ()
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        X = coerce_symptoms(self.X)
        if X.ndim != 2:
            raise DimensionError(f"X must be 2-d, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "domain", np.asarray(self.domain, dtype=np.int64).reshape(-1))
        if not self.symptom_names:
            object.__setattr__(self, "symptom_names", tuple(f"s_{j + 1}" for j in range(X.shape[1])))
        if not self.ids:
            object.__setattr__(self, "ids", tuple(str(i + 1) for i in range(X.shape[0])))
        object.__setattr__(self, "cause_names", tuple(self.cause_names))
        object.__setattr__(self, "symptom_names", tuple(self.symptom_names))
        object.__setattr__(self, "ids", tuple(self.ids))
        n = X.shape[0]
        if len(self.y) != n or len(self.domain) != n or len(self.ids) != n:
            raise DimensionError("X, y, domain and ids must have the same number of rows")
        if len(self.symptom_names) != X.shape[1]:
            raise DimensionError("symptom_names must have one entry per column of X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def C(self) -> int:
        return len(self.cause_names)

    @cached_property
    def ones(self) -> np.ndarray:
        return (self.X == 1).astype(float)

    @cached_property
    def zeros(self) -> np.ndarray:
        return (self.X == 0).astype(float)

    @cached_property
    def both(self) -> np.ndarray:
        return np.hstack([self.ones, self.zeros])

    @cached_property
    def target_rows(self) -> np.ndarray:
        return np.flatnonzero(self.domain == TARGET)

    @cached_property
    def train_rows(self) -> np.ndarray:
        return np.flatnonzero(self.domain == TRAIN)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in (self.X, self.y, self.domain):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(json.dumps([self.cause_names, self.symptom_names, self.ids]).encode())
        return h.hexdigest()

    @classmethod
    def empty(cls, p: int, C: int) -> "VADataset":
        return cls(np.zeros((0, p), np.int8), np.zeros(0, int), np.zeros(0, int),
                   tuple(f"cause_{c + 1}" for c in range(C)))


@dataclass(frozen=True)
class ChainControl:
    iterations: int = 3000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0
    store_phi: bool = False
    store_s: bool = True
    store_assignments: bool = False
    progress: object = field(default=None, compare=False, repr=False)

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def violations(self) -> list[str]:
        out = []
        if self.iterations < 1:
            out.append("mcmc.iterations must be positive")
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            out.append("mcmc.burn_in must satisfy 0 <= burn_in < iterations")
        if self.thinning < 1:
            out.append("mcmc.thinning must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            out.append("mcmc.seed must fit in 64 bits")
        return out


@dataclass(frozen=True)
class ModelConfig:
    """Model family, latent dimensions and prior hyperparameters.

    ``alpha`` (length C) and ``dir_psi`` (length K) default to all-ones.
    PARAFAC forces ``r = h = 1`` and GroupIndepPARAFAC forces ``h = 1``.
    ``group_fixed`` (C x p, 0-based) switches off inference of the grouping.
    """

    family: str = CTUCKER
    C: int = 2
    K: int = 3
    r: int = 5
    h: int = 3
    alpha: tuple[float, ...] | None = None
    dir_psi: tuple[float, ...] | None = None
    beta_phi_a: float = 1.0
    beta_phi_b: float = 1.0
    group_fixed: np.ndarray | None = field(default=None, compare=False)
    mcmc: ChainControl = field(default_factory=ChainControl)

    def __post_init__(self):
        fam = canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        if fam == PARAFAC:
            object.__setattr__(self, "r", 1)
            object.__setattr__(self, "h", 1)
        elif fam == GIP:
            object.__setattr__(self, "h", 1)
        if self.alpha is None:
            object.__setattr__(self, "alpha", (1.0,) * int(self.C))
        if self.dir_psi is None:
            object.__setattr__(self, "dir_psi", (1.0,) * int(self.K))
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.ravel(self.alpha)))
        object.__setattr__(self, "dir_psi", tuple(float(a) for a in np.ravel(self.dir_psi)))
        if self.group_fixed is not None:
            object.__setattr__(self, "group_fixed", np.asarray(self.group_fixed, dtype=np.int64))

    def with_(self, **kw) -> "ModelConfig":
        """``dataclasses.replace`` that re-derives default priors when C or K change."""
        if kw.get("C", self.C) != self.C and "alpha" not in kw:
            kw["alpha"] = None
        if kw.get("K", self.K) != self.K and "dir_psi" not in kw:
            kw["dir_psi"] = None
        return replace(self, **kw)

    def violations(self, p: int | None = None) -> list[str]:
        out = []
        for name in ("C", "K", "r", "h"):
            if int(getattr(self, name)) < 1:
                out.append(f"model.{name} must be a positive integer")
        if self.C < 2:
            out.append("model.C must be at least 2")
        if p is not None and self.r > p:
            out.append(f"model.r={self.r} exceeds the number of symptoms p={p}")
        if len(self.alpha) != self.C:
            out.append(f"alpha has length {len(self.alpha)}, expected C={self.C}")
        if len(self.dir_psi) != self.K:
            out.append(f"dir_psi has length {len(self.dir_psi)}, expected K={self.K}")
        if any(a <= 0 for a in self.alpha) or any(b <= 0 for b in self.dir_psi):
            out.append("Dirichlet concentrations must be strictly positive")
        if self.beta_phi_a <= 0 or self.beta_phi_b <= 0:
            out.append("Beta shapes for phi must be strictly positive")
        if self.group_fixed is not None:
            g = self.group_fixed
            if p is not None and g.shape != (self.C, p):
                out.append(f"group_fixed has shape {g.shape}, expected {(self.C, p)}")
            elif g.size and (g.min() < 0 or g.max() >= self.r):
                out.append(f"group_fixed entries must lie in 1..r (r={self.r})")
        out.extend(self.mcmc.violations())
        return out

    def to_dict(self) -> dict:
        d = asdict(replace(self, group_fixed=None))
        d["mcmc"].pop("progress", None)
        d["group_fixed"] = None if self.group_fixed is None else (self.group_fixed + 1).tolist()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class LatentState:
    y: np.ndarray  # (n,) cause per death, observed for training rows
    Z: np.ndarray  # (n, r)
    H: np.ndarray  # (n,) zeros unless CTucker
    s: np.ndarray  # (C, p)


@dataclass
class ModelParams:
    """pi[1] is the training CSMF and pi[0] the target CSMF."""

    pi: np.ndarray  # (2, C)
    phi: np.ndarray  # (C, K, p)
    xi: np.ndarray  # (C, r)
    nu: np.ndarray | None = None  # (C, h)
    psi: np.ndarray | None = None  # (C, h, r, K)
    lam: np.ndarray | None = None  # (C, r, K)

    @property
    def family(self) -> str:
        return CTUCKER if self.psi is not None else GIP

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: None if v is None else v.copy() for k, v in vars(self).items()})

    def class_weights(self) -> np.ndarray:
        """p(Z_is = k | Y = c) as a (C, r, K) array."""
        if self.psi is not None:
            return np.einsum("cl,clsk->csk", self.nu, self.psi)
        return self.lam

    def simplex_violations(self, tol: float = 1e-12) -> list[str]:
        out = []
        for name in ("pi", "nu", "psi", "lam", "xi"):
            v = getattr(self, name)
            if v is None:
                continue
            if np.any(v < 0):
                out.append(f"{name} has negative entries")
            if np.any(np.abs(v.sum(axis=-1) - 1.0) > tol):
                out.append(f"{name} rows do not sum to 1")
        if not np.all((self.phi > 0) & (self.phi < 1)):
            out.append("phi entries must lie strictly inside (0, 1)")
        return out


def as_ctucker(params: ModelParams) -> ModelParams:
    """View GIP parameters as c-Tucker parameters with h = 1."""
    if params.psi is not None:
        return params
    C = params.lam.shape[0]
    return replace(params, nu=np.ones((C, 1)), psi=params.lam[:, None, :, :], lam=None)


# ---------------------------------------------------------------------------
# likelihoods

def _bernoulli_masks(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    observed = ~np.isnan(X) & (X != MISSING)
    return (observed & (X == 1)).astype(float), (observed & (X == 0)).astype(float)


def group_loglik(ones: np.ndarray, zeros: np.ndarray, phi: np.ndarray, s: np.ndarray, r: int) -> np.ndarray:
    """log prod_{j: s_cj = g} Bern(x_ij; phi_ckj) for every row, cause, class
    and group.  Returns an (n, C, K, r) array."""
    C, K, p = phi.shape
    if ones.shape[1] != p or s.shape != (C, p):
        raise DimensionError(f"symptom dimension mismatch: X has {ones.shape[1]} columns, phi {phi.shape}, s {s.shape}")
    member = (s[:, None, :] == np.arange(r)[:, None]).astype(float)  # (C, r, p)
    A = (np.log(phi)[:, :, None, :] * member[:, None]).reshape(C * K * r, p)
    B = (np.log1p(-phi)[:, :, None, :] * member[:, None]).reshape(C * K * r, p)
    return (ones @ A.T + zeros @ B.T).reshape(-1, C, K, r)


def _shift(G: np.ndarray):
    """Split group log-likelihoods into exp(G - max_k G) and the per-group max."""
    m = G.max(axis=-2, keepdims=True)
    return np.exp(G - m), m


def cause_loglik_ctucker(G: np.ndarray, nu: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Marginal log p(x_i | Y_i = c) from group log-likelihoods ``G``
    (n, C, K, r).  Returns (n, C).

    Sums over K**r class combinations factor into r sums over K per
    mixture component l; each is evaluated as a max-shifted matmul.
    """
    E, m = _shift(G)
    S = np.matmul(E.transpose(1, 3, 0, 2), psi.transpose(0, 2, 3, 1))  # (C, r, n, h)
    with np.errstate(divide="ignore"):
        logS = np.log(S) + m[:, :, 0, :].transpose(1, 2, 0)[..., None]
        lognu = np.log(nu)
    per_component = logS.sum(axis=1) + lognu[:, None, :]  # (C, n, h)
    return logsumexp(per_component, axis=-1).T


def cause_loglik_gip(G: np.ndarray, lam: np.ndarray) -> np.ndarray:
    E, m = _shift(G)
    S = np.sum(E * lam.transpose(0, 2, 1)[None], axis=2)
    with np.errstate(divide="ignore"):
        return (np.log(S) + m[:, :, 0, :]).sum(axis=-1)


def own_cause_loglik(G: np.ndarray, y: np.ndarray, params: "ModelParams") -> np.ndarray:
    """log p(x_i | Y_i = y_i) for rows of ``G`` (n, C, K, r) at their own cause."""
    E, m = _shift(G[np.arange(len(y)), y])  # (n, K, r)
    with np.errstate(divide="ignore"):
        if params.psi is not None:
            S = np.einsum("nks,nlsk->nls", E, params.psi[y])
            per_component = (np.log(S) + m[:, None, 0, :]).sum(axis=-1) + np.log(params.nu[y])
            return logsumexp(per_component, axis=-1)
        S = np.einsum("nks,nsk->ns", E, params.lam[y])
        return (np.log(S) + m[:, 0, :]).sum(axis=-1)


def cause_loglik(ones, zeros, params: ModelParams, s: np.ndarray) -> np.ndarray:
    """(n, C) matrix of log p(x_i | Y_i = c) under the family of ``params``."""
    r = params.xi.shape[1]
    G = group_loglik(ones, zeros, params.phi, s, r)
    if params.psi is not None:
        return cause_loglik_ctucker(G, params.nu, params.psi)
    return cause_loglik_gip(G, params.lam)


def _check_row(x, params: ModelParams, s_row, K: int, r: int, c: int):
    C, Kp, p = params.phi.shape
    x = np.asarray(x, dtype=float).reshape(-1)
    s_row = np.asarray(s_row, dtype=np.int64).reshape(-1)
    if Kp != K or params.xi.shape[1] != r or len(x) != p or len(s_row) != p:
        raise DimensionError(f"row of length {len(x)}, grouping of length {len(s_row)} "
                             f"do not match phi {params.phi.shape}, K={K}, r={r}")
    if not 0 <= c < C:
        raise DimensionError(f"cause index {c} outside 0..{C - 1}")
    if s_row.size and (s_row.min() < 0 or s_row.max() >= r):
        raise DimensionError("grouping entries must lie in 0..r-1")
    s_full = np.zeros((C, p), dtype=np.int64)
    s_full[c] = s_row
    return x, s_full


def row_loglik_ctucker(x, c: int, params: ModelParams, s_row, K: int, r: int, h: int) -> float:
    """log sum_l nu_cl prod_g [sum_k psi_clgk prod_{j in g} Bern(x_j; phi_ckj)]."""
    x, s_full = _check_row(x, params, s_row, K, r, c)
    if params.psi is None or params.psi.shape[1:] != (h, r, K):
        raise DimensionError(f"psi must have shape (C, {h}, {r}, {K})")
    ones, zeros = _bernoulli_masks(x)
    G = group_loglik(ones, zeros, params.phi, s_full, r)[:, c:c + 1]
    return float(cause_loglik_ctucker(G, params.nu[c:c + 1], params.psi[c:c + 1])[0, 0])


def row_loglik_gip(x, c: int, params: ModelParams, s_row, K: int, r: int) -> float:
    """log prod_g sum_k lambda_cgk prod_{j in g} Bern(x_j; phi_ckj)."""
    x, s_full = _check_row(x, params, s_row, K, r, c)
    if params.lam is None or params.lam.shape[1:] != (r, K):
        raise DimensionError(f"lam must have shape (C, {r}, {K})")
    ones, zeros = _bernoulli_masks(x)
    G = group_loglik(ones, zeros, params.phi, s_full, r)[:, c:c + 1]
    return float(cause_loglik_gip(G, params.lam[c:c + 1])[0, 0])


# ---------------------------------------------------------------------------
# expanded representation

@dataclass
class ExpandedProfiles:
    combos: np.ndarray  # (K**m, m) class index per selected group
    weights: np.ndarray  # (K,) * m joint class weights
    profiles: np.ndarray  # (K**m, p_S)
    symptoms: np.ndarray  # (p_S,) symptom indices, ordered by group then index
    groups: tuple[int, ...]


def expand_profiles(params: ModelParams, c: int, groups: Sequence[int], s_row, cap: int = 4096) -> ExpandedProfiles:
    """Equivalent PARAFAC profiles and weights for a subset of groups of cause ``c``.

    The weight of the combination (k_1, ..., k_m) is
    ``sum_l nu_cl prod_g psi_clgk_g``; each expanded profile concatenates the
    group sub-profiles ``phi_c,k_g,j`` for the symptoms in group g.
    """
    groups = tuple(int(g) for g in groups)
    pc = as_ctucker(params)
    K = pc.phi.shape[1]
    r = pc.psi.shape[2]
    if not groups or len(set(groups)) != len(groups) or min(groups) < 0 or max(groups) >= r:
        raise ValueError(f"groups must be distinct indices in 0..{r - 1}")
    need = K ** len(groups)
    if need > cap:
        raise ValueError(f"expansion needs {need} profiles (K={K}, {len(groups)} groups); "
                         f"raise cap to at least {need}")
    s_row = np.asarray(s_row, dtype=np.int64)
    nu, psi = pc.nu[c], pc.psi[c]  # (h,), (h, r, K)
    weights = nu
    for g in groups:
        weights = np.einsum("l...,lk->l...k", weights, psi[:, g, :])
    weights = weights.sum(axis=0)
    combos = np.array(list(itertools.product(range(K), repeat=len(groups))), dtype=np.int64)
    symptoms = np.concatenate([np.flatnonzero(s_row == g) for g in groups]).astype(np.int64)
    which = {g: i for i, g in enumerate(groups)}
    slot = np.array([which[int(s_row[j])] for j in symptoms], dtype=np.int64)
    profiles = pc.phi[c][combos[:, slot], symptoms[None, :]] if len(symptoms) else np.zeros((need, 0))
    return ExpandedProfiles(combos, weights, profiles, symptoms, groups)


# ---------------------------------------------------------------------------
# validation

def validate(dataset: VADataset, config: ModelConfig | None = None, allow_empty: bool = False) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out: list[str] = []
    X, y, d = dataset.X, dataset.y, dataset.domain
    if dataset.n < 1 and not allow_empty:
        out.append("dataset has no deaths (n >= 1 required)")
    if dataset.p < 1:
        out.append("dataset has no symptoms (p >= 1 required)")
    if dataset.C < 2:
        out.append("at least two causes are required")
    bad = np.argwhere((X != 0) & (X != 1) & (X != MISSING))
    for i, j in bad[:20]:
        out.append(f"X[row {i + 1}, column {dataset.symptom_names[j]}] = {X[i, j]} is not 0, 1 or missing")
    if len(bad) > 20:
        out.append(f"... {len(bad) - 20} more invalid symptom entries")
    for i in np.flatnonzero((d != TRAIN) & (d != TARGET))[:20]:
        out.append(f"row {i + 1}: domain flag {d[i]} is not 0 or 1")
    for i in np.flatnonzero((d == TRAIN) & (y < 0))[:20]:
        out.append(f"row {i + 1}: training death without an observed cause")
    for i in np.flatnonzero((d == TARGET) & (y >= 0))[:20]:
        out.append(f"row {i + 1}: target death carries a cause label")
    for i in np.flatnonzero((y >= dataset.C) | (y < -1))[:20]:
        out.append(f"row {i + 1}: cause {y[i] + 1} outside 1..{dataset.C}")
    if config is not None:
        if config.C != dataset.C:
            out.append(f"config has C={config.C} causes but the dataset has {dataset.C}")
        out.extend(config.violations(dataset.p))
    return out


def require_valid(dataset: VADataset, config: ModelConfig, allow_empty: bool = False) -> None:
    problems = validate(dataset, config, allow_empty=allow_empty)
    if problems:
        raise ValidationError(problems)
