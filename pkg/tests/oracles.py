"""Brute-force reference implementations used as test oracles.

Everything here is written with plain Python loops over the explicit joint
density so that it shares no code path with the vectorized samplers.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from vatensor.core import LatentState, ModelParams, VADataset


def bern(x, q) -> float:
    return math.log(q) if x == 1 else math.log1p(-q)


def observed(x) -> bool:
    return x in (0, 1)


# ---------------------------------------------------------------------------
# explicit joint log-densities

def joint_ctucker(ds: VADataset, y, Z, H, s, params: ModelParams) -> float:
    """log p(X, Y, Z, H, s | pi, nu, psi, phi, xi) with every factor spelled out."""
    total = 0.0
    C, p = s.shape
    r = params.xi.shape[1]
    for i in range(ds.n):
        c, l = int(y[i]), int(H[i])
        total += math.log(params.pi[ds.domain[i], c])
        total += math.log(params.nu[c, l])
        for g in range(r):
            total += math.log(params.psi[c, l, g, Z[i][g]])
        for j in range(p):
            x = int(ds.X[i, j])
            if observed(x):
                total += bern(x, params.phi[c, Z[i][s[c, j]], j])
    for c in range(C):
        for j in range(p):
            total += math.log(params.xi[c, s[c, j]])
    return total


def joint_gip(ds: VADataset, y, Z, s, params: ModelParams) -> float:
    total = 0.0
    C, p = s.shape
    r = params.xi.shape[1]
    for i in range(ds.n):
        c = int(y[i])
        total += math.log(params.pi[ds.domain[i], c])
        for g in range(r):
            total += math.log(params.lam[c, g, Z[i][g]])
        for j in range(p):
            x = int(ds.X[i, j])
            if observed(x):
                total += bern(x, params.phi[c, Z[i][s[c, j]], j])
    for c in range(C):
        for j in range(p):
            total += math.log(params.xi[c, s[c, j]])
    return total


def _normalize(logs) -> np.ndarray:
    m = max(logs)
    w = [math.exp(v - m) for v in logs]
    tot = sum(w)
    return np.array([v / tot for v in w])


def _copy(state: LatentState):
    return state.y.copy(), [list(z) for z in state.Z], state.H.copy(), state.s.copy()


# ---------------------------------------------------------------------------
# full conditionals by enumeration

def cond_y(ds, state, params, family="CTucker") -> np.ndarray:
    """p(Y_i = c | everything except Y_i, Z_i, H_i) for each target row,
    obtained by summing the joint over Z_i (and H_i)."""
    C = params.pi.shape[1]
    K = params.phi.shape[1]
    r = params.xi.shape[1]
    h = 1 if family != "CTucker" else params.nu.shape[1]
    out = []
    for i in ds.target_rows:
        y, Z, H, s = _copy(state)
        logs = []
        for c in range(C):
            terms = []
            for l in range(h):
                for z in itertools.product(range(K), repeat=r):
                    y[i], Z[i], H[i] = c, list(z), l
                    if family == "CTucker":
                        terms.append(joint_ctucker(ds, y, Z, H, s, params))
                    else:
                        terms.append(joint_gip(ds, y, Z, s, params))
            m = max(terms)
            logs.append(m + math.log(sum(math.exp(t - m) for t in terms)))
        out.append(_normalize(logs))
    return np.array(out).reshape(len(ds.target_rows), C)


def cond_z(ds, state, params, family="CTucker") -> np.ndarray:
    """(n, r, K): vary one Z_ig at a time with everything else fixed."""
    K = params.phi.shape[1]
    r = params.xi.shape[1]
    out = np.zeros((ds.n, r, K))
    for i in range(ds.n):
        for g in range(r):
            y, Z, H, s = _copy(state)
            logs = []
            for k in range(K):
                Z[i][g] = k
                if family == "CTucker":
                    logs.append(joint_ctucker(ds, y, Z, H, s, params))
                else:
                    logs.append(joint_gip(ds, y, Z, s, params))
            out[i, g] = _normalize(logs)
    return out


def cond_h(ds, state, params) -> np.ndarray:
    h = params.nu.shape[1]
    out = np.zeros((ds.n, h))
    for i in range(ds.n):
        y, Z, H, s = _copy(state)
        logs = []
        for l in range(h):
            H[i] = l
            logs.append(joint_ctucker(ds, y, Z, H, s, params))
        out[i] = _normalize(logs)
    return out


def cond_s(ds, state, params, family="CTucker") -> np.ndarray:
    """(C, p, r): vary one s_cj at a time."""
    C, p = state.s.shape
    r = params.xi.shape[1]
    out = np.zeros((C, p, r))
    for c in range(C):
        for j in range(p):
            y, Z, H, s = _copy(state)
            logs = []
            for g in range(r):
                s[c, j] = g
                if family == "CTucker":
                    logs.append(joint_ctucker(ds, y, Z, H, s, params))
                else:
                    logs.append(joint_gip(ds, y, Z, s, params))
            out[c, j] = _normalize(logs)
    return out


# ---------------------------------------------------------------------------
# naive likelihood over all K**r class combinations

def naive_row_loglik(x, c, params: ModelParams, s_row) -> float:
    """log sum_{k_1..k_r} lambda_{c,k} prod_j Bern(x_j; phi_{c,k_{s_j},j})
    with lambda_{c,k} = sum_l nu_cl prod_g psi_{c,l,g,k_g} (or prod_g lam_{c,g,k_g})."""
    K = params.phi.shape[1]
    r = params.xi.shape[1]
    terms = []
    for combo in itertools.product(range(K), repeat=r):
        if params.psi is not None:
            w = sum(params.nu[c, l] * math.prod(params.psi[c, l, g, combo[g]] for g in range(r))
                    for l in range(params.nu.shape[1]))
        else:
            w = math.prod(params.lam[c, g, combo[g]] for g in range(r))
        ll = math.log(w)
        for j, xj in enumerate(x):
            if observed(int(xj)):
                ll += bern(int(xj), params.phi[c, combo[s_row[j]], j])
        terms.append(ll)
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def conditional_independence_loglik(x, c, phi) -> float:
    """K = 1: product of independent Bernoullis."""
    return sum(bern(int(xj), phi[c, 0, j]) for j, xj in enumerate(x) if observed(int(xj)))


# ---------------------------------------------------------------------------
# random instances

def random_params(rng, C, K, r, h, p, family="CTucker", conc=1.0) -> ModelParams:
    pi = rng.dirichlet(np.full(C, conc), size=2)
    phi = rng.uniform(0.02, 0.98, size=(C, K, p))
    xi = rng.dirichlet(np.full(r, conc), size=C)
    if family == "CTucker":
        nu = rng.dirichlet(np.full(h, conc), size=C)
        psi = rng.dirichlet(np.full(K, conc), size=(C, h, r))
        return ModelParams(pi=pi, phi=phi, xi=xi, nu=nu, psi=psi)
    lam = rng.dirichlet(np.full(K, conc), size=(C, r))
    return ModelParams(pi=pi, phi=phi, xi=xi, lam=lam)


def random_instance(rng, n, p, C, K, r, h, family="CTucker", missing=0.15):
    X = rng.integers(0, 2, size=(n, p))
    X[rng.random((n, p)) < missing] = -1
    domain = rng.integers(0, 2, size=n)
    y = rng.integers(0, C, size=n)
    ds = VADataset(X=X, y=np.where(domain == 1, y, -1), domain=domain,
                   cause_names=tuple(f"c{c}" for c in range(C)))
    state = LatentState(y=y.copy(), Z=rng.integers(0, K, size=(n, r)),
                        H=rng.integers(0, h, size=n) if family == "CTucker" else np.zeros(n, dtype=np.int64),
                        s=rng.integers(0, r, size=(C, p)))
    return ds, state, random_params(rng, C, K, r, h, p, family)


# ---------------------------------------------------------------------------
# misc

def batch_means_se(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Monte-Carlo standard error of the mean of an autocorrelated series
    (leading axis = draws) by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    T = (len(x) // n_batches) * n_batches
    b = x[:T].reshape(n_batches, T // n_batches, *x.shape[1:]).mean(axis=1)
    return b.std(axis=0, ddof=1) / math.sqrt(n_batches)


def dirichlet_moments(alpha):
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum(axis=-1, keepdims=True)
    mean = alpha / a0
    var = alpha * (a0 - alpha) / (a0 ** 2 * (a0 + 1))
    return mean, mean ** 2 + var  # first and second raw moments
