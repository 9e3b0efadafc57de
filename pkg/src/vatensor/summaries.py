"""Posterior summaries for choosing K and r and for reading the fitted groups.

Label switching across sweeps makes averages of phi and psi meaningless, so
parameter-level reports (class weights, expanded profiles) use the single
best-scoring retained sweep.  Utilization fractions and mode-based group
assignments are label-invariant per sweep and use every retained draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vatensor.chain import PosteriorDraws
from vatensor.core import TARGET, ModelParams, VADataset


@dataclass
class GroupUtilization:
    fractions: np.ndarray  # (C, r) share of draws in which group g holds a symptom of cause c
    order: np.ndarray  # (C, r) groups of each cause sorted by decreasing fraction
    sorted: np.ndarray  # (C, r)
    average: np.ndarray  # (r,) mean over causes of the sorted curves


@dataclass
class ClassUtilization:
    fractions: np.ndarray  # (C, r, K) share of draws in which class k is occupied in (c, g)
    sorted: np.ndarray  # (C, r, K) decreasing along the last axis


@dataclass
class Selection:
    value: int
    by_threshold: int
    by_coverage: int
    rule: str


def group_utilization(draws: PosteriorDraws) -> GroupUtilization:
    if draws.s is None:
        raise ValueError("group assignments were not stored (store_s is off)")
    r = draws.config.r
    used = (draws.s[..., None] == np.arange(r)).any(axis=2)  # (T, C, r)
    frac = used.mean(axis=0) if draws.n_draws else np.zeros(used.shape[1:])
    order = np.argsort(-frac, axis=1, kind="stable")
    srt = np.take_along_axis(frac, order, axis=1)
    return GroupUtilization(frac, order, srt, srt.mean(axis=0))


def class_utilization(draws: PosteriorDraws) -> ClassUtilization:
    occupied = draws.class_counts > 0  # (T, C, r, K)
    frac = occupied.mean(axis=0) if draws.n_draws else np.zeros(occupied.shape[1:])
    return ClassUtilization(frac, -np.sort(-frac, axis=-1))


def select_r(utilization, threshold: float = 0.05, coverage: float = 0.95) -> Selection:
    """Recommend the number of groups from average sorted utilizations.

    The default (threshold) rule keeps the longest leading run of groups used
    in more than ``threshold`` of the draws; the coverage rule keeps the
    fewest groups whose utilization adds up to ``coverage`` of the total.
    """
    avg = utilization.average if isinstance(utilization, GroupUtilization) else np.asarray(utilization, float)
    avg = -np.sort(-avg)
    above = avg > threshold
    by_threshold = max(1, int(np.argmin(above)) if not above.all() else len(avg))
    cum = np.cumsum(avg)
    if cum[-1] > 0:
        by_coverage = int(np.searchsorted(cum / cum[-1], coverage - 1e-12) + 1)
    else:
        by_coverage = 1
    return Selection(by_threshold, by_threshold, min(by_coverage, len(avg)), "threshold")


def select_k(class_util, threshold: float = 0.05, coverage: float = 0.80) -> Selection:
    """Recommend K from class utilization fractions (C, r, K).

    A class counts when it is occupied in at least ``threshold`` of the
    draws.  The coverage rule (default) picks the smallest K whose top-K
    classes in every (cause, group) contain ``coverage`` of all counted
    classes; the threshold rule picks the K that contains all of them.
    """
    frac = class_util.fractions if isinstance(class_util, ClassUtilization) else np.asarray(class_util, float)
    counted = (frac >= threshold).sum(axis=-1)  # (C, r)
    total = counted.sum()
    K = frac.shape[-1]
    by_threshold = max(1, int(counted.max(initial=0)))
    by_coverage = 1
    if total > 0:
        for k in range(1, K + 1):
            if np.minimum(counted, k).sum() >= coverage * total - 1e-12:
                by_coverage = k
                break
    return Selection(by_coverage, by_threshold, by_coverage, "coverage")


def group_class_weights(params: ModelParams, c: int) -> np.ndarray:
    """(r, K) matrix of p(Z_ig = k | Y = c) = sum_l nu_cl psi_clgk."""
    return params.class_weights()[c]


def s_mode(draws: PosteriorDraws) -> tuple[np.ndarray, np.ndarray]:
    """Marginal posterior mode of each s_cj and its probability, both (C, p)."""
    if draws.s is None or draws.n_draws == 0:
        raise ValueError("group assignments were not stored (store_s is off)")
    r = draws.config.r
    freq = (draws.s[..., None] == np.arange(r)).mean(axis=0)  # (C, p, r)
    mode = freq.argmax(axis=-1)
    return mode, np.take_along_axis(freq, mode[..., None], axis=-1)[..., 0]


def empirical_symptom_rates(dataset: VADataset, C: int) -> np.ndarray:
    """(C, p) observed frequency of X_j = 1 among labeled deaths of cause c."""
    out = np.zeros((C, dataset.p))
    rows = dataset.train_rows
    for c in range(C):
        sel = rows[dataset.y[rows] == c]
        n_obs = dataset.ones[sel].sum(axis=0) + dataset.zeros[sel].sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[c] = np.where(n_obs > 0, dataset.ones[sel].sum(axis=0) / n_obs, 0.0)
    return out


@dataclass
class Topic:
    group: int
    members: list[tuple[int, float, float]]  # (symptom, p(s_cj = mode), empirical rate)
    mean_rate: float
    top_m: int = 5
    names: list[str] = field(default_factory=list)

    @property
    def anchors(self) -> list[tuple[int, float, float]]:
        return self.members[: self.top_m]


def symptom_topics(draws: PosteriorDraws, dataset: VADataset, c: int, top_m: int = 5) -> list[Topic]:
    """Symptom groups of cause ``c`` ranked for reading.

    Symptoms go to their modal group, sorted by the mode probability with
    ties broken by the empirical rate p(X_j = 1 | Y = c); groups are ordered
    by decreasing mean empirical rate.
    """
    mode, prob = s_mode(draws)
    rate = empirical_symptom_rates(dataset, draws.config.C)[c]
    topics = []
    for g in np.unique(mode[c]):
        js = np.flatnonzero(mode[c] == g)
        order = sorted(js, key=lambda j: (-prob[c, j], -rate[j], j))
        members = [(int(j), float(prob[c, j]), float(rate[j])) for j in order]
        topics.append(Topic(int(g), members, float(rate[js].mean()), top_m,
                            [dataset.symptom_names[j] for j in order]))
    topics.sort(key=lambda t: (-t.mean_rate, t.group))
    return topics


@dataclass
class CauseProbs:
    probs: np.ndarray  # (n_target, C) Rao-Blackwellized
    frequencies: np.ndarray | None  # (n_target, C) raw draw frequencies, if assignments were stored
    rows: np.ndarray  # dataset row index of each target death

    @property
    def top(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


def individual_cause_probs(draws: PosteriorDraws) -> CauseProbs:
    freq = None
    if draws.y is not None and draws.n_draws:
        C = draws.config.C
        freq = (draws.y[..., None] == np.arange(C)).mean(axis=0)
    return CauseProbs(draws.y_prob, freq, draws.target_rows)


@dataclass
class CSMFEstimate:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def csmf_estimate(draws: PosteriorDraws, level: float = 0.95) -> CSMFEstimate:
    """Posterior mean and equal-tailed interval of the target CSMF."""
    pi0 = draws.pi[:, TARGET]
    if len(pi0) == 0:
        raise ValueError("no retained draws")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(pi0, [tail, 1.0 - tail], axis=0)
    mean = pi0.mean(axis=0)
    return CSMFEstimate(mean / mean.sum(), lo, hi, level)
