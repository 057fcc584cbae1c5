"""Exact posteriors and EM fitting for the Dawid-Skene and one-coin models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .model import (
    DawidSkeneParams,
    LabelMatrix,
    OneCoinParams,
    Prediction,
    SamplingDesign,
    clamp_probability,
    to_dawid_skene,
)
from .rules import majority_vote

MODELS = ("dawid_skene", "one_coin")


@dataclass(frozen=True, eq=False)
class Posterior:
    """``rho[j] = P(y_j = +1 | Z, T, params)``."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float, copy=True).reshape(-1)
        if np.any(rho < 0) or np.any(rho > 1) or np.any(np.isnan(rho)):
            raise ValueError("posterior probabilities must lie in [0, 1]")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def map_labels(self) -> np.ndarray:
        return np.where(self.rho >= 0.5, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class EmOptions:
    max_iter: int = 500
    tol: float = 1e-8
    estimate_prior: bool = True
    smoothing: float = 0.5
    init: str = "hard"  # "hard" MV labels or "soft" vote fractions

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if self.init not in ("hard", "soft"):
            raise ValueError(f"unknown init {self.init!r}")


def _class_log_terms(labels: LabelMatrix, p: DawidSkeneParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-item ``ln A_j`` and ``ln B_j`` (joint log-probabilities with y = +1 / -1)."""
    if p.num_workers != labels.num_workers:
        raise ValueError(f"params describe {p.num_workers} workers, matrix has {labels.num_workers}")
    c = p.clamped()
    pos, neg = labels.positive, labels.negative
    log_a = (np.log(c.prior)
             + np.log(c.sensitivity) @ pos + np.log1p(-c.sensitivity) @ neg)
    log_b = (np.log1p(-c.prior)
             + np.log(c.specificity) @ neg + np.log1p(-c.specificity) @ pos)
    return log_a, log_b


def posterior_ds(labels: LabelMatrix, p: DawidSkeneParams | OneCoinParams) -> Posterior:
    log_a, log_b = _class_log_terms(labels, to_dawid_skene(p))
    return Posterior(expit(log_a - log_b))


def log_likelihood(labels: LabelMatrix, p: DawidSkeneParams | OneCoinParams) -> float:
    """Marginal log-likelihood with the true labels summed out."""
    log_a, log_b = _class_log_terms(labels, to_dawid_skene(p))
    return float(np.sum(np.logaddexp(log_a, log_b)))


def _log_beta_penalty(probs: np.ndarray, s: float) -> float:
    if s == 0:
        return 0.0
    c = clamp_probability(probs)
    return float(s * np.sum(np.log(c) + np.log1p(-c)))


def _m_step(labels: LabelMatrix, rho: np.ndarray, model: str, s: float,
            prior: float | None) -> DawidSkeneParams | OneCoinParams:
    pos, neg, obs = labels.positive, labels.negative, labels.observed.astype(float)
    n_pos_mass = obs @ rho
    n_neg_mass = obs @ (1.0 - rho)
    pi = float(np.mean(rho)) if prior is None else prior
    # floored at 1/N: sampling probabilities must be positive, and a worker
    # with no labels carries no weight anywhere the design is used
    sampling = SamplingDesign.per_worker(np.maximum(labels.labels_per_worker(), 1) / labels.num_items)

    def ratio(num, den):
        out = np.full(num.shape, 0.5)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out

    if model == "one_coin":
        agree = pos @ rho + neg @ (1.0 - rho)
        w = ratio(s + agree, 2 * s + obs.sum(axis=1))
        return OneCoinParams(w, pi, sampling)
    sens = ratio(s + pos @ rho, 2 * s + n_pos_mass)
    spec = ratio(s + neg @ (1.0 - rho), 2 * s + n_neg_mass)
    return DawidSkeneParams(sens, spec, pi, sampling)


def _objective(labels: LabelMatrix, params, s: float) -> tuple[float, float]:
    ll = log_likelihood(labels, params)
    if isinstance(params, OneCoinParams):
        pen = _log_beta_penalty(params.accuracy, s)
    else:
        pen = _log_beta_penalty(params.sensitivity, s) + _log_beta_penalty(params.specificity, s)
    return ll, ll + pen


@dataclass(frozen=True, eq=False)
class EmResult:
    params: DawidSkeneParams | OneCoinParams
    posterior: Posterior
    iterations: int
    converged: bool
    loglik_trace: list[float] = field(default_factory=list)
    # log-likelihood plus the Beta(s+1, s+1) log-prior implied by smoothing;
    # this is the quantity the smoothed M-step provably does not decrease
    objective_trace: list[float] = field(default_factory=list)


def em_fit(labels: LabelMatrix, model: str = "one_coin", opts: EmOptions | None = None, *,
           prior: float = 0.5) -> EmResult:
    """Fit worker parameters by EM, initialised from majority voting.

    ``prior`` is the class prior used when ``opts.estimate_prior`` is False.
    Stops when the smoothed objective changes by less than ``opts.tol``.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    opts = opts or EmOptions()
    if opts.init == "hard":
        rho = (majority_vote(labels).labels == 1).astype(float)
    else:
        n = labels.labels_per_item()
        rho = np.where(n > 0, labels.positive.sum(axis=0) / np.maximum(n, 1), 0.5)
    fixed_prior = None if opts.estimate_prior else prior

    lls: list[float] = []
    objs: list[float] = []
    converged = False
    for it in range(1, opts.max_iter + 1):
        params = _m_step(labels, rho, model, opts.smoothing, fixed_prior)
        rho = posterior_ds(labels, params).rho
        ll, obj = _objective(labels, params, opts.smoothing)
        lls.append(ll)
        objs.append(obj)
        if it > 1 and abs(objs[-1] - objs[-2]) < opts.tol:
            converged = True
            break
    return EmResult(params, Posterior(rho), it, converged, lls, objs)


def em_map_predict(labels: LabelMatrix, model: str = "one_coin", opts: EmOptions | None = None, *,
                   prior: float = 0.5) -> tuple[Prediction, DawidSkeneParams | OneCoinParams, Posterior]:
    """EM fit followed by thresholding the fitted posterior at 1/2 (ties to +1)."""
    fit = em_fit(labels, model, opts, prior=prior)
    empty = np.flatnonzero(labels.labels_per_item() == 0)
    return Prediction(fit.posterior.map_labels(), frozenset(empty.tolist())), fit.params, fit.posterior
