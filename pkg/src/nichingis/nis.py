"""Niching importance sampling driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .markov import DEFAULT_SIGMA, advance_chains_lockstep
from .ninits import NinitsConfig, NinitsResult, ninits
from .sampling import log_std_normal_polar, to_polar_batch
from .vmfnm import (
    VmfnmParams,
    chain_weights,
    em_fit,
    log_density_mixture,
    log_input_weights,
    posterior,
    sample_mixture,
    weight_correction,
)

log = logging.getLogger(__name__)


@dataclass
class NisConfig:
    budget_multiplier: float = 30.0
    n_is: int = 250
    cov_weights_target: float = 5.0
    cov_estimator_target: float = 0.1
    sigma: float = DEFAULT_SIGMA
    ninits: NinitsConfig = field(default_factory=NinitsConfig)
    max_iterations: int = 100
    max_evaluations: int = 1_000_000
    em_max_iter: int = 500

    def __post_init__(self):
        if self.cov_weights_target <= 0 or self.cov_estimator_target <= 0:
            raise ValueError("CoV targets must be positive")
        if self.n_is < 2:
            raise ValueError("importance sample size must be at least 2")
        if self.budget_multiplier < 1:
            raise ValueError("budget multiplier must be at least 1")


def total_budget(multiplier: float, k_eff: float, d: int) -> float:
    """Markov-chain step budget; kept real-valued, floored per chain."""
    return multiplier * k_eff * max(d, 25)


def chain_allocation(alpha, budget: float) -> np.ndarray:
    return np.floor(np.asarray(alpha) * budget + 1e-9).astype(int)


def is_estimate(r, A, failed, params: VmfnmParams):
    """Importance weights ``1_F f / q`` and their mean."""
    d = A.shape[1]
    log_w = log_std_normal_polar(r, d) - log_density_mixture(r, A, params)
    W = np.where(failed, np.exp(log_w), 0.0)
    return float(W.mean()), W


def effective_niches(r, A, params: VmfnmParams) -> float:
    """exp of the Monte Carlo mutual information between labels and samples."""
    gamma = posterior(r, A, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(gamma > 0, gamma * np.log(gamma / params.pi[None, :]), 0.0)
    k_eff = float(np.exp(terms.sum(axis=1).mean()))
    return float(np.clip(k_eff, 1.0, params.K))


def cov_weights(W, p_hat: float) -> float:
    W = np.asarray(W, dtype=float)
    if p_hat <= 0:
        return np.inf
    return float(np.sqrt(np.sum((W - p_hat) ** 2) / (W.size * p_hat**2)))


def cov_estimator(delta_w: float, n: int) -> float:
    return delta_w / np.sqrt(n)


@dataclass
class IterationRecord:
    iteration: int
    refit: bool
    batches: int
    p_hat: float
    delta_w: float
    delta_is: float
    k_eff: float
    chain_lengths: list
    alpha: list
    components: int
    evaluations: int

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in self.__dict__.items()}


@dataclass
class NisResult:
    p_hat: float
    delta_is: float
    evaluations: int
    converged: bool
    trace: list
    params: VmfnmParams | None = None
    initial: NinitsResult | None = None
    chains: list | None = None
    importance_samples: np.ndarray | None = None
    importance_labels: np.ndarray | None = None

    def to_dict(self, detail: bool = False) -> dict:
        out = {
            "p_hat": self.p_hat,
            "delta_is": self.delta_is,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "iterations": [rec.to_dict() for rec in self.trace],
            "params": self.params.to_dict() if self.params is not None else None,
        }
        if detail:
            out["initial_sampling"] = self.initial.to_dict() if self.initial else None
            out["chains"] = [np.asarray(c).tolist() for c in (self.chains or [])]
            if self.importance_samples is not None:
                out["importance_samples"] = self.importance_samples.tolist()
                out["importance_labels"] = self.importance_labels.tolist()
        return out


class _Pool:
    """Importance-sample batches drawn from one fixed mixture."""

    def __init__(self, params: VmfnmParams):
        self.params = params
        self.r, self.A, self.W, self.labels = [], [], [], []

    @property
    def batches(self) -> int:
        return len(self.W)

    def add(self, r, A, W, labels):
        self.r.append(r)
        self.A.append(A)
        self.W.append(W)
        self.labels.append(labels)

    def arrays(self):
        return np.concatenate(self.r), np.concatenate(self.A), np.concatenate(self.W), np.concatenate(self.labels)


def nis_run(model, config: NisConfig | None = None, rng=None) -> NisResult:
    """Estimate P(g(X) >= 0) for standard normal X."""
    config = config or NisConfig()
    rng = rng if rng is not None else np.random.default_rng()
    d = model.dim

    init = ninits(model, config.ninits, rng)
    K = len(init.samples)
    chains = [[x.copy()] for x in init.samples]
    chain_g = [[float(v)] for v in init.g]
    current = np.array(init.samples, dtype=float)
    current_g = np.array(init.g, dtype=float)
    alpha = np.full(K, 1.0 / K)
    k_eff = 1.0
    delta_w = delta_is = np.inf
    p_hat = 0.0
    pool = None
    trace = []
    converged = True

    iteration = 0
    while delta_is > config.cov_estimator_target:
        if iteration >= config.max_iterations or model.count >= config.max_evaluations:
            converged = False
            log.warning("NIS stopped before reaching the CoV target (%d iterations, %d evaluations)", iteration, model.count)
            break
        iteration += 1
        refit = delta_w > config.cov_weights_target
        if refit:
            steps = chain_allocation(alpha, total_budget(config.budget_multiplier, k_eff, d))
            new_x, new_g = advance_chains_lockstep(current, current_g, steps, model, 0.0, config.sigma, rng)
            for k in range(K):
                chains[k].extend(new_x[k])
                chain_g[k].extend(new_g[k])
                current[k], current_g[k] = chains[k][-1], chain_g[k][-1]
            X = np.concatenate([np.asarray(c) for c in chains])
            labels = np.concatenate([np.full(len(c), k) for k, c in enumerate(chains)])
            membership = np.eye(K)[labels]
            r, A = to_polar_batch(X)
            fit = em_fit(r, A, membership, max_iter=config.em_max_iter)
            log_w = log_input_weights(r, A, fit.params)
            params_is = weight_correction(r, A, fit.params, fit.posterior, log_w)
            alpha = chain_weights(r, A, membership, fit.params, log_w)
            pool = _Pool(params_is)

        r_is, A_is, lab = sample_mixture(pool.params, config.n_is, rng)
        failed = model.evaluate_batch(r_is[:, None] * A_is) >= 0.0
        _, W = is_estimate(r_is, A_is, failed, pool.params)
        pool.add(r_is, A_is, W, lab)
        r_all, A_all, W_all, _ = pool.arrays()
        p_hat = float(W_all.mean())
        k_eff = effective_niches(r_all, A_all, pool.params)
        delta_w = cov_weights(W_all, p_hat)
        delta_is = cov_estimator(delta_w, W_all.size)
        trace.append(
            IterationRecord(
                iteration, refit, pool.batches, p_hat, delta_w, delta_is, k_eff,
                [len(c) for c in chains], alpha.tolist(), pool.params.K, model.count,
            )
        )

    imp, imp_lab = None, None
    if pool is not None:
        r_all, A_all, _, imp_lab = pool.arrays()
        imp = r_all[:, None] * A_all
    return NisResult(
        p_hat, float(delta_is), model.count, converged, trace,
        pool.params if pool else None, init, [np.asarray(c) for c in chains], imp, imp_lab,
    )
