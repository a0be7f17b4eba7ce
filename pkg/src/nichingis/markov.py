"""Component-wise Modified Metropolis sampling in standard normal space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SIGMA = 0.8


class LevelTarget:
    """Standard normal restricted to ``{x : g(x) >= level}``.

    ``check`` evaluates g once on the candidate and returns
    ``(inside, g_value)``.
    """

    def __init__(self, model, level: float = 0.0):
        self.model = model
        self.level = level

    def check(self, x):
        gx = self.model.evaluate(x)
        return gx >= self.level, gx


class PredicateTarget:
    """Target given by an arbitrary indicator; no performance evaluation."""

    def __init__(self, indicator):
        self.indicator = indicator

    def check(self, x):
        return bool(self.indicator(x)), np.nan


def acceptance_ratio(x_new, x_old):
    """min(1, phi(x_new) / phi(x_old)) for standard normal marginals."""
    return np.minimum(1.0, np.exp(-0.5 * (np.square(x_new) - np.square(x_old))))


def propose(x, sigma, rng):
    """One sweep of independent 1-d Metropolis moves against phi."""
    cand = x + sigma * rng.standard_normal(x.shape)
    keep = rng.uniform(size=x.shape) < acceptance_ratio(cand, x)
    return np.where(keep, cand, x)


def mm_step(x, gx, target, sigma: float, rng: np.random.Generator):
    """Advance one Modified Metropolis step; returns ``(x, g(x), moved)``.

    The candidate is assembled component-wise and accepted as a whole only
    when it lies inside the target's support; otherwise the state repeats.
    """
    x = np.asarray(x, dtype=float)
    cand = propose(x, sigma, rng)
    inside, gc = target.check(cand)
    if inside:
        return cand, gc, True
    return x, gx, False


@dataclass
class Chain:
    states: list = field(default_factory=list)
    g: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def append(self, x, gx):
        self.states.append(x)
        self.g.append(gx)

    def array(self) -> np.ndarray:
        return np.asarray(self.states)


def run_chain(seed, g_seed, target, steps: int, sigma: float, rng) -> Chain:
    """Chain holding the seed followed by ``steps`` new states."""
    chain = Chain([np.asarray(seed, dtype=float)], [g_seed])
    x, gx = chain.states[0], g_seed
    for _ in range(steps):
        x, gx, _ = mm_step(x, gx, target, sigma, rng)
        chain.append(x, gx)
    return chain


def advance_chains_lockstep(X, G, steps, model, level: float, sigma: float, rng):
    """Advance independent chains against ``{g >= level}`` in lockstep.

    ``X`` is ``(K, d)`` with cached performances ``G``; chain k takes
    ``steps[k]`` moves. Candidates of all active chains are evaluated in one
    batch per sweep. Returns lists of new states and performances per chain.
    """
    X = np.array(X, dtype=float)
    G = np.array(G, dtype=float)
    steps = np.asarray(steps, dtype=int)
    new_x = [[] for _ in range(len(X))]
    new_g = [[] for _ in range(len(X))]
    for t in range(int(steps.max(initial=0))):
        active = np.flatnonzero(steps > t)
        cand = propose(X[active], sigma, rng)
        gc = model.evaluate_batch(cand)
        ok = gc >= level
        X[active[ok]] = cand[ok]
        G[active[ok]] = gc[ok]
        for k in active:
            new_x[k].append(X[k].copy())
            new_g[k].append(G[k])
    return new_x, new_g
