"""Niching initial sampling.

Single-chain ascents ("chain runs") climb toward the failure region through
successively higher performance levels. A midpoint hill-valley test against
a growing set of representatives keeps new runs out of niches that have
already been explored, so that ideally each important niche yields exactly
one failure sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .markov import DEFAULT_SIGMA, Chain, run_chain


def default_noise_sequence() -> np.ndarray:
    return np.round(np.linspace(0.0, 4.0, 101), 10)


@dataclass(eq=False)
class NinitsConfig:
    level_probability: float = 0.1
    noise_sequence: np.ndarray = field(default_factory=default_noise_sequence)
    convergence_limit: int = 20
    length_limit: int = 100
    max_initial_samples: int = 10
    sigma: float = DEFAULT_SIGMA
    restart_cap: int = 10

    def __post_init__(self):
        self.noise_sequence = np.asarray(self.noise_sequence, dtype=float)
        if not 0 < self.level_probability <= 1:
            raise ValueError("level probability must lie in (0, 1]")
        inv = 1.0 / self.level_probability
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError("1 / level_probability must be an integer")
        if self.noise_sequence.size == 0 or np.any(np.diff(self.noise_sequence) <= 0):
            raise ValueError("noise sequence must be non-empty and strictly increasing")
        if self.convergence_limit < 1 or self.length_limit < 1 or self.max_initial_samples < 0:
            raise ValueError("limits must be at least 1")

    @property
    def chain_length(self) -> int:
        return int(round(1.0 / self.level_probability))

    def __eq__(self, other):
        if not isinstance(other, NinitsConfig):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )


@dataclass
class EvalTally:
    seeds: int = 0
    seed_midpoints: int = 0
    chain_candidates: int = 0
    chain_midpoints: int = 0

    @property
    def total(self) -> int:
        return self.seeds + self.seed_midpoints + self.chain_candidates + self.chain_midpoints


@dataclass
class RepresentativeSet:
    points: list = field(default_factory=list)
    g: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def add(self, x, gx):
        self.points.append(np.array(x, dtype=float))
        self.g.append(float(gx))

    def snapshot(self) -> "RepresentativeSet":
        return RepresentativeSet(list(self.points), list(self.g))


@dataclass
class ChainRunRecord:
    chains: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    outcome: str = ""
    seed: np.ndarray = None
    noise: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.tolist(),
            "noise": self.noise,
            "outcome": self.outcome,
            "thresholds": [float(b) for b in self.thresholds],
            "chains": [{"states": c.array().tolist(), "g": [float(v) for v in c.g]} for c in self.chains],
        }


def hill_valley_test(x, gx, y, gy, model, tally: EvalTally | None = None, key: str = "chain_midpoints") -> int:
    """1 when no valley separates x and y (one midpoint evaluation)."""
    mid = 0.5 * (np.asarray(x) + np.asarray(y))
    gm = model.evaluate(mid)
    if tally is not None:
        setattr(tally, key, getattr(tally, key) + 1)
    return int(gm >= min(gx, gy))


def is_admissible(x, gx, reps: RepresentativeSet, model, tally=None, key="chain_midpoints") -> bool:
    """True when x lies outside the hill-valley niche of every representative."""
    for rx, rg in zip(reps.points, reps.g):
        if hill_valley_test(rx, rg, x, gx, model, tally, key):
            return False
    return True


class NicheTarget:
    """Standard normal restricted to ``{g >= level}`` minus explored niches."""

    def __init__(self, model, level: float, reps: RepresentativeSet, tally: EvalTally | None = None):
        self.model = model
        self.level = level
        self.reps = reps
        self.tally = tally

    def check(self, x):
        gx = self.model.evaluate(x)
        if self.tally is not None:
            self.tally.chain_candidates += 1
        if gx < self.level:
            return False, gx
        return is_admissible(x, gx, self.reps, self.model, self.tally, "chain_midpoints"), gx


def sample_seed(reps: RepresentativeSet, config: NinitsConfig, model, rng, tally: EvalTally | None = None):
    """First admissible noisy draw, as ``(x, g(x), noise)``; ``None`` if exhausted."""
    d = model.dim
    for s in config.noise_sequence:
        x = rng.standard_normal(d)
        if s > 0:
            x = x + s * rng.standard_normal(d)
        gx = model.evaluate(x)
        if tally is not None:
            tally.seeds += 1
        if is_admissible(x, gx, reps, model, tally, "seed_midpoints"):
            return x, gx, float(s)
    return None


def chain_stop(run: ChainRunRecord, config: NinitsConfig, b: float = 0.0) -> bool:
    if not run.chains:
        return False
    if max(run.chains[-1].g) >= b:
        return True
    m = len(run.thresholds)
    if m > config.convergence_limit and run.thresholds[-1] == run.thresholds[-1 - config.convergence_limit]:
        return True
    return len(run.chains) > config.length_limit


def chain_run(seed, g_seed, reps: RepresentativeSet, model, config: NinitsConfig, rng, tally=None) -> ChainRunRecord:
    run = ChainRunRecord(seed=np.array(seed, dtype=float))
    snapshot = reps.snapshot()
    x, gx = run.seed, float(g_seed)
    level = -np.inf
    n = config.chain_length
    while not chain_stop(run, config):
        target = NicheTarget(model, level, snapshot, tally)
        chain = run_chain(x, gx, target, n - 1, config.sigma, rng)
        run.chains.append(chain)
        best = int(np.argmax(chain.g))
        level = chain.g[best]
        run.thresholds.append(level)
        x, gx = chain.states[best], chain.g[best]
    if run.thresholds[-1] >= 0.0:
        run.outcome = "failure-found"
    elif len(run.chains) > config.length_limit:
        run.outcome = "length-capped"
    else:
        run.outcome = "converged"
    return run


@dataclass
class NinitsResult:
    samples: np.ndarray
    g: np.ndarray
    representatives: RepresentativeSet
    runs: list
    tally: EvalTally
    restarts: int = 0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples.tolist(),
            "g": self.g.tolist(),
            "representatives": [p.tolist() for p in self.representatives.points],
            "restarts": self.restarts,
            "runs": [r.to_dict() for r in self.runs],
        }


class NoFailureFound(RuntimeError):
    pass


def ninits(model, config: NinitsConfig | None = None, rng=None) -> NinitsResult:
    """Collect one failure sample per discovered niche.

    Stops when the seed sampler exhausts its noise sequence, or once more
    than ``max_initial_samples`` samples have been collected. Exhaustion
    with nothing found restarts the noise sequence up to ``restart_cap``
    times before raising :class:`NoFailureFound`.
    """
    config = config or NinitsConfig()
    rng = rng if rng is not None else np.random.default_rng()
    reps = RepresentativeSet()
    samples, values, runs = [], [], []
    tally = EvalTally()
    restarts = 0
    while len(samples) <= config.max_initial_samples:
        seed = sample_seed(reps, config, model, rng, tally)
        if seed is None:
            if samples:
                break
            restarts += 1
            if restarts > config.restart_cap:
                raise NoFailureFound(f"no failure sample after {config.restart_cap} noise-sequence restarts")
            continue
        x0, g0, noise = seed
        run = chain_run(x0, g0, reps, model, config, rng, tally)
        run.noise = noise
        runs.append(run)
        last = run.chains[-1]
        if run.outcome == "failure-found":
            i_star = max(i for i, v in enumerate(last.g) if v >= 0.0)
            samples.append(np.array(last.states[i_star]))
            values.append(last.g[i_star])
            reps.add(last.states[i_star], last.g[i_star])
        else:
            best = int(np.argmax(last.g))
            reps.add(last.states[best], last.g[best])
    d = model.dim
    return NinitsResult(
        np.asarray(samples, dtype=float).reshape(-1, d), np.asarray(values, dtype=float), reps, runs, tally, restarts
    )
