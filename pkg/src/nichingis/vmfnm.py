"""von Mises-Fisher-Nakagami mixtures in polar coordinates.

Directions are modelled by a vMF distribution on the unit sphere and radii
by a Nakagami distribution. Points are passed around as a pair ``(r, A)``
of radii with shape ``(N,)`` and unit directions with shape ``(N, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .sampling import log_bessel_i, log_sphere_area, log_std_normal_polar

R_BAR_CAP = 0.95
M_MIN = 0.5
# guards the moment estimator of m when all radii in a component coincide
M_MAX = 1e6
EMPTY_MASS = 1e-12


@dataclass(frozen=True)
class VmfnComponent:
    pi: float
    m: float
    omega: float
    mu: np.ndarray
    kappa: float


@dataclass
class VmfnmParams:
    """Mixture parameters stored column-wise.

    ``pi``, ``m``, ``omega``, ``kappa`` have shape ``(K,)`` and ``mu`` has
    shape ``(K, d)``.
    """

    pi: np.ndarray
    m: np.ndarray
    omega: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        self.pi = np.atleast_1d(np.asarray(self.pi, dtype=float))
        self.m = np.atleast_1d(np.asarray(self.m, dtype=float))
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def components(self) -> list[VmfnComponent]:
        return [
            VmfnComponent(float(self.pi[k]), float(self.m[k]), float(self.omega[k]), self.mu[k].copy(), float(self.kappa[k]))
            for k in range(self.K)
        ]

    @classmethod
    def from_components(cls, comps) -> "VmfnmParams":
        comps = list(comps)
        return cls(
            [c.pi for c in comps],
            [c.m for c in comps],
            [c.omega for c in comps],
            np.stack([np.asarray(c.mu, dtype=float) for c in comps]),
            [c.kappa for c in comps],
        )

    def validate(self, tol: float = 1e-10) -> None:
        if abs(self.pi.sum() - 1.0) > tol or np.any(self.pi < 0) or np.any(self.pi > 1):
            raise ValueError("component weights must lie in [0, 1] and sum to 1")
        if np.any(self.m < M_MIN) or np.any(self.omega <= 0) or np.any(self.kappa < 0):
            raise ValueError("require m >= 0.5, omega > 0, kappa >= 0")
        if np.any(np.abs(np.linalg.norm(self.mu, axis=1) - 1.0) > 1e-12):
            raise ValueError("mean directions must have unit norm")

    def with_weights(self, pi) -> "VmfnmParams":
        return VmfnmParams(np.asarray(pi, dtype=float), self.m.copy(), self.omega.copy(), self.mu.copy(), self.kappa.copy())

    def subset(self, keep) -> "VmfnmParams":
        pi = self.pi[keep]
        return VmfnmParams(pi / pi.sum(), self.m[keep], self.omega[keep], self.mu[keep], self.kappa[keep])

    def to_dict(self) -> dict:
        return {
            "components": [
                {"pi": c.pi, "m": c.m, "omega": c.omega, "mu": c.mu.tolist(), "kappa": c.kappa}
                for c in self.components
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VmfnmParams":
        return cls.from_components(
            VmfnComponent(c["pi"], c["m"], c["omega"], np.asarray(c["mu"]), c["kappa"]) for c in data["components"]
        )

    def same_as(self, other: "VmfnmParams") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("pi", "m", "omega", "mu", "kappa")
        )


# --- densities --------------------------------------------------------------

def log_vmf_normaliser(d: int, kappa):
    """log C_d(kappa), with the uniform-sphere limit at kappa = 0."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    out = np.full(kappa.shape, -log_sphere_area(d))
    pos = kappa > 0
    if np.any(pos):
        k = kappa[pos]
        out[pos] = (0.5 * d - 1) * np.log(k) - 0.5 * d * np.log(2 * np.pi) - log_bessel_i(0.5 * d - 1, k)
    return out


def log_density_vmf(a, mu, kappa):
    a = np.asarray(a, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    if np.any(np.abs(np.linalg.norm(np.atleast_2d(a), axis=1) - 1.0) > 1e-10) or abs(np.linalg.norm(mu) - 1.0) > 1e-10:
        raise ValueError("directions must have unit norm")
    d = mu.shape[0]
    val = log_vmf_normaliser(d, kappa)[0] + kappa * (a @ mu)
    return float(val) if np.ndim(val) == 0 else val


def log_density_nakagami(r, m, omega):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(np.asarray(m) < M_MIN) or np.any(np.asarray(omega) <= 0):
        raise ValueError("require r > 0, m >= 0.5, omega > 0")
    return np.log(2.0) + m * np.log(m / omega) - special.gammaln(m) + (2 * m - 1) * np.log(r) - (m / omega) * r**2


def component_log_densities(r, A, params: VmfnmParams) -> np.ndarray:
    """``ln pi_k + ln f_N(r_i) + ln f_vMF(a_i)`` as an ``(N, K)`` array."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[1]
    m, om = params.m[None, :], params.omega[None, :]
    logr = np.log(r)[:, None]
    nak = np.log(2.0) + m * np.log(m / om) - special.gammaln(m) + (2 * m - 1) * logr - (m / om) * r[:, None] ** 2
    vmf = log_vmf_normaliser(d, params.kappa)[None, :] + (A @ params.mu.T) * params.kappa[None, :]
    with np.errstate(divide="ignore"):
        logpi = np.log(params.pi)[None, :]
    return logpi + nak + vmf


def log_density_mixture(r, A, params: VmfnmParams):
    return special.logsumexp(component_log_densities(r, A, params), axis=1)


def posterior(r, A, params: VmfnmParams) -> np.ndarray:
    lc = component_log_densities(r, A, params)
    lse = special.logsumexp(lc, axis=1, keepdims=True)
    return np.exp(lc - lse)


# --- sampling ---------------------------------------------------------------

def _householder_to(mu, X):
    """Reflect rows of X so that e1 is mapped onto mu."""
    e1 = np.zeros_like(mu)
    e1[0] = 1.0
    u = e1 - mu
    nu = np.linalg.norm(u)
    if nu < 1e-14:
        return X
    u = u / nu
    return X - 2.0 * np.outer(X @ u, u)


def sample_vmf(mu, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact vMF draws by Wood's rejection scheme for the cosine to ``mu``."""
    mu = np.asarray(mu, dtype=float)
    d = mu.shape[0]
    if d < 2:
        raise ValueError("vMF sampling needs d >= 2")
    dm1 = d - 1.0
    b = dm1 / (np.sqrt(4.0 * kappa**2 + dm1**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dm1 * np.log(1.0 - x0**2)
    w = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        z = rng.beta(0.5 * dm1, 0.5 * dm1, size=todo.size)
        cand = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=todo.size)
        ok = kappa * cand + dm1 * np.log(1.0 - x0 * cand) - c >= np.log(u)
        w[todo[ok]] = cand[ok]
        todo = todo[~ok]
    v = rng.standard_normal((n, d))
    v[:, 0] = 0.0
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    X = np.sqrt(np.clip(1.0 - w**2, 0.0, None))[:, None] * v
    X[:, 0] = w
    X = _householder_to(mu, X)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def sample_nakagami(m: float, omega: float, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(rng.gamma(m, omega / m, size=n))


def sample_mixture(params: VmfnmParams, n: int, rng: np.random.Generator):
    """Draw ``n`` points; returns ``(r, A, labels)``."""
    labels = rng.choice(params.K, size=n, p=params.pi / params.pi.sum())
    r = np.empty(n)
    A = np.empty((n, params.dim))
    for k in range(params.K):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        r[idx] = sample_nakagami(params.m[k], params.omega[k], idx.size, rng)
        A[idx] = sample_vmf(params.mu[k], params.kappa[k], idx.size, rng)
    return r, A, labels


# --- EM ---------------------------------------------------------------------

def m_step(r, A, gamma, previous_mu=None) -> VmfnmParams:
    N, d = A.shape
    nk = gamma.sum(axis=0)
    pi = nk / N
    S = gamma.T @ A
    norm = np.linalg.norm(S, axis=1)
    safe = norm > 0
    mu = np.empty_like(S)
    mu[safe] = S[safe] / norm[safe, None]
    if np.any(~safe):
        fallback = previous_mu if previous_mu is not None else np.eye(d)[np.zeros(len(nk), dtype=int)]
        mu[~safe] = fallback[~safe]
    r_bar = np.minimum(norm / nk, R_BAR_CAP)
    kappa = r_bar * (d - r_bar**2) / (1.0 - r_bar**2)
    mu2 = gamma.T @ r**2 / nk
    mu4 = gamma.T @ r**4 / nk
    spread = mu4 - mu2**2
    with np.errstate(divide="ignore"):
        m = np.where(spread > 1e-12 * mu2**2, mu2**2 / spread, M_MAX)
    m = np.clip(m, M_MIN, M_MAX)
    return VmfnmParams(pi, m, mu2, mu, kappa)


@dataclass
class EMResult:
    params: VmfnmParams
    posterior: np.ndarray
    objective: list = field(default_factory=list)
    # indices of the initial columns that survived, in order
    kept: np.ndarray = None
    dropped_at: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0


def em_fit(r, A, initial_posterior, max_iter: int = 500, rtol: float = 1e-5) -> EMResult:
    """Maximum-likelihood vMFNM fit, started from an initial responsibility matrix.

    Stops when the mean log-likelihood changes by less than ``rtol`` times
    its magnitude. Components whose responsibility mass falls below 1e-12
    are removed; ``kept`` maps surviving components to initial columns.
    """
    r = np.asarray(r, dtype=float)
    A = np.asarray(A, dtype=float)
    gamma = np.asarray(initial_posterior, dtype=float)
    if gamma.shape[0] != r.shape[0]:
        raise ValueError("posterior rows must match the number of points")
    if np.any(np.abs(gamma.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("initial posterior rows must sum to 1")
    kept = np.arange(gamma.shape[1])
    result = EMResult(None, None, kept=kept)
    params = None
    best = None
    prev = None
    for it in range(max_iter):
        mass = gamma.sum(axis=0)
        empty = mass < EMPTY_MASS
        if np.any(empty):
            result.dropped_at.append((it, kept[empty].tolist()))
            kept = kept[~empty]
            gamma = gamma[:, ~empty]
            gamma /= gamma.sum(axis=1, keepdims=True)
            if params is not None:
                params = params.subset(~empty)
        params = m_step(r, A, gamma, None if params is None else params.mu)
        lc = component_log_densities(r, A, params)
        lse = special.logsumexp(lc, axis=1, keepdims=True)
        gamma = np.exp(lc - lse)
        L = float(lse.mean())
        result.objective.append(L)
        if best is None or L > best[2]:
            best = (params, gamma, L, kept)
        if prev is not None and abs(L - prev) < rtol * abs(L):
            result.params, result.posterior, result.kept = params, gamma, kept
            result.iterations = it + 1
            return result
        prev = L
    result.params, result.posterior, _, result.kept = best
    result.converged = False
    result.iterations = max_iter
    return result


# --- importance-weighted corrections ---------------------------------------

def log_input_weights(r, A, params: VmfnmParams) -> np.ndarray:
    """``ln f(r, a) - ln f_vMFNM(r, a)`` for the standard normal input."""
    d = A.shape[1]
    return log_std_normal_polar(r, d) - log_density_mixture(r, A, params)


def _normalised_weighted_columns(log_w, gamma):
    log_w = np.asarray(log_w, dtype=float)
    if not np.any(np.isfinite(log_w)):
        raise FloatingPointError("all importance weights vanish; the mixture is badly mis-fitted")
    w = np.exp(log_w - np.max(log_w))
    out = w @ gamma / w.sum()
    return out / out.sum()


def weight_correction(r, A, params: VmfnmParams, gamma, log_w=None) -> VmfnmParams:
    """Replace the component weights by their importance-weighted estimate."""
    if log_w is None:
        log_w = log_input_weights(r, A, params)
    return params.with_weights(_normalised_weighted_columns(log_w, gamma))


def chain_weights(r, A, membership, params: VmfnmParams, log_w=None) -> np.ndarray:
    """Importance-weighted share of each chain, from the 0/1 membership matrix."""
    if log_w is None:
        log_w = log_input_weights(r, A, params)
    return _normalised_weighted_columns(log_w, membership)
