"""Benchmark performance functions in standard normal space.

Failure is ``g(x) >= 0``. Every model wraps a vectorised function of an
``(n, d)`` array and counts how many points it has been asked to evaluate.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sampling import inverse_regularized_gamma_p, inverse_regularized_gamma_q, normal_cdf

BatchFn = Callable[[np.ndarray], np.ndarray]


class EvalCounter:
    """Thread-safe, monotone evaluation counter."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += int(n)

    @property
    def count(self) -> int:
        return self._count


@dataclass
class PerformanceModel:
    name: str
    dim: int
    batch_fn: BatchFn
    failure_fn: BatchFn | None = None
    counter: EvalCounter = field(default_factory=EvalCounter)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def count(self) -> int:
        return self.counter.count

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"{self.name} expects inputs of dimension {self.dim}, got {X.shape[-1]}")
        return X

    def evaluate(self, x) -> float:
        x = self._check(x)
        if x.ndim != 1:
            raise ValueError("evaluate takes a single point; use evaluate_batch")
        self.counter.add(1)
        return float(self.batch_fn(x[None, :])[0])

    __call__ = evaluate

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(self._check(X))
        self.counter.add(X.shape[0])
        return np.asarray(self.batch_fn(X), dtype=float)

    def failure_batch(self, X) -> np.ndarray:
        """Boolean failure indicator; counts one evaluation per row.

        Models may supply a cheaper exact indicator than ``g >= 0``.
        """
        X = np.atleast_2d(self._check(X))
        self.counter.add(X.shape[0])
        if self.failure_fn is not None:
            return np.asarray(self.failure_fn(X), dtype=bool)
        return np.asarray(self.batch_fn(X)) >= 0.0

    def fresh(self) -> "PerformanceModel":
        """Same model with its own zeroed counter."""
        return PerformanceModel(self.name, self.dim, self.batch_fn, self.failure_fn)


def _require_dim(X, d, name):
    if X.shape[1] != d:
        raise ValueError(f"{name} expects inputs of dimension {d}")


# --- piecewise linear -------------------------------------------------------

def pwl_batch(X):
    X = np.atleast_2d(X)
    _require_dim(X, 2, "piecewise linear")
    x1, x2 = X[:, 0], X[:, 1]
    g1 = np.where(x1 > 3.5, 4.0 - x1, 0.85 - 0.1 * x1)
    g2 = np.where(x2 > 2.0, 0.5 - 0.1 * x2, 2.3 - x2)
    return -np.minimum(g1, g2)


def eval_piecewise_linear(x) -> float:
    return float(pwl_batch(np.asarray(x, dtype=float)[None, :])[0])


# --- meatball ---------------------------------------------------------------

def meatball_batch(X):
    X = np.atleast_2d(X)
    _require_dim(X, 2, "meatball")
    x1, x2 = X[:, 0], X[:, 1]
    lobe1 = 30.0 / ((4.0 * (x1 + 2.0) ** 2 / 9.0 + x2**2 / 25.0) ** 2 + 1.0)
    lobe2 = 20.0 / (((x1 - 2.5) ** 2 / 4.0 + (x2 - 0.5) ** 2 / 25.0) ** 2 + 1.0)
    return -lobe1 - lobe2 + 5.0


def eval_meatball(x) -> float:
    return float(meatball_batch(np.asarray(x, dtype=float)[None, :])[0])


# --- two degree of freedom oscillator --------------------------------------

TDOF_MASS = 2000.0
TDOF_DAMPING = 0.02
TDOF_FORCE = 2000.0
TDOF_OMEGA = 11.0
TDOF_THRESHOLD = 0.024
TDOF_T_END = 20.0
TDOF_DT = 0.005
TDOF_STIFFNESS_MEAN = 2.5e5
TDOF_STIFFNESS_COV = 0.2


def lognormal_from_std(x, mean, cov):
    """Map standard normal ``x`` to a lognormal with the given mean and CoV."""
    zeta = np.sqrt(np.log1p(cov**2))
    lam = np.log(mean) - 0.5 * zeta**2
    return np.exp(lam + zeta * np.asarray(x, dtype=float))


def _tdof_modes(K1, K2):
    # eigen-decomposition of M^-1 K for equal masses; mass-normalised shapes
    m = TDOF_MASS
    a = (K1 + K2) / m
    c = K2 / m
    b = -K2 / m
    mid = 0.5 * (a + c)
    rad = np.sqrt((0.5 * (a - c)) ** 2 + b**2)
    lams = np.stack([mid - rad, mid + rad])
    v1 = np.broadcast_to(b, lams.shape)
    v2 = lams - a
    norm = np.sqrt(m * (v1**2 + v2**2))
    return np.sqrt(lams), v1 / norm, v2 / norm


def _tdof_coefficients(K1, K2):
    """Per-mode response coefficients; arrays of shape (2, n)."""
    omega, phi1, phi2 = _tdof_modes(K1, K2)
    z = TDOF_DAMPING
    W = TDOF_OMEGA
    F = phi2 * TDOF_FORCE
    den = (omega**2 - W**2) ** 2 + (2 * z * omega * W) ** 2
    A = F * (omega**2 - W**2) / den
    B = -F * 2 * z * omega * W / den
    wd = omega * np.sqrt(1 - z**2)
    C1 = -B
    C2 = (z * omega * C1 - A * W) / wd
    return phi1, omega, wd, A, B, C1, C2


def _tdof_displacement(coef, t):
    """Mass-1 displacement, coef arrays (2, n), t shape (n, m) -> (n, m)."""
    phi1, omega, wd, A, B, C1, C2 = (c[:, :, None] for c in coef)
    z = TDOF_DAMPING
    t = t[None, :, :]
    q = A * np.sin(TDOF_OMEGA * t) + B * np.cos(TDOF_OMEGA * t)
    q = q + np.exp(-z * omega * t) * (C1 * np.cos(wd * t) + C2 * np.sin(wd * t))
    return np.sum(phi1 * q, axis=0)


_TDOF_GRID = np.linspace(0.0, TDOF_T_END, int(round(TDOF_T_END / TDOF_DT)) + 1)


def tdof_peak(K1, K2, chunk: int = 2048):
    """Maximum over [0, 20] s of the mass-1 displacement.

    Grid search at 0.005 s followed by golden-section refinement inside the
    bracketing grid cells.
    """
    K1 = np.atleast_1d(np.asarray(K1, dtype=float))
    K2 = np.atleast_1d(np.asarray(K2, dtype=float))
    out = np.empty(K1.shape[0])
    grid = _TDOF_GRID
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    for s in range(0, K1.shape[0], chunk):
        sl = slice(s, s + chunk)
        coef = _tdof_coefficients(K1[sl], K2[sl])
        n = coef[0].shape[1]
        r = _tdof_displacement(coef, np.broadcast_to(grid, (n, grid.size)))
        j = np.argmax(r, axis=1)
        best = r[np.arange(n), j]
        lo = grid[np.maximum(j - 1, 0)]
        hi = grid[np.minimum(j + 1, grid.size - 1)]
        for _ in range(30):
            t1 = hi - inv_phi * (hi - lo)
            t2 = lo + inv_phi * (hi - lo)
            f = _tdof_displacement(coef, np.stack([t1, t2], axis=1))
            left = f[:, 0] > f[:, 1]
            hi = np.where(left, t2, hi)
            lo = np.where(left, lo, t1)
        tm = 0.5 * (lo + hi)
        fm = _tdof_displacement(coef, tm[:, None])[:, 0]
        out[sl] = np.maximum(best, fm)
    return out


def tdof_peak_bound(K1, K2):
    """Cheap upper bound on the peak displacement (sum of modal amplitudes)."""
    phi1, omega, wd, A, B, C1, C2 = _tdof_coefficients(np.atleast_1d(K1), np.atleast_1d(K2))
    amp = np.abs(phi1) * (np.hypot(A, B) + np.hypot(C1, C2))
    return amp.sum(axis=0)


def _tdof_stiffness(X):
    X = np.atleast_2d(X)
    _require_dim(X, 2, "tdof")
    K = lognormal_from_std(X, TDOF_STIFFNESS_MEAN, TDOF_STIFFNESS_COV)
    if not np.all(np.isfinite(K)):
        raise FloatingPointError("non-finite stiffness after transform")
    return K[:, 0], K[:, 1]


def tdof_batch(X):
    """Peak mass-1 displacement of a forced two-mass chain, minus 0.024 m.

    Units are SI throughout: stiffness in N/m, masses 2000 kg, forcing
    2000 sin(11 t) N on the second mass, displacement in metres. Mass 1 is
    tied to ground by K1 and to mass 2 by K2. The response is the exact
    modal superposition of damped single-degree-of-freedom solutions from
    rest.
    """
    K1, K2 = _tdof_stiffness(X)
    return tdof_peak(K1, K2) - TDOF_THRESHOLD


def tdof_failure(X):
    K1, K2 = _tdof_stiffness(X)
    fail = np.zeros(K1.shape[0], dtype=bool)
    maybe = tdof_peak_bound(K1, K2) >= TDOF_THRESHOLD
    if np.any(maybe):
        fail[maybe] = tdof_peak(K1[maybe], K2[maybe]) >= TDOF_THRESHOLD
    return fail


def eval_tdof(x) -> float:
    return float(tdof_batch(np.asarray(x, dtype=float)[None, :])[0])


# --- vehicle suspension -----------------------------------------------------

VEH_MEANS = np.array([424.0, 1480.0, 47.0])
VEH_STD = 10.0
VEH_A = 1.0
VEH_B0 = 0.27
VEH_V = 10.0
VEH_M = 3.2633
VEH_G = 981.0
VEH_m = 0.8158


def vehicle_batch(X):
    X = np.atleast_2d(X)
    _require_dim(X, 3, "vehicle")
    T = VEH_MEANS + VEH_STD * X
    c, ck, k = T[:, 0], T[:, 1], T[:, 2]
    M, m = VEH_M, VEH_m
    bracket = (ck / (M + m) - c / M) ** 2 + c**2 / (M * m) + ck * k**2 / (M**2 * m)
    out = np.full(X.shape[0], -np.inf)
    ok = k > 0
    prefactor = np.pi * VEH_A * VEH_V * m / (VEH_B0 * VEH_G**2 * k[ok])
    out[ok] = 1.0 - prefactor * bracket[ok]
    return out


def eval_vehicle(x) -> float:
    return float(vehicle_batch(np.asarray(x, dtype=float)[None, :])[0])


# --- portfolio loss ---------------------------------------------------------

PORTFOLIO_Q = 0.25
PORTFOLIO_EPS = 1e-9
PORTFOLIO_CONFIGS = {30: 0.45, 100: 0.25, 250: 0.25}


def gamma66_from_std(x):
    """Gamma(shape 6, rate 6) variate as a monotone function of a standard normal."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lower = x <= 0
    out[lower] = inverse_regularized_gamma_p(6.0, normal_cdf(x[lower])) / 6.0
    out[~lower] = inverse_regularized_gamma_q(6.0, normal_cdf(-x[~lower])) / 6.0
    return out


def portfolio_batch(X, n: int, b: float, eps: float = PORTFOLIO_EPS):
    X = np.atleast_2d(X)
    _require_dim(X, n + 2, "portfolio")
    q = PORTFOLIO_Q
    scale = gamma66_from_std(X[:, 1]) ** -0.5
    Z = (q * X[:, :1] + 3.0 * np.sqrt(1.0 - q**2) * X[:, 2:]) * scale[:, None]
    losses = np.sum(Z >= 0.5 * np.sqrt(n), axis=1)
    return losses - b * n - eps


def eval_portfolio(x, n: int, b: float) -> float:
    return float(portfolio_batch(np.asarray(x, dtype=float)[None, :], n, b)[0])


# --- dimension lifting and registry ----------------------------------------

def lift_dimension(model: PerformanceModel, target_dim: int) -> PerformanceModel:
    """Embed ``model`` in ``target_dim`` dimensions without changing P_F.

    Block sums of ``s = target_dim / dim`` consecutive inputs, scaled by
    1/sqrt(s), are fed to the base model.
    """
    d = model.dim
    if target_dim < d or target_dim % d:
        raise ValueError(f"target dimension {target_dim} is not a multiple of {d}")
    s = target_dim // d
    if s == 1:
        return model.fresh()

    def project(X):
        X = np.atleast_2d(X)
        return X.reshape(X.shape[0], d, s).sum(axis=2) / np.sqrt(s)

    base_fn, base_fail = model.batch_fn, model.failure_fn
    failure_fn = (lambda X: base_fail(project(X))) if base_fail is not None else None
    return PerformanceModel(f"{model.name}-{target_dim}d", target_dim, lambda X: base_fn(project(X)), failure_fn)


def halfspace_model(dim: int, beta: float = 3.0) -> PerformanceModel:
    """``g(x) = x_1 - beta``; P_F = Phi(-beta) in any dimension."""
    return PerformanceModel(f"halfspace-{dim}d", dim, lambda X: np.atleast_2d(X)[:, 0] - beta)


def _portfolio(n):
    b = PORTFOLIO_CONFIGS[n]
    return PerformanceModel(f"portfolio-{n}", n + 2, lambda X: portfolio_batch(X, n, b))


MODEL_FACTORIES = {
    "pwl": lambda: PerformanceModel("pwl", 2, pwl_batch),
    "meatball": lambda: PerformanceModel("meatball", 2, meatball_batch),
    "tdof": lambda: PerformanceModel("tdof", 2, tdof_batch, tdof_failure),
    "vehicle": lambda: PerformanceModel("vehicle", 3, vehicle_batch),
    "portfolio-30": lambda: _portfolio(30),
    "portfolio-100": lambda: _portfolio(100),
    "portfolio-250": lambda: _portfolio(250),
    "halfspace": lambda: halfspace_model(2),
}

# reference probabilities reported alongside each benchmark
REFERENCE_PROBABILITIES = {
    "pwl": 3.18e-5,
    "meatball": 1.12e-5,
    "tdof": 2.48e-5,
    "vehicle": 1.32e-6,
    "portfolio-30": 4.28e-3,
    "portfolio-100": 1.81e-3,
    "portfolio-250": 1.12e-5,
    "halfspace": 1.3498980316301e-3,
}


def get_model(name: str, dim: int | None = None) -> PerformanceModel:
    """Look up a benchmark by name, optionally lifted to ``dim`` dimensions."""
    if name.startswith("halfspace"):
        return halfspace_model(dim or 2)
    try:
        model = MODEL_FACTORIES[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODEL_FACTORIES)}") from None
    if dim is not None and dim != model.dim:
        model = lift_dimension(model, dim)
    return model
