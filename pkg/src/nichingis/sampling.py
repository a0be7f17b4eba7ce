"""Random streams, polar coordinates and the special functions used throughout.

All densities over ``(r, a)`` include the surface measure of the unit sphere,
so ratios between the input density and a mixture density are measure free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

LOG_2PI = np.log(2.0 * np.pi)


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; ``seed`` may be an int or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(master_seed: int, n: int) -> list[np.random.SeedSequence]:
    """Disjoint child seed sequences, one per repetition."""
    return np.random.SeedSequence(master_seed).spawn(n)


@dataclass(frozen=True)
class PolarPoint:
    r: float
    a: np.ndarray

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("radius must be positive")
        if abs(np.linalg.norm(self.a) - 1.0) > 1e-12:
            raise ValueError("direction must have unit norm")

    def to_cartesian(self) -> np.ndarray:
        return self.r * self.a


def to_polar(x) -> PolarPoint:
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("the origin has no polar representation")
    return PolarPoint(r, x / r)


def from_polar(p: PolarPoint) -> np.ndarray:
    return p.to_cartesian()


def to_polar_batch(X):
    """Radii and unit directions of the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.linalg.norm(X, axis=1)
    if np.any(r == 0.0):
        raise ValueError("the origin has no polar representation")
    return r, X / r[:, None]


def log_sphere_area(d: int) -> float:
    """Log surface area of the unit sphere in R^d."""
    return np.log(2.0) + 0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d)


def log_std_normal_polar(r, d: int):
    """Log density of the standard normal in polar coordinates.

    This is the chi(d) radial density times the uniform density on the
    sphere. It does not depend on the direction.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radius must be positive")
    radial = (d - 1) * np.log(r) - 0.5 * r**2 - (0.5 * d - 1) * np.log(2.0) - special.gammaln(0.5 * d)
    return radial - log_sphere_area(d)


def sample_std_normal(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if size is None:
        return rng.standard_normal(d)
    return rng.standard_normal((size, d))


def _log_bessel_series(nu: float, kappa: float) -> float:
    # sum_k (k/2)^(2k+nu) / (k! Gamma(nu+k+1)) accumulated in log space
    if kappa == 0.0:
        return 0.0 if nu == 0.0 else -np.inf
    half_log = np.log(0.5 * kappa)
    q = 0.25 * kappa * kappa
    log_term = nu * half_log - special.gammaln(nu + 1.0)
    total = 1.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * (nu + k))
        total += term
        if term < 1e-17 * total:
            break
        if k > 100000:
            raise ArithmeticError("Bessel series failed to converge")
    return log_term + np.log(total)


def log_bessel_i(nu, kappa):
    """Natural log of the modified Bessel function of the first kind.

    Uses the exponentially scaled ``scipy.special.ive`` where it is
    representable and falls back to a log-space power series where it
    underflows (large order, moderate argument).
    """
    nu_arr, kappa_arr = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(kappa, dtype=float))
    if np.any(nu_arr < 0) or np.any(kappa_arr < 0):
        raise ValueError("order and argument must be non-negative")
    with np.errstate(divide="ignore"):
        scaled = special.ive(nu_arr, kappa_arr)
        out = np.log(scaled) + kappa_arr
    bad = ~(scaled > 1e-290)
    if np.any(bad):
        out = np.array(out, dtype=float, ndmin=1)
        nb, kb = np.atleast_1d(nu_arr)[np.atleast_1d(bad)], np.atleast_1d(kappa_arr)[np.atleast_1d(bad)]
        out[np.atleast_1d(bad)] = [_log_bessel_series(n, k) for n, k in zip(nb, kb)]
        out = out.reshape(nu_arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def normal_cdf(x):
    return special.ndtr(x)


def regularized_gamma_p(shape, x):
    if np.any(np.asarray(shape) <= 0):
        raise ValueError("shape must be positive")
    return special.gammainc(shape, x)


def _check_inverse(shape, p):
    if np.any(np.asarray(shape) <= 0):
        raise ValueError("shape must be positive")
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probability must lie in (0, 1)")
    return p


def inverse_regularized_gamma_p(shape, p):
    """Solve ``P(shape, x) = p`` for x."""
    x = special.gammaincinv(shape, _check_inverse(shape, p))
    if np.any(~np.isfinite(x)):
        raise ArithmeticError("inverse incomplete gamma did not converge")
    return x


def inverse_regularized_gamma_q(shape, q):
    """Solve ``1 - P(shape, x) = q`` for x; accurate in the upper tail."""
    x = special.gammainccinv(shape, _check_inverse(shape, q))
    if np.any(~np.isfinite(x)):
        raise ArithmeticError("inverse incomplete gamma did not converge")
    return x
