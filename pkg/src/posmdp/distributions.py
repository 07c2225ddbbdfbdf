"""Sojourn-time and observation distributions.

Three sojourn-time families are supported: inverse Gaussian, deterministic
atom, and a Gaussian truncated to positive support. Densities are taken with
respect to a mixed (Lebesgue + counting) base measure so that atoms evaluate
to their mass; see :func:`mixed_density` for the rule used when atoms and
continuous laws coexist in one model.

All distribution objects are immutable and hashable. Samplers take an
explicit ``numpy.random.Generator`` so callers own the random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

__all__ = [
    "InverseGaussian",
    "DeterministicAtom",
    "TruncatedGaussian",
    "BetaDensity",
    "SojournDistribution",
    "mixed_density",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class InverseGaussian:
    """Inverse Gaussian (Wald) law with mean ``mu`` and shape ``lam``.

    The variance is ``mu**3 / lam``.
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"inverse Gaussian mean must be positive, got {self.mu}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"inverse Gaussian shape must be positive, got {self.lam}")

    def pdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        pos = tau > 0
        t = np.where(pos, tau, 1.0)
        out = np.where(
            pos,
            np.sqrt(self.lam / (2.0 * np.pi * t**3))
            * np.exp(-self.lam * (t - self.mu) ** 2 / (2.0 * self.mu**2 * t)),
            0.0,
        )
        return out if out.ndim else float(out)

    def cdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        pos = tau > 0
        t = np.where(pos, tau, 1.0)
        root = np.sqrt(self.lam / t)
        # Second term is exp(2*lam/mu) * Phi(-z): evaluated in log space since
        # the factor overflows while Phi(-z) underflows.
        first = ndtr(root * (t / self.mu - 1.0))
        second = np.exp(2.0 * self.lam / self.mu + log_ndtr(-root * (t / self.mu + 1.0)))
        out = np.where(pos, first + second, 0.0)
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        # Transform-with-rejection sampler (Michael, Schucany & Haas 1976).
        nu = rng.standard_normal(size)
        y = nu * nu
        x = (
            self.mu
            + self.mu**2 * y / (2.0 * self.lam)
            - self.mu / (2.0 * self.lam) * np.sqrt(4.0 * self.mu * self.lam * y + self.mu**2 * y**2)
        )
        u = rng.random(size)
        out = np.where(u <= self.mu / (self.mu + x), x, self.mu**2 / x)
        return out if np.ndim(out) else float(out)

    def expected_discount(self, beta: float) -> float:
        """Laplace transform E[exp(-beta * tau)], in closed form."""
        if beta < 0:
            raise ValueError("discount rate must be nonnegative")
        return math.exp(
            self.lam / self.mu * (1.0 - math.sqrt(1.0 + 2.0 * self.mu**2 * beta / self.lam))
        )

    def mean(self) -> float:
        return self.mu

    @property
    def atom(self):
        return None


@dataclass(frozen=True)
class DeterministicAtom:
    """Unit point mass at the fixed sojourn time ``c0``."""

    c0: float

    def __post_init__(self):
        if not (self.c0 > 0 and math.isfinite(self.c0)):
            raise ValueError(f"atom location must be positive, got {self.c0}")

    def pdf(self, tau):
        # Mass w.r.t. the counting component of the base measure.
        out = (np.asarray(tau, dtype=float) == self.c0).astype(float)
        return out if out.ndim else float(out)

    def cdf(self, tau):
        out = (np.asarray(tau, dtype=float) >= self.c0).astype(float)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.c0
        return np.full(size, self.c0)

    def expected_discount(self, beta: float) -> float:
        if beta < 0:
            raise ValueError("discount rate must be nonnegative")
        return math.exp(-beta * self.c0)

    def mean(self) -> float:
        return self.c0

    @property
    def atom(self):
        return self.c0


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian with mean ``mu`` and std ``sigma`` truncated to (0, inf)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"truncated Gaussian mean must be finite, got {self.mu}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"truncated Gaussian std must be positive, got {self.sigma}")

    @property
    def _mass(self) -> float:
        # P(X > 0) for the untruncated Gaussian.
        return float(ndtr(self.mu / self.sigma))

    def pdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        z = (tau - self.mu) / self.sigma
        out = np.where(
            tau > 0,
            np.exp(-0.5 * z * z) / (_SQRT_2PI * self.sigma * self._mass),
            0.0,
        )
        return out if out.ndim else float(out)

    def cdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        lower = ndtr(-self.mu / self.sigma)
        out = np.where(tau > 0, (ndtr((tau - self.mu) / self.sigma) - lower) / self._mass, 0.0)
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        # Rejection from the untruncated Gaussian; acceptance is ~1 whenever
        # the lower bound sits several sigmas below the mean.
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = rng.normal(self.mu, self.sigma, size=n - filled)
            ok = draw[draw > 0]
            out[filled : filled + ok.size] = ok
            filled += ok.size
        if scalar:
            return float(out[0])
        return out.reshape(size)

    def expected_discount(self, beta: float) -> float:
        if beta < 0:
            raise ValueError("discount rate must be nonnegative")
        return _truncated_gaussian_discount(self.mu, self.sigma, beta)

    def mean(self) -> float:
        a = -self.mu / self.sigma
        return self.mu + self.sigma * math.exp(-0.5 * a * a) / (_SQRT_2PI * self._mass)

    @property
    def atom(self):
        return None


@lru_cache(maxsize=None)
def _truncated_gaussian_discount(mu: float, sigma: float, beta: float) -> float:
    # No closed form; adaptive quadrature, cached per parameter triple.
    dist = TruncatedGaussian(mu, sigma)
    value, _ = integrate.quad(
        lambda t: math.exp(-beta * t) * dist.pdf(t),
        0.0,
        np.inf,
        epsabs=1e-12,
        epsrel=1e-12,
        points=None,
    )
    return value


SojournDistribution = InverseGaussian | DeterministicAtom | TruncatedGaussian


def mixed_density(dist: SojournDistribution, tau, atom_values=()):
    """Density of ``dist`` at ``tau`` w.r.t. Lebesgue + counting measure.

    ``atom_values`` is the set of atom locations present in the surrounding
    model: continuous densities evaluate to zero exactly at those points, so
    that mixtures of fixed and random sojourn times stay well-defined.
    """
    if dist.atom is not None:
        return dist.pdf(tau)
    tau_arr = np.asarray(tau, dtype=float)
    out = np.asarray(dist.pdf(tau_arr), dtype=float)
    if atom_values:
        at_atom = np.isin(tau_arr, np.fromiter(atom_values, dtype=float))
        out = np.where(at_atom, 0.0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BetaDensity:
    """Beta density on (0, 1) with shape parameters ``phi`` and ``eta``."""

    phi: float
    eta: float

    def __post_init__(self):
        if not (self.phi > 0 and self.eta > 0):
            raise ValueError(f"beta shapes must be positive, got ({self.phi}, {self.eta})")

    def pdf(self, o):
        o_arr = np.asarray(o, dtype=float)
        if np.any(o_arr <= 0) or np.any(o_arr >= 1):
            raise ValueError("beta density is defined on the open interval (0, 1)")
        log_norm = (
            math.lgamma(self.phi + self.eta) - math.lgamma(self.phi) - math.lgamma(self.eta)
        )
        out = np.exp(log_norm + (self.phi - 1) * np.log(o_arr) + (self.eta - 1) * np.log1p(-o_arr))
        return out if out.ndim else float(out)
