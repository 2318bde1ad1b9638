"""Tumbling kernels, their cell-integrated discretisation and the limiting
angular diffusivity.

The kernel always has the product form ``K_eps(y, theta, z) = k(y, theta) f(z)``
where ``f`` is an even angular profile supported on ``[-1, 1]`` (plus its
periodic images with period ``2 pi / eps``) and of unit mass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, sparse

from .mesh import Mesh

RateFn = Callable[..., np.ndarray]


class UnderResolvedKernelWarning(UserWarning):
    """Kernel support is narrower than the angular mesh can represent."""


class QuadratureError(RuntimeError):
    def __init__(self, message: str, abserr: float):
        super().__init__(f"{message} (achieved error estimate {abserr:.3e})")
        self.abserr = abserr


# ---------------------------------------------------------------------------
# angular profiles


class TriangularProfile:
    """``f(z) = 1 - |z|`` on [-1, 1]."""

    name = "triangular"
    breakpoints = (-1.0, 0.0, 1.0)

    def base(self, z):
        return np.maximum(0.0, 1.0 - np.abs(z))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        # difference of two uniforms has exactly the triangular law
        return rng.random(size) - rng.random(size)

    def __repr__(self):
        return "TriangularProfile()"


class TabulatedProfile:
    """Arbitrary even, nonnegative profile on [-1, 1], renormalised to unit mass.

    Sampling goes through an inverse-CDF table with linear interpolation.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "tabulated",
                 breakpoints=(-1.0, 0.0, 1.0), n_knots: int = 1024):
        self.name = name
        self._fn = fn
        self.breakpoints = tuple(breakpoints)
        mass, _ = integrate.quad(lambda z: float(fn(np.asarray(z))), -1.0, 1.0,
                                 points=[b for b in breakpoints if -1 < b < 1], limit=200)
        if not mass > 0:
            raise ValueError("profile must have positive mass on [-1, 1]")
        self._mass = mass
        # inverse-CDF table; a fine trapezoid CDF is inverted at n_knots levels
        zz = np.linspace(-1.0, 1.0, 64 * n_knots + 1)
        pdf = self.base(zz)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(zz))])
        cdf /= cdf[-1]
        self.cdf_grid = (zz, cdf)
        levels = np.linspace(0.0, 1.0, n_knots)
        self._icdf = (levels, np.interp(levels, cdf, zz))

    def base(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= 1.0
        out = np.where(inside, self._fn(np.clip(z, -1.0, 1.0)), 0.0) / self._mass
        if np.any(out < 0):
            raise ValueError(f"profile {self.name!r} takes negative values")
        return out

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        levels, knots = self._icdf
        return np.interp(rng.random(size), levels, knots)

    def __repr__(self):
        return f"TabulatedProfile(name={self.name!r})"


TRIANGULAR = TriangularProfile()
PROFILES = {"triangular": TRIANGULAR}


def wrap_z(z, epsilon: float):
    """Reduce ``z`` to the nearest base-period branch (period 2 pi / eps)."""
    period = 2.0 * np.pi / epsilon
    z = np.asarray(z, dtype=float)
    return z - period * np.round(z / period)


def f_eps(z, epsilon: float, profile=TRIANGULAR):
    """Periodic angular profile: ``profile.base`` applied on the nearest branch."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    return profile.base(wrap_z(z, epsilon))


# ---------------------------------------------------------------------------
# continuous kernel


def _constant(c: float) -> RateFn:
    def rate(*args):
        return np.full(np.broadcast(*args).shape, float(c))
    rate.constant = float(c)
    return rate


@dataclass(frozen=True)
class KernelSpec:
    bulk_rate: RateFn
    top_rate: RateFn
    bottom_rate: RateFn
    epsilon: float = 1.0
    shape: object = TRIANGULAR
    label: str = field(default="custom", compare=False)

    def __post_init__(self):
        eps = self.epsilon
        if not (eps > 0 and np.isfinite(eps)):
            raise ValueError(f"epsilon must be positive, got {eps!r}")
        if eps >= np.pi:
            raise ValueError(
                f"epsilon={eps} too large: jump support [-eps, eps] must stay "
                "inside the half period (require epsilon < pi)")

    def kernel(self, y, theta, z):
        """``K_eps(y, theta, z)`` for the bulk."""
        return self.bulk_rate(y, theta) * f_eps(z, self.epsilon, self.shape)

    def kernel_top(self, theta, z):
        return self.top_rate(theta) * f_eps(z, self.epsilon, self.shape)

    def kernel_bottom(self, theta, z):
        return self.bottom_rate(theta) * f_eps(z, self.epsilon, self.shape)


def constant_kernel(k: float = 1.0, epsilon: float = 1.0, k_top: float | None = None,
                    k_bottom: float | None = None, shape=TRIANGULAR) -> KernelSpec:
    k_top = k if k_top is None else k_top
    k_bottom = k if k_bottom is None else k_bottom
    for name, value in (("k", k), ("k_top", k_top), ("k_bottom", k_bottom)):
        if not (value > 0 and np.isfinite(value)):
            raise ValueError(f"rate {name} must be positive and finite, got {value!r}")
    return KernelSpec(_constant(k), _constant(k_top), _constant(k_bottom),
                      epsilon=float(epsilon), shape=shape,
                      label=f"constant(k={k}, k_top={k_top}, k_bottom={k_bottom})")


# ---------------------------------------------------------------------------
# quadrature


def romberg(fn, a: float, b: float, rtol: float = 1e-8, atol: float = 1e-15,
            max_levels: int = 24) -> float:
    """Trapezoid rule with Richardson extrapolation on [a, b]."""
    if b == a:
        return 0.0
    h = b - a
    fa, fb = fn(np.array([a, b]))
    row = [0.5 * h * (fa + fb)]
    for level in range(1, max_levels):
        h *= 0.5
        mids = a + h * (2 * np.arange(2 ** (level - 1)) + 1)
        new = [0.5 * row[0] + h * float(np.sum(fn(mids)))]
        for m in range(1, level + 1):
            new.append(new[m - 1] + (new[m - 1] - row[m - 1]) / (4 ** m - 1))
        delta = abs(new[-1] - row[-1])
        if delta <= max(atol, rtol * abs(new[-1])):
            return new[-1]
        row = new
    raise QuadratureError("Romberg quadrature did not converge", delta)


def profile_cell_integral(profile, za: float, zb: float, rtol: float = 1e-8) -> float:
    """``int_{za}^{zb} profile.base(z) dz`` split at the profile's kinks."""
    pts = [za] + [p for p in profile.breakpoints if za < p < zb] + [zb]
    return sum(romberg(profile.base, lo, hi, rtol=rtol) for lo, hi in zip(pts[:-1], pts[1:]))


def offset_integrals(profile, epsilon: float, dtheta: float, rtol: float = 1e-8):
    """Cell integrals ``c_d = int_{(d-1/2) dth}^{(d+1/2) dth} f(u / eps) du``.

    Returns ``(d, c_d)`` for every offset whose cell meets the support
    ``[-eps, eps]``.
    """
    m = int(math.ceil(epsilon / dtheta + 0.5))
    offsets = np.arange(-m, m + 1)
    vals = np.empty(offsets.size)
    for idx, d in enumerate(offsets):
        za = max((d - 0.5) * dtheta / epsilon, -1.0)
        zb = min((d + 0.5) * dtheta / epsilon, 1.0)
        vals[idx] = epsilon * profile_cell_integral(profile, za, zb, rtol) if zb > za else 0.0
    return offsets, vals


def profile_matrix(profile, epsilon: float, n_cells: int, dtheta: float,
                   rtol: float = 1e-8) -> np.ndarray:
    """``F[j, j'] = int_{cell j'} f((theta' - theta_j) / eps) dtheta'`` with the
    target angle folded periodically onto the grid.

    Because the grid is uniform and ``f(./eps)`` is 2 pi periodic, ``F`` is
    circulant; offsets that wrap past +-pi accumulate into the folded column.
    """
    offsets, vals = offset_integrals(profile, epsilon, dtheta, rtol)
    row = np.zeros(n_cells)
    np.add.at(row, offsets % n_cells, vals)
    j = np.arange(n_cells)
    return row[(j[None, :] - j[:, None]) % n_cells]


# ---------------------------------------------------------------------------
# discrete kernel


@dataclass(frozen=True)
class DiscreteKernel:
    """Cell-integrated kernel on a mesh, stored in factored form.

    ``K_bulk[i, j, j'] = rate_bulk[i, j] * F[j, j']``; the total rates are
    defined from the row sums so that ``k = (1/eps) sum_j' K`` holds exactly.
    """

    epsilon: float
    F: np.ndarray
    rate_bulk: np.ndarray
    rate_top: np.ndarray
    rate_bot: np.ndarray
    n_theta: int
    k_bulk: np.ndarray = field(init=False)
    k_top: np.ndarray = field(init=False)
    k_bot: np.ndarray = field(init=False)

    def __post_init__(self):
        eps = self.epsilon
        k_bulk = np.empty_like(self.rate_bulk)
        for i in range(self.rate_bulk.shape[0]):
            k_bulk[i] = self._bulk_rows(i).sum(-1) / eps
        object.__setattr__(self, "k_bulk", k_bulk)
        object.__setattr__(self, "k_top", self.K_top.sum(-1) / eps)
        object.__setattr__(self, "k_bot", self.K_bot.sum(-1) / eps)
        for a in (self.F, self.rate_bulk, self.rate_top, self.rate_bot,
                  self.k_bulk, self.k_top, self.k_bot):
            a.setflags(write=False)

    def _bulk_rows(self, i: int) -> np.ndarray:
        return self.rate_bulk[i, :, None] * self.F

    @property
    def plus(self) -> slice:
        return slice(self.n_theta, 2 * self.n_theta)

    @property
    def minus(self) -> slice:
        return slice(0, self.n_theta)

    @property
    def K_bulk(self) -> np.ndarray:
        """Materialised 3-index array ``K[i, j, j']`` (memory heavy on fine meshes)."""
        return self.rate_bulk[:, :, None] * self.F[None, :, :]

    @property
    def K_top(self) -> np.ndarray:
        """Rows over source angles in the plus set, columns over all targets."""
        return self.rate_top[:, None] * self.F[self.plus, :]

    @property
    def K_bot(self) -> np.ndarray:
        return self.rate_bot[:, None] * self.F[self.minus, :]

    def F_operator(self):
        """``F`` as a sparse matrix when that is worth it, else dense."""
        if np.count_nonzero(self.F) < 0.25 * self.F.size:
            return sparse.csr_matrix(self.F)
        return self.F


def assemble(spec: KernelSpec, mesh: Mesh, rtol: float = 1e-8) -> DiscreteKernel:
    eps = spec.epsilon
    if eps >= np.pi:
        raise ValueError(f"epsilon={eps} must be < pi")
    if eps < 0.5 * mesh.dtheta:
        warnings.warn(f"epsilon={eps} is below half an angular cell (dtheta={mesh.dtheta:.4g}); "
                      "tumbles never leave their own cell and angles decouple",
                      UnderResolvedKernelWarning, stacklevel=2)
    theta = mesh.theta
    rate_bulk = np.asarray(spec.bulk_rate(mesh.y[:, None], theta[None, :]), dtype=float)
    rate_bulk = np.broadcast_to(rate_bulk, mesh.shape).copy()
    rate_top = np.broadcast_to(np.asarray(spec.top_rate(mesh.theta_plus), float),
                               (mesh.n_theta,)).copy()
    rate_bot = np.broadcast_to(np.asarray(spec.bottom_rate(mesh.theta_minus), float),
                               (mesh.n_theta,)).copy()
    for name, r in (("bulk_rate", rate_bulk), ("top_rate", rate_top), ("bottom_rate", rate_bot)):
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError(f"{name} must be strictly positive and finite on the mesh")
    F = profile_matrix(spec.shape, eps, 2 * mesh.n_theta, mesh.dtheta, rtol)
    return DiscreteKernel(epsilon=eps, F=F, rate_bulk=rate_bulk, rate_top=rate_top,
                          rate_bot=rate_bot, n_theta=mesh.n_theta)


def diffusion_coeff(spec: KernelSpec, y, theta, epsabs: float = 1e-13,
                    epsrel: float = 1e-10) -> float:
    """``(1/2) int_{-1}^{1} z^2 K_eps(y, theta, z) dz`` by adaptive quadrature."""
    inner = [p for p in spec.shape.breakpoints if -1 < p < 1]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(
                lambda z: z * z * float(spec.kernel(y, theta, z)), -1.0, 1.0,
                points=inner or None, epsabs=epsabs, epsrel=epsrel, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"diffusion quadrature failed: {exc}", float("nan")) from exc
    if err > max(epsabs, epsrel * abs(val)) * 10:
        raise QuadratureError("diffusion quadrature did not reach tolerance", err)
    return 0.5 * val
