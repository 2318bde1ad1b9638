"""Uniform (y, theta) grid and the bulk + wall density state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Cell-centred grid on [-L, L] x [-pi, pi).

    Indices are zero-based here: row ``i`` in ``range(2 * n_y)`` and column
    ``j`` in ``range(2 * n_theta)``.  Columns ``< n_theta`` have
    ``sin(theta) < 0`` (the "minus" set), columns ``>= n_theta`` have
    ``sin(theta) > 0`` (the "plus" set).
    """

    n_y: int
    n_theta: int
    L: float
    V: float

    def __post_init__(self):
        for name in ("n_y", "n_theta"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {value!r}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"L must be positive, got {self.L!r}")
        if not (self.V > 0 and np.isfinite(self.V)):
            raise ValueError(f"V must be positive, got {self.V!r}")

    @property
    def dy(self) -> float:
        return self.L / self.n_y

    @property
    def dtheta(self) -> float:
        return np.pi / self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.n_y, 2 * self.n_theta)

    @property
    def y(self) -> np.ndarray:
        i = np.arange(1, 2 * self.n_y + 1)
        return (i - self.n_y - 0.5) * self.dy

    @property
    def theta(self) -> np.ndarray:
        j = np.arange(1, 2 * self.n_theta + 1)
        return (j - self.n_theta - 0.5) * self.dtheta

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sin(self.theta)

    @property
    def plus(self) -> slice:
        """Columns with sin(theta) > 0 (wall population at y = +L)."""
        return slice(self.n_theta, 2 * self.n_theta)

    @property
    def minus(self) -> slice:
        """Columns with sin(theta) < 0 (wall population at y = -L)."""
        return slice(0, self.n_theta)

    @property
    def theta_plus(self) -> np.ndarray:
        return self.theta[self.plus]

    @property
    def theta_minus(self) -> np.ndarray:
        return self.theta[self.minus]


def build_mesh(n_y: int, n_theta: int, L: float, V: float) -> Mesh:
    return Mesh(n_y=n_y, n_theta=n_theta, L=float(L), V=float(V))


@dataclass
class StateField:
    """Bulk density ``n`` (2N_y x 2N_theta) and the two wall densities.

    ``n_plus`` lives on the plus columns at y = +L, ``n_minus`` on the minus
    columns at y = -L.
    """

    n: np.ndarray
    n_plus: np.ndarray
    n_minus: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def copy(self) -> StateField:
        return replace(self, n=self.n.copy(), n_plus=self.n_plus.copy(),
                       n_minus=self.n_minus.copy(), meta=dict(self.meta))

    def scaled(self, c: float) -> StateField:
        return replace(self, n=c * self.n, n_plus=c * self.n_plus,
                       n_minus=c * self.n_minus)

    def flat(self) -> np.ndarray:
        """All unknowns in one vector: bulk (row-major), then n_plus, n_minus."""
        return np.concatenate([self.n.ravel(), self.n_plus, self.n_minus])

    @classmethod
    def from_flat(cls, vec: np.ndarray, mesh: Mesh, t: float = 0.0) -> StateField:
        nb = 4 * mesh.n_y * mesh.n_theta
        nt = mesh.n_theta
        if vec.shape != (nb + 2 * nt,):
            raise ValueError(f"expected {nb + 2 * nt} unknowns, got {vec.shape}")
        return cls(n=vec[:nb].reshape(mesh.shape).copy(),
                   n_plus=vec[nb:nb + nt].copy(),
                   n_minus=vec[nb + nt:].copy(), t=t)

    def check(self, mesh: Mesh, tol: float = 1e-12) -> None:
        if self.n.shape != mesh.shape:
            raise ValueError(f"bulk shape {self.n.shape} does not match mesh {mesh.shape}")
        if self.n_plus.shape != (mesh.n_theta,) or self.n_minus.shape != (mesh.n_theta,):
            raise ValueError("wall densities must have n_theta entries each")
        v = self.flat()
        if not np.all(np.isfinite(v)):
            raise ValueError("state contains non-finite values")
        if v.min() < -tol:
            raise ValueError(f"state has negative entries (min {v.min():.3e})")


def uniform_init(mesh: Mesh) -> StateField:
    n = np.full(mesh.shape, 1.0 / (4.0 * np.pi * mesh.L))
    zeros = np.zeros(mesh.n_theta)
    return StateField(n=n, n_plus=zeros, n_minus=zeros.copy(), t=0.0)
