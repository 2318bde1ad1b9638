"""Scalar observables of a discrete state: masses, error norms, relative
entropy and the relative-gap sup norm."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .mesh import Mesh, StateField

EXCLUDE_REL = 1e-14
EXCLUDED_MASS_TOL = 1e-8


class EntropyDomainError(ValueError):
    """The state carries mass where the steady state vanishes."""


def total_mass(state: StateField, mesh: Mesh) -> float:
    m_i, m_b = split_mass(state, mesh)
    return m_i + m_b


def split_mass(state: StateField, mesh: Mesh) -> tuple[float, float]:
    m_i = mesh.dy * mesh.dtheta * float(np.sum(state.n))
    m_b = mesh.dtheta * float(np.sum(state.n_plus)) + mesh.dtheta * float(np.sum(state.n_minus))
    return m_i, m_b


# ---------------------------------------------------------------------------
# error norms


def _check_compatible(coarse: Mesh, fine: Mesh) -> None:
    if not math.isclose(coarse.L, fine.L, rel_tol=1e-12):
        raise ValueError(f"incompatible domains: L={coarse.L} vs reference L={fine.L}")
    if fine.n_y < coarse.n_y or fine.n_theta < coarse.n_theta:
        raise ValueError("reference mesh must be at least as fine as the coarse mesh")


def interpolate_to(reference: StateField, ref_mesh: Mesh, mesh: Mesh) -> StateField:
    """Bicubic interpolation of a reference state onto the centres of ``mesh``.

    The bulk is interpolated with an interpolating bicubic spline (theta is
    padded periodically); wall densities with a 1-D cubic spline.
    """
    _check_compatible(mesh, ref_mesh)
    if (ref_mesh.n_y, ref_mesh.n_theta) == (mesh.n_y, mesh.n_theta):
        return reference.copy()
    pad = 4
    th = ref_mesh.theta
    nt2 = th.size
    th_ext = np.concatenate([th[-pad:] - 2 * np.pi, th, th[:pad] + 2 * np.pi])
    n_ext = np.concatenate([reference.n[:, -pad:], reference.n, reference.n[:, :pad]], axis=1)
    spline = RectBivariateSpline(ref_mesh.y, th_ext, n_ext, kx=3, ky=3, s=0)
    bulk = spline(mesh.y, mesh.theta)
    assert nt2 == 2 * ref_mesh.n_theta
    n_plus = CubicSpline(ref_mesh.theta_plus, reference.n_plus)(mesh.theta_plus)
    n_minus = CubicSpline(ref_mesh.theta_minus, reference.n_minus)(mesh.theta_minus)
    return StateField(n=bulk, n_plus=n_plus, n_minus=n_minus, t=reference.t)


def _norm_parts(e: StateField, mesh: Mesh, weights: str) -> tuple[float, float]:
    dy, dth = mesh.dy, mesh.dtheta
    if weights == "scaled":
        wb, ww = dth**2 * dy**2, dth**2
    elif weights == "standard":
        wb, ww = dth * dy, dth
    else:
        raise ValueError(f"unknown weights {weights!r}")
    bulk = wb * float(np.sum(e.n**2))
    wall = ww * float(np.sum(e.n_plus**2) + np.sum(e.n_minus**2))
    return bulk, wall


def weighted_l2_parts(coarse: StateField, mesh: Mesh, reference: StateField,
                      ref_mesh: Mesh, weights: str = "scaled") -> tuple[float, float]:
    """Squared bulk and wall error norms of ``coarse`` against ``reference``."""
    ref = interpolate_to(reference, ref_mesh, mesh)
    diff = StateField(n=coarse.n - ref.n, n_plus=coarse.n_plus - ref.n_plus,
                      n_minus=coarse.n_minus - ref.n_minus)
    return _norm_parts(diff, mesh, weights)


def weighted_l2_error(coarse: StateField, mesh: Mesh, reference: StateField,
                      ref_mesh: Mesh) -> float:
    """Squared error with bulk weight ``dtheta^2 dy^2`` and wall weight
    ``dtheta^2`` (coarse mesh sizes), summed over bulk and walls."""
    return sum(weighted_l2_parts(coarse, mesh, reference, ref_mesh, "scaled"))


def standard_l2_error(coarse: StateField, mesh: Mesh, reference: StateField,
                      ref_mesh: Mesh) -> float:
    """Same as :func:`weighted_l2_error` with quadrature weights ``dtheta dy`` / ``dtheta``."""
    return sum(weighted_l2_parts(coarse, mesh, reference, ref_mesh, "standard"))


def weighted_l2_distance(a: StateField, b: StateField, mesh: Mesh,
                         weights: str = "scaled") -> float:
    """Norm (not squared) of ``a - b`` on a common mesh."""
    diff = StateField(n=a.n - b.n, n_plus=a.n_plus - b.n_plus, n_minus=a.n_minus - b.n_minus)
    return math.sqrt(sum(_norm_parts(diff, mesh, weights)))


# ---------------------------------------------------------------------------
# relative entropy


def square(x):
    return x * x


def x_log_x(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def excess_quartic(gamma: float) -> Callable[[np.ndarray], np.ndarray]:
    """``H(x) = ((x - gamma)_+)^4``."""
    def H(x):
        return np.maximum(np.asarray(x, dtype=float) - gamma, 0.0) ** 4
    return H


@dataclass
class EntropyValue:
    value: float
    excluded: int
    excluded_mass: float


def _ratio_parts(state: StateField, steady: StateField, mesh: Mesh):
    m_all = steady.flat()
    n_all = state.flat()
    cut = EXCLUDE_REL * m_all.max()
    keep = m_all > cut
    w = np.concatenate([np.full(state.n.size, mesh.dy * mesh.dtheta),
                        np.full(state.n_plus.size + state.n_minus.size, mesh.dtheta)])
    excluded_mass = float(np.sum(w[~keep] * np.abs(n_all[~keep])))
    if excluded_mass > EXCLUDED_MASS_TOL:
        raise EntropyDomainError(
            f"{int((~keep).sum())} cells with vanishing steady state carry mass "
            f"{excluded_mass:.3e}")
    return n_all[keep], m_all[keep], w[keep], int((~keep).sum()), excluded_mass


def relative_entropy(state: StateField, steady: StateField, mesh: Mesh,
                     H: Callable = square, details: bool = False):
    """``dy dth sum m H(n/m) + dth sum m_pm H(n_pm/m_pm)``.

    Cells where the steady state is below ``1e-14 max(m)`` are skipped; with
    ``details=True`` the excluded count and mass come back too.
    """
    n, m, w, excluded, excluded_mass = _ratio_parts(state, steady, mesh)
    value = float(np.sum(w * m * H(n / m)))
    if details:
        return EntropyValue(value, excluded, excluded_mass)
    return value


def linf_gap(state: StateField, steady: StateField, mesh: Mesh) -> float:
    n, m, *_ = _ratio_parts(state, steady, mesh)
    return float(np.max(n / m))


# ---------------------------------------------------------------------------
# report


COLUMNS = ("t", "M_total", "M_i", "M_b", "I", "linf_gap")


@dataclass
class DiagnosticsReport:
    series: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        if name in COLUMNS:
            return np.array([r[name] for r in self.series])
        return np.array([r["extra"].get(name, np.nan) for r in self.series])

    def append(self, row: dict) -> None:
        if self.series and not row["t"] > self.series[-1]["t"]:
            raise ValueError("diagnostic timestamps must be strictly increasing")
        self.series.append(row)

    def max_mass_drift(self) -> float:
        m = self.column("M_total")
        return float(np.max(np.abs(m - m[0]))) if m.size else 0.0

    def write_csv(self, path, provenance: str = "") -> None:
        extras = sorted({k for r in self.series for k in r["extra"]})
        with open(path, "w", newline="") as fh:
            if provenance:
                fh.write(f"# {provenance}\n")
            w = csv.writer(fh)
            w.writerow(list(COLUMNS) + extras)
            for r in self.series:
                w.writerow([repr(float(r[c])) for c in COLUMNS]
                           + [repr(float(r["extra"].get(k, np.nan))) for k in extras])

    def write_error_table(self, path, provenance: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if provenance:
                fh.write(f"# {provenance}\n")
            w = csv.writer(fh)
            w.writerow(["dy", "dtheta", "err2"])
            for e in self.errors:
                w.writerow([repr(float(e["dy"])), repr(float(e["dtheta"])), repr(float(e["err2"]))])


def record(report: DiagnosticsReport, state: StateField, mesh: Mesh,
           reference: StateField | None = None, entropy_fns: dict | None = None) -> dict:
    m_i, m_b = split_mass(state, mesh)
    row = {"t": float(state.t), "M_total": m_i + m_b, "M_i": m_i, "M_b": m_b,
           "I": math.nan, "linf_gap": math.nan, "extra": {}}
    if reference is not None:
        row["I"] = relative_entropy(state, reference, mesh, square)
        row["linf_gap"] = linf_gap(state, reference, mesh)
        for name, H in (entropy_fns or {}).items():
            row["extra"][name] = relative_entropy(state, reference, mesh, H)
    report.append(row)
    return row


def well_contrast(state: StateField, mesh: Mesh, depth: float = 0.5) -> tuple[float, float]:
    """Mean bulk density next to each plate on the leaving half circle, minus
    the bulk mean.

    Bottom well: the rows within ``depth`` of ``y = -L`` (at least one) with
    ``theta`` in (0, pi); top well: the same at ``y = L`` with ``theta`` in
    (-pi, 0).  Negative values mean a well.
    """
    mean = float(state.n.mean())
    rows = max(1, int(round(depth / mesh.dy)))
    return (float(state.n[:rows, mesh.plus].mean()) - mean,
            float(state.n[-rows:, mesh.minus].mean()) - mean)
