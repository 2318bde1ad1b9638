"""Upwind / forward-Euler solver for the scaled confined run-and-tumble model.

Unknowns are cell averages ``n[i, j]`` in the bulk and the wall densities
``n_plus`` (y = +L, sin(theta) > 0) and ``n_minus`` (y = -L, sin(theta) < 0).
Wall populations re-enter the bulk through inflow ghost values built from the
part of the wall tumbling kernel that lands on inward-pointing angles.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .diagnostics import DiagnosticsReport, record
from .kernel import DiscreteKernel
from .mesh import Mesh, StateField, uniform_init

log = logging.getLogger(__name__)

NEG_TOL = 1e-12


class CFLError(ValueError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, state: StateField | None = None):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.state = state


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 4.0
    steady_tol: float = 1e-10
    cfl_guard: bool = True
    snapshot_times: tuple = ()
    stride: int = 10
    steady_window: int = 100
    stop_at_steady: bool = True
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.steady_tol > 0:
            raise ValueError(f"steady_tol must be positive, got {self.steady_tol!r}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def stable_dt(kernel: DiscreteKernel, mesh: Mesh) -> float:
    """Largest dt for which every forward-Euler diagonal coefficient is >= 0.

    Diagonal of the explicit update is
    ``1 - dt (V|sin th_j|/dy + (k_ij - K_ijj / eps) / eps^2)`` in the bulk and
    ``1 - dt (k_+-j - K_+-jj / eps) / eps^2`` on the walls; off-diagonals are
    nonnegative, so this is also the positivity bound.
    """
    eps = kernel.epsilon
    diag_f = np.diag(kernel.F)
    bulk = (mesh.V * np.abs(mesh.sin_theta)[None, :] / mesh.dy
            + (kernel.k_bulk - kernel.rate_bulk * diag_f[None, :] / eps) / eps**2)
    top = (kernel.k_top - kernel.rate_top * diag_f[kernel.plus] / eps) / eps**2
    bot = (kernel.k_bot - kernel.rate_bot * diag_f[kernel.minus] / eps) / eps**2
    worst = max(bulk.max(), top.max(), bot.max())
    return 1.0 / worst


def check_cfl(kernel: DiscreteKernel, mesh: Mesh, dt: float) -> None:
    limit = stable_dt(kernel, mesh)
    if dt > limit * (1 + 1e-12):
        raise CFLError(
            f"dt={dt:g} exceeds the positivity bound {limit:.6g} "
            f"(epsilon={kernel.epsilon:g}, N_y={mesh.n_y}, N_theta={mesh.n_theta})")


# ---------------------------------------------------------------------------
# semi-discrete operator


class Operator:
    """Right-hand side of the semi-discrete system on a fixed (kernel, mesh)."""

    def __init__(self, kernel: DiscreteKernel, mesh: Mesh):
        if kernel.rate_bulk.shape != mesh.shape or kernel.n_theta != mesh.n_theta:
            raise ValueError("kernel was assembled on a different mesh")
        self.kernel = kernel
        self.mesh = mesh
        eps = kernel.epsilon
        self.inv_eps2 = 1.0 / eps**2
        self.inv_eps = 1.0 / eps
        self.F = kernel.F_operator()
        self.F_top = kernel.F[mesh.plus, :]
        self.F_bot = kernel.F[mesh.minus, :]
        s = mesh.sin_theta
        self.speed_plus = mesh.V * s[mesh.plus]           # > 0
        self.speed_minus = -mesh.V * s[mesh.minus]        # > 0
        self.cp = self.speed_plus / mesh.dy
        self.cm = self.speed_minus / mesh.dy

    def wall_emission(self, n_plus, n_minus):
        """Tumbling output of each wall population over all target angles,
        already multiplied by ``1/eps^3`` (i.e. a rate density)."""
        k = self.kernel
        scale = self.inv_eps2 * self.inv_eps
        g_top = scale * ((k.rate_top * n_plus) @ self.F_top)
        g_bot = scale * ((k.rate_bot * n_minus) @ self.F_bot)
        return g_top, g_bot

    def rhs(self, n, n_plus, n_minus):
        k = self.kernel
        m = self.mesh
        P, M = m.plus, m.minus
        e2 = self.inv_eps2

        gain = (k.rate_bulk * n) @ self.F
        dn = e2 * (self.inv_eps * np.asarray(gain) - k.k_bulk * n)

        g_top, g_bot = self.wall_emission(n_plus, n_minus)

        # plus columns move up: inflow from below, ghost below row 0
        npl = n[:, P]
        adv = -self.cp * npl
        adv[1:] += self.cp * npl[:-1]
        adv[0] += g_bot[P] / m.dy
        dn[:, P] += adv
        # minus columns move down: inflow from above, ghost above the last row
        nmi = n[:, M]
        adv = -self.cm * nmi
        adv[:-1] += self.cm * nmi[1:]
        adv[-1] += g_top[M] / m.dy
        dn[:, M] += adv

        dplus = -e2 * k.k_top * n_plus + g_top[P] + self.speed_plus * n[-1, P]
        dminus = -e2 * k.k_bot * n_minus + g_bot[M] + self.speed_minus * n[0, M]
        return dn, dplus, dminus


def ghost_values(state: StateField, kernel: DiscreteKernel, mesh: Mesh):
    """Inflow ghost densities ``(n_0 on plus columns, n_{2N_y+1} on minus columns)``."""
    op = Operator(kernel, mesh)
    g_top, g_bot = op.wall_emission(state.n_plus, state.n_minus)
    s = mesh.sin_theta
    ghost_bottom = g_bot[mesh.plus] / (mesh.V * s[mesh.plus])
    ghost_top = -g_top[mesh.minus] / (mesh.V * s[mesh.minus])
    return ghost_bottom, ghost_top


def generator_matrix(kernel: DiscreteKernel, mesh: Mesh) -> sparse.csr_matrix:
    """Sparse ``A`` with ``d/dt flat(state) = A @ flat(state)``.

    Assembled entry by entry from the scheme, independently of
    :class:`Operator`; used for direct steady-state solves and as a check.
    """
    ny2, nt2 = mesh.shape
    nt = mesh.n_theta
    nb = ny2 * nt2
    eps = kernel.epsilon
    e2, e3 = 1 / eps**2, 1 / eps**3
    s = mesh.sin_theta
    V, dy = mesh.V, mesh.dy

    def bidx(i, j):
        return i * nt2 + j

    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, float))
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # bulk tumbling: target (i, j) gains from source (i, j')
    src_j, tgt_j = np.nonzero(kernel.F)
    f_vals = kernel.F[src_j, tgt_j]
    for i in range(ny2):
        add(bidx(i, tgt_j), bidx(i, src_j), e3 * kernel.rate_bulk[i, src_j] * f_vals)
    ii, jj = np.meshgrid(np.arange(ny2), np.arange(nt2), indexing="ij")
    add(bidx(ii, jj), bidx(ii, jj), -e2 * kernel.k_bulk)

    # advection
    jp = np.arange(nt, nt2)
    jm = np.arange(nt)
    for i in range(ny2):
        add(bidx(i, jp), bidx(i, jp), -V * s[jp] / dy)
        add(bidx(i, jm), bidx(i, jm), V * s[jm] / dy)
        if i > 0:
            add(bidx(i, jp), bidx(i - 1, jp), V * s[jp] / dy)
        if i < ny2 - 1:
            add(bidx(i, jm), bidx(i + 1, jm), -V * s[jm] / dy)

    top0, bot0 = nb, nb + nt
    # wall uptake from the adjacent bulk row
    add(top0 + (jp - nt), bidx(ny2 - 1, jp), V * s[jp])
    add(bot0 + jm, bidx(0, jm), -V * s[jm])
    # wall tumbling: sources on the wall, targets on the same wall or the bulk
    for a, (rate, src_cols, wall0, row) in enumerate((
            (kernel.rate_top, jp, top0, ny2 - 1),
            (kernel.rate_bot, jm, bot0, 0))):
        kwall = kernel.k_top if a == 0 else kernel.k_bot
        add(wall0 + np.arange(nt), wall0 + np.arange(nt), -e2 * kwall)
        for q, jsrc in enumerate(src_cols):
            tgt = np.nonzero(kernel.F[jsrc])[0]
            w = e3 * rate[q] * kernel.F[jsrc, tgt]
            same_wall = np.isin(tgt, src_cols)
            add(wall0 + (tgt[same_wall] - src_cols[0]), wall0 + q, w[same_wall])
            add(bidx(row, tgt[~same_wall]), wall0 + q, w[~same_wall] / dy)

    N = nb + 2 * nt
    A = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
    return A.tocsr()


def mass_weights(mesh: Mesh) -> np.ndarray:
    nb = 4 * mesh.n_y * mesh.n_theta
    return np.concatenate([np.full(nb, mesh.dy * mesh.dtheta),
                           np.full(2 * mesh.n_theta, mesh.dtheta)])


# ---------------------------------------------------------------------------
# time stepping


def _advance(op: Operator, state: StateField, dt: float) -> StateField:
    dn, dp, dm = op.rhs(state.n, state.n_plus, state.n_minus)
    return StateField(n=state.n + dt * dn, n_plus=state.n_plus + dt * dp,
                      n_minus=state.n_minus + dt * dm, t=state.t + dt)


def _check_finite(state: StateField, step: int) -> None:
    lo = min(state.n.min(), state.n_plus.min(), state.n_minus.min())
    if not np.isfinite(lo) or not np.all(np.isfinite(state.n)):
        raise BlowUpError(step, "non-finite values in the solution")
    if lo < -NEG_TOL:
        raise BlowUpError(step, f"negative density {lo:.3e}")


def clamp_roundoff(state: StateField) -> None:
    for a in (state.n, state.n_plus, state.n_minus):
        a[(a < 0) & (a >= -NEG_TOL)] = 0.0


def step(state: StateField, kernel: DiscreteKernel, mesh: Mesh, cfg: SolverConfig,
         _op: Operator | None = None) -> StateField:
    """One forward-Euler step of size ``cfg.dt``."""
    if cfg.cfl_guard:
        check_cfl(kernel, mesh, cfg.dt)
    op = _op or Operator(kernel, mesh)
    new = _advance(op, state, cfg.dt)
    _check_finite(new, 1)
    return new


Observer = Callable[[StateField], None]


@dataclass
class RunResult:
    state: StateField
    report: DiagnosticsReport
    steps: int
    steady: bool
    snapshots: dict = field(default_factory=dict)


def run(state: StateField, kernel: DiscreteKernel, mesh: Mesh, cfg: SolverConfig,
        observers: Iterable[Observer] = (), reference: StateField | None = None,
        entropy_fns=None) -> RunResult:
    """Advance ``state`` to ``cfg.t_end`` (or to steadiness when
    ``cfg.stop_at_steady``), recording diagnostics every ``cfg.stride`` steps.

    ``reference`` is the steady state used for the relative-entropy and
    L-infinity gap columns; without it those columns are NaN.
    """
    state.check(mesh)
    if cfg.cfl_guard:
        check_cfl(kernel, mesh, cfg.dt)
    observers = list(observers)
    op = Operator(kernel, mesh)
    report = DiagnosticsReport()
    t0 = state.t
    n_total = int(math.floor((cfg.t_end - t0) / cfg.dt + 1e-9)) if cfg.t_end > t0 else 0
    tail = (cfg.t_end - t0) - n_total * cfg.dt
    if tail < 1e-9 * cfg.dt:
        tail = 0.0
    if n_total > cfg.max_steps:
        raise ValueError(f"{n_total} steps requested, max_steps={cfg.max_steps}")
    snap_steps = {}
    for ts in cfg.snapshot_times:
        snap_steps.setdefault(int(round((ts - t0) / cfg.dt)), []).append(ts)

    def observe(s: StateField):
        clamp_roundoff(s)
        record(report, s, mesh, reference, entropy_fns)
        for obs in observers:
            obs(s)

    snapshots = {}
    current = state.copy()
    observe(current)
    for ts in snap_steps.get(0, ()):
        snapshots[ts] = current.copy()
    calm = 0
    steady = False
    n = 0
    while n < n_total:
        new = _advance(op, current, cfg.dt)
        n += 1
        new.t = t0 + n * cfg.dt
        _check_finite(new, n)
        scale = max(np.abs(new.n).max(), np.abs(new.n_plus).max(initial=0),
                    np.abs(new.n_minus).max(initial=0))
        change = max(np.abs(new.n - current.n).max(),
                     np.abs(new.n_plus - current.n_plus).max(initial=0),
                     np.abs(new.n_minus - current.n_minus).max(initial=0))
        calm = calm + 1 if change < cfg.steady_tol * scale else 0
        current = new
        for ts in snap_steps.get(n, ()):
            snapshots[ts] = current.copy()
        if calm >= cfg.steady_window:
            steady = True
        if n % cfg.stride == 0 or n == n_total or (steady and cfg.stop_at_steady):
            observe(current)
        if steady and cfg.stop_at_steady:
            log.info("steady after %d steps (t=%.4f)", n, current.t)
            break
    if tail and not (steady and cfg.stop_at_steady):
        current = _advance(op, current, tail)
        current.t = cfg.t_end
        _check_finite(current, n + 1)
        observe(current)
    return RunResult(state=current, report=report, steps=n, steady=steady, snapshots=snapshots)


def normalise(state: StateField, mesh: Mesh, mass: float = 1.0) -> StateField:
    w = state.n.sum() * mesh.dy * mesh.dtheta + mesh.dtheta * (state.n_plus.sum() + state.n_minus.sum())
    out = state.scaled(mass / w)
    out.t = state.t
    return out


def steady_residual(state: StateField, kernel: DiscreteKernel, mesh: Mesh) -> float:
    """Max-norm of the semi-discrete right-hand side, relative to max(state)."""
    dn, dp, dm = Operator(kernel, mesh).rhs(state.n, state.n_plus, state.n_minus)
    scale = max(state.n.max(), state.n_plus.max(), state.n_minus.max())
    return max(np.abs(dn).max(), np.abs(dp).max(), np.abs(dm).max()) / scale


def solve_steady_direct(kernel: DiscreteKernel, mesh: Mesh) -> StateField:
    """Unit-mass null vector of the generator by a sparse direct solve.

    One balance equation is replaced by pinning the first bulk unknown to 1
    (keeps the factorisation sparse); the result is then rescaled to unit mass.
    """
    A = generator_matrix(kernel, mesh).tolil()
    A[0, :] = 0.0
    A[0, 0] = 1.0
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            m = spla.spsolve(A.tocsc(), b)
        except spla.MatrixRankWarning as exc:
            raise NonConvergenceError(
                "discrete steady system is singular (kernel support below one cell?)",
                float("nan")) from exc
    if not np.all(np.isfinite(m)):
        raise NonConvergenceError("direct steady solve produced non-finite values", float("nan"))
    return normalise(StateField.from_flat(m, mesh), mesh)


def steady_state(kernel: DiscreteKernel, mesh: Mesh, cfg: SolverConfig,
                 method: str = "evolve", initial: StateField | None = None) -> StateField:
    """Long-time limit of the scheme, normalised to unit discrete mass.

    ``method="evolve"`` time-steps from the uniform state until the update is
    below ``cfg.steady_tol``; ``method="direct"`` solves the discrete steady
    system with the mass constraint.
    """
    if method == "direct":
        return solve_steady_direct(kernel, mesh)
    if method != "evolve":
        raise ValueError(f"unknown steady-state method {method!r}")
    start = initial.copy() if initial is not None else uniform_init(mesh)
    budget = SolverConfig(dt=cfg.dt, t_end=start.t + cfg.max_steps * cfg.dt,
                          steady_tol=cfg.steady_tol, cfl_guard=cfg.cfl_guard,
                          stride=max(cfg.stride, 1000), steady_window=cfg.steady_window,
                          stop_at_steady=True, max_steps=cfg.max_steps)
    res = run(start, kernel, mesh, budget)
    if not res.steady:
        raise NonConvergenceError(
            f"no steady state within {cfg.max_steps} steps",
            steady_residual(res.state, kernel, mesh), res.state)
    return normalise(res.state, mesh)
