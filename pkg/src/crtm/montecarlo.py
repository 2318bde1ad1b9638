"""Particle simulation of the confined run-and-tumble process.

Every particle drifts vertically at ``V sin(theta)``, is clamped onto the
plates at ``y = +-L`` and tumbles at the Poisson times of intensity
``k / eps^2`` with jumps ``eps * Z``, ``Z`` drawn from the angular profile.
Within a step of length ``dt`` the intensity and jump law are frozen at the
start-of-step state.

Random numbers come from counter-based Philox streams keyed by the seed and
addressed by (particle block, step); blocks have a fixed size, so results do
not depend on how blocks are spread across workers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelSpec
from .mesh import Mesh, StateField

BLOCK_SIZE = 1 << 16
TWO_PI = 2.0 * np.pi


def block_rng(seed: int, block: int, step: int) -> np.random.Generator:
    """Independent stream for one (block, step) pair.

    Philox counters are 256 bit; the two high words carry (block, step) and
    the low words are left for the draws of that step.
    """
    bitgen = np.random.Philox(key=int(seed) % (1 << 64),
                              counter=[0, 0, int(block), int(step)])
    return np.random.Generator(bitgen)


def wrap_angle(theta):
    """Map angles onto [-pi, pi)."""
    out = np.mod(np.asarray(theta, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(out >= np.pi, out - TWO_PI, out)


def poisson_count(rate, dt: float, rng: np.random.Generator, size=None):
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise ValueError("rate must be nonnegative")
    return rng.poisson(rate * dt, size=size)


def sample_jump(kind: str, theta, spec: KernelSpec, rng: np.random.Generator, size=None):
    """Angle increment for a tumble from ``theta`` in state ``kind``.

    With a product-form kernel the normalised jump law does not depend on the
    rate factor, so every state kind draws ``eps * Z``.
    """
    if kind not in ("interior", "top", "bottom"):
        raise ValueError(f"unknown state kind {kind!r}")
    if size is None:
        size = np.shape(theta)
    return spec.epsilon * spec.shape.sample(rng, size)


def tumble_rate(Y, Theta, spec: KernelSpec, L: float):
    """Scaled intensity ``k / eps^2`` chosen by interior / plate state."""
    top = Y >= L
    bot = Y <= -L
    rate = np.asarray(spec.bulk_rate(Y, Theta), dtype=float) * np.ones_like(Y)
    if top.any():
        rate[top] = spec.top_rate(Theta[top])
    if bot.any():
        rate[bot] = spec.bottom_rate(Theta[bot])
    return rate / spec.epsilon**2


def _drift(Y, Theta, V: float, L: float, tau):
    Yt = Y + V * np.sin(Theta) * tau
    return np.where(np.abs(Yt) > L, np.sign(Yt) * L, Yt)


def step_particle(Y, Theta, spec: KernelSpec, L: float, V: float, dt: float,
                  rng: np.random.Generator, counts=None):
    """Advance particles by one step; returns new ``(Y, Theta)`` arrays.

    ``counts`` overrides the Poisson jump counts (testing hook).
    """
    Y = np.array(Y, dtype=float, ndmin=1)
    Theta = np.array(Theta, dtype=float, ndmin=1)
    if np.any(np.abs(Y) > L):
        raise ValueError("positions must satisfy |Y| <= L")
    rate = tumble_rate(Y, Theta, spec, L)
    P = poisson_count(rate, dt, rng) if counts is None else np.broadcast_to(counts, Y.shape)

    jumping = np.nonzero(P > 0)[0]
    still = P == 0
    Y_new = Y.copy()
    Theta_new = Theta.copy()
    Y_new[still] = _drift(Y[still], Theta[still], V, L, dt)
    if jumping.size:
        p = P[jumping]
        pmax = int(p.max())
        live = np.arange(pmax)[None, :] < p[:, None]
        times = np.where(live, rng.random((jumping.size, pmax)), 1.0)
        times.sort(axis=1)
        jumps = spec.epsilon * spec.shape.sample(rng, (jumping.size, pmax))
        y = Y[jumping]
        th = Theta[jumping]
        prev = np.zeros(jumping.size)
        for r in range(pmax):
            act = live[:, r]
            y = _drift(y, th, V, L, np.where(act, times[:, r] - prev, 0.0) * dt)
            th = np.where(act, wrap_angle(th + jumps[:, r]), th)
            prev = np.where(act, times[:, r], prev)
        Y_new[jumping] = _drift(y, th, V, L, (1.0 - prev) * dt)
        Theta_new[jumping] = th
    return Y_new, Theta_new


# ---------------------------------------------------------------------------
# histograms


@dataclass
class Histogram2D:
    """Particle counts on the solver mesh: bulk bins plus one theta row per plate."""

    counts: np.ndarray
    top: np.ndarray
    bottom: np.ndarray
    n_total: int
    mesh: Mesh
    t: float = 0.0

    @classmethod
    def empty(cls, mesh: Mesh, t: float = 0.0) -> Histogram2D:
        nt2 = 2 * mesh.n_theta
        return cls(np.zeros(mesh.shape, np.int64), np.zeros(nt2, np.int64),
                   np.zeros(nt2, np.int64), 0, mesh, t)

    def add(self, Y, Theta) -> None:
        m = self.mesh
        L = m.L
        j = np.clip(((Theta + np.pi) / m.dtheta).astype(np.int64), 0, 2 * m.n_theta - 1)
        top = Y >= L
        bot = Y <= -L
        inner = ~(top | bot)
        i = np.clip(((Y[inner] + L) / m.dy).astype(np.int64), 0, 2 * m.n_y - 1)
        self.counts += np.bincount(i * (2 * m.n_theta) + j[inner],
                                   minlength=self.counts.size).reshape(self.counts.shape)
        self.top += np.bincount(j[top], minlength=self.top.size)
        self.bottom += np.bincount(j[bot], minlength=self.bottom.size)
        self.n_total += int(Y.size)

    def merge(self, other: Histogram2D) -> None:
        self.counts += other.counts
        self.top += other.top
        self.bottom += other.bottom
        self.n_total += other.n_total

    def total(self) -> int:
        return int(self.counts.sum() + self.top.sum() + self.bottom.sum())

    def normalised_mass(self) -> float:
        return self.total() / self.n_total

    def densities(self):
        m = self.mesh
        N = self.n_total
        return (self.counts / (N * m.dy * m.dtheta), self.top / (N * m.dtheta),
                self.bottom / (N * m.dtheta))

    def to_state(self) -> StateField:
        """Densities in solver layout; plate particles whose angle lies outside
        the plate's own half circle are dropped (they leave within a step)."""
        bulk, top, bot = self.densities()
        m = self.mesh
        return StateField(n=bulk, n_plus=top[m.plus].copy(), n_minus=bot[m.minus].copy(), t=self.t)

    def write_csv(self, path, provenance: str = "") -> None:
        bulk, top, bot = self.densities()
        with open(path, "w", newline="") as fh:
            if provenance:
                fh.write(f"# {provenance}\n")
            w = csv.writer(fh)
            w.writerow(["bin_y", "bin_theta", "count", "density"])
            for i in range(self.counts.shape[0]):
                for j in range(self.counts.shape[1]):
                    w.writerow([i + 1, j + 1, int(self.counts[i, j]), repr(float(bulk[i, j]))])
            w.writerow(["plate", "bin_theta", "count", "density"])
            for name, c, d in (("top", self.top, top), ("bottom", self.bottom, bot)):
                for j in range(c.size):
                    w.writerow([name, j + 1, int(c[j]), repr(float(d[j]))])


def bootstrap_noise_floor(hist: Histogram2D, reps: int = 32, seed: int = 0,
                          weights: str = "scaled") -> float:
    """RMS weighted-L2 distance between the histogram and bootstrap resamples.

    Resampling particles with replacement and re-binning is the same as a
    multinomial draw on the bin counts, which is what is done here.
    """
    from .diagnostics import weighted_l2_distance

    flat = np.concatenate([hist.counts.ravel(), hist.top, hist.bottom]).astype(float)
    p = flat / flat.sum()
    base = hist.to_state()
    rng = np.random.Generator(np.random.Philox(key=seed))
    nb = hist.counts.size
    nt2 = hist.top.size
    d2 = []
    for _ in range(reps):
        c = rng.multinomial(hist.n_total, p)
        h = Histogram2D(c[:nb].reshape(hist.counts.shape), c[nb:nb + nt2], c[nb + nt2:],
                        hist.n_total, hist.mesh, hist.t)
        d2.append(weighted_l2_distance(h.to_state(), base, hist.mesh, weights) ** 2)
    return math.sqrt(float(np.mean(d2)))


# ---------------------------------------------------------------------------
# ensemble driver


@dataclass
class MCResult:
    histograms: dict
    Y: np.ndarray
    Theta: np.ndarray
    n_cell: int
    seed: int
    steps: int
    extra: dict = field(default_factory=dict)


def initial_ensemble(n: int, L: float, seed: int, block: int):
    rng = block_rng(seed, block, 0)
    Y = rng.uniform(-L, L, n)
    Theta = wrap_angle(rng.uniform(-np.pi, np.pi, n))
    return Y, Theta


def _run_block(block: int, n: int, seed: int, spec: KernelSpec, mesh: Mesh, dt: float,
               n_steps: int, snap_steps: dict):
    L, V = mesh.L, mesh.V
    Y, Theta = initial_ensemble(n, L, seed, block)
    hists = {}

    def snap(k):
        for ts in snap_steps.get(k, ()):
            h = Histogram2D.empty(mesh, ts)
            h.add(Y, Theta)
            hists[ts] = h

    snap(0)
    for k in range(1, n_steps + 1):
        Y, Theta = step_particle(Y, Theta, spec, L, V, dt, block_rng(seed, block, k))
        snap(k)
    return hists, Y, Theta


def simulate(n_cell: int, seed: int, dt: float, t_end: float, spec: KernelSpec, mesh: Mesh,
             snapshot_times=(), workers: int = 1, block_size: int = BLOCK_SIZE) -> MCResult:
    """Evolve ``n_cell`` independent particles from the uniform law and bin them
    on ``mesh`` at each snapshot time (``t_end`` is always included)."""
    if n_cell < 1:
        raise ValueError("n_cell must be >= 1")
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    times = sorted(set(float(t) for t in snapshot_times) | {float(t_end)})
    snap_steps = {}
    for ts in times:
        k = int(round(ts / dt))
        if not 0 <= k <= n_steps:
            raise ValueError(f"snapshot time {ts} outside [0, {t_end}]")
        snap_steps.setdefault(k, []).append(ts)

    sizes = [block_size] * (n_cell // block_size)
    if n_cell % block_size:
        sizes.append(n_cell % block_size)
    args = [(b, n, seed, spec, mesh, dt, n_steps, snap_steps) for b, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_block(*a), args))
    else:
        parts = [_run_block(*a) for a in args]

    histograms = {ts: Histogram2D.empty(mesh, ts) for ts in times}
    for hists, _, _ in parts:
        for ts, h in hists.items():
            histograms[ts].merge(h)
    Y = np.concatenate([p[1] for p in parts])
    Theta = np.concatenate([p[2] for p in parts])
    return MCResult(histograms=histograms, Y=Y, Theta=Theta, n_cell=n_cell, seed=seed,
                    steps=n_steps)
