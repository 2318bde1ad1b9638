"""CSV readers and writers for states and small tables.

Every file starts with a ``# ...`` provenance line followed by a header row.
Floats are written with ``repr`` so a round trip is exact and reruns are
byte-identical.
"""

from __future__ import annotations

import csv

import numpy as np

from .mesh import Mesh, StateField


def _fmt(x) -> str:
    return repr(float(x))


def write_state_csv(path, state: StateField, mesh: Mesh, provenance: str = "") -> None:
    y, th = mesh.y, mesh.theta
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "y", "theta", "n"])
        for i in range(state.n.shape[0]):
            for j in range(state.n.shape[1]):
                w.writerow([i + 1, j + 1, _fmt(y[i]), _fmt(th[j]), _fmt(state.n[i, j])])
        for name, cols, vals in (("n_plus", range(mesh.n_theta, 2 * mesh.n_theta), state.n_plus),
                                 ("n_minus", range(mesh.n_theta), state.n_minus)):
            w.writerow(["j", "theta", name])
            for j, v in zip(cols, vals):
                w.writerow([j + 1, _fmt(th[j]), _fmt(v)])


def read_state_csv(path, mesh: Mesh, t: float = 0.0) -> StateField:
    n = np.full(mesh.shape, np.nan)
    walls = {"n_plus": {}, "n_minus": {}}
    block = None
    with open(path, newline="") as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if row[0] in ("i", "j"):
                block = row[-1]
                continue
            if block == "n":
                n[int(row[0]) - 1, int(row[1]) - 1] = float(row[4])
            else:
                walls[block][int(row[0]) - 1] = float(row[2])
    n_plus = np.array([walls["n_plus"][j] for j in range(mesh.n_theta, 2 * mesh.n_theta)])
    n_minus = np.array([walls["n_minus"][j] for j in range(mesh.n_theta)])
    state = StateField(n=n, n_plus=n_plus, n_minus=n_minus, t=t)
    state.check(mesh)
    return state


def write_table(path, header, rows, provenance: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v) for v in r])


def read_table(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    return rows[0], rows[1:]
