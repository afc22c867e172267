"""Random-walk oracle for the p = 2 problem.

A simple symmetric walk on the open cells is absorbed at its first attempted
step into a closed cell; the step crosses a ghost edge, and the value of
that edge is the sample.  For p = 2 the solver's edge energy is the
5-point Laplacian, so the expected sample equals the discrete solution at
the start cell.

Seeding: walks run in batches of `batch_size`; batch b uses the seed
mix64(rng_seed + (b + 1) * SPLIT), and walker w of a batch draws from its
own splitmix64 stream derived from that seed and w.  Results depend only on
(rng_seed, batch_size, n_walks) and not on the kernel backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._kernels_py import mix64
from .errors import BadInput, InvalidCell
from .solver import ghost_values

SPLIT = np.uint64(0xD1B54A32D192ED03)


@dataclass
class WalkConfig:
    n_walks: int = 100000
    rng_seed: int = 0
    max_steps: int = 10**7
    batch_size: int = 20000

    def __post_init__(self):
        if self.n_walks < 1 or self.max_steps < 1 or self.batch_size < 1:
            raise BadInput("walk counts must be positive")


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n_absorbed: int
    n_timeout: int
    hits: dict = field(default_factory=dict)
    mean_steps: float = 0.0

    def to_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n_absorbed": self.n_absorbed,
            "n_timeout": self.n_timeout,
            "mean_steps": self.mean_steps,
            "hits": {str(k): int(v) for k, v in self.hits.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def transition_table(dom):
    """(size, 4) moves: a destination cell, or -(e + 1) for absorption across ghost edge e.

    Rows of closed cells are never visited.
    """
    nb = dom.neighbors.copy()
    # off-grid moves cannot start from an open cell (closed padding ring);
    # map them to staying put before -1 gets its absorption meaning
    rows = np.broadcast_to(np.arange(len(nb))[:, None], nb.shape)
    nb = np.where(nb < 0, rows, nb)
    cells, dirs, _ = dom.ghost_edges
    nb[cells, dirs] = -(np.arange(len(cells), dtype=np.int64) + 1)
    return np.ascontiguousarray(nb, dtype=np.int64)


def _edge_data(dom, data, maz):
    from .perron import MazBoundaryData, edge_values

    if isinstance(data, MazBoundaryData):
        if maz is None:
            raise BadInput("Mazurkiewicz data needs the MazBoundary it is aligned with")
        return edge_values(dom, maz, data)
    return ghost_values(dom, data)


def _start_cell(dom, start):
    if isinstance(start, (tuple, list, np.ndarray)) and len(start) == 2:
        c = dom.cell_at(float(start[0]), float(start[1]))
    else:
        c = int(start)
    if c < 0 or c >= dom.spec.size or not dom.open_flat[c]:
        raise InvalidCell("walk must start at an open cell")
    return c


def run_walks(dom, start, cfg: WalkConfig, table=None):
    """Absorption edge (or -1 on timeout) and step count for every walk."""
    nxt = transition_table(dom) if table is None else table
    c = _start_cell(dom, start)
    events = np.empty(cfg.n_walks, np.int64)
    steps = np.empty(cfg.n_walks, np.int64)
    root = np.uint64(cfg.rng_seed % 2**64)
    for b, lo in enumerate(range(0, cfg.n_walks, cfg.batch_size)):
        n = min(cfg.batch_size, cfg.n_walks - lo)
        with np.errstate(over="ignore"):
            seed = mix64(np.asarray(root + np.uint64(b + 1) * SPLIT, dtype=np.uint64))
        ev = np.empty(n, np.int64)
        st = np.empty(n, np.int64)
        kernels.walk(nxt, np.full(n, c, np.int64), np.uint64(seed), int(cfg.max_steps), ev, st)
        events[lo : lo + n] = ev
        steps[lo : lo + n] = st
    return events, steps


def harmonic_measure_mc(dom, start, data, cfg: WalkConfig = None, maz=None) -> MCEstimate:
    """Mean boundary value at the absorption sites of walks from `start`.

    `data` is anything solve_dirichlet accepts as boundary data, or a
    MazBoundaryData together with `maz`.  Hit counts are per Mazurkiewicz
    point when `maz` is given, else per boundary vertex; a split vertex is
    resolved by the ghost edge the walk crosses, i.e. by the local
    component of its last open cell.
    """
    cfg = cfg or WalkConfig()
    gv = _edge_data(dom, data, maz)
    events, steps = run_walks(dom, start, cfg)
    ok = events >= 0
    n_abs = int(ok.sum())
    vals = gv[events[ok]]
    if n_abs:
        # shifting by the first sample makes constant data exact
        c0 = vals[0]
        dev = vals - c0
        mean = float(c0 + dev.mean())
        stderr = float(dev.std() / np.sqrt(n_abs))
    else:
        mean, stderr = float("nan"), float("inf")
    _, _, anchors = dom.ghost_edges
    if maz is not None:
        keys = maz.edge_points(dom)[events[ok]]
    else:
        keys = anchors[events[ok]]
    uk, cnt = np.unique(keys, return_counts=True)
    hits = {int(k): int(v) for k, v in zip(uk, cnt)}
    return MCEstimate(mean, stderr, n_abs, int(len(events) - n_abs), hits, float(steps.mean()))


@dataclass
class CrossCheckReport:
    passed: bool
    rows: list

    def to_dict(self):
        return {"passed": self.passed, "rows": self.rows}


def mc_crosscheck(dom, data, solution, probes, cfg: WalkConfig = None, maz=None, slack=0.02):
    """Compare a p = 2 solution with walk estimates at probe points.

    A probe passes when |solution - MC mean| <= 3 stderr + slack.
    """
    cfg = cfg or WalkConfig()
    vals = solution.values if hasattr(solution, "values") else np.asarray(solution)
    rows = []
    for k, pr in enumerate(probes):
        c = _start_cell(dom, pr)
        sub = WalkConfig(cfg.n_walks, cfg.rng_seed + k, cfg.max_steps, cfg.batch_size)
        est = harmonic_measure_mc(dom, c, data, sub, maz)
        sv = float(vals.ravel()[c])
        gap = abs(sv - est.mean)
        rows.append(
            {
                "probe": [float(v) for v in dom.spec.center(c)],
                "solution": sv,
                "mc_mean": est.mean,
                "stderr": est.stderr,
                "gap": gap,
                "n_timeout": est.n_timeout,
                "pass": bool(gap <= 3 * est.stderr + slack),
            }
        )
    return CrossCheckReport(all(r["pass"] for r in rows), rows)


__all__ = [
    "WalkConfig",
    "MCEstimate",
    "transition_table",
    "run_walks",
    "harmonic_measure_mc",
    "mc_crosscheck",
    "CrossCheckReport",
]
