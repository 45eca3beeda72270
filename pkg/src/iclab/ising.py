"""Ising spin glass on the 2-ary depth-p complete tree with gauge couplings
J_ij = s0_i s0_j J, sampled by single-spin-flip Metropolis.

Vertices are numbered in level order: root 0, children of i are 2i+1, 2i+2.
Temperatures are in units of J with k_B = 1.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_DEPTH = 10
N_BATCHES = 20
EXACT_LIMIT = 16


@dataclass(frozen=True, eq=False)
class BetheTree:
    depth: int
    s0: np.ndarray = field(repr=False)
    J: float = 1.0
    edges: np.ndarray = field(init=False, repr=False)
    couplings: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth {self.depth} outside 1..{MAX_DEPTH}")
        if not self.J > 0:
            raise ValueError("J must be positive")
        n = 2 ** (self.depth + 1) - 1
        s0 = np.array(self.s0, dtype=np.int64)
        if s0.shape != (n,) or not np.all(np.abs(s0) == 1):
            raise ValueError(f"s0 must hold {n} entries of +-1")
        child = np.arange(1, n)
        edges = np.stack([(child - 1) // 2, child], axis=1)
        couplings = s0[edges[:, 0]] * s0[edges[:, 1]] * float(self.J)
        for a in (s0, edges, couplings):
            a.setflags(write=False)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "couplings", couplings)

    @property
    def num_vertices(self) -> int:
        return self.s0.size

    def neighbours(self) -> list[list[tuple[int, int]]]:
        """Per vertex, (neighbour, coupling sign) pairs."""
        nb: list[list[tuple[int, int]]] = [[] for _ in range(self.num_vertices)]
        for (i, j), c in zip(self.edges.tolist(), np.sign(self.couplings).astype(int).tolist()):
            nb[i].append((j, c))
            nb[j].append((i, c))
        return nb

    def degree(self, i: int) -> int:
        return len(self.neighbours()[i])


def build_tree(p: int, s0_source: str = "all_plus", J: float = 1.0, seed: int | None = None) -> BetheTree:
    """``s0_source`` is "all_plus" (ferromagnet) or "random" (needs ``seed``)."""
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= MAX_DEPTH:
        raise ValueError(f"depth {p!r} outside 1..{MAX_DEPTH}")
    n = 2 ** (p + 1) - 1
    if s0_source == "all_plus":
        s0 = np.ones(n, dtype=np.int64)
    elif s0_source == "random":
        if seed is None:
            raise ValueError("random s0 needs a seed")
        s0 = np.random.default_rng(seed).choice(np.array([-1, 1]), size=n)
    else:
        raise ValueError(f"unknown s0 source {s0_source!r}")
    return BetheTree(int(p), s0, float(J))


def energy(tree: BetheTree, s: Sequence[int]) -> float:
    """H = -sum_{(i,j)} J_ij s_i s_j."""
    s = np.asarray(s)
    if s.shape != (tree.num_vertices,):
        raise ValueError(f"configuration has shape {s.shape}, expected ({tree.num_vertices},)")
    e = tree.edges
    return float(-np.sum(tree.couplings * s[e[:, 0]] * s[e[:, 1]]))


def gauge_transform(tree: BetheTree, s: Sequence[int]) -> np.ndarray:
    """s_i -> s_i s0_i, which maps ``tree`` onto the all-plus ferromagnet."""
    return np.asarray(s) * tree.s0


@dataclass(frozen=True)
class McParams:
    T: float
    burn_in: int = 1000
    measure: int = 10000
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        if self.burn_in < 0 or self.measure < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, measure >= 1, thin >= 1")


@dataclass
class McResult:
    T: float
    magnetization: np.ndarray  # per-site <s_i>
    gauge_magnetization: np.ndarray  # per-site <s_i s0_i>
    site_stderr: np.ndarray
    gauge_mag: float
    gauge_stderr: float
    energy_trace: np.ndarray
    state_counts: dict[int, int] | None = None

    @property
    def mean_abs_mag(self) -> float:
        return float(np.mean(np.abs(self.magnetization)))

    @property
    def mean_abs_stderr(self) -> float:
        """Standard error of the site average of |<s_i>|, treating sites as independent."""
        return float(np.sqrt(np.sum(self.site_stderr**2)) / self.site_stderr.size)

    @property
    def energy_mean(self) -> float:
        return float(self.energy_trace.mean())

    def summary(self) -> dict:
        return {
            "T": self.T,
            "mean_abs_mag": self.mean_abs_mag,
            "mean_abs_stderr": self.mean_abs_stderr,
            "max_abs_mag": float(np.max(np.abs(self.magnetization))),
            "gauge_mag": self.gauge_mag,
            "stderr": self.gauge_stderr,
            "energy_mean": self.energy_mean,
        }


def _batch_stderr(batch_means: np.ndarray) -> np.ndarray:
    b = batch_means.shape[0]
    if b < 2:
        return np.full(batch_means.shape[1:], np.nan)
    return batch_means.std(axis=0, ddof=1) / math.sqrt(b)


def metropolis_run(tree: BetheTree, params: McParams, record_states: bool = False) -> McResult:
    """Sequential level-order Metropolis sweeps starting from s0.

    One uniform is drawn per proposed flip, whether or not it is needed, so
    the random stream depends only on the seed and the sweep count.  With
    ``record_states`` the configuration after every ``thin``-th measured
    sweep is tallied (bit i set when spin i is -1).
    """
    n = tree.num_vertices
    nb = tree.neighbours()
    nb_idx = [[j for j, _ in row] for row in nb]
    nb_sgn = [[c for _, c in row] for row in nb]
    # dH = 2 J m with m = s_i sum_j sign(J_ij) s_j in -3..3
    accept = {m: min(1.0, math.exp(-2.0 * tree.J * m / params.T)) for m in range(-3, 4)}
    s = tree.s0.tolist()
    bonds = -int(np.sum(np.sign(tree.couplings) * tree.s0[tree.edges[:, 0]] * tree.s0[tree.edges[:, 1]]))
    rng = np.random.default_rng(params.seed)

    n_batches = min(N_BATCHES, params.measure)
    per_batch = params.measure // n_batches
    used = per_batch * n_batches
    batch_sums = np.zeros((n_batches, n), dtype=np.int64)
    trace = np.empty(params.measure)
    counts: dict[int, int] | None = {} if record_states else None
    weights = 1 << np.arange(n) if record_states else None

    for sweep in range(params.burn_in + params.measure):
        u = rng.random(n).tolist()
        for i in range(n):
            si = s[i]
            m = 0
            for j, c in zip(nb_idx[i], nb_sgn[i]):
                m += c * s[j]
            m *= si
            a = accept[m]
            if a >= 1.0 or u[i] < a:
                s[i] = -si
                bonds += 2 * m
        t = sweep - params.burn_in
        if t < 0:
            continue
        trace[t] = bonds * tree.J
        arr = np.array(s, dtype=np.int64)
        if t < used:
            batch_sums[t // per_batch] += arr
        if counts is not None and t % params.thin == 0:
            key = int(np.dot(arr < 0, weights))
            counts[key] = counts.get(key, 0) + 1

    means = batch_sums / per_batch
    mag = means.mean(axis=0)
    gauge = means * tree.s0
    gauge_site = gauge.mean(axis=1)  # per-batch site average
    return McResult(
        T=float(params.T),
        magnetization=mag,
        gauge_magnetization=mag * tree.s0,
        site_stderr=_batch_stderr(means),
        gauge_mag=float(gauge_site.mean()),
        gauge_stderr=float(_batch_stderr(gauge_site[:, None])[0]),
        energy_trace=trace,
        state_counts=counts,
    )


def boltzmann_distribution(tree: BetheTree, T: float) -> np.ndarray:
    """Exact Boltzmann weights over all 2^N configurations, indexed as in ``state_counts``."""
    n = tree.num_vertices
    if n > EXACT_LIMIT:
        raise ValueError(f"exact enumeration limited to {EXACT_LIMIT} spins")
    idx = np.arange(2**n)
    configs = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    e = tree.edges
    energies = -np.sum(tree.couplings * configs[:, e[:, 0]] * configs[:, e[:, 1]], axis=1)
    w = np.exp(-(energies - energies.min()) / T)
    return w / w.sum()


def scan_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th chain of a scan; matched across trees."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _scan_job(args):
    tree, params = args
    return metropolis_run(tree, params)


def temperature_scan(tree: BetheTree, T_grid: Sequence[float], params: McParams) -> list[McResult]:
    """One chain per temperature; ``params.T`` is ignored, chain t uses scan_seed(params.seed, t)."""
    grid = [float(t) for t in T_grid]
    if not grid:
        raise ValueError("empty temperature grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("temperature grid must be strictly ascending")
    jobs = [
        (tree, McParams(T, params.burn_in, params.measure, scan_seed(params.seed, t), params.thin))
        for t, T in enumerate(grid)
    ]
    workers = int(os.environ.get("IC_LAB_THREADS", "1") or 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_scan_job, jobs))
    return [_scan_job(j) for j in jobs]


def monotonicity(curve: Sequence[McResult]) -> dict:
    """Whether mean |<s_i>| and gauge magnetisation are nonincreasing along the scan."""
    mags = [r.mean_abs_mag for r in curve]
    gauge = [r.gauge_mag for r in curve]
    return {
        "mean_abs_mag_nonincreasing": all(b <= a for a, b in zip(mags, mags[1:])),
        "gauge_mag_nonincreasing": all(b <= a for a, b in zip(gauge, gauge[1:])),
    }


def xi_report(curve: Sequence[McResult], E_grid: Sequence[float], p: int) -> list[dict]:
    """Exploratory table: xi_MC = mean |<s_i>| per temperature next to E^p."""
    if not 1 <= p <= MAX_DEPTH:
        raise ValueError(f"depth {p} outside 1..{MAX_DEPTH}")
    for E in E_grid:
        if not 0.0 <= E <= 1.0:
            raise ValueError(f"edge bias {E} outside [0, 1]")
    return [
        {"T": r.T, "xi_mc": r.mean_abs_mag, "gauge_mag": r.gauge_mag, "nested_bias": {f"{E:g}": E**p for E in E_grid}}
        for r in curve
    ]
