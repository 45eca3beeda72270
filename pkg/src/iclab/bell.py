"""Full-correlator Bell functionals, local bounds, measurement-setting
optimisation and quadratic monogamy sweeps.

Outcomes are mapped 0 -> +1, 1 -> -1.  Quantum evaluations work on qubit
states through the Pauli correlation tensor: with observables r.sigma the
correlator <O_1 ... O_m> is a multilinear form in the Bloch vectors.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .boxes import BoxTable, alpha_bits
from .quantum import DensityMatrix, Observable, correlation_tensor, observable_from_vector, random_pure_state

LOCAL_ENUM_LIMIT = 2**20
ASCENT_PASSES = 25
ASCENT_TOL = 1e-6
VIOLATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BellFunctional:
    name: str
    inputs: tuple[int, ...]
    coef: np.ndarray = field(repr=False)
    quantum_max: float | None = None
    local_max: float | None = None
    k: int | None = None

    @property
    def n_parties(self) -> int:
        return len(self.inputs)

    @property
    def algebraic_max(self) -> float:
        return float(np.abs(self.coef).sum())


def ic_bounds(k: int) -> tuple[float, float]:
    """(sum_m C(k-1, m) |k - 2m|,  2^(k-1) sqrt(k))."""
    if k < 2:
        raise ValueError("k must be >= 2")
    lower = sum(math.comb(k - 1, m) * abs(k - 2 * m) for m in range(k))
    return float(lower), 2.0 ** (k - 1) * math.sqrt(k)


def classify_ic(value: float, k: int, tol: float = 1e-9) -> str:
    lower, upper = ic_bounds(k)
    v = abs(value)
    if v < lower - tol:
        return "below-local"
    if v > upper + tol:
        return "superquantum"
    return "physical-window"


def functional(name: str, k: int | None = None) -> BellFunctional:
    """chsh, sb (Seevinck-Bell), mermin, or ic with database size k."""
    key = name.lower()
    if key == "chsh":
        coef = np.array([[1.0, 1.0], [1.0, -1.0]])
        return BellFunctional("chsh", (2, 2), coef, 2 * math.sqrt(2), 2.0, 2)
    if key == "sb":
        coef = np.empty((2, 2, 2))
        for x1, x2, y in itertools.product((0, 1), repeat=3):
            coef[x1, x2, y] = (-1) ** (x1 * x2 * y + (1 - x1) * (1 - x2) * (1 - y))
        return BellFunctional("sb", (2, 2, 2), coef, 4 * math.sqrt(2), 4.0)
    if key == "mermin":
        coef = np.zeros((2, 2, 2))
        coef[1, 0, 0] = coef[0, 1, 0] = coef[0, 0, 1] = 1.0
        coef[1, 1, 1] = -1.0
        return BellFunctional("mermin", (2, 2, 2), coef, 4.0, 2.0)
    if key == "ic":
        if k is None or k < 2:
            raise ValueError("ic functional needs k >= 2")
        coef = np.array([[(-1.0) ** alpha_bits(a, k)[b] for b in range(k)] for a in range(2 ** (k - 1))])
        lower, upper = ic_bounds(k)
        return BellFunctional(f"ic{k}", (2 ** (k - 1), k), coef, upper, lower, k)
    raise ValueError(f"unknown functional {name!r}")


def evaluate(func: BellFunctional, box: BoxTable) -> float:
    if box.inputs != func.inputs or any(o != 2 for o in box.outputs):
        raise ValueError(f"box signature {box.parties} does not match {func.name} inputs {func.inputs}")
    return float(np.sum(func.coef * box.correlators()))


def _sign_rows(n_inputs: int) -> np.ndarray:
    """All +-1 assignments to n_inputs settings; row s, bit i of s set means output 1 (-1)."""
    s = np.arange(2**n_inputs)[:, None]
    return 1.0 - 2.0 * ((s >> np.arange(n_inputs)) & 1)


def local_max(func: BellFunctional) -> tuple[float, list[list[int]]]:
    """Exact max of |value| over deterministic local strategies, with a witness.

    All parties but the last are enumerated; the last party's best reply
    sign(sum) is exact, so the result is the maximum over every strategy.
    The witness lists each party's outputs (0/1) per input.
    """
    *head, last = func.inputs
    count = int(np.prod([2**i for i in head]))
    if count > LOCAL_ENUM_LIMIT:
        raise ValueError(f"{count} strategies exceed the enumeration limit 2^20")
    m = func.n_parties
    operands: list = [func.coef, list(range(m))]
    for p, n_in in enumerate(head):
        operands += [_sign_rows(n_in), [m + p, p]]
    w = np.einsum(*operands, list(range(m, m + len(head))) + [m - 1])
    totals = np.abs(w).sum(axis=-1)
    flat = int(np.argmax(totals))
    idx = np.unravel_index(flat, totals.shape)
    witness = [[int((int(s) >> i) & 1) for i in range(n_in)] for s, n_in in zip(idx, head)]
    witness.append([0 if v >= 0 else 1 for v in w[idx]])
    return float(totals[idx]), witness


def correlation_tensor_norm(rho: DensityMatrix) -> float:
    """sum over x/y Pauli strings of Tr(rho sigma_k1 x ... x sigma_kN)^2."""
    t = correlation_tensor(rho)
    return float(np.sum(t[(slice(1, 3),) * rho.num_qubits] ** 2))


# -- setting optimisation -----------------------------------------------------


@dataclass(frozen=True)
class Term:
    """A functional evaluated on the qubits ``sites`` (one per functional party)."""

    functional: BellFunctional
    sites: tuple[int, ...]


def _term_tensor(t_full: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    n = t_full.ndim
    idx = tuple(slice(1, 4) if q in sites else 0 for q in range(n))
    sub = t_full[idx]
    order = sorted(sites)
    return np.transpose(sub, [order.index(q) for q in sites])


class _Problem:
    """Multilinear objective over per-qubit Bloch vectors R[q] of shape (inputs_q, 3)."""

    def __init__(self, t_full: np.ndarray, terms: Sequence[Term], kind: str):
        self.n = t_full.ndim
        self.kind = kind
        self.terms = list(terms)
        self.tensors = [_term_tensor(t_full, t.sites) for t in terms]
        self.inputs = [0] * self.n
        for t in terms:
            for p, q in enumerate(t.sites):
                if self.inputs[q] not in (0, t.functional.inputs[p]):
                    raise ValueError(f"qubit {q} used with inconsistent input counts")
                self.inputs[q] = t.functional.inputs[p]
        self.touching = [[ti for ti, t in enumerate(terms) if q in t.sites] for q in range(self.n)]

    def term_values(self, R) -> np.ndarray:
        vals = []
        for t, tens in zip(self.terms, self.tensors):
            m = len(t.sites)
            ops: list = [t.functional.coef, list(range(m)), tens, list(range(m, 2 * m))]
            for p, q in enumerate(t.sites):
                ops += [R[q], [p, m + p]]
            vals.append(np.einsum(*ops, []))
        return np.array(vals, dtype=float)

    def objective(self, vals: np.ndarray) -> float:
        return float(vals.sum() if self.kind == "value" else np.sum(vals**2))

    def gradient(self, R, ti: int, q: int) -> np.ndarray:
        t, tens = self.terms[ti], self.tensors[ti]
        m = len(t.sites)
        ops: list = [t.functional.coef, list(range(m)), tens, list(range(m, 2 * m))]
        pos = t.sites.index(q)
        for p, s in enumerate(t.sites):
            if p != pos:
                ops += [R[s], [p, m + p]]
        return np.einsum(*ops, [pos, m + pos])

    def value_and_grad(self, R) -> tuple[float, list[np.ndarray]]:
        vals = self.term_values(R)
        weights = np.ones_like(vals) if self.kind == "value" else 2 * vals
        grads = [np.zeros_like(r) for r in R]
        for ti, t in enumerate(self.terms):
            for q in t.sites:
                grads[q] += weights[ti] * self.gradient(R, ti, q)
        return self.objective(vals), grads

    def polish(self, R, tol: float) -> list[np.ndarray]:
        """Quasi-Newton refinement over unnormalised vectors u, r = u/|u|."""
        sizes = [r.size for r in R]
        shapes = [r.shape for r in R]

        def unpack(x):
            out, at = [], 0
            for n, sh in zip(sizes, shapes):
                u = x[at : at + n].reshape(sh)
                out.append(u)
                at += n
            return out

        def fun(x):
            us = unpack(x)
            norms = [np.linalg.norm(u, axis=1, keepdims=True) for u in us]
            rs = [u / nrm for u, nrm in zip(us, norms)]
            f, grads = self.value_and_grad(rs)
            gx = []
            for r, g, nrm in zip(rs, grads, norms):
                # project out the radial part: d(u/|u|)/du = (I - r r^T)/|u|
                gx.append(((g - np.sum(g * r, axis=1, keepdims=True) * r) / nrm).ravel())
            return -f, -np.concatenate(gx)

        x0 = np.concatenate([r.ravel() for r in R])
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "ftol": tol * 1e-3, "gtol": 1e-12})
        us = unpack(res.x)
        return [u / np.linalg.norm(u, axis=1, keepdims=True) for u in us]

    def ascend(self, R, iterations: int, tol: float) -> float:
        value = self.objective(self.term_values(R))
        for _ in range(iterations):
            for q in range(self.n):
                if not self.touching[q]:
                    continue
                grads = [self.gradient(R, ti, q) for ti in self.touching[q]]
                for i in range(self.inputs[q]):
                    C = np.array([g[i] for g in grads])  # [term, 3]
                    d = np.array([np.sum(R[q] * g) - R[q][i] @ g[i] for g in grads])
                    r = _block_argmax(C, d, self.kind, R[q][i])
                    R[q][i] = r
            new = self.objective(self.term_values(R))
            done = new - value < tol
            value = max(value, new)
            if done:
                break
        return value


def _block_value(C: np.ndarray, d: np.ndarray, kind: str, r: np.ndarray) -> float:
    v = C @ r + d
    return float(v.sum() if kind == "value" else np.sum(v**2))


def _sphere_argmax(M: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    """argmax over unit r of r.M.r + 2 w.r (M symmetric PSD)."""
    lam, V = np.linalg.eigh(M)
    lam, V = lam[::-1], V[:, ::-1]
    wt = V.T @ w
    top = lam[0]
    scale = max(abs(top), float(np.linalg.norm(w)))
    if scale == 0.0:
        return None
    deg = np.abs(lam - top) <= 1e-12 * scale
    wn = float(np.linalg.norm(wt[deg]))
    if wn <= 1e-13 * scale:
        y = np.zeros_like(wt)
        rest = ~deg
        y[rest] = wt[rest] / (top - lam[rest])
        ny = float(np.linalg.norm(y))
        if ny <= 1.0:
            y[int(np.argmax(deg))] += math.sqrt(1.0 - ny**2)
            return V @ y

    def phi(mu):
        return float(np.sum(wt**2 / (mu - lam) ** 2)) - 1.0

    lo, hi = top + wn, top + float(np.linalg.norm(w))
    if hi > lo and phi(lo) > 0 > phi(hi):
        mu = brentq(phi, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=4 * np.finfo(float).eps)
    else:
        mu = hi
    y = wt / (mu - lam)
    r = V @ y
    return r / np.linalg.norm(r)


def _block_argmax(C: np.ndarray, d: np.ndarray, kind: str, current: np.ndarray) -> np.ndarray:
    if kind == "value":
        g = C.sum(axis=0)
        norm = np.linalg.norm(g)
        return g / norm if norm > 0 else current
    r = _sphere_argmax(C.T @ C, C.T @ d)
    if r is None or _block_value(C, d, kind, r) < _block_value(C, d, kind, current):
        return current
    return r


def _random_settings(rng: np.random.Generator, inputs: Sequence[int]) -> list[np.ndarray]:
    out = []
    for n_in in inputs:
        v = rng.standard_normal((max(n_in, 1), 3))
        out.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    return out


@dataclass
class OptimizationResult:
    settings: list[np.ndarray]  # per qubit, Bloch vectors (inputs, 3)
    value: float
    term_values: list[float]

    def observables(self) -> list[list[Observable]]:
        return [[observable_from_vector(r) for r in R] for R in self.settings]


def optimize_terms(
    rho: DensityMatrix,
    terms: Sequence[Term],
    kind: str = "value",
    seed: int = 0,
    restarts: int = 5,
    iterations: int = 500,
    tol: float = 1e-10,
) -> OptimizationResult:
    """Block-coordinate ascent over Bloch vectors, best of ``restarts`` random starts.

    Each block (one observable) is maximised exactly, so the objective is
    nondecreasing pass to pass.  Block ascent converges only linearly, so
    after a few passes the point is refined by L-BFGS on the normalised
    vectors and finished with exact block passes; the refined point is kept
    only if it improves the value.
    """
    t_full = correlation_tensor(rho)
    problem = _Problem(t_full, terms, kind)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(restarts, 1)):
        R = _random_settings(rng, problem.inputs)
        val = problem.ascend(R, min(iterations, ASCENT_PASSES), max(tol, ASCENT_TOL))
        polished = problem.polish(R, tol)
        pval = problem.objective(problem.term_values(polished))
        if pval > val:
            R, val = polished, pval
            # finish with exact block passes from the polished point
            val = problem.ascend(R, min(iterations, 5), tol)
        if best is None or val > best[1]:
            best = (R, val)
    R, val = best
    return OptimizationResult(R, val, [float(v) for v in problem.term_values(R)])


def optimize_settings(
    rho: DensityMatrix, func: BellFunctional, seed: int = 0, restarts: int = 5, iterations: int = 500
) -> OptimizationResult:
    """Maximise the (signed) functional value over qubit measurement settings."""
    if rho.num_qubits != func.n_parties:
        raise ValueError(f"{func.name} needs {func.n_parties} qubits, state has {rho.num_qubits}")
    return optimize_terms(rho, [Term(func, tuple(range(func.n_parties)))], "value", seed, restarts, iterations)


def evaluate_settings(rho: DensityMatrix, terms: Sequence[Term], settings: Sequence[np.ndarray]) -> list[float]:
    problem = _Problem(correlation_tensor(rho), terms, "value")
    R = [np.asarray(s, dtype=float) for s in settings]
    return [float(v) for v in problem.term_values(R)]


# -- monogamy relations ----------------------------------------------------------

RELATIONS = ("chsh8", "sb32", "sb64", "mermin16", "ic")


@dataclass(frozen=True)
class MonogamyRelation:
    id: str
    terms: tuple[Term, ...]
    bound: float
    num_sites: int


def relation(rid: str, n: int = 2, k: int = 2) -> MonogamyRelation:
    """Quadratic relations; site 0 (and 1 for the SB family) belong to Alice.

    chsh8 / icK: sum_j F(A, B_j)^2 over receivers 1..n.
    sb32: sum_j SB(A1, A2, B_j)^2.
    sb64 / mermin16: four-qubit (A1, A2, B1, B2), both orientations.
    """
    key = rid.lower()
    if key == "chsh8":
        f = functional("chsh")
        return MonogamyRelation(key, tuple(Term(f, (0, j)) for j in range(1, n + 1)), 8.0, 1 + n)
    if key in ("ic", f"ic{k}") or (key.startswith("ic") and key[2:].isdigit()):
        kk = int(key[2:]) if key[2:].isdigit() else k
        f = functional("ic", kk)
        return MonogamyRelation(f"ic{kk}", tuple(Term(f, (0, j)) for j in range(1, n + 1)), 4.0 ** (kk - 1) * kk, 1 + n)
    if key == "sb32":
        f = functional("sb")
        return MonogamyRelation(key, tuple(Term(f, (0, 1, 1 + j)) for j in range(1, n + 1)), 32.0, 2 + n)
    if key in ("sb64", "mermin16"):
        f = functional("sb" if key == "sb64" else "mermin")
        sites = ((0, 1, 2), (0, 1, 3), (2, 3, 0), (2, 3, 1))
        return MonogamyRelation(key, tuple(Term(f, s) for s in sites), 64.0 if key == "sb64" else 16.0, 4)
    raise ValueError(f"unknown relation {rid!r}")


@dataclass(frozen=True)
class RandomStates:
    num_qubits: int
    trials: int
    seed: int


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class SweepResult:
    relation: str
    bound: float
    samples: list[dict]

    @property
    def max_lhs(self) -> float:
        return max(s["lhs"] for s in self.samples)

    @property
    def violations(self) -> list[int]:
        return [s["sample_id"] for s in self.samples if s["violated"]]

    def summary(self) -> dict:
        return {
            "relation": self.relation,
            "bound": self.bound,
            "samples": len(self.samples),
            "max_lhs": self.max_lhs,
            "violations": self.violations,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "seed", "lhs", "bound", "violated"])
            for s in self.samples:
                w.writerow([s["sample_id"], s["seed"], f"{s['lhs']:.12g}", f"{s['bound']:.12g}", int(s["violated"])])


def _state_sample(args) -> tuple[float, list[float]]:
    rho, rel, optimize, seed, restarts, iterations, settings = args
    if optimize:
        res = optimize_terms(rho, rel.terms, "sumsq", seed, restarts, iterations)
        return res.value, res.term_values
    vals = evaluate_settings(rho, rel.terms, settings)
    return float(np.sum(np.square(vals))), vals


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, int(os.environ.get("IC_LAB_THREADS", "1")))


def monogamy_sweep(
    rel: MonogamyRelation,
    source,
    optimize: bool = True,
    seed: int = 0,
    restarts: int = 5,
    iterations: int = 500,
    settings: Sequence[np.ndarray] | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Evaluate sum of squared functionals per sample and flag LHS > bound + 1e-6.

    ``source`` is a DensityMatrix, a list of them, a RandomStates spec, or a
    list of BoxTables (each with ``rel.num_sites`` parties).  Qubit settings
    are shared across every term of the relation.  Sample i of a random
    sweep uses state seed and optimiser seed derived from (seed, i).
    """
    if isinstance(source, (DensityMatrix, BoxTable)):
        source = [source]
    samples: list[dict] = []
    if isinstance(source, RandomStates) or all(isinstance(s, DensityMatrix) for s in source):
        if isinstance(source, RandomStates):
            if source.num_qubits != rel.num_sites:
                raise ValueError(f"{rel.id} needs {rel.num_sites} qubits")
            seeds = [sample_seed(source.seed, i) for i in range(source.trials)]
            states = (random_pure_state(source.num_qubits, s) for s in seeds)
        else:
            seeds = [sample_seed(seed, i) for i in range(len(source))]
            states = iter(source)
        if not optimize and settings is None:
            raise ValueError("settings are required when optimize is False")
        jobs = []
        for s, rho in zip(seeds, states):
            if rho.num_qubits != rel.num_sites:
                raise ValueError(f"{rel.id} needs {rel.num_sites} qubits, state has {rho.num_qubits}")
            jobs.append((rho, rel, optimize, s, restarts, iterations, settings))
        nw = _worker_count(workers)
        if nw > 1:
            with ProcessPoolExecutor(nw) as ex:
                results = list(ex.map(_state_sample, jobs, chunksize=8))
        else:
            results = [_state_sample(j) for j in jobs]
        for i, (s, (lhs, vals)) in enumerate(zip(seeds, results)):
            samples.append(_sample_row(i, s, lhs, vals, rel.bound))
    else:
        for i, box in enumerate(source):
            if box.n_parties != rel.num_sites:
                raise ValueError(f"{rel.id} needs {rel.num_sites} parties, box has {box.n_parties}")
            vals = [evaluate(t.functional, box.marginal(t.sites)) for t in rel.terms]
            samples.append(_sample_row(i, None, float(np.sum(np.square(vals))), vals, rel.bound))
    return SweepResult(rel.id, rel.bound, samples)


def _sample_row(i: int, seed, lhs: float, vals: Sequence[float], bound: float) -> dict:
    return {
        "sample_id": i,
        "seed": seed,
        "lhs": float(lhs),
        "terms": [float(v) for v in vals],
        "bound": bound,
        "violated": bool(lhs > bound + VIOLATION_TOL),
    }


def tradeoff_ic(boxes: Sequence[BoxTable], k: int) -> dict:
    """sum_j IC(A, B_j)^2 against 4^(k-1) k (reported, not enforced)."""
    f = functional("ic", k)
    values = [evaluate(f, b) for b in boxes]
    sum_sq = float(np.sum(np.square(values)))
    bound = 4.0 ** (k - 1) * k
    return {"values": values, "sum_sq": sum_sq, "bound": bound, "respected": sum_sq <= bound + VIOLATION_TOL}
