"""Exact discrete Shannon quantities (bits), the binary symmetric channel and
the attenuation probe for it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Dense joint pmf over named discrete variables; axis order follows ``names``."""

    names: tuple[str, ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        names = tuple(self.names)
        p = np.array(self.probs, dtype=float)
        if p.ndim != len(names) or len(set(names)) != len(names):
            raise ValueError("one distinct name per axis required")
        if p.min(initial=0.0) < -1e-15:
            raise ValueError("negative probability")
        if abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "probs", p)

    def sizes(self) -> dict[str, int]:
        return dict(zip(self.names, self.probs.shape))

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def marginal(self, names: Sequence[str]) -> np.ndarray:
        """Marginal table with axes in the order given."""
        axes = [self.axis(n) for n in names]
        if len(set(axes)) != len(axes):
            raise ValueError("repeated variable")
        rest = tuple(i for i in range(len(self.names)) if i not in axes)
        m = self.probs.sum(axis=rest)
        kept = sorted(axes)
        return np.transpose(m, [kept.index(a) for a in axes])

    def condition(self, name: str, value: int) -> JointDistribution:
        """Distribution of the remaining variables given ``name == value``."""
        ax = self.axis(name)
        sub = np.take(self.probs, value, axis=ax)
        mass = sub.sum()
        if mass <= 0:
            raise ValueError(f"event {name}={value} has zero probability")
        return JointDistribution(self.names[:ax] + self.names[ax + 1 :], sub / mass)


def entropy(p: np.ndarray | Sequence[float]) -> float:
    """Shannon entropy in bits, 0 log 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    # + 0.0 turns the -0.0 of a point mass into 0.0
    return float(-np.sum(p * np.log2(p))) + 0.0


def binary_entropy(q: float) -> float:
    return entropy([q, 1 - q])


def _excess_log(x: np.ndarray) -> np.ndarray:
    """(1+x) ln(1+x) - x, accurate for small |x|; equals 1 at x = -1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    # sum_{n>=2} (-1)^n x^n / (n (n-1))
    series = xs**2 * (1 / 2 - xs * (1 / 6 - xs * (1 / 12 - xs * (1 / 20 - xs * (1 / 30 - xs / 42)))))
    xl = np.where(small, 1.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.where(xl <= -1.0, 1.0, (1 + xl) * np.log1p(np.maximum(xl, -1.0)) - xl)
    return np.where(small, series, direct)


def _mi_batch(pab: np.ndarray) -> np.ndarray:
    """Mutual information (bits) of the normalised tables on the last two axes."""
    # sum q g((p - q)/q) with q = pa pb: each term is second order in the
    # dependence, so tiny informations keep their relative accuracy
    pa = pab.sum(axis=-1, keepdims=True)
    pb = pab.sum(axis=-2, keepdims=True)
    q = pa * pb
    safe = np.where(q > 0, q, 1.0)
    terms = np.where(q > 0, q * _excess_log((pab - q) / safe), 0.0)
    small = np.maximum(terms.sum(axis=(-1, -2)) / np.log(2), 0.0)
    # H(A) + H(B) - H(A,B) is better conditioned (and exact on dyadic tables) away from zero
    with np.errstate(divide="ignore", invalid="ignore"):
        def h(t, axes):
            return -np.sum(np.where(t > 0, t * np.log2(np.where(t > 0, t, 1.0)), 0.0), axis=axes)

        large = h(pa, (-1, -2)) + h(pb, (-1, -2)) - h(pab, (-1, -2))
    return np.where(small < 1e-3, small, np.maximum(large, 0.0))


def _cmi_batch(pcab: np.ndarray) -> np.ndarray:
    """I(A;B|C) for tables indexed [..., c, a, b]."""
    pc = pcab.sum(axis=(-1, -2))
    safe = np.where(pc > 0, pc, 1.0)[..., None, None]
    return np.sum(pc * _mi_batch(pcab / safe), axis=-1)


def _mi_table(pab: np.ndarray) -> float:
    return float(_mi_batch(pab))


def _as_list(v: str | Sequence[str]) -> list[str]:
    return [v] if isinstance(v, str) else list(v)


def _grouped(joint: JointDistribution, groups: Sequence[Sequence[str]]) -> np.ndarray:
    """Marginal with each group of variables flattened into one axis."""
    flat = [n for g in groups for n in g]
    m = joint.marginal(flat)
    sizes = joint.sizes()
    return m.reshape([int(np.prod([sizes[n] for n in g])) for g in groups])


def mutual_information(joint: JointDistribution, vars_a, vars_b) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B) in bits."""
    a, b = _as_list(vars_a), _as_list(vars_b)
    return _mi_table(_grouped(joint, [a, b]))


def conditional_mutual_information(joint: JointDistribution, vars_a, vars_b, cond_vars) -> float:
    """I(A;B|C) = sum_c P(c) I(A;B | C=c)."""
    a, b, c = _as_list(vars_a), _as_list(vars_b), _as_list(cond_vars)
    if not c:
        return mutual_information(joint, a, b)
    return float(_cmi_batch(_grouped(joint, [c, a, b])))


@dataclass(frozen=True)
class BscChannel:
    """Binary symmetric channel with bias xi: flip probability (1 - xi)/2."""

    xi: float

    def __post_init__(self):
        if not -1.0 <= self.xi <= 1.0:
            raise ValueError(f"bias {self.xi} outside [-1, 1]")

    @property
    def flip_probability(self) -> float:
        return (1 - self.xi) / 2

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[1 + self.xi, 1 - self.xi], [1 - self.xi, 1 + self.xi]]) / 2


def bsc_apply(dist: JointDistribution, var: str, channel: BscChannel, new_var: str) -> JointDistribution:
    """Append ``new_var`` = ``var`` passed through ``channel``."""
    ax = dist.axis(var)
    if dist.probs.shape[ax] != 2:
        raise ValueError(f"{var} is not binary")
    if new_var in dist.names:
        raise ValueError(f"{new_var} already present")
    w = channel.matrix  # w[y, z] = P(z | y)
    shape = [1] * dist.probs.ndim + [2]
    shape[ax] = 2
    p = dist.probs[..., None] * w.reshape(shape)
    return JointDistribution(dist.names + (new_var,), p)


def bb84_split(Q: float) -> tuple[float, float]:
    """Receiver/eavesdropper information (1 - h(Q), h(Q)) at bit error rate Q."""
    if not 0.0 <= Q <= 0.5:
        raise ValueError(f"QBER {Q} outside [0, 1/2]")
    h = binary_entropy(Q)
    return 1.0 - h, h


# -- attenuation probe --------------------------------------------------------

DEFAULT_XI_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
VACUOUS_CUTOFF = 1e-9


def _random_joint(rng: np.random.Generator, q: int, x: int) -> np.ndarray:
    """Random pmf over (Q, X, Y), Y binary; a mix of dense and structured draws."""
    kind = rng.integers(4)
    if kind == 0:
        p = rng.dirichlet(np.ones(q * x * 2))
    elif kind == 1:
        # sparse: many exact zeros
        p = rng.dirichlet(np.full(q * x * 2, 0.3)) * (rng.random(q * x * 2) < 0.6)
        if p.sum() == 0:
            p[rng.integers(p.size)] = 1.0
    elif kind == 2:
        # Y a noisy function of X: strongly dependent
        pqx = rng.dirichlet(np.ones(q * x)).reshape(q, x)
        f = rng.integers(2, size=(q, x))
        eps = rng.random() ** 3 / 2
        p = np.stack([pqx * np.where(f == 0, 1 - eps, eps), pqx * np.where(f == 1, 1 - eps, eps)], axis=-1)
    else:
        # nearly independent: weak dependence, the regime where the ratio approaches xi^2
        pqx = rng.dirichlet(np.ones(q * x)).reshape(q, x)
        py = 0.5 + (rng.random((q, x)) - 0.5) * 10 ** rng.uniform(-4, -0.3)
        p = np.stack([pqx * py, pqx * (1 - py)], axis=-1)
    p = np.asarray(p, dtype=float).reshape(q, x, 2)
    return p / p.sum()


def es_ratio_probe(
    trials: int,
    seed: int,
    support_sizes: Sequence[tuple[int, int]] = ((1, 2), (2, 2), (2, 3), (3, 2), (4, 4)),
    xi_grid: Sequence[float] = DEFAULT_XI_GRID,
) -> dict:
    """Sample joints over (Q, X, Y), pass Y through BSC(xi) to get Z, and
    record the largest I(X;Z|Q) / (xi^2 I(X;Y|Q)).

    ``support_sizes`` lists (|Q|, |X|) pairs cycled over trials.  Trials with
    I(X;Y|Q) <= 1e-9 are skipped and counted as vacuous.  Trial t uses the
    generator seeded with ``seed ^ t``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    xis = np.asarray(xi_grid, dtype=float)
    channels = np.stack([BscChannel(xi).matrix for xi in xis])  # [xi, y, z]
    best, arg, skipped, cases = -np.inf, None, 0, 0
    for t in range(trials):
        rng = np.random.default_rng(seed ^ t)
        q, x = support_sizes[t % len(support_sizes)]
        p = _random_joint(rng, q, x)
        den = float(_cmi_batch(p))
        if den <= VACUOUS_CUTOFF:
            skipped += 1
            continue
        pz = np.einsum("qxy,kyz->kqxz", p, channels)
        ratios = _cmi_batch(pz) / den
        cases += len(xis)
        # xi = 0 makes Z independent of everything: a zero ratio counts as 0, not 0/0
        scaled = np.divide(ratios, xis**2, out=np.where(ratios <= 1e-12, 0.0, np.inf), where=xis != 0)
        i = int(np.argmax(scaled))
        if scaled[i] > best:
            best = float(scaled[i])
            arg = {"trial": t, "xi": float(xis[i]), "support": [q, x], "ratio": float(ratios[i])}
    return {
        "max_ratio": float(best) if arg else 0.0,
        "arg_case": arg,
        "trials": trials,
        "cases": cases,
        "skipped_vacuous": skipped,
        "seed": seed,
    }
