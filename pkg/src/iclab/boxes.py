"""No-signaling boxes as dense conditional probability tables.

A box with parties ``((in_0, out_0), ..., (in_{m-1}, out_{m-1}))`` stores
``P(o_0..o_{m-1} | i_0..i_{m-1})`` in an array of shape
``(in_0, ..., in_{m-1}, out_0, ..., out_{m-1})``.  Party 0 is always Alice,
parties 1..n are the receivers.  Outcome 0 maps to +1 and 1 to -1 whenever a
correlator is taken.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quantum import DensityMatrix, Observable, kron

MAX_ENTRIES = 2**24
NS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BoxTable:
    parties: tuple[tuple[int, int], ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        parties = tuple((int(i), int(o)) for i, o in self.parties)
        if len(parties) < 2:
            raise ValueError("a box needs at least two parties")
        if any(i < 1 or o < 1 for i, o in parties):
            raise ValueError("alphabet sizes must be positive")
        shape = tuple(i for i, _ in parties) + tuple(o for _, o in parties)
        if int(np.prod(shape)) > MAX_ENTRIES:
            raise ValueError(f"box table with {int(np.prod(shape))} entries exceeds 2^24")
        p = np.array(self.probs, dtype=float).reshape(shape)
        if p.min() < -1e-12:
            raise ValueError(f"negative probability {p.min()!r}")
        m = len(parties)
        sums = p.sum(axis=tuple(range(m, 2 * m)))
        if np.max(np.abs(sums - 1)) > 1e-9:
            raise ValueError("probabilities do not sum to 1 for every input")
        p.setflags(write=False)
        object.__setattr__(self, "parties", parties)
        object.__setattr__(self, "probs", p)

    @property
    def n_parties(self) -> int:
        return len(self.parties)

    @property
    def inputs(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.parties)

    @property
    def outputs(self) -> tuple[int, ...]:
        return tuple(o for _, o in self.parties)

    def prob(self, inputs: Sequence[int], outputs: Sequence[int]) -> float:
        return float(self.probs[tuple(inputs) + tuple(outputs)])

    def marginal(self, keep: Sequence[int]) -> BoxTable:
        """Box on the parties in ``keep`` (in that order).

        Dropped outputs are summed out; dropped inputs are averaged uniformly,
        which is exact for no-signaling boxes and the protocol convention
        (independent uniform questions) otherwise.
        """
        keep = list(keep)
        m = self.n_parties
        drop = [q for q in range(m) if q not in keep]
        p = self.probs.sum(axis=tuple(m + q for q in drop))
        p = p.mean(axis=tuple(drop)) if drop else p
        # remaining axes: kept inputs (sorted), kept outputs (sorted)
        order = sorted(keep)
        k = len(order)
        perm = [order.index(q) for q in keep] + [k + order.index(q) for q in keep]
        return BoxTable(tuple(self.parties[q] for q in keep), np.transpose(p, perm))

    def correlators(self) -> np.ndarray:
        """Full correlators E(i) = sum_o (-1)^(o_0+...+o_m) P(o|i) for binary outputs."""
        if any(o != 2 for o in self.outputs):
            raise ValueError("correlators need binary outputs")
        m = self.n_parties
        sign = np.ones((2,) * m)
        for q in range(m):
            sign = sign * np.array([1.0, -1.0]).reshape((1,) * q + (2,) + (1,) * (m - q - 1))
        return np.tensordot(self.probs, sign, axes=(list(range(m, 2 * m)), list(range(m))))

    def to_dict(self) -> dict:
        return {"parties": [list(p) for p in self.parties], "probs": self.probs.ravel().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> BoxTable:
        return cls(tuple(tuple(p) for p in d["parties"]), np.asarray(d["probs"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> BoxTable:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class NoSignalingReport:
    passed: bool
    worst_violation: float
    offending: tuple | None = None  # (subset, complement inputs a, complement inputs b)
    tol: float = NS_TOL

    def to_dict(self) -> dict:
        off = None
        if self.offending is not None:
            subset, ia, ib = self.offending
            off = {"subset": list(subset), "inputs_a": list(ia), "inputs_b": list(ib)}
        return {"passed": self.passed, "worst_violation": self.worst_violation, "tol": self.tol, "offending": off}


# -- constructors -----------------------------------------------------------


def from_function(parties: Sequence[tuple[int, int]], fn: Callable[[tuple, tuple], float]) -> BoxTable:
    """Tabulate ``fn(inputs, outputs)`` into a box."""
    ins = [i for i, _ in parties]
    outs = [o for _, o in parties]
    p = np.zeros(tuple(ins) + tuple(outs))
    for i in itertools.product(*map(range, ins)):
        for o in itertools.product(*map(range, outs)):
            p[i + o] = fn(i, o)
    return BoxTable(tuple(parties), p)


def parity_box(inputs: Sequence[int], target: Callable[..., int], E: float = 1.0) -> BoxTable:
    """Binary-output box with P(o_0 + ... + o_m = target(inputs) mod 2) = (1+E)/2.

    Within each parity class the output strings are uniform, so every proper
    subset of outputs is uniformly distributed and the box is no-signaling.
    """
    if not -1.0 <= E <= 1.0:
        raise ValueError(f"correlation E={E} outside [-1, 1]")
    m = len(inputs)
    half = 2 ** (m - 1)

    def fn(i, o):
        hit = sum(o) % 2 == target(*i) % 2
        return ((1 + E) / 2 if hit else (1 - E) / 2) / half

    return from_function([(n_in, 2) for n_in in inputs], fn)


def pr_box() -> BoxTable:
    return parity_box((2, 2), lambda x, y: x * y)


def isotropic_box(E: float) -> BoxTable:
    return parity_box((2, 2), lambda x, y: x * y, E)


def sb_box(E: float = 1.0) -> BoxTable:
    """Three-party box with A1+A2+B = x1 x2 y + (1-x1)(1-x2)(1-y) at correlation E."""
    return parity_box((2, 2, 2), lambda x1, x2, y: x1 * x2 * y + (1 - x1) * (1 - x2) * (1 - y), E)


def shared_coin_box(n: int, k: int = 2) -> BoxTable:
    """Classical shared randomness: every party outputs the same uniform bit."""
    if n < 1:
        raise ValueError("need at least one receiver")
    parties = [(2 ** (k - 1), 2)] + [(k, 2)] * n
    return from_function(parties, lambda i, o: 0.5 if len(set(o)) == 1 else 0.0)


def broadcast_pr_box(n: int) -> BoxTable:
    """Uniform A with B_j = A + x y_j for every receiver; signaling for n >= 2."""
    if n < 2:
        raise ValueError("broadcast PR box needs n >= 2")

    def fn(i, o):
        x, ys = i[0], i[1:]
        a, bs = o[0], o[1:]
        return 0.5 if all(b == (a + x * y) % 2 for b, y in zip(bs, ys)) else 0.0

    return from_function([(2, 2)] * (n + 1), fn)


def quantum_box(rho: DensityMatrix, settings: Sequence[Sequence[Observable]]) -> BoxTable:
    """Measurement statistics P(o|i) = Tr(rho (x)_q Pi_q^{i_q,o_q}), outcome 0 = +1 eigenspace.

    ``settings[q][i]`` is party q's observable for input i; parties occupy
    consecutive qubits in order.
    """
    arities = []
    for q, obs in enumerate(settings):
        if not obs:
            raise ValueError(f"party {q} has no settings")
        ar = {o.arity for o in obs}
        if len(ar) != 1:
            raise ValueError(f"party {q} observables act on different numbers of qubits")
        arities.append(ar.pop())
    if sum(arities) != rho.num_qubits:
        raise ValueError(f"settings cover {sum(arities)} qubits, state has {rho.num_qubits}")
    proj = [[[o.projector(0), o.projector(1)] for o in obs] for obs in settings]
    ins = tuple(len(obs) for obs in settings)
    m = len(settings)
    p = np.zeros(ins + (2,) * m)
    for i in itertools.product(*map(range, ins)):
        for o in itertools.product((0, 1), repeat=m):
            op = kron(*(proj[q][i[q]][o[q]] for q in range(m))) if m > 1 else proj[0][i[0]][o[0]]
            p[i + o] = np.real(np.trace(rho.matrix @ op))
    p = np.clip(p, 0.0, None)
    return BoxTable(tuple((n_in, 2) for n_in in ins), p)


def mix(boxes: Sequence[BoxTable], weights: Sequence[float]) -> BoxTable:
    if not boxes or len(boxes) != len(weights):
        raise ValueError("need one weight per box")
    sig = boxes[0].parties
    if any(b.parties != sig for b in boxes):
        raise ValueError("party signatures differ")
    w = np.asarray(weights, dtype=float)
    if w.min() < 0 or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    return BoxTable(sig, sum(wi * b.probs for wi, b in zip(w, boxes)))


# -- checks -----------------------------------------------------------------


def no_signaling_check(box: BoxTable, tol: float = NS_TOL) -> NoSignalingReport:
    """For every proper party subset S, test that P(o_S | i) ignores the inputs outside S."""
    m = box.n_parties
    worst, offending = 0.0, None
    for size in range(1, m):
        for subset in itertools.combinations(range(m), size):
            comp = [q for q in range(m) if q not in subset]
            p = box.probs.sum(axis=tuple(m + q for q in comp))
            # axes now: all m inputs, then outputs of subset; bring complement inputs to the end
            p = np.moveaxis(p, comp, list(range(p.ndim - len(comp), p.ndim)))
            n_comp = int(np.prod([box.inputs[q] for q in comp]))
            flat = p.reshape(p.shape[: p.ndim - len(comp)] + (n_comp,))
            spread = flat.max(axis=-1) - flat.min(axis=-1)
            v = float(spread.max())
            if v > worst:
                worst = v
                idx = np.unravel_index(int(np.argmax(spread)), spread.shape)
                col = flat[idx]
                comp_shape = [box.inputs[q] for q in comp]
                ia = np.unravel_index(int(np.argmax(col)), comp_shape)
                ib = np.unravel_index(int(np.argmin(col)), comp_shape)
                offending = (subset, tuple(map(int, ia)), tuple(map(int, ib)))
    passed = worst <= tol
    return NoSignalingReport(passed, worst, None if passed else offending, tol)


def alpha_bits(index: int, k: int) -> tuple[int, ...]:
    """Alice's k-bit vector (0, alpha_1, ..., alpha_{k-1}); alpha_1 is the most significant bit of index."""
    return (0,) + tuple((index >> (k - 1 - i)) & 1 for i in range(1, k))


def alpha_index(bits: Sequence[int]) -> int:
    """Inverse of alpha_bits; bits[0] must be 0."""
    k = len(bits)
    return sum(int(b) << (k - 1 - i) for i, b in enumerate(bits) if i > 0)


def bias_xi(box: BoxTable, receiver: int, b_vector: Sequence[int]) -> float:
    """Bias P(A+B_j = alpha.b) - P(A+B_j = alpha.b + 1), averaged uniformly over alpha.

    ``b_vector`` is the one-hot k-vector selecting the addressed bit.  For k=2
    this is the usual XOR-game bias of a CHSH-type box.
    """
    b = [int(v) for v in b_vector]
    k = len(b)
    if k < 2 or sorted(b) != [0] * (k - 1) + [1]:
        raise ValueError(f"b_vector {b_vector!r} is not one-hot")
    if not 1 <= receiver < box.n_parties:
        raise ValueError(f"receiver index {receiver} out of range")
    if box.inputs[0] != 2 ** (k - 1) or box.inputs[receiver] != k:
        raise ValueError(
            f"alphabets {box.inputs[0]}/{box.inputs[receiver]} do not match k={k} (need {2 ** (k - 1)}/{k})"
        )
    if box.outputs[0] != 2 or box.outputs[receiver] != 2:
        raise ValueError("outputs must be binary")
    target = b.index(1)
    corr = box.marginal([0, receiver]).correlators()[:, target]
    signs = np.array([(-1) ** alpha_bits(a, k)[target] for a in range(2 ** (k - 1))])
    return float(np.mean(signs * corr))


def one_hot(l: int, k: int) -> tuple[int, ...]:
    return tuple(int(i == l) for i in range(k))
