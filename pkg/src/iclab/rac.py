"""Exact execution of the (n,k) random access code protocols.

Every run enumerates the uniform database a, the independent uniform
questions b_1..b_n and all box outcomes, producing the joint distribution
of (a_0..a_{k-1}, b_1..b_n, c, beta_1..beta_n).  All information accounting
is read off that joint distribution.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .boxes import BoxTable, alpha_index
from .info import JointDistribution, _mi_batch, mutual_information

MAX_ENUMERATION = 2**26
IC_TOL = 1e-9
LEAK_TOL = 1e-9
QUAD_TOL = 1e-9

VARIANTS = ("additive", "sb_variant", "nested")


@dataclass(frozen=True)
class RacConfig:
    n: int
    k: int = 2
    variant: str = "additive"
    depth: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 2:
            raise ValueError("need n >= 1 and k >= 2")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "sb_variant" and self.k != 2:
            raise ValueError("the SB variant needs k = 2")
        if self.variant == "nested":
            if self.depth is None or 2**self.depth != self.k or self.n != 1:
                raise ValueError("nested variant needs n = 1 and k = 2**depth")


@dataclass(frozen=True, eq=False)
class InfoReport:
    n: int
    k: int
    mi: np.ndarray  # [receiver, l] = I(a_l : beta_j | b_j = l)
    xi: np.ndarray  # [receiver, l]
    leakage: np.ndarray  # [l] = I(a_l : c)
    joint: JointDistribution = field(repr=False)
    variant: str = "additive"

    @property
    def I_j(self) -> np.ndarray:
        return self.mi.sum(axis=1)

    @property
    def I(self) -> float:
        return float(self.I_j.sum())

    @property
    def quadratic_bounds(self) -> np.ndarray:
        return (self.xi**2).sum(axis=1)

    @property
    def ic_satisfied(self) -> bool:
        return self.I <= 1 + IC_TOL

    @property
    def leak_free(self) -> bool:
        return float(self.leakage.max()) <= LEAK_TOL

    @property
    def quadratic_bound_respected(self) -> list[bool]:
        return [bool(i <= q + QUAD_TOL) for i, q in zip(self.I_j, self.quadratic_bounds)]

    def to_dict(self) -> dict:
        """JSON form; receivers are numbered from 1 as in the protocol description."""
        pairs = [(j, l) for j in range(self.n) for l in range(self.k)]
        return {
            "variant": self.variant,
            "n": self.n,
            "k": self.k,
            "I": self.I,
            "I_j": [float(v) for v in self.I_j],
            "mi": {f"{j + 1},{l}": float(self.mi[j, l]) for j, l in pairs},
            "xi": {f"{j + 1},{l}": float(self.xi[j, l]) for j, l in pairs},
            "quadratic_bound": [float(v) for v in self.quadratic_bounds],
            "leakage": [float(v) for v in self.leakage],
            "flags": {
                "ic_satisfied": self.ic_satisfied,
                "leak_free": self.leak_free,
                "quadratic_bound_respected": self.quadratic_bound_respected,
            },
        }


def _names(n: int, k: int) -> tuple[str, ...]:
    return (
        tuple(f"a{l}" for l in range(k))
        + tuple(f"b{j}" for j in range(1, n + 1))
        + ("c",)
        + tuple(f"beta{j}" for j in range(1, n + 1))
    )


def report_from_joint(probs: np.ndarray, n: int, k: int, variant: str = "additive") -> InfoReport:
    """Information accounting from the protocol joint table (axes as in ``_names``)."""
    joint = JointDistribution(_names(n, k), probs)
    mi = np.zeros((n, k))
    xi = np.zeros((n, k))
    for j in range(1, n + 1):
        for l in range(k):
            cond = joint.condition(f"b{j}", l)
            mi[j - 1, l] = mutual_information(cond, f"a{l}", f"beta{j}")
            t = cond.marginal([f"a{l}", f"beta{j}"])
            xi[j - 1, l] = (t[0, 0] + t[1, 1]) - (t[0, 1] + t[1, 0])
    leakage = np.array([mutual_information(joint, f"a{l}", "c") for l in range(k)])
    return InfoReport(n, k, mi, xi, leakage, joint, variant)


def _check_size(n: int, k: int, outcomes: int) -> None:
    size = 2**k * k**n * outcomes
    if size > MAX_ENUMERATION:
        raise ValueError(f"enumeration size {size} exceeds 2^26")


def _outcome_grid(m: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=int)


def _run(box: BoxTable, n: int, k: int, alice_sites: int, encode, decode, variant: str) -> InfoReport:
    """Shared enumeration loop.

    ``encode(a, outs) -> (alice box inputs, c per outcome row)`` and
    ``decode(b_j, c, B_j) -> beta_j`` implement one protocol.
    """
    m = alice_sites + n
    grid = _outcome_grid(m)
    _check_size(n, k, len(grid))
    shape = (2,) * k + (k,) * n + (2,) * (1 + n)
    joint = np.zeros(shape)
    prior = 1.0 / (2**k * k**n)
    for a in itertools.product((0, 1), repeat=k):
        alice_in, c = encode(a, grid)
        for b in itertools.product(range(k), repeat=n):
            p = box.probs[tuple(alice_in) + b].reshape(-1)
            betas = [decode(b[j], c, grid[:, alice_sites + j]) for j in range(n)]
            np.add.at(joint[a + b], (c, *betas), p * prior)
    return report_from_joint(joint, n, k, variant)


def run_additive(box: BoxTable, config: RacConfig) -> InfoReport:
    """Alice feeds alpha_i = a_0 + a_i (i >= 1) into her box and announces
    c = a_0 + A; receiver j feeds b_j and answers beta_j = c + B_j."""
    n, k = config.n, config.k
    if box.n_parties != 1 + n:
        raise ValueError(f"box has {box.n_parties} parties, need {1 + n}")
    if box.inputs[0] != 2 ** (k - 1) or any(i != k for i in box.inputs[1:]):
        raise ValueError(f"alphabets {box.inputs} do not match k={k}")
    if any(o != 2 for o in box.outputs):
        raise ValueError("outputs must be binary")

    def encode(a, grid):
        alpha = [0] + [(a[0] + a[i]) % 2 for i in range(1, k)]
        return (alpha_index(alpha),), (a[0] + grid[:, 0]) % 2

    def decode(b, c, out):
        return (c + out) % 2

    return _run(box, n, k, 1, encode, decode, "additive")


def run_sb_variant(box: BoxTable, n: int) -> InfoReport:
    """Two Alice sites with inputs x1 = a_0, x2 = a_1; she announces
    c = A1 + A2 + a_0 + (1 - a_1) + a_0 (1 - a_1); receiver j answers
    beta_j = B_j + c + y_j."""
    if box.n_parties != 2 + n:
        raise ValueError(f"box has {box.n_parties} parties, need {2 + n}")
    if any(i != 2 for i in box.inputs) or any(o != 2 for o in box.outputs):
        raise ValueError("SB variant needs binary inputs and outputs everywhere")

    def encode(a, grid):
        a0, a1 = a
        c = (grid[:, 0] + grid[:, 1] + a0 + (1 - a1) + a0 * (1 - a1)) % 2
        return (a0, a1), c

    def decode(b, c, out):
        return (out + c + b) % 2

    return _run(box, n, 2, 2, encode, decode, "sb_variant")


def _xor_tensor() -> np.ndarray:
    x = np.zeros((2, 2, 2))
    for u, v in itertools.product((0, 1), repeat=2):
        x[u, v, u ^ v] = 1.0
    return x


def run_nested(edge_box: BoxTable, p: int) -> InfoReport:
    """Single-receiver (1, 2^p) code built from a depth-p binary tree of edge boxes.

    Level-l box i takes Alice input x = d_{2i} + d_{2i+1} from the two partial
    bits below it and she keeps d_{2i} + A as the partial bit passed up; the
    root partial bit is announced as c.  The receiver walks from the root to
    leaf b, feeding the branch bit (0 = left, 1 = right) into each box on the
    path, and answers c plus the XOR of those outputs.  Boxes off the path get
    receiver input 0.  Computed exactly by contracting the tree level by level.
    """
    if not 1 <= p <= 3:
        raise ValueError("depth p must be in 1..3")
    if edge_box.parties != ((2, 2), (2, 2)):
        raise ValueError("edge box must be bipartite with binary inputs and outputs")
    k = 2**p
    xor = _xor_tensor()
    # K[dl, dr, y, A, B] = P(A, B | x = dl + dr, y)
    K = np.array([[edge_box.probs[dl ^ dr] for dr in (0, 1)] for dl in (0, 1)])
    # F[data, target, d, s]: subtree with `data` leaf bits (first leaf most significant),
    # receiver heading for `target`; d = partial bit, s = XOR of receiver outputs on the path.
    F = np.zeros((2, 1, 2, 2))
    F[0, 0, 0, 0] = F[1, 0, 1, 0] = 1.0
    # G[data, d]: Alice's partial bit when the receiver does not enter the subtree
    G = np.eye(2)
    for _ in range(p):
        D = F.shape[0]
        left = np.einsum("LtaS,Rb,abAB,aAn,SBs->LRtns", F, G, K[:, :, 0], xor, xor)
        right = np.einsum("La,RtbS,abAB,aAn,SBs->LRtns", G, F, K[:, :, 1], xor, xor)
        F = np.concatenate([left, right], axis=2).reshape(D * D, -1, 2, 2)
        G = np.einsum("La,Rb,abAB,aAn->LRn", G, G, K[:, :, 0], xor).reshape(D * D, 2)
    # F[data, b, c, s] with beta = c + s
    joint = F.copy()
    joint[:, :, 1, :] = F[:, :, 1, ::-1]
    joint = joint.reshape((2,) * k + (k, 2, 2)) / (2**k * k)
    return report_from_joint(joint, 1, k, "nested")


def leakage_check(report: InfoReport, tol: float = LEAK_TOL) -> tuple[bool, list[float]]:
    """True iff the broadcast bit carries at most ``tol`` bits about every a_l."""
    values = [float(v) for v in report.leakage]
    return max(values) <= tol, values


def quadratic_bound_report(report: InfoReport) -> list[dict]:
    """Per receiver: I_j against sum_l xi_{j,l}^2 (reported, not enforced)."""
    return [
        {"receiver": j + 1, "I_j": float(i), "sum_xi_sq": float(q), "respected": ok}
        for j, (i, q, ok) in enumerate(zip(report.I_j, report.quadratic_bounds, report.quadratic_bound_respected))
    ]


def joint_from_strategy(n: int, alice, decoders, shared_bits: int = 0) -> np.ndarray:
    """Protocol joint table (k = 2) of a deterministic classical strategy.

    ``alice[a0, a1, r] -> c`` and ``decoders[j][b, c, r] -> beta_j`` with r the
    uniform shared random value (absent when ``shared_bits`` is 0).
    """
    R = 2**shared_bits
    joint = np.zeros((2, 2) + (2,) * n + (2,) + (2,) * n)
    w = 1.0 / (4 * 2**n * R)
    for a0, a1, r in itertools.product((0, 1), (0, 1), range(R)):
        c = int(alice[a0, a1, r])
        for b in itertools.product((0, 1), repeat=n):
            betas = tuple(int(decoders[j][b[j], c, r]) for j in range(n))
            joint[(a0, a1) + b + (c,) + betas] += w
    return joint


def classical_strategy_search(n: int, k: int = 2, shared_randomness_bits: int = 0) -> dict:
    """Best I over all deterministic classical strategies with a leak-free broadcast.

    Alice's bit is c = f(a, r) and receiver j answers beta_j = g_j(b_j, c, r),
    r being shared uniform randomness.  For fixed f the receivers'
    contributions are independent, so the maximum over (f, g_1..g_n) is
    max_f n * max_g I_1(f, g); every f and every g is enumerated.
    """
    if k != 2 or not 1 <= n <= 3 or not 0 <= shared_randomness_bits <= 1:
        raise ValueError("search limited to k = 2, n <= 3 and at most one shared bit")
    R = 2**shared_randomness_bits
    # a-index = 2*a0 + a1; f has 4R entries, g has 2*2*R entries
    n_f = 2 ** (4 * R)
    n_g = 2 ** (4 * R)
    g_tables = ((np.arange(n_g)[:, None] >> np.arange(4 * R)) & 1).reshape(n_g, 2, 2, R)  # [g, b, c, r]
    a_bits = np.array([[a >> 1, a & 1] for a in range(4)])
    best = {"I": -1.0}
    for fi in range(n_f):
        f = ((fi >> np.arange(4 * R)) & 1).reshape(4, R)  # [a, r]
        # leakage I(a_l : c) with a, r uniform
        leak = []
        for l in range(2):
            t = np.zeros((2, 2))
            for a in range(4):
                for r in range(R):
                    t[a_bits[a, l], f[a, r]] += 1.0 / (4 * R)
            leak.append(float(_mi_batch(t)))
        if max(leak) > LEAK_TOL:
            continue
        # per-g information: sum_l I(a_l : g(l, c, r))
        info = np.zeros(n_g)
        for l in range(2):
            t = np.zeros((n_g, 2, 2))
            for a in range(4):
                for r in range(R):
                    beta = g_tables[:, l, f[a, r], r]
                    t[np.arange(n_g), a_bits[a, l], beta] += 1.0 / (4 * R)
            info += _mi_batch(t)
        gi = int(np.argmax(info))
        total = n * float(info[gi])
        if total > best["I"] + 1e-12:
            best = {
                "I": total,
                "I_j": float(info[gi]),
                "alice": f.reshape(2, 2, R).tolist(),
                "decoder": g_tables[gi].tolist(),
            }
    best.update({"n": n, "k": k, "shared_randomness_bits": shared_randomness_bits})
    return best
