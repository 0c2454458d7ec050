"""Treatment assignment and sampling for the four designs.

All draws go through an explicit :class:`RngStream`; there is no module level
random state. :func:`enumerate_assignments` walks the full support of a design
and serves as an exact oracle for small populations.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np
from numpy.typing import NDArray

from .errors import BadPlan, TooLarge

Design = Literal["CRE", "Stratified", "Survey", "Cluster"]
DESIGNS: tuple[Design, ...] = ("CRE", "Stratified", "Survey", "Cluster")

ENUMERATION_GUARD = 10**6


def stable_stream_id(*parts) -> int:
    """64-bit stream id from arbitrary printable parts, stable across runs and platforms."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """A ``(seed, stream_id)`` pair naming an independent random stream."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *parts) -> "RngStream":
        return RngStream(self.seed, stable_stream_id(self.stream_id, *parts))


@dataclass(frozen=True)
class AssignmentPlan:
    """Design parameters; build with the ``cre``/``stratified``/``survey``/``cluster`` constructors."""

    design: Design
    n: int
    n1: int
    stratum_sizes: tuple[int, ...] = ()
    stratum_treated: tuple[int, ...] = ()
    N: int | None = None
    m: int | None = None
    m1: int | None = None
    labels: NDArray[np.int64] | None = field(default=None, compare=False, repr=False)

    @classmethod
    def cre(cls, n: int, n1: int) -> "AssignmentPlan":
        return cls("CRE", int(n), int(n1)).validate()

    @classmethod
    def stratified(cls, sizes, treated, labels=None) -> "AssignmentPlan":
        """Stratum ``h`` has ``sizes[h]`` units of which ``treated[h]`` are treated.

        ``labels`` maps each unit to its stratum index; by default units are laid
        out in contiguous blocks.
        """
        sizes = tuple(int(s) for s in sizes)
        treated = tuple(int(t) for t in treated)
        if labels is None:
            labels = np.repeat(np.arange(len(sizes)), sizes)
        else:
            labels = np.asarray(labels, dtype=np.int64)
        plan = cls("Stratified", sum(sizes), sum(treated), sizes, treated, labels=labels)
        return plan.validate()

    @classmethod
    def survey(cls, N: int, n: int, n1: int) -> "AssignmentPlan":
        return cls("Survey", int(n), int(n1), N=int(N)).validate()

    @classmethod
    def cluster(cls, m: int, m1: int) -> "AssignmentPlan":
        return cls("Cluster", int(m), int(m1), m=int(m), m1=int(m1)).validate()

    def validate(self) -> "AssignmentPlan":
        if self.design == "CRE":
            if not 1 <= self.n1 <= self.n - 1:
                raise BadPlan(f"CRE needs 1 <= n1 <= n-1, got n={self.n}, n1={self.n1}")
        elif self.design == "Stratified":
            if len(self.stratum_sizes) == 0 or len(self.stratum_sizes) != len(self.stratum_treated):
                raise BadPlan("stratum sizes and treated counts must be non-empty and aligned")
            for h, (nh, nh1) in enumerate(zip(self.stratum_sizes, self.stratum_treated)):
                if not 2 <= nh1 <= nh - 2:
                    raise BadPlan(f"stratum {h}: need 2 <= n_h1 <= n_h-2, got n_h={nh}, n_h1={nh1}")
            counts = np.bincount(self.labels, minlength=len(self.stratum_sizes))
            if self.labels.shape[0] != self.n or tuple(counts) != self.stratum_sizes:
                raise BadPlan("stratum labels disagree with stratum sizes")
        elif self.design == "Survey":
            if self.N is None or not 1 <= self.n <= self.N:
                raise BadPlan(f"Survey needs n <= N, got N={self.N}, n={self.n}")
            if not 1 <= self.n1 <= self.n - 1:
                raise BadPlan(f"Survey needs 1 <= n1 <= n-1, got n={self.n}, n1={self.n1}")
        elif self.design == "Cluster":
            if not 1 <= self.m1 <= self.m - 1:
                raise BadPlan(f"Cluster needs 1 <= m1 <= m-1, got m={self.m}, m1={self.m1}")
        else:
            raise BadPlan(f"unknown design {self.design!r}")
        return self

    @property
    def f(self) -> float:
        return self.n / self.N if self.design == "Survey" else 1.0

    def support_size(self) -> int:
        if self.design == "CRE":
            return math.comb(self.n, self.n1)
        if self.design == "Stratified":
            return math.prod(math.comb(a, b) for a, b in zip(self.stratum_sizes, self.stratum_treated))
        if self.design == "Survey":
            return math.comb(self.N, self.n) * math.comb(self.n, self.n1)
        return math.comb(self.m, self.m1)


def _require(plan: AssignmentPlan, design: Design) -> None:
    if plan.design != design:
        raise BadPlan(f"expected a {design} plan, got {plan.design}")


def _complete(n: int, n1: int, gen: np.random.Generator) -> NDArray[np.int64]:
    z = np.zeros(n, dtype=np.int64)
    z[gen.permutation(n)[:n1]] = 1
    return z


def draw_cre(plan: AssignmentPlan, rng: RngStream | np.random.Generator) -> NDArray[np.int64]:
    _require(plan, "CRE")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _complete(plan.n, plan.n1, gen)


def draw_stratified(plan: AssignmentPlan, rng: RngStream | np.random.Generator) -> NDArray[np.int64]:
    """Independent complete randomization inside every stratum."""
    _require(plan, "Stratified")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    z = np.zeros(plan.n, dtype=np.int64)
    for h, nh1 in enumerate(plan.stratum_treated):
        idx = np.flatnonzero(plan.labels == h)
        z[idx] = _complete(idx.shape[0], nh1, gen)
    return z


def draw_survey(plan: AssignmentPlan, rng: RngStream | np.random.Generator):
    """Simple random sample of ``n`` out of ``N``, then complete randomization of the sample.

    Returns ``(R, Z)`` where ``R`` has length ``N`` and ``Z`` is defined only on
    sampled units, listed in increasing population index.
    """
    _require(plan, "Survey")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    R = np.zeros(plan.N, dtype=np.int64)
    R[gen.choice(plan.N, size=plan.n, replace=False)] = 1
    return R, _complete(plan.n, plan.n1, gen)


def draw_cluster(plan: AssignmentPlan, rng: RngStream | np.random.Generator) -> NDArray[np.int64]:
    """Complete randomization of ``m1`` out of ``m`` clusters."""
    _require(plan, "Cluster")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _complete(plan.m, plan.m1, gen)


def draw(plan: AssignmentPlan, rng):
    return {"CRE": draw_cre, "Stratified": draw_stratified, "Survey": draw_survey, "Cluster": draw_cluster}[
        plan.design
    ](plan, rng)


def _combos(n: int, k: int) -> Iterator[NDArray[np.int64]]:
    for chosen in itertools.combinations(range(n), k):
        z = np.zeros(n, dtype=np.int64)
        z[list(chosen)] = 1
        yield z


def enumerate_assignments(plan: AssignmentPlan, guard: int = ENUMERATION_GUARD):
    """Yield every assignment in the support of ``plan`` exactly once.

    Survey plans yield ``(R, Z)`` pairs. Raises :class:`TooLarge` when the
    support exceeds ``guard``.
    """
    total = plan.support_size()
    if total > guard:
        raise TooLarge(f"{total} assignments exceed the enumeration guard of {guard}")
    if plan.design == "CRE":
        yield from _combos(plan.n, plan.n1)
    elif plan.design == "Cluster":
        yield from _combos(plan.m, plan.m1)
    elif plan.design == "Stratified":
        blocks = [np.flatnonzero(plan.labels == h) for h in range(len(plan.stratum_sizes))]
        per = [list(_combos(len(b), t)) for b, t in zip(blocks, plan.stratum_treated)]
        for combo in itertools.product(*per):
            z = np.zeros(plan.n, dtype=np.int64)
            for idx, zh in zip(blocks, combo):
                z[idx] = zh
            yield z
    else:
        for R in _combos(plan.N, plan.n):
            for Z in _combos(plan.n, plan.n1):
                yield R, Z
