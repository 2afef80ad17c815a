"""Deterministic random-number streams.

A :class:`RngStream` names a reproducible PCG64 stream by ``(seed,
stream_id)`` plus an optional derivation path.  The same identifier always
yields a bit-identical stream, independent of platform and of how many
other streams exist.  Derived child streams never collide with each other
or with their parent because the derivation path is folded into the
seed material rather than added to ``stream_id``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Identifier of a reproducible random stream.

    ``seed`` selects the experiment, ``stream_id`` the top-level stream
    within it.  ``path`` records hierarchical derivation (see
    :meth:`child`) and is normally not set by hand.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", self.seed & _MASK64)
        object.__setattr__(self, "stream_id", self.stream_id & _MASK64)
        object.__setattr__(self, "path", tuple(int(p) & _MASK64 for p in self.path))

    def child(self, *indices: int) -> "RngStream":
        """Derive a sub-stream; distinct index tuples give independent streams."""
        return RngStream(self.seed, self.stream_id, self.path + indices)

    def children(self, n: int) -> list["RngStream"]:
        return [self.child(k) for k in range(n)]

    def seed_sequence(self) -> np.random.SeedSequence:
        # SeedSequence ignores trailing zero entropy words, which would make
        # ``child(0)`` replay its parent.  Prefixing the path length pins the
        # layout, so distinct identifiers always hash to distinct pools.
        entropy = (self.seed, self.stream_id, len(self.path), *self.path)
        return np.random.SeedSequence(entropy)

    def bit_generator(self) -> np.random.PCG64:
        return np.random.PCG64(self.seed_sequence())

    def generator(self) -> np.random.Generator:
        return np.random.Generator(self.bit_generator())

    def label(self) -> str:
        tail = "".join(f".{p}" for p in self.path)
        return f"{self.seed}/{self.stream_id}{tail}"
