"""Named, independent random substreams derived from one run seed.

Each simulation component draws from its own stream (`tag:<id>`, `relay`,
...), so adding or removing a component never perturbs the draws any other
component sees. Derivation goes through SHA-256 rather than hash() to stay
stable across processes and platforms.
"""

from __future__ import annotations

import hashlib
import random


def substream_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RngStreams:
    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        if name not in self._streams:
            self._streams[name] = random.Random(substream_seed(self.seed, name))
        return self._streams[name]
