"""Counter-based random streams.

Every stream is a Philox generator whose 128-bit key is derived by hashing
a root seed together with a tuple of string labels.  Distinct labels give
statistically independent streams, and a stream's output depends only on
(seed, labels) -- never on worker count, chunk order, or call history.
"""

from __future__ import annotations

import hashlib

import numpy as np


def philox_key(seed: int, *labels: str) -> int:
    material = str(int(seed)).encode() + b"\x1f" + b"\x1f".join(
        label.encode() for label in labels)
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:16], "little")


def philox_stream(seed: int, *labels: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *labels)))
