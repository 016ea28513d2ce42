"""Named sub-stream seed derivation.

All randomness in a run flows from one master seed. Each consumer (gps,
lidar, augment, split, ...) derives its own stream so enabling one consumer
never shifts another's draws.
"""

import hashlib
import random


def derive_seed(master_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream_rng(master_seed: int, name: str) -> random.Random:
    return random.Random(derive_seed(master_seed, name))
