"""Named, reproducible random streams derived from one master seed."""
import hashlib

import numpy as np


def _label_key(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """PCG64 generator keyed on ``(seed, label)``; identical pairs give identical sequences."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_label_key(label))
    return np.random.Generator(np.random.PCG64(ss))


def get_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def set_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state
