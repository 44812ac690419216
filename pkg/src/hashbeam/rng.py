"""
Seed-stream derivation.

Every random draw in the simulator comes from a generator derived from the
master seed plus a tuple of counters (purpose, point keys, trial index, stage).
Because a generator is a pure function of that tuple, results do not depend on
the order in which trials run or on how many threads run them.
"""

from enum import IntEnum

import numpy as np

from .sim_types import NOISELESS, SnrLevel


class Purpose(IntEnum):
    CALIBRATE_SNR = 1
    CALIBRATE_STATISTICS = 2
    EVALUATE = 3
    VERIFY_SNR = 4


class Stage(IntEnum):
    SCENARIO = 0
    NOISE = 1


def snr_key(snr_db: SnrLevel) -> int:
    """Non-negative integer key for an SNR level (millidecibel resolution)."""
    if snr_db == NOISELESS:
        return 0
    return 1 + int(round((float(snr_db) + 1000.0) * 1000.0))


class RandomStreams:
    """Factory of independent generators keyed by counters under one master seed."""

    def __init__(self, master_seed: int, purpose: Purpose, *keys: int):
        if master_seed < 0 or master_seed >= 2**64:
            raise ValueError(f"master seed must be a 64-bit unsigned integer: {master_seed}")
        self.master_seed = int(master_seed)
        self.purpose = purpose
        self.keys = tuple(int(k) for k in keys)

    def child(self, *keys: int) -> "RandomStreams":
        return RandomStreams(self.master_seed, self.purpose, *self.keys, *keys)

    def generator(self, *index: int) -> np.random.Generator:
        spawn_key = (int(self.purpose), *self.keys, *(int(i) for i in index))
        return np.random.default_rng(
            np.random.SeedSequence(self.master_seed, spawn_key=spawn_key)
        )

    def trial_generators(
        self, trial_index: int
    ) -> tuple[np.random.Generator, np.random.Generator]:
        """Scenario and noise generators for one trial."""
        return (
            self.generator(trial_index, Stage.SCENARIO),
            self.generator(trial_index, Stage.NOISE),
        )

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.master_seed}, purpose={self.purpose.name}, keys={self.keys})"
