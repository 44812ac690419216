"""
Scenario configuration, message hashing and channel sampling.

Hash wire contract
------------------
Base station and devices must agree bit-exactly on f: {0,1}^B -> C^L. The
expansion is a counter-based SplitMix64 stream keyed by the message:

    GOLDEN = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31                                   (all mod 2**64)

    words  = message bits split into 64-bit chunks, each chunk read as a
             big-endian unsigned integer (the last chunk may be shorter)
    key    = mix64(B * GOLDEN)
    key    = mix64((key ^ word) * GOLDEN)        for each word, in order
    u_k    = mix64(key + (k + 1) * GOLDEN)       k = 0 .. L-1
    phi_k  = 2*pi * (u_k >> 11) * 2**-53         (u_k / 2**64 truncated to 53 bits)
    a_k    = alpha * exp(j * phi_k)

Phases for hash length L are a prefix of the phases for any longer length.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import MessageSpaceExhausted

logger = logging.getLogger(__name__)

GOLDEN = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB

_GOLDEN = np.uint64(GOLDEN)
_MIX_1 = np.uint64(MIX_1)
_MIX_2 = np.uint64(MIX_2)
_PHASE_SCALE = 2.0 * math.pi * 2.0**-53

DEFAULT_MESSAGE_BITS = 16
MAX_DRAWS_PER_USER = 100


class SystemConfig(BaseModel):
    """
    All scenario parameters for one HashBeam configuration.

    num_undecoded defaults to num_decoded when omitted. noise_var is the
    per-complex-dimension receiver noise variance; hash_mag is alpha.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_antennas: int = Field(ge=1)
    hash_len: int = Field(ge=1)
    num_decoded: int = Field(ge=1)
    num_undecoded: int = Field(ge=0)
    message_bits: int = Field(default=DEFAULT_MESSAGE_BITS, ge=1)
    noise_var: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    hash_mag: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    master_seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="before")
    @classmethod
    def _default_undecoded(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("num_undecoded") is None:
            data = {**data, "num_undecoded": data.get("num_decoded")}
        return data

    @property
    def num_active(self) -> int:
        return self.num_decoded + self.num_undecoded

    @property
    def reg(self) -> float:
        """LMMSE regularizer alpha^2 sigma^2."""
        return self.hash_mag**2 * self.noise_var

    @property
    def hash_len_floor(self) -> int:
        """ceil(K / M), the smallest L for which S^H S can have full rank."""
        return -(-self.num_decoded // self.num_antennas)

    @property
    def is_noiseless(self) -> bool:
        return self.noise_var == 0.0

    def with_updates(self, **changes: Any) -> "SystemConfig":
        """Validated copy with some fields replaced."""
        return SystemConfig.model_validate({**self.model_dump(), **changes})


class Message(BaseModel):
    """A B-bit message; B is the length of `bits`."""

    model_config = ConfigDict(frozen=True)

    bits: tuple[int, ...] = Field(min_length=1)

    @field_validator("bits")
    @classmethod
    def _binary(cls, bits: tuple[int, ...]) -> tuple[int, ...]:
        if any(b not in (0, 1) for b in bits):
            raise ValueError("message bits must be 0 or 1")
        return bits

    @classmethod
    def from_int(cls, value: int, num_bits: int) -> "Message":
        if value < 0 or value >= 2**num_bits:
            raise ValueError(f"{value} does not fit in {num_bits} bits")
        return cls(bits=tuple((value >> (num_bits - 1 - i)) & 1 for i in range(num_bits)))

    @property
    def num_bits(self) -> int:
        return len(self.bits)

    def words(self) -> np.ndarray:
        return pack_bits(np.asarray(self.bits, dtype=np.uint8)[None, :])[0]


@dataclass(frozen=True)
class HashVector:
    entries: np.ndarray

    def __len__(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ChannelVector:
    entries: np.ndarray

    def __len__(self) -> int:
        return self.entries.shape[0]


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """
    Pack an (n, B) array of 0/1 into (n, ceil(B/64)) uint64 words.

    Each 64-bit chunk of a row is read as a big-endian integer.
    """
    num_rows, num_bits = bits.shape
    num_words = -(-num_bits // 64)
    words = np.zeros((num_rows, num_words), dtype=np.uint64)
    for w in range(num_words):
        chunk = bits[:, 64 * w : 64 * (w + 1)].astype(np.uint64)
        width = chunk.shape[1]
        shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
        # disjoint bit positions, so OR-reduce equals the sum
        words[:, w] = np.bitwise_or.reduce(chunk << shifts[None, :], axis=1)
    return words


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX_1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX_2
    return z ^ (z >> np.uint64(31))


def message_keys(words: np.ndarray, num_bits: int) -> np.ndarray:
    """Fold packed message words into one 64-bit stream key per message."""
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    with np.errstate(over="ignore"):
        keys = _mix64(np.full(words.shape[0], num_bits, dtype=np.uint64) * _GOLDEN)
        for w in range(words.shape[1]):
            keys = _mix64((keys ^ words[:, w]) * _GOLDEN)
    return keys


def phases_from_keys(keys: np.ndarray, hash_len: int) -> np.ndarray:
    """(n, L) phases in [0, 2*pi) for n stream keys."""
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    with np.errstate(over="ignore"):
        counters = np.arange(1, hash_len + 1, dtype=np.uint64) * _GOLDEN
        u = _mix64(keys[:, None] + counters[None, :])
    return (u >> np.uint64(11)).astype(np.float64) * _PHASE_SCALE


def derive_phases(message: Message, hash_len: int) -> list[float]:
    keys = message_keys(message.words()[None, :], message.num_bits)
    return phases_from_keys(keys, hash_len)[0].tolist()


def hash_message(message: Message, hash_len: int, hash_mag: float) -> HashVector:
    phases = np.asarray(derive_phases(message, hash_len))
    return HashVector(entries=hash_mag * np.exp(1j * phases))


def hash_matrix(
    words: np.ndarray, num_bits: int, hash_len: int, hash_mag: float
) -> np.ndarray:
    """Hashes of n packed messages as the columns of an (L, n) matrix."""
    phases = phases_from_keys(message_keys(words, num_bits), hash_len)
    return hash_mag * np.exp(1j * phases.T)


def sample_channel(rng: np.random.Generator, num_antennas: int) -> ChannelVector:
    return ChannelVector(entries=sample_channels(rng, num_antennas, 1)[:, 0])


def sample_channels(
    rng: np.random.Generator, num_antennas: int, num_users: int
) -> np.ndarray:
    """(M, n) matrix of i.i.d. CN(0, 1) entries, one column per user."""
    real = rng.standard_normal((num_users, num_antennas))
    imag = rng.standard_normal((num_users, num_antennas))
    return ((real + 1j * imag) * math.sqrt(0.5)).T


@dataclass(frozen=True)
class Scenario:
    """
    One realization of the active-user population.

    Users 0..K-1 are decoded, K..K+K_u-1 are undecoded. Messages are stored
    packed (see `pack_bits`), channels as the columns of an (M, K_a) matrix.
    """

    config: SystemConfig
    message_words: np.ndarray
    channels: np.ndarray

    @property
    def num_decoded(self) -> int:
        return self.config.num_decoded

    def message(self, user: int) -> Message:
        num_bits = self.config.message_bits
        value = 0
        for w, word in enumerate(self.message_words[user]):
            width = min(64, num_bits - 64 * w)
            value = (value << width) | int(word)
        return Message.from_int(value, num_bits)

    def _pairs(self, users: range) -> list[tuple[Message, ChannelVector]]:
        return [
            (self.message(u), ChannelVector(entries=self.channels[:, u].copy()))
            for u in users
        ]

    @property
    def decoded(self) -> list[tuple[Message, ChannelVector]]:
        return self._pairs(range(self.num_decoded))

    @property
    def undecoded(self) -> list[tuple[Message, ChannelVector]]:
        return self._pairs(range(self.num_decoded, self.config.num_active))

    def hashes(self, hash_len: int | None = None, hash_mag: float | None = None) -> np.ndarray:
        """(L, K_a) hash matrix for all active users."""
        return hash_matrix(
            self.message_words,
            self.config.message_bits,
            hash_len or self.config.hash_len,
            self.config.hash_mag if hash_mag is None else hash_mag,
        )


def draw_distinct_messages(
    rng: np.random.Generator, num_messages: int, num_bits: int
) -> np.ndarray:
    """
    Draw distinct uniform B-bit messages, packed.

    Colliding rows are re-drawn; after MAX_DRAWS_PER_USER * n re-draws the
    message space is treated as exhausted.
    """
    if num_bits < 63 and num_messages > 2**num_bits:
        raise MessageSpaceExhausted(
            f"{num_messages} distinct messages requested but only {2**num_bits} exist for B={num_bits}"
        )

    words = pack_bits(rng.integers(0, 2, size=(num_messages, num_bits), dtype=np.uint8))
    budget = MAX_DRAWS_PER_USER * num_messages
    while True:
        _, first = np.unique(words, axis=0, return_index=True)
        duplicates = np.setdiff1d(np.arange(num_messages), first)
        if duplicates.size == 0:
            return words
        if duplicates.size > budget:
            raise MessageSpaceExhausted(
                f"could not draw {num_messages} distinct {num_bits}-bit messages"
            )
        budget -= duplicates.size
        logger.debug("re-drawing %d colliding messages", duplicates.size)
        words[duplicates] = pack_bits(
            rng.integers(0, 2, size=(duplicates.size, num_bits), dtype=np.uint8)
        )


def build_scenario(config: SystemConfig, rng: np.random.Generator) -> Scenario:
    words = draw_distinct_messages(rng, config.num_active, config.message_bits)
    channels = sample_channels(rng, config.num_antennas, config.num_active)
    return Scenario(config=config, message_words=words, channels=channels)
