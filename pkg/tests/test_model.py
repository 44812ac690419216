import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import kstest

from hashbeam.errors import MessageSpaceExhausted
from hashbeam.model import (
    GOLDEN,
    MIX_1,
    MIX_2,
    Message,
    SystemConfig,
    build_scenario,
    derive_phases,
    draw_distinct_messages,
    hash_matrix,
    hash_message,
    message_keys,
    pack_bits,
    phases_from_keys,
    sample_channels,
)

MASK = 2**64 - 1


def reference_mix64(z: int) -> int:
    z ^= z >> 30
    z = (z * MIX_1) & MASK
    z ^= z >> 27
    z = (z * MIX_2) & MASK
    return z ^ (z >> 31)


def reference_phases(bits: tuple[int, ...], hash_len: int) -> list[float]:
    """Plain-integer implementation of the hash wire contract."""
    words = []
    for start in range(0, len(bits), 64):
        value = 0
        for b in bits[start : start + 64]:
            value = (value << 1) | b
        words.append(value)

    key = reference_mix64((len(bits) * GOLDEN) & MASK)
    for word in words:
        key = reference_mix64(((key ^ word) * GOLDEN) & MASK)
    phases = []
    for k in range(hash_len):
        u = reference_mix64((key + (k + 1) * GOLDEN) & MASK)
        phases.append(2 * math.pi * (u >> 11) * 2.0**-53)
    return phases


def random_message(rng, num_bits: int) -> Message:
    return Message(bits=tuple(int(b) for b in rng.integers(0, 2, num_bits)))


@pytest.mark.parametrize("num_bits", [1, 16, 64, 70, 130])
def test_derive_phases_matches_reference(rng, num_bits):
    for _ in range(5):
        message = random_message(rng, num_bits)
        assert derive_phases(message, 12) == reference_phases(message.bits, 12)


def test_derive_phases_is_deterministic_and_in_range(rng):
    message = random_message(rng, 16)
    first = derive_phases(message, 8)
    assert first == derive_phases(message, 8)
    assert all(0.0 <= p < 2 * math.pi for p in first)


def test_shorter_hash_is_prefix_of_longer(rng):
    message = random_message(rng, 16)
    assert derive_phases(message, 4) == derive_phases(message, 9)[:4]


def test_single_bit_flips_never_collide(rng):
    collisions = 0
    for _ in range(1000):
        message = random_message(rng, 16)
        flip = int(rng.integers(16))
        bits = list(message.bits)
        bits[flip] ^= 1
        if derive_phases(message, 8) == derive_phases(Message(bits=tuple(bits)), 8):
            collisions += 1
    assert collisions == 0


def test_pooled_phases_are_uniform():
    words = pack_bits(
        np.array([[(v >> (15 - i)) & 1 for i in range(16)] for v in range(50_000)], dtype=np.uint8)
    )
    phases = phases_from_keys(message_keys(words, 16), 2).ravel()
    assert phases.size == 100_000
    assert kstest(phases / (2 * math.pi), "uniform").pvalue > 0.01


def test_hash_message_has_constant_magnitude(rng):
    message = random_message(rng, 16)
    a = hash_message(message, 32, 2.5)
    assert len(a) == 32
    np.testing.assert_allclose(np.abs(a.entries), 2.5, rtol=1e-12)
    np.testing.assert_array_equal(a.entries, hash_message(message, 32, 2.5).entries)


def test_hash_matrix_columns_match_hash_message(rng):
    messages = [random_message(rng, 20) for _ in range(3)]
    words = np.stack([m.words() for m in messages])
    A = hash_matrix(words, 20, 6, 0.7)
    assert A.shape == (6, 3)
    for k, message in enumerate(messages):
        np.testing.assert_array_equal(A[:, k], hash_message(message, 6, 0.7).entries)


def test_message_from_int():
    message = Message.from_int(5, 4)
    assert message.bits == (0, 1, 0, 1)
    assert message.num_bits == 4
    with pytest.raises(ValueError):
        Message.from_int(16, 4)
    with pytest.raises(ValidationError):
        Message(bits=(0, 2, 1))


def test_config_defaults_undecoded_to_decoded():
    config = SystemConfig(num_antennas=4, hash_len=2, num_decoded=7)
    assert config.num_undecoded == 7
    assert config.num_active == 14
    assert config.hash_len_floor == 2
    assert config.is_noiseless

    explicit = SystemConfig(num_antennas=4, hash_len=2, num_decoded=7, num_undecoded=0)
    assert explicit.num_active == 7


@pytest.mark.parametrize(
    "changes",
    [
        {"num_antennas": 0},
        {"hash_len": 0},
        {"num_decoded": 0},
        {"num_undecoded": -1},
        {"noise_var": -0.1},
        {"hash_mag": 0.0},
        {"message_bits": 0},
        {"master_seed": 2**64},
        {"unknown": 1},
    ],
)
def test_config_rejects_invalid_values(changes):
    data = {"num_antennas": 2, "hash_len": 2, "num_decoded": 2, **changes}
    with pytest.raises(ValidationError):
        SystemConfig(**data)


def test_config_reg_tracks_alpha_and_noise():
    config = SystemConfig(num_antennas=2, hash_len=2, num_decoded=2, noise_var=0.5, hash_mag=2.0)
    assert config.reg == pytest.approx(2.0)
    assert config.with_updates(hash_mag=1.0).reg == pytest.approx(0.5)


def test_channel_moments(rng):
    H = sample_channels(rng, 4, 25_000)
    assert H.shape == (4, 25_000)
    assert abs(H.mean()) < 0.01
    assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.02)
    assert np.var(H.real) == pytest.approx(0.5, abs=0.01)
    assert abs(np.mean(H * H)) < 0.01


def test_scenario_messages_are_distinct(rng):
    config = SystemConfig(num_antennas=3, hash_len=2, num_decoded=40, num_undecoded=30, message_bits=8)
    scenario = build_scenario(config, rng)
    assert len(scenario.decoded) == 40
    assert len(scenario.undecoded) == 30
    assert scenario.channels.shape == (3, 70)
    values = {scenario.message(u).bits for u in range(70)}
    assert len(values) == 70


def test_whole_message_space_can_be_drawn(rng):
    words = draw_distinct_messages(rng, 8, 3)
    assert sorted(int(w) for w in words[:, 0]) == list(range(8))


def test_message_space_exhausted(rng):
    config = SystemConfig(num_antennas=1, hash_len=1, num_decoded=3, num_undecoded=2, message_bits=2)
    with pytest.raises(MessageSpaceExhausted):
        build_scenario(config, rng)


def test_scenario_hashes_use_config(rng):
    config = SystemConfig(num_antennas=2, hash_len=5, num_decoded=3, hash_mag=1.5)
    scenario = build_scenario(config, rng)
    A = scenario.hashes()
    assert A.shape == (5, 6)
    np.testing.assert_allclose(np.abs(A), 1.5, rtol=1e-12)
    message, _ = scenario.decoded[1]
    np.testing.assert_array_equal(A[:, 1], hash_message(message, 5, 1.5).entries)
