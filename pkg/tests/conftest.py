import logging
import os

import numpy as np
import pytest

from hashbeam.calibrate import OperatingPoint
from hashbeam.detect import DiscriminantModel
from hashbeam.model import SystemConfig
from hashbeam.settings import HashBeamSettings

ENV_KEYS = ("PUBLISH_TO_REDIS", "REDIS_URL", "REDIS_STREAM_NAME")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep a developer's .env or shell exports out of the tests."""
    for key in list(os.environ):
        if key.startswith("HASHBEAM_") or key in ENV_KEYS:
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def fast_settings():
    return HashBeamSettings(
        seed=0,
        threads=1,
        calibration_scenarios=1000,
        calibration_trials=2000,
        evaluation_trials=2000,
        max_ci_halfwidth=0.05,
        pfa_margin=0.5,
        publish_to_redis=False,
    )


@pytest.fixture
def fast_env(monkeypatch):
    """Environment equivalent of `fast_settings` for CLI runs."""
    monkeypatch.setenv("HASHBEAM_THREADS", "1")
    monkeypatch.setenv("HASHBEAM_CALIBRATION_SCENARIOS", "1000")
    monkeypatch.setenv("HASHBEAM_CALIBRATION_TRIALS", "500")
    monkeypatch.setenv("HASHBEAM_EVALUATION_TRIALS", "500")
    monkeypatch.setenv("HASHBEAM_MAX_CI_HALFWIDTH", "0.05")
    monkeypatch.setenv("HASHBEAM_PFA_MARGIN", "0.5")


@pytest.fixture
def small_config():
    return SystemConfig(
        num_antennas=2,
        hash_len=3,
        num_decoded=4,
        num_undecoded=4,
        noise_var=1.0,
        hash_mag=1.0,
        master_seed=11,
    )


def make_operating_point(config: SystemConfig, llr_threshold: float = 0.0, **changes) -> OperatingPoint:
    """Hand-built operating point for tests that do not need a calibration run."""
    data = dict(
        num_decoded=config.num_decoded,
        num_undecoded=config.num_undecoded,
        num_antennas=config.num_antennas,
        hash_len=config.hash_len,
        noise_var=config.noise_var,
        alpha=config.hash_mag,
        discriminant=DiscriminantModel(
            mu0=0.0, var0=1.0, mu1=1.0, var1=0.5, llr_threshold=llr_threshold
        ),
        target_pfa=0.05,
        num_h1=0,
        num_h0=0,
        calibration_scenarios=0,
        calibration_trials=0,
        seed=config.master_seed,
    )
    data.update(changes)
    return OperatingPoint(**data)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """CLI runs detach the package logger from the root; undo that for caplog."""
    yield
    logger = logging.getLogger("hashbeam")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True
    logger.setLevel(logging.NOTSET)
