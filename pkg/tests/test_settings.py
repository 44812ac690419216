import pytest
from pydantic import ValidationError

from hashbeam.settings import HashBeamSettings


def test_defaults():
    settings = HashBeamSettings()
    assert settings.seed == 0
    assert settings.calibration_scenarios == 2000
    assert settings.calibration_trials == 4000
    assert settings.evaluation_trials == 4000
    assert settings.target_pmd == settings.target_pfa == 0.05
    assert settings.design_pfa == pytest.approx(0.045)
    assert settings.bracket_factor == 64
    assert settings.threads >= 1
    assert not settings.publish_to_redis
    assert settings.redis_stream_name == "hashbeam_sweep"


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("HASHBEAM_SEED", "99")
    monkeypatch.setenv("HASHBEAM_TARGET_PFA", "0.1")
    monkeypatch.setenv("HASHBEAM_EVALUATION_TRIALS", "1000")
    monkeypatch.setenv("PUBLISH_TO_REDIS", "true")
    monkeypatch.setenv("REDIS_URL", "redis://localhost:6379")
    settings = HashBeamSettings()
    assert settings.seed == 99
    assert settings.design_pfa == pytest.approx(0.09)
    assert settings.evaluation_trials == 1000
    assert settings.publish_to_redis
    assert settings.redis_url == "redis://localhost:6379"


@pytest.mark.parametrize(
    "name,value",
    [
        ("HASHBEAM_EVALUATION_TRIALS", "50"),
        ("HASHBEAM_TARGET_PFA", "1.5"),
        ("HASHBEAM_SEED", "-1"),
        ("HASHBEAM_PFA_MARGIN", "0"),
    ],
)
def test_rejects_invalid_environment(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ValidationError):
        HashBeamSettings()
