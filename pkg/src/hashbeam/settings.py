import os

from dotenv import load_dotenv
from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


def _default_threads() -> int:
    return os.cpu_count() or 1


class HashBeamSettings(BaseSettings):
    """
    Run-time knobs read from the environment (or a `.env` file).

    Scenario parameters live in `SystemConfig`; everything here only controls
    how much Monte Carlo work is done and where results go.
    """

    model_config = SettingsConfigDict(
        env_prefix="HASHBEAM_",
        env_file=".env",
        extra="ignore",
        populate_by_name=True,
    )

    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int = Field(default_factory=_default_threads, ge=1)

    calibration_scenarios: int = Field(default=2000, ge=1)
    calibration_trials: int = Field(default=4000, ge=1)
    evaluation_trials: int = Field(default=4000, ge=100)

    target_pmd: float = Field(default=0.05, gt=0.0, lt=1.0)
    target_pfa: float = Field(default=0.05, gt=0.0, lt=1.0)
    # threshold is calibrated to pfa_margin * target_pfa during the L search
    pfa_margin: float = Field(default=0.9, gt=0.0, le=1.0)
    max_ci_halfwidth: float = Field(default=0.01, gt=0.0)
    bracket_factor: int = Field(default=64, ge=1)

    publish_to_redis: bool = Field(
        default=False,
        validation_alias=AliasChoices("PUBLISH_TO_REDIS", "HASHBEAM_PUBLISH_TO_REDIS"),
    )
    redis_url: str | None = Field(
        default=None, validation_alias=AliasChoices("REDIS_URL", "HASHBEAM_REDIS_URL")
    )
    redis_stream_name: str = Field(
        default="hashbeam_sweep",
        validation_alias=AliasChoices("REDIS_STREAM_NAME", "HASHBEAM_REDIS_STREAM_NAME"),
    )

    @property
    def design_pfa(self) -> float:
        return self.target_pfa * self.pfa_margin
