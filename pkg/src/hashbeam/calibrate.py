"""
Operating-point calibration: alpha for a target SNR and the ACK discriminant.

SNR scaling law: with reg = alpha^2 sigma^2 the beamformer is
W = alpha^-1 S1 (sigma^2 I + S1^H S1)^-1 where S1 is the signature built from
unit-magnitude hashes, so SNR(alpha) * alpha^2 is a constant C of the
(K, M, L, sigma^2) configuration. C is estimated once at alpha = 1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import chi2, ncx2, norm

from .detect import DiscriminantModel, downlink, log_likelihood_ratios, noiseless_responses, simulate_statistics
from .errors import (
    CalibrationVerificationError,
    ConfigError,
    InsufficientSamples,
    TooFewSamples,
)
from .model import SystemConfig, build_scenario
from .parallel import map_ordered
from .rng import Purpose, RandomStreams, Stage, snr_key
from .settings import HashBeamSettings
from .sim_types import NOISELESS, SnrLevel

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-15
ALPHA_TOLERANCE = 0.02
ALPHA_VERIFY_LIMIT = 0.05


class SnrSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    snr_db: float = Field(allow_inf_nan=False)
    sigma2: float = Field(gt=0.0, allow_inf_nan=False)

    @property
    def linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class SnrEstimate:
    """Linear SNR with the standard error of the Monte Carlo mean."""

    snr: float
    stderr: float
    num_scenarios: int


@dataclass(frozen=True)
class AlphaCalibration:
    alpha: float
    snr_constant: float
    snr_constant_stderr: float
    verified_snr: float


@dataclass(frozen=True)
class StatisticSamples:
    h1_samples: np.ndarray
    h0_samples: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)


class OperatingPoint(BaseModel):
    """
    Everything a trial needs besides the scenario: alpha and the discriminant.

    snr_db is None when alpha was taken from the configuration as-is.
    """

    model_config = ConfigDict(frozen=True)

    num_decoded: int
    num_undecoded: int
    num_antennas: int
    hash_len: int
    noise_var: float
    snr_db: SnrLevel | None = None
    alpha: float = Field(gt=0.0)
    snr_constant: float | None = None
    snr_constant_stderr: float | None = None
    discriminant: DiscriminantModel
    target_pfa: float
    num_h1: int
    num_h0: int
    calibration_scenarios: int
    calibration_trials: int
    seed: int

    def matches(self, config: SystemConfig) -> bool:
        return (
            self.num_decoded == config.num_decoded
            and self.num_antennas == config.num_antennas
            and self.hash_len == config.hash_len
            and self.noise_var == config.noise_var
        )

    def apply(self, config: SystemConfig) -> SystemConfig:
        if not self.matches(config):
            raise ConfigError(
                f"operating point (K={self.num_decoded}, M={self.num_antennas}, L={self.hash_len}, "
                f"noise_var={self.noise_var}) does not match config (K={config.num_decoded}, "
                f"M={config.num_antennas}, L={config.hash_len}, noise_var={config.noise_var})"
            )
        return config.with_updates(hash_mag=self.alpha)

    def with_overrides(self, **changes: Any) -> "OperatingPoint":
        """Copy with `alpha` and/or `llr_threshold` replaced."""
        data = self.model_dump()
        if "llr_threshold" in changes:
            data["discriminant"]["llr_threshold"] = changes.pop("llr_threshold")
        data.update(changes)
        return OperatingPoint.model_validate(data)


def calibration_streams(config: SystemConfig, purpose: Purpose) -> RandomStreams:
    return RandomStreams(
        config.master_seed,
        purpose,
        config.num_decoded,
        config.num_undecoded,
        config.num_antennas,
    )


def verification_streams(rng: RandomStreams) -> RandomStreams:
    """Same point keys as `rng`, disjoint draws."""
    return RandomStreams(rng.master_seed, Purpose.VERIFY_SNR, int(rng.purpose), *rng.keys)


def _decoded_received_power(
    config: SystemConfig, streams: RandomStreams, index: int, reg: float | None
) -> float:
    scenario = build_scenario(config, streams.generator(index, Stage.SCENARIO))
    _, signal = downlink(config, scenario, reg=reg)
    responses = noiseless_responses(signal, scenario.channels[:, : config.num_decoded])
    return float(np.mean(np.sum(np.abs(responses) ** 2, axis=0)))


def estimate_snr(
    config: SystemConfig,
    num_scenarios: int,
    rng: RandomStreams,
    reg: float | None = None,
    threads: int = 1,
) -> SnrEstimate:
    """
    Monte Carlo estimate of E[sum_j |<h, v_j>|^2] / (L sigma^2) over decoded users.

    `reg` overrides the configured alpha^2 sigma^2 regularizer.
    """
    if config.noise_var <= 0:
        raise ConfigError("SNR is undefined without receiver noise (noise_var must be > 0)")
    if num_scenarios < 1:
        raise ConfigError("num_scenarios must be >= 1")

    powers = np.asarray(
        map_ordered(
            lambda i: _decoded_received_power(config, rng, i, reg),
            range(num_scenarios),
            threads=threads,
        )
    )
    denominator = config.hash_len * config.noise_var
    mean = math.fsum(powers) / num_scenarios
    stderr = float(powers.std(ddof=1) / math.sqrt(num_scenarios)) if num_scenarios > 1 else 0.0
    return SnrEstimate(
        snr=mean / denominator,
        stderr=stderr / denominator,
        num_scenarios=num_scenarios,
    )


def _calibrate_alpha(
    config: SystemConfig,
    target: SnrSpec,
    num_scenarios: int,
    rng: RandomStreams,
    threads: int = 1,
) -> AlphaCalibration:
    unit = config.with_updates(noise_var=target.sigma2, hash_mag=1.0)
    constant = estimate_snr(unit, num_scenarios, rng, threads=threads)
    alpha = math.sqrt(constant.snr / target.linear)

    # fresh scenarios, so the check also sees the Monte Carlo error in C
    verified = estimate_snr(
        unit.with_updates(hash_mag=alpha), num_scenarios, verification_streams(rng), threads=threads
    )
    deviation = abs(verified.snr / target.linear - 1.0)
    if deviation > ALPHA_VERIFY_LIMIT:
        raise CalibrationVerificationError(
            f"SNR at alpha={alpha:.6g} is {verified.snr:.6g}, {deviation:.1%} away from the "
            f"target {target.linear:.6g}"
        )
    if deviation > ALPHA_TOLERANCE:
        logger.warning(
            "Warning: calibrated SNR deviates %.2f%% from target %.3f dB",
            100 * deviation,
            target.snr_db,
        )
    return AlphaCalibration(
        alpha=alpha,
        snr_constant=constant.snr,
        snr_constant_stderr=constant.stderr,
        verified_snr=verified.snr,
    )


def calibrate_alpha(
    config: SystemConfig,
    target: SnrSpec,
    num_scenarios: int,
    rng: RandomStreams,
    threads: int = 1,
) -> float:
    return _calibrate_alpha(config, target, num_scenarios, rng, threads).alpha


def sample_statistics(
    config: SystemConfig,
    num_trials: int,
    rng: RandomStreams,
    threads: int = 1,
) -> StatisticSamples:
    if num_trials < 1:
        raise ConfigError("num_trials must be >= 1")

    def one_trial(index: int):
        return simulate_statistics(config, *rng.trial_generators(index))

    trials = map_ordered(one_trial, range(num_trials), threads=threads)
    theta = np.concatenate([t.theta for t in trials])
    truth = np.concatenate([t.truth for t in trials])
    return StatisticSamples(
        h1_samples=theta[truth],
        h0_samples=theta[~truth],
        provenance={
            "config": config.model_dump(),
            "seed": rng.master_seed,
            "purpose": rng.purpose.name,
            "keys": list(rng.keys),
            "num_trials": num_trials,
        },
    )


def fit_gaussian(samples: np.ndarray) -> tuple[complex, float]:
    """Sample mean and total complex variance (1/n normalization), floored."""
    samples = np.asarray(samples, dtype=np.complex128)
    n = samples.size
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples to fit a Gaussian, got {n}")
    mu = complex(math.fsum(samples.real) / n, math.fsum(samples.imag) / n)
    var = math.fsum(np.abs(samples - mu) ** 2) / n
    return mu, max(var, VAR_FLOOR)


def fit_discriminant(samples: StatisticSamples, llr_threshold: float = 0.0) -> DiscriminantModel:
    if samples.h1_samples.size == 0 or samples.h0_samples.size == 0:
        raise TooFewSamples(
            f"both hypotheses need samples (H1: {samples.h1_samples.size}, H0: {samples.h0_samples.size})"
        )
    mu1, var1 = fit_gaussian(samples.h1_samples)
    mu0, var0 = fit_gaussian(samples.h0_samples)
    return DiscriminantModel(mu0=mu0, var0=var0, mu1=mu1, var1=var1, llr_threshold=llr_threshold)


def neyman_pearson_threshold(
    h0_samples: np.ndarray, model: DiscriminantModel, target_pfa: float
) -> float:
    """
    Empirical LLR threshold: at most floor(n * target_pfa) of the H0 samples
    have an LLR strictly above it.
    """
    if not 0.0 < target_pfa < 1.0:
        raise ValueError(f"target_pfa must be in (0, 1), got {target_pfa}")
    llr = np.sort(log_likelihood_ratios(h0_samples, model))
    n = llr.size
    if n * target_pfa < 1.0 - 1e-9:
        raise InsufficientSamples(
            f"{n} H0 samples cannot resolve a false-alarm rate of {target_pfa} "
            f"(need at least {math.ceil(1.0 / target_pfa)})"
        )
    allowed = math.floor(n * target_pfa + 1e-9)
    return float(llr[n - allowed - 1])


def gaussian_false_alarm_rate(model: DiscriminantModel) -> float:
    """P(LLR > threshold) when theta really is CN(mu0, var0)."""
    return _gaussian_tail(model, model.llr_threshold)


def gaussian_pfa_threshold(model: DiscriminantModel, target_pfa: float) -> float:
    """Threshold the fitted H0 Gaussian alone would pick for target_pfa."""
    d = model.mu1 - model.mu0
    curvature = 1.0 / model.var0 - 1.0 / model.var1
    offset = math.log(model.var0 / model.var1)
    if curvature == 0.0:
        if d == 0:
            return offset
        spread = math.sqrt(abs(d) ** 2 * model.var1 / 2.0)
        return (2.0 * spread * float(norm.isf(target_pfa)) - abs(d) ** 2) / model.var1 + offset

    centre, shift = _completed_square(model, curvature)
    dist = _scaled_distance(model, centre)
    # LLR = curvature * var0/2 * Y + shift with Y ~ noncentral chi2(2)
    q = dist.isf(target_pfa) if curvature > 0 else dist.ppf(target_pfa)
    return float(shift + curvature * model.var0 / 2.0 * q)


def _completed_square(model: DiscriminantModel, curvature: float) -> tuple[complex, float]:
    d = model.mu1 - model.mu0
    centre = -d / (curvature * model.var1)
    shift = (
        math.log(model.var0 / model.var1)
        - abs(d) ** 2 / (curvature * model.var1**2)
        - abs(d) ** 2 / model.var1
    )
    return centre, shift


def _scaled_distance(model: DiscriminantModel, centre: complex):
    nc = 2.0 * abs(centre) ** 2 / model.var0
    return ncx2(df=2, nc=nc) if nc > 0 else chi2(df=2)


def _gaussian_tail(model: DiscriminantModel, threshold: float) -> float:
    d = model.mu1 - model.mu0
    curvature = 1.0 / model.var0 - 1.0 / model.var1
    offset = math.log(model.var0 / model.var1)
    if curvature == 0.0:
        if d == 0:
            return 1.0 if offset > threshold else 0.0
        spread = math.sqrt(abs(d) ** 2 * model.var1 / 2.0)
        return float(norm.sf((threshold * model.var1 + abs(d) ** 2 - offset * model.var1) / (2.0 * spread)))

    centre, shift = _completed_square(model, curvature)
    q = 2.0 * (threshold - shift) / (curvature * model.var0)
    dist = _scaled_distance(model, centre)
    return float(dist.sf(q) if curvature > 0 else dist.cdf(q))


def calibrate_operating_point(
    config: SystemConfig,
    snr_db: SnrLevel | None = None,
    settings: HashBeamSettings | None = None,
    target_pfa: float | None = None,
    threads: int = 1,
) -> OperatingPoint:
    """
    Calibrate alpha (for an SNR target), fit the discriminant and set its threshold.

    snr_db=None keeps the configured alpha; NOISELESS forces noise_var = 0.
    """
    settings = settings or HashBeamSettings()
    target_pfa = settings.target_pfa if target_pfa is None else target_pfa

    calibration: AlphaCalibration | None = None
    if snr_db == NOISELESS:
        config = config.with_updates(noise_var=0.0)
    elif snr_db is not None:
        if config.noise_var <= 0:
            raise ConfigError("an SNR target needs noise_var > 0; use 'noiseless' for sigma^2 = 0")
        calibration = _calibrate_alpha(
            config,
            SnrSpec(snr_db=float(snr_db), sigma2=config.noise_var),
            settings.calibration_scenarios,
            calibration_streams(config, Purpose.CALIBRATE_SNR).child(config.hash_len, snr_key(snr_db)),
            threads=threads,
        )
        config = config.with_updates(hash_mag=calibration.alpha)

    streams = calibration_streams(config, Purpose.CALIBRATE_STATISTICS)
    samples = sample_statistics(config, settings.calibration_trials, streams, threads=threads)
    model = fit_discriminant(samples)
    threshold = neyman_pearson_threshold(samples.h0_samples, model, target_pfa)
    logger.debug(
        "calibrated K=%d M=%d L=%d snr=%s: alpha=%.4g threshold=%.4g",
        config.num_decoded,
        config.num_antennas,
        config.hash_len,
        snr_db,
        config.hash_mag,
        threshold,
    )

    return OperatingPoint(
        num_decoded=config.num_decoded,
        num_undecoded=config.num_undecoded,
        num_antennas=config.num_antennas,
        hash_len=config.hash_len,
        noise_var=config.noise_var,
        snr_db=snr_db,
        alpha=config.hash_mag,
        snr_constant=calibration.snr_constant if calibration else None,
        snr_constant_stderr=calibration.snr_constant_stderr if calibration else None,
        discriminant=model.model_copy(update={"llr_threshold": threshold}),
        target_pfa=target_pfa,
        num_h1=samples.h1_samples.size,
        num_h0=samples.h0_samples.size,
        calibration_scenarios=settings.calibration_scenarios if calibration else 0,
        calibration_trials=settings.calibration_trials,
        seed=config.master_seed,
    )
