import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .beamform import TransmitSignal, khatri_rao, lmmse_beamformer, transmit_signal
from .errors import DimensionMismatch
from .model import HashVector, Scenario, SystemConfig, build_scenario
from .sim_types import Decision


@dataclass(frozen=True)
class UserObservation:
    r: np.ndarray
    owner: int
    truth: bool


class DiscriminantModel(BaseModel):
    """
    Circularly-symmetric complex Gaussian fits of theta under both hypotheses.

    H0 (not decoded): CN(mu0, var0). H1 (decoded): CN(mu1, var1). A user
    declares ACK when the log-likelihood ratio exceeds llr_threshold.
    """

    model_config = ConfigDict(frozen=True)

    mu0: complex
    var0: float = Field(gt=0.0)
    mu1: complex
    var1: float = Field(gt=0.0)
    llr_threshold: float


@dataclass(frozen=True)
class TrialStatistics:
    """theta for every active user of one scenario, decoded users first."""

    theta: np.ndarray
    truth: np.ndarray


def receive(
    signal: TransmitSignal,
    h: np.ndarray,
    noise_var: float,
    rng: np.random.Generator,
    owner: int = 0,
    truth: bool = True,
) -> UserObservation:
    h = np.asarray(getattr(h, "entries", h), dtype=np.complex128)
    if h.shape != (signal.num_antennas,):
        raise DimensionMismatch(
            f"channel has {h.size} entries but transmit blocks have {signal.num_antennas}"
        )
    r = signal.blocks @ h.conj()
    if noise_var > 0:
        r = r + complex_noise(rng, noise_var, r.shape)
    return UserObservation(r=r, owner=owner, truth=truth)


def complex_noise(
    rng: np.random.Generator, noise_var: float, shape: tuple[int, ...]
) -> np.ndarray:
    """CN(0, noise_var) samples: real and imaginary parts each N(0, noise_var/2)."""
    scale = math.sqrt(noise_var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def statistic(a: HashVector | np.ndarray, obs: UserObservation) -> complex:
    a = np.asarray(getattr(a, "entries", a))
    if a.shape != obs.r.shape:
        raise DimensionMismatch(f"hash length {a.size} != observation length {obs.r.size}")
    return complex(np.vdot(a, obs.r))


def log_likelihood_ratios(theta: np.ndarray, model: DiscriminantModel) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.complex128)
    return (
        np.abs(theta - model.mu0) ** 2 / model.var0
        - np.abs(theta - model.mu1) ** 2 / model.var1
        + math.log(model.var0 / model.var1)
    )


def log_likelihood_ratio(theta: complex, model: DiscriminantModel) -> float:
    """ln p1(theta) - ln p0(theta) under the two fitted CN densities."""
    return float(log_likelihood_ratios(np.asarray([theta]), model)[0])


def decide(theta: complex, model: DiscriminantModel) -> Decision:
    # equality falls in R0
    if log_likelihood_ratio(theta, model) > model.llr_threshold:
        return Decision.ACK
    return Decision.NO_ACK


def acknowledges(theta: np.ndarray, model: DiscriminantModel) -> np.ndarray:
    """Vectorized `decide`: True where the user declares ACK."""
    return log_likelihood_ratios(theta, model) > model.llr_threshold


def downlink(
    config: SystemConfig, scenario: Scenario, reg: float | None = None
) -> tuple[np.ndarray, TransmitSignal]:
    """
    Hashes of all active users and the signal beamformed to the decoded ones.

    `reg` overrides the configured alpha^2 sigma^2 regularizer.
    """
    hashes = scenario.hashes(config.hash_len, config.hash_mag)
    K = config.num_decoded
    signature = khatri_rao(hashes[:, :K], scenario.channels[:, :K])
    signal = transmit_signal(lmmse_beamformer(signature, config.reg if reg is None else reg))
    return hashes, signal


def noiseless_responses(signal: TransmitSignal, channels: np.ndarray) -> np.ndarray:
    """(L, n) matrix of <h_i, v_j> for the channel columns h_i."""
    return signal.blocks @ channels.conj()


def observe_scenario(
    config: SystemConfig,
    scenario: Scenario,
    noise_rng: np.random.Generator,
) -> TrialStatistics:
    hashes, signal = downlink(config, scenario)
    received = noiseless_responses(signal, scenario.channels)
    if config.noise_var > 0:
        received = received + complex_noise(
            noise_rng, config.noise_var, (config.num_active, config.hash_len)
        ).T
    theta = np.sum(hashes.conj() * received, axis=0)
    truth = np.arange(config.num_active) < config.num_decoded
    return TrialStatistics(theta=theta, truth=truth)


def simulate_statistics(
    config: SystemConfig,
    scenario_rng: np.random.Generator,
    noise_rng: np.random.Generator,
) -> TrialStatistics:
    return observe_scenario(config, build_scenario(config, scenario_rng), noise_rng)


def simplified_statistic(
    config: SystemConfig, scenario: Scenario, noise: np.ndarray | None = None
) -> np.ndarray:
    """
    theta under the diagonal-Gram, unregularized approximation.

    Decoded users get 1 + <a_i, z_i>; undecoded users get
    sum_m <s_i, s_m> / <s_m, s_m> + <a_i, z_i>. `noise` is an optional
    (L, K_a) matrix of receiver noise. For inspection only.
    """
    hashes = scenario.hashes(config.hash_len, config.hash_mag)
    K = config.num_decoded
    decoded = khatri_rao(hashes[:, :K], scenario.channels[:, :K]).S
    everyone = khatri_rao(hashes, scenario.channels).S
    cross = everyone.conj().T @ decoded
    norms = np.sum(np.abs(decoded) ** 2, axis=0)
    theta = (cross / norms[None, :]).sum(axis=1)
    theta[:K] = 1.0
    if noise is not None:
        theta = theta + np.sum(hashes.conj() * noise, axis=0)
    return theta
