from .model import SystemConfig, Message, HashVector, ChannelVector, Scenario, build_scenario, hash_message
from .beamform import SignatureMatrix, Beamformer, TransmitSignal, khatri_rao, lmmse_beamformer, transmit_signal
from .detect import DiscriminantModel, UserObservation, receive, statistic, decide, log_likelihood_ratio
from .calibrate import OperatingPoint, SnrSpec, calibrate_operating_point, estimate_snr, calibrate_alpha
from .experiment import MetricsEstimate, SweepPoint, estimate_metrics, find_min_hash_length, run_trial, sweep
from .settings import HashBeamSettings
from .sim_types import NOISELESS, Decision
from .errors import HashBeamError
from .redis_publisher import RedisPublisher

__all__ = [
    "SystemConfig",
    "Message",
    "HashVector",
    "ChannelVector",
    "Scenario",
    "build_scenario",
    "hash_message",
    "SignatureMatrix",
    "Beamformer",
    "TransmitSignal",
    "khatri_rao",
    "lmmse_beamformer",
    "transmit_signal",
    "DiscriminantModel",
    "UserObservation",
    "receive",
    "statistic",
    "decide",
    "log_likelihood_ratio",
    "OperatingPoint",
    "SnrSpec",
    "calibrate_operating_point",
    "estimate_snr",
    "calibrate_alpha",
    "MetricsEstimate",
    "SweepPoint",
    "estimate_metrics",
    "find_min_hash_length",
    "run_trial",
    "sweep",
    "HashBeamSettings",
    "NOISELESS",
    "Decision",
    "HashBeamError",
    "RedisPublisher",
]
