import math
from enum import Enum
from typing import Literal

from typing_extensions import TypedDict

NOISELESS: Literal["noiseless"] = "noiseless"

# an SNR level in dB, or the noiseless marker
SnrLevel = float | Literal["noiseless"]


class Decision(Enum):
    ACK = "ack"
    NO_ACK = "no_ack"


class TrialRecord(TypedDict):
    """
    One user's outcome in one trial.

    owner is the user's index within the scenario (decoded users first),
    truth is True when the user's message was decoded by the base station.
    """

    trial: int
    owner: int
    truth: bool
    theta: complex
    llr: float
    decision: Decision


def format_snr(snr_db: SnrLevel) -> str:
    if snr_db == NOISELESS:
        return NOISELESS
    return repr(float(snr_db))


def parse_snr(text: str) -> SnrLevel:
    value = text.strip()
    if value.lower() == NOISELESS:
        return NOISELESS
    snr_db = float(value)
    if not math.isfinite(snr_db):
        raise ValueError(f"SNR must be finite or '{NOISELESS}', got {text!r}")
    return snr_db
