"""
Khatri-Rao signatures and the regularized LMMSE beamformer.

Index convention: entry (j*M + m) of signature column k is A[j, k] * H[m, k],
so the transmit vector v splits into L contiguous blocks of M antennas.
Inner products are conjugate-linear in the first argument.
"""

import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionMismatch, SingularSystemError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class SignatureMatrix:
    """S = A * H (column-wise Kronecker) together with its factors."""

    S: np.ndarray
    A: np.ndarray
    H: np.ndarray

    @property
    def hash_len(self) -> int:
        return self.A.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.H.shape[0]

    @property
    def num_users(self) -> int:
        return self.S.shape[1]


def khatri_rao(A: np.ndarray, H: np.ndarray) -> SignatureMatrix:
    A = np.asarray(A, dtype=np.complex128)
    H = np.asarray(H, dtype=np.complex128)
    if A.ndim != 2 or H.ndim != 2:
        raise DimensionMismatch(f"expected matrices, got shapes {A.shape} and {H.shape}")
    if A.shape[1] != H.shape[1]:
        raise DimensionMismatch(
            f"A has {A.shape[1]} columns but H has {H.shape[1]}"
        )
    hash_len, num_users = A.shape
    num_antennas = H.shape[0]
    S = (A[:, None, :] * H[None, :, :]).reshape(hash_len * num_antennas, num_users)
    return SignatureMatrix(S=S, A=A, H=H)


def gram(signature: SignatureMatrix) -> np.ndarray:
    """
    S^H S computed through the identity S^H S = (A^H A) o (H^H H).

    The result is symmetrized so it is exactly Hermitian with a real diagonal.
    """
    A, H = signature.A, signature.H
    G = (A.conj().T @ A) * (H.conj().T @ H)
    return 0.5 * (G + G.conj().T)


@dataclass(frozen=True)
class Beamformer:
    """
    W = S (reg I + S^H S)^-1, kept in factored form.

    `W` is materialized on first access; `apply` multiplies by W without
    forming it.
    """

    signature: SignatureMatrix
    reg: float
    factor: tuple[np.ndarray, bool]

    @property
    def num_antennas(self) -> int:
        return self.signature.num_antennas

    @cached_property
    def W(self) -> np.ndarray:
        return cho_solve(self.factor, self.signature.S.conj().T).conj().T

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.signature.S @ cho_solve(self.factor, np.asarray(x, dtype=np.complex128))


def lmmse_beamformer(signature: SignatureMatrix, reg: float) -> Beamformer:
    if reg < 0:
        raise ValueError(f"regularizer must be non-negative, got {reg}")

    G = gram(signature)
    if reg == 0:
        condition = np.linalg.cond(G)
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularSystemError(
                f"Gram matrix condition number {condition:.3g} exceeds {MAX_CONDITION:g} "
                f"(K={signature.num_users}, L*M={signature.S.shape[0]})"
            )
    system = G + reg * np.eye(G.shape[0])
    try:
        factor = cho_factor(system, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SingularSystemError(f"Cholesky factorization failed: {e}") from e
    return Beamformer(signature=signature, reg=float(reg), factor=factor)


@dataclass(frozen=True)
class TransmitSignal:
    v: np.ndarray
    num_antennas: int

    @property
    def hash_len(self) -> int:
        return self.v.shape[0] // self.num_antennas

    @property
    def blocks(self) -> np.ndarray:
        """(L, M) view; row j is the sub-vector sent on channel use j."""
        return self.v.reshape(self.hash_len, self.num_antennas)


def transmit_signal(beamformer: Beamformer) -> TransmitSignal:
    ones = np.ones(beamformer.signature.num_users)
    return TransmitSignal(v=beamformer.apply(ones), num_antennas=beamformer.num_antennas)


def total_transmit_power(signal: TransmitSignal) -> float:
    return float(np.vdot(signal.v, signal.v).real)


# debug dump format: rows and cols as little-endian uint64, then the matrix in
# column-major order as interleaved (real, imag) little-endian float64 pairs
_HEADER = struct.Struct("<QQ")


def dump_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.complex128))
    rows, cols = matrix.shape
    payload = matrix.ravel(order="F").astype("<c16").view("<f8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(rows, cols))
        f.write(payload.tobytes())


def load_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(data)
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.size != 2 * rows * cols:
        raise ValueError(
            f"{path}: expected {2 * rows * cols} floats for a {rows}x{cols} matrix, found {values.size}"
        )
    return values.view("<c16").astype(np.complex128).reshape((rows, cols), order="F")
