import numpy as np
import pytest

from hashbeam.beamform import (
    dump_matrix,
    gram,
    khatri_rao,
    lmmse_beamformer,
    load_matrix,
    total_transmit_power,
    transmit_signal,
)
from hashbeam.errors import DimensionMismatch, SingularSystemError
from hashbeam.model import sample_channels


def random_factors(rng, hash_len, num_antennas, num_users, alpha=1.0):
    A = alpha * np.exp(1j * rng.uniform(0, 2 * np.pi, (hash_len, num_users)))
    H = sample_channels(rng, num_antennas, num_users)
    return A, H


def test_khatri_rao_column_is_kronecker(rng):
    A, H = random_factors(rng, 3, 4, 5)
    sig = khatri_rao(A, H)
    assert sig.S.shape == (12, 5)
    assert (sig.hash_len, sig.num_antennas, sig.num_users) == (3, 4, 5)
    for k in range(5):
        np.testing.assert_allclose(sig.S[:, k], np.kron(A[:, k], H[:, k]), rtol=1e-14, atol=0)
    assert sig.S[2 * 4 + 1, 3] == pytest.approx(A[2, 3] * H[1, 3], rel=1e-14)


def test_khatri_rao_rejects_mismatched_columns(rng):
    A, H = random_factors(rng, 3, 4, 5)
    with pytest.raises(DimensionMismatch):
        khatri_rao(A, H[:, :4])
    with pytest.raises(DimensionMismatch):
        khatri_rao(A[:, 0], H)


def test_gram_identity(rng):
    for _ in range(10):
        A, H = random_factors(rng, 4, 3, 9)
        sig = khatri_rao(A, H)
        direct = sig.S.conj().T @ sig.S
        G = gram(sig)
        assert np.linalg.norm(G - direct) <= 1e-10 * np.linalg.norm(direct)
        np.testing.assert_array_equal(G, G.conj().T)


def test_duality_residual(rng):
    A, H = random_factors(rng, 5, 4, 12)
    sig = khatri_rao(A, H)
    reg = 0.3
    bf = lmmse_beamformer(sig, reg)
    system = reg * np.eye(12) + sig.S.conj().T @ sig.S
    residual = np.linalg.norm(system @ bf.W.conj().T - sig.S.conj().T)
    assert residual <= 1e-10 * np.linalg.norm(sig.S)


def test_apply_matches_materialized_W(rng):
    A, H = random_factors(rng, 3, 3, 6)
    bf = lmmse_beamformer(khatri_rao(A, H), 0.1)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    np.testing.assert_allclose(bf.apply(x), bf.W @ x, rtol=1e-10, atol=1e-12)


def test_orthonormal_signature_is_its_own_beamformer(rng):
    # L = 1 with a unit hash leaves S = H; orthonormal H gives S^H S = I
    Z = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    H, _ = np.linalg.qr(Z)
    A = np.ones((1, 4), dtype=np.complex128)
    sig = khatri_rao(A, H)
    bf = lmmse_beamformer(sig, 0.0)
    np.testing.assert_allclose(bf.W, sig.S, atol=1e-12)


@pytest.mark.parametrize("reg", [0.0, 0.3, 5.0])
def test_two_user_beamformer_matches_adjugate_inverse(rng, reg):
    A, H = random_factors(rng, 1, 2, 2)
    sig = khatri_rao(A, H)
    S = sig.S
    system = S.conj().T @ S + reg * np.eye(2)
    (a, b), (c, d) = system
    inverse = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    np.testing.assert_allclose(lmmse_beamformer(sig, reg).W, S @ inverse, rtol=0, atol=1e-10)


def test_beamformer_norm_shrinks_with_regularizer(rng):
    A, H = random_factors(rng, 2, 3, 4)
    sig = khatri_rao(A, H)
    regs = np.geomspace(1e-3, 1e4, 15)
    norms = [np.linalg.norm(lmmse_beamformer(sig, reg).W) for reg in regs]
    assert all(later < earlier for earlier, later in zip(norms, norms[1:]))
    # W -> S / reg for large reg
    assert norms[-1] * regs[-1] == pytest.approx(np.linalg.norm(sig.S), rel=0.01)


def test_noiseless_decoded_inner_products_are_one(rng):
    for _ in range(100):
        num_users = int(rng.integers(1, 51))
        num_antennas = int(rng.integers(1, 9))
        hash_len = -(-num_users // num_antennas) + int(rng.integers(0, 3))
        A, H = random_factors(rng, hash_len, num_antennas, num_users)
        sig = khatri_rao(A, H)
        signal = transmit_signal(lmmse_beamformer(sig, 0.0))
        np.testing.assert_allclose(sig.S.conj().T @ signal.v, 1.0, atol=1e-8)


def test_alpha_scaling_law(rng):
    A, H = random_factors(rng, 4, 3, 8)
    sigma2, c = 0.7, 2.5
    base = lmmse_beamformer(khatri_rao(A, H), sigma2)
    scaled = lmmse_beamformer(khatri_rao(c * A, H), c**2 * sigma2)
    np.testing.assert_allclose(scaled.W, base.W / c, rtol=1e-10, atol=1e-14)
    v = transmit_signal(base).v
    np.testing.assert_allclose(transmit_signal(scaled).v, v / c, rtol=1e-10, atol=1e-14)


def test_rank_deficient_without_regularizer(rng):
    A, H = random_factors(rng, 2, 2, 5)
    with pytest.raises(SingularSystemError):
        lmmse_beamformer(khatri_rao(A, H), 0.0)
    # the same signature is fine once regularized
    lmmse_beamformer(khatri_rao(A, H), 1.0)


def test_negative_regularizer_is_rejected(rng):
    A, H = random_factors(rng, 2, 2, 2)
    with pytest.raises(ValueError):
        lmmse_beamformer(khatri_rao(A, H), -1.0)


def test_transmit_blocks_are_contiguous(rng):
    A, H = random_factors(rng, 3, 4, 5)
    signal = transmit_signal(lmmse_beamformer(khatri_rao(A, H), 0.2))
    assert signal.hash_len == 3
    assert signal.blocks.shape == (3, 4)
    np.testing.assert_array_equal(signal.blocks[1], signal.v[4:8])
    assert total_transmit_power(signal) == pytest.approx(np.sum(np.abs(signal.v) ** 2))


def test_dump_matrix_layout(tmp_path):
    matrix = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]])
    path = tmp_path / "m.bin"
    dump_matrix(path, matrix)
    data = path.read_bytes()
    assert len(data) == 16 + 4 * 16
    assert np.frombuffer(data[:16], dtype="<u8").tolist() == [2, 2]
    # column-major, interleaved real/imaginary
    assert np.frombuffer(data[16:], dtype="<f8").tolist() == [1, 2, 5, 6, 3, 4, 7, 8]
    np.testing.assert_array_equal(load_matrix(path), matrix)


def test_load_matrix_rejects_truncated_file(tmp_path):
    path = tmp_path / "m.bin"
    dump_matrix(path, np.ones((3, 2), dtype=complex))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_matrix(path)
