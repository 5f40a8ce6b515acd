import gzip
import struct

import numpy as np
import pytest

from rnnchaos import highdim, netgen
from rnnchaos.errors import ContractError
from rnnchaos.highdim import IdxFormatError, VectorRnn


def test_zero_weights_kill_state():
    rnn = VectorRnn(np.zeros((4, 4)), np.zeros(4))
    states = highdim.iterate_state(rnn, np.ones(4), 5)
    assert states.shape == (6, 4)
    assert np.all(states[1:] == 0.0)


def test_half_identity_halves_state():
    rnn = VectorRnn(0.5 * np.eye(3), np.zeros(3))
    states = highdim.iterate_state(rnn, [1.0, 2.0, 4.0], 4)
    np.testing.assert_array_equal(states[-1], np.array([1.0, 2.0, 4.0]) / 16)


def test_scaled_identity_norm():
    rnn = VectorRnn(1.3 * np.eye(5), np.zeros(5))
    res = highdim.jacobian_spectral_norm(rnn, np.full(5, 0.2), 6)
    assert res.spectral_norm == pytest.approx(1.3**6, rel=1e-10)
    assert res.converged and res.iterations_t == 6


def test_zero_weights_norm():
    res = highdim.jacobian_spectral_norm(VectorRnn(np.zeros((3, 3)), np.zeros(3)), np.ones(3), 3)
    assert res.spectral_norm == 0.0


def test_vector_rnn_contract():
    with pytest.raises(ContractError):
        VectorRnn(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ContractError):
        highdim.iterate_state(VectorRnn(np.eye(2), np.zeros(2)), np.ones(2), 0)


def test_sampling_deterministic_and_scaled():
    a = highdim.sample_vector_rnn(64, 1.5, seed=3)
    b = highdim.sample_vector_rnn(64, 1.5, seed=3)
    assert a.W.tobytes() == b.W.tobytes()
    W = np.concatenate([highdim.sample_vector_rnn(64, 1.5, seed=s).W.ravel() for s in range(50)])
    assert W.var() == pytest.approx(1.5**2 / 64, rel=0.02)
    G = np.concatenate([highdim.sample_vector_rnn(64, 1.5, seed=s, scheme="glorot-normal").W.ravel() for s in range(50)])
    assert G.var() == pytest.approx(1.5**2 / 128, rel=0.02)


def _instances(n):
    rng = np.random.default_rng(17)
    for i in range(n):
        d = int(rng.integers(2, 9))
        t = int(rng.integers(1, 6))
        rnn = highdim.sample_vector_rnn(d, float(rng.uniform(0.8, 2.5)), seed=i)
        rnn = VectorRnn(rnn.W, rng.normal(0, 0.3, size=d))
        yield rnn, rng.uniform(0, 1, size=d), t


def test_spectral_norm_matches_finite_differences():
    for rnn, u0, t in _instances(50):
        res = highdim.jacobian_spectral_norm(rnn, u0, t)
        fd = np.linalg.norm(highdim.jacobian_fd(rnn, u0, t), 2)
        assert abs(res.spectral_norm - fd) <= 1e-3 * max(fd, 1e-12) or fd < 1e-9
        assert res.converged


def test_masked_product_matches_directional_difference():
    rng = np.random.default_rng(2)
    for rnn, u0, t in _instances(50):
        v = rng.normal(size=rnn.d)
        eps = 1e-7
        fd = (highdim.iterate_state(rnn, u0 + eps * v, t)[-1] - highdim.iterate_state(rnn, u0, t)[-1]) / eps
        jv = highdim.jacobian_apply(rnn, u0, t, v)
        assert np.linalg.norm(jv - fd) <= 1e-4 * max(np.linalg.norm(jv), 1e-12) or np.linalg.norm(jv) < 1e-9


def test_batched_norms_match_single():
    inst = list(_instances(10))
    same_t = [(r, u) for r, u, t in inst]
    norms, conv = highdim.jacobian_norms([r for r, _ in same_t][:1] * 3, [same_t[0][1]] * 3, 4)
    single = highdim.jacobian_spectral_norm(same_t[0][0], same_t[0][1], 4)
    np.testing.assert_allclose(norms, single.spectral_norm, rtol=1e-7)


def test_transition_curve_is_monotone():
    fractions = []
    for sigma in (0.5, 1.0, 1.5, 2.0, 4.0):
        rnns = [highdim.sample_vector_rnn(32, sigma, netgen.trial_seed(1, i)) for i in range(200)]
        u0s = [netgen.make_rng(i).random(32) for i in range(200)]
        norms, _ = highdim.jacobian_norms(rnns, u0s, 10)
        fractions.append(float((norms > 1).mean()))
    assert fractions[0] <= 0.05 and fractions[-1] >= 0.95
    assert all(b >= a - 0.1 for a, b in zip(fractions, fractions[1:]))


# ----------------------------------------------------------------------- IDX


def _fixture(tmp_path, images, name="img.idx", gz=False):
    path = tmp_path / name
    highdim.write_idx(path, images)
    if gz:
        path.write_bytes(gzip.compress(path.read_bytes()))
    return path


def test_idx_four_images(tmp_path):
    imgs = np.arange(4 * 3 * 5, dtype=np.uint8).reshape(4, 3, 5) * 4
    out = highdim.load_idx(_fixture(tmp_path, imgs))
    assert out.vectors.shape == (4, 15) and out.shape == (4, 3, 5)
    assert out.vectors.min() >= 0 and out.vectors.max() <= 1
    np.testing.assert_allclose(out.vectors[1], imgs[1].ravel() / 255.0)


def test_idx_gzip_and_zero_image(tmp_path):
    imgs = np.zeros((2, 4, 4), dtype=np.uint8)
    imgs[1] = 255
    out = highdim.load_idx(_fixture(tmp_path, imgs, "a.idx.gz", gz=True))
    assert np.all(out.vectors[0] == 0.0) and np.all(out.vectors[1] == 1.0)


def test_idx_projection(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, size=(3, 6, 6), dtype=np.uint8)
    path = _fixture(tmp_path, imgs)
    trunc = highdim.load_idx(path, d=8)
    np.testing.assert_allclose(trunc.vectors, imgs.reshape(3, -1)[:, :8] / 255.0)
    rand = highdim.load_idx(path, d=8, projection="random", seed=4)
    idx = rand.projection["indices"]
    assert rand.projection["method"] == "random" and len(idx) == 8
    np.testing.assert_allclose(rand.vectors, imgs.reshape(3, -1)[:, idx] / 255.0)
    assert highdim.load_idx(path, d=8, projection="random", seed=4).projection == rand.projection
    with pytest.raises(ContractError):
        highdim.load_idx(path, d=100)


def test_idx_empty_file(tmp_path):
    path = tmp_path / "empty.idx"
    path.write_bytes(b"")
    with pytest.raises(IdxFormatError) as info:
        highdim.load_idx(path)
    assert info.value.offset == 0


def test_idx_bad_magic(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000801, 1, 2, 2) + bytes(4))
    with pytest.raises(IdxFormatError, match="magic"):
        highdim.load_idx(path)


def test_idx_truncated(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 2) + bytes(5))
    with pytest.raises(IdxFormatError) as info:
        highdim.load_idx(path)
    assert info.value.offset == 21
