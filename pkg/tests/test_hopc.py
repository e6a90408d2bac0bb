"""HOPC描述子：十二面体方向、量化投影、特征值缩放"""
import numpy as np
import pytest

from core.exceptions import EmptySupport, NotUnit
from core.geometry import SupportVolume, VolumeKind, build_support, eigen_basis, random_rotation
from core.hopc import HOPC_DIM, PHI, blocks, dodecahedron, hopc, hopc_from_basis, project_quantize

from conftest import single_frame

PSI = np.sqrt(5.0) / 3.0


def _volume(members) -> SupportVolume:
    members = np.asarray(members, dtype=np.float64)
    n = len(members)
    return SupportVolume(np.zeros(3), members, VolumeKind.SPATIAL, 10.0, 0, 1,
                         np.ones(n, dtype=np.int64), np.arange(n))


class TestDodecahedron:

    def test_vertex_layout(self):
        dirs = dodecahedron()
        assert dirs.m == 20 and dirs.U.shape == (3, 20)
        np.testing.assert_allclose(np.linalg.norm(dirs.vertices, axis=1), 1.0)
        np.testing.assert_allclose(dirs.vertices[0], -np.ones(3) / np.sqrt(3))
        np.testing.assert_allclose(dirs.vertices[7], -dirs.vertices[0])
        assert dirs.psi == pytest.approx(PSI)

    def test_adjacent_dot_products(self):
        dirs = dodecahedron()
        gram = dirs.vertices @ dirs.vertices.T
        np.fill_diagonal(gram, -np.inf)
        np.testing.assert_allclose(gram.max(axis=1), PSI, atol=1e-12)
        # 每个顶点恰有3个相邻顶点
        assert np.all(np.isclose(gram, PSI).sum(axis=1) == 3)

    def test_raw_mode(self):
        dirs = dodecahedron('raw')
        np.testing.assert_allclose(np.linalg.norm(dirs.vertices, axis=1), np.sqrt(3))
        assert dirs.psi == pytest.approx(PHI + 1 / PHI)
        assert dirs.psi == pytest.approx(np.sqrt(5))
        # 单位向量在原始顶点上的投影不超过 sqrt(3) < psi
        for v in (np.array([1.0, 0.0, 0.0]), dirs.vertices[0] / np.sqrt(3)):
            assert not project_quantize(v, dirs).any()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            dodecahedron('scaled')


class TestProjectQuantize:

    def test_every_vertex_is_one_hot(self):
        dirs = dodecahedron()
        for z, u in enumerate(dirs.vertices):
            b = project_quantize(u, dirs)
            assert np.flatnonzero(b).tolist() == [z]
            assert b[z] == pytest.approx(1 - PSI)

    def test_first_vertex_value(self):
        b = project_quantize(dodecahedron().vertices[0], dodecahedron())
        assert b[0] == pytest.approx(0.254644, abs=1e-6)

    def test_antipode(self):
        dirs = dodecahedron()
        b = project_quantize(-dirs.vertices[0], dirs)
        assert np.flatnonzero(b).tolist() == [7]

    def test_face_center_spreads_over_face(self):
        # 面心方向到该面5个顶点的投影相同（约0.7947），都略高于psi
        dirs = dodecahedron()
        v = np.array([0.0, PHI, 1.0])
        b = project_quantize(v / np.linalg.norm(v), dirs)
        nonzero = b[b > 0]
        assert len(nonzero) == 5
        np.testing.assert_allclose(nonzero, nonzero[0])
        assert nonzero[0] < 0.06

    def test_non_negative(self, rng):
        dirs = dodecahedron()
        for _ in range(50):
            v = rng.normal(size=3)
            assert (project_quantize(v / np.linalg.norm(v), dirs) >= 0).all()

    def test_not_unit(self):
        with pytest.raises(NotUnit):
            project_quantize([1.0, 1.0, 0.0], dodecahedron())


class TestHopc:

    def test_identity_basis(self):
        dirs = dodecahedron()
        h = hopc_from_basis([3.0, 2.0, 1.0], np.eye(3), dirs)
        assert h.shape == (HOPC_DIM,)
        np.testing.assert_allclose(np.linalg.norm(blocks(h), axis=1), [3, 2, 1])
        # 坐标轴方向落在两个 (±phi, 0, ±1/phi) 类顶点之间
        assert [np.count_nonzero(b) for b in blocks(h)] == [2, 2, 2]

    def test_zero_eigenvalue_block(self):
        h = hopc_from_basis([3.0, 2.0, 0.0], np.eye(3), dodecahedron())
        assert not blocks(h)[2].any()

    def test_collinear_support(self):
        vol = _volume([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
        h = hopc(vol, eigen_basis(vol), dodecahedron())
        b = blocks(h)
        assert np.linalg.norm(b[0]) == pytest.approx(2 / 3)
        np.testing.assert_allclose(b[1:], 0.0, atol=1e-12)

    def test_planar_grid(self):
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(3.0))
        vol = _volume(np.column_stack([xs.ravel(), ys.ravel(), np.zeros(15)]))
        basis = eigen_basis(vol)
        h = hopc(vol, basis, dodecahedron())
        np.testing.assert_allclose(blocks(h)[2], 0.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(blocks(h)[:2], axis=1), basis.eigenvalues[:2])

    def test_block_norms_bounded(self, rng):
        dirs = dodecahedron()
        for _ in range(20):
            lam = np.sort(rng.random(3))[::-1]
            h = hopc_from_basis(lam, random_rotation(rng), dirs)
            assert (h >= 0).all()
            norms = np.linalg.norm(blocks(h), axis=1)
            assert np.all((np.isclose(norms, 0)) | np.isclose(norms, lam))

    def test_batch_matches_single(self, rng):
        dirs = dodecahedron()
        lam = np.sort(rng.random((5, 3)), axis=1)[:, ::-1]
        V = np.stack([random_rotation(rng) for _ in range(5)])
        batch = hopc_from_basis(lam, V, dirs)
        for i in range(5):
            np.testing.assert_allclose(batch[i], hopc_from_basis(lam[i], V[i], dirs))

    def test_rotation_argument(self, rng):
        dirs = dodecahedron()
        R, V = random_rotation(rng), random_rotation(rng)
        np.testing.assert_allclose(hopc_from_basis([3, 2, 1], V, dirs, rotation=R),
                                   hopc_from_basis([3, 2, 1], R @ V, dirs))

    def test_empty_support(self):
        vol = build_support(single_frame([[9, 9, 9]]), (0, 0, 0), 1, 1.0, 0)
        basis = eigen_basis(_volume([[0, 0, 0], [1, 0, 0]]))
        with pytest.raises(EmptySupport):
            hopc(vol, basis, dodecahedron())
