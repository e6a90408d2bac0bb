"""几何核心：支撑体、协方差、特征分解、符号消歧"""
import time

import numpy as np
import pytest

from core.exceptions import EmptySupport, GeometryError, NotSymmetric
from core.geometry import (
    EigenBasis, PointCloudFrame, PointCloudSequence, SupportVolume, VolumeKind, WindowNeighbors,
    batch_bases, batch_covariance, build_support, covariance, disambiguate, eigen3, eigen_basis, eigenratios,
    random_rotation, rotation_matrix
)

from conftest import single_frame


def _volume(members, center=(0.0, 0.0, 0.0)) -> SupportVolume:
    members = np.asarray(members, dtype=np.float64)
    n = len(members)
    return SupportVolume(np.asarray(center, dtype=np.float64), members, VolumeKind.SPATIAL, 10.0, 0, 1,
                         np.ones(n, dtype=np.int64), np.arange(n))


class TestBuildSupport:

    def test_spatial_distance_filter(self):
        seq = single_frame([[0, 0, 0], [1, 0, 0], [5, 0, 0]])
        vol = build_support(seq, (0, 0, 0), 1, 2.0, 0, VolumeKind.SPATIAL)
        np.testing.assert_array_equal(vol.members, [[0, 0, 0], [1, 0, 0]])

    def test_window_clipped_at_first_frame(self):
        seq = PointCloudSequence.from_arrays([np.zeros((1, 3))] * 3)
        vol = build_support(seq, (0, 0, 0), 1, 1.0, 1)
        np.testing.assert_array_equal(vol.frame_ids, [1, 2])

    def test_duplicates_across_frames_retained(self):
        seq = PointCloudSequence.from_arrays([np.zeros((1, 3))] * 3)
        vol = build_support(seq, (0, 0, 0), 2, 1.0, 1)
        assert vol.n_p == 3

    def test_spatial_kind_ignores_tau(self):
        seq = PointCloudSequence.from_arrays([np.zeros((1, 3))] * 3)
        vol = build_support(seq, (0, 0, 0), 2, 1.0, 5, VolumeKind.SPATIAL)
        assert vol.n_p == 1 and vol.tau == 0

    def test_bad_radius_and_frame(self):
        seq = single_frame([[0, 0, 0]])
        with pytest.raises(GeometryError):
            build_support(seq, (0, 0, 0), 1, 0.0, 0)
        with pytest.raises(GeometryError):
            build_support(seq, (0, 0, 0), 2, 1.0, 0)

    def test_frames_must_increase(self):
        with pytest.raises(GeometryError):
            PointCloudSequence([PointCloudFrame(2, np.zeros((1, 3))), PointCloudFrame(1, np.zeros((1, 3)))])


class TestCovarianceAndEigen:

    def test_hand_computed_covariance(self):
        mu, C = covariance(_volume([[0, 0, 0], [2, 0, 0], [0, 2, 0]]))
        np.testing.assert_allclose(mu, [2 / 3, 2 / 3, 0], atol=1e-12)
        np.testing.assert_allclose(C, [[8 / 9, -4 / 9, 0], [-4 / 9, 8 / 9, 0], [0, 0, 0]], atol=1e-12)

    def test_single_point_and_equal_points(self):
        mu, C = covariance(_volume([[1, 2, 3]]))
        np.testing.assert_array_equal(mu, [1, 2, 3])
        np.testing.assert_array_equal(C, np.zeros((3, 3)))
        _, C = covariance(_volume([[1, 1, 1]] * 4))
        np.testing.assert_allclose(C, 0.0, atol=1e-15)

    def test_empty_volume(self):
        seq = single_frame([[5, 5, 5]])
        vol = build_support(seq, (0, 0, 0), 1, 1.0, 0)
        with pytest.raises(EmptySupport):
            covariance(vol)

    def test_eigenvalues_of_covariance_example(self):
        C = np.array([[8 / 9, -4 / 9, 0], [-4 / 9, 8 / 9, 0], [0, 0, 0]])
        lam, V = eigen3(C)
        np.testing.assert_allclose(lam, [4 / 3, 4 / 9, 0], atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        lam, V = eigen3(np.diag([4.0, 1.0, 0.0]))
        np.testing.assert_allclose(lam, [4, 1, 0])
        np.testing.assert_allclose(np.abs(V), np.eye(3), atol=1e-12)

    def test_identity_degenerate(self):
        lam, V = eigen3(np.eye(3))
        np.testing.assert_allclose(lam, [1, 1, 1])
        np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            eigen3([[1, 1, 0], [0, 1, 0], [0, 0, 1]])

    def test_reconstruction_on_random_covariance(self, rng):
        pts = rng.normal(size=(50, 3)) * [3.0, 1.0, 0.2]
        _, C = covariance(_volume(pts))
        lam, V = eigen3(C)
        assert lam[0] >= lam[1] >= lam[2] >= 0
        np.testing.assert_allclose(V @ np.diag(lam) @ V.T, C, atol=1e-9 * np.linalg.norm(C))

    def test_reconstruction_on_many_psd_matrices(self, rng):
        M = rng.normal(size=(10_000, 3, 3))
        # 四分之一为秩2矩阵
        M[::4, :, 2] = 0.0
        C = M @ M.transpose(0, 2, 1)
        start = time.perf_counter()
        for c in C:
            lam, V = eigen3(c)
            assert lam[0] >= lam[1] >= lam[2] >= 0
            error = np.linalg.norm(V @ np.diag(lam) @ V.T - c)
            assert error <= 1e-9 * np.linalg.norm(c)
        assert time.perf_counter() - start < 5.0

    def test_batch_bases_right_handed(self, rng):
        n, per = 10_000, 8
        members = rng.normal(size=(n * per, 3)) * [2.0, 1.0, 0.5]
        seg = np.repeat(np.arange(n), per)
        counts = np.full(n, per)
        batch = batch_bases(members, seg, counts, members[::per])
        V = batch.eigenvectors
        assert np.all(np.diff(batch.eigenvalues, axis=1) <= 0)
        np.testing.assert_allclose(np.cross(V[:, :, 0], V[:, :, 1]), V[:, :, 2], atol=1e-9)
        np.testing.assert_allclose(np.einsum('nji,njk->nik', V, V), np.broadcast_to(np.eye(3), (n, 3, 3)),
                                   atol=1e-9)


class TestDisambiguate:

    def test_vector_points_towards_members(self):
        vol = _volume([[1, 0.5, 0.2], [2, -0.1, 0.3], [3, 0.2, 0.1]])
        basis = disambiguate((np.array([3.0, 2.0, 1.0]), np.diag([-1.0, 1.0, -1.0])), vol)
        np.testing.assert_allclose(basis.eigenvectors, np.eye(3))
        assert basis.is_right_handed() and not basis.ambiguous

    def test_symmetric_members_keep_input_sign(self):
        vol = _volume([[1, 0, 0], [-1, 0, 0]])
        basis = disambiguate((np.array([1.0, 0.0, 0.0]), np.eye(3)), vol)
        assert basis.degenerate[0]
        np.testing.assert_array_equal(basis.eigenvectors[:, 0], [1, 0, 0])

    def test_handedness_flips_weakest_vector(self):
        vol = _volume([[3, 0, 0], [0, 3, 0], [0, 0, -0.1]])
        V = np.column_stack([[1, 0, 0], [0, 1, 0], [0, 0, -1.0]])
        basis = disambiguate((np.array([3.0, 3.0, 0.01]), V), vol)
        np.testing.assert_allclose(basis.eigenvectors, np.eye(3))
        assert basis.is_right_handed()

    def test_rotation_equivariance(self, rng):
        pts = rng.normal(size=(40, 3)) * [2.0, 1.0, 0.5] + [0.3, 0.1, 0.0]
        R = random_rotation(rng)
        a = eigen_basis(_volume(pts))
        b = eigen_basis(_volume(pts @ R.T))
        np.testing.assert_allclose(b.eigenvectors, R @ a.eigenvectors, atol=1e-9)
        np.testing.assert_allclose(b.eigenvalues, a.eigenvalues, atol=1e-9)


class TestBatch:

    def test_batch_matches_single_point(self, rng):
        frames = [rng.random((60, 3)) for _ in range(5)]
        seq = PointCloudSequence.from_arrays(frames)
        centers = frames[2][:10]
        neighbors = WindowNeighbors(seq, centers, 3, 0.5, 2)
        members, seg, _, _, counts = neighbors.gather(1)
        batch = batch_bases(members, seg, counts, centers)
        for i, p in enumerate(centers):
            single = eigen_basis(build_support(seq, p, 3, 0.5, 1))
            np.testing.assert_allclose(batch.eigenvalues[i], single.eigenvalues, atol=1e-10)
            np.testing.assert_allclose(batch.eigenvectors[i], single.eigenvectors, atol=1e-8)
            np.testing.assert_allclose(batch.means[i], single.mean, atol=1e-12)

    def test_gather_rejects_tau_beyond_window(self, rng):
        seq = PointCloudSequence.from_arrays([rng.random((10, 3)) for _ in range(3)])
        neighbors = WindowNeighbors(seq, seq.frame(2).points, 2, 0.5, 1)
        with pytest.raises(GeometryError):
            neighbors.gather(2)

    def test_window_covariance_matches_gathered_members(self, rng):
        seq = PointCloudSequence.from_arrays([rng.random((60, 3)) + [0.03 * f, 0, 0] for f in range(7)])
        neighbors = WindowNeighbors(seq, seq.frame(4).points, 4, 0.4, 3)
        for tau in range(4):
            counts, C = neighbors.window_covariance(tau)
            members, seg, _, _, gathered = neighbors.gather(tau)
            _, expected = batch_covariance(members, seg, gathered)
            np.testing.assert_array_equal(counts, gathered)
            np.testing.assert_allclose(C, expected, atol=1e-12)
        with pytest.raises(GeometryError):
            neighbors.window_covariance(4)


class TestConventions:

    def test_eigenratios(self):
        d12, d23 = eigenratios([[4, 1, 0], [0, 0, 0], [1, 1, 1], [2, 1, 0.5]])
        np.testing.assert_array_equal(d12, [4, 1, 1, 2])
        np.testing.assert_array_equal(d23, [np.inf, 1, 1, 2])

    def test_rotations_are_proper(self, rng):
        for R in (rotation_matrix(0.3, -0.2, 0.1), random_rotation(rng)):
            np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0)

    def test_basis_checks(self):
        basis = EigenBasis(np.ones(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3))
        assert basis.is_orthonormal() and not basis.is_right_handed()
