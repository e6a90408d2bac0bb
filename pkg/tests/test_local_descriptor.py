"""Local / Holistic HOPC"""
import numpy as np
import pytest

from core.detector import DetectorParams, StkRecord, detect
from core.exceptions import GeometryError, InvalidBasis
from core.geometry import (
    EigenBasis, PointCloudFrame, PointCloudSequence, SupportVolume, VolumeKind, WindowNeighbors, batch_bases,
    build_support, eigen_basis, random_rotation, rotation_matrix
)
from core.hopc import dodecahedron
from core.local_descriptor import (
    CellGrid, PointBasisCache, bin_index, contribution_mask, describe_stks, holistic_hopc, local_hopc,
    orient_points, point_contribution
)
from core.scale import ScaleParams, spatial_scale, subject_height

R_LOCAL = 0.3


def _cell_norms(desc: np.ndarray) -> np.ndarray:
    return np.linalg.norm(desc.reshape(-1, 60), axis=1)


def _stk_at(seq: PointCloudSequence, t: int, index: int) -> StkRecord:
    p = seq.frame(t).points[index]
    basis = eigen_basis(build_support(seq, p, t, R_LOCAL, 0, VolumeKind.SPATIAL))
    return StkRecord(p.copy(), t, 1, basis, basis, 1.0, R_LOCAL, 0, index)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def _stk_like(seq: PointCloudSequence, stk: StkRecord, r: float) -> StkRecord:
    """在另一序列中同帧同编号的点上重建STK（特征基在该序列上重新计算）"""
    p = seq.frame(stk.t).points[stk.point_index]
    basis = eigen_basis(build_support(seq, p, stk.t, r, 0, VolumeKind.SPATIAL))
    return StkRecord(p.copy(), stk.t, stk.tau_star, basis, basis, stk.quality, r, stk.order, stk.point_index)


def _gathered(seq: PointCloudSequence, t: int, tau: int):
    """整帧所有点在tau下的合并近邻，供 batch_bases 使用"""
    centers = seq.frame(t).points
    members, seg, _, _, counts = WindowNeighbors(seq, centers, t, R_LOCAL, tau).gather(tau)
    return members, seg, counts, centers


@pytest.fixture(scope='module')
def wave_stks(wave_sequence):
    seq, _ = wave_sequence
    return detect(seq, DetectorParams(r=R_LOCAL, stride=3, nk=40))


def _descriptor_cosines(seq, other, stks, r_seq: float, r_other: float) -> np.ndarray:
    grid, dirs = CellGrid(2, 2, 3), dodecahedron()
    cosines = []
    for stk in stks:
        a = local_hopc(_stk_like(seq, stk, r_seq), seq, grid, 1.3, dirs)
        b = local_hopc(_stk_like(other, stk, r_other), other, grid, 1.3, dirs)
        if np.linalg.norm(a) > 0 and np.linalg.norm(b) > 0:
            cosines.append(_cosine(a, b))
    assert cosines
    return np.array(cosines)


class TestCellGrid:

    def test_parse(self):
        grid = CellGrid.parse('2x2x3')
        assert (grid.n_x, grid.n_y, grid.n_t) == (2, 2, 3)
        assert grid.gamma == 12 and grid.dim == 720
        assert str(grid) == '2x2x3'
        assert CellGrid.parse('6X5X3').dim == 5400

    @pytest.mark.parametrize('text', ['2x2', 'axbxc', '2x2x3x1'])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            CellGrid.parse(text)

    def test_non_positive(self):
        with pytest.raises(ValueError):
            CellGrid(0, 2, 3)

    def test_bin_index(self):
        idx = bin_index(np.array([-1.0, 0.0, 0.49, 0.5, 1.0, 2.0]), 0.0, 1.0, 2)
        np.testing.assert_array_equal(idx, [0, 0, 0, 1, 1, 1])
        np.testing.assert_array_equal(bin_index(np.array([3.0, 4.0]), 1.0, 1.0, 4), [0, 0])

    def test_cell_order_x_fastest(self):
        grid = CellGrid(2, 2, 3)
        cells = grid.cells(np.array([0.9, 0.1, 0.1]), np.array([0.1, 0.9, 0.1]), np.array([0.1, 0.1, 2.9]),
                           (0, 1), (0, 1), (0, 3))
        np.testing.assert_array_equal(cells, [1, 2, 8])


class TestContribution:

    def test_mask_rules(self):
        mask = contribution_mask(np.array([[4.0, 2.0, 1.0], [1.0, 1.0, 0.5], [4.0, 1.0, 1.0], [1.0, 1.0, 1.0]]), 1.3)
        np.testing.assert_array_equal(mask, [[1, 1, 1], [0, 0, 1], [1, 0, 0], [0, 0, 0]])

    def test_empty_neighbourhood(self):
        vol = build_support(PointCloudSequence.from_arrays([np.array([[5.0, 5, 5]])]), (0, 0, 0), 1, 1.0, 0)
        assert not point_contribution(vol, 1.3, dodecahedron()).any()

    def test_isotropic_neighbourhood_contributes_nothing(self):
        pts = np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
        vol = build_support(PointCloudSequence.from_arrays([pts]), (0, 0, 0), 1, 2.0, 0)
        assert not point_contribution(vol, 1.3, dodecahedron()).any()


class TestOrientPoints:

    def test_mean_maps_to_origin(self, rng):
        pts = rng.normal(size=(30, 3)) * [1.0, 0.5, 0.2] + [2.0, 1.0, 0.0]
        seq = PointCloudSequence.from_arrays([pts])
        vol = build_support(seq, pts.mean(axis=0), 1, 10.0, 0, VolumeKind.SPATIAL)
        basis = eigen_basis(vol)
        local = orient_points(vol, basis)
        np.testing.assert_allclose(local.mean(axis=0), 0.0, atol=1e-12)
        # 第一主方向映射到X轴
        variances = local.var(axis=0)
        assert variances[0] > variances[1] > variances[2]

    def test_left_handed_basis(self):
        vol = SupportVolume(np.zeros(3), np.ones((2, 3)), VolumeKind.SPATIAL, 1.0, 0, 1,
                            np.ones(2, dtype=np.int64), np.arange(2))
        with pytest.raises(InvalidBasis):
            orient_points(vol, EigenBasis(np.ones(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3)))


class TestLocalHopc:

    def test_length_and_unit_cells(self, wave_sequence):
        seq, masks = wave_sequence
        index = int(np.flatnonzero(masks[5])[0])
        desc = local_hopc(_stk_at(seq, 6, index), seq, CellGrid(2, 2, 3), 1.3, dodecahedron())
        assert desc.shape == (720,)
        norms = _cell_norms(desc)
        assert norms.max() > 0
        assert np.all(np.isclose(norms, 0.0) | np.isclose(norms, 1.0))

    def test_describe_many(self, wave_sequence):
        seq, masks = wave_sequence
        moving = np.flatnonzero(masks[3])[:3]
        stks = [_stk_at(seq, 4, int(i)) for i in moving]
        batch = describe_stks(stks, seq, CellGrid(2, 2, 3), 1.3, dodecahedron())
        assert batch.shape == (3, 720)
        np.testing.assert_allclose(batch[1], local_hopc(stks[1], seq, CellGrid(2, 2, 3), 1.3, dodecahedron()))

    def test_describe_nothing(self, wave_sequence):
        seq, _ = wave_sequence
        assert describe_stks([], seq, CellGrid(2, 2, 3)).shape == (0, 720)

    def test_cache_only_reserved_points(self, wave_sequence):
        seq, _ = wave_sequence
        cache = PointBasisCache(seq, R_LOCAL)
        cache.reserve(np.array([4, 4, 5]), np.array([9, 2, 7]), 2)
        batch, rows = cache.get(4, 1, np.array([2, 9]))
        assert len(batch) == 2 and rows.tolist() == [0, 1]
        full = batch_bases(*_gathered(seq, 4, 1))
        np.testing.assert_allclose(batch.eigenvalues, full.eigenvalues[[2, 9]], atol=1e-12)
        np.testing.assert_allclose(batch.eigenvectors, full.eigenvectors[[2, 9]], atol=1e-9)
        with pytest.raises(GeometryError):
            cache.get(4, 1, np.array([3]))
        with pytest.raises(GeometryError):
            cache.get(4, 3, np.array([2]))

    def test_cache_reserve_after_use(self, wave_sequence):
        seq, _ = wave_sequence
        cache = PointBasisCache(seq, R_LOCAL)
        cache.reserve(np.array([4]), np.array([2]), 1)
        before, _ = cache.get(4, 1, np.array([2]))
        cache.reserve(np.array([4]), np.array([5]), 2)
        after, rows = cache.get(4, 1, np.array([2, 5]))
        assert rows.tolist() == [0, 1]
        np.testing.assert_allclose(after.eigenvectors[0], before.eigenvectors[0], atol=1e-9)

    @pytest.mark.parametrize('seed', range(10))
    def test_rotation_invariance(self, wave_sequence, wave_stks, seed):
        seq, _ = wave_sequence
        rng = np.random.default_rng(200 + seed)
        moved = seq.transformed(random_rotation(rng), rng.uniform(-1.0, 1.0, 3))
        cosines = _descriptor_cosines(seq, moved, wave_stks, R_LOCAL, R_LOCAL)
        assert cosines.min() >= 0.99

    def test_depth_noise(self, wave_sequence, wave_stks):
        seq, _ = wave_sequence
        rng = np.random.default_rng(11)
        moved = seq.transformed(rotation_matrix(1.1, 0.4, -0.2), [0.3, 0.2, 2.0])
        sigma_n = 0.005 * subject_height(seq, ScaleParams())
        noisy = PointCloudSequence([
            PointCloudFrame(f.index, f.points + rng.normal(0.0, sigma_n, len(f.points))[:, None] * [0.0, 0.0, 1.0])
            for f in moved.frames
        ])
        cosines = _descriptor_cosines(seq, noisy, wave_stks, R_LOCAL, R_LOCAL)
        assert cosines.mean() >= 0.9

    def test_scale_invariance(self, wave_sequence, wave_stks):
        seq, _ = wave_sequence
        params = ScaleParams()
        r = spatial_scale(seq, params)
        bigger = seq.transformed(np.eye(3), scale=1.5)
        r_big = spatial_scale(bigger, params)
        assert r_big == pytest.approx(1.5 * r)
        cosines = _descriptor_cosines(seq, bigger, wave_stks, r, r_big)
        assert cosines.min() >= 0.99


class TestHolisticHopc:

    def test_length_and_unit_cells(self, wave_sequence):
        seq, _ = wave_sequence
        desc = holistic_hopc(seq, CellGrid(6, 5, 3), tau=2, dirs=dodecahedron(), r=R_LOCAL, stride=4)
        assert desc.shape == (5400,)
        norms = _cell_norms(desc)
        assert norms.max() > 0
        assert np.all(np.isclose(norms, 0.0) | np.isclose(norms, 1.0))

    def test_empty_sequence(self):
        seq = PointCloudSequence.from_arrays([np.empty((0, 3))] * 4)
        desc = holistic_hopc(seq, CellGrid(2, 2, 2), tau=1, dirs=dodecahedron(), r=0.5)
        assert desc.shape == (480,) and not desc.any()

    def test_depends_on_viewpoint(self, wave_sequence):
        seq, _ = wave_sequence
        moved = seq.transformed(rotation_matrix(np.pi / 2))
        a = holistic_hopc(seq, CellGrid(6, 5, 3), tau=2, dirs=dodecahedron(), r=R_LOCAL, stride=4)
        b = holistic_hopc(moved, CellGrid(6, 5, 3), tau=2, dirs=dodecahedron(), r=R_LOCAL, stride=4)
        assert _cosine(a, b) < 0.9
