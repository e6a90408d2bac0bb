"""HOPCMODL 模型文件"""
import json
import struct

import numpy as np
import pytest

from core.exceptions import ModelFormatError
from recognition.classifier import decision_scores, train
from recognition.codebook import Codebook
from recognition.model_io import (
    MAGIC, decode_container, encode_container, load_codebook, load_model, save_codebook, save_model
)
from recognition.pipeline import ActionModel, PipelineParams


@pytest.fixture
def model(rng):
    X = np.vstack([rng.random((6, 10)) + np.eye(10)[i * 3] for i in range(3)])
    labels = ['punch'] * 6 + ['sit'] * 6 + ['wave'] * 6
    codebook = Codebook(rng.random((8, 4)).astype(np.float32), keep_mask=[True] * 7 + [False],
                        seed=3, inertia=1.5, views=[0, 1])
    params = PipelineParams(mode='local', k=8, nk=50)
    return ActionModel(params, train(X, labels), codebook, [0, 1]), X


class TestContainer:

    def test_layout(self):
        buf = encode_container({'kind': 'test'}, {'a': np.arange(6).reshape(2, 3)})
        assert buf[:8] == MAGIC
        version, head_len = struct.unpack_from('<II', buf, 8)
        assert version == 1
        header = json.loads(buf[16:16 + head_len])
        assert header['arrays'] == [{'name': 'a', 'shape': [2, 3]}]
        assert len(buf) == 16 + head_len + 6 * 4

    def test_decode(self):
        header, arrays = decode_container(encode_container({'kind': 'x', 'n': 2}, {'v': np.array([1.5, -2.0])}))
        assert header == {'kind': 'x', 'n': 2}
        assert arrays['v'].dtype == np.float32
        np.testing.assert_array_equal(arrays['v'], [1.5, -2.0])

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError) as info:
            decode_container(b'NOTAMODEL' + bytes(20))
        assert info.value.offset == 0

    def test_bad_version(self):
        buf = bytearray(encode_container({}, {}))
        struct.pack_into('<I', buf, 8, 7)
        with pytest.raises(ModelFormatError) as info:
            decode_container(bytes(buf))
        assert info.value.offset == 8

    def test_truncated_array(self):
        buf = encode_container({}, {'v': np.ones(10)})
        with pytest.raises(ModelFormatError) as info:
            decode_container(buf[:-4])
        assert 'v' in str(info.value)

    def test_trailing_bytes(self):
        with pytest.raises(ModelFormatError):
            decode_container(encode_container({}, {'v': np.ones(2)}) + b'\x00')

    def test_header_too_long(self):
        buf = bytearray(encode_container({}, {}))
        struct.pack_into('<I', buf, 12, 10 ** 6)
        with pytest.raises(ModelFormatError) as info:
            decode_container(bytes(buf))
        assert info.value.offset == 12

    def test_corrupt_header(self):
        head = b'{not json'
        buf = MAGIC + struct.pack('<II', 1, len(head)) + head
        with pytest.raises(ModelFormatError):
            decode_container(buf)

    def test_invalid_shape(self):
        head = json.dumps({'arrays': [{'name': 'v', 'shape': ['x']}]}).encode()
        with pytest.raises(ModelFormatError):
            decode_container(MAGIC + struct.pack('<II', 1, len(head)) + head)

    @pytest.mark.parametrize('arrays', [
        [{'nbme': 'v', 'shape': [1]}],
        {'name': 'v', 'shape': [1]},
        ['v'],
        [{'name': 'v', 'shape': [-2, -2]}],
        [{'name': 'v', 'shape': [0, -1]}],
    ])
    def test_malformed_array_list(self, arrays):
        head = json.dumps({'kind': 'model', 'arrays': arrays}).encode()
        with pytest.raises(ModelFormatError) as info:
            decode_container(MAGIC + struct.pack('<II', 1, len(head)) + head + bytes(16))
        assert info.value.offset == 16

    def test_header_not_object(self):
        head = b'[1, 2]'
        with pytest.raises(ModelFormatError):
            decode_container(MAGIC + struct.pack('<II', 1, len(head)) + head)


class TestFiles:

    def test_codebook_round_trip(self, tmp_path, model):
        action_model, _ = model
        path = save_codebook(tmp_path / 'cb.bin', action_model.codebook, {'k': 8})
        codebook, meta = load_codebook(path)
        np.testing.assert_array_equal(codebook.centroids, action_model.codebook.centroids)
        assert codebook.keep_mask.tolist() == action_model.codebook.keep_mask.tolist()
        assert (codebook.seed, codebook.inertia, codebook.views) == (3, 1.5, [0, 1])
        assert meta == {'k': 8}

    def test_model_decisions_identical(self, tmp_path, model):
        action_model, X = model
        loaded = load_model(save_model(tmp_path / 'model.bin', action_model, {'note': 'x'}))
        assert loaded.classifier.classes == action_model.classifier.classes
        np.testing.assert_array_equal(decision_scores(loaded.classifier, X),
                                      decision_scores(action_model.classifier, X))
        assert loaded.params == action_model.params
        assert loaded.train_views == [0, 1]
        assert loaded.codebook.n_kept == 7

    def test_model_without_codebook(self, tmp_path, model):
        action_model, _ = model
        action_model.codebook = None
        loaded = load_model(save_model(tmp_path / 'model.bin', action_model))
        assert loaded.codebook is None

    def test_kind_mismatch(self, tmp_path, model):
        action_model, _ = model
        path = save_codebook(tmp_path / 'cb.bin', action_model.codebook)
        with pytest.raises(ModelFormatError):
            load_model(path)
        with pytest.raises(ModelFormatError):
            load_codebook(save_model(tmp_path / 'model.bin', action_model))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / 'missing.bin')
