"""hopc 命令行"""
import json
import struct

import numpy as np
import plyfile
import pytest

from data.pcseq import load_pcseq
from data.stk_io import load_descriptors, load_stks
import main as entry
from main import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def _spec(tmp_path, motion: str, seed: int) -> str:
    path = tmp_path / f'{motion}.json'
    path.write_text(json.dumps({'motion': motion, 'frames': 10, 'points_per_frame': 300, 'seed': seed,
                                'translation': [0.0, 0.0, 0.0]}), encoding='utf-8')
    return str(path)


def _synth(tmp_path, motion: str, seed: int = 1) -> str:
    out = str(tmp_path / f'{motion}.pcseq')
    assert main(['--quiet', 'synth', '--spec', _spec(tmp_path, motion, seed), '--out', out]) == EXIT_OK
    return out


class TestUsage:

    def test_no_subcommand(self, quiet_monitor):
        assert main([]) == EXIT_USAGE

    def test_bad_protocol(self, quiet_monitor):
        assert main(['evaluate', '--protocol', 'cross-time']) == EXIT_USAGE

    def test_overlapping_views(self, quiet_monitor):
        code = main(['--quiet', 'evaluate', '--train-views', '0,1', '--test-views', '1', '--subjects', '1',
                     '--frames', '6', '--points', '80'])
        assert code == EXIT_USAGE

    def test_bad_view_list(self, quiet_monitor):
        assert main(['evaluate', '--test-views', 'a,b']) == EXIT_USAGE


class TestDataErrors:

    def test_missing_input(self, tmp_path, quiet_monitor):
        code = main(['--quiet', 'detect', '--in', str(tmp_path / 'none.pcseq'), '--out', str(tmp_path / 's.bin')])
        assert code == EXIT_DATA

    def test_corrupt_model(self, tmp_path, quiet_monitor):
        model = tmp_path / 'model.bin'
        model.write_bytes(b'HOPCMODL' + bytes(4))
        seq = _synth(tmp_path, 'wave')
        assert main(['--quiet', 'classify', '--model', str(model), '--in', seq]) == EXIT_DATA

    def test_corrupt_sequence(self, tmp_path, quiet_monitor):
        path = tmp_path / 'bad.pcseq'
        path.write_bytes(b'PCSQ\x01\x00\x00\x00\x05\x00\x00\x00')
        code = main(['--quiet', 'holistic', '--in', str(path), '--out', str(tmp_path / 'h.bin')])
        assert code == EXIT_DATA

    def test_model_header_without_name(self, tmp_path, quiet_monitor):
        head = json.dumps({'kind': 'model', 'arrays': [{'nbme': 'support_vectors', 'shape': [1]}]}).encode()
        model = tmp_path / 'model.bin'
        model.write_bytes(b'HOPCMODL' + struct.pack('<II', 1, len(head)) + head + bytes(4))
        seq = _synth(tmp_path, 'wave')
        assert main(['--quiet', 'classify', '--model', str(model), '--in', seq]) == EXIT_DATA

    def test_unexpected_parse_error(self, tmp_path, quiet_monitor, monkeypatch):
        def broken(*args, **kwargs):
            raise KeyError('frames')

        monkeypatch.setattr(entry, 'load_pcseq', broken)
        seq = _synth(tmp_path, 'wave')
        code = main(['--quiet', 'holistic', '--in', seq, '--out', str(tmp_path / 'h.bin')])
        assert code == EXIT_DATA


@pytest.mark.slow
class TestCommands:

    def test_synth(self, tmp_path, quiet_monitor):
        seq = load_pcseq(_synth(tmp_path, 'sit', seed=4))
        assert seq.n_f == 10 and all(len(f) == 300 for f in seq.frames)

    def test_detect_describe_export(self, tmp_path, quiet_monitor):
        seq = _synth(tmp_path, 'wave')
        stks_path, desc_path, ply_path = (str(tmp_path / n) for n in ('w.stks', 'w.desc', 'w.ply'))

        assert main(['--quiet', 'detect', '--in', seq, '--nk', '30', '--out', stks_path]) == EXIT_OK
        stks, meta = load_stks(stks_path)
        assert meta['nk'] == 30 and meta['tau_m'] == 2 and meta['r'] > 0
        assert len(stks) <= 30

        assert main(['--quiet', 'describe', '--in', seq, '--stks', stks_path, '--label', 'wave', '--view', '0',
                     '--out', desc_path]) == EXIT_OK
        desc = load_descriptors(desc_path)
        assert desc.local.shape == (len(stks), 720)
        assert desc.meta['label'] == 'wave' and desc.meta['sample'] == 'wave'
        assert (desc.stkd is None) == ('stkd_error' in desc.meta)

        assert main(['--quiet', 'export-ply', '--stks', stks_path, '--out', ply_path]) == EXIT_OK
        assert plyfile.PlyData.read(ply_path)['vertex'].count == len(stks)

    def test_holistic_train_classify(self, tmp_path, quiet_monitor, capsys):
        descs = tmp_path / 'descs'
        for motion, seed in (('wave', 1), ('wave', 2), ('sit', 3), ('sit', 4)):
            seq = _synth(tmp_path, motion, seed)
            out = str(descs / f'{motion}{seed}.bin')
            assert main(['--quiet', 'holistic', '--in', seq, '--id', f'{motion}{seed}', '--label', motion,
                         '--out', out]) == EXIT_OK
        vector = load_descriptors(descs / 'wave1.bin').holistic
        assert vector.shape == (5400,) and np.isfinite(vector).all()

        model = str(tmp_path / 'model.bin')
        assert main(['--quiet', 'train', '--features', str(descs), '--mode', 'holistic', '--out', model]) == EXIT_OK
        capsys.readouterr()
        assert main(['--quiet', 'classify', '--model', model, '--in', str(tmp_path / 'sit.pcseq')]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        label_line = [line for line in lines if line in ('wave', 'sit')]
        assert label_line
        assert any(line.startswith(('wave\t', 'sit\t')) for line in lines)

    def test_train_needs_labels(self, tmp_path, quiet_monitor):
        descs = tmp_path / 'descs'
        seq = _synth(tmp_path, 'wave')
        assert main(['--quiet', 'holistic', '--in', seq, '--out', str(descs / 'a.bin')]) == EXIT_OK
        code = main(['--quiet', 'train', '--features', str(descs), '--mode', 'holistic',
                     '--out', str(tmp_path / 'm.bin')])
        assert code == EXIT_USAGE
