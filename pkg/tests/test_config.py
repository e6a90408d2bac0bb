"""配置验证"""
import pytest

from config import settings


def test_defaults_valid():
    assert settings.validate_config() is True


@pytest.mark.parametrize('section, key, value', [
    ('SCALE_CONFIG', 'sigma', 1.5),
    ('SCALE_CONFIG', 'spatial_mode', 'width'),
    ('DETECTOR_CONFIG', 'theta_stk', 1.0),
    ('DETECTOR_CONFIG', 'stride', 0),
    ('DESCRIPTOR_CONFIG', 'vertex_mode', 'icosahedron'),
    ('DESCRIPTOR_CONFIG', 'grid', (2, 0, 3)),
    ('STKD_CONFIG', 'min_keep', 3),
    ('CLASSIFIER_CONFIG', 'keep_fraction', 0.0),
])
def test_invalid_values(monkeypatch, capsys, section, key, value):
    monkeypatch.setitem(getattr(settings, section), key, value)
    with pytest.raises(ValueError):
        settings.validate_config()
    assert '[失败]' in capsys.readouterr().out


def test_constant_radius_required(monkeypatch):
    monkeypatch.setitem(settings.SCALE_CONFIG, 'spatial_mode', 'constant')
    with pytest.raises(ValueError):
        settings.validate_config()
    monkeypatch.setitem(settings.SCALE_CONFIG, 'constant_radius', 0.3)
    assert settings.validate_config() is True
