import math

import numpy as np
import pytest

import oxyspec


def test_wavelength_grid():
    wl = oxyspec.default_wavelengths()
    assert len(wl) == 51
    assert wl[0] == 440.0 and wl[-1] == 640.0


def test_extinction_is_positive():
    hbo2, hb = oxyspec.extinction(560.0)
    assert hbo2 > 0 and hb > 0
    with pytest.raises(oxyspec.OxyspecError):
        oxyspec.extinction(900.0)


def test_normalization_is_scale_free():
    s = np.linspace(0.2, 0.6, 16)
    a = np.asarray(oxyspec.auc_normalize(s))
    b = np.asarray(oxyspec.auc_normalize(7.0 * s))
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert np.trapezoid(a) == pytest.approx(1.0)


def test_simulated_spectrum():
    s = oxyspec.simulate_spectrum(tissue_seed=3, photons=200, seed=1)
    r = np.asarray(s["reflectance"])
    assert r.shape == (51,)
    assert np.all((r >= 0) & (r <= 1))


def test_dataset_round_trip(tmp_path):
    x, y, d = oxyspec.generate_dataset(6, photons=10, seed=5)
    assert x.shape == (6, 16) and y.shape == (6,)
    path = tmp_path / "d.oxds"
    oxyspec.save_dataset(path, x, y)
    x2, y2, _ = oxyspec.load_dataset(path)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


def test_model_predicts_and_maps(tmp_path):
    model = oxyspec.Model.create("fcn", seed=2)
    x = np.full((4, 16), 1.0 / 15.0, dtype=np.float32)
    p = np.asarray(model.predict(x))
    assert p.shape == (4,) and np.all(p == p[0])
    model.save(tmp_path / "m.oxnn")
    back = oxyspec.Model.load(tmp_path / "m.oxnn")
    assert back.variant == "fcn"
    assert np.array_equal(np.asarray(back.predict(x)), p)
    cube = np.ones((3, 5, 16), dtype=np.float32)
    m = back.infer_map(cube)
    assert m.shape == (3, 5)
    assert np.all((m >= 0) & (m <= 1))


def test_unmixing_and_fit():
    with pytest.raises(oxyspec.OxyspecError):
        oxyspec.unmix(np.zeros(16))
    o2 = np.linspace(0, 1, 12)
    fit = oxyspec.fit_lactate(o2, 1.5 * np.exp(-5.0 * o2))
    assert fit["a"] == pytest.approx(1.5, rel=1e-9)
    assert fit["b"] == pytest.approx(-5.0, rel=1e-9)
    assert math.isclose(fit["r_squared"], 1.0)
