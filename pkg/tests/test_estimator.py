import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from glauert.estimator import ConvectedScatteringSolver
from glauert.exceptions import EtaError
from glauert.postprocess import probe_sphere

from oracles import mie_sound_hard


def test_params_roundtrip():
    est = ConvectedScatteringSolver(k_hat=2.0, eta=3 + 1j)
    params = est.get_params()
    assert params["k_hat"] == 2.0 and params["eta"] == 3 + 1j
    est.set_params(mach=0.3, formulation="unstable")
    assert clone(est).get_params()["mach"] == 0.3


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        ConvectedScatteringSolver().predict(np.ones((1, 3)) * 3)


def test_fit_rejects_bad_input(tiny_shell):
    with pytest.raises(TypeError):
        ConvectedScatteringSolver().fit(np.zeros((4, 3)))
    with pytest.raises(EtaError):
        ConvectedScatteringSolver(eta=1j).fit(tiny_shell)


def test_fit_predict_rest_medium(tiny_shell):
    est = ConvectedScatteringSolver(k_hat=1.0, tol=1e-9).fit(tiny_shell)
    assert est.n_iter_ > 0 and est.report_.converged
    pts = probe_sphere(2.5, 16)
    f = est.predict(pts)
    sc = est.predict_scattered(pts)
    np.testing.assert_allclose(f - sc, np.exp(1j * pts[:, 2]), rtol=1e-13)
    ref = mie_sound_hard(pts, 1.0, a=0.5)
    assert np.linalg.norm(sc - ref) <= 0.2 * np.linalg.norm(ref)
    np.testing.assert_allclose(est.predict_pressure(pts), 1j * est.ambient_.omega * f, rtol=1e-13)
    assert est.predict(np.zeros((0, 3))).shape == (0,)
    with pytest.raises(ValueError):
        est.predict(np.ones((2, 2)))


def test_moving_medium_fit(tiny_shell):
    est = ConvectedScatteringSolver(k_hat=1.0, mach=0.3, incident="monopole", source=(0, 0, -2.0),
                                    flow="sphere_dipole").fit(tiny_shell)
    assert est.report_.converged
    assert np.all(np.isfinite(est.predict_pressure(probe_sphere(2.5, 6))))
