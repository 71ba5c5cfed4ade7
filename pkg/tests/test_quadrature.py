import numpy as np
import pytest

from memrelax.pw_affine import unit_square_mesh
from memrelax.quadrature import integrate_adaptive, midpoint_rule


def test_midpoint_rule_exact_for_quadratics():
    mesh = unit_square_mesh(1)
    tris = mesh.vertices[mesh.triangles]
    f = lambda p: p[:, 0] ** 2 + p[:, 1]
    assert midpoint_rule(f, tris) == pytest.approx(1.0 / 3.0 + 0.5, abs=1e-14)


def test_adaptive_handles_kink():
    mesh = unit_square_mesh(1)
    f = lambda p: np.abs(p[:, 0] - 0.5)
    res = integrate_adaptive(f, mesh, rel_tol=1e-5, max_level=10)
    assert res.value == pytest.approx(0.25, rel=5e-4)
    assert res.level >= 1
    assert res.n_evals > 0


def test_adaptive_stops_early_on_smooth_integrand():
    mesh = unit_square_mesh(2)
    f = lambda p: 3.0 * np.ones(p.shape[0])
    res = integrate_adaptive(f, mesh, rel_tol=1e-6, max_level=8)
    assert res.value == pytest.approx(3.0, abs=1e-12)
    assert res.level <= 2


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        integrate_adaptive(lambda p: p[:, 0], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        integrate_adaptive(lambda p: p[:, 0], unit_square_mesh(1), rel_tol=0.0)
