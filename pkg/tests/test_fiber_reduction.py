import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memrelax.energy_models import EnergyModel, ReciprocalBarrier, ShiftedLogBarrier
from memrelax.fiber_reduction import (
    ReducedDensity, w0_batch, w0_bruteforce, w0_closed_form, w0_growth_constant,
)
from memrelax.tensor_kernel import INFINITE, mat32, wedge_norm

E1E2 = mat32([1, 0, 0], [0, 1, 0])
W0_E1E2 = 2.0 + 3.0 * 2.0 ** (-2.0 / 3.0)  # minimizer of 1/t + t^2 shifted by |xi|^2


def test_frozen_value_and_witness():
    m = EnergyModel()
    val, zeta = w0_closed_form(m, E1E2, return_witness=True)
    assert val.finite == pytest.approx(W0_E1E2, abs=1e-10)
    # the abscissa is only sqrt(eps)-accurate for a value-based minimizer
    assert zeta == pytest.approx([0.0, 0.0, 2.0 ** (-1.0 / 3.0)], abs=1e-6)


def test_rank_deficient_is_exactly_infinite():
    m = EnergyModel()
    val, zeta = w0_closed_form(m, mat32([1, 0, 0], [2, 0, 0]), return_witness=True)
    assert val == INFINITE
    assert zeta is None


def test_oracle_agreement_at_fine_grid():
    m = EnergyModel()
    oracle = w0_bruteforce(m, E1E2, 201)
    assert abs(oracle.finite - W0_E1E2) <= 1e-3


def test_oracle_nested_grid_monotone():
    m = EnergyModel()
    xi = mat32([1.0, 0.3, -0.2], [0.1, 0.9, 0.4])
    coarse = w0_bruteforce(m, xi, 101).finite
    fine = w0_bruteforce(m, xi, 401).finite
    assert fine <= coarse + 1e-12


def test_oracle_empty_or_singular_grid_is_infinite():
    m = EnergyModel()
    # grid_n=2 leaves only cube corners, all outside the ball
    assert w0_bruteforce(m, E1E2, 2) == INFINITE

    def all_singular(xi, zeta):
        return np.inf

    assert w0_bruteforce(all_singular, E1E2, 5, coercivity=1.0, p=2.0) == INFINITE
    with pytest.raises(ValueError):
        w0_bruteforce(m, E1E2, 1)
    with pytest.raises(ValueError):
        w0_bruteforce(all_singular, E1E2, 5)


def test_oracle_callable_path_matches_model_path():
    m = EnergyModel()
    xi = mat32([1.2, 0.1, 0.0], [-0.3, 0.8, 0.5])

    def w_callable(x, zeta):
        return m.third_column_values(x, zeta[None, :])[0]

    a = w0_bruteforce(m, xi, 21).finite
    b = w0_bruteforce(w_callable, xi, 21, coercivity=1.0, p=2.0).finite
    assert a == pytest.approx(b, rel=1e-14)


def test_closed_form_tracks_oracle_other_models():
    for model, tol in [
        (EnergyModel(barrier=ShiftedLogBarrier()), 2e-3),
        (EnergyModel(barrier=ReciprocalBarrier(power=2.0), p=3.0), 5e-3),
    ]:
        xi = mat32([1.0, 0.2, -0.1], [0.3, 1.1, 0.2])
        cf = w0_closed_form(model, xi).finite
        bf = w0_bruteforce(model, xi, 201).finite
        assert cf <= bf + 1e-12  # the oracle is an upper bound of the inf
        assert abs(cf - bf) <= tol


def test_growth_constant_examples():
    m = EnergyModel()
    assert w0_growth_constant(m, 1.0) == pytest.approx(2.0)
    assert w0_growth_constant(m, 0.1) == pytest.approx(11.0)
    with pytest.raises(ValueError):
        w0_growth_constant(m, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.sampled_from([1.5, 2.0, 3.0]))
def test_growth_bound_sampled(seed, p):
    model = EnergyModel(p=p)
    delta = 0.5
    cbar = w0_growth_constant(model, delta)
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-3, 3, size=(3, 2))
    if wedge_norm(xi) < delta:
        return
    val = w0_closed_form(model, xi)
    norm_p = float(np.sum(xi * xi)) ** (p / 2.0)
    assert val.finite <= cbar * (1.0 + norm_p) * (1.0 + 1e-12)


def test_blowup_monotone_along_degeneration_path():
    m = EnergyModel()
    svals = np.geomspace(0.1, 1e-6, 25)
    prev = -np.inf
    for s in svals:
        xi = mat32([1, 0, 0], [1 - s, 0, s])
        val = w0_closed_form(m, xi).finite
        assert val > prev
        prev = val
    assert w0_closed_form(m, mat32([1, 0, 0], [1, 0, 0])) == INFINITE


def test_batch_agrees_with_scalar_and_flags_degenerate():
    m = EnergyModel()
    rng = np.random.default_rng(2)
    xis = rng.uniform(-2, 2, size=(24, 3, 2))
    xis[3, :, 1] = 2.0 * xis[3, :, 0]
    vals = w0_batch(m, xis)
    assert np.isinf(vals[3])
    rd = ReducedDensity(m)
    for k in range(24):
        assert vals[k] == pytest.approx(rd(xis[k]).as_float(), rel=1e-9, abs=1e-12)


def test_reduced_density_orbit_invariance():
    # w0 depends on xi only through |xi| and the wedge norm, so it is
    # invariant under rotations on the left and on the right
    m = EnergyModel()
    rng = np.random.default_rng(9)
    for _ in range(20):
        xi = rng.uniform(-2, 2, size=(3, 2))
        if wedge_norm(xi) < 0.05:
            continue
        Q3, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        th = rng.uniform(0, 2 * np.pi)
        Q2 = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        a = w0_closed_form(m, xi).finite
        b = w0_closed_form(m, Q3 @ xi @ Q2).finite
        assert a == pytest.approx(b, rel=1e-9)
