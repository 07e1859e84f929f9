import math

import numpy as np
import pytest
from scipy.optimize import brentq

from hrlab.grid import Grid
from hrlab.model import (ForcingSpec, HrParameters, phi, psi, reaction,
                         reaction_terms, translation_bound)
from hrlab.solver import evolve_ode


def test_phi_hand_values(params):
    assert phi(0.0, params) == 0.0
    p = HrParameters(a=3.0, b=1.0)
    assert phi(1.0, p) == 2.0
    assert phi(-1.0, p) == 4.0


def test_phi_matches_horner_form(params, rng):
    u = rng.uniform(-10.0, 10.0, 200)
    direct = phi(u, params)
    horner = u * u * (params.a - params.b * u)
    assert np.allclose(direct, horner, rtol=1e-14, atol=1e-12)


def test_psi_hand_values():
    p = HrParameters(alpha=1.0, beta=5.0)
    assert psi(0.0, p) == 1.0
    assert psi(2.0, p) == -19.0
    assert psi(-2.0, p) == psi(2.0, p)


def test_reaction_at_origin(params):
    zero = ForcingSpec("zero")
    out = reaction((0.0, 0.0, 0.0), 0.0, 0.0, params, zero)
    assert out[0] == pytest.approx(3.25)
    assert out[1] == pytest.approx(1.0)
    assert out[2] == pytest.approx(0.02 * 1.6)


def test_reaction_forcing_is_additive(params, rng):
    eps = 0.37
    zero = ForcingSpec("zero")
    shift = ForcingSpec("constant", (eps, 0.0, 0.0))
    for _ in range(10):
        g = tuple(rng.uniform(-3, 3, 3))
        base = reaction(g, 1.0, 0.5, params, zero)
        shifted = reaction(g, 1.0, 0.5, params, shift)
        assert shifted[0] - base[0] == pytest.approx(eps, abs=1e-15)
        assert shifted[1] == base[1]
        assert shifted[2] == base[2]


def _equilibrium(params):
    # reduce the 3x3 algebraic system to one scalar equation in u
    p = params

    def f(u):
        v = p.alpha - p.beta * u * u
        w = p.q * (u - p.c) / p.r
        return p.a * u * u - p.b * u ** 3 + v - w + p.J

    u_star = brentq(f, -3.0, 0.0, xtol=1e-14)
    v_star = p.alpha - p.beta * u_star ** 2
    w_star = p.q * (u_star - p.c) / p.r
    return u_star, v_star, w_star


def test_reaction_vanishes_at_equilibrium(params):
    g_star = _equilibrium(params)
    out = reaction(g_star, 0.0, 0.0, params, ForcingSpec("zero"))
    assert max(abs(x) for x in out) < 1e-10


def test_equilibrium_is_a_fixed_point_of_the_ode(params):
    g_star = _equilibrium(params)
    _, vals = evolve_ode(g_star, 0.0, 5.0, params, ForcingSpec("zero"),
                         dt=1e-3)
    assert np.max(np.abs(vals - np.array(g_star))) < 1e-8


def test_parameter_validation():
    with pytest.raises(ValueError):
        HrParameters(a=-1.0)
    with pytest.raises(ValueError):
        HrParameters(r=0.0)
    with pytest.raises(ValueError):
        HrParameters(alpha=-0.5)
    # zero injected current and zero alpha are sanctioned configurations
    HrParameters(alpha=0.0, J=0.0, c=0.0)
    HrParameters(c=-1.6)


def test_translation_bound_zero(grid):
    assert translation_bound(ForcingSpec("zero"), grid) == 0.0


def test_translation_bound_constant_is_exact():
    g2 = Grid(2.0, 64)
    c0 = 0.7
    f = ForcingSpec("constant", (c0, 0.0, 0.0))
    assert translation_bound(f, g2) == pytest.approx(c0 ** 2 * 2.0, rel=1e-12)


def test_translation_bound_unit_sine(grid):
    # int_0^1 sin(2 pi t)^2 dt = 1/2 on a measure-one domain
    f = ForcingSpec("time-periodic", (1.0, 0.0, 0.0), frequency=1.0)
    assert translation_bound(f, grid) == pytest.approx(0.5, abs=1e-6)


def test_translation_bound_shift_invariance(grid):
    base = ForcingSpec("time-periodic", (0.8, 0.3, 0.1), frequency=0.35,
                       phase=0.0)
    shifted = ForcingSpec("time-periodic", (0.8, 0.3, 0.1), frequency=0.35,
                          phase=1.234)
    a = translation_bound(base, grid)
    b = translation_bound(shifted, grid)
    assert a == pytest.approx(b, rel=1e-3)


def test_translation_bound_requires_samples(grid):
    with pytest.raises(ValueError):
        translation_bound(ForcingSpec("zero"), grid, t_samples=0)


def test_bounded_noise_is_seed_deterministic(grid):
    a = ForcingSpec("bounded-noise", (0.5, 0.4, 0.3), seed=42)
    b = ForcingSpec("bounded-noise", (0.5, 0.4, 0.3), seed=42)
    other = ForcingSpec("bounded-noise", (0.5, 0.4, 0.3), seed=43)
    ba, bb, bo = a.bind(grid), b.bind(grid), other.bind(grid)
    for t in (0.0, 0.123, 7.7):
        fa, fb, fo = ba.fields(t), bb.fields(t), bo.fields(t)
        for i in range(3):
            assert np.array_equal(fa[i], fb[i])
        assert not all(np.array_equal(fa[i], fo[i]) for i in range(3))
    # pointwise evaluation is pure in (seed, t, x)
    x = 0.375
    pa = a.eval_at(1.5, x, grid)
    pb = b.eval_at(1.5, x, grid)
    assert pa == pb


def test_bounded_noise_is_uniformly_bounded(grid, rng):
    amps = (0.5, 0.4, 0.3)
    f = ForcingSpec("bounded-noise", amps, seed=9).bind(grid)
    for t in rng.uniform(0, 50, 25):
        fields = f.fields(float(t))
        for i in range(3):
            assert np.max(np.abs(fields[i])) <= amps[i] + 1e-12


def test_bound_forcing_norm_matches_quadrature(grid):
    # the Gram-matrix norm must equal direct spatial quadrature of the field
    f = ForcingSpec("bounded-noise", (0.5, 0.2, 0.1), seed=3).bind(grid)
    for t in (0.0, 0.4, 2.9):
        direct = sum(float(np.sum(grid.weights * p * p))
                     for p in f.fields(t))
        assert f.norm_sq(t) == pytest.approx(direct, rel=1e-12)
    g = ForcingSpec("space-modulated", (0.7, 0.0, 0.2), frequency=0.5,
                    phase=0.3).bind(grid)
    for t in (0.1, 1.7):
        direct = sum(float(np.sum(grid.weights * np.asarray(p) ** 2))
                     if np.ndim(p) else float(p * p) * grid.measure
                     for p in g.fields(t))
        assert g.norm_sq(t) == pytest.approx(direct, rel=1e-12)


def test_forcing_uniformity_flags():
    assert ForcingSpec("zero").is_spatially_uniform
    assert ForcingSpec("constant", (1, 0, 0)).is_spatially_uniform
    assert ForcingSpec("time-periodic", (1, 0, 0)).is_spatially_uniform
    assert not ForcingSpec("space-modulated", (1, 0, 0)).is_spatially_uniform
    assert not ForcingSpec("bounded-noise", (1, 0, 0)).is_spatially_uniform
    assert ForcingSpec("bounded-noise", (0, 0, 0)).is_spatially_uniform


def test_forcing_spec_roundtrip():
    f = ForcingSpec("bounded-noise", (0.5, 0.4, 0.3), frequency=2.0,
                    phase=0.1, seed=17)
    assert ForcingSpec.from_dict(f.to_dict()) == f


def test_unknown_forcing_kind_rejected():
    with pytest.raises(ValueError):
        ForcingSpec("white-noise")


def test_reaction_terms_vectorized(params, grid, rng):
    u = rng.normal(size=grid.shape)
    v = rng.normal(size=grid.shape)
    w = rng.normal(size=grid.shape)
    ru, rv, rw = reaction_terms(u, v, w, params)
    i = (17,)
    point = reaction_terms(float(u[i]), float(v[i]), float(w[i]), params)
    assert ru[i] == pytest.approx(point[0])
    assert rv[i] == pytest.approx(point[1])
    assert rw[i] == pytest.approx(point[2])
