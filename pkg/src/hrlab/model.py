"""Hindmarsh-Rose model: parameters, nonlinearities and time-dependent forcing.

The reaction right-hand side is

    du/dt : a*u^2 - b*u^3 + v - w + J + p1(t, x)
    dv/dt : alpha - beta*u^2 - v + p2(t, x)
    dw/dt : q*(u - c) - r*w + p3(t, x)

All forcing kinds are uniformly bounded in L2 over unit time windows, so
their translation-bound norm is finite.  Bounded-noise forcing is a fixed
trigonometric series with pseudo-random coefficients drawn once from the
seed: quasi-periodic, uniformly bounded, and a pure function of
(seed, t, x).
"""

import math
from dataclasses import dataclass, field

import numpy as np

FORCING_KINDS = ("zero", "constant", "time-periodic", "space-modulated",
                 "bounded-noise")

_NOISE_TERMS = 6
_NOISE_MAX_MODE = 3


@dataclass(frozen=True)
class HrParameters:
    """The eleven model constants.

    d1, d2, d3 are diffusivities, (a, b) the quadratic/cubic coefficients of
    the membrane potential equation, (alpha, beta) the spiking-variable
    coefficients, (q, r) the bursting-variable coefficients, c the reference
    membrane potential (any real) and J the injected current.  alpha and J
    accept zero so that the quiescent/stable-origin configurations are
    expressible.
    """

    d1: float = 0.05
    d2: float = 0.05
    d3: float = 0.05
    a: float = 3.0
    b: float = 1.0
    alpha: float = 1.0
    beta: float = 5.0
    q: float = 0.02
    r: float = 0.005
    c: float = -1.6
    J: float = 3.25

    def __post_init__(self):
        strict = {"d1": self.d1, "d2": self.d2, "d3": self.d3, "a": self.a,
                  "b": self.b, "beta": self.beta, "q": self.q, "r": self.r}
        for name, value in strict.items():
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError("parameter %s must be strictly positive, got %r"
                                 % (name, value))
        for name, value in (("alpha", self.alpha), ("J", self.J)):
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError("parameter %s must be nonnegative, got %r"
                                 % (name, value))
        if not np.isfinite(self.c):
            raise ValueError("parameter c must be finite, got %r" % (self.c,))

    @property
    def d_min(self):
        return min(self.d1, self.d2, self.d3)

    @property
    def diffusivities(self):
        return (self.d1, self.d2, self.d3)


def phi(u, p):
    """Membrane nonlinearity a*u^2 - b*u^3."""
    return p.a * u * u - p.b * u ** 3


def psi(u, p):
    """Spiking nonlinearity alpha - beta*u^2."""
    return p.alpha - p.beta * u * u


def reaction_terms(u, v, w, p):
    """Reaction right-hand side without forcing; works on scalars or arrays."""
    ru = phi(u, p) + v - w + p.J
    rv = psi(u, p) - v
    rw = p.q * (u - p.c) - p.r * w
    return ru, rv, rw


def reaction(g, t, x, p, forcing, grid=None):
    """Full pointwise right-hand side including the forcing at (t, x).

    `g` is the (u, v, w) triple at one point; `x` is the point (scalar in 1D,
    tuple otherwise).  Spatially modulated forcing kinds need the `grid` for
    the domain geometry.
    """
    u, v, w = g
    ru, rv, rw = reaction_terms(u, v, w, p)
    p1, p2, p3 = forcing.eval_at(t, x, grid)
    return (ru + p1, rv + p2, rw + p3)


def _noise_coefficients(seed, component):
    rng = np.random.default_rng([int(seed), int(component)])
    omegas = 2.0 * np.pi * rng.uniform(0.1, 2.0, _NOISE_TERMS)
    phases = rng.uniform(0.0, 2.0 * np.pi, _NOISE_TERMS)
    # per-term spatial mode index, drawn per axis lazily from the same stream
    modes = rng.integers(0, _NOISE_MAX_MODE + 1, (_NOISE_TERMS, 3))
    return omegas, phases, modes


@dataclass(frozen=True)
class ForcingSpec:
    """Time/space forcing family p = (p1, p2, p3).

    kind:
      zero            p = 0
      constant        p_i = amplitudes[i]
      time-periodic   p_i = amplitudes[i] * sin(2*pi*frequency*t + phase)
      space-modulated time-periodic factor times cos(pi*x/L) per axis
      bounded-noise   amplitudes[i]/M * sum_m cos(omega_m t + theta_m) *
                      prod_ax cos(k_m pi x/L); coefficients drawn once from
                      (seed, component)
    """

    kind: str = "zero"
    amplitudes: tuple = (0.0, 0.0, 0.0)
    frequency: float = 1.0
    phase: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError("unknown forcing kind %r (expected one of %s)"
                             % (self.kind, ", ".join(FORCING_KINDS)))
        amps = tuple(float(a) for a in self.amplitudes)
        if len(amps) != 3:
            raise ValueError("amplitudes must have three entries")
        object.__setattr__(self, "amplitudes", amps)
        if self.kind in ("time-periodic", "space-modulated") and self.frequency <= 0:
            raise ValueError("frequency must be positive for kind %r" % self.kind)

    @property
    def is_spatially_uniform(self):
        if self.kind in ("zero", "constant", "time-periodic"):
            return True
        if all(a == 0.0 for a in self.amplitudes):
            return True
        return False

    @property
    def period(self):
        """Temporal period, or None for aperiodic kinds."""
        if self.kind in ("zero", "constant"):
            return None
        if self.kind in ("time-periodic", "space-modulated"):
            return 1.0 / self.frequency
        return None

    def _time_factor(self, i, t):
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.amplitudes[i]
        if self.kind in ("time-periodic", "space-modulated"):
            return self.amplitudes[i] * math.sin(
                2.0 * math.pi * self.frequency * t + self.phase)
        raise ValueError("no single time factor for kind %r" % self.kind)

    def eval_at(self, t, x, grid=None):
        """Forcing components at one point; pure in (seed, t, x)."""
        if self.kind in ("zero", "constant", "time-periodic"):
            return tuple(self._time_factor(i, t) for i in range(3))
        if grid is None:
            raise ValueError("kind %r needs the grid for its spatial profile"
                             % self.kind)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "space-modulated":
            prof = 1.0
            for ax in range(grid.dim):
                prof *= math.cos(math.pi * xs[ax] / grid.lengths[ax])
            return tuple(self._time_factor(i, t) * prof for i in range(3))
        out = []
        for i in range(3):
            omegas, phases, modes = _noise_coefficients(self.seed, i)
            total = 0.0
            for m in range(_NOISE_TERMS):
                term = math.cos(omegas[m] * t + phases[m])
                for ax in range(grid.dim):
                    term *= math.cos(modes[m, ax] * math.pi * xs[ax]
                                     / grid.lengths[ax])
                total += term
            out.append(self.amplitudes[i] * total / _NOISE_TERMS)
        return tuple(out)

    def bind(self, grid):
        """Precompute the spatial profiles on a grid for fast stepping."""
        return BoundForcing(self, grid)

    def to_dict(self):
        return {"kind": self.kind,
                "amplitudes": list(self.amplitudes),
                "frequency": self.frequency,
                "phase": self.phase,
                "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d.get("kind", "zero"),
                   amplitudes=tuple(d.get("amplitudes", (0.0, 0.0, 0.0))),
                   frequency=float(d.get("frequency", 1.0)),
                   phase=float(d.get("phase", 0.0)),
                   seed=int(d.get("seed", 0)))


class BoundForcing:
    """ForcingSpec attached to a grid: vectorized fields and exact L2 norms.

    Every kind separates into sums of time factors times fixed spatial
    profiles, so ||p_i(t)||^2 is evaluated through a precomputed Gram matrix
    rather than re-quadrature of the field.
    """

    def __init__(self, spec, grid):
        self.spec = spec
        self.grid = grid
        self._profiles = None   # per component: list of spatial arrays
        self._gram = None       # per component: Gram matrix of the profiles
        if spec.kind == "space-modulated":
            prof = np.ones(grid.shape)
            coords = grid.meshgrid()
            for ax in range(grid.dim):
                prof = prof * np.cos(np.pi * coords[ax] / grid.lengths[ax])
            self._profiles = [[prof]] * 3
        elif spec.kind == "bounded-noise":
            coords = grid.meshgrid()
            profiles = []
            for i in range(3):
                omegas, phases, modes = _noise_coefficients(spec.seed, i)
                comp_profiles = []
                for m in range(_NOISE_TERMS):
                    prof = np.ones(grid.shape)
                    for ax in range(grid.dim):
                        prof = prof * np.cos(modes[m, ax] * np.pi * coords[ax]
                                             / grid.lengths[ax])
                    comp_profiles.append(prof)
                profiles.append(comp_profiles)
            self._profiles = profiles
        if self._profiles is not None:
            gram = []
            for comp_profiles in self._profiles:
                n = len(comp_profiles)
                g = np.empty((n, n))
                for ia in range(n):
                    for ib in range(n):
                        g[ia, ib] = np.sum(grid.weights * comp_profiles[ia]
                                           * comp_profiles[ib])
                gram.append(g)
            self._gram = gram

    def _time_coeffs(self, i, t):
        spec = self.spec
        if spec.kind == "space-modulated":
            return np.array([spec._time_factor(i, t)])
        omegas, phases, _ = _noise_coefficients(spec.seed, i)
        return (spec.amplitudes[i] / _NOISE_TERMS) * np.cos(omegas * t + phases)

    def fields(self, t):
        """The three forcing fields at time t (scalars for uniform kinds)."""
        spec = self.spec
        if spec.kind in ("zero", "constant", "time-periodic"):
            return tuple(spec._time_factor(i, t) for i in range(3))
        out = []
        for i in range(3):
            coeffs = self._time_coeffs(i, t)
            acc = np.zeros(self.grid.shape)
            for cm, prof in zip(coeffs, self._profiles[i]):
                acc += cm * prof
            out.append(acc)
        return tuple(out)

    def norm_sq(self, t):
        """Sum over components of ||p_i(t)||^2 on the grid."""
        spec = self.spec
        if spec.kind in ("zero", "constant", "time-periodic"):
            return sum(spec._time_factor(i, t) ** 2 for i in range(3)) \
                * self.grid.measure
        total = 0.0
        for i in range(3):
            cvec = self._time_coeffs(i, t)
            total += float(cvec @ self._gram[i] @ cvec)
        return total


def translation_bound(forcing, grid, t_samples=256, window_points=513):
    """Approximate sum_i ||p_i||^2_{L2_b}, the translation-bound norm.

    Maximizes the unit-window integral int_s^{s+1} ||p(t)||^2 dt over a
    lattice of window starts: one forcing period for periodic kinds (exact up
    to quadrature), [0, 10] for aperiodic kinds, a single window for
    time-constant kinds (exact).
    """
    if t_samples < 1:
        raise ValueError("t_samples must be at least 1")
    if forcing.kind not in FORCING_KINDS:
        raise ValueError("cannot bound unknown forcing kind %r" % forcing.kind)
    bound = forcing.bind(grid)
    if forcing.kind == "zero":
        return 0.0
    if forcing.kind == "constant":
        return sum(a * a for a in forcing.amplitudes) * grid.measure

    period = forcing.period
    span = period if period is not None else 10.0
    starts = np.linspace(0.0, span, t_samples, endpoint=False)
    ts_rel = np.linspace(0.0, 1.0, window_points)
    best = 0.0
    for s in starts:
        values = np.array([bound.norm_sq(s + dt) for dt in ts_rel])
        integral = float(np.trapezoid(values, ts_rel))
        if integral > best:
            best = integral
    return best
