"""Derived dissipativity constants and runtime inequality monitors.

compute_constants evaluates every explicit constant of the estimate chain
from the model parameters; the monitors then check the corresponding
inequalities numerically along solver trajectories.  At stiff parameter
regimes (small r) the H1-ball constants involve an exponential Gronwall
factor whose argument exceeds float range by many orders of magnitude; the
float fields then carry IEEE inf and every such constant has a finite log10
companion computed in log space.  Inequality checks against an infinite
bound hold trivially, which is the honest reading of the (extremely lax)
estimates there.

Monitor tolerances: a discrete check flags a violation when
lhs > rhs * (1 + EPS_MON) + EPS_ABS.  The inequalities carry large slack,
so violations beyond tolerance indicate implementation bugs; that is the
monitors' purpose.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (StateField, cosine_mode, norm_grad_sq, norm_l4_pow4,
                   norm_l2, random_smooth_field, state_diff_h_sq,
                   state_norm_h_sq)
from .model import reaction_terms
from .solver import evolve, evolve_many

EPS_MON = 1e-3
EPS_ABS = 1e-9

_NAN = float("nan")


def _log10_sum(log_terms):
    """log10 of a sum given the log10 of each (nonnegative) addend."""
    finite = [x for x in log_terms if x != float("-inf") and not math.isnan(x)]
    if not finite:
        return float("-inf")
    m = max(finite)
    return m + math.log10(sum(10.0 ** (x - m) for x in finite))


def _log10(x):
    if x > 0:
        return math.log10(x)
    return float("-inf")


@dataclass(frozen=True)
class TheoryConstants:
    """Every explicit constant of the estimate chain, plus measured stand-ins.

    Formula fields are exact evaluations of their defining expressions;
    rho_hat, C0_hat, C1_hat, kappa_hat and D_Gamma are measured on the
    discrete operator / trajectories and default to NaN until supplied.
    """

    params: object
    omega_measure: float
    p_bound: float
    T_Mstar: float
    rho_hat: float

    c1: float = _NAN
    c2: float = _NAN
    delta: float = _NAN
    energy_rhs_const: float = _NAN   # (c1^2/128 + 2 c2) |Omega|
    K1: float = _NAN
    N1: float = _NAN
    N2: float = _NAN
    grad_bound: float = _NAN         # H1 tail bound; K2 = K1 + grad_bound
    K2: float = _NAN
    Cstar: float = _NAN
    G1: float = _NAN
    G2: float = _NAN
    G3: float = _NAN
    Gp: float = _NAN

    gamma_short: float = 0.5
    gamma_long: float = 1.0

    C0_hat: float = _NAN
    C1_hat: float = _NAN
    kappa_hat: float = _NAN
    D_Gamma: float = _NAN
    kappa_formula: float = _NAN
    lambda_ME: float = _NAN

    log10_grad_bound: float = _NAN
    log10_K2: float = _NAN
    log10_G1: float = _NAN
    log10_Gp: float = _NAN
    log10_kappa_formula: float = _NAN
    log10_lambda_ME: float = _NAN

    @property
    def c1_ratio(self):
        return max(1.0, self.c1) / min(1.0, self.c1)

    @property
    def gronwall_floor(self):
        return self.energy_rhs_const / self.delta

    @property
    def forcing_coefficient(self):
        return 4.0 * (1.0 + 1.0 / self.params.r)


def compute_constants(params, omega_measure, p_bound, T_Mstar, rho,
                      C0_hat=_NAN, C1_hat=_NAN, D_Gamma=_NAN, kappa_hat=_NAN):
    """Evaluate the full constant chain.

    p_bound is the squared translation-bound norm summed over components;
    rho is the measured L4/H1 embedding constant (see measure_rho); T_Mstar
    the re-entry time of the H1 absorbing ball used by the smoothing and
    Hoelder diagnostics.
    """
    if omega_measure <= 0.0:
        raise ValueError("omega_measure must be positive")
    if p_bound < 0.0:
        raise ValueError("p_bound must be nonnegative")
    if T_Mstar <= 0.0:
        raise ValueError("T_Mstar must be positive")
    if not (rho > 0.0):
        raise ValueError("rho must be positive")
    p = params
    c1 = (p.beta ** 2 + 3.0) / p.b
    c2 = ((c1 * p.a) ** 4 + p.J ** 2
          + (c1 ** 2 * (3.0 + 1.0 / p.r) + p.q ** 2 / p.r) ** 2
          + 2.0 * p.alpha ** 2 + p.q ** 2 * p.c ** 2 / p.r)
    delta = 0.25 * min(1.0, p.r)
    s_const = (c1 ** 2 / 128.0 + 2.0 * c2) * omega_measure
    force_coef = 4.0 * (1.0 + 1.0 / p.r)
    K1 = 1.0 + s_const / delta + force_coef * p_bound / (1.0 - math.exp(-delta))
    d = p.d_min
    N1 = (max(1.0, c1) * K1 + force_coef * p_bound + s_const) \
        / (2.0 * d * min(1.0, c1))
    grow = 8.0 * p.a ** 2 / p.d1 + 4.0 * p.beta ** 2 / p.d2
    N2 = (max(4.0 / p.d1, 4.0 * p.q ** 2 * p.c ** 2 / p.d3) * K1
          + grow * rho * K1 ** 2
          + (8.0 * p.J ** 2 / p.d1 + 4.0 * p.alpha ** 2 / p.d2
             + 4.0 * p.q ** 2 * p.c ** 2 / p.d3) * omega_measure)
    p_coef = max(8.0 / p.d1, 4.0 / p.d2, 4.0 / p.d3)
    base = N1 + N2 + p_coef * p_bound
    exp_arg = rho * grow * N1
    grad_bound = base * math.exp(exp_arg) if exp_arg < 709.0 else float("inf")
    log10_grad_bound = _log10(base) + exp_arg / math.log(10.0)
    K2 = K1 + grad_bound
    log10_K2 = math.log10(K2) if math.isfinite(K2) else \
        _log10_sum([_log10(K1), log10_grad_bound])
    Cstar = 4.0 * (1.0 + (p.a ** 2 + p.beta) / p.b) + 2.0 * (p.q + p.r)
    ratio = max(1.0, c1) / min(1.0, c1)
    G1 = ratio * K2 + K1
    log10_G1 = math.log10(G1) if math.isfinite(G1) else \
        _log10_sum([_log10(ratio) + log10_K2, _log10(K1)])
    G2 = max(4.0, 2.0 * p.q ** 2) / d
    G3 = (8.0 * p.J ** 2 + 4.0 * p.alpha ** 2 + 4.0 * p.q ** 2 * p.c ** 2) / d
    s_gp = (G1 + K2 + T_Mstar * (G1 * G2 + G3 * omega_measure)
            + (8.0 / d) * (T_Mstar + 1.0) * p_bound)
    log10_s_gp = math.log10(s_gp) if math.isfinite(s_gp) else _log10_sum([
        log10_G1, log10_K2,
        _log10(T_Mstar) + _log10_sum([log10_G1 + _log10(G2),
                                      _log10(G3 * omega_measure)]),
        _log10((8.0 / d) * (T_Mstar + 1.0) * p_bound),
    ])
    gp_poly = G1 * (12.0 * p.a ** 2 + 8.0 * p.beta ** 2)
    gp_lin = max(2.0 * p.q, 5.0, 3.0 + 2.0 * p.r)
    Gp = gp_poly + gp_lin + 60.0 * p.b ** 2 * rho * s_gp ** 2
    log10_Gp = math.log10(Gp) if math.isfinite(Gp) else _log10_sum([
        log10_G1 + _log10(12.0 * p.a ** 2 + 8.0 * p.beta ** 2),
        _log10(gp_lin),
        _log10(60.0 * p.b ** 2 * rho) + 2.0 * log10_s_gp,
    ])

    kappa_formula = _NAN
    log10_kappa = _NAN
    if math.isfinite(C1_hat):
        bulk = 4.0 * math.sqrt(G1 * T_Mstar) * math.exp(min(Cstar * T_Mstar, 709.0)) * Gp \
            if math.isfinite(G1) and math.isfinite(Gp) \
            and Cstar * T_Mstar < 709.0 else float("inf")
        kappa_formula = C1_hat * (1.0 / math.sqrt(T_Mstar) + bulk)
        log10_bulk = (_log10(4.0) + 0.5 * (log10_G1 + _log10(T_Mstar))
                      + Cstar * T_Mstar / math.log(10.0) + log10_Gp)
        log10_kappa = _log10(C1_hat) + _log10_sum(
            [-0.5 * _log10(T_Mstar), log10_bulk])
        if math.isfinite(kappa_formula):
            log10_kappa = math.log10(kappa_formula)

    lambda_ME = _NAN
    log10_lambda = _NAN
    if math.isfinite(C0_hat) and math.isfinite(D_Gamma):
        lambda_ME = C0_hat * K2 + 2.0 * (D_Gamma + K2 + math.sqrt(p_bound))
        if math.isfinite(lambda_ME):
            log10_lambda = math.log10(lambda_ME)
        else:
            log10_lambda = _log10_sum([
                _log10(C0_hat) + log10_K2,
                _log10(2.0) + _log10_sum([_log10(D_Gamma), log10_K2,
                                          0.5 * _log10(p_bound)]),
            ])

    return TheoryConstants(
        params=params, omega_measure=omega_measure, p_bound=p_bound,
        T_Mstar=T_Mstar, rho_hat=rho,
        c1=c1, c2=c2, delta=delta, energy_rhs_const=s_const, K1=K1,
        N1=N1, N2=N2, grad_bound=grad_bound, K2=K2, Cstar=Cstar,
        G1=G1, G2=G2, G3=G3, Gp=Gp,
        C0_hat=C0_hat, C1_hat=C1_hat, kappa_hat=kappa_hat, D_Gamma=D_Gamma,
        kappa_formula=kappa_formula, lambda_ME=lambda_ME,
        log10_grad_bound=log10_grad_bound, log10_K2=log10_K2,
        log10_G1=log10_G1, log10_Gp=log10_Gp,
        log10_kappa_formula=log10_kappa, log10_lambda_ME=log10_lambda)


def attach_measured(constants, **measured):
    """Recompute the constant chain with measured stand-ins filled in."""
    kw = {"C0_hat": constants.C0_hat, "C1_hat": constants.C1_hat,
          "D_Gamma": constants.D_Gamma, "kappa_hat": constants.kappa_hat}
    kw.update(measured)
    return compute_constants(constants.params, constants.omega_measure,
                             constants.p_bound, constants.T_Mstar,
                             constants.rho_hat, **kw)


def compute_TB(constants, B_norm_sq):
    """Absorbing entry time (1/delta) log+ (ratio * ||B||^2)."""
    if B_norm_sq < 0.0:
        raise ValueError("B_norm_sq must be nonnegative")
    arg = constants.c1_ratio * B_norm_sq
    if arg <= 1.0:
        return 0.0
    return math.log(arg) / constants.delta


def holder_exponent(gap):
    """The piecewise time-Hoelder exponent: 1/2 below unit gaps, 1 above."""
    return 0.5 if abs(gap) < 1.0 else 1.0


def measure_rho(grid, sample_count=64, seed=0, safety=1.5):
    """Measured L4/H1 embedding constant.

    Maximizes ||u||^4_L4 / (||u||^2 + ||grad u||^2)^2 over constants, cosine
    modes and random smooth fields, inflated by a safety factor.  The ratio
    is scale invariant, so no amplitude sweep is needed.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    rng = np.random.default_rng(seed)
    fields = [np.ones(grid.shape)]
    for k in range(1, 7):
        fields.append(cosine_mode(grid, (k,) * grid.dim))
    for _ in range(sample_count):
        fields.append(random_smooth_field(grid, rng))
    best = 0.0
    for f in fields:
        l2sq = norm_l2(f, grid) ** 2
        denom = (l2sq + norm_grad_sq(f, grid)) ** 2
        if denom > 0.0:
            best = max(best, norm_l4_pow4(f, grid) / denom)
    return safety * best


def measure_semigroup_constants(grid, diffusivities, t_max=1.0, n_samples=64):
    """Measured stand-ins for the abstract semigroup constants.

    C1_hat bounds sqrt(t) * ||e^{At}||_{L(H,E)} over cosine modes and a log
    grid of times in (0, t_max]; C0_hat bounds ||e^{Ah}g - g|| / (h ||g||)
    the same way.  Both depend on the grid's largest resolved eigenvalue.
    """
    lams = [0.0]
    for ax in range(grid.dim):
        n_cells = grid.resolution[ax]
        h = grid.spacing[ax]
        k = np.arange(1, n_cells + 1)
        lams.extend(((2.0 - 2.0 * np.cos(np.pi * k / n_cells)) / (h * h)).tolist())
    lams = np.array(sorted(set(lams)))
    ts = np.geomspace(1e-4, t_max, n_samples)
    c1_hat = 0.0
    c0_hat = 0.0
    for d in set(diffusivities):
        decay = np.exp(-d * np.outer(ts, lams))
        c1_vals = np.sqrt(ts)[:, None] * decay * np.sqrt(1.0 + lams)[None, :]
        c1_hat = max(c1_hat, float(c1_vals.max()))
        c0_vals = (1.0 - decay) / ts[:, None]
        c0_hat = max(c0_hat, float(c0_vals.max()))
    return c0_hat, c1_hat


# --- violation reports ---------------------------------------------------------

@dataclass
class Violation:
    step: int
    t: float
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs


@dataclass
class MonitorReport:
    monitor: str
    n_checked: int
    violations: list
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,t,lhs,rhs,slack\n")
            for v in self.violations:
                fh.write("%d,%s,%s,%s,%s\n"
                         % (v.step, repr(v.t), repr(v.lhs), repr(v.rhs),
                            repr(v.slack)))

    def __repr__(self):
        return "MonitorReport(%s: %d checked, %d violations)" % (
            self.monitor, self.n_checked, len(self.violations))


def _collect(name, times, lhs, rhs, eps_mon, eps_abs, details=None):
    lhs = np.asarray(lhs)
    rhs = np.asarray(rhs)
    bad = lhs > rhs * (1.0 + eps_mon) + eps_abs
    violations = [Violation(int(i), float(times[i]), float(lhs[i]), float(rhs[i]))
                  for i in np.nonzero(bad)[0]]
    return MonitorReport(name, int(lhs.size), violations, details or {})


def monitor_energy(traj, constants, eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """Discrete check of the dissipative energy inequality.

    Forward difference of the weighted energy over one sample interval plus
    the dissipation terms at the interval start against the forcing and
    constant terms.
    """
    c = constants
    p = c.params
    E = traj.weighted_energy(c.c1)
    D = 2.0 * p.d_min * (c.c1 * traj.series["grad_u_sq"]
                         + traj.series["grad_v_sq"] + traj.series["grad_w_sq"])
    Z = 0.25 * (c.c1 * traj.series["norm_u_sq"] + traj.series["norm_v_sq"]
                + p.r * traj.series["norm_w_sq"])
    rhs_series = c.forcing_coefficient * traj.series["p_norm_sq"] \
        + c.energy_rhs_const
    dtv = np.diff(traj.times)
    lhs = np.diff(E) / dtv + D[:-1] + Z[:-1]
    return _collect("energy", traj.times[:-1], lhs, rhs_series[:-1],
                    eps_mon, eps_abs)


def monitor_gronwall(traj, constants, eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """Check of the exponential Gronwall bound along a run.

    The forcing convolution integral is accumulated by the trapezoid rule on
    the stored ||p(s)||^2 series.
    """
    c = constants
    E = traj.weighted_energy(c.c1)
    t = traj.times
    psq = traj.series["p_norm_sq"]
    conv = np.zeros_like(E)
    for n in range(1, len(t)):
        dtv = t[n] - t[n - 1]
        decay = math.exp(-c.delta * dtv)
        conv[n] = decay * conv[n - 1] + 0.5 * dtv * (decay * psq[n - 1] + psq[n])
    bound = (np.exp(-c.delta * (t - t[0])) * E[0]
             + c.forcing_coefficient * conv + c.gronwall_floor)
    return _collect("gronwall", t, E, bound, eps_mon, eps_abs,
                    details={"floor": c.gronwall_floor})


def gronwall_decay_rate(traj, constants):
    """Observed decay rate of the positive part of the excess energy.

    Returns (rate, n_points): the fitted log-slope over samples where the
    weighted energy exceeds the Gronwall floor (zero-forcing runs).  If the
    excess is dead after the first sample the decay outran every resolvable
    rate and +inf is returned; if it never was positive the bound held
    trivially and +inf is returned as well.
    """
    c = constants
    E = traj.weighted_energy(c.c1)
    t = traj.times
    excess = E - c.gronwall_floor
    pos = excess > 0.0
    if not pos[0] or int(pos.sum()) < 2:
        return float("inf"), int(pos.sum())
    idx = np.nonzero(pos)[0]
    # the positive-excess window is an initial segment for decaying runs
    tt = t[idx] - t[0]
    yy = np.log(excess[idx])
    if len(idx) >= 4:
        slope = np.polyfit(tt, yy, 1)[0]
        return float(-slope), int(len(idx))
    rates = [-(yy[k] - yy[0]) / (tt[k] - tt[0]) for k in range(1, len(idx))]
    return float(min(rates)), int(len(idx))


def monitor_absorbing(times, h_sq, constants, B_norm_sq,
                      eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """Entry-time report against the H absorbing ball.

    h_sq has shape (samples, members): the squared H norm of each member
    along the run.  A member is flagged when it has not entered the ball
    {||g||^2 <= K1} by min(T_B, run horizon) or leaves it after entry.
    """
    h_sq = np.asarray(h_sq)
    c = constants
    TB = compute_TB(c, B_norm_sq)
    level = c.K1 * (1.0 + eps_mon) + eps_abs
    horizon = float(times[-1] - times[0])
    violations = []
    entry_times = []
    undetermined = 0
    for m in range(h_sq.shape[1]):
        inside = h_sq[:, m] <= level
        if not inside.any():
            if horizon >= TB:
                # the deadline passed inside the run: a genuine violation
                violations.append(Violation(0, float(times[-1]),
                                            float(h_sq[-1, m]), float(c.K1)))
            else:
                # the run ended before T_B; entry is undetermined, not wrong
                undetermined += 1
            entry_times.append(float("inf"))
            continue
        first = int(np.argmax(inside))
        t_entry = float(times[first] - times[0])
        entry_times.append(t_entry)
        if t_entry > TB + eps_abs:
            violations.append(Violation(first, float(times[first]),
                                        float(t_entry), float(TB)))
        leaves = np.nonzero(~inside[first:])[0]
        if leaves.size:
            k = first + int(leaves[0])
            violations.append(Violation(k, float(times[k]),
                                        float(h_sq[k, m]), float(c.K1)))
    details = {"T_B": TB, "horizon": horizon, "entry_times": entry_times,
               "K1": c.K1, "undetermined": undetermined}
    return MonitorReport("absorbing", int(h_sq.shape[1]), violations, details)


def monitor_h1_absorbing(traj, constants, t_from=None,
                         eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """H1-ball check: gradient tail bound and ||g||_E^2 <= K2.

    The run is expected to start after H absorption; checks apply from
    t_from (default one time unit past the start, mirroring the T_B + 1
    offset of the estimate).
    """
    c = constants
    t = traj.times
    if t_from is None:
        t_from = t[0] + 1.0
    sel = t >= t_from - 1e-12
    grad = traj.series["grad_g_sq"][sel]
    esq = traj.e_norm_sq()[sel]
    times_sel = t[sel]
    rep_grad = _collect("h1_gradient", times_sel, grad,
                        np.full(grad.shape, c.grad_bound), eps_mon, eps_abs)
    rep_ball = _collect("h1_ball", times_sel, esq,
                        np.full(esq.shape, c.K2), eps_mon, eps_abs)
    violations = rep_grad.violations + rep_ball.violations
    details = {"checked_from": float(t_from), "n_samples": int(grad.size),
               "grad_bound": c.grad_bound, "K2": c.K2,
               "sup_e_sq": float(esq.max()) if esq.size else _NAN}
    return MonitorReport("h1_absorbing", int(grad.size), violations, details)


def monitor_lipschitz_series(times, diff_sq, constants,
                             eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """H-Lipschitz envelope check on a precomputed ||g - g~||^2 series.

    Checked in log space so the e^{C* t} envelope never overflows.
    """
    c = constants
    times = np.asarray(times)
    diff_sq = np.asarray(diff_sq)
    d0 = float(diff_sq[0])
    if d0 <= eps_abs ** 2:
        # identical initial data: uniqueness requires the difference to stay
        # at rounding level
        lhs = np.sqrt(np.maximum(diff_sq, 0.0))
        return _collect("lipschitz_H", times, lhs,
                        np.zeros_like(lhs), eps_mon, eps_abs,
                        details={"mode": "uniqueness"})
    log_bound = c.Cstar * (times - times[0]) + math.log(d0 * (1.0 + eps_mon))
    with np.errstate(divide="ignore"):
        log_diff = np.where(diff_sq > 0.0, np.log(np.maximum(diff_sq, 1e-300)),
                            -np.inf)
    bad = log_diff > log_bound + eps_abs
    violations = [Violation(int(i), float(times[i]), float(log_diff[i]),
                            float(log_bound[i]))
                  for i in np.nonzero(bad)[0]]
    slope = _NAN
    pos = diff_sq > 0.0
    if int(pos.sum()) >= 2:
        slope = float(np.polyfit(times[pos] - times[0],
                                 np.log(diff_sq[pos]), 1)[0])
    return MonitorReport("lipschitz_H", int(diff_sq.size), violations,
                         {"growth_exponent": slope, "Cstar": c.Cstar})


def monitor_lipschitz_H(traj_a, traj_b, grid, constants,
                        eps_mon=EPS_MON, eps_abs=EPS_ABS):
    """H-Lipschitz check on two stored trajectories (snapshot cadence).

    The runs must share (tau, forcing, parameters, grid, cfg) and snapshot
    times; the check compares the squared H distance at each snapshot
    against the e^{C* t} envelope of the initial distance.
    """
    if len(traj_a.snapshots) != len(traj_b.snapshots) or \
            not np.allclose(traj_a.snapshot_times, traj_b.snapshot_times):
        raise ValueError("paired trajectories must share snapshot times")
    diffs = np.array([state_diff_h_sq(sa, sb, grid)
                      for sa, sb in zip(traj_a.snapshots, traj_b.snapshots)])
    return monitor_lipschitz_series(traj_a.snapshot_times, diffs, constants,
                                    eps_mon=eps_mon, eps_abs=eps_abs)


def _pair_diff_sampler(grid, n_pairs):
    w = grid.weights
    spatial = tuple(range(2, grid.dim + 2))

    def fn(X):
        d = X[:, :n_pairs] - X[:, n_pairs:2 * n_pairs]
        return np.sum(w * d * d, axis=(0,) + spatial)
    return fn


def evolve_pairs(pairs, tau, t_end, params, forcing, grid, cfg, stride=1):
    """Co-evolve (g, g~) pairs; returns (times, diff_sq, finals_a, finals_b).

    diff_sq has shape (samples, n_pairs): the squared H distance of each
    pair along the run.
    """
    n = len(pairs)
    states = [p[0] for p in pairs] + [p[1] for p in pairs]
    times, series, finals = evolve_many(
        states, tau, t_end, params, forcing, grid, cfg, stride=stride,
        record=(), samplers=[("diff_sq", _pair_diff_sampler(grid, n))])
    return times, series["diff_sq"], finals[:n], finals[n:]


@dataclass
class SmoothingReport:
    kappa_hat: float
    per_tau: dict
    pair_ratios: np.ndarray
    skipped: int

    @property
    def tau_spread(self):
        vals = [v for v in self.per_tau.values() if np.isfinite(v) and v > 0]
        if not vals:
            return _NAN
        return max(vals) / min(vals)


def measure_smoothing(pairs, taus, T_Mstar, params, forcing, grid, cfg):
    """Measured smoothing constant kappa_hat.

    For every tau, evolves each pair from tau - T_Mstar to tau and takes the
    ratio of the E-norm difference at tau to the H-norm difference at the
    start; kappa_hat is the max over pairs and taus.  Degenerate pairs (zero
    H distance) are skipped.
    """
    from .grid import state_norm_e_sq  # local import to avoid cycle noise
    skipped = 0
    per_tau = {}
    ratios = np.full((len(taus), len(pairs)), _NAN)
    for ti, tau in enumerate(taus):
        start_d = [math.sqrt(state_diff_h_sq(a, b, grid)) for a, b in pairs]
        _, _, fa, fb = evolve_pairs(pairs, tau - T_Mstar, tau, params,
                                    forcing, grid, cfg, stride=10 ** 9)
        for pi, (a, b) in enumerate(zip(fa, fb)):
            if start_d[pi] <= 1e-14:
                skipped += 1
                continue
            diff = StateField(a.u - b.u, a.v - b.v, a.w - b.w)
            e_d = math.sqrt(state_norm_e_sq(diff, grid))
            ratios[ti, pi] = e_d / start_d[pi]
        vals = ratios[ti][np.isfinite(ratios[ti])]
        per_tau[float(tau)] = float(vals.max()) if vals.size else _NAN
    finite = ratios[np.isfinite(ratios)]
    kappa_hat = float(finite.max()) if finite.size else _NAN
    return SmoothingReport(kappa_hat, per_tau, ratios, skipped)


@dataclass
class HolderReport:
    lambda_hat: float
    slope_short: float
    slope_long: float
    D_Gamma: float
    lambda_formula: float
    short_points: list
    long_points: list
    violations: list

    @property
    def ok(self):
        return not self.violations


def _reaction_norm_sampler(grid, params):
    w = grid.weights
    spatial = tuple(range(1, grid.dim + 1))

    def fn(X):
        ru, rv, rw = reaction_terms(X[0], X[1], X[2], params)
        out = np.sum(w * ru * ru, axis=spatial)
        out += np.sum(w * rv * rv, axis=spatial)
        out += np.sum(w * rw * rw, axis=spatial)
        return out
    return fn


def monitor_time_holder(g0_states, taus, T_Mstar, short_offsets, long_offsets,
                        params, forcing, grid, cfg, constants,
                        slope_margin=0.1):
    """Time-Hoelder diagnostics for the pullback process.

    For each base state and tau, measures ||S(tau, tau-T*) g0 -
    S(tau, tau-T*-t) g0|| over the short offsets (t in (0, T*]) and the
    gaps between horizons T* + l for l in long_offsets (inside [T*, 2T*]).
    Fits the smallest lambda making the piecewise-gamma bound hold, checks
    the observed log-log slopes against gamma - slope_margin, and measures
    D_Gamma = max ||f(g)||_H over the sampled evolutions.
    """
    c = constants
    short_offsets = sorted(float(t) for t in short_offsets)
    long_offsets = sorted(float(t) for t in long_offsets)
    if any(t <= 0 or t > T_Mstar + 1e-12 for t in short_offsets):
        raise ValueError("short offsets must lie in (0, T_Mstar]")
    if any(t < 0 or t > T_Mstar + 1e-12 for t in long_offsets):
        raise ValueError("long offsets must lie in [0, T_Mstar]")
    sampler = _reaction_norm_sampler(grid, params)
    envelope = math.exp(min(0.5 * c.Cstar * T_Mstar, 709.0))
    d_gamma_sq = 0.0
    short_points = []
    long_points = []
    for tau in taus:
        for g0 in g0_states:
            horizons = [T_Mstar] + [T_Mstar + t for t in short_offsets] \
                + [T_Mstar + t for t in long_offsets]
            horizons = sorted(set(horizons))
            finals = {}
            for h in horizons:
                _, series, fin = evolve_many(
                    [g0], tau - h, tau, params, forcing, grid, cfg,
                    stride=max(1, int(round(h / cfg.dt / 40))),
                    record=(), samplers=[("f_norm_sq", sampler)])
                finals[h] = fin[0]
                d_gamma_sq = max(d_gamma_sq, float(series["f_norm_sq"].max()))
            base = finals[T_Mstar]
            for t in short_offsets:
                dist = math.sqrt(state_diff_h_sq(base, finals[T_Mstar + t],
                                                 grid))
                short_points.append((t, dist))
            for i in range(len(long_offsets)):
                for j in range(i + 1, len(long_offsets)):
                    gap = long_offsets[j] - long_offsets[i]
                    if gap <= 0:
                        continue
                    dist = math.sqrt(state_diff_h_sq(
                        finals[T_Mstar + long_offsets[i]],
                        finals[T_Mstar + long_offsets[j]], grid))
                    long_points.append((gap, dist))

    lambda_hat = 0.0
    for t, dist in short_points + long_points:
        denom = envelope * abs(t) ** holder_exponent(t)
        if denom > 0:
            lambda_hat = max(lambda_hat, dist / denom)

    def _fit(points, gap_filter):
        pts = [(t, d) for t, d in points if gap_filter(t) and d > 0]
        if len(pts) < 2:
            return _NAN
        tt = np.log([p[0] for p in pts])
        dd = np.log([p[1] for p in pts])
        return float(np.polyfit(tt, dd, 1)[0])

    slope_short = _fit(short_points, lambda t: t < 1.0)
    slope_long = _fit(long_points, lambda t: t >= 1.0)
    violations = []
    if math.isfinite(slope_short) and slope_short < c.gamma_short - slope_margin:
        violations.append(Violation(0, 0.0, slope_short,
                                    c.gamma_short - slope_margin))
    if math.isfinite(slope_long) and slope_long < c.gamma_long - slope_margin:
        violations.append(Violation(1, 0.0, slope_long,
                                    c.gamma_long - slope_margin))
    D_Gamma = math.sqrt(d_gamma_sq)
    updated = attach_measured(c, D_Gamma=D_Gamma)
    return HolderReport(lambda_hat=lambda_hat, slope_short=slope_short,
                        slope_long=slope_long, D_Gamma=D_Gamma,
                        lambda_formula=updated.lambda_ME,
                        short_points=short_points, long_points=long_points,
                        violations=violations)


# --- constants report -----------------------------------------------------------

_REPORT_FIELDS = (
    ("omega_measure", "input"), ("p_bound", "input"), ("T_Mstar", "input"),
    ("rho_hat", "measured"),
    ("c1", "formula"), ("c2", "formula"), ("delta", "formula"),
    ("energy_rhs_const", "formula"), ("K1", "formula"),
    ("N1", "formula"), ("N2", "formula"), ("grad_bound", "formula"),
    ("K2", "formula"), ("Cstar", "formula"),
    ("G1", "formula"), ("G2", "formula"), ("G3", "formula"), ("Gp", "formula"),
    ("gamma_short", "formula"), ("gamma_long", "formula"),
    ("C0_hat", "measured"), ("C1_hat", "measured"),
    ("kappa_hat", "measured"), ("D_Gamma", "measured"),
    ("kappa_formula", "formula"), ("lambda_ME", "formula"),
)

_LOG10_FIELDS = {"grad_bound": "log10_grad_bound", "K2": "log10_K2",
                 "G1": "log10_G1", "Gp": "log10_Gp",
                 "kappa_formula": "log10_kappa_formula",
                 "lambda_ME": "log10_lambda_ME"}


def constants_report(constants):
    """Plain dict for the JSON constants report, with provenance flags.

    Non-finite values are stored as null; overflow-prone constants carry a
    finite log10 entry computed in log space.
    """
    report = {}
    for name, provenance in _REPORT_FIELDS:
        value = getattr(constants, name)
        entry = {"value": float(value) if math.isfinite(value) else None,
                 "provenance": provenance}
        if name in _LOG10_FIELDS:
            lg = getattr(constants, _LOG10_FIELDS[name])
            if math.isfinite(lg):
                entry["log10"] = float(lg)
        report[name] = entry
    return report
