"""Pullback dynamics: receding-horizon ensembles, attractor fibers,
semi-Hausdorff attraction, rate fits, and box-counting dimension.

A fiber of the pullback attractor at observation time tau is approximated by
the image of a sampled absorbing set under S(tau, tau - t) for the largest
horizon t in a geometric list, with a two-sided cloud-convergence stopping
rule.  The nonautonomy matters: every member run evaluates the forcing at
true absolute times.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .grid import StateField, save_state_binary, state_norm_h_sq
from .solver import evolve_many


@dataclass
class Ensemble:
    """Finite sample of a bounded set in H, evolved in pullback fashion."""

    members: list
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")

    @property
    def size(self):
        return len(self.members)

    def norm_sq_sup(self, grid):
        """||B||^2 with the sup-norm convention over the sampled members."""
        return max(state_norm_h_sq(m, grid) for m in self.members)


@dataclass
class AttractorCloud:
    """Approximated attractor fiber at one observation time."""

    tau: float
    members: list
    horizon: float
    history: list          # (horizon, two-sided semi-Hausdorff step) pairs
    converged: bool

    @property
    def size(self):
        return len(self.members)


def sample_ball(grid, count, radius_sq, seed, thetas=None, smooth=False,
                include_zero=False):
    """Sample a ball in H: random fields scaled to theta * radius_sq.

    Rough node-wise uniform fields by default (the absorbing-set seeding);
    smooth low-mode fields when `smooth` is set.  The largest theta is 1, so
    the sup-norm convention ||B||^2 = radius_sq is realized by the sample.
    """
    if count < 1:
        raise ValueError("member count must be at least 1")
    if radius_sq < 0:
        raise ValueError("radius_sq must be nonnegative")
    rng = np.random.default_rng(seed)
    members = []
    if include_zero:
        members.append(StateField.zeros(grid))
    if thetas is None:
        thetas = np.linspace(1.0 / count, 1.0, count)
    ti = 0
    while len(members) < count:
        theta = float(thetas[ti % len(thetas)])
        ti += 1
        if smooth:
            from .grid import random_smooth_state
            g = random_smooth_state(grid, rng, norm_sq=theta * radius_sq)
        else:
            g = StateField(rng.uniform(-1.0, 1.0, grid.shape),
                           rng.uniform(-1.0, 1.0, grid.shape),
                           rng.uniform(-1.0, 1.0, grid.shape))
            cur = state_norm_h_sq(g, grid)
            s = math.sqrt(theta * radius_sq / cur) if cur > 0 else 0.0
            g = StateField(s * g.u, s * g.v, s * g.w)
        members.append(g)
    return Ensemble(members[:count],
                    {"radius_sq": float(radius_sq), "seed": int(seed),
                     "count": int(count), "smooth": bool(smooth)})


def sample_absorbing_set(grid, count, level_sq, seed, radius_cap=100.0):
    """Seed the absorbing-set sample used for fiber approximation.

    Radial shells theta in {0.1, 0.5, 0.9} of min(level_sq, radius_cap) plus
    the zero field; pullback images of the full absorbing ball enter this
    sub-ball within O(1) time, so the limiting fiber is unchanged while the
    sampling stays integrable.
    """
    radius = min(level_sq, radius_cap)
    return sample_ball(grid, count, radius, seed,
                       thetas=(0.1, 0.5, 0.9), include_zero=True)


def pullback_evolve(ensemble, tau, horizon, params, forcing, grid, cfg,
                    record=()):
    """Replace every member g by S(tau, tau - horizon) g.

    Runs start at tau - horizon and integrate up to the observation time
    tau, with the forcing evaluated at true absolute times.  Returns the
    evolved Ensemble (and the recorded series when `record` asks for any).
    """
    if horizon < 0:
        raise ValueError("pullback horizon must be nonnegative")
    if horizon == 0:
        out = Ensemble([m.copy() for m in ensemble.members],
                       dict(ensemble.descriptor))
        return (out, None, None) if record else out
    times, series, finals = evolve_many(
        ensemble.members, tau - horizon, tau, params, forcing, grid, cfg,
        record=record or ("h",))
    out = Ensemble(finals, dict(ensemble.descriptor))
    if record:
        return out, times, series
    return out


def _feature_matrix(members, grid, norm="H"):
    """Cloud members as rows of weighted feature vectors.

    Euclidean distance between rows equals the discrete H (or E) distance of
    the fields, so cdist computes the true norms.
    """
    rows = []
    sqrt_w = np.sqrt(grid.weights).ravel()
    sqrt_face = [np.sqrt(fw) for fw in grid._face_weights]
    for m in members:
        parts = []
        for comp in m.components():
            parts.append(sqrt_w * comp.ravel())
            if norm == "E":
                for ax, h in enumerate(grid.spacing):
                    d = np.diff(comp, axis=ax) / h
                    parts.append((sqrt_face[ax] * d).ravel())
        rows.append(np.concatenate(parts))
    return np.array(rows)


def semihausdorff(cloud_a, cloud_b, grid, norm="H"):
    """sup over a in A of inf over b in B of ||a - b||; asymmetric.

    Accepts Ensembles, AttractorClouds, or plain member lists.
    """
    members_a = getattr(cloud_a, "members", cloud_a)
    members_b = getattr(cloud_b, "members", cloud_b)
    if not members_a or not members_b:
        raise ValueError("semi-Hausdorff distance needs nonempty clouds")
    if norm not in ("H", "E"):
        raise ValueError("norm must be 'H' or 'E'")
    fa = _feature_matrix(members_a, grid, norm)
    fb = _feature_matrix(members_b, grid, norm)
    return float(np.max(np.min(cdist(fa, fb), axis=1)))


def approximate_attractor(tau, horizons, params, forcing, grid, cfg,
                          m_sample, tol_attr=1e-4, norm="H"):
    """Pullback iteration of the absorbing-set sample over growing horizons.

    Returns the cloud at the largest horizon together with the convergence
    history dist(cloud(t_{i+1}), cloud(t_i)) (two-sided); convergence is
    declared when the last step distance falls below tol_attr.
    Non-convergence is reported in the cloud, not fatal.
    """
    horizons = sorted(float(h) for h in horizons)
    if not horizons or horizons[0] <= 0:
        raise ValueError("horizons must be positive and increasing")
    if m_sample.size < 8:
        raise ValueError("absorbing-set sampling needs at least 8 members")
    clouds = []
    for h in horizons:
        clouds.append(pullback_evolve(m_sample, tau, h, params, forcing,
                                      grid, cfg))
    history = []
    for prev, cur, h in zip(clouds, clouds[1:], horizons[1:]):
        d = max(semihausdorff(prev, cur, grid, norm),
                semihausdorff(cur, prev, grid, norm))
        history.append((h, d))
    converged = bool(history) and history[-1][1] <= tol_attr
    return AttractorCloud(tau=tau, members=clouds[-1].members,
                          horizon=horizons[-1], history=history,
                          converged=converged)


def evolve_cloud_forward(cloud, delta, params, forcing, grid, cfg):
    """Forward image S(tau + delta, tau) of a fiber cloud; invariance checks."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    _, _, finals = evolve_many(cloud.members, cloud.tau, cloud.tau + delta,
                               params, forcing, grid, cfg, record=("h",))
    return AttractorCloud(tau=cloud.tau + delta, members=finals,
                          horizon=cloud.horizon + delta,
                          history=list(cloud.history), converged=cloud.converged)


@dataclass
class RateFit:
    sigma_hat: float
    residual: float
    n_points: int
    ok: bool
    note: str = ""


def attraction_rate(horizons, distances):
    """Least-squares decay rate of log(distance) against the horizon.

    Nonpositive distances are dropped; fewer than four surviving points is
    an insufficient-data report (ok=False).
    """
    horizons = np.asarray(horizons, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if horizons.shape != distances.shape:
        raise ValueError("horizons and distances must align")
    keep = distances > 0.0
    hh = horizons[keep]
    dd = distances[keep]
    if hh.size < 4:
        return RateFit(float("nan"), float("nan"), int(hh.size), False,
                       "insufficient data: %d positive distances" % hh.size)
    logd = np.log(dd)
    slope, intercept = np.polyfit(hh, logd, 1)
    fit = slope * hh + intercept
    residual = float(np.sqrt(np.mean((logd - fit) ** 2)))
    return RateFit(float(-slope), residual, int(hh.size), True)


@dataclass
class DimensionFit:
    dim_hat: float
    scales: np.ndarray
    counts: np.ndarray
    note: str = ""


def project_cloud(members, grid, mode_counts=(3, 3, 2)):
    """Low-order cosine coefficients of (u, v, w): the counting coordinates.

    Along the first axis, modes k = 0 .. n_c-1 per component (the default
    8-dimensional projection).  Coefficients use the orthonormalized
    discrete cosine modes, so coordinates inherit the H geometry.
    """
    from .grid import cosine_mode, norm_l2
    basis = []
    for ci, n_modes in enumerate(mode_counts):
        for k in range(n_modes):
            wavenumbers = (k,) + (0,) * (grid.dim - 1)
            mode = cosine_mode(grid, wavenumbers)
            mode = mode / norm_l2(mode, grid)
            basis.append((ci, mode))
    coords = np.empty((len(members), len(basis)))
    for mi, m in enumerate(members):
        comps = m.components()
        for bi, (ci, mode) in enumerate(basis):
            coords[mi, bi] = np.sum(grid.weights * comps[ci] * mode)
    return coords


def box_counting_dimension(members, grid, scales=None, mode_counts=(3, 3, 2)):
    """Box-counting slope of the projected cloud.

    Counts occupied boxes N(eps) over the scale list and returns the
    log-log regression slope; a degenerate cloud reports dimension 0
    directly.
    """
    members = getattr(members, "members", members)
    if len(members) < 1:
        raise ValueError("empty cloud")
    coords = project_cloud(members, grid, mode_counts)
    return box_counting_from_coords(coords, scales)


def box_counting_from_coords(coords, scales=None):
    """Box counting on raw projected coordinates (rows are points)."""
    coords = np.asarray(coords, dtype=float)
    mins = coords.min(axis=0)
    maxs = coords.max(axis=0)
    diameter = float(np.linalg.norm(maxs - mins))
    if diameter <= 0.0:
        return DimensionFit(0.0, np.array([]), np.array([]),
                            "degenerate cloud (diameter 0)")
    if scales is None:
        scales = diameter / np.array([4.0, 8.0, 16.0, 32.0])
    scales = np.asarray(sorted(scales, reverse=True), dtype=float)
    counts = []
    for eps in scales:
        idx = np.floor((coords - mins) / eps).astype(np.int64)
        counts.append(len(np.unique(idx, axis=0)))
    counts = np.asarray(counts)
    slope = float(np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0])
    return DimensionFit(slope, scales, counts)


def export_cloud(cloud, grid, directory, extras=None):
    """Directory of binary field snapshots plus a JSON manifest."""
    import os
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, m in enumerate(cloud.members):
        name = "member_%03d.bin" % i
        save_state_binary(m, os.path.join(directory, name))
        names.append(name)
    manifest = {
        "tau": cloud.tau,
        "horizon": cloud.horizon,
        "member_count": cloud.size,
        "converged": cloud.converged,
        "convergence_history": [[h, d] for h, d in cloud.history],
        "members": names,
    }
    if extras:
        manifest.update(extras)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
