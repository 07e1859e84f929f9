import numpy as np
import pytest

from hrlab.grid import (StateField, random_smooth_state, state_diff_h_sq,
                        state_norm_h_sq)
from hrlab.model import ForcingSpec, HrParameters
from hrlab.solver import (BlowUpError, ProcessConfig, cocycle_check, evolve,
                          evolve_many, evolve_ode, save_trajectory_csv)

ZERO = ForcingSpec("zero")
PERIODIC = ForcingSpec("time-periodic", (0.5, 0.2, 0.1), frequency=0.3)


def test_process_config_validation():
    with pytest.raises(ValueError):
        ProcessConfig(dt=0.0)
    with pytest.raises(ValueError):
        ProcessConfig(scheme="rk4")
    with pytest.raises(ValueError):
        ProcessConfig(diffusion_method="multigrid")
    with pytest.raises(ValueError):
        ProcessConfig(max_steps=0)


def test_identity_process(grid, params, rng):
    g0 = random_smooth_state(grid, rng, norm_sq=2.0)
    traj = evolve(g0, 1.5, 1.5, params, PERIODIC, grid, ProcessConfig())
    assert len(traj.times) == 1
    assert np.array_equal(traj.final.u, g0.u)
    assert np.array_equal(traj.final.v, g0.v)
    assert np.array_equal(traj.final.w, g0.w)


@pytest.mark.parametrize("method", ["tridiagonal-direct", "cosine-spectral"])
def test_uniform_fields_stay_uniform(grid, params, method):
    cfg = ProcessConfig(diffusion_method=method)
    g0 = StateField.constant(grid, 0.3, -0.1, 0.2)
    traj = evolve(g0, 0.0, 2.0, params, ForcingSpec("constant", (0.1, 0, 0)),
                  grid, cfg, stride=500, snapshot_stride=1)
    for snap in traj.snapshots:
        for comp in snap.components():
            assert np.ptp(comp) < 1e-12


def test_uniform_run_matches_ode_oracle(grid, params):
    cfg = ProcessConfig(scheme="imex-cnab2")
    traj = evolve(StateField.zeros(grid), 0.0, 10.0, params, ZERO, grid, cfg,
                  stride=1000)
    _, vals = evolve_ode((0.0, 0.0, 0.0), 0.0, 10.0, params, ZERO, dt=1e-4)
    pde_final = np.array([traj.final.u.flat[0], traj.final.v.flat[0],
                          traj.final.w.flat[0]])
    scale = np.max(np.abs(vals))
    assert np.max(np.abs(pde_final - vals[-1])) / scale < 1e-4


def test_diffusion_methods_agree_in_1d(grid, params, rng):
    g0 = random_smooth_state(grid, rng, norm_sq=4.0)
    finals = []
    for method in ("tridiagonal-direct", "cosine-spectral"):
        cfg = ProcessConfig(diffusion_method=method)
        finals.append(evolve(g0, 0.0, 1.0, params, PERIODIC, grid, cfg).final)
    assert np.sqrt(state_diff_h_sq(finals[0], finals[1], grid)) < 1e-10


def test_ode_origin_is_fixed_point():
    p = HrParameters(alpha=0.0, J=0.0, c=0.0)
    _, vals = evolve_ode((0.0, 0.0, 0.0), 0.0, 10.0, p, ZERO, dt=1e-3)
    assert np.array_equal(vals, np.zeros_like(vals))


def test_ode_rejects_nonuniform_forcing(params):
    with pytest.raises(ValueError):
        evolve_ode((0, 0, 0), 0.0, 1.0, params,
                   ForcingSpec("space-modulated", (1, 0, 0)), dt=1e-3)


def _count_bursts(times, u, threshold=0.0, quiet_gap=20.0):
    crossings = times[1:][(u[:-1] < threshold) & (u[1:] >= threshold)]
    if crossings.size == 0:
        return 0
    bursts = 1
    for a, b in zip(crossings[:-1], crossings[1:]):
        if b - a > quiet_gap:
            bursts += 1
    return bursts


def test_ode_bursting_alternation(params):
    times, vals = evolve_ode((-1.6, 0.0, 0.0), 0.0, 1000.0, params, ZERO,
                             dt=2e-3)
    bursts = _count_bursts(times, vals[:, 0])
    assert bursts >= 2


def test_cocycle_trivial_cases(grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    cfg = ProcessConfig()
    assert cocycle_check(g, 0.0, 0.0, 2.0, params, PERIODIC, grid, cfg) == 0.0
    assert cocycle_check(g, 0.0, 2.0, 2.0, params, PERIODIC, grid, cfg) == 0.0


def test_cocycle_composition(grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    cfg = ProcessConfig()
    defect = cocycle_check(g, 0.0, 1.0, 2.0, params, PERIODIC, grid, cfg)
    assert defect <= 1e-10


def test_cocycle_rejects_misaligned_times(grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    cfg = ProcessConfig()
    with pytest.raises(ValueError):
        cocycle_check(g, 0.0, 0.55551234, 2.0, params, PERIODIC, grid, cfg)
    with pytest.raises(ValueError):
        cocycle_check(g, 0.0, 3.0, 2.0, params, PERIODIC, grid, cfg)


def _order_ratio(scheme, grid, params, rng):
    g0 = random_smooth_state(grid, rng, norm_sq=1.0)
    horizon = 0.5
    ref_cfg = ProcessConfig(dt=1.25e-4, scheme="imex-cnab2")
    ref = evolve(g0, 0.0, horizon, params, PERIODIC, grid, ref_cfg).final
    errs = []
    for dt in (4e-3, 2e-3):
        cfg = ProcessConfig(dt=dt, scheme=scheme)
        fin = evolve(g0, 0.0, horizon, params, PERIODIC, grid, cfg).final
        errs.append(np.sqrt(state_diff_h_sq(fin, ref, grid)))
    return errs[0] / errs[1]


def test_temporal_order_euler(grid, params, rng):
    ratio = _order_ratio("imex-euler", grid, params, rng)
    assert 1.4 < ratio < 2.6


def test_temporal_order_cnab2(grid, params, rng):
    ratio = _order_ratio("imex-cnab2", grid, params, rng)
    assert 2.8 < ratio < 5.2


def test_blowup_guard_names_step_and_monitor(grid, params, rng):
    g0 = random_smooth_state(grid, rng, norm_sq=1e4)   # amplitude ~ 80
    cfg = ProcessConfig(rescue_substeps=False)
    with pytest.raises(BlowUpError) as exc:
        evolve(g0, 0.0, 1.0, params, ZERO, grid, cfg)
    err = exc.value
    assert err.monitor in ("norm_u_sq", "norm_v_sq", "norm_w_sq",
                           "grad_u_sq", "grad_v_sq", "grad_w_sq",
                           "grad_g_sq", "u_l4_pow4")
    assert err.step >= 0
    assert "blow-up guard" in str(err)


def test_rescue_substeps_handle_colossal_data(grid, params):
    rng = np.random.default_rng(7)
    big = StateField(rng.uniform(-1, 1, grid.shape) * 1e6,
                     rng.uniform(-1, 1, grid.shape) * 1e6,
                     rng.uniform(-1, 1, grid.shape) * 1e6)
    cfg = ProcessConfig(blowup_threshold=1e40)
    traj = evolve(big, 0.0, 0.5, params, ZERO, grid, cfg, stride=100)
    assert traj.final.all_finite()
    assert traj.h_norm_sq()[-1] < traj.h_norm_sq()[0]
    # without the rescue ladder the explicit cubic explodes immediately
    with pytest.raises(BlowUpError):
        evolve(big, 0.0, 0.5, params, ZERO, grid,
               ProcessConfig(blowup_threshold=1e40, rescue_substeps=False))


def test_rescue_is_deterministic(grid, params):
    rng = np.random.default_rng(11)
    big = StateField(rng.uniform(-1, 1, grid.shape) * 1e5,
                     rng.uniform(-1, 1, grid.shape) * 1e5,
                     rng.uniform(-1, 1, grid.shape) * 1e5)
    cfg = ProcessConfig(blowup_threshold=1e40)
    a = evolve(big, 0.0, 0.2, params, ZERO, grid, cfg).final
    b = evolve(big, 0.0, 0.2, params, ZERO, grid, cfg).final
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.w, b.w)


def test_evolve_many_matches_single(grid, params, rng):
    states = [random_smooth_state(grid, rng, norm_sq=s) for s in (1.0, 9.0)]
    cfg = ProcessConfig()
    _, series, finals = evolve_many(states, 0.0, 1.0, params, PERIODIC, grid,
                                    cfg, record=("h", "e"))
    for s, fin in zip(states, finals):
        single = evolve(s, 0.0, 1.0, params, PERIODIC, grid, cfg).final
        assert np.array_equal(single.u, fin.u)
        assert np.array_equal(single.v, fin.v)
        assert np.array_equal(single.w, fin.w)
    assert series["h"].shape == (1001, 2)
    assert np.all(series["e"] >= series["h"])


def test_evolve_many_blowup_names_member(grid, params, rng):
    ok = random_smooth_state(grid, rng, norm_sq=1.0)
    bad = random_smooth_state(grid, rng, norm_sq=1e4)
    cfg = ProcessConfig(rescue_substeps=False)
    with pytest.raises(BlowUpError) as exc:
        evolve_many([ok, bad], 0.0, 1.0, params, ZERO, grid, cfg)
    assert exc.value.member == 1


def test_horizon_alignment_and_guard(grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    with pytest.raises(ValueError):
        evolve(g, 0.0, 0.0005210101, params, ZERO, grid, ProcessConfig())
    with pytest.raises(ValueError):
        evolve(g, 0.0, 10.0, params, ZERO, grid, ProcessConfig(max_steps=10))
    with pytest.raises(ValueError):
        evolve(g, 0.0, -1.0, params, ZERO, grid, ProcessConfig())


def test_trajectory_series_and_stride(grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    traj = evolve(g, 0.0, 1.0, params, PERIODIC, grid, ProcessConfig(),
                  stride=10, snapshot_stride=20)
    assert len(traj.times) == 101
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0
    assert len(traj.snapshots) == len(traj.snapshot_times)
    for key in ("norm_u_sq", "grad_g_sq", "u_l4_pow4", "p_norm_sq"):
        assert traj.series[key].shape == traj.times.shape
    assert np.all(np.isfinite(traj.series["grad_g_sq"]))


def test_trajectory_csv(tmp_path, grid, params, rng):
    g = random_smooth_state(grid, rng, norm_sq=1.0)
    traj = evolve(g, 0.0, 0.1, params, PERIODIC, grid, ProcessConfig(),
                  stride=10)
    path = tmp_path / "traj.csv"
    save_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,norm_u_sq,norm_v_sq,norm_w_sq,grad_g_sq,u_l4_pow4,p_norm_sq"
    assert len(lines) == 1 + len(traj.times)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], traj.times)
