import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bzmarbles.errors import ConfigurationError, SolverBlowUpError
from bzmarbles.kinetics import KineticsParams, reaction_rates, rest_state
from bzmarbles.medium import (
    MarbleSpec,
    MediumState,
    SolverParams,
    build_disc_mask,
    check_finite,
    diameter_from_volume,
    initiate_wave,
    laplacian,
    resting_state,
    step,
    strip_grid,
)
from bzmarbles.simulation import ArraySimulation, Stimulus, detection_levels
from bzmarbles.array import ContactGraph

KP = KineticsParams()


def brute_force_mask_count(d_over_h):
    # every grid cell centre within d/2 of the disc centre, scanned one by one
    r = d_over_h / 2.0
    half = int(math.ceil(r))
    return sum(1 for i in range(-half, half + 1) for j in range(-half, half + 1) if i * i + j * j <= r * r)


def test_diameters():
    assert round(diameter_from_volume(50), 3) == 4.571
    assert round(diameter_from_volume(100), 3) == 5.759


@pytest.mark.parametrize("res", [20, 24, 33.5, 64])
def test_mask_matches_brute_force(res):
    spec = MarbleSpec.from_resolution(50, res)
    grid = build_disc_mask(spec)
    assert grid.n_cells == brute_force_mask_count(res)
    assert grid.mask.sum() == grid.n_cells


def test_mask_area_close_to_disc():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 64))
    assert abs(grid.n_cells / (math.pi * 32 ** 2) - 1) < 0.02


def test_coarse_grid_rejected():
    with pytest.raises(ConfigurationError):
        build_disc_mask(MarbleSpec.from_resolution(50, 19.5))


def test_neighbours_stay_inside_mask():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 24))
    rc = grid.cells
    for n, (r, c) in enumerate(rc):
        for k, (dr, dc) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            j = grid.nbr[n, k]
            rr, cc = r + dr, c + dc
            inside = 0 <= rr < grid.mask.shape[0] and 0 <= cc < grid.mask.shape[1] and grid.mask[rr, cc]
            if inside:
                assert tuple(rc[j]) == (rr, cc)
            else:
                assert j == n


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0, 10), res=st.integers(20, 40))
def test_laplacian_of_constant_is_zero(c, res):
    grid = build_disc_mask(MarbleSpec.from_resolution(50, res))
    img = grid.to_image(np.full(grid.n_cells, c), fill=0.0)
    assert np.all(laplacian(img, grid.mask, grid.h_mm) == 0.0)
    # the kernel route, one pure-diffusion step from a constant field
    sp = SolverParams(1e-4, grid.h_mm, KP.diffusion_dimless)
    out = step(MediumState(np.full(grid.n_cells, c), np.zeros(grid.n_cells)), grid, KP, sp, reactions=False)
    assert np.all(out.u == c)


def test_laplacian_spike():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 24))
    h = grid.h_mm
    img = np.zeros(grid.mask.shape)
    r0, c0 = grid.cells[grid.centre_cell]
    img[r0, c0] = 1.0
    lap = laplacian(img, grid.mask, h)
    assert lap[r0, c0] == pytest.approx(-4 / h ** 2)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        assert lap[r0 + dr, c0 + dc] == pytest.approx(1 / h ** 2)
    assert np.count_nonzero(lap) == 5


def test_laplacian_of_x_squared():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 64))
    x = grid.xy_mm[:, 0]
    img = grid.to_image(x ** 2, fill=0.0)
    lap = laplacian(img, grid.mask, grid.h_mm)[grid.cells[:, 0], grid.cells[:, 1]]
    r = np.hypot(*(grid.xy_mm - np.array(grid.centre_mm)).T)
    interior = r <= grid.spec.radius_mm - 2.5 * grid.h_mm
    assert np.max(np.abs(lap[interior] - 2.0)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_kernel_stencil_matches_numpy_laplacian(seed):
    # two independent routes to the same stencil: padded numpy images and the neighbour table
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 22))
    u = np.random.default_rng(seed).random(grid.n_cells)
    dt = 1e-5
    d = KP.diffusion_dimless
    sp = SolverParams(dt, grid.h_mm, d)
    out = step(MediumState(u.copy(), np.zeros_like(u)), grid, KP, sp, reactions=False)
    lap = laplacian(grid.to_image(u, fill=0.0), grid.mask, grid.h_mm)[grid.cells[:, 0], grid.cells[:, 1]]
    np.testing.assert_allclose((out.u - u) / (dt * d), lap, rtol=1e-6, atol=1e-6 * np.abs(lap).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), res=st.integers(20, 36))
def test_no_flux_conserves_mass(seed, res):
    grid = build_disc_mask(MarbleSpec.from_resolution(50, res))
    u = np.random.default_rng(seed).random(grid.n_cells)
    sp = SolverParams.auto(grid.h_mm, KP)
    out = step(MediumState(u.copy(), np.zeros_like(u)), grid, KP, sp, reactions=False, nsteps=1000)
    assert abs(out.u.sum() - u.sum()) / u.sum() < 1e-9


def test_fixed_point_preserved():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 24))
    state = resting_state(grid, KP)
    sp = SolverParams.auto(grid.h_mm, KP)
    out = step(state, grid, KP, sp)
    assert np.max(np.abs(out.u - state.u)) < 1e-12
    assert np.max(np.abs(out.v - state.v)) < 1e-12
    assert out.t == pytest.approx(sp.dt)


def test_single_cell_matches_ode_euler():
    kp = KP.with_(diffusion_u=1e-12)
    grid = strip_grid(2, 1, 1.0)
    sp = SolverParams(5e-4, 1.0, kp.diffusion_dimless)
    u0, v0 = rest_state(kp)
    state = MediumState(np.array([u0 + 0.3, u0 + 0.3]), np.array([v0, v0]))
    u, v = u0 + 0.3, v0
    for _ in range(400):
        du, dv = reaction_rates(u, v, kp)
        u, v = u + sp.dt * du, v + sp.dt * dv
        state = step(state, grid, kp, sp)
        # two identical cells: diffusion between them is exactly zero
        assert state.u[0] == u and state.v[0] == v


def test_mirror_symmetry_of_centred_wave():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 30))
    state = initiate_wave(resting_state(grid, KP), grid, grid.centre_cell, 0.3, 0.8)
    sp = SolverParams.auto(grid.h_mm, KP)
    img_idx = grid.to_image(np.arange(grid.n_cells), fill=-1).astype(int)
    mirror = img_idx[:, ::-1][grid.cells[:, 0], grid.cells[:, 1]]
    for _ in range(20):
        state = step(state, grid, KP, sp, nsteps=100)
        assert np.max(np.abs(state.u - state.u[mirror])) <= 1e-12


def test_external_flux_enters_u_only():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 24))
    state = resting_state(grid, KP)
    sp = SolverParams.auto(grid.h_mm, KP)
    flux = np.zeros(grid.n_cells)
    flux[grid.centre_cell] = 1.0
    out = step(state, grid, KP, sp, flux)
    assert out.u[grid.centre_cell] == pytest.approx(state.u[grid.centre_cell] + sp.dt)
    assert np.array_equal(out.v, state.v)
    with pytest.raises(ConfigurationError):
        step(state, grid, KP, sp, np.zeros(3))


def test_cfl_violation_rejected():
    h, d = 0.1, 0.5
    limit = 0.9 * h * h / (4 * d)
    SolverParams(limit, h, d)
    with pytest.raises(ConfigurationError):
        SolverParams(limit * 1.01, h, d)
    with pytest.raises(ConfigurationError):
        SolverParams(1e-4, h, d, safety=0.0)
    with pytest.raises(ConfigurationError):
        SolverParams(-1e-4, h, d)


@given(h=st.floats(0.01, 1.0), d=st.floats(1e-3, 10.0), factor=st.floats(1.001, 100.0))
def test_cfl_property(h, d, factor):
    ok = 0.5 * h * h / (4 * d)
    assert SolverParams(ok, h, d, 0.5).dt == ok
    with pytest.raises(ConfigurationError):
        SolverParams(ok * factor, h, d, 0.5)


def test_blow_up_names_the_cell():
    u = np.zeros(10)
    v = np.zeros(10)
    u[7] = np.nan
    with pytest.raises(SolverBlowUpError) as info:
        check_finite(u, v, 1.0)
    assert info.value.cell == 7 and "cell 7" in str(info.value)
    u[7] = -1e-3
    with pytest.raises(SolverBlowUpError):
        check_finite(u, v, 1.0, offsets=np.array([0, 5, 10]))


def test_initiate_wave_edge_cases():
    grid = build_disc_mask(MarbleSpec.from_resolution(50, 24))
    rest = resting_state(grid, KP)
    one = initiate_wave(rest, grid, grid.centre_cell, 0.0, 0.8)
    changed = np.nonzero(one.u != rest.u)[0]
    assert changed.tolist() == [grid.centre_cell]
    assert np.array_equal(one.v, rest.v)
    same = initiate_wave(rest, grid, grid.centre_cell, 1.0, rest.u.min() / 2)
    assert np.array_equal(same.u, rest.u)
    with pytest.raises(ConfigurationError):
        initiate_wave(rest, grid, grid.n_cells, 0.2, 0.8)
    with pytest.raises(ConfigurationError):
        initiate_wave(rest, grid, 0, 0.2, 0.0)


def _centre_wave_reaches_rim(kp, res=24):
    grid = build_disc_mask(MarbleSpec.from_resolution(50, res))
    sim = ArraySimulation([grid], ContactGraph((grid.spec,), ()), kp, SolverParams.auto(grid.h_mm, kp))
    rec = sim.run(40.0, [Stimulus(1.0, 0, grid.centre_cell, 0.2, 0.8)])
    cells, _ = rec.activations[0]
    r = np.hypot(*(grid.xy_mm[cells] - np.array(grid.centre_mm)).T)
    return bool(np.any(r >= grid.spec.radius_mm - grid.h_mm))


def test_centre_initiation_reaches_rim():
    assert _centre_wave_reaches_rim(KP)


def test_extra_illumination_blocks_initiation():
    assert _centre_wave_reaches_rim(KP)
    assert not _centre_wave_reaches_rim(KP.with_(phi=KP.phi + 0.2))


def test_detection_levels_sit_between_rest_and_peak():
    lv = detection_levels(KP)
    assert lv.v_rest < lv.v_rearm < lv.v_thr < lv.v_peak
    assert lv.v_thr == pytest.approx(0.5 * (lv.v_rest + lv.v_peak))


# Planar front speed on a 40-cell-wide strip at d/h = 64 with default
# parameters, from the first run of the two-crossing measurement (frozen).
PLANAR_SPEED_MM_S = 0.2272472811212381


def test_planar_speed_constant_and_frozen():
    from planar import front_times, planar_speed, segment_speeds

    h = diameter_from_volume(50) / 64
    x, t = front_times(h, width_cells=40)
    speeds = segment_speeds(x, t, 0.5 * x[-1], 0.9 * x[-1])
    assert speeds.max() / speeds.min() - 1 < 0.05
    assert planar_speed(h, width_cells=40) == pytest.approx(PLANAR_SPEED_MM_S, rel=1e-9)
