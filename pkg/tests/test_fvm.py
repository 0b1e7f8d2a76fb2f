import math
from dataclasses import replace

import numpy as np
import pytest

from spherefv import (
    ConfigError,
    FLUX_KINDS,
    GODUNOV,
    LAX_FRIEDRICHS,
    build_latlon,
    cfl_timestep,
    init_state,
    make_flux,
    make_numerical_flux,
    numerical_flux,
    run,
    step,
)
from spherefv.fvm import FaceFluxTable


def _setup(kind=GODUNOV, n_phi=8, n_theta=4, flux_name="latitude_burgers",
           box=(-1.5, 1.5), safety=0.5):
    mesh = build_latlon(n_phi, n_theta, 0.3)
    flux = make_flux(flux_name, {"c_expr": "sin(theta)"}
                     if flux_name == "latitude_burgers" else {})
    nf = make_numerical_flux(kind, mesh, flux, box=box)
    tau = cfl_timestep(mesh, flux, nf, box, safety)
    return mesh, flux, nf, tau


def _initial(mesh):
    return init_state(mesh, lambda phi, theta: 0.5 * np.cos(theta)
                      + 0.3 * np.sin(phi) * np.sin(theta))


# ---------------------------------------------------------------------------
# numerical flux axioms
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", FLUX_KINDS)
def test_consistency_exact(kind):
    mesh, flux, nf, _ = _setup(kind)
    rng = np.random.default_rng(41)
    for u in rng.uniform(-1.2, 1.2, 5):
        states = np.full(mesh.n_faces, u)
        assert np.array_equal(nf.values(states, states), nf.table.s(states))


@pytest.mark.parametrize("kind", FLUX_KINDS)
def test_conservation_between_sides(kind):
    mesh, flux, nf, _ = _setup(kind)
    rng = np.random.default_rng(42)
    for fid in rng.choice(mesh.n_faces, 20, replace=False):
        face = mesh.faces[fid]
        u, v = rng.uniform(-1.2, 1.2, 2)
        left = numerical_flux(nf, fid, face.left, u, v)
        right = numerical_flux(nf, fid, face.right, v, u)
        assert left == -right


@pytest.mark.parametrize("kind", FLUX_KINDS)
def test_monotonicity_sampled(kind):
    _, _, nf, _ = _setup(kind)
    worst = nf.validate_monotonicity(n_states=15, max_faces=60,
                                     rng=np.random.default_rng(43))
    assert worst >= -1e-12


def test_upwind_equivalence_for_monotone_restriction():
    # solid rotation: s is increasing in u on every meridian face, so both
    # Godunov and Engquist-Osher reduce to the upwind value s(a)
    mesh, flux, nf_g, _ = _setup(GODUNOV, flux_name="solid_rotation")
    nf_e = make_numerical_flux("engquist_osher", mesh, flux, box=(-1.5, 1.5))
    rng = np.random.default_rng(44)
    a = rng.uniform(-1.2, 1.2, mesh.n_faces)
    b = rng.uniform(-1.2, 1.2, mesh.n_faces)
    s_a = nf_g.table.s(a)
    assert np.array_equal(nf_g.values(a, b), s_a)
    assert np.abs(nf_e.values(a, b) - s_a).max() <= 1e-14


def test_lax_friedrichs_formula():
    mesh, flux, nf, _ = _setup(LAX_FRIEDRICHS)
    rng = np.random.default_rng(45)
    a = rng.uniform(-1.2, 1.2, mesh.n_faces)
    b = rng.uniform(-1.2, 1.2, mesh.n_faces)
    t = nf.table
    expected = 0.5 * (t.s(a) + t.s(b)) - 0.5 * t.lam * (b - a)
    assert np.array_equal(nf.values(a, b), expected)


def test_unknown_kind_rejected():
    mesh, flux, _, _ = _setup()
    with pytest.raises(ConfigError):
        make_numerical_flux("roe", mesh, flux)


# ---------------------------------------------------------------------------
# CFL
# ---------------------------------------------------------------------------

def test_cfl_solid_rotation_formula():
    mesh, flux, nf, tau = _setup(GODUNOV, flux_name="solid_rotation",
                                 box=(-1.0, 1.0), safety=0.5)
    geo = float((mesh.cell_area / mesh.cell_perimeter).min())
    # Lip(f) = 1 for unit solid rotation over |u| <= 1
    assert tau == pytest.approx(0.5 * geo, rel=1e-10)


def test_cfl_shrinks_with_refinement():
    _, _, _, tau1 = _setup(GODUNOV, n_phi=8, n_theta=4)
    _, _, _, tau2 = _setup(GODUNOV, n_phi=16, n_theta=8)
    assert tau1 / tau2 == pytest.approx(2.0, rel=0.35)


def test_cfl_validation():
    mesh, flux, nf, _ = _setup()
    with pytest.raises(ConfigError):
        cfl_timestep(mesh, flux, nf, (-1.0, 1.0), safety=1.5)
    zero = make_flux("solid_rotation", {"omega": 0.0})
    nf0 = make_numerical_flux(GODUNOV, mesh, zero)
    with pytest.raises(ConfigError):
        cfl_timestep(mesh, zero, nf0, (-1.0, 1.0), safety=0.5)
    assert cfl_timestep(mesh, zero, nf0, (-1.0, 1.0), safety=0.5,
                        tau_floor=0.01) == 0.01


# ---------------------------------------------------------------------------
# step / run
# ---------------------------------------------------------------------------

def test_constant_state_divergence_free_flux_inert():
    mesh, flux, nf, tau = _setup(GODUNOV, flux_name="solid_rotation")
    state = init_state(mesh, lambda phi, theta: 0.75 + 0.0 * phi)
    state.tau = tau
    new, _ = step(state, flux, nf)
    assert np.abs(new.u - 0.75).max() <= 1e-14


@pytest.mark.parametrize("kind", FLUX_KINDS)
def test_mass_conservation_and_max_principle(kind):
    mesh, flux, nf, tau = _setup(kind, safety=0.99)
    state = _initial(mesh)
    state.tau = tau
    mass0 = float(state.u @ mesh.cell_area)
    linf = np.abs(state.u).max()
    for _ in range(50):
        state, _ = step(state, flux, nf)
        state.tau = tau
        mass = float(state.u @ mesh.cell_area)
        assert abs(mass - mass0) <= 1e-12 * (1.0 + abs(mass0))
        new_linf = np.abs(state.u).max()
        assert new_linf <= linf + 1e-14
        linf = new_linf


def test_run_t_zero_and_hook_count():
    mesh, flux, nf, tau = _setup()
    state = _initial(mesh)
    final = run(state, flux, nf, T=0.0, tau=tau)
    assert np.array_equal(final.u, state.u) and final.n == 0

    calls = []
    T = 7.3 * tau
    final = run(state, flux, nf, T=T, tau=tau,
                hooks=[lambda s, d: calls.append(s.n)])
    assert len(calls) == math.ceil(T / tau)
    assert final.t == pytest.approx(T, rel=1e-14)


def test_negative_time_rejected():
    mesh, flux, nf, tau = _setup()
    with pytest.raises(ConfigError):
        run(_initial(mesh), flux, nf, T=-1.0, tau=tau)


# ---------------------------------------------------------------------------
# convex decomposition
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", FLUX_KINDS)
def test_reconstruction_identity(kind):
    mesh, flux, nf, tau = _setup(kind)
    state = _initial(mesh)
    state.tau = tau
    for _ in range(10):
        state, decomp = step(state, flux, nf)
        state.tau = tau
        assert decomp.reconstruction_residual() <= 1e-12


def test_intermediate_states_are_convex_combinations():
    mesh, flux, nf, tau = _setup(GODUNOV)
    state = _initial(mesh)
    state.tau = tau
    state, d = step(state, flux, nf)
    other = np.where(d.face_sign > 0,
                     d.u_right[np.maximum(d.face_index, 0)],
                     d.u_left[np.maximum(d.face_index, 0)])
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (d.u_old[:, None] - d.utilde) / (d.u_old[:, None] - other)
    mask = d.valid & (np.abs(d.u_old[:, None] - other) > 1e-13)
    assert lam[mask].min() >= -1e-12
    assert lam[mask].max() <= 1.0 + 1e-12
    recon = d.u_old[:, None] * (1.0 - lam) + other * lam
    assert np.abs((recon - d.utilde)[mask]).max() <= 1e-12


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def test_threaded_step_bitwise_identical():
    mesh, flux, nf, tau = _setup(GODUNOV, n_phi=12, n_theta=6)
    state = _initial(mesh)
    s1, s8 = replace(state), replace(state)
    for _ in range(20):
        s1.tau = tau
        s8.tau = tau
        s1, _ = step(s1, flux, nf, threads=1)
        s8, _ = step(s8, flux, nf, threads=8)
    assert np.array_equal(s1.u, s8.u)


def test_table_view_matches_full_evaluation():
    mesh, flux, nf, _ = _setup(GODUNOV)
    rng = np.random.default_rng(46)
    a = rng.uniform(-1.2, 1.2, mesh.n_faces)
    b = rng.uniform(-1.2, 1.2, mesh.n_faces)
    full = nf.values(a, b)
    ids = np.sort(rng.choice(mesh.n_faces, 17, replace=False))
    from spherefv.fvm import NumericalFlux
    sub = NumericalFlux(kind=nf.kind, table=nf.table.view(ids))
    assert np.array_equal(sub.values(a[ids], b[ids]), full[ids])
