import math

import numpy as np
import pytest

from conftest import MC_N, kramers_mc
from weaknoise import ValidationError
from weaknoise import characteristics as ch
from weaknoise.equilibrium import analyze_all, analyze_equilibrium
from weaknoise.grid import GridSpec, build_grid
from weaknoise.model import builtin
from weaknoise.montecarlo import AbsorbingBoundary, mc_simulate
from weaknoise.validate import (chi_from_momentum, eikonal_residual, hamiltonian, hamiltonian_shoot,
                                projection_gap, residual_from_chi)


def test_shoot_linear_ou():
    m = builtin("linear_ou")
    z = np.array([1e-3, 0.0])
    t = math.log(1e3)
    tr = hamiltonian_shoot(m, z, z, t_max=t, phi0=0.5 * z @ z, t_eval=np.array([0.0, t]))
    assert tr.x[-1] == pytest.approx(1.0, abs=1e-6) and abs(tr.y[-1]) <= 1e-12
    assert tr.phi[-1] == pytest.approx(0.5, abs=1e-6)
    assert np.max(np.abs(tr.H)) <= 1e-10


def test_shoot_kramers_matches_exact_phi():
    m = builtin("kramers_cubic", gamma=1.0, omega=1.0)
    att = analyze_equilibrium(m, (-1.0, 0.0))
    for th in np.linspace(0.0, 2 * np.pi, 5, endpoint=False):
        z = 1e-4 * np.array([math.cos(th), math.sin(th)])
        tr = hamiltonian_shoot(m, att.location + z, att.S @ z, t_max=8.0, phi0=0.5 * z @ att.S @ z,
                               t_eval=np.linspace(0.0, 8.0, 81))
        ok = np.isfinite(tr.phi)
        exact = -tr.x ** 2 / 2 - tr.x ** 3 / 3 + tr.y ** 2 / 2 + 1.0 / 6.0
        assert np.max(np.abs(tr.phi[ok] - exact[ok])) <= 1e-6


@pytest.mark.parametrize("name, kw", [("linear_ou", {}), ("rotational_ou", {"omega": 1.3}),
                                      ("maier_stein", {"alpha": 2.0}), ("kramers_cubic", {"gamma": 0.8})])
def test_projection_identity(name, kw):
    m = builtin(name, **kw)
    rng = np.random.default_rng(11)
    P = rng.uniform(-1, 1, size=(200, 2))
    c = rng.uniform(-3, 3, size=200)
    assert projection_gap(m, P[:, 0], P[:, 1], c) <= 1e-8
    assert np.max(np.abs(residual_from_chi(m, P[:, 0], P[:, 1], c))) <= 1e-10


def test_chi_from_momentum_roundtrip():
    m = builtin("maier_stein", alpha=2.0)
    rng = np.random.default_rng(5)
    P = rng.uniform(-1, 1, size=(50, 2))
    c = rng.uniform(-2, 2, size=50)
    p1, p2 = ch._grad_phi(m, P[:, 0], P[:, 1], c)
    assert np.allclose(chi_from_momentum(m, P[:, 0], P[:, 1], p1, p2), c, atol=1e-10)
    assert np.allclose(hamiltonian(m, P[:, 0], P[:, 1], p1, p2), 0.0, atol=1e-12)


def _grid(model, att, box, n, n_traj):
    return build_grid(ch.upward_fan(model, att, n_traj), GridSpec(box[0], box[1], n, box[2], box[3], n), model)


@pytest.mark.parametrize("name, kw", [("linear_ou", {}), ("rotational_ou", {"omega": 1.0})])
def test_eikonal_residual_exact_models(name, kw):
    m = builtin(name, **kw)
    res = eikonal_residual(m, _grid(m, analyze_all(m)[0], (-1.2, 1.2, -1.2, 1.2), 41, 128))
    assert res.max_residual1 <= 1e-6
    assert res.max_residual2 is not None and res.max_residual2 <= 1e-4


def test_eikonal_residual_maier_stein():
    m = builtin("maier_stein", alpha=2.0)
    att = next(e for e in analyze_all(m, chi_if_undetermined=0.0) if e.kind == "attractor" and e.location[0] > 0)
    g = _grid(m, att, (0.5, 1.5, -0.5, 0.5), 51, 512)
    res = eikonal_residual(m, g)
    assert res.max_residual1 <= 1e-5 and res.max_residual2 is None
    forced = eikonal_residual(m, g, second=True)
    assert forced.max_residual2 > 1e-3


def test_mc_linear_ou_order_one():
    m = builtin("linear_ou")
    b = AbsorbingBoundary.circle((0.0, 0.0), 1.0)
    st = mc_simulate(m, (0.0, 0.0), b, 1.0, 1e-3, 300, 3, 100.0)
    assert st.valid and st.n_exited == 300
    assert 0.1 < st.mean_exit_time < 10.0
    assert np.all(np.abs(st.exit_positions) <= math.pi)
    assert st.hist_mass.sum() == pytest.approx(1.0)


def test_mc_deterministic_and_thread_independent():
    m = builtin("maier_stein", alpha=1.0)
    b = AbsorbingBoundary.circle((1.0, 0.0), 0.5)
    runs = [mc_simulate(m, (1.0, 0.0), b, 0.1, 1e-3, 64, 42, 50.0, threads=t) for t in (1, 1, 3)]
    for r in runs[1:]:
        assert np.array_equal(r.exit_times, runs[0].exit_times)
        assert np.array_equal(r.exit_positions, runs[0].exit_positions)
    other = mc_simulate(m, (1.0, 0.0), b, 0.1, 1e-3, 64, 43, 50.0)
    assert not np.array_equal(other.exit_times, runs[0].exit_times)


def test_mc_rejects_bad_start():
    m = builtin("linear_ou")
    with pytest.raises(ValidationError):
        mc_simulate(m, (2.0, 0.0), AbsorbingBoundary.circle(radius=1.0), 0.1, 1e-3, 10, 0, 1.0)
    with pytest.raises(ValidationError):
        mc_simulate(m, (0.0, 0.0), AbsorbingBoundary.circle(radius=1.0), 0.0, 1e-3, 10, 0, 1.0)


def test_mc_censoring():
    m = builtin("linear_ou")
    st = mc_simulate(m, (0.0, 0.0), AbsorbingBoundary.circle(radius=2.0), 0.05, 1e-2, 20, 1, 1.0)
    assert st.n_censored == 20 and not st.valid and math.isnan(st.mean_exit_time)


@pytest.mark.slow
def test_mc_dt_halving():
    coarse, _ = kramers_mc(6e-4)
    fine, _ = kramers_mc(3e-4)
    assert coarse.n_trajectories == fine.n_trajectories == MC_N
    assert abs(coarse.mean_exit_time - fine.mean_exit_time) < coarse.std_error
