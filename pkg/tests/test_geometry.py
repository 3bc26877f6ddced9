import numpy as np
import pytest
from scipy.optimize import minimize

from surfstokes.geometry import (
    LevelSetSurface,
    ProjectionError,
    SingularPointError,
    UnsupportedOrderError,
    approx_frame,
    eval_level_set,
    frame_arrays,
    project_to_surface,
)

SQ2 = np.sqrt(2.0)


def test_level_set_values_on_study_ellipsoid():
    surf = LevelSetSurface.stretched_ellipsoid()
    assert eval_level_set(surf, np.array([1.0, 0.0, 0.0]), 0).value == pytest.approx(0.0)
    # x1^2 + x2^2/2 + x3^2/2 - 1 at a generic point
    x = np.array([0.5, 1.0, -0.5])
    assert eval_level_set(surf, x).value == pytest.approx(0.25 + 0.5 + 0.125 - 1.0)


def test_level_set_sphere_jet():
    surf = LevelSetSurface.unit_sphere()
    assert eval_level_set(surf, np.zeros(3), 0).value == pytest.approx(-1.0)
    j = eval_level_set(surf, np.array([0.0, 0.0, 2.0]), 1)
    assert j.value == pytest.approx(3.0)
    assert np.allclose(j.grad, [0.0, 0.0, 4.0])
    assert np.allclose(eval_level_set(surf, np.ones(3)).hess, 2.0 * np.eye(3))


def test_unsupported_order_rejected():
    surf = LevelSetSurface.unit_sphere()
    with pytest.raises(UnsupportedOrderError):
        eval_level_set(surf, np.zeros(3), order=4)


def test_frame_on_surface_point():
    surf = LevelSetSurface.stretched_ellipsoid()
    fr = approx_frame(surf, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(fr.normal, [1.0, 0.0, 0.0])
    assert fr.distance == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(fr.projection, [1.0, 0.0, 0.0])


def test_frame_above_sphere_pole():
    surf = LevelSetSurface.unit_sphere()
    fr = approx_frame(surf, np.array([0.0, 0.0, 2.0]))
    assert fr.distance == pytest.approx(0.75)
    assert np.allclose(fr.projection, [0.0, 0.0, 1.25])


def test_frame_normalizes_gradient():
    surf = LevelSetSurface.stretched_ellipsoid()
    fr = approx_frame(surf, np.array([0.0, SQ2, 0.0]))
    assert np.allclose(fr.normal, [0.0, 1.0, 0.0])


def test_frame_rejects_singular_point():
    surf = LevelSetSurface.unit_sphere()
    with pytest.raises(SingularPointError):
        approx_frame(surf, np.zeros(3))


def test_projection_from_pole():
    surf = LevelSetSurface.unit_sphere()
    assert np.allclose(project_to_surface(surf, np.array([0.0, 0.0, 2.0])), [0, 0, 1])


def test_projection_fixed_point():
    surf = LevelSetSurface.stretched_ellipsoid()
    x = np.array([0.0, SQ2, 0.0])
    assert np.array_equal(project_to_surface(surf, x), x)


def test_projection_failure_reports_residual():
    surf = LevelSetSurface.unit_sphere()
    with pytest.raises(ProjectionError) as err:
        project_to_surface(surf, np.array([0.0, 0.0, 2.0]), tol=1e-14, max_iter=1)
    assert err.value.residual > 0


def _closest_point_oracle(surf, x):
    # dense parametric sampling followed by local nearest-point refinement
    a1, a2, a3 = surf.semi_axes
    th = np.linspace(0, np.pi, 400)
    ph = np.linspace(0, 2 * np.pi, 800, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    pts = np.stack(
        [a1 * np.sin(T) * np.cos(P), a2 * np.sin(T) * np.sin(P), a3 * np.cos(T)], axis=-1
    )
    d2 = np.sum((pts - x) ** 2, axis=-1)
    i, j = np.unravel_index(d2.argmin(), d2.shape)

    def objective(u):
        t, p = u
        y = np.array(
            [a1 * np.sin(t) * np.cos(p), a2 * np.sin(t) * np.sin(p), a3 * np.cos(t)]
        )
        return float(np.sum((y - x) ** 2))

    res = minimize(objective, np.array([T[i, j], P[i, j]]), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-16})
    t, p = res.x
    return np.array([a1 * np.sin(t) * np.cos(p), a2 * np.sin(t) * np.sin(p), a3 * np.cos(t)])


def test_iterated_projection_lands_near_true_closest_point():
    surf = LevelSetSurface.stretched_ellipsoid()
    x = np.array([0.5, 0.5, 0.5])
    y = project_to_surface(surf, x)
    assert abs(eval_level_set(surf, y).value) < 1e-14
    closest = _closest_point_oracle(surf, x)
    dist = np.linalg.norm(closest - x)
    # the fixed-point limit differs from the true closest point at O(d^2)
    assert np.linalg.norm(y - closest) <= dist**2


def test_unit_vector_identity():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        m = rng.standard_normal(3)
        m /= np.linalg.norm(m)
        lhs = 1.0 - n @ m
        rhs = 0.5 * np.sum((n - m) ** 2)
        assert lhs == pytest.approx(rhs, abs=1e-14)


def test_repeated_projection_contracts_distance():
    surf = LevelSetSurface.stretched_ellipsoid()
    rng = np.random.default_rng(4)
    band = 0.1 * min(surf.semi_axes)
    for _ in range(50):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        y0 = project_to_surface(surf, d * np.asarray(surf.semi_axes))
        x = y0 + rng.uniform(-band, band) * frame_arrays(surf, y0)[0]
        _, d1, p1 = frame_arrays(surf, x)
        _, d2, _ = frame_arrays(surf, p1)
        assert abs(d2) <= abs(d1) + 1e-15


def test_frame_distance_vanishes_on_surface():
    surf = LevelSetSurface.stretched_ellipsoid()
    rng = np.random.default_rng(9)
    dirs = rng.standard_normal((30, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = project_to_surface(surf, dirs * np.asarray(surf.semi_axes))
    _, dist, _ = frame_arrays(surf, pts)
    assert np.abs(dist).max() < 1e-14
