import numpy as np
import pytest

from shapegraph.metric import (
    ImmersionError,
    MetricConfig,
    metric_value,
    path_energy,
    path_energy_gradient,
)
from shapegraph.spline import PathLayout, PathSpline, Quadrature, basis_eval, gauss_legendre
from shapegraph.synthetic import two_branch

CFG = MetricConfig()


def composite_gauss(n_spans, n_nodes=4):
    return gauss_legendre(np.linspace(0, 1, n_spans + 1), n_nodes)


def test_unit_segment_constant_field():
    x, w = composite_gauss(4)
    n = len(x)
    c1 = np.tile([1.0, 0.0], (n, 1))
    zero = np.zeros((n, 2))
    h = np.tile([0.6, 0.8], (n, 1))
    assert metric_value((c1, zero), (h, zero, zero), w, CFG) == pytest.approx(0.1, abs=1e-14)
    assert metric_value((c1, zero), (zero, zero, zero), w, CFG) == 0.0


def circle_jets(theta):
    a = 2 * np.pi * theta
    cs, sn = np.cos(a), np.sin(a)
    k = 2 * np.pi
    c1 = k * np.stack([-sn, cs], 1)
    c2 = -(k**2) * np.stack([cs, sn], 1)
    return c1, c2


def test_circle_field_against_dense_arclength_oracle():
    # h(theta) = (cos 4 pi theta, sin 2 pi theta) on the unit circle
    def field(th):
        return np.stack([np.cos(4 * np.pi * th), np.sin(2 * np.pi * th)], 1)

    x, w = composite_gauss(20)
    h0 = field(x)
    h1 = np.stack([-4 * np.pi * np.sin(4 * np.pi * x), 2 * np.pi * np.cos(2 * np.pi * x)], 1)
    h2 = np.stack([-16 * np.pi**2 * np.cos(4 * np.pi * x), -4 * np.pi**2 * np.sin(2 * np.pi * x)], 1)
    value = metric_value(circle_jets(x), (h0, h1, h2), w, CFG)

    # oracle: 10^4 samples, arc-length derivatives by periodic finite differences, trapezoid rule
    n = 10_000
    th = np.arange(n) / n
    pts = np.stack([np.cos(2 * np.pi * th), np.sin(2 * np.pi * th)], 1)
    ds = np.linalg.norm(np.roll(pts, -1, 0) - pts, axis=1).mean()
    hs = field(th)
    d1 = (np.roll(hs, -1, 0) - np.roll(hs, 1, 0)) / (2 * ds)
    d2 = (np.roll(hs, -1, 0) - 2 * hs + np.roll(hs, 1, 0)) / ds**2
    a0, a1, a2 = CFG.coefficients
    oracle = ((a0 * (hs**2).sum(1) + a1 * (d1**2).sum(1) + a2 * (d2**2).sum(1)) * ds).sum()
    assert abs(value - oracle) < 1e-3


def test_reparametrization_invariance():
    # open curve c(u) = (u, 0.3 u^2), field h(u) = (sin 3u, u^2), reparametrized by phi(x) = x + 0.3 x (1 - x)
    def jets(u, du, ddu):
        c1 = np.stack([np.ones_like(u), 0.6 * u], 1)
        c2 = np.stack([np.zeros_like(u), np.full_like(u, 0.6)], 1)
        h0 = np.stack([np.sin(3 * u), u**2], 1)
        h1 = np.stack([3 * np.cos(3 * u), 2 * u], 1)
        h2 = np.stack([-9 * np.sin(3 * u), np.full_like(u, 2.0)], 1)
        chain = lambda f1, f2: f2 * du[:, None] ** 2 + f1 * ddu[:, None]
        return (c1 * du[:, None], chain(c1, c2)), (h0, h1 * du[:, None], chain(h1, h2))

    values = {}
    for spans in (8, 32):
        x, w = composite_gauss(spans, 3)
        ident = metric_value(*jets(x, np.ones_like(x), np.zeros_like(x)), w, CFG)
        phi = x + 0.3 * x * (1 - x)
        rep = metric_value(*jets(phi, 1 + 0.3 * (1 - 2 * x), np.full_like(x, -0.6)), w, CFG)
        values[spans] = (ident, rep)
    coarse_err = abs(values[8][1] - values[32][1])
    assert abs(values[32][0] - values[32][1]) <= max(coarse_err, 1e-12)
    assert abs(values[8][0] - values[8][1]) < 1e-4 * values[8][0]


def test_scale_invariant_variant_is_scale_invariant():
    cfg = MetricConfig(variant="scale-invariant")
    x, w = composite_gauss(8)
    c1, c2 = circle_jets(x)
    rng = np.random.default_rng(0)
    h = tuple(rng.normal(size=c1.shape) for _ in range(3))
    base = metric_value((c1, c2), h, w, cfg)
    for s in (0.1, 3.0):
        scaled = metric_value((s * c1, s * c2), tuple(s * a for a in h), w, cfg)
        assert scaled == pytest.approx(base, rel=1e-12)
    # the alternative exponent rule is available and is not scale invariant
    other = MetricConfig(variant="scale-invariant", exponent_rule="2r-i")
    assert metric_value((3 * c1, 3 * c2), tuple(3 * a for a in h), w, other) != pytest.approx(base)


def test_immersion_error():
    x, w = composite_gauss(2)
    z = np.zeros((len(x), 2))
    with pytest.raises(ImmersionError):
        metric_value((z, z), (z, z, z), w, CFG)


def test_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(coefficients=(0, 0, 0))
    with pytest.raises(ValueError):
        MetricConfig(coefficients=(-1, 1, 1))
    with pytest.raises(ValueError):
        MetricConfig(variant="other")


def segment_layout(n_t=3, n_theta=6):
    return PathLayout.from_adjacency(np.eye(2, dtype=int), 2, n_t=n_t, n_theta=n_theta)


def straight_controls(lay):
    # Greville abscissae of the clamped quadratic knots give a unit-speed line
    kn = lay.knots_theta
    grev = (kn[1 : lay.n_theta + 1] + kn[2 : lay.n_theta + 2]) / 2
    P = np.zeros((lay.n_vars, 2))
    P[lay.index[0], 0] = grev
    return P


def test_constant_and_translation_path_energy():
    lay = segment_layout()
    quad = Quadrature(lay)
    P0 = straight_controls(lay)
    const = PathSpline(lay, np.repeat(P0[None], lay.n_t, 0))
    E, g = path_energy_gradient(const, CFG, quad)
    assert E == 0.0 and not g.any()
    v = np.array([1.0, 0.0])
    tg = np.linspace(0, 1, lay.n_t)
    path = PathSpline(lay, P0[None] + tg[:, None, None] * v)
    assert path_energy(path, CFG, quad) == pytest.approx(0.1, rel=1e-12)
    # E(s) = a0 |s v|^2 l, dE/ds at s=1 is 0.2
    E, g = path_energy_gradient(path, CFG, quad)
    direction = tg[:, None, None] * v * np.ones_like(P0)
    assert float((g * direction).sum()) == pytest.approx(0.2, rel=1e-10)


def random_branch_path(seed, n_t=3, n_theta=7, amp=0.01):
    spec = two_branch(20)
    lay = PathLayout.from_adjacency(spec.adjacency, 2, n_t=n_t, n_theta=n_theta)
    from shapegraph.spline import fit_source

    P0, _ = fit_source(spec, lay)
    rng = np.random.default_rng(seed)
    ctrl = P0[None] + amp * rng.normal(size=(n_t, lay.n_vars, 2)) * np.arange(n_t)[:, None, None]
    return lay, PathSpline(lay, ctrl)


def test_path_energy_against_dense_time_oracle():
    lay, path = random_branch_path(0)
    quad = Quadrature(lay)
    E = path_energy(path, CFG, quad)
    # oracle: midpoint rule in t (1000 samples), central differences for dc/dt,
    # theta jets by direct basis evaluation
    theta, wth = quad.theta, quad.wtheta
    C = [basis_eval(lay.knots_theta, 2, theta, r) for r in range(3)]
    ts = (np.arange(1000) + 0.5) / 1000
    delta = 1e-7
    total = 0.0
    for t in ts:
        lo = max(t - delta, 0.0)
        hi = min(t + delta, 1.0)
        nets_lo, nets_hi, nets = path.slice_at(lo), path.slice_at(hi), path.slice_at(t)
        for k in range(lay.n_components):
            h = (nets_hi[k] - nets_lo[k]) / (hi - lo)
            total += metric_value((C[1] @ nets[k], C[2] @ nets[k]), tuple(Cr @ h for Cr in C), wth, CFG) / 1000
    assert abs(E - total) / E < 1e-4


@pytest.mark.parametrize("variant", ["constant", "scale-invariant"])
def test_path_energy_gradient_finite_differences(variant):
    cfg = MetricConfig(variant=variant)
    lay, path = random_branch_path(1)
    quad = Quadrature(lay)
    _, g = path_energy_gradient(path, cfg, quad)
    fd = np.zeros_like(g)
    h = 1e-5
    for idx in np.ndindex(*g.shape):
        c = path.controls.copy()
        c[idx] += h
        ep = path_energy(PathSpline(lay, c), cfg, quad)
        c[idx] -= 2 * h
        em = path_energy(PathSpline(lay, c), cfg, quad)
        fd[idx] = (ep - em) / (2 * h)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-5


def test_path_energy_invariances():
    lay, path = random_branch_path(2, amp=0.1)
    quad = Quadrature(lay)
    E = path_energy(path, CFG, quad)
    assert E > 0
    shifted = PathSpline(lay, path.controls + np.array([3.0, -1.0]))
    assert path_energy(shifted, CFG, quad) == pytest.approx(E, rel=1e-12)
    a = 0.9
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    rotated = PathSpline(lay, path.controls @ R.T)
    assert path_energy(rotated, CFG, quad) == pytest.approx(E, rel=1e-12)


def test_path_energy_component_permutation_exact():
    lay, path = random_branch_path(3, amp=0.1)
    quad = Quadrature(lay)
    E = path_energy(path, CFG, quad)
    order = [2, 0, 1]
    perm = PathLayout(lay.n_components, lay.dim, lay.n_t, lay.n_theta, lay.degree_t, lay.degree_theta,
                      tuple(lay.index[k] for k in order), lay.n_vars)
    Ep = path_energy(PathSpline(perm, path.controls), CFG, Quadrature(perm))
    assert Ep == pytest.approx(E, rel=1e-15)
