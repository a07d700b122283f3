"""Second-order elastic Sobolev metrics on curves and shape graphs.

With L = |c'| and ds = L dtheta the metric integrand is

    a0 |h|^2 L + a1 |h'|^2 / L + a2 |q|^2 L,    q = h'' / L^2 - h' <c', c''> / L^4,

where primes are theta-derivatives and q is the second arc-length derivative
of h. The scale-invariant variant multiplies term i by length**p(i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spline import PathSpline, Quadrature, backprop_to_controls, path_eval

__all__ = [
    "MetricConfig",
    "ImmersionError",
    "metric_value",
    "path_energy",
    "path_energy_gradient",
    "EPS_IMMERSION",
]

EPS_IMMERSION = 1e-8

# jets needed by the order-2 metric, as (t_order, theta_order)
_C1, _C2, _H0, _H1, _H2 = (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)
_JETS = (_C1, _C2, _H0, _H1, _H2)


class ImmersionError(ValueError):
    """|dc/dtheta| fell below the immersion threshold at some quadrature node."""


@dataclass(frozen=True)
class MetricConfig:
    """Coefficients and variant of the Sobolev metric.

    ``exponent_rule`` only matters for the scale-invariant variant: ``"2i-3"``
    gives exact scale invariance, ``"2r-i"`` uses 2n - i.
    """

    coefficients: tuple[float, ...] = (0.1, 1.0, 1e-5)
    variant: str = "constant"
    exponent_rule: str = "2i-3"
    eps_immersion: float = EPS_IMMERSION

    def __post_init__(self):
        a = tuple(float(x) for x in self.coefficients)
        object.__setattr__(self, "coefficients", a)
        if len(a) > 3:
            raise ValueError("metric order n <= 2 is supported")
        if any(x < 0 for x in a) or not any(x > 0 for x in a):
            raise ValueError("coefficients must be >= 0 with at least one positive")
        if self.variant not in ("constant", "scale-invariant"):
            raise ValueError(f"unknown metric variant {self.variant!r}")
        if self.exponent_rule not in ("2i-3", "2r-i"):
            raise ValueError(f"unknown exponent rule {self.exponent_rule!r}")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def exponents(self) -> np.ndarray:
        i = np.arange(3)
        if self.exponent_rule == "2i-3":
            return 2 * i - 3
        return 2 * self.order - i


def _dot(a, b):
    return (a * b).sum(axis=-1)


def _terms(c1, c2, h0, h1, h2, eps):
    """Per-node metric terms (3, ...) and the intermediates needed for gradients."""
    L = np.linalg.norm(c1, axis=-1)
    if L.min() < eps:
        raise ImmersionError(f"|dc/dtheta| = {L.min():.3g} below {eps:g}")
    g = _dot(c1, c2)
    q = h2 / L[..., None] ** 2 - h1 * (g / L**4)[..., None]
    T = np.stack(
        [
            _dot(h0, h0) * L,
            _dot(h1, h1) / L,
            _dot(q, q) * L,
        ]
    )
    return T, (L, g, q)


def _term_partials(w, c1, c2, h0, h1, h2, inter):
    """Gradients of sum(w[i] * T_i) with respect to the five jets."""
    L, g, q = inter
    Lx, gx = L[..., None], g[..., None]
    w0, w1, w2 = (wi[..., None] for wi in w)
    d_h0 = w0 * 2 * h0 * Lx
    d_h1 = w1 * 2 * h1 / Lx - w2 * 2 * q * gx / Lx**3
    d_h2 = w2 * 2 * q / Lx
    qh1 = _dot(q, h1)[..., None]
    d_g = -w2 * 2 * qh1 / Lx**3
    dq_dL = -2 * h2 / Lx**3 + 4 * h1 * gx / Lx**5
    d_L = (
        w0 * _dot(h0, h0)[..., None]
        - w1 * _dot(h1, h1)[..., None] / Lx**2
        + w2
        * (
            _dot(q, q)[..., None]
            + 2 * Lx * _dot(q, dq_dL)[..., None]
        )
    )
    d_c1 = d_L * c1 / Lx + d_g * c2
    d_c2 = d_g * c1
    return d_c1, d_c2, d_h0, d_h1, d_h2


def _coeffs(cfg: MetricConfig) -> np.ndarray:
    a = np.zeros(3)
    a[: len(cfg.coefficients)] = cfg.coefficients
    return a


def metric_value(c_jet, h_jet, weights, cfg: MetricConfig) -> float:
    """G_c(h, h) by quadrature on one curve.

    Args:
        c_jet: (dc/dtheta, d2c/dtheta2) at the nodes, each (n, d).
        h_jet: (h, dh/dtheta, d2h/dtheta2) at the same nodes.
        weights: quadrature weights in theta, shape (n,).
    """
    c1, c2 = (np.asarray(x, dtype=float) for x in c_jet)
    h0, h1, h2 = (np.asarray(x, dtype=float) for x in h_jet)
    w = np.asarray(weights, dtype=float)
    T, (L, _, _) = _terms(c1, c2, h0, h1, h2, cfg.eps_immersion)
    I = T @ w
    a = _coeffs(cfg)
    if cfg.variant == "scale-invariant":
        ell = float(L @ w)
        a = a * ell ** cfg.exponents().astype(float)
    return float(a @ I)


def _energy(path: PathSpline, cfg: MetricConfig, quad: Quadrature, want_grad: bool):
    jets = {j: path_eval(path, *j, quad) for j in _JETS}
    a = _coeffs(cfg)
    W = quad.weights_2d
    total = 0.0
    cot = {j: [] for j in _JETS}
    for k in range(path.layout.n_components):
        args = [jets[j][k] for j in _JETS]
        T, inter = _terms(*args, cfg.eps_immersion)
        I = np.einsum("itj,j->it", T, quad.wtheta)  # (3, n_t_nodes)
        if cfg.variant == "scale-invariant":
            p = cfg.exponents().astype(float)
            ell = inter[0] @ quad.wtheta  # (n_t_nodes,)
            scale = ell[None, :] ** p[:, None]
            total += float(np.einsum("i,it,it,t->", a, scale, I, quad.wt))
            if want_grad:
                wterm = (a[:, None] * scale * quad.wt[None, :])[:, :, None] * quad.wtheta[None, None, :]
                d_ell = np.einsum("i,i,it,it,t->t", a, p, ell[None, :] ** (p[:, None] - 1), I, quad.wt)
        else:
            total += float(np.einsum("i,it,t->", a, I, quad.wt))
            if want_grad:
                wterm = a[:, None, None] * W[None]
        if want_grad:
            parts = list(_term_partials(wterm, *args, inter))
            if cfg.variant == "scale-invariant":
                c1 = args[0]
                L = inter[0]
                parts[0] = parts[0] + (d_ell[:, None] * quad.wtheta[None, :])[..., None] * c1 / L[..., None]
            for j, part in zip(_JETS, parts):
                cot[j].append(part)
    if not want_grad:
        return total, None
    grad = sum(backprop_to_controls(path, cot[j], *j, quad) for j in _JETS)
    return total, grad


def path_energy(path: PathSpline, cfg: MetricConfig, quad: Quadrature) -> float:
    """Riemannian energy of the path, summed over components."""
    return _energy(path, cfg, quad, want_grad=False)[0]


def path_energy_gradient(path: PathSpline, cfg: MetricConfig, quad: Quadrature):
    """Energy and its gradient w.r.t. all control points, shape (N_t, n_vars, d)."""
    return _energy(path, cfg, quad, want_grad=True)


def spatial_stiffness(P0: np.ndarray, cfg: MetricConfig, quad: Quadrature) -> np.ndarray:
    """Matrix S with G_c(h, h) = sum_d h_d^T S h_d for h given by spatial controls.

    ``c`` is frozen at the control slice P0 (n_vars, d); the result is
    (n_vars, n_vars) with tied variables summed.
    """
    lay = quad.layout
    C0, C1, C2 = quad.Ctheta
    S = np.zeros((lay.n_vars, lay.n_vars))
    a = _coeffs(cfg)
    w = quad.wtheta
    for idx in lay.index:
        net = P0[idx]
        c1, c2 = C1 @ net, C2 @ net
        L = np.linalg.norm(c1, axis=1)
        if L.min() < cfg.eps_immersion:
            raise ImmersionError(f"|dc/dtheta| = {L.min():.3g} below {cfg.eps_immersion:g}")
        g = np.einsum("nd,nd->n", c1, c2)
        ai = a
        if cfg.variant == "scale-invariant":
            ai = a * float(L @ w) ** cfg.exponents().astype(float)
        Q = C2 / L[:, None] ** 2 - (g / L**4)[:, None] * C1
        Sk = (
            C0.T @ ((ai[0] * w * L)[:, None] * C0)
            + C1.T @ ((ai[1] * w / L)[:, None] * C1)
            + Q.T @ ((ai[2] * w * L)[:, None] * Q)
        )
        S[np.ix_(idx, idx)] += Sk
    return S
