"""Flux fields f(u, x) on the sphere.

Provides construction from scalar potentials (automatically divergence-free),
the cross-product representation f = n x Phi, entropy pairs (smooth and
Kruzkov), divergence residuals, and the compatibility checks that decide
whether total variation along a vector field X is non-increasing.

All flux callables are numpy-vectorized: ``f(u, phi, theta)`` accepts scalars
or broadcastable arrays and returns an array of shape ``(2,) + broadcast``
holding the intrinsic components (f^phi, f^theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec

from . import geometry
from .errors import ConfigError, DegenerateSampleError, InputError
from .expressions import compile_expression

_FD_STEP = 1e-3


def _fd_u(func: Callable, u, *args, step: float = _FD_STEP):
    """4th-order centered derivative of ``func`` in its first (state) argument."""
    return (-func(u + 2 * step, *args) + 8 * func(u + step, *args)
            - 8 * func(u - step, *args) + func(u - 2 * step, *args)) / (12 * step)


# ---------------------------------------------------------------------------
# flux fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxField:
    """The map (u, x) -> f(u, x) in intrinsic sphere components.

    ``f`` and ``f_u`` take ``(u, phi, theta)`` with numpy broadcasting and
    return shape ``(2,) + broadcast``.  ``lipschitz_bound`` bounds |f_u|_g over
    the reference state box; ``potential`` holds the scalar a(u, n) when the
    flux was built from one.
    """

    name: str
    f: Callable
    f_u: Callable
    lipschitz_bound: float
    potential: Optional[Callable] = None

    def div_f(self, u: float, phi: float, theta: float, step: float = _FD_STEP) -> float:
        """Intrinsic divergence at frozen state u:
        (1/sin theta)(d_phi(f^phi sin theta) + d_theta(f^theta sin theta))."""

        def weighted(p, t):
            comp = self.f(u, p, t)
            return np.array([comp[0] * np.sin(t), comp[1] * np.sin(t)])

        d_phi = (-weighted(phi + 2 * step, theta)[0] + 8 * weighted(phi + step, theta)[0]
                 - 8 * weighted(phi - step, theta)[0] + weighted(phi - 2 * step, theta)[0]
                 ) / (12 * step)
        d_theta = (-weighted(phi, theta + 2 * step)[1] + 8 * weighted(phi, theta + step)[1]
                   - 8 * weighted(phi, theta - step)[1] + weighted(phi, theta - 2 * step)[1]
                   ) / (12 * step)
        return float((d_phi + d_theta) / math.sin(theta))

    def spatial_field(self, u: float) -> geometry.VectorField:
        """The frozen-state vector field x -> f(u, x)."""
        return geometry.VectorField(components=lambda y: self.f(u, y[0], y[1]))

    def f_u_field(self, u: float) -> geometry.VectorField:
        """The frozen-state wave-speed field x -> f_u(u, x)."""
        return geometry.VectorField(components=lambda y: self.f_u(u, y[0], y[1]))

    def lipschitz_on(self, u_min: float, u_max: float, n_u: int = 33,
                     n_theta: int = 65) -> float:
        """Sampled sup of |f_u|_g over a state interval and a theta sweep."""
        us = np.linspace(u_min, u_max, n_u)[:, None]
        thetas = np.linspace(1e-3, math.pi - 1e-3, n_theta)[None, :]
        phis = np.linspace(0.0, 2 * math.pi, 17)
        best = 0.0
        for p in phis:
            comp = self.f_u(us, p, thetas)
            speed = np.sqrt((np.sin(thetas) * comp[0]) ** 2 + comp[1] ** 2)
            best = max(best, float(speed.max()))
        return best


def divfree_residual(f: FluxField, u: float, sample, step: float = _FD_STEP) -> float:
    """|d_phi(f^phi sin theta) + d_theta(f^theta sin theta)| at frozen u.

    Zero for divergence-free fluxes (the sin-theta weighted form of the
    divergence, without the 1/sin-theta prefactor)."""
    phi, theta = float(sample[0]), float(sample[1])
    if not (geometry.DEFAULT_POLE_BAND <= theta <= math.pi - geometry.DEFAULT_POLE_BAND):
        raise geometry.PoleError(f"divergence residual undefined at theta = {theta}")

    def wphi(p):
        return f.f(u, p, theta)[0] * math.sin(theta)

    def wtheta(t):
        return f.f(u, phi, t)[1] * np.sin(t)

    d_phi = (-wphi(phi + 2 * step) + 8 * wphi(phi + step)
             - 8 * wphi(phi - step) + wphi(phi - 2 * step)) / (12 * step)
    d_theta = (-wtheta(theta + 2 * step) + 8 * wtheta(theta + step)
               - 8 * wtheta(theta - step) + wtheta(theta - 2 * step)) / (12 * step)
    return float(abs(d_phi + d_theta))


# ---------------------------------------------------------------------------
# construction from potentials / cross products
# ---------------------------------------------------------------------------

def _sphere_normals(phi, theta):
    """n, n_phi, n_theta as arrays of shape (3,) + broadcast(phi, theta)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    n = np.stack(np.broadcast_arrays(st * cp, st * sp, ct + 0 * sp))
    n_phi = np.stack(np.broadcast_arrays(-st * sp, st * cp, 0 * (st * sp)))
    n_theta = np.stack(np.broadcast_arrays(ct * cp, ct * sp, -st + 0 * sp))
    return n, n_phi, n_theta


def from_potential(a: Callable, name: str = "potential",
                   lipschitz_box=(-1.0, 1.0), step: float = _FD_STEP) -> FluxField:
    """Flux f = n x Phi with Phi the tangential gradient of a(u, n).

    ``a(u, n1, n2, n3)`` must be smooth near the unit sphere and vectorized.
    Such fluxes are automatically divergence-free at every frozen state.
    The intrinsic components are
        f^phi = (Phi . n_theta) / sin(theta),   f^theta = -(Phi . n_phi) / sin(theta).
    """

    def tangential_gradient(u, phi, theta):
        n, n_phi, n_theta = _sphere_normals(phi, theta)

        def eval_a(point):
            return a(u, point[0], point[1], point[2])

        grad = []
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            e = e.reshape((3,) + (1,) * (n.ndim - 1))
            grad.append((-eval_a(n + 2 * e) + 8 * eval_a(n + e)
                         - 8 * eval_a(n - e) + eval_a(n - 2 * e)) / (12 * step))
        grad = np.stack(np.broadcast_arrays(*grad))
        normal_part = np.sum(grad * n, axis=0)
        return grad - normal_part * n, n, n_phi, n_theta

    def f(u, phi, theta):
        phi_field, n, n_phi, n_theta = tangential_gradient(u, phi, theta)
        st = np.sqrt(np.sum(n_phi * n_phi, axis=0))  # = sin(theta) off the poles
        fphi = np.sum(phi_field * n_theta, axis=0) / st
        ftheta = -np.sum(phi_field * n_phi, axis=0) / st
        return np.stack(np.broadcast_arrays(fphi, ftheta))

    def f_u(u, phi, theta):
        return _fd_u(f, u, phi, theta)

    field = FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=0.0, potential=a)
    lip = field.lipschitz_on(lipschitz_box[0], lipschitz_box[1])
    return FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=lip, potential=a)


def tangential_potential_gradient(a: Callable, u, phi, theta, step: float = _FD_STEP):
    """Phi = tangential gradient of a(u, .) at n(phi, theta); shape (3,) + broadcast."""
    n, _, _ = _sphere_normals(phi, theta)

    def eval_a(point):
        return a(u, point[0], point[1], point[2])

    grad = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        e = e.reshape((3,) + (1,) * (n.ndim - 1))
        grad.append((-eval_a(n + 2 * e) + 8 * eval_a(n + e)
                     - 8 * eval_a(n - e) + eval_a(n - 2 * e)) / (12 * step))
    grad = np.stack(np.broadcast_arrays(*grad))
    return grad - np.sum(grad * n, axis=0) * n


def cross_flux(phi_vec: Callable, name: str = "cross",
               lipschitz_box=(-1.0, 1.0)) -> FluxField:
    """Flux f = n x Phi for an ambient vector function Phi(u, phi, theta) -> R^3.

    Only the tangential part of Phi contributes; the result is tangent to the
    sphere with intrinsic components per the rotation identities
        f^phi = (Phi . n_theta) / sin(theta),   f^theta = -(Phi . n_phi) / sin(theta).
    """

    def f(u, phi, theta):
        n, n_phi, n_theta = _sphere_normals(phi, theta)
        vec = np.asarray(phi_vec(u, phi, theta), dtype=float)
        extra = n.ndim - vec.ndim
        vec = vec.reshape(vec.shape[:1] + (1,) * extra + vec.shape[1:])
        st = np.sqrt(np.sum(n_phi * n_phi, axis=0))
        fphi = np.sum(vec * n_theta, axis=0) / st
        ftheta = -np.sum(vec * n_phi, axis=0) / st
        return np.stack(np.broadcast_arrays(fphi, ftheta))

    def f_u(u, phi, theta):
        return _fd_u(f, u, phi, theta)

    field = FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=0.0)
    lip = field.lipschitz_on(lipschitz_box[0], lipschitz_box[1])
    return FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=lip)


def embedded_flux(f: FluxField, u: float, phi: float, theta: float) -> np.ndarray:
    """Ambient R^3 tangent vector of f(u, .) at a point."""
    comp = np.asarray(f.f(u, phi, theta), dtype=float).reshape(2)
    return geometry.embedded_vector(comp, phi, theta)


# ---------------------------------------------------------------------------
# entropy pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyPair:
    """Convex entropy U with its flux F satisfying d_u F = U'(u) f_u."""

    U: Callable
    dU: Callable
    F: Callable                       # (u, phi, theta) -> shape (2,) + broadcast
    kind: str = "smooth"              # "smooth" or "kruzkov"
    k: Optional[float] = None         # Kruzkov reference state


def _check_convex(U: Callable, interval, n: int = 1001) -> None:
    """Reject U whose sampled second differences are significantly negative."""
    grid = np.linspace(interval[0], interval[1], n)
    vals = np.array([U(g) for g in grid])
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    scale = max(1.0, float(np.abs(vals).max()))
    if second.min() < -1e-12 * scale:
        raise InputError("entropy U is not convex on the sampled interval")


def entropy_flux(U: Callable, f: FluxField, u_ref: float = 0.0,
                 dU: Optional[Callable] = None, interval=(-2.0, 2.0),
                 quad_tol: float = 1e-10) -> EntropyPair:
    """Entropy pair with F(u, .) = integral of U'(v) f_u(v, .) from u_ref to u.

    The integral is evaluated by adaptive quadrature to ``quad_tol``.  For
    Kruzkov entropies use :func:`kruzkov_pair` (closed form)."""
    _check_convex(U, interval)
    if dU is None:
        def dU(u, _U=U):  # noqa: ANN001 - numeric derivative fallback
            return _fd_u(_U, u)

    def F(u, phi, theta):
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if np.isscalar(u) or np.asarray(u).ndim == 0:
            lo, hi = float(u_ref), float(u)
            if lo == hi:
                return np.zeros((2,) + np.broadcast(phi, theta).shape)
            val, _err = quad_vec(lambda v: dU(v) * f.f_u(v, phi, theta),
                                 lo, hi, epsabs=quad_tol, epsrel=1e-12)
            return val
        flat = np.asarray(u, dtype=float)
        out = np.stack([F(ui, phi, theta) for ui in flat.ravel()])
        return np.moveaxis(out.reshape(flat.shape + out.shape[1:]), flat.ndim, 0)

    return EntropyPair(U=U, dU=dU, F=F, kind="smooth")


def kruzkov_pair(f: FluxField, k: float) -> EntropyPair:
    """Kruzkov entropy |u - k| with flux sgn(u - k)(f(u, .) - f(k, .))."""

    def U(u):
        return np.abs(u - k)

    def dU(u):
        return np.sign(u - k)

    def F(u, phi, theta):
        return np.sign(np.asarray(u, dtype=float) - k) * (f.f(u, phi, theta) - f.f(k, phi, theta))

    return EntropyPair(U=U, dU=dU, F=F, kind="kruzkov", k=k)


def square_entropy() -> tuple[Callable, Callable]:
    """The pair (U, U') for U(u) = u^2 / 2."""
    return (lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
            lambda u: np.asarray(u, dtype=float))


# ---------------------------------------------------------------------------
# TVD compatibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TVDReport:
    """Residuals of the three conditions under which TV along X cannot grow.

    ``bracket_residual``: sup |[f_u, X]|_g; ``colinearity_residual``: sup over
    states of |X x f_u - Ctilde(u) n| with Ctilde(u) the per-state best-fit
    normal component (constant across points); ``c_along_x_residual``:
    sup |X(C)| for C = g(f_u, X)/g(X, X)."""

    bracket_residual: float
    colinearity_residual: float
    c_along_x_residual: float
    verdict: str
    tolerance: float

    @property
    def compatible(self) -> bool:
        return self.verdict == "compatible"


def tvd_compatibility(f: FluxField, X: geometry.VectorField,
                      u_samples: Sequence[float], points: Sequence,
                      tolerance: float = 1e-6,
                      chart: Optional[geometry.Chart] = None) -> TVDReport:
    """Check whether the pair (f, X) supports a total variation bound along X."""
    chart = chart if chart is not None else geometry.sphere_chart()
    pts = [np.asarray(p, dtype=float) for p in points]
    for p in pts:
        chart.check_interior(p)
        if geometry.norm(chart, p, X.at(p)) < 1e-12:
            raise DegenerateSampleError("vector field X vanishes at a sample point",
                                        point=tuple(p))

    bracket_res = 0.0
    colin_res = 0.0
    along_res = 0.0
    for u in u_samples:
        fu_field = f.f_u_field(float(u))

        # Lie bracket residual |[f_u, X]|_g
        for p in pts:
            br = geometry.lie_bracket(chart, fu_field, X, p)
            bracket_res = max(bracket_res, geometry.norm(chart, p, br))

        # colinearity: the normal component of X x f_u must not vary with x
        normals = []
        for p in pts:
            fr = geometry.frame(p[0], p[1])
            Xe = geometry.embedded_vector(X.at(p), p[0], p[1])
            Fe = geometry.embedded_vector(fu_field.at(p), p[0], p[1])
            cross = np.cross(Xe, Fe)
            normals.append((cross, fr.n))
        c_fit = float(np.mean([c @ n for c, n in normals]))
        for c, n in normals:
            colin_res = max(colin_res, float(np.linalg.norm(c - c_fit * n)))

        # X(C) residual with C = g(f_u, X) / g(X, X)
        def C(y, _u=float(u)):
            comp = np.asarray(f.f_u(_u, y[0], y[1]), dtype=float).reshape(2)
            Xy = X.at(y)
            return geometry.inner(chart, y, comp, Xy) / geometry.inner(chart, y, Xy, Xy)

        for p in pts:
            along_res = max(along_res, abs(geometry.directional_derivative(chart, X, C, p)))

    ok = max(bracket_res, colin_res, along_res) <= tolerance
    return TVDReport(
        bracket_residual=bracket_res,
        colinearity_residual=colin_res,
        c_along_x_residual=along_res,
        verdict="compatible" if ok else "incompatible",
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def make_flux(name: str, params: Optional[dict] = None) -> FluxField:
    """Build a flux from the registry: solid_rotation, latitude_burgers, potential."""
    params = dict(params or {})
    if name == "solid_rotation":
        omega = float(params.pop("omega", 1.0))
        if params:
            raise ConfigError(f"unknown solid_rotation parameters: {sorted(params)}")

        def f(u, phi, theta):
            u, phi, theta = np.broadcast_arrays(np.asarray(u, dtype=float), phi, theta)
            return np.stack([omega * u, np.zeros_like(u)])

        def f_u(u, phi, theta):
            u, phi, theta = np.broadcast_arrays(np.asarray(u, dtype=float), phi, theta)
            return np.stack([np.full_like(u, omega), np.zeros_like(u)])

        return FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=abs(omega))

    if name == "latitude_burgers":
        c_expr = str(params.pop("c_expr", "1"))
        if params:
            raise ConfigError(f"unknown latitude_burgers parameters: {sorted(params)}")
        c = compile_expression(c_expr, ["theta"])

        def f(u, phi, theta):
            u, phi, theta = np.broadcast_arrays(np.asarray(u, dtype=float), phi, theta)
            return np.stack([c(theta=theta) * 0.5 * u * u, np.zeros_like(u)])

        def f_u(u, phi, theta):
            u, phi, theta = np.broadcast_arrays(np.asarray(u, dtype=float), phi, theta)
            return np.stack([c(theta=theta) * u, np.zeros_like(u)])

        field = FluxField(name=name, f=f, f_u=f_u, lipschitz_bound=0.0)
        return FluxField(name=name, f=f, f_u=f_u,
                         lipschitz_bound=field.lipschitz_on(-1.0, 1.0))

    if name == "potential":
        if "a" not in params:
            raise ConfigError("potential flux requires parameter 'a' (expression in u, n1, n2, n3)")
        a_expr = str(params.pop("a"))
        if params:
            raise ConfigError(f"unknown potential parameters: {sorted(params)}")
        a_func = compile_expression(a_expr, ["u", "n1", "n2", "n3"])
        return from_potential(lambda u, n1, n2, n3: a_func(u=u, n1=n1, n2=n2, n3=n3),
                              name=f"potential[{a_expr}]")

    raise ConfigError(
        f"unknown flux {name!r}; registry: solid_rotation, latitude_burgers, potential")
