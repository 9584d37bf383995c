"""Exact and semi-analytic channel flows used as verification data.

All generators return channel fields of the form u = (V(t, y), 0, 0).  The
nonlinearity u . grad u vanishes identically for such fields, so heat-equation
profiles are exact Navier-Stokes (and Stokes) solutions with zero force, and
every energy identity holds in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, exp1

from .fields import EulerData, FieldSource, NSData, zero_field
from .geometry import Domain, make_channel


class FlowError(ValueError):
    pass


def _shear_source(V, Vy, Vt, time_range=(0.0, np.inf)) -> FieldSource:
    """Wrap V(t, y) profiles into a full 3D field source."""

    def value(t, X):
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        out = np.zeros(shape + (3,))
        out[..., 0] = V(t, X[..., 1])
        return out

    def gradient(t, X):
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        out = np.zeros(shape + (3, 3))
        out[..., 0, 1] = Vy(t, X[..., 1])
        return out

    def dt(t, X):
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        out = np.zeros(shape + (3,))
        out[..., 0] = Vt(t, X[..., 1])
        return out

    return FieldSource(value, gradient, dt, time_range)


# ---------------------------------------------------------------------------
# spectral heat shear
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShearSpectrum:
    """Sine modes of a decaying shear profile in a channel of height h."""

    modes: tuple                 # ((k, b_k), ...)
    viscosity: float
    height: float = 1.0

    def __post_init__(self):
        if self.height <= 0 or self.viscosity <= 0:
            raise FlowError("need positive height and viscosity")
        for k, b in self.modes:
            if int(k) != k or k < 1 or not np.isfinite(b):
                raise FlowError("modes are (positive integer k, finite amplitude)")


def heat_shear_field(spec: ShearSpectrum, domain: Domain | None = None) -> NSData:
    """Exact decaying shear solution V = sum b_k e^{-nu (k pi/h)^2 t} sin(k pi y / h).

    Satisfies non-slip at both walls and the energy equality exactly; all
    quadratic quantities reduce to modal arithmetic, which is attached as
    closed forms.
    """
    if domain is None:
        domain = make_channel(height=spec.height)
    if domain.params["height"] != spec.height:
        raise FlowError("spectrum height does not match the domain")
    nu, h = spec.viscosity, spec.height
    ks = np.array([k for k, _ in spec.modes], dtype=float)
    bs = np.array([b for _, b in spec.modes], dtype=float)
    kap = ks * math.pi / h          # wavenumbers
    lam = nu * kap**2               # decay rates

    def V(t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        ph = np.sin(np.multiply.outer(y, kap))
        dec = np.exp(-np.multiply.outer(t, lam))
        return np.sum(bs * dec * ph, axis=-1) if len(ks) else np.zeros(np.broadcast_shapes(t.shape, y.shape))

    def Vy(t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        ph = np.cos(np.multiply.outer(y, kap)) * kap
        dec = np.exp(-np.multiply.outer(t, lam))
        return np.sum(bs * dec * ph, axis=-1) if len(ks) else np.zeros(np.broadcast_shapes(t.shape, y.shape))

    def Vt(t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        ph = np.sin(np.multiply.outer(y, kap))
        dec = np.exp(-np.multiply.outer(t, lam)) * (-lam)
        return np.sum(bs * dec * ph, axis=-1) if len(ks) else np.zeros(np.broadcast_shapes(t.shape, y.shape))

    cross = domain.params["Lx"] * domain.params["Lz"]
    # orthogonality on (0, h): int sin(k pi y/h) sin(m pi y/h) dy = h/2 delta_km
    def energy_sq(t):
        """||u(t)||_{L^2}^2"""
        return cross * (h / 2.0) * float(np.sum(bs**2 * np.exp(-2 * lam * t)))

    def dissipation(t1, t2):
        """int_{t1}^{t2} int nu |grad u|^2"""
        return cross * (h / 4.0) * float(np.sum(bs**2 * (np.exp(-2 * lam * t1) - np.exp(-2 * lam * t2))))

    h1 = cross * (h / 2.0) * float(np.sum(bs**2 * (1.0 + kap**2)))
    forms = {
        "energy_sq": energy_sq,
        "dissipation": dissipation,
        "wall_vorticity": lambda t: float(np.sum(bs * kap * np.exp(-lam * np.asarray(t, dtype=float)))) if np.isscalar(t) else np.sum(bs * kap * np.exp(-np.multiply.outer(np.asarray(t, dtype=float), lam)), axis=-1),
        "sup_velocity": lambda: float(np.sum(np.abs(bs))),
    }
    return NSData(_shear_source(V, Vy, Vt), zero_field(), nu, domain,
                  initial_h1=h1, closed_forms=forms)


# ---------------------------------------------------------------------------
# erf boundary layer
# ---------------------------------------------------------------------------

def erf_shear_field(A: float, nu: float, domain: Domain | None = None) -> NSData:
    """Half-space diffusion layer V = A erf(y / 2 sqrt(nu t)), mirrored at the
    channel mid-plane.

    The initial datum is the plug A e1 (an H^1 field); the profile develops a
    boundary layer instantly at both walls.  The mid-plane mirroring has an
    exponentially small kink, reported in the closed forms as a truncation
    error scale.  Gradients at t = 0 are +inf sentinels; integrators use the
    sqrt(t) substitution and the attached closed forms instead.
    """
    if A <= 0 or nu <= 0:
        raise FlowError("need positive amplitude and viscosity")
    if domain is None:
        domain = make_channel()
    h = domain.params["height"]
    cross = domain.params["Lx"] * domain.params["Lz"]

    def _eta(y):
        y = np.asarray(y, dtype=float)
        return np.minimum(y, h - y)

    def V(t, y):
        t = np.asarray(t, dtype=float)
        e = _eta(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(t > 0, e / (2.0 * np.sqrt(nu * np.maximum(t, 1e-300))), np.inf)
        return A * np.where(np.asarray(e) > 0, erf(np.where(np.isinf(arg), 38.0, arg)), 0.0)

    def Vy(t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        e = _eta(y)
        sign = np.where(y <= h / 2.0, 1.0, -1.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            amp = A / np.sqrt(math.pi * nu * t)
            out = sign * amp * np.exp(-e**2 / (4.0 * nu * t))
        return np.where(np.asarray(t) > 0, out, np.inf)

    def Vt(t, y):
        t = np.asarray(t, dtype=float)
        e = _eta(y)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = -A * e * np.exp(-e**2 / (4.0 * nu * t)) / (2.0 * np.sqrt(math.pi * nu) * t**1.5)
        return np.where(np.asarray(t) > 0, out, 0.0)

    sqrt_pi = math.sqrt(math.pi)

    def wall_vorticity(t):
        return A / np.sqrt(math.pi * nu * np.asarray(t, dtype=float))

    def drag_work_vs_plug(T, both_walls=True):
        """nu * int_0^T A V_y(t, wall) dt per wall; doubled for both walls."""
        base = 2.0 * A**2 * math.sqrt(nu * T / math.pi) * cross
        return 2.0 * base if both_walls else base

    def dissipation(T, both_walls=True):
        """int_0^T int_0^inf nu V_y^2 dy dt (half-space closed form, per wall)."""
        base = A**2 * math.sqrt(2.0 * nu * T / math.pi) * cross
        return 2.0 * base if both_walls else base

    def layer_dissipation_exact(delta, T, both_walls=True):
        """int_0^T int_0^delta nu V_y^2 dy dt, exactly:

        A^2 sqrt(nu/2pi) [2 sqrt(T) erf(c/sqrt(T)) + (2c/sqrt(pi)) E1(c^2/T)]
        with c = delta / sqrt(2 nu).
        """
        c = delta / math.sqrt(2.0 * nu)
        X = math.sqrt(T)
        val = A**2 * math.sqrt(nu / (2.0 * math.pi)) * (
            2.0 * X * erf(c / X) + (2.0 * c / sqrt_pi) * exp1(c**2 / T)
        )
        base = cross * val
        return 2.0 * base if both_walls else base

    def diff_to_plug_sq(T):
        """||u(T) - A e1||^2 over the channel (both walls)."""
        s_max = (h / 2.0) / (2.0 * math.sqrt(nu * T))
        s, w = np.polynomial.legendre.leggauss(64)
        hi = min(s_max, 40.0)
        ss = 0.5 * hi * (s + 1.0)
        ww = 0.5 * hi * w
        val = float(np.sum(ww * (1.0 - erf(ss)) ** 2)) * 2.0 * math.sqrt(nu * T)
        return 2.0 * cross * A**2 * val

    forms = {
        "wall_vorticity": wall_vorticity,
        "drag_work_vs_plug": drag_work_vs_plug,
        "dissipation": dissipation,
        "layer_dissipation": layer_dissipation_exact,
        "diff_to_plug_sq": diff_to_plug_sq,
        "truncation_scale": lambda T: math.erfc(h / (4.0 * math.sqrt(nu * T))),
        "sup_velocity": lambda: A,
    }
    h1 = A**2 * domain.volume  # plug initial datum: zero gradient
    return NSData(_shear_source(V, Vy, Vt), zero_field(), nu, domain,
                  initial_h1=h1, closed_forms=forms)


# ---------------------------------------------------------------------------
# plug Euler background
# ---------------------------------------------------------------------------

def plug_euler(A: float, domain: Domain) -> EulerData:
    """Constant plug flow A e1; admissible Euler solution in a channel."""
    if domain.kind != "channel":
        raise FlowError("plug flow is tangential only on channel walls")

    def value(t, X):
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        out = np.zeros(shape + (3,))
        out[..., 0] = A
        return out

    zg = lambda t, X: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(np.asarray(X))[:-1]) + (3, 3))
    zv = lambda t, X: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(np.asarray(X))[:-1]) + (3,))
    src = FieldSource(value, zg, zv)
    return EulerData(src, zero_field(), boundary_sup_A=abs(A), domain=domain)


def shear_euler(Vbar, Vbar_y, domain: Domain, boundary_sup: float | None = None) -> EulerData:
    """Steady shear background (Vbar(y), 0, 0); exact Euler solution."""
    src = _shear_source(lambda t, y: Vbar(y) * np.ones(np.broadcast_shapes(np.shape(t), np.shape(y))),
                        lambda t, y: Vbar_y(y) * np.ones(np.broadcast_shapes(np.shape(t), np.shape(y))),
                        lambda t, y: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(y))))
    if boundary_sup is None:
        h = domain.params["height"]
        boundary_sup = max(abs(float(Vbar(0.0))), abs(float(Vbar(h))))
    return EulerData(src, zero_field(), boundary_sup_A=boundary_sup, domain=domain)


# ---------------------------------------------------------------------------
# synthetic bursts (partition stress data, not a solution)
# ---------------------------------------------------------------------------

def synthetic_burst_field(centers, amplitudes, widths, domain: Domain | None = None,
                          time_widths=None) -> NSData:
    """Sum of Gaussian bumps acting as a |grad u|^2 dissipation proxy.

    The result is flagged as a non-solution; the partition machinery consumes
    the proxy directly in place of |grad u^nu|^2 + |f^nu|^{4/3}.
    """
    if domain is None:
        domain = make_channel()
    centers = [np.asarray(c, dtype=float) for c in centers]  # (t, x, y, z)
    amplitudes = list(np.atleast_1d(np.asarray(amplitudes, dtype=float))) if len(centers) else []
    widths = list(np.atleast_1d(np.asarray(widths, dtype=float))) if len(centers) else []
    if len(centers) and len(amplitudes) == 1:
        amplitudes = amplitudes * len(centers)
    if len(centers) and len(widths) == 1:
        widths = widths * len(centers)
    if time_widths is None:
        time_widths = [w**2 for w in widths]
    if not (len(centers) == len(amplitudes) == len(widths)):
        raise FlowError("centers, amplitudes and widths must align")
    if any(w <= 0 for w in widths):
        raise FlowError("burst widths must be positive")

    def proxy(t, X):
        t = np.asarray(t, dtype=float)
        X = np.asarray(X, dtype=float)
        out = np.zeros(np.broadcast_shapes(t.shape, X.shape[:-1]))
        for c, a, w, tw in zip(centers, amplitudes, widths, time_widths):
            d2 = np.sum((X - c[1:]) ** 2, axis=-1) / w**2 + (t - c[0]) ** 2 / tw**2
            out = out + a * np.exp(-d2)
        return out

    return NSData(zero_field(), zero_field(), viscosity=1.0, domain=domain,
                  initial_h1=0.0, is_solution=False, dissipation_proxy=proxy)
