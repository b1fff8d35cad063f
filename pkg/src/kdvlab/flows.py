"""Lattice and spectral dynamics with structure-preserving time stepping.

Lattice systems (Zabusky-Kruskal and the integrable alpha-family) act on
plain site vectors and are advanced by the implicit midpoint rule, which
conserves every quadratic first integral. The KdV, mKdV and viscous Burgers
equations are solved pseudospectrally: the dispersive/diffusive linear part
is applied exactly and the nonlinearity is dealiased with the 2/3 rule.

All steppers accept batched states (leading ensemble axes, site/grid axis last).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NoConvergence, StepTooLarge, TooShort
from .field import GridField, SpectrumField, TorusGrid, antiderivative_from_zero
from .functionals import e3, hamiltonian_mkdv, lattice_q

VectorField = Callable[[np.ndarray], np.ndarray]

KINDS = ("zk_lattice", "alpha_lattice", "airy", "kdv", "mkdv", "burgers_viscous")
INTEGRATORS = ("implicit_midpoint", "rk4", "exact", "splitstep_etd")
LATTICE_KINDS = ("zk_lattice", "alpha_lattice")
SPECTRAL_KINDS = ("kdv", "mkdv", "burgers_viscous")


def _shift(u: np.ndarray, s: int) -> np.ndarray:
    """``_shift(u, s)[i] == u[i + s]`` with periodic indexing."""
    return np.roll(u, -s, axis=-1)


def _require_sites(u: np.ndarray, minimum: int = 5) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < minimum:
        raise TooShort(f"lattice needs at least {minimum} sites, got {u.shape[-1]}")
    return u


# ---------------------------------------------------------------- lattices


def zk_vector_field(u) -> np.ndarray:
    """Zabusky-Kruskal lattice right-hand side.

    ``b_i = (u_{i+1}+u_i+u_{i-1})(u_{i+1}-u_{i-1}) - (u_{i+2}-2u_{i+1}+2u_{i-1}-u_{i-2})``
    """
    u = _require_sites(u)
    up1, um1 = _shift(u, 1), _shift(u, -1)
    up2, um2 = _shift(u, 2), _shift(u, -2)
    return (up1 + u + um1) * (up1 - um1) - (up2 - 2.0 * up1 + 2.0 * um1 - um2)


def zk_divergence(u):
    """Closed-form ``sum_i d b_i / d u_i = sum_i (u_{i+1} - u_{i-1})``."""
    u = _require_sites(u)
    out = np.sum(_shift(u, 1) - _shift(u, -1), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def alpha_vector_field(u, alpha: float) -> np.ndarray:
    """Integrable alpha-family discretization of KdV; conserves :func:`lattice_q`."""
    u = _require_sites(u)
    up1, um1 = _shift(u, 1), _shift(u, -1)
    up2, um2 = _shift(u, 2), _shift(u, -2)
    bracket = (
        -alpha * um1 * (um2 - u)
        - alpha * (um1 + 2.0 * u + up1) * (um1 - up1)
        - alpha * up1 * (u - up2)
        + um2
        - 2.0 * um1
        + 2.0 * up1
        - up2
    )
    return (1.0 - alpha * u) * bracket


def numerical_divergence(vector_field: VectorField, u, eps: float = 1e-6):
    """Central finite-difference estimate of ``sum_i d b_i / d u_i``."""
    u = np.asarray(u, dtype=float)
    total = np.zeros(u.shape[:-1])
    for i in range(u.shape[-1]):
        up = u.copy()
        dn = u.copy()
        up[..., i] += eps
        dn[..., i] -= eps
        total += (vector_field(up)[..., i] - vector_field(dn)[..., i]) / (2.0 * eps)
    return float(total) if np.ndim(total) == 0 else total


# ---------------------------------------------------------------- integrators


def implicit_midpoint_step(
    u, vector_field: VectorField, dt: float, tol: float = 1e-12, max_iters: int = 50
) -> np.ndarray:
    """One implicit midpoint step ``u' = u + dt b((u + u')/2)`` by fixed-point iteration.

    The iteration stops when the update falls below ``tol`` relative to the
    state's max-norm (absolute when the state is smaller than one).

    Raises:
        NoConvergence: if ``max_iters`` iterations do not reach ``tol``.
    """
    u = np.asarray(u, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u)))) if u.size else 1.0
    nxt = u + dt * vector_field(u)
    for _ in range(max_iters):
        new = u + dt * vector_field(0.5 * (u + nxt))
        delta = float(np.max(np.abs(new - nxt))) if u.size else 0.0
        nxt = new
        if not np.isfinite(delta):
            break
        if delta <= tol * scale:
            return nxt
    raise NoConvergence(f"implicit midpoint did not converge in {max_iters} iterations")


def rk4_step(u, vector_field: VectorField, dt: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    k1 = vector_field(u)
    k2 = vector_field(u + 0.5 * dt * k1)
    k3 = vector_field(u + 0.5 * dt * k2)
    k4 = vector_field(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------- spectral flows


def _airy_phase(n: int, t: float) -> np.ndarray:
    k = 2.0 * np.pi * np.arange(n // 2 + 1)
    phase = np.exp(1j * k**3 * t)
    phase[-1] = 1.0  # the real Nyquist mode is left untouched
    return phase


def airy_evolve(s: SpectrumField, t: float) -> SpectrumField:
    """Exact flow of ``u_t = -u_xxx``: mode ``k`` rotates by ``exp(i (2 pi k)^3 t)``."""
    return s.with_coeffs(s.coeffs * _airy_phase(s.n, t))


def _ik(n: int) -> np.ndarray:
    ik = 2j * np.pi * np.arange(n // 2 + 1)
    ik[-1] = 0.0
    return ik


class _SpectralRHS:
    """Dealiased pseudospectral ``coef * d/dx (u^power)`` on rfft coefficients."""

    def __init__(self, n: int, power: int, coef: float):
        self.n = n
        self.power = power
        self.mask = np.arange(n // 2 + 1) <= n // 3
        self.factor = coef * _ik(n) * self.mask

    def __call__(self, s: np.ndarray) -> np.ndarray:
        u = np.fft.irfft(s, n=self.n, axis=-1)
        return self.factor * np.fft.rfft(u**self.power, axis=-1)


def _h1_from_rfft(s: np.ndarray, n: int) -> np.ndarray:
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return np.sum(w * np.abs(s) ** 2, axis=-1) / n**2


def _check_drift(before: np.ndarray, after: np.ndarray, tol: float, what: str) -> None:
    if not np.all(np.isfinite(after)):
        raise StepTooLarge(f"{what}: state blew up")
    rel = np.abs(after - before) / np.maximum(before, np.finfo(float).tiny)
    rel = np.where(before > 0, rel, np.abs(after - before))
    worst = float(np.max(rel)) if rel.size else 0.0
    if worst >= tol:
        raise StepTooLarge(f"{what}: relative h1 drift {worst:.3e} per step exceeds {tol:.1e}")


def _strang_dispersive(s: np.ndarray, dt: float, rhs: _SpectralRHS) -> np.ndarray:
    half = _airy_phase(rhs.n, 0.5 * dt)
    s = s * half
    k1 = rhs(s)
    k2 = rhs(s + 0.5 * dt * k1)
    k3 = rhs(s + 0.5 * dt * k2)
    k4 = rhs(s + dt * k3)
    s = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s * half


def _spectral_kdv(s: np.ndarray, n: int, dt: float, drift_tol: float) -> np.ndarray:
    out = _strang_dispersive(s, dt, _SpectralRHS(n, 2, 3.0))
    _check_drift(_h1_from_rfft(s, n), _h1_from_rfft(out, n), drift_tol, "kdv")
    return out


def _spectral_mkdv(s: np.ndarray, n: int, dt: float, drift_tol: float) -> np.ndarray:
    out = _strang_dispersive(s, dt, _SpectralRHS(n, 3, 2.0))
    _check_drift(_h1_from_rfft(s, n), _h1_from_rfft(out, n), drift_tol, "mkdv")
    return out


def _spectral_burgers(s: np.ndarray, n: int, dt: float, eps: float, drift_tol: float) -> np.ndarray:
    # integrating-factor RK4 for u_t = (u^2)_x + eps u_xx
    rhs = _SpectralRHS(n, 2, 1.0)
    k = 2.0 * np.pi * np.arange(n // 2 + 1)
    e_half = np.exp(-eps * k**2 * dt / 2.0)
    e_full = e_half**2
    k1 = rhs(s)
    k2 = rhs(e_half * (s + 0.5 * dt * k1))
    k3 = rhs(e_half * s + 0.5 * dt * k2)
    k4 = rhs(e_full * s + dt * e_half * k3)
    out = e_full * s + dt / 6.0 * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    before, after = _h1_from_rfft(s, n), _h1_from_rfft(out, n)
    if not np.all(np.isfinite(after)):
        raise StepTooLarge("burgers: state blew up")
    growth = (after - before) / np.maximum(before, np.finfo(float).tiny)
    if np.any(growth >= drift_tol):
        raise StepTooLarge(f"burgers: h1 grew by {float(np.max(growth)):.3e} in one step")
    return out


def kdv_step(f: GridField, dt: float, drift_tol: float = 1e-6) -> GridField:
    """Strang-split step of ``u_t - 6 u u_x + u_xxx = 0``.

    Raises:
        StepTooLarge: if the relative ``int u^2`` drift of the step reaches ``drift_tol``.
    """
    s = np.fft.rfft(f.values, axis=-1)
    return f.with_values(np.fft.irfft(_spectral_kdv(s, f.n, dt, drift_tol), n=f.n, axis=-1))


def mkdv_step(phi: GridField, dt: float, drift_tol: float = 1e-6) -> GridField:
    """Strang-split step of ``phi_t - 6 phi^2 phi_x + phi_xxx = 0``."""
    s = np.fft.rfft(phi.values, axis=-1)
    return phi.with_values(np.fft.irfft(_spectral_mkdv(s, phi.n, dt, drift_tol), n=phi.n, axis=-1))


def burgers_viscous_step(u: GridField, dt: float, eps: float, drift_tol: float = 1e-6) -> GridField:
    """Step of ``u_t = 2 u u_x + eps u_xx``; diffusion applied by an exact integrating factor."""
    if eps <= 0:
        raise ValueError("viscosity must be positive")
    s = np.fft.rfft(u.values, axis=-1)
    return u.with_values(
        np.fft.irfft(_spectral_burgers(s, u.n, dt, eps, drift_tol), n=u.n, axis=-1)
    )


# ---------------------------------------------------------------- orchestration


@dataclass(frozen=True)
class FlowSpec:
    kind: str
    dt: float
    integrator: str | None = None
    alpha: float | None = None
    eps: float | None = None
    fixed_point_tol: float = 1e-12
    max_fixed_point_iters: int = 50
    drift_tol: float = 1e-6
    adaptive: bool = True
    max_halvings: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}; expected one of {KINDS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")
        if (self.alpha is not None) != (self.kind == "alpha_lattice"):
            raise ValueError("alpha is required for, and only for, alpha_lattice")
        if (self.eps is not None) != (self.kind == "burgers_viscous"):
            raise ValueError("eps is required for, and only for, burgers_viscous")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        default = {
            "zk_lattice": "implicit_midpoint",
            "alpha_lattice": "implicit_midpoint",
            "airy": "exact",
        }.get(self.kind, "splitstep_etd")
        integrator = self.integrator or default
        allowed = {
            "zk_lattice": ("implicit_midpoint", "rk4"),
            "alpha_lattice": ("implicit_midpoint", "rk4"),
            "airy": ("exact",),
        }.get(self.kind, ("splitstep_etd",))
        if integrator not in allowed:
            raise ValueError(f"integrator {integrator!r} not available for {self.kind}")
        object.__setattr__(self, "integrator", integrator)

    def vector_field(self) -> VectorField:
        if self.kind == "zk_lattice":
            return zk_vector_field
        if self.kind == "alpha_lattice":
            alpha = self.alpha
            return lambda u: alpha_vector_field(u, alpha)
        raise ValueError(f"{self.kind} is not a lattice flow")


@dataclass
class Diagnostics:
    """Invariant values recorded at checkpoints (arrays over the ensemble axis)."""

    times: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    dt_used: float | None = None
    halvings: int = 0

    def record(self, t: float, invariants: dict) -> None:
        self.times.append(float(t))
        for name, val in invariants.items():
            self.values.setdefault(name, []).append(np.asarray(val, dtype=float))

    def series(self, name: str) -> np.ndarray:
        """Array of shape ``(checkpoints,) + batch``."""
        return np.stack(self.values[name])

    def relative_drift(self, name: str) -> float:
        """Max over checkpoints and members of ``|I(t) - I(0)| / |I(0)|``."""
        s = self.series(name)
        ref = np.abs(s[0])
        rel = np.abs(s - s[0]) / np.where(ref > 0, ref, 1.0)
        return float(np.max(rel))

    def to_csv(self, path) -> None:
        """Columns ``t, invariant, value``; batched invariants are written as their mean
        together with a ``<name>:max_rel_drift`` row."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "invariant", "value"])
            for name in sorted(self.values):
                s = self.series(name)
                ref = np.abs(s[0])
                for i, t in enumerate(self.times):
                    val = s[i]
                    if val.ndim == 0:
                        writer.writerow([repr(t), name, repr(float(val))])
                    else:
                        drift = np.max(np.abs(val - s[0]) / np.where(ref > 0, ref, 1.0))
                        writer.writerow([repr(t), name, repr(float(val.mean()))])
                        writer.writerow([repr(t), f"{name}:max_rel_drift", repr(float(drift))])


def invariants_for(kind: str, values: np.ndarray, alpha: float | None = None) -> dict:
    """Quantities monitored for each flow kind."""
    if kind == "zk_lattice":
        return {"sum_u2": np.sum(values**2, axis=-1)}
    if kind == "alpha_lattice":
        return {"Q": lattice_q(values), "sum_u2": np.sum(values**2, axis=-1)}
    f = GridField(TorusGrid(values.shape[-1]), values)
    out = {"mean": values.mean(axis=-1), "h1": np.mean(values**2, axis=-1)}
    if kind == "kdv":
        out["e3"] = e3(f)
    elif kind == "mkdv":
        mean_zero = np.all(np.abs(out["mean"]) < 1e-10)
        out["H"] = hamiltonian_mkdv(f)
        if mean_zero:
            big = antiderivative_from_zero(f).values
            kp = np.exp(2.0 * big).mean(axis=-1)
            km = np.exp(-2.0 * big).mean(axis=-1)
            out.update({"K_plus": kp, "K_minus": km, "K_product": kp * km})
    return out


def _spectral_stepper(spec: FlowSpec, n: int):
    if spec.kind == "kdv":
        return lambda s, dt: _spectral_kdv(s, n, dt, spec.drift_tol)
    if spec.kind == "mkdv":
        return lambda s, dt: _spectral_mkdv(s, n, dt, spec.drift_tol)
    return lambda s, dt: _spectral_burgers(s, n, dt, spec.eps, spec.drift_tol)


def evolve(state, spec: FlowSpec, t_final: float, checkpoints: int = 10, callback=None):
    """Advance ``state`` to ``t_final`` and record invariants at checkpoints.

    ``state`` is a :class:`GridField` for spectral flows and either a
    :class:`GridField` or a raw site array for lattice flows; the return value
    has the same type. The run is split into ``checkpoints`` equal segments;
    each segment takes ``ceil(segment / dt)`` equal steps so that checkpoint
    times are hit exactly.

    For spectral flows with ``spec.adaptive`` set, a :class:`StepTooLarge`
    failure halves the step and retries; otherwise errors propagate.
    ``callback(t, values)`` is invoked at every checkpoint.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    as_field = isinstance(state, GridField)
    values = np.array(state.values if as_field else state, dtype=float)
    diag = Diagnostics(dt_used=spec.dt)
    diag.record(0.0, invariants_for(spec.kind, values, spec.alpha))
    if callback:
        callback(0.0, values)
    if t_final == 0:
        return (state if as_field else values), diag

    checkpoints = max(1, int(checkpoints))
    seg = t_final / checkpoints
    n = values.shape[-1]
    dt = spec.dt

    if spec.kind in LATTICE_KINDS:
        vf = spec.vector_field()
        for c in range(checkpoints):
            steps = max(1, math.ceil(seg / dt - 1e-9))
            h = seg / steps
            for _ in range(steps):
                if spec.integrator == "implicit_midpoint":
                    values = implicit_midpoint_step(
                        values, vf, h, spec.fixed_point_tol, spec.max_fixed_point_iters
                    )
                else:
                    values = rk4_step(values, vf, h)
            t = (c + 1) * seg
            diag.record(t, invariants_for(spec.kind, values, spec.alpha))
            if callback:
                callback(t, values)
        diag.dt_used = h
    elif spec.kind == "airy":
        s0 = np.fft.rfft(values, axis=-1)
        for c in range(checkpoints):
            t = (c + 1) * seg
            values = np.fft.irfft(s0 * _airy_phase(n, t), n=n, axis=-1)
            diag.record(t, invariants_for(spec.kind, values))
            if callback:
                callback(t, values)
        diag.dt_used = 0.0
    else:
        step = _spectral_stepper(spec, n)
        s = np.fft.rfft(values, axis=-1)
        for c in range(checkpoints):
            remaining = seg
            while remaining > 1e-15 * max(1.0, t_final):
                steps = max(1, math.ceil(remaining / dt - 1e-9))
                h = remaining / steps
                try:
                    s = step(s, h)
                except StepTooLarge:
                    if not spec.adaptive or diag.halvings >= spec.max_halvings:
                        raise
                    dt = h / 2.0
                    diag.halvings += 1
                    continue
                remaining -= h
            values = np.fft.irfft(s, n=n, axis=-1)
            t = (c + 1) * seg
            diag.record(t, invariants_for(spec.kind, values))
            if callback:
                callback(t, values)
        diag.dt_used = dt

    if as_field:
        return state.with_values(values), diag
    return values, diag
