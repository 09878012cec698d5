"""Hybrid threshold-reset systems and the leaky integrate-and-fire instance.

The continuous dynamics are ``dz/dt = f(z) + v*I(t)`` with a T-periodic
square-wave drive ``I``.  Whenever the trajectory reaches the threshold set
``{h(z) = 0}`` the reset map ``R`` is applied.  The concrete model is a leaky
integrator ``V`` with a dynamic threshold ``theta`` relaxing toward
``theta_inf(V) = a + exp(b*(V - c))``; a spike resets ``V`` to ``Vr`` and
increments ``theta`` by ``Delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "THRESHOLD_TOL",
    "State",
    "ModelParams",
    "ForcingParams",
    "HybridSystem",
    "make_lif",
    "published_params",
    "theta_inf",
    "vector_field",
    "reset",
    "drive_at",
    "read_param_file",
    "write_param_file",
]

#: A point counts as lying on the threshold set when |V - theta| is below this.
THRESHOLD_TOL = 1e-10

# Phases within this distance of a boundary (in period units) snap onto it,
# so the drive value agrees across whole-period shifts t -> t + k*T despite
# the rounding of t/T.  Uniform width: a relative width would reclassify
# near-boundary times once |t/T| grows.
_PHASE_SNAP = 1e-9


class State(NamedTuple):
    """Phase-plane point ``(V, theta)`` (membrane voltage, threshold level)."""

    V: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.V, self.theta], dtype=float)

    @classmethod
    def from_array(cls, z: np.ndarray) -> "State":
        z = np.asarray(z, dtype=float)
        if z.shape != (2,):
            raise ValueError(f"expected a single (V, theta) pair, got shape {z.shape}")
        return cls(float(z[0]), float(z[1]))


def as_points(z) -> np.ndarray:
    """Coerce a state or batch of states to a float array of shape (..., 2).

    Finiteness is not enforced here: the integrator evaluates fields on
    trial stages that may have diverged and handles those lanes itself.
    Public entry points validate their own inputs.
    """
    arr = np.asarray(z, dtype=float)
    if arr.shape == () or arr.shape[-1] != 2:
        raise ValueError(f"states must have trailing dimension 2, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Constants of the integrate-and-fire model with dynamic threshold.

    ``unsafe=True`` skips the feasibility check that the threshold nullcline
    stays above the resting drive level (which guarantees spike-free dynamics
    when the pulse is off); such parameter sets are accepted but the engine
    gives no subthreshold guarantee for them.
    """

    V0: float
    Vr: float
    Delta: float
    a: float
    b: float
    c: float
    tau_theta: float
    unsafe: bool = False

    def __post_init__(self) -> None:
        vals = (self.V0, self.Vr, self.Delta, self.a, self.b, self.c, self.tau_theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("model parameters must be finite")
        if self.tau_theta <= 1.0:
            raise ValueError(f"tau_theta must exceed 1, got {self.tau_theta}")
        if not self.unsafe:
            margin = self.quiescence_margin()
            if margin <= 0.0:
                raise ValueError(
                    "threshold nullcline dips to within "
                    f"{-margin:.3g} below the resting drive level V0={self.V0}; "
                    "pass unsafe=True to accept this parameter set anyway"
                )
            if self.theta_inf(self.V0) <= self.V0:
                raise ValueError("resting equilibrium lies on or above the threshold")

    def theta_inf(self, V):
        """Steady-state threshold level ``a + exp(b*(V - c))``."""
        return self.a + np.exp(self.b * (np.asarray(V, dtype=float) - self.c))

    def theta_inf_dV(self, V):
        return self.b * np.exp(self.b * (np.asarray(V, dtype=float) - self.c))

    def theta_inf_db(self, V):
        V = np.asarray(V, dtype=float)
        return (V - self.c) * np.exp(self.b * (V - self.c))

    def quiescence_margin(self) -> float:
        """min over V >= Vr of theta_inf(V), minus V0.

        Positive margin means the threshold nullcline never reaches the
        resting drive level, so the unforced flow cannot produce spikes from
        the subthreshold domain.  For b >= 0 the minimum sits at V = Vr; for
        b < 0 the infimum as V grows is the offset ``a``.
        """
        if self.b >= 0.0:
            lo = self.a + math.exp(self.b * (self.Vr - self.c))
        else:
            lo = self.a
        return lo - self.V0

    def equilibrium(self) -> State:
        """Rest state of the unforced system, ``(V0, theta_inf(V0))``."""
        return State(self.V0, float(self.theta_inf(self.V0)))

    def is_subthreshold(self, z) -> np.ndarray:
        """Membership in the domain ``{V >= Vr, V < theta}`` (elementwise)."""
        z = as_points(z)
        return (z[..., 0] >= self.Vr - THRESHOLD_TOL) & (z[..., 0] < z[..., 1])

    def with_updates(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def published_params(b: float = 0.1, unsafe: bool = False) -> ModelParams:
    """The baseline parameter set used throughout: only b is meant to vary."""
    return ModelParams(V0=0.1, Vr=0.0, Delta=0.3, a=0.08, b=b, c=0.53,
                       tau_theta=2.0, unsafe=unsafe)


@dataclass(frozen=True)
class ForcingParams:
    """Square-wave drive: amplitude A on ``(nT, nT + dT]``, zero on the rest."""

    A: float
    T: float
    d: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.A) and math.isfinite(self.T) and math.isfinite(self.d)):
            raise ValueError("forcing parameters must be finite")
        if self.A < 0.0:
            raise ValueError(f"pulse amplitude must be >= 0, got {self.A}")
        if self.T <= 0.0:
            raise ValueError(f"period must be positive, got {self.T}")
        if not 0.0 < self.d < 1.0:
            raise ValueError(f"duty fraction must lie in (0,1), got {self.d}")

    @property
    def on_time(self) -> float:
        return self.d * self.T

    @property
    def off_time(self) -> float:
        return self.T - self.d * self.T

    def with_updates(self, **kw) -> "ForcingParams":
        return replace(self, **kw)


def drive_at(t, forcing: ForcingParams):
    """Drive level at time t: A for phase in (0, d], 0 for phase in (d, 1].

    The phase t/T mod 1 snaps onto a boundary when within 1e-9 (period
    units) of it, so the value agrees bit-for-bit across whole-period shifts
    t -> t + k*T.  t = 0 sits at the end of the off-phase (value 0).
    """
    t = np.asarray(t, dtype=float)
    u = t / forcing.T
    frac = u - np.floor(u)
    frac = np.where(np.minimum(frac, 1.0 - frac) <= _PHASE_SNAP, 0.0, frac)
    frac = np.where(np.abs(frac - forcing.d) <= _PHASE_SNAP, forcing.d, frac)
    on = (frac > 0.0) & (frac <= forcing.d)
    out = np.where(on, forcing.A, 0.0)
    return out if out.ndim else float(out)


def theta_inf(V, p: ModelParams):
    """Steady-state threshold level for voltage V."""
    return p.theta_inf(V)


def vector_field(z, I: float, p: ModelParams) -> np.ndarray:
    """Right-hand side ``(-V + V0 + I, (-theta + theta_inf(V)) / tau_theta)``."""
    z = as_points(z)
    V, th = z[..., 0], z[..., 1]
    out = np.empty_like(z)
    out[..., 0] = -V + p.V0 + I
    out[..., 1] = (-th + p.theta_inf(V)) / p.tau_theta
    return out


def reset(z, p: ModelParams) -> np.ndarray:
    """Spike update ``(V, theta) -> (Vr, theta + Delta)``, only valid on the threshold set."""
    z = as_points(z)
    if not np.all(np.isfinite(z)):
        raise ValueError("reset requires finite states")
    if np.any(np.abs(z[..., 0] - z[..., 1]) > THRESHOLD_TOL):
        worst = float(np.max(np.abs(z[..., 0] - z[..., 1])))
        raise ValueError(
            f"reset applied off the threshold set: |V - theta| = {worst:.3g} "
            f"exceeds {THRESHOLD_TOL:g}"
        )
    out = np.empty_like(z)
    out[..., 0] = p.Vr
    out[..., 1] = z[..., 1] + p.Delta
    return out


@dataclass(frozen=True)
class HybridSystem:
    """Vector field, threshold function and reset map, batch-vectorized.

    All callables accept states of shape (..., 2) and broadcast.  ``param_jac``
    supplies the columns d f/d(b, A) used by the parameter-extended variational
    equations; ``drive_on`` tells whether the active segment carries the pulse
    (the A-column vanishes on off-segments).  ``reset_inverse`` is only needed
    for backward switching-manifold sweeps.
    """

    f: Callable[[np.ndarray, float], np.ndarray]
    jac: Callable[[np.ndarray, float], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    grad_h: Callable[[np.ndarray], np.ndarray]
    reset: Callable[[np.ndarray], np.ndarray]
    reset_jac: Callable[[np.ndarray], np.ndarray]
    param_jac: Callable[[np.ndarray, bool], np.ndarray] | None = None
    reset_inverse: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"


def make_lif(p: ModelParams) -> HybridSystem:
    """Assemble the hybrid-system callables for the integrate-and-fire model."""

    def f(z, I):
        return vector_field(z, I, p)

    def jac(z, I):
        z = np.asarray(z, dtype=float)
        J = np.zeros(z.shape[:-1] + (2, 2))
        J[..., 0, 0] = -1.0
        J[..., 1, 0] = p.theta_inf_dV(z[..., 0]) / p.tau_theta
        J[..., 1, 1] = -1.0 / p.tau_theta
        return J

    def h(z):
        z = np.asarray(z, dtype=float)
        return z[..., 0] - z[..., 1]

    def grad_h(z):
        z = np.asarray(z, dtype=float)
        g = np.empty(z.shape)
        g[..., 0] = 1.0
        g[..., 1] = -1.0
        return g

    def do_reset(z):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        out[..., 0] = p.Vr
        out[..., 1] = z[..., 1] + p.Delta
        return out

    def reset_jac(z):
        z = np.asarray(z, dtype=float)
        J = np.zeros(z.shape[:-1] + (2, 2))
        J[..., 1, 1] = 1.0
        return J

    def param_jac(z, drive_on):
        z = np.asarray(z, dtype=float)
        P = np.zeros(z.shape[:-1] + (2, 2))
        P[..., 1, 0] = p.theta_inf_db(z[..., 0]) / p.tau_theta
        if drive_on:
            P[..., 0, 1] = 1.0
        return P

    def reset_inverse(z):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        out[..., 1] = z[..., 1] - p.Delta
        out[..., 0] = out[..., 1]
        return out

    return HybridSystem(f=f, jac=jac, h=h, grad_h=grad_h, reset=do_reset,
                        reset_jac=reset_jac, param_jac=param_jac,
                        reset_inverse=reset_inverse, name="lif-dynamic-threshold")


_PARAM_KEYS = ("V0", "Vr", "Delta", "a", "b", "c", "tau_theta", "A", "T", "d")


def read_param_file(path) -> tuple[ModelParams, ForcingParams]:
    """Parse a flat ``key = value`` parameter file.

    All ten keys (V0, Vr, Delta, a, b, c, tau_theta, A, T, d) must be present;
    unknown keys are an error.  Values round-trip exactly through
    :func:`write_param_file`.
    """
    text = Path(path).read_text()
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _PARAM_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate parameter {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad number for {key!r}: {val.strip()!r}") from exc
    missing = [k for k in _PARAM_KEYS if k not in values]
    if missing:
        raise ValueError(f"{path}: missing parameters: {', '.join(missing)}")
    model = ModelParams(V0=values["V0"], Vr=values["Vr"], Delta=values["Delta"],
                        a=values["a"], b=values["b"], c=values["c"],
                        tau_theta=values["tau_theta"])
    forcing = ForcingParams(A=values["A"], T=values["T"], d=values["d"])
    return model, forcing


def write_param_file(path, model: ModelParams, forcing: ForcingParams) -> None:
    values = {"V0": model.V0, "Vr": model.Vr, "Delta": model.Delta, "a": model.a,
              "b": model.b, "c": model.c, "tau_theta": model.tau_theta,
              "A": forcing.A, "T": forcing.T, "d": forcing.d}
    lines = [f"{k} = {values[k]!r}" for k in _PARAM_KEYS]
    Path(path).write_text("\n".join(lines) + "\n")
