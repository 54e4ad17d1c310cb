"""Single machine infinite bus (SMIB) swing dynamics.

The machine angle obeys

    d2delta/dt2 = (pi f0 / H) * (Pm1 - D * ddelta/dt - (E V / X) * sin(delta))

after a step change of the mechanical input from ``Pm`` to ``Pm1`` at t = 0.
Ground truth trajectories come from an adaptive Dormand-Prince 5(4) pair whose
dense output is sampled on arbitrary uniform grids, so a 100 ms grid and a
50 us grid see the same continuous solution.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SmibParams",
    "MachineState",
    "Trajectory",
    "StabilityLabel",
    "IntegrationError",
    "ResampleError",
    "DenseSolution",
    "max_power",
    "equilibrium_angle",
    "rhs",
    "solve",
    "integrate",
    "critical_angle",
    "pm1_max",
    "classify",
    "is_unstable",
    "instability_lower_bound",
    "energy",
    "uniform_grid",
    "REFERENCE_CONSTANTS",
    "HORIZON",
    "LABEL_DT",
]

#: Machine constants used throughout the experiments (per unit, seconds, Hz).
REFERENCE_CONSTANTS = dict(E=1.35, V=1.0, X=0.65, H=9.94, f0=60.0)

#: Full simulation horizon (s); classification looks at the whole of it.
HORIZON = 3.1

#: Spacing of the grid used for stability labels. Independent of any dataset
#: resolution so coarse and fine datasets get identical labels and bounds.
LABEL_DT = 1e-3

RTOL = 1e-10
ATOL = 1e-12
FIRST_STEP = 1e-3
MAX_STEP = 0.05


class IntegrationError(RuntimeError):
    """Raised when the adaptive step size collapses."""

    def __init__(self, t: float, message: str = "step size underflow"):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


class ResampleError(ValueError):
    """The instability search bracket is empty: Pm1 = Pmax is still stable."""


@dataclass(frozen=True)
class SmibParams:
    E: float
    V: float
    X: float
    H: float
    D: float
    f0: float
    Pm: float
    Pm1: float

    def __post_init__(self):
        for name in ("E", "V", "X", "H", "f0"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.D >= 0:
            raise ValueError(f"D must be non-negative, got {self.D}")
        if not math.isfinite(self.Pm) or not math.isfinite(self.Pm1):
            raise ValueError("Pm and Pm1 must be finite")
        if self.Pm >= self.E * self.V / self.X:
            raise ValueError(
                f"Pm={self.Pm} must be below Pmax={self.E * self.V / self.X}"
            )

    @classmethod
    def reference(cls, Pm: float, Pm1: float, D: float = 0.0) -> "SmibParams":
        return cls(D=D, Pm=Pm, Pm1=Pm1, **REFERENCE_CONSTANTS)

    @property
    def pmax(self) -> float:
        return max_power(self)

    @property
    def delta0(self) -> float:
        return equilibrium_angle(self.Pm, self.pmax)

    def with_pm1(self, pm1: float) -> "SmibParams":
        return replace(self, Pm1=pm1)

    def as_dict(self) -> dict:
        return dict(E=self.E, V=self.V, X=self.X, H=self.H, D=self.D,
                    f0=self.f0, Pm=self.Pm, Pm1=self.Pm1)


@dataclass(frozen=True)
class MachineState:
    delta: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and math.isfinite(self.omega)):
            raise ValueError("machine state must be finite")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled rotor angle (rad) and speed deviation (rad/s)."""

    t0: float
    dt: float
    delta: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.float64)
        omega = np.asarray(self.omega, dtype=np.float64)
        if delta.ndim != 1 or delta.shape != omega.shape or delta.size < 1:
            raise ValueError("delta and omega must be equal-length, non-empty 1-d arrays")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "omega", omega)

    def __len__(self) -> int:
        return self.delta.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.delta.size)


class StabilityLabel(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


def max_power(params: SmibParams) -> float:
    """Maximum transferable electrical power |E||V|/X."""
    return abs(params.E) * abs(params.V) / params.X


def equilibrium_angle(pm: float, pmax: float) -> float:
    """Pre-disturbance rotor angle arcsin(pm / pmax)."""
    if not 0 <= pm < pmax:
        raise ValueError(f"equilibrium needs 0 <= pm < pmax, got pm={pm}, pmax={pmax}")
    return math.asin(pm / pmax)


def rhs(state: MachineState, params: SmibParams) -> tuple[float, float]:
    k = math.pi * params.f0 / params.H
    pmax = max_power(params)
    return state.omega, k * (params.Pm1 - params.D * state.omega - pmax * math.sin(state.delta))


def energy(delta, omega, params: SmibParams):
    """Undamped swing energy; constant along solutions when D = 0."""
    delta = np.asarray(delta)
    omega = np.asarray(omega)
    return (params.H / (math.pi * params.f0)) * omega**2 / 2 - params.Pm1 * delta \
        - max_power(params) * np.cos(delta)


def uniform_grid(start: float, stop: float, dt: float) -> np.ndarray:
    """Points start + k*dt for k = 0..n covering [start, stop].

    The span has to be an integer multiple of ``dt`` to within 1e-9 relative.
    Points are formed as start + span*(k/n), so a grid whose step divides a
    coarser one contains the coarse points bit for bit.
    """
    count = (stop - start) / dt
    n = round(count)
    if abs(count - n) > 1e-9 * max(1.0, count):
        raise ValueError(f"dt={dt} does not divide [{start}, {stop}]")
    if n == 0:
        return np.array([float(start)])
    return start + (stop - start) * (np.arange(n + 1) / n)


# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A2 = (1 / 5,)
_A3 = (3 / 40, 9 / 40)
_A4 = (44 / 45, -56 / 15, 32 / 9)
_A5 = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A6 = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# fifth-order minus embedded fourth-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

#: Shampine's continuous extension: y(t + th*h) = y + h * sum_i K_i * (P_i . [th, th^2, th^3, th^4]).
DENSE_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class DenseSolution:
    """Piecewise quartic interpolant over the accepted steps of one solve."""

    def __init__(self, t, h, y, coef):
        self.t = t          # (S,) step start times
        self.h = h          # (S,) step sizes
        self.y = y          # (S, 2) state at step start
        self.coef = coef    # (S, 4, 2) h * P^T K
        self.t_end = float(t[-1] + h[-1]) if len(t) else 0.0

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def __call__(self, times) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=np.float64)
        idx = np.searchsorted(self.t, times, side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 1)
        theta = (times - self.t[idx]) / self.h[idx]
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        y = self.y[idx] + np.einsum("qk,qkc->qc", powers, self.coef[idx])
        return y[:, 0], y[:, 1]


def solve(params: SmibParams, initial: MachineState, t_end: float, *,
          rtol: float = RTOL, atol: float = ATOL, first_step: float = FIRST_STEP,
          max_step: float = MAX_STEP, max_steps: int = 1_000_000) -> DenseSolution:
    """Adaptive Dormand-Prince 5(4) solve of the swing equation on [0, t_end].

    Scalar float arithmetic; for a 2-state system this is several times faster
    than numpy arrays. Raises IntegrationError on step-size underflow.
    """
    k = math.pi * params.f0 / params.H
    pmax = max_power(params)
    pm1 = params.Pm1
    damp = params.D
    sin = math.sin

    def f(d, w):
        return w, k * (pm1 - damp * w - pmax * sin(d))

    a21, = _A2
    a31, a32 = _A3
    a41, a42, a43 = _A4
    a51, a52, a53, a54 = _A5
    a61, a62, a63, a64, a65 = _A6
    b1, _, b3, b4, b5, b6, _ = _B
    e1, _, e3, e4, e5, e6, e7 = _E

    t = 0.0
    d, w = initial.delta, initial.omega
    k1d, k1w = f(d, w)
    h = min(first_step, max_step, t_end)
    ts, hs, ys, ks = [], [], [], []
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            raise IntegrationError(t, "too many steps")
        if t + h > t_end:
            h = t_end - t
        while True:
            k2d, k2w = f(d + h * a21 * k1d, w + h * a21 * k1w)
            k3d, k3w = f(d + h * (a31 * k1d + a32 * k2d), w + h * (a31 * k1w + a32 * k2w))
            k4d, k4w = f(d + h * (a41 * k1d + a42 * k2d + a43 * k3d),
                         w + h * (a41 * k1w + a42 * k2w + a43 * k3w))
            k5d, k5w = f(d + h * (a51 * k1d + a52 * k2d + a53 * k3d + a54 * k4d),
                         w + h * (a51 * k1w + a52 * k2w + a53 * k3w + a54 * k4w))
            k6d, k6w = f(d + h * (a61 * k1d + a62 * k2d + a63 * k3d + a64 * k4d + a65 * k5d),
                         w + h * (a61 * k1w + a62 * k2w + a63 * k3w + a64 * k4w + a65 * k5w))
            dn = d + h * (b1 * k1d + b3 * k3d + b4 * k4d + b5 * k5d + b6 * k6d)
            wn = w + h * (b1 * k1w + b3 * k3w + b4 * k4w + b5 * k5w + b6 * k6w)
            k7d, k7w = f(dn, wn)
            errd = h * (e1 * k1d + e3 * k3d + e4 * k4d + e5 * k5d + e6 * k6d + e7 * k7d)
            errw = h * (e1 * k1w + e3 * k3w + e4 * k4w + e5 * k5w + e6 * k6w + e7 * k7w)
            sd = atol + rtol * max(abs(d), abs(dn))
            sw = atol + rtol * max(abs(w), abs(wn))
            err = math.hypot(errd / sd, errw / sw) / math.sqrt(2.0)
            if not math.isfinite(err):
                raise IntegrationError(t, "non-finite state")
            if err <= 1.0:
                break
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(t)
        ts.append(t)
        hs.append(h)
        ys.append((d, w))
        ks.append(((k1d, k1w), (k2d, k2w), (k3d, k3w), (k4d, k4w),
                   (k5d, k5w), (k6d, k6w), (k7d, k7w)))
        steps += 1
        t = t + h
        d, w = dn, wn
        k1d, k1w = k7d, k7w
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(h * factor, max_step)

    hs_arr = np.asarray(hs)
    karr = np.asarray(ks)  # (S, 7, 2)
    coef = hs_arr[:, None, None] * np.einsum("ip,sic->spc", DENSE_P, karr)
    sol = DenseSolution(np.asarray(ts), hs_arr, np.asarray(ys), coef)
    sol.t_end = t_end
    sol.final = (d, w)
    return sol


def integrate(params: SmibParams, initial: MachineState, sample_times, **tolerances) -> Trajectory:
    """Solve from t = 0 and sample the dense solution on a uniform grid."""
    times = np.asarray(sample_times, dtype=np.float64)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("sample_times must be a non-empty 1-d grid")
    if times[0] < 0:
        raise ValueError("sample_times must be non-negative")
    if times.size > 1:
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("sample_times must be strictly increasing")
        dt = float((times[-1] - times[0]) / (times.size - 1))
        if np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1e-12) + 1e-12:
            raise ValueError("sample_times must be uniform")
    else:
        dt = 1.0
    sol = solve(params, initial, float(times[-1]) if times[-1] > 0 else 0.0, **tolerances) \
        if times[-1] > 0 else None
    if sol is None:
        delta = np.full(times.size, initial.delta)
        omega = np.full(times.size, initial.omega)
    else:
        delta, omega = sol(times)
    return Trajectory(float(times[0]), dt, delta, omega)


def critical_angle(delta0: float, tol: float = 1e-12) -> float:
    """Largest stable swing angle of the undamped machine (equal-area root).

    Bisection for the root of (d - delta0) sin d + cos d - cos delta0 on
    [pi/2, pi]; the trivial root d = delta0 lies outside that bracket.
    """
    if not 0 <= delta0 <= math.pi / 2:
        raise ValueError(f"delta0 must lie in [0, pi/2), got {delta0}")

    def residual(d):
        return (d - delta0) * math.sin(d) + math.cos(d) - math.cos(delta0)

    lo, hi = math.pi / 2, math.pi
    if residual(lo) <= 0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pm1_max(params: SmibParams) -> float:
    """Largest post-disturbance input that keeps the undamped machine in step."""
    pmax = max_power(params)
    return pmax * math.sin(math.pi - critical_angle(equilibrium_angle(params.Pm, pmax)))


def classify(traj: Trajectory) -> StabilityLabel:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return StabilityLabel.UNSTABLE if np.any(traj.delta > math.pi) else StabilityLabel.STABLE


def label_grid(horizon: float = HORIZON) -> np.ndarray:
    return uniform_grid(0.0, horizon, LABEL_DT)


def is_unstable(params: SmibParams, horizon: float = HORIZON) -> bool:
    """Integrate from the pre-disturbance equilibrium and classify on the label grid."""
    traj = integrate(params, MachineState(params.delta0, 0.0), label_grid(horizon))
    return classify(traj) is StabilityLabel.UNSTABLE


def instability_lower_bound(params: SmibParams, iterations: int = 100,
                            horizon: float = HORIZON) -> float:
    """Bisection estimate of the smallest Pm1 that loses synchronism.

    Searches [pm1_max (undamped), Pmax] with the sampled damping and returns the
    stable side of the final bracket. Raises ResampleError if Pm1 = Pmax is stable.
    """
    pmax = max_power(params)
    lo = pm1_max(params)
    hi = pmax
    if hi - lo <= 1e-12:
        return pmax
    if not is_unstable(params.with_pm1(hi), horizon):
        raise ResampleError("resample: Pm1 = Pmax does not lose synchronism")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            # bracket at float resolution; remaining iterations cannot move it
            break
        if is_unstable(params.with_pm1(mid), horizon):
            hi = mid
        else:
            lo = mid
    return lo
