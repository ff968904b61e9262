"""Brownian-frame disk evolution and its Monte Carlo machinery.

The driving point becomes tau(t) = exp(ikB_t) for a standard Brownian
motion B.  Two complementary discretizations live here:

* the random ODE for phi_t (pathwise classical, C^1 in t), integrated
  by RK4 with the Brownian path linearly interpolated inside steps;
* the Ito SDE for the rotating-frame process Psi_t = phi_t e^{-ikB_t},
  discretized by Euler-Maruyama or Milstein.

On top of those sit the statistical layers: semigroup expectations
(T_t f)(z) = E f(Psi_t(z)) with standard errors, the moment hierarchy,
closed-form means and covariances of the solvable reference case,
generator algebra (ladder-operator coefficients, Dynkin checks), radial
growth bounds, the induced circle diffusion, and its annihilating
functions.

Reproducibility contract: every ensemble draws path j from the seed
derived as ``derive_path_seed(root_seed, j)``, block sizes are a fixed
function of the call arguments, and reductions combine block partials
with a fixed-order pairwise sum, so repeated calls with the same
arguments give bit-identical estimates.
"""

from __future__ import annotations

import cmath
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .deterministic import (
    EvolutionConfig,
    Trajectory,
    _integrate,
    _normalize_sample_times,
)
from .herglotz import DomainError, Error, taylor_coefficients

__all__ = [
    "ZeroNotFoundError",
    "BROWNIAN_ALGORITHM_ID",
    "BrownianPath",
    "MomentTable",
    "McEstimate",
    "CovarianceReference",
    "derive_path_seed",
    "sample_brownian",
    "evolve_phi_pathwise",
    "example1_pathwise",
    "mean_phi_example1",
    "evolve_psi_sde",
    "expectation_Tt",
    "covariance_mc",
    "apply_generator",
    "virasoro_coefficients",
    "solve_moment_hierarchy",
    "covariance_reference",
    "radial_solution",
    "growth_bounds",
    "simulate_boundary_diffusion",
    "generator_annihilator",
    "find_stochastic_zero",
    "backward_equation_residual",
]

BROWNIAN_ALGORITHM_ID = "philox-gauss-cumsum-v1"

# ensembles are processed in path blocks; the cap keeps the per-block
# increment matrix around 160 MB worst case
_BLOCK_PATHS = 8192
_BLOCK_FLOATS = 20_000_000


class ZeroNotFoundError(Error):
    """The drift zero search exhausted all starts without converging."""


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BrownianPath:
    """One sampled Brownian path B_0..B_N on a uniform grid.

    Attributes:
        dt: grid spacing, positive.
        values: array of N+1 floats with values[0] == 0.
        seed: integer seed the path was drawn from.
        algorithm_id: identifies the generation recipe, so stored paths
            stay interpretable if the recipe ever changes.
    """

    dt: float
    values: np.ndarray
    seed: int
    algorithm_id: str = BROWNIAN_ALGORITHM_ID

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0, got %r" % self.dt)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("values must be a nonempty 1-d array")
        if values[0] != 0.0:
            raise ValueError("a Brownian path starts at 0, got %r" % values[0])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self):
        return len(self.values) - 1

    @property
    def duration(self):
        return self.n_steps * self.dt

    def time_grid(self):
        return np.arange(self.n_steps + 1) * self.dt

    def increments(self):
        return np.diff(self.values)


@dataclass(frozen=True)
class MomentTable:
    """Moments mu_m(t) = E Psi_t(z)^m of the rotating-frame process.

    values[i, j] is mu_{orders[j]}(times[i]).  ``truncation`` is the
    order at which the hierarchy was cut, ``closure`` how the cut tail
    was treated.
    """

    orders: tuple
    times: np.ndarray
    values: np.ndarray
    truncation: int
    closure: str

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(times), len(self.orders)):
            raise ValueError("values must have shape (len(times), len(orders))")
        if self.closure not in ("zero", "frozen"):
            raise ValueError("closure must be 'zero' or 'frozen', got %r"
                             % self.closure)
        if values.size and np.max(np.abs(values)) > 1.0 + 1e-8:
            raise ValueError("moments of a disk-valued process cannot "
                             "exceed 1 in modulus")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def moment(self, m):
        """Column of mu_m over all times."""
        return self.values[:, self.orders.index(m)]


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo mean with its standard error."""

    mean: complex
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0.0:
            raise ValueError("std_error must be >= 0")
        if self.n_samples < 2:
            raise ValueError("need n_samples >= 2, got %r" % self.n_samples)


CovarianceReference = namedtuple("CovarianceReference",
                                 ["e1", "e2", "e3", "cov"])


# --------------------------------------------------------------------------
# path sampling
# --------------------------------------------------------------------------

def derive_path_seed(root_seed, index):
    """Stable per-path seed: path ``index`` of ensemble ``root_seed``."""
    ss = np.random.SeedSequence((int(root_seed), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_brownian(seed, dt, n_steps):
    """Draw a Brownian path, bit-reproducible from its arguments.

    Args:
        seed: integer fed to a counter-based generator.
        dt: grid spacing, positive.
        n_steps: number of increments; the path has n_steps+1 values.

    Returns:
        A BrownianPath with independent N(0, dt) increments.
    """
    dt = float(dt)
    if dt <= 0.0:
        raise ValueError("dt must be > 0, got %r" % dt)
    n_steps = int(n_steps)
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    gen = np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(int(seed))))
    increments = gen.standard_normal(n_steps) * math.sqrt(dt)
    values = np.empty(n_steps + 1)
    values[0] = 0.0
    np.cumsum(increments, out=values[1:])
    return BrownianPath(dt=dt, values=values, seed=int(seed))


def _increment_rows(root_seed, first_index, n_rows, dt, n_steps):
    """Increment matrix for paths first_index..first_index+n_rows-1.

    Row i reproduces sample_brownian(derive_path_seed(root_seed,
    first_index+i), dt, n_steps).increments() bit for bit.
    """
    out = np.empty((n_rows, n_steps))
    root = math.sqrt(dt)
    values = np.empty(n_steps + 1)
    values[0] = 0.0
    for i in range(n_rows):
        seed = derive_path_seed(root_seed, first_index + i)
        gen = np.random.Generator(
            np.random.Philox(seed=np.random.SeedSequence(seed)))
        np.cumsum(gen.standard_normal(n_steps) * root, out=values[1:])
        np.subtract(values[1:], values[:-1], out=out[i])
    return out


def _block_sizes(n_samples, n_steps):
    cap = max(1, min(_BLOCK_PATHS, _BLOCK_FLOATS // max(1, n_steps)))
    sizes = []
    done = 0
    while done < n_samples:
        m = min(cap, n_samples - done)
        sizes.append(m)
        done += m
    return sizes


def _pairwise_sum(xs):
    """Sum a list in a fixed balanced order, independent of blocking."""
    n = len(xs)
    if n == 0:
        return 0.0
    if n == 1:
        return xs[0]
    mid = n // 2
    return _pairwise_sum(xs[:mid]) + _pairwise_sum(xs[mid:])


# --------------------------------------------------------------------------
# pathwise random ODE
# --------------------------------------------------------------------------

def evolve_phi_pathwise(spec, k, z0, path, sample_times):
    """Integrate the random ODE for phi_t along one Brownian path.

    The driving point is tau(t) = exp(ik B_t) with B linearly
    interpolated inside grid steps, making the field classical and the
    solution C^1 in t.  One RK4 step is taken per path interval (plus
    partial steps to land exactly on requested sample times).

    Args:
        spec: Herglotz spec of the field.
        k: noise amplitude in the driving exponent.
        z0: initial point, |z0| <= 1.
        path: BrownianPath supplying B.
        sample_times: times in [0, path.duration] to record at.

    Returns:
        Trajectory in the phi frame.
    """
    if abs(z0) > 1.0:
        raise DomainError("need |z0| <= 1, got %r" % abs(z0))
    k = float(k)
    B = path.values
    dt = path.dt
    n = path.n_steps
    ts = _normalize_sample_times(sample_times, n * dt)

    def tau_at(t):
        i = min(int(t / dt), n - 1) if n else 0
        frac = t / dt - i
        b = B[i] + (B[i + 1] - B[i]) * frac if n else 0.0
        return cmath.exp(1j * k * b)

    def field(t, y):
        tau = tau_at(t)
        return tau * spec._bp_field(y / tau)

    # step over the union of path grid points and sample times, so each
    # RK4 step stays inside one (smooth) interpolation interval
    knots = np.union1d(np.arange(n + 1) * dt, np.asarray(ts))
    y = complex(z0)
    t_prev = 0.0
    out = [y]
    remaining = ts[1:]
    idx = 0
    steps = 0
    for t_next in knots[1:]:
        h = t_next - t_prev
        if h > 1e-15:
            k1 = field(t_prev, y)
            k2 = field(t_prev + 0.5 * h, y + 0.5 * h * k1)
            k3 = field(t_prev + 0.5 * h, y + 0.5 * h * k2)
            k4 = field(t_next, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            steps += 1
        t_prev = t_next
        while idx < len(remaining) and t_next >= remaining[idx] - 1e-12:
            out.append(y)
            idx += 1
        if idx == len(remaining) and t_next >= ts[-1] - 1e-12:
            break
    return Trajectory(times=np.asarray(ts), values=np.asarray(out),
                      frame="phi", config=None, stats={"steps": steps})


def example1_pathwise(z, k, path, t):
    """Exact pathwise solution of the solvable reference case.

    phi_t(z) = e^{-t} (z + integral_0^t e^s e^{ikB_s} ds), with the
    integral taken by trapezoid rule on the path grid (plus an
    interpolated partial cell when t falls inside one).
    """
    t = float(t)
    dt = path.dt
    B = path.values
    if t < 0.0 or t > path.duration + 1e-12:
        raise ValueError("t must lie within the path duration")
    n_full = min(int(t / dt + 1e-9), path.n_steps)
    grid = np.arange(n_full + 1) * dt
    g = np.exp(grid + 1j * float(k) * B[:n_full + 1])
    integral = 0.0 + 0.0j
    if n_full > 0:
        integral = np.sum((g[:-1] + g[1:])) * (0.5 * dt)
    t_rem = t - n_full * dt
    if t_rem > 1e-15:
        frac = t_rem / dt
        b_t = B[n_full] + (B[n_full + 1] - B[n_full]) * frac
        g_t = cmath.exp(t + 1j * float(k) * b_t)
        integral += 0.5 * t_rem * (g[-1] + g_t)
    return cmath.exp(-t) * (complex(z) + integral)


def mean_phi_example1(z, t, k):
    """Closed-form mean E phi_t(z) of the solvable reference case."""
    z = complex(z)
    t = float(t)
    if t < 0.0:
        raise ValueError("need t >= 0, got %r" % t)
    k2 = float(k) ** 2
    if abs(k2 - 2.0) <= 1e-12:
        return cmath.exp(-t) * (z + t)
    half = 0.5 * k2
    return cmath.exp(-t) * z + (math.exp(-t * half) - math.exp(-t)) / (1.0 - half)


# --------------------------------------------------------------------------
# Ito SDE for the rotating-frame process
# --------------------------------------------------------------------------

def evolve_psi_sde(spec, k, z0, path, scheme="milstein"):
    """Discretize the rotating-frame Ito SDE along one Brownian path.

    dPsi = -ik Psi dB + (-k^2/2 Psi + (Psi-1)^2 p(Psi)) dt.  The
    milstein scheme adds -k^2/2 Psi (dB^2 - dt), which is the exact
    second-order term for the linear multiplicative noise.  Steps that
    exit the closed disk are radially projected back to |Psi| =
    1 - 1e-12; the projection count lands in Trajectory.stats.

    Args:
        spec: Herglotz spec of the drift field.
        k: noise amplitude.
        z0: initial point, |z0| < 1.
        path: BrownianPath to discretize along.
        scheme: "euler" or "milstein".

    Returns:
        Trajectory in the psi frame sampled on the full path grid.
    """
    if abs(z0) >= 1.0:
        raise DomainError("need |z0| < 1, got %r" % abs(z0))
    if scheme not in ("euler", "milstein"):
        raise ValueError("scheme must be 'euler' or 'milstein', got %r" % scheme)
    k = float(k)
    dt = path.dt
    k2h = 0.5 * k * k
    psi = complex(z0)
    values = [psi]
    projections = 0
    for db in path.increments():
        drift = -k2h * psi + spec._bp_field(psi)
        step = drift * dt - 1j * k * psi * db
        if scheme == "milstein":
            step = step - k2h * psi * (db * db - dt)
        psi = psi + step
        r = abs(psi)
        if r >= 1.0:
            psi *= (1.0 - 1e-12) / r
            projections += 1
        values.append(psi)
    return Trajectory(times=path.time_grid(), values=np.asarray(values),
                      frame="psi", config=None,
                      stats={"steps": path.n_steps,
                             "projections": projections,
                             "scheme": scheme})


def _psi_sde_block(spec, k, psi0, increments, dt, scheme,
                   record_cols=None):
    """Vectorized SDE stepping for a block of paths.

    Args:
        psi0: initial state, scalar or array broadcastable against a
            path-indexed first axis.
        increments: (n_paths, n_steps) Brownian increments.
        record_cols: optional sorted list of step indices (1-based
            column counts) at which to snapshot the state.

    Returns:
        (final_state, snapshots dict col->state, projections)
    """
    k = float(k)
    k2h = 0.5 * k * k
    n_paths, n_steps = increments.shape
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim == 0:
        psi = np.full(n_paths, complex(psi0))
    else:
        if psi0.shape[0] != n_paths:
            raise ValueError("psi0 must have one row per path")
        psi = psi0.copy()
    snapshots = {}
    projections = 0
    for j in range(n_steps):
        db = increments[:, j]
        if psi.ndim == 2:
            db = db[:, None]
        drift = -k2h * psi + spec._bp_field(psi)
        step = drift * dt - 1j * k * psi * db
        if scheme == "milstein":
            step = step - k2h * psi * (db * db - dt)
        psi = psi + step
        r = np.abs(psi)
        mask = r >= 1.0
        if np.any(mask):
            projections += int(np.count_nonzero(mask))
            psi[mask] *= (1.0 - 1e-12) / r[mask]
        if record_cols is not None and (j + 1) in record_cols:
            snapshots[j + 1] = psi.copy()
    return psi, snapshots, projections


def _apply_f(f, arr):
    try:
        vals = np.asarray(f(arr), dtype=complex)
        if vals.shape == arr.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([f(v) for v in arr.ravel()],
                    dtype=complex).reshape(arr.shape)


def expectation_Tt(spec, k, t, z, f, n_samples, seed,
                   dt=1e-3, scheme="milstein"):
    """Monte Carlo estimate of (T_t f)(z) = E f(Psi_t(z)).

    Args:
        spec, k: field and noise amplitude.
        t: evolution time, >= 0.
        z: starting point in the open disk.
        f: complex function applied to the final state (vectorized or
            scalar; both are accepted).
        n_samples: number of independent paths, >= 2.
        seed: root seed; path j derives from derive_path_seed(seed, j).
        dt: target SDE step (adjusted so the grid lands exactly on t).
        scheme: SDE scheme, see evolve_psi_sde.

    Returns:
        McEstimate with the combined real+imaginary standard error.
    """
    n_samples = int(n_samples)
    if n_samples < 2:
        raise ValueError("need n_samples >= 2, got %r" % n_samples)
    t = float(t)
    if t < 0.0:
        raise ValueError("need t >= 0, got %r" % t)
    if t == 0.0:
        return McEstimate(mean=complex(f(complex(z))), std_error=0.0,
                          n_samples=n_samples)
    n_steps = max(1, round(t / dt))
    dt_used = t / n_steps
    sums = []
    sq_sums = []
    first = 0
    for m in _block_sizes(n_samples, n_steps):
        rows = _increment_rows(seed, first, m, dt_used, n_steps)
        psi, _, _ = _psi_sde_block(spec, k, complex(z), rows, dt_used, scheme)
        vals = _apply_f(f, psi)
        sums.append(complex(np.sum(vals)))
        sq_sums.append(float(np.sum(np.abs(vals) ** 2)))
        first += m
    total = _pairwise_sum(sums)
    total_sq = _pairwise_sum(sq_sums)
    mean = total / n_samples
    var = max(0.0, (total_sq - n_samples * abs(mean) ** 2) / (n_samples - 1))
    return McEstimate(mean=mean, std_error=math.sqrt(var / n_samples),
                      n_samples=n_samples)


def covariance_mc(t, k, n_samples, seed, dt=1e-3):
    """Monte Carlo estimates of the covariance components of the
    solvable reference case at the origin.

    Estimates e1 = E e^{-ikB_t}, e2 = E phi_t(0), e3 = E[phi_t(0)
    e^{-ikB_t}] and cov = e3 - e2*e1 from exact pathwise solutions on
    simulated paths (trapezoid at the path resolution).

    Returns:
        dict with keys "e1", "e2", "e3", "cov", each a McEstimate;
        the cov standard error combines the component errors linearly.
    """
    n_samples = int(n_samples)
    if n_samples < 2:
        raise ValueError("need n_samples >= 2, got %r" % n_samples)
    t = float(t)
    k = float(k)
    n_steps = max(1, round(t / dt))
    dt_used = t / n_steps
    grid = np.arange(n_steps + 1) * dt_used
    exp_grid = np.exp(grid)
    acc = {key: ([], []) for key in ("e1", "e2", "e3")}
    first = 0
    for m in _block_sizes(n_samples, n_steps):
        rows = _increment_rows(seed, first, m, dt_used, n_steps)
        B = np.concatenate([np.zeros((m, 1)), np.cumsum(rows, axis=1)], axis=1)
        g = exp_grid[None, :] * np.exp(1j * k * B)
        integral = 0.5 * dt_used * (g[:, :-1] + g[:, 1:]).sum(axis=1)
        phi = math.exp(-t) * integral
        zeta = np.exp(-1j * k * B[:, -1])
        for key, samples in (("e1", zeta), ("e2", phi), ("e3", phi * zeta)):
            sums, sqs = acc[key]
            sums.append(complex(np.sum(samples)))
            sqs.append(float(np.sum(np.abs(samples) ** 2)))
        first += m
    est = {}
    for key, (sums, sqs) in acc.items():
        mean = _pairwise_sum(sums) / n_samples
        var = max(0.0, (_pairwise_sum(sqs) - n_samples * abs(mean) ** 2)
                  / (n_samples - 1))
        est[key] = McEstimate(mean=mean, std_error=math.sqrt(var / n_samples),
                              n_samples=n_samples)
    cov = est["e3"].mean - est["e2"].mean * est["e1"].mean
    se = (est["e3"].std_error
          + abs(est["e1"].mean) * est["e2"].std_error
          + abs(est["e2"].mean) * est["e1"].std_error)
    est["cov"] = McEstimate(mean=cov, std_error=se, n_samples=n_samples)
    return est


# --------------------------------------------------------------------------
# generator algebra
# --------------------------------------------------------------------------

def apply_generator(spec, k, z, f, fprime=None, fsecond=None):
    """Apply the infinitesimal generator of T_t to f at z.

    A f(z) = (-k^2/2 z + (z-1)^2 p(z)) f'(z) - (k^2/2) z^2 f''(z).
    Derivatives default to central differences with h = 1e-5 (valid in
    any direction for analytic f); pass exact callables when the 1e-6
    scale FD noise matters.
    """
    z = complex(z)
    if abs(z) >= 1.0:
        raise DomainError("need |z| < 1, got %r" % abs(z))
    k = float(k)
    if fprime is not None:
        d1 = complex(fprime(z))
    else:
        h = 1e-5
        d1 = (complex(f(z + h)) - complex(f(z - h))) / (2.0 * h)
    if fsecond is not None:
        d2 = complex(fsecond(z))
    else:
        h = 1e-5
        d2 = (complex(f(z + h)) - 2.0 * complex(f(z))
              + complex(f(z - h))) / (h * h)
    drift = -0.5 * k * k * z + spec._bp_field(z)
    return drift * d1 - 0.5 * k * k * z * z * d2


def virasoro_coefficients(spec, k, N):
    """Ladder-operator expansion coefficients of the generator.

    With p(z) = sum a_n z^n, the generator acts as
    A = sum_{n=-1}^{N} c_n L_n - (k^2/2) L_0^2 where
    c_n = -(a_{n+1} - 2 a_n + a_{n-1}) and a_{-1} = a_{-2} = 0.

    Returns:
        (c, l0_squared) where c is a dict keyed by n in -1..N.
    """
    N = int(N)
    if N < -1:
        raise ValueError("need N >= -1")
    a = taylor_coefficients(spec, N + 1)

    def coeff(m):
        return a[m] if m >= 0 else 0.0

    c = {}
    for n in range(-1, N + 1):
        c[n] = -(coeff(n + 1) - 2.0 * coeff(n) + coeff(n - 1))
    return c, 0.5 * float(k) ** 2


def find_stochastic_zero(spec, k):
    """Zero of the SDE drift -k^2/2 z + (z-1)^2 p(z) in the open disk.

    Same two-phase search as the deterministic fixed-point finder: a
    contraction-style iteration of the inverse of (k^2/2) z/(1-z)^2
    composed with p, then Newton from a 5x8 polar grid.  Unlike the
    deterministic case the zero always exists, so failure raises.
    """
    k = float(k)
    if k == 0.0:
        raise ValueError("need k != 0")
    k2h = 0.5 * k * k

    def drift(z):
        return -k2h * z + spec._bp_field(z)

    def accept(z):
        return abs(z) < 1.0 - 1e-9 and abs(drift(z)) <= 1e-11

    def inv_kappa(w):
        s = cmath.sqrt(4.0 * w / k2h + 1.0)
        return (s - 1.0) / (s + 1.0)

    z = 0.0 + 0.0j
    try:
        for _ in range(300):
            z_next = inv_kappa(spec._value(z))
            if not cmath.isfinite(z_next):
                break
            if abs(z_next - z) < 1e-15:
                z = z_next
                break
            z = z_next
        if accept(z):
            return complex(z)
    except (ZeroDivisionError, OverflowError):
        pass

    h = 1e-7
    for r in (0.15, 0.35, 0.55, 0.75, 0.9):
        for j in range(8):
            z = r * cmath.exp(2j * math.pi * (j + 0.5) / 8.0)
            try:
                for _ in range(60):
                    g = drift(z)
                    if abs(g) <= 1e-13:
                        break
                    dg = (drift(z + h) - drift(z - h)) / (2.0 * h)
                    if dg == 0.0:
                        break
                    z_next = z - g / dg
                    if not cmath.isfinite(z_next) or abs(z_next) > 2.0:
                        break
                    if abs(z_next - z) < 1e-15:
                        z = z_next
                        break
                    z = z_next
            except (ZeroDivisionError, OverflowError):
                continue
            if accept(z):
                return complex(z)
    raise ZeroNotFoundError("no interior drift zero found for %s at k=%r"
                            % (spec.text_form(), k))


# --------------------------------------------------------------------------
# moment hierarchy and covariance
# --------------------------------------------------------------------------

def solve_moment_hierarchy(spec, k, z, t_end, M, truncation, closure="zero",
                           sample_times=None):
    """Integrate the coupled moment system for mu_m(t) = E Psi_t(z)^m.

    d mu_m/dt = a_0 m mu_{m-1} + (a_1 - 2a_0 - m k^2/2) m mu_m
                + sum_{n>=1} (a_{n-1} - 2a_n + a_{n+1}) m mu_{m+n},
    with mu_0 = 1, cut at order ``truncation``.  closure="zero" drops
    moments above the cut; "frozen" holds them at their initial values
    z^j (tail coefficients through order truncation+1).

    Returns:
        MomentTable with orders 1..M.
    """
    M = int(M)
    truncation = int(truncation)
    if M < 1:
        raise ValueError("need M >= 1")
    if truncation < M:
        raise ValueError("truncation must be >= M (got %r < %r)"
                         % (truncation, M))
    z = complex(z)
    if abs(z) > 1.0:
        raise DomainError("need |z| <= 1, got %r" % abs(z))
    t_end = float(t_end)
    if t_end < 0.0:
        raise ValueError("need t_end >= 0")
    k = float(k)
    a = taylor_coefficients(spec, truncation + 1)
    d = [0.0] + [a[n - 1] - 2.0 * a[n] + a[n + 1] for n in range(1, truncation + 1)]

    T = truncation
    L = np.zeros((T, T), dtype=complex)
    const = np.zeros(T, dtype=complex)
    frozen_tail = np.zeros(T, dtype=complex)
    for m in range(1, T + 1):
        i = m - 1
        if m == 1:
            const[i] += a[0] * m
        else:
            L[i, i - 1] += a[0] * m
        L[i, i] += (a[1] - 2.0 * a[0] - 0.5 * m * k * k) * m
        for n in range(1, T - m + 1):
            L[i, i + n] += d[n] * m
        if closure == "frozen":
            for n in range(T - m + 1, T + 1):
                frozen_tail[i] += d[n] * m * z ** (m + n)
    const = const + frozen_tail

    def field(t, y):
        return L @ y + const

    if sample_times is None:
        count = 65 if t_end > 0.0 else 1
        sample_times = np.linspace(0.0, t_end, count)
    ts = _normalize_sample_times(sample_times, t_end)
    y0 = np.array([z ** m for m in range(1, T + 1)], dtype=complex)
    if t_end == 0.0 or len(ts) == 1:
        rows = [y0]
    else:
        cfg = EvolutionConfig(k=k, t_end=t_end, dt=min(0.01, t_end),
                              rtol=1e-10, atol=1e-12)
        rows, _ = _integrate(field, y0, ts, cfg, contain=False)
    values = np.array(rows)[:, :M]
    return MomentTable(orders=tuple(range(1, M + 1)),
                       times=np.asarray(ts), values=values,
                       truncation=truncation, closure=closure)


def covariance_reference(t, k):
    """Closed-form covariance components of the solvable reference case.

    e1 = E e^{-ikB_t}, e2 = E phi_t(0), e3 = E[phi_t(0) e^{-ikB_t}],
    cov = Cov(phi_t(0), e^{-ikB_t}) = e3 - e2 e1, with the k^2 = 2
    degeneracy handled as the continuous limit of the general branch.
    """
    t = float(t)
    if t < 0.0:
        raise ValueError("need t >= 0, got %r" % t)
    k2 = float(k) ** 2
    e1 = math.exp(-0.5 * k2 * t)
    e2 = complex(mean_phi_example1(0.0, t, k)).real
    half = 0.5 * k2
    e3 = (1.0 - math.exp(-(1.0 + half) * t)) / (1.0 + half)
    if abs(k2 - 2.0) <= 1e-12:
        cov = 0.5 * (1.0 - math.exp(-2.0 * t) * (2.0 * t + 1.0))
    else:
        cov = e3 - e1 * e2
    return CovarianceReference(e1=e1, e2=e2, e3=complex(e3), cov=complex(cov))


# --------------------------------------------------------------------------
# polar decomposition: radial bounds and the circle diffusion
# --------------------------------------------------------------------------

def radial_solution(A, B, k, r0, path, theta_traj):
    """Radial part of the automorphism-driven polar system.

    Given the angular trajectory theta_s (from the coupled polar
    system) on the same grid as the path, the radius solves

        r(t) = tanh(|p0| I(t) + artanh r0),
        I(t) = integral_0^t cos(theta_s - k B_s - arg p0) ds,

    with p0 = A + iB, by trapezoid on the shared grid; r0 = 1 stays 1.
    """
    r0 = float(r0)
    if not 0.0 <= r0 <= 1.0:
        raise DomainError("need r0 in [0, 1], got %r" % r0)
    theta = np.asarray(theta_traj, dtype=float)
    if theta.shape != path.values.shape:
        raise ValueError("theta_traj must share the path grid")
    if r0 == 1.0:
        return np.ones_like(theta)
    p0 = complex(float(A), float(B))
    amp = abs(p0)
    alpha = cmath.phase(p0)
    integrand = np.cos(theta - float(k) * path.values - alpha)
    cum = np.empty_like(integrand)
    cum[0] = 0.0
    np.cumsum(0.5 * path.dt * (integrand[:-1] + integrand[1:]), out=cum[1:])
    return np.tanh(amp * cum + math.atanh(r0))


_GROWTH_IDS = ("cayley", "cayley-linear", "one")


def growth_bounds(spec_id, r0, t):
    """Deterministic radial envelope for |phi_t| along any path.

    The three covered specs admit explicit bounds; the upper bound is
    the k=0 radial solution, the lower bound its time reversal, clamped
    at 0.
    """
    if spec_id not in _GROWTH_IDS:
        raise ValueError("spec_id must be one of %r, got %r"
                         % (_GROWTH_IDS, spec_id))
    r0 = float(r0)
    if not 0.0 <= r0 <= 1.0:
        raise DomainError("need r0 in [0, 1], got %r" % r0)
    t = float(t)
    if t < 0.0:
        raise ValueError("need t >= 0, got %r" % t)
    if t == 0.0:
        return r0, r0
    if spec_id == "cayley":
        if r0 == 1.0:
            return 1.0, 1.0
        base = math.atanh(r0)
        return max(0.0, math.tanh(base - t)), math.tanh(base + t)
    if spec_id == "cayley-linear":
        decay = math.exp(-t)
        spread = 1.0 - decay
        return max(0.0, r0 * decay - spread), r0 * decay + spread
    upper = (r0 * (1.0 - t) + t) / (1.0 + t * (1.0 - r0))
    lower = (r0 * (1.0 - t) - t) / (1.0 + t * (1.0 + r0))
    return max(0.0, lower), upper


def simulate_boundary_diffusion(A, B, k, theta0, path):
    """Euler-Maruyama for the circle diffusion induced on the boundary.

    d Theta = -2 (Im p0 + |p0| sin Theta) dt - k dB with p0 = A + iB;
    A=1, B=0 is the noisy North-South flow d Theta = -2 sin Theta dt
    - k dB.  Values are reduced mod 2 pi for reporting.
    """
    A = float(A)
    B = float(B)
    if A == 0.0 and B == 0.0:
        raise ValueError("need (A, B) != (0, 0)")
    if A < 0.0:
        raise ValueError("need A >= 0, got %r" % A)
    amp = math.hypot(A, B)
    theta = float(theta0)
    dt = path.dt
    out = np.empty(path.n_steps + 1)
    out[0] = theta % (2.0 * math.pi)
    for j, db in enumerate(path.increments()):
        theta = theta - 2.0 * (B + amp * math.sin(theta)) * dt - float(k) * db
        out[j + 1] = theta % (2.0 * math.pi)
    return out


def generator_annihilator(A, B, k, theta, c1, c2):
    """Annihilating function of the circle diffusion's generator.

    f(theta) = c1 + c2 * integral_0^theta exp(4 (s Im p0 - |p0| cos s)
    / k^2) ds, by adaptive quadrature.  Array input is evaluated by
    cumulative per-segment quadrature in sorted order with compensated
    summation, so finite differences of neighboring outputs see
    quadrature noise near machine precision rather than independent
    1e-10 relative errors.
    """
    k = float(k)
    if k == 0.0:
        raise ValueError("need k != 0")
    A = float(A)
    B = float(B)
    amp = math.hypot(A, B)
    scale = 4.0 / (k * k)

    def w(s):
        return math.exp(scale * (s * B - amp * math.cos(s)))

    c1 = complex(c1)
    c2 = complex(c2)
    if np.ndim(theta) == 0:
        if c2 == 0.0:
            return c1
        seg, _ = quad(w, 0.0, float(theta), epsabs=1e-13, epsrel=1e-11,
                      limit=500)
        return c1 + c2 * seg

    thetas = np.asarray(theta, dtype=float)
    out = np.empty(thetas.shape, dtype=complex)
    if c2 == 0.0:
        out[...] = c1
        return out
    flat = thetas.ravel()
    order = np.argsort(flat, kind="stable")
    acc = c1
    comp = 0.0 + 0.0j
    prev = 0.0
    flat_out = np.empty(len(flat), dtype=complex)
    for idx in order:
        th = float(flat[idx])
        if th != prev:
            seg, _ = quad(w, prev, th, epsabs=1e-13, epsrel=1e-11, limit=500)
            term = c2 * seg
            y = term - comp
            t_new = acc + y
            comp = (t_new - acc) - y
            acc = t_new
            prev = th
        flat_out[idx] = acc
    out.ravel()[:] = flat_out
    return out


# --------------------------------------------------------------------------
# backward equation
# --------------------------------------------------------------------------

def backward_equation_residual(spec, k, f, t, z, n_samples, seed=0,
                               dt=1e-3, h=1e-2, fit_points=16,
                               fit_radius=None):
    """Monte Carlo residual of d/dt u = A u for u(t,z) = E f(Psi_t(z)).

    The time derivative is a central difference (u(t+h) - u(t-h))/2h
    with both values read off the same paths (common random numbers);
    A u comes from Cauchy-integral derivatives of u(t, .) sampled on a
    small circle around z, again on shared paths.  The estimate is
    split into 8 batches to produce an honest error bar for the whole
    pipeline.

    Returns:
        (residual, std_error): |d_t u - A u| and the combined standard
        error of the underlying complex batch means.
    """
    z = complex(z)
    if abs(z) >= 1.0:
        raise DomainError("need |z| < 1, got %r" % abs(z))
    t = float(t)
    h = float(h)
    if t < h:
        raise ValueError("need t >= h for the central difference "
                         "(got t=%r, h=%r)" % (t, h))
    n_samples = int(n_samples)
    n_batches = 8
    if n_samples < 2 * n_batches:
        raise ValueError("need n_samples >= %d" % (2 * n_batches))
    k = float(k)

    n_plus = max(2, round((t + h) / dt))
    dt_used = (t + h) / n_plus
    col_minus = round((t - h) / dt_used)
    col_mid = round(t / dt_used)
    if not (0 < col_minus < col_mid < n_plus):
        raise ValueError("t and h must be resolvable on the dt grid")

    if fit_radius is None:
        fit_radius = 0.15 * (1.0 - abs(z))
    P = int(fit_points)
    angles = 2.0 * math.pi * np.arange(P) / P
    circle = z + fit_radius * np.exp(1j * angles)

    drift_z = -0.5 * k * k * z + spec._bp_field(z)
    per_batch = n_samples // n_batches
    residuals = []
    for b in range(n_batches):
        first = b * per_batch
        m = per_batch
        rows = _increment_rows(seed, first, m, dt_used, n_plus)
        # point ensemble: record f(Psi) at t-h and t+h on shared paths
        psi, snaps, _ = _psi_sde_block(spec, k, complex(z), rows, dt_used,
                                       "milstein",
                                       record_cols={col_minus})
        u_plus = complex(np.mean(_apply_f(f, psi)))
        u_minus = complex(np.mean(_apply_f(f, snaps[col_minus])))
        # circle ensemble to time t on the same increments
        psi0 = np.broadcast_to(circle, (m, P)).copy()
        psi_c, _, _ = _psi_sde_block(spec, k, psi0, rows[:, :col_mid],
                                     dt_used, "milstein")
        u_circle = np.mean(_apply_f(f, psi_c), axis=0)
        c1 = complex(np.mean(u_circle * np.exp(-1j * angles))) / fit_radius
        c2 = complex(np.mean(u_circle * np.exp(-2j * angles))) / fit_radius ** 2
        au = drift_z * c1 - 0.5 * k * k * z * z * (2.0 * c2)
        du = (u_plus - u_minus) / (2.0 * h)
        residuals.append(du - au)
    res = np.asarray(residuals)
    mean = complex(np.mean(res))
    var = (np.var(res.real, ddof=1) + np.var(res.imag, ddof=1)) / n_batches
    return abs(mean), math.sqrt(var)
