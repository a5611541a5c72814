"""Stochastic integration of ``x' = y + eta``, ``eps y' = f(x) - y`` and escape-time ensembles.

Both schemes add the noise ``sqrt(2 D nu) W`` to the slow variable only. The implicit scheme
is drift-implicit Euler-Maruyama (for additive noise the first-order Milstein correction
vanishes): the drift is taken at the new time level and the 2x2 Newton system is inverted
in closed form.

Every trial owns a Philox stream whose 64-bit seed is derived from ``(master_seed, i)``
through ``numpy.random.SeedSequence``; results are reduced in trial order, so an ensemble is
bit-identical for any number of workers.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .manifold import SlowFastModel

IMPLICIT = "implicit"
EXPLICIT = "explicit"
BLOWUP_LIMIT = 1e150
DEFAULT_T_MAX = 1e7
WORKERS_ENV = "SLOWFAST_WORKERS"
_BLOCK = 1 << 15

# kernel status codes
_RUNNING, _ESCAPED, _NEWTON_FAIL, _BLOWUP, _TIMEOUT = range(5)


class StiffnessBlowup(FloatingPointError):
    """The explicit scheme produced a non-finite or astronomically large state."""

    def __init__(self, step: int, state):
        super().__init__(f"explicit scheme blew up at step {step} (state {tuple(state)})")
        self.step = step
        self.state = tuple(state)


class NewtonDiverged(ArithmeticError):
    def __init__(self, iterations: int, residual: float, step: int | None = None):
        where = "" if step is None else f" at step {step}"
        super().__init__(f"Newton did not converge{where}: residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.iterations = iterations
        self.residual = residual
        self.step = step


class EnsembleFailed(RuntimeError):
    """Every trial of an ensemble raised."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings. ``overshoot`` moves the escape threshold past the
    saddle (0 means the first saddle crossing counts)."""

    step: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    scheme: str = IMPLICIT
    overshoot: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iters < 1:
            raise ValueError(f"newton_max_iters must be >= 1, got {self.newton_max_iters}")
        if self.scheme not in (IMPLICIT, EXPLICIT):
            raise ValueError(f"scheme must be {IMPLICIT!r} or {EXPLICIT!r}, got {self.scheme!r}")
        if self.overshoot < 0:
            raise ValueError(f"overshoot must be nonnegative, got {self.overshoot}")


@dataclass(frozen=True)
class Drift:
    """Numeric snapshot of the stochastic system: ascending coefficients of ``f``, ``eps``, ``D``.

    Unlike ``SlowFastModel`` it accepts any polynomial, e.g. ``f = 0`` for the linear test.
    """

    coeffs: tuple[float, ...]
    epsilon: float
    noise_D: float

    @classmethod
    def of(cls, model) -> "Drift":
        if isinstance(model, Drift):
            return model
        return cls(tuple(float(c) for c in model.f_coeffs), model.epsilon, model.noise_D)

    def arrays(self):
        c = np.array(self.coeffs or (0.0,), dtype=float)
        dc = c[1:] * np.arange(1, c.size) if c.size > 1 else np.zeros(1)
        return c, dc


@dataclass(frozen=True)
class EscapeTrial:
    """One escape attempt. ``first_passage_time`` is None on timeout or error."""

    seed: int
    first_passage_time: float | None
    steps_taken: int
    max_newton_iters: int = 0
    error: str | None = None

    @property
    def timed_out(self) -> bool:
        return self.first_passage_time is None and self.error is None


@dataclass
class EscapeEnsemble:
    trials: list[EscapeTrial]
    model: SlowFastModel
    config: IntegratorConfig
    master_seed: int
    t_max: float
    mean_T: float = float("nan")
    std_T: float = float("nan")
    timeout_count: int = 0
    error_count: int = 0
    escaped: int = field(init=False, default=0)

    def __post_init__(self):
        times = self.times
        self.escaped = times.size
        self.timeout_count = sum(t.timed_out for t in self.trials)
        self.error_count = sum(t.error is not None for t in self.trials)
        if times.size:
            self.mean_T = float(times.mean())
            self.std_T = float(times.std(ddof=1)) if times.size > 1 else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([t.first_passage_time for t in self.trials
                         if t.first_passage_time is not None], dtype=float)

    @property
    def timeout_flagged(self) -> bool:
        return self.timeout_count > 0.01 * len(self.trials)

    @property
    def cv(self) -> float:
        return self.std_T / self.mean_T


# -- numba kernels --------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _horner(c, x):
    acc = 0.0
    for n in range(c.size - 1, -1, -1):
        acc = acc * x + c[n]
    return acc


@numba.njit(cache=True, nogil=True)
def _implicit_update(x, y, kick, c, dc, r, nu, tol, maxit):
    """Solve ``X = x + nu Y + kick``, ``Y = y + r (f(X) - Y)`` with ``r = nu/eps``.

    Returns the new state, the iterations used and the final residual (max norm).
    The initial guess is the noisy old state; each iteration is one Newton update.
    """
    X = x + kick
    Y = y
    res = np.inf
    for it in range(1, maxit + 1):
        F1 = X - x - nu * Y - kick
        F2 = Y - y - r * (_horner(c, X) - Y)
        a = -r * _horner(dc, X)
        b = 1.0 + r
        det = b + nu * a  # det of [[1, -nu], [a, b]]
        dX = (b * F1 + nu * F2) / det
        dY = (F2 - a * F1) / det
        X -= dX
        Y -= dY
        F1 = X - x - nu * Y - kick
        F2 = Y - y - r * (_horner(c, X) - Y)
        res = max(abs(F1), abs(F2))
        if res < tol:
            return X, Y, it, res
    return X, Y, -maxit, res


@numba.njit(cache=True, nogil=True)
def _run_block(x, y, noise, c, dc, eps, nu, amp, tol, maxit, implicit,
               threshold, direction, steps_done, max_steps):
    """Advance through one block of standard normals.

    Returns (status, x, y, steps_done, max_iters, last_residual).
    """
    r = nu / eps
    worst = 0
    for n in range(noise.size):
        if steps_done >= max_steps:
            return _TIMEOUT, x, y, steps_done, worst, 0.0
        kick = amp * noise[n]
        if implicit:
            x, y, it, res = _implicit_update(x, y, kick, c, dc, r, nu, tol, maxit)
            steps_done += 1
            if it < 0:
                return _NEWTON_FAIL, x, y, steps_done, maxit, res
            if it > worst:
                worst = it
        else:
            x, y = x + nu * y + kick, y + r * (_horner(c, x) - y)
            steps_done += 1
            if not (abs(x) < 1e150 and abs(y) < 1e150):
                return _BLOWUP, x, y, steps_done, 0, 0.0
        if direction * (x - threshold) >= 0.0:
            return _ESCAPED, x, y, steps_done, worst, 0.0
    return _RUNNING, x, y, steps_done, worst, 0.0


# -- single steps ------------------------------------------------------------------------

def _check_scheme(config: IntegratorConfig, scheme: str) -> None:
    if config.scheme != scheme:
        raise ValueError(f"{scheme}_step called with a {config.scheme} configuration")


def explicit_step(state, model, config: IntegratorConfig, noise_draw: float = 0.0,
                  step_index: int = 0):
    """One Euler-Maruyama step with the drift at the old state."""
    _check_scheme(config, EXPLICIT)
    d = Drift.of(model)
    c, _ = d.arrays()
    x, y = map(float, state)
    nu = config.step
    amp = math.sqrt(2.0 * d.noise_D * nu)
    with np.errstate(over="ignore", invalid="ignore"):
        new = (x + nu * y + amp * noise_draw, y + nu / d.epsilon * (_horner(c, x) - y))
    if not all(math.isfinite(v) and abs(v) < BLOWUP_LIMIT for v in new):
        raise StiffnessBlowup(step_index, new)
    return new


def implicit_step(state, model, config: IntegratorConfig, noise_draw: float = 0.0,
                  step_index: int | None = None, return_info: bool = False):
    """One drift-implicit step. With ``return_info`` also returns (iterations, residual)."""
    _check_scheme(config, IMPLICIT)
    d = Drift.of(model)
    c, dc = d.arrays()
    x, y = map(float, state)
    nu = config.step
    kick = math.sqrt(2.0 * d.noise_D * nu) * noise_draw
    X, Y, it, res = _implicit_update(x, y, kick, c, dc, nu / d.epsilon, nu,
                                     config.newton_tol, config.newton_max_iters)
    if it < 0:
        raise NewtonDiverged(-it, res, step_index)
    return ((X, Y), (it, res)) if return_info else (X, Y)


def integrate(model, config: IntegratorConfig, n_steps: int, state0=(0.0, 0.0),
              seed: int | None = None, noise=None) -> np.ndarray:
    """Trajectory of ``n_steps`` steps as an ``(n_steps + 1, 2)`` array.

    Noise is read from ``noise`` if given, else drawn from Philox(seed), else zero.
    """
    if noise is None:
        noise = (np.zeros(n_steps) if seed is None
                 else np.random.Generator(np.random.Philox(seed)).standard_normal(n_steps))
    step = implicit_step if config.scheme == IMPLICIT else explicit_step
    out = np.empty((n_steps + 1, 2))
    out[0] = state0
    for n in range(n_steps):
        out[n + 1] = step(out[n], model, config, float(noise[n]), n + 1)
    return out


# -- escape trials ---------------------------------------------------------------------

def trial_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index``, split off ``master_seed`` by SeedSequence."""
    words = np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1, np.uint64)
    return int(words[0])


def _resolve_endpoints(model: SlowFastModel, start_sink, crossing):
    sink = Fraction(model.sinks[0] if start_sink is None else start_sink)
    saddle = model.adjacent_saddle(sink) if crossing is None else Fraction(crossing)
    model.check_adjacent(sink, saddle)
    return float(sink), float(saddle)


def run_escape_trial(model: SlowFastModel, config: IntegratorConfig, seed: int,
                     start_sink=None, crossing=None, t_max: float = DEFAULT_T_MAX) -> EscapeTrial:
    """Start at ``(x*, 0)`` and step until ``x`` first reaches the saddle (plus overshoot)."""
    if not t_max > 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    xs, xk = _resolve_endpoints(model, start_sink, crossing)
    direction = math.copysign(1.0, xk - xs)
    threshold = xk + direction * config.overshoot
    d = Drift.of(model)
    c, dc = d.arrays()
    nu = config.step
    amp = math.sqrt(2.0 * d.noise_D * nu)
    max_steps = int(math.floor(t_max / nu * (1 + 1e-12)))
    rng = np.random.Generator(np.random.Philox(seed))
    x, y, done, worst = xs, 0.0, 0, 0
    implicit = config.scheme == IMPLICIT
    while True:
        noise = rng.standard_normal(_BLOCK)
        status, x, y, done, w, res = _run_block(
            x, y, noise, c, dc, d.epsilon, nu, amp, config.newton_tol, config.newton_max_iters,
            implicit, threshold, direction, done, max_steps)
        worst = max(worst, w)
        if status == _ESCAPED:
            return EscapeTrial(seed, done * nu, done, worst)
        if status == _TIMEOUT:
            return EscapeTrial(seed, None, done, worst)
        if status == _NEWTON_FAIL:
            raise NewtonDiverged(config.newton_max_iters, res, done)
        if status == _BLOWUP:
            raise StiffnessBlowup(done, (x, y))


def resolve_workers(workers: int | None = None) -> int:
    """Explicit value, else the environment override, else the machine's CPU count."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def run_ensemble(model: SlowFastModel, config: IntegratorConfig, n_trials: int,
                 master_seed: int, t_max: float = DEFAULT_T_MAX, workers: int | None = None,
                 start_sink=None, crossing=None) -> EscapeEnsemble:
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    _resolve_endpoints(model, start_sink, crossing)
    seeds = [trial_seed(master_seed, i) for i in range(n_trials)]

    def one(seed: int) -> EscapeTrial:
        try:
            return run_escape_trial(model, config, seed, start_sink, crossing, t_max)
        except (NewtonDiverged, StiffnessBlowup) as exc:
            return EscapeTrial(seed, None, getattr(exc, "step", 0) or 0, error=str(exc))

    n = resolve_workers(workers)
    if n == 1:
        trials = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            trials = list(pool.map(one, seeds))
    if all(t.error is not None for t in trials):
        raise EnsembleFailed(f"all {n_trials} trials failed; first error: {trials[0].error}")
    ens = EscapeEnsemble(trials, model, config, master_seed, t_max)
    if ens.timeout_flagged:
        warnings.warn(f"{ens.timeout_count} of {n_trials} trials timed out at t_max = {t_max}",
                      RuntimeWarning, stacklevel=2)
    return ens
