"""Acceptance checks, shared by ``slowfast-escape verify`` and the test suite.

Each check returns a ``CriterionResult``; a check passes only if its numerical condition
holds and it finishes within its time budget.
"""
from __future__ import annotations

import contextlib
import io
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import analysis, path, sde
from .manifold import asymmetric, compare_duffing_reference, duffing, solve_center_manifold


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        return (f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.title}: "
                f"{self.detail} ({self.seconds:.2f} s, budget {self.budget:g} s)")


def _timed(number: int, title: str, budget: float):
    def wrap(fn):
        def run(**kw) -> CriterionResult:
            t0 = time.perf_counter()
            try:
                ok, detail = fn(**kw)
            except Exception as exc:  # a crash is a failure, reported verbatim
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            dt = time.perf_counter() - t0
            if dt > budget:
                ok, detail = False, f"{detail}; over time budget"
            return CriterionResult(number, title, ok, detail, dt, budget)
        run.number = number
        return run
    return wrap


def _cli(argv) -> tuple[int, str]:
    from .cli import main
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


@_timed(1, "center-manifold golden test", 1.0)
def criterion_1(**_):
    code, text = _cli(["derive", "--model", "duffing", "--grade", "5"])
    comps = compare_duffing_reference(solve_center_manifold(duffing(), 5))
    exact = all(c.exact for c in comps)
    printed = text.count("all published coefficients reproduced exactly") == 2
    return (code == 0 and exact and printed,
            f"exit {code}, every published h/k coefficient equal: {exact}")


@_timed(2, "singular actions", 1.0)
def criterion_2(**_):
    d = path.singular_action(duffing(), -1, 0)
    a = path.singular_action(asymmetric(), -1, 0)
    return (d == Fraction(1, 2) and a == Fraction(5, 6), f"Duffing {d}, asymmetric {a}")


@_timed(3, "action e^2 coefficient", 30.0)
def criterion_3(**_):
    grid = (0.02, 0.05, 0.1, 0.15, 0.2)
    cd = path.eps2_coefficient(duffing(), eps_grid=grid)
    ca = path.eps2_coefficient(asymmetric(), eps_grid=grid)
    target = -13 / 12
    ok = abs(cd + 0.25) <= 0.02 and abs(ca - target) <= 0.05 * abs(target)
    return ok, f"Duffing {cd:.5f} (-0.25 +- 0.02), asymmetric {ca:.5f} (-1.0833 +- 5%)"


TABLE1_TARGET = (10.86, 10.86, 10.86, 10.80, 10.64, 9.500, 5.428)


def within_4_sig(value: float, published: float) -> bool:
    """``value`` agrees with ``published`` to within one unit of its 4th significant figure."""
    unit = 10.0 ** (math.floor(math.log10(abs(published))) - 3)
    return abs(value - published) < unit


@_timed(4, "Table I prediction column", 1.0)
def criterion_4(**_):
    preds = [100 * analysis.predict_cs(0.5 - e * e / 4) for e in analysis.TABLE1_EPS]
    ok = all(within_4_sig(p, t) for p, t in zip(preds, TABLE1_TARGET))
    return ok, "predicted x100: " + ", ".join(f"{p:.5g}" for p in preds)


@_timed(5, "Monte Carlo slope at e = 0.1", 600.0)
def criterion_5(workers=None, seed=0, **_):
    cfg = sde.IntegratorConfig(step=1e-2)
    pts = []
    for inv_d in (15, 18, 21, 24, 27):
        model = duffing(epsilon=0.1, noise_D=1.0 / inv_d)
        ens = sde.run_ensemble(model, cfg, 200, seed, workers=workers)
        pts.append((inv_d, math.log10(ens.mean_T)))
    fit = analysis.fit_scaling(pts)
    ok = abs(fit.slope - 0.1080) <= 0.15 * 0.1080
    return ok, f"C_S = {fit.slope:.5f} +- {fit.slope_stderr:.5f} (target 0.1080 +- 15%)"


@_timed(6, "stiffness demonstration", 1.0)
def criterion_6(**_):
    drift = sde.Drift((0.0,), epsilon=0.01, noise_D=0.0)
    nu = 0.03  # nu / eps = 3
    try:
        sde.integrate(drift, sde.IntegratorConfig(step=nu, scheme=sde.EXPLICIT), 2000, (0.0, 1.0))
        blew = False
    except sde.StiffnessBlowup as exc:
        blew, where = True, exc.step
    traj = sde.integrate(drift, sde.IntegratorConfig(step=nu), 2000, (0.0, 1.0))
    contracting = bool(np.all(np.abs(np.diff(np.abs(traj[:, 1]))) >= 0)
                       and abs(traj[-1, 1]) < 1e-12)
    detail = (f"explicit blew up at step {where}" if blew else "explicit stayed bounded")
    return blew and contracting, f"{detail}; implicit |y| -> {abs(traj[-1, 1]):.1e}"


@_timed(7, "Hamiltonian conservation at e = 1e-3", 10.0)
def criterion_7(**_):
    sol = path.full_system_crosscheck(duffing(), 1e-3)
    dy, dl = sol.extras["max_y_dev"], sol.extras["max_l2_dev"]
    ok = sol.hamiltonian_drift < 1e-6 and dy < 1e-4 and dl < 1e-4
    return ok, f"max |H| {sol.hamiltonian_drift:.1e}, max |y-h| {dy:.1e}, max |l2-k| {dl:.1e}"


@_timed(8, "exponential escape statistics", 300.0)
def criterion_8(workers=None, seed=0, **_):
    ens = sde.run_ensemble(duffing(epsilon=0.1, noise_D=1 / 20), sde.IntegratorConfig(), 500,
                           seed, workers=workers)
    return 0.5 <= ens.cv <= 1.5, f"std/mean = {ens.cv:.3f} over {ens.escaped} escapes"


@_timed(9, "determinism across worker counts", 60.0)
def criterion_9(seed=0, **_):
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for w in (1, 2, 3):
            target = os.path.join(tmp, f"w{w}.csv")
            code, _ = _cli(["simulate", "--model", "duffing", "--eps", "0.1", "--invD", "15",
                            "--trials", "16", "--seed", str(seed), "--workers", str(w),
                            "-o", target])
            with open(target, "rb") as fh:
                outputs.append((code, fh.read()))
    same = all(o == outputs[0] for o in outputs) and outputs[0][0] == 0
    return same, f"workers 1/2/3 byte-identical: {same}"


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9)


def run(only=None, workers=None, seed=0, stream=None) -> list[CriterionResult]:
    stream = sys.stdout if stream is None else stream
    results = []
    for check in CRITERIA:
        if only and check.number not in only:
            continue
        res = check(workers=workers, seed=seed)
        print(res.line(), file=stream, flush=True)
        results.append(res)
    return results
