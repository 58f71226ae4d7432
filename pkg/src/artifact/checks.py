"""Closed-form check battery: no simulation, a few seconds in total."""

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .analytic import (AdoptionGameSpec, coupling_r, excess_sensitivity, hysteresis_loop,
                       multiplier_m)
from .core import effective_lambda
from .params import unit_params


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_multiplier_identity():
    m15, m35 = multiplier_m(0.15), multiplier_m(0.35)
    ok = round(m15, 4) == 1.1765 and round(m35, 4) == 1.5385
    return CheckResult("multiplier identity", ok, f"M(0.15)={m15:.6f}, M(0.35)={m35:.6f}")


def check_beta_nullification(rho=0.6, n=50):
    p = unit_params(beta=0.0)
    rs = [coupling_r(phi, rho, 0.0, p) for phi in np.linspace(0.0, 1.0, n)]
    ms = [multiplier_m(r) for r in rs]
    ok = all(r == 0.0 for r in rs) and all(m == 1.0 for m in ms)
    return CheckResult("beta = 0 nullification", ok, f"max |r| = {max(map(abs, rs)):.3g}, "
                       f"max |M - 1| = {max(abs(m - 1) for m in ms):.3g} on {n} points")


def second_differences(f, xs, h):
    return np.array([f(x + h) - 2.0 * f(x) + f(x - h) for x in xs])


def check_convexity(rho=0.6, beta=0.3, h=1e-4, n=50):
    """Undivided second differences of r(phi) with endogenous and frozen lambda'."""
    p = unit_params()
    xs = np.linspace(0.05, 0.9, n)
    endo = lambda x: coupling_r(x, rho, beta, p)
    d_endo = second_differences(endo, xs, h)
    d_half = second_differences(endo, xs, h / 2)
    rich = np.abs((d_endo / h ** 2) / (d_half / (h / 2) ** 2) - 1.0)
    d_frozen = []
    for x in xs:
        lam = effective_lambda(x, rho, beta, p)
        frz = lambda y, lam=lam: y * rho * beta / lam
        d_frozen.append(frz(x + h) - 2.0 * frz(x) + frz(x - h))
    d_frozen = np.abs(d_frozen)
    ok = bool(np.all(d_endo > 0) and np.all(d_frozen < 1e-10) and np.all(rich < 0.01))
    return CheckResult("convexity", ok, f"min endogenous D2 = {d_endo.min():.3g}, max frozen |D2| = "
                       f"{d_frozen.max():.3g}, max h/2 disagreement = {rich.max():.3g}")


def check_excess_sensitivity(tol=1e-6):
    p = unit_params()
    worst = 0.0
    pts = list(itertools.product((0.4, 0.5, 0.6), (0.5, 0.6, 0.7), (0.2, 0.3, 0.4)))
    for phi, rho, beta in pts:
        es = excess_sensitivity(phi, rho, beta, p)
        worst = max(worst, abs(es.analytic - es.finite_difference))
    return CheckResult("excess-sensitivity identity", worst < tol,
                       f"max |analytic - FD| = {worst:.3g} over {len(pts)} points")


def check_bifurcation(duration_T=2520):
    t0 = time.perf_counter()
    spec = AdoptionGameSpec()
    grid = np.linspace(0.0, 2.0, 401)
    step = grid[1] - grid[0]
    zero = hysteresis_loop(spec, grid, kappa=0.0, duration_T=duration_T)
    gaps = {k: hysteresis_loop(spec, grid, kappa=k, duration_T=duration_T) for k in (0.01, 0.02, 0.04)}
    elapsed = time.perf_counter() - t0
    g = {k: v.hysteresis_gap for k, v in gaps.items()}
    ok = (zero.c_star is not None and zero.c_star_star is not None
          and abs(zero.c_star - zero.c_star_star) <= step + 1e-12
          and gaps[0.02].c_star_star is not None and gaps[0.02].c_star_star < gaps[0.02].c_star
          and None not in g.values() and g[0.01] < g[0.02] < g[0.04] and elapsed < 10)
    return CheckResult("bifurcation and hysteresis", bool(ok),
                       f"kappa=0: c*={zero.c_star}, c**={zero.c_star_star}; gaps "
                       + ", ".join(f"{k:g}: {v:.4g}" for k, v in g.items() if v is not None)
                       + f"; {elapsed:.2f}s")


def mixed_third_difference(f, x, y, z, hx, hy, hz):
    total = 0.0
    for i, j, k in itertools.product((0, 1), repeat=3):
        sign = (-1) ** (3 - i - j - k)
        total += sign * f(x + i * hx, y + j * hy, z + k * hz)
    return total


def check_cross_partial(center=(0.5, 0.5, 0.2), h=0.1):
    """D3 M / (Dphi Drho Dbeta) on every cube of the 3x3x3 grid around ``center``."""
    p = unit_params()
    m = lambda phi, rho, beta: multiplier_m(coupling_r(phi, rho, beta, p))
    vals = []
    for i, j, k in itertools.product((-1, 0), repeat=3):
        vals.append(mixed_third_difference(m, center[0] + i * h, center[1] + j * h,
                                           center[2] + k * h, h, h, h))
    return CheckResult("cross-partial sign", min(vals) > 0, f"min D3 M = {min(vals):.4g} over 8 cubes")


BATTERY = (check_multiplier_identity, check_beta_nullification, check_convexity,
           check_excess_sensitivity, check_bifurcation, check_cross_partial)


def run_battery():
    return [f() for f in BATTERY]
