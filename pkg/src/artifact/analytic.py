"""Closed-form equilibrium objects and adoption-game solvers."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import effective_lambda, kyle_lambda
from .errors import DivergentCoupling, GridTooCoarse


@dataclass(frozen=True)
class CouplingPoint:
    phi: float
    rho: float
    beta: float
    lambda_eff: float
    r: float
    m: float


def coupling_r(phi, rho, beta, params):
    """Systemic risk coupling r = phi*rho*beta / lambda'."""
    return phi * rho * beta / effective_lambda(phi, rho, beta, params)


def multiplier_m(r):
    """Reflexive multiplier 1/(1-r), the sum of the feedback series."""
    if r >= 1.0:
        raise DivergentCoupling(f"r = {r:.6g} >= 1: performatively unstable")
    return 1.0 / (1.0 - r)


def coupling_point(phi, rho, beta, params):
    lam = effective_lambda(phi, rho, beta, params)
    r = phi * rho * beta / lam
    return CouplingPoint(phi, rho, beta, lam, r, multiplier_m(r))


def dlambda_dphi(phi, rho, params):
    """Analytic derivative of the base impact lambda(phi) in phi."""
    if params.sigma_v == 0:
        return 0.0
    k = (rho * params.sigma_eta / params.sigma_v) ** 2
    lam0 = params.sigma_v / (2.0 * params.sigma_u)
    return -lam0 * k * phi / (1.0 + k * phi ** 2) ** 1.5


class ExcessSensitivity(NamedTuple):
    analytic: float
    finite_difference: float


def excess_sensitivity(phi, rho, beta, params, h=1e-5):
    """dr/dphi - r/phi, analytically and by central differences.

    Analytically the excess equals (phi*rho*beta/lambda'^2)(-dlambda'/dphi):
    coupling grows faster than proportionally because depth erodes.
    """
    if phi <= 0:
        raise ValueError("phi must be positive")
    lam = effective_lambda(phi, rho, beta, params)
    dlam = dlambda_dphi(phi, rho, params) + rho * beta / params.n_agents
    analytic = phi * rho * beta / lam ** 2 * (-dlam)
    step = min(h, phi / 2)
    slope = (coupling_r(phi + step, rho, beta, params) - coupling_r(phi - step, rho, beta, params)) / (2 * step)
    fd = slope - coupling_r(phi, rho, beta, params) / phi
    return ExcessSensitivity(analytic, fd)


def stability_margin(phi, rho, beta, a, lam):
    """1 - beta(1 + phi^2 rho^2 a^2 / (lambda^2 + (phi a)^2)); stable iff > 0."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return 1.0 - beta * (1.0 + (phi * rho * a) ** 2 / (lam ** 2 + (phi * a) ** 2))


class VarianceTerms(NamedTuple):
    fundamental: float
    common_ai: float
    idio_ai: float
    human: float

    @property
    def total(self):
        return self.fundamental + self.common_ai + self.idio_ai + self.human


def price_variance_decomposition(phi, rho, params, lam=None):
    """The four additive terms of the price variance, as written.

    ``lam`` defaults to the base Kyle impact at (phi, rho).
    """
    if lam is None:
        lam = kyle_lambda(phi, rho, params)
    n = params.n_agents
    a, a_h = params.a_ai, params.a_h
    phi_h = 1.0 - phi
    depth_ai = (lam + n * phi * a) ** 2
    depth_h = (lam + n * phi_h * a_h) ** 2
    return VarianceTerms(
        fundamental=params.sigma_v ** 2,
        common_ai=(phi * rho * a * params.sigma_eta) ** 2 / depth_ai,
        idio_ai=phi * (1.0 - rho ** 2) * a ** 2 * params.sigma_nu ** 2 / (n * depth_ai),
        human=phi_h * a_h ** 2 * params.sigma_h0 ** 2 / (n * depth_h),
    )


def limit_variance(rho, params, lam_eff=None):
    """Large-population price variance sigma_v^2 + rho^2 sigma_eta^2 / lambda'^2.

    This is the stated asymptote; it does not follow from the finite-N
    decomposition term by term, so both are kept.
    """
    if lam_eff is None:
        lam_eff = effective_lambda(params.phi, rho, params.beta, params)
    if lam_eff <= 0:
        raise ValueError("lambda' must be positive")
    return params.sigma_v ** 2 + (rho * params.sigma_eta / lam_eff) ** 2


def rho_of_phi(phi, params):
    """Signal correlation rising with adoption through shared vendors (concave)."""
    return params.rho0 + (params.rho_bar - params.rho0) * (1.0 - math.exp(-params.alpha_rho * phi))


def beta_of_phi(phi, params):
    """Feedback intensity as a function of AI market share (convex if delta < 1)."""
    if phi == 0:
        return 0.0
    return params.beta_max * phi / (phi + (1.0 - phi) * params.delta_share)


def unified_coupling(phi, params, frozen_at=None):
    """r(phi) with rho and beta endogenous to phi.

    With ``frozen_at`` set, rho and beta are held at their values at that
    adoption level, which isolates the extra curvature the channels add.
    """
    anchor = phi if frozen_at is None else frozen_at
    rho = rho_of_phi(anchor, params)
    beta = beta_of_phi(anchor, params)
    r = coupling_r(phi, rho, beta, params)
    multiplier_m(r)
    return r


def ami_index(phi_hat, rho_hat, beta_hat):
    """AI Monoculture Index phi*rho*beta."""
    return phi_hat * rho_hat * beta_hat


# ---------------------------------------------------------------------------
# adoption game


@dataclass(frozen=True)
class AdoptionGameSpec:
    """Switching-cost CDF G and incentive Delta U(phi; c) = u0 + s c phi - cost0.

    ``cdf`` is 'logistic' (location ``loc``, scale ``scale``) or 'uniform'
    on [loc, loc + scale].  ``slope_scale`` (s) multiplies the
    complementarity term; ``complementarity=False`` makes c a level shift
    with no dependence on phi.  ``skill_weight`` converts log human-skill
    loss into incentive units for backward sweeps.
    """

    cdf: str = "logistic"
    loc: float = 0.5
    scale: float = 0.08
    u0: float = 0.2
    cost0: float = 0.0
    slope_scale: float = 1.0
    complementarity: bool = True
    skill_weight: float = 5.0e-4
    grid: int = 10_000

    def __post_init__(self):
        if self.cdf not in ("logistic", "uniform"):
            raise ValueError(f"unknown cdf {self.cdf!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.grid < 1000:
            raise ValueError("grid resolution must be at least 1000 points")


def switching_cdf(s, spec):
    s = np.asarray(s, dtype=float)
    if spec.cdf == "uniform":
        return np.clip((s - spec.loc) / spec.scale, 0.0, 1.0)
    z = np.clip((s - spec.loc) / spec.scale, -700, 700)
    return 1.0 / (1.0 + np.exp(-z))


def delta_u(phi, c, spec, skill_shift=0.0):
    phi = np.asarray(phi, dtype=float)
    pressure = spec.slope_scale * c * phi if spec.complementarity else c + 0.0 * phi
    return spec.u0 + pressure - spec.cost0 + skill_shift


def best_response(phi, c, spec, skill_shift=0.0):
    return switching_cdf(delta_u(phi, c, spec, skill_shift), spec)


def skill_shift(kappa, duration_T, spec, d_bar=1.0):
    """Incentive shift from degraded human skill after T monoculture periods.

    With sigma_H(T) = sigma_H(0) (1 + kappa d)^T the log skill loss is
    T log(1 + kappa d), which ``skill_weight`` turns into utility.
    """
    return spec.skill_weight * duration_T * math.log1p(kappa * d_bar)


@dataclass(frozen=True)
class FixedPoint:
    phi: float
    stable: bool
    slope: float


def _bisect(f, lo, hi, tol=1e-8):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _response_slope(x, c, spec, shift, h=1e-6):
    lo, hi = max(0.0, x - h), min(1.0, x + h)
    return float((best_response(hi, c, spec, shift) - best_response(lo, c, spec, shift)) / (hi - lo))


def adoption_fixed_points(spec, c, skill_shift=0.0):
    """All roots of phi - G(Delta U(phi; c)) on [0, 1], with stability flags."""
    grid = np.linspace(0.0, 1.0, spec.grid + 1)
    f_grid = grid - best_response(grid, c, spec, skill_shift)

    def f(x):
        return float(x - best_response(x, c, spec, skill_shift))

    exact = np.flatnonzero(f_grid == 0.0)
    change = np.flatnonzero(f_grid[:-1] * f_grid[1:] < 0)
    roots = [float(grid[k]) for k in exact]
    roots += [_bisect(f, grid[k], grid[k + 1]) for k in change]
    roots.sort()
    assert roots, "phi - G(Delta U) changes sign on [0, 1], so a root must exist"
    out = []
    for x in roots:
        slope = _response_slope(x, c, spec, skill_shift)
        out.append(FixedPoint(x, abs(slope) < 1.0, slope))
    return out


@dataclass
class BifurcationResult:
    c_grid: np.ndarray
    fixed_points_per_c: list
    direction: str
    c_star: float | None = None
    c_star_star: float | None = None
    hysteresis_gap: float | None = None
    monoculture_exit: float | None = None
    skill_shift: float = 0.0
    tracked: list = field(default_factory=list)


def _nearest_stable(points, target):
    stable = [p.phi for p in points if p.stable]
    return min(stable, key=lambda x: abs(x - target))


def bifurcation_sweep(spec, c_range, direction="forward", kappa=0.0, duration_T=0, d_bar=1.0):
    """Track equilibria along a career-pressure grid.

    forward: c ascending from the diversified state; ``c_star`` is where
    the diversified branch (lowest stable root) collides with the tipping
    point and vanishes.  backward: c descending from the monoculture under
    the degraded human outside option; ``c_star_star`` is where a
    diversified branch re-emerges below the monoculture, and
    ``monoculture_exit`` where the monoculture branch itself vanishes.
    Fold locations are reported at the midpoint of the bracketing step.
    The backward sweep is sequential: each step warm-starts from the last.
    """
    c_grid = np.asarray(c_range, dtype=float)
    if len(c_grid) < 2 or not np.all(np.diff(c_grid) > 0):
        raise ValueError("c_range must be strictly increasing with at least two points")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    shift = skill_shift(kappa, duration_T, spec, d_bar) if direction == "backward" else 0.0
    order = c_grid if direction == "forward" else c_grid[::-1]

    per_c, tracked = [], []
    res = BifurcationResult(c_grid=c_grid, fixed_points_per_c=per_c, direction=direction,
                            skill_shift=shift, tracked=tracked)
    prev_points, prev_c, current = None, None, None
    for c in order:
        points = adoption_fixed_points(spec, float(c), shift)
        if prev_points is not None and abs(len(points) - len(prev_points)) > 2:
            raise GridTooCoarse(f"root count jumped from {len(prev_points)} to {len(points)} near c={c:.6g}")
        if current is None:
            current = min(p.phi for p in points if p.stable) if direction == "forward" \
                else max(p.phi for p in points if p.stable)
        else:
            nxt = _nearest_stable(points, current)
            unstable = [p.phi for p in prev_points if not p.stable]
            crossed = any(min(current, nxt) < u < max(current, nxt) for u in unstable)
            if crossed and direction == "forward" and res.c_star is None:
                res.c_star = 0.5 * (prev_c + c)
            if crossed and direction == "backward" and res.monoculture_exit is None:
                res.monoculture_exit = 0.5 * (prev_c + c)
            current = nxt
            if direction == "backward" and res.c_star_star is None:
                had_low = any(p.stable and p.phi < current - 1e-6 for p in prev_points)
                has_low = any(p.stable and p.phi < current - 1e-6 for p in points)
                if has_low and not had_low:
                    res.c_star_star = 0.5 * (prev_c + c)
        per_c.append((float(c), points))
        tracked.append((float(c), current))
        prev_points, prev_c = points, float(c)
    if direction == "backward":
        per_c.reverse()
        tracked.reverse()
    return res


def hysteresis_loop(spec, c_range, kappa=0.0, duration_T=0, d_bar=1.0):
    """Forward and backward sweeps combined into one result with the gap."""
    fwd = bifurcation_sweep(spec, c_range, "forward")
    bwd = bifurcation_sweep(spec, c_range, "backward", kappa, duration_T, d_bar)
    gap = None
    if fwd.c_star is not None and bwd.c_star_star is not None:
        gap = fwd.c_star - bwd.c_star_star
    return BifurcationResult(
        c_grid=fwd.c_grid, fixed_points_per_c=fwd.fixed_points_per_c, direction="loop",
        c_star=fwd.c_star, c_star_star=bwd.c_star_star, hysteresis_gap=gap,
        monoculture_exit=bwd.monoculture_exit, skill_shift=bwd.skill_shift, tracked=fwd.tracked)


def sweep_rows(result):
    """CSV rows: c, root_count, phi_1..phi_k, stable_1..stable_k."""
    width = max(len(pts) for _, pts in result.fixed_points_per_c)
    header = ["c", "root_count"] + [f"phi_{i + 1}" for i in range(width)] + \
        [f"stable_{i + 1}" for i in range(width)]
    rows = []
    for c, pts in result.fixed_points_per_c:
        phis = [p.phi for p in pts] + [None] * (width - len(pts))
        flags = [int(p.stable) for p in pts] + [None] * (width - len(pts))
        rows.append([c, len(pts)] + phis + flags)
    return header, rows


def sweep_summary(result):
    return {
        "direction": result.direction,
        "c_star": result.c_star,
        "c_star_star": result.c_star_star,
        "hysteresis_gap": result.hysteresis_gap,
        "monoculture_exit": result.monoculture_exit,
        "skill_shift": result.skill_shift,
        "grid_step": float(result.c_grid[1] - result.c_grid[0]),
    }
