"""Structural parameters of the market model and their validation."""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields

from .errors import ConfigError

# Annualisation convention: one period is one trading day.
PERIODS_PER_YEAR = 252


@dataclass(frozen=True)
class ModelParams:
    """All parameters of the model.

    Drift ``mu`` and diffusion ``sigma_v`` are annual figures; every step
    scales them by ``dt`` (years per period).  ``lambda_jump`` is a
    per-period Poisson intensity.  Order-flow quantities (``sigma_u``,
    ``a_ai``, ``a_h``, ``lambda0``) are in units where one agent with
    aggressiveness one trades one unit per unit of mispricing.
    """

    # adoption, correlation, feedback, atrophy
    phi: float = 0.7
    rho: float = 0.6
    beta: float = 0.3
    kappa: float = 0.02
    # fundamental
    mu: float = 0.07
    sigma_v: float = 0.108
    dt: float = 1.0 / PERIODS_PER_YEAR
    lambda_jump: float = 0.016
    mu_jump: float = -0.02
    sigma_jump: float = 0.03
    # signals and order flow
    sigma_eta: float = 0.0485
    sigma_nu: float = 0.01
    sigma_h0: float = 0.04
    sigma_u: float = 12.575
    theta: float = 0.95
    a_ai: float = 2.9
    a_h: float = 1.0
    # preferences and adoption
    tau_risk: float = 2.0
    gamma: float = 0.05
    delta_sens: float = 20.0
    c_career: float = 0.5
    # population and horizon
    n_agents: int = 500
    n_noise: int = 1000
    n_periods: int = 5040
    # endogenous channels
    delta_share: float = 0.5
    alpha_rho: float = 2.0
    rho0: float = 0.2
    rho_bar: float = 0.8
    beta_max: float = 0.4
    # market maker with volatility-reactive impact
    lambda0: float = 4.112e-4
    lambda1: float = 10.29
    ewma_weight: float = 0.3615
    depth_scaling: bool = True
    # cognitive channel
    skill_floor: float = 0.01
    skill_law: str = "multiplicative"
    delta_forget: float = 0.0196078431372549
    n0: float = 1.0
    tau_signal: float = 1.0
    d0: float | None = None
    # adoption dynamics
    epoch: int = 21
    adoption_temperature: float = 0.05
    revision_rate: float = 0.1
    switch_cost_loc: float = 1.55
    switch_cost_scale: float = 0.3
    acc_weight: float = 0.05
    adoption_dynamic: bool = False
    # numerics
    guard: float = 10.0

    def __post_init__(self):
        validate(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self):
        """Short stable hash of every field, used to key outputs."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def sigma_v_step(self):
        """Diffusion sd of one period."""
        return self.sigma_v * math.sqrt(self.dt)


def unit_params(**changes):
    """Dimensionless parameter set used for the closed-form objects."""
    base = dict(sigma_v=1.0, sigma_u=1.0, sigma_eta=1.0, sigma_nu=1.0, sigma_h0=1.0,
                phi=0.5, rho=0.6, beta=0.3, n_agents=500)
    base.update(changes)
    return ModelParams(**base)


def _unit(name, value, lo, hi, lo_open=False, hi_open=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if value < lo or (lo_open and value == lo):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if value > hi or (hi_open and value == hi):
        raise ConfigError(name, f"must be {'<' if hi_open else '<='} {hi}, got {value}")


# zero is a legitimate degenerate case for these; the others divide
NONNEGATIVE_SD = ("sigma_v", "sigma_jump", "sigma_eta", "sigma_nu")
POSITIVE_SD = ("sigma_h0", "sigma_u")


def validate(p):
    """Reject any parameter outside its admissible region."""
    inf = math.inf
    _unit("phi", p.phi, 0.0, 1.0)
    _unit("rho", p.rho, 0.0, 1.0)
    _unit("beta", p.beta, 0.0, 1.0, hi_open=True)
    _unit("kappa", p.kappa, 0.0, inf)
    _unit("theta", p.theta, -1.0, 1.0, lo_open=True, hi_open=True)
    for name in NONNEGATIVE_SD:
        _unit(name, getattr(p, name), 0.0, inf)
    for name in POSITIVE_SD:
        _unit(name, getattr(p, name), 0.0, inf, lo_open=True)
    _unit("mu", p.mu, -inf, inf)
    _unit("mu_jump", p.mu_jump, -inf, inf)
    _unit("dt", p.dt, 0.0, inf, lo_open=True)
    _unit("lambda_jump", p.lambda_jump, 0.0, inf)
    _unit("a_ai", p.a_ai, 0.0, inf, lo_open=True)
    _unit("a_h", p.a_h, 0.0, inf, lo_open=True)
    _unit("tau_risk", p.tau_risk, 0.0, inf, lo_open=True)
    _unit("gamma", p.gamma, 0.0, 1.0)
    _unit("delta_sens", p.delta_sens, 0.0, inf)
    _unit("c_career", p.c_career, -inf, inf)
    for name in ("n_agents", "n_noise", "n_periods", "epoch"):
        value = getattr(p, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(name, f"must be an integer >= 1, got {value!r}")
    _unit("delta_share", p.delta_share, 0.0, inf, lo_open=True)
    _unit("alpha_rho", p.alpha_rho, 0.0, inf, lo_open=True)
    _unit("rho0", p.rho0, 0.0, 1.0)
    _unit("rho_bar", p.rho_bar, p.rho0, 1.0)
    _unit("beta_max", p.beta_max, 0.0, 1.0, hi_open=True)
    _unit("lambda0", p.lambda0, 0.0, inf, lo_open=True)
    _unit("lambda1", p.lambda1, 0.0, inf)
    _unit("ewma_weight", p.ewma_weight, 0.0, 1.0, lo_open=True, hi_open=True)
    _unit("skill_floor", p.skill_floor, 0.0, 1.0, lo_open=True)
    if p.skill_law not in ("multiplicative", "bayesian"):
        raise ConfigError("skill_law", f"must be 'multiplicative' or 'bayesian', got {p.skill_law!r}")
    _unit("delta_forget", p.delta_forget, 0.0, 1.0, lo_open=True, hi_open=True)
    _unit("n0", p.n0, 0.0, inf, lo_open=True)
    _unit("tau_signal", p.tau_signal, 0.0, inf, lo_open=True)
    if p.d0 is not None:
        _unit("d0", p.d0, 0.0, 1.0)
    _unit("adoption_temperature", p.adoption_temperature, 0.0, inf, lo_open=True)
    _unit("revision_rate", p.revision_rate, 0.0, 1.0)
    _unit("switch_cost_loc", p.switch_cost_loc, -inf, inf)
    _unit("switch_cost_scale", p.switch_cost_scale, 0.0, inf, lo_open=True)
    _unit("acc_weight", p.acc_weight, 0.0, 1.0, lo_open=True)
    for name in ("adoption_dynamic", "depth_scaling"):
        if not isinstance(getattr(p, name), bool):
            raise ConfigError(name, f"must be a boolean, got {getattr(p, name)!r}")
    _unit("guard", p.guard, 0.0, inf, lo_open=True)
    return p


FIELD_TYPES = {f.name: f.type for f in fields(ModelParams)}
