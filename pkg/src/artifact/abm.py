"""Agent-based market: institutions with adoption, dependency and skill state.

One period runs in this order: common AI noise, signals, demands, price
clearing, market-maker impact update, performative step plus jumps,
accuracy trackers, dependency and skill updates, then (every epoch)
adoption revision.  All random inputs are pre-drawn from per-component
streams so that arms which differ only in an intervention consume
identical draws.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AI, HUMAN, MIXED, innovation_sd, solve_clearing
from .errors import NumericalBlowup

LOG_P0 = math.log(100.0)
_CODE = {HUMAN: 0, AI: 1, MIXED: 2}
_NAME = {v: k for k, v in _CODE.items()}


# ---------------------------------------------------------------- interventions

@dataclass(frozen=True)
class DiversityCap:
    rho_cap: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rho_cap <= 1.0:
            raise ValueError("rho_cap must lie in [0, 1]")


@dataclass(frozen=True)
class DependencyCap:
    d_cap: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.d_cap <= 1.0:
            raise ValueError("d_cap must lie in [0, 1]")


@dataclass(frozen=True)
class SpeedBump:
    k: int = 5

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError("k must be an integer >= 1")


@dataclass(frozen=True)
class Combined:
    diversity: DiversityCap = DiversityCap()
    dependency: DependencyCap = DependencyCap()
    speed: SpeedBump = SpeedBump()


def _parts(intervention):
    if intervention is None:
        return None, None, None
    if isinstance(intervention, Combined):
        return intervention.diversity, intervention.dependency, intervention.speed
    if isinstance(intervention, DiversityCap):
        return intervention, None, None
    if isinstance(intervention, DependencyCap):
        return None, intervention, None
    if isinstance(intervention, SpeedBump):
        return None, None, intervention
    raise TypeError(f"unknown intervention {intervention!r}")


def intervention_label(intervention):
    if intervention is None:
        return "baseline"
    if isinstance(intervention, DiversityCap):
        return f"DiversityCap({intervention.rho_cap:g})"
    if isinstance(intervention, DependencyCap):
        return f"DependencyCap({intervention.d_cap:g})"
    if isinstance(intervention, SpeedBump):
        return f"SpeedBump({intervention.k})"
    return "Combined"


def parse_intervention(label):
    """Inverse of intervention_label, e.g. 'SpeedBump(5)' or 'baseline'."""
    text = label.strip()
    if text == "baseline":
        return None
    if text == "Combined":
        return Combined()
    name, _, rest = text.partition("(")
    if not rest.endswith(")"):
        raise ValueError(f"cannot parse intervention {label!r}")
    arg = rest[:-1]
    try:
        if name == "DiversityCap":
            return DiversityCap(float(arg))
        if name == "DependencyCap":
            return DependencyCap(float(arg))
        if name == "SpeedBump":
            return SpeedBump(int(arg))
    except ValueError as exc:
        raise ValueError(f"cannot parse intervention {label!r}: {exc}") from None
    raise ValueError(f"unknown intervention {label!r}")


@dataclass(frozen=True)
class PeriodRule:
    """What the intervention changes in one period."""
    rho: float
    d_cap: float | None
    recompute_ai: bool


def apply_intervention(intervention, params, t):
    """Effective rho, dependency cap and AI recompute flag for period ``t``."""
    div, dep, speed = _parts(intervention)
    rho = params.rho if div is None else min(params.rho, div.rho_cap)
    d_cap = None if dep is None else dep.d_cap
    recompute = speed is None or t % speed.k == 0
    return PeriodRule(rho, d_cap, recompute)


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SimConfig:
    """Parameters plus run identity.

    ``pressure`` is an optional additive push on every agent's adoption
    utility, one value per adoption epoch (used by the ramp protocol); ``force_d`` pins every
    adopter's dependency to a value during epochs where it is not None.
    """
    params: object
    intervention: object = None
    seed: int = 0
    run_index: int = 0
    record_agents: bool = False
    pressure: tuple | None = None
    force_d: tuple | None = None

    def __post_init__(self):
        _parts(self.intervention)
        if self.pressure is not None and len(self.pressure) == 0:
            raise ValueError("pressure schedule is empty")


# ---------------------------------------------------------------- agents

@dataclass
class Agent:
    id: int
    strategy: str
    d: float
    sigma_h2: float
    switch_cost: float
    wealth: float = 0.0
    perceived_acc_ai: float = 0.0
    perceived_acc_h: float = 0.0


@dataclass
class Population:
    """Struct-of-arrays view of all institutions."""
    strategy: np.ndarray   # 0 Human, 1 AI, 2 Mixed
    d: np.ndarray
    sigma_h2: np.ndarray
    switch_cost: np.ndarray
    wealth: np.ndarray
    acc_ai: np.ndarray
    acc_h: np.ndarray
    last_q: np.ndarray

    @property
    def adopter(self):
        return self.strategy != 0

    def agents(self):
        return [Agent(i, _NAME[int(s)], float(d), float(v), float(c), float(w), float(a), float(h))
                for i, (s, d, v, c, w, a, h) in enumerate(zip(
                    self.strategy, self.d, self.sigma_h2, self.switch_cost,
                    self.wealth, self.acc_ai, self.acc_h))]


def ai_error_variance(rho, params):
    return rho ** 2 * params.sigma_eta ** 2 + (1.0 - rho ** 2) * params.sigma_nu ** 2


def init_population(params, rng):
    """floor(phi N) AI agents at d = phi (or ``d0``), the rest Human at d = 0."""
    n = params.n_agents
    n_ai = math.floor(params.phi * n + 1e-9)
    strategy = np.zeros(n, dtype=np.int8)
    strategy[:n_ai] = 1
    d_start = params.phi if params.d0 is None else params.d0
    d = np.where(strategy == 1, d_start, 0.0)
    costs = rng.logistic(params.switch_cost_loc, params.switch_cost_scale, n)
    # trackers start at the sources' true error variances
    acc_ai = np.full(n, -ai_error_variance(params.rho, params))
    acc_h = np.full(n, -params.sigma_h0 ** 2)
    return Population(strategy, d, np.full(n, params.sigma_h0 ** 2), costs,
                      np.zeros(n), acc_ai, acc_h, np.zeros(n))


def aggressiveness(strategy, params):
    s = np.asarray(strategy)
    return np.where(s == 1, params.a_ai, params.a_h)


def blended_signal(strategy, d, x_ai, x_h):
    """Adopters weight the AI output by d; Human agents use their own signal."""
    s = np.asarray(strategy)
    return np.where(s == 0, x_h, d * x_ai + (1.0 - d) * x_h)


def agent_demand(agent, signal, price, params):
    """q = a_s (x - p).

    ``signal`` is either the agent's own signal or an (x_ai, x_h) pair,
    which is blended with the agent's dependency unless it is Human.
    """
    a = params.a_ai if agent.strategy == AI else params.a_h
    if isinstance(signal, tuple):
        x_ai, x_h = signal
        x = x_h if agent.strategy == HUMAN else agent.d * x_ai + (1.0 - agent.d) * x_h
    else:
        x = signal
    return a * (x - price)


def update_dependency(d, mean_d, acc_ai, acc_h, params):
    """d' = clip(d + delta (acc_ai - acc_h) + gamma (mean_d - d), 0, 1)."""
    new = d + params.delta_sens * (acc_ai - acc_h) + params.gamma * (mean_d - d)
    return np.clip(new, 0.0, 1.0)


def skill_ceiling(params):
    """Largest human signal variance: relative precision floored at ``skill_floor``."""
    return params.sigma_h0 ** 2 / params.skill_floor


def degrade_skill(sigma_h2, d, params):
    """sigma_H^2 (1 + kappa d), capped at the ceiling."""
    return np.minimum(sigma_h2 * (1.0 + params.kappa * d), skill_ceiling(params))


def bayesian_precision_step(tau_h, d, params):
    """tau' = (1 - delta_forget) tau + n0 (1 - d) tau_signal."""
    return (1.0 - params.delta_forget) * tau_h + params.n0 * (1.0 - d) * params.tau_signal


def _bayesian_sigma2(sigma_h2, d, params):
    # precision in units where the d = 0 steady state maps to sigma_h0
    tau_star = params.n0 * params.tau_signal / params.delta_forget
    tau = tau_star * params.sigma_h0 ** 2 / sigma_h2
    tau = bayesian_precision_step(tau, d, params)
    tau = np.maximum(tau, tau_star * params.skill_floor)
    return tau_star * params.sigma_h0 ** 2 / tau


@dataclass
class MarketMaker:
    lambda0: float
    lambda1: float
    ewma_var: float
    ewma_decay: float

    def impact(self):
        return self.lambda0 + self.lambda1 * self.ewma_var


def update_market_impact(mm, last_return):
    """sigma^2 <- (1 - w) sigma^2 + w r^2; returns the new lambda."""
    mm.ewma_var = (1.0 - mm.ewma_decay) * mm.ewma_var + mm.ewma_decay * last_return ** 2
    return mm.impact()


def base_impact(phi, rho, params):
    """lambda0, deepened when AI flow is predictable (optionally)."""
    if not params.depth_scaling:
        return params.lambda0
    num = phi * rho * params.sigma_eta
    if num == 0:
        return params.lambda0
    if params.sigma_v_step == 0:
        return 0.0
    k = num / params.sigma_v_step
    return params.lambda0 / math.sqrt(1.0 + k * k)


def adoption_update(pop, params, c, uniforms_review, uniforms_choice, phi_t, pressure=0.0):
    """Logistic switching in (dU - switch_cost), after which phi is recomputed.

    dU is the agent's perceived accuracy gap, in units of the initial human
    error variance, plus the complementarity term c phi and any external
    ``pressure``.  Reviewing agents
    pick AI with probability sigmoid((dU - cost)/temperature) and Human
    otherwise, so switching is symmetric.
    """
    du = (pop.acc_ai - pop.acc_h) / params.sigma_h0 ** 2 + c * phi_t + pressure
    z = np.clip((du - pop.switch_cost) / params.adoption_temperature, -60.0, 60.0)
    p_ai = 1.0 / (1.0 + np.exp(-z))
    review = uniforms_review < params.revision_rate
    want_ai = uniforms_choice < p_ai
    joins = review & want_ai & (pop.strategy == 0)
    leaves = review & ~want_ai & (pop.strategy != 0)
    pop.strategy[joins] = 1
    pop.d[joins] = phi_t
    pop.strategy[leaves] = 0
    pop.d[leaves] = 0.0
    return float(np.mean(pop.strategy != 0))


# ---------------------------------------------------------------- result

SERIES = ("t", "v", "p", "return", "phi_t", "mean_d", "mean_sigma_h2",
          "lambda_t", "eta_t", "v_exog")


@dataclass
class SimResult:
    t: np.ndarray
    v: np.ndarray
    p: np.ndarray
    r: np.ndarray
    phi_t: np.ndarray
    mean_d: np.ndarray
    mean_sigma_h2: np.ndarray
    lambda_t: np.ndarray
    eta_t: np.ndarray
    v_exog: np.ndarray
    min_skill: np.ndarray
    drift_step: float
    seed: int
    run_index: int
    config_hash: str
    intervention: str
    unstable: bool = False
    blowup_period: int | None = None
    agents: list = field(default_factory=list)
    agent_returns: np.ndarray | None = None
    adopter_mask: np.ndarray | None = None

    @property
    def returns(self):
        return self.r

    def rows(self):
        cols = (self.t, self.v, self.p, self.r, self.phi_t, self.mean_d,
                self.mean_sigma_h2, self.lambda_t, self.eta_t, self.v_exog)
        return list(zip(*cols))


# ---------------------------------------------------------------- simulate

def _streams(seed, run_index):
    ss = np.random.SeedSequence([int(seed), int(run_index)])
    names = ("pop", "eta", "ai", "human", "noise", "fund", "jump", "adopt")
    return dict(zip(names, (np.random.default_rng(s) for s in ss.spawn(len(names)))))


def simulate(config, raise_on_blowup=False):
    """Run one path.  A path leaving the overflow guard is flagged unstable
    and padded with NaN, unless ``raise_on_blowup`` is set."""
    prm = config.params
    T, n = prm.n_periods, prm.n_agents
    g = _streams(config.seed, config.run_index)
    pop = init_population(prm, g["pop"])

    # pre-drawn inputs, identical across arms sharing (seed, run_index)
    eta_z = g["eta"].standard_normal(T)
    ai_z = g["ai"].standard_normal((T, n))
    h_z = g["human"].standard_normal((T, n))
    u_all = prm.sigma_u * g["noise"].standard_normal(T)
    v_z = g["fund"].standard_normal(T)
    counts = g["jump"].poisson(prm.lambda_jump, T)
    sizes = g["jump"].normal(prm.mu_jump, prm.sigma_jump, int(counts.sum()))
    jumps = np.zeros(T)
    np.add.at(jumps, np.repeat(np.arange(T), counts), sizes)
    n_epochs = T // prm.epoch + 1
    adopt_u = g["adopt"].random((n_epochs, 2, n))

    drift = prm.mu * prm.dt
    incr = drift + prm.sigma_v_step * v_z + jumps
    eta_sd = innovation_sd(prm)
    mm = MarketMaker(prm.lambda0, prm.lambda1, prm.sigma_v_step ** 2, prm.ewma_weight)
    ceiling = skill_ceiling(prm)
    w_acc = prm.acc_weight
    _, dep_cap, _ = _parts(config.intervention)

    out = {k: np.full(T, np.nan) for k in SERIES if k != "t"}
    min_skill = np.full(T, np.nan)
    agent_ret = np.full((T, n), np.nan) if config.record_agents else None
    adopter_hist = np.zeros((T, n), dtype=bool) if config.record_agents else None

    v = v_ex = p = LOG_P0
    eta = 0.0
    phi_t = float(np.mean(pop.adopter))
    prev_x = None
    unstable, blow_t = False, None
    for t in range(T):
        rule = apply_intervention(config.intervention, prm, t)
        rho = rule.rho
        eta = prm.theta * eta + eta_sd * eta_z[t]
        x_ai = v + rho * eta + math.sqrt(1.0 - rho * rho) * prm.sigma_nu * ai_z[t]
        x_h = v + np.sqrt(pop.sigma_h2) * h_z[t]
        adopter = pop.adopter
        if config.force_d is not None:
            forced = config.force_d[min(t // prm.epoch, len(config.force_d) - 1)]
            if forced is not None:
                pop.d[adopter] = forced
        x = blended_signal(pop.strategy, pop.d, x_ai, x_h)
        a = aggressiveness(pop.strategy, prm)

        lam = base_impact(phi_t, rho, prm) + prm.lambda1 * mm.ewma_var
        m = p + drift
        if rule.recompute_ai:
            p_new = solve_clearing(m, lam, a, x, u_all[t])
            q = a * (x - p_new)
        else:
            # AI adopters leave last period's quantities in place
            live = ~adopter
            stale = float(np.sum(pop.last_q[adopter]))
            p_new = solve_clearing(m, lam, a[live], x[live], u_all[t] + stale)
            q = np.where(adopter, pop.last_q, a * (x - p_new))
        pop.last_q = q
        ret = p_new - p
        update_market_impact(mm, ret)

        v_next = v + incr[t] + prm.beta * (p_new - v)
        v_ex_next = v_ex + incr[t]
        pop.wealth += q * (v - p_new)

        if not (math.isfinite(p_new) and math.isfinite(v_next)) or \
                abs(p_new - LOG_P0) > prm.guard or abs(v_next - LOG_P0) > prm.guard:
            unstable, blow_t = True, t
            if raise_on_blowup:
                raise NumericalBlowup(f"path left the guard band at period {t}")
            break

        out["v"][t], out["p"][t], out["return"][t] = v, p_new, ret
        out["eta_t"][t], out["lambda_t"][t], out["v_exog"][t] = eta, lam, v_ex
        if config.record_agents:
            agent_ret[t] = x - prev_x if prev_x is not None else np.nan
            adopter_hist[t] = adopter
            prev_x = x

        # accuracy of each source against the realised next fundamental
        pop.acc_ai = (1.0 - w_acc) * pop.acc_ai - w_acc * (x_ai - v_next) ** 2
        pop.acc_h = (1.0 - w_acc) * pop.acc_h - w_acc * (x_h - v_next) ** 2

        if adopter.any():
            mean_d = float(np.mean(pop.d[adopter]))
            d_new = update_dependency(pop.d[adopter], mean_d, pop.acc_ai[adopter],
                                      pop.acc_h[adopter], prm)
            if dep_cap is not None:
                d_new = np.minimum(d_new, dep_cap.d_cap)
            pop.d[adopter] = d_new
        if prm.skill_law == "multiplicative":
            pop.sigma_h2 = degrade_skill(pop.sigma_h2, pop.d, prm)
        else:
            pop.sigma_h2 = _bayesian_sigma2(pop.sigma_h2, pop.d, prm)
        pop.sigma_h2 = np.minimum(pop.sigma_h2, ceiling)

        if prm.adoption_dynamic and (t + 1) % prm.epoch == 0:
            e = (t + 1) // prm.epoch
            push = 0.0 if config.pressure is None else \
                config.pressure[min(e - 1, len(config.pressure) - 1)]
            phi_t = adoption_update(pop, prm, prm.c_career, adopt_u[e, 0], adopt_u[e, 1],
                                    phi_t, push)
        out["phi_t"][t] = phi_t
        out["mean_d"][t] = float(np.mean(pop.d))
        out["mean_sigma_h2"][t] = float(np.mean(pop.sigma_h2))
        min_skill[t] = float(prm.sigma_h0 ** 2 / np.max(pop.sigma_h2))

        v, v_ex, p = v_next, v_ex_next, p_new

    res = SimResult(np.arange(T), out["v"], out["p"], out["return"], out["phi_t"],
                    out["mean_d"], out["mean_sigma_h2"], out["lambda_t"], out["eta_t"],
                    out["v_exog"], min_skill, drift, config.seed, config.run_index,
                    prm.config_hash(), intervention_label(config.intervention),
                    unstable, blow_t)
    if config.record_agents:
        res.agents = pop.agents()
        res.agent_returns = agent_ret
        res.adopter_mask = adopter_hist
    return res
