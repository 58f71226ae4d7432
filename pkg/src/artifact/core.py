"""Stochastic primitives and within-period pricing.

Prices and fundamentals are carried as log levels, so a price change is
a log return.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EquilibriumViolation

AI = "AI"
HUMAN = "Human"
MIXED = "Mixed"


@dataclass
class MarketState:
    v: float
    p: float
    eta: float = 0.0
    ewma_var: float = 0.0
    t: int = 0

    def __post_init__(self):
        if self.ewma_var < 0:
            raise ValueError("ewma_var must be non-negative")


@dataclass(frozen=True)
class SignalDraw:
    value: float
    kind: str
    agent_id: int


def step_fundamental(state, params, rng):
    """Jump-diffusion increment of the fundamental over one period."""
    z = rng.standard_normal()
    n = rng.poisson(params.lambda_jump)
    jumps = rng.normal(params.mu_jump, params.sigma_jump, n).sum() if n else 0.0
    return params.mu * params.dt + params.sigma_v * math.sqrt(params.dt) * z + jumps


def innovation_sd(params):
    """sd of the AR(1) innovation that keeps var(eta) = sigma_eta**2."""
    return params.sigma_eta * math.sqrt(1.0 - params.theta ** 2)


def step_common_noise(eta_prev, params, rng):
    return params.theta * eta_prev + innovation_sd(params) * rng.standard_normal()


def ai_signal_values(v, eta, rho, sigma_nu, n, rng):
    """n AI signals sharing one common-noise draw."""
    return v + rho * eta + math.sqrt(1.0 - rho ** 2) * sigma_nu * rng.standard_normal(n)


def human_signal_values(v, sigma_h2, rng):
    """One human signal per entry of ``sigma_h2``."""
    sigma_h2 = np.asarray(sigma_h2, dtype=float)
    return v + np.sqrt(sigma_h2) * rng.standard_normal(sigma_h2.shape)


def draw_signals(state, params, agents, rng):
    """Signals for every agent this period.

    AI agents see ``v + rho*eta + sqrt(1-rho^2)*nu``; everyone else sees
    ``v + eps`` with the variance stored on the agent.
    """
    ai_ids = [a.id for a in agents if a.strategy == AI]
    other = [a for a in agents if a.strategy != AI]
    ai_vals = ai_signal_values(state.v, state.eta, params.rho, params.sigma_nu, len(ai_ids), rng)
    h_vals = human_signal_values(state.v, [a.sigma_h2 for a in other], rng)
    draws = [SignalDraw(float(x), AI, i) for i, x in zip(ai_ids, ai_vals)]
    draws += [SignalDraw(float(x), HUMAN, a.id) for a, x in zip(other, h_vals)]
    return sorted(draws, key=lambda s: s.agent_id)


def kyle_lambda(phi, rho, params):
    """Base price impact, falling as AI order flow becomes predictable."""
    if params.sigma_v == 0:
        return 0.0
    h = math.sqrt(1.0 + (phi * rho * params.sigma_eta / params.sigma_v) ** 2)
    return params.sigma_v / (2.0 * params.sigma_u) / h


def effective_lambda(phi, rho, beta, params):
    """Equilibrium impact including the feedback term phi*rho*beta/N."""
    lam = kyle_lambda(phi, rho, params)
    feedback = phi * rho * beta / params.n_agents
    if feedback >= lam:
        raise EquilibriumViolation(
            f"phi*rho*beta/N = {feedback:.6g} >= lambda = {lam:.6g}; no linear equilibrium")
    return lam + feedback


def clearing_price(prior_mean, lam, informed_flow, noise_flow):
    """Linear pricing rule p = E[v | Omega] + lambda * order flow."""
    return prior_mean + lam * (informed_flow + noise_flow)


def solve_clearing(prior_mean, lam, aggressiveness, signals, noise_flow):
    """Price at which demands q_i = a_i (x_i - p) are consistent with the rule.

    Solving p = m + lam * (sum a_i (x_i - p) + u) for p gives
    p = (m + lam * (sum a_i x_i + u)) / (1 + lam * sum a_i).
    """
    a = np.broadcast_to(np.asarray(aggressiveness, dtype=float), np.shape(signals))
    total = float(np.sum(a))
    weighted = float(np.dot(a, signals)) if np.size(signals) else 0.0
    return (prior_mean + lam * (weighted + noise_flow)) / (1.0 + lam * total)


def feedback_term(v, p, beta):
    return beta * (p - v)


def performative_step(v, p, params, increment=None, rng=None):
    """Next fundamental: v + increment + beta (p - v).

    ``increment`` is normally the output of :func:`step_fundamental`; if it
    is omitted a drift plus diffusion draw (no jump) is taken from ``rng``.
    """
    if increment is None:
        increment = params.mu * params.dt + params.sigma_v * math.sqrt(params.dt) * rng.standard_normal()
    return v + increment + feedback_term(v, p, params.beta)
