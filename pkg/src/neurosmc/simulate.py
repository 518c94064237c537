"""Ground-truth trajectory generation and the voltage observation model."""

from dataclasses import dataclass, replace
import math

import numpy as np

from .model import (
    MorrisLecarParams,
    NoiseConfig,
    NumericalDivergence,
    SynapticParams,
    resting_state,
)
from .seeding import as_seed_sequence

__all__ = ["Trace", "simulate_truth", "observe", "snr_db"]


@dataclass(frozen=True)
class Trace:
    """A simulated (or loaded) trajectory with optional observations.

    ``states`` holds x_1..x_T row-wise (shape ``(T, d)``, d = 2 or 4) and
    ``x0`` the initial condition the first step departed from.
    ``applied_current`` is the realized current of each step, including its
    disturbance.  ``observations`` is ``None`` until :func:`observe` fills it
    with noisy voltage samples; ``sigma_y`` records the noise level used.
    """

    t_s: float
    states: np.ndarray
    applied_current: np.ndarray
    x0: np.ndarray = None
    observations: np.ndarray = None
    sigma_y: float = None
    seed: int = None

    def __post_init__(self):
        if len(self.states) != len(self.applied_current):
            raise ValueError("states and applied_current must have equal length")
        if self.observations is not None and len(self.observations) != len(self.states):
            raise ValueError("observations must match states in length")

    @property
    def n_steps(self):
        return len(self.states)

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def times_ms(self):
        return self.t_s * np.arange(1, self.n_steps + 1)


def _spawn_streams(seed, n):
    ss = as_seed_sequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def simulate_truth(p: MorrisLecarParams, nc: NoiseConfig, n_steps,
                   s: SynapticParams = None, x0=None, seed=0):
    """Simulate ``n_steps`` of the stochastic membrane dynamics.

    Each step draws fresh disturbances: additive white noise on the applied
    current (``sigma_i_app``), on the leak conductance (``sigma_g_l``) and on
    the gating variable (``sigma_n``); with synaptic parameters, the two OU
    conductances get their Euler-Maruyama increments as well.  The gating
    variable is clipped to [0, 1] and conductances to [0, inf) after every
    step.

    ``x0`` defaults to the zero-current resting state (with the conductances
    started at their means in the four-state case).  Raises
    :class:`NumericalDivergence` if the state leaves the finite range.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    four_state = s is not None
    if x0 is None:
        rest = resting_state(p, i_app=0.0)
        x0 = np.concatenate([rest, [s.g_e0, s.g_i0]]) if four_state else rest
    x0 = np.asarray(x0, dtype=float)
    dim = 4 if four_state else 2
    if x0.shape != (dim,):
        raise ValueError(f"x0 must have shape ({dim},)")

    rng_i, rng_g, rng_n, rng_e, rng_i_syn = _spawn_streams(seed, 5)
    nu_i = rng_i.standard_normal(n_steps) * nc.sigma_i_app
    nu_g = rng_g.standard_normal(n_steps) * nc.sigma_g_l
    nu_n = rng_n.standard_normal(n_steps) * nc.sigma_n
    if four_state:
        xi_e = rng_e.standard_normal(n_steps) * math.sqrt(2.0 * s.sigma_e**2 * nc.t_s / s.tau_e)
        xi_i = rng_i_syn.standard_normal(n_steps) * math.sqrt(2.0 * s.sigma_i**2 * nc.t_s / s.tau_i)

    ts = nc.t_s
    scale = ts / p.c_m
    states = np.empty((n_steps, dim))
    i_real = nc.i_o + nu_i

    v = float(x0[0])
    n = float(x0[1])
    if four_state:
        g_e = float(x0[2])
        g_i = float(x0[3])
    for k in range(n_steps):
        try:
            m = 0.5 * (1.0 + math.tanh((v - p.v1) / p.v2))
            ninf = 0.5 * (1.0 + math.tanh((v - p.v3) / p.v4))
            taun = 1.0 / math.cosh((v - p.v3) / (2.0 * p.v4))
            i_ion = (
                (p.g_l + nu_g[k]) * (v - p.e_l)
                + p.g_ca * m * (v - p.e_ca)
                + p.g_k * n * (v - p.e_k)
            )
            if four_state:
                i_ion += g_e * (v - s.e_e) + g_i * (v - s.e_i)
            v = v - scale * (i_ion - i_real[k])
            n = n + ts * p.phi * (ninf - n) / taun + nu_n[k]
        except OverflowError:
            raise NumericalDivergence(k + 1) from None
        n = min(max(n, 0.0), 1.0)
        states[k, 0] = v
        states[k, 1] = n
        if four_state:
            g_e = max(g_e - (ts / s.tau_e) * (g_e - s.g_e0) + xi_e[k], 0.0)
            g_i = max(g_i - (ts / s.tau_i) * (g_i - s.g_i0) + xi_i[k], 0.0)
            states[k, 2] = g_e
            states[k, 3] = g_i
        if not (math.isfinite(v) and math.isfinite(n)):
            raise NumericalDivergence(k + 1)

    return Trace(t_s=ts, states=states, applied_current=i_real, x0=x0, seed=seed)


def observe(trace: Trace, sigma_y, seed=0):
    """Return a copy of ``trace`` with noisy voltage observations attached.

    y_k = v_k + sigma_y * eps_k with iid standard-normal eps.
    """
    if sigma_y < 0:
        raise ValueError("sigma_y must be nonnegative")
    rng = np.random.default_rng(as_seed_sequence(seed))
    y = trace.states[:, 0] + sigma_y * rng.standard_normal(trace.n_steps)
    return replace(trace, observations=y, sigma_y=float(sigma_y))


def snr_db(trace: Trace):
    """Signal-to-noise ratio 10*log10(mean(v^2)/sigma_y^2) of a trace, in dB.

    Infinite when sigma_y is zero; raises if the trace carries no
    observation-noise level.
    """
    if trace.sigma_y is None:
        raise ValueError("trace has no recorded sigma_y; call observe() first")
    if trace.sigma_y == 0.0:
        return math.inf
    power = float(np.mean(trace.states[:, 0] ** 2))
    return 10.0 * math.log10(power / trace.sigma_y**2)
