"""
Monte Carlo simulation of the wealth dynamics under a feedback policy.

    dL = (r L + delta H + pi (alpha - r) - c) dt + sigma pi dW1
    dH = (mu - delta) H dt + eta H (rho dW1 + sqrt(1 - rho^2) dW2)

H is stepped exactly in log space. The riskless part of L is integrated
exactly over each step and the flows and noise are added Euler-style, so a
path without noise and flows reproduces l0 e^{rT}. Paths with L <= 0 are
absorbed; paths leaving the policy's domain or producing c <= 0 are aborted.

Random draws come in groups of NOISE_GROUP noise rows. Each group owns one
SeedSequence child of the root seed and draws a whole time block per call, so
results do not depend on the chunking or on how many paths are run.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError, SimulationError
from .liquidation import ExponentialLaw, WeibullLaw
from .models import MarketParams, PathConfig, PerturbationReport, UtilityEstimate
from .policy import PolicyField, ScaledPolicy

logger = logging.getLogger(__name__)

Law = Union[ExponentialLaw, WeibullLaw]

# Survival level that defines the default simulation horizon
HORIZON_CUTOFF = 1e-6
# Time steps drawn per generator call
BLOCK_STEPS = 256
# Noise rows sharing one generator
NOISE_GROUP = 1024

INCREMENT_STREAM = 0
TAU_STREAM = 1


@dataclass
class PathEnsemble:
    """Recorded paths, arrays indexed [path, time node]."""

    times: np.ndarray
    liquid: np.ndarray
    illiquid: np.ndarray
    pi: np.ndarray
    c: np.ndarray
    alive: np.ndarray
    absorbed: np.ndarray
    aborted: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.liquid.shape[0])

    @property
    def absorbed_fraction(self) -> float:
        return float(np.mean(self.absorbed))

    @property
    def aborted_fraction(self) -> float:
        return float(np.mean(self.aborted))


@dataclass
class _Outcome:
    survival_weighted: np.ndarray
    random_tau: np.ndarray
    taus: np.ndarray
    death: np.ndarray
    absorbed: np.ndarray
    aborted: np.ndarray
    step: float
    paths: Optional[PathEnsemble] = None

    @property
    def valid_survival_weighted(self) -> np.ndarray:
        return ~np.isfinite(self.death)

    @property
    def valid_random_tau(self) -> np.ndarray:
        # the interval holding tau must end before the path died
        return self.taus <= self.death - self.step * (1.0 - 1e-9)


def simulation_horizon(cfg: PathConfig, law: Optional[Law]) -> float:
    """cfg.horizon, or the survival < 1e-6 time of the law."""
    if cfg.horizon is not None:
        return cfg.horizon
    if law is None:
        raise DomainError("a horizon is required when no liquidation law is given")
    return law.horizon(HORIZON_CUTOFF)


def _time_nodes(horizon: float, dt: float) -> np.ndarray:
    n_steps = max(1, math.ceil(horizon / dt - 1e-9))
    return np.linspace(0.0, horizon, n_steps + 1)


def _child(seed: int, stream: int, group: int) -> np.random.SeedSequence:
    # same state as SeedSequence(seed, spawn_key=(stream,)).spawn(group + 1)[group]
    return np.random.SeedSequence(seed, spawn_key=(stream, group))


def _groups(first: int, last: int) -> range:
    return range(first // NOISE_GROUP, (last - 1) // NOISE_GROUP + 1)


class _NoiseSource:
    """Standard normal pairs for noise rows [first, last), one time block per draw."""

    def __init__(self, seed: int, first: int, last: int):
        groups = _groups(first, last)
        self._gens = [np.random.default_rng(_child(seed, INCREMENT_STREAM, g)) for g in groups]
        offset = groups[0] * NOISE_GROUP
        self._rows = slice(first - offset, last - offset)

    def draw(self, block: int) -> np.ndarray:
        """Array of shape (block, rows, 2)."""
        full = [g.standard_normal((block, NOISE_GROUP, 2)) for g in self._gens]
        stacked = full[0] if len(full) == 1 else np.concatenate(full, axis=1)
        return stacked[:, self._rows]


def _increment_streams(
    seed: int, start: int, stop: int, antithetic: bool
) -> tuple[_NoiseSource, np.ndarray, np.ndarray]:
    """Noise source for paths [start, stop) with the row and sign each path uses."""
    ids = np.arange(start, stop)
    if antithetic:
        first, last = start // 2, (stop + 1) // 2
        row = ids // 2 - first
        sign = np.where(ids % 2 == 1, -1.0, 1.0)
    else:
        first, last = start, stop
        row = ids - start
        sign = np.ones(ids.size)
    return _NoiseSource(seed, first, last), row, sign


def sample_taus(law: Law, seed: int, start: int, stop: int) -> np.ndarray:
    """Inverse-CDF liquidation times for paths [start, stop)."""
    groups = _groups(start, stop)
    u = np.concatenate(
        [np.random.default_rng(_child(seed, TAU_STREAM, g)).random(NOISE_GROUP) for g in groups]
    )
    offset = groups[0] * NOISE_GROUP
    return np.asarray(law.sample_tau(1.0 - u[start - offset : stop - offset]), dtype=float)


def _simulate(
    policy: PolicyField,
    p: MarketParams,
    l0: float,
    h0: float,
    cfg: PathConfig,
    law: Optional[Law],
    record: bool = False,
) -> _Outcome:
    if l0 <= 0.0 or h0 <= 0.0:
        raise DomainError(f"l0 and h0 must be > 0, got l0={l0}, h0={h0}")
    horizon = simulation_horizon(cfg, law)
    times = _time_nodes(horizon, cfg.dt)
    n_steps = times.size - 1
    if cfg.n_paths * n_steps > cfg.path_budget:
        raise SimulationError(
            f"{cfg.n_paths} paths x {n_steps} steps exceeds the path budget {cfg.path_budget:g}"
        )
    survival = np.asarray(law.survival(times)) if law is not None else np.ones_like(times)

    logger.info(
        f"Simulating {cfg.n_paths} paths, {n_steps} steps of {times[1]:.3g} "
        f"(antithetic={cfg.antithetic}, seed={cfg.seed})"
    )
    pieces = [
        _simulate_chunk(policy, p, l0, h0, times, survival, cfg, law, start, min(start + cfg.chunk_size, cfg.n_paths), record)
        for start in range(0, cfg.n_paths, cfg.chunk_size)
    ]
    outcome = _Outcome(
        survival_weighted=np.concatenate([o.survival_weighted for o in pieces]),
        random_tau=np.concatenate([o.random_tau for o in pieces]),
        taus=np.concatenate([o.taus for o in pieces]),
        death=np.concatenate([o.death for o in pieces]),
        absorbed=np.concatenate([o.absorbed for o in pieces]),
        aborted=np.concatenate([o.aborted for o in pieces]),
        step=float(times[1] - times[0]),
    )
    if record:
        outcome.paths = PathEnsemble(
            times=times,
            **{
                name: np.concatenate([getattr(o.paths, name) for o in pieces])
                for name in ("liquid", "illiquid", "pi", "c", "alive", "absorbed", "aborted")
            },
        )
    n_absorbed = int(outcome.absorbed.sum())
    n_aborted = int(outcome.aborted.sum())
    if n_absorbed or n_aborted:
        logger.warning(f"{n_absorbed} paths absorbed at L <= 0, {n_aborted} aborted")
    return outcome


def _simulate_chunk(
    policy: PolicyField,
    p: MarketParams,
    l0: float,
    h0: float,
    times: np.ndarray,
    survival: np.ndarray,
    cfg: PathConfig,
    law: Optional[Law],
    start: int,
    stop: int,
    record: bool,
) -> _Outcome:
    n = stop - start
    n_steps = times.size - 1
    step = float(times[1] - times[0])
    noise, row, sign = _increment_streams(cfg.seed, start, stop, cfg.antithetic)
    taus = sample_taus(law, cfg.seed, start, stop) if law is not None else np.full(n, np.inf)

    L = np.full(n, float(l0))
    H = np.full(n, float(h0))
    alive = np.ones(n, dtype=bool)
    absorbed = np.zeros(n, dtype=bool)
    aborted = np.zeros(n, dtype=bool)
    death = np.full(n, np.inf)
    sw = np.zeros(n)
    rt = np.zeros(n)
    lc_prev = np.zeros(n)

    growth = (p.net_growth - 0.5 * p.eta**2) * step
    sqrt_dt = math.sqrt(step)
    carry = math.exp(p.r * step)
    annuity = math.expm1(p.r * step) / p.r if p.r != 0.0 else step
    rho_bar = math.sqrt(1.0 - p.rho**2)

    if record:
        shape = (n, n_steps + 1)
        rec = {name: np.zeros(shape) for name in ("liquid", "illiquid", "pi", "c")}
        rec_alive = np.zeros(shape, dtype=bool)

    def observe(k: int) -> tuple[np.ndarray, np.ndarray]:
        nonlocal alive, lc_prev
        t = float(times[k])
        pi = np.zeros(n)
        c = np.zeros(n)
        outside = alive & (L / H < policy.z_min)
        live = alive & ~outside
        if live.any():
            pi[live], c[live] = policy.evaluate(t, L[live], H[live])
        bad = live & ~(np.isfinite(pi) & np.isfinite(c) & (c > 0.0))
        failed = outside | bad
        if failed.any():
            aborted[failed] = True
            death[failed] = t
            alive = alive & ~failed
            pi[~alive] = 0.0
            c[~alive] = 0.0

        lc = np.zeros(n)
        lc[alive] = np.log(c[alive])
        if k > 0:
            sw[:] += 0.5 * step * (survival[k - 1] * lc_prev + survival[k] * lc)
            t0 = float(times[k - 1])
            whole = taus >= t
            rt[whole] += 0.5 * step * (lc_prev[whole] + lc[whole])
            part = (taus > t0) & (taus < t)
            if part.any():
                frac = taus[part] - t0
                lc_tau = lc_prev[part] + (lc[part] - lc_prev[part]) * frac / step
                rt[part] += 0.5 * frac * (lc_prev[part] + lc_tau)
        lc_prev = lc

        if record:
            rec["liquid"][:, k] = L
            rec["illiquid"][:, k] = H
            rec["pi"][:, k] = pi
            rec["c"][:, k] = c
            rec_alive[:, k] = alive
        return pi, c

    for block_start in range(0, n_steps, BLOCK_STEPS):
        block = min(BLOCK_STEPS, n_steps - block_start)
        draws = noise.draw(block)[:, row] * sign[None, :, None]
        for j in range(block):
            k = block_start + j
            pi, c = observe(k)
            dw1 = sqrt_dt * draws[j, :, 0]
            dw2 = sqrt_dt * draws[j, :, 1]
            L_next = carry * L + annuity * (p.delta * H + pi * p.excess_return - c) + p.sigma * pi * dw1
            H = H * np.exp(growth + p.eta * (p.rho * dw1 + rho_bar * dw2))
            hit = alive & (L_next <= 0.0)
            if hit.any():
                absorbed[hit] = True
                death[hit] = times[k + 1]
                alive = alive & ~hit
            L = np.where(alive, L_next, 0.0)
    observe(n_steps)

    paths = None
    if record:
        paths = PathEnsemble(
            times=times,
            liquid=rec["liquid"],
            illiquid=rec["illiquid"],
            pi=rec["pi"],
            c=rec["c"],
            alive=rec_alive,
            absorbed=absorbed,
            aborted=aborted,
        )
    return _Outcome(
        survival_weighted=sw,
        random_tau=rt,
        taus=taus,
        death=death,
        absorbed=absorbed,
        aborted=aborted,
        step=step,
        paths=paths,
    )


def simulate_paths(
    policy: PolicyField,
    p: MarketParams,
    l0: float,
    h0: float,
    cfg: PathConfig,
    law: Optional[Law] = None,
) -> PathEnsemble:
    """Simulate and record full paths.

    The horizon is cfg.horizon, or the survival < 1e-6 time of law.
    """
    outcome = _simulate(policy, p, l0, h0, cfg, law, record=True)
    assert outcome.paths is not None
    return outcome.paths


def _estimate(
    values: np.ndarray,
    valid: np.ndarray,
    absorbed: np.ndarray,
    cfg: PathConfig,
    label: str,
) -> UtilityEstimate:
    invalid_fraction = float(1.0 - np.mean(valid))
    if invalid_fraction > cfg.max_invalid_fraction:
        raise SimulationError(
            f"{label}: {invalid_fraction:.2%} invalid paths exceeds "
            f"{cfg.max_invalid_fraction:.2%}"
        )
    if cfg.antithetic:
        ok = valid.reshape(-1, 2).all(axis=1)
        samples = values.reshape(-1, 2)[ok].mean(axis=1)
    else:
        samples = values[valid]
    if samples.size == 0:
        raise SimulationError(f"{label}: no valid paths")
    mean = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    estimate = UtilityEstimate(
        mean=mean,
        std_error=std_error,
        n_effective=int(samples.size),
        invalid_fraction=invalid_fraction,
        absorbed_fraction=float(np.mean(absorbed)),
    )
    logger.info(f"{label}: {mean:.6f} +/- {std_error:.2e} ({samples.size} samples)")
    return estimate


def estimate_utilities(
    policy: PolicyField,
    p: MarketParams,
    law: Law,
    l0: float,
    h0: float,
    cfg: PathConfig,
) -> tuple[UtilityEstimate, UtilityEstimate]:
    """(random-tau, survival-weighted) estimates from one path ensemble."""
    outcome = _simulate(policy, p, l0, h0, cfg, law)
    random_tau = _estimate(
        outcome.random_tau, outcome.valid_random_tau, outcome.absorbed, cfg, "random-tau"
    )
    survival_weighted = _estimate(
        outcome.survival_weighted,
        outcome.valid_survival_weighted,
        outcome.absorbed,
        cfg,
        "survival-weighted",
    )
    return random_tau, survival_weighted


def estimate_utility_random_tau(
    policy: PolicyField,
    p: MarketParams,
    law: Law,
    l0: float,
    h0: float,
    cfg: PathConfig,
) -> UtilityEstimate:
    """E[integral_0^tau log c_t dt] with tau drawn per path."""
    outcome = _simulate(policy, p, l0, h0, cfg, law)
    return _estimate(
        outcome.random_tau, outcome.valid_random_tau, outcome.absorbed, cfg, "random-tau"
    )


def estimate_utility_survival_weighted(
    policy: PolicyField,
    p: MarketParams,
    law: Law,
    l0: float,
    h0: float,
    cfg: PathConfig,
) -> UtilityEstimate:
    """E[integral_0^T S(t) log c_t dt] over the simulation horizon."""
    outcome = _simulate(policy, p, l0, h0, cfg, law)
    return _estimate(
        outcome.survival_weighted,
        outcome.valid_survival_weighted,
        outcome.absorbed,
        cfg,
        "survival-weighted",
    )


def pooled_standard_error(a: UtilityEstimate, b: UtilityEstimate) -> float:
    return math.sqrt(a.std_error**2 + b.std_error**2)


def perturbation_test(
    policy: PolicyField,
    p: MarketParams,
    law: Law,
    l0: float,
    h0: float,
    cfg: PathConfig,
    eps: float = 0.2,
) -> PerturbationReport:
    """Compare a policy with its (1 +/- eps)-scaled consumption and investment.

    Passes when no perturbed estimate exceeds the unperturbed one by more
    than two pooled standard errors. All runs share the seed.
    """
    if not 0.0 <= eps < 0.5:
        raise DomainError(f"eps must lie in [0, 0.5), got {eps}")
    base = estimate_utility_survival_weighted(policy, p, law, l0, h0, cfg)
    variants = {
        f"c*{1 + eps:g}": ScaledPolicy(policy, c_scale=1.0 + eps),
        f"c*{1 - eps:g}": ScaledPolicy(policy, c_scale=1.0 - eps),
        f"pi*{1 + eps:g}": ScaledPolicy(policy, pi_scale=1.0 + eps),
        f"pi*{1 - eps:g}": ScaledPolicy(policy, pi_scale=1.0 - eps),
    }
    perturbed: dict[str, UtilityEstimate] = {}
    margins: list[float] = []
    passed = True
    for name, variant in variants.items():
        estimate = estimate_utility_survival_weighted(variant, p, law, l0, h0, cfg)
        perturbed[name] = estimate
        gap = estimate.mean - base.mean
        pooled = pooled_standard_error(estimate, base)
        if pooled > 0.0:
            margins.append(gap / pooled)
        else:
            margins.append(0.0 if gap == 0.0 else math.copysign(math.inf, gap))
        if gap > 2.0 * pooled:
            passed = False
            logger.info(f"perturbation {name} improves utility by {gap:.3e}")
    return PerturbationReport(
        eps=eps,
        base=base,
        perturbed=perturbed,
        passed=passed,
        worst_margin=max(margins),
    )
