"""Iterative tuning of the reaction probability vectors.

One strategy is tuned at a time.  Starting from a do-nothing-heavy
policy with best utilisation zero, each iteration evaluates the
candidate by averaging n seeded runs; a candidate that beats the best is
kept, otherwise the search reverts to the incumbent and moves to the
next disruption type (cyclic D1..D7).  The current disruption's vector
is then perturbed with clamped uniform noise and renormalised.
Replication seeds are shared across iterations (common random numbers),
so the accepted-best curve reflects policy changes rather than draw
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reactive import (
    DISRUPTION_KINDS,
    LEGAL_REACTIONS,
    ReactionPolicy,
    UpdateStrategy,
    prior_policy,
)
from .simulator import run_replications


@dataclass
class TunerConfig:
    strategy: str = "UP4"
    n_runs: int = 10
    max_iterations: int = 100
    perturbation_scale: float = 0.2
    patience: int = 20          # iterations without acceptance before stopping
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < 1 or self.max_iterations < 1:
            raise ValueError("n_runs and max_iterations must be positive")
        if not (0 < self.perturbation_scale <= 1):
            raise ValueError("perturbation_scale must be in (0, 1]")


@dataclass
class TuningResult:
    policy: ReactionPolicy
    trace: list[dict] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def perturb(policy: ReactionPolicy, strategy: UpdateStrategy, kind: str,
            scale: float, rng) -> ReactionPolicy:
    """Jitter one (strategy, kind) vector: independent uniform noise in
    [-scale, scale] per legal reaction, clamped at zero, renormalised.
    All other vectors are unchanged; illegal reactions stay at zero."""
    if not (0 < scale <= 1):
        raise ValueError("scale must be in (0, 1]")
    vector = policy.vector(strategy.name, kind)
    legal = LEGAL_REACTIONS[kind]
    weights = {}
    for r in legal:
        w = vector.get(r, 0.0) + rng.uniform(-scale, scale)
        weights[r] = max(w, 0.0)
    total = sum(weights.values())
    if total <= 0:
        weights = {r: 1.0 for r in legal}  # degenerate rescue: uniform
        total = float(len(legal))
    cell = {r: w / total for r, w in weights.items()}
    return policy.with_vector(strategy.name, kind, cell)


def tune(config: TunerConfig, calibration, rng=None) -> TuningResult:
    """Hill-climb the reaction probabilities for one update strategy.

    `calibration` is a WeekInstance (fixed demand) or GenParams (fresh
    weeks per evaluation).  Deterministic given (config, seed).
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    strategy = UpdateStrategy.named(config.strategy)
    candidate = prior_policy()
    best_policy = candidate
    best_util = 0.0
    kind_idx = 0
    current_kind = DISRUPTION_KINDS[kind_idx]
    trace: list[dict] = []
    since_accept = 0
    converged = False

    for iteration in range(1, config.max_iterations + 1):
        agg = run_replications(calibration, candidate, strategy,
                               config.n_runs, base_seed=config.seed)
        mean_util = agg.mean["utilisation"]
        accepted = mean_util > best_util
        if accepted:
            best_util = mean_util
            best_policy = candidate
            since_accept = 0
        else:
            candidate = best_policy
            kind_idx = (kind_idx + 1) % len(DISRUPTION_KINDS)
            since_accept += 1
        trace.append({
            "iteration": iteration,
            "disruption": current_kind,
            "mean_utilisation": mean_util,
            "accepted": accepted,
            "best_utilisation": best_util,
        })
        if since_accept >= config.patience:
            converged = True
            break
        current_kind = DISRUPTION_KINDS[kind_idx]
        candidate = perturb(candidate, strategy, current_kind,
                            config.perturbation_scale, rng)

    return TuningResult(policy=best_policy, trace=trace, converged=converged,
                        iterations=len(trace))
