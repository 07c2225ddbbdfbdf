"""Rollout harness: execute the model dynamics and score policies.

A rollout alternates the policy's greedy action, one sampled transition,
and the time-aware belief update, accumulating rewards discounted by the
elapsed continuous time. "Episodes" are independent restarts from the
initial belief; any episodic structure (such as a reset transition) lives
in the model itself, not here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .belief import update_with_time

__all__ = [
    "HistoryRecord",
    "step",
    "rollout",
    "evaluate",
    "write_trajectory",
]


@dataclass
class HistoryRecord:
    """Observable history of one rollout: (action, tau, observation) triples."""

    entries: list = field(default_factory=list)  # (action, tau, observation)
    beliefs: list = field(default_factory=list)  # belief after each entry
    rewards: list = field(default_factory=list)  # discounted contribution per entry
    cumulative_time: float = 0.0
    cumulative_discounted_reward: float = 0.0

    def append(self, action: int, tau: float, observation: int,
               belief: np.ndarray, discounted_reward: float) -> None:
        self.entries.append((action, tau, observation))
        self.beliefs.append(np.asarray(belief, dtype=float))
        self.rewards.append(discounted_reward)
        self.cumulative_time += tau
        self.cumulative_discounted_reward += discounted_reward

    def __len__(self) -> int:
        return len(self.entries)


def step(model, s: int, a: int, rng: np.random.Generator):
    """One transition: draw (s', tau, o) and the realized stage reward.

    The reward is the lump sum plus the rate component integrated over the
    realized sojourn, ``r1(s,a) + r2(s,a,s') (1 - exp(-beta tau)) / beta``
    (``r2 * tau`` when undiscounted), discounted to the start of the stage.
    """
    if not model.admissible[s, a]:
        raise ValueError(f"action {a} is not admissible in state {s}")
    probs = model.transition[s, a]
    s2 = int(np.searchsorted(np.cumsum(probs), rng.random()))
    s2 = min(s2, model.n_states - 1)
    tau = float(model.sojourn[(s, a, s2)].sample(rng))
    obs_probs = model.observation_kernel[a, s2]
    o = int(np.searchsorted(np.cumsum(obs_probs), rng.random()))
    o = min(o, model.n_observations - 1)
    rate = model.rate_reward[s, a, s2]
    if model.beta > 0:
        accrued = rate * (1.0 - math.exp(-model.beta * tau)) / model.beta
    else:
        accrued = rate * tau
    reward = float(model.lump_reward[s, a] + accrued)
    return s2, tau, o, reward


def rollout(model, value_function, xi0, epochs: int, rng: np.random.Generator) -> HistoryRecord:
    """Run ``epochs`` decision stages greedily under ``value_function``.

    The hidden state is sampled from ``xi0`` once; afterwards the belief is
    filtered from the same (a, tau, o) stream the agent observes. Returns
    the history; its cumulative discounted reward is the return estimate.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    xi = np.asarray(xi0, dtype=float)
    s = int(np.searchsorted(np.cumsum(xi), rng.random()))
    s = min(s, model.n_states - 1)
    history = HistoryRecord()
    discount = 1.0
    for _ in range(epochs):
        a = value_function.action_at(xi)
        s2, tau, o, reward = step(model, s, a, rng)
        xi = update_with_time(model, xi, a, tau, o)
        history.append(a, tau, o, xi, discount * reward)
        discount *= math.exp(-model.beta * tau)
        s = s2
    return history


def evaluate(model, value_function, episodes: int, epochs: int, seed: int):
    """Mean discounted return and its standard error over independent rollouts.

    Episode generators are spawned from one seed sequence, so results are
    reproducible and independent of evaluation order. SE is ``None`` for a
    single episode.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    streams = np.random.SeedSequence(seed).spawn(episodes)
    returns = np.array([
        rollout(model, value_function, model.initial_belief, epochs,
                np.random.default_rng(stream)).cumulative_discounted_reward
        for stream in streams
    ])
    mean = float(returns.mean())
    if episodes == 1:
        return mean, None
    se = float(returns.std(ddof=1) / math.sqrt(episodes))
    return mean, se


def write_trajectory(history: HistoryRecord, path, model) -> None:
    """Dump one rollout as CSV: epoch, action, tau, observation, belief, return."""
    header = ["epoch", "action", "tau", "observation"]
    header += [f"belief_{i + 1}" for i in range(model.n_states)]
    header += ["discounted_reward_so_far"]
    running = 0.0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for epoch, ((a, tau, o), belief, reward) in enumerate(
            zip(history.entries, history.beliefs, history.rewards), start=1
        ):
            running += reward
            row = [epoch, model.actions[a], repr(float(tau)), model.observations[o]]
            row += [repr(float(b)) for b in belief]
            row += [repr(float(running))]
            writer.writerow(row)
