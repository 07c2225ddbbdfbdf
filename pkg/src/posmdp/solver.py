"""Randomized point-based value iteration with importance-sampled backups.

The value function is a finite set of alpha vectors, each an |S|-dimensional
hyperplane tagged with the action whose backup produced it. A backup at one
belief replaces the sojourn-time integral in the Bellman operator with a
Monte Carlo sum over the collected time samples, reweighted by
``exp(-beta * tau_n) / D(tau_n)`` against the collection mixture ``D``. The
outer loop backs up a shrinking random subset of the collected beliefs until
every one of them is improved, and repeats until the sup-norm change over
the belief set falls below a threshold.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import compute_stage_reward, model_hash
from .sampler import SampleBank, mixture_density

__all__ = [
    "AlphaVector",
    "ValueFunction",
    "BackupCache",
    "InitialValueError",
    "initial_value_function",
    "constant_value_function",
    "conservative_value_function",
    "alpha_given_a_tau_o",
    "backup",
    "perseus_update",
    "solve",
    "SolveResult",
    "IterationRecord",
    "PolicyMismatchError",
    "save_policy",
    "load_policy",
]

DUPLICATE_TOL = 1e-9


class InitialValueError(RuntimeError):
    """The Theorem-style initial bound does not apply (discount ratio >= 1)."""


@dataclass(frozen=True)
class AlphaVector:
    values: np.ndarray  # [s]
    action: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("alpha vector entries must be finite")


class ValueFunction:
    """Nonempty set of alpha vectors; value is the max inner product."""

    def __init__(self, vectors):
        self.vectors = list(vectors)
        if not self.vectors:
            raise ValueError("value function needs at least one alpha vector")
        self._matrix = np.stack([v.values for v in self.vectors])
        self._actions = np.array([v.action for v in self.vectors])

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def actions(self) -> np.ndarray:
        return self._actions

    def value_at(self, belief) -> float:
        return float(np.max(self._matrix @ np.asarray(belief, dtype=float)))

    def action_at(self, belief) -> int:
        # Ties break to the lowest vector index (argmax returns the first max).
        return int(self._actions[np.argmax(self._matrix @ np.asarray(belief, dtype=float))])

    def values_at(self, belief_matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(belief_matrix) @ self._matrix.T).max(axis=1)


def constant_value_function(model, value: float, action: int = 0) -> ValueFunction:
    """Single constant alpha vector, e.g. a hand-picked pessimistic bound."""
    return ValueFunction([AlphaVector(np.full(model.n_states, float(value)), action)])


def initial_value_function(model, bank: SampleBank) -> ValueFunction:
    """Uniform lower bound M / (1 - lambda) from the worst stage reward M.

    ``lambda`` is the extreme importance ratio over the collected samples
    (minimum when M >= 0, maximum when M < 0, so the bound errs downward).
    Raises :class:`InitialValueError` when that ratio reaches 1, in which
    case callers should supply an explicit pessimistic bound via
    :func:`constant_value_function` instead.
    """
    m_min = compute_stage_reward(model).minimum()
    if m_min == 0.0:
        return constant_value_function(model, 0.0)
    if bank.n_samples > 0:
        ratios = np.exp(-model.beta * bank.times) / mixture_density(bank, model, bank.times)
        lam = float(ratios.min() if m_min > 0 else ratios.max())
    else:
        discounts = [d.expected_discount(model.beta) for d in model.sojourn.values()]
        lam = min(discounts) if m_min > 0 else max(discounts)
    if lam >= 1.0:
        raise InitialValueError(
            f"extreme importance ratio {lam:.6g} >= 1; the closed-form initial bound "
            "does not apply. Pass an explicit pessimistic constant_value_function instead."
        )
    return constant_value_function(model, m_min / (1.0 - lam))


def conservative_value_function(model) -> ValueFunction:
    """Uniform bound M / (1 - lambda) using true expected per-stage discounts.

    Always applicable (every sojourn law has ``E[exp(-beta tau)] < 1`` when
    beta > 0), at the cost of being looser than the sample-based bound of
    :func:`initial_value_function`.
    """
    m_min = compute_stage_reward(model).minimum()
    if m_min == 0.0:
        return constant_value_function(model, 0.0)
    discounts = [d.expected_discount(model.beta) for d in model.sojourn.values()]
    lam = min(discounts) if m_min > 0 else max(discounts)
    if lam >= 1.0:
        raise InitialValueError(
            "expected per-stage discount reaches 1 (beta = 0 with nonzero rewards); "
            "no finite uniform bound exists."
        )
    return constant_value_function(model, m_min / (1.0 - lam))


class BackupCache:
    """Per-(model, bank) precomputation shared by every backup.

    Stores, per action, the [g, s, s'] tensors ``P(s'|s,a) f(tau_g|s,a,s')``
    over the *unique* sampled times with nonzero density under that action,
    with the importance factors ``exp(-beta tau_n) / D(tau_n) / |C|`` summed
    within each group. Grouping is exact — the density depends on the sample
    only through tau — and collapses the thousands of repeats that atom-valued
    sojourn laws produce.
    """

    def __init__(self, model, bank: SampleBank):
        self.model = model
        self.bank = bank
        self.stage_reward = compute_stage_reward(model).values  # [s, a]
        density = mixture_density(bank, model, bank.times)
        kappa_all = np.exp(-model.beta * bank.times) / density / max(bank.n_samples, 1)
        unique_taus, inverse = np.unique(bank.times, return_inverse=True)
        kappa_grouped = np.zeros(unique_taus.size)
        np.add.at(kappa_grouped, inverse, kappa_all)
        self.trans_sojourn = []  # per action: [g, s, s']
        self.kappa = []  # per action: [g]
        for a in range(model.n_actions):
            f_vals = model.sojourn_density_samples(a, unique_taus)
            keep = np.flatnonzero(f_vals.reshape(unique_taus.size, -1).any(axis=1))
            self.trans_sojourn.append(
                model.transition[None, :, a, :] * f_vals[keep]
            )
            self.kappa.append(kappa_grouped[keep])
        # G as [o, s'] per action for mixing with alpha vectors.
        self.obs = [model.observation_kernel[a].T.copy() for a in range(model.n_actions)]


def alpha_given_a_tau_o(model, vf: ValueFunction, action: int, tau: float, observation: int):
    """Project every alpha vector through one (action, time, observation).

    Returns an [len(vf), s] array whose rows are
    ``sum_s' G(o|a,s') P(s'|s,a) f(tau|s,a,s') alpha(s')``.
    """
    f = model.sojourn_density_matrix(action, tau)
    weighted = model.transition[:, action, :] * f  # [s, s']
    g_col = model.observation_kernel[action, :, observation]  # [s']
    return vf.matrix @ (weighted * g_col[None, :]).T


def backup(model, vf: ValueFunction, bank: SampleBank, belief, cache: BackupCache = None):
    """One Bellman backup at ``belief`` using the sampled-time estimator."""
    if cache is None:
        cache = BackupCache(model, bank)
    xi = np.asarray(belief, dtype=float)
    alpha_mat = vf.matrix  # [v, s']
    n_v = alpha_mat.shape[0]
    n_obs = model.n_observations

    best_alpha = None
    best_value = -np.inf
    best_action = -1
    for a in model.admissible_actions(xi):
        m_a = cache.trans_sojourn[a]  # [g, s, s']
        g_a = cache.obs[a]  # [o, s']
        predicted = np.einsum("s,nst->nt", xi, m_a)  # [g, s']
        # score[g, o, v] = sum_s' predicted[g,s'] G[o,s'] alpha[v,s']
        mixed = (g_a[:, None, :] * alpha_mat[None, :, :]).reshape(n_obs * n_v, -1)
        scores = (predicted @ mixed.T).reshape(-1, n_obs, n_v)
        winners = scores.argmax(axis=2)  # [g, o]
        chosen = alpha_mat[winners]  # [g, o, s']
        future = cache.kappa[a][:, None] * np.einsum("ot,not->nt", g_a, chosen)  # [g, s']
        alpha_a = cache.stage_reward[:, a] + np.einsum("nst,nt->s", m_a, future)
        value = float(xi @ alpha_a)
        if value > best_value:
            best_value = value
            best_alpha = alpha_a
            best_action = int(a)
    return AlphaVector(best_alpha, best_action)


def _is_duplicate(values: np.ndarray, collected: list) -> bool:
    return any(np.max(np.abs(values - other.values)) <= DUPLICATE_TOL for other in collected)


def perseus_update(model, vf: ValueFunction, bank: SampleBank,
                   rng: np.random.Generator, cache: BackupCache = None) -> ValueFunction:
    """One randomized improvement pass over the collected beliefs.

    Repeatedly backs up a random not-yet-improved belief; if the backup does
    not improve that belief, the best old vector there is kept instead. The
    result improves (weakly) at every collected belief.
    """
    if cache is None:
        cache = BackupCache(model, bank)
    belief_mat = bank.belief_matrix()
    old_values = vf.values_at(belief_mat)
    remaining = np.arange(len(belief_mat))
    new_vectors = []

    while remaining.size:
        pick = remaining[rng.integers(remaining.size)]
        xi = belief_mat[pick]
        alpha = backup(model, vf, bank, xi, cache)
        if float(xi @ alpha.values) < old_values[pick]:
            alpha = vf.vectors[int(np.argmax(vf.matrix @ xi))]
        improved = belief_mat[remaining] @ alpha.values >= old_values[remaining]
        # The picked belief is always settled (the guard above keeps its best
        # old vector), even if float summation order makes the sweep miss it.
        improved |= remaining == pick
        remaining = remaining[~improved]
        if not _is_duplicate(alpha.values, new_vectors):
            new_vectors.append(alpha)
    return ValueFunction(new_vectors)


@dataclass
class IterationRecord:
    iteration: int
    n_vectors: int
    residual: float
    min_improvement: float
    wall_time: float


@dataclass
class SolveResult:
    value_function: ValueFunction
    trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _bellman_sweep(model, vf: ValueFunction, bank: SampleBank,
                   cache: BackupCache, epsilon: float):
    """Back up every collected belief once; return vectors improving > epsilon.

    A randomized pass can terminate with a tiny sup-norm change while large
    improvements are still available: one early backup may weakly cover every
    belief, ending the pass before the improvable ones are picked. The sweep
    certifies (or refutes) stability under backups at all of B.
    """
    belief_mat = bank.belief_matrix()
    values = vf.values_at(belief_mat)
    improving = []
    for xi, old in zip(belief_mat, values):
        alpha = backup(model, vf, bank, xi, cache)
        if float(xi @ alpha.values) > old + epsilon and not _is_duplicate(
            alpha.values, improving
        ):
            improving.append(alpha)
    return improving


def solve(model, bank: SampleBank, v0: ValueFunction = None, epsilon: float = None,
          max_iters: int = 500, seed: int = 0) -> SolveResult:
    """Iterate randomized updates until the value is stable on B.

    Convergence requires both a sup-norm change below ``epsilon`` across one
    randomized pass and a verification sweep showing no single backup at any
    collected belief improves it by more than ``epsilon``; improving vectors
    found by the sweep are folded in and iteration continues. Non-convergence
    within ``max_iters`` is reported on the result, not raised. The default
    epsilon scales with the largest stage-reward magnitude.
    """
    if epsilon is None:
        epsilon = 1e-4 * max(np.abs(compute_stage_reward(model).values).max(), 1.0)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    rng = np.random.default_rng(seed)
    cache = BackupCache(model, bank)
    vf = v0 if v0 is not None else initial_value_function(model, bank)
    belief_mat = bank.belief_matrix()
    values = vf.values_at(belief_mat)

    result = SolveResult(value_function=vf)
    for iteration in range(1, max_iters + 1):
        start = time.perf_counter()
        vf = perseus_update(model, vf, bank, rng, cache)
        new_values = vf.values_at(belief_mat)
        diffs = new_values - values
        record = IterationRecord(
            iteration=iteration,
            n_vectors=len(vf),
            residual=float(np.max(np.abs(diffs))),
            min_improvement=float(diffs.min()),
            wall_time=time.perf_counter() - start,
        )
        values = new_values
        result.value_function = vf
        if record.residual < epsilon:
            improving = _bellman_sweep(model, vf, bank, cache, epsilon)
            if not improving:
                result.trace.append(record)
                result.converged = True
                break
            vf = ValueFunction(vf.vectors + improving)
            values = vf.values_at(belief_mat)
            record.residual = float(np.max(values - new_values))
            record.n_vectors = len(vf)
            record.wall_time = time.perf_counter() - start
            result.value_function = vf
        result.trace.append(record)
    return result


# ---------------------------------------------------------------------------
# Policy files
# ---------------------------------------------------------------------------

class PolicyMismatchError(ValueError):
    """The policy file was solved against a different model."""


def save_policy(result: SolveResult, model, path) -> None:
    doc = {
        "model_hash": model_hash(model),
        "converged": result.converged,
        "vectors": [
            {"action": model.actions[v.action], "values": v.values.tolist()}
            for v in result.value_function
        ],
        "trace": [asdict(rec) for rec in result.trace],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_policy(path, model) -> SolveResult:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["model_hash"] != model_hash(model):
        raise PolicyMismatchError(
            "policy file model hash does not match the supplied model"
        )
    vectors = [
        AlphaVector(np.asarray(rec["values"], dtype=float), model.actions.index(rec["action"]))
        for rec in doc["vectors"]
    ]
    result = SolveResult(
        value_function=ValueFunction(vectors),
        trace=[IterationRecord(**rec) for rec in doc["trace"]],
        converged=doc["converged"],
    )
    return result
