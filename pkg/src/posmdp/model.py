"""POSMDP model representation, validation, rewards, builders, and file I/O.

A model is a finite-state, finite-action, finite-observation semi-Markov
decision process with partial observability: a row-stochastic transition
tensor ``P(s' | s, a)``, a sojourn-time law per reachable ``(s, a, s')``
triple, a row-stochastic observation kernel ``G(o | a, s')``, lump-sum and
continuous-rate rewards, a continuous discount rate, and an initial belief.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import (
    BetaDensity,
    DeterministicAtom,
    InverseGaussian,
    SojournDistribution,
    TruncatedGaussian,
    mixed_density,
)

__all__ = [
    "PosmdpModel",
    "MixedObservable",
    "StageRewardTable",
    "ValidationReport",
    "ModelFormatError",
    "compute_stage_reward",
    "validate",
    "build_bus_problem",
    "build_maintenance_problem",
    "load_model",
    "save_model",
    "model_to_dict",
    "model_from_dict",
    "model_hash",
]

ROW_SUM_TOL = 1e-9
BELIEF_SUM_TOL = 1e-12
MODEL_FILE_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model document cannot be parsed."""


@dataclass(frozen=True)
class MixedObservable:
    """Factorization of a state into an observed and a hidden coordinate.

    ``state_coords[s]`` gives ``(observable_index, hidden_index)`` for state
    ``s``; used by the policy-mesh export for problems where one coordinate
    is perfectly observed.
    """

    observable_labels: tuple
    hidden_labels: tuple
    state_coords: tuple  # tuple of (observable_index, hidden_index) per state


@dataclass(frozen=True)
class PosmdpModel:
    states: tuple
    actions: tuple
    observations: tuple
    transition: np.ndarray  # [s, a, s']
    sojourn: dict  # (s, a, s') -> SojournDistribution
    observation_kernel: np.ndarray  # [a, s', o]
    lump_reward: np.ndarray  # [s, a]
    rate_reward: np.ndarray  # [s, a, s']
    beta: float
    initial_belief: np.ndarray
    admissible: np.ndarray = None  # bool [s, a]; default all actions everywhere
    initial_observation_kernel: np.ndarray = None  # optional [s', o]
    mixed_observable: MixedObservable = None
    horizon: float = math.inf

    def __post_init__(self):
        if self.admissible is None:
            object.__setattr__(
                self, "admissible", np.ones((self.n_states, self.n_actions), dtype=bool)
            )
        for name in ("transition", "observation_kernel", "lump_reward", "rate_reward",
                     "initial_belief"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(
            self,
            "atom_values",
            frozenset(d.atom for d in self.sojourn.values() if d.atom is not None),
        )
        by_action = [[] for _ in self.actions]
        for (s, a, s2), dist in self.sojourn.items():
            by_action[a].append((s, s2, dist))
        object.__setattr__(self, "_sojourn_by_action", tuple(tuple(v) for v in by_action))

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def n_observations(self):
        return len(self.observations)

    def admissible_actions(self, belief: np.ndarray) -> np.ndarray:
        """Indices of actions admissible in every state of the belief support."""
        support = np.asarray(belief) > 0
        mask = self.admissible[support].all(axis=0)
        return np.flatnonzero(mask)

    def sojourn_density(self, s: int, a: int, s_next: int, tau) -> float:
        """Mixed-measure sojourn density f(tau | s, a, s')."""
        dist = self.sojourn.get((s, a, s_next))
        if dist is None:
            return 0.0
        return mixed_density(dist, tau, self.atom_values)

    def sojourn_density_matrix(self, a: int, tau: float) -> np.ndarray:
        """All f(tau | s, a, s') as an [s, s'] array (zero where P = 0)."""
        out = np.zeros((self.n_states, self.n_states))
        for s, s2, dist in self._sojourn_by_action[a]:
            out[s, s2] = mixed_density(dist, tau, self.atom_values)
        return out

    def sojourn_density_samples(self, a: int, taus: np.ndarray) -> np.ndarray:
        """f(tau_n | s, a, s') for a vector of times, shaped [n, s, s']."""
        taus = np.asarray(taus, dtype=float)
        out = np.zeros((taus.size, self.n_states, self.n_states))
        for s, s2, dist in self._sojourn_by_action[a]:
            out[:, s, s2] = mixed_density(dist, taus, self.atom_values)
        return out


@dataclass(frozen=True)
class StageRewardTable:
    """Expected discounted reward R(s, a) accrued over one decision stage."""

    values: np.ndarray  # [s, a]

    def minimum(self) -> float:
        return float(self.values.min())


def compute_stage_reward(model: PosmdpModel) -> StageRewardTable:
    """Assemble R(s, a) from the lump-sum and constant-rate components.

    The rate component integrates ``r2 * exp(-beta t)`` over the sojourn and
    averages over the successor state, which for a constant rate reduces to
    ``r2 * (1 - E[exp(-beta tau)]) / beta`` per transition (and ``r2 * E[tau]``
    in the undiscounted limit).
    """
    n_s, n_a = model.n_states, model.n_actions
    values = np.array(model.lump_reward, dtype=float)
    for (s, a, s2), dist in model.sojourn.items():
        p = model.transition[s, a, s2]
        if p == 0.0:
            continue
        rate = model.rate_reward[s, a, s2]
        if rate == 0.0:
            continue
        if model.beta > 0:
            values[s, a] += p * rate * (1.0 - dist.expected_discount(model.beta)) / model.beta
        else:
            values[s, a] += p * rate * dist.mean()
    return StageRewardTable(values=values)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(model: PosmdpModel) -> ValidationReport:
    """Check structural invariants and the boundedness assumptions."""
    report = ValidationReport()
    v = report.violations

    for s in range(model.n_states):
        for a in range(model.n_actions):
            row = model.transition[s, a]
            if np.any(row < 0):
                v.append(f"transition row (s={s}, a={a}) has negative entries")
            elif abs(row.sum() - 1.0) > ROW_SUM_TOL:
                v.append(f"transition row (s={s}, a={a}) sums to {row.sum():.12g}, not 1")
    for a in range(model.n_actions):
        for s2 in range(model.n_states):
            row = model.observation_kernel[a, s2]
            if np.any(row < 0):
                v.append(f"observation row (a={a}, s'={s2}) has negative entries")
            elif abs(row.sum() - 1.0) > ROW_SUM_TOL:
                v.append(f"observation row (a={a}, s'={s2}) sums to {row.sum():.12g}, not 1")

    for s in range(model.n_states):
        for a in range(model.n_actions):
            for s2 in np.flatnonzero(model.transition[s, a] > 0):
                if (s, a, int(s2)) not in model.sojourn:
                    v.append(f"missing sojourn distribution for reachable (s={s}, a={a}, s'={s2})")

    if np.any(model.initial_belief < 0):
        v.append("initial belief has negative entries")
    if abs(model.initial_belief.sum() - 1.0) > BELIEF_SUM_TOL:
        v.append(f"initial belief sums to {model.initial_belief.sum():.15g}, not 1")

    if not np.all(np.isfinite(model.lump_reward)) or not np.all(np.isfinite(model.rate_reward)):
        v.append("rewards must be finite")

    if not model.admissible.any(axis=1).all():
        v.append("every state needs at least one admissible action")

    # Finite number of decision epochs in finite time: some sojourn mass must
    # lie above a positive threshold for every admissible (s, a).
    for s in range(model.n_states):
        for a in np.flatnonzero(model.admissible[s]):
            dists = [
                (model.transition[s, a, s2], model.sojourn.get((s, a, int(s2))))
                for s2 in np.flatnonzero(model.transition[s, a] > 0)
            ]
            if any(d is None for _, d in dists):
                continue  # already reported above
            floors = [d.atom if d.atom is not None else d.mean() for _, d in dists]
            tau_check = min(floors) / 2.0
            mass = sum(p * d.cdf(tau_check) for p, d in dists)
            if mass > 1.0 - 1e-9:
                v.append(f"(s={s}, a={int(a)}) allows an unbounded burst of epochs: "
                         f"P(tau <= {tau_check:g}) = {mass:.12g}")

    for (s, a, s2), dist in model.sojourn.items():
        if not math.isfinite(dist.mean()):
            v.append(f"sojourn distribution at (s={s}, a={a}, s'={s2}) has infinite mean")

    return report


# ---------------------------------------------------------------------------
# Built-in problems
# ---------------------------------------------------------------------------

N_STOPS = 5
N_INTENSITIES = 3

# Mean bus travel time between consecutive stops, per traffic intensity.
_BUS_MU = {
    1: [5.0, 5.0, 5.0, 5.0],
    2: [5.0, 10.0, 10.0, 20.0],
    3: [10.0, 25.0, 25.0, 45.0],
}
# Fixed bike time from stop s straight to the last stop.
_BIKE_TIME = [30.0, 25.0, 20.0, 12.0]
_RESET_TIME = 455.0
BUS_BETA = 0.02


def _bus_state(stop: int, intensity: int) -> int:
    return stop * N_INTENSITIES + (intensity - 1)


def build_bus_problem(goal_reward: bool = True) -> PosmdpModel:
    """Commuter problem: ride the bus or give up and bike to the last stop.

    State is (stop, traffic intensity) with the stop observed perfectly and
    the intensity hidden. With ``goal_reward`` (the default) arriving pays a
    lump sum of 100 and travel itself is free; otherwise a unit cost rate is
    charged continuously while travelling.
    """
    states = tuple(f"stop{s}_traffic{i}" for s in range(N_STOPS) for i in range(1, N_INTENSITIES + 1))
    actions = ("bus", "bike")
    observations = tuple(str(s) for s in range(N_STOPS))
    n = len(states)

    transition = np.zeros((n, 2, n))
    sojourn = {}

    for i in range(1, N_INTENSITIES + 1):
        for stop in range(N_STOPS - 1):
            src = _bus_state(stop, i)
            # Staying on the bus advances one stop; intensity never changes.
            nxt = _bus_state(stop + 1, i)
            transition[src, 0, nxt] = 1.0
            mu = _BUS_MU[i][stop]
            sojourn[(src, 0, nxt)] = InverseGaussian(mu=mu, lam=10.0 * mu * mu)
            # Biking goes straight to the last stop in fixed time.
            dest = _bus_state(N_STOPS - 1, i)
            transition[src, 1, dest] = 1.0
            sojourn[(src, 1, dest)] = DeterministicAtom(_BIKE_TIME[stop])
        # Last stop: probabilistic reset to stop 0 with a fresh intensity,
        # after a long fixed delay so episodes stay decoupled by discounting.
        last = _bus_state(N_STOPS - 1, i)
        for a in range(2):
            for i2 in range(1, N_INTENSITIES + 1):
                start = _bus_state(0, i2)
                transition[last, a, start] = 1.0 / N_INTENSITIES
                sojourn[(last, a, start)] = DeterministicAtom(_RESET_TIME)

    observation_kernel = np.zeros((2, n, N_STOPS))
    for a in range(2):
        for stop in range(N_STOPS):
            for i in range(1, N_INTENSITIES + 1):
                observation_kernel[a, _bus_state(stop, i), stop] = 1.0

    lump = np.zeros((n, 2))
    rate = np.zeros((n, 2, n))
    if goal_reward:
        for i in range(1, N_INTENSITIES + 1):
            lump[_bus_state(N_STOPS - 1, i), :] = 100.0
    else:
        rate[:, :, :] = -1.0

    initial_belief = np.zeros(n)
    for i in range(1, N_INTENSITIES + 1):
        initial_belief[_bus_state(0, i)] = 1.0 / N_INTENSITIES

    mixed = MixedObservable(
        observable_labels=observations,
        hidden_labels=("low", "medium", "high"),
        state_coords=tuple((s // N_INTENSITIES, s % N_INTENSITIES) for s in range(n)),
    )

    return PosmdpModel(
        states=states,
        actions=actions,
        observations=observations,
        transition=transition,
        sojourn=sojourn,
        observation_kernel=observation_kernel,
        lump_reward=lump,
        rate_reward=rate,
        beta=BUS_BETA,
        initial_belief=initial_belief,
        mixed_observable=mixed,
    )


MAINTENANCE_BETA = 0.01

_MAINT_P_SLOW = np.array([
    [0.1043, 0.7413, 0.1493, 0.0051],
    [0.0, 0.1043, 0.7413, 0.1544],
    [0.0, 0.0, 0.1043, 0.8957],
    [0.0, 0.0, 0.0, 1.0],
])
_MAINT_P_DOSE = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.50, 0.50, 0.0, 0.0],
    [0.25, 0.70, 0.05, 0.0],
    [0.20, 0.55, 0.20, 0.05],
])
_MAINT_P_REPLACE = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
])
_MAINT_SOJOURN = (
    DeterministicAtom(78.7433),       # do nothing
    DeterministicAtom(85.3052),       # backwash
    DeterministicAtom(3.0),           # dose chemicals
    TruncatedGaussian(mu=10.0, sigma=1.5),  # replace
)
_MAINT_BETA_SHAPES = (BetaDensity(2, 18), BetaDensity(6, 18), BetaDensity(18, 18), BetaDensity(18, 6))
_MAINT_LUMP = (0.0, -100.0, -200.0, -500.0)
_MAINT_RATE = np.array([
    [500.0, 500.0, -100.0, -100.0],
    [250.0, 250.0, -100.0, -100.0],
    [-300.0, -300.0, -100.0, -100.0],
    [-500.0, -500.0, -100.0, -100.0],
])


def observation_bin_points(bins: int) -> np.ndarray:
    """Evenly spaced turbidity-ratio points on [0, 1], kept off the endpoints."""
    if bins < 2:
        raise ValueError(f"need at least 2 observation bins, got {bins}")
    return np.clip(np.linspace(0.0, 1.0, bins), 1e-9, 1.0 - 1e-9)


def discretized_beta_row(density: BetaDensity, bins: int) -> np.ndarray:
    raw = density.pdf(observation_bin_points(bins))
    return raw / raw.sum()


def build_maintenance_problem(observation_bins: int = 100) -> PosmdpModel:
    """Water-filter maintenance with turbidity-ratio observations.

    Four filter conditions, four maintenance actions, and a continuous
    observation in [0, 1] discretized into ``observation_bins`` points whose
    likelihood per action follows a beta density.
    """
    states = ("good", "acceptable", "poor", "awful")
    actions = ("nothing", "backwash", "dose", "replace")
    observations = tuple(f"o{k:03d}" for k in range(observation_bins))

    transition = np.stack([_MAINT_P_SLOW, _MAINT_P_SLOW, _MAINT_P_DOSE, _MAINT_P_REPLACE], axis=1)

    sojourn = {}
    for a in range(4):
        for s in range(4):
            for s2 in np.flatnonzero(transition[s, a] > 0):
                sojourn[(s, a, int(s2))] = _MAINT_SOJOURN[a]

    # Turbidity reflects the condition of the filter the system lands in, so
    # the beta shape is indexed by the successor state and shared across
    # actions.  (With action-indexed shapes the observation would carry no
    # state information at all and monitoring would be pointless.)
    observation_kernel = np.zeros((4, 4, observation_bins))
    for s2 in range(4):
        observation_kernel[:, s2, :] = discretized_beta_row(
            _MAINT_BETA_SHAPES[s2], observation_bins
        )

    lump = np.tile(np.array(_MAINT_LUMP), (4, 1))
    rate = np.repeat(_MAINT_RATE[:, :, None], 4, axis=2)

    return PosmdpModel(
        states=states,
        actions=actions,
        observations=observations,
        transition=transition,
        sojourn=sojourn,
        observation_kernel=observation_kernel,
        lump_reward=lump,
        rate_reward=rate,
        beta=MAINTENANCE_BETA,
        initial_belief=np.array([1.0, 0.0, 0.0, 0.0]),
    )


BUILTIN_MODELS = ("bus", "maintenance")


def build_builtin(name: str, observation_bins: int = 100) -> PosmdpModel:
    if name == "bus":
        return build_bus_problem()
    if name == "maintenance":
        return build_maintenance_problem(observation_bins)
    raise ValueError(f"unknown built-in model {name!r}; choose from {BUILTIN_MODELS}")


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

_TOP_LEVEL_KEYS = {
    "version", "states", "actions", "admissible", "observations", "transition",
    "sojourn", "observation_kernel", "g0", "r1", "r2", "beta", "initial_belief",
    "mixed_observable",
}


def _dist_to_dict(dist: SojournDistribution) -> dict:
    if isinstance(dist, InverseGaussian):
        return {"type": "inverse_gaussian", "mu": dist.mu, "lambda": dist.lam}
    if isinstance(dist, DeterministicAtom):
        return {"type": "atom", "c0": dist.c0}
    if isinstance(dist, TruncatedGaussian):
        return {"type": "truncated_gaussian", "mu": dist.mu, "sigma": dist.sigma}
    raise TypeError(f"unsupported sojourn distribution {type(dist).__name__}")


def _dist_from_dict(doc: dict) -> SojournDistribution:
    kind = doc.get("type")
    if kind == "inverse_gaussian":
        return InverseGaussian(mu=doc["mu"], lam=doc["lambda"])
    if kind == "atom":
        return DeterministicAtom(c0=doc["c0"])
    if kind == "truncated_gaussian":
        return TruncatedGaussian(mu=doc["mu"], sigma=doc["sigma"])
    raise ModelFormatError(f"unknown sojourn distribution tag {kind!r}")


def model_to_dict(model: PosmdpModel) -> dict:
    doc = {
        "version": MODEL_FILE_VERSION,
        "states": list(model.states),
        "actions": list(model.actions),
        "observations": list(model.observations),
        "transition": model.transition.tolist(),
        "sojourn": [
            {"s": s, "a": a, "s_next": s2, "dist": _dist_to_dict(d)}
            for (s, a, s2), d in sorted(model.sojourn.items())
        ],
        "observation_kernel": model.observation_kernel.tolist(),
        "r1": model.lump_reward.tolist(),
        "r2": model.rate_reward.tolist(),
        "beta": model.beta,
        "initial_belief": model.initial_belief.tolist(),
    }
    if not model.admissible.all():
        doc["admissible"] = [
            [model.actions[a] for a in np.flatnonzero(model.admissible[s])]
            for s in range(model.n_states)
        ]
    if model.initial_observation_kernel is not None:
        doc["g0"] = np.asarray(model.initial_observation_kernel).tolist()
    if model.mixed_observable is not None:
        doc["mixed_observable"] = {
            "observable_labels": list(model.mixed_observable.observable_labels),
            "hidden_labels": list(model.mixed_observable.hidden_labels),
            "state_coords": [list(c) for c in model.mixed_observable.state_coords],
        }
    return doc


def model_from_dict(doc: dict) -> PosmdpModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ModelFormatError(f"unknown top-level keys: {sorted(unknown)}")
    missing = {"version", "states", "actions", "observations", "transition", "sojourn",
               "observation_kernel", "r1", "r2", "beta", "initial_belief"} - set(doc)
    if missing:
        raise ModelFormatError(f"missing required keys: {sorted(missing)}")
    if doc["version"] != MODEL_FILE_VERSION:
        raise ModelFormatError(f"unsupported model file version {doc['version']!r}")

    states = tuple(doc["states"])
    actions = tuple(doc["actions"])

    obs_field = doc["observations"]
    if isinstance(obs_field, dict):
        if set(obs_field) != {"bins"}:
            raise ModelFormatError("observations object must be {'bins': j}")
        bins = int(obs_field["bins"])
        observations = tuple(f"o{k:03d}" for k in range(bins))
    else:
        observations = tuple(obs_field)
        bins = len(observations)

    sojourn = {}
    for rec in doc["sojourn"]:
        key = (int(rec["s"]), int(rec["a"]), int(rec["s_next"]))
        try:
            sojourn[key] = _dist_from_dict(rec["dist"])
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"bad sojourn record {rec!r}: {exc}") from exc

    kernel_field = doc["observation_kernel"]
    if isinstance(kernel_field, dict):
        if set(kernel_field) != {"beta"}:
            raise ModelFormatError("observation_kernel object must be {'beta': [...]}")
        kernel = np.zeros((len(actions), len(states), bins))
        for rec in kernel_field["beta"]:
            row = discretized_beta_row(BetaDensity(rec["phi"], rec["eta"]), bins)
            if "s_next" in rec:
                kernel[:, int(rec["s_next"]), :] = row
            elif "a" in rec:
                kernel[int(rec["a"]), :, :] = row
            else:
                raise ModelFormatError(
                    f"beta kernel record needs 'a' or 's_next': {rec!r}"
                )
    else:
        kernel = np.asarray(kernel_field, dtype=float)

    admissible = None
    if "admissible" in doc:
        admissible = np.zeros((len(states), len(actions)), dtype=bool)
        for s, names in enumerate(doc["admissible"]):
            for name in names:
                try:
                    admissible[s, actions.index(name)] = True
                except ValueError:
                    raise ModelFormatError(f"admissible action {name!r} for state {s} "
                                           "is not in the action list") from None

    mixed = None
    if "mixed_observable" in doc:
        m = doc["mixed_observable"]
        mixed = MixedObservable(
            observable_labels=tuple(m["observable_labels"]),
            hidden_labels=tuple(m["hidden_labels"]),
            state_coords=tuple(tuple(c) for c in m["state_coords"]),
        )

    try:
        model = PosmdpModel(
            states=states,
            actions=actions,
            observations=observations,
            transition=np.asarray(doc["transition"], dtype=float),
            sojourn=sojourn,
            observation_kernel=kernel,
            lump_reward=np.asarray(doc["r1"], dtype=float),
            rate_reward=np.asarray(doc["r2"], dtype=float),
            beta=float(doc["beta"]),
            initial_belief=np.asarray(doc["initial_belief"], dtype=float),
            admissible=admissible,
            initial_observation_kernel=(
                np.asarray(doc["g0"], dtype=float) if "g0" in doc else None
            ),
            mixed_observable=mixed,
        )
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(str(exc)) from exc
    return model


def load_model(source) -> PosmdpModel:
    """Load and validate a model from a path, file object, or JSON bytes/str."""
    if isinstance(source, (bytes, str)) and not _looks_like_path(source):
        text = source
    elif hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                               f"{exc.msg}") from exc
    model = model_from_dict(doc)
    report = validate(model)
    if not report.ok:
        raise ModelFormatError("model fails validation: " + "; ".join(report.violations))
    return model


def _looks_like_path(source) -> bool:
    if isinstance(source, bytes):
        return False
    stripped = source.lstrip()
    return not (stripped.startswith("{") or stripped.startswith("["))


def save_model(model: PosmdpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def model_hash(model: PosmdpModel) -> str:
    payload = json.dumps(model_to_dict(model), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def with_initial_belief(model: PosmdpModel, belief) -> PosmdpModel:
    return replace(model, initial_belief=np.asarray(belief, dtype=float))
