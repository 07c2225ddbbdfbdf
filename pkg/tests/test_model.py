"""Model construction, validation, stage rewards, and file round-trips."""

import json
import math

import numpy as np
import pytest
from scipy import integrate

import posmdp
from posmdp.distributions import DeterministicAtom, InverseGaussian, TruncatedGaussian
from posmdp.model import (
    ModelFormatError,
    build_builtin,
    discretized_beta_row,
    load_model,
    model_from_dict,
    model_hash,
    model_to_dict,
    observation_bin_points,
    save_model,
    with_initial_belief,
)


class TestBuilders:
    def test_bus_shape(self, bus_model):
        assert bus_model.n_states == 15
        assert bus_model.n_actions == 2
        assert bus_model.n_observations == 5
        assert posmdp.validate(bus_model).ok

    def test_bus_reset_rows(self, bus_model):
        # Arrival resets to stop 0 with a fresh uniform intensity, both actions.
        for i in range(3):
            last = 4 * 3 + i
            for a in range(2):
                row = bus_model.transition[last, a]
                starts = row[: 3]
                np.testing.assert_allclose(starts, 1.0 / 3.0)
                assert row[3:].sum() == 0.0
                for i2 in range(3):
                    assert bus_model.sojourn[(last, a, i2)] == DeterministicAtom(455.0)

    def test_bus_goal_reward(self, bus_model):
        for i in range(3):
            assert bus_model.lump_reward[4 * 3 + i, 0] == 100.0
            assert bus_model.lump_reward[4 * 3 + i, 1] == 100.0
        assert np.all(bus_model.rate_reward == 0.0)

    def test_bus_cost_variant(self):
        model = posmdp.build_bus_problem(goal_reward=False)
        assert np.all(model.lump_reward == 0.0)
        assert np.all(model.rate_reward == -1.0)
        assert posmdp.validate(model).ok

    def test_bus_sojourns(self, bus_model):
        # Bus leg from (stop 1, medium traffic): mean 10, shape 10 * mu^2.
        src = 1 * 3 + 1
        dist = bus_model.sojourn[(src, 0, 2 * 3 + 1)]
        assert dist == InverseGaussian(10.0, 1000.0)
        # Bike from stop 1 takes exactly 25 regardless of traffic.
        assert bus_model.sojourn[(src, 1, 4 * 3 + 1)] == DeterministicAtom(25.0)

    def test_maintenance_shape(self, maintenance_model):
        assert maintenance_model.n_states == 4
        assert maintenance_model.n_actions == 4
        assert maintenance_model.n_observations == 100
        assert posmdp.validate(maintenance_model).ok
        assert maintenance_model.sojourn[(3, 3, 0)] == TruncatedGaussian(10.0, 1.5)
        np.testing.assert_array_equal(
            maintenance_model.initial_belief, [1.0, 0.0, 0.0, 0.0]
        )

    def test_maintenance_replace_always_renews(self, maintenance_model):
        np.testing.assert_allclose(
            maintenance_model.transition[:, 3, 0], np.ones(4)
        )

    def test_observation_bins(self):
        points = observation_bin_points(100)
        assert len(points) == 100
        assert points[0] > 0 and points[-1] < 1
        row = discretized_beta_row(posmdp.BetaDensity(2, 18), 100)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
        # Good-filter observations concentrate near zero turbidity ratio.
        assert row[:20].sum() > 0.8

    def test_maintenance_kernel_state_indexed(self, maintenance_model):
        G = maintenance_model.observation_kernel
        # The turbidity ratio reflects the filter state the system lands in,
        # so the emission row depends on s' and is shared across actions.
        for a in range(1, 4):
            np.testing.assert_allclose(G[a], G[0])
        np.testing.assert_allclose(
            G[0, 0], discretized_beta_row(posmdp.BetaDensity(2, 18), 100)
        )
        np.testing.assert_allclose(
            G[0, 3], discretized_beta_row(posmdp.BetaDensity(18, 6), 100)
        )

    def test_build_builtin(self):
        assert build_builtin("bus").n_states == 15
        assert build_builtin("maintenance", 50).n_observations == 50
        with pytest.raises(ValueError):
            build_builtin("unknown")


class TestStageReward:
    def test_maintenance_reference_values(self, maintenance_model):
        # Published reference values for the stage rewards at (good, nothing)
        # and (good, backwash).
        table = posmdp.compute_stage_reward(maintenance_model)
        assert table.values[0, 0] == pytest.approx(27249.43, rel=1e-3)
        assert table.values[0, 1] == pytest.approx(28594.38, rel=1e-3)

    def test_bus_stage_rewards(self, bus_model):
        table = posmdp.compute_stage_reward(bus_model)
        # Lump-only rewards: R(s, a) equals the lump table exactly.
        np.testing.assert_array_equal(table.values, bus_model.lump_reward)
        assert table.minimum() == 0.0

    def test_rate_reward_quadrature_oracle(self):
        # Random 2-state model: R(s, a) must equal lump plus the quadrature
        # integral of r2 * exp(-beta t) over each sojourn law.
        rng = np.random.default_rng(7)
        for _ in range(5):
            transition = rng.dirichlet(np.ones(2), size=(2, 1))
            lump = rng.normal(size=(2, 1))
            rate = rng.normal(size=(2, 1, 2))
            beta = float(rng.uniform(0.01, 0.5))
            sojourn = {
                (s, 0, s2): InverseGaussian(float(rng.uniform(1, 10)), float(rng.uniform(5, 50)))
                for s in range(2)
                for s2 in range(2)
            }
            model = posmdp.PosmdpModel(
                states=("s0", "s1"),
                actions=("a0",),
                observations=("o0",),
                transition=transition,
                sojourn=sojourn,
                observation_kernel=np.ones((1, 2, 1)),
                lump_reward=lump,
                rate_reward=rate,
                beta=beta,
                initial_belief=np.array([1.0, 0.0]),
            )
            table = posmdp.compute_stage_reward(model)
            for s in range(2):
                expected = lump[s, 0]
                for s2 in range(2):
                    dist = sojourn[(s, 0, s2)]
                    integral, _ = integrate.quad(
                        lambda t, d=dist: math.exp(-beta * t) * d.pdf(t),
                        0, np.inf, limit=200,
                    )
                    expected += (
                        transition[s, 0, s2] * rate[s, 0, s2] * (1.0 - integral) / beta
                    )
                assert table.values[s, 0] == pytest.approx(float(expected), abs=1e-6)

    def test_undiscounted_limit_uses_mean(self):
        model = posmdp.PosmdpModel(
            states=("a", "b"),
            actions=("go",),
            observations=("o",),
            transition=np.array([[[0.0, 1.0]], [[0.0, 1.0]]]),
            sojourn={(0, 0, 1): DeterministicAtom(4.0), (1, 0, 1): DeterministicAtom(2.0)},
            observation_kernel=np.ones((1, 2, 1)),
            lump_reward=np.zeros((2, 1)),
            rate_reward=np.full((2, 1, 2), 3.0),
            beta=0.0,
            initial_belief=np.array([1.0, 0.0]),
        )
        table = posmdp.compute_stage_reward(model)
        assert table.values[0, 0] == pytest.approx(12.0)
        assert table.values[1, 0] == pytest.approx(6.0)


class TestValidation:
    def test_bad_transition_row(self, bus_model):
        broken = posmdp.PosmdpModel(
            states=bus_model.states,
            actions=bus_model.actions,
            observations=bus_model.observations,
            transition=bus_model.transition * 0.5,
            sojourn=bus_model.sojourn,
            observation_kernel=bus_model.observation_kernel,
            lump_reward=bus_model.lump_reward,
            rate_reward=bus_model.rate_reward,
            beta=bus_model.beta,
            initial_belief=bus_model.initial_belief,
        )
        report = posmdp.validate(broken)
        assert not report.ok
        assert any("transition row" in v for v in report.violations)

    def test_missing_sojourn(self, bus_model):
        sojourn = dict(bus_model.sojourn)
        sojourn.pop((0, 0, 3))
        broken = posmdp.PosmdpModel(
            states=bus_model.states,
            actions=bus_model.actions,
            observations=bus_model.observations,
            transition=bus_model.transition,
            sojourn=sojourn,
            observation_kernel=bus_model.observation_kernel,
            lump_reward=bus_model.lump_reward,
            rate_reward=bus_model.rate_reward,
            beta=bus_model.beta,
            initial_belief=bus_model.initial_belief,
        )
        report = posmdp.validate(broken)
        assert any("missing sojourn" in v for v in report.violations)

    def test_bad_initial_belief(self, bus_model):
        belief = np.zeros(15)
        belief[0] = 0.5
        broken = with_initial_belief(bus_model, belief)
        report = posmdp.validate(broken)
        assert any("initial belief" in v for v in report.violations)


class TestSojournDensities:
    def test_density_matrix_mixed_measure(self, bus_model):
        # At the bike atom (stop 0 -> 12 is not an atom here; use tau = 30):
        # bike rows carry mass 1, bus rows are zeroed at the shared atom.
        f = bus_model.sojourn_density_matrix(1, 30.0)
        assert f[0, 4 * 3 + 0] == 1.0  # (stop0, low) bike -> (stop4, low)
        f_bus = bus_model.sojourn_density_matrix(0, 30.0)
        assert np.all(f_bus == 0.0)  # 30 is an atom point: continuous parts vanish

    def test_density_samples_stack(self, bus_model):
        taus = np.array([5.0, 30.0])
        stacked = bus_model.sojourn_density_samples(0, taus)
        np.testing.assert_array_equal(
            stacked[0], bus_model.sojourn_density_matrix(0, 5.0)
        )
        np.testing.assert_array_equal(
            stacked[1], bus_model.sojourn_density_matrix(0, 30.0)
        )


class TestSerialization:
    def test_round_trip(self, bus_model, tmp_path):
        path = tmp_path / "bus.json"
        save_model(bus_model, path)
        loaded = load_model(path)
        assert loaded.states == bus_model.states
        assert loaded.sojourn == bus_model.sojourn
        np.testing.assert_array_equal(loaded.transition, bus_model.transition)
        np.testing.assert_array_equal(
            loaded.observation_kernel, bus_model.observation_kernel
        )
        assert model_hash(loaded) == model_hash(bus_model)
        assert loaded.mixed_observable == bus_model.mixed_observable

    def test_round_trip_maintenance(self, maintenance_model, tmp_path):
        path = tmp_path / "maintenance.json"
        save_model(maintenance_model, path)
        loaded = load_model(path)
        assert model_hash(loaded) == model_hash(maintenance_model)

    def test_hash_changes_with_model(self, bus_model):
        shifted = with_initial_belief(
            bus_model, np.roll(bus_model.initial_belief, 3)
        )
        assert model_hash(shifted) != model_hash(bus_model)

    def test_load_from_json_string(self, bus_model):
        text = json.dumps(model_to_dict(bus_model))
        loaded = load_model(text)
        assert model_hash(loaded) == model_hash(bus_model)

    def test_unknown_top_level_key(self, bus_model):
        doc = model_to_dict(bus_model)
        doc["extra"] = 1
        with pytest.raises(ModelFormatError, match="unknown top-level"):
            model_from_dict(doc)

    def test_unknown_distribution_tag(self, bus_model):
        doc = model_to_dict(bus_model)
        doc["sojourn"][0]["dist"] = {"type": "weibull", "k": 2}
        with pytest.raises(ModelFormatError, match="weibull"):
            model_from_dict(doc)

    def test_missing_required_key(self, bus_model):
        doc = model_to_dict(bus_model)
        del doc["transition"]
        with pytest.raises(ModelFormatError, match="missing required"):
            model_from_dict(doc)

    def test_invalid_json(self):
        with pytest.raises(ModelFormatError, match="invalid JSON"):
            load_model("{not json")

    def test_observation_bins_shorthand(self, maintenance_model):
        doc = model_to_dict(maintenance_model)
        doc["observations"] = {"bins": 100}
        loaded = model_from_dict(doc)
        assert loaded.n_observations == 100

    def test_beta_kernel_shorthand(self, maintenance_model):
        doc = model_to_dict(maintenance_model)
        doc["observations"] = {"bins": 100}
        doc["observation_kernel"] = {
            "beta": [
                {"s_next": 0, "phi": 2, "eta": 18},
                {"s_next": 1, "phi": 6, "eta": 18},
                {"s_next": 2, "phi": 18, "eta": 18},
                {"s_next": 3, "phi": 18, "eta": 6},
            ]
        }
        loaded = model_from_dict(doc)
        np.testing.assert_allclose(
            loaded.observation_kernel, maintenance_model.observation_kernel
        )

    def test_validation_failure_on_load(self, bus_model):
        doc = model_to_dict(bus_model)
        doc["initial_belief"] = [0.0] * 15
        with pytest.raises(ModelFormatError, match="validation"):
            load_model(json.dumps(doc))


class TestAdmissibility:
    def test_default_all_admissible(self, bus_model):
        assert bus_model.admissible.all()
        np.testing.assert_array_equal(
            bus_model.admissible_actions(bus_model.initial_belief), [0, 1]
        )

    def test_restricted_actions(self, bus_model):
        admissible = np.ones((15, 2), dtype=bool)
        admissible[0, 1] = False  # no bike at (stop0, low)
        restricted = posmdp.PosmdpModel(
            states=bus_model.states,
            actions=bus_model.actions,
            observations=bus_model.observations,
            transition=bus_model.transition,
            sojourn=bus_model.sojourn,
            observation_kernel=bus_model.observation_kernel,
            lump_reward=bus_model.lump_reward,
            rate_reward=bus_model.rate_reward,
            beta=bus_model.beta,
            initial_belief=bus_model.initial_belief,
            admissible=admissible,
        )
        np.testing.assert_array_equal(
            restricted.admissible_actions(restricted.initial_belief), [0]
        )
        # A belief avoiding state 0 allows both actions again.
        belief = np.zeros(15)
        belief[1] = 1.0
        np.testing.assert_array_equal(restricted.admissible_actions(belief), [0, 1])

    def test_admissible_round_trip(self, bus_model, tmp_path):
        admissible = np.ones((15, 2), dtype=bool)
        admissible[0, 1] = False
        restricted = posmdp.PosmdpModel(
            states=bus_model.states,
            actions=bus_model.actions,
            observations=bus_model.observations,
            transition=bus_model.transition,
            sojourn=bus_model.sojourn,
            observation_kernel=bus_model.observation_kernel,
            lump_reward=bus_model.lump_reward,
            rate_reward=bus_model.rate_reward,
            beta=bus_model.beta,
            initial_belief=bus_model.initial_belief,
            admissible=admissible,
        )
        path = tmp_path / "restricted.json"
        save_model(restricted, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.admissible, admissible)
