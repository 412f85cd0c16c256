import numpy as np
import pandas as pd
import pytest

from gridmob import City, InvalidArgumentError, generate_garden_layout
from gridmob.agents import Agent
from gridmob.diary import (
    AgentVisitState,
    CircadianSchedule,
    EPRParams,
    TransitionContext,
    allowed_types,
    condense_destinations,
    constrain_row,
    generate_destination_diary,
    initial_visit_counts,
    unconstrained_row,
)


@pytest.fixture
def toy_city():
    """home at distance 2 from work, 4 from retail (door-to-door)."""
    city = City(7, 3)
    city.add_building("home", (1, 0), blocks=[(1, 1)])
    city.add_building("work", (3, 0), blocks=[(3, 1)])
    city.add_building("retail", (5, 0), blocks=[(5, 1)])
    return city


def toy_params(**kwargs):
    defaults = dict(rho=0.6, gamma=0.21,
                    kappa={"home": 0.9, "work": 0.9, "retail": 0.9, "park": 0.9})
    defaults.update(kwargs)
    return EPRParams(**defaults)


class TestAllowedTypes:
    def test_night_is_home_only(self):
        assert allowed_types("23:30", CircadianSchedule.default()) == {"home"}

    def test_lunch_window(self):
        assert allowed_types("12:30", CircadianSchedule.default()) == {
            "work", "retail", "park"}

    def test_single_interval_all_types(self):
        schedule = CircadianSchedule.always()
        for when in ("00:00", "06:30", "12:00", "23:59"):
            assert allowed_types(when, schedule) == {"home", "work", "retail", "park"}

    def test_accepts_datetime(self):
        schedule = CircadianSchedule.default()
        assert allowed_types(pd.Timestamp("2024-01-01 09:30"), schedule) == {"work"}

    def test_gap_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CircadianSchedule([("00:00", "10:00", {"home"}),
                               ("11:00", "00:00", {"home"})])

    def test_empty_allowed_set_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CircadianSchedule([("00:00", "00:00", set())])


class TestUnconstrainedRow:
    def test_hand_computed_three_buildings(self, toy_city):
        # Stay 0.9; conditional on leaving, explore with probability 0.6
        # (one visited building), so explore mass 0.06 and return mass 0.04.
        params = toy_params()
        ctx = TransitionContext(toy_city, params)
        state = AgentVisitState("h-x1-y0", {"h-x1-y0": 20, "w-x3-y0": 10, "r-x5-y0": 0})
        row = unconstrained_row(state, params, ctx)
        assert row[ctx.index["h-x1-y0"]] == pytest.approx(0.9)
        assert row[ctx.index["r-x5-y0"]] == pytest.approx(0.06)
        assert row[ctx.index["w-x3-y0"]] == pytest.approx(0.04)

    def test_gravity_split_four_to_one(self, toy_city):
        # Both others unexplored (|V| = 0): all leave mass explores,
        # split 1/4 : 1/16 over street distances 2 and 4.
        params = toy_params()
        ctx = TransitionContext(toy_city, params)
        state = AgentVisitState("h-x1-y0", {"h-x1-y0": 5, "w-x3-y0": 0, "r-x5-y0": 0})
        row = unconstrained_row(state, params, ctx)
        assert row[ctx.index["w-x3-y0"]] == pytest.approx(0.08)
        assert row[ctx.index["r-x5-y0"]] == pytest.approx(0.02)

    def test_all_visited_returns_proportional_to_counts(self, toy_city):
        params = toy_params()
        ctx = TransitionContext(toy_city, params)
        state = AgentVisitState("h-x1-y0", {"h-x1-y0": 5, "w-x3-y0": 3, "r-x5-y0": 1})
        row = unconstrained_row(state, params, ctx)
        assert row[ctx.index["w-x3-y0"]] == pytest.approx(0.1 * 3 / 4)
        assert row[ctx.index["r-x5-y0"]] == pytest.approx(0.1 * 1 / 4)

    def test_single_building_city_absorbs(self):
        city = City(3, 3)
        city.add_building("home", (1, 0), blocks=[(1, 1)])
        params = toy_params()
        ctx = TransitionContext(city, params)
        state = AgentVisitState("h-x1-y0", {"h-x1-y0": 1})
        row = unconstrained_row(state, params, ctx)
        assert row[0] == 1.0

    def test_rows_are_stochastic_on_random_states(self):
        city = generate_garden_layout()
        params = EPRParams()
        ctx = TransitionContext(city, params)
        rng = np.random.default_rng(99)
        ids = ctx.ids
        for _ in range(200):
            counts = {bid: int(rng.integers(0, 4)) for bid in ids}
            current = ids[rng.integers(len(ids))]
            counts[current] = max(counts[current], 1)
            row = unconstrained_row(AgentVisitState(current, counts), params, ctx)
            assert (row >= 0).all()
            assert row.sum() == pytest.approx(1.0, abs=1e-9)


class TestConstrainRow:
    def test_all_types_identity(self):
        row = np.array([0.25, 0.25, 0.3, 0.2])
        types = ["home", "work", "retail", "park"]
        out = constrain_row(row, {"home", "work", "retail", "park"}, types)
        np.testing.assert_allclose(out, row)

    def test_homes_scaled_by_four(self):
        row = np.array([0.1, 0.15, 0.5, 0.25])
        types = ["home", "home", "work", "retail"]
        out = constrain_row(row, {"home"}, types)
        np.testing.assert_allclose(out, [0.4, 0.6, 0.0, 0.0])

    def test_matches_bruteforce_conditional(self):
        rng = np.random.default_rng(42)
        types_pool = ["home", "work", "retail", "park"]
        for _ in range(100):
            n = rng.integers(2, 12)
            row = rng.random(n)
            row /= row.sum()
            types = [types_pool[i] for i in rng.integers(0, 4, size=n)]
            allowed = set(rng.choice(types_pool, size=rng.integers(1, 5), replace=False))
            mass = sum(p for p, t in zip(row, types) if t in allowed)
            if mass == 0:
                continue
            expected = np.array([p if t in allowed else 0.0 for p, t in zip(row, types)]) / mass
            out = constrain_row(row, allowed, types)
            np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_zero_allowed_mass_forces_stay(self):
        row = np.array([0.9, 0.1])
        out = constrain_row(row, {"park"}, ["home", "work"], current=0)
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_zero_allowed_mass_without_current_raises(self):
        with pytest.raises(InvalidArgumentError):
            constrain_row(np.array([0.9, 0.1]), {"park"}, ["home", "work"])

    def test_forced_stay_flagged_in_diagnostics(self):
        diagnostics = {}
        out = constrain_row(np.array([0.0, 1.0]), {"park"}, ["home", "work"],
                            current=0, diagnostics=diagnostics)
        np.testing.assert_allclose(out, [1.0, 0.0])
        assert diagnostics["forced_stays"] == 1

    def test_support_is_exactly_allowed(self):
        rng = np.random.default_rng(1)
        types = ["home", "work", "retail", "park"] * 3
        row = rng.random(12)
        row /= row.sum()
        out = constrain_row(row, {"retail"}, types)
        for p, t in zip(out, types):
            assert (p > 0) == (t == "retail")


class TestCondense:
    def _diary(self, locations, start="2024-01-01", delta=15):
        times = pd.date_range(start, periods=len(locations), freq=f"{delta}min")
        return pd.DataFrame({
            "unix_timestamp": (times.astype("int64") // 10**9),
            "local_timestamp": times,
            "duration": delta,
            "location": locations,
        })

    def test_run_length_merge(self):
        out = condense_destinations(self._diary(["h", "h", "r", "r", "r", "h"]))
        assert list(out["location"]) == ["h", "r", "h"]
        assert list(out["duration"]) == [30, 45, 15]

    def test_single_row_unchanged(self):
        diary = self._diary(["h"])
        out = condense_destinations(diary)
        assert len(out) == 1
        assert out["duration"].iloc[0] == 15

    def test_reference_custom_diary(self):
        locations = ["h"] * 2 + ["r"] * 4 + ["w"] * 12 + ["h"] * 4
        out = condense_destinations(self._diary(locations))
        assert list(out["duration"]) == [30, 60, 180, 60]
        assert list(out["location"]) == ["h", "r", "w", "h"]
        assert out["duration"].sum() == 22 * 15

    def test_non_contiguous_rejected(self):
        diary = self._diary(["h", "r"])
        diary.loc[1, "unix_timestamp"] += 60
        with pytest.raises(InvalidArgumentError):
            condense_destinations(diary)


class TestGenerateDiary:
    def test_absorbing_home_schedule(self):
        # A home-only schedule in a single-home city pins the agent in place.
        single = City(3, 3)
        single.add_building("home", (1, 0), blocks=[(1, 1)])
        lone = Agent("solo", single, "h-x1-y0", "h-x1-y0")
        diary = generate_destination_diary(
            lone, "2024-01-01", "2024-01-02", EPRParams(),
            CircadianSchedule.always({"home"}), np.random.default_rng(0))
        assert len(diary) == 1
        assert diary["duration"].iloc[0] == 24 * 60
        assert diary["location"].iloc[0] == "h-x1-y0"

    def test_determinism(self):
        city = generate_garden_layout()
        agent = _garden_agent(city)
        kwargs = dict(params=EPRParams(), schedule=CircadianSchedule.default())
        a = generate_destination_diary(
            agent, "2024-01-01", "2024-01-08", rng=np.random.default_rng(7), **kwargs)
        b = generate_destination_diary(
            agent, "2024-01-01", "2024-01-08", rng=np.random.default_rng(7), **kwargs)
        pd.testing.assert_frame_equal(a, b)

    def test_week_structure(self):
        city = generate_garden_layout()
        agent = _garden_agent(city)
        diary = generate_destination_diary(
            agent, "2024-01-01", "2024-01-08", EPRParams(),
            CircadianSchedule.default(), np.random.default_rng(3))
        # Starts with a home stay spanning the night, then visits other
        # building types during the week.
        assert diary["location"].iloc[0] == agent.home
        assert diary["duration"].iloc[0] >= 4 * 60
        visited_types = {city.buildings[b].building_type for b in diary["location"]}
        assert "work" in visited_types
        assert diary["duration"].sum() == 7 * 24 * 60

    def test_entries_respect_schedule(self):
        city = generate_garden_layout()
        agent = _garden_agent(city)
        schedule = CircadianSchedule.default()
        diary = generate_destination_diary(
            agent, "2024-01-01", "2024-01-08", EPRParams(), schedule,
            np.random.default_rng(11))
        for i in range(1, len(diary)):
            if diary["location"].iloc[i] != diary["location"].iloc[i - 1]:
                btype = city.buildings[diary["location"].iloc[i]].building_type
                assert btype in schedule.allowed_types(diary["local_timestamp"].iloc[i])

    def test_horizon_rounds_down(self):
        city = generate_garden_layout()
        agent = _garden_agent(city)
        diary = generate_destination_diary(
            agent, "2024-01-01 00:00", "2024-01-01 01:10", EPRParams(),
            CircadianSchedule.always(), np.random.default_rng(0))
        assert diary["duration"].sum() == 60  # 70 min rounds to 4 steps

    def test_stay_runs_geometric_mean(self):
        # Dwell means follow delta/(1 - kappa) per type; light version of the
        # acceptance criterion on a five-building city.
        city = City(11, 3)
        city.add_building("home", (1, 0), blocks=[(1, 1)])
        city.add_building("work", (3, 0), blocks=[(3, 1)])
        city.add_building("retail", (5, 0), blocks=[(5, 1)])
        city.add_building("park", (7, 0), blocks=[(7, 1)])
        city.add_building("home", (9, 0), blocks=[(9, 1)])
        agent = Agent("probe", city, "h-x1-y0", "w-x3-y0")
        kappa = {"home": 0.6, "work": 0.5, "retail": 0.4, "park": 0.3}
        params = EPRParams(kappa=kappa, delta_minutes=15)
        diary = generate_destination_diary(
            agent, "2024-01-01", "2024-01-22", params, CircadianSchedule.always(),
            np.random.default_rng(5))
        runs = diary.iloc[:-1]  # last run is censored by the horizon
        for btype in ("home", "work"):
            durations = [
                d for d, loc in zip(runs["duration"], runs["location"])
                if city.buildings[loc].building_type == btype
            ]
            expected = params.delta_minutes / (1 - kappa[btype])
            assert np.mean(durations) == pytest.approx(expected, rel=0.12)


class TestInitialCounts:
    def test_priors_and_extras(self):
        city = generate_garden_layout()
        agent = _garden_agent(city)
        counts = initial_visit_counts(agent, np.random.default_rng(0))
        assert counts[agent.home] == 20
        assert counts[agent.workplace] == 10
        extras = [bid for bid, c in counts.items()
                  if c == 1 and bid not in (agent.home, agent.workplace)]
        assert len(extras) == 3


def _garden_agent(city):
    homes = sorted(b.id for b in city.buildings.values() if b.building_type == "home")
    works = sorted(b.id for b in city.buildings.values() if b.building_type == "work")
    return Agent("probe", city, homes[0], works[0])
