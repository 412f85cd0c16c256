"""Agents: identity, home/workplace, and simulation outputs."""

from dataclasses import dataclass, field

from .errors import InvalidArgumentError


@dataclass
class Agent:
    """One simulated person tied to a city.

    ``still_probs`` and ``sigmas`` optionally override the per-building-type
    motion parameters for this agent; buildings' own values are used
    otherwise. Simulation results (destination diary, realized diary,
    trajectory, sparse trajectory) are attached as they are generated.
    """

    identifier: str
    city: object
    home: str
    workplace: str
    still_probs: dict = field(default_factory=dict)
    sigmas: dict = field(default_factory=dict)

    destination_diary: object = None
    diary: object = None
    trajectory: object = None
    sparse_traj: object = None

    def __post_init__(self):
        for bid in (self.home, self.workplace):
            if bid not in self.city.buildings:
                raise InvalidArgumentError(f"building {bid!r} not in city")

    @property
    def home_building(self):
        return self.city.buildings[self.home]

    @property
    def workplace_building(self):
        return self.city.buildings[self.workplace]


def make_agents(city, count, rng, prefix="agent"):
    """Create ``count`` agents with uniformly sampled homes and workplaces."""
    homes = sorted(b.id for b in city.buildings.values() if b.building_type == "home")
    works = sorted(b.id for b in city.buildings.values() if b.building_type == "work")
    if not homes or not works:
        raise InvalidArgumentError("city needs at least one home and one work building")
    width = max(3, len(str(count)))
    return [
        Agent(
            identifier=f"{prefix}-{i:0{width}d}",
            city=city,
            home=homes[rng.integers(len(homes))],
            workplace=works[rng.integers(len(works))],
        )
        for i in range(count)
    ]
