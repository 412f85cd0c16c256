"""Grid city: blocks, typed buildings with doors, street graph and shortest paths.

Coordinates are in block units; one block is a 15 m x 15 m square. A block
(x, y) spans the continuous region [x, x+1) x [y, y+1). Blocks not owned by
a building are streets.
"""

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BuildingConflictError, InvalidArgumentError, NoPathError

BLOCK_METERS = 15.0
STREET = "STREET"

BUILDING_TYPES = ("home", "work", "retail", "park")

# Per-type defaults; sigma follows the z/1.96 walking-speed rule with
# z = 0.75 blocks/min for home/work and z = 1.5 for retail/park.
DEFAULT_STILL_PROBS = {"home": 0.9, "work": 0.9, "retail": 0.5, "park": 0.5}
DEFAULT_SIGMAS = {
    "home": 0.75 / 1.96,
    "work": 0.75 / 1.96,
    "retail": 1.5 / 1.96,
    "park": 1.5 / 1.96,
}

# Neighbor expansion order: +x, -x, +y, -y.
_NEIGHBOR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _as_block(value):
    x, y = value
    return (int(x), int(y))


def bbox_blocks(bbox):
    """Expand a bounding box into the integer blocks it covers.

    The convention is half-open: box(x0, y0, x1, y1) covers blocks with
    x0 <= x < x1 and y0 <= y < y1. Objects exposing a shapely-style
    ``bounds`` attribute are accepted as well as 4-tuples.
    """
    if hasattr(bbox, "bounds"):
        x0, y0, x1, y1 = bbox.bounds
    else:
        x0, y0, x1, y1 = bbox
    x0, y0, x1, y1 = int(x0), int(y0), int(x1), int(y1)
    if x1 <= x0 or y1 <= y0:
        raise InvalidArgumentError(f"empty bounding box {(x0, y0, x1, y1)}")
    return [(x, y) for x in range(x0, x1) for y in range(y0, y1)]


@dataclass(frozen=True)
class Building:
    """A rectilinear building: a connected union of unit blocks with one door.

    The door is a street block 4-adjacent to the building; door_centroid is
    the midpoint of the edge shared between the door block and the building,
    used as the start and end point of indoor movement.
    """

    id: str
    building_type: str
    blocks: tuple
    door: tuple
    door_centroid: tuple
    sigma: float
    still_prob: float
    blocks_set: frozenset = field(repr=False, hash=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "blocks_set", frozenset(self.blocks))

    def contains(self, x, y):
        """Closed-region containment test against the union of unit blocks.

        A point on a block edge belongs to the closed blocks on both sides,
        so only the floor block and (on integer coordinates) its predecessor
        need checking.
        """
        fx, fy = int(math.floor(x)), int(math.floor(y))
        xs = (fx, fx - 1) if x == fx else (fx,)
        ys = (fy, fy - 1) if y == fy else (fy,)
        return any((bx, by) in self.blocks_set for bx in xs for by in ys)

    @property
    def bounds(self):
        xs = [b[0] for b in self.blocks]
        ys = [b[1] for b in self.blocks]
        return (min(xs), min(ys), max(xs) + 1, max(ys) + 1)

    @property
    def centroid(self):
        xs = [b[0] + 0.5 for b in self.blocks]
        ys = [b[1] + 0.5 for b in self.blocks]
        return (sum(xs) / len(xs), sum(ys) / len(ys))


def _is_connected(blocks):
    blocks = set(blocks)
    if not blocks:
        return False
    seen = {next(iter(blocks))}
    stack = [next(iter(seen))]
    while stack:
        x, y = stack.pop()
        for dx, dy in _NEIGHBOR_STEPS:
            nb = (x + dx, y + dy)
            if nb in blocks and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(blocks)


class City:
    """N x M grid of blocks with typed buildings; unowned blocks are streets."""

    def __init__(self, width, height):
        if width < 1 or height < 1:
            raise InvalidArgumentError(f"city dimensions must be positive, got {(width, height)}")
        self.width = int(width)
        self.height = int(height)
        self.buildings = {}
        self.block_owner = {}  # (x, y) -> building id; streets are absent
        self._graph = None

    def in_bounds(self, block):
        x, y = block
        return 0 <= x < self.width and 0 <= y < self.height

    def owner_of(self, block):
        return self.block_owner.get(_as_block(block), STREET)

    def is_street(self, block):
        block = _as_block(block)
        return self.in_bounds(block) and block not in self.block_owner

    @property
    def street_blocks(self):
        return [
            (x, y)
            for x in range(self.width)
            for y in range(self.height)
            if (x, y) not in self.block_owner
        ]

    def building_at(self, x, y):
        """Building owning the point (x, y), by the floor-block rule, or None."""
        bid = self.block_owner.get((int(math.floor(x)), int(math.floor(y))))
        return self.buildings[bid] if bid is not None else None

    def add_building(self, building_type, door, blocks=None, bbox=None,
                     building_id=None, sigma=None, still_prob=None):
        """Add a building and return its id.

        Exactly one of ``blocks`` (list of block coordinates) or ``bbox``
        (half-open bounding box) must be given. The id defaults to
        "<type-initial>-x<door.x>-y<door.y>".
        """
        if building_type not in BUILDING_TYPES:
            raise InvalidArgumentError(
                f"unknown building type {building_type!r}; expected one of {BUILDING_TYPES}")
        if (blocks is None) == (bbox is None):
            raise InvalidArgumentError("exactly one of blocks or bbox must be given")
        if bbox is not None:
            blocks = bbox_blocks(bbox)
        blocks = [_as_block(b) for b in blocks]
        if len(set(blocks)) != len(blocks):
            raise InvalidArgumentError("duplicate blocks in building footprint")
        door = _as_block(door)

        for b in blocks:
            if not self.in_bounds(b):
                raise InvalidArgumentError(f"block {b} outside the {self.width}x{self.height} grid")
            if b in self.block_owner:
                raise BuildingConflictError(
                    f"block {b} already owned by building {self.block_owner[b]!r}")
        if not _is_connected(blocks):
            raise InvalidArgumentError("building blocks must form a 4-connected set")
        if not self.in_bounds(door):
            raise InvalidArgumentError(f"door {door} outside the grid")
        if door in self.block_owner or door in set(blocks):
            raise InvalidArgumentError(f"door {door} is not a street block")

        adjacent = sorted(
            b for b in blocks
            if abs(b[0] - door[0]) + abs(b[1] - door[1]) == 1
        )
        if not adjacent:
            raise InvalidArgumentError(f"door {door} is not 4-adjacent to the building")
        door_centroid = _shared_edge_midpoint(door, adjacent[0])

        if building_id is None:
            building_id = f"{building_type[0]}-x{door[0]}-y{door[1]}"
        if building_id in self.buildings:
            raise BuildingConflictError(f"building id {building_id!r} already exists")

        building = Building(
            id=building_id,
            building_type=building_type,
            blocks=tuple(sorted(blocks)),
            door=door,
            door_centroid=door_centroid,
            sigma=DEFAULT_SIGMAS[building_type] if sigma is None else float(sigma),
            still_prob=DEFAULT_STILL_PROBS[building_type] if still_prob is None else float(still_prob),
        )
        if building.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if not 0 <= building.still_prob <= 1:
            raise InvalidArgumentError("still_prob must be in [0, 1]")

        self.buildings[building_id] = building
        for b in blocks:
            self.block_owner[b] = building_id
        self._graph = None
        return building_id

    def build_street_graph(self):
        """All-pairs shortest paths over the street 4-adjacency graph (cached)."""
        if self._graph is None:
            self._graph = StreetGraph(self)
        return self._graph

    def to_dict(self):
        return {
            "dimensions": [self.width, self.height],
            "buildings": [
                {
                    "id": b.id,
                    "building_type": b.building_type,
                    "blocks": [list(blk) for blk in b.blocks],
                    "door": list(b.door),
                    "door_centroid": list(b.door_centroid),
                    "sigma": b.sigma,
                    "still_prob": b.still_prob,
                }
                for b in self.buildings.values()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        city = cls(*data["dimensions"])
        for spec in data["buildings"]:
            city.add_building(
                spec["building_type"],
                tuple(spec["door"]),
                blocks=[tuple(b) for b in spec["blocks"]],
                building_id=spec["id"],
                sigma=spec["sigma"],
                still_prob=spec["still_prob"],
            )
        return city

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _shared_edge_midpoint(door, block):
    """Midpoint of the unit edge shared by the door block and a building block."""
    dx, dy = door
    bx, by = block
    if dx == bx:  # vertical neighbors share a horizontal edge
        return (dx + 0.5, float(max(dy, by)))
    return (float(max(dx, bx)), dy + 0.5)


def create_city(width, height):
    """Create an empty all-street city of the given block dimensions."""
    return City(width, height)


class StreetGraph:
    """All-pairs shortest paths over street blocks (unit-weight 4-adjacency).

    Distances are computed with Dijkstra's algorithm per source; unreachable
    pairs are infinite. Paths are deterministic: equal-distance ties are
    broken lexicographically by (x, y).
    """

    def __init__(self, city):
        self.city = city
        self.nodes = sorted(city.street_blocks)
        if not self.nodes:
            raise InvalidArgumentError("city has no street blocks")
        self.index = {b: i for i, b in enumerate(self.nodes)}
        self._dist = self._all_pairs()
        roots = self._component_roots()
        self.n_components = len(roots)
        self.connected = self.n_components == 1

    def _neighbors(self, block):
        x, y = block
        out = []
        for dx, dy in _NEIGHBOR_STEPS:
            nb = (x + dx, y + dy)
            if nb in self.index:
                out.append(nb)
        return out

    def _all_pairs(self):
        n = len(self.nodes)
        dist = np.full((n, n), -1, dtype=np.int32)
        for src_idx, src in enumerate(self.nodes):
            row = dist[src_idx]
            row[src_idx] = 0
            heap = [(0, src)]
            while heap:
                d, block = heapq.heappop(heap)
                i = self.index[block]
                if d > row[i]:
                    continue
                for nb in self._neighbors(block):
                    j = self.index[nb]
                    nd = d + 1
                    if row[j] < 0 or nd < row[j]:
                        row[j] = nd
                        heapq.heappush(heap, (nd, nb))
        return dist

    def _component_roots(self):
        roots = []
        seen = np.zeros(len(self.nodes), dtype=bool)
        for i in range(len(self.nodes)):
            if not seen[i]:
                roots.append(i)
                seen[self._dist[i] >= 0] = True
        return roots

    def distance(self, a, b):
        """Street-path distance in blocks; math.inf when unreachable."""
        a, b = _as_block(a), _as_block(b)
        if a not in self.index or b not in self.index:
            raise InvalidArgumentError(f"{a if a not in self.index else b} is not a street block")
        d = self._dist[self.index[a], self.index[b]]
        return math.inf if d < 0 else int(d)

    def door_distance(self, building_a, building_b):
        """Distance r(k, l) between the door blocks of two buildings."""
        return self.distance(building_a.door, building_b.door)

    def shortest_path(self, a, b):
        """Lexicographically-smallest shortest path from a to b, inclusive."""
        a, b = _as_block(a), _as_block(b)
        d = self.distance(a, b)
        if math.isinf(d):
            raise NoPathError(f"no street path from {a} to {b}")
        target = self.index[b]
        path = [a]
        current = a
        remaining = d
        while current != b:
            candidates = [
                nb for nb in self._neighbors(current)
                if self._dist[self.index[nb], target] == remaining - 1
            ]
            current = min(candidates)
            remaining -= 1
            path.append(current)
        return path


@dataclass(frozen=True)
class GardenSpec:
    """Concentric-ring layout: a central park surrounded by typed rings.

    Rings are listed inner to outer as (building_type, frontage); each ring
    is one block deep and separated from its neighbors by one-block street
    rings. Center avenues cut through the rings so the street graph stays
    connected.
    """

    width: int = 22
    height: int = 22
    park_size: int = 4
    rings: tuple = (("home", 2), ("retail", 2), ("work", 2))

    def __post_init__(self):
        for btype, frontage in self.rings:
            if btype not in BUILDING_TYPES:
                raise InvalidArgumentError(f"unknown ring type {btype!r}")
            if frontage < 1:
                raise InvalidArgumentError("ring frontage must be >= 1")
        if self.park_size < 1:
            raise InvalidArgumentError("park_size must be >= 1")


def generate_garden_layout(spec=None):
    """Build a ring city from a GardenSpec; streets fill all unused blocks."""
    spec = spec or GardenSpec()
    city = City(spec.width, spec.height)

    px0 = (spec.width - spec.park_size) // 2
    py0 = (spec.height - spec.park_size) // 2
    px1, py1 = px0 + spec.park_size, py0 + spec.park_size
    # Outermost ring must fit strictly inside the grid, leaving a street margin.
    extent = 1 + 2 * len(spec.rings)
    if px0 - extent < 0 or py0 - extent < 0 or px1 + extent > spec.width or py1 + extent > spec.height:
        raise InvalidArgumentError(
            f"{len(spec.rings)} rings around a {spec.park_size}-block park do not fit "
            f"a {spec.width}x{spec.height} grid")

    park_door = (px1, spec.height // 2)
    city.add_building("park", park_door, bbox=(px0, py0, px1, py1))

    # Avenue columns/rows stay street so the ring streets are all connected.
    avenues_x = {(spec.width - 1) // 2, spec.width // 2}
    avenues_y = {(spec.height - 1) // 2, spec.height // 2}

    for ring_idx, (btype, frontage) in enumerate(spec.rings):
        offset = 2 + 2 * ring_idx  # park edge -> street ring -> building ring
        x0, y0 = px0 - offset, py0 - offset
        x1, y1 = px1 + offset - 1, py1 + offset - 1  # inclusive ring corners
        sides = [
            [(x, y0) for x in range(x0 + 1, x1)],   # bottom, door faces +y
            [(x, y1) for x in range(x0 + 1, x1)],   # top, door faces -y
            [(x0, y) for y in range(y0 + 1, y1)],   # left, door faces +x
            [(x1, y) for y in range(y0 + 1, y1)],   # right, door faces -x
        ]
        inward = [(0, 1), (0, -1), (1, 0), (-1, 0)]
        for side, (dx, dy) in zip(sides, inward):
            run = []
            for block in side:
                if block[0] in avenues_x or block[1] in avenues_y:
                    _flush_run(city, run, btype, frontage, dx, dy)
                    run = []
                else:
                    run.append(block)
            _flush_run(city, run, btype, frontage, dx, dy)

    return city


def _flush_run(city, run, btype, frontage, dx, dy):
    """Partition a straight run of ring blocks into frontage-sized buildings.

    Doors face inward; when the inward block of the first segment block is
    already another building's door, later candidates (then outward blocks)
    are tried so doors stay unique and every r(k, l) stays positive.
    """
    used_doors = {b.door for b in city.buildings.values()}
    for i in range(0, len(run) - len(run) % frontage, frontage):
        segment = sorted(run[i:i + frontage])
        candidates = [(x + dx, y + dy) for x, y in segment]
        candidates += [(x - dx, y - dy) for x, y in segment]
        door = next(
            (c for c in candidates if c not in used_doors and city.is_street(c)),
            None,
        )
        if door is None:
            raise InvalidArgumentError(f"no free door block for ring segment {segment}")
        city.add_building(btype, door, blocks=segment)
        used_doors.add(door)
