"""Road-network topology, zone division and movement conflicts.

Intersections are identified by small integers.  Each intersection has up to
four sides (N, E, S, W); a leg attaches to a side and carries ``lanes`` lanes
in each direction.  A movement enters from a side/lane and leaves through
another side.  Geometry follows right-hand traffic inside a square conflict
area of side ``area_length``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import jsonschema

SIDES = ("N", "E", "S", "W")
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
# unit vector pointing from the intersection centre towards each side
_SIDE_VEC = {"N": (0.0, 1.0), "E": (1.0, 0.0), "S": (0.0, -1.0), "W": (-1.0, 0.0)}


@dataclass(frozen=True)
class Movement:
    id: str
    in_side: str
    in_lane: int
    out_side: str
    out_lane: int

    @property
    def lane_key(self) -> str:
        return f"{self.in_side}{self.in_lane}"

    @property
    def turn(self) -> str:
        if self.out_side == OPPOSITE[self.in_side]:
            return "through"
        order = SIDES.index(self.out_side) - SIDES.index(self.in_side)
        # heading away from in_side; clockwise neighbour of the entry side is a left turn
        return "left" if order % 4 == 1 else "right"


@dataclass(frozen=True)
class IntersectionSpec:
    id: int
    x: float
    y: float
    lanes: dict[str, int]  # side -> lanes per direction on the attached leg
    movements: tuple[Movement, ...]
    conflicts: frozenset[frozenset[str]]
    area_length: float = 20.0

    def movement(self, mid: str) -> Movement:
        for m in self.movements:
            if m.id == mid:
                return m
        raise KeyError(f"intersection {self.id} has no movement {mid!r}")

    def conflicting(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.conflicts


@dataclass(frozen=True)
class LegSpec:
    u: int
    u_side: str
    v: int | None  # None for a boundary leg
    v_side: str | None
    length: float
    lanes: int = 1

    @property
    def internal(self) -> bool:
        return self.v is not None


@dataclass(frozen=True)
class Route:
    id: str
    hops: tuple[tuple[int, str], ...]  # (intersection, movement id)

    @property
    def intersections(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self.hops)

    @property
    def K(self) -> int:
        return len(self.hops)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    intersections: tuple[IntersectionSpec, ...]
    legs: tuple[LegSpec, ...]
    routes: tuple[Route, ...]

    @property
    def P(self) -> int:
        return len(self.intersections)

    def intersection(self, k: int) -> IntersectionSpec:
        for i in self.intersections:
            if i.id == k:
                return i
        raise KeyError(f"unknown intersection {k}")

    def leg_at(self, k: int, side: str) -> LegSpec:
        for leg in self.legs:
            if (leg.u == k and leg.u_side == side) or (leg.v == k and leg.v_side == side):
                return leg
        raise KeyError(f"no leg on side {side} of intersection {k}")

    def neighbour(self, k: int, side: str) -> tuple[int, str] | None:
        """(intersection, side it is reached on) across the leg, or None at the boundary."""
        leg = self.leg_at(k, side)
        if leg.u == k and leg.u_side == side:
            return None if leg.v is None else (leg.v, leg.v_side)
        return (leg.u, leg.u_side)

    def internal_legs(self) -> list[LegSpec]:
        return [leg for leg in self.legs if leg.internal]

    def input_lanes(self) -> list[tuple[int, str, int]]:
        """Boundary approach lanes where vehicles are spawned."""
        out = []
        for leg in self.legs:
            if leg.v is None:
                out.extend((leg.u, leg.u_side, j) for j in range(leg.lanes))
        return sorted(out, key=lambda t: (t[0], SIDES.index(t[1]), t[2]))

    def routes_from(self, k: int, side: str, lane: int) -> list[Route]:
        out = []
        for r in self.routes:
            k0, mid = r.hops[0]
            m = self.intersection(k0).movement(mid)
            if k0 == k and m.in_side == side and m.in_lane == lane:
                out.append(r)
        return out

    def route_probabilities(self, routes: list[Route]) -> list[float]:
        """Each hop picks uniformly among the movements open to the vehicle's lane."""
        w = []
        for r in routes:
            p = 1.0
            for k, mid in r.hops:
                node = self.intersection(k)
                m = node.movement(mid)
                p /= sum(1 for x in node.movements if x.lane_key == m.lane_key)
            w.append(p)
        total = sum(w)
        return [x / total for x in w]


# -- geometry ---------------------------------------------------------------

def _lane_point(side: str, lane: int, half: float, width: float, entering: bool):
    ox, oy = _SIDE_VEC[side]
    hx, hy = (-ox, -oy) if entering else (ox, oy)  # travel heading
    rx, ry = hy, -hx  # right-hand normal of the heading
    off = (lane + 0.5) * width
    return (ox * half + rx * off, oy * half + ry * off)


def _segments_meet(p1, p2, q1, q2, eps=1e-9) -> bool:
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def on_seg(p, q, r):
        return (min(p[0], r[0]) - eps <= q[0] <= max(p[0], r[0]) + eps
                and min(p[1], r[1]) - eps <= q[1] <= max(p[1], r[1]) + eps)

    d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
    d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
       ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True
    if abs(d1) <= eps and on_seg(q1, p1, q2):
        return True
    if abs(d2) <= eps and on_seg(q1, p2, q2):
        return True
    if abs(d3) <= eps and on_seg(p1, q1, p2):
        return True
    if abs(d4) <= eps and on_seg(p1, q2, p2):
        return True
    return False


def movement_table(lanes: dict[str, int]) -> tuple[Movement, ...]:
    """All through/left/right movements; inner lane turns left, outer lane turns right."""
    out = []
    for s_in, n_in in lanes.items():
        for j in range(n_in):
            for s_out, n_out in lanes.items():
                if s_out == s_in:
                    continue
                turn = Movement("", s_in, j, s_out, 0).turn
                if turn == "left" and j != 0:
                    continue
                if turn == "right" and j != n_in - 1:
                    continue
                jo = min(j, n_out - 1)
                out.append(Movement(f"{s_in}{j}-{s_out}", s_in, j, s_out, jo))
    return tuple(out)


def geometric_conflicts(movements: Iterable[Movement], lanes: dict[str, int],
                        area_length: float) -> frozenset[frozenset[str]]:
    """Two movements conflict iff their straight paths through the area meet."""
    half = area_length / 2.0
    width = area_length / (2.0 * max(lanes.values()))
    paths = {
        m.id: (_lane_point(m.in_side, m.in_lane, half, width, True),
               _lane_point(m.out_side, m.out_lane, half, width, False))
        for m in movements
    }
    mv = {m.id: m for m in movements}
    out = set()
    for a, b in itertools.combinations(sorted(paths), 2):
        if mv[a].lane_key == mv[b].lane_key:
            continue
        if _segments_meet(*paths[a], *paths[b]):
            out.add(frozenset((a, b)))
    return frozenset(out)


def make_intersection(k: int, x: float, y: float, lanes: dict[str, int],
                      area_length: float = 20.0,
                      override: Iterable[tuple[str, str]] | None = None) -> IntersectionSpec:
    movements = movement_table(lanes)
    if override is not None:
        ids = {m.id for m in movements}
        conflicts = set()
        for a, b in override:
            if a not in ids or b not in ids:
                raise ValueError(f"conflict override names unknown movement at {k}: {a}, {b}")
            if a == b:
                raise ValueError(f"movement {a} cannot conflict with itself")
            if a.split("-")[0] == b.split("-")[0]:
                raise ValueError(f"same-lane movements {a}, {b} cannot be a conflict pair")
            conflicts.add(frozenset((a, b)))
        conflicts = frozenset(conflicts)
    else:
        conflicts = geometric_conflicts(movements, lanes, area_length)
    return IntersectionSpec(k, x, y, dict(lanes), movements, conflicts, area_length)


# -- builders ---------------------------------------------------------------

def through_routes(intersections: dict[int, IntersectionSpec], legs: list[LegSpec]) -> tuple[Route, ...]:
    tmp = NetworkSpec("tmp", tuple(intersections.values()), tuple(legs), ())
    routes = []
    for k, side, lane in tmp.input_lanes():
        hops = []
        cur, s_in, j = k, side, lane
        while True:
            s_out = OPPOSITE[s_in]
            node = intersections[cur]
            if s_out not in node.lanes:
                break
            m = node.movement(f"{s_in}{j}-{s_out}")
            hops.append((cur, m.id))
            nb = tmp.neighbour(cur, s_out)
            if nb is None:
                break
            cur, s_in = nb
            j = min(m.out_lane, intersections[cur].lanes[s_in] - 1)
        if hops:
            routes.append(Route(f"{k}{side}{lane}", tuple(hops)))
    return tuple(routes)


def turning_routes(intersections: dict[int, IntersectionSpec], legs: list[LegSpec]) -> tuple[Route, ...]:
    """Every movement sequence from each input lane to an exit that visits no intersection twice.

    Route ids read ``<origin lane>.<turns>``, e.g. ``1W0.TL`` = through at 1, then left.
    """
    tmp = NetworkSpec("tmp", tuple(intersections.values()), tuple(legs), ())
    routes = []

    def walk(origin, cur, s_in, j, hops, seen):
        for m in intersections[cur].movements:
            if m.in_side != s_in or m.in_lane != j:
                continue
            h = hops + ((cur, m.id),)
            nb = tmp.neighbour(cur, m.out_side)
            if nb is None:
                tag = "".join(intersections[kk].movement(mid).turn[0].upper() for kk, mid in h)
                routes.append(Route(f"{origin}.{tag}", h))
            elif nb[0] not in seen:
                nk, ns = nb
                walk(origin, nk, ns, min(m.out_lane, intersections[nk].lanes[ns] - 1), h, seen | {nk})

    for k, side, lane in tmp.input_lanes():
        walk(f"{k}{side}{lane}", k, side, lane, (), {k})
    return tuple(routes)


ROUTE_SETS = {"through": through_routes, "turning": turning_routes}


def _assemble(name, nodes, links, external, lanes, ext_len, area_length, overrides=None,
              route_set="turning"):
    """nodes: {k: (x, y)}; links: [(u, u_side, v, v_side, length)]; external: [(k, side)]."""
    overrides = overrides or {}
    sides: dict[int, dict[str, int]] = {k: {} for k in nodes}
    legs = []
    for u, us, v, vs, length in links:
        legs.append(LegSpec(u, us, v, vs, float(length), lanes))
        sides[u][us] = lanes
        sides[v][vs] = lanes
    for k, s in external:
        legs.append(LegSpec(k, s, None, None, float(ext_len), lanes))
        sides[k][s] = lanes
    inters = {k: make_intersection(k, x, y, sides[k], area_length, overrides.get(k))
              for k, (x, y) in nodes.items()}
    return NetworkSpec(name, tuple(inters[k] for k in sorted(inters)), tuple(legs),
                       ROUTE_SETS[route_set](inters, legs))


def single(lanes=1, external_length=400.0, area_length=20.0,
           route_set="turning") -> NetworkSpec:
    return _assemble("single", {1: (0.0, 0.0)}, [], [(1, s) for s in SIDES],
                     lanes, external_length, area_length, route_set=route_set)


def corridor(n=2, spacing=400.0, lanes=1, external_length=400.0, area_length=20.0,
             route_set="turning") -> NetworkSpec:
    nodes = {k + 1: (k * spacing, 0.0) for k in range(n)}
    links = [(k, "E", k + 1, "W", spacing) for k in range(1, n)]
    ext = [(1, "W"), (n, "E")] + [(k, s) for k in nodes for s in ("N", "S")]
    return _assemble(f"corridor{n}", nodes, links, ext, lanes, external_length, area_length,
                     route_set=route_set)


def grid(rows=2, cols=2, spacing=400.0, lanes=1, external_length=400.0, area_length=20.0,
         route_set="turning") -> NetworkSpec:
    """Row-major numbering from the north-west corner (1 = NW)."""
    nodes, links, ext = {}, [], []
    kid = lambda r, c: r * cols + c + 1
    for r in range(rows):
        for c in range(cols):
            nodes[kid(r, c)] = (c * spacing, -r * spacing)
            if c + 1 < cols:
                links.append((kid(r, c), "E", kid(r, c + 1), "W", spacing))
            if r + 1 < rows:
                links.append((kid(r, c), "S", kid(r + 1, c), "N", spacing))
            if r == 0:
                ext.append((kid(r, c), "N"))
            if r == rows - 1:
                ext.append((kid(r, c), "S"))
            if c == 0:
                ext.append((kid(r, c), "W"))
            if c == cols - 1:
                ext.append((kid(r, c), "E"))
    return _assemble(f"grid{rows}x{cols}", nodes, links, ext, lanes, external_length, area_length,
                     route_set=route_set)


def star(arm_lengths=(250.0, 300.0, 350.0, 400.0), lanes=2, external_length=400.0,
         area_length=20.0, route_set="turning") -> NetworkSpec:
    """Centre intersection 1 with neighbours 2 (E), 3 (N), 4 (W), 5 (S)."""
    arm_sides = ("E", "N", "W", "S")
    nodes = {1: (0.0, 0.0)}
    links, ext = [], []
    for i, (side, length) in enumerate(zip(arm_sides, arm_lengths)):
        k = i + 2
        vx, vy = _SIDE_VEC[side]
        nodes[k] = (vx * length, vy * length)
        links.append((1, side, k, OPPOSITE[side], length))
        ext.extend((k, s) for s in SIDES if s != OPPOSITE[side])
    return _assemble("star", nodes, links, ext, lanes, external_length, area_length,
                     route_set=route_set)


# -- config documents -------------------------------------------------------

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["single", "corridor", "grid", "star", "custom"]},
        "n": {"type": "integer", "minimum": 1},
        "rows": {"type": "integer", "minimum": 1},
        "cols": {"type": "integer", "minimum": 1},
        "spacing": {"type": "number", "exclusiveMinimum": 0},
        "arm_lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 4, "maxItems": 4},
        "lanes": {"type": "integer", "minimum": 1},
        "external_length": {"type": "number", "exclusiveMinimum": 0},
        "area_length": {"type": "number", "exclusiveMinimum": 0},
        "route_set": {"enum": ["through", "turning"]},
        "intersections": {"type": "array", "items": {
            "type": "object", "required": ["id"],
            "properties": {"id": {"type": "integer"}, "x": {"type": "number"},
                           "y": {"type": "number"}}}},
        "legs": {"type": "array", "items": {
            "type": "object", "required": ["from", "from_side", "length"],
            "properties": {"from": {"type": "integer"}, "from_side": {"enum": list(SIDES)},
                           "to": {"type": "integer"}, "to_side": {"enum": list(SIDES)},
                           "length": {"type": "number"}, "lanes": {"type": "integer", "minimum": 1}}}},
        "routes": {"type": "array", "items": {
            "type": "object", "required": ["hops"],
            "properties": {"id": {"type": "string"},
                           "hops": {"type": "array", "minItems": 1, "items": {
                               "type": "array", "minItems": 2, "maxItems": 2}}}}},
        "conflicts": {"type": "object", "additionalProperties": {
            "type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                       "items": {"type": "string"}}}},
    },
}


def build_network(config: dict, l_c: float | None = None) -> NetworkSpec:
    """Instantiate a network from a config document (see README for the schema)."""
    jsonschema.validate(config, NETWORK_SCHEMA)
    kind = config["type"]
    common = {k: config[k] for k in ("lanes", "external_length", "area_length", "route_set")
              if k in config}
    if kind == "single":
        net = single(**common)
    elif kind == "corridor":
        net = corridor(n=config.get("n", 2), spacing=config.get("spacing", 400.0), **common)
    elif kind == "grid":
        net = grid(config.get("rows", 2), config.get("cols", 2), config.get("spacing", 400.0), **common)
    elif kind == "star":
        net = star(tuple(config.get("arm_lengths", (250.0, 300.0, 350.0, 400.0))), **common)
    else:
        net = _custom(config)
    if kind != "custom" and "conflicts" in config:
        net = _with_conflicts(net, config["conflicts"])
    validate_network(net, l_c)
    return net


def _with_conflicts(net: NetworkSpec, table: dict) -> NetworkSpec:
    inters = []
    for i in net.intersections:
        if str(i.id) in table:
            i = make_intersection(i.id, i.x, i.y, i.lanes, i.area_length,
                                  [tuple(p) for p in table[str(i.id)]])
        inters.append(i)
    return NetworkSpec(net.name, tuple(inters), net.legs, net.routes)


def _custom(config: dict) -> NetworkSpec:
    lanes_default = config.get("lanes", 1)
    area = config.get("area_length", 20.0)
    nodes = {d["id"]: (float(d.get("x", 0.0)), float(d.get("y", 0.0))) for d in config["intersections"]}
    sides: dict[int, dict[str, int]] = {k: {} for k in nodes}
    legs = []
    for d in config.get("legs", []):
        u, us = d["from"], d["from_side"]
        if u not in nodes:
            raise ValueError(f"leg references unknown intersection {u}")
        n = d.get("lanes", lanes_default)
        v, vs = d.get("to"), d.get("to_side")
        if v is not None and v not in nodes:
            raise ValueError(f"leg references unknown intersection {v}")
        legs.append(LegSpec(u, us, v, vs, float(d["length"]), n))
        sides[u][us] = n
        if v is not None:
            sides[v][vs] = n
    table = config.get("conflicts", {})
    inters = {k: make_intersection(k, x, y, sides[k], area,
                                   [tuple(p) for p in table[str(k)]] if str(k) in table else None)
              for k, (x, y) in nodes.items()}
    if "routes" in config:
        routes = tuple(Route(r.get("id", f"r{i}"), tuple((int(k), str(m)) for k, m in r["hops"]))
                       for i, r in enumerate(config["routes"]))
    else:
        routes = ROUTE_SETS[config.get("route_set", "turning")](inters, legs)
    return NetworkSpec(config.get("name", "custom"), tuple(inters[k] for k in sorted(inters)),
                       tuple(legs), routes)


def validate_network(net: NetworkSpec, l_c: float | None = None) -> None:
    seen = set()
    for leg in net.legs:
        if leg.length <= 0:
            raise ValueError(f"leg at {leg.u}{leg.u_side} has non-positive length")
        for end in ((leg.u, leg.u_side), (leg.v, leg.v_side)):
            if end[0] is None:
                continue
            if end in seen:
                raise ValueError(f"two legs attached to side {end[1]} of intersection {end[0]}")
            seen.add(end)
        if l_c is not None and leg.length < l_c:
            raise ValueError(f"leg at {leg.u}{leg.u_side} ({leg.length} m) is shorter than l_c={l_c} m")
    for r in net.routes:
        prev = None
        for k, mid in r.hops:
            node = net.intersection(k)
            m = node.movement(mid)
            if prev is not None:
                pk, pm = prev
                nb = net.neighbour(pk, pm.out_side)
                if nb is None or nb != (k, m.in_side):
                    raise ValueError(f"route {r.id}: intersection {k} does not follow {pk} ({pm.id})")
                if m.in_lane != min(pm.out_lane, node.lanes[m.in_side] - 1):
                    raise ValueError(f"route {r.id}: lane change between {pk} and {k}")
            prev = (k, m)
    for node in net.intersections:
        for pair in node.conflicts:
            a, b = tuple(pair)
            if node.movement(a).lane_key == node.movement(b).lane_key:
                raise ValueError(f"same-lane pair listed as conflict at {node.id}")


# -- division ---------------------------------------------------------------

@dataclass(frozen=True)
class DivisionParams:
    l_c: float = 200.0
    l_r: float = 100.0
    delta_T: float = 2.0
    v_c: float = 10.0
    l_r_overrides: dict = field(default_factory=dict)  # (k, side) -> l_r

    def __post_init__(self):
        if self.l_c <= 0 or self.l_r < 0 or self.delta_T <= 0:
            raise ValueError("need l_c > 0, l_r >= 0 and delta_T > 0")

    def l_r_at(self, k: int, side: str) -> float:
        return float(self.l_r_overrides.get((k, side), self.l_r))


def check_reservation_bound(l_r: float, v_c: float, delta_T: float, where: str = "") -> None:
    need = v_c * delta_T
    if l_r < need - 1e-9:
        raise ValueError(
            f"road segment l_r={l_r:g} m{where} is shorter than v_c*delta_T={need:g} m; "
            "segment vehicles would reach the intersection area before any planning "
            "tick could reserve an arrival time for them (reservation requirement l_r >= v_c*delta_T)"
        )


@dataclass(frozen=True)
class ApproachZones:
    length: float
    area_end: float
    segment_end: float

    def label(self, distance: float) -> str:
        if distance < self.area_end:
            return "area"
        if distance < self.segment_end:
            return "segment"
        return "outside"

    @property
    def zone_lengths(self) -> tuple[float, float, float]:
        return (self.area_end, self.segment_end - self.area_end, self.length - self.segment_end)


@dataclass(frozen=True)
class DivisionMap:
    params: DivisionParams
    approaches: dict  # (k, side) -> ApproachZones

    def zones(self, k: int, side: str) -> ApproachZones:
        return self.approaches[(k, side)]

    def label(self, k: int, side: str, distance: float) -> str:
        return self.approaches[(k, side)].label(distance)


def divide_network(net: NetworkSpec, params: DivisionParams) -> DivisionMap:
    out = {}
    for node in net.intersections:
        for side in node.lanes:
            leg = net.leg_at(node.id, side)
            if leg.length < params.l_c:
                raise ValueError(
                    f"leg on side {side} of intersection {node.id} ({leg.length} m) is shorter than l_c")
            l_r = params.l_r_at(node.id, side)
            seg_end = min(params.l_c + l_r, leg.length)
            check_reservation_bound(seg_end - params.l_c, params.v_c, params.delta_T,
                                    f" on side {side} of intersection {node.id}")
            out[(node.id, side)] = ApproachZones(leg.length, params.l_c, seg_end)
    return DivisionMap(params, out)


def conflict_pairs_at(net: NetworkSpec, k: int, movements: list[tuple[object, str]]) -> set[frozenset]:
    """Vehicle pairs whose movements cross inside the conflict area of ``k``.

    ``movements`` is a list of (vehicle id, movement id).
    """
    node = net.intersection(k)
    known = {m.id for m in node.movements}
    for _, mid in movements:
        if mid not in known:
            raise KeyError(f"unknown movement {mid!r} at intersection {k}")
    out = set()
    for (va, ma), (vb, mb) in itertools.combinations(movements, 2):
        if va != vb and node.conflicting(ma, mb):
            out.add(frozenset((va, vb)))
    return out
