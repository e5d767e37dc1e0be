import pytest
from hypothesis import given, strategies as st

from netcoop.network import (
    DivisionParams, build_network, check_reservation_bound, conflict_pairs_at, corridor,
    divide_network, grid, single, star, validate_network,
)


class TestBuild:
    def test_grid(self):
        net = build_network({"type": "grid", "rows": 2, "cols": 2, "spacing": 400})
        assert net.P == 4
        inner = net.internal_legs()
        assert len(inner) == 4 and all(leg.length == 400.0 for leg in inner)

    def test_single(self):
        net = single()
        assert net.P == 1 and net.internal_legs() == []
        assert len(net.input_lanes()) == 4

    def test_star_arms(self):
        net = star()
        assert net.P == 5
        assert sorted(leg.length for leg in net.internal_legs()) == [250.0, 300.0, 350.0, 400.0]
        # two lanes on 12 boundary approaches
        assert len(net.input_lanes()) == 24

    def test_route_sets(self):
        through = corridor(route_set="through")
        turning = corridor()
        assert all(len({m.split("-")[0][0] for _, m in r.hops}) == 1 for r in through.routes)
        assert {r.hops for r in through.routes} < {r.hops for r in turning.routes}
        assert [len(n.routes) for n in (single(), corridor(), grid(), star())] == [12, 30, 104, 96]

    def test_routes_never_revisit(self):
        for r in grid().routes:
            assert len(set(r.intersections)) == r.K

    def test_route_probabilities_uniform_per_hop(self):
        net = corridor()
        routes = net.routes_from(1, "W", 0)
        probs = dict(zip((r.id for r in routes), net.route_probabilities(routes)))
        assert sum(probs.values()) == pytest.approx(1.0)
        # three movements at the first hop; going through splits a third into three more
        single_hop = [rid for rid, r in zip(probs, routes) if r.K == 1]
        assert all(probs[rid] == pytest.approx(1 / 3) for rid in single_hop)
        assert sum(p for rid, p in probs.items() if rid not in single_hop) == pytest.approx(1 / 3)

    def test_schema_rejects_unknown_type(self):
        import jsonschema
        with pytest.raises(jsonschema.ValidationError):
            build_network({"type": "ring"})

    def test_custom_network(self):
        doc = {"type": "custom",
               "intersections": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 300, "y": 0}],
               "legs": [{"from": 1, "from_side": "E", "to": 2, "to_side": "W", "length": 300},
                        {"from": 1, "from_side": "W", "length": 300},
                        {"from": 2, "from_side": "E", "length": 300}]}
        net = build_network(doc)
        assert net.P == 2 and len(net.internal_legs()) == 1
        assert len(net.input_lanes()) == 2

    def test_short_leg_rejected(self):
        with pytest.raises(ValueError):
            validate_network(corridor(spacing=150.0), l_c=200.0)


class TestDivision:
    def test_zone_lengths(self):
        dm = divide_network(corridor(), DivisionParams(l_c=200, l_r=100))
        z = dm.zones(1, "E")
        assert z.zone_lengths == (200.0, 100.0, 100.0)
        assert [z.label(d) for d in (0.0, 199.9, 200.0, 299.9, 300.0, 399.0)] == \
            ["area", "area", "segment", "segment", "outside", "outside"]

    def test_zero_segment_rejected(self):
        with pytest.raises(ValueError, match="l_r >= v_c\\*delta_T"):
            divide_network(corridor(), DivisionParams(l_r=0.0))

    def test_bound_edges(self):
        check_reservation_bound(20.0, 10.0, 2.0)
        with pytest.raises(ValueError):
            check_reservation_bound(19.9, 10.0, 2.0)

    @given(st.floats(1.0, 20.0), st.floats(0.5, 8.0), st.floats(0.0, 300.0))
    def test_bound_is_product(self, v_c, delta_T, l_r):
        ok = l_r >= v_c * delta_T - 1e-9
        try:
            check_reservation_bound(l_r, v_c, delta_T)
            assert ok
        except ValueError:
            assert not ok

    def test_segment_clipped_by_leg(self):
        dm = divide_network(star(), DivisionParams(l_c=200, l_r=100))
        z = dm.zones(1, "E")  # 250 m arm
        assert z.zone_lengths == (200.0, 50.0, 0.0)

    def test_overrides(self):
        p = DivisionParams(l_r=100, l_r_overrides={(1, "E"): 150.0})
        dm = divide_network(corridor(), p)
        assert dm.zones(1, "E").segment_end == 350.0
        assert dm.zones(2, "W").segment_end == 300.0


class TestConflicts:
    def test_crossing_and_parallel(self):
        net = single()
        assert conflict_pairs_at(net, 1, [("a", "S0-N"), ("b", "W0-E")]) == {frozenset("ab")}
        assert conflict_pairs_at(net, 1, [("a", "S0-N"), ("b", "N0-S")]) == set()

    def test_figure_pair(self):
        # one vehicle turns into the east leg, the other crosses straight from the west
        assert conflict_pairs_at(grid(), 3, [("C", "S0-E"), ("D", "W0-E")]) == {frozenset("CD")}

    def test_unknown_movement(self):
        with pytest.raises(KeyError):
            conflict_pairs_at(single(), 1, [("a", "S0-X")])

    @pytest.mark.parametrize("net", [single(), single(lanes=2), star()])
    def test_symmetric_and_lane_free(self, net):
        for node in net.intersections:
            lanes = {m.id: m.lane_key for m in node.movements}
            for pair in node.conflicts:
                a, b = tuple(pair)
                assert node.conflicting(a, b) and node.conflicting(b, a)
                assert lanes[a] != lanes[b]

    def test_right_turns_conflict_only_on_merge(self):
        node = single().intersection(1)
        # a right turn from the south ends on the east leg; only traffic also heading east meets it
        partners = {next(iter(p - {"S0-E"})) for p in node.conflicts if "S0-E" in p}
        assert partners and all(m.endswith("-E") for m in partners)

    def test_config_override(self):
        doc = {"type": "single", "conflicts": {"1": [["S0-N", "W0-E"]]}}
        node = build_network(doc).intersection(1)
        assert node.conflicts == frozenset({frozenset(("S0-N", "W0-E"))})
