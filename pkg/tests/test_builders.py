import numpy as np
import pytest

from rosdyn.builders import (COUPLING_PRESETS, RepressionGraph, bidder_name, build_coupled, build_cycle,
                             build_edge_item, build_repressilator, parse_edge_list)
from rosdyn.market import Beta, MarketInstance, validate_instance
from rosdyn.utility import UtilityModel, utility_gradient


def test_edge_item_shapes():
    item = build_edge_item("b1", "b2", 7)
    assert item.values == {"b1": Beta(7, 14), "b2": Beta(14, 7)}
    assert item.reserve == 0.0 and item.tie_break.kind == "uniform"


def test_edge_item_means_differ_by_factor_two():
    item = build_edge_item("a", "b", 7)
    assert item.values["a"].mean == pytest.approx(1 / 3)
    assert item.values["b"].mean == pytest.approx(2 / 3)


def test_smallest_sharpness():
    assert build_edge_item("a", "b", 1).values == {"a": Beta(1, 2), "b": Beta(2, 1)}


def test_self_loops_rejected():
    with pytest.raises(ValueError):
        build_edge_item("a", "a")
    with pytest.raises(ValueError, match="self-loop"):
        RepressionGraph(3, ((2, 2),))
    with pytest.raises(ValueError, match="outside"):
        RepressionGraph(3, ((1, 4),))


def test_two_cycle():
    inst = build_cycle(2)
    assert inst.bidders == ("b1", "b2") and inst.n_items == 2 and inst.lam == 1.0


def test_three_cycle_value_matrix():
    inst = build_cycle(3)
    table = np.zeros((3, 3), dtype=object)
    for j, item in enumerate(inst.items):
        for name, spec in item.values.items():
            table[inst.index(name), j] = (spec.a, spec.b)
    # bidder k+1 is repressed on item k, bidder k represses on it
    expected = np.array([[(7, 14), 0, (14, 7)], [(14, 7), (7, 14), 0], [0, (14, 7), (7, 14)]], dtype=object)
    assert (table == expected).all()


def test_empty_graph():
    inst = build_repressilator(RepressionGraph(4, ()))
    assert inst.n_bidders == 4 and inst.n_items == 0


@pytest.mark.parametrize("n", [4, 5])
def test_cycle_sizes(n):
    inst = build_cycle(n, 7)
    assert inst.n_bidders == n and inst.n_items == n


def test_cycle_needs_two_nodes():
    with pytest.raises(ValueError):
        build_cycle(1)


def test_coupling_presets():
    a = build_coupled("coupling-A")
    assert a.n_bidders == 9 and a.n_items == 12
    inter = COUPLING_PRESETS["coupling-A"][1][9:]
    assert inter == [(3, 4), (5, 7), (8, 5)]
    b = build_coupled("coupling-B")
    assert b.n_items == 12 and COUPLING_PRESETS["coupling-B"][1][9:] == [(3, 4), (5, 7), (8, 4)]
    with pytest.raises(ValueError, match="unknown coupling preset"):
        build_coupled("coupling-Z")


def test_custom_coupling():
    inst = build_coupled((2, [(1, 4)]), c=3)
    assert inst.n_bidders == 6 and inst.n_items == 7
    assert inst.items[-1].values == {"b1": Beta(3, 6), "b4": Beta(6, 3)}


@pytest.mark.parametrize("inst", [build_cycle(n) for n in (2, 3, 4, 5)]
                         + [build_coupled(p) for p in COUPLING_PRESETS])
def test_built_instances_repress_along_edges(inst):
    assert validate_instance(inst) == []
    m = np.full(inst.n_bidders, 1.5)
    g = utility_gradient(UtilityModel(inst), m)
    for item in inst.items:
        a, b = item.values  # repressor first
        ia, ib = inst.index(a), inst.index(b)
        assert g[ib, ia] < 0
        # the asymmetry is a property of the edge's own item; in a 2-cycle the
        # two opposite edges cancel it in the aggregate
        own = utility_gradient(UtilityModel(MarketInstance(inst.bidders, (item,))), m)
        assert abs(own[ia, ib]) < abs(own[ib, ia])


def test_edge_count_identity():
    g = RepressionGraph(5, ((1, 2), (2, 3), (4, 5), (5, 1)))
    assert build_repressilator(g).n_items == len(g.edges)


def test_parse_edge_list():
    n, edges, c = parse_edge_list(["# cycle", "n 4", "c 5", "1 2", "2 3  # inline", "", "3 1"])
    assert (n, edges, c) == (4, [(1, 2), (2, 3), (3, 1)], 5)
    assert parse_edge_list(["1 3"]) == (3, [(1, 3)], None)
    with pytest.raises(ValueError, match="line 2"):
        parse_edge_list(["1 2", "1 x"])


def test_bidder_names():
    assert bidder_name(3) == "b3"
