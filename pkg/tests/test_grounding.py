"""Grounding: universe restriction, joins, and the reasoning graph."""

import json

import numpy as np
import pytest

from deixis.grounding import (
    ReasoningGraph,
    UniverseTooLarge,
    build_reasoning_graph,
    ground_program,
    grounding_universe,
)
from deixis.logic import FactSet, Rule, atom, parse_program

PROGRAM_1 = (
    "cond1(X):-on(X,Y),type(Y,boat).\n"
    "cond2(X):-holding(X,Y),type(Y,umbrella).\n"
    "target(X):-cond1(X),cond2(X).\n"
)


def boat_scene_facts() -> FactSet:
    return FactSet(
        [
            atom("on", "obj1", "obj2"),
            atom("holding", "obj1", "obj3"),
            atom("type", "obj1", "man"),
            atom("type", "obj2", "boat"),
            atom("type", "obj3", "umbrella"),
        ]
    )


def test_universe_contents():
    program = parse_program(PROGRAM_1)
    universe = {t.name for t in grounding_universe(program, boat_scene_facts())}
    # First-argument constants plus object-pattern constants; attribute
    # constants like "boat" are never bindable.
    assert universe == {"obj1", "obj2", "obj3"}


def test_universe_picks_object_constants_from_program():
    program = parse_program("target(X):-on(X,obj9).")
    universe = {t.name for t in grounding_universe(program, FactSet())}
    assert universe == {"obj9"}


def test_variables_never_bind_attribute_constants():
    # X in the body could only bind to "boat", which is not in the universe.
    program = parse_program("mark(X):-type(obj1,X).")
    facts = FactSet([atom("type", "obj1", "boat")])
    assert ground_program(program, facts) == []


def test_ground_program_boat_scene():
    program = parse_program(PROGRAM_1)
    ground = ground_program(program, boat_scene_facts())
    heads = {str(g.head) for g in ground}
    assert "cond1(obj1)" in heads
    assert "cond2(obj1)" in heads
    assert "target(obj1)" in heads
    # target(X) enumerates the whole universe for its intensional body.
    assert "target(obj2)" in heads and "target(obj3)" in heads
    by_rule = {}
    for g in ground:
        by_rule.setdefault(g.rule_index, set()).add(str(g.head))
    assert by_rule[0] == {"cond1(obj1)"}
    assert by_rule[1] == {"cond2(obj1)"}


def test_bodiless_ground_rule_allowed():
    program = parse_program("seed(obj1).\nmark(X):-seed(X).")
    ground = ground_program(program, FactSet([atom("type", "obj1", "man")]))
    bodiless = [g for g in ground if not g.body]
    assert len(bodiless) == 1
    assert str(bodiless[0].head) == "seed(obj1)"


def test_universe_cap_enforced():
    program = parse_program("mark(X):-link(X,Y),link(Y,Z),link(Z,W).")
    facts = FactSet(
        [atom("link", f"obj{i}", f"obj{j}") for i in range(9) for j in range(9)]
    )
    with pytest.raises(UniverseTooLarge):
        ground_program(program, facts, max_groundings=100)


def test_reasoning_graph_layout():
    program = parse_program(PROGRAM_1)
    facts = boat_scene_facts()
    graph = build_reasoning_graph(program, facts)
    assert graph.n_facts == len(facts)
    assert graph.atoms[: graph.n_facts] == tuple(facts)
    assert graph.n_rules == 3
    assert graph.n_conj == len(ground_program(program, facts))
    assert graph.body_counts.sum() == graph.body_atoms.size
    assert graph.conj_head.shape == (graph.n_conj,)
    assert np.all(graph.conj_rule < graph.n_rules)
    # Every head is an updated atom and vice versa.
    assert set(graph.conj_head) == set(graph.updated_atoms)


def test_initial_valuation_aligns_with_facts():
    program = parse_program(PROGRAM_1)
    facts = boat_scene_facts()
    graph = build_reasoning_graph(program, facts)
    values = np.linspace(0.1, 0.9, len(facts))
    v0 = graph.initial_valuation(values)
    assert v0.shape == (graph.n_atoms,)
    assert np.array_equal(v0[: graph.n_facts], values)
    assert np.all(v0[graph.n_facts :] == 0.0)


def test_ground_rule_head_can_be_existing_fact():
    # Deriving an atom that is also an input fact must reuse its node.
    program = parse_program("on(X,Y):-above(X,Y).")
    facts = FactSet([atom("on", "obj1", "obj2"), atom("above", "obj1", "obj2")])
    graph = build_reasoning_graph(program, facts)
    assert graph.n_atoms == 2
    assert graph.updated_atoms.tolist() == [0]


def test_debug_dict_round_trips_through_json():
    program = parse_program(PROGRAM_1)
    graph = build_reasoning_graph(program, boat_scene_facts())
    dump = json.loads(json.dumps(graph.to_debug_dict()))
    assert dump["n_facts"] == graph.n_facts
    assert len(dump["atoms"]) == graph.n_atoms
    assert len(dump["conjunctions"]) == graph.n_conj
    for conj in dump["conjunctions"]:
        assert 0 <= conj["head"] < graph.n_atoms
        assert 0 <= conj["rule_index"] < graph.n_rules
        assert all(0 <= b < graph.n_atoms for b in conj["body"])
    assert "atoms" in repr(graph) or "ReasoningGraph" in repr(graph)
