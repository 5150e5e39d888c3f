"""Rule grounding over scene constants and reasoning-graph construction.

The grounding universe contains the constants that denote objects: constants
in the first (subject) argument position of any fact plus constants matching
``obj<N>``/``sgg<N>`` anywhere in the facts or the program. Attribute
constants inside rules (``boat``, ``cyan``) are never substituted.

A ground body atom is *supportable* if it is an input fact or its predicate
is intensional (appears as some rule head); rule instances with an
unsupportable body atom are pruned. This one-pass relevance filter is an
over-approximation: it never drops a derivable atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .logic import Atom, FactSet, Predicate, Program, Term

__all__ = [
    "GroundRule",
    "ReasoningGraph",
    "UniverseTooLarge",
    "grounding_universe",
    "ground_program",
    "build_reasoning_graph",
]

_OBJECT_PATTERN = re.compile(r"^(?:obj|sgg)\d+$")


class UniverseTooLarge(RuntimeError):
    """The candidate grounding space exceeds the configured cap."""


@dataclass(frozen=True)
class GroundRule:
    head: Atom
    body: tuple[Atom, ...]
    rule_index: int


def grounding_universe(program: Program, facts: FactSet) -> tuple[Term, ...]:
    """Constants eligible for variable substitution, in first-seen order."""
    seen: dict[Term, None] = {}
    for fact in facts:
        first = fact.args[0]
        if first.is_constant:
            seen.setdefault(first, None)
    for fact in facts:
        for t in fact.args[1:]:
            if t.is_constant and _OBJECT_PATTERN.match(t.name):
                seen.setdefault(t, None)
    for rule in program:
        for a in (rule.head, *rule.body):
            for t in a.args:
                if t.is_constant and _OBJECT_PATTERN.match(t.name):
                    seen.setdefault(t, None)
    return tuple(seen)


def _match(
    pattern: Atom,
    fact: Atom,
    binding: dict[Term, Term],
    universe: frozenset[Term],
) -> dict[Term, Term] | None:
    """Extend binding so that pattern == fact, or None if impossible.

    New bindings must come from the grounding universe: a variable never
    captures an attribute constant, even when a fact carries one.
    """
    if pattern.predicate != fact.predicate:
        return None
    out = binding
    for p, f in zip(pattern.args, fact.args):
        if p.is_constant:
            if p != f:
                return None
            continue
        bound = out.get(p)
        if bound is None:
            if f not in universe:
                return None
            if out is binding:
                out = dict(binding)
            out[p] = f
        elif bound != f:
            return None
    return dict(out) if out is binding else out


def ground_program(
    program: Program,
    facts: FactSet,
    *,
    max_groundings: int = 10**7,
) -> list[GroundRule]:
    """Instantiate every rule over the grounding universe.

    Extensional body atoms are grounded by joining against matching facts;
    intensional body atoms enumerate the universe for their unbound
    variables. Raises :class:`UniverseTooLarge` when a rule's candidate
    substitution space or an intermediate join exceeds ``max_groundings``.
    """
    universe = grounding_universe(program, facts)
    universe_set = frozenset(universe)
    intensional = program.intensional_predicates

    by_pred: dict[Predicate, list[Atom]] = {}
    for f in facts:
        by_pred.setdefault(f.predicate, []).append(f)

    ground_rules: list[GroundRule] = []
    for rule_index, rule in enumerate(program):
        n_vars = len(rule.variables)
        if n_vars and len(universe) ** n_vars > max_groundings:
            raise UniverseTooLarge(
                f"rule {rule_index}: {len(universe)}^{n_vars} candidate "
                f"substitutions exceed the cap of {max_groundings}"
            )

        # Extensional atoms first: they bind variables from facts and keep
        # the join small before intensional atoms enumerate the universe.
        ordered = sorted(
            range(len(rule.body)),
            key=lambda i: (rule.body[i].predicate in intensional, i),
        )

        bindings: list[dict[Term, Term]] = [{}]
        for i in ordered:
            body_atom = rule.body[i]
            extended: list[dict[Term, Term]] = []
            if body_atom.predicate in intensional:
                for b in bindings:
                    partial = body_atom.substitute(b)
                    free = sorted(partial.variables, key=lambda t: t.name)
                    if not free:
                        extended.append(b)
                        continue
                    stack = [b]
                    for v in free:
                        stack = [
                            {**bb, v: c} for bb in stack for c in universe
                        ]
                    extended.extend(stack)
            else:
                candidates = by_pred.get(body_atom.predicate, ())
                for b in bindings:
                    partial = body_atom.substitute(b)
                    for f in candidates:
                        b2 = _match(partial, f, b, universe_set)
                        if b2 is not None:
                            extended.append(b2)
            bindings = extended
            if len(bindings) > max_groundings:
                raise UniverseTooLarge(
                    f"rule {rule_index}: join produced more than "
                    f"{max_groundings} bindings"
                )
            if not bindings:
                break

        for b in bindings:
            head = rule.head.substitute(b)
            body = tuple(a.substitute(b) for a in rule.body)
            if not head.is_ground():
                continue  # unreachable under range restriction
            ground_rules.append(GroundRule(head, body, rule_index))

    return ground_rules


class ReasoningGraph:
    """Bipartite graph of ground atom nodes and conjunction nodes.

    One conjunction node per ground rule; each has one or more body atoms
    (atom -> conj edges) and exactly one head atom (conj -> atom edge).
    The first ``n_facts`` atom nodes are the input facts in fact-store
    order, so fact valuations align with atom node ids. Immutable after
    construction.
    """

    def __init__(self, ground_rules: list[GroundRule], facts: FactSet, n_rules: int | None = None):
        atoms: list[Atom] = list(facts)
        index: dict[Atom, int] = {a: i for i, a in enumerate(atoms)}

        def intern(a: Atom) -> int:
            i = index.get(a)
            if i is None:
                i = len(atoms)
                atoms.append(a)
                index[a] = i
            return i

        head_idx = []
        rule_idx = []
        body_counts = []
        body_flat: list[int] = []
        for gr in ground_rules:
            head_idx.append(intern(gr.head))
            rule_idx.append(gr.rule_index)
            body_counts.append(len(gr.body))
            body_flat.extend(intern(a) for a in gr.body)

        self.atoms: tuple[Atom, ...] = tuple(atoms)
        self.atom_index: dict[Atom, int] = index
        self.n_facts: int = len(facts)
        self.n_atoms: int = len(atoms)
        self.n_conj: int = len(ground_rules)
        if n_rules is None:
            n_rules = max(rule_idx) + 1 if rule_idx else 0
        self.n_rules: int = n_rules

        self.conj_head = np.asarray(head_idx, dtype=np.int64)
        self.conj_rule = np.asarray(rule_idx, dtype=np.int64)
        self.body_counts = np.asarray(body_counts, dtype=np.int64)
        self.body_atoms = np.asarray(body_flat, dtype=np.int64)
        # Segment starts into body_atoms, one per conjunction node.
        self.body_starts = np.zeros(self.n_conj, dtype=np.int64)
        if self.n_conj:
            np.cumsum(self.body_counts[:-1], out=self.body_starts[1:])

        # Which conjunction each body slot belongs to.
        self.slot_conj = np.repeat(np.arange(self.n_conj), self.body_counts)

        # Conjunctions grouped by head atom for the disjunctive update.
        order = np.argsort(self.conj_head, kind="stable")
        self.grouped_conj = order
        grouped_heads = self.conj_head[order]
        if self.n_conj:
            boundary = np.flatnonzero(
                np.diff(grouped_heads, prepend=grouped_heads[0] - 1)
            )
            self.updated_atoms = grouped_heads[boundary]
            self.group_starts = boundary
            self.group_sizes = np.diff(
                np.append(boundary, self.n_conj)
            )
        else:
            self.updated_atoms = np.zeros(0, dtype=np.int64)
            self.group_starts = np.zeros(0, dtype=np.int64)
            self.group_sizes = np.zeros(0, dtype=np.int64)

    def initial_valuation(self, fact_values: np.ndarray) -> np.ndarray:
        """Embed a fact valuation into a full atom-node valuation vector."""
        fact_values = np.asarray(fact_values, dtype=float)
        if fact_values.shape != (self.n_facts,):
            raise ValueError(
                f"expected {self.n_facts} fact values, got {fact_values.shape}"
            )
        v0 = np.zeros(self.n_atoms, dtype=float)
        v0[: self.n_facts] = fact_values
        return v0

    def to_debug_dict(self) -> dict:
        """Structured dump of nodes and edges for inspection."""
        return {
            "atoms": [str(a) for a in self.atoms],
            "n_facts": self.n_facts,
            "conjunctions": [
                {
                    "head": int(self.conj_head[i]),
                    "body": [
                        int(b)
                        for b in self.body_atoms[
                            self.body_starts[i] : self.body_starts[i]
                            + self.body_counts[i]
                        ]
                    ],
                    "rule_index": int(self.conj_rule[i]),
                }
                for i in range(self.n_conj)
            ],
        }

    def __repr__(self) -> str:
        return (
            f"ReasoningGraph({self.n_atoms} atoms, {self.n_conj} conjunctions, "
            f"{self.n_facts} facts)"
        )


def build_reasoning_graph(
    program: Program,
    facts: FactSet,
    *,
    max_groundings: int = 10**7,
) -> ReasoningGraph:
    """Ground a program against facts and pack it into a ReasoningGraph.

    Atom nodes are deduplicated; every input fact has a node even when no
    rule touches it. The graph's rule-weight vector is sized by the
    program, so rules without groundings still own a weight slot.
    """
    ground_rules = ground_program(program, facts, max_groundings=max_groundings)
    return ReasoningGraph(ground_rules, facts, n_rules=len(program.rules))
