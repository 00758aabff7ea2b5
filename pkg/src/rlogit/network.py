"""Directed state networks with an absorbing destination.

A :class:`Network` is the state graph of a sequential choice process: a set of
state ids, one absorbing destination, and attributed arcs between states.
Attribute vectors all share the same length K and are stored as a dense
``(n_arcs, K)`` matrix.  Instances are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DanglingEndpoint,
    DestinationHasSuccessors,
    DuplicateArc,
    InvalidPenalty,
    UnknownArc,
    UnknownState,
)

StateId = int | str


@dataclass(frozen=True)
class Network:
    """Immutable directed state graph with one absorbing destination.

    Attributes:
        states: state ids in canonical order.
        destination: absorbing state id (no outgoing arcs).
        arc_from / arc_to: integer state indices per arc.
        attrs: (n_arcs, K) attribute matrix.
        attribute_names: K column names.
        positions: optional mapping node -> (x, y), carried by generators.
    """

    states: tuple[StateId, ...]
    destination: StateId
    arc_from: np.ndarray
    arc_to: np.ndarray
    attrs: np.ndarray
    attribute_names: tuple[str, ...]
    positions: dict | None = None

    # derived, filled in __post_init__
    index: dict = field(default_factory=dict, compare=False, repr=False)
    succ_arcs: tuple = field(default=(), compare=False, repr=False)
    pred_arcs: tuple = field(default=(), compare=False, repr=False)
    arc_lookup: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})
        n = len(self.states)
        succ: list[list[int]] = [[] for _ in range(n)]
        pred: list[list[int]] = [[] for _ in range(n)]
        lookup = {}
        for a, (i, j) in enumerate(zip(self.arc_from, self.arc_to)):
            succ[i].append(a)
            pred[j].append(a)
            lookup[(int(i), int(j))] = a
        object.__setattr__(self, "succ_arcs", tuple(np.asarray(s, dtype=int) for s in succ))
        object.__setattr__(self, "pred_arcs", tuple(np.asarray(p, dtype=int) for p in pred))
        object.__setattr__(self, "arc_lookup", lookup)

    # --- basic queries ----------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_from)

    @property
    def n_attributes(self) -> int:
        return self.attrs.shape[1]

    @property
    def destination_index(self) -> int:
        return self.index[self.destination]

    def state_index(self, state: StateId) -> int:
        try:
            return self.index[state]
        except KeyError:
            raise UnknownState(f"unknown state {state!r}") from None

    def successors(self, state: StateId) -> list[StateId]:
        idx = self.state_index(state)
        return [self.states[self.arc_to[a]] for a in self.succ_arcs[idx]]

    def predecessors(self, state: StateId) -> list[StateId]:
        idx = self.state_index(state)
        return [self.states[self.arc_from[a]] for a in self.pred_arcs[idx]]

    def arc_id(self, from_state: StateId, to_state: StateId) -> int:
        key = (self.state_index(from_state), self.state_index(to_state))
        try:
            return self.arc_lookup[key]
        except KeyError:
            raise UnknownArc(f"no arc {from_state!r} -> {to_state!r}") from None

    def arcs(self) -> Iterable[tuple[StateId, StateId, np.ndarray]]:
        for a in range(self.n_arcs):
            yield (self.states[self.arc_from[a]], self.states[self.arc_to[a]], self.attrs[a])


def build_network(
    states: Sequence[StateId],
    destination: StateId,
    arcs: Sequence[tuple],
    attribute_names: Sequence[str] | None = None,
    positions: dict | None = None,
) -> Network:
    """Build a validated :class:`Network`.

    ``arcs`` is a sequence of ``(from, to, attributes)`` triples.  Raises
    :class:`DuplicateArc`, :class:`DanglingEndpoint` or
    :class:`DestinationHasSuccessors` on invalid input.
    """
    states = tuple(states)
    state_set = set(states)
    if len(state_set) != len(states):
        raise DuplicateArc("duplicate state ids")
    if destination not in state_set:
        raise DanglingEndpoint(f"destination {destination!r} not in states")

    index = {s: i for i, s in enumerate(states)}
    seen = set()
    n_arcs = len(arcs)
    if n_arcs == 0:
        k = len(attribute_names) if attribute_names else 0
        attrs = np.zeros((0, k))
        arc_from = np.zeros(0, dtype=int)
        arc_to = np.zeros(0, dtype=int)
    else:
        k = len(np.atleast_1d(arcs[0][2]))
        arc_from = np.empty(n_arcs, dtype=int)
        arc_to = np.empty(n_arcs, dtype=int)
        attrs = np.empty((n_arcs, k))
        for a, (u, v, vec) in enumerate(arcs):
            if u not in state_set or v not in state_set:
                raise DanglingEndpoint(f"arc ({u!r}, {v!r}) references unknown state")
            if u == destination:
                raise DestinationHasSuccessors(
                    f"destination {destination!r} has outgoing arc to {v!r}"
                )
            if (u, v) in seen:
                raise DuplicateArc(f"duplicate arc ({u!r}, {v!r})")
            seen.add((u, v))
            vec = np.atleast_1d(np.asarray(vec, dtype=float))
            if vec.shape != (k,):
                raise DanglingEndpoint(
                    f"arc ({u!r}, {v!r}) attribute length {vec.shape} != ({k},)"
                )
            arc_from[a] = index[u]
            arc_to[a] = index[v]
            attrs[a] = vec

    if attribute_names is None:
        attribute_names = tuple(f"attr{i}" for i in range(attrs.shape[1]))
    else:
        attribute_names = tuple(attribute_names)
        if len(attribute_names) != attrs.shape[1]:
            raise DanglingEndpoint("attribute_names length does not match attributes")

    return Network(
        states=states,
        destination=destination,
        arc_from=arc_from,
        arc_to=arc_to,
        attrs=attrs,
        attribute_names=attribute_names,
        positions=dict(positions) if positions else None,
    )


def reachable_from(net: Network, origin: StateId) -> set[StateId]:
    """Forward-reachable state set (origin included) via BFS."""
    start = net.state_index(origin)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for a in net.succ_arcs[i]:
                j = int(net.arc_to[a])
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    return {net.states[i] for i in seen}


def coreachable_to(net: Network, target: StateId) -> set[StateId]:
    """States from which ``target`` is reachable (target included)."""
    start = net.state_index(target)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for i in frontier:
            for a in net.pred_arcs[i]:
                j = int(net.arc_from[a])
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    return {net.states[i] for i in seen}


def enumerate_paths(net: Network, origin: StateId, max_paths: int = 1_000_000):
    """Enumerate origin-to-destination paths by depth-first search.

    Intended as a brute-force oracle on small DAGs; on cyclic networks only
    simple paths are produced.  Yields state-id lists.
    """
    start = net.state_index(origin)
    dest = net.destination_index
    count = 0
    stack: list[tuple[int, list[int]]] = [(start, [start])]
    while stack:
        node, path = stack.pop()
        if node == dest:
            count += 1
            if count > max_paths:
                raise RuntimeError(f"more than {max_paths} paths")
            yield [net.states[i] for i in path]
            continue
        for a in net.succ_arcs[node]:
            j = int(net.arc_to[a])
            if j != dest and j in path:
                continue  # skip cycles
            stack.append((j, path + [j]))


def ensure_connectivity(net: Network, origin: StateId, penalty: float) -> Network:
    """Add artificial high-cost arcs so every state is reachable from origin.

    For each unreachable state an arc origin -> state is added whose first
    attribute equals ``penalty`` and all others are zero.  Idempotent when the
    network is already connected.
    """
    if not penalty > 0:
        raise InvalidPenalty(f"penalty must be > 0, got {penalty}")
    missing = [s for s in net.states if s not in reachable_from(net, origin)]
    if not missing:
        return net
    arcs = [(u, v, vec.copy()) for u, v, vec in net.arcs()]
    k = net.n_attributes
    for s in missing:
        vec = np.zeros(k)
        vec[0] = penalty
        arcs.append((origin, s, vec))
    return build_network(net.states, net.destination, arcs, net.attribute_names, net.positions)


def default_connectivity_penalty(net: Network, beta) -> float:
    """Penalty scale for artificial arcs: 10x the largest arc-cost magnitude
    at the reference coefficients."""
    beta = np.asarray(beta, dtype=float)
    if net.n_arcs == 0:
        return 10.0
    costs = np.abs(net.attrs @ beta)
    return 10.0 * max(float(costs.max()), 1.0)


# --- JSON serialization ---------------------------------------------------
#
# Canonical form: fixed key order, floats rendered with 17 significant digits
# so dump -> load -> dump is byte-identical.


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value {x} not serializable")
    return format(float(x), ".17g")


def _render(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_render(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_render(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj)}")


def canonical_json(obj) -> str:
    """Render nested dict/list data in the package's canonical JSON form."""
    return _render(obj)


def network_to_dict(net: Network) -> dict:
    doc = {
        "states": list(net.states),
        "destination": net.destination,
        "attribute_names": list(net.attribute_names),
        "arcs": [
            {
                "from": net.states[net.arc_from[a]],
                "to": net.states[net.arc_to[a]],
                "attrs": [float(v) for v in net.attrs[a]],
            }
            for a in range(net.n_arcs)
        ],
    }
    if net.positions is not None:
        doc["positions"] = {str(k): [float(v[0]), float(v[1])] for k, v in net.positions.items()}
    return doc


def network_from_dict(doc: dict) -> Network:
    positions = None
    if "positions" in doc and doc["positions"] is not None:
        positions = {k: tuple(v) for k, v in doc["positions"].items()}
    return build_network(
        doc["states"],
        doc["destination"],
        [(a["from"], a["to"], a["attrs"]) for a in doc["arcs"]],
        doc["attribute_names"],
        positions,
    )


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(network_to_dict(net)))
        fh.write("\n")


def load_network(path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))
