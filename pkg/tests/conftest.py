"""Shared fixtures: small hand-built networks with known closed forms."""

import math

import numpy as np
import pytest

from rlogit.network import build_network


@pytest.fixture
def chain_net():
    """Deterministic chain o -> a -> b -> d, single cost attribute."""
    return build_network(
        ["o", "a", "b", "d"],
        "d",
        [("o", "a", [1.0]), ("a", "b", [2.0]), ("b", "d", [3.0])],
        ["cost"],
    )


@pytest.fixture
def two_route_net():
    """Origin with two parallel two-hop routes of equal cost."""
    return build_network(
        ["o", "a", "b", "d"],
        "d",
        [
            ("o", "a", [1.0]),
            ("o", "b", [1.0]),
            ("a", "d", [1.0]),
            ("b", "d", [1.0]),
        ],
        ["cost"],
    )


@pytest.fixture
def cycle_net():
    """Two-loop cyclic network whose exp-space value system has the closed
    form z(s0) = 0.8 / 0.68 at beta = 1.

    The four cycle arcs have exp-utility 0.4 and the two exit arcs have
    utility 0, so the loop mass is S = 0.32 < 1.
    """
    x = math.log(0.4)
    return build_network(
        ["s0", "s1", "s2", "d"],
        "d",
        [
            ("s0", "s1", [x]),
            ("s0", "s2", [x]),
            ("s1", "s0", [x]),
            ("s2", "s0", [x]),
            ("s1", "d", [0.0]),
            ("s2", "d", [0.0]),
        ],
        ["u"],
    )


def make_infeasible_net(t: float):
    """Two-loop network with opposed utilities +t / -t on the loops.

    Loop mass S = e^{2t} + e^{-2t} >= 2 for every t, so the exp-space value
    system never has a positive solution.
    """
    return build_network(
        ["s0", "s1", "s2", "d"],
        "d",
        [
            ("s0", "s1", [t]),
            ("s1", "s0", [t]),
            ("s0", "s2", [-t]),
            ("s2", "s0", [-t]),
            ("s1", "d", [0.0]),
            ("s2", "d", [0.0]),
        ],
        ["u"],
    )


@pytest.fixture
def partial_net():
    """Network where s2 is not reachable from o (connectivity-repair cases)."""
    return build_network(
        ["o", "s1", "s2", "d"],
        "d",
        [("o", "s1", [1.0]), ("s1", "d", [1.0]), ("s2", "d", [1.0])],
        ["cost"],
    )
