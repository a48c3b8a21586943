"""Loaders for the checked-in fixture documents and the online acceptance
instances."""

from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources
from typing import Union

from . import documents
from .model import Category, FractionalAllocation, Instance, IntegralAllocation
from .online import OnlineInstance
from .selection import UtilityProfile


def fixture_names() -> list[str]:
    return sorted(
        entry.name
        for entry in resources.files(__package__).joinpath("fixtures").iterdir()
        if entry.name.endswith(".json")
    )


def load_json(name: str):
    path = resources.files(__package__).joinpath("fixtures").joinpath(name)
    return json.loads(path.read_text(encoding="utf-8"))


def load_instance(name: str) -> Instance:
    return documents.instance_from_doc(load_json(name))


def load_allocation(name: str) -> Union[IntegralAllocation, FractionalAllocation]:
    return documents.allocation_from_doc(load_json(name))


def load_utilities(name: str) -> UtilityProfile:
    return documents.utilities_from_doc(load_json(name))


def four_allocation_instance() -> Instance:
    """Three unit-quota categories over four agents; allocations 1-4 exhibit
    one axiom failure each."""
    return load_instance("fig_axioms_instance.json")


def four_allocation_fixtures() -> dict[int, IntegralAllocation]:
    return {
        i: load_allocation(f"fig_axioms_allocation{i}.json") for i in (1, 2, 3, 4)
    }


def nonconvex_instance() -> Instance:
    return load_instance("fig_nonconvex_instance.json")


def thresholds_instance() -> Instance:
    return load_instance("fig_thresholds_instance.json")


def x3c_instance() -> Instance:
    return load_instance("x3c_instance.json")


def utility_tradeoff_instance() -> Instance:
    return load_instance("fig_upe_instance.json")


def baseline_online_instance(horizon: int) -> OnlineInstance:
    """Single category with quota horizon/2 and three uniform types in
    strictly decreasing priority; hard-priority policies suffer linear
    efficiency loss here."""
    if horizon % 2:
        raise ValueError("horizon must be even")
    third = Fraction(1, 3)
    return OnlineInstance(
        types=("a", "b", "c"),
        probabilities=(third, third, third),
        categories=(Category("c1", horizon // 2, [["a"], ["b"], ["c"]]),),
        horizon=horizon,
    )


def tradeoff_online_instance(horizon: int) -> OnlineInstance:
    """Two categories with quotas horizon/4 over three types; the third type
    is never eligible (the "ineligible" priority level), so eligible demand
    exceeds capacity by a Theta(horizon) margin and the interim-LP policy's
    accept/reject boundary sits strictly inside the middle type."""
    if horizon % 4:
        raise ValueError("horizon must be a multiple of 4")
    quota = horizon // 4
    tiers = [["x"], ["y"]]
    return OnlineInstance(
        types=("x", "y", "z"),
        probabilities=(Fraction(5, 16), Fraction(1, 4), Fraction(7, 16)),
        categories=(Category("c1", quota, tiers), Category("c2", quota, tiers)),
        horizon=horizon,
    )
