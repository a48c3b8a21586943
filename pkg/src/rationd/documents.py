"""JSON document formats and deterministic serialization.

Rationals serialize as canonical "p/q" strings (reduced, positive
denominator; plain "p" for integers) so values survive round trips without
ever touching floating point.  ``null`` encodes the outside option.  Agents
and categories keep their input order, and serialization is byte-identical
across runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Union

from .errors import MalformedDocument
from .model import (
    Category,
    FractionalAllocation,
    Instance,
    IntegralAllocation,
    Thresholds,
    ValidityReport,
)
from .online import OnlineInstance, SimulationSummary, SimulationTrace
from .selection import AgentQueryResult, UtilityProfile

_RATIONAL = re.compile(r"^-?\d+(/[1-9][0-9]*)?$")


def parse_rational(value: Union[str, int]) -> Fraction:
    if isinstance(value, bool):
        raise MalformedDocument(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str) and _RATIONAL.match(value):
        return Fraction(value)
    raise MalformedDocument(f'not a canonical rational "p/q" string: {value!r}')


def format_rational(value: Fraction) -> str:
    return str(Fraction(value))


def dumps(document: Any) -> str:
    """Canonical JSON text: two-space indent, input-order keys, newline."""
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def _require(obj: dict, key: str, types) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedDocument(f"missing field {key!r}")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise MalformedDocument(f"field {key!r} has the wrong type")
    return value


# -- instances --------------------------------------------------------------


def instance_from_doc(obj: dict) -> Instance:
    agents = _require(obj, "agents", list)
    categories_doc = _require(obj, "categories", list)
    categories = []
    for cd in categories_doc:
        name = _require(cd, "name", str)
        quota = _require(cd, "quota", int)
        tiers = _require(cd, "tiers", list)
        for tier in tiers:
            if not isinstance(tier, list) or not all(isinstance(a, str) for a in tier):
                raise MalformedDocument(
                    f"category {name!r}: tiers must be lists of agent names"
                )
        categories.append(Category(name, quota, tiers))
    if not all(isinstance(a, str) for a in agents):
        raise MalformedDocument("agents must be strings")
    return Instance(agents, categories)


def instance_to_doc(instance: Instance) -> dict:
    return {
        "agents": list(instance.agents),
        "categories": [
            {"name": c.name, "quota": c.quota, "tiers": [list(t) for t in c.tiers]}
            for c in instance.categories
        ],
    }


# -- allocations ------------------------------------------------------------


def allocation_from_doc(obj: dict) -> Union[IntegralAllocation, FractionalAllocation]:
    if isinstance(obj, dict) and "assignment" in obj:
        assignment = _require(obj, "assignment", dict)
        out = {}
        for agent, category in assignment.items():
            if category is not None and not isinstance(category, str):
                raise MalformedDocument("assignment values must be category names or null")
            out[agent] = category
        return IntegralAllocation(out)
    if isinstance(obj, dict) and "entries" in obj:
        entries = _require(obj, "entries", list)
        triples = []
        for e in entries:
            triples.append(
                (
                    _require(e, "agent", str),
                    _require(e, "category", str),
                    parse_rational(_require(e, "value", (str, int))),
                )
            )
        return FractionalAllocation(triples)
    raise MalformedDocument('allocation document needs "assignment" or "entries"')


def allocation_to_doc(
    allocation: Union[IntegralAllocation, FractionalAllocation],
    instance: Optional[Instance] = None,
) -> dict:
    if isinstance(allocation, IntegralAllocation):
        assignment = {}
        agents = instance.agents if instance is not None else [a for a, _ in allocation.assignment]
        for agent in agents:
            assignment[agent] = allocation.category_of(agent)
        return {"assignment": assignment}
    return {
        "entries": [
            {"agent": a, "category": c, "value": format_rational(v)}
            for a, c, v in allocation.entries
        ]
    }


def utilities_from_doc(obj: dict) -> UtilityProfile:
    entries = _require(obj, "entries", list)
    triples = []
    for e in entries:
        triples.append(
            (
                _require(e, "agent", str),
                _require(e, "category", str),
                parse_rational(_require(e, "value", (str, int))),
            )
        )
    return UtilityProfile(triples)


def utilities_to_doc(utilities: UtilityProfile) -> dict:
    return {
        "entries": [
            {"agent": a, "category": c, "value": format_rational(v)}
            for a, c, v in utilities.entries
        ]
    }


# -- reports ----------------------------------------------------------------


def _witness_to_doc(witness: Optional[dict]) -> Optional[dict]:
    if witness is None:
        return None
    out = {}
    for key, value in witness.items():
        if isinstance(value, Fraction):
            out[key] = format_rational(value)
        elif isinstance(value, list):
            out[key] = [list(item) if isinstance(item, tuple) else item for item in value]
        else:
            out[key] = value
    return out


def validity_report_to_doc(report: ValidityReport) -> dict:
    doc = {}
    for axiom in ("qr", "er", "pr", "pe", "cs"):
        verdict = getattr(report, axiom)
        entry = {"status": verdict.status}
        if verdict.witness is not None:
            entry["witness"] = _witness_to_doc(verdict.witness)
        doc[axiom] = entry
    doc["valid"] = report.is_valid
    return doc


def thresholds_to_doc(thresholds: Thresholds) -> dict:
    return {
        "categories": list(thresholds.categories),
        "inner": list(thresholds.inner),
        "outer": list(thresholds.outer),
    }


def agent_query_to_doc(result: AgentQueryResult, instance: Instance) -> dict:
    doc = {"verdict": result.verdict}
    if result.witness is not None:
        doc["witness"] = allocation_to_doc(result.witness, instance)
    return doc


def combination_to_doc(combination, instance: Instance) -> dict:
    return {
        "components": [
            {
                "weight": format_rational(w),
                "allocation": allocation_to_doc(alloc, instance),
            }
            for w, alloc in combination.components
        ]
    }


def enumeration_to_doc(result, instance: Instance) -> dict:
    def allocs(items):
        return [allocation_to_doc(a, instance) for a in items]

    return {
        "v_star": result.v_star,
        "qr_er_pr": allocs(result.qr_er_pr),
        "valid": allocs(result.valid),
        "valid_cs": allocs(result.valid_cs),
    }


# -- simulation -------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    instance: OnlineInstance
    policy: str
    trials: int
    seed: int


def simulation_config_from_doc(obj: dict) -> SimulationConfig:
    types = _require(obj, "types", list)
    probabilities = [parse_rational(p) for p in _require(obj, "probabilities", list)]
    categories_doc = _require(obj, "categories", list)
    categories = []
    for cd in categories_doc:
        categories.append(
            Category(
                _require(cd, "name", str),
                _require(cd, "quota", int),
                _require(cd, "tiers", list),
            )
        )
    instance = OnlineInstance(
        types=types,
        probabilities=probabilities,
        categories=categories,
        horizon=_require(obj, "horizon", int),
    )
    policy = _require(obj, "policy", str)
    return SimulationConfig(
        instance=instance,
        policy=policy,
        trials=_require(obj, "trials", int),
        seed=_require(obj, "seed", int),
    )


def simulation_config_to_doc(config: SimulationConfig) -> dict:
    inst = config.instance
    return {
        "types": list(inst.types),
        "probabilities": [format_rational(p) for p in inst.probabilities],
        "categories": [
            {"name": c.name, "quota": c.quota, "tiers": [list(t) for t in c.tiers]}
            for c in inst.categories
        ],
        "horizon": inst.horizon,
        "policy": config.policy,
        "trials": config.trials,
        "seed": config.seed,
    }


def trace_to_doc(trace: SimulationTrace, include_rounds: bool = False) -> dict:
    doc = {
        "efficiency_loss": trace.efficiency_loss,
        "priority_loss": trace.priority_loss,
        "allocations": sum(1 for d in trace.decisions if d is not None),
    }
    if include_rounds:
        doc["arrivals"] = list(trace.arrivals)
        doc["decisions"] = list(trace.decisions)
        doc["lp_values"] = [
            None if d.lp_value is None else format_rational(d.lp_value)
            for d in trace.diagnostics
        ]
    return doc


def summary_to_doc(summary: SimulationSummary) -> dict:
    def metric(m) -> dict:
        return {
            "mean": format_rational(m.mean),
            "max": m.maximum,
            "stderr": m.stderr,
        }

    return {
        "trials": summary.trials,
        "efficiency_loss": metric(summary.efficiency),
        "priority_loss": metric(summary.priority),
        "combined_loss": metric(summary.combined),
    }


# -- scarf ------------------------------------------------------------------


def f_table_from_doc(obj: Any) -> list[list[Fraction]]:
    if not isinstance(obj, list):
        raise MalformedDocument("the weight table must be a JSON array of rows")
    return [[parse_rational(v) for v in row] for row in obj]


def scarf_report_to_doc(report) -> dict:
    def scan(rep) -> dict:
        return {
            "best_value": format_rational(rep.best_value),
            "maximizer_count": len(rep.maximizers),
            "unstable_maximizer_count": len(rep.unstable_maximizers),
            "all_maximizers_stable": rep.all_maximizers_stable,
            "requirement": rep.requirement,
            "requirement_holds": rep.requirement_holds,
        }

    return {
        "f25_minus_f24_sign": report.f25_minus_f24_sign,
        "instances": [scan(rep) for rep in report.instances],
        "requirements_mutually_exclusive": report.requirements_mutually_exclusive,
        "some_instance_has_unstable_maximizer": report.some_instance_has_unstable_maximizer,
    }
