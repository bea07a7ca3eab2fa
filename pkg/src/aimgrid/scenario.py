"""Scenario files: schema, validation, normalization and fingerprints.

A scenario is a YAML mapping::

    name: grid_3x3
    kind: grid              # grid (microsimulation) or case_study (static rounds)
    testbed: D
    seed: 0
    output: null            # output directory, null means ./out/<name>
    topology: {...}
    simulation: {...}
    scheduler: {...}
    signals: {...}
    fuel: {...}
    driver: {...}
    vehicles: [...]         # case_study only

Every section is optional; omitted keys take the defaults listed by
:func:`schema`. Unknown keys anywhere are errors, and validation reports
every problem it finds rather than stopping at the first.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional

import yaml

from .casestudy import CaseVehicle
from .metrics import FuelModelParams
from .milp import BLAND, DANTZIG
from .scheduler import MakespanMode, SchedulerParams
from .sim.config import TESTBEDS, DriverSettings, SignalSettings, SimConfig
from .topology import MOVEMENT_PHASE, GridTopology

KINDS = ("grid", "case_study")
LP_RULES = {"bland": BLAND, "dantzig": DANTZIG}

# speeds and vehicle size are set once, in the simulation section, and shared with the scheduler
SHARED = ("v_max", "v_avg", "a_max", "vehicle_length")
SIM_KEYS = ("duration", "dt", "control_period", "v_max", "v_avg", "a_max", "vehicle_length",
            "injection_rates", "min_spawn_headway", "iterations_per_round", "sample_period",
            "queue_speed", "queue_range", "transcript", "stop_low", "stop_high")

TOPOLOGY_DEFAULTS = {
    "kind": "grid",           # grid or line
    "rows": 3,                # grid only
    "cols": 3,                # grid only
    "link_length": 400.0,     # m, grid only
    "count": 2,               # line only: intersections west to east
    "spacing": 500.0,         # m, line only
    "approach": 1500.0,       # m, line only: boundary link length
    "width": 10.0,            # m, intersection box
}
TOPOLOGY_TYPES = {"kind": str, "rows": int, "cols": int, "link_length": float, "count": int,
                  "spacing": float, "approach": float, "width": float}

VEHICLE_KEYS = {"id": int, "intersection": int, "movement": str, "distance": float, "velocity": float}


class ScenarioError(ValueError):
    """Scenario failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: List[str]):
        super().__init__("invalid scenario:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


def _field_defaults(cls, skip=()) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def _plain(v):
    if isinstance(v, MakespanMode):
        return v.value
    return v


def schema() -> Dict[str, Dict[str, Any]]:
    """Every section with its keys and default values."""
    sched = {k: _plain(v) for k, v in _field_defaults(SchedulerParams, SHARED).items()}
    sched["lp_rule"] = "dantzig"
    sim = _field_defaults(SimConfig)
    return {
        "top": {"name": "scenario", "kind": "grid", "testbed": "D", "seed": 0, "output": None,
                "vehicles": []},
        "topology": dict(TOPOLOGY_DEFAULTS),
        "simulation": {k: sim[k] for k in SIM_KEYS},
        "scheduler": sched,
        "signals": _field_defaults(SignalSettings),
        "fuel": _field_defaults(FuelModelParams),
        "driver": _field_defaults(DriverSettings),
    }


SECTIONS = ("topology", "simulation", "scheduler", "signals", "fuel", "driver")
# keys that may be null, with the type they take otherwise
NULLABLE = {("scheduler", "big_m"): 0.0, ("scheduler", "max_nodes"): 0, ("top", "output"): ""}


def _check_value(where: str, value, default, errors: List[str], like=None):
    """Coerce ``value`` to the type of ``default``; record an error on mismatch.

    ``like`` is an example value for keys whose default is null.
    """
    if value is None:
        if like is not None:
            return None
        errors.append(f"{where}: must not be null")
        return default
    if default is None:
        n = len(errors)
        out = _check_value(where, value, like, errors)
        return None if len(errors) > n else out
    if isinstance(default, bool):
        if not isinstance(value, bool):
            errors.append(f"{where}: expected true/false, got {value!r}")
            return default
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{where}: expected a number, got {value!r}")
            return default
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{where}: expected an integer, got {value!r}")
            return default
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            errors.append(f"{where}: expected a string, got {value!r}")
            return default
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                  for x in value):
            errors.append(f"{where}: expected a list of numbers, got {value!r}")
            return default
        return [float(x) for x in value]
    return value


@dataclass
class Scenario:
    """A validated scenario with every default filled in."""

    name: str
    kind: str
    testbed: str
    seed: int
    output: Optional[str]
    topology: Dict[str, Any]
    simulation: Dict[str, Any]
    scheduler: Dict[str, Any]
    signals: Dict[str, Any]
    fuel: Dict[str, Any]
    driver: Dict[str, Any]
    vehicles: List[Dict[str, Any]] = field(default_factory=list)

    # --- serialization -------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name, "kind": self.kind, "testbed": self.testbed, "seed": self.seed,
            "output": self.output, "topology": dict(self.topology), "simulation": dict(self.simulation),
            "scheduler": dict(self.scheduler), "signals": dict(self.signals), "fuel": dict(self.fuel),
            "driver": dict(self.driver), "vehicles": [dict(v) for v in self.vehicles],
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def fingerprint(self) -> str:
        """Hash of everything that shapes the traffic, i.e. all but testbed and output."""
        doc = self.to_dict()
        for k in ("testbed", "output"):
            doc.pop(k)
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, testbed=None, seed=None, duration=None, output=None) -> "Scenario":
        doc = self.to_dict()
        if testbed is not None:
            doc["testbed"] = testbed
        if seed is not None:
            doc["seed"] = seed
        if duration is not None:
            doc["simulation"]["duration"] = duration
        if output is not None:
            doc["output"] = output
        return parse_scenario(doc)

    # --- builders ------------------------------------------------------
    def build_topology(self) -> GridTopology:
        from .scheduler import IntersectionGeometry
        t = self.topology
        s = self.simulation
        geom = IntersectionGeometry.from_speeds(s["v_avg"], s["a_max"], t["width"])
        if t["kind"] == "grid":
            return GridTopology.grid(t["rows"], t["cols"], t["link_length"], geom)
        return GridTopology.line(t["count"], t["spacing"], t["approach"], geom)

    def scheduler_params(self) -> SchedulerParams:
        kw = dict(self.scheduler)
        kw["lp_rule"] = LP_RULES[kw["lp_rule"]]
        for k in SHARED:
            kw[k] = self.simulation[k]
        return SchedulerParams(**kw)

    def sim_config(self) -> SimConfig:
        kw = dict(self.simulation)
        return SimConfig(self.build_topology(), testbed=self.testbed, seed=self.seed,
                         scheduler=self.scheduler_params(), signals=SignalSettings(**self.signals),
                         fuel=FuelModelParams(**self.fuel), driver=DriverSettings(**self.driver), **kw)

    def case_vehicles(self) -> List[CaseVehicle]:
        return [CaseVehicle(v["id"], v["intersection"], v["movement"], v["distance"], v.get("velocity"))
                for v in self.vehicles]

    def output_dir(self) -> str:
        return self.output or os.path.join("out", self.name)


def parse_scenario(doc: Any) -> Scenario:
    """Validate a raw mapping and fill defaults; raise ScenarioError listing all problems."""
    errors: List[str] = []
    sch = schema()
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario must be a mapping"])
    doc = copy.deepcopy(doc)
    top = sch["top"]
    for key in doc:
        if key not in top and key not in SECTIONS:
            errors.append(f"unknown key {key!r}")
    vals = {}
    for key, default in top.items():
        if key == "vehicles":
            continue
        vals[key] = _check_value(key, doc.get(key, default), default, errors, NULLABLE.get(("top", key)))
    if vals["kind"] not in KINDS:
        errors.append(f"kind: must be one of {list(KINDS)}, got {vals['kind']!r}")
    if vals["testbed"] not in TESTBEDS:
        errors.append(f"testbed: must be one of {list(TESTBEDS)}, got {vals['testbed']!r}")
    if vals["seed"] < 0:
        errors.append("seed: must be nonnegative")

    sections = {}
    for sec in SECTIONS:
        raw = doc.get(sec) or {}
        if not isinstance(raw, dict):
            errors.append(f"{sec}: must be a mapping")
            raw = {}
        defaults = sch[sec]
        out = {}
        for key in raw:
            if key not in defaults:
                hint = " (set it in the simulation section)" if sec == "scheduler" and key in SHARED else ""
                errors.append(f"{sec}.{key}: unknown key{hint}")
        for key, default in defaults.items():
            if sec == "topology":
                v = raw.get(key, default)
                want = TOPOLOGY_TYPES[key]
                if want is float and isinstance(v, int) and not isinstance(v, bool):
                    v = float(v)
                if not isinstance(v, want) or isinstance(v, bool):
                    errors.append(f"topology.{key}: expected {want.__name__}, got {v!r}")
                    v = default
                out[key] = v
            else:
                out[key] = _check_value(f"{sec}.{key}", raw.get(key, default), default, errors,
                                        NULLABLE.get((sec, key)))
        sections[sec] = out

    vehicles = []
    raw_veh = doc.get("vehicles", []) or []
    if not isinstance(raw_veh, list):
        errors.append("vehicles: must be a list")
        raw_veh = []
    for n, v in enumerate(raw_veh):
        where = f"vehicles[{n}]"
        if not isinstance(v, dict):
            errors.append(f"{where}: must be a mapping")
            continue
        for key in v:
            if key not in VEHICLE_KEYS:
                errors.append(f"{where}.{key}: unknown key")
        rec = {}
        for key, typ in VEHICLE_KEYS.items():
            if key not in v:
                if key != "velocity":
                    errors.append(f"{where}.{key}: required")
                continue
            val = v[key]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if not isinstance(val, typ) or isinstance(val, bool):
                errors.append(f"{where}.{key}: expected {typ.__name__}, got {val!r}")
                continue
            rec[key] = val
        if "movement" in rec and rec["movement"] not in MOVEMENT_PHASE:
            errors.append(f"{where}.movement: must be one of {sorted(MOVEMENT_PHASE)}")
        vehicles.append(rec)

    errors += _semantic_checks(vals, sections, vehicles, build=not errors)
    if errors:
        raise ScenarioError(errors)
    return Scenario(vals["name"], vals["kind"], vals["testbed"], vals["seed"], vals["output"],
                    sections["topology"], sections["simulation"], sections["scheduler"],
                    sections["signals"], sections["fuel"], sections["driver"], vehicles)


def _semantic_checks(vals, sec, vehicles, build=True) -> List[str]:
    errors = []
    t = sec["topology"]
    if t["kind"] not in ("grid", "line"):
        errors.append(f"topology.kind: must be grid or line, got {t['kind']!r}")
    if t["kind"] == "grid" and (t["rows"] < 1 or t["cols"] < 1):
        errors.append("topology: rows and cols must be at least 1")
    if t["kind"] == "line" and t["count"] < 1:
        errors.append("topology.count: must be at least 1")
    for key in ("link_length", "spacing", "approach", "width"):
        if t[key] <= 0:
            errors.append(f"topology.{key}: must be positive")
    if sec["scheduler"]["lp_rule"] not in LP_RULES:
        errors.append(f"scheduler.lp_rule: must be one of {sorted(LP_RULES)}")
    try:
        MakespanMode(sec["scheduler"]["makespan_mode"])
    except ValueError:
        errors.append(f"scheduler.makespan_mode: must be one of {[m.value for m in MakespanMode]}")
    if vals["kind"] == "case_study":
        if not vehicles:
            errors.append("vehicles: a case_study needs at least one vehicle")
        ids = [v.get("id") for v in vehicles]
        if len(set(ids)) != len(ids):
            errors.append("vehicles: duplicate ids")
        if vals["testbed"] in ("A", "B"):
            errors.append("testbed: a case_study schedules with the MILP nodes; use C or D")
    elif vehicles:
        errors.append("vehicles: only allowed when kind is case_study")
    if errors or not build:
        return errors
    # the remaining checks need buildable objects
    probe = Scenario(vals["name"], vals["kind"], vals["testbed"], vals["seed"], vals["output"],
                     t, sec["simulation"], sec["scheduler"], sec["signals"], sec["fuel"], sec["driver"],
                     vehicles)
    builders = (("topology", probe.build_topology), ("scheduler", probe.scheduler_params),
                ("signals", lambda: SignalSettings(**sec["signals"])),
                ("fuel", lambda: FuelModelParams(**sec["fuel"])),
                ("driver", lambda: DriverSettings(**sec["driver"])))
    for name, build in builders:
        try:
            build()
        except (ValueError, TypeError) as exc:
            errors.append(f"{name}: {exc}")
    if not errors and vals["kind"] == "grid":
        try:
            probe.sim_config()
        except (ValueError, TypeError) as exc:
            errors.append(f"simulation: {exc}")
    if not errors and vals["kind"] == "case_study":
        topo = probe.build_topology()
        for n, v in enumerate(vehicles):
            if v["intersection"] not in topo.intersections:
                errors.append(f"vehicles[{n}].intersection: no intersection {v['intersection']}")
            if v["distance"] < 0:
                errors.append(f"vehicles[{n}].distance: must be nonnegative")
    return errors


BUNDLED = ("case_study_two_intersections", "grid_3x3")


def bundled_path(name: str):
    return resources.files("aimgrid").joinpath("scenarios", f"{name}.yaml")


def load_scenario(source: str) -> Scenario:
    """Load a scenario from a YAML path or by bundled name."""
    if source in BUNDLED and not os.path.exists(source):
        text = bundled_path(source).read_text()
    else:
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioError([f"cannot read {source}: {exc.strerror}"]) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"YAML syntax error: {exc}"]) from None
    return parse_scenario(doc)


def dump_schema() -> str:
    """The schema with its defaults, as YAML."""
    return yaml.safe_dump(schema(), sort_keys=False, default_flow_style=None)
