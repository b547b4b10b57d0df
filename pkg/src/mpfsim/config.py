"""Configuration documents: defaults, fail-closed parsing, overrides.

A configuration travels as a plain nested dict (the "document") whose keys
carry their units (``_s``, ``_m``, ``_mps``).  Documents merge fail-closed:
any key not in the schema is rejected with its full dotted path, so typos
cannot silently fall back to defaults.  The same machinery validates sweep
axis paths and ``--set`` overrides.
"""

from __future__ import annotations

import copy
from typing import Any

import yaml

from .core import ConfigError, Corridor, VehicleClass, VehicleParams
from .comms import ChannelConfig
from .engine import InitialVehicle, ScenarioConfig
from .metrics import TtcConfig
from .models import ControllerConfig, IdmParams, Topology

SCHEMA_VERSION = 1

# Leaf kinds: "int", "float", "bool", "topology", "vehlist".
_SCENARIO_SCHEMA: dict[str, Any] = {
    "schema_version": "int",
    "seed": "int",
    "dt_s": "float",
    "duration_s": "float",
    "warmup_s": "float",
    "demand_veh_h": "float",
    "mpr": "float",
    "corridor": {"length_m": "float", "n_edges": "int"},
    "channel": {
        "per": "float",
        "range_m": "float",
        "beacon_hz": "float",
        "staleness_s": "float",
    },
    "controller": {
        "alpha": "float",
        "beta": "float",
        "headway_s": "float",
        "standstill_m": "float",
        "topology": "topology",
        "max_neighbours": "int",
        "sensor_range_m": "float",
        "mix_sensor_rank1": "bool",
        "catchup_factor": "float",
    },
    "idm": {
        "accel_mps2": "float",
        "decel_mps2": "float",
        "free_speed_mps": "float",
        "min_gap_m": "float",
        "headway_s": "float",
    },
    "vehicle": {
        "length_m": "float",
        "max_accel_mps2": "float",
        "max_decel_mps2": "float",
        "free_speed_mps": "float",
    },
    "ttc": {"threshold_cav_s": "float", "threshold_hdv_s": "float", "debounce_s": "float"},
    "initial_vehicles": "vehlist",
}

_SWEEP_SCHEMA: dict[str, Any] = {
    "schema_version": "int",
    "seed": "int",
    "replications": "int",
    "base": _SCENARIO_SCHEMA,
    "axes": "axes",
}


def default_document() -> dict:
    """The full default scenario as a document (single source: the dataclasses)."""
    sc = ScenarioConfig()
    ch = sc.channel
    ctrl = sc.controller
    idm = sc.idm
    veh = sc.vehicle
    ttc = sc.ttc
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": sc.seed,
        "dt_s": sc.dt_s,
        "duration_s": sc.duration_s,
        "warmup_s": sc.warmup_s,
        "demand_veh_h": sc.demand_veh_h,
        "mpr": sc.mpr,
        "corridor": {"length_m": sc.corridor.length, "n_edges": sc.corridor.n_edges},
        "channel": {
            "per": ch.per,
            "range_m": ch.range_m,
            "beacon_hz": ch.beacon_hz,
            "staleness_s": ctrl.staleness_s,
        },
        "controller": {
            "alpha": ctrl.alpha,
            "beta": ctrl.beta,
            "headway_s": ctrl.headway_s,
            "standstill_m": ctrl.standstill_m,
            "topology": ctrl.topology.value,
            "max_neighbours": ctrl.max_neighbours,
            "sensor_range_m": ctrl.sensor_range_m,
            "mix_sensor_rank1": ctrl.mix_sensor_rank1,
            "catchup_factor": ctrl.catchup_factor,
        },
        "idm": {
            "accel_mps2": idm.a,
            "decel_mps2": idm.b,
            "free_speed_mps": idm.v_f,
            "min_gap_m": idm.s0,
            "headway_s": idm.T,
        },
        "vehicle": {
            "length_m": veh.length,
            "max_accel_mps2": veh.a_max,
            "max_decel_mps2": veh.b_max,
            "free_speed_mps": veh.v_f,
        },
        "ttc": {
            "threshold_cav_s": ttc.threshold_cav_s,
            "threshold_hdv_s": ttc.threshold_hdv_s,
            "debounce_s": ttc.debounce_s,
        },
        "initial_vehicles": [],
    }


def _check_leaf(kind: str, value: Any, path: str) -> Any:
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind == "topology":
        if value not in ("PF", "MPF"):
            raise ConfigError(path, f"expected PF or MPF, got {value!r}")
        return value
    if kind == "vehlist":
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list of vehicle entries")
        out = []
        for i, entry in enumerate(value):
            if not isinstance(entry, dict):
                raise ConfigError(f"{path}[{i}]", "expected a mapping")
            unknown = set(entry) - {"class", "x_m", "v_mps"}
            if unknown:
                raise ConfigError(f"{path}[{i}].{sorted(unknown)[0]}", "unknown key")
            if entry.get("class") not in ("HDV", "CAV"):
                raise ConfigError(f"{path}[{i}].class", "expected HDV or CAV")
            out.append(
                {
                    "class": entry["class"],
                    "x_m": _check_leaf("float", entry.get("x_m"), f"{path}[{i}].x_m"),
                    "v_mps": _check_leaf("float", entry.get("v_mps"), f"{path}[{i}].v_mps"),
                }
            )
        return out
    raise AssertionError(f"unhandled schema kind {kind}")


def merge_document(base: dict, override: dict, schema: dict | None = None, prefix: str = "") -> dict:
    """Deep-merge ``override`` into a copy of ``base``, fail-closed."""
    if schema is None:
        schema = _SCENARIO_SCHEMA
    merged = copy.deepcopy(base)
    _merge_in_place(merged, override, schema, prefix)
    return merged


def _merge_in_place(target: dict, override: dict, schema: dict, prefix: str) -> None:
    if not isinstance(override, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    for key, value in override.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in schema:
            raise ConfigError(path, "unknown key")
        spec = schema[key]
        if isinstance(spec, dict):
            node = target.setdefault(key, {})
            _merge_in_place(node, value, spec, path)
        else:
            target[key] = _check_leaf(spec, value, path)


def schema_leaf(dotted: str, schema: dict | None = None) -> str:
    """Return the leaf kind at a dotted path, or raise with that path."""
    node: Any = schema if schema is not None else _SCENARIO_SCHEMA
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(dotted, "unknown key")
        node = node[part]
    if isinstance(node, dict):
        raise ConfigError(dotted, "not a settable value (it is a section)")
    return node


def set_value(doc: dict, dotted: str, value: Any) -> None:
    """Set one leaf in place, after schema validation of path and type."""
    kind = schema_leaf(dotted)
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = _check_leaf(kind, value, dotted)


def apply_set_option(doc: dict, option: str) -> None:
    """Apply one ``KEY=VALUE`` override; the value is parsed as YAML."""
    key, sep, raw = option.partition("=")
    if not sep or not key:
        raise ConfigError(option, "expected KEY=VALUE")
    try:
        value = yaml.safe_load(raw) if raw != "" else None
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"unparseable value: {exc}") from exc
    set_value(doc, key, value)


def load_yaml(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"invalid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(path, "top level must be a mapping")
    return doc


def _require_schema_version(doc: dict, path: str) -> None:
    if "schema_version" not in doc:
        raise ConfigError("schema_version", "required (this file format is versioned)")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {doc['schema_version']!r}")


def effective_document(
    file_doc: dict | None,
    sets: list[str] | None = None,
    seed: int | None = None,
) -> dict:
    """Defaults, then file overrides, then --set overrides, then --seed."""
    doc = default_document()
    if file_doc is not None:
        _require_schema_version(file_doc, "config")
        doc = merge_document(doc, file_doc)
    for option in sets or []:
        apply_set_option(doc, option)
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def document_to_scenario(doc: dict) -> ScenarioConfig:
    """Build the validated runtime configuration from a document."""

    def section(name: str) -> dict:
        return doc.get(name, {})

    try:
        corridor = Corridor.uniform(section("corridor")["length_m"], section("corridor")["n_edges"])
    except ConfigError as exc:
        raise exc.with_prefix("corridor") from exc
    try:
        channel = ChannelConfig(
            per=section("channel")["per"],
            range_m=section("channel")["range_m"],
            beacon_hz=section("channel")["beacon_hz"],
        )
    except ConfigError as exc:
        raise exc.with_prefix("channel") from exc
    try:
        controller = ControllerConfig(
            alpha=section("controller")["alpha"],
            beta=section("controller")["beta"],
            headway_s=section("controller")["headway_s"],
            standstill_m=section("controller")["standstill_m"],
            topology=Topology(section("controller")["topology"]),
            max_neighbours=section("controller")["max_neighbours"],
            staleness_s=section("channel")["staleness_s"],
            sensor_range_m=section("controller")["sensor_range_m"],
            mix_sensor_rank1=section("controller")["mix_sensor_rank1"],
            catchup_factor=section("controller")["catchup_factor"],
        )
    except ConfigError as exc:
        if exc.path == "staleness_s":
            # That value lives under the channel section in the file format.
            raise ConfigError("channel.staleness_s", exc.message) from exc
        raise exc.with_prefix("controller") from exc
    try:
        idm = IdmParams(
            a=section("idm")["accel_mps2"],
            b=section("idm")["decel_mps2"],
            v_f=section("idm")["free_speed_mps"],
            s0=section("idm")["min_gap_m"],
            T=section("idm")["headway_s"],
        )
    except ConfigError as exc:
        raise exc.with_prefix("idm") from exc
    try:
        vehicle = VehicleParams(
            a_max=section("vehicle")["max_accel_mps2"],
            b_max=section("vehicle")["max_decel_mps2"],
            v_f=section("vehicle")["free_speed_mps"],
            length=section("vehicle")["length_m"],
        )
    except ConfigError as exc:
        raise exc.with_prefix("vehicle") from exc
    try:
        ttc = TtcConfig(
            threshold_cav_s=section("ttc")["threshold_cav_s"],
            threshold_hdv_s=section("ttc")["threshold_hdv_s"],
            debounce_s=section("ttc")["debounce_s"],
        )
    except ConfigError as exc:
        raise exc.with_prefix("ttc") from exc
    initial = tuple(
        InitialVehicle(VehicleClass[entry["class"]], entry["x_m"], entry["v_mps"])
        for entry in doc.get("initial_vehicles", [])
    )
    return ScenarioConfig(
        corridor=corridor,
        dt_s=doc["dt_s"],
        duration_s=doc["duration_s"],
        warmup_s=doc["warmup_s"],
        demand_veh_h=doc["demand_veh_h"],
        mpr=doc["mpr"],
        seed=doc["seed"],
        channel=channel,
        controller=controller,
        idm=idm,
        vehicle=vehicle,
        ttc=ttc,
        initial_vehicles=initial,
    )


def load_sweep_document(path: str) -> dict:
    doc = load_yaml(path)
    _require_schema_version(doc, path)
    known = set(_SWEEP_SCHEMA)
    for key in doc:
        if key not in known:
            raise ConfigError(str(key), "unknown key")
    if "base" in doc:
        merge_document(default_document(), doc["base"])  # validation only
    axes = doc.get("axes", {})
    if not isinstance(axes, dict):
        raise ConfigError("axes", "expected a mapping of config paths to value lists")
    for key, values in axes.items():
        kind = schema_leaf(str(key))
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axes.{key}", "expected a non-empty list")
        for i, value in enumerate(values):
            _check_leaf(kind, value, f"axes.{key}[{i}]")
    if "replications" in doc:
        reps = doc["replications"]
        if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
            raise ConfigError("replications", "must be a positive integer")
    if "seed" in doc:
        _check_leaf("int", doc["seed"], "seed")
    return doc


def dump_yaml(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
