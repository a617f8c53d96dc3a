"""Readers and canonical writers for the scenario file family.

Only a small, documented subset of each schema is understood:

net file      <net> with <junction id x y [tls]>, <edge id from to length
              speed>, <connection from to [tls linkIndex]>, and <tlLogic id
              [offset]> holding <phase duration state> children.
route file    <routes> with <vType> (carFollowModel, accel, decel, tau,
              length, minGap, maxSpeed, delta) and <vehicle id type depart>
              holding one <route edges="...">.
poly file     <additional> with <poly type shape>; only type "building"
              survives, everything else is skipped.
config file   <configuration> naming the inputs plus step length, end time
              and seed.

Unknown elements are skipped with a RuntimeWarning so files from richer
tools degrade loudly rather than silently. Coordinates are planar meters.

Writers emit one canonical form (sorted ids, fixed attribute order), so
write -> parse -> write is byte-stable; tests rely on that fixpoint.
"""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .network import Connection, Edge, Junction, RoadNetwork
from .traffic import (
    OWNER_TRAFFIC,
    SIGNAL_CHARS,
    DemandEntry,
    TrafficLightProgram,
    VehicleType,
)

Ring = tuple[tuple[float, float], ...]


class ScenarioError(Exception):
    pass


class SchemaViolation(ScenarioError):
    pass


class DanglingReference(ScenarioError):
    pass


class UnknownVType(ScenarioError):
    pass


class UnknownEdge(ScenarioError):
    pass


class NonContiguousRoute(ScenarioError):
    pass


class DegeneratePolygon(ScenarioError):
    pass


class MissingInput(ScenarioError):
    pass


# model-specific parameter defaults applied when the vType omits an attribute
_MODEL_DEFAULTS = {
    "krauss": {"accel": 2.6, "decel": 4.5, "tau": 1.0, "min_gap": 2.0},
    "idm": {"accel": 1.0, "decel": 1.5, "tau": 1.5, "min_gap": 2.0},
}
_MODEL_NAMES = {"krauss": "krauss", "idm": "idm"}


@dataclass
class ScenarioBundle:
    network: RoadNetwork
    vtypes: dict[str, VehicleType]
    demand: tuple[DemandEntry, ...]
    polygons: tuple[Ring, ...]
    tls: dict[str, TrafficLightProgram]
    step_length_s: float = 0.1
    end_s: float | None = None
    seed: int = 0
    # absolute paths of the files this bundle was parsed from, in read
    # order; empty for bundles assembled in code
    input_files: tuple[Path, ...] = ()

    def counts(self) -> dict[str, int]:
        return {
            "edges": len(self.network.edges),
            "junctions": len(self.network.junctions),
            "vehicles": len(self.demand),
            "polygons": len(self.polygons),
            "tls": len(self.tls),
        }


def _attr(elem: ET.Element, name: str, where: str) -> str:
    value = elem.get(name)
    if value is None:
        raise SchemaViolation(f"{where}: missing attribute {name!r}")
    return value


def _float_attr(elem: ET.Element, name: str, where: str) -> float:
    try:
        return float(_attr(elem, name, where))
    except ValueError:
        raise SchemaViolation(f"{where}: attribute {name!r} is not a number") from None


def _warn_unknown(tag: str, context: str) -> None:
    warnings.warn(f"ignoring unsupported element <{tag}> in {context}", RuntimeWarning,
                  stacklevel=3)


# -- network ------------------------------------------------------------------


def parse_network(text: str) -> tuple[RoadNetwork, dict[str, TrafficLightProgram]]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SchemaViolation(f"net file: {exc}") from None
    if root.tag != "net":
        raise SchemaViolation(f"net file: root element is <{root.tag}>, expected <net>")
    junctions: dict[str, Junction] = {}
    edges: dict[str, Edge] = {}
    connections: list[Connection] = []
    tls_phases: dict[str, list[tuple[float, str]]] = {}
    tls_offset: dict[str, float] = {}
    for elem in root:
        if elem.tag == "junction":
            jid = _attr(elem, "id", "junction")
            junctions[jid] = Junction(
                jid, _float_attr(elem, "x", jid), _float_attr(elem, "y", jid),
                tls_id=elem.get("tls"),
            )
        elif elem.tag == "edge":
            eid = _attr(elem, "id", "edge")
            length = _float_attr(elem, "length", eid)
            speed = _float_attr(elem, "speed", eid)
            if length <= 0 or speed <= 0:
                raise SchemaViolation(f"edge {eid}: length and speed must be positive")
            edges[eid] = Edge(eid, _attr(elem, "from", eid), _attr(elem, "to", eid),
                              length, speed)
        elif elem.tag == "connection":
            connections.append(
                Connection(
                    _attr(elem, "from", "connection"), _attr(elem, "to", "connection"),
                    tls_id=elem.get("tls"),
                    link_index=int(elem.get("linkIndex", "0")),
                )
            )
        elif elem.tag == "tlLogic":
            tid = _attr(elem, "id", "tlLogic")
            phases = []
            for child in elem:
                if child.tag != "phase":
                    _warn_unknown(child.tag, f"tlLogic {tid}")
                    continue
                duration = _float_attr(child, "duration", f"tlLogic {tid}")
                state = _attr(child, "state", f"tlLogic {tid}")
                if duration <= 0:
                    raise SchemaViolation(f"tlLogic {tid}: phase duration must be > 0")
                if not state or any(c not in SIGNAL_CHARS for c in state):
                    raise SchemaViolation(f"tlLogic {tid}: bad phase state {state!r}")
                phases.append((duration, state))
            if not phases:
                raise SchemaViolation(f"tlLogic {tid}: needs at least one phase")
            tls_phases[tid] = phases
            tls_offset[tid] = float(elem.get("offset", "0"))
        else:
            _warn_unknown(elem.tag, "net file")

    for edge in edges.values():
        for jid in (edge.from_junction, edge.to_junction):
            if jid not in junctions:
                raise DanglingReference(f"edge {edge.id}: unknown junction {jid!r}")
    for conn in connections:
        for eid in (conn.from_edge, conn.to_edge):
            if eid not in edges:
                raise DanglingReference(f"connection: unknown edge {eid!r}")
        if conn.tls_id is not None and conn.tls_id not in tls_phases:
            raise DanglingReference(f"connection: unknown tls {conn.tls_id!r}")

    tls: dict[str, TrafficLightProgram] = {}
    for tid, phases in sorted(tls_phases.items()):
        links = sorted(c.link_index for c in connections if c.tls_id == tid)
        n_links = len(links)
        if links and links != list(range(n_links)):
            raise SchemaViolation(f"tlLogic {tid}: linkIndex values must be 0..{n_links - 1}")
        if n_links == 0:
            n_links = len(phases[0][1])
        for _, state in phases:
            if len(state) != n_links:
                raise SchemaViolation(
                    f"tlLogic {tid}: state width {len(state)} != {n_links} controlled links"
                )
        tls[tid] = TrafficLightProgram(tid, tuple(phases), offset=tls_offset[tid],
                                       n_links=n_links, owner=OWNER_TRAFFIC)
    return RoadNetwork(junctions, edges, connections), tls


# -- routes -------------------------------------------------------------------


def _parse_vtype(elem: ET.Element) -> VehicleType:
    vid = _attr(elem, "id", "vType")
    raw_model = elem.get("carFollowModel", "Krauss").lower()
    model = _MODEL_NAMES.get(raw_model)
    if model is None:
        raise SchemaViolation(f"vType {vid}: unsupported carFollowModel {raw_model!r}")
    defaults = _MODEL_DEFAULTS[model]

    def num(attr: str, fallback: float) -> float:
        raw = elem.get(attr)
        return float(raw) if raw is not None else fallback

    max_speed = elem.get("maxSpeed")
    return VehicleType(
        id=vid,
        model=model,
        length=num("length", 5.0),
        accel=num("accel", defaults["accel"]),
        decel=num("decel", defaults["decel"]),
        tau=num("tau", defaults["tau"]),
        min_gap=num("minGap", defaults["min_gap"]),
        max_speed=float(max_speed) if max_speed is not None else None,
        delta=num("delta", 4.0),
    )


def parse_routes(text: str) -> tuple[dict[str, VehicleType], tuple[DemandEntry, ...]]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SchemaViolation(f"route file: {exc}") from None
    if root.tag != "routes":
        raise SchemaViolation(f"route file: root element is <{root.tag}>")
    vtypes: dict[str, VehicleType] = {}
    demand: list[DemandEntry] = []
    for elem in root:
        if elem.tag == "vType":
            vtype = _parse_vtype(elem)
            vtypes[vtype.id] = vtype
        elif elem.tag == "vehicle":
            vid = _attr(elem, "id", "vehicle")
            type_id = _attr(elem, "type", vid)
            if type_id not in vtypes:
                raise UnknownVType(f"vehicle {vid}: vType {type_id!r} not declared")
            depart = _float_attr(elem, "depart", vid)
            route_elem = elem.find("route")
            if route_elem is None:
                raise SchemaViolation(f"vehicle {vid}: missing <route> child")
            edges = tuple(_attr(route_elem, "edges", vid).split())
            if not edges:
                raise SchemaViolation(f"vehicle {vid}: empty route")
            demand.append(
                DemandEntry(vid, vtypes[type_id], edges, round(depart * 1e6),
                            owner=OWNER_TRAFFIC)
            )
        else:
            _warn_unknown(elem.tag, "route file")
    demand.sort(key=lambda d: (d.depart_us, d.vehicle_id))
    return vtypes, tuple(demand)


# -- polygons -----------------------------------------------------------------


def parse_polygons(text: str) -> tuple[Ring, ...]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise SchemaViolation(f"poly file: {exc}") from None
    rings: list[Ring] = []
    for elem in root:
        if elem.tag != "poly":
            _warn_unknown(elem.tag, "poly file")
            continue
        if elem.get("type") != "building":
            continue
        shape = _attr(elem, "shape", "poly")
        points: list[tuple[float, float]] = []
        for token in shape.split():
            try:
                x, y = token.split(",")
                points.append((float(x), float(y)))
            except ValueError:
                raise SchemaViolation(f"poly: bad shape token {token!r}") from None
        if len(points) > 1 and points[0] == points[-1]:
            points.pop()  # accept explicitly closed rings, store open form
        if len(points) < 3:
            raise DegeneratePolygon(f"poly: ring has {len(points)} distinct vertices")
        rings.append(tuple(points))
    return tuple(rings)


# -- configuration ------------------------------------------------------------


def _cfg_value(root: ET.Element, section: str, name: str) -> str | None:
    elem = root.find(f"{section}/{name}")
    return None if elem is None else elem.get("value")


def parse_sumocfg(path: str | Path) -> ScenarioBundle:
    path = Path(path)
    if not path.is_file():
        raise MissingInput(f"config file not found: {path}")
    try:
        root = ET.fromstring(path.read_text(encoding="utf-8"))
    except ET.ParseError as exc:
        raise SchemaViolation(f"{path}: {exc}") from None
    if root.tag != "configuration":
        raise SchemaViolation(f"{path}: root element is <{root.tag}>")

    sources = [path]

    def load(name: str, required: bool) -> str | None:
        rel = _cfg_value(root, "input", name)
        if rel is None:
            if required:
                raise SchemaViolation(f"{path}: missing input/{name}")
            return None
        target = path.parent / rel
        if not target.is_file():
            raise MissingInput(f"{path}: {name} {rel!r} not found")
        sources.append(target)
        return target.read_text(encoding="utf-8")

    network, tls = parse_network(load("net-file", required=True))
    vtypes, demand = parse_routes(load("route-files", required=True))
    poly_text = load("additional-files", required=False)
    polygons = parse_polygons(poly_text) if poly_text is not None else ()

    step_raw = _cfg_value(root, "time", "step-length")
    end_raw = _cfg_value(root, "time", "end")
    seed_raw = _cfg_value(root, "random", "seed")
    bundle = ScenarioBundle(
        network=network,
        vtypes=vtypes,
        demand=demand,
        polygons=polygons,
        tls=tls,
        step_length_s=float(step_raw) if step_raw is not None else 0.1,
        end_s=float(end_raw) if end_raw is not None else None,
        seed=int(seed_raw) if seed_raw is not None else 0,
        input_files=tuple(sources),
    )
    validate_bundle(bundle)
    return bundle


def validate_bundle(bundle: ScenarioBundle) -> None:
    if not 0.0 < bundle.step_length_s <= 1.0:
        raise SchemaViolation(
            f"step length {bundle.step_length_s} outside (0, 1] seconds"
        )
    for entry in bundle.demand:
        for eid in entry.route:
            if eid not in bundle.network.edges:
                raise UnknownEdge(f"vehicle {entry.vehicle_id}: unknown edge {eid!r}")
        for a, b in zip(entry.route, entry.route[1:]):
            if not bundle.network.connected(a, b):
                raise NonContiguousRoute(
                    f"vehicle {entry.vehicle_id}: no connection {a} -> {b}"
                )


# -- canonical writers --------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def write_network(network: RoadNetwork, tls: dict[str, TrafficLightProgram]) -> str:
    lines = ["<net>"]
    for jid in sorted(network.junctions):
        j = network.junctions[jid]
        tls_attr = f' tls="{j.tls_id}"' if j.tls_id else ""
        lines.append(f'  <junction id="{j.id}" x="{_fmt(j.x)}" y="{_fmt(j.y)}"{tls_attr}/>')
    for eid in sorted(network.edges):
        e = network.edges[eid]
        lines.append(
            f'  <edge id="{e.id}" from="{e.from_junction}" to="{e.to_junction}"'
            f' length="{_fmt(e.length)}" speed="{_fmt(e.speed_limit)}"/>'
        )
    for c in sorted(network.connections.values(), key=lambda c: (c.from_edge, c.to_edge)):
        extra = f' tls="{c.tls_id}" linkIndex="{c.link_index}"' if c.tls_id else ""
        lines.append(f'  <connection from="{c.from_edge}" to="{c.to_edge}"{extra}/>')
    for tid in sorted(tls):
        prog = tls[tid]
        lines.append(f'  <tlLogic id="{tid}" offset="{_fmt(prog.offset)}">')
        for duration, state in prog.phases:
            lines.append(f'    <phase duration="{_fmt(duration)}" state="{state}"/>')
        lines.append("  </tlLogic>")
    lines.append("</net>")
    return "\n".join(lines) + "\n"


_SUMO_MODEL = {"krauss": "Krauss", "idm": "IDM"}


def write_routes(vtypes: dict[str, VehicleType], demand: tuple[DemandEntry, ...]) -> str:
    lines = ["<routes>"]
    for vid in sorted(vtypes):
        t = vtypes[vid]
        attrs = [
            f'id="{t.id}"',
            f'carFollowModel="{_SUMO_MODEL[t.model]}"',
            f'accel="{_fmt(t.accel)}"',
            f'decel="{_fmt(t.decel)}"',
            f'tau="{_fmt(t.tau)}"',
            f'length="{_fmt(t.length)}"',
            f'minGap="{_fmt(t.min_gap)}"',
        ]
        if t.max_speed is not None:
            attrs.append(f'maxSpeed="{_fmt(t.max_speed)}"')
        if t.model == "idm":
            attrs.append(f'delta="{_fmt(t.delta)}"')
        lines.append(f"  <vType {' '.join(attrs)}/>")
    for entry in demand:
        lines.append(
            f'  <vehicle id="{entry.vehicle_id}" type="{entry.vtype.id}"'
            f' depart="{_fmt(entry.depart_us / 1e6)}">'
        )
        lines.append(f'    <route edges="{" ".join(entry.route)}"/>')
        lines.append("  </vehicle>")
    lines.append("</routes>")
    return "\n".join(lines) + "\n"


def write_polygons(polygons: tuple[Ring, ...]) -> str:
    lines = ["<additional>"]
    for i, ring in enumerate(polygons):
        shape = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in ring)
        lines.append(f'  <poly id="p{i}" type="building" shape="{shape}"/>')
    lines.append("</additional>")
    return "\n".join(lines) + "\n"


def write_sumocfg(net_name: str, route_name: str, poly_name: str | None,
                  step_length_s: float, end_s: float | None, seed: int) -> str:
    lines = ["<configuration>", "  <input>",
             f'    <net-file value="{net_name}"/>',
             f'    <route-files value="{route_name}"/>']
    if poly_name is not None:
        lines.append(f'    <additional-files value="{poly_name}"/>')
    lines.append("  </input>")
    lines.append("  <time>")
    lines.append(f'    <step-length value="{_fmt(step_length_s)}"/>')
    if end_s is not None:
        lines.append(f'    <end value="{_fmt(end_s)}"/>')
    lines.append("  </time>")
    lines.append("  <random>")
    lines.append(f'    <seed value="{seed}"/>')
    lines.append("  </random>")
    lines.append("</configuration>")
    return "\n".join(lines) + "\n"
