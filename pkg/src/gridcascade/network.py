"""Grid data model: buses, branches, generators, and JSON case files.

All power values are MW on a fixed 100 MVA per-unit base; branch
reactances are per unit. The case format is a single JSON document:

    {
      "version": 1,
      "slack_bus": 0,
      "buses":      [{"id": 0, "load_mw": 0.0}, ...],
      "branches":   [{"id": 0, "from": 0, "to": 1, "x_pu": 0.1, "limit_mw": 100.0}, ...],
      "generators": [{"id": 0, "bus": 0, "pmax_mw": 200.0, "pmin_mw": 0.0, "cost": 1.0}, ...]
    }

Unknown keys are rejected. A missing generator ``cost`` defaults to 1.0 and
a missing ``pmin_mw`` to 0.0; serialization always writes both explicitly.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BASE_MVA = 100.0


class CaseFormatError(ValueError):
    """Case text is not valid JSON or does not follow the schema."""


class CaseValidationError(ValueError):
    """A parsed case violates a model invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    base_load: float  # MW, >= 0
    generators: tuple[int, ...] = ()


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float  # per unit, > 0
    flow_limit_long_term: float  # MW, > 0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    capacity_max: float  # MW, > 0
    capacity_min: float = 0.0
    cost: float = 1.0  # $/MWh


@dataclass(frozen=True)
class Network:
    """Static grid description. Immutable and safe to share across workers."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    slack_bus: int

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_branches(self):
        return len(self.branches)

    @property
    def n_generators(self):
        return len(self.generators)

    # Dense array views used by the numerical modules.
    @cached_property
    def base_load(self):
        return np.array([b.base_load for b in self.buses], dtype=float)

    @cached_property
    def from_bus(self):
        return np.array([br.from_bus for br in self.branches], dtype=int)

    @cached_property
    def to_bus(self):
        return np.array([br.to_bus for br in self.branches], dtype=int)

    @cached_property
    def reactance(self):
        return np.array([br.reactance for br in self.branches], dtype=float)

    @cached_property
    def flow_limit(self):
        return np.array([br.flow_limit_long_term for br in self.branches], dtype=float)

    @cached_property
    def gen_bus(self):
        return np.array([g.bus for g in self.generators], dtype=int)

    @cached_property
    def gen_pmax(self):
        return np.array([g.capacity_max for g in self.generators], dtype=float)

    @cached_property
    def gen_pmin(self):
        return np.array([g.capacity_min for g in self.generators], dtype=float)

    @cached_property
    def gen_cost(self):
        return np.array([g.cost for g in self.generators], dtype=float)

    @cached_property
    def merit_order(self):
        """Generator ids sorted by (cost, id); the cheapest-first fill order."""
        return sorted(range(self.n_generators), key=lambda i: (self.generators[i].cost, i))


@dataclass
class OperatingState:
    """One dispatch snapshot, owned by a single cascade run at a time.

    ``load`` is the load currently served (base load minus everything shed
    so far); ``flow`` is signed MW, positive in the from->to direction.
    """

    in_service: np.ndarray  # bool, per branch
    load: np.ndarray  # MW, per bus
    gen_output: np.ndarray  # MW, per generator
    flow: np.ndarray  # MW, per branch
    shed_so_far: float = 0.0

    def copy(self):
        return OperatingState(
            in_service=self.in_service.copy(),
            load=self.load.copy(),
            gen_output=self.gen_output.copy(),
            flow=self.flow.copy(),
            shed_so_far=self.shed_so_far,
        )

    def validate(self, net, tol=1e-6):
        """Check the state invariants; raises CaseValidationError on failure."""
        if np.any(np.abs(self.flow[~self.in_service]) > 0.0):
            raise CaseValidationError("nonzero flow on out-of-service branch")
        for comp in connected_components(net.n_buses, _live_edges(net, self.in_service)):
            members = set(comp)
            gen = sum(
                self.gen_output[g] for g in range(net.n_generators) if net.generators[g].bus in members
            )
            load = sum(self.load[b] for b in comp)
            if abs(gen - load) > tol:
                raise CaseValidationError(
                    f"island {sorted(comp)} unbalanced by {gen - load:+.6f} MW"
                )


def _live_edges(net, in_service):
    return [
        (br.from_bus, br.to_bus)
        for br, alive in zip(net.branches, in_service)
        if alive
    ]


def connected_components(n_nodes, edges):
    """Connected components of an undirected graph, as sorted node lists.

    Components are ordered by their smallest member, so the result is
    deterministic for a given input.
    """
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)

    groups = {}
    for node in range(n_nodes):
        groups.setdefault(find(node), []).append(node)
    return [sorted(groups[r]) for r in sorted(groups)]


def build_network(loads, branches, generators, slack_bus=0):
    """Assemble and validate a Network from plain tuples.

    Args:
        loads: sequence of base loads in MW, index = bus id.
        branches: sequence of (from_bus, to_bus, x_pu, limit_mw).
        generators: sequence of (bus, pmax_mw) or (bus, pmax_mw, pmin_mw, cost).
        slack_bus: reference bus id.
    """
    buses = []
    gen_at = {b: [] for b in range(len(loads))}
    gens = []
    for gid, spec in enumerate(generators):
        bus, pmax = spec[0], spec[1]
        pmin = spec[2] if len(spec) > 2 else 0.0
        cost = spec[3] if len(spec) > 3 else 1.0
        gens.append(Generator(id=gid, bus=bus, capacity_max=float(pmax), capacity_min=float(pmin), cost=float(cost)))
        gen_at.setdefault(bus, []).append(gid)
    for bid, load in enumerate(loads):
        buses.append(Bus(id=bid, base_load=float(load), generators=tuple(gen_at.get(bid, ()))))
    brs = [
        Branch(id=k, from_bus=int(f), to_bus=int(t), reactance=float(x), flow_limit_long_term=float(lim))
        for k, (f, t, x, lim) in enumerate(branches)
    ]
    net = Network(buses=tuple(buses), branches=tuple(brs), generators=tuple(gens), slack_bus=int(slack_bus))
    validate_network(net)
    return net


def validate_network(net):
    """Raise CaseValidationError if any Network invariant is violated."""
    n = net.n_buses
    if n == 0:
        raise CaseValidationError("network has no buses")
    if [b.id for b in net.buses] != list(range(n)):
        raise CaseValidationError("bus ids must be dense 0..N-1")
    if [br.id for br in net.branches] != list(range(net.n_branches)):
        raise CaseValidationError("branch ids must be dense 0..L-1")
    if [g.id for g in net.generators] != list(range(net.n_generators)):
        raise CaseValidationError("generator ids must be dense 0..G-1")
    for b in net.buses:
        if b.base_load < 0:
            raise CaseValidationError(f"bus {b.id}: base load must be >= 0")
    for br in net.branches:
        for end in (br.from_bus, br.to_bus):
            if not 0 <= end < n:
                raise CaseValidationError(f"branch {br.id}: bus {end} does not exist")
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch {br.id}: from and to bus must differ")
        if br.reactance <= 0:
            raise CaseValidationError(f"branch {br.id}: reactance must be > 0")
        if br.flow_limit_long_term <= 0:
            raise CaseValidationError(f"branch {br.id}: flow limit must be > 0")
    for g in net.generators:
        if not 0 <= g.bus < n:
            raise CaseValidationError(f"generator {g.id}: bus {g.bus} does not exist")
        if g.capacity_max <= 0:
            raise CaseValidationError(f"generator {g.id}: capacity must be > 0")
        if g.capacity_min < 0 or g.capacity_min > g.capacity_max:
            raise CaseValidationError(
                f"generator {g.id}: need 0 <= capacity_min <= capacity_max"
            )
        if g.cost < 0:
            raise CaseValidationError(f"generator {g.id}: cost must be >= 0")
    for b in net.buses:
        for gid in b.generators:
            if not (0 <= gid < net.n_generators and net.generators[gid].bus == b.id):
                raise CaseValidationError(f"bus {b.id}: generator list inconsistent")
    listed = sorted(g for b in net.buses for g in b.generators)
    if listed != list(range(net.n_generators)):
        raise CaseValidationError("bus generator lists do not cover all generators")
    if not 0 <= net.slack_bus < n:
        raise CaseValidationError(f"slack bus {net.slack_bus} does not exist")
    comps = connected_components(n, [(br.from_bus, br.to_bus) for br in net.branches])
    if len(comps) != 1:
        raise CaseValidationError(
            f"disconnected graph: {len(comps)} components in the all-in-service state"
        )


_TOP_KEYS = {"version", "slack_bus", "buses", "branches", "generators"}
_BUS_KEYS = {"id", "load_mw"}
_BRANCH_KEYS = {"id", "from", "to", "x_pu", "limit_mw"}
_GEN_KEYS = {"id", "bus", "pmax_mw", "pmin_mw", "cost"}


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise CaseFormatError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise CaseFormatError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise CaseFormatError(f"{where}: missing key(s) {sorted(missing)}")


def parse_case(text):
    """Parse case-file text into a validated Network.

    Raises:
        CaseFormatError: malformed JSON (with position) or schema violation.
        CaseValidationError: schema-valid input that breaks a model invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    _check_keys(doc, _TOP_KEYS, _TOP_KEYS, "case")
    if doc["version"] != 1:
        raise CaseFormatError(f"unsupported case version {doc['version']!r}")

    gen_at = {}
    gens = []
    for i, g in enumerate(doc["generators"]):
        _check_keys(g, _GEN_KEYS, {"id", "bus", "pmax_mw"}, f"generators[{i}]")
        gens.append(
            Generator(
                id=int(g["id"]),
                bus=int(g["bus"]),
                capacity_max=float(g["pmax_mw"]),
                capacity_min=float(g.get("pmin_mw", 0.0)),
                cost=float(g.get("cost", 1.0)),
            )
        )
    gens.sort(key=lambda g: g.id)
    for g in gens:
        gen_at.setdefault(g.bus, []).append(g.id)

    buses = []
    for i, b in enumerate(doc["buses"]):
        _check_keys(b, _BUS_KEYS, _BUS_KEYS, f"buses[{i}]")
        bid = int(b["id"])
        buses.append(Bus(id=bid, base_load=float(b["load_mw"]), generators=tuple(gen_at.get(bid, ()))))
    buses.sort(key=lambda b: b.id)

    branches = []
    for i, br in enumerate(doc["branches"]):
        _check_keys(br, _BRANCH_KEYS, _BRANCH_KEYS, f"branches[{i}]")
        branches.append(
            Branch(
                id=int(br["id"]),
                from_bus=int(br["from"]),
                to_bus=int(br["to"]),
                reactance=float(br["x_pu"]),
                flow_limit_long_term=float(br["limit_mw"]),
            )
        )
    branches.sort(key=lambda br: br.id)

    net = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        slack_bus=int(doc["slack_bus"]),
    )
    validate_network(net)
    return net


def serialize_case(net):
    """Serialize a Network to case-file text; inverse of parse_case."""
    doc = {
        "version": 1,
        "slack_bus": net.slack_bus,
        "buses": [{"id": b.id, "load_mw": b.base_load} for b in net.buses],
        "branches": [
            {
                "id": br.id,
                "from": br.from_bus,
                "to": br.to_bus,
                "x_pu": br.reactance,
                "limit_mw": br.flow_limit_long_term,
            }
            for br in net.branches
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "pmax_mw": g.capacity_max,
                "pmin_mw": g.capacity_min,
                "cost": g.cost,
            }
            for g in net.generators
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def scale_loads(net, factor_global, factors_per_bus=None):
    """Return a copy of the network with every base load rescaled.

    Each bus load becomes base_load * factor_global * per-bus factor.
    All factors must be strictly positive.
    """
    if factor_global <= 0:
        raise ValueError(f"global load factor must be > 0, got {factor_global}")
    if factors_per_bus is None:
        factors_per_bus = np.ones(net.n_buses)
    factors_per_bus = np.asarray(factors_per_bus, dtype=float)
    if factors_per_bus.shape != (net.n_buses,):
        raise ValueError("need exactly one per-bus factor per bus")
    if np.any(factors_per_bus <= 0):
        bad = int(np.argmax(factors_per_bus <= 0))
        raise ValueError(f"per-bus load factor must be > 0, bus {bad}")
    buses = tuple(
        Bus(id=b.id, base_load=b.base_load * factor_global * factors_per_bus[b.id], generators=b.generators)
        for b in net.buses
    )
    return Network(buses=buses, branches=net.branches, generators=net.generators, slack_bus=net.slack_bus)
