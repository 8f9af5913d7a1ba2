"""Deterministic synthetic fault generator.

Builds a small geometric network topology (regions on a ring, one landmark
per region, a few clients per region), injects faults from a scenario list,
derives per-landmark measures plus local features, and labels each sample
with a QoE flag from a deterministic page-load-time model.

Design notes that matter for consumers:

- Measures are drawn per sample from an RNG stream keyed by (seed, sample
  index), so generation is order-independent and reproducible byte for byte.
- Fault magnitudes are calibrated so every injected cause shifts its measure
  into a value range disjoint from the nominal envelope (noise tails
  included). Classifiers can therefore separate causes cleanly, and samples
  near hidden landmarks look exactly nominal on the known features.
- The QoE label uses expected values (mean jitter, expected CPU stress), not
  the sampled measure noise, so the label is a pure function of
  (client, service, scenario).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import DataError
from .schema import (
    COARSE_FAMILIES,
    KINDS_PER_LANDMARK,
    LOCAL_FEATURES,
    FaultFamily,
    FeatureSchema,
    MeasureKind,
    Sample,
)

# Propagation and capacity model. RTT_PER_UNIT is deliberately small relative
# to fault magnitudes: +50 ms is far outside the cross-client RTT spread.
BASE_RTT = 0.004
RTT_PER_UNIT = 0.003
CAPACITY_SCALE = 50e6
CAPACITY_DISTANCE_SCALE = 3.0
UPLOAD_FACTOR = 0.6
BASE_REORDER = 0.002
BASE_RETRANSMIT = 0.004
GATEWAY_BASE_RTT = 0.002

# Page-load model: slow-start rounds from a 4 KiB initial window, two
# handshake rounds per fresh connection, and a client-side processing rate
# that CPU stress collapses.
INITIAL_WINDOW = 4096
HANDSHAKE_ROUNDS = 2
PROC_RATE = 200e6
QOE_NOMINAL_CPU = 0.2

# Secondary fault signatures. Each fault family shifts at least two measures
# into ranges disjoint from the nominal envelope: congestion-window transfers
# slow down in proportion to RTT, loss collapses TCP throughput, a saturated
# shaper queues packets (bufferbloat), and a pegged CPU delays the probe's
# own packet timestamping.
LOSS_THROUGHPUT_FACTOR = 200.0
BUFFERBLOAT_DELAY = 0.09
CPU_PROBE_DELAY = 0.1
JITTER_MEAN_SPAN = (0.4, 0.6)  # measured mean delay, fraction of magnitude
JITTER_REORDER_SPAN = (0.4, 0.8)  # reorder ratio bump, fraction of magnitude

PAGE_SIZE = 8192
SCRIPT_SIZE = 307200
IMAGE_SIZE = 5242880

DEFAULT_REGION_NAMES: tuple[str, ...] = (
    "east",
    "west2",
    "asia",
    "grav",
    "beau",
    "sing",
    "pari",
    "amst",
    "miam",
    "seat",
)

DEFAULT_SERVICE_HOSTS: tuple[str, ...] = ("grav", "seat", "sing")

SERVICE_SHAPES: tuple[str, ...] = (
    "single",
    "script.far",
    "script.cdn",
    "image.local",
    "image.far",
    "image.cdn",
)

#: Region hosting the fixed far dependency of the *.far service shapes.
FAR_DEPENDENCY_REGION = "beau"

DEFAULT_MAGNITUDES: dict[FaultFamily, float] = {
    FaultFamily.UPLINK_LATENCY: 0.05,
    FaultFamily.REMOTE_LATENCY: 0.05,
    FaultFamily.JITTER: 0.1,
    FaultFamily.LOSS: 0.08,
    FaultFamily.DOWNLOAD_BANDWIDTH: 1e6,
    FaultFamily.LOCAL_LOAD: 0.9,
}

#: Families whose faults sit at the client side; their scenarios may use a
#: region location (restricting which clients are affected) or "local".
_LOCAL_FAMILIES = frozenset({FaultFamily.UPLINK_LATENCY, FaultFamily.LOCAL_LOAD})
#: Bandwidth shaping can also happen at the client's access link.
_LOCAL_OK = _LOCAL_FAMILIES | {FaultFamily.DOWNLOAD_BANDWIDTH}


@dataclass(frozen=True)
class Region:
    name: str
    x: float
    y: float


@dataclass(frozen=True)
class Client:
    region: str
    x: float
    y: float
    mem_total: float


@dataclass(frozen=True)
class Resource:
    """One fetch in a service's dependency chain."""

    size: int
    proc_factor: float
    host_rule: str  # "host" | "fixed" | "nearest"
    fixed_host: str | None = None
    same_connection: bool = False


@dataclass(frozen=True)
class Service:
    service_id: str
    shape: str
    host: str
    resources: tuple[Resource, ...]


def _build_service(shape: str, host: str) -> Service:
    page = Resource(PAGE_SIZE, 1.0, "host")
    if shape == "single":
        deps: tuple[Resource, ...] = (page,)
    elif shape == "script.far":
        deps = (page, Resource(SCRIPT_SIZE, 3.0, "fixed", FAR_DEPENDENCY_REGION))
    elif shape == "script.cdn":
        deps = (page, Resource(SCRIPT_SIZE, 3.0, "nearest"))
    elif shape == "image.local":
        deps = (page, Resource(IMAGE_SIZE, 2.0, "host", same_connection=True))
    elif shape == "image.far":
        deps = (page, Resource(IMAGE_SIZE, 2.0, "fixed", FAR_DEPENDENCY_REGION))
    elif shape == "image.cdn":
        deps = (page, Resource(IMAGE_SIZE, 2.0, "nearest"))
    else:
        raise DataError(f"unknown service shape: {shape!r}")
    return Service(service_id=f"{host}/{shape}", shape=shape, host=host, resources=deps)


@dataclass(frozen=True)
class Topology:
    """Regions with one landmark each, clients, and hosted services."""

    regions: tuple[Region, ...]
    clients: tuple[Client, ...]
    services: tuple[Service, ...]

    # geometry caches, derived in __post_init__
    _region_pos: np.ndarray = field(init=False, repr=False, compare=False)
    _client_pos: np.ndarray = field(init=False, repr=False, compare=False)
    _dist: np.ndarray = field(init=False, repr=False, compare=False)
    _nearest: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = [r.name for r in self.regions]
        if len(set(names)) != len(names):
            raise DataError("duplicate region names (one landmark per region)")
        if not self.regions:
            raise DataError("topology needs at least one region")
        index = {n: i for i, n in enumerate(names)}
        for c in self.clients:
            if c.region not in index:
                raise DataError(f"client region {c.region!r} not in topology")
        for s in self.services:
            if s.host not in index:
                raise DataError(f"service {s.service_id!r} hosted in unknown region")
            for res in s.resources:
                if res.host_rule == "fixed" and res.fixed_host not in index:
                    raise DataError(
                        f"service {s.service_id!r} depends on unknown region {res.fixed_host!r}"
                    )
        rp = np.array([[r.x, r.y] for r in self.regions], dtype=np.float64)
        cp = np.array([[c.x, c.y] for c in self.clients], dtype=np.float64).reshape(
            len(self.clients), 2
        )
        dist = np.sqrt(((cp[:, None, :] - rp[None, :, :]) ** 2).sum(axis=2))
        object.__setattr__(self, "_region_pos", rp)
        object.__setattr__(self, "_client_pos", cp)
        object.__setattr__(self, "_dist", dist)
        object.__setattr__(
            self, "_nearest", dist.argmin(axis=1) if len(self.clients) else np.zeros(0, int)
        )

    @property
    def region_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.regions)

    def region_index(self, name: str) -> int:
        try:
            return self.region_names.index(name)
        except ValueError:
            raise DataError(f"unknown region: {name!r}") from None

    def client_index(self, client: Client | int) -> int:
        if isinstance(client, (int, np.integer)):
            if not 0 <= client < len(self.clients):
                raise DataError(f"client index {client} out of range")
            return int(client)
        return self.clients.index(client)

    def distance(self, client: Client | int, region: str | int) -> float:
        ci = self.client_index(client)
        ri = region if isinstance(region, (int, np.integer)) else self.region_index(region)
        return float(self._dist[ci, ri])

    def nearest_region(self, client: Client | int) -> str:
        return self.regions[self._nearest[self.client_index(client)]].name

    def clients_in(self, region: str) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.clients) if c.region == region)

    def schema(self) -> FeatureSchema:
        return FeatureSchema(landmark_ids=self.region_names)


def default_topology(
    clients_per_region: int = 2,
    region_names: tuple[str, ...] = DEFAULT_REGION_NAMES,
    service_hosts: tuple[str, ...] = DEFAULT_SERVICE_HOSTS,
) -> Topology:
    """Ring layout placing clients near their region's landmark."""
    if clients_per_region < 1:
        raise DataError("need at least one client per region")
    n = len(region_names)
    regions = []
    for i, name in enumerate(region_names):
        angle = 2.0 * math.pi * i / n
        radius = 2.0 + 0.15 * (i % 3)
        regions.append(Region(name, radius * math.cos(angle), radius * math.sin(angle)))
    clients = []
    mem_choices = (4.0 * 2**30, 8.0 * 2**30, 16.0 * 2**30)
    for i, region in enumerate(regions):
        angle = 2.0 * math.pi * i / n
        for j in range(clients_per_region):
            off = 0.25 + 0.1 * j
            theta = angle + 0.9 + 0.7 * j
            clients.append(
                Client(
                    region=region.name,
                    x=region.x + off * math.cos(theta),
                    y=region.y + off * math.sin(theta),
                    mem_total=mem_choices[len(clients) % 3],
                )
            )
    services = tuple(
        _build_service(shape, host) for host in service_hosts for shape in SERVICE_SHAPES
    )
    return Topology(regions=tuple(regions), clients=tuple(clients), services=services)


@dataclass(frozen=True)
class FaultScenario:
    """One injectable fault: a family, a location, and a magnitude."""

    family: FaultFamily
    location: str  # region name, or "local" for the evaluated client's side
    magnitude: float | None = None

    def __post_init__(self) -> None:
        if self.family == FaultFamily.NOMINAL:
            raise DataError("a fault scenario cannot have the nominal family")
        if self.location == "local" and self.family not in _LOCAL_OK:
            raise DataError(f"{self.family.value} faults need a region location")
        if self.magnitude is None:
            object.__setattr__(self, "magnitude", DEFAULT_MAGNITUDES[self.family])
        if self.magnitude <= 0:
            raise DataError("fault magnitude must be positive")
        if self.family == FaultFamily.LOCAL_LOAD and not self.magnitude < 1:
            raise DataError("CPU stress magnitude is a load fraction below 1")

    @property
    def scenario_id(self) -> str:
        return f"{self.family.value}@{self.location}"


def default_scenarios(
    locations: tuple[str, ...] = ("grav", "seat", "sing", "beau"),
) -> tuple[FaultScenario, ...]:
    """Six injectable families crossed with four locations."""
    out = []
    for family in (
        FaultFamily.REMOTE_LATENCY,
        FaultFamily.JITTER,
        FaultFamily.LOSS,
        FaultFamily.DOWNLOAD_BANDWIDTH,
        FaultFamily.UPLINK_LATENCY,
        FaultFamily.LOCAL_LOAD,
    ):
        for loc in locations:
            out.append(FaultScenario(family, loc))
    return tuple(out)


@dataclass(frozen=True)
class NoiseParams:
    rtt_sigma: float = 0.1
    bandwidth_sigma: float = 0.1
    ratio_sigma: float = 0.3

    def __post_init__(self) -> None:
        if min(self.rtt_sigma, self.bandwidth_sigma, self.ratio_sigma) < 0:
            raise DataError("noise sigmas must be non-negative")

    @classmethod
    def disabled(cls) -> "NoiseParams":
        return cls(0.0, 0.0, 0.0)


def baseline_measures(
    topology: Topology,
    client: Client | int,
    landmark: str | int,
    rng: np.random.Generator,
    noise: NoiseParams = NoiseParams(),
) -> np.ndarray:
    """Fault-free probe measures toward one landmark, in feature-kind order.

    Draws exactly five standard normals (one per kind) from rng.
    """
    dist = topology.distance(client, landmark)
    z = rng.standard_normal(5)
    capacity = CAPACITY_SCALE / (1.0 + dist / CAPACITY_DISTANCE_SCALE)
    out = np.empty(KINDS_PER_LANDMARK)
    out[MeasureKind.DOWNLOAD] = capacity * math.exp(noise.bandwidth_sigma * z[0])
    out[MeasureKind.UPLOAD] = UPLOAD_FACTOR * capacity * math.exp(noise.bandwidth_sigma * z[1])
    out[MeasureKind.RTT] = (BASE_RTT + RTT_PER_UNIT * dist) * math.exp(noise.rtt_sigma * z[2])
    out[MeasureKind.REORDER_RATIO] = BASE_REORDER * math.exp(noise.ratio_sigma * z[3])
    out[MeasureKind.RETRANSMIT_RATIO] = BASE_RETRANSMIT * math.exp(noise.ratio_sigma * z[4])
    return out


def _draw_locals(
    client: Client, rng: np.random.Generator, noise: NoiseParams
) -> np.ndarray:
    out = np.empty(len(LOCAL_FEATURES))
    out[0] = client.mem_total
    out[1] = client.mem_total * rng.uniform(0.3, 0.7)
    out[2] = rng.uniform(0.05, 0.3)
    out[3] = rng.uniform(0.05, 0.35)
    out[4] = GATEWAY_BASE_RTT * math.exp(noise.rtt_sigma * rng.standard_normal())
    return out


def _applies_to_client(scenario: FaultScenario, client: Client) -> bool:
    return scenario.location == "local" or client.region == scenario.location


def apply_fault(
    scenario: FaultScenario,
    topology: Topology,
    client: Client,
    landmark_measures: np.ndarray,
    local_values: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Perturb one sample's measures according to the scenario.

    Returns copies; path incidence follows the remote endpoint for network
    families and the client region (or "local") for client-side families.
    """
    if scenario.family == FaultFamily.NOMINAL:
        raise DataError("cannot apply a nominal scenario")
    measures = np.array(landmark_measures, dtype=np.float64, copy=True)
    locals_ = np.array(local_values, dtype=np.float64, copy=True)
    mag = scenario.magnitude
    family = scenario.family

    if family == FaultFamily.REMOTE_LATENCY:
        r = topology.region_index(scenario.location)
        before = measures[r, MeasureKind.RTT]
        after = before + mag
        measures[r, MeasureKind.RTT] = after
        # congestion-window pacing: probe throughput scales with 1/RTT
        measures[r, MeasureKind.DOWNLOAD] *= before / after
        measures[r, MeasureKind.UPLOAD] *= before / after
    elif family == FaultFamily.JITTER:
        r = topology.region_index(scenario.location)
        lo, hi = JITTER_MEAN_SPAN
        measures[r, MeasureKind.RTT] += mag * rng.uniform(lo, hi)
        lo, hi = JITTER_REORDER_SPAN
        measures[r, MeasureKind.REORDER_RATIO] += mag * rng.uniform(lo, hi)
    elif family == FaultFamily.LOSS:
        r = topology.region_index(scenario.location)
        effective = mag * rng.uniform(0.75, 1.25)
        measures[r, MeasureKind.RETRANSMIT_RATIO] += effective
        measures[r, MeasureKind.DOWNLOAD] /= 1.0 + LOSS_THROUGHPUT_FACTOR * effective
    elif family == FaultFamily.DOWNLOAD_BANDWIDTH:
        if scenario.location == "local":
            column = measures[:, MeasureKind.DOWNLOAD]
            measures[:, MeasureKind.DOWNLOAD] = np.minimum(column, mag)
            measures[:, MeasureKind.RTT] += BUFFERBLOAT_DELAY
        else:
            r = topology.region_index(scenario.location)
            measures[r, MeasureKind.DOWNLOAD] = min(
                measures[r, MeasureKind.DOWNLOAD], mag
            )
            measures[r, MeasureKind.RTT] += BUFFERBLOAT_DELAY
    elif family == FaultFamily.UPLINK_LATENCY:
        if _applies_to_client(scenario, client):
            locals_[LOCAL_FEATURES.index("gateway_rtt")] += mag
            measures[:, MeasureKind.RTT] += mag
    elif family == FaultFamily.LOCAL_LOAD:
        if _applies_to_client(scenario, client):
            idx = LOCAL_FEATURES.index("cpu_load")
            stressed = mag + 0.08 * rng.uniform()
            locals_[idx] = max(locals_[idx], stressed)
            # timestamping on a pegged CPU lags, inflating every probe RTT
            measures[:, MeasureKind.RTT] += CPU_PROBE_DELAY
    return measures, locals_


def scenario_cause(
    scenario: FaultScenario, client: Client, topology: Topology, schema: FeatureSchema
) -> int:
    """Feature index that labels the scenario's root cause for this client."""
    family = scenario.family
    if family == FaultFamily.UPLINK_LATENCY:
        return schema.local_feature_index("gateway_rtt")
    if family == FaultFamily.LOCAL_LOAD:
        return schema.local_feature_index("cpu_load")
    kind = {
        FaultFamily.REMOTE_LATENCY: MeasureKind.RTT,
        FaultFamily.JITTER: MeasureKind.REORDER_RATIO,
        FaultFamily.LOSS: MeasureKind.RETRANSMIT_RATIO,
        FaultFamily.DOWNLOAD_BANDWIDTH: MeasureKind.DOWNLOAD,
    }[family]
    if scenario.location == "local":
        # client-side shaping shows up most on the client's own region path
        region = client.region
    else:
        region = scenario.location
    return schema.feature_index(topology.region_index(region), kind)


# -- page-load model ---------------------------------------------------------


def _fetch_rounds(size: int, same_connection: bool) -> int:
    rounds = math.ceil(math.log2(1.0 + size / INITIAL_WINDOW))
    return rounds if same_connection else rounds + HANDSHAKE_ROUNDS


def _resource_host(service: Service, resource: Resource, topology: Topology, client: Client) -> str:
    if resource.host_rule == "host":
        return service.host
    if resource.host_rule == "fixed":
        return resource.fixed_host  # type: ignore[return-value]
    return topology.nearest_region(client)


def _fetch_time(
    topology: Topology,
    client: Client,
    host: str,
    resource: Resource,
    scenarios: tuple[FaultScenario, ...],
) -> float:
    dist = topology.distance(client, host)
    rtt = BASE_RTT + RTT_PER_UNIT * dist
    bandwidth = CAPACITY_SCALE / (1.0 + dist / CAPACITY_DISTANCE_SCALE)
    cpu = QOE_NOMINAL_CPU
    for sc in scenarios:
        family, mag = sc.family, sc.magnitude
        if family == FaultFamily.REMOTE_LATENCY and sc.location == host:
            rtt += mag
        elif family == FaultFamily.JITTER and sc.location == host:
            rtt += 0.5 * mag  # expected extra delay
        elif family == FaultFamily.LOSS and sc.location == host:
            bandwidth /= 1.0 + LOSS_THROUGHPUT_FACTOR * mag
        elif family == FaultFamily.DOWNLOAD_BANDWIDTH:
            if sc.location == host or sc.location == "local":
                bandwidth = min(bandwidth, mag)
        elif family == FaultFamily.UPLINK_LATENCY and _applies_to_client(sc, client):
            rtt += mag
        elif family == FaultFamily.LOCAL_LOAD and _applies_to_client(sc, client):
            cpu = max(cpu, mag + 0.04)  # midpoint of the stress draw
    proc_rate = PROC_RATE * (1.0 - cpu)
    rounds = _fetch_rounds(resource.size, resource.same_connection)
    return rounds * rtt + resource.size / bandwidth + resource.proc_factor * resource.size / proc_rate


def load_time(
    topology: Topology,
    service: Service,
    client: Client | int,
    scenarios: tuple[FaultScenario, ...] = (),
) -> float:
    """Expected page-load time: sequential fetch of the service's resources."""
    client_obj = topology.clients[topology.client_index(client)]
    total = 0.0
    for resource in service.resources:
        host = _resource_host(service, resource, topology, client_obj)
        total += _fetch_time(topology, client_obj, host, resource, scenarios)
    return total


def qoe_label(
    topology: Topology,
    service: Service,
    client: Client | int,
    scenarios: tuple[FaultScenario, ...] = (),
    delta: float = 0.5,
) -> tuple[bool, float]:
    """(degraded, load time): degraded iff load exceeds (1 + delta) x fault-free."""
    t = load_time(topology, service, client, tuple(scenarios))
    baseline = load_time(topology, service, client, ())
    return t > (1.0 + delta) * baseline, t


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    scenarios: tuple[FaultScenario, ...]
    samples_per_scenario: int
    nominal_count: int
    noise: NoiseParams = NoiseParams()
    seed: int = 0
    qoe_delta: float = 0.5
    hard_nominal_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.samples_per_scenario < 0 or self.nominal_count < 0:
            raise DataError("sample counts must be non-negative")
        if not self.scenarios and self.samples_per_scenario > 0:
            raise DataError("samples_per_scenario > 0 requires scenarios")
        if self.qoe_delta <= 0:
            raise DataError("qoe_delta must be positive")
        if not 0 <= self.hard_nominal_fraction < 1:
            raise DataError("hard_nominal_fraction must be in [0, 1)")
        names = set(self.topology.region_names)
        for sc in self.scenarios:
            if sc.location != "local" and sc.location not in names:
                raise DataError(f"scenario {sc.scenario_id!r} at unknown region")
            if sc.family in _LOCAL_FAMILIES and sc.location != "local":
                if not self.topology.clients_in(sc.location):
                    raise DataError(
                        f"scenario {sc.scenario_id!r} targets a region without clients"
                    )

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "samples_per_scenario": self.samples_per_scenario,
            "nominal_count": self.nominal_count,
            "qoe_delta": self.qoe_delta,
            "hard_nominal_fraction": self.hard_nominal_fraction,
            "noise": {
                "rtt_sigma": self.noise.rtt_sigma,
                "bandwidth_sigma": self.noise.bandwidth_sigma,
                "ratio_sigma": self.noise.ratio_sigma,
            },
            "topology": {
                "regions": [{"name": r.name, "x": r.x, "y": r.y} for r in self.topology.regions],
                "clients": [
                    {"region": c.region, "x": c.x, "y": c.y, "mem_total": c.mem_total}
                    for c in self.topology.clients
                ],
                "services": [
                    {"shape": s.shape, "host": s.host} for s in self.topology.services
                ],
            },
            "scenarios": [
                {
                    "family": sc.family.value,
                    "location": sc.location,
                    "magnitude": sc.magnitude,
                }
                for sc in self.scenarios
            ],
        }

    def digest(self) -> str:
        import hashlib

        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, doc: dict) -> "SimConfig":
        try:
            topo_doc = doc.get("topology", "default")
            if topo_doc == "default":
                topology = default_topology()
            elif isinstance(topo_doc, dict) and "regions" not in topo_doc:
                topology = default_topology(
                    clients_per_region=int(topo_doc.get("clients_per_region", 2)),
                    service_hosts=tuple(topo_doc.get("service_hosts", DEFAULT_SERVICE_HOSTS)),
                )
            else:
                regions = tuple(
                    Region(r["name"], float(r["x"]), float(r["y"]))
                    for r in topo_doc["regions"]
                )
                clients = tuple(
                    Client(
                        c["region"], float(c["x"]), float(c["y"]), float(c["mem_total"])
                    )
                    for c in topo_doc["clients"]
                )
                services = tuple(
                    _build_service(s["shape"], s["host"]) for s in topo_doc["services"]
                )
                topology = Topology(regions, clients, services)
            sc_doc = doc.get("scenarios", "default")
            if sc_doc == "default":
                scenarios = default_scenarios()
            else:
                scenarios = tuple(
                    FaultScenario(
                        FaultFamily(s["family"]), s["location"], s.get("magnitude")
                    )
                    for s in sc_doc
                )
            noise_doc = doc.get("noise", {})
            noise = NoiseParams(
                rtt_sigma=float(noise_doc.get("rtt_sigma", 0.1)),
                bandwidth_sigma=float(noise_doc.get("bandwidth_sigma", 0.1)),
                ratio_sigma=float(noise_doc.get("ratio_sigma", 0.3)),
            )
            return cls(
                topology=topology,
                scenarios=scenarios,
                samples_per_scenario=int(doc["samples_per_scenario"]),
                nominal_count=int(doc["nominal_count"]),
                noise=noise,
                seed=int(doc.get("seed", 0)),
                qoe_delta=float(doc.get("qoe_delta", 0.5)),
                hard_nominal_fraction=float(doc.get("hard_nominal_fraction", 0.25)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"malformed simulation config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "SimConfig":
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            doc = tomllib.loads(text.decode("utf-8"))
        else:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise DataError("config root must be a table/object")
        return cls.from_json(doc)


def default_config(
    seed: int = 0,
    samples_per_scenario: int = 600,
    nominal_count: int = 38400,
    clients_per_region: int = 2,
) -> SimConfig:
    """Benchmark-scale config: 24 scenarios, ~50k samples.

    The nominal block is sized so each scenario contributes hard nominals at
    about 0.8x its faulty count (0.30 * 38400 / 24 = 480). Fault regions of
    measure space then hold labeled and unknown rows in nearly equal measure,
    which keeps tree leaves there honestly contested, while the labeled side
    keeps a clear local majority so probabilistic classifiers still rank the
    true cause first.
    """
    return SimConfig(
        topology=default_topology(clients_per_region=clients_per_region),
        scenarios=default_scenarios(),
        samples_per_scenario=samples_per_scenario,
        nominal_count=nominal_count,
        hard_nominal_fraction=0.30,
        seed=seed,
    )


# -- dataset -----------------------------------------------------------------


TRAIN, TEST = 0, 1


@dataclass
class Dataset:
    """Column-oriented sample store; one row per observation."""

    schema: FeatureSchema
    X: np.ndarray  # (n, m) float64, raw measure units
    present: np.ndarray  # (n, l) bool
    service_ids: np.ndarray  # (n,) object
    client_regions: np.ndarray  # (n,) object
    scenario_ids: np.ndarray  # (n,) object, "" for plain nominal rows
    qoe_faulty: np.ndarray  # (n,) bool
    truth_cause: np.ndarray  # (n,) int32, -1 when not faulty
    split: np.ndarray  # (n,) uint8, 0 train / 1 test
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.X.shape[0]
        shapes = [
            self.present.shape[0],
            self.service_ids.shape[0],
            self.client_regions.shape[0],
            self.scenario_ids.shape[0],
            self.qoe_faulty.shape[0],
            self.truth_cause.shape[0],
            self.split.shape[0],
        ]
        if any(s != n for s in shapes):
            raise DataError("dataset columns have inconsistent lengths")
        if self.X.shape[1] != self.schema.num_features:
            raise DataError("dataset width does not match schema")
        if bool(np.any(self.qoe_faulty & (self.truth_cause < 0))):
            raise DataError("faulty samples must carry a truth cause")

    def __len__(self) -> int:
        return self.X.shape[0]

    def sample(self, i: int) -> Sample:
        cause = int(self.truth_cause[i])
        return Sample(
            x=self.X[i].copy(),
            present_landmarks=self.present[i].copy(),
            service_id=str(self.service_ids[i]),
            qoe_faulty=bool(self.qoe_faulty[i]),
            truth_cause=cause if cause >= 0 else None,
            truth_family=self.schema.family_of(cause) if cause >= 0 else None,
        )

    def coarse_labels(self) -> np.ndarray:
        """Family index per row: 0 (nominal) unless the QoE flag is set."""
        fam_to_idx = {f: i for i, f in enumerate(COARSE_FAMILIES)}
        family_idx = np.array(
            [fam_to_idx[f] for f in self.schema.feature_families()], dtype=np.int64
        )
        labels = np.zeros(len(self), dtype=np.int64)
        faulty = self.qoe_faulty
        labels[faulty] = family_idx[self.truth_cause[faulty]]
        return labels

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            schema=self.schema,
            X=self.X[mask],
            present=self.present[mask],
            service_ids=self.service_ids[mask],
            client_regions=self.client_regions[mask],
            scenario_ids=self.scenario_ids[mask],
            qoe_faulty=self.qoe_faulty[mask],
            truth_cause=self.truth_cause[mask],
            split=self.split[mask],
            meta=dict(self.meta),
        )

    def train_view(self) -> "Dataset":
        return self.subset(self.split == TRAIN)

    def test_view(self) -> "Dataset":
        return self.subset(self.split == TEST)

    def restrict_landmarks(self, landmark_ids) -> "Dataset":
        """Mark every landmark outside the given set absent (features kept)."""
        keep = np.zeros(self.schema.num_landmarks, dtype=bool)
        for lid in landmark_ids:
            keep[self.schema.landmark_index(lid)] = True
        out = self.subset(np.ones(len(self), dtype=bool))
        out.present = self.present & keep
        return out

    def feature_mask(self) -> np.ndarray:
        """(n, m) bool: which feature values a consumer may read."""
        landmark_part = np.repeat(self.present, KINDS_PER_LANDMARK, axis=1)
        local_part = np.ones((len(self), len(LOCAL_FEATURES)), dtype=bool)
        return np.concatenate([landmark_part, local_part], axis=1)

    def features_zero_filled(self) -> np.ndarray:
        """Feature matrix with absent landmark features forced to 0.0."""
        return np.where(self.feature_mask(), self.X, 0.0)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        schema_doc = self.schema.to_json()
        header = {
            "format": "landmark-rca-dataset",
            "version": 1,
            "schema": schema_doc,
            "meta": self.meta,
        }
        names = [self.schema.feature_name(j) for j in range(self.schema.num_features)]
        columns = [
            "split",
            "scenario",
            "service",
            "client_region",
            "qoe_faulty",
            "truth_cause",
            "present",
        ] + names
        with open(path, "w", newline="") as fh:
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
            fh.write(",".join(columns))
            fh.write("\n")
            for i in range(len(self)):
                cause = int(self.truth_cause[i])
                row = [
                    "test" if self.split[i] == TEST else "train",
                    str(self.scenario_ids[i]),
                    str(self.service_ids[i]),
                    str(self.client_regions[i]),
                    "1" if self.qoe_faulty[i] else "0",
                    str(cause) if cause >= 0 else "",
                    "".join("1" if p else "0" for p in self.present[i]),
                ]
                row.extend(repr(float(v)) for v in self.X[i])
                fh.write(",".join(row))
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "r", newline="") as fh:
            first = fh.readline()
            try:
                header = json.loads(first)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: missing dataset header: {exc}") from exc
            if header.get("format") != "landmark-rca-dataset":
                raise DataError(f"{path}: not a dataset file")
            if header.get("version") != 1:
                raise DataError(f"{path}: unsupported dataset version")
            schema = FeatureSchema.from_json(header["schema"])
            m = schema.num_features
            ell = schema.num_landmarks
            fh.readline()  # column header, fixed by the writer
            splits, scenarios, services, regions = [], [], [], []
            qoes, causes, presents, rows = [], [], [], []
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 7 + m:
                    raise DataError(f"{path}: malformed row with {len(parts)} fields")
                splits.append(TEST if parts[0] == "test" else TRAIN)
                scenarios.append(parts[1])
                services.append(parts[2])
                regions.append(parts[3])
                qoes.append(parts[4] == "1")
                causes.append(int(parts[5]) if parts[5] else -1)
                if len(parts[6]) != ell:
                    raise DataError(f"{path}: present mask has wrong length")
                presents.append([ch == "1" for ch in parts[6]])
                rows.append([float(v) for v in parts[7:]])
        n = len(rows)
        return cls(
            schema=schema,
            X=np.array(rows, dtype=np.float64).reshape(n, m),
            present=np.array(presents, dtype=bool).reshape(n, ell),
            service_ids=np.array(services, dtype=object),
            client_regions=np.array(regions, dtype=object),
            scenario_ids=np.array(scenarios, dtype=object),
            qoe_faulty=np.array(qoes, dtype=bool),
            truth_cause=np.array(causes, dtype=np.int32),
            split=np.array(splits, dtype=np.uint8),
            meta=header.get("meta", {}),
        )


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def _qoe_tables(config: SimConfig):
    """(base, per-scenario faulty flags) load-time tables over (client, service)."""
    topo = config.topology
    nc, ns = len(topo.clients), len(topo.services)
    base = np.empty((nc, ns))
    for ci in range(nc):
        for si, service in enumerate(topo.services):
            base[ci, si] = load_time(topo, service, ci, ())
    faulty = np.zeros((len(config.scenarios), nc, ns), dtype=bool)
    for ki, sc in enumerate(config.scenarios):
        for ci in range(nc):
            for si, service in enumerate(topo.services):
                t = load_time(topo, service, ci, (sc,))
                faulty[ki, ci, si] = t > (1.0 + config.qoe_delta) * base[ci, si]
    return base, faulty


def generate_dataset(config: SimConfig) -> Dataset:
    """Emit the labeled sample set for a config; pure function of the config."""
    topo = config.topology
    schema = topo.schema()
    if not config.scenarios and config.nominal_count == 0:
        raise DataError("config generates an empty dataset")
    if config.samples_per_scenario > 0 and not topo.services:
        raise DataError("faulty samples need services to measure QoE against")
    n_clients = len(topo.clients)
    if n_clients == 0:
        raise DataError("topology has no clients")

    # Per scenario: clients drawn uniformly among those with at least one
    # qualifying service, then a service uniformly among that client's.
    # Client-uniform draws keep the fault rows' client mix identical to the
    # nominal rows', so the two populations differ only on fault features.
    _, faulty_table = _qoe_tables(config)
    faulty_clients: list[np.ndarray] = []
    nominal_clients: list[np.ndarray] = []
    services_of: list[dict[tuple[int, bool], np.ndarray]] = []
    for ki, sc in enumerate(config.scenarios):
        if sc.family in _LOCAL_FAMILIES and sc.location != "local":
            idx = np.array(topo.clients_in(sc.location), dtype=np.int64)
        else:
            idx = np.arange(n_clients, dtype=np.int64)
        table = faulty_table[ki, idx, :]
        if config.samples_per_scenario > 0 and not table.any():
            raise DataError(
                f"scenario {sc.scenario_id!r} cannot degrade QoE in this topology"
            )
        faulty_clients.append(idx[table.any(axis=1)])
        nominal_clients.append(idx[(~table).any(axis=1)])
        by_client: dict[tuple[int, bool], np.ndarray] = {}
        for pos, ci in enumerate(idx):
            by_client[(int(ci), True)] = np.flatnonzero(table[pos])
            by_client[(int(ci), False)] = np.flatnonzero(~table[pos])
        services_of.append(by_client)

    total = config.nominal_count + config.samples_per_scenario * len(config.scenarios)
    m, ell = schema.num_features, schema.num_landmarks
    n_services = len(topo.services)
    X = np.empty((total, m))
    present = np.ones((total, ell), dtype=bool)
    service_ids = np.empty(total, dtype=object)
    client_regions = np.empty(total, dtype=object)
    scenario_ids = np.empty(total, dtype=object)
    qoe = np.zeros(total, dtype=bool)
    causes = np.full(total, -1, dtype=np.int32)

    for i in range(total):
        rng = _sample_rng(config.seed, i)
        if i < config.nominal_count:
            scenario_idx = -1
            want_faulty = False
            if config.scenarios and config.hard_nominal_fraction > 0:
                if rng.random() < config.hard_nominal_fraction:
                    scenario_idx = int(rng.integers(len(config.scenarios)))
                    if nominal_clients[scenario_idx].size == 0:
                        scenario_idx = -1
        else:
            scenario_idx = (i - config.nominal_count) // config.samples_per_scenario
            want_faulty = True

        if scenario_idx < 0:
            ci = int(rng.integers(n_clients))
            si = int(rng.integers(n_services)) if n_services else 0
            scenario = None
        else:
            scenario = config.scenarios[scenario_idx]
            pool = faulty_clients[scenario_idx] if want_faulty else nominal_clients[scenario_idx]
            ci = int(pool[rng.integers(pool.shape[0])])
            candidates = services_of[scenario_idx][(ci, want_faulty)]
            si = int(candidates[rng.integers(candidates.shape[0])])

        client = topo.clients[ci]
        measures = np.empty((ell, KINDS_PER_LANDMARK))
        for lam in range(ell):
            measures[lam] = baseline_measures(topo, ci, lam, rng, config.noise)
        local_values = _draw_locals(client, rng, config.noise)
        if scenario is not None:
            measures, local_values = apply_fault(
                scenario, topo, client, measures, local_values, rng
            )
            scenario_ids[i] = scenario.scenario_id
            if want_faulty:
                qoe[i] = True
                causes[i] = scenario_cause(scenario, client, topo, schema)
        else:
            scenario_ids[i] = ""
        X[i, : ell * KINDS_PER_LANDMARK] = measures.reshape(-1)
        X[i, ell * KINDS_PER_LANDMARK :] = local_values
        service_ids[i] = topo.services[si].service_id if n_services else ""
        client_regions[i] = client.region

    split = _stratified_split(scenario_ids, qoe)
    meta = {"config_digest": config.digest(), "seed": config.seed}
    return Dataset(
        schema=schema,
        X=X,
        present=present,
        service_ids=service_ids,
        client_regions=client_regions,
        scenario_ids=scenario_ids,
        qoe_faulty=qoe,
        truth_cause=causes,
        split=split,
        meta=meta,
    )


def _stratified_split(scenario_ids: np.ndarray, qoe: np.ndarray) -> np.ndarray:
    """Deterministic 80/20 split inside each (scenario, faulty) stratum."""
    n = scenario_ids.shape[0]
    split = np.zeros(n, dtype=np.uint8)
    keys: dict[tuple[str, bool], int] = {}
    for i in range(n):
        key = (str(scenario_ids[i]), bool(qoe[i]))
        pos = keys.get(key, 0)
        if pos % 5 == 4:
            split[i] = TEST
        keys[key] = pos + 1
    return split
