"""Domain types for the edge cluster: nodes, service instances, requests,
placements, allocations, and the latency/feasibility bookkeeping they imply.

Units: GPU work in FLOPs, GPU rates in FLOPs/s; CPU work in core-seconds,
CPU rates in cores; memory in GB; all timestamps are float64 seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Category(Enum):
    """Service instance categories hosted on the cluster."""

    DU = "du"
    CU_UP = "cu_up"
    LARGE_AI = "large_ai"
    SMALL_AI = "small_ai"


class RequestClass(Enum):
    """Request classes with distinct deadline semantics."""

    LARGE_AI = "large_ai"
    SMALL_AI = "small_ai"
    RAN_URLLC = "ran_urllc"
    RAN_EMBB = "ran_embb"

    @property
    def is_ai(self) -> bool:
        return self in (RequestClass.LARGE_AI, RequestClass.SMALL_AI)

    @property
    def is_ran(self) -> bool:
        return not self.is_ai


AI_CATEGORIES = (Category.LARGE_AI, Category.SMALL_AI)
RAN_CATEGORIES = (Category.DU, Category.CU_UP)


class ModelError(Exception):
    """Invalid domain object or inconsistent state."""


class PlacementInconsistency(ModelError):
    """An operation needed an instance that is not resident anywhere."""


@dataclass(frozen=True)
class NodeSpec:
    """Static capacities of one compute node."""

    node_id: int
    gpu_capacity: float  # FLOPs/s
    cpu_capacity: float  # cores
    vram_capacity: float  # GB
    label: str = ""

    def __post_init__(self):
        if self.gpu_capacity <= 0 or self.cpu_capacity <= 0 or self.vram_capacity <= 0:
            raise ModelError(f"node {self.node_id}: capacities must be strictly positive")


@dataclass(frozen=True)
class InstanceSpec:
    """One hosted service instance (RAN function or AI service)."""

    instance_id: int
    category: Category
    weight_footprint: float  # GB of persistent weights / libraries
    reconfig_delay: float  # seconds of unavailability after a migration
    cell_id: int | None = None  # required for DU / CU-UP, absent for AI

    def __post_init__(self):
        if self.reconfig_delay <= 0:
            raise ModelError(f"instance {self.instance_id}: reconfig delay must be > 0")
        if self.category is Category.CU_UP and self.weight_footprint != 0.0:
            raise ModelError("CU-UP instances run on the CPU and carry no weight footprint")
        if self.weight_footprint < 0:
            raise ModelError("weight footprint must be >= 0")
        is_ran = self.category in RAN_CATEGORIES
        if is_ran and self.cell_id is None:
            raise ModelError(f"instance {self.instance_id}: RAN functions need a cell_id")
        if not is_ran and self.cell_id is not None:
            raise ModelError(f"instance {self.instance_id}: AI services carry no cell_id")

    @property
    def dominant_resource(self) -> str:
        """'gpu' or 'cpu': the resource this category is bound by."""
        return "cpu" if self.category is Category.CU_UP else "gpu"


@dataclass(frozen=True)
class Cluster:
    """Node and instance inventory with identity invariants enforced."""

    nodes: tuple[NodeSpec, ...]
    instances: tuple[InstanceSpec, ...]

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if sorted(ids) != list(range(len(self.nodes))):
            raise ModelError("node ids must be unique and dense in [0, |N|)")
        iids = [s.instance_id for s in self.instances]
        if len(set(iids)) != len(iids):
            raise ModelError("instance ids must be unique")
        per_cell: dict[int, list[Category]] = {}
        for s in self.instances:
            if s.cell_id is not None:
                per_cell.setdefault(s.cell_id, []).append(s.category)
        for cell, cats in per_cell.items():
            if cats.count(Category.DU) != 1 or cats.count(Category.CU_UP) != 1:
                raise ModelError(f"cell {cell}: needs exactly one DU and one CU-UP")

    def node(self, node_id: int) -> NodeSpec:
        return self.nodes[node_id]

    def instance(self, instance_id: int) -> InstanceSpec:
        return self._by_id[instance_id]

    @property
    def _by_id(self) -> dict[int, InstanceSpec]:
        return {s.instance_id: s for s in self.instances}

    def du_of_cell(self, cell_id: int) -> InstanceSpec:
        return self._ran_of(cell_id, Category.DU)

    def cu_up_of_cell(self, cell_id: int) -> InstanceSpec:
        return self._ran_of(cell_id, Category.CU_UP)

    def _ran_of(self, cell_id: int, cat: Category) -> InstanceSpec:
        for s in self.instances:
            if s.cell_id == cell_id and s.category is cat:
                return s
        raise ModelError(f"cell {cell_id}: no {cat.value} instance")


@dataclass(frozen=True)
class Stage:
    """Per-instance work of one request stage."""

    instance_id: int
    gpu_work: float  # FLOPs
    cpu_work: float  # core-seconds


@dataclass(frozen=True)
class Request:
    """One AI-service or RAN-only request."""

    request_id: int
    request_class: RequestClass
    arrival: float
    deadline_budget: float  # seconds from arrival
    cell_id: int
    stages: tuple[Stage, ...]
    target_service: int | None = None  # instance id, AI classes only
    kv_cache: float = 0.0  # GB held while in service, AI only

    def __post_init__(self):
        if self.deadline_budget <= 0:
            raise ModelError(f"request {self.request_id}: deadline must be > 0")
        if self.kv_cache > 0 and not self.request_class.is_ai:
            raise ModelError("only AI requests hold KV cache")
        if self.request_class.is_ai and self.target_service is None:
            raise ModelError("AI requests must name their target service")
        if not self.stages:
            raise ModelError("request needs at least one stage")

    @property
    def deadline(self) -> float:
        return self.arrival + self.deadline_budget


class Placement:
    """Residency of every instance plus active reconfiguration windows.

    Each instance is resident on exactly one node at all times; an instance
    inside its reconfiguration window is resident at the destination but
    unavailable for service.
    """

    def __init__(self, host_of: dict[int, int]):
        self.host_of: dict[int, int] = dict(host_of)
        self.reconfig_until: dict[int, float] = {}

    def copy(self) -> "Placement":
        p = Placement(self.host_of)
        p.reconfig_until = dict(self.reconfig_until)
        return p

    def host(self, instance_id: int) -> int:
        try:
            return self.host_of[instance_id]
        except KeyError:
            raise PlacementInconsistency(f"instance {instance_id} is not resident") from None

    def residents(self, node_id: int) -> list[int]:
        return sorted(i for i, n in self.host_of.items() if n == node_id)

    def is_reconfiguring(self, instance_id: int, now: float) -> bool:
        return self.reconfig_until.get(instance_id, -1.0) > now

    def move(self, instance_id: int, to_node: int, until: float) -> None:
        self.host_of[instance_id] = to_node
        self.reconfig_until[instance_id] = until

    def residency_matrix(self, n_nodes: int, instance_ids: list[int]) -> list[list[bool]]:
        return [[self.host_of.get(i) == n for i in instance_ids] for n in range(n_nodes)]


@dataclass
class AllocationVector:
    """Per-(node, instance) GPU and CPU rates for one allocation interval."""

    gpu_alloc: dict[tuple[int, int], float] = field(default_factory=dict)
    cpu_alloc: dict[tuple[int, int], float] = field(default_factory=dict)

    def gpu(self, node_id: int, instance_id: int) -> float:
        return self.gpu_alloc.get((node_id, instance_id), 0.0)

    def cpu(self, node_id: int, instance_id: int) -> float:
        return self.cpu_alloc.get((node_id, instance_id), 0.0)


@dataclass(frozen=True)
class CompletionRecord:
    """Outcome of one finished request."""

    request_id: int
    request_class: RequestClass
    arrival: float
    end_to_end_latency: float
    transport_delay: float
    met_deadline: bool

    def __post_init__(self):
        if self.end_to_end_latency < self.transport_delay:
            raise ModelError("end-to-end latency cannot undercut transport delay")


def compute_transport_delay(
    request: Request,
    placement: Placement,
    cluster: Cluster,
    per_hop: float,
    ran_packet_delay: float,
) -> float:
    """Transport delay of a request under a given placement.

    RAN-only path is DU -> CU-UP: one hop iff they sit on distinct nodes.
    AI path is serving-cell ingress -> AI node: one hop iff the AI instance
    is off the serving cell's DU node; AI requests additionally pay the
    fixed RAN-stage packet-processing delay.
    """
    du = cluster.du_of_cell(request.cell_id)
    if request.request_class.is_ran:
        cu = cluster.cu_up_of_cell(request.cell_id)
        hops = 1 if placement.host(du.instance_id) != placement.host(cu.instance_id) else 0
        return per_hop * hops
    ai_node = placement.host(request.target_service)
    hops = 1 if ai_node != placement.host(du.instance_id) else 0
    return per_hop * hops + ran_packet_delay


def check_memory_feasible(
    placement: Placement,
    active_kv: dict[int, float],
    nodes: list[NodeSpec],
    weights: dict[int, float],
) -> dict[int, bool]:
    """Per-node GPU-memory feasibility: resident weights + in-service KV <= VRAM.

    The boundary is inclusive; `weights` maps instance id -> footprint GB.
    """
    out = {}
    for n in nodes:
        resident = sum(weights[i] for i in placement.residents(n.node_id))
        out[n.node_id] = resident + active_kv.get(n.node_id, 0.0) <= n.vram_capacity
    return out
