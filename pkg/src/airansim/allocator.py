"""Fast-timescale per-node GPU/CPU allocation.

Deadline-aware allocation: hard RAN floors are reserved first, then the
residual capacity is distributed across resident instances. The default
rule allocates proportional to sqrt(urgency * residual work) with
active-set clipping against the floors; baseline rules (equal share,
proportional bids, max-weight, alpha class split) reuse the same clipping
loop with different weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .model import Category, InstanceSpec

DEFAULT_EPSILON = 1e-6  # urgency clamp, seconds


class InfeasibleFloor(Exception):
    """A pending RAN request has non-positive slack after overheads."""

    def __init__(self, request_id: int, slack: float):
        self.request_id = request_id
        self.slack = slack
        super().__init__(f"request {request_id}: slack after overheads {slack:.3e} s <= 0")


class FloorOverflow(Exception):
    """Sum of RAN floors exceeds the node capacity."""

    def __init__(self, total_floor: float, capacity: float):
        self.total_floor = total_floor
        self.capacity = capacity
        super().__init__(f"floors {total_floor:.3e} exceed capacity {capacity:.3e}")


@dataclass
class InstanceLoad:
    """Aggregated demand of one resident instance at allocation time."""

    instance_id: int
    resid_gpu_work: float = 0.0  # FLOPs
    resid_cpu_work: float = 0.0  # core-seconds
    urgency: float = 0.0  # 1/seconds
    gpu_floor: float = 0.0
    cpu_floor: float = 0.0

    def weight(self, resource: str) -> float:
        psi = self.resid_gpu_work if resource == "gpu" else self.resid_cpu_work
        return self.urgency * psi

    def floor(self, resource: str) -> float:
        return self.gpu_floor if resource == "gpu" else self.cpu_floor


def aggregate_load(
    active: Iterable[tuple[float, float, float, float]],
    now: float,
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[float, float, float]:
    """Sum residual work and deadline urgency over one instance's active requests.

    `active` yields (arrival, deadline, resid_gpu, resid_cpu) per request;
    returns (psi_gpu, psi_cpu, omega). A request past its deadline contributes
    1/epsilon, which keeps the weight finite.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    psi_g = psi_c = omega = 0.0
    for _arrival, deadline, resid_g, resid_c in active:
        psi_g += resid_g
        psi_c += resid_c
        omega += 1.0 / max(deadline - now, epsilon)
    return psi_g, psi_c, omega


def compute_ran_floor(
    pending: Iterable[tuple[int, float, float]],
    instance: InstanceSpec,
    now: float,
    per_hop: float,
    downstream_est: float,
) -> float:
    """Capacity floor for a DU (GPU) or CU-UP (CPU) instance.

    `pending` yields (request_id, deadline, resid_dominant_work) for the
    RAN-only requests currently assigned to the instance. The floor is the
    aggregate dominant-resource work divided by the tightest remaining slack
    after transport and the estimated downstream stage time; an empty pending
    set gives a zero floor.
    """
    if instance.category not in (Category.DU, Category.CU_UP):
        raise ValueError("floors apply to RAN functions only")
    if instance.category is Category.CU_UP and downstream_est != 0.0:
        raise ValueError("CU-UP floors take no downstream estimate")
    psi = 0.0
    min_slack = math.inf
    min_req = None
    for request_id, deadline, resid in pending:
        psi += resid
        slack = deadline - now - per_hop - downstream_est
        if slack < min_slack:
            min_slack = slack
            min_req = request_id
    if min_req is None:
        return 0.0
    if min_slack <= 0.0:
        raise InfeasibleFloor(min_req, min_slack)
    return psi / min_slack


def _clip_allocate(
    loads: list[InstanceLoad],
    capacity: float,
    resource: str,
    weight_of: Callable[[InstanceLoad], float],
) -> dict[int, float]:
    """Floor-respecting distribution of `capacity` with active-set clipping.

    Instances whose proportional share of the remaining capacity falls below
    their floor are fixed at the floor and removed from the proportional pool;
    the loop repeats until no new instance clips. Zero-weight instances sit at
    their floor (or zero).
    """
    total_floor = sum(ld.floor(resource) for ld in loads)
    if total_floor > capacity * (1.0 + 1e-12):
        raise FloorOverflow(total_floor, capacity)

    alloc = {ld.instance_id: 0.0 for ld in loads}
    bound = [ld for ld in loads if weight_of(ld) <= 0.0]
    free = [ld for ld in loads if weight_of(ld) > 0.0]

    while True:
        residual = capacity - sum(ld.floor(resource) for ld in bound)
        denom = sum(weight_of(ld) for ld in free)
        if denom <= 0.0:
            break  # only the required floor allocations are applied
        clipped = {ld.instance_id for ld in free if residual * weight_of(ld) / denom < ld.floor(resource)}
        if not clipped:
            for ld in free:
                alloc[ld.instance_id] = residual * weight_of(ld) / denom
            break
        bound.extend(ld for ld in free if ld.instance_id in clipped)
        free = [ld for ld in free if ld.instance_id not in clipped]

    for ld in bound:
        alloc[ld.instance_id] = ld.floor(resource)
    return alloc


def solve_resource(
    loads: list[InstanceLoad],
    capacity: float,
    resource: str,
) -> dict[int, float]:
    """Closed-form deadline-weighted allocation of one resource on one node.

    Unclipped instances receive capacity proportional to
    sqrt(urgency * residual work); floor constraints are handled by
    active-set clipping. Raises FloorOverflow when the floors alone
    exceed capacity.
    """
    return _clip_allocate(loads, capacity, resource, lambda ld: math.sqrt(ld.weight(resource)))


def equal_share(loads: list[InstanceLoad], capacity: float, resource: str) -> dict[int, float]:
    """Residual capacity split equally among resident instances with work."""
    psi = lambda ld: ld.resid_gpu_work if resource == "gpu" else ld.resid_cpu_work
    return _clip_allocate(loads, capacity, resource, lambda ld: 1.0 if psi(ld) > 0 else 0.0)


def proportional_bids(loads: list[InstanceLoad], capacity: float, resource: str) -> dict[int, float]:
    """Market clearing: residual capacity proportional to urgency*work bids."""
    return _clip_allocate(loads, capacity, resource, lambda ld: ld.weight(resource))


def max_weight(loads: list[InstanceLoad], capacity: float, resource: str) -> dict[int, float]:
    """All residual capacity to the single max backlog*urgency instance."""
    best = None
    for ld in loads:
        w = ld.weight(resource)
        if w > 0 and (best is None or w > best[0] or (w == best[0] and ld.instance_id < best[1])):
            best = (w, ld.instance_id)
    winner = best[1] if best else None
    return _clip_allocate(loads, capacity, resource, lambda ld: 1.0 if ld.instance_id == winner else 0.0)


def alpha_split(
    loads: list[InstanceLoad],
    capacity: float,
    resource: str,
    alpha: float,
    category_of: dict[int, Category],
) -> dict[int, float]:
    """Scalar split of the residual between the RAN and AI instance pools.

    The RAN pool receives alpha of the post-floor residual and the AI pool
    the rest; a class alone on the node takes the full residual. Within each
    pool the sqrt rule applies.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    ran = [ld for ld in loads if category_of[ld.instance_id] in (Category.DU, Category.CU_UP)]
    ai = [ld for ld in loads if category_of[ld.instance_id] not in (Category.DU, Category.CU_UP)]

    def has_demand(pool):
        return any(ld.weight(resource) > 0 or ld.floor(resource) > 0 for ld in pool)

    total_floor = sum(ld.floor(resource) for ld in loads)
    if total_floor > capacity * (1.0 + 1e-12):
        raise FloorOverflow(total_floor, capacity)
    residual = capacity - total_floor
    if not has_demand(ran) or not has_demand(ai):
        share_ran, share_ai = residual, residual
    else:
        share_ran, share_ai = alpha * residual, (1.0 - alpha) * residual

    alloc: dict[int, float] = {}
    # each pool keeps its own floors and fills its share on top of them
    alloc.update(solve_resource(ran, share_ran + sum(ld.floor(resource) for ld in ran), resource))
    alloc.update(solve_resource(ai, share_ai + sum(ld.floor(resource) for ld in ai), resource))
    return alloc


@dataclass
class NodeAllocation:
    """Result of one per-node solve, with diagnostics for the event log."""

    gpu: dict[int, float] = field(default_factory=dict)
    cpu: dict[int, float] = field(default_factory=dict)
    gpu_floors_scaled: bool = False
    cpu_floors_scaled: bool = False


ResidualRule = Callable[[list[InstanceLoad], float, str], dict[int, float]]


def allocate_node(
    loads: list[InstanceLoad],
    gpu_capacity: float,
    cpu_capacity: float,
    rule: ResidualRule = solve_resource,
) -> NodeAllocation:
    """Solve the GPU and CPU sub-problems independently for one node.

    When the floors alone exceed a capacity, all floors on that resource are
    scaled by capacity/sum(floors) and the solve retried, so the simulation
    can continue through a RAN-infeasible interval (flagged in the result).
    """
    out = NodeAllocation()
    for resource, capacity in (("gpu", gpu_capacity), ("cpu", cpu_capacity)):
        try:
            alloc = rule(loads, capacity, resource)
            scaled = False
        except FloorOverflow as overflow:
            factor = capacity / overflow.total_floor
            shrunk = [
                InstanceLoad(
                    ld.instance_id,
                    ld.resid_gpu_work,
                    ld.resid_cpu_work,
                    ld.urgency,
                    ld.gpu_floor * (factor if resource == "gpu" else 1.0),
                    ld.cpu_floor * (factor if resource == "cpu" else 1.0),
                )
                for ld in loads
            ]
            alloc = rule(shrunk, capacity, resource)
            scaled = True
        if resource == "gpu":
            out.gpu, out.gpu_floors_scaled = alloc, scaled
        else:
            out.cpu, out.cpu_floors_scaled = alloc, scaled
    return out


class DownstreamEstimator:
    """EWMA of observed CU-UP stage residence time, one value per cell."""

    def __init__(self, initial: dict[int, float], smoothing: float = 0.2):
        self.value = dict(initial)
        self.smoothing = smoothing

    def observe(self, cell_id: int, observed: float) -> float:
        prior = self.value.get(cell_id, observed)
        updated = (1.0 - self.smoothing) * prior + self.smoothing * observed
        self.value[cell_id] = updated
        return updated

    def estimate(self, cell_id: int) -> float:
        return self.value.get(cell_id, 0.0)
