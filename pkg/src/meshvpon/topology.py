"""MESH-PON topology, vPON slices and PLOAM slice reconfiguration.

Every node hangs off a loopback splitter, so any two endpoints reach each
other through it without passing the central office.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import networkx as nx

from .errors import TopologyError

logger = logging.getLogger(__name__)

PROPAGATION_NS_PER_KM = 4_500
CONTROL_SLICE = "control"
MEC_SLICE = "vpon-mec1"


class NodeKind(str, Enum):
    RU_ONU = "ru-onu"
    MEC_OLT = "mec-olt"
    MEC_ONU = "mec-onu"
    CO_OLT = "co-olt"
    SPLITTER = "splitter"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}-{self.index}"

    @property
    def is_onu(self) -> bool:
        return self.kind in (NodeKind.RU_ONU, NodeKind.MEC_ONU)

    @property
    def is_olt(self) -> bool:
        return self.kind in (NodeKind.MEC_OLT, NodeKind.CO_OLT)


CO_OLT = NodeId(NodeKind.CO_OLT, 0)
SPLITTER = NodeId(NodeKind.SPLITTER, 0)
MEC1_OLT = NodeId(NodeKind.MEC_OLT, 1)
MEC1_ONU = NodeId(NodeKind.MEC_ONU, 1)
MEC2_OLT = NodeId(NodeKind.MEC_OLT, 2)
MEC2_ONU = NodeId(NodeKind.MEC_ONU, 2)


def ru_onu(index: int) -> NodeId:
    return NodeId(NodeKind.RU_ONU, index)


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    distance_km: float

    def __post_init__(self):
        if not self.distance_km > 0:
            raise TopologyError(
                f"link {self.a}-{self.b} has non-positive length {self.distance_km}"
            )


@dataclass
class VponSlice:
    name: str
    olt: NodeId
    members: set[NodeId] = field(default_factory=set)
    wavelength: str = ""
    uplink_capacity_bps: int = 50_000_000_000

    def __post_init__(self):
        if not self.olt.is_olt:
            raise TopologyError(f"slice {self.name} must terminate at an OLT, not {self.olt}")


class ControlKind(str, Enum):
    SLICE_ADD = "SLICE_ADD"
    SLICE_REMOVE = "SLICE_REMOVE"
    TUNE_ACK = "TUNE_ACK"


@dataclass(frozen=True)
class ControlMessage:
    kind: ControlKind
    source: NodeId
    target: NodeId
    slice_name: str
    sent_at: int
    delivered_at: int


@dataclass(frozen=True)
class Reconfiguration:
    """Timed PLOAM transcript moving one ONU between slices."""

    onu: NodeId
    from_slice: str
    to_slice: str
    messages: tuple[ControlMessage, ...]
    retune_start: int
    retune_end: int

    @property
    def completes_at(self) -> int:
        """Membership changes when the TUNE_ACK is delivered."""
        return self.messages[-1].delivered_at


class Topology:
    """Node graph with fiber lengths plus the slice table."""

    def __init__(self, graph: nx.Graph, propagation_ns_per_km: int = PROPAGATION_NS_PER_KM):
        if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
            raise TopologyError("topology is disconnected")
        self.graph = graph
        self.propagation_ns_per_km = propagation_ns_per_km
        self.slices: dict[str, VponSlice] = {}
        self._delay_cache: dict[tuple[NodeId, NodeId], int] = {}

    @classmethod
    def from_links(
        cls, links: list[Link], propagation_ns_per_km: int = PROPAGATION_NS_PER_KM
    ) -> "Topology":
        graph = nx.Graph()
        for link in links:
            graph.add_edge(link.a, link.b, km=link.distance_km)
        return cls(graph, propagation_ns_per_km)

    @property
    def ru_onus(self) -> list[NodeId]:
        return sorted(n for n in self.graph.nodes if n.kind is NodeKind.RU_ONU)

    def distance_km(self, a: NodeId, b: NodeId) -> float:
        try:
            return nx.shortest_path_length(self.graph, a, b, weight="km")
        except (nx.NetworkXNoPath, nx.NodeNotFound) as e:
            raise TopologyError(f"no path between {a} and {b}") from e

    def propagation_delay(self, a: NodeId, b: NodeId) -> int:
        """One-way delay in ns along the shortest fiber path."""
        key = (a, b) if a <= b else (b, a)
        delay = self._delay_cache.get(key)
        if delay is None:
            delay = int(round(self.distance_km(a, b) * self.propagation_ns_per_km))
            self._delay_cache[key] = delay
        return delay

    # --- slices ---

    def add_slice(self, vpon: VponSlice) -> None:
        for member in vpon.members:
            owner = self.slice_of(member)
            if owner is not None:
                raise TopologyError(f"{member} already belongs to slice {owner}")
        self.slices[vpon.name] = vpon

    def slice_of(self, onu: NodeId) -> str | None:
        for name, vpon in self.slices.items():
            if onu in vpon.members:
                return name
        return None

    def members(self, slice_name: str) -> set[NodeId]:
        return set(self.slices[slice_name].members)

    def memberships_disjoint(self) -> bool:
        seen: set[NodeId] = set()
        for vpon in self.slices.values():
            if seen & vpon.members:
                return False
            seen |= vpon.members
        return True

    def reconfigure_slice(
        self, slice_name: str, add: NodeId, at: int = 0, retune_ns: int = 35_000
    ) -> Reconfiguration:
        """Plan moving an ONU from the control slice into ``slice_name``.

        The CO OLT sends SLICE_ADD to the target slice's OLT and to the ONU;
        the ONU retunes once told, then acknowledges to the new OLT. Nothing
        changes until :meth:`commit` is called with the result.
        """
        target = self.slices.get(slice_name)
        if target is None:
            raise TopologyError(f"unknown slice {slice_name}")
        current = self.slice_of(add)
        if current != CONTROL_SLICE:
            raise TopologyError(f"{add} is in slice {current}, not the control slice")
        return self._transcript(
            ControlKind.SLICE_ADD, add, CONTROL_SLICE, slice_name, at, retune_ns
        )

    def remove_from_slice(
        self, slice_name: str, onu: NodeId, at: int = 0, retune_ns: int = 35_000
    ) -> Reconfiguration:
        """Plan returning an ONU from ``slice_name`` to the control slice."""
        if self.slice_of(onu) != slice_name:
            raise TopologyError(f"{onu} is not a member of slice {slice_name}")
        return self._transcript(
            ControlKind.SLICE_REMOVE, onu, slice_name, CONTROL_SLICE, at, retune_ns
        )

    def _transcript(
        self,
        kind: ControlKind,
        onu: NodeId,
        from_slice: str,
        to_slice: str,
        at: int,
        retune_ns: int,
    ) -> Reconfiguration:
        co = self.slices[CONTROL_SLICE].olt
        peer_olt = self.slices[to_slice if kind is ControlKind.SLICE_ADD else from_slice].olt
        new_olt = self.slices[to_slice].olt

        def send(k: ControlKind, src: NodeId, dst: NodeId, t: int, name: str) -> ControlMessage:
            return ControlMessage(
                kind=k, source=src, target=dst, slice_name=name,
                sent_at=t, delivered_at=t + self.propagation_delay(src, dst),
            )

        to_olt = send(kind, co, peer_olt, at, to_slice)
        to_onu = send(kind, co, onu, at, to_slice)
        retune_start = to_onu.delivered_at
        retune_end = retune_start + retune_ns
        ack = send(ControlKind.TUNE_ACK, onu, new_olt, retune_end, to_slice)
        return Reconfiguration(
            onu=onu,
            from_slice=from_slice,
            to_slice=to_slice,
            messages=(to_olt, to_onu, ack),
            retune_start=retune_start,
            retune_end=retune_end,
        )

    def commit(self, change: Reconfiguration) -> None:
        """Apply a transcript once its TUNE_ACK has been delivered."""
        source = self.slices[change.from_slice]
        if change.onu not in source.members:
            raise TopologyError(f"{change.onu} left slice {change.from_slice} already")
        source.members.discard(change.onu)
        self.slices[change.to_slice].members.add(change.onu)
        logger.info("%s moved from %s to %s", change.onu, change.from_slice, change.to_slice)


@dataclass(frozen=True)
class TopologySpec:
    """End-to-end path lengths; per-segment lengths are derived around the splitter."""

    n_rus: int = 16
    ru_mec_km: float = 12.0
    mec_mec_km: float = 20.0
    mec_co_km: float = 50.0
    propagation_ns_per_km: int = PROPAGATION_NS_PER_KM


def build_topology(spec: TopologySpec) -> Topology:
    """Build the default MESH-PON: RU ONUs, two MEC sites and the CO on one splitter.

    Both MEC sites sit half the MEC-MEC path away from the splitter. The
    MEC-1 OLT starts with every RU ONU in its slice, while the MEC ONUs
    start in the CO control slice.
    """
    mec_leg = spec.mec_mec_km / 2
    co_leg = spec.mec_co_km - mec_leg
    ru_leg = spec.ru_mec_km - mec_leg
    if co_leg <= 0 or ru_leg <= 0:
        raise TopologyError(
            "MEC-CO and RU-MEC paths must be longer than half the MEC-MEC path "
            f"(got {spec.mec_co_km} km, {spec.ru_mec_km} km vs {spec.mec_mec_km} km)"
        )

    links = [
        Link(CO_OLT, SPLITTER, co_leg),
        Link(MEC1_OLT, SPLITTER, mec_leg),
        Link(MEC1_ONU, SPLITTER, mec_leg),
        Link(MEC2_OLT, SPLITTER, mec_leg),
        Link(MEC2_ONU, SPLITTER, mec_leg),
    ]
    links.extend(Link(ru_onu(i), SPLITTER, ru_leg) for i in range(spec.n_rus))
    topology = Topology.from_links(links, spec.propagation_ns_per_km)

    topology.add_slice(VponSlice(
        name=CONTROL_SLICE, olt=CO_OLT, members={MEC1_ONU, MEC2_ONU}, wavelength="ctrl",
    ))
    topology.add_slice(VponSlice(
        name=MEC_SLICE, olt=MEC1_OLT, members={ru_onu(i) for i in range(spec.n_rus)},
        wavelength="l1",
    ))
    logger.debug(
        "Topology: MEC-MEC %d ns, MEC-CO %d ns, RU-MEC %d ns",
        topology.propagation_delay(MEC1_OLT, MEC2_ONU),
        topology.propagation_delay(MEC1_ONU, CO_OLT),
        topology.propagation_delay(ru_onu(0), MEC1_OLT) if spec.n_rus else 0,
    )
    return topology
