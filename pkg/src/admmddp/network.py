"""Neighborhood graph and simulated message passing.

All cross-agent data in the consensus solvers flows through
``Mailbox.exchange``, which implements synchronous barrier semantics:
the full batch of outgoing messages is validated against the graph,
then delivered sorted by sender id. Every delivery is appended to an
audit log so runs can prove that no message ever crossed a non-edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ProtocolViolationError(RuntimeError):
    """A payload was addressed along a non-edge."""


class MissingPayloadError(RuntimeError):
    """An expected sender delivered nothing (deadlock surrogate)."""


class Phase(Enum):
    """Communication phases, in their fixed per-iteration order."""

    WARMSTART = "warmstart"
    REFERENCE_SHARE = "reference_share"
    COPIES_TO_OWNER = "copies_to_owner"
    GLOBALS_TO_NEIGHBORS = "globals_to_neighbors"


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Time-invariant neighbor sets N_i (self included, canonical order:
    self first, then ascending id) and derived neighbor-of sets P_i."""

    neighbors: tuple          # N_i per agent
    neighbor_of: tuple        # P_i per agent

    @property
    def size(self) -> int:
        return len(self.neighbors)

    def validate(self):
        M = self.size
        for i, ns in enumerate(self.neighbors):
            if ns[0] != i:
                raise ValueError(f"agent {i} must lead its own neighbor set")
            if list(ns[1:]) != sorted(ns[1:]) or len(set(ns)) != len(ns):
                raise ValueError(f"neighbor set of agent {i} not canonical")
            if any(j < 0 or j >= M for j in ns):
                raise ValueError(f"neighbor id out of range for agent {i}")
        for i in range(M):
            expect = tuple([i] + sorted(j for j in range(M)
                                        if j != i and i in self.neighbors[j]))
            if self.neighbor_of[i] != expect:
                raise ValueError(f"neighbor-of set of agent {i} inconsistent")

    def is_edge(self, sender: int, receiver: int) -> bool:
        """Communication legality: exchanges run along N_i union P_i."""
        return (sender in self.neighbors[receiver]
                or sender in self.neighbor_of[receiver])


def build_graph(M: int | None = None, positions=None, radius: float | None = None,
                k_nearest: int | None = None, adjacency=None,
                all_neighbors: bool = False) -> NeighborhoodGraph:
    """Construct a neighborhood graph.

    Modes: explicit adjacency (taken verbatim, self-loops added);
    positional radius (j in N_i iff within radius), optionally truncated
    to the k nearest; plain k-nearest (|N_i| = k including self); or
    all-neighbors. Distance ties break by ascending agent id.
    """
    if adjacency is not None:
        adj = np.asarray(adjacency, dtype=bool)
        M = adj.shape[0]
        if M == 0:
            raise ValueError("empty agent set")
        neigh = [tuple([i] + sorted(j for j in range(M) if j != i and adj[i, j]))
                 for i in range(M)]
        return _finish(neigh)

    if all_neighbors:
        if not M:
            raise ValueError("empty agent set")
        return _finish([tuple([i] + [j for j in range(M) if j != i])
                        for i in range(M)])

    if positions is None:
        raise ValueError("positions required for radius / k-nearest modes")
    pos = np.asarray(positions, dtype=float)
    M = pos.shape[0]
    if M == 0:
        raise ValueError("empty agent set")
    if radius is None and k_nearest is None:
        raise ValueError("radius or k_nearest required")
    if radius is not None and radius <= 0:
        raise ValueError("radius must be positive")
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    neigh = []
    for i in range(M):
        others = [j for j in range(M) if j != i]
        if radius is not None:
            others = [j for j in others if d[i, j] <= radius]
        others.sort(key=lambda j: (d[i, j], j))
        if k_nearest is not None:
            others = others[:max(0, k_nearest - 1)]
        neigh.append(tuple([i] + sorted(others)))
    return _finish(neigh)


def _finish(neigh) -> NeighborhoodGraph:
    M = len(neigh)
    p = [tuple([i] + sorted(j for j in range(M) if j != i and i in neigh[j]))
         for i in range(M)]
    g = NeighborhoodGraph(tuple(neigh), tuple(p))
    g.validate()
    return g


@dataclass
class MessageRecord:
    iteration: int
    phase: str
    sender: int
    receiver: int
    kind: str
    nbytes: int


def _freeze(payload):
    """Snapshot a payload dict of arrays; receivers cannot mutate it."""
    out = {}
    nbytes = 0
    for key, val in payload.items():
        arr = np.array(val, dtype=float, copy=True)
        arr.flags.writeable = False
        out[key] = arr
        nbytes += arr.nbytes
    return out, nbytes


class Mailbox:
    """Barrier-synchronous message delivery along graph edges."""

    def __init__(self, graph: NeighborhoodGraph, audit: bool = True):
        self.graph = graph
        self.audit = audit
        self.log: list[MessageRecord] = []
        self.iteration = 0

    def set_iteration(self, n: int):
        self.iteration = n

    def exchange(self, phase: Phase, kind: str, outgoing: dict,
                 expected_senders=None) -> dict:
        """Deliver {sender: {receiver: payload}} -> {receiver: [(sender,
        payload)]} sorted by sender id.

        All sends are validated before any delivery (barrier). When
        expected_senders maps receiver -> iterable of senders, a missing
        payload raises MissingPayloadError.
        """
        inbound = {i: [] for i in range(self.graph.size)}
        for sender in sorted(outgoing):
            for receiver in sorted(outgoing[sender]):
                if sender == receiver:
                    continue
                if not self.graph.is_edge(sender, receiver):
                    raise ProtocolViolationError(
                        f"{phase.value}: illegal edge {sender} -> {receiver}")
        for sender in sorted(outgoing):
            for receiver in sorted(outgoing[sender]):
                if sender == receiver:
                    continue
                payload, nbytes = _freeze(outgoing[sender][receiver])
                inbound[receiver].append((sender, payload))
                if self.audit:
                    self.log.append(MessageRecord(self.iteration, phase.value,
                                                  sender, receiver, kind, nbytes))
        for i in inbound:
            inbound[i].sort(key=lambda sp: sp[0])
        if expected_senders is not None:
            for receiver, senders in expected_senders.items():
                got = {s for s, _ in inbound[receiver]}
                missing = [s for s in senders if s not in got and s != receiver]
                if missing:
                    raise MissingPayloadError(
                        f"{phase.value}: agent {receiver} missing payloads "
                        f"from {missing}")
        return inbound

    def counts_by_phase(self) -> dict:
        out: dict = {}
        for rec in self.log:
            key = (rec.iteration, rec.phase)
            out[key] = out.get(key, 0) + 1
        return out


def expected_phase_count(graph: NeighborhoodGraph, phase: Phase) -> int:
    """Closed-form per-iteration message count implied by the graph."""
    if phase in (Phase.WARMSTART, Phase.GLOBALS_TO_NEIGHBORS):
        return sum(len(ns) - 1 for ns in graph.neighbors)
    return sum(len(ps) - 1 for ps in graph.neighbor_of)
