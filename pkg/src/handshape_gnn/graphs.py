"""Graph construction over the 21 hand keypoints.

Keypoint indexing follows the MediaPipe convention: wrist = 0, then four
nodes per finger in thumb/index/middle/ring/pinky order (1-4, 5-8, 9-12,
13-16, 17-20), each chain running base to tip.

Three variants are built here:
  * the per-frame anatomical graph (finger chains only),
  * the spatio-temporal sequence graph (anatomical edges replicated per
    frame plus same-keypoint links between consecutive frames),
  * the enriched single-frame graph (chains plus cross-finger, palm and
    diagonal-palm edges).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

N_KEYPOINTS = 21
WRIST = 0

SPATIAL = "spatial"
TEMPORAL = "temporal"
CROSS_FINGER = "cross-finger"
PALM = "palm"
DIAGONAL_PALM = "diagonal-palm"


@dataclass(frozen=True)
class HandTopology:
    """Node roles of the 21-keypoint hand: wrist plus 4-node finger chains."""

    n_nodes: int = N_KEYPOINTS
    wrist: int = WRIST
    fingers: tuple[tuple[int, int, int, int], ...] = (
        (1, 2, 3, 4),
        (5, 6, 7, 8),
        (9, 10, 11, 12),
        (13, 14, 15, 16),
        (17, 18, 19, 20),
    )

    def finger_bases(self) -> tuple[int, ...]:
        return tuple(chain[0] for chain in self.fingers)


MEDIAPIPE = HandTopology()


class Edge(NamedTuple):
    src: int
    dst: int
    kind: str


class EmptySequenceError(ValueError):
    """A sequence graph was requested for zero frames."""


def _both_ways(pairs: list[tuple[int, int]], kind: str) -> list[Edge]:
    edges = []
    for a, b in pairs:
        edges.append(Edge(a, b, kind))
        edges.append(Edge(b, a, kind))
    return edges


def _dedupe(edges: list[Edge]) -> list[Edge]:
    # first occurrence wins, so an edge keeps the kind that introduced it
    seen: set[tuple[int, int]] = set()
    out = []
    for e in edges:
        if (e.src, e.dst) in seen:
            continue
        seen.add((e.src, e.dst))
        out.append(e)
    return out


def build_anatomical_edges(topology: HandTopology = MEDIAPIPE) -> list[Edge]:
    """Bidirectional finger-chain edges: wrist to each base, then along each
    chain to the tip. 20 undirected edges."""
    pairs = []
    for chain in topology.fingers:
        pairs.append((topology.wrist, chain[0]))
        pairs.extend(zip(chain[:-1], chain[1:]))
    return _both_ways(pairs, SPATIAL)


def build_sequence_graph(topology: HandTopology = MEDIAPIPE, frames: int = 1) -> list[Edge]:
    """Spatio-temporal graph over frames*21 nodes; node i of frame t has
    index i + 21*t. Anatomical edges within each frame, same-keypoint edges
    between consecutive frames."""
    if frames < 1:
        raise EmptySequenceError(f"sequence graph needs at least 1 frame, got {frames}")
    n = topology.n_nodes
    spatial = build_anatomical_edges(topology)
    edges = []
    for t in range(frames):
        base = n * t
        edges.extend(Edge(e.src + base, e.dst + base, SPATIAL) for e in spatial)
    for t in range(frames - 1):
        for i in range(n):
            a, b = i + n * t, i + n * (t + 1)
            edges.append(Edge(a, b, TEMPORAL))
            edges.append(Edge(b, a, TEMPORAL))
    return edges


def build_handshape_edges(topology: HandTopology = MEDIAPIPE) -> list[Edge]:
    """Enriched single-frame graph: finger chains, same-level cross-finger
    links, wrist-to-base palm links, and thumb-base-to-finger-base diagonals."""
    edges = list(build_anatomical_edges(topology))
    cross = []
    for level in range(4):
        for fa, fb in zip(topology.fingers[:-1], topology.fingers[1:]):
            cross.append((fa[level], fb[level]))
    edges.extend(_both_ways(cross, CROSS_FINGER))
    palm = [(topology.wrist, base) for base in topology.finger_bases()]
    edges.extend(_both_ways(palm, PALM))
    thumb_base = topology.fingers[0][0]
    diagonal = [(thumb_base, base) for base in topology.finger_bases()[1:]]
    edges.extend(_both_ways(diagonal, DIAGONAL_PALM))
    return _dedupe(edges)


@dataclass
class NormalizedAdjacency:
    """Dense symmetric operator d^-1/2 (A + I) d^-1/2 over n nodes."""

    n: int
    matrix: np.ndarray = field(repr=False)


def normalize(edges: list[Edge], n: int) -> NormalizedAdjacency:
    """Symmetric normalization of the binary adjacency with self-loops added.

    Degrees are taken on A + I, so an isolated node is legal (degree 1).
    """
    a = np.zeros((n, n))
    for e in edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            raise ValueError(f"edge {e} out of range for {n} nodes")
        if e.src == e.dst:
            raise ValueError(f"self-loop {e} in raw edge list")
        a[e.src, e.dst] = 1.0
    a += np.eye(n)
    inv_sqrt_deg = 1.0 / np.sqrt(a.sum(axis=1))
    return NormalizedAdjacency(n=n, matrix=a * np.outer(inv_sqrt_deg, inv_sqrt_deg))


def undirected_count(edges: list[Edge]) -> int:
    return len({(min(e.src, e.dst), max(e.src, e.dst)) for e in edges})


def graph_to_json(edges: list[Edge], n: int) -> str:
    doc = {
        "nodes": n,
        "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in edges],
    }
    return json.dumps(doc)


def graph_to_dot(edges: list[Edge], n: int, name: str = "hand") -> str:
    """Undirected DOT rendering; edge style distinguishes the kinds."""
    styles = {
        SPATIAL: "color=black",
        TEMPORAL: "color=red",
        CROSS_FINGER: "color=gray,style=dashed",
        PALM: "color=blue",
        DIAGONAL_PALM: "color=blue,style=dotted",
    }
    lines = [f"graph {name} {{"]
    for i in range(n):
        lines.append(f"  {i};")
    for src, dst, kind in sorted({(min(e.src, e.dst), max(e.src, e.dst), e.kind) for e in edges}):
        lines.append(f"  {src} -- {dst} [{styles.get(kind, '')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
