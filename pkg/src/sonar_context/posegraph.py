"""SE(2) pose-graph optimization with Gauss-Newton and step halving.

Edge residual for a measurement z between nodes i and j::

    r = [ R_z^T (R_i^T (t_j - t_i) - t_z) ;  wrap(th_j - th_i - th_z) ]

i.e. the (translation, angle) coordinates of z^-1 * (x_i^-1 * x_j). The first
node is held fixed as the gauge.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import FormatError, GraphError
from .registration import LoopFactor, check_information
from .se2 import SE2, wrap_angle

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Edge:
    i: int
    j: int
    z: SE2
    information: np.ndarray = field(repr=False)
    kind: str = "ODOM"


@dataclass
class OptimizeResult:
    poses: Dict[int, SE2]
    final_cost: float
    iterations: int
    cost_history: List[float]


def edge_residual(xi: np.ndarray, xj: np.ndarray, z: np.ndarray) -> np.ndarray:
    ci, si = np.cos(xi[2]), np.sin(xi[2])
    cz, sz = np.cos(z[2]), np.sin(z[2])
    dx, dy = xj[0] - xi[0], xj[1] - xi[1]
    # R_i^T (t_j - t_i)
    lx, ly = ci * dx + si * dy, -si * dx + ci * dy
    ex, ey = lx - z[0], ly - z[1]
    return np.array([cz * ex + sz * ey, -sz * ex + cz * ey, wrap_angle(xj[2] - xi[2] - z[2])])


def edge_jacobians(xi: np.ndarray, xj: np.ndarray, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic d r / d x_i and d r / d x_j (3x3 each)."""
    ci, si = np.cos(xi[2]), np.sin(xi[2])
    cz, sz = np.cos(z[2]), np.sin(z[2])
    rz_t = np.array([[cz, sz], [-sz, cz]])
    ri_t = np.array([[ci, si], [-si, ci]])
    dri_t = np.array([[-si, ci], [-ci, -si]])
    d = np.array([xj[0] - xi[0], xj[1] - xi[1]])
    a = np.zeros((3, 3))
    b = np.zeros((3, 3))
    a[:2, :2] = -rz_t @ ri_t
    a[:2, 2] = rz_t @ dri_t @ d
    a[2, 2] = -1.0
    b[:2, :2] = rz_t @ ri_t
    b[2, 2] = 1.0
    return a, b


class PoseGraph:
    def __init__(self):
        self.nodes: Dict[int, SE2] = {}
        self.odom_factors: List[Edge] = []
        self.loop_factors: List[Edge] = []

    def __len__(self):
        return len(self.nodes)

    def add_node(self, node_id: int, pose: SE2) -> None:
        node_id = int(node_id)
        if node_id in self.nodes:
            raise GraphError(f"node {node_id} already exists")
        self.nodes[node_id] = pose

    def add_odom_factor(self, i: int, j: int, z: SE2, information) -> None:
        """Odometry edge i -> j; creates node j from i and z if it is new."""
        info = np.array(information, dtype=float)
        check_information(info)
        if i not in self.nodes:
            if self.nodes:
                raise GraphError(f"unknown node {i}")
            self.add_node(i, SE2())
        if j != i + 1:
            raise GraphError(f"odometry must join consecutive ids, got {i} -> {j}")
        if j not in self.nodes:
            self.add_node(j, self.nodes[i] @ z)
        self.odom_factors.append(Edge(i, j, z, info, "ODOM"))

    def add_loop_factor(self, factor_or_i, j: Optional[int] = None, z: Optional[SE2] = None,
                        information=None) -> None:
        if isinstance(factor_or_i, LoopFactor):
            f = factor_or_i
            i, j, z, information = f.id_i, f.id_j, f.measurement, f.information
        else:
            i = factor_or_i
        info = np.array(information, dtype=float)
        check_information(info)
        for n in (i, j):
            if n not in self.nodes:
                raise GraphError(f"loop factor references unknown node {n}")
        if i == j:
            raise GraphError("loop factor must join two distinct nodes")
        self.loop_factors.append(Edge(int(i), int(j), z, info, "LOOP"))

    @property
    def edges(self) -> List[Edge]:
        return self.odom_factors + self.loop_factors

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj: Dict[int, List[int]] = {n: [] for n in self.nodes}
        for e in self.edges:
            adj[e.i].append(e.j)
            adj[e.j].append(e.i)
        start = next(iter(self.nodes))
        seen = {start}
        todo = deque([start])
        while todo:
            for nb in adj[todo.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        return len(seen) == len(self.nodes)

    # -- optimization ------------------------------------------------------

    def _cost(self, x: np.ndarray, index: Dict[int, int], huber: Optional[float]) -> float:
        total = 0.0
        for e in self.edges:
            r = edge_residual(x[index[e.i]], x[index[e.j]], e.z.as_array())
            s = float(r @ e.information @ r)
            if huber is not None and e.kind == "LOOP":
                s = _huber(s, huber)
            total += s
        return total

    def optimize(self, max_iter: int = 100, tol: float = 1e-9, huber_delta: Optional[float] = None,
                 max_halvings: int = 30) -> OptimizeResult:
        """Gauss-Newton over all nodes except the first.

        Stops when the cost decrease falls below ``tol`` (relative to the cost,
        floored at 1) or after ``max_iter`` iterations. A step that increases
        the cost is halved until it does not.
        """
        if not self.nodes:
            return OptimizeResult({}, 0.0, 0, [0.0])
        if not self.is_connected():
            raise GraphError("pose graph is disconnected; every node must be reachable from the gauge node")
        ids = sorted(self.nodes)
        index = {n: k for k, n in enumerate(ids)}
        x = np.array([self.nodes[n].as_array() for n in ids])
        nvar = 3 * (len(ids) - 1)
        cost = self._cost(x, index, huber_delta)
        history = [cost]
        it = 0
        if nvar == 0:
            return OptimizeResult(dict(self.nodes), cost, 0, history)
        while it < max_iter:
            it += 1
            h = np.zeros((nvar, nvar))
            g = np.zeros(nvar)
            for e in self.edges:
                xi, xj = x[index[e.i]], x[index[e.j]]
                z = e.z.as_array()
                r = edge_residual(xi, xj, z)
                a, b = edge_jacobians(xi, xj, z)
                info = e.information
                if huber_delta is not None and e.kind == "LOOP":
                    info = info * _huber_weight(float(r @ info @ r), huber_delta)
                blocks = [(index[e.i] - 1, a), (index[e.j] - 1, b)]
                for p, jp in blocks:
                    if p < 0:
                        continue
                    g[3 * p:3 * p + 3] += jp.T @ info @ r
                    for q, jq in blocks:
                        if q < 0:
                            continue
                        h[3 * p:3 * p + 3, 3 * q:3 * q + 3] += jp.T @ info @ jq
            try:
                dx = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                raise GraphError("singular normal equations; check gauge fixing and graph connectivity") from None
            if not np.all(np.isfinite(dx)):
                raise GraphError("singular normal equations; check gauge fixing and graph connectivity")
            step = 1.0
            for _ in range(max_halvings + 1):
                trial = x.copy()
                trial[1:] += step * dx.reshape(-1, 3)
                trial[:, 2] = [wrap_angle(a) for a in trial[:, 2]]
                new_cost = self._cost(trial, index, huber_delta)
                if new_cost <= cost:
                    break
                step *= 0.5
            else:
                log.debug("no decreasing step after %d halvings", max_halvings)
                break
            decrease = cost - new_cost
            x, cost = trial, new_cost
            history.append(cost)
            if decrease < tol * max(1.0, cost):
                break
        poses = {n: SE2.from_array(x[index[n]]) for n in ids}
        return OptimizeResult(poses, cost, it, history)

    def apply(self, poses: Dict[int, SE2]) -> None:
        for n, p in poses.items():
            if n not in self.nodes:
                raise GraphError(f"unknown node {n}")
            self.nodes[n] = p

    # -- file format -------------------------------------------------------

    def write_csv(self, path, poses: Optional[Dict[int, SE2]] = None) -> None:
        poses = poses if poses is not None else self.nodes
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            for n in sorted(poses):
                p = poses[n]
                w.writerow(["NODE", n, repr(p.x), repr(p.y), repr(p.yaw)])
            for e in self.edges:
                upper = [repr(float(e.information[r, c])) for r in range(3) for c in range(r, 3)]
                w.writerow([e.kind, e.i, e.j, repr(e.z.x), repr(e.z.y), repr(e.z.yaw)] + upper)

    @classmethod
    def read_csv(cls, path) -> "PoseGraph":
        g = cls()
        edges = []
        with open(path, newline="") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row:
                    continue
                try:
                    if row[0] == "NODE":
                        g.add_node(int(row[1]), SE2(float(row[2]), float(row[3]), float(row[4])))
                    elif row[0] in ("ODOM", "LOOP"):
                        vals = [float(v) for v in row[6:12]]
                        info = np.zeros((3, 3))
                        info[np.triu_indices(3)] = vals
                        info = info + np.triu(info, 1).T
                        z = SE2(float(row[3]), float(row[4]), float(row[5]))
                        edges.append((row[0], int(row[1]), int(row[2]), z, info))
                    else:
                        raise FormatError(f"{path}:{lineno}: unknown record type {row[0]!r}")
                except (ValueError, IndexError) as e:
                    if isinstance(e, FormatError):
                        raise
                    raise FormatError(f"{path}:{lineno}: {e}") from None
        for kind, i, j, z, info in edges:
            if kind == "ODOM":
                g.add_odom_factor(i, j, z, info)
            else:
                g.add_loop_factor(i, j, z, info)
        return g


def _huber(s: float, delta: float) -> float:
    # s is a squared Mahalanobis norm
    e = np.sqrt(s)
    return s if e <= delta else 2.0 * delta * e - delta * delta


def _huber_weight(s: float, delta: float) -> float:
    e = np.sqrt(s)
    return 1.0 if e <= delta else delta / e
