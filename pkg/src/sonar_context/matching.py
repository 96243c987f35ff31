"""Bounded, zero-padded shift matching of SONAR contexts.

Shift convention: ``shift_context(ctx, n, m)`` moves entry (row j, col i) to
(j + m, i + n). ``adaptive_match`` returns the (n*, m*) that best aligns the
candidate onto the query, so a candidate whose sensor is yawed
counter-clockwise by d relative to the query (its scene shows up at smaller
azimuth columns) is recovered with positive n* and ``initial_pose`` yaw +d.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .descriptor import SonarContext
from .errors import ParameterError
from .polar_image import SensorModel
from .se2 import SE2

REJECT_DISTANCE = 1.0
TIE_EPS = 1e-12


@dataclass(frozen=True)
class MatchConfig:
    mu: float = 0.7
    omega: float = 0.2
    accept_threshold: float = 0.25
    min_valid_columns: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.mu <= 1.0):
            raise ParameterError(f"mu must be in (0, 1], got {self.mu}")
        if not (0.0 < self.omega <= 1.0):
            raise ParameterError(f"omega must be in (0, 1], got {self.omega}")
        if not (0.0 <= self.accept_threshold <= 2.0):
            raise ParameterError(f"accept_threshold must be in [0, 2], got {self.accept_threshold}")
        if not (0.0 < self.min_valid_columns <= 1.0):
            raise ParameterError(f"min_valid_columns must be in (0, 1], got {self.min_valid_columns}")

    def col_bound(self, n_cols: int) -> int:
        return int(math.floor(self.mu * n_cols / 2.0))

    def row_bound(self, n_rows: int) -> int:
        return int(math.floor(self.omega * n_rows / 2.0))


@dataclass(frozen=True)
class MatchResult:
    distance: float
    col_shift_n: int
    row_shift_m: int
    accepted: bool
    valid_fraction: float
    init_pose: SE2 = SE2()


def _shift_array(a: np.ndarray, n: int, m: int) -> np.ndarray:
    rows, cols = a.shape
    out = np.zeros_like(a)
    if abs(n) >= cols or abs(m) >= rows:
        return out
    src_r = slice(max(0, -m), rows - max(0, m))
    dst_r = slice(max(0, m), rows - max(0, -m))
    src_c = slice(max(0, -n), cols - max(0, n))
    dst_c = slice(max(0, n), cols - max(0, -n))
    out[dst_r, dst_c] = a[src_r, src_c]
    return out


def shift_context(ctx: SonarContext, n: int, m: int) -> SonarContext:
    """Translate by n columns and m rows; vacated cells are zero (no wrap-around)."""
    return ctx.with_values(_shift_array(ctx.values, int(n), int(m)))


def _values(c) -> np.ndarray:
    return c.values if isinstance(c, SonarContext) else np.asarray(c, dtype=float)


def _vector_distance(q: np.ndarray, c: np.ndarray, min_valid: float) -> Tuple[float, float]:
    """Mean cosine distance over paired vectors stored as columns of q and c."""
    if q.shape != c.shape:
        raise ParameterError(f"shape mismatch {q.shape} vs {c.shape}")
    nq = np.sqrt((q * q).sum(axis=0))
    nc = np.sqrt((c * c).sum(axis=0))
    valid = (nq > 0) & (nc > 0)
    frac = valid.sum() / q.shape[1]
    if not valid.any() or frac < min_valid:
        return REJECT_DISTANCE, float(frac)
    cos = (q[:, valid] * c[:, valid]).sum(axis=0) / (nq[valid] * nc[valid])
    d = float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))
    return min(max(d, 0.0), 1.0), float(frac)


def column_distance(iq, ic, min_valid_columns: float = 0.5) -> float:
    """Mean over azimuth columns of 1 - cosine similarity, skipping zero columns.

    Returns 1.0 when fewer than ``min_valid_columns`` of the columns are
    non-zero in both contexts.
    """
    return _vector_distance(_values(iq), _values(ic), min_valid_columns)[0]


def row_distance(iq, ic, min_valid_rows: float = 0.5) -> float:
    """Same as :func:`column_distance` with range rows as the compared vectors."""
    return _vector_distance(_values(iq).T, _values(ic).T, min_valid_rows)[0]


@lru_cache(maxsize=32)
def _shift_order(n_bound: int, m_bound: int) -> Tuple[Tuple[int, int], ...]:
    grid = [(n, m) for n in range(-n_bound, n_bound + 1) for m in range(-m_bound, m_bound + 1)]
    return tuple(sorted(grid, key=lambda nm: (abs(nm[0]), abs(nm[1]), nm[0] > 0, nm[1] > 0)))


def shift_order(n_bound: int, m_bound: int) -> List[Tuple[int, int]]:
    """Shift grid in tie-break priority: smaller |n|, then |m|, negative first."""
    return list(_shift_order(n_bound, m_bound))


def overlap_query(q: np.ndarray, n: int, m: int) -> np.ndarray:
    """Query restricted to the cells a (n, m)-shifted candidate still covers."""
    return q * _shift_array(np.ones_like(q), n, m)


def shift_score(iq, ic, n: int, m: int, min_valid_columns: float = 0.5) -> Tuple[float, float]:
    """(distance, valid column fraction) of the candidate shifted by (n, m).

    Cells the shifted candidate no longer covers are dropped from the query
    too, so the comparison runs over the overlap only.
    """
    q, c = _values(iq), _values(ic)
    return _vector_distance(overlap_query(q, n, m), _shift_array(c, n, m), min_valid_columns)


@lru_cache(maxsize=32)
def _diagonal_index(cols: int, n_bound: int):
    """Flattened (query col, candidate col, shift slot) triples for every column shift."""
    qi, ci, slot = [], [], []
    for k, n in enumerate(range(-n_bound, n_bound + 1)):
        q = np.arange(max(0, n), min(cols, cols + n))
        qi.append(q)
        ci.append(q - n)
        slot.append(np.full(len(q), k))
    return np.concatenate(qi), np.concatenate(ci), np.concatenate(slot)


def _score_grid(q: np.ndarray, c: np.ndarray, n_bound: int, m_bound: int, min_valid: float):
    """``shift_score`` for every (n, m), shape (2*n_bound+1, 2*m_bound+1), plus valid fractions.

    For a fixed row shift, column i of the column-shifted candidate is column
    i - n of the row-shifted one, so one Gram matrix Q_m^T C_m serves every n.
    """
    rows, cols = q.shape
    n_slots = 2 * n_bound + 1
    scores = np.empty((n_slots, 2 * m_bound + 1))
    fracs = np.empty_like(scores)
    qi, ci, slot = _diagonal_index(cols, n_bound)
    for mi, m in enumerate(range(-m_bound, m_bound + 1)):
        qm = overlap_query(q, 0, m)
        cm = _shift_array(c, 0, m)
        nq = np.sqrt((qm * qm).sum(axis=0))
        nc = np.sqrt((cm * cm).sum(axis=0))
        gram = qm.T @ cm
        valid = (nq[qi] > 0) & (nc[ci] > 0)
        denom = np.where(valid, nq[qi] * nc[ci], 1.0)
        dist = np.where(valid, 1.0 - np.clip(gram[qi, ci] / denom, -1.0, 1.0), 0.0)
        nvalid = np.bincount(slot, weights=valid, minlength=n_slots)
        total = np.bincount(slot, weights=dist, minlength=n_slots)
        frac = nvalid / cols
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.clip(total / nvalid, 0.0, 1.0)
        reject = (nvalid == 0) | (frac < min_valid)
        scores[:, mi] = np.where(reject, REJECT_DISTANCE, mean)
        fracs[:, mi] = frac
    return scores, fracs


def adaptive_match(iq: SonarContext, ic: SonarContext, cfg: MatchConfig = MatchConfig()
                   ) -> MatchResult:
    """Best zero-padded (n, m) shift of the candidate under column-wise cosine distance."""
    q, c = _values(iq), _values(ic)
    if q.shape != c.shape:
        raise ParameterError(f"context shapes differ: {q.shape} vs {c.shape}")
    rows, cols = q.shape
    nb, mb = cfg.col_bound(cols), cfg.row_bound(rows)
    scores, fracs = _score_grid(q, c, nb, mb, cfg.min_valid_columns)
    # scores within TIE_EPS of the minimum are ties; the shift priority decides
    lowest = scores.min()
    n, m = next((n, m) for n, m in _shift_order(nb, mb) if scores[n + nb, m + mb] <= lowest + TIE_EPS)
    dist = scores[n + nb, m + mb]
    frac = float(fracs[n + nb, m + mb])
    accepted = dist <= cfg.accept_threshold and frac >= cfg.min_valid_columns
    result = MatchResult(float(dist), n, m, bool(accepted), frac)
    if isinstance(ic, SonarContext) and ic.sensor is not None:
        result = MatchResult(result.distance, n, m, result.accepted, frac,
                             initial_pose(result, ic.sensor, (ic.patch_w, ic.patch_h)))
    return result


def initial_pose(result: MatchResult, sensor: SensorModel, patch: Tuple[int, int]) -> SE2:
    """Relative pose guess (candidate in query frame) implied by the winning shifts."""
    p_w, p_h = patch
    dyaw = result.col_shift_n * p_w / sensor.alpha
    dforward = result.row_shift_m * p_h / sensor.beta
    return SE2(dforward, 0.0, dyaw)
