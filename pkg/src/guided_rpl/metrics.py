"""Evaluation metrics and diagnostic traces.

Accuracy metrics follow the usual class-incremental conventions:

* ``A_i`` is the pooled accuracy on the union of test splits of tasks
  ``1..i`` after stage ``i``;
* ``A_last = A_T`` and ``A_avg = mean(A_1, ..., A_T)``;
* ``F_avg`` averages, over tasks ``j < T``, the drop from the best accuracy
  seen on ``j`` at stages ``j..T-1`` to its accuracy after stage ``T``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import IncompleteGrid, UndefinedMetric
from .numerics import condition_number, cosine_similarity_matrix, eigen_extremes, frobenius_norm
from .rpl import RplModel

__all__ = [
    "AccuracyGrid",
    "ConstructionRecord",
    "StageSnapshot",
    "RunDiagnostics",
    "a_last",
    "a_avg",
    "f_avg",
    "stage_accuracies",
    "snapshot_stat",
    "trace_pt",
    "trace_eigs",
    "basis_cosine",
    "feature_condition_number",
    "write_csv",
]


@dataclass
class AccuracyGrid:
    """Lower-triangular grid ``a[t][j]``: accuracy on task ``j`` after stage ``t``.

    Indices are 0-based here; row ``t`` holds ``t + 1`` entries.
    ``test_sizes[j]`` weights task ``j`` when pooling.
    """

    a: list = field(default_factory=list)
    test_sizes: Optional[list] = None

    @property
    def T(self) -> int:
        return len(self.a)

    def add_stage(self, row: Sequence[float]) -> None:
        self.a.append([float(x) for x in row])

    def validate(self) -> None:
        if self.T == 0:
            raise IncompleteGrid("grid has no stages")
        for t, row in enumerate(self.a):
            if len(row) != t + 1:
                raise IncompleteGrid(f"stage {t + 1} has {len(row)} entries, expected {t + 1}")
            for x in row:
                if not (0.0 <= x <= 1.0):
                    raise ValueError(f"accuracy {x} outside [0, 1]")
        if self.test_sizes is not None and len(self.test_sizes) < self.T:
            raise IncompleteGrid("fewer test sizes than tasks")

    def _sizes(self) -> np.ndarray:
        if self.test_sizes is None:
            return np.ones(self.T)
        return np.asarray(self.test_sizes[: self.T], dtype=np.float64)


def stage_accuracies(grid: AccuracyGrid) -> np.ndarray:
    """Pooled accuracy ``A_i`` after each stage."""
    grid.validate()
    sizes = grid._sizes()
    return np.array(
        [np.dot(row, sizes[: t + 1]) / sizes[: t + 1].sum() for t, row in enumerate(grid.a)]
    )


def a_last(grid: AccuracyGrid) -> float:
    return float(stage_accuracies(grid)[-1])


def a_avg(grid: AccuracyGrid) -> float:
    return float(stage_accuracies(grid).mean())


def f_avg(grid: AccuracyGrid) -> float:
    grid.validate()
    T = grid.T
    if T < 2:
        raise UndefinedMetric("average forgetting needs at least two stages")
    drops = []
    for j in range(T - 1):
        # running max includes the final stage, so a task that improves
        # contributes zero rather than a negative drop
        best = max(grid.a[t][j] for t in range(j, T))
        drops.append(best - grid.a[T - 1][j])
    return float(sum(drops) / (T - 1))


@dataclass
class ConstructionRecord:
    """One sampling round of the construction loop.

    Criterion fields are ``None`` for the unguided strategy. For a round with
    no accepted candidate they describe the candidate closest to passing.
    """

    iteration: int
    xi: float
    candidates: int
    accepted_index: Optional[int]
    residual_before: float
    residual_norm: float
    lhs_aggregate: Optional[float]
    threshold: Optional[float]
    coupling_aggregate: Optional[float]
    n_units: int
    schur_min_eig: Optional[float]


@dataclass
class StageSnapshot:
    stage: int
    pt_norm: float
    lambda_min: float
    lambda_max: float
    condition: float
    accuracies: list = field(default_factory=list)


def snapshot_stat(stat, accuracies=()) -> StageSnapshot:
    """Summarize the sufficient statistic ``P_t`` of an incremental classifier."""
    P = stat.P
    if P.shape[0] == 0:
        return StageSnapshot(stat.stage, 0.0, float("nan"), float("nan"), float("nan"), list(accuracies))
    lo, hi = eigen_extremes(P)
    cond = hi / lo if lo > 0 else float("inf")
    return StageSnapshot(stat.stage, frobenius_norm(P), lo, hi, cond, [float(a) for a in accuracies])


@dataclass
class RunDiagnostics:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_hidden_size: int = 0
    initial_residual_norm: float = 0.0
    termination: str = ""
    cosine_summary: Optional[float] = None
    feature_condition: Optional[float] = None

    def accepted_records(self) -> list:
        return [r for r in self.records if r.accepted_index is not None]


def trace_pt(snapshots: Sequence[StageSnapshot]) -> list[dict]:
    return [{"stage": s.stage, "pt_frobenius": s.pt_norm} for s in snapshots]


def trace_eigs(snapshots: Sequence[StageSnapshot]) -> list[dict]:
    return [
        {"stage": s.stage, "lambda_min": s.lambda_min, "lambda_max": s.lambda_max, "condition": s.condition}
        for s in snapshots
    ]


def basis_cosine(model: RplModel, sample_cap: int = 512) -> tuple[np.ndarray, float]:
    """Cosine similarity between the parameter vectors ``[w_i; b_i]`` of the bases.

    Columns are down-sampled with a uniform stride to at most ``sample_cap``.
    Returns the matrix and the mean absolute off-diagonal entry.
    """
    W = np.vstack([model.input_weights, model.biases[None, :]])
    L = W.shape[1]
    if L > sample_cap:
        W = W[:, np.linspace(0, L - 1, sample_cap).round().astype(int)]
    C = cosine_similarity_matrix(W)
    n = C.shape[0]
    if n < 2:
        return C, 0.0
    off = np.abs(C[~np.eye(n, dtype=bool)])
    return C, float(off.mean())


def feature_condition_number(H: np.ndarray, subsample: int = 512, seed: int = 0) -> float:
    """Condition number of ``H^T H`` on a random row subsample of ``H``."""
    N = H.shape[0]
    if N > subsample:
        rows = np.sort(np.random.default_rng(seed).choice(N, size=subsample, replace=False))
        H = H[rows]
    return condition_number(H.T @ H)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def write_csv(path, rows: Sequence, columns: Optional[Sequence[str]] = None) -> None:
    """Write dataclass instances or dicts as comma-separated text with a header row."""
    rows = list(rows)
    dict_rows = [asdict(r) if hasattr(r, "__dataclass_fields__") else dict(r) for r in rows]
    if columns is None:
        if rows and hasattr(rows[0], "__dataclass_fields__"):
            columns = [f.name for f in fields(rows[0])]
        elif dict_rows:
            columns = list(dict_rows[0].keys())
        else:
            columns = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in dict_rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue())
