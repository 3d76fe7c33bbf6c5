"""Supervised construction of the random projection layer.

Hidden units are added block by block. For the guided strategy a candidate
block ``H_s`` is scored against the current ridge residual ``E`` through the
Schur complement

    S = (H_s^T H_s + lam I) - H_s^T H (H^T H + lam I)^{-1} H^T H_s

of the augmented ridge Gram matrix. With ``v = H_s^T E`` the residual energy
after re-solving the ridge problem on ``[H, H_s]`` decomposes as

    ||E||^2 - ||E_new||^2 = 2 v^T S^{-1} v - v^T S^{-1} H_s^T H_s S^{-1} v + R

where ``R`` collects the coupling terms produced by re-adjusting the old
output weights. A block is accepted when the first part reaches
``(1 - r) ||E||^2`` and ``R >= 0``; together these give
``||E_new||^2 <= r ||E||^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import DimensionError, NumericError
from .metrics import ConstructionRecord, RunDiagnostics
from .numerics import SpdFactor, as_matrix, eigen_extremes, spd_factorize, symmetrize
from .rpl import BasisBlock, RplModel, XiSchedule, activate, sample_block

__all__ = [
    "Strategy",
    "TerminationReason",
    "ConstructionConfig",
    "GramState",
    "CriterionReport",
    "schur_complement",
    "evaluate_mgsm",
    "evaluate_scsm",
    "apply_block",
    "construct",
]

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    MGSM = "mgsm"
    SCSM = "scsm"
    RI = "ri"


class TerminationReason(str, Enum):
    RESIDUAL_MET = "ResidualMet"
    XI_EXHAUSTED = "XiExhausted"
    MAX_UNITS = "MaxUnits"


@dataclass(frozen=True)
class ConstructionConfig:
    r: float = 0.99
    epsilon: float = 0.01
    s: int = 50
    b_max: int = 10
    lam: float = 0.01
    xi_schedule: XiSchedule = field(default_factory=XiSchedule)
    max_units: Optional[int] = None
    strategy: Strategy = Strategy.MGSM
    per_column: bool = False
    ri_xi: float = 1.0
    refactor_every: int = 20

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not (0.0 < self.r < 1.0):
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.s < 1 or self.b_max < 1:
            raise ValueError("s and b_max must be >= 1")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.ri_xi > 0:
            raise ValueError(f"ri_xi must be positive, got {self.ri_xi}")
        if self.refactor_every < 1:
            raise ValueError("refactor_every must be >= 1")
        if self.max_units is not None and self.max_units < self.s:
            raise ValueError(f"max_units={self.max_units} is smaller than s={self.s}")

    @property
    def unit_cap(self) -> int:
        if self.max_units is not None:
            return self.max_units
        return 20 * self.s * len(self.xi_schedule)


@dataclass(frozen=True)
class GramState:
    """Ridge fit on the accepted hidden features plus the caches needed to extend it.

    ``factor`` is the lower Cholesky factor of ``gram + lam I``. It is grown
    block-wise from the Schur complement and rebuilt from ``gram`` every
    ``refactor_every`` accepted blocks.
    """

    Y: np.ndarray
    lam: float
    features: np.ndarray
    gram: np.ndarray
    factor: SpdFactor
    weights: np.ndarray
    residual: np.ndarray
    refactor_every: int = 20
    blocks_since_refactor: int = 0

    @classmethod
    def empty(cls, Y, lam: float, refactor_every: int = 20) -> "GramState":
        Y = as_matrix(Y, "Y")
        N, C = Y.shape
        return cls(
            Y=Y,
            lam=float(lam),
            features=np.zeros((N, 0)),
            gram=np.zeros((0, 0)),
            factor=SpdFactor(np.zeros((0, 0))),
            weights=np.zeros((0, C)),
            residual=Y.copy(),
            refactor_every=refactor_every,
        )

    @property
    def n_units(self) -> int:
        return self.features.shape[1]

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))


@dataclass
class CriterionReport:
    accepted: bool
    lhs_aggregate: float
    threshold: float
    coupling_aggregate: float
    improvement: float
    schur_min_eig: float


def _check_candidate(state: GramState, H_s) -> np.ndarray:
    H_s = as_matrix(H_s, "H_s")
    if H_s.shape[0] != state.features.shape[0]:
        raise DimensionError(f"H_s has {H_s.shape[0]} rows, state has {state.features.shape[0]}")
    return H_s


def _schur_parts(state: GramState, H_s: np.ndarray):
    """Return ``B = H^T H_s`` and the Schur complement ``S``."""
    lam = state.lam
    s = H_s.shape[1]
    S = H_s.T @ H_s
    S[np.diag_indices(s)] += lam
    B = state.features.T @ H_s
    if state.n_units:
        X = state.factor.solve_lower(B)
        S -= X.T @ X
    S = symmetrize(S)
    if not np.all(np.isfinite(S)):
        raise NumericError("Schur complement has non-finite entries")
    return B, S


def schur_complement(state: GramState, H_s) -> np.ndarray:
    """Lower-right block ``S`` of the inverse of the augmented ridge Gram."""
    H_s = _check_candidate(state, H_s)
    return _schur_parts(state, H_s)[1]


def evaluate_mgsm(state: GramState, H_s, r: float, per_column: bool = False) -> CriterionReport:
    """Score candidate block ``H_s`` with the target-aligned residual criterion.

    Column-wise quantities are summed over outputs (Frobenius form). With
    ``per_column=True`` the inequality and ``R >= 0`` must instead hold for
    every output column on its own.
    """
    H_s = _check_candidate(state, H_s)
    B, S = _schur_parts(state, H_s)
    Sf = spd_factorize(S)
    E = state.residual
    v = H_s.T @ E
    Sv = Sf.solve(v)
    z = H_s @ Sv
    if state.n_units:
        u = state.features @ state.factor.solve(B @ Sv)
    else:
        u = np.zeros_like(z)

    lhs = 2.0 * np.sum(v * Sv, axis=0) - np.sum(z * z, axis=0)
    coupling = -2.0 * np.sum(E * u, axis=0) + 2.0 * np.sum(z * u, axis=0) - np.sum(u * u, axis=0)
    energy = np.sum(E * E, axis=0)
    thresh = (1.0 - r) * energy
    if per_column:
        accepted = bool(np.all(lhs >= thresh) and np.all(coupling >= 0.0))
    else:
        accepted = bool(lhs.sum() >= thresh.sum() and coupling.sum() >= 0.0)

    E_new = E - z + u
    improvement = float(energy.sum() - np.sum(E_new * E_new))
    return CriterionReport(
        accepted=accepted,
        lhs_aggregate=float(lhs.sum()),
        threshold=float(thresh.sum()),
        coupling_aggregate=float(coupling.sum()),
        improvement=improvement,
        schur_min_eig=eigen_extremes(S)[0],
    )


def evaluate_scsm(state: GramState, h, mu: float, r: float) -> bool:
    """Greedy single-unit test: ``<e_q, h>^2 >= ||h||^2 (1 - r - mu) ||e_q||^2`` for all q."""
    if not (0.0 <= mu <= 1.0 - r):
        raise ValueError(f"mu must lie in [0, 1 - r], got {mu}")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    E = state.residual
    if h.shape[0] != E.shape[0]:
        raise DimensionError(f"h has {h.shape[0]} entries, residual has {E.shape[0]} rows")
    proj = (h @ E) ** 2
    delta = (1.0 - r - mu) * np.sum(E * E, axis=0)
    return bool(np.all(proj >= (h @ h) * delta))


def _scsm_batch(state: GramState, Hc: np.ndarray, r: float, mu: float):
    """Vectorized SCSM test and exact ridge improvement for single-unit candidates.

    Returns (accepted mask, improvements, projected energies, thresholds, S values).
    """
    E = state.residual
    lam = state.lam
    proj = Hc.T @ E  # (K, C)
    hh = np.sum(Hc * Hc, axis=0)
    delta = (1.0 - r - mu) * np.sum(E * E, axis=0)
    accepted = np.all(proj**2 >= hh[:, None] * delta[None, :], axis=1)

    # exact residual decrease of re-solving ridge with one appended column
    if state.n_units:
        B = state.features.T @ Hc
        AiB = state.factor.solve(B)
        S = hh + lam - np.sum(B * AiB, axis=0)
        G = Hc - state.features @ AiB
    else:
        S = hh + lam
        G = Hc
    GE = G.T @ E
    gg = np.sum(G * G, axis=0)
    vv = np.sum(proj * proj, axis=1)
    improvement = 2.0 * np.sum(GE * proj, axis=1) / S - gg * vv / S**2
    lhs = np.sum(proj**2, axis=1) / hh
    return accepted, improvement, lhs, float(delta.sum()), S


def apply_block(state: GramState, block: Optional[BasisBlock], H_s) -> GramState:
    """Append ``H_s`` and update the ridge weights with the block-inverse recursion.

    New weights are ``[W + Delta E; S^{-1} H_s^T E]`` with
    ``Delta = -(H^T H + lam I)^{-1} H^T H_s S^{-1} H_s^T``.
    """
    H_s = _check_candidate(state, H_s)
    if block is not None and block.size != H_s.shape[1]:
        raise DimensionError(f"block has {block.size} units but H_s has {H_s.shape[1]} columns")
    B, S = _schur_parts(state, H_s)
    Sf = spd_factorize(S)
    E = state.residual
    w_new = Sf.solve(H_s.T @ E)
    if state.n_units:
        w_old = state.weights - state.factor.solve(B @ w_new)
    else:
        w_old = state.weights
    weights = np.vstack([w_old, w_new])
    features = np.hstack([state.features, H_s])
    gram = np.block([[state.gram, B], [B.T, H_s.T @ H_s]])

    since = state.blocks_since_refactor + 1
    if since >= state.refactor_every:
        reg = gram.copy()
        reg[np.diag_indices(reg.shape[0])] += state.lam
        factor = spd_factorize(symmetrize(reg))
        since = 0
    else:
        L_old = state.factor.lower
        X = state.factor.solve_lower(B) if state.n_units else np.zeros((0, H_s.shape[1]))
        lower = np.block([[L_old, np.zeros((L_old.shape[0], H_s.shape[1]))], [X.T, Sf.lower]])
        factor = SpdFactor(lower)

    residual = state.Y - features @ weights
    return replace(
        state,
        features=features,
        gram=gram,
        factor=factor,
        weights=weights,
        residual=residual,
        blocks_since_refactor=since,
    )


def construct(Z, Y, cfg: ConstructionConfig, rng: np.random.Generator):
    """Grow a random projection layer on ``(Z, Y)`` until the residual target is met.

    Returns
    -------
    model : RplModel
    state : GramState
        Ridge fit on the final hidden features.
    diagnostics : RunDiagnostics
        One record per sampling round plus the termination reason.
    """
    Z = as_matrix(Z, "Z")
    Y = as_matrix(Y, "Y")
    if Z.shape[0] != Y.shape[0]:
        raise DimensionError(f"Z has {Z.shape[0]} rows but Y has {Y.shape[0]}")
    if Z.shape[0] < 1:
        raise ValueError("construction needs at least one sample")
    d = Z.shape[1]
    strategy = cfg.strategy
    s = 1 if strategy is Strategy.SCSM else cfg.s
    cap = cfg.unit_cap
    schedule = cfg.xi_schedule

    state = GramState.empty(Y, cfg.lam, cfg.refactor_every)
    model = RplModel(d)
    diag = RunDiagnostics(initial_residual_norm=state.residual_norm)
    xi_idx = 0
    iteration = 0

    while True:
        before = state.residual_norm
        if before <= cfg.epsilon:
            reason = TerminationReason.RESIDUAL_MET
            break
        if state.n_units + s > cap:
            reason = TerminationReason.MAX_UNITS
            break
        iteration += 1

        if strategy is Strategy.RI:
            block = sample_block(rng, d, s, cfg.ri_xi)
            state = apply_block(state, block, activate(Z, block))
            model = model.with_block(block)
            diag.records.append(
                ConstructionRecord(iteration, cfg.ri_xi, 1, 0, before, state.residual_norm,
                                   None, None, None, state.n_units, None)
            )
            continue

        xi = schedule[xi_idx]
        blocks = [sample_block(rng, d, cfg.s, xi) for _ in range(cfg.b_max)]
        if strategy is Strategy.MGSM:
            chosen, rec = _mgsm_round(state, Z, blocks, cfg)
        else:
            blocks = [b.column(i) for b in blocks for i in range(b.size)]
            chosen, rec = _scsm_round(state, Z, blocks, cfg)

        if chosen is not None:
            block, H_s = chosen
            state = apply_block(state, block, H_s)
            model = model.with_block(block)
            xi_idx = 0
        diag.records.append(
            ConstructionRecord(iteration, xi, len(blocks), rec["index"], before, state.residual_norm,
                               rec["lhs"], rec["threshold"], rec["coupling"], state.n_units, rec["schur"])
        )
        logger.debug("round %d xi=%.6g accepted=%s |E|=%.6g L=%d",
                     iteration, xi, rec["index"], state.residual_norm, state.n_units)
        if chosen is None:
            xi_idx += 1
            if xi_idx >= len(schedule):
                reason = TerminationReason.XI_EXHAUSTED
                break

    diag.final_hidden_size = model.total_units
    diag.termination = reason.value
    logger.info("construction stopped: %s with L=%d, |E|=%.6g", reason.value, model.total_units, state.residual_norm)
    return model, state, diag


def _mgsm_round(state, Z, blocks, cfg):
    best = None
    best_gain = -np.inf
    closest = None
    schur_min = np.inf
    for j, block in enumerate(blocks):
        H_s = activate(Z, block)
        rep = evaluate_mgsm(state, H_s, cfg.r, cfg.per_column)
        schur_min = min(schur_min, rep.schur_min_eig)
        if rep.accepted and rep.improvement > best_gain:
            best, best_gain = (j, block, H_s, rep), rep.improvement
        margin = rep.lhs_aggregate - rep.threshold
        if closest is None or margin > closest[0]:
            closest = (margin, rep)
    if best is None:
        rep = closest[1]
        return None, _rec(None, rep.lhs_aggregate, rep.threshold, rep.coupling_aggregate, schur_min)
    j, block, H_s, rep = best
    return (block, H_s), _rec(j, rep.lhs_aggregate, rep.threshold, rep.coupling_aggregate, schur_min)


def _scsm_round(state, Z, units, cfg):
    Hc = np.hstack([activate(Z, u) for u in units])
    # candidate unit index L = current size + 1; mu_L = (1 - r) / (L + 1)
    mu = (1.0 - cfg.r) / (state.n_units + 2)
    accepted, gain, lhs, thresh, S = _scsm_batch(state, Hc, cfg.r, mu)
    schur_min = float(S.min())
    if not accepted.any():
        k = int(np.argmax(lhs))
        return None, _rec(None, float(lhs[k]), thresh, None, schur_min)
    masked = np.where(accepted, gain, -np.inf)
    k = int(np.argmax(masked))  # first maximum, i.e. lowest sampling index on ties
    return (units[k], Hc[:, k : k + 1]), _rec(k, float(lhs[k]), thresh, None, schur_min)


def _rec(index, lhs, threshold, coupling, schur):
    return {"index": index, "lhs": lhs, "threshold": threshold, "coupling": coupling, "schur": schur}
