"""Built-in acceptance checks, run by ``guided-rpl verify`` and the test suite.

Each check returns a :class:`CheckResult` with the measured quantity. Oracles
here use plain ``numpy.linalg.solve`` on stacked data so they do not share a
code path with the recursive updates they verify.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data_io import RunConfig, SyntheticSpec, generate_synthetic, split_tasks
from .incremental import expand_classes, init_stat, one_hot, predict, rls_update
from .metrics import AccuracyGrid, a_avg, a_last, f_avg, feature_condition_number
from .pipeline import run_incremental
from .rpl import XiSchedule, make_rng, project, sample_block, activate
from .supervisory import ConstructionConfig, GramState, apply_block, construct

__all__ = ["CheckResult", "CHECKS", "run_checks", "check_names"]

# settings for the built-in synthetic instances: Gaussian blobs with unit-scale
# features, so the scale grid spans near-linear to saturated sigmoid units
SYNTH_XI = XiSchedule(0.05, 0.05, 2.0)
SYNTH_CONSTRUCTION = dict(r=0.99, s=10, b_max=5, lam=0.01, epsilon=1.0, xi_schedule=SYNTH_XI)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: str
    seconds: float = 0.0
    budget: float = math.inf

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value} ({self.seconds:.2f}s, budget {self.budget:g}s)"


def _ridge_oracle(H, Y, lam):
    L = H.shape[1]
    return np.linalg.solve(H.T @ H + lam * np.eye(L), H.T @ Y)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _blobs(seed, classes=6, per_class=50, d=16, redundancy=0):
    data = generate_synthetic(SyntheticSpec(classes=classes, train_per_class=per_class, test_per_class=1,
                                            feature_dim=d, redundancy=redundancy, seed=seed))
    return data.X_train, one_hot(data.y_train, range(classes))


# --------------------------------------------------------------------------


def check_joint_equivalence(tol_scale=1.0, fault=0.0, instances=50, seed=101):
    """Recursive task updates reproduce ridge regression on the stacked tasks."""
    tol = 1e-8 * tol_scale
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(1, 6))
        L = int(rng.integers(1, 41))
        lam = float(rng.choice([0.01, 0.1, 1.0]))
        C_total = int(rng.integers(T, 7)) if T <= 6 else T
        # distribute classes so every task gets at least one
        cuts = np.sort(rng.choice(np.arange(1, C_total), size=T - 1, replace=False)) if T > 1 else []
        class_groups = np.split(np.arange(C_total), cuts)
        Hs, labels = [], []
        for g in class_groups:
            n = int(rng.integers(1, 101))
            Hs.append(1.0 / (1.0 + np.exp(-rng.normal(size=(n, L)) * 2)))
            labels.append(rng.choice(g, size=n))
        classes = tuple(int(c) for c in class_groups[0])
        Y1 = one_hot(labels[0], classes)
        W1 = _ridge_oracle(Hs[0], Y1, lam)
        stat = init_stat(Hs[0], W1, lam, classes)
        for t in range(1, T):
            stat = expand_classes(stat, class_groups[t])
            stat = rls_update(stat, Hs[t], one_hot(labels[t], stat.classes_seen))
            if fault:
                stat = type(stat)(stat.P, stat.weights + fault, stat.classes_seen, stat.lam, stat.stage)
        H_all = np.vstack(Hs)
        Y_all = one_hot(np.concatenate(labels), stat.classes_seen)
        worst = max(worst, _rel(stat.weights, _ridge_oracle(H_all, Y_all, lam)))
    return worst <= tol, f"max relative Frobenius error {worst:.3e} (tol {tol:.0e}) over {instances} instances"


def check_block_exactness(tol_scale=1.0, fault=0.0, blocks=100, seed=202):
    """Block-wise weight updates equal a full ridge re-solve after every block."""
    tol = 1e-8 * tol_scale
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < blocks:
        N, C, d = int(rng.integers(20, 120)), int(rng.integers(1, 6)), int(rng.integers(2, 12))
        lam = float(rng.choice([0.01, 0.1, 1.0]))
        Z = rng.normal(size=(N, d))
        Y = one_hot(rng.integers(0, C, size=N), range(C))
        state = GramState.empty(Y, lam, refactor_every=7)
        gen = make_rng(int(rng.integers(2**31)))
        for _ in range(25):
            blk = sample_block(gen, d, int(rng.integers(1, 6)), float(rng.choice([0.1, 0.5, 2.0])))
            state = apply_block(state, blk, activate(Z, blk))
            W = state.weights + fault
            worst = max(worst, _rel(W, _ridge_oracle(state.features, Y, lam)))
            done += 1
            if done >= blocks:
                break
    return worst <= tol, f"max relative error {worst:.3e} (tol {tol:.0e}) over {done} blocks"


def _contraction_runs(runs=20):
    out = []
    cfg = ConstructionConfig(**SYNTH_CONSTRUCTION)
    for seed in range(runs):
        Z, Y = _blobs(seed)
        out.append(construct(Z, Y, cfg, make_rng(1000 + seed)))
    return cfg, out


_CACHE: dict = {}


def _cached_contraction_runs():
    if "contraction" not in _CACHE:
        _CACHE["contraction"] = _contraction_runs()
    return _CACHE["contraction"]


def check_contraction(tol_scale=1.0, fault=0.0):
    """Every accepted block contracts residual energy by r; geometric bound holds."""
    cfg, runs = _cached_contraction_runs()
    r = cfg.r
    ok = True
    worst_ratio = 0.0
    n_acc = 0
    for _, _, diag in runs:
        e0 = diag.initial_residual_norm**2
        slack = 0.0
        k = 0
        for rec in diag.accepted_records():
            before, after = rec.residual_before**2, (rec.residual_norm + fault) ** 2
            step_tol = 1e-9 * tol_scale * (1.0 + before)
            slack += step_tol
            k += 1
            ok &= after <= r * before + step_tol
            ok &= after <= r**k * e0 + slack
            worst_ratio = max(worst_ratio, after / before)
        n_acc += k
    return ok, f"{n_acc} accepted blocks in {len(runs)} runs, max energy ratio {worst_ratio:.4f} (r={r})"


def check_schur_positivity(tol_scale=1.0, fault=0.0):
    cfg, runs = _cached_contraction_runs()
    lo = min(rec.schur_min_eig for _, _, diag in runs for rec in diag.records if rec.schur_min_eig is not None)
    ok = lo >= cfg.lam - 1e-9 * tol_scale
    return ok, f"min eigenvalue of S {lo:.6g} (lambda {cfg.lam})"


def _redundant_runs(seeds=10):
    if "redundant" in _CACHE:
        return _CACHE["redundant"]
    d = 16
    rows = []
    for seed in range(seeds):
        Z, Y = _blobs(seed, d=d, redundancy=d // 2)
        cfg = ConstructionConfig(**SYNTH_CONSTRUCTION, max_units=2000)
        m, st, dg = construct(Z, Y, cfg, make_rng(2000 + seed))
        ri_cfg = ConstructionConfig(**{**SYNTH_CONSTRUCTION, "strategy": "ri", "max_units": 2000})
        mr, sr, dr = construct(Z, Y, ri_cfg, make_rng(3000 + seed))
        rows.append((Z, Y, m, st, dg, mr, sr, dr))
    _CACHE["redundant"] = rows
    return rows


def check_compactness(tol_scale=1.0, fault=0.0):
    """Median hidden size needed to reach epsilon: guided <= unguided."""
    eps = SYNTH_CONSTRUCTION["epsilon"]
    rows = _redundant_runs()
    guided = [m.total_units if st.residual_norm <= eps else math.inf for _, _, m, st, *_ in rows]
    unguided = [mr.total_units if sr.residual_norm <= eps else math.inf for *_, mr, sr, _ in rows]
    mg, mu = float(np.median(guided)), float(np.median(unguided))
    reached = sum(np.isfinite(guided))
    return mg <= mu, (f"median units to reach eps={eps}: guided {mg:g} ({reached}/{len(rows)} reached), "
                      f"unguided {mu:g}")


def check_conditioning(tol_scale=1.0, fault=0.0):
    """At matched width the guided feature Gram is no worse conditioned than the greedy one."""
    conds_g, conds_s, widths = [], [], []
    for seed, (Z, Y, m, st, dg, *_rest) in enumerate(_redundant_runs()):
        cap = max(m.total_units, 1)
        cfg = ConstructionConfig(**{**SYNTH_CONSTRUCTION, "strategy": "scsm", "epsilon": 1e-12,
                                    "max_units": max(cap, SYNTH_CONSTRUCTION["s"])})
        _, ss, _ = construct(Z, Y, cfg, make_rng(4000 + seed))
        k = min(m.total_units, ss.n_units)
        if k == 0:
            continue
        widths.append(k)
        conds_g.append(feature_condition_number(st.features[:, :k]))
        conds_s.append(feature_condition_number(ss.features[:, :k]))
    mg, ms = float(np.median(conds_g)), float(np.median(conds_s))
    return mg <= ms, (f"median cond(H^T H) guided {mg:.4g} vs greedy {ms:.4g} "
                      f"at matched widths {sorted(set(widths))}")


def _cil_split(seed=0):
    spec = SyntheticSpec(classes=10, train_per_class=40, test_per_class=20, feature_dim=16,
                         cluster_spread=0.5, mean_scale=2.0, seed=seed)
    data = generate_synthetic(spec)
    return split_tasks(data.X_train, data.y_train, 0, 2, seed, data.X_test, data.y_test)


def _cil_runs():
    if "cil" not in _CACHE:
        cfg = RunConfig(r=0.99, epsilon=1.0, lam=0.01, s=10, b_max=5, xi_min=SYNTH_XI.xi_min,
                        delta_xi=SYNTH_XI.delta_xi, xi_max=SYNTH_XI.xi_max, max_units=400)
        runs = []
        for seed in range(3):
            split = _cil_split(seed)
            for strategy in ("mgsm", "scsm", "ri"):
                runs.append((split, run_incremental(split, cfg, strategy, seed)))
        _CACHE["cil"] = (cfg, runs)
    return _CACHE["cil"]


def check_pt_monotone(tol_scale=1.0, fault=0.0):
    cfg, runs = _cil_runs()
    ok = True
    min_gap = math.inf
    for _, res in runs:
        norms = [s.pt_norm for s in res.diagnostics.snapshots]
        ok &= all(b >= a for a, b in zip(norms, norms[1:]))
        for s in res.diagnostics.snapshots:
            min_gap = min(min_gap, s.lambda_min - cfg.lam)
            ok &= s.lambda_min >= cfg.lam - 1e-9 * tol_scale
    return ok, f"{len(runs)} runs; ||P_t||_F non-decreasing; min(lambda_min - lambda) = {min_gap:.3e}"


def check_metric_formulas(tol_scale=1.0, fault=0.0):
    g = AccuracyGrid([[0.9], [0.8, 0.6]])
    ok = math.isclose(a_avg(g), 0.8, abs_tol=1e-15) and math.isclose(a_last(g), 0.7, abs_tol=1e-15)
    ok &= math.isclose(f_avg(g), 0.1, abs_tol=1e-15)
    ok &= math.isclose(f_avg(AccuracyGrid([[0.7], [0.9, 0.9], [0.8, 0.9, 0.5]])), 0.05, abs_tol=1e-15)
    ones = AccuracyGrid([[1.0] * (t + 1) for t in range(4)])
    ok &= a_avg(ones) == 1.0 and a_last(ones) == 1.0
    rng = np.random.default_rng(7)
    lowest = math.inf
    for _ in range(1000):
        T = int(rng.integers(2, 8))
        grid = AccuracyGrid([list(rng.random(t + 1)) for t in range(T)])
        lowest = min(lowest, f_avg(grid))
    ok &= lowest >= 0.0
    return ok, f"hand examples reproduced; min f_avg over 1000 random grids {lowest:.4f}"


def check_determinism(tol_scale=1.0, fault=0.0):
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        spec = tmp / "synthetic.txt"
        spec.write_text("classes = 6\ntrain_per_class = 30\ntest_per_class = 10\nfeature_dim = 8\nseed = 3\n")
        cfg = tmp / "run.cfg"
        cfg.write_text("s = 5\nb_max = 3\nepsilon = 1.0\nxi_min = 0.1\ndelta_xi = 0.1\nxi_max = 1.0\nmax_units = 200\n")
        outs = []
        for name in ("a", "b"):
            code = main(["run", "--config", str(cfg), "--synthetic", str(spec), "--protocol", "B-0,Inc-2",
                         "--seeds", "5", "--out", str(tmp / name), "--quiet"])
            if code != 0:
                return False, f"run exited with {code}"
            outs.append({p.name: p.read_bytes() for p in sorted((tmp / name).glob("*.csv"))})
    same = outs[0] == outs[1] and len(outs[0]) == 7
    return same, f"{len(outs[0])} CSV files, byte-identical: {outs[0] == outs[1]}"


def check_end_to_end(tol_scale=1.0, fault=0.0):
    """Incremental accuracy matches joint ridge on the same frozen projection features."""
    cfg, runs = _cil_runs()
    worst = math.inf
    for split, res in runs:
        if res.strategy != "mgsm":
            continue
        H_all = np.vstack([project(b.features, res.model) for b in split.train])
        y_all = np.concatenate([b.labels for b in split.train])
        classes = res.stat.classes_seen
        W = _ridge_oracle(H_all, one_hot(y_all, classes), cfg.lam)
        joint = type(res.stat)(res.stat.P, W, classes, cfg.lam, res.stat.stage)
        X_test = np.vstack([b.features for b in split.test])
        y_test = np.concatenate([b.labels for b in split.test])
        acc_joint = float(np.mean(predict(joint, res.model, X_test) == y_test))
        acc_inc = a_last(res.grid)
        ratio = acc_inc / acc_joint if acc_joint > 0 else math.inf
        worst = min(worst, ratio)
    return worst >= 0.95, f"min A_last / joint-ridge accuracy {worst:.4f} (need >= 0.95)"


CHECKS: list[tuple[str, Callable, float]] = [
    ("joint_ridge_equivalence", check_joint_equivalence, 10.0),
    ("block_update_exactness", check_block_exactness, 10.0),
    ("contraction", check_contraction, 60.0),
    ("schur_positivity", check_schur_positivity, 60.0),
    ("compactness_vs_ri", check_compactness, 120.0),
    ("conditioning_vs_scsm", check_conditioning, 120.0),
    ("pt_monotone_floor", check_pt_monotone, 120.0),
    ("metric_formulas", check_metric_formulas, 10.0),
    ("determinism", check_determinism, 60.0),
    ("end_to_end_vs_joint", check_end_to_end, 120.0),
]


def check_names() -> list[str]:
    return [name for name, _, _ in CHECKS]


def run_one(name: str, tol_scale=1.0, fault=0.0) -> CheckResult:
    for cname, fn, budget in CHECKS:
        if cname == name:
            t0 = time.perf_counter()
            passed, value = fn(tol_scale=tol_scale, fault=fault)
            dt = time.perf_counter() - t0
            return CheckResult(name, bool(passed) and dt <= budget, value, dt, budget)
    raise KeyError(name)


def run_checks(tol_scale=1.0, fault=0.0, names=None, echo=None) -> list[CheckResult]:
    results = []
    for name in names or check_names():
        res = run_one(name, tol_scale, fault)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
