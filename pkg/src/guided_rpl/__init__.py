"""Residual-guided random projection layers for exemplar-free class-incremental learning."""

from .estimator import GuidedRPLClassifier
from .incremental import SufficientStatistic, expand_classes, init_stat, predict, rls_update
from .metrics import AccuracyGrid, a_avg, a_last, f_avg
from .rpl import BasisBlock, RplModel, XiSchedule, make_rng, project, sample_block
from .supervisory import ConstructionConfig, GramState, Strategy, TerminationReason, apply_block, construct

__version__ = "0.1.0"

__all__ = [
    "GuidedRPLClassifier",
    "SufficientStatistic",
    "init_stat",
    "expand_classes",
    "rls_update",
    "predict",
    "AccuracyGrid",
    "a_avg",
    "a_last",
    "f_avg",
    "BasisBlock",
    "RplModel",
    "XiSchedule",
    "make_rng",
    "project",
    "sample_block",
    "ConstructionConfig",
    "GramState",
    "Strategy",
    "TerminationReason",
    "apply_block",
    "construct",
]
