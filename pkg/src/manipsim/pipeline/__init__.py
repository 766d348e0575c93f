from .evaluation import evaluate, evaluation_population, report_from_log
from .stages import (ClickHistory, collect, collect_oracle, make_strategy, mix, mix_count, sample_recall,
                     slate_group_recall)
from .rundir import Manifest, RunDir
from .sweep import sweep, verify
from .world import World, build_world, compute_initial_preferences, heldout_users

__all__ = [
    "evaluate", "evaluation_population", "report_from_log", "ClickHistory", "collect",
    "collect_oracle", "make_strategy", "mix", "mix_count", "sample_recall", "slate_group_recall",
    "Manifest", "RunDir", "sweep", "verify",
    "World", "build_world", "compute_initial_preferences", "heldout_users",
]
