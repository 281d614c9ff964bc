"""Processor-aware cache-oblivious (PACO) partitioning library.

Each algorithm module builds a static, deterministic task plan by a pruned
breadth-first traversal of its divide-and-conquer tree, then hands the plan
to the shared execution engine. The engine runs plans either as a clocked
simulation (work/span/cache accounting) or on real worker threads.
"""

from paco.core import (
    COMPUTE,
    MERGE,
    REDUCE,
    CostReport,
    Plan,
    PlanError,
    ProcList,
    Task,
    execute_plan,
    pruned_bfs_assign,
)

__all__ = [
    "COMPUTE",
    "MERGE",
    "REDUCE",
    "CostReport",
    "Plan",
    "PlanError",
    "ProcList",
    "Task",
    "execute_plan",
    "pruned_bfs_assign",
]

__version__ = "0.1.0"
