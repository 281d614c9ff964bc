"""Shared task-plan vocabulary and the deterministic DAG execution engine.

Every algorithm in this package reduces to the same two-step shape: build a
static :class:`Plan` (tasks pinned to workers, dependencies explicit), then
run it through :func:`execute_plan`, either as a clocked simulation or on
real threads. There is no work stealing and no dynamic scheduling; identical
inputs always produce identical plans and identical cost reports.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from time import perf_counter
from typing import Any, Callable

COMPUTE = "compute"
MERGE = "merge"
REDUCE = "reduce"

SERIAL_SIM = "serial_sim"
PARALLEL = "parallel"

_KINDS = (COMPUTE, MERGE, REDUCE)


class PlanError(ValueError):
    """Malformed plan, bad worker count, or a runaway tree expansion."""


@dataclass(frozen=True)
class ProcList:
    """Ordered set of worker ids, split at the division points of a recursion."""

    ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.ids:
            raise PlanError("empty processor list")
        if any(b <= a for a, b in zip(self.ids, self.ids[1:])):
            raise PlanError(f"worker ids must be distinct and ascending: {self.ids}")

    @classmethod
    def range(cls, p: int) -> "ProcList":
        if p < 1:
            raise PlanError(f"need at least one worker, got p={p}")
        return cls(tuple(range(p)))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def first(self) -> int:
        return self.ids[0]

    def split(self) -> tuple["ProcList", "ProcList"]:
        """Two halves of size floor(p/2) and ceil(p/2); left is the smaller."""
        h = len(self.ids) // 2
        if h == 0:
            raise PlanError("cannot split a singleton processor list")
        return ProcList(self.ids[:h]), ProcList(self.ids[h:])


@dataclass
class Task:
    """One schedulable unit. Compute tasks carry exactly one worker; merge and
    reduce tasks may carry a worker tuple, in which case their cost is shared
    evenly by the listed workers."""

    id: int
    kind: str
    region: Any
    worker: int | tuple[int, ...]
    deps: tuple[int, ...] = ()
    cost_work: int = 0
    label: int = 0

    def workers(self) -> tuple[int, ...]:
        return (self.worker,) if isinstance(self.worker, int) else tuple(self.worker)


@dataclass
class Plan:
    """A full task DAG plus the worker count it was built for."""

    tasks: list[Task]
    p: int
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for pos, t in enumerate(self.tasks):
            if t.id != pos:
                raise PlanError(f"task id {t.id} out of order at position {pos}")
            if t.kind not in _KINDS:
                raise PlanError(f"unknown task kind {t.kind!r}")
            if t.kind == COMPUTE and not isinstance(t.worker, int):
                raise PlanError(f"compute task {t.id} must have exactly one worker")
            for w in t.workers():
                if not 0 <= w < self.p:
                    raise PlanError(f"task {t.id}: worker {w} out of range for p={self.p}")
            for d in t.deps:
                if not 0 <= d < pos:
                    raise PlanError(f"task {t.id}: dep {d} does not precede it")

    def compute_tasks(self) -> list[Task]:
        return [t for t in self.tasks if t.kind == COMPUTE]

    def dump_text(self) -> str:
        """Line-oriented text form, one task per line (used by --dump-plan)."""
        out = []
        for t in self.tasks:
            w = ",".join(str(x) for x in t.workers())
            d = ",".join(str(x) for x in t.deps)
            out.append(
                f"task {t.id} kind={t.kind} worker={w} label={t.label} "
                f"deps={d} cost={t.cost_work} region={t.region}"
            )
        return "\n".join(out) + "\n"

    def per_worker_label_cost(self) -> dict[int, dict[int, int]]:
        """worker -> label -> summed compute cost; used by balance checks."""
        acc: dict[int, dict[int, int]] = {w: {} for w in range(self.p)}
        for t in self.tasks:
            if t.kind != COMPUTE:
                continue
            row = acc[t.worker]
            row[t.label] = row.get(t.label, 0) + t.cost_work
        return acc


@dataclass
class CostReport:
    """Aggregate cost counters for one plan execution.

    work_total sums task costs over all workers; work_max is the makespan of
    the static schedule (per-worker clocks advanced in plan order, waiting on
    dependencies). Miss counters are filled only when cache simulation is on.
    """

    work_total: int = 0
    work_max: int = 0
    miss_total: int = 0
    miss_max: int = 0
    temp_space_peak: int = 0
    wall_s: float | None = None
    miss_rows: list[tuple[int, int, int, int]] | None = None


def pruned_bfs_assign(
    root: Any,
    arity: int,
    expand: Callable[[Any], list],
    is_base: Callable[[Any], bool],
    p: int,
    *,
    cost: Callable[[Any], int] = lambda node: 1,
    max_depth: int = 64,
    meta: dict | None = None,
) -> Plan:
    """Assign the nodes of a divide-and-conquer tree to ``p`` workers.

    The tree is unfolded depth by depth. At each depth, while at least ``p``
    unassigned nodes remain, exactly ``p`` of them (in left-to-right tree
    order) are cut off and handed to the workers round-robin; the cursor
    persists across batches and depths so total per-worker counts stay within
    one. Survivors keep dividing. Once every survivor is a base case, all of
    them are assigned round-robin in one final wave. Each batch gets its own
    label, in assignment order.
    """
    if arity < 2:
        raise PlanError(f"arity must be >= 2, got {arity}")
    if p < 1:
        raise PlanError(f"need at least one worker, got p={p}")

    tasks: list[Task] = []
    cursor = 0

    def assign(node: Any, label: int) -> None:
        nonlocal cursor
        tasks.append(
            Task(
                id=len(tasks),
                kind=COMPUTE,
                region=node,
                worker=cursor,
                cost_work=cost(node),
                label=label,
            )
        )
        cursor = (cursor + 1) % p

    frontier = [root]
    label = 0
    depth = 0
    while frontier:
        while len(frontier) >= p:
            label += 1
            batch, frontier = frontier[:p], frontier[p:]
            for node in batch:
                assign(node, label)
        if not frontier:
            break
        if all(is_base(n) for n in frontier):
            label += 1
            for node in frontier:
                assign(node, label)
            break
        depth += 1
        if depth > max_depth:
            raise PlanError(f"expansion exceeded depth guard ({max_depth}); non-terminating tree?")
        nxt: list[Any] = []
        for node in frontier:
            if is_base(node):
                nxt.append(node)  # constant-size stragglers ride along unsplit
                continue
            kids = list(expand(node))
            if len(kids) != arity:
                raise PlanError(f"expand yielded {len(kids)} children, expected {arity}")
            nxt.extend(kids)
        frontier = nxt

    return Plan(tasks=tasks, p=p, meta=dict(meta or {}))


def _share(cost: int, nworkers: int) -> int:
    return -(-cost // nworkers)


def _simulate_clocks(plan: Plan) -> tuple[int, int]:
    """(work_total, makespan) of the static schedule, no bodies run."""
    clock = [0] * plan.p
    finish = [0] * len(plan.tasks)
    total = 0
    for t in plan.tasks:
        ws = t.workers()
        start = max([finish[d] for d in t.deps] + [clock[w] for w in ws], default=0)
        end = start + _share(t.cost_work, len(ws))
        for w in ws:
            clock[w] = end
        finish[t.id] = end
        total += t.cost_work
    return total, max(clock, default=0)


def execute_plan(
    plan: Plan,
    runner: Callable[[Task], None] | None = None,
    mode: str = SERIAL_SIM,
    *,
    sims: dict[int, Any] | None = None,
) -> CostReport:
    """Run every task after its dependencies complete.

    ``serial_sim`` advances per-worker clocks by task cost and runs bodies
    inline in plan order; ``parallel`` runs bodies on one real thread per
    worker and additionally reports wall time. Output state is identical in
    both modes. When ``sims`` maps workers to cache states, per-task miss
    counts are collected from compute tasks (task-granular cold start/flush).
    """
    plan.validate()
    if mode not in (SERIAL_SIM, PARALLEL):
        raise PlanError(f"unknown mode {mode!r}")

    work_total, work_max = _simulate_clocks(plan)
    report = CostReport(
        work_total=work_total,
        work_max=work_max,
        temp_space_peak=plan.meta.get("temp_peak", 0),
    )

    rows: list[tuple[int, int, int, int]] = []

    def run_body(t: Task) -> None:
        if runner is not None:
            runner(t)
        if sims is not None and t.kind == COMPUTE and t.worker in sims:
            misses, wb = sims[t.worker].end_task()
            rows.append((t.id, t.worker, misses, wb))

    if mode == SERIAL_SIM:
        if runner is not None or sims is not None:
            for t in plan.tasks:
                run_body(t)
    else:
        wall = _run_threads(plan, run_body)
        report.wall_s = wall
        rows.sort()

    if sims is not None:
        per_worker: dict[int, int] = {}
        for _tid, w, m, _wb in rows:
            per_worker[w] = per_worker.get(w, 0) + m
        report.miss_total = sum(per_worker.values())
        report.miss_max = max(per_worker.values(), default=0)
        report.miss_rows = rows
    return report


def _run_threads(plan: Plan, run_body: Callable[[Task], None]) -> float:
    done = [threading.Event() for _ in plan.tasks]
    queues: list[list[Task]] = [[] for _ in range(plan.p)]
    for t in plan.tasks:
        queues[t.workers()[0]].append(t)
    failures: list[BaseException] = []

    def worker_loop(w: int) -> None:
        for t in queues[w]:
            for d in t.deps:
                done[d].wait()
            if not failures:
                try:
                    run_body(t)
                except BaseException as exc:  # propagate after unblocking peers
                    failures.append(exc)
            done[t.id].set()

    threads = [threading.Thread(target=worker_loop, args=(w,)) for w in range(plan.p)]
    t0 = perf_counter()
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    wall = perf_counter() - t0
    if failures:
        raise failures[0]
    return wall
