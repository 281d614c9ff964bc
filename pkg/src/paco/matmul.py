"""Rectangular matrix multiplication on a semiring.

The iteration space of ``C = C (+) A (x) B`` is an n-by-m-by-k cuboid whose
faces are the three matrices. Partitioners cut that cuboid:

* :func:`mm_paco_partition` - pruned-BFS assignment; every cut halves the
  longest dimension, so each worker receives a geometrically decreasing
  sequence of cuboids.
* :func:`mm_one_piece_partition` - exactly one cuboid per worker; cut lengths
  follow the floor(p/2):ceil(p/2) worker-list split, while cut *axes* are
  chosen by an even-split virtual cuboid so the shape stays balanced.
* :func:`mm_hetero_partition` - one cuboid per worker, cut by relative
  throughput weights instead of worker counts.

A cut on the k (height) axis makes both halves target the same C region, so
the upper half gets a temporary output buffer and a reduce task folds it back
into the lower half's buffer once both finish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from paco.core import COMPUTE, REDUCE, Plan, PlanError, ProcList, Task, pruned_bfs_assign

MINPLUS_INF = np.int64(2**62)

DEFAULT_BASE = 32


class Semiring:
    """Element algebra (add, mul) plus the dense kernels the engine needs."""

    def __init__(self, name: str, dtype, zero, block_mm: Callable, vadd: Callable):
        self.name = name
        self.dtype = dtype
        self.zero = zero
        self.block_mm = block_mm  # C_block <- C_block (+) A_block (x) B_block
        self.vadd = vadd  # elementwise (+)


def _int_block(C, A, B):
    C += A @ B


def _minplus_block(C, A, B):
    np.minimum(C, np.min(A[:, :, None] + B[None, :, :], axis=1), out=C)


SEMIRING_INT = Semiring("int", np.int64, np.int64(0), _int_block, lambda x, y: x + y)
SEMIRING_F64 = Semiring("f64", np.float64, 0.0, _int_block, lambda x, y: x + y)
SEMIRING_MINPLUS = Semiring("minplus", np.int64, MINPLUS_INF, _minplus_block, np.minimum)

SEMIRINGS = {s.name: s for s in (SEMIRING_INT, SEMIRING_F64, SEMIRING_MINPLUS)}


@dataclass(frozen=True)
class Cuboid:
    """An axis-aligned n x m x k box of the iteration space.

    ``out`` names the buffer receiving this box's C face: 0 is the real
    output, positive ids are temporaries. Offsets into a temp buffer are
    relative to the cut node that allocated it.
    """

    i0: int
    j0: int
    l0: int
    n: int
    m: int
    k: int
    out: int = 0
    out_i0: int = 0
    out_j0: int = 0

    @property
    def volume(self) -> int:
        return self.n * self.m * self.k

    @property
    def surface(self) -> int:
        return self.n * self.m + self.n * self.k + self.m * self.k

    def __str__(self) -> str:
        return (
            f"cuboid[i0={self.i0},j0={self.j0},l0={self.l0},"
            f"n={self.n},m={self.m},k={self.k},out={self.out}]"
        )


def longest_axis(n: int, m: int, k: int) -> str:
    """Longest dimension, ties broken n, then m, then k."""
    if n >= m and n >= k:
        return "n"
    if m >= k:
        return "m"
    return "k"


@dataclass
class _CutNode:
    cuboid: Cuboid
    axis: str | None = None
    children: list = field(default_factory=list)
    temp_id: int = 0  # temp buffer allocated here (k cuts only)
    task_id: int | None = None  # leaf compute task or fold-in reduce task
    reduce_spec: tuple | None = None


class _TempAlloc:
    def __init__(self):
        self.sizes: dict[int, int] = {}
        self._next = 1

    def new(self, n: int, m: int) -> int:
        bid = self._next
        self._next += 1
        self.sizes[bid] = n * m
        return bid

    @property
    def total(self) -> int:
        return sum(self.sizes.values())


def _split_cuboid(node: _CutNode, axis: str, left_len: int, alloc: _TempAlloc) -> list[_CutNode]:
    c = node.cuboid
    node.axis = axis
    if axis == "n":
        if not 0 < left_len < c.n:
            raise PlanError(f"cut would create an empty extent on n={c.n}")
        a = Cuboid(c.i0, c.j0, c.l0, left_len, c.m, c.k, c.out, c.out_i0, c.out_j0)
        b = Cuboid(c.i0 + left_len, c.j0, c.l0, c.n - left_len, c.m, c.k,
                   c.out, c.out_i0 + left_len, c.out_j0)
    elif axis == "m":
        if not 0 < left_len < c.m:
            raise PlanError(f"cut would create an empty extent on m={c.m}")
        a = Cuboid(c.i0, c.j0, c.l0, c.n, left_len, c.k, c.out, c.out_i0, c.out_j0)
        b = Cuboid(c.i0, c.j0 + left_len, c.l0, c.n, c.m - left_len, c.k,
                   c.out, c.out_i0, c.out_j0 + left_len)
    else:
        if not 0 < left_len < c.k:
            raise PlanError(f"cut would create an empty extent on k={c.k}")
        # Lower half keeps the parent's output face; upper half gets a temp.
        tid = alloc.new(c.n, c.m)
        node.temp_id = tid
        a = Cuboid(c.i0, c.j0, c.l0, c.n, c.m, left_len, c.out, c.out_i0, c.out_j0)
        b = Cuboid(c.i0, c.j0, c.l0 + left_len, c.n, c.m, c.k - left_len, tid, 0, 0)
    node.children = [_CutNode(a), _CutNode(b)]
    return node.children


def _attach_reduces(plan_tasks: list[Task], root: _CutNode, p: int) -> None:
    """Walk the cut tree in postorder; each k cut folds the upper child's temp
    into the lower child's output once both subtrees have finished."""

    def exits(node: _CutNode) -> tuple[int, ...]:
        if not node.children:
            if node.task_id is None:
                raise PlanError("unassigned leaf in cut tree")
            return (node.task_id,)
        lo, hi = node.children
        lo_exits, hi_exits = exits(lo), exits(hi)
        if node.axis != "k":
            return lo_exits + hi_exits
        c = node.cuboid
        workers = tuple(sorted({w for tid in lo_exits + hi_exits
                                for w in plan_tasks[tid].workers()}))
        t = Task(
            id=len(plan_tasks),
            kind=REDUCE,
            region=f"reduce[temp={node.temp_id}->out={c.out},n={c.n},m={c.m}]",
            worker=workers if len(workers) > 1 else workers[0],
            deps=tuple(sorted(lo_exits + hi_exits)),
            cost_work=c.n * c.m,
        )
        plan_tasks.append(t)
        node.task_id = t.id
        node.reduce_spec = (node.temp_id, c.out, c.out_i0, c.out_j0, c.n, c.m)
        return (t.id,)

    exits(root)


def _finish_plan(tasks: list[Task], root: _CutNode, p: int, n, m, k, alloc, variant, base) -> Plan:
    _attach_reduces(tasks, root, p)
    reduces = []

    def collect(node: _CutNode):
        if node.children:
            if node.axis == "k":
                reduces.append((node.task_id, *node.reduce_spec))
            for ch in node.children:
                collect(ch)

    collect(root)
    meta = {
        "algo": "mm",
        "variant": variant,
        "n": n,
        "m": m,
        "k": k,
        "base": base,
        "temp_sizes": dict(sorted(alloc.sizes.items())),
        "temp_peak": alloc.total,
        "reduces": {tid: spec for tid, *spec in sorted(reduces)},
    }
    return Plan(tasks=tasks, p=p, meta=meta)


def mm_paco_partition(n: int, m: int, k: int, p: int, base: int = DEFAULT_BASE) -> Plan:
    """Pruned-BFS cuboid assignment: even 2-way cuts of the longest dimension."""
    if min(n, m, k) < 1:
        raise PlanError("extents must be >= 1")
    alloc = _TempAlloc()
    root = _CutNode(Cuboid(0, 0, 0, n, m, k))

    def expand(node: _CutNode) -> list[_CutNode]:
        c = node.cuboid
        axis = longest_axis(c.n, c.m, c.k)
        length = {"n": c.n, "m": c.m, "k": c.k}[axis]
        return _split_cuboid(node, axis, length // 2, alloc)

    def is_base(node: _CutNode) -> bool:
        c = node.cuboid
        return max(c.n, c.m, c.k) <= base

    plan = pruned_bfs_assign(
        root, 2, expand, is_base, p, cost=lambda nd: nd.cuboid.volume
    )
    for t in plan.tasks:
        t.region.task_id = t.id
        t.region = t.region.cuboid if False else t.region
    # keep _CutNode regions only long enough to wire reduces, then swap to cuboids
    tasks = plan.tasks
    out = _finish_plan(tasks, root, p, n, m, k, alloc, "paco", base)
    for t in out.tasks:
        if isinstance(t.region, _CutNode):
            t.region = t.region.cuboid
    return out


def _ratio_split(length: int, a: int, b: int) -> int:
    return max(1, length * a // (a + b))


def mm_one_piece_partition(n: int, m: int, k: int, p: int) -> Plan:
    """Exactly one cuboid per worker.

    The real cuboid always cuts the axis an even-split *virtual* cuboid would
    cut (with p rounded up to a power of two), but splits the length by the
    floor:ceil ratio of the worker-list split, so every worker ends up with a
    near-1/p share even for prime p.
    """
    if min(n, m, k) < 1:
        raise PlanError("extents must be >= 1")
    alloc = _TempAlloc()
    root = _CutNode(Cuboid(0, 0, 0, n, m, k))
    tasks: list[Task] = []

    def descend(node: _CutNode, procs: ProcList, virt: tuple[float, float, float]) -> None:
        if len(procs) == 1:
            c = node.cuboid
            node.task_id = len(tasks)
            tasks.append(
                Task(
                    id=len(tasks),
                    kind=COMPUTE,
                    region=c,
                    worker=procs.first,
                    cost_work=c.volume,
                    label=1,
                )
            )
            return
        p1, p2 = procs.split()
        vn, vm, vk = virt
        axis = longest_axis(vn, vm, vk)
        c = node.cuboid
        length = {"n": c.n, "m": c.m, "k": c.k}[axis]
        if length < 2:
            raise PlanError(
                f"extents too small to give every worker a nonempty piece (axis {axis})"
            )
        left = _ratio_split(length, len(p1), len(p2))
        lo, hi = _split_cuboid(node, axis, left, alloc)
        if axis == "n":
            v1, v2 = (vn / 2, vm, vk), (vn / 2, vm, vk)
        elif axis == "m":
            v1, v2 = (vn, vm / 2, vk), (vn, vm / 2, vk)
        else:
            v1, v2 = (vn, vm, vk / 2), (vn, vm, vk / 2)
        descend(lo, p1, v1)
        descend(hi, p2, v2)

    descend(root, ProcList.range(p), (float(n), float(m), float(k)))
    return _finish_plan(tasks, root, p, n, m, k, alloc, "one-piece", 0)


def mm_hetero_partition(n: int, m: int, k: int, weights: tuple[float, ...]) -> Plan:
    """One cuboid per worker, cut lengths proportional to throughput weights."""
    if not weights:
        raise PlanError("need at least one throughput weight")
    if any(w <= 0 for w in weights):
        raise PlanError("throughput weights must be positive")
    if min(n, m, k) < 1:
        raise PlanError("extents must be >= 1")
    p = len(weights)
    alloc = _TempAlloc()
    root = _CutNode(Cuboid(0, 0, 0, n, m, k))
    tasks: list[Task] = []

    def descend(node: _CutNode, procs: ProcList, wts: tuple[float, ...]) -> None:
        if len(procs) == 1:
            c = node.cuboid
            node.task_id = len(tasks)
            tasks.append(
                Task(id=len(tasks), kind=COMPUTE, region=c, worker=procs.first,
                     cost_work=c.volume, label=1)
            )
            return
        p1, p2 = procs.split()
        w1, w2 = wts[: len(p1)], wts[len(p1):]
        c = node.cuboid
        axis = longest_axis(c.n, c.m, c.k)
        length = {"n": c.n, "m": c.m, "k": c.k}[axis]
        left = int(length * sum(w1) / (sum(w1) + sum(w2)))
        left = min(max(left, 1), length - 1)
        if length < 2:
            raise PlanError("weights too skewed for the available integer extents")
        lo, hi = _split_cuboid(node, axis, left, alloc)
        descend(lo, p1, w1)
        descend(hi, p2, w2)

    descend(root, ProcList.range(p), tuple(float(w) for w in weights))
    return _finish_plan(tasks, root, p, n, m, k, alloc, "hetero", 0)


def mm_seq(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    semiring: Semiring = SEMIRING_INT,
    base: int = DEFAULT_BASE,
    sim=None,
    ids: tuple[int, int, int] = (100, 101, 0),
) -> None:
    """Sequential cache-oblivious kernel: C <- C (+) A (x) B.

    Recursive 2-way divide on the longest dimension; the base case is a dense
    block product. With ``sim`` set, every base block also reports its memory
    accesses (row runs of A, B, and C) to the cache state, using row-major
    element indices within each named array.
    """
    n, k = A.shape
    k2, m = B.shape
    if k != k2 or C.shape != (n, m):
        raise ValueError(f"shape mismatch: A{A.shape} B{B.shape} C{C.shape}")
    aid, bid, cid = ids
    a_cols = A.strides[0] // A.itemsize if A.ndim == 2 else k
    # work on index offsets of the *root* arrays so the simulated addresses
    # are stable under recursive slicing
    _mm_rec(A, B, C, 0, 0, 0, n, m, k, semiring, base, sim, aid, bid, cid)


def _mm_rec(A, B, C, i0, j0, l0, n, m, k, sr, base, sim, aid, bid, cid):
    if max(n, m, k) <= base:
        a = A[i0:i0 + n, l0:l0 + k]
        b = B[l0:l0 + k, j0:j0 + m]
        c = C[i0:i0 + n, j0:j0 + m]
        sr.block_mm(c, a, b)
        if sim is not None:
            a_row = A.shape[1]
            b_row = B.shape[1]
            c_row = C.shape[1]
            for i in range(n):
                sim.access_run(aid, (i0 + i) * a_row + l0, k)
                for l in range(k):
                    sim.access_run(bid, (l0 + l) * b_row + j0, m)
                    sim.access_run(cid, (i0 + i) * c_row + j0, m, True)
        return
    axis = longest_axis(n, m, k)
    if axis == "n":
        h = n // 2
        _mm_rec(A, B, C, i0, j0, l0, h, m, k, sr, base, sim, aid, bid, cid)
        _mm_rec(A, B, C, i0 + h, j0, l0, n - h, m, k, sr, base, sim, aid, bid, cid)
    elif axis == "m":
        h = m // 2
        _mm_rec(A, B, C, i0, j0, l0, n, h, k, sr, base, sim, aid, bid, cid)
        _mm_rec(A, B, C, i0, j0 + h, l0, n, m - h, k, sr, base, sim, aid, bid, cid)
    else:
        h = k // 2
        _mm_rec(A, B, C, i0, j0, l0, n, m, h, sr, base, sim, aid, bid, cid)
        _mm_rec(A, B, C, i0, j0, l0 + h, n, m, k - h, sr, base, sim, aid, bid, cid)


def mm_oracle(A: np.ndarray, B: np.ndarray, semiring: Semiring = SEMIRING_INT) -> np.ndarray:
    """Plain triple loop over the defining sums; ground truth for tests."""
    n, k = A.shape
    _, m = B.shape
    C = np.full((n, m), semiring.zero, dtype=semiring.dtype)
    for i in range(n):
        for j in range(m):
            acc = semiring.zero
            for l in range(k):
                if semiring is SEMIRING_MINPLUS:
                    acc = min(acc, A[i, l] + B[l, j])
                else:
                    acc = acc + A[i, l] * B[l, j]
            C[i, j] = semiring.vadd(C[i, j], acc) if semiring is SEMIRING_MINPLUS else acc
    return C


def mm_execute(
    plan: Plan,
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    semiring: Semiring = SEMIRING_INT,
    mode: str = "serial_sim",
    sims: dict | None = None,
):
    """Run an mm plan: compute tasks call the sequential kernel into their
    assigned output buffer, reduce tasks fold temps back down the cut tree."""
    from paco.core import execute_plan

    temps = {
        bid: np.full(size and _temp_shape(plan, bid) or (0,), semiring.zero, dtype=semiring.dtype)
        for bid, size in plan.meta["temp_sizes"].items()
    }
    reduces = plan.meta["reduces"]
    base = plan.meta.get("base") or DEFAULT_BASE

    def buffer_of(c: Cuboid) -> np.ndarray:
        return C if c.out == 0 else temps[c.out]

    def runner(task: Task) -> None:
        if task.kind == COMPUTE:
            c: Cuboid = task.region
            out = buffer_of(c)
            view = out[c.out_i0:c.out_i0 + c.n, c.out_j0:c.out_j0 + c.m]
            sim = sims.get(task.worker) if sims else None
            mm_seq(
                A[c.i0:c.i0 + c.n, c.l0:c.l0 + c.k],
                B[c.l0:c.l0 + c.k, c.j0:c.j0 + c.m],
                view,
                semiring,
                base,
                sim=sim,
                ids=(100, 101, 200 + c.out),
            )
        elif task.kind == REDUCE:
            tid, out, oi, oj, n, m = reduces[task.id]
            target = C if out == 0 else temps[out]
            tview = target[oi:oi + n, oj:oj + m]
            np.copyto(tview, semiring.vadd(tview, temps[tid]))
            temps[tid].fill(semiring.zero)

    return execute_plan(plan, runner, mode, sims=sims)


def _temp_shape(plan: Plan, bid: int) -> tuple[int, int]:
    for spec in plan.meta["reduces"].values():
        if spec[0] == bid:
            return (spec[4], spec[5])
    raise PlanError(f"temp buffer {bid} has no reduce")
