"""MaxCut instances on regular graphs.

Random regular graphs come from the pairing (configuration) model with
full restarts. The cost diagonal uses a fixed bit convention shared by the
whole package: bit ``j`` of a basis index is qubit/vertex ``j`` and bit value
0 maps to spin +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

MAX_QUBITS = 24
ISOMORPHISM_MAX_N = 12


class GraphParityError(ValueError):
    """Raised when n and the regularity cannot form a simple regular graph."""


class GraphGenerationError(RuntimeError):
    """Raised when the pairing model keeps producing non-simple graphs."""


class CapacityError(ValueError):
    """Raised when an instance is too large for a dense statevector."""


class GraphFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GraphInstance:
    id: str
    n: int
    edges: tuple[tuple[int, int, float], ...]
    regularity: int = 3

    def __post_init__(self):
        validate_graph(self)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)

    @property
    def weighted(self) -> bool:
        return any(w != 1.0 for _, _, w in self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=int)
        for v1, v2, _ in self.edges:
            a[v1, v2] = a[v2, v1] = 1
        return a

    def cut_value(self, bits) -> float:
        """Total weight of edges whose endpoints carry different bits."""
        return float(sum(w for v1, v2, w in self.edges if bits[v1] != bits[v2]))


def validate_graph(g: GraphInstance) -> None:
    if g.n <= 0:
        raise GraphFormatError(f"{g.id}: vertex count must be positive, got {g.n}")
    if (g.n * g.regularity) % 2:
        raise GraphParityError(f"{g.id}: n*regularity = {g.n * g.regularity} is odd")
    seen = set()
    degree = [0] * g.n
    for v1, v2, w in g.edges:
        if not (0 <= v1 < g.n and 0 <= v2 < g.n):
            raise GraphFormatError(f"{g.id}: edge ({v1}, {v2}) out of range")
        if v1 == v2:
            raise GraphFormatError(f"{g.id}: self-loop on vertex {v1}")
        key = (min(v1, v2), max(v1, v2))
        if key in seen:
            raise GraphFormatError(f"{g.id}: duplicate edge {key}")
        seen.add(key)
        if not (0.0 < w <= 1.0):
            raise GraphFormatError(f"{g.id}: weight {w} outside (0, 1]")
        degree[v1] += 1
        degree[v2] += 1
    if any(d != g.regularity for d in degree):
        raise GraphFormatError(f"{g.id}: not {g.regularity}-regular (degrees {degree})")


def is_connected(n: int, edges) -> bool:
    adj = [[] for _ in range(n)]
    for v1, v2, *_ in edges:
        adj[v1].append(v2)
        adj[v2].append(v1)
    seen = {0}
    stack = [0]
    while stack:
        for u in adj[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


def _pairing_attempt(n: int, regularity: int, rng: np.random.Generator):
    stubs = np.repeat(np.arange(n), regularity)
    rng.shuffle(stubs)
    pairs = set()
    for a, b in stubs.reshape(-1, 2):
        if a == b:
            return None
        key = (int(min(a, b)), int(max(a, b)))
        if key in pairs:
            return None
        pairs.add(key)
    return sorted(pairs)


def generate_regular_graph(
    n: int,
    regularity: int = 3,
    weighted: bool = False,
    rng_seed: int | np.random.Generator = 0,
    *,
    connected: bool = True,
    graph_id: str | None = None,
    max_attempts: int = 100_000,
) -> GraphInstance:
    """Sample a random simple regular graph.

    Edge weights are uniform in (0, 1] when ``weighted``; otherwise all 1.
    Disconnected samples are rejected unless ``connected`` is False.
    """
    if regularity < 1 or n < regularity + 1:
        raise GraphParityError(f"need n >= regularity + 1, got n={n}, regularity={regularity}")
    if (n * regularity) % 2:
        raise GraphParityError(f"n*regularity must be even, got {n}*{regularity}")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_attempts):
        pairs = _pairing_attempt(n, regularity, rng)
        if pairs is None:
            continue
        if connected and not is_connected(n, pairs):
            continue
        if weighted:
            # 1 - U[0,1) lies in (0, 1]
            weights = 1.0 - rng.random(len(pairs))
        else:
            weights = np.ones(len(pairs))
        edges = tuple((a, b, float(w)) for (a, b), w in zip(pairs, weights))
        gid = graph_id or f"{'w' if weighted else 'u'}{regularity}r_n{n}"
        return GraphInstance(id=gid, n=n, edges=edges, regularity=regularity)
    raise GraphGenerationError(f"no simple graph after {max_attempts} pairing attempts (n={n})")


# -- isomorphism -----------------------------------------------------------


def generate_ensemble(
    n: int, count: int, weighted: bool, seed: int = 0, *, regularity: int = 3, connected: bool = True
) -> list[GraphInstance]:
    """``count`` graphs, graph i drawn from its own stream keyed by (seed, n, i)."""
    prefix = ("w" if weighted else "u") + f"{regularity}r"
    graphs = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, i)))
        graphs.append(
            generate_regular_graph(
                n, regularity, weighted, rng, connected=connected, graph_id=f"{prefix}_n{n}_s{seed}_{i:03d}"
            )
        )
    return graphs


def _invariants(adj: np.ndarray):
    a3 = np.linalg.matrix_power(adj, 3)
    tri = tuple(sorted(np.diag(a3) // 2))
    spectrum = tuple(np.round(np.linalg.eigvalsh(adj.astype(float)), 6))
    return tuple(sorted(adj.sum(1))), tri, spectrum


def are_isomorphic(adj1: np.ndarray, adj2: np.ndarray) -> bool:
    """Exhaustive backtracking search for an adjacency-preserving bijection."""
    n = len(adj1)
    if len(adj2) != n or _invariants(adj1) != _invariants(adj2):
        return False
    nbrs1 = [set(np.flatnonzero(r)) for r in adj1]
    # BFS order keeps already-mapped neighbours available as constraints
    order = []
    for start in range(n):
        if start in order:
            continue
        queue = [start]
        order.append(start)
        while queue:
            v = queue.pop(0)
            for u in sorted(nbrs1[v]):
                if u not in order:
                    order.append(u)
                    queue.append(u)
    deg1 = adj1.sum(1)
    deg2 = adj2.sum(1)
    mapping: dict[int, int] = {}
    used = [False] * n

    def extend(depth: int) -> bool:
        if depth == n:
            return True
        v = order[depth]
        for cand in range(n):
            if used[cand] or deg1[v] != deg2[cand]:
                continue
            if all(adj1[v, u] == adj2[cand, mu] for u, mu in mapping.items()):
                mapping[v] = cand
                used[cand] = True
                if extend(depth + 1):
                    return True
                del mapping[v]
                used[cand] = False
        return False

    return extend(0)


@dataclass
class NonIsomorphicCollection:
    graphs: list[GraphInstance]
    attempts: int
    complete: bool = field(default=True)


def collect_nonisomorphic_u3r(
    n: int,
    attempt_budget: int = 10_000,
    rng_seed: int = 0,
    *,
    regularity: int = 3,
    stable_after: int = 2_000,
) -> NonIsomorphicCollection:
    """Sample connected unweighted regular graphs and keep one per isomorphism class.

    Sampling stops once ``stable_after`` consecutive draws add no new class;
    running out of budget first marks the collection incomplete.
    """
    if n > ISOMORPHISM_MAX_N:
        raise CapacityError(f"isomorphism search limited to n <= {ISOMORPHISM_MAX_N}")
    rng = np.random.default_rng(rng_seed)
    reps: list[tuple[np.ndarray, GraphInstance]] = []
    since_new = 0
    attempts = 0
    while attempts < attempt_budget:
        attempts += 1
        g = generate_regular_graph(n, regularity, weighted=False, rng_seed=rng)
        adj = g.adjacency()
        if not any(are_isomorphic(adj, other) for other, _ in reps):
            reps.append((adj, g))
            since_new = 0
        else:
            since_new += 1
            if since_new >= stable_after:
                break
    complete = since_new >= stable_after
    # canonical order: invariants make the class labelling independent of sampling order
    reps.sort(key=lambda item: _invariants(item[0]))
    graphs = [
        GraphInstance(id=f"u{regularity}r_n{n}_g{i + 1}", n=n, edges=g.edges, regularity=regularity)
        for i, (_, g) in enumerate(reps)
    ]
    return NonIsomorphicCollection(graphs=graphs, attempts=attempts, complete=complete)


# -- cost diagonal and exact solution ---------------------------------------


@dataclass(frozen=True)
class CostDiagonal:
    """Diagonal of the cost operator plus the constant e0 (half the total weight).

    ``levels``/``level_index`` hold the distinct diagonal values and, per basis
    state, the position of its value in ``levels``.
    """

    n: int
    values: np.ndarray
    e0: float
    levels: np.ndarray = field(init=False, repr=False)
    level_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.size != 1 << self.n:
            raise CapacityError(f"diagonal length {values.size} != 2**{self.n}")
        levels, index = np.unique(values, return_inverse=True)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "level_index", index.astype(np.int64))


@dataclass(frozen=True)
class ExactSolution:
    e_max: float
    ground_indices: np.ndarray
    n: int

    @property
    def degeneracy(self) -> int:
        return len(self.ground_indices)

    @property
    def ground_bitstrings(self) -> set[str]:
        return {index_to_bitstring(z, self.n) for z in self.ground_indices}


@lru_cache(maxsize=32)
def spin_table(n: int) -> np.ndarray:
    """Array ``s[j, z]`` = +1 if bit j of z is 0 else -1."""
    z = np.arange(1 << n)
    bits = (z[None, :] >> np.arange(n)[:, None]) & 1
    table = 1 - 2 * bits.astype(np.int8)
    table.flags.writeable = False
    return table


def index_to_bitstring(z: int, n: int) -> str:
    """Bitstring with character ``j`` equal to bit ``j`` (vertex j first)."""
    return "".join(str((int(z) >> j) & 1) for j in range(n))


def bitstring_to_index(s: str) -> int:
    return sum(int(c) << j for j, c in enumerate(s))


def build_cost_diagonal(g: GraphInstance, max_qubits: int = MAX_QUBITS) -> CostDiagonal:
    if g.n > max_qubits:
        raise CapacityError(f"n={g.n} exceeds the statevector limit of {max_qubits}")
    spins = spin_table(g.n)
    values = np.zeros(1 << g.n)
    for v1, v2, w in g.edges:
        values += 0.5 * w * (spins[v1] * spins[v2])
    e0 = 0.5 * float(sum(w for _, _, w in g.edges))
    return CostDiagonal(n=g.n, values=values, e0=e0)


def solve_exact(d: CostDiagonal, atol: float = 1e-9) -> ExactSolution:
    vmin = float(d.values.min())
    ground = np.flatnonzero(d.values <= vmin + atol)
    return ExactSolution(e_max=d.e0 - vmin, ground_indices=ground, n=d.n)


# -- file format -------------------------------------------------------------


def write_graph(g: GraphInstance, path: str | Path) -> None:
    """Write ``n m regularity`` then one ``v1 v2 weight`` line per edge."""
    lines = [f"{g.n} {len(g.edges)} {g.regularity}"]
    lines += [f"{v1} {v2} {w!r}" for v1, v2, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path: str | Path, graph_id: str | None = None) -> GraphInstance:
    path = Path(path)
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise GraphFormatError(f"{path}: header must be 'n m regularity'")
    try:
        n, m, reg = (int(x) for x in rows[0])
        edges = tuple((int(a), int(b), float(w)) for a, b, w in rows[1:])
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
    if len(edges) != m:
        raise GraphFormatError(f"{path}: header says {m} edges, found {len(edges)}")
    if m != n * reg // 2:
        raise GraphFormatError(f"{path}: {m} edges inconsistent with n={n}, regularity={reg}")
    return GraphInstance(id=graph_id or path.stem, n=n, edges=edges, regularity=reg)

