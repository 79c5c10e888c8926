"""Random CW-complexes, the cell-counting dataset, and the CWDS file format.

Every complex is padded to a shared maximum profile so that per-cell
learnable weights can be shared across the whole dataset.  Real cells come
first in every dimension.

CWDS layout (UTF-8, one record per line)::

    CWDS 1
    config <dataset_size> <n> <maxN_0> ... <maxN_n> <seed>
    item <index> <target>
    sizes <N_0> ... <N_n>
    B <k>
    <N_{k-1} rows of N_k integers>
    mask <real N_0> ... <real N_n>
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .complex import CWComplex, build_complex, total_cells, validate

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "GeneratorConfig",
    "generate_dataset",
    "item_rng",
    "load_dataset",
    "random_complex",
    "save_dataset",
    "simple_cycles",
    "split",
]

MAGIC = "CWDS"
VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed or unsupported CWDS content."""


DEFAULT_MIN_PROFILE = (3, 3, 1)


@dataclass(frozen=True)
class GeneratorConfig:
    """Generator settings; ``check()`` enforces the generator's own limits."""

    dataset_size: int = 500
    max_profile: tuple[int, ...] = (8, 12, 6)
    min_profile: tuple[int, ...] = DEFAULT_MIN_PROFILE
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "max_profile", tuple(int(x) for x in self.max_profile))
        object.__setattr__(self, "min_profile", tuple(int(x) for x in self.min_profile))

    @property
    def dimension(self) -> int:
        return len(self.max_profile) - 1

    def check(self) -> "GeneratorConfig":
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be at least 1")
        if len(self.max_profile) != len(self.min_profile):
            raise ValueError("min_profile and max_profile need one entry per dimension")
        if not 1 <= self.dimension <= 2:
            raise ValueError("the generator emits complexes of dimension 1 or 2")
        if self.max_profile[0] < 3:
            raise ValueError("maxN_0 must be at least 3")
        if self.min_profile[0] < 1:
            raise ValueError("minN_0 must be at least 1")
        if any(lo > hi for lo, hi in zip(self.min_profile, self.max_profile)):
            raise ValueError(f"min_profile {self.min_profile} exceeds max_profile {self.max_profile}")
        if self.max_profile[1] < self.max_profile[0] - 1:
            raise ValueError("maxN_1 too small to connect maxN_0 vertices")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return self


def default_min_profile(dimension: int) -> tuple[int, ...]:
    return (DEFAULT_MIN_PROFILE + (0,) * dimension)[: dimension + 1]


@dataclass
class Dataset:
    complexes: list[CWComplex]
    targets: list[float]
    config: GeneratorConfig
    indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.complexes) != len(self.targets):
            raise ValueError("one target per complex")
        if not self.indices:
            self.indices = list(range(len(self.complexes)))

    def __len__(self) -> int:
        return len(self.complexes)

    def __iter__(self) -> Iterator[tuple[CWComplex, float]]:
        return iter(zip(self.complexes, self.targets))

    @property
    def seed(self) -> int:
        return self.config.seed

    def subset(self, positions: Sequence[int]) -> "Dataset":
        return Dataset(
            [self.complexes[i] for i in positions],
            [self.targets[i] for i in positions],
            self.config,
            [self.indices[i] for i in positions],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.config == other.config
            and self.indices == other.indices
            and self.targets == other.targets
            and self.complexes == other.complexes
        )


# ------------------------------------------------------------------ graphs


def simple_cycles(num_vertices: int, edges: Sequence[tuple[int, int]]) -> list[list[int]]:
    """All simple cycles of an undirected simple graph, as lists of edge indices.

    Cycles are listed once each (no rotations or reversals), in a
    deterministic order.
    """
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(num_vertices)}
    for j, (u, v) in enumerate(edges):
        adj[u].append((v, j))
        adj[v].append((u, j))
    cycles = []
    for start in range(num_vertices):
        # cycles whose smallest vertex is `start`
        stack = [(start, [start], [])]
        while stack:
            v, path, used = stack.pop()
            for w, j in sorted(adj[v], reverse=True):
                if w == start and len(path) >= 3:
                    # second vertex < last vertex picks one direction
                    if path[1] < path[-1]:
                        cycles.append(used + [j])
                elif w > start and w not in path:
                    stack.append((w, path + [w], used + [j]))
    cycles.sort(key=lambda c: (len(c), sorted(c)))
    return cycles


def _cycle_column(edges: Sequence[tuple[int, int]], cycle: Sequence[int], n_edges: int) -> np.ndarray:
    """Signed edge coefficients of a cycle traversed in order; ``B_1 @ col == 0``."""
    col = np.zeros(n_edges, dtype=np.int64)
    first = edges[cycle[0]]
    second = edges[cycle[1]]
    # start at the endpoint of the first edge not shared with the second
    at = first[0] if first[1] in second else first[1]
    for j in cycle:
        tail, head = edges[j]
        if at == tail:
            col[j] = 1
            at = head
        else:
            col[j] = -1
            at = tail
    return col


def random_complex(
    max_profile: Sequence[int],
    rng: np.random.Generator,
    min_profile: Sequence[int] | None = None,
) -> tuple[CWComplex, dict]:
    """Sample a connected, padded complex of dimension ``len(max_profile) - 1``.

    Returns the complex and a provenance dict recording any clamping.
    """
    max_profile = tuple(max_profile)
    dim = len(max_profile) - 1
    min_profile = tuple(min_profile) if min_profile is not None else (1,) + (0,) * dim
    prov: dict = {"clamped": []}

    n0 = int(rng.integers(min_profile[0], max_profile[0] + 1))
    edges: list[tuple[int, int]] = []
    if dim >= 1:
        max_edges = n0 * (n0 - 1) // 2
        lo = max(n0 - 1, min_profile[1])
        hi = max_profile[1]
        if dim >= 2 and min_profile[2] > 0:
            lo = max(lo, n0)  # at least one cycle
        if lo > max_edges:
            prov["clamped"].append(("N_1", lo, max_edges))
            lo = max_edges
        n1 = int(rng.integers(lo, hi + 1)) if hi >= lo else lo
        if n1 > max_edges:
            prov["clamped"].append(("N_1", n1, max_edges))
            n1 = max_edges
        if n1 > hi:
            raise ValueError(f"cannot connect {n0} vertices with at most {hi} edges")

        # random spanning tree: attach each vertex of a shuffled order to an earlier one
        order = rng.permutation(n0)
        present = set()
        for pos in range(1, n0):
            v = int(order[pos])
            u = int(order[rng.integers(0, pos)])
            edges.append((u, v))
            present.add(frozenset((u, v)))
        missing = [(u, v) for u, v in itertools.combinations(range(n0), 2) if frozenset((u, v)) not in present]
        extra = rng.choice(len(missing), size=n1 - len(edges), replace=False) if n1 > len(edges) else []
        edges.extend(missing[int(i)] for i in sorted(extra))
        perm = rng.permutation(len(edges))
        edges = [edges[int(i)] for i in perm]
        edges = [(u, v) if rng.random() < 0.5 else (v, u) for u, v in edges]

    real = [n0, len(edges)]
    b1 = np.zeros((max_profile[0], max_profile[1]), dtype=np.int64)
    for j, (tail, head) in enumerate(edges):
        b1[tail, j] = -1
        b1[head, j] = 1
    mats = [b1]

    if dim >= 2:
        cycles = simple_cycles(n0, [tuple(sorted(e)) for e in edges])
        want = int(rng.integers(min_profile[2], max_profile[2] + 1))
        if want > len(cycles):
            prov["clamped"].append(("N_2", want, len(cycles)))
            want = len(cycles)
        chosen = rng.choice(len(cycles), size=want, replace=False) if want else []
        b2 = np.zeros((max_profile[1], max_profile[2]), dtype=np.int64)
        for col, ci in enumerate(chosen):
            sign = 1 if rng.random() < 0.5 else -1
            b2[: len(edges), col] = sign * _cycle_column(edges, cycles[int(ci)], len(edges))
        mats.append(b2)
        real.append(want)

    cx = build_complex(dim, max_profile, mats, real_sizes=real)
    return cx, prov


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for item ``index`` (SeedSequence spawn key)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def generate_dataset(config: GeneratorConfig = GeneratorConfig()) -> Dataset:
    config.check()
    complexes, targets = [], []
    for i in range(config.dataset_size):
        cx, _ = random_complex(config.max_profile, item_rng(config.seed, i), config.min_profile)
        complexes.append(cx)
        targets.append(float(total_cells(cx)))
    return Dataset(complexes, targets, config)


def split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Shuffled split into ``floor(f * N)`` training items and the rest."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_train = int(np.floor(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} items at {train_fraction} leaves one side empty")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    return dataset.subset(sorted(perm[:n_train].tolist())), dataset.subset(sorted(perm[n_train:].tolist()))


# ------------------------------------------------------------- CWDS format


def _fmt_target(x: float) -> str:
    return repr(float(x))


def dumps_dataset(dataset: Dataset) -> str:
    cfg = dataset.config
    lines = [f"{MAGIC} {VERSION}"]
    lines.append(
        "config {} {} {} {}".format(
            len(dataset), cfg.dimension, " ".join(map(str, cfg.max_profile)), cfg.seed
        )
    )
    if cfg.min_profile != default_min_profile(cfg.dimension):
        lines.append("minprofile " + " ".join(map(str, cfg.min_profile)))
    for idx, (cx, target) in zip(dataset.indices, dataset):
        lines.append(f"item {idx} {_fmt_target(target)}")
        lines.append("sizes " + " ".join(map(str, cx.skeleton_sizes)))
        for k, b in enumerate(cx.incidence, start=1):
            lines.append(f"B {k}")
            lines.extend(" ".join(str(int(x)) for x in row) for row in b)
        lines.append("mask " + " ".join(map(str, cx.real_sizes)))
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8", newline="\n")


def _ints(tokens: Sequence[str], lineno: int, what: str) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: {what}: expected integers, got {' '.join(tokens)!r}") from None


def loads_dataset(text: str) -> Dataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    pos = 0

    def take(expect: str | None = None) -> tuple[list[str], int]:
        nonlocal pos
        if pos >= len(lines):
            raise DatasetFormatError(f"line {pos + 1}: unexpected end of file" + (f", expected '{expect}'" if expect else ""))
        tokens = lines[pos].split()
        pos += 1
        if expect is not None and (not tokens or tokens[0] != expect):
            raise DatasetFormatError(f"line {pos}: expected '{expect}', got {lines[pos - 1]!r}")
        return tokens, pos

    head, ln = take()
    if len(head) != 2 or head[0] != MAGIC:
        raise DatasetFormatError(f"line {ln}: not a CWDS file")
    if head[1] != str(VERSION):
        raise DatasetFormatError(f"line {ln}: unsupported CWDS version {head[1]} (reader supports {VERSION})")
    cfg_tokens, ln = take("config")
    vals = _ints(cfg_tokens[1:], ln, "config")
    if len(vals) < 3:
        raise DatasetFormatError(f"line {ln}: config: too few fields")
    size, n = vals[0], vals[1]
    if len(vals) != n + 4:
        raise DatasetFormatError(f"line {ln}: config: expected {n + 4} fields for dimension {n}, got {len(vals)}")
    max_profile = tuple(vals[2 : 3 + n])
    seed = vals[-1]
    min_profile = None
    if pos < len(lines) and lines[pos].startswith("minprofile"):
        toks, ln = take("minprofile")
        min_profile = tuple(_ints(toks[1:], ln, "minprofile"))
    config = GeneratorConfig(size, max_profile, min_profile or default_min_profile(n), seed)

    complexes, targets, indices = [], [], []
    for _ in range(size):
        toks, ln = take("item")
        if len(toks) != 3:
            raise DatasetFormatError(f"line {ln}: item: expected 'item <index> <target>'")
        indices.append(_ints(toks[1:2], ln, "item index")[0])
        try:
            targets.append(float(toks[2]))
        except ValueError:
            raise DatasetFormatError(f"line {ln}: item: bad target {toks[2]!r}") from None
        toks, ln = take("sizes")
        sizes = _ints(toks[1:], ln, "sizes")
        dim = len(sizes) - 1
        mats = []
        for k in range(1, dim + 1):
            toks, ln = take("B")
            if _ints(toks[1:], ln, "B") != [k]:
                raise DatasetFormatError(f"line {ln}: expected 'B {k}'")
            rows = []
            for _r in range(sizes[k - 1]):
                toks, ln = take()
                row = _ints(toks, ln, f"B {k} row")
                if len(row) != sizes[k]:
                    raise DatasetFormatError(f"line {ln}: B {k} row has {len(row)} entries, expected {sizes[k]}")
                rows.append(row)
            mats.append(np.array(rows, dtype=np.int64).reshape(sizes[k - 1], sizes[k]))
        toks, ln = take("mask")
        real = _ints(toks[1:], ln, "mask")
        if len(real) != dim + 1:
            raise DatasetFormatError(f"line {ln}: mask: expected {dim + 1} counts")
        try:
            cx = build_complex(dim, sizes, mats, real_sizes=real)
        except ValueError as exc:
            raise DatasetFormatError(f"line {ln}: invalid complex: {exc}") from None
        complexes.append(cx)
    if pos != len(lines):
        raise DatasetFormatError(f"line {pos + 1}: trailing content after {size} items")
    return Dataset(complexes, targets, config, indices)


def load_dataset(path: str | Path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


def check_dataset(dataset: Dataset) -> list[tuple[int, object]]:
    """Items failing validation or whose target is not their cell count."""
    bad = []
    for idx, (cx, y) in zip(dataset.indices, dataset):
        report = validate(cx)
        if not report.ok:
            bad.append((idx, report))
        elif y != total_cells(cx):
            bad.append((idx, f"target {y} != total_cells {total_cells(cx)}"))
    return bad
