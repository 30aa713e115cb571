"""Symbolic expression trees (genes): representation, evaluation, variation.

A tree is stored as an immutable tuple of ``(opcode, arg)`` pairs in prefix
order. Binary operators carry ``arg = 0``; variables carry a global feature
index, constants a float, and abstracted features an integer registry id.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigurationError, StructuralError

ADD, SUB, MUL, DIV, VAR, CONST, ABS = 0, 1, 2, 3, 4, 5, 6
BINARY = (ADD, SUB, MUL, DIV)
SYMBOLS = {ADD: "+", SUB: "-", MUL: "*", DIV: "/"}
_OP_BY_SYMBOL = {v: k for k, v in SYMBOLS.items()}

DEFAULT_MAX_DEPTH = 15
MAX_RETRIES = 8
INIT_DEPTH_RANGE = (2, 6)
CONSTANT_SIGMA_FRACTION = 0.05


class ExprTree:
    """Immutable expression tree in prefix form."""

    __slots__ = ("nodes", "depth", "_hash", "_encoded")

    def __init__(self, nodes):
        nodes = tuple(nodes)
        if not nodes:
            raise StructuralError("empty expression tree")
        self.nodes = nodes
        self.depth = _prefix_depth(nodes)
        self._hash = hash(nodes)
        self._encoded = None

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        return isinstance(other, ExprTree) and self.nodes == other.nodes

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ExprTree({serialize(self)})"

    def subtree_end(self, i: int) -> int:
        """Index one past the subtree rooted at node ``i``."""
        return _subtree_end(self.nodes, i)

    def subtree(self, i: int) -> "ExprTree":
        return ExprTree(self.nodes[i:self.subtree_end(i)])

    def replace(self, i: int, sub: "ExprTree") -> "ExprTree":
        """Return a copy with the subtree at ``i`` replaced by ``sub``."""
        return ExprTree(self.nodes[:i] + sub.nodes + self.nodes[self.subtree_end(i):])

    def variables(self) -> set[int]:
        return {a for op, a in self.nodes if op == VAR}

    def abstractions(self) -> set[int]:
        return {a for op, a in self.nodes if op == ABS}

    def constant_positions(self) -> list[int]:
        return [i for i, (op, _) in enumerate(self.nodes) if op == CONST]

    def node_depths(self) -> list[int]:
        """Depth of every node (root = 1), prefix order."""
        depths = []
        pending = []
        d = 1
        for op, _ in self.nodes:
            depths.append(d)
            if op in BINARY:
                pending.append(d + 1)
                pending.append(d + 1)
            if pending:
                d = pending.pop()
        return depths


def _subtree_end(nodes, i):
    need = 1
    j = i
    while need:
        need += 1 if nodes[j][0] in BINARY else -1
        j += 1
    return j


def _prefix_depth(nodes):
    stack = []
    for op, _ in reversed(nodes):
        if op in BINARY:
            a = stack.pop()
            b = stack.pop()
            stack.append(1 + (a if a > b else b))
        else:
            stack.append(1)
    if len(stack) != 1:
        raise StructuralError("malformed prefix sequence")
    return stack[0]


# -- constructors -----------------------------------------------------------

def var(index: int) -> ExprTree:
    return ExprTree(((VAR, int(index)),))


def const(value: float) -> ExprTree:
    return ExprTree(((CONST, float(value)),))


def feature(abstraction_id: int) -> ExprTree:
    return ExprTree(((ABS, int(abstraction_id)),))


def binary(op: int, left: ExprTree, right: ExprTree) -> ExprTree:
    return ExprTree(((op, 0),) + left.nodes + right.nodes)


def add(a, b):
    return binary(ADD, a, b)


def sub(a, b):
    return binary(SUB, a, b)


def mul(a, b):
    return binary(MUL, a, b)


def div(a, b):
    return binary(DIV, a, b)


# -- terminal set and abstraction registry ------------------------------------

@dataclass(frozen=True)
class TerminalSet:
    variables: tuple[int, ...]
    abstractions: tuple[int, ...] = ()
    constant_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ConfigurationError("duplicate variable index in terminal set")
        lo, hi = self.constant_range
        if not lo <= hi:
            raise ConfigurationError(f"bad constant range {self.constant_range}")

    @property
    def size(self) -> int:
        # the ephemeral random constant counts as one terminal
        return len(self.variables) + len(self.abstractions) + 1

    def with_abstraction(self, abstraction_id: int) -> "TerminalSet":
        if abstraction_id in self.abstractions:
            raise StructuralError(f"abstraction z{abstraction_id} already in terminal set")
        return TerminalSet(self.variables, self.abstractions + (abstraction_id,),
                           self.constant_range)


@dataclass
class AbstractionRegistry:
    """Maps abstraction ids to raw-feature expressions.

    Ids are assigned sequentially from 1, so ``z<k>`` occupies column
    ``n_raw + k - 1`` of an augmented data matrix.
    """
    expressions: dict = field(default_factory=dict)

    @property
    def next_id(self) -> int:
        return len(self.expressions) + 1

    def __len__(self):
        return len(self.expressions)

    def __contains__(self, key):
        return key in self.expressions

    def register(self, abstraction_id: int, tree: ExprTree) -> None:
        if abstraction_id in self.expressions:
            raise StructuralError(f"duplicate abstraction id z{abstraction_id}")
        if abstraction_id != self.next_id:
            raise StructuralError(
                f"abstraction ids must be sequential; expected z{self.next_id}")
        if tree.abstractions():
            raise StructuralError("registered expressions must be fully expanded")
        self.expressions[abstraction_id] = tree

    def lookup(self, abstraction_id: int) -> ExprTree:
        try:
            return self.expressions[abstraction_id]
        except KeyError:
            raise StructuralError(f"unresolved abstraction id z{abstraction_id}") from None

    def snapshot(self) -> "AbstractionRegistry":
        return AbstractionRegistry(dict(self.expressions))


def expand(tree: ExprTree, registry: AbstractionRegistry | None) -> ExprTree:
    """Substitute every abstracted feature by its raw-feature expression."""
    if not any(op == ABS for op, _ in tree.nodes):
        return tree
    if registry is None:
        raise StructuralError("tree references abstractions but no registry given")
    out = []
    for op, a in tree.nodes:
        if op == ABS:
            out.extend(expand(registry.lookup(a), registry).nodes)
        else:
            out.append((op, a))
    return ExprTree(out)


# -- evaluation ---------------------------------------------------------------

def encode(tree: ExprTree, n_raw: int):
    """Lower a tree to kernel arrays ``(codes, args, stack_size)``.

    Abstraction ``z<k>`` becomes a column reference to ``n_raw + k - 1``.
    """
    enc = tree._encoded
    if enc is not None and enc[0] == n_raw:
        return enc[1]
    m = len(tree.nodes)
    codes = np.empty(m, dtype=np.int32)
    args = np.empty(m, dtype=np.float64)
    for i, (op, a) in enumerate(tree.nodes):
        if op == ABS:
            codes[i] = VAR
            args[i] = n_raw + a - 1
        else:
            codes[i] = op
            args[i] = a
    sp = peak = 0
    for op, _ in reversed(tree.nodes):
        sp += -1 if op in BINARY else 1
        peak = max(peak, sp)
    result = (codes, args, peak)
    tree._encoded = (n_raw, result)
    return result


class DataView:
    """Raw feature matrix plus cached columns for registered abstractions.

    Gene outputs are memoised per tree; the cache is dropped when it grows
    past ``cache_limit`` entries.
    """

    def __init__(self, X, registry: AbstractionRegistry | None = None,
                 cache_limit: int = 50_000):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        self.X = X
        self.n_raw = X.shape[1]
        self.registry = registry if registry is not None else AbstractionRegistry()
        self._aug = X
        self._n_abs = 0
        self._cache: dict[ExprTree, np.ndarray] = {}
        self.cache_limit = cache_limit

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def matrix(self) -> np.ndarray:
        k = len(self.registry)
        if k != self._n_abs:
            cols = [self._aug]
            for zid in range(self._n_abs + 1, k + 1):
                expr = self.registry.lookup(zid)
                codes, args, stack = encode(expr, self.n_raw)
                cols.append(_backend.eval_program(codes, args, self.X, stack)[:, None])
            self._aug = np.ascontiguousarray(np.hstack(cols))
            self._n_abs = k
        return self._aug

    def outputs(self, tree: ExprTree) -> np.ndarray:
        out = self._cache.get(tree)
        if out is None:
            for zid in tree.abstractions():
                if zid not in self.registry:
                    raise StructuralError(f"unresolved abstraction id z{zid}")
            for v in tree.variables():
                if not 0 <= v < self.n_raw:
                    raise StructuralError(f"variable index {v} out of range")
            codes, args, stack = encode(tree, self.n_raw)
            out = _backend.eval_program(codes, args, self.matrix(), stack)
            out.flags.writeable = False
            if len(self._cache) >= self.cache_limit:
                self._cache.clear()
            self._cache[tree] = out
        return out


def evaluate_batch(tree: ExprTree, X, registry: AbstractionRegistry | None = None) -> np.ndarray:
    """Evaluate ``tree`` on every row of ``X`` with protected arithmetic."""
    return DataView(X, registry).outputs(tree)


def evaluate(tree: ExprTree, row, registry: AbstractionRegistry | None = None) -> float:
    """Evaluate ``tree`` on a single feature vector."""
    row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    return float(evaluate_batch(tree, row, registry)[0])


# -- construction -----------------------------------------------------------

def _random_terminal(terminals: TerminalSet, rng):
    nv = len(terminals.variables)
    na = len(terminals.abstractions)
    k = int(rng.integers(nv + na + 1))
    if k < nv:
        return (VAR, terminals.variables[k])
    if k < nv + na:
        return (ABS, terminals.abstractions[k - nv])
    lo, hi = terminals.constant_range
    return (CONST, float(rng.uniform(lo, hi)))


def _build(terminals, max_depth, rng, full):
    if not terminals.variables and not terminals.abstractions:
        raise ConfigurationError("empty terminal set")
    if max_depth < 1:
        raise ConfigurationError("max_depth must be >= 1")
    nodes = []
    # each entry is the depth of a node still to be generated
    todo = [1]
    n_func = len(BINARY)
    while todo:
        d = todo.pop()
        if d >= max_depth:
            is_func = False
        elif full:
            is_func = True
        else:
            is_func = int(rng.integers(n_func + terminals.size)) < n_func
        if is_func:
            nodes.append((BINARY[int(rng.integers(n_func))], 0))
            todo.append(d + 1)
            todo.append(d + 1)
        else:
            nodes.append(_random_terminal(terminals, rng))
    return ExprTree(nodes)


def grow_init(terminals: TerminalSet, max_depth: int, rng) -> ExprTree:
    """Grow method: functions and terminals drawn from their union until ``max_depth``."""
    return _build(terminals, max_depth, rng, full=False)


def full_init(terminals: TerminalSet, max_depth: int, rng) -> ExprTree:
    """Full method: every leaf sits at exactly ``max_depth``."""
    return _build(terminals, max_depth, rng, full=True)


def ramped_half_and_half(terminals: TerminalSet, count: int, rng,
                         depth_range=INIT_DEPTH_RANGE,
                         max_depth: int = DEFAULT_MAX_DEPTH) -> list[ExprTree]:
    lo, hi = depth_range
    trees = []
    for i in range(count):
        d = min(int(rng.integers(lo, hi + 1)), max_depth)
        trees.append(_build(terminals, d, rng, full=bool(i % 2)))
    return trees


# -- variation --------------------------------------------------------------

def subtree_crossover(a: ExprTree, b: ExprTree, max_depth: int, rng):
    """Swap random subtrees of ``a`` and ``b``.

    Retries the point selection when an offspring would exceed ``max_depth``;
    after ``MAX_RETRIES`` failures the parents are returned unchanged.
    """
    for _ in range(MAX_RETRIES):
        i = int(rng.integers(len(a.nodes)))
        j = int(rng.integers(len(b.nodes)))
        ea = a.subtree_end(i)
        eb = b.subtree_end(j)
        c1 = ExprTree(a.nodes[:i] + b.nodes[j:eb] + a.nodes[ea:])
        c2 = ExprTree(b.nodes[:j] + a.nodes[i:ea] + b.nodes[eb:])
        if c1.depth <= max_depth and c2.depth <= max_depth:
            return c1, c2
    return a, b


def subtree_mutation(a: ExprTree, terminals: TerminalSet, max_depth: int, rng,
                     subtree_depth: int = INIT_DEPTH_RANGE[1]) -> ExprTree:
    """Replace a random subtree by a freshly grown one."""
    for _ in range(MAX_RETRIES):
        i = int(rng.integers(len(a.nodes)))
        fresh = grow_init(terminals, min(subtree_depth, max_depth), rng)
        child = a.replace(i, fresh)
        if child.depth <= max_depth:
            return child
    return a


def constant_mutation(a: ExprTree, constant_range, rng) -> ExprTree:
    """Gaussian perturbation of one constant, clamped to ``constant_range``.

    Trees without constants are returned unchanged.
    """
    positions = a.constant_positions()
    if not positions:
        return a
    i = positions[int(rng.integers(len(positions)))]
    lo, hi = constant_range
    sigma = CONSTANT_SIGMA_FRACTION * (hi - lo)
    v = a.nodes[i][1] + float(rng.normal(0.0, sigma))
    v = min(max(v, lo), hi)
    return ExprTree(a.nodes[:i] + ((CONST, v),) + a.nodes[i + 1:])


# -- metrics and text ---------------------------------------------------------

def metrics(tree: ExprTree) -> dict:
    ops = sum(1 for op, _ in tree.nodes if op in BINARY)
    return {"node_count": len(tree.nodes), "operator_count": ops, "depth": tree.depth}


def format_constant(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _label(op, a, names):
    if op == VAR:
        if names is None:
            return f"x{a}"
        if not 0 <= a < len(names):
            raise StructuralError(f"unknown feature index {a}")
        return names[a]
    if op == CONST:
        return format_constant(a)
    return f"z{a}"


def serialize(tree: ExprTree, names=None, registry: AbstractionRegistry | None = None) -> str:
    """Fully parenthesised infix text.

    With a ``registry``, each referenced abstraction is expanded in a
    footnote line ``z<k> := ...`` below the expression.
    """
    stack = []
    for op, a in reversed(tree.nodes):
        if op in BINARY:
            left = stack.pop()
            right = stack.pop()
            stack.append(f"({left} {SYMBOLS[op]} {right})")
        else:
            stack.append(_label(op, a, names))
    text = stack[0]
    if registry is not None:
        # registered expressions are fully expanded, so one level suffices
        for zid in sorted(tree.abstractions()):
            text += f"\n  z{zid} := {serialize(registry.lookup(zid), names)}"
    return text


_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_NUMBER = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")
_ZNAME = re.compile(r"^z(\d+)$")
_XNAME = re.compile(r"^x(\d+)$")


def parse(text: str, names=None) -> ExprTree:
    """Inverse of :func:`serialize`; footnote lines are ignored."""
    line = text.strip().splitlines()[0] if text.strip() else ""
    tokens = _TOKEN.findall(line)
    lookup = {n: i for i, n in enumerate(names)} if names is not None else None
    nodes = []
    pos = 0

    def atom(tok):
        if tok in ("inf", "-inf", "nan") or _NUMBER.match(tok):
            return (CONST, float(tok))
        if lookup is not None and tok in lookup:
            return (VAR, lookup[tok])
        m = _ZNAME.match(tok)
        if m:
            return (ABS, int(m.group(1)))
        m = _XNAME.match(tok)
        if lookup is None and m:
            return (VAR, int(m.group(1)))
        raise StructuralError(f"unknown token {tok!r}")

    def expr():
        nonlocal pos
        if pos >= len(tokens):
            raise StructuralError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            nodes.append(atom(tok))
            return
        idx = len(nodes)
        nodes.append(None)
        expr()
        if pos >= len(tokens) or tokens[pos] not in _OP_BY_SYMBOL:
            raise StructuralError(f"expected operator at token {pos}")
        nodes[idx] = (_OP_BY_SYMBOL[tokens[pos]], 0)
        pos += 1
        expr()
        if pos >= len(tokens) or tokens[pos] != ")":
            raise StructuralError(f"expected ')' at token {pos}")
        pos += 1

    expr()
    if pos != len(tokens):
        raise StructuralError("trailing tokens after expression")
    return ExprTree(nodes)
