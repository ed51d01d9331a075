"""Symbolic target functions: parsing, evaluation, sampling, normalization.

Targets are small computation graphs (DAGs of unary/binary ops) over f64.
N-ary sums and products written in an expression are left-folded into
binary nodes, so the maximum arity of any graph built here is 2.
"""

from dataclasses import dataclass

import numpy as np

UNARY_OPS = ("neg", "sin", "cos", "exp", "log", "sqrt", "tanh")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
LEAF_OPS = ("var", "const")

_FUNCTIONS = {"sin", "cos", "exp", "log", "sqrt", "tanh"}


class ParseError(ValueError):
    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class EvalDomainError(ValueError):
    def __init__(self, message, node_index):
        super().__init__(f"{message} (graph node {node_index})")
        self.node_index = node_index


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple = ()
    payload: float | int | None = None


@dataclass(frozen=True)
class TargetSpec:
    """A symbolic function f: R^d -> R as a binarized computation graph."""

    name: str
    dim: int
    nodes: tuple
    output_node: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        for i, node in enumerate(self.nodes):
            if any(j >= i for j in node.inputs):
                raise ValueError(f"node {i} references a non-earlier node")
            if node.op in BINARY_OPS and len(node.inputs) != 2:
                raise ValueError(f"binary node {i} needs 2 inputs")
            if node.op in UNARY_OPS and len(node.inputs) != 1:
                raise ValueError(f"unary node {i} needs 1 input")
            if node.op in LEAF_OPS and node.inputs:
                raise ValueError(f"leaf node {i} takes no inputs")
            if node.op == "var" and not (0 <= node.payload < self.dim):
                raise ValueError(f"node {i}: variable index out of range")
        if not (0 <= self.output_node < len(self.nodes)):
            raise ValueError("output_node out of range")


@dataclass(frozen=True)
class Domain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo/hi must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("need lo[i] < hi[i] for every dimension")

    @property
    def dim(self):
        return len(self.lo)


def box(lo, hi, dim):
    """Axis-aligned box [lo, hi]^dim."""
    return Domain(np.full(dim, float(lo)), np.full(dim, float(hi)))


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,)
    seed: int
    domain: Domain

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------

@dataclass
class _Token:
    kind: str  # num | name | op | lparen | rparen | end
    text: str
    pos: int


def _tokenize(text):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_e = False
            while j < n and (
                text[j].isdigit()
                or text[j] == "."
                or text[j] in "eE"
                or (seen_e and text[j] in "+-" and text[j - 1] in "eE")
            ):
                if text[j] in "eE":
                    if seen_e:
                        break
                    # only an exponent if followed by digit or sign+digit
                    k = j + 1
                    if k < n and text[k] in "+-":
                        k += 1
                    if k >= n or not text[k].isdigit():
                        break
                    seen_e = True
                j += 1
            tokens.append(_Token("num", text[i:j], i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], i))
            i = j
        elif c in "+-*/^":
            tokens.append(_Token("op", c, i))
            i += 1
        elif c == "(":
            tokens.append(_Token("lparen", c, i))
            i += 1
        elif c == ")":
            tokens.append(_Token("rparen", c, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    """Recursive descent with precedence ^ > unary- > */ > +-, ^ right-assoc."""

    def __init__(self, text, dim):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dim = dim
        self.nodes = []

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def emit(self, op, inputs=(), payload=None):
        self.nodes.append(Node(op, tuple(inputs), payload))
        return len(self.nodes) - 1

    def parse(self):
        root = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.pos)
        return root

    def expr(self):
        left = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            right = self.term()
            left = self.emit("add" if op == "+" else "sub", (left, right))
        return left

    def term(self):
        left = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            right = self.unary()
            left = self.emit("mul" if op == "*" else "div", (left, right))
        return left

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return self.emit("neg", (self.unary(),))
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            exponent = self.unary()  # right-associative; allows x^-2
            return self.emit("pow", (base, exponent))
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            try:
                value = float(tok.text)
            except ValueError:
                raise ParseError(f"bad number literal {tok.text!r}", tok.pos) from None
            return self.emit("const", (), value)
        if tok.kind == "lparen":
            inner = self.expr()
            closing = self.take()
            if closing.kind != "rparen":
                raise ParseError("expected ')'", closing.pos)
            return inner
        if tok.kind == "name":
            name = tok.text
            if name in _FUNCTIONS:
                lp = self.take()
                if lp.kind != "lparen":
                    raise ParseError(f"expected '(' after {name}", lp.pos)
                arg = self.expr()
                rp = self.take()
                if rp.kind != "rparen":
                    raise ParseError("expected ')'", rp.pos)
                return self.emit(name, (arg,))
            if name.startswith("x") and name[1:].isdigit():
                index = int(name[1:])
                if not (1 <= index <= self.dim):
                    raise ParseError(
                        f"variable {name} exceeds dimension {self.dim}", tok.pos
                    )
                return self.emit("var", (), index - 1)
            raise ParseError(f"unknown identifier {name!r}", tok.pos)
        raise ParseError(f"unexpected token {tok.text!r}", tok.pos)


def parse_expression(text, dim, name=None):
    """Parse an expression in variables x1..xd into a TargetSpec."""
    parser = _Parser(text, dim)
    root = parser.parse()
    return TargetSpec(name or text, dim, tuple(parser.nodes), root)


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

def eval_target_batch(spec, xs):
    """Evaluate spec at every row of xs, shape (m, d) -> (m,)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != spec.dim:
        raise ValueError(f"expected inputs of shape (m, {spec.dim})")
    values = [None] * len(spec.nodes)
    for i, node in enumerate(spec.nodes):
        op = node.op
        if op == "var":
            values[i] = xs[:, node.payload]
        elif op == "const":
            values[i] = np.full(xs.shape[0], float(node.payload))
        elif op in BINARY_OPS:
            a = values[node.inputs[0]]
            b = values[node.inputs[1]]
            if op == "add":
                values[i] = a + b
            elif op == "sub":
                values[i] = a - b
            elif op == "mul":
                values[i] = a * b
            elif op == "div":
                if np.any(b == 0.0):
                    raise EvalDomainError("division by zero", i)
                values[i] = a / b
            else:  # pow
                if np.any((a == 0.0) & (b < 0.0)):
                    raise EvalDomainError("zero raised to a negative power", i)
                with np.errstate(invalid="raise"):
                    try:
                        values[i] = a**b
                    except FloatingPointError:
                        raise EvalDomainError(
                            "negative base with non-integer exponent", i
                        ) from None
        else:
            a = values[node.inputs[0]]
            if op == "neg":
                values[i] = -a
            elif op == "sin":
                values[i] = np.sin(a)
            elif op == "cos":
                values[i] = np.cos(a)
            elif op == "exp":
                values[i] = np.exp(a)
            elif op == "tanh":
                values[i] = np.tanh(a)
            elif op == "log":
                if np.any(a <= 0.0):
                    raise EvalDomainError("log of a non-positive value", i)
                values[i] = np.log(a)
            else:  # sqrt
                if np.any(a < 0.0):
                    raise EvalDomainError("sqrt of a negative value", i)
                values[i] = np.sqrt(a)
    return np.array(values[spec.output_node], dtype=np.float64, copy=True)


def eval_target(spec, x):
    """Evaluate spec at a single point, returned as a python float."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(eval_target_batch(spec, x)[0])


def max_arity(spec):
    """Largest input count over non-leaf nodes (0 for a bare leaf)."""
    return max((len(node.inputs) for node in spec.nodes), default=0)


# ----------------------------------------------------------------------
# Sampling and normalization
# ----------------------------------------------------------------------

def sample_dataset(spec, domain, n, seed):
    """n i.i.d. uniform samples over the domain box, targets from the graph."""
    if n < 1:
        raise ValueError("need n >= 1")
    if domain.dim != spec.dim:
        raise ValueError("domain dimension does not match target dimension")
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(domain.lo, domain.hi, size=(n, spec.dim))
    targets = eval_target_batch(spec, inputs)
    return Dataset(inputs, targets, seed, domain)


def normalize_inputs(data):
    """Standardize inputs per dimension (population std); targets untouched."""
    if data.n < 2:
        raise ValueError("need at least 2 points to normalize")
    mean = data.inputs.mean(axis=0)
    std = data.inputs.std(axis=0)  # population std
    if np.any(std <= 0.0):
        bad = int(np.argmin(std))
        raise ValueError(f"dimension {bad} has zero variance")
    normed = (data.inputs - mean) / std
    return (
        Dataset(normed, data.targets, data.seed, data.domain),
        NormStats(mean, std),
    )


def denormalize_inputs(inputs, stats):
    """Inverse of normalize_inputs on an input matrix."""
    return inputs * stats.std + stats.mean


# ----------------------------------------------------------------------
# Built-in catalog
# ----------------------------------------------------------------------

_TEACHER_SEED = 1031
_TEACHER_DIMS = (2, 3, 3, 1)

# Fixed quartic used for the 1D polynomial benchmark.
POLY1D_EXPR = "x1^4 - 2*x1^3 + 0.5*x1^2 + x1 - 0.3"


def _affine_tanh_graph(dims, seed):
    """Build a TargetSpec computing a small tanh MLP with seeded weights.

    Weights are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero;
    the final affine map has no activation.
    """
    rng = np.random.default_rng(seed)
    nodes = []

    def emit(op, inputs=(), payload=None):
        nodes.append(Node(op, tuple(inputs), payload))
        return len(nodes) - 1

    current = [emit("var", (), j) for j in range(dims[0])]
    n_layers = len(dims) - 1
    for layer in range(n_layers):
        fan_in = dims[layer]
        fan_out = dims[layer + 1]
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        nxt = []
        for unit in range(fan_out):
            acc = None
            for j in range(fan_in):
                c = emit("const", (), float(weights[unit, j]))
                prod = emit("mul", (c, current[j]))
                acc = prod if acc is None else emit("add", (acc, prod))
            if layer < n_layers - 1:
                acc = emit("tanh", (acc,))
            nxt.append(acc)
        current = nxt
    return TargetSpec("teacher", dims[0], tuple(nodes), current[0])


def builtin_catalog():
    """Named experiment targets with their sampling domains."""
    entries = [
        (parse_expression("cos(2*x1)", 1, name="cos2x"), box(1, 5, 1)),
        (parse_expression("x1*x2", 2, name="xy"), box(1, 5, 2)),
        (parse_expression("x1*x2*x3", 3, name="xyz"), box(1, 5, 3)),
        (
            parse_expression("x1*x4 + x2*x5 + x3*x6", 6, name="dot3"),
            box(1, 5, 6),
        ),
        (parse_expression(POLY1D_EXPR, 1, name="poly1d"), box(-1, 1, 1)),
        (parse_expression("sin(x1*x2)", 2, name="sinxy"), box(1, 3, 2)),
        (_affine_tanh_graph(_TEACHER_DIMS, _TEACHER_SEED), box(-1, 1, 2)),
    ]
    return entries


def catalog_lookup(name):
    for spec, domain in builtin_catalog():
        if spec.name == name:
            return spec, domain
    known = ", ".join(spec.name for spec, _ in builtin_catalog())
    raise KeyError(f"unknown target {name!r}; known targets: {known}")
