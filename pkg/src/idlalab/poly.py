"""Exact polynomials and discrete harmonic polynomials on Z^d.

Coefficients are :class:`fractions.Fraction`.  The map :func:`xi_transform`
sends ``x_1^{k_1}...x_d^{k_d}`` to ``P_{k_1}(x_1)...P_{k_d}(x_d)`` where
``P_k(x) = prod_{j=-(k-1)/2}^{(k-1)/2} (x + j)``; since the second difference
of ``P_k`` is ``k(k-1)P_{k-2}``, the image of a harmonic polynomial is
discrete harmonic and differs from it only in degree ``<= k-2``.

Float evaluation for Monte Carlo loops goes through
:meth:`ExactPolynomial.evaluator`, which converts coefficients once.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

Exps = tuple[int, ...]


def _frac(c) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


class ExactPolynomial:
    """Sparse polynomial in ``dim`` variables with rational coefficients.

    Immutable; zero coefficients are never stored.
    """

    __slots__ = ("dim", "terms")

    def __init__(self, terms: Mapping[Sequence[int], object], dim: int | None = None):
        clean: dict[Exps, Fraction] = {}
        for e, c in terms.items():
            c = _frac(c)
            if c:
                e = tuple(int(v) for v in e)
                clean[e] = clean.get(e, Fraction(0)) + c
                if not clean[e]:
                    del clean[e]
        if dim is None:
            if not terms:
                raise ValueError("dim is required for an empty term map")
            dim = len(next(iter(terms)))
        for e in clean:
            if len(e) != dim or min(e) < 0:
                raise ValueError(f"bad exponent vector {e} for dim {dim}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("ExactPolynomial is immutable")

    # constructors
    @classmethod
    def constant(cls, c, dim: int) -> "ExactPolynomial":
        return cls({(0,) * dim: c}, dim)

    @classmethod
    def variable(cls, i: int, dim: int) -> "ExactPolynomial":
        e = [0] * dim
        e[i] = 1
        return cls({tuple(e): 1}, dim)

    @classmethod
    def monomial(cls, exps: Sequence[int], c=1) -> "ExactPolynomial":
        return cls({tuple(exps): c}, len(exps))

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, exps: Sequence[int]) -> Fraction:
        return self.terms.get(tuple(exps), Fraction(0))

    def homogeneous_part(self, deg: int) -> "ExactPolynomial":
        return ExactPolynomial({e: c for e, c in self.terms.items() if sum(e) == deg}, self.dim)

    # arithmetic
    def _coerce(self, other) -> "ExactPolynomial":
        if isinstance(other, ExactPolynomial):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return ExactPolynomial.constant(other, self.dim)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return ExactPolynomial(out, self.dim)

    __radd__ = __add__

    def __neg__(self):
        return ExactPolynomial({e: -c for e, c in self.terms.items()}, self.dim)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, ExactPolynomial):
            c = _frac(other)
            return ExactPolynomial({e: c * v for e, v in self.terms.items()}, self.dim)
        other = self._coerce(other)
        out: dict[Exps, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return ExactPolynomial(out, self.dim)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = ExactPolynomial.constant(1, self.dim)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, ExactPolynomial):
            return self.dim == other.dim and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == ExactPolynomial.constant(other, self.dim)
        return NotImplemented

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    def __repr__(self):
        return f"ExactPolynomial({self.to_string()})"

    def to_string(self, names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        names = names or (["x", "y", "z", "w"][: self.dim] if self.dim <= 4
                          else [f"x{i}" for i in range(self.dim)])
        parts = []
        for e in sorted(self.terms, key=lambda e: (-sum(e), [-v for v in e])):
            c = self.terms[e]
            mono = "*".join(n if p == 1 else f"{n}^{p}" for n, p in zip(names, e) if p)
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    # evaluation
    def __call__(self, *x):
        """Exact evaluation at a point (ints or Fractions)."""
        if len(x) == 1 and isinstance(x[0], (tuple, list, np.ndarray)):
            x = tuple(x[0])
        if len(x) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates")
        x = [_frac(int(v)) if isinstance(v, (np.integer,)) else _frac(v) for v in x]
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for v, p in zip(x, e):
                if p:
                    term *= v**p
            total += term
        return total

    def evaluator(self):
        """Float evaluator ``f(points) -> values`` for an ``(M, dim)`` array.

        Horner's rule in each variable on the expanded form; coefficients are
        converted to float once here.
        """
        plan = _horner_plan(self.terms, self.dim)

        def f(points):
            pts = np.asarray(points, dtype=np.float64)
            if pts.ndim == 1:
                pts = pts[None, :]
            return _horner_eval(plan, pts, 0, pts.shape[0])

        return f

    # calculus
    def derivative(self, i: int) -> "ExactPolynomial":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                out[tuple(e2)] = c * e[i]
        return ExactPolynomial(out, self.dim)

    def laplacian(self) -> "ExactPolynomial":
        out = ExactPolynomial({}, self.dim)
        for i in range(self.dim):
            out = out + self.derivative(i).derivative(i)
        return out

    def shift(self, i: int, h) -> "ExactPolynomial":
        """The polynomial ``x -> f(x + h e_i)``."""
        h = _frac(h)
        out: dict[Exps, Fraction] = {}
        for e, c in self.terms.items():
            p = e[i]
            for j in range(p + 1):
                e2 = list(e)
                e2[i] = j
                key = tuple(e2)
                out[key] = out.get(key, Fraction(0)) + c * math.comb(p, j) * h ** (p - j)
        return ExactPolynomial(out, self.dim)

    def second_difference(self, i: int) -> "ExactPolynomial":
        """``D_i^2 f = f(x+e_i) - 2f(x) + f(x-e_i)`` as a polynomial."""
        return self.shift(i, 1) + self.shift(i, -1) - 2 * self

    def discrete_laplacian(self) -> "ExactPolynomial":
        out = ExactPolynomial({}, self.dim)
        for i in range(self.dim):
            out = out + self.second_difference(i)
        return out

    def integer_form(self) -> tuple[dict[Exps, int], int]:
        """``(integer coefficients, D)`` with ``self == ints / D``."""
        D = 1
        for c in self.terms.values():
            D = D * c.denominator // math.gcd(D, c.denominator)
        return {e: int(c * D) for e, c in self.terms.items()}, D

    # serialization
    def to_json_obj(self) -> dict:
        return {"dim": self.dim,
                "terms": [[list(e), c.numerator, c.denominator]
                          for e, c in sorted(self.terms.items())]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ExactPolynomial":
        return cls({tuple(e): Fraction(n, d) for e, n, d in obj["terms"]}, obj["dim"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, s: str) -> "ExactPolynomial":
        return cls.from_json_obj(json.loads(s))


def _horner_plan(terms: Mapping[Exps, Fraction], dim: int):
    """Nested coefficient lists: level ``i`` is a polynomial in ``x_i``."""
    if dim == 0:
        return float(sum(terms.values(), Fraction(0)))
    groups: dict[int, dict[Exps, Fraction]] = {}
    for e, c in terms.items():
        groups.setdefault(e[0], {})[e[1:]] = c
    if not groups:
        return []
    top = max(groups)
    return [_horner_plan(groups.get(p, {}), dim - 1) if p in groups else None
            for p in range(top + 1)]


def _horner_eval(plan, pts, col, m):
    if not isinstance(plan, list):
        return np.full(m, plan)
    if not plan:
        return np.zeros(m)
    x = pts[:, col]
    acc = np.zeros(m)
    for sub in reversed(plan):
        acc *= x
        if sub is not None:
            acc += _horner_eval(sub, pts, col + 1, m)
    return acc


def grid_values(poly: ExactPolynomial, axis_points: Sequence[int]) -> np.ndarray:
    """Exact values of ``poly * D`` on the tensor grid ``axis_points^dim``.

    ``D`` is the common denominator from :meth:`ExactPolynomial.integer_form`.
    Uses float64 tensor contractions when every partial sum is an integer
    below 2**53 (so the arithmetic is exact), Python ints otherwise.
    Returns ``(values, D)``.
    """
    ints, D = poly.integer_form()
    pts = np.asarray(axis_points, dtype=np.int64)
    dim, deg = poly.dim, max(poly.degree, 0)
    bound = sum(abs(c) for c in ints.values()) * max(1, int(np.abs(pts).max(initial=0))) ** deg
    exact_float = bound < 2**53
    dtype = np.float64 if exact_float else object
    C = np.zeros((deg + 1,) * dim, dtype=dtype)
    for e, c in ints.items():
        C[e] = c if exact_float else int(c)
    V = np.array([[int(p) ** j for j in range(deg + 1)] for p in pts.tolist()], dtype=dtype)
    vals = C
    for _ in range(dim):
        # contract the leading exponent axis, append the point axis at the end
        vals = np.tensordot(vals, V, axes=([0], [1]))
    if exact_float:
        vals = vals.astype(np.int64) if bound < 2**62 else vals
    return vals, D


def discrete_laplacian_grid(vals: np.ndarray) -> np.ndarray:
    """Lattice Laplacian of grid values, on the interior (one site trimmed per side)."""
    dim = vals.ndim
    core = tuple(slice(1, -1) for _ in range(dim))
    out = -2 * dim * vals[core]
    for i in range(dim):
        lo = list(core)
        hi = list(core)
        lo[i] = slice(0, -2)
        hi[i] = slice(2, None)
        out = out + vals[tuple(lo)] + vals[tuple(hi)]
    return out


# -- the Xi map -------------------------------------------------------------

@lru_cache(maxsize=None)
def _pk_coeffs(k: int) -> tuple[Fraction, ...]:
    coeffs = [Fraction(1)]
    for j in range(k):
        root = Fraction(2 * j - (k - 1), 2)
        # multiply by (x + root)
        nxt = [Fraction(0)] * (len(coeffs) + 1)
        for p, c in enumerate(coeffs):
            nxt[p + 1] += c
            nxt[p] += c * root
        coeffs = nxt
    return tuple(coeffs)


def symmetric_factorial_poly(k: int) -> ExactPolynomial:
    """``P_k(x) = prod_{j=-(k-1)/2}^{(k-1)/2} (x + j)``, expanded (one variable)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return ExactPolynomial({(p,): c for p, c in enumerate(_pk_coeffs(k))}, 1)


def xi_transform(psi: ExactPolynomial) -> ExactPolynomial:
    """Apply Xi monomial by monomial."""
    out: dict[Exps, Fraction] = {}
    for e, c in psi.terms.items():
        # expand prod_i P_{e_i}(x_i)
        factors = [_pk_coeffs(k) for k in e]
        for idx in product(*(range(len(f)) for f in factors)):
            coeff = c
            for f, j in zip(factors, idx):
                coeff *= f[j]
                if not coeff:
                    break
            if coeff:
                out[idx] = out.get(idx, Fraction(0)) + coeff
    return ExactPolynomial(out, psi.dim)


# -- complex form in two variables -----------------------------------------

class CQ(NamedTuple):
    """Exact complex rational ``re + i*im``."""

    re: Fraction
    im: Fraction

    @staticmethod
    def of(v) -> "CQ":
        if isinstance(v, CQ):
            return v
        if isinstance(v, complex):
            return CQ(Fraction(v.real), Fraction(v.imag))
        return CQ(_frac(v), Fraction(0))

    def __add__(self, o):
        o = CQ.of(o)
        return CQ(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, o):
        o = CQ.of(o)
        return CQ(self.re - o.re, self.im - o.im)

    def __neg__(self):
        return CQ(-self.re, -self.im)

    def __mul__(self, o):
        o = CQ.of(o)
        return CQ(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self) -> "CQ":
        return CQ(self.re, -self.im)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))


class ComplexPairPolynomial:
    """Polynomial ``sum c_{ab} z^a zbar^b`` with exact complex rational ``c``."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[int, int], object]):
        clean: dict[tuple[int, int], CQ] = {}
        for (a, b), c in terms.items():
            key = (int(a), int(b))
            v = clean.get(key, CQ(Fraction(0), Fraction(0))) + CQ.of(c)
            if v:
                clean[key] = v
            else:
                clean.pop(key, None)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("ComplexPairPolynomial is immutable")

    @property
    def degree(self) -> int:
        return max((a + b for a, b in self.terms), default=-1)

    def conjugate(self) -> "ComplexPairPolynomial":
        return ComplexPairPolynomial({(b, a): c.conjugate() for (a, b), c in self.terms.items()})

    def __add__(self, o):
        out = dict(self.terms)
        for k, c in o.terms.items():
            out[k] = out.get(k, CQ(Fraction(0), Fraction(0))) + c
        return ComplexPairPolynomial(out)

    def __sub__(self, o):
        return self + ComplexPairPolynomial({k: -c for k, c in o.terms.items()})

    def __mul__(self, o):
        if not isinstance(o, ComplexPairPolynomial):
            c0 = CQ.of(o)
            return ComplexPairPolynomial({k: c * c0 for k, c in self.terms.items()})
        out: dict[tuple[int, int], CQ] = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in o.terms.items():
                k = (a1 + a2, b1 + b2)
                out[k] = out.get(k, CQ(Fraction(0), Fraction(0))) + c1 * c2
        return ComplexPairPolynomial(out)

    def __eq__(self, o):
        if not isinstance(o, ComplexPairPolynomial):
            return NotImplemented
        return self.terms == o.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"ComplexPairPolynomial({self.to_string()})"

    def to_string(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (a, b) in sorted(self.terms, key=lambda k: (-(k[0] + k[1]), -k[0])):
            c = self.terms[(a, b)]
            mono = "*".join(s for s in (
                ("z" if a == 1 else f"z^{a}") if a else "",
                ("zbar" if b == 1 else f"zbar^{b}") if b else "") if s)
            cs = str(c.re) if not c.im else (f"{c.im}i" if not c.re else f"({c.re}+{c.im}i)")
            if mono and cs == "1":
                parts.append(mono)
            elif mono and cs == "-1":
                parts.append("-" + mono)
            else:
                parts.append(f"{cs}*{mono}" if mono else cs)
        return " + ".join(parts).replace("+ -", "- ")

    def __call__(self, z):
        """Exact value at a Gaussian rational ``z`` (complex, tuple or CQ)."""
        if isinstance(z, (tuple, list)):
            z = CQ(_frac(z[0]), _frac(z[1]))
        z = CQ.of(z)
        zb = z.conjugate()
        total = CQ(Fraction(0), Fraction(0))
        for (a, b), c in self.terms.items():
            term = c
            for _ in range(a):
                term = term * z
            for _ in range(b):
                term = term * zb
            total = total + term
        return total

    def to_xy(self) -> tuple[ExactPolynomial, ExactPolynomial]:
        """Real and imaginary parts as polynomials in ``x, y``."""
        zero = CQ(Fraction(0), Fraction(0))
        acc: dict[tuple[int, int], CQ] = {}
        for (a, b), c in self.terms.items():
            # z^a zbar^b with z = x + iy
            poly = {(0, 0): CQ(Fraction(1), Fraction(0))}
            for step in [CQ(Fraction(0), Fraction(1))] * a + [CQ(Fraction(0), Fraction(-1))] * b:
                nxt: dict[tuple[int, int], CQ] = {}
                for (px, py), v in poly.items():
                    nxt[(px + 1, py)] = nxt.get((px + 1, py), zero) + v
                    nxt[(px, py + 1)] = nxt.get((px, py + 1), zero) + v * step
                poly = nxt
            for k, v in poly.items():
                acc[k] = acc.get(k, zero) + v * c
        re = ExactPolynomial({k: v.re for k, v in acc.items()}, 2)
        im = ExactPolynomial({k: v.im for k, v in acc.items()}, 2)
        return re, im

    @classmethod
    def from_xy(cls, re: ExactPolynomial, im: ExactPolynomial | None = None) -> "ComplexPairPolynomial":
        """Rewrite ``re + i*im`` using ``x = (z+zbar)/2``, ``y = (z-zbar)/(2i)``."""
        half = Fraction(1, 2)
        X = cls({(1, 0): half, (0, 1): half})
        Y = cls({(1, 0): CQ(Fraction(0), -half), (0, 1): CQ(Fraction(0), half)})
        out = cls({})
        for part, unit in ((re, CQ(Fraction(1), Fraction(0))), (im, CQ(Fraction(0), Fraction(1)))):
            if part is None:
                continue
            for (px, py), c in part.terms.items():
                term = cls({(0, 0): unit * c})
                for _ in range(px):
                    term = term * X
                for _ in range(py):
                    term = term * Y
                out = out + term
        return out

    def evaluator(self):
        """Complex float evaluator on an ``(M, 2)`` array of points."""
        re, im = self.to_xy()
        fr, fi = re.evaluator(), im.evaluator()
        return lambda pts: fr(pts) + 1j * fi(pts)

    def to_json_obj(self) -> dict:
        return {"terms": [[[a, b], c.re.numerator, c.re.denominator, c.im.numerator, c.im.denominator]
                          for (a, b), c in sorted(self.terms.items())]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ComplexPairPolynomial":
        return cls({tuple(k): CQ(Fraction(rn, rd), Fraction(i_n, i_d))
                    for k, rn, rd, i_n, i_d in obj["terms"]})


def zk_parts(k: int) -> tuple[ExactPolynomial, ExactPolynomial]:
    """``Re z^k`` and ``Im z^k`` as integer polynomials in ``x, y``."""
    re, im = {}, {}
    for j in range(k + 1):
        # binom(k, j) x^{k-j} (iy)^j
        c = math.comb(k, j)
        sign = -1 if (j // 2) % 2 else 1
        (re if j % 2 == 0 else im)[(k - j, j)] = sign * c
    return ExactPolynomial(re, 2), ExactPolynomial(im, 2)


@lru_cache(maxsize=None)
def discrete_zk(k: int) -> ComplexPairPolynomial:
    """``p_k``: ``Xi[z^k] - Xi[z^k](0)`` for ``k >= 1``, ``p_0 = 1``, ``p_{-k} = conj(p_k)``."""
    if k == 0:
        return ComplexPairPolynomial({(0, 0): 1})
    if k < 0:
        return discrete_zk(-k).conjugate()
    re, im = zk_parts(k)
    qre, qim = xi_transform(re), xi_transform(im)
    zero = (0, 0)
    qre = qre - qre.coefficient(zero)
    qim = qim - qim.coefficient(zero)
    return ComplexPairPolynomial.from_xy(qre, qim)


def discrete_zk_parts(k: int) -> tuple[ExactPolynomial, ExactPolynomial]:
    """``Re p_k`` and ``Im p_k`` as polynomials in ``x, y``."""
    return discrete_zk(k).to_xy()


class MeshPolynomial:
    """``psi_(m)(x) = m^{-k} psi1(m x)`` on the mesh ``(1/m) Z^d``."""

    __slots__ = ("base", "m", "k", "_f")

    def __init__(self, base: ExactPolynomial, m: int, k: int):
        if m < 1:
            raise ValueError("mesh m must be >= 1")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "_f", base.evaluator())

    def __setattr__(self, name, value):
        raise AttributeError("MeshPolynomial is immutable")

    @property
    def dim(self) -> int:
        return self.base.dim

    def exact(self, x) -> Fraction:
        """Exact value at a rational point ``x`` of R^d."""
        x = [_frac(v) for v in x]
        return Fraction(1, self.m**self.k) * self.base(*[self.m * v for v in x])

    def __call__(self, points) -> np.ndarray:
        """Float values at real points ``(M, d)``."""
        pts = np.asarray(points, dtype=np.float64)
        return self._f(pts * self.m) * float(self.m) ** (-self.k)

    def on_lattice(self, sites) -> np.ndarray:
        """``psi_(m)(x/m)`` for integer sites ``x``: ``m^{-k} psi1(x)``."""
        return self._f(np.asarray(sites, dtype=np.float64)) * float(self.m) ** (-self.k)

    def as_polynomial(self) -> ExactPolynomial:
        """``psi_(m)`` as an exact polynomial in the continuum variable."""
        m = Fraction(self.m)
        return ExactPolynomial({e: c * m ** (sum(e) - self.k) for e, c in self.base.terms.items()},
                               self.base.dim)

    def at_zero(self) -> float:
        return float(self.exact([0] * self.dim))


def rescale_to_mesh(psi1: ExactPolynomial, m: int, k: int | None = None) -> MeshPolynomial:
    """Discrete harmonic approximation on ``(1/m) Z^d`` from ``psi1 = Xi[psi]``."""
    return MeshPolynomial(psi1, m, psi1.degree if k is None else k)


def mesh_polynomial(psi: ExactPolynomial, m: int) -> MeshPolynomial:
    """``psi_(m)`` built from a harmonic ``psi`` of degree ``k``."""
    return MeshPolynomial(xi_transform(psi), m, max(psi.degree, 0))


def discrete_laplacian(f, x):
    """``sum_i D_i^2 f(x)``, exact.

    ``f`` is an :class:`ExactPolynomial`, a :class:`ComplexPairPolynomial`
    (``x`` then a pair of integers; the result is a :class:`CQ`) or a
    :class:`MeshPolynomial` (``x`` a point of the mesh, steps of ``1/m``).
    """
    x = [_frac(int(v)) if isinstance(v, np.integer) else _frac(v) for v in x]
    if isinstance(f, ComplexPairPolynomial):
        c = CQ(x[0], x[1])
        total = f(CQ(c.re + 1, c.im)) + f(CQ(c.re - 1, c.im)) + f(CQ(c.re, c.im + 1)) \
            + f(CQ(c.re, c.im - 1)) - f(c) * 4
        return total
    if isinstance(f, MeshPolynomial):
        h = Fraction(1, f.m)
        ev = f.exact
    else:
        h = Fraction(1)
        ev = lambda p: f(*p)  # noqa: E731
    centre = ev(x)
    total = Fraction(0)
    for i in range(len(x)):
        up = list(x)
        dn = list(x)
        up[i] += h
        dn[i] -= h
        total += ev(up) + ev(dn) - 2 * centre
    return total


# -- harmonic polynomial families ------------------------------------------

def harmonic_basis(d: int, ell: int) -> list[ExactPolynomial]:
    """A basis of homogeneous harmonic polynomials of degree ``ell`` in ``d`` variables.

    Each element is ``sum_j (-1)^j x1^{2j}/(2j)! L^j f`` (or the odd
    analogue ``x1^{2j+1}/(2j+1)!``), with ``f`` a monomial in the other
    variables and ``L`` their Laplacian, so every term cancels in pairs.
    """
    if d == 1:
        return [ExactPolynomial.monomial((ell,))] if ell <= 1 else []
    basis = []
    for parity in (0, 1):
        deg = ell - parity
        if deg < 0:
            continue
        for rest in _compositions(deg, d - 1):
            f = ExactPolynomial.monomial(rest)
            acc: dict[Exps, Fraction] = {}
            j = 0
            while not f.is_zero():
                p = 2 * j + parity
                scale = Fraction((-1) ** j, math.factorial(p))
                for e, c in f.terms.items():
                    key = (p,) + e
                    acc[key] = acc.get(key, Fraction(0)) + scale * c
                f = f.laplacian()
                j += 1
            basis.append(ExactPolynomial(acc, d))
    return basis


def _compositions(total: int, parts: int) -> Iterable[Exps]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def solid_harmonics_3d(ell: int) -> list[ExactPolynomial]:
    """Real solid harmonics ``r^l P_l^m(cos th) {cos, sin}(m ph)`` up to constants.

    Rational coefficients, no normalisation; ordered ``m = 0, 1c, 1s, ...``.
    """
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    X, Y, Z = (ExactPolynomial.variable(i, 3) for i in range(3))
    r2 = X * X + Y * Y + Z * Z
    out = []
    for m in range(ell + 1):
        # r^l P_l^m(z/r) / (x^2+y^2)^{m/2}, a polynomial in z and r^2
        radial = ExactPolynomial({}, 3)
        for k in range((ell - m) // 2 + 1):
            c = Fraction((-1) ** k * math.comb(ell, k) * math.comb(2 * ell - 2 * k, ell)
                         * math.factorial(ell - 2 * k), 2**ell * math.factorial(ell - 2 * k - m))
            radial = radial + c * (r2**k) * (Z ** (ell - 2 * k - m))
        cre, cim = zk_parts(m)
        lift = lambda p: ExactPolynomial({(a, b, 0): c for (a, b), c in p.terms.items()}, 3)  # noqa: E731
        out.append(radial * lift(cre))
        if m:
            out.append(radial * lift(cim))
    return out
