"""Exact rational polynomial calculus on C^m, S^{2m-1} and CP^{m-1}.

Polynomials in z_1..z_m, zbar_1..zbar_m with rational coefficients are the
lifts of functions on complex projective space: a polynomial bihomogeneous
of bidegree (k,k) is S^1-invariant and descends to CP^{m-1} = S^{2m-1}/S^1.
The normalized average over the sphere of an S^1-invariant lift equals the
normalized average of the descended function over CP^{m-1} (pushforward of
normalized measures); this is used throughout.

Everything here is exact: monomial sphere moments come from the Dirichlet
closed form, harmonic decomposition from the radial-power recursion, and
the cubic instability certificate is assembled in Fraction arithmetic.  The
only floating point is the seeded Monte-Carlo oracle used to cross-check
the moment formula.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
import json

import numpy as np

from .errors import (
    DimensionTooSmallError,
    NotBihomogeneousError,
    WrongDegreeError,
)


def _key(a, b):
    return (tuple(int(x) for x in a), tuple(int(x) for x in b))


class ZPoly:
    """Polynomial in (z, zbar) over the rationals.

    terms: dict mapping (a, b) exponent-vector pairs to Fraction
    coefficients; canonical form drops zero coefficients.  Real-valuedness
    on C^m is equivalent to coeff(a,b) == coeff(b,a) for all terms.
    """

    __slots__ = ("m", "terms")

    def __init__(self, m, terms=None):
        self.m = int(m)
        clean = {}
        for (a, b), c in (terms or {}).items():
            if len(a) != self.m or len(b) != self.m:
                raise ValueError("exponent vector length != complex dimension")
            c = Fraction(c)
            if c != 0:
                clean[_key(a, b)] = c
        self.terms = clean

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, m):
        return cls(m, {})

    @classmethod
    def constant(cls, m, c):
        e = (0,) * m
        return cls(m, {(e, e): Fraction(c)})

    @classmethod
    def monomial(cls, m, a, b, coeff=1):
        return cls(m, {(tuple(a), tuple(b)): Fraction(coeff)})

    @classmethod
    def z(cls, m, j):
        a = [0] * m
        a[j] = 1
        return cls.monomial(m, a, (0,) * m)

    @classmethod
    def zbar(cls, m, j):
        b = [0] * m
        b[j] = 1
        return cls.monomial(m, (0,) * m, b)

    @classmethod
    def r_squared(cls, m):
        """r^2 = sum_j z_j zbar_j."""
        out = cls.zero(m)
        for j in range(m):
            a = [0] * m
            a[j] = 1
            out = out + cls.monomial(m, a, a)
        return out

    # arithmetic -----------------------------------------------------------
    def _binop(self, other, sign):
        if isinstance(other, (int, Fraction)):
            other = ZPoly.constant(self.m, other)
        if self.m != other.m:
            raise ValueError("polynomials live on different C^m")
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms.get(k, Fraction(0)) + sign * c
        return ZPoly(self.m, terms)

    def __add__(self, other):
        return self._binop(other, 1)

    def __radd__(self, other):
        return self._binop(other, 1)

    def __sub__(self, other):
        return self._binop(other, -1)

    def __neg__(self):
        return ZPoly(self.m, {k: -c for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return ZPoly(self.m, {k: c * Fraction(other) for k, c in self.terms.items()})
        if self.m != other.m:
            raise ValueError("polynomials live on different C^m")
        terms = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                k = (
                    tuple(x + y for x, y in zip(a1, a2)),
                    tuple(x + y for x, y in zip(b1, b2)),
                )
                terms[k] = terms.get(k, Fraction(0)) + c1 * c2
        return ZPoly(self.m, terms)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __pow__(self, k):
        out = ZPoly.constant(self.m, 1)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = ZPoly.constant(self.m, other)
        return self.m == other.m and self.terms == other.terms

    def __hash__(self):
        return hash((self.m, frozenset(self.terms.items())))

    # structure ------------------------------------------------------------
    def is_zero(self):
        return not self.terms

    def conjugate(self):
        return ZPoly(self.m, {(b, a): c for (a, b), c in self.terms.items()})

    def is_real_valued(self):
        return self == self.conjugate()

    def is_s1_invariant(self):
        """Invariance under z -> e^{i t} z: every term has |a| = |b|."""
        return all(sum(a) == sum(b) for a, b in self.terms)

    def bidegrees(self):
        return {(sum(a), sum(b)) for a, b in self.terms}

    def is_bihomogeneous(self, k, l=None):
        if self.is_zero():
            return True
        return self.bidegrees() == {(k, k if l is None else l)}

    def total_degree(self):
        return max((sum(a) + sum(b) for a, b in self.terms), default=0)

    def d_z(self, j):
        terms = {}
        for (a, b), c in self.terms.items():
            if a[j] == 0:
                continue
            a2 = list(a)
            a2[j] -= 1
            terms[(tuple(a2), b)] = terms.get((tuple(a2), b), Fraction(0)) + c * a[j]
        return ZPoly(self.m, terms)

    def d_zbar(self, j):
        terms = {}
        for (a, b), c in self.terms.items():
            if b[j] == 0:
                continue
            b2 = list(b)
            b2[j] -= 1
            terms[(a, tuple(b2))] = terms.get((a, tuple(b2)), Fraction(0)) + c * b[j]
        return ZPoly(self.m, terms)

    def evaluate(self, z):
        """Evaluate at complex points, z of shape (..., m)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape[:-1], dtype=complex)
        zb = np.conj(z)
        for (a, b), c in self.terms.items():
            term = np.full(z.shape[:-1], float(c), dtype=complex)
            for j, e in enumerate(a):
                if e:
                    term = term * z[..., j] ** e
            for j, e in enumerate(b):
                if e:
                    term = term * zb[..., j] ** e
            out += term
        return out

    def coeff_strings(self):
        """Stable 'p/q' representation keyed by exponent strings."""
        out = {}
        for (a, b), c in sorted(self.terms.items()):
            key = "z^" + ",".join(map(str, a)) + "|zbar^" + ",".join(map(str, b))
            out[key] = f"{c.numerator}/{c.denominator}"
        return out

    def __repr__(self):
        return f"ZPoly(m={self.m}, {len(self.terms)} terms)"


def ambient_laplacian(p):
    """Euclidean Laplacian on C^m in complex form: -4 sum_j d_z_j d_zbar_j
    (nonnegative-spectrum sign convention)."""
    out = ZPoly.zero(p.m)
    for j in range(p.m):
        out = out + p.d_zbar(j).d_z(j)
    return (-4) * out


@dataclass(frozen=True)
class SphereIntegral:
    """Normalized average over S^{2m-1} (exact rational).  The raw integral
    is value * vol(S^{2m-1})."""

    value: Fraction
    m: int

    def __str__(self):
        return f"{self.value} (average over S^{2 * self.m - 1})"


def monomial_average(a, b, m):
    """Exact normalized average of prod z^a zbar^b over S^{2m-1}.

    Zero unless a == b (torus-phase orthogonality).  For a == b the moduli
    (|z_1|^2, ..., |z_m|^2) are uniform on the simplex, giving the Dirichlet
    moment (m-1)! * prod a_i! / (m-1+sum a)!.
    """
    a = tuple(int(x) for x in a)
    b = tuple(int(x) for x in b)
    if len(a) != m or len(b) != m:
        raise ValueError("exponent vectors must have length m")
    if a != b:
        return SphereIntegral(Fraction(0), m)
    s = sum(a)
    num = factorial(m - 1)
    for ai in a:
        num *= factorial(ai)
    return SphereIntegral(Fraction(num, factorial(m - 1 + s)), m)


def sphere_average(p):
    """Exact normalized average of a ZPoly over S^{2m-1}."""
    total = Fraction(0)
    for (a, b), c in p.terms.items():
        total += c * monomial_average(a, b, p.m).value
    return total


def monte_carlo_average(p, samples=10**6, seed=0, chunk=200000):
    """Seeded Monte-Carlo oracle for sphere averages: uniform points via
    normalized Gaussians.  Returns (mean, standard_error)."""
    rng = np.random.default_rng(seed)
    m = p.m
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = rng.standard_normal((k, 2 * m))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        z = x[:, :m] + 1j * x[:, m:]
        vals = np.real(p.evaluate(z))
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals**2))
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0)
    return mean, float(np.sqrt(var / samples))


# ---------------------------------------------------------------------------
# harmonic decomposition
# ---------------------------------------------------------------------------


def harmonic_decompose(p):
    """Decompose p in P_{k,k} as sum_j r^{2(k-j)} q_j with q_j harmonic in
    P_{j,j}.  Exact; uses Lap(r^{2a} q) = -4a(m + a - 1 + 2j) r^{2(a-1)} q
    for harmonic q of bidegree (j,j), so the decomposition of Lap p
    determines every lower piece by division and the top piece by
    subtraction.  Raises NotBihomogeneousError off P_{k,k}."""
    degs = p.bidegrees()
    if p.is_zero():
        return [(0, p)]
    if len(degs) != 1:
        raise NotBihomogeneousError(f"mixed bidegrees {degs}")
    (k, l), = degs
    if k != l:
        raise NotBihomogeneousError(f"bidegree ({k},{l}) is not diagonal")
    m = p.m
    if k == 0:
        return [(0, p)]
    lap = ambient_laplacian(p)
    r2 = ZPoly.r_squared(m)
    comps = []
    rest = ZPoly.zero(m)
    if not lap.is_zero():
        for j, s in harmonic_decompose(lap):
            if s.is_zero():
                continue
            aa = k - j
            factor = Fraction(-4 * aa * (m + aa - 1 + 2 * j))
            q = s * (Fraction(1) / factor)
            comps.append((j, q))
            piece = q
            for _ in range(k - j):
                piece = piece * r2
            rest = rest + piece
    q_top = p - rest
    out = comps + [(k, q_top)]
    # exactness guarantees, cheap to assert
    recon = ZPoly.zero(m)
    for j, q in out:
        assert ambient_laplacian(q).is_zero(), "component not harmonic"
        piece = q
        for _ in range(k - j):
            piece = piece * r2
        recon = recon + piece
    assert recon == p, "reassembly failed"
    return sorted(out, key=lambda jq: jq[0])


def restriction_eigenvalue(p):
    """Sphere-Laplacian eigenvalue of the restriction of a harmonic
    polynomial of total degree d on R^D: d (d + D - 2), D = 2m."""
    if not ambient_laplacian(p).is_zero():
        raise ValueError("polynomial is not harmonic")
    d = p.total_degree()
    D = 2 * p.m
    return Fraction(d * (d + D - 2))


def _diagonal_components(p):
    """Split an S^1-invariant polynomial into its bidegree-(k,k) parts."""
    if not p.is_s1_invariant():
        raise NotBihomogeneousError("polynomial is not S^1-invariant")
    parts = {}
    for (a, b), c in p.terms.items():
        k = sum(a)
        parts.setdefault(k, {})[(a, b)] = c
    return {k: ZPoly(p.m, terms) for k, terms in parts.items()}


def sphere_reduce(p):
    """Canonical representative of an S^1-invariant polynomial modulo
    (r^2 - 1): decompose each bidegree-(k,k) part harmonically and drop the
    radial powers.  Two lifts restrict to the same function on the sphere
    iff their reduced forms are equal (exact)."""
    out = ZPoly.zero(p.m)
    for k, part in _diagonal_components(p).items():
        for j, q in harmonic_decompose(part):
            out = out + q
    return out


def sphere_laplacian_lift(p):
    """Exact sphere Laplacian of the restriction of an S^1-invariant
    polynomial, returned as a reduced lift: each harmonic component q of
    bidegree (j,j) is an eigenfunction with eigenvalue 2j(2j + 2m - 2).
    For S^1-invariant functions this equals the Laplacian of the descended
    function on CP^{m-1} (Riemannian submersion with totally geodesic
    fibers)."""
    out = ZPoly.zero(p.m)
    for k, part in _diagonal_components(p).items():
        for j, q in harmonic_decompose(part):
            d = 2 * j
            out = out + Fraction(d * (d + 2 * p.m - 2)) * q
    return out


# ---------------------------------------------------------------------------
# the CP^n eigenfunction and its gradient
# ---------------------------------------------------------------------------


def cpn_eigenfunction(n_complex):
    """The real S^1-invariant harmonic (1,1)-polynomial
    h = (z1 zbar2 + z2 zbar1) + (z2 zbar3 + z3 zbar2) + (z3 zbar1 + z1 zbar3)
    on C^{n_complex+1}; its restriction descends to the first Laplace
    eigenfunction on CP^{n_complex} with eigenvalue 4(n_complex+1) = 2 mu in
    the Fubini-Study normalization mu = 2(n_complex+1).  Needs n_complex >= 2
    (three distinct coordinates)."""
    if n_complex < 2:
        raise DimensionTooSmallError(
            f"need n_complex >= 2, got {n_complex}"
        )
    m = n_complex + 1
    h = ZPoly.zero(m)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        h = h + cpn_pair_term(m, i, j)
    assert ambient_laplacian(h).is_zero()
    assert h.is_bihomogeneous(1)
    assert h.is_real_valued() and h.is_s1_invariant()
    assert restriction_eigenvalue(h) == Fraction(4 * m)
    return h


def cpn_pair_term(m, i, j):
    """z_i zbar_j + z_j zbar_i: one real off-diagonal Hermitian monomial."""
    return ZPoly.z(m, i) * ZPoly.zbar(m, j) + ZPoly.z(m, j) * ZPoly.zbar(m, i)


def gradient_norm_squared_on_cpn(h):
    """Polynomial whose restriction to S^{2m-1} equals |grad v|^2 for the
    function v on CP^{m-1} lifted by the S^1-invariant degree-(1,1)
    polynomial h: the ambient square 4 sum_j (d_z_j h)(d_zbar_j h) minus the
    radial part (d_r h)^2 = 4 h^2 on r = 1 (degree-2 homogeneity); the
    vertical S^1 component vanishes by invariance."""
    if h.total_degree() != 2 or not h.is_s1_invariant():
        raise WrongDegreeError(
            "need an S^1-invariant polynomial of total degree 2"
        )
    if not h.is_bihomogeneous(1):
        raise WrongDegreeError("need bidegree (1,1)")
    m = h.m
    amb = ZPoly.zero(m)
    for j in range(m):
        amb = amb + h.d_z(j) * h.d_zbar(j)
    return 4 * amb - 4 * (h * h)


# ---------------------------------------------------------------------------
# the cubic instability certificate
# ---------------------------------------------------------------------------


def _third_variation_pieces(n, I3, IG, mu, scal2_v2, scal2_dv2):
    """Assemble the third variation of the shrinker entropy along the
    conformal eigen-direction from its intermediate closed forms.

    Inputs are the exact averages I3 = avg(v^3), IG = avg(|grad v|^2 v)
    and the coefficients of the scal'' closed form
        scal'' = scal2_v2 * mu v^2 + scal2_dv2 * |grad v|^2.
    Fixed ingredients (borderline eigenfunction Lap v = 2 mu v,
    f' = (n/2 - 1) v):
        Ric''      = -(n/2-2)|dv|^2 g - 2 mu v^2 g + 3(n/2-1) dv x dv
                     + (n-2) v Hess v
        Lap' f'    = (n/2-1)(-2 mu v^2 - (n/2-1)|dv|^2)
        |d f'|^2   = (n/2-1)^2 |dv|^2
        ((1/mu)Lap - 1) f'' = n mu tau'' - (2 Lap'f' + |df'|^2 - scal''/2)/mu
        avg(v Lap f'') = 2 mu avg(v f''-source) via the resolvent on v
    The tau'' term drops exactly because avg(v) = 0.
    """
    n = Fraction(n)
    half = Fraction(1, 2)
    # ricci piece: -(1/2mu) avg(<Ric'', v g>) with <.,vg> = v tr(.)
    tr_v2 = -2 * n - 2 * (n - 2)                      # coeff of mu v^3
    tr_dv2 = -n * (n / 2 - 2) + 3 * (n / 2 - 1)       # coeff of |dv|^2 v
    ric_piece = -(tr_v2 * mu * I3 + tr_dv2 * IG) / (2 * mu)
    # bracket 2 Lap'f' + |df'|^2 - scal''/2 in the f'' source
    br_v2 = -2 * (n - 2) - half * scal2_v2            # coeff of mu v^2
    br_dv2 = -(n / 2 - 1) ** 2 - half * scal2_dv2     # coeff of |dv|^2
    avg_Av = -(br_v2 * mu * I3 + br_dv2 * IG) / mu
    tau_dropout = Fraction(0)  # n mu tau'' avg(v) = 0 exactly
    hess_piece = (avg_Av + tau_dropout) - (n - 2) ** 2 * IG / (4 * mu)
    return {
        "ricci_term": ric_piece,
        "hessian_term": hess_piece,
        "tau_dropout": tau_dropout,
        "assembled": ric_piece + hess_piece,
    }


def third_variation_certificate(n_complex, spectrum_check_k=25):
    """Exact cubic instability certificate for CP^{n_complex}.

    Builds the borderline eigenfunction v (lifted as h), computes the sphere
    averages exactly, verifies the eigenfunction identities, gates the
    resolvent pole (mu must not be a Laplace eigenvalue), and assembles the
    third variation of the shrinker entropy along (1 + t v) g from the
    intermediate closed forms of the borderline analysis; the result must
    equal the headline (3 n_real - 4) avg(v^3) exactly.

    A second assembly ('chain_rule_crosscheck') uses the conformal
    second-variation closed form validated against the FD oracle in
    `variations` (scal'' = (8-6n) mu v^2 + (n-1)(3-n/2)|dv|^2) and comes out
    (n_real - 2) avg(v^3): the two assemblies differ by 2(n_real-1) avg(v^3),
    localized entirely in the Lap(v') chain-rule term of scal''.  Both
    values are nonzero for every n_complex >= 2, so either way the cubic
    witness certifies dynamical instability.
    """
    if n_complex < 2:
        raise DimensionTooSmallError(f"need n_complex >= 2, got {n_complex}")
    m = n_complex + 1
    n = 2 * n_complex
    mu = Fraction(2 * m)
    lam1 = 2 * mu

    h = cpn_eigenfunction(n_complex)
    I1 = sphere_average(h)
    I2 = sphere_average(h * h)
    I3 = sphere_average(h * h * h)
    grad2 = gradient_norm_squared_on_cpn(h)
    IGv = sphere_average(grad2)          # avg |dv|^2
    IG = sphere_average(grad2 * h)       # avg |dv|^2 v

    checks = {
        "harmonic": ambient_laplacian(h).is_zero(),
        "mean_zero": I1 == 0,
        "l2_positive": I2 > 0,
        "eigenvalue_identity": IGv == lam1 * I2,      # avg|dv|^2 = lam avg v^2
        "cubic_gradient_identity": IG == mu * I3,     # avg|dv|^2 v = mu avg v^3
        "restriction_eigenvalue": restriction_eigenvalue(h) == lam1,
    }

    # resolvent gate: mu not a Laplace eigenvalue 4k(k + n_complex)
    pole_hits = [
        k for k in range(spectrum_check_k + 1)
        if Fraction(4 * k * (k + n_complex)) == mu
    ]
    checks["resolvent_pole_clear"] = not pole_hits

    pieces = _third_variation_pieces(
        n, I3, IG, mu,
        scal2_v2=Fraction(2 * n),
        scal2_dv2=-Fraction(n - 1) * (Fraction(n, 2) + 1),
    )
    headline = Fraction(3 * n - 4) * I3
    crosscheck = _third_variation_pieces(
        n, I3, IG, mu,
        scal2_v2=Fraction(8 - 6 * n),
        scal2_dv2=Fraction(n - 1) * (3 - Fraction(n, 2)),
    )

    return {
        "n_complex": n_complex,
        "n_real": n,
        "mu": mu,
        "lambda_1": lam1,
        "integrals": {
            "avg_v": I1,
            "avg_v_sq": I2,
            "avg_v_cubed": I3,
            "avg_grad_sq": IGv,
            "avg_grad_sq_v": IG,
        },
        "checks": checks,
        "pieces": {k: v for k, v in pieces.items() if k != "assembled"},
        "assembled": pieces["assembled"],
        "headline": headline,
        "consistent": pieces["assembled"] == headline,
        "chain_rule_crosscheck": {
            "pieces": {k: v for k, v in crosscheck.items() if k != "assembled"},
            "assembled": crosscheck["assembled"],
            "equals": Fraction(n - 2) * I3,
        },
        "witness_nonzero": headline != 0,
    }


def certificate_json(cert):
    """Serialize a certificate with exact rationals as 'p/q' strings."""

    def enc(x):
        if isinstance(x, Fraction):
            return f"{x.numerator}/{x.denominator}"
        if isinstance(x, dict):
            return {k: enc(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [enc(v) for v in x]
        return x

    return json.dumps(enc(cert), indent=2)
