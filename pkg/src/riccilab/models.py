"""Exact catalog of Einstein model geometries and the stability classifier.

Each entry stores exact data: Einstein constant mu (Fraction), volume as a
rational multiple of a power of pi, the low Laplace spectrum, and the
literature flag for local maximality of the Yamabe functional (a datum with
citation tag, not a computation).  The classifier implements the rule
engine:

  yamabe = yes  and  lambda_1 > 2 mu          -> DynamicallyStable
  yamabe = no   or   lambda_1 < 2 mu          -> DynamicallyUnstable
  lambda_1 = 2 mu and cubic witness nonzero   -> BorderlineResolvedUnstable
  otherwise                                   -> Indeterminate

Round spheres are excluded (they carry conformal Killing fields and are
handled separately: dynamically stable).

The conformal Hessian of the shrinker entropy acts on a Laplace
eigenfunction v with eigenvalue lam as multiplication by
    mult(lam) = (n-1)/4 * (x-2)(x - n/(n-1)) / (x-1),   x = lam/mu,
so the second variation along v g is -mult(lam) for unit-normalized v.  The
prefactor (n-1)/4 is the numerically verified one (direct minimization of
the shrinker entropy on the round 2-sphere reproduces it to 5e-7); the
roots x = 2 (the borderline direction) and x = n/(n-1) (the conformal
direction excluded by the Obata bound) are what the classifier consumes.
The resolvent factor has its pole at x = 1, i.e. lam = mu; by Obata every
non-sphere entry has lambda_1 > n mu/(n-1) > mu, and the spheres have
lambda_1 = n mu/(n-1) > mu, so the pole is avoided on the whole catalog;
evaluation still gates on it exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, pi
import itertools
import json

from .errors import (
    ExcludedSphereError,
    NonPositiveMuError,
    NotInSpectrumError,
    ResolventPoleError,
)

SPECTRUM_CUTOFF = 10


@dataclass(frozen=True)
class PiNumber:
    """Exact real of the form coeff * pi^power."""

    coeff: Fraction
    power: int = 0

    def __float__(self):
        return float(self.coeff) * pi**self.power

    def __mul__(self, other):
        if isinstance(other, PiNumber):
            return PiNumber(self.coeff * other.coeff, self.power + other.power)
        return PiNumber(self.coeff * Fraction(other), self.power)

    def __str__(self):
        if self.power == 0:
            return str(self.coeff)
        return f"{self.coeff}*pi^{self.power}"


@dataclass(frozen=True)
class ModelSpace:
    """Einstein model geometry with exact invariants.

    spectrum: ordered (eigenvalue, multiplicity) pairs starting at (0, 1);
    multiplicity 0 marks eigenvalues whose multiplicity is not catalogued
    (only the eigenvalue itself is certified).  yamabe_local_max is a
    literature datum ('yes'/'no'/'unknown') with its citation tag.
    """

    name: str
    dim_real: int
    einstein_constant: Fraction
    volume: PiNumber
    spectrum: tuple
    yamabe_local_max: str
    yamabe_citation: str
    excluded_sphere: bool = False
    normalization: str = ""
    aliases: tuple = ()

    @property
    def scal(self):
        return self.dim_real * self.einstein_constant

    @property
    def lambda_1(self):
        for lam, _ in self.spectrum:
            if lam > 0:
                return lam
        raise ValueError(f"{self.name}: no positive eigenvalue stored")

    def validate(self):
        n, mu = self.dim_real, self.einstein_constant
        assert self.scal == n * mu
        assert self.spectrum[0] == (Fraction(0), 1), "spectrum must start at (0,1)"
        eigs = [lam for lam, _ in self.spectrum]
        assert all(a < b for a, b in zip(eigs, eigs[1:])), "eigenvalues not increasing"
        if not self.excluded_sphere and mu > 0:
            # Obata bound for non-sphere Einstein spaces
            assert self.lambda_1 > Fraction(n, n - 1) * mu, (
                f"{self.name}: Obata bound violated"
            )
        if self.yamabe_local_max not in ("yes", "no", "unknown"):
            raise ValueError("yamabe_local_max must be yes/no/unknown")
        return self

    def to_json_dict(self):
        return {
            "name": self.name,
            "dim_real": self.dim_real,
            "einstein_constant": str(self.einstein_constant),
            "scal": str(self.scal),
            "volume": str(self.volume),
            "volume_float": float(self.volume),
            "spectrum": [[str(lam), mult] for lam, mult in self.spectrum],
            "yamabe_local_max": self.yamabe_local_max,
            "yamabe_citation": self.yamabe_citation,
            "excluded_sphere": self.excluded_sphere,
            "normalization": self.normalization,
            "aliases": list(self.aliases),
        }


@dataclass
class StabilityVerdict:
    verdict: str  # DynamicallyStable | DynamicallyUnstable |
    #               BorderlineResolvedUnstable | Indeterminate
    reasons: list
    witness: object = None

    def to_json_dict(self):
        w = self.witness
        if isinstance(w, Fraction):
            w = f"{w.numerator}/{w.denominator}"
        return {"verdict": self.verdict, "reasons": self.reasons, "witness": w}


# ---------------------------------------------------------------------------
# catalog constructors
# ---------------------------------------------------------------------------


def _sphere_volume(n):
    """vol(S^n(1)) as a PiNumber: odd n = 2m+1 -> 2 pi^{m+1}/m!,
    even n = 2m -> 2 (2 pi)^m / (2m-1)!!."""
    if n % 2 == 1:
        m = (n - 1) // 2
        return PiNumber(Fraction(2, factorial(m)), m + 1)
    m = n // 2
    dfact = 1
    for k in range(2 * m - 1, 0, -2):
        dfact *= k
    return PiNumber(Fraction(2 * 2**m, dfact), m)


def _sphere_multiplicity(n, k):
    """dim of degree-k spherical harmonics on S^n."""
    if k == 0:
        return 1
    lower = comb(n + k - 2, k - 2) if k >= 2 else 0
    return comb(n + k, k) - lower


def flat_torus(n, length_over_2pi=Fraction(1)):
    """Flat torus T^n with all periods L = 2 pi * length_over_2pi."""
    r = Fraction(length_over_2pi)
    base = Fraction(1) / (r * r)  # (2 pi / L)^2
    eigs = sorted(
        {
            sum(kk * kk for kk in kvec)
            for kvec in itertools.product(range(-6, 7), repeat=n)
        }
    )
    spectrum = []
    for q in eigs[:SPECTRUM_CUTOFF]:
        mult = sum(
            1
            for kvec in itertools.product(range(-6, 7), repeat=n)
            if sum(kk * kk for kk in kvec) == q
        )
        spectrum.append((base * q, mult))
    vol = PiNumber(Fraction(2**n) * r**n, n)
    return ModelSpace(
        name=f"flat-torus-{n}",
        dim_real=n,
        einstein_constant=Fraction(0),
        volume=vol,
        spectrum=tuple(spectrum),
        yamabe_local_max="yes",
        yamabe_citation="tori admit no positive-scalar-curvature metrics (GL80/SY79)",
        normalization=f"all periods 2*pi*{r}",
    ).validate()


def round_sphere(n):
    spectrum = tuple(
        (Fraction(k * (k + n - 1)), _sphere_multiplicity(n, k))
        for k in range(SPECTRUM_CUTOFF)
    )
    return ModelSpace(
        name=f"round-sphere-{n}",
        dim_real=n,
        einstein_constant=Fraction(n - 1),
        volume=_sphere_volume(n),
        spectrum=spectrum,
        yamabe_local_max="yes",
        yamabe_citation="round metric realizes the Yamabe invariant of S^n (Aubin/Schoen)",
        excluded_sphere=True,
        normalization="unit radius",
        aliases=(f"sphere-{n}", f"s{n}"),
    ).validate()


def cpn(n_complex):
    """CP^{n_complex}, Fubini-Study normalization mu = 2(n_c + 1)
    (sectional curvature in [1,4]; quotient of the unit round sphere)."""
    m = n_complex + 1
    spectrum = tuple(
        (
            Fraction(4 * k * (k + n_complex)),
            comb(n_complex + k, k) ** 2 - (comb(n_complex + k - 1, k - 1) ** 2 if k else 0),
        )
        for k in range(SPECTRUM_CUTOFF)
    )
    return ModelSpace(
        name=f"cp{n_complex}",
        dim_real=2 * n_complex,
        einstein_constant=Fraction(2 * m),
        volume=PiNumber(Fraction(1, factorial(n_complex)), n_complex),
        spectrum=spectrum,
        yamabe_local_max="yes",
        yamabe_citation="CH13 Tables 1-2 (lambda_1 = 2 mu borderline family)",
        normalization="Fubini-Study, mu = 2(n_c+1)",
        aliases=(f"cp-{n_complex}",),
    ).validate()


def product_s2_s2():
    """S^2(1) x S^2(1): Einstein with mu = 1; never a Yamabe local maximizer
    (products of positive Einstein metrics admit destabilizing directions)."""
    factor = [Fraction(k * (k + 1)) for k in range(SPECTRUM_CUTOFF)]
    mults = {lam: 2 * k + 1 for k, lam in enumerate(factor)}
    sums = {}
    for l1 in factor:
        for l2 in factor:
            sums[l1 + l2] = sums.get(l1 + l2, 0) + mults[l1] * mults[l2]
    eigs = sorted(sums)[:SPECTRUM_CUTOFF]
    spectrum = tuple((lam, sums[lam]) for lam in eigs)
    return ModelSpace(
        name="s2xs2",
        dim_real=4,
        einstein_constant=Fraction(1),
        volume=PiNumber(Fraction(16), 2),
        spectrum=spectrum,
        yamabe_local_max="no",
        yamabe_citation="products of positive Einstein metrics do not maximize "
        "the Yamabe functional (negative Einstein-operator directions)",
        normalization="both factors unit round spheres",
        aliases=("product-einstein", "s2-x-s2"),
    ).validate()


def hpn(n_quat):
    """HP^{n_quat}, quaternionic Fubini-Study normalization mu = 4(n+2)
    (quotient of the unit round S^{4n+3}); lambda_1 = 8(n+1) < 2 mu.
    Multiplicities beyond (0,1) are not catalogued (stored as 0)."""
    spectrum = [(Fraction(0), 1)]
    for k in range(1, SPECTRUM_CUTOFF):
        spectrum.append((Fraction(4 * k * (k + 2 * n_quat + 1)), 0))
    dfact = 1
    for j in range(2 * n_quat + 1, 1, -1):
        dfact *= j
    return ModelSpace(
        name=f"hp{n_quat}",
        dim_real=4 * n_quat,
        einstein_constant=Fraction(4 * (n_quat + 2)),
        volume=PiNumber(Fraction(1, factorial(2 * n_quat + 1)), 2 * n_quat),
        spectrum=tuple(spectrum),
        yamabe_local_max="unknown",
        yamabe_citation="CH13 Table 2; stored unknown pending table resolution",
        normalization="quaternionic Fubini-Study, mu = 4(n+2)",
    ).validate()


def _borderline_symmetric(name, dim_real, aliases=()):
    """Borderline symmetric-space entry: lambda_1 = 2 mu exactly, Yamabe
    local maximizer, in the scale normalization mu = 1 (the borderline
    ratio is the catalogued fact; volumes are unit-normalized).
    Multiplicities beyond (0,1) are not catalogued."""
    return ModelSpace(
        name=name,
        dim_real=dim_real,
        einstein_constant=Fraction(1),
        volume=PiNumber(Fraction(1), 0),
        spectrum=((Fraction(0), 1), (Fraction(2), 0)),
        yamabe_local_max="yes",
        yamabe_citation="CH13 Tables 1-2 (borderline lambda_1 = 2 mu family)",
        normalization="scale-normalized mu = 1, unit volume",
        aliases=aliases,
    ).validate()


def catalog():
    """The model-space catalog."""
    entries = [
        flat_torus(2),
        flat_torus(3),
        flat_torus(4),
        round_sphere(2),
        round_sphere(3),
        round_sphere(4),
        round_sphere(5),
        round_sphere(6),
        product_s2_s2(),
        hpn(2),
        hpn(3),
        _borderline_symmetric("g2-biinvariant", 14, aliases=("g2",)),
        _borderline_symmetric("so7-so5xso2", 10),
    ]
    entries.extend(cpn(nc) for nc in range(2, 7))
    return entries


def find_model(name):
    name = name.lower()
    for m in catalog():
        if m.name == name or name in m.aliases:
            return m
    raise KeyError(f"no catalog model named {name!r}")


def catalog_json():
    return json.dumps([m.to_json_dict() for m in catalog()], indent=2)


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------


def classify(model, cubic_witness=None):
    """Stability rule engine; see module docstring for the rules.

    cubic_witness: exact or float value of the cubic integral
    (3 n - 4) avg(v^3) for a borderline eigenfunction v, when available.
    Raises ExcludedSphereError for round spheres.
    """
    if model.excluded_sphere:
        raise ExcludedSphereError(
            f"{model.name} is a round sphere: excluded from the rule engine "
            "(dynamically stable as a special case)"
        )
    lam1 = model.lambda_1
    two_mu = 2 * model.einstein_constant
    reasons = []
    if model.yamabe_local_max == "yes" and lam1 > two_mu:
        reasons.append("Yamabe local maximizer")
        reasons.append(f"lambda_1 = {lam1} > 2 mu = {two_mu}")
        return StabilityVerdict("DynamicallyStable", reasons)
    if model.yamabe_local_max == "no" or lam1 < two_mu:
        if model.yamabe_local_max == "no":
            reasons.append("not a Yamabe local maximizer")
        if lam1 < two_mu:
            reasons.append(f"lambda_1 = {lam1} < 2 mu = {two_mu}")
        return StabilityVerdict("DynamicallyUnstable", reasons)
    if lam1 == two_mu and cubic_witness not in (None, 0) and cubic_witness != 0:
        reasons.append(f"lambda_1 = 2 mu = {two_mu} (borderline)")
        reasons.append(f"cubic witness {cubic_witness} != 0")
        return StabilityVerdict(
            "BorderlineResolvedUnstable", reasons, witness=cubic_witness
        )
    reasons.append(f"lambda_1 = {lam1} vs 2 mu = {two_mu}; no resolving witness")
    return StabilityVerdict("Indeterminate", reasons)


# ---------------------------------------------------------------------------
# conformal Hessian multiplier of the shrinker entropy
# ---------------------------------------------------------------------------


def conformal_L_multiplier(model, lam):
    """Scalar action of the conformal-Hessian operator on a Laplace
    eigenfunction with eigenvalue lam > 0:
        (n-1)/4 * (x - 2)(x - n/(n-1)) / (x - 1),   x = lam / mu.
    Exact in Fractions.  Raises ResolventPoleError at x = 1 and
    NotInSpectrumError when lam is not a stored positive eigenvalue."""
    mu = model.einstein_constant
    if mu <= 0:
        raise NonPositiveMuError(f"{model.name}: need mu > 0")
    lam = Fraction(lam)
    if lam <= 0 or lam not in {l for l, _ in model.spectrum if l > 0}:
        raise NotInSpectrumError(
            f"{lam} is not a stored positive eigenvalue of {model.name}"
        )
    n = model.dim_real
    x = lam / mu
    if x == 1:
        raise ResolventPoleError("lam = mu hits the resolvent pole")
    return (
        Fraction(n - 1, 4) * (x - 2) * (x - Fraction(n, n - 1)) / (x - 1)
    )


def nu_conformal_hessian(model, lam):
    """Second variation of the shrinker entropy along v*g for a
    unit-normalized eigenfunction v with eigenvalue lam: -multiplier."""
    return -conformal_L_multiplier(model, lam)
