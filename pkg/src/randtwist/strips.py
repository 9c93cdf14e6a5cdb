"""Zone taxonomy of actions, rational strips, and ergodization defects.

For fixed perturbation size eps, the circle of actions splits into zones
according to how well r is approximated by rationals: real-rational (RR)
cores and transition annuli (TZ1, TZ2) around denominators q <= d,
imaginary-rational (IR) strips of width eps^beta around moderately large
denominators, and the totally irrational (TI) rest.  The zone decides
which drift/variance prediction applies.

The module also measures the total size of the rational strips (it decays
like eps^rho) and quantifies how fast orbits of the circle rotation
equidistribute, which is what controls the quality of the averaged
variance in the TI region.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .normal_form import default_gamma
from .trig import TrigPoly

__all__ = [
    "ZoneParams",
    "StripClass",
    "StripMeasure",
    "best_rational",
    "classify",
    "denominator_cutoff",
    "rational_strip_measure",
    "birkhoff_defect",
    "ergodization_error",
]


@dataclass(frozen=True)
class ZoneParams:
    """Exponents and constants of the zone decomposition.

    beta is the IR strip exponent (0 < beta <= 1/5), rho the target decay
    of the total strip measure, and b = (beta - rho)/2 the denominator
    cutoff exponent.  l is the smoothness budget used by the admissible
    range of rho: rho < beta * (l - 11) / (l - 1).  K1, K2 scale the RR
    and TZ1 radii; gamma caps TZ2.
    """

    epsilon: float
    beta: float
    rho: float
    d: int
    K1: float = 1.0
    K2: float = 1.0
    gamma: float = None
    l: int = 14

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if not (0.0 < self.beta <= 0.2):
            raise ValueError(f"beta must be in (0, 1/5], got {self.beta}")
        if self.l < 12:
            raise ValueError("smoothness budget l must be at least 12")
        r_max = (self.l - 11) / (self.l - 1)
        if not (0.0 < self.rho < r_max * self.beta):
            raise ValueError(
                f"rho must be in (0, {r_max * self.beta:.4g}) for l = {self.l}"
            )
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", default_gamma(self.d))
        rr = self.K1 * math.sqrt(self.epsilon)
        tz = self.K2 * self.epsilon ** (1.0 / 6.0)
        if not (rr <= tz <= self.gamma):
            raise ValueError(
                f"zone radii must nest: K1*sqrt(eps) = {rr:.4g} <= "
                f"K2*eps^(1/6) = {tz:.4g} <= gamma = {self.gamma:.4g}"
            )

    @property
    def b(self):
        return 0.5 * (self.beta - self.rho)

    @property
    def q_cut(self):
        """Largest denominator strictly below eps^(-b)."""
        return denominator_cutoff(self.epsilon, self.b)

    @property
    def strip_half_width(self):
        return self.epsilon**self.beta


@dataclass(frozen=True)
class StripClass:
    """Zone tag of one action value, with the governing rational if any."""

    tag: str
    p: int = None
    q: int = None
    dist: float = None

    def __post_init__(self):
        if self.tag not in ("TI", "IR", "RR", "TZ1", "TZ2"):
            raise ValueError(f"unknown tag {self.tag!r}")


def _continued_fraction_candidates(x, qmax):
    """Best-approximation candidates (convergent + final semiconvergent)."""
    num, den = x.numerator, x.denominator
    h_prev, k_prev = 0, 1
    h_cur, k_cur = 1, 0
    # after the first Euclid step h_cur/k_cur is the integer part a0/1;
    # each later step is the standard convergent recurrence
    a_seq = []
    n, d_ = num, den
    while d_:
        a, n, d_ = n // d_, d_, n % d_
        a_seq.append(a)
    cands = []
    for a in a_seq:
        h_next = a * h_cur + h_prev
        k_next = a * k_cur + k_prev
        if k_next > qmax:
            t = (qmax - k_prev) // k_cur
            if t >= 1:
                cands.append((t * h_cur + h_prev, t * k_cur + k_prev))
            break
        h_prev, k_prev, h_cur, k_cur = h_cur, k_cur, h_next, k_next
    if k_cur >= 1:
        cands.append((h_cur, k_cur))
    if not cands:
        cands.append((round(float(x)), 1))
    return cands


def best_rational(r, qmax):
    """Closest reduced fraction to r with denominator <= qmax.

    Exact integer arithmetic on the rational approximation of r at 1e-15
    granularity; ties break toward the smaller denominator.  Returns
    (p, q, |r - p/q|).
    """
    qmax = int(qmax)
    if qmax < 1:
        raise ValueError("qmax must be >= 1")
    x = Fraction(float(r)).limit_denominator(10**15)
    if x.denominator <= qmax:
        return x.numerator, x.denominator, abs(float(r) - x.numerator / x.denominator)
    best = None
    for p, q in _continued_fraction_candidates(x, qmax):
        g = math.gcd(p, q)
        p, q = p // g, q // g
        err = abs(x - Fraction(p, q))
        if best is None or err < best[2] or (err == best[2] and q < best[1]):
            best = (p, q, err)
    return best[0], best[1], float(best[2])


def classify(r, zp):
    """Zone tag of r under the precedence RR > TZ1 > TZ2 > IR > TI."""
    r = float(r)
    eps = zp.epsilon
    p, q, e = best_rational(r, zp.d)
    rr_cut = zp.K1 * math.sqrt(eps)
    tz1_cut = zp.K2 * eps ** (1.0 / 6.0)
    if e <= rr_cut:
        return StripClass(tag="RR", p=p, q=q, dist=e)
    if e <= tz1_cut:
        return StripClass(tag="TZ1", p=p, q=q, dist=e)
    if e <= zp.gamma:
        return StripClass(tag="TZ2", p=p, q=q, dist=e)
    best_ir = None
    half = zp.strip_half_width
    for den in range(zp.d + 1, zp.q_cut + 1):
        p0 = round(r * den)
        for pc in (p0 - 1, p0, p0 + 1):
            g = math.gcd(pc, den)
            pr, qr = pc // g, den // g
            if not (zp.d < qr <= zp.q_cut):
                continue
            dist = abs(r - pr / qr)
            if dist < half and (best_ir is None or dist < best_ir[2]):
                best_ir = (pr, qr, dist)
    if best_ir is not None:
        return StripClass(tag="IR", p=best_ir[0], q=best_ir[1], dist=best_ir[2])
    return StripClass(tag="TI")


def denominator_cutoff(epsilon, b):
    """Largest denominator strictly below eps^(-b)."""
    x = float(epsilon) ** -float(b)
    n = math.floor(x)
    if n == x:
        n -= 1
    return n


@dataclass(frozen=True)
class StripMeasure:
    """Census of the rational strips inside a window.

    gap_margin is (smallest spacing between strip centers) - 2 eps^beta;
    a positive value certifies that no interval of one strip-diameter can
    hold two centers.
    """

    count: int
    count_bound: float
    eps_bound: float
    measured: float
    measure_cap: float
    gap_margin: float
    members: tuple = field(repr=False, default=())

    @property
    def measure_ok(self):
        return self.measured <= self.measure_cap

    @property
    def uniqueness_ok(self):
        return self.gap_margin > 0


def rational_strip_measure(zp, window, strict=True, samples=0, rng=None):
    """Enumerate the strip-center rationals in a window and bound their mass.

    Farey enumeration of R = {p/q reduced : q < eps^(-b)} intersected
    with the window.  Checks the per-denominator count bound (at most
    q|W| + 1 centers per q, so q_cut (q_cut+1)/2 per unit length plus
    the endcaps), the measure bound count * eps^beta <= eps^rho * |window|,
    and the
    separation claim that any interval of length 2 eps^beta holds at most
    one member.  With strict=True a violated bound raises; otherwise the
    flags on the returned StripMeasure record it.

    `samples` draws that many random subwindows of length 2 eps^beta and
    verifies the at-most-one claim on each (needs `rng`).
    """
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError("window must have positive length")
    members = []
    for q in range(1, zp.q_cut + 1):
        for p in range(math.ceil(lo * q), math.floor(hi * q) + 1):
            if math.gcd(p, q) == 1:
                members.append((p, q))
    vals = np.array(sorted(p / q for p, q in members))
    count = len(members)
    # each q <= q_cut puts at most q|W| + 1 centers in the window
    count_bound = 0.5 * zp.q_cut * (zp.q_cut + 1) * (hi - lo) + zp.q_cut
    eps_bound = zp.epsilon ** (-2 * zp.b)
    measured = count * zp.strip_half_width
    cap = zp.epsilon**zp.rho * (hi - lo)
    gaps = np.diff(vals) if count > 1 else np.array([np.inf])
    gap_margin = float(np.min(gaps)) - 2 * zp.strip_half_width
    res = StripMeasure(
        count=count,
        count_bound=count_bound,
        eps_bound=eps_bound,
        measured=measured,
        measure_cap=cap,
        gap_margin=gap_margin,
        members=tuple(members),
    )
    if strict:
        if count > count_bound or 0.5 * zp.q_cut**2 >= eps_bound:
            raise AssertionError(
                f"count bound violated: {count} > {count_bound} or "
                f"q_cut^2/2 >= {eps_bound}"
            )
        if not res.measure_ok:
            raise AssertionError(
                f"strip measure {measured:.4g} exceeds eps^rho * |window| "
                f"= {cap:.4g}"
            )
        if not res.uniqueness_ok:
            raise AssertionError(
                "two strip centers closer than one strip width"
            )
    if samples:
        if rng is None:
            rng = np.random.default_rng(0)
        w = 2 * zp.strip_half_width
        for _ in range(int(samples)):
            a = rng.uniform(lo, hi - w)
            inside = np.count_nonzero((vals >= a) & (vals <= a + w))
            if inside > 1:
                raise AssertionError(
                    f"interval [{a:.6g}, {a + w:.6g}] holds {inside} strip "
                    "centers"
                )
    return res


def _g_mean(g, r):
    if isinstance(g, TrigPoly):
        c0 = g.coeff(0, float(r))
        return float(np.real(c0))
    raise TypeError("g must be a TrigPoly (mean is read off its coefficients)")


def birkhoff_defect(g, r_star, theta_star, N):
    """|N * mean(g) - sum_{k<N} g(theta* + k r*)| at fixed N.

    The sum is compensated (math.fsum), so the defect carries only the
    per-evaluation rounding of g.
    """
    N = int(N)
    r = float(r_star)
    mean = _g_mean(g, r)
    total = 0.0
    chunk = 1 << 16
    partials = []
    for start in range(0, N, chunk):
        k = np.arange(start, min(start + chunk, N), dtype=float)
        vals = g(theta_star + k * r, r)
        partials.append(math.fsum(vals.tolist()))
    total = math.fsum(partials)
    return abs(N * mean - total)


def ergodization_error(g, r_star, theta_star, zp, A_exponent, N=None):
    """Equidistribution defect of the rotation by r* at the lemma's horizon.

    Picks N as the largest continued-fraction denominator of r* not
    exceeding eps^(-A) (or the exact denominator for rationals), then
    returns (N, defect) with the defect from :func:`birkhoff_defect`.
    Requires r* to be TI-admissible under zp and the exponent to satisfy
    2 beta < A < (l - 1) b - beta.

    Pass an explicit N to override the horizon selection (used by
    calibration tests).
    """
    tag = classify(r_star, zp).tag
    if tag != "TI":
        raise ValueError(
            f"r* = {float(r_star):.6g} is {tag}, not TI; the ergodization "
            "lemma does not apply"
        )
    A = float(A_exponent)
    lo, hi = 2 * zp.beta, (zp.l - 1) * zp.b - zp.beta
    if not (lo < A < hi):
        raise ValueError(
            f"A = {A:.4g} outside the admissible range ({lo:.4g}, {hi:.4g})"
        )
    if N is None:
        horizon = zp.epsilon**-A
        fr = Fraction(float(r_star)).limit_denominator(10**15)
        if fr.denominator <= horizon:
            N = fr.denominator
        else:
            num, den = fr.numerator, fr.denominator
            h_prev, k_prev = 1, 0
            h_cur, k_cur = 0, 1
            n_, d_ = num, den
            N = 1
            while d_:
                a, n_, d_ = n_ // d_, d_, n_ % d_
                h_next = a * h_cur + h_prev
                k_next = a * k_cur + k_prev
                if k_next > horizon:
                    break
                h_prev, k_prev, h_cur, k_cur = h_cur, k_cur, h_next, k_next
                N = k_cur
    return int(N), birkhoff_defect(g, r_star, theta_star, int(N))
