"""Fourier-side normal form: homological equation, drift, and variance.

A single averaging step conjugates the random system to a normal form in
which the action behaves, over diffusive time, like a diffusion with
drift b(r) and variance rate sigma^2(r).  Away from resonances the
generating function of the conjugacy solves the homological equation

    S1^k(r) = i E v^k(r) (1 - mu_k(r)) / (2 pi k (1 - e^{2 pi i k r})),

where mu_k is a mollifier that switches the correction off inside a
gamma-collar of each low-order resonance p/q (those keep their resonant
average E v_{p,q} instead).  Everything here works at the level of
Fourier coefficients, so drift and variance come out as finite pairings
with no quadrature error.
"""

import math
from dataclasses import dataclass

import numpy as np

from .trig import TrigPoly

__all__ = [
    "bump",
    "mollifier",
    "gamma_max",
    "default_gamma",
    "resonance_set",
    "resonant_harmonics",
    "GeneratingFunction",
    "solve_homological",
    "averaged_potential",
    "drift_b",
    "variance_sigma2",
    "ir_drift_variance",
    "E2_field",
    "E1_series",
    "E3_series",
    "DiffusionPrediction",
    "apply_generator",
]

TWO_PI = 2.0 * np.pi


# ----------------------------------------------------------------------
# mollifier
# ----------------------------------------------------------------------

def _h(s):
    """exp(-1/s) for s > 0, else 0; the standard smooth cutoff factor."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def bump(x):
    """Smooth plateau bump: 1 on |x| <= 1, 0 on |x| >= 2, C-infinity.

    Uses the quotient form h(2-|x|) / (h(2-|x|) + h(|x|-1)) with
    h(s) = exp(-1/s) on s > 0, which is smooth at both plateau edges.
    """
    x = np.abs(np.asarray(x, dtype=float))
    a = _h(2.0 - x)
    b = _h(x - 1.0)
    with np.errstate(invalid="ignore"):
        out = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    return out if out.ndim else float(out)


def gamma_max(d):
    """Largest collar width for which the mollifier case table is exact.

    Keeping mu_k = 0 for harmonics not resonant with p/q across the whole
    collar requires gamma <= 1 / ((pi + 3) q d) for every denominator
    q <= d; keeping mu_k = 0 beyond 3*gamma requires gamma <= 0.15 / d.
    """
    d = int(d)
    if d < 1:
        raise ValueError("degree must be >= 1")
    if d == 1:
        return 0.15
    return 1.0 / ((math.pi + 3.0) * d * d)


def default_gamma(d):
    """Default collar width: 0.05/d, shrunk when the case table requires it."""
    cap = 0.8 * gamma_max(d)
    return min(0.05 / int(d), cap)


def _validate_gamma(d, gamma):
    g = float(gamma)
    if not (0.0 < g <= gamma_max(d)):
        raise ValueError(
            f"gamma = {g:.6g} outside validated range (0, {gamma_max(d):.6g}] "
            f"for degree {d}"
        )
    return g


def resonance_set(d, window=(0.0, 1.0)):
    """All reduced rationals p/q with 1 <= q <= d inside the closed window."""
    lo, hi = window
    out = []
    for q in range(1, int(d) + 1):
        for p in range(math.ceil(lo * q), math.floor(hi * q) + 1):
            if math.gcd(p, q) == 1:
                out.append((p, q))
    return out


def resonant_harmonics(p, q, d):
    """R_{p,q}: harmonics 0 < |k| <= d with k p / q an integer (i.e. q | k)."""
    if math.gcd(p, q) != 1:
        raise ValueError(f"p/q = {p}/{q} is not reduced")
    q = abs(q)
    return [k for k in range(-d, d + 1) if k != 0 and k % q == 0]


def mollifier(k, r, gamma, pq=None, d=None):
    """mu_k(r) = bump(|1 - e^{2 pi i k r}| / (2 pi |k| gamma)).

    Even in k, 1-periodic in r, equal to 1 exactly on the resonance
    circle k r in Z and vanishing once k r is far enough from the
    integers.  When `pq` (and the family degree `d`) are supplied the
    published case table is asserted: mu_k = 1 for resonant k within
    gamma/2 of p/q, mu_k = 0 beyond 3*gamma or for non-resonant k.
    """
    k = int(k)
    if k == 0:
        raise ValueError("mollifier is defined for k != 0")
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    r = np.asarray(r, dtype=float)
    x = np.abs(1.0 - np.exp(2j * np.pi * k * r)) / (TWO_PI * abs(k) * gamma)
    val = bump(x)
    if pq is not None:
        if d is None:
            raise ValueError("case-table assertion needs the degree d")
        _validate_gamma(d, gamma)
        p, q = pq
        delta = np.abs(r - p / q)
        resonant = k % abs(q) == 0
        v = np.atleast_1d(np.asarray(val, dtype=float))
        dl = np.atleast_1d(delta)
        local = 0.45 / (d * max(abs(q), 1))
        if resonant:
            bad_one = (dl <= gamma / 2) & (v != 1.0)
            bad_zero = (dl >= 3 * gamma) & (dl <= local) & (v != 0.0)
        else:
            bad_one = np.zeros_like(v, dtype=bool)
            bad_zero = (dl <= local) & (v != 0.0)
        if bad_one.any() or bad_zero.any():
            raise AssertionError(
                f"mollifier case table violated for k={k}, p/q={p}/{q}, "
                f"gamma={gamma}"
            )
    return val if np.ndim(val) else float(val)


# ----------------------------------------------------------------------
# generating function
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratingFunction:
    """First-order generating function of the averaging conjugacy.

    Holds the family, the collar width gamma, and optionally the
    resonance (p, q) whose local window |r - p/q| <= L the object is
    meant for.  Coefficients S1^k(r) are computed on demand; they are
    finite everywhere (the mollifier kills every singularity), Hermitian
    in k, and vanish for k = 0 and |k| > d.
    """

    fam: object
    gamma: float
    pq: tuple = None
    window: float = None

    def __post_init__(self):
        _validate_gamma(self.fam.degree, self.gamma)
        if self.pq is not None:
            p, q = self.pq
            if math.gcd(p, q) != 1:
                raise ValueError(f"p/q = {p}/{q} is not reduced")
            if self.window is None:
                d = self.fam.degree
                object.__setattr__(self, "window", 0.5 / (d * d))

    @property
    def degree(self):
        return self.fam.degree

    def _check_window(self, r):
        if self.pq is None:
            return
        p, q = self.pq
        if np.any(np.abs(np.asarray(r, dtype=float) - p / q) > self.window):
            raise ValueError(
                f"r outside the local window |r - {p}/{q}| <= {self.window:.4g}"
            )

    def coeff(self, k, r):
        """S1^k(r); vectorized over r, zero for k = 0 or |k| > degree."""
        self._check_window(r)
        k = int(k)
        r = np.asarray(r, dtype=float)
        if k == 0 or abs(k) > self.degree:
            return np.zeros(r.shape, dtype=complex) if r.ndim else 0.0 + 0.0j
        ev_k = self.fam.mean_v().coeff(k, r)
        mu = mollifier(k, r, self.gamma)
        num = 1j * ev_k * (1.0 - mu)
        den = TWO_PI * k * (1.0 - np.exp(2j * np.pi * k * r))
        num = np.asarray(num, dtype=complex)
        den = np.asarray(den, dtype=complex)
        safe = np.where(den == 0, 1.0, den)
        out = np.where(num == 0, 0.0, num / safe)
        if np.any((den == 0) & (num != 0)):
            raise AssertionError("singular harmonic escaped the mollifier")
        return out if out.ndim else complex(out)

    def coeff_table(self, r):
        """All coefficients at once: dict k -> S1^k(r) arrays."""
        return {
            k: self.coeff(k, r)
            for k in range(-self.degree, self.degree + 1)
            if k != 0
        }

    def eval(self, theta, r, dtheta=0):
        """S1(theta, r), or its dtheta-th theta-derivative; vectorized."""
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        z = np.exp(2j * np.pi * theta)
        out = np.zeros(np.broadcast(z, r).shape, dtype=float)
        for k in range(1, self.degree + 1):
            ck = self.coeff(k, r) * (2j * np.pi * k) ** dtheta
            out = out + 2.0 * (ck * z**k).real
        return out

    def residual(self, theta, r, compensated=True):
        """Cohomological residual; equals the mollified resonant average.

        The raw expression (compensated=False) is

            dS1/dtheta (theta, r) + Ev(theta, r) - dS1/dtheta (theta + r, r)

        which vanishes at fully non-resonant r and equals the resonant
        average E v_{p,q} inside a collar.  With compensated=True (the
        default) the mollified resonant sum

            sum_k mu_k(r) Ev^k(r) e^{2 pi i k theta}

        is subtracted, leaving zero to round-off for every r.
        """
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        ev = self.fam.mean_v()
        lhs = (
            self.eval(theta, r, dtheta=1)
            + ev(theta, r)
            - self.eval(theta + r, r, dtheta=1)
        )
        if not compensated:
            return lhs
        z = np.exp(2j * np.pi * theta)
        res_avg = np.zeros(np.broadcast(z, r).shape, dtype=float)
        for k in range(1, self.degree + 1):
            ck = ev.coeff(k, r) * mollifier(k, r, self.gamma)
            res_avg = res_avg + 2.0 * (ck * z**k).real
        return lhs - res_avg


def solve_homological(fam, gamma=None, pq=None):
    """Solve the first-order homological equation for the family.

    Requires the zero-average hypothesis (structural).  When `pq` is
    given the result guards evaluation to the local window around p/q;
    without it the generating function is global.
    """
    ev = fam.mean_v()
    if not ev.zero_mean:
        raise ValueError("homological equation requires zero-average v")
    if gamma is None:
        gamma = default_gamma(fam.degree)
    return GeneratingFunction(fam=fam, gamma=float(gamma), pq=pq)


def averaged_potential(fam, p, q):
    """Resonant average E v_{p,q}: harmonics of E v with q | k, 0 < |k| <= d."""
    p, q = int(p), int(q)
    if q == 0:
        raise ValueError("q must be nonzero")
    if math.gcd(p, q) != 1:
        raise ValueError(f"p/q = {p}/{q} is not reduced")
    q = abs(q)
    ev = fam.mean_v()
    table = {k: arr for k, arr in ev.coeffs.items() if k != 0 and k % q == 0}
    return TrigPoly(table)


# ----------------------------------------------------------------------
# drift and variance
# ----------------------------------------------------------------------

def _collar_guard(fam, gamma, r_values):
    """Raise if any r sits within 3*gamma of a low-order resonance."""
    d = fam.degree
    r_values = np.atleast_1d(np.asarray(r_values, dtype=float))
    lo = float(np.min(r_values))
    hi = float(np.max(r_values))
    for p, q in resonance_set(d, (lo - 1.0, hi + 1.0)):
        dist = np.abs(r_values - p / q)
        if np.any(dist < 3.0 * gamma):
            bad = float(r_values[np.argmin(dist)])
            raise ValueError(
                f"r = {bad:.6g} lies within 3*gamma of resonance {p}/{q}; "
                "use the resonant (RR/TZ) machinery there"
            )


def _pair_mean(a, b):
    """Zeroth Fourier coefficient of a product: sum_k a_k b_{-k}.

    `a` and `b` map harmonics to (possibly array-valued) coefficients.
    """
    keys = set(a) & {-k for k in b}
    total = 0.0
    for k in keys:
        total = total + a[k] * b[-k]
    return total


def drift_b(fam, gamma, r_grid, guard=True):
    """Predicted drift b(r) on a grid of non-resonant actions.

    b(r) is the theta-average of the second-order correction field,

        b(r) = integral [ d_r Ev * d_theta S1 - d^2_theta S1 * (Eu - Ev) ],

    evaluated as an exact finite Fourier pairing.  Every grid point must
    stay 3*gamma away from all resonances of order <= d; pass guard=False
    to evaluate the globally defined mollified field anyway (inside a
    collar it describes the normal form, not the true local drift).
    """
    gamma = _validate_gamma(fam.degree, gamma)
    r = np.atleast_1d(np.asarray(r_grid, dtype=float))
    scalar = np.asarray(r_grid).ndim == 0
    if guard:
        _collar_guard(fam, gamma, r)
    d = fam.degree
    S1 = solve_homological(fam, gamma)
    ev_r = fam.mean_v().dr()
    eu_minus_ev = fam.mean_u() - fam.mean_v()

    s1 = S1.coeff_table(r)
    dth_s1 = {k: (2j * np.pi * k) * c for k, c in s1.items()}
    d2th_s1 = {k: (2j * np.pi * k) ** 2 * c for k, c in s1.items()}
    a1 = {k: ev_r.coeff(k, r) for k in ev_r.coeffs}
    a2 = {k: eu_minus_ev.coeff(k, r) for k in eu_minus_ev.coeffs}

    total = _pair_mean(a1, dth_s1) - _pair_mean(d2th_s1, a2)
    total = np.asarray(total, dtype=complex) + np.zeros(r.shape, dtype=complex)
    if np.any(np.abs(total.imag) > 1e-10 * (1.0 + np.abs(total.real))):
        raise AssertionError("drift acquired an imaginary part")
    b = total.real
    if fam.area_preserving and np.any(np.abs(b) > 1e-9):
        raise AssertionError(
            "area-preserving family produced nonzero drift "
            f"(max |b| = {np.max(np.abs(b)):.3g})"
        )
    return float(b[0]) if scalar else b


def variance_sigma2(fam, r):
    """Variance rate sigma^2(r) = sum_{k != 0} |vbar^k(r)|^2 (Parseval)."""
    vbar = fam.osc_v()
    out = vbar.power(np.asarray(r, dtype=float))
    return float(out) if np.asarray(r).ndim == 0 else out


def E2_field(fam, gamma, theta, r):
    """Pointwise drift integrand E2 = Ev * dS1/dtheta + Ew off the collars."""
    gamma = _validate_gamma(fam.degree, gamma)
    _collar_guard(fam, gamma, r)
    S1 = solve_homological(fam, gamma)
    ev = fam.mean_v()
    ew = fam.mean_w()
    return ev(theta, r) * S1.eval(theta, r, dtheta=1) + ew(theta, r)


def ir_drift_variance(fam, p, q, theta_grid, gamma=None):
    """Cyclic-average drift and variance along a high-order resonance.

    For d < q the orbit of the rotation by p/q has period q; the
    effective drift and variance at angle theta are the averages of E2
    and vbar^2 over that orbit:

        b_IR(theta)      = (1/q) sum_{k<q} E2(theta + k p/q, p/q)
        sigma2_IR(theta) = (1/q) sum_{k<q} vbar^2(theta + k p/q, p/q)

    Returns the pair of tables over theta_grid.
    """
    p, q = int(p), int(q)
    if math.gcd(p, q) != 1:
        raise ValueError(f"p/q = {p}/{q} is not reduced")
    if abs(q) <= fam.degree:
        raise ValueError(
            f"IR regime needs q > degree = {fam.degree}, got q = {q}"
        )
    if gamma is None:
        gamma = default_gamma(fam.degree)
    theta = np.asarray(theta_grid, dtype=float)
    r = p / q
    vbar = fam.osc_v()
    b_ir = np.zeros_like(theta)
    s_ir = np.zeros_like(theta)
    for k in range(abs(q)):
        b_ir = b_ir + E2_field(fam, gamma, theta + k * r, r)
        s_ir = s_ir + vbar(theta + k * r, r) ** 2
    return b_ir / abs(q), s_ir / abs(q)


# ----------------------------------------------------------------------
# correction fields exposed for completeness tests
# ----------------------------------------------------------------------

def E1_series(fam):
    """First correction field as a series: E1 = -sum_k i (Ev^k)'(r)/(2 pi k) e_k."""
    ev = fam.mean_v()
    table = {}
    for k, arr in ev.coeffs.items():
        if k == 0:
            continue
        der = np.polynomial.polynomial.polyder(arr)
        table[k] = der * (-1j / (TWO_PI * k))
    return TrigPoly(table)


def E3_series(fam, p, q):
    """Resonant analogue of E1 at p/q: non-resonant harmonics only, frozen r.

    Coefficients are -i (Ev^k)'(p/q) / (2 pi k) for 0 < |k| <= d with
    q not dividing k; the resonant harmonics stay in the averaged
    potential instead.
    """
    p, q = int(p), int(q)
    if math.gcd(p, q) != 1:
        raise ValueError(f"p/q = {p}/{q} is not reduced")
    q = abs(q)
    ev = fam.mean_v()
    table = {}
    for k, arr in ev.coeffs.items():
        if k == 0 or k % q == 0:
            continue
        der = np.polynomial.polynomial.polyder(arr)
        val = np.polynomial.polynomial.polyval(p / q, der) * (-1j / (TWO_PI * k))
        table[k] = val
    return TrigPoly(table)


# ----------------------------------------------------------------------
# diffusion prediction
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionPrediction:
    """Drift and variance of the limiting diffusion in one regime.

    `b` and `sigma2` are functions of r alone; the resonant regimes
    carry theta-dependent variants as well.
    """

    regime: str
    b: object
    sigma2: object
    b_theta: object = None
    sigma2_theta: object = None

    @classmethod
    def totally_irrational(cls, fam, gamma=None):
        if gamma is None:
            gamma = default_gamma(fam.degree)

        # The prediction is the globally mollified field (no collar
        # guard): diffusion functionals evaluate it along orbits that
        # may cross collars, where validity is a classification
        # question, not an evaluation error.
        def b(r):
            return drift_b(fam, gamma, r, guard=False)

        def s2(r):
            return variance_sigma2(fam, r)

        return cls(regime="TI", b=b, sigma2=s2)

    @classmethod
    def imaginary_rational(cls, fam, p, q, gamma=None):
        if gamma is None:
            gamma = default_gamma(fam.degree)

        def b_theta(theta):
            bt, _ = ir_drift_variance(fam, p, q, np.atleast_1d(theta), gamma)
            return bt if np.asarray(theta).ndim else float(bt[0])

        def s2_theta(theta):
            _, st = ir_drift_variance(fam, p, q, np.atleast_1d(theta), gamma)
            return st if np.asarray(theta).ndim else float(st[0])

        def b(r):
            theta = np.arange(4096) / 4096.0
            bt, _ = ir_drift_variance(fam, p, q, theta, gamma)
            return float(np.mean(bt))

        def s2(r):
            return variance_sigma2(fam, p / q)

        return cls(
            regime="IR", b=b, sigma2=s2, b_theta=b_theta, sigma2_theta=s2_theta
        )


def apply_generator(pred, f, r, df=None, d2f=None):
    """Generator of the limiting diffusion: Af = b f' + (1/2) sigma^2 f''.

    Derivatives may be supplied; otherwise central differences with
    h = 1e-5 are used.
    """
    r = float(r)
    h = 1e-5
    if df is None:
        dfr = (f(r + h) - f(r - h)) / (2 * h)
    else:
        dfr = df(r)
    if d2f is None:
        d2fr = (f(r + h) - 2 * f(r) + f(r - h)) / (h * h)
    else:
        d2fr = d2f(r)
    return float(pred.b(r)) * dfr + 0.5 * float(pred.sigma2(r)) * d2fr
