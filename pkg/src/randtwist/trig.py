"""Real trigonometric polynomials in theta with polynomial dependence on r.

Every potential in this package is a finite Fourier series

    g(theta, r) = sum_{|k| <= d} c_k(r) exp(2 pi i k theta)

where each c_k is a polynomial in r with complex coefficients and
c_{-k} = conj(c_k) so that g is real-valued.  The class below stores the
coefficient table and provides exact differentiation in both variables,
which keeps the normal-form computations free of quadrature error.
"""

import numpy as np
from numpy.polynomial import polynomial as P

TWO_PI = 2.0 * np.pi

__all__ = ["TrigPoly"]


def _as_poly(c):
    """Coerce a scalar or coefficient sequence to a trimmed complex array."""
    arr = np.atleast_1d(np.asarray(c, dtype=complex))
    if arr.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    arr = P.polytrim(arr, tol=0.0)
    return arr


def _poly_equal(a, b):
    n = max(len(a), len(b))
    pa = np.zeros(n, dtype=complex)
    pb = np.zeros(n, dtype=complex)
    pa[: len(a)] = a
    pb[: len(b)] = b
    return np.allclose(pa, pb, rtol=0.0, atol=1e-14)


class TrigPoly:
    """Finite Fourier series in theta whose coefficients are polynomials in r.

    Parameters
    ----------
    coeffs : dict
        Maps integer harmonic k to the coefficient polynomial of c_k(r),
        given as a scalar or a sequence of complex numbers in ascending
        powers of r.  The table must be Hermitian: whenever k and -k are
        both present, c_{-k} must equal conj(c_k); if one of the pair is
        missing a ValueError is raised.  Use :meth:`hermitian` to build a
        series from the k >= 0 half only.

    Notes
    -----
    Evaluation uses the paired real form

        g = c_0(r) + 2 sum_{k>0} Re[c_k(r) z^k],   z = exp(2 pi i theta),

    so the result is real by construction rather than by cancellation.
    """

    __slots__ = ("coeffs", "degree")

    def __init__(self, coeffs):
        table = {}
        for k, c in coeffs.items():
            k = int(k)
            arr = _as_poly(c)
            if arr.size == 1 and arr[0] == 0:
                continue
            table[k] = arr
        for k in table:
            if k == 0:
                if np.any(np.abs(table[0].imag) > 1e-14):
                    raise ValueError("constant harmonic c_0 must be real")
                continue
            partner = table.get(-k)
            if partner is None:
                raise ValueError(
                    f"harmonic {k} present without conjugate partner {-k}"
                )
            if not _poly_equal(partner, np.conj(table[k])):
                raise ValueError(
                    f"harmonics {k} and {-k} are not complex conjugates"
                )
        object.__setattr__(self, "coeffs", table)
        object.__setattr__(
            self, "degree", max((abs(k) for k in table), default=0)
        )

    def __setattr__(self, name, value):
        raise AttributeError("TrigPoly is immutable")

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @classmethod
    def hermitian(cls, half):
        """Build from harmonics k >= 0, filling c_{-k} = conj(c_k)."""
        full = {}
        for k, c in half.items():
            k = int(k)
            if k < 0:
                raise ValueError("hermitian() expects only k >= 0")
            arr = _as_poly(c)
            full[k] = arr
            if k > 0:
                full[-k] = np.conj(arr)
        return cls(full)

    @classmethod
    def zero(cls):
        return cls({})

    @classmethod
    def cosine(cls, k=1, amplitude=1.0):
        """amplitude * cos(2 pi k theta), r-independent."""
        a = complex(amplitude) / 2.0
        return cls({k: a, -k: np.conj(a)})

    @classmethod
    def sine(cls, k=1, amplitude=1.0):
        """amplitude * sin(2 pi k theta), r-independent."""
        a = complex(amplitude) / (2.0j)
        return cls({k: a, -k: np.conj(a)})

    @classmethod
    def constant(cls, value):
        return cls({0: float(value)})

    # ------------------------------------------------------------------
    # coefficient access
    # ------------------------------------------------------------------

    @property
    def harmonics(self):
        """Sorted list of harmonics with a nonzero coefficient."""
        return sorted(self.coeffs)

    def coeff_poly(self, k):
        """Ascending-power coefficient array of c_k(r) (empty if absent)."""
        return self.coeffs.get(int(k), np.zeros(1, dtype=complex)).copy()

    def coeff(self, k, r):
        """Evaluate c_k(r); vectorized over r."""
        arr = self.coeffs.get(int(k))
        if arr is None:
            return np.zeros_like(np.asarray(r, dtype=float), dtype=complex) + 0j
        return P.polyval(np.asarray(r, dtype=float), arr)

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def zero_mean(self):
        """True when c_0(r) is identically zero."""
        return 0 not in self.coeffs

    @property
    def r_independent(self):
        return all(arr.size == 1 for arr in self.coeffs.values())

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def __call__(self, theta, r):
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        z = np.exp(2j * np.pi * theta)
        return self._eval_with_z(z, r)

    def _eval_with_z(self, z, r):
        """Evaluate given z = exp(2 pi i theta); shared with the fast kernel."""
        out = np.zeros(np.broadcast(z, r).shape, dtype=float)
        c0 = self.coeffs.get(0)
        if c0 is not None:
            out = out + P.polyval(r, c0).real
        zk = None
        for k in range(1, self.degree + 1):
            zk = z if k == 1 else zk * z
            ck = self.coeffs.get(k)
            if ck is None:
                continue
            out = out + 2.0 * (P.polyval(r, ck) * zk).real
        return out

    # ------------------------------------------------------------------
    # calculus (exact, coefficient level)
    # ------------------------------------------------------------------

    def dtheta(self, order=1):
        """Partial derivative in theta, applied `order` times."""
        table = {}
        for k, arr in self.coeffs.items():
            if k == 0:
                continue
            table[k] = arr * (2j * np.pi * k) ** order
        return TrigPoly(table)

    def dr(self, order=1):
        """Partial derivative in r, applied `order` times."""
        table = {}
        for k, arr in self.coeffs.items():
            d = P.polyder(arr, m=order)
            table[k] = d
        return TrigPoly(table)

    def antiderivative_theta(self):
        """G with dG/dtheta = self and G(0, r) = 0.

        Requires a zero-mean series (c_0 = 0); otherwise the primitive
        grows linearly in theta and leaves this class.
        """
        if not self.zero_mean:
            raise ValueError("antiderivative requires a zero-mean series")
        table = {}
        const = np.zeros(1, dtype=complex)
        for k, arr in self.coeffs.items():
            prim = arr / (2j * np.pi * k)
            table[k] = prim
            n = max(len(const), len(prim))
            const = np.pad(const, (0, n - len(const)))
            const -= np.pad(prim, (0, n - len(prim)))
        if 0 in table:
            raise AssertionError("unreachable: zero harmonic in primitive")
        if np.any(np.abs(const.imag) > 1e-13):
            raise AssertionError("primitive constant picked up imaginary part")
        table[0] = const.real
        return TrigPoly(table)

    def shift_theta(self, delta):
        """Translate theta -> theta + delta: c_k picks up exp(2 pi i k delta)."""
        return TrigPoly(
            {k: arr * np.exp(2j * np.pi * k * delta) for k, arr in self.coeffs.items()}
        )

    def freeze_r(self, r0):
        """Collapse coefficient polynomials to their values at r = r0."""
        return TrigPoly({k: P.polyval(float(r0), arr) for k, arr in self.coeffs.items()})

    # ------------------------------------------------------------------
    # algebra
    # ------------------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        table = {}
        for k in set(self.coeffs) | set(other.coeffs):
            a = self.coeffs.get(k, np.zeros(1, dtype=complex))
            b = other.coeffs.get(k, np.zeros(1, dtype=complex))
            table[k] = P.polyadd(a, b)
        return TrigPoly(table)

    def __sub__(self, other):
        return self.__add__(other * -1.0)

    def __mul__(self, scalar):
        s = float(scalar)
        return TrigPoly({k: arr * s for k, arr in self.coeffs.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        keys = set(self.coeffs) | set(other.coeffs)
        return all(
            _poly_equal(
                self.coeffs.get(k, np.zeros(1, dtype=complex)),
                other.coeffs.get(k, np.zeros(1, dtype=complex)),
            )
            for k in keys
        )

    def __hash__(self):
        return hash(tuple(sorted(self.coeffs)))

    def __repr__(self):
        parts = []
        for k in self.harmonics:
            arr = self.coeffs[k]
            body = arr[0] if arr.size == 1 else list(arr)
            parts.append(f"{k}: {body}")
        return "TrigPoly({" + ", ".join(parts) + "})"

    # ------------------------------------------------------------------
    # norms and summaries
    # ------------------------------------------------------------------

    def max_abs(self, r, n_theta=4096):
        """max over a theta grid of |g(theta, r)|; r may be an array."""
        theta = np.arange(n_theta) / n_theta
        r = np.atleast_1d(np.asarray(r, dtype=float))
        vals = self(theta[:, None], r[None, :])
        return float(np.max(np.abs(vals)))

    def power(self, r):
        """sum_{k != 0} |c_k(r)|^2  (Parseval sum without the mean)."""
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r, dtype=float)
        for k, arr in self.coeffs.items():
            if k == 0:
                continue
            total = total + np.abs(P.polyval(r, arr)) ** 2
        return total
