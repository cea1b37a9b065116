"""Discrete-time SISO LTI primitives.

Transfer functions are rational in the backward shift: ``num`` and ``den``
hold the coefficients of increasing powers of q^-1, with ``den[0] == 1``
after normalization.  Everything downstream (identification, criterion
assembly, evaluation) works on these plus finite impulse-response
truncations with an explicit bound on the neglected tail energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "TransferFunction",
    "ImpulseResponse",
    "Dataset",
    "impulse_response",
    "converged_impulse_response",
    "h2_norm_sq",
    "closed_loop",
    "tf_add",
    "tf_sub",
    "tf_mul",
    "tf_one_minus",
    "cancel_common_roots",
    "is_stable",
    "simulate",
    "tf_to_dict",
    "tf_from_dict",
    "DEFAULT_TAPS",
    "MAX_TAPS",
    "TAIL_TOL",
    "STABILITY_MARGIN",
]

DEFAULT_TAPS = 2000
MAX_TAPS = 16000
TAIL_TOL = 1e-12
STABILITY_MARGIN = 1e-9


def _trim_trailing_zeros(c: np.ndarray) -> np.ndarray:
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return c[:1]
    return c[: nz[-1] + 1]


class TransferFunction:
    """Rational operator num(q^-1)/den(q^-1), normalized so den[0] == 1.

    Trailing zero coefficients are trimmed, so proportional coefficient
    vectors construct equal objects.  Instances are treated as immutable.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=(1.0,)):
        num = np.atleast_1d(np.asarray(num, dtype=float))
        den = np.atleast_1d(np.asarray(den, dtype=float))
        if num.ndim != 1 or den.ndim != 1:
            raise ValueError("coefficient vectors must be one-dimensional")
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ValueError("coefficients must be finite")
        num = _trim_trailing_zeros(num)
        den = _trim_trailing_zeros(den)
        if den[0] == 0.0:
            raise ValueError(
                "leading denominator coefficient is zero (degenerate operator)"
            )
        self.num = num / den[0]
        self.den = den / den[0]

    @property
    def is_fir(self) -> bool:
        return self.den.size == 1

    def __call__(self, z):
        """Evaluate at a forward-variable point z (z=1 gives the DC gain)."""
        zi = 1.0 / np.asarray(z, dtype=complex)
        val = np.polyval(self.num[::-1], zi) / np.polyval(self.den[::-1], zi)
        return val if np.ndim(z) else complex(val)

    def __mul__(self, other):
        return tf_mul(self, _as_tf(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return tf_add(self, _as_tf(other))

    __radd__ = __add__

    def __sub__(self, other):
        return tf_add(self, -_as_tf(other))

    def __rsub__(self, other):
        return tf_add(_as_tf(other), -self)

    def __neg__(self):
        return TransferFunction(-self.num, self.den)

    def __eq__(self, other):
        if not isinstance(other, TransferFunction):
            return NotImplemented
        return (
            self.num.size == other.num.size
            and self.den.size == other.den.size
            and np.allclose(self.num, other.num, rtol=1e-12, atol=1e-15)
            and np.allclose(self.den, other.den, rtol=1e-12, atol=1e-15)
        )

    __hash__ = None

    def __repr__(self):
        return f"TransferFunction(num={self.num.tolist()}, den={self.den.tolist()})"


def _as_tf(x) -> TransferFunction:
    if isinstance(x, TransferFunction):
        return x
    return TransferFunction([float(x)])


@dataclass(frozen=True)
class ImpulseResponse:
    """First L taps of an impulse response plus a bound on the tail energy.

    ``tail_energy_bound`` is +inf when the stored taps do not decay, which
    callers must treat as "norms unavailable".
    """

    taps: np.ndarray
    tail_energy_bound: float

    @property
    def L(self) -> int:
        return self.taps.size

    def energy(self) -> float:
        return float(self.taps @ self.taps)


@dataclass(frozen=True)
class Dataset:
    """An input/output record of equal length N."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.u.ndim != 1 or self.y.ndim != 1 or self.u.size != self.y.size:
            raise ValueError("u and y must be one-dimensional with equal length")
        if self.u.size < 1:
            raise ValueError("dataset must contain at least one sample")

    @property
    def N(self) -> int:
        return self.u.size


def _tail_bound(taps: np.ndarray, tf: TransferFunction) -> float:
    """Geometric extrapolation of the energy beyond the stored taps."""
    if tf.is_fir:
        tail = tf.num[taps.size:]
        return float(tail @ tail)
    L = taps.size
    m = max(1, L // 10)
    if L < 2 * m:
        return 0.0 if not np.any(taps) else math.inf
    e_prev = float(taps[L - 2 * m : L - m] @ taps[L - 2 * m : L - m])
    e_last = float(taps[L - m :] @ taps[L - m :])
    if e_last == 0.0:
        return 0.0
    # a final block at the rounding floor relative to the peak is the
    # recursion's noise, not evidence of a persistent tail
    peak_sq = float(np.max(taps * taps))
    if e_last <= (3e-13) ** 2 * peak_sq * m:
        return e_last
    if e_prev > e_last:
        r = e_last / e_prev
        return e_last * r / (1.0 - r)
    return math.inf


def impulse_response(tf: TransferFunction, L: int) -> ImpulseResponse:
    """First L taps h_0..h_{L-1} of the response to a unit impulse."""
    if L < 1:
        raise ValueError("L must be positive")
    delta = np.zeros(L)
    delta[0] = 1.0
    taps = lfilter(tf.num, tf.den, delta)
    return ImpulseResponse(taps=taps, tail_energy_bound=_tail_bound(taps, tf))


def converged_impulse_response(
    tf: TransferFunction,
    L: int = DEFAULT_TAPS,
    tail_tol: float = TAIL_TOL,
    max_len: int = MAX_TAPS,
) -> ImpulseResponse:
    """Impulse response long enough that the tail is provably negligible.

    Doubles L until tail_energy_bound <= tail_tol * energy, and raises if
    that is not reached by ``max_len`` taps (marginal or unstable system).
    """
    while True:
        ir = impulse_response(tf, L)
        e = ir.energy()
        if math.isfinite(e) and ir.tail_energy_bound <= tail_tol * e:
            return ir
        if L >= max_len:
            raise ValueError(
                f"impulse response does not converge within {max_len} taps "
                f"(tail bound {ir.tail_energy_bound:.3e}, energy {e:.3e})"
            )
        L = min(2 * L, max_len)


def h2_norm_sq(ir: ImpulseResponse) -> float:
    """Sum of squared taps; truncates the true squared 2-norm by at most
    ``tail_energy_bound``."""
    if not math.isfinite(ir.tail_energy_bound):
        raise ValueError(
            "impulse response is not decaying; refusing to report a truncated norm"
        )
    return ir.energy()


def _pad_to(c: np.ndarray, n: int) -> np.ndarray:
    return np.pad(c, (0, n - c.size)) if c.size < n else c


def closed_loop(G: TransferFunction, C: TransferFunction) -> TransferFunction:
    """Unity-feedback loop G*C / (1 + G*C)."""
    num = np.convolve(G.num, C.num)
    den = np.convolve(G.den, C.den)
    n = max(num.size, den.size)
    try:
        return TransferFunction(_pad_to(num, n), _pad_to(den, n) + _pad_to(num, n))
    except ValueError as exc:
        raise ValueError(f"degenerate closed loop: {exc}") from exc


def tf_mul(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    return TransferFunction(np.convolve(a.num, b.num), np.convolve(a.den, b.den))


def _collapse_cancellation(num: np.ndarray, scale: float) -> np.ndarray:
    # a numerator at the rounding floor of the operands it was formed from
    # is subtractive-cancellation noise, not a tiny system
    if scale > 0 and float(np.max(np.abs(num))) <= 1e-14 * scale:
        return np.zeros(1)
    return num


def tf_add(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    # shared denominators add numerator-wise; squaring a marginal factor
    # (e.g. integrator controllers) would be numerically uncancelable
    if a.den.size == b.den.size and np.array_equal(a.den, b.den):
        n = max(a.num.size, b.num.size)
        num = _pad_to(a.num, n) + _pad_to(b.num, n)
        scale = max(_abs_max(a.num), _abs_max(b.num))
        return TransferFunction(_collapse_cancellation(num, scale), a.den)
    num_a = np.convolve(a.num, b.den)
    num_b = np.convolve(b.num, a.den)
    n = max(num_a.size, num_b.size)
    num = _pad_to(num_a, n) + _pad_to(num_b, n)
    scale = max(_abs_max(num_a), _abs_max(num_b))
    return TransferFunction(
        _collapse_cancellation(num, scale), np.convolve(a.den, b.den)
    )


def _abs_max(c: np.ndarray) -> float:
    return float(np.max(np.abs(c)))


def tf_sub(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    return tf_add(a, -b)


def tf_one_minus(a: TransferFunction) -> TransferFunction:
    """1 - a as a rational function over a's denominator."""
    n = max(a.num.size, a.den.size)
    return TransferFunction(_pad_to(a.den, n) - _pad_to(a.num, n), a.den)


def _forward_roots(c: np.ndarray, degree: int) -> np.ndarray:
    # coefficients ascending in q^-1 are descending in the forward variable;
    # padding to the common degree appends roots at the origin.
    return np.roots(_pad_to(c, degree + 1))


def cancel_common_roots(tf: TransferFunction, tol: float = 1e-8) -> TransferFunction:
    """Cancel near-coincident numerator/denominator root pairs.

    Needed when products like (1-W)*G*C carry an exactly marginal
    denominator factor matched by a numerator root that floating-point
    arithmetic has displaced by ~1e-15; without cancellation the response
    never passes the decay check.
    """
    if tf.is_fir or not np.any(tf.num):
        return tf
    degree = max(tf.num.size, tf.den.size) - 1
    n_roots = list(_forward_roots(tf.num, degree))
    d_roots = list(_forward_roots(tf.den, degree))
    keep_d = []
    cancelled = 0
    for r in d_roots:
        if n_roots:
            dist = [abs(r - s) for s in n_roots]
            j = int(np.argmin(dist))
            if dist[j] <= tol * max(1.0, abs(r)):
                n_roots.pop(j)
                cancelled += 1
                continue
        keep_d.append(r)
    if cancelled == 0:
        return tf
    lead_n = tf.num[np.nonzero(tf.num)[0][0]]
    new_num = np.real_if_close(lead_n * np.poly(n_roots), tol=1000)
    new_den = np.real_if_close(np.poly(keep_d), tol=1000)
    if np.iscomplexobj(new_num) or np.iscomplexobj(new_den):
        new_num, new_den = np.real(new_num), np.real(new_den)
    shift = (len(keep_d)) - (len(n_roots))
    if shift > 0:
        new_num = np.r_[np.zeros(shift), new_num]
    return TransferFunction(new_num, new_den)


def is_stable(tf: TransferFunction, margin: float = STABILITY_MARGIN) -> bool:
    """True iff every denominator root lies strictly inside the unit circle.

    Roots are taken in the forward variable via companion-matrix
    eigenvalues, with a configurable margin for near-marginal cases.
    """
    if tf.den.size == 1:
        return True
    roots = np.roots(tf.den)
    return bool(np.all(np.abs(roots) < 1.0 - margin))


def simulate(
    tf: TransferFunction, u, noise_std: float, seed: int
) -> Dataset:
    """Filter u through a stable tf and add white Gaussian output noise.

    The noise stream is derived from ``seed`` alone, so identical
    arguments reproduce the output bitwise.  Initial conditions are zero.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    if not is_stable(tf):
        raise ValueError("refusing to simulate an unstable system")
    u = np.asarray(u, dtype=float)
    y = lfilter(tf.num, tf.den, u)
    if noise_std > 0:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        y = y + noise_std * rng.standard_normal(u.size)
    return Dataset(u=u, y=y)


def tf_to_dict(tf: TransferFunction) -> dict:
    return {"num": tf.num.tolist(), "den": tf.den.tolist(), "var": "q_inv"}


def tf_from_dict(obj: dict) -> TransferFunction:
    """Parse {"num", "den", "var"}; forward-variable coefficient lists are
    descending in q and are converted by degree alignment (proper only)."""
    num = np.asarray(obj["num"], dtype=float)
    den = np.asarray(obj["den"], dtype=float)
    var = obj.get("var", "q_inv")
    if var == "q_inv":
        return TransferFunction(num, den)
    if var == "q":
        if num.size > den.size:
            raise ValueError("improper transfer function: deg(num) > deg(den)")
        return TransferFunction(np.r_[np.zeros(den.size - num.size), num], den)
    raise ValueError(f"unknown variable convention {var!r}")
