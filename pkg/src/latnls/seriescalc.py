"""Truncated Taylor (jet) arithmetic for exact derivative extraction.

All logarithmic derivatives in this package are computed through jets:
coefficient arrays j[k] representing sum_k j[k] (x - x0)^k truncated at a
fixed order.  Derivatives of ln f never need a branch choice this way --
only ratios of jet coefficients enter, so phase unwrapping issues cannot
arise, and there is no differencing error.

The multivariate variant (per-variable degree capped) supports the
third-order lattice stencils, where logarithms of multi-affine window
functions are differentiated in up to three spectral variables at once.
"""

import math

import numpy as np

JET_ORDER = 3     # highest derivative order needed anywhere (third log-derivatives)


def jet_const(value, order: int = JET_ORDER) -> np.ndarray:
    out = np.zeros(order + 1, dtype=complex)
    out[0] = value
    return out


def jet_var(center, order: int = JET_ORDER) -> np.ndarray:
    """Jet of the identity map x around the given center."""
    out = np.zeros(order + 1, dtype=complex)
    out[0] = center
    if order >= 1:
        out[1] = 1.0
    return out


def jet_mul(a, b, order: int = JET_ORDER) -> np.ndarray:
    out = np.zeros(order + 1, dtype=complex)
    a = np.asarray(a)
    b = np.asarray(b)
    for i in range(min(len(a), order + 1)):
        if a[i] == 0:
            continue
        hi = min(len(b), order + 1 - i)
        out[i:i + hi] += a[i] * b[:hi]
    return out


def jet_inv(a, order: int = JET_ORDER) -> np.ndarray:
    """Series inverse 1/a; requires a[0] != 0."""
    a = np.asarray(a, dtype=complex)
    if a[0] == 0:
        raise ZeroDivisionError("jet has vanishing constant term")
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0 / a[0]
    for k in range(1, order + 1):
        acc = 0.0
        for i in range(1, min(k, len(a) - 1) + 1):
            acc += a[i] * out[k - i]
        out[k] = -acc / a[0]
    return out


def jet_reciprocal_var(center, order: int = JET_ORDER) -> np.ndarray:
    """Jet of 1/x around a nonzero center."""
    return np.array([(-1.0) ** k / center ** (k + 1) for k in range(order + 1)],
                    dtype=complex)


def jet_log_derivatives(a, order: int = JET_ORDER) -> np.ndarray:
    """Derivatives [g', g'', ..., g^(order)] of g = ln a at the jet center.

    Branch-free: computes the jet of a'/a and rescales coefficients.
    """
    a = np.asarray(a, dtype=complex)
    da = np.zeros(order + 1, dtype=complex)
    for k in range(1, min(len(a), order + 1)):
        da[k - 1] = k * a[k]
    lp = jet_mul(da, jet_inv(a, order), order)       # jet of (ln a)'
    return np.array([math.factorial(k) * lp[k] for k in range(order)])


def poly_jet(coeffs, center, order: int = JET_ORDER) -> np.ndarray:
    """Jet of a polynomial sum_p coeffs[p] x^p around the given center (Horner)."""
    out = np.zeros(order + 1, dtype=complex)
    shift = jet_var(center, order)
    for c in reversed(list(coeffs)):
        out = jet_mul(out, shift, order)
        out[0] += c
    return out


def matjet_mul(A, B, order: int = JET_ORDER) -> np.ndarray:
    """Product of matrix-valued jets, shape (order+1, n, n)."""
    out = np.zeros_like(A)
    for i in range(order + 1):
        if not A[i].any():
            continue
        for j in range(order + 1 - i):
            out[i + j] += A[i] @ B[j]
    return out


# ---------------------------------------------------------------------------
# multivariate truncated series (dense arrays over exponent tuples)
# ---------------------------------------------------------------------------

def multi_from_affine(coeffs: dict, nvars: int, degree: int = JET_ORDER) -> np.ndarray:
    """Embed multi-affine coefficients {0/1 tuple: value} into a degree-capped array."""
    ext = (degree + 1,) * nvars
    out = np.zeros(ext, dtype=complex)
    for subset, c in coeffs.items():
        out[subset] = c
    return out


def multi_mul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Truncated product of multivariate series (per-variable degree cap)."""
    cap = A.shape[0]
    out = np.zeros_like(A)
    for ia in np.argwhere(A != 0):
        av = A[tuple(ia)]
        for ib in np.argwhere(B != 0):
            ic = ia + ib
            if np.all(ic < cap):
                out[tuple(ic)] += av * B[tuple(ib)]
    return out


def multi_log(F: np.ndarray, terms: int = JET_ORDER) -> np.ndarray:
    """Series of ln(F/F[0]) around the base point (F[0...0] must be nonzero)."""
    origin = (0,) * F.ndim
    f0 = F[origin]
    if f0 == 0:
        raise ZeroDivisionError("window function vanishes at the base point")
    X = F / f0
    X[origin] -= 1.0
    out = np.zeros_like(F)
    power = X.copy()
    sign = 1.0
    for m in range(1, terms + 1):
        out += sign / m * power
        if m < terms:
            power = multi_mul(power, X)
        sign = -sign
    return out


def multi_derivative(G: np.ndarray, orders) -> complex:
    """Partial derivative of the series at the base point, given per-variable orders."""
    c = G[tuple(orders)]
    for o in orders:
        c *= math.factorial(o)
    return c
