"""Lax matrix, rational R-matrix, monodromy/transfer matrices, quantum determinant.

The one-site Lax matrix on the 2-dimensional auxiliary space is

    L(lam) = -i lam Delta sigma3/2 + S3 I + S+ sigma_+ + S- sigma_-,

with sigma_± = (sigma1 ± i sigma2)/2 and site operators

    S3 = 1 + (kappa/2) chi^dag chi,
    S+ = -i sqrt(kappa) chi^dag rho,      S- = i sqrt(kappa) rho chi,
    rho = sqrt(1 + (kappa/4) chi^dag chi).

These close the deformed algebra [S3, S±] = ±(kappa Delta/2) S±,
[S+, S-] = -kappa Delta S3, which is exactly what makes the rational
R-matrix R(lam, mu) = I - i kappa P / (lam - mu) (P the permutation)
intertwine two Lax matrices.

Tensor-product convention: (A (x) B)_{(a1 a2),(b1 b2)} = A_{a1 b1} B_{a2 b2},
with the operator entries of the first factor standing to the LEFT.  With
this ordering the exchange relation

    R(lam,mu) (T(lam) (x) T(mu)) = (I (x) T(mu)) (T(lam) (x) I) R(lam,mu)

holds at machine precision on cutoff-exact sectors (see ybe module).

The monodromy matrix is the ordered product T(lam) = L_N(lam) ... L_1(lam),
the transfer matrix its auxiliary trace.  Every entry is affine in lam per
site, so monodromy entries are degree-N polynomials in lam; the polynomial
coefficients are extracted exactly (no interpolation) and feed the spectral
Hamiltonian construction.

The quantum determinant

    det_q T(lam) = T11(lam) T22(lam + i kappa) - T12(lam) T21(lam + i kappa)

is a scalar on every cutoff-exact sector.  Its one-site value is measured
and fitted as a quadratic in lam rather than hard-coded; see fit_qdet.
"""

from dataclasses import dataclass

import numpy as np

from .fockspace import (LatticeOperator, SiteOperator, build_rho, build_site_ops,
                        embed, lattice_identity, lattice_zero, restrict,
                        sector_basis, site_identity)
from .params import ModelParams

PERMUTATION = np.array([[1, 0, 0, 0],
                        [0, 0, 1, 0],
                        [0, 1, 0, 0],
                        [0, 0, 0, 1]], dtype=complex)

SIGMA2 = np.array([[0.0, -1j], [1j, 0.0]])


@dataclass
class SpinEntries:
    """The three site operators entering the Lax matrix."""

    S3: SiteOperator
    Splus: SiteOperator
    Sminus: SiteOperator


def build_spin_entries(params: ModelParams) -> SpinEntries:
    _, chi_dag, number = build_site_ops(params)
    chi = chi_dag.dagger()
    rho = build_rho(params)
    S3 = site_identity(params) + 0.5 * params.kappa * number
    Splus = -1j * np.sqrt(params.kappa) * (chi_dag @ rho)
    Sminus = 1j * np.sqrt(params.kappa) * (rho @ chi)
    return SpinEntries(S3, Splus, Sminus)


class AuxMatrix2:
    """2x2 matrix over the auxiliary space with LatticeOperator entries."""

    def __init__(self, entries):
        self.entries = entries           # nested 2x2 list

    def __getitem__(self, key):
        i, j = key
        return self.entries[i][j]

    def __matmul__(self, other: "AuxMatrix2") -> "AuxMatrix2":
        e = [[None, None], [None, None]]
        for i in range(2):
            for j in range(2):
                acc = self.entries[i][0] @ other.entries[0][j]
                acc = acc + self.entries[i][1] @ other.entries[1][j]
                e[i][j] = acc
        return AuxMatrix2(e)

    def __add__(self, other: "AuxMatrix2") -> "AuxMatrix2":
        return AuxMatrix2([[self.entries[i][j] + other.entries[i][j]
                            for j in range(2)] for i in range(2)])

    def trace(self) -> LatticeOperator:
        return self.entries[0][0] + self.entries[1][1]

    def gradings(self):
        return [[self.entries[i][j].grading for j in range(2)] for i in range(2)]


def aux_identity(params: ModelParams) -> AuxMatrix2:
    one = lattice_identity(params)
    zp = lattice_zero(params, grading=+1)
    zm = lattice_zero(params, grading=-1)
    return AuxMatrix2([[one, zp], [zm, one]])


def build_L(params: ModelParams, lam: complex, site: int = 1) -> AuxMatrix2:
    """Lax matrix at one site, embedded into the N-site space."""
    spins = build_spin_entries(params)
    S3 = embed(spins.S3, site, params)
    Sp = embed(spins.Splus, site, params)
    Sm = embed(spins.Sminus, site, params)
    one = lattice_identity(params)
    half = 0.5j * lam * params.delta
    return AuxMatrix2([[S3 + (-half) * one, Sp],
                       [Sm, S3 + half * one]])


def build_R(lam: complex, mu: complex, kappa: float) -> np.ndarray:
    """Rational R-matrix I - i kappa P/(lam - mu) on the tensor-square aux space."""
    if lam == mu:
        raise ZeroDivisionError("R-matrix pole at lam == mu")
    return np.eye(4, dtype=complex) - 1j * kappa / (lam - mu) * PERMUTATION


def R_inverse(lam: complex, mu: complex, kappa: float,
              guard: float = 1e-6) -> np.ndarray:
    """Closed-form inverse; singular when lam - mu hits {0, +i kappa, -i kappa}."""
    scale = max(1.0, abs(kappa))
    for s in (0.0, 1j * kappa, -1j * kappa):
        if abs(lam - mu - s) <= guard * scale:
            raise ZeroDivisionError(
                f"R-matrix not invertible: lam - mu = {lam - mu} within "
                f"{guard * scale} of {s}")
    b = -1j * kappa / (lam - mu)
    return (np.eye(4, dtype=complex) - b * PERMUTATION) / (1.0 - b * b)


def monodromy(params: ModelParams, lam: complex,
              last: int = None, first: int = 1) -> AuxMatrix2:
    """Ordered product L_last(lam) ... L_first(lam); identity when last < first."""
    if last is None:
        last = params.sites
    if last < first:
        return aux_identity(params)
    T = build_L(params, lam, last)
    for site in range(last - 1, first - 1, -1):
        T = T @ build_L(params, lam, site)
    return T


class AuxMatrixPoly:
    """Exact polynomial in lam whose coefficients are AuxMatrix2 objects."""

    def __init__(self, coeffs):
        self.coeffs = coeffs             # list of AuxMatrix2, ascending degree

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def at(self, lam: complex) -> AuxMatrix2:
        out = None
        for p, C in enumerate(self.coeffs):
            term = AuxMatrix2([[(lam ** p) * C[i, j] for j in range(2)]
                               for i in range(2)])
            out = term if out is None else out + term
        return out

    def entry_coeffs(self, i: int, j: int):
        return [C[i, j] for C in self.coeffs]

    def derivative(self) -> "AuxMatrixPoly":
        return AuxMatrixPoly([
            AuxMatrix2([[float(p) * C[i, j] for j in range(2)] for i in range(2)])
            for p, C in enumerate(self.coeffs)][1:]) if self.degree >= 1 else \
            AuxMatrixPoly([_zero_like(self.coeffs[0])])


def _zero_like(C: AuxMatrix2) -> AuxMatrix2:
    return AuxMatrix2([[0.0 * C[i, j] for j in range(2)] for i in range(2)])


def _L_poly(params: ModelParams, site: int):
    """One-site Lax matrix as [constant, linear] AuxMatrix2 coefficients."""
    spins = build_spin_entries(params)
    S3 = embed(spins.S3, site, params)
    Sp = embed(spins.Splus, site, params)
    Sm = embed(spins.Sminus, site, params)
    one = lattice_identity(params)
    zp = lattice_zero(params, grading=+1)
    zm = lattice_zero(params, grading=-1)
    const = AuxMatrix2([[S3, Sp], [Sm, S3]])
    lin = AuxMatrix2([[(-0.5j * params.delta) * one, zp],
                      [zm, (0.5j * params.delta) * one]])
    return [const, lin]


def monodromy_poly(params: ModelParams, last: int = None,
                   first: int = 1) -> AuxMatrixPoly:
    """Exact lam-polynomial form of the monodromy matrix over a site range."""
    if last is None:
        last = params.sites
    if last < first:
        return AuxMatrixPoly([aux_identity(params)])
    P = _L_poly(params, last)
    for site in range(last - 1, first - 1, -1):
        Q = _L_poly(params, site)
        out = [None] * (len(P) + 1)
        for p, A in enumerate(P):
            for q, B in enumerate(Q):
                term = A @ B
                out[p + q] = term if out[p + q] is None else out[p + q] + term
        P = out
    return AuxMatrixPoly(P)


def transfer(params: ModelParams, lam: complex) -> LatticeOperator:
    return monodromy(params, lam).trace()


def transfer_poly(params: ModelParams):
    """Operator coefficients C_p with tau(lam) = sum_p lam^p C_p, exact."""
    return [C.trace() for C in monodromy_poly(params).coeffs]


# ---------------------------------------------------------------------------
# quantum determinant
# ---------------------------------------------------------------------------

def quantum_determinant(params: ModelParams, lam: complex) -> LatticeOperator:
    """det_q T(lam) = T11(lam) T22(lam + i kappa) - T12(lam) T21(lam + i kappa)."""
    T0 = monodromy(params, lam)
    T1 = monodromy(params, lam + 1j * params.kappa)
    return T0[0, 0] @ T1[1, 1] - T0[0, 1] @ T1[1, 0]


def adjugate_identity_residual(params: ModelParams, lam: complex,
                               sector: int) -> float:
    """Residual of T(lam) sigma2 T^t(lam + i kappa) sigma2 = (scalar) I on a sector.

    The transpose acts in the auxiliary space only.  Off-diagonal auxiliary
    entries must vanish and both diagonal entries must be the same scalar
    multiple of the identity.
    """
    T0 = monodromy(params, lam)
    T1 = monodromy(params, lam + 1j * params.kappa)
    # sigma2 T^t sigma2 = [[T22, -T12], [-T21, T11]]
    prod = [[T0[0, 0] @ T1[1, 1] - T0[0, 1] @ T1[1, 0],
             (-1.0) * (T0[0, 0] @ T1[0, 1]) + T0[0, 1] @ T1[0, 0]],
            [T0[1, 0] @ T1[1, 1] - T0[1, 1] @ T1[1, 0],
             (-1.0) * (T0[1, 0] @ T1[0, 1]) + T0[1, 1] @ T1[0, 0]]]
    basis = sector_basis(params, sector)
    d00 = restrict(prod[0][0], basis)
    d11 = restrict(prod[1][1], basis)
    scalar = np.trace(d00) / basis.dim
    eye = np.eye(basis.dim)
    res = max(
        np.abs(restrict(prod[0][1], basis)).max() if basis.dim else 0.0,
        np.abs(restrict(prod[1][0], basis)).max() if basis.dim else 0.0,
        np.abs(d00 - scalar * eye).max(),
        np.abs(d11 - scalar * eye).max(),
    )
    return float(res) / max(1.0, abs(scalar))


def qdet_scalar(params: ModelParams, lam: complex, sector: int):
    """Scalar value of det_q on a sector plus the off-scalar mass.

    Returns (scalar, off_scalar_residual).  Sector exactness needs
    cutoff >= sector + 2 (one raising entry acts inside the product).
    """
    op = quantum_determinant(params, lam)
    basis = sector_basis(params, sector)
    block = restrict(op, basis)
    scalar = np.trace(block) / basis.dim
    off = np.abs(block - scalar * np.eye(basis.dim)).max()
    return complex(scalar), float(off)


@dataclass
class QdetFit:
    """Quadratic fit of the one-site quantum determinant d_q(lam).

    coeffs holds [c0, c1, c2] with d_q(lam) = c0 + c1 lam + c2 lam^2 measured
    on the exactness window.  root_at_projector is |d_q(nu)|; the shift that
    makes det_q central is recorded in shift_sign (+1 for lam -> lam + i kappa).
    """

    coeffs: np.ndarray
    fit_residual: float
    root_at_projector: float
    shift_sign: int
    free_limit_dev: float

    def value(self, lam: complex) -> complex:
        c = self.coeffs
        return c[0] + c[1] * lam + c[2] * lam ** 2


def fit_qdet(params: ModelParams, lams=None, sector: int = 1) -> QdetFit:
    """Measure d_q(lam) empirically at one site and fit the quadratic.

    The closed form is deliberately not hard-coded: the scalar is sampled at
    several spectral points on a one-site lattice and least-squares fitted.
    The fitted polynomial is then checked for a root at the projector point
    nu, and its kappa -> 0 limit is compared against the classical
    determinant 1 + lam^2 Delta^2 / 4.
    """
    one_site = ModelParams(params.kappa, params.delta, 1, max(params.cutoff, sector + 3))
    if lams is None:
        lams = np.array([0.3 + 0.2j, -0.7 + 0.5j, 1.1 - 0.4j, -1.3 - 0.8j, 0.9 + 1.0j])
    vals = []
    for lam in lams:
        scalar, _ = qdet_scalar(one_site, lam, sector)
        vals.append(scalar)
    V = np.vander(np.asarray(lams, dtype=complex), 3, increasing=True)
    coeffs, *_ = np.linalg.lstsq(V, np.asarray(vals), rcond=None)
    fit_res = float(np.abs(V @ coeffs - vals).max())
    root = abs(coeffs[0] + coeffs[1] * one_site.nu + coeffs[2] * one_site.nu ** 2)
    # kappa -> 0 limit of the same measurement vs the classical determinant
    free = ModelParams(0.0, params.delta, 1, one_site.cutoff)
    dev = 0.0
    for lam in lams:
        scalar, _ = qdet_scalar(free, lam, sector)
        dev = max(dev, abs(scalar - (1.0 + lam ** 2 * params.delta ** 2 / 4.0)))
    return QdetFit(coeffs=coeffs, fit_residual=fit_res, root_at_projector=float(root),
                   shift_sign=+1, free_limit_dev=float(dev))


def printed_qdet_discrepancy(fit: QdetFit, params: ModelParams, lams=None) -> float:
    """Largest deviation between the fitted d_q and Delta^2 (lam-nu)(lam-nu+i kappa)/4.

    Kept as a recorded scalar: the two expressions disagree (the fitted form
    factorizes as Delta^2 (lam-nu)(lam+nu+i kappa)/4 instead), so this is
    documentation, not an assertion.
    """
    if lams is None:
        lams = np.linspace(-2.0, 2.0, 9)
    nu = params.nu
    dev = 0.0
    for lam in lams:
        printed = params.delta ** 2 * (lam - nu) * (lam - nu + 1j * params.kappa) / 4
        dev = max(dev, abs(fit.value(lam) - printed))
    return float(dev)
