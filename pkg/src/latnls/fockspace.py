"""Truncated bosonic Fock spaces and graded lattice operators.

Single-site operators act on d levels |0>, ..., |d-1>.  The lattice field is
chi = sqrt(Delta) b with b the canonical boson, so <m-1|chi|m> = sqrt(m Delta)
and the commutator [chi, chi^dag] = Delta holds exactly on levels m <= d-2
(the top level is clipped by the truncation).

Every operator carries an integer grading: the shift it applies to the total
occupation number.  chi has grading -1, chi^dag +1, diagonal operators 0, and
gradings add under multiplication.  The grading is exact even in the
truncated space, so operators map the total-quanta sector M into M + grading
with no leakage; this is what sector-resolved computations rely on.

Site indices are 1-based; site 1 is the most significant factor of the
tensor-product basis (basis index = sum_j m_j d^(N-j)).
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import sparse

from .params import ModelParams


@dataclass
class SiteOperator:
    """Dense d x d matrix with a particle-number grading."""

    matrix: np.ndarray
    grading: int

    def __matmul__(self, other: "SiteOperator") -> "SiteOperator":
        return SiteOperator(self.matrix @ other.matrix, self.grading + other.grading)

    def __add__(self, other: "SiteOperator") -> "SiteOperator":
        if self.grading != other.grading:
            raise ValueError("cannot add site operators of different grading")
        return SiteOperator(self.matrix + other.matrix, self.grading)

    def __mul__(self, scalar) -> "SiteOperator":
        return SiteOperator(scalar * self.matrix, self.grading)

    __rmul__ = __mul__

    def dagger(self) -> "SiteOperator":
        return SiteOperator(self.matrix.conj().T, -self.grading)


@dataclass
class LatticeOperator:
    """Sparse operator on the d^N-dimensional lattice space with a grading."""

    matrix: sparse.csr_matrix
    grading: int

    def __matmul__(self, other):
        if isinstance(other, LatticeOperator):
            return LatticeOperator(self.matrix @ other.matrix,
                                   self.grading + other.grading)
        return self.matrix @ other        # vectors / dense arrays

    def __add__(self, other: "LatticeOperator") -> "LatticeOperator":
        if self.grading != other.grading:
            raise ValueError("cannot add lattice operators of different grading")
        return LatticeOperator(self.matrix + other.matrix, self.grading)

    def __sub__(self, other: "LatticeOperator") -> "LatticeOperator":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "LatticeOperator":
        return LatticeOperator(scalar * self.matrix, self.grading)

    __rmul__ = __mul__

    def dagger(self) -> "LatticeOperator":
        return LatticeOperator(self.matrix.conj().T.tocsr(), -self.grading)

    @property
    def shape(self):
        return self.matrix.shape

    def todense(self) -> np.ndarray:
        return np.asarray(self.matrix.todense())


def build_site_ops(params: ModelParams):
    """The lattice Bose field chi, its adjoint, and the number operator.

    chi lowers one quantum with <m-1|chi|m> = sqrt(m Delta); the number
    operator chi^dag chi is diagonal with eigenvalues m Delta.
    """
    d = params.cutoff
    chi = SiteOperator(
        np.diag(np.sqrt(params.delta * np.arange(1, d)), k=1).astype(complex),
        grading=-1,
    )
    chi_dag = chi.dagger()
    number = chi_dag @ chi
    return chi, chi_dag, number


def build_rho(params: ModelParams) -> SiteOperator:
    """Diagonal square root of 1 + (kappa/4) chi^dag chi.

    rho|m> = sqrt(1 + kappa m Delta / 4)|m>, so rho^2 = 1 + (kappa/4) chi^dag chi
    holds exactly on all truncated levels.  For kappa -> 0 this is the identity.
    """
    d = params.cutoff
    diag = np.sqrt(1.0 + 0.25 * params.kappa * params.delta * np.arange(d))
    return SiteOperator(np.diag(diag).astype(complex), grading=0)


def site_identity(params: ModelParams) -> SiteOperator:
    return SiteOperator(np.eye(params.cutoff, dtype=complex), grading=0)


@dataclass
class SectorBasis:
    """Occupation tuples with a fixed total, in lexicographic order."""

    params: ModelParams
    total: int
    states: list = field(init=False)
    index: dict = field(init=False)
    indices: np.ndarray = field(init=False)

    def __post_init__(self):
        d, N = self.params.cutoff, self.params.sites
        states = [occ for occ in product(range(d), repeat=N) if sum(occ) == self.total]
        self.states = states
        self.index = {occ: i for i, occ in enumerate(states)}
        weights = d ** np.arange(N - 1, -1, -1)
        self.indices = (np.array([np.dot(occ, weights) for occ in states], dtype=int)
                        if states else np.zeros(0, dtype=int))

    @property
    def dim(self) -> int:
        return len(self.states)


def sector_basis(params: ModelParams, total: int) -> SectorBasis:
    if total < 0:
        raise ValueError("sector label must be >= 0")
    return SectorBasis(params, total)


def sector_of_index(params: ModelParams, idx: int) -> int:
    tot, rem = 0, idx
    for _ in range(params.sites):
        tot += rem % params.cutoff
        rem //= params.cutoff
    return tot


def sector_labels(params: ModelParams) -> np.ndarray:
    """Total occupation of every full-space basis vector."""
    labels = np.zeros(params.dim, dtype=int)
    rem = np.arange(params.dim)
    for _ in range(params.sites):
        labels += rem % params.cutoff
        rem //= params.cutoff
    return labels


class FockRegistry:
    """Cache of single-site operators and their lattice embeddings."""

    def __init__(self, params: ModelParams):
        params.check_full_space()
        self.params = params
        chi, chi_dag, number = build_site_ops(params)
        self.chi, self.chi_dag, self.number = chi, chi_dag, number
        self.rho = build_rho(params)
        self._embed_cache = {}

    def embed(self, op: SiteOperator, site: int) -> LatticeOperator:
        return embed(op, site, self.params)


def embed(op: SiteOperator, site: int, params: ModelParams) -> LatticeOperator:
    """Place a site operator at the given (1-based) site, identity elsewhere."""
    params.check_full_space()
    N, d = params.sites, params.cutoff
    if not 1 <= site <= N:
        raise ValueError(f"site {site} out of range 1..{N}")
    left = sparse.identity(d ** (site - 1), format="csr", dtype=complex)
    right = sparse.identity(d ** (N - site), format="csr", dtype=complex)
    mat = sparse.kron(sparse.kron(left, sparse.csr_matrix(op.matrix)), right).tocsr()
    return LatticeOperator(mat, op.grading)


def lattice_identity(params: ModelParams) -> LatticeOperator:
    params.check_full_space()
    return LatticeOperator(sparse.identity(params.dim, format="csr", dtype=complex), 0)


def lattice_zero(params: ModelParams, grading: int = 0) -> LatticeOperator:
    params.check_full_space()
    return LatticeOperator(sparse.csr_matrix((params.dim, params.dim), dtype=complex),
                           grading)


def total_number(params: ModelParams) -> LatticeOperator:
    """Sum of embedded number operators; eigenvalue M*Delta on sector M."""
    _, _, number = build_site_ops(params)
    out = embed(number, 1, params)
    for site in range(2, params.sites + 1):
        out = out + embed(number, site, params)
    return out


def vacuum_state(params: ModelParams) -> np.ndarray:
    params.check_full_space()
    psi = np.zeros(params.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def restrict(op: LatticeOperator, basis_in: SectorBasis,
             basis_out: SectorBasis = None) -> np.ndarray:
    """Dense block of the operator from one sector to another.

    basis_out defaults to the sector the grading maps basis_in into.
    """
    if basis_out is None:
        basis_out = sector_basis(basis_in.params, basis_in.total + op.grading)
    sub = op.matrix.tocsc()[:, basis_in.indices]
    return np.asarray(sub.todense())[basis_out.indices, :]


def sector_columns(op: LatticeOperator, basis_in: SectorBasis) -> np.ndarray:
    """Dense full-height column block of the operator on a sector."""
    return np.asarray(op.matrix.tocsc()[:, basis_in.indices].todense())


def grading_violation(op: LatticeOperator, params: ModelParams) -> float:
    """Largest matrix element connecting sectors inconsistent with the grading."""
    labels = sector_labels(params)
    coo = op.matrix.tocoo()
    bad = labels[coo.row] != labels[coo.col] + op.grading
    return float(np.abs(coo.data[bad]).max()) if bad.any() else 0.0
