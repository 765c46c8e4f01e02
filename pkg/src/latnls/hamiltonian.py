"""Log-derivative machinery at the projector point and the spectral Hamiltonian.

At nu = -2i/Delta the one-site Lax matrix degenerates to rank one, which
makes logarithmic derivatives of the transfer matrix local: third-order
cumulants of ln tau vanish on any site pattern with a gap, so

    (d/dlam)^n ln tau(lam)|_nu = sum_k D^n ln F_k |_(all at nu),
    F_k(lam_k .. lam_{k+n-1}) =
        tr L_{k+n}(nu) L_{k+n-1}(lam_{k+n-1}) ... L_k(lam_k) L_{k-1}(nu),

with window stencils D^n.  Two stencil forms are provided:

  * make_stencil(n) -- the historical printed coefficients.  For n = 3 they
    read 6 dkk1k2 + 6 d(k1)(k2^2) + 6 d(k1^2)(k2) - 6 d(k)(k2^2)
    - 6 d(k^2)(k2) + d(k^3).
  * cumulant_stencil(n) -- the coefficients that actually close the sum
    rule, derived from the gap-cumulant argument:
        D^1 = d_k,   D^2 = 2 d_{k+1} d_k + d_k^2      (same as printed),
        D^3 = 6 d_{k+2} d_{k+1} d_k + 3 d_k^2 d_{k+1} + 3 d_k d_{k+1}^2 + d_k^3.
    The printed and cumulant forms agree for n = 1, 2; for n = 3 the printed
    form double-counts the adjacent-pair terms and adds gapped terms (which
    have vanishing cumulants), leaving an O(1e-2) defect in the sum rule.
    Both numbers are recorded by the verification suite.

The Hamiltonian itself is built spectrally: on a sector, the commuting
transfer family is diagonalized in a common orthonormal basis (tau at real
spectral parameter is exactly Hermitian), each eigenvalue is an exact
polynomial Lambda_j(lam), and the per-state energy is

    e_j = 2 Re[ (i/12 kappa) g_j'''(z0) + (i kappa/6) g_j'(z0) ],
    g_j(z) = ln[(1 + 1/(nu z))^(-N) Lambda_j(1/z)],   z0 = 1/nu,

with all derivatives from exact rational calculus on the polynomial
coefficients.  Operator logarithms never appear; the operator-log local
densities are kept as a diagnostic only, with the left-inverse ordering
convention d(ln F) := F^{-1} dF.
"""

import math
from dataclasses import dataclass, field
from itertools import product as iter_product

import numpy as np

from .fockspace import (build_site_ops, embed, restrict, sector_basis)
from .laxops import AuxMatrix2, build_L, monodromy, transfer_poly
from .params import ModelParams
from .report import ResidualReport
from .seriescalc import jet_log_derivatives, poly_jet
from .bethe import build_state, dispersion, eigenvalue

TOL_HERMITICITY = 1e-10
TOL_TAU_COMMUTE = 1e-9
TOL_ENERGY_SUM = 1e-7


# ---------------------------------------------------------------------------
# window stencils
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffStencil:
    """Differential operator sum_alpha c_alpha prod_j d_{k+j}^{alpha_j}.

    terms maps per-offset derivative orders (alpha_0, .., alpha_{n-1}) to the
    coefficient c_alpha; offset 0 is the leftmost window variable lam_k.
    """

    order: int
    terms: tuple       # tuple of (orders tuple, coefficient)

    def coefficient(self, orders) -> float:
        for o, c in self.terms:
            if o == tuple(orders):
                return c
        return 0.0


_PRINTED = {
    1: (((1,), 1.0),),
    2: (((1, 1), 2.0), ((2, 0), 1.0)),
    3: (((1, 1, 1), 6.0), ((0, 1, 2), 6.0), ((0, 2, 1), 6.0),
        ((1, 0, 2), -6.0), ((2, 0, 1), -6.0), ((3, 0, 0), 1.0)),
}

_CUMULANT = {
    1: (((1,), 1.0),),
    2: (((1, 1), 2.0), ((2, 0), 1.0)),
    3: (((1, 1, 1), 6.0), ((2, 1, 0), 3.0), ((1, 2, 0), 3.0), ((3, 0, 0), 1.0)),
}


def make_stencil(n: int) -> DiffStencil:
    """Stencil with the historical printed coefficients (n = 1, 2, 3)."""
    if n not in _PRINTED:
        raise ValueError(f"stencil order must be 1, 2 or 3, got {n}")
    return DiffStencil(order=n, terms=_PRINTED[n])


def cumulant_stencil(n: int) -> DiffStencil:
    """Stencil derived from the gap-cumulant argument; closes the sum rule."""
    if n not in _CUMULANT:
        raise ValueError(f"stencil order must be 1, 2 or 3, got {n}")
    return DiffStencil(order=n, terms=_CUMULANT[n])


def apply_stencil(stencil: DiffStencil, fun, base, scale: float = None):
    """Apply a window stencil to a scalar callable by tensor-grid polynomial fit.

    fun takes a length-n complex vector; the fit uses 4 symmetric nodes per
    variable with spacing h = 1e-2 * scale, degree-3 per-variable
    interpolation (exact through cubics), and a half-step Richardson
    refinement whose gap doubles as the error estimate.

    Returns (value, error_estimate).
    """
    n = stencil.order
    base = np.asarray(base, dtype=complex)
    if scale is None:
        scale = max(1.0, float(np.abs(base).max()))
    h = 1e-2 * scale

    def tensor_fit(step):
        nodes = step * np.array([-1.5, -0.5, 0.5, 1.5])
        V = np.vander(nodes / step, 4, increasing=True)
        Vinv = np.linalg.inv(V)
        # weight vector for k-th derivative at 0: k! * row k of V^{-1}, scaled
        W = {k: math.factorial(k) * Vinv[k] / step ** k for k in range(4)}
        grid = np.empty((4,) * n, dtype=complex)
        for idx in iter_product(range(4), repeat=n):
            pt = base + np.array([nodes[i] for i in idx])
            grid[idx] = fun(pt)
        total = 0.0 + 0j
        for orders, coeff in stencil.terms:
            val = grid
            for axis, k in enumerate(orders):
                val = np.tensordot(W[k], val, axes=(0, 0))
            # tensordot consumes leading axes in order, result is scalar
            total += coeff * complex(val)
        return total

    v_h = tensor_fit(h)
    v_h2 = tensor_fit(h / 2)
    err = abs(v_h - v_h2)
    value = (4 * v_h2 - v_h) / 3
    if not np.isfinite(value):
        raise ArithmeticError("stencil fit failed (non-finite value)")
    return value, err


# ---------------------------------------------------------------------------
# spectral decomposition of the transfer family on a sector
# ---------------------------------------------------------------------------

def _resolve_degeneracies(w, V, second_block, rtol=1e-8):
    """Rotate numerically degenerate eigh clusters with a second commuting matrix."""
    scale = max(1.0, np.abs(w).max())
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) < rtol * scale:
            j += 1
        if j - i > 1:
            sub = V[:, i:j]
            proj = sub.conj().T @ second_block @ sub
            _, U = np.linalg.eigh((proj + proj.conj().T) / 2)
            V[:, i:j] = sub @ U
        i = j
    return w, V


@dataclass
class SpectralDecomposition:
    """Common orthonormal eigenbasis of the transfer family on one sector."""

    params: ModelParams
    sector: int
    basis_matrix: np.ndarray          # columns = eigenvectors (unitary)
    eigen_coeffs: np.ndarray          # (dim, N+1) polynomial coefficients per state
    probe_points: tuple
    diag_residual: float = field(default=0.0)

    @property
    def dim(self) -> int:
        return self.basis_matrix.shape[1]

    def eigenvalue_at(self, lam: complex) -> np.ndarray:
        powers = np.array([lam ** p for p in range(self.eigen_coeffs.shape[1])])
        return self.eigen_coeffs @ powers

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.basis_matrix))


def spectral_decomposition(params: ModelParams, sector: int,
                           probe_points=(0.9137, -0.4231),
                           rng: np.random.Generator = None) -> SpectralDecomposition:
    """Diagonalize the commuting transfer family on a sector.

    tau(lam) at real lam is Hermitian, so eigh provides an orthonormal basis;
    degenerate clusters are resolved against tau at the second real probe
    point.  Eigenvalue polynomials come from sandwiching the exact operator
    coefficients of tau(lam).
    """
    if params.cutoff < sector + 2:
        raise ValueError("cutoff margin: need cutoff >= sector + 2")
    basis = sector_basis(params, sector)
    coeff_blocks = [restrict(C, basis) for C in transfer_poly(params)]

    def tau_block(lam):
        return sum(lam ** p * C for p, C in enumerate(coeff_blocks))

    b1 = tau_block(float(probe_points[0]))
    w, V = np.linalg.eigh((b1 + b1.conj().T) / 2)
    b2 = tau_block(float(probe_points[1]))
    w, V = _resolve_degeneracies(w, V, (b2 + b2.conj().T) / 2)
    eigen_coeffs = np.stack([
        np.array([np.vdot(V[:, j], C @ V[:, j]) for C in coeff_blocks])
        for j in range(V.shape[1])])
    # certification at a few spectral points
    check_points = (rng.uniform(-2, 2, 5) + 1j * rng.uniform(-2, 2, 5)) \
        if rng is not None else np.array([0.3 + 0.7j, -1.2 + 0.1j, 0.8 - 0.9j,
                                          1.7 + 1.1j, -0.6 - 1.4j])
    resid = 0.0
    for lam in check_points:
        tb = tau_block(complex(lam))
        lam_vals = np.array([npval(eigen_coeffs[j], complex(lam))
                             for j in range(V.shape[1])])
        resid = max(resid, np.abs(tb @ V - V * lam_vals[None, :]).max())
    return SpectralDecomposition(params=params, sector=sector, basis_matrix=V,
                                 eigen_coeffs=eigen_coeffs,
                                 probe_points=tuple(probe_points),
                                 diag_residual=float(resid))


def npval(coeffs, lam):
    out = 0.0 + 0j
    for c in reversed(coeffs):
        out = out * lam + c
    return out


# ---------------------------------------------------------------------------
# the quantum Hamiltonian
# ---------------------------------------------------------------------------

@dataclass
class HamiltonianMatrix:
    matrix: np.ndarray
    sector: int
    eigenvalues: np.ndarray
    decomposition: SpectralDecomposition
    hermiticity: float

    def commutator_residual(self, lam: complex) -> float:
        basis = sector_basis(self.decomposition.params, self.sector)
        blocks = [restrict(C, basis) for C in transfer_poly(self.decomposition.params)]
        tb = sum(lam ** p * C for p, C in enumerate(blocks))
        comm = self.matrix @ tb - tb @ self.matrix
        return float(np.linalg.norm(comm, 2) / max(1.0, np.linalg.norm(tb, 2)))


def state_energy_from_coeffs(coeffs, params: ModelParams) -> float:
    """Spectral energy of one eigenvalue polynomial.

    Uses Q(z) = z^N Lambda(1/z) so that g(z) = ln Q(z) - N ln(nu z + 1) + const;
    then e = 2 Re[(i/12 kappa) g'''(z0) + (i kappa/6) g'(z0)] at z0 = 1/nu.
    """
    N = params.sites
    nu = params.nu
    z0 = 1.0 / nu
    Q = np.zeros(N + 1, dtype=complex)
    for p in range(min(len(coeffs), N + 1)):
        Q[N - p] = coeffs[p]
    jet = poly_jet(Q, z0)
    if abs(jet[0]) < 1e-13 * max(1.0, np.abs(Q).max()):
        raise ArithmeticError(
            "transfer eigenvalue vanishes at the projector point; "
            "spectral energy undefined for this state")
    g1, _, g3 = jet_log_derivatives(jet)
    g1 = g1 - N * nu / (nu * z0 + 1.0)
    g3 = g3 - N * 2.0 * nu ** 3 / (nu * z0 + 1.0) ** 3
    a = (1j / (12 * params.kappa)) * g3 + (1j * params.kappa / 6) * g1
    return 2.0 * float(np.real(a))


def build_Hq(params: ModelParams, sector: int,
             decomposition: SpectralDecomposition = None) -> HamiltonianMatrix:
    """Assemble the sector Hamiltonian from per-state spectral energies."""
    if params.kappa <= 0:
        raise ValueError("spectral Hamiltonian requires kappa > 0")
    dec = decomposition or spectral_decomposition(params, sector)
    energies = np.array([state_energy_from_coeffs(dec.eigen_coeffs[j], params)
                         for j in range(dec.dim)])
    V = dec.basis_matrix
    H = (V * energies[None, :]) @ V.conj().T
    herm = float(np.abs(H - H.conj().T).max())
    H = (H + H.conj().T) / 2
    return HamiltonianMatrix(matrix=H, sector=sector, eigenvalues=energies,
                             decomposition=dec, hermiticity=herm)


def check_energy_sum(params: ModelParams, roots,
                     tol: float = TOL_ENERGY_SUM) -> ResidualReport:
    """H_q expectation and vector residual against sum_k E(lam_k) on a Bethe state."""
    record = {"roots": [complex(r) for r in roots.roots],
              "quantum_numbers": list(roots.quantum_numbers),
              "sites": params.sites, "cutoff": params.cutoff,
              "kappa": params.kappa, "delta": params.delta}
    state = build_state(roots, params)
    basis = sector_basis(params, roots.n)
    psi = state.vector[basis.indices]
    psi = psi / np.linalg.norm(psi)
    ham = build_Hq(params, roots.n)
    target = sum(dispersion(params, float(np.real(lk))) for lk in roots.roots)
    expect = float(np.real(np.vdot(psi, ham.matrix @ psi)))
    vec_res = float(np.linalg.norm(ham.matrix @ psi - target * psi))
    record["expectation_gap"] = abs(expect - target)
    res = max(abs(expect - target), vec_res) / max(1.0, abs(target))
    return ResidualReport("energy_sum", record, res, tol)


# ---------------------------------------------------------------------------
# operator-log local densities (diagnostic)
# ---------------------------------------------------------------------------

def _window_affine_ops(params: ModelParams, k: int, n: int, sector: int):
    """Multi-affine coefficients of the window trace, restricted to a sector.

    F(lam_0 .. lam_{n-1}) = tr_aux L_{k+n}(nu) L_{k+n-1}(lam_{n-1}) ...
    L_k(lam_0) L_{k-1}(nu) is affine in each variable; coefficients are
    extracted exactly by evaluation at 2^n points (all grading 0).
    """
    N = params.sites
    if N < n + 2:
        raise ValueError(f"window of order {n} needs at least {n + 2} sites")
    nu = params.nu
    basis = sector_basis(params, sector)

    def site(idx):
        return (idx - 1) % N + 1

    values = {}
    for pattern in iter_product((0, 1), repeat=n):
        lams = [nu + p for p in pattern]
        T = build_L(params, nu, site(k + n))
        for j in range(n - 1, -1, -1):
            T = T @ build_L(params, lams[j], site(k + j))
        T = T @ build_L(params, nu, site(k - 1))
        values[pattern] = restrict(T.trace(), basis, basis)
    coeffs = {}
    for subset in iter_product((0, 1), repeat=n):
        idx = [j for j in range(n) if subset[j]]
        acc = np.zeros_like(values[(0,) * n])
        for bits in iter_product((0, 1), repeat=len(idx)):
            pattern = [0] * n
            for b, j in zip(bits, idx):
                pattern[j] = b
            acc = acc + (-1.0) ** (len(idx) - sum(bits)) * values[tuple(pattern)]
        coeffs[subset] = acc
    return coeffs


def _noncommutative_log_derivative(coeffs: dict, orders) -> np.ndarray:
    """Mixed partial of ln F with the left-inverse convention d(ln F) = F^{-1} dF.

    Terms are expanded symbolically (items are F^{-1} or a specific partial
    of F) and evaluated on the matrix blocks; partials with a repeated
    variable vanish since F is multi-affine.
    """
    variables = []
    for v, o in enumerate(orders):
        variables.extend([v] * o)
    if not variables:
        raise ValueError("empty derivative")
    INV = "inv"
    first = variables[0]
    terms = [(1.0, (INV, ("d", (first,))))]
    for var in variables[1:]:
        new_terms = []
        for coeff, items in terms:
            for pos, item in enumerate(items):
                if item == INV:
                    repl = (INV, ("d", (var,)), INV)
                    new_terms.append((-coeff, items[:pos] + repl + items[pos + 1:]))
                else:
                    beta = tuple(sorted(item[1] + (var,)))
                    if len(set(beta)) != len(beta):
                        continue          # repeated variable: partial vanishes
                    new_terms.append((coeff, items[:pos] + (("d", beta),) + items[pos + 1:]))
        terms = new_terms
    F0 = coeffs[tuple(0 for _ in orders)]
    F0_inv = np.linalg.inv(F0)

    def partial(beta):
        subset = tuple(1 if v in beta else 0 for v in range(len(orders)))
        return coeffs[subset]

    dim = F0.shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, items in terms:
        acc = np.eye(dim, dtype=complex)
        for item in items:
            acc = acc @ (F0_inv if item == INV else partial(item[1]))
        out += coeff * acc
    return out


def quantum_local_density(params: ModelParams, k: int, n: int, sector: int,
                          stencil: DiffStencil = None) -> np.ndarray:
    """Operator-log local density h_{k,n} as a sector block (diagnostic).

    Supported on sites k-1 .. k+n.  The ordering of the operator logarithm is
    not canonical; this uses the left-inverse convention throughout.
    """
    if stencil is None:
        stencil = cumulant_stencil(n)
    coeffs = _window_affine_ops(params, k, n, sector)
    out = None
    for orders, c in stencil.terms:
        val = c * _noncommutative_log_derivative(coeffs, orders)
        out = val if out is None else out + val
    return out


def density_sum_diagnostic(params: ModelParams, n: int, sector: int,
                           stencil: DiffStencil = None) -> ResidualReport:
    """Compare sum_k h_{k,n} against the spectrally computed derivative.

    The spectral side is exact: (d/dlam)^n ln tau|_nu evaluated per eigenstate
    from the exact eigenvalue polynomials.  The operator-log side inherits
    the ordering ambiguity, so the residual is reported, never asserted.
    """
    record = {"n": n, "sector": sector, "sites": params.sites,
              "cutoff": params.cutoff, "kappa": params.kappa,
              "delta": params.delta}
    dec = spectral_decomposition(params, sector)
    derivs = []
    for j in range(dec.dim):
        jet = poly_jet(dec.eigen_coeffs[j], params.nu)
        derivs.append(jet_log_derivatives(jet)[n - 1])
    V = dec.basis_matrix
    spectral = (V * np.array(derivs)[None, :]) @ V.conj().T
    total = None
    for k in range(1, params.sites + 1):
        h = quantum_local_density(params, k, n, sector, stencil)
        total = h if total is None else total + h
    res = float(np.linalg.norm(total - spectral, 2)
                / max(1.0, np.linalg.norm(spectral, 2)))
    return ResidualReport("quantum_density_sum", record, res,
                          tolerance=float("inf"), diagnostic=True)


def support_leakage(params: ModelParams, op_block: np.ndarray, sector: int,
                    window_sites) -> float:
    """Largest matrix element that changes an occupation outside the window.

    An operator supported on the window acts as the identity elsewhere, so
    its sector block must vanish between states whose occupations differ at
    any outside site.
    """
    N = params.sites
    window = {(s - 1) % N + 1 for s in window_sites}
    outside = [s - 1 for s in range(1, N + 1) if s not in window]
    if not outside:
        return 0.0
    states = sector_basis(params, sector).states
    worst = 0.0
    for a, occ_a in enumerate(states):
        for b, occ_b in enumerate(states):
            if any(occ_a[c] != occ_b[c] for c in outside):
                worst = max(worst, abs(op_block[a, b]))
    return float(worst)
