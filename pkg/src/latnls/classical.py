"""Classical lattice model: fields, Lax/transfer matrices, Hamiltonian, dynamics.

The classical field chi_n is one complex number per site with canonical
bracket {chi_m, conj(chi_n)} = i Delta delta_{mn}; for real-analytic
observables this reads

    {F, G} = i Delta sum_n (dF/dchi_n dG/dchib_n - dF/dchib_n dG/dchi_n)

in Wirtinger derivatives.  The one-site Lax matrix has c-number entries
S3 = 1 + kappa |chi|^2/2, S+ = -i sqrt(kappa) conj(chi) rho, S- =
i sqrt(kappa) rho chi with rho = sqrt(1 + kappa |chi|^2/4); its determinant
is 1 + lam^2 Delta^2/4 independent of the field, degenerating to rank one at
lam = nu.

The lattice Hamiltonian is extracted from the transfer matrix at the
projector point,

    H_c = (i/12 kappa) g'''(z0) + c.c.,
    g(z) = ln[(1 + 1/(nu z))^(-N) tau(1/z)],    z0 = 1/nu,

computed through jet arithmetic: tau(1/z) is evaluated as a product of 2x2
matrices of order-3 jets, so the third derivative is exact, branch-free, and
stable for hundreds of sites (no polynomial coefficients, no grids).  The
same machinery yields the per-site decomposition H_c = sum_k hc_k with each
hc_k supported on five consecutive sites, and the local-density sum rule

    (d/dlam)^n ln tau|_nu = sum_k D^n ln F_k,     n = 1, 2, 3,

with the window functions F_k multi-affine in their spectral variables
(coefficients extracted exactly, logarithm as a truncated series).

Equations of motion use dchi_n/dt = -i Delta dH_c/dchib_n; the sign is the
one under which a plane wave rotates like the continuum defocusing equation
(both signs conserve every tau(lam), so conservation tests cannot fix it).
The gradient is assembled analytically from prefix/suffix jet products; a
finite-difference Richardson gradient is kept as the shared implementation
for Poisson brackets and as a cross-check.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import DiffStencil, cumulant_stencil
from .params import ModelParams
from .report import ResidualReport
from .seriescalc import (JET_ORDER, jet_inv, jet_log_derivatives, jet_mul,
                         jet_reciprocal_var, jet_var, matjet_mul,
                         multi_derivative, multi_from_affine, multi_log)

TOL_CL_DET = 1e-12
TOL_R_POISSON = 1e-6
TOL_DENSITY_SUM = 1e-6

SIGMA2 = np.array([[0.0, -1j], [1j, 0.0]])
PERMUTATION4 = np.array([[1, 0, 0, 0],
                         [0, 0, 1, 0],
                         [0, 1, 0, 0],
                         [0, 0, 0, 1]], dtype=complex)


@dataclass
class ClassicalField:
    values: np.ndarray
    params: ModelParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if len(self.values) != self.params.sites:
            raise ValueError("field length must equal the number of sites")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field entries must be finite")

    def copy(self) -> "ClassicalField":
        return ClassicalField(self.values.copy(), self.params)


def random_field(params: ModelParams, rng: np.random.Generator,
                 amplitude: float = 0.5) -> ClassicalField:
    vals = amplitude * (rng.normal(size=params.sites)
                        + 1j * rng.normal(size=params.sites))
    return ClassicalField(vals, params)


def site_matrix(chi: complex, lam, params: ModelParams):
    """One-site classical Lax matrix; lam may be a scalar or a jet.

    Scalar lam gives a (2,2) array; a jet gives (order+1, 2, 2) coefficients.
    """
    kappa, delta = params.kappa, params.delta
    rho = np.sqrt(1.0 + kappa * abs(chi) ** 2 / 4.0)
    S3 = 1.0 + kappa * abs(chi) ** 2 / 2.0
    Sp = -1j * np.sqrt(kappa) * np.conj(chi) * rho
    Sm = 1j * np.sqrt(kappa) * rho * chi
    base = np.array([[S3, Sp], [Sm, S3]], dtype=complex)
    slope = np.array([[-0.5j * delta, 0.0], [0.0, 0.5j * delta]], dtype=complex)
    lam = np.asarray(lam)
    if lam.ndim == 0:
        return base + complex(lam) * slope
    out = np.zeros((len(lam), 2, 2), dtype=complex)
    out[0] = base
    out += lam[:, None, None] * slope[None, :, :]
    return out


def cl_monodromy(field: ClassicalField, lam) -> np.ndarray:
    """Ordered product L_N(lam) ... L_1(lam) (scalar lam or jet)."""
    lam = np.asarray(lam)
    if lam.ndim == 0:
        T = np.eye(2, dtype=complex)
        for chi in reversed(field.values):
            T = T @ site_matrix(chi, lam, field.params)
        return T
    T = np.zeros((len(lam), 2, 2), dtype=complex)
    T[0] = np.eye(2)
    for chi in reversed(field.values):
        T = matjet_mul(T, site_matrix(chi, lam, field.params), len(lam) - 1)
    return T


def cl_transfer(field: ClassicalField, lam) -> complex:
    T = cl_monodromy(field, lam)
    if T.ndim == 2:
        return complex(np.trace(T))
    return np.einsum("kii->k", T)


def check_cl_det(field: ClassicalField, lam: complex,
                 tol: float = TOL_CL_DET) -> ResidualReport:
    """Field-independence of det L and the adjugate identity of the monodromy.

    det L = 1 + lam^2 Delta^2/4 per site, and T sigma2 T^t sigma2 =
    (det L)^N I for the full chain.
    """
    params = field.params
    record = {"lam": lam, "sites": params.sites,
              "kappa": params.kappa, "delta": params.delta}
    det_val = 1.0 + lam ** 2 * params.delta ** 2 / 4.0
    worst = 0.0
    for chi in field.values:
        L = site_matrix(chi, lam, params)
        worst = max(worst, abs(np.linalg.det(L) - det_val))
    T = cl_monodromy(field, lam)
    lhs = T @ SIGMA2 @ T.T @ SIGMA2
    worst = max(worst, np.abs(lhs - det_val ** params.sites * np.eye(2)).max()
                / max(1.0, abs(det_val) ** params.sites))
    return ResidualReport("classical_det", record, worst, tol)


def projector_defect(field: ClassicalField) -> float:
    """Second singular value of L(nu), worst site (rank-one degeneration)."""
    params = field.params
    worst = 0.0
    for chi in field.values:
        s = np.linalg.svd(site_matrix(chi, params.nu, params), compute_uv=False)
        worst = max(worst, s[1])
    return float(worst)


# ---------------------------------------------------------------------------
# Poisson brackets (finite differences, shared with the gradient fallback)
# ---------------------------------------------------------------------------

def wirtinger_gradient(fun, field: ClassicalField, step: float = 1e-4,
                       richardson: bool = True):
    """(dF/dchi_n, dF/dchib_n) by central differences in Re/Im parts."""
    vals = field.values
    n = len(vals)
    gx = np.zeros(n, dtype=complex)
    gy = np.zeros(n, dtype=complex)

    def probe(site, direction, s):
        pert = vals.copy()
        pert[site] += s * direction
        return fun(ClassicalField(pert, field.params))

    for site in range(n):
        for direction, arr in ((1.0, gx), (1j, gy)):
            d1 = (probe(site, direction, step) - probe(site, direction, -step)) / (2 * step)
            if richardson:
                d2 = (probe(site, direction, step / 2)
                      - probe(site, direction, -step / 2)) / step
                arr[site] = (4 * d2 - d1) / 3
            else:
                arr[site] = d1
    return (gx - 1j * gy) / 2, (gx + 1j * gy) / 2


def poisson_bracket(fun1, fun2, field: ClassicalField, step: float = 1e-4,
                    richardson: bool = True) -> complex:
    """{F, G} = i Delta sum_n (dF/dchi dG/dchib - dF/dchib dG/dchi)."""
    f1, f1b = wirtinger_gradient(fun1, field, step, richardson)
    f2, f2b = wirtinger_gradient(fun2, field, step, richardson)
    return 1j * field.params.delta * complex(np.sum(f1 * f2b - f1b * f2))


def check_r_poisson(field: ClassicalField, lam: complex, mu: complex,
                    step: float = 1e-4, richardson: bool = True,
                    tol: float = TOL_R_POISSON) -> ResidualReport:
    """Bracket matrix {T(lam) (x), T(mu)} against [T(lam) (x) T(mu), R_c].

    R_c = kappa P/(lam - mu); all 16 entry brackets are assembled by finite
    differences (Richardson by default; plain central differences expose the
    O(step^2) convergence order).
    """
    params = field.params
    if lam == mu:
        raise ZeroDivisionError("classical r-matrix pole at lam == mu")
    record = {"lam": lam, "mu": mu, "sites": params.sites, "step": step,
              "kappa": params.kappa, "delta": params.delta}
    bracket = np.zeros((4, 4), dtype=complex)
    for a1 in range(2):
        for b1 in range(2):
            for a2 in range(2):
                for b2 in range(2):
                    f = lambda x, i=a1, j=b1: cl_monodromy(x, lam)[i, j]
                    g = lambda x, i=a2, j=b2: cl_monodromy(x, mu)[i, j]
                    bracket[2 * a1 + a2, 2 * b1 + b2] = poisson_bracket(
                        f, g, field, step, richardson)
    TT = np.kron(cl_monodromy(field, lam), cl_monodromy(field, mu))
    Rc = params.kappa * PERMUTATION4 / (lam - mu)
    rhs = TT @ Rc - Rc @ TT
    res = np.abs(bracket - rhs).max() / max(1.0, np.abs(rhs).max())
    return ResidualReport("r_poisson", record, res, tol)


# ---------------------------------------------------------------------------
# lattice Hamiltonian and its local structure
# ---------------------------------------------------------------------------

def _regulator_z_derivs(params: ModelParams):
    """(d/dz)^n of N ln(1 + 1/(nu z)) at z0 = 1/nu, n = 1, 2, 3."""
    nu = params.nu
    z0 = 1.0 / nu
    N = params.sites
    # ln(1 + 1/(nu z)) = ln(nu z + 1) - ln(nu z)
    d1 = nu / (nu * z0 + 1.0) - 1.0 / z0
    d2 = -nu ** 2 / (nu * z0 + 1.0) ** 2 + 1.0 / z0 ** 2
    d3 = 2 * nu ** 3 / (nu * z0 + 1.0) ** 3 - 2.0 / z0 ** 3
    return N * d1, N * d2, N * d3


def transfer_log_derivs_z(field: ClassicalField):
    """[g', g'', g'''] of g(z) = ln[(1+1/(nu z))^(-N) tau(1/z)] at z0 = 1/nu."""
    params = field.params
    z0 = 1.0 / params.nu
    lam_jet = jet_reciprocal_var(z0)
    tau_jet = cl_transfer(field, lam_jet)
    g = jet_log_derivatives(tau_jet)
    r1, r2, r3 = _regulator_z_derivs(params)
    return np.array([g[0] - r1, g[1] - r2, g[2] - r3])


def build_Hc(field: ClassicalField) -> float:
    """Lattice Hamiltonian H_c = (i/12 kappa) g'''(z0) + c.c. (real by construction)."""
    params = field.params
    if params.kappa <= 0:
        raise ValueError("classical Hamiltonian requires kappa > 0")
    g3 = transfer_log_derivs_z(field)[2]
    return 2.0 * float(np.real(1j / (12.0 * params.kappa) * g3))


def transfer_log_derivs_lambda(field: ClassicalField):
    """[d ln tau, d^2 ln tau, d^3 ln tau] in lam at the projector point."""
    jet = cl_transfer(field, jet_var(field.params.nu))
    return jet_log_derivatives(jet)


# window functions and local densities ---------------------------------------

def window_affine_coeffs(field: ClassicalField, k: int, n: int) -> dict:
    """Multi-affine coefficients of the window trace around the all-nu point.

    F(lam_0..lam_{n-1}) = tr L_{k+n}(nu) L_{k+n-1}(lam_{n-1}) .. L_k(lam_0)
    L_{k-1}(nu), site indices periodic; exact multilinear interpolation from
    2^n evaluations.
    """
    from itertools import product as iter_product
    params = field.params
    N = params.sites
    if N < n + 2:
        raise ValueError(f"window of order {n} needs at least {n + 2} sites")
    nu = params.nu

    def chi_at(idx):
        return field.values[(idx - 1) % N]

    values = {}
    for pattern in iter_product((0, 1), repeat=n):
        lams = [nu + p for p in pattern]
        T = site_matrix(chi_at(k + n), nu, params)
        for j in range(n - 1, -1, -1):
            T = T @ site_matrix(chi_at(k + j), lams[j], params)
        T = T @ site_matrix(chi_at(k - 1), nu, params)
        values[pattern] = np.trace(T)
    coeffs = {}
    for subset in iter_product((0, 1), repeat=n):
        idx = [j for j in range(n) if subset[j]]
        acc = 0.0 + 0j
        for bits in iter_product((0, 1), repeat=len(idx)):
            pattern = [0] * n
            for b, j in zip(bits, idx):
                pattern[j] = b
            acc += (-1.0) ** (len(idx) - sum(bits)) * values[tuple(pattern)]
        coeffs[subset] = acc
    return coeffs


def local_density(field: ClassicalField, k: int, n: int,
                  stencil: DiffStencil = None) -> complex:
    """Window density h_{k,n} = D^n ln F_k at the all-nu point (exact)."""
    if stencil is None:
        stencil = cumulant_stencil(n)
    coeffs = window_affine_coeffs(field, k, n)
    G = multi_log(multi_from_affine(coeffs, n))
    out = 0.0 + 0j
    for orders, c in stencil.terms:
        out += c * multi_derivative(G, orders)
    return out


def density_sum_residual(field: ClassicalField, n: int,
                         stencil: DiffStencil = None,
                         tol: float = TOL_DENSITY_SUM) -> ResidualReport:
    """|sum_k h_{k,n} - (d/dlam)^n ln tau|_nu|, the hard classical sum rule."""
    params = field.params
    record = {"n": n, "sites": params.sites, "kappa": params.kappa,
              "delta": params.delta,
              "stencil": "cumulant" if stencil is None else "custom"}
    target = transfer_log_derivs_lambda(field)[n - 1]
    total = sum(local_density(field, k, n, stencil)
                for k in range(1, params.sites + 1))
    res = abs(total - target) / max(1.0, abs(target))
    return ResidualReport("classical_density_sum", record, res, tol)


def hc_site_densities(field: ClassicalField) -> np.ndarray:
    """Per-site decomposition H_c = sum_k hc_k, each hc_k five-site supported.

    Chain rule from lam to z = 1/lam at the projector point turns the third
    z-derivative into a combination of the first three lam-derivatives, each
    of which is a sum of window densities; the field-independent regulator is
    spread evenly over the sites.
    """
    params = field.params
    N = params.sites
    nu = params.nu
    kappa = params.kappa
    reg3_per_site = _regulator_z_derivs(params)[2] / N
    out = np.zeros(N)
    for k in range(1, N + 1):
        h1 = local_density(field, k, 1)
        h2 = local_density(field, k, 2)
        h3 = local_density(field, k, 3)
        # (d/dz)^3 = -6 lam^4 d - 6 lam^5 d^2 - lam^6 d^3 at lam = nu = 1/z0
        g3_k = -6 * nu ** 4 * h1 - 6 * nu ** 5 * h2 - nu ** 6 * h3 - reg3_per_site
        out[k - 1] = 2.0 * np.real(1j / (12.0 * kappa) * g3_k)
    return out


# ---------------------------------------------------------------------------
# equations of motion and time evolution
# ---------------------------------------------------------------------------

def _site_matrix_partials(chi: complex, params: ModelParams):
    """dL/d(Re chi) and dL/d(Im chi) (lambda-independent 2x2 constants)."""
    kappa = params.kappa
    rho = np.sqrt(1.0 + kappa * abs(chi) ** 2 / 4.0)
    x, y = chi.real, chi.imag
    sk = np.sqrt(kappa)
    out = []
    for dchi, dchib, drho in ((1.0, 1.0, kappa * x / (4 * rho)),
                              (1j, -1j, kappa * y / (4 * rho))):
        dS3 = 0.5 * kappa * (dchib * chi + np.conj(chi) * dchi)
        dSp = -1j * sk * (dchib * rho + np.conj(chi) * drho)
        dSm = 1j * sk * (drho * chi + rho * dchi)
        out.append(np.array([[dS3, dSp], [dSm, dS3]], dtype=complex))
    return out


def grad_Hc(field: ClassicalField) -> np.ndarray:
    """Exact gradient dH_c/dchib_n via prefix/suffix jet products."""
    params = field.params
    N = params.sites
    kappa = params.kappa
    z0 = 1.0 / params.nu
    lam_jet = jet_reciprocal_var(z0)
    order = JET_ORDER
    Ls = [site_matrix(chi, lam_jet, params) for chi in field.values]
    eye_jet = np.zeros((order + 1, 2, 2), dtype=complex)
    eye_jet[0] = np.eye(2)
    pre = [eye_jet]                        # pre[i] = L_i ... L_1
    for i in range(N):
        pre.append(matjet_mul(Ls[i], pre[i], order))
    suf = [None] * (N + 2)                 # suf[i] = L_N ... L_i
    suf[N + 1] = eye_jet
    for i in range(N, 0, -1):
        suf[i] = matjet_mul(suf[i + 1], Ls[i - 1], order)
    tau_inv = jet_inv(np.einsum("kii->k", pre[N]))
    grads = np.zeros(N, dtype=complex)
    for site in range(1, N + 1):
        dx, dy = _site_matrix_partials(field.values[site - 1], params)
        parts = []
        for dmat in (dx, dy):
            djet = np.zeros((order + 1, 2, 2), dtype=complex)
            djet[0] = dmat
            M = matjet_mul(matjet_mul(suf[site + 1], djet, order), pre[site - 1], order)
            dtau = np.einsum("kii->k", M)
            dlog = jet_mul(dtau, tau_inv)          # jet of the parameter-derivative of ln tau
            parts.append(2.0 * np.real(1j / (12.0 * kappa) * 6.0 * dlog[3]))
        gx, gy = parts
        grads[site - 1] = (gx + 1j * gy) / 2
    return grads


def fd_grad_Hc(field: ClassicalField, step: float = 1e-3) -> np.ndarray:
    """Finite-difference gradient dH_c/dchib_n (shared FD implementation)."""
    _, gb = wirtinger_gradient(lambda f: build_Hc(f), field, step)
    return gb


def eom(field: ClassicalField, gradient=grad_Hc) -> np.ndarray:
    """dchi_n/dt = {H_c, chi_n} = -i Delta dH_c/dchib_n."""
    return -1j * field.params.delta * gradient(field)


@dataclass
class Trajectory:
    times: np.ndarray
    fields: np.ndarray                    # (n_samples, N)
    lam_samples: np.ndarray
    tau_values: np.ndarray                # (n_samples, len(lam_samples))
    hc_values: np.ndarray
    params: ModelParams


def evolve(field: ClassicalField, t_end: float, dt: float,
           lam_samples=(0.37, 1.1, -0.73), record_every: int = 50,
           gradient=grad_Hc) -> Trajectory:
    """Fixed-step RK4 integration recording tau(lam_s) and H_c along the way."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    params = field.params
    lam_samples = np.asarray(lam_samples, dtype=complex)
    steps = int(round(t_end / dt))
    f = field.values.copy()

    def rhs(vals):
        return eom(ClassicalField(vals, params), gradient)

    times, snaps, taus, hcs = [], [], [], []

    def record(t, vals):
        fld = ClassicalField(vals, params)
        times.append(t)
        snaps.append(vals.copy())
        taus.append([cl_transfer(fld, lam) for lam in lam_samples])
        hcs.append(build_Hc(fld))

    record(0.0, f)
    for step in range(1, steps + 1):
        k1 = rhs(f)
        k2 = rhs(f + dt / 2 * k1)
        k3 = rhs(f + dt / 2 * k2)
        k4 = rhs(f + dt * k3)
        f = f + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(f)):
            raise ArithmeticError(f"integration blew up at step {step}")
        if step % record_every == 0 or step == steps:
            record(step * dt, f)
    return Trajectory(times=np.array(times), fields=np.array(snaps),
                      lam_samples=lam_samples, tau_values=np.array(taus),
                      hc_values=np.array(hcs), params=params)


def conservation_report(traj: Trajectory) -> dict:
    """Max drift of every recorded invariant relative to its initial value."""
    drifts = {}
    for i, lam in enumerate(traj.lam_samples):
        series = traj.tau_values[:, i]
        drifts[f"tau({lam:g})"] = float(np.abs(series - series[0]).max())
    drifts["H_c"] = float(np.abs(traj.hc_values - traj.hc_values[0]).max())
    return drifts


def trajectory_to_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["time"]
        header += [f"re_chi_{n+1}" for n in range(traj.params.sites)]
        header += [f"im_chi_{n+1}" for n in range(traj.params.sites)]
        header += [f"drift_tau_{i}" for i in range(len(traj.lam_samples))]
        header += ["drift_Hc"]
        writer.writerow(header)
        for row, t in enumerate(traj.times):
            vals = traj.fields[row]
            drift_tau = np.abs(traj.tau_values[row] - traj.tau_values[0])
            drift_h = abs(traj.hc_values[row] - traj.hc_values[0])
            writer.writerow([repr(float(t))]
                            + [repr(float(v)) for v in vals.real]
                            + [repr(float(v)) for v in vals.imag]
                            + [repr(float(d)) for d in drift_tau]
                            + [repr(drift_h)])
