"""Negative-spin su(2) structure hidden in the Lax matrix.

Multiplying the Lax matrix by -sigma3 brings it to XXX-like form: the scalar
part of -sigma3 L is purely linear in the spectral parameter (coefficient
i Delta/2, a rescaling of lam) and the sigma-components, scaled by
c = 2/(kappa Delta), close an su(2) algebra on the truncated Fock space.

The matched combinations are

    t3 = -c S3,    t(sig+) = -c S+,      t(sig-) = c S-.

Empirically the sigma_- coefficient is the weight-raising generator:

    [t3, t(sig-)] = + t(sig-),   [t3, t(sig+)] = - t(sig+),
    [t(sig-), t(sig+)] = 2 t3,

so the module labels raising = c S-, lowering = -c S+ and records the
matching.  The vacuum is the lowest-weight state, t3|0> = s|0> with
s = -2/(kappa Delta), and the Casimir

    C = t3^2 + (t_raise t_lower + t_lower t_raise)/2 = s (s + 1)

is an exact scalar on the cutoff window (products need two levels of
headroom, so the window is m <= cutoff - 3).
"""

from dataclasses import dataclass

import numpy as np

from .fockspace import SiteOperator
from .laxops import build_spin_entries
from .params import ModelParams
from .report import ResidualReport

TOL_COMMUTATORS = 1e-11
TOL_CASIMIR = 1e-9
KAPPA_FLOOR = 1e-8


@dataclass
class SpinTriple:
    t3: SiteOperator
    raising: SiteOperator         # matched from the sigma_- coefficient
    lowering: SiteOperator        # matched from the sigma_+ coefficient
    scale: float                  # c = 2/(kappa Delta)
    spin: float                   # s = -2/(kappa Delta)
    scalar_slope: complex         # lam-coefficient of the scalar part of -sigma3 L
    scalar_fit_residual: float
    matching: dict                # which sigma component each generator came from


def build_spin_ops(params: ModelParams) -> SpinTriple:
    """Expand -sigma3 L(lam) in {I, sigma3, sigma+, sigma-} and scale the parts.

    The scalar coefficient must be linear in lam with zero constant term;
    the fit over a small lam grid certifies that before any scaling happens.
    """
    if params.kappa < KAPPA_FLOOR:
        raise ValueError(
            f"spin matching needs kappa >= {KAPPA_FLOOR}: the scale 2/(kappa Delta) "
            "diverges in the free limit")
    spins = build_spin_entries(params)
    d = params.cutoff
    # -sigma3 L = [[-L11, -L12], [L21, L22]]; expand entrywise.
    # scalar part: ((-L11) + L22)/2 = i lam Delta/2 * I (operator part cancels)
    # sigma3 part: ((-L11) - L22)/2 = -S3
    lams = np.array([-1.3, -0.4, 0.2, 0.9, 1.7])
    scalars = []
    for lam in lams:
        L11 = -0.5j * lam * params.delta * np.eye(d) + spins.S3.matrix
        L22 = +0.5j * lam * params.delta * np.eye(d) + spins.S3.matrix
        scalar_op = (-L11 + L22) / 2
        off = scalar_op - np.trace(scalar_op) / d * np.eye(d)
        if np.abs(off).max() > 1e-12:
            raise ArithmeticError("scalar part of -sigma3 L is not proportional "
                                  "to the identity")
        scalars.append(np.trace(scalar_op) / d)
    V = np.vander(lams.astype(complex), 2, increasing=True)
    fit, *_ = np.linalg.lstsq(V, np.asarray(scalars), rcond=None)
    fit_residual = float(np.abs(V @ fit - scalars).max() + abs(fit[0]))
    if fit_residual > 1e-10:
        raise ArithmeticError(
            f"scalar part of -sigma3 L is not homogeneous-linear in lam "
            f"(residual {fit_residual:.2e}); algebra construction is broken")
    c = 2.0 / (params.kappa * params.delta)
    t3 = -c * spins.S3
    lowering = -c * spins.Splus
    raising = c * spins.Sminus
    return SpinTriple(
        t3=t3, raising=raising, lowering=lowering, scale=c,
        spin=-c, scalar_slope=complex(fit[1]), scalar_fit_residual=fit_residual,
        matching={"t3": "-c * sigma3 coefficient (-S3)",
                  "raising": "c * sigma- coefficient (S-)",
                  "lowering": "c * sigma+ coefficient (-S+)",
                  "gradings": {"t3": 0, "raising": -1, "lowering": +1}})


def verify_representation(params: ModelParams,
                          tol_comm: float = TOL_COMMUTATORS,
                          tol_casimir: float = TOL_CASIMIR):
    """Commutator and Casimir residuals of the matched su(2) triple.

    Products of two generators need two levels of truncation headroom, so
    residuals are measured on levels m <= cutoff - 3.  Returns the list of
    reports plus the measured Casimir scalar.
    """
    triple = build_spin_ops(params)
    d = params.cutoff
    window = np.ix_(range(d - 2), range(d - 2))
    record = {"kappa": params.kappa, "delta": params.delta, "cutoff": d,
              "spin": triple.spin}

    def comm(a, b):
        return a.matrix @ b.matrix - b.matrix @ a.matrix

    t3, tr, tl = triple.t3, triple.raising, triple.lowering
    reports = [
        ResidualReport("su2_comm_raise", record,
                       np.abs((comm(t3, tr) - tr.matrix)[window]).max(), tol_comm),
        ResidualReport("su2_comm_lower", record,
                       np.abs((comm(t3, tl) + tl.matrix)[window]).max(), tol_comm),
        ResidualReport("su2_comm_pm", record,
                       np.abs((comm(tr, tl) - 2 * t3.matrix)[window]).max(), tol_comm),
    ]
    casimir = (t3.matrix @ t3.matrix
               + (tr.matrix @ tl.matrix + tl.matrix @ tr.matrix) / 2)
    wide = np.ix_(range(d - 2), range(d - 2))
    diag = np.diag(casimir)[: d - 2]
    scalar = diag.mean()
    off_mass = np.abs(casimir[wide] - scalar * np.eye(d - 2)).max()
    reports.append(ResidualReport("su2_casimir_scalar", record, off_mass, 1e-11))
    s = triple.spin
    reports.append(ResidualReport(
        "su2_casimir_value", dict(record, measured=complex(scalar)),
        abs(scalar - s * (s + 1)) / max(1.0, abs(s * (s + 1))), tol_casimir))
    # Casimir commutes with the triple on a deeper window (triple products)
    deep = np.ix_(range(d - 3), range(d - 3))
    worst = max(np.abs((casimir @ g.matrix - g.matrix @ casimir)[deep]).max()
                for g in (t3, tr, tl))
    reports.append(ResidualReport("su2_casimir_central", record, worst, tol_comm))
    return reports, complex(scalar), triple
