"""Model parameters for the repulsive lattice Bose gas.

The model lives on N periodic sites with lattice spacing Delta and coupling
kappa > 0 (repulsive regime only).  Each site carries a truncated bosonic
Fock space with levels 0 .. cutoff-1; the lattice Bose field satisfies
[chi_m, chi_n^dag] = Delta delta_{mn} below the truncation edge.

The distinguished spectral value nu = -2i/Delta is the point where the
one-site Lax matrix degenerates to rank one; local conserved densities are
extracted from logarithmic derivatives there.
"""

from dataclasses import dataclass

# Full-space matrices get prohibitively large quickly; sector-resolved work
# is unaffected by the guard.
FULL_SPACE_GUARD = 20000


@dataclass(frozen=True)
class ModelParams:
    """Couplings and discretization of one model instance.

    kappa   : repulsive coupling, must be > 0 (0 is accepted as the free limit)
    delta   : lattice spacing, > 0
    sites   : number of lattice sites N >= 1
    cutoff  : per-site Fock levels d >= 2 (occupations 0 .. d-1)
    """

    kappa: float
    delta: float
    sites: int
    cutoff: int

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0 (repulsive regime), got {self.kappa}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.sites < 1:
            raise ValueError(f"sites must be >= 1, got {self.sites}")
        if self.cutoff < 2:
            raise ValueError(f"cutoff must be >= 2, got {self.cutoff}")

    @property
    def nu(self) -> complex:
        """Projector point of the Lax matrix, nu = -2i/Delta."""
        return -2j / self.delta

    @property
    def dim(self) -> int:
        """Dimension of the full N-site truncated space."""
        return self.cutoff ** self.sites

    def check_full_space(self):
        if self.dim > FULL_SPACE_GUARD:
            raise ValueError(
                f"full-space dimension d^N = {self.dim} exceeds the guard "
                f"{FULL_SPACE_GUARD}; use sector-resolved routines instead")

    def with_cutoff(self, cutoff: int) -> "ModelParams":
        return ModelParams(self.kappa, self.delta, self.sites, cutoff)
