"""Composable security parameter of one post-processing round."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SecurityBudget:
    eps_decoy: float
    eps_ver: float
    eps_pa: float
    round_index: int = 1

    @property
    def eps(self) -> float:
        return self.eps_decoy + self.eps_ver + self.eps_pa

    @property
    def eps_cumulative(self) -> float:
        """Security parameter after ``round_index`` rounds."""
        return self.round_index * self.eps

    def as_record(self) -> dict:
        return {
            "eps_decoy": self.eps_decoy,
            "eps_ver": self.eps_ver,
            "eps_pa": self.eps_pa,
            "eps": self.eps,
            "round_index": self.round_index,
            "eps_cumulative": self.eps_cumulative,
        }


def epsilon_budget(eps_decoy: float, eps_ver: float, eps_pa: float, r: int = 1) -> SecurityBudget:
    """
    >>> b = epsilon_budget(1e-12, 2.5e-11, 1e-12)
    >>> b.eps < 3e-11
    True
    """
    for name, v in (("eps_decoy", eps_decoy), ("eps_ver", eps_ver), ("eps_pa", eps_pa)):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {v}")
    if int(r) != r or r < 1:
        raise ValueError(f"round index must be a positive integer, got {r}")
    return SecurityBudget(eps_decoy, eps_ver, eps_pa, int(r))
