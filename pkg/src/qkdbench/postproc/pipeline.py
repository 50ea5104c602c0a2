"""One block through reconciliation, verification, estimation and amplification."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import AbortBlock, ConfigInvalid
from . import ldpc
from .amplification import privacy_amplify, toeplitz_seed
from .budget import epsilon_budget
from .estimation import check_intensities, estimate
from .hashing import verify
from .reconciliation import HASH_BITS, reconcile
from .sifting import Block


@dataclass(frozen=True)
class ProtocolConfig:
    """Post-processing parameters shared by Alice and Bob."""

    mu: float = 0.5
    nu1: float = 0.1
    nu2: float = 0.01
    subblock_length: int = 27200
    n_subblocks: int = 50
    reconciliation: str = "ldpc"
    apriori_qber: float = 0.03
    code_rate: float | None = None
    code_rates: tuple[float, ...] = ldpc.DEFAULT_RATES
    punctured: int = 0
    max_disclosure_rounds: int = 2
    disclosure_fraction: float = 0.02
    eps_decoy: float = 1e-12
    eps_pa: float = 1e-12
    hash_bits: int = HASH_BITS
    round_index: int = 1
    code_seed: int = 2024

    def __post_init__(self):
        try:
            check_intensities(self.mu, self.nu1, self.nu2)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        if self.reconciliation not in ("ldpc", "oracle"):
            raise ConfigInvalid("reconciliation must be 'ldpc' or 'oracle'")
        if self.subblock_length < 1 or self.n_subblocks < 1:
            raise ConfigInvalid("subblock length and count must be positive")
        if not 0 < self.eps_decoy < 7 or not 0 < self.eps_pa < 1:
            raise ConfigInvalid("eps_decoy must lie in (0, 7) and eps_pa in (0, 1)")
        if not 0 <= self.apriori_qber <= 0.5:
            raise ConfigInvalid("apriori_qber must lie in [0, 0.5]")
        object.__setattr__(self, "code_rates", tuple(self.code_rates))

    @property
    def block_length(self) -> int:
        return self.subblock_length * self.n_subblocks

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown protocol keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def as_record(self) -> dict:
        d = asdict(self)
        d["code_rates"] = list(self.code_rates)
        return d


@dataclass
class BlockResult:
    status: str  # "ok" or "aborted"
    record: dict
    key_alice: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    key_bob: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    reason: str = ""

    @property
    def l_sec(self) -> int:
        return int(self.record.get("l_sec", 0))

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _truth(block, verified, subblock_length):
    """Simulator ground truth for the verified single-photon bits."""
    if block.photons is None or not verified.any():
        return {}
    mask = np.repeat(verified, subblock_length)
    ph = block.photons[mask]
    err = block.alice[mask] != block.bob[mask]
    one = ph == 1
    m1 = int(one.sum())
    return {"m1_true": m1, "E1_true": float(err[one].mean()) if m1 else 0.0}


def process_block(block: Block, cfg: ProtocolConfig, rng: np.random.Generator) -> BlockResult:
    """Run the block and return its report; aborts become ``status="aborted"``.

    The block must hold a whole number of subblocks. The report carries the
    simulator truth (``m1_true``, ``E1_true``) when photon numbers are known.
    """
    n = len(block.alice)
    rec: dict = {"l_block": n, "stats": block.stats.as_record(), "mode": cfg.reconciliation}
    outcome = reconcile(
        block.alice, block.bob, mode=cfg.reconciliation, apriori_qber=cfg.apriori_qber,
        subblock_length=cfg.subblock_length, rate=cfg.code_rate, rates=cfg.code_rates,
        punctured=cfg.punctured, rng=rng, max_disclosure_rounds=cfg.max_disclosure_rounds,
        disclosure_fraction=cfg.disclosure_fraction, code_seed=cfg.code_seed,
    )
    outcome.hash_bits = cfg.hash_bits
    rec.update(
        code_rate=outcome.rate, syndrome_bits=outcome.syndrome_bits, punctured=outcome.punctured,
        n_subblocks=outcome.n_subblocks, n_cor=outcome.n_cor, l_cor=outcome.l_cor,
        disclosed=outcome.disclosed.tolist(),
        subblock_qber=[None if math.isnan(x) else x for x in outcome.qber.tolist()],
    )
    ver = verify(outcome, rng)
    rec.update(
        n_ver=ver.n_ver, l_ver=ver.l_ver, eps_ver=ver.eps_ver, xi=ver.xi, leak=ver.leak,
        first_pass=ver.first_pass, E_mu=None if math.isnan(ver.e_mu) else ver.e_mu,
    )
    rec.update(_truth(block, ver.verified, cfg.subblock_length))
    if ver.n_ver == 0:
        rec["l_sec"] = 0
        return BlockResult("aborted", rec, reason="nothing_verified")
    try:
        est = estimate(block.stats, ver.l_ver, ver.e_mu, ver.leak, cfg.eps_decoy, cfg.eps_pa, cfg.mu, cfg.nu1, cfg.nu2)
    except AbortBlock as exc:
        rec.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in exc.partial.items()})
        rec["l_sec"] = 0
        return BlockResult("aborted", rec, reason=exc.reason)
    rec.update(est.as_record())
    rec.update(epsilon_budget(cfg.eps_decoy, ver.eps_ver, cfg.eps_pa, cfg.round_index).as_record())
    seed = toeplitz_seed(rng, ver.l_ver, est.l_sec)
    rec["toeplitz_seed_bits"] = len(seed)
    return BlockResult("ok", rec, privacy_amplify(ver.alice, seed), privacy_amplify(ver.bob, seed))
