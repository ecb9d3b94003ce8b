"""Model plumbing shared by every path family.

A model is a pure function of (spec, seed lineage): the same spec and the
same (master_seed, stream_id) always reproduce the same path bit for bit.
Replicate r of grid block b draws from stream_id = b * 2^40 + r, so replicate
sets can be generated in any order or split across workers and merged by
index without changing a single output byte.

Each family implements

* ``sample_path(lineage)``      one path with its increments (test surface),
* ``_statistic_chunk(gens)``    the raw path sum for a batch of generators
                                 (vectorized hot path),
* ``moments()``                 the exact per-increment variance ladder.

``statistic_values`` turns those into the normalized statistic samples the
distance pipeline consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..errors import CapabilityError, ConfigurationError, DomainError
from ..numerics import SeedLineage

# Replicates are generated in chunks so families can vectorize across the
# chunk; the chunk size never affects output values, only memory/speed.
DEFAULT_CHUNK = 4096

KNOWN_FAMILIES = (
    "gaussian_iid",
    "rademacher_iid",
    "ce_lowerbound",
    "linear_statistic",
    "rho_mixing_chain",
    "sequential_maps",
)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one path model.

    family   one of KNOWN_FAMILIES
    n        number of increments (path length)
    p        moment order the experiment targets, in (2, 3] unless the
             family documents a wider range
    params   family-specific parameters (JSON-serializable)
    """

    family: str
    n: int
    p: float = 3.0
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in KNOWN_FAMILIES:
            raise ConfigurationError(
                f"unknown model family {self.family!r}; known: {', '.join(KNOWN_FAMILIES)}"
            )
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n!r}")
        if not (isinstance(self.p, (int, float)) and math.isfinite(self.p)) or self.p <= 2.0:
            raise ConfigurationError(f"p must be a finite real > 2, got {self.p!r}")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": int(self.n),
            "p": float(self.p),
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelSpec":
        if "family" not in d or "n" not in d:
            raise ConfigurationError("model spec needs at least 'family' and 'n'")
        return cls(
            family=d["family"],
            n=int(d["n"]),
            p=float(d.get("p", 3.0)),
            params=dict(d.get("params", {})),
        )


@dataclass(frozen=True)
class PathMoments:
    """Per-increment variance ladder of the martingale the model designates.

    sigma2 sums to v_n (the variance of the designated path sum) within
    rounding; delta_n is the largest increment scale max_k sigma_k.  When a
    family cannot produce its ladder in closed form the values are flagged
    exact=False and carry the estimation note.
    """

    sigma2: np.ndarray
    v_n: float
    delta_n: float
    conditional_variance_constant: bool
    exact: bool = True
    note: str = ""

    def __post_init__(self) -> None:
        s = np.asarray(self.sigma2, dtype=float)
        if s.ndim != 1 or s.size == 0 or np.any(s < 0) or not np.all(np.isfinite(s)):
            raise DomainError("sigma2 must be a nonempty 1-D array of finite nonnegatives")
        object.__setattr__(self, "sigma2", s)
        if not math.isfinite(self.v_n) or self.v_n <= 0:
            raise DomainError(f"v_n must be a positive real, got {self.v_n!r}")
        tol = 1e-12 * max(1.0, abs(self.v_n))
        if abs(float(np.sum(s)) - self.v_n) > 1e-8 * max(1.0, abs(self.v_n)) + tol:
            raise DomainError(
                f"variance ladder does not sum to v_n: {float(np.sum(s))!r} vs {self.v_n!r}"
            )
        expected_delta = math.sqrt(float(np.max(s)))
        if abs(self.delta_n - expected_delta) > 1e-9 * max(1.0, expected_delta):
            raise DomainError("delta_n must equal max_k sigma_k")

    def partial_v(self, ell: int) -> float:
        """Sum of sigma2 over the first ell increments (V_ell)."""
        if not (0 <= ell <= self.sigma2.size):
            raise DomainError(f"ell out of range: {ell}")
        return float(np.sum(self.sigma2[:ell]))


@dataclass(frozen=True)
class PathSample:
    """One simulated path: increments plus any exact bookkeeping.

    exact_sum carries a symbolically tracked path sum when floating addition
    of the increments would destroy an exact algebraic cancellation (the
    lower-bound family's atom at zero); it is None otherwise.
    """

    increments: np.ndarray
    exact_sum: Optional[float] = None
    aux: Mapping[str, Any] = field(default_factory=dict)

    @property
    def path_sum(self) -> float:
        if self.exact_sum is not None:
            return float(self.exact_sum)
        return float(np.sum(self.increments))


class Model:
    """Base class: deterministic path generation and batch statistics."""

    def __init__(self, spec: ModelSpec) -> None:
        self.spec = spec

    # -- identity ---------------------------------------------------------

    @property
    def model_id(self) -> str:
        return f"{self.spec.family}(n={self.spec.n})"

    # -- family surface ----------------------------------------------------

    def moments(self) -> PathMoments:
        raise NotImplementedError

    def sample_path(self, lineage: SeedLineage) -> PathSample:
        raise NotImplementedError

    def _statistic_chunk(self, gens: Sequence[np.random.Generator]) -> np.ndarray:
        """Raw (unnormalized) path sums for one batch of generators."""
        raise NotImplementedError

    # -- capabilities ------------------------------------------------------

    @property
    def has_conditional_oracle(self) -> bool:
        """True when E(xi_k^2 | path prefix) is computable exactly."""
        return self.moments().conditional_variance_constant

    def conditional_variance_gap(
        self, prefix_states: np.ndarray, ell: int
    ) -> np.ndarray:
        """sum_{k=ell}^{n} (E(xi_k^2 | F_{ell-1}) - sigma_k^2) per prefix.

        Models with constant conditional variances return exact zeros; others
        must override or raise CapabilityError.
        """
        if self.moments().conditional_variance_constant:
            return np.zeros(np.asarray(prefix_states).shape[0])
        raise CapabilityError(
            f"{self.model_id} has no conditional variance oracle"
        )

    def psi_closed_form(self, t: float) -> Optional[float]:
        """Closed-form psi_n(t) when the family admits one, else None."""
        return None

    def sup_moment_ratio(self, p: float) -> tuple[float, float, bool]:
        """sup_k E|xi_k|^p / sigma_k^2 as (value, se, exact)."""
        raise CapabilityError(f"{self.model_id} cannot evaluate sup moment ratio")

    def sum_abs_moments(self, p: float) -> tuple[float, float, bool]:
        """sum_k E|xi_k|^p as (value, se, exact)."""
        raise CapabilityError(f"{self.model_id} cannot evaluate absolute moment sums")

    # -- batch simulation ---------------------------------------------------

    def statistic_normalizer(self) -> float:
        """The path sum is divided by this to target the standard Gaussian."""
        return math.sqrt(self.moments().v_n)

    def chunk_size(self) -> int:
        return DEFAULT_CHUNK

    def statistic_range(
        self, master_seed: int, start: int, count: int, block: int = 0
    ) -> np.ndarray:
        """Normalized statistic for replicates [start, start+count)."""
        if count < 0 or start < 0:
            raise DomainError("start and count must be nonnegative")
        out = np.empty(count, dtype=float)
        norm = self.statistic_normalizer()
        chunk = self.chunk_size()
        done = 0
        while done < count:
            c = min(chunk, count - done)
            gens = [
                SeedLineage(
                    master_seed, SeedLineage.stream_for(block, start + done + j)
                ).generator()
                for j in range(c)
            ]
            out[done : done + c] = self._statistic_chunk(gens)
            done += c
        out /= norm
        return out

    def statistic_values(
        self, master_seed: int, replicates: int, block: int = 0, threads: int = 1
    ) -> np.ndarray:
        """All replicates, optionally computed by a worker pool.

        The split is by replicate range and results are merged by index, so
        the output is identical for every thread count.
        """
        if replicates < 1:
            raise DomainError("replicates must be positive")
        if threads <= 1 or replicates < 4 * self.chunk_size():
            return self.statistic_range(master_seed, 0, replicates, block)
        from concurrent.futures import ProcessPoolExecutor

        ranges = _even_ranges(replicates, threads)
        out = np.empty(replicates, dtype=float)
        spec_dict = self.spec.to_dict()
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_statistic_range_worker, spec_dict, master_seed, s, c, block)
                for (s, c) in ranges
            ]
            for (s, c), fut in zip(ranges, futures):
                out[s : s + c] = fut.result()
        return out

    def increment_matrix(
        self, master_seed: int, replicates: int, block: int = 0
    ) -> np.ndarray:
        """(replicates, n) matrix of raw increments, one path per row.

        Monte Carlo helper for bound estimation; not tuned for huge R.
        """
        n = self.spec.n
        out = np.empty((replicates, n), dtype=float)
        for r in range(replicates):
            lin = SeedLineage(master_seed, SeedLineage.stream_for(block, r))
            out[r] = self.sample_path(lin).increments
        return out


def _even_ranges(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    base = total // parts
    rem = total % parts
    ranges = []
    start = 0
    for i in range(parts):
        c = base + (1 if i < rem else 0)
        ranges.append((start, c))
        start += c
    return ranges


def _statistic_range_worker(
    spec_dict: dict, master_seed: int, start: int, count: int, block: int
) -> np.ndarray:
    # Imported lazily to keep worker pickling self-contained.
    from . import make_model

    model = make_model(ModelSpec.from_dict(spec_dict))
    return model.statistic_range(master_seed, start, count, block)
