"""Stationary finite-state Markov chain functionals (the mixing family).

The observable path is X_i = f(Y_i) for a finite chain (Y_i) started from
its stationary law pi, with f centered under pi.  The distance pipeline
studies S_n = sum X_i against a Gaussian with the exact variance Var(S_n).

For the martingale-side bound machinery the model designates the projection
increments of S_n,

    xi_k = E(S_n | Y_1..Y_k) - E(S_n | Y_1..Y_{k-1})
         = h_{n-k}(Y_k) - (P h_{n-k})(Y_{k-1}),     h_r = f + P h_{r-1},

whose sum telescopes exactly to S_n (so the bound and the measured distance
talk about the same random variable) and whose variance ladder sums exactly
to Var(S_n).  Every conditional quantity of the chain is a matrix-power
expression, so the conditional-variance oracle, the ladder, the
per-increment distributions (each xi_k takes at most S^2 values) and the
conditional-variance fluctuation statistics are all exact.

Everything second-order (autocovariances gamma_k, Var(S_n), the window
variance-ratio statistic and its spectral bound) is computed from the
transition matrix directly.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, DomainError
from ..numerics import SeedLineage
from .base import Model, ModelSpec, PathMoments, PathSample


def _resolve_transition(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """(P, f) from params; default two-state symmetric chain with f = (+1, -1)."""
    raw = spec.params.get("transition", {"rule": "two_state", "stay": 0.75})
    if isinstance(raw, dict):
        if raw.get("rule") != "two_state":
            raise ConfigurationError(f"unknown transition shorthand {raw!r}")
        stay = float(raw.get("stay", 0.75))
        if not (0.0 < stay < 1.0):
            raise ConfigurationError(f"two_state stay probability must be in (0,1), got {stay!r}")
        P = np.array([[stay, 1.0 - stay], [1.0 - stay, stay]])
    else:
        P = np.asarray(raw, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ConfigurationError("transition must be a square stochastic matrix")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ConfigurationError("transition rows must be nonnegative and sum to 1")
    f = np.asarray(spec.params.get("state_values", [1.0, -1.0][: P.shape[0]]), dtype=float)
    if f.shape != (P.shape[0],) or not np.all(np.isfinite(f)):
        raise ConfigurationError(f"state_values must give {P.shape[0]} finite reals")
    return P, f


class RhoMixingChain(Model):
    """Centered functional of a stationary finite Markov chain."""

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__(spec)
        P, f = _resolve_transition(spec)
        self.P = P
        self.n_states = P.shape[0]
        self.pi = self._stationary()
        # center the observable under the stationary law
        self.f = f - float(self.pi @ f)
        if np.allclose(self.f, 0.0):
            raise ConfigurationError("state_values are constant; the functional is degenerate")
        self._cum_p = np.cumsum(P, axis=1)
        self._cum_pi = np.cumsum(self.pi)
        self._h: Optional[np.ndarray] = None  # h_r stacked, filled lazily
        self._rev: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._sigma2: Optional[np.ndarray] = None

    @property
    def model_id(self) -> str:
        return f"rho_mixing_chain(S={self.n_states},n={self.spec.n})"

    # -- stationary structure -------------------------------------------------

    def _stationary(self) -> np.ndarray:
        vals, vecs = np.linalg.eig(self.P.T)
        idx = int(np.argmin(np.abs(vals - 1.0)))
        if abs(vals[idx] - 1.0) > 1e-9:
            raise ConfigurationError("transition matrix has no eigenvalue 1")
        pi = np.real(vecs[:, idx])
        pi = pi / np.sum(pi)
        if np.any(pi < -1e-12):
            raise ConfigurationError("stationary vector has negative mass; chain not ergodic?")
        pi = np.clip(pi, 0.0, None)
        return pi / np.sum(pi)

    def spectral_gap_rho(self) -> float:
        """Second-largest eigenvalue modulus of the transition matrix."""
        vals = np.sort(np.abs(np.linalg.eigvals(self.P)))[::-1]
        return float(vals[1])

    def c_n_bound(self) -> float:
        """Spectral bound (1 + rho) / (1 - rho) for the window variance ratio."""
        rho = self.spectral_gap_rho()
        if rho >= 1.0 - 1e-12:
            raise ConfigurationError("chain is not geometrically mixing (rho = 1)")
        return (1.0 + rho) / (1.0 - rho)

    def k_n(self) -> float:
        """Sup norm of the centered observable."""
        return float(np.max(np.abs(self.f)))

    def autocovariance(self, lag: int) -> float:
        """gamma_lag = E f(Y_0) f(Y_lag), exact."""
        lag = abs(int(lag))
        g = self.f.copy()
        for _ in range(lag):
            g = self.P @ g
        return float(self.pi @ (self.f * g))

    def _gammas(self, upto: int) -> np.ndarray:
        out = np.empty(upto + 1)
        g = self.f.copy()
        out[0] = float(self.pi @ (self.f * g))
        for d in range(1, upto + 1):
            g = self.P @ g
            out[d] = float(self.pi @ (self.f * g))
        return out

    def var_sn(self, n: Optional[int] = None) -> float:
        """Var(S_n) from the exact autocovariances."""
        if n is None:
            n = self.spec.n
        gam = self._gammas(n - 1)
        d = np.arange(1, n, dtype=float)
        return float(n * gam[0] + 2.0 * np.sum((n - d) * gam[1:]))

    def c_n(self, n: Optional[int] = None) -> float:
        """max_l (sum_{i=l}^n E X_i^2) / Var(S_n - S_{l-1}), exact.

        With a stationary start this is a maximum over window lengths.
        """
        if n is None:
            n = self.spec.n
        gam = self._gammas(n - 1)
        best = 0.0
        # Var over window length w: w*g0 + 2*sum_{d=1}^{w-1} (w-d) g_d, built
        # incrementally: adding one step adds g0 + 2*sum_{d=1}^{w-1} g_d.
        var_w = 0.0
        cum_g = 0.0
        for w in range(1, n + 1):
            var_w += gam[0] + 2.0 * cum_g
            cum_g += gam[w] if w < n else 0.0
            ratio = (w * gam[0]) / var_w
            if ratio > best:
                best = ratio
        return best

    def theta_mixing_bound(self) -> float:
        """sum_k k rho^k with rho the spectral gap — finite for every ergodic chain."""
        rho = self.spectral_gap_rho()
        return rho / (1.0 - rho) ** 2

    # -- projection martingale ladder -----------------------------------------

    def _h_stack(self) -> np.ndarray:
        """h_r for r = 0..n-1 stacked as rows; h_r = f + P h_{r-1}."""
        if self._h is None:
            n = self.spec.n
            h = np.empty((n, self.n_states))
            h[0] = self.f
            for r in range(1, n):
                h[r] = self.f + self.P @ h[r - 1]
            self._h = h
        return self._h

    def increment_values(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """All values of xi_k with their probabilities (exact distribution).

        k = 1 returns the S values h_{n-1}(y) with weights pi; k >= 2 returns
        the S^2 values h_{n-k}(y) - (P h_{n-k})(y') over pairs (y', y) with
        weights pi_{y'} P_{y'y}.
        """
        n = self.spec.n
        if not (1 <= k <= n):
            raise DomainError(f"increment index k must be in [1, {n}]")
        h = self._h_stack()[n - k]
        if k == 1:
            return h.copy(), self.pi.copy()
        ph = self.P @ h
        vals = h[None, :] - ph[:, None]  # (y', y)
        probs = self.pi[:, None] * self.P
        return vals.ravel(), probs.ravel()

    def sigma2_ladder(self) -> np.ndarray:
        if self._sigma2 is None:
            n = self.spec.n
            h = self._h_stack()
            sigma2 = np.empty(n)
            sigma2[0] = float(self.pi @ (h[n - 1] ** 2))
            for k in range(2, n + 1):
                hk = h[n - k]
                phk = self.P @ hk
                sigma2[k - 1] = float(self.pi @ (hk**2) - self.pi @ (phk**2))
            self._sigma2 = sigma2
        return self._sigma2

    def moments(self) -> PathMoments:
        sigma2 = self.sigma2_ladder()
        v_n = self.var_sn()
        return PathMoments(
            sigma2=sigma2,
            v_n=v_n,
            delta_n=float(math.sqrt(np.max(sigma2))),
            conditional_variance_constant=False,
            exact=True,
        )

    @property
    def has_conditional_oracle(self) -> bool:
        return True

    def conditional_variance_gap(self, prefix_states: np.ndarray, ell: int) -> np.ndarray:
        """sum_{k=ell}^n (E(xi_k^2 | Y_{ell-1}) - sigma_k^2), exact per state.

        prefix_states holds the state index Y_{ell-1} per replicate.
        """
        n = self.spec.n
        if not (2 <= ell <= n):
            raise DomainError(f"ell must be in [2, {n}]")
        table = self._gap_tables()[ell - 2]
        states = np.asarray(prefix_states, dtype=np.intp)
        return table[states]

    def _gap_tables(self) -> np.ndarray:
        """Row ell-2 gives the state-indexed table of the conditional gap at ell."""
        if not hasattr(self, "_gap_cache"):
            n = self.spec.n
            h = self._h_stack()
            sigma2 = self.sigma2_ladder()
            # G_ell(y) = sum_{k >= ell} E(xi_k^2 | Y_{ell-1}=y), backward:
            # G_ell = w_ell + P G_{ell+1},  w_k(y) = (P h_{n-k}^2)(y) - ((P h_{n-k})(y))^2
            tables = np.empty((n - 1, self.n_states))
            g_next = np.zeros(self.n_states)
            tail_sigma = 0.0
            for ell in range(n, 1, -1):
                hk = h[n - ell]
                w = self.P @ (hk**2) - (self.P @ hk) ** 2
                g_next = w + self.P @ g_next
                tail_sigma += sigma2[ell - 1]
                tables[ell - 2] = g_next - tail_sigma
            self._gap_cache = tables
        return self._gap_cache

    def increment_abs_moment(self, k: int, p: float) -> float:
        """E|xi_k|^p, exact."""
        vals, probs = self.increment_values(k)
        return float(np.sum(probs * np.abs(vals) ** p))

    def sup_moment_ratio(self, p: float) -> tuple[float, float, bool]:
        sigma2 = self.sigma2_ladder()
        best = 0.0
        for k in range(1, self.spec.n + 1):
            if sigma2[k - 1] <= 0.0:
                continue
            best = max(best, self.increment_abs_moment(k, p) / sigma2[k - 1])
        return best, 0.0, True

    def sum_abs_moments(self, p: float) -> tuple[float, float, bool]:
        total = sum(self.increment_abs_moment(k, p) for k in range(1, self.spec.n + 1))
        return float(total), 0.0, True

    def psi_closed_form(self, t: float) -> Optional[float]:
        delta = math.sqrt(float(np.max(self.sigma2_ladder())))
        sigma2 = self.sigma2_ladder()
        best = 0.0
        for k in range(1, self.spec.n + 1):
            if sigma2[k - 1] <= 0.0:
                continue
            vals, probs = self.increment_values(k)
            a = np.abs(vals)
            contrib = float(np.sum(probs * np.minimum(t * delta * vals**2, a**3)))
            best = max(best, contrib / sigma2[k - 1])
        return best

    def u_samples(self, states: np.ndarray, ell: int, p: float) -> np.ndarray:
        """Per-path integrand of the fluctuation statistic at split index ell.

        states is a (replicates, n) matrix of state indices; column t-1 holds
        Y_t.  Used by the bound evaluators' Monte Carlo path, sharing one
        path set across all ell.
        """
        n = self.spec.n
        if not (2 <= ell <= n):
            raise DomainError(f"ell must be in [2, {n}]")
        sigma = math.sqrt(self.sigma2_ladder()[ell - 2])
        gap = self._gap_tables()[ell - 2][states[:, ell - 2]]
        h = self._h_stack()[n - (ell - 1)]
        if ell == 2:
            xi = h[states[:, 0]]
        else:
            ph = self.P @ h
            xi = h[states[:, ell - 2]] - ph[states[:, ell - 3]]
        return np.maximum(np.abs(xi), sigma) ** (p - 2.0) * np.abs(gap)

    def bracket_samples(self, states: np.ndarray) -> np.ndarray:
        """Predictable quadratic variation <M>_n per path (exact given the path).

        <M>_n = sigma_1^2 + sum_{k=2}^n E(xi_k^2 | Y_{k-1}); each conditional
        expectation is a state lookup, so the only randomness is the path.
        """
        n = self.spec.n
        h = self._h_stack()
        out = np.full(states.shape[0], self.sigma2_ladder()[0])
        for k in range(2, n + 1):
            hk = h[n - k]
            w = self.P @ (hk**2) - (self.P @ hk) ** 2
            out += w[states[:, k - 2]]
        return out

    def u_exact(self, ell: int, p: float) -> float:
        """Exact conditional-variance fluctuation statistic at split index ell.

        E[(|xi_{ell-1}| v sigma_{ell-1})^{p-2} |sum_{k>=ell}(E_{ell-1}(xi_k^2)-sigma_k^2)|]
        by enumeration over the (Y_{ell-2}, Y_{ell-1}) pairs.
        """
        n = self.spec.n
        if not (2 <= ell <= n):
            raise DomainError(f"ell must be in [2, {n}]")
        sigma = math.sqrt(self.sigma2_ladder()[ell - 2])
        gap = self._gap_tables()[ell - 2]  # indexed by Y_{ell-1}
        h = self._h_stack()[n - (ell - 1)]
        if ell == 2:
            # xi_1 = h_{n-1}(Y_1), Y_1 ~ pi
            weights = np.maximum(np.abs(h), sigma) ** (p - 2.0)
            return float(np.sum(self.pi * weights * np.abs(gap)))
        ph = self.P @ h
        total = 0.0
        for y_prev in range(self.n_states):
            for y in range(self.n_states):
                prob = self.pi[y_prev] * self.P[y_prev, y]
                xi = h[y] - ph[y_prev]
                total += prob * max(abs(xi), sigma) ** (p - 2.0) * abs(gap[y])
        return total

    # -- sampling ---------------------------------------------------------------

    def sample_states(self, lineage: SeedLineage) -> np.ndarray:
        """One state path Y_1..Y_n (uniform draws in time order)."""
        g = lineage.generator()
        u = g.random(self.spec.n)
        last = self.n_states - 1
        states = np.empty(self.spec.n, dtype=np.intp)
        states[0] = min(int(np.searchsorted(self._cum_pi, u[0], side="right")), last)
        for t in range(1, self.spec.n):
            states[t] = min(
                int(np.searchsorted(self._cum_p[states[t - 1]], u[t], side="right")),
                last,
            )
        return states

    def sample_path(self, lineage: SeedLineage) -> PathSample:
        """Projection increments xi_1..xi_n along one state path.

        xi_k = h_{n-k}(Y_k) - (P h_{n-k})(Y_{k-1}); the sum telescopes to
        S_n = sum f(Y_i) (exactly in algebra, to rounding in floats).
        """
        states = self.sample_states(lineage)
        n = self.spec.n
        rev_h, rev_ph = self._rev_stacks()
        xi = rev_h[np.arange(n), states]
        xi[1:] -= rev_ph[np.arange(1, n), states[:-1]]
        return PathSample(increments=xi, aux={"states": states})

    def _rev_stacks(self) -> tuple[np.ndarray, np.ndarray]:
        """(h_{n-k}, (P h_{n-k})) stacked with row index k-1."""
        if self._rev is None:
            h = self._h_stack()[::-1]
            self._rev = (np.ascontiguousarray(h), h @ self.P.T)
        return self._rev

    def _states_chunk(self, gens: Sequence[np.random.Generator]) -> np.ndarray:
        """(chunk, n) state paths, vectorized across the chunk."""
        n = self.spec.n
        c = len(gens)
        u = np.empty((c, n))
        for i, g in enumerate(gens):
            u[i] = g.random(n)
        states = np.empty((c, n), dtype=np.intp)
        # initial state from the stationary law
        states[:, 0] = np.minimum(
            np.searchsorted(self._cum_pi, u[:, 0], side="right"), self.n_states - 1
        )
        for t in range(1, n):
            rows = self._cum_p[states[:, t - 1]]  # (c, S)
            states[:, t] = np.minimum(
                (u[:, t, None] >= rows[:, :-1]).sum(axis=1), self.n_states - 1
            )
        return states

    def _statistic_chunk(self, gens: Sequence[np.random.Generator]) -> np.ndarray:
        states = self._states_chunk(gens)
        return self.f[states].sum(axis=1)

    def prefix_states_chunk(
        self, master_seed: int, replicates: int, block: int = 0
    ) -> np.ndarray:
        """(replicates, n) state paths for the fluctuation-statistic MC."""
        gens = [
            SeedLineage(master_seed, SeedLineage.stream_for(block, r)).generator()
            for r in range(replicates)
        ]
        return self._states_chunk(gens)
