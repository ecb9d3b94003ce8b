"""Independent oracles shared across the test suite.

Nothing here reuses the package's closed forms beyond the Gaussian cdf and
the adaptive quadrature routine (which is itself oracle-grade and has its own
golden tests).  The W1 oracle integrates |F_hat - Phi| piece by piece; the
finite-chain oracles work purely by exhaustive path enumeration, so they are
algorithmically independent of the matrix-power machinery they check.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from cltlab.numerics import normal_cdf, quadrature


def w1_by_quadrature(values, lo: float = -12.0, hi: float = 12.0, tol: float = 1e-12) -> float:
    """integral of |F_hat - Phi| over [lo, hi], one smooth piece at a time.

    The truncation error beyond +/-12 is below 2e-33, far inside the 1e-8
    agreement the equivalence tests demand.
    """
    x = np.sort(np.asarray(values, dtype=float))
    r = x.size
    knots = [lo, *x.tolist(), hi]
    total = 0.0
    for i in range(len(knots) - 1):
        a, b = knots[i], knots[i + 1]
        if b <= a:
            continue
        c = i / r  # empirical cdf level between knots i and i+1
        total += quadrature(lambda t, c=c: abs(c - normal_cdf(t)), a, b, tol=tol)
    return total


# ---------------------------------------------------------------------------
# brute-force finite-chain oracles (exhaustive path enumeration)


def chain_paths(P: np.ndarray, pi: np.ndarray, length: int) -> Iterator[tuple[float, tuple[int, ...]]]:
    """All state paths (Y_1 .. Y_length) with their exact probabilities."""
    S = P.shape[0]

    def rec(prefix: tuple[int, ...], prob: float):
        t = len(prefix)
        if t == length:
            yield prob, prefix
            return
        if t == 0:
            for s in range(S):
                if pi[s] > 0:
                    yield from rec((s,), prob * float(pi[s]))
        else:
            y = prefix[-1]
            for s in range(S):
                if P[y, s] > 0:
                    yield from rec(prefix + (s,), prob * float(P[y, s]))

    yield from rec((), 1.0)


class ChainEnumeration:
    """Exact conditional structure of f(Y_1..Y_n) by total enumeration.

    Increments are the Doob differences xi_k = E(S_n | Y_1..k) - E(S_n | Y_1..k-1),
    with every conditional expectation computed by summing over all suffix
    paths -- no matrix powers, no recursions shared with the package.
    """

    def __init__(self, P, f, pi, n: int) -> None:
        self.P = np.asarray(P, dtype=float)
        self.pi = np.asarray(pi, dtype=float)
        f = np.asarray(f, dtype=float)
        self.f = f - float(self.pi @ f)
        self.n = n
        self.paths = list(chain_paths(self.P, self.pi, n))
        self._xi_cache: dict[tuple[int, ...], float] = {}

    def path_sum(self, states: tuple[int, ...]) -> float:
        return float(sum(self.f[s] for s in states))

    def cond_mean_sum(self, prefix: tuple[int, ...]) -> float:
        """E(S_n | Y_1..len(prefix) = prefix), brute force."""
        k = len(prefix)
        if k == 0:
            return float(sum(p * self.path_sum(s) for p, s in self.paths))
        num = 0.0
        den = 0.0
        for p, s in self.paths:
            if s[:k] == prefix:
                num += p * self.path_sum(s)
                den += p
        return num / den

    def xi(self, states: tuple[int, ...], k: int) -> float:
        """Doob increment xi_k along one path (k = 1..n)."""
        key = states[:k]
        if key not in self._xi_cache:
            prev = self.cond_mean_sum(states[: k - 1]) if k > 1 else self.cond_mean_sum(())
            self._xi_cache[key] = self.cond_mean_sum(states[:k]) - prev
        return self._xi_cache[key]

    def sigma2(self, k: int) -> float:
        return float(sum(p * self.xi(s, k) ** 2 for p, s in self.paths))

    def cond_var_gap(self, prefix: tuple[int, ...]) -> float:
        """sum_{k > len(prefix)} (E(xi_k^2 | prefix) - sigma_k^2)."""
        ell = len(prefix) + 1
        num = np.zeros(self.n - ell + 1)
        den = 0.0
        for p, s in self.paths:
            if s[: ell - 1] == prefix:
                den += p
                for j, k in enumerate(range(ell, self.n + 1)):
                    num[j] += p * self.xi(s, k) ** 2
        total = 0.0
        for j, k in enumerate(range(ell, self.n + 1)):
            total += num[j] / den - self.sigma2(k)
        return total

    def u_ell(self, ell: int, p: float) -> float:
        """E[(|xi_{ell-1}| v sigma_{ell-1})^{p-2} |gap_ell|], 2 <= ell <= n."""
        sig = math.sqrt(self.sigma2(ell - 1))
        total = 0.0
        seen: dict[tuple[int, ...], float] = {}
        for prob, s in self.paths:
            prefix = s[: ell - 1]
            if prefix not in seen:
                seen[prefix] = self.cond_var_gap(prefix)
            x = abs(self.xi(s, ell - 1))
            total += prob * max(x, sig) ** (p - 2.0) * abs(seen[prefix])
        return total

    def l_n(self, p: float, r: float, a: float) -> float:
        v = [self.sigma2(k) for k in range(1, self.n + 1)]
        v_n = sum(v)
        delta2 = max(v)
        total = 0.0
        for ell in range(2, self.n + 1):
            v_prev = sum(v[: ell - 1])
            denom = (v_n - v_prev + a * a * delta2) ** ((p - r) / 2.0)
            total += self.u_ell(ell, p) / denom
        return total
