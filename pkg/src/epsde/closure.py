"""Gaussian (cumulant-neglect) moment closure for polynomial SDEs.

Expectations of polynomials under N(mean, cov) are exact via the Wick
pairing rule for central moments: odd central moments vanish, even ones
are sums over pair partitions of products of covariance entries.  Total
monomial degree is capped at 8, which covers quadratic diffusion models
and quartic losses with room to spare.

The closed moment equations come in two flavors:

* forward (filtering direction),

    dmean_i/dt = <a_i>,
    dcov_ij/dt = <(x_i - m_i) a_j> + <(x_j - m_j) a_i> + <b_ij>;

* smoothing (integrated backward against a stored forward pass), which
  adds diffusion-divergence terms and a coupling to the forward marginal
  through grad log q_fw(x) = -C_fw^-1 (x - m_fw):

    d<f_l>/dt = sum_j <a_j df_l/dx_j>
              - sum_jk <df_l/dx_j  db_jk/dx_k>
              - (1/2) sum_jk <b_jk d2f_l/dx_j dx_k>
              - sum_jk <b_jk df_l/dx_j  dlog q_fw/dx_k>,

  taken over f_l in (x, x x^T) and rearranged into mean/cov form.  With
  constant b this reduces exactly to the classical continuous-time
  Rauch-Tung-Striebel smoother.

For speed, every expectation a given SdeSpec needs is expanded once into
a polynomial in the entries of (mean, upper-triangular cov) and stored as
flat coefficient/exponent arrays; evaluating the full right-hand side is
then a handful of vectorized array operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from math import comb

import numpy as np

from .gaussian import GaussianMoments, _chol
from .processes import PolynomialMap, SdeSpec

MAX_DEGREE = 8

# ---------------------------------------------------------------------------
# Wick pairings and numeric expectations


@lru_cache(maxsize=None)
def _pairings(idx: tuple[int, ...]) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All perfect matchings of an index multiset (empty tuple -> one empty)."""
    if len(idx) % 2 == 1:
        return ()
    if not idx:
        return ((),)
    first, rest = idx[0], idx[1:]
    out = []
    for j in range(len(rest)):
        pair = (min(first, rest[j]), max(first, rest[j]))
        remainder = rest[:j] + rest[j + 1:]
        for sub in _pairings(remainder):
            out.append((pair,) + sub)
    return tuple(out)


def _central_moment(cov: np.ndarray, beta: tuple[int, ...]) -> float:
    """E[prod z_i^beta_i] for z ~ N(0, cov) by direct pairing recursion."""
    idx: list[int] = []
    for i, b in enumerate(beta):
        idx.extend([i] * b)
    if len(idx) % 2 == 1:
        return 0.0
    if not idx:
        return 1.0

    def rec(rest: tuple[int, ...]) -> float:
        if not rest:
            return 1.0
        first, tail = rest[0], rest[1:]
        total = 0.0
        for j in range(len(tail)):
            total += cov[first, tail[j]] * rec(tail[:j] + tail[j + 1:])
        return total

    return rec(tuple(idx))


def gaussian_expectation(p: PolynomialMap, m: GaussianMoments) -> float:
    """E[p(x)] for x ~ N(mean, cov), exact for total degree <= 8."""
    if p.degree > MAX_DEGREE:
        raise ValueError(f"polynomial degree {p.degree} exceeds the "
                         f"supported maximum of {MAX_DEGREE}")
    mean, cov = m.mean, m.cov
    total = 0.0
    for c, alpha in p.terms():
        acc = 0.0
        for beta in product(*(range(a + 1) for a in alpha)):
            w = 1.0
            for i, (a, b) in enumerate(zip(alpha, beta)):
                w *= comb(a, b) * mean[i] ** (a - b)
            if w == 0.0:
                continue
            cm = _central_moment(cov, beta)
            if cm != 0.0:
                acc += w * cm
        total += c * acc
    return float(total)


# ---------------------------------------------------------------------------
# Symbolic expansion into polynomials over (mean, cov) entries


@dataclass(frozen=True, eq=False)
class MomentPoly:
    """Polynomial in the packed variables (m_0..m_d-1, C upper triangle)."""

    n_vars: int
    coeffs: np.ndarray
    expo: np.ndarray

    def evaluate(self, v: np.ndarray) -> float:
        if len(self.coeffs) == 0:
            return 0.0
        return float((v[None, :] ** self.expo).prod(axis=1) @ self.coeffs)


class _SymBuilder:
    """Expands E[x^alpha] under N(m, C) into monomials over (m, C) entries."""

    def __init__(self, dim: int):
        self.dim = dim
        iu = np.triu_indices(dim)
        self.n_vars = dim + len(iu[0])
        self._cvar = {}
        for k, (i, j) in enumerate(zip(*iu)):
            self._cvar[(int(i), int(j))] = dim + k

    def expectation(self, p: PolynomialMap) -> dict[tuple[int, ...], float]:
        if p.degree > MAX_DEGREE:
            raise ValueError(f"polynomial degree {p.degree} exceeds the "
                             f"supported maximum of {MAX_DEGREE}")
        out: dict[tuple[int, ...], float] = {}
        for c, alpha in p.terms():
            for beta in product(*(range(a + 1) for a in alpha)):
                w = float(c)
                mono = [0] * self.n_vars
                for i, (a, b) in enumerate(zip(alpha, beta)):
                    w *= comb(a, b)
                    mono[i] = a - b
                idx: list[int] = []
                for i, b in enumerate(beta):
                    idx.extend([i] * b)
                for pairing in _pairings(tuple(idx)):
                    mono2 = list(mono)
                    for (i, j) in pairing:
                        mono2[self._cvar[(i, j)]] += 1
                    key = tuple(mono2)
                    out[key] = out.get(key, 0.0) + w
        return {k: v for k, v in out.items() if v != 0.0}

    def expectation_times_mean(self, poly_dict: dict, mean_var: int) -> dict:
        """Multiply an expanded expectation by the variable m_mean_var."""
        out = {}
        for key, c in poly_dict.items():
            k2 = list(key)
            k2[mean_var] += 1
            out[tuple(k2)] = out.get(tuple(k2), 0.0) + c
        return out

    @staticmethod
    def combine(*weighted: tuple[float, dict]) -> dict:
        out: dict[tuple[int, ...], float] = {}
        for w, d in weighted:
            for key, c in d.items():
                out[key] = out.get(key, 0.0) + w * c
        return {k: v for k, v in out.items() if v != 0.0}

    def freeze(self, poly_dict: dict) -> MomentPoly:
        order = sorted(poly_dict)
        coeffs = np.array([poly_dict[k] for k in order], dtype=float)
        expo = (np.array(order, dtype=np.int64).reshape(len(order), self.n_vars)
                if order else np.zeros((0, self.n_vars), dtype=np.int64))
        return MomentPoly(self.n_vars, coeffs, expo)


class _Block:
    """Several MomentPolys evaluated in one shot."""

    def __init__(self, polys: list[MomentPoly], n_vars: int):
        self.n_rows = len(polys)
        rows, coeffs, expo = [], [], []
        for r, p in enumerate(polys):
            rows.extend([r] * len(p.coeffs))
            coeffs.append(p.coeffs)
            expo.append(p.expo)
        self.rows = np.array(rows, dtype=np.int64)
        self.coeffs = (np.concatenate(coeffs) if coeffs
                       else np.zeros(0))
        self.expo = (np.concatenate(expo, axis=0) if expo
                     else np.zeros((0, n_vars), dtype=np.int64))
        self._scatter = np.zeros((len(self.rows), self.n_rows))
        self._scatter[np.arange(len(self.rows)), self.rows] = 1.0

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        vals = (v[None, :] ** self.expo).prod(axis=1) * self.coeffs
        return np.bincount(self.rows, weights=vals, minlength=self.n_rows)

    def evaluate_batch(self, v: np.ndarray) -> np.ndarray:
        """Rows of v are packed (mean, cov) points; returns (len(v), n_rows)."""
        vals = (v[:, None, :] ** self.expo[None]).prod(axis=-1) * self.coeffs
        return vals @ self._scatter


class ClosedOdeRhs:
    """Precompiled closed moment equations for one SdeSpec."""

    def __init__(self, spec: SdeSpec):
        d = spec.dim
        self.dim = d
        self.iu = np.triu_indices(d)
        sym = _SymBuilder(d)

        def E(p: PolynomialMap) -> dict:
            return sym.expectation(p)

        def sub(d1: dict, d2: dict) -> dict:
            return sym.combine((1.0, d1), (-1.0, d2))

        a = spec.drift
        b = spec.diffusion
        div = [PolynomialMap.zero(d) for _ in range(d)]
        for i in range(d):
            for k in range(d):
                div[i] = div[i].add(b[i][k].derivative(k))

        # forward: dm_i = <a_i>;  dC_ij = <a_i x_j> + <a_j x_i>
        #          - m_i <a_j> - m_j <a_i> + <b_ij>
        Ea = [E(a[i]) for i in range(d)]
        fwd_polys = [sym.freeze(Ea[i]) for i in range(d)]
        for (i, j) in zip(*self.iu):
            i, j = int(i), int(j)
            dc = sym.combine(
                (1.0, E(a[i].mul_monomial(j))),
                (1.0, E(a[j].mul_monomial(i))),
                (-1.0, sym.expectation_times_mean(Ea[j], i)),
                (-1.0, sym.expectation_times_mean(Ea[i], j)),
                (1.0, E(b[i][j])),
            )
            fwd_polys.append(sym.freeze(dc))
        self._fwd = _Block(fwd_polys, sym.n_vars)

        # smoothing pieces, packed in one block:
        #   SA_i           = <a_i> - <div_i>
        #   SAX_ij         = <a_i x_j> - <div_i x_j>
        #   SB_ik          = <b_ik>
        #   SBX_(i,k,r)    = <b_ik x_r>
        #   SBXX_(p,q,k,r) = <b_pk x_q x_r>
        polys = []
        for i in range(d):
            polys.append(sym.freeze(sub(Ea[i], E(div[i]))))
        for i in range(d):
            for j in range(d):
                polys.append(sym.freeze(sub(E(a[i].mul_monomial(j)),
                                            E(div[i].mul_monomial(j)))))
        for i in range(d):
            for k in range(d):
                polys.append(sym.freeze(E(b[i][k])))
        for i in range(d):
            for k in range(d):
                for r in range(d):
                    polys.append(sym.freeze(E(b[i][k].mul_monomial(r))))
        for p_ in range(d):
            for q in range(d):
                for k in range(d):
                    for r in range(d):
                        polys.append(sym.freeze(
                            E(b[p_][k].mul_monomial(q).mul_monomial(r))))
        self._smb = _Block(polys, sym.n_vars)
        n0 = d
        n1 = n0 + d * d
        n2 = n1 + d * d
        n3 = n2 + d ** 3
        self._slices = (n0, n1, n2, n3)

    def pack(self, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
        return np.concatenate([mean, cov[self.iu]])

    def forward(self, mean: np.ndarray, cov: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
        d = self.dim
        vals = self._fwd.evaluate(self.pack(mean, cov))
        dmean = vals[:d]
        dcov = np.zeros((d, d))
        dcov[self.iu] = vals[d:]
        dcov[self.iu[1], self.iu[0]] = vals[d:]
        return dmean, dcov

    def forward_batch(self, means: np.ndarray, covs: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Forward derivatives for stacked (n, d) means and (n, d, d) covs."""
        d = self.dim
        n = len(means)
        v = np.concatenate([means, covs[:, self.iu[0], self.iu[1]]], axis=1)
        vals = self._fwd.evaluate_batch(v)
        dcovs = np.zeros((n, d, d))
        dcovs[:, self.iu[0], self.iu[1]] = vals[:, d:]
        dcovs[:, self.iu[1], self.iu[0]] = vals[:, d:]
        return vals[:, :d], dcovs

    def smoothing(self, mean_s: np.ndarray, cov_s: np.ndarray,
                  mean_fw: np.ndarray, prec_fw: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
        """Backward derivative given forward reference (mean_fw, C_fw^-1)."""
        d = self.dim
        n0, n1, n2, n3 = self._slices
        vals = self._smb.evaluate(self.pack(mean_s, cov_s))
        A = vals[:n0]
        AX = vals[n0:n1].reshape(d, d)
        B = vals[n1:n2].reshape(d, d)
        BX = vals[n2:n3].reshape(d, d, d)
        BXX = vals[n3:].reshape(d, d, d, d)   # (p, q, k, r)
        w = prec_fw @ mean_fw
        jf = prec_fw.ravel()
        dmean = A + BX.reshape(d, d * d) @ jf - B @ w
        T = (BXX.reshape(d * d, d * d) @ jf).reshape(d, d) \
            - np.einsum('pkq,k->pq', BX, w)
        dxx = AX + AX.T - B + T + T.T
        dcov = dxx - np.outer(mean_s, dmean) - np.outer(dmean, mean_s)
        return dmean, dcov


@lru_cache(maxsize=None)
def closed_rhs(spec: SdeSpec) -> ClosedOdeRhs:
    """Build (or fetch the cached) compiled moment equations for a spec."""
    return ClosedOdeRhs(spec)


def forward_rhs(spec: SdeSpec, m: GaussianMoments
                ) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative of (mean, cov) for the filtering-direction flow."""
    return closed_rhs(spec).forward(m.mean, m.cov)


def smoothing_rhs(spec: SdeSpec, m_s: GaussianMoments, m_fw: GaussianMoments
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative of the smoothed (mean, cov) given forward reference."""
    L = _chol(m_fw.cov, "forward covariance")
    Linv = np.linalg.inv(L)
    prec = Linv.T @ Linv
    return closed_rhs(spec).smoothing(m_s.mean, m_s.cov, m_fw.mean, prec)
