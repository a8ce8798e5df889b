"""Independent reference implementations used only by the test suite.

Everything here is deliberately written against different primitives than
the package (Gauss-Jordan elimination instead of Cholesky, matrix
exponentials and discrete-time Kalman recursions instead of moment ODEs)
so that agreement is meaningful.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def gauss_jordan_inverse(mat: np.ndarray) -> np.ndarray:
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.asarray(mat, dtype=float).copy()
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < 1e-300:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def ou_transition(A: np.ndarray, b: np.ndarray, dt: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Exact discrete transition (F, Q) of dx = A x dt + b^(1/2) dW.

    Van Loan construction: exp([[A, b], [0, -A^T]] dt) has upper blocks
    [F, G] with Q = G F^T.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = A.shape[0]
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = A
    M[:d, d:] = b
    M[d:, d:] = -A.T
    E = expm(M * dt)
    F = E[:d, :d]
    Q = E[:d, d:] @ F.T
    return F, 0.5 * (Q + Q.T)


def ou_exact_moments(A, b, mean0, cov0, t: float
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form mean/cov of the linear SDE at time t from (mean0, cov0)."""
    F, Q = ou_transition(A, b, t)
    mean = F @ np.asarray(mean0, dtype=float)
    cov = F @ np.asarray(cov0, dtype=float) @ F.T + Q
    return mean, 0.5 * (cov + cov.T)


def kalman_filter_grid(F_list, Q_list, mean0, cov0, obs_map):
    """Kalman filter over a node sequence with optional observations.

    F_list/Q_list give the transition from node k to k+1 (length N).
    obs_map maps node index -> (y, R) with identity observation operator.
    Node 0 may carry an observation.  Returns post-update means/covs at
    every node, pre-update (predictive) means/covs, and the accumulated
    log marginal likelihood sum_i log N(y_i; m_pred, P_pred + R).
    """
    n_nodes = len(F_list) + 1
    d = len(mean0)
    means = np.zeros((n_nodes, d))
    covs = np.zeros((n_nodes, d, d))
    pre_means = np.zeros((n_nodes, d))
    pre_covs = np.zeros((n_nodes, d, d))
    loglik = 0.0
    m, P = np.asarray(mean0, dtype=float), np.asarray(cov0, dtype=float)
    for k in range(n_nodes):
        if k > 0:
            F, Q = F_list[k - 1], Q_list[k - 1]
            m = F @ m
            P = F @ P @ F.T + Q
        pre_means[k], pre_covs[k] = m, P
        if k in obs_map:
            y, R = obs_map[k]
            S = P + R
            Sinv = gauss_jordan_inverse(S)
            innov = y - m
            K = P @ Sinv
            m = m + K @ innov
            P = P - K @ P
            P = 0.5 * (P + P.T)
            sign, logdet = np.linalg.slogdet(S)
            assert sign > 0
            loglik += -0.5 * (innov @ Sinv @ innov + logdet
                              + d * np.log(2.0 * np.pi))
        means[k], covs[k] = m, P
    return means, covs, pre_means, pre_covs, loglik


def rts_smoother_grid(F_list, Q_list, means, covs):
    """Fixed-interval RTS smoother over filtered node marginals."""
    n_nodes = len(means)
    sm = means.copy()
    sP = covs.copy()
    for k in range(n_nodes - 2, -1, -1):
        F, Q = F_list[k], Q_list[k]
        m_pred = F @ means[k]
        P_pred = F @ covs[k] @ F.T + Q
        G = covs[k] @ F.T @ gauss_jordan_inverse(P_pred)
        sm[k] = means[k] + G @ (sm[k + 1] - m_pred)
        sP[k] = covs[k] + G @ (sP[k + 1] - P_pred) @ G.T
        sP[k] = 0.5 * (sP[k] + sP[k].T)
    return sm, sP


def linear_gaussian_reference(A, b, mean0, cov0, t0, t1, n_steps,
                              obs_times, obs_values, R):
    """Exact filtered/smoothed node marginals and log-likelihood.

    Builds exact transitions per grid cell and runs the discrete
    filter/smoother above with observations at their snapped nodes.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    dt = (t1 - t0) / n_steps
    F, Q = ou_transition(A, b, dt)
    F_list = [F] * n_steps
    Q_list = [Q] * n_steps
    obs_map = {}
    for t, y in zip(obs_times, obs_values):
        k = int(round((t - t0) / dt))
        obs_map[k] = (np.asarray(y, dtype=float), np.asarray(R, dtype=float))
    means, covs, pre_m, pre_P, loglik = kalman_filter_grid(
        F_list, Q_list, mean0, cov0, obs_map)
    sm, sP = rts_smoother_grid(F_list, Q_list, means, covs)
    return {
        "filtered_means": means, "filtered_covs": covs,
        "pre_means": pre_m, "pre_covs": pre_P,
        "smoothed_means": sm, "smoothed_covs": sP,
        "loglik": loglik,
    }
