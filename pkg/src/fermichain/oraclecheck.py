"""Equivalence suite: single-particle solvers against the exact Fock oracle."""

from __future__ import annotations

import math
import time

import numpy as np

from .diagnostics import hubbard_chain_oracle, oracle_spdm_at
from .fulldynamics import full_spdm_at
from .markov import contact_fillings, effective_rate, stationary_markov
from .model import ContactSpec, ModelParams


def reference_oracle_params(gamma: float = 0.1, delta_mu: float = 0.2) -> ModelParams:
    """Smallest two-contact system the Fock oracle handles comfortably."""
    return ModelParams(
        L=2,
        M=3,
        J_s=1.0,
        J_r=1.0,
        epsilon=0.4,
        gamma=gamma,
        contacts=(ContactSpec(delta_mu / 2, 0.0), ContactSpec(-delta_mu / 2, 0.0)),
    )


def check_full_vs_oracle(t_final: float = 50.0, tol: float = 1e-6, verbose: bool = False):
    """Composite correlation matrices of both routes at a fixed time."""
    params = reference_oracle_params()
    start = time.perf_counter()
    rho_exact = oracle_spdm_at(params, t_final)
    rho_spdm = full_spdm_at(params, t_final).matrix
    err = float(np.max(np.abs(rho_exact - rho_spdm)))
    elapsed = time.perf_counter() - start
    ok = err <= tol
    if verbose:
        print(
            f"[{'PASS' if ok else 'FAIL'}] composite dynamics vs Fock oracle: "
            f"max entry deviation {err:.3e} (tol {tol:.0e}, t={t_final:g}, {elapsed:.1f}s)"
        )
    return ok, err


def check_markov_vs_hubbard(tol: float = 1e-8, verbose: bool = False):
    """Memoryless chain solver against the edge-driven many-body chain."""
    params = ModelParams(
        L=3,
        M=3,
        J_s=1.0,
        J_r=1.0,
        epsilon=0.4,
        gamma=0.16,
        contacts=(ContactSpec(0.25, math.inf), ContactSpec(-0.25, math.inf)),
    )
    gt = effective_rate(params.epsilon, params.gamma)
    n1, nL = contact_fillings(params)
    rho_mb = hubbard_chain_oracle(params.L, params.J_s, gt, n1, nL)
    rho_sp = stationary_markov(params).rho_s
    err = float(np.max(np.abs(rho_mb - rho_sp)))
    ok = err <= tol
    if verbose:
        print(
            f"[{'PASS' if ok else 'FAIL'}] memoryless chain vs edge-driven Fock oracle: "
            f"max entry deviation {err:.3e} (tol {tol:.0e})"
        )
    return ok, err


def run_oracle_checks(t_final: float = 50.0, verbose: bool = True) -> bool:
    ok1, _ = check_full_vs_oracle(t_final=t_final, verbose=verbose)
    ok2, _ = check_markov_vs_hubbard(verbose=verbose)
    return ok1 and ok2
