"""
Problemas de ridge proximal en forma cerrada

Convención: las filas de Phi son muestras (n x d). El problema

    min_V (1/n) ||T - Phi V||^2 + lam ||V - prev||^2

tiene solución V = (Phi^T Phi + n lam I)^{-1} (Phi^T T + n lam prev).
"""

import sys
from dataclasses import dataclass
from pathlib import Path

import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import NUMERICO

from .errors import ConfigurationError, ShapeError
from .linalg_ad import solve_spd


@dataclass
class ProxRidgeProblem:
    Phi: torch.Tensor
    T: torch.Tensor
    lam: float
    prev: torch.Tensor

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigurationError(f"lambda debe ser positivo: {self.lam}")
        if self.Phi.dim() != 2:
            raise ShapeError("Phi debe ser una matriz n x d")
        n, d = self.Phi.shape
        if self.T.shape[0] != n:
            raise ShapeError(f"T tiene {self.T.shape[0]} filas y Phi {n}")
        k = self.T.shape[1] if self.T.dim() == 2 else 1
        esperado = (d, k) if self.T.dim() == 2 else (d,)
        if tuple(self.prev.shape) != esperado:
            raise ShapeError(f"prev tiene forma {tuple(self.prev.shape)}, se esperaba {esperado}")

    def sistema(self):
        """Matriz y lado derecho de las ecuaciones normales (sin jitter)"""
        n, d = self.Phi.shape
        G = self.Phi.T @ self.Phi
        A = G + n * self.lam * torch.eye(d, dtype=G.dtype)
        B = self.Phi.T @ self.T + n * self.lam * self.prev
        return A, B

    def objetivo(self, V):
        n = self.Phi.shape[0]
        residuo = self.T - self.Phi @ V
        return (residuo ** 2).sum() / n + self.lam * ((V - self.prev) ** 2).sum()


def prox_ridge_solve(problema):
    """
    Minimizador exacto del ridge proximal

    Se suma un jitter de 1e-12 * traza / d a la diagonal. El gradiente fluye
    hacia Phi, T y prev.
    """
    A, B = problema.sistema()
    d = A.shape[0]
    jitter = NUMERICO["jitter_relativo"] * float(torch.trace(A).detach()) / d
    A = A + jitter * torch.eye(d, dtype=A.dtype)
    return solve_spd(A, B)


def residuo_normal(problema, V):
    """Residuo relativo de las ecuaciones normales en V"""
    A, B = problema.sistema()
    n = problema.Phi.shape[0]
    escala = torch.linalg.norm(problema.Phi.T @ problema.T) + n * problema.lam * torch.linalg.norm(problema.prev)
    return float(torch.linalg.norm(A @ V - B) / escala.clamp_min(1e-300))


def aux_first_stage(Phi1, T, lam, V_persistente):
    """
    Primera etapa auxiliar sobre el lote de segunda etapa

    El featurizer de primera etapa se trata como constante; el gradiente fluye
    hacia T (las features del proxy que se está embebiendo).
    """
    return prox_ridge_solve(ProxRidgeProblem(Phi1.detach(), T, lam, V_persistente.detach()))


def prox_head_solve(Psi, y, lam, prev):
    """Cabeza de segunda etapa en forma cerrada para pérdida cuadrática"""
    return prox_ridge_solve(ProxRidgeProblem(Psi, y, lam, prev))
