import pytest
import torch
from torch.autograd import gradcheck

from src.errors import ConfigurationError, ShapeError
from src.linalg_ad import DTYPE
from src.proximal import (ProxRidgeProblem, aux_first_stage, prox_head_solve, prox_ridge_solve,
                          residuo_normal)


def _problema(n=30, d=4, k=3, lam=0.1, semilla=0):
    g = torch.Generator().manual_seed(semilla)
    Phi = torch.randn(n, d, generator=g, dtype=DTYPE)
    T = torch.randn(n, k, generator=g, dtype=DTYPE)
    prev = torch.randn(d, k, generator=g, dtype=DTYPE)
    return ProxRidgeProblem(Phi, T, lam, prev)


class TestProxRidge:

    def test_residuo_de_ecuaciones_normales(self):
        problema = _problema()
        V = prox_ridge_solve(problema)
        assert residuo_normal(problema, V) < 1e-9

    def test_gradiente_del_objetivo_se_anula(self):
        problema = _problema(semilla=1)
        V = prox_ridge_solve(problema).detach().requires_grad_(True)
        (grad,) = torch.autograd.grad(problema.objetivo(V), V)
        assert grad.abs().max().item() < 1e-9

    def test_minimiza_contra_perturbaciones(self):
        problema = _problema(semilla=2)
        V = prox_ridge_solve(problema)
        base = problema.objetivo(V).item()
        g = torch.Generator().manual_seed(3)
        for _ in range(10):
            delta = 1e-3 * torch.randn(V.shape, generator=g, dtype=DTYPE)
            assert problema.objetivo(V + delta).item() >= base

    def test_lambda_grande_vuelve_al_previo(self):
        problema = _problema(lam=1e8)
        assert torch.allclose(prox_ridge_solve(problema), problema.prev, atol=1e-6)

    def test_lambda_no_positivo(self):
        with pytest.raises(ConfigurationError):
            _problema(lam=0.0)

    def test_previo_con_forma_incorrecta(self):
        problema = _problema()
        with pytest.raises(ShapeError):
            ProxRidgeProblem(problema.Phi, problema.T, 0.1, torch.zeros(4, 2, dtype=DTYPE))

    def test_gradiente_hacia_phi_t_y_previo(self):
        problema = _problema(n=6, d=3, k=2)
        entradas = tuple(t.clone().requires_grad_(True) for t in (problema.Phi, problema.T, problema.prev))

        def resolver(Phi, T, prev):
            return prox_ridge_solve(ProxRidgeProblem(Phi, T, 0.5, prev))

        assert gradcheck(resolver, entradas, eps=1e-6, atol=1e-6, rtol=1e-4)


class TestEtapas:

    def test_cabeza_escalar(self):
        g = torch.Generator().manual_seed(4)
        Psi = torch.randn(40, 5, generator=g, dtype=DTYPE)
        y = torch.randn(40, generator=g, dtype=DTYPE)
        h = prox_head_solve(Psi, y, 0.01, torch.zeros(5, dtype=DTYPE))
        assert h.shape == (5,)
        esperado = torch.linalg.solve(Psi.T @ Psi + 40 * 0.01 * torch.eye(5, dtype=DTYPE), Psi.T @ y)
        assert torch.allclose(h, esperado, atol=1e-10)

    def test_primera_etapa_auxiliar_solo_propaga_a_t(self):
        problema = _problema(n=12, d=3, k=2)
        Phi1 = problema.Phi.clone().requires_grad_(True)
        T = problema.T.clone().requires_grad_(True)
        V = aux_first_stage(Phi1, T, 0.1, problema.prev)
        V.sum().backward()
        assert Phi1.grad is None
        assert T.grad is not None and torch.isfinite(T.grad).all()
