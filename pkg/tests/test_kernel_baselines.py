import numpy as np
import pandas as pd
import pytest
import torch

from src.dgp import generar
from src.errors import ConfigurationError, DataError, ShapeError, StateError, ValidationError
from src.ingestion import ProxyDataset
from src.kernel_baselines import (KpvModel, drkpv_curve, kap_fit, kpv_fit, median_heuristic,
                                  pesos_xi, rbf_gram)


def _folds(n1=8, n2=8, semilla=0, benchmark="noisy-proxy-1"):
    datos = generar(benchmark, n1 + n2, semilla=semilla)
    return datos.subconjunto(np.arange(n1)), datos.subconjunto(np.arange(n1, n1 + n2))


def _duplicar(datos):
    return ProxyDataset(pd.concat([datos.df, datos.df], ignore_index=True), datos.meta)


def _rbf(x, y, sigma):
    return float(np.exp(-np.sum((np.asarray(x) - np.asarray(y)) ** 2) / (2.0 * sigma ** 2)))


class TestKernels:

    def test_rbf_gram_valores(self):
        K = rbf_gram(np.array([[0.0], [1.0]]), np.array([[0.0], [2.0]]), 1.0)
        assert K[0, 0] == 1.0
        assert K[1, 1] == pytest.approx(np.exp(-0.5))
        assert K[0, 1] == pytest.approx(np.exp(-2.0))

    def test_rbf_gram_dimensiones_distintas(self):
        with pytest.raises(ShapeError):
            rbf_gram(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)

    def test_rbf_gram_ancho_no_positivo(self):
        with pytest.raises(ConfigurationError):
            rbf_gram(np.zeros((2, 1)), np.zeros((2, 1)), 0.0)

    def test_median_heuristic(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert median_heuristic(X) == 2.0

    def test_median_heuristic_puntos_repetidos(self):
        assert median_heuristic(np.ones((4, 2))) == 1.0


class TestKpv:

    def test_residuos_de_los_sistemas(self):
        d1, d2 = _folds(20, 20)
        modelo = kpv_fit(d1, d2)
        assert modelo.residuos["B"] < 1e-9
        assert modelo.residuos["alfa"] < 1e-9

    def test_alfa_es_estacionario_para_la_segunda_etapa(self):
        d1, d2 = _folds(12, 15)
        modelo = kpv_fit(d1, d2, lam1=1e-2, lam2=1e-2)
        M, alfa, y, m = modelo.M, modelo.alfa, modelo.y2, len(d2)
        # (MᵀM/m + λ₂M)α = Mᵀỹ/m
        residuo = (M.T @ M / m + modelo.lam2 * M) @ alfa - M.T @ y / m
        assert np.linalg.norm(residuo) <= 1e-6 * np.linalg.norm(M.T @ y / m)

    def test_h_contra_suma_explicita(self):
        d1, d2 = _folds(6, 7)
        modelo = kpv_fit(d1, d2, lam1=1e-2, lam2=1e-2)
        sa, sw = modelo.anchos["a"], modelo.anchos["w"]
        a_eval, w_eval = np.array([0.1, 0.7]), np.array([[0.4], [0.9]])
        for a, w, h in zip(a_eval, w_eval, modelo.h(a_eval, w_eval)):
            explicito = sum(
                modelo.alfa[j] * _rbf(modelo.a2[j], a, sa)
                * sum(modelo.B[i, j] * _rbf(modelo.w1[i], w, sw) for i in range(len(d1)))
                for j in range(len(d2))
            )
            assert h == pytest.approx(explicito, rel=1e-9, abs=1e-12)

    def test_curva_es_promedio_de_h(self):
        d1, d2 = _folds(10, 10)
        modelo = kpv_fit(d1, d2)
        grilla = np.linspace(0.2, 0.8, 5)
        curva = modelo.curva(grilla, d2)
        W = d2.bloque("w")
        esperado = [np.mean(modelo.h(np.full(len(W), a), W)) for a in grilla]
        assert np.allclose(curva.valores, esperado, rtol=1e-10, atol=1e-12)
        assert np.allclose(modelo.h_grilla(grilla, W).mean(axis=1), esperado, rtol=1e-10, atol=1e-12)
        assert curva.etiqueta == "KPV"

    def test_filas_duplicadas_no_cambian_la_curva(self):
        d1, d2 = _folds(10, 10, semilla=1)
        grilla = np.linspace(0.2, 0.8, 7)
        original = kpv_fit(d1, d2, lam1=1e-2, lam2=1e-2)
        duplicado = KpvModel(1e-2, 1e-2, anchos=original.anchos).ajustar(_duplicar(d1), _duplicar(d2))
        assert np.allclose(duplicado.curva(grilla, _duplicar(d2)).valores,
                           original.curva(grilla, d2).valores, rtol=1e-6, atol=1e-8)

    def test_con_covariables_requiere_x(self):
        d1, d2 = _folds(10, 10, benchmark="highdim-ate")
        modelo = kpv_fit(d1, d2)
        assert modelo.tiene_x
        with pytest.raises(ShapeError):
            modelo.h(d2.bloque("a"), d2.bloque("w"))
        assert modelo.h(d2.bloque("a"), d2.bloque("w"), d2.bloque("x")).shape == (10,)

    def test_sin_ajustar(self):
        with pytest.raises(StateError):
            KpvModel().h(np.zeros(1), np.zeros((1, 1)))

    def test_lambda_no_positivo(self):
        with pytest.raises(ConfigurationError):
            KpvModel(lam1=-1.0)


def _objetivo_kap(modelo, d1, Theta):
    """Objetivo de segunda etapa de KAP en coordenadas Θ, armado por fuerza bruta"""
    n, m = len(d1), len(modelo.a2)
    KA1 = rbf_gram(modelo.a1, modelo.a1, modelo.anchos["a"])
    KW1 = rbf_gram(modelo.w1, modelo.w1, modelo.anchos["w"])
    R = KA1 * KW1 + n * modelo.lam1 * np.eye(n)
    KA12 = rbf_gram(modelo.a1, modelo.a2, modelo.anchos["a"])
    KW12 = rbf_gram(modelo.w1, modelo.w2, modelo.anchos["w"])
    # b[j, k] = R⁻¹(K_Ā ã_j ⊙ K_W̄ w̃_k)
    b = np.stack([np.linalg.solve(R, (KA12[:, [j]] * KW12)).T for j in range(m)])
    KZ = torch.as_tensor(rbf_gram(modelo.z1, modelo.z1, modelo.anchos["z"]))
    KA2 = torch.as_tensor(rbf_gram(modelo.a2, modelo.a2, modelo.anchos["a"]))
    e = torch.einsum("lp,jkp->jkl", KZ, torch.as_tensor(b))
    G = torch.einsum("jl,jkl->jk", KA2 @ Theta, e)
    diagonal = torch.diagonal(G)
    cruzados = G.sum() - diagonal.sum()
    return ((diagonal ** 2).mean() - 2.0 * cruzados / (m * (m - 1))
            + modelo.lam2 * torch.trace(Theta.T @ KA2 @ Theta @ KZ))


class TestKap:

    def test_residuos_de_los_sistemas(self):
        d1, d2 = _folds(20, 20)
        modelo = kap_fit(d1, d2)
        assert max(modelo.residuos.values()) < 1e-9

    def test_coeficientes_minimizan_el_objetivo(self):
        d1, d2 = _folds(8, 8, semilla=2)
        modelo = kap_fit(d1, d2, lam1=1e-2, lam2=1e-2)
        optimo = torch.as_tensor(modelo.coeficientes()).clone().requires_grad_(True)
        valor = _objetivo_kap(modelo, d1, optimo)
        (grad,) = torch.autograd.grad(valor, optimo)

        cero = torch.zeros_like(optimo).requires_grad_(True)
        (grad_cero,) = torch.autograd.grad(_objetivo_kap(modelo, d1, cero), cero)
        assert grad.norm().item() <= 1e-6 * grad_cero.norm().item()

        g = torch.Generator().manual_seed(0)
        with torch.no_grad():
            for _ in range(10):
                delta = 1e-2 * torch.randn(optimo.shape, generator=g, dtype=optimo.dtype)
                assert _objetivo_kap(modelo, d1, optimo + delta).item() >= valor.item() - 1e-12

    def test_phi_grilla_coincide_con_phi(self):
        d1, d2 = _folds(10, 10)
        modelo = kap_fit(d1, d2)
        grilla = np.array([0.3, 0.6])
        Z = d2.bloque("z")[:4]
        tabla = modelo.phi_grilla(grilla, Z)
        for g, a in enumerate(grilla):
            assert np.allclose(tabla[g], modelo.phi(np.full(4, a), Z))

    def test_covariables_no_soportadas(self):
        d1, d2 = _folds(10, 10, benchmark="highdim-ate")
        with pytest.raises(ValidationError):
            kap_fit(d1, d2)

    def test_segundo_fold_muy_chico(self):
        d1, d2 = _folds(10, 1)
        with pytest.raises(DataError):
            kap_fit(d1, d2)


class TestDrkpv:

    def test_descomposicion(self):
        d1, d2 = _folds(15, 15)
        kpv, kap = kpv_fit(d1, d2), kap_fit(d1, d2)
        grilla = np.linspace(0.2, 0.8, 6)
        xi = pesos_xi(d2.bloque("a"), grilla, kap.anchos["a"])
        assert xi.shape == (6, 15)
        cruzado = (xi * kap.phi_grilla(grilla, d2.bloque("z")) * kpv.h_grilla(grilla, d2.bloque("w"))).sum(axis=1)
        dr = drkpv_curve(kpv, kap, d2, grilla)
        esperado = kpv.curva(grilla, d2).valores + kap.curva(grilla).valores - cruzado
        assert np.allclose(dr.valores, esperado)
        assert dr.etiqueta == "DRKPV"

    def test_covariables_no_soportadas(self):
        d1, d2 = _folds(10, 10, benchmark="highdim-ate")
        d1s, d2s = _folds(10, 10)
        with pytest.raises(ValidationError):
            drkpv_curve(kpv_fit(d1, d2), kap_fit(d1s, d2s), d2s, np.array([0.5]))

    def test_tercer_split_vacio(self):
        d1, d2 = _folds(10, 10)
        with pytest.raises(DataError):
            drkpv_curve(kpv_fit(d1, d2), kap_fit(d1, d2), d2.subconjunto(np.array([], dtype=int)), np.array([0.5]))
