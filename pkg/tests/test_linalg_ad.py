import pytest
import torch
from torch.autograd import gradcheck

from src.errors import ConfigurationError, DegenerateBatchError, NumericalError, ShapeError
from src.linalg_ad import (DTYPE, batchnorm, como_matriz, elementwise, kron_filas, kron_vec,
                           layernorm, matmul, solve_spd)


def _spd(d, semilla=0):
    g = torch.Generator().manual_seed(semilla)
    M = torch.randn(d, d, generator=g, dtype=DTYPE)
    return M @ M.T + d * torch.eye(d, dtype=DTYPE)


class TestProductos:

    def test_matmul_chequea_dimensiones(self):
        with pytest.raises(ShapeError):
            matmul(torch.ones(2, 3, dtype=DTYPE), torch.ones(2, 3, dtype=DTYPE))

    def test_kron_vec_orden_fila_mayor(self):
        u = torch.tensor([1.0, 2.0], dtype=DTYPE)
        v = torch.tensor([3.0, 4.0, 5.0], dtype=DTYPE)
        esperado = torch.tensor([3.0, 4.0, 5.0, 6.0, 8.0, 10.0], dtype=DTYPE)
        assert torch.equal(kron_vec(u, v), esperado)

    def test_kron_vec_acepta_columnas(self):
        u = torch.tensor([[1.0], [2.0]], dtype=DTYPE)
        v = torch.tensor([3.0], dtype=DTYPE)
        assert torch.equal(kron_vec(u, v), torch.tensor([3.0, 6.0], dtype=DTYPE))

    def test_kron_filas_coincide_con_kron_vec(self):
        g = torch.Generator().manual_seed(1)
        U = torch.randn(4, 2, generator=g, dtype=DTYPE)
        V = torch.randn(4, 3, generator=g, dtype=DTYPE)
        K = kron_filas(U, V)
        assert K.shape == (4, 6)
        for i in range(4):
            assert torch.allclose(K[i], kron_vec(U[i], V[i]))

    def test_kron_filas_filas_distintas(self):
        with pytest.raises(ShapeError):
            kron_filas(torch.ones(3, 2, dtype=DTYPE), torch.ones(2, 2, dtype=DTYPE))

    def test_como_matriz_vector_a_columna(self):
        assert como_matriz([1.0, 2.0, 3.0]).shape == (3, 1)


class TestSolveSpd:

    def test_resuelve_sistema(self):
        A = _spd(5)
        B = torch.randn(5, 2, generator=torch.Generator().manual_seed(2), dtype=DTYPE)
        X = solve_spd(A, B)
        assert torch.allclose(A @ X, B, atol=1e-10)

    def test_vector_conserva_forma(self):
        A = _spd(4)
        b = torch.ones(4, dtype=DTYPE)
        x = solve_spd(A, b)
        assert x.shape == (4,)
        assert torch.allclose(A @ x, b, atol=1e-10)

    def test_gradiente_contra_diferencias_finitas(self):
        A = _spd(4).requires_grad_(True)
        B = torch.randn(4, 2, generator=torch.Generator().manual_seed(3), dtype=DTYPE, requires_grad=True)
        # A se simetriza adentro: el chequeo usa entradas simétricas
        assert gradcheck(lambda M, R: solve_spd(0.5 * (M + M.T), R), (A, B), eps=1e-6, atol=1e-6, rtol=1e-4)

    def test_no_definida_positiva_reporta_pivote(self):
        A = torch.diag(torch.tensor([1.0, 2.0, -1.0], dtype=DTYPE))
        with pytest.raises(NumericalError) as exc:
            solve_spd(A, torch.ones(3, dtype=DTYPE))
        assert exc.value.pivote == 2

    def test_forma_incompatible(self):
        with pytest.raises(ShapeError):
            solve_spd(_spd(3), torch.ones(4, dtype=DTYPE))


class TestElementwise:

    def test_logcosh_estable_para_valores_grandes(self):
        x = torch.tensor([0.0, 1.0, 800.0, -800.0], dtype=DTYPE)
        y = elementwise("logcosh", x)
        assert torch.isfinite(y).all()
        assert torch.allclose(y[:2], torch.log(torch.cosh(x[:2])))
        assert y[2].item() == pytest.approx(800.0 - torch.log(torch.tensor(2.0)).item())

    def test_dropout_identidad_fuera_de_entrenamiento(self):
        x = torch.ones(3, 2, dtype=DTYPE)
        assert torch.equal(elementwise("dropout", x, tasa=0.5, entrenamiento=False), x)

    def test_dropout_escala_la_mascara(self):
        x = torch.ones(2, 2, dtype=DTYPE)
        mascara = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=DTYPE)
        y = elementwise("dropout", x, mascara=mascara, tasa=0.5, entrenamiento=True)
        assert torch.equal(y, 2.0 * mascara)

    def test_dropout_sin_mascara_falla(self):
        with pytest.raises(ConfigurationError):
            elementwise("dropout", torch.ones(2, dtype=DTYPE), tasa=0.1, entrenamiento=True)

    def test_operacion_desconocida(self):
        with pytest.raises(ConfigurationError):
            elementwise("softsign", torch.ones(2, dtype=DTYPE))

    def test_gelu_gradcheck(self):
        x = torch.linspace(-2.0, 2.0, 7, dtype=DTYPE).requires_grad_(True)
        assert gradcheck(lambda t: elementwise("gelu", t), (x,), eps=1e-6, atol=1e-6, rtol=1e-4)


class TestNormalizaciones:

    def test_layernorm_media_cero_varianza_uno(self):
        x = torch.randn(5, 6, generator=torch.Generator().manual_seed(4), dtype=DTYPE)
        y = layernorm(x, eps=0.0)
        assert torch.allclose(y.mean(dim=1), torch.zeros(5, dtype=DTYPE), atol=1e-12)
        assert torch.allclose(y.var(dim=1, unbiased=False), torch.ones(5, dtype=DTYPE), atol=1e-10)

    def test_layernorm_gradcheck(self):
        x = torch.randn(3, 4, generator=torch.Generator().manual_seed(5), dtype=DTYPE, requires_grad=True)
        assert gradcheck(layernorm, (x,), eps=1e-6, atol=1e-6, rtol=1e-4)

    def test_batchnorm_lote_unitario_en_entrenamiento(self):
        media, var = torch.zeros(3, dtype=DTYPE), torch.ones(3, dtype=DTYPE)
        with pytest.raises(DegenerateBatchError):
            batchnorm(torch.ones(1, 3, dtype=DTYPE), media, var, "train")

    def test_batchnorm_eval_usa_estadisticas_guardadas(self):
        media = torch.tensor([1.0, -1.0], dtype=DTYPE)
        var = torch.tensor([4.0, 1.0], dtype=DTYPE)
        x = torch.tensor([[3.0, 0.0]], dtype=DTYPE)
        y = batchnorm(x, media, var, "eval", eps=0.0)
        assert torch.allclose(y, torch.tensor([[1.0, 1.0]], dtype=DTYPE))

    def test_batchnorm_actualiza_estadisticas_corrientes(self):
        media, var = torch.zeros(1, dtype=DTYPE), torch.ones(1, dtype=DTYPE)
        x = torch.tensor([[1.0], [3.0]], dtype=DTYPE)
        batchnorm(x, media, var, "train", momentum=0.5)
        assert media.item() == pytest.approx(1.0)

    def test_modo_desconocido(self):
        with pytest.raises(ConfigurationError):
            batchnorm(torch.ones(2, 1, dtype=DTYPE), torch.zeros(1, dtype=DTYPE),
                      torch.ones(1, dtype=DTYPE), "test")
