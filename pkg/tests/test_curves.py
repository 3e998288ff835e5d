import numpy as np
import pytest

from src.curves import DoseResponseCurve, OracleCurve, causal_mse, grilla_cate, grilla_tratamiento
from src.errors import DataError, GridMismatchError, ShapeError


def _oraculo():
    grilla = np.linspace(-1.0, 1.0, 11)
    return OracleCurve(grilla, np.sin(grilla))


class TestCausalMse:

    def test_curva_igual_al_oraculo(self):
        ref = _oraculo()
        assert causal_mse(DoseResponseCurve(ref.grilla, ref.valores), ref) == 0.0

    def test_desplazamiento_constante(self):
        ref = _oraculo()
        curva = DoseResponseCurve(ref.grilla, ref.valores + 0.3)
        assert causal_mse(curva, ref) == pytest.approx(0.09, abs=1e-12)

    def test_invariante_al_orden_de_la_grilla(self):
        ref = _oraculo()
        rng = np.random.default_rng(0)
        curva = DoseResponseCurve(ref.grilla, ref.valores + rng.normal(size=11))
        perm = rng.permutation(11)
        mse = causal_mse(curva, ref)
        mse_perm = causal_mse(DoseResponseCurve(curva.grilla[perm], curva.valores[perm]),
                              OracleCurve(ref.grilla[perm], ref.valores[perm]))
        assert mse_perm == pytest.approx(mse, rel=1e-12)

    def test_grillas_distintas(self):
        ref = _oraculo()
        with pytest.raises(GridMismatchError):
            causal_mse(DoseResponseCurve(ref.grilla + 0.01, ref.valores), ref)


class TestCurvas:

    def test_largos_distintos(self):
        with pytest.raises(ShapeError):
            DoseResponseCurve(np.zeros(3), np.zeros(4))

    def test_oraculo_no_finito(self):
        with pytest.raises(DataError):
            OracleCurve(np.zeros(2), np.array([0.0, np.nan]))

    def test_frame_cate(self):
        curva = DoseResponseCurve(np.array([[1.0, 0.1], [1.0, 0.2]]), np.array([3.0, 4.0]))
        df = curva.a_frame()
        assert list(df.columns) == ["a", "v", "valor", "ancla"]
        assert df["v"].tolist() == [0.1, 0.2]


class TestGrillas:

    def test_percentiles_por_defecto(self):
        a = np.arange(1001, dtype=np.float64)
        grilla = grilla_tratamiento(a)
        assert len(grilla) == 100
        assert grilla[0] == pytest.approx(25.0)
        assert grilla[-1] == pytest.approx(975.0)
        assert np.all(np.diff(grilla) > 0)

    def test_grilla_cate_producto(self):
        v = np.linspace(-0.5, 0.5, 200)
        grilla = grilla_cate(v, valores_a=[0.0, 1.0], n=5)
        assert grilla.shape == (10, 2)
        assert set(grilla[:, 0]) == {0.0, 1.0}

    def test_sin_tratamientos(self):
        with pytest.raises(DataError):
            grilla_tratamiento(np.array([]))
