import numpy as np
import pandas as pd
import pytest

from src.analytics import BenchAnalytics, error_estandar


def _resultados():
    return pd.DataFrame({
        "estimador": ["KPV"] * 3 + ["KAP"] * 2 + ["OUTCOMENET"] * 4,
        "benchmark": ["noisy-proxy-1"] * 5 + ["att"] * 4,
        "objetivo": ["ATE"] * 5 + ["ATT"] * 4,
        "N": [500] * 9,
        "ancla": [np.nan] * 5 + [0.0, 0.0, 0.5, 0.5],
        "semilla": [0, 1, 2, 0, 1, 0, 1, 0, 1],
        "mse": [1.0, 2.0, 4.0, np.nan, np.nan, 0.5, 0.7, 0.1, np.nan],
        "estado": ["ok"] * 3 + ["error"] * 2 + ["ok", "ok", "ok", "error"],
    })


class TestErrorEstandar:

    def test_tres_valores(self):
        assert error_estandar([1.0, 2.0, 4.0]) == pytest.approx(np.std([1.0, 2.0, 4.0], ddof=1) / np.sqrt(3))

    def test_menos_de_dos_valores(self):
        assert np.isnan(error_estandar([1.0]))
        assert np.isnan(error_estandar([1.0, np.nan]))


class TestBenchAnalytics:

    def test_resumen_por_celda(self):
        resumen = BenchAnalytics(_resultados()).calcular_resumen()
        assert len(resumen) == 4
        kpv = resumen[resumen["estimador"] == "KPV"].iloc[0]
        assert kpv["media"] == pytest.approx(7.0 / 3.0)
        assert kpv["semillas"] == 3
        assert kpv["fallas"] == 0

    def test_anclas_nan_se_agrupan(self):
        resumen = BenchAnalytics(_resultados()).calcular_resumen()
        outcome = resumen[resumen["estimador"] == "OUTCOMENET"]
        assert outcome["ancla"].tolist() == [0.0, 0.5]
        fila = outcome[outcome["ancla"] == 0.5].iloc[0]
        assert fila["fallas"] == 1
        assert fila["media"] == pytest.approx(0.1)
        assert np.isnan(fila["error_estandar"])

    def test_celdas_fallidas(self):
        fallidas = BenchAnalytics(_resultados()).celdas_fallidas()
        assert fallidas["estimador"].tolist() == ["KAP"]
        assert np.isnan(fallidas.iloc[0]["media"])

    def test_sin_columna_ancla(self):
        df = _resultados().drop(columns="ancla").iloc[:3]
        resumen = BenchAnalytics(df).calcular_resumen()
        assert len(resumen) == 1

    def test_reporte(self):
        reporte = BenchAnalytics(_resultados()).generar_reporte()
        assert "noisy-proxy-1 (ATE)" in reporte
        assert "a′=+0.5" in reporte
        assert "✗ KAP" in reporte
        assert "(0/2 semillas)" in reporte

    def test_exportar_resumen(self, tmp_path):
        ruta = BenchAnalytics(_resultados()).exportar_resumen(tmp_path / "resumen.csv")
        contenido = ruta.read_bytes()
        assert b"\r" not in contenido
        assert len(pd.read_csv(ruta)) == 4
