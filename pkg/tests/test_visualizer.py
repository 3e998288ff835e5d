import numpy as np
import pandas as pd
import pytest

from src.visualizer import PLOTLY_AVAILABLE, CurveVisualizer, generar_visualizaciones_completas, svg_mse_vs_n


def _resumen(ns=(500, 1000)):
    filas = [{"estimador": est, "N": n, "media": media / n}
             for est, media in (("KPV", 3.0), ("KAP", 2.0)) for n in ns]
    return pd.DataFrame(filas)


class TestSvg:

    def test_bytes_reproducibles(self, tmp_path):
        a = svg_mse_vs_n(_resumen(), tmp_path / "a.svg", "noisy-proxy-1")
        b = svg_mse_vs_n(_resumen(), tmp_path / "b.svg", "noisy-proxy-1")
        contenido = a.read_bytes()
        assert contenido == b.read_bytes()
        assert b"<svg" in contenido

    def test_medias_no_positivas_se_omiten(self, tmp_path):
        resumen = _resumen()
        resumen.loc[0, "media"] = np.nan
        resumen.loc[1, "media"] = 0.0
        assert svg_mse_vs_n(resumen, tmp_path / "r.svg").exists()

    def test_un_solo_n(self, tmp_path):
        assert generar_visualizaciones_completas(_resumen(ns=(500,)), None, tmp_path) == []


@pytest.mark.skipif(not PLOTLY_AVAILABLE, reason="plotly no instalado")
class TestCurvas:

    def test_un_panel_por_ancla(self):
        curvas = pd.DataFrame({
            "estimador": ["KPV"] * 4, "ancla": [0.0, 0.0, 0.5, 0.5], "a": [0.1, 0.2, 0.1, 0.2],
            "v": [np.nan] * 4, "valor": [1.0, 2.0, 3.0, 4.0], "oraculo": [1.1, 2.1, 3.1, 4.1],
        })
        fig = CurveVisualizer(curvas, "att").crear_figura()
        assert len(fig.data) == 4
