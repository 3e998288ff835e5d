"""
Módulo de análisis de resultados del bench
Agrega el MSE causal por celda (estimador, benchmark, objetivo, N, ancla)
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Importar configuración
sys.path.append(str(Path(__file__).parent.parent))
from config import OUTPUTS_DIR, REPORTES

CLAVES_CELDA = ["estimador", "benchmark", "objetivo", "N", "ancla"]


def error_estandar(valores):
    """Desvío muestral / √(cantidad); NaN con menos de dos valores"""
    valores = np.asarray(valores, dtype=np.float64)
    valores = valores[np.isfinite(valores)]
    if valores.size < 2:
        return float("nan")
    return float(valores.std(ddof=1) / np.sqrt(valores.size))


class BenchAnalytics:
    """
    Analizador de resultados por semilla
    """

    def __init__(self, resultados):
        """
        Inicializa el analizador

        Args:
            resultados: DataFrame largo con columnas estimador, benchmark, objetivo,
                N, ancla, semilla, mse, estado
        """
        self.resultados = resultados.copy()
        if "ancla" not in self.resultados.columns:
            self.resultados["ancla"] = np.nan
        self.resumen = None

    def calcular_resumen(self):
        """
        Media, error estándar y fallas por celda

        Returns:
            DataFrame ordenado por las claves de celda
        """
        filas = []
        grupos = self.resultados.groupby(CLAVES_CELDA, dropna=False, sort=True)
        for claves, grupo in grupos:
            ok = grupo[grupo["estado"] == "ok"]["mse"].to_numpy(dtype=np.float64)
            filas.append({
                **dict(zip(CLAVES_CELDA, claves)),
                "semillas": len(grupo),
                "fallas": int((grupo["estado"] != "ok").sum()),
                "media": float(ok.mean()) if ok.size else float("nan"),
                "error_estandar": error_estandar(ok),
            })
        self.resumen = pd.DataFrame(filas, columns=CLAVES_CELDA + ["semillas", "fallas", "media", "error_estandar"])
        print(f"✓ Resumen calculado para {len(self.resumen)} celdas")
        return self.resumen

    def celdas_fallidas(self):
        """Celdas donde fallaron todas las semillas"""
        if self.resumen is None:
            self.calcular_resumen()
        return self.resumen[self.resumen["fallas"] == self.resumen["semillas"]]

    def generar_reporte(self):
        """
        Reporte de texto con media ± error estándar por celda

        Returns:
            str
        """
        if self.resumen is None:
            self.calcular_resumen()
        dec = REPORTES["decimales"]

        reporte = []
        reporte.append("=" * 70)
        reporte.append("RESUMEN DEL BENCH (MSE causal, media ± error estándar)")
        reporte.append("=" * 70)
        reporte.append("")
        for (benchmark, objetivo), bloque in self.resumen.groupby(["benchmark", "objetivo"], sort=True):
            reporte.append(f"{benchmark} ({objetivo})")
            reporte.append("-" * 70)
            for _, fila in bloque.iterrows():
                ancla = "" if pd.isna(fila["ancla"]) else f" a′={fila['ancla']:+g}"
                se = "—" if pd.isna(fila["error_estandar"]) else f"{fila['error_estandar']:.{dec}f}"
                marca = "✗" if fila["fallas"] == fila["semillas"] else ("⚠" if fila["fallas"] else "✓")
                reporte.append(f"  {marca} {fila['estimador']:<14} N={int(fila['N']):<6}{ancla:<10} "
                               f"{fila['media']:.{dec}f} ± {se}  ({fila['semillas'] - fila['fallas']}"
                               f"/{fila['semillas']} semillas)")
            reporte.append("")
        reporte.append("=" * 70)
        return "\n".join(reporte)

    def exportar_resumen(self, ruta=None):
        """
        Exporta el resumen a CSV

        Args:
            ruta: archivo de salida (default OUTPUTS_DIR / resumen.csv)
        """
        if self.resumen is None:
            self.calcular_resumen()
        ruta = Path(ruta) if ruta else OUTPUTS_DIR / REPORTES["archivo_resumen"]
        ruta.parent.mkdir(parents=True, exist_ok=True)
        self.resumen.to_csv(ruta, index=False, sep=",", lineterminator="\n", float_format="%.17g")
        print(f"✓ Resumen exportado a: {ruta}")
        return ruta


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def analizar_resultados_completo(resultados, exportar=True, ruta=None):
    """
    Agrega resultados y muestra el reporte

    Returns:
        BenchAnalytics con el resumen calculado
    """
    analytics = BenchAnalytics(resultados)
    analytics.calcular_resumen()
    print("\n" + analytics.generar_reporte())
    if exportar:
        analytics.exportar_resumen(ruta)
    return analytics


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    ejemplo = pd.DataFrame({
        "estimador": ["KPV"] * 3, "benchmark": ["noisy-proxy-1"] * 3, "objetivo": ["ATE"] * 3,
        "N": [5000] * 3, "ancla": [np.nan] * 3, "semilla": [0, 1, 2],
        "mse": [0.006, 0.007, 0.0065], "estado": ["ok"] * 3,
    })
    analizar_resultados_completo(ejemplo, exportar=False)
