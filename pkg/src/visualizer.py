"""
Módulo de visualización
SVG estático (matplotlib) del MSE causal vs N y HTML interactivo (plotly) de curvas
"""

import sys
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt

try:
    import plotly.graph_objects as go
    from plotly.subplots import make_subplots
    import plotly.io as pio
    PLOTLY_AVAILABLE = True
    pio.templates.default = "plotly_dark"
except ImportError:
    PLOTLY_AVAILABLE = False

sys.path.append(str(Path(__file__).parent.parent))
from config import OUTPUTS_DIR

COLORES = {
    "OUTCOMENET": "#3b82f6",
    "TREATMENTNET": "#ec4899",
    "DRPCLNET-V1": "#10b981",
    "DRPCLNET-V2": "#8b5cf6",
    "KPV": "#f59e0b",
    "KAP": "#ef4444",
    "DRKPV": "#6b7280",
}


def svg_mse_vs_n(resumen, ruta, titulo=""):
    """
    Una línea por estimador: log₁₀ del MSE causal medio vs N

    Args:
        resumen: DataFrame de BenchAnalytics.calcular_resumen()
        ruta: archivo .svg de salida
    """
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    datos = resumen[np.isfinite(resumen["media"]) & (resumen["media"] > 0)]

    # ids de clip-path reproducibles entre corridas
    with plt.rc_context({"svg.hashsalt": "drpcl"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for estimador, grupo in datos.groupby("estimador", sort=True):
            por_n = grupo.groupby("N")["media"].mean().sort_index()
            ax.plot(por_n.index, np.log10(por_n.values), marker="o", label=estimador,
                    color=COLORES.get(estimador))
        ax.set_xlabel("N")
        ax.set_ylabel("log₁₀ MSE causal")
        ax.set_title(titulo)
        ax.grid(alpha=0.3)
        if len(datos):
            ax.legend()
        fig.tight_layout()
        fig.savefig(ruta, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"✓ Figura SVG guardada en: {ruta}")
    return ruta


class CurveVisualizer:
    """Curvas estimadas contra el oráculo, un panel por ancla"""

    def __init__(self, curvas, nombre=""):
        """
        Args:
            curvas: DataFrame largo con columnas estimador, ancla, a, valor, oraculo
                (y semilla opcional; se promedia por punto)
        """
        if not PLOTLY_AVAILABLE:
            raise ImportError("Plotly no disponible")
        self.curvas = curvas.copy()
        self.curvas["ancla"] = self.curvas["ancla"].fillna(np.inf) if "ancla" in self.curvas else np.inf
        self.nombre = nombre

    def crear_figura(self):
        anclas = sorted(self.curvas["ancla"].unique())
        titulos = ["curva" if not np.isfinite(a) else f"a′ = {a:+g}" for a in anclas]
        fig = make_subplots(rows=1, cols=len(anclas), subplot_titles=titulos)
        columnas_x = ["a", "v"] if "v" in self.curvas and self.curvas["v"].notna().any() else ["a"]
        eje = columnas_x[-1]

        for col, ancla in enumerate(anclas, start=1):
            panel = self.curvas[self.curvas["ancla"] == ancla]
            medias = panel.groupby(["estimador", eje], sort=True)[["valor", "oraculo"]].mean().reset_index()
            oraculo = medias.drop_duplicates(eje).sort_values(eje)
            fig.add_trace(go.Scatter(x=oraculo[eje], y=oraculo["oraculo"], name="oráculo",
                                     line={"color": "#ffffff", "dash": "dash"}, showlegend=col == 1), row=1, col=col)
            for estimador, grupo in medias.groupby("estimador", sort=True):
                fig.add_trace(go.Scatter(x=grupo[eje], y=grupo["valor"], name=estimador,
                                         line={"color": COLORES.get(estimador)}, showlegend=col == 1),
                              row=1, col=col)
            fig.update_xaxes(title_text=eje, row=1, col=col)

        fig.update_layout(title=f"Curvas dosis-respuesta - {self.nombre}", height=450,
                          margin={"l": 60, "r": 40, "t": 80, "b": 60})
        return fig

    def guardar_html(self, ruta=None):
        ruta = Path(ruta) if ruta else OUTPUTS_DIR / f"curvas_{self.nombre.replace(' ', '_')}.html"
        ruta.parent.mkdir(parents=True, exist_ok=True)
        self.crear_figura().write_html(str(ruta), include_plotlyjs="cdn")
        print(f"✓ Curvas interactivas guardadas en: {ruta}")
        return ruta


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def generar_visualizaciones_completas(resumen, curvas, directorio, nombre=""):
    """
    SVG del MSE vs N (si hay varios N) y HTML de curvas (si plotly está disponible)

    Returns:
        lista de rutas generadas
    """
    directorio = Path(directorio)
    rutas = []
    if resumen is not None and resumen["N"].nunique() > 1:
        rutas.append(svg_mse_vs_n(resumen, directorio / "mse_vs_n.svg", nombre))
    if curvas is not None and len(curvas):
        if PLOTLY_AVAILABLE:
            rutas.append(CurveVisualizer(curvas, nombre).guardar_html(directorio / "curvas.html"))
        else:
            print("⚠ Plotly no disponible, se omite el HTML de curvas")
    return rutas


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    resumen = pd.DataFrame({
        "estimador": ["KPV", "KPV", "KAP", "KAP"], "N": [2000, 5000, 2000, 5000],
        "media": [0.01, 0.006, 0.008, 0.002],
    })
    svg_mse_vs_n(resumen, OUTPUTS_DIR / "ejemplo_mse_vs_n.svg", "noisy-proxy-1")
