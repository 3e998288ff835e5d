"""
Curvas dosis-respuesta estimadas y oráculo, grillas y MSE causal
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.append(str(Path(__file__).parent.parent))
from config import BENCH

from .errors import GridMismatchError, DataError, ShapeError


@dataclass
class DoseResponseCurve:
    """
    Curva estimada sobre una grilla

    La grilla es (G,) para curvas en a y (G, 2) con columnas (a, v) para CATE.
    """
    grilla: np.ndarray
    valores: np.ndarray
    etiqueta: str = ""
    ancla: float = None
    avisos: list = field(default_factory=list)

    def __post_init__(self):
        self.grilla = np.asarray(self.grilla, dtype=np.float64)
        self.valores = np.asarray(self.valores, dtype=np.float64).reshape(-1)
        if self.grilla.shape[0] != self.valores.shape[0]:
            raise ShapeError(f"Grilla de {self.grilla.shape[0]} puntos y {self.valores.shape[0]} valores")

    def a_frame(self):
        """DataFrame largo (a, v?, valor)"""
        if self.grilla.ndim == 2:
            df = pd.DataFrame({"a": self.grilla[:, 0], "v": self.grilla[:, 1]})
        else:
            df = pd.DataFrame({"a": self.grilla})
        df["valor"] = self.valores
        df["ancla"] = np.nan if self.ancla is None else self.ancla
        return df


@dataclass
class OracleCurve(DoseResponseCurve):
    """Curva verdadera; metodo en {analytic, quadrature, monte-carlo(M)}"""
    metodo: str = "analytic"

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.isfinite(self.valores)):
            raise DataError("El oráculo tiene valores no finitos")


# ==============================================
# GRILLAS
# ==============================================

def grilla_tratamiento(a, n=None, percentiles=None):
    """
    Grilla equiespaciada entre percentiles de los tratamientos observados

    Args:
        a: tratamientos observados
        n: puntos (default BENCH["n_grilla"])
        percentiles: (bajo, alto) (default BENCH["percentiles"])
    """
    n = n or BENCH["n_grilla"]
    bajo, alto = percentiles or BENCH["percentiles"]
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise DataError("No hay tratamientos para construir la grilla")
    lo, hi = np.percentile(a, [bajo, alto])
    return np.linspace(lo, hi, n)


def grilla_cate(v, valores_a=None, n=None, percentiles=None):
    """Grilla producto (a, v): cada valor de a con la grilla de v"""
    valores_a = valores_a if valores_a is not None else BENCH["valores_a_cate"]
    grilla_v = grilla_tratamiento(v, n, percentiles)
    return np.array([(a, vv) for a in valores_a for vv in grilla_v], dtype=np.float64)


def causal_mse(curva, oraculo):
    """
    Error cuadrático medio entre la curva estimada y el oráculo

    Raises:
        GridMismatchError: si las grillas no coinciden
    """
    if curva.grilla.shape != oraculo.grilla.shape or not np.allclose(
        curva.grilla, oraculo.grilla, rtol=1e-12, atol=1e-12
    ):
        raise GridMismatchError("La grilla estimada no coincide con la del oráculo")
    return float(np.mean((curva.valores - oraculo.valores) ** 2))
