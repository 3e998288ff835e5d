"""
Estimadores doblemente robustos DRPCLNET (V1 y V2) y perturbación de cabezas

V1 regresa el residuo ponderado φ̂·(y − ĥ) y lo suma a la curva del puente de
resultado. V2 regresa solo la interacción φ̂·ĥ y combina ambas curvas:
f̂ = f̂^(h) + f̂^(φ) − k₂.
"""

import sys
from pathlib import Path

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import REPORTES

from .curves import DoseResponseCurve
from .errors import ConfigurationError, DataError, ShapeError, StateError
from .linalg_ad import DTYPE
from .regressor import ThirdStageRegressor

VERSIONES = ("V1", "V2")


def _chequear_esquema(outcome, treatment, objetivo):
    for modelo in (outcome, treatment):
        modelo._exigir_ajustado()
    if outcome.lado != "outcome" or treatment.lado != "treatment":
        raise ConfigurationError("Se esperaba un puente de resultado y uno de tratamiento")
    if (outcome.objetivo == "CATE") != (objetivo == "CATE") or (treatment.objetivo == "CATE") != (objetivo == "CATE"):
        raise ConfigurationError(
            f"Objetivos incompatibles: outcome={outcome.objetivo}, treatment={treatment.objetivo}, DR={objetivo}")
    comunes = set(outcome.dims) & set(treatment.dims)
    distintos = sorted(r for r in comunes if outcome.dims[r] != treatment.dims[r])
    if distintos:
        raise ConfigurationError(f"Esquemas distintos entre puentes en los roles {distintos}")


def _entradas(datos, objetivo):
    if objetivo == "CATE":
        if not datos.tiene("v"):
            raise DataError("La corrección CATE requiere la columna v")
        return np.column_stack([datos.bloque("a"), datos.bloque("v")])
    return datos.bloque("a")


class DrEstimator:
    """
    Combinación doblemente robusta de un puente de resultado y uno de tratamiento

    Args:
        outcome: OutcomeNet ajustado
        treatment: TreatmentNet ajustado (el de la ancla para ATT)
        version: 'V1' o 'V2'
        objetivo: 'ATE', 'CATE' o 'ATT'
        ancla: a′ para ATT
    """

    def __init__(self, outcome, treatment, version="V1", objetivo="ATE", ancla=None, verbose=None):
        if version not in VERSIONES:
            raise ConfigurationError(f"Versión DR desconocida: {version}")
        if objetivo == "ATT" and ancla is None:
            raise ConfigurationError("DR para ATT requiere un ancla")
        _chequear_esquema(outcome, treatment, objetivo)
        self.outcome = outcome
        self.treatment = treatment
        self.version = version
        self.objetivo = objetivo
        self.ancla = None if ancla is None else float(ancla)
        self.verbose = REPORTES["verbose"] if verbose is None else verbose
        self.correccion = None
        self.warnings = []

    @property
    def etiqueta(self):
        return f"DRPCLNET-{self.version}"

    def pseudo_resultados(self, datos):
        """y^(κ,1) = φ̂·(y − ĥ) para V1, y^(κ,2) = φ̂·ĥ para V2"""
        h = self.outcome.evaluar_dataset(datos)
        phi = self.treatment.evaluar_dataset(datos)
        if self.version == "V1":
            return phi * (datos.bloque("y")[:, 0] - h)
        return phi * h

    def ajustar(self, datos, config_regresor=None, semilla=0):
        """
        Ajusta la regresión de corrección k^(κ) sobre el split de corrección

        Args:
            datos: ProxyDataset del split de corrección (por defecto D2)
        """
        if len(datos) == 0:
            raise DataError("Split de corrección vacío")
        self.correccion = ThirdStageRegressor(config_regresor, semilla, verbose=self.verbose)
        self.correccion.ajustar(_entradas(datos, self.objetivo), self.pseudo_resultados(datos))
        return self

    def k(self, grilla):
        """Corrección k^(κ) evaluada en la grilla"""
        if self.correccion is None:
            raise StateError("La corrección DR no fue ajustada")
        grilla = np.asarray(grilla, dtype=np.float64)
        if self.objetivo == "CATE":
            return self.correccion.predecir(grilla.reshape(-1, 2))
        return self.correccion.predecir(grilla.reshape(-1, 1))

    def curva(self, curva_h, curva_phi=None):
        """
        Curva DR sobre la grilla de curva_h

        Args:
            curva_h: curva del puente de resultado
            curva_phi: curva del puente de tratamiento (requerida en V2)
        """
        k = self.k(curva_h.grilla)
        if self.version == "V1":
            valores = curva_h.valores + k
        else:
            if curva_phi is None:
                raise ConfigurationError("DR V2 requiere la curva del puente de tratamiento")
            if curva_phi.grilla.shape != curva_h.grilla.shape or not np.allclose(curva_phi.grilla, curva_h.grilla):
                raise ShapeError("Las curvas de ambos puentes deben compartir la grilla")
            valores = curva_h.valores + curva_phi.valores - k
        avisos = list(curva_h.avisos) + (list(curva_phi.avisos) if curva_phi is not None else [])
        return DoseResponseCurve(curva_h.grilla, valores, etiqueta=self.etiqueta, ancla=self.ancla,
                                 avisos=sorted(set(avisos)))

    def exportar(self):
        """(tensores, meta) de la corrección; los puentes se persisten aparte"""
        if self.correccion is None:
            raise StateError("La corrección DR no fue ajustada")
        tensores, meta_regresor = self.correccion.exportar("correccion")
        meta = {"version": self.version, "objetivo": self.objetivo, "ancla": self.ancla,
                "regresor": meta_regresor}
        return tensores, meta


# ==============================================
# OPERACIONES
# ==============================================

def fit_dr_v1(outcome, treatment, datos, config_regresor=None, semilla=0, objetivo=None, ancla=None):
    """Corrección por residuo ponderado: f̂ = f̂^(h) + k₁"""
    objetivo = objetivo or treatment.objetivo
    return DrEstimator(outcome, treatment, "V1", objetivo, ancla).ajustar(datos, config_regresor, semilla)


def fit_dr_v2(outcome, treatment, datos, config_regresor=None, semilla=0, objetivo=None, ancla=None):
    """Corrección por interacción: f̂ = f̂^(h) + f̂^(φ) − k₂"""
    objetivo = objetivo or treatment.objetivo
    return DrEstimator(outcome, treatment, "V2", objetivo, ancla).ajustar(datos, config_regresor, semilla)


def perturbacion_cabeza(dimension, sigma, semilla=0):
    """|ε| con ε ~ N(0, σ²) por entrada"""
    if sigma < 0:
        raise ConfigurationError(f"sigma debe ser no negativo: {sigma}")
    generador = torch.Generator().manual_seed(int(semilla))
    return torch.randn(int(dimension), generator=generador, dtype=DTYPE).abs() * float(sigma)


def perturb_head(modelo, lado, sigma, semilla=0):
    """
    Copia del puente con la cabeza lineal de segunda etapa desplazada: h ← h + |ε|

    El modelo original no se modifica.
    """
    if lado not in ("outcome", "treatment"):
        raise ConfigurationError(f"Lado desconocido: {lado}")
    if modelo.lado != lado:
        raise ConfigurationError(f"Se pidió perturbar '{lado}' sobre un puente '{modelo.lado}'")
    copia = modelo.clonar()
    copia.head = copia.head + perturbacion_cabeza(copia.dim_cabeza, sigma, semilla)
    copia.verbose = modelo.verbose
    return copia


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def analizar_dr_completo(outcome, treatment, datos_correccion, curva_h, curva_phi, config_regresor=None,
                         semilla=0):
    """
    Ajusta ambas versiones y devuelve sus curvas

    Returns:
        dict 'DRPCLNET-V1' / 'DRPCLNET-V2' -> DoseResponseCurve
    """
    curvas = {}
    for ajuste in (fit_dr_v1, fit_dr_v2):
        estimador = ajuste(outcome, treatment, datos_correccion, config_regresor, semilla,
                           ancla=curva_h.ancla)
        curvas[estimador.etiqueta] = estimador.curva(curva_h, curva_phi)
        print(f"✓ {estimador.etiqueta} ajustado")
    return curvas


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    from config import cargar_preset
    from src.curves import grilla_tratamiento
    from src.density_ratio import kde_ratio_ate
    from src.dgp import gen_lowdim_ate, oracle_lowdim_ate
    from src.curves import causal_mse
    from src.ingestion import SplitPlan
    from src.outcome_bridge import OutcomeNet, ate_curve_outcome, train_outcome
    from src.treatment_bridge import TreatmentNet, ate_curve_treatment, train_treatment

    preset = cargar_preset("lowdim-ate")
    datos = gen_lowdim_ate(2000, semilla=0)
    plan = SplitPlan.crear(len(datos), 0)
    d2 = datos.subconjunto(plan.d2)
    grilla = grilla_tratamiento(datos.bloque("a"))

    outcome = train_outcome(OutcomeNet(preset["outcome"]), datos, plan)
    ratio = kde_ratio_ate(datos.subconjunto(plan.d1))
    treatment = train_treatment(TreatmentNet(preset["treatment"]), datos, plan,
                                ratio(d2.bloque("a"), d2.bloque("x"), d2.bloque("w")))
    curva_h = ate_curve_outcome(outcome, d2, grilla)
    curva_phi, _ = ate_curve_treatment(treatment, d2, grilla, preset["third_stage"])
    oraculo = oracle_lowdim_ate(grilla)
    for nombre, curva in analizar_dr_completo(outcome, treatment, d2, curva_h, curva_phi,
                                              preset["third_stage"]).items():
        print(f"  {nombre}: MSE causal = {causal_mse(curva, oraculo):.5f}")
