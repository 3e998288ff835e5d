"""
TreatmentNet: puente de tratamiento φ(a, x, z) = φᵀ(φ_{AX}(a, x) ⊗ φ_Z(z))

La segunda etapa ajusta el puente a las razones de densidad estimadas; la
tercera etapa regresa los pseudo-resultados y·φ̂ sobre el tratamiento.
"""

import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

sys.path.append(str(Path(__file__).parent.parent))
from config import RATIOS, workers_por_defecto

from .curves import DoseResponseCurve
from .errors import DataError, ShapeError
from .regressor import ThirdStageRegressor
from .two_stage import TwoStageBridge


class TreatmentNet(TwoStageBridge):
    """
    Puente de tratamiento

    Primera etapa: φ_{AXW,1} predice el embedding φ_Z(z). Segunda etapa:
    cabeza sobre φ_{AX} (o φ_A sin covariables) ⊗ embedding predicho, con
    objetivos r̂ winsorizados en el percentil 99.5.
    """

    lado = "treatment"
    rol_proxy = "z"
    roles_etapa1 = ("a", "x", "w")

    def __init__(self, preset=None, objetivo="ATE", semilla=0, verbose=None):
        super().__init__(preset, objetivo, semilla, verbose)
        self.tope_winsor = None

    def definir_bloques(self, datos):
        if not datos.tiene_covariables:
            return OrderedDict([("a", ["a"])])
        if self.preset["joint_ax"]:
            return OrderedDict([("ax", ["a", "x"])])
        return OrderedDict([("a", ["a"]), ("x", ["x"])])

    def objetivo_etapa2(self, datos_d2, objetivos):
        if objetivos is None:
            raise DataError("TreatmentNet requiere las razones de densidad de D2")
        r = np.asarray(objetivos, dtype=np.float64).reshape(-1)
        if len(r) != len(datos_d2):
            raise ShapeError(f"{len(r)} razones para {len(datos_d2)} filas de D2")
        no_finitos = ~np.isfinite(r)
        if no_finitos.any():
            raise DataError("Razón de densidad no finita", fila=int(np.argmax(no_finitos)))
        self.tope_winsor = float(np.percentile(r, RATIOS["percentil_winsor"]))
        return np.minimum(r, self.tope_winsor)

    def _meta_extra(self):
        return {"tope_winsor": self.tope_winsor}

    def _restaurar_extra(self, extra):
        self.tope_winsor = extra.get("tope_winsor")


# ==============================================
# OPERACIONES
# ==============================================

def train_treatment(modelo, datos, plan, ratios_d2):
    """
    Entrena TreatmentNet

    Args:
        ratios_d2: r̂ evaluadas en las filas de D2 (mismo orden que plan.d2)
    """
    return modelo.entrenar(datos, plan, ratios_d2)


def eval_phi(modelo, a, z, x=None):
    """φ̂(a, x, z) en modo eval"""
    bloques = {"a": a, "z": z}
    if x is not None:
        bloques["x"] = x
    return modelo.evaluar(**bloques)


def _pseudo_resultados(modelo, datos):
    return datos.bloque("y")[:, 0] * modelo.evaluar_dataset(datos)


def ate_curve_treatment(modelo, datos, grilla, config_regresor=None, semilla=0):
    """
    Curva ATE por regresión de y·φ̂(a, x, z) sobre a

    Returns:
        (DoseResponseCurve, regresor ajustado)
    """
    modelo._exigir_ajustado()
    regresor = ThirdStageRegressor(config_regresor, semilla, verbose=modelo.verbose)
    regresor.ajustar(datos.bloque("a"), _pseudo_resultados(modelo, datos))
    grilla = np.asarray(grilla, dtype=np.float64).reshape(-1)
    curva = DoseResponseCurve(grilla, regresor.predecir(grilla.reshape(-1, 1)), etiqueta="TREATMENTNET")
    return curva, regresor


def cate_curve_treatment(modelo, datos, grilla, config_regresor=None, semilla=0):
    """Curva CATE por regresión de y·φ̂ sobre (a, v); grilla (G, 2)"""
    modelo._exigir_ajustado()
    if not datos.tiene("v"):
        raise DataError("Falta la columna v para la curva CATE")
    entradas = np.column_stack([datos.bloque("a"), datos.bloque("v")])
    regresor = ThirdStageRegressor(config_regresor, semilla, verbose=modelo.verbose)
    regresor.ajustar(entradas, _pseudo_resultados(modelo, datos))
    grilla = np.asarray(grilla, dtype=np.float64).reshape(-1, 2)
    curva = DoseResponseCurve(grilla, regresor.predecir(grilla), etiqueta="TREATMENTNET")
    return curva, regresor


def att_curve_treatment(modelo_ancla, datos, grilla, ancla, config_regresor=None, semilla=0):
    """Curva ATT para un ancla: regresión de y·φ̂^{(a′)} sobre a"""
    curva, regresor = ate_curve_treatment(modelo_ancla, datos, grilla, config_regresor, semilla)
    curva.ancla = float(ancla)
    a = datos.bloque("a")
    if not a.min() <= ancla <= a.max():
        curva.avisos.append(f"ancla {ancla} fuera del soporte observado de A")
    return curva, regresor


def ajustar_anclas(modelo_ate, datos, plan, ratios_por_ancla, compartir_etapa1=None, n_jobs=None):
    """
    Un puente de tratamiento por ancla a′, en paralelo (hilos)

    Con compartir_etapa1 (default del preset) se reutiliza la primera etapa del
    puente ATE y solo se reentrena la segunda con los objetivos r̂^{(a′)}.

    Args:
        modelo_ate: TreatmentNet ya ajustado para ATE
        ratios_por_ancla: dict ancla -> r̂^{(a′)} en las filas de D2

    Returns:
        dict ancla -> TreatmentNet
    """
    modelo_ate._exigir_ajustado()
    compartir = modelo_ate.preset["share_stage1"] if compartir_etapa1 is None else compartir_etapa1
    n_jobs = n_jobs or workers_por_defecto()

    def _una(k, ancla, ratios):
        semilla = modelo_ate.semilla + 1000 * (k + 1)
        if compartir:
            modelo = modelo_ate.reiniciar_etapa2(semilla)
            modelo.objetivo = "ATT"
            return ancla, modelo.entrenar(datos, plan, ratios, entrenar_etapa1=False)
        modelo = TreatmentNet(modelo_ate.preset, "ATT", semilla, modelo_ate.verbose)
        return ancla, modelo.entrenar(datos, plan, ratios)

    resultados = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_una)(k, ancla, r) for k, (ancla, r) in enumerate(ratios_por_ancla.items())
    )
    return dict(resultados)


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def analizar_treatment_completo(datos, plan, ratios_d2, grilla, preset=None, tercera=None, semilla=0):
    """
    Entrena TreatmentNet y devuelve la curva ATE

    Returns:
        (modelo, curva)
    """
    modelo = TreatmentNet(preset, "ATE", semilla)
    train_treatment(modelo, datos, plan, ratios_d2)
    curva, _ = ate_curve_treatment(modelo, datos.subconjunto(plan.d2), grilla, tercera, semilla)
    modelo.mostrar_resumen()
    return modelo, curva


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    from config import cargar_preset
    from src.curves import grilla_tratamiento
    from src.density_ratio import kde_ratio_ate
    from src.dgp import gen_lowdim_ate
    from src.ingestion import SplitPlan

    datos = gen_lowdim_ate(2000, semilla=0)
    plan = SplitPlan.crear(len(datos), 0)
    d2 = datos.subconjunto(plan.d2)
    ratio = kde_ratio_ate(datos.subconjunto(plan.d1))
    r2 = ratio(d2.bloque("a"), d2.bloque("x"), d2.bloque("w"))
    preset = cargar_preset("lowdim-ate")
    grilla = grilla_tratamiento(datos.bloque("a"))
    modelo, curva = analizar_treatment_completo(datos, plan, r2, grilla, preset["treatment"], preset["third_stage"])
    print(curva.a_frame().head())
