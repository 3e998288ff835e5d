"""
OutcomeNet: puente de resultado h(a, x, w) = hᵀ(φ_A(a) ⊗ φ_X(x) ⊗ φ_W(w))

Incluye la curva ATE por promedio empírico, la regresión de embeddings para
CATE y la regresión anclada para ATT.
"""

import sys
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

sys.path.append(str(Path(__file__).parent.parent))
from config import BENCH

from .curves import DoseResponseCurve, grilla_tratamiento
from .errors import ConfigurationError, DataError
from .ingestion import SplitPlan
from .linalg_ad import kron_filas, como_tensor
from .regressor import ThirdStageRegressor
from .two_stage import TwoStageBridge


class OutcomeNet(TwoStageBridge):
    """
    Puente de resultado

    Primera etapa: φ_{AXZ,1} predice el embedding φ_{W,2}(w).
    Segunda etapa: cabeza sobre φ_A ⊗ φ_X ⊗ (embedding predicho), o
    φ_A ⊗ φ_V ⊗ φ_S ⊗ (embedding) para CATE. Con `standardize` Y se centra y
    escala con su media y desvío en D1; la cabeza no tiene intercepto y la
    media vuelve a sumarse en la salida.
    """

    lado = "outcome"
    rol_proxy = "w"
    roles_etapa1 = ("a", "x", "z")

    def __init__(self, preset=None, objetivo="ATE", semilla=0, verbose=None):
        super().__init__(preset, objetivo, semilla, verbose)
        self.escala_y = 1.0
        self.media_y = 0.0

    def definir_bloques(self, datos):
        if self.objetivo == "CATE":
            if not datos.tiene("v"):
                raise DataError("CATE requiere la columna v")
            bloques = OrderedDict([("a", ["a"]), ("v", ["v"])])
            if datos.tiene("s"):
                bloques["s"] = ["s"]
            return bloques

        tiene_x = datos.tiene_covariables
        if self.preset["joint_ax"] and tiene_x:
            if self.objetivo == "ATT":
                raise ConfigurationError("ATT requiere φ_A separado (joint_ax = false)")
            return OrderedDict([("ax", ["a", "x"])])
        bloques = OrderedDict([("a", ["a"])])
        if tiene_x:
            bloques["x"] = ["x"]
        return bloques

    def construir(self, datos_d1):
        super().construir(datos_d1)
        y = datos_d1.bloque("y")[:, 0]
        desvio = float(y.std())
        self.escala_y = desvio if (desvio > 0 and self.preset["standardize"]) else 1.0
        self.media_y = float(y.mean()) if self.preset["standardize"] else 0.0

    def objetivo_etapa2(self, datos_d2, objetivos):
        return (datos_d2.bloque("y")[:, 0] - self.media_y) / self.escala_y

    @property
    def escala_salida(self):
        return self.escala_y

    @property
    def desplazamiento_salida(self):
        return self.media_y

    def _meta_extra(self):
        return {"escala_y": self.escala_y, "media_y": self.media_y}

    def _restaurar_extra(self, extra):
        self.escala_y = float(extra.get("escala_y", 1.0))
        self.media_y = float(extra.get("media_y", 0.0))


# ==============================================
# OPERACIONES
# ==============================================

def train_outcome(modelo, datos, plan):
    """Entrena OutcomeNet sobre D1 (primera etapa) y D2 (segunda etapa)"""
    return modelo.entrenar(datos, plan)


def eval_h(modelo, a, w, x=None, **extra):
    """
    ĥ(a, x, w) en modo eval

    Args:
        a: tratamientos (n,)
        w: proxies de resultado (n, dw)
        x: covariables (n, dx) o None
        **extra: v y s para puentes CATE
    """
    bloques = {"a": a, "w": w, **extra}
    if x is not None:
        bloques["x"] = x
    return modelo.evaluar(**bloques)


def ate_curve_outcome(modelo, muestra, grilla):
    """
    f̂(a) = (1/t) Σ_i ĥ(a, x_i, w_i) sobre la muestra de evaluación

    Args:
        modelo: OutcomeNet ajustado
        muestra: ProxyDataset de evaluación (usa x y w)
        grilla: puntos de tratamiento

    Returns:
        DoseResponseCurve
    """
    modelo._exigir_ajustado()
    if len(muestra) == 0:
        raise DataError("Muestra de evaluación vacía")
    grilla = np.asarray(grilla, dtype=np.float64).reshape(-1)
    t = modelo.tensores(muestra)
    ta = modelo._estandarizar("a", grilla)

    with torch.no_grad():
        if "ax" in modelo.bloques:
            valores = []
            for i in range(len(grilla)):
                fila = dict(t, a=ta[i:i + 1].expand(len(muestra), -1))
                valores.append(float(modelo.evaluar_tensores(fila).mean()))
            valores = np.array(valores)
        else:
            resto = modelo.f_proxy(t["w"], "eval")
            if "x" in modelo.redes2:
                resto = kron_filas(modelo.redes2["x"](t["x"], "eval"), resto)
            media = resto.mean(dim=0, keepdim=True).expand(len(grilla), -1)
            feats = kron_filas(modelo.redes2["a"](ta, "eval"), media)
            valores = modelo.a_escala_original(feats @ modelo.head).numpy()
    return DoseResponseCurve(grilla, valores, etiqueta="OUTCOMENET")


class CateEvaluator:
    """f̂_CATE(a, v) = hᵀ(φ_A(a) ⊗ φ_V(v) ⊗ f(v)) con f(v) ≈ E[φ_S(S) ⊗ φ_W(W) | V = v]"""

    def __init__(self, modelo, regresor):
        self.modelo = modelo
        self.regresor = regresor

    def evaluar(self, a, v):
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        m = self.modelo
        embedding = como_tensor(self.regresor.predecir(v.reshape(-1, 1)))
        with torch.no_grad():
            fa = m.redes2["a"](m._estandarizar("a", a), "eval")
            fv = m.redes2["v"](m._estandarizar("v", v), "eval")
            feats = kron_filas(kron_filas(fa, fv), embedding)
            return m.a_escala_original(feats @ m.head).numpy()

    def curva(self, grilla, etiqueta="OUTCOMENET"):
        grilla = np.asarray(grilla, dtype=np.float64).reshape(-1, 2)
        return DoseResponseCurve(grilla, self.evaluar(grilla[:, 0], grilla[:, 1]), etiqueta=etiqueta)


class AttEvaluator:
    """f̂_ATT(a, a′) = hᵀ(φ_A(a) ⊗ g(a′)) con g(a′) ≈ E[φ_X(X) ⊗ φ_W(W) | A = a′]"""

    def __init__(self, modelo, regresor, rango_a=None):
        self.modelo = modelo
        self.regresor = regresor
        self.rango_a = rango_a

    def evaluar(self, a, ancla):
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        m = self.modelo
        g = como_tensor(self.regresor.predecir(np.array([[float(ancla)]])))
        with torch.no_grad():
            fa = m.redes2["a"](m._estandarizar("a", a), "eval")
            feats = kron_filas(fa, g.expand(len(a), -1))
            return m.a_escala_original(feats @ m.head).numpy()

    def curva(self, grilla, ancla, etiqueta="OUTCOMENET"):
        curva = DoseResponseCurve(grilla, self.evaluar(grilla, ancla), etiqueta=etiqueta, ancla=float(ancla))
        if self.rango_a is not None and not self.rango_a[0] <= ancla <= self.rango_a[1]:
            curva.avisos.append(f"ancla {ancla} fuera del soporte observado de A")
        return curva


def cate_embedding_regression(modelo, datos, config_regresor=None, semilla=0):
    """
    Regresión de φ_S(S) ⊗ φ_W(W) sobre V

    Returns:
        CateEvaluator
    """
    modelo._exigir_ajustado()
    if not datos.tiene("v"):
        raise DataError("Falta la columna v para la regresión CATE")
    if "v" not in modelo.bloques:
        raise ConfigurationError("El puente no fue entrenado para CATE")
    objetivos = modelo.embedding_proxy(datos, roles_extra=["s"])
    regresor = ThirdStageRegressor(config_regresor, semilla, verbose=modelo.verbose)
    regresor.ajustar(datos.bloque("v"), objetivos)
    return CateEvaluator(modelo, regresor)


def att_anchor_regression(modelo, datos, config_regresor=None, semilla=0):
    """
    Regresión de φ_X(X) ⊗ φ_W(W) sobre A

    Returns:
        AttEvaluator
    """
    modelo._exigir_ajustado()
    if "a" not in modelo.redes2:
        raise ConfigurationError("ATT requiere φ_A separado en el puente")
    objetivos = modelo.embedding_proxy(datos, roles_extra=["x"])
    a = datos.bloque("a")
    regresor = ThirdStageRegressor(config_regresor, semilla, verbose=modelo.verbose)
    regresor.ajustar(a, objetivos)
    return AttEvaluator(modelo, regresor, rango_a=(float(a.min()), float(a.max())))


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def analizar_outcome_completo(datos, preset=None, semilla=0, mostrar_resumen=True):
    """
    Entrena OutcomeNet con un split por defecto y devuelve la curva ATE en D2

    Returns:
        (modelo, curva)
    """
    plan = SplitPlan.crear(len(datos), semilla)
    modelo = OutcomeNet(preset, "ATE", semilla)
    train_outcome(modelo, datos, plan)
    d3 = datos.subconjunto(plan.d3)
    curva = ate_curve_outcome(modelo, d3, grilla_tratamiento(datos.bloque("a"), BENCH["n_grilla"]))
    if mostrar_resumen:
        modelo.mostrar_resumen()
    return modelo, curva


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    from config import cargar_preset
    from src.dgp import gen_lowdim_ate

    datos = gen_lowdim_ate(2000, semilla=0)
    preset = cargar_preset("lowdim-ate")["outcome"]
    modelo, curva = analizar_outcome_completo(datos, preset)
    print(curva.a_frame().head())
