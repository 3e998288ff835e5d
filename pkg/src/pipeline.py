"""
Pipeline de estimación: de un dataset y un preset a curvas y componentes persistibles

Un mismo SplitPlan se comparte entre ambos puentes y la corrección DR.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))
from config import BENCH, REPORTES, RATIOS

from .curves import grilla_cate, grilla_tratamiento
from .density_ratio import ajustar_ratio, att_ratio_from_ate
from .dr import DrEstimator, perturb_head
from .errors import ConfigurationError, ValidationError
from .ingestion import SplitPlan
from .kernel_baselines import drkpv_curve, kap_fit, kpv_fit
from .outcome_bridge import (OutcomeNet, att_anchor_regression, ate_curve_outcome,
                             cate_embedding_regression, train_outcome)
from .treatment_bridge import (TreatmentNet, ajustar_anclas, ate_curve_treatment, att_curve_treatment,
                               cate_curve_treatment, train_treatment)

NEURONALES = ("OUTCOMENET", "TREATMENTNET", "DRPCLNET-V1", "DRPCLNET-V2")
KERNEL = ("KPV", "KAP", "DRKPV")


@dataclass
class Componente:
    """Pieza persistible de un estimador ajustado"""
    nombre: str
    tipo: str
    tensores: dict
    meta: dict
    depende_de: list = field(default_factory=list)


@dataclass
class ResultadoAjuste:
    curvas: list
    componentes: list
    plan: SplitPlan
    avisos: list = field(default_factory=list)


def _nombre_ancla(base, ancla):
    return base if ancla is None else f"{base}_a{ancla:+g}"


class EstimationPipeline:
    """
    Ajusta un estimador completo sobre un dataset

    Args:
        estimador: OUTCOMENET | TREATMENTNET | DRPCLNET-V1 | DRPCLNET-V2 | KPV | KAP | DRKPV
        objetivo: ATE | CATE | ATT
        preset: preset resuelto (secciones outcome, treatment, third_stage, ratio)
        semilla: semilla de la corrida
        anclas: anclas a′ para ATT
        ratio: método de razón de densidad (kde | kliep)
        perturbar: None, 'outcome' o 'treatment'
        sigma: escala de la perturbación de la cabeza
    """

    def __init__(self, estimador, objetivo, preset, semilla=0, anclas=None, ratio=None,
                 perturbar=None, sigma=0.0, n_grilla=None, percentiles=None, verbose=None):
        estimador = estimador.upper()
        if estimador not in NEURONALES + KERNEL:
            raise ValidationError(f"Estimador no soportado: {estimador}")
        if estimador in KERNEL and objetivo != "ATE":
            raise ValidationError(f"{estimador} solo está implementado para ATE")
        if perturbar is not None and estimador in KERNEL:
            raise ValidationError("La perturbación de cabezas solo aplica a estimadores neuronales")
        self.estimador = estimador
        self.objetivo = objetivo
        self.preset = preset
        self.semilla = int(semilla)
        self.anclas = [float(a) for a in (anclas if anclas is not None else BENCH["anclas_att"])]
        self.ratio = ratio or preset.get("ratio", {}).get("method", RATIOS["metodo"])
        self.perturbar = perturbar
        self.sigma = float(sigma)
        self.n_grilla = n_grilla or BENCH["n_grilla"]
        self.percentiles = percentiles or BENCH["percentiles"]
        self.verbose = REPORTES["verbose"] if verbose is None else verbose
        self.tercera = preset.get("third_stage")
        if objetivo == "ATT" and not self.anclas:
            raise ConfigurationError("ATT requiere al menos un ancla")

    # ==============================================
    # GRILLAS
    # ==============================================

    def grilla(self, datos):
        if self.objetivo == "CATE":
            return grilla_cate(datos.bloque("v"), n=self.n_grilla, percentiles=self.percentiles)
        return grilla_tratamiento(datos.bloque("a"), self.n_grilla, self.percentiles)

    # ==============================================
    # AJUSTE
    # ==============================================

    def ajustar(self, datos, plan=None):
        """
        Returns:
            ResultadoAjuste con una curva por ancla (o una sola)
        """
        plan = plan or SplitPlan.crear(len(datos), self.semilla)
        plan.validar(len(datos))
        datos.exigir_valido()
        grilla = self.grilla(datos)
        if self.estimador in KERNEL:
            return self._ajustar_kernel(datos, plan, grilla)
        return self._ajustar_neuronal(datos, plan, grilla)

    def _ajustar_kernel(self, datos, plan, grilla):
        d1, d2 = datos.subconjunto(plan.d1), datos.subconjunto(plan.d2)
        d3 = datos.subconjunto(plan.d3)
        lam = self.preset.get("kernel", {})
        componentes, curvas = [], []

        if self.estimador in ("KPV", "DRKPV"):
            kpv = kpv_fit(d1, d2, lam.get("lambda1"), lam.get("lambda2"))
            componentes.append(Componente("kpv", "kpv", *kpv.exportar()))
        if self.estimador in ("KAP", "DRKPV"):
            kap = kap_fit(d1, d2, lam.get("lambda1"), lam.get("lambda2"), lam.get("lambda3"))
            componentes.append(Componente("kap", "kap", *kap.exportar()))

        if self.estimador == "KPV":
            curvas.append(kpv.curva(grilla, d3))
        elif self.estimador == "KAP":
            curvas.append(kap.curva(grilla))
        else:
            curvas.append(drkpv_curve(kpv, kap, d3, grilla, lam.get("lambda_dr")))
        return ResultadoAjuste(curvas, componentes, plan)

    def _ajustar_neuronal(self, datos, plan, grilla):
        d3 = datos.subconjunto(plan.d3)
        usa_h = self.estimador != "TREATMENTNET"
        usa_phi = self.estimador != "OUTCOMENET"
        componentes, avisos = [], []

        curvas_h, curvas_phi = {}, {}
        if usa_h:
            outcome, curvas_h, comp = self._outcome(datos, plan, d3, grilla)
            componentes.append(comp)
        if usa_phi:
            tratamientos, curvas_phi, comps, ratio = self._treatment(datos, plan, d3, grilla)
            componentes.extend(comps)
            if ratio.recortes:
                avisos.append(ratio.resumen())

        if self.estimador == "OUTCOMENET":
            curvas = list(curvas_h.values())
        elif self.estimador == "TREATMENTNET":
            curvas = list(curvas_phi.values())
        else:
            version = self.estimador.rsplit("-", 1)[1]
            d2 = datos.subconjunto(plan.d2)
            curvas = []
            for ancla in curvas_h:
                dr = DrEstimator(outcome, tratamientos[ancla], version, self.objetivo, ancla, self.verbose)
                dr.ajustar(d2, self.tercera, self.semilla)
                curvas.append(dr.curva(curvas_h[ancla], curvas_phi[ancla]))
                tensores, meta = dr.exportar()
                componentes.append(Componente(_nombre_ancla("correccion", ancla), "correccion", tensores, meta,
                                              ["outcome", _nombre_ancla("treatment", ancla)]))
        return ResultadoAjuste(curvas, componentes, plan, avisos)

    def _claves_anclas(self):
        return self.anclas if self.objetivo == "ATT" else [None]

    def _outcome(self, datos, plan, d3, grilla):
        modelo = OutcomeNet(self.preset.get("outcome"), self.objetivo, self.semilla, self.verbose)
        train_outcome(modelo, datos, plan)
        if self.perturbar == "outcome":
            modelo = perturb_head(modelo, "outcome", self.sigma, self.semilla)

        tensores, meta = modelo.exportar()
        curvas = {}
        if self.objetivo == "ATE":
            curvas[None] = ate_curve_outcome(modelo, d3, grilla)
        else:
            if self.objetivo == "CATE":
                evaluador = cate_embedding_regression(modelo, d3, self.tercera, self.semilla)
                curvas[None] = evaluador.curva(grilla)
            else:
                evaluador = att_anchor_regression(modelo, d3, self.tercera, self.semilla)
                for ancla in self.anclas:
                    curvas[ancla] = evaluador.curva(grilla, ancla)
            t_reg, meta["regresor"] = evaluador.regresor.exportar("regresor")
            tensores.update(t_reg)
        return modelo, curvas, Componente("outcome", "outcome", tensores, meta)

    def _treatment(self, datos, plan, d3, grilla):
        d1, d2 = datos.subconjunto(plan.d1), datos.subconjunto(plan.d2)
        objetivo_ratio = "CATE" if self.objetivo == "CATE" else "ATE"
        ratio = ajustar_ratio(d1, objetivo_ratio, self.ratio, self.semilla)
        if self.objetivo == "CATE":
            r2 = ratio(d2.bloque("a"), d2.bloque("v"), d2.bloque("s"), d2.bloque("w"))
        else:
            r2 = ratio(d2.bloque("a"), d2.bloque("x"), d2.bloque("w"))

        base = TreatmentNet(self.preset.get("treatment"), "CATE" if self.objetivo == "CATE" else "ATE",
                            self.semilla, self.verbose)
        train_treatment(base, datos, plan, r2)

        if self.objetivo == "ATT":
            ratios = {ancla: att_ratio_from_ate(ratio, d2.bloque("a"), ancla, d2.bloque("x"), d2.bloque("w"))
                      for ancla in self.anclas}
            modelos = ajustar_anclas(base, datos, plan, ratios)
        else:
            modelos = {None: base}

        curvas, componentes = {}, []
        for k, ancla in enumerate(self._claves_anclas()):
            modelo = modelos[ancla]
            if self.perturbar == "treatment":
                modelo = perturb_head(modelo, "treatment", self.sigma, self.semilla + k)
                modelos[ancla] = modelo
            if self.objetivo == "ATE":
                curva, regresor = ate_curve_treatment(modelo, d3, grilla, self.tercera, self.semilla)
            elif self.objetivo == "CATE":
                curva, regresor = cate_curve_treatment(modelo, d3, grilla, self.tercera, self.semilla)
            else:
                curva, regresor = att_curve_treatment(modelo, d3, grilla, ancla, self.tercera, self.semilla)
            curvas[ancla] = curva
            tensores, meta = modelo.exportar()
            t_reg, meta["regresor"] = regresor.exportar("regresor")
            tensores.update(t_reg)
            meta["ancla"] = ancla
            componentes.append(Componente(_nombre_ancla("treatment", ancla), "treatment", tensores, meta))
        return modelos, curvas, componentes, ratio


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def ajustar_estimador_completo(estimador, objetivo, preset, datos, semilla=0, **kwargs):
    """
    Ajusta un estimador y devuelve el resultado

    Returns:
        ResultadoAjuste
    """
    pipeline = EstimationPipeline(estimador, objetivo, preset, semilla, **kwargs)
    resultado = pipeline.ajustar(datos)
    print(f"✓ {pipeline.estimador} ({objetivo}) ajustado: {len(resultado.curvas)} curva(s), "
          f"{len(resultado.componentes)} componente(s)")
    for aviso in resultado.avisos:
        print(f"⚠ {aviso}")
    return resultado


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    from config import cargar_preset
    from src.curves import causal_mse
    from src.dgp import gen_noisy_proxy, oracle_noisy_proxy

    datos = gen_noisy_proxy(1, 2000, semilla=0)
    resultado = ajustar_estimador_completo("KAP", "ATE", cargar_preset("noisy-proxy"), datos)
    curva = resultado.curvas[0]
    print(f"  MSE causal = {causal_mse(curva, oracle_noisy_proxy(1, curva.grilla)):.5f}")
