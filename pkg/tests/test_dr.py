import numpy as np
import pytest
import torch

from src.dr import DrEstimator, fit_dr_v1, fit_dr_v2, perturb_head, perturbacion_cabeza
from src.errors import ConfigurationError, ShapeError, StateError
from src.outcome_bridge import OutcomeNet, ate_curve_outcome, train_outcome
from src.regressor import ThirdStageRegressor
from src.treatment_bridge import TreatmentNet, ate_curve_treatment, train_treatment


@pytest.fixture
def puentes(preset_rapido, datos_lowdim, plan_lowdim):
    outcome = train_outcome(OutcomeNet(preset_rapido["outcome"], verbose=False), datos_lowdim, plan_lowdim)
    ratios = np.random.default_rng(0).uniform(0.5, 2.0, len(plan_lowdim.d2))
    treatment = train_treatment(TreatmentNet(preset_rapido["treatment"], verbose=False),
                                datos_lowdim, plan_lowdim, ratios)
    return outcome, treatment


def _con_cabeza_nula(modelo):
    copia = modelo.clonar()
    copia.head = torch.zeros_like(copia.head)
    if hasattr(copia, "media_y"):
        copia.media_y = 0.0
    return copia


class TestIdentidades:

    def test_v1_sin_tratamiento_es_la_curva_del_resultado(self, puentes, datos_lowdim, plan_lowdim, preset_rapido):
        outcome, treatment = puentes
        d2 = datos_lowdim.subconjunto(plan_lowdim.d2)
        grilla = np.linspace(-1.0, 1.0, 9)
        curva_h = ate_curve_outcome(outcome, d2, grilla)
        dr = fit_dr_v1(outcome, _con_cabeza_nula(treatment), d2, preset_rapido["third_stage"])
        assert np.array_equal(dr.curva(curva_h).valores, curva_h.valores)
        assert dr.curva(curva_h).etiqueta == "DRPCLNET-V1"

    def test_v2_sin_resultado_es_la_curva_del_tratamiento(self, puentes, datos_lowdim, plan_lowdim,
                                                          preset_rapido):
        outcome, treatment = puentes
        nulo = _con_cabeza_nula(outcome)
        d2 = datos_lowdim.subconjunto(plan_lowdim.d2)
        grilla = np.linspace(-1.0, 1.0, 9)
        curva_h = ate_curve_outcome(nulo, d2, grilla)
        curva_phi, _ = ate_curve_treatment(treatment, d2, grilla, preset_rapido["third_stage"])
        dr = fit_dr_v2(nulo, treatment, d2, preset_rapido["third_stage"])
        assert np.array_equal(dr.curva(curva_h, curva_phi).valores, curva_phi.valores)

    def test_pseudo_resultados(self, puentes, datos_lowdim):
        outcome, treatment = puentes
        h, phi = outcome.evaluar_dataset(datos_lowdim), treatment.evaluar_dataset(datos_lowdim)
        y = datos_lowdim.bloque("y")[:, 0]
        v1 = DrEstimator(outcome, treatment, "V1").pseudo_resultados(datos_lowdim)
        v2 = DrEstimator(outcome, treatment, "V2").pseudo_resultados(datos_lowdim)
        assert np.allclose(v1, phi * (y - h))
        assert np.allclose(v2, phi * h)

    def test_exportar_correccion(self, puentes, datos_lowdim, preset_rapido):
        dr = fit_dr_v1(*puentes, datos_lowdim, preset_rapido["third_stage"])
        tensores, meta = dr.exportar()
        assert meta["version"] == "V1"
        copia = ThirdStageRegressor.desde_estado(tensores, meta["regresor"], "correccion")
        grilla = np.array([-0.3, 0.4])
        assert np.allclose(copia.predecir(grilla.reshape(-1, 1)), dr.k(grilla), atol=1e-12)


class TestErrores:

    def test_version_desconocida(self, puentes):
        with pytest.raises(ConfigurationError):
            DrEstimator(*puentes, version="V3")

    def test_att_sin_ancla(self, puentes):
        with pytest.raises(ConfigurationError):
            DrEstimator(*puentes, objetivo="ATT")

    def test_puentes_invertidos(self, puentes):
        outcome, treatment = puentes
        with pytest.raises(ConfigurationError):
            DrEstimator(treatment, outcome)

    def test_objetivos_incompatibles(self, puentes):
        with pytest.raises(ConfigurationError):
            DrEstimator(*puentes, objetivo="CATE")

    def test_puente_sin_ajustar(self, puentes, preset_rapido):
        outcome, _ = puentes
        with pytest.raises(StateError):
            DrEstimator(outcome, TreatmentNet(preset_rapido["treatment"], verbose=False))

    def test_v2_requiere_curva_del_tratamiento(self, puentes, datos_lowdim, preset_rapido):
        outcome, treatment = puentes
        dr = fit_dr_v2(outcome, treatment, datos_lowdim, preset_rapido["third_stage"])
        curva_h = ate_curve_outcome(outcome, datos_lowdim, np.array([0.0, 0.5]))
        with pytest.raises(ConfigurationError):
            dr.curva(curva_h)
        otra, _ = ate_curve_treatment(treatment, datos_lowdim, np.array([0.0, 0.6]), preset_rapido["third_stage"])
        with pytest.raises(ShapeError):
            dr.curva(curva_h, otra)

    def test_correccion_sin_ajustar(self, puentes):
        with pytest.raises(StateError):
            DrEstimator(*puentes).k(np.zeros(2))


class TestPerturbacion:

    def test_no_negativa_con_varianza_esperada(self):
        eps = perturbacion_cabeza(10_000, 0.3, semilla=0)
        assert torch.all(eps >= 0)
        assert (eps ** 2).mean().item() == pytest.approx(0.09, rel=0.05)

    def test_sigma_negativo(self):
        with pytest.raises(ConfigurationError):
            perturbacion_cabeza(3, -1.0)

    def test_sigma_cero_es_identidad(self, puentes, datos_lowdim):
        outcome, _ = puentes
        copia = perturb_head(outcome, "outcome", 0.0)
        assert torch.equal(copia.head, outcome.head)
        assert np.array_equal(copia.evaluar_dataset(datos_lowdim), outcome.evaluar_dataset(datos_lowdim))

    def test_reproducible_y_sin_efectos_laterales(self, puentes):
        _, treatment = puentes
        original = treatment.head.clone()
        a = perturb_head(treatment, "treatment", 0.5, semilla=7)
        b = perturb_head(treatment, "treatment", 0.5, semilla=7)
        assert torch.equal(a.head, b.head)
        assert torch.all(a.head >= original)
        assert torch.equal(treatment.head, original)

    def test_lado_equivocado(self, puentes):
        outcome, _ = puentes
        with pytest.raises(ConfigurationError):
            perturb_head(outcome, "treatment", 0.1)
        with pytest.raises(ConfigurationError):
            perturb_head(outcome, "ambos", 0.1)
