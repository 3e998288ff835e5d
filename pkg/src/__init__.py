"""
Aprendizaje causal con proxies: puentes neuronales, baselines de kernel y benchmarks
"""

from .ingestion import ProxyDataset, SplitPlan, cargar_dataset_completo
from .dgp import generar, oraculo
from .outcome_bridge import OutcomeNet, analizar_outcome_completo
from .treatment_bridge import TreatmentNet, analizar_treatment_completo
from .dr import DrEstimator, fit_dr_v1, fit_dr_v2, perturb_head
from .kernel_baselines import KapModel, KpvModel, drkpv_curve
from .density_ratio import ajustar_ratio
from .analytics import BenchAnalytics, analizar_resultados_completo
from .visualizer import generar_visualizaciones_completas

__all__ = [
    'ProxyDataset',
    'SplitPlan',
    'cargar_dataset_completo',
    'generar',
    'oraculo',
    'OutcomeNet',
    'analizar_outcome_completo',
    'TreatmentNet',
    'analizar_treatment_completo',
    'DrEstimator',
    'fit_dr_v1',
    'fit_dr_v2',
    'perturb_head',
    'KpvModel',
    'KapModel',
    'drkpv_curve',
    'ajustar_ratio',
    'BenchAnalytics',
    'analizar_resultados_completo',
    'generar_visualizaciones_completas'
]
