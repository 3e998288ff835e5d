"""
Fixtures compartidas de la suite
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from config import cargar_preset, fusionar_config
from src.dgp import generar
from src.ingestion import SplitPlan

_RED_CHICA = {"hidden": [16], "norm": "LN", "activation": "GELU", "dropout": 0.0}
_LADO_RAPIDO = {"epochs": 2, "batch_size": 64, "t1": 1, "t2": 1, "k": 3}

# Entrenamientos de juguete: pocas épocas y redes chicas
PRESET_RAPIDO = {
    "outcome": {
        **_LADO_RAPIDO,
        "stage1": {**_RED_CHICA, "out": 8},
        "w": {**_RED_CHICA, "out": 4},
        "a": {**_RED_CHICA, "out": 3},
    },
    "treatment": {
        **_LADO_RAPIDO,
        "stage1": {**_RED_CHICA, "out": 8},
        "z": {**_RED_CHICA, "out": 4},
        "a": {**_RED_CHICA, "out": 3},
    },
    "third_stage": {"hidden": [8], "epochs": 3, "batch_size": 64},
}


@pytest.fixture
def preset_rapido():
    """Preset de baja dimensión con entrenamiento mínimo"""
    return fusionar_config(cargar_preset("lowdim-ate"), PRESET_RAPIDO)


@pytest.fixture
def datos_lowdim():
    return generar("lowdim-ate", 200, semilla=0)


@pytest.fixture
def plan_lowdim(datos_lowdim):
    return SplitPlan.crear(len(datos_lowdim), semilla=0)


@pytest.fixture
def datos_noisy():
    return generar("noisy-proxy-1", 60, semilla=3)
