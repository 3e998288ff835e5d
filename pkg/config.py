"""
Configuración centralizada del laboratorio de aprendizaje causal con proxies
"""

from pathlib import Path
import copy
import hashlib
import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# ==============================================
# RUTAS DEL PROYECTO
# ==============================================
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"
SRC_DIR = BASE_DIR / "src"
PRESETS_DIR = BASE_DIR / "presets"
OUTPUTS_DIR = BASE_DIR / "outputs"

# ==============================================
# NUMÉRICO
# ==============================================
# Todo el cómputo se hace en float64
NUMERICO = {
    "dtype": "float64",
    "jitter_relativo": 1e-12,      # jitter = 1e-12 * traza / d en sistemas SPD
    "tolerancia_residuo": 1e-9,    # residuo relativo de ecuaciones normales
    "tolerancia_gradiente": 1e-14,
}

# ==============================================
# REDES Y OPTIMIZADORES
# ==============================================
REDES = {
    "eps_norma": 1e-5,
    "momentum_bn": 0.1,
    "delta_huber": 1.0,
    "adamw": {"betas": (0.9, 0.999), "eps": 1e-8},
    "lbfgs": {
        "memoria": 10,
        "c_armijo": 1e-4,
        "factor_retroceso": 0.5,
        "max_retrocesos": 30,
    },
}

# Valores por defecto de entrenamiento de los puentes; los presets los pisan
ENTRENAMIENTO = {
    "epochs": 100,
    "batch_size": 512,
    "lr_stage1": 1e-3,
    "lr_stage2": 1e-3,
    "weight_decay": 1e-5,
    "t1": 10,
    "t2": 1,
    "k": 10,
    "lbfgs_lr": 1.0,
    "loss": "logcosh",
    "lambda1": [1e-4, 1e-2],
    "lambda_aux": [1e-5, 1e-3],
    "lambda2": [1e-3, 10.0],
    "anneal": "exponential",
    "joint_ax": False,
    "standardize": True,
    "share_stage1": True,
}

# Regresor de tercera etapa
TERCERA_ETAPA = {
    "kind": "mlp",
    "hidden": [32, 64],
    "dropout": 0.01,
    "activation": "GELU",
    "epochs": 100,
    "batch_size": 256,
    "lr": 1e-3,
    "weight_decay": 1e-6,
    "ridge": 1e-3,        # solo para kind = "krr"
}

# ==============================================
# RAZONES DE DENSIDAD
# ==============================================
RATIOS = {
    "metodo": "kde",
    "clip": (1e-6, 1e6),
    "n_anchos": 20,
    "rango_factores": (1e-2, 1e1),
    "fraccion_validacion": 0.2,
    "min_muestras": 20,
    "percentil_winsor": 99.5,
    "kliep": {
        "iteraciones": 500,
        "paso": 1e-2,
        "centros": 100,
        "folds": 5,
        "factores_ancho": [0.25, 0.5, 1.0, 2.0, 4.0],
        "tolerancia": 1e-6,
    },
}

# ==============================================
# BASELINES DE KERNEL
# ==============================================
KERNELS = {
    "lambda": 1e-3,
    "max_muestras_mediana": 1000,
}

# ==============================================
# BENCHMARKS
# ==============================================
BENCH = {
    "n_grilla": 100,
    "percentiles": (2.5, 97.5),
    "semillas": 10,
    "fracciones": (0.5, 0.5),
    "anclas_att": [-1.0, -0.5, 0.5, 1.0],
    "valores_a_cate": [1.0],
    "muestras_oraculo": 1_000_000,
    "variable_workers": "DRPCL_WORKERS",
}

# Benchmark -> preset, objetivos permitidos y si tiene covariables X
BENCHMARKS = {
    "lowdim-ate": {"preset": "lowdim-ate", "objetivos": ["ATE"], "covariables": False},
    "att": {"preset": "att", "objetivos": ["ATT"], "covariables": False},
    "highdim-ate": {"preset": "highdim-ate", "objetivos": ["ATE"], "covariables": True},
    "cate": {"preset": "cate", "objetivos": ["CATE"], "covariables": True},
    "cate-broken-w": {"preset": "cate", "objetivos": ["CATE"], "covariables": True},
    "cate-broken-z": {"preset": "cate", "objetivos": ["CATE"], "covariables": True},
    "cate-broken-both": {"preset": "cate", "objetivos": ["CATE"], "covariables": True},
}
for _k in range(1, 7):
    BENCHMARKS[f"noisy-proxy-{_k}"] = {
        "preset": "noisy-proxy", "objetivos": ["ATE"], "covariables": False
    }

ESTIMADORES = [
    "PMMR", "KPV", "KAP", "DRKPV",
    "NMMR-U", "NMMR-V", "DFPV",
    "PKIPW", "PKDR",
    "OUTCOMENET", "TREATMENTNET",
    "DRPCLNET-V1", "DRPCLNET-V2",
]
# Estimadores que este repositorio implementa; el resto se reporta como no soportado
ESTIMADORES_IMPLEMENTADOS = [
    "KPV", "KAP", "DRKPV",
    "OUTCOMENET", "TREATMENTNET",
    "DRPCLNET-V1", "DRPCLNET-V2",
]

# ==============================================
# FORMATO DE DATOS
# ==============================================
FORMATO_DATOS = {
    "separador": ",",
    "roles_unicos": ["a", "y", "v"],
    "roles_multiples": ["z", "w", "x", "s"],
    "decimales": 17,
}

# ==============================================
# REPORTES
# ==============================================
REPORTES = {
    "verbose": True,
    "cada_epocas": 10,
    "decimales": 6,
    "archivo_resultados": "resultados.csv",
    "archivo_tiempos": "tiempos.csv",
    "archivo_resumen": "resumen.csv",
    "archivo_curvas": "curvas.csv",
    "archivo_config": "config.json",
}


# ==============================================
# PRESETS
# ==============================================

def _fusionar(base, extra):
    """Fusión recursiva de diccionarios; extra pisa a base"""
    resultado = copy.deepcopy(base)
    for clave, valor in extra.items():
        if isinstance(valor, dict) and isinstance(resultado.get(clave), dict):
            resultado[clave] = _fusionar(resultado[clave], valor)
        else:
            resultado[clave] = copy.deepcopy(valor)
    return resultado


def _leer_preset(nombre, directorio):
    """TOML crudo con la herencia resuelta; las tablas por_n quedan sin aplicar"""
    ruta = Path(nombre)
    if ruta.suffix != ".toml":
        ruta = directorio / f"{nombre}.toml"
    if not ruta.exists():
        from src.errors import ConfigurationError
        raise ConfigurationError(f"Preset no encontrado: {ruta}")

    with open(ruta, "rb") as f:
        datos = tomllib.load(f)

    padre = datos.pop("inherits", None)
    if padre:
        datos = _fusionar(_leer_preset(padre, directorio), datos)
    return datos


def preset_para_n(preset, N=None):
    """
    Aplica las tablas `[por_n."<umbral>"]` de un preset

    Cada umbral es un N mínimo: se fusionan, en orden creciente, todas las tablas
    con umbral <= N. Sin N solo se descartan.

    Args:
        preset: dict de preset, con o sin clave por_n
        N: tamaño de muestra de la corrida

    Returns:
        dict: preset sin la clave por_n
    """
    resultado = copy.deepcopy(preset)
    tablas = resultado.pop("por_n", None) or {}
    try:
        umbrales = sorted(((int(clave), tabla) for clave, tabla in tablas.items()), key=lambda t: t[0])
    except ValueError:
        from src.errors import ConfigurationError
        raise ConfigurationError(f"Umbral de N inválido en por_n: {sorted(tablas)}")
    if N is None:
        return resultado
    for umbral, tabla in umbrales:
        if int(N) >= umbral:
            resultado = _fusionar(resultado, tabla)
    return resultado


def cargar_preset(nombre, directorio=None, N=None):
    """
    Carga un preset TOML de hiperparámetros

    Un preset puede declarar `inherits = "otro"` para partir de otro preset y
    tablas `[por_n."<umbral>"]` con los ajustes que cambian con el tamaño de muestra.

    Args:
        nombre: nombre del preset (sin extensión) o ruta a un .toml
        directorio: carpeta de presets (default: PRESETS_DIR)
        N: tamaño de muestra; selecciona las tablas por_n que correspondan

    Returns:
        dict: preset resuelto
    """
    directorio = Path(directorio) if directorio else PRESETS_DIR
    return preset_para_n(_leer_preset(nombre, directorio), N)


def fusionar_config(base, extra):
    """Versión pública de la fusión de configuraciones"""
    return _fusionar(base, extra or {})


def hash_config(config):
    """SHA-256 del JSON canónico de una configuración"""
    texto = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(texto.encode("utf-8")).hexdigest()


def workers_por_defecto():
    """Cantidad de workers paralelos (variable de entorno DRPCL_WORKERS)"""
    valor = os.environ.get(BENCH["variable_workers"])
    if valor:
        try:
            return max(1, int(valor))
        except ValueError:
            pass
    return os.cpu_count() or 1
