"""
Estimación de razones de densidad para el puente de tratamiento

- KDE gaussiana por bloque con ancho elegido por verosimilitud en hold-out
- KLIEP con expansión de kernels gaussianos y ancho por validación cruzada
- Razón ATT a partir de la razón ATE: r(a)/r(a′)

Todas las razones se calculan en dominio logarítmico y se recortan a
RATIOS["clip"]; los recortes se cuentan.
"""

import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics.pairwise import rbf_kernel
from sklearn.model_selection import KFold, train_test_split
from sklearn.neighbors import KernelDensity

sys.path.append(str(Path(__file__).parent.parent))
from config import RATIOS, workers_por_defecto

from .errors import ConfigurationError, DataError, ShapeError
from .kernel_baselines import median_heuristic


def _matriz(X):
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(len(X), -1)


def _concatenar(*bloques):
    partes = [_matriz(b) for b in bloques if b is not None and _matriz(b).shape[1] > 0]
    if not partes:
        return None
    return np.column_stack(partes)


# ==============================================
# KDE
# ==============================================

@dataclass
class _BloqueKde:
    kde: KernelDensity
    desvio: np.ndarray
    factor: float
    puntajes: list = field(default_factory=list)


class KdeModel:
    """
    Densidades KDE por bloque de variables

    Cada bloque se escala por el desvío de sus columnas; el ancho es un factor
    sobre los datos escalados y se elige por verosimilitud en un 20% retenido.
    """

    def __init__(self, semilla=0, factores=None):
        self.semilla = int(semilla)
        lo, hi = RATIOS["rango_factores"]
        self.factores = np.asarray(factores if factores is not None
                                   else np.logspace(np.log10(lo), np.log10(hi), RATIOS["n_anchos"]))
        self.bloques = {}

    def ajustar_bloque(self, nombre, X):
        X = _matriz(X)
        if len(X) < RATIOS["min_muestras"]:
            raise DataError(f"KDE '{nombre}' requiere al menos {RATIOS['min_muestras']} muestras, hay {len(X)}")
        if not np.all(np.isfinite(X)):
            raise DataError(f"Valores no finitos en el bloque '{nombre}'")
        desvio = X.std(axis=0)
        if np.any(desvio == 0):
            raise DataError(f"Columna de varianza cero en el bloque '{nombre}'")

        Xs = X / desvio
        entrenamiento, validacion = train_test_split(
            Xs, test_size=RATIOS["fraccion_validacion"], random_state=self.semilla
        )
        puntajes = [KernelDensity(bandwidth=float(f)).fit(entrenamiento).score(validacion)
                    for f in self.factores]
        mejor = float(self.factores[int(np.argmax(puntajes))])
        self.bloques[nombre] = _BloqueKde(KernelDensity(bandwidth=mejor).fit(Xs), desvio, mejor, puntajes)
        return self

    def log_densidad(self, nombre, X):
        """log p(x) en la escala original (incluye el jacobiano del escalado)"""
        bloque = self.bloques[nombre]
        X = _matriz(X)
        if X.shape[1] != len(bloque.desvio):
            raise ShapeError(f"El bloque '{nombre}' tiene {len(bloque.desvio)} columnas, se recibieron {X.shape[1]}")
        return bloque.kde.score_samples(X / bloque.desvio) - np.sum(np.log(bloque.desvio))

    def anchos(self):
        return {n: b.factor for n, b in self.bloques.items()}


def kde_fit(bloques, semilla=0, factores=None):
    """
    Ajusta una KDE por bloque

    Args:
        bloques: dict nombre -> matriz de muestras
        semilla: semilla del split hold-out
        factores: grilla de anchos (default: 20 valores log-espaciados en [1e-2, 1e1])

    Returns:
        KdeModel
    """
    modelo = KdeModel(semilla, factores)
    for nombre, X in bloques.items():
        modelo.ajustar_bloque(nombre, X)
    return modelo


# ==============================================
# RAZONES
# ==============================================

class RatioEstimate:
    """
    Razón de densidad evaluable

    Args:
        log_razon: callable(*bloques) -> log r sin recortar
        origen: 'kde', 'kliep' o 'att'
    """

    def __init__(self, log_razon, origen, modelo=None):
        self.log_razon = log_razon
        self.origen = origen
        self.modelo = modelo
        self.recortes = 0
        self.evaluaciones = 0
        self._lock = threading.Lock()

    def __call__(self, *bloques):
        log_r = np.asarray(self.log_razon(*bloques), dtype=np.float64)
        lo, hi = RATIOS["clip"]
        recortados = int(np.sum((log_r < np.log(lo)) | (log_r > np.log(hi))))
        with self._lock:
            self.recortes += recortados
            self.evaluaciones += log_r.size
        return np.exp(np.clip(log_r, np.log(lo), np.log(hi)))

    def resumen(self):
        return f"razón {self.origen}: {self.recortes} recortes en {self.evaluaciones} evaluaciones"


def kde_ratio_ate(datos, semilla=0, factores=None):
    """
    r̂_ATE(a, x, w) = p(a) p(x, w) / p(a, x, w) con KDE

    Args:
        datos: ProxyDataset de ajuste

    Returns:
        RatioEstimate invocable como r(a, x, w)
    """
    a, xw = datos.bloque("a"), _concatenar(datos.bloque("x"), datos.bloque("w"))
    bloques = {"a": a}
    if xw is not None:
        bloques["xw"] = xw
        bloques["axw"] = np.column_stack([a, xw])
    modelo = kde_fit(bloques, semilla, factores)

    def log_razon(a, x, w):
        xw = _concatenar(x, w)
        if xw is None:
            return np.zeros(len(_matriz(a)))
        conjunto = np.column_stack([_matriz(a), xw])
        return modelo.log_densidad("a", a) + modelo.log_densidad("xw", xw) - modelo.log_densidad("axw", conjunto)

    return RatioEstimate(log_razon, "kde", modelo)


def kde_ratio_cate(datos, semilla=0, factores=None):
    """
    r̂_CATE(a, v, s, w) = p(a, v) p(v, s, w) / (p(a, v, s, w) p(v)) con KDE

    Returns:
        RatioEstimate invocable como r(a, v, s, w)
    """
    if not datos.tiene("v"):
        raise DataError("La razón CATE requiere la columna v")
    a, v = datos.bloque("a"), datos.bloque("v")
    vsw = _concatenar(v, datos.bloque("s"), datos.bloque("w"))
    modelo = kde_fit({
        "v": v,
        "av": np.column_stack([a, v]),
        "vsw": vsw,
        "avsw": np.column_stack([a, vsw]),
    }, semilla, factores)

    def log_razon(a, v, s, w):
        vsw = _concatenar(v, s, w)
        av = np.column_stack([_matriz(a), _matriz(v)])
        return (modelo.log_densidad("av", av) + modelo.log_densidad("vsw", vsw)
                - modelo.log_densidad("avsw", np.column_stack([_matriz(a), vsw]))
                - modelo.log_densidad("v", v))

    return RatioEstimate(log_razon, "kde", modelo)


def att_ratio_from_ate(r_ate, a, ancla, x, w):
    """
    r̂_ATT(a, a′, x, w) = r̂_ATE(a, x, w) / r̂_ATE(a′, x, w)

    Con a = a′ el resultado es exactamente 1.
    """
    a = _matriz(a)
    denominador = r_ate(np.full_like(a, float(ancla)), x, w)
    if np.any(denominador == 0):
        raise DataError("Razón ATE nula en el ancla", fila=int(np.argmax(denominador == 0)))
    return r_ate(a, x, w) / denominador


# ==============================================
# KLIEP
# ==============================================

@dataclass
class KliepModel:
    """w(u) = Σ_l α_l exp(-||u - c_l||² / 2σ²) sobre datos escalados"""
    centros: np.ndarray
    alfa: np.ndarray
    sigma: float
    escala: np.ndarray
    objetivo: float
    convergio: bool
    puntajes_cv: dict = field(default_factory=dict)

    def evaluar(self, X):
        K = rbf_kernel(_matriz(X) / self.escala, self.centros, gamma=1.0 / (2.0 * self.sigma ** 2))
        return K @ self.alfa


def _kliep_optimizar(numerador, denominador, centros, sigma):
    """Ascenso de gradiente proyectado sobre α (≥ 0, media en el denominador = 1)"""
    cfg = RATIOS["kliep"]
    eps = 1e-300
    gamma = 1.0 / (2.0 * sigma ** 2)
    A = rbf_kernel(numerador, centros, gamma=gamma)
    b = rbf_kernel(denominador, centros, gamma=gamma).mean(axis=0)

    alfa = np.ones(len(centros)) / len(centros)
    alfa /= max(b @ alfa, eps)
    objetivo = np.mean(np.log(A @ alfa + eps))
    mejor, mejor_alfa = objetivo, alfa.copy()
    convergio = False
    for _ in range(cfg["iteraciones"]):
        previo = objetivo
        alfa = alfa + cfg["paso"] * A.T @ (1.0 / (A @ alfa + eps))
        alfa = alfa + b * (1.0 - b @ alfa) / max(b @ b, eps)
        alfa = np.maximum(0.0, alfa)
        alfa = alfa / max(b @ alfa, eps)
        objetivo = np.mean(np.log(A @ alfa + eps))
        if objetivo > mejor:
            mejor, mejor_alfa = objetivo, alfa.copy()
        if abs(objetivo - previo) <= cfg["tolerancia"]:
            convergio = True
            break
    return mejor_alfa, mejor, convergio


def _elegir_centros(n, cantidad, semilla):
    rng = np.random.default_rng(semilla)
    return rng.choice(n, size=min(n, cantidad), replace=False)


def _puntaje_cv(numerador, denominador, sigma, semilla):
    cfg = RATIOS["kliep"]
    puntajes = []
    for entrenamiento, prueba in KFold(cfg["folds"], shuffle=True, random_state=semilla).split(numerador):
        centros = numerador[entrenamiento][_elegir_centros(len(entrenamiento), cfg["centros"], semilla)]
        alfa, _, _ = _kliep_optimizar(numerador[entrenamiento], denominador, centros, sigma)
        K = rbf_kernel(numerador[prueba], centros, gamma=1.0 / (2.0 * sigma ** 2))
        puntajes.append(np.mean(np.log(K @ alfa + 1e-300)))
    return float(np.mean(puntajes))


def kliep_fit(numerador, denominador, anchos=None, semilla=0, n_jobs=None, verbose=False):
    """
    KLIEP: razón p_num / p_den como expansión no negativa de kernels

    Args:
        numerador: muestras de la densidad del numerador
        denominador: muestras de la densidad del denominador
        anchos: grilla de σ (default: mediana de distancias × factores)
        semilla: semilla de centros y folds

    Returns:
        KliepModel
    """
    cfg = RATIOS["kliep"]
    numerador, denominador = _matriz(numerador), _matriz(denominador)
    if numerador.shape[1] != denominador.shape[1]:
        raise ShapeError("Numerador y denominador con distinta dimensión")
    if len(numerador) < cfg["folds"]:
        raise DataError(f"KLIEP requiere al menos {cfg['folds']} muestras del numerador")
    escala = np.vstack([numerador, denominador]).std(axis=0)
    escala = np.where(escala > 0, escala, 1.0)
    numerador, denominador = numerador / escala, denominador / escala

    if anchos is None:
        anchos = [median_heuristic(numerador, semilla=semilla) * f for f in cfg["factores_ancho"]]
    anchos = [float(s) for s in anchos]
    if any(s <= 0 for s in anchos):
        raise ConfigurationError("Los anchos de KLIEP deben ser positivos")

    puntajes = Parallel(n_jobs=n_jobs or workers_por_defecto(), prefer="threads")(
        delayed(_puntaje_cv)(numerador, denominador, s, semilla) for s in anchos
    )
    sigma = anchos[int(np.argmax(puntajes))]
    centros = numerador[_elegir_centros(len(numerador), cfg["centros"], semilla)]
    alfa, objetivo, convergio = _kliep_optimizar(numerador, denominador, centros, sigma)
    if verbose:
        marca = "✓" if convergio else "⚠"
        print(f"{marca} KLIEP: σ={sigma:.4f} objetivo={objetivo:.4f} convergió={convergio}")
    return KliepModel(centros, alfa, sigma, escala, objetivo, convergio, dict(zip(anchos, puntajes)))


def kliep_ratio_ate(datos, semilla=0, n_jobs=None):
    """
    r̂_ATE con KLIEP: numerador (a permutado, x, w), denominador (a, x, w)

    Returns:
        RatioEstimate invocable como r(a, x, w)
    """
    a = datos.bloque("a")
    xw = _concatenar(datos.bloque("x"), datos.bloque("w"))
    if xw is None:
        raise DataError("KLIEP requiere proxies W")
    permutado = a[np.random.default_rng(semilla).permutation(len(a))]
    modelo = kliep_fit(np.column_stack([permutado, xw]), np.column_stack([a, xw]),
                       semilla=semilla, n_jobs=n_jobs)

    def log_razon(a, x, w):
        valores = modelo.evaluar(np.column_stack([_matriz(a), _concatenar(x, w)]))
        with np.errstate(divide="ignore"):
            return np.log(valores)

    return RatioEstimate(log_razon, "kliep", modelo)


def ajustar_ratio(datos, objetivo="ATE", metodo=None, semilla=0):
    """
    Razón de densidad para un objetivo

    KLIEP solo está disponible para ATE / ATT.
    """
    metodo = metodo or RATIOS["metodo"]
    if metodo not in ("kde", "kliep"):
        raise ConfigurationError(f"Método de razón desconocido: {metodo}")
    if objetivo == "CATE":
        if metodo == "kliep":
            raise ConfigurationError("KLIEP no está disponible para CATE")
        return kde_ratio_cate(datos, semilla)
    if metodo == "kliep":
        return kliep_ratio_ate(datos, semilla)
    return kde_ratio_ate(datos, semilla)
