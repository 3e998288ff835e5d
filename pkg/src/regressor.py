"""
Regresor de tercera etapa compartido

Lo usan las curvas de TreatmentNet, las regresiones de embeddings de OutcomeNet
(CATE / ATT) y las correcciones doblemente robustas. Dos variantes:

- 'mlp': red totalmente conectada entrenada con AdamW sobre MSE, con entradas y
  objetivos estandarizados.
- 'krr': kernel ridge en forma cerrada con RBF y ancho por heurística de la
  mediana; es lineal en los objetivos.
"""

import sys
from pathlib import Path

import numpy as np
import torch
from scipy import linalg
from sklearn.metrics.pairwise import rbf_kernel

sys.path.append(str(Path(__file__).parent.parent))
from config import TERCERA_ETAPA, REPORTES, fusionar_config

from .errors import ConfigurationError, DataError, ShapeError, StateError
from .kernel_baselines import median_heuristic
from .linalg_ad import DTYPE, como_tensor
from .nets import (AdamWState, Featurizer, MLPConfig, adamw_step, exportar_featurizer,
                   restaurar_featurizer)


def _estandarizador(X):
    media = X.mean(axis=0)
    desvio = X.std(axis=0)
    desvio = np.where(desvio > 0, desvio, 1.0)
    return media, desvio


class ThirdStageRegressor:
    """
    Regresión de objetivos escalares o vectoriales sobre entradas de baja dimensión

    Args:
        config: sección `third_stage` del preset (se completa con TERCERA_ETAPA)
        semilla: semilla de inicialización y de los lotes
        verbose: imprimir progreso
    """

    def __init__(self, config=None, semilla=0, verbose=None):
        self.config = fusionar_config(TERCERA_ETAPA, config)
        if self.config["kind"] not in ("mlp", "krr"):
            raise ConfigurationError(f"Tipo de regresor desconocido: {self.config['kind']}")
        self.semilla = int(semilla)
        self.verbose = REPORTES["verbose"] if verbose is None else verbose
        self.ajustado = False
        self.vectorial = False
        self.constante = None
        self.red = None
        self.historial = []
        self.warnings = []

    # ==============================================
    # AJUSTE
    # ==============================================

    def ajustar(self, X, Y):
        """
        Ajusta la regresión

        Args:
            X: entradas (n, d) o (n,)
            Y: objetivos (n,) o (n, k)

        Returns:
            self
        """
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(len(X), -1)
        Y = np.asarray(Y, dtype=np.float64)
        self.vectorial = Y.ndim == 2
        Y = Y.reshape(len(Y), -1)
        if len(X) != len(Y):
            raise ShapeError(f"X tiene {len(X)} filas e Y {len(Y)}")
        if len(X) == 0:
            raise DataError("No hay datos para la regresión")
        if not np.all(np.isfinite(Y)):
            fila = int(np.argwhere(~np.isfinite(Y))[0][0])
            raise DataError("Objetivos no finitos en la regresión", fila=fila)

        self.media_x, self.desvio_x = _estandarizador(X)
        self.dim_salida = Y.shape[1]

        if self.config["kind"] == "krr":
            self._ajustar_krr((X - self.media_x) / self.desvio_x, Y)
        elif np.all(Y.std(axis=0) == 0):
            self.constante = Y[0].copy()
        else:
            self._ajustar_mlp((X - self.media_x) / self.desvio_x, Y)

        self.ajustado = True
        return self

    def _ajustar_krr(self, Xs, Y):
        n = len(Xs)
        self.sigma = median_heuristic(Xs, semilla=self.semilla)
        K = rbf_kernel(Xs, Xs, gamma=1.0 / (2.0 * self.sigma ** 2))
        K[np.diag_indices_from(K)] += n * self.config["ridge"]
        self.x_entrenamiento = Xs
        self.alfa = linalg.solve(K, Y, assume_a="pos")

    def _ajustar_mlp(self, Xs, Y):
        cfg = self.config
        self.media_y, self.desvio_y = _estandarizador(Y)
        Ys = (Y - self.media_y) / self.desvio_y

        spec = {
            "hidden": list(cfg["hidden"]), "out": self.dim_salida,
            "norm": "none", "activation": cfg["activation"], "dropout": cfg["dropout"],
            "final_norm": "none", "final_activation": "none", "final_dropout": 0.0,
        }
        self.red = Featurizer(MLPConfig.desde_preset(Xs.shape[1], spec, self.semilla))
        optimizador = AdamWState(self.red.named_parameters(), cfg["lr"], cfg["weight_decay"])

        Xt, Yt = como_tensor(Xs), como_tensor(Ys)
        rng = np.random.default_rng(self.semilla)
        n = len(Xs)
        lotes = max(1, int(np.ceil(n / cfg["batch_size"])))
        for epoca in range(cfg["epochs"]):
            total = 0.0
            for idx in np.array_split(rng.permutation(n), lotes):
                pred = self.red(Xt[idx], "train")
                perdida = ((pred - Yt[idx]) ** 2).mean()
                if not torch.isfinite(perdida):
                    raise DataError(f"Pérdida no finita en la tercera etapa (época {epoca})")
                optimizador.zero_grad()
                perdida.backward()
                adamw_step(optimizador)
                total += float(perdida) * len(idx)
            self.historial.append(total / n)
            if self.verbose and (epoca + 1) % REPORTES["cada_epocas"] == 0:
                print(f"  tercera etapa | época {epoca + 1}/{cfg['epochs']} | mse {total / n:.5f}")

    # ==============================================
    # PREDICCIÓN
    # ==============================================

    def predecir(self, X):
        """Predicciones (n,) o (n, k) según la forma de los objetivos"""
        if not self.ajustado:
            raise StateError("El regresor no fue ajustado")
        X = np.asarray(X, dtype=np.float64)
        X = X.reshape(len(X), -1)
        Xs = (X - self.media_x) / self.desvio_x

        if self.config["kind"] == "krr":
            K = rbf_kernel(Xs, self.x_entrenamiento, gamma=1.0 / (2.0 * self.sigma ** 2))
            pred = K @ self.alfa
        elif self.constante is not None:
            pred = np.tile(self.constante, (len(X), 1))
        else:
            with torch.no_grad():
                pred = self.red(como_tensor(Xs), "eval").numpy()
            pred = pred * self.desvio_y + self.media_y
        return pred if self.vectorial else pred[:, 0]

    # ==============================================
    # PERSISTENCIA
    # ==============================================

    def exportar(self, prefijo="regresor"):
        """Tensores y metadatos para un checkpoint"""
        if not self.ajustado:
            raise StateError("El regresor no fue ajustado")
        tensores = {f"{prefijo}.media_x": self.media_x, f"{prefijo}.desvio_x": self.desvio_x}
        meta = {"config": self.config, "semilla": self.semilla, "vectorial": self.vectorial,
                "dim_salida": self.dim_salida, "modo": "mlp"}
        if self.config["kind"] == "krr":
            tensores[f"{prefijo}.x_entrenamiento"] = self.x_entrenamiento
            tensores[f"{prefijo}.alfa"] = self.alfa
            meta.update(modo="krr", sigma=self.sigma)
        elif self.constante is not None:
            tensores[f"{prefijo}.constante"] = self.constante
            meta["modo"] = "constante"
        else:
            red, meta["red"] = exportar_featurizer(self.red, f"{prefijo}.red")
            tensores.update(red)
            tensores[f"{prefijo}.media_y"] = self.media_y
            tensores[f"{prefijo}.desvio_y"] = self.desvio_y
        return tensores, meta

    @classmethod
    def desde_estado(cls, tensores, meta, prefijo="regresor"):
        reg = cls(meta["config"], meta["semilla"], verbose=False)
        reg.media_x = np.asarray(tensores[f"{prefijo}.media_x"])
        reg.desvio_x = np.asarray(tensores[f"{prefijo}.desvio_x"])
        reg.vectorial = meta["vectorial"]
        reg.dim_salida = meta["dim_salida"]
        if meta["modo"] == "krr":
            reg.x_entrenamiento = np.asarray(tensores[f"{prefijo}.x_entrenamiento"])
            reg.alfa = np.asarray(tensores[f"{prefijo}.alfa"])
            reg.sigma = meta["sigma"]
        elif meta["modo"] == "constante":
            reg.constante = np.asarray(tensores[f"{prefijo}.constante"])
        else:
            reg.red = restaurar_featurizer(meta["red"], tensores, f"{prefijo}.red")
            reg.media_y = np.asarray(tensores[f"{prefijo}.media_y"])
            reg.desvio_y = np.asarray(tensores[f"{prefijo}.desvio_y"])
        reg.ajustado = True
        return reg
