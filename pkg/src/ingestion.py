"""
Módulo de ingestion de datos
Tablas de datos causales con proxies: roles, validación, persistencia y folds
"""

import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

# Importar configuración
sys.path.append(str(Path(__file__).parent.parent))
from config import FORMATO_DATOS, BENCH, DATA_DIR

from .errors import ConfigurationError, DataError

_PATRON_COLUMNA = re.compile(r"^([a-z]+?)(\d*)$")


class ProxyDataset:
    """
    Tabla de observaciones (A, Y, Z, W, X?, V?, S?) con metadatos

    Columnas: `a`, `y`, `v` (escalares) y `z1..`, `w1..`, `x1..`, `s1..`.
    """

    def __init__(self, df, meta=None):
        """
        Args:
            df: DataFrame con las columnas por rol
            meta: dict con benchmark, seed, N y dims
        """
        self.df = df.reset_index(drop=True)
        self.meta = dict(meta or {})
        self.meta.setdefault("N", len(self.df))
        self.meta["dims"] = {rol: len(self.columnas_rol(rol))
                             for rol in FORMATO_DATOS["roles_unicos"] + FORMATO_DATOS["roles_multiples"]}
        self.errores = []
        self.warnings = []

    def __len__(self):
        return len(self.df)

    # ==============================================
    # ROLES
    # ==============================================

    def columnas_rol(self, rol):
        """Columnas de un rol, ordenadas por sufijo numérico"""
        columnas = []
        for col in self.df.columns:
            m = _PATRON_COLUMNA.match(str(col))
            if not m or m.group(1) != rol:
                continue
            if rol in FORMATO_DATOS["roles_unicos"] and m.group(2) == "":
                columnas.append((0, col))
            elif rol in FORMATO_DATOS["roles_multiples"] and m.group(2) != "":
                columnas.append((int(m.group(2)), col))
        return [c for _, c in sorted(columnas)]

    def tiene(self, rol):
        return len(self.columnas_rol(rol)) > 0

    def bloque(self, rol):
        """
        Matriz (n, k) de un rol

        El rol 'x' devuelve las columnas x* o, si no hay, la concatenación (v, s*)
        de los datos heterogéneos. Un rol ausente da una matriz (n, 0).
        """
        if rol == "x" and not self.tiene("x"):
            columnas = self.columnas_rol("v") + self.columnas_rol("s")
        else:
            columnas = self.columnas_rol(rol)
        return self.df[columnas].to_numpy(dtype=np.float64).reshape(len(self.df), len(columnas))

    @property
    def tiene_covariables(self):
        return self.bloque("x").shape[1] > 0

    def subconjunto(self, indices):
        """Nuevo dataset con las filas indicadas (mismo orden)"""
        sub = ProxyDataset(self.df.iloc[np.asarray(indices)], self.meta)
        sub.meta["N"] = len(sub.df)
        return sub

    # ==============================================
    # VALIDACIÓN
    # ==============================================

    def validar_datos(self, roles_requeridos=("a", "y", "z", "w")):
        """
        Valida roles presentes y valores finitos

        Returns:
            bool: True si no hay errores críticos
        """
        validacion_ok = True

        if len(self.df) == 0:
            self.errores.append("Dataset vacío")
            return False

        # 1. Roles obligatorios
        for rol in roles_requeridos:
            if not self.tiene(rol):
                self.errores.append(f"Falta el rol '{rol}'")
                validacion_ok = False

        # 2. Valores finitos
        valores = self.df.to_numpy(dtype=np.float64)
        no_finitos = ~np.isfinite(valores)
        if no_finitos.any():
            fila = int(np.argwhere(no_finitos)[0][0])
            self.errores.append(f"{int(no_finitos.sum())} valores no finitos (primera fila {fila})")
            validacion_ok = False

        # 3. Columnas constantes
        constantes = [c for c in self.df.columns if self.df[c].nunique() <= 1]
        if constantes:
            self.warnings.append(f"Columnas constantes: {constantes}")

        return validacion_ok

    def exigir_valido(self, roles_requeridos=("a", "y", "z", "w")):
        """Como validar_datos, pero lanza DataError"""
        if not self.validar_datos(roles_requeridos):
            raise DataError("Dataset inválido: " + "; ".join(self.errores))

    # ==============================================
    # PERSISTENCIA
    # ==============================================

    def guardar(self, ruta):
        """
        Guarda el dataset como CSV (separador ',', decimal '.') con sidecar JSON

        Args:
            ruta: ruta del CSV
        """
        ruta = Path(ruta)
        ruta.parent.mkdir(parents=True, exist_ok=True)
        self.df.to_csv(ruta, index=False, sep=FORMATO_DATOS["separador"],
                       float_format=f"%.{FORMATO_DATOS['decimales']}g", lineterminator="\n")
        with open(ruta.with_suffix(".json"), "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.meta, f, indent=2, sort_keys=True)
        print(f"✓ Datos guardados en: {ruta}")
        return ruta

    @classmethod
    def cargar(cls, ruta):
        """Inverso de guardar; el sidecar JSON es opcional"""
        ruta = Path(ruta)
        if not ruta.exists():
            raise DataError(f"Archivo no encontrado: {ruta}")
        df = pd.read_csv(ruta, sep=FORMATO_DATOS["separador"], float_precision="round_trip")
        meta = {}
        sidecar = ruta.with_suffix(".json")
        if sidecar.exists():
            with open(sidecar, encoding="utf-8") as f:
                meta = json.load(f)
        return cls(df, meta)

    def mostrar_resumen(self):
        """Muestra resumen del dataset"""
        print("\n" + "=" * 60)
        print("RESUMEN DEL DATASET")
        print("=" * 60)
        print(f"Benchmark: {self.meta.get('benchmark', '-')} | semilla: {self.meta.get('seed', '-')}")
        print(f"Observaciones: {len(self.df):,}")
        print("Dimensiones por rol: " + ", ".join(f"{k}={v}" for k, v in self.meta["dims"].items() if v))
        a = self.df["a"] if "a" in self.df else None
        if a is not None:
            print(f"A - Min: {a.min():.3f} | Max: {a.max():.3f}")

        if self.warnings:
            print(f"\n⚠ WARNINGS ({len(self.warnings)}):")
            for w in self.warnings:
                print(f"  - {w}")
        if self.errores:
            print(f"\n✗ ERRORES ({len(self.errores)}):")
            for e in self.errores:
                print(f"  - {e}")
        else:
            print("\n✓ Todas las validaciones pasaron correctamente")
        print("=" * 60 + "\n")


# ==============================================
# FOLDS
# ==============================================

@dataclass
class SplitPlan:
    """
    Índices de los folds D1 (primera etapa), D2 (segunda etapa) y D3 (evaluación)

    D3 es D2 salvo que se indique otra cosa.
    """
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray = field(default=None)

    def __post_init__(self):
        self.d1 = np.asarray(self.d1, dtype=np.int64)
        self.d2 = np.asarray(self.d2, dtype=np.int64)
        self.d3 = self.d2 if self.d3 is None else np.asarray(self.d3, dtype=np.int64)
        if len(self.d1) == 0 or len(self.d2) == 0:
            raise ConfigurationError("Los folds D1 y D2 no pueden estar vacíos")
        if np.intersect1d(self.d1, self.d2).size:
            raise ConfigurationError("D1 y D2 deben ser disjuntos")

    @classmethod
    def crear(cls, n, semilla=0, fracciones=None):
        """
        Partición aleatoria en dos folds disjuntos

        Args:
            n: cantidad de observaciones
            semilla: semilla de la permutación
            fracciones: (f1, f2); default BENCH["fracciones"]
        """
        f1, f2 = fracciones or BENCH["fracciones"]
        if n < 2:
            raise ConfigurationError(f"Se necesitan al menos 2 observaciones, hay {n}")
        perm = np.random.default_rng(semilla).permutation(n)
        n1 = int(round(n * f1 / (f1 + f2)))
        n1 = min(max(n1, 1), n - 1)
        return cls(d1=np.sort(perm[:n1]), d2=np.sort(perm[n1:]))

    def validar(self, n):
        for nombre in ("d1", "d2", "d3"):
            idx = getattr(self, nombre)
            if idx.min() < 0 or idx.max() >= n:
                raise ConfigurationError(f"Índices de {nombre} fuera de rango para n={n}")

    def a_dict(self):
        return {"d1": self.d1.tolist(), "d2": self.d2.tolist(), "d3": self.d3.tolist()}


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def cargar_dataset_completo(nombre_archivo, mostrar_resumen=True):
    """
    Carga y valida un CSV de la carpeta de datos

    Returns:
        ProxyDataset o None si falla
    """
    ruta = Path(nombre_archivo)
    if not ruta.is_absolute() and not ruta.exists():
        ruta = DATA_DIR / ruta
    try:
        datos = ProxyDataset.cargar(ruta)
    except DataError as e:
        print(f"✗ {e}")
        return None

    ok = datos.validar_datos()
    if mostrar_resumen:
        datos.mostrar_resumen()
    if not ok:
        print("✗ Validación falló - revisa errores")
        return None
    print(f"✓ Cargados {len(datos):,} registros desde {ruta.name}")
    return datos


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    from src.dgp import gen_lowdim_ate

    datos = gen_lowdim_ate(1000, semilla=0)
    datos.validar_datos()
    datos.mostrar_resumen()
    plan = SplitPlan.crear(len(datos), semilla=0)
    print(f"✓ Folds: D1={len(plan.d1)} D2={len(plan.d2)}")
