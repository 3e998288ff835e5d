"""
Harness de benchmarks: generación, ajuste, evaluación contra oráculos y barridos

Estructura de la carpeta de salida:

    config.json                      configuración efectiva + hash
    datos/<benchmark>/N<N>/semilla<k>.csv|.json
    checkpoints/<etiqueta>/<benchmark>/N<N>/semilla<k>/<componente>.json|.bin
    resultados.csv  tiempos.csv  resumen.csv  curvas.csv  mse_vs_n.svg
"""

import json
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

sys.path.append(str(Path(__file__).parent.parent))
from config import (BENCH, BENCHMARKS, ESTIMADORES, ESTIMADORES_IMPLEMENTADOS, OUTPUTS_DIR, REPORTES,
                    cargar_preset, fusionar_config, hash_config, preset_para_n, workers_por_defecto)

from .analytics import BenchAnalytics
from .checkpoint import cargar_checkpoint, guardar_checkpoint, leer_manifiesto
from .curves import DoseResponseCurve, causal_mse
from .dgp import generar, oraculo
from .errors import ConfigurationError, DataError, ValidationError
from .ingestion import ProxyDataset
from .nets import LossKind
from .pipeline import KERNEL, EstimationPipeline
from .visualizer import generar_visualizaciones_completas

COLUMNAS_RESULTADOS = ["estimador", "benchmark", "objetivo", "N", "semilla", "ancla", "mse", "estado", "config_hash"]
COLUMNAS_TIEMPOS = ["estimador", "benchmark", "objetivo", "N", "semilla", "segundos"]
COLUMNAS_CURVAS = ["estimador", "benchmark", "objetivo", "N", "semilla", "ancla", "a", "v", "valor", "oraculo"]
SECCIONES_PRESET = ("outcome", "treatment", "third_stage", "ratio", "kernel", "por_n")


def parsear_semillas(texto):
    """'0..9' -> [0, ..., 9]; '1,3,5' -> [1, 3, 5]; '4' -> [4]"""
    texto = str(texto).strip()
    try:
        if ".." in texto:
            a, b = texto.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValidationError(f"Rango de semillas vacío: {texto}")
            return list(range(a, b + 1))
        return [int(s) for s in texto.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"Semillas inválidas: {texto}")


def _lista(valor):
    if valor is None:
        return []
    if isinstance(valor, (list, tuple)):
        return list(valor)
    return [v.strip() for v in str(valor).split(",") if v.strip()]


# ==============================================
# CONFIGURACIÓN DE CORRIDA
# ==============================================

@dataclass
class RunConfig:
    """
    Configuración de una corrida

    estimadores, N y perdidas admiten listas (barridos). perdidas vacía usa la
    pérdida del preset.
    """
    benchmark: str = "lowdim-ate"
    estimadores: list = field(default_factory=lambda: ["DRPCLNET-V1"])
    objetivo: str = None
    N: list = field(default_factory=lambda: [2000])
    semillas: list = field(default_factory=lambda: list(range(BENCH["semillas"])))
    perdidas: list = field(default_factory=list)
    preset: str = None
    ratio: str = None
    n_grilla: int = BENCH["n_grilla"]
    percentiles: list = field(default_factory=lambda: list(BENCH["percentiles"]))
    anclas: list = None
    perturbar: str = None
    sigma: float = 0.0
    hiper: dict = field(default_factory=dict)
    salida: str = str(OUTPUTS_DIR)
    verbose: bool = False

    def __post_init__(self):
        self.estimadores = [e.upper() for e in _lista(self.estimadores)]
        self.N = [int(n) for n in _lista(self.N)]
        self.perdidas = [str(p) for p in _lista(self.perdidas)]
        self.semillas = [int(s) for s in self.semillas]
        if self.objetivo is None and self.benchmark in BENCHMARKS:
            self.objetivo = BENCHMARKS[self.benchmark]["objetivos"][0]
        if self.objetivo is not None:
            self.objetivo = self.objetivo.upper()

    def a_dict(self):
        datos = asdict(self)
        datos.pop("salida")
        datos.pop("verbose")
        return datos

    @property
    def hash(self):
        return hash_config(self.a_dict())

    def resolver_preset(self, perdida=None, N=None):
        """
        Preset del benchmark para un N, con los overrides de hiper y la pérdida

        Las tablas por_n del preset y de hiper se aplican antes que el resto de
        hiper, así un override explícito siempre gana.
        """
        nombre = self.preset or BENCHMARKS[self.benchmark]["preset"]
        hiper = dict(self.hiper)
        por_n = hiper.pop("por_n", None)
        base = cargar_preset(nombre, N=N)
        if por_n:
            base = preset_para_n(fusionar_config(base, {"por_n": por_n}), N)
        preset = fusionar_config(base, hiper)
        if perdida:
            for lado in ("outcome", "treatment"):
                preset.setdefault(lado, {})["loss"] = perdida
        return preset

    def anclas_efectivas(self, preset):
        if self.anclas is not None:
            return [float(a) for a in self.anclas]
        return [float(a) for a in preset.get("run", {}).get("anchors", BENCH["anclas_att"])]

    def validar(self):
        """
        Compatibilidad estimador / benchmark / objetivo, antes de entrenar nada

        Raises:
            ValidationError
        """
        if self.benchmark not in BENCHMARKS:
            raise ValidationError(f"Benchmark desconocido: {self.benchmark}")
        info = BENCHMARKS[self.benchmark]
        if self.objetivo not in info["objetivos"]:
            raise ValidationError(f"El benchmark {self.benchmark} no admite el objetivo {self.objetivo}")
        if not self.estimadores:
            raise ValidationError("No hay estimadores configurados")
        for est in self.estimadores:
            if est not in ESTIMADORES:
                raise ValidationError(f"Estimador desconocido: {est}")
            if est not in ESTIMADORES_IMPLEMENTADOS:
                raise ValidationError(f"Estimador no soportado en este repositorio: {est}")
            if est in KERNEL and self.objetivo != "ATE":
                raise ValidationError(f"{est} solo admite ATE")
            if est in ("KAP", "DRKPV") and info["covariables"]:
                raise ValidationError(f"{est} requiere un benchmark sin covariables X")
            if est in KERNEL and self.perturbar:
                raise ValidationError("La perturbación de cabezas solo aplica a estimadores neuronales")
        if not self.semillas:
            raise ValidationError("Se necesita al menos una semilla")
        if not self.N or min(self.N) < 10:
            raise ValidationError(f"N inválido: {self.N}")
        if self.ratio not in (None, "kde", "kliep"):
            raise ValidationError(f"Método de razón desconocido: {self.ratio}")
        if self.ratio == "kliep" and self.objetivo == "CATE":
            raise ValidationError("KLIEP no está disponible para CATE")
        if self.perturbar not in (None, "outcome", "treatment"):
            raise ValidationError(f"Lado de perturbación desconocido: {self.perturbar}")
        if self.sigma < 0:
            raise ValidationError(f"sigma debe ser no negativo: {self.sigma}")
        for perdida in self.perdidas:
            try:
                LossKind(perdida)
            except ConfigurationError as e:
                raise ValidationError(str(e))
        try:
            preset = self.resolver_preset()
        except ConfigurationError as e:
            raise ValidationError(str(e))
        if self.objetivo == "ATT" and preset.get("outcome", {}).get("joint_ax"):
            raise ValidationError("ATT requiere φ_A separado en el puente de resultado")
        if self.objetivo == "ATT" and not self.anclas_efectivas(preset):
            raise ValidationError("ATT requiere al menos un ancla")
        return True

    def celdas(self):
        """(estimador, pérdida) a correr; la etiqueta incluye la variante"""
        perdidas = self.perdidas or [None]
        celdas = []
        for est in self.estimadores:
            for perdida in (perdidas if est not in KERNEL else [None]):
                etiqueta = est + (f"@{LossKind(perdida).tipo}" if perdida else "")
                if self.perturbar and est not in KERNEL:
                    etiqueta += f"+pert-{self.perturbar}({self.sigma:g})"
                celdas.append((est, perdida, etiqueta))
        return celdas


def construir_run(archivo=None, **flags):
    """
    RunConfig a partir de un TOML opcional y flags de CLI (los flags pisan al archivo)

    El TOML admite una tabla [run] con los campos de RunConfig y tablas de preset
    (outcome, treatment, third_stage, ratio, kernel, por_n) que se fusionan como hiper.
    """
    campos = {}
    if archivo:
        ruta = Path(archivo)
        if not ruta.exists():
            raise ConfigurationError(f"Archivo de configuración no encontrado: {ruta}")
        with open(ruta, "rb") as f:
            datos = tomllib.load(f)
        campos.update(datos.get("run", {}))
        hiper = {k: v for k, v in datos.items() if k in SECCIONES_PRESET}
        if hiper:
            campos["hiper"] = fusionar_config(campos.get("hiper", {}), hiper)
    campos.update({k: v for k, v in flags.items() if v is not None})
    if isinstance(campos.get("semillas"), str):
        campos["semillas"] = parsear_semillas(campos["semillas"])
    desconocidos = set(campos) - set(RunConfig.__dataclass_fields__)
    if desconocidos:
        raise ConfigurationError(f"Campos de corrida desconocidos: {sorted(desconocidos)}")
    return RunConfig(**campos)


@dataclass
class RunResult:
    """Resultados por semilla y resumen por celda"""
    filas: pd.DataFrame
    resumen: pd.DataFrame
    config_hash: str
    artefactos: dict = field(default_factory=dict)
    codigo_salida: int = 0


# ==============================================
# RUTAS
# ==============================================

def _ruta_datos(run, N, semilla):
    return Path(run.salida) / "datos" / run.benchmark / f"N{N}" / f"semilla{semilla}.csv"


def _dir_checkpoints(run, etiqueta, N, semilla):
    return Path(run.salida) / "checkpoints" / etiqueta / run.benchmark / f"N{N}" / f"semilla{semilla}"


def guardar_config(run):
    """config.json con la configuración efectiva y su hash"""
    ruta = Path(run.salida) / REPORTES["archivo_config"]
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, "w", encoding="utf-8", newline="\n") as f:
        json.dump({"config": run.a_dict(), "hash": run.hash}, f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write("\n")
    return ruta


# ==============================================
# PASOS POR SEMILLA
# ==============================================

def _generar_semilla(run, N, semilla):
    ruta = _ruta_datos(run, N, semilla)
    datos = generar(run.benchmark, N, semilla)
    try:
        datos.guardar(ruta)
    except OSError as e:
        raise ConfigurationError(f"No se puede escribir en {ruta.parent}: {e}")
    return ruta


def _cargar_o_generar(run, N, semilla):
    ruta = _ruta_datos(run, N, semilla)
    if ruta.exists():
        return ProxyDataset.cargar(ruta)
    return generar(run.benchmark, N, semilla)


def _curva_a_dict(curva):
    return {"etiqueta": curva.etiqueta, "ancla": curva.ancla, "grilla": curva.grilla.tolist(),
            "valores": curva.valores.tolist(), "avisos": list(curva.avisos)}


def _curva_desde_dict(d):
    return DoseResponseCurve(np.asarray(d["grilla"]), np.asarray(d["valores"]), etiqueta=d["etiqueta"],
                             ancla=d["ancla"], avisos=list(d.get("avisos", [])))


def _ajustar_semilla(run, estimador, perdida, etiqueta, N, semilla):
    """Ajusta y persiste; devuelve dict componente -> hash"""
    preset = run.resolver_preset(perdida, N)
    datos = _cargar_o_generar(run, N, semilla)
    pipeline = EstimationPipeline(
        estimador, run.objetivo, preset, semilla, anclas=run.anclas_efectivas(preset), ratio=run.ratio,
        perturbar=run.perturbar, sigma=run.sigma, n_grilla=run.n_grilla, percentiles=run.percentiles,
        verbose=run.verbose,
    )
    resultado = pipeline.ajustar(datos)

    directorio = _dir_checkpoints(run, etiqueta, N, semilla)
    config = {"run": run.a_dict(), "hash": run.hash, "estimador": estimador, "perdida": perdida,
              "N": N, "semilla": semilla, "split": {"n1": len(resultado.plan.d1), "n2": len(resultado.plan.d2)}}
    hashes = {}
    for i, comp in enumerate(resultado.componentes):
        meta = dict(comp.meta)
        if i == len(resultado.componentes) - 1:
            meta["curvas"] = [_curva_a_dict(c) for c in resultado.curvas]
            meta["avisos"] = list(resultado.avisos)
        referencias = {nombre: hashes[nombre] for nombre in comp.depende_de}
        hashes[comp.nombre] = guardar_checkpoint(directorio / comp.nombre, comp.tipo, comp.tensores, meta,
                                                 config, referencias)
    indice = {"componentes": list(hashes), "hashes": hashes, "curvas_en": resultado.componentes[-1].nombre}
    with open(directorio / "indice.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(indice, f, sort_keys=True, indent=2)
        f.write("\n")
    return hashes


def cargar_curvas(run, etiqueta, N, semilla):
    """Curvas ajustadas guardadas en el checkpoint principal de una semilla"""
    directorio = _dir_checkpoints(run, etiqueta, N, semilla)
    ruta_indice = directorio / "indice.json"
    if not ruta_indice.exists():
        raise DataError(f"No hay checkpoints en {directorio}")
    with open(ruta_indice, encoding="utf-8") as f:
        indice = json.load(f)
    _, manifiesto = cargar_checkpoint(directorio / indice["curvas_en"])
    return [_curva_desde_dict(d) for d in manifiesto["meta"]["curvas"]]


def _evaluar_curvas(run, curvas):
    """(curva, oráculo, mse) por curva"""
    salida = []
    for curva in curvas:
        ref = oraculo(run.benchmark, curva.grilla, curva.ancla)
        salida.append((curva, ref, causal_mse(curva, ref)))
    return salida


def _filas_evaluacion(run, etiqueta, N, semilla, evaluadas):
    filas, filas_curvas = [], []
    for curva, ref, mse in evaluadas:
        ancla = np.nan if curva.ancla is None else curva.ancla
        filas.append({"estimador": etiqueta, "benchmark": run.benchmark, "objetivo": run.objetivo, "N": N,
                      "semilla": semilla, "ancla": ancla, "mse": mse, "estado": "ok", "config_hash": run.hash})
        g = curva.grilla
        a, v = (g[:, 0], g[:, 1]) if g.ndim == 2 else (g, np.full(len(g), np.nan))
        filas_curvas.append(pd.DataFrame({
            "estimador": etiqueta, "benchmark": run.benchmark, "objetivo": run.objetivo, "N": N,
            "semilla": semilla, "ancla": ancla, "a": a, "v": v, "valor": curva.valores, "oraculo": ref.valores,
        }))
    return filas, filas_curvas


def _filas_falla(run, etiqueta, N, semilla, error, preset_anclas):
    anclas = preset_anclas if run.objetivo == "ATT" else [np.nan]
    estado = f"error:{type(error).__name__}"
    return [{"estimador": etiqueta, "benchmark": run.benchmark, "objetivo": run.objetivo, "N": N,
             "semilla": semilla, "ancla": ancla, "mse": np.nan, "estado": estado, "config_hash": run.hash}
            for ancla in anclas]


# ==============================================
# COMANDOS
# ==============================================

def cmd_gen(run):
    """
    Escribe CSV + sidecar JSON por (N, semilla)

    Returns:
        lista de rutas
    """
    run.validar()
    rutas = [_generar_semilla(run, N, s) for N in run.N for s in run.semillas]
    print(f"✓ {len(rutas)} datasets generados en {Path(run.salida) / 'datos'}")
    return rutas


def cmd_fit(run):
    """
    Ajusta los estimadores configurados y persiste checkpoints

    Returns:
        dict (etiqueta, N, semilla) -> {componente: hash}
    """
    run.validar()
    guardar_config(run)
    hashes = {}
    for estimador, perdida, etiqueta in run.celdas():
        for N in run.N:
            for s in run.semillas:
                hashes[(etiqueta, N, s)] = _ajustar_semilla(run, estimador, perdida, etiqueta, N, s)
                print(f"✓ {etiqueta} N={N} semilla={s}: {len(hashes[(etiqueta, N, s)])} checkpoint(s)")
    return hashes


def cmd_eval(run):
    """
    MSE causal de las curvas guardadas contra los oráculos

    Returns:
        RunResult
    """
    run.validar()
    filas, curvas = [], []
    for _, _, etiqueta in run.celdas():
        for N in run.N:
            for s in run.semillas:
                f, c = _filas_evaluacion(run, etiqueta, N, s, _evaluar_curvas(run, cargar_curvas(run, etiqueta, N, s)))
                filas.extend(f)
                curvas.extend(c)
    resultado = _escribir_resultados(run, filas, curvas, tiempos=None)
    return resultado


def _correr_semilla(run, estimador, perdida, etiqueta, N, semilla):
    """gen -> fit -> eval de una semilla; las fallas se registran y no se propagan"""
    inicio = time.perf_counter()
    try:
        _ajustar_semilla(run, estimador, perdida, etiqueta, N, semilla)
        filas, curvas = _filas_evaluacion(run, etiqueta, N, semilla,
                                          _evaluar_curvas(run, cargar_curvas(run, etiqueta, N, semilla)))
    except Exception as e:
        print(f"✗ {etiqueta} N={N} semilla={semilla}: {type(e).__name__}: {e}")
        filas = _filas_falla(run, etiqueta, N, semilla, e, run.anclas_efectivas(run.resolver_preset(perdida, N)))
        curvas = []
    segundos = time.perf_counter() - inicio
    tiempo = {"estimador": etiqueta, "benchmark": run.benchmark, "objetivo": run.objetivo, "N": N,
              "semilla": semilla, "segundos": segundos}
    return filas, curvas, tiempo


def cmd_bench(run, n_jobs=None):
    """
    Barrido gen -> fit -> eval sobre estimadores, N y semillas (en hilos)

    Returns:
        RunResult; codigo_salida = 1 si alguna celda falló en todas sus semillas
    """
    run.validar()
    guardar_config(run)
    n_jobs = n_jobs or workers_por_defecto()
    tareas = [(est, perdida, etiqueta, N, s) for est, perdida, etiqueta in run.celdas()
              for N in run.N for s in run.semillas]
    print(f"\nBench {run.benchmark} ({run.objetivo}): {len(tareas)} corridas con {n_jobs} worker(s)")
    for N in run.N:
        for s in run.semillas:
            _generar_semilla(run, N, s)

    salidas = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_correr_semilla)(run, *tarea) for tarea in tareas
    )
    filas = [f for fs, _, _ in salidas for f in fs]
    curvas = [c for _, cs, _ in salidas for c in cs]
    tiempos = [t for _, _, t in salidas]
    return _escribir_resultados(run, filas, curvas, tiempos)


def _escribir_resultados(run, filas, curvas, tiempos):
    salida = Path(run.salida)
    salida.mkdir(parents=True, exist_ok=True)
    formato = {"index": False, "sep": ",", "lineterminator": "\n", "float_format": "%.17g"}
    artefactos = {}

    df = pd.DataFrame(filas, columns=COLUMNAS_RESULTADOS)
    df = df.sort_values(["estimador", "N", "semilla", "ancla"], kind="mergesort").reset_index(drop=True)
    artefactos["resultados"] = salida / REPORTES["archivo_resultados"]
    df.to_csv(artefactos["resultados"], **formato)

    if tiempos is not None:
        dt = pd.DataFrame(tiempos, columns=COLUMNAS_TIEMPOS)
        dt = dt.sort_values(["estimador", "N", "semilla"], kind="mergesort")
        artefactos["tiempos"] = salida / REPORTES["archivo_tiempos"]
        dt.to_csv(artefactos["tiempos"], **formato)

    dc = pd.concat(curvas, ignore_index=True) if curvas else pd.DataFrame(columns=COLUMNAS_CURVAS)
    dc = dc.sort_values(["estimador", "N", "semilla", "ancla"], kind="mergesort")
    artefactos["curvas"] = salida / REPORTES["archivo_curvas"]
    dc.to_csv(artefactos["curvas"], **formato)

    analytics = BenchAnalytics(df)
    resumen = analytics.calcular_resumen()
    artefactos["resumen"] = analytics.exportar_resumen(salida / REPORTES["archivo_resumen"])
    if run.verbose:
        print("\n" + analytics.generar_reporte())
    for ruta in generar_visualizaciones_completas(resumen, None, salida, run.benchmark):
        artefactos[Path(ruta).stem] = ruta

    codigo = 1 if len(analytics.celdas_fallidas()) else 0
    if codigo:
        print(f"✗ {len(analytics.celdas_fallidas())} celda(s) sin ninguna semilla exitosa")
    return RunResult(df, resumen, run.hash, artefactos, codigo)


def cmd_plot(directorio):
    """Figuras a partir de resumen.csv / resultados.csv y curvas.csv de una carpeta"""
    directorio = Path(directorio)
    ruta_resumen = directorio / REPORTES["archivo_resumen"]
    ruta_resultados = directorio / REPORTES["archivo_resultados"]
    if ruta_resumen.exists():
        resumen = pd.read_csv(ruta_resumen)
    elif ruta_resultados.exists():
        resumen = BenchAnalytics(pd.read_csv(ruta_resultados)).calcular_resumen()
    else:
        raise DataError(f"No hay resultados en {directorio}")
    ruta_curvas = directorio / REPORTES["archivo_curvas"]
    curvas = pd.read_csv(ruta_curvas) if ruta_curvas.exists() else None
    return generar_visualizaciones_completas(resumen, curvas, directorio, directorio.name)


def verificar_hashes(directorio):
    """True si todas las filas de resultados.csv llevan el hash de config.json"""
    directorio = Path(directorio)
    with open(directorio / REPORTES["archivo_config"], encoding="utf-8") as f:
        h = json.load(f)["hash"]
    df = pd.read_csv(directorio / REPORTES["archivo_resultados"])
    return bool((df["config_hash"] == h).all())


def hash_checkpoint(ruta):
    return leer_manifiesto(ruta)["hash"]


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def correr_bench_completo(archivo=None, n_jobs=None, **flags):
    """
    Construye la corrida, ejecuta el barrido y muestra el reporte

    Returns:
        RunResult
    """
    run = construir_run(archivo, **flags)
    resultado = cmd_bench(run, n_jobs)
    print("\n" + BenchAnalytics(resultado.filas).generar_reporte())
    return resultado


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    correr_bench_completo(benchmark="noisy-proxy-1", estimadores=["KPV", "KAP"], N=[1000],
                          semillas=[0, 1], salida=str(OUTPUTS_DIR / "ejemplo"))
