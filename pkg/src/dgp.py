"""
Procesos generadores de datos sintéticos y curvas oráculo

Cada columna (y cada fuente de ruido) usa su propio flujo aleatorio Philox
derivado de (semilla, crc32(nombre)): agregar columnas no altera las existentes.
"""

import sys
import zlib
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import integrate, stats
from scipy.special import expit

sys.path.append(str(Path(__file__).parent.parent))
from config import BENCH

from .curves import OracleCurve
from .errors import ConfigurationError
from .ingestion import ProxyDataset


def flujo(semilla, nombre):
    """Generador numpy independiente para una columna"""
    secuencia = np.random.SeedSequence([int(semilla), zlib.crc32(nombre.encode("utf-8"))])
    return np.random.Generator(np.random.Philox(secuencia))


def link_logistico(t):
    """Λ(t) = 0.8 σ(t) + 0.1, con imagen en (0.1, 0.9)"""
    return 0.8 * expit(t) + 0.1


def _dataset(columnas, benchmark, semilla, **meta):
    df = pd.DataFrame(columnas)
    return ProxyDataset(df, {"benchmark": benchmark, "seed": int(semilla), "N": len(df), **meta})


def _validar_n(N):
    if N < 1:
        raise ConfigurationError(f"N debe ser >= 1: {N}")


# ==============================================
# BAJA DIMENSIÓN (ATE y ATT)
# ==============================================

def _latentes_lowdim(N, semilla):
    u1 = flujo(semilla, "u1").uniform(-1.0, 2.0, N)
    r = flujo(semilla, "u2").uniform(0.0, 1.0, N)
    u2 = r - ((u1 >= 0.0) & (u1 <= 1.0))
    return u1, u2


def _y_lowdim(u1, u2, a):
    return 3.0 * np.cos(0.6 * u2 + 0.6 * u1 + 0.4 + 1.5 * a)


def gen_lowdim_ate(N, semilla=0, benchmark="lowdim-ate"):
    """
    Benchmark continuo de baja dimensión con confusión latente no lineal

    Returns:
        ProxyDataset con columnas a, y, z1, z2, w1, w2
    """
    _validar_n(N)
    u1, u2 = _latentes_lowdim(N, semilla)
    a = u1 + flujo(semilla, "a").normal(0.0, 1.0, N)
    columnas = {
        "a": a,
        "y": _y_lowdim(u1, u2, a) + flujo(semilla, "y").normal(0.0, 1.0, N),
        "z1": u2 + flujo(semilla, "z1").normal(0.0, 1.0, N),
        "z2": u1 + flujo(semilla, "z2").uniform(-1.0, 1.0, N),
        "w1": u2 + flujo(semilla, "w1").uniform(-1.0, 1.0, N),
        "w2": u1 + flujo(semilla, "w2").normal(0.0, 1.0, N),
    }
    return _dataset(columnas, benchmark, semilla)


def gen_att(N, semilla=0):
    """Mismo DGP observacional que el ATE de baja dimensión"""
    return gen_lowdim_ate(N, semilla, benchmark="att")


def m_lowdim(a, u):
    """E[Y(a) | U1 = u] integrando U2 en forma cerrada"""
    u = np.asarray(u, dtype=np.float64)
    indicador = ((u >= 0.0) & (u <= 1.0)).astype(np.float64)
    c = 0.6 * u - 0.6 * indicador + 0.4 + 1.5 * a
    return 5.0 * (np.sin(c + 0.6) - np.sin(c))


def oracle_lowdim_ate(grilla):
    """f_ATE(a) = (1/3) ∫_{-1}^{2} m(a, u) du por cuadratura adaptativa"""
    grilla = np.asarray(grilla, dtype=np.float64)
    valores = np.array([
        integrate.quad(lambda u: m_lowdim(a, u), -1.0, 2.0, points=[0.0, 1.0],
                       epsabs=1e-9, epsrel=1e-10, limit=200)[0] / 3.0
        for a in grilla
    ])
    return OracleCurve(grilla, valores, etiqueta="lowdim-ate", metodo="quadrature")


def posterior_att(ancla):
    """Distribución de U1 dado A = a′: normal truncada a [-1, 2] centrada en a′"""
    return stats.truncnorm(-1.0 - ancla, 2.0 - ancla, loc=ancla, scale=1.0)


def oracle_att(grilla, ancla):
    """
    f_ATT(a; a′) = E[m(a, U1) | A = a′]

    Se integra en la variable cuantil q ∈ (0, 1) de la posterior, con cortes en
    los cuantiles de u = 0 y u = 1.
    """
    grilla = np.asarray(grilla, dtype=np.float64)
    posterior = posterior_att(ancla)
    cortes = [q for q in posterior.cdf([0.0, 1.0]) if 0.0 < q < 1.0]
    valores = np.array([
        integrate.quad(lambda q: m_lowdim(a, posterior.ppf(q)), 0.0, 1.0,
                       points=cortes or None, epsabs=1e-9, limit=200)[0]
        for a in grilla
    ])
    return OracleCurve(grilla, valores, etiqueta="att", ancla=float(ancla), metodo="quadrature")


def mc_lowdim_ate(a, M=None, semilla=0):
    """Monte Carlo de f_ATE(a): (media, error estándar)"""
    M = M or BENCH["muestras_oraculo"]
    u1, u2 = _latentes_lowdim(M, semilla)
    y = _y_lowdim(u1, u2, a)
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(M))


def mc_att(a, ancla, M=None, semilla=0):
    """Monte Carlo autonormalizado de f_ATT(a; a′): (media, error estándar)"""
    M = M or BENCH["muestras_oraculo"]
    u1, u2 = _latentes_lowdim(M, semilla)
    pesos = stats.norm.pdf(ancla - u1)
    y = _y_lowdim(u1, u2, a)
    media = np.sum(pesos * y) / np.sum(pesos)
    se = np.sqrt(np.sum(pesos ** 2 * (y - media) ** 2)) / np.sum(pesos)
    return float(media), float(se)


# ==============================================
# ALTA DIMENSIÓN
# ==============================================

def _covarianza_tridiagonal(d):
    return np.eye(d) + 0.5 * (np.eye(d, k=1) + np.eye(d, k=-1))


def gen_highdim_ate(N, dx=100, dz=10, dw=10, semilla=0):
    """
    Benchmark de alta dimensión con covariables X observadas

    Returns:
        ProxyDataset con a, y, x1..x{dx}, z1..z{dz}, w1..w{dw}
    """
    _validar_n(N)
    if min(dx, dz, dw) < 1:
        raise ConfigurationError("Las dimensiones deben ser >= 1")
    e1 = flujo(semilla, "e1").normal(0.0, 1.0, N)
    e2 = flujo(semilla, "e2").normal(0.0, 1.0, N)
    e3 = flujo(semilla, "e3").normal(0.0, 1.0, N)
    uz, uw = e1 + e3, e2 + e3

    Z = flujo(semilla, "z").uniform(-1.0, 1.0, (N, dz)) + 0.25 * uz[:, None]
    W = flujo(semilla, "w").uniform(-1.0, 1.0, (N, dw)) + 0.25 * uw[:, None]
    L = np.linalg.cholesky(_covarianza_tridiagonal(dx))
    X = flujo(semilla, "x").normal(0.0, 1.0, (N, dx)) @ L.T

    resumen_x = X.sum(axis=1) / np.sqrt(dx)
    a = link_logistico(3.0 * resumen_x + 3.0 * Z.sum(axis=1) / np.sqrt(dz)) + 0.25 * uw
    y = (a ** 2 + 1.2 * a + 1.2 * (resumen_x + W.sum(axis=1) / np.sqrt(dw))
         + a * X[:, 0] + 0.25 * uz)

    columnas = {"a": a, "y": y}
    columnas.update({f"x{j + 1}": X[:, j] for j in range(dx)})
    columnas.update({f"z{j + 1}": Z[:, j] for j in range(dz)})
    columnas.update({f"w{j + 1}": W[:, j] for j in range(dw)})
    return _dataset(columnas, "highdim-ate", semilla)


def oracle_highdim_ate(grilla):
    """Componente estructural a² + 1.2a"""
    grilla = np.asarray(grilla, dtype=np.float64)
    return OracleCurve(grilla, grilla ** 2 + 1.2 * grilla, etiqueta="highdim-ate", metodo="analytic")


# ==============================================
# HETEROGÉNEO (CATE)
# ==============================================

def gen_cate(N, semilla=0, benchmark="cate"):
    """
    Benchmark de tratamiento binario con heterogeneidad en V

    A ~ Bernoulli(0.5) independiente de U; V ~ U[-0.5, 0.5].
    """
    _validar_n(N)
    v = flujo(semilla, "v").uniform(-0.5, 0.5, N)
    u1 = 1.0 + 2.0 * v + flujo(semilla, "u1").uniform(-0.5, 0.5, N)
    u2 = 1.0 + 2.0 * v + flujo(semilla, "u2").uniform(-0.5, 0.5, N)
    u3 = (v - 1.0) ** 2 + flujo(semilla, "u3").uniform(-0.5, 0.5, N)
    a = flujo(semilla, "a").binomial(1, 0.5, N).astype(np.float64)
    nu = flujo(semilla, "nu").normal(0.0, 0.25, N)
    b = sigma = 0.1
    columnas = {
        "a": a,
        "y": a * (v * u1 * u2 * u3 + nu),
        "v": v,
        "z1": u1 + flujo(semilla, "z1").normal(0.0, sigma, N),
        "z2": u2 + flujo(semilla, "z2").uniform(-b, b, N),
        "z3": u3 + flujo(semilla, "z3").uniform(-b, b, N),
        "w1": u1 + flujo(semilla, "w1").uniform(-b, b, N),
        "w2": u2 + flujo(semilla, "w2").normal(0.0, sigma, N),
        "w3": u3 + flujo(semilla, "w3").normal(0.0, sigma, N),
    }
    return _dataset(columnas, benchmark, semilla)


def oracle_cate(grilla):
    """f_CATE(a, v) = a · v (1 + 2v)² (v − 1)² sobre una grilla (G, 2)"""
    grilla = np.asarray(grilla, dtype=np.float64).reshape(-1, 2)
    a, v = grilla[:, 0], grilla[:, 1]
    return OracleCurve(grilla, a * v * (1 + 2 * v) ** 2 * (v - 1) ** 2,
                       etiqueta="cate", metodo="analytic")


def gen_cate_broken(variante, N, semilla=0):
    """
    CATE con enlaces proxy-confusor rotos: W <- |W| + N(0, 100²) y/o lo mismo en Z

    Args:
        variante: 'W', 'Z' o 'both'
    """
    variante = variante.upper() if variante.lower() != "both" else "both"
    if variante not in ("W", "Z", "both"):
        raise ConfigurationError(f"Variante desconocida: {variante}")
    sufijo = {"W": "w", "Z": "z", "both": "both"}[variante]
    datos = gen_cate(N, semilla, benchmark=f"cate-broken-{sufijo}")
    roles = ["w", "z"] if variante == "both" else [variante.lower()]
    for rol in roles:
        for col in datos.columnas_rol(rol):
            ruido = flujo(semilla, f"rotura_{col}").normal(0.0, 100.0, N)
            datos.df[col] = np.abs(datos.df[col].to_numpy()) + ruido
    return datos


# ==============================================
# PROXIES RUIDOSOS (settings 1-6)
# ==============================================

_BETA_SETTING = {1: (5, 4), 2: (5, 4), 3: (8, 4), 4: (8, 4), 5: (3, 5), 6: (3, 5)}


def _muestras_noisy(setting, N, semilla):
    """Todas las variables del setting (incluye las latentes)"""
    if setting not in _BETA_SETTING:
        raise ConfigurationError(f"Setting inválido: {setting}")
    alfa, beta = _BETA_SETTING[setting]
    u = flujo(semilla, "u").beta(alfa, beta, N)
    z1 = flujo(semilla, "z1_mezcla").normal(-1.0, 0.1, N)
    z2 = flujo(semilla, "z2_mezcla").normal(1.0, 0.1, N)
    w1 = flujo(semilla, "w1_mezcla").normal(-1.0, 0.1, N)
    w2 = flujo(semilla, "w2_mezcla").normal(1.0, 0.1, N)
    eps_w = flujo(semilla, "eps_w").uniform(0.0, 1.0, N)
    eps_z = flujo(semilla, "eps_z").uniform(0.0, 1.0, N)
    eps_a = flujo(semilla, "eps_a").uniform(0.0, 1.0, N)
    xi_z = flujo(semilla, "xi_z").uniform(0.0, 100.0, N)
    xi_w = flujo(semilla, "xi_w").uniform(0.0, 100.0, N)
    xi_w_pm = flujo(semilla, "xi_w_pm").uniform(-100.0, 100.0, N)
    mezcla_z = (1.0 - u) * z1 + u * z2
    mezcla_w = (1.0 - u) * w1 + u * w2

    if setting == 1:
        w, z = link_logistico(u) + eps_w, mezcla_z + xi_z
    elif setting == 2:
        z, w = link_logistico(u) + eps_z, mezcla_w + xi_w
    elif setting == 3:
        w, z = u + eps_w, link_logistico(mezcla_z) + xi_z
    elif setting == 4:
        z, w = u + eps_z, link_logistico(mezcla_w) + xi_w
    elif setting == 5:
        w, z = -u ** 2 + eps_w, link_logistico(mezcla_z) + xi_z
    else:
        z, w = -u ** 2 + eps_z, link_logistico(mezcla_w + xi_w_pm)

    if setting <= 4:
        a = 0.1 * u + 0.1 * z + eps_a
        y = (2.0 * u - 1.0) + np.cos(1.5 * a)
    elif setting == 5:
        a = 0.25 * np.sqrt(np.abs(u)) - 0.2 * z + eps_a
        y = 3.0 * w - 0.1 * a - np.cos(0.5 * a + 5.0 * u)
    else:
        a = 0.25 * np.sqrt(np.abs(u)) - 0.2 * z + eps_a
        y = 3.0 * w - 2.0 * a - np.cos(10.0 * a + 5.0 * u)
    return {"u": u, "a": a, "y": y, "z": z, "w": w}


def gen_noisy_proxy(setting, N, semilla=0):
    """Benchmark de proxies con informatividad asimétrica (setting 1..6)"""
    _validar_n(N)
    m = _muestras_noisy(setting, N, semilla)
    columnas = {"a": m["a"], "y": m["y"], "z1": m["z"], "w1": m["w"]}
    return _dataset(columnas, f"noisy-proxy-{setting}", semilla, setting=int(setting))


def oracle_noisy_proxy(setting, grilla, M=None, semilla=12345):
    """
    Curva verdadera por Monte Carlo sobre las variables latentes

    Se estiman por Monte Carlo los momentos que no dependen de a y la curva
    se arma en forma cerrada en a.
    """
    M = M or BENCH["muestras_oraculo"]
    grilla = np.asarray(grilla, dtype=np.float64)
    m = _muestras_noisy(setting, M, semilla)
    u = m["u"]
    if setting <= 4:
        valores = np.mean(2.0 * u - 1.0) + np.cos(1.5 * grilla)
    else:
        k, pendiente = (0.5, 0.1) if setting == 5 else (10.0, 2.0)
        media_w = np.mean(m["w"])
        ec, es = np.mean(np.cos(5.0 * u)), np.mean(np.sin(5.0 * u))
        valores = (3.0 * media_w - pendiente * grilla
                   - (np.cos(k * grilla) * ec - np.sin(k * grilla) * es))
    return OracleCurve(grilla, valores, etiqueta=f"noisy-proxy-{setting}", metodo=f"monte-carlo({M})")


# ==============================================
# FUNCIÓN HELPER
# ==============================================

def generar(benchmark, N, semilla=0, **kwargs):
    """
    Genera el dataset de un benchmark por nombre

    Args:
        benchmark: lowdim-ate | att | highdim-ate | cate | cate-broken-{w,z,both} | noisy-proxy-k
        N: cantidad de observaciones
        semilla: semilla
    """
    if benchmark == "lowdim-ate":
        return gen_lowdim_ate(N, semilla)
    if benchmark == "att":
        return gen_att(N, semilla)
    if benchmark == "highdim-ate":
        return gen_highdim_ate(N, semilla=semilla, **kwargs)
    if benchmark == "cate":
        return gen_cate(N, semilla)
    if benchmark.startswith("cate-broken-"):
        return gen_cate_broken(benchmark.rsplit("-", 1)[1], N, semilla)
    if benchmark.startswith("noisy-proxy-"):
        return gen_noisy_proxy(int(benchmark.rsplit("-", 1)[1]), N, semilla)
    raise ConfigurationError(f"Benchmark desconocido: {benchmark}")


def oraculo(benchmark, grilla, ancla=None):
    """Curva oráculo de un benchmark sobre una grilla"""
    if benchmark == "lowdim-ate":
        return oracle_lowdim_ate(grilla)
    if benchmark == "att":
        if ancla is None:
            raise ConfigurationError("El oráculo ATT requiere un ancla")
        return oracle_att(grilla, ancla)
    if benchmark == "highdim-ate":
        return oracle_highdim_ate(grilla)
    if benchmark == "cate" or benchmark.startswith("cate-broken-"):
        return oracle_cate(grilla)
    if benchmark.startswith("noisy-proxy-"):
        return oracle_noisy_proxy(int(benchmark.rsplit("-", 1)[1]), grilla)
    raise ConfigurationError(f"Benchmark desconocido: {benchmark}")


# ==============================================
# EJEMPLO DE USO
# ==============================================
if __name__ == "__main__":
    datos = gen_lowdim_ate(2000, semilla=0)
    datos.mostrar_resumen()
    curva = oracle_lowdim_ate(np.linspace(-1.0, 2.0, 5))
    for a, f in zip(curva.grilla, curva.valores):
        print(f"  f_ATE({a:+.2f}) = {f:+.4f}")
