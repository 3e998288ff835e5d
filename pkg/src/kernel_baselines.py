"""
Baselines de kernel en forma cerrada: KPV (puente de resultado), KAP (puente de
tratamiento, sin covariables) y DRKPV (combinación doblemente robusta)

Convención: D1 = (ā, x̄, z̄, w̄) con n filas, D2 = (ã, x̃, z̃, w̃, ỹ) con m filas.
"""

import sys
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist
from sklearn.metrics.pairwise import rbf_kernel

sys.path.append(str(Path(__file__).parent.parent))
from config import KERNELS

from .curves import DoseResponseCurve
from .errors import ConfigurationError, DataError, NumericalError, ShapeError, StateError, ValidationError


def _matriz(X):
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(len(X), -1)


def rbf_gram(Xa, Xb, sigma):
    """
    K[i, j] = exp(-||xa_i - xb_j||² / (2σ²))

    Raises:
        ShapeError: si las dimensiones de las filas no coinciden
        ConfigurationError: si σ <= 0
    """
    Xa, Xb = _matriz(Xa), _matriz(Xb)
    if Xa.shape[1] != Xb.shape[1]:
        raise ShapeError(f"Dimensiones distintas: {Xa.shape[1]} vs {Xb.shape[1]}")
    if not sigma > 0:
        raise ConfigurationError(f"El ancho debe ser positivo: {sigma}")
    return rbf_kernel(Xa, Xb, gamma=1.0 / (2.0 * float(sigma) ** 2))


def median_heuristic(X, max_muestras=None, semilla=0):
    """Mediana de distancias entre pares (submuestra de a lo sumo max_muestras filas)"""
    X = _matriz(X)
    max_muestras = max_muestras or KERNELS["max_muestras_mediana"]
    if len(X) > max_muestras:
        X = X[np.random.default_rng(semilla).choice(len(X), max_muestras, replace=False)]
    distancias = pdist(X)
    distancias = distancias[distancias > 0]
    return float(np.median(distancias)) if distancias.size else 1.0


def _resolver_spd(A, B):
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"Sistema no definido positivo: {e}")
    return linalg.cho_solve(factor, B)


def _residuo(A, X, B):
    return float(np.linalg.norm(A @ X - B) / max(np.linalg.norm(B), 1e-300))


def _lam(valor):
    valor = KERNELS["lambda"] if valor is None else float(valor)
    if not valor > 0:
        raise ConfigurationError(f"lambda debe ser positivo: {valor}")
    return valor


# ==============================================
# KPV
# ==============================================

class KpvModel:
    """
    Puente de resultado por kernel (KPV)

    B = (K̄_A⊙K̄_X⊙K̄_Z + nλ₁I)⁻¹(K_ĀÃ⊙K_X̄X̃⊙K_Z̄Z̃)
    M = K_ÃÃ⊙K_X̃X̃⊙(BᵀK̄_W B),  α = (M + mλ₂I)⁻¹ỹ
    """

    def __init__(self, lam1=None, lam2=None, anchos=None):
        self.lam1, self.lam2 = _lam(lam1), _lam(lam2)
        self.anchos = dict(anchos or {})
        self.ajustado = False
        self.residuos = {}

    def ajustar(self, d1, d2):
        if len(d1) == 0 or len(d2) == 0:
            raise DataError("Los folds de KPV no pueden estar vacíos")
        self.tiene_x = d1.tiene_covariables
        for rol in ("a", "x", "z", "w"):
            if rol == "x" and not self.tiene_x:
                continue
            self.anchos.setdefault(rol, median_heuristic(d1.bloque(rol)))

        self.a1, self.z1, self.w1 = d1.bloque("a"), d1.bloque("z"), d1.bloque("w")
        self.a2, self.z2, self.y2 = d2.bloque("a"), d2.bloque("z"), d2.bloque("y")[:, 0]
        self.x1 = d1.bloque("x") if self.tiene_x else None
        self.x2 = d2.bloque("x") if self.tiene_x else None
        n, m = len(d1), len(d2)

        K1 = self._k("a", self.a1, self.a1) * self._k("z", self.z1, self.z1)
        K12 = self._k("a", self.a1, self.a2) * self._k("z", self.z1, self.z2)
        if self.tiene_x:
            K1 = K1 * self._k("x", self.x1, self.x1)
            K12 = K12 * self._k("x", self.x1, self.x2)
        A1 = K1 + n * self.lam1 * np.eye(n)
        self.B = _resolver_spd(A1, K12)

        KW = self._k("w", self.w1, self.w1)
        M = self._k("a", self.a2, self.a2) * (self.B.T @ KW @ self.B)
        if self.tiene_x:
            M = M * self._k("x", self.x2, self.x2)
        A2 = M + m * self.lam2 * np.eye(m)
        self.alfa = _resolver_spd(A2, self.y2)
        self.M = M

        self.residuos = {"B": _residuo(A1, self.B, K12), "alfa": _residuo(A2, self.alfa, self.y2)}
        self.ajustado = True
        return self

    def _k(self, rol, Xa, Xb):
        return rbf_gram(Xa, Xb, self.anchos[rol])

    def _exigir(self):
        if not self.ajustado:
            raise StateError("KPV no fue ajustado")

    def embedding_w(self, W):
        """BᵀK_W̄w para cada fila de W: matriz (m, t)"""
        return self.B.T @ self._k("w", self.w1, W)

    def h(self, a, w, x=None):
        """ĥ(a, x, w) punto a punto"""
        self._exigir()
        a, w = _matriz(a), _matriz(w)
        G = self._k("a", self.a2, a) * self.embedding_w(w)
        if self.tiene_x:
            if x is None:
                raise ShapeError("KPV con covariables requiere x")
            G = G * self._k("x", self.x2, _matriz(x))
        return self.alfa @ G

    def h_grilla(self, grilla, W):
        """ĥ(a_g, w_i) para toda la grilla y filas de W (sin covariables): (G, t)"""
        self._exigir()
        KA = self._k("a", self.a2, _matriz(grilla))
        return KA.T @ (self.alfa[:, None] * self.embedding_w(W))

    def curva(self, grilla, muestra):
        """f̂(a) = promedio de ĥ(a, x_i, w_i) sobre la muestra de evaluación"""
        self._exigir()
        if len(muestra) == 0:
            raise DataError("Muestra de evaluación vacía")
        grilla = np.asarray(grilla, dtype=np.float64).reshape(-1)
        C = self.embedding_w(muestra.bloque("w"))
        if self.tiene_x:
            C = C * self._k("x", self.x2, muestra.bloque("x"))
        C = C.mean(axis=1)
        valores = (self._k("a", self.a2, grilla) * (self.alfa * C)[:, None]).sum(axis=0)
        return DoseResponseCurve(grilla, valores, etiqueta="KPV")

    def exportar(self):
        self._exigir()
        tensores = {"kpv.alfa": self.alfa, "kpv.B": self.B, "kpv.a1": self.a1, "kpv.w1": self.w1,
                    "kpv.a2": self.a2}
        if self.tiene_x:
            tensores["kpv.x2"] = self.x2
        meta = {"lam1": self.lam1, "lam2": self.lam2, "anchos": self.anchos, "tiene_x": self.tiene_x}
        return tensores, meta


def kpv_fit(d1, d2, lam1=None, lam2=None):
    """Ajusta KPV sobre los folds D1 y D2"""
    return KpvModel(lam1, lam2).ajustar(d1, d2)


def kpv_curve(modelo, muestra, grilla):
    return modelo.curva(grilla, muestra)


# ==============================================
# KAP
# ==============================================

class KapModel:
    """
    Puente de tratamiento por kernel (KAP), forma sin covariables

    R = K̄_A⊙K̄_W + nλ₁I,  B = R⁻¹(K_ĀÃ⊙K_W̄W̃),  P = R⁻¹(K_ĀÃ⊙(s1ᵀ − K_W̄W̃))
    c = (G_F + mλ₂I)⁻¹Fᵀḡ,  Q = P/(λ₂m(m−1)) − B diag(c)/λ₂
    φ̂(a, z) = Σ_i K_A(ã_i, a)(QᵀK_Z̄z)_i
    """

    def __init__(self, lam1=None, lam2=None, lam3=None, anchos=None):
        self.lam1, self.lam2, self.lam3 = _lam(lam1), _lam(lam2), _lam(lam3)
        self.anchos = dict(anchos or {})
        self.ajustado = False
        self.residuos = {}

    def ajustar(self, d1, d2):
        if d1.tiene_covariables or d2.tiene_covariables:
            raise ValidationError("KAP solo está definido sin covariables X")
        n, m = len(d1), len(d2)
        if n == 0:
            raise DataError("D1 vacío")
        if m < 2:
            raise DataError(f"KAP requiere al menos 2 filas en D2, hay {m}")
        for rol in ("a", "z", "w"):
            self.anchos.setdefault(rol, median_heuristic(d1.bloque(rol)))

        self.a1, self.z1, self.w1 = d1.bloque("a"), d1.bloque("z"), d1.bloque("w")
        self.a2, self.z2, self.w2 = d2.bloque("a"), d2.bloque("z"), d2.bloque("w")
        self.y2 = d2.bloque("y")[:, 0]

        KA12 = self._k("a", self.a1, self.a2)
        KW12 = self._k("w", self.w1, self.w2)
        R = self._k("a", self.a1, self.a1) * self._k("w", self.w1, self.w1) + n * self.lam1 * np.eye(n)
        lado_B = KA12 * KW12
        s = KW12.sum(axis=1, keepdims=True)
        lado_P = KA12 * (s - KW12)
        factor = linalg.cho_factor(R, lower=True)
        self.B = linalg.cho_solve(factor, lado_B)
        self.P = linalg.cho_solve(factor, lado_P)

        KZ = self._k("z", self.z1, self.z1)
        KA2 = self._k("a", self.a2, self.a2)
        self.G_F = KA2 * (self.B.T @ KZ @ self.B)
        self.F_g = (KA2 * (self.B.T @ KZ @ self.P)).sum(axis=1) / (m * (m - 1))
        A2 = self.G_F + m * self.lam2 * np.eye(m)
        self.c = _resolver_spd(A2, self.F_g)
        self.Q = self.P / (self.lam2 * m * (m - 1)) - self.B * self.c[None, :] / self.lam2

        self.residuos = {
            "B": _residuo(R, self.B, lado_B),
            "P": _residuo(R, self.P, lado_P),
            "c": _residuo(A2, self.c, self.F_g),
        }
        self.ajustado = True
        return self

    def _k(self, rol, Xa, Xb):
        return rbf_gram(Xa, Xb, self.anchos[rol])

    def _exigir(self):
        if not self.ajustado:
            raise StateError("KAP no fue ajustado")

    def _qz(self, Z):
        return self.Q.T @ self._k("z", self.z1, _matriz(Z))

    def phi(self, a, z):
        """φ̂(a, z) punto a punto"""
        self._exigir()
        return (self._k("a", self.a2, _matriz(a)) * self._qz(z)).sum(axis=0)

    def phi_grilla(self, grilla, Z):
        """φ̂(a_g, z_j): matriz (G, J)"""
        self._exigir()
        return self._k("a", self.a2, _matriz(grilla)).T @ self._qz(Z)

    def coeficientes(self):
        """Θ̂ en la base φ_A(ã_i) ⊗ φ_Z(z̄_l): matriz (m, n)"""
        self._exigir()
        return self.Q.T

    def curva(self, grilla, lam3=None):
        """
        Tercera etapa: f̂(a) = Σ_j γ_j(a) ỹ_j φ̂(a, z̃_j) con
        γ(a) = (K_ÃÃ + mλ₃I)⁻¹K_Ãa sobre D2
        """
        self._exigir()
        lam3 = self.lam3 if lam3 is None else _lam(lam3)
        grilla = np.asarray(grilla, dtype=np.float64).reshape(-1)
        m = len(self.a2)
        gamma = _resolver_spd(self._k("a", self.a2, self.a2) + m * lam3 * np.eye(m),
                              self._k("a", self.a2, grilla)).T
        Phi = self.phi_grilla(grilla, self.z2)
        valores = (gamma * self.y2[None, :] * Phi).sum(axis=1)
        return DoseResponseCurve(grilla, valores, etiqueta="KAP")

    def exportar(self):
        self._exigir()
        tensores = {"kap.Q": self.Q, "kap.a2": self.a2, "kap.z1": self.z1, "kap.z2": self.z2, "kap.y2": self.y2}
        meta = {"lam1": self.lam1, "lam2": self.lam2, "lam3": self.lam3, "anchos": self.anchos}
        return tensores, meta


def kap_fit(d1, d2, lam1=None, lam2=None, lam3=None):
    """Ajusta KAP sobre los folds D1 y D2 (sin covariables)"""
    return KapModel(lam1, lam2, lam3).ajustar(d1, d2)


def kap_curve(modelo, grilla, lam3=None):
    return modelo.curva(grilla, lam3)


# ==============================================
# DRKPV
# ==============================================

def pesos_xi(a_tercera, grilla, ancho, lam_dr=None):
    """ξ(a) = (K_AA + tλI)⁻¹K_Aa: matriz (G, t)"""
    lam_dr = _lam(lam_dr)
    a_tercera = _matriz(a_tercera)
    t = len(a_tercera)
    K = rbf_gram(a_tercera, a_tercera, ancho)
    return _resolver_spd(K + t * lam_dr * np.eye(t), rbf_gram(a_tercera, _matriz(grilla), ancho)).T


def drkpv_curve(kpv, kap, tercera, grilla, lam_dr=None):
    """
    f̂_DR(a) = f̂_KPV(a) + f̂_KAP(a) − Σ_i ξ_i(a) φ̂(a, z_i) ĥ(a, w_i)

    Args:
        kpv: KpvModel ajustado (sin covariables)
        kap: KapModel ajustado
        tercera: ProxyDataset del tercer split (por defecto D2)
        grilla: puntos de tratamiento
        lam_dr: ridge de los pesos ξ
    """
    if len(tercera) == 0:
        raise DataError("Tercer split vacío")
    if kpv.tiene_x:
        raise ValidationError("DRKPV solo está definido sin covariables X")
    grilla = np.asarray(grilla, dtype=np.float64).reshape(-1)
    xi = pesos_xi(tercera.bloque("a"), grilla, kap.anchos["a"], lam_dr)
    cruzado = (xi * kap.phi_grilla(grilla, tercera.bloque("z"))
               * kpv.h_grilla(grilla, tercera.bloque("w"))).sum(axis=1)
    f_h = kpv.curva(grilla, tercera).valores
    f_phi = kap.curva(grilla).valores
    return DoseResponseCurve(grilla, f_h + f_phi - cruzado, etiqueta="DRKPV")
