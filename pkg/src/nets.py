"""
Featurizers MLP, funciones de pérdida y optimizadores (AdamW, L-BFGS)

Los featurizers son redes totalmente conectadas cuyos bloques aplican, en este
orden: lineal -> LayerNorm -> activación -> BatchNorm -> dropout.
"""

import math
import sys
from collections import deque
from dataclasses import dataclass, field, asdict
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

sys.path.append(str(Path(__file__).parent.parent))
from config import REDES, NUMERICO

from .errors import ConfigurationError, ShapeError, OptimizerError
from .linalg_ad import DTYPE, elementwise, layernorm, batchnorm, como_matriz

NORMAS = ("none", "LN", "BN", "LN+BN")
ACTIVACIONES = ("none", "GELU", "ReLU", "tanh")


# ==============================================
# CONFIGURACIÓN DE CAPAS
# ==============================================

@dataclass
class LayerSpec:
    entrada: int
    salida: int
    norma: str = "none"
    activacion: str = "none"
    dropout: float = 0.0

    def validar(self):
        if self.entrada < 1 or self.salida < 1:
            raise ConfigurationError(f"Dimensiones de capa inválidas: {self.entrada}->{self.salida}")
        if self.norma not in NORMAS:
            raise ConfigurationError(f"Norma desconocida: {self.norma}")
        if self.activacion not in ACTIVACIONES:
            raise ConfigurationError(f"Activación desconocida: {self.activacion}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"Dropout fuera de [0, 1): {self.dropout}")


@dataclass
class MLPConfig:
    """
    Arquitectura de un featurizer

    Args:
        entrada: dimensión de la entrada
        capas: bloques en orden; lista vacía = identidad
        semilla: semilla de inicialización y de las máscaras de dropout
    """
    entrada: int
    capas: list = field(default_factory=list)
    semilla: int = 0

    def __post_init__(self):
        self.capas = [c if isinstance(c, LayerSpec) else LayerSpec(**c) for c in self.capas]
        if self.entrada < 1:
            raise ConfigurationError(f"Dimensión de entrada inválida: {self.entrada}")
        dim = self.entrada
        for capa in self.capas:
            capa.validar()
            if capa.entrada != dim:
                raise ConfigurationError(f"Capa encadenada mal: se esperaba entrada {dim}, hay {capa.entrada}")
            dim = capa.salida

    @property
    def salida(self):
        return self.capas[-1].salida if self.capas else self.entrada

    @classmethod
    def desde_preset(cls, entrada, spec, semilla=0):
        """
        Construye la arquitectura a partir de una sección de preset

        Claves: hidden, out, norm, activation, dropout, final_norm,
        final_activation, final_dropout. Sin `out` el featurizer es la identidad.
        """
        if spec is None or spec.get("out") is None:
            return cls(entrada=entrada, capas=[], semilla=semilla)

        ocultas = list(spec.get("hidden", []))
        norma = spec.get("norm", "none")
        activacion = spec.get("activation", "none")
        dropout = float(spec.get("dropout", 0.0))

        capas = []
        dim = entrada
        for ancho in ocultas:
            capas.append(LayerSpec(dim, int(ancho), norma, activacion, dropout))
            dim = int(ancho)
        capas.append(LayerSpec(
            dim, int(spec["out"]),
            spec.get("final_norm", norma),
            spec.get("final_activation", activacion),
            float(spec.get("final_dropout", 0.0)),
        ))
        return cls(entrada=entrada, capas=capas, semilla=semilla)

    def a_dict(self):
        return {"entrada": self.entrada, "semilla": self.semilla,
                "capas": [asdict(c) for c in self.capas]}


# ==============================================
# FEATURIZER
# ==============================================

class _Bloque(nn.Module):

    def __init__(self, spec, generador):
        super().__init__()
        self.spec = spec
        # Glorot uniforme con el generador propio del featurizer
        limite = math.sqrt(6.0 / (spec.entrada + spec.salida))
        pesos = (2.0 * torch.rand(spec.salida, spec.entrada, generator=generador, dtype=DTYPE) - 1.0) * limite
        self.peso = nn.Parameter(pesos)
        self.sesgo = nn.Parameter(torch.zeros(spec.salida, dtype=DTYPE))

        if "LN" in spec.norma:
            self.ln_escala = nn.Parameter(torch.ones(spec.salida, dtype=DTYPE))
            self.ln_sesgo = nn.Parameter(torch.zeros(spec.salida, dtype=DTYPE))
        if "BN" in spec.norma:
            self.bn_escala = nn.Parameter(torch.ones(spec.salida, dtype=DTYPE))
            self.bn_sesgo = nn.Parameter(torch.zeros(spec.salida, dtype=DTYPE))
            self.register_buffer("media_corriente", torch.zeros(spec.salida, dtype=DTYPE))
            self.register_buffer("var_corriente", torch.ones(spec.salida, dtype=DTYPE))

    def forward(self, h, modo, generador):
        h = F.linear(h, self.peso, self.sesgo)
        if "LN" in self.spec.norma:
            h = layernorm(h) * self.ln_escala + self.ln_sesgo
        h = elementwise(self.spec.activacion, h)
        if "BN" in self.spec.norma:
            h = batchnorm(h, self.media_corriente, self.var_corriente, modo)
            h = h * self.bn_escala + self.bn_sesgo
        if self.spec.dropout > 0.0 and modo == "train":
            mascara = torch.bernoulli(
                torch.full(h.shape, 1.0 - self.spec.dropout, dtype=DTYPE), generator=generador
            )
            h = elementwise("dropout", h, mascara=mascara, tasa=self.spec.dropout, entrenamiento=True)
        return h


class Featurizer(nn.Module):
    """
    MLP que mapea una matriz n x entrada a n x salida

    El modo ('train' o 'eval') se pasa explícitamente en cada llamada: controla
    las máscaras de dropout y las estadísticas de BatchNorm.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.generador = torch.Generator().manual_seed(int(config.semilla))
        self.bloques = nn.ModuleList([_Bloque(c, self.generador) for c in config.capas])

    @property
    def salida(self):
        return self.config.salida

    def forward(self, X, modo="eval"):
        X = como_matriz(X)
        if X.shape[1] != self.config.entrada:
            raise ShapeError(f"Featurizer espera {self.config.entrada} columnas, recibió {X.shape[1]}")
        h = X
        for bloque in self.bloques:
            h = bloque(h, modo, self.generador)
        return h


def forward(featurizer, X, modo="eval"):
    """Aplica un featurizer en el modo indicado"""
    return featurizer(X, modo)


def exportar_featurizer(featurizer, prefijo):
    """Parámetros y buffers como arrays numpy con claves prefijadas"""
    tensores = {f"{prefijo}.{k}": v.detach().cpu().numpy() for k, v in featurizer.state_dict().items()}
    return tensores, featurizer.config.a_dict()


def restaurar_featurizer(config, tensores, prefijo):
    """Inverso de exportar_featurizer"""
    featurizer = Featurizer(MLPConfig(**config))
    inicio = f"{prefijo}."
    estado = {k[len(inicio):]: torch.as_tensor(v, dtype=DTYPE)
              for k, v in tensores.items() if k.startswith(inicio)}
    featurizer.load_state_dict(estado)
    return featurizer


# ==============================================
# PÉRDIDAS
# ==============================================

@dataclass
class LossKind:
    """
    Pérdida de segunda etapa

    tipo: mse | logcosh | huber | mse_cf (MSE con cabeza en forma cerrada)
    """
    tipo: str = "logcosh"
    delta: float = REDES["delta_huber"]

    ALIAS = {
        "mse": "mse", "logcosh": "logcosh", "log-cosh": "logcosh", "huber": "huber",
        "mse_cf": "mse_cf", "mse-cf": "mse_cf", "mse-closedform": "mse_cf",
    }

    def __post_init__(self):
        clave = self.ALIAS.get(str(self.tipo).lower())
        if clave is None:
            raise ConfigurationError(f"Pérdida desconocida: {self.tipo}")
        self.tipo = clave
        if self.tipo == "huber" and self.delta <= 0:
            raise ConfigurationError(f"delta de Huber debe ser positivo: {self.delta}")

    @property
    def forma_cerrada(self):
        return self.tipo == "mse_cf"


def loss(tipo, y, y_hat):
    """
    Pérdida promedio entre objetivos y predicciones

    Args:
        tipo: LossKind o nombre de la pérdida
        y: objetivos (n,)
        y_hat: predicciones (n,)

    Returns:
        Tensor escalar
    """
    if not isinstance(tipo, LossKind):
        tipo = LossKind(tipo)
    if y.shape != y_hat.shape:
        raise ShapeError(f"Formas distintas en la pérdida: {tuple(y.shape)} vs {tuple(y_hat.shape)}")
    if tipo.tipo in ("mse", "mse_cf"):
        return ((y - y_hat) ** 2).mean()
    if tipo.tipo == "logcosh":
        return elementwise("logcosh", y - y_hat).mean()
    return F.huber_loss(y_hat, y, delta=tipo.delta)


# ==============================================
# ADAMW
# ==============================================

class AdamWState:
    """
    Estado de AdamW sobre un conjunto de parámetros con nombre

    Args:
        parametros: iterable de (nombre, parámetro)
        lr: tasa de aprendizaje
        weight_decay: decaimiento de pesos desacoplado
    """

    def __init__(self, parametros, lr, weight_decay=0.0):
        pares = [(n, p) for n, p in parametros if p.requires_grad]
        self.nombres = [n for n, _ in pares]
        self.parametros = [p for _, p in pares]
        self.optimizador = None
        if self.parametros:
            self.optimizador = torch.optim.AdamW(
                self.parametros, lr=lr, weight_decay=weight_decay,
                betas=REDES["adamw"]["betas"], eps=REDES["adamw"]["eps"],
            )

    def zero_grad(self):
        if self.optimizador is not None:
            self.optimizador.zero_grad(set_to_none=True)


def adamw_step(estado):
    """Un paso de AdamW; falla si algún gradiente no es finito"""
    if estado.optimizador is None:
        return
    for nombre, p in zip(estado.nombres, estado.parametros):
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise OptimizerError(f"Gradiente no finito en '{nombre}'", parametro=nombre)
    estado.optimizador.step()


# ==============================================
# L-BFGS
# ==============================================

@dataclass
class ResultadoLBFGS:
    theta: torch.Tensor
    valor: float
    iteraciones: int
    fallo_busqueda: bool = False


def _valor_y_gradiente(objetivo, theta):
    t = theta.detach().clone().requires_grad_(True)
    valor = objetivo(t)
    (grad,) = torch.autograd.grad(valor, t)
    return valor.detach(), grad.detach()


def _dos_bucles(grad, S, Y):
    q = grad.clone()
    alfas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / torch.dot(y, s)
        alfa = rho * torch.dot(s, q)
        q = q - alfa * y
        alfas.append((rho, alfa))
    gamma = torch.dot(S[-1], Y[-1]) / torch.dot(Y[-1], Y[-1]) if S else 1.0
    r = gamma * q
    for (s, y), (rho, alfa) in zip(zip(S, Y), reversed(alfas)):
        beta = rho * torch.dot(y, r)
        r = r + s * (alfa - beta)
    return r


def lbfgs_minimize(objetivo, inicial, pasos, lr=1.0, memoria=None):
    """
    Minimiza un objetivo suave con L-BFGS y búsqueda lineal de Armijo

    Cada iteración prueba el paso t = lr sobre la dirección de dos bucles y lo
    divide a la mitad hasta cumplir Armijo. Si no lo logra, devuelve el mejor
    iterado con `fallo_busqueda=True`.

    Args:
        objetivo: callable tensor -> tensor escalar diferenciable
        inicial: vector inicial
        pasos: número máximo de iteraciones
        lr: paso de prueba inicial
        memoria: pares (s, y) guardados (default REDES['lbfgs']['memoria'])

    Returns:
        ResultadoLBFGS
    """
    cfg = REDES["lbfgs"]
    memoria = memoria or cfg["memoria"]
    theta = inicial.detach().clone()
    valor, grad = _valor_y_gradiente(objetivo, theta)
    if not torch.isfinite(valor) or not torch.isfinite(grad).all():
        raise OptimizerError("Objetivo o gradiente no finito en el punto inicial")

    S, Y = deque(maxlen=memoria), deque(maxlen=memoria)
    fallo = False
    iteraciones = 0
    for _ in range(pasos):
        if grad.abs().max() <= NUMERICO["tolerancia_gradiente"]:
            break
        direccion = -_dos_bucles(grad, S, Y)
        pendiente = torch.dot(grad, direccion)
        if pendiente >= 0:
            # dirección no descendente: reinicio con gradiente
            S.clear()
            Y.clear()
            direccion = -grad
            pendiente = -torch.dot(grad, grad)

        t = lr
        aceptado = False
        for _ in range(cfg["max_retrocesos"] + 1):
            candidato = theta + t * direccion
            valor_nuevo, grad_nuevo = _valor_y_gradiente(objetivo, candidato)
            if torch.isfinite(valor_nuevo) and valor_nuevo <= valor + cfg["c_armijo"] * t * pendiente:
                aceptado = True
                break
            t *= cfg["factor_retroceso"]
        if not aceptado:
            fallo = True
            break

        s = candidato - theta
        y = grad_nuevo - grad
        if torch.dot(s, y) > 1e-12 * torch.dot(y, y).clamp_min(1e-300):
            S.append(s)
            Y.append(y)
        theta, valor, grad = candidato, valor_nuevo, grad_nuevo
        iteraciones += 1

    return ResultadoLBFGS(theta=theta, valor=float(valor), iteraciones=iteraciones, fallo_busqueda=fallo)


# ==============================================
# CRONOGRAMAS DE REGULARIZACIÓN
# ==============================================

@dataclass
class Cronograma:
    inicio: float
    fin: float
    tipo: str = "exponential"

    def __post_init__(self):
        if self.tipo not in ("exponential", "linear", "constant"):
            raise ConfigurationError(f"Cronograma desconocido: {self.tipo}")
        if self.tipo == "exponential" and (self.inicio <= 0 or self.fin <= 0):
            raise ConfigurationError("El cronograma exponencial requiere extremos positivos")

    @classmethod
    def desde_preset(cls, valor, tipo):
        if isinstance(valor, (int, float)):
            return cls(float(valor), float(valor), "constant")
        inicio, fin = valor
        return cls(float(inicio), float(fin), tipo)


def anneal(cronograma, epoca, total):
    """
    Valor del cronograma en una época

    La posición es t = epoca / (total - 1); con total = 1 devuelve el inicio.
    """
    if total < 1:
        raise ConfigurationError(f"Total de épocas inválido: {total}")
    if cronograma.tipo == "constant" or total == 1:
        return cronograma.inicio
    t = epoca / (total - 1)
    if cronograma.tipo == "exponential":
        return cronograma.inicio * (cronograma.fin / cronograma.inicio) ** t
    return cronograma.inicio + (cronograma.fin - cronograma.inicio) * t
