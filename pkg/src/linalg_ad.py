"""
Álgebra lineal densa diferenciable (modo reverso) sobre tensores float64

Incluye la resolución de sistemas simétricos definidos positivos con gradiente
implícito, productos de Kronecker y las operaciones elementales que usan los
featurizers.
"""

import sys
from pathlib import Path

import torch
import torch.nn.functional as F

sys.path.append(str(Path(__file__).parent.parent))
from config import NUMERICO, REDES

from .errors import ShapeError, NumericalError, ConfigurationError, DegenerateBatchError

DTYPE = getattr(torch, NUMERICO["dtype"])


def como_tensor(datos):
    """Convierte arrays/listas a tensor float64 sin copiar si ya lo es"""
    if isinstance(datos, torch.Tensor):
        return datos.to(DTYPE)
    return torch.as_tensor(datos, dtype=DTYPE)


def como_matriz(datos):
    """Tensor 2-D; los vectores se convierten en columna"""
    t = como_tensor(datos)
    if t.dim() == 1:
        t = t.reshape(-1, 1)
    if t.dim() != 2:
        raise ShapeError(f"Se esperaba matriz 2-D, se recibió forma {tuple(t.shape)}")
    return t


# ==============================================
# PRODUCTOS
# ==============================================

def matmul(a, b):
    """Producto matricial con chequeo de dimensiones"""
    if a.dim() != 2 or b.dim() != 2:
        raise ShapeError(f"matmul requiere matrices 2-D: {tuple(a.shape)} x {tuple(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Dimensiones internas incompatibles: {tuple(a.shape)} x {tuple(b.shape)}")
    return a @ b


def _aplanar_vector(v, nombre):
    if v.dim() == 2 and v.shape[1] == 1:
        return v.reshape(-1)
    if v.dim() != 1:
        raise ShapeError(f"{nombre} debe ser vector o columna, forma {tuple(v.shape)}")
    return v


def kron_vec(u, v):
    """
    Producto de Kronecker de dos vectores, orden fila-mayor

    Args:
        u: vector de largo p (o columna p x 1)
        v: vector de largo q (o columna q x 1)

    Returns:
        Tensor de largo p*q con componente i*q + j igual a u_i * v_j
    """
    u = _aplanar_vector(u, "u")
    v = _aplanar_vector(v, "v")
    return torch.outer(u, v).reshape(-1)


def kron_filas(U, V):
    """Kronecker fila a fila: (n, p) y (n, q) -> (n, p*q)"""
    if U.dim() != 2 or V.dim() != 2:
        raise ShapeError("kron_filas requiere matrices 2-D")
    if U.shape[0] != V.shape[0]:
        raise ShapeError(f"Cantidad de filas distinta: {U.shape[0]} vs {V.shape[0]}")
    n = U.shape[0]
    return (U[:, :, None] * V[:, None, :]).reshape(n, -1)


# ==============================================
# SISTEMAS SPD
# ==============================================

class _SolveSPD(torch.autograd.Function):
    """
    X = A^{-1} B para A simétrica definida positiva.

    Backward por diferenciación implícita: G_B = A^{-1} G y G_A = -sym(G_B X^T).
    """

    @staticmethod
    def forward(ctx, A, B):
        A_sim = 0.5 * (A + A.transpose(-1, -2))
        L, info = torch.linalg.cholesky_ex(A_sim)
        info = int(info)
        if info > 0:
            raise NumericalError(
                f"Cholesky falló: matriz no definida positiva en el pivote {info - 1}",
                pivote=info - 1,
            )
        X = torch.cholesky_solve(B, L)
        ctx.save_for_backward(L, X)
        return X

    @staticmethod
    def backward(ctx, G):
        L, X = ctx.saved_tensors
        G_B = torch.cholesky_solve(G, L)
        G_A = -G_B @ X.transpose(-1, -2)
        G_A = 0.5 * (G_A + G_A.transpose(-1, -2))
        return G_A, G_B


def solve_spd(A, B):
    """
    Resuelve A X = B con A simétrica definida positiva

    Args:
        A: matriz d x d (se simetriza antes de factorizar)
        B: matriz d x k o vector de largo d

    Returns:
        X con la misma forma que B

    Raises:
        NumericalError: si A no es definida positiva (con el pivote)
    """
    if A.dim() != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"A debe ser cuadrada, forma {tuple(A.shape)}")
    vector = B.dim() == 1
    B2 = B.reshape(-1, 1) if vector else B
    if B2.dim() != 2 or B2.shape[0] != A.shape[0]:
        raise ShapeError(f"B incompatible con A: {tuple(B.shape)} vs {tuple(A.shape)}")
    X = _SolveSPD.apply(A, B2)
    return X.reshape(-1) if vector else X


# ==============================================
# OPERACIONES ELEMENTALES
# ==============================================

def _logcosh(r):
    # log cosh r = |r| + log1p(e^{-2|r|}) - log 2, estable para |r| grande
    m = r.abs()
    return m + torch.log1p(torch.exp(-2.0 * m)) - torch.log(torch.tensor(2.0, dtype=r.dtype))


_ACTIVACIONES = {
    "gelu": lambda x: F.gelu(x, approximate="none"),
    "relu": F.relu,
    "tanh": torch.tanh,
    "logcosh": _logcosh,
    "identity": lambda x: x,
    "none": lambda x: x,
}


def elementwise(tipo, x, otro=None, factor=None, mascara=None, tasa=0.0, entrenamiento=False):
    """
    Despacho de operaciones elemento a elemento

    Args:
        tipo: gelu | relu | tanh | logcosh | identity | dropout | add | scale
        x: tensor de entrada
        otro: segundo operando de 'add'
        factor: escalar de 'scale'
        mascara: máscara 0/1 de 'dropout' (obligatoria en entrenamiento)
        tasa: probabilidad de descarte de 'dropout'
        entrenamiento: si False, 'dropout' es la identidad

    Returns:
        Tensor resultado
    """
    clave = tipo.lower()
    if clave in _ACTIVACIONES:
        return _ACTIVACIONES[clave](x)
    if clave == "dropout":
        if not entrenamiento or tasa == 0.0:
            return x
        if mascara is None:
            raise ConfigurationError("dropout en entrenamiento requiere una máscara")
        if mascara.shape != x.shape:
            raise ShapeError("La máscara de dropout no coincide con la entrada")
        return x * mascara / (1.0 - tasa)
    if clave == "add":
        if otro is None or otro.shape != x.shape:
            raise ShapeError("add requiere dos tensores de igual forma")
        return x + otro
    if clave == "scale":
        if factor is None:
            raise ConfigurationError("scale requiere un factor")
        return x * factor
    raise ConfigurationError(f"Operación elemental desconocida: {tipo}")


# ==============================================
# NORMALIZACIONES
# ==============================================

def layernorm(x, eps=None):
    """Normaliza cada fila a media 0 y varianza 1 (sin afín)"""
    eps = REDES["eps_norma"] if eps is None else eps
    media = x.mean(dim=-1, keepdim=True)
    centrado = x - media
    var = (centrado * centrado).mean(dim=-1, keepdim=True)
    return centrado / torch.sqrt(var + eps)


def batchnorm(x, media_corriente, var_corriente, modo="train", momentum=None, eps=None):
    """
    BatchNorm sin afín sobre la dimensión del lote

    En modo 'train' usa los momentos del lote y actualiza en el lugar las
    estadísticas corrientes; en 'eval' usa las estadísticas guardadas.
    """
    momentum = REDES["momentum_bn"] if momentum is None else momentum
    eps = REDES["eps_norma"] if eps is None else eps
    if modo == "train":
        if x.shape[0] < 2:
            raise DegenerateBatchError("BatchNorm en entrenamiento requiere al menos 2 filas")
        return F.batch_norm(x, media_corriente, var_corriente, training=True,
                            momentum=momentum, eps=eps)
    if modo == "eval":
        return F.batch_norm(x, media_corriente, var_corriente, training=False, eps=eps)
    raise ConfigurationError(f"Modo desconocido: {modo}")
