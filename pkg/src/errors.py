"""
Excepciones del laboratorio de aprendizaje causal con proxies
"""


class ProxyCausalError(Exception):
    """Error base de todo el paquete"""


class ShapeError(ProxyCausalError):
    """Dimensiones incompatibles entre matrices, vectores o columnas"""


class NumericalError(ProxyCausalError):
    """
    Falla numérica (factorización de Cholesky fallida, sistema singular)

    Args:
        mensaje: descripción del problema
        pivote: índice (base 0) del pivote donde falló la factorización
    """

    def __init__(self, mensaje, pivote=None):
        super().__init__(mensaje)
        self.pivote = pivote


class ConfigurationError(ProxyCausalError):
    """Parámetro de configuración inválido o combinación no soportada"""


class DataError(ProxyCausalError):
    """
    Datos inválidos (no finitos, vacíos, columnas degeneradas)

    Args:
        mensaje: descripción del problema
        fila: índice de la fila problemática, si aplica
    """

    def __init__(self, mensaje, fila=None):
        super().__init__(mensaje)
        self.fila = fila


class DegenerateBatchError(DataError):
    """Lote de tamaño 1 en modo entrenamiento con BatchNorm"""


class StateError(ProxyCausalError):
    """Operación sobre un modelo que todavía no fue ajustado"""


class OptimizerError(ProxyCausalError):
    """
    Gradiente no finito u objetivo inválido en un optimizador

    Args:
        mensaje: descripción del problema
        parametro: nombre del parámetro afectado
    """

    def __init__(self, mensaje, parametro=None):
        super().__init__(mensaje)
        self.parametro = parametro


class GridMismatchError(ProxyCausalError):
    """La grilla de la curva estimada no coincide con la del oráculo"""


class ValidationError(ProxyCausalError):
    """Configuración de corrida incompatible (estimador/benchmark/objetivo)"""
