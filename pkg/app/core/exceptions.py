"""
Excepciones personalizadas del sistema

Principio: Fail Fast - Lanzar excepciones claras y específicas

Tres familias, cada una con su código de salida en la CLI:
- ConfigException  → 2
- DataException    → 3
- NumericException → 4
"""


class BaseAppException(Exception):
    """Base para todas las excepciones de la app"""

    exit_code: int = 1

    def __init__(self, message: str, details: dict = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class EmptyLagWarning(UserWarning):
    """Un lag |h| <= L no tiene pares de productos (se trata como faltante)"""
    pass


# ==================== CONFIG ====================

class ConfigException(BaseAppException):
    """Configuración inválida"""
    exit_code = 2


# ==================== DATA ====================

class DataException(BaseAppException):
    """Datos de entrada inválidos"""
    exit_code = 3


class ParseException(DataException):
    """Error de parseo en un archivo CSV"""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(
            message=f"Error de parseo en {path}, línea {line}: {reason}",
            details={"path": path, "line": line, "reason": reason}
        )


class DomainException(DataException):
    """Valor fuera del dominio permitido (ej: ubicación fuera de [0,1])"""

    def __init__(self, path: str, line: int, field: str, value: float):
        super().__init__(
            message=f"Valor fuera de dominio en {path}, línea {line}: {field}={value}",
            details={"path": path, "line": line, "field": field, "value": value}
        )


class EmptyDataException(DataException):
    """No hay observaciones"""
    pass


class InsufficientDataException(DataException):
    """Datos insuficientes para estimar (ej: N_0 = 0)"""
    pass


class MissingCurveException(DataException):
    """Falta una curva predicha necesaria para el pronóstico"""

    def __init__(self, t: int):
        super().__init__(
            message=f"Curva predicha no disponible para t={t}",
            details={"t": t}
        )


# ==================== NUMERIC ====================

class NumericException(BaseAppException):
    """Falla numérica"""
    exit_code = 4


class SingularFitException(NumericException):
    """Ajuste local sin puntos en la ventana, incluso después del fallback"""

    def __init__(self, estimator: str, point: tuple):
        super().__init__(
            message=f"Ajuste local singular en {estimator} en el punto {point}",
            details={"estimator": estimator, "point": list(point)}
        )


class DegenerateDenominatorException(NumericException):
    """S0*S2 - S1^2 degenerado en la densidad espectral cruzada"""
    pass


class ImagResidueException(NumericException):
    """Residuo imaginario demasiado grande tras integrar en frecuencia"""

    def __init__(self, what: str, residue: float, tolerance: float):
        super().__init__(
            message=f"Residuo imaginario {residue:.3e} > {tolerance:.1e} en {what}",
            details={"what": what, "residue": residue, "tolerance": tolerance}
        )


class SolveFailureException(NumericException):
    """Cholesky falla incluso después de escalar el jitter"""
    pass


class NonConvergenceException(NumericException):
    """Iteración de punto fijo sin convergencia"""
    pass


class SingularMException(NumericException):
    """Matriz conjunta del modelo de dos regresores no invertible"""
    pass


class NoFiniteScoreException(NumericException):
    """Ningún candidato produjo un score finito"""
    pass


class AllFoldsDegenerateException(NumericException):
    """Todos los folds de CV degeneraron para todos los candidatos"""
    pass
