"""Exceções do SvaCLR.

Cada família de erro tem uma classe própria para que a linha de comando
consiga mapear o problema para o código de saída correto.
"""


class SvaclrError(Exception):
    """Base de todos os erros do projeto"""


class ShapeMismatchError(SvaclrError, ValueError):
    """Formatos incompatíveis para uma operação de tensor"""

    def __init__(self, kind, *shapes):
        self.kind = kind
        self.shapes = shapes
        formatted = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{kind}: formatos incompatíveis {formatted}")


class DomainError(SvaclrError, ValueError):
    """Entrada fora do domínio da operação (ex.: log de valor não positivo)"""


class RawSignalTooShortError(SvaclrError, ValueError):
    """Sinal bruto curto demais para a janela/offset/velocidade pedidos"""

    def __init__(self, required, available, what="amostras"):
        self.required = required
        self.available = available
        super().__init__(
            f"sinal bruto curto demais: são necessárias {required} {what}, "
            f"mas há apenas {available}"
        )


class DatasetFormatError(SvaclrError):
    """Arquivo de dataset inválido"""


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class DimensionMismatchError(DatasetFormatError):
    pass


class CheckpointFormatError(SvaclrError):
    """Checkpoint com magic, versão ou conteúdo inválido"""


class ConfigError(SvaclrError, ValueError):
    """Configuração inválida (chave desconhecida, valor fora da faixa...)"""


class NonFiniteLossError(SvaclrError, FloatingPointError):
    """Loss não finita durante o treino; o treino é abortado"""

    def __init__(self, step, lr, loss):
        self.step = step
        self.lr = lr
        self.loss = loss
        super().__init__(f"loss não finita no passo {step} (lr={lr:.6g}, loss={loss})")


class ProbeError(SvaclrError, ValueError):
    """Problema nos dados do linear probe"""


class EvaluationError(SvaclrError, ValueError):
    """Problema nos dados de avaliação"""
