class IxpSpoofError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(IxpSpoofError, ValueError):
    def __init__(self, message: str, *, field: str | None = None,
                 lineno: int | None = None, source: str | None = None) -> None:
        self.field = field
        self.lineno = lineno
        self.source = source
        self.reason = message
        super().__init__(self._render())

    def _render(self) -> str:
        where = []
        if self.source is not None:
            where.append(str(self.source))
        if self.lineno is not None:
            where.append(f"line {self.lineno}")
        prefix = ":".join(where)
        msg = self.reason if self.field is None else f"{self.field}: {self.reason}"
        return f"{prefix}: {msg}" if prefix else msg

    def with_context(self, *, lineno: int | None = None, source: str | None = None) -> "ParseError":
        return ParseError(self.reason, field=self.field,
                          lineno=self.lineno if lineno is None else lineno,
                          source=self.source if source is None else source)


class ConfigError(IxpSpoofError):
    pass


class UnknownMemberError(IxpSpoofError, KeyError):
    def __str__(self) -> str:
        return f"AS{self.args[0]} is not a member of this cone set"


class ConeVariantError(IxpSpoofError, ValueError):
    pass
