"""Exception hierarchy shared across the pipeline."""


class VulnscribeError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(VulnscribeError):
    """Invalid configuration or missing input (exit code 2 territory)."""


class CorpusParseError(VulnscribeError):
    """Malformed corpus file (bad front matter, broken embedded-content tags)."""


class ValidationError(VulnscribeError):
    """A domain invariant was violated; message names the offending field."""


class TemplateError(VulnscribeError):
    """Unknown prompt template or missing placeholder binding."""


class ReplayMissError(VulnscribeError):
    """Replay store has no record for the request hash; never fabricated."""


class GatewayError(VulnscribeError):
    """Backend failure after retries were exhausted."""


class SchemaError(ValidationError):
    """Structured LLM reply failed schema validation; message carries the path."""


class AgentError(VulnscribeError):
    """An agent failed to produce parseable output after the repair round."""


class IngestionError(VulnscribeError):
    """Code ingestion found no usable source files or an unreadable one."""


class BenchmarkError(VulnscribeError):
    """Benchmark layout or manifest problem, named per sample."""


class AggregationError(VulnscribeError):
    """No usable experiment records to aggregate."""
