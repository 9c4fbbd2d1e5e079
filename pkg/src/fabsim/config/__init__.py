"""Template language, profile compiler, canonical profiles and schema checks."""

from fabsim.config.compiler import ConfigDatabase, compile_profile, expansion_order
from fabsim.config.grammar import (
    ASSIGN,
    DELETE,
    INCLUDE,
    OBJECT,
    OVERRIDE,
    Statement,
    TemplateSource,
    parse_template,
    parse_templates,
    template_set,
)
from fabsim.config.profile import (
    ConfigPath,
    ProfileTree,
    kind_of,
    parse_profile,
    query,
    serialize_profile,
    values_equal,
)
from fabsim.config.schema import GlobalSchema, SchemaEntry, Violation, validate_schema

__all__ = [
    "ASSIGN",
    "DELETE",
    "INCLUDE",
    "OBJECT",
    "OVERRIDE",
    "ConfigDatabase",
    "ConfigPath",
    "GlobalSchema",
    "ProfileTree",
    "SchemaEntry",
    "Statement",
    "TemplateSource",
    "Violation",
    "compile_profile",
    "expansion_order",
    "kind_of",
    "parse_profile",
    "parse_template",
    "parse_templates",
    "query",
    "serialize_profile",
    "template_set",
    "validate_schema",
    "values_equal",
]
