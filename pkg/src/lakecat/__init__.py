"""lakecat: a desk-scale data lake metadata catalog and governance engine."""

from .catalog import Catalog, CatalogState
from .errors import CatalogError
from .medal import DataEntity, DataEntityType, build_entity_type, validate_entity

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "CatalogState",
    "CatalogError",
    "DataEntity",
    "DataEntityType",
    "build_entity_type",
    "validate_entity",
    "__version__",
]
