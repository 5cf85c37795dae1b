"""tablekit: an interactive table-extraction workbench.

Extraction model, template clustering with label recommendations,
spreadsheet-style correction of extracted tables, and finetuning of the
model from those corrections -- plus a project service, HTTP API, and CLI
that tie the loop together.
"""

from .errors import (
    BusyError,
    ConflictError,
    EditError,
    NotFoundError,
    SchemaError,
    TableKitError,
    TilingError,
    TrainingError,
)
from .extract import (
    CellBox,
    ModelParams,
    TableRegion,
    detect_cells,
    detect_tables,
    featurize_region,
    page_confidence,
    propose_regions,
    score_region,
)
from .geometry import BBox, iou
from .layout import PageLayout, RulingLine, Token, normalize_layout, parse_page_file, serialize_page
from .structure import Cell, TableGrid, build_grid, cluster_axis, from_annotation, grid_to_annotation, to_html
from .templates import Recommendation, TemplateAssignment, cluster_templates, embed_page, recommend_labels

__version__ = "0.1.0"
