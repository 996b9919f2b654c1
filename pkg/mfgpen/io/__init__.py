"""Input/Output module for mfgpen.

Parsers turn JSON run configurations into :class:`~mfgpen.config.RunConfig`;
formatters emit the CSV and JSON artifacts of the command line tool.
"""

from .parsers import config_digest, load_config, parse_config
from .formatters import format_csv, format_json, level_name
