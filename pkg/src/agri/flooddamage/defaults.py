"""Packaged defaults."""

import importlib_resources

DEFAULT_CONFIG_NAME = "default_pipeline.cfg"


def default_config_text() -> str:
    """Get the text of the packaged default pipeline configuration.

    The file must be listed in setup.cfg!

    Returns:
        the configuration text.
    """
    resources = importlib_resources.files(__package__) / "resources"
    resource = resources / DEFAULT_CONFIG_NAME
    return resource.read_text(encoding="utf-8")
