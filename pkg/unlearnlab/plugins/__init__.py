import pluggy
from . import hookspecs

hookimpl = pluggy.HookimplMarker("unlearnlab")
"""Marker to be imported and used in plugins (and for own implementations)"""


def get_plugin_manager() -> pluggy.PluginManager:
    from unlearnlab.clients import plugin as builtin

    pm = pluggy.PluginManager("unlearnlab")
    pm.add_hookspecs(hookspecs)
    pm.register(builtin, name="builtin")
    pm.load_setuptools_entrypoints("unlearnlab")
    return pm
