import pluggy


hookspec = pluggy.HookspecMarker("unlearnlab")


@hookspec
def ports():
    """ Register port adapters
    :return a dict mapping adapter names to Port subclasses
    """


@hookspec
def parser(parser, subparsers):
    """ Extend the core unlearn-lab cli parser
    :return a set of plugin parser extensions
    """
