# -*- coding: utf-8 -*-
"""Pre-import package setup."""
import os

SEP = os.path.sep
DATA_DIR_ENV = 'TACTEV_DATA_DIR'


def subclasses(cls, abstract=False, private=False):
    """Return the subclasses of class `cls` as a dict.

    If abstract, include classes with abstract methods.
    If private, include private classes.
    """
    return {
        sc.__name__: sc
        for sc in cls.__subclasses__()
        if (abstract or not sc.__abstractmethods__) and (
            private or sc.__name__[0] != '_')
    }


def data_dir():
    """Default directory for datasets and outputs.

    The value of the TACTEV_DATA_DIR environment variable if set, else the
    current working directory.
    """
    path = os.environ.get(DATA_DIR_ENV)
    if not path:
        return os.getcwd()
    return os.path.abspath(os.path.expanduser(path))


def data_path(name):
    """Resolve a relative file name against the data dir."""
    if os.path.isabs(name):
        return name
    return os.path.join(data_dir(), name)


package_path = os.path.dirname(os.path.abspath(__file__))
package_name = package_path.split(SEP)[-1]


def package_version():
    """Version number from the version.json file shipped with the package."""
    import json
    with open(os.path.join(package_path, 'version.json')) as fp:
        return json.load(fp)['version']
