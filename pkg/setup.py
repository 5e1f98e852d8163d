# -*- coding: utf-8 -*-
"""Setup module."""
from setuptools import setup

NAME = 'tactev'
VERSION_FILE = 'tactev/version.json'
INSTALL_REQUIRES = [
    'numpy>=1.20',
    'scipy>=1.6',
    'numba>=0.53',
    'pandas>=1.2',
    'PyYAML>=5.4',
]
EXTRAS_REQUIRES = {'test': ['pytest', 'hypothesis']}


def get_version(source):
    """ Retrieve version number."""
    import json
    with open(source, 'r') as _vf:
        version_data = json.load(_vf)
    try:
        return version_data['version']
    except KeyError:
        raise KeyError('check version file: no version number')


def get_long_description():
    """Get the long description from the README file."""
    from os import path
    import codecs
    here = path.abspath(path.dirname(__file__))
    with codecs.open(path.join(here, 'README.rst'), encoding='utf-8') as _rf:
        return _rf.read()


VERSION = get_version(VERSION_FILE)
LONG_DESCRIPTION = get_long_description()

setup(
    name=NAME,
    version=VERSION,
    description='Event-based tactile sensing: simulation, tracking, '
    'force and slip',
    long_description=LONG_DESCRIPTION,
    keywords='event camera tactile sensor slip detection grasping',
    packages=['tactev'],
    package_data={'tactev': ['version.json']},
    python_requires='>=3.7',
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRES,
    entry_points={'console_scripts': ['tactev=tactev.cli:main']},
    license='BSD 3-Clause',
    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
)
