#!/usr/bin/env python3

import pathlib

from setuptools import setup, find_packages


PROJ_ROOT = pathlib.Path(__file__).parent


def readme():
    with open(PROJ_ROOT / 'README.rst', 'r', encoding='utf-8') as readme:
        return readme.read()


setup(
    name='curvlab',
    version='0.1.0',
    platforms=['any'],
    python_requires='>=3.8',
    install_requires=['numpy>=1.21.6', 'scipy>=1.7.3'],
    extras_require={'dataframe': ['pandas']},
    entry_points={'console_scripts': ['curvlab=curvlab.cli:main']},
    long_description=readme(),
    long_description_content_type='text/x-rst',
    zip_safe=True,
    package_dir={'': 'src'},
    packages=find_packages('src', exclude=['test']))
