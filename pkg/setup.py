from os.path import join, dirname

from setuptools import setup, find_packages


def read(filename):
    with open(join(dirname(__file__), filename)) as file_obj:
        return file_obj.read()


def get_version(package):
    return [
        line for line in read('{}/__init__.py'.format(package)).splitlines()
        if line.startswith('__version__ = ')][0].split("'")[1]


PACKAGE = 'gap-afem'
VERSION = get_version('gap_afem')


setup(
    name=PACKAGE,
    version=VERSION,
    description='Adaptive finite elements with primal-dual gap estimators '
                'for regularized obstacle type problems.',
    long_description=read('README.rst'),
    author='Omar Masmoudi',
    packages=find_packages(exclude=['tests']),
    entry_points="""
        [console_scripts]
        gap-afem = gap_afem.cli:main
    """,
    install_requires=[
        'docopt',
        'numpy',
        'scipy',
        'matplotlib',
        'boto3',
    ],
    extras_require={
        'test': ['pytest'],
    },
)
