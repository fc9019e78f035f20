"""A setuptools based setup module.
See:
https://packaging.python.org/en/latest/distributing.html
https://github.com/pypa/sampleproject
"""

# Always prefer setuptools over distutils
from setuptools import setup, find_packages
from os import path
from io import open

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='adaptivediff',

    version='0.1',

    description='Adaptive skipping of noise predictions in diffusion '
                'samplers, driven by third-order latent differences.',

    long_description=long_description,
    long_description_content_type='text/markdown',

    classifiers=[
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],

    packages=find_packages(exclude=['config', 'data', 'docs', 'output',
                                    'test']),

    python_requires='>=3.8',

    install_requires=['numpy', 'scipy', 'matplotlib', 'tqdm'],
    extras_require={
        'test': ['pytest'],
        'docs': ['sphinx', 'sphinx_rtd_theme'],
    },

    entry_points={
        'console_scripts': ['adaptivediff=adaptivediff.cli:main'],
    },

)
