from setuptools import setup, find_packages

setup(
    name='RBDet',
    version='0.1.0',
    packages=find_packages(exclude=['tests', 'tests.*']),
    scripts=[],
    description='''a desk-scale workbench for robust backdoor attacks
on object detection''',
    long_description=open('README.md').read(),
    python_requires='>=3.8',
    setup_requires=['pytest-runner', 'pytest-xdist'],
    tests_require=['pytest'],
    install_requires=['attrs',
                      'toolz',
                      'numpy',
                      'scipy',
                      'pandas',
                      'Pillow',
                      'scikit-image',
                      'PyYAML',
    ],
    entry_points={
        'console_scripts': ['rbdet = rbdet.workbench.cli:main'],
    },
)
