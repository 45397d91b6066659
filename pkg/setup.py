import setuptools

def readme():
    with open('README.md', 'r') as f:
        return f.read()

setuptools.setup(
    name='metrocontrol',
    version='0.1.0',
    description='Control-enhanced multiparameter quantum estimation of qubit fields',
    long_description=readme(),
    long_description_content_type='text/markdown',
    packages=setuptools.find_packages(exclude=['tests', 'tests.*']),
    package_data={'metrocontrol': ['config-schema.json']},
    include_package_data=True,
    license='GPL-2+',
    classifiers=[
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Physics',
        'License :: OSI Approved :: GNU General Public License v2 or later (GPLv2+)'
    ],
    python_requires='>=3.7',
    install_requires=[
        'appdirs',
        'jsonschema>=3.0',
        'numpy>=1.17',
        'scipy>=1.6'
    ],
    extras_require={
        'test': ['pytest']
    },
    entry_points={
        'console_scripts': [
            'metrocontrol=metrocontrol.__main__:main',
            'metrocontrol-regression-check=metrocontrol.tools.regression_check:main'
        ]
    }
)
