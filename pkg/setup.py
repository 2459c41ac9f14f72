from setuptools import setup, find_packages

with open('README.rst') as file:
    long_description = file.read()

setup(
    name = "aslchamp",
    version = "0.1.0",

    description = "ASL sign recognition and lesson tools for hand-joint "
            "trajectories.",
    long_description = long_description,
    url = "https://github.com/rnelsonchem/aslchamp",

    author = "Ryan Nelson",
    author_email = "rnelsonchem@gmail.com",

    license = "BSD",
    classifiers = [
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: BSD License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
    ],

    keywords = "asl sign-language lstm cnn gesture",

    packages = find_packages(exclude=['tests']),
    python_requires = '>=3.9',
    install_requires = [
        'numpy>=1.20',
        'matplotlib>=3.3',
        'tables>=3.6',
        'scipy>=1.6',
        'pandas>=1.5',
    ],
    extras_require = {
        'test': [
            'pytest>=6.0',
            'hypothesis>=6.0',
        ],
    },

    package_data = {
        'aslchamp': [
            'data/*',
        ],
    },

    entry_points = {
        'console_scripts': [
            'aslchamp = aslchamp.cli:main',
        ],
    },
)
