import os
import setuptools

here = os.path.abspath(os.path.dirname(__file__))

DESCRIPTION = "Graph-based exploration agents for language-guided object search"

try:
    LONG_DESCRIPTION = open(os.path.join(here, "README.md"), encoding="utf-8").read()
except Exception:
    LONG_DESCRIPTION = ""


def _read_reqs(relpath):
    fullpath = os.path.join(os.path.dirname(__file__), relpath)
    with open(fullpath) as f:
        return [s.strip() for s in f.readlines()
                if (s.strip() and not s.startswith("#"))]


REQUIREMENTS = _read_reqs("requirements.txt")

CLASSIFIERS = [
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "Operating System :: POSIX :: Linux",
    "Environment :: Console",
    "License :: OSI Approved :: Apache Software License",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.8",
    "Programming Language :: Python :: 3.9",
    "Topic :: Scientific/Engineering :: Artificial Intelligence"
]


setuptools.setup(
    name="gbe_nav",
    packages=setuptools.find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    include_package_data=True,
    package_data={"gbe_nav": ["default.log.conf"]},
    version="0.1.0",
    install_requires=REQUIREMENTS,
    tests_require=["pytest", "mock"],
    extras_require={
        "mlflow": ["mlflow"],
    },
    python_requires=">=3.8",

    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    classifiers=CLASSIFIERS,
    keywords="navigation reinforcement-learning graph",
    entry_points={'console_scripts': [
        'gbe-nav = gbe_nav.bin.gbe:main',
    ]}
)
