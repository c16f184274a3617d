#!/usr/bin/env python
from setuptools import setup, find_packages

setup(
    name = "keyword_ctr",
    version = "0.1.0",

    description = "Graph-enhanced, query-fused click-through-rate prediction for keyword paper recommendation",

    packages = find_packages(exclude=["tests"]),
    python_requires = ">=3.9",

    install_requires = [
        "click",
        "pytoml",
        "numpy",
        "scipy",
        "sphinx",
    ],

    extras_require = {
        "test": ["pytest"],
    },

    entry_points = {
        "console_scripts": [
            "kctr = keyword_ctr.entrypoints.cli:main",
            "kctr_generate_data = keyword_ctr.entrypoints.generate_data:main",
            "kctr_build_graph = keyword_ctr.entrypoints.build_graph:main",
            "kctr_train = keyword_ctr.entrypoints.train:main",
            "kctr_evaluate = keyword_ctr.entrypoints.evaluate:main",
            "kctr_scenario_test = keyword_ctr.entrypoints.scenario_test:main",
            "kctr_bench = keyword_ctr.entrypoints.bench:main",
            "kctr_ablation = keyword_ctr.entrypoints.ablation:main",
        ],
    },

    package_data = {
        "keyword_ctr": ["data/*.toml", "data/*.txt"],
    },
)
