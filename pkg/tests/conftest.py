import pytest

from mv_reinsure.config import builtin_config_path, load_config


@pytest.fixture(scope="session")
def ex1():
    return load_config(builtin_config_path("example1"))


@pytest.fixture(scope="session")
def ex2():
    return load_config(builtin_config_path("example2"))
