import numpy as np
import pytest

from tactilebench import geometry as g


@pytest.fixture
def unit_sphere():
    return g.make_object("ball", [g.sphere(1.0)])


@pytest.fixture
def unit_box():
    return g.make_object("cube", [g.box(1.0, 1.0, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def at(x, y, z):
    return g.RigidTransform.from_translation((x, y, z))


@pytest.fixture(scope="session")
def train_objects():
    from tactilebench import config
    return config.object_set(config.load_config(), "train")


@pytest.fixture(scope="session")
def small_ds(train_objects):
    from tactilebench import dataset
    return dataset.generate_dataset(train_objects, 60, seed=3)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
