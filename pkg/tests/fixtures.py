from pathlib import Path

import pytest
from click.testing import CliRunner

from btd.commands import cli
from btd.schemas.phantom import PhantomSpec
from btd.services.phantom import Phantom, make_phantom


@pytest.fixture(scope="session")
def circle_phantom() -> Phantom:
    return make_phantom(PhantomSpec(kind="circle"))


@pytest.fixture(scope="session")
def sine_phantom() -> Phantom:
    return make_phantom(PhantomSpec(kind="sine", alpha=0.3))


@pytest.fixture(scope="session")
def hough_phantom() -> Phantom:
    return make_phantom(PhantomSpec(kind="hough"))


@pytest.fixture(scope="session")
def phantom_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Small analytic circle phantom written by the phantom command."""

    out = tmp_path_factory.mktemp("phantom")
    args = ["--kind", "circle", "--r1", "4", "--r2", "9", "--dims", "24", "24", "2", "--seeds", "40", "--analytic"]
    result = CliRunner().invoke(cli, ["phantom", *args, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="session")
def field_dir(tmp_path_factory: pytest.TempPathFactory, phantom_dir: Path) -> Path:
    out = tmp_path_factory.mktemp("fit")
    args = ["--peaks", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json"]
    args += ["--seed-region", phantom_dir / "seed.json", "--order", "3", "--out", out]
    result = CliRunner().invoke(cli, ["fit", *map(str, args)])
    assert result.exit_code == 0, result.output
    return out
