import json
import shutil
from pathlib import Path

from _pytest.monkeypatch import MonkeyPatch
from click.testing import CliRunner
from pytest_mock import MockerFixture

from btd import __version__
from btd.commands import cli
from btd.exceptions.estimator import DegenerateInputError
from btd.services import formats
from btd.services.tracer import seeds_from_region
from btd.settings import settings


RUN_FILES = Path(__file__).parent.parent.parent / "config" / "experiments"


def invoke(*args: object) -> tuple[int, str]:
    result = CliRunner().invoke(cli, [str(arg) for arg in args])
    return result.exit_code, result.output


def test__cli__version() -> None:
    code, output = invoke("--version")

    assert code == 0
    assert __version__ in output


def test__cli__unknown_command() -> None:
    assert invoke("frobnicate")[0] == 2


def test__schema() -> None:
    code, output = invoke("schema")

    assert code == 0
    assert json.loads(output)["title"] == "RunConfig"


def test__phantom__analytic(phantom_dir: Path) -> None:
    for name in ["mask", "seed", "target", "peaks"]:
        assert (phantom_dir / f"{name}.json").is_file()
        assert (phantom_dir / f"{name}.raw").is_file()
    assert not (phantom_dir / "dwi.json").exists()
    assert json.loads((phantom_dir / "phantom.json").read_text())["r2"] == 9
    assert len(formats.read_tractogram(phantom_dir / "truth.tsf")) > 0
    assert formats.read_volume(phantom_dir / "peaks.json").data.shape == (24, 24, 2, 3)


def test__phantom__simulated_is_reproducible(tmp_path: Path) -> None:
    args = ["phantom", "--kind", "sine", "--dims", 40, 40, 2, "--snr", 20, "--rng", 3]

    assert invoke(*args, "--out", tmp_path / "a")[0] == 0
    assert invoke(*args, "--out", tmp_path / "b")[0] == 0

    assert (tmp_path / "a" / "peaks.raw").read_bytes() == (tmp_path / "b" / "peaks.raw").read_bytes()
    assert (tmp_path / "a" / "dwi.json").is_file()
    assert (tmp_path / "a" / "quality.json").is_file()
    assert len((tmp_path / "a" / "gradients.txt").read_text().splitlines()) == 78


def test__phantom__analytic_with_noise(tmp_path: Path) -> None:
    assert invoke("phantom", "--kind", "hough", "--snr", 10, "--analytic", "--out", tmp_path)[0] == 2


def test__phantom__invalid_geometry(tmp_path: Path) -> None:
    assert invoke("phantom", "--kind", "circle", "--r1", 20, "--r2", 10, "--out", tmp_path)[0] == 2
    assert invoke("phantom", "--kind", "circle", "--r2", 40, "--out", tmp_path)[0] == 2
    assert invoke("phantom", "--kind", "spiral", "--out", tmp_path)[0] == 2


def test__fit(field_dir: Path) -> None:
    report = json.loads((field_dir / "fit.json").read_text())

    assert formats.read_field(field_dir / "field.json").order == 3
    assert report["order"] == 3
    assert report["max_divergence"] < 1e-8


def test__fit__dimension_mismatch(tmp_path: Path, phantom_dir: Path) -> None:
    other = tmp_path / "other"
    args = ["--kind", "circle", "--r1", 4, "--r2", 9, "--dims", 26, 26, 2, "--analytic", "--out", other]
    assert invoke("phantom", *args)[0] == 0

    code, _ = invoke(
        "fit", "--peaks", phantom_dir / "peaks.json", "--mask", other / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--out", tmp_path / "fit",
    )  # fmt: skip

    assert code == 3


def test__fit__reference_axis_required(tmp_path: Path, phantom_dir: Path) -> None:
    code, _ = invoke(
        "fit", "--peaks", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--sign-alignment", "reference_axis", "--out", tmp_path,
    )  # fmt: skip

    assert code == 2


def test__fit__missing_input(tmp_path: Path) -> None:
    code, _ = invoke("fit", "--peaks", tmp_path / "nope.json", "--mask", tmp_path / "nope.json", "--out", tmp_path)

    assert code == 2


def test__fit__exclude_flagged(tmp_path: Path, phantom_dir: Path) -> None:
    mask = formats.read_mask(phantom_dir / "mask.json")
    flagged = mask.data.copy()
    flagged[:, :12] = False
    formats.write_volume(tmp_path / "quality.json", flagged, mask.voxel_size)

    code, output = invoke(
        "fit", "--peaks", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--quality", tmp_path / "quality.json", "--exclude-flagged", "--order", 3, "--out",
        tmp_path / "fit",
    )  # fmt: skip

    assert code == 0, output
    report = json.loads((tmp_path / "fit" / "fit.json").read_text())
    assert report["n_excluded"] == int(flagged.sum())
    assert report["n_voxels"] == int(mask.data.sum() - flagged.sum())


def test__fit__exclude_flagged_needs_quality(tmp_path: Path, phantom_dir: Path) -> None:
    code, _ = invoke(
        "fit", "--peaks", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--exclude-flagged", "--out", tmp_path,
    )  # fmt: skip

    assert code == 2


def test__track__field(tmp_path: Path, phantom_dir: Path, field_dir: Path) -> None:
    code, output = invoke(
        "track", "--field", field_dir / "field.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--target", phantom_dir / "target.json", "--seeds", 25, "--out",
        tmp_path / "t.tsf", "--svg", tmp_path / "t.svg",
    )  # fmt: skip

    assert code == 0, output
    t = formats.read_tractogram(tmp_path / "t.tsf")
    assert t.step_size == 0.2
    assert "reached_target" in output
    assert (tmp_path / "t.svg").read_text().count("<polyline") == len(t)


def test__track__baseline(tmp_path: Path, phantom_dir: Path) -> None:
    code, output = invoke(
        "track", "--baseline", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--seeds", 10, "--max-angle", 45, "--out", tmp_path / "t.tsf",
    )  # fmt: skip

    assert code == 0, output
    assert (tmp_path / "t.tsf").read_text().startswith("#TSF1 step=0.2 count=")


def test__track__seed_count_from_phantom(tmp_path: Path, phantom_dir: Path, mocker: MockerFixture) -> None:
    spy = mocker.patch("btd.commands.track.seeds_from_region", wraps=seeds_from_region)

    code, output = invoke(
        "track", "--baseline", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--out", tmp_path / "t.tsf",
    )  # fmt: skip

    assert code == 0, output
    assert spy.call_args.args[1] == 40


def test__track__seed_count_without_phantom(tmp_path: Path, phantom_dir: Path, mocker: MockerFixture) -> None:
    spy = mocker.patch("btd.commands.track.seeds_from_region", wraps=seeds_from_region)
    for name in ["seed.json", "seed.raw"]:
        shutil.copy(phantom_dir / name, tmp_path / name)

    code, output = invoke(
        "track", "--baseline", phantom_dir / "peaks.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        tmp_path / "seed.json", "--max-steps", 5, "--out", tmp_path / "t.tsf",
    )  # fmt: skip

    assert code == 0, output
    assert spy.call_args.args[1] == 2000


def test__track__field_xor_baseline(tmp_path: Path, phantom_dir: Path, field_dir: Path) -> None:
    common = ["--mask", phantom_dir / "mask.json", "--seed-region", phantom_dir / "seed.json", "--out", tmp_path / "t"]

    assert invoke("track", *common)[0] == 2
    both = ["--field", field_dir / "field.json", "--baseline", phantom_dir / "peaks.json"]

    assert invoke("track", *both, *common)[0] == 2
    assert invoke("track", "--baseline", phantom_dir / "peaks.json", "--raw-field", *common)[0] == 2


def test__track__invalid_field_file(tmp_path: Path, phantom_dir: Path) -> None:
    (tmp_path / "field.json").write_text("{}")

    code, _ = invoke(
        "track", "--field", tmp_path / "field.json", "--mask", phantom_dir / "mask.json", "--seed-region",
        phantom_dir / "seed.json", "--out", tmp_path / "t.tsf",
    )  # fmt: skip

    assert code == 3


def test__score(tmp_path: Path, phantom_dir: Path) -> None:
    code, output = invoke(
        "score", "--tractogram", phantom_dir / "truth.tsf", "--phantom", phantom_dir, "--out", tmp_path / "s.json",
        "--out", tmp_path / "s.csv",
    )  # fmt: skip

    assert code == 0, output
    report = json.loads((tmp_path / "s.json").read_text())
    assert report["ol"] >= 0.95
    assert report["or"] == 0
    assert report["deviation"] < 1e-5
    assert (tmp_path / "s.csv").read_text().startswith("vc,ol,or,deviation")


def test__score__malformed_tractogram(tmp_path: Path, phantom_dir: Path) -> None:
    (tmp_path / "t.tsf").write_text("#TSF1 step=0.2 count=1\nstalled;1,2\n")

    assert invoke("score", "--tractogram", tmp_path / "t.tsf", "--phantom", phantom_dir)[0] == 3


def test__score__missing_phantom_spec(tmp_path: Path, phantom_dir: Path) -> None:
    assert invoke("score", "--tractogram", phantom_dir / "truth.tsf", "--phantom", tmp_path)[0] == 3


def test__experiment__dry_run(monkeypatch: MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setattr(settings, "experiments", RUN_FILES)

    code, output = invoke("experiment", "table1", "--dry-run", "--out", tmp_path / "out")

    assert code == 0
    assert output.splitlines()[0] == "hough/snr-10/order-3"
    assert f"-> {tmp_path / 'out'}" in output
    assert not (tmp_path / "out").exists()


def test__experiment__unknown_run(monkeypatch: MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setattr(settings, "experiments", tmp_path)

    assert invoke("experiment", "table9")[0] == 3


def write_small_run(path: Path) -> Path:
    run = {
        "name": "small",
        "phantoms": [{"kind": "circle", "r1": 4, "r2": 9, "dims": [24, 24, 2], "seed_count": 20}],
        "orders": [2],
        "analytic_peaks": True,
    }
    path.write_text(json.dumps(run))
    return path


def test__experiment__run(tmp_path: Path) -> None:
    code, output = invoke("experiment", write_small_run(tmp_path / "run.json"), "--out", tmp_path / "out", "--jobs", 2)

    assert code == 0, output
    assert (tmp_path / "out" / "table.csv").is_file()
    assert (tmp_path / "out" / "circle-r4-9" / "snr-inf" / "order-2" / "score.json").is_file()


def test__experiment__failed_cell(tmp_path: Path, mocker: MockerFixture) -> None:
    mocker.patch("btd.services.experiment.fit_btd", side_effect=DegenerateInputError())

    code, _ = invoke("experiment", write_small_run(tmp_path / "run.json"), "--out", tmp_path / "out")

    assert code == 4
    assert (tmp_path / "out" / "cells.json").is_file()


def test__experiment__invalid_jobs(tmp_path: Path) -> None:
    assert invoke("experiment", write_small_run(tmp_path / "run.json"), "--jobs", 0)[0] == 2
