import textwrap

import pytest

from qcfdt.config import ConfigError, build_run_config, load_config, parse_value, read_config


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


@pytest.mark.parametrize(
    "text, value",
    [
        ("12", 12),
        ("0.25", 0.25),
        ("1e-3", 1e-3),
        ("true", True),
        ("Off", False),
        ("odd", "odd"),
        ("0.05, 0.1", [0.05, 0.1]),
        ("odd, sym", ["odd", "sym"]),
        ("10,", [10]),
    ],
)
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_read_minimal(tmp_path):
    path = write(tmp_path, """
        # comment
        [model]
        kind = rmt_fdt   ; trailing comment
        N = 40
        g = 0.1
    """)
    sections = read_config(path)
    assert sections == {"model": {"kind": "rmt_fdt", "N": 40, "g": 0.1}}


def test_keys_are_case_sensitive(tmp_path):
    path = write(tmp_path, """
        [model]
        kind = generalized_fdt_bx
        N = 6
        B_z_S = 0.8
    """)
    cfg = load_config(path, threads=1)
    assert cfg.spec.model["B_z_S"] == 0.8


@pytest.mark.parametrize(
    "body, message",
    [
        ("[ensemble]\nseed = 1\n", "missing required section [model]"),
        ("[model]\nkind = rmt_fdt\nN = 4\ng = 0.1\n[extra]\nx = 1\n", "unknown section"),
        ("[model]\nkind = rmt_fdt\nN = 4\ng = 0.1\n[ensemble]\nseeds = 1\n", "seeds"),
        ("[model]\nkind = rmt_fdt\nN = 4\ng = 0.1\nfoo = 2\n", "foo"),
        ("[model]\nkind = rmt_fdt\nN = 4\n", "g"),
        ("[model]\nN = 4\n", "kind"),
        ("[model]\nkind = nonsense\n", "nonsense"),
        ("[model]\nkind = rmt_fdt\nN = 4\ng = 0.1\n[analysis]\nwindow = 3\n", "window"),
        ("[model]\nkind = rmt_fdt\nN = 4\ng = 0.1\n[ensemble]\nn_realizations = 0\n", "positive"),
        ("[model\nkind = x\n", "cannot parse"),
    ],
)
def test_invalid_configs(tmp_path, body, message):
    path = write(tmp_path, body)
    with pytest.raises(ConfigError) as info:
        load_config(path, threads=1)
    assert message in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config(tmp_path / "nope.ini")


def test_overrides(tmp_path):
    sections = {
        "model": {"kind": "rmt_fdt", "N": 40, "g": 0.1},
        "ensemble": {"seed": 3},
        "analysis": {"window": [5, 40]},
        "output": {"out_dir": "a", "use_cache": True},
        "budget": {"memory_gb": 2.0, "threads": 2},
    }
    cfg = build_run_config(sections, seed=9, out_dir="b", cache_dir=tmp_path)
    assert cfg.spec.ensemble.seed == 9
    assert cfg.spec.analysis.window == (5.0, 40.0)
    assert cfg.out_dir == "b"
    assert cfg.spec.budget_gb == 2.0
    assert cfg.spec.threads == 2
    assert cfg.spec.cache_dir == str(tmp_path)
    assert sections["model"]["kind"] == "rmt_fdt"


def test_shipped_configs_validate():
    from pathlib import Path

    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))
    assert len(configs) >= 6
    for path in configs:
        load_config(path, threads=1)


def test_config_hash_ignores_runtime_settings(tmp_path):
    sections = {"model": {"kind": "rmt_fdt", "N": 40, "g": 0.1}}
    a = build_run_config(sections, threads=1).spec.config_hash()
    b = build_run_config(sections, threads=4, out_dir="x").spec.config_hash()
    c = build_run_config(sections, seed=5).spec.config_hash()
    assert a == b != c
