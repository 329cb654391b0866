import pytest

from sqlvs.errors import ParameterError
from sqlvs.profiles import (
    BUILTIN_PROFILES,
    GB,
    NVLINK_C2C,
    PCIE5,
    UNIFIED,
    get_profile,
    load_profile,
    parse_profile,
    profile_to_text,
)


def test_builtin_lookup():
    assert get_profile("pcie5") is PCIE5
    assert get_profile("nvlink-c2c") is NVLINK_C2C
    assert get_profile("unified") is UNIFIED
    with pytest.raises(ParameterError):
        get_profile("tpu")


def test_builtin_invariants():
    for p in BUILTIN_PROFILES.values():
        assert p.bw_pinned >= p.bw_pageable > 0
        assert p.per_call_setup >= 0
        assert p.gpu_topk_cap == 2048


def test_pcie_has_no_coherent_reads():
    assert not PCIE5.coherent_host_reads
    assert NVLINK_C2C.coherent_host_reads
    assert UNIFIED.unified


@pytest.mark.parametrize("profile", list(BUILTIN_PROFILES.values()),
                         ids=lambda p: p.name)
def test_text_round_trip(profile, tmp_path):
    text = profile_to_text(profile)
    path = tmp_path / f"{profile.name}.profile"
    path.write_text(text)
    back = load_profile(path)
    assert back.name == profile.name
    assert back.bw_pageable == pytest.approx(profile.bw_pageable)
    assert back.per_call_setup == pytest.approx(profile.per_call_setup, rel=1e-6)
    assert back.structure_call_setup == pytest.approx(profile.structure_call_setup, rel=1e-6)
    assert back.transform_cost.keys() == profile.transform_cost.keys()
    assert back.speedups == profile.speedups
    assert back.unified == profile.unified
    assert back.coherent_host_reads == profile.coherent_host_reads
    assert back.device_capacity == profile.device_capacity


def test_parse_errors():
    with pytest.raises(ParameterError):
        parse_profile("bw_pageable_gbps = 10\n")  # missing name
    with pytest.raises(ParameterError):
        parse_profile("name = x\nwhatever_key = 3\n")
    with pytest.raises(ParameterError):
        parse_profile("name = x\nunified = maybe\n")


def test_comments_and_blank_lines():
    text = """
# hand-tuned lab box
name = labbox
bw_pageable_gbps = 10   # slow link
bw_pinned_gbps = 20
unified = false
coherent_host_reads = false
"""
    p = parse_profile(text)
    assert p.name == "labbox"
    assert p.bw_pageable == 10 * GB
    assert p.speedup("rel") == 1.0  # default multiplier is host speed
