import pytest

from acta.errors import ScenarioInvalid
from acta.scenario import (
    Exclusion,
    ParticipantProfile,
    load_scenario,
    validate_profile,
)

from .conftest import scenario_yaml


def profile(age=72, mci=True, entry=True, exclusions=()):
    return ParticipantProfile(
        id="p", age_years=age, mci_diagnosed=mci, informatics_entry_level=entry,
        exclusions=frozenset(exclusions),
    )


# ------------------------------------------------------------- eligibility

ELIGIBILITY_TABLE = [
    # (profile kwargs, eligible, reason fragment)
    (dict(age=70), True, None),
    (dict(age=65), True, None),
    (dict(age=85), True, None),
    (dict(age=64), False, "age 64"),
    (dict(age=86), False, "age 86"),
    (dict(mci=False), False, "MCI"),
    (dict(entry=False), False, "informatics"),
    (dict(exclusions=[Exclusion.SEVERE_PSYCHIATRIC]), False, "severe_psychiatric"),
    (dict(exclusions=[Exclusion.CONTINUOUS_MEDICAL_ASSISTANCE]), False, "continuous_medical"),
    (dict(exclusions=[Exclusion.NOT_INDEPENDENT_DAILY]), False, "not_independent"),
    (dict(exclusions=[Exclusion.MOTOR_IMPAIRMENT]), False, "motor_impairment"),
    (dict(age=64, mci=False, exclusions=[Exclusion.MOTOR_IMPAIRMENT]), False, "age 64"),
]


@pytest.mark.parametrize("kwargs,eligible,fragment", ELIGIBILITY_TABLE)
def test_eligibility_table(kwargs, eligible, fragment):
    result = validate_profile(profile(**kwargs))
    assert result.eligible == eligible
    if fragment:
        assert any(fragment in r for r in result.reasons), result.reasons
    if eligible:
        assert result.reasons == ()


def test_eligibility_lists_all_violations():
    result = validate_profile(
        profile(age=90, mci=False, entry=False,
                exclusions=[Exclusion.MOTOR_IMPAIRMENT, Exclusion.SEVERE_PSYCHIATRIC])
    )
    assert len(result.reasons) == 5


# ------------------------------------------------------------- schema

def test_scenario_parses():
    sc = load_scenario(scenario_yaml())
    assert sc.n_sessions == 2
    assert len(sc.path.landmarks) == 3
    assert sc.seeds()["walker"] == 11
    assert sc.content_hash


def test_scenario_rejects_unknown_top_key():
    with pytest.raises(ScenarioInvalid, match="unknown keys"):
        load_scenario(scenario_yaml() + "\nbogus_key: 1\n")


def test_scenario_rejects_unknown_nested_key():
    text = scenario_yaml().replace("walker:\n  speed_mps:", "walker:\n  warp_factor: 9\n  speed_mps:")
    with pytest.raises(ScenarioInvalid, match="warp_factor"):
        load_scenario(text)


def test_scenario_rejects_bad_version():
    with pytest.raises(ScenarioInvalid, match="version"):
        load_scenario(scenario_yaml().replace("version: 1", "version: 99"))


def test_scenario_rejects_missing_seeds():
    text = scenario_yaml().replace("metrics: 77}", "}").replace(", metrics:", "")
    with pytest.raises(ScenarioInvalid):
        load_scenario(text)


def test_scenario_rejects_ineligible_participant():
    with pytest.raises(ScenarioInvalid, match="ineligible"):
        load_scenario(scenario_yaml().replace("age_years: 72", "age_years: 50"))


def test_scenario_rejects_bad_phase():
    with pytest.raises(ScenarioInvalid, match="phase"):
        load_scenario(scenario_yaml().replace("phase: phase1", "phase: phase9"))


def test_scenario_rejects_overlapping_places():
    text = scenario_yaml(non_relevant=(41.0,), nr_radius_m=10.0)
    with pytest.raises(ScenarioInvalid, match="overlap"):
        load_scenario(text)


def test_scenario_hash_stable_and_sensitive():
    a = load_scenario(scenario_yaml()).content_hash
    b = load_scenario(scenario_yaml()).content_hash
    c = load_scenario(scenario_yaml(speed=1.6)).content_hash
    assert a == b != c


def test_unknown_seed_set_rejected():
    sc = load_scenario(scenario_yaml())
    with pytest.raises(ScenarioInvalid):
        sc.seeds("nope")
