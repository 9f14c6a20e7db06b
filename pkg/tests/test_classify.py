import numpy as np
import pytest

from finslerconn.classify import (
    KNOWN_CLASSES,
    MIN_SAMPLES,
    Assertion,
    classify_from_rows,
    classify_metric,
    coincidence_tests,
    point_witnesses,
    random_type_params,
    sample_points,
    theorem_suite,
)
from finslerconn.errors import DomainError
from finslerconn.metrics import make_metric


@pytest.mark.parametrize("kind", sorted(KNOWN_CLASSES))
def test_zoo_verdicts(zoo2, kind):
    result = classify_metric(zoo2[kind])
    assert result.consistent
    assert result.chain_ok
    assert result.flags() == KNOWN_CLASSES[kind]
    assert result.samples == MIN_SAMPLES


@pytest.mark.parametrize("kind", ["minkowski_quartic", "randers", "riemannian"])
def test_zoo_verdicts_in_three_dimensions(zoo3, kind):
    result = classify_metric(zoo3[kind], seed=3)
    assert result.flags() == KNOWN_CLASSES[kind]


def test_constant_randers_is_berwald():
    m = make_metric("randers", 2, b=[0.3, -0.2], b_grad=[[0.0, 0.0], [0.0, 0.0]])
    assert classify_metric(m).flags() == {"riemannian": False, "berwald": True, "landsberg": True}


def test_report_shape(zoo2):
    doc = classify_metric(zoo2["funk_disk"]).to_json()
    assert set(doc["verdicts"]) == {"riemannian", "berwald", "landsberg"}
    w = doc["verdicts"]["landsberg"]["witnesses"]
    assert set(w) == {"Adot", "P_cartan"}
    assert w["Adot"]["scaled"] <= w["Adot"]["raw"]
    assert doc["cond_max"] >= 1.0


def test_mapper_is_used_in_order(zoo2):
    m = zoo2["randers"]
    calls = []

    def mapper(fn, metrics, pts):
        pts = list(pts)
        calls.append(len(pts))
        return map(fn, metrics, pts)

    a = classify_metric(m, mapper=mapper)
    b = classify_metric(m)
    assert calls == [MIN_SAMPLES]
    assert a.to_json() == b.to_json()


def test_too_few_samples(zoo2):
    m = zoo2["randers"]
    with pytest.raises(DomainError):
        classify_metric(m, sampler=lambda: sample_points(m, MIN_SAMPLES - 1, 0))


def test_inconsistent_witnesses(zoo2):
    m = zoo2["euclidean"]
    rows = [point_witnesses(m, p) for p in sample_points(m, MIN_SAMPLES, 0)]
    rows[4] = dict(rows[4], P_shen=1.0)
    result = classify_from_rows(m, rows)
    assert result.verdicts["riemannian"].value == "inconsistent"
    assert not result.consistent
    assert result.verdicts["berwald"].value is True


def test_broken_inclusion_chain(zoo2):
    m = zoo2["euclidean"]
    rows = [point_witnesses(m, p) for p in sample_points(m, MIN_SAMPLES, 0)]
    rows = [dict(r, Adot=1.0, P_cartan=1.0) for r in rows]
    result = classify_from_rows(m, rows)
    assert result.consistent
    assert result.flags()["berwald"] is True and result.flags()["landsberg"] is False
    assert not result.chain_ok


@pytest.mark.parametrize("kind", sorted(KNOWN_CLASSES))
def test_coincidences(zoo2, kind):
    rep = coincidence_tests(zoo2[kind])
    assert rep.cross_check_ok
    cls = KNOWN_CLASSES[kind]
    # Berwald and Chern agree exactly on Landsberg metrics, Berwald and Shen on Riemannian ones
    assert rep.verdicts["berwald_equals_chern"] == cls["landsberg"]
    assert rep.verdicts["berwald_equals_shen"] == cls["riemannian"]


def test_random_type_params():
    rng = np.random.default_rng(0)
    assert random_type_params("shen", rng).kappas[0] == 0.0
    c = random_type_params("cartan", rng)
    assert c.kappas[0] == 1.0 and c.r == 1.0
    c = random_type_params("berwald", rng)
    assert c.kappas[0] == 1.0 and c.r == 0.0
    with pytest.raises(ValueError):
        random_type_params("chern", rng)


def test_theorem_suite(zoo2):
    ledger = theorem_suite(zoo2, KNOWN_CLASSES)
    failed = [a.to_json() for a in ledger if not a.passed]
    assert not failed
    assert len(ledger) == 3 * 2 * len(zoo2) + 2 * len(zoo2)
    assert {a.relation for a in ledger} == {"<", ">"}


def test_theorem_suite_catches_wrong_classes(zoo2):
    wrong = dict(KNOWN_CLASSES, funk_disk={"riemannian": False, "berwald": False, "landsberg": True})
    ledger = theorem_suite({"funk_disk": zoo2["funk_disk"]}, wrong, draws=1)
    assert any(not a.passed for a in ledger if a.name.startswith("cartan-type"))


def test_assertion_relation():
    assert Assertion("x", "m", "p", 1e-9, 1e-6, "<").passed
    assert not Assertion("x", "m", "p", 1e-7, 1e-5, ">").passed
