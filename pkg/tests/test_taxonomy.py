import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specklenet.errors import ShapeError, TaxonomyError
from specklenet.model import GAP, SOFTMAX, Model, ModelSpec, conv, dense, init_model, reduced_spec
from specklenet.taxonomy import (
    TAXONOMY_ENV,
    Granularity,
    classify_with_preset,
    default_taxonomy_path,
    load_taxonomy,
    taxonomy_from_dict,
)

G = Granularity


@pytest.fixture(scope="module")
def tax():
    return load_taxonomy()


@pytest.fixture
def doc(tax):
    return copy.deepcopy(tax.to_dict())


def test_shipped_counts(tax):
    assert len(tax) == 59
    assert len(tax.families(G.NINE)) == 9
    assert len(tax.families(G.FIVE)) == 5


def test_shipped_hazard_set(tax):
    hazardous = {c.name for c in tax.classes if c.hazardous}
    for stem in ("pvc", "lexan", "abs", "carbon_fiber"):
        assert any(stem in name for name in hazardous), stem


@pytest.mark.parametrize("name", ["pvc_white", "pvc_grey"])
def test_pvc_is_hazardous_and_refused(tax, name):
    cid = tax.index_of(name)
    assert tax.classes[cid].hazardous
    assert "hazard" in tax.family_of(cid, G.NINE)
    assert tax.preset_for(cid).allowed is False


def test_every_class_maps_once(tax):
    for cid in range(59):
        assert tax.family_of(cid, G.FINE) == tax.classes[cid].name
        assert tax.family_of(cid, G.NINE) in tax.families(G.NINE)
        assert tax.family_of(cid, G.FIVE) in tax.families(G.FIVE)


def test_five_is_coarsening_of_nine(tax):
    coarsen = {}
    for c in tax.classes:
        assert coarsen.setdefault(c.family9, c.family5) == c.family5


@pytest.mark.parametrize("cid", [-1, 59])
def test_family_of_out_of_range(tax, cid):
    with pytest.raises(IndexError):
        tax.family_of(cid, G.NINE)


def test_same_family_same_preset(tax):
    by_family = {}
    for cid, c in enumerate(tax.classes):
        preset = tax.preset_for(cid)
        assert by_family.setdefault(c.family5, preset) == preset
    wood = [cid for cid, c in enumerate(tax.classes) if c.family5 == "wood"]
    assert len({tax.preset_for(cid) for cid in wood}) == 1


def test_group_map_matches_family_of(tax):
    for g in (G.NINE, G.FIVE):
        names = tax.families(g)
        assert [names[i] for i in tax.group_map(g)] == [tax.family_of(c, g) for c in range(59)]
    assert tax.group_map(G.FINE).tolist() == list(range(59))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_group_probabilities_preserve_mass(seed):
    tax = load_taxonomy()
    p = np.random.default_rng(seed).dirichlet(np.full(59, 0.3))
    for g in G:
        assert abs(tax.group_probabilities(p, g).sum() - 1) <= 1e-9


def test_group_probabilities_shape_check(tax):
    with pytest.raises(ShapeError):
        tax.group_probabilities(np.ones(58) / 58, G.FIVE)


# --- validation ---------------------------------------------------------

def test_58_classes_rejected(doc):
    doc["classes"].pop()
    with pytest.raises(TaxonomyError, match="class count"):
        taxonomy_from_dict(doc)


def test_straddling_family_rejected(doc):
    doc["classes"][0]["family5"] = "plastic"
    with pytest.raises(TaxonomyError, match="straddles"):
        taxonomy_from_dict(doc)


def test_missing_preset_rejected(doc):
    del doc["presets"]["metal"]
    with pytest.raises(TaxonomyError, match="missing preset"):
        taxonomy_from_dict(doc)


def test_duplicate_names_rejected(doc):
    doc["classes"][1]["name"] = doc["classes"][0]["name"]
    with pytest.raises(TaxonomyError, match="duplicate"):
        taxonomy_from_dict(doc)


def test_sparse_ids_rejected(doc):
    doc["classes"][3]["id"] = 99
    with pytest.raises(TaxonomyError, match="ids"):
        taxonomy_from_dict(doc)


def test_hazard_with_allowed_preset_rejected(doc):
    doc["presets"]["hazardous"]["allowed"] = True
    with pytest.raises(TaxonomyError, match="hazardous class"):
        taxonomy_from_dict(doc)


def test_family_count_rejected(doc):
    for c in doc["classes"]:
        if c["family9"] == "metal":
            c["family9"] = "paper"
            c["family5"] = "soft_goods"
    with pytest.raises(TaxonomyError, match="family count"):
        taxonomy_from_dict(doc)


def test_bad_preset_values_rejected(doc):
    doc["presets"]["wood"]["power_percent"] = 0
    with pytest.raises(TaxonomyError, match="out-of-range"):
        taxonomy_from_dict(doc)


def test_malformed_document_rejected():
    with pytest.raises(TaxonomyError, match="malformed"):
        taxonomy_from_dict({"classes": [{"id": 0}], "presets": {}})


def test_load_from_path_and_env(tmp_path, doc, monkeypatch):
    doc["version"] = "custom"
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    assert load_taxonomy(path).version == "custom"
    monkeypatch.setenv(TAXONOMY_ENV, str(path))
    assert default_taxonomy_path() == path
    assert load_taxonomy().version == "custom"


@pytest.mark.parametrize("content,match", [(None, "cannot read"), ("{nope", "invalid JSON")])
def test_load_errors(tmp_path, content, match):
    path = tmp_path / "t.json"
    if content is not None:
        path.write_text(content)
    with pytest.raises(TaxonomyError, match=match):
        load_taxonomy(path)


# --- classify_with_preset -----------------------------------------------

def _forced_model(cid, n=59, margin=5.0):
    spec = ModelSpec((conv(1, 1), GAP, dense(n), SOFTMAX), num_classes=n)
    bias = np.zeros(n)
    bias[cid] = margin
    return Model(spec, {"0.kernel": np.zeros((1, 1, 1, 1)), "0.bias": np.zeros(1),
                        "2.weights": np.zeros((1, n)), "2.bias": bias})


def test_decision_composes_lookups(tax):
    d = classify_with_preset(_forced_model(12), np.zeros((8, 8, 1)), tax)
    assert d.class_id == 12
    assert d.family9 == tax.family_of(12, G.NINE) and d.family5 == tax.family_of(12, G.FIVE)
    assert d.preset == tax.preset_for(12)
    assert d.confidence == pytest.approx(np.exp(5) / (58 + np.exp(5)))


def test_decision_hazardous_refused(tax):
    cid = tax.index_of("pvc_white")
    d = classify_with_preset(_forced_model(cid), np.zeros((8, 8, 1)), tax)
    assert d.allowed is False and d.refusal_reason == "hazardous_material"
    assert set(d.to_dict()) >= {"class", "confidence", "family9", "family5", "preset", "allowed"}


def test_decision_allowed_has_no_reason(tax):
    d = classify_with_preset(_forced_model(0), np.zeros((8, 8, 1)), tax)
    assert d.allowed and d.refusal_reason is None


def test_decision_size_mismatch(tax):
    with pytest.raises(ShapeError):
        classify_with_preset(init_model(reduced_spec(5)), np.zeros((8, 8, 1)), tax)
