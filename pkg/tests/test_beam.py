import random

import numpy as np

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamstrike.beam import (
    AttackConfig,
    AttackOutcome,
    ConfigInvalid,
    EmptySuccessSet,
    ExpansionPolicy,
    attack,
    select_final,
)
from beamstrike.candidates import CandidateProvider, ProviderFailure, TableProvider
from beamstrike.importance import ImportanceMethod
from beamstrike.similarity import TokenF1Similarity
from beamstrike.text_core import EditKind, apply_edits, tokenize
from beamstrike.victims import ConstantVictim, KeywordRuleVictim, LinearBagVictim, QueryLedger, Victim
from instances import random_instance

SIM = TokenF1Similarity()


def _cfg(**kw):
    base = dict(beam_size_k=3, branching_b=2, hypothesis_count_h=2, max_queries=10_000)
    base.update(kw)
    return AttackConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        AttackConfig(beam_size_k=0).validate()
    with pytest.raises(ConfigInvalid):
        AttackConfig(branching_b=-1).validate()
    with pytest.raises(ConfigInvalid):
        AttackConfig(hypothesis_count_h=0).validate()
    with pytest.raises(ConfigInvalid):
        AttackConfig(max_depth=0).validate()
    with pytest.raises(ConfigInvalid, match="k x"):
        AttackConfig(beam_size_k=10, branching_b=10, max_queries=119).validate()
    AttackConfig(beam_size_k=10, branching_b=10, max_queries=120).validate()
    assert AttackConfig(importance_method="LIME").to_dict()["importance_method"] == "LIME"


def test_simple_flip_by_substitution():
    doc = tokenize("the food was terrible", id="t", gold_label=1)
    victim = KeywordRuleVictim(["terrible"])
    provider = TableProvider({"terrible": ["great"]})
    out = attack(doc, victim, provider, SIM, _cfg(hypothesis_count_h=1))
    assert out.success and out.stop_reason == "hypotheses"
    assert out.adversarial_text in {"the food was great", "the food was"}
    assert out.modifications == 1
    assert apply_edits(doc, out.chosen_edits) == out.adversarial_text
    assert victim.predict([out.adversarial_text])[0] == 0


def test_already_misclassified_is_trivial_success():
    doc = tokenize("fine words", gold_label=1)
    ledger = QueryLedger()
    out = attack(doc, KeywordRuleVictim(["bad"]), TableProvider({}), SIM, _cfg(), ledger)
    assert out.success and out.stop_reason == "already_misclassified"
    assert out.chosen_edits == [] and out.adversarial_text == doc.raw_text
    assert ledger.total_queries == len(doc) + 1


def test_query_accounting_fixed_order_k1_b1():
    doc = tokenize("a b c d e", gold_label=1)
    for depth in (1, 3, 5):
        ledger = QueryLedger()
        out = attack(doc, ConstantVictim(), TableProvider({}, fallback=["z"]), SIM,
                     _cfg(beam_size_k=1, branching_b=1, max_depth=depth), ledger)
        assert not out.success and out.stop_reason == "max_depth"
        assert ledger.total_queries == (len(doc) + 1) + 3 * depth
        assert out.queries["per_phase"] == {"expansion": 3 * depth, "importance": len(doc) + 1}
        assert [t["children"] for t in out.trace] == [3] * depth


def test_budget_truncates_and_stops():
    doc = tokenize("a b c d e f", gold_label=1)
    ledger = QueryLedger()
    out = attack(doc, ConstantVictim(), TableProvider({}, fallback=["x", "y"]), SIM,
                 _cfg(beam_size_k=2, branching_b=2, max_queries=20), ledger)
    assert out.stop_reason == "budget"
    assert ledger.total_queries == 20


def test_empty_candidates_still_delete_and_skip():
    doc = tokenize("bad day", gold_label=1)
    out = attack(doc, KeywordRuleVictim(["bad"]), TableProvider({}), SIM, _cfg(branching_b=0, hypothesis_count_h=1))
    assert out.success
    assert [e.kind for e in out.chosen_edits if e.is_modification] == [EditKind.DELETE]


def test_provider_failure_is_counted_not_fatal():
    class Down(CandidateProvider):
        def top_candidates(self, *_):
            raise ProviderFailure("offline")

    doc = tokenize("bad day", gold_label=1)
    out = attack(doc, KeywordRuleVictim(["bad"]), Down(), SIM, _cfg(hypothesis_count_h=1))
    assert out.success and out.provider_failures >= 1 and out.error is None


def test_victim_failure_yields_error_outcome():
    class Flaky(Victim):
        def __init__(self):
            self.calls = 0

        def predict_proba(self, texts):
            self.calls += 1
            if self.calls > 1:
                raise RuntimeError("gone")
            return ConstantVictim().predict_proba(texts)

    ledger = QueryLedger()
    out = attack(tokenize("a b", gold_label=1), Flaky(), TableProvider({}), SIM, _cfg(), ledger)
    assert not out.success and out.stop_reason == "error"
    assert "VictimUnavailable" in out.error and "gone" in out.error
    assert out.queries["total"] == 3


def test_no_success_when_victim_is_constant():
    out = attack(tokenize("x y z", gold_label=1), ConstantVictim(), TableProvider({}, ["q"]), SIM, _cfg())
    assert not out.success and out.hypotheses == [] and out.adversarial_text == "x y z"
    assert out.stop_reason == "max_depth" and out.depth_reached == 3


def test_selection_prefers_similarity_then_lower_prob():
    assert select_final([("a b", 0.4), ("a c d", 0.1)], "a b c", SIM) == "a b"
    assert select_final([("a x", 0.3), ("a y", 0.2)], "a b", SIM) == "a y"
    assert select_final([("a y", 0.2), ("a x", 0.2)], "a b", SIM) == "a x"
    with pytest.raises(EmptySuccessSet):
        select_final([], "a", SIM)


def test_outcome_round_trip_and_timing_excluded():
    doc = tokenize("the awful plot", gold_label=1)
    out = attack(doc, KeywordRuleVictim(["awful"]), TableProvider({}, ["good"]), SIM, _cfg())
    d = out.to_dict()
    assert "wall_time_s" not in d and "wall_time_s" in out.to_dict(include_timing=True)
    again = AttackOutcome.from_dict(d)
    assert again.to_dict() == d


def test_hypotheses_are_distinct_and_misclassified():
    doc = tokenize("bad bad movie", gold_label=1)
    victim = KeywordRuleVictim(["bad"])
    out = attack(doc, victim, TableProvider({}, ["ok", "fine"]), SIM, _cfg(beam_size_k=20, hypothesis_count_h=50))
    texts = [h.text for h in out.hypotheses]
    assert len(texts) == len(set(texts)) > 1
    assert all(victim.predict([t])[0] == 0 for t in texts)
    for h in out.hypotheses:
        assert apply_edits(doc, h.edits) == h.text


def test_lime_ranking_drives_search():
    doc = tokenize("one two bad three", gold_label=1)
    out = attack(doc, KeywordRuleVictim(["bad"]), TableProvider({}, ["ok"]), SIM,
                 _cfg(importance_method=ImportanceMethod.LIME, beam_size_k=1, hypothesis_count_h=1))
    assert out.importance["method"] == "LIME"
    assert out.importance["order"][0] == 2
    assert out.success and out.depth_reached == 1


@pytest.mark.parametrize("seed", range(15))
def test_free_order_full_lattice_matches_oracle(seed):
    inst = random_instance(random.Random(seed), max_tokens=4, max_cands=2)
    ok, best = inst.oracle()
    out = inst.run(expansion_policy=ExpansionPolicy.FREE_ORDER, beam_size_k=10**6)
    assert out.success == ok
    assert min((h.modifications for h in out.hypotheses), default=None) == best


def test_free_order_reaches_low_ranked_positions_early():
    # only the lowest-ranked word has a flipping substitute
    doc = tokenize("aa bb cc", gold_label=1)
    victim = LinearBagVictim({"aa": 1.0, "bb": 0.875, "cc": 0.125, "neg": -3.0})
    provider = TableProvider({"cc": ["neg"]})
    kw = dict(beam_size_k=1, branching_b=1, hypothesis_count_h=1)
    fixed = attack(doc, victim, provider, SIM, _cfg(**kw))
    free = attack(doc, victim, provider, SIM, _cfg(expansion_policy=ExpansionPolicy.FREE_ORDER, **kw))
    assert fixed.importance["order"] == [0, 1, 2]
    assert fixed.success and fixed.depth_reached == 3
    assert free.success and free.depth_reached == 1
    assert free.adversarial_text == "aa bb neg"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_fixed_order_full_lattice_matches_oracle_property(seed):
    inst = random_instance(random.Random(seed), max_tokens=4, max_cands=3)
    ok, best = inst.oracle()
    out = inst.run()
    assert out.success == ok
    assert min((h.modifications for h in out.hypotheses), default=None) == best
    assert out.queries["total"] <= len(inst.words) + 1 + sum((inst.b + 2) ** d for d in range(1, len(inst.words) + 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_success_monotone_in_k(seed, k):
    inst = random_instance(random.Random(seed), max_tokens=5, max_cands=3)
    small = inst.run(beam_size_k=k, hypothesis_count_h=1)
    large = inst.run(beam_size_k=k + 3, hypothesis_count_h=1)
    assert large.success >= small.success


def test_ledger_total_matches_outcome():
    inst = random_instance(random.Random(5))
    ledger = QueryLedger()
    out = attack(inst.doc(), inst.victim(), inst.provider(), SIM, _cfg(beam_size_k=4, branching_b=inst.b), ledger)
    assert out.queries["total"] == ledger.total_queries


class LookupVictim(Victim):
    def __init__(self, table, default=0.9):
        self.table, self.default = table, default

    def predict_proba(self, texts):
        p1 = np.array([self.table.get(t, self.default) for t in texts])
        return np.stack([1 - p1, p1], axis=1)


def test_wider_beam_escapes_greedy_trap():
    # the greedy best child "a1 b" leads nowhere; the runner-up "b" flips after one more edit
    victim = LookupVictim({"a b": 0.9, "a1 b": 0.6, "b": 0.7, "a1 b1": 0.55, "a1": 0.58, "b1": 0.2,
                           "[MASK] b": 0.8, "a [MASK]": 0.85})
    doc = tokenize("a b", gold_label=1)
    provider = TableProvider({"a": ["a1"], "b": ["b1"]})
    narrow = attack(doc, victim, provider, SIM, _cfg(beam_size_k=1, branching_b=1, hypothesis_count_h=1))
    wide = attack(doc, victim, provider, SIM, _cfg(beam_size_k=2, branching_b=1, hypothesis_count_h=1))
    assert not narrow.success
    assert wide.success and wide.adversarial_text == "b1"
