"""Acceptance criteria 1-9, each reported as a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines appear in
the "acceptance criteria" section of the terminal summary.
"""

import json
import random
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from beamstrike.analysis import PENN_TO_UPOS, UPOS_TAGS, PosMapping, TransitionMatrix, is_qualifying, map_to_upos, pos_diff
from beamstrike.beam import AttackConfig, AttackOutcome, attack
from beamstrike.candidates import TableProvider
from beamstrike.cli import main as cli_main
from beamstrike.evaluation import character_score, evaluate_sample
from beamstrike.importance import LimeConfig, lime_importance, logit_importance
from beamstrike.similarity import TokenF1Similarity
from beamstrike.stubs import StubBackend, serve_http
from beamstrike.text_core import Edit, EditKind, tokenize
from beamstrike.victims import ConstantVictim, KeywordRuleVictim, LinearBagVictim, QueryLedger
from conftest import ACCEPTANCE_LINES, TOY_SAMPLES, write_jsonl
from instances import random_instance
from oracles import levenshtein_recursive, spearman_exact

pytestmark = pytest.mark.acceptance
DATA = Path(__file__).parent / "data"


@contextmanager
def criterion(number: int, title: str, budget_s: float):
    """Time the block, record one PASS/FAIL line, re-raise any failure."""
    started = time.perf_counter()
    detail = {"text": ""}
    try:
        yield detail
        elapsed = time.perf_counter() - started
        assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - started
        ACCEPTANCE_LINES.append((number, f"FAIL  {number}. {title} ({elapsed:.2f}s): {exc}".splitlines()[0]))
        raise
    ACCEPTANCE_LINES.append((number, f"PASS  {number}. {title} ({elapsed:.2f}s) {detail['text']}".rstrip()))


class FixedSimilarity:
    def __init__(self, value):
        self.value = value

    def score(self, original, modified):
        return self.value

    def describe(self):
        return {"type": "fixed", "value": self.value}


def test_criterion_1_bodega_composition():
    with criterion(1, "BODEGA = confusion x semantic x character", 1.0) as d:
        # 100-character text; one substituted character gives character score 0.99
        original = "the report says " + "x" * 77 + " cat ok"
        adversarial = original.replace(" cat ", " bat ")
        assert len(original) == 100 and character_score(original, adversarial) == pytest.approx(0.99, abs=1e-15)
        doc = tokenize(original, id="c1", gold_label=1)
        victim = KeywordRuleVictim(["cat"])
        edits = [Edit(len(doc) - 2, EditKind.SUBSTITUTE, "bat")]
        outcome = AttackOutcome("c1", True, original, adversarial, 1, edits, [], {"total": 0})
        rec = evaluate_sample(doc, outcome, victim, FixedSimilarity(0.91))
        assert (rec.confusion, rec.semantic) == (1, 0.91)
        assert abs(rec.bodega - 0.9009) <= 1e-12 and round(rec.bodega, 2) == 0.90

        sim = TokenF1Similarity()
        products = 0
        for s in TOY_SAMPLES:
            doc = tokenize(s["text"], id=s["id"], gold_label=s["label"])
            kw = KeywordRuleVictim(["terrible", "awful"])
            out = attack(doc, kw, TableProvider({}, ["fine"]), sim, AttackConfig(beam_size_k=4, branching_b=1))
            r = evaluate_sample(doc, out, kw, sim)
            assert abs(r.bodega - r.confusion * r.semantic * r.character) <= 1e-15
            products += 1
        d["text"] = f"1.00 x 0.91 x 0.99 = {rec.bodega:.4f}; {products} attacked samples exact"


def test_criterion_2_brute_force_equivalence():
    with criterion(2, "full-lattice beam matches exhaustive enumeration", 30.0) as d:
        rng = random.Random(20240)
        successes = 0
        for i in range(50):
            inst = random_instance(rng, max_tokens=6, max_cands=4)
            ok, best = inst.oracle()
            out = inst.run()
            got = min((h.modifications for h in out.hypotheses), default=None)
            assert out.success == ok, f"instance {i}: success {out.success} vs oracle {ok}"
            assert got == best, f"instance {i}: min edits {got} vs oracle {best}"
            successes += ok
        d["text"] = f"50/50 instances agree ({successes} attackable)"


def test_criterion_3_importance_correctness():
    with criterion(3, "logit order exact; LIME Spearman >= 0.9", 60.0) as d:
        rng = np.random.default_rng(33)
        for i in range(100):
            n = int(rng.integers(2, 9))
            magnitudes = rng.choice(np.arange(1, 65), size=n, replace=False) / 16
            gold = int(rng.integers(0, 2))
            coefs = magnitudes if gold == 1 else -magnitudes
            words = [f"t{j}" for j in range(n)]
            doc = tokenize(" ".join(words), id=str(i), gold_label=gold)
            r = logit_importance(doc, LinearBagVictim(dict(zip(words, coefs))), QueryLedger())
            expected = sorted(range(n), key=lambda j: -magnitudes[j])
            assert r.order == expected, f"victim {i}: {r.order} != {expected}"

        worst, worst_scipy = 1, 1.0
        for i in range(20):
            coefs = rng.uniform(-2, 2, size=5)
            gold = int(rng.integers(0, 2))
            words = [f"u{j}" for j in range(5)]
            doc = tokenize(" ".join(words), id=f"l{i}", gold_label=gold)
            ledger = QueryLedger()
            r = lime_importance(doc, LinearBagVictim(dict(zip(words, coefs))),
                                LimeConfig(num_samples=500, rng_seed=0), ledger)
            truth = coefs if gold == 1 else -coefs
            rho = spearman_exact(r.scores, truth)
            assert ledger.total_queries == 500
            assert rho >= Fraction(9, 10), f"LIME victim {i}: rho {float(rho):.3f}"
            worst = min(worst, rho)
            worst_scipy = min(worst_scipy, spearmanr(r.scores, truth).statistic)
        assert abs(float(worst) - worst_scipy) < 1e-9
        d["text"] = f"100/100 logit orders exact; min LIME rho {float(worst):.3f} over 20 victims"


def test_criterion_4_query_accounting():
    with criterion(4, "ledger = (n+1) + 3d for FIXED_ORDER, k=1, b=1", 1.0) as d:
        checked = 0
        for n in (1, 3, 6, 9):
            doc = tokenize(" ".join(f"w{i}" for i in range(n)), gold_label=1)
            for depth in range(1, n + 1):
                ledger = QueryLedger()
                out = attack(doc, ConstantVictim(), TableProvider({}, ["z"]), TokenF1Similarity(),
                             AttackConfig(beam_size_k=1, branching_b=1, max_depth=depth), ledger)
                assert out.depth_reached == depth
                assert ledger.total_queries == (n + 1) + 3 * depth
                assert out.queries["total"] == ledger.total_queries
                checked += 1
        d["text"] = f"{checked} (n, d) pairs exact"


def test_criterion_5_character_score():
    with criterion(5, "character score vs independent DP oracle", 5.0) as d:
        rng = random.Random(55)
        alphabet = "abcdeé xyz,.漢"
        for _ in range(1000):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            longest = max(len(a), len(b))
            expected = 1.0 if longest == 0 else 1.0 - levenshtein_recursive(a, b) / longest
            assert character_score(a, b) == expected, (a, b)
        d["text"] = "1000/1000 pairs exact"


def test_criterion_6_monotone_k():
    with criterion(6, "success rate non-decreasing in k", 60.0) as d:
        rng = random.Random(20240)
        instances = [random_instance(rng, max_tokens=6, max_cands=4) for _ in range(50)]
        rates = {}
        for h in (1, 3):
            previous = -1.0
            for k in (1, 2, 4, 8, 16):
                rate = np.mean([inst.run(beam_size_k=k, hypothesis_count_h=h).success for inst in instances])
                assert rate >= previous, f"h={h}: success fell to {rate} at k={k}"
                previous = rate
                rates[(h, k)] = rate
        d["text"] = "h=1: " + ", ".join(f"k={k}:{rates[(1, k)]:.2f}" for k in (1, 2, 4, 8, 16))


def test_criterion_7_pos_pipeline():
    with criterion(7, "POS mapping, length filter, matrix conservation", 1.0) as d:
        mapping = PosMapping()
        mapped = map_to_upos(list(PENN_TO_UPOS), mapping)
        assert len(PENN_TO_UPOS) >= 49 and mapping.warnings == 0 and set(mapped) <= set(UPOS_TAGS)

        fixture = json.loads((DATA / "tagging_outliers.json").read_text())["url_to_period"]
        orig, adv = map_to_upos(fixture["original"], mapping), map_to_upos(fixture["adversarial"], mapping)
        diff = pos_diff(orig, adv)
        assert mapping.warnings == 0
        assert not diff.length_preserved and not is_qualifying(1, diff)

        rng = random.Random(7)
        matrix, expected, seen = TransitionMatrix(), 0, 0
        for _ in range(300):
            tags = [rng.choice(UPOS_TAGS) for _ in range(rng.randint(1, 8))]
            edited = list(tags)
            kind = rng.choice(["one", "none", "two", "length"])
            if kind == "one":
                i = rng.randrange(len(tags))
                edited[i] = rng.choice([t for t in UPOS_TAGS if t != tags[i]])
            elif kind == "two" and len(tags) > 1:
                for i in rng.sample(range(len(tags)), 2):
                    edited[i] = rng.choice([t for t in UPOS_TAGS if t != tags[i]])
            elif kind == "length":
                edited.append("PUNCT")
            seen += 1
            if is_qualifying(1, pos_diff(tags, edited)):
                matrix.add(tags, edited)
            expected += kind == "one"
        assert matrix.total == expected == int(matrix.as_array().sum())
        d["text"] = f"{len(PENN_TO_UPOS)} tags mapped; 80->75 fixture excluded; {expected}/{seen} kept"


def test_criterion_8_end_to_end_determinism(tmp_path):
    with criterion(8, "identical runs give byte-identical outcomes.jsonl", 30.0) as d:
        dataset = write_jsonl(tmp_path / "d.jsonl", TOY_SAMPLES)
        config = tmp_path / "c.ini"
        config.write_text("[attack]\nk = 3\nb = 2\nh = 2\nimportance = lime\nseed = 5\n"
                          "[lime]\nnum_samples = 60\n"
                          "[victim]\ntype = linear_bag\ncoefficients = terrible:2, awful:1.5, plot:0.25, the:0.125\n"
                          "bias = -0.5\n[provider]\ntype = table\nfallback = fine, good, nice\n")
        for out in ("r1", "r2"):
            assert cli_main(["attack", "--config", str(config), "--dataset", str(dataset),
                             "--out", str(tmp_path / out), "--seed", "11"]) == 0
        first = (tmp_path / "r1" / "outcomes.jsonl").read_bytes()
        second = (tmp_path / "r2" / "outcomes.jsonl").read_bytes()
        assert first == second and first.count(b"\n") == len(TOY_SAMPLES)
        d["text"] = f"{len(first)} bytes identical"


def test_criterion_9_degradation(tmp_path, dead_url):
    with criterion(9, "unreachable endpoints degrade to failure outcomes", 10.0) as d:
        dataset = write_jsonl(tmp_path / "d.jsonl", TOY_SAMPLES)

        def run(name, body):
            cfg = tmp_path / f"{name}.ini"
            cfg.write_text("[attack]\nk = 4\nb = 2\nh = 2\n" + body)
            status = cli_main(["attack", "--config", str(cfg), "--dataset", str(dataset),
                               "--out", str(tmp_path / name)])
            summary = json.loads((tmp_path / name / "summary.json").read_text())
            outcomes = [json.loads(x) for x in (tmp_path / name / "outcomes.jsonl").read_text().splitlines()]
            return status, summary, outcomes

        with serve_http(StubBackend(victim=KeywordRuleVictim(["terrible", "awful"]), fail_on="service")) as url:
            status, summary, outcomes = run(
                "poisoned", f"[victim]\ntype = http\nurl = {url}\n[provider]\ntype = table\nfallback = fine\n")
        failed = [o["sample_id"] for o in outcomes if o["error"]]
        assert status == 0 and failed == ["s3"] and len(outcomes) == 5
        assert summary["attack_successes"] == 4

        status, summary, outcomes = run(
            "dead_provider",
            f"[victim]\ntype = keyword\ntriggers = terrible, awful\n"
            f"[provider]\ntype = mlm\nurl = {dead_url}\ntimeout = 1\n")
        assert status == 0 and len(outcomes) == 5
        assert summary["attack_successes"] > 0 and all(o["provider_failures"] > 0 for o in outcomes)

        status, summary, outcomes = run("dead_victim", f"[victim]\ntype = http\nurl = {dead_url}\ntimeout = 1\n")
        assert status != 0 and len(outcomes) == 5 and all(o["error"] for o in outcomes)
        d["text"] = "poisoned victim 4/5 succeed; dead provider still succeeds; dead victim -> 5 failure outcomes"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
