import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracelink.corpus import (
    DEFAULT_STOPWORDS,
    CorpusError,
    InfeasibleConfigError,
    SynthesisConfig,
    build_stakeholder,
    classify_variation,
    extract_messages,
    generate_synthetic_corpus,
    infer_condition_kind,
    load_corpus,
    load_stopwords,
    write_corpus,
    write_ground_truth,
)
from tracelink.model import ConditionKind, DtcType, LinkLabel, Variation
from tracelink.recovery import apply_prefilter, enumerate_candidates

# Template-shaped fictitious requirement texts, one per variation.
V1_TEXT = (
    'If Trigger_Condition = "RUN", and the module M does NOT receive the message '
    "MESSAGE_1 for a certain number of message cycles, then the module M shall: "
    '--- Set the DTC to "Not Present" according to rules contained in the "Reference_Document".'
)
V2_TEXT = (
    'If Trigger_Condition = "RUN", the internal signal MODULE_MODE != "SIGNAL_1_Fail", '
    "then the module M must: --- Set the DTC to \"Not Present\" according to the "
    'appropriate validation rules contained in the "Reference_Document".'
)
V3_TEXT = (
    'If Trigger_Condition = "RUN", and the module M does not detect a Plausibility Fault '
    'on a signal within the message "MESSAGE_2", then the module M must: --- Set the DTC '
    'to "Not Present" according to rules contained in the "Reference_Document".'
)
V4_TEXT = (
    'If Trigger_Condition = "RUN", the module M determines there is a failure in SIGNAL_2, '
    'then the module M shall: --- Set the INTERNAL_FLAG = "Faulted". Set the DTC to '
    '"Present" according to rules contained in the "Reference_Document".'
)

FIG2_MATURE_TEXT = (
    "if ( ENABLE_COMPONENT is enabled ){ \n"
    "    if ( Missing_Msg_MESSAGE_1 || \n"
    "         Missing_Msg_MESSAGE_2 || ... ){ \n"
    "        LostComm_Module_M = TRUE; }}"
)


class TestClassifyVariation:
    @pytest.mark.parametrize(
        "text,expected",
        [
            (V1_TEXT, Variation.V1),
            (V2_TEXT, Variation.V2),
            (V3_TEXT, Variation.V3),
            (V4_TEXT, Variation.V4),
            ("The system shall be fast.", Variation.UNKNOWN),
            ("", Variation.UNKNOWN),
        ],
    )
    def test_templates(self, text, expected):
        assert classify_variation(text) is expected

    def test_case_insensitive(self):
        assert classify_variation(V1_TEXT.lower()) is Variation.V1
        assert classify_variation(V4_TEXT.upper()) is Variation.V4

    def test_pure_function(self):
        assert classify_variation(V2_TEXT) is classify_variation(V2_TEXT)


class TestInferConditionKind:
    @pytest.mark.parametrize(
        "variation,expected",
        [
            (Variation.V1, ConditionKind.MATURE),
            (Variation.V2, ConditionKind.MATURE),
            (Variation.V3, ConditionKind.MATURE),
            (Variation.V4, ConditionKind.DEMATURE),
            (Variation.UNKNOWN, ConditionKind.UNKNOWN),
        ],
    )
    def test_mapping(self, variation, expected):
        assert infer_condition_kind(variation, "any text") is expected


# Frozen against the default stopword list; a deliberate list change must
# update this set.
FIG2_GOLDEN = frozenset(
    {
        "ENABLE_COMPONENT",
        "Missing_Msg_MESSAGE_1",
        "Msg_MESSAGE_1",
        "MESSAGE_1",
        "Missing_Msg_MESSAGE_2",
        "Msg_MESSAGE_2",
        "MESSAGE_2",
        "LostComm_Module_M",
        "Module_M",
    }
)


class TestExtractMessages:
    def test_v1_yields_only_the_message(self):
        assert extract_messages(V1_TEXT) == {"MESSAGE_1"}

    def test_fig2_golden(self):
        assert extract_messages(FIG2_MATURE_TEXT, mask_trigger=False) == FIG2_GOLDEN

    def test_empty(self):
        assert extract_messages("") == frozenset()

    def test_trigger_masking_toggle(self):
        with_mask = extract_messages(V1_TEXT, mask_trigger=True)
        without_mask = extract_messages(V1_TEXT, mask_trigger=False)
        assert "Trigger_Condition" not in with_mask
        assert "Trigger_Condition" in without_mask
        assert with_mask < without_mask

    def test_compound_identifier_suffixes(self):
        tokens = extract_messages("check Plausibility_Fault_SIGNAL_9 here", mask_trigger=False)
        assert "SIGNAL_9" in tokens
        assert "Fault_SIGNAL_9" in tokens

    def test_custom_stopwords(self):
        tokens = extract_messages(
            "MESSAGE_1 and SIGNAL_2", stopwords=frozenset({"message_1"}), mask_trigger=False
        )
        assert tokens == {"SIGNAL_2"}

    @given(st.text(alphabet=st.characters(codec="ascii"), max_size=300))
    def test_grammar_and_stopword_properties(self, text):
        for token in extract_messages(text):
            assert len(token) >= 4
            assert any(c.isdigit() or c == "_" for c in token)
            assert token.lower() not in DEFAULT_STOPWORDS


class TestLoadCorpus:
    def _write(self, path, records):
        path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

    def _paths(self, tmp_path, stakeholders, systems, links):
        sp, yp, lp = tmp_path / "s.jsonl", tmp_path / "y.jsonl", tmp_path / "l.jsonl"
        self._write(sp, stakeholders)
        self._write(yp, systems)
        self._write(lp, links)
        return sp, yp, lp

    def test_direct_load(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": V1_TEXT}, {"id": "S2", "text": V4_TEXT}],
            [
                {
                    "id": "Y1",
                    "name": "Lost Communication with M",
                    "mature": FIG2_MATURE_TEXT,
                    "demature": "if ( ENABLE_COMPONENT is enabled ){ LostComm_Module_M = FALSE; }",
                }
            ],
            [
                {"stake_id": "S1", "sys_id": "Y1", "label": "valid"},
                {"stake_id": "S2", "sys_id": "Y1"},
            ],
        )
        corpus = load_corpus(*paths)
        assert len(corpus.links) == 2
        assert corpus.stakeholder("S1").variation is Variation.V1
        assert corpus.stakeholder("S1").messages == {"MESSAGE_1"}
        assert corpus.system("Y1").dtc_type is DtcType.LOST_COMMUNICATION
        assert len(corpus.labeled_links()) == 1

    def test_dangling_link(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": V1_TEXT}],
            [{"id": "Y1", "name": "n", "mature": "LostComm_X = TRUE", "demature": "d"}],
            [{"stake_id": "SR-99", "sys_id": "Y1"}],
        )
        with pytest.raises(CorpusError, match="SR-99"):
            load_corpus(*paths)

    def test_empty_links(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": V1_TEXT}],
            [{"id": "Y1", "name": "n", "mature": "LostComm_X = TRUE", "demature": "d"}],
            [],
        )
        assert load_corpus(*paths).links == ()

    def test_duplicate_stakeholder_id(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": "a"}, {"id": "S1", "text": "b"}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [],
        )
        with pytest.raises(CorpusError, match="duplicate id"):
            load_corpus(*paths)

    def test_duplicate_link(self, tmp_path):
        link = {"stake_id": "S1", "sys_id": "Y1"}
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": "a"}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [link, link],
        )
        with pytest.raises(CorpusError, match="duplicate link"):
            load_corpus(*paths)

    def test_unknown_field_rejected(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": "a", "priority": "high"}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [],
        )
        with pytest.raises(CorpusError, match="unknown fields"):
            load_corpus(*paths)

    def test_malformed_line_reports_number(self, tmp_path):
        sp = tmp_path / "s.jsonl"
        sp.write_text('{"id": "S1", "text": "a"}\nnot json\n', encoding="utf-8")
        yp, lp = tmp_path / "y.jsonl", tmp_path / "l.jsonl"
        self._write(yp, [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}])
        self._write(lp, [])
        with pytest.raises(CorpusError, match=":2:"):
            load_corpus(sp, yp, lp)

    def test_bad_label(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": "a"}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [{"stake_id": "S1", "sys_id": "Y1", "label": "maybe"}],
        )
        with pytest.raises(CorpusError, match="bad label"):
            load_corpus(*paths)

    def test_compound_stakeholder_rejected(self, tmp_path):
        compound = f"{V1_TEXT} {V2_TEXT}"
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": compound}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [],
        )
        with pytest.raises(CorpusError, match="not atomic"):
            load_corpus(*paths)

    def test_variation_override(self, tmp_path):
        paths = self._paths(
            tmp_path,
            [{"id": "S1", "text": V1_TEXT, "variation": "V1"}],
            [{"id": "Y1", "name": "n", "mature": "m", "demature": "d"}],
            [],
        )
        assert load_corpus(*paths).stakeholder("S1").variation is Variation.V1

    def test_round_trip(self, tmp_path):
        # Provenance is not part of the record format, so compare the rest.
        corpus, _ = generate_synthetic_corpus(SynthesisConfig(20, 2, random_seed=5))
        out = tmp_path / "out"
        out.mkdir()
        write_corpus(corpus, out / "s.jsonl", out / "y.jsonl", out / "l.jsonl")
        reloaded = load_corpus(out / "s.jsonl", out / "y.jsonl", out / "l.jsonl")
        assert reloaded.stakeholders == corpus.stakeholders
        assert reloaded.systems == corpus.systems
        assert [(l.stake_id, l.sys_id, l.label) for l in reloaded.links] == [
            (l.stake_id, l.sys_id, l.label) for l in corpus.links
        ]


class TestStopwordFile:
    def test_load(self, tmp_path):
        path = tmp_path / "stop.txt"
        path.write_text("# domain\nDTC\nRUN\n\nmessage\n", encoding="utf-8")
        assert load_stopwords(path) == {"dtc", "run", "message"}


class TestSynthesisConfigValidation:
    def test_rates_sum(self):
        with pytest.raises(InfeasibleConfigError):
            SynthesisConfig(10, 2, valid_link_rate=0.8, invalid_link_rate=0.3)

    def test_weights_not_all_zero(self):
        with pytest.raises(InfeasibleConfigError):
            SynthesisConfig(10, 2, variation_mix=(0, 0, 0, 0))

    def test_negative_weight(self):
        with pytest.raises(InfeasibleConfigError):
            SynthesisConfig(10, 2, variation_mix=(1, -1, 1, 1))

    def test_vocabulary_too_small(self):
        with pytest.raises(InfeasibleConfigError, match="vocabulary"):
            generate_synthetic_corpus(SynthesisConfig(50, 4, message_vocabulary_size=10))


class TestGenerator:
    def test_deterministic_byte_identical(self, tmp_path):
        config = SynthesisConfig(30, 4, random_seed=7)
        for run in ("a", "b"):
            corpus, truth = generate_synthetic_corpus(config)
            directory = tmp_path / run
            directory.mkdir()
            write_corpus(
                corpus, directory / "s.jsonl", directory / "y.jsonl", directory / "l.jsonl"
            )
            write_ground_truth(truth, directory / "gt.jsonl")
        for name in ("s.jsonl", "y.jsonl", "l.jsonl", "gt.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_valid_rate(self):
        corpus, truth = generate_synthetic_corpus(
            SynthesisConfig(20, 2, valid_link_rate=0.0, invalid_link_rate=0.5, random_seed=1)
        )
        assert all(t.label is not LinkLabel.VALID for t in truth)
        assert all(l.label is LinkLabel.INVALID for l in corpus.links)

    def test_prefilter_retains_every_valid_pair(self):
        # Withheld pairs are candidates and must survive; recorded pairs are
        # checked against the stage predicates directly.
        corpus, truth = generate_synthetic_corpus(SynthesisConfig(20, 4, random_seed=1))
        valid = [t for t in truth if t.label is LinkLabel.VALID]
        assert valid
        survivors, _ = apply_prefilter(enumerate_candidates(corpus), corpus)
        survivor_pairs = {(s.stakeholder.id, s.system.id) for s in survivors}
        recorded = corpus.linked_pairs()
        for link in valid:
            if link.pair in recorded:
                stake = corpus.stakeholder(link.stake_id)
                system = corpus.system(link.sys_id)
                assert stake.dtc_type is system.dtc_type
                assert stake.messages & system.side_messages(stake.condition_kind)
            else:
                assert link.pair in survivor_pairs

    def test_coverage_equivalence(self):
        # Ground-truth Valid holds exactly when the stakeholder's messages
        # are covered by the bound condition side.
        corpus, truth = generate_synthetic_corpus(SynthesisConfig(40, 4, random_seed=9))
        valid_pairs = {t.pair for t in truth if t.label is LinkLabel.VALID}
        for stake in corpus.stakeholders:
            for system in corpus.systems:
                covered = (
                    stake.dtc_type is system.dtc_type
                    and bool(stake.messages)
                    and stake.messages <= system.side_messages(stake.condition_kind)
                )
                assert covered == ((stake.id, system.id) in valid_pairs)

    def test_invalid_links_violate_coverage(self):
        corpus, truth = generate_synthetic_corpus(SynthesisConfig(40, 4, random_seed=2))
        for link in truth:
            if link.label is LinkLabel.INVALID:
                stake = corpus.stakeholder(link.stake_id)
                system = corpus.system(link.sys_id)
                assert not stake.messages <= system.side_messages(stake.condition_kind)

    def test_every_cell_represented(self):
        corpus, _ = generate_synthetic_corpus(SynthesisConfig(80, 4, random_seed=4))
        cells = {
            (corpus.stakeholder(l.stake_id).variation, l.label) for l in corpus.labeled_links()
        }
        for variation in (Variation.V1, Variation.V2, Variation.V3, Variation.V4):
            for label in (LinkLabel.VALID, LinkLabel.INVALID):
                assert (variation, label) in cells

    def test_single_system_hosts_only_v1(self):
        corpus, _ = generate_synthetic_corpus(SynthesisConfig(12, 1, random_seed=3))
        assert {s.variation for s in corpus.stakeholders} == {Variation.V1}

    def test_all_stakeholders_classified(self):
        corpus, _ = generate_synthetic_corpus(SynthesisConfig(60, 4, random_seed=6))
        assert all(s.variation is not Variation.UNKNOWN for s in corpus.stakeholders)


def test_build_stakeholder_classifies():
    record = build_stakeholder("S1", V3_TEXT)
    assert record.variation is Variation.V3
    assert record.dtc_type is DtcType.IMPLAUSIBLE_DATA
    assert record.condition_kind is ConditionKind.MATURE
    assert record.messages == {"MESSAGE_2"}
