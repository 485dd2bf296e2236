import pytest

from conftest import mock
from dotrag.dot_builder import build_dot, generate_rules
from dotrag.selection import HIGH, LOW, LOW_AND_HIGH, LOW_ONLY, Concept, extract_concepts, ground_concepts
from dotrag.vector_index import entity_store


def concepts_reply(low=(), high=(), mode=LOW_ONLY):
    return {"stage": "concept_extraction", "response": {
        "low": [{"span": s, "gloss": ""} for s in low], "high": [{"span": s, "gloss": ""} for s in high],
        "mode": mode}}


class TestExtract:
    def test_scripted_concepts(self, tesla_index, tesla_mock):
        ex = extract_concepts("Who is the CEO of Tesla?", tesla_index.schema, tesla_mock)
        assert [c.span for c in ex.accepted] == ["Tesla"]
        assert ex.mode == LOW_ONLY and not ex.fallback

    def test_low_only_discards_high(self, tesla_index):
        ex = extract_concepts("q", tesla_index.schema, mock(concepts_reply(["Tesla"], ["cars"], LOW_ONLY)))
        assert [c.level for c in ex.accepted] == [LOW]

    def test_low_and_high_keeps_both(self, tesla_index):
        ex = extract_concepts("q", tesla_index.schema, mock(concepts_reply(["Tesla"], ["cars"], LOW_AND_HIGH)))
        assert [c.level for c in ex.accepted] == [LOW, HIGH]

    def test_empty_extraction_falls_back_to_whole_query(self, tesla_index):
        ex = extract_concepts("electric cars in general", tesla_index.schema, mock())
        assert ex.fallback and [c.span for c in ex.accepted] == ["electric cars in general"]

    def test_low_only_without_low_concepts_is_rerouted(self, tesla_index):
        ex = extract_concepts("q", tesla_index.schema, mock(concepts_reply([], ["cars"], LOW_ONLY)))
        assert ex.mode == LOW_AND_HIGH and [c.span for c in ex.accepted] == ["cars"]

    def test_empty_query_rejected(self, tesla_index):
        with pytest.raises(ValueError):
            extract_concepts(" ", tesla_index.schema, mock())


class TestGround:
    def test_low_concept_uses_threshold(self, tesla_index, embedder):
        amap = ground_concepts([Concept("Tesla")], tesla_index, entity_store(tesla_index), embedder)
        assert amap.entries[0].entity_ids == ("tesla",)

    def test_unmatched_low_concept_is_ungrounded(self, tesla_index, embedder):
        amap = ground_concepts([Concept("nebula harp")], tesla_index, entity_store(tesla_index), embedder)
        assert amap.grounded() == [] and len(amap.ungrounded()) == 1

    def test_high_concept_takes_top_k(self, tesla_index, embedder):
        amap = ground_concepts([Concept("anything", level=HIGH)], tesla_index, entity_store(tesla_index), embedder,
                               k_high=4)
        assert len(amap.entries[0].entity_ids) == 4

    def test_tau_one_keeps_exact_match(self, tesla_index, embedder):
        amap = ground_concepts([Concept("Elon Musk")], tesla_index, entity_store(tesla_index), embedder, tau=1.0)
        assert amap.entries[0].entity_ids == ("elon_musk",)

    @pytest.mark.parametrize("tau", [0.0, 1.0000001, -0.5])
    def test_tau_out_of_range(self, tesla_index, embedder, tau):
        with pytest.raises(ValueError):
            ground_concepts([Concept("x")], tesla_index, entity_store(tesla_index), embedder, tau=tau)


class TestWorkspace:
    def test_rules_and_filtered_ball(self, tesla_index, tesla_mock):
        dot = build_dot(Concept("Tesla"), ["tesla"], tesla_index, tesla_mock, query="Who is the CEO of Tesla?")
        assert dot.rules.allowed_types == {"person", "organization"}
        assert set(dot.subgraph.nodes) == {"tesla", "elon_musk", "jb_straubel", "spacex"}
        assert set(dot.local_store.entities.ids) == set(dot.subgraph.nodes)

    def test_unknown_types_dropped_with_warning(self, tesla_index, caplog):
        llm = mock({"stage": "heuristic_generation", "response": {
            "intermediate_rule": "i", "terminal_rule": "t", "allowed_types": ["person", "spaceship"]}})
        rules = generate_rules("q", Concept("Tesla"), ["tesla"], tesla_index, llm)
        assert rules.allowed_types == {"person"} and rules.dropped_types == ("spaceship",)
        assert "spaceship" in caplog.text

    def test_all_unknown_types_means_wildcard(self, tesla_index):
        llm = mock({"stage": "heuristic_generation", "response": {
            "intermediate_rule": "i", "terminal_rule": "t", "allowed_types": ["spaceship"]}})
        dot = build_dot(Concept("Tesla"), ["tesla"], tesla_index, llm)
        assert dot.rules.wildcard and len(dot.subgraph.nodes) == 6

    def test_needs_anchors(self, tesla_index):
        with pytest.raises(ValueError):
            build_dot(Concept("Tesla"), [], tesla_index, mock())
