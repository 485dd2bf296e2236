"""Regenerate the frozen fixture files in this directory.

Run ``python3 tests/fixtures/make_fixtures.py`` after changing the mock embedder
or the fixture graphs, then review the diff. The golden bundle is written by the
test suite itself only when ``DOTRAG_REGEN_GOLDEN=1`` is set.
"""

from __future__ import annotations

import json
from pathlib import Path

from dotrag.graph_store import Chunk, Entity, EntityType, GraphIndex, Relation, Schema, write_index
from dotrag.providers import MockEmbedder

HERE = Path(__file__).parent
EMBED = MockEmbedder(dim=256, seed=0)


def _write_json(name: str, obj) -> None:
    (HERE / name).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_ndjson(name: str, rows) -> None:
    (HERE / name).write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


def _index(schema, ents, rels, chunks) -> GraphIndex:
    """ents: (id, name, type, description); rels: (id, src, dst, description); chunks: (id, text, ids, center)."""
    chunk_of: dict[str, set[str]] = {}
    for cid, _, ids, _ in chunks:
        for eid in ids:
            chunk_of.setdefault(eid, set()).add(cid)
    entities = [Entity(i, n, t, d, frozenset(chunk_of.get(i, ()))) for i, n, t, d in ents]
    relations = [Relation(i, s, d, desc) for i, s, d, desc in rels]
    chunk_recs = [Chunk(i, text, frozenset(ids), center) for i, text, ids, center in chunks]
    ent_emb = {e.id: EMBED.embed(e.name) for e in entities}
    rel_emb = {r.id: EMBED.embed(r.description) for r in relations}
    return GraphIndex.build(entities, relations, chunk_recs, schema, ent_emb, rel_emb)


# -- six-node company graph ---------------------------------------------------

COMPANY_SCHEMA = Schema(
    "People, companies, products and places in the technology industry.",
    (
        EntityType("person", "An individual."),
        EntityType("organization", "A company or institution."),
        EntityType("product", "Something a company makes."),
        EntityType("location", "A city or region."),
    ),
)


def tesla() -> None:
    ents = [
        ("tesla", "Tesla", "organization", "Electric vehicle and energy company."),
        ("elon_musk", "Elon Musk", "person", "Entrepreneur who runs several companies."),
        ("spacex", "SpaceX", "organization", "Rocket and spacecraft manufacturer."),
        ("jb_straubel", "JB Straubel", "person", "Engineer and early company executive."),
        ("model_s", "Model S", "product", "Electric sedan."),
        ("palo_alto", "Palo Alto", "location", "City in California."),
    ]
    rels = [
        ("r1", "elon_musk", "tesla", "Elon Musk is the chief executive officer of Tesla"),
        ("r2", "elon_musk", "spacex", "Elon Musk founded SpaceX"),
        ("r3", "jb_straubel", "tesla", "JB Straubel was chief technology officer of Tesla"),
        ("r4", "tesla", "model_s", "Tesla manufactures the Model S"),
        ("r5", "tesla", "palo_alto", "Tesla was headquartered in Palo Alto"),
    ]
    chunks = [
        ("c_tesla", "Tesla, led by Elon Musk, builds the Model S and was based in Palo Alto.",
         {"tesla", "elon_musk", "model_s", "palo_alto"}, "tesla"),
        ("c_musk", "Elon Musk is CEO of Tesla and founder of SpaceX.", {"elon_musk", "tesla", "spacex"}, "elon_musk"),
        ("c_straubel", "JB Straubel served as CTO of Tesla.", {"jb_straubel", "tesla"}, "jb_straubel"),
    ]
    write_index(_index(COMPANY_SCHEMA, ents, rels, chunks), HERE / "tesla_index.ndjson")
    _write_json("tesla_mock.json", {
        "rules": [
            {"stage": "concept_extraction", "match": ["QUESTION: Who is the CEO of Tesla?"],
             "response": {"low": [{"span": "Tesla", "gloss": ""}], "high": [], "mode": "low_only"}},
            {"stage": "heuristic_generation", "match": ["CONCEPT: Tesla"],
             "response": {"intermediate_rule": "People or companies tied to Tesla.",
                          "terminal_rule": "A person who is the chief executive of Tesla.",
                          "allowed_types": ["person", "organization"]}},
            {"stage": "path_judgment", "pattern": "PATH: [^\\n]*SpaceX", "response": {"verdict": "irrelevant"}},
            {"stage": "path_judgment", "pattern": "PATH: Tesla [^\\n]*chief executive officer[^\\n]* Elon Musk\\n",
             "response": {"verdict": "complete"}},
            {"stage": "final_answer", "match": ["Elon Musk"], "response": {"answer": "Elon Musk is the CEO of Tesla."}},
        ]
    })
    _write_ndjson("tesla_truth.ndjson", [
        {"query_id": "tesla-ceo", "question": "Who is the CEO of Tesla?", "start_entity": "tesla",
         "gold_entities": ["elon_musk"]},
    ])


# -- three-hop chain --------------------------------------------------------

FILM_SCHEMA = Schema(
    "Films linked to their writers, actors, genres and release years.",
    (
        EntityType("movie", "A film."),
        EntityType("person", "A writer, director or actor."),
        EntityType("genre", "A film category."),
        EntityType("year", "A release year."),
    ),
)


def chain() -> None:
    # ids are ordered so that ties at zero similarity resolve to the writer first
    ents = [
        ("e0_blade_runner", "Blade Runner", "movie", "1982 science fiction film."),
        ("e1_philip_k_dick", "Philip K. Dick", "person", "Novelist whose books were adapted to film."),
        ("e2_total_recall", "Total Recall", "movie", "1990 film."),
        ("e3_action", "Action", "genre", "Films driven by physical conflict."),
        ("e4_harrison_ford", "Harrison Ford", "person", "Actor."),
        ("e5_1982", "1982", "year", "A year."),
        ("e6_minority_report", "Minority Report", "movie", "2002 film."),
        ("e7_thriller", "Thriller", "genre", "Suspense films."),
        ("e8_1990", "1990", "year", "A year."),
    ]
    rels = [
        ("r01", "e0_blade_runner", "e1_philip_k_dick", "Blade Runner was written by Philip K. Dick"),
        ("r02", "e2_total_recall", "e1_philip_k_dick", "Total Recall was written by Philip K. Dick"),
        ("r03", "e2_total_recall", "e3_action", "Total Recall has genre Action"),
        ("r04", "e0_blade_runner", "e4_harrison_ford", "Blade Runner starred Harrison Ford"),
        ("r05", "e0_blade_runner", "e5_1982", "Blade Runner was released in 1982"),
        ("r06", "e6_minority_report", "e1_philip_k_dick", "Minority Report was written by Philip K. Dick"),
        ("r07", "e6_minority_report", "e7_thriller", "Minority Report has genre Thriller"),
        ("r08", "e2_total_recall", "e8_1990", "Total Recall was released in 1990"),
    ]
    chunks = [
        ("c_br", "<Blade Runner> was written by [Philip K. Dick].", {"e0_blade_runner", "e1_philip_k_dick"},
         "e0_blade_runner"),
        ("c_tr", "<Total Recall> is an [Action] film from a [Philip K. Dick] story.",
         {"e2_total_recall", "e3_action", "e1_philip_k_dick"}, "e2_total_recall"),
    ]
    write_index(_index(FILM_SCHEMA, ents, rels, chunks), HERE / "chain_index.ndjson")
    question = "What genre is the other film by the writer of Blade Runner?"
    _write_json("chain_mock.json", {
        "rules": [
            {"stage": "concept_extraction", "match": [f"QUESTION: {question}"],
             "response": {"low": [{"span": "Blade Runner", "gloss": ""}], "high": [], "mode": "low_only"}},
            {"stage": "path_judgment",
             "pattern": "PATH: Blade Runner [^\\n]* Philip K\\. Dick [^\\n]* Total Recall [^\\n]* Action\\n",
             "response": {"verdict": "complete"}},
            {"stage": "path_judgment", "pattern": "PATH: Blade Runner [^\\n]* Philip K\\. Dick [^\\n]* Total Recall\\n",
             "response": {"verdict": "partial"}},
            {"stage": "path_judgment", "pattern": "PATH: Blade Runner [^\\n]* Philip K\\. Dick\\n",
             "response": {"verdict": "partial"}},
            {"stage": "followup_queries", "match": ["PARTIAL PATHS", "Total Recall\n"],
             "response": {"queries": ["Action"]}},
            {"stage": "followup_queries", "match": ["PARTIAL PATHS", "Philip K. Dick\n"],
             "response": {"queries": ["Total Recall"]}},
            {"stage": "final_answer", "match": ["Action"], "response": {"answer": "Action."}},
        ]
    })


# -- thirty-triple film KB --------------------------------------------------

TRIPLES = """\
Blade Runner|directed_by|Ridley Scott
Blade Runner|written_by|Philip K. Dick
Blade Runner|starred_actors|Harrison Ford
Blade Runner|release_year|1982
Blade Runner|has_genre|Science Fiction
Blade Runner|in_language|English
Total Recall|written_by|Philip K. Dick
Total Recall|directed_by|Paul Verhoeven
Total Recall|starred_actors|Arnold Schwarzenegger
Total Recall|release_year|1990
Total Recall|has_genre|Action
Minority Report|written_by|Philip K. Dick
Minority Report|directed_by|Steven Spielberg
Minority Report|starred_actors|Tom Cruise
Minority Report|release_year|2002
Alien|directed_by|Ridley Scott
Alien|starred_actors|Sigourney Weaver
Alien|release_year|1979
Alien|has_genre|Horror
Gladiator|directed_by|Ridley Scott
Gladiator|starred_actors|Russell Crowe
Gladiator|release_year|2000
Jaws|directed_by|Steven Spielberg
Jaws|release_year|1975
Jaws|has_genre|Thriller
Witness|starred_actors|Harrison Ford
Witness|directed_by|Peter Weir
Witness|release_year|1985
Robocop|directed_by|Paul Verhoeven
Robocop|release_year|1987
"""

VERBS = {
    "directed_by": "was directed by",
    "written_by": "was written by",
    "starred_actors": "starred",
    "release_year": "was released in",
    "has_genre": "belongs to the genre",
    "in_language": "is in the language",
}
TAIL_TYPE = {
    "directed_by": "person",
    "written_by": "person",
    "starred_actors": "person",
    "release_year": "year",
    "has_genre": "genre",
    "in_language": "language",
}

QUESTIONS = [
    # (id, question, anchor, gold, judgment rules, follow-ups)
    ("q1", "who directed Alien", "Alien", ["Ridley Scott"],
     [("PATH: Alien [^\\n]* Ridley Scott\\n", "complete")], ["Ridley Scott"]),
    ("q2", "which movies share the director of Jaws", "Jaws", ["Minority Report"],
     [("PATH: Jaws [^\\n]* Steven Spielberg [^\\n]* Minority Report\\n", "complete"),
      ("PATH: Jaws [^\\n]* Steven Spielberg\\n", "partial")], ["Steven Spielberg", "Minority Report"]),
    ("q3", "the writer of Total Recall also wrote which movies", "Total Recall", ["Blade Runner", "Minority Report"],
     [("PATH: Total Recall [^\\n]* Philip K\\. Dick [^\\n]* Blade Runner\\n", "complete"),
      ("PATH: Total Recall [^\\n]* Philip K\\. Dick\\n", "partial")], ["Philip K. Dick", "Blade Runner"]),
]


def metaqa() -> None:
    (HERE / "metaqa_triples.txt").write_text(TRIPLES, encoding="utf-8")
    triples = [line.split("|") for line in TRIPLES.splitlines()]
    types: dict[str, str] = {}
    outgoing: dict[str, list[str]] = {}
    for h, r, t in triples:
        types[h] = "movie"
        types.setdefault(t, TAIL_TYPE[r])
        outgoing.setdefault(h, []).append(f"{h} {VERBS[r]} {t}.")
    rules = [
        {"stage": "textualize_chunk",
         "pattern": "CENTER: (?P<center>[^\\n]+)\\nNEIGHBORS: (?P<neighbors>[^\\n]+)",
         "response": {"text": "<$center> is linked to $neighbors."}},
    ]
    for name in sorted(types):
        rules.append({"stage": "entity_summary", "match": [f"ENTITY: {name}\n"],
                      "response": {"type": types[name], "description": f"{name} is a {types[name]}."}})
    for name in sorted(outgoing):
        rules.append({"stage": "relation_describe", "match": [f"ENTITY: {name}\n"],
                      "response": {"descriptions": outgoing[name]}})
    truth = []
    for qid, question, anchor, gold, judgments, followups in QUESTIONS:
        rules.append({"stage": "concept_extraction", "match": [f"QUESTION: {question}\n"],
                      "response": {"low": [{"span": anchor, "gloss": ""}], "high": [], "mode": "low_only"}})
        for pattern, verdict in judgments:
            rules.append({"stage": "path_judgment", "match": [f"QUESTION: {question}\n"], "pattern": pattern,
                          "response": {"verdict": verdict}})
        rules.append({"stage": "followup_queries", "match": [f"QUESTION: {question}\n", "FALLBACK EXPLORATION"],
                      "response": {"queries": followups[:1]}})
        rules.append({"stage": "followup_queries", "match": [f"QUESTION: {question}\n"],
                      "response": {"queries": followups}})
        truth.append({"query_id": qid, "question": question, "start_entity": anchor, "gold_entities": gold})
    rules.append({"stage": "final_answer", "match": [], "response": {"answer": "See the retrieved paths."}})
    _write_json("metaqa_mock.json", {"rules": rules})
    _write_ndjson("metaqa_truth.ndjson", truth)
    _write_json("metaqa_config.json", {"retrieval.n_chunks": 1, "run.seed": 0})


if __name__ == "__main__":
    tesla()
    chain()
    metaqa()
