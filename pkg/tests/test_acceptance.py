"""Acceptance gate: one test per release criterion.

Each test prints a `[ACCEPTANCE] <criterion>: PASS|FAIL|SKIP` line so the
suite output doubles as a release checklist.  Every numeric bound here was
measured against an independent oracle (exhaustive enumeration, a separately
coded scoring formula, or a closed-form value) before being frozen; nothing
is tuned to the implementation under test.

The one environment-dependent check (rule distribution on a real treebank
train split) is gated on LEMIR_EDT_TRAIN and skips when the file is absent.
"""

import itertools
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lemir.candidates import (
    DO_NOTHING_RULE,
    Candidate,
    CandidateLattice,
    CandidateSet,
    build_dictionary_generator,
    generate_candidates,
)
from lemir.corpus_io import Document, Sentence, Token, parse_conllu
from lemir.disambig import (
    BOS,
    HmmModel,
    ReferenceSpanScorer,
    SpanMatcherConfig,
    freq_disambiguate,
    hmm_disambiguate,
    oracle_disambiguate,
    span_match_disambiguate,
    train_frequency,
    train_hmm,
)
from lemir.editscript import (
    apply_rule,
    extract_rule,
    format_rule,
    parse_rule,
    rule_frequency_table,
)
from lemir.ireval import ap_at_k, evaluate_run, recall_at_k, success_at_k
from lemir.lemeval import SentenceStat, bootstrap_ci, score_sentences
from lemir.retrieval import (
    bm25_score,
    build_index,
    identity_pipeline,
    lemmatizer_pipeline,
    search,
)


@contextmanager
def criterion(name, capsys):
    """Print one checklist line per criterion, whatever the outcome."""
    try:
        yield
    except pytest.skip.Exception:
        with capsys.disabled():
            print(f"[ACCEPTANCE] {name}: SKIP")
        raise
    except BaseException:
        with capsys.disabled():
            print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    with capsys.disabled():
        print(f"[ACCEPTANCE] {name}: PASS")


# --------------------------------------------------------------------------
# shared builders
# --------------------------------------------------------------------------

RULES = [DO_NOTHING_RULE, "U|P|S-", "U|P|S+a", "U|P|S+b", "U|P|S+c", "U0:1|P|S"]
FORMS = ["aa", "bb", "cc", "dd", "ee", "ff"]


def lattice_from(forms, rules_per_token, sentence_id="s"):
    sentence = Sentence(tuple(Token(f) for f in forms), sentence_id)
    sets = []
    for i, (form, rules) in enumerate(zip(forms, rules_per_token)):
        cands = [Candidate(apply_rule(form, parse_rule(r)), r) for r in rules]
        sets.append(CandidateSet.build(i, form, cands))
    return CandidateLattice(sentence, tuple(sets))


def corpus_accuracy(results, gold):
    stats = score_sentences([r.lemmas for r in results], gold)
    return sum(s.n_correct for s in stats) / sum(s.n_tokens for s in stats)


def context_pools(seed=11):
    """Disjoint CVCV word pools: ambiguous stems and two context classes."""
    rng = np.random.default_rng(seed)
    cons, vows = list("kpstlmn"), list("aeiou")

    def cvcv(r):
        return "".join([r.choice(cons), r.choice(vows), r.choice(cons), r.choice(vows)])

    words = sorted({cvcv(rng) for _ in range(120)})
    return words[:20], words[20:30], words[30:40]


def context_sentences(pools, n_sentences, seed):
    """Two-token sentences where the first token determines the gold rule.

    After a ctx0 word the ambiguous form stem+"u" is its own lemma; after a
    ctx1 word (surface form carries a trailing "t") the gold lemma is the
    bare stem, i.e. the remove-last-letter rule.  A frequency model cannot
    separate the two readings; a bigram model can.
    """
    stems, ctx0, ctx1 = pools
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_sentences):
        stem = stems[rng.integers(0, len(stems))]
        ambiguous = stem + "u"
        if i % 2 == 0:
            w = ctx0[rng.integers(0, len(ctx0))]
            out.append(Sentence((Token(w, w), Token(ambiguous, ambiguous)), f"c0-{i}"))
        else:
            w = ctx1[rng.integers(0, len(ctx1))]
            out.append(Sentence((Token(w + "t", w), Token(ambiguous, stem)), f"c1-{i}"))
    return out


# --------------------------------------------------------------------------
# 1. rule round-trip on fuzzed Unicode pairs
# --------------------------------------------------------------------------

UNICODE_RANGES = [
    (0x20, 0x7E),      # ASCII
    (0xA0, 0x2FF),     # Latin-1 + extended, incl. case-exotic letters
    (0x300, 0x36F),    # combining marks
    (0x370, 0x3FF),    # Greek, incl. final sigma
    (0x400, 0x4FF),    # Cyrillic
    (0x590, 0x5FF),    # Hebrew (no case)
    (0x600, 0x6FF),    # Arabic
    (0x4E00, 0x4FFF),  # CJK slice
    (0x1F300, 0x1F3FF),  # emoji (astral plane)
]


def test_rule_roundtrip_fuzz(capsys):
    with criterion("rule-round-trip", capsys):
        pool = np.array([chr(c) for a, b in UNICODE_RANGES for c in range(a, b + 1)])
        rng = np.random.default_rng(42)
        pairs = []
        for _ in range(10000):
            form = "".join(rng.choice(pool, size=rng.integers(1, 21)))
            lemma = "".join(rng.choice(pool, size=rng.integers(1, 21)))
            pairs.append((form, lemma))
        started = time.perf_counter()
        failures = [
            (form, lemma)
            for form, lemma in pairs
            if apply_rule(form, extract_rule(form, lemma)) != lemma
        ]
        elapsed = time.perf_counter() - started
        assert failures == []
        assert elapsed < 5.0, f"10,000 round-trips took {elapsed:.2f}s"


# --------------------------------------------------------------------------
# 2. rule generalization
# --------------------------------------------------------------------------

def test_rule_generalization(capsys):
    with criterion("rule-generalization", capsys):
        rule_a = format_rule(extract_rule("koera", "koer"))
        rule_b = format_rule(extract_rule("metsa", "mets"))
        assert rule_a == rule_b == "U|P|S-"
        # the shared rule transfers across forms
        assert apply_rule("metsa", parse_rule(rule_a)) == "mets"

        # on any corpus with >= 50% identity tokens, do-nothing tops the table
        rng = np.random.default_rng(7)
        words = ["kala", "mets", "laul", "vesi", "lumi", "kivi", "puu", "maja"]
        suffixes = ["d", "le", "ga", "st", "sse"]
        for _ in range(20):
            n = int(rng.integers(40, 120))
            n_identity = int(math.ceil(n * float(rng.uniform(0.5, 1.0))))
            pairs = []
            for _ in range(n_identity):
                w = words[rng.integers(0, len(words))]
                pairs.append((w, w))
            for _ in range(n - n_identity):
                w = words[rng.integers(0, len(words))]
                s = suffixes[rng.integers(0, len(suffixes))]
                pairs.append((w + s, w))
            table = rule_frequency_table(pairs)
            assert next(iter(table)) == DO_NOTHING_RULE
            assert table[DO_NOTHING_RULE].share >= 0.5


def test_rule_distribution_edt(capsys):
    """Rule stats on a real treebank train split, when one is provided.

    Point the LEMIR_EDT_TRAIN environment variable at the Estonian EDT
    CoNLL-U train file to enable; the expected shares are do-nothing
    49.6% +/- 1.0 and remove-last-letter 7.0% +/- 1.0.
    """
    with criterion("rule-distribution-edt", capsys):
        path = os.environ.get("LEMIR_EDT_TRAIN")
        if not path:
            pytest.skip("set LEMIR_EDT_TRAIN to an EDT train .conllu to enable")
        with open(path, encoding="utf-8") as handle:
            sentences = parse_conllu(handle)
        pairs = []
        for sentence in sentences:
            for token in sentence.tokens:
                if token.lemma is None:
                    continue
                # compound/derivation separators are annotation artifacts,
                # not characters of the lemma
                pairs.append((token.form, token.lemma.replace("_", "").replace("=", "")))
        table = rule_frequency_table(pairs)
        do_nothing = table[DO_NOTHING_RULE].share * 100.0
        remove_last = table.get("U|P|S-").share * 100.0
        assert 48.6 <= do_nothing <= 50.6, f"do-nothing share {do_nothing:.2f}%"
        assert 6.0 <= remove_last <= 8.0, f"remove-last share {remove_last:.2f}%"


# --------------------------------------------------------------------------
# 3. Viterbi equals exhaustive enumeration
# --------------------------------------------------------------------------

def enumerate_paths(model, lattice):
    """Independent oracle: brute-force every path, same log accumulation."""
    sets = lattice.sets
    keys = [t.form.lower() for t in lattice.sentence.tokens]
    best_score = None
    best_paths = []
    for path in itertools.product(*(range(len(s.candidates)) for s in sets)):
        score = 0.0
        prev = BOS
        rules = []
        for t, i in enumerate(path):
            cand = sets[t].candidates[i]
            score += math.log(model.transition_prob(prev, cand.rule)) + math.log(
                model.emission_prob(keys[t], cand.rule)
            )
            prev = cand.rule
            rules.append(cand.rule)
        if best_score is None or score > best_score:
            best_score = score
            best_paths = [tuple(rules)]
        elif score == best_score:
            best_paths.append(tuple(rules))
    return best_score, best_paths


def test_hmm_matches_enumeration(capsys):
    with criterion("hmm-exact-decoding", capsys):
        rng = np.random.default_rng(42)
        mismatches = 0
        for _ in range(1000):
            transition_counts = {}
            for prev in [BOS] + RULES:
                row = {r: int(rng.integers(0, 6)) for r in RULES if rng.random() < 0.7}
                if row:
                    transition_counts[prev] = row
            emission_counts = {}
            for rule in RULES:
                row = {f: int(rng.integers(0, 6)) for f in FORMS if rng.random() < 0.7}
                if row:
                    emission_counts[rule] = row
            model = HmmModel(0.1, 0.01, transition_counts, emission_counts)
            n = int(rng.integers(1, 9))
            forms = [FORMS[rng.integers(0, len(FORMS))] for _ in range(n)]
            per_token = []
            for _ in range(n):
                k = int(rng.integers(0, 4))  # do-nothing is added, so <= 4 candidates
                chosen = rng.choice(RULES, size=k, replace=False) if k else []
                per_token.append([str(r) for r in chosen])
            lattice = lattice_from(forms, per_token)
            result = hmm_disambiguate(model, lattice)
            best_score, best_paths = enumerate_paths(model, lattice)
            decoded = tuple(c.chosen_rule for c in result.choices)
            if result.total_score != best_score or decoded not in best_paths:
                mismatches += 1
        assert mismatches == 0


# --------------------------------------------------------------------------
# 4. disambiguator ordering
# --------------------------------------------------------------------------

def run_all_methods(train, test):
    generator = build_dictionary_generator(train)
    train_lattices = [generate_candidates(generator, s) for s in train]
    test_lattices = [generate_candidates(generator, s) for s in test]
    freq_model = train_frequency(train_lattices, train)
    hmm_model = train_hmm(train_lattices, train)
    scorer = ReferenceSpanScorer()
    return {
        "oracle": corpus_accuracy(
            [oracle_disambiguate(l, s) for l, s in zip(test_lattices, test)], test
        ),
        "freq": corpus_accuracy(
            [freq_disambiguate(freq_model, l) for l in test_lattices], test
        ),
        "hmm": corpus_accuracy(
            [hmm_disambiguate(hmm_model, l) for l in test_lattices], test
        ),
        "span": corpus_accuracy(
            [span_match_disambiguate(l, scorer) for l in test_lattices], test
        ),
    }


NATURAL_TRAIN = [
    Sentence((Token("Koera", "koer"), Token("nägi", "nägema")), "n1"),
    Sentence((Token("koer", "koer"), Token("haugub", "haukuma")), "n2"),
    Sentence((Token("metsa", "mets"), Token("ja", "ja"), Token("koera", "koer")), "n3"),
    Sentence((Token("laulu", "laul"), Token("laulab", "laulma")), "n4"),
    Sentence((Token("vett", "vesi"), Token("joob", "jooma")), "n5"),
]
NATURAL_TEST = [
    Sentence((Token("koera", "koer"), Token("haugub", "haukuma")), "t1"),
    Sentence((Token("metsa", "mets"), Token("nägi", "nägema")), "t2"),
    Sentence((Token("laulu", "laul"), Token("ja", "ja"), Token("vett", "vesi")), "t3"),
    # unseen inflections: suffix backoff may or may not reach the gold lemma
    Sentence((Token("lauluga", "laul"), Token("koerad", "koer")), "t4"),
]


def test_disambiguator_ordering(capsys):
    with criterion("disambiguator-ordering", capsys):
        pools = context_pools()
        train = context_sentences(pools, 200, seed=12)
        test = context_sentences(pools, 100, seed=13)
        # a handful of tokens whose gold rule was never seen in training, so
        # even the oracle cannot reach them and its accuracy is non-trivial
        hard = [
            Sentence((Token(f"{stem}id", f"{stem}a"),), f"x-{i}")
            for i, stem in enumerate(pools[0][:10])
        ]
        corpora = [
            ("context", train, test),
            ("context+hard", train, test + hard),
            ("natural", NATURAL_TRAIN, NATURAL_TEST),
        ]
        for name, train_corpus, test_corpus in corpora:
            scores = run_all_methods(train_corpus, test_corpus)
            for method in ("freq", "hmm", "span"):
                assert scores["oracle"] >= scores[method], (
                    f"{name}: oracle {scores['oracle']:.3f} < "
                    f"{method} {scores[method]:.3f}"
                )

        # context determines the gold rule, so the bigram model must beat
        # the frequency baseline by a clear margin
        scores = run_all_methods(train, test)
        assert scores["oracle"] == 1.0
        assert scores["hmm"] - scores["freq"] >= 0.05, (
            f"hmm {scores['hmm']:.3f} vs freq {scores['freq']:.3f}"
        )


# --------------------------------------------------------------------------
# 5. span-matcher golden table
# --------------------------------------------------------------------------

SPAN_RULES = [DO_NOTHING_RULE, "U|P|S-", "U|P|S+a", "U|P|S+b", "U0:1|P|S"]
SCORE_GRID = [0.0, 0.1, 0.2, 0.3, 0.3, 0.5, 0.5, 0.6, 0.75, 0.8, 0.9, 1.0]


def expected_span_choices(per_token_rules, score_of, threshold):
    """Independent restatement of the decision rule: per token, take the
    argmax over that token's own non-default rules (ties to the smaller
    rule string); keep it if the max clears the threshold, otherwise fall
    back to the default with score 1 - max."""
    out = []
    for rules in per_token_rules:
        best_rule = None
        best = 0.0
        for rule in sorted(r for r in rules if r != DO_NOTHING_RULE):
            score = score_of(rule)
            if best_rule is None or score > best:
                best_rule, best = rule, score
        if best_rule is not None and best >= threshold:
            out.append((best_rule, best))
        else:
            out.append((DO_NOTHING_RULE, 1.0 - best))
    return out


def test_span_matcher_golden_table(capsys):
    with criterion("span-matcher-golden", capsys):
        rng = np.random.default_rng(42)
        mismatches = []
        for case in range(50):
            threshold = [0.3, 0.5, 0.8][rng.integers(0, 3)]
            n = int(rng.integers(1, 5))
            forms = [FORMS[rng.integers(0, len(FORMS))] for _ in range(n)]
            per_token = []
            for _ in range(n):
                k = int(rng.integers(0, 4))
                chosen = rng.choice(SPAN_RULES, size=k, replace=False) if k else []
                per_token.append([str(r) for r in chosen])
            lattice = lattice_from(forms, per_token, sentence_id=f"g{case}")
            cell = {
                (i, rule): float(SCORE_GRID[rng.integers(0, len(SCORE_GRID))])
                for i in range(n)
                for rule in SPAN_RULES
                if rule != DO_NOTHING_RULE
            }

            def scripted(tokens, spans, labels):
                return [[cell[(i, label)] for label in labels] for i, _ in enumerate(spans)]

            result = span_match_disambiguate(
                lattice, scripted, SpanMatcherConfig(threshold=threshold)
            )
            got = [(c.chosen_rule, c.score) for c in result.choices]
            expected = [
                expected_span_choices([cs.rules], lambda r, i=i: cell[(i, r)], threshold)[0]
                for i, cs in enumerate(lattice.sets)
            ]
            if got != expected:
                mismatches.append((case, got, expected))
        assert mismatches == []


# --------------------------------------------------------------------------
# 6. bootstrap coverage
# --------------------------------------------------------------------------

def test_bootstrap_coverage(capsys):
    with criterion("bootstrap-coverage", capsys):
        inside = 0
        last_stats = None
        for trial in range(200):
            rng = np.random.default_rng([1234, trial])
            stats = [
                SentenceStat(f"s{i:03d}", 10, int(rng.binomial(10, 0.9)))
                for i in range(100)
            ]
            report = bootstrap_ci(stats, replicates=500, seed=trial)
            if report.ci_low <= 0.9 <= report.ci_high:
                inside += 1
            last_stats = stats
        assert 180 <= inside <= 198, f"coverage {inside}/200 outside [90%, 99%]"

        # deterministic under a fixed seed, and independent of --jobs
        first = bootstrap_ci(last_stats, replicates=500, seed=3, jobs=1)
        again = bootstrap_ci(last_stats, replicates=500, seed=3, jobs=1)
        parallel = bootstrap_ci(last_stats, replicates=500, seed=3, jobs=4)
        assert (first.ci_low, first.ci_high) == (again.ci_low, again.ci_high)
        assert (first.ci_low, first.ci_high) == (parallel.ci_low, parallel.ci_high)


# --------------------------------------------------------------------------
# 7. BM25 oracle equivalence
# --------------------------------------------------------------------------

def oracle_all_scores(index, query_tokens):
    """Independent oracle: same model, algebraically rearranged idf, terms
    accumulated in sorted order instead of query order."""
    n = index.doc_count
    avgdl = sum(index.doc_lengths) / n
    counts = {}
    for token in query_tokens:
        counts[token] = counts.get(token, 0) + 1
    out = []
    for internal_id in range(n):
        dl = index.doc_lengths[internal_id]
        score = 0.0
        for term in sorted(counts):
            plist = index.postings.get(term, [])
            tf = dict(plist).get(internal_id, 0)
            if tf == 0:
                continue
            df = len(plist)
            idf = math.log((n + 1.0) / (df + 0.5))
            denom = tf + index.k1 * (1.0 - index.b + index.b * dl / avgdl)
            score += counts[term] * (idf * tf * (index.k1 + 1.0) / denom)
        out.append(score)
    return out


def test_bm25_oracle_equivalence(capsys):
    with criterion("bm25-oracle-equivalence", capsys):
        # closed-form single-document example
        index = build_index([Document("d1", "", "koer haugub")], identity_pipeline())
        assert bm25_score(index, ["koer"], 0) == pytest.approx(math.log(4.0 / 3.0), abs=1e-9)

        vocab = [f"w{i}" for i in range(20)]
        worst = 0.0
        for trial in range(500):
            rng = np.random.default_rng([7, trial])
            n_docs = int(rng.integers(1, 51))
            docs = [
                Document(f"d{i:02d}", "", " ".join(rng.choice(vocab, size=rng.integers(1, 30))))
                for i in range(n_docs)
            ]
            index = build_index(docs, identity_pipeline())
            query = [str(t) for t in rng.choice(vocab, size=rng.integers(1, 6))]
            expected = oracle_all_scores(index, query)
            results = search(index, query, k=n_docs)
            scored = dict(results)
            for internal_id, doc_id in enumerate(index.doc_ids):
                reference = expected[internal_id]
                worst = max(worst, abs(bm25_score(index, query, internal_id) - reference))
                if reference > 1e-12:
                    worst = max(worst, abs(scored[doc_id] - reference))
            expected_ranking = [
                doc_id
                for doc_id, _ in sorted(
                    ((index.doc_ids[i], s) for i, s in enumerate(expected) if s > 0.0),
                    key=lambda pair: (-pair[1], pair[0]),
                )
            ]
            assert [doc_id for doc_id, _ in results] == expected_ranking
        assert worst <= 1e-9, f"worst score difference {worst:.3e}"


# --------------------------------------------------------------------------
# 8. metric identities
# --------------------------------------------------------------------------

def random_run_and_qrels(rng):
    qids = [f"q{i}" for i in range(8)]
    docs = [f"d{i:02d}" for i in range(25)]
    qrels = {("q0", "d00"): 1}  # guarantee at least one relevant query
    for qid in qids:
        for doc in docs:
            if rng.random() < 0.25:
                qrels[(qid, doc)] = int(rng.integers(0, 3))
    run = {}
    for qid in qids:
        if rng.random() < 0.9:
            size = int(rng.integers(1, len(docs) + 1))
            ranked = rng.choice(docs, size=size, replace=False)
            run[qid] = [(str(d), 1.0 / (r + 1)) for r, d in enumerate(ranked)]
    return run, qrels


def test_metric_identities(capsys):
    with criterion("metric-identities", capsys):
        ks = (1, 2, 3, 5, 10, 30)
        rng = np.random.default_rng(42)
        for _ in range(1000):
            run, qrels = random_run_and_qrels(rng)
            report = evaluate_run(run, qrels, ks=ks)
            assert report.mean_ap[1] == report.success[1]
            for table in (report.recall, report.success):
                values = [table[k] for k in ks]
                assert values == sorted(values), f"not monotone: {values}"
            # same identity per query, from the per-query functions
            for qid in set(q for q, _ in qrels):
                relevant = {d for (q, d), g in qrels.items() if q == qid and g >= 1}
                if not relevant:
                    continue
                ranked = [d for d, _ in run.get(qid, [])]
                assert ap_at_k(ranked, relevant, 1) == float(
                    success_at_k(ranked, relevant, 1)
                )
                recalls = [recall_at_k(ranked, relevant, k) for k in ks]
                assert recalls == sorted(recalls)


# --------------------------------------------------------------------------
# 9. end-to-end normalization effect
# --------------------------------------------------------------------------

def build_inflected_collection(seed=21):
    """30 CVCV lemmas, each expanded with a suffix paradigm.  Every odd
    document contains only inflected forms, so its lemma never appears as
    a surface form anywhere in the collection; queries are bare lemmas."""
    rng = np.random.default_rng(seed)
    cons, vows = list("kpstlmn"), list("aeiou")

    def cvcv(r):
        return "".join([r.choice(cons), r.choice(vows), r.choice(cons), r.choice(vows)])

    lemmas = sorted({cvcv(rng) for _ in range(80)})[:30]
    paradigm = ["d", "le", "st", "ga"]
    train = []
    for lemma in lemmas:
        tokens = [Token(lemma, lemma)] + [Token(lemma + s, lemma) for s in paradigm]
        train.append(Sentence(tuple(tokens), f"t-{lemma}"))
    docs, queries, qrels = [], {}, {}
    for i, lemma in enumerate(lemmas):
        inflected = [lemma + s for s in paradigm]
        words = inflected if i % 2 else [lemma] + inflected
        docs.append(Document(f"d{i:02d}", "", " ".join(words)))
        queries[f"q{i:02d}"] = lemma
        qrels[(f"q{i:02d}", f"d{i:02d}")] = 1
    return train, docs, queries, qrels


def test_retrieval_normalization_effect(capsys):
    with criterion("retrieval-normalization", capsys):
        train, docs, queries, qrels = build_inflected_collection()
        generator = build_dictionary_generator(train)
        lattices = [generate_candidates(generator, s) for s in train]
        freq_model = train_frequency(lattices, train)
        pipelines = {
            "identity": identity_pipeline(),
            "lemmatizer": lemmatizer_pipeline(
                generator, lambda lattice: freq_disambiguate(freq_model, lattice)
            ),
        }
        reports = {}
        for name, pipeline in pipelines.items():
            index = build_index(docs, pipeline)
            run = {
                qid: search(index, pipeline.normalize(text), k=100)
                for qid, text in queries.items()
            }
            reports[name] = evaluate_run(run, qrels, ks=(100,), name=name)
        identity = reports["identity"].recall[100]
        lemmatized = reports["lemmatizer"].recall[100]
        assert lemmatized >= identity
        # half the queries have no surface-form match at all, so the gap
        # must be strict and the lemmatizer must recover those documents
        assert lemmatized > identity
        assert identity == pytest.approx(0.5)
        assert lemmatized == pytest.approx(1.0)
