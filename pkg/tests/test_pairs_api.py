import json
import pathlib

import numpy as np
import pytest
from fastapi.testclient import TestClient

from msmkit import DifferenceMeasure, PhantomSpec, QualityScore, generate_phantom
from msmkit.harness.pairs import (
    PairError, PairSession, RatingRecord, export_session, kappa_report,
    make_pair_session, metric_choices,
)
from msmkit.harness.server import RatingStore, create_app
from msmkit.imaging import rng_for

PROVENANCE_TOKENS = ["median", "dncnn", "unet", "sigma", "level", "blur"]


def make_items(n=5, seed=0):
    return [
        (f"item-{i}", generate_phantom(PhantomSpec(seed=seed + i, size=32)),
         {"method": ["median", "dncnn", "unet", "bm-x", "raw"][i % 5], "level": i})
        for i in range(n)
    ]


def test_pair_count_five_items():
    session = make_pair_session(make_items(5), seed=1)
    assert len(session.pairs) == 10  # C(5, 2)
    unordered = {p.canonical_items for p in session.pairs}
    assert len(unordered) == 10


def test_pair_count_two_items():
    assert len(make_pair_session(make_items(2), seed=1).pairs) == 1


def test_too_few_items():
    with pytest.raises(PairError):
        make_pair_session(make_items(1), seed=1)


def test_side_assignment_balanced():
    # 200 pairs needs >= 21 items; count left-placements of the lower item id
    session = make_pair_session(make_items(21), seed=7)
    assert len(session.pairs) == 210
    lefts = sum(1 for p in session.pairs[:200] if p.left_item == p.canonical_items[0])
    assert 80 <= lefts <= 120  # binomial 3-sigma around 100


def test_client_payload_blinded():
    session = make_pair_session(make_items(5), seed=1)
    for pair in session.pairs:
        payload = json.dumps(session.client_pair_payload(pair)).lower()
        for token in PROVENANCE_TOKENS + ["item-"]:
            assert token not in payload


def test_derandomization_against_brute_force():
    session = make_pair_session(make_items(6), seed=3)
    rng = rng_for(11)
    for _ in range(1000):
        pair = session.pairs[int(rng.integers(0, len(session.pairs)))]
        choice = ["left", "right"][int(rng.integers(0, 2))]
        rec = RatingRecord(session_id="s", pair_id=pair.pair_id, rater="r",
                           choice=choice, left_item=pair.left_item,
                           right_item=pair.right_item)
        expected = pair.left_item if choice == "left" else pair.right_item
        assert rec.chosen_item() == expected


def test_metric_choices_pick_lower_for_distance():
    session = make_pair_session(make_items(3), seed=2)
    scores = {"item-0": 0.1, "item-1": 0.5, "item-2": 0.3}
    choices = metric_choices(session, scores, higher_is_better=False)
    for pair in session.pairs:
        a, b = pair.canonical_items
        better = a if scores[a] < scores[b] else b
        assert choices[pair.pair_id] == ("a" if better == a else "b")


def rate_all(session, rater, decide):
    recs = []
    for pair in session.pairs:
        chosen = decide(pair)
        choice = "left" if chosen == pair.left_item else "right"
        recs.append(RatingRecord(session_id=session.session_id, pair_id=pair.pair_id,
                                 rater=rater, choice=choice, left_item=pair.left_item,
                                 right_item=pair.right_item))
    return recs


def test_kappa_report_identical_raters():
    session = make_pair_session(make_items(5), seed=4)
    decide = lambda pair: pair.canonical_items[0]
    report = kappa_report(session, {
        "r1": rate_all(session, "r1", decide),
        "r2": rate_all(session, "r2", decide),
    })
    assert report["kappa"]["r1|r2"] == 1.0
    assert report["n_shared_pairs"] == 10


def test_kappa_report_coin_flip_rater_near_zero():
    items = make_items(46)  # C(46,2) = 1035 pairs
    session = make_pair_session(items, seed=5)
    rng = rng_for(21)
    fixed = lambda pair: pair.canonical_items[0]
    coin = lambda pair: pair.canonical_items[int(rng.integers(0, 2))]
    report = kappa_report(session, {
        "fixed": rate_all(session, "fixed", fixed),
        "coin": rate_all(session, "coin", coin),
    })
    assert abs(report["kappa"]["fixed|coin"]) <= 0.1


def test_kappa_report_known_agreement():
    session = make_pair_session(make_items(46), seed=6)
    rng = rng_for(31)
    base_choice = {p.pair_id: p.canonical_items[int(rng.integers(0, 2))] for p in session.pairs}
    p_agree = 0.85
    flip = {
        p.pair_id: rng.random() > p_agree for p in session.pairs
    }
    decide_a = lambda pair: base_choice[pair.pair_id]

    def decide_b(pair):
        chosen = base_choice[pair.pair_id]
        if flip[pair.pair_id]:
            a, b = pair.canonical_items
            return b if chosen == a else a
        return chosen

    report = kappa_report(session, {
        "a": rate_all(session, "a", decide_a),
        "b": rate_all(session, "b", decide_b),
    })
    # two symmetric categories: expected kappa ~ 2 * p_agree - 1
    assert report["kappa"]["a|b"] == pytest.approx(2 * p_agree - 1, abs=0.05)


def test_kappa_report_metric_pseudo_rater():
    session = make_pair_session(make_items(5), seed=8)
    values = {"item-0": 0.1, "item-1": 0.2, "item-2": 0.3, "item-3": 0.4, "item-4": 0.5}
    scores = {
        item: QualityScore(value=v, measure=DifferenceMeasure("l2")) for item, v in values.items()
    }
    decide = lambda pair: min(pair.canonical_items, key=lambda it: values[it])
    report = kappa_report(session, {"expert": rate_all(session, "expert", decide)},
                          metric_scores={"msm": scores})
    assert report["kappa"]["expert|msm"] == 1.0


# ---------------------------------------------------------------------------
# HTTP API


@pytest.fixture
def store(tmp_path):
    items = make_items(5, seed=100)
    session = make_pair_session(items, seed=9, session_id="s1")
    export_session(session, items, tmp_path)
    return tmp_path, session


def test_api_flow(store):
    store_dir, session = store
    client = TestClient(create_app(store_dir))

    listing = client.get("/api/sessions").json()
    assert listing == [{"id": "s1", "n_pairs": 10, "n_rated_by": {}}]

    rated = 0
    while True:
        nxt = client.get("/api/sessions/s1/next", params={"rater": "alice"}).json()
        if nxt.get("complete"):
            assert nxt["n_rated"] == 10
            break
        img = client.get(nxt["left_image_url"])
        assert img.status_code == 200
        assert img.headers["content-type"] == "image/png"
        resp = client.post("/api/sessions/s1/ratings", json={
            "pair_id": nxt["pair_id"], "rater": "alice", "choice": "left",
            "elapsed_ms": 42})
        assert resp.status_code == 200 and resp.json() == {"accepted": True}
        rated += 1
    assert rated == 10

    listing = client.get("/api/sessions").json()
    assert listing[0]["n_rated_by"] == {"alice": 10}


def test_api_duplicate_rejected(store):
    store_dir, session = store
    client = TestClient(create_app(store_dir))
    nxt = client.get("/api/sessions/s1/next", params={"rater": "bob"}).json()
    body = {"pair_id": nxt["pair_id"], "rater": "bob", "choice": "right", "elapsed_ms": 1}
    assert client.post("/api/sessions/s1/ratings", json=body).status_code == 200
    assert client.post("/api/sessions/s1/ratings", json=body).status_code == 409
    # store unchanged: exactly one line for bob
    lines = (store_dir / "ratings.jsonl").read_text().strip().splitlines()
    assert sum(1 for ln in lines if json.loads(ln)["rater"] == "bob") == 1


def test_api_restart_preserves_ratings(store):
    store_dir, session = store
    client = TestClient(create_app(store_dir))
    nxt = client.get("/api/sessions/s1/next", params={"rater": "carol"}).json()
    body = {"pair_id": nxt["pair_id"], "rater": "carol", "choice": "left", "elapsed_ms": 1}
    client.post("/api/sessions/s1/ratings", json=body)

    # simulate restart: new app over the same store
    client2 = TestClient(create_app(store_dir))
    assert client2.post("/api/sessions/s1/ratings", json=body).status_code == 409
    listing = client2.get("/api/sessions").json()
    assert listing[0]["n_rated_by"] == {"carol": 1}


def test_api_payloads_never_leak_provenance(store):
    store_dir, session = store
    client = TestClient(create_app(store_dir))
    blobs = [client.get("/api/sessions").text]
    for pair in session.pairs:
        blobs.append(client.get("/api/sessions/s1/next", params={"rater": "dave"}).text)
        client.post("/api/sessions/s1/ratings", json={
            "pair_id": pair.pair_id, "rater": "dave", "choice": "left", "elapsed_ms": 1})
    blobs.append(client.get("/api/sessions/s1/next", params={"rater": "dave"}).text)
    for blob in blobs:
        low = blob.lower()
        for token in PROVENANCE_TOKENS + ["item-"]:
            assert token not in low


def test_api_report_endpoint(store):
    store_dir, session = store
    client = TestClient(create_app(store_dir))
    for rater in ("r1", "r2"):
        while True:
            nxt = client.get("/api/sessions/s1/next", params={"rater": rater}).json()
            if nxt.get("complete"):
                break
            client.post("/api/sessions/s1/ratings", json={
                "pair_id": nxt["pair_id"], "rater": rater, "choice": "left", "elapsed_ms": 1})
    report = client.get("/api/sessions/s1/report").json()
    assert report["kappa"]["r1|r2"] == 1.0


def test_rating_store_replay(tmp_path):
    path = tmp_path / "ratings.jsonl"
    store = RatingStore(str(path))
    rec = RatingRecord(session_id="s", pair_id="p1", rater="r", choice="left",
                       left_item="a", right_item="b", elapsed_ms=5, timestamp="t")
    store.add(rec)
    with pytest.raises(KeyError):
        store.add(rec)
    replay = RatingStore(str(path))
    assert replay.has("s", "r", "p1")


def test_server_hosts_ui_bundle_when_given(store):
    store_dir, _ = store
    ui_dir = pathlib.Path(__file__).resolve().parents[1] / "frontend"
    if not (ui_dir / "dist" / "main.js").exists():
        pytest.skip("UI bundle not built")
    client = TestClient(create_app(store_dir, ui_dir=str(ui_dir)))
    index = client.get("/")
    assert index.status_code == 200
    assert "<div id=\"app\">" in index.text
    js = client.get("/dist/main.js")
    assert js.status_code == 200
    assert "RaterController" in js.text
