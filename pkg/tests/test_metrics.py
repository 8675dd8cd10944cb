import itertools

import numpy as np
import pytest

from fusionsim.geometry import WORLD, ObjectState, Pose
from fusionsim.metrics import (
    FrameRow,
    PairingError,
    RunRecord,
    TruthSet,
    build_truth_set,
    increment_frames,
    increment_metrics,
    match_truth,
    summarize_run,
    visibility_matrix,
)
from fusionsim.scenario import GroundTruthFrame, ScenarioConfig, SensorModel


def make_object(x, y):
    return ObjectState(position=[x, y, 0.0], velocity=[0, 0, 0], extent=[4.5, 1.8, 1.5],
                       frame=WORLD)


def truth_set(points):
    return TruthSet(
        reference_agent="ego", timestamp=0.0, objects=tuple(make_object(*p) for p in points)
    )


def positions(points):
    return np.array([[x, y, 0.0] for x, y in points])


def test_exact_estimates_all_match():
    points = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    truth = truth_set(points)
    outcome = match_truth(positions(points), truth)
    assert (outcome.tp, outcome.fp, outcome.fn) == (3, 0, 0)
    assert outcome.tp + outcome.fn == len(truth.objects)


def test_empty_estimates_all_fn():
    truth = truth_set([(0.0, 0.0), (5.0, 5.0)])
    outcome = match_truth(np.zeros((0, 3)), truth)
    assert (outcome.tp, outcome.fp, outcome.fn) == (0, 0, 2)


def test_matches_exhaustive_assignment_oracle():
    rng = np.random.default_rng(21)
    for _ in range(20):
        truth_pts = rng.uniform(-30, 30, size=(5, 2))
        est = np.vstack([truth_pts + rng.uniform(-1.0, 1.0, size=(5, 2)),
                         rng.uniform(-30, 30, size=(1, 2))])
        truth = truth_set([tuple(p) for p in truth_pts])
        outcome = match_truth(np.column_stack([est, np.zeros(6)]), truth, radius=2.0)

        # oracle: max-cardinality min-cost one-to-one matching within the gate
        best = None
        for k in range(5, -1, -1):
            for rows in itertools.combinations(range(5), k):
                for cols in itertools.permutations(range(6), k):
                    pairs = list(zip(rows, cols))
                    dists = [np.linalg.norm(truth_pts[i] - est[j]) for i, j in pairs]
                    if any(d > 2.0 for d in dists):
                        continue
                    total = sum(dists)
                    if best is None or (k, -total) > (best[0], -best[1]):
                        if best is None or k > best[0] or total < best[1]:
                            best = (k, total)
            if best is not None and best[0] == k:
                break
        assert outcome.tp == best[0]
        assert outcome.fn == 5 - best[0]
        assert outcome.fp == 6 - best[0]


def test_counting_identities():
    rng = np.random.default_rng(4)
    for _ in range(20):
        truth_pts = [tuple(p) for p in rng.uniform(-20, 20, size=(6, 2))]
        est_pts = rng.uniform(-20, 20, size=(8, 3))
        truth = truth_set(truth_pts)
        outcome = match_truth(est_pts, truth)
        assert outcome.tp + outcome.fn == len(truth.objects)
        assert outcome.tp + outcome.fp == len(est_pts)


def test_unevaluated_estimates_not_counted_as_fp():
    truth = truth_set([(0.0, 0.0)])
    est = positions([(0.0, 0.0), (100.0, 100.0)])
    outcome = match_truth(est, truth, reference_xy=np.zeros(2), threshold=50.0)
    assert (outcome.tp, outcome.fp, outcome.fn) == (1, 0, 0)
    assert outcome.unevaluated == 1


def test_truth_set_requires_visibility_and_distance():
    cfg = ScenarioConfig(
        seed=0,
        n_infrastructure=0,
        object_count=0,
        ego_sensor=SensorModel(max_range=30.0, detection_prob=1.0, position_noise_std=0.0,
                               occlusion_enabled=False),
    )
    objects = (make_object(10.0, 0.0), make_object(45.0, 0.0), make_object(200.0, 0.0))
    frame = GroundTruthFrame(
        timestamp=0.0,
        objects=objects,
        agent_poses={"ego": Pose(position=[0, 0, 1.7], frame=WORLD)},
    )
    truth = build_truth_set(frame, "ego", cfg, threshold=50.0)
    # 10 m object: visible and near. 45 m object: near but beyond sensor range
    # of every agent, so not visible to anyone. 200 m object: too far away.
    assert len(truth.objects) == 1
    assert truth.objects[0].position[0] == 10.0


# ------------------------------------------------------------- increments


def record_from_counts(counts_list, seed=1, coordinated=False, n_adv=0, compromised=()):
    rows = tuple(
        FrameRow(frame=k, t=0.1 * k, counts=c) for k, c in enumerate(counts_list)
    )
    return RunRecord(
        seed=seed,
        coordinated=coordinated,
        n_adversaries=n_adv,
        compromised=tuple(compromised),
        agents=("ego",),
        rows=rows,
    )


def base_counts(cc_fp=0, cc_fn=0, cc_tp=5, ego_fp=0, ego_fn=2, ego_tp=3):
    return {
        "truth_ego": cc_tp + cc_fn,
        "cc_fp": cc_fp, "cc_fn": cc_fn, "cc_tp": cc_tp,
        "ego_fp": ego_fp, "ego_fn": ego_fn, "ego_tp": ego_tp,
    }


def test_identical_runs_give_zero_increments():
    counts = [base_counts() for _ in range(10)]
    a = record_from_counts(counts)
    b = record_from_counts(counts)
    record = increment_metrics(a, b)
    assert record.metrics["ERCCFPIoB"] == (0.0, 0.0)
    assert record.metrics["ERCCFNIoB"] == (0.0, 0.0)


def test_scripted_attack_with_known_outcome():
    # attack adds exactly 2 persistent confirmed fakes and removes nothing
    baseline = record_from_counts([base_counts() for _ in range(20)])
    attacked = record_from_counts(
        [base_counts(cc_fp=2) for _ in range(20)], n_adv=1, compromised=("infra:0",)
    )
    record = increment_metrics(attacked, baseline)
    assert record.metrics["ERCCFPIoB"] == (2.0, 0.0)
    assert record.metrics["ERCCFNIoB"] == (0.0, 0.0)


def test_mirror_identity_tp_fn():
    # truth set fixed: tp + fn = |truth| in both runs implies TP and FN
    # increments mirror with opposite sign, frame by frame
    rng = np.random.default_rng(3)
    n_truth = 8
    base_rows, att_rows = [], []
    for _ in range(30):
        fn_b = int(rng.integers(0, n_truth + 1))
        fn_a = int(rng.integers(0, n_truth + 1))
        base_rows.append(base_counts(cc_fn=fn_b, cc_tp=n_truth - fn_b))
        att_rows.append(base_counts(cc_fn=fn_a, cc_tp=n_truth - fn_a))
    series = increment_frames(
        record_from_counts(att_rows), record_from_counts(base_rows)
    )
    assert np.array_equal(series["ERCCTPIoB"], -series["ERCCFNIoB"])


def test_pairing_error_on_seed_mismatch():
    a = record_from_counts([base_counts()], seed=1)
    b = record_from_counts([base_counts()], seed=2)
    with pytest.raises(PairingError):
        increment_metrics(a, b)


def test_compromised_agent_series_present():
    counts_a = [dict(base_counts(), **{"pub_infra:0_fp": 4, "pub_infra:0_fn": 1})
                for _ in range(5)]
    counts_b = [dict(base_counts(), **{"pub_infra:0_fp": 1, "pub_infra:0_fn": 1})
                for _ in range(5)]
    attacked = record_from_counts(counts_a, n_adv=1, compromised=("infra:0",))
    baseline = record_from_counts(counts_b)
    record = increment_metrics(attacked, baseline)
    assert record.metrics["CAFPIoB_infra:0"] == (3.0, 0.0)
    assert record.metrics["CAFNIoB_infra:0"] == (0.0, 0.0)


def test_summarize_run_ioe_values():
    counts = [base_counts(cc_fn=1, ego_fn=4) for _ in range(10)]
    summary = summarize_run(record_from_counts(counts))
    assert summary["ERCCFNIoE"][0] == -3.0
