import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zcoll.pipeline import (INPRIMITIVE_THRESHOLD, STAGGER_DEPTH, TIMELINE_COLUMNS, BatchPlan,
                            OverlapMode, RingStep, exposed_codec_time, inprimitive_enabled,
                            run, run_pipelined, run_serialized, slot_frame_plan,
                            stagger_chunks, write_timeline_csv)
from zcoll.transport import NetworkModel

US = 1e-6
NET = NetworkModel(latency=0.0, bandwidth=1e9)  # 1 byte per ns


def batch(enc=0.0, link=0.0, dec=0.0, red=0.0, **kw):
    n = int(round(link * 1e9))
    return BatchPlan(n, n, enc, dec, red, **kw)


def test_two_batch_closed_form():
    d = 50 * US
    plan = [batch(100 * US, 400 * US, d) for _ in range(2)]
    pipe = run_pipelined(plan, NET).check()
    ser = run_serialized(plan, NET).check()
    assert pipe.makespan == pytest.approx(100 * US + 400 * US + 400 * US + d)
    assert ser.makespan == pytest.approx(2 * (100 * US + 400 * US + d))
    r0, r1 = pipe.records
    assert r1.enc_start < r0.link_done  # encode of batch 1 overlaps batch 0 in flight
    assert r0.dec_start < r1.link_done  # decode of batch 0 overlaps batch 1 in flight


def test_single_batch_no_overlap():
    plan = [batch(30 * US, 200 * US, 20 * US, 5 * US)]
    assert run_pipelined(plan, NET).makespan == pytest.approx(run_serialized(plan, NET).makespan)


def test_serialized_is_sum_of_stages():
    net = NetworkModel(latency=3 * US, bandwidth=1e9)
    plan = [batch(10 * US, 100 * US, 7 * US, 2 * US), batch(20 * US, 50 * US, 1 * US, 0)]
    total = sum(b.enc_time + net.transfer_time(b.total_bytes) + b.dec_time + b.red_time
                for b in plan)
    assert run_serialized(plan, net).makespan == pytest.approx(total)


def test_empty_batch_has_no_compute():
    tl = run_serialized([BatchPlan(0, 0)], NET)
    assert tl.codec_time == 0.0


def test_dependency_respected():
    plan = [batch(10 * US, 100 * US, 10 * US, 30 * US), batch(10 * US, 100 * US, dep=0)]
    tl = run_pipelined(plan, NET).check()
    assert tl.records[1].enc_start >= tl.records[0].red_end


plans = st.lists(
    st.tuples(st.floats(0, 500), st.floats(1, 500), st.floats(0, 500), st.floats(0, 50)),
    min_size=1, max_size=24)


@given(plans, st.sampled_from([1, 2, 4, 8]), st.floats(0, 20))
def test_random_schedules(stages, slots, latency):
    net = NetworkModel(latency=latency * US, bandwidth=1e9)
    plan = [batch(e * US, l * US, d * US, r * US) for e, l, d, r in stages]
    pipe = run_pipelined(plan, net, slots_per_frame=slots).check()
    ser = run_serialized(plan, net).check()
    assert pipe.makespan <= ser.makespan * (1 + 1e-12)
    for i in range(2, len(plan)):  # the same bank is never rewritten while in flight
        assert pipe.records[i].enc_start >= pipe.records[i - 2].link_done
    done = [r.link_done for r in pipe.records]
    assert done == sorted(done)


def test_overlap_gain_strict_for_two_or_more():
    plan = [batch(50 * US, 200 * US, 50 * US) for _ in range(4)]
    assert run_pipelined(plan, NET).makespan < run_serialized(plan, NET).makespan


def test_exposed_codec_time_small_when_link_bound():
    plan = [batch(20 * US, 400 * US, 20 * US) for _ in range(64)]
    codec = sum(b.enc_time + b.dec_time for b in plan)
    exposed = exposed_codec_time(plan, NET)
    assert 0 <= exposed <= 0.25 * codec
    assert exposed_codec_time(plan, NET, OverlapMode.SERIALIZED) == pytest.approx(codec)


def test_timeline_csv(tmp_path):
    tl = run([batch(1 * US, 10 * US, 1 * US, step=s) for s in range(3)], NET)
    path = tmp_path / "tl.csv"
    write_timeline_csv(tl, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == TIMELINE_COLUMNS and len(rows) == 4
    assert {"enc_start", "enc_end", "enqueue", "link_done", "dec_start", "dec_end"} <= set(rows[0])


# -- in-primitive stagger -----------------------------------------------------

def _unit_step(n=3, size=INPRIMITIVE_THRESHOLD):
    one = (1.0,) * n
    return RingStep((0.0,) * n, one, one, one, one, size)


def test_stagger_three_chunk_oracle():
    # sequential: 3 chunks x 4 unit stages; staggered: a 4-stage pipeline over 3 items
    assert stagger_chunks(_unit_step(), staggered=False).makespan == 12.0
    assert stagger_chunks(_unit_step(), staggered=True).makespan == 6.0


def test_stagger_concurrency_window():
    sched = stagger_chunks(_unit_step(6))
    iv = sched.intervals
    # at t in [2, 3): decode(2), reduce(1), encode(0) run together
    assert iv[2]["decode"] == (2.0, 3.0)
    assert iv[1]["reduce"] == (2.0, 3.0)
    assert iv[0]["encode"] == (2.0, 3.0)
    for k in range(STAGGER_DEPTH, 6):
        assert iv[k]["decode"][0] >= iv[k - STAGGER_DEPTH]["encode"][1]


@given(st.lists(st.tuples(*[st.floats(0, 10)] * 5), min_size=1, max_size=10), st.booleans())
def test_stagger_happens_before(chunks, staggered):
    arr, dec, red, enc, snd = (tuple(c[i] for c in chunks) for i in range(5))
    step = RingStep(tuple(sorted(arr)), dec, red, enc, snd)
    sched = stagger_chunks(step, staggered)
    for iv in sched.intervals:
        order = [iv["recv"], iv["decode"], iv["reduce"], iv["encode"], iv["send"]]
        for a, b in zip(order, order[1:]):
            assert a[1] <= b[0] + 1e-12
    seq = stagger_chunks(step, staggered=False)
    assert sched.makespan <= seq.makespan + 1e-9


def test_stagger_gated_below_threshold():
    assert not inprimitive_enabled(INPRIMITIVE_THRESHOLD - 1)
    sched = stagger_chunks(_unit_step(size=1 << 20))
    assert sched.raw
    assert all(iv["decode"][0] == iv["decode"][1] for iv in sched.intervals)
    assert all(iv["encode"][0] == iv["encode"][1] for iv in sched.intervals)


def test_slot_frame_plan():
    plan, slots = slot_frame_plan(16 << 20, per_slot=True)
    assert slots == 1 and all(b.total_bytes <= 512 * 1024 for b in plan)
    plan8, slots8 = slot_frame_plan(16 << 20, per_slot=False)
    assert slots8 == 8 and sum(b.raw_bytes for b in plan8) == 16 << 20
