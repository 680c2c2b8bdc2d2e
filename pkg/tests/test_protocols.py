import pytest

from odnmr import (
    OpticalPulse,
    ProtocolOptions,
    RfPulse,
    SequenceError,
    Wait,
    build_cpmg,
    build_erase,
    build_hahn_echo,
    build_odnmr_scan,
    build_pit_preparation,
    build_rabi,
    build_spin_holeburn,
    pi_duration_us,
    rabi_rate_khz,
)

BARE = ProtocolOptions(bare=True)


def test_rabi_rate_and_pi_duration():
    assert rabi_rate_khz(92.0) == pytest.approx(1.48 * 92.0 ** 0.5)
    # Omega_R = 14 kHz <-> pi pulse 1/(2*14 kHz) = 35.714 us
    p14 = (14.0 / 1.48) ** 2
    assert pi_duration_us(p14) == pytest.approx(35.714, abs=0.01)
    assert pi_duration_us(p14) / 2 == pytest.approx(17.857, abs=0.01)


def test_pit_preparation_structure():
    seq = build_pit_preparation()
    assert len(seq.events) == 20
    for ev in seq.events:
        assert isinstance(ev, OpticalPulse)
        assert ev.role == "burn"
        assert ev.detuning_stop - ev.detuning_start == pytest.approx(10.0)
        assert ev.duration == pytest.approx(300e3)
    assert seq.total_duration == pytest.approx(6e6)  # 6 s


def test_erase_structure():
    seq = build_erase()
    assert len(seq.events) == 20
    for ev in seq.events:
        assert ev.role == "erase"
        assert ev.detuning_stop - ev.detuning_start == pytest.approx(100.0)
    assert seq.total_duration == pytest.approx(6e6)


def test_rabi_wrapping_and_bare():
    seq = build_rabi(36.0, 21.475, 92.0)
    kinds = [type(e).__name__ for e in seq.events]
    assert kinds[:20] == ["OpticalPulse"] * 20  # pit prep first
    assert kinds[-20:] == ["OpticalPulse"] * 20  # erase last
    rf = [e for e in seq.events if isinstance(e, RfPulse)]
    assert len(rf) == 1 and rf[0].duration == 36.0
    probes = [e for e in seq.events if isinstance(e, OpticalPulse) and e.role == "probe"]
    assert len(probes) == 2  # reference sweep + center probe
    assert probes[0].detuning_stop - probes[0].detuning_start == pytest.approx(15.0)

    bare = build_rabi(36.0, 21.475, 92.0, BARE)
    assert len(bare.events) == 1


def test_rabi_minimal_duration_and_sweep_structure():
    assert build_rabi(0.001, 21.475, 92.0, BARE).events[0].duration == 0.001
    with pytest.raises(SequenceError):
        build_rabi(0.0, 21.475, 92.0)
    seqs = [build_rabi(float(t), 21.475, 92.0, BARE) for t in range(1, 201)]
    assert len(seqs) == 200
    for t, s in zip(range(1, 201), seqs):
        assert s.events[0].duration == float(t)
        assert s.events[0].frequency == 21.475  # only the duration differs


def test_hahn_echo_structure():
    p14 = (14.0 / 1.48) ** 2
    seq = build_hahn_echo(200.0, 21.475, p14, 0.0, BARE)
    ev = seq.events
    assert [type(e).__name__ for e in ev] == [
        "RfPulse", "Wait", "RfPulse", "Wait", "RfPulse"]
    assert ev[0].duration == pytest.approx(35.714 / 2, abs=0.01)
    assert ev[2].duration == pytest.approx(35.714, abs=0.01)
    assert ev[1].duration == ev[3].duration == 200.0
    assert ev[2].phase == 0.0  # same-axis default

    flipped = build_hahn_echo(200.0, 21.475, p14, 180.0, BARE)
    assert flipped.events[:-1] == seq.events[:-1]
    assert flipped.events[-1].phase == 180.0


def test_hahn_echo_tau_too_short():
    with pytest.raises(SequenceError):
        build_hahn_echo(1.0, 21.475, 92.0, 0.0)  # 36 us pi pulse


def test_cpmg_structure():
    seq = build_cpmg(8, 200.0, 21.475, 92.0, 0.0, BARE)
    pis = [e for e in seq.events if isinstance(e, RfPulse)][1:-1]
    assert len(pis) == 8
    assert all(p.phase == 90.0 for p in pis)
    waits = [e for e in seq.events if isinstance(e, Wait)]
    assert sum(w.duration for w in waits) == pytest.approx(8 * 200.0)

    one = build_cpmg(1, 200.0, 21.475, 92.0, 0.0, BARE)
    assert [type(e).__name__ for e in one.events] == [
        "RfPulse", "Wait", "RfPulse", "Wait", "RfPulse"]
    assert one.events[1].duration == pytest.approx(100.0)
    assert one.events[2].phase == 90.0

    with pytest.raises(SequenceError):
        build_cpmg(0, 200.0, 21.475, 92.0, 0.0)
    with pytest.raises(SequenceError):
        build_cpmg(2, 60.0, 21.475, 92.0, 0.0)  # tau/2 < pi duration


def test_odnmr_scan_builder():
    f_list = [21.0 + 0.05 * i for i in range(21)]
    seqs = build_odnmr_scan(f_list, 92.0)
    assert len(seqs) == 21
    for f, s in zip(f_list, seqs):
        rf = [e for e in s.events if isinstance(e, RfPulse)]
        assert len(rf) == 1
        assert rf[0].frequency == f
        assert rf[0].duration == 1000.0  # 1 ms default
    assert len(build_odnmr_scan([21.475], 92.0)) == 1
    with pytest.raises(SequenceError):
        build_odnmr_scan([], 92.0)


def test_spin_holeburn_builder():
    seqs = build_spin_holeburn(21.475, 92.0, [21.45, 21.475, 21.50], opt=BARE)
    for s in seqs:
        rf = [e for e in s.events if isinstance(e, RfPulse)]
        assert len(rf) == 2
        assert rf[0].frequency == 21.475
        assert rf[0].duration == pytest.approx(pi_duration_us(92.0))
    # zero burn power: plain ODNMR scan structure
    seqs0 = build_spin_holeburn(21.475, 0.0, [21.45, 21.50], opt=BARE)
    for s in seqs0:
        assert len([e for e in s.events if isinstance(e, RfPulse)]) == 1
