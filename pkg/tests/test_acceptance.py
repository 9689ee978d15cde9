"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line; the
terminal summary repeats them under "acceptance criteria"."""
import math
import time

import numpy as np
import pytest
import torch
import yaml
from oracles import LIF_TABLE, MICRO_W, cofactor_det, finite_difference_grad, relaxed_micro_loss
from test_trainer import bptt_micro_grad

from spikenas.cli import main
from spikenas.data import SyntheticSpec, make_synthetic
from spikenas.experiments import correlate
from spikenas.genotype import CellGenotype, Mode, deserialize_genotype, sample_genotype, serialize_genotype, validate_genotype
from spikenas.lif import LifConfig, LifState, lif_step
from spikenas.network import NetworkConfig, RunMode, build_network
from spikenas.scoring import collect_trace, sahd, score_both, score_candidate, score_logdet
from spikenas.search import CandidateRecord, SearchReport, random_search
from spikenas.trainer import SurrogateConfig, TrainConfig, evaluate, make_spike_fn, train

DESK = NetworkConfig(channels=16, timesteps=5, num_classes=4, input_dims=(3, 16, 16))
GRID = [round(0.1 * k, 1) for k in range(1, 10)]


def test_criterion_01_sahd_normalization(record_criterion):
    start = time.perf_counter()
    n_a, pairs = 10_000, 500
    alpha = 0.5 * n_a
    rng = np.random.default_rng(0)
    worst_sahd = worst_hd = 0.0
    for r_i in GRID:
        for r_j in GRID:
            a = rng.random((pairs, n_a)) >= r_i  # fraction r of zeros
            b = rng.random((pairs, n_a)) >= r_j
            d_sahd = np.mean([sahd(a[k], b[k]) for k in range(pairs)])
            d_hd = np.mean(np.count_nonzero(a != b, axis=1))
            expected = n_a * (r_i * (1 - r_j) + (1 - r_i) * r_j)
            worst_sahd = max(worst_sahd, abs(d_sahd - alpha) / alpha)
            worst_hd = max(worst_hd, abs(d_hd - expected) / expected)
    elapsed = time.perf_counter() - start
    ok = worst_sahd < 0.05 and worst_hd < 0.05 and elapsed < 60
    record_criterion(1, ok, f"max rel. dev. SAHD {worst_sahd:.2e}, HD {worst_hd:.2e}; {elapsed:.1f}s")


def test_criterion_02_lif_table(record_criterion):
    start = time.perf_counter()
    worst, spikes_ok = 0.0, True
    for u_prev, current, spike, u_next in LIF_TABLE:
        s, st = lif_step(LifState(torch.tensor([u_prev], dtype=torch.float64)),
                         torch.tensor([current], dtype=torch.float64), LifConfig(tau_m=4 / 3))
        spikes_ok &= s.item() == spike
        worst = max(worst, abs(st.membrane.item() - u_next))
    fires = sum(row[2] for row in LIF_TABLE)
    elapsed = time.perf_counter() - start
    ok = spikes_ok and worst <= 1e-6 and len(LIF_TABLE) >= 10 and fires >= 1 and elapsed < 1
    record_criterion(2, ok, f"{len(LIF_TABLE)} cases ({fires} fire-and-reset), max |du| {worst:.1e}")


def test_criterion_03_logdet_oracle(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, checked = 0.0, 0
    for n in range(1, 9):
        for _ in range(2 if n == 8 else 6):
            a = rng.standard_normal((n, n))
            k = a + a.T
            det = cofactor_det(k.tolist())
            if abs(det) <= 1e-6:
                continue
            s = score_logdet(k)
            rel = abs(s.sign * math.exp(s.value) - det) / abs(det)
            worst = max(worst, rel)
            checked += 1
    dup = rng.standard_normal((5, 5))
    dup = dup + dup.T
    dup[4], dup[:, 4] = dup[3], dup[:, 3]
    degenerate = [np.full((6, 6), 7.0), np.zeros((4, 4)), dup]
    sentinel = all(score_logdet(m).singular and score_logdet(m).value == -math.inf for m in degenerate)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and sentinel and elapsed < 1
    record_criterion(3, ok, f"{checked} matrices N<=8, max rel. err {worst:.1e}; degenerate -> -inf: {sentinel}; "
                            f"{elapsed:.2f}s")


def test_criterion_04_genotype_constraint(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    genos = [sample_genotype(rng, Mode.FORWARD_AND_BACKWARD) for _ in range(10_000)]
    violations = sum(len(validate_genotype(g)) for g in genos)
    bad_trips = 0
    for g in genos[:1000]:
        text = serialize_genotype(g)
        back = deserialize_genotype(text)
        bad_trips += back != g or serialize_genotype(back) != text
    elapsed = time.perf_counter() - start
    ok = violations == 0 and bad_trips == 0 and elapsed < 10
    record_criterion(4, ok, f"10000 sampled, {violations} bidirectional pairs; 1000 round trips, "
                            f"{bad_trips} mismatches; {elapsed:.1f}s")


def test_criterion_05_single_step_backward_neutral(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    cfg = NetworkConfig(channels=16, timesteps=1, num_classes=4, input_dims=(3, 16, 16))
    batch = make_synthetic(SyntheticSpec()).train.images[:16]
    mismatches, with_backward = 0, 0
    for k in range(100):
        g = sample_genotype(rng, Mode.FORWARD_AND_BACKWARD)
        with_backward += any(code != 0 for code in g.backward_codes())
        a = score_both(g, batch, cfg, k)
        b = score_both(g.forward_projection(), batch, cfg, k)
        mismatches += [(s.value, s.singular) for s in a] != [(s.value, s.singular) for s in b]
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 300
    record_criterion(5, ok, f"100 genotypes ({with_backward} with backward edges), {mismatches} mismatches; "
                            f"{elapsed:.1f}s")


TOY = {
    "dataset": {"synthetic": {"num_classes": 2, "samples_per_class": 16, "test_per_class": 4, "image_size": 8}},
    "network": {"channels": 4, "timesteps": 3, "voting": 2, "hidden": 16},
    "scoring": {"batch_size": 16},
}


def test_criterion_06_worker_invariance(tmp_path, record_criterion, capsys):
    start = time.perf_counter()
    cfg = tmp_path / "toy.yaml"
    cfg.write_text(yaml.safe_dump(TOY))
    outputs = []
    for workers in (1, 4, 8):
        out = tmp_path / f"w{workers}"
        code = main(["search", "--config", str(cfg), "--candidates", "50", "--seed", "6",
                     "--workers", str(workers), "--out", str(out)])
        assert code == 0
        (run,) = out.iterdir()
        files = {"report.tsv": (run / "report.tsv").read_bytes()}
        files.update({p.name: p.read_bytes() for p in sorted((run / "genotypes").iterdir())})
        outputs.append(files)
    capsys.readouterr()
    elapsed = time.perf_counter() - start
    same = outputs[0] == outputs[1] == outputs[2]
    ok = same and elapsed < 300
    record_criterion(6, ok, f"workers 1/4/8 byte-identical report + {len(outputs[0]) - 1} genotype files: {same}; "
                            f"{elapsed:.1f}s")


def test_criterion_07_desk_correlation(record_criterion):
    start = time.perf_counter()
    data = make_synthetic(SyntheticSpec(num_classes=4, samples_per_class=64, test_per_class=64,
                                        image_size=16, noise_std=1.0, contrast=0.3))
    tcfg = TrainConfig(lr=0.1, epochs=20, augment=False)
    rep = correlate(20, Mode.FORWARD_AND_BACKWARD, data, DESK, tcfg, SurrogateConfig(), 0, score_batch_size=16)
    nc, nd, p = rep.sign_test
    sahd_order = sorted(range(20), key=lambda k: -rep.records[k].score.sort_key())
    hd_order = sorted(range(20), key=lambda k: -rep.records[k].hd_score.sort_key())
    elapsed = time.perf_counter() - start
    tau, tau_hd = rep.tau_sahd, rep.tau_hd
    ok = tau is not None and tau > 0 and p < 0.1
    record_criterion(7, ok, f"tau(SAHD)={tau:.3f} (concordant {nc}, discordant {nd}, p={p:.3g}); "
                            f"recorded tau(HD)={tau_hd:.3f}, tau(SAHD)>=tau(HD): {tau >= tau_hd}; "
                            f"orders differ: {sahd_order != hd_order}; {elapsed / 60:.1f} min")


def test_criterion_08_training_sanity(record_criterion):
    start = time.perf_counter()
    data = make_synthetic(SyntheticSpec(num_classes=2, samples_per_class=64, test_per_class=64))
    cfg = NetworkConfig(channels=16, timesteps=5, num_classes=2, input_dims=(3, 16, 16))
    forward = CellGenotype.from_codes([3, 2, 3, 3, 2, 3])
    net, hist = train(build_network(forward, cfg, 0), data, TrainConfig(lr=0.1, epochs=30, augment=False), seed=0,
                      evaluate_each_epoch=False)
    acc = evaluate(net, data.test)

    backward = CellGenotype.from_codes([3, 3, 3, 0, 0, 3], [0, 0, 0, 3, 2, 0])
    bnet = build_network(backward, cfg, 0)
    bnet, bhist = train(bnet, data, TrainConfig(lr=0.1, epochs=5, augment=False), seed=0, evaluate_each_epoch=False)
    finite = all(math.isfinite(m.train_loss) for m in bhist)
    bnet.set_spike_fn(make_spike_fn(SurrogateConfig()))
    bnet.set_mode(RunMode.TRAIN)
    loss = torch.nn.functional.cross_entropy(bnet(data.train.images[:64]), data.train.labels[:64])
    loss.backward()
    grads = [p.grad for k, p in bnet.named_parameters() if "backward_ops" in k]
    flowing = any(g is not None and torch.count_nonzero(g) > 0 for g in grads)
    elapsed = time.perf_counter() - start
    ok = acc >= 0.9 and finite and flowing and elapsed < 600
    record_criterion(8, ok, f"forward-only test acc {acc:.3f} after 30 epochs; backward net finite loss: {finite}, "
                            f"backward-edge grads non-zero: {flowing}; {elapsed:.0f}s")


def test_criterion_09_micro_gradient(record_criterion):
    start = time.perf_counter()
    _, traj = relaxed_micro_loss(MICRO_W)
    active = bool(np.all(np.abs(traj - 1.0) < 0.5))
    fd, bp = finite_difference_grad(MICRO_W), bptt_micro_grad()
    rel = float(np.max(np.abs(bp - fd) / np.abs(fd)))
    elapsed = time.perf_counter() - start
    ok = active and rel <= 1e-4 and elapsed < 1
    record_criterion(9, ok, f"surrogate active throughout: {active}; max rel. err {rel:.1e}")


def test_criterion_10_degenerate_robustness(record_criterion):
    batch = make_synthetic(SyntheticSpec()).train.images[:16]
    z = score_candidate(CellGenotype.zeroize(), batch, DESK, 0)
    zero_ok = z.singular and z.value == -math.inf

    toy = NetworkConfig(channels=4, timesteps=3, num_classes=4, input_dims=(3, 16, 16), voting=2, hidden=16)
    report = random_search(40, Mode.FORWARD_AND_BACKWARD, batch, toy, 10)
    zrec = CandidateRecord(40, 0, CellGenotype.zeroize(), *score_both(CellGenotype.zeroize(), batch, toy, 0))
    ranked = SearchReport(report.records + [zrec]).records
    first_singular = next(i for i, r in enumerate(ranked) if r.score.singular)
    ordered = all(r.score.singular for r in ranked[first_singular:])
    silent = 0
    for r in ranked:
        trace = collect_trace(r.genotype, batch, toy, r.seed)
        if not any(bits.any() for l, _, bits in trace.blocks() if trace.layers[l] != "encoder"):
            silent += 1
            ordered &= r.score.singular
    ok = zero_ok and ordered and silent >= 1
    record_criterion(10, ok, f"all-Zeroize -> {z.value}; {silent} silent candidates, all ranked below "
                             f"{first_singular} finite scores: {ordered}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
