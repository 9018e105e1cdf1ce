"""Acceptance suite: one test per release criterion, each printing a PASS
line with its measured numbers (run with `pytest tests/test_acceptance.py -v -s`).
Criteria with stated runtime budgets assert them with time guards.
"""

import itertools
import math
import time
from dataclasses import replace

import numpy as np

from starvox.appearance import (
    AppearanceConfig,
    BackgroundMode,
    GeneratorMode,
    GmmParams,
    render_foreground,
    sample_gmm_params,
    synthesize,
)
from starvox.augment import (
    AffineCfg,
    AugmentConfig,
    AxisBlurCfg,
    BiasFieldCfg,
    CropCfg,
    CutoutCfg,
    EdgeZeroPadCfg,
    ElasticCfg,
    GammaCfg,
    GibbsCfg,
    JointSample,
    KspaceSpikeCfg,
    NoiseCfg,
    STAGE_ORDER,
    SharpenCfg,
    TerminalCutoutCfg,
    affine_joint,
    apply_pipeline,
    crop_random,
    elastic_joint,
    flip_rot90_joint,
    noise_inject,
)
from starvox.config import GeneratorConfig
from starvox.labelgen import (
    LabelGenConfig,
    assign_labels,
    place_instances,
)
from starvox.metrics import instance_iou_matrix, match_at_threshold, score_curve
from starvox.noise import PerlinSpec
from starvox.pipeline import generate_dataset, generate_sample
from starvox.star import StarCandidate, decode_nms, encode, make_rays, poly_iou
from tests.conftest import make_ball_labels
from tests.test_labelgen import straight_line_oracle

RAYS96 = make_rays(96)


# --- 1. label-synthesis formula fidelity --------------------------------------------

def test_criterion_01_label_formula_fidelity():
    start = time.monotonic()
    # (a) noise_gain = 0 on a 64^3 canvas: exact discrete Euclidean balls
    cfg = LabelGenConfig(
        grid_shape=(2, 2, 2),
        base_radius=8.0,
        jitter_frac=0.1,
        scale_range=(0.8, 1.2),
        removal_frac_max=0.0,
        noise_gain=0.0,
        canvas_dims=(64, 64, 64),
        output_dims=(64, 64, 64),
    )
    seeds = place_instances(cfg, 21)
    labels = assign_labels(seeds, cfg, 22)
    grids = np.meshgrid(*(np.arange(64, dtype=np.float64),) * 3, indexing="ij")
    oracle = np.zeros((64, 64, 64), dtype=np.int32)
    best = np.full((64, 64, 64), np.inf)
    for i, s in enumerate(seeds):
        d = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, s.center)))
        win = (d < best) & (d < s.radius)
        oracle[win] = i + 1
        best = np.minimum(best, d)
    assert np.array_equal(labels, oracle)
    # every instance is literally the discrete ball of its seed (balls disjoint here)
    for i, s in enumerate(seeds, start=1):
        d = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, s.center)))
        assert np.array_equal(labels == i, d < s.radius)

    # (b) the 0.9 coefficient with a fixed Perlin field: exact agreement with a
    # straight-line reimplementation of d_i(x) = ||x - c_i|| + 0.9 r p(x)
    cfg9 = replace(cfg, noise_gain=0.9, perlin_spec=PerlinSpec(lattice_period=16.0, octaves=2, seed=4))
    seeds9 = place_instances(cfg9, 31)
    labels9 = assign_labels(seeds9, cfg9, 32)
    assert np.array_equal(labels9, straight_line_oracle(seeds9, cfg9, 32))

    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"\n[criterion 01] label-synthesis formula fidelity: PASS ({elapsed:.1f}s < 10s)")


# --- 2. instance-removal bound ---------------------------------------------------------

def test_criterion_02_removal_bound():
    start = time.monotonic()
    cfg = LabelGenConfig(grid_shape=(4, 4, 4), removal_frac_max=1.0 / 3.0)
    counts = [len(place_instances(cfg, seed)) for seed in range(1000)]
    assert min(counts) >= 43  # ceil(2/3 * 64)
    assert max(counts) <= 64
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    print(f"\n[criterion 02] removal bound over 1000 runs: PASS "
          f"(counts in [{min(counts)}, {max(counts)}], {elapsed:.1f}s < 5s)")


# --- 3. appearance contracts -------------------------------------------------------------

def test_criterion_03_appearance_contracts():
    cfg = AppearanceConfig()
    for seed in range(1000):
        params = sample_gmm_params(5, BackgroundMode.PLAIN_BRIGHT, cfg, seed)
        assert params.means[-1] < params.means[:-1].min()

    # per-instance sample means within 3 sigma / sqrt(N) on a > 10^4 voxel instance
    labels = make_ball_labels((48, 48, 48), [((24.0, 24.0, 24.0), 16.0)])
    n_vox = int((labels == 1).sum())
    assert n_vox >= 10_000
    mu, sigma = 0.55, 0.08
    params = GmmParams(np.array([mu, 0.1]), np.array([sigma, 0.0]))
    rendered = render_foreground(labels, params, 17)
    assert abs(float(rendered[labels == 1].mean()) - mu) < 3 * sigma / math.sqrt(n_vox)

    two = make_ball_labels((32, 32, 32), [((10.0,) * 3, 6.0), ((22.0,) * 3, 6.0)])
    for mode in GeneratorMode:
        for seed in range(3):
            img, _ = synthesize(two, mode, cfg, seed)
            assert img.min() >= 0.0 and img.max() <= 1.0
    print("\n[criterion 03] appearance contracts (ordering, CLT means, [0,1] range): PASS")


# --- 4. augmentation identity and determinism ----------------------------------------------

def _all_off():
    cfg = AugmentConfig()
    for name in STAGE_ORDER:
        setattr(cfg, name, replace(getattr(cfg, name), p=0.0))
    return cfg


def test_criterion_04_identity_and_determinism(tmp_path):
    rng = np.random.default_rng(3)
    s = JointSample(
        rng.random((48, 48, 48)).astype(np.float32),
        rng.integers(0, 5, (48, 48, 48)).astype(np.int32),
    )

    # probability 0: every stage is a bit-exact identity
    for name in STAGE_ORDER:
        cfg = _all_off()
        out = apply_pipeline(s, cfg, 5)
        assert np.array_equal(out.image, s.image), name
        assert np.array_equal(out.labels, s.labels), name

    # degenerate parameters at probability 1: bit-exact identity per stage
    degenerate = {
        "crop": CropCfg(p=1.0, target=(48, 48, 48)),
        "affine": AffineCfg(p=1.0, max_translate_frac=0.0, max_rotate_deg=0.0,
                            scale_range=(1.0, 1.0), max_shear=0.0),
        "bias_field": BiasFieldCfg(p=1.0, coeff=0.0),
        "kspace_spike": KspaceSpikeCfg(p=1.0, max_spikes=0),
        "gibbs": GibbsCfg(p=1.0, cutoff_range=(1.0, 1.0)),
        "sharpen": SharpenCfg(p=1.0, alpha_range=(0.0, 0.0)),
        "gamma": GammaCfg(p=1.0, log_gamma_range=(0.0, 0.0)),
        "cutout": CutoutCfg(p=1.0, max_boxes=0),
        "axis_blur": AxisBlurCfg(p=1.0, sigma_range=(0.0, 0.0)),
        "elastic": ElasticCfg(p=1.0, max_disp=0.0),
        "edge_zero_pad": EdgeZeroPadCfg(p=1.0, max_width_frac=0.0),
        "terminal_cutout": TerminalCutoutCfg(p=1.0, max_boxes=0),
        "noise": NoiseCfg(p=1.0, families=("gaussian",), gaussian_sigma_range=(0.0, 0.0)),
    }
    for name, stage_cfg in degenerate.items():
        cfg = _all_off()
        setattr(cfg, name, stage_cfg)
        out = apply_pipeline(s, cfg, 7)
        assert np.array_equal(out.image, s.image), name
        assert np.array_equal(out.labels, s.labels), name

    # full pipeline golden digests: two runs and worker counts {1, 8}
    base = GeneratorConfig()
    base = replace(base, n_samples=2, master_seed=99)
    man_a = generate_dataset(replace(base, workers=1), out_dir=tmp_path / "a")
    man_b = generate_dataset(replace(base, workers=1), out_dir=tmp_path / "b")
    man_c = generate_dataset(replace(base, workers=8), out_dir=tmp_path / "c")
    dig = lambda m: [r["digests"] for r in m["samples"]]
    assert dig(man_a) == dig(man_b) == dig(man_c)
    print("\n[criterion 04] stage identities bit-exact; golden digests stable "
          "across 2 runs and workers {1,8}: PASS")


# --- 5. joint-transform alignment -------------------------------------------------------

def test_criterion_05_joint_alignment():
    def dice(a, b):
        return 2 * np.count_nonzero(a & b) / max(np.count_nonzero(a) + np.count_nonzero(b), 1)

    labels = make_ball_labels((48, 48, 48), [((23.5, 23.5, 23.5), 13.0)])
    s = JointSample((labels > 0).astype(np.float32), labels)

    for seed in range(5):
        out = affine_joint(s, AffineCfg(), seed)
        assert dice(out.image > 0.5, out.labels > 0) > 0.95
        out = elastic_joint(s, ElasticCfg(control_spacing=12, max_disp=4.0), seed)
        assert dice(out.image > 0.5, out.labels > 0) > 0.95
        out = flip_rot90_joint(s, seed)
        assert dice(out.image > 0.5, out.labels > 0) == 1.0
        out = crop_random(s, (40, 40, 40), seed)
        assert dice(out.image > 0.5, out.labels > 0) == 1.0

    # image-only stages leave the label array bit-identical
    rng = np.random.default_rng(0)
    noisy = JointSample(
        rng.random((40, 40, 40)).astype(np.float32),
        rng.integers(0, 4, (40, 40, 40)).astype(np.int32),
    )
    for name in ("bias_field", "kspace_spike", "gibbs", "sharpen", "gamma",
                 "cutout", "axis_blur", "noise"):
        cfg = _all_off()
        setattr(cfg, name, replace(getattr(AugmentConfig(), name), p=1.0))
        out = apply_pipeline(noisy, cfg, 13)
        assert np.array_equal(out.labels, noisy.labels), name
    print("\n[criterion 05] joint alignment Dice > 0.95; image-only stages "
          "leave labels bit-identical: PASS")


# --- 6. noise masking ------------------------------------------------------------------

def test_criterion_06_noise_masking():
    rng = np.random.default_rng(12)
    for trial in range(100):
        img = rng.random((16, 16, 16)).astype(np.float32)
        img[img < rng.uniform(0.2, 0.6)] = 0.0
        family = ("gaussian", "poisson", "speckle")[trial % 3]
        out = noise_inject(img, NoiseCfg(families=(family,)), trial)
        assert np.all(out[img == 0.0] == 0.0)
        assert out.min() >= 0.0 and out.max() <= 1.0
    print("\n[criterion 06] noise masking (exact zeros preserved, 100 trials x 3 families): PASS")


# --- 7. star-convex round trip -----------------------------------------------------------

def _ball_phantom(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    balls = []
    tries = 0
    while len(balls) < n and tries < 200:
        tries += 1
        r = rng.uniform(6.0, 14.0)
        c = rng.uniform(r + 2.0, 64 - r - 3.0, size=3)
        if all(np.linalg.norm(c - c2) > r + r2 + 2.0 for c2, r2 in balls):
            balls.append((c, r))
    return make_ball_labels((64, 64, 64), [(tuple(c), r) for c, r in balls]), len(balls)


def test_criterion_07_star_roundtrip():
    start = time.monotonic()
    exact = 0
    ious = []
    for seed in range(100):
        gt, n = _ball_phantom(seed)
        enc = encode(gt, RAYS96)
        cands, pred = decode_nms(enc, RAYS96, prob_thresh=0.6, nms_thresh=0.3, grid_step=2)
        if len(cands) == n:
            exact += 1
        if n and pred.max():
            ious.extend(instance_iou_matrix(pred, gt).max(axis=0))
    elapsed = time.monotonic() - start
    mean_iou = float(np.mean(ious))
    assert exact >= 95
    assert mean_iou >= 0.85
    assert elapsed < 120.0
    print(f"\n[criterion 07] star round trip: PASS (count exact {exact}/100, "
          f"mean IoU {mean_iou:.3f}, {elapsed:.0f}s < 120s)")


# --- 8. polyhedron IoU oracle ---------------------------------------------------------------

def test_criterion_08_poly_iou_oracle():
    r = 10.0

    def analytic(d):
        if d >= 2 * r:
            return 0.0
        v_lens = math.pi * (4 * r + d) * (2 * r - d) ** 2 / 12.0
        v_sphere = 4.0 / 3.0 * math.pi * r**3
        return v_lens / (2 * v_sphere - v_lens)

    worst = 0.0
    for k in (0.0, 1.0, 2.0, 3.0):
        d = k * r
        a = StarCandidate(np.zeros(3), np.full(96, r, np.float32), 1.0)
        b = StarCandidate(np.array([d, 0.0, 0.0]), np.full(96, r, np.float32), 1.0)
        err = abs(poly_iou(a, b, RAYS96) - analytic(d))
        worst = max(worst, err)
        assert err <= 0.05, (k, err)
    print(f"\n[criterion 08] sphere-overlap IoU oracle at offsets (0, r, 2r, 3r): "
          f"PASS (max |err| {worst:.4f} <= 0.05)")


# --- 9. evaluation oracle ----------------------------------------------------------------

def _match_brute_force(iou, tau):
    n_p, n_g = iou.shape
    best = 0
    smaller, larger = (n_p, n_g) if n_p <= n_g else (n_g, n_p)
    for cols in itertools.permutations(range(larger), smaller):
        tp = sum(
            1
            for i, j in enumerate(cols)
            if (iou[i, j] if n_p <= n_g else iou[j, i]) > tau
        )
        best = max(best, tp)
    return best


def test_criterion_09_evaluation_oracle():
    rng = np.random.default_rng(77)
    for _ in range(100):
        dims = tuple(rng.integers(2, 9, 3))
        pred = rng.integers(0, 5, dims).astype(np.int32)
        gt = rng.integers(0, 5, dims).astype(np.int32)
        iou = instance_iou_matrix(pred, gt)
        tau = float(rng.choice([0.1, 0.3, 0.5, 0.7, 0.9]))
        tp, _, _ = match_at_threshold(iou, tau)
        assert tp == _match_brute_force(iou, tau)

    perfect = rng.integers(0, 5, (8, 8, 8)).astype(np.int32)
    report = score_curve(perfect, perfect)
    assert all(t.accuracy == 1.0 for t in report.per_threshold)

    pred = np.zeros((20, 2, 2), dtype=np.int32)
    gt = np.zeros((20, 2, 2), dtype=np.int32)
    pred[0:16] = 1
    gt[5:20] = 1  # IoU exactly 0.55
    report = score_curve(pred, gt)
    by_tau = {round(t.tau, 1): t.accuracy for t in report.per_threshold}
    assert by_tau[0.5] == 1.0 and by_tau[0.6] == 0.0
    print("\n[criterion 09] optimal matching == exhaustive enumeration (100 maps); "
          "0.55-IoU case flips between tau 0.5 and 0.6: PASS")


# --- 10. throughput -------------------------------------------------------------------------

def test_criterion_10_throughput():
    # target: 1000 fully augmented 64^3 samples in < 10 min on an 8-core
    # desktop, i.e. a per-sample budget of 4.8 core-seconds; measured on one
    # core and scaled (samples are embarrassingly parallel).
    cfg = GeneratorConfig()
    generate_sample(cfg, 0)  # warm JIT caches outside the timed window
    n = 12
    start = time.monotonic()
    for i in range(1, n + 1):
        generate_sample(cfg, i)
    per_sample = (time.monotonic() - start) / n
    est_8core_min = per_sample * 1000 / 8 / 60
    assert per_sample <= 4.8, f"{per_sample:.2f} core-s/sample exceeds 4.8"
    print(f"\n[criterion 10] throughput: PASS ({per_sample:.2f} core-s/sample; "
          f"~{est_8core_min:.1f} min per 1000 samples on 8 cores < 10 min)")
