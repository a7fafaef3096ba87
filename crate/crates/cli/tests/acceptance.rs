//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=2,5` restricts the run.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cvnn_cli::{cmd_train, ExperimentConfig};
use cvnn_core::activations::Activation;
use cvnn_core::covering::{lemma1_cover_check, maurey_sparsify, MaureyInstance};
use cvnn_core::datasets::{idx_images_bytes, idx_labels_bytes, parse_idx_images, parse_idx_labels, IdxImages};
use cvnn_core::linalg::{oracle, PowerIteration};
use cvnn_core::network::{
    checkpoint_to_string, load_checkpoint, save_checkpoint, LayerSpec, LossKind, Network, Shape, Targets,
    ThresholdMode,
};
use cvnn_core::rng;
use cvnn_core::spectral::{
    bound_iid, bound_sequential, conv_spectral_norm, layer_matrix, pac_sample_size, rademacher_bound, BoundInputs,
};
use cvnn_core::stats::{correlate_trace, exact_p, spearman, EXACT_STATE_BUDGET};
use cvnn_core::CMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn spectral_norm_vs_dense_oracle() -> Outcome {
    let mut rng = rng::seeded(101);
    let opts = PowerIteration::default();
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let (r, c) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let a = CMatrix::random(r, c, &mut rng);
        let got = a.spectral_norm(&opts).value;
        let want = oracle::largest_singular_value(&a.real_embedding());
        worst = worst.max(rel(got, want));
    }
    outcome(worst <= 1e-8, format!("200 matrices, worst relative error {worst:.3e}"))
}

fn conv_norm_vs_lowering() -> Outcome {
    let opts = PowerIteration::default();
    let sizes = [1, 3, 5];
    let (mut worst, mut cases) = (0.0_f64, 0);
    for &kh in &sizes {
        for &kw in &sizes {
            for cin in 1..=2 {
                for cout in 1..=2 {
                    for (h, w) in [(kh.max(4), kw.max(7)), (12, 12)] {
                        let spec = LayerSpec::conv((kh, kw), cin, cout, None);
                        let seed = (kh * 1000 + kw * 100 + cin * 10 + cout + h) as u64;
                        let net = Network::new(Shape::new(cin, h, w), &[spec], ThresholdMode::Zero, seed)
                            .expect("valid conv");
                        let layer = &net.layers()[0];
                        let implicit = conv_spectral_norm(layer, &opts).expect("conv layer").value;
                        let lowered = layer_matrix(layer, usize::MAX).expect("small lowering");
                        let explicit = lowered.spectral_norm(&opts).value;
                        worst = worst.max(rel(implicit, explicit));
                        cases += 1;
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-8, format!("{cases} layers, worst relative error {worst:.3e}"))
}

fn lipschitz_suite() -> Outcome {
    let pairs = 100_000;
    let tanh = Activation::SplitTanh.lipschitz_probe(4.0, pairs, 1).expect("probe");
    let crelu = Activation::CReLU.lipschitz_probe(4.0, pairs, 2).expect("probe");
    let mut pass = tanh <= 1.0 + 1e-12 && crelu <= 1.0 + 1e-12 && crelu >= 0.99;
    let mut detail = format!("splittanh {tanh:.6}, crelu {crelu:.6}");
    for alpha in [1.0, 2.0, 5.0] {
        let amp = Activation::AmplitudeTanh.lipschitz_probe(alpha, pairs, 3).expect("probe");
        pass &= amp <= 2.0 * alpha + 1.0;
        detail.push_str(&format!(", amptanh(a={alpha}) {amp:.6} <= {}", 2.0 * alpha + 1.0));
    }
    outcome(pass, detail)
}

fn gradient_check() -> Outcome {
    let specs = [
        LayerSpec::dense(4, 3, Some(Activation::SplitTanh)),
        LayerSpec::dense(3, 2, Some(Activation::SplitTanh)),
    ];
    let mut net = Network::new(Shape::flat(4), &specs, ThresholdMode::Trainable, 5).expect("network");
    let mut rng = rng::seeded(6);
    let mut params = net.flat_params();
    for p in params.iter_mut() {
        *p += 0.3 * rng.random_range(-1.0..1.0);
    }
    net.set_flat_params(&params).expect("same length");
    let x = CMatrix::random(5, 4, &mut rng);
    let targets = Targets::Complex(CMatrix::random(5, 2, &mut rng));
    let analytic = net.backward(&x, &targets, LossKind::L2).expect("backward").grads.flat();

    let h = 1e-6;
    let loss_at = |flat: &[f64]| {
        let mut probe = net.clone();
        probe.set_flat_params(flat).expect("same length");
        probe.backward(&x, &targets, LossKind::L2).expect("backward").loss
    };
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let mut up = params.clone();
        up[i] += h;
        let mut down = params.clone();
        down[i] -= h;
        let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    outcome(
        worst <= 1e-5,
        format!("{} real parameters, worst relative error {worst:.3e}", params.len()),
    )
}

fn random_instance(rng: &mut rng::Rng) -> MaureyInstance {
    let count = rng.random_range(2..=8);
    let (r, c) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let elements = (0..count).map(|_| CMatrix::random(r, c, rng)).collect();
    let scale = rng.random_range(0.5..3.0);
    let weights = (0..count).map(|_| scale * rng.random_range(0.0..1.0)).collect();
    MaureyInstance::new(elements, weights, rng.random_range(1..=16)).expect("valid instance")
}

fn mean_single_error(inst: &MaureyInstance, seed: u64) -> f64 {
    (0..64)
        .map(|t| maurey_sparsify(inst, 1, seed ^ (t << 20)).expect("sparsify").error)
        .sum::<f64>()
        / 64.0
}

fn maurey_and_cover() -> Outcome {
    let mut rng = rng::seeded(7);
    let (mut bound_ok, mut mean_k, mut mean_4k, mut decreased) = (0, 0.0, 0.0, 0);
    for i in 0..100u64 {
        let inst = random_instance(&mut rng);
        let best = maurey_sparsify(&inst, 64, i).expect("sparsify");
        if best.error.powi(2) <= 2.0 * inst.expected_error_sq_bound() {
            bound_ok += 1;
        }
        let wider = MaureyInstance::new(inst.elements().to_vec(), inst.weights().to_vec(), 4 * inst.k())
            .expect("valid instance");
        let (ek, e4k) = (mean_single_error(&inst, 1000 + i), mean_single_error(&wider, 1000 + i));
        mean_k += ek / 100.0;
        mean_4k += e4k / 100.0;
        decreased += usize::from(e4k < ek);
    }
    let z = CMatrix::random(3, 2, &mut rng::derived(0, 1 << 32));
    let cover = lemma1_cover_check(&z, 2, 1.0, 0.5, 50, 64, 0).expect("cover check");
    let ln_used = (cover.distinct_cover_points_used as f64).ln();
    let pass = bound_ok == 100
        && mean_4k < mean_k
        && cover.fraction_within_sqrt2_eps == 1.0
        && cover.fraction_within_eps >= 0.9
        && ln_used <= cover.bound_ln_cover;
    outcome(
        pass,
        format!(
            "bound held {bound_ok}/100; mean error k {mean_k:.4} -> 4k {mean_4k:.4} ({decreased}/100 fell); \
             cover within sqrt2*eps {:.2}, within eps {:.2}, ln(points) {ln_used:.3} <= {:.3}",
            cover.fraction_within_sqrt2_eps, cover.fraction_within_eps, cover.bound_ln_cover
        ),
    )
}

fn hand_rademacher(m: f64, n: f64, w: f64, z: f64, r: f64) -> f64 {
    let lw = (2.0 * (2.0 * w).ln()).sqrt();
    4.0 * m / (n * n.sqrt()) + 18.0 * z * lw * n.ln() * r / n
}

fn hand_conf(n: f64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n)).sqrt()
}

fn hand_iid(m: f64, n: f64, w: f64, z: f64, r: f64, delta: f64) -> f64 {
    let lw = (2.0 * (2.0 * w).ln()).sqrt();
    8.0 * m / (n * n.sqrt()) + 36.0 * z * lw * n.ln() * r / n + 3.0 * m * hand_conf(n, delta)
}

fn hand_sequential(m: f64, n: f64, w: f64, z: f64, r: f64, delta: f64) -> f64 {
    let lw = (2.0 * (2.0 * w).ln()).sqrt();
    8.0 * m / n + 24.0 * z * lw * n.ln() * r / n + m * hand_conf(n, delta)
}

fn hand_pac(eps: f64, delta: f64, m: f64, z: f64, w: f64, r: f64) -> f64 {
    let lw = (2.0 * (2.0 * w).ln()).sqrt();
    let inner = 8.0 * m + 36.0 * z * lw * r + 3.0 * m * ((2.0 / delta).ln() / 2.0).sqrt();
    (8.0 / (eps * eps * eps) * inner * inner * inner).ceil()
}

fn bound_evaluators() -> Outcome {
    let mut rng = rng::seeded(8);
    let (mut worst, mut identity) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let inp = BoundInputs {
            m: rng.random_range(0.1..10.0),
            n: rng.random_range(10..100_000),
            w: rng.random_range(1..2000),
            z_norm: rng.random_range(0.1..10.0),
            r_a: rng.random_range(0.0..10.0),
            delta: rng.random_range(0.001..0.5),
        };
        let eps = rng.random_range(0.1..0.95);
        let (m, n, w, z, r, d) = (inp.m, inp.n as f64, inp.w as f64, inp.z_norm, inp.r_a, inp.delta);
        let rad = rademacher_bound(inp.m, inp.n, inp.w, z, r).unwrap();
        let iid = bound_iid(&inp).unwrap();
        worst = worst
            .max(rel(rad, hand_rademacher(m, n, w, z, r)))
            .max(rel(iid, hand_iid(m, n, w, z, r, d)))
            .max(rel(bound_sequential(&inp).unwrap(), hand_sequential(m, n, w, z, r, d)))
            .max(rel(pac_sample_size(eps, d, m, z, inp.w, r).unwrap() as f64, hand_pac(eps, d, m, z, w, r)));
        identity = identity.max(rel(iid, 2.0 * rad + 3.0 * m * hand_conf(n, d)));
    }

    let base = BoundInputs {
        m: 1.0,
        n: 10,
        w: 500,
        z_norm: 30.0,
        r_a: 5.0,
        delta: 0.05,
    };
    let all = |inp: &BoundInputs| {
        [
            bound_iid(inp).unwrap(),
            bound_sequential(inp).unwrap(),
            rademacher_bound(inp.m, inp.n, inp.w, inp.z_norm, inp.r_a).unwrap(),
        ]
    };
    let pac = |inp: &BoundInputs| pac_sample_size(0.1, inp.delta, inp.m, inp.z_norm, inp.w, inp.r_a).unwrap();
    let mut monotone = true;
    let mut prev = all(&base);
    for n in [11, 20, 50, 100, 1000, 10_000, 1_000_000] {
        let cur = all(&BoundInputs { n, ..base });
        monotone &= cur.iter().zip(&prev).all(|(c, p)| c < p);
        prev = cur;
    }
    let grid = [0.5, 1.0, 2.0, 4.0, 8.0];
    let vary: [fn(&BoundInputs, f64) -> BoundInputs; 3] = [
        |b, v| BoundInputs { r_a: v, ..*b },
        |b, v| BoundInputs { m: v, ..*b },
        |b, v| BoundInputs { z_norm: v, ..*b },
    ];
    for f in vary {
        for pair in grid.windows(2) {
            let (lo, hi) = (f(&base, pair[0]), f(&base, pair[1]));
            monotone &= all(&lo).iter().zip(&all(&hi)).all(|(a, b)| a < b);
            monotone &= pac(&lo) <= pac(&hi);
        }
    }
    outcome(
        worst <= 1e-12 && identity <= 1e-15 && monotone,
        format!("worst oracle error {worst:.3e}, identity error {identity:.3e}, monotone {monotone}"),
    )
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let eq = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn enumerated_p(rx: &[f64], ry: &[f64]) -> f64 {
    let obs = oracle_pearson(rx, ry).abs();
    let perms = permutations(rx.len());
    let hits = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
            oracle_pearson(rx, &yp).abs() >= obs - 1e-12
        })
        .count();
    hits as f64 / perms.len() as f64
}

fn spearman_suite() -> Outcome {
    let mut rng = rng::seeded(9);
    let tied = |n: usize, levels: u32, rng: &mut rng::Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect()
    };
    let (mut scc_worst, mut checked) = (0.0_f64, 0);
    while checked < 100 {
        let n = rng.random_range(3..40);
        let (x, y) = (tied(n, 6, &mut rng), tied(n, 5, &mut rng));
        let Ok(c) = spearman(&x, &y) else { continue };
        scc_worst = scc_worst.max((c.scc - oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y))).abs());
        checked += 1;
    }
    let mut p_worst = 0.0_f64;
    for n in 3..=7 {
        for levels in [3, 100] {
            for _ in 0..6 {
                let (x, y) = (tied(n, levels, &mut rng), tied(n, levels, &mut rng));
                let (rx, ry) = (oracle_ranks(&x), oracle_ranks(&y));
                if rx.iter().all(|&r| r == rx[0]) || ry.iter().all(|&r| r == ry[0]) {
                    continue;
                }
                let got = exact_p(&rx, &ry, EXACT_STATE_BUDGET).expect("small n fits the budget");
                p_worst = p_worst.max((got - enumerated_p(&rx, &ry)).abs());
            }
        }
    }
    let mut perfect = true;
    for n in [3, 10, 25, 60] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let up: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let down: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        perfect &= spearman(&x, &up).unwrap().scc == 1.0 && spearman(&x, &down).unwrap().scc == -1.0;
    }
    outcome(
        scc_worst <= 1e-12 && p_worst <= 1e-12 && perfect,
        format!("scc error {scc_worst:.3e}, exact p error {p_worst:.3e}, perfect monotone {perfect}"),
    )
}

fn mnist_reproduction() -> Outcome {
    let path = repo_root().join("configs/mnist.conf");
    let mut cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("config: {e}")),
    };
    let dir = tempfile::tempdir().expect("tempdir");
    cfg.output_dir = dir.path().to_path_buf();
    let run = match cmd_train(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let last = run.trace.records().last().expect("at least one epoch");
    match correlate_trace(&run.trace) {
        Ok(c) => outcome(
            c.scc >= 0.6 && c.p < 0.005,
            format!(
                "{} epochs, final train {:.3} test {:.3}; scc {:.4}, p {:.3e} ({})",
                run.trace.len(),
                last.train_acc,
                last.test_acc,
                c.scc,
                c.p,
                c.method
            ),
        ),
        Err(e) => outcome(false, format!("correlation undefined: {e}")),
    }
}

fn train_twice(text: &str) -> Result<bool, String> {
    let base = repo_root().join("configs");
    let mut traces = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = ExperimentConfig::parse(text, &base).map_err(|e| e.to_string())?;
        cfg.output_dir = dir.path().to_path_buf();
        let run = cmd_train(&cfg).map_err(|e| e.to_string())?;
        traces.push(std::fs::read(&run.trace_path).map_err(|e| e.to_string())?);
    }
    Ok(traces[0] == traces[1])
}

fn determinism() -> Outcome {
    let mnist = "train_images = ../data/mnist/train-images-idx3-ubyte\n\
                 train_labels = ../data/mnist/train-labels-idx1-ubyte\n\
                 test_images = ../data/mnist/t10k-images-idx3-ubyte\n\
                 test_labels = ../data/mnist/t10k-labels-idx1-ubyte\n\
                 train_size = 400\ntest_size = 200\nepochs = 3\nbatch_size = 64\nseed = 3\n\
                 architecture = conv5x5:4 crelu, maxpool, fc:32 crelu, fc:10, abs\n";
    let synthetic = "dataset = synthetic\ninput_dim = 6\ntrain_size = 128\ntest_size = 64\n\
                     architecture = fc:8 splittanh, fc:2\nloss = l2\nepochs = 5\nbatch_size = 16\n\
                     threshold_mode = trainable\nseed = 4\n";
    match (train_twice(mnist), train_twice(synthetic)) {
        (Ok(a), Ok(b)) => outcome(a && b, format!("mnist traces identical {a}, synthetic traces identical {b}")),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("training failed: {e}")),
    }
}

fn format_fidelity() -> Outcome {
    let fixture = IdxImages {
        count: 3,
        rows: 2,
        cols: 3,
        pixels: (0..18).map(|v| (v * 15) as u8).collect(),
    };
    let img_bytes = idx_images_bytes(&fixture);
    let lab_bytes = idx_labels_bytes(&[7, 0, 255]);
    let fixture_ok = parse_idx_images(&img_bytes, Path::new("fixture"))
        .map(|p| idx_images_bytes(&p) == img_bytes)
        .unwrap_or(false)
        && parse_idx_labels(&lab_bytes, Path::new("fixture"))
            .map(|l| idx_labels_bytes(&l) == lab_bytes)
            .unwrap_or(false);

    let mnist = repo_root().join("data/mnist");
    let real_ok = ["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"].iter().all(|name| {
        let path = mnist.join(name);
        let Ok(bytes) = std::fs::read(&path) else { return false };
        if name.contains("images") {
            parse_idx_images(&bytes, &path).map(|p| idx_images_bytes(&p) == bytes).unwrap_or(false)
        } else {
            parse_idx_labels(&bytes, &path).map(|l| idx_labels_bytes(&l) == bytes).unwrap_or(false)
        }
    });

    let specs = [
        LayerSpec::conv((5, 5), 1, 10, Some(Activation::CReLU)),
        LayerSpec::maxpool(),
        LayerSpec::conv((3, 3), 10, 4, Some(Activation::ModReLU { bias: -0.25 })),
        LayerSpec::dense(4 * 4 * 4, 16, Some(Activation::AmplitudeTanh)),
        LayerSpec::dense(16, 10, None),
        LayerSpec::abs_head(10),
    ];
    let mut net = Network::new(Shape::new(1, 16, 16), &specs, ThresholdMode::Trainable, 12).expect("network");
    let mut rng = rng::seeded(13);
    let mut params = net.flat_params();
    params.shuffle(&mut rng);
    params[0] = f64::MIN_POSITIVE;
    params[1] = -0.0;
    params[2] = 1.0 / 3.0;
    net.set_flat_params(&params).expect("same length");
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("net.json");
    let checkpoint_ok = save_checkpoint(&net, &path).is_ok()
        && match load_checkpoint(&path) {
            Ok(back) => {
                let bits = |n: &Network| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                bits(&back) == bits(&net)
                    && back.specs() == net.specs()
                    && checkpoint_to_string(&back).ok() == checkpoint_to_string(&net).ok()
            }
            Err(_) => false,
        };
    outcome(
        fixture_ok && real_ok && checkpoint_ok,
        format!("idx fixture {fixture_ok}, mnist test files {real_ok}, checkpoint bitwise {checkpoint_ok}"),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(u32, &str, Check, Duration); 10] = [
        (1, "spectral norm vs dense oracle", spectral_norm_vs_dense_oracle, Duration::from_secs(10)),
        (2, "conv spectral norm vs lowering", conv_norm_vs_lowering, Duration::from_secs(30)),
        (3, "activation Lipschitz probes", lipschitz_suite, Duration::from_secs(10)),
        (4, "finite-difference gradient check", gradient_check, Duration::from_secs(5)),
        (5, "sparsification and linear cover", maurey_and_cover, Duration::from_secs(60)),
        (6, "bound evaluators", bound_evaluators, Duration::from_secs(60)),
        (7, "spearman correctness", spearman_suite, Duration::from_secs(60)),
        (8, "mnist sn-product vs excess risk", mnist_reproduction, Duration::from_secs(30 * 60)),
        (9, "training determinism", determinism, Duration::from_secs(10 * 60)),
        (10, "format fidelity", format_fidelity, Duration::from_secs(60)),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check, limit) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let pass = out.pass && took <= limit;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
