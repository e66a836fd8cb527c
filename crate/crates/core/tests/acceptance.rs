//! Acceptance suite: one PASS/FAIL/BLOCKED line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! Pass criterion numbers as arguments to run a subset. BLOCKED marks a
//! criterion whose external inputs (dataset files) are absent; it is
//! reported as not passing but does not fail the process.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use swishnet::activations::{act_forward, ActivationKind, ActivationParams};
use swishnet::bench::{bench_compare, BenchConfig};
use swishnet::data::{
    load_cifar10_dir, load_mnist_dir, make_synthetic, parse_cifar10, parse_cifar100, parse_mnist_idx, LabeledDataset,
    SyntheticSpec,
};
use swishnet::nn::{grad_check, GradCheckOptions, GradCheckReport, Model};
use swishnet::optim::{EarlyStopping, OptimizerConfig, StopDecision};
use swishnet::report::{decode_pgm, parse_metrics_csv, without_timing};
use swishnet::rng::Rng;
use swishnet::train::{
    build_vgg16, init_parameters, overfit_batch, train_model, Arch, ArchSpec, TrainConfig, TrainStatus,
};
use swishnet::Error;

enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
}

use Verdict::*;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    run: fn() -> Verdict,
}

const KINDS: [ActivationKind; 6] = ActivationKind::ALL;

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion {
            id: 1,
            title: "activation pointwise correctness",
            budget: secs(1),
            run: a1_pointwise,
        },
        Criterion {
            id: 2,
            title: "SwishReLU branch identity",
            budget: secs(1),
            run: a2_branches,
        },
        Criterion {
            id: 3,
            title: "SwishReLU bounded below",
            budget: secs(1),
            run: a3_minimum,
        },
        Criterion {
            id: 4,
            title: "gradient suite",
            budget: secs(600),
            run: a4_gradients,
        },
        Criterion {
            id: 5,
            title: "MNIST fcnn reproduction",
            budget: secs(1500),
            run: a5_mnist,
        },
        Criterion {
            id: 6,
            title: "CIFAR-10 cnn5 desk-scale run",
            budget: secs(1200),
            run: a6_cifar_cnn5,
        },
        Criterion {
            id: 7,
            title: "VGG16 substitutes",
            budget: secs(900),
            run: a7_vgg16,
        },
        Criterion {
            id: 8,
            title: "activation cost ordering",
            budget: secs(120),
            run: a8_cost,
        },
        Criterion {
            id: 9,
            title: "loader fixtures",
            budget: secs(1),
            run: a9_loaders,
        },
        Criterion {
            id: 10,
            title: "CLI determinism",
            budget: secs(60),
            run: a10_determinism,
        },
        Criterion {
            id: 11,
            title: "feature-map export",
            budget: secs(60),
            run: a11_featmaps,
        },
    ];
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(c.run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Pass(d) if elapsed > c.budget => Fail(format!("{d}; over the {:.0} s budget", c.budget.as_secs_f64())),
            v => v,
        };
        let (tag, detail) = match &verdict {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Blocked(d) => ("FAIL (blocked)", d),
        };
        println!(
            "[{tag}] {:>2} {}: {detail} ({:.2} s)",
            c.id,
            c.title,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// Double-double arithmetic for the pointwise oracle.
#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        quick_two_sum(s.0, s.1 + self.1 + o.1)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick_two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn scale(self, s: f64) -> Dd {
        // Exact for powers of two.
        Dd(self.0 * s, self.1 * s)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

fn dd_exp(x: f64) -> Dd {
    let k = (x / LN2.0).round();
    let r = Dd::from(x).sub(LN2.mul(Dd::from(k))).scale(1.0 / 1024.0);
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for n in 1..=14 {
        term = term.mul(r).div(Dd::from(n as f64));
        sum = sum.add(term);
    }
    for _ in 0..10 {
        sum = sum.mul(sum);
    }
    sum.scale(2f64.powi(k as i32))
}

fn oracle(kind: ActivationKind, x: f64, p: &ActivationParams) -> f64 {
    let one = Dd::from(1.0);
    let xd = Dd::from(x);
    let swish = || xd.div(one.add(dd_exp(-x)));
    match kind {
        ActivationKind::Relu => x.max(0.0),
        ActivationKind::Elu => {
            if x > 0.0 {
                x
            } else {
                Dd::from(p.elu_alpha).mul(dd_exp(x).sub(one)).value()
            }
        }
        ActivationKind::Selu => {
            let lambda = Dd::from(p.selu_lambda);
            if x > 0.0 {
                lambda.mul(xd).value()
            } else {
                lambda.mul(Dd::from(p.selu_alpha)).mul(dd_exp(x).sub(one)).value()
            }
        }
        ActivationKind::Tanh => {
            let e = dd_exp(-2.0 * x.abs());
            let t = one.sub(e).div(one.add(e)).value();
            t.copysign(x)
        }
        ActivationKind::Swish => swish().value(),
        ActivationKind::SwishRelu => {
            if x < 0.0 {
                swish().value()
            } else {
                x
            }
        }
    }
}

fn a1_pointwise() -> Verdict {
    let p = ActivationParams::default();
    // The oracle itself: e to 1 ulp, and exp(20)·exp(-20) = 1 far below double precision.
    let e = dd_exp(1.0);
    let unit = dd_exp(20.0).mul(dd_exp(-20.0)).sub(Dd::from(1.0));
    if (e.0 - std::f64::consts::E).abs() > 4e-16 || unit.value().abs() > 1e-28 {
        return Fail("double-double oracle failed its self-check".into());
    }
    let mut worst = (0.0f64, ActivationKind::Relu, 0.0);
    for kind in KINDS {
        for i in 0..=10_000 {
            let x = -20.0 + 40.0 * i as f64 / 10_000.0;
            let err = (act_forward(kind, x, &p) - oracle(kind, x, &p)).abs();
            if err > worst.0 {
                worst = (err, kind, x);
            }
        }
    }
    let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
    let swr: f64 = act_forward(ActivationKind::SwishRelu, -1.0, &p);
    let anchors = (sig1 - 0.731_058_578_6).abs() < 1e-10 && (swr + 0.268_941_421_4).abs() < 1e-10;
    check(
        worst.0 <= 1e-12 && anchors,
        format!(
            "6 kinds x 10001 points, max |err| {:.2e} ({} at {:.3}); sigmoid(1)={sig1:.10}, SwishReLU(-1)={swr:.10}",
            worst.0,
            worst.1.name(),
            worst.2
        ),
    )
}

fn a2_branches() -> Verdict {
    let p = ActivationParams::default();
    let mut rng = Rng::new(2);
    let mut bad = 0;
    for i in 0..100_000 {
        let x = match i {
            0 => 0.0,
            1 => f64::MIN_POSITIVE,
            2 => 1e300,
            _ => rng.uniform(0.0, 1.0) * 10f64.powi(rng.below(12) as i32 - 6),
        };
        if act_forward(ActivationKind::SwishRelu, x, &p).to_bits() != x.to_bits() {
            bad += 1;
        }
        let y = match i {
            0 => -f64::MIN_POSITIVE,
            1 => -750.0,
            _ => -(rng.uniform(0.0, 1.0) * 10f64.powi(rng.below(9) as i32 - 6)),
        };
        let a = act_forward(ActivationKind::SwishRelu, y, &p);
        let b = act_forward(ActivationKind::Swish, y, &p);
        if a.to_bits() != b.to_bits() {
            bad += 1;
        }
    }
    check(bad == 0, format!("2 x 10^5 samples, {bad} mismatches"))
}

fn a3_minimum() -> Verdict {
    let p = ActivationParams::default();
    let n = 1_000_000;
    let (mut min, mut at) = (f64::INFINITY, 0.0);
    for i in 0..n {
        let x = -50.0 + 100.0 * i as f64 / (n - 1) as f64;
        let y = act_forward(ActivationKind::SwishRelu, x, &p);
        if y < min {
            (min, at) = (y, x);
        }
    }
    check(
        (min + 0.278_464_5).abs() <= 1e-4,
        format!("grid min {min:.7} at x = {at:.4}"),
    )
}

fn gradcheck_model(model: &mut Model<f64>, spec: &ArchSpec, batch: usize, opts: &GradCheckOptions) -> GradCheckReport {
    let data = make_synthetic::<f64>(&SyntheticSpec {
        n: batch,
        shape: spec.input_shape,
        class_count: spec.class_count,
        seed: 4,
        separable: false,
    })
    .expect("synthetic batch");
    grad_check(model, &data.images, &data.labels, opts).expect("grad_check runs")
}

fn a4_gradients() -> Verdict {
    let opts = GradCheckOptions::default();
    let mut failures = Vec::new();
    let mut checked = 0;
    for kind in KINDS {
        for spec in [
            ArchSpec::new(Arch::Fcnn, kind, kind, 10),
            ArchSpec::new(Arch::Cnn5Small, kind, kind, 10),
        ] {
            let mut model = spec.build::<f64>(11).expect("model builds");
            let report = gradcheck_model(&mut model, &spec, 2, &opts);
            checked += report.tensors.iter().map(|t| t.checked).sum::<usize>();
            if !report.passed {
                let w = report.worst().expect("at least one tensor");
                failures.push(format!(
                    "{} {}: {} {:.2e}",
                    spec.arch,
                    kind.name(),
                    w.key,
                    w.max_rel_error
                ));
            }
        }
    }
    let spec = ArchSpec::new(Arch::Vgg16, ActivationKind::SwishRelu, ActivationKind::SwishRelu, 10);
    let mut vgg = spec.build::<f64>(11).expect("vgg builds");
    let report = gradcheck_model(&mut vgg, &spec, 1, &GradCheckOptions { max_entries: 2, ..opts });
    checked += report.tensors.iter().map(|t| t.checked).sum::<usize>();
    let finite = report.tensors.iter().all(|t| t.max_rel_error.is_finite());
    if !report.passed || !finite {
        failures.push(format!(
            "vgg16: {}",
            report.worst().map_or(String::new(), |w| w.key.to_string())
        ));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("fcnn and cnn5-small x 6 kinds plus sampled vgg16; {checked} entries within tol 1e-4")
        } else {
            failures.join("; ")
        },
    )
}

fn data_dir(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.is_dir())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn a5_mnist() -> Verdict {
    let Some(dir) = data_dir("SWISHNET_MNIST_DIR") else {
        return Blocked("MNIST files not available; set SWISHNET_MNIST_DIR to the IDX directory".into());
    };
    let (train, test) = match load_mnist_dir::<f32>(&dir) {
        Ok(d) => d,
        Err(e) => return Fail(format!("loading {}: {e}", dir.display())),
    };
    let acc = |kind| -> Vec<f64> {
        [41, 42, 43]
            .iter()
            .map(|&seed| {
                let spec = ArchSpec::new(Arch::Fcnn, kind, kind, 10);
                let mut m = spec.build::<f32>(seed).expect("fcnn builds");
                let config = TrainConfig {
                    seed,
                    ..TrainConfig::for_arch(Arch::Fcnn)
                };
                let out = train_model(&mut m, &train, &test, &config).expect("training runs");
                out.last().map_or(0.0, |e| e.test_accuracy)
            })
            .collect()
    };
    let swr = median(acc(ActivationKind::SwishRelu));
    let relu = median(acc(ActivationKind::Relu));
    check(
        swr >= 0.975 && swr >= relu - 0.003,
        format!("median test accuracy SwishReLU {swr:.4}, ReLU {relu:.4} over seeds 41-43"),
    )
}

fn a6_cifar_cnn5() -> Verdict {
    let Some(dir) = data_dir("SWISHNET_CIFAR10_DIR") else {
        return Blocked("CIFAR-10 binary batches not available; set SWISHNET_CIFAR10_DIR".into());
    };
    let (train, test) = match load_cifar10_dir::<f32>(&dir) {
        Ok(d) => d,
        Err(e) => return Fail(format!("loading {}: {e}", dir.display())),
    };
    let (train, test) = (train.head(5000), test.head(2000));
    let spec = ArchSpec::new(Arch::Cnn5, ActivationKind::SwishRelu, ActivationKind::SwishRelu, 10);
    let mut m = spec.build::<f32>(42).expect("cnn5 builds");
    let config = TrainConfig {
        epochs: 10,
        ..TrainConfig::for_arch(Arch::Cnn5)
    };
    let out = train_model(&mut m, &train, &test, &config).expect("training runs");
    let losses: Vec<f64> = out.metrics.iter().map(|e| e.train_loss).collect();
    let smoothed: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    let monotone = smoothed.windows(2).all(|w| w[1] < w[0]);
    let acc = out.last().map_or(0.0, |e| e.test_accuracy);
    check(
        out.status == TrainStatus::Completed && acc > 0.40 && monotone,
        format!("test accuracy {acc:.4}, smoothed train loss decreasing: {monotone}"),
    )
}

fn a7_vgg16() -> Verdict {
    let model = build_vgg16::<f32>(ActivationKind::SwishRelu, 10).expect("vgg builds");
    let layout = (model.conv_count(), model.dense_count());
    if layout != (13, 3) {
        return Fail(format!("layer counts {layout:?}"));
    }

    let mut stopper = EarlyStopping::new(5).expect("patience 5");
    let script = [1.0, 0.8, 0.7, 0.75, 0.7, 0.9, 0.71, 0.7];
    let decisions: Vec<StopDecision> = script.iter().map(|&l| stopper.update(l)).collect();
    let stop_at = decisions.iter().position(|d| *d == StopDecision::Stop);
    if stop_at != Some(7) || decisions[..7].iter().any(|d| *d != StopDecision::Continue) {
        return Fail(format!("early stopping decisions {decisions:?}"));
    }

    let (data, source) = match data_dir("SWISHNET_CIFAR10_DIR").map(|d| load_cifar10_dir::<f32>(&d)) {
        Some(Ok((train, _))) => (train.head(100), "CIFAR-10"),
        _ => (
            make_synthetic::<f32>(&SyntheticSpec {
                n: 100,
                shape: [3, 32, 32],
                class_count: 10,
                seed: 1,
                separable: false,
            })
            .expect("synthetic batch"),
            "synthetic CIFAR-shaped noise (CIFAR-10 not available)",
        ),
    };
    let mut model = model;
    init_parameters(&mut model, 42);
    let r = overfit_batch(
        &mut model,
        &data.images,
        &data.labels,
        &OptimizerConfig::sgd_default(),
        200,
        0.99,
    )
    .expect("overfit runs");
    check(
        r.accuracy >= 0.99,
        format!(
            "13 conv + 3 dense; stop after 5 non-improving epochs; {source}: accuracy {:.2} after {} SGD steps",
            r.accuracy, r.steps
        ),
    )
}

fn a8_cost() -> Verdict {
    use ActivationKind::*;
    let config = BenchConfig {
        elements: 10_000_000,
        sign_mix: 0.5,
        reps: 9,
        seed: 8,
    };
    let report = match bench_compare(&[Relu, Swish, SwishRelu], &config) {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let ns = |k| report.get(k).expect("kind timed").result.ns_per_element;
    let (relu, swish, swr) = (ns(Relu), ns(Swish), ns(SwishRelu));
    check(
        swr <= swish && relu <= swr * 1.6,
        format!("ns/element ReLU {relu:.3}, SwishReLU {swr:.3}, Swish {swish:.3}"),
    )
}

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

fn a9_loaders() -> Verdict {
    let mut problems = Vec::new();
    let pixels: Vec<u8> = (0..3 * 784).map(|i| (i * 7 % 256) as u8).collect();
    let images = idx(0x803, &[3, 28, 28], &pixels);
    let labels = idx(0x801, &[3], &[4, 0, 9]);
    match parse_mnist_idx::<f32>(&images, &labels) {
        Ok(ds) => {
            let want: Vec<f32> = pixels.iter().map(|&b| b as f32 / 255.0).collect();
            if ds.images.shape() != [3, 1, 28, 28] || ds.images.data() != want.as_slice() || ds.labels != [4, 0, 9] {
                problems.push("IDX tensor mismatch".to_string());
            }
        }
        Err(e) => problems.push(format!("IDX rejected: {e}")),
    }
    let mut rec = vec![6u8];
    rec.extend((0..3072).map(|i| (i % 251) as u8));
    let mut rec100 = vec![3u8, 77];
    rec100.extend_from_slice(&rec[1..]);
    match (parse_cifar10::<f64>(&[&rec, &rec]), parse_cifar100::<f64>(&[&rec100])) {
        (Ok(c10), Ok(c100)) => {
            let want: Vec<f64> = rec[1..].iter().map(|&b| b as f64 / 255.0).collect();
            if c10.images.shape() != [2, 3, 32, 32]
                || c10.images.data()[..3072] != want[..]
                || c10.labels != [6, 6]
                || c100.labels != [77]
                || c100.images.data() != want.as_slice()
            {
                problems.push("CIFAR tensor mismatch".to_string());
            }
        }
        (a, b) => problems.push(format!("CIFAR rejected: {:?} {:?}", a.err(), b.err())),
    }
    let format_err = |r: Result<LabeledDataset<f32>, Error>| matches!(r, Err(Error::Format(_)));
    let rejected = [
        format_err(parse_mnist_idx(&idx(0x802, &[3, 28, 28], &pixels), &labels)),
        format_err(parse_mnist_idx(&images[..images.len() - 5], &labels)),
        format_err(parse_mnist_idx(&images, &idx(0x803, &[3], &[4, 0, 9]))),
        format_err(parse_cifar10(&[&rec[..3000]])),
        format_err(parse_cifar100(&[&rec100[..3073]])),
    ];
    if rejected.iter().any(|r| !r) {
        problems.push(format!("malformed inputs not all rejected: {rejected:?}"));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "IDX and CIFAR-10/100 fixtures exact; 5 malformed inputs rejected with format errors".into()
        } else {
            problems.join("; ")
        },
    )
}

fn swishnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_swishnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("swishnet-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn a10_determinism() -> Verdict {
    let root = scratch_dir("determinism");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let o = swishnet(&[
            "train",
            "--synthetic",
            "--epochs",
            "3",
            "--seed",
            "7",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        if !o.status.success() {
            return Fail(format!("train exited with {}", o.status));
        }
        csvs.push(std::fs::read_to_string(out.join("metrics.csv")).expect("metrics written"));
    }
    let _ = std::fs::remove_dir_all(&root);
    let rows = parse_metrics_csv(&csvs[0]).map(|t| t.epochs.len()).unwrap_or(0);
    check(
        without_timing(&csvs[0]) == without_timing(&csvs[1]) && rows == 3,
        format!("two runs with seed 7: {rows} epoch rows, identical apart from wall time"),
    )
}

fn a11_featmaps() -> Verdict {
    let root = scratch_dir("featmaps");
    let run = root.join("run");
    let maps = root.join("maps");
    let o = swishnet(&[
        "train",
        "--arch",
        "cnn5",
        "--synthetic",
        "--synthetic-train",
        "64",
        "--synthetic-test",
        "16",
        "--epochs",
        "1",
        "--out-dir",
        run.to_str().unwrap(),
    ]);
    if !o.status.success() {
        return Fail(format!("training exited with {}", o.status));
    }
    let o = swishnet(&[
        "featmaps",
        "--model",
        run.join("model.swnn").to_str().unwrap(),
        "--out-dir",
        maps.to_str().unwrap(),
    ]);
    if !o.status.success() {
        return Fail(format!("featmaps exited with {}", o.status));
    }
    let expected: [(usize, usize, usize); 5] = [(0, 32, 32), (2, 32, 32), (5, 64, 16), (7, 64, 16), (10, 128, 8)];
    let mut total = 0;
    let mut bad = Vec::new();
    for (layer, channels, side) in expected {
        for ch in 0..channels {
            let path: &Path = &maps.join(format!("layer{layer}_ch{ch}.pgm"));
            match std::fs::read(path)
                .map_err(|e| e.to_string())
                .and_then(|b| decode_pgm(&b).map_err(|e| e.to_string()))
            {
                Ok((w, h, _)) if (w, h) == (side, side) => total += 1,
                Ok((w, h, _)) => bad.push(format!("{} is {w}x{h}", path.display())),
                Err(e) => bad.push(format!("{}: {e}", path.display())),
            }
        }
    }
    let pgm_count = std::fs::read_dir(&maps)
        .map(|d| {
            d.filter(|e| {
                e.as_ref()
                    .is_ok_and(|e| e.path().extension().is_some_and(|x| x == "pgm"))
            })
            .count()
        })
        .unwrap_or(0);
    let _ = std::fs::remove_dir_all(&root);
    check(
        bad.is_empty() && total == 320 && pgm_count == 320,
        if bad.is_empty() {
            format!("{pgm_count} PGM files, extents 32/32/16/16/8 per conv layer")
        } else {
            bad.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    )
}
