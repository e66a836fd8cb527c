//! Timing of the activation slice kernels.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activations::{act_forward, forward_slice, ActivationKind, ActivationParams};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MIN_ELEMENTS: usize = 1_000_000;
pub const MIN_REPS: usize = 5;
/// Inputs are drawn with magnitude uniform in `[0, INPUT_RANGE)`.
pub const INPUT_RANGE: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub elements: usize,
    /// Fraction of inputs that are negative.
    pub sign_mix: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            elements: 10_000_000,
            sign_mix: 0.5,
            reps: 9,
            seed: 42,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elements < MIN_ELEMENTS {
            return Err(Error::Validation(format!(
                "at least {MIN_ELEMENTS} elements per rep required, got {}",
                self.elements
            )));
        }
        if self.reps < MIN_REPS {
            return Err(Error::Validation(format!(
                "at least {MIN_REPS} reps required, got {}",
                self.reps
            )));
        }
        if !(0.0..=1.0).contains(&self.sign_mix) {
            return Err(Error::Validation(format!("sign mix {} outside [0, 1]", self.sign_mix)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub kind: ActivationKind,
    pub elements: usize,
    pub sign_mix: f64,
    pub reps: usize,
    /// Median over the timed reps.
    pub ns_per_element: f64,
    pub throughput_gelem_s: f64,
    /// Sum of the generated inputs; a function of the seed alone.
    pub input_checksum: f64,
    /// Sum of the outputs of the last rep.
    pub output_checksum: f64,
}

/// Seeded single-precision inputs with the requested fraction of negatives.
pub fn bench_inputs(elements: usize, sign_mix: f64, seed: u64) -> Vec<f32> {
    let mut rng = Rng::new(seed);
    (0..elements)
        .map(|_| {
            let magnitude = rng.uniform(0.0, INPUT_RANGE);
            if rng.next_f64() < sign_mix {
                -magnitude as f32
            } else {
                magnitude as f32
            }
        })
        .collect()
}

fn checksum(values: &[f32]) -> f64 {
    values.iter().map(|&v| v as f64).sum()
}

/// Compares the slice kernel against pointwise evaluation on a
/// 10^4-point grid in `[-20, 20]`.
pub fn verify_kernel(kind: ActivationKind) -> Result<()> {
    let params = ActivationParams::default();
    let grid: Vec<f32> = (0..10_000).map(|i| -20.0 + 40.0 * i as f32 / 9_999.0).collect();
    let mut out = vec![0.0f32; grid.len()];
    forward_slice(kind, &grid, &mut out, &params);
    for (&x, &y) in grid.iter().zip(&out) {
        let want = act_forward(kind, x, &params);
        if (y - want).abs() > 1e-6 * want.abs().max(1.0) {
            return Err(Error::Consistency(format!(
                "{} kernel gives {y} at {x}, pointwise gives {want}",
                kind.name()
            )));
        }
    }
    Ok(())
}

fn time_rep(kind: ActivationKind, input: &[f32], output: &mut [f32], params: &ActivationParams) -> f64 {
    let start = Instant::now();
    forward_slice(kind, black_box(input), output, params);
    black_box(&mut *output);
    start.elapsed().as_nanos() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn result(kind: ActivationKind, config: &BenchConfig, times: Vec<f64>, input: &[f32], output: &[f32]) -> BenchResult {
    let ns = median(times) / config.elements as f64;
    BenchResult {
        kind,
        elements: config.elements,
        sign_mix: config.sign_mix,
        reps: config.reps,
        ns_per_element: ns,
        throughput_gelem_s: 1.0 / ns,
        input_checksum: checksum(input),
        output_checksum: checksum(output),
    }
}

/// One warm-up rep, then `reps` timed reps of the slice kernel.
pub fn bench_activation(kind: ActivationKind, config: &BenchConfig) -> Result<BenchResult> {
    config.validate()?;
    verify_kernel(kind)?;
    let params = ActivationParams::default();
    let input = bench_inputs(config.elements, config.sign_mix, config.seed);
    let mut output = vec![0.0f32; input.len()];
    let _pin = CpuPin::acquire();
    time_rep(kind, &input, &mut output, &params);
    let times = (0..config.reps)
        .map(|_| time_rep(kind, &input, &mut output, &params))
        .collect();
    Ok(result(kind, config, times, &input, &output))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub result: BenchResult,
    /// ns/element divided by ReLU's ns/element from the same run.
    pub ratio_vs_relu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: String,
    /// Ascending by ns/element.
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn get(&self, kind: ActivationKind) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.result.kind == kind)
    }
}

/// Times every kind on the same inputs, interleaving kinds within each rep
/// so that slow drift in machine state affects all of them alike. ReLU is
/// always timed as the reference, even when not requested.
pub fn bench_compare(kinds: &[ActivationKind], config: &BenchConfig) -> Result<BenchReport> {
    let mut unique: Vec<ActivationKind> = Vec::new();
    for &k in kinds {
        if !unique.contains(&k) {
            unique.push(k);
        }
    }
    if unique.len() < 2 {
        return Err(Error::Validation(
            "bench_compare needs at least two distinct kinds".into(),
        ));
    }
    config.validate()?;
    let mut timed = unique.clone();
    if !timed.contains(&ActivationKind::Relu) {
        timed.push(ActivationKind::Relu);
    }
    for &k in &timed {
        verify_kernel(k)?;
    }
    let params = ActivationParams::default();
    let input = bench_inputs(config.elements, config.sign_mix, config.seed);
    let mut outputs: Vec<Vec<f32>> = timed.iter().map(|_| vec![0.0f32; input.len()]).collect();
    let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(config.reps); timed.len()];

    let _pin = CpuPin::acquire();
    for (k, out) in timed.iter().zip(outputs.iter_mut()) {
        time_rep(*k, &input, out, &params);
    }
    for rep in 0..config.reps {
        // Rotate the starting kind so no kind always runs first.
        for j in 0..timed.len() {
            let i = (j + rep) % timed.len();
            times[i].push(time_rep(timed[i], &input, &mut outputs[i], &params));
        }
    }

    let results: Vec<BenchResult> = timed
        .iter()
        .zip(times)
        .zip(&outputs)
        .map(|((&k, t), out)| result(k, config, t, &input, out))
        .collect();
    let relu_ns = results
        .iter()
        .find(|r| r.kind == ActivationKind::Relu)
        .expect("relu is always timed")
        .ns_per_element;
    let mut rows: Vec<BenchRow> = results
        .into_iter()
        .filter(|r| unique.contains(&r.kind))
        .map(|r| BenchRow {
            ratio_vs_relu: r.ns_per_element / relu_ns,
            result: r,
        })
        .collect();
    rows.sort_by(|a, b| a.result.ns_per_element.total_cmp(&b.result.ns_per_element));
    Ok(BenchReport {
        machine: machine_description(),
        rows,
    })
}

/// CPU model, architecture, OS and logical CPU count.
pub fn machine_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{cpu}; {}-{}; {threads} logical cpus",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Pins the calling thread to the CPU it is running on; the previous
/// affinity mask is restored on drop.
struct CpuPin {
    #[cfg(target_os = "linux")]
    previous: Option<libc::cpu_set_t>,
}

impl CpuPin {
    #[cfg(target_os = "linux")]
    fn acquire() -> Self {
        // SAFETY: cpu_set_t is plain data; the calls only read and write the
        // sets passed to them for the calling thread (pid 0).
        unsafe {
            let mut previous: libc::cpu_set_t = std::mem::zeroed();
            let size = std::mem::size_of::<libc::cpu_set_t>();
            if libc::sched_getaffinity(0, size, &mut previous) != 0 {
                return Self { previous: None };
            }
            let cpu = libc::sched_getcpu();
            if cpu < 0 {
                return Self { previous: None };
            }
            let mut only: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_SET(cpu as usize, &mut only);
            if libc::sched_setaffinity(0, size, &only) != 0 {
                return Self { previous: None };
            }
            Self {
                previous: Some(previous),
            }
        }
    }

    #[cfg(not(target_os = "linux"))]
    fn acquire() -> Self {
        Self {}
    }
}

impl Drop for CpuPin {
    fn drop(&mut self) {
        #[cfg(target_os = "linux")]
        if let Some(previous) = self.previous.take() {
            // SAFETY: restores a mask previously returned by sched_getaffinity.
            unsafe {
                libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &previous);
            }
        }
    }
}
