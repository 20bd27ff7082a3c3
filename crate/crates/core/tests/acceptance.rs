//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use ledrange::accumulation::CountFrame;
use ledrange::evaluation::evaluate;
use ledrange::event::{Event, Polarity, SensorGeometry};
use ledrange::filtering::{HighPassConfig, HighPassFilter};
use ledrange::io::{write_events, EventFormat};
use ledrange::pipeline::{estimate_stream, PipelineConfig};
use ledrange::poc::{self, PocConfig};
use ledrange::ranging::{triangulate, OpticalConfig};
use ledrange::separation::{split, weighted_y, SplitFrames};
use ledrange::synthgen::{bundled_scenario, generate, ScenarioConfig};

const DFT_REL_TOL: f64 = 1e-9;
const C1_TIME_LIMIT: Duration = Duration::from_secs(10);
const SUBPIXEL_RMS_TOL_PX: f64 = 0.1;
const UPSAMPLE: usize = 16;
const C2_TIME_LIMIT: Duration = Duration::from_secs(60);
const TRIANGULATE_REL_TOL: f64 = 4.0 * f64::EPSILON;
const SCALE_REL_TOL: f64 = 1e-12;
const RANGE_THRESHOLD_M: f64 = 0.5;
const C5_MIN_FRACTION: f64 = 0.90;
const C5_TIME_LIMIT: Duration = Duration::from_secs(300);
const C6_MIN_FRACTION: f64 = 0.80;
const THROUGHPUT_EVENTS: u64 = 100_000_000;
const THROUGHPUT_CHUNK: usize = 1 << 20;
const MIN_EVENTS_PER_SEC: f64 = 10e6;

type Criterion = (&'static str, fn() -> Outcome);

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

fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CountFrame {
    let mut f = CountFrame::zeros(w, h);
    f.counts_mut().iter_mut().for_each(|c| *c = rng.random_range(0..50));
    f
}

/// Direct double-sum DFT.
fn naive_dft2(f: &CountFrame) -> Vec<Complex64> {
    let (m, n) = (f.height(), f.width());
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for u in 0..m {
        for v in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..m {
                for x in 0..n {
                    let phase = -2.0 * PI * ((u * y) as f64 / m as f64 + (v * x) as f64 / n as f64);
                    acc += f.get(x, y) as f64 * Complex64::from_polar(1.0, phase);
                }
            }
            out[u * n + v] = acc;
        }
    }
    out
}

fn circular_shift(f: &CountFrame, sx: isize, sy: isize) -> CountFrame {
    let (w, h) = (f.width() as isize, f.height() as isize);
    let mut out = CountFrame::zeros(f.width(), f.height());
    for y in 0..h {
        for x in 0..w {
            let c = f.get(x as usize, y as usize);
            out.set((x + sx).rem_euclid(w) as usize, (y + sy).rem_euclid(h) as usize, c);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_frame(&mut rng, 8, 8);
        let fast = poc::dft2(&f);
        let slow = naive_dft2(&f);
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in fast.data().iter().zip(&slow) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    let mut recovered = 0;
    for _ in 0..100 {
        let f = random_frame(&mut rng, 8, 8);
        let (sx, sy) = (rng.random_range(-3i64..=3) as isize, rng.random_range(-3i64..=3) as isize);
        let moved = circular_shift(&f, sx, sy);
        let j = poc::cross_power(&poc::dft2(&moved), &poc::dft2(&f), 1e-12).unwrap();
        let g = poc::poc_surface(&j).unwrap();
        let ((m, n), _) = g.argmax();
        if (poc::unwrap_index(n, 8), poc::unwrap_index(m, 8)) == (sx, sy) {
            recovered += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= DFT_REL_TOL && recovered == 100 && elapsed < C1_TIME_LIMIT,
        format!(
            "max rel DFT error {worst:.2e} (tol {DFT_REL_TOL:e}), integer shifts {recovered}/100, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn blob_frame(w: usize, h: usize, cx: f64, cy: f64, sigma: f64) -> CountFrame {
    let mut f = CountFrame::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            f.set(x, y, (1000.0 * (-r2 / (2.0 * sigma * sigma)).exp()).round() as u32);
        }
    }
    f
}

/// Vertical shift of `moving` relative to `reference` by 16x upsampled
/// cross-correlation: per-column DFTs along y, cross-spectrum summed over
/// columns, then the correlation is evaluated on a 1/16 px grid around the
/// integer peak by direct Fourier summation.
fn upsampled_xcorr_dy(moving: &CountFrame, reference: &CountFrame) -> f64 {
    let (w, m) = (moving.width(), moving.height());
    let column_dft = |f: &CountFrame, x: usize| -> Vec<Complex64> {
        (0..m)
            .map(|v| {
                (0..m)
                    .map(|y| f.get(x, y) as f64 * Complex64::from_polar(1.0, -2.0 * PI * (v * y) as f64 / m as f64))
                    .sum()
            })
            .collect()
    };
    let mut cross = vec![Complex64::new(0.0, 0.0); m];
    for x in 0..w {
        let a = column_dft(moving, x);
        let b = column_dft(reference, x);
        for v in 0..m {
            cross[v] += a[v] * b[v].conj();
        }
    }
    let corr = |s: f64| -> f64 {
        (0..m)
            .map(|v| {
                let freq = if v > m / 2 { v as f64 - m as f64 } else { v as f64 };
                (cross[v] * Complex64::from_polar(1.0, 2.0 * PI * freq * s / m as f64)).re
            })
            .sum()
    };
    let coarse = (0..m)
        .map(|s| s as f64)
        .max_by(|a, b| corr(*a).total_cmp(&corr(*b)))
        .unwrap();
    let fine = (-(UPSAMPLE as isize)..=UPSAMPLE as isize)
        .map(|k| coarse + k as f64 / UPSAMPLE as f64)
        .max_by(|a, b| corr(*a).total_cmp(&corr(*b)))
        .unwrap();
    if fine > m as f64 / 2.0 {
        fine - m as f64
    } else {
        fine
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let sigma = 1.5;
    let cfg = PocConfig::default();
    let (mut err_truth, mut err_oracle, mut oracle_truth) = (Vec::new(), Vec::new(), Vec::new());
    let (mut failures, mut max_dx) = (0, 0.0f64);
    for (integer, rows, upper_row) in [(5.0, 32, 10.0), (50.0, 512, 100.0), (200.0, 512, 100.0)] {
        for frac in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let shift = integer + frac;
            let upper = blob_frame(32, rows, 16.0, upper_row, sigma);
            let lower = blob_frame(32, rows, 16.0, upper_row + shift, sigma);
            let oracle = upsampled_xcorr_dy(&lower, &upper);
            let split = SplitFrames {
                upper,
                lower,
                boundary_y: upper_row + shift / 2.0,
            };
            match poc::measure_displacement(&split, &cfg) {
                Ok(r) => {
                    let (dx, dy) = r.displacement;
                    err_truth.push(dy - shift);
                    max_dx = max_dx.max(dx.abs());
                    err_oracle.push(dy - oracle);
                    oracle_truth.push(oracle - shift);
                }
                Err(_) => failures += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    let (e_truth, e_oracle, o_truth) = (rms(&err_truth), rms(&err_oracle), rms(&oracle_truth));
    outcome(
        failures == 0
            && max_dx <= SUBPIXEL_RMS_TOL_PX
            && e_truth <= SUBPIXEL_RMS_TOL_PX
            && e_oracle <= SUBPIXEL_RMS_TOL_PX
            && o_truth <= 1.0 / UPSAMPLE as f64
            && elapsed < C2_TIME_LIMIT,
        format!(
            "RMS vs truth {e_truth:.4} px, vs oracle {e_oracle:.4} px (tol {SUBPIXEL_RMS_TOL_PX}), oracle vs truth {o_truth:.4} px, max |dx| {max_dx:.4} px, {failures} failed, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = rng.random_range(0.004..0.2);
        let alpha = rng.random_range(1e-6..2e-5);
        let s = rng.random_range(0.1..3.0);
        let w = rng.random_range(1.0..2000.0);
        let optics = OpticalConfig::new(f, alpha, s).unwrap();
        let got = triangulate(w, &optics).unwrap();
        let expected = (f / alpha) * (s / w);
        worst = worst.max(((got - expected) / expected).abs());
    }
    outcome(
        worst <= TRIANGULATE_REL_TOL,
        format!("max rel error {worst:.2e} over 1000 draws (tol {TRIANGULATE_REL_TOL:.1e})"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    for _ in 0..1000 {
        let w = rng.random_range(8..48);
        let h = rng.random_range(40..300);
        let top = rng.random_range(4.0..h as f64 / 2.0 - 6.0);
        let bottom = rng.random_range(h as f64 / 2.0 + 6.0..h as f64 - 4.0);
        let (sa, sb) = (rng.random_range(0.7..3.0), rng.random_range(0.7..3.0));
        let (aa, ab) = (rng.random_range(5.0..500.0), rng.random_range(5.0..500.0));
        let cx = rng.random_range(0.0..w as f64);
        let mut f = CountFrame::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let g = |cy: f64, s: f64, a: f64| {
                    a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp()
                };
                f.set(x, y, (g(top, sa, aa) + g(bottom, sb, ab)).round() as u32);
            }
        }
        f.origin = (rng.random_range(0..500), rng.random_range(0..500));

        let ok = match split(&f) {
            Ok(s) => {
                let conserved = s
                    .upper
                    .counts()
                    .iter()
                    .zip(s.lower.counts())
                    .zip(f.counts())
                    .all(|((a, b), c)| a + b == *c);
                let between = weighted_y(&s.upper).unwrap() < s.boundary_y
                    && s.boundary_y <= weighted_y(&s.lower).unwrap();
                let y = weighted_y(&f).unwrap();
                let scaled = [2u32, 7, 100].iter().all(|&k| {
                    let mut g = f.clone();
                    g.counts_mut().iter_mut().for_each(|c| *c *= k);
                    (weighted_y(&g).unwrap() - y).abs() <= SCALE_REL_TOL * y.abs()
                });
                conserved && between && scaled
            }
            Err(_) => false,
        };
        violations += usize::from(!ok);
    }
    outcome(violations == 0, format!("{violations} violations in 1000 frames"))
}

fn drive_by(name: &str) -> (f64, usize, usize, Duration) {
    let start = Instant::now();
    let scenario = ScenarioConfig::parse(bundled_scenario(name).unwrap()).unwrap();
    let (stream, truth) = generate(&scenario);
    let cfg = PipelineConfig::new(scenario.optics);
    let estimates = estimate_stream(&stream, &cfg);
    let report = evaluate(&estimates, &truth, RANGE_THRESHOLD_M).unwrap();
    (
        report.fraction_within,
        report.within_threshold,
        report.in_view_windows,
        start.elapsed(),
    )
}

fn criterion_5() -> Outcome {
    let (frac, hit, total, elapsed) = drive_by("pass_20_60m_20kmh");
    outcome(
        frac >= C5_MIN_FRACTION && elapsed < C5_TIME_LIMIT,
        format!(
            "{hit}/{total} windows within {RANGE_THRESHOLD_M} m = {:.2}% (min {:.0}%), {:.1} s",
            100.0 * frac,
            100.0 * C5_MIN_FRACTION,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let (frac, hit, total, _) = drive_by("pass_20_55m_30kmh");
    outcome(
        frac >= C6_MIN_FRACTION,
        format!(
            "{hit}/{total} windows within {RANGE_THRESHOLD_M} m = {:.2}% (min {:.0}%)",
            100.0 * frac,
            100.0 * C6_MIN_FRACTION
        ),
    )
}

/// Streams a mix of blinking-LED pixels and uniform noise through the
/// high-pass gate chunk by chunk. Only the filter calls are timed.
fn criterion_7() -> Outcome {
    let geometry = SensorGeometry::DEFAULT;
    let mut filter = HighPassFilter::new(geometry, HighPassConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let led_pixels: Vec<(u16, u16)> = (0..200)
        .map(|_| (rng.random_range(600..680), rng.random_range(200..520)))
        .collect();
    let mut chunk = Vec::with_capacity(THROUGHPUT_CHUNK);
    let (mut t, mut done, mut passed) = (0u64, 0u64, 0u64);
    let mut timed = Duration::ZERO;
    while done < THROUGHPUT_EVENTS {
        chunk.clear();
        let n = (THROUGHPUT_EVENTS - done).min(THROUGHPUT_CHUNK as u64) as usize;
        for _ in 0..n {
            let r: u64 = rng.random();
            t += u64::from(r & 0xf == 0);
            let (x, y) = if r & 0x10 == 0 {
                led_pixels[(r >> 8) as usize % led_pixels.len()]
            } else {
                (((r >> 16) % 1280) as u16, ((r >> 32) % 720) as u16)
            };
            let p = if r & 0x20 == 0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            chunk.push(Event::new(x, y, t, p));
        }
        let start = Instant::now();
        for ev in &chunk {
            passed += u64::from(filter.accept(ev));
        }
        timed += start.elapsed();
        done += n as u64;
    }
    std::hint::black_box(passed);
    let rate = done as f64 / timed.as_secs_f64();
    outcome(
        rate >= MIN_EVENTS_PER_SEC,
        format!(
            "{:.1} M events/s over {done} events ({:.1}% passed, min {:.0} M/s)",
            rate / 1e6,
            100.0 * passed as f64 / done as f64,
            MIN_EVENTS_PER_SEC / 1e6
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = ScenarioConfig::parse(bundled_scenario("pass_20_60m_20kmh").unwrap()).unwrap();
    scenario.trajectory.duration_s = 0.3;
    let (stream, _) = generate(&scenario);
    let input = dir.path().join("events.bin");
    write_events(&stream, &input, EventFormat::Bin).unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pipeline.cfg");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_ledrange"))
            .args(["estimate", "--input"])
            .arg(&input)
            .args(["--config", config, "--output"])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        (status.success(), std::fs::read(out).unwrap_or_default())
    };
    let (ok_a, a) = run("a.csv");
    let (ok_b, b) = run("b.csv");
    outcome(
        ok_a && ok_b && !a.is_empty() && a == b,
        format!(
            "exit ok {ok_a}/{ok_b}, {} vs {} bytes, identical {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("POC oracle equivalence", criterion_1),
        ("subpixel accuracy", criterion_2),
        ("triangulation exactness", criterion_3),
        ("separation properties", criterion_4),
        ("20 km/h synthetic drive-by", criterion_5),
        ("30 km/h stress drive-by", criterion_6),
        ("high-pass throughput", criterion_7),
        ("estimate determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || id == *f) {
            continue;
        }
        let o = run();
        println!("{} {id}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
