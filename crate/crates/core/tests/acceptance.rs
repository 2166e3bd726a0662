//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. An optional argument filters criteria by
//! substring of their name.

use std::time::Instant;

use noisy_ito::bench::bench;
use noisy_ito::experiments::{reference_differences, Runner};
use noisy_ito::noise::x_perturbation;
use noisy_ito::paths::{BundleSpec, TrajectoryBundle};
use noisy_ito::quadrature::{accumulate_noisy_rm, accumulate_rm, CompensatedSum, NoisySeries};
use noisy_ito::report::to_csv;
use noisy_ito::{
    noise_regime_sweep, strong_error, weak_error, DisturbanceFunction as P, ErrorReport,
    ExperimentConfig, Integrand, NoiseSpec, Payoff, Regime,
};

const M: usize = 2048;
const SEED: u64 = 20_190_612;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ulps(a: f64, b: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * b.abs().max(f64::MIN_POSITIVE))
}

fn pow2_list(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn reference_problems() -> Vec<Integrand> {
    vec![
        Integrand::X2IndepWiener,
        Integrand::x3(),
        Integrand::x4(),
        Integrand::sde(),
    ]
}

fn cfg(problem: Integrand, n_list: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig::new(problem, n_list)
        .with_replicates(M)
        .with_seed(SEED)
}

fn slope(r: &ErrorReport) -> f64 {
    r.fitted_slope.unwrap_or(f64::NAN)
}

fn closed_form_oracle() -> Outcome {
    let report = strong_error(&cfg(Integrand::X1Wiener, vec![4, 16, 64, 256])).unwrap();
    let mut pass = true;
    let mut parts = vec![];
    for p in &report.per_n {
        // Ito isometry: E(I - A_n)^2 = sum dt_i^2 / 2 = T^2 / (2n)
        let oracle = 1.0 / (2.0 * p.n as f64).sqrt();
        let rel = (p.error - oracle).abs() / oracle;
        pass &= rel <= 0.15;
        parts.push(format!(
            "n={} err={:.5} oracle={:.5} rel={:.3} ({:.1} SE)",
            p.n,
            p.error,
            oracle,
            rel,
            (p.error - oracle).abs() / p.stderr
        ));
    }
    outcome(pass, parts.join("; "))
}

fn exact_rates() -> Outcome {
    let mut runs = vec![("x1".to_string(), cfg(Integrand::X1Wiener, pow2_list(2, 10)))];
    for p in reference_problems() {
        runs.push((
            p.name().to_string(),
            cfg(p, vec![4, 16, 64, 256]).with_l_ref(1000),
        ));
    }
    let mut pass = true;
    let mut parts = vec![];
    for (name, c) in runs {
        let s = slope(&strong_error(&c).unwrap());
        pass &= (0.4..=0.6).contains(&s);
        parts.push(format!("{name}={s:.3}"));
    }
    outcome(pass, format!("slopes {}", parts.join(" ")))
}

fn noise_floor() -> Outcome {
    let n = vec![1 << 12, 1 << 14];
    let exact = strong_error(&cfg(Integrand::X1Wiener, n.clone())).unwrap();
    let noisy = strong_error(&cfg(Integrand::X1Wiener, n).with_noise(NoiseSpec::new(
        1e-2,
        P::Identity,
        1e-2,
        P::XtSquared,
    )))
    .unwrap();
    let ratio = |r: &ErrorReport| r.per_n[0].error / r.per_n[1].error;
    let (re, rn) = (ratio(&exact), ratio(&noisy));
    outcome(
        rn < 1.5 && (re - 2.0).abs() <= 0.15 * 2.0,
        format!("noisy ratio {rn:.3} (< 1.5), exact ratio {re:.3} (2 +- 15%)"),
    )
}

fn coupled_regime() -> Outcome {
    let noise = NoiseSpec::new(0.0, P::Identity, 0.0, P::XtSquared);
    let mut runs = vec![("x1".to_string(), cfg(Integrand::X1Wiener, pow2_list(2, 10)))];
    for p in reference_problems().into_iter().take(3) {
        runs.push((
            p.name().to_string(),
            cfg(p, vec![4, 16, 64, 256]).with_l_ref(1000),
        ));
    }
    let mut pass = true;
    let mut parts = vec![];
    for (name, c) in runs {
        let reports = noise_regime_sweep(&c.with_noise(noise.clone()), &Regime::Coupled).unwrap();
        let s = slope(&reports[0]);
        pass &= (0.4..=0.6).contains(&s);
        parts.push(format!("{name}={s:.3}"));
    }
    outcome(pass, format!("slopes {}", parts.join(" ")))
}

fn constant_integrand_exactness() -> Outcome {
    let c = cfg(Integrand::Constant { value: 2.0 }, vec![64])
        .with_l_ref(16)
        .with_noise(NoiseSpec::new(0.0, P::One, 0.05, P::LinearDriftT));
    let diffs =
        reference_differences(&c, &Runner::new(c.effective_threads()).unwrap(), 64).unwrap();
    let worst = diffs.iter().map(|d| ulps(-d, 0.1)).fold(0.0, f64::max);
    // shifted-data variance, so identical values give exactly zero
    let k = diffs[0];
    let m = diffs.len() as f64;
    let (s1, s2) = diffs
        .iter()
        .fold((0.0, 0.0), |(a, b), d| (a + (d - k), b + (d - k) * (d - k)));
    let sd = ((s2 - s1 * s1 / m) / (m - 1.0)).max(0.0).sqrt();
    let report = strong_error(&c).unwrap();
    let err_ulps = ulps(report.per_n[0].error, 0.1);
    let sd_ulps = sd / (f64::EPSILON * 0.1);
    outcome(
        worst <= 8.0 && err_ulps <= 8.0 && sd_ulps <= 8.0,
        format!("error {:.17} ({err_ulps:.1} ulps), worst replicate {worst:.1} ulps, sd {sd_ulps:.1} ulps", report.per_n[0].error),
    )
}

fn same_numbers(a: &ErrorReport, b: &ErrorReport) -> bool {
    a.per_n.iter().zip(&b.per_n).all(|(x, y)| {
        x.error.to_bits() == y.error.to_bits() && x.stderr.to_bits() == y.stderr.to_bits()
    }) && a.fitted_slope.map(f64::to_bits) == b.fitted_slope.map(f64::to_bits)
}

fn shift_cancellation() -> Outcome {
    let runs = [
        cfg(Integrand::X1Wiener, pow2_list(2, 10)),
        cfg(Integrand::X2IndepWiener, vec![4, 16, 64])
            .with_replicates(256)
            .with_l_ref(50),
        cfg(Integrand::x4(), vec![4, 16, 64])
            .with_replicates(256)
            .with_l_ref(50),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for c in runs {
        let exact = strong_error(&c).unwrap();
        for d2 in [1e-3, 0.37, 5.0] {
            let shifted =
                strong_error(
                    &c.clone()
                        .with_noise(NoiseSpec::new(0.0, P::One, d2, P::One)),
                )
                .unwrap();
            let same = same_numbers(&exact, &shifted);
            pass &= same;
            if !same {
                parts.push(format!("{} d2={d2} differs", c.problem));
            }
        }
    }
    outcome(
        pass,
        if parts.is_empty() {
            "all runs bit-identical".into()
        } else {
            parts.join("; ")
        },
    )
}

fn additive_x_identity() -> Outcome {
    let (n, d1) = (64usize, 1e-2);
    let noise = NoiseSpec::new(d1, P::One, 0.0, P::One);
    let spec = BundleSpec {
        n_fine: n,
        horizon: 1.0,
        with_w2: false,
        intensity: None,
    };
    let times: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let mut worst = 0.0f64;
    let mut sq = 0.0;
    for j in 0..M {
        let b = TrajectoryBundle::generate(&spec, SEED, j as u64).unwrap();
        let w = b.w();
        let x = &w[..n];
        let px: Vec<f64> = x
            .iter()
            .zip(&times)
            .map(|(&v, &t)| x_perturbation(v, t, &noise))
            .collect();
        let mut acc = CompensatedSum::new();
        accumulate_noisy_rm(
            &mut acc,
            NoisySeries {
                exact: x,
                perturbation: Some(&px),
            },
            NoisySeries::exact(w),
            false,
        )
        .unwrap();
        accumulate_rm(&mut acc, x, w, true);
        let diff = acc.value();
        let expected = d1 * w[n];
        worst = worst.max(ulps(diff, expected));
        sq += diff * diff;
    }
    let rms = (sq / M as f64).sqrt();
    let rel = (rms - d1).abs() / d1;
    outcome(
        worst <= 4.0 && rel <= 0.10,
        format!("worst {worst:.1} ulps, RMS {rms:.6} vs {d1} (rel {rel:.3})"),
    )
}

fn regularity_blowup() -> Outcome {
    let mut parts = vec![];
    let mut errs = vec![];
    for pw in [P::SqrtAbs, P::XAbsXHalf, P::XtSquared] {
        let c = cfg(Integrand::X1Wiener, vec![1 << 6, 1 << 12]).with_noise(NoiseSpec::new(
            0.0,
            P::One,
            1e-2,
            pw.clone(),
        ));
        let r = strong_error(&c).unwrap();
        let (lo, hi) = (r.per_n[0].error, r.per_n[1].error);
        parts.push(format!("{}: {lo:.4} -> {hi:.4}", pw.name()));
        errs.push((lo, hi));
    }
    let pass = errs[0].1 > errs[0].0 && errs[1].1 > errs[1].0 && errs[2].1 < errs[2].0;
    outcome(pass, format!("n=64 -> 4096: {}", parts.join(", ")))
}

fn weak_approximation() -> Outcome {
    let c = cfg(Integrand::sde(), vec![4, 256]).with_l_ref(1000);
    let put = Payoff::Put { strike: 2.0 };
    let exact = weak_error(&c, put).unwrap();
    let noisy = weak_error(
        &c.with_noise(NoiseSpec::new(1e-2, P::Identity, 1e-2, P::XtSquared)),
        put,
    )
    .unwrap();
    let (e4, e256) = (exact.per_n[0].error, exact.per_n[1].error);
    let floor = noisy.per_n[1].error;
    outcome(
        e256 < e4 && floor >= 1e-3,
        format!("exact {e4:.4} -> {e256:.4}; noisy n=256 {floor:.4} (>= 1e-3)"),
    )
}

fn thread_determinism() -> Outcome {
    let runs = [
        cfg(Integrand::X1Wiener, pow2_list(2, 10)).with_noise(NoiseSpec::new(
            1e-2,
            P::Identity,
            1e-2,
            P::XtSquared,
        )),
        cfg(Integrand::x4(), vec![4, 16, 64])
            .with_replicates(256)
            .with_l_ref(100),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for c in runs {
        let csv: Vec<String> = [1, 2, 8]
            .iter()
            .map(|&t| to_csv(&strong_error(&c.clone().with_threads(t)).unwrap()).unwrap())
            .collect();
        let mut same = csv.iter().all(|s| *s == csv[0]);
        if c.problem != Integrand::X1Wiener {
            let weak: Vec<String> = [1, 2, 8]
                .iter()
                .map(|&t| {
                    to_csv(&weak_error(&c.clone().with_threads(t), Payoff::default()).unwrap())
                        .unwrap()
                })
                .collect();
            same &= weak.iter().all(|s| *s == weak[0]);
        }
        pass &= same;
        parts.push(format!(
            "{}: {}",
            c.problem,
            if same { "identical" } else { "DIFFERENT" }
        ));
    }
    outcome(pass, format!("threads 1/2/8: {}", parts.join(", ")))
}

fn bench_speedup() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = bench(&cfg(Integrand::X1Wiener, pow2_list(2, 12)), &[1, 2, 8]).unwrap();
    let best = table.rows.iter().map(|r| r.speedup).fold(0.0, f64::max);
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{}t {:.2}s x{:.2}", r.threads, r.seconds, r.speedup))
        .collect();
    let identical = table.all_identical();
    if cores < 2 {
        // a speedup cannot be observed on one core
        return outcome(
            identical,
            format!(
                "{}; identical={identical}; speedup NOT VERIFIED (1 core)",
                rows.join(", ")
            ),
        );
    }
    outcome(
        identical && best > 1.0,
        format!("{}; identical={identical}; {cores} cores", rows.join(", ")),
    )
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 11] = [
        ("01_closed_form_oracle", closed_form_oracle),
        ("02_exact_information_rates", exact_rates),
        ("03_noise_floor", noise_floor),
        ("04_coupled_regime", coupled_regime),
        (
            "05_constant_integrand_exactness",
            constant_integrand_exactness,
        ),
        ("06_shift_cancellation", shift_cancellation),
        ("07_additive_x_identity", additive_x_identity),
        ("08_regularity_blowup", regularity_blowup),
        ("09_weak_approximation", weak_approximation),
        ("10_thread_determinism", thread_determinism),
        ("11_bench_speedup", bench_speedup),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {name} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
