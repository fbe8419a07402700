//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use apollonian::analysis::{decade_thresholds, fit_exponent, CountSeries, REFERENCE_ALPHA};
use apollonian::arithmetic::{
    cone_points_mod_p, orbit_mod, orbit_mod_p, prime_counts, ratio_spread, sieve_ratio_report,
    squarefree_density, ModOptions, SliceFn,
};
use apollonian::geometry::{invert_circle, render_svg, walk_configurations, RenderOptions};
use apollonian::orbit::{
    count_circles, count_tangent_pairs, enumerate_circles, EnumerationOptions,
};
use apollonian::{Curvature, Error, Quadruple, RootQuadruple};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn root(a: i128, b: i128, c: i128, d: i128) -> RootQuadruple {
    RootQuadruple::new(Quadruple::new(a, b, c, d)).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs, || {
        format!(
            "{what} took {:.2}s, limit {limit_secs}s",
            elapsed.as_secs_f64()
        )
    })
}

// Plain Descartes form and flip on arrays, independent of the library.
fn form(q: [i128; 4]) -> i128 {
    let s: i128 = q.iter().sum();
    2 * q.iter().map(|x| x * x).sum::<i128>() - s * s
}

fn flip(q: [i128; 4], i: usize) -> [i128; 4] {
    let mut out = q;
    out[i] = 2 * (q.iter().sum::<i128>() - q[i]) - q[i];
    out
}

fn exact_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut steps = 0;
    for r in [root(-1, 2, 2, 3), root(0, 0, 1, 1)] {
        let mut q = r.quad();
        let mut last = None;
        for _ in 0..10_000 {
            let mut slot = rng.gen_range(0..4);
            // random non-returning walk, restarted before curvatures leave i128 comfort
            if Some(slot) == last {
                slot = (slot + 1) % 4;
            }
            let next = q.flip(slot).map_err(|e| e.to_string())?;
            ensure(next.flip(slot).map_err(|e| e.to_string())? == q, || {
                format!("flip {slot} of {q} is not an involution")
            })?;
            ensure(next.0 == flip(q.0, slot), || {
                format!("flip {slot} of {q} disagrees with the plain formula")
            })?;
            ensure(
                next.form().map_err(|e| e.to_string())? == 0 && form(next.0) == 0,
                || format!("form nonzero at {next}"),
            )?;
            q = if next.max_entry() > 1 << 60 {
                r.quad()
            } else {
                next
            };
            last = if q == r.quad() { None } else { Some(slot) };
            steps += 1;
        }
    }
    within(start.elapsed(), 1.0, "algebra suite")?;
    Ok(format!(
        "{steps} random flips, form preserved, {:.3}s",
        start.elapsed().as_secs_f64()
    ))
}

/// Every non-returning word of length 1..=depth, no pruning.
fn word_oracle(q: [i128; 4], depth: u32, bound: Curvature) -> BTreeMap<Curvature, usize> {
    fn go(
        q: [i128; 4],
        last: Option<usize>,
        left: u32,
        bound: Curvature,
        out: &mut BTreeMap<Curvature, usize>,
    ) {
        if left == 0 {
            return;
        }
        for i in 0..4 {
            if Some(i) == last {
                continue;
            }
            let next = flip(q, i);
            if next[i] < bound {
                *out.entry(next[i]).or_default() += 1;
            }
            go(next, Some(i), left - 1, bound, out);
        }
    }
    let mut out = BTreeMap::new();
    go(q, None, depth, bound, &mut out);
    out
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let r = root(-1, 2, 2, 3);
    let opts = EnumerationOptions {
        max_depth: Some(8),
        ..EnumerationOptions::default()
    };
    let mut sizes = Vec::new();
    for t in [4, 10, 100] {
        let mut got = BTreeMap::new();
        enumerate_circles(&r, t, &opts, |e| {
            if e.depth > 0 {
                *got.entry(e.curvature).or_default() += 1;
            }
        })
        .map_err(|e| e.to_string())?;
        let want = word_oracle(r.quad().0, 8, t);
        ensure(got == want, || {
            format!("T={t}: pruned {got:?} vs oracle {want:?}")
        })?;
        sizes.push(got.values().sum::<usize>());
    }
    let n10 = count_circles(&r, 10, &EnumerationOptions::default()).map_err(|e| e.to_string())?;
    ensure(n10 == 9, || format!("N(10) = {n10}, expected 9"))?;
    within(start.elapsed(), 10.0, "oracle comparison")?;
    Ok(format!("created circles at T=4,10,100: {sizes:?}; N(10)=9"))
}

fn pair_identity() -> Outcome {
    let ts = decade_thresholds(10, 100_000, 4).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for r in [root(-1, 2, 2, 3), root(0, 0, 1, 1)] {
        let opts = EnumerationOptions::with_workers(4);
        let series = CountSeries::compute(&r, &ts, &opts, false).map_err(|e| e.to_string())?;
        for (i, &t) in ts.iter().enumerate() {
            if t <= r.quad().max_entry() {
                continue;
            }
            let n = series.n[i];
            ensure(series.n2[i] == 3 * n - 6, || {
                format!(
                    "{r} T={t}: binned N2={} vs 3N-6={}",
                    series.n2[i],
                    3 * n - 6
                )
            })?;
            let c = count_tangent_pairs(&r, t, &opts).map_err(|e| e.to_string())?;
            ensure(c.direct == 3 * n - 6 && c.formula == 3 * n - 6, || {
                format!(
                    "{r} T={t}: direct {} formula {} vs 3N-6={}",
                    c.direct,
                    c.formula,
                    3 * n - 6
                )
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} thresholds on two roots, exact"))
}

struct Basic {
    series: CountSeries,
    elapsed: Duration,
}

fn basic_series() -> Result<Basic, String> {
    let ts = decade_thresholds(10, 1_000_000, 8).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let series = CountSeries::compute(
        &root(-1, 2, 2, 3),
        &ts,
        &EnumerationOptions::with_workers(1),
        true,
    )
    .map_err(|e| e.to_string())?;
    Ok(Basic {
        series,
        elapsed: start.elapsed(),
    })
}

fn exponent(b: &Basic) -> Outcome {
    let s = &b.series;
    let fit = fit_exponent(s, s.window_between(10_000, 1_000_000)).map_err(|e| e.to_string())?;
    ensure((1.25..=1.36).contains(&fit.alpha_hat), || {
        format!("alpha_hat {:.5} outside [1.25, 1.36]", fit.alpha_hat)
    })?;
    within(b.elapsed, 60.0, "single-threaded series to 1e6")?;
    let r = root(-1, 2, 2, 3);
    let one = *s.n.last().unwrap();
    let eight = count_circles(&r, 1_000_000, &EnumerationOptions::with_workers(8))
        .map_err(|e| e.to_string())?;
    ensure(one == eight, || {
        format!("N(1e6): 1 worker {one}, 8 workers {eight}")
    })?;
    Ok(format!(
        "alpha_hat {:.5} (reference {REFERENCE_ALPHA}), c_hat {:.4}, {:.1}s single-threaded, N(1e6)={one} at 1 and 8 workers",
        fit.alpha_hat,
        fit.c_hat,
        b.elapsed.as_secs_f64()
    ))
}

fn prime_shape(b: &Basic) -> Outcome {
    let s = &b.series;
    let fit = fit_exponent(s, s.window_between(10_000, 1_000_000)).map_err(|e| e.to_string())?;
    let rows = sieve_ratio_report(&s.prime_counts(), fit.alpha_hat);
    let (sp, sp2) = ratio_spread(&rows, 10_000, 1_000_000).ok_or("no thresholds in [1e4, 1e6]")?;
    ensure(sp <= 3.0 && sp2 <= 3.0, || {
        format!("spreads {sp:.3}, {sp2:.3} exceed 3")
    })?;
    let pc = prime_counts(&root(-1, 2, 2, 3), 10, &EnumerationOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(pc.pi == 4, || format!("pi(10) = {}, expected 4", pc.pi))?;
    Ok(format!(
        "spread pi {sp:.3}, pi2 {sp2:.3} over [1e4, 1e6]; pi(10)=4"
    ))
}

fn mod_p() -> Outcome {
    let start = Instant::now();
    let r = root(-1, 2, 2, 3);
    let opts = ModOptions::default();
    let to_f = |x: Ratio<u64>| *x.numer() as f64 / *x.denom() as f64;
    let mut good = Vec::new();
    for p in [7u32, 11, 13, 17] {
        let orbit = orbit_mod_p(&r, p, &opts).map_err(|e| e.to_string())?;
        let cone = cone_points_mod_p(p, true, &opts).map_err(|e| e.to_string())?;
        let same = cone.points.as_deref() == Some(orbit.points.as_slice());
        let tol = 10.0 * (p as f64).powf(-1.5);
        let g1 = to_f(orbit.density(SliceFn::X1).map_err(|e| e.to_string())?);
        let g2 = to_f(orbit.density(SliceFn::X1X2).map_err(|e| e.to_string())?);
        let pf = p as f64;
        if same && (g1 - 1.0 / pf).abs() <= tol && (g2 - 2.0 / pf).abs() <= tol {
            good.push(p);
        }
    }
    ensure(good.len() >= 3, || {
        format!("only {good:?} satisfy the set and density checks")
    })?;
    let direct = orbit_mod(&r.quad(), 35, &opts).map_err(|e| e.to_string())?;
    for f in [SliceFn::X1, SliceFn::X1X2] {
        let d = direct.density(f).map_err(|e| e.to_string())?;
        let crt = squarefree_density(&r, 35, f, &opts).map_err(|e| e.to_string())?;
        ensure(d == crt, || {
            format!("{f:?}: density mod 35 {d} vs product {crt}")
        })?;
    }
    let sizes = (
        orbit_mod_p(&r, 5, &opts).map_err(|e| e.to_string())?.len(),
        orbit_mod_p(&r, 7, &opts).map_err(|e| e.to_string())?.len(),
    );
    ensure(direct.len() == sizes.0 * sizes.1, || {
        format!("orbit mod 35 has {} points", direct.len())
    })?;
    within(start.elapsed(), 30.0, "mod-p suite")?;
    Ok(format!(
        "orbit = cone with density bounds for p in {good:?}; mod 35 factors as 5 x 7"
    ))
}

fn geometry() -> Outcome {
    let mut worst = [0f64; 3];
    let mut visits = 0;
    for r in [root(-1, 2, 2, 3), root(0, 0, 1, 1)] {
        walk_configurations(&r, None, Some(6), |v| {
            visits += 1;
            let (row, pair) = v.config.residuals();
            worst[0] = worst[0].max(row);
            worst[1] = worst[1].max(pair);
            worst[2] = worst[2].max(v.config.conjugation_check()?);
            if v.depth <= 4 {
                for slot in 0..4 {
                    let image =
                        invert_circle(&v.config.row(slot).shape()?, &v.config.dual_circle(slot)?)?;
                    let target = v.config.propagate(slot)?.row(slot).shape()?;
                    if !image.approx_eq(&target, 1e-7) {
                        return Err(Error::InternalInvariant(format!(
                            "inversion of slot {slot} at {} disagrees with propagation",
                            v.quad
                        )));
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    }
    ensure(worst[0] <= 1e-9, || {
        format!("cocurvature residual {:e}", worst[0])
    })?;
    ensure(worst[1] <= 1e-9, || {
        format!("tangency residual {:e}", worst[1])
    })?;
    ensure(worst[2] < 1e-6, || {
        format!("conjugation residual {:e}", worst[2])
    })?;
    let r = root(-1, 2, 2, 3);
    let svg = render_svg(
        &r,
        &RenderOptions {
            bound: Some(10),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let elements = svg.matches("<circle").count() + svg.matches("<line").count();
    let n = count_circles(&r, 10, &EnumerationOptions::default()).map_err(|e| e.to_string())?;
    ensure(elements as u64 == n, || {
        format!("SVG has {elements} elements, N(10)={n}")
    })?;
    Ok(format!(
        "{visits} configurations to depth 6: row {:.1e}, tangency {:.1e}, conjugation {:.1e}; SVG elements {elements} = N(10)",
        worst[0], worst[1], worst[2]
    ))
}

fn robustness() -> Outcome {
    let big = root(-1, 2, 2, 3)
        .quad()
        .scaled(i128::MAX / 16)
        .map_err(|e| e.to_string())?;
    let r = RootQuadruple::new(big).map_err(|e| e.to_string())?;
    for workers in [1, 4] {
        let opts = EnumerationOptions::with_workers(workers);
        for bound in [10 * (i128::MAX / 16), i128::MAX] {
            match count_circles(&r, bound, &opts) {
                Err(Error::Overflow) => {}
                other => {
                    return Err(format!(
                        "{workers} workers, bound {bound}: expected overflow error, got {other:?}"
                    ))
                }
            }
        }
        match count_tangent_pairs(&r, i128::MAX, &opts) {
            Err(Error::Overflow) => {}
            other => {
                return Err(format!(
                    "tangent pairs with {workers} workers: got {other:?}"
                ))
            }
        }
    }
    Ok(format!(
        "root {big} overflows with an error at 1 and 4 workers"
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |label: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS [{label}] {detail}"),
        Err(why) => {
            failures += 1;
            println!("FAIL [{label}] {why}");
        }
    };
    report("1 exact algebra", exact_algebra());
    report("2 oracle equivalence", oracle_equivalence());
    report("3 tangent pair identity", pair_identity());
    match basic_series() {
        Ok(b) => {
            report("4 exponent reproduction", exponent(&b));
            report("5 prime count shape", prime_shape(&b));
        }
        Err(e) => {
            report("4 exponent reproduction", Err(e.clone()));
            report("5 prime count shape", Err(e));
        }
    }
    report("6 orbit mod p", mod_p());
    report("7 geometry", geometry());
    report("8 overflow robustness", robustness());
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
