//! Cumulative count series over threshold grids, power-law fits and reports.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arithmetic::{
    check_prime_bound, is_prime, ratio_spread, ModPSummary, PrimeCounts, SieveRatioRow,
};
use crate::descartes::{Curvature, Quadruple, RootQuadruple};
use crate::error::{Error, Result};
use crate::orbit::{enumerate_into, CircleEvent, CircleSink, EnumerationOptions};

/// Residual dimension of the Apollonian gasket as computed by McMullen.
pub const REFERENCE_ALPHA: f64 = 1.30568;

/// Thresholds `round(t0·rᵏ)` up to and including `tmax`.
pub fn geometric_thresholds(t0: Curvature, tmax: Curvature, ratio: f64) -> Result<Vec<Curvature>> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::InvalidInput(format!(
            "grid ratio {ratio} must exceed 1"
        )));
    }
    if t0 < 1 || tmax < t0 {
        return Err(Error::InvalidInput(format!(
            "grid needs 1 <= t0 <= tmax, got t0={t0}, tmax={tmax}"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0i32;
    loop {
        let t = (t0 as f64 * ratio.powi(k)).round();
        if t >= tmax as f64 {
            break;
        }
        let t = t as Curvature;
        if out.last() != Some(&t) {
            out.push(t);
        }
        k += 1;
    }
    if out.last() != Some(&tmax) {
        out.push(tmax);
    }
    Ok(out)
}

/// Thresholds with `points_per_decade` grid points per factor of ten.
pub fn decade_thresholds(
    t0: Curvature,
    tmax: Curvature,
    points_per_decade: u32,
) -> Result<Vec<Curvature>> {
    geometric_thresholds(t0, tmax, 10f64.powf(1.0 / points_per_decade.max(1) as f64))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub wall_time_secs: f64,
    pub workers: usize,
    /// False when a streamed run stopped early.
    pub complete: bool,
}

/// Cumulative counts at each threshold `T` (curvature `< T`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub root: Option<Quadruple>,
    pub thresholds: Vec<Curvature>,
    pub n: Vec<u64>,
    pub n2: Vec<u64>,
    /// Present when prime statistics were gathered.
    pub pi: Option<Vec<u64>>,
    pub pi2: Option<Vec<u64>>,
    pub meta: SeriesMeta,
}

/// One CSV row of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesRow {
    #[serde(rename = "T")]
    pub t: Curvature,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "N2")]
    pub n2: u64,
    pub pi: Option<u64>,
    pub pi2: Option<u64>,
}

/// Histogram sink: each event lands in the first threshold above its curvature.
struct GridSink {
    thresholds: Arc<Vec<Curvature>>,
    primes: bool,
    n: Vec<u64>,
    n2: Vec<u64>,
    pi: Vec<u64>,
    pi2: Vec<u64>,
}

impl GridSink {
    fn new(thresholds: Arc<Vec<Curvature>>, primes: bool) -> Self {
        let len = thresholds.len();
        GridSink {
            thresholds,
            primes,
            n: vec![0; len],
            n2: vec![0; len],
            pi: vec![0; len],
            pi2: vec![0; len],
        }
    }

    fn bin(&self, curvature: Curvature) -> Option<usize> {
        let idx = self.thresholds.partition_point(|&t| t <= curvature);
        (idx < self.thresholds.len()).then_some(idx)
    }
}

fn prime(x: Curvature) -> bool {
    is_prime(x).unwrap_or(false)
}

impl CircleSink for GridSink {
    fn record(&mut self, e: &CircleEvent) {
        let Some(idx) = self.bin(e.curvature) else {
            return;
        };
        self.n[idx] += 1;
        if e.depth > 0 {
            self.n2[idx] += 3;
        }
        if self.primes && prime(e.curvature) {
            self.pi[idx] += 1;
            if e.depth > 0 {
                self.pi2[idx] += e.parents.iter().filter(|&&p| prime(p)).count() as u64;
            }
        }
    }

    fn merge(&mut self, other: Self) {
        for (a, b) in [
            (&mut self.n, &other.n),
            (&mut self.n2, &other.n2),
            (&mut self.pi, &other.pi),
            (&mut self.pi2, &other.pi2),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn cumulative(bins: &[u64]) -> Vec<u64> {
    bins.iter()
        .scan(0u64, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl CountSeries {
    /// Counts at every threshold in a single walk bounded by the largest threshold.
    /// Prime statistics are gathered when `with_primes` is set.
    pub fn compute(
        root: &RootQuadruple,
        thresholds: &[Curvature],
        opts: &EnumerationOptions,
        with_primes: bool,
    ) -> Result<CountSeries> {
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "thresholds must increase strictly".into(),
            ));
        }
        let Some(&top) = thresholds.last() else {
            return Ok(CountSeries::empty());
        };
        if with_primes {
            check_prime_bound(root, top)?;
        }
        let started = Instant::now();
        let shared = Arc::new(thresholds.to_vec());
        let (mut sink, _) = enumerate_into(root, top, opts, || {
            GridSink::new(shared.clone(), with_primes)
        })?;
        let q = root.quad();
        let e = q.entries();
        for i in 0..4 {
            for j in i + 1..4 {
                if let Some(idx) = sink.bin(e[i].max(e[j])) {
                    sink.n2[idx] += 1;
                    if with_primes && prime(e[i]) && prime(e[j]) {
                        sink.pi2[idx] += 1;
                    }
                }
            }
        }
        Ok(CountSeries {
            root: Some(q),
            thresholds: thresholds.to_vec(),
            n: cumulative(&sink.n),
            n2: cumulative(&sink.n2),
            pi: with_primes.then(|| cumulative(&sink.pi)),
            pi2: with_primes.then(|| cumulative(&sink.pi2)),
            meta: SeriesMeta {
                wall_time_secs: started.elapsed().as_secs_f64(),
                workers: opts.workers,
                complete: true,
            },
        })
    }

    pub fn empty() -> CountSeries {
        CountSeries {
            root: None,
            thresholds: Vec::new(),
            n: Vec::new(),
            n2: Vec::new(),
            pi: None,
            pi2: None,
            meta: SeriesMeta {
                complete: true,
                ..Default::default()
            },
        }
    }

    /// Series carrying only `N`; used for fits of external data.
    pub fn from_counts(thresholds: Vec<Curvature>, n: Vec<u64>) -> Result<CountSeries> {
        if thresholds.len() != n.len() {
            return Err(Error::InvalidInput(
                "thresholds and counts differ in length".into(),
            ));
        }
        let n2 = n.iter().map(|&x| (3 * x).saturating_sub(6)).collect();
        Ok(CountSeries {
            root: None,
            thresholds,
            n,
            n2,
            pi: None,
            pi2: None,
            meta: SeriesMeta {
                complete: true,
                ..Default::default()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn row(&self, i: usize) -> SeriesRow {
        SeriesRow {
            t: self.thresholds[i],
            n: self.n[i],
            n2: self.n2[i],
            pi: self.pi.as_ref().map(|v| v[i]),
            pi2: self.pi2.as_ref().map(|v| v[i]),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SeriesRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    pub fn prime_counts(&self) -> Vec<PrimeCounts> {
        match (&self.pi, &self.pi2) {
            (Some(pi), Some(pi2)) => self
                .thresholds
                .iter()
                .zip(pi.iter().zip(pi2))
                .map(|(&bound, (&pi, &pi2))| PrimeCounts { bound, pi, pi2 })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `(T, N₂ == 3N − 6)` for every threshold above the root maximum.
    pub fn pair_identity(&self) -> Vec<(Curvature, bool)> {
        let floor = self.root.map(|q| q.max_entry()).unwrap_or(Curvature::MIN);
        self.rows()
            .filter(|r| r.t > floor)
            .map(|r| (r.t, r.n2 + 6 == 3 * r.n))
            .collect()
    }

    pub fn is_monotone(&self) -> bool {
        let inc = |v: &[u64]| v.windows(2).all(|w| w[0] <= w[1]);
        inc(&self.n)
            && inc(&self.n2)
            && self.pi.as_deref().is_none_or(inc)
            && self.pi2.as_deref().is_none_or(inc)
    }

    /// Indices of the top two decades of the grid.
    pub fn default_window(&self) -> Range<usize> {
        let Some(&top) = self.thresholds.last() else {
            return 0..0;
        };
        let start = self.thresholds.partition_point(|&t| t * 100 < top);
        start..self.len()
    }

    /// Indices with `lo ≤ T ≤ hi`.
    pub fn window_between(&self, lo: Curvature, hi: Curvature) -> Range<usize> {
        let start = self.thresholds.partition_point(|&t| t < lo);
        let end = self.thresholds.partition_point(|&t| t <= hi);
        start..end.max(start)
    }

    pub const CSV_HEADER: &'static str = "T,N,N2,pi,pi2";

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(Self::CSV_HEADER.split(','))?;
        for r in self.rows() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<CountSeries> {
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let rows = rd
            .deserialize::<SeriesRow>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let has_primes = !rows.is_empty() && rows.iter().all(|r| r.pi.is_some() && r.pi2.is_some());
        Ok(CountSeries {
            root: None,
            thresholds: rows.iter().map(|r| r.t).collect(),
            n: rows.iter().map(|r| r.n).collect(),
            n2: rows.iter().map(|r| r.n2).collect(),
            pi: has_primes.then(|| rows.iter().map(|r| r.pi.unwrap_or(0)).collect()),
            pi2: has_primes.then(|| rows.iter().map(|r| r.pi2.unwrap_or(0)).collect()),
            meta: SeriesMeta {
                complete: true,
                ..Default::default()
            },
        })
    }
}

/// Least-squares power law `N ≈ c·T^α` over a window of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha_hat: f64,
    pub c_hat: f64,
    /// Root-mean-square residual in log space.
    pub rms_residual: f64,
    pub window: Range<usize>,
    pub t_lo: Curvature,
    pub t_hi: Curvature,
    pub points: usize,
}

/// Plain OLS of `y` on `x`; returns `(slope, intercept, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::InvalidInput(
            "degenerate fit window: all thresholds equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

/// Fits `log N = log c + α log T` on the window, skipping points with `N = 0`.
pub fn fit_exponent(series: &CountSeries, window: Range<usize>) -> Result<FitResult> {
    if window.end > series.len() {
        return Err(Error::InvalidInput(format!(
            "window {window:?} exceeds series of length {}",
            series.len()
        )));
    }
    let pts: Vec<(Curvature, u64)> = window
        .clone()
        .map(|i| (series.thresholds[i], series.n[i]))
        .filter(|&(t, n)| n > 0 && t > 0)
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "fit needs at least 3 positive points, window has {}",
            pts.len()
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, n)| (n as f64).ln()).collect();
    let (alpha_hat, intercept, rms_residual) = least_squares(&xs, &ys)?;
    Ok(FitResult {
        alpha_hat,
        c_hat: intercept.exp(),
        rms_residual,
        window,
        t_lo: pts[0].0,
        t_hi: pts[pts.len() - 1].0,
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a run produced, bundled for JSON output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub root: Option<Quadruple>,
    pub series: Vec<SeriesRow>,
    pub fit: Option<FitResult>,
    pub alpha_reference: f64,
    pub alpha_deviation: Option<f64>,
    pub sieve: Vec<SieveRatioRow>,
    pub sieve_spread: Option<(f64, f64)>,
    pub densities: Vec<ModPSummary>,
    pub checks: Vec<CheckVerdict>,
    pub meta: SeriesMeta,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn report(
    series: &CountSeries,
    fit: Option<FitResult>,
    sieve: Vec<SieveRatioRow>,
    densities: Vec<ModPSummary>,
) -> Report {
    let mut checks: Vec<CheckVerdict> = series
        .pair_identity()
        .into_iter()
        .map(|(t, ok)| CheckVerdict {
            name: format!("N2 = 3N - 6 at T={t}"),
            passed: ok,
            detail: String::new(),
        })
        .collect();
    checks.push(CheckVerdict {
        name: "series monotone".into(),
        passed: series.is_monotone(),
        detail: String::new(),
    });
    for c in series.prime_counts() {
        let i = series.thresholds.partition_point(|&t| t < c.bound);
        checks.push(CheckVerdict {
            name: format!("pi2 <= 3 pi <= 3 N at T={}", c.bound),
            passed: c.pi2 <= 3 * c.pi && c.pi <= series.n[i],
            detail: format!("pi={} pi2={} N={}", c.pi, c.pi2, series.n[i]),
        });
    }
    for d in &densities {
        checks.push(CheckVerdict {
            name: format!("orbit mod {} within cone", d.p),
            passed: d.orbit_size <= d.cone_size,
            detail: format!("good={}", d.good),
        });
    }
    let sieve_spread = sieve
        .first()
        .zip(sieve.last())
        .and_then(|(a, b)| ratio_spread(&sieve, a.bound, b.bound));
    Report {
        schema: "1".into(),
        root: series.root,
        series: series.rows().collect(),
        alpha_deviation: fit.as_ref().map(|f| f.alpha_hat - REFERENCE_ALPHA),
        fit,
        alpha_reference: REFERENCE_ALPHA,
        sieve,
        sieve_spread,
        densities,
        checks,
        meta: series.meta.clone(),
    }
}
