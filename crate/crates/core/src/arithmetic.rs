//! Prime curvatures and the orbit of a root quadruple modulo small integers.

use std::collections::{HashSet, VecDeque};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::descartes::{Curvature, Quadruple, RootQuadruple};
use crate::error::{Error, Result};
use crate::orbit::{enumerate_into, CircleEvent, CircleSink, EnumerationOptions};

const SMALL_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the first twelve primes as witnesses cover all of `u64`.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in SMALL_PRIMES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in SMALL_PRIMES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primality of a curvature. Negative curvatures are never prime; values beyond
/// `u64` are unsupported.
pub fn is_prime(n: Curvature) -> Result<bool> {
    if n < 0 {
        return Ok(false);
    }
    u64::try_from(n)
        .map(is_prime_u64)
        .map_err(|_| Error::Unsupported(format!("primality of {n} (beyond 64 bits)")))
}

/// `π(T)` and `π₂(T)` for one bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeCounts {
    pub bound: Curvature,
    /// Circles of prime curvature below the bound.
    pub pi: u64,
    /// Tangent pairs of circles both of prime curvature below the bound.
    pub pi2: u64,
}

#[derive(Default)]
struct PrimeSink {
    pi: u64,
    pi2: u64,
}

impl CircleSink for PrimeSink {
    fn record(&mut self, e: &CircleEvent) {
        // bounds are capped at u64 before the walk, so these never error
        if !is_prime(e.curvature).unwrap_or(false) {
            return;
        }
        self.pi += 1;
        if e.depth > 0 {
            self.pi2 += e
                .parents
                .iter()
                .filter(|&&p| is_prime(p).unwrap_or(false))
                .count() as u64;
        }
    }

    fn merge(&mut self, other: Self) {
        self.pi += other.pi;
        self.pi2 += other.pi2;
    }
}

/// Prime pairs among the six root tangencies.
pub fn root_prime_pairs(root: &Quadruple) -> u64 {
    let e = root.entries();
    let mut n = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            if is_prime(e[i]).unwrap_or(false) && is_prime(e[j]).unwrap_or(false) {
                n += 1;
            }
        }
    }
    n
}

pub(crate) fn check_prime_bound(root: &RootQuadruple, bound: Curvature) -> Result<()> {
    if !root.is_primitive() {
        return Err(Error::InvalidInput(format!(
            "prime counts need a primitive packing; {root} has content {}",
            root.quad().content()?
        )));
    }
    if bound <= root.quad().max_entry() {
        return Err(Error::InvalidInput(format!(
            "prime counts need a bound above the root maximum {}",
            root.quad().max_entry()
        )));
    }
    if bound > u64::MAX as i128 + 1 {
        return Err(Error::Unsupported(format!(
            "prime counting bound {bound} beyond 64 bits"
        )));
    }
    Ok(())
}

/// Counts prime circles and tangent prime pairs with curvature `< bound`.
///
/// Pairs are the six root pairs plus, for every created circle, its three parents.
pub fn prime_counts(
    root: &RootQuadruple,
    bound: Curvature,
    opts: &EnumerationOptions,
) -> Result<PrimeCounts> {
    check_prime_bound(root, bound)?;
    let (sink, _) = enumerate_into(root, bound, opts, PrimeSink::default)?;
    Ok(PrimeCounts {
        bound,
        pi: sink.pi,
        pi2: sink.pi2 + root_prime_pairs(&root.quad()),
    })
}

/// One row of the normalized prime-count table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveRatioRow {
    pub bound: Curvature,
    /// `π(T)·log T / T^α`
    pub pi_ratio: f64,
    /// `π₂(T)·(log T)² / T^α`
    pub pi2_ratio: f64,
}

/// Normalizes prime counts by the expected growth `T^α / log T` and `T^α / (log T)²`.
pub fn sieve_ratio_report(counts: &[PrimeCounts], alpha: f64) -> Vec<SieveRatioRow> {
    counts
        .iter()
        .filter(|c| c.bound > 1)
        .map(|c| {
            let t = c.bound as f64;
            let log_t = t.ln();
            let scale = t.powf(alpha);
            SieveRatioRow {
                bound: c.bound,
                pi_ratio: c.pi as f64 * log_t / scale,
                pi2_ratio: c.pi2 as f64 * log_t * log_t / scale,
            }
        })
        .collect()
}

/// `max/min` of each ratio over rows with `lo ≤ T ≤ hi`; `None` when no row qualifies
/// or a ratio is zero.
pub fn ratio_spread(rows: &[SieveRatioRow], lo: Curvature, hi: Curvature) -> Option<(f64, f64)> {
    let window: Vec<_> = rows
        .iter()
        .filter(|r| r.bound >= lo && r.bound <= hi)
        .collect();
    if window.is_empty() {
        return None;
    }
    let spread = |f: &dyn Fn(&SieveRatioRow) -> f64| {
        let (mn, mx) = window
            .iter()
            .map(|r| f(r))
            .fold((f64::INFINITY, 0f64), |(a, b), x| (a.min(x), b.max(x)));
        (mn > 0.0).then(|| mx / mn)
    };
    Some((spread(&|r| r.pi_ratio)?, spread(&|r| r.pi2_ratio)?))
}

/// Polynomial whose zero set defines a local density slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceFn {
    /// `f = x₁`
    X1,
    /// `f = x₁x₂`
    X1X2,
}

/// Limits for mod-n computations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModOptions {
    /// Largest prime accepted by [`orbit_mod_p`] and [`cone_points_mod_p`].
    pub max_prime: u32,
    /// Largest orbit size before giving up.
    pub max_points: usize,
}

impl Default for ModOptions {
    fn default() -> Self {
        ModOptions {
            max_prime: 101,
            max_points: 20_000_000,
        }
    }
}

/// Point of `(Z/nZ)⁴` stored with entries in `0..n`.
pub type ModPoint = [u32; 4];

fn mod_form(x: &ModPoint, n: u64) -> u64 {
    let squares: u64 = x.iter().map(|&v| v as u64 * v as u64 % n).sum::<u64>() % n;
    let sum = x.iter().map(|&v| v as u64).sum::<u64>() % n;
    (2 * squares + n - sum * sum % n) % n
}

fn mod_flip(x: &ModPoint, slot: usize, n: u32) -> ModPoint {
    let n64 = n as u64;
    let others: u64 = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != slot)
        .map(|(_, &v)| v as u64)
        .sum();
    let mut out = *x;
    out[slot] = ((2 * others + n64 - x[slot] as u64) % n64) as u32;
    out
}

fn slice_hits(x: &ModPoint, n: u32) -> (bool, bool) {
    let x1 = x[0] == 0;
    (x1, (x[0] as u64 * x[1] as u64) % n as u64 == 0)
}

/// Orbit of a quadruple modulo `n` under the four generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModOrbit {
    pub modulus: u32,
    /// Sorted, distinct.
    pub points: Vec<ModPoint>,
    /// Points with `x₁ ≡ 0`.
    pub slice_x1: u64,
    /// Points with `x₁x₂ ≡ 0`.
    pub slice_x1x2: u64,
}

impl ModOrbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, x: &ModPoint) -> bool {
        self.points.binary_search(x).is_ok()
    }

    pub fn reduce(&self, q: &Quadruple) -> ModPoint {
        reduce_mod(q, self.modulus)
    }

    /// Fraction of the orbit in the zero set of `f`.
    pub fn density(&self, f: SliceFn) -> Result<Ratio<u64>> {
        if self.points.is_empty() {
            return Err(Error::InternalInvariant("empty orbit".into()));
        }
        let hits = match f {
            SliceFn::X1 => self.slice_x1,
            SliceFn::X1X2 => self.slice_x1x2,
        };
        Ok(Ratio::new(hits, self.points.len() as u64))
    }

    /// Image of the orbit under reduction modulo a divisor `m` of the modulus.
    pub fn project(&self, m: u32) -> Vec<ModPoint> {
        assert!(
            m > 0 && self.modulus % m == 0,
            "{m} does not divide {}",
            self.modulus
        );
        let mut out: Vec<ModPoint> = self.points.iter().map(|x| x.map(|v| v % m)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Every generator maps the point set into itself.
    pub fn is_closed(&self) -> bool {
        self.points
            .iter()
            .all(|x| (0..4).all(|s| self.contains(&mod_flip(x, s, self.modulus))))
    }
}

pub fn reduce_mod(q: &Quadruple, n: u32) -> ModPoint {
    q.0.map(|v| v.rem_euclid(n as i128) as u32)
}

/// Breadth-first closure of `q mod n` under the four generators, for any `2 ≤ n < 256`.
pub fn orbit_mod(q: &Quadruple, n: u32, opts: &ModOptions) -> Result<ModOrbit> {
    if !(2..256).contains(&n) {
        return Err(Error::Unsupported(format!("modulus {n} outside 2..256")));
    }
    let start = reduce_mod(q, n);
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for slot in 0..4 {
            let y = mod_flip(&x, slot, n);
            if seen.insert(y) {
                if seen.len() > opts.max_points {
                    return Err(Error::Resource(format!(
                        "orbit mod {n} exceeds {} points",
                        opts.max_points
                    )));
                }
                queue.push_back(y);
            }
        }
    }
    let mut points: Vec<ModPoint> = seen.into_iter().collect();
    points.sort_unstable();
    let (mut slice_x1, mut slice_x1x2) = (0, 0);
    for x in &points {
        let (a, b) = slice_hits(x, n);
        slice_x1 += a as u64;
        slice_x1x2 += b as u64;
    }
    Ok(ModOrbit {
        modulus: n,
        points,
        slice_x1,
        slice_x1x2,
    })
}

fn check_prime(p: u32, opts: &ModOptions) -> Result<()> {
    if !is_prime_u64(p as u64) {
        return Err(Error::InvalidInput(format!("{p} is not prime")));
    }
    if p > opts.max_prime {
        return Err(Error::Resource(format!(
            "prime {p} above the configured cap {}",
            opts.max_prime
        )));
    }
    Ok(())
}

/// Orbit of the root modulo a prime `p ≤ opts.max_prime`.
pub fn orbit_mod_p(root: &RootQuadruple, p: u32, opts: &ModOptions) -> Result<ModOrbit> {
    check_prime(p, opts)?;
    orbit_mod(&root.quad(), p, opts)
}

/// Exhaustive count of nonzero solutions of the Descartes form over `F_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConePoints {
    pub p: u32,
    pub count: u64,
    pub slice_x1: u64,
    pub slice_x1x2: u64,
    /// Sorted; present only when requested.
    pub points: Option<Vec<ModPoint>>,
}

pub fn cone_points_mod_p(p: u32, collect: bool, opts: &ModOptions) -> Result<ConePoints> {
    check_prime(p, opts)?;
    let n = p as u64;
    let mut out = ConePoints {
        p,
        count: 0,
        slice_x1: 0,
        slice_x1x2: 0,
        points: collect.then(Vec::new),
    };
    // lexicographic loops keep the collected points sorted
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                for d in 0..p {
                    let x = [a, b, c, d];
                    if x == [0; 4] || mod_form(&x, n) != 0 {
                        continue;
                    }
                    out.count += 1;
                    let (s1, s2) = slice_hits(&x, p);
                    out.slice_x1 += s1 as u64;
                    out.slice_x1x2 += s2 as u64;
                    if let Some(points) = out.points.as_mut() {
                        points.push(x);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `g_f(p)`: slice fraction of the orbit modulo `p`.
pub fn local_density(
    root: &RootQuadruple,
    p: u32,
    f: SliceFn,
    opts: &ModOptions,
) -> Result<Ratio<u64>> {
    orbit_mod_p(root, p, opts)?.density(f)
}

/// Prime factors of a squarefree `d`; errors if `d` is not squarefree.
pub fn squarefree_factors(d: u32) -> Result<Vec<u32>> {
    let mut rest = d;
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= rest {
        if rest % p == 0 {
            rest /= p;
            if rest % p == 0 {
                return Err(Error::InvalidInput(format!("{d} is not squarefree")));
            }
            out.push(p);
        }
        p += 1;
    }
    if rest > 1 {
        out.push(rest);
    }
    Ok(out)
}

/// `g_f(d)` for squarefree `d` as the product of the per-prime densities.
pub fn squarefree_density(
    root: &RootQuadruple,
    d: u32,
    f: SliceFn,
    opts: &ModOptions,
) -> Result<Ratio<u64>> {
    squarefree_factors(d)?
        .into_iter()
        .try_fold(Ratio::from_integer(1), |acc, p| {
            Ok(acc * local_density(root, p, f, opts)?)
        })
}

/// JSON summary of the orbit modulo one prime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModPSummary {
    pub schema: String,
    pub p: u32,
    pub orbit_size: u64,
    pub cone_size: u64,
    /// Orbit is the full nonzero cone.
    pub good: bool,
    pub slice_x1: u64,
    pub slice_x1x2: u64,
    pub g1: f64,
    pub g2: f64,
}

impl ModPSummary {
    pub const CSV_HEADER: &'static str = "p,orbit_size,cone_size,good,slice_x1,slice_x1x2,g1,g2";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.9},{:.9}",
            self.p,
            self.orbit_size,
            self.cone_size,
            self.good,
            self.slice_x1,
            self.slice_x1x2,
            self.g1,
            self.g2
        )
    }
}

/// Orbit, cone and densities for one prime. The orbit always lies in the cone, so the
/// prime is good exactly when the sizes agree.
pub fn summarize_prime(root: &RootQuadruple, p: u32, opts: &ModOptions) -> Result<ModPSummary> {
    let orbit = orbit_mod_p(root, p, opts)?;
    let cone = cone_points_mod_p(p, false, opts)?;
    let to_f = |r: Ratio<u64>| *r.numer() as f64 / *r.denom() as f64;
    Ok(ModPSummary {
        schema: "1".into(),
        p,
        orbit_size: orbit.len() as u64,
        cone_size: cone.count,
        good: orbit.len() as u64 == cone.count,
        slice_x1: orbit.slice_x1,
        slice_x1x2: orbit.slice_x1x2,
        g1: to_f(orbit.density(SliceFn::X1)?),
        g2: to_f(orbit.density(SliceFn::X1X2)?),
    })
}
