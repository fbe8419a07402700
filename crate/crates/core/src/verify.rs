//! Built-in invariant suite.
//!
//! Each check compares two independent computations. The exhaustive word
//! oracle applies the supplied generator matrices to every non-returning word
//! without pruning, so a corrupted generator shows up as a mismatch with the
//! pruned enumerator. `n2_offset` is added to the direct tangent-pair count to
//! exercise the failure path of the pair identity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::CheckVerdict;
use crate::arithmetic::{cone_points_mod_p, orbit_mod_p, prime_counts, ModOptions};
use crate::descartes::{Curvature, PackingKind, Quadruple, RootQuadruple};
use crate::error::Result;
use crate::geometry::{invert_circle, walk_configurations};
use crate::orbit::{
    count_circles, count_tangent_pairs, enumerate_circles, EnumerationOptions, Generator,
};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub roots: Vec<RootQuadruple>,
    /// Generator matrices used by the algebra checks and the word oracle.
    pub generators: [Generator; 4],
    /// Bounds for the oracle comparison.
    pub oracle_bounds: Vec<Curvature>,
    pub oracle_depth: u32,
    /// Grid for the tangent-pair identity.
    pub pair_bounds: Vec<Curvature>,
    /// Added to the direct tangent-pair count before comparing.
    pub n2_offset: i64,
    pub geometry_depth: u32,
    pub primes: Vec<u32>,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let root = |a, b, c, d| RootQuadruple::new(Quadruple::new(a, b, c, d)).expect("valid root");
        VerifyOptions {
            roots: vec![root(-1, 2, 2, 3), root(0, 0, 1, 1)],
            generators: Generator::all(),
            oracle_bounds: vec![4, 10, 100],
            oracle_depth: 8,
            pair_bounds: vec![10, 100, 1000, 10_000],
            n2_offset: 0,
            geometry_depth: 4,
            primes: vec![5, 7],
            workers: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub checks: Vec<CheckVerdict>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn verdict(name: impl Into<String>, outcome: Result<(bool, String)>) -> CheckVerdict {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckVerdict {
        name: name.into(),
        passed,
        detail,
    }
}

fn mat_mul(a: &[[i128; 4]; 4], b: &[[i128; 4]; 4]) -> [[i128; 4]; 4] {
    let mut out = [[0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// New curvatures of every non-returning word of length `1..=depth`, unpruned,
/// keeping those below `bound`. Words are applied through `generators`.
pub fn exhaustive_word_curvatures(
    root: &Quadruple,
    generators: &[Generator; 4],
    depth: u32,
    bound: Curvature,
) -> Result<Vec<Curvature>> {
    let mut out = Vec::new();
    let mut stack = vec![(*root, None::<usize>, 0u32)];
    while let Some((q, last, d)) = stack.pop() {
        if d == depth {
            continue;
        }
        for g in generators {
            let slot = g.slot();
            if Some(slot) == last {
                continue;
            }
            let next = g.apply(&q)?;
            if next.get(slot) < bound {
                out.push(next.get(slot));
            }
            stack.push((next, Some(slot), d + 1));
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn multiset(v: &[Curvature]) -> BTreeMap<Curvature, usize> {
    let mut m = BTreeMap::new();
    for &x in v {
        *m.entry(x).or_default() += 1;
    }
    m
}

fn check_generators(opts: &VerifyOptions) -> Result<(bool, String)> {
    let identity: [[i128; 4]; 4] =
        std::array::from_fn(|i| std::array::from_fn(|j| (i == j) as i128));
    let mut bad = Vec::new();
    for g in &opts.generators {
        if g.square() != identity {
            bad.push(format!("S{} is not an involution", g.slot() + 1));
        }
        for root in &opts.roots {
            if !g.apply(&root.quad())?.is_descartes()? {
                bad.push(format!("S{} breaks the form on {root}", g.slot() + 1));
            }
        }
    }
    // Products of pairs of generators must also preserve the form.
    for a in &opts.generators {
        for b in &opts.generators {
            let m = mat_mul(a.matrix(), b.matrix());
            let word = Generator::from_matrix(a.slot(), m);
            for root in &opts.roots {
                if !word.apply(&root.quad())?.is_descartes()? {
                    bad.push(format!(
                        "S{}S{} breaks the form",
                        a.slot() + 1,
                        b.slot() + 1
                    ));
                }
            }
        }
    }
    bad.dedup();
    Ok((bad.is_empty(), bad.join("; ")))
}

fn check_oracle(root: &RootQuadruple, opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut details = Vec::new();
    let mut ok = true;
    for &t in &opts.oracle_bounds {
        let expected =
            exhaustive_word_curvatures(&root.quad(), &opts.generators, opts.oracle_depth, t)?;
        let mut got = Vec::new();
        let eopts = EnumerationOptions {
            max_depth: Some(opts.oracle_depth),
            ..EnumerationOptions::default()
        };
        enumerate_circles(root, t, &eopts, |e| {
            if e.depth > 0 {
                got.push(e.curvature);
            }
        })?;
        got.sort_unstable();
        let same = multiset(&got) == multiset(&expected);
        ok &= same;
        details.push(format!("T={t}: {} vs {}", got.len(), expected.len()));
    }
    Ok((ok, details.join(", ")))
}

fn check_pairs(root: &RootQuadruple, opts: &VerifyOptions) -> Result<(bool, String)> {
    let eopts = EnumerationOptions::with_workers(opts.workers);
    let mut ok = true;
    let mut details = Vec::new();
    for &t in opts
        .pair_bounds
        .iter()
        .filter(|&&t| t > root.quad().max_entry())
    {
        let c = count_tangent_pairs(root, t, &eopts)?;
        let direct = c.direct as i64 + opts.n2_offset;
        let n = count_circles(root, t, &eopts)? as i64;
        let good = direct == 3 * n - 6 && c.formula as i64 == 3 * n - 6;
        ok &= good;
        details.push(format!("T={t}: N2={direct}, 3N-6={}", 3 * n - 6));
    }
    Ok((ok, details.join(", ")))
}

fn check_workers(root: &RootQuadruple, opts: &VerifyOptions) -> Result<(bool, String)> {
    let t = opts.pair_bounds.iter().copied().max().unwrap_or(1000);
    let one = count_circles(root, t, &EnumerationOptions::with_workers(1))?;
    let many = count_circles(root, t, &EnumerationOptions::with_workers(opts.workers))?;
    Ok((one == many, format!("T={t}: {one} vs {many}")))
}

fn check_geometry(root: &RootQuadruple, opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut worst = (0f64, 0f64, 0f64, 0f64);
    let mut curvature_ok = true;
    let mut visits = 0u64;
    walk_configurations(root, None, Some(opts.geometry_depth), |v| {
        visits += 1;
        curvature_ok &= v.config.curvatures() == v.quad.0.map(|x| x as f64);
        let (row, pair) = v.config.residuals();
        worst.0 = worst.0.max(row);
        worst.1 = worst.1.max(pair);
        worst.2 = worst.2.max(v.config.conjugation_check()?);
        for slot in 0..4 {
            let image = invert_circle(&v.config.row(slot).shape()?, &v.config.dual_circle(slot)?)?;
            let target = v.config.propagate(slot)?.row(slot).shape()?;
            if !image.approx_eq(&target, 1e-7) {
                worst.3 = f64::INFINITY;
            }
        }
        Ok(())
    })?;
    let ok = curvature_ok && worst.0 <= 1e-9 && worst.1 <= 1e-9 && worst.2 < 1e-6 && worst.3 == 0.0;
    Ok((
        ok,
        format!(
            "{visits} configurations; row {:.1e}, tangency {:.1e}, conjugation {:.1e}, inversion {}",
            worst.0,
            worst.1,
            worst.2,
            if worst.3 == 0.0 { "ok" } else { "mismatch" }
        ),
    ))
}

fn check_small_counts() -> Result<(bool, String)> {
    let root = RootQuadruple::new(Quadruple::new(-1, 2, 2, 3))?;
    let opts = EnumerationOptions::default();
    let n = count_circles(&root, 10, &opts)?;
    let pc = prime_counts(&root, 10, &opts)?;
    Ok((
        n == 9 && pc.pi == 4 && pc.pi2 == 5,
        format!("N(10)={n}, pi(10)={}, pi2(10)={}", pc.pi, pc.pi2),
    ))
}

fn check_mod_p(root: &RootQuadruple, p: u32) -> Result<(bool, String)> {
    let opts = ModOptions::default();
    let orbit = orbit_mod_p(root, p, &opts)?;
    let cone = cone_points_mod_p(p, true, &opts)?;
    let inside = orbit.points.iter().all(|x| {
        cone.points
            .as_ref()
            .is_some_and(|c| c.binary_search(x).is_ok())
    });
    Ok((
        inside && orbit.is_closed(),
        format!("orbit {} of cone {}", orbit.len(), cone.count),
    ))
}

/// Runs every check and collects verdicts; never stops at the first failure.
pub fn run(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = vec![
        verdict(
            "generators are form-preserving involutions",
            check_generators(opts),
        ),
        verdict(
            "small-bound counts N, pi, pi2 at T=10",
            check_small_counts(),
        ),
    ];
    for root in &opts.roots {
        if root.kind() == PackingKind::Bounded {
            checks.push(verdict(
                format!("pruned walk equals word oracle on {root}"),
                check_oracle(root, opts),
            ));
        }
        checks.push(verdict(
            format!("N2 = 3N - 6 on {root}"),
            check_pairs(root, opts),
        ));
        checks.push(verdict(
            format!("worker count invariance on {root}"),
            check_workers(root, opts),
        ));
        checks.push(verdict(
            format!("geometry on {root}"),
            check_geometry(root, opts),
        ));
        if root.kind() == PackingKind::Bounded && root.is_primitive() {
            for &p in &opts.primes {
                checks.push(verdict(
                    format!("orbit mod {p} on {root}"),
                    check_mod_p(root, p),
                ));
            }
        }
    }
    VerifyReport {
        schema: "1".into(),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let report = run(&VerifyOptions::default());
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn corrupted_generator_fails() {
        let mut opts = VerifyOptions::default();
        let mut m = *opts.generators[2].matrix();
        m[2][0] = 3;
        opts.generators[2] = Generator::from_matrix(2, m);
        let report = run(&opts);
        assert!(!report.all_passed());
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert!(failed.iter().any(|n| n.contains("involutions")));
        assert!(failed.iter().any(|n| n.contains("word oracle")));
    }

    #[test]
    fn injected_pair_offset_fails() {
        let opts = VerifyOptions {
            n2_offset: 1,
            ..VerifyOptions::default()
        };
        let report = run(&opts);
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|c| c.name.starts_with("N2 = 3N - 6")));
    }

    #[test]
    fn oracle_sizes() {
        let root = Quadruple::new(-1, 2, 2, 3);
        let all = exhaustive_word_curvatures(&root, &Generator::all(), 3, Curvature::MAX).unwrap();
        assert_eq!(all.len(), 4 + 12 + 36);
        assert_eq!(
            exhaustive_word_curvatures(&root, &Generator::all(), 8, 10)
                .unwrap()
                .len(),
            5
        );
    }
}
