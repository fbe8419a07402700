//! Exact algebra of Descartes quadruples.
//!
//! A quadruple `(a, b, c, d)` of signed curvatures is a Descartes quadruple when
//! `2(a² + b² + c² + d²) = (a + b + c + d)²`. Everything here is exact: curvatures
//! are `i128` and every operation is overflow-checked.
//!
//! Slots are 0-based throughout the library API.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed curvature in units of 1/length.
pub type Curvature = i128;

/// Default cap on the number of flips performed by [`Quadruple::reduce_to_root`].
pub const DEFAULT_REDUCTION_CAP: usize = 1_000_000;

/// Four exact curvatures, in slot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple(pub [Curvature; 4]);

impl Quadruple {
    pub const fn new(a: Curvature, b: Curvature, c: Curvature, d: Curvature) -> Self {
        Quadruple([a, b, c, d])
    }

    pub fn entries(&self) -> &[Curvature; 4] {
        &self.0
    }

    pub fn get(&self, slot: usize) -> Curvature {
        self.0[slot]
    }

    pub fn sum(&self) -> Result<Curvature> {
        self.0
            .iter()
            .try_fold(0i128, |acc, &x| acc.checked_add(x))
            .ok_or(Error::Overflow)
    }

    pub fn max_entry(&self) -> Curvature {
        *self.0.iter().max().expect("four entries")
    }

    pub fn min_entry(&self) -> Curvature {
        *self.0.iter().min().expect("four entries")
    }

    /// The doubled Descartes form `2Σqᵢ² − (Σqᵢ)²`; zero exactly on Descartes quadruples.
    ///
    /// Intermediates are computed in arbitrary precision, so any `i128` quadruple can be
    /// tested; only a form value outside the `i128` range is an overflow.
    pub fn form(&self) -> Result<Curvature> {
        let wide: Vec<BigInt> = self.0.iter().map(|&x| BigInt::from(x)).collect();
        let squares: BigInt = wide.iter().map(|x| x * x).sum();
        let sum: BigInt = wide.iter().sum();
        let form: BigInt = squares * 2 - &sum * &sum;
        form.to_i128().ok_or(Error::Overflow)
    }

    pub fn is_descartes(&self) -> Result<bool> {
        Ok(self.form()? == 0)
    }

    /// Errors with [`Error::NotDescartes`] unless the form vanishes.
    pub fn ensure_descartes(&self) -> Result<()> {
        match self.form()? {
            0 => Ok(()),
            form => Err(Error::NotDescartes { form }),
        }
    }

    /// Replaces slot `i` by `2·(sum of the other three) − qᵢ`.
    pub fn flip(&self, i: usize) -> Result<Quadruple> {
        assert!(i < 4, "slot index out of range: {i}");
        let mut others = 0i128;
        for (j, &x) in self.0.iter().enumerate() {
            if j != i {
                others = others.checked_add(x).ok_or(Error::Overflow)?;
            }
        }
        let replaced = others
            .checked_mul(2)
            .and_then(|v| v.checked_sub(self.0[i]))
            .ok_or(Error::Overflow)?;
        let mut out = self.0;
        out[i] = replaced;
        Ok(Quadruple(out))
    }

    pub fn sorted(&self) -> Quadruple {
        let mut s = self.0;
        s.sort_unstable();
        Quadruple(s)
    }

    /// Root test on the sorted entries: `a ≤ 0 ≤ b ≤ c ≤ d`, `a + b + c ≥ d` and a positive sum.
    /// Does not check the Descartes relation.
    pub fn is_root(&self) -> bool {
        let [a, b, c, d] = self.sorted().0;
        let Some(abc) = a.checked_add(b).and_then(|s| s.checked_add(c)) else {
            return false;
        };
        let Some(total) = abc.checked_add(d) else {
            return false;
        };
        a <= 0 && b >= 0 && abc >= d && total > 0
    }

    /// `gcd(|a|, |b|, |c|, |d|)`; the packing is primitive iff this is 1.
    pub fn content(&self) -> Result<u128> {
        let g = self.0.iter().fold(0u128, |g, &x| g.gcd(&x.unsigned_abs()));
        if g == 0 {
            return Err(Error::InvalidInput("content of the zero quadruple".into()));
        }
        Ok(g)
    }

    /// Scales every entry, checking for overflow.
    pub fn scaled(&self, k: Curvature) -> Result<Quadruple> {
        let mut out = [0i128; 4];
        for (o, &x) in out.iter_mut().zip(&self.0) {
            *o = x.checked_mul(k).ok_or(Error::Overflow)?;
        }
        Ok(Quadruple(out))
    }

    /// Reduces to the packing's root quadruple with the default flip cap.
    pub fn reduce_to_root(&self) -> Result<Reduction> {
        self.reduce_to_root_capped(DEFAULT_REDUCTION_CAP)
    }

    /// Repeatedly flips the largest entry (lowest slot on ties) while that strictly
    /// decreases it. The fixed point must be a root quadruple.
    pub fn reduce_to_root_capped(&self, cap: usize) -> Result<Reduction> {
        self.ensure_descartes()?;
        if self.sum()? <= 0 {
            return Err(Error::InvalidInput(format!(
                "{self} has non-positive curvature sum"
            )));
        }
        let mut q = *self;
        let mut flips = Vec::new();
        loop {
            let (slot, largest) =
                q.0.iter().enumerate().fold(
                    (0, q.0[0]),
                    |best, (i, &x)| if x > best.1 { (i, x) } else { best },
                );
            let next = q.flip(slot)?;
            if next.0[slot] >= largest {
                break;
            }
            if flips.len() == cap {
                return Err(Error::ReductionFailed(cap));
            }
            flips.push(slot);
            q = next;
        }
        let root = RootQuadruple::new(q).map_err(|_| {
            Error::InvalidInput(format!(
                "reduction of {self} stalled at {q}, which is not a root quadruple"
            ))
        })?;
        Ok(Reduction { root, flips })
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

impl FromStr for Quadruple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s
            .trim()
            .trim_start_matches(['(', '['])
            .trim_end_matches([')', ']'])
            .split(',')
            .map(str::trim)
            .collect();
        if parts.len() != 4 {
            return Err(Error::InvalidInput(format!(
                "expected four comma-separated curvatures, got {s:?}"
            )));
        }
        let mut out = [0i128; 4];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad curvature {p:?}")))?;
        }
        Ok(Quadruple(out))
    }
}

/// Shape of the packing generated by a root quadruple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackingKind {
    /// `a < 0`: a bounding circle encloses the packing.
    Bounded,
    /// `(0, 0, c, c)`: the packing between two parallel lines.
    Strip,
    /// Any other root shape.
    Degenerate,
}

/// A validated root quadruple, stored sorted ascending.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootQuadruple {
    quad: Quadruple,
    kind: PackingKind,
}

impl RootQuadruple {
    /// Sorts `q` and validates the Descartes relation and the root inequalities.
    pub fn new(q: Quadruple) -> Result<Self> {
        q.ensure_descartes()?;
        if !q.is_root() {
            return Err(Error::InvalidInput(format!("{q} is not a root quadruple")));
        }
        let quad = q.sorted();
        let [a, b, c, d] = quad.0;
        let kind = if a < 0 {
            PackingKind::Bounded
        } else if a == 0 && b == 0 && c == d {
            PackingKind::Strip
        } else {
            PackingKind::Degenerate
        };
        Ok(RootQuadruple { quad, kind })
    }

    pub fn quad(&self) -> Quadruple {
        self.quad
    }

    pub fn kind(&self) -> PackingKind {
        self.kind
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self.quad.content(), Ok(1))
    }
}

impl fmt::Display for RootQuadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.quad.fmt(f)
    }
}

/// Result of [`Quadruple::reduce_to_root`]: the root and the 0-based slots flipped, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Reduction {
    pub root: RootQuadruple,
    pub flips: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BASIC: Quadruple = Quadruple::new(-1, 2, 2, 3);
    const STRIP: Quadruple = Quadruple::new(0, 0, 1, 1);

    #[test]
    fn form_values() {
        assert_eq!(BASIC.form().unwrap(), 0);
        assert_eq!(Quadruple::new(0, 0, 0, 0).form().unwrap(), 0);
        assert_eq!(Quadruple::new(1, 1, 1, 1).form().unwrap(), -8);
    }

    #[test]
    fn form_is_exact_near_the_range_ceiling() {
        let k = i128::MAX / 16;
        assert_eq!(BASIC.scaled(k).unwrap().form().unwrap(), 0);
        let q = Quadruple::new(i128::MAX / 2, 1, 1, 1);
        assert_eq!(q.form(), Err(Error::Overflow));
    }

    #[test]
    fn flip_examples() {
        assert_eq!(BASIC.flip(0).unwrap(), Quadruple::new(15, 2, 2, 3));
        assert_eq!(BASIC.flip(3).unwrap(), BASIC);
        assert_eq!(BASIC.flip(0).unwrap().flip(0).unwrap(), BASIC);
    }

    #[test]
    fn flip_overflow_is_reported() {
        let q = Quadruple::new(0, 0, i128::MAX / 2 + 1, 1);
        assert_eq!(q.flip(3), Err(Error::Overflow));
    }

    #[test]
    fn root_examples() {
        assert!(BASIC.is_root());
        assert!(STRIP.is_root());
        assert!(!Quadruple::new(15, 2, 2, 3).is_root());
        // order of slots does not matter
        assert!(Quadruple::new(3, 2, -1, 2).is_root());
    }

    #[test]
    fn reduction_examples() {
        let r = Quadruple::new(15, 2, 2, 3).reduce_to_root().unwrap();
        assert_eq!(r.root.quad(), BASIC);
        assert_eq!(r.flips, vec![0]);

        let r = BASIC.reduce_to_root().unwrap();
        assert_eq!(r.root.quad(), BASIC);
        assert!(r.flips.is_empty());

        let r = STRIP.reduce_to_root().unwrap();
        assert_eq!(r.root.quad(), STRIP);
        assert!(r.flips.is_empty());
        assert_eq!(r.root.kind(), PackingKind::Strip);
    }

    #[test]
    fn reduction_rejects_non_descartes_and_respects_cap() {
        assert_eq!(
            Quadruple::new(1, 1, 1, 1).reduce_to_root(),
            Err(Error::NotDescartes { form: -8 })
        );
        let deep = [0usize, 1, 2, 3, 0, 1]
            .iter()
            .try_fold(BASIC, |q, &i| q.flip(i))
            .unwrap();
        assert_eq!(
            deep.reduce_to_root_capped(2),
            Err(Error::ReductionFailed(2))
        );
        assert_eq!(deep.reduce_to_root().unwrap().root.quad(), BASIC);
    }

    #[test]
    fn content_examples() {
        assert_eq!(BASIC.content().unwrap(), 1);
        assert_eq!(Quadruple::new(-2, 4, 4, 6).content().unwrap(), 2);
        assert_eq!(STRIP.content().unwrap(), 1);
        assert!(matches!(
            Quadruple::new(0, 0, 0, 0).content(),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn classification() {
        assert_eq!(
            RootQuadruple::new(BASIC).unwrap().kind(),
            PackingKind::Bounded
        );
        assert_eq!(
            RootQuadruple::new(Quadruple::new(0, 0, 5, 5))
                .unwrap()
                .kind(),
            PackingKind::Strip
        );
        assert!(RootQuadruple::new(Quadruple::new(15, 2, 2, 3)).is_err());
    }

    #[test]
    fn parse_and_display() {
        let q: Quadruple = "-1, 2,2,3".parse().unwrap();
        assert_eq!(q, BASIC);
        assert_eq!(q.to_string(), "-1,2,2,3");
        assert!("1,2,3".parse::<Quadruple>().is_err());
        assert!("1,2,x,3".parse::<Quadruple>().is_err());
        assert_eq!(serde_json::to_string(&BASIC).unwrap(), "[-1,2,2,3]");
        let back: Quadruple = serde_json::from_str("[-1,2,2,3]").unwrap();
        assert_eq!(back, BASIC);
    }

    fn words() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..4, 0..24)
    }

    fn walk(root: Quadruple, word: &[usize]) -> Quadruple {
        word.iter().fold(root, |q, &i| q.flip(i).unwrap())
    }

    proptest! {
        #[test]
        fn flips_preserve_form_and_are_involutions(word in words(), slot in 0usize..4) {
            for root in [BASIC, STRIP] {
                let q = walk(root, &word);
                prop_assert_eq!(q.form().unwrap(), 0);
                prop_assert_eq!(q.flip(slot).unwrap().flip(slot).unwrap(), q);
            }
        }

        #[test]
        fn reduction_recovers_root(word in words()) {
            for root in [BASIC, STRIP, Quadruple::new(-6, 11, 14, 15)] {
                let q = walk(root, &word);
                let r = q.reduce_to_root().unwrap();
                prop_assert_eq!(r.root.quad(), root.sorted());
                let again = r.root.quad().reduce_to_root().unwrap();
                prop_assert_eq!(again.root, r.root);
                prop_assert!(again.flips.is_empty());
            }
        }
    }
}
