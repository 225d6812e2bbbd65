//! Exhaustive optima and submodularity checks for small ground sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_keep, ObjectiveKind, SetObjective, Subset};
use crate::error::{Error, Result};
use crate::model::PointSet;

/// Largest ground set the exhaustive routines accept.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Size constraint for [`brute_force`]. Subsets are always non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    AtLeast(usize),
    AtMost(usize),
}

fn check_small(ps: &PointSet) -> Result<()> {
    if ps.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "exhaustive search over {} elements (limit {BRUTE_FORCE_LIMIT})",
            ps.len()
        )));
    }
    Ok(())
}

fn mask_subset(n: usize, bits: u32) -> Subset {
    Subset::from_mask((0..n).map(|i| bits >> i & 1 == 1).collect())
}

/// Maximiser of `φ` over non-empty subsets meeting `size`. Ties keep the
/// smallest bitmask. Every candidate counts one forward.
pub fn brute_force(obj: &dyn SetObjective, ps: &PointSet, size: Cardinality) -> Result<(Subset, f64)> {
    check_small(ps)?;
    obj.check_set(ps)?;
    let n = ps.len();
    let mut best: Option<(u32, f64)> = None;
    for bits in 1u32..(1u32 << n) {
        let c = bits.count_ones() as usize;
        let ok = match size {
            Cardinality::AtLeast(m) => c >= m,
            Cardinality::AtMost(m) => c <= m,
        };
        if !ok {
            continue;
        }
        let v = obj.evaluate(ps, &mask_subset(n, bits))?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((bits, v));
        }
    }
    let (bits, v) = best.ok_or_else(|| Error::Parameter(format!("no subset satisfies {size:?}")))?;
    Ok((mask_subset(n, bits), v))
}

/// Best subset reachable by removing at most `k` elements.
pub fn brute_force_opt(obj: &dyn SetObjective, ps: &PointSet, k: usize) -> Result<(Subset, f64)> {
    brute_force(obj, ps, Cardinality::AtLeast(ps.len().saturating_sub(k).max(1)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubmodularityReport {
    /// Triples `(A ⊆ B, e ∉ B)` examined.
    pub checked: usize,
    /// Triples with `Δ(e | A) < Δ(e | B)` beyond tolerance.
    pub diminishing_violations: usize,
    /// Pairs with `φ(A) > φ(B)` beyond tolerance.
    pub monotone_violations: usize,
    /// Largest violation of either kind.
    pub worst: f64,
}

impl SubmodularityReport {
    pub fn submodular(&self) -> bool {
        self.diminishing_violations == 0
    }

    pub fn monotone(&self) -> bool {
        self.monotone_violations == 0
    }
}

/// Checks diminishing returns and monotonicity of an analytic objective,
/// exhaustively for `n <= 10` and on `trials` random triples otherwise.
/// Gains here are insertion gains `φ(A ∪ e) − φ(A)`, with `φ(∅)` allowed.
pub fn verify_submodular(
    obj: &dyn SetObjective,
    ps: &PointSet,
    trials: usize,
    seed: u64,
) -> Result<SubmodularityReport> {
    if obj.kind() == ObjectiveKind::Neural {
        return Err(Error::Unsupported(
            "submodularity cannot be verified for a neural objective".into(),
        ));
    }
    obj.check_set(ps)?;
    let n = ps.len();
    let counter = obj.counter();
    let value = |s: &Subset| -> Result<f64> {
        check_keep(ps, s)?;
        obj.value_with(ps, s, counter)
    };
    let tol = 1e-9;
    let mut report = SubmodularityReport::default();
    let mut check = |a: &Subset, b: &Subset, e: usize| -> Result<()> {
        let fa = value(a)?;
        let fb = value(b)?;
        let mut ae = a.clone();
        ae.insert(e)?;
        let mut be = b.clone();
        be.insert(e)?;
        let ga = value(&ae)? - fa;
        let gb = value(&be)? - fb;
        let scale = tol * (1.0 + fa.abs().max(fb.abs()));
        report.checked += 1;
        if ga < gb - scale {
            report.diminishing_violations += 1;
            report.worst = report.worst.max(gb - ga);
        }
        if fa > fb + scale {
            report.monotone_violations += 1;
            report.worst = report.worst.max(fa - fb);
        }
        Ok(())
    };
    if n <= 10 {
        // every (A, B, e) as a base-3 label per element plus a free e
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut a = vec![false; n];
            let mut b = vec![false; n];
            let mut c = code;
            for i in 0..n {
                match c % 3 {
                    1 => b[i] = true,
                    2 => {
                        a[i] = true;
                        b[i] = true;
                    }
                    _ => {}
                }
                c /= 3;
            }
            let (sa, sb) = (Subset::from_mask(a), Subset::from_mask(b));
            for e in (0..n).filter(|&e| !sb.contains(e)) {
                check(&sa, &sb, e)?;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let e = rng.gen_range(0..n);
            let mut a = vec![false; n];
            let mut b = vec![false; n];
            for i in (0..n).filter(|&i| i != e) {
                b[i] = rng.gen_bool(0.5);
                a[i] = b[i] && rng.gen_bool(0.5);
            }
            check(&Subset::from_mask(a), &Subset::from_mask(b), e)?;
        }
    }
    Ok(report)
}
