//! k-subsets of `{0, .., n-1}` in lexicographic order, with ranking and
//! unranking through the combinatorial number system so that a range of
//! ranks can be handed to each worker.

use crate::error::{Error, Result};

/// `C(n, k)`, or `None` if it does not fit in a `u64`.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // C(n, i+1) = C(n, i) * (n - i) / (i + 1); intermediates grow
        // monotonically for i < n/2, so checking each step is enough.
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

pub fn checked_binomial(n: usize, k: usize) -> Result<u64> {
    binomial(n, k).ok_or(Error::Overflow { n, k })
}

/// The subset of lexicographic rank `rank` (0-based).
pub fn unrank(rank: u64, n: usize, k: usize) -> Result<Vec<usize>> {
    let total = checked_binomial(n, k)?;
    if rank >= total {
        return Err(Error::Config(format!(
            "rank {rank} out of range for C({n}, {k}) = {total}"
        )));
    }
    let mut rest = rank;
    let mut subset = Vec::with_capacity(k);
    let mut candidate = 0;
    for slot in 0..k {
        loop {
            // Subsets whose `slot`-th element is `candidate`.
            let count = binomial(n - candidate - 1, k - slot - 1).expect("bounded by total");
            if rest < count {
                break;
            }
            rest -= count;
            candidate += 1;
        }
        subset.push(candidate);
        candidate += 1;
    }
    Ok(subset)
}

/// Lexicographic rank of a strictly increasing subset.
pub fn rank(subset: &[usize], n: usize) -> Result<u64> {
    let k = subset.len();
    let mut r = 0u64;
    let mut prev = 0usize;
    for (slot, &element) in subset.iter().enumerate() {
        if element >= n || (slot > 0 && element < prev) {
            return Err(Error::Config(format!(
                "{subset:?} is not an increasing subset of 0..{n}"
            )));
        }
        let start = if slot == 0 { 0 } else { prev + 1 };
        for skipped in start..element {
            r += checked_binomial(n - skipped - 1, k - slot - 1)?;
        }
        prev = element;
    }
    Ok(r)
}

/// Streams k-subsets of `{0, .., n-1}` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    remaining: u64,
}

impl Combinations {
    /// Every k-subset, `0 < k < n`.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        let total = checked_binomial(n, k)?;
        Self::range(n, k, 0, total)
    }

    /// `len` consecutive subsets starting at rank `start`.
    pub fn range(n: usize, k: usize, start: u64, len: u64) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::Config(format!(
                "need 0 < k < n, got n = {n}, k = {k}"
            )));
        }
        let total = checked_binomial(n, k)?;
        if start.checked_add(len).is_none_or(|end| end > total) {
            return Err(Error::Config(format!(
                "range {start}+{len} exceeds C({n}, {k}) = {total}"
            )));
        }
        let current = if len == 0 {
            Vec::new()
        } else {
            unrank(start, n, k)?
        };
        Ok(Self {
            n,
            current,
            remaining: len,
        })
    }

    /// Visits each subset as a borrowed slice without allocating.
    pub fn for_each_subset<F: FnMut(&[usize])>(mut self, mut f: F) {
        while self.remaining > 0 {
            f(&self.current);
            self.remaining -= 1;
            if self.remaining > 0 {
                self.advance();
            }
        }
    }

    fn advance(&mut self) {
        let k = self.current.len();
        let n = self.n;
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.current[i] < n - k + i {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return;
            }
        }
        unreachable!("advanced past the last subset");
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.current.clone();
        self.remaining -= 1;
        if self.remaining > 0 {
            self.advance();
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (r, Some(r))
    }
}

/// Stream of every equal-role partition of `n_total` items: the `n_x`
/// indices assigned to X, in lexicographic order.
pub fn enumerate_partitions(n_total: usize, n_x: usize) -> Result<Combinations> {
    Combinations::new(n_total, n_x)
}
