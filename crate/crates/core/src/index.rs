//! Mixed-radix indexing of joint instantiations. The last component varies fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Radix {
    cards: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl Radix {
    /// Panics on overflow; use [`Radix::bounded`] for user-controlled sizes.
    pub fn new(cards: Vec<usize>) -> Self {
        Self::bounded(cards, usize::MAX, "index space").expect("radix overflow")
    }

    /// Builds the radix, failing if the product of cardinalities exceeds `cap`.
    pub fn bounded(cards: Vec<usize>, cap: usize, what: &str) -> Result<Self> {
        let mut strides = vec![0; cards.len()];
        let mut size: u128 = 1;
        for k in (0..cards.len()).rev() {
            strides[k] = size.min(usize::MAX as u128) as usize;
            size = size.saturating_mul(cards[k] as u128);
        }
        if size > cap as u128 {
            return Err(Error::cap(what, size, cap as u128));
        }
        Ok(Radix {
            cards,
            strides,
            size: size as usize,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn encode(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.cards.len());
        values.iter().zip(&self.strides).map(|(v, s)| v * s).sum()
    }

    /// Encodes after checking lengths and ranges.
    pub fn try_encode(&self, values: &[usize], what: &str) -> Result<usize> {
        if values.len() != self.cards.len() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has {} components, expected {}",
                values.len(),
                self.cards.len()
            )));
        }
        for (v, c) in values.iter().zip(&self.cards) {
            if v >= c {
                return Err(Error::range(what, *v, *c));
            }
        }
        Ok(self.encode(values))
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for k in (0..self.cards.len()).rev() {
            out[k] = index % self.cards[k];
            index /= self.cards[k];
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        self.decode_into(index, &mut out);
        out
    }

    pub fn component(&self, index: usize, k: usize) -> usize {
        (index / self.strides[k]) % self.cards[k]
    }
}

/// Calls `f(values, prob)` for every combination with nonzero product of
/// per-component probabilities, in increasing mixed-radix order.
pub fn for_each_product(rows: &[&[f64]], mut f: impl FnMut(&[usize], f64)) {
    let mut values = vec![0usize; rows.len()];
    fn rec(rows: &[&[f64]], k: usize, p: f64, values: &mut Vec<usize>, f: &mut dyn FnMut(&[usize], f64)) {
        if k == rows.len() {
            f(values, p);
            return;
        }
        for (v, &q) in rows[k].iter().enumerate() {
            if q != 0.0 {
                values[k] = v;
                rec(rows, k + 1, p * q, values, f);
            }
        }
    }
    rec(rows, 0, 1.0, &mut values, &mut f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_radix_has_one_element() {
        let r = Radix::new(vec![]);
        assert_eq!(r.size(), 1);
        assert_eq!(r.encode(&[]), 0);
    }

    #[test]
    fn last_component_is_fastest() {
        let r = Radix::new(vec![2, 3]);
        assert_eq!(r.encode(&[0, 1]), 1);
        assert_eq!(r.encode(&[1, 0]), 3);
        assert_eq!(r.component(5, 0), 1);
        assert_eq!(r.component(5, 1), 2);
    }

    #[test]
    fn bounded_rejects_large_spaces() {
        assert!(matches!(
            Radix::bounded(vec![10, 10, 10], 999, "x"),
            Err(Error::CapExceeded { required: 1000, .. })
        ));
    }

    #[test]
    fn product_skips_zero_mass() {
        let a = [0.5, 0.0, 0.5];
        let b = [0.25, 0.75];
        let mut seen = Vec::new();
        for_each_product(&[&a, &b], |v, p| seen.push((v.to_vec(), p)));
        assert_eq!(seen.len(), 4);
        let total: f64 = seen.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(seen[0].0, vec![0, 0]);
        assert_eq!(seen[3].0, vec![2, 1]);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(cards in proptest::collection::vec(1usize..5, 0..5), seed in 0usize..10_000) {
            let r = Radix::new(cards);
            let i = seed % r.size();
            let v = r.decode(i);
            prop_assert_eq!(r.encode(&v), i);
            for k in 0..r.len() {
                prop_assert_eq!(r.component(i, k), v[k]);
            }
        }
    }
}
