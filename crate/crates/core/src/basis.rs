//! Occupation-number basis of an N-site chain of two-level sites.
//!
//! Basis index `a` is the big-endian bit string of site occupations: site 1
//! is the most significant bit, site N the least significant one. The
//! dimension of the space is `2^N`.

/// Largest chain supported by the dense representations.
pub const MAX_SITES: usize = 12;

#[inline]
pub fn dimension(n_sites: usize) -> usize {
    1usize << n_sites
}

/// Bit mask of 1-based site `k` in an `n_sites` chain.
#[inline]
pub fn site_mask(n_sites: usize, k: usize) -> usize {
    debug_assert!(k >= 1 && k <= n_sites);
    1usize << (n_sites - k)
}

#[inline]
pub fn occupied(state: usize, n_sites: usize, k: usize) -> bool {
    state & site_mask(n_sites, k) != 0
}

/// `1.0`/`0.0`-style occupation as an integer.
#[inline]
pub fn occupation(state: usize, n_sites: usize, k: usize) -> usize {
    usize::from(occupied(state, n_sites, k))
}

/// Total number of excitations in a basis state.
#[inline]
pub fn excitations(state: usize) -> u32 {
    state.count_ones()
}

/// Weighted position `sum_k k * n_k`, the operator multiplying the tilt.
pub fn tilt_weight(state: usize, n_sites: usize) -> usize {
    (1..=n_sites).filter(|&k| occupied(state, n_sites, k)).sum()
}

/// Basis index with exactly the listed 1-based sites occupied.
pub fn state_with_sites(n_sites: usize, sites: &[usize]) -> usize {
    sites.iter().fold(0, |acc, &k| acc | site_mask(n_sites, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_endian_site_order() {
        // N=3: |100> has site 1 occupied.
        assert_eq!(site_mask(3, 1), 0b100);
        assert_eq!(site_mask(3, 3), 0b001);
        assert!(occupied(0b100, 3, 1));
        assert!(!occupied(0b100, 3, 2));
        assert_eq!(state_with_sites(3, &[1, 3]), 0b101);
    }

    #[test]
    fn tilt_weight_sums_positions() {
        assert_eq!(tilt_weight(0b101, 3), 1 + 3);
        assert_eq!(tilt_weight(0, 3), 0);
        assert_eq!(tilt_weight(0b111, 3), 6);
        assert_eq!(excitations(0b101), 2);
    }
}
