//! Quantized CDF tables for the range coder.
//!
//! Tables are built from the deterministic Gaussian CDF (or the factorized
//! mixture prior) with pure integer post-processing, so identical inputs
//! give byte-identical tables on every platform. Every table carries two
//! tail-escape bins; symbols outside the support are coded as an escape
//! followed by the raw 32-bit value.

use crate::codec::network::FactorizedPrior;
use crate::detmath::det_normal_cdf;
use crate::error::{Error, Result};

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;

/// Monotone quantized CDF: `cdf[0] = 0`, `cdf[bins] = 65536`, strictly
/// increasing (every bin has mass >= 1). Bin 0 and the last bin are the
/// tail escapes; value bins cover `offset ..= offset + value_bins - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    /// Symbol of the first value bin.
    pub offset: i64,
    pub cdf: Vec<u32>,
}

impl CdfTable {
    pub fn bins(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn value_bins(&self) -> usize {
        self.bins() - 2
    }

    /// Bin index for a symbol: value bin when in support, otherwise the
    /// matching escape bin.
    pub fn bin_for(&self, v: i64) -> usize {
        if v < self.offset {
            0
        } else if v >= self.offset + self.value_bins() as i64 {
            self.bins() - 1
        } else {
            1 + (v - self.offset) as usize
        }
    }

    pub fn is_escape(&self, bin: usize) -> bool {
        bin == 0 || bin == self.bins() - 1
    }

    /// Symbol of a value bin.
    pub fn symbol_for(&self, bin: usize) -> i64 {
        debug_assert!(!self.is_escape(bin));
        self.offset + (bin as i64 - 1)
    }

    pub fn freq(&self, bin: usize) -> u32 {
        self.cdf[bin + 1] - self.cdf[bin]
    }

    pub fn cum(&self, bin: usize) -> u32 {
        self.cdf[bin]
    }

    /// Largest bin with cdf[bin] <= target (target < 65536).
    pub fn lookup(&self, target: u32) -> usize {
        let mut lo = 0usize;
        let mut hi = self.bins() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.cdf[mid] <= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Ideal code length of a bin under the quantized table, in bits.
    pub fn bin_bits(&self, bin: usize) -> f64 {
        f64::from(PROB_TOTAL).log2() - f64::from(self.freq(bin)).log2()
    }

    fn validate(&self) -> Result<()> {
        if self.bins() < 2 {
            return Err(Error::input("cdf table must have at least 2 bins"));
        }
        if self.cdf[0] != 0 || *self.cdf.last().unwrap() != PROB_TOTAL {
            return Err(Error::input("cdf table must span 0..65536"));
        }
        for w in self.cdf.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::input("cdf table must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Largest-remainder quantization of raw masses to a 65536 total with
/// every bin >= 1. Ties and corrections resolve by fixed index order.
fn quantize_masses(raw: &[f64]) -> Vec<u32> {
    let n = raw.len();
    let sum: f64 = raw.iter().sum();
    let scale = if sum > 0.0 { f64::from(PROB_TOTAL) / sum } else { 0.0 };
    let mut floors: Vec<u32> = Vec::with_capacity(n);
    let mut rems: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut assigned: u64 = 0;
    for (i, &r) in raw.iter().enumerate() {
        let scaled = (r.max(0.0) * scale).min(f64::from(PROB_TOTAL));
        let fl = scaled.floor();
        floors.push(fl as u32);
        assigned += fl as u64;
        rems.push((i, scaled - fl));
    }
    // Distribute the remaining mass by largest remainder, index as the
    // tie-break so the result is deterministic.
    let mut remaining = i64::from(PROB_TOTAL) - assigned as i64;
    rems.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut k = 0;
    while remaining > 0 {
        floors[rems[k % n].0] += 1;
        remaining -= 1;
        k += 1;
    }
    while remaining < 0 {
        // Only possible via the min-clamps below interacting with rounding;
        // shave from the largest bins.
        let (imax, _) = floors.iter().enumerate().max_by_key(|(_, &v)| v).unwrap();
        floors[imax] -= 1;
        remaining += 1;
    }
    // Enforce min 1 per bin, stealing from the largest bins.
    for i in 0..n {
        while floors[i] == 0 {
            let (imax, &vmax) = floors.iter().enumerate().max_by_key(|(_, &v)| v).unwrap();
            debug_assert!(vmax > 1);
            floors[imax] -= 1;
            floors[i] += 1;
        }
    }
    floors
}

fn table_from_masses(offset: i64, masses: &[f64]) -> CdfTable {
    let freqs = quantize_masses(masses);
    let mut cdf = Vec::with_capacity(freqs.len() + 1);
    let mut acc = 0u32;
    cdf.push(0);
    for f in freqs {
        acc += f;
        cdf.push(acc);
    }
    let table = CdfTable { offset, cdf };
    debug_assert!(table.validate().is_ok());
    table
}

/// Gaussian conditional table: support covers mu +- 6 sigma rounded
/// outward, plus the two escape bins.
pub fn build_gaussian_cdf(mu: f64, sigma: f64) -> Result<CdfTable> {
    if sigma < crate::codec::SIGMA_MIN {
        return Err(Error::input(format!(
            "sigma {sigma} below the floor {}",
            crate::codec::SIGMA_MIN
        )));
    }
    let lo = (mu - 6.0 * sigma).floor() as i64;
    let hi = (mu + 6.0 * sigma).ceil() as i64;
    let value_bins = (hi - lo + 1) as usize;
    let mut masses = Vec::with_capacity(value_bins + 2);
    // low escape: everything below lo - 0.5
    masses.push(det_normal_cdf((lo as f64 - 0.5 - mu) / sigma));
    for v in lo..=hi {
        let hi_c = det_normal_cdf((v as f64 + 0.5 - mu) / sigma);
        let lo_c = det_normal_cdf((v as f64 - 0.5 - mu) / sigma);
        masses.push((hi_c - lo_c).max(0.0));
    }
    masses.push(1.0 - det_normal_cdf((hi as f64 + 0.5 - mu) / sigma));
    Ok(table_from_masses(lo, &masses))
}

/// Per-channel table for the factorized mixture prior. The support covers
/// every component's location +- 9 scales.
pub fn build_factorized_cdf(prior: &FactorizedPrior, channel: usize) -> Result<CdfTable> {
    if channel >= prior.channels {
        return Err(Error::input("factorized cdf: channel out of range"));
    }
    let k = prior.components;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let loc = prior.locs[channel * k + i];
        let scale = prior.scales[channel * k + i];
        lo = lo.min(loc - 9.0 * scale);
        hi = hi.max(loc + 9.0 * scale);
    }
    let lo = lo.floor() as i64;
    let hi = hi.ceil() as i64;
    let value_bins = (hi - lo + 1) as usize;
    let mut masses = Vec::with_capacity(value_bins + 2);
    masses.push(prior.cdf(channel, lo as f64 - 0.5));
    for v in lo..=hi {
        masses.push(prior.interval_mass(channel, v as f64));
    }
    masses.push(1.0 - prior.cdf(channel, hi as f64 + 0.5));
    Ok(table_from_masses(lo, &masses))
}

/// Uniform 256-bin table used to code raw escape bytes (each bin has
/// frequency exactly 256).
pub fn byte_table() -> CdfTable {
    let cdf = (0..=256u32).map(|i| i * 256).collect();
    CdfTable { offset: 0, cdf }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_center_bin() {
        let t = build_gaussian_cdf(0.0, 1.0).unwrap();
        // center bin (symbol 0) mass ~= round(0.382925 * 65536) = 25095
        let bin = t.bin_for(0);
        assert!(!t.is_escape(bin));
        let f = t.freq(bin);
        assert!((i64::from(f) - 25095).abs() <= 2, "{f}");
        assert_eq!(*t.cdf.last().unwrap(), PROB_TOTAL);
    }

    #[test]
    fn symmetric_about_center() {
        let t = build_gaussian_cdf(0.0, 2.5).unwrap();
        for d in 1..=5i64 {
            let a = t.freq(t.bin_for(d));
            let b = t.freq(t.bin_for(-d));
            assert!((i64::from(a) - i64::from(b)).abs() <= 1, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn integer_mu_shifts_offset_only() {
        let base = build_gaussian_cdf(0.0, 1.3).unwrap();
        let shifted = build_gaussian_cdf(10.0, 1.3).unwrap();
        assert_eq!(shifted.offset, base.offset + 10);
        assert_eq!(shifted.cdf, base.cdf);
    }

    #[test]
    fn every_bin_positive() {
        for sigma in [0.11, 0.3, 1.0, 17.0] {
            let t = build_gaussian_cdf(0.37, sigma).unwrap();
            for b in 0..t.bins() {
                assert!(t.freq(b) >= 1, "sigma {sigma} bin {b}");
            }
        }
    }

    #[test]
    fn sigma_floor_enforced() {
        assert!(build_gaussian_cdf(0.0, 0.05).is_err());
    }

    #[test]
    fn escape_bins_catch_out_of_support() {
        let t = build_gaussian_cdf(0.0, 1.0).unwrap();
        assert_eq!(t.bin_for(-100), 0);
        assert_eq!(t.bin_for(100), t.bins() - 1);
        assert!(t.is_escape(0));
        assert!(t.is_escape(t.bins() - 1));
        let b = t.bin_for(2);
        assert_eq!(t.symbol_for(b), 2);
    }

    #[test]
    fn lookup_inverts_cum() {
        let t = build_gaussian_cdf(-3.7, 4.2).unwrap();
        for bin in 0..t.bins() {
            assert_eq!(t.lookup(t.cum(bin)), bin);
            assert_eq!(t.lookup(t.cdf[bin + 1] - 1), bin);
        }
    }

    #[test]
    fn byte_table_uniform() {
        let t = byte_table();
        assert_eq!(t.bins(), 256);
        for b in 0..256 {
            assert_eq!(t.freq(b), 256);
        }
    }

    #[test]
    fn factorized_table_sane() {
        let prior = FactorizedPrior::standard(2);
        let t = build_factorized_cdf(&prior, 0).unwrap();
        assert_eq!(*t.cdf.last().unwrap(), PROB_TOTAL);
        let center = t.freq(t.bin_for(0));
        assert!(center > 10_000, "{center}"); // logistic(0,1) center mass ~24%
    }
}
