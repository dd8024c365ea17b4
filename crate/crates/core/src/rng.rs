//! Counter-addressed Gaussian streams.
//!
//! Each path owns one ChaCha8 stream selected by its index; draw `k` of that
//! stream sits at a fixed keystream position. A normal variate is therefore a
//! pure function of `(seed, domain, path, k)`, which is what makes batches
//! independent of the number of workers or how paths were partitioned.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Domain tag for Black-Scholes path increments.
pub const BS_DOMAIN: u64 = 0;
/// Domain tag for the full stochastic-volatility simulator.
pub const FULL_MODEL_DOMAIN: u64 = 0x4655_4c4c_4d4f_444c; // "FULLMODL"

/// Source of independent standard normal streams, one per path.
pub trait NormalSource: Sync {
    /// Fills `out` with the first `out.len()` draws of stream `stream`.
    fn fill(&self, stream: u64, out: &mut [f64]);
}

/// ChaCha8-backed source keyed by a 64-bit seed and a domain tag.
#[derive(Debug, Clone)]
pub struct CounterNormals {
    key: [u8; 32],
}

impl CounterNormals {
    pub fn new(seed: u64, domain: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        Self { key }
    }

    fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng
    }

    /// Draw `index` of stream `stream`, computed without generating the
    /// preceding draws.
    pub fn normal_at(&self, stream: u64, index: u64) -> f64 {
        let mut rng = self.stream_rng(stream);
        // one u64 per draw = two 32-bit keystream words
        rng.set_word_pos(2 * u128::from(index));
        normal_from_bits(rng.next_u64())
    }
}

impl NormalSource for CounterNormals {
    fn fill(&self, stream: u64, out: &mut [f64]) {
        let mut rng = self.stream_rng(stream);
        for z in out.iter_mut() {
            *z = normal_from_bits(rng.next_u64());
        }
    }
}

/// Source that yields only zeros; drives the deterministic-drift path.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNormals;

impl NormalSource for ZeroNormals {
    fn fill(&self, _stream: u64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

const HALF: u64 = 1 << 52;
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Maps 64 random bits to a standard normal by inverting the CDF at the
/// midpoint of one of 2^53 equal-probability cells. The upper half is
/// handled by symmetry so both tails keep full resolution.
#[inline]
pub fn normal_from_bits(bits: u64) -> f64 {
    let k = bits >> 11;
    if k < HALF {
        inverse_normal_cdf((k as f64 + 0.5) * INV_2_53)
    } else {
        -inverse_normal_cdf(((2 * HALF - 1 - k) as f64 + 0.5) * INV_2_53)
    }
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16 on (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_3e-2)
            * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4)
            * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5)
            * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference quantiles from scipy.special.ndtri.
    const QUANTILES: &[(f64, f64)] = &[
        (1e-300, -37.0470962993612),
        (1e-20, -9.262340089798409),
        (1e-10, -6.361340902404056),
        (0.001, -3.090232306167813),
        (0.02425, -1.972961051311885),
        (0.1, -1.2815515655446004),
        (0.3, -0.5244005127080409),
        (0.5, 0.0),
        (0.6, 0.2533471031357997),
        (0.75, 0.6744897501960817),
        (0.9, 1.2815515655446004),
        (0.975, 1.959963984540054),
        (0.999, 3.090232306167813),
        (0.999999999999, 7.0344869100478356),
    ];

    #[test]
    fn quantiles_match_reference() {
        for &(p, z) in QUANTILES {
            let got = inverse_normal_cdf(p);
            let tol = 4e-15 * z.abs().max(1e-300);
            // 1 - 1e-12 is itself rounded, so its tail is only good to ~1e-4 relative
            let tol = if p > 0.9999 { 1e-10 * z.abs() } else { tol };
            assert!((got - z).abs() <= tol, "p={p}: {got} vs {z}");
        }
    }

    #[test]
    fn quantile_is_antisymmetric() {
        for &p in &[2f64.powi(-40), 2f64.powi(-7), 0.125, 0.25, 0.375] {
            assert_eq!(inverse_normal_cdf(p), -inverse_normal_cdf(1.0 - p));
        }
    }

    #[test]
    fn bits_map_is_monotone_at_the_seam() {
        let below = normal_from_bits((HALF - 1) << 11);
        let above = normal_from_bits(HALF << 11);
        assert!(below < 0.0 && above > 0.0);
        assert_eq!(below, -above);
        assert!(normal_from_bits(0).is_finite());
        assert!(normal_from_bits(u64::MAX).is_finite());
        assert_eq!(normal_from_bits(0), -normal_from_bits(u64::MAX));
    }

    #[test]
    fn random_access_matches_sequential_fill() {
        let src = CounterNormals::new(42, BS_DOMAIN);
        let mut seq = vec![0.0; 64];
        src.fill(7, &mut seq);
        for (k, &z) in seq.iter().enumerate() {
            assert_eq!(src.normal_at(7, k as u64).to_bits(), z.to_bits());
        }
    }

    #[test]
    fn streams_and_domains_differ() {
        let a = CounterNormals::new(1, BS_DOMAIN);
        let b = CounterNormals::new(1, FULL_MODEL_DOMAIN);
        assert_ne!(a.normal_at(0, 0), a.normal_at(1, 0));
        assert_ne!(a.normal_at(0, 0), b.normal_at(0, 0));
    }

    #[test]
    fn zero_source_fills_zeros() {
        let mut out = vec![1.0; 5];
        ZeroNormals.fill(3, &mut out);
        assert!(out.iter().all(|&z| z == 0.0));
    }
}
