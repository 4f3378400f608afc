//! Deterministic counter-based random streams.
//!
//! Simulation replications, bootstrap resamples, and unit-level draws all
//! read from stateless keyed streams: the value at a counter position is a
//! pure function of `(key, counter)`, so results do not depend on execution
//! order or thread scheduling. Keys are derived with the splitmix64
//! finalizer, a stable, documented hash.
//!
//! Normal variates come from the inverse CDF (Wichura's AS 241 `PPND16`
//! rational approximation, accurate to about 1 ulp) applied to a uniform in
//! the open interval (0, 1).

const DERIVE_MULTIPLIER: u64 = 0xD1B5_4A32_D192_ED03;
const VALUE_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output function: add the golden-gamma constant, then
/// finalize with xor-shift multiplications.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed counter stream. Values are `splitmix64(key ^ counter * c)`;
/// sub-streams are derived by hashing the parent key with the child index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: splitmix64(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Derives an independent child stream for `index` (for example one
    /// stream per replication or per bootstrap resample).
    pub fn derive(&self, index: u64) -> CounterRng {
        CounterRng {
            key: splitmix64(self.key ^ index.wrapping_mul(DERIVE_MULTIPLIER)),
        }
    }

    /// The raw 64-bit value at `counter`.
    pub fn value(&self, counter: u64) -> u64 {
        splitmix64(self.key ^ counter.wrapping_mul(VALUE_MULTIPLIER))
    }

    /// A uniform draw strictly inside (0, 1), on the 2^-53 lattice offset by
    /// half a step so that 0 and 1 are never produced.
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.value(counter) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// A standard normal draw via the inverse CDF.
    pub fn normal(&self, counter: u64) -> f64 {
        standard_normal_quantile(self.uniform(counter))
    }

    /// A uniform index in `0..n` via the 128-bit multiply-shift reduction.
    pub fn index(&self, counter: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.value(counter) as u128 * n as u128) >> 64) as usize
    }
}

/// The standard normal quantile function Phi^-1(p) (AS 241, `PPND16`).
///
/// Returns negative/positive infinity at p <= 0 / p >= 1 and NaN for NaN.
#[allow(clippy::excessive_precision)] // coefficients transcribed verbatim
pub fn standard_normal_quantile(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn horner(coeffs: &[f64; 8], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}
