//! Branch-free `exp`/`expm1` for elementwise kernels, plus a dispatcher that
//! compiles a loop for the widest vector unit present.
//!
//! The scalar code uses no fused multiply-add and LLVM does not contract on
//! its own, so every dispatch target yields bit-identical results.

use std::sync::OnceLock;

const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5·2^52: adding it rounds to an integer
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const INV_LN2: f64 = std::f64::consts::LOG2_E;
/// Below this `exp` would be subnormal; inputs are clamped here.
const EXP_FLOOR: f64 = -708.0;

/// `(exp(x), expm1(x))` for `x ≤ 0`, `exp` within 2 ulp, `expm1` within 4.
///
/// `x = n·ln2 + r` with `|r| ≤ ln2/2`; `e^r − 1` is a degree-12 Taylor
/// polynomial in `r` (truncation below 1e-17 on that interval), so `expm1`
/// keeps full relative precision when `n = 0`.
#[inline(always)]
pub(crate) fn exp_expm1(x: f64) -> (f64, f64) {
    let x = x.max(EXP_FLOOR);
    let t = x * INV_LN2 + MAGIC;
    let n = t - MAGIC;
    let ni = (t.to_bits() as i64).wrapping_sub(MAGIC.to_bits() as i64);
    let r = (x - n * LN2_HI) - n * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    let em1_r = p * r;
    let scale = f64::from_bits(((ni + 1023) as u64) << 52);
    let e = scale * (1.0 + em1_r);
    let m = if ni == 0 { em1_r } else { e - 1.0 };
    (e, m)
}

#[derive(Clone, Copy)]
enum Level {
    Baseline,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512dq") {
                return Level::Avx512;
            }
            if is_x86_feature_detected!("avx2") {
                return Level::Avx2;
            }
        }
        Level::Baseline
    })
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq")]
unsafe fn run_avx512<F: FnOnce()>(f: F) {
    f()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn run_avx2<F: FnOnce()>(f: F) {
    f()
}

/// Runs `f`, compiled for the best available vector unit. `f` must be an
/// `#[inline(always)]` closure, or LLVM may keep it out of line and compile
/// it for the baseline target.
#[inline(always)]
pub(crate) fn vectorized<F: FnOnce()>(f: F) {
    match level() {
        Level::Baseline => f(),
        // SAFETY: the features were detected at runtime.
        #[cfg(target_arch = "x86_64")]
        Level::Avx2 => unsafe { run_avx2(f) },
        #[cfg(target_arch = "x86_64")]
        Level::Avx512 => unsafe { run_avx512(f) },
    }
}
