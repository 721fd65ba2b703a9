//! Floating-point abstraction so the training and composition math can run in
//! f32 (production models) or f64 (gradient checks, oracles) without duplication.

use std::fmt;
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distributions::uniform::SampleUniform;

/// Scalar type the embedding math is generic over.
///
/// The atomic half of the trait backs lock-free parameter sharing during
/// multi-worker training: loads and stores are relaxed, element-level races
/// are accepted by the training contract.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    type Atomic: Send + Sync;

    fn atomic_new(v: Self) -> Self::Atomic;
    fn atomic_get(a: &Self::Atomic) -> Self;
    fn atomic_set(a: &Self::Atomic, v: Self);

    /// f64 bridging under a distinct name (`FromPrimitive` already claims
    /// `from_f64`).
    fn of(v: f64) -> Self {
        Self::from(v).expect("f64 conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {
    type Atomic = AtomicU32;

    fn atomic_new(v: Self) -> AtomicU32 {
        AtomicU32::new(v.to_bits())
    }

    fn atomic_get(a: &AtomicU32) -> Self {
        f32::from_bits(a.load(Ordering::Relaxed))
    }

    fn atomic_set(a: &AtomicU32, v: Self) {
        a.store(v.to_bits(), Ordering::Relaxed);
    }
}

impl Scalar for f64 {
    type Atomic = AtomicU64;

    fn atomic_new(v: Self) -> AtomicU64 {
        AtomicU64::new(v.to_bits())
    }

    fn atomic_get(a: &AtomicU64) -> Self {
        f64::from_bits(a.load(Ordering::Relaxed))
    }

    fn atomic_set(a: &AtomicU64, v: Self) {
        a.store(v.to_bits(), Ordering::Relaxed);
    }
}

/// Dot product of two equal-length vectors.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Cosine similarity with the zero-vector convention: if either vector has
/// zero norm the cosine is defined as 0.
#[inline]
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let na = norm(a);
    let nb = norm(b);
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    dot(a, b) / (na * nb)
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}
