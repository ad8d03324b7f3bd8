//! Primitive activation units and the layout arithmetic that fixes layer widths.
//!
//! A layer's nonlinearity block is an ordered list of `(kind, count)` entries.
//! Unary units consume one pre-activation each; binary units consume two
//! consecutive pre-activations. Units are laid out in entry order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EqlError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuncKind {
    Constant,
    Identity,
    Square,
    Sine,
    Cosine,
    Sigmoid,
    Product,
}

impl FuncKind {
    pub const ALL: [FuncKind; 7] = [
        FuncKind::Constant,
        FuncKind::Identity,
        FuncKind::Square,
        FuncKind::Sine,
        FuncKind::Cosine,
        FuncKind::Sigmoid,
        FuncKind::Product,
    ];

    pub fn is_binary(self) -> bool {
        matches!(self, FuncKind::Product)
    }

    /// Number of pre-activation entries one unit of this kind consumes.
    pub fn arity(self) -> usize {
        if self.is_binary() {
            2
        } else {
            1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FuncKind::Constant => "constant",
            FuncKind::Identity => "identity",
            FuncKind::Square => "square",
            FuncKind::Sine => "sine",
            FuncKind::Cosine => "cosine",
            FuncKind::Sigmoid => "sigmoid",
            FuncKind::Product => "product",
        }
    }
}

impl fmt::Display for FuncKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FuncKind {
    type Err = EqlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FuncKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EqlError::Config(format!("unknown activation kind `{s}`")))
    }
}

/// Value and derivative of a unary unit at `z`.
pub fn apply_unary<T: Scalar>(kind: FuncKind, z: T) -> Result<(T, T), EqlError> {
    match kind {
        FuncKind::Product => Err(EqlError::Contract(format!(
            "`{kind}` is binary; apply_unary needs a unary kind"
        ))),
        _ => Ok(unary_unchecked(kind, z)),
    }
}

/// Value and partial derivatives of a binary unit at `(z1, z2)`.
pub fn apply_binary<T: Scalar>(kind: FuncKind, z1: T, z2: T) -> Result<(T, T, T), EqlError> {
    match kind {
        FuncKind::Product => Ok((z1 * z2, z2, z1)),
        _ => Err(EqlError::Contract(format!(
            "`{kind}` is unary; apply_binary needs a binary kind"
        ))),
    }
}

#[inline]
pub(crate) fn unary_unchecked<T: Scalar>(kind: FuncKind, z: T) -> (T, T) {
    match kind {
        FuncKind::Constant => (T::one(), T::zero()),
        FuncKind::Identity => (z, T::one()),
        FuncKind::Square => (z * z, (T::one() + T::one()) * z),
        FuncKind::Sine => (z.sin(), z.cos()),
        FuncKind::Cosine => (z.cos(), -z.sin()),
        FuncKind::Sigmoid => {
            let s = sigmoid(z);
            (s, s * (T::one() - s))
        }
        FuncKind::Product => unreachable!("binary kind in unary path"),
    }
}

/// Logistic function, evaluated without overflow for large |z|.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub kind: FuncKind,
    pub count: usize,
}

/// Ordered activation units of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayoutEntry>", into = "Vec<LayoutEntry>")]
pub struct FuncLayout {
    entries: Vec<LayoutEntry>,
}

impl FuncLayout {
    pub fn new(entries: Vec<(FuncKind, usize)>) -> Result<Self, EqlError> {
        Self::try_from(
            entries
                .into_iter()
                .map(|(kind, count)| LayoutEntry { kind, count })
                .collect::<Vec<_>>(),
        )
    }

    /// constant×2, identity×4, square×4, sine×2, sigmoid×2, product×2.
    ///
    /// On 80 inputs with two layers and a scalar head this gives 1744 weights.
    pub fn default_layout() -> Self {
        Self::new(vec![
            (FuncKind::Constant, 2),
            (FuncKind::Identity, 4),
            (FuncKind::Square, 4),
            (FuncKind::Sine, 2),
            (FuncKind::Sigmoid, 2),
            (FuncKind::Product, 2),
        ])
        .expect("default layout is valid")
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Width of the pre-activation vector `g`.
    pub fn g_dim(&self) -> usize {
        self.entries.iter().map(|e| e.count * e.kind.arity()).sum()
    }

    /// Width of the post-activation vector `h`.
    pub fn h_dim(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// One slot per unit: `(kind, first g index)`, in layout order.
    pub fn units(&self) -> Vec<(FuncKind, usize)> {
        let mut out = Vec::with_capacity(self.h_dim());
        let mut g = 0;
        for e in &self.entries {
            for _ in 0..e.count {
                out.push((e.kind, g));
                g += e.kind.arity();
            }
        }
        out
    }

    pub fn contains(&self, kind: FuncKind) -> bool {
        self.entries.iter().any(|e| e.kind == kind)
    }
}

impl Default for FuncLayout {
    fn default() -> Self {
        Self::default_layout()
    }
}

impl TryFrom<Vec<LayoutEntry>> for FuncLayout {
    type Error = EqlError;

    fn try_from(entries: Vec<LayoutEntry>) -> Result<Self, Self::Error> {
        if entries.is_empty() {
            return Err(EqlError::Config("layout has no entries".into()));
        }
        if let Some(e) = entries.iter().find(|e| e.count == 0) {
            return Err(EqlError::Config(format!(
                "layout entry `{}` has count 0",
                e.kind
            )));
        }
        Ok(FuncLayout { entries })
    }
}

impl From<FuncLayout> for Vec<LayoutEntry> {
    fn from(l: FuncLayout) -> Self {
        l.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_layout_dims() {
        let l = FuncLayout::default_layout();
        assert_eq!(l.g_dim(), 18);
        assert_eq!(l.h_dim(), 16);
        assert!(!l.contains(FuncKind::Cosine));
        // bias-free, two layers, scalar head on 80 inputs
        assert_eq!(80 * l.g_dim() + l.h_dim() * l.g_dim() + l.h_dim(), 1744);
    }

    #[test]
    fn small_layout_dims() {
        let l = FuncLayout::new(vec![(FuncKind::Sine, 1)]).unwrap();
        assert_eq!((l.g_dim(), l.h_dim()), (1, 1));
        let l = FuncLayout::new(vec![(FuncKind::Product, 3)]).unwrap();
        assert_eq!((l.g_dim(), l.h_dim()), (6, 3));
    }

    #[test]
    fn empty_or_zero_count_rejected() {
        assert!(FuncLayout::new(vec![]).is_err());
        assert!(FuncLayout::new(vec![(FuncKind::Sine, 0)]).is_err());
    }

    #[test]
    fn unary_examples() {
        assert_eq!(apply_unary(FuncKind::Square, 3.0).unwrap(), (9.0, 6.0));
        assert_eq!(apply_unary(FuncKind::Sigmoid, 0.0).unwrap(), (0.5, 0.25));
        assert_eq!(apply_unary(FuncKind::Constant, 7.3).unwrap(), (1.0, 0.0));
        assert_eq!(apply_unary(FuncKind::Sine, 0.0).unwrap(), (0.0, 1.0));
        assert!(matches!(
            apply_unary(FuncKind::Product, 1.0),
            Err(EqlError::Contract(_))
        ));
    }

    #[test]
    fn binary_examples() {
        assert_eq!(apply_binary(FuncKind::Product, 2.0, 3.0).unwrap(), (6.0, 3.0, 2.0));
        assert_eq!(apply_binary(FuncKind::Product, 4.5, 0.0).unwrap(), (0.0, 0.0, 4.5));
        assert_eq!(
            apply_binary(FuncKind::Product, -1.0, -1.0).unwrap(),
            (1.0, -1.0, -1.0)
        );
        assert!(apply_binary(FuncKind::Sine, 1.0, 2.0).is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for kind in FuncKind::ALL.into_iter().filter(|k| !k.is_binary()) {
            for _ in 0..1000 {
                let z: f64 = rng.gen_range(-5.0..5.0);
                let (_, d) = apply_unary(kind, z).unwrap();
                let fp = apply_unary(kind, z + h).unwrap().0;
                let fm = apply_unary(kind, z - h).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                if d.abs() < 1e-3 {
                    assert!((d - fd).abs() < 1e-8, "{kind} at {z}: {d} vs {fd}");
                } else {
                    assert!(((d - fd) / d).abs() < 1e-6, "{kind} at {z}: {d} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0f64), 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!(sigmoid(-30.0f32) > 0.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in FuncKind::ALL {
            assert_eq!(k.name().parse::<FuncKind>().unwrap(), k);
        }
        assert!("exp".parse::<FuncKind>().is_err());
    }

    fn arb_kind() -> impl Strategy<Value = FuncKind> {
        (0..FuncKind::ALL.len()).prop_map(|i| FuncKind::ALL[i])
    }

    proptest! {
        #[test]
        fn layout_dims_formula(entries in prop::collection::vec((arb_kind(), 1usize..6), 1..8)) {
            let l = FuncLayout::new(entries.clone()).unwrap();
            let unary: usize = entries.iter().filter(|(k, _)| !k.is_binary()).map(|(_, c)| c).sum();
            let binary: usize = entries.iter().filter(|(k, _)| k.is_binary()).map(|(_, c)| c).sum();
            prop_assert_eq!(l.g_dim(), unary + 2 * binary);
            prop_assert_eq!(l.h_dim(), unary + binary);
            if binary > 0 {
                prop_assert!(l.g_dim() > l.h_dim());
            }
            prop_assert_eq!(l.units().len(), l.h_dim());
        }

        #[test]
        fn unary_is_pure(z in -10.0f64..10.0, k in arb_kind()) {
            prop_assume!(!k.is_binary());
            let a = apply_unary(k, z).unwrap();
            let b = apply_unary(k, z).unwrap();
            prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
            prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
}
